use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Cat(String),
}

impl std::fmt::Display for ParamValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Real(v) => write!(f, "{v}"),
            ParamValue::Cat(v) => f.write_str(v),
        }
    }
}

/// One point in a hyperparameter space, keyed by dimension name.
pub type Configuration = BTreeMap<String, ParamValue>;

/// Typed accessors with defaults, used by the model factories.
pub trait ConfigExt {
    fn real(&self, name: &str, default: f64) -> Result<f64>;
    fn int(&self, name: &str, default: i64) -> Result<i64>;
    fn count(&self, name: &str, default: usize) -> Result<usize> {
        let v = self.int(name, default as i64)?;
        usize::try_from(v).map_err(|_| Error::invalid(format!("{name} must be non-negative, got {v}")))
    }
}

impl ConfigExt for Configuration {
    fn real(&self, name: &str, default: f64) -> Result<f64> {
        match self.get(name) {
            None => Ok(default),
            Some(ParamValue::Real(v)) => Ok(*v),
            Some(ParamValue::Int(v)) => Ok(*v as f64),
            Some(other) => Err(Error::invalid(format!("{name}: expected a number, got {other}"))),
        }
    }

    fn int(&self, name: &str, default: i64) -> Result<i64> {
        match self.get(name) {
            None => Ok(default),
            Some(ParamValue::Int(v)) => Ok(*v),
            Some(ParamValue::Real(v)) if v.fract() == 0.0 => Ok(*v as i64),
            Some(other) => Err(Error::invalid(format!("{name}: expected an integer, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Dimension {
    Real {
        low: f64,
        high: f64,
        #[serde(default)]
        log: bool,
    },
    Integer {
        low: i64,
        high: i64,
        #[serde(default)]
        log: bool,
    },
    Categorical {
        choices: Vec<String>,
    },
}

impl Dimension {
    pub fn real(low: f64, high: f64) -> Self {
        Dimension::Real { low, high, log: false }
    }

    pub fn log_real(low: f64, high: f64) -> Self {
        Dimension::Real { low, high, log: true }
    }

    pub fn integer(low: i64, high: i64) -> Self {
        Dimension::Integer { low, high, log: false }
    }

    pub fn log_integer(low: i64, high: i64) -> Self {
        Dimension::Integer { low, high, log: true }
    }

    fn width(&self) -> usize {
        match self {
            Dimension::Categorical { choices } => choices.len(),
            _ => 1,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let bad = |why: &str| Err(Error::invalid(format!("dimension {name}: {why}")));
        match *self {
            Dimension::Real { low, high, log } => {
                if !(low.is_finite() && high.is_finite()) || low > high {
                    return bad("bounds must be finite and ordered");
                }
                if log && low <= 0.0 {
                    return bad("log-uniform bounds must be strictly positive");
                }
            }
            Dimension::Integer { low, high, log } => {
                if low > high {
                    return bad("bounds must be ordered");
                }
                if log && low <= 0 {
                    return bad("log-uniform bounds must be strictly positive");
                }
            }
            Dimension::Categorical { ref choices } => {
                if choices.is_empty() {
                    return bad("no choices");
                }
            }
        }
        Ok(())
    }

    /// Maps a value in the dimension to `[0, 1]` (on the log scale if requested).
    fn to_unit(low: f64, high: f64, log: bool, v: f64) -> f64 {
        if high == low {
            return 0.5;
        }
        let u = if log {
            (v.ln() - low.ln()) / (high.ln() - low.ln())
        } else {
            (v - low) / (high - low)
        };
        u.clamp(0.0, 1.0)
    }

    fn from_unit(low: f64, high: f64, log: bool, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        if log {
            (low.ln() + u * (high.ln() - low.ln())).exp().clamp(low, high)
        } else {
            (low + u * (high - low)).clamp(low, high)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HyperparameterSpace {
    dims: BTreeMap<String, Dimension>,
}

impl HyperparameterSpace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, dim: Dimension) -> Self {
        self.dims.insert(name.to_string(), dim);
        self
    }

    pub fn dims(&self) -> impl Iterator<Item = (&str, &Dimension)> {
        self.dims.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.iter().try_for_each(|(n, d)| d.validate(n))
    }

    /// Number of coordinates in the unit-hypercube encoding.
    pub fn encoded_len(&self) -> usize {
        self.dims.values().map(Dimension::width).sum()
    }

    pub fn sample(&self, rng: &mut Rng) -> Configuration {
        let mut config = Configuration::new();
        for (name, dim) in &self.dims {
            let value = match *dim {
                Dimension::Real { low, high, log } => {
                    ParamValue::Real(Dimension::from_unit(low, high, log, rng.random::<f64>()))
                }
                Dimension::Integer { low, high, log } => {
                    if log {
                        let (lo, hi) = (low as f64 - 0.5, high as f64 + 0.5);
                        let v = Dimension::from_unit(lo.max(0.5), hi, true, rng.random::<f64>());
                        ParamValue::Int((v.round() as i64).clamp(low, high))
                    } else {
                        ParamValue::Int(rng.random_range(low..=high))
                    }
                }
                Dimension::Categorical { ref choices } => {
                    ParamValue::Cat(choices[rng.random_range(0..choices.len())].clone())
                }
            };
            config.insert(name.clone(), value);
        }
        config
    }

    pub fn encode(&self, config: &Configuration) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.encoded_len());
        for (name, dim) in &self.dims {
            let value = config
                .get(name)
                .ok_or_else(|| Error::invalid(format!("configuration lacks {name}")))?;
            match (dim, value) {
                (Dimension::Real { low, high, log }, v) => {
                    let x = match v {
                        ParamValue::Real(x) => *x,
                        ParamValue::Int(x) => *x as f64,
                        ParamValue::Cat(_) => return Err(Error::invalid(format!("{name}: expected number"))),
                    };
                    out.push(Dimension::to_unit(*low, *high, *log, x));
                }
                (Dimension::Integer { low, high, log }, ParamValue::Int(x)) => {
                    out.push(Dimension::to_unit(*low as f64, *high as f64, *log, *x as f64));
                }
                (Dimension::Categorical { choices }, ParamValue::Cat(c)) => {
                    let idx = choices
                        .iter()
                        .position(|s| s == c)
                        .ok_or_else(|| Error::invalid(format!("{name}: {c:?} is not a declared choice")))?;
                    out.extend((0..choices.len()).map(|i| if i == idx { 1.0 } else { 0.0 }));
                }
                _ => return Err(Error::invalid(format!("{name}: value {value} does not fit {dim:?}"))),
            }
        }
        Ok(out)
    }

    /// Inverse of [`encode`](Self::encode); coordinates are clamped to `[0, 1]`
    /// so every decoded configuration lies inside the declared bounds.
    pub fn decode(&self, unit: &[f64]) -> Configuration {
        let mut config = Configuration::new();
        let mut at = 0;
        for (name, dim) in &self.dims {
            let value = match *dim {
                Dimension::Real { low, high, log } => ParamValue::Real(Dimension::from_unit(low, high, log, unit[at])),
                Dimension::Integer { low, high, log } => {
                    let v = Dimension::from_unit(low as f64, high as f64, log, unit[at]);
                    ParamValue::Int((v.round() as i64).clamp(low, high))
                }
                Dimension::Categorical { ref choices } => {
                    let block = &unit[at..at + choices.len()];
                    let best = block
                        .iter()
                        .enumerate()
                        .fold(0, |b, (i, &v)| if v > block[b] { i } else { b });
                    ParamValue::Cat(choices[best].clone())
                }
            };
            at += dim.width();
            config.insert(name.clone(), value);
        }
        config
    }

    pub fn contains(&self, config: &Configuration) -> bool {
        self.dims.iter().all(|(name, dim)| match (dim, config.get(name)) {
            (Dimension::Real { low, high, .. }, Some(ParamValue::Real(v))) => *low <= *v && *v <= *high,
            (Dimension::Integer { low, high, .. }, Some(ParamValue::Int(v))) => *low <= *v && *v <= *high,
            (Dimension::Categorical { choices }, Some(ParamValue::Cat(c))) => choices.contains(c),
            _ => false,
        })
    }
}
