//! Normality tests, paired t and Wilcoxon signed-rank tests, and the
//! normality-gated choice between them.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Standard normal CDF through the C-library `erfc`, which is accurate to
/// well below 1e-15 where statrs' series drifts by a few 1e-12.
fn phi(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with the `n - 1` denominator.
fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

fn check_sample(x: &[f64], min_n: usize) -> Result<()> {
    if x.len() < min_n {
        return Err(Error::invalid(format!("need at least {min_n} observations, got {}", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("sample contains non-finite values"));
    }
    Ok(())
}

/// `c[0] + c[1] x + ... + c[len-1] x^(len-1)`.
fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * x + v)
}

/// Shapiro-Wilk W with Royston's normalizing approximation for the p-value
/// (valid for `3 <= n <= 5000`).
pub fn shapiro_wilk(sample: &[f64]) -> Result<TestResult> {
    check_sample(sample, 3)?;
    let n = sample.len();
    if n > 5000 {
        return Err(Error::invalid(format!("Shapiro-Wilk supports n <= 5000, got {n}")));
    }
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let range = x[n - 1] - x[0];
    if range < 1e-19 {
        return Err(Error::NotApplicable("zero variance sample".into()));
    }

    const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
    const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
    let half = n / 2;
    let an = n as f64;
    let mut a = vec![0.0; half];
    if n == 3 {
        a[0] = std::f64::consts::FRAC_1_SQRT_2;
    } else {
        let norm = std_normal();
        let m: Vec<f64> = (1..=half).map(|i| norm.inverse_cdf((i as f64 - 0.375) / (an + 0.25))).collect();
        let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
        let ssumm2 = summ2.sqrt();
        let rsn = 1.0 / an.sqrt();
        let a1 = poly(&C1, rsn) - m[0] / ssumm2;
        let (first, fac) = if n > 5 {
            let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
            a[1] = a2;
            let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2)).sqrt();
            (2, fac)
        } else {
            (1, ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt())
        };
        a[0] = a1;
        for i in first..half {
            a[i] = -m[i] / fac;
        }
    }

    // full antisymmetric coefficient vector against the ascending sample
    let coef: Vec<f64> = (0..n)
        .map(|i| {
            if i < half {
                -a[i]
            } else if n % 2 == 1 && i == half {
                0.0
            } else {
                a[n - 1 - i]
            }
        })
        .collect();
    let xs: Vec<f64> = x.iter().map(|v| v / range).collect();
    let (ma, mx) = (mean(&coef), mean(&xs));
    let ssa: f64 = coef.iter().map(|c| (c - ma) * (c - ma)).sum();
    let ssx: f64 = xs.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sax: f64 = coef.iter().zip(&xs).map(|(c, v)| (c - ma) * (v - mx)).sum();
    let root = (ssa * ssx).sqrt();
    let w = 1.0 - (root - sax) * (root + sax) / (ssa * ssx);

    if n == 3 {
        const PI6: f64 = 6.0 / std::f64::consts::PI;
        const STQR: f64 = std::f64::consts::FRAC_PI_3;
        let p = (PI6 * (w.sqrt().asin() - STQR)).max(0.0);
        return Ok(TestResult {
            statistic: w,
            p_value: p.min(1.0),
        });
    }
    let mut y = (1.0 - w).ln();
    let (mu, sigma) = if n <= 11 {
        let gamma = poly(&[-2.273, 0.459], an);
        if y >= gamma {
            return Ok(TestResult {
                statistic: w,
                p_value: 1e-99,
            });
        }
        y = -(gamma - y).ln();
        (poly(&[0.544, -0.39978, 0.025054, -6.714e-4], an), poly(&[1.3822, -0.77857, 0.062767, -0.0020322], an).exp())
    } else {
        let ln_n = an.ln();
        (poly(&[-1.5861, -0.31082, -0.083751, 0.0038915], ln_n), poly(&[-0.4803, -0.082676, 0.0030302], ln_n).exp())
    };
    let p = phi(-(y - mu) / sigma);
    Ok(TestResult {
        statistic: w,
        p_value: p,
    })
}

/// Kolmogorov-Smirnov distance to the normal with estimated mean and
/// variance, with the Lilliefors p-value (Dallal-Wilkinson approximation,
/// extended above 0.1 by the usual piecewise polynomial).
pub fn ks_normality(sample: &[f64]) -> Result<TestResult> {
    check_sample(sample, 3)?;
    let n = sample.len();
    let sd = variance(sample).sqrt();
    if sd == 0.0 || !sd.is_finite() {
        return Err(Error::NotApplicable("zero variance sample".into()));
    }
    let m = mean(sample);
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, v) in x.iter().enumerate() {
        let f = phi((v - m) / sd);
        d = d.max((i + 1) as f64 / nf - f).max(f - i as f64 / nf);
    }
    Ok(TestResult {
        statistic: d,
        p_value: lilliefors_p(d, n),
    })
}

fn lilliefors_p(d: f64, n: usize) -> f64 {
    let nf = n as f64;
    let (kd, nd) = if n <= 100 { (d, nf) } else { (d * (nf / 100.0).powf(0.49), 100.0) };
    let p = (-7.01256 * kd * kd * (nd + 2.78019) + 2.99587 * kd * (nd + 2.78019).sqrt() - 0.122119
        + 0.974598 / nd.sqrt()
        + 1.67997 / nd)
        .exp();
    if p <= 0.1 {
        return p;
    }
    let kk = (nf.sqrt() - 0.01 + 0.85 / nf.sqrt()) * d;
    let p = if kk <= 0.302 {
        1.0
    } else if kk <= 0.5 {
        poly(&[2.76773, -19.828315, 80.709644, -138.55152, 81.218052], kk)
    } else if kk <= 0.9 {
        poly(&[-4.901232, 40.662806, -97.490286, 94.029866, -32.355711], kk)
    } else if kk <= 1.31 {
        poly(&[6.198765, -19.558097, 23.186922, -12.234627, 2.423045], kk)
    } else {
        0.0
    };
    p.clamp(0.0, 1.0)
}

/// Two equal-length samples measured on the same units (runs, users).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSamples {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub labels: (String, String),
}

impl PairedSamples {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        Self::labelled(x, y, "x", "y")
    }

    pub fn labelled(x: Vec<f64>, y: Vec<f64>, x_label: &str, y_label: &str) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                actual: y.len(),
            });
        }
        if x.len() < 3 {
            return Err(Error::invalid(format!("paired samples need n >= 3, got {}", x.len())));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::invalid("paired samples contain non-finite values"));
        }
        Ok(Self {
            x,
            y,
            labels: (x_label.to_string(), y_label.to_string()),
        })
    }

    /// `x - y` elementwise.
    pub fn differences(&self) -> Vec<f64> {
        self.x.iter().zip(&self.y).map(|(a, b)| a - b).collect()
    }

    pub fn swapped(&self) -> Self {
        Self {
            x: self.y.clone(),
            y: self.x.clone(),
            labels: (self.labels.1.clone(), self.labels.0.clone()),
        }
    }
}

/// Two-sided paired t-test on `x - y`.
pub fn paired_t_test(samples: &PairedSamples) -> Result<TestResult> {
    let d = samples.differences();
    let var = variance(&d);
    if !(var > 0.0) {
        return Err(Error::NotApplicable("differences have zero variance".into()));
    }
    let n = d.len() as f64;
    let t = mean(&d) / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("positive degrees of freedom");
    Ok(TestResult {
        statistic: t,
        p_value: (2.0 * dist.sf(t.abs())).min(1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMethod {
    /// Exact for at most [`WILCOXON_EXACT_MAX`] non-zero differences.
    #[default]
    Auto,
    Exact,
    /// Normal approximation with tie and continuity correction.
    Approximate,
}

pub const WILCOXON_EXACT_MAX: usize = 25;

/// Average ranks (1-based) of `v`, ties sharing the mean of their positions.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && v[order[end + 1]] == v[order[start]] {
            end += 1;
        }
        let r = (start + end) as f64 / 2.0 + 1.0;
        for &idx in &order[start..=end] {
            ranks[idx] = r;
        }
        start = end + 1;
    }
    ranks
}

/// Wilcoxon signed-rank test on `x - y` (zero differences dropped). The
/// statistic is `min(W+, W-)`; the p-value is two-sided.
pub fn wilcoxon_signed_rank(samples: &PairedSamples) -> Result<TestResult> {
    wilcoxon_signed_rank_with(samples, WilcoxonMethod::Auto)
}

pub fn wilcoxon_signed_rank_with(samples: &PairedSamples, method: WilcoxonMethod) -> Result<TestResult> {
    let d: Vec<f64> = samples.differences().into_iter().filter(|&v| v != 0.0).collect();
    if d.is_empty() {
        return Err(Error::NotApplicable("all differences are zero".into()));
    }
    let n = d.len();
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let stat = w_plus.min(total - w_plus);
    let exact = match method {
        WilcoxonMethod::Auto => n <= WILCOXON_EXACT_MAX,
        WilcoxonMethod::Exact => true,
        WilcoxonMethod::Approximate => false,
    };
    let p = if exact {
        exact_lower_tail(&ranks, stat)
    } else {
        let nf = n as f64;
        let mu = nf * (nf + 1.0) / 4.0;
        let mut var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0;
        let mut sorted = abs.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            var -= (t * t * t - t) / 48.0;
            i = j + 1;
        }
        if !(var > 0.0) {
            return Err(Error::NotApplicable("degenerate signed-rank variance".into()));
        }
        let diff = stat - mu;
        let corrected = diff - 0.5 * diff.signum();
        2.0 * phi(-(corrected.abs() / var.sqrt()))
    };
    Ok(TestResult {
        statistic: stat,
        p_value: p.min(1.0),
    })
}

/// `2 P(W+ <= stat)` under the null where every rank carries a random sign.
/// Ranks are doubled so that tied half-integer ranks stay integral; counting
/// subsets by dynamic programming equals enumerating all `2^n` sign vectors.
fn exact_lower_tail(ranks: &[f64], stat: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let limit = (2.0 * stat).round() as usize;
    let below: f64 = counts[..=limit.min(total)].iter().sum();
    2.0 * below / 2f64.powi(ranks.len() as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestUsed {
    PairedT,
    Wilcoxon,
    NotApplicable,
}

/// Which test was run on a pair of samples, and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub labels: (String, String),
    pub n: usize,
    pub alpha: f64,
    pub mean_difference: f64,
    pub shapiro_wilk: Option<TestResult>,
    pub kolmogorov_smirnov: Option<TestResult>,
    pub test_used: TestUsed,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub significant: bool,
    pub reason: String,
}

/// Runs both normality tests on the differences; if neither rejects at
/// `alpha` the paired t-test decides, otherwise the Wilcoxon test does.
/// Zero-variance differences yield a `NotApplicable` record.
pub fn significance_pipeline(samples: &PairedSamples, alpha: f64) -> Result<DecisionRecord> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let d = samples.differences();
    let mut record = DecisionRecord {
        labels: samples.labels.clone(),
        n: d.len(),
        alpha,
        mean_difference: mean(&d),
        shapiro_wilk: None,
        kolmogorov_smirnov: None,
        test_used: TestUsed::NotApplicable,
        statistic: None,
        p_value: None,
        significant: false,
        reason: String::new(),
    };
    if !(variance(&d) > 0.0) {
        record.reason = "not applicable: differences have zero variance".into();
        return Ok(record);
    }
    let sw = shapiro_wilk(&d)?;
    let ks = ks_normality(&d)?;
    record.shapiro_wilk = Some(sw);
    record.kolmogorov_smirnov = Some(ks);
    let normal = sw.p_value > alpha && ks.p_value > alpha;
    let outcome = if normal {
        record.test_used = TestUsed::PairedT;
        record.reason = format!(
            "differences look normal (Shapiro-Wilk p = {:.4}, Lilliefors p = {:.4}, both > {alpha}): paired t-test",
            sw.p_value, ks.p_value
        );
        paired_t_test(samples)?
    } else {
        record.test_used = TestUsed::Wilcoxon;
        let which = match (sw.p_value <= alpha, ks.p_value <= alpha) {
            (true, true) => "both normality tests reject",
            (true, false) => "Shapiro-Wilk rejects normality",
            _ => "Lilliefors rejects normality",
        };
        record.reason = format!(
            "{which} (Shapiro-Wilk p = {:.4}, Lilliefors p = {:.4}, alpha = {alpha}): Wilcoxon signed-rank test",
            sw.p_value, ks.p_value
        );
        wilcoxon_signed_rank(samples)?
    };
    record.statistic = Some(outcome.statistic);
    record.p_value = Some(outcome.p_value);
    record.significant = outcome.p_value < alpha;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values come from scipy.stats.shapiro, the nortest Lilliefors
    // formula and scipy.stats.wilcoxon, computed once and frozen here.

    fn blom(n: usize) -> Vec<f64> {
        let norm = std_normal();
        (1..=n).map(|i| norm.inverse_cdf((i as f64 - 0.375) / (n as f64 + 0.25))).collect()
    }

    fn exp_quantiles(n: usize) -> Vec<f64> {
        (1..=n).map(|i| -(1.0 - (i as f64 - 0.5) / n as f64).ln()).collect()
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn shapiro_wilk_reference_values() {
        let cases: [(Vec<f64>, f64, f64); 6] = [
            (blom(20), 0.997179693088336, 0.9999999754926056),
            (exp_quantiles(50), 0.8375865215648726, 7.255412098708938e-06),
            (exp_quantiles(30), 0.8467233698667256, 0.0005298399973178493),
            (
                vec![0.1, 0.5, 1.3, 2.2, 0.7, -0.4, 3.1, 1.9, 0.05, 0.8],
                0.950468356931667,
                0.6740441818820438,
            ),
            (vec![1.0, 2.0, 4.0], 0.9642857142857142, 0.6368868450289689),
            (vec![1.0, 2.5, 2.0, 7.0, 3.0], 0.8436837349487031, 0.1753646713016942),
        ];
        for (x, w, p) in cases {
            let r = shapiro_wilk(&x).unwrap();
            assert!((r.statistic - w).abs() < 1e-7, "W {} vs {w}", r.statistic);
            assert!(close(r.p_value, p, 1e-5), "p {} vs {p}", r.p_value);
        }
        assert!(shapiro_wilk(&[1.0, 2.0]).is_err());
        assert!(shapiro_wilk(&[3.0; 8]).is_err());
    }

    #[test]
    fn lilliefors_reference_values() {
        let r = ks_normality(&exp_quantiles(50)).unwrap();
        assert!((r.statistic - 0.15636442028317965).abs() < 1e-12, "{}", r.statistic);
        assert!(close(r.p_value, 0.0037093577453081957, 1e-8));
        let r = ks_normality(&exp_quantiles(30)).unwrap();
        assert!((r.statistic - 0.15612661563498514).abs() < 1e-12);
        assert!(close(r.p_value, 0.0599952974797507, 1e-8));
        let r = ks_normality(&blom(20)).unwrap();
        assert!((r.statistic - 0.030072121840475363).abs() < 1e-12);
        assert_eq!(r.p_value, 1.0);
        let r = ks_normality(&[0.1, 0.5, 1.3, 2.2, 0.7, -0.4, 3.1, 1.9, 0.05, 0.8]).unwrap();
        assert!((r.statistic - 0.18138254394571662).abs() < 1e-12);
        assert!(close(r.p_value, 0.46202680399322205, 1e-8));
        assert!(ks_normality(&[2.0; 5]).is_err());
    }

    #[test]
    fn lilliefors_uniform_by_hand() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 / 9.0).collect();
        // mean 0.5; sample sd from the closed form sum of squares
        let sd = ((0..10).map(|i| (i as f64 / 9.0 - 0.5).powi(2)).sum::<f64>() / 9.0).sqrt();
        let mut d: f64 = 0.0;
        for i in 0..10 {
            // Phi(z) = (1 + erf(z / sqrt 2)) / 2
            let f = 0.5 * (1.0 + libm::erf((x[i] - 0.5) / sd / std::f64::consts::SQRT_2));
            d = d.max(((i + 1) as f64 / 10.0 - f).abs()).max((f - i as f64 / 10.0).abs());
        }
        let r = ks_normality(&x).unwrap();
        assert!((r.statistic - d).abs() < 1e-10);
        assert!((r.statistic - 0.09551932898156279).abs() < 1e-10);
    }

    #[test]
    fn t_test_direct_formula() {
        let s = PairedSamples::new(vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![0.0; 5]).unwrap();
        let r = paired_t_test(&s).unwrap();
        let sd = (2.5f64).sqrt();
        assert!((r.statistic - 3.0 / (sd / 5f64.sqrt())).abs() < 1e-10);
        assert!((r.statistic - 4.242640687119285).abs() < 1e-10);
        assert!(close(r.p_value, 0.013235599563682695, 1e-8));
        let back = paired_t_test(&s.swapped()).unwrap();
        assert_eq!(back.statistic, -r.statistic);
        assert_eq!(back.p_value, r.p_value);
        let same = PairedSamples::new(vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]).unwrap();
        assert!(paired_t_test(&same).is_err());
    }

    /// Enumerates every sign vector explicitly.
    fn brute_force_wilcoxon(d: &[f64]) -> f64 {
        let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
        let ranks = average_ranks(&abs);
        let n = d.len();
        let total = (n * (n + 1)) as f64 / 2.0;
        let wp: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
        let stat = wp.min(total - wp);
        let mut below = 0u64;
        for mask in 0u64..(1 << n) {
            let s: f64 = (0..n).filter(|b| mask >> b & 1 == 1).map(|b| ranks[b]).sum();
            if s <= stat + 1e-9 {
                below += 1;
            }
        }
        (2.0 * below as f64 / (1u64 << n) as f64).min(1.0)
    }

    #[test]
    fn wilcoxon_exact_examples() {
        let s = PairedSamples::new(vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![0.0; 5]).unwrap();
        let r = wilcoxon_signed_rank(&s).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 0.0625);

        let dd = vec![
            0.5, -1.2, 2.3, 3.1, -0.4, 1.7, 2.2, -0.9, 1.1, 0.3, 2.8, -1.5, 0.7, 1.9, 2.6, -0.2, 1.4, 0.6, 3.3, -0.8,
        ];
        let s = PairedSamples::new(dd.clone(), vec![0.0; 20]).unwrap();
        let exact = wilcoxon_signed_rank(&s).unwrap();
        assert_eq!(exact.statistic, 41.0);
        assert!(close(exact.p_value, 0.01531219482421875, 1e-12));
        assert!(close(exact.p_value, brute_force_wilcoxon(&dd), 1e-12));
        let approx = wilcoxon_signed_rank_with(&s, WilcoxonMethod::Approximate).unwrap();
        assert!(close(approx.p_value, 0.01775806098808694, 1e-8));
        assert!((approx.p_value - exact.p_value).abs() < 0.02);
    }

    #[test]
    fn wilcoxon_ties_match_enumeration() {
        let d = [1.0, -1.0, 2.0, 2.0, -3.0, 1.0, 4.0, 2.0, -2.0, 5.0];
        let s = PairedSamples::new(d.to_vec(), vec![0.0; 10]).unwrap();
        let r = wilcoxon_signed_rank(&s).unwrap();
        assert!(close(r.p_value, brute_force_wilcoxon(&d), 1e-12));
    }

    #[test]
    fn wilcoxon_symmetric_pairs() {
        let s = PairedSamples::new(vec![1.0, -1.0, 2.0, -2.0, 3.0, -3.0], vec![0.0; 6]).unwrap();
        assert_eq!(wilcoxon_signed_rank(&s).unwrap().p_value, 1.0);
        let zero = PairedSamples::new(vec![1.0; 4], vec![1.0; 4]).unwrap();
        assert!(wilcoxon_signed_rank(&zero).is_err());
    }

    #[test]
    fn pipeline_branches() {
        let zeros = vec![0.0; 20];
        let normal = PairedSamples::new(blom(20), zeros.clone()).unwrap();
        let rec = significance_pipeline(&normal, 0.05).unwrap();
        assert_eq!(rec.test_used, TestUsed::PairedT);

        let skewed = PairedSamples::new(exp_quantiles(50), vec![0.0; 50]).unwrap();
        let rec = significance_pipeline(&skewed, 0.05).unwrap();
        assert_eq!(rec.test_used, TestUsed::Wilcoxon);
        assert!(rec.significant);

        let same = PairedSamples::new(blom(20), blom(20)).unwrap();
        let rec = significance_pipeline(&same, 0.05).unwrap();
        assert_eq!(rec.test_used, TestUsed::NotApplicable);
        assert!(!rec.significant);
        assert!(rec.reason.contains("zero variance"));
    }
}
