use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ConvRecModel, EmbeddingMode, Gradients, Regularization};
use crate::baselines::bpr::sample_negative;
use crate::dataio::{InteractionMatrix, SplitTriple};
use crate::embed::MaskMode;
use crate::error::{Error, Result};
use crate::eval::{evaluate_loo, EvalOptions, EvalTarget, Metric};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Optimizer {
    #[default]
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub reg: Regularization,
    /// Triples per gradient step; the step uses the batch-mean gradient.
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs between validation evaluations.
    pub eval_interval: usize,
    /// Non-improving evaluations tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Per-triple gradients of a batch computed on the rayon pool. They are
    /// still summed in batch order, so results match the serial mode.
    pub parallel: bool,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            reg: Regularization::default(),
            batch_size: 256,
            max_epochs: 50,
            eval_interval: 1,
            patience: 5,
            seed: 0,
            parallel: false,
            optimizer: Optimizer::Sgd,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        let r = &self.reg;
        if [r.conv, r.head, r.embed].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(format!("regularization must be non-negative: {r:?}")));
        }
        if self.patience == 0 || self.eval_interval == 0 || self.batch_size == 0 {
            return Err(Error::invalid("patience, eval_interval and batch_size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub epoch: usize,
    pub eval_step: usize,
    pub metric: f64,
    pub best_so_far: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
    /// Mean triple loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// 1-based evaluation step of the returned checkpoint.
    pub best_step: Option<usize>,
    pub stopped_early: bool,
}

impl TrainTrace {
    pub fn best_metric(&self) -> Option<f64> {
        self.best_step.map(|s| self.records[s - 1].metric)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,eval_step,metric,best_so_far\n");
        for r in &self.records {
            writeln!(out, "{},{},{},{}", r.epoch, r.eval_step, r.metric, r.best_so_far).unwrap();
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Evaluator for [`train`]: leave-one-out `metric` on the validation
/// partition with the model's own training mask.
pub fn validation_metric<'a, T: Scalar>(
    split: &'a SplitTriple,
    metric: Metric,
    opts: &EvalOptions,
) -> impl FnMut(&ConvRecModel<T>) -> Result<f64> + 'a {
    let mut opts = EvalOptions {
        target: EvalTarget::Validation,
        ..opts.clone()
    };
    if !opts.cutoffs.contains(&metric.cutoff) {
        opts.cutoffs.push(metric.cutoff);
    }
    move |model: &ConvRecModel<T>| evaluate_loo(&model.scorer(model.train_mask), split, &opts)?.metric(metric)
}

struct AdamState {
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
    users: (Vec<f64>, Vec<f64>),
    items: (Vec<f64>, Vec<f64>),
}

enum Stepper {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64, state: Box<AdamState> },
}

impl Stepper {
    fn new<T: Scalar>(opt: Optimizer, model: &ConvRecModel<T>) -> Self {
        match opt {
            Optimizer::Sgd => Stepper::Sgd,
            Optimizer::Adam { beta1, beta2, epsilon } => {
                let n = model.n_params();
                let nu = model.embeddings.n_users() * model.k();
                let ni = model.embeddings.n_items() * model.k();
                Stepper::Adam {
                    beta1,
                    beta2,
                    epsilon,
                    state: Box::new(AdamState {
                        t: 0,
                        m: vec![0.0; n],
                        v: vec![0.0; n],
                        users: (vec![0.0; nu], vec![0.0; nu]),
                        items: (vec![0.0; ni], vec![0.0; ni]),
                    }),
                }
            }
        }
    }

    fn tick(&mut self) {
        if let Stepper::Adam { state, .. } = self {
            state.t += 1;
        }
    }

    /// `values -= lr * direction(grad)`; `slot` is the offset into the
    /// matching Adam moment buffers.
    fn apply<T: Scalar>(&mut self, values: &mut [T], grad: &[T], lr: f64, which: Buffer, slot: usize) {
        match self {
            Stepper::Sgd => {
                for (v, g) in values.iter_mut().zip(grad) {
                    *v -= T::lit(lr) * *g;
                }
            }
            Stepper::Adam {
                beta1,
                beta2,
                epsilon,
                state,
            } => {
                let t = state.t;
                let (m, s) = match which {
                    Buffer::Params => (&mut state.m, &mut state.v),
                    Buffer::Users => (&mut state.users.0, &mut state.users.1),
                    Buffer::Items => (&mut state.items.0, &mut state.items.1),
                };
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (n, (v, g)) in values.iter_mut().zip(grad).enumerate() {
                    let g = g.as_f64();
                    let m = &mut m[slot + n];
                    let s = &mut s[slot + n];
                    *m = *beta1 * *m + (1.0 - *beta1) * g;
                    *s = *beta2 * *s + (1.0 - *beta2) * g * g;
                    let step = lr * (*m / c1) / ((*s / c2).sqrt() + *epsilon);
                    *v -= T::lit(step);
                }
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Buffer {
    Params,
    Users,
    Items,
}

/// Batch-summed gradient with sparse embedding rows.
struct Accumulator<T> {
    params: Vec<T>,
    users: BTreeMap<usize, Vec<T>>,
    items: BTreeMap<usize, Vec<T>>,
}

impl<T: Scalar> Accumulator<T> {
    fn new(n: usize) -> Self {
        Self {
            params: vec![T::zero(); n],
            users: BTreeMap::new(),
            items: BTreeMap::new(),
        }
    }

    fn add(&mut self, (u, i, j): (usize, usize, usize), g: &Gradients<T>, embeddings: bool) {
        for (a, b) in self.params.iter_mut().zip(&g.params) {
            *a += *b;
        }
        if embeddings {
            add_row(&mut self.users, u, &g.user);
            add_row(&mut self.items, i, &g.positive);
            add_row(&mut self.items, j, &g.negative);
        }
    }

    fn scale(&mut self, f: T) {
        let rows = self.users.values_mut().chain(self.items.values_mut());
        for v in self.params.iter_mut().chain(rows.flatten()) {
            *v *= f;
        }
    }
}

fn add_row<T: Scalar>(map: &mut BTreeMap<usize, Vec<T>>, idx: usize, grad: &[T]) {
    let row = map.entry(idx).or_insert_with(|| vec![T::zero(); grad.len()]);
    for (a, b) in row.iter_mut().zip(grad) {
        *a += *b;
    }
}

fn non_finite<T: Scalar>(v: &[T]) -> bool {
    v.iter().any(|x| !x.is_finite())
}

/// BPR training of `model` on `data` with early stopping.
///
/// After every `eval_interval` epochs `evaluator` scores the current model.
/// Training stops once `patience` consecutive evaluations fail to beat the
/// best one, or after `max_epochs`. The model from the best evaluation is
/// returned; without any evaluation the final model is.
pub fn train<T: Scalar>(
    mut model: ConvRecModel<T>,
    data: &InteractionMatrix,
    cfg: &TrainConfig,
    train_mask: MaskMode,
    mut evaluator: impl FnMut(&ConvRecModel<T>) -> Result<f64>,
) -> Result<(ConvRecModel<T>, TrainTrace)> {
    cfg.validate()?;
    data.ensure_not_test("convolution training")?;
    if data.n_users() != model.embeddings.n_users() || data.n_items() != model.embeddings.n_items() {
        return Err(Error::invalid(format!(
            "training data is {}x{}, embeddings cover {}x{}",
            data.n_users(),
            data.n_items(),
            model.embeddings.n_users(),
            model.embeddings.n_items()
        )));
    }
    model.train_mask = train_mask;
    let mask = train_mask.weights::<T>(model.k());
    let learnable = model.mode == EmbeddingMode::Learnable;
    let k = model.k();
    let positives: Vec<(usize, usize)> = data.entries().iter().map(|e| (e.user, e.item)).collect();
    let mut stepper = Stepper::new(cfg.optimizer, &model);
    let mut trace = TrainTrace::default();
    let mut best: Option<(f64, ConvRecModel<T>)> = None;
    let mut since_best = 0;
    let lr = cfg.learning_rate;

    for epoch in 1..=cfg.max_epochs {
        let mut r = rng::seeded(rng::derive(cfg.seed, epoch as u64));
        let mut order = positives.clone();
        order.shuffle(&mut r);
        let triples: Vec<(usize, usize, usize)> = order
            .into_iter()
            .filter_map(|(u, i)| sample_negative(data, u, &mut r).map(|j| (u, i, j)))
            .collect();
        let mut loss_sum = 0.0;
        for batch in triples.chunks(cfg.batch_size) {
            let grads: Vec<(f64, Gradients<T>)> = if cfg.parallel {
                batch
                    .par_iter()
                    .map(|&t| model.backward_with(t, &mask, &cfg.reg))
                    .collect()
            } else {
                batch.iter().map(|&t| model.backward_with(t, &mask, &cfg.reg)).collect()
            };
            let mut acc = Accumulator::new(model.n_params());
            for (&t, (loss, g)) in batch.iter().zip(&grads) {
                loss_sum += loss;
                acc.add(t, g, learnable);
            }
            if !loss_sum.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    learning_rate: lr,
                    detail: format!("non-finite loss {loss_sum}"),
                });
            }
            acc.scale(T::lit(1.0 / batch.len() as f64));
            stepper.tick();
            stepper.apply(&mut model.params, &acc.params, lr, Buffer::Params, 0);
            for (&u, g) in &acc.users {
                stepper.apply(model.embeddings.user_mut(u), g, lr, Buffer::Users, u * k);
            }
            for (&i, g) in &acc.items {
                stepper.apply(model.embeddings.item_mut(i), g, lr, Buffer::Items, i * k);
            }
            if non_finite(&model.params) {
                return Err(Error::Diverged {
                    epoch,
                    learning_rate: lr,
                    detail: "non-finite tower weights".into(),
                });
            }
        }
        let mean_loss = if triples.is_empty() { 0.0 } else { loss_sum / triples.len() as f64 };
        trace.epoch_losses.push(mean_loss);
        log::debug!("epoch {epoch}: mean loss {mean_loss:.6}");

        if epoch % cfg.eval_interval != 0 {
            continue;
        }
        let step = trace.records.len() + 1;
        let metric = evaluator(&model)?;
        let improved = metric.is_finite() && best.as_ref().is_none_or(|(b, _)| metric > *b);
        if improved {
            best = Some((metric, model.clone()));
            trace.best_step = Some(step);
            since_best = 0;
        } else {
            since_best += 1;
        }
        let best_so_far = best.as_ref().map_or(f64::NAN, |(b, _)| *b);
        trace.records.push(TraceRecord {
            epoch,
            eval_step: step,
            metric,
            best_so_far,
        });
        log::info!("epoch {epoch} step {step}: metric {metric:.5} (best {best_so_far:.5})");
        if since_best >= cfg.patience {
            trace.stopped_early = epoch < cfg.max_epochs;
            break;
        }
    }
    let model = match best {
        Some((_, m)) => m,
        None => model,
    };
    Ok((model, trace))
}
