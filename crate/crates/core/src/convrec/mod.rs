//! Convolution tower over masked outer-product maps, trained with the BPR
//! pairwise loss. Embeddings are either frozen (pretrained) or learned jointly
//! with the tower.
//!
//! Parameter layout, shared by the in-memory model and the checkpoint: for
//! each conv layer the weights `[c_out][c_in][ky][kx]` followed by the biases
//! `[c_out]`; then the head. A linear head is `w[C]`, `b`; a head with hidden
//! width `H` is `W1[H][C]`, `b1[H]`, `w2[H]`, `b2`. Activations are stored
//! `[channel][row][col]` and the input map has one channel with row `x`
//! (user factor) and column `y` (item factor).

mod checkpoint;
mod train;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::baselines::bpr::{log_sigmoid, sigmoid};
use crate::baselines::ScoringModel;
use crate::embed::{EmbeddingPair, MaskMode};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

pub use checkpoint::{load_convrec, save_convrec, ConvRecMetadata, CONVREC_MAGIC};
pub use train::{train, validation_metric, Optimizer, TraceRecord, TrainConfig, TrainTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvTowerConfig {
    pub layers: usize,
    /// Output channels of every conv layer.
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    /// Hidden ReLU width of the output head; 0 gives a linear head.
    pub head_width: usize,
    /// Weights are drawn from `U(-a, a)` with `a = init_scale / sqrt(fan_in)`.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for ConvTowerConfig {
    fn default() -> Self {
        Self {
            layers: 6,
            channels: 32,
            kernel: 2,
            stride: 2,
            head_width: 0,
            init_scale: 6f64.sqrt(),
            seed: 0,
        }
    }
}

impl ConvTowerConfig {
    /// 2x2 / stride-2 tower deep enough to reduce a `k` x `k` map to 1x1.
    pub fn halving(k: usize, channels: usize, seed: u64) -> Result<Self> {
        if k == 0 || !k.is_power_of_two() || k == 1 {
            return Err(Error::Geometry(format!("a halving tower needs K a power of two >= 2, got {k}")));
        }
        Ok(Self {
            layers: k.trailing_zeros() as usize,
            channels,
            seed,
            ..Self::default()
        })
    }

    /// Spatial sizes `[k, s_1, ..., s_L]`; the last must be 1 and every layer
    /// must tile its input exactly.
    pub fn spatial_sizes(&self, k: usize) -> Result<Vec<usize>> {
        if self.layers == 0 || self.channels == 0 || self.kernel == 0 || self.stride == 0 {
            return Err(Error::Geometry(format!(
                "layers, channels, kernel and stride must be positive: {self:?}"
            )));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(Error::Geometry(format!("init_scale {} is not a finite non-negative number", self.init_scale)));
        }
        let mut sizes = vec![k];
        let mut s = k;
        for l in 0..self.layers {
            if s < self.kernel || !(s - self.kernel).is_multiple_of(self.stride) {
                return Err(Error::Geometry(format!(
                    "layer {l}: input {s}x{s} is not tiled by kernel {} / stride {}",
                    self.kernel, self.stride
                )));
            }
            s = (s - self.kernel) / self.stride + 1;
            sizes.push(s);
        }
        if s != 1 {
            return Err(Error::Geometry(format!(
                "{} layers reduce K = {k} to {s}x{s}, expected 1x1",
                self.layers
            )));
        }
        Ok(sizes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingMode {
    /// Pretrained factors, never updated.
    #[default]
    Frozen,
    Learnable,
}

/// One L2 constant per parameter group. Biases are not penalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Regularization {
    pub conv: f64,
    pub head: f64,
    pub embed: f64,
}

impl Default for Regularization {
    fn default() -> Self {
        Self {
            conv: 1e-4,
            head: 1e-4,
            embed: 1e-4,
        }
    }
}

impl Regularization {
    pub const NONE: Regularization = Regularization {
        conv: 0.0,
        head: 0.0,
        embed: 0.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    ConvWeight(usize),
    ConvBias(usize),
    HeadWeight,
    HeadBias,
}

#[derive(Debug, Clone, PartialEq)]
struct LayerShape {
    c_in: usize,
    c_out: usize,
    size_in: usize,
    size_out: usize,
    w_off: usize,
    b_off: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct HeadShape {
    input: usize,
    hidden: usize,
    offset: usize,
}

/// Forward activations kept for backpropagation.
struct Cache<T> {
    /// `acts[0]` is the masked input map, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<T>>,
    hidden: Vec<T>,
    score: T,
}

/// Gradient of the triple loss. Embedding parts are zero in frozen mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub params: Vec<T>,
    pub user: Vec<T>,
    pub positive: Vec<T>,
    pub negative: Vec<T>,
}

impl<T: Scalar> Gradients<T> {
    fn zeros(n_params: usize, k: usize) -> Self {
        Self {
            params: vec![T::zero(); n_params],
            user: vec![T::zero(); k],
            positive: vec![T::zero(); k],
            negative: vec![T::zero(); k],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvRecModel<T> {
    pub embeddings: EmbeddingPair<T>,
    pub mode: EmbeddingMode,
    /// Mask applied while training; inference may use another.
    pub train_mask: MaskMode,
    tower: ConvTowerConfig,
    layers: Vec<LayerShape>,
    head: HeadShape,
    groups: Vec<ParamGroup>,
    params: Vec<T>,
}

impl<T: Scalar> ConvRecModel<T> {
    /// Builds the tower for `embeddings.k()` and draws initial weights from
    /// `tower.seed`. Geometry errors surface here, never at forward time.
    pub fn new(embeddings: EmbeddingPair<T>, mode: EmbeddingMode, tower: &ConvTowerConfig, train_mask: MaskMode) -> Result<Self> {
        let sizes = tower.spatial_sizes(embeddings.k())?;
        let mut layers = Vec::with_capacity(tower.layers);
        let mut groups = Vec::new();
        let mut offset = 0;
        for l in 0..tower.layers {
            let c_in = if l == 0 { 1 } else { tower.channels };
            let c_out = tower.channels;
            let n_w = c_out * c_in * tower.kernel * tower.kernel;
            layers.push(LayerShape {
                c_in,
                c_out,
                size_in: sizes[l],
                size_out: sizes[l + 1],
                w_off: offset,
                b_off: offset + n_w,
            });
            groups.extend(std::iter::repeat_n(ParamGroup::ConvWeight(l), n_w));
            groups.extend(std::iter::repeat_n(ParamGroup::ConvBias(l), c_out));
            offset += n_w + c_out;
        }
        let head = HeadShape {
            input: tower.channels,
            hidden: tower.head_width,
            offset,
        };
        if head.hidden == 0 {
            groups.extend(std::iter::repeat_n(ParamGroup::HeadWeight, head.input));
            groups.push(ParamGroup::HeadBias);
        } else {
            groups.extend(std::iter::repeat_n(ParamGroup::HeadWeight, head.hidden * head.input));
            groups.extend(std::iter::repeat_n(ParamGroup::HeadBias, head.hidden));
            groups.extend(std::iter::repeat_n(ParamGroup::HeadWeight, head.hidden));
            groups.push(ParamGroup::HeadBias);
        }

        // fan-in per weight; biases start at zero
        let k2 = tower.kernel * tower.kernel;
        let fan_in = |idx: usize, g: ParamGroup| match g {
            ParamGroup::ConvWeight(l) => layers[l].c_in * k2,
            ParamGroup::HeadWeight if head.hidden > 0 && idx >= head.offset + head.hidden * (head.input + 1) => head.hidden,
            ParamGroup::HeadWeight => head.input,
            _ => 0,
        };
        let mut r = rng::seeded(tower.seed);
        let mut params = vec![T::zero(); groups.len()];
        for (idx, (p, &g)) in params.iter_mut().zip(&groups).enumerate() {
            let n = fan_in(idx, g);
            if n == 0 {
                continue;
            }
            let a = tower.init_scale / (n as f64).sqrt();
            if a > 0.0 {
                *p = T::lit(r.random_range(-a..=a));
            }
        }
        Ok(Self {
            embeddings,
            mode,
            train_mask,
            tower: tower.clone(),
            layers,
            head,
            groups,
            params,
        })
    }

    pub fn k(&self) -> usize {
        self.embeddings.k()
    }

    pub fn tower(&self) -> &ConvTowerConfig {
        &self.tower
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn param_groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    pub fn set_params(&mut self, params: Vec<T>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                actual: params.len(),
            });
        }
        self.params = params;
        Ok(())
    }

    /// Weights `[c_out][c_in][ky][kx]` and biases of conv layer `l`.
    pub fn layer(&self, l: usize) -> (&[T], &[T]) {
        let s = &self.layers[l];
        (&self.params[s.w_off..s.b_off], &self.params[s.b_off..s.b_off + s.c_out])
    }

    /// `(c_in, c_out, size_in, size_out)` of conv layer `l`.
    pub fn layer_shape(&self, l: usize) -> (usize, usize, usize, usize) {
        let s = &self.layers[l];
        (s.c_in, s.c_out, s.size_in, s.size_out)
    }

    pub fn head_params(&self) -> &[T] {
        &self.params[self.head.offset..]
    }

    /// Masked outer product `mask ⊙ (p_u q_iᵀ)`, row-major.
    pub fn input_map(&self, u: usize, i: usize, mask: &[T]) -> Vec<T> {
        let p = self.embeddings.user(u);
        let q = self.embeddings.item(i);
        let k = p.len();
        let mut map = Vec::with_capacity(k * k);
        for (x, &px) in p.iter().enumerate() {
            for (y, &qy) in q.iter().enumerate() {
                map.push(px * qy * mask[x * k + y]);
            }
        }
        map
    }

    fn run(&self, input: Vec<T>) -> Cache<T> {
        let k = self.tower.kernel;
        let st = self.tower.stride;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input);
        for s in &self.layers {
            let inp = acts.last().expect("input present");
            let w = &self.params[s.w_off..s.b_off];
            let b = &self.params[s.b_off..s.b_off + s.c_out];
            let (si, so) = (s.size_in, s.size_out);
            let mut out = vec![T::zero(); s.c_out * so * so];
            for co in 0..s.c_out {
                for oy in 0..so {
                    for ox in 0..so {
                        let mut acc = b[co];
                        for ci in 0..s.c_in {
                            let wb = (co * s.c_in + ci) * k * k;
                            let ib = ci * si * si;
                            for ky in 0..k {
                                let row = ib + (oy * st + ky) * si + ox * st;
                                for kx in 0..k {
                                    acc += w[wb + ky * k + kx] * inp[row + kx];
                                }
                            }
                        }
                        out[(co * so + oy) * so + ox] = acc.max(T::zero());
                    }
                }
            }
            acts.push(out);
        }
        let z = acts.last().expect("tower output");
        let hp = &self.params[self.head.offset..];
        let c = self.head.input;
        let (hidden, score) = if self.head.hidden == 0 {
            let s = z.iter().zip(&hp[..c]).map(|(&a, &b)| a * b).sum::<T>() + hp[c];
            (Vec::new(), s)
        } else {
            let h = self.head.hidden;
            let b1 = &hp[h * c..h * c + h];
            let w2 = &hp[h * c + h..h * c + 2 * h];
            let hidden: Vec<T> = (0..h)
                .map(|j| {
                    let pre = z.iter().zip(&hp[j * c..(j + 1) * c]).map(|(&a, &b)| a * b).sum::<T>() + b1[j];
                    pre.max(T::zero())
                })
                .collect();
            let s = hidden.iter().zip(w2).map(|(&a, &b)| a * b).sum::<T>() + hp[h * c + 2 * h];
            (hidden, s)
        };
        Cache { acts, hidden, score }
    }

    /// Adds `dscore * d score / d params` into `grad` and returns the gradient
    /// with respect to the (masked) input map.
    fn back(&self, cache: &Cache<T>, dscore: T, grad: &mut [T]) -> Vec<T> {
        let k = self.tower.kernel;
        let st = self.tower.stride;
        let z = cache.acts.last().expect("tower output");
        let c = self.head.input;
        let off = self.head.offset;
        let mut dz = vec![T::zero(); c];
        if self.head.hidden == 0 {
            for ch in 0..c {
                grad[off + ch] += dscore * z[ch];
                dz[ch] = dscore * self.params[off + ch];
            }
            grad[off + c] += dscore;
        } else {
            let h = self.head.hidden;
            let w2 = off + h * c + h;
            for j in 0..h {
                grad[w2 + j] += dscore * cache.hidden[j];
                if cache.hidden[j] > T::zero() {
                    let dpre = dscore * self.params[w2 + j];
                    grad[off + h * c + j] += dpre;
                    for ch in 0..c {
                        grad[off + j * c + ch] += dpre * z[ch];
                        dz[ch] += dpre * self.params[off + j * c + ch];
                    }
                }
            }
            grad[w2 + h] += dscore;
        }

        let mut dout = dz;
        for (l, s) in self.layers.iter().enumerate().rev() {
            let inp = &cache.acts[l];
            let out = &cache.acts[l + 1];
            let (si, so) = (s.size_in, s.size_out);
            let mut din = vec![T::zero(); s.c_in * si * si];
            for co in 0..s.c_out {
                for oy in 0..so {
                    for ox in 0..so {
                        let o = (co * so + oy) * so + ox;
                        if out[o] <= T::zero() {
                            continue;
                        }
                        let d = dout[o];
                        grad[s.b_off + co] += d;
                        for ci in 0..s.c_in {
                            let wb = s.w_off + (co * s.c_in + ci) * k * k;
                            let ib = ci * si * si;
                            for ky in 0..k {
                                let row = ib + (oy * st + ky) * si + ox * st;
                                for kx in 0..k {
                                    grad[wb + ky * k + kx] += d * inp[row + kx];
                                    din[row + kx] += d * self.params[wb + ky * k + kx];
                                }
                            }
                        }
                    }
                }
            }
            dout = din;
        }
        dout
    }

    /// Score of an already masked `K x K` map.
    pub fn forward_map(&self, map: &[T]) -> Result<T> {
        let k = self.k();
        if map.len() != k * k {
            return Err(Error::DimensionMismatch {
                expected: k * k,
                actual: map.len(),
            });
        }
        Ok(self.run(map.to_vec()).score)
    }

    pub fn forward(&self, u: usize, i: usize, mask: MaskMode) -> T {
        self.forward_with(u, i, &mask.weights(self.k()))
    }

    fn forward_with(&self, u: usize, i: usize, mask: &[T]) -> T {
        self.run(self.input_map(u, i, mask)).score
    }

    /// `d score / d E[x][y]` where `E = p_u q_iᵀ` is the unmasked map. Cells
    /// removed by `mask` get exactly zero.
    pub fn map_jacobian(&self, u: usize, i: usize, mask: MaskMode) -> Vec<T> {
        let weights = mask.weights(self.k());
        let cache = self.run(self.input_map(u, i, &weights));
        let mut scratch = vec![T::zero(); self.params.len()];
        let din = self.back(&cache, T::one(), &mut scratch);
        din.into_iter().zip(weights).map(|(d, w)| d * w).collect()
    }

    fn reg_loss(&self, triple: (usize, usize, usize), reg: &Regularization) -> f64 {
        let mut conv = 0.0;
        let mut head = 0.0;
        for (p, g) in self.params.iter().zip(&self.groups) {
            let v = p.as_f64();
            match g {
                ParamGroup::ConvWeight(_) => conv += v * v,
                ParamGroup::HeadWeight => head += v * v,
                _ => {}
            }
        }
        let mut total = reg.conv * conv + reg.head * head;
        if self.mode == EmbeddingMode::Learnable {
            let (u, i, j) = triple;
            let sq = |v: &[T]| v.iter().map(|x| x.as_f64() * x.as_f64()).sum::<f64>();
            total += reg.embed * (sq(self.embeddings.user(u)) + sq(self.embeddings.item(i)) + sq(self.embeddings.item(j)));
        }
        total
    }

    /// `-ln σ(s_ui - s_uj)` plus the L2 terms for the parameters this triple
    /// touches. Embedding terms only count in learnable mode.
    pub fn triple_loss(&self, triple: (usize, usize, usize), mask: MaskMode, reg: &Regularization) -> f64 {
        let (u, i, j) = triple;
        let w = mask.weights(self.k());
        let x = (self.forward_with(u, i, &w) - self.forward_with(u, j, &w)).as_f64();
        -log_sigmoid(x) + self.reg_loss(triple, reg)
    }

    /// Exact gradient of [`triple_loss`](Self::triple_loss); returns the loss
    /// as well.
    pub fn backward(&self, triple: (usize, usize, usize), mask: MaskMode, reg: &Regularization) -> (f64, Gradients<T>) {
        self.backward_with(triple, &mask.weights(self.k()), reg)
    }

    fn backward_with(&self, triple: (usize, usize, usize), mask: &[T], reg: &Regularization) -> (f64, Gradients<T>) {
        let (u, i, j) = triple;
        let k = self.k();
        let ci = self.run(self.input_map(u, i, mask));
        let cj = self.run(self.input_map(u, j, mask));
        let x = (ci.score - cj.score).as_f64();
        let loss = -log_sigmoid(x) + self.reg_loss(triple, reg);
        // d(-ln σ(x))/dx = -σ(-x)
        let g = T::lit(-sigmoid(-x));
        let mut grads = Gradients::zeros(self.params.len(), k);
        let din_i = self.back(&ci, g, &mut grads.params);
        let din_j = self.back(&cj, -g, &mut grads.params);
        for ((d, p), grp) in grads.params.iter_mut().zip(&self.params).zip(&self.groups) {
            match grp {
                ParamGroup::ConvWeight(_) => *d += T::lit(2.0 * reg.conv) * *p,
                ParamGroup::HeadWeight => *d += T::lit(2.0 * reg.head) * *p,
                _ => {}
            }
        }
        if self.mode == EmbeddingMode::Learnable {
            let p = self.embeddings.user(u);
            for (item, din, out) in [(i, &din_i, &mut grads.positive), (j, &din_j, &mut grads.negative)] {
                let q = self.embeddings.item(item);
                for x in 0..k {
                    for y in 0..k {
                        let d = din[x * k + y] * mask[x * k + y];
                        grads.user[x] += d * q[y];
                        out[y] += d * p[x];
                    }
                }
            }
            let two = T::lit(2.0 * reg.embed);
            for (d, &v) in grads.user.iter_mut().zip(p) {
                *d += two * v;
            }
            for (d, &v) in grads.positive.iter_mut().zip(self.embeddings.item(i)) {
                *d += two * v;
            }
            for (d, &v) in grads.negative.iter_mut().zip(self.embeddings.item(j)) {
                *d += two * v;
            }
        }
        (loss, grads)
    }

    /// Scoring view with a fixed inference mask.
    pub fn scorer(&self, mask: MaskMode) -> ConvScorer<'_, T> {
        ConvScorer {
            model: self,
            mask: mask.weights(self.k()),
        }
    }
}

pub struct ConvScorer<'a, T> {
    model: &'a ConvRecModel<T>,
    mask: Vec<T>,
}

impl<T: Scalar> ScoringModel for ConvScorer<'_, T> {
    fn n_items(&self) -> usize {
        self.model.embeddings.n_items()
    }

    fn score(&self, user: usize) -> Vec<f64> {
        (0..self.n_items())
            .map(|i| self.model.forward_with(user, i, &self.mask).as_f64())
            .collect()
    }

    fn score_items(&self, user: usize, items: &[usize]) -> Vec<f64> {
        items
            .iter()
            .map(|&i| self.model.forward_with(user, i, &self.mask).as_f64())
            .collect()
    }
}
