//! The trained network: token embeddings feeding three fully-connected
//! layers with SiLU activations.
//!
//! A pair of tokens is embedded, the two embedding rows are concatenated
//! into `a0`, and the logits are
//!
//! ```text
//! h1     = silu(W1^T a0 + b1)
//! h2     = silu(W2^T h1 + b2)
//! logits = W3^T h2 + b3
//! ```
//!
//! Activations are addressed by layer index: 0 is `a0`, 1 is `h1`, 2 is
//! `h2` (both post-SiLU), 3 is the logits. Everything is `f64` and every
//! code path is deterministic; batched and single-sample evaluation share
//! the same row kernels, so they agree bit for bit.

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use train::{accuracy, adamw_step, loss_and_grads, AdamState, TrainConfig};

use thiserror::Error;

use crate::rng::SplitMix64;
use crate::tasks::TaskSpec;

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("token {token} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { token: usize, vocab: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("layer index {0} is not an interior layer (expected 0, 1 or 2)")]
    BadLayerIndex(usize),
    #[error("activation has length {got}, layer {layer} expects {expected}")]
    ActivationLength { layer: usize, got: usize, expected: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("non-finite gradient in {tensor} at optimizer step {step}")]
    NonFiniteGradient { tensor: &'static str, step: u64 },
    #[error("invalid training config: {0}")]
    BadConfig(String),
}

/// Layer widths. Defaults mirror the experiments: 32-dimensional
/// embeddings, hidden width 100, output width equal to the vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub vocab: usize,
    pub d_embed: usize,
    pub d_hidden: usize,
    pub d_out: usize,
}

impl Architecture {
    pub fn for_task(spec: &TaskSpec) -> Self {
        let v = spec.vocab_size();
        Self { vocab: v, d_embed: 32, d_hidden: 100, d_out: v }
    }

    /// Width of the activation vector at a probe layer (0, 1 or 2).
    pub fn layer_width(&self, layer: usize) -> Result<usize, MlpError> {
        match layer {
            0 => Ok(2 * self.d_embed),
            1 | 2 => Ok(self.d_hidden),
            other => Err(MlpError::BadLayerIndex(other)),
        }
    }

    fn tensor_sizes(&self) -> [(&'static str, usize, bool); 7] {
        let a0 = 2 * self.d_embed;
        [
            ("embedding", self.vocab * self.d_embed, false),
            ("w1", a0 * self.d_hidden, false),
            ("b1", self.d_hidden, true),
            ("w2", self.d_hidden * self.d_hidden, false),
            ("b2", self.d_hidden, true),
            ("w3", self.d_hidden * self.d_out, false),
            ("b3", self.d_out, true),
        ]
    }
}

/// One tensor per parameter of the network; doubles as the gradient and
/// optimizer-moment container since those share the shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    /// `vocab x d_embed`, row per token.
    pub embedding: Vec<f64>,
    /// `2*d_embed x d_hidden`, row-major, `w1[i*d_hidden + j]` connecting
    /// input `i` to hidden unit `j`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `d_hidden x d_hidden`.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    /// `d_hidden x d_out`.
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
}

impl ParamSet {
    pub fn zeros(arch: &Architecture) -> Self {
        let sizes = arch.tensor_sizes();
        Self {
            embedding: vec![0.0; sizes[0].1],
            w1: vec![0.0; sizes[1].1],
            b1: vec![0.0; sizes[2].1],
            w2: vec![0.0; sizes[3].1],
            b2: vec![0.0; sizes[4].1],
            w3: vec![0.0; sizes[5].1],
            b3: vec![0.0; sizes[6].1],
        }
    }

    /// Tensors in checkpoint order with their names and bias flags.
    pub fn tensors(&self) -> [(&'static str, &Vec<f64>, bool); 7] {
        [
            ("embedding", &self.embedding, false),
            ("w1", &self.w1, false),
            ("b1", &self.b1, true),
            ("w2", &self.w2, false),
            ("b2", &self.b2, true),
            ("w3", &self.w3, false),
            ("b3", &self.b3, true),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Vec<f64>, bool); 7] {
        let Self { embedding, w1, b1, w2, b2, w3, b3 } = self;
        [
            ("embedding", embedding, false),
            ("w1", w1, false),
            ("b1", b1, true),
            ("w2", w2, false),
            ("b2", b2, true),
            ("w3", w3, false),
            ("b3", b3, true),
        ]
    }
}

/// Activations of one forward pass at the four addressable layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    pub a0: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub logits: Vec<f64>,
}

impl Activations {
    pub fn layer(&self, index: usize) -> Option<&[f64]> {
        match index {
            0 => Some(&self.a0),
            1 => Some(&self.h1),
            2 => Some(&self.h2),
            3 => Some(&self.logits),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub arch: Architecture,
    pub params: ParamSet,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

/// d/dx silu(x) = sigma(x) (1 + x (1 - sigma(x))).
pub(crate) fn silu_prime(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

fn silu_inplace(v: &mut [f64]) {
    for x in v {
        *x = silu(*x);
    }
}

/// `out[r x n] += x[r x k] @ w[k x n]`, all row-major. Each output row
/// depends only on its own input row, so rows of a batch match
/// single-row evaluation exactly.
pub(crate) fn matmul_acc(out: &mut [f64], x: &[f64], w: &[f64], k: usize, n: usize) {
    for (orow, xrow) in out.chunks_exact_mut(n).zip(x.chunks_exact(k)) {
        for (&xl, wrow) in xrow.iter().zip(w.chunks_exact(n)) {
            for (o, &wv) in orow.iter_mut().zip(wrow) {
                *o += xl * wv;
            }
        }
    }
}

/// `out[k x n] += x[r x k]^T @ dy[r x n]`.
pub(crate) fn matmul_xt_acc(out: &mut [f64], x: &[f64], dy: &[f64], k: usize, n: usize) {
    for (xrow, dyrow) in x.chunks_exact(k).zip(dy.chunks_exact(n)) {
        for (&xv, orow) in xrow.iter().zip(out.chunks_exact_mut(n)) {
            for (o, &d) in orow.iter_mut().zip(dyrow) {
                *o += xv * d;
            }
        }
    }
}

/// `out[r x k] += dy[r x n] @ w[k x n]^T`.
pub(crate) fn matmul_wt_acc(out: &mut [f64], dy: &[f64], w: &[f64], k: usize, n: usize) {
    for (orow, dyrow) in out.chunks_exact_mut(k).zip(dy.chunks_exact(n)) {
        for (o, wrow) in orow.iter_mut().zip(w.chunks_exact(n)) {
            let mut acc = 0.0;
            for (&d, &wv) in dyrow.iter().zip(wrow) {
                acc += d * wv;
            }
            *o += acc;
        }
    }
}

/// `x[rows x in] @ w + b` broadcast over rows.
fn affine_batch(x: &[f64], rows: usize, in_dim: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let out_dim = b.len();
    let mut out = Vec::with_capacity(rows * out_dim);
    for _ in 0..rows {
        out.extend_from_slice(b);
    }
    matmul_acc(&mut out, x, w, in_dim, out_dim);
    out
}

/// Full activation trace of a batched forward pass, kept for backprop.
pub(crate) struct BatchTrace {
    pub rows: usize,
    pub a0: Vec<f64>,
    pub z1: Vec<f64>,
    pub h1: Vec<f64>,
    pub z2: Vec<f64>,
    pub h2: Vec<f64>,
    pub logits: Vec<f64>,
}

impl MlpModel {
    /// Zero-parameter model; useful as a base for hand-built test models.
    pub fn zeros(arch: Architecture) -> Self {
        Self { arch, params: ParamSet::zeros(&arch) }
    }

    /// Seeded initialization: weights uniform in `(-s, s)` with
    /// `s = init_scale / sqrt(fan_in)`, biases zero, embedding entries
    /// uniform with unit variance scaled by `init_scale / sqrt(d_embed)`.
    /// Draw order is fixed (embedding, w1, w2, w3, row-major each), so a
    /// seed pins every parameter.
    pub fn init(spec: &TaskSpec, cfg: &TrainConfig) -> Self {
        Self::init_with_arch(Architecture::for_task(spec), cfg)
    }

    pub fn init_with_arch(arch: Architecture, cfg: &TrainConfig) -> Self {
        let mut rng = SplitMix64::new(cfg.init_seed);
        let mut params = ParamSet::zeros(&arch);
        let sqrt3 = 3.0f64.sqrt();
        let emb_scale = cfg.init_scale / (arch.d_embed as f64).sqrt();
        for e in params.embedding.iter_mut() {
            *e = rng.uniform(-sqrt3, sqrt3) * emb_scale;
        }
        let a0 = 2 * arch.d_embed;
        for (w, fan_in) in [(&mut params.w1, a0), (&mut params.w2, arch.d_hidden), (&mut params.w3, arch.d_hidden)] {
            let s = cfg.init_scale / (fan_in as f64).sqrt();
            for v in w.iter_mut() {
                *v = rng.uniform(-s, s);
            }
        }
        Self { arch, params }
    }

    fn check_token(&self, token: usize) -> Result<(), MlpError> {
        if token >= self.arch.vocab {
            return Err(MlpError::TokenOutOfRange { token, vocab: self.arch.vocab });
        }
        Ok(())
    }

    fn embed_pair(&self, a: usize, b: usize, out: &mut Vec<f64>) {
        let d = self.arch.d_embed;
        out.extend_from_slice(&self.params.embedding[a * d..(a + 1) * d]);
        out.extend_from_slice(&self.params.embedding[b * d..(b + 1) * d]);
    }

    /// Activations at all four layers for one token pair. Pure: the model
    /// is read-only and two identical calls return bit-identical vectors.
    pub fn forward(&self, token_a: usize, token_b: usize) -> Result<Activations, MlpError> {
        let trace = self.forward_trace(&[(token_a, token_b)])?;
        Ok(Activations { a0: trace.a0, h1: trace.h1, h2: trace.h2, logits: trace.logits })
    }

    pub(crate) fn forward_trace(&self, pairs: &[(usize, usize)]) -> Result<BatchTrace, MlpError> {
        let rows = pairs.len();
        let a0_dim = 2 * self.arch.d_embed;
        let mut a0 = Vec::with_capacity(rows * a0_dim);
        for &(a, b) in pairs {
            self.check_token(a)?;
            self.check_token(b)?;
            self.embed_pair(a, b, &mut a0);
        }
        let z1 = affine_batch(&a0, rows, a0_dim, &self.params.w1, &self.params.b1);
        let mut h1 = z1.clone();
        silu_inplace(&mut h1);
        let z2 = affine_batch(&h1, rows, self.arch.d_hidden, &self.params.w2, &self.params.b2);
        let mut h2 = z2.clone();
        silu_inplace(&mut h2);
        let logits = affine_batch(&h2, rows, self.arch.d_hidden, &self.params.w3, &self.params.b3);
        Ok(BatchTrace { rows, a0, z1, h1, z2, h2, logits })
    }

    /// Logit rows for a batch of token pairs.
    pub fn logits_batch(&self, pairs: &[(usize, usize)]) -> Result<Vec<f64>, MlpError> {
        Ok(self.forward_trace(pairs)?.logits)
    }

    /// Runs the sub-network from an interior layer to the logits.
    ///
    /// Feeding layer `k`'s activation from [`MlpModel::forward`] into this
    /// reproduces the full forward logits exactly: both paths execute the
    /// same kernels on the same values.
    pub fn forward_from_layer(&self, layer: usize, activation: &[f64]) -> Result<Vec<f64>, MlpError> {
        self.forward_from_layer_batch(layer, activation, 1)
    }

    /// Batched [`MlpModel::forward_from_layer`]: `xs` holds `rows`
    /// contiguous activation vectors, the result holds `rows` logit
    /// vectors. Row `i` of the result is bit-identical to a single-row
    /// call on row `i` of `xs`.
    pub fn forward_from_layer_batch(
        &self,
        layer: usize,
        xs: &[f64],
        rows: usize,
    ) -> Result<Vec<f64>, MlpError> {
        let width = self.arch.layer_width(layer)?;
        if xs.len() != rows * width {
            return Err(MlpError::ActivationLength {
                layer,
                got: xs.len(),
                expected: rows * width,
            });
        }
        let p = &self.params;
        let d_hidden = self.arch.d_hidden;
        let mut current: Vec<f64>;
        let mut cur_ref: &[f64] = xs;
        if layer == 0 {
            current = affine_batch(cur_ref, rows, width, &p.w1, &p.b1);
            silu_inplace(&mut current);
            cur_ref = &current;
            let mut z2 = affine_batch(cur_ref, rows, d_hidden, &p.w2, &p.b2);
            silu_inplace(&mut z2);
            current = z2;
            cur_ref = &current;
        } else if layer == 1 {
            current = affine_batch(cur_ref, rows, d_hidden, &p.w2, &p.b2);
            silu_inplace(&mut current);
            cur_ref = &current;
        }
        Ok(affine_batch(cur_ref, rows, d_hidden, &p.w3, &p.b3))
    }

    /// Euclidean norm over every parameter (embeddings, weights, biases).
    pub fn l2_norm(&self) -> f64 {
        let mut sum = 0.0;
        for (_, tensor, _) in self.params.tensors() {
            for &v in tensor.iter() {
                sum += v * v;
            }
        }
        sum.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::{TaskKind, TaskSpec};

    fn tiny_arch() -> Architecture {
        Architecture { vocab: 2, d_embed: 1, d_hidden: 2, d_out: 2 }
    }

    #[test]
    fn init_is_seed_deterministic() {
        let spec = TaskSpec::new(TaskKind::ModularAddition);
        let cfg = TrainConfig::default().with_init_seed(7);
        let a = MlpModel::init(&spec, &cfg);
        let b = MlpModel::init(&spec, &cfg);
        assert_eq!(a.params, b.params);
        let c = MlpModel::init(&spec, &cfg.with_init_seed(8));
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn init_biases_are_zero() {
        let spec = TaskSpec::new(TaskKind::ModularAddition);
        let m = MlpModel::init(&spec, &TrainConfig::default());
        assert!(m.params.b1.iter().all(|&b| b == 0.0));
        assert!(m.params.b2.iter().all(|&b| b == 0.0));
        assert!(m.params.b3.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn init_scales_bound_weights() {
        let spec = TaskSpec::new(TaskKind::ModularAddition);
        let m = MlpModel::init(&spec, &TrainConfig::default());
        let bound_w1 = 1.0 / 64f64.sqrt();
        assert!(m.params.w1.iter().all(|&w| w.abs() < bound_w1));
        let bound_emb = 3f64.sqrt() / 32f64.sqrt();
        assert!(m.params.embedding.iter().all(|&e| e.abs() < bound_emb));
    }

    #[test]
    fn zero_model_outputs_zero() {
        let m = MlpModel::zeros(tiny_arch());
        let acts = m.forward(0, 1).unwrap();
        assert!(acts.logits.iter().all(|&v| v == 0.0));
        assert!(acts.h1.iter().all(|&v| v == 0.0)); // silu(0) = 0
    }

    #[test]
    fn forward_matches_hand_computed_chain() {
        // d_embed 1, hidden 2: a0 = (e_a, e_b). Weights chosen so the
        // chain below is short enough to evaluate with a calculator.
        let mut m = MlpModel::zeros(tiny_arch());
        m.params.embedding = vec![0.5, -1.0]; // token 0 -> 0.5, token 1 -> -1.0
        // w1: 2x2, rows are inputs: h_pre = (a0[0] + 2 a0[1], -a0[0]) + b1
        m.params.w1 = vec![1.0, -1.0, 2.0, 0.0];
        m.params.b1 = vec![0.25, 0.5];
        // w2 = identity, b2 = 0: z2 = h1
        m.params.w2 = vec![1.0, 0.0, 0.0, 1.0];
        // w3: first logit = h2[0] - h2[1], second = 3 h2[1] + b3[1]
        m.params.w3 = vec![1.0, 0.0, -1.0, 3.0];
        m.params.b3 = vec![0.0, -0.125];

        let acts = m.forward(0, 1).unwrap();
        // Hand computation (scalar, written out step by step):
        let a0 = [0.5, -1.0];
        let z1 = [0.5 * 1.0 + (-1.0) * 2.0 + 0.25, 0.5 * (-1.0) + 0.5];
        let h1 = [silu(z1[0]), silu(z1[1])];
        let h2 = [silu(h1[0]), silu(h1[1])]; // w2 identity, then silu again
        let logits = [h2[0] * 1.0 + h2[1] * (-1.0), h2[0] * 0.0 + h2[1] * 3.0 - 0.125];
        assert_eq!(acts.a0.as_slice(), &a0);
        assert_eq!(acts.h1.as_slice(), &h1);
        assert_eq!(acts.h2.as_slice(), &h2);
        assert_eq!(acts.logits.as_slice(), &logits);
    }

    #[test]
    fn forward_is_pure_and_bit_stable() {
        let spec = TaskSpec::new(TaskKind::ModularAddition);
        let m = MlpModel::init(&spec, &TrainConfig::default().with_init_seed(3));
        let a = m.forward(4, 9).unwrap();
        let b = m.forward(4, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forward_rejects_out_of_range_token() {
        let m = MlpModel::zeros(tiny_arch());
        assert!(matches!(m.forward(2, 0).unwrap_err(), MlpError::TokenOutOfRange { token: 2, .. }));
    }

    #[test]
    fn from_layer_composition_is_exact() {
        let spec = TaskSpec::new(TaskKind::ModularAddition);
        let m = MlpModel::init(&spec, &TrainConfig::default().with_init_seed(11));
        let acts = m.forward(7, 23).unwrap();
        for layer in 0..=2 {
            let rest = m.forward_from_layer(layer, acts.layer(layer).unwrap()).unwrap();
            assert_eq!(rest, acts.logits, "layer {layer} composition mismatch");
        }
    }

    #[test]
    fn from_layer_two_is_affine_tail() {
        let spec = TaskSpec::new(TaskKind::ModularAddition);
        let mut m = MlpModel::init(&spec, &TrainConfig::default().with_init_seed(2));
        m.params.b3 = (0..31).map(|i| i as f64 * 0.5).collect();
        let zeros = vec![0.0; 100];
        let logits = m.forward_from_layer(2, &zeros).unwrap();
        assert_eq!(logits, m.params.b3);
    }

    #[test]
    fn from_layer_rejects_bad_shapes() {
        let m = MlpModel::zeros(tiny_arch());
        assert!(matches!(
            m.forward_from_layer(1, &[0.0; 3]).unwrap_err(),
            MlpError::ActivationLength { layer: 1, .. }
        ));
        assert!(matches!(m.forward_from_layer(3, &[0.0; 2]).unwrap_err(), MlpError::BadLayerIndex(3)));
    }

    #[test]
    fn batch_rows_match_single_rows() {
        let spec = TaskSpec::new(TaskKind::ModularAddition);
        let m = MlpModel::init(&spec, &TrainConfig::default().with_init_seed(5));
        let pairs = [(0, 1), (30, 5), (17, 17)];
        let batch = m.logits_batch(&pairs).unwrap();
        for (i, &(a, b)) in pairs.iter().enumerate() {
            let single = m.forward(a, b).unwrap().logits;
            assert_eq!(&batch[i * 31..(i + 1) * 31], single.as_slice());
        }
    }

    #[test]
    fn silu_matches_definition_on_grid() {
        let mut x = -20.0;
        while x <= 20.0 {
            let direct = x * sigmoid(x);
            assert!((silu(x) - direct).abs() <= 1e-15);
            x += 0.125;
        }
    }

    #[test]
    fn l2_norm_three_four_five() {
        let mut m = MlpModel::zeros(tiny_arch());
        assert_eq!(m.l2_norm(), 0.0);
        m.params.w1[0] = 3.0;
        m.params.w3[1] = 4.0;
        assert_eq!(m.l2_norm(), 5.0);
    }

    #[test]
    fn l2_norm_squares_are_additive() {
        let spec = TaskSpec::new(TaskKind::ModularAddition);
        let m = MlpModel::init(&spec, &TrainConfig::default().with_init_seed(9));
        let total_sq = m.l2_norm().powi(2);
        let per_tensor: f64 = m
            .params
            .tensors()
            .iter()
            .map(|(_, t, _)| t.iter().map(|v| v * v).sum::<f64>())
            .sum();
        assert!((total_sq - per_tensor).abs() < 1e-9);
    }
}
