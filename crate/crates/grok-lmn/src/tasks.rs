//! The three algorithmic datasets: modular addition, S4 composition,
//! bitwise XOR.
//!
//! Each task enumerates every ordered token pair `(a, b)` over its
//! vocabulary and labels it with the task operation. The train/test split
//! shuffles all `v^2` indices with a [`SplitMix64`](crate::rng::SplitMix64)
//! Fisher-Yates seeded by `split_seed` and takes the first
//! `floor(train_fraction * v^2)` as the train set, so a seed pins the split
//! bit for bit.

use std::io::Write;

use thiserror::Error;

use crate::rng::SplitMix64;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("modulus must be at least 2, got {0}")]
    ModulusTooSmall(u32),
    #[error("digits must be at least 1, got {0}")]
    DigitsTooSmall(u32),
    #[error("train_fraction must lie strictly between 0 and 1, got {0}")]
    BadTrainFraction(f64),
    #[error("writing dataset: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum TaskKind {
    /// `label = (a + b) mod m`.
    ModularAddition,
    /// `label = index of (sigma_a . sigma_b)` over the 24 permutations of S4.
    PermutationS4,
    /// `label = a XOR b` over `digits`-bit integers.
    BitwiseXor,
}

impl TaskKind {
    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::ModularAddition => "modular-addition",
            TaskKind::PermutationS4 => "permutation-s4",
            TaskKind::BitwiseXor => "bitwise-xor",
        }
    }
}

/// Which task to generate and how to split it.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Modulus for [`TaskKind::ModularAddition`]; ignored otherwise.
    pub modulus: u32,
    /// Bit width for [`TaskKind::BitwiseXor`]; ignored otherwise.
    pub digits: u32,
    pub train_fraction: f64,
    pub split_seed: u64,
}

impl TaskSpec {
    pub fn new(kind: TaskKind) -> Self {
        Self { kind, modulus: 31, digits: 5, train_fraction: 0.8, split_seed: 0 }
    }

    pub fn with_split_seed(mut self, seed: u64) -> Self {
        self.split_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        match self.kind {
            TaskKind::ModularAddition if self.modulus < 2 => {
                return Err(TaskError::ModulusTooSmall(self.modulus));
            }
            TaskKind::BitwiseXor if self.digits < 1 => {
                return Err(TaskError::DigitsTooSmall(self.digits));
            }
            _ => {}
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(TaskError::BadTrainFraction(self.train_fraction));
        }
        Ok(())
    }

    /// Vocabulary size: the modulus, 24, or `2^digits`.
    pub fn vocab_size(&self) -> usize {
        match self.kind {
            TaskKind::ModularAddition => self.modulus as usize,
            TaskKind::PermutationS4 => 24,
            TaskKind::BitwiseXor => 1usize << self.digits,
        }
    }
}

/// All `v^2` labelled pairs of one task plus the seeded split.
#[derive(Debug, Clone)]
pub struct TaskDataset {
    pub spec: TaskSpec,
    /// Ordered pairs, enumerated row-major: `(a, b)` for `a` in `0..v`,
    /// `b` in `0..v`.
    pub inputs: Vec<(usize, usize)>,
    pub labels: Vec<usize>,
    /// Sorted ascending; disjoint from `test_indices` and jointly covering
    /// `0..v^2`.
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

impl TaskDataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.spec.vocab_size()
    }

    /// `(token_a, token_b, label)` triples for the given index list.
    pub fn batch(&self, indices: &[usize]) -> Vec<(usize, usize, usize)> {
        indices.iter().map(|&i| (self.inputs[i].0, self.inputs[i].1, self.labels[i])).collect()
    }

    pub fn train_inputs(&self) -> Vec<(usize, usize)> {
        self.train_indices.iter().map(|&i| self.inputs[i]).collect()
    }

    pub fn test_inputs(&self) -> Vec<(usize, usize)> {
        self.test_indices.iter().map(|&i| self.inputs[i]).collect()
    }

    /// Plain-text CSV with columns `token_a,token_b,label,split`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), TaskError> {
        let mut is_train = vec![false; self.len()];
        for &i in &self.train_indices {
            is_train[i] = true;
        }
        writeln!(w, "token_a,token_b,label,split")?;
        for (i, ((a, b), label)) in self.inputs.iter().zip(&self.labels).enumerate() {
            let split = if is_train[i] { "train" } else { "test" };
            writeln!(w, "{a},{b},{label},{split}")?;
        }
        Ok(())
    }
}

/// The 24 permutations of `{0,1,2,3}` in lexicographic order of their
/// one-line notation, so index 0 is the identity `[0,1,2,3]` and index 23
/// is `[3,2,1,0]`.
pub fn s4_elements() -> Vec<[usize; 4]> {
    let mut elems = Vec::with_capacity(24);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    let mut seen = [false; 4];
                    p.iter().for_each(|&x| seen[x] = true);
                    if seen.iter().all(|&s| s) {
                        elems.push(p);
                    }
                }
            }
        }
    }
    elems
}

/// Composition `(sigma_a . sigma_b)(x) = sigma_a(sigma_b(x))`.
pub fn s4_compose(a: &[usize; 4], b: &[usize; 4]) -> [usize; 4] {
    [a[b[0]], a[b[1]], a[b[2]], a[b[3]]]
}

fn label_for(spec: &TaskSpec, a: usize, b: usize, s4: &[[usize; 4]]) -> usize {
    match spec.kind {
        TaskKind::ModularAddition => (a + b) % spec.modulus as usize,
        TaskKind::PermutationS4 => {
            let composed = s4_compose(&s4[a], &s4[b]);
            s4.iter().position(|p| *p == composed).expect("composition stays in S4")
        }
        TaskKind::BitwiseXor => a ^ b,
    }
}

/// Enumerates and labels all `v^2` pairs and performs the seeded split.
pub fn generate(spec: &TaskSpec) -> Result<TaskDataset, TaskError> {
    spec.validate()?;
    let v = spec.vocab_size();
    let s4 = s4_elements();
    let mut inputs = Vec::with_capacity(v * v);
    let mut labels = Vec::with_capacity(v * v);
    for a in 0..v {
        for b in 0..v {
            inputs.push((a, b));
            labels.push(label_for(spec, a, b, &s4));
        }
    }
    let (train_count, _) = split_counts(spec)?;
    let mut order: Vec<usize> = (0..v * v).collect();
    SplitMix64::new(spec.split_seed).shuffle(&mut order);
    let mut train_indices = order[..train_count].to_vec();
    let mut test_indices = order[train_count..].to_vec();
    train_indices.sort_unstable();
    test_indices.sort_unstable();
    Ok(TaskDataset { spec: *spec, inputs, labels, train_indices, test_indices })
}

/// `(floor(train_fraction * v^2), v^2 - floor(train_fraction * v^2))`.
pub fn split_counts(spec: &TaskSpec) -> Result<(usize, usize), TaskError> {
    spec.validate()?;
    let total = spec.vocab_size() * spec.vocab_size();
    let train = (spec.train_fraction * total as f64).floor() as usize;
    Ok((train, total - train))
}
