//! Grokking as compression, measured.
//!
//! This crate trains small multilayer perceptrons on algorithmic tasks
//! (modular addition, S4 composition, bitwise XOR) and tracks a complexity
//! metric, the **linear mapping number** (LMN), alongside the usual
//! accuracy, loss and L2 curves. The LMN is a soft count of how many
//! distinct local linear maps a network implements over a sample set: pairs
//! of samples are linearly interpolated, the straightness of the output
//! curve gives a pairwise linear-connectivity score, and the entropy of the
//! connectivity matrix's normalized eigenvalue spectrum — read as 2 to that
//! entropy — counts the clusters of mutually linear samples.
//!
//! The interesting phenomenon is *grokking*: trained with strong weight
//! decay, these networks first memorize the train split, and only much
//! later snap to perfect test accuracy. Between those two moments the LMN
//! falls steadily, tracking test loss almost linearly: the network is
//! compressing itself toward the general solution long before accuracy
//! shows it.
//!
//! Module map:
//!
//! * [`linalg`] — symmetric Jacobi eigendecomposition, Pearson r²,
//!   Shannon entropy; no external numerics.
//! * [`tasks`] — the three datasets with seeded, reproducible splits.
//! * [`mlp`] — the embedding + three-layer SiLU network, cross-entropy
//!   gradients, AdamW with decoupled decay, checkpoints.
//! * [`lmn`] — interpolation probes, the connectivity matrix, the LMN
//!   itself, and spectral reordering for visualization.
//! * [`runner`] — the experiment loop: training, scheduled measurement,
//!   phase detection, CSV/SVG/PGM artifacts.
//! * [`rng`] — the pinned SplitMix64 generator behind every seed.
//!
//! The `grok-lmn` binary exposes the same machinery as a CLI; see the
//! `run`, `analyze` and `dump-matrix` subcommands.

pub mod linalg;
pub mod lmn;
pub mod mlp;
pub mod rng;
pub mod runner;
pub mod tasks;

#[cfg(doctest)]
mod book;
