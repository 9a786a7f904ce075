//! Numerical tolerances.
//!
//! All computations are exact simulations of small systems, so a failure at
//! these thresholds points at a bug rather than at conditioning.

/// Hermiticity of density operators (max entry deviation).
pub const HERM: f64 = 1e-10;
/// Completeness of a measurement, `Σ M†M = I` (max entry deviation).
pub const POVM: f64 = 1e-10;
/// Unitarity of correction operators (max entry deviation of `U†U − I`).
pub const UNITARY: f64 = 1e-10;
/// Branch probabilities summing to one.
pub const PROB: f64 = 1e-10;
/// Fidelity threshold for "same state up to phase and scale".
pub const FID: f64 = 1e-9;
/// Smallest branch probability that is still considered possible.
pub const ZERO: f64 = 1e-12;
/// Relative eigenvalue cutoff for local ranks.
pub const RANK_EIG: f64 = 1e-9;
/// Relative residual accepted for a tensor rank decomposition.
pub const RANK_FIT: f64 = 1e-8;
/// Slack in the majorization partial sums.
pub const MAJOR: f64 = 1e-10;
/// Relative Frobenius distance between `ρ_ij` and `ρ_i ⊗ ρ_j`.
pub const INDEP: f64 = 1e-9;
/// Purity defect tolerated for a factor of the partition.
pub const PURITY: f64 = 1e-9;
/// Relative singular value cutoff for numerical matrix ranks.
pub const SVD_RANK: f64 = 1e-9;
/// Second normalized Schmidt coefficient that counts as entangled.
pub const ENTANGLED: f64 = 1e-6;
/// Relative tolerance used to group generalized eigenvalues.
pub const EIG_CLUSTER: f64 = 1e-8;
/// Factor norm (relative to the state norm) flagging a border-rank artifact.
pub const BORDER_FACTOR: f64 = 1e6;
