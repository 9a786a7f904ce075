//! Complex CP alternating least squares with seeded restarts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Decomposition, SearchBudget};
use crate::linalg::{self, CMat};
use crate::state::PureState;
use crate::tol;
use crate::C64;

/// Why a restart was abandoned.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Failure {
    NotConverged,
    Stalled,
    /// Residual was shrinking only because the factors diverged.
    BorderRank,
}

pub(crate) struct AlsOutcome {
    pub decomposition: Option<Decomposition>,
    pub border_rank_restarts: usize,
}

/// Restarts run in parallel batches of this size.
const BATCH: usize = 4;

/// Searches for a rank-`r` decomposition of `s`. Restart `k` uses seed
/// `budget.seed + k`; restarts run in fixed batches and the lowest
/// successful index of the first successful batch wins, so the result does
/// not depend on the thread count.
pub(crate) fn search(s: &PureState, r: usize, budget: &SearchBudget) -> AlsOutcome {
    let problem = Problem::new(s);
    let mut border_rank_restarts = 0;
    let mut start = 0;
    while start < budget.restarts {
        let end = (start + BATCH).min(budget.restarts);
        let results: Vec<std::result::Result<Decomposition, Failure>> = (start..end)
            .into_par_iter()
            .map(|k| problem.run(r, budget.iterations, budget.seed.wrapping_add(k as u64)))
            .collect();
        border_rank_restarts += results.iter().filter(|r| matches!(r, Err(Failure::BorderRank))).count();
        if let Some(decomposition) = results.into_iter().find_map(|r| r.ok()) {
            return AlsOutcome { decomposition: Some(decomposition), border_rank_restarts };
        }
        start = end;
    }
    AlsOutcome { decomposition: None, border_rank_restarts }
}

struct Problem {
    dims: Vec<usize>,
    /// Transposed mode unfoldings: rows run over the other parties, columns over the mode.
    unfoldings_t: Vec<CMat>,
    norm: f64,
}

impl Problem {
    fn new(s: &PureState) -> Self {
        let unfoldings_t = (0..s.parties())
            .map(|k| s.matricize(&[k]).expect("valid party").transpose())
            .collect();
        Self { dims: s.dims().to_vec(), unfoldings_t, norm: s.norm() }
    }

    fn khatri_rao(&self, factors: &[CMat], skip: usize, r: usize) -> CMat {
        let others: Vec<usize> = (0..self.dims.len()).filter(|&m| m != skip).collect();
        let rows: usize = others.iter().map(|&m| self.dims[m]).product();
        let mut k = CMat::from_element(rows, r, C64::new(1.0, 0.0));
        let mut idx = vec![0usize; others.len()];
        for row in 0..rows {
            let mut rem = row;
            for p in (0..others.len()).rev() {
                idx[p] = rem % self.dims[others[p]];
                rem /= self.dims[others[p]];
            }
            for col in 0..r {
                let mut v = C64::new(1.0, 0.0);
                for (p, &m) in others.iter().enumerate() {
                    v *= factors[m][(idx[p], col)];
                }
                k[(row, col)] = v;
            }
        }
        k
    }

    fn run(&self, r: usize, iterations: usize, seed: u64) -> std::result::Result<Decomposition, Failure> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.dims.len();
        let mut factors: Vec<CMat> = self.dims.iter().map(|&d| linalg::random_matrix(d, r, &mut rng)).collect();
        let mut history: Vec<f64> = Vec::with_capacity(iterations);
        let mut residual = f64::INFINITY;
        let mut polish = 0usize;
        for it in 0..iterations {
            for mode in 0..n {
                let k = self.khatri_rao(&factors, mode, r);
                let rhs = &self.unfoldings_t[mode];
                let x = lstsq(&k, rhs);
                if mode == n - 1 {
                    residual = linalg::frobenius(&(&k * &x - rhs)) / self.norm;
                }
                factors[mode] = x.transpose();
            }
            balance(&mut factors, r);
            if self.diverged(&factors, r) {
                return Err(Failure::BorderRank);
            }
            if !residual.is_finite() {
                return Err(Failure::NotConverged);
            }
            if residual < tol::RANK_FIT {
                // a few extra sweeps tighten the witness well below the threshold
                polish += 1;
                if residual < 1e-13 || polish > 200 {
                    break;
                }
            }
            history.push(residual);
            if it >= 200 && it % 50 == 0 && polish == 0 {
                let past = history[it - 100];
                if residual > 1e-4 && residual > 0.9999 * past {
                    return Err(Failure::Stalled);
                }
            }
        }
        if residual >= tol::RANK_FIT {
            return Err(Failure::NotConverged);
        }
        let terms = (0..r)
            .map(|col| factors.iter().map(|f| f.column(col).iter().copied().collect()).collect())
            .collect();
        Ok(Decomposition { dims: self.dims.clone(), terms })
    }

    fn diverged(&self, factors: &[CMat], r: usize) -> bool {
        (0..r).any(|col| {
            let term_norm: f64 = factors.iter().map(|f| f.column(col).norm()).product();
            term_norm > tol::BORDER_FACTOR * self.norm
        })
    }
}

/// Least-squares solution of `k · x = rhs` via a truncated SVD.
fn lstsq(k: &CMat, rhs: &CMat) -> CMat {
    linalg::pinv(k, 1e-13) * rhs
}

/// Spreads each term's norm evenly over its factors.
fn balance(factors: &mut [CMat], r: usize) {
    let n = factors.len() as f64;
    for col in 0..r {
        let norms: Vec<f64> = factors.iter().map(|f| f.column(col).norm()).collect();
        if norms.contains(&0.0) {
            continue;
        }
        let target = norms.iter().map(|x| x.ln()).sum::<f64>() / n;
        for (f, nrm) in factors.iter_mut().zip(&norms) {
            let scale = (target - nrm.ln()).exp();
            f.column_mut(col).scale_mut(scale);
        }
    }
}
