//! Exact branch-by-branch simulation of LOCC protocols.
//!
//! A protocol is a list of stages. Each stage looks at the current post-state
//! and the outcomes seen so far and returns either a measurement round or a
//! deterministic local step. [`explore`] enumerates every branch with nonzero
//! probability; [`follow`] walks a single branch.

mod extract;
mod merge;
pub mod plan;
mod rsep;
mod rus;
mod teleport;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::state::{LocalOperator, MeasurementRound, PureState, StateFile};
use crate::tol;

pub use extract::{bell_extract, bell_extract_pair, ExtractBudget};
pub use merge::ghz_merge;
pub use plan::{McPlan, PlanKind};
pub use rsep::{ghz_to_reduced_separable, reduced_separable_from_ghz, ReducedSeparable};
pub use rus::{repeat_until_success, RusReport};
pub use teleport::{teleport, teleport_in_place};

/// One recorded step of a branch.
#[derive(Clone, Debug, Serialize)]
pub struct Step {
    pub round: String,
    pub outcome: usize,
    /// Probability of this outcome given the branch so far.
    pub probability: f64,
    pub checksum: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Branch {
    pub outcomes: Vec<usize>,
    pub steps: Vec<Step>,
    pub probability: f64,
    pub overlap: f64,
    pub success: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_state: Option<StateFile>,
    #[serde(skip)]
    pub state: Option<PureState>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TraceMode {
    Exhaustive,
    Sampled { seed: u64 },
    /// Only the branch selecting the given outcome at every round is kept.
    PostSelected,
    /// Several sub-protocols run in sequence; each was verified exhaustively
    /// and one representative branch was carried forward.
    Composite,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProtocolTrace {
    pub protocol: String,
    pub mode: TraceMode,
    pub branches: Vec<Branch>,
    pub total_probability: f64,
    pub success_probability: f64,
    /// Smallest fidelity with the target over the successful branches.
    pub final_overlap: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ProtocolTrace {
    fn from_branches(protocol: &str, mode: TraceMode, branches: Vec<Branch>) -> Self {
        let total_probability = branches.iter().map(|b| b.probability).sum();
        let success_probability = branches.iter().filter(|b| b.success).map(|b| b.probability).sum();
        let final_overlap = branches
            .iter()
            .filter(|b| b.success)
            .map(|b| b.overlap)
            .fold(f64::INFINITY, f64::min);
        let final_overlap = if final_overlap.is_finite() { final_overlap } else { 0.0 };
        Self { protocol: protocol.into(), mode, branches, total_probability, success_probability, final_overlap, notes: Vec::new() }
    }

    /// Whether every branch reached the target (probabilities summing to one).
    pub fn deterministic_success(&self) -> bool {
        (self.total_probability - 1.0).abs() <= tol::PROB
            && self.branches.iter().all(|b| b.success)
            && (self.success_probability - 1.0).abs() <= tol::PROB
    }

    pub fn min_overlap(&self) -> f64 {
        self.branches.iter().map(|b| b.overlap).fold(f64::INFINITY, f64::min)
    }

    /// Includes the final post-state of every branch in the serialized form.
    pub fn with_states(mut self) -> Self {
        for b in self.branches.iter_mut() {
            b.final_state = b.state.as_ref().map(|s| s.to_file());
        }
        self
    }

    /// One branch of an exhaustive trace drawn with the branch probabilities.
    pub fn sampled(&self, seed: u64) -> Result<Self> {
        if self.mode != TraceMode::Exhaustive {
            return Err(Error::InvalidParameter("only exhaustive traces can be sampled".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let options: Vec<(usize, f64)> = self.branches.iter().map(|b| b.probability).enumerate().collect();
        let k = sample_choice(&mut rng, &options).ok_or_else(|| Error::ProtocolFailure("empty trace".into()))?;
        let branch = self.branches[k].clone();
        let success = branch.success;
        let mut out = Self::from_branches(&self.protocol, TraceMode::Sampled { seed }, vec![branch]);
        out.total_probability = 1.0;
        out.success_probability = if success { 1.0 } else { 0.0 };
        out.notes = self.notes.clone();
        Ok(out)
    }

    /// Fidelity of every branch's final state with `target` recomputed.
    pub fn reverify(&self, target: &PureState) -> bool {
        self.branches
            .iter()
            .filter(|b| b.success)
            .all(|b| b.state.as_ref().and_then(|s| s.fidelity(target).ok()).is_some_and(|f| f >= 1.0 - tol::FID))
    }
}

pub(crate) enum Stage {
    Round(MeasurementRound),
    Local { ops: Vec<LocalOperator>, description: String },
    Drop { party: usize, description: String },
}

pub(crate) type StageFn<'a> = Box<dyn Fn(&PureState, &[usize]) -> Result<Stage> + Sync + 'a>;

/// Measurement round `{V, √(1 − V†V)}` for a contraction `V`; outcome 0 is `V`.
pub(crate) fn contraction_round(party: usize, v: CMat, description: impl Into<String>) -> Result<MeasurementRound> {
    let n = v.ncols();
    let gram = v.adjoint() * &v;
    let rest = linalg::identity(n) - &gram;
    let (vals, _) = linalg::hermitian_eigen(&rest);
    if vals.last().copied().unwrap_or(0.0) < -1e-9 {
        return Err(Error::InvalidParameter("operator is not a contraction".into()));
    }
    let mut elements = vec![v];
    if linalg::max_abs(&rest) > 1e-14 {
        elements.push(linalg::psd_sqrt(&rest));
    }
    Ok(MeasurementRound::new(party, elements, description))
}

/// Outcome `k` of a round applied to `state`: probability and corrected post-state.
fn branch_of(state: &PureState, round: &MeasurementRound, k: usize) -> Result<Option<(f64, PureState)>> {
    let post = state.apply_local_unchecked(&round.elements[k])?;
    let p = post.norm_sqr() / state.norm_sqr();
    if p < tol::ZERO {
        return Ok(None);
    }
    let mut post = post;
    for c in round.corrections.get(k).into_iter().flatten() {
        post = post.apply_local(c)?;
    }
    Ok(Some((p, post)))
}

fn apply_stage(state: &PureState, stage: Stage) -> Result<Vec<(usize, String, f64, PureState)>> {
    match stage {
        Stage::Round(round) => {
            round.validate(state)?;
            let mut out = Vec::new();
            for k in 0..round.elements.len() {
                if let Some((p, post)) = branch_of(state, &round, k)? {
                    out.push((k, round.description.clone(), p, post));
                }
            }
            Ok(out)
        }
        Stage::Local { ops, description } => {
            for op in &ops {
                if !op.is_unitary() {
                    return Err(Error::NonUnitaryCorrection(description));
                }
            }
            Ok(vec![(0, description, 1.0, state.apply_all(&ops)?)])
        }
        Stage::Drop { party, description } => Ok(vec![(0, description, 1.0, state.drop_trivial_party(party)?)]),
    }
}

/// Enumerates every branch with nonzero probability.
pub(crate) fn explore(initial: &PureState, stages: &[StageFn]) -> Result<Vec<(Vec<usize>, Vec<Step>, f64, PureState)>> {
    let mut out = Vec::new();
    let mut stack = vec![(initial.clone(), Vec::new(), Vec::new(), 1.0)];
    while let Some((state, path, steps, prob)) = stack.pop() {
        let depth = path.len();
        if depth == stages.len() {
            out.push((path, steps, prob, state));
            continue;
        }
        let stage = stages[depth](&state, &path)?;
        let children = apply_stage(&state, stage)?;
        for (k, desc, p, post) in children.into_iter().rev() {
            let mut path = path.clone();
            path.push(k);
            let mut steps: Vec<Step> = steps.clone();
            steps.push(Step { round: desc, outcome: k, probability: p, checksum: post.checksum() });
            stack.push((post, path, steps, prob * p));
        }
    }
    Ok(out)
}

/// Follows one branch, choosing outcomes with `choose(depth, probabilities)`.
pub(crate) fn follow(
    initial: &PureState,
    stages: &[StageFn],
    mut choose: impl FnMut(usize, &[(usize, f64)]) -> Option<usize>,
) -> Result<Option<(Vec<usize>, Vec<Step>, f64, PureState)>> {
    let mut state = initial.clone();
    let mut path = Vec::new();
    let mut steps = Vec::new();
    let mut prob = 1.0;
    for (depth, stage_fn) in stages.iter().enumerate() {
        let children = apply_stage(&state, stage_fn(&state, &path)?)?;
        let options: Vec<(usize, f64)> = children.iter().map(|c| (c.0, c.2)).collect();
        let Some(pick) = choose(depth, &options) else {
            return Ok(None);
        };
        let Some((k, desc, p, post)) = children.into_iter().find(|c| c.0 == pick) else {
            return Ok(None);
        };
        path.push(k);
        steps.push(Step { round: desc, outcome: k, probability: p, checksum: post.checksum() });
        prob *= p;
        state = post;
    }
    Ok(Some((path, steps, prob, state)))
}

pub(crate) fn sample_choice(rng: &mut ChaCha8Rng, options: &[(usize, f64)]) -> Option<usize> {
    let total: f64 = options.iter().map(|o| o.1).sum();
    let mut x = rng.random::<f64>() * total;
    for &(k, p) in options {
        if x < p {
            return Some(k);
        }
        x -= p;
    }
    options.last().map(|o| o.0)
}

/// Runs `stages` exhaustively and scores every branch against `target`.
pub(crate) fn run_exhaustive(
    protocol: &str,
    initial: &PureState,
    stages: &[StageFn],
    target: &PureState,
) -> Result<ProtocolTrace> {
    let raw = explore(initial, stages)?;
    let branches = raw
        .into_iter()
        .map(|(outcomes, steps, probability, state)| {
            let overlap = state.fidelity(target).unwrap_or(0.0);
            Branch { outcomes, steps, probability, overlap, success: overlap >= 1.0 - tol::FID, final_state: None, state: Some(state) }
        })
        .collect();
    Ok(ProtocolTrace::from_branches(protocol, TraceMode::Exhaustive, branches))
}

/// Shift `|j⟩ → |j + k mod d⟩`.
pub(crate) fn shift(d: usize, k: isize) -> CMat {
    let mut m = CMat::zeros(d, d);
    for j in 0..d {
        let t = (j as isize + k).rem_euclid(d as isize) as usize;
        m[(t, j)] = linalg::c(1.0, 0.0);
    }
    m
}

/// Phase `|j⟩ → ω^{jk}|j⟩` with `ω = e^{2πi/d}`.
pub(crate) fn clock(d: usize, k: isize) -> CMat {
    let mut m = CMat::zeros(d, d);
    for j in 0..d {
        let angle = 2.0 * std::f64::consts::PI * ((j as isize * k).rem_euclid(d as isize)) as f64 / d as f64;
        m[(j, j)] = num_complex::Complex64::from_polar(1.0, angle);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_and_clock_satisfy_weyl_relation() {
        let d = 3;
        let x = shift(d, 1);
        let z = clock(d, 1);
        let w = num_complex::Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
        // Z X = ω X Z
        let lhs = &z * &x;
        let rhs = (&x * &z) * w;
        assert!(linalg::max_abs(&(lhs - rhs)) < 1e-14);
        assert!(linalg::max_abs(&(shift(d, -1) * shift(d, 1) - linalg::identity(d))) < 1e-15);
    }

    #[test]
    fn contraction_round_is_complete() {
        let v = CMat::from_row_slice(1, 2, &[linalg::c(0.6, 0.0), linalg::c(0.0, 0.8)]);
        let r = contraction_round(0, v, "test").unwrap();
        assert!(r.completeness_defect() < 1e-14);
        let too_big = linalg::identity(2).scale(1.5);
        assert!(contraction_round(0, too_big, "bad").is_err());
    }
}
