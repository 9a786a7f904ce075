use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{contraction_round, explore, Branch, ProtocolTrace, Stage, StageFn, TraceMode};
use crate::error::{Error, Result};
use crate::linalg;
use crate::state::PureState;
use crate::structure::SloccWitness;
use crate::tol;

/// Outcome of a repeat-until-success run.
#[derive(Clone, Debug, Serialize)]
pub struct RusReport {
    /// Exhaustive trace of a single trial over all success/failure patterns.
    pub trace: ProtocolTrace,
    /// Exact probability that one trial succeeds.
    pub single_trial_probability: f64,
    pub trials: usize,
    pub seed: u64,
    /// Index (1-based) of the first successful trial, if any.
    pub first_success: Option<usize>,
    pub successes: usize,
    pub empirical_frequency: f64,
    /// `1 − (1 − p)^n` for `n = trials`.
    pub analytic_bound: f64,
    /// Binomial standard deviation of the empirical frequency.
    pub sigma: f64,
}

impl RusReport {
    /// Deviation of the empirical frequency from `p` in units of `sigma`.
    pub fn deviation_in_sigma(&self) -> f64 {
        if self.sigma == 0.0 {
            if (self.empirical_frequency - self.single_trial_probability).abs() < 1e-12 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.empirical_frequency - self.single_trial_probability).abs() / self.sigma
        }
    }
}

/// Turns an SLOCC witness into a two-outcome local filter per party and
/// repeats it on fresh copies of `s` until it succeeds.
///
/// Each `A_i` is scaled by its largest singular value on the support of `s`,
/// which maximizes the success probability of the product filter.
pub fn repeat_until_success(s: &PureState, witness: &SloccWitness, target: &PureState, max_trials: usize, seed: u64) -> Result<RusReport> {
    if witness.ops.len() != s.parties() || witness.ops.iter().enumerate().any(|(k, op)| op.party != k) {
        return Err(Error::InvalidWitness("witness needs one operator per party, in order".into()));
    }
    if !witness.verifies(s, target) {
        let f = witness.fidelity(s, target).unwrap_or(0.0);
        return Err(Error::InvalidWitness(format!("witness maps the source to overlap {f} with the target")));
    }
    let restricted = witness.restricted_to_support(s)?;
    let mut stages: Vec<StageFn> = Vec::new();
    for op in &restricted.ops {
        let smax = linalg::singular_values(&op.matrix).first().copied().unwrap_or(0.0);
        if smax <= 0.0 {
            return Err(Error::InvalidWitness(format!("operator on party {} vanishes", op.party + 1)));
        }
        let scaled = op.matrix.unscale(smax);
        let round = contraction_round(op.party, scaled, format!("party {}: filter A/σ_max", op.party + 1))?;
        stages.push(Box::new(move |_: &PureState, _: &[usize]| Ok(Stage::Round(round.clone()))));
    }
    let raw = explore(s, &stages)?;
    let branches: Vec<Branch> = raw
        .into_iter()
        .map(|(outcomes, steps, probability, state)| {
            let all_pass = outcomes.iter().all(|&k| k == 0);
            let overlap = if all_pass { state.fidelity(target).unwrap_or(0.0) } else { 0.0 };
            Branch { outcomes, steps, probability, overlap, success: all_pass && overlap >= 1.0 - tol::FID, final_state: None, state: Some(state) }
        })
        .collect();
    let mut trace = ProtocolTrace::from_branches("repeat-until-success", TraceMode::Exhaustive, branches);
    let p = trace.success_probability;
    if p <= 0.0 {
        return Err(Error::InvalidWitness("filter never succeeds".into()));
    }
    // conditional pass probabilities along the success branch
    let success_branch = trace.branches.iter().find(|b| b.success).expect("p > 0");
    let conditional: Vec<f64> = success_branch.steps.iter().map(|st| st.probability).collect();
    trace.notes.push(format!("exact single-trial probability {p:.12}"));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut successes = 0usize;
    let mut first_success = None;
    for t in 0..max_trials {
        let ok = conditional.iter().all(|&q| rng.random::<f64>() < q);
        if ok {
            successes += 1;
            first_success.get_or_insert(t + 1);
        }
    }
    let n = max_trials.max(1) as f64;
    let empirical_frequency = if max_trials == 0 { 0.0 } else { successes as f64 / n };
    Ok(RusReport {
        trace,
        single_trial_probability: p,
        trials: max_trials,
        seed,
        first_success,
        successes,
        empirical_frequency,
        analytic_bound: 1.0 - (1.0 - p).powi(max_trials as i32),
        sigma: (p * (1.0 - p) / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, CMat};
    use crate::state::{ghz, LocalOperator};

    fn theta08() -> PureState {
        PureState::new(vec![2, 2], vec![c(0.8, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.6, 0.0)]).unwrap()
    }

    #[test]
    fn majorization_example_has_p_072() {
        let a = CMat::from_row_slice(2, 2, &[c(0.6 / 0.8, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let w = SloccWitness::new(vec![LocalOperator::new(0, a), LocalOperator::identity(1, 2)]);
        let r = repeat_until_success(&theta08(), &w, &ghz(2, 2), 10_000, 7).unwrap();
        assert!((r.single_trial_probability - 0.72).abs() < 1e-9);
        assert!(r.deviation_in_sigma() < 5.0);
        assert!((r.trace.total_probability - 1.0).abs() < 1e-10);
        assert_eq!(r.trace.branches.len(), 2);
    }

    #[test]
    fn identity_witness_succeeds_first_time() {
        let s = ghz(2, 3);
        let w = SloccWitness::new((0..3).map(|k| LocalOperator::identity(k, 2)).collect());
        let r = repeat_until_success(&s, &w, &s, 10, 0).unwrap();
        assert!((r.single_trial_probability - 1.0).abs() < 1e-12);
        assert_eq!(r.first_success, Some(1));
        assert_eq!(r.successes, 10);
    }

    #[test]
    fn wrong_witness_is_rejected() {
        let w = SloccWitness::new(vec![LocalOperator::identity(0, 2), LocalOperator::identity(1, 2)]);
        assert!(matches!(repeat_until_success(&theta08(), &w, &ghz(2, 2), 10, 0), Err(Error::InvalidWitness(_))));
    }
}
