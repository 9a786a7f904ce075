use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{contraction_round, follow, Branch, ProtocolTrace, Stage, StageFn, TraceMode};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::state::{ghz, LocalOperator, MeasurementRound, PureState};
use crate::structure::is_independent;
use crate::{tol, C64};

/// Search budget for [`bell_extract`].
#[derive(Clone, Copy, Debug)]
pub struct ExtractBudget {
    /// Largest number of deterministic candidates tried.
    pub deterministic: usize,
    /// Number of random product projections tried afterwards.
    pub random: usize,
    pub seed: u64,
}

impl Default for ExtractBudget {
    fn default() -> Self {
        Self { deterministic: 4096, random: 256, seed: 0 }
    }
}

fn basis(d: usize, k: usize) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); d];
    v[k] = C64::new(1.0, 0.0);
    v
}

fn uniform(d: usize) -> Vec<C64> {
    vec![C64::new(1.0 / (d as f64).sqrt(), 0.0); d]
}

/// Enumerates assignments of candidate vectors to the listed parties.
fn assignments(options: &[Vec<Vec<C64>>], limit: usize, keep: impl Fn(&[usize]) -> bool) -> Vec<Vec<Vec<C64>>> {
    let mut out = Vec::new();
    let mut idx = vec![0usize; options.len()];
    loop {
        if out.len() >= limit {
            break;
        }
        if keep(&idx) {
            out.push(idx.iter().zip(options).map(|(&k, o)| o[k].clone()).collect());
        }
        let mut t = options.len();
        loop {
            if t == 0 {
                return out;
            }
            t -= 1;
            idx[t] += 1;
            if idx[t] < options[t].len() {
                break;
            }
            idx[t] = 0;
        }
    }
    out
}

/// Contracts every party except `i`, `j` with `⟨v_k|` and returns the residual
/// two-party state (parties in ascending order).
fn residual(s: &PureState, others: &[usize], vecs: &[Vec<C64>]) -> Result<Option<PureState>> {
    let mut r = s.clone();
    for (&k, v) in others.iter().zip(vecs) {
        let row = CMat::from_fn(1, v.len(), |_, c| v[c].conj());
        r = r.apply_local_unchecked(&LocalOperator::new(k, row))?;
    }
    if r.norm_sqr() <= tol::ZERO * tol::ZERO * s.norm_sqr() {
        return Ok(None);
    }
    for &k in others.iter().rev() {
        r = r.drop_trivial_party(k)?;
    }
    Ok(Some(r))
}

fn schmidt_pair(r: &PureState) -> Result<(CMat, Vec<f64>, CMat)> {
    let m = r.normalized().matricize(&[0])?;
    Ok(linalg::svd_sorted(&m))
}

struct Candidate {
    vecs: Vec<Vec<C64>>,
    tier: &'static str,
}

fn find_projection(s: &PureState, i: usize, j: usize, budget: &ExtractBudget) -> Result<Option<(Candidate, usize)>> {
    let others: Vec<usize> = (0..s.parties()).filter(|&k| k != i && k != j).collect();
    let dims = s.dims();
    let basis_opts: Vec<Vec<Vec<C64>>> = others.iter().map(|&k| (0..dims[k]).map(|t| basis(dims[k], t)).collect()).collect();
    let mixed_opts: Vec<Vec<Vec<C64>>> = others
        .iter()
        .map(|&k| (0..dims[k]).map(|t| basis(dims[k], t)).chain(std::iter::once(uniform(dims[k]))).collect())
        .collect();
    let mut tried = 0usize;
    let check = |vecs: &[Vec<C64>]| -> Result<bool> {
        let Some(r) = residual(s, &others, vecs)? else {
            return Ok(false);
        };
        let (_, sv, _) = schmidt_pair(&r)?;
        let lambda2 = sv.get(1).map(|x| x * x).unwrap_or(0.0);
        Ok(lambda2 > tol::ENTANGLED)
    };

    let tier1 = assignments(&basis_opts, budget.deterministic, |_| true);
    for vecs in tier1 {
        tried += 1;
        if check(&vecs)? {
            return Ok(Some((Candidate { vecs, tier: "computational basis" }, tried)));
        }
    }
    let remaining = budget.deterministic.saturating_sub(tried);
    let tier2 = assignments(&mixed_opts, remaining, |idx| {
        idx.iter().zip(&others).any(|(&t, &k)| t == dims[k])
    });
    for vecs in tier2 {
        tried += 1;
        if check(&vecs)? {
            return Ok(Some((Candidate { vecs, tier: "basis and uniform superpositions" }, tried)));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    for _ in 0..budget.random {
        tried += 1;
        let vecs: Vec<Vec<C64>> = others.iter().map(|&k| linalg::random_unit_vector(dims[k], &mut rng)).collect();
        if check(&vecs)? {
            return Ok(Some((Candidate { vecs, tier: "random product projection" }, tried)));
        }
    }
    Ok(None)
}

/// Extracts a Bell pair between parties `i` and `j` by SLOCC: rank-one
/// projections on every other party followed by local filters on `i` and `j`.
///
/// The trace follows the successful branch; its probability is the SLOCC
/// success probability. Returns `None` when the search budget runs out.
pub fn bell_extract(s: &PureState, i: usize, j: usize, budget: &ExtractBudget) -> Result<Option<ProtocolTrace>> {
    Ok(bell_extract_pair(s, i, j, budget)?.map(|(t, _)| t))
}

/// Like [`bell_extract`] and also returns the extracted pair as a two-party
/// state on `(min(i,j), max(i,j))`.
pub fn bell_extract_pair(s: &PureState, i: usize, j: usize, budget: &ExtractBudget) -> Result<Option<(ProtocolTrace, PureState)>> {
    s.check_party(i)?;
    s.check_party(j)?;
    if i == j {
        return Err(Error::InvalidParameter("bell_extract needs two distinct parties".into()));
    }
    if is_independent(s, i, j)? {
        return Err(Error::HypothesisViolated(format!("parties {} and {} are independent", i + 1, j + 1)));
    }
    let (i, j) = (i.min(j), i.max(j));
    let others: Vec<usize> = (0..s.parties()).filter(|&k| k != i && k != j).collect();
    let Some((cand, tried)) = find_projection(s, i, j, budget)? else {
        return Ok(None);
    };
    let r = residual(s, &others, &cand.vecs)?.expect("candidate has a nonzero residual");
    let (u, sv, vh) = schmidt_pair(&r)?;
    let (di, dj) = (s.dims()[i], s.dims()[j]);
    let s2 = sv[1];
    let one = C64::new(1.0, 0.0);
    // M_i = Σ_k (s_2/s_k)|k⟩⟨u_k|, M_j = Σ_k |k⟩⟨w_k| with w_k the rows of V†
    let mi = CMat::from_fn(2, di, |k, c| u[(c, k)].conj() * (s2 / sv[k]));
    let mj = CMat::from_fn(2, dj, |k, c| vh[(k, c)].conj());

    let mut stages: Vec<StageFn> = Vec::new();
    for (&k, v) in others.iter().zip(&cand.vecs) {
        let proj = CMat::from_fn(v.len(), v.len(), |r, c| v[r] * v[c].conj());
        let rest = linalg::identity(v.len()) - &proj;
        let round = MeasurementRound::new(k, vec![proj, rest], format!("party {}: rank-one projection", k + 1));
        stages.push(Box::new(move |_: &PureState, _: &[usize]| Ok(Stage::Round(round.clone()))));
    }
    let ri = contraction_round(i, mi, format!("party {}: Schmidt filter", i + 1))?;
    let rj = contraction_round(j, mj, format!("party {}: Schmidt basis map", j + 1))?;
    stages.push(Box::new(move |_: &PureState, _: &[usize]| Ok(Stage::Round(ri.clone()))));
    stages.push(Box::new(move |_: &PureState, _: &[usize]| Ok(Stage::Round(rj.clone()))));

    let (outcomes, steps, probability, state) =
        follow(s, &stages, |_, opts| opts.iter().any(|o| o.0 == 0).then_some(0))?
            .ok_or_else(|| Error::ProtocolFailure("filtering branch has zero probability".into()))?;

    let bell = ghz(2, 2);
    // target: Bell on (i, j), the projected vectors elsewhere
    let mut vec_iter = cand.vecs.iter();
    let mut target_vectors: Vec<Vec<C64>> = Vec::new();
    for k in 0..s.parties() {
        if k == i || k == j {
            target_vectors.push(vec![one]);
        } else {
            target_vectors.push(vec_iter.next().expect("one vector per other party").clone());
        }
    }
    let base = PureState::product(&target_vectors)?;
    let target = {
        let mut dims = s.dims().to_vec();
        dims[i] = 2;
        dims[j] = 2;
        let mut amps = vec![C64::new(0.0, 0.0); dims.iter().product()];
        for (idx, &a) in base.amps().iter().enumerate() {
            if a.norm_sqr() == 0.0 {
                continue;
            }
            let mut multi = vec![0usize; s.parties()];
            crate::state::unflatten(base.dims(), idx, &mut multi);
            for t in 0..2 {
                multi[i] = t;
                multi[j] = t;
                amps[crate::state::flatten(&dims, &multi)] += a * bell.amps()[t * 3];
            }
        }
        PureState::new(dims, amps)?
    };
    let overlap = state.fidelity(&target)?;
    let success = overlap >= 1.0 - tol::FID;
    let pair = {
        let mut p = state.clone();
        for (&k, v) in others.iter().zip(&cand.vecs) {
            let row = CMat::from_fn(1, v.len(), |_, c| v[c].conj());
            p = p.apply_local(&LocalOperator::new(k, row))?;
        }
        for &k in others.iter().rev() {
            p = p.drop_trivial_party(k)?;
        }
        p
    };
    let branch = Branch { outcomes, steps, probability, overlap, success, final_state: None, state: Some(state) };
    let mut trace = ProtocolTrace::from_branches("bell-extract", TraceMode::PostSelected, vec![branch]);
    trace.total_probability = probability;
    trace.notes.push(format!(
        "parties ({}, {}); projection found by {} after {tried} candidate(s); residual Schmidt coefficients {:?}",
        i + 1,
        j + 1,
        cand.tier,
        sv.iter().take(2).map(|x| x * x).collect::<Vec<_>>()
    ));
    if !success {
        return Err(Error::ProtocolFailure(format!("Bell extraction reached overlap {overlap}")));
    }
    Ok(Some((trace, pair)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w() -> PureState {
        PureState::from_kets(vec![2, 2, 2], &["001", "010", "100"]).unwrap()
    }

    #[test]
    fn w_extraction_projects_party_three_on_zero() {
        let (t, pair) = bell_extract_pair(&w(), 0, 1, &ExtractBudget::default()).unwrap().unwrap();
        assert!((t.success_probability - 2.0 / 3.0).abs() < 1e-12, "{}", t.success_probability);
        assert!(pair.fidelity(&ghz(2, 2)).unwrap() > 1.0 - 1e-12);
        // the filter step is a unitary, so its conditional probability is one
        let last = t.branches[0].steps.last().unwrap();
        assert!((last.probability - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ghz_extraction_uses_superposition() {
        let t = bell_extract(&ghz(2, 3), 0, 1, &ExtractBudget::default()).unwrap().unwrap();
        assert!((t.success_probability - 0.5).abs() < 1e-12);
        assert!(t.notes[0].contains("uniform"));
    }

    #[test]
    fn independent_parties_are_rejected() {
        let s = PureState::from_kets(vec![2, 2], &["00", "01"]).unwrap();
        assert!(matches!(bell_extract(&s, 0, 1, &ExtractBudget::default()), Err(Error::HypothesisViolated(_))));
    }

    #[test]
    fn empty_budget_gives_none() {
        let b = ExtractBudget { deterministic: 0, random: 0, seed: 0 };
        assert!(bell_extract(&ghz(2, 3), 0, 2, &b).unwrap().is_none());
    }

    #[test]
    fn unequal_schmidt_coefficients_are_filtered() {
        let s = PureState::from_terms(
            vec![2, 3, 2],
            &[(vec![0, 0, 0], C64::new(0.9, 0.0)), (vec![1, 2, 0], C64::new(0.3, 0.1)), (vec![1, 1, 1], C64::new(0.5, 0.0))],
        )
        .unwrap();
        let (t, pair) = bell_extract_pair(&s, 0, 1, &ExtractBudget::default()).unwrap().unwrap();
        assert!(t.success_probability > 0.0 && t.success_probability < 1.0);
        assert!(pair.fidelity(&ghz(2, 2)).unwrap() > 1.0 - 1e-10);
    }
}
