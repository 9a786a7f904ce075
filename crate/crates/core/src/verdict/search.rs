//! Numerical searches for local-operator witnesses.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::linalg::{self, CMat};
use crate::state::{LocalOperator, PureState};
use crate::structure::SloccWitness;

/// Applies every operator except the one on `skip`.
fn apply_others(s: &PureState, ops: &[CMat], skip: usize) -> Result<PureState> {
    let mut t = s.clone();
    for (j, m) in ops.iter().enumerate() {
        if j != skip {
            t = t.apply_local_unchecked(&LocalOperator::new(j, m.clone()))?;
        }
    }
    Ok(t)
}

fn to_witness(ops: Vec<CMat>) -> SloccWitness {
    SloccWitness::new(ops.into_iter().enumerate().map(|(i, m)| LocalOperator::new(i, m)).collect())
}

/// Largest ratio `Π‖A_i‖ · ‖a‖ / ‖⊗A_i a‖` accepted from a search.
const MAX_CANCELLATION: f64 = 1e4;
/// Fidelity a search must reach; stricter than the verification tolerance so
/// that approximations through diverging operators are not accepted.
const SEARCH_FID: f64 = 1e-12;

/// Whether a found witness maps `a` onto `b` without large cancellations.
fn accept(w: &SloccWitness, a: &PureState, b: &PureState) -> bool {
    let Ok(image) = w.apply(a) else {
        return false;
    };
    let Ok(f) = image.fidelity(b) else {
        return false;
    };
    let op_norm: f64 = w.ops.iter().map(|op| linalg::singular_values(&op.matrix).first().copied().unwrap_or(0.0)).product();
    let ratio = op_norm * a.norm() / image.norm();
    f >= 1.0 - SEARCH_FID && ratio <= MAX_CANCELLATION
}

fn spectra_match(a: &PureState, b: &PureState) -> Result<bool> {
    let (na, nb) = (a.normalized(), b.normalized());
    for i in 0..a.parties() {
        let ea = na.reduced_density(&[i])?.eigenvalues();
        let eb = nb.reduced_density(&[i])?.eigenvalues();
        if ea.iter().zip(&eb).any(|(x, y)| (x - y).abs() > 1e-8) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Local unitaries `U_i` with `⊗U_i a ∝ b`, by alternating polar
/// decompositions. Requires equal dimensions.
pub fn lu_search(a: &PureState, b: &PureState, restarts: usize, iterations: usize, seed: u64) -> Result<Option<SloccWitness>> {
    if a.dims() != b.dims() || !spectra_match(a, b)? {
        return Ok(None);
    }
    let (a, b) = (a.normalized(), b.normalized());
    let n = a.parties();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0..restarts.max(1) {
        let mut ops: Vec<CMat> = a
            .dims()
            .iter()
            .map(|&d| if attempt == 0 { linalg::identity(d) } else { linalg::random_unitary(d, &mut rng) })
            .collect();
        let mut best = 0.0;
        for it in 0..iterations {
            for i in 0..n {
                let t = apply_others(&a, &ops, i)?;
                let g = t.matricize(&[i])? * b.matricize(&[i])?.adjoint();
                let (w, _, vh) = linalg::svd_sorted(&g);
                ops[i] = vh.adjoint() * w.adjoint();
            }
            let f = a.apply_all(&ops.iter().enumerate().map(|(i, m)| LocalOperator::new(i, m.clone())).collect::<Vec<_>>())?.fidelity(&b)?;
            if f >= 1.0 - SEARCH_FID * 1e-2 {
                break;
            }
            if it > 20 && f - best < 1e-13 {
                break;
            }
            best = f;
        }
        let w = to_witness(ops);
        if accept(&w, &a, &b) {
            return Ok(Some(w));
        }
    }
    Ok(None)
}

/// Local operators `A_i` with `⊗A_i a ∝ b`, by alternating least squares.
pub fn slocc_search(a: &PureState, b: &PureState, restarts: usize, iterations: usize, seed: u64) -> Result<Option<SloccWitness>> {
    if a.parties() != b.parties() {
        return Ok(None);
    }
    let (a, b) = (a.normalized(), b.normalized());
    let n = a.parties();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..restarts.max(1) {
        let mut ops: Vec<CMat> = (0..n).map(|i| linalg::random_matrix(b.dims()[i], a.dims()[i], &mut rng)).collect();
        let mut last = f64::INFINITY;
        for it in 0..iterations {
            for i in 0..n {
                let t = apply_others(&a, &ops, i)?;
                let ti = t.matricize(&[i])?;
                let bi = b.matricize(&[i])?;
                ops[i] = &bi * linalg::pinv(&ti, 1e-12);
                let norm = linalg::frobenius(&ops[i]);
                if norm == 0.0 || !norm.is_finite() {
                    break;
                }
                ops[i].unscale_mut(norm);
            }
            let image = apply_others(&a, &ops, usize::MAX)?;
            if image.norm_sqr() == 0.0 {
                break;
            }
            let miss = 1.0 - image.fidelity(&b)?;
            if miss <= SEARCH_FID * 1e-2 {
                break;
            }
            if it > 30 && (last - miss).abs() < 1e-14 {
                break;
            }
            last = miss;
        }
        let w = to_witness(ops);
        if accept(&w, &a, &b) {
            return Ok(Some(w));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::ghz;

    #[test]
    fn lu_search_recovers_random_unitaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = PureState::new(vec![2, 2, 2], linalg::random_vector(8, &mut rng)).unwrap();
        let ops: Vec<LocalOperator> = (0..3).map(|i| LocalOperator::new(i, linalg::random_unitary(2, &mut rng))).collect();
        let b = a.apply_all(&ops).unwrap();
        let w = lu_search(&a, &b, 8, 500, 1).unwrap().expect("LU witness");
        assert!(w.all_unitary());
        assert!(w.verifies(&a, &b));
    }

    #[test]
    fn lu_search_rejects_different_spectra() {
        let w = PureState::from_kets(vec![2, 2, 2], &["001", "010", "100"]).unwrap();
        assert!(lu_search(&ghz(2, 3), &w, 4, 100, 0).unwrap().is_none());
    }

    #[test]
    fn slocc_search_projects_w_to_a_bell_pair() {
        let w = PureState::from_kets(vec![2, 2, 2], &["001", "010", "100"]).unwrap();
        let bell12 = PureState::from_kets(vec![2, 2, 2], &["000", "110"]).unwrap();
        let wit = slocc_search(&w, &bell12, 8, 300, 0).unwrap().expect("witness");
        assert!(wit.verifies(&w, &bell12));
    }

    #[test]
    fn slocc_search_rejects_unreachable_and_border_targets() {
        let w = PureState::from_kets(vec![2, 2, 2], &["001", "010", "100"]).unwrap();
        // GHZ is not in the closure of the W orbit
        assert!(slocc_search(&w, &ghz(2, 3), 4, 200, 0).unwrap().is_none());
        // W is, but only through diverging operators, which are rejected
        assert!(slocc_search(&ghz(2, 3), &w, 4, 400, 0).unwrap().is_none());
    }
}
