use super::{clock, run_exhaustive, shift, ProtocolTrace, Stage, StageFn};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::state::{LocalOperator, MeasurementRound, PureState};
use crate::{tol, C64};

/// Unitary `U` with `resource ∝ (1 ⊗ U) Σ_k |kk⟩`, or an error when the
/// resource is not maximally entangled.
pub(crate) fn resource_frame(resource: &PureState) -> Result<CMat> {
    if resource.parties() != 2 || resource.dims()[0] != resource.dims()[1] {
        return Err(Error::HypothesisViolated("resource must be a two-party state of equal dimensions".into()));
    }
    let d = resource.dims()[0];
    let r = resource.normalized().matricize(&[0])?;
    let u = r.transpose().scale((d as f64).sqrt());
    let sv = linalg::singular_values(&r);
    let flat = sv.iter().all(|s| (s * s - 1.0 / d as f64).abs() <= tol::FID);
    if !flat || linalg::unitarity_defect(&u) > 1e-8 {
        return Err(Error::HypothesisViolated(format!(
            "resource is not maximally entangled (Schmidt coefficients {:?})",
            sv.iter().map(|s| s * s).collect::<Vec<_>>()
        )));
    }
    Ok(u)
}

fn bell_basis_rows(d: usize) -> Vec<CMat> {
    let norm = 1.0 / (d as f64).sqrt();
    let mut out = Vec::with_capacity(d * d);
    for a in 0..d {
        for b in 0..d {
            // ⟨Φ_ab| with Φ_ab = Σ_j ω^{aj}|j⟩|j+b⟩/√d
            let mut row = CMat::zeros(1, d * d);
            for j in 0..d {
                let angle = -2.0 * std::f64::consts::PI * ((a * j) % d) as f64 / d as f64;
                row[(0, j * d + (j + b) % d)] = C64::from_polar(norm, angle);
            }
            out.push(row);
        }
    }
    out
}

/// Stages teleporting `payload` over the pair `(x, y)`, to be run on the state
/// with `payload` and `x` already merged. The measured party is removed
/// afterwards.
///
/// Returns the stages and the final index of `y`.
pub(crate) fn teleport_stages<'a>(dims: &[usize], payload: usize, x: usize, y: usize, frame: CMat) -> Result<(Vec<StageFn<'a>>, usize)> {
    let d = dims[payload];
    if dims[x] != d || dims[y] != d {
        return Err(Error::DimensionMismatch(format!("payload dimension {d} does not match the resource ({}, {})", dims[x], dims[y])));
    }
    if payload == x || payload == y || x == y {
        return Err(Error::InvalidParameter("payload, x and y must be distinct".into()));
    }
    let lo = payload.min(x);
    let hi = payload.max(x);
    let y1 = if y > hi { y - 1 } else { y };
    let y2 = if y1 > lo { y1 - 1 } else { y1 };
    let frame_dag = frame.adjoint();
    let rows = bell_basis_rows(d);
    let corrections: Vec<Vec<LocalOperator>> = (0..d)
        .flat_map(|a| (0..d).map(move |b| (a, b)))
        .map(|(a, b)| vec![LocalOperator::new(y1, clock(d, a as isize) * shift(d, -(b as isize)) * &frame_dag)])
        .collect();
    let round = MeasurementRound::new(lo, rows, "generalized Bell measurement").with_corrections(corrections);
    let measure: StageFn = Box::new(move |_: &PureState, _: &[usize]| Ok(Stage::Round(round.clone())));
    let drop: StageFn = Box::new(move |_: &PureState, _: &[usize]| Ok(Stage::Drop { party: lo, description: "discard measured party".into() }));
    Ok((vec![measure, drop], y2))
}

/// Teleports the state of `payload` over the pair `(x, y)` inside `state`.
///
/// Returns the exhaustive trace; every branch's final state has the payload
/// at (the shifted index of) `y`.
pub fn teleport_in_place(state: &PureState, payload: usize, x: usize, y: usize, frame: CMat, target: &PureState) -> Result<(ProtocolTrace, usize)> {
    let merged = state.merge_parties(payload, x)?;
    let (stages, y_final) = teleport_stages(state.dims(), payload, x, y, frame)?;
    let trace = run_exhaustive("teleport", &merged, &stages, target)?;
    Ok((trace, y_final))
}

/// Standard teleportation of a one-party `payload` through a maximally
/// entangled two-party `resource`.
pub fn teleport(resource: &PureState, payload: &PureState) -> Result<ProtocolTrace> {
    let frame = resource_frame(resource)?;
    if payload.parties() != 1 {
        return Err(Error::InvalidParameter("payload must be a one-party state".into()));
    }
    if payload.dims()[0] != resource.dims()[0] {
        return Err(Error::DimensionMismatch(format!(
            "payload dimension {} does not match resource dimension {}",
            payload.dims()[0],
            resource.dims()[0]
        )));
    }
    let joint = payload.tensor_product(resource, None)?;
    let (mut trace, y) = teleport_in_place(&joint, 0, 1, 2, frame, payload)?;
    debug_assert_eq!(y, 0);
    trace.notes.push(format!("{} outcomes", payload.dims()[0].pow(2)));
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use crate::state::ghz;
    use rand::SeedableRng;

    #[test]
    fn qubit_payload_four_branches() {
        let payload = PureState::new(vec![2], vec![c(0.6, 0.0), c(0.8, 0.0)]).unwrap();
        let t = teleport(&ghz(2, 2), &payload).unwrap();
        assert_eq!(t.branches.len(), 4);
        for b in &t.branches {
            assert!((b.probability - 0.25).abs() < 1e-12);
            assert!(b.overlap > 1.0 - 1e-12);
        }
        assert!(t.deterministic_success());
    }

    #[test]
    fn basis_payload() {
        let payload = PureState::new(vec![2], vec![c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert!(teleport(&ghz(2, 2), &payload).unwrap().deterministic_success());
    }

    #[test]
    fn qutrit_payload_through_rotated_resource() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let u = linalg::random_unitary(3, &mut rng);
        let resource = ghz(3, 2).apply_local(&LocalOperator::new(1, u)).unwrap();
        let payload = PureState::new(vec![3], linalg::random_vector(3, &mut rng)).unwrap();
        let t = teleport(&resource, &payload).unwrap();
        assert_eq!(t.branches.len(), 9);
        assert!(t.deterministic_success(), "min overlap {}", t.min_overlap());
    }

    #[test]
    fn partially_entangled_resource_is_rejected() {
        let r = PureState::new(vec![2, 2], vec![c(0.8, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.6, 0.0)]).unwrap();
        let payload = PureState::new(vec![2], vec![c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert!(matches!(teleport(&r, &payload), Err(Error::HypothesisViolated(_))));
    }

    #[test]
    fn bell_rows_form_a_basis() {
        for d in 2..5 {
            let rows = bell_basis_rows(d);
            let r = MeasurementRound::new(0, rows, "t");
            assert!(r.completeness_defect() < 1e-12);
        }
    }
}
