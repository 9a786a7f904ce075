use super::{run_exhaustive, shift, ProtocolTrace, Stage, StageFn};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::state::{ghz, LocalOperator, MeasurementRound, PureState};

/// Merges `GHZ_d^{(m1)}` and `GHZ_d^{(m2)}` into `GHZ_d^{(m1+m2−1)}` by a
/// measurement of the party holding the last qubit of the first state and the
/// first qubit of the second.
///
/// Outcome `i` keeps the span of `|j, j+i⟩` and relabels it to `|j, j⟩`; the
/// remaining parties of the second state undo the shift by `X^{−i}`. A final
/// round compresses the merged party from `d²` to `d` dimensions.
pub fn ghz_merge(d: usize, m1: usize, m2: usize) -> Result<ProtocolTrace> {
    if d < 2 || m1 < 2 || m2 < 2 {
        return Err(Error::InvalidParameter(format!("ghz_merge needs d ≥ 2 and m1, m2 ≥ 2 (got d={d}, m1={m1}, m2={m2})")));
    }
    if (d as f64).powi((m1 + m2) as i32) > 1.0e7 {
        return Err(Error::InvalidParameter("ghz_merge: state too large to simulate".into()));
    }
    let one = linalg::c(1.0, 0.0);
    let a = ghz(d, m1);
    let b = ghz(d, m2);
    let joint = a.tensor_product(&b, None)?;
    // parties: 0..m1 (first), m1..m1+m2 (second); merge m1-1 with m1
    let initial = joint.merge_parties(m1 - 1, m1)?;
    let merged = m1 - 1;
    let n = m1 + m2 - 1;

    let measure: StageFn = Box::new(move |_: &PureState, _: &[usize]| {
        let elements: Vec<CMat> = (0..d)
            .map(|i| {
                let mut m = CMat::zeros(d * d, d * d);
                for j in 0..d {
                    m[(j * d + j, j * d + (j + i) % d)] = one;
                }
                m
            })
            .collect();
        let corrections = (0..d)
            .map(|i| (merged + 1..n).map(|p| LocalOperator::new(p, shift(d, -(i as isize)))).collect())
            .collect();
        Ok(Stage::Round(
            MeasurementRound::new(merged, elements, format!("merged party {}: project onto |j,j+i⟩, relabel", merged + 1))
                .with_corrections(corrections),
        ))
    });
    let compress: StageFn = Box::new(move |_: &PureState, _: &[usize]| {
        let mut v = CMat::zeros(d, d * d);
        let mut rest = linalg::identity(d * d);
        for j in 0..d {
            v[(j, j * d + j)] = one;
            rest[(j * d + j, j * d + j)] = linalg::c(0.0, 0.0);
        }
        Ok(Stage::Round(MeasurementRound::new(
            merged,
            vec![v, rest],
            format!("merged party {}: compress |j,j⟩ → |j⟩", merged + 1),
        )))
    });
    let target = ghz(d, n);
    let mut trace = run_exhaustive("ghz-merge", &initial, &[measure, compress], &target)?;
    trace.notes.push(format!("GHZ_{d}^({m1}) + GHZ_{d}^({m2}) → GHZ_{d}^({n})"));
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tol;

    #[test]
    fn qubit_merge_of_two_bell_pairs() {
        let t = ghz_merge(2, 2, 2).unwrap();
        assert_eq!(t.branches.len(), 2);
        for b in &t.branches {
            assert!((b.probability - 0.5).abs() < 1e-12);
            assert!(b.overlap >= 1.0 - tol::FID);
        }
        assert!(t.deterministic_success());
        assert!(t.reverify(&ghz(2, 3)));
    }

    #[test]
    fn qutrit_merge_all_branches_succeed() {
        let t = ghz_merge(3, 3, 2).unwrap();
        assert_eq!(t.branches.len(), 3);
        assert!(t.deterministic_success());
        let s = t.branches[0].state.as_ref().unwrap();
        assert_eq!(s.dims(), &[3, 3, 3, 3]);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ghz_merge(1, 2, 2).is_err());
        assert!(ghz_merge(2, 1, 2).is_err());
    }
}
