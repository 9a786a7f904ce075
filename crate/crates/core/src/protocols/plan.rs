//! Finite-copy demonstrations of multi-copy convertibility.
//!
//! Either a single SLOCC filter repeated on fresh copies, or an assembly: Bell
//! pairs are extracted from separate copies along paths of the source's
//! independence graph, joined by entanglement swapping, and used to teleport
//! each party's share of the destination from a root party.

use serde::Serialize;

use super::extract::bell_extract_pair;
use super::teleport::{resource_frame, teleport_in_place};
use super::{run_exhaustive, shift, Branch, ExtractBudget, ProtocolTrace, RusReport, Stage, StageFn, Step, TraceMode};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};
use crate::state::{ghz, LocalOperator, MeasurementRound, PureState};
use crate::structure::{factorize_along, independence_graph, partition, partition_geq, reassemble, SloccWitness};
use crate::tol;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanKind {
    DirectFilter,
    Assembly,
}

#[derive(Clone, Debug, Serialize)]
pub struct McPlan {
    pub kind: PlanKind,
    /// Source copies consumed by the representative run.
    pub copies: usize,
    pub steps: Vec<String>,
    pub final_overlap: f64,
    pub trace: ProtocolTrace,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rus: Option<RusReport>,
}

impl McPlan {
    pub fn succeeded(&self) -> bool {
        self.final_overlap >= 1.0 - 1e-8
    }
}

/// Plan with one filtering step repeated on fresh copies.
pub fn direct_filter(src: &PureState, dst: &PureState, witness: &SloccWitness, trials: usize, seed: u64) -> Result<McPlan> {
    let rus = super::repeat_until_success(src, witness, dst, trials, seed)?;
    let copies = rus.first_success.ok_or_else(|| Error::ProtocolFailure(format!("no success within {trials} trials")))?;
    let final_overlap = rus.trace.final_overlap;
    let steps = vec![format!(
        "apply the local filter to fresh copies until it succeeds (single-trial probability {:.6})",
        rus.single_trial_probability
    )];
    Ok(McPlan { kind: PlanKind::DirectFilter, copies, steps, final_overlap, trace: rus.trace.clone(), rus: Some(rus) })
}

struct Recorder {
    steps: Vec<Step>,
    outcomes: Vec<usize>,
    probability: f64,
    notes: Vec<String>,
    plan: Vec<String>,
}

impl Recorder {
    /// Keeps a verified exhaustive sub-trace and returns its first branch state.
    fn absorb(&mut self, label: &str, trace: ProtocolTrace) -> Result<PureState> {
        if !trace.deterministic_success() {
            return Err(Error::ProtocolFailure(format!("{label}: minimum overlap {:.3e}", trace.min_overlap())));
        }
        self.notes.push(format!(
            "{label}: {} branch(es) verified, minimum overlap {:.12}",
            trace.branches.len(),
            trace.min_overlap()
        ));
        let first = trace.branches.into_iter().next().expect("nonempty trace");
        self.outcomes.extend(&first.outcomes);
        self.steps.extend(first.steps);
        Ok(first.state.expect("exhaustive branches carry states").normalized())
    }

    fn absorb_post_selected(&mut self, label: &str, trace: ProtocolTrace) {
        self.probability *= trace.success_probability;
        self.notes.push(format!("{label}: success probability {:.12}", trace.success_probability));
        let first = trace.branches.into_iter().next().expect("nonempty trace");
        self.outcomes.extend(&first.outcomes);
        self.steps.extend(first.steps);
    }
}

/// Bell pair between `a` and `b` (in that order) from one copy of `src`.
fn edge_pair(src: &PureState, a: usize, b: usize, rec: &mut Recorder, budget: &ExtractBudget) -> Result<PureState> {
    let (trace, pair) = bell_extract_pair(src, a, b, budget)?
        .ok_or_else(|| Error::ProtocolFailure(format!("no Bell pair found between parties {} and {}", a + 1, b + 1)))?;
    rec.absorb_post_selected(&format!("extract Bell({}, {})", a + 1, b + 1), trace);
    rec.plan.push(format!("extract a Bell pair between parties {} and {} from a fresh copy", a + 1, b + 1));
    let pair = pair.normalized();
    if a > b {
        pair.permute(&[1, 0])
    } else {
        Ok(pair)
    }
}

/// Joins Bell(root, mid) and Bell(mid, next) into Bell(root, next).
fn swap(left: &PureState, right: &PureState, labels: (usize, usize, usize), rec: &mut Recorder) -> Result<PureState> {
    let (root, mid, next) = labels;
    let one = c(1.0, 0.0);
    let joint = left.tensor_product(right, None)?.merge_parties(1, 2)?;
    let merge: StageFn = Box::new(move |_: &PureState, _: &[usize]| {
        let elements: Vec<CMat> = (0..2)
            .map(|i| {
                let mut m = CMat::zeros(4, 4);
                for j in 0..2 {
                    m[(j * 2 + j, j * 2 + (j + i) % 2)] = one;
                }
                m
            })
            .collect();
        let corrections = (0..2).map(|i| vec![LocalOperator::new(2, shift(2, -(i as isize)))]).collect();
        Ok(Stage::Round(MeasurementRound::new(1, elements, format!("party {}: GHZ merge", mid + 1)).with_corrections(corrections)))
    });
    let compress: StageFn = Box::new(move |_: &PureState, _: &[usize]| {
        let mut v = CMat::zeros(2, 4);
        let mut rest = linalg::identity(4);
        for j in 0..2 {
            v[(j, j * 2 + j)] = one;
            rest[(j * 2 + j, j * 2 + j)] = c(0.0, 0.0);
        }
        Ok(Stage::Round(MeasurementRound::new(1, vec![v, rest], format!("party {}: compress", mid + 1))))
    });
    let xmeasure: StageFn = Box::new(move |_: &PureState, _: &[usize]| {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let plus = CMat::from_row_slice(1, 2, &[c(h, 0.0), c(h, 0.0)]);
        let minus = CMat::from_row_slice(1, 2, &[c(h, 0.0), c(-h, 0.0)]);
        let z = CMat::from_row_slice(2, 2, &[one, c(0.0, 0.0), c(0.0, 0.0), -one]);
        Ok(Stage::Round(
            MeasurementRound::new(1, vec![plus, minus], format!("party {}: X-basis measurement", mid + 1))
                .with_corrections(vec![Vec::new(), vec![LocalOperator::new(2, z)]]),
        ))
    });
    let drop: StageFn = Box::new(|_: &PureState, _: &[usize]| Ok(Stage::Drop { party: 1, description: "discard measured party".into() }));
    let trace = run_exhaustive("entanglement-swap", &joint, &[merge, compress, xmeasure, drop], &ghz(2, 2))?;
    rec.plan.push(format!("swap through party {}: Bell({}, {}) and Bell({}, {}) → Bell({}, {})", mid + 1, root + 1, mid + 1, mid + 1, next + 1, root + 1, next + 1));
    rec.absorb(&format!("swap at party {}", mid + 1), trace)
}

fn qubits_for(d: usize) -> usize {
    let mut m = 1;
    while (1usize << m) < d {
        m += 1;
    }
    m
}

/// Moves subsystem `p` of `state` to the end.
fn to_end(n: usize, p: usize) -> Vec<usize> {
    (0..n).filter(|&k| k != p).chain(std::iter::once(p)).collect()
}

/// Moves the last subsystem back to position `p`.
fn from_end(n: usize, p: usize) -> Vec<usize> {
    (0..n).map(|k| if k < p { k } else if k == p { n - 1 } else { k - 1 }).collect()
}

/// Distributes `phi` (one factor of the destination, parties `block`) from
/// `block[0]` using Bell pairs extracted from copies of `src`.
fn assemble_block(src: &PureState, block: &[usize], phi: &PureState, rec: &mut Recorder, budget: &ExtractBudget) -> Result<(PureState, usize)> {
    let graph = independence_graph(src);
    let root = block[0];
    let mut copies = 0;
    // embed every non-root register into qubits and split it
    let mut reg = phi.normalized();
    let mut layout: Vec<(usize, usize)> = vec![(0, 0)];
    let mut embeddings = Vec::new();
    let mut idx = 1;
    for t in 1..block.len() {
        let d = phi.dims()[t];
        let m = qubits_for(d);
        let e = CMat::from_fn(1 << m, d, |r, col| if r == col { c(1.0, 0.0) } else { c(0.0, 0.0) });
        reg = reg.apply_local(&LocalOperator::new(idx, e.clone()))?;
        reg = reg.split_party(idx, &vec![2; m])?;
        for q in 0..m {
            layout.push((t, q));
        }
        embeddings.push((t, m, e));
        idx += m;
    }
    rec.plan.push(format!(
        "party {} prepares the destination factor on {{{}}} with the other registers embedded in qubits",
        root + 1,
        block.iter().map(|p| (p + 1).to_string()).collect::<Vec<_>>().join(",")
    ));
    for (pos, &(t, q)) in layout.iter().enumerate().skip(1) {
        let b = block[t];
        let path = graph
            .path(root, b)
            .ok_or_else(|| Error::ProtocolFailure(format!("parties {} and {} are not connected in the source graph", root + 1, b + 1)))?;
        let mut pair = edge_pair(src, path[0], path[1], rec, budget)?;
        copies += 1;
        for w in path.windows(2).skip(1) {
            let next = edge_pair(src, w[0], w[1], rec, budget)?;
            copies += 1;
            pair = swap(&pair, &next, (root, w[0], w[1]), rec)?;
        }
        let frame = resource_frame(&pair)?;
        let k = reg.parties();
        let big = reg.tensor_product(&pair, None)?;
        let expected = reg.permute(&to_end(k, pos))?;
        let (trace, y) = teleport_in_place(&big, pos, k, k + 1, frame, &expected)?;
        debug_assert_eq!(y, k - 1);
        rec.plan.push(format!("teleport qubit {} of party {}'s register from party {} to party {}", q + 1, b + 1, root + 1, b + 1));
        let out = rec.absorb(&format!("teleport qubit {} to party {}", q + 1, b + 1), trace)?;
        reg = out.permute(&from_end(k, pos))?;
    }
    // merge the qubits of each register and undo the embedding
    let mut at = 1;
    for (t, m, e) in embeddings {
        for _ in 1..m {
            reg = reg.merge_parties(at, at + 1)?;
        }
        let before = reg.norm_sqr();
        reg = reg.apply_local(&LocalOperator::new(at, e.adjoint()))?;
        if (reg.norm_sqr() - before).abs() > 1e-9 * before {
            return Err(Error::ProtocolFailure(format!("register of party {} left the embedded subspace", block[t] + 1)));
        }
        at += 1;
    }
    if block.len() > 1 {
        rec.plan.push("each receiving party decodes its qubits back into its register".into());
    }
    Ok((reg, copies))
}

/// Assembly plan from `src` to `dst`; requires the partition of `src` to be
/// at least as coarse as that of `dst`.
pub fn assemble(src: &PureState, dst: &PureState, budget: &ExtractBudget) -> Result<McPlan> {
    if src.parties() != dst.parties() {
        return Err(Error::PartyCountMismatch(src.parties(), dst.parties()));
    }
    let (ps, pd) = (partition(src), partition(dst));
    if !partition_geq(&ps, &pd)? {
        return Err(Error::HypothesisViolated(format!("partition {} does not dominate {}", ps.label(), pd.label())));
    }
    let factors = factorize_along(dst, &pd)?;
    let mut rec = Recorder { steps: Vec::new(), outcomes: Vec::new(), probability: 1.0, notes: Vec::new(), plan: Vec::new() };
    let mut built = Vec::with_capacity(factors.len());
    let mut copies = 0;
    for (block, phi) in pd.blocks.iter().zip(&factors) {
        if block.len() == 1 {
            rec.plan.push(format!("party {} prepares its factor locally", block[0] + 1));
            built.push(phi.normalized());
            continue;
        }
        let (state, used) = assemble_block(src, block, phi, &mut rec, budget)?;
        copies += used;
        built.push(state);
    }
    let result = reassemble(&built, &pd)?;
    let final_overlap = result.fidelity(dst)?;
    let branch = Branch {
        outcomes: rec.outcomes,
        steps: rec.steps,
        probability: rec.probability,
        overlap: final_overlap,
        success: final_overlap >= 1.0 - tol::FID,
        final_state: None,
        state: Some(result),
    };
    let mut trace = ProtocolTrace::from_branches("mc-assembly", TraceMode::Composite, vec![branch]);
    trace.total_probability = rec.probability;
    trace.final_overlap = final_overlap;
    trace.notes = rec.notes;
    Ok(McPlan { kind: PlanKind::Assembly, copies, steps: rec.plan, final_overlap, trace, rus: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w() -> PureState {
        PureState::from_kets(vec![2, 2, 2], &["001", "010", "100"]).unwrap()
    }

    #[test]
    fn w_to_ghz_uses_two_copies() {
        let plan = assemble(&w(), &ghz(2, 3), &ExtractBudget::default()).unwrap();
        assert_eq!(plan.kind, PlanKind::Assembly);
        assert_eq!(plan.copies, 2);
        assert!(plan.final_overlap >= 1.0 - 1e-8, "{}", plan.final_overlap);
    }

    #[test]
    fn ghz_to_w_and_chain_paths() {
        let plan = assemble(&ghz(2, 3), &w(), &ExtractBudget::default()).unwrap();
        assert!(plan.succeeded());
        // a chain source forces a swap for the end-to-end pair
        let chain = PureState::from_kets(vec![2, 2, 2], &["000", "011", "110", "101"]).unwrap();
        let g = independence_graph(&chain);
        assert!(!g.edges().is_empty());
        let plan = assemble(&chain, &ghz(2, 3), &ExtractBudget::default()).unwrap();
        assert!(plan.succeeded());
    }

    #[test]
    fn qutrit_destination_is_embedded_in_qubits() {
        let plan = assemble(&ghz(2, 3), &ghz(3, 3), &ExtractBudget::default()).unwrap();
        assert!(plan.succeeded(), "{}", plan.final_overlap);
        assert_eq!(plan.copies, 4);
    }

    #[test]
    fn incomparable_partitions_are_rejected() {
        let a = PureState::from_kets(vec![2, 2, 2], &["000", "110"]).unwrap();
        let b = PureState::from_kets(vec![2, 2, 2], &["000", "011"]).unwrap();
        assert!(assemble(&a, &b, &ExtractBudget::default()).is_err());
    }

    #[test]
    fn permutation_helpers_are_inverse() {
        let s = PureState::new(vec![2, 3, 4], (0..24).map(|k| c(k as f64, 0.0)).collect()).unwrap();
        for p in 0..3 {
            let there = s.permute(&to_end(3, p)).unwrap();
            assert_eq!(there.permute(&from_end(3, p)).unwrap(), s);
        }
    }
}
