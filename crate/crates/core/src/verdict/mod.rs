//! Three-valued convertibility verdicts under LOCC, SLOCC and MCLOCC.
//!
//! Every `Yes` carries a witness or a named sufficient condition, every `No`
//! a checkable obstruction, and every `Unknown` the list of checks that were
//! attempted. States are split along the source partition first and compared
//! block by block.

mod search;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use serde::Serialize;

pub use search::{lu_search, slocc_search};

use crate::catalog;
use crate::error::{Error, Result};
use crate::invariants::{self, invariant_vector, majorization_gap, InvariantVector, SearchBudget};
use crate::linalg::{self, CMat};
use crate::protocols::{self, ExtractBudget, McPlan, ProtocolTrace, ReducedSeparable};
use crate::state::{LocalOperator, PureState};
use crate::structure::{factorize_along, ghz_witness, partition, partition_geq, Partition, SloccWitness};
use crate::{tol, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Regime {
    #[serde(rename = "LOCC")]
    Locc,
    #[serde(rename = "SLOCC")]
    Slocc,
    #[serde(rename = "MCLOCC")]
    Mclocc,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Locc, Regime::Slocc, Regime::Mclocc];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Locc => "LOCC",
            Regime::Slocc => "SLOCC",
            Regime::Mclocc => "MCLOCC",
        }
    }

    /// Parses a regime name; `mcslocc` is accepted as an alias of `mclocc`
    /// and reported through the second component.
    pub fn parse(s: &str) -> Result<(Regime, bool)> {
        match s.to_ascii_lowercase().as_str() {
            "locc" => Ok((Regime::Locc, false)),
            "slocc" => Ok((Regime::Slocc, false)),
            "mclocc" => Ok((Regime::Mclocc, false)),
            "mcslocc" => Ok((Regime::Mclocc, true)),
            other => Err(Error::Parse(format!("unknown regime {other:?}"))),
        }
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::parse(s).map(|r| r.0)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Answer {
    Yes,
    No,
    Unknown,
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Answer::Yes => "Yes",
            Answer::No => "No",
            Answer::Unknown => "Unknown",
        })
    }
}

/// Why a verdict was reached. Party lists are 0-based.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Reason {
    /// The states agree up to phase and normalization.
    Identity,
    /// Comparison of the partitions.
    PartitionOrder { src: String, dst: String },
    /// A monotone invariant of the destination exceeds the source's, or
    /// equal local ranks force an invertible map that cannot change the
    /// tensor rank.
    InvariantObstruction { invariant: String, block: Vec<usize>, src: String, dst: String },
    /// The source block is a GHZ state of rank `d` and the destination block
    /// has a decomposition with at most `d` terms.
    GhzMaximality { d: usize },
    MajorizationPass { block: Vec<usize> },
    MajorizationFail { block: Vec<usize>, k: usize, src_sum: f64, dst_sum: f64 },
    LuEquivalence,
    ReducedSeparableProtocol { d: usize, cardinality: usize },
    WitnessFound,
    Counterexample { name: String },
    /// A `No` at a weaker regime implies `No` here.
    HierarchyImplication { regime: Regime, reason: Box<Reason> },
    Undecided { checks: Vec<String> },
}

impl Reason {
    pub fn label(&self) -> &'static str {
        match self {
            Reason::Identity => "Identity",
            Reason::PartitionOrder { .. } => "PartitionOrder",
            Reason::InvariantObstruction { .. } => "InvariantObstruction",
            Reason::GhzMaximality { .. } => "GhzMaximality",
            Reason::MajorizationPass { .. } => "MajorizationPass",
            Reason::MajorizationFail { .. } => "MajorizationFail",
            Reason::LuEquivalence => "LUEquivalence",
            Reason::ReducedSeparableProtocol { .. } => "ReducedSeparableProtocol",
            Reason::WitnessFound => "WitnessFound",
            Reason::Counterexample { .. } => "Counterexample",
            Reason::HierarchyImplication { .. } => "HierarchyImplication",
            Reason::Undecided { .. } => "Undecided",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", content = "data", rename_all = "kebab-case")]
pub enum Witness {
    Operators(SloccWitness),
    Trace(Box<ProtocolTrace>),
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub regime: Regime,
    pub answer: Answer,
    pub reason: Reason,
    pub details: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
}

impl Verdict {
    fn yes(regime: Regime, reason: Reason, details: impl Into<String>, witness: Option<Witness>) -> Self {
        Self { regime, answer: Answer::Yes, reason, details: details.into(), witness }
    }

    fn no(regime: Regime, reason: Reason, details: impl Into<String>) -> Self {
        Self { regime, answer: Answer::No, reason, details: details.into(), witness: None }
    }

    fn unknown(regime: Regime, checks: Vec<String>) -> Self {
        let details = format!("undecided after: {}", checks.join("; "));
        Self { regime, answer: Answer::Unknown, reason: Reason::Undecided { checks }, details, witness: None }
    }

    /// Re-checks the verdict's justification from scratch.
    pub fn verify(&self, src: &PureState, dst: &PureState) -> Result<bool> {
        match self.answer {
            Answer::Unknown => Ok(true),
            Answer::Yes => match (&self.witness, &self.reason) {
                (Some(Witness::Operators(w)), _) => Ok(w.verifies(src, dst)),
                (Some(Witness::Trace(t)), _) => Ok(t.deterministic_success() && t.final_overlap >= 1.0 - tol::FID),
                (None, Reason::Identity) => Ok(src.dims() == dst.dims() && src.equal_up_to_phase_scale(dst)?.0),
                (None, Reason::PartitionOrder { .. }) => partition_geq(&partition(src), &partition(dst)),
                (None, Reason::MajorizationPass { block }) => {
                    let (a, b) = block_pair(src, dst, block)?;
                    Ok(majorization_gap(&a, &b)?.is_none())
                }
                _ => Ok(false),
            },
            Answer::No => verify_obstruction(&self.reason, src, dst),
        }
    }
}

fn verify_obstruction(reason: &Reason, src: &PureState, dst: &PureState) -> Result<bool> {
    match reason {
        Reason::PartitionOrder { .. } => Ok(!partition_geq(&partition(src), &partition(dst))?),
        Reason::MajorizationFail { block, .. } => {
            let (a, b) = block_pair(src, dst, block)?;
            Ok(majorization_gap(&a, &b)?.is_some())
        }
        Reason::InvariantObstruction { invariant, block, .. } => {
            let (a, b) = block_pair(src, dst, block)?;
            if let Some(rest) = invariant.strip_prefix("local rank of party ") {
                let k: usize = rest.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))? - 1;
                let pos = block.iter().position(|&p| p == k).ok_or_else(|| Error::Inconsistency("party outside block".into()))?;
                return Ok(invariants::local_rank(&b, pos)? > invariants::local_rank(&a, pos)?);
            }
            if invariant == "schmidt rank" {
                return Ok(invariants::local_rank(&b, 0)? > invariants::local_rank(&a, 0)?);
            }
            let pa = profile(&a, &SearchBudget::default());
            let pb = profile(&b, &SearchBudget::default());
            let disjoint = |x: &InvariantVector, y: &InvariantVector| x.rank.upper.is_some_and(|u| y.rank.lower > u);
            match invariant.as_str() {
                "tensor rank" => Ok(disjoint(&pa.inv, &pb.inv)),
                "tensor rank under equal local ranks" => {
                    Ok(pa.inv.local_ranks == pb.inv.local_ranks && (disjoint(&pa.inv, &pb.inv) || disjoint(&pb.inv, &pa.inv)))
                }
                _ => Ok(false),
            }
        }
        Reason::Counterexample { .. } => Ok(counterexample(src, dst).is_some()),
        Reason::HierarchyImplication { reason, .. } => verify_obstruction(reason, src, dst),
        _ => Ok(false),
    }
}

/// Options for [`compare_with`].
#[derive(Clone, Debug)]
pub struct CompareOptions {
    pub budget: SearchBudget,
    pub seed: u64,
    pub search_restarts: usize,
    pub search_iterations: usize,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self { budget: SearchBudget::default(), seed: 0, search_restarts: 6, search_iterations: 300 }
    }
}

struct Profile {
    inv: InvariantVector,
    ghz: Option<SloccWitness>,
}

type ProfileKey = (Vec<usize>, Vec<(u64, u64)>, u64, usize, usize);

fn cache() -> &'static Mutex<HashMap<ProfileKey, Arc<Profile>>> {
    static CACHE: OnceLock<Mutex<HashMap<ProfileKey, Arc<Profile>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Invariants and GHZ witness, memoized on the exact amplitudes.
fn profile(s: &PureState, budget: &SearchBudget) -> Arc<Profile> {
    let key = (
        s.dims().to_vec(),
        s.amps().iter().map(|z| (z.re.to_bits(), z.im.to_bits())).collect(),
        budget.seed,
        budget.restarts,
        budget.iterations,
    );
    if let Some(p) = cache().lock().expect("cache lock").get(&key) {
        return p.clone();
    }
    let inv = invariant_vector(s, budget);
    let ghz = ghz_witness(s, &inv).ok().flatten();
    let p = Arc::new(Profile { inv, ghz });
    cache().lock().expect("cache lock").insert(key, p.clone());
    p
}

/// The factors of `src` and `dst` on `block` (`dst` must be a product along it).
fn block_pair(src: &PureState, dst: &PureState, block: &[usize]) -> Result<(PureState, PureState)> {
    let n = src.parties();
    if block.len() == n {
        return Ok((src.clone(), dst.clone()));
    }
    let rest: Vec<usize> = (0..n).filter(|k| !block.contains(k)).collect();
    let p = Partition::new(vec![block.to_vec(), rest])?;
    let pos = p.blocks.iter().position(|b| b == block).expect("block present");
    let a = factorize_along(src, &p)?.swap_remove(pos);
    let b = factorize_along(dst, &p)?.swap_remove(pos);
    Ok((a, b))
}

fn rank_text(inv: &InvariantVector) -> String {
    match (inv.rank.exact_value(), inv.rank.upper) {
        (Some(r), _) => r.to_string(),
        (None, Some(u)) => format!("[{}, {}]", inv.rank.lower, u),
        (None, None) => format!("≥ {}", inv.rank.lower),
    }
}

fn one_based(block: &[usize]) -> String {
    format!("{{{}}}", block.iter().map(|p| (p + 1).to_string()).collect::<Vec<_>>().join(","))
}

/// Witness for a two-party block: maps the Schmidt form of `a` onto `b`.
fn bipartite_witness(a: &PureState, b: &PureState) -> Result<Option<Vec<CMat>>> {
    let ma = a.normalized().matricize(&[0])?;
    let mb = b.normalized().matricize(&[0])?;
    let ra = linalg::numeric_rank(&ma, tol::RANK_EIG.sqrt());
    let rb = linalg::numeric_rank(&mb, tol::RANK_EIG.sqrt());
    if rb > ra {
        return Ok(None);
    }
    let (ua, sa, wa) = linalg::svd_sorted(&ma);
    let (ub, sb, wb) = linalg::svd_sorted(&mb);
    let r = rb;
    let mid = CMat::from_fn(r, r, |x, y| if x == y { C64::new(sb[x] / sa[x], 0.0) } else { C64::new(0.0, 0.0) });
    let op_a = ub.columns(0, r) * mid * ua.columns(0, r).adjoint();
    let op_b = (wa.rows(0, r).adjoint() * wb.rows(0, r)).transpose();
    Ok(Some(vec![op_a, op_b]))
}

/// Decomposition of `b` with at most `d` terms, if one is known.
fn small_decomposition(b: &PureState, pb: &Profile, d: usize) -> Option<invariants::Decomposition> {
    if let Some(w) = pb.inv.rank.witness.as_ref().filter(|w| w.len() <= d && w.residual(b) < 1e-8) {
        return Some(w.clone());
    }
    let c = invariants::slice_construction(b);
    (c.len() <= d && c.residual(b) < 1e-8).then_some(c)
}

/// `op_i = Y_i X_i⁺` with `Y_i` the (padded) factor matrices of `dec`.
fn ghz_path_witness(x: &SloccWitness, dec: &invariants::Decomposition, d: usize) -> Result<Vec<CMat>> {
    let n = dec.dims.len();
    let mut ops = Vec::with_capacity(n);
    for i in 0..n {
        let f = dec.factor_matrix(i);
        let mut y = CMat::zeros(dec.dims[i], d);
        y.columns_mut(0, f.ncols()).copy_from(&f);
        let xp = linalg::pinv(&x.ops[i].matrix, 1e-12);
        ops.push(y * xp);
    }
    Ok(ops)
}

enum BlockResult {
    Yes { reason: Reason, ops: Option<Vec<CMat>>, trace: Option<ProtocolTrace>, details: String },
    No { reason: Reason, details: String },
    Unknown { checks: Vec<String> },
}

fn slocc_block(a: &PureState, b: &PureState, block: &[usize], opts: &CompareOptions) -> Result<BlockResult> {
    let label = one_based(block);
    if a.dims() == b.dims() && a.equal_up_to_phase_scale(b)?.0 {
        let ops = a.dims().iter().map(|&d| linalg::identity(d)).collect();
        return Ok(BlockResult::Yes { reason: Reason::Identity, ops: Some(ops), trace: None, details: format!("block {label}: identical") });
    }
    match block.len() {
        1 => {
            let (na, nb) = (a.normalized(), b.normalized());
            let op = CMat::from_fn(nb.dims()[0], na.dims()[0], |r, c| nb.amps()[r] * na.amps()[c].conj());
            Ok(BlockResult::Yes { reason: Reason::WitnessFound, ops: Some(vec![op]), trace: None, details: format!("block {label}: rank-one map") })
        }
        2 => {
            let ra = invariants::local_rank(a, 0)?;
            let rb = invariants::local_rank(b, 0)?;
            match bipartite_witness(a, b)? {
                Some(ops) => Ok(BlockResult::Yes {
                    reason: Reason::WitnessFound,
                    ops: Some(ops),
                    trace: None,
                    details: format!("block {label}: Schmidt rank {rb} ≤ {ra}"),
                }),
                None => Ok(BlockResult::No {
                    reason: Reason::InvariantObstruction { invariant: "schmidt rank".into(), block: block.to_vec(), src: ra.to_string(), dst: rb.to_string() },
                    details: format!("block {label}: Schmidt rank {rb} exceeds {ra}"),
                }),
            }
        }
        _ => {
            let pa = profile(a, &opts.budget);
            let pb = profile(b, &opts.budget);
            for (k, (&la, &lb)) in pa.inv.local_ranks.iter().zip(&pb.inv.local_ranks).enumerate() {
                if lb > la {
                    return Ok(BlockResult::No {
                        reason: Reason::InvariantObstruction {
                            invariant: format!("local rank of party {}", block[k] + 1),
                            block: block.to_vec(),
                            src: la.to_string(),
                            dst: lb.to_string(),
                        },
                        details: format!("block {label}: local rank of party {} is {lb} > {la}", block[k] + 1),
                    });
                }
            }
            let (ra, rb) = (rank_text(&pa.inv), rank_text(&pb.inv));
            if pa.inv.rank.upper.is_some_and(|u| pb.inv.rank.lower > u) {
                return Ok(BlockResult::No {
                    reason: Reason::InvariantObstruction { invariant: "tensor rank".into(), block: block.to_vec(), src: ra.clone(), dst: rb.clone() },
                    details: format!("block {label}: tensor rank {ra} < {rb}"),
                });
            }
            let differ = |x: &InvariantVector, y: &InvariantVector| x.rank.upper.is_some_and(|u| y.rank.lower > u);
            if pa.inv.local_ranks == pb.inv.local_ranks && differ(&pb.inv, &pa.inv) {
                return Ok(BlockResult::No {
                    reason: Reason::InvariantObstruction {
                        invariant: "tensor rank under equal local ranks".into(),
                        block: block.to_vec(),
                        src: ra.clone(),
                        dst: rb.clone(),
                    },
                    details: format!(
                        "block {label}: equal local ranks force invertible local maps, which preserve tensor rank ({ra} ≠ {rb})"
                    ),
                });
            }
            let mut checks = vec![
                format!("local ranks {:?} vs {:?}", pa.inv.local_ranks, pb.inv.local_ranks),
                format!("tensor rank {ra} vs {rb}"),
            ];
            if let (Some(x), Some(d)) = (&pa.ghz, pa.inv.rank.exact_value()) {
                if let Some(dec) = small_decomposition(b, &pb, d) {
                    let ops = ghz_path_witness(x, &dec, d)?;
                    let w = SloccWitness::new(ops.iter().enumerate().map(|(i, m)| LocalOperator::new(i, m.clone())).collect());
                    if w.verifies(a, b) {
                        return Ok(BlockResult::Yes {
                            reason: Reason::GhzMaximality { d },
                            ops: Some(ops),
                            trace: None,
                            details: format!("block {label}: source is GHZ of rank {d}; destination has a {}-term decomposition", dec.len()),
                        });
                    }
                }
                checks.push(format!("GHZ rank-{d} source: no decomposition of the destination with ≤ {d} terms"));
            } else {
                checks.push("source is not a GHZ state".into());
            }
            if let Some(w) = slocc_search(a, b, opts.search_restarts, opts.search_iterations, opts.seed)? {
                return Ok(BlockResult::Yes {
                    reason: Reason::WitnessFound,
                    ops: Some(w.ops.into_iter().map(|o| o.matrix).collect()),
                    trace: None,
                    details: format!("block {label}: local operators found by alternating least squares"),
                });
            }
            checks.push(format!("operator search ({} restarts)", opts.search_restarts));
            Ok(BlockResult::Unknown { checks })
        }
    }
}

/// Reduced-separable certificate for `b`: the reduced state of all but the
/// last party is a mixture of product states with orthogonal flags.
pub fn derive_certificate(b: &PureState) -> Option<ReducedSeparable> {
    let n = b.parties();
    if n < 2 {
        return None;
    }
    let nb = b.normalized();
    let left: Vec<usize> = (0..n - 1).collect();
    let m = nb.matricize(&left).ok()?;
    let left_dims = &b.dims()[..n - 1];
    let build = |cols: Vec<(f64, Vec<C64>, Vec<C64>)>| -> Option<ReducedSeparable> {
        let mut p = Vec::new();
        let mut a: Vec<Vec<Vec<C64>>> = vec![Vec::new(); n - 1];
        let mut last = CMat::zeros(b.dims()[n - 1], cols.len());
        for (k, (w, l, f)) in cols.into_iter().enumerate() {
            let factors = invariants::product_factors(left_dims, &l)?;
            let mut scale = 1.0;
            for (i, v) in factors.into_iter().enumerate() {
                let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                scale *= norm;
                a[i].push(v.into_iter().map(|z| z / norm).collect());
            }
            let lnorm = l.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            // absorb the phase left by the factor normalization into the flag
            let term: Vec<C64> = {
                let mut vecs: Vec<Vec<C64>> = a.iter().map(|ai| ai[k].clone()).collect();
                vecs.push(vec![C64::new(1.0, 0.0)]);
                PureState::product(&vecs).ok()?.amps().to_vec()
            };
            let phase: C64 = l.iter().zip(&term).map(|(x, y)| y.conj() * x).sum::<C64>() / lnorm;
            let _ = scale;
            p.push(w);
            for (r, z) in f.iter().enumerate() {
                last[(r, k)] = z * phase;
            }
        }
        Some(ReducedSeparable { p, a, last: Some(last) })
    };
    // Schmidt vectors across (rest | last)
    let (u, s, vh) = linalg::svd_sorted(&m);
    let r = linalg::numeric_rank(&m, tol::RANK_EIG.sqrt());
    let total: f64 = s.iter().take(r).map(|x| x * x).sum();
    let schmidt: Vec<(f64, Vec<C64>, Vec<C64>)> = (0..r)
        .map(|k| (s[k] * s[k] / total, u.column(k).iter().copied().collect(), vh.row(k).iter().copied().collect()))
        .collect();
    let cert = build(schmidt).or_else(|| {
        // computational basis of the last party
        let slices: Vec<(usize, Vec<C64>)> =
            (0..m.ncols()).map(|c| (c, m.column(c).iter().copied().collect::<Vec<C64>>())).filter(|(_, v)| v.iter().any(|z| z.norm() > 1e-12)).collect();
        let total: f64 = slices.iter().map(|(_, v)| v.iter().map(|z| z.norm_sqr()).sum::<f64>()).sum();
        let cols = slices
            .into_iter()
            .map(|(c, v)| {
                let w: f64 = v.iter().map(|z| z.norm_sqr()).sum();
                let mut f = vec![C64::new(0.0, 0.0); m.ncols()];
                f[c] = C64::new(1.0, 0.0);
                (w / total, v.iter().map(|z| z / w.sqrt()).collect(), f)
            })
            .collect();
        build(cols)
    })?;
    let target = cert.target().ok()?;
    (target.fidelity(b).ok()? >= 1.0 - tol::FID).then_some(cert)
}

fn locc_block(a: &PureState, b: &PureState, block: &[usize], opts: &CompareOptions) -> Result<BlockResult> {
    let label = one_based(block);
    if a.dims() == b.dims() && a.equal_up_to_phase_scale(b)?.0 {
        let ops = a.dims().iter().map(|&d| linalg::identity(d)).collect();
        return Ok(BlockResult::Yes { reason: Reason::Identity, ops: Some(ops), trace: None, details: format!("block {label}: identical") });
    }
    match block.len() {
        1 => {
            let (na, nb) = (a.normalized(), b.normalized());
            let op = CMat::from_fn(nb.dims()[0], na.dims()[0], |r, c| nb.amps()[r] * na.amps()[c].conj());
            Ok(BlockResult::Yes {
                reason: Reason::WitnessFound,
                ops: Some(vec![op]),
                trace: None,
                details: format!("block {label}: the party discards its factor and prepares the new one"),
            })
        }
        2 => match majorization_gap(a, b)? {
            None => Ok(BlockResult::Yes {
                reason: Reason::MajorizationPass { block: block.to_vec() },
                ops: None,
                trace: None,
                details: format!("block {label}: Schmidt coefficients of the source are majorized by the destination's"),
            }),
            Some((k, sa, sb)) => Ok(BlockResult::No {
                reason: Reason::MajorizationFail { block: block.to_vec(), k, src_sum: sa, dst_sum: sb },
                details: format!("block {label}: sum of the {k} largest Schmidt coefficients is {sa:.6} for the source but {sb:.6} for the destination"),
            }),
        },
        _ => {
            let mut checks = Vec::new();
            if let Some(w) = lu_search(a, b, opts.search_restarts, opts.search_iterations, opts.seed)? {
                return Ok(BlockResult::Yes {
                    reason: Reason::LuEquivalence,
                    ops: Some(w.ops.into_iter().map(|o| o.matrix).collect()),
                    trace: None,
                    details: format!("block {label}: local unitaries found"),
                });
            }
            checks.push("local-unitary search".to_string());
            let pa = profile(a, &opts.budget);
            match (&pa.ghz, pa.inv.rank.exact_value()) {
                (Some(x), Some(d)) if x.ops.iter().all(|op| isometry_defect(&op.matrix) <= tol::UNITARY) => {
                    if let Some(found) = reduced_separable_route(a, b, x, d, &label, &mut checks)? {
                        return Ok(found);
                    }
                }
                _ => checks.push("source is not locally unitarily equivalent to a GHZ state".into()),
            }
            Ok(BlockResult::Unknown { checks })
        }
    }
}

/// Tries every party as the flag party of a reduced-separable certificate.
fn reduced_separable_route(
    a: &PureState,
    b: &PureState,
    x: &SloccWitness,
    d: usize,
    label: &str,
    checks: &mut Vec<String>,
) -> Result<Option<BlockResult>> {
    let n = a.parties();
    let mut sizes = Vec::new();
    for flag in (0..n).rev() {
        let order: Vec<usize> = (0..n).filter(|&k| k != flag).chain(std::iter::once(flag)).collect();
        let bp = b.permute(&order)?;
        let Some(cert) = derive_certificate(&bp) else {
            continue;
        };
        if cert.p.len() > d {
            sizes.push(cert.p.len());
            continue;
        }
        let ap = a.permute(&order)?;
        let isos: Vec<LocalOperator> = order.iter().enumerate().map(|(k, &old)| LocalOperator::new(k, x.ops[old].matrix.clone())).collect();
        let trace = protocols::reduced_separable_from_ghz(&ap, &isos, &cert)?;
        if trace.deterministic_success() {
            let cardinality = cert.cardinality();
            return Ok(Some(BlockResult::Yes {
                reason: Reason::ReducedSeparableProtocol { d, cardinality },
                ops: None,
                trace: Some(trace),
                details: format!(
                    "block {label}: GHZ source of rank {d}; destination is reduced separable over party {} with {cardinality} term(s)",
                    flag + 1
                ),
            }));
        }
        checks.push(format!("reduced-separable protocol with flag party {} did not verify", flag + 1));
    }
    match sizes.iter().min() {
        Some(k) => checks.push(format!("smallest reduced-separable certificate has {k} terms > {d}")),
        None => checks.push("destination has no reduced-separable certificate".into()),
    }
    Ok(None)
}

fn isometry_defect(m: &CMat) -> f64 {
    linalg::max_abs(&(m.adjoint() * m - linalg::identity(m.ncols())))
}

fn counterexample(src: &PureState, dst: &PureState) -> Option<String> {
    catalog::LOCC_COUNTEREXAMPLES.iter().find_map(|&(s, d)| {
        let hit = catalog::recognize(src, &[s]).is_some() && catalog::recognize(dst, &[d]).is_some();
        hit.then(|| format!("{s} → {d}"))
    })
}

/// Runs `per_block` on each block of the source partition and combines.
fn blockwise(
    src: &PureState,
    dst: &PureState,
    regime: Regime,
    opts: &CompareOptions,
    per_block: fn(&PureState, &PureState, &[usize], &CompareOptions) -> Result<BlockResult>,
) -> Result<Verdict> {
    let ps = partition(src);
    let pd = partition(dst);
    if !partition_geq(&ps, &pd)? {
        return Ok(Verdict::no(
            regime,
            Reason::PartitionOrder { src: ps.label(), dst: pd.label() },
            format!("a block of the destination partition {} is not inside a block of {}", pd.label(), ps.label()),
        ));
    }
    let fa = factorize_along(src, &ps)?;
    let fb = factorize_along(dst, &ps)?;
    let n = src.parties();
    let mut ops: Vec<Option<CMat>> = vec![None; n];
    let mut all_ops = true;
    let mut reasons = Vec::new();
    let mut details = Vec::new();
    let mut traces = Vec::new();
    let mut unknown = Vec::new();
    for ((block, a), b) in ps.blocks.iter().zip(&fa).zip(&fb) {
        match per_block(a, b, block, opts)? {
            BlockResult::No { reason, details } => return Ok(Verdict::no(regime, reason, details)),
            BlockResult::Unknown { checks } => unknown.extend(checks.into_iter().map(|c| format!("block {}: {c}", one_based(block)))),
            BlockResult::Yes { reason, ops: block_ops, trace, details: d } => {
                match block_ops {
                    Some(m) => {
                        for (k, op) in m.into_iter().enumerate() {
                            ops[block[k]] = Some(op);
                        }
                    }
                    None => all_ops = false,
                }
                if let Some(t) = trace {
                    traces.push(t);
                }
                reasons.push(reason);
                details.push(d);
            }
        }
    }
    if !unknown.is_empty() {
        return Ok(Verdict::unknown(regime, unknown));
    }
    let reason = reasons
        .iter()
        .find(|r| !matches!(r, Reason::Identity))
        .cloned()
        .unwrap_or(Reason::Identity);
    let witness = if all_ops {
        let ops = ops.into_iter().enumerate().map(|(i, m)| LocalOperator::new(i, m.expect("every block has operators"))).collect();
        let w = SloccWitness::new(ops);
        if !w.verifies(src, dst) {
            return Err(Error::Inconsistency(format!("{regime} witness does not map the source to the destination")));
        }
        Some(Witness::Operators(w))
    } else if traces.len() == 1 && reasons.iter().all(|r| matches!(r, Reason::Identity | Reason::ReducedSeparableProtocol { .. })) {
        traces.pop().map(|t| Witness::Trace(Box::new(t)))
    } else {
        None
    };
    // a Yes without a witness must rest on a named sufficient condition
    let reason = match (&witness, reason) {
        (Some(Witness::Operators(_)), r @ (Reason::Identity | Reason::LuEquivalence | Reason::WitnessFound | Reason::GhzMaximality { .. })) => r,
        (Some(Witness::Operators(_)), _) => Reason::WitnessFound,
        (_, r) => r,
    };
    Ok(Verdict::yes(regime, reason, details.join("; "), witness))
}

/// Verdict with default options.
pub fn compare(src: &PureState, dst: &PureState, regime: Regime) -> Result<Verdict> {
    compare_with(src, dst, regime, &CompareOptions::default())
}

pub fn compare_with(src: &PureState, dst: &PureState, regime: Regime, opts: &CompareOptions) -> Result<Verdict> {
    if src.parties() != dst.parties() {
        return Err(Error::PartyCountMismatch(src.parties(), dst.parties()));
    }
    let identical = src.dims() == dst.dims() && src.equal_up_to_phase_scale(dst)?.0;
    match regime {
        Regime::Mclocc => {
            let (ps, pd) = (partition(src), partition(dst));
            let reason = Reason::PartitionOrder { src: ps.label(), dst: pd.label() };
            if partition_geq(&ps, &pd)? {
                Ok(Verdict::yes(regime, reason, format!("every block of {} lies inside a block of {}", pd.label(), ps.label()), None))
            } else {
                Ok(Verdict::no(regime, reason, format!("a block of {} is not inside any block of {}", pd.label(), ps.label())))
            }
        }
        Regime::Slocc => {
            if identical {
                let ops = src.dims().iter().enumerate().map(|(i, &d)| LocalOperator::identity(i, d)).collect();
                return Ok(Verdict::yes(regime, Reason::Identity, "identical states", Some(Witness::Operators(SloccWitness::new(ops)))));
            }
            blockwise(src, dst, regime, opts, slocc_block)
        }
        Regime::Locc => {
            if identical {
                let ops = src.dims().iter().enumerate().map(|(i, &d)| LocalOperator::identity(i, d)).collect();
                return Ok(Verdict::yes(regime, Reason::Identity, "identical states", Some(Witness::Operators(SloccWitness::new(ops)))));
            }
            if let Some(name) = counterexample(src, dst) {
                return Ok(Verdict::no(regime, Reason::Counterexample { name: name.clone() }, format!("known impossible conversion {name}")));
            }
            let slocc = compare_with(src, dst, Regime::Slocc, opts)?;
            if slocc.answer == Answer::No {
                return Ok(Verdict::no(
                    regime,
                    Reason::HierarchyImplication { regime: Regime::Slocc, reason: Box::new(slocc.reason) },
                    format!("not possible by SLOCC: {}", slocc.details),
                ));
            }
            blockwise(src, dst, regime, opts, locc_block)
        }
    }
}

/// Verdicts at all three regimes for one pair.
#[derive(Clone, Debug, Serialize)]
pub struct HierarchyReport {
    pub locc: Verdict,
    pub slocc: Verdict,
    pub mclocc: Verdict,
}

impl HierarchyReport {
    pub fn verdicts(&self) -> [&Verdict; 3] {
        [&self.locc, &self.slocc, &self.mclocc]
    }
}

/// Runs every regime and fails if decided answers break
/// LOCC ⇒ SLOCC ⇒ MCLOCC.
pub fn hierarchy_check(src: &PureState, dst: &PureState) -> Result<HierarchyReport> {
    hierarchy_check_with(src, dst, &CompareOptions::default())
}

pub fn hierarchy_check_with(src: &PureState, dst: &PureState, opts: &CompareOptions) -> Result<HierarchyReport> {
    let report = HierarchyReport {
        locc: compare_with(src, dst, Regime::Locc, opts)?,
        slocc: compare_with(src, dst, Regime::Slocc, opts)?,
        mclocc: compare_with(src, dst, Regime::Mclocc, opts)?,
    };
    check_chain(&report)?;
    Ok(report)
}

fn check_chain(r: &HierarchyReport) -> Result<()> {
    let chain = [&r.locc, &r.slocc, &r.mclocc];
    for (i, strong) in chain.iter().enumerate() {
        for weak in &chain[i + 1..] {
            if strong.answer == Answer::Yes && weak.answer == Answer::No {
                return Err(Error::Inconsistency(format!(
                    "{} says Yes ({}) but {} says No ({})",
                    strong.regime, strong.details, weak.regime, weak.details
                )));
            }
        }
    }
    Ok(())
}

/// The multi-copy verdict with an executed demonstration plan when it is Yes.
#[derive(Clone, Debug, Serialize)]
pub struct McReport {
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<McPlan>,
}

/// Decides MCLOCC (equal to MCSLOCC) and, on Yes, builds and runs a
/// finite-copy plan: one repeated filter when SLOCC already succeeds,
/// otherwise Bell extraction, swapping and teleportation.
pub fn mcsllocc_equals_mclocc(src: &PureState, dst: &PureState, seed: u64) -> Result<McReport> {
    let verdict = compare(src, dst, Regime::Mclocc)?;
    if verdict.answer != Answer::Yes {
        return Ok(McReport { verdict, plan: None });
    }
    let opts = CompareOptions { seed, ..CompareOptions::default() };
    let slocc = compare_with(src, dst, Regime::Slocc, &opts)?;
    let plan = match &slocc.witness {
        Some(Witness::Operators(w)) if slocc.answer == Answer::Yes => protocols::plan::direct_filter(src, dst, w, 10_000, seed),
        _ => protocols::plan::assemble(src, dst, &ExtractBudget { seed, ..ExtractBudget::default() }),
    }
    .map_err(|e| Error::ProtocolFailure(format!("plan construction failed on a Yes verdict: {e}")))?;
    if !plan.succeeded() {
        return Err(Error::ProtocolFailure(format!("plan reached overlap {} only", plan.final_overlap)));
    }
    Ok(McReport { verdict, plan: Some(plan) })
}
