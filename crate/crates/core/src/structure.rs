//! Independence graph, party partition and GHZ-orbit witnesses.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invariants::{Decomposition, InvariantVector};
use crate::linalg::{self, CMat};
use crate::state::{ghz, LocalOperator, PureState};
use crate::tol;
use crate::C64;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndependenceGraph {
    pub n: usize,
    pub adjacency: Vec<Vec<bool>>,
}

impl IndependenceGraph {
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.adjacency[i][j] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn neighbours(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.adjacency[i][j])
    }

    /// Shortest path from `a` to `b`, both endpoints included.
    pub fn path(&self, a: usize, b: usize) -> Option<Vec<usize>> {
        let mut prev = vec![usize::MAX; self.n];
        let mut queue = std::collections::VecDeque::from([a]);
        prev[a] = a;
        while let Some(v) = queue.pop_front() {
            if v == b {
                let mut path = vec![b];
                let mut cur = b;
                while cur != a {
                    cur = prev[cur];
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            for w in self.neighbours(v) {
                if prev[w] == usize::MAX {
                    prev[w] = v;
                    queue.push_back(w);
                }
            }
        }
        None
    }

    fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.n];
        let mut blocks = Vec::new();
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            let mut block = vec![start];
            seen[start] = true;
            let mut k = 0;
            while k < block.len() {
                let v = block[k];
                for w in self.neighbours(v) {
                    if !seen[w] {
                        seen[w] = true;
                        block.push(w);
                    }
                }
                k += 1;
            }
            block.sort_unstable();
            blocks.push(block);
        }
        blocks
    }

    /// DOT rendering with 1-based labels and one cluster per block.
    pub fn to_dot(&self, partition: &Partition) -> String {
        let mut out = String::from("graph G {\n  node [shape=circle];\n");
        for (k, block) in partition.blocks.iter().enumerate() {
            let _ = writeln!(out, "  subgraph cluster_{} {{\n    label=\"S{}\";", k + 1, k + 1);
            for &i in block {
                let _ = writeln!(out, "    A{};", i + 1);
            }
            out.push_str("  }\n");
        }
        for (i, j) in self.edges() {
            let _ = writeln!(out, "  A{} -- A{};", i + 1, j + 1);
        }
        out.push_str("}\n");
        out
    }
}

/// Disjoint blocks covering all parties, each sorted, ordered by smallest element.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    pub blocks: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(mut blocks: Vec<Vec<usize>>) -> Result<Self> {
        let n: usize = blocks.iter().map(|b| b.len()).sum();
        let mut seen = vec![false; n];
        for b in &blocks {
            if b.is_empty() {
                return Err(Error::InvalidParameter("empty block".into()));
            }
            for &i in b {
                if i >= n || seen[i] {
                    return Err(Error::InvalidParameter(format!("{blocks:?} is not a partition")));
                }
                seen[i] = true;
            }
        }
        for b in blocks.iter_mut() {
            b.sort_unstable();
        }
        blocks.sort_by_key(|b| b[0]);
        Ok(Self { blocks })
    }

    pub fn parties(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    pub fn block_of(&self, i: usize) -> usize {
        self.blocks.iter().position(|b| b.contains(&i)).expect("party covered")
    }

    /// 1-based rendering such as `{{1,2,3},{4}}`.
    pub fn label(&self) -> String {
        let inner: Vec<String> = self
            .blocks
            .iter()
            .map(|b| format!("{{{}}}", b.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(",")))
            .collect();
        format!("{{{}}}", inner.join(","))
    }
}

/// Local operators mapping a source state onto a target.
#[derive(Clone, Debug, Serialize)]
pub struct SloccWitness {
    #[serde(serialize_with = "serialize_ops")]
    pub ops: Vec<LocalOperator>,
    pub invertible: Vec<bool>,
}

fn serialize_ops<S: serde::Serializer>(ops: &[LocalOperator], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(ops.len()))?;
    for op in ops {
        let rows: Vec<Vec<[f64; 2]>> = (0..op.matrix.nrows())
            .map(|r| (0..op.matrix.ncols()).map(|c| [op.matrix[(r, c)].re, op.matrix[(r, c)].im]).collect())
            .collect();
        seq.serialize_element(&serde_json::json!({ "party": op.party + 1, "matrix": rows }))?;
    }
    seq.end()
}

impl SloccWitness {
    pub fn new(ops: Vec<LocalOperator>) -> Self {
        let invertible = ops
            .iter()
            .map(|op| {
                let m = &op.matrix;
                m.nrows() >= m.ncols() && linalg::numeric_rank(m, tol::SVD_RANK) == m.ncols()
            })
            .collect();
        Self { ops, invertible }
    }

    pub fn apply(&self, s: &PureState) -> Result<PureState> {
        s.apply_all(&self.ops)
    }

    /// Fidelity of the image of `src` with `dst`.
    pub fn fidelity(&self, src: &PureState, dst: &PureState) -> Result<f64> {
        let image = self.apply(src)?;
        image.fidelity(dst)
    }

    pub fn verifies(&self, src: &PureState, dst: &PureState) -> bool {
        self.fidelity(src, dst).map(|f| f >= 1.0 - tol::FID).unwrap_or(false)
    }

    pub fn all_unitary(&self) -> bool {
        self.ops.iter().all(|op| linalg::unitarity_defect(&op.matrix) <= tol::UNITARY)
    }

    /// Restricts every operator to the support of the corresponding reduced
    /// state of `src`; the action on `src` is unchanged.
    pub fn restricted_to_support(&self, src: &PureState) -> Result<Self> {
        let ops = self
            .ops
            .iter()
            .map(|op| {
                let m = src.matricize(&[op.party])?;
                let r = linalg::numeric_rank(&m, tol::RANK_EIG.sqrt());
                let (u, _, _) = linalg::svd_sorted(&m);
                let u = u.columns(0, r).into_owned();
                let proj = &u * u.adjoint();
                Ok(LocalOperator::new(op.party, &op.matrix * proj))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(ops))
    }
}

fn normalized_pair(s: &PureState, i: usize, j: usize) -> Result<(CMat, CMat, CMat)> {
    let n = s.normalized();
    let rij = n.reduced_density(&[i, j])?.matrix;
    let ri = n.reduced_density(&[i])?.matrix;
    let rj = n.reduced_density(&[j])?.matrix;
    Ok((rij, ri, rj))
}

/// Relative Frobenius distance `‖ρ_ij − ρ_i ⊗ ρ_j‖ / ‖ρ_ij‖`.
pub fn independence_defect(s: &PureState, i: usize, j: usize) -> Result<f64> {
    s.check_party(i)?;
    s.check_party(j)?;
    if i == j {
        return Err(Error::InvalidParameter("independence needs two distinct parties".into()));
    }
    let (rij, ri, rj) = normalized_pair(s, i, j)?;
    let diff = &rij - linalg::kron(&ri, &rj);
    Ok(linalg::frobenius(&diff) / linalg::frobenius(&rij))
}

pub fn is_independent(s: &PureState, i: usize, j: usize) -> Result<bool> {
    Ok(independence_defect(s, i, j)? < tol::INDEP)
}

pub fn independence_graph(s: &PureState) -> IndependenceGraph {
    let n = s.parties();
    let mut adjacency = vec![vec![false; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let dep = !is_independent(s, i, j).expect("distinct parties in range");
            adjacency[i][j] = dep;
            adjacency[j][i] = dep;
        }
    }
    IndependenceGraph { n, adjacency }
}

pub fn partition(s: &PureState) -> Partition {
    Partition::new(independence_graph(s).components()).expect("components partition the parties")
}

/// Pure factor on each block of the partition, in block order.
pub fn factorize(s: &PureState) -> Result<Vec<PureState>> {
    factorize_along(s, &partition(s))
}

pub fn factorize_along(s: &PureState, p: &Partition) -> Result<Vec<PureState>> {
    let scale = s.norm();
    let mut out = Vec::with_capacity(p.blocks.len());
    for block in &p.blocks {
        let rho = s.reduced_density(block)?;
        let (vals, vecs) = linalg::hermitian_eigen(&rho.matrix);
        let purity = vals[0] / rho.trace();
        if purity < 1.0 - tol::PURITY {
            return Err(Error::FactorizationInconsistency { block: block.iter().map(|i| i + 1).collect(), purity });
        }
        let dims: Vec<usize> = block.iter().map(|&i| s.dims()[i]).collect();
        let v: Vec<C64> = vecs.column(0).iter().copied().collect();
        out.push(PureState::new(dims, v)?);
    }
    // carry the overall norm and phase on the first factor
    let rebuilt = reassemble(&out, p)?;
    let phase = rebuilt.inner(s)?;
    let phase = if phase.norm() > 0.0 { phase / phase.norm() } else { C64::new(1.0, 0.0) };
    out[0] = out[0].scaled(phase * scale);
    Ok(out)
}

/// Tensor product of block factors, reordered into the original party order.
pub fn reassemble(factors: &[PureState], p: &Partition) -> Result<PureState> {
    let mut acc = factors[0].clone();
    for f in &factors[1..] {
        acc = acc.tensor_product(f, None)?;
    }
    // acc's party order is the concatenation of the blocks
    let flat: Vec<usize> = p.blocks.iter().flatten().copied().collect();
    let mut order = vec![0usize; flat.len()];
    for (pos, &party) in flat.iter().enumerate() {
        order[party] = pos;
    }
    acc.permute(&order)
}

pub fn is_completely_independent(s: &PureState, i: usize, j: usize) -> Result<bool> {
    s.check_party(i)?;
    s.check_party(j)?;
    if i == j {
        return Err(Error::InvalidParameter("complete independence needs two distinct parties".into()));
    }
    let p = partition(s);
    Ok(p.block_of(i) != p.block_of(j))
}

/// Refinement order: every block of `q` lies inside a block of `p`.
pub fn partition_geq(p: &Partition, q: &Partition) -> Result<bool> {
    if p.parties() != q.parties() {
        return Err(Error::PartyCountMismatch(p.parties(), q.parties()));
    }
    Ok(q.blocks.iter().all(|b| p.blocks.iter().any(|a| b.iter().all(|i| a.contains(i)))))
}

/// GHZ-orbit witness: invertible `X_i` with `⊗X_i Σ_k |k…k⟩ ∝ s`.
///
/// Columns are unit vectors; the term coefficients go to the last party,
/// rescaled by their root mean square, so the operators are all unitary
/// exactly when `s` is a locally rotated GHZ state.
pub fn ghz_witness(s: &PureState, inv: &InvariantVector) -> Result<Option<SloccWitness>> {
    let Some(d) = inv.rank.exact_value() else {
        return Err(Error::RankUndetermined(format!(
            "bounds [{}, {}]",
            inv.rank.lower,
            inv.rank.upper.map_or("?".into(), |u| u.to_string())
        )));
    };
    if inv.local_ranks.iter().any(|&r| r != d) || s.parties() < 2 {
        return Ok(None);
    }
    let Some(dec) = inv.rank.witness.as_ref() else {
        return Ok(None);
    };
    let w = witness_from_decomposition(dec)?;
    if !w.verifies(&ghz(d, s.parties()), s) {
        return Err(Error::InvalidWitness("GHZ witness does not reproduce the state".into()));
    }
    Ok(Some(polish_unitary(w, s, d)))
}

/// Operators whose columns are the (gauge-fixed) factors of `dec`.
pub fn witness_from_decomposition(dec: &Decomposition) -> Result<SloccWitness> {
    let n = dec.dims.len();
    let d = dec.len();
    let mut coeffs = vec![C64::new(1.0, 0.0); d];
    let mut mats: Vec<CMat> = (0..n).map(|i| dec.factor_matrix(i)).collect();
    for k in 0..d {
        for m in mats.iter_mut() {
            let norm = m.column(k).norm();
            if norm == 0.0 {
                return Err(Error::InvalidWitness("decomposition has a zero factor".into()));
            }
            m.column_mut(k).unscale_mut(norm);
            coeffs[k] *= norm;
        }
    }
    let rms = (coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>() / d as f64).sqrt();
    let last = n - 1;
    for (k, c) in coeffs.iter().enumerate() {
        for z in mats[last].column_mut(k).iter_mut() {
            *z *= c / rms;
        }
    }
    let ops = mats.into_iter().enumerate().map(|(i, m)| LocalOperator::new(i, m)).collect();
    Ok(SloccWitness::new(ops))
}

/// Replaces nearly unitary operators by their polar factors when the result
/// still reproduces the state.
fn polish_unitary(w: SloccWitness, s: &PureState, d: usize) -> SloccWitness {
    let near = w.ops.iter().all(|op| linalg::unitarity_defect(&op.matrix) < 1e-6);
    if !near {
        return w;
    }
    let ops: Vec<LocalOperator> = w
        .ops
        .iter()
        .map(|op| {
            let (u, _, vt) = linalg::svd_sorted(&op.matrix);
            let k = op.matrix.ncols();
            LocalOperator::new(op.party, u.columns(0, k) * vt.rows(0, k))
        })
        .collect();
    let polished = SloccWitness::new(ops);
    if polished.verifies(&ghz(d, s.parties()), s) {
        polished
    } else {
        w
    }
}

/// `Σ_{i<d−1} |i⟩^{⊗N} + Σ_{i<j} |i⟩|d−1⟩^{⊗(N−1)}`, party 0 of dimension `d − 1`.
pub fn family_member_d_minus_1(d: usize, j: usize, n: usize) -> Result<PureState> {
    if d < 2 || j < 1 || j > d - 1 || n < 3 {
        return Err(Error::InvalidParameter(format!("need d ≥ 2, 1 ≤ j ≤ d−1, N ≥ 3 (got d={d}, j={j}, N={n})")));
    }
    let mut dims = vec![d; n];
    dims[0] = d - 1;
    let mut terms: Vec<(Vec<usize>, C64)> = (0..d - 1).map(|i| (vec![i; n], C64::new(1.0, 0.0))).collect();
    for i in 0..j {
        let mut idx = vec![d - 1; n];
        idx[0] = i;
        terms.push((idx, C64::new(1.0, 0.0)));
    }
    PureState::from_terms(dims, &terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::invariants::{self, invariant_vector, SearchBudget};
    use crate::linalg::c;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fig1() -> PureState {
        PureState::from_kets(
            vec![2, 4, 2, 2],
            &["0000", "0110", "1200", "1310", "0001", "0111", "1201", "1311"],
        )
        .unwrap()
    }

    fn w() -> PureState {
        PureState::from_kets(vec![2, 2, 2], &["001", "010", "100"]).unwrap()
    }

    fn zero_bell() -> PureState {
        PureState::from_kets(vec![2, 2, 2], &["000", "011"]).unwrap()
    }

    /// ρ_12 − ρ_1 ⊗ ρ_2 straight from amplitude sums.
    fn brute_defect(s: &PureState, i: usize, j: usize) -> f64 {
        let n = s.normalized();
        let (di, dj) = (s.dims()[i], s.dims()[j]);
        let mut rij = CMat::zeros(di * dj, di * dj);
        let mut ri = CMat::zeros(di, di);
        let mut rj = CMat::zeros(dj, dj);
        let mut ia = vec![0; s.parties()];
        let mut ib = vec![0; s.parties()];
        for a in 0..s.total_dim() {
            crate::state::unflatten(s.dims(), a, &mut ia);
            for b in 0..s.total_dim() {
                crate::state::unflatten(s.dims(), b, &mut ib);
                let z = n.amps()[a] * n.amps()[b].conj();
                let rest = |skip: &[usize]| (0..s.parties()).filter(|k| !skip.contains(k)).all(|k| ia[k] == ib[k]);
                if rest(&[i, j]) {
                    rij[(ia[i] * dj + ia[j], ib[i] * dj + ib[j])] += z;
                }
                if rest(&[i]) {
                    ri[(ia[i], ib[i])] += z;
                }
                if rest(&[j]) {
                    rj[(ia[j], ib[j])] += z;
                }
            }
        }
        linalg::frobenius(&(rij - linalg::kron(&ri, &rj)))
    }

    #[test]
    fn fig1_independence() {
        let s = fig1();
        assert!(is_independent(&s, 0, 2).unwrap());
        assert!(is_independent(&s, 1, 3).unwrap());
        assert!(!is_independent(&s, 0, 1).unwrap());
        assert!(brute_defect(&s, 0, 1) > 0.1);
        assert!(brute_defect(&s, 0, 2) < 1e-14);
        assert!(is_independent(&s, 1, 1).is_err());
    }

    #[test]
    fn graph_examples() {
        assert_eq!(independence_graph(&fig1()).edges(), vec![(0, 1), (1, 2)]);
        assert_eq!(independence_graph(&ghz(2, 3)).edges(), vec![(0, 1), (0, 2), (1, 2)]);
        let prod = PureState::from_kets(vec![2, 2, 2], &["000"]).unwrap();
        assert!(independence_graph(&prod).edges().is_empty());
    }

    #[test]
    fn partition_examples() {
        assert_eq!(partition(&fig1()).blocks, vec![vec![0, 1, 2], vec![3]]);
        assert_eq!(partition(&w()).blocks, vec![vec![0, 1, 2]]);
        assert_eq!(partition(&zero_bell()).blocks, vec![vec![0], vec![1, 2]]);
        assert_eq!(partition(&fig1()).label(), "{{1,2,3},{4}}");
    }

    #[test]
    fn factorize_examples() {
        let s = fig1();
        let f = factorize(&s).unwrap();
        assert_eq!(f.len(), 2);
        let plus = PureState::from_kets(vec![2], &["0", "1"]).unwrap();
        assert!(f[1].equal_up_to_phase_scale(&plus).unwrap().0);
        let back = reassemble(&f, &partition(&s)).unwrap();
        assert!(back.equal_up_to_phase_scale(&s).unwrap().0);
        assert!((back.norm() - s.norm()).abs() < 1e-12);

        let f = factorize(&zero_bell()).unwrap();
        assert!(f[0].equal_up_to_phase_scale(&PureState::from_kets(vec![2], &["0"]).unwrap()).unwrap().0);
        assert!(f[1].equal_up_to_phase_scale(&ghz(2, 2)).unwrap().0);
        assert_eq!(factorize(&ghz(3, 3)).unwrap().len(), 1);
    }

    #[test]
    fn factorize_rejects_a_wrong_partition() {
        let p = Partition::new(vec![vec![0], vec![1, 2]]).unwrap();
        assert!(matches!(factorize_along(&ghz(2, 3), &p), Err(Error::FactorizationInconsistency { .. })));
    }

    #[test]
    fn complete_independence_examples() {
        let s = fig1();
        assert!(!is_completely_independent(&s, 0, 2).unwrap());
        assert!(is_completely_independent(&s, 0, 3).unwrap());
        assert!(!is_completely_independent(&ghz(2, 2), 0, 1).unwrap());
    }

    #[test]
    fn partition_order_examples() {
        let p = |b: Vec<Vec<usize>>| Partition::new(b).unwrap();
        assert!(partition_geq(&p(vec![vec![0, 1, 2]]), &p(vec![vec![0, 1], vec![2]])).unwrap());
        let a = p(vec![vec![0, 1], vec![2]]);
        let b = p(vec![vec![0], vec![1, 2]]);
        assert!(!partition_geq(&a, &b).unwrap() && !partition_geq(&b, &a).unwrap());
        assert!(partition_geq(&a, &a).unwrap());
        assert!(partition_geq(&a, &p(vec![vec![0], vec![1]])).is_err());
    }

    #[test]
    fn ghz_witness_for_rotated_ghz() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = ghz(3, 3);
        for i in 0..3 {
            s = s.apply_local(&LocalOperator::new(i, linalg::random_unitary(3, &mut rng))).unwrap();
        }
        let inv = invariant_vector(&s, &SearchBudget::default());
        let wit = ghz_witness(&s, &inv).unwrap().expect("GHZ orbit");
        assert!(wit.fidelity(&ghz(3, 3), &s).unwrap() >= 1.0 - 1e-9);
        assert!(wit.all_unitary());
    }

    #[test]
    fn ghz_witness_absent_outside_the_orbit() {
        let inv = invariant_vector(&w(), &SearchBudget::default());
        assert!(ghz_witness(&w(), &inv).unwrap().is_none());
        let psi3 = PureState::from_kets(vec![2, 3, 3], &["000", "111", "022"]).unwrap();
        let inv = invariant_vector(&psi3, &SearchBudget::default());
        assert!(ghz_witness(&psi3, &inv).unwrap().is_none());
    }

    #[test]
    fn family_members() {
        let s = family_member_d_minus_1(3, 1, 3).unwrap();
        assert_eq!(s, PureState::from_kets(vec![2, 3, 3], &["000", "111", "022"]).unwrap());
        let s = family_member_d_minus_1(3, 2, 3).unwrap();
        assert_eq!(s, PureState::from_kets(vec![2, 3, 3], &["000", "111", "022", "122"]).unwrap());
        for (d, n) in [(3, 3), (4, 3), (3, 4)] {
            for j in 1..d {
                let s = family_member_d_minus_1(d, j, n).unwrap();
                let mut expect = vec![d; n];
                expect[0] = d - 1;
                assert_eq!(invariants::local_ranks(&s), expect);
            }
        }
        assert!(family_member_d_minus_1(3, 3, 3).is_err());
        assert!(family_member_d_minus_1(3, 1, 2).is_err());
    }

    #[test]
    fn dot_export_lists_edges_and_clusters() {
        let s = fig1();
        let dot = independence_graph(&s).to_dot(&partition(&s));
        assert!(dot.contains("A1 -- A2;") && dot.contains("A2 -- A3;"));
        assert!(!dot.contains("A1 -- A3;"));
        assert!(dot.contains("cluster_2") && dot.contains("A4;"));
    }

    #[test]
    fn witness_restriction_keeps_action() {
        let op = LocalOperator::new(0, CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]));
        let s = PureState::from_kets(vec![2, 2], &["00", "01"]).unwrap();
        let w = SloccWitness::new(vec![op]);
        let r = w.restricted_to_support(&s).unwrap();
        assert!(r.apply(&s).unwrap().equal_up_to_phase_scale(&w.apply(&s).unwrap()).unwrap().0);
    }
}
