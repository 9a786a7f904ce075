//! SLOCC invariants: local ranks and tensor rank, plus bipartite Schmidt data
//! and the majorization test for bipartite LOCC conversion.

mod als;
pub mod pencil;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::state::{LocalOperator, PureState, StateFile};
use crate::tol;
use crate::C64;

pub use pencil::KroneckerStructure;

/// How a rank bound was established.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankMethod {
    Flattening,
    Pencil,
    AlsSearch,
    Construction,
    /// Simultaneous-diagonalization proof that the rank exceeds a local rank.
    Exclusion,
}

impl RankMethod {
    pub fn name(self) -> &'static str {
        match self {
            RankMethod::Flattening => "flattening",
            RankMethod::Pencil => "pencil",
            RankMethod::AlsSearch => "als-search",
            RankMethod::Construction => "construction",
            RankMethod::Exclusion => "exclusion",
        }
    }
}

/// Budget for the decomposition search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub restarts: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Largest rank tried above the lower bound.
    pub max_extra_rank: usize,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self { restarts: 32, iterations: 2000, seed: 0, max_extra_rank: 4 }
    }
}

impl SearchBudget {
    pub fn low() -> Self {
        Self { restarts: 8, iterations: 500, ..Self::default() }
    }

    pub fn high() -> Self {
        Self { restarts: 128, iterations: 5000, max_extra_rank: 6, ..Self::default() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// A sum of product vectors; `terms[k][i]` is the factor of term `k` on party `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub dims: Vec<usize>,
    pub terms: Vec<Vec<Vec<C64>>>,
}

impl Decomposition {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term_state(&self, k: usize) -> Result<PureState> {
        PureState::product(&self.terms[k])
    }

    /// The represented tensor as raw amplitudes.
    pub fn amplitudes(&self) -> Vec<C64> {
        let total: usize = self.dims.iter().product();
        let mut acc = vec![C64::new(0.0, 0.0); total];
        for term in &self.terms {
            let mut amps = vec![C64::new(1.0, 0.0)];
            for v in term {
                amps = amps.iter().flat_map(|a| v.iter().map(move |b| a * b)).collect();
            }
            for (x, y) in acc.iter_mut().zip(amps) {
                *x += y;
            }
        }
        acc
    }

    /// `‖ψ − Σ terms‖ / ‖ψ‖`.
    pub fn residual(&self, s: &PureState) -> f64 {
        if s.dims() != self.dims.as_slice() {
            return f64::INFINITY;
        }
        let diff: f64 = self.amplitudes().iter().zip(s.amps()).map(|(a, b)| (a - b).norm_sqr()).sum();
        diff.sqrt() / s.norm()
    }

    /// Factor matrix of party `i` (columns are the term vectors).
    pub fn factor_matrix(&self, i: usize) -> CMat {
        DMatrix::from_fn(self.dims[i], self.terms.len(), |r, k| self.terms[k][i][r])
    }

    /// Maps every factor through a local isometry per party.
    fn lift(&self, isometries: &[CMat]) -> Self {
        let dims = isometries.iter().map(|u| u.nrows()).collect();
        let terms = self
            .terms
            .iter()
            .map(|t| {
                t.iter()
                    .zip(isometries)
                    .map(|(v, u)| (u * nalgebra::DVector::from_column_slice(v)).iter().copied().collect())
                    .collect()
            })
            .collect();
        Self { dims, terms }
    }

    /// Reinserts a party of dimension one carrying the vector `v` at position `i`.
    fn insert_party(&self, i: usize, v: &[C64]) -> Self {
        let mut dims = self.dims.clone();
        dims.insert(i, v.len());
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let mut t = t.clone();
                t.insert(i, v.to_vec());
                t
            })
            .collect();
        Self { dims, terms }
    }

    /// One state-file record per product term.
    pub fn to_state_files(&self) -> Result<Vec<StateFile>> {
        (0..self.len()).map(|k| Ok(self.term_state(k)?.to_file())).collect()
    }

    fn permuted(&self, order: &[usize]) -> Self {
        let dims = order.iter().map(|&i| self.dims[i]).collect();
        let terms = self.terms.iter().map(|t| order.iter().map(|&i| t[i].clone()).collect()).collect();
        Self { dims, terms }
    }
}

/// Tensor rank bounds together with how they were obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankStatus {
    pub lower: usize,
    pub upper: Option<usize>,
    pub exact: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness: Option<Decomposition>,
    pub methods: Vec<RankMethod>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

impl RankStatus {
    pub fn exact_value(&self) -> Option<usize> {
        if self.exact {
            Some(self.lower)
        } else {
            None
        }
    }

    pub fn method_label(&self) -> String {
        self.methods.iter().map(|m| m.name()).collect::<Vec<_>>().join("+")
    }

    fn add_method(&mut self, m: RankMethod) {
        if !self.methods.contains(&m) {
            self.methods.push(m);
        }
    }

    fn settle(&mut self) {
        if let Some(u) = self.upper {
            if u < self.lower {
                self.lower = u;
            }
            self.exact = u == self.lower;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantVector {
    pub rank: RankStatus,
    pub local_ranks: Vec<usize>,
}

/// Number of eigenvalues of `ρ_i` above `τ_rank_eig` times the largest one.
pub fn local_rank(s: &PureState, i: usize) -> Result<usize> {
    s.check_party(i)?;
    Ok(linalg::numeric_rank(&s.matricize(&[i])?, tol::RANK_EIG.sqrt()))
}

pub fn local_ranks(s: &PureState) -> Vec<usize> {
    (0..s.parties()).map(|i| local_rank(s, i).expect("party in range")).collect()
}

/// Squared Schmidt coefficients across `left | rest`, descending, summing to one.
pub fn schmidt(s: &PureState, left: &[usize]) -> Result<Vec<f64>> {
    if left.len() >= s.parties() {
        return Err(Error::InvalidSubset("the left side must be a proper subset".into()));
    }
    let sv = linalg::singular_values(&s.matricize(left)?);
    let total: f64 = sv.iter().map(|x| x * x).sum();
    Ok(sv.iter().map(|x| x * x / total).collect())
}

/// Bipartite LOCC convertibility: `src → dst` iff the Schmidt vector of `src`
/// is majorized by that of `dst`.
pub fn majorization_locc(src: &PureState, dst: &PureState) -> Result<bool> {
    Ok(majorization_gap(src, dst)?.is_none())
}

/// First index `k` (1-based count) where the partial sums violate majorization,
/// with both partial sums.
pub fn majorization_gap(src: &PureState, dst: &PureState) -> Result<Option<(usize, f64, f64)>> {
    if src.parties() != 2 {
        return Err(Error::NotBipartite(src.parties()));
    }
    if dst.parties() != 2 {
        return Err(Error::NotBipartite(dst.parties()));
    }
    Ok(majorization_violation(&schmidt(src, &[0])?, &schmidt(dst, &[0])?))
}

pub fn majorization_violation(src: &[f64], dst: &[f64]) -> Option<(usize, f64, f64)> {
    let n = src.len().max(dst.len());
    let (mut a, mut b) = (0.0, 0.0);
    for k in 0..n {
        a += src.get(k).copied().unwrap_or(0.0);
        b += dst.get(k).copied().unwrap_or(0.0);
        if a > b + tol::MAJOR {
            return Some((k + 1, a, b));
        }
    }
    None
}

/// Rank of the matricization over `rows`.
fn flattening_rank(s: &PureState, rows: &[usize]) -> usize {
    linalg::numeric_rank(&s.matricize(rows).expect("valid subset"), tol::SVD_RANK)
}

/// Largest flattening rank over all bipartitions of the parties.
pub fn flattening_bound(s: &PureState) -> usize {
    let n = s.parties();
    if n < 2 {
        return 1;
    }
    let mut best = 1;
    // subsets containing party 0, excluding the full set
    for mask in 0..(1u64 << (n - 1)) {
        let rows: Vec<usize> = std::iter::once(0).chain((1..n).filter(|&i| mask >> (i - 1) & 1 == 1)).collect();
        if rows.len() == n {
            continue;
        }
        best = best.max(flattening_rank(s, &rows));
    }
    best
}

/// Decomposition read off the slices along the best free party.
pub fn slice_construction(s: &PureState) -> Decomposition {
    let n = s.parties();
    let mut best: Option<Decomposition> = None;
    for f in 0..n {
        let rest: Vec<usize> = (0..n).filter(|&i| i != f).collect();
        let m = s.matricize(&rest).expect("valid subset");
        let mut terms = Vec::new();
        let mut idx = vec![0usize; rest.len()];
        for row in 0..m.nrows() {
            let v: Vec<C64> = m.row(row).iter().copied().collect();
            if v.iter().all(|z| z.norm_sqr() == 0.0) {
                continue;
            }
            let mut rem = row;
            for p in (0..rest.len()).rev() {
                idx[p] = rem % s.dims()[rest[p]];
                rem /= s.dims()[rest[p]];
            }
            let mut term = Vec::with_capacity(n);
            let mut p = 0;
            for i in 0..n {
                if i == f {
                    term.push(v.clone());
                } else {
                    let mut e = vec![C64::new(0.0, 0.0); s.dims()[i]];
                    e[idx[p]] = C64::new(1.0, 0.0);
                    term.push(e);
                    p += 1;
                }
            }
            terms.push(term);
        }
        if best.as_ref().is_none_or(|b| terms.len() < b.len()) {
            best = Some(Decomposition { dims: s.dims().to_vec(), terms });
        }
    }
    best.expect("at least one party")
}

/// Local support isometries (columns span the range of each `ρ_i`).
fn local_supports(s: &PureState) -> Vec<CMat> {
    (0..s.parties())
        .map(|i| {
            let m = s.matricize(&[i]).expect("party in range");
            let r = linalg::numeric_rank(&m, tol::RANK_EIG.sqrt());
            if r == m.nrows() {
                return linalg::identity(r);
            }
            let (u, _, _) = linalg::svd_sorted(&m);
            u.columns(0, r).into_owned()
        })
        .collect()
}

/// The state expressed in its local supports, with dimension-one parties
/// removed. Returns the compressed state, the kept parties and the isometries
/// of all parties.
struct Compressed {
    state: PureState,
    kept: Vec<usize>,
    isometries: Vec<CMat>,
}

fn compress(s: &PureState) -> Compressed {
    let isometries = local_supports(s);
    let mut state = s.clone();
    for (i, u) in isometries.iter().enumerate() {
        if u.ncols() == u.nrows() {
            continue;
        }
        state = state.apply_local_unchecked(&LocalOperator::new(i, u.adjoint())).expect("isometry fits");
    }
    let kept: Vec<usize> = (0..s.parties()).filter(|&i| isometries[i].ncols() > 1).collect();
    let mut reduced = state.clone();
    if kept.is_empty() {
        // a product state: keep the first party only
        let dims = vec![1];
        let amp = state.amps()[0];
        reduced = PureState::new(dims, vec![amp]).expect("nonzero amplitude");
    } else {
        for i in (0..s.parties()).rev() {
            if !kept.contains(&i) {
                reduced = reduced.drop_trivial_party(i).expect("trivial party");
            }
        }
    }
    Compressed { state: reduced, kept, isometries }
}

impl Compressed {
    /// Expresses a decomposition of the compressed state in the original space.
    fn lift(&self, dec: &Decomposition, original: &PureState) -> Decomposition {
        let kept_iso: Vec<CMat> = self.kept.iter().map(|&i| self.isometries[i].clone()).collect();
        let mut lifted = if self.kept.is_empty() { dec.clone() } else { dec.lift(&kept_iso) };
        if self.kept.is_empty() {
            lifted = Decomposition { dims: vec![], terms: vec![vec![]; dec.len()] };
        }
        for i in 0..original.parties() {
            if self.kept.contains(&i) {
                continue;
            }
            let v: Vec<C64> = self.isometries[i].column(0).iter().copied().collect();
            lifted = lifted.insert_party(i, &v);
        }
        // absorb the global scalar of a product state into the first factor
        if self.kept.is_empty() {
            let scalar = dec.terms[0][0][0];
            for z in lifted.terms[0][0].iter_mut() {
                *z *= scalar;
            }
        }
        lifted
    }
}

/// Tensor rank of a `2 × M × N` state (party 0 of dimension two) from the
/// Kronecker structure of its slice pencil.
pub fn tensor_rank_2mn(s: &PureState, budget: &SearchBudget) -> Result<RankStatus> {
    if s.parties() != 3 || s.dims()[0] != 2 {
        return Err(Error::InvalidParameter(format!("expected dimensions (2, M, N), got {:?}", s.dims())));
    }
    let (m, n) = (s.dims()[1], s.dims()[2]);
    let slices = s.matricize(&[0])?;
    let a = CMat::from_fn(m, n, |r, c| slices[(0, r * n + c)]);
    let b = CMat::from_fn(m, n, |r, c| slices[(1, r * n + c)]);
    let k = pencil::kronecker_structure(&a, &b, budget.seed)?;
    let r = k.tensor_rank();
    let mut status = RankStatus {
        lower: r,
        upper: Some(r),
        exact: true,
        witness: None,
        methods: vec![RankMethod::Pencil],
        notes: vec![format!(
            "pencil: normal rank {}, column indices {:?}, row indices {:?}, regular part {}, δ = {}",
            k.normal_rank, k.column_indices, k.row_indices, k.regular_size, k.delta
        )],
    };
    status.witness = find_witness(s, r, budget);
    if status.witness.is_none() {
        status.notes.push(format!("no {r}-term witness found within the search budget"));
    }
    Ok(status)
}

/// A rank-`r` decomposition, exact when possible, otherwise by search.
fn find_witness(s: &PureState, r: usize, budget: &SearchBudget) -> Option<Decomposition> {
    if s.dims().iter().all(|&d| d == r) {
        if let JennrichResult::Decomposed(d) = jennrich(s, r, budget.seed) {
            return Some(d);
        }
    }
    let construction = slice_construction(s);
    if construction.len() == r {
        return Some(construction);
    }
    als::search(s, r, budget).decomposition
}

enum JennrichResult {
    Decomposed(Decomposition),
    /// A rank-`d` decomposition is impossible.
    Excluded,
    Inconclusive,
}

/// Simultaneous diagonalization for a state whose parties 0 and 1 both have
/// dimension `d` equal to their local ranks (compressed coordinates).
fn jennrich(s: &PureState, d: usize, seed: u64) -> JennrichResult {
    let n = s.parties();
    if n < 3 || s.dims()[0] != d || s.dims()[1] != d {
        return JennrichResult::Inconclusive;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6a09_e667);
    let mut excluded_votes = 0;
    for _ in 0..4 {
        let contract = |rng: &mut ChaCha8Rng| -> CMat {
            let mut t = s.clone();
            for i in (2..n).rev() {
                let w = linalg::random_vector(s.dims()[i], rng);
                let row = CMat::from_fn(1, w.len(), |_, c| w[c]);
                t = t.apply_local_unchecked(&LocalOperator::new(i, row)).expect("fits");
            }
            let m = t.matricize(&[0]).expect("valid party");
            CMat::from_fn(d, d, |r, c| m[(r, c)])
        };
        let m1 = contract(&mut rng);
        let m2 = contract(&mut rng);
        let sv = linalg::singular_values(&m2);
        if sv[d - 1] < 1e-9 * sv[0] {
            excluded_votes += 1;
            if excluded_votes >= 2 {
                return JennrichResult::Excluded;
            }
            continue;
        }
        let e = &m1 * m2.clone().try_inverse().expect("checked invertible");
        let eig = linalg::eigenvalues(&e);
        let scale = eig.iter().map(|z| z.norm()).fold(1e-300, f64::max);
        let mut repeated: Option<C64> = None;
        for a in 0..d {
            for b in a + 1..d {
                if (eig[a] - eig[b]).norm() < 1e-6 * scale {
                    repeated = Some((eig[a] + eig[b]) / 2.0);
                }
            }
        }
        if let Some(lambda) = repeated {
            let shifted = &e - linalg::identity(d) * lambda;
            let null = d - linalg::numeric_rank(&shifted, 1e-6);
            if null < 2 {
                excluded_votes += 1;
                if excluded_votes >= 2 {
                    return JennrichResult::Excluded;
                }
            }
            continue;
        }
        // columns of the party-0 factor matrix are the eigenvectors
        let mut a_mat = CMat::zeros(d, d);
        for (k, lambda) in eig.iter().enumerate() {
            let shifted = &e - linalg::identity(d) * *lambda;
            let (_, _, vt) = linalg::svd_sorted(&shifted);
            let v = vt.row(d - 1).adjoint();
            a_mat.set_column(k, &v);
        }
        let Some(a_inv) = a_mat.clone().try_inverse() else { continue };
        let t = s.apply_local_unchecked(&LocalOperator::new(0, a_inv)).expect("fits");
        let m = t.matricize(&[0]).expect("valid");
        let rest_dims: Vec<usize> = s.dims()[1..].to_vec();
        let mut terms = Vec::with_capacity(d);
        let mut ok = true;
        for k in 0..d {
            let amps: Vec<C64> = m.row(k).iter().copied().collect();
            let Some(factors) = product_factors(&rest_dims, &amps) else {
                ok = false;
                break;
            };
            let mut term = vec![a_mat.column(k).iter().copied().collect::<Vec<_>>()];
            term.extend(factors);
            terms.push(term);
        }
        if !ok {
            continue;
        }
        let dec = Decomposition { dims: s.dims().to_vec(), terms };
        if dec.residual(s) < 1e-10 {
            return JennrichResult::Decomposed(dec);
        }
    }
    JennrichResult::Inconclusive
}

/// Factors of a product vector over `dims`, or `None` if it is entangled
/// (or zero).
pub(crate) fn product_factors(dims: &[usize], amps: &[C64]) -> Option<Vec<Vec<C64>>> {
    let s = PureState::new(dims.to_vec(), amps.to_vec()).ok()?;
    let n = dims.len();
    if n == 1 {
        return Some(vec![amps.to_vec()]);
    }
    // pivot on the largest amplitude and read off the fibres through it
    let (flat, pivot) = amps
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm_sqr().partial_cmp(&b.1.norm_sqr()).unwrap())
        .map(|(i, z)| (i, *z))?;
    let mut idx = vec![0usize; n];
    crate::state::unflatten(dims, flat, &mut idx);
    let mut factors = Vec::with_capacity(n);
    for i in 0..n {
        let fibre: Vec<C64> = (0..dims[i])
            .map(|k| {
                let mut j = idx.clone();
                j[i] = k;
                s.amp(&j).expect("in range")
            })
            .collect();
        factors.push(fibre);
    }
    // the product of the fibres over-counts the pivot n − 1 times
    let correction = C64::new(1.0, 0.0) / pivot.powu(n as u32 - 1);
    for z in factors[0].iter_mut() {
        *z *= correction;
    }
    let dec = Decomposition { dims: dims.to_vec(), terms: vec![factors.clone()] };
    if dec.residual(&s) < 1e-10 {
        Some(factors)
    } else {
        None
    }
}

/// Tensor rank bounds; exact whenever the bounds meet or a closed form applies.
pub fn tensor_rank(s: &PureState, budget: &SearchBudget) -> RankStatus {
    let lower = flattening_bound(s);
    let construction = slice_construction(s);
    let mut status = RankStatus {
        lower,
        upper: Some(construction.len()),
        exact: false,
        witness: Some(construction),
        methods: vec![RankMethod::Flattening, RankMethod::Construction],
        notes: Vec::new(),
    };
    status.settle();
    if status.exact {
        return status;
    }

    let c = compress(s);
    let cs = &c.state;
    if cs.parties() <= 2 {
        // Schmidt decomposition of the compressed bipartite state
        let dec = schmidt_decomposition(cs);
        status.upper = Some(dec.len());
        status.witness = Some(c.lift(&dec, s));
        status.methods = vec![RankMethod::Flattening];
        status.settle();
        return status;
    }

    if cs.parties() == 3 {
        if let Some(p) = (0..3).find(|&i| cs.dims()[i] == 2) {
            let order: Vec<usize> = std::iter::once(p).chain((0..3).filter(|&i| i != p)).collect();
            let permuted = cs.permute(&order).expect("valid permutation");
            match tensor_rank_2mn(&permuted, budget) {
                Ok(mut pencil) => {
                    if let Some(w) = pencil.witness.take() {
                        let mut inverse = vec![0; 3];
                        for (k, &o) in order.iter().enumerate() {
                            inverse[o] = k;
                        }
                        pencil.witness = Some(c.lift(&w.permuted(&inverse), s));
                    } else if status.upper == Some(pencil.lower) {
                        pencil.witness = status.witness.take();
                    }
                    return pencil;
                }
                Err(e) => status.notes.push(format!("pencil method failed: {e}")),
            }
        }
    }

    // rank equal to the largest local rank is decided by simultaneous diagonalization
    let d = status.lower;
    let full: Vec<usize> = (0..cs.parties()).filter(|&i| cs.dims()[i] == d).collect();
    if full.len() >= 2 {
        let order: Vec<usize> = full.iter().take(2).copied().chain((0..cs.parties()).filter(|i| !full[..2].contains(i))).collect();
        let permuted = cs.permute(&order).expect("valid permutation");
        let mut inverse = vec![0; order.len()];
        for (k, &o) in order.iter().enumerate() {
            inverse[o] = k;
        }
        match jennrich(&permuted, d, budget.seed) {
            JennrichResult::Decomposed(dec) => {
                status.upper = Some(d);
                status.witness = Some(c.lift(&dec.permuted(&inverse), s));
                status.add_method(RankMethod::Construction);
                status.settle();
                return status;
            }
            JennrichResult::Excluded => {
                status.lower = d + 1;
                status.add_method(RankMethod::Exclusion);
                status.notes.push(format!("rank {d} excluded by simultaneous diagonalization"));
                status.settle();
                if status.exact {
                    return status;
                }
            }
            JennrichResult::Inconclusive => {}
        }
    }

    let ceiling = status.upper.unwrap_or(usize::MAX).min(status.lower + budget.max_extra_rank + 1);
    let mut border = 0;
    for r in status.lower..ceiling {
        let out = als::search(cs, r, budget);
        border += out.border_rank_restarts;
        if let Some(dec) = out.decomposition {
            status.upper = Some(r);
            status.witness = Some(c.lift(&dec, s));
            status.add_method(RankMethod::AlsSearch);
            break;
        }
    }
    if border > 0 {
        status.notes.push(format!("{border} restarts rejected as border-rank artifacts"));
    }
    status.settle();
    status
}

/// Rank bounds from the flattening bound and decomposition search alone,
/// without closed forms. The upper bound is the smallest rank the search
/// reaches.
pub fn tensor_rank_by_search(s: &PureState, budget: &SearchBudget) -> RankStatus {
    let lower = flattening_bound(s);
    let mut status = RankStatus { lower, upper: None, exact: false, witness: None, methods: vec![RankMethod::Flattening], notes: Vec::new() };
    for r in lower..=lower + budget.max_extra_rank {
        if let Some(dec) = als::search(s, r, budget).decomposition {
            status.upper = Some(r);
            status.witness = Some(dec);
            status.add_method(RankMethod::AlsSearch);
            break;
        }
    }
    status.settle();
    status
}

fn schmidt_decomposition(s: &PureState) -> Decomposition {
    if s.parties() == 1 {
        return Decomposition { dims: s.dims().to_vec(), terms: vec![vec![s.amps().to_vec()]] };
    }
    let m = s.matricize(&[0]).expect("bipartite");
    let (u, sv, vt) = linalg::svd_sorted(&m);
    let r = linalg::numeric_rank(&m, tol::SVD_RANK);
    let terms = (0..r)
        .map(|k| {
            let left: Vec<C64> = u.column(k).iter().map(|z| z * sv[k]).collect();
            let right: Vec<C64> = vt.row(k).iter().copied().collect();
            vec![left, right]
        })
        .collect();
    Decomposition { dims: s.dims().to_vec(), terms }
}

pub fn invariant_vector(s: &PureState, budget: &SearchBudget) -> InvariantVector {
    InvariantVector { rank: tensor_rank(s, budget), local_ranks: local_ranks(s) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::ghz;

    fn ket(dims: &[usize], kets: &[&str]) -> PureState {
        PureState::from_kets(dims.to_vec(), kets).unwrap()
    }

    fn w() -> PureState {
        ket(&[2, 2, 2], &["001", "010", "100"])
    }

    fn theta(c: f64) -> PureState {
        let s = (1.0 - c * c).sqrt();
        PureState::from_terms(vec![2, 2], &[(vec![0, 0], linalg::c(c, 0.0)), (vec![1, 1], linalg::c(s, 0.0))]).unwrap()
    }

    #[test]
    fn local_rank_examples() {
        for d in 2..5 {
            assert_eq!(local_ranks(&ghz(d, 3)), vec![d; 3]);
        }
        assert_eq!(local_ranks(&w()), vec![2, 2, 2]);
    }

    #[test]
    fn schmidt_examples() {
        let bell = ghz(2, 2);
        let s = schmidt(&bell, &[0]).unwrap();
        assert!((s[0] - 0.5).abs() < 1e-15 && (s[1] - 0.5).abs() < 1e-15);
        let t = schmidt(&theta(0.8), &[0]).unwrap();
        assert!((t[0] - 0.64).abs() < 1e-14 && (t[1] - 0.36).abs() < 1e-14);
        let sw = schmidt(&w(), &[0]).unwrap();
        assert!((sw[0] - 2.0 / 3.0).abs() < 1e-14 && (sw[1] - 1.0 / 3.0).abs() < 1e-14);
        assert!(schmidt(&w(), &[0, 1, 2]).is_err());
    }

    #[test]
    fn majorization_examples() {
        assert!(!majorization_locc(&theta(0.8), &ghz(2, 2)).unwrap());
        assert!(majorization_locc(&ghz(2, 2), &theta(0.8)).unwrap());
        assert!(majorization_locc(&theta(0.8), &theta(0.8)).unwrap());
        assert!(matches!(majorization_locc(&w(), &ghz(2, 2)), Err(Error::NotBipartite(3))));
    }

    #[test]
    fn ghz_rank_is_exact_by_construction() {
        for d in 2..6 {
            let r = tensor_rank(&ghz(d, 3), &SearchBudget::default());
            assert!(r.exact);
            assert_eq!(r.lower, d);
            assert!(r.witness.unwrap().residual(&ghz(d, 3)) < tol::RANK_FIT);
        }
    }

    #[test]
    fn w_rank_is_three() {
        let r = tensor_rank(&w(), &SearchBudget::default());
        assert_eq!(r.exact_value(), Some(3));
        let dec = r.witness.unwrap();
        assert_eq!(dec.len(), 3);
        assert!(dec.residual(&w()) < tol::RANK_FIT);
    }

    #[test]
    fn w_is_excluded_from_rank_two() {
        // four-party W: every contraction pencil is a single Jordan block
        let w4 = ket(&[2, 2, 2, 2], &["0001", "0010", "0100", "1000"]);
        let r = tensor_rank(&w4, &SearchBudget::low());
        assert!(r.methods.contains(&RankMethod::Exclusion));
        assert_eq!(r.lower, 3);
        assert_eq!(r.upper, Some(4));
    }

    #[test]
    fn incomparable_224_state_has_rank_four() {
        let s = ket(&[2, 2, 4], &["000", "011", "102", "113"]);
        let r = tensor_rank_2mn(&s, &SearchBudget::default()).unwrap();
        assert_eq!(r.exact_value(), Some(4));
        assert!(r.witness.unwrap().residual(&s) < tol::RANK_FIT);
    }

    #[test]
    fn bipartite_rank_is_schmidt_rank() {
        let r = tensor_rank(&theta(0.8), &SearchBudget::default());
        assert_eq!(r.exact_value(), Some(2));
        let p = ket(&[3, 3], &["00", "01", "10", "11"]);
        let r = tensor_rank(&p, &SearchBudget::default());
        assert_eq!(r.exact_value(), Some(1));
        assert!(r.witness.unwrap().residual(&p) < 1e-12);
    }

    #[test]
    fn product_factors_detects_entanglement() {
        let amps = ket(&[2, 2], &["00", "01", "10", "11"]).amps().to_vec();
        assert!(product_factors(&[2, 2], &amps).is_some());
        assert!(product_factors(&[2, 2], ghz(2, 2).amps()).is_none());
    }

    #[test]
    fn flattening_bound_uses_all_cuts() {
        // two Bell pairs across (0,2) and (1,3): single-party ranks 2, cut {0,1} rank 4
        let s = ket(&[2, 2, 2, 2], &["0000", "0101", "1010", "1111"]);
        assert_eq!(flattening_bound(&s), 4);
    }
}
