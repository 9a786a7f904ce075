//! Unnormalized multipartite pure states and the local operations acting on
//! them.
//!
//! Amplitudes are stored densely in row-major order over the party indices,
//! party 0 slowest. States are never normalized implicitly: every probability
//! is taken relative to `⟨ψ|ψ⟩`.

use std::collections::HashSet;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::tol;

#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    dims: Vec<usize>,
    amps: Vec<C64>,
}

impl PureState {
    pub fn new(dims: Vec<usize>, amps: Vec<C64>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidState("a state needs at least one party".into()));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidState(format!("party dimensions must be positive, got {dims:?}")));
        }
        let total: usize = dims.iter().product();
        if amps.len() != total {
            return Err(Error::InvalidState(format!(
                "{} amplitudes for dimensions {dims:?} (expected {total})",
                amps.len()
            )));
        }
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidState("non-finite amplitude".into()));
        }
        if amps.iter().all(|z| z.norm_sqr() == 0.0) {
            return Err(Error::InvalidState("all amplitudes are zero".into()));
        }
        Ok(Self { dims, amps })
    }

    /// Builds a state from `(multi-index, amplitude)` terms; repeated indices add up.
    pub fn from_terms(dims: Vec<usize>, terms: &[(Vec<usize>, C64)]) -> Result<Self> {
        let total: usize = dims.iter().product();
        let mut amps = vec![C64::new(0.0, 0.0); total];
        for (idx, a) in terms {
            let flat = flat_index(&dims, idx)?;
            amps[flat] += *a;
        }
        Self::new(dims, amps)
    }

    /// Sum of computational basis kets with unit coefficients, e.g. `["000", "111"]`.
    ///
    /// Each character is one party's digit (`0-9`, then `a-z`).
    pub fn from_kets(dims: Vec<usize>, kets: &[&str]) -> Result<Self> {
        let terms = kets
            .iter()
            .map(|k| {
                let idx = k
                    .chars()
                    .map(|ch| ch.to_digit(36).map(|d| d as usize))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| Error::InvalidState(format!("bad ket {k:?}")))?;
                Ok((idx, C64::new(1.0, 0.0)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_terms(dims, &terms)
    }

    pub fn product(vectors: &[Vec<C64>]) -> Result<Self> {
        let dims: Vec<usize> = vectors.iter().map(|v| v.len()).collect();
        let mut amps = vec![C64::new(1.0, 0.0)];
        for v in vectors {
            amps = amps.iter().flat_map(|a| v.iter().map(move |b| a * b)).collect();
        }
        Self::new(dims, amps)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    pub fn parties(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        self.scaled(C64::new(1.0 / n, 0.0))
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self { dims: self.dims.clone(), amps: self.amps.iter().map(|z| z * factor).collect() }
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", self.dims, other.dims)));
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn amp(&self, idx: &[usize]) -> Result<C64> {
        Ok(self.amps[flat_index(&self.dims, idx)?])
    }

    pub(crate) fn check_party(&self, i: usize) -> Result<()> {
        if i >= self.parties() {
            return Err(Error::InvalidParty { index: i, parties: self.parties() });
        }
        Ok(())
    }

    fn check_subset(&self, subset: &[usize]) -> Result<()> {
        if subset.is_empty() {
            return Err(Error::InvalidSubset("empty subset".into()));
        }
        let mut seen = HashSet::new();
        for &i in subset {
            if i >= self.parties() {
                return Err(Error::InvalidSubset(format!("party {i} out of range for {} parties", self.parties())));
            }
            if !seen.insert(i) {
                return Err(Error::InvalidSubset(format!("party {i} repeated")));
            }
        }
        Ok(())
    }

    /// Reshapes the amplitudes into a matrix whose rows run over the parties
    /// in `rows` (in the given order) and whose columns run over the remaining
    /// parties in ascending order.
    pub fn matricize(&self, rows: &[usize]) -> Result<CMat> {
        self.check_subset(rows)?;
        let cols: Vec<usize> = (0..self.parties()).filter(|i| !rows.contains(i)).collect();
        let nr: usize = rows.iter().map(|&i| self.dims[i]).product();
        let nc: usize = cols.iter().map(|&i| self.dims[i]).product();
        let mut m = CMat::zeros(nr, nc);
        let mut idx = vec![0usize; self.parties()];
        for (flat, a) in self.amps.iter().enumerate() {
            unflatten(&self.dims, flat, &mut idx);
            let r = rows.iter().fold(0, |acc, &i| acc * self.dims[i] + idx[i]);
            let c = cols.iter().fold(0, |acc, &i| acc * self.dims[i] + idx[i]);
            m[(r, c)] = *a;
        }
        Ok(m)
    }

    /// Reorders the parties: party `order[k]` of `self` becomes party `k`.
    pub fn permute(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.parties() || {
            let mut s = order.to_vec();
            s.sort_unstable();
            s != (0..self.parties()).collect::<Vec<_>>()
        } {
            return Err(Error::InvalidParameter(format!("{order:?} is not a permutation of the parties")));
        }
        let dims: Vec<usize> = order.iter().map(|&i| self.dims[i]).collect();
        let mut amps = vec![C64::new(0.0, 0.0); self.amps.len()];
        let mut idx = vec![0usize; self.parties()];
        let mut new_idx = vec![0usize; self.parties()];
        for (flat, a) in self.amps.iter().enumerate() {
            unflatten(&self.dims, flat, &mut idx);
            for (k, &i) in order.iter().enumerate() {
                new_idx[k] = idx[i];
            }
            amps[flatten(&dims, &new_idx)] = *a;
        }
        Ok(Self { dims, amps })
    }

    /// Tensor product. Without a grouping the parties of `b` follow those of
    /// `a`. With a grouping, party `i` of `a` and party `grouping[i]` of `b`
    /// become one party of dimension `d_i · d'_{grouping[i]}` (the copy from
    /// `a` is the slower index), which is how multi-copy states are formed.
    pub fn tensor_product(&self, b: &Self, grouping: Option<&[usize]>) -> Result<Self> {
        let ungrouped = {
            let mut dims = self.dims.clone();
            dims.extend_from_slice(&b.dims);
            let amps = self.amps.iter().flat_map(|x| b.amps.iter().map(move |y| x * y)).collect();
            Self { dims, amps }
        };
        let Some(g) = grouping else {
            return Ok(ungrouped);
        };
        let n = self.parties();
        if g.len() != n || b.parties() != n {
            return Err(Error::InvalidGrouping(format!(
                "grouping of length {} between {}- and {}-party states",
                g.len(),
                n,
                b.parties()
            )));
        }
        let mut seen = vec![false; n];
        for &j in g {
            if j >= n || seen[j] {
                return Err(Error::InvalidGrouping(format!("{g:?} is not a bijection")));
            }
            seen[j] = true;
        }
        // Interleave: a_0, b_{g0}, a_1, b_{g1}, ... then merge adjacent pairs.
        let order: Vec<usize> = (0..n).flat_map(|i| [i, n + g[i]]).collect();
        let mut s = ungrouped.permute(&order)?;
        for i in 0..n {
            s = s.merge_parties(i, i + 1)?;
        }
        Ok(s)
    }

    /// `n` copies of the state with each party holding all of its copies.
    pub fn copies(&self, n: usize) -> Result<Self> {
        let identity: Vec<usize> = (0..self.parties()).collect();
        let mut out = self.clone();
        for _ in 1..n.max(1) {
            out = out.tensor_product(self, Some(&identity))?;
        }
        Ok(out)
    }

    /// Reduced density operator on `subset` (rows ordered as given).
    pub fn reduced_density(&self, subset: &[usize]) -> Result<DensityOperator> {
        let m = self.matricize(subset)?;
        let matrix = &m * m.adjoint();
        Ok(DensityOperator { subset: subset.to_vec(), matrix })
    }

    /// Applies a local operator; the party's dimension becomes the operator's
    /// output dimension.
    pub fn apply_local(&self, op: &LocalOperator) -> Result<Self> {
        let out = self.apply_local_unchecked(op)?;
        let scale = linalg::frobenius(&op.matrix).powi(2) * self.norm_sqr();
        if out.amps.iter().map(|z| z.norm_sqr()).sum::<f64>() <= tol::ZERO * tol::ZERO * scale {
            return Err(Error::Annihilated);
        }
        Ok(out)
    }

    /// Like [`apply_local`](Self::apply_local) but a zero result is returned
    /// as raw amplitudes (used for branch enumeration).
    pub(crate) fn apply_local_unchecked(&self, op: &LocalOperator) -> Result<Self> {
        self.check_party(op.party)?;
        let din = self.dims[op.party];
        if op.matrix.ncols() != din {
            return Err(Error::DimensionMismatch(format!(
                "operator on party {} takes dimension {}, party has {}",
                op.party,
                op.matrix.ncols(),
                din
            )));
        }
        let dout = op.matrix.nrows();
        let outer: usize = self.dims[..op.party].iter().product();
        let inner: usize = self.dims[op.party + 1..].iter().product();
        let mut amps = vec![C64::new(0.0, 0.0); outer * dout * inner];
        for o in 0..outer {
            for k in 0..din {
                for t in 0..inner {
                    let a = self.amps[(o * din + k) * inner + t];
                    if a.norm_sqr() == 0.0 {
                        continue;
                    }
                    for r in 0..dout {
                        amps[(o * dout + r) * inner + t] += op.matrix[(r, k)] * a;
                    }
                }
            }
        }
        let mut dims = self.dims.clone();
        dims[op.party] = dout;
        Ok(Self { dims, amps })
    }

    pub fn apply_all(&self, ops: &[LocalOperator]) -> Result<Self> {
        let mut s = self.clone();
        for op in ops {
            s = s.apply_local(op)?;
        }
        Ok(s)
    }

    /// Merges parties `i` and `j` into one party of dimension `d_i · d_j`
    /// placed at `min(i, j)`; party `i` provides the slower index.
    pub fn merge_parties(&self, i: usize, j: usize) -> Result<Self> {
        self.check_party(i)?;
        self.check_party(j)?;
        if i == j {
            return Err(Error::InvalidParameter("cannot merge a party with itself".into()));
        }
        let lo = i.min(j);
        let mut order: Vec<usize> = Vec::with_capacity(self.parties());
        for k in 0..self.parties() {
            if k == lo {
                order.push(i);
                order.push(j);
            } else if k != i && k != j {
                order.push(k);
            }
        }
        let p = self.permute(&order)?;
        let mut dims = p.dims.clone();
        let merged = dims[lo] * dims[lo + 1];
        dims.splice(lo..lo + 2, [merged]);
        Ok(Self { dims, amps: p.amps })
    }

    /// Splits party `i` into parties with the given dimensions (slowest first).
    pub fn split_party(&self, i: usize, parts: &[usize]) -> Result<Self> {
        self.check_party(i)?;
        if parts.iter().product::<usize>() != self.dims[i] || parts.is_empty() {
            return Err(Error::DimensionMismatch(format!("cannot split dimension {} into {parts:?}", self.dims[i])));
        }
        let mut dims = self.dims.clone();
        dims.splice(i..i + 1, parts.iter().copied());
        Ok(Self { dims, amps: self.amps.clone() })
    }

    /// Removes a party of dimension one.
    pub fn drop_trivial_party(&self, i: usize) -> Result<Self> {
        self.check_party(i)?;
        if self.dims[i] != 1 || self.parties() == 1 {
            return Err(Error::InvalidParameter(format!("party {i} is not a removable trivial party")));
        }
        let mut dims = self.dims.clone();
        dims.remove(i);
        Ok(Self { dims, amps: self.amps.clone() })
    }

    /// Applies a measurement round and returns `(outcome, probability, post-state)`.
    ///
    /// The post-state is `corrections(k) · (M_k ⊗ 1)|ψ⟩`, unnormalized.
    pub fn apply_measurement(&self, round: &MeasurementRound, mode: Outcome) -> Result<(usize, f64, Self)> {
        round.validate(self)?;
        let label = match mode {
            Outcome::Branch(k) => {
                if k >= round.elements.len() {
                    return Err(Error::InvalidParameter(format!("no outcome {k}")));
                }
                k
            }
            Outcome::Sample(seed) => {
                let probs = self.branch_probabilities_unchecked(round)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                sample_index(&probs, &mut rng)
            }
        };
        let post = self.apply_local_unchecked(&round.elements[label])?;
        let p = post.norm_sqr() / self.norm_sqr();
        if p < tol::ZERO {
            return Err(Error::ImpossibleBranch { label, probability: p });
        }
        let mut post = post;
        for c in round.corrections.get(label).into_iter().flatten() {
            post = post.apply_local(c)?;
        }
        Ok((label, p, post))
    }

    pub fn branch_probabilities(&self, round: &MeasurementRound) -> Result<Vec<f64>> {
        round.validate(self)?;
        self.branch_probabilities_unchecked(round)
    }

    fn branch_probabilities_unchecked(&self, round: &MeasurementRound) -> Result<Vec<f64>> {
        let n = self.norm_sqr();
        round
            .elements
            .iter()
            .map(|m| Ok(self.apply_local_unchecked(m)?.norm_sqr() / n))
            .collect()
    }

    /// `|⟨a|b⟩|² / (⟨a|a⟩⟨b|b⟩)`.
    pub fn fidelity(&self, other: &Self) -> Result<f64> {
        let ip = self.inner(other)?;
        Ok(ip.norm_sqr() / (self.norm_sqr() * other.norm_sqr()))
    }

    /// Whether two states agree up to a global phase and scale, together with
    /// the normalized overlap.
    pub fn equal_up_to_phase_scale(&self, other: &Self) -> Result<(bool, f64)> {
        let f = self.fidelity(other)?;
        Ok((f >= 1.0 - tol::FID, f))
    }

    /// Short deterministic fingerprint of the normalized amplitudes, used in
    /// protocol traces.
    pub fn checksum(&self) -> String {
        let n = self.normalized();
        // fix the global phase on the largest amplitude
        let pivot = n
            .amps
            .iter()
            .copied()
            .max_by(|a, b| a.norm_sqr().partial_cmp(&b.norm_sqr()).unwrap())
            .unwrap_or(C64::new(1.0, 0.0));
        let phase = pivot.conj() / pivot.norm();
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for d in &n.dims {
            h = (h ^ *d as u64).wrapping_mul(0x100_0000_01b3);
        }
        for z in &n.amps {
            let w = z * phase;
            for x in [w.re, w.im] {
                let q = (x * 1e8).round() as i64;
                h = (h ^ q as u64).wrapping_mul(0x100_0000_01b3);
            }
        }
        format!("{h:016x}")
    }

    pub fn to_file(&self) -> StateFile {
        let mut idx = vec![0usize; self.parties()];
        let amps = self
            .amps
            .iter()
            .enumerate()
            .filter(|(_, z)| z.norm_sqr() > 0.0)
            .map(|(flat, z)| {
                unflatten(&self.dims, flat, &mut idx);
                AmpRecord { idx: idx.clone(), re: z.re, im: z.im }
            })
            .collect();
        StateFile { dims: self.dims.clone(), amps }
    }

    pub fn from_file(file: &StateFile) -> Result<Self> {
        let total: usize = file.dims.iter().product();
        if file.dims.is_empty() || file.dims.contains(&0) {
            return Err(Error::Parse(format!("field \"dims\": invalid dimensions {:?}", file.dims)));
        }
        let mut amps = vec![C64::new(0.0, 0.0); total];
        let mut seen = HashSet::new();
        for (k, rec) in file.amps.iter().enumerate() {
            let flat = flat_index(&file.dims, &rec.idx)
                .map_err(|e| Error::Parse(format!("field \"amps[{k}].idx\": {e}")))?;
            if !seen.insert(flat) {
                return Err(Error::Parse(format!("field \"amps[{k}].idx\": duplicate index {:?}", rec.idx)));
            }
            amps[flat] = C64::new(rec.re, rec.im);
        }
        Self::new(file.dims.clone(), amps).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("state file serializes")
    }

    /// Parses the textual state format; errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: StateFile = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        Self::from_file(&file)
    }
}

impl fmt::Display for PureState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut idx = vec![0usize; self.parties()];
        let mut first = true;
        for (flat, z) in self.amps.iter().enumerate() {
            if z.norm() < 1e-12 {
                continue;
            }
            unflatten(&self.dims, flat, &mut idx);
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            let ket: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
            write!(f, "({:.4}{:+.4}i)|{}⟩", z.re, z.im, ket.join(","))?;
        }
        Ok(())
    }
}

/// Serialized state: omitted indices are zero.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StateFile {
    pub dims: Vec<usize>,
    pub amps: Vec<AmpRecord>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AmpRecord {
    pub idx: Vec<usize>,
    pub re: f64,
    pub im: f64,
}

pub(crate) fn flat_index(dims: &[usize], idx: &[usize]) -> Result<usize> {
    if idx.len() != dims.len() {
        return Err(Error::InvalidState(format!("index {idx:?} has the wrong length for dims {dims:?}")));
    }
    for (&i, &d) in idx.iter().zip(dims) {
        if i >= d {
            return Err(Error::InvalidState(format!("index {idx:?} out of range for dims {dims:?}")));
        }
    }
    Ok(flatten(dims, idx))
}

pub(crate) fn flatten(dims: &[usize], idx: &[usize]) -> usize {
    idx.iter().zip(dims).fold(0, |acc, (&i, &d)| acc * d + i)
}

pub(crate) fn unflatten(dims: &[usize], mut flat: usize, out: &mut [usize]) {
    for k in (0..dims.len()).rev() {
        out[k] = flat % dims[k];
        flat /= dims[k];
    }
}

fn sample_index<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let mut x = rng.random::<f64>() * total;
    for (k, &p) in probs.iter().enumerate() {
        if x < p {
            return k;
        }
        x -= p;
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Reduced density operator on an ordered subset of parties.
#[derive(Clone, Debug)]
pub struct DensityOperator {
    pub subset: Vec<usize>,
    pub matrix: CMat,
}

impl DensityOperator {
    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn is_hermitian(&self) -> bool {
        linalg::max_abs(&(&self.matrix - self.matrix.adjoint())) <= tol::HERM * self.trace().max(1.0)
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::hermitian_eigen(&self.matrix).0
    }

    pub fn normalized(&self) -> Self {
        let t = self.trace();
        Self { subset: self.subset.clone(), matrix: self.matrix.unscale(t) }
    }

    /// Traces out the parties of `self.subset` not contained in `keep`.
    /// `dims` are the dimensions of all parties of the parent state.
    pub fn partial_trace(&self, dims: &[usize], keep: &[usize]) -> Result<Self> {
        for k in keep {
            if !self.subset.contains(k) {
                return Err(Error::InvalidSubset(format!("party {k} is not in {:?}", self.subset)));
            }
        }
        let sub_dims: Vec<usize> = self.subset.iter().map(|&i| dims[i]).collect();
        let keep_pos: Vec<usize> = keep.iter().map(|k| self.subset.iter().position(|x| x == k).unwrap()).collect();
        let trace_pos: Vec<usize> = (0..self.subset.len()).filter(|p| !keep_pos.contains(p)).collect();
        let nk: usize = keep_pos.iter().map(|&p| sub_dims[p]).product();
        let nt: usize = trace_pos.iter().map(|&p| sub_dims[p]).product();
        let mut out = CMat::zeros(nk, nk);
        let mut idx = vec![0usize; sub_dims.len()];
        let compose = |keep_i: usize, tr_i: usize, idx: &mut Vec<usize>| {
            let mut r = keep_i;
            for &p in keep_pos.iter().rev() {
                idx[p] = r % sub_dims[p];
                r /= sub_dims[p];
            }
            let mut t = tr_i;
            for &p in trace_pos.iter().rev() {
                idx[p] = t % sub_dims[p];
                t /= sub_dims[p];
            }
            flatten(&sub_dims, idx)
        };
        let mut idx2 = idx.clone();
        for a in 0..nk {
            for b in 0..nk {
                let mut acc = C64::new(0.0, 0.0);
                for t in 0..nt {
                    let ra = compose(a, t, &mut idx);
                    let rb = compose(b, t, &mut idx2);
                    acc += self.matrix[(ra, rb)];
                }
                out[(a, b)] = acc;
            }
        }
        Ok(Self { subset: keep.to_vec(), matrix: out })
    }
}

/// A matrix acting on one party (output dimension × input dimension).
#[derive(Clone, Debug, PartialEq)]
pub struct LocalOperator {
    pub party: usize,
    pub matrix: CMat,
}

impl LocalOperator {
    pub fn new(party: usize, matrix: CMat) -> Self {
        Self { party, matrix }
    }

    pub fn identity(party: usize, dim: usize) -> Self {
        Self { party, matrix: linalg::identity(dim) }
    }

    /// `|out⟩⟨in|` as a rank-one operator.
    pub fn outer(party: usize, out: &[C64], inp: &[C64]) -> Self {
        let m = CMat::from_fn(out.len(), inp.len(), |r, c| out[r] * inp[c].conj());
        Self { party, matrix: m }
    }

    pub fn is_unitary(&self) -> bool {
        linalg::unitarity_defect(&self.matrix) <= tol::UNITARY
    }
}

/// One local measurement with classically conditioned corrections.
#[derive(Clone, Debug)]
pub struct MeasurementRound {
    pub party: usize,
    pub elements: Vec<LocalOperator>,
    /// Unitary corrections applied to other parties after each outcome.
    pub corrections: Vec<Vec<LocalOperator>>,
    pub description: String,
}

impl MeasurementRound {
    pub fn new(party: usize, elements: Vec<CMat>, description: impl Into<String>) -> Self {
        let n = elements.len();
        Self {
            party,
            elements: elements.into_iter().map(|m| LocalOperator::new(party, m)).collect(),
            corrections: vec![Vec::new(); n],
            description: description.into(),
        }
    }

    pub fn with_corrections(mut self, corrections: Vec<Vec<LocalOperator>>) -> Self {
        self.corrections = corrections;
        self
    }

    /// Largest entry deviation of `Σ M_k†M_k` from the identity.
    pub fn completeness_defect(&self) -> f64 {
        let Some(first) = self.elements.first() else {
            return f64::INFINITY;
        };
        let n = first.matrix.ncols();
        let mut acc = CMat::zeros(n, n);
        for e in &self.elements {
            if e.matrix.ncols() != n {
                return f64::INFINITY;
            }
            acc += e.matrix.adjoint() * &e.matrix;
        }
        linalg::max_abs(&(acc - linalg::identity(n)))
    }

    pub fn validate(&self, s: &PureState) -> Result<()> {
        s.check_party(self.party)?;
        if self.elements.iter().any(|e| e.party != self.party) {
            return Err(Error::IncompleteMeasurement("element on the wrong party".into()));
        }
        if self.elements.first().map(|e| e.matrix.ncols()) != Some(s.dims()[self.party]) {
            return Err(Error::DimensionMismatch(format!(
                "measurement input dimension does not match party {} of dimension {}",
                self.party,
                s.dims()[self.party]
            )));
        }
        let defect = self.completeness_defect();
        if defect > tol::POVM {
            return Err(Error::IncompleteMeasurement(format!("Σ M†M deviates from identity by {defect:e}")));
        }
        if self.corrections.len() > self.elements.len() {
            return Err(Error::InvalidParameter("more correction lists than outcomes".into()));
        }
        for (k, cs) in self.corrections.iter().enumerate() {
            for c in cs {
                if !c.is_unitary() {
                    return Err(Error::NonUnitaryCorrection(format!(
                        "outcome {k}, party {}: defect {:e}",
                        c.party,
                        linalg::unitarity_defect(&c.matrix)
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Which branch of a measurement to follow.
#[derive(Clone, Copy, Debug)]
pub enum Outcome {
    Branch(usize),
    /// Draw the outcome from the branch probabilities with a seeded generator.
    Sample(u64),
}

pub fn computational_basis_round(party: usize, dim: usize) -> MeasurementRound {
    let elements = (0..dim)
        .map(|k| DMatrix::from_fn(dim, dim, |r, c| if r == k && c == k { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }))
        .collect();
    MeasurementRound::new(party, elements, format!("computational basis on party {party}"))
}

pub fn ghz(d: usize, parties: usize) -> PureState {
    let terms: Vec<(Vec<usize>, C64)> = (0..d).map(|i| (vec![i; parties], C64::new(1.0, 0.0))).collect();
    PureState::from_terms(vec![d; parties], &terms).expect("valid GHZ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    fn w() -> PureState {
        PureState::from_kets(vec![2, 2, 2], &["001", "010", "100"]).unwrap()
    }

    /// Partial trace computed straight from the definition.
    fn brute_reduced(s: &PureState, keep: &[usize]) -> CMat {
        let n: usize = keep.iter().map(|&i| s.dims()[i]).product();
        let mut rho = CMat::zeros(n, n);
        let mut ia = vec![0; s.parties()];
        let mut ib = vec![0; s.parties()];
        for a in 0..s.total_dim() {
            unflatten(s.dims(), a, &mut ia);
            for b in 0..s.total_dim() {
                unflatten(s.dims(), b, &mut ib);
                let same_rest = (0..s.parties()).filter(|i| !keep.contains(i)).all(|i| ia[i] == ib[i]);
                if !same_rest {
                    continue;
                }
                let r = keep.iter().fold(0, |acc, &i| acc * s.dims()[i] + ia[i]);
                let cc = keep.iter().fold(0, |acc, &i| acc * s.dims()[i] + ib[i]);
                rho[(r, cc)] += s.amps()[a] * s.amps()[b].conj();
            }
        }
        rho
    }

    #[test]
    fn rejects_bad_states() {
        assert!(PureState::new(vec![2, 2], vec![C64::new(0.0, 0.0); 4]).is_err());
        assert!(PureState::new(vec![2, 2], vec![C64::new(1.0, 0.0); 3]).is_err());
        assert!(PureState::new(vec![], vec![]).is_err());
        assert!(PureState::new(vec![0], vec![]).is_err());
    }

    #[test]
    fn product_of_basis_states() {
        let zero = PureState::from_kets(vec![2], &["0"]).unwrap();
        let p = zero.tensor_product(&zero, None).unwrap();
        assert_eq!(p, PureState::from_kets(vec![2, 2], &["00"]).unwrap());
    }

    #[test]
    fn ghz_times_w_has_six_terms() {
        let p = ghz(2, 3).tensor_product(&w(), None).unwrap();
        assert_eq!(p.parties(), 6);
        assert_eq!(p.amps().iter().filter(|z| z.norm() > 0.0).count(), 6);
    }

    #[test]
    fn grouped_ghz_square_is_ghz4() {
        // Σ_{i,j} |ij,ij,ij⟩ : relabel (i,j) -> 2i+j and compare with GHZ_4
        let g = ghz(2, 3);
        let sq = g.tensor_product(&g, Some(&[0, 1, 2])).unwrap();
        assert_eq!(sq.dims(), &[4, 4, 4]);
        let mut terms = Vec::new();
        for i in 0..2 {
            for j in 0..2 {
                let k = 2 * i + j;
                terms.push((vec![k, k, k], c(1.0, 0.0)));
            }
        }
        let expect = PureState::from_terms(vec![4, 4, 4], &terms).unwrap();
        assert_eq!(sq, expect);
        assert!(sq.equal_up_to_phase_scale(&ghz(4, 3)).unwrap().0);
    }

    #[test]
    fn grouping_must_be_bijection() {
        let g = ghz(2, 3);
        let err = g.tensor_product(&g, Some(&[0, 0, 2])).unwrap_err();
        assert!(err.to_string().contains("invalid grouping"));
    }

    #[test]
    fn reduced_density_examples() {
        let g = ghz(2, 3).normalized();
        let r = g.reduced_density(&[0]).unwrap();
        assert!(linalg::max_abs(&(r.matrix - linalg::identity(2).scale(0.5))) < 1e-14);

        let rw = w().normalized().reduced_density(&[0]).unwrap();
        let expect = CMat::from_row_slice(2, 2, &[c(2.0 / 3.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0 / 3.0, 0.0)]);
        assert!(linalg::max_abs(&(rw.matrix - &expect)) < 1e-14);
        assert!(linalg::max_abs(&(brute_reduced(&w().normalized(), &[0]) - expect)) < 1e-14);

        let p = PureState::from_kets(vec![2, 2], &["01"]).unwrap();
        let r = p.reduced_density(&[1]).unwrap();
        let proj = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(linalg::max_abs(&(r.matrix - proj)) < 1e-14);
    }

    #[test]
    fn reduced_density_rejects_bad_subsets() {
        let s = w();
        assert!(s.reduced_density(&[]).is_err());
        assert!(s.reduced_density(&[3]).is_err());
        assert!(s.reduced_density(&[1, 1]).is_err());
    }

    #[test]
    fn apply_local_examples() {
        let s = w();
        assert_eq!(s.apply_local(&LocalOperator::identity(1, 2)).unwrap(), s);
        let p0 = LocalOperator::outer(2, &[c(1.0, 0.0), c(0.0, 0.0)], &[c(1.0, 0.0), c(0.0, 0.0)]);
        let out = s.apply_local(&p0).unwrap();
        assert_eq!(out, PureState::from_kets(vec![2, 2, 2], &["010", "100"]).unwrap());

        let q = PureState::from_kets(vec![2, 2], &["00"]).unwrap();
        let up = LocalOperator::outer(0, &[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)], &[c(1.0, 0.0), c(0.0, 0.0)]);
        let out = q.apply_local(&up).unwrap();
        assert_eq!(out, PureState::from_kets(vec![3, 2], &["20"]).unwrap());

        let kill = LocalOperator::outer(0, &[c(1.0, 0.0), c(0.0, 0.0)], &[c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(q.apply_local(&kill), Err(Error::Annihilated)));
        let wrong = LocalOperator::identity(0, 3);
        assert!(matches!(q.apply_local(&wrong), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn merge_examples() {
        let m = ghz(2, 3).merge_parties(1, 2).unwrap();
        assert_eq!(m.dims(), &[2, 4]);
        assert_eq!(m, PureState::from_kets(vec![2, 4], &["00", "13"]).unwrap());
        let b = PureState::from_kets(vec![2, 3], &["00", "12"]).unwrap();
        let v = b.merge_parties(0, 1).unwrap();
        assert_eq!(v.dims(), &[6]);
        assert!(ghz(2, 3).merge_parties(1, 1).is_err());
    }

    #[test]
    fn measurement_on_ghz() {
        let g = ghz(2, 3);
        let round = computational_basis_round(0, 2);
        let (_, p0, s0) = g.apply_measurement(&round, Outcome::Branch(0)).unwrap();
        let (_, p1, s1) = g.apply_measurement(&round, Outcome::Branch(1)).unwrap();
        assert!((p0 - 0.5).abs() < 1e-15 && (p1 - 0.5).abs() < 1e-15);
        assert_eq!(s0, PureState::from_kets(vec![2, 2, 2], &["000"]).unwrap());
        assert_eq!(s1, PureState::from_kets(vec![2, 2, 2], &["111"]).unwrap());
    }

    #[test]
    fn projector_on_merged_party_of_two_ghz() {
        // GHZ_2 ⊗ GHZ_2 (two 2-party copies), merge the middle parties and
        // project onto span{|00⟩,|11⟩}: amplitudes |0000⟩,|0011⟩,|1100⟩,|1111⟩,
        // two of the four survive.
        let bell = ghz(2, 2);
        let s = bell.tensor_product(&bell, None).unwrap().merge_parties(1, 2).unwrap();
        let mut p0 = CMat::zeros(4, 4);
        p0[(0, 0)] = c(1.0, 0.0);
        p0[(3, 3)] = c(1.0, 0.0);
        let p1 = linalg::identity(4) - &p0;
        let round = MeasurementRound::new(1, vec![p0, p1], "parity");
        let probs = s.branch_probabilities(&round).unwrap();
        assert!((probs[0] - 0.5).abs() < 1e-15);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn incomplete_round_is_rejected() {
        let g = ghz(2, 3);
        let mut p0 = CMat::zeros(2, 2);
        p0[(0, 0)] = c(1.0, 0.0);
        let round = MeasurementRound::new(0, vec![p0], "half");
        assert!(matches!(g.apply_measurement(&round, Outcome::Branch(0)), Err(Error::IncompleteMeasurement(_))));
    }

    #[test]
    fn impossible_branch_is_reported() {
        let s = PureState::from_kets(vec![2, 2], &["00"]).unwrap();
        let round = computational_basis_round(0, 2);
        assert!(matches!(s.apply_measurement(&round, Outcome::Branch(1)), Err(Error::ImpossibleBranch { .. })));
    }

    #[test]
    fn sampled_outcomes_are_deterministic() {
        let g = ghz(2, 3);
        let round = computational_basis_round(0, 2);
        let a = g.apply_measurement(&round, Outcome::Sample(11)).unwrap();
        let b = g.apply_measurement(&round, Outcome::Sample(11)).unwrap();
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn phase_scale_equality() {
        let bell = ghz(2, 2);
        let other = bell.scaled(C64::from_polar(0.3, 1.1));
        assert!(bell.equal_up_to_phase_scale(&other).unwrap().0);
        let (eq, ov) = ghz(2, 3).equal_up_to_phase_scale(&w()).unwrap();
        assert!(!eq && ov.abs() < 1e-15);
        // GHZ_3 against GHZ_2 embedded in qutrits: |⟨·|·⟩|² / (3·2) = 4/6
        let g2 = PureState::from_kets(vec![3, 3, 3], &["000", "111"]).unwrap();
        let (eq, ov) = ghz(3, 3).equal_up_to_phase_scale(&g2).unwrap();
        assert!(!eq && (ov - 2.0 / 3.0).abs() < 1e-14);
        assert!(ghz(2, 3).equal_up_to_phase_scale(&ghz(2, 2)).is_err());
    }

    #[test]
    fn state_file_round_trip_and_errors() {
        let s = w();
        let back = PureState::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
        let dup = r#"{"dims":[2],"amps":[{"idx":[0],"re":1,"im":0},{"idx":[0],"re":1,"im":0}]}"#;
        assert!(PureState::from_json(dup).unwrap_err().to_string().contains("duplicate"));
        let bad = "{\"dims\":[2],\n\"amps\":[{\"idx\":[0],\"re\":\"x\",\"im\":0}]}";
        let msg = PureState::from_json(bad).unwrap_err().to_string();
        assert!(msg.contains("line 2"), "{msg}");
        let oob = r#"{"dims":[2],"amps":[{"idx":[2],"re":1,"im":0}]}"#;
        assert!(PureState::from_json(oob).is_err());
    }
}
