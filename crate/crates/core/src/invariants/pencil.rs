//! Tensor rank of `2 × M × N` tensors from the Kronecker structure of the
//! pencil spanned by the two slices.
//!
//! For a pencil with column minimal indices `ε_i`, row minimal indices `η_j`,
//! a regular part of size `n_reg` and at most `δ` Jordan blocks of size ≥ 2
//! per eigenvalue (infinite eigenvalues included), the rank is
//! `Σ(ε_i + 1) + Σ(η_j + 1) + n_reg + δ`.

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::tol;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KroneckerStructure {
    pub normal_rank: usize,
    pub column_indices: Vec<usize>,
    pub row_indices: Vec<usize>,
    pub regular_size: usize,
    /// Jordan block sizes per eigenvalue of the Möbius-shifted pencil.
    pub jordan_blocks: Vec<Vec<usize>>,
    pub delta: usize,
}

impl KroneckerStructure {
    pub fn tensor_rank(&self) -> usize {
        self.column_indices.iter().filter(|&&e| e > 0).map(|e| e + 1).sum::<usize>()
            + self.row_indices.iter().filter(|&&e| e > 0).map(|e| e + 1).sum::<usize>()
            + self.regular_size
            + self.delta
    }
}

/// Rank of a matrix with exact arithmetic when the entries are Gaussian integers.
fn rank_of(m: &CMat) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    linalg::rank(m)
}

fn nullity(m: &CMat) -> usize {
    m.ncols() - rank_of(m)
}

/// Rescales the slices so that, when the tensor is a multiple of a Gaussian
/// integer tensor, the entries become integers.
fn integerize(a: &CMat, b: &CMat) -> (CMat, CMat) {
    let pivot = a
        .iter()
        .chain(b.iter())
        .copied()
        .filter(|z| z.norm() > 1e-12)
        .min_by(|x, y| x.norm().partial_cmp(&y.norm()).unwrap());
    let Some(p) = pivot else {
        return (a.clone(), b.clone());
    };
    let inv = C64::new(1.0, 0.0) / p;
    let round = |m: &CMat| m.map(|z| z * inv);
    let (sa, sb) = (round(a), round(b));
    let snap = |m: &CMat| {
        m.map(|z| {
            let r = C64::new(z.re.round(), z.im.round());
            if (z - r).norm() < 1e-12 {
                r
            } else {
                z
            }
        })
    };
    (snap(&sa), snap(&sb))
}

/// Block Toeplitz matrix with `a` on the diagonal and `b` below it:
/// `(k + 2)` block rows, `(k + 1)` block columns.
fn chain_matrix(a: &CMat, b: &CMat, k: usize) -> CMat {
    let (m, n) = a.shape();
    let mut out = CMat::zeros((k + 2) * m, (k + 1) * n);
    for j in 0..=k {
        out.view_mut((j * m, j * n), (m, n)).copy_from(a);
        out.view_mut(((j + 1) * m, j * n), (m, n)).copy_from(b);
    }
    out
}

/// Minimal indices of the pencil `a + λ b` from the kernel dimensions of the
/// chain matrices; `count` indices are expected.
fn minimal_indices(a: &CMat, b: &CMat, count: usize) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    let mut d = vec![0isize; 0];
    let max_k = a.ncols() + a.nrows() + 1;
    let mut k = 0;
    while out.len() < count {
        if k > max_k {
            return Err(Error::RankUndetermined("minimal index computation did not terminate".into()));
        }
        let dk = nullity(&chain_matrix(a, b, k)) as isize;
        d.push(dk);
        let prev = |j: isize| if j < 0 { 0 } else { d[j as usize] };
        let ki = k as isize;
        let here = dk - 2 * prev(ki - 1) + prev(ki - 2);
        if here < 0 {
            return Err(Error::RankUndetermined("inconsistent kernel dimensions in pencil".into()));
        }
        out.extend(std::iter::repeat_n(k, here as usize));
        k += 1;
    }
    if out.len() != count {
        return Err(Error::RankUndetermined("minimal index count mismatch".into()));
    }
    Ok(out)
}

/// Block lower-bidiagonal matrix with `diag` on the diagonal and `sub` below.
fn jordan_chain(diag: &CMat, sub: &CMat, k: usize) -> CMat {
    let (m, n) = diag.shape();
    let mut out = CMat::zeros(k * m, k * n);
    for j in 0..k {
        out.view_mut((j * m, j * n), (m, n)).copy_from(diag);
        if j + 1 < k {
            out.view_mut(((j + 1) * m, j * n), (m, n)).copy_from(sub);
        }
    }
    out
}

/// Rational approximation `num / den` with `den ≤ 12`, if one is close.
fn snap_gaussian_rational(z: C64) -> Option<(C64, f64)> {
    for den in 1..=12 {
        let q = den as f64;
        let num = C64::new((z.re * q).round(), (z.im * q).round());
        if (num / q - z).norm() < 1e-6 * (1.0 + z.norm()) {
            return Some((num, q));
        }
    }
    None
}

/// Jordan block sizes of `p + μ q` at `mu`; `p_col` is the number of column
/// minimal indices.
fn jordan_sizes(p: &CMat, q: &CMat, mu: C64, exact: bool, p_col: usize, reg: usize) -> Vec<usize> {
    let (diag, sub) = match (exact, snap_gaussian_rational(mu)) {
        (true, Some((num, den))) => (p.scale(den) + q * num, q.scale(den)),
        _ => (p + q * mu, q.clone()),
    };
    // g[k] = Σ_blocks min(k, size)
    let mut g = vec![0usize];
    for k in 1..=reg + 1 {
        let null = nullity(&jordan_chain(&diag, &sub, k));
        let gk = null.saturating_sub(k * p_col);
        g.push(gk);
        if gk == g[k - 1] {
            break;
        }
    }
    // number of blocks of size ≥ k is g[k] − g[k−1]
    let at_least: Vec<usize> = (1..g.len()).map(|k| g[k] - g[k - 1]).collect();
    let mut sizes = Vec::new();
    for (k, &n) in at_least.iter().enumerate() {
        let next = at_least.get(k + 1).copied().unwrap_or(0);
        sizes.extend(std::iter::repeat_n(k + 1, n.saturating_sub(next)));
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

/// Jordan block sizes of the eigenvalue cluster `group` of `c`, read from `c`
/// restricted to the cluster's invariant subspace. A semisimple cluster keeps
/// every singular value within a modest factor of its spread; anything well
/// above that comes from a nilpotent part.
fn restricted_jordan_sizes(c: &CMat, group: &[C64]) -> Vec<usize> {
    let k = group.len();
    if k == 1 {
        return vec![1];
    }
    let n = c.nrows();
    let mu = mean(group);
    let spread = group.iter().map(|z| (z - mu).norm()).fold(0.0, f64::max);
    let scale = linalg::singular_values(c).first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let id = linalg::identity(n);
    let annihilator = group.iter().fold(id.clone(), |acc, &z| acc * (c - &id * z));
    let (_, _, vt) = linalg::svd_sorted(&annihilator);
    let basis = vt.rows(n - k, k).adjoint();
    let m = basis.adjoint() * c * &basis - linalg::identity(k) * mu;
    let cut = (100.0 * spread).max(1e-6 * scale);
    let mut nullities = vec![0usize];
    let mut power = linalg::identity(k);
    for j in 1..=k {
        power = &power * &m;
        let bound = scale.powi(j as i32 - 1) * cut;
        let null = linalg::singular_values(&power).iter().filter(|&&x| x <= bound).count();
        nullities.push(null);
    }
    let at_least: Vec<usize> = (1..nullities.len()).map(|j| nullities[j].saturating_sub(nullities[j - 1])).collect();
    let mut sizes = Vec::new();
    for (j, &count) in at_least.iter().enumerate() {
        let next = at_least.get(j + 1).copied().unwrap_or(0);
        sizes.extend(std::iter::repeat_n(j + 1, count.saturating_sub(next)));
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

fn is_integral(m: &CMat) -> bool {
    m.iter().all(|z| (z.re - z.re.round()).abs() < 1e-12 && (z.im - z.im.round()).abs() < 1e-12)
}

/// Groups eigenvalues whose distance is below `rel · max(1, |z|)`.
fn cluster(values: &[C64], rel: f64) -> Vec<Vec<C64>> {
    let mut clusters: Vec<Vec<C64>> = Vec::new();
    for &v in values {
        let home = clusters.iter_mut().find(|c| {
            let mean = mean(c);
            (mean - v).norm() < rel * mean.norm().max(1.0)
        });
        match home {
            Some(c) => c.push(v),
            None => clusters.push(vec![v]),
        }
    }
    clusters
}

fn mean(values: &[C64]) -> C64 {
    values.iter().sum::<C64>() / values.len() as f64
}

/// Kronecker structure of the pencil `a + λ b` (slices of the tensor for the
/// two basis states of the dimension-two party).
pub fn kronecker_structure(a: &CMat, b: &CMat, seed: u64) -> Result<KroneckerStructure> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch("pencil slices differ in shape".into()));
    }
    let (a, b) = integerize(a, b);
    let exact = is_integral(&a) && is_integral(&b);
    let (m, n) = a.shape();

    let probes = [C64::new(17.0, 0.0), C64::new(-23.0, 0.0), C64::new(31.0, 11.0), C64::new(-5.0, 29.0)];
    let r = probes.iter().map(|&l| rank_of(&(&a + &b * l))).max().unwrap_or(0);

    let column_indices = minimal_indices(&a, &b, n - r)?;
    let row_indices = minimal_indices(&a.transpose(), &b.transpose(), m - r)?;
    let used_cols: usize = column_indices.iter().map(|e| e + 1).sum::<usize>() + row_indices.iter().sum::<usize>();
    let regular_size = n
        .checked_sub(used_cols)
        .ok_or_else(|| Error::RankUndetermined("singular part exceeds the pencil size".into()))?;

    let mut jordan_blocks = Vec::new();
    if regular_size > 0 {
        jordan_blocks = regular_structure(&a, &b, r, exact, n - r, regular_size, seed)?;
    }
    let delta = jordan_blocks.iter().map(|sizes| sizes.iter().filter(|&&s| s >= 2).count()).max().unwrap_or(0);
    Ok(KroneckerStructure { normal_rank: r, column_indices, row_indices, regular_size, jordan_blocks, delta })
}

fn regular_structure(
    a: &CMat,
    b: &CMat,
    r: usize,
    exact: bool,
    p_col: usize,
    reg: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    // Möbius shift so that the shifted pencil has no infinite eigenvalues.
    let shift = [0.0, 1.0, -1.0, 2.0, -2.0, 3.0, -3.0, 5.0, 7.0, -11.0]
        .into_iter()
        .map(|c| b + a.scale(c))
        .find(|q| rank_of(q) == r)
        .ok_or_else(|| Error::RankUndetermined("no regular shift found for the pencil".into()))?;
    let p = a.clone();
    let q = shift;
    let (m, n) = p.shape();

    for attempt in 0..6u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
        let u = linalg::random_matrix(r, m, &mut rng);
        let v = linalg::random_matrix(n, r, &mut rng);
        let uqv = &u * &q * &v;
        let sv = linalg::singular_values(&uqv);
        if sv.last().copied().unwrap_or(0.0) < 1e-10 * sv[0] {
            continue;
        }
        let Some(inv) = uqv.try_inverse() else { continue };
        let c = -(inv * (&u * &p * &v));
        let eig = linalg::eigenvalues(&c);
        for rel in [1e-1, 1e-2, 1e-3, 1e-4, 1e-6, tol::EIG_CLUSTER] {
            let mut found = Vec::new();
            let mut consistent = true;
            for group in cluster(&eig, rel) {
                let mu = mean(&group);
                let mu_eval = match (exact, snap_gaussian_rational(mu)) {
                    (true, Some((num, den))) => num / den,
                    _ => mu,
                };
                let drop = match (exact, snap_gaussian_rational(mu)) {
                    (true, Some((num, den))) => rank_of(&(p.scale(den) + &q * num)) < r,
                    _ => linalg::numeric_rank(&(&p + &q * mu_eval), tol::SVD_RANK) < r,
                };
                if !drop {
                    continue;
                }
                let sizes = match (exact, snap_gaussian_rational(mu)) {
                    (true, Some(_)) => jordan_sizes(&p, &q, mu, exact, p_col, reg),
                    _ => restricted_jordan_sizes(&c, &group),
                };
                if sizes.iter().sum::<usize>() != group.len() {
                    consistent = false;
                    break;
                }
                found.push(sizes);
            }
            if consistent && found.iter().flatten().sum::<usize>() == reg {
                found.sort();
                return Ok(found);
            }
        }
    }
    Err(Error::RankUndetermined("could not resolve the Jordan structure of the pencil".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    fn mat(rows: usize, cols: usize, ones: &[(usize, usize)]) -> CMat {
        let mut m = CMat::zeros(rows, cols);
        for &(r, k) in ones {
            m[(r, k)] = c(1.0, 0.0);
        }
        m
    }

    #[test]
    fn singular_pencil_with_one_index_each() {
        let a = mat(3, 3, &[(0, 1), (1, 0)]);
        let b = mat(3, 3, &[(1, 2), (2, 1)]);
        let k = kronecker_structure(&a, &b, 0).unwrap();
        assert_eq!(k.column_indices, vec![1]);
        assert_eq!(k.row_indices, vec![1]);
        assert_eq!(k.regular_size, 0);
        assert_eq!(k.tensor_rank(), 4);
    }

    #[test]
    fn nilpotent_jordan_block() {
        let a = mat(3, 3, &[(1, 0), (0, 1)]);
        let b = mat(3, 3, &[(0, 0), (1, 2), (2, 1)]);
        let k = kronecker_structure(&a, &b, 0).unwrap();
        assert_eq!(k.regular_size, 3);
        assert_eq!(k.jordan_blocks, vec![vec![3]]);
        assert_eq!(k.tensor_rank(), 4);
    }

    #[test]
    fn diagonal_pencil_has_rank_of_size() {
        let a = mat(3, 3, &[(0, 0), (2, 2)]);
        let b = mat(3, 3, &[(1, 1), (2, 2)]);
        let k = kronecker_structure(&a, &b, 0).unwrap();
        assert_eq!(k.delta, 0);
        assert_eq!(k.tensor_rank(), 3);
    }

    #[test]
    fn two_by_four_pencil() {
        let a = mat(2, 4, &[(0, 0), (1, 1)]);
        let b = mat(2, 4, &[(0, 2), (1, 3)]);
        let k = kronecker_structure(&a, &b, 0).unwrap();
        assert_eq!(k.column_indices, vec![1, 1]);
        assert_eq!(k.tensor_rank(), 4);
    }

    #[test]
    fn zero_rows_and_columns_add_no_terms() {
        let a = mat(2, 2, &[(0, 0)]);
        let b = mat(2, 2, &[(1, 0)]);
        let k = kronecker_structure(&a, &b, 0).unwrap();
        assert_eq!(k.column_indices, vec![0]);
        assert_eq!(k.row_indices, vec![1]);
        assert_eq!(k.tensor_rank(), 2);
    }

    /// `(a, b)` under `x ↦ p x q` on the slices and a random mix of the slices.
    fn transformed(a: &CMat, b: &CMat, seed: u64) -> (CMat, CMat) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = linalg::random_invertible(a.nrows(), 30.0, &mut rng);
        let q = linalg::random_invertible(a.ncols(), 30.0, &mut rng);
        let g = linalg::random_invertible(2, 30.0, &mut rng);
        let (a, b) = (&p * a * &q, &p * b * &q);
        (&a * g[(0, 0)] + &b * g[(0, 1)], &a * g[(1, 0)] + &b * g[(1, 1)])
    }

    #[test]
    fn perturbed_jordan_block_keeps_its_defect() {
        let a = mat(3, 3, &[(1, 0), (0, 1)]);
        let b = mat(3, 3, &[(0, 0), (1, 2), (2, 1)]);
        for seed in 0..20 {
            let (ta, tb) = transformed(&a, &b, seed);
            assert_eq!(kronecker_structure(&ta, &tb, 0).unwrap().tensor_rank(), 4, "seed {seed}");
        }
    }

    #[test]
    fn repeated_semisimple_eigenvalue_has_no_defect() {
        let a = mat(3, 3, &[(0, 0), (2, 2)]);
        let b = mat(3, 3, &[(1, 1)]);
        for seed in 0..20 {
            let (ta, tb) = transformed(&a, &b, seed);
            assert_eq!(kronecker_structure(&ta, &tb, 0).unwrap().tensor_rank(), 3, "seed {seed}");
        }
    }

    #[test]
    fn jordan_sizes_from_chain_counts() {
        // J_2(0) ⊕ J_1(0) in the pencil p + μ q with q = I
        let p = mat(3, 3, &[(0, 1)]);
        let q = linalg::identity(3);
        let sizes = jordan_sizes(&p, &q, c(0.0, 0.0), true, 0, 3);
        assert_eq!(sizes, vec![2, 1]);
    }

    #[test]
    fn snapping_finds_small_denominators() {
        let (num, den) = snap_gaussian_rational(c(-0.5 + 1e-9, 1.0 / 3.0)).unwrap();
        assert_eq!(den, 6.0);
        assert_eq!(num, c(-3.0, 2.0));
    }
}
