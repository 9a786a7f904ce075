//! Dense complex linear algebra helpers on top of `nalgebra`.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::tol;

pub type CMat = DMatrix<C64>;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Singular value decomposition with singular values in descending order.
///
/// Returns `(U, s, V†)` with `U` of shape `m × k`, `V†` of shape `k × n`,
/// `k = min(m, n)`.
pub fn svd_sorted(m: &CMat) -> (CMat, Vec<f64>, CMat) {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return (CMat::zeros(rows, 0), Vec::new(), CMat::zeros(0, cols));
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd computed with u");
    let vt = svd.v_t.expect("svd computed with v_t");
    let s: Vec<f64> = svd.singular_values.iter().copied().collect();
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap_or(std::cmp::Ordering::Equal));
    let u_sorted = CMat::from_fn(rows, order.len(), |r, k| u[(r, order[k])]);
    let vt_sorted = CMat::from_fn(order.len(), cols, |k, c| vt[(order[k], c)]);
    let s_sorted = order.iter().map(|&k| s[k]).collect();
    (u_sorted, s_sorted, vt_sorted)
}

pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    s
}

/// Count of singular values above `rel_tol` times the largest one.
pub fn numeric_rank(m: &CMat, rel_tol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&x| x > rel_tol * top).count(),
        _ => 0,
    }
}

/// Matrix rank, computed exactly when every entry is a small Gaussian integer
/// and numerically otherwise.
pub fn rank(m: &CMat) -> usize {
    gaussian_integer_rank(m).unwrap_or_else(|| numeric_rank(m, tol::SVD_RANK))
}

/// Exact rank by fraction-free elimination over the Gaussian integers.
///
/// Returns `None` when an entry is not within `1e-12` of a Gaussian integer
/// or when intermediate values would overflow.
pub fn gaussian_integer_rank(m: &CMat) -> Option<usize> {
    const LIMIT: f64 = 1e6;
    let mut a: Vec<Vec<(i128, i128)>> = Vec::with_capacity(m.nrows());
    for r in 0..m.nrows() {
        let mut row = Vec::with_capacity(m.ncols());
        for c in 0..m.ncols() {
            let z = m[(r, c)];
            let (re, im) = (z.re.round(), z.im.round());
            if (z.re - re).abs() > 1e-12 || (z.im - im).abs() > 1e-12 || re.abs() > LIMIT || im.abs() > LIMIT {
                return None;
            }
            row.push((re as i128, im as i128));
        }
        a.push(row);
    }
    bareiss_rank(a)
}

fn gmul(x: (i128, i128), y: (i128, i128)) -> Option<(i128, i128)> {
    let re = x.0.checked_mul(y.0)?.checked_sub(x.1.checked_mul(y.1)?)?;
    let im = x.0.checked_mul(y.1)?.checked_add(x.1.checked_mul(y.0)?)?;
    Some((re, im))
}

fn gsub(x: (i128, i128), y: (i128, i128)) -> Option<(i128, i128)> {
    Some((x.0.checked_sub(y.0)?, x.1.checked_sub(y.1)?))
}

/// Exact division of Gaussian integers; the quotient is known to be integral.
fn gdiv_exact(x: (i128, i128), y: (i128, i128)) -> Option<(i128, i128)> {
    let norm = y.0.checked_mul(y.0)?.checked_add(y.1.checked_mul(y.1)?)?;
    let num = gmul(x, (y.0, -y.1))?;
    if norm == 0 || num.0 % norm != 0 || num.1 % norm != 0 {
        return None;
    }
    Some((num.0 / norm, num.1 / norm))
}

fn bareiss_rank(mut a: Vec<Vec<(i128, i128)>>) -> Option<usize> {
    let rows = a.len();
    if rows == 0 {
        return Some(0);
    }
    let cols = a[0].len();
    let mut rank = 0;
    let mut prev = (1i128, 0i128);
    for col in 0..cols {
        if rank == rows {
            break;
        }
        let Some(pivot) = (rank..rows).find(|&r| a[r][col] != (0, 0)) else {
            continue;
        };
        a.swap(rank, pivot);
        let p = a[rank][col];
        for r in rank + 1..rows {
            let f = a[r][col];
            for c in col..cols {
                let v = gsub(gmul(a[r][c], p)?, gmul(a[rank][c], f)?)?;
                a[r][c] = gdiv_exact(v, prev)?;
            }
        }
        prev = p;
        rank += 1;
    }
    Some(rank)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues descending.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let sym = (m + m.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap_or(std::cmp::Ordering::Equal));
    let vecs = CMat::from_fn(n, n, |r, k| eig.eigenvectors[(r, order[k])]);
    (order.iter().map(|&k| vals[k]).collect(), vecs)
}

/// Eigenvalues of a general complex square matrix.
pub fn eigenvalues(m: &CMat) -> Vec<C64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    match m.clone().schur().eigenvalues() {
        Some(v) => v.iter().copied().collect(),
        None => {
            // Fall back to the diagonal of the (numerically) triangular factor.
            let (_, t) = m.clone().schur().unpack();
            (0..t.nrows()).map(|k| t[(k, k)]).collect()
        }
    }
}

/// Moore-Penrose pseudo-inverse with a relative singular value cutoff.
pub fn pinv(m: &CMat, rel_tol: f64) -> CMat {
    let (u, s, vt) = svd_sorted(m);
    let top = s.first().copied().unwrap_or(0.0);
    let mut out = CMat::zeros(m.ncols(), m.nrows());
    for (k, &sk) in s.iter().enumerate() {
        if sk > rel_tol * top && sk > 0.0 {
            let v = vt.row(k).adjoint();
            let uk = u.column(k).adjoint();
            out += (v * uk).scale(1.0 / sk);
        }
    }
    out
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMat::from_fn(ar * br, ac * bc, |r, c| a[(r / br, c / bc)] * b[(r % br, c % bc)])
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entry deviation of `U†U` from the identity.
pub fn unitarity_defect(u: &CMat) -> f64 {
    if u.nrows() != u.ncols() {
        return f64::INFINITY;
    }
    max_abs(&(u.adjoint() * u - identity(u.ncols())))
}

/// Principal square root of a positive semidefinite Hermitian matrix.
pub fn psd_sqrt(m: &CMat) -> CMat {
    let (vals, vecs) = hermitian_eigen(m);
    let d = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
        vals.len(),
        vals.iter().map(|&v| C64::new(v.max(0.0).sqrt(), 0.0)),
    ));
    &vecs * d * vecs.adjoint()
}

pub fn random_complex<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn random_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    CMat::from_fn(rows, cols, |_, _| random_complex(rng))
}

pub fn random_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<C64> {
    (0..n).map(|_| random_complex(rng)).collect()
}

pub fn random_unit_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<C64> {
    let v = random_vector(n, rng);
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / norm).collect()
}

/// Haar-random unitary via QR of a Ginibre matrix with the phase fix.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let g = random_matrix(n, n, rng);
    let qr = g.qr();
    let (q, r) = qr.unpack();
    let phases = CMat::from_fn(n, n, |i, j| {
        if i == j {
            let d = r[(i, i)];
            if d.norm() > 0.0 {
                d / d.norm()
            } else {
                C64::new(1.0, 0.0)
            }
        } else {
            C64::new(0.0, 0.0)
        }
    });
    q * phases
}

/// Random invertible `n × n` matrix with condition number at most `max_cond`.
pub fn random_invertible<R: Rng + ?Sized>(n: usize, max_cond: f64, rng: &mut R) -> CMat {
    let u = random_unitary(n, rng);
    let v = random_unitary(n, rng);
    let log_max = max_cond.max(1.0).ln();
    let s = nalgebra::DVector::from_iterator(
        n,
        (0..n).map(|k| {
            let x = if k == 0 { 0.0 } else if k == 1 { log_max } else { rng.random::<f64>() * log_max };
            C64::new(x.exp(), 0.0)
        }),
    );
    u * CMat::from_diagonal(&s) * v
}

/// Random `rows × cols` matrix of exactly the given rank.
pub fn random_of_rank<R: Rng + ?Sized>(rows: usize, cols: usize, rank: usize, rng: &mut R) -> CMat {
    let a = random_matrix(rows, rank, rng);
    let b = random_matrix(rank, cols, rng);
    a * b
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_rank_of_integer_matrices() {
        let m = CMat::from_row_slice(3, 3, &[
            c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0),
            c(2.0, 0.0), c(4.0, 0.0), c(6.0, 0.0),
            c(0.0, 1.0), c(0.0, 0.0), c(1.0, 0.0),
        ]);
        assert_eq!(gaussian_integer_rank(&m), Some(2));
        let z = CMat::zeros(2, 3);
        assert_eq!(gaussian_integer_rank(&z), Some(0));
        let g = CMat::from_row_slice(2, 2, &[c(1.0, 1.0), c(2.0, 0.0), c(1.0, 0.0), c(1.0, -1.0)]);
        // (1+i)(1-i) - 2 = 0
        assert_eq!(gaussian_integer_rank(&g), Some(1));
        let f = CMat::from_row_slice(1, 1, &[c(0.5, 0.0)]);
        assert_eq!(gaussian_integer_rank(&f), None);
    }

    #[test]
    fn exact_and_numeric_rank_agree_on_random_integer_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let k = rng.random_range(0..4);
            let a = CMat::from_fn(5, k, |_, _| c(rng.random_range(-3..4) as f64, rng.random_range(-2..3) as f64));
            let b = CMat::from_fn(k, 4, |_, _| c(rng.random_range(-3..4) as f64, 0.0));
            let m = a * b;
            assert_eq!(gaussian_integer_rank(&m).unwrap(), numeric_rank(&m, 1e-9));
        }
    }

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..6 {
            assert!(unitarity_defect(&random_unitary(n, &mut rng)) < 1e-12);
        }
    }

    #[test]
    fn random_invertible_respects_condition_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 2..5 {
            let m = random_invertible(n, 100.0, &mut rng);
            let s = singular_values(&m);
            let cond = s[0] / s[n - 1];
            assert!(cond <= 100.0 * (1.0 + 1e-9), "cond {cond}");
        }
    }

    #[test]
    fn pinv_inverts_full_column_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_matrix(5, 3, &mut rng);
        let p = pinv(&m, 1e-12);
        assert!(max_abs(&(p * &m - identity(3))) < 1e-10);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_matrix(4, 4, &mut rng);
        let m = a.adjoint() * &a;
        let r = psd_sqrt(&m);
        assert!(max_abs(&(&r * &r - m)) < 1e-9);
    }
}
