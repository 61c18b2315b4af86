//! Dense vector/matrix primitives, seeded randomness, and the linear-algebra
//! helpers the rest of the crate consumes.
//!
//! Everything here is plain `f64` on row-major storage. Dimensions stay in
//! the hundreds at most, so O(d^3) algorithms (cyclic Jacobi, small matmuls)
//! are used throughout instead of external linear-algebra dependencies.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Vector helpers
// ---------------------------------------------------------------------------

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn check_finite(xs: &[f64], context: &str) -> Result<()> {
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(context.to_string()));
    }
    Ok(())
}

/// Numerically stable `log(1 + exp(x))`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Numerically stable `log(sigmoid(x))`.
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

// ---------------------------------------------------------------------------
// Matrix
// ---------------------------------------------------------------------------

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "element count must be rows*cols");
        Matrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn diag(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut m = Matrix::zeros(n, n);
        for (i, &e) in entries.iter().enumerate() {
            m.set(i, i, e);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self * x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// `self^T * x`
    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            axpy(x[r], self.row(r), &mut out);
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a == 0.0 {
                    continue;
                }
                for c in 0..other.cols {
                    out.data[r * other.cols + c] += a * other.get(k, c);
                }
            }
        }
        out
    }

    pub fn scale(&self, alpha: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn trace(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        (0..self.rows).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_asymmetry(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let mut worst = 0.0f64;
        for r in 0..self.rows {
            for c in (r + 1)..self.cols {
                worst = worst.max((self.get(r, c) - self.get(c, r)).abs());
            }
        }
        worst
    }

    pub fn symmetrized(&self) -> Matrix {
        let mut out = self.clone();
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(r, c, 0.5 * (self.get(r, c) + self.get(c, r)));
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Seeded randomness
// ---------------------------------------------------------------------------

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Serializable generator state for bit-exact checkpoint round trips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub word_pos: u128,
}

/// Deterministic generator: same seed, bit-identical draw sequence.
///
/// All randomness in the crate flows through explicitly passed handles; there
/// is no global generator. `derive` produces an independent child stream from
/// the handle's seed and a tag list without consuming any state, so per-chain
/// streams do not depend on call order.
#[derive(Debug, Clone)]
pub struct RngHandle {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngHandle {
    pub fn from_seed(seed: u64) -> Self {
        RngHandle {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn derive(&self, tags: &[u64]) -> RngHandle {
        let mut s = splitmix64(self.seed ^ 0xA076_1D64_78BD_642F);
        for &t in tags {
            s = splitmix64(s ^ splitmix64(t));
        }
        RngHandle::from_seed(s)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal draw (Box-Muller).
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform().max(1e-300);
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn normal_vec(&mut self, d: usize) -> Vec<f64> {
        (0..d).map(|_| self.normal()).collect()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0);
        // Rejection sampling to avoid modulo bias.
        let zone = u64::MAX - (u64::MAX % n as u64);
        loop {
            let x = self.next_u64();
            if x < zone {
                return (x % n as u64) as usize;
            }
        }
    }

    pub fn state(&self) -> RngState {
        RngState {
            seed: self.seed,
            word_pos: self.inner.get_word_pos(),
        }
    }

    pub fn from_state(state: &RngState) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(state.seed);
        inner.set_word_pos(state.word_pos);
        RngHandle {
            seed: state.seed,
            inner,
        }
    }
}

// ---------------------------------------------------------------------------
// Power iteration
// ---------------------------------------------------------------------------

fn normalize_in_place(v: &mut [f64]) -> Result<f64> {
    let n = l2_norm(v);
    if n < 1e-300 {
        return Err(Error::DegenerateSpectrum);
    }
    for x in v.iter_mut() {
        *x /= n;
    }
    Ok(n)
}

/// One warm-started power-iteration estimate of the largest singular value.
///
/// `u` holds the left-vector estimate from the previous call on the same
/// matrix and is updated in place; on return `u` and the returned `v` are
/// unit vectors and `sigma ~= u^T W v`.
pub fn power_iteration_warm(w: &Matrix, n_iters: usize, u: &mut [f64]) -> Result<(f64, Vec<f64>)> {
    assert!(n_iters >= 1, "n_iters must be >= 1");
    assert_eq!(u.len(), w.rows());
    if !w.is_finite() {
        return Err(Error::NonFinite("power iteration input".into()));
    }
    let mut v = vec![0.0; w.cols()];
    for _ in 0..n_iters {
        v = w.tr_matvec(u);
        normalize_in_place(&mut v)?;
        let wu = w.matvec(&v);
        u.copy_from_slice(&wu);
        normalize_in_place(u)?;
    }
    let sigma = dot(u, &w.matvec(&v));
    Ok((sigma, v))
}

/// Largest singular value of `w` by power iteration, with the initial left
/// vector drawn isotropically from `rng`.
pub fn power_iteration_sigma_max(
    w: &Matrix,
    n_iters: usize,
    rng: &mut RngHandle,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let mut u = rng.normal_vec(w.rows());
    normalize_in_place(&mut u).map_err(|_| Error::DegenerateSpectrum)?;
    let (sigma, v) = power_iteration_warm(w, n_iters, &mut u)?;
    Ok((sigma, u, v))
}

// ---------------------------------------------------------------------------
// Jacobi eigendecomposition and PSD square root
// ---------------------------------------------------------------------------

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, V)` with eigenvectors in the columns of `V`, so
/// `A = V diag(eig) V^T`. Adequate for the desk-scale dimensions used here.
pub fn jacobi_eigen(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    assert_eq!(a.rows(), a.cols());
    if !a.is_finite() {
        return Err(Error::NonFinite("jacobi input".into()));
    }
    let n = a.rows();
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let frob = a.frobenius_norm().max(1e-300);

    for _sweep in 0..200 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m.get(p, q) * m.get(p, q);
            }
        }
        if off.sqrt() <= 1e-14 * frob {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A <- J^T A J on rows/cols p, q
                for k in 0..n {
                    let akp = m.get(k, p);
                    let akq = m.get(k, q);
                    m.set(k, p, c * akp - s * akq);
                    m.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = m.get(p, k);
                    let aqk = m.get(q, k);
                    m.set(p, k, c * apk - s * aqk);
                    m.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let eig = (0..n).map(|i| m.get(i, i)).collect();
    Ok((eig, v))
}

/// Symmetric PSD square root: returns `R` with `R R = M`.
///
/// Eigenvalues in [-1e-9, 0] are clamped to zero; anything below -1e-9 is
/// rejected as not PSD.
pub fn psd_sqrt(m: &Matrix) -> Result<Matrix> {
    assert_eq!(m.rows(), m.cols());
    let asym = m.max_asymmetry();
    if asym > 1e-9 {
        return Err(Error::NotSymmetric {
            max_asymmetry: asym,
        });
    }
    let (eig, v) = jacobi_eigen(&m.symmetrized())?;
    let mut roots = Vec::with_capacity(eig.len());
    for &lambda in &eig {
        if lambda < -1e-9 {
            return Err(Error::NotPsd { eigenvalue: lambda });
        }
        roots.push(lambda.max(0.0).sqrt());
    }
    // R = V diag(sqrt eig) V^T
    let n = m.rows();
    let mut r = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += v.get(i, k) * roots[k] * v.get(j, k);
            }
            r.set(i, j, acc);
        }
    }
    Ok(r.symmetrized())
}

/// Lower-triangular Cholesky factor of an SPD matrix.
pub fn cholesky(m: &Matrix) -> Result<Matrix> {
    assert_eq!(m.rows(), m.cols());
    let n = m.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut acc = m.get(i, j);
            for k in 0..j {
                acc -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if acc <= 0.0 {
                    return Err(Error::NotPsd { eigenvalue: acc });
                }
                l.set(i, j, acc.sqrt());
            } else {
                l.set(i, j, acc / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Solves `L L^T x = b` given the lower Cholesky factor.
pub fn cholesky_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut acc = b[i];
        for k in 0..i {
            acc -= l.get(i, k) * y[k];
        }
        y[i] = acc / l.get(i, i);
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = y[i];
        for k in (i + 1)..n {
            acc -= l.get(k, i) * x[k];
        }
        x[i] = acc / l.get(i, i);
    }
    x
}

// ---------------------------------------------------------------------------
// Gaussian moment fitting
// ---------------------------------------------------------------------------

/// Fitted mean/covariance pair used by the Fréchet-Gaussian metric.
#[derive(Debug, Clone)]
pub struct GaussianSummary {
    pub mean: Vec<f64>,
    pub cov: Matrix,
}

impl GaussianSummary {
    /// Validates the symmetry invariant (1e-12) at the boundary.
    pub fn new(mean: Vec<f64>, cov: Matrix) -> Result<Self> {
        if cov.rows() != mean.len() || cov.cols() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: cov.rows(),
            });
        }
        check_finite(&mean, "gaussian summary mean")?;
        if !cov.is_finite() {
            return Err(Error::NonFinite("gaussian summary cov".into()));
        }
        let asym = cov.max_asymmetry();
        if asym > 1e-12 {
            return Err(Error::NotSymmetric {
                max_asymmetry: asym,
            });
        }
        Ok(GaussianSummary { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Sample mean and unbiased (N-1 normalized) sample covariance, symmetrized.
pub fn gaussian_fit(samples: &[Vec<f64>]) -> Result<GaussianSummary> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let d = samples[0].len();
    for s in samples {
        if s.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: s.len(),
            });
        }
        check_finite(s, "gaussian_fit sample")?;
    }
    let mut mean = vec![0.0; d];
    for s in samples {
        axpy(1.0, s, &mut mean);
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut cov = Matrix::zeros(d, d);
    for s in samples {
        for i in 0..d {
            let di = s[i] - mean[i];
            for j in 0..d {
                let v = cov.get(i, j) + di * (s[j] - mean[j]);
                cov.set(i, j, v);
            }
        }
    }
    let cov = cov.scale(1.0 / (n as f64 - 1.0)).symmetrized();
    GaussianSummary::new(mean, cov)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_matrix(rows: usize, cols: usize, rng: &mut RngHandle) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.normal()).collect();
        Matrix::new(rows, cols, data)
    }

    #[test]
    fn rng_is_deterministic() {
        let mut a = RngHandle::from_seed(42);
        let mut b = RngHandle::from_seed(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = RngHandle::from_seed(43);
        assert_ne!(a.next_u64(), c.next_u64());
    }

    #[test]
    fn rng_state_round_trips() {
        let mut a = RngHandle::from_seed(7);
        for _ in 0..13 {
            a.normal();
        }
        let state = a.state();
        let mut b = RngHandle::from_state(&state);
        for _ in 0..50 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn rng_derive_is_stable_and_independent() {
        let root = RngHandle::from_seed(5);
        let mut c1 = root.derive(&[1, 2]);
        let mut c2 = root.derive(&[1, 2]);
        let mut c3 = root.derive(&[1, 3]);
        assert_eq!(c1.next_u64(), c2.next_u64());
        assert_ne!(c1.next_u64(), c3.next_u64());
    }

    #[test]
    fn power_iteration_identity() {
        let mut rng = RngHandle::from_seed(1);
        let (sigma, u, v) = power_iteration_sigma_max(&Matrix::identity(3), 5, &mut rng).unwrap();
        assert!((sigma - 1.0).abs() < 1e-12);
        assert!((l2_norm(&u) - 1.0).abs() < 1e-12);
        assert!((l2_norm(&v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_iteration_diagonal() {
        let mut rng = RngHandle::from_seed(2);
        let w = Matrix::diag(&[3.0, 1.0]);
        let (sigma, _, _) = power_iteration_sigma_max(&w, 30, &mut rng).unwrap();
        assert!((sigma - 3.0).abs() < 1e-6);
    }

    #[test]
    fn power_iteration_matches_jacobi_oracle() {
        let mut rng = RngHandle::from_seed(3);
        let w = random_matrix(50, 30, &mut rng);
        let (sigma, _, _) = power_iteration_sigma_max(&w, 200, &mut rng).unwrap();
        // Oracle: largest eigenvalue of W^T W via Jacobi.
        let wtw = w.transpose().matmul(&w).symmetrized();
        let (eig, _) = jacobi_eigen(&wtw).unwrap();
        let lam_max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let oracle = lam_max.sqrt();
        assert!(
            ((sigma - oracle) / oracle).abs() < 1e-4,
            "sigma {sigma} vs oracle {oracle}"
        );
    }

    #[test]
    fn power_iteration_transpose_symmetry() {
        let mut rng = RngHandle::from_seed(4);
        for _ in 0..5 {
            let w = random_matrix(12, 7, &mut rng);
            let (s1, _, _) = power_iteration_sigma_max(&w, 300, &mut rng).unwrap();
            let (s2, _, _) = power_iteration_sigma_max(&w.transpose(), 300, &mut rng).unwrap();
            assert!((s1 - s2).abs() < 1e-6, "{s1} vs {s2}");
        }
    }

    #[test]
    fn power_iteration_scaling() {
        let mut rng = RngHandle::from_seed(5);
        for &c in &[0.5, 2.0, 17.0] {
            let w = random_matrix(9, 9, &mut rng);
            // Same initial vector for both calls; the iterates of cW are then
            // exactly proportional to those of W.
            let mut rng_a = rng.clone();
            let mut rng_b = rng.clone();
            let (s1, _, _) = power_iteration_sigma_max(&w, 300, &mut rng_a).unwrap();
            let (s2, _, _) = power_iteration_sigma_max(&w.scale(c), 300, &mut rng_b).unwrap();
            assert!(((s2 - c * s1) / (c * s1)).abs() < 1e-6);
        }
    }

    #[test]
    fn power_iteration_zero_matrix_errors() {
        let mut rng = RngHandle::from_seed(6);
        let err = power_iteration_sigma_max(&Matrix::zeros(4, 4), 5, &mut rng).unwrap_err();
        assert!(matches!(err, Error::DegenerateSpectrum));
    }

    #[test]
    fn power_iteration_rejects_non_finite() {
        let mut rng = RngHandle::from_seed(7);
        let mut w = Matrix::identity(3);
        w.set(1, 2, f64::NAN);
        let err = power_iteration_sigma_max(&w, 5, &mut rng).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn psd_sqrt_identity_and_diag() {
        let r = psd_sqrt(&Matrix::identity(2)).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((r.get(i, j) - want).abs() < 1e-12);
            }
        }
        let r = psd_sqrt(&Matrix::diag(&[4.0, 9.0])).unwrap();
        assert!((r.get(0, 0) - 2.0).abs() < 1e-10);
        assert!((r.get(1, 1) - 3.0).abs() < 1e-10);
    }

    #[test]
    fn psd_sqrt_self_consistency() {
        let mut rng = RngHandle::from_seed(8);
        let a = random_matrix(4, 4, &mut rng);
        // SPD: A A^T + I
        let m = a.matmul(&a.transpose()).add(&Matrix::identity(4)).symmetrized();
        let r = psd_sqrt(&m).unwrap();
        let rr = r.matmul(&r);
        let mut diff = 0.0f64;
        for i in 0..16 {
            diff += (rr.data()[i] - m.data()[i]).powi(2);
        }
        assert!(diff.sqrt() / m.frobenius_norm() < 1e-8);
        assert!(r.max_asymmetry() < 1e-12);
    }

    #[test]
    fn psd_sqrt_commutes_with_conjugation() {
        // Orthogonal Q from a rotation, D diagonal.
        let t = 0.7f64;
        let q = Matrix::new(2, 2, vec![t.cos(), -t.sin(), t.sin(), t.cos()]);
        let d = Matrix::diag(&[2.0, 5.0]);
        let m = q.matmul(&d).matmul(&q.transpose()).symmetrized();
        let lhs = psd_sqrt(&m).unwrap();
        let rhs = q
            .matmul(&psd_sqrt(&d).unwrap())
            .matmul(&q.transpose());
        for i in 0..2 {
            for j in 0..2 {
                assert!((lhs.get(i, j) - rhs.get(i, j)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn psd_sqrt_rejects_negative_eigenvalue() {
        let err = psd_sqrt(&Matrix::diag(&[1.0, -0.5])).unwrap_err();
        assert!(matches!(err, Error::NotPsd { .. }));
    }

    #[test]
    fn psd_sqrt_clamps_tiny_negative() {
        let r = psd_sqrt(&Matrix::diag(&[1.0, -5e-10])).unwrap();
        assert!((r.get(1, 1) - 0.0).abs() < 1e-5);
    }

    #[test]
    fn gaussian_fit_two_points() {
        let s = vec![vec![0.0, 0.0], vec![2.0, 2.0]];
        let g = gaussian_fit(&s).unwrap();
        assert_eq!(g.mean, vec![1.0, 1.0]);
        for i in 0..2 {
            for j in 0..2 {
                assert!((g.cov.get(i, j) - 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gaussian_fit_degenerate_point_mass() {
        let s = vec![vec![3.0, -1.0]; 10];
        let g = gaussian_fit(&s).unwrap();
        assert!(g.cov.frobenius_norm() < 1e-12);
    }

    #[test]
    fn gaussian_fit_large_sample_standard_normal() {
        let mut rng = RngHandle::from_seed(9);
        let samples: Vec<Vec<f64>> = (0..100_000).map(|_| rng.normal_vec(2)).collect();
        let g = gaussian_fit(&samples).unwrap();
        for i in 0..2 {
            assert!(g.mean[i].abs() < 0.02, "mean {:?}", g.mean);
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g.cov.get(i, j) - want).abs() < 0.02);
            }
        }
    }

    #[test]
    fn gaussian_fit_needs_two_samples() {
        let err = gaussian_fit(&[vec![1.0]]).unwrap_err();
        assert!(matches!(err, Error::InsufficientSamples { .. }));
    }

    #[test]
    fn gaussian_fit_translation_equivariant() {
        let mut rng = RngHandle::from_seed(10);
        let samples: Vec<Vec<f64>> = (0..64).map(|_| rng.normal_vec(3)).collect();
        let shifted: Vec<Vec<f64>> = samples
            .iter()
            .map(|s| s.iter().map(|x| x + 2.5).collect())
            .collect();
        let a = gaussian_fit(&samples).unwrap();
        let b = gaussian_fit(&shifted).unwrap();
        for i in 0..3 {
            assert!((b.mean[i] - a.mean[i] - 2.5).abs() < 1e-12);
            for j in 0..3 {
                assert!((b.cov.get(i, j) - a.cov.get(i, j)).abs() < 1e-12);
            }
        }
    }
}
