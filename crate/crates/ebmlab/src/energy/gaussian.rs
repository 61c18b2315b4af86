//! Analytic energies with closed-form scores, gradients, and Hessian traces.
//!
//! `AnalyticGaussianEnergy` is the trainable quadratic energy used in
//! closed-form fitting tests; `GaussianMixtureEnergy` is the exactly
//! normalized ground-truth target (and exact-density noise source) for
//! experiments.

use serde::{Deserialize, Serialize};

use super::{check_dim, EnergyModel, ModelDescriptor};
use crate::error::{Error, Result};
use crate::numerics::{check_finite, dot, logsumexp, Matrix, RngHandle};

/// Quadratic energy `E(x) = 1/2 (x - mu)^T P (x - mu)` with learnable mean
/// and precision. Parameters flatten as `[mu, P row-major]`.
#[derive(Debug, Clone)]
pub struct AnalyticGaussianEnergy {
    mu: Vec<f64>,
    prec: Matrix,
}

impl AnalyticGaussianEnergy {
    pub fn new(mu: Vec<f64>, prec: Matrix) -> Result<Self> {
        if prec.rows() != mu.len() || prec.cols() != mu.len() {
            return Err(Error::DimensionMismatch {
                expected: mu.len(),
                got: prec.rows(),
            });
        }
        check_finite(&mu, "gaussian mean")?;
        if !prec.is_finite() {
            return Err(Error::NonFinite("gaussian precision".into()));
        }
        Ok(AnalyticGaussianEnergy { mu, prec })
    }

    /// Standard Gaussian energy: zero mean, identity precision.
    pub fn standard(dim: usize) -> Self {
        AnalyticGaussianEnergy {
            mu: vec![0.0; dim],
            prec: Matrix::identity(dim),
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mu
    }

    pub fn precision(&self) -> &Matrix {
        &self.prec
    }

    fn centered(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mu).map(|(a, b)| a - b).collect()
    }

    /// Symmetric part of the precision, which is what the quadratic form
    /// actually sees.
    fn sym_prec_matvec(&self, d: &[f64]) -> Vec<f64> {
        let pd = self.prec.matvec(d);
        let ptd = self.prec.tr_matvec(d);
        pd.iter().zip(&ptd).map(|(a, b)| 0.5 * (a + b)).collect()
    }
}

impl EnergyModel for AnalyticGaussianEnergy {
    fn dim(&self) -> usize {
        self.mu.len()
    }

    fn energy(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x)?;
        let d = self.centered(x);
        Ok(0.5 * dot(&d, &self.prec.matvec(&d)))
    }

    fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x)?;
        let d = self.centered(x);
        Ok(self.sym_prec_matvec(&d).iter().map(|v| -v).collect())
    }

    fn num_params(&self) -> usize {
        self.mu.len() + self.mu.len() * self.mu.len()
    }

    fn params(&self) -> Vec<f64> {
        let mut p = self.mu.clone();
        p.extend_from_slice(self.prec.data());
        p
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                got: params.len(),
            });
        }
        let n = self.mu.len();
        self.mu.copy_from_slice(&params[..n]);
        self.prec = Matrix::new(n, n, params[n..].to_vec());
        Ok(())
    }

    fn param_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x)?;
        let n = self.dim();
        let d = self.centered(x);
        let mut g = Vec::with_capacity(self.num_params());
        // dE/dmu = -sym(P) (x - mu)
        let pd = self.sym_prec_matvec(&d);
        g.extend(pd.iter().map(|v| -v));
        // dE/dP_ij = 1/2 d_i d_j
        for i in 0..n {
            for j in 0..n {
                g.push(0.5 * d[i] * d[j]);
            }
        }
        Ok(g)
    }

    fn snapshot(&self) -> Box<dyn EnergyModel> {
        Box::new(self.clone())
    }

    fn descriptor(&self) -> ModelDescriptor {
        ModelDescriptor::Gaussian { dim: self.dim() }
    }

    fn log_density_hessian_trace(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x)?;
        Ok(-self.prec.trace())
    }

    fn param_grad_of_directional_score(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x)?;
        check_dim(self.dim(), u)?;
        let n = self.dim();
        let d = self.centered(x);
        let mut g = Vec::with_capacity(self.num_params());
        // u^T s = -u^T sym(P) d; d/dmu = sym(P) u
        g.extend(self.sym_prec_matvec(u));
        // d/dP_ij = -1/2 (u_i d_j + d_i u_j)
        for i in 0..n {
            for j in 0..n {
                g.push(-0.5 * (u[i] * d[j] + d[i] * u[j]));
            }
        }
        Ok(g)
    }
}

/// One diagonal-covariance mixture component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Exactly normalized Gaussian mixture: `E(x) = -log sum_k w_k N(x; mu_k,
/// diag(var_k))`.
///
/// Serves as the ground-truth data distribution (exact log-pdf, direct
/// sampler) and as an exact-density noise distribution for NCE-style
/// objectives. It carries no trainable parameters.
#[derive(Debug, Clone)]
pub struct GaussianMixtureEnergy {
    comps: Vec<MixtureComponent>,
}

impl GaussianMixtureEnergy {
    pub fn new(comps: Vec<MixtureComponent>) -> Result<Self> {
        if comps.is_empty() {
            return Err(Error::InvalidConfig("mixture needs components".into()));
        }
        let d = comps[0].mean.len();
        let mut wsum = 0.0;
        for c in &comps {
            if c.mean.len() != d || c.var.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: c.mean.len().max(c.var.len()),
                });
            }
            if !(c.weight > 0.0) {
                return Err(Error::InvalidConfig("mixture weights must be > 0".into()));
            }
            if c.var.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::InvalidConfig("mixture variances must be > 0".into()));
            }
            wsum += c.weight;
        }
        if (wsum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "mixture weights sum to {wsum}, expected 1"
            )));
        }
        Ok(GaussianMixtureEnergy { comps })
    }

    /// Single isotropic Gaussian as a one-component mixture.
    pub fn isotropic_gaussian(mean: Vec<f64>, var: f64) -> Self {
        let d = mean.len();
        GaussianMixtureEnergy {
            comps: vec![MixtureComponent {
                weight: 1.0,
                mean,
                var: vec![var; d],
            }],
        }
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.comps
    }

    fn comp_log_pdf(c: &MixtureComponent, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..x.len() {
            let d = x[i] - c.mean[i];
            acc += -0.5 * d * d / c.var[i] - 0.5 * (std::f64::consts::TAU * c.var[i]).ln();
        }
        acc
    }

    fn log_terms(&self, x: &[f64]) -> Vec<f64> {
        self.comps
            .iter()
            .map(|c| c.weight.ln() + Self::comp_log_pdf(c, x))
            .collect()
    }

    /// Exact normalized log-density.
    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        logsumexp(&self.log_terms(x))
    }

    /// Posterior component responsibilities at `x`.
    fn responsibilities(&self, x: &[f64]) -> Vec<f64> {
        let lt = self.log_terms(x);
        let lse = logsumexp(&lt);
        lt.iter().map(|l| (l - lse).exp()).collect()
    }

    pub fn sample(&self, rng: &mut RngHandle) -> Vec<f64> {
        let mut u = rng.uniform();
        let mut k = self.comps.len() - 1;
        for (i, c) in self.comps.iter().enumerate() {
            if u < c.weight {
                k = i;
                break;
            }
            u -= c.weight;
        }
        let c = &self.comps[k];
        (0..c.mean.len())
            .map(|i| c.mean[i] + c.var[i].sqrt() * rng.normal())
            .collect()
    }

    pub fn sample_batch(&self, n: usize, rng: &mut RngHandle) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.sample(rng)).collect()
    }

    /// The mixture convolved with isotropic Gaussian noise of variance
    /// `sigma^2` (every component variance grows by `sigma^2`).
    pub fn smoothed(&self, sigma: f64) -> GaussianMixtureEnergy {
        let comps = self
            .comps
            .iter()
            .map(|c| MixtureComponent {
                weight: c.weight,
                mean: c.mean.clone(),
                var: c.var.iter().map(|v| v + sigma * sigma).collect(),
            })
            .collect();
        GaussianMixtureEnergy { comps }
    }

    /// Exact mixture mean and covariance.
    pub fn moments(&self) -> (Vec<f64>, Matrix) {
        let d = self.dim();
        let mut mean = vec![0.0; d];
        for c in &self.comps {
            for i in 0..d {
                mean[i] += c.weight * c.mean[i];
            }
        }
        let mut cov = Matrix::zeros(d, d);
        for c in &self.comps {
            for i in 0..d {
                for j in 0..d {
                    let mut v = c.weight * (c.mean[i] - mean[i]) * (c.mean[j] - mean[j]);
                    if i == j {
                        v += c.weight * c.var[i];
                    }
                    cov.set(i, j, cov.get(i, j) + v);
                }
            }
        }
        (mean, cov)
    }

    /// Axis-aligned box holding all component means plus `k` standard
    /// deviations per coordinate.
    pub fn bounding_box(&self, k: f64) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for c in &self.comps {
            for i in 0..d {
                let s = c.var[i].sqrt();
                lo[i] = lo[i].min(c.mean[i] - k * s);
                hi[i] = hi[i].max(c.mean[i] + k * s);
            }
        }
        (lo, hi)
    }
}

impl EnergyModel for GaussianMixtureEnergy {
    fn dim(&self) -> usize {
        self.comps[0].mean.len()
    }

    fn energy(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x)?;
        Ok(-self.log_pdf(x))
    }

    fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x)?;
        let r = self.responsibilities(x);
        let mut s = vec![0.0; x.len()];
        for (k, c) in self.comps.iter().enumerate() {
            for i in 0..x.len() {
                s[i] += r[k] * (c.mean[i] - x[i]) / c.var[i];
            }
        }
        Ok(s)
    }

    fn num_params(&self) -> usize {
        0
    }

    fn params(&self) -> Vec<f64> {
        Vec::new()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.is_empty() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: 0,
                got: params.len(),
            })
        }
    }

    fn param_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x)?;
        Ok(Vec::new())
    }

    fn snapshot(&self) -> Box<dyn EnergyModel> {
        Box::new(self.clone())
    }

    fn descriptor(&self) -> ModelDescriptor {
        ModelDescriptor::Mixture {
            components: self.comps.clone(),
        }
    }

    fn log_density_hessian_trace(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x)?;
        let r = self.responsibilities(x);
        let mut gbar = vec![0.0; x.len()];
        let mut acc = 0.0;
        for (k, c) in self.comps.iter().enumerate() {
            let mut g2 = 0.0;
            let mut lap = 0.0;
            for i in 0..x.len() {
                let gi = (c.mean[i] - x[i]) / c.var[i];
                g2 += gi * gi;
                lap += 1.0 / c.var[i];
                gbar[i] += r[k] * gi;
            }
            acc += r[k] * (g2 - lap);
        }
        Ok(acc - dot(&gbar, &gbar))
    }
}
