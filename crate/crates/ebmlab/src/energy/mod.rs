//! Energy functions behind one shared contract.
//!
//! Every model represents an unnormalized Boltzmann density
//! `p(x) ~ exp(-E(x))`; the partition function is deliberately never
//! computed. Objectives that need an absolute scale carry an explicit
//! learnable log-partition scalar instead.

mod checkpoint;
mod gaussian;
mod mlp;
mod rbm;

pub use checkpoint::{Checkpoint, ModelDescriptor};
pub use gaussian::{AnalyticGaussianEnergy, GaussianMixtureEnergy, MixtureComponent};
pub use mlp::MlpEnergy;
pub use rbm::{spins_from_index, Rbm};

#[cfg(test)]
pub(crate) use mlp::zeroed_mlp;

use crate::error::{Error, Result};
use crate::numerics::{axpy, check_finite, l2_norm};

/// The contract every continuous energy function satisfies: scalar energy,
/// input-gradient (score), parameter-gradient over a flat parameter vector,
/// and a frozen deep-copy snapshot.
pub trait EnergyModel: Send + Sync {
    fn dim(&self) -> usize;

    /// Scalar energy `E(x)`.
    fn energy(&self, x: &[f64]) -> Result<f64>;

    /// Score `-dE/dx`, the gradient of the log-density; invariant to
    /// normalization.
    fn score(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn num_params(&self) -> usize;

    /// Flat parameter vector in the model's layout order.
    fn params(&self) -> Vec<f64>;

    fn set_params(&mut self, params: &[f64]) -> Result<()>;

    /// `dE/dtheta` at `x`, flattened in the same layout as `params`.
    fn param_grad(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Deep copy whose parameters never change when the original is updated.
    fn snapshot(&self) -> Box<dyn EnergyModel>;

    fn descriptor(&self) -> ModelDescriptor;

    /// Auxiliary non-parameter state carried through checkpoints
    /// (spectral-norm warm-start vectors and cached scale factors).
    fn aux_state(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        (Vec::new(), Vec::new())
    }

    fn restore_aux(&mut self, _warm_u: Vec<Vec<f64>>, _inv_sigma: Vec<f64>) -> Result<()> {
        Ok(())
    }

    /// Re-estimate normalization scales after a parameter update. No-op for
    /// models without spectral normalization.
    fn refresh_normalization(&mut self) -> Result<()> {
        Ok(())
    }

    /// Trace of the Hessian of the log-density, `tr(d score / dx)`.
    ///
    /// Default: central finite differences of the score (step 1e-4);
    /// analytic models override with the closed form.
    fn log_density_hessian_trace(&self, x: &[f64]) -> Result<f64> {
        let h = 1e-4;
        let d = self.dim();
        let mut xp = x.to_vec();
        let mut acc = 0.0;
        for i in 0..d {
            xp[i] = x[i] + h;
            let sp = self.score(&xp)?[i];
            xp[i] = x[i] - h;
            let sm = self.score(&xp)?[i];
            xp[i] = x[i];
            acc += (sp - sm) / (2.0 * h);
        }
        Ok(acc)
    }

    /// Parameter gradient of the direction-weighted score `u^T s(x)` with
    /// `u` held fixed.
    ///
    /// Since `u^T s = -D_u E`, the default reduces the mixed second
    /// derivative to a central finite difference of `param_grad` along `u`,
    /// keeping the gradient machinery first-order only.
    fn param_grad_of_directional_score(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: u.len(),
            });
        }
        let nu = l2_norm(u);
        if nu == 0.0 {
            return Ok(vec![0.0; self.num_params()]);
        }
        let h = 1e-4;
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        for i in 0..x.len() {
            let step = h * u[i] / nu;
            xp[i] += step;
            xm[i] -= step;
        }
        let gp = self.param_grad(&xp)?;
        let gm = self.param_grad(&xm)?;
        let scale = -nu / (2.0 * h);
        let mut out = gp;
        for (o, m) in out.iter_mut().zip(&gm) {
            *o = scale * (*o - m);
        }
        Ok(out)
    }
}

pub(crate) fn check_dim(model_dim: usize, x: &[f64]) -> Result<()> {
    if x.len() != model_dim {
        return Err(Error::DimensionMismatch {
            expected: model_dim,
            got: x.len(),
        });
    }
    check_finite(x, "model input")
}

/// Mean of `f` over the rows of a batch, accumulated into a flat vector.
pub(crate) fn batch_mean_map<F>(batch: &[Vec<f64>], out_len: usize, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut acc = vec![0.0; out_len];
    for x in batch {
        let v = f(x)?;
        axpy(1.0, &v, &mut acc);
    }
    let n = batch.len() as f64;
    for a in acc.iter_mut() {
        *a /= n;
    }
    Ok(acc)
}

#[cfg(test)]
mod contract_tests {
    use super::*;
    use crate::numerics::RngHandle;

    /// Central finite-difference check of `score` and `param_grad` for any
    /// model, used by the per-model test modules.
    pub(crate) fn assert_gradients_match_fd(model: &dyn EnergyModel, x: &[f64], tol: f64) {
        let h = 1e-5;
        let s = model.score(x).unwrap();
        let mut xp = x.to_vec();
        for i in 0..x.len() {
            xp[i] = x[i] + h;
            let ep = model.energy(&xp).unwrap();
            xp[i] = x[i] - h;
            let em = model.energy(&xp).unwrap();
            xp[i] = x[i];
            let fd = -(ep - em) / (2.0 * h);
            let scale = fd.abs().max(s[i].abs()).max(1e-3);
            assert!(
                (s[i] - fd).abs() / scale < tol,
                "score[{i}] = {} vs fd {}",
                s[i],
                fd
            );
        }

        let g = model.param_grad(x).unwrap();
        let mut m = model.snapshot();
        let p0 = m.params();
        for i in 0..p0.len() {
            let mut p = p0.clone();
            p[i] += h;
            m.set_params(&p).unwrap();
            let ep = m.energy(x).unwrap();
            p[i] = p0[i] - h;
            m.set_params(&p).unwrap();
            let em = m.energy(x).unwrap();
            let fd = (ep - em) / (2.0 * h);
            let scale = fd.abs().max(g[i].abs()).max(1e-3);
            assert!(
                (g[i] - fd).abs() / scale < tol,
                "param_grad[{i}] = {} vs fd {}",
                g[i],
                fd
            );
        }
    }

    #[test]
    fn default_directional_score_grad_matches_exact_on_gaussian() {
        // The analytic model overrides the FD default; compare the two.
        let mut rng = RngHandle::from_seed(11);
        let model = AnalyticGaussianEnergy::standard(3);
        for _ in 0..10 {
            let x = rng.normal_vec(3);
            let u = rng.normal_vec(3);
            let exact = model.param_grad_of_directional_score(&x, &u).unwrap();
            // Re-run through the trait default by wrapping in a shim that
            // does not override it.
            struct Shim(AnalyticGaussianEnergy);
            impl EnergyModel for Shim {
                fn dim(&self) -> usize {
                    self.0.dim()
                }
                fn energy(&self, x: &[f64]) -> Result<f64> {
                    self.0.energy(x)
                }
                fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
                    self.0.score(x)
                }
                fn num_params(&self) -> usize {
                    self.0.num_params()
                }
                fn params(&self) -> Vec<f64> {
                    self.0.params()
                }
                fn set_params(&mut self, p: &[f64]) -> Result<()> {
                    self.0.set_params(p)
                }
                fn param_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
                    self.0.param_grad(x)
                }
                fn snapshot(&self) -> Box<dyn EnergyModel> {
                    Box::new(Shim(self.0.clone()))
                }
                fn descriptor(&self) -> ModelDescriptor {
                    self.0.descriptor()
                }
            }
            let shim = Shim(model.clone());
            let fd = shim.param_grad_of_directional_score(&x, &u).unwrap();
            for (a, b) in exact.iter().zip(&fd) {
                assert!((a - b).abs() < 1e-6 * (1.0 + a.abs()), "{a} vs {b}");
            }
        }
    }
}
