//! The score-matching family: implicit, denoising, and sliced.
//!
//! All three are partition-free. Parameter gradients reduce to the
//! direction-weighted score primitive `d/dtheta (u^T s(x))` with `u` frozen;
//! vector-Hessian terms use central finite differences of the score along
//! the projection (step 1e-4) rather than second-order differentiation.

use super::{require_batch, GradEstimate};
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::numerics::{axpy, dot, RngHandle};

/// Finite-difference step for directional derivatives of the score.
const FD_STEP: f64 = 1e-4;

/// Implicit score matching: `mean[ 1/2 |s(x)|^2 + tr(ds/dx) ]` with the
/// Hessian trace of the log-density taken from the model (exact where
/// available, finite differences otherwise).
pub fn sm_implicit(model: &dyn EnergyModel, data_batch: &[Vec<f64>]) -> Result<GradEstimate> {
    require_batch(data_batch, "data")?;
    let n_params = model.num_params();
    let d = model.dim();
    let mut loss = 0.0;
    let mut grad = vec![0.0; n_params];
    let n = data_batch.len() as f64;
    for x in data_batch {
        let s = model.score(x)?;
        loss += (0.5 * dot(&s, &s) + model.log_density_hessian_trace(x)?) / n;
        // d/dtheta 1/2 |s|^2 = (u^T s)' with u = s frozen.
        axpy(1.0 / n, &model.param_grad_of_directional_score(x, &s)?, &mut grad);
        // d/dtheta tr(ds/dx), coordinate by coordinate.
        let mut unit = vec![0.0; d];
        let mut xp = x.clone();
        for i in 0..d {
            unit[i] = 1.0;
            xp[i] = x[i] + FD_STEP;
            let gp = model.param_grad_of_directional_score(&xp, &unit)?;
            xp[i] = x[i] - FD_STEP;
            let gm = model.param_grad_of_directional_score(&xp, &unit)?;
            xp[i] = x[i];
            unit[i] = 0.0;
            for (g, (a, b)) in grad.iter_mut().zip(gp.iter().zip(&gm)) {
                *g += (a - b) / (2.0 * FD_STEP) / n;
            }
        }
    }
    Ok(GradEstimate {
        loss,
        grad,
        c_grad: None,
        n_data: data_batch.len(),
        n_noise: 0,
    })
}

/// Denoising score matching: perturb each datum with `sigma`-scaled Gaussian
/// noise and regress the model score at the perturbed point onto the kernel
/// score `(x - x~)/sigma^2`.
pub fn sm_denoising(
    model: &dyn EnergyModel,
    data_batch: &[Vec<f64>],
    sigma: f64,
    rng: &mut RngHandle,
) -> Result<GradEstimate> {
    let d = model.dim();
    let eps: Vec<Vec<f64>> = (0..data_batch.len()).map(|_| rng.normal_vec(d)).collect();
    sm_denoising_given_noise(model, data_batch, sigma, &eps)
}

/// Deterministic core of [`sm_denoising`] with the noise draws supplied.
pub fn sm_denoising_given_noise(
    model: &dyn EnergyModel,
    data_batch: &[Vec<f64>],
    sigma: f64,
    eps: &[Vec<f64>],
) -> Result<GradEstimate> {
    require_batch(data_batch, "data")?;
    if !(sigma > 0.0) {
        return Err(Error::InvalidConfig("sigma must be > 0".into()));
    }
    if eps.len() != data_batch.len() {
        return Err(Error::DimensionMismatch {
            expected: data_batch.len(),
            got: eps.len(),
        });
    }
    let n_params = model.num_params();
    let mut loss = 0.0;
    let mut grad = vec![0.0; n_params];
    let n = data_batch.len() as f64;
    for (x, e) in data_batch.iter().zip(eps) {
        let noisy: Vec<f64> = x.iter().zip(e).map(|(xi, ei)| xi + sigma * ei).collect();
        // Kernel score (x - x~)/sigma^2 = -eps/sigma.
        let target: Vec<f64> = e.iter().map(|ei| -ei / sigma).collect();
        let s = model.score(&noisy)?;
        let resid: Vec<f64> = s.iter().zip(&target).map(|(si, ti)| si - ti).collect();
        loss += 0.5 * dot(&resid, &resid) / n;
        axpy(
            1.0 / n,
            &model.param_grad_of_directional_score(&noisy, &resid)?,
            &mut grad,
        );
    }
    Ok(GradEstimate {
        loss,
        grad,
        c_grad: None,
        n_data: data_batch.len(),
        n_noise: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionDist {
    Rademacher,
    Gaussian,
}

/// Sliced score matching in its implicit form:
/// `mean[ 1/2 (v^T s)^2 + v^T (ds/dx) v ]` over random projections `v`.
pub fn sm_sliced(
    model: &dyn EnergyModel,
    data_batch: &[Vec<f64>],
    n_projections: usize,
    dist: ProjectionDist,
    rng: &mut RngHandle,
) -> Result<GradEstimate> {
    if n_projections == 0 {
        return Err(Error::InvalidConfig("n_projections must be >= 1".into()));
    }
    let d = model.dim();
    let draw = |rng: &mut RngHandle| -> Vec<f64> {
        match dist {
            ProjectionDist::Gaussian => rng.normal_vec(d),
            ProjectionDist::Rademacher => (0..d)
                .map(|_| if rng.uniform() < 0.5 { -1.0 } else { 1.0 })
                .collect(),
        }
    };
    let projections: Vec<Vec<Vec<f64>>> = (0..data_batch.len())
        .map(|_| (0..n_projections).map(|_| draw(rng)).collect())
        .collect();
    sm_sliced_given_projections(model, data_batch, &projections)
}

/// Deterministic core of [`sm_sliced`] with the projections supplied.
/// `projections[i]` lists the directions used for datum `i`.
pub fn sm_sliced_given_projections(
    model: &dyn EnergyModel,
    data_batch: &[Vec<f64>],
    projections: &[Vec<Vec<f64>>],
) -> Result<GradEstimate> {
    require_batch(data_batch, "data")?;
    if projections.len() != data_batch.len() {
        return Err(Error::DimensionMismatch {
            expected: data_batch.len(),
            got: projections.len(),
        });
    }
    let n_params = model.num_params();
    let mut loss = 0.0;
    let mut grad = vec![0.0; n_params];
    let n = data_batch.len() as f64;
    for (x, vs) in data_batch.iter().zip(projections) {
        if vs.is_empty() {
            return Err(Error::InvalidConfig("empty projection set".into()));
        }
        let m = vs.len() as f64;
        let s = model.score(x)?;
        for v in vs {
            let a = dot(v, &s);
            // Directional second derivative v^T (ds/dx) v by central
            // differences of the score along v.
            let xp: Vec<f64> = x.iter().zip(v).map(|(xi, vi)| xi + FD_STEP * vi).collect();
            let xm: Vec<f64> = x.iter().zip(v).map(|(xi, vi)| xi - FD_STEP * vi).collect();
            let sp = model.score(&xp)?;
            let sm = model.score(&xm)?;
            let hvv = (dot(v, &sp) - dot(v, &sm)) / (2.0 * FD_STEP);
            loss += (0.5 * a * a + hvv) / (n * m);

            axpy(
                a / (n * m),
                &model.param_grad_of_directional_score(x, v)?,
                &mut grad,
            );
            let gp = model.param_grad_of_directional_score(&xp, v)?;
            let gm = model.param_grad_of_directional_score(&xm, v)?;
            for (g, (p, q)) in grad.iter_mut().zip(gp.iter().zip(&gm)) {
                *g += (p - q) / (2.0 * FD_STEP) / (n * m);
            }
        }
    }
    Ok(GradEstimate {
        loss,
        grad,
        c_grad: None,
        n_data: data_batch.len(),
        n_noise: 0,
    })
}

/// All `2^d` sign vectors, for exhaustive Rademacher averages at small `d`.
pub fn rademacher_exhaustive(d: usize) -> Vec<Vec<f64>> {
    assert!(d <= 20, "exhaustive enumeration limited to small d");
    (0..(1usize << d))
        .map(|mask| {
            (0..d)
                .map(|i| if (mask >> i) & 1 == 1 { 1.0 } else { -1.0 })
                .collect()
        })
        .collect()
}
