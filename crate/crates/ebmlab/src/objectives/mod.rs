//! Training objectives and their parameter-gradient estimators.
//!
//! Every estimator returns a [`GradEstimate`]: the loss value, the gradient
//! over the model's flat parameter vector, and — where the objective carries
//! a learnable log-partition scalar — its gradient too. Posteriors and
//! density ratios are computed in log space throughout; raw exponentials
//! only appear inside non-log `SPair` evaluation with a clamped exponent.

mod brm;
mod score;
mod spair;

pub use brm::{adabrm, brm};
pub use score::{
    rademacher_exhaustive, sm_denoising, sm_denoising_given_noise, sm_implicit, sm_sliced,
    sm_sliced_given_projections, ProjectionDist,
};
pub use spair::{bregman_point, bregman_point_vec, spair_catalog, SPair, LOG_RATIO_LIMIT};

use crate::energy::{EnergyModel, GaussianMixtureEnergy};
use crate::error::{Error, Result};
use crate::numerics::{axpy, log_sigmoid, logsumexp, sigmoid, softplus, RngHandle};
use crate::samplers::{ChainConfig, ReplayBuffer};

/// Loss value and gradient(s) produced by one objective evaluation.
#[derive(Debug, Clone)]
pub struct GradEstimate {
    pub loss: f64,
    /// Gradient over the model's flat parameter vector.
    pub grad: Vec<f64>,
    /// Gradient over the learnable log-partition scalar, for objectives that
    /// carry one.
    pub c_grad: Option<f64>,
    pub n_data: usize,
    pub n_noise: usize,
}

/// The noise side of a contrastive objective: either a named distribution
/// with exact log-pdf and direct sampler, or a frozen model snapshot sampled
/// by Langevin chains started from a replay buffer.
pub enum NoiseSpec {
    Exact(GaussianMixtureEnergy),
    Frozen {
        model: Box<dyn EnergyModel>,
        chain: ChainConfig,
        buffer: ReplayBuffer,
    },
}

fn require_batch(batch: &[Vec<f64>], what: &str) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig(format!("{what} batch is empty")));
    }
    Ok(())
}

fn same_object(a: &dyn EnergyModel, b: &dyn EnergyModel) -> bool {
    std::ptr::eq(
        a as *const dyn EnergyModel as *const (),
        b as *const dyn EnergyModel as *const (),
    )
}

/// Gradient of the maximum-likelihood objective (the direction of ascent):
/// mean parameter-gradient of the energy over model samples minus the same
/// mean over data samples. Callers minimizing negate it.
///
/// The loss value is the energy-gap surrogate `mean E(data) - mean E(model)`;
/// the gradient, not the surrogate, is the contract.
pub fn mle_grad(
    model: &dyn EnergyModel,
    data_batch: &[Vec<f64>],
    model_batch: &[Vec<f64>],
) -> Result<GradEstimate> {
    require_batch(data_batch, "data")?;
    require_batch(model_batch, "model")?;
    let n_params = model.num_params();
    let mut grad = vec![0.0; n_params];
    let mut data_energy = 0.0;
    for x in model_batch {
        axpy(1.0, &model.param_grad(x)?, &mut grad);
    }
    for g in grad.iter_mut() {
        *g /= model_batch.len() as f64;
    }
    let mut data_term = vec![0.0; n_params];
    for x in data_batch {
        axpy(1.0, &model.param_grad(x)?, &mut data_term);
        data_energy += model.energy(x)?;
    }
    for (g, d) in grad.iter_mut().zip(&data_term) {
        *g -= d / data_batch.len() as f64;
    }
    let mut model_energy = 0.0;
    for x in model_batch {
        model_energy += model.energy(x)?;
    }
    Ok(GradEstimate {
        loss: data_energy / data_batch.len() as f64 - model_energy / model_batch.len() as f64,
        grad,
        c_grad: None,
        n_data: data_batch.len(),
        n_noise: model_batch.len(),
    })
}

/// Binary noise-contrastive estimation against an exact-density noise
/// distribution, with learnable log-partition `c` and data-to-noise ratio
/// `v`.
///
/// With `z(x) = ln v - E(x) - c - ln p_n(x)`, the data-class posterior is
/// `sigmoid(z)` and the loss is the sum of the two per-class means of the
/// negative log posterior.
pub fn nce_binary(
    model: &dyn EnergyModel,
    c: f64,
    noise: &GaussianMixtureEnergy,
    data_batch: &[Vec<f64>],
    noise_batch: &[Vec<f64>],
    v: f64,
) -> Result<GradEstimate> {
    require_batch(data_batch, "data")?;
    require_batch(noise_batch, "noise")?;
    if !(v > 0.0) {
        return Err(Error::InvalidConfig("v must be > 0".into()));
    }
    let ln_v = v.ln();
    let n_params = model.num_params();
    let mut loss = 0.0;
    // Weighted per-class sums are accumulated separately and only combined
    // at the end, so identical batches cancel exactly.
    let mut data_acc = vec![0.0; n_params];
    let mut noise_acc = vec![0.0; n_params];
    let mut c_data = 0.0;
    let mut c_noise = 0.0;

    let nd = data_batch.len() as f64;
    for x in data_batch {
        let z = ln_v - model.energy(x)? - c - noise.log_pdf(x);
        loss += softplus(-z) / nd;
        let w = sigmoid(-z);
        axpy(w, &model.param_grad(x)?, &mut data_acc);
        c_data += w;
    }
    let nn = noise_batch.len() as f64;
    for x in noise_batch {
        let z = ln_v - model.energy(x)? - c - noise.log_pdf(x);
        loss += softplus(z) / nn;
        let w = sigmoid(z);
        axpy(w, &model.param_grad(x)?, &mut noise_acc);
        c_noise += w;
    }
    let grad = data_acc
        .iter()
        .zip(&noise_acc)
        .map(|(d, n)| d / nd - n / nn)
        .collect();
    Ok(GradEstimate {
        loss,
        grad,
        c_grad: Some(c_data / nd - c_noise / nn),
        n_data: data_batch.len(),
        n_noise: noise_batch.len(),
    })
}

/// One rank-NCE collection: `L` points of which exactly one is the observed
/// sample.
#[derive(Debug, Clone)]
pub struct RankCollection {
    pub items: Vec<Vec<f64>>,
    pub data_index: usize,
}

/// Rank-based NCE: softmax cross-entropy over each collection's posterior
/// `softmax_k(ln rho_k + ln p~_theta(x_k) - ln p_n(x_k))`.
///
/// The softmax is shift-invariant, so the log-partition scalar receives an
/// exactly zero gradient; it is reported for interface uniformity.
pub fn nce_rank(
    model: &dyn EnergyModel,
    c: f64,
    noise: &GaussianMixtureEnergy,
    collections: &[RankCollection],
    class_probs: &[f64],
) -> Result<GradEstimate> {
    if collections.is_empty() {
        return Err(Error::InvalidConfig("no collections supplied".into()));
    }
    let l = class_probs.len();
    if l == 0 || class_probs.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::InvalidConfig(
            "class probabilities must be positive".into(),
        ));
    }
    let total: f64 = class_probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "class probabilities sum to {total}, expected 1"
        )));
    }
    let n_params = model.num_params();
    let mut loss = 0.0;
    let mut grad = vec![0.0; n_params];
    let n = collections.len() as f64;
    for coll in collections {
        if coll.items.len() != l {
            return Err(Error::DimensionMismatch {
                expected: l,
                got: coll.items.len(),
            });
        }
        if coll.data_index >= l {
            return Err(Error::InvalidConfig("data_index out of range".into()));
        }
        let mut logits = Vec::with_capacity(l);
        for (k, x) in coll.items.iter().enumerate() {
            logits.push(class_probs[k].ln() - model.energy(x)? - c - noise.log_pdf(x));
        }
        let lse = logsumexp(&logits);
        loss += (lse - logits[coll.data_index]) / n;
        for (k, x) in coll.items.iter().enumerate() {
            let p_k = (logits[k] - lse).exp();
            let delta = if k == coll.data_index { 1.0 } else { 0.0 };
            axpy((delta - p_k) / n, &model.param_grad(x)?, &mut grad);
        }
    }
    Ok(GradEstimate {
        loss,
        grad,
        c_grad: Some(0.0),
        n_data: collections.len(),
        n_noise: collections.len() * (l - 1),
    })
}

/// Conditional NCE with a symmetric Gaussian kernel: for each datum `x`, draw
/// `kappa` contrastive points `y = x + sigma eps`; the kernel ratio cancels
/// and the posterior reduces to `sigmoid(E(y) - E(x) - ln v)`. The loss
/// averages the negative log posterior over both tuple orderings.
pub fn cnce(
    model: &dyn EnergyModel,
    data_batch: &[Vec<f64>],
    sigma: f64,
    kappa: usize,
    v: f64,
    rng: &mut RngHandle,
) -> Result<GradEstimate> {
    if kappa == 0 {
        return Err(Error::InvalidConfig("kappa must be >= 1".into()));
    }
    let d = model.dim();
    let eps: Vec<Vec<Vec<f64>>> = (0..data_batch.len())
        .map(|_| (0..kappa).map(|_| rng.normal_vec(d)).collect())
        .collect();
    cnce_given_noise(model, data_batch, sigma, &eps, v)
}

/// Deterministic core of [`cnce`] with the noise draws supplied, so the loss
/// is an exact function of the parameters (used by gradient checks).
pub fn cnce_given_noise(
    model: &dyn EnergyModel,
    data_batch: &[Vec<f64>],
    sigma: f64,
    eps: &[Vec<Vec<f64>>],
    v: f64,
) -> Result<GradEstimate> {
    require_batch(data_batch, "data")?;
    if !(sigma > 0.0) {
        return Err(Error::InvalidConfig("sigma must be > 0".into()));
    }
    if !(v > 0.0) {
        return Err(Error::InvalidConfig("v must be > 0".into()));
    }
    if eps.len() != data_batch.len() {
        return Err(Error::DimensionMismatch {
            expected: data_batch.len(),
            got: eps.len(),
        });
    }
    let ln_v = v.ln();
    let n_params = model.num_params();
    let mut loss = 0.0;
    let mut grad = vec![0.0; n_params];
    let n_pairs = (data_batch.len() * eps[0].len()) as f64;
    for (x, draws) in data_batch.iter().zip(eps) {
        let e_x = model.energy(x)?;
        let g_x = model.param_grad(x)?;
        for e in draws {
            let y: Vec<f64> = x.iter().zip(e).map(|(xi, ei)| xi + sigma * ei).collect();
            let delta = model.energy(&y)? - e_x;
            // Both labeled orderings of the (data, noise) pair.
            let (z1, z2) = (delta - ln_v, delta + ln_v);
            loss += 0.5 * (softplus(-z1) + softplus(-z2)) / n_pairs;
            let w = -0.5 * (sigmoid(-z1) + sigmoid(-z2)) / n_pairs;
            axpy(w, &model.param_grad(&y)?, &mut grad);
            axpy(-w, &g_x, &mut grad);
        }
    }
    Ok(GradEstimate {
        loss,
        grad,
        c_grad: None,
        n_data: data_batch.len(),
        n_noise: data_batch.len() * eps[0].len(),
    })
}

/// Self-adapting NCE: logistic discrimination between data and samples from
/// a frozen snapshot of the model itself, on unnormalized densities.
///
/// With equal class priors the posteriors reduce to
/// `sigmoid(E_theta - E_frozen)` (noise class) and its negation (data
/// class); no partition function appears. The gradient covers the live
/// model's parameters only.
pub fn adance(
    model: &dyn EnergyModel,
    frozen: &dyn EnergyModel,
    data_batch: &[Vec<f64>],
    noise_batch: &[Vec<f64>],
) -> Result<GradEstimate> {
    if same_object(model, frozen) {
        return Err(Error::NoiseNotFrozen);
    }
    require_batch(data_batch, "data")?;
    require_batch(noise_batch, "noise")?;
    let n_params = model.num_params();
    let mut loss = 0.0;
    let mut data_acc = vec![0.0; n_params];
    let mut noise_acc = vec![0.0; n_params];
    let nd = data_batch.len() as f64;
    for x in data_batch {
        let z = model.energy(x)? - frozen.energy(x)?;
        loss += -log_sigmoid(-z) / nd;
        axpy(sigmoid(z), &model.param_grad(x)?, &mut data_acc);
    }
    let nn = noise_batch.len() as f64;
    for x in noise_batch {
        let z = model.energy(x)? - frozen.energy(x)?;
        loss += -log_sigmoid(z) / nn;
        axpy(sigmoid(-z), &model.param_grad(x)?, &mut noise_acc);
    }
    let grad = data_acc
        .iter()
        .zip(&noise_acc)
        .map(|(d, n)| d / nd - n / nn)
        .collect();
    Ok(GradEstimate {
        loss,
        grad,
        c_grad: None,
        n_data: data_batch.len(),
        n_noise: noise_batch.len(),
    })
}
