//! MCMC kernels and the persistent replay buffer.
//!
//! All chains take a read-only model and an explicit generator handle, so
//! independent chains can run concurrently with distinct handles against a
//! shared snapshot.

mod buffer;

pub use buffer::{PointOrigin, ReplayBuffer};

use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::numerics::{
    axpy, check_finite, cholesky, cholesky_solve, dot, l2_norm, Matrix, RngHandle,
};

/// Score norms above this abort the chain instead of propagating NaN.
pub const DIVERGENCE_GUARD: f64 = 1e6;

/// Step counts and scales for Langevin and HMC chains.
///
/// Langevin runs `steps` updates of size `step_size` (tau). In matched mode
/// (`noise_scale: None`) the Brownian term uses `sqrt(tau)`; decoupled mode
/// substitutes an independent `noise_scale`, which is how the preset
/// `paper()` configuration (tau = 1, noise 0.005, 100 steps) trains.
#[derive(Debug, Clone)]
pub struct ChainConfig {
    pub steps: usize,
    pub step_size: f64,
    pub noise_scale: Option<f64>,
    pub metropolis_adjust: bool,
    pub leapfrog_steps: usize,
    pub leapfrog_eps: f64,
    pub mass: Option<Matrix>,
}

impl ChainConfig {
    /// Matched-mode Langevin: noise standard deviation `sqrt(tau)`.
    pub fn langevin(steps: usize, tau: f64) -> Self {
        ChainConfig {
            steps,
            step_size: tau,
            noise_scale: None,
            metropolis_adjust: false,
            leapfrog_steps: 1,
            leapfrog_eps: 0.1,
            mass: None,
        }
    }

    /// Langevin with an independent Brownian scale.
    pub fn langevin_decoupled(steps: usize, tau: f64, noise_scale: f64) -> Self {
        ChainConfig {
            noise_scale: Some(noise_scale),
            ..ChainConfig::langevin(steps, tau)
        }
    }

    /// The preset used for non-convergent training: 100 burn-in steps,
    /// step size 1, noise standard deviation 0.005.
    pub fn paper() -> Self {
        ChainConfig::langevin_decoupled(100, 1.0, 0.005)
    }

    pub fn hmc(leapfrog_steps: usize, leapfrog_eps: f64) -> Self {
        ChainConfig {
            steps: 1,
            step_size: 0.0,
            noise_scale: Some(0.0),
            metropolis_adjust: true,
            leapfrog_steps,
            leapfrog_eps,
            mass: None,
        }
    }

    pub fn with_metropolis_adjust(mut self, on: bool) -> Self {
        self.metropolis_adjust = on;
        self
    }

    pub fn langevin_noise(&self) -> f64 {
        self.noise_scale.unwrap_or_else(|| self.step_size.sqrt())
    }

    pub fn validate_langevin(&self) -> Result<()> {
        if self.step_size < 0.0 {
            return Err(Error::InvalidConfig("step_size must be >= 0".into()));
        }
        if let Some(n) = self.noise_scale {
            if n < 0.0 {
                return Err(Error::InvalidConfig("noise_scale must be >= 0".into()));
            }
        }
        if self.metropolis_adjust && self.langevin_noise() <= 0.0 {
            return Err(Error::InvalidConfig(
                "metropolis adjustment needs a positive noise scale".into(),
            ));
        }
        Ok(())
    }

    pub fn validate_hmc(&self) -> Result<()> {
        if self.leapfrog_steps == 0 {
            return Err(Error::InvalidConfig("leapfrog_steps must be >= 1".into()));
        }
        if !(self.leapfrog_eps > 0.0) {
            return Err(Error::InvalidConfig("leapfrog_eps must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-chain bookkeeping: acceptance fraction, the mean score magnitude
/// along the visited path, and per-step energies.
#[derive(Debug, Clone)]
pub struct ChainDiagnostics {
    pub acceptance_rate: f64,
    pub nu: f64,
    pub energies: Vec<f64>,
}

/// Mean Euclidean norm of the energy gradient along a path.
pub fn grad_magnitude_nu(model: &dyn EnergyModel, path: &[Vec<f64>]) -> Result<f64> {
    if path.is_empty() {
        return Err(Error::InvalidConfig("nu needs a non-empty path".into()));
    }
    let mut acc = 0.0;
    for x in path {
        acc += l2_norm(&model.score(x)?);
    }
    Ok(acc / path.len() as f64)
}

// ---------------------------------------------------------------------------
// Metropolis-Hastings
// ---------------------------------------------------------------------------

/// Log acceptance probability `min(0, [log pi(x*) + log q(x|x*)] - [log pi(x)
/// + log q(x*|x)])`. The target may be unnormalized.
pub fn mh_log_accept_prob(
    log_target_current: f64,
    log_target_candidate: f64,
    log_q_forward: f64,
    log_q_reverse: f64,
) -> f64 {
    let log_alpha = (log_target_candidate + log_q_reverse) - (log_target_current + log_q_forward);
    log_alpha.min(0.0)
}

/// Generic Metropolis-Hastings chain.
///
/// `proposal(x, rng)` returns `(candidate, log q(candidate | x),
/// log q(x | candidate))`.
pub fn mh_chain<T, P>(
    log_unnorm_target: T,
    mut proposal: P,
    init: &[f64],
    steps: usize,
    rng: &mut RngHandle,
) -> Result<(Vec<Vec<f64>>, ChainDiagnostics)>
where
    T: Fn(&[f64]) -> f64,
    P: FnMut(&[f64], &mut RngHandle) -> (Vec<f64>, f64, f64),
{
    assert!(steps >= 1);
    check_finite(init, "mh init")?;
    let mut x = init.to_vec();
    let mut log_t = log_unnorm_target(&x);
    if !log_t.is_finite() {
        return Err(Error::NonFinite("target at init".into()));
    }
    let mut samples = Vec::with_capacity(steps);
    let mut energies = Vec::with_capacity(steps);
    let mut accepted = 0usize;
    for _ in 0..steps {
        let (cand, log_q_fwd, log_q_rev) = proposal(&x, rng);
        let log_t_cand = log_unnorm_target(&cand);
        let log_alpha = if log_t_cand.is_finite() {
            mh_log_accept_prob(log_t, log_t_cand, log_q_fwd, log_q_rev)
        } else {
            f64::NEG_INFINITY
        };
        if rng.uniform().max(1e-300).ln() < log_alpha {
            x = cand;
            log_t = log_t_cand;
            accepted += 1;
        }
        samples.push(x.clone());
        energies.push(-log_t);
    }
    let diag = ChainDiagnostics {
        acceptance_rate: accepted as f64 / steps as f64,
        nu: 0.0,
        energies,
    };
    Ok((samples, diag))
}

// ---------------------------------------------------------------------------
// Langevin
// ---------------------------------------------------------------------------

/// Simulates `x_{k+1} = x_k + (tau/2) score(x_k) + noise * eps` for
/// `cfg.steps` steps, optionally with a Metropolis accept step (MALA).
///
/// Returns the final point, the full path (steps + 1 points including the
/// start), and diagnostics. A score norm above [`DIVERGENCE_GUARD`] aborts
/// with the step index and the score-norm history collected so far.
pub fn langevin_chain(
    model: &dyn EnergyModel,
    init: &[f64],
    cfg: &ChainConfig,
    rng: &mut RngHandle,
) -> Result<(Vec<f64>, Vec<Vec<f64>>, ChainDiagnostics)> {
    cfg.validate_langevin()?;
    check_finite(init, "langevin init")?;
    let d = model.dim();
    if init.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: init.len(),
        });
    }
    let noise = cfg.langevin_noise();
    let half_tau = 0.5 * cfg.step_size;
    let mut x = init.to_vec();
    let mut path = Vec::with_capacity(cfg.steps + 1);
    path.push(x.clone());
    let mut energies = Vec::with_capacity(cfg.steps + 1);
    energies.push(model.energy(&x)?);
    let mut score_norms = Vec::with_capacity(cfg.steps);
    let mut accepted = 0usize;

    for step in 0..cfg.steps {
        let s = model.score(&x)?;
        let norm = l2_norm(&s);
        if !norm.is_finite() || norm > DIVERGENCE_GUARD {
            return Err(Error::SamplerDiverged {
                step,
                score_norm: norm,
                nu_history: score_norms,
            });
        }
        score_norms.push(norm);

        let mut cand = x.clone();
        axpy(half_tau, &s, &mut cand);
        let drift_end = cand.clone();
        for c in cand.iter_mut() {
            *c += noise * rng.normal();
        }

        if cfg.metropolis_adjust {
            // q(x* | x) = N(x + (tau/2) s(x), noise^2 I)
            let log_q_fwd = gaussian_log_kernel(&cand, &drift_end, noise);
            let s_cand = model.score(&cand)?;
            let mut rev_mean = cand.clone();
            axpy(half_tau, &s_cand, &mut rev_mean);
            let log_q_rev = gaussian_log_kernel(&x, &rev_mean, noise);
            let e_x = -energies.last().unwrap();
            let e_cand = model.energy(&cand)?;
            let log_alpha = mh_log_accept_prob(e_x, -e_cand, log_q_fwd, log_q_rev);
            if rng.uniform().max(1e-300).ln() < log_alpha {
                x = cand;
                accepted += 1;
            }
        } else {
            x = cand;
            accepted += 1;
        }
        path.push(x.clone());
        energies.push(model.energy(&x)?);
    }

    let nu = if score_norms.is_empty() {
        0.0
    } else {
        score_norms.iter().sum::<f64>() / score_norms.len() as f64
    };
    let diag = ChainDiagnostics {
        acceptance_rate: if cfg.steps == 0 {
            1.0
        } else {
            accepted as f64 / cfg.steps as f64
        },
        nu,
        energies,
    };
    let last = path.last().unwrap().clone();
    Ok((last, path, diag))
}

fn gaussian_log_kernel(x: &[f64], mean: &[f64], std: f64) -> f64 {
    let mut acc = 0.0;
    for (a, b) in x.iter().zip(mean) {
        let d = a - b;
        acc += -0.5 * d * d / (std * std);
    }
    acc - x.len() as f64 * (std::f64::consts::TAU.sqrt() * std).ln()
}

// ---------------------------------------------------------------------------
// Hamiltonian Monte Carlo
// ---------------------------------------------------------------------------

struct MassOps {
    chol: Option<Matrix>,
}

impl MassOps {
    fn new(mass: &Option<Matrix>) -> Result<Self> {
        let chol = match mass {
            None => None,
            Some(m) => Some(cholesky(m)?),
        };
        Ok(MassOps { chol })
    }

    fn sample_momentum(&self, d: usize, rng: &mut RngHandle) -> Vec<f64> {
        let z = rng.normal_vec(d);
        match &self.chol {
            None => z,
            Some(l) => l.matvec(&z),
        }
    }

    fn inv_mul(&self, v: &[f64]) -> Vec<f64> {
        match &self.chol {
            None => v.to_vec(),
            Some(l) => cholesky_solve(l, v),
        }
    }

    fn kinetic(&self, v: &[f64]) -> f64 {
        0.5 * dot(v, &self.inv_mul(v))
    }
}

/// One leapfrog trajectory: half momentum step, alternating full position and
/// momentum steps, closing half momentum step. The potential is the model
/// energy (`grad U = -score`).
pub fn leapfrog(
    model: &dyn EnergyModel,
    x0: &[f64],
    v0: &[f64],
    steps: usize,
    eps: f64,
    mass: &Option<Matrix>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let ops = MassOps::new(mass)?;
    let mut x = x0.to_vec();
    let mut v = v0.to_vec();
    let grad_u = |x: &[f64]| -> Result<Vec<f64>> {
        Ok(model.score(x)?.iter().map(|s| -s).collect())
    };
    axpy(-0.5 * eps, &grad_u(&x)?, &mut v);
    for step in 0..steps {
        axpy(eps, &ops.inv_mul(&v), &mut x);
        if step + 1 < steps {
            axpy(-eps, &grad_u(&x)?, &mut v);
        }
    }
    axpy(-0.5 * eps, &grad_u(&x)?, &mut v);
    Ok((x, v))
}

/// HMC chain: per iteration draw momentum from `N(0, M)`, run a leapfrog
/// trajectory, and accept with probability `min(1, exp(-H* + H))`. Non-finite
/// Hamiltonians count as rejections.
pub fn hmc_chain(
    model: &dyn EnergyModel,
    init: &[f64],
    cfg: &ChainConfig,
    n_samples: usize,
    rng: &mut RngHandle,
) -> Result<(Vec<Vec<f64>>, ChainDiagnostics)> {
    cfg.validate_hmc()?;
    check_finite(init, "hmc init")?;
    let d = model.dim();
    let ops = MassOps::new(&cfg.mass)?;
    let mut x = init.to_vec();
    let mut samples = Vec::with_capacity(n_samples);
    let mut energies = Vec::with_capacity(n_samples);
    let mut accepted = 0usize;
    for _ in 0..n_samples {
        let v = ops.sample_momentum(d, rng);
        let h0 = model.energy(&x)? + ops.kinetic(&v);
        let (xs, vs) = leapfrog(model, &x, &v, cfg.leapfrog_steps, cfg.leapfrog_eps, &cfg.mass)?;
        let h1 = model.energy(&xs)? + ops.kinetic(&vs);
        if h1.is_finite() && rng.uniform().max(1e-300).ln() < (-(h1 - h0)).min(0.0) {
            x = xs;
            accepted += 1;
        }
        samples.push(x.clone());
        energies.push(model.energy(&x)?);
    }
    let nu = grad_magnitude_nu(model, &samples)?;
    Ok((
        samples,
        ChainDiagnostics {
            acceptance_rate: accepted as f64 / n_samples.max(1) as f64,
            nu,
            energies,
        },
    ))
}

// ---------------------------------------------------------------------------
// Block Gibbs for RBMs
// ---------------------------------------------------------------------------

/// Alternates hidden-block and visible-block draws: one sweep is one full
/// `p(h|v)` draw followed by one `p(v|h)` draw.
pub fn gibbs_rbm(
    rbm: &crate::energy::Rbm,
    init_v: &[f64],
    sweeps: usize,
    rng: &mut RngHandle,
) -> Result<(Vec<Vec<f64>>, ChainDiagnostics)> {
    assert!(sweeps >= 1);
    let mut v = init_v.to_vec();
    // Validates the +/-1 state entries.
    rbm.prob_h_given_v(&v)?;
    let mut samples = Vec::with_capacity(sweeps);
    let mut energies = Vec::with_capacity(sweeps);
    for _ in 0..sweeps {
        let ph = rbm.prob_h_given_v(&v)?;
        let h: Vec<f64> = ph
            .iter()
            .map(|&p| if rng.uniform() < p { 1.0 } else { -1.0 })
            .collect();
        let pv = rbm.prob_v_given_h(&h)?;
        v = pv
            .iter()
            .map(|&p| if rng.uniform() < p { 1.0 } else { -1.0 })
            .collect();
        samples.push(v.clone());
        energies.push(rbm.energy(&v, &h)?);
    }
    Ok((
        samples,
        ChainDiagnostics {
            // Block Gibbs proposals are always accepted.
            acceptance_rate: 1.0,
            nu: 0.0,
            energies,
        },
    ))
}

// ---------------------------------------------------------------------------
// Trace export
// ---------------------------------------------------------------------------

/// Writes a chain trace as CSV: `step, x0.., energy, score_norm`.
pub fn write_chain_csv(
    path: &std::path::Path,
    model: &dyn EnergyModel,
    points: &[Vec<f64>],
) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let d = model.dim();
    let coords: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    writeln!(out, "step,{},energy,score_norm", coords.join(","))?;
    for (k, x) in points.iter().enumerate() {
        let e = model.energy(x)?;
        let sn = l2_norm(&model.score(x)?);
        let xs: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{k},{},{e},{sn}", xs.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
