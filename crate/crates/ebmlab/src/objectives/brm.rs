//! Ratio matching under a Bregman divergence, with fixed or self-adapting
//! noise.
//!
//! Both losses have the two-expectation form `E_noise[S0(g)] -
//! E_data[S1(g)]`; they differ only in the density ratio: `g = p~_theta /
//! p_n` against an exact noise density (with the learnable log-partition
//! inside `p~_theta`), or `g = p~_theta / p~_frozen` against a frozen model
//! snapshot. Gradients use the weights `S0'(g) g` and `S1'(g) g` on
//! `d log p~_theta = -dE`.

use super::spair::{SPair, LOG_RATIO_LIMIT};
use super::{require_batch, same_object, GradEstimate};
use crate::energy::{EnergyModel, GaussianMixtureEnergy};
use crate::error::{Error, Result};
use crate::numerics::axpy;

fn check_ratio(spair: &SPair, lg: f64, x: &[f64]) -> Result<f64> {
    if !lg.is_finite() || (lg > LOG_RATIO_LIMIT && !spair.evaluates_in_log_space()) {
        return Err(Error::RatioOverflow {
            log_ratio: lg,
            point: x.to_vec(),
        });
    }
    Ok(lg)
}

fn ratio_matching_core<L>(
    model: &dyn EnergyModel,
    log_ratio: L,
    spair: &SPair,
    data_batch: &[Vec<f64>],
    noise_batch: &[Vec<f64>],
    with_c: bool,
) -> Result<GradEstimate>
where
    L: Fn(&[f64]) -> Result<f64>,
{
    require_batch(data_batch, "data")?;
    require_batch(noise_batch, "noise")?;
    let n_params = model.num_params();
    let mut loss = 0.0;
    // Per-class weighted sums, combined only at the end so identical
    // batches cancel exactly (same accumulation shape as the NCE forms).
    let mut data_acc = vec![0.0; n_params];
    let mut noise_acc = vec![0.0; n_params];
    let mut c_data = 0.0;
    let mut c_noise = 0.0;

    let nd = data_batch.len() as f64;
    for x in data_batch {
        let lg = check_ratio(spair, log_ratio(x)?, x)?;
        loss -= spair.s1_of_log(lg) / nd;
        let w1 = spair.weight1_of_log(lg);
        axpy(w1, &model.param_grad(x)?, &mut data_acc);
        c_data += w1;
    }
    let nn = noise_batch.len() as f64;
    for x in noise_batch {
        let lg = check_ratio(spair, log_ratio(x)?, x)?;
        loss += spair.s0_of_log(lg) / nn;
        let w0 = spair.weight0_of_log(lg);
        axpy(w0, &model.param_grad(x)?, &mut noise_acc);
        c_noise += w0;
    }
    let grad = data_acc
        .iter()
        .zip(&noise_acc)
        .map(|(d, n)| d / nd - n / nn)
        .collect();
    Ok(GradEstimate {
        loss,
        grad,
        c_grad: if with_c {
            Some(c_data / nd - c_noise / nn)
        } else {
            None
        },
        n_data: data_batch.len(),
        n_noise: noise_batch.len(),
    })
}

/// Bregman ratio matching against an exact noise density: matches
/// `g = p~_theta / p_n` to the data-to-noise ratio. With the log-type pair
/// this is exactly binary NCE at `v = 1`.
pub fn brm(
    model: &dyn EnergyModel,
    c: f64,
    noise: &GaussianMixtureEnergy,
    spair: &SPair,
    data_batch: &[Vec<f64>],
    noise_batch: &[Vec<f64>],
) -> Result<GradEstimate> {
    ratio_matching_core(
        model,
        |x| Ok(-model.energy(x)? - c - noise.log_pdf(x)),
        spair,
        data_batch,
        noise_batch,
        true,
    )
}

/// Self-adapting Bregman ratio matching: the noise is a frozen snapshot of
/// the model and the ratio `g = exp(E_frozen - E_theta)` needs no partition
/// function. With the log-type pair this is exactly the self-adapting NCE
/// objective.
pub fn adabrm(
    model: &dyn EnergyModel,
    frozen: &dyn EnergyModel,
    spair: &SPair,
    data_batch: &[Vec<f64>],
    noise_batch: &[Vec<f64>],
) -> Result<GradEstimate> {
    if same_object(model, frozen) {
        return Err(Error::NoiseNotFrozen);
    }
    ratio_matching_core(
        model,
        |x| Ok(frozen.energy(x)? - model.energy(x)?),
        spair,
        data_batch,
        noise_batch,
        false,
    )
}
