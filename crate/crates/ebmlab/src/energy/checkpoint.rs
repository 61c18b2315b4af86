//! Versioned JSON checkpoints.
//!
//! A checkpoint is a layout descriptor plus the flat parameter vector, the
//! spectral-norm warm-start state, an optional learnable log-partition
//! scalar, optional data bounds for chain initialization, and the generator
//! state. Floats are written in shortest round-trip form, so save/load is
//! bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnalyticGaussianEnergy, EnergyModel, GaussianMixtureEnergy, MixtureComponent, MlpEnergy};
use crate::error::{Error, Result};
use crate::numerics::{RngHandle, RngState};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelDescriptor {
    Mlp {
        widths: Vec<usize>,
        leaky_slope: f64,
        spectral_norm: bool,
        power_iters: usize,
    },
    Gaussian {
        dim: usize,
    },
    Mixture {
        components: Vec<MixtureComponent>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub model: ModelDescriptor,
    pub params: Vec<f64>,
    pub warm_start_u: Vec<Vec<f64>>,
    pub inv_sigma: Vec<f64>,
    /// Learnable log-partition scalar for objectives that carry one.
    pub log_partition: Option<f64>,
    /// Bounding box of the training data, used as the rejuvenation prior
    /// when sampling from the checkpoint.
    pub data_bounds: Option<(Vec<f64>, Vec<f64>)>,
    pub rng: RngState,
}

impl Checkpoint {
    pub fn capture(
        model: &dyn EnergyModel,
        log_partition: Option<f64>,
        data_bounds: Option<(Vec<f64>, Vec<f64>)>,
        rng: &RngHandle,
    ) -> Self {
        let (warm_start_u, inv_sigma) = model.aux_state();
        Checkpoint {
            version: CHECKPOINT_VERSION,
            model: model.descriptor(),
            params: model.params(),
            warm_start_u,
            inv_sigma,
            log_partition,
            data_bounds,
            rng: rng.state(),
        }
    }

    /// Rebuilds the model with parameters and auxiliary state restored.
    pub fn instantiate(&self) -> Result<Box<dyn EnergyModel>> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointFormat(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        let mut model: Box<dyn EnergyModel> = match &self.model {
            ModelDescriptor::Mlp {
                widths,
                leaky_slope,
                spectral_norm,
                power_iters,
            } => {
                let mut throwaway = RngHandle::from_seed(0);
                Box::new(MlpEnergy::new(
                    widths,
                    *leaky_slope,
                    *spectral_norm,
                    *power_iters,
                    &mut throwaway,
                )?)
            }
            ModelDescriptor::Gaussian { dim } => {
                Box::new(AnalyticGaussianEnergy::standard(*dim))
            }
            ModelDescriptor::Mixture { components } => {
                Box::new(GaussianMixtureEnergy::new(components.clone())?)
            }
        };
        model.set_params(&self.params).map_err(|e| {
            Error::CheckpointFormat(format!("parameter vector does not fit layout: {e}"))
        })?;
        if !self.warm_start_u.is_empty() || !self.inv_sigma.is_empty() {
            model.restore_aux(self.warm_start_u.clone(), self.inv_sigma.clone())?;
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::CheckpointFormat(e.to_string()))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointFormat(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }
}
