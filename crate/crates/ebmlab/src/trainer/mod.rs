//! The training loop: adaptive frozen-noise refresh, Langevin negative
//! sampling through the replay buffer, Adam/SGD updates, and diagnostics.
//!
//! One step draws a data batch, produces the objective's noise side (frozen
//! model chains, exact-density draws, or nothing), takes an optimizer step on
//! the flat parameters (plus the learnable log-partition scalar where the
//! objective carries one), refreshes the spectral-norm scales, and pushes
//! chain endpoints back into the buffer. For the self-adapting objectives the
//! frozen model is replaced by a fresh snapshot whenever `(t + 1) %
//! adaptive_interval == 0`, matching the refresh schedule `{K, 2K, ...}`.

mod optimizer;

pub use optimizer::{OptimizerSpec, OptimizerState};

use std::time::Instant;

use crate::energy::{EnergyModel, GaussianMixtureEnergy};
use crate::error::{Error, Result};
use crate::numerics::{l2_norm, RngHandle};
use crate::objectives::{
    adabrm, adance, brm, cnce, mle_grad, nce_binary, nce_rank, sm_denoising, sm_implicit,
    sm_sliced, GradEstimate, ProjectionDist, RankCollection, SPair,
};
use crate::samplers::{langevin_chain, ChainConfig, ReplayBuffer};

const TAG_DATA: u64 = 1;
const TAG_MISC: u64 = 2;
const TAG_CHAIN: u64 = 3;
const TAG_INIT_BOUNDS: u64 = 4;
const TAG_BUFFER: u64 = 5;

/// Which loss drives training.
#[derive(Debug, Clone)]
pub enum ObjectiveSpec {
    /// Self-adapting NCE against the frozen snapshot.
    AdaNce,
    /// Self-adapting Bregman ratio matching with the given pair.
    AdaBrm { spair: SPair },
    /// Maximum-likelihood gradients with persistent-chain negatives.
    MleMcmc,
    NceBinary { noise: GaussianMixtureEnergy, v: f64 },
    NceRank { noise: GaussianMixtureEnergy, l: usize },
    Brm { noise: GaussianMixtureEnergy, spair: SPair },
    Cnce { sigma: f64, kappa: usize, v: f64 },
    SmImplicit,
    SmDenoising { sigma: f64 },
    SmSliced { n_projections: usize, rademacher: bool },
}

impl ObjectiveSpec {
    /// Does the noise side come from model MCMC chains?
    pub fn uses_model_chains(&self) -> bool {
        matches!(
            self,
            ObjectiveSpec::AdaNce | ObjectiveSpec::AdaBrm { .. } | ObjectiveSpec::MleMcmc
        )
    }

    /// Does the objective carry a learnable log-partition scalar?
    pub fn has_log_partition(&self) -> bool {
        matches!(
            self,
            ObjectiveSpec::NceBinary { .. }
                | ObjectiveSpec::NceRank { .. }
                | ObjectiveSpec::Brm { .. }
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            ObjectiveSpec::AdaNce => "adance",
            ObjectiveSpec::AdaBrm { .. } => "adabrm",
            ObjectiveSpec::MleMcmc => "mle_mcmc",
            ObjectiveSpec::NceBinary { .. } => "nce_binary",
            ObjectiveSpec::NceRank { .. } => "nce_rank",
            ObjectiveSpec::Brm { .. } => "brm",
            ObjectiveSpec::Cnce { .. } => "cnce",
            ObjectiveSpec::SmImplicit => "sm_implicit",
            ObjectiveSpec::SmDenoising { .. } => "sm_denoising",
            ObjectiveSpec::SmSliced { .. } => "sm_sliced",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub objective: ObjectiveSpec,
    /// Steps between frozen-noise refreshes for the self-adapting
    /// objectives.
    pub adaptive_interval: usize,
    pub iterations: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerSpec,
    pub langevin: ChainConfig,
    pub buffer_capacity: usize,
    pub rejuvenation_rate: f64,
    /// When set, the buffer is emptied at every frozen refresh instead of
    /// persisting across the whole run.
    pub reset_buffer_on_refresh: bool,
    pub seed: u64,
    pub nu_log_interval: usize,
    /// Checkpoint every this many iterations; 0 means final only.
    pub checkpoint_interval: usize,
    /// Test mode: reuse the data batch as the noise batch instead of
    /// sampling chains.
    pub shared_batch_test: bool,
}

impl TrainConfig {
    pub fn new(objective: ObjectiveSpec, iterations: usize, seed: u64) -> Self {
        TrainConfig {
            objective,
            adaptive_interval: 1,
            iterations,
            batch_size: 128,
            optimizer: OptimizerSpec::adam_default(),
            langevin: ChainConfig::paper(),
            buffer_capacity: 10_000,
            rejuvenation_rate: 0.25,
            reset_buffer_on_refresh: false,
            seed,
            nu_log_interval: 10,
            checkpoint_interval: 0,
            shared_batch_test: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.adaptive_interval == 0 {
            return Err(Error::InvalidConfig(
                "objective.adaptive_interval must be >= 1".into(),
            ));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("train.iterations must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("train.batch_size must be >= 1".into()));
        }
        if self.nu_log_interval == 0 {
            return Err(Error::InvalidConfig(
                "train.nu_log_interval must be >= 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.rejuvenation_rate) {
            return Err(Error::InvalidConfig(
                "sampler.rejuvenation_rate must lie in [0, 1]".into(),
            ));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::InvalidConfig(
                "sampler.buffer_capacity must be >= 1".into(),
            ));
        }
        self.optimizer.validate()?;
        self.langevin.validate_langevin()?;
        match &self.objective {
            ObjectiveSpec::NceBinary { v, .. } if !(*v > 0.0) => {
                Err(Error::InvalidConfig("objective.v must be > 0".into()))
            }
            ObjectiveSpec::NceRank { l, .. } if *l < 2 => {
                Err(Error::InvalidConfig("objective.l must be >= 2".into()))
            }
            ObjectiveSpec::Cnce { sigma, kappa, v } => {
                if !(*sigma > 0.0) {
                    Err(Error::InvalidConfig("objective.sigma must be > 0".into()))
                } else if *kappa == 0 {
                    Err(Error::InvalidConfig("objective.kappa must be >= 1".into()))
                } else if !(*v > 0.0) {
                    Err(Error::InvalidConfig("objective.v must be > 0".into()))
                } else {
                    Ok(())
                }
            }
            ObjectiveSpec::SmDenoising { sigma } if !(*sigma > 0.0) => {
                Err(Error::InvalidConfig("objective.sigma must be > 0".into()))
            }
            ObjectiveSpec::SmSliced { n_projections, .. } if *n_projections == 0 => Err(
                Error::InvalidConfig("objective.n_projections must be >= 1".into()),
            ),
            _ => Ok(()),
        }
    }
}

/// One row of the training log.
#[derive(Debug, Clone)]
pub struct IterRecord {
    /// 1-based iteration index.
    pub iter: usize,
    pub loss: f64,
    pub grad_norm: f64,
    /// Mean score magnitude along this step's chains, at the logging
    /// cadence.
    pub nu: Option<f64>,
    pub refreshed: bool,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub records: Vec<IterRecord>,
    pub refresh_iters: Vec<usize>,
    pub diverged: Option<(usize, f64)>,
}

impl TrainLog {
    /// Deterministic log columns; wall-clock timings go to a separate file
    /// so identically seeded runs are byte-identical.
    pub fn csv(&self) -> String {
        let mut out = String::from("iter,loss,grad_norm,nu,refresh_flag\n");
        for r in &self.records {
            let nu = r.nu.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.iter,
                r.loss,
                r.grad_norm,
                nu,
                if r.refreshed { 1 } else { 0 }
            ));
        }
        out
    }

    pub fn timings_csv(&self) -> String {
        let mut out = String::from("iter,wall_ms\n");
        for r in &self.records {
            out.push_str(&format!("{},{:.3}\n", r.iter, r.wall_ms));
        }
        out
    }

    /// The nu series in iteration order (only rows where it was recorded).
    pub fn nu_series(&self) -> Vec<(usize, f64)> {
        self.records
            .iter()
            .filter_map(|r| r.nu.map(|v| (r.iter, v)))
            .collect()
    }
}

/// Owns the model, the frozen noise snapshot, the buffer, and all generator
/// streams for one training run.
pub struct Trainer {
    model: Box<dyn EnergyModel>,
    frozen: Box<dyn EnergyModel>,
    log_partition: f64,
    target: GaussianMixtureEnergy,
    cfg: TrainConfig,
    opt: OptimizerState,
    buffer: ReplayBuffer,
    master: RngHandle,
    rng_data: RngHandle,
    rng_misc: RngHandle,
    rng_buffer: RngHandle,
    log: TrainLog,
    t: usize,
    data_bounds: (Vec<f64>, Vec<f64>),
    /// Called after each checkpoint-interval boundary with (iter, trainer).
    checkpoint_hook: Option<Box<dyn FnMut(usize, &Checkpointable) + Send>>,
}

/// What a checkpoint writer is allowed to see mid-run.
pub struct Checkpointable<'a> {
    pub model: &'a dyn EnergyModel,
    pub log_partition: Option<f64>,
    pub data_bounds: &'a (Vec<f64>, Vec<f64>),
    pub rng: &'a RngHandle,
}

impl Trainer {
    pub fn new(
        mut model: Box<dyn EnergyModel>,
        target: GaussianMixtureEnergy,
        cfg: TrainConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if model.dim() != target.dim() {
            return Err(Error::DimensionMismatch {
                expected: target.dim(),
                got: model.dim(),
            });
        }
        let master = RngHandle::from_seed(cfg.seed);
        let rng_data = master.derive(&[TAG_DATA]);
        let rng_misc = master.derive(&[TAG_MISC]);
        let rng_buffer = master.derive(&[TAG_BUFFER]);

        // The rejuvenation prior is uniform over the bounding box of a
        // seeded probe batch from the target.
        let mut probe_rng = master.derive(&[TAG_INIT_BOUNDS]);
        let probe = target.sample_batch(1024, &mut probe_rng);
        let d = target.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for p in &probe {
            for i in 0..d {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        let buffer = ReplayBuffer::new(
            cfg.buffer_capacity,
            cfg.rejuvenation_rate,
            lo.clone(),
            hi.clone(),
        )?;

        model.refresh_normalization()?;
        let frozen = model.snapshot();
        let n_opt = model.num_params() + usize::from(cfg.objective.has_log_partition());
        let opt = OptimizerState::new(cfg.optimizer, n_opt);
        Ok(Trainer {
            model,
            frozen,
            log_partition: 0.0,
            target,
            cfg,
            opt,
            buffer,
            master,
            rng_data,
            rng_misc,
            rng_buffer,
            log: TrainLog::default(),
            t: 0,
            data_bounds: (lo, hi),
            checkpoint_hook: None,
        })
    }

    pub fn model(&self) -> &dyn EnergyModel {
        self.model.as_ref()
    }

    pub fn frozen(&self) -> &dyn EnergyModel {
        self.frozen.as_ref()
    }

    pub fn log_partition(&self) -> Option<f64> {
        self.cfg
            .objective
            .has_log_partition()
            .then_some(self.log_partition)
    }

    pub fn log(&self) -> &TrainLog {
        self.log_ref()
    }

    fn log_ref(&self) -> &TrainLog {
        &self.log
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn data_bounds(&self) -> &(Vec<f64>, Vec<f64>) {
        &self.data_bounds
    }

    pub fn master_rng(&self) -> &RngHandle {
        &self.master
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn set_checkpoint_hook(&mut self, hook: Box<dyn FnMut(usize, &Checkpointable) + Send>) {
        self.checkpoint_hook = Some(hook);
    }

    /// Negative samples for one step: chain start points from the buffer,
    /// short Langevin runs against `sampler_target`, endpoints returned with
    /// the mean per-chain score magnitude and acceptance.
    fn sample_negatives(
        &mut self,
        sampler_target: &dyn EnergyModel,
    ) -> Result<(Vec<Vec<f64>>, f64, f64)> {
        let n = self.cfg.batch_size;
        let (starts, _origins) = self.buffer.init_points(n, &mut self.rng_buffer);
        let mut finals = Vec::with_capacity(n);
        let mut nu_acc = 0.0;
        let mut acc_acc = 0.0;
        for (i, start) in starts.iter().enumerate() {
            let mut chain_rng = self.master.derive(&[TAG_CHAIN, self.t as u64, i as u64]);
            let (last, _path, diag) =
                langevin_chain(sampler_target, start, &self.cfg.langevin, &mut chain_rng)?;
            nu_acc += diag.nu;
            acc_acc += diag.acceptance_rate;
            finals.push(last);
        }
        Ok((finals, nu_acc / n as f64, acc_acc / n as f64))
    }

    fn evaluate(
        &mut self,
        data: &[Vec<f64>],
        negatives: Option<&[Vec<f64>]>,
    ) -> Result<GradEstimate> {
        let model = self.model.as_ref();
        match &self.cfg.objective {
            ObjectiveSpec::AdaNce => adance(model, self.frozen.as_ref(), data, negatives.unwrap()),
            ObjectiveSpec::AdaBrm { spair } => adabrm(
                model,
                self.frozen.as_ref(),
                spair,
                data,
                negatives.unwrap(),
            ),
            ObjectiveSpec::MleMcmc => mle_grad(model, data, negatives.unwrap()),
            ObjectiveSpec::NceBinary { noise, v } => {
                let noise_batch = noise.sample_batch(self.cfg.batch_size, &mut self.rng_misc);
                nce_binary(model, self.log_partition, noise, data, &noise_batch, *v)
            }
            ObjectiveSpec::NceRank { noise, l } => {
                let mut collections = Vec::with_capacity(data.len());
                for x in data {
                    let mut items: Vec<Vec<f64>> = (0..l - 1)
                        .map(|_| noise.sample(&mut self.rng_misc))
                        .collect();
                    let data_index = self.rng_misc.index(*l);
                    items.insert(data_index, x.clone());
                    collections.push(RankCollection { items, data_index });
                }
                let rho = vec![1.0 / *l as f64; *l];
                nce_rank(model, self.log_partition, noise, &collections, &rho)
            }
            ObjectiveSpec::Brm { noise, spair } => {
                let noise_batch = noise.sample_batch(self.cfg.batch_size, &mut self.rng_misc);
                brm(model, self.log_partition, noise, spair, data, &noise_batch)
            }
            ObjectiveSpec::Cnce { sigma, kappa, v } => {
                cnce(model, data, *sigma, *kappa, *v, &mut self.rng_misc)
            }
            ObjectiveSpec::SmImplicit => sm_implicit(model, data),
            ObjectiveSpec::SmDenoising { sigma } => {
                sm_denoising(model, data, *sigma, &mut self.rng_misc)
            }
            ObjectiveSpec::SmSliced {
                n_projections,
                rademacher,
            } => {
                let dist = if *rademacher {
                    ProjectionDist::Rademacher
                } else {
                    ProjectionDist::Gaussian
                };
                sm_sliced(model, data, *n_projections, dist, &mut self.rng_misc)
            }
        }
    }

    /// Runs one training iteration. On sampler divergence the log keeps the
    /// step index and score norm and the error is returned.
    pub fn step(&mut self) -> Result<()> {
        let started = Instant::now();
        let t = self.t;
        let data = self
            .target
            .sample_batch(self.cfg.batch_size, &mut self.rng_data);

        let mut nu = None;
        let negatives = if self.cfg.objective.uses_model_chains() {
            if self.cfg.shared_batch_test {
                Some(data.clone())
            } else {
                let sampler_target: Box<dyn EnergyModel> = match self.cfg.objective {
                    // Persistent-chain MLE samples the live model; the
                    // self-adapting objectives sample the frozen noise.
                    ObjectiveSpec::MleMcmc => self.model.snapshot(),
                    _ => self.frozen.snapshot(),
                };
                let result = self.sample_negatives(sampler_target.as_ref());
                match result {
                    Ok((finals, mean_nu, _acc)) => {
                        nu = Some(mean_nu);
                        Some(finals)
                    }
                    Err(Error::SamplerDiverged {
                        step,
                        score_norm,
                        nu_history,
                    }) => {
                        self.log.diverged = Some((t + 1, score_norm));
                        return Err(Error::SamplerDiverged {
                            step,
                            score_norm,
                            nu_history,
                        });
                    }
                    Err(e) => return Err(e),
                }
            }
        } else {
            None
        };

        let est = self.evaluate(&data, negatives.as_deref())?;

        // All objectives are losses to minimize except the MLE gradient,
        // which is the ascent direction of the likelihood.
        let negate = matches!(self.cfg.objective, ObjectiveSpec::MleMcmc);
        let mut flat = self.model.params();
        let mut grad = est.grad.clone();
        if negate {
            for g in grad.iter_mut() {
                *g = -*g;
            }
        }
        if let Some(cg) = est.c_grad {
            flat.push(self.log_partition);
            grad.push(if negate { -cg } else { cg });
        }
        let grad_norm = l2_norm(&grad);
        self.opt.step(&mut flat, &grad).map_err(|e| match e {
            Error::NonFinite(_) => Error::NonFinite(format!("gradient at iteration {}", t + 1)),
            other => other,
        })?;
        let n_params = self.model.num_params();
        self.model.set_params(&flat[..n_params])?;
        if est.c_grad.is_some() {
            self.log_partition = flat[n_params];
        }
        self.model.refresh_normalization()?;

        if let Some(finals) = negatives {
            if !self.cfg.shared_batch_test {
                self.buffer.push_batch(finals, &mut self.rng_buffer)?;
            }
        }

        let mut refreshed = false;
        let is_adaptive = matches!(
            self.cfg.objective,
            ObjectiveSpec::AdaNce | ObjectiveSpec::AdaBrm { .. }
        );
        if is_adaptive && (t + 1) % self.cfg.adaptive_interval == 0 {
            self.frozen = self.model.snapshot();
            self.log.refresh_iters.push(t + 1);
            refreshed = true;
            if self.cfg.reset_buffer_on_refresh {
                self.buffer.clear();
            }
        }

        let log_nu = if (t + 1) % self.cfg.nu_log_interval == 0 {
            nu
        } else {
            None
        };
        self.log.records.push(IterRecord {
            iter: t + 1,
            loss: est.loss,
            grad_norm,
            nu: log_nu,
            refreshed,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });

        self.t += 1;
        if self.cfg.checkpoint_interval > 0 && (t + 1) % self.cfg.checkpoint_interval == 0 {
            if let Some(mut hook) = self.checkpoint_hook.take() {
                let view = Checkpointable {
                    model: self.model.as_ref(),
                    log_partition: self.log_partition(),
                    data_bounds: &self.data_bounds,
                    rng: &self.master,
                };
                hook(t + 1, &view);
                self.checkpoint_hook = Some(hook);
            }
        }
        Ok(())
    }

    /// Runs the configured number of iterations; halts on divergence with
    /// the log preserved.
    pub fn run(&mut self) -> Result<()> {
        for _ in self.t..self.cfg.iterations {
            self.step()?;
        }
        Ok(())
    }

    /// Consumes the trainer, returning the trained model, the learnable
    /// log-partition scalar (where applicable), and the log.
    pub fn into_parts(self) -> (Box<dyn EnergyModel>, Option<f64>, TrainLog) {
        let c = self
            .cfg
            .objective
            .has_log_partition()
            .then_some(self.log_partition);
        (self.model, c, self.log)
    }
}
