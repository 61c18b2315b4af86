//! A desk-scale laboratory for training energy-based models.
//!
//! The crate implements the full pipeline for EBM training on low-dimensional
//! synthetic targets:
//!
//! * [`numerics`] — dense vector/matrix helpers, seeded randomness, power
//!   iteration, Jacobi eigendecomposition, PSD square roots, Gaussian moment
//!   fitting.
//! * [`energy`] — the [`energy::EnergyModel`] contract plus concrete models:
//!   analytic Gaussians, Gaussian mixtures, a spectrally-normalizable MLP
//!   energy, and a binary restricted Boltzmann machine.
//! * [`samplers`] — Metropolis-Hastings, Langevin (optionally
//!   Metropolis-adjusted), Hamiltonian Monte Carlo, block Gibbs for RBMs, and
//!   a persistent replay buffer with noise rejuvenation.
//! * [`objectives`] — MLE-with-MCMC gradients, binary/rank/conditional NCE,
//!   self-adapting NCE, Bregman ratio matching and its self-adapting variant,
//!   and the score-matching family (implicit, denoising, sliced).
//! * [`trainer`] — the training loop with adaptive noise refresh, Adam/SGD,
//!   and CSV diagnostics logging.
//! * [`eval`] — Fréchet-Gaussian distance, oracle log-likelihood, and
//!   grid-quadrature KL for d ≤ 3.
//! * [`verify`] — seeded numeric checks of the estimator identities the
//!   design relies on (AdaNCE vs MLE, AdaBRM vs AdaNCE, detailed balance, ...).
//!
//! The `ebmlab` binary wraps `train` / `sample` / `eval` / `verify`
//! subcommands around the same library calls; see the crate examples for
//! direct API usage.

pub mod config;
pub mod energy;
pub mod error;
pub mod eval;
pub mod numerics;
pub mod objectives;
pub mod run;
pub mod samplers;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
