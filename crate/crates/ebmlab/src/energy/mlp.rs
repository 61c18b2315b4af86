//! Fully-connected energy network with optional spectral normalization.
//!
//! Layers are affine maps followed by leaky-ReLU; the final layer is affine
//! with scalar output. When spectral normalization is on, each layer applies
//! the effective weight `W / sigma_max(W)` where `sigma_max` is estimated by
//! warm-started power iteration. The estimates are cached scale factors,
//! refreshed explicitly via `spectral_normalize_forward` after each parameter
//! update; gradients treat the scale as a constant, so parameter gradients
//! flow through the `W / sigma` path only.

use super::{check_dim, EnergyModel, ModelDescriptor};
use crate::error::{Error, Result};
use crate::numerics::{axpy, power_iteration_warm, Matrix, RngHandle};

#[derive(Debug, Clone)]
pub struct MlpEnergy {
    widths: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
    leaky_slope: f64,
    spectral_norm: bool,
    power_iters: usize,
    warm_u: Vec<Vec<f64>>,
    inv_sigma: Vec<f64>,
}

struct ForwardCache {
    /// Layer inputs: `inputs[0]` is x, `inputs[l]` the activation entering
    /// layer l.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations per layer.
    pre: Vec<Vec<f64>>,
}

impl MlpEnergy {
    /// Builds an MLP energy with Kaiming-style initialization.
    ///
    /// `widths` runs `[input_dim, hidden..., 1]`. Spectral-norm scale factors
    /// start at 1; call [`MlpEnergy::spectral_normalize_forward`] (or
    /// `refresh_normalization`) before the first use when the flag is on.
    pub fn new(
        widths: &[usize],
        leaky_slope: f64,
        spectral_norm: bool,
        power_iters: usize,
        rng: &mut RngHandle,
    ) -> Result<Self> {
        if widths.len() < 2 || *widths.last().unwrap() != 1 {
            return Err(Error::InvalidConfig(
                "mlp widths must be [input, hidden..., 1]".into(),
            ));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidConfig("mlp widths must be positive".into()));
        }
        if !(leaky_slope > 0.0 && leaky_slope < 1.0) {
            return Err(Error::InvalidConfig(
                "leaky slope must lie in (0, 1)".into(),
            ));
        }
        if power_iters == 0 {
            return Err(Error::InvalidConfig("power_iters must be >= 1".into()));
        }
        let gain = (2.0 / (1.0 + leaky_slope * leaky_slope)).sqrt();
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut warm_u = Vec::new();
        for l in 0..widths.len() - 1 {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let std = gain / (fan_in as f64).sqrt();
            let data = (0..fan_out * fan_in).map(|_| std * rng.normal()).collect();
            weights.push(Matrix::new(fan_out, fan_in, data));
            biases.push(vec![0.0; fan_out]);
            let mut u = rng.normal_vec(fan_out);
            let n = crate::numerics::l2_norm(&u).max(1e-12);
            u.iter_mut().for_each(|v| *v /= n);
            warm_u.push(u);
        }
        let n_layers = weights.len();
        Ok(MlpEnergy {
            widths: widths.to_vec(),
            weights,
            biases,
            leaky_slope,
            spectral_norm,
            power_iters,
            warm_u,
            inv_sigma: vec![1.0; n_layers],
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn leaky_slope(&self) -> f64 {
        self.leaky_slope
    }

    pub fn spectral_norm_enabled(&self) -> bool {
        self.spectral_norm
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn raw_weight(&self, layer: usize) -> &Matrix {
        &self.weights[layer]
    }

    /// The weight actually used in the forward pass: `W * inv_sigma`.
    pub fn effective_weight(&self, layer: usize) -> Matrix {
        self.weights[layer].scale(self.inv_sigma[layer])
    }

    /// Re-estimates each layer's largest singular value with `power_iters`
    /// warm-started power-iteration cycles and caches `1/sigma`; returns the
    /// effective weights used by subsequent passes.
    pub fn spectral_normalize_forward(&mut self) -> Result<Vec<Matrix>> {
        if !self.spectral_norm {
            return Err(Error::InvalidConfig(
                "spectral normalization is not enabled for this model".into(),
            ));
        }
        for l in 0..self.weights.len() {
            let (sigma, _v) =
                power_iteration_warm(&self.weights[l], self.power_iters, &mut self.warm_u[l])?;
            self.inv_sigma[l] = 1.0 / sigma;
        }
        Ok((0..self.weights.len())
            .map(|l| self.effective_weight(l))
            .collect())
    }

    fn leaky(&self, z: f64) -> f64 {
        if z > 0.0 {
            z
        } else {
            self.leaky_slope * z
        }
    }

    fn leaky_deriv(&self, z: f64) -> f64 {
        if z > 0.0 {
            1.0
        } else {
            self.leaky_slope
        }
    }

    fn forward(&self, x: &[f64]) -> (f64, ForwardCache) {
        let n_layers = self.weights.len();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers);
        let mut h = x.to_vec();
        for l in 0..n_layers {
            let mut z = self.weights[l].matvec(&h);
            let s = self.inv_sigma[l];
            for (zi, bi) in z.iter_mut().zip(&self.biases[l]) {
                *zi = s * *zi + bi;
            }
            inputs.push(h);
            let is_last = l + 1 == n_layers;
            h = if is_last {
                z.clone()
            } else {
                z.iter().map(|&v| self.leaky(v)).collect()
            };
            pre.push(z);
        }
        (h[0], ForwardCache { inputs, pre })
    }

    /// Per-layer delta vectors dE/dz_l from the scalar output backwards.
    fn backward_deltas(&self, cache: &ForwardCache) -> Vec<Vec<f64>> {
        let n_layers = self.weights.len();
        let mut deltas = vec![Vec::new(); n_layers];
        deltas[n_layers - 1] = vec![1.0];
        for l in (0..n_layers - 1).rev() {
            let upstream = &deltas[l + 1];
            let dh = self.weights[l + 1]
                .tr_matvec(upstream)
                .iter()
                .map(|v| v * self.inv_sigma[l + 1])
                .collect::<Vec<_>>();
            deltas[l] = dh
                .iter()
                .zip(&cache.pre[l])
                .map(|(g, &z)| g * self.leaky_deriv(z))
                .collect();
        }
        deltas
    }
}

impl EnergyModel for MlpEnergy {
    fn dim(&self) -> usize {
        self.widths[0]
    }

    fn energy(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x)?;
        Ok(self.forward(x).0)
    }

    fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x)?;
        let (_e, cache) = self.forward(x);
        let deltas = self.backward_deltas(&cache);
        let dx = self.weights[0]
            .tr_matvec(&deltas[0])
            .iter()
            .map(|v| -v * self.inv_sigma[0])
            .collect();
        Ok(dx)
    }

    fn num_params(&self) -> usize {
        self.weights
            .iter()
            .map(|w| w.rows() * w.cols() + w.rows())
            .sum()
    }

    fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            p.extend_from_slice(w.data());
            p.extend_from_slice(b);
        }
        p
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                got: params.len(),
            });
        }
        let mut off = 0;
        for l in 0..self.weights.len() {
            let (r, c) = (self.weights[l].rows(), self.weights[l].cols());
            self.weights[l] = Matrix::new(r, c, params[off..off + r * c].to_vec());
            off += r * c;
            self.biases[l].copy_from_slice(&params[off..off + r]);
            off += r;
        }
        Ok(())
    }

    fn param_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x)?;
        let (_e, cache) = self.forward(x);
        let deltas = self.backward_deltas(&cache);
        let mut g = Vec::with_capacity(self.num_params());
        for l in 0..self.weights.len() {
            let s = self.inv_sigma[l];
            let input = &cache.inputs[l];
            for &d in &deltas[l] {
                let mut row = vec![0.0; input.len()];
                axpy(d * s, input, &mut row);
                g.extend_from_slice(&row);
            }
            g.extend_from_slice(&deltas[l]);
        }
        Ok(g)
    }

    fn snapshot(&self) -> Box<dyn EnergyModel> {
        Box::new(self.clone())
    }

    fn descriptor(&self) -> ModelDescriptor {
        ModelDescriptor::Mlp {
            widths: self.widths.clone(),
            leaky_slope: self.leaky_slope,
            spectral_norm: self.spectral_norm,
            power_iters: self.power_iters,
        }
    }

    fn aux_state(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        (self.warm_u.clone(), self.inv_sigma.clone())
    }

    fn restore_aux(&mut self, warm_u: Vec<Vec<f64>>, inv_sigma: Vec<f64>) -> Result<()> {
        if warm_u.len() != self.weights.len() || inv_sigma.len() != self.weights.len() {
            return Err(Error::CheckpointFormat(
                "auxiliary state layer count mismatch".into(),
            ));
        }
        for (u, w) in warm_u.iter().zip(&self.weights) {
            if u.len() != w.rows() {
                return Err(Error::CheckpointFormat(
                    "warm-start vector length mismatch".into(),
                ));
            }
        }
        self.warm_u = warm_u;
        self.inv_sigma = inv_sigma;
        Ok(())
    }

    fn refresh_normalization(&mut self) -> Result<()> {
        if self.spectral_norm {
            self.spectral_normalize_forward()?;
        }
        Ok(())
    }
}

/// Zero-parameter MLP used in tests: constant energy through the bias path.
#[cfg(test)]
pub(crate) fn zeroed_mlp(widths: &[usize], rng: &mut RngHandle) -> MlpEnergy {
    let mut m = MlpEnergy::new(widths, 0.2, false, 1, rng).unwrap();
    let zeros = vec![0.0; m.num_params()];
    m.set_params(&zeros).unwrap();
    m
}
