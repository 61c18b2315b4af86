//! Persistent sample store with noise rejuvenation.

use crate::error::{Error, Result};
use crate::numerics::RngHandle;

/// Where a chain start point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointOrigin {
    Prior,
    Buffer,
}

/// Stores past chain endpoints; new chains start from a stored point, or —
/// with probability equal to the rejuvenation rate — from a fresh draw of a
/// uniform prior over the data bounding box.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    stored: Vec<Vec<f64>>,
    rejuvenation_rate: f64,
    prior_lo: Vec<f64>,
    prior_hi: Vec<f64>,
}

impl ReplayBuffer {
    pub fn new(
        capacity: usize,
        rejuvenation_rate: f64,
        prior_lo: Vec<f64>,
        prior_hi: Vec<f64>,
    ) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig("buffer capacity must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&rejuvenation_rate) {
            return Err(Error::InvalidConfig(
                "rejuvenation rate must lie in [0, 1]".into(),
            ));
        }
        if prior_lo.len() != prior_hi.len()
            || prior_lo.iter().zip(&prior_hi).any(|(l, h)| !(l < h))
        {
            return Err(Error::InvalidConfig(
                "prior box needs lo < hi per coordinate".into(),
            ));
        }
        Ok(ReplayBuffer {
            capacity,
            stored: Vec::new(),
            rejuvenation_rate,
            prior_lo,
            prior_hi,
        })
    }

    pub fn len(&self) -> usize {
        self.stored.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stored.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.prior_lo.len()
    }

    pub fn rejuvenation_rate(&self) -> f64 {
        self.rejuvenation_rate
    }

    pub fn prior_box(&self) -> (&[f64], &[f64]) {
        (&self.prior_lo, &self.prior_hi)
    }

    pub fn clear(&mut self) {
        self.stored.clear();
    }

    fn sample_prior(&self, rng: &mut RngHandle) -> Vec<f64> {
        self.prior_lo
            .iter()
            .zip(&self.prior_hi)
            .map(|(&l, &h)| rng.uniform_in(l, h))
            .collect()
    }

    /// Eviction is uniform-random when full, avoiding recency bias.
    pub fn push(&mut self, point: Vec<f64>, rng: &mut RngHandle) -> Result<()> {
        if point.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: point.len(),
            });
        }
        if self.stored.len() < self.capacity {
            self.stored.push(point);
        } else {
            let victim = rng.index(self.capacity);
            self.stored[victim] = point;
        }
        Ok(())
    }

    pub fn push_batch(&mut self, points: Vec<Vec<f64>>, rng: &mut RngHandle) -> Result<()> {
        for p in points {
            self.push(p, rng)?;
        }
        Ok(())
    }

    /// Draws `n` chain start points: each from the prior with probability
    /// equal to the rejuvenation rate, otherwise uniformly from the buffer.
    /// An empty buffer falls back to the prior with a logged warning.
    pub fn init_points(
        &self,
        n: usize,
        rng: &mut RngHandle,
    ) -> (Vec<Vec<f64>>, Vec<PointOrigin>) {
        let mut points = Vec::with_capacity(n);
        let mut origins = Vec::with_capacity(n);
        if self.stored.is_empty() && self.rejuvenation_rate < 1.0 {
            log::warn!("replay buffer empty; falling back to the prior for all start points");
        }
        for _ in 0..n {
            if self.stored.is_empty() || rng.uniform() < self.rejuvenation_rate {
                points.push(self.sample_prior(rng));
                origins.push(PointOrigin::Prior);
            } else {
                let idx = rng.index(self.stored.len());
                points.push(self.stored[idx].clone());
                origins.push(PointOrigin::Buffer);
            }
        }
        (points, origins)
    }
}
