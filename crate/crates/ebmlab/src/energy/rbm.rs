//! Binary restricted Boltzmann machine with states in {-1, +1}.
//!
//! Small enough instances (V + H <= 20) are exactly enumerable, which makes
//! the RBM the ground-truth testbed for the block Gibbs sampler.

use crate::error::{Error, Result};
use crate::numerics::{dot, sigmoid, Matrix, RngHandle};

/// `E(v, h) = -(v^T W h + a^T v + b^T h)` over spin states.
#[derive(Debug, Clone)]
pub struct Rbm {
    w: Matrix,
    a: Vec<f64>,
    b: Vec<f64>,
}

fn check_spins(s: &[f64], expected: usize) -> Result<()> {
    if s.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: s.len(),
        });
    }
    if s.iter().any(|&x| x != 1.0 && x != -1.0) {
        return Err(Error::DomainViolation(
            "RBM states must be +1 or -1".into(),
        ));
    }
    Ok(())
}

/// Spin vector for enumeration index `idx`: unit `i` is +1 iff bit `i` set.
pub fn spins_from_index(idx: usize, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| if (idx >> i) & 1 == 1 { 1.0 } else { -1.0 })
        .collect()
}

impl Rbm {
    pub fn new(w: Matrix, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if w.rows() != a.len() || w.cols() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                got: w.rows(),
            });
        }
        Ok(Rbm { w, a, b })
    }

    /// Random weights/biases of the given scale; handy for seeded testbeds.
    pub fn seeded(n_visible: usize, n_hidden: usize, scale: f64, rng: &mut RngHandle) -> Self {
        let data = (0..n_visible * n_hidden)
            .map(|_| scale * rng.normal())
            .collect();
        Rbm {
            w: Matrix::new(n_visible, n_hidden, data),
            a: (0..n_visible).map(|_| scale * rng.normal()).collect(),
            b: (0..n_hidden).map(|_| scale * rng.normal()).collect(),
        }
    }

    pub fn n_visible(&self) -> usize {
        self.a.len()
    }

    pub fn n_hidden(&self) -> usize {
        self.b.len()
    }

    pub fn energy(&self, v: &[f64], h: &[f64]) -> Result<f64> {
        check_spins(v, self.n_visible())?;
        check_spins(h, self.n_hidden())?;
        Ok(-(dot(v, &self.w.matvec(h)) + dot(&self.a, v) + dot(&self.b, h)))
    }

    /// Triple-sum reference form of the energy, kept alongside the matrix
    /// form as a cross-check.
    pub fn energy_naive(&self, v: &[f64], h: &[f64]) -> Result<f64> {
        check_spins(v, self.n_visible())?;
        check_spins(h, self.n_hidden())?;
        let mut acc = 0.0;
        for i in 0..self.n_visible() {
            for j in 0..self.n_hidden() {
                acc += self.w.get(i, j) * v[i] * h[j];
            }
        }
        for (ai, vi) in self.a.iter().zip(v) {
            acc += ai * vi;
        }
        for (bj, hj) in self.b.iter().zip(h) {
            acc += bj * hj;
        }
        Ok(-acc)
    }

    /// `p(v_i = +1 | h) = sigmoid(2 (W h)_i + 2 a_i)` per visible unit.
    pub fn prob_v_given_h(&self, h: &[f64]) -> Result<Vec<f64>> {
        check_spins(h, self.n_hidden())?;
        let wh = self.w.matvec(h);
        Ok(wh
            .iter()
            .zip(&self.a)
            .map(|(x, a)| sigmoid(2.0 * x + 2.0 * a))
            .collect())
    }

    /// `p(h_j = +1 | v) = sigmoid(2 (W^T v)_j + 2 b_j)` per hidden unit.
    pub fn prob_h_given_v(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_spins(v, self.n_visible())?;
        let wv = self.w.tr_matvec(v);
        Ok(wv
            .iter()
            .zip(&self.b)
            .map(|(x, b)| sigmoid(2.0 * x + 2.0 * b))
            .collect())
    }

    /// Activation probabilities of the absent layer given exactly one of
    /// `v`, `h`.
    pub fn conditionals(&self, v: Option<&[f64]>, h: Option<&[f64]>) -> Result<Vec<f64>> {
        match (v, h) {
            (Some(v), None) => self.prob_h_given_v(v),
            (None, Some(h)) => self.prob_v_given_h(h),
            _ => Err(Error::InvalidConfig(
                "exactly one of v, h must be supplied".into(),
            )),
        }
    }

    fn check_enumerable(&self) -> Result<()> {
        let units = self.n_visible() + self.n_hidden();
        if units > 20 {
            return Err(Error::EnumerationTooLarge { units });
        }
        Ok(())
    }

    /// Joint probability table `p(v, h)` by brute-force enumeration, indexed
    /// `[visible_index][hidden_index]` with the `spins_from_index` encoding.
    pub fn exact_joint(&self) -> Result<Vec<Vec<f64>>> {
        self.check_enumerable()?;
        let (nv, nh) = (self.n_visible(), self.n_hidden());
        let mut table = vec![vec![0.0; 1 << nh]; 1 << nv];
        let mut z = 0.0;
        for (vi, row) in table.iter_mut().enumerate() {
            let v = spins_from_index(vi, nv);
            for (hi, cell) in row.iter_mut().enumerate() {
                let h = spins_from_index(hi, nh);
                let w = (-self.energy(&v, &h)?).exp();
                *cell = w;
                z += w;
            }
        }
        for row in table.iter_mut() {
            for cell in row.iter_mut() {
                *cell /= z;
            }
        }
        Ok(table)
    }

    /// Exact visible marginal `p(v) = sum_h p(v, h)` over all 2^V states.
    pub fn exact_visible_marginal(&self) -> Result<Vec<f64>> {
        let joint = self.exact_joint()?;
        Ok(joint.iter().map(|row| row.iter().sum()).collect())
    }
}
