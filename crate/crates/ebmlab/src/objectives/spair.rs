//! Convex functions for ratio matching, reified as (S0, S1) pairs.
//!
//! A strictly convex `Psi` on the positive half-line induces
//! `S0(g) = -Psi(g) + Psi'(g) g` and `S1(g) = Psi'(g)`, which must satisfy
//! `S0'(g)/S1'(g) = g` and `S1'(g) > 0`. Ratio-matching losses only ever
//! evaluate the pair (and the weights `S0'(g) g`, `S1'(g) g`), so the pair is
//! the primary object here; `Psi` is recovered as `S1(u) u - S0(u)` where
//! needed.
//!
//! Density ratios arrive in log space. The log-type pair evaluates entirely
//! in log space (softplus/sigmoid); other pairs exponentiate with the
//! exponent clamped to +/-300, and callers reject log-ratios above
//! `LOG_RATIO_LIMIT` (ratio 1e300) beforehand.

use crate::error::{Error, Result};
use crate::numerics::{log_sigmoid, sigmoid, softplus};

/// `ln(1e300)`: log-ratios above this are an overflow error.
pub const LOG_RATIO_LIMIT: f64 = 690.77552789821368;

const EXP_CLAMP: f64 = 300.0;

fn clamped_exp(lg: f64) -> f64 {
    lg.clamp(-EXP_CLAMP, EXP_CLAMP).exp()
}

#[derive(Clone)]
enum Kind {
    /// Psi(u) = u ln u - (1+u) ln(1+u); recovers the contrastive posterior.
    LogType,
    /// Psi(u) = u ln u; generalized KL.
    KlType,
    /// Psi(u) = u^2 / 2; squared distance.
    Quadratic,
    /// Arbitrary pair, mainly for negative controls in the verification
    /// harness.
    Custom {
        s0: fn(f64) -> f64,
        s1: fn(f64) -> f64,
        s0_prime: fn(f64) -> f64,
        s1_prime: fn(f64) -> f64,
    },
}

/// A convex function `Psi` as its `(S0, S1)` pair.
#[derive(Clone)]
pub struct SPair {
    name: String,
    psi_description: String,
    kind: Kind,
}

impl std::fmt::Debug for SPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SPair({})", self.name)
    }
}

impl SPair {
    pub fn log_type() -> Self {
        SPair {
            name: "log".into(),
            psi_description: "u ln u - (1+u) ln(1+u)".into(),
            kind: Kind::LogType,
        }
    }

    pub fn kl_type() -> Self {
        SPair {
            name: "kl".into(),
            psi_description: "u ln u".into(),
            kind: Kind::KlType,
        }
    }

    pub fn quadratic() -> Self {
        SPair {
            name: "quadratic".into(),
            psi_description: "u^2 / 2".into(),
            kind: Kind::Quadratic,
        }
    }

    pub fn custom(
        name: &str,
        s0: fn(f64) -> f64,
        s1: fn(f64) -> f64,
        s0_prime: fn(f64) -> f64,
        s1_prime: fn(f64) -> f64,
    ) -> Self {
        SPair {
            name: name.into(),
            psi_description: "custom".into(),
            kind: Kind::Custom {
                s0,
                s1,
                s0_prime,
                s1_prime,
            },
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "log" => Ok(SPair::log_type()),
            "kl" => Ok(SPair::kl_type()),
            "quadratic" => Ok(SPair::quadratic()),
            other => Err(Error::InvalidConfig(format!("unknown spair '{other}'"))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn psi_description(&self) -> &str {
        &self.psi_description
    }

    fn needs_positive(&self) -> bool {
        matches!(self.kind, Kind::LogType | Kind::KlType | Kind::Custom { .. })
    }

    /// True when every `*_of_log` form is computed without exponentiating
    /// the ratio, so arbitrarily large log-ratios stay finite.
    pub fn evaluates_in_log_space(&self) -> bool {
        matches!(self.kind, Kind::LogType)
    }

    fn check_domain(&self, g: f64) -> Result<()> {
        if !g.is_finite() {
            return Err(Error::NonFinite("ratio argument".into()));
        }
        if self.needs_positive() && g <= 0.0 {
            return Err(Error::DomainViolation(format!(
                "spair '{}' needs a positive argument, got {g}",
                self.name
            )));
        }
        Ok(())
    }

    pub fn s0(&self, g: f64) -> Result<f64> {
        self.check_domain(g)?;
        Ok(match &self.kind {
            Kind::LogType => (1.0 + g).ln(),
            Kind::KlType => g,
            Kind::Quadratic => 0.5 * g * g,
            Kind::Custom { s0, .. } => s0(g),
        })
    }

    pub fn s1(&self, g: f64) -> Result<f64> {
        self.check_domain(g)?;
        Ok(match &self.kind {
            Kind::LogType => g.ln() - (1.0 + g).ln(),
            Kind::KlType => g.ln() + 1.0,
            Kind::Quadratic => g,
            Kind::Custom { s1, .. } => s1(g),
        })
    }

    pub fn s0_prime(&self, g: f64) -> Result<f64> {
        self.check_domain(g)?;
        Ok(match &self.kind {
            Kind::LogType => 1.0 / (1.0 + g),
            Kind::KlType => 1.0,
            Kind::Quadratic => g,
            Kind::Custom { s0_prime, .. } => s0_prime(g),
        })
    }

    pub fn s1_prime(&self, g: f64) -> Result<f64> {
        self.check_domain(g)?;
        Ok(match &self.kind {
            Kind::LogType => 1.0 / (g * (1.0 + g)),
            Kind::KlType => 1.0 / g,
            Kind::Quadratic => 1.0,
            Kind::Custom { s1_prime, .. } => s1_prime(g),
        })
    }

    /// `S0(exp(lg))`, evaluated in log space where the pair allows it.
    pub fn s0_of_log(&self, lg: f64) -> f64 {
        match &self.kind {
            Kind::LogType => softplus(lg),
            Kind::KlType => clamped_exp(lg),
            Kind::Quadratic => 0.5 * clamped_exp(lg).powi(2),
            Kind::Custom { s0, .. } => s0(clamped_exp(lg)),
        }
    }

    /// `S1(exp(lg))`.
    pub fn s1_of_log(&self, lg: f64) -> f64 {
        match &self.kind {
            Kind::LogType => log_sigmoid(lg),
            Kind::KlType => lg + 1.0,
            Kind::Quadratic => clamped_exp(lg),
            Kind::Custom { s1, .. } => s1(clamped_exp(lg)),
        }
    }

    /// Gradient weight on noise samples: `S0'(g) g` at `g = exp(lg)`.
    pub fn weight0_of_log(&self, lg: f64) -> f64 {
        match &self.kind {
            Kind::LogType => sigmoid(lg),
            Kind::KlType => clamped_exp(lg),
            Kind::Quadratic => clamped_exp(lg).powi(2),
            Kind::Custom { s0_prime, .. } => {
                let g = clamped_exp(lg);
                s0_prime(g) * g
            }
        }
    }

    /// Gradient weight on data samples: `S1'(g) g` at `g = exp(lg)`.
    pub fn weight1_of_log(&self, lg: f64) -> f64 {
        match &self.kind {
            Kind::LogType => sigmoid(-lg),
            Kind::KlType => 1.0,
            Kind::Quadratic => clamped_exp(lg),
            Kind::Custom { s1_prime, .. } => {
                let g = clamped_exp(lg);
                s1_prime(g) * g
            }
        }
    }

    /// Checks the defining property `S0'(g)/S1'(g) = g`, `S1'(g) > 0` on the
    /// grid g in {0.1, 0.2, ..., 10} within 1e-8, cross-checking the
    /// analytic derivatives against central finite differences of `S0`, `S1`.
    pub fn validate(&self) -> Result<()> {
        let mut g = 0.1;
        while g <= 10.0 + 1e-12 {
            let s0p = self.s0_prime(g)?;
            let s1p = self.s1_prime(g)?;
            if !(s1p > 0.0) {
                return Err(Error::VerificationFailed(format!(
                    "spair '{}': S1'({g}) = {s1p} is not positive",
                    self.name
                )));
            }
            let ratio = s0p / s1p;
            if (ratio - g).abs() > 1e-8 {
                return Err(Error::VerificationFailed(format!(
                    "spair '{}': S0'/S1' = {ratio} at g = {g}, residual {}",
                    self.name,
                    (ratio - g).abs()
                )));
            }
            let h = 1e-6 * g.max(1.0);
            let fd0 = (self.s0(g + h)? - self.s0(g - h)?) / (2.0 * h);
            let fd1 = (self.s1(g + h)? - self.s1(g - h)?) / (2.0 * h);
            if (fd0 - s0p).abs() > 1e-5 * (1.0 + s0p.abs())
                || (fd1 - s1p).abs() > 1e-5 * (1.0 + s1p.abs())
            {
                return Err(Error::VerificationFailed(format!(
                    "spair '{}': analytic derivative disagrees with finite differences at g = {g}",
                    self.name
                )));
            }
            g += 0.1;
        }
        Ok(())
    }
}

/// The built-in pairs, each validated against the defining property.
pub fn spair_catalog() -> Result<Vec<SPair>> {
    let entries = vec![SPair::log_type(), SPair::kl_type(), SPair::quadratic()];
    for e in &entries {
        e.validate()?;
    }
    Ok(entries)
}

/// Bregman divergence between scalars: `Psi(x) - Psi(y) - Psi'(y)(x - y)`
/// with `Psi(u) = S1(u) u - S0(u)` and `Psi' = S1`.
pub fn bregman_point(spair: &SPair, x: f64, y: f64) -> Result<f64> {
    let psi = |u: f64| -> Result<f64> { Ok(spair.s1(u)? * u - spair.s0(u)?) };
    Ok(psi(x)? - psi(y)? - spair.s1(y)? * (x - y))
}

/// Coordinate-wise Bregman divergence of two vectors under a separable `Psi`.
pub fn bregman_point_vec(spair: &SPair, xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    let mut acc = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        acc += bregman_point(spair, x, y)?;
    }
    Ok(acc)
}
