//! Quantitative evaluation: Fréchet-Gaussian distance, oracle log-likelihood
//! for analytic targets, and grid-quadrature KL for low-dimensional models.

use std::io::Write;
use std::path::Path;

use crate::energy::{EnergyModel, GaussianMixtureEnergy};
use crate::error::{Error, Result};
use crate::numerics::{logsumexp, psd_sqrt, GaussianSummary};

/// Squared 2-Wasserstein distance between the Gaussians fitted to two sample
/// sets: `|mu_a - mu_b|^2 + tr(Sa + Sb - 2 (Sa Sb)^(1/2))`.
///
/// The cross term is computed as `(Sa^(1/2) Sb Sa^(1/2))^(1/2)`, whose trace
/// equals that of `(Sa Sb)^(1/2)` while staying symmetric PSD. Applied to raw
/// sample coordinates; no feature network is involved.
pub fn frechet_gaussian(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let mut mean_term = 0.0;
    for (x, y) in a.mean.iter().zip(&b.mean) {
        mean_term += (x - y) * (x - y);
    }
    let sa = psd_sqrt(&a.cov)?;
    let inner = sa.matmul(&b.cov).matmul(&sa).symmetrized();
    let cross = psd_sqrt(&inner)?;
    let value = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * cross.trace();
    // Rounding can leave a tiny negative residue on identical inputs.
    Ok(value.max(0.0))
}

/// Mean exact log-density of `samples` under an analytic target.
pub fn oracle_log_likelihood(
    target: &GaussianMixtureEnergy,
    samples: &[Vec<f64>],
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let mut acc = 0.0;
    for s in samples {
        if s.len() != target.dim() {
            return Err(Error::DimensionMismatch {
                expected: target.dim(),
                got: s.len(),
            });
        }
        acc += target.log_pdf(s);
    }
    Ok(acc / samples.len() as f64)
}

/// Rectangular quadrature grid, at most three dimensions.
#[derive(Debug, Clone)]
pub struct GridSpec {
    dims: Vec<(f64, f64, usize)>,
}

impl GridSpec {
    pub fn new(dims: Vec<(f64, f64, usize)>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 3 {
            return Err(Error::InvalidConfig(
                "grid supports 1 to 3 dimensions".into(),
            ));
        }
        for &(lo, hi, n) in &dims {
            if !(lo < hi) {
                return Err(Error::InvalidConfig("grid needs lo < hi".into()));
            }
            if n < 16 {
                return Err(Error::InvalidConfig(
                    "grid needs at least 16 points per dimension".into(),
                ));
            }
        }
        Ok(GridSpec { dims })
    }

    /// Uniform box grid: same bounds and resolution in every dimension.
    pub fn cube(d: usize, lo: f64, hi: f64, n_points: usize) -> Result<Self> {
        GridSpec::new(vec![(lo, hi, n_points); d])
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    /// Grid nodes with trapezoid weights.
    fn nodes(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let axes: Vec<Vec<f64>> = self
            .dims
            .iter()
            .map(|&(lo, hi, n)| {
                let h = (hi - lo) / (n - 1) as f64;
                (0..n).map(|i| lo + i as f64 * h).collect()
            })
            .collect();
        let steps: Vec<f64> = self
            .dims
            .iter()
            .map(|&(lo, hi, n)| (hi - lo) / (n - 1) as f64)
            .collect();
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut idx = vec![0usize; self.dims.len()];
        loop {
            let mut p = Vec::with_capacity(idx.len());
            let mut w = 1.0;
            for (k, &i) in idx.iter().enumerate() {
                p.push(axes[k][i]);
                let edge = i == 0 || i == self.dims[k].2 - 1;
                w *= steps[k] * if edge { 0.5 } else { 1.0 };
            }
            points.push(p);
            weights.push(w);
            // Mixed-radix increment.
            let mut k = 0;
            loop {
                idx[k] += 1;
                if idx[k] < self.dims[k].2 {
                    break;
                }
                idx[k] = 0;
                k += 1;
                if k == idx.len() {
                    return (points, weights);
                }
            }
        }
    }
}

/// KL(target || model) in nats by trapezoid quadrature on the grid, with the
/// model normalized numerically (log-sum-exp over `-E`) before comparison.
///
/// Both densities are treated as discrete distributions over the grid cells,
/// so an exact energy match gives exactly zero and the result is
/// non-negative up to rounding. Errors if the grid covers less than 99.9% of
/// the target's mass.
pub fn grid_kl(
    model: &dyn EnergyModel,
    target: &GaussianMixtureEnergy,
    grid: &GridSpec,
) -> Result<f64> {
    if grid.dim() != target.dim() || grid.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            got: grid.dim(),
        });
    }
    let (points, weights) = grid.nodes();
    let mut log_t = Vec::with_capacity(points.len());
    let mut energies = Vec::with_capacity(points.len());
    for p in &points {
        log_t.push(target.log_pdf(p));
        energies.push(model.energy(p)?);
    }
    let log_wt: Vec<f64> = log_t
        .iter()
        .zip(&weights)
        .map(|(lt, w)| lt + w.ln())
        .collect();
    let log_zt = logsumexp(&log_wt);
    let coverage = log_zt.exp();
    if coverage < 0.999 {
        return Err(Error::InsufficientCoverage {
            coverage,
            required: 0.999,
        });
    }
    let log_wm: Vec<f64> = energies
        .iter()
        .zip(&weights)
        .map(|(e, w)| -e + w.ln())
        .collect();
    let log_zm = logsumexp(&log_wm);

    let mut kl = 0.0;
    for i in 0..points.len() {
        let p_i = (log_wt[i] - log_zt).exp();
        if p_i > 0.0 {
            kl += p_i * ((log_t[i] - log_zt) - (-energies[i] - log_zm));
        }
    }
    Ok(kl)
}

/// One row of the evaluation CSV.
#[derive(Debug, Clone)]
pub struct MetricRow {
    pub run_id: String,
    pub metric: String,
    pub value: f64,
    pub config_hash: String,
}

/// Appends metric rows, writing the header when the file is new.
pub fn append_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let new_file = !path.exists();
    let mut out = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    if new_file {
        writeln!(out, "run_id,metric,value,config_hash")?;
    }
    for r in rows {
        writeln!(out, "{},{},{},{}", r.run_id, r.metric, r.value, r.config_hash)?;
    }
    Ok(())
}

/// FNV-1a over bytes; used to fingerprint resolved configurations.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x1000_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::MixtureComponent;
    use crate::numerics::{gaussian_fit, Matrix, RngHandle};

    fn summary(mean: Vec<f64>, cov: Matrix) -> GaussianSummary {
        GaussianSummary::new(mean, cov).unwrap()
    }

    #[test]
    fn frechet_zero_on_identical_summaries() {
        let mut rng = RngHandle::from_seed(1101);
        let samples: Vec<Vec<f64>> = (0..500).map(|_| rng.normal_vec(2)).collect();
        let a = gaussian_fit(&samples).unwrap();
        let b = gaussian_fit(&samples).unwrap();
        let d = frechet_gaussian(&a, &b).unwrap();
        assert!(d.abs() < 1e-10, "distance {d}");
    }

    #[test]
    fn frechet_mean_gap_only() {
        let a = summary(vec![0.0, 0.0], Matrix::identity(2));
        let b = summary(vec![3.0, 4.0], Matrix::identity(2));
        let d = frechet_gaussian(&a, &b).unwrap();
        assert!((d - 25.0).abs() < 1e-8);
    }

    #[test]
    fn frechet_commuting_diagonal_covariances() {
        let a = summary(vec![0.0, 0.0], Matrix::identity(2));
        let b = summary(vec![0.0, 0.0], Matrix::identity(2).scale(4.0));
        let d = frechet_gaussian(&a, &b).unwrap();
        // tr(I + 4I - 2*2I) = 2.
        assert!((d - 2.0).abs() < 1e-8, "distance {d}");
    }

    #[test]
    fn frechet_is_symmetric_and_translation_invariant() {
        let mut rng = RngHandle::from_seed(1102);
        for _ in 0..5 {
            let s1: Vec<Vec<f64>> = (0..200).map(|_| rng.normal_vec(2)).collect();
            let s2: Vec<Vec<f64>> = (0..200)
                .map(|_| rng.normal_vec(2).iter().map(|x| 2.0 * x + 0.5).collect())
                .collect();
            let a = gaussian_fit(&s1).unwrap();
            let b = gaussian_fit(&s2).unwrap();
            let ab = frechet_gaussian(&a, &b).unwrap();
            let ba = frechet_gaussian(&b, &a).unwrap();
            assert!((ab - ba).abs() < 1e-8);

            let shift = [10.0, -3.0];
            let shifted = |s: &GaussianSummary| {
                summary(
                    s.mean.iter().zip(&shift).map(|(m, c)| m + c).collect(),
                    s.cov.clone(),
                )
            };
            let shifted_d = frechet_gaussian(&shifted(&a), &shifted(&b)).unwrap();
            assert!((ab - shifted_d).abs() < 1e-8);
        }
    }

    #[test]
    fn frechet_rejects_dimension_mismatch() {
        let a = summary(vec![0.0], Matrix::identity(1));
        let b = summary(vec![0.0, 0.0], Matrix::identity(2));
        assert!(frechet_gaussian(&a, &b).is_err());
    }

    #[test]
    fn log_likelihood_point_examples() {
        let std1 = GaussianMixtureEnergy::isotropic_gaussian(vec![0.0], 1.0);
        let ll = oracle_log_likelihood(&std1, &[vec![0.0]]).unwrap();
        assert!((ll + 0.9189385332046727).abs() < 1e-12);

        let mix = GaussianMixtureEnergy::new(vec![
            MixtureComponent {
                weight: 0.5,
                mean: vec![-1.0],
                var: vec![0.25],
            },
            MixtureComponent {
                weight: 0.5,
                mean: vec![1.0],
                var: vec![0.25],
            },
        ])
        .unwrap();
        let at_mode = oracle_log_likelihood(&mix, &[vec![1.0]]).unwrap();
        assert!((at_mode - mix.log_pdf(&[1.0])).abs() < 1e-15);
    }

    #[test]
    fn log_likelihood_matches_differential_entropy() {
        let std1 = GaussianMixtureEnergy::isotropic_gaussian(vec![0.0], 1.0);
        let mut rng = RngHandle::from_seed(1103);
        let samples = std1.sample_batch(100_000, &mut rng);
        let ll = oracle_log_likelihood(&std1, &samples).unwrap();
        // -(1 + ln 2 pi)/2
        assert!((ll + 1.4189385332046727).abs() < 0.01, "ll {ll}");
    }

    #[test]
    fn grid_kl_exact_match_is_zero() {
        let target = GaussianMixtureEnergy::new(vec![
            MixtureComponent {
                weight: 0.6,
                mean: vec![-1.0],
                var: vec![0.5],
            },
            MixtureComponent {
                weight: 0.4,
                mean: vec![1.5],
                var: vec![0.8],
            },
        ])
        .unwrap();
        let grid = GridSpec::cube(1, -9.0, 9.0, 512).unwrap();
        // The mixture's own energy is exactly -log target.
        let kl = grid_kl(&target, &target, &grid).unwrap();
        assert!(kl.abs() < 1e-6, "kl {kl}");
    }

    #[test]
    fn grid_kl_shifted_gaussians_closed_form() {
        let target = GaussianMixtureEnergy::isotropic_gaussian(vec![0.0], 1.0);
        let model = GaussianMixtureEnergy::isotropic_gaussian(vec![1.0], 1.0);
        let grid = GridSpec::cube(1, -8.0, 9.0, 512).unwrap();
        let kl = grid_kl(&model, &target, &grid).unwrap();
        assert!((kl - 0.5).abs() / 0.5 < 0.02, "kl {kl}");
    }

    #[test]
    fn grid_kl_nonnegative_on_random_pairs() {
        let mut rng = RngHandle::from_seed(1104);
        for _ in 0..10 {
            let target = GaussianMixtureEnergy::new(vec![
                MixtureComponent {
                    weight: 0.5,
                    mean: vec![rng.uniform_in(-1.0, 1.0)],
                    var: vec![rng.uniform_in(0.3, 1.0)],
                },
                MixtureComponent {
                    weight: 0.5,
                    mean: vec![rng.uniform_in(-1.0, 1.0)],
                    var: vec![rng.uniform_in(0.3, 1.0)],
                },
            ])
            .unwrap();
            let model = crate::energy::AnalyticGaussianEnergy::new(
                vec![rng.uniform_in(-0.5, 0.5)],
                Matrix::diag(&[rng.uniform_in(0.5, 2.0)]),
            )
            .unwrap();
            let grid = GridSpec::cube(1, -10.0, 10.0, 256).unwrap();
            let kl = grid_kl(&model, &target, &grid).unwrap();
            assert!(kl >= -1e-9, "kl {kl}");
        }
    }

    #[test]
    fn grid_kl_converges_as_resolution_doubles() {
        let target = GaussianMixtureEnergy::isotropic_gaussian(vec![0.0], 1.0);
        let model = GaussianMixtureEnergy::isotropic_gaussian(vec![0.6], 1.3);
        let mut prev = f64::INFINITY;
        for n in [64usize, 128, 256] {
            let grid = GridSpec::cube(1, -9.0, 9.0, n).unwrap();
            let kl = grid_kl(&model, &target, &grid).unwrap();
            assert!(kl <= prev + 1e-3, "n = {n}: {kl} vs prev {prev}");
            prev = kl;
        }
    }

    #[test]
    fn grid_kl_requires_coverage() {
        let target = GaussianMixtureEnergy::isotropic_gaussian(vec![5.0], 1.0);
        let model = GaussianMixtureEnergy::isotropic_gaussian(vec![0.0], 1.0);
        let grid = GridSpec::cube(1, -2.0, 2.0, 64).unwrap();
        match grid_kl(&model, &target, &grid) {
            Err(Error::InsufficientCoverage { coverage, .. }) => assert!(coverage < 0.1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn grid_kl_2d_matches_product_form() {
        // Independent coordinates: KL adds across dimensions.
        let target2 = GaussianMixtureEnergy::isotropic_gaussian(vec![0.0, 0.0], 1.0);
        let model2 = GaussianMixtureEnergy::isotropic_gaussian(vec![1.0, 1.0], 1.0);
        let grid2 = GridSpec::cube(2, -8.0, 9.0, 96).unwrap();
        let kl2 = grid_kl(&model2, &target2, &grid2).unwrap();
        assert!((kl2 - 1.0).abs() < 0.03, "kl {kl2}");
    }

    #[test]
    fn grid_spec_validation() {
        assert!(GridSpec::new(vec![]).is_err());
        assert!(GridSpec::new(vec![(0.0, 1.0, 8)]).is_err());
        assert!(GridSpec::new(vec![(1.0, 0.0, 64)]).is_err());
        assert!(GridSpec::new(vec![(0.0, 1.0, 64); 4]).is_err());
        assert!(GridSpec::new(vec![(0.0, 1.0, 64); 3]).is_ok());
    }

    #[test]
    fn metrics_csv_appends_with_header() {
        let dir = std::env::temp_dir().join(format!("ebmlab-metrics-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("metrics.csv");
        let row = |m: &str, v: f64| MetricRow {
            run_id: "run1".into(),
            metric: m.into(),
            value: v,
            config_hash: format!("{:016x}", fnv1a64(b"cfg")),
        };
        append_metrics_csv(&path, &[row("frechet", 0.5)]).unwrap();
        append_metrics_csv(&path, &[row("grid_kl", 0.1)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::remove_dir_all(&dir).ok();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "run_id,metric,value,config_hash");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("run1,frechet,0.5,"));
    }
}
