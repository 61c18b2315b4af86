use super::*;
use crate::energy::{AnalyticGaussianEnergy, MlpEnergy, Rbm};
use crate::energy::spins_from_index;
use crate::numerics::sigmoid;

fn three_state_target() -> Vec<f64> {
    vec![0.5, 0.3, 0.2]
}

fn uniform_three_state_proposal(_x: &[f64], rng: &mut RngHandle) -> (Vec<f64>, f64, f64) {
    let cand = rng.index(3) as f64;
    let lq = (1.0f64 / 3.0f64).ln();
    (vec![cand], lq, lq)
}

#[test]
fn uphill_moves_always_accepted_under_symmetric_proposal() {
    // pi(x*) >= pi(x) with log q symmetric gives acceptance exactly 1.
    for (curr, cand) in [(0.2, 0.7), (0.1, 0.1), (0.3, 0.9)] {
        let la = mh_log_accept_prob(f64::ln(curr), f64::ln(cand), -1.0, -1.0);
        if cand >= curr {
            assert_eq!(la, 0.0);
        } else {
            assert!(la < 0.0);
        }
    }
}

#[test]
fn mh_kernel_satisfies_detailed_balance_analytically() {
    let p = three_state_target();
    // K(j|i) = q * alpha(i -> j) for j != i, with q = 1/3.
    let q = 1.0f64 / 3.0;
    let mut kernel = [[0.0f64; 3]; 3];
    for i in 0..3 {
        let mut stay = 0.0;
        for j in 0..3 {
            if i == j {
                continue;
            }
            let alpha = mh_log_accept_prob(p[i].ln(), p[j].ln(), q.ln(), q.ln()).exp();
            kernel[i][j] = q * alpha;
            stay += q * (1.0 - alpha);
        }
        kernel[i][i] = q + stay;
    }
    for i in 0..3 {
        let row_sum: f64 = kernel[i].iter().sum();
        assert!((row_sum - 1.0).abs() < 1e-12);
        for j in 0..3 {
            assert!(
                (p[i] * kernel[i][j] - p[j] * kernel[j][i]).abs() < 1e-12,
                "pair ({i},{j})"
            );
        }
    }
}

#[test]
fn mh_long_run_frequencies_match_target() {
    let p = three_state_target();
    let target = p.clone();
    let log_t = move |x: &[f64]| target[x[0] as usize].ln();
    let mut rng = RngHandle::from_seed(81);
    let steps = 200_000;
    let (samples, diag) =
        mh_chain(log_t, uniform_three_state_proposal, &[0.0], steps, &mut rng).unwrap();
    let mut counts = [0usize; 3];
    for s in &samples {
        counts[s[0] as usize] += 1;
    }
    let mut tv = 0.0;
    for i in 0..3 {
        tv += (counts[i] as f64 / steps as f64 - p[i]).abs();
    }
    assert!(tv / 2.0 < 0.01, "tv {tv}");
    assert!(diag.acceptance_rate > 0.5);
}

#[test]
fn mh_rejects_non_finite_init() {
    let log_t = |x: &[f64]| if x[0] < 0.0 { f64::NEG_INFINITY } else { 0.0 };
    let mut rng = RngHandle::from_seed(82);
    let err = mh_chain(log_t, uniform_three_state_proposal, &[-1.0], 10, &mut rng).unwrap_err();
    assert!(matches!(err, Error::NonFinite(_)));
}

#[test]
fn langevin_matched_mode_recovers_gaussian_moments() {
    let model = AnalyticGaussianEnergy::standard(1);
    let cfg = ChainConfig::langevin(100_000, 1e-3);
    let root = RngHandle::from_seed(83);
    let mut pooled = Vec::new();
    for chain in 0..16u64 {
        let mut rng = root.derive(&[chain]);
        let init = [rng.uniform_in(-2.0, 2.0)];
        let (_, path, diag) = langevin_chain(&model, &init, &cfg, &mut rng).unwrap();
        assert!((diag.acceptance_rate - 1.0).abs() < 1e-12);
        // Thin every 10th point after burn-in.
        for x in path.iter().skip(5000).step_by(10) {
            pooled.push(x[0]);
        }
    }
    let n = pooled.len() as f64;
    let mean = pooled.iter().sum::<f64>() / n;
    let var = pooled.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    assert!(mean.abs() < 0.05, "mean {mean}");
    assert!((0.9..=1.1).contains(&var), "var {var}");
}

#[test]
fn langevin_degenerate_config_keeps_path_constant() {
    let model = AnalyticGaussianEnergy::standard(2);
    let cfg = ChainConfig::langevin_decoupled(25, 0.0, 0.0);
    let mut rng = RngHandle::from_seed(84);
    let init = [0.4, -1.7];
    let (last, path, _) = langevin_chain(&model, &init, &cfg, &mut rng).unwrap();
    assert_eq!(last, init.to_vec());
    assert!(path.iter().all(|p| p == &init.to_vec()));
}

#[test]
fn paper_preset_runs_on_spectrally_normalized_mlp() {
    let mut rng = RngHandle::from_seed(85);
    let mut model = MlpEnergy::new(&[2, 32, 32, 1], 0.2, true, 1, &mut rng).unwrap();
    for _ in 0..5 {
        model.spectral_normalize_forward().unwrap();
    }
    let cfg = ChainConfig::paper();
    let (_, path, diag) = langevin_chain(&model, &[0.1, -0.2], &cfg, &mut rng).unwrap();
    assert_eq!(path.len(), 101);
    assert!(diag.nu.is_finite());
    // Spectral normalization bounds the score norm by the Lipschitz product.
    assert!(diag.nu < 2.0, "nu {}", diag.nu);
}

#[test]
fn divergence_guard_reports_step_and_history() {
    // Quadratic energy with an enormous precision blows past the guard once
    // the chain drifts.
    let prec = crate::numerics::Matrix::diag(&[1e9]);
    let model = AnalyticGaussianEnergy::new(vec![0.0], prec).unwrap();
    let cfg = ChainConfig::langevin_decoupled(50, 2.5, 0.0);
    let mut rng = RngHandle::from_seed(86);
    let err = langevin_chain(&model, &[1.0], &cfg, &mut rng).unwrap_err();
    match err {
        Error::SamplerDiverged {
            step,
            score_norm,
            nu_history,
        } => {
            assert!(score_norm > DIVERGENCE_GUARD);
            assert_eq!(nu_history.len(), step);
        }
        other => panic!("unexpected error {other:?}"),
    }
}

#[test]
fn mala_corrects_the_coarse_step_bias() {
    // At tau = 0.5 the unadjusted chain has stationary variance
    // 1/(1 - tau/4) ~ 1.143 on a standard Gaussian; the adjusted chain
    // removes the bias.
    let model = AnalyticGaussianEnergy::standard(1);
    let steps = 300_000;
    let run = |adjust: bool, seed: u64| {
        let cfg = ChainConfig::langevin(steps, 0.5).with_metropolis_adjust(adjust);
        let mut rng = RngHandle::from_seed(seed);
        let (_, path, diag) = langevin_chain(&model, &[0.0], &cfg, &mut rng).unwrap();
        let xs: Vec<f64> = path.iter().skip(1000).map(|p| p[0]).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        (var, diag.acceptance_rate)
    };
    let (var_ula, acc_ula) = run(false, 87);
    let (var_mala, acc_mala) = run(true, 88);
    assert_eq!(acc_ula, 1.0);
    assert!(acc_mala < 1.0 && acc_mala > 0.5);
    assert!(var_ula > 1.10, "unadjusted var {var_ula}");
    assert!((var_mala - 1.0).abs() < 0.05, "adjusted var {var_mala}");
}

#[test]
fn leapfrog_conserves_energy_at_small_step() {
    let model = AnalyticGaussianEnergy::standard(1);
    let mut rng = RngHandle::from_seed(89);
    for _ in 0..10 {
        let x = [rng.normal()];
        let v = [rng.normal()];
        let h0 = model.energy(&x).unwrap() + 0.5 * v[0] * v[0];
        let (xs, vs) = leapfrog(&model, &x, &v, 10, 1e-4, &None).unwrap();
        let h1 = model.energy(&xs).unwrap() + 0.5 * vs[0] * vs[0];
        assert!((h1 - h0).abs() < 1e-6, "dH {}", h1 - h0);
    }
}

#[test]
fn leapfrog_is_reversible_under_momentum_negation() {
    let model = AnalyticGaussianEnergy::standard(2);
    let mut rng = RngHandle::from_seed(90);
    let x = rng.normal_vec(2);
    let v = rng.normal_vec(2);
    let (xs, vs) = leapfrog(&model, &x, &v, 25, 0.1, &None).unwrap();
    let neg: Vec<f64> = vs.iter().map(|a| -a).collect();
    let (xb, vb) = leapfrog(&model, &xs, &neg, 25, 0.1, &None).unwrap();
    for i in 0..2 {
        assert!((xb[i] - x[i]).abs() < 1e-10);
        assert!((vb[i] + v[i]).abs() < 1e-10);
    }
}

#[test]
fn hmc_matches_anisotropic_gaussian_moments() {
    // Target N(0, diag(1, 4)): precision diag(1, 1/4).
    let prec = crate::numerics::Matrix::diag(&[1.0, 0.25]);
    let model = AnalyticGaussianEnergy::new(vec![0.0, 0.0], prec).unwrap();
    let mut cfg = ChainConfig::hmc(20, 0.1);
    cfg.mass = None;
    let mut rng = RngHandle::from_seed(91);
    let (samples, diag) = hmc_chain(&model, &[0.0, 0.0], &cfg, 20_000, &mut rng).unwrap();
    assert!(diag.acceptance_rate > 0.6, "acc {}", diag.acceptance_rate);
    let n = samples.len() as f64;
    for (i, want) in [(0usize, 1.0f64), (1, 4.0)] {
        let mean = samples.iter().map(|s| s[i]).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s[i] - mean).powi(2)).sum::<f64>() / n;
        assert!(
            (var - want).abs() / want < 0.10,
            "coordinate {i} var {var} want {want}"
        );
    }
}

#[test]
fn hmc_acceptance_improves_as_step_shrinks() {
    let prec = crate::numerics::Matrix::diag(&[1.0, 0.25]);
    let model = AnalyticGaussianEnergy::new(vec![0.0, 0.0], prec).unwrap();
    let mut prev = 0.0;
    for (eps, l) in [(0.2, 10), (0.1, 20), (0.05, 40)] {
        let cfg = ChainConfig::hmc(l, eps);
        let mut rng = RngHandle::from_seed(92);
        let (_, diag) = hmc_chain(&model, &[1.0, 1.0], &cfg, 2000, &mut rng).unwrap();
        assert!(
            diag.acceptance_rate >= prev,
            "eps {eps}: {} < {prev}",
            diag.acceptance_rate
        );
        prev = diag.acceptance_rate;
    }
    assert!(prev > 0.95);
}

#[test]
fn hmc_with_custom_mass_matrix_still_targets_the_model() {
    let model = AnalyticGaussianEnergy::standard(2);
    // Trajectory angles per coordinate stay clear of the pi resonance.
    let mut cfg = ChainConfig::hmc(10, 0.1);
    cfg.mass = Some(crate::numerics::Matrix::diag(&[2.0, 0.5]));
    let mut rng = RngHandle::from_seed(93);
    let (samples, diag) = hmc_chain(&model, &[0.0, 0.0], &cfg, 20_000, &mut rng).unwrap();
    assert!(diag.acceptance_rate > 0.6);
    let n = samples.len() as f64;
    for i in 0..2 {
        let mean = samples.iter().map(|s| s[i]).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s[i] - mean).powi(2)).sum::<f64>() / n;
        assert!((var - 1.0).abs() < 0.1, "var {var}");
    }
}

#[test]
fn gibbs_uncoupled_units_follow_bias_sigmoid() {
    let mut rng = RngHandle::from_seed(94);
    let a = vec![0.3, -0.6];
    let rbm = Rbm::new(crate::numerics::Matrix::zeros(2, 2), a.clone(), vec![0.0; 2]).unwrap();
    let sweeps = 100_000;
    let (samples, _) = gibbs_rbm(&rbm, &[1.0, 1.0], sweeps, &mut rng).unwrap();
    for i in 0..2 {
        let frac = samples.iter().filter(|s| s[i] == 1.0).count() as f64 / sweeps as f64;
        let want = sigmoid(2.0 * a[i]);
        assert!((frac - want).abs() < 0.01, "unit {i}: {frac} vs {want}");
    }
}

#[test]
fn gibbs_marginal_approaches_enumeration() {
    let mut rng = RngHandle::from_seed(95);
    let rbm = Rbm::seeded(3, 2, 0.6, &mut rng);
    let exact = rbm.exact_visible_marginal().unwrap();
    let burn = 1000;
    let sweeps = 60_000 + burn;
    let (samples, _) = gibbs_rbm(&rbm, &[1.0, 1.0, 1.0], sweeps, &mut rng).unwrap();
    let mut counts = vec![0usize; 8];
    for s in samples.iter().skip(burn) {
        let mut idx = 0;
        for (i, &si) in s.iter().enumerate() {
            if si == 1.0 {
                idx |= 1 << i;
            }
        }
        counts[idx] += 1;
    }
    let total = (sweeps - burn) as f64;
    let tv: f64 = counts
        .iter()
        .zip(&exact)
        .map(|(&c, &p)| (c as f64 / total - p).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv < 0.03, "tv {tv}");
}

#[test]
fn gibbs_saturates_under_large_bias() {
    let mut rng = RngHandle::from_seed(96);
    let rbm = Rbm::new(
        crate::numerics::Matrix::zeros(3, 2),
        vec![20.0; 3],
        vec![0.0; 2],
    )
    .unwrap();
    let (samples, _) = gibbs_rbm(&rbm, &[-1.0, -1.0, -1.0], 5, &mut rng).unwrap();
    assert!(samples.last().unwrap().iter().all(|&v| v == 1.0));
}

#[test]
fn gibbs_rejects_invalid_states() {
    let mut rng = RngHandle::from_seed(97);
    let rbm = Rbm::new(crate::numerics::Matrix::zeros(2, 2), vec![0.0; 2], vec![0.0; 2]).unwrap();
    assert!(gibbs_rbm(&rbm, &[0.0, 1.0], 5, &mut rng).is_err());
}

#[test]
fn gibbs_block_updates_have_unit_mh_acceptance() {
    // Viewing a block draw h -> h* given v as an MH proposal with
    // q(h*|v) = p(h*|v), the acceptance ratio is exactly 1.
    let mut rng = RngHandle::from_seed(98);
    let rbm = Rbm::seeded(3, 2, 0.7, &mut rng);
    let block_prob = |probs: &[f64], state: &[f64]| -> f64 {
        probs
            .iter()
            .zip(state)
            .map(|(&p, &s)| if s == 1.0 { p } else { 1.0 - p })
            .product()
    };
    for vi in 0..8 {
        let v = spins_from_index(vi, 3);
        let probs = rbm.prob_h_given_v(&v).unwrap();
        for hi in 0..4 {
            for hj in 0..4 {
                let h = spins_from_index(hi, 2);
                let hs = spins_from_index(hj, 2);
                let pi_h = (-rbm.energy(&v, &h).unwrap()).exp();
                let pi_hs = (-rbm.energy(&v, &hs).unwrap()).exp();
                let ratio =
                    (pi_hs * block_prob(&probs, &h)) / (pi_h * block_prob(&probs, &hs));
                assert!((ratio - 1.0).abs() < 1e-12, "ratio {ratio}");
            }
        }
    }
    // Visible block the same way.
    for hi in 0..4 {
        let h = spins_from_index(hi, 2);
        let probs = rbm.prob_v_given_h(&h).unwrap();
        for vi in 0..8 {
            for vj in 0..8 {
                let v = spins_from_index(vi, 3);
                let vs = spins_from_index(vj, 3);
                let pi_v = (-rbm.energy(&v, &h).unwrap()).exp();
                let pi_vs = (-rbm.energy(&vs, &h).unwrap()).exp();
                let ratio = (pi_vs * block_prob(&probs, &v)) / (pi_v * block_prob(&probs, &vs));
                assert!((ratio - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn nu_examples() {
    let mut rng = RngHandle::from_seed(99);
    let constant = crate::energy::zeroed_mlp(&[2, 4, 1], &mut rng);
    let path = vec![vec![0.5, 0.5], vec![-1.0, 2.0]];
    assert_eq!(grad_magnitude_nu(&constant, &path).unwrap(), 0.0);

    let gauss = AnalyticGaussianEnergy::standard(2);
    let path = vec![vec![1.0, 0.0], vec![0.0, 2.0]];
    let nu = grad_magnitude_nu(&gauss, &path).unwrap();
    assert!((nu - 1.5).abs() < 1e-12);
}

#[test]
fn chain_csv_has_stable_columns() {
    let model = AnalyticGaussianEnergy::standard(2);
    let dir = std::env::temp_dir().join(format!("ebmlab-trace-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("trace.csv");
    write_chain_csv(&path, &model, &[vec![0.0, 0.0], vec![1.0, 2.0]]).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::remove_dir_all(&dir).ok();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "step,x0,x1,energy,score_norm");
    assert_eq!(lines.count(), 2);
}
