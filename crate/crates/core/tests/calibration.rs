use quadrbm::annealer::*;
use quadrbm::calibration::*;
use quadrbm::rng::derive_seed;
use quadrbm::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const BETA_QA: f64 = 12.0;

fn machine(sizes: [usize; 4], std: f64, seed: u64) -> QuadripartiteRBM {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    QuadripartiteRBM::random(PartitionLayout::new(sizes).unwrap(), std, &mut rng)
}

fn annealer(equilibration_steps: usize) -> VirtualAnnealer {
    VirtualAnnealer::new(VirtualAnnealerConfig {
        equilibration_steps,
        ..Default::default()
    })
    .unwrap()
}

fn shared(n_samples: usize, equilibration_steps: usize) -> MeasureConfig {
    MeasureConfig {
        n_samples,
        reference: Reference::SharedStream { equilibration_steps },
    }
}

#[test]
fn shared_stream_moments_coincide_at_the_hidden_temperature() {
    let rbm = machine([4, 4, 4, 4], 0.5, 1);
    let m = measure_moments(&rbm, &annealer(100), BETA_QA, &shared(512, 100), 3, None).unwrap();
    assert_eq!(m.gap(), 0.0);
    assert!(converged(&m));
}

#[test]
fn gibbs_reference_agrees_at_the_hidden_temperature() {
    let rbm = machine([4, 4, 4, 4], 0.5, 2);
    let cfg = MeasureConfig {
        n_samples: 4096,
        reference: Reference::Gibbs { n_steps: 300 },
    };
    let m = measure_moments(&rbm, &annealer(300), BETA_QA, &cfg, 4, None).unwrap();
    let se = (m.var_h_qa / m.n_qa as f64 + m.var_h_rbm / m.n_rbm as f64).sqrt();
    assert!(m.gap().abs() < 3.0 * se, "gap {} se {se}", m.gap());
}

#[test]
fn a_cold_guess_sees_lower_annealer_energy() {
    let rbm = machine([4, 4, 4, 4], 0.5, 3);
    let m = measure_moments(&rbm, &annealer(100), 1.0, &shared(512, 100), 5, None).unwrap();
    assert!(m.gap() < 0.0);
    assert!(!converged(&m));
}

#[test]
fn both_methods_converge_from_unit_beta() {
    let rbm = machine([6, 6, 6, 6], 0.5, 4);
    let qa = annealer(100);
    let measure = shared(1024, 100);
    let sigma2 = measure_moments(&rbm, &qa, BETA_QA, &measure, 0, None).unwrap().var_h_qa;
    let base = CalibrationConfig {
        beta_0: 1.0,
        eta: 0.25 * BETA_QA / sigma2,
        measure,
        seed: 6,
        ..Default::default()
    };
    for method in [CalibrationMethod::KlGradient, CalibrationMethod::RatioAdaptive] {
        let st = calibrate(&rbm, &qa, &CalibrationConfig { method, ..base.clone() }, None).unwrap();
        assert!(st.converged, "{method:?} did not converge");
        assert!((st.beta_t / BETA_QA - 1.0).abs() < 0.05, "{method:?} ended at {}", st.beta_t);
    }
}

#[test]
fn starting_at_the_hidden_temperature_stops_immediately() {
    let rbm = machine([4, 4, 4, 4], 0.5, 5);
    for method in [CalibrationMethod::KlGradient, CalibrationMethod::RatioFixed, CalibrationMethod::RatioAdaptive] {
        let cfg = CalibrationConfig {
            method,
            beta_0: BETA_QA,
            measure: shared(256, 50),
            ..Default::default()
        };
        let st = calibrate(&rbm, &annealer(50), &cfg, None).unwrap();
        assert_eq!(st.iterations(), 1);
        assert!(st.converged && st.beta_t == BETA_QA);
    }
}

#[test]
fn history_records_every_measurement() {
    let rbm = machine([4, 4, 4, 4], 0.5, 6);
    let cfg = CalibrationConfig {
        method: CalibrationMethod::RatioAdaptive,
        beta_0: 2.0,
        measure: shared(512, 100),
        ..Default::default()
    };
    let st = calibrate(&rbm, &annealer(100), &cfg, None).unwrap();
    assert!(st.converged);
    assert_eq!(st.history.len(), st.iterations());
    assert!(st.history.iter().enumerate().all(|(i, r)| r.iteration == i + 1));
    assert!(st.history[..st.iterations() - 1].iter().all(|r| !r.converged));
    assert!(st.history.last().unwrap().converged);
    assert_eq!(st.history[0].beta, 2.0);
    assert_eq!(st.to_csv().lines().count(), st.iterations() + 1);
}

#[test]
fn an_exhausted_budget_returns_the_unconverged_state() {
    let rbm = machine([4, 4, 4, 4], 0.5, 7);
    let cfg = CalibrationConfig {
        method: CalibrationMethod::KlGradient,
        beta_0: 1.0,
        eta: 1e-4,
        max_iters: 3,
        measure: shared(256, 50),
        ..Default::default()
    };
    let st = calibrate(&rbm, &annealer(50), &cfg, None).unwrap();
    assert!(!st.converged);
    assert_eq!(st.iterations(), 3);
}

/// Distance from the hidden temperature after ten multiplicative steps with
/// a fixed exponent, or infinity once the step breaks down.
fn ratio_error_after(
    rbm: &QuadripartiteRBM,
    qa: &VirtualAnnealer,
    measure: &MeasureConfig,
    delta: f64,
    beta_0: f64,
    seed: u64,
) -> f64 {
    let mut st = CalibrationState::new(CalibrationMethod::RatioFixed, beta_0, delta).unwrap();
    for it in 0..10 {
        let Ok(m) = measure_moments(rbm, qa, st.beta_t, measure, derive_seed(seed, it), None) else {
            return f64::INFINITY;
        };
        if step_ratio(&mut st, &m).is_err() || !st.beta_t.is_finite() {
            return f64::INFINITY;
        }
    }
    (st.beta_t - BETA_QA).abs()
}

#[test]
fn stability_factor_predicts_divergence_and_contraction() {
    let rbm = machine([6, 6, 6, 6], 0.5, 8);
    let qa = annealer(100);
    let measure = shared(1024, 100);
    let m = measure_moments(&rbm, &qa, BETA_QA, &measure, 0, None).unwrap();
    let root = -m.mean_h_qa / m.var_h_qa;
    let unstable = 2.4 * root;
    let stable = 0.5 * root;
    assert!(stability_lambda(unstable, &m).unwrap() > 1.2);
    assert!(stability_lambda(stable, &m).unwrap() < 0.8);

    let trials = 10;
    let (mut grew, mut shrank) = (0, 0);
    for t in 0..trials {
        let beta_0 = BETA_QA * if t % 2 == 0 { 1.05 } else { 0.95 };
        let e0 = (beta_0 - BETA_QA).abs();
        if ratio_error_after(&rbm, &qa, &measure, unstable, beta_0, 100 + t) > e0 {
            grew += 1;
        }
        if ratio_error_after(&rbm, &qa, &measure, stable, beta_0, 200 + t) < e0 {
            shrank += 1;
        }
    }
    assert!(grew >= 9, "diverged {grew}/{trials}");
    assert!(shrank >= 9, "contracted {shrank}/{trials}");
}

/// The linearized gradient step has factor `1 - eta var / beta`, so it
/// oscillates with growing amplitude once `eta > 2 beta / var`.
#[test]
fn large_learning_rate_destabilizes_the_gradient_method() {
    let rbm = machine([6, 6, 6, 6], 0.5, 9);
    let qa = annealer(100);
    let measure = shared(1024, 100);
    let sigma2 = measure_moments(&rbm, &qa, BETA_QA, &measure, 0, None).unwrap().var_h_qa;
    let eta = 3.0 * BETA_QA / sigma2;
    let mut grew = 0;
    for t in 0..10 {
        let beta_0 = BETA_QA * if t % 2 == 0 { 1.05 } else { 0.95 };
        let mut st = CalibrationState::new(CalibrationMethod::KlGradient, beta_0, 1.0).unwrap();
        for it in 0..10 {
            let m = measure_moments(&rbm, &qa, st.beta_t, &measure, derive_seed(300 + t, it), None).unwrap();
            step_kl(&mut st, &m, eta).unwrap();
        }
        if (st.beta_t - BETA_QA).abs() > (beta_0 - BETA_QA).abs() {
            grew += 1;
        }
    }
    assert!(grew >= 9, "grew {grew}/10");
}

#[test]
fn per_condition_calibration_sees_the_flux_shift() {
    let rbm = machine([6, 6, 6, 6], 0.5, 10);
    let qa = VirtualAnnealer::new(VirtualAnnealerConfig {
        equilibration_steps: 100,
        flux_beta_shift: -0.5,
        ..Default::default()
    })
    .unwrap();
    let conditions: Vec<Condition> = [[1, 0, 1, 1, 0, 0], [0, 0, 0, 1, 1, 1], [1, 1, 0, 0, 1, 0]]
        .iter()
        .map(|b| Condition {
            partition: Partition::V,
            bits: b.to_vec(),
            flux_strength: 5.0,
        })
        .collect();
    let cfg = CalibrationConfig {
        beta_0: 1.0,
        delta_max: 3.0,
        measure: shared(1024, 100),
        seed: 11,
        ..Default::default()
    };
    let states = calibrate_per_condition(&rbm, &qa, &cfg, &conditions).unwrap();
    assert_eq!(states.len(), 3);
    for st in states {
        assert!(st.converged);
        assert!((st.beta_t - (BETA_QA - 0.5)).abs() < 0.3, "beta {}", st.beta_t);
    }
}

#[test]
fn ratio_step_refuses_mixed_signs() {
    let mut st = CalibrationState::new(CalibrationMethod::RatioFixed, 1.0, 1.0).unwrap();
    let m = MomentPair::from_energies(&[1.0, 2.0], &[-1.0, -2.0]).unwrap();
    assert!(matches!(step_ratio(&mut st, &m), Err(Error::Calibration(_))));
    assert!(st.history.is_empty());
}
