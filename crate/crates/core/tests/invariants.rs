use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, PI, TAU};

use entangleometer_core::biphoton::{
    bell_phi_plus, coincidence_probability, depolarize, model_compensator, model_no_compensator, model_senarmont,
    sample_state, sweep_validity, AnalyzerConfig, COMPENSATOR_SCALE, NO_COMPENSATOR_SCALE,
};
use entangleometer_core::characterization::{
    random_density, simulate_characterization, simulate_tomography, tomography, uhlmann_fidelity, CharacterizationPlan,
};
use entangleometer_core::classical_psa::{psa_closed_form, quantum_classical_map};
use entangleometer_core::detection::run_sweep;
use entangleometer_core::estimation::{
    aggregate, fit_retardance, monte_carlo, senarmont_estimate, sensitivity_scan, Estimator, FitConfig, FitModel,
};
use entangleometer_core::polcore::wrapped_distance;
use entangleometer_core::{DetectionModel, PolAngle, Retardance, SampleSpec, Sampling, SweepDataset, SweepPlan, SweepRecord};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Monte Carlo std ratio (compensator / none) at equal total counts, δ ∈ [π - 0.05, π],
/// 36-point sweeps: independent simulation gave 0.107-0.111.
const COMPENSATOR_STD_RATIO_MAX: f64 = 0.15;

fn angle() -> impl Strategy<Value = f64> {
    -PI..PI
}

fn synth(model: FitModel, delta: f64, scale: f64) -> SweepDataset {
    SweepDataset::from_records(
        (0..36)
            .map(|k| {
                let a = PI * k as f64 / 36.0;
                SweepRecord { angle: PolAngle(a), counts: scale * model.eval(a, delta).intensity, integration_s: 1.0 }
            })
            .collect(),
    )
}

fn away_from_symmetry(delta: f64) -> bool {
    wrapped_distance(delta, 0.0, PI) > 0.1
}

proptest! {
    #[test]
    fn closed_forms_match_state_evolution(hs in angle(), hi in angle(), theta in angle(), delta in 0.0..TAU) {
        let state = sample_state(PolAngle(theta), Retardance(delta));
        let p = coincidence_probability(&state, &AnalyzerConfig::new(PolAngle(hs), PolAngle(hi)));
        prop_assert!((model_no_compensator(hs, hi, theta, delta).intensity - NO_COMPENSATOR_SCALE * p).abs() < 1e-12);
        let pc = coincidence_probability(&state, &AnalyzerConfig::new(PolAngle(hs), PolAngle(hi)).with_compensator());
        prop_assert!((model_compensator(hs, hi, theta, delta).intensity - COMPENSATOR_SCALE * pc).abs() < 1e-12);
        let s = sample_state(PolAngle(FRAC_PI_4), Retardance(delta));
        let ps = coincidence_probability(&s, &AnalyzerConfig::new(PolAngle(0.0), PolAngle(hi)).with_compensator());
        prop_assert!((model_senarmont(hi, delta).intensity - ps).abs() < 1e-12);
    }

    #[test]
    fn classical_map_reproduces_quantum_form(hs in angle(), hi in angle(), theta in angle(), delta in 0.0..TAU) {
        let (p, a) = quantum_classical_map(PolAngle(hs), PolAngle(hi));
        let q = model_no_compensator(hs, hi, theta, delta).intensity;
        prop_assert!((psa_closed_form(p.0, a.0, theta, delta) - q).abs() < 1e-12);
    }

    #[test]
    fn analytic_derivatives(hs in angle(), hi in angle(), theta in angle(), delta in 0.0..TAU) {
        let h = 1e-4;
        let fd = |f: &dyn Fn(f64) -> f64| (8.0 * (f(delta + h) - f(delta - h)) - (f(delta + 2.0 * h) - f(delta - 2.0 * h))) / (12.0 * h);
        let cases: [(f64, f64); 3] = [
            (model_no_compensator(hs, hi, theta, delta).d_delta, fd(&|d| model_no_compensator(hs, hi, theta, d).intensity)),
            (model_compensator(hs, hi, theta, delta).d_delta, fd(&|d| model_compensator(hs, hi, theta, d).intensity)),
            (model_senarmont(hi, delta).d_delta, fd(&|d| model_senarmont(hi, d).intensity)),
        ];
        for (a, n) in cases {
            prop_assert!((a - n).abs() <= 1e-9, "{a} vs {n}");
        }
    }

    #[test]
    fn round_trip_no_compensator(hs in angle(), theta in angle(), delta in 0.0..TAU, scale in 10.0..1e6f64) {
        prop_assume!(sweep_validity(hs, theta) && (4.0 * hs + 2.0 * theta).sin().abs() > 0.2);
        prop_assume!(away_from_symmetry(delta));
        let model = FitModel::NoCompensator { h_signal: PolAngle(hs), theta: PolAngle(theta) };
        let r = fit_retardance(&synth(model, delta, scale), &FitConfig::new(model)).unwrap();
        prop_assert!(model.delta_distance(r.delta_hat.0, delta) <= 1e-9);
        prop_assert!((r.scale_hat - scale).abs() <= 1e-9 * scale);
    }

    #[test]
    fn round_trip_compensator(hs in angle(), theta in angle(), delta in 0.0..TAU, scale in 10.0..1e6f64) {
        prop_assume!((4.0 * hs + 2.0 * theta).sin().abs() > 0.2);
        let model = FitModel::Compensator { h_signal: PolAngle(hs), theta: PolAngle(theta) };
        let r = fit_retardance(&synth(model, delta, scale), &FitConfig::new(model)).unwrap();
        prop_assert!(wrapped_distance(r.delta_hat.0, delta, TAU) <= 1e-9);
    }

    #[test]
    fn round_trip_classical(p in angle(), theta in angle(), delta in 0.0..TAU, compensator in any::<bool>()) {
        prop_assume!((2.0 * (theta - p)).sin().abs() > 0.2);
        prop_assume!(compensator || away_from_symmetry(delta));
        let model = FitModel::ClassicalPsa { polarizer: PolAngle(p), theta: PolAngle(theta), compensator };
        let r = fit_retardance(&synth(model, delta, 1e4), &FitConfig::new(model)).unwrap();
        prop_assert!(model.delta_distance(r.delta_hat.0, delta) <= 1e-9);
    }

    #[test]
    fn estimators_agree_noise_free(delta in 0.0..TAU) {
        let data = synth(FitModel::Senarmont, delta, 5e3);
        let a = senarmont_estimate(&data).unwrap();
        let b = fit_retardance(&data, &FitConfig::new(FitModel::Senarmont)).unwrap();
        prop_assert!(wrapped_distance(a.delta_hat.0, b.delta_hat.0, TAU) <= 1e-6);
    }

    #[test]
    fn tomography_inverts_simulation(seed in any::<u64>(), rank in 1usize..=4) {
        let rho = random_density(&mut ChaCha8Rng::seed_from_u64(seed), rank);
        let counts = simulate_tomography(&rho, &DetectionModel::ideal(1e4), Sampling::Expected, 0).unwrap();
        let r = tomography(&counts, &bell_phi_plus()).unwrap();
        prop_assert!(uhlmann_fidelity(&r.rho, &rho) >= 1.0 - 1e-6);
    }
}

fn senarmont_plan() -> SweepPlan {
    SweepPlan::quantum(PolAngle(0.0), SweepPlan::uniform_angles(0.0, PI, 36), true)
}

#[test]
fn estimators_agree_on_noisy_data() {
    let sample = SampleSpec::new(PolAngle(FRAC_PI_4), Retardance(1.3));
    for seed in 0..20 {
        let data = run_sweep(&senarmont_plan(), &sample, &DetectionModel::ideal(2000.0), seed).unwrap();
        let a = senarmont_estimate(&data).unwrap();
        let b = fit_retardance(&data, &FitConfig::new(FitModel::Senarmont)).unwrap();
        let sigma = a.std_errors.delta.unwrap().hypot(b.std_errors.delta.unwrap());
        assert!(wrapped_distance(a.delta_hat.0, b.delta_hat.0, TAU) <= 3.0 * sigma);
    }
}

#[test]
fn monte_carlo_mean_is_unbiased() {
    let sample = SampleSpec::new(PolAngle(FRAC_PI_4), Retardance(1.56));
    let est = Estimator::LeastSquares(FitConfig::new(FitModel::Senarmont));
    let fits: Vec<_> = monte_carlo(&senarmont_plan(), &sample, &DetectionModel::ideal(1e4), &est, 100, 21)
        .into_iter()
        .map(Result::unwrap)
        .collect();
    let s = aggregate(&fits, 1.56).unwrap();
    assert!((s.mean_delta - 1.56).abs() <= 3.0 * s.std_delta / 10.0, "{s:?}");
}

fn std_at(plan: &SweepPlan, model: FitModel, delta: f64, total: f64, seed: u64) -> f64 {
    let sample = SampleSpec::new(
        match model {
            FitModel::NoCompensator { theta, .. } | FitModel::Compensator { theta, .. } => theta,
            _ => PolAngle(FRAC_PI_4),
        },
        Retardance(delta),
    );
    let sum_p: f64 = plan.probabilities(&sample).iter().sum();
    let detection = DetectionModel::ideal(total / sum_p);
    let fits: Vec<_> = monte_carlo(plan, &sample, &detection, &Estimator::LeastSquares(FitConfig::new(model)), 200, seed)
        .into_iter()
        .map(Result::unwrap)
        .collect();
    aggregate(&fits, delta).unwrap().std_delta
}

#[test]
fn compensator_advantage_near_half_wave() {
    let angles = SweepPlan::uniform_angles(0.0, PI, 36);
    let without = SweepPlan::quantum(PolAngle(0.0), angles.clone(), false);
    let with = SweepPlan::quantum(PolAngle(0.0), angles, true);
    let m_without = FitModel::NoCompensator { h_signal: PolAngle(0.0), theta: PolAngle(FRAC_PI_8) };
    for (k, delta) in [PI - 0.05, PI - 0.025, 3.1341, PI].into_iter().enumerate() {
        let a = std_at(&without, m_without, delta, 36_000.0, 100 + k as u64);
        let b = std_at(&with, FitModel::Senarmont, delta, 36_000.0, 200 + k as u64);
        assert!(b < a, "δ = {delta}: {b} !< {a}");
        assert!(b / a <= COMPENSATOR_STD_RATIO_MAX, "δ = {delta}: ratio {}", b / a);
    }
}

#[test]
fn sensitivity_pattern_on_noisy_half_wave_data() {
    let detection = DetectionModel::default();
    let angles = SweepPlan::uniform_angles(0.0, PI, 36);
    let dependent_fraction = |plan: SweepPlan, theta: f64, model: FitModel| {
        let sample = SampleSpec::new(PolAngle(theta), Retardance(3.1341));
        let flags: Vec<bool> = (0..10)
            .map(|s| {
                let data = run_sweep(&plan, &sample, &detection, s).unwrap();
                sensitivity_scan(&data, &FitConfig::new(model)).unwrap().dependent
            })
            .collect();
        flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64
    };
    let m1 = FitModel::NoCompensator { h_signal: PolAngle(0.0), theta: PolAngle(FRAC_PI_8) };
    assert!(dependent_fraction(SweepPlan::quantum(PolAngle(0.0), angles.clone(), false), FRAC_PI_8, m1) > 0.5);
    assert_eq!(dependent_fraction(SweepPlan::quantum(PolAngle(0.0), angles, true), FRAC_PI_4, FitModel::Senarmont), 0.0);
}

#[test]
fn werner_suite_is_self_consistent() {
    let phi = bell_phi_plus();
    let rho = depolarize(&phi, 0.9).unwrap();
    let r = simulate_characterization(&rho, &phi, &DetectionModel::ideal(1e4), &CharacterizationPlan::default(), 5).unwrap();
    let v = r.visibility_h.visibility;
    let f = r.tomography.fidelity_to_target;
    let predicted = (1.0 + 3.0 * v) / 4.0;
    let sigma = 0.75 * r.visibility_h.visibility_std + 0.005;
    assert!((f - predicted).abs() <= 3.0 * sigma, "F = {f}, (1+3V)/4 = {predicted}");
}
