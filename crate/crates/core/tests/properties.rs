use proptest::prelude::*;

use qsmooth::algebra::{qubit_liouvillian, steady_state, BlochVector, DensityMatrix, EffectOperator, PauliCoords, Role};
use qsmooth::correlators::CorrelatorModel;
use qsmooth::metrics::RatioMoments;
use qsmooth::record_io::{read_binary, read_csv, write_binary, write_csv};
use qsmooth::smoothing::{smooth_weights, weighted_mean, SmoothedCovariance};
use qsmooth::unravelling::{measurement_map, DetectorConfig, DetectorKind, Increment, Record, SimConfig, Unravelling};

fn bloch_ball() -> impl Strategy<Value = BlochVector> {
    (0.0..1.0f64, -1.0..1.0f64, 0.0..std::f64::consts::TAU)
        .prop_map(|(r, cos_t, phi)| {
            let s = (1.0 - cos_t * cos_t).sqrt();
            let r = r.cbrt();
            BlochVector::new(r * s * phi.cos(), r * s * phi.sin(), r * cos_t)
        })
}

fn kind() -> impl Strategy<Value = DetectorKind> {
    prop_oneof![Just(DetectorKind::N), Just(DetectorKind::X), Just(DetectorKind::Y)]
}

fn outcome(kind: DetectorKind) -> BoxedStrategy<Increment> {
    if kind.is_jump() {
        any::<bool>().prop_map(Increment::Jump).boxed()
    } else {
        (-0.2..0.2f64).prop_map(Increment::Diffusive).boxed()
    }
}

fn step_case() -> impl Strategy<Value = (DetectorKind, DetectorKind, Increment, Increment)> {
    (kind(), kind()).prop_flat_map(|(o, u)| (Just(o), Just(u), outcome(o), outcome(u)))
}

fn ensemble() -> impl Strategy<Value = (Vec<PauliCoords>, Vec<f64>)> {
    (1usize..12).prop_flat_map(|n| {
        (
            prop::collection::vec(bloch_ball().prop_map(|b| b.to_pauli()), n),
            prop::collection::vec(0.0..1.0f64, n),
        )
    })
}

fn model(observed: DetectorKind, unobserved: DetectorKind) -> Unravelling {
    Unravelling::new(&SimConfig {
        observed,
        unobserved,
        t_final: 0.01,
        ..SimConfig::default()
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn steady_state_is_physical(omega in 0.0..50.0f64, gamma in 0.05..5.0f64) {
        let rho = steady_state(&qubit_liouvillian(omega, gamma).unwrap()).unwrap();
        prop_assert!((rho.trace() - 1.0).abs() < 1e-10);
        prop_assert!(rho.eigenvalues()[0] > -1e-10);
        prop_assert!(BlochVector::from_pauli(&rho.pauli()).x.abs() < 1e-10);
    }

    #[test]
    fn step_keeps_states_physical(b in bloch_ball(), (o, u, oi, ui) in step_case()) {
        let m = model(o, u);
        let rho = DensityMatrix::from_bloch(b).unwrap();
        // a click in both jump channels has probability zero and is rejected
        if let Ok(next) = m.true_step(&rho, oi, ui) {
            prop_assert!(DensityMatrix::new(*next.entries(), Role::Normalized).is_ok());
        }
        let filtered = m.alice_filter_step(&rho, oi).unwrap();
        prop_assert!(filtered.eigenvalues()[0] > -1e-10);
    }

    #[test]
    fn effects_stay_positive(o in kind(), steps in prop::collection::vec(any::<bool>(), 1..30), scale in -0.1..0.1f64) {
        let m = model(o, DetectorKind::N);
        let mut e = EffectOperator::identity();
        for click in steps {
            let inc = if o.is_jump() { Increment::Jump(click) } else { Increment::Diffusive(if click { scale } else { -scale }) };
            e = m.effect_step_backward(&e, inc).unwrap();
            // back-to-back clicks give a rank-one effect whose renormalization
            // scales roundoff by about (2/(Ω dt))²
            prop_assert!(e.eigenvalues()[0] > -1e-9);
            prop_assert!((e.entries().trace().re - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn jump_kraus_maps_complete(b in bloch_ball(), rate in 0.0..2.0f64) {
        let dt = 1e-3;
        let det = DetectorConfig::new(DetectorKind::N, rate).unwrap();
        let rho = DensityMatrix::from_bloch(b).unwrap();
        let total: f64 = [true, false]
            .iter()
            .map(|&c| measurement_map(&det, Increment::Jump(c), 5.0, dt, true).unwrap().apply(rho.entries()).trace().re)
            .sum();
        prop_assert!((total - 1.0).abs() <= (rate * dt).powi(2));
    }

    #[test]
    fn smoothing_weights_are_a_distribution((states, prior) in ensemble(), e in bloch_ball()) {
        let effect = e.to_pauli() * 2.0;
        if let Some(w) = smooth_weights(&prior, &states, &effect) {
            prop_assert!(w.iter().all(|x| *x >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let mean = weighted_mean(&w, &states);
            prop_assert!(mean.norm() <= 1.0 + 1e-12);
            let cov = SmoothedCovariance::from_weights(&w, &states);
            prop_assert!(cov.bloch.symmetric_eigenvalues().min() > -1e-14);
            prop_assert!(cov.purity_variance() >= 0.0);
        }
    }

    #[test]
    fn two_time_correlator_symmetric(k in kind(), m in kind(), tau in 0.01..4.0f64) {
        let model = CorrelatorModel::new(5.0, 1.0, 0.5).unwrap();
        let a = model.c2(k, m, tau).unwrap();
        let b = model.c2(m, k, tau).unwrap();
        prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
    }

    #[test]
    fn ratio_variance_nonnegative_for_valid_covariances(
        a in 0.5..0.9f64, b in 0.3..0.5f64, c in 0.92..1.0f64,
        l in prop::collection::vec(-0.01..0.01f64, 6),
    ) {
        // Σ = L Lᵀ with L lower triangular
        let lm = nalgebra::Matrix3::new(l[0], 0.0, 0.0, l[1], l[2], 0.0, l[3], l[4], l[5]);
        let s = lm * lm.transpose();
        let m = RatioMoments {
            a, b, c,
            var_a: s[(0, 0)], var_b: s[(1, 1)], var_c: s[(2, 2)],
            cov_ab: s[(0, 1)], cov_ac: s[(0, 2)], cov_bc: s[(1, 2)],
        };
        prop_assert!(m.ratio_variance() >= -1e-15);
    }

    #[test]
    fn record_files_round_trip(kind in kind(), values in prop::collection::vec(-1.0..1.0f64, 0..50), seed in any::<u64>()) {
        let det = DetectorConfig::new(kind, 0.5).unwrap();
        let mut record = if kind.is_jump() {
            Record::jumps(det, 1e-3, values.iter().map(|v| *v > 0.5).collect()).unwrap()
        } else {
            Record::diffusive(det, 1e-3, values).unwrap()
        };
        record.seed = seed;
        let mut bin = Vec::new();
        write_binary(&record, &mut bin).unwrap();
        prop_assert_eq!(&read_binary(&bin[..]).unwrap(), &record);
        let mut csv = Vec::new();
        write_csv(&record, &mut csv).unwrap();
        prop_assert_eq!(&read_csv(&csv[..]).unwrap(), &record);
    }
}
