use qsmooth::algebra::BlochVector;
use qsmooth::experiment::{combination_index, run_record};
use qsmooth::rng::record_stream;
use qsmooth::smoothing::{smooth_record, CandidateSource};
use qsmooth::unravelling::{DetectorKind, SimConfig, Unravelling};

fn short(observed: DetectorKind, unobserved: DetectorKind) -> SimConfig {
    SimConfig {
        observed,
        unobserved,
        t_final: 3.0,
        ss_interval: (1.0, 2.0),
        n_observed: 4,
        n_candidates: 300,
        seed: 11,
        ..SimConfig::default()
    }
}

#[test]
fn true_unobserved_record_reproduces_true_state() {
    for (o, u) in [(DetectorKind::N, DetectorKind::Y), (DetectorKind::X, DetectorKind::N), (DetectorKind::Y, DetectorKind::X)] {
        let config = short(o, u);
        let model = Unravelling::new(&config).unwrap();
        let run = model.generate_run(&mut record_stream(config.seed, combination_index(o, u), 0)).unwrap();
        let single = [run.unobserved.clone()];
        let smoothed = smooth_record(&model, &run.observed, CandidateSource::Fixed(&single)).unwrap();
        for (p, truth) in smoothed.points.iter().zip(&run.true_states) {
            assert!(p.smoothed.distance(truth) < 1e-12, "{o}{u} t={}", p.t);
            assert!(p.filtered.distance(truth) < 1e-12);
        }
    }
}

#[test]
fn unmonitored_hidden_channel_leaves_nothing_to_smooth() {
    // with γ_u = 0 every candidate follows the same map, so all weights agree
    let config = SimConfig {
        gamma_o: 1.0,
        gamma_u: 0.0,
        ..short(DetectorKind::Y, DetectorKind::N)
    };
    let model = Unravelling::new(&config).unwrap();
    let out = run_record(&model, 7, 0).unwrap();
    for (p, direct) in out.smoothed.points.iter().zip(&out.direct_filter) {
        assert!(p.smoothed.distance(&p.filtered) < 1e-12);
        assert!(p.filtered.distance(direct) < 1e-10);
        assert!((p.ess - config.n_candidates as f64).abs() < 1e-6);
    }
}

#[test]
fn candidate_filter_matches_direct_filter() {
    for (o, u) in [(DetectorKind::N, DetectorKind::N), (DetectorKind::Y, DetectorKind::N), (DetectorKind::X, DetectorKind::Y)] {
        let config = SimConfig {
            n_candidates: 1000,
            ..short(o, u)
        };
        let model = Unravelling::new(&config).unwrap();
        let out = run_record(&model, combination_index(o, u), 1).unwrap();
        let worst = out
            .smoothed
            .points
            .iter()
            .zip(&out.direct_filter)
            .map(|(p, d)| 0.5 * p.filtered.distance(d))
            .fold(0.0, f64::max);
        assert!(worst < 5e-2, "{o}{u}: trace distance {worst}");
    }
}

#[test]
fn x_component_stays_zero_without_x_measurements() {
    use DetectorKind::{N, Y};
    for (o, u) in [(N, N), (N, Y), (Y, N), (Y, Y)] {
        let config = short(o, u);
        let model = Unravelling::new(&config).unwrap();
        let out = run_record(&model, combination_index(o, u), 0).unwrap();
        for p in &out.smoothed.points {
            assert!(p.smoothed.x.abs() < 5e-3 && p.filtered.x.abs() < 5e-3, "{o}{u} t={}", p.t);
        }
    }
}

#[test]
fn smoothing_error_scales_inversely_with_candidates() {
    let mean_variance = |n_candidates: usize| {
        let config = SimConfig {
            n_candidates,
            ..short(DetectorKind::Y, DetectorKind::Y)
        };
        let model = Unravelling::new(&config).unwrap();
        let mut total = 0.0;
        let mut count = 0.0;
        for run in 0..3 {
            let out = run_record(&model, 8, run).unwrap();
            for p in &out.smoothed.points[50..] {
                total += p.covariance.trace();
                count += 1.0;
            }
        }
        total / count
    };
    let ratio = mean_variance(500) / mean_variance(1000);
    assert!((1.5..2.6).contains(&ratio), "ratio {ratio}");
}

#[test]
fn same_seed_same_output() {
    let config = short(DetectorKind::X, DetectorKind::N);
    let model = Unravelling::new(&config).unwrap();
    let a = run_record(&model, 1, 2).unwrap();
    let b = run_record(&model, 1, 2).unwrap();
    assert_eq!(a.smoothed.points, b.smoothed.points);
    let c = run_record(&model, 1, 3).unwrap();
    assert_ne!(a.record.observed, c.record.observed);
    let origin = a.smoothed.points[0].smoothed;
    assert_eq!(origin, BlochVector::new(0.0, 0.0, 1.0));
}

mod duality {
    use nalgebra::{Complex, Matrix2};
    use qsmooth::algebra::{to_pauli, BlochVector, DensityMatrix};
    use qsmooth::smoothing::retrofilter;
    use qsmooth::unravelling::{DetectorConfig, DetectorKind, Record, SimConfig, Unravelling};

    type M2 = Matrix2<Complex<f64>>;

    fn c(x: f64) -> Complex<f64> {
        Complex::new(x, 0.0)
    }

    /// Probability of the observed clicks after step `from`, starting in `rho`,
    /// summed over every unobserved continuation.
    fn future_probability(config: &SimConfig, observed: &[bool], from: usize, rho: M2) -> f64 {
        let dt = config.dt;
        let lower = M2::new(c(0.0), c(0.0), c(1.0), c(0.0));
        let (s, co) = (0.5 * config.omega * dt).sin_cos();
        let drive = M2::new(c(co), Complex::new(0.0, -s), Complex::new(0.0, -s), c(co));
        let kraus = |rate: f64, click: bool| {
            let l = lower * c(rate.sqrt());
            if click {
                l * c(dt.sqrt())
            } else {
                M2::identity() - l.adjoint() * l * c(0.5 * dt)
            }
        };
        let rest = observed.len() - from;
        (0..1usize << rest)
            .map(|path| {
                let mut r = rho;
                for (i, &o) in observed[from..].iter().enumerate() {
                    let k = kraus(config.gamma_o, o) * kraus(config.gamma_u, path >> i & 1 == 1) * drive;
                    r = k * r * k.adjoint();
                }
                r.trace().re
            })
            .sum()
    }

    #[test]
    fn effects_reproduce_future_likelihood_ratios() {
        let config = SimConfig {
            dt: 0.02,
            t_final: 0.08,
            store_every: 1,
            ss_interval: (0.0, 0.08),
            ..SimConfig::default()
        };
        let model = Unravelling::new(&config).unwrap();
        let states = [BlochVector::new(0.3, -0.2, 0.5), BlochVector::new(0.0, 0.6, -0.7)];
        for obs in [[false, true, false, false], [true, false, false, true], [false; 4]] {
            let det = DetectorConfig::new(DetectorKind::N, config.gamma_o).unwrap();
            let record = Record::jumps(det, config.dt, obs.to_vec()).unwrap();
            let effects = retrofilter(&model, &record).unwrap();
            for k in 0..=obs.len() {
                let e = effects.coords[k];
                let rhos: Vec<DensityMatrix> = states.iter().map(|b| DensityMatrix::from_bloch(*b).unwrap()).collect();
                let lik: Vec<f64> = rhos.iter().map(|r| 0.5 * e.dot(&to_pauli(r.entries()))).collect();
                let p: Vec<f64> = rhos
                    .iter()
                    .map(|r| future_probability(&config, &obs, k, *r.entries()))
                    .collect();
                assert!((lik[0] / lik[1] - p[0] / p[1]).abs() < 1e-12, "{obs:?} k={k}");
            }
        }
    }
}
