use qsmooth::experiment::combination_index;
use qsmooth::rng::record_stream;
use qsmooth::unravelling::{DetectorKind, SimConfig, Unravelling};

/// Largest purity loss of the true state over a few runs.
fn purity_loss(observed: DetectorKind, unobserved: DetectorKind, dt: f64) -> f64 {
    let config = SimConfig {
        observed,
        unobserved,
        dt,
        t_final: 4.0,
        ..SimConfig::default()
    };
    let model = Unravelling::new(&config).unwrap();
    let combo = combination_index(observed, unobserved);
    (0..4)
        .map(|run| {
            let r = model.generate_run(&mut record_stream(9, combo, run)).unwrap();
            r.true_states.iter().map(|b| 1.0 - b.purity()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

#[test]
fn fully_monitored_state_stays_nearly_pure() {
    for (o, u) in [(DetectorKind::N, DetectorKind::N), (DetectorKind::X, DetectorKind::Y), (DetectorKind::Y, DetectorKind::N)] {
        let coarse = purity_loss(o, u, 2e-3);
        let fine = purity_loss(o, u, 1e-3);
        assert!(fine < 2e-2, "{o}{u}: loss {fine}");
        // homodyne Euler steps lose purity at O(dt); jump-only records keep it exactly
        assert!(fine <= coarse * 0.8 || fine < 1e-12, "{o}{u}: {coarse} -> {fine}");
    }
}

#[test]
fn records_have_expected_click_statistics() {
    // the steady click rate of one channel is γ_o · 25/51 for Ω = 5γ
    let config = SimConfig {
        t_final: 8.0,
        ..SimConfig::default()
    };
    let model = Unravelling::new(&config).unwrap();
    let mut clicks = 0usize;
    let runs = 200;
    let late = (2.0 / config.dt) as usize;
    for run in 0..runs {
        let r = model.generate_run(&mut record_stream(3, 0, run)).unwrap();
        let qsmooth::unravelling::Increments::Jump(v) = &r.observed.increments else { unreachable!() };
        clicks += v[late..].iter().filter(|c| **c).count();
    }
    let window = config.t_final - 2.0;
    let rate = clicks as f64 / (runs as f64 * window);
    let expected = 0.5 * 25.0 / 51.0;
    let sigma = (expected / (runs as f64 * window)).sqrt();
    assert!((rate - expected).abs() < 4.0 * sigma, "rate {rate}, expected {expected} ± {sigma}");
}
