use qsmooth::metrics::{
    average_purity, ratio_moments, recovery_curve, relative_recovery_curve, steady_average, RatioMoments, RecordPurities,
};
use qsmooth::Error;

fn record(f: &[f64], s: &[f64], t: &[f64]) -> RecordPurities {
    RecordPurities {
        filtered: f.to_vec(),
        smoothed: s.to_vec(),
        smoothed_variance: vec![0.0; f.len()],
        reference: t.to_vec(),
    }
}

#[test]
fn ratio_variance_reduces_without_covariances() {
    let m = RatioMoments {
        a: 0.7,
        b: 0.55,
        c: 0.95,
        var_a: 2e-4,
        var_b: 1e-4,
        var_c: 3e-5,
        ..Default::default()
    };
    let (num, den) = (m.a - m.b, m.c - m.b);
    // independent-sum form: var(num)/den² + num²·var(den)/den⁴
    let var_num = m.var_a + m.var_b;
    let var_den = m.var_c + m.var_b;
    let naive = var_num / den.powi(2) + num.powi(2) * var_den / den.powi(4);
    // with cov_ab = cov_bc = 0 the shared b still correlates numerator and denominator
    let cross = 2.0 * num / den.powi(3) * m.var_b;
    assert!((m.ratio_variance() - (naive - cross)).abs() < 1e-15);
}

#[test]
fn pairing_removes_shared_fluctuations() {
    // smoothed purity tracks the filtered one record by record
    let f = [0.5, 0.7, 0.6, 0.8, 0.55, 0.65];
    let records: Vec<_> = f.iter().map(|&x| record(&[x], &[x + 0.02], &[1.0])).collect();
    let (r, var) = recovery_curve(&[0.0], &records).unwrap();
    assert!((r[0] - 0.02).abs() < 1e-15);
    assert!(var[0] < 1e-30);
    let unpaired = average_purity(&[0.0], &records.iter().map(|r| r.filtered.as_slice()).collect::<Vec<_>>(), None)
        .unwrap()
        .votm[0]
        * 2.0;
    assert!(unpaired > 1e-3);
}

#[test]
fn masked_points_leave_steady_average() {
    let records = vec![
        record(&[0.5, 0.9995], &[0.6, 0.9996], &[1.0, 1.0]),
        record(&[0.4, 0.9995], &[0.5, 0.9996], &[1.0, 1.0]),
    ];
    let (r, var) = relative_recovery_curve(&[0.0, 1.0], &records, 1e-3).unwrap();
    assert!(r[0].is_finite() && r[1].is_nan() && var[1].is_nan());
    let ss = steady_average(&[0.0, 1.0], &r, &var, (0.0, 1.0), 1.0).unwrap();
    assert_eq!(ss.points, 1);
    assert_eq!(ss.effective_samples, 2.0);
    let m = ratio_moments(&records, 0);
    assert!((ss.mean - m.ratio()).abs() < 1e-15);
}

#[test]
fn white_noise_steady_variance() {
    // constant curve with known per-point variance: only the Σδ² term survives
    let times: Vec<f64> = (0..=15).map(|i| 4.5 + 0.1 * i as f64).collect();
    let values = vec![0.03; times.len()];
    let variances = vec![4e-6; times.len()];
    let ss = steady_average(&times, &values, &variances, (4.5, 6.0), 1.0).unwrap();
    assert_eq!(ss.points, 16);
    assert!((ss.variance - 4e-6 / 2.5).abs() < 1e-18);
}

#[test]
fn degenerate_inputs_rejected() {
    let one = vec![record(&[0.5], &[0.6], &[1.0])];
    assert!(matches!(recovery_curve(&[0.0], &one), Err(Error::InsufficientEnsemble(_))));
    assert!(matches!(
        steady_average(&[0.0], &[1.0], &[0.0], (2.0, 3.0), 1.0),
        Err(Error::EmptyInterval(..))
    ));
}
