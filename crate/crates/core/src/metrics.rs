//! Purity-recovery figures of merit over ensembles of observed records.
//!
//! All estimators are paired: every observed record contributes its filtered,
//! smoothed and true purities at the same times, so correlations between them
//! enter the error bars.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::algebra::{BlochVector, DensityMatrix};
use crate::error::{Error, Result};
use crate::unravelling::DetectorKind;

/// Time points where `P̄_T − P̄_F` falls below this are masked from `R_R`.
pub const DEFAULT_DENOMINATOR_GUARD: f64 = 1e-3;

/// Purity of the true state's projection on the y-z plane, `(1 + y² + z²)/2`.
pub fn yz_projection_purity(rho: &DensityMatrix) -> f64 {
    let v = rho.pauli();
    let b = BlochVector::from_pauli(&v);
    0.5 * (1.0 + b.y * b.y + b.z * b.z)
}

pub fn yz_projection_purity_bloch(b: &BlochVector) -> f64 {
    0.5 * (1.0 + b.y * b.y + b.z * b.z)
}

/// Which true-state purity enters the denominator of the relative recovery.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrueReference {
    /// `P_T = 1`.
    Unity,
    /// Purity of the true state projected on the y-z plane.
    YzProjection,
}

impl TrueReference {
    /// YZ projection for dNdX and dYdX, unity otherwise.
    pub fn default_for(observed: DetectorKind, unobserved: DetectorKind) -> Self {
        match (observed, unobserved) {
            (DetectorKind::N | DetectorKind::Y, DetectorKind::X) => TrueReference::YzProjection,
            _ => TrueReference::Unity,
        }
    }

    pub fn purity(self, true_state: &BlochVector) -> f64 {
        match self {
            TrueReference::Unity => 1.0,
            TrueReference::YzProjection => yz_projection_purity_bloch(true_state),
        }
    }
}

/// Per-record purities on the common time grid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RecordPurities {
    pub filtered: Vec<f64>,
    pub smoothed: Vec<f64>,
    /// Monte Carlo variance `(δP_S)²` of the smoothed purity.
    pub smoothed_variance: Vec<f64>,
    pub reference: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PurityCurve {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    /// Variance of the mean.
    pub votm: Vec<f64>,
    pub n: usize,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Unweighted mean over records with variance of the mean; when per-record
/// variances are given their average over `N` is added.
pub fn average_purity(times: &[f64], samples: &[&[f64]], variances: Option<&[&[f64]]>) -> Result<PurityCurve> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientEnsemble(format!("{n} records, need at least 2")));
    }
    if samples.iter().any(|s| s.len() != times.len()) || variances.is_some_and(|v| v.len() != n || v.iter().any(|s| s.len() != times.len())) {
        return Err(Error::RecordMismatch("purity series of different lengths".into()));
    }
    let nf = n as f64;
    let mut m = Vec::with_capacity(times.len());
    let mut votm = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        let mk = mean(samples.iter().map(|s| s[k]));
        let mut var = mean(samples.iter().map(|s| (s[k] - mk).powi(2))) / nf;
        if let Some(v) = variances {
            var += mean(v.iter().map(|s| s[k])) / nf;
        }
        m.push(mk);
        votm.push(var);
    }
    Ok(PurityCurve {
        times: times.to_vec(),
        mean: m,
        votm,
        n,
    })
}

/// Inputs of the delta-method variance of `f = (a − b)/(c − b)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RatioMoments {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub var_a: f64,
    pub var_b: f64,
    pub var_c: f64,
    pub cov_ab: f64,
    pub cov_ac: f64,
    pub cov_bc: f64,
}

impl RatioMoments {
    pub fn ratio(&self) -> f64 {
        (self.a - self.b) / (self.c - self.b)
    }

    /// Full first-order propagation including the three covariances.
    pub fn ratio_variance(&self) -> f64 {
        let RatioMoments {
            a,
            b,
            c,
            var_a,
            var_b,
            var_c,
            cov_ab,
            cov_ac,
            cov_bc,
        } = *self;
        let d = c - b;
        var_a / d.powi(2) + (a - c).powi(2) / d.powi(4) * var_b + (b - a).powi(2) / d.powi(4) * var_c
            + 2.0 * (a - c) / d.powi(3) * cov_ab
            + 2.0 * (b - a) / d.powi(3) * cov_ac
            + 2.0 * (a - c) * (b - a) / d.powi(4) * cov_bc
    }
}

/// Recovery curves of one combination.
#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryCurves {
    pub times: Vec<f64>,
    pub filtered: PurityCurve,
    pub smoothed: PurityCurve,
    pub reference: PurityCurve,
    pub r_a: Vec<f64>,
    pub var_r_a: Vec<f64>,
    /// NaN where the denominator guard masks the point.
    pub r_r: Vec<f64>,
    pub var_r_r: Vec<f64>,
}

fn check_records(times: &[f64], records: &[RecordPurities]) -> Result<()> {
    if records.len() < 2 {
        return Err(Error::InsufficientEnsemble(format!("{} records, need at least 2", records.len())));
    }
    for r in records {
        let n = times.len();
        if r.filtered.len() != n || r.smoothed.len() != n || r.smoothed_variance.len() != n || r.reference.len() != n {
            return Err(Error::RecordMismatch("per-record series do not match the time grid".into()));
        }
    }
    Ok(())
}

/// `R_A = P̄_S − P̄_F` with the paired variance
/// `E[(P_S − P_F − R_A)²]/N + E[(δP_S)²]/N`.
pub fn recovery_curve(times: &[f64], records: &[RecordPurities]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_records(times, records)?;
    let n = records.len() as f64;
    let mut r = Vec::with_capacity(times.len());
    let mut var = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        let ra = mean(records.iter().map(|x| x.smoothed[k] - x.filtered[k]));
        let spread = mean(records.iter().map(|x| (x.smoothed[k] - x.filtered[k] - ra).powi(2)));
        let mc = mean(records.iter().map(|x| x.smoothed_variance[k]));
        r.push(ra);
        var.push((spread + mc) / n);
    }
    Ok((r, var))
}

/// Moments of `(P̄_S, P̄_F, P̄_T)` at time index `k`. Covariances are those of
/// the means, i.e. divided by `N` like the variances.
pub fn ratio_moments(records: &[RecordPurities], k: usize) -> RatioMoments {
    let n = records.len() as f64;
    let a = mean(records.iter().map(|x| x.smoothed[k]));
    let b = mean(records.iter().map(|x| x.filtered[k]));
    let c = mean(records.iter().map(|x| x.reference[k]));
    let cov = |f: &dyn Fn(&RecordPurities) -> f64, g: &dyn Fn(&RecordPurities) -> f64, mf: f64, mg: f64| {
        mean(records.iter().map(|x| (f(x) - mf) * (g(x) - mg))) / n
    };
    let s = |x: &RecordPurities| x.smoothed[k];
    let f = |x: &RecordPurities| x.filtered[k];
    let t = |x: &RecordPurities| x.reference[k];
    RatioMoments {
        a,
        b,
        c,
        var_a: cov(&s, &s, a, a) + mean(records.iter().map(|x| x.smoothed_variance[k])) / n,
        var_b: cov(&f, &f, b, b),
        var_c: cov(&t, &t, c, c),
        cov_ab: cov(&s, &f, a, b),
        cov_ac: cov(&s, &t, a, c),
        cov_bc: cov(&f, &t, b, c),
    }
}

/// `R_R = (P̄_S − P̄_F)/(P̄_T − P̄_F)` with full delta-method variance;
/// points with `P̄_T − P̄_F < guard` are NaN.
pub fn relative_recovery_curve(times: &[f64], records: &[RecordPurities], guard: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_records(times, records)?;
    let mut r = Vec::with_capacity(times.len());
    let mut var = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        let m = ratio_moments(records, k);
        if m.c - m.b < guard {
            r.push(f64::NAN);
            var.push(f64::NAN);
        } else {
            r.push(m.ratio());
            var.push(m.ratio_variance().max(0.0));
        }
    }
    Ok((r, var))
}

pub fn recovery_curves(times: &[f64], records: &[RecordPurities], guard: f64) -> Result<RecoveryCurves> {
    check_records(times, records)?;
    let col = |f: fn(&RecordPurities) -> &Vec<f64>| records.iter().map(|r| f(r).as_slice()).collect::<Vec<_>>();
    let filtered = average_purity(times, &col(|r| &r.filtered), None)?;
    let smoothed = average_purity(times, &col(|r| &r.smoothed), Some(&col(|r| &r.smoothed_variance)))?;
    let reference = average_purity(times, &col(|r| &r.reference), None)?;
    let (r_a, var_r_a) = recovery_curve(times, records)?;
    let (r_r, var_r_r) = relative_recovery_curve(times, records, guard)?;
    Ok(RecoveryCurves {
        times: times.to_vec(),
        filtered,
        smoothed,
        reference,
        r_a,
        var_r_a,
        r_r,
        var_r_r,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteadyAverage {
    pub mean: f64,
    pub variance: f64,
    /// Stored time points that entered the average.
    pub points: usize,
    /// `N_ss = |𝔗_ss| / t_corr + 1`.
    pub effective_samples: f64,
}

impl SteadyAverage {
    pub fn error(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Time average over `interval` with
/// `(δR_ss)² = [Σ(R_t − mean)² + Σ(δR_t)²] / (N_ss · n)`, where `n` counts
/// the time points used. NaN (masked) points are skipped.
pub fn steady_average(times: &[f64], values: &[f64], variances: &[f64], interval: (f64, f64), t_corr: f64) -> Result<SteadyAverage> {
    let (lo, hi) = interval;
    let eps = 1e-9 * hi.abs().max(1.0);
    let picked: Vec<(f64, f64)> = times
        .iter()
        .zip(values.iter().zip(variances))
        .filter(|(t, (v, d))| **t >= lo - eps && **t <= hi + eps && v.is_finite() && d.is_finite())
        .map(|(_, (&v, &d))| (v, d))
        .collect();
    if picked.is_empty() || !(t_corr > 0.0) {
        return Err(Error::EmptyInterval(lo, hi));
    }
    let n = picked.len() as f64;
    let m = mean(picked.iter().map(|p| p.0));
    let fluct: f64 = picked.iter().map(|p| (p.0 - m).powi(2)).sum();
    let per_time: f64 = picked.iter().map(|p| p.1).sum();
    let n_ss = (hi - lo) / t_corr + 1.0;
    Ok(SteadyAverage {
        mean: m,
        variance: (fluct + per_time) / (n_ss * n),
        points: picked.len(),
        effective_samples: n_ss,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryReport {
    pub label: String,
    pub reference: TrueReference,
    pub curves: RecoveryCurves,
    pub r_a_ss: SteadyAverage,
    pub r_r_ss: SteadyAverage,
}

impl RecoveryReport {
    pub fn new(
        label: impl Into<String>,
        reference: TrueReference,
        times: &[f64],
        records: &[RecordPurities],
        interval: (f64, f64),
        t_corr: f64,
        guard: f64,
    ) -> Result<Self> {
        let curves = recovery_curves(times, records, guard)?;
        let r_a_ss = steady_average(times, &curves.r_a, &curves.var_r_a, interval, t_corr)?;
        let r_r_ss = steady_average(times, &curves.r_r, &curves.var_r_r, interval, t_corr)?;
        Ok(Self {
            label: label.into(),
            reference,
            curves,
            r_a_ss,
            r_r_ss,
        })
    }

    /// Columns `t, R_A, dR_A, R_R, dR_R, PbarF, dPbarF, PbarS, dPbarS, PbarT, dPbarT`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let c = &self.curves;
        writeln!(w, "t,R_A,dR_A,R_R,dR_R,PbarF,dPbarF,PbarS,dPbarS,PbarT,dPbarT")?;
        for k in 0..c.times.len() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                c.times[k],
                c.r_a[k],
                c.var_r_a[k].sqrt(),
                c.r_r[k],
                c.var_r_r[k].sqrt(),
                c.filtered.mean[k],
                c.filtered.votm[k].sqrt(),
                c.smoothed.mean[k],
                c.smoothed.votm[k].sqrt(),
                c.reference.mean[k],
                c.reference.votm[k].sqrt()
            )?;
        }
        w.flush()?;
        Ok(())
    }
}
