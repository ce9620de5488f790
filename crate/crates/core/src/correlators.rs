//! Steady-state two- and three-time correlators between measurement records,
//! their vanishing pattern, and the predicted smoothing-power level.
//!
//! With `𝒦_N ρ = ĉρĉ†` and `𝒦_Q ρ = ĉ_Φ ρ + ρ ĉ_Φ†`, the normalized correlators
//! (all powers of dt cancelled) are
//!
//! ```text
//! C2[K,M](τ)    = (Tr[𝒦_K e^{Lτ} 𝒦_M ρ] − Tr[𝒦_K ρ] Tr[𝒦_M ρ]) / (n_K n_M)
//! C3[K,M](τ, 𝒯) = (E[K(𝒯) M(τ) K(0)] − Tr[𝒦_M ρ] Tr[𝒦_K e^{L𝒯} 𝒦_K ρ]) / (n_K² n_M)
//! ```
//!
//! with `ρ = ρ_ss`, `n_N = √Tr[ĉ†ĉ ρ]` and `n_Q = 1`. The three-time moment is
//! time ordered: `Tr[𝒦_K e^{L(𝒯−τ)} 𝒦_M e^{Lτ} 𝒦_K ρ]` for `τ < 𝒯` and
//! `Tr[𝒦_M e^{L(τ−𝒯)} 𝒦_K e^{L𝒯} 𝒦_K ρ]` for `τ > 𝒯`. Coincident times are
//! excluded.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::algebra::{qubit_liouvillian, steady_state, PauliCoords, PauliMap, Superoperator};
use crate::error::{Error, Result};
use crate::unravelling::{DetectorConfig, DetectorKind};

/// Grid maxima below this count as vanishing.
pub const DEFAULT_VANISH_THRESHOLD: f64 = 1e-8;
pub const DEFAULT_GRID_POINTS: usize = 300;

/// Relative distance from `𝒯` below which `τ` counts as coincident.
const COINCIDENCE_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct RecordSuperoperator {
    pub detector: DetectorConfig,
    pub matrix: Superoperator,
    pauli: PauliMap,
}

pub fn record_superoperator(kind: DetectorKind, rate: f64, phase: f64) -> Result<RecordSuperoperator> {
    if !(rate >= 0.0) {
        return Err(Error::NegativeRate(rate));
    }
    let detector = DetectorConfig { kind, rate, phase };
    let c = detector.lindblad_operator();
    let matrix = match kind {
        DetectorKind::N => Superoperator::sandwich(&c),
        DetectorKind::X | DetectorKind::Y => Superoperator::left(&c).add(&Superoperator::right(&c.adjoint())),
    };
    Ok(RecordSuperoperator {
        detector,
        pauli: matrix.to_pauli_map(),
        matrix,
    })
}

impl RecordSuperoperator {
    pub fn apply(&self, v: &PauliCoords) -> PauliCoords {
        self.pauli.apply(v)
    }
}

/// The steady state, its generator and the three record superoperators.
#[derive(Clone, Debug)]
pub struct CorrelatorModel {
    pub omega: f64,
    pub gamma: f64,
    generator: Superoperator,
    steady: PauliCoords,
    records: [RecordSuperoperator; 3],
    norms: [f64; 3],
}

fn slot(kind: DetectorKind) -> usize {
    kind.code() as usize
}

impl CorrelatorModel {
    /// Every record monitors its own channel with rate `record_rate`.
    pub fn new(omega: f64, gamma: f64, record_rate: f64) -> Result<Self> {
        let generator = qubit_liouvillian(omega, gamma)?;
        let steady = steady_state(&generator)?.pauli();
        let rec = |k: DetectorKind| record_superoperator(k, record_rate, k.phase());
        let records = [rec(DetectorKind::N)?, rec(DetectorKind::X)?, rec(DetectorKind::Y)?];
        let click_rate = records[0].apply(&steady)[0];
        let norms = [click_rate.sqrt(), 1.0, 1.0];
        Ok(Self {
            omega,
            gamma,
            generator,
            steady,
            records,
            norms,
        })
    }

    pub fn rabi_period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    pub fn normalization(&self, kind: DetectorKind) -> f64 {
        self.norms[slot(kind)]
    }

    pub fn record(&self, kind: DetectorKind) -> &RecordSuperoperator {
        &self.records[slot(kind)]
    }

    fn evolve(&self, tau: f64) -> PauliMap {
        self.generator.exp(tau).to_pauli_map()
    }

    fn mean(&self, kind: DetectorKind) -> f64 {
        self.record(kind).apply(&self.steady)[0]
    }

    /// `C2[K,M](τ)`, with `K` at the later time.
    pub fn c2(&self, k: DetectorKind, m: DetectorKind, tau: f64) -> Result<f64> {
        if !(tau > 0.0) {
            return Err(Error::InvalidDelay(format!("two-time correlator needs τ > 0, got {tau}")));
        }
        Ok(self.c2_with(k, m, &self.evolve(tau)))
    }

    fn c2_with(&self, k: DetectorKind, m: DetectorKind, e_tau: &PauliMap) -> f64 {
        let joint = self.record(k).apply(&e_tau.apply(&self.record(m).apply(&self.steady)))[0];
        (joint - self.mean(k) * self.mean(m)) / (self.normalization(k) * self.normalization(m))
    }

    /// `C3[K,M](τ, 𝒯)`; `K` appears twice, at times 0 and `𝒯`, and `M` at `τ`.
    pub fn c3(&self, k: DetectorKind, m: DetectorKind, tau: f64, big_t: f64) -> Result<f64> {
        if !(tau > 0.0) || !(big_t > 0.0) || (tau - big_t).abs() <= COINCIDENCE_TOL * big_t {
            return Err(Error::InvalidDelay(format!(
                "three-time correlator needs distinct positive times, got τ = {tau}, 𝒯 = {big_t}"
            )));
        }
        let kk = self.record(k);
        let mm = self.record(m);
        let first = kk.apply(&self.steady);
        let moment = if tau < big_t {
            let v = mm.apply(&self.evolve(tau).apply(&first));
            kk.apply(&self.evolve(big_t - tau).apply(&v))[0]
        } else {
            let v = kk.apply(&self.evolve(big_t).apply(&first));
            mm.apply(&self.evolve(tau - big_t).apply(&v))[0]
        };
        let kk_pair = kk.apply(&self.evolve(big_t).apply(&first))[0];
        let n = self.normalization(k).powi(2) * self.normalization(m);
        Ok((moment - self.mean(m) * kk_pair) / n)
    }
}

/// `τ_j = j · 3T_Ω / n` for `j = 1..=n`, and `𝒯 = T_Ω`.
pub fn default_grid(omega: f64, points: usize) -> (Vec<f64>, f64) {
    let period = 2.0 * PI / omega;
    let step = 3.0 * period / points as f64;
    ((1..=points).map(|j| j as f64 * step).collect(), period)
}

fn coincident(tau: f64, big_t: f64) -> bool {
    (tau - big_t).abs() <= COINCIDENCE_TOL * big_t
}

/// Correlators of one observed/unobserved pair on a τ grid.
#[derive(Clone, Debug)]
pub struct CorrelatorReport {
    pub observed: DetectorKind,
    pub unobserved: DetectorKind,
    pub taus: Vec<f64>,
    pub big_t: f64,
    pub c2: Vec<f64>,
    /// `C3[dO, dU]`; NaN at τ = 𝒯.
    pub c3_observed_twice: Vec<f64>,
    /// `C3[dU, dO]`; NaN at τ = 𝒯.
    pub c3_unobserved_twice: Vec<f64>,
}

impl CorrelatorReport {
    pub fn compute(model: &CorrelatorModel, observed: DetectorKind, unobserved: DetectorKind, taus: &[f64], big_t: f64) -> Result<Self> {
        let mut c2 = Vec::with_capacity(taus.len());
        let mut c3o = Vec::with_capacity(taus.len());
        let mut c3u = Vec::with_capacity(taus.len());
        for &tau in taus {
            c2.push(model.c2(observed, unobserved, tau)?);
            if coincident(tau, big_t) {
                c3o.push(f64::NAN);
                c3u.push(f64::NAN);
            } else {
                c3o.push(model.c3(observed, unobserved, tau, big_t)?);
                c3u.push(model.c3(unobserved, observed, tau, big_t)?);
            }
        }
        Ok(Self {
            observed,
            unobserved,
            taus: taus.to_vec(),
            big_t,
            c2,
            c3_observed_twice: c3o,
            c3_unobserved_twice: c3u,
        })
    }

    pub fn label(&self) -> String {
        format!("{}{}", self.observed, self.unobserved)
    }

    pub fn flags(&self, threshold: f64) -> VanishFlags {
        let big = |v: &[f64]| max_abs(v) >= threshold;
        VanishFlags {
            two_time: big(&self.c2),
            observed_twice: big(&self.c3_observed_twice),
            unobserved_twice: big(&self.c3_unobserved_twice),
        }
    }

    /// Rows `pair, tau_over_T_Omega, C2, C3_O_twice, C3_U_twice`; `period` is `T_Ω`.
    pub fn write_rows<W: Write>(&self, period: f64, w: &mut W) -> Result<()> {
        for (j, tau) in self.taus.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{}",
                self.label(),
                tau / period,
                self.c2[j],
                self.c3_observed_twice[j],
                self.c3_unobserved_twice[j]
            )?;
        }
        Ok(())
    }
}

pub const CSV_HEADER: &str = "pair,tau_over_T_Omega,C2,C3_O_twice,C3_U_twice";

/// Largest finite magnitude (NaN entries are skipped).
pub fn max_abs(values: &[f64]) -> f64 {
    values.iter().filter(|v| v.is_finite()).fold(0.0, |m, v| m.max(v.abs()))
}

/// Non-vanishing flags (`true` = the correlator is non-zero somewhere on the grid).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VanishFlags {
    /// dO-dU.
    pub two_time: bool,
    /// dO-dU-dO.
    pub observed_twice: bool,
    /// dU-dO-dU.
    pub unobserved_twice: bool,
}

pub fn classify_pair(
    model: &CorrelatorModel,
    observed: DetectorKind,
    unobserved: DetectorKind,
    taus: &[f64],
    big_t: f64,
    threshold: f64,
) -> Result<VanishFlags> {
    Ok(CorrelatorReport::compute(model, observed, unobserved, taus, big_t)?.flags(threshold))
}

/// Smoothing-power level from the vanishing pattern; `None` for patterns
/// outside the four that occur for this model.
pub fn predict_level(flags: VanishFlags) -> Option<u8> {
    match (flags.two_time, flags.observed_twice, flags.unobserved_twice) {
        (true, true, true) => Some(4),
        (true, false, false) => Some(3),
        (false, true, false) => Some(2),
        (false, false, true) => Some(1),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelPrediction {
    #[serde(rename = "dO")]
    pub observed: DetectorKind,
    #[serde(rename = "dU")]
    pub unobserved: DetectorKind,
    pub flags: VanishFlags,
    pub level: Option<u8>,
}

/// Levels for all nine combinations in the order dNdN, dNdX, …, dYdY.
pub fn predict_all(model: &CorrelatorModel, taus: &[f64], big_t: f64, threshold: f64) -> Result<Vec<LevelPrediction>> {
    let mut out = Vec::with_capacity(9);
    for o in DetectorKind::ALL {
        for u in DetectorKind::ALL {
            let flags = classify_pair(model, o, u, taus, big_t, threshold)?;
            out.push(LevelPrediction {
                observed: o,
                unobserved: u,
                flags,
                level: predict_level(flags),
            });
        }
    }
    Ok(out)
}
