//! Measurement operations for photon counting and homodyne detection, record
//! sampling, and the one-step filtering maps.
//!
//! All maps are first-order (Euler / Euler–Maruyama) linear maps on the
//! unnormalized state. A step's result is renormalized by the caller, which
//! accumulates the log-trace where likelihoods matter.
//!
//! Measurement maps are "raw": multiplied by the ostensible probability of the
//! outcome they give the true outcome probability. For a jump channel the raw
//! maps are `ρ ↦ dt·cρc†` (click) and `ρ ↦ M₀ρM₀†` (no click) and the
//! ostensible law is Bernoulli(λ dt); for a homodyne channel the raw map is
//! `ρ ↦ M_Q ρ M_Q†` and the ostensible law is the zero-mean Gaussian of variance
//! `dt`, already folded into the raw map.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::algebra::{
    self, qubit_liouvillian, sigma_minus, sigma_x, steady_state, to_pauli, BlochVector, DensityMatrix,
    EffectOperator, Operator, PauliCoords, PauliMap, Role, Superoperator, C64,
};
use crate::error::{Error, Result};
use crate::rng::MAX_CANDIDATES;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DetectorKind {
    /// Photon counting.
    #[serde(rename = "dN")]
    N,
    /// Homodyne detection at local-oscillator phase 0.
    #[serde(rename = "dX")]
    X,
    /// Homodyne detection at local-oscillator phase π/2.
    #[serde(rename = "dY")]
    Y,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 3] = [DetectorKind::N, DetectorKind::X, DetectorKind::Y];

    pub fn is_jump(self) -> bool {
        self == DetectorKind::N
    }

    pub fn phase(self) -> f64 {
        match self {
            DetectorKind::N | DetectorKind::X => 0.0,
            DetectorKind::Y => FRAC_PI_2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DetectorKind::N => "dN",
            DetectorKind::X => "dX",
            DetectorKind::Y => "dY",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            DetectorKind::N => 0,
            DetectorKind::X => 1,
            DetectorKind::Y => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DetectorKind::N),
            1 => Some(DetectorKind::X),
            2 => Some(DetectorKind::Y),
            _ => None,
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().trim_start_matches('d') {
            "N" => Ok(DetectorKind::N),
            "X" => Ok(DetectorKind::X),
            "Y" => Ok(DetectorKind::Y),
            _ => Err(Error::Config(format!("unknown detector kind {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub kind: DetectorKind,
    pub rate: f64,
    pub phase: f64,
}

impl DetectorConfig {
    pub fn new(kind: DetectorKind, rate: f64) -> Result<Self> {
        if !(rate >= 0.0) {
            return Err(Error::NegativeRate(rate));
        }
        Ok(Self {
            kind,
            rate,
            phase: kind.phase(),
        })
    }

    /// `ĉ_Φ = √rate · σ− · e^{-iΦ}`.
    pub fn lindblad_operator(&self) -> Operator {
        let phase = C64::from_polar(self.rate.sqrt(), -self.phase);
        sigma_minus() * phase
    }

    /// The observable whose expectation (times dt) gives the mean increment:
    /// `ĉ†ĉ` for counting, `ĉ_Φ + ĉ_Φ†` for homodyne.
    pub fn signal_operator(&self) -> Operator {
        let c = self.lindblad_operator();
        match self.kind {
            DetectorKind::N => c.adjoint() * c,
            DetectorKind::X | DetectorKind::Y => c + c.adjoint(),
        }
    }
}

/// One measurement outcome over `[t, t + dt)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Increment {
    Jump(bool),
    Diffusive(f64),
}

impl fmt::Display for Increment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Increment::Jump(b) => write!(f, "jump({})", *b as u8),
            Increment::Diffusive(v) => write!(f, "diffusive({v})"),
        }
    }
}

fn mismatch(kind: DetectorKind, inc: Increment) -> Error {
    Error::IncrementMismatch {
        kind: kind.to_string(),
        increment: inc.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Increments {
    Jump(Vec<bool>),
    Diffusive(Vec<f64>),
}

impl Increments {
    pub fn len(&self) -> usize {
        match self {
            Increments::Jump(v) => v.len(),
            Increments::Diffusive(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Time-ordered measurement increments of one detector.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub detector: DetectorConfig,
    pub dt: f64,
    pub seed: u64,
    pub increments: Increments,
}

impl Record {
    pub fn empty(detector: DetectorConfig, dt: f64, seed: u64) -> Self {
        let increments = if detector.kind.is_jump() {
            Increments::Jump(Vec::new())
        } else {
            Increments::Diffusive(Vec::new())
        };
        Self {
            detector,
            dt,
            seed,
            increments,
        }
    }

    pub fn jumps(detector: DetectorConfig, dt: f64, clicks: Vec<bool>) -> Result<Self> {
        if !detector.kind.is_jump() {
            return Err(mismatch(detector.kind, Increment::Jump(false)));
        }
        Ok(Self {
            detector,
            dt,
            seed: 0,
            increments: Increments::Jump(clicks),
        })
    }

    pub fn diffusive(detector: DetectorConfig, dt: f64, currents: Vec<f64>) -> Result<Self> {
        if detector.kind.is_jump() {
            return Err(mismatch(detector.kind, Increment::Diffusive(0.0)));
        }
        if let Some(bad) = currents.iter().find(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite diffusive increment {bad}")));
        }
        Ok(Self {
            detector,
            dt,
            seed: 0,
            increments: Increments::Diffusive(currents),
        })
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 * self.dt
    }

    pub fn get(&self, i: usize) -> Increment {
        match &self.increments {
            Increments::Jump(v) => Increment::Jump(v[i]),
            Increments::Diffusive(v) => Increment::Diffusive(v[i]),
        }
    }

    pub fn push(&mut self, inc: Increment) -> Result<()> {
        match (&mut self.increments, inc) {
            (Increments::Jump(v), Increment::Jump(b)) => v.push(b),
            (Increments::Diffusive(v), Increment::Diffusive(x)) if x.is_finite() => v.push(x),
            _ => return Err(mismatch(self.detector.kind, inc)),
        }
        Ok(())
    }

    pub fn click_count(&self) -> usize {
        match &self.increments {
            Increments::Jump(v) => v.iter().filter(|&&b| b).count(),
            Increments::Diffusive(_) => 0,
        }
    }
}

/// Ostensible (sampling) law for jump records; `None` means the steady-state
/// click rate `Tr[ĉ†ĉ ρ_ss]` of that channel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OstensibleConfig {
    pub observed_jump_rate: Option<f64>,
    pub unobserved_jump_rate: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub omega: f64,
    pub gamma: f64,
    pub gamma_o: f64,
    pub gamma_u: f64,
    pub dt: f64,
    pub t_final: f64,
    pub rho0: DensityMatrix,
    pub observed: DetectorKind,
    pub unobserved: DetectorKind,
    pub n_observed: usize,
    pub n_candidates: usize,
    pub seed: u64,
    pub ss_interval: (f64, f64),
    /// Store every k-th step of the full-resolution grid.
    pub store_every: usize,
    pub ostensible: OstensibleConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            omega: 5.0,
            gamma: 1.0,
            gamma_o: 0.5,
            gamma_u: 0.5,
            dt: 1e-3,
            t_final: 8.0,
            rho0: DensityMatrix::excited(),
            observed: DetectorKind::N,
            unobserved: DetectorKind::N,
            n_observed: 200,
            n_candidates: 2000,
            seed: 0,
            ss_interval: (4.5, 6.0),
            store_every: 10,
            ostensible: OstensibleConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        for (name, v) in [("omega", self.omega), ("gamma_o", self.gamma_o), ("gamma_u", self.gamma_u)] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if (self.gamma_o + self.gamma_u - self.gamma).abs() > 1e-12 * self.gamma.max(1.0) {
            return bad(format!(
                "gamma_o + gamma_u = {} differs from gamma = {}",
                self.gamma_o + self.gamma_u,
                self.gamma
            ));
        }
        if !(self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_final >= 0.0) {
            return bad(format!("t_final must be non-negative, got {}", self.t_final));
        }
        let steps = self.t_final / self.dt;
        if (steps - steps.round()).abs() > 1e-6 {
            return bad(format!("t_final = {} is not a multiple of dt = {}", self.t_final, self.dt));
        }
        let fastest = self.omega.max(self.gamma);
        if self.dt * fastest > 0.1 {
            return bad(format!("dt = {} is not small against 1/max(omega, gamma)", self.dt));
        }
        if self.store_every == 0 {
            return bad("store_every must be at least 1".into());
        }
        let (a, b) = self.ss_interval;
        if !(0.0 <= a && a <= b) {
            return bad(format!("invalid steady-state interval [{a}, {b}]"));
        }
        if self.n_candidates > MAX_CANDIDATES {
            return bad(format!("at most {MAX_CANDIDATES} candidates supported"));
        }
        if self.rho0.role() != Role::Normalized {
            return bad("initial state must be normalized".into());
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    /// Step indices at which states are stored (always includes 0 and the last step).
    pub fn stored_steps(&self) -> Vec<usize> {
        let n = self.n_steps();
        let mut out: Vec<usize> = (0..=n).step_by(self.store_every.max(1)).collect();
        if *out.last().unwrap() != n {
            out.push(n);
        }
        out
    }

    pub fn stored_times(&self) -> Vec<f64> {
        self.stored_steps().iter().map(|&k| k as f64 * self.dt).collect()
    }

    pub fn observed_detector(&self) -> DetectorConfig {
        DetectorConfig {
            kind: self.observed,
            rate: self.gamma_o,
            phase: self.observed.phase(),
        }
    }

    pub fn unobserved_detector(&self) -> DetectorConfig {
        DetectorConfig {
            kind: self.unobserved,
            rate: self.gamma_u,
            phase: self.unobserved.phase(),
        }
    }

    pub fn hamiltonian(&self) -> Operator {
        sigma_x() * C64::new(0.5 * self.omega, 0.0)
    }

    pub fn liouvillian(&self) -> Result<Superoperator> {
        qubit_liouvillian(self.omega, self.gamma)
    }

    /// Label like `dNdX`.
    pub fn combination_label(&self) -> String {
        format!("{}{}", self.observed, self.unobserved)
    }
}

/// Exact one-step drive `ρ ↦ e^{-iĤdt} ρ e^{iĤdt}` with `Ĥ = (Ω/2)σx`.
pub fn drive_map(omega: f64, dt: f64) -> Superoperator {
    let (s, c) = (0.5 * omega * dt).sin_cos();
    let u = Operator::identity() * C64::new(c, 0.0) - sigma_x() * C64::new(0.0, s);
    Superoperator::sandwich(&u)
}

/// Raw one-step measurement map for `outcome` (see module docs).
///
/// With `hamiltonian_included` the drive is applied first, so the map is
/// `𝓜_r ∘ 𝓤_dt`. Keeping the drive out of the measurement operators makes a
/// click collapse the state onto `|g⟩` exactly.
pub fn measurement_map(
    detector: &DetectorConfig,
    outcome: Increment,
    omega: f64,
    dt: f64,
    hamiltonian_included: bool,
) -> Result<Superoperator> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    let c = detector.lindblad_operator();
    let m0 = Operator::identity() - c.adjoint() * c * C64::new(0.5 * dt, 0.0);
    let map = match (detector.kind, outcome) {
        (DetectorKind::N, Increment::Jump(true)) => Superoperator::sandwich(&c).scale(dt),
        (DetectorKind::N, Increment::Jump(false)) => Superoperator::sandwich(&m0),
        (DetectorKind::X | DetectorKind::Y, Increment::Diffusive(dj)) => {
            Superoperator::sandwich(&(m0 + c * C64::new(dj, 0.0)))
        }
        (kind, inc) => return Err(mismatch(kind, inc)),
    };
    if hamiltonian_included {
        Ok(map.compose(&drive_map(omega, dt)))
    } else {
        Ok(map)
    }
}

/// Ostensible probability (jump) or density (homodyne) of an outcome.
pub fn ostensible_probability(detector: &DetectorConfig, outcome: Increment, jump_rate: f64, dt: f64) -> Result<f64> {
    match (detector.kind, outcome) {
        (DetectorKind::N, Increment::Jump(true)) => Ok(jump_rate * dt),
        (DetectorKind::N, Increment::Jump(false)) => Ok(1.0 - jump_rate * dt),
        (DetectorKind::X | DetectorKind::Y, Increment::Diffusive(dj)) => {
            Ok((-dj * dj / (2.0 * dt)).exp() / (2.0 * std::f64::consts::PI * dt).sqrt())
        }
        (kind, inc) => Err(mismatch(kind, inc)),
    }
}

/// Measurement map divided by the ostensible probability of its outcome, so
/// that sampling outcomes from the ostensible law and weighting by the trace
/// reproduces the true statistics.
pub fn ostensible_map(
    detector: &DetectorConfig,
    outcome: Increment,
    jump_rate: f64,
    omega: f64,
    dt: f64,
    hamiltonian_included: bool,
) -> Result<Superoperator> {
    let raw = measurement_map(detector, outcome, omega, dt, hamiltonian_included)?;
    match outcome {
        Increment::Jump(_) => {
            let p = ostensible_probability(detector, outcome, jump_rate, dt)?;
            if p > 0.0 {
                Ok(raw.scale(1.0 / p))
            } else {
                Ok(Superoperator::zero())
            }
        }
        Increment::Diffusive(_) => Ok(raw),
    }
}

fn expectation_row(observable: &Operator) -> PauliCoords {
    to_pauli(observable) * 0.5
}

/// Precomputed Pauli-coordinate maps of one channel.
#[derive(Clone, Debug)]
pub(crate) enum ChannelKernel {
    Jump {
        no_click: PauliMap,
        click: PauliMap,
        /// `Tr[ĉ†ĉ ρ] = intensity · v`.
        intensity: PauliCoords,
        /// Ostensible click probability per step.
        ostensible_click: f64,
    },
    Diffusive {
        base: PauliMap,
        linear: PauliMap,
        quadratic: PauliMap,
        /// `Tr[(ĉ_Φ + ĉ_Φ†) ρ] = mean · v`.
        mean: PauliCoords,
    },
}

impl ChannelKernel {
    fn new(detector: &DetectorConfig, dt: f64, jump_rate: f64) -> Result<Self> {
        let mm = |inc| measurement_map(detector, inc, 0.0, dt, false).map(|s| s.to_pauli_map());
        let row = expectation_row(&detector.signal_operator());
        match detector.kind {
            DetectorKind::N => Ok(ChannelKernel::Jump {
                no_click: mm(Increment::Jump(false))?,
                click: mm(Increment::Jump(true))?,
                intensity: row,
                ostensible_click: jump_rate * dt,
            }),
            DetectorKind::X | DetectorKind::Y => {
                let base = mm(Increment::Diffusive(0.0))?;
                let plus = mm(Increment::Diffusive(1.0))?;
                let minus = mm(Increment::Diffusive(-1.0))?;
                Ok(ChannelKernel::Diffusive {
                    base,
                    linear: PauliMap((plus.0 - minus.0) * 0.5),
                    quadratic: PauliMap((plus.0 + minus.0) * 0.5 - base.0),
                    mean: row,
                })
            }
        }
    }

    pub(crate) fn raw_map(&self, inc: Increment) -> Option<PauliMap> {
        match (self, inc) {
            (ChannelKernel::Jump { click, .. }, Increment::Jump(true)) => Some(*click),
            (ChannelKernel::Jump { no_click, .. }, Increment::Jump(false)) => Some(*no_click),
            (ChannelKernel::Diffusive { base, linear, quadratic, .. }, Increment::Diffusive(dj)) => {
                Some(PauliMap(base.0 + linear.0 * dj + quadratic.0 * (dj * dj)))
            }
            _ => None,
        }
    }

    /// `1 / ℘_ost(outcome)` for jumps (0 for impossible ostensible outcomes), 1 for homodyne.
    pub(crate) fn ostensible_factor(&self, inc: Increment) -> f64 {
        match (self, inc) {
            (ChannelKernel::Jump { ostensible_click, .. }, Increment::Jump(true)) => {
                if *ostensible_click > 0.0 {
                    1.0 / ostensible_click
                } else {
                    0.0
                }
            }
            (ChannelKernel::Jump { ostensible_click, .. }, Increment::Jump(false)) => 1.0 / (1.0 - ostensible_click),
            _ => 1.0,
        }
    }

    pub(crate) fn ostensible_map(&self, inc: Increment) -> Option<PauliMap> {
        self.raw_map(inc).map(|m| m.scale(self.ostensible_factor(inc)))
    }

    /// Outcome-averaged map under the ostensible law: `M₀ρM₀† + dt·ĉρĉ†` for
    /// both detector types.
    pub(crate) fn ostensible_average(&self, dt: f64) -> PauliMap {
        match self {
            ChannelKernel::Jump { no_click, click, .. } => PauliMap(no_click.0 + click.0),
            ChannelKernel::Diffusive { base, quadratic, .. } => PauliMap(base.0 + quadratic.0 * dt),
        }
    }

    #[inline]
    pub(crate) fn sample_true<R: Rng + ?Sized>(&self, v: &PauliCoords, dt: f64, rng: &mut R) -> Result<Increment> {
        match self {
            ChannelKernel::Jump { intensity, .. } => {
                let p = intensity.dot(v) / v[0] * dt;
                if p > 1.0 {
                    return Err(Error::JumpProbability(p));
                }
                Ok(Increment::Jump(rng.random::<f64>() < p))
            }
            ChannelKernel::Diffusive { mean, .. } => {
                let z: f64 = rng.sample(StandardNormal);
                Ok(Increment::Diffusive(mean.dot(v) / v[0] * dt + dt.sqrt() * z))
            }
        }
    }
}

/// `Tr[ĉ†ĉ ρ]` for the channel's detector.
pub fn click_rate(detector: &DetectorConfig, rho: &DensityMatrix) -> f64 {
    let c = detector.lindblad_operator();
    (c.adjoint() * c * rho.entries()).trace().re
}

pub fn sample_true_increment<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    detector: &DetectorConfig,
    dt: f64,
    rng: &mut R,
) -> Result<Increment> {
    if rho.role() != Role::Normalized {
        return Err(Error::NotNormalized(rho.trace()));
    }
    let mean = (detector.signal_operator() * rho.entries()).trace().re * dt;
    match detector.kind {
        DetectorKind::N => {
            if mean > 1.0 {
                return Err(Error::JumpProbability(mean));
            }
            Ok(Increment::Jump(rng.random::<f64>() < mean))
        }
        DetectorKind::X | DetectorKind::Y => {
            let z: f64 = rng.sample(StandardNormal);
            Ok(Increment::Diffusive(mean + dt.sqrt() * z))
        }
    }
}

pub fn sample_ostensible_increment<R: Rng + ?Sized>(
    detector: &DetectorConfig,
    dt: f64,
    jump_rate: f64,
    rng: &mut R,
) -> Result<Increment> {
    match detector.kind {
        DetectorKind::N => {
            if !(jump_rate > 0.0 && jump_rate * dt < 1.0) {
                return Err(Error::InvalidOstensibleRate { rate: jump_rate, dt });
            }
            Ok(Increment::Jump(rng.random::<f64>() < jump_rate * dt))
        }
        DetectorKind::X | DetectorKind::Y => {
            let z: f64 = rng.sample(StandardNormal);
            Ok(Increment::Diffusive(dt.sqrt() * z))
        }
    }
}

/// A complete set of precomputed maps for one observed/unobserved configuration.
#[derive(Clone, Debug)]
pub struct Unravelling {
    config: SimConfig,
    steady: DensityMatrix,
    ostensible_rates: (f64, f64),
    pub(crate) observed: ChannelKernel,
    pub(crate) unobserved: ChannelKernel,
    /// Outcome-averaged unobserved step, drive included.
    pub(crate) unobserved_average: PauliMap,
    pub(crate) drive: PauliMap,
}

/// A co-sampled true trajectory with its observed and unobserved records.
#[derive(Clone, Debug)]
pub struct Run {
    pub times: Vec<f64>,
    pub true_states: Vec<BlochVector>,
    pub observed: Record,
    pub unobserved: Record,
}

fn resolve_rate(requested: Option<f64>, detector: &DetectorConfig, steady: &DensityMatrix, dt: f64) -> Result<f64> {
    if !detector.kind.is_jump() || detector.rate == 0.0 {
        return Ok(0.0);
    }
    let rate = requested.unwrap_or_else(|| click_rate(detector, steady));
    if !(rate > 0.0 && rate * dt < 1.0) {
        return Err(Error::InvalidOstensibleRate { rate, dt });
    }
    Ok(rate)
}

impl Unravelling {
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let steady = steady_state(&config.liouvillian()?)?;
        let obs = config.observed_detector();
        let unobs = config.unobserved_detector();
        let rate_o = resolve_rate(config.ostensible.observed_jump_rate, &obs, &steady, config.dt)?;
        let rate_u = resolve_rate(config.ostensible.unobserved_jump_rate, &unobs, &steady, config.dt)?;
        let observed = ChannelKernel::new(&obs, config.dt, rate_o)?;
        let unobserved = ChannelKernel::new(&unobs, config.dt, rate_u)?;
        let drive = drive_map(config.omega, config.dt).to_pauli_map();
        let unobserved_average = unobserved.ostensible_average(config.dt).compose(&drive);
        Ok(Self {
            config: config.clone(),
            steady,
            ostensible_rates: (rate_o, rate_u),
            observed,
            unobserved,
            unobserved_average,
            drive,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn steady_state(&self) -> &DensityMatrix {
        &self.steady
    }

    /// Ostensible jump rates `(observed, unobserved)`; 0 for homodyne channels.
    pub fn ostensible_rates(&self) -> (f64, f64) {
        self.ostensible_rates
    }

    fn check_outcome(&self, kernel: &ChannelKernel, detector: DetectorConfig, inc: Increment) -> Result<PauliMap> {
        kernel.raw_map(inc).ok_or_else(|| mismatch(detector.kind, inc))
    }

    pub(crate) fn observed_raw(&self, o: Increment) -> Result<PauliMap> {
        self.check_outcome(&self.observed, self.config.observed_detector(), o)
    }

    /// Unobserved step `𝓜_u ∘ 𝓤_dt`; the observed map is applied after it.
    pub(crate) fn unobserved_raw(&self, u: Increment) -> Result<PauliMap> {
        Ok(self
            .check_outcome(&self.unobserved, self.config.unobserved_detector(), u)?
            .compose(&self.drive))
    }

    /// Ostensible-normalized observed map (common to every candidate).
    pub(crate) fn observed_ostensible(&self, o: Increment) -> Result<PauliMap> {
        self.observed_raw(o).map(|m| m.scale(self.observed.ostensible_factor(o)))
    }

    pub(crate) fn unobserved_ostensible(&self, u: Increment) -> Result<PauliMap> {
        self.unobserved
            .ostensible_map(u)
            .map(|m| m.compose(&self.drive))
            .ok_or_else(|| mismatch(self.config.unobserved, u))
    }

    /// One step conditioned on both records, renormalized.
    pub fn true_step(&self, rho: &DensityMatrix, o: Increment, u: Increment) -> Result<DensityMatrix> {
        if rho.role() != Role::Normalized {
            return Err(Error::NotNormalized(rho.trace()));
        }
        let map = self.observed_raw(o)?.compose(&self.unobserved_raw(u)?);
        let v = map.apply(&rho.pauli());
        if !(v[0] > 0.0) {
            return Err(Error::ZeroProbability { step: 0 });
        }
        Ok(DensityMatrix::from_pauli_unchecked(&(v / v[0]), Role::Normalized))
    }

    /// One step of the observed-channel filter, with the unobserved channel
    /// acting as an unconditioned dissipator.
    pub fn alice_filter_step(&self, rho: &DensityMatrix, o: Increment) -> Result<DensityMatrix> {
        if rho.role() != Role::Normalized {
            return Err(Error::NotNormalized(rho.trace()));
        }
        let v = self.filter_map(o)?.apply(&rho.pauli());
        if !(v[0] > 0.0) {
            return Err(Error::ZeroProbability { step: 0 });
        }
        Ok(DensityMatrix::from_pauli_unchecked(&(v / v[0]), Role::Normalized))
    }

    pub(crate) fn filter_map(&self, o: Increment) -> Result<PauliMap> {
        Ok(self.observed_ostensible(o)?.compose(&self.unobserved_average))
    }

    /// Adjoint of the filter step, applied backwards; the result is rescaled to `Tr E = 2`.
    pub fn effect_step_backward(&self, next: &EffectOperator, o: Increment) -> Result<EffectOperator> {
        let e = self.filter_map(o)?.adjoint().apply(&next.pauli());
        Ok(EffectOperator::from_pauli_unchecked(&(e * (2.0 / e[0]))))
    }

    /// Samples a true trajectory together with its observed and unobserved records.
    pub fn generate_run<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Run> {
        let cfg = &self.config;
        let n = cfg.n_steps();
        let stored = cfg.stored_steps();
        let mut observed = Record::empty(cfg.observed_detector(), cfg.dt, cfg.seed);
        let mut unobserved = Record::empty(cfg.unobserved_detector(), cfg.dt, cfg.seed);
        let mut v = cfg.rho0.pauli();
        let mut true_states = Vec::with_capacity(stored.len());
        let mut next_store = 0;
        for step in 0..=n {
            if next_store < stored.len() && stored[next_store] == step {
                true_states.push(BlochVector::from_pauli(&v));
                next_store += 1;
            }
            if step == n {
                break;
            }
            // outcomes are drawn in the order the maps act, so that e.g. a
            // click in both jump channels within one step is never sampled
            let driven = self.drive.apply(&v);
            let u = self.unobserved.sample_true(&driven, cfg.dt, rng)?;
            let mid = self.check_outcome(&self.unobserved, cfg.unobserved_detector(), u)?.apply(&driven);
            if !(mid[0] > 0.0) || !mid[0].is_finite() {
                return Err(Error::ZeroProbability { step });
            }
            let o = self.observed.sample_true(&mid, cfg.dt, rng)?;
            let next = self.observed_raw(o)?.apply(&mid);
            if !(next[0] > 0.0) || !next[0].is_finite() {
                return Err(Error::ZeroProbability { step });
            }
            v = next / next[0];
            observed.push(o)?;
            unobserved.push(u)?;
        }
        Ok(Run {
            times: cfg.stored_times(),
            true_states,
            observed,
            unobserved,
        })
    }

    fn check_record(&self, record: &Record, expected: DetectorConfig) -> Result<()> {
        if record.detector.kind != expected.kind {
            return Err(Error::RecordMismatch(format!(
                "record kind {} but configuration expects {}",
                record.detector.kind, expected.kind
            )));
        }
        if (record.dt - self.config.dt).abs() > 1e-15 * self.config.dt.max(1.0) {
            return Err(Error::RecordMismatch(format!(
                "record dt {} but configuration dt {}",
                record.dt, self.config.dt
            )));
        }
        if record.len() != self.config.n_steps() {
            return Err(Error::RecordMismatch(format!(
                "record has {} steps, expected {}",
                record.len(),
                self.config.n_steps()
            )));
        }
        Ok(())
    }

    pub(crate) fn check_observed(&self, record: &Record) -> Result<()> {
        self.check_record(record, self.config.observed_detector())
    }

    pub(crate) fn check_unobserved(&self, record: &Record) -> Result<()> {
        self.check_record(record, self.config.unobserved_detector())
    }

    /// Observed-only filtered trajectory at the stored times.
    pub fn filter_record(&self, observed: &Record) -> Result<Vec<BlochVector>> {
        self.check_observed(observed)?;
        let stored = self.config.stored_steps();
        let mut out = Vec::with_capacity(stored.len());
        let mut v = self.config.rho0.pauli();
        let mut next_store = 0;
        for step in 0..=observed.len() {
            if next_store < stored.len() && stored[next_store] == step {
                out.push(BlochVector::from_pauli(&v));
                next_store += 1;
            }
            if step == observed.len() {
                break;
            }
            let next = self.filter_map(observed.get(step))?.apply(&v);
            if !(next[0] > 0.0) || !next[0].is_finite() {
                return Err(Error::ZeroProbability { step });
            }
            v = next / next[0];
        }
        Ok(out)
    }

    /// Both-record trajectory at the stored times (the true state for `U = U_true`).
    pub fn condition_on_both(&self, observed: &Record, unobserved: &Record) -> Result<Vec<BlochVector>> {
        self.check_observed(observed)?;
        self.check_unobserved(unobserved)?;
        let stored = self.config.stored_steps();
        let mut out = Vec::with_capacity(stored.len());
        let mut v = self.config.rho0.pauli();
        let mut next_store = 0;
        for step in 0..=observed.len() {
            if next_store < stored.len() && stored[next_store] == step {
                out.push(BlochVector::from_pauli(&v));
                next_store += 1;
            }
            if step == observed.len() {
                break;
            }
            let map = self.observed_raw(observed.get(step))?.compose(&self.unobserved_raw(unobserved.get(step))?);
            let next = map.apply(&v);
            if !(next[0] > 0.0) || !next[0].is_finite() {
                return Err(Error::ZeroProbability { step });
            }
            v = next / next[0];
        }
        Ok(out)
    }

    /// Exact Lindblad solution at the stored times.
    pub fn lindblad_trajectory(&self) -> Result<Vec<BlochVector>> {
        let l = self.config.liouvillian()?;
        self.config
            .stored_times()
            .iter()
            .map(|&t| {
                let rho = algebra::propagate_state(&l, &self.config.rho0, t)?;
                Ok(BlochVector::from_pauli(&rho.pauli()))
            })
            .collect()
    }
}

pub fn true_step(rho: &DensityMatrix, o: Increment, u: Increment, model: &Unravelling) -> Result<DensityMatrix> {
    model.true_step(rho, o, u)
}

pub fn alice_filter_step(rho: &DensityMatrix, o: Increment, model: &Unravelling) -> Result<DensityMatrix> {
    model.alice_filter_step(rho, o)
}

pub fn effect_step_backward(next: &EffectOperator, o: Increment, model: &Unravelling) -> Result<EffectOperator> {
    model.effect_step_backward(next, o)
}

pub fn generate_run<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<Run> {
    Unravelling::new(config)?.generate_run(rng)
}
