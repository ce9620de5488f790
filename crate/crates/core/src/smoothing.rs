//! Quantum state smoothing by importance-weighted candidate ensembles.
//!
//! The unobserved record is unknown, so a set of candidate records is
//! propagated together with the observed one. Each candidate carries its
//! normalized state and the log of the accumulated trace of its unnormalized
//! state. At every stored time:
//!
//! * the filter weight of candidate `i` is `exp(log-trace_i)`,
//! * its smoothing weight additionally carries `Tr[Ê(t) ρ̂_i(t)]`, where `Ê` is
//!   the effect operator retrofiltered from the future observed record with
//!   the future unobserved record marginalized,
//! * the filtered and smoothed states are the corresponding weighted averages.
//!
//! Candidates sampled from the ostensible law use ostensible-normalized maps, so
//! the ostensible prefactors cancel. Fixed candidate sets (e.g. an exhaustive
//! enumeration of all paths) use the raw maps instead, which weights each path
//! by its probability.

use std::io::Write;

use nalgebra::{Matrix3, Matrix4, Vector3};
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;

use crate::algebra::{bloch_covariance_to_operator, BlochVector, DensityMatrix, EffectOperator, PauliCoords, Role, C64};
use crate::error::{Error, Result};
use crate::rng::candidate_stream;
use crate::unravelling::{ChannelKernel, Increment, Record, Unravelling};

/// Candidates are renormalized at stored times and at least this often.
const MAX_UNNORMALIZED_STEPS: usize = 16;

#[derive(Clone, Copy, Debug)]
pub enum CandidateSource<'a> {
    /// Fresh ostensible records for run `run` of combination `combination`,
    /// one independent random substream per candidate.
    Sampled {
        seed: u64,
        combination: usize,
        run: usize,
        count: usize,
    },
    /// Given unobserved records, each weighted by its own probability.
    Fixed(&'a [Record]),
}

impl CandidateSource<'_> {
    pub fn len(&self) -> usize {
        match self {
            CandidateSource::Sampled { count, .. } => *count,
            CandidateSource::Fixed(records) => records.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Effect operators retrofiltered from an observed record, at the stored times.
#[derive(Clone, Debug)]
pub struct EffectTrajectory {
    pub times: Vec<f64>,
    /// Pauli coordinates `Tr[σ_i Ê]`, scaled to `Tr Ê = 2`.
    pub coords: Vec<PauliCoords>,
}

impl EffectTrajectory {
    pub fn effect(&self, index: usize) -> EffectOperator {
        EffectOperator::from_pauli_unchecked(&self.coords[index])
    }
}

/// Backward pass from `Ê(T) = I` over the observed record.
pub fn retrofilter(model: &Unravelling, observed: &Record) -> Result<EffectTrajectory> {
    model.check_observed(observed)?;
    let cfg = model.config();
    let stored = cfg.stored_steps();
    let mut coords = vec![PauliCoords::zeros(); stored.len()];
    let mut e = PauliCoords::new(2.0, 0.0, 0.0, 0.0);
    let mut slot = stored.len();
    for step in (0..=observed.len()).rev() {
        if slot > 0 && stored[slot - 1] == step {
            slot -= 1;
            coords[slot] = e;
        }
        if step == 0 {
            break;
        }
        let next = model.filter_map(observed.get(step - 1))?.adjoint().apply(&e);
        e = next * (2.0 / next[0]);
    }
    Ok(EffectTrajectory {
        times: cfg.stored_times(),
        coords,
    })
}

/// Normalized weights `∝ exp(log_w)`, computed by log-sum-exp.
pub fn normalize_log_weights(log_w: &[f64]) -> Option<Vec<f64>> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let mut w: Vec<f64> = log_w.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= sum);
    Some(w)
}

/// Smoothing weights from filter weights and `Tr[Ê ρ̂_i]`.
pub fn smooth_weights(filter_weights: &[f64], states: &[PauliCoords], effect: &PauliCoords) -> Option<Vec<f64>> {
    let mut w: Vec<f64> = filter_weights
        .iter()
        .zip(states)
        .map(|(&f, v)| if f > 0.0 { f * (0.5 * effect.dot(v)).max(0.0) } else { 0.0 })
        .collect();
    let sum: f64 = w.iter().sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return None;
    }
    w.iter_mut().for_each(|x| *x /= sum);
    Some(w)
}

pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

fn bloch(v: &PauliCoords) -> Vector3<f64> {
    Vector3::new(v[1], v[2], v[3])
}

/// Weighted average of the candidate Bloch vectors, accumulated as offsets from
/// the first live candidate so that identical candidates average exactly.
pub fn weighted_mean(weights: &[f64], states: &[PauliCoords]) -> BlochVector {
    let Some(anchor) = weights.iter().position(|&w| w > 0.0) else {
        return BlochVector::ORIGIN;
    };
    let base = bloch(&states[anchor]);
    let mut m = Vector3::zeros();
    for (&w, v) in weights.iter().zip(states) {
        if w > 0.0 {
            m += (bloch(v) - base) * w;
        }
    }
    BlochVector::from_vector(&(base + m))
}

/// Variance of the weighted mean of the candidate Bloch vectors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothedCovariance {
    pub mean: BlochVector,
    pub bloch: Matrix3<f64>,
}

impl SmoothedCovariance {
    /// `(Σ w_i²) · (Σ w_i b_i b_iᵀ − b̄ b̄ᵀ)` for normalized weights.
    pub fn from_weights(weights: &[f64], states: &[PauliCoords]) -> Self {
        let mean = weighted_mean(weights, states);
        let m = mean.as_vector();
        let mut second = Matrix3::zeros();
        let mut sum_sq = 0.0;
        for (&w, v) in weights.iter().zip(states) {
            if w > 0.0 {
                let d = bloch(v) - m;
                second += d * d.transpose() * w;
                sum_sq += w * w;
            }
        }
        let bloch = second * sum_sq;
        Self {
            mean,
            bloch: (bloch + bloch.transpose()) * 0.5,
        }
    }

    /// `(δP)² = x²(δx)² + y²(δy)² + z²(δz)²`.
    pub fn purity_variance(&self) -> f64 {
        let b = self.mean;
        b.x * b.x * self.bloch[(0, 0)] + b.y * b.y * self.bloch[(1, 1)] + b.z * b.z * self.bloch[(2, 2)]
    }

    /// Covariance of the operator entries, `¼ Σ C_ij σ_i ⊗ σ_j`.
    pub fn operator(&self) -> Matrix4<C64> {
        bloch_covariance_to_operator(&self.bloch)
    }
}

/// Candidate states and filter log-weights at one stored time.
#[derive(Clone, Debug)]
pub struct CandidateSnapshot {
    pub t: f64,
    /// Normalized Pauli coordinates (first entry 1).
    pub states: Vec<PauliCoords>,
    /// `-∞` marks candidates whose path became impossible.
    pub log_weights: Vec<f64>,
}

impl CandidateSnapshot {
    pub fn filter_weights(&self) -> Result<Vec<f64>> {
        normalize_log_weights(&self.log_weights).ok_or(Error::EnsembleCollapse { t: self.t })
    }

    pub fn smooth_weights(&self, effect: &PauliCoords) -> Result<Vec<f64>> {
        smooth_weights(&self.filter_weights()?, &self.states, effect).ok_or(Error::EnsembleCollapse { t: self.t })
    }
}

/// Renormalizes every live candidate and moves its trace into the log weight.
fn flush(states: &mut [PauliCoords], log_w: &mut [f64]) {
    for (v, l) in states.iter_mut().zip(log_w.iter_mut()) {
        if *l == f64::NEG_INFINITY {
            continue;
        }
        let s = v[0];
        if s > 0.0 && s.is_finite() {
            *l += s.ln();
            *v /= s;
        } else {
            *l = f64::NEG_INFINITY;
        }
    }
}

/// Propagates all candidates in lock step and hands each stored-time snapshot to `visit`.
fn run_ensemble<F>(model: &Unravelling, observed: &Record, source: CandidateSource<'_>, mut visit: F) -> Result<()>
where
    F: FnMut(usize, f64, &[PauliCoords], &[f64]) -> Result<()>,
{
    model.check_observed(observed)?;
    let n = source.len();
    if n == 0 {
        return Err(Error::InsufficientEnsemble("no candidates".into()));
    }
    if let CandidateSource::Fixed(records) = source {
        for r in records {
            model.check_unobserved(r)?;
        }
    }
    let cfg = model.config();
    let dt = cfg.dt;
    let stored = cfg.stored_steps();
    let n_steps = cfg.n_steps();
    let mut rngs: Vec<ChaCha8Rng> = match source {
        CandidateSource::Sampled {
            seed, combination, run, ..
        } => (0..n).map(|i| candidate_stream(seed, combination, run, i)).collect(),
        CandidateSource::Fixed(_) => Vec::new(),
    };
    let mut states = vec![cfg.rho0.pauli(); n];
    let mut log_w = vec![0.0; n];
    let mut next_store = 0;
    let mut since_flush = 0;
    for step in 0..=n_steps {
        let store = next_store < stored.len() && stored[next_store] == step;
        if store || since_flush == MAX_UNNORMALIZED_STEPS {
            flush(&mut states, &mut log_w);
            since_flush = 0;
        }
        if store {
            let t = step as f64 * dt;
            if log_w.iter().all(|l| *l == f64::NEG_INFINITY) {
                return Err(Error::EnsembleCollapse { t });
            }
            visit(next_store, t, &states, &log_w)?;
            next_store += 1;
        }
        if step == n_steps {
            break;
        }
        since_flush += 1;
        let o = observed.get(step);
        let p = model.observed_ostensible(o)?;
        match source {
            CandidateSource::Fixed(records) => {
                for (i, r) in records.iter().enumerate() {
                    let map = p.compose(&model.unobserved_raw(r.get(step))?);
                    states[i] = map.apply(&states[i]);
                }
            }
            CandidateSource::Sampled { .. } => match &model.unobserved {
                ChannelKernel::Jump { ostensible_click, .. } => {
                    let q0 = p.compose(&model.unobserved_ostensible(Increment::Jump(false))?).0;
                    let q1 = p.compose(&model.unobserved_ostensible(Increment::Jump(true))?).0;
                    // compare raw 64-bit draws against p · 2⁶⁴
                    let threshold = (*ostensible_click * 18446744073709551616.0) as u64;
                    for (v, rng) in states.iter_mut().zip(rngs.iter_mut()) {
                        let click = rng.next_u64() < threshold;
                        *v = if click { q1 * *v } else { q0 * *v };
                    }
                }
                ChannelKernel::Diffusive {
                    base, linear, quadratic, ..
                } => {
                    let a = p.compose(base).compose(&model.drive).0;
                    let b = p.compose(linear).compose(&model.drive).0;
                    let c = p.compose(quadratic).compose(&model.drive).0;
                    let sd = dt.sqrt();
                    for (v, rng) in states.iter_mut().zip(rngs.iter_mut()) {
                        let z: f64 = rng.sample(rand_distr::StandardNormal);
                        let dj = sd * z;
                        *v = a * *v + (b * *v + c * *v * dj) * dj;
                    }
                }
            },
        }
    }
    Ok(())
}

/// All candidate snapshots at the stored times.
#[derive(Clone, Debug)]
pub struct CandidateSet {
    pub snapshots: Vec<CandidateSnapshot>,
}

pub fn propagate_candidates(model: &Unravelling, observed: &Record, source: CandidateSource<'_>) -> Result<CandidateSet> {
    let mut snapshots = Vec::new();
    run_ensemble(model, observed, source, |_, t, states, log_w| {
        snapshots.push(CandidateSnapshot {
            t,
            states: states.to_vec(),
            log_weights: log_w.to_vec(),
        });
        Ok(())
    })?;
    Ok(CandidateSet { snapshots })
}

/// Candidates together with the effect operators of the observed record.
#[derive(Clone, Debug)]
pub struct SmoothingEnsemble {
    pub candidates: CandidateSet,
    pub effects: EffectTrajectory,
}

impl SmoothingEnsemble {
    pub fn build(model: &Unravelling, observed: &Record, source: CandidateSource<'_>) -> Result<Self> {
        Ok(Self {
            candidates: propagate_candidates(model, observed, source)?,
            effects: retrofilter(model, observed)?,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.effects.times
    }

    pub fn filter_weights(&self, index: usize) -> Result<Vec<f64>> {
        self.candidates.snapshots[index].filter_weights()
    }

    pub fn smooth_weights(&self, index: usize) -> Result<Vec<f64>> {
        self.candidates.snapshots[index].smooth_weights(&self.effects.coords[index])
    }

    pub fn filtered_state(&self, index: usize) -> Result<DensityMatrix> {
        let w = self.filter_weights(index)?;
        Ok(mean_state(&w, &self.candidates.snapshots[index].states))
    }

    pub fn smoothed_state(&self, index: usize) -> Result<DensityMatrix> {
        let w = self.smooth_weights(index)?;
        Ok(mean_state(&w, &self.candidates.snapshots[index].states))
    }

    pub fn smoothed_covariance(&self, index: usize) -> Result<SmoothedCovariance> {
        let w = self.smooth_weights(index)?;
        let distinct = {
            let states = &self.candidates.snapshots[index].states;
            states.iter().any(|v| (v - states[0]).norm() > 0.0)
        };
        if !distinct {
            log::warn!("smoothed covariance requested for an ensemble without distinct candidates");
        }
        Ok(SmoothedCovariance::from_weights(&w, &self.candidates.snapshots[index].states))
    }

    pub fn smoothed_purity_variance(&self, index: usize) -> Result<f64> {
        Ok(self.smoothed_covariance(index)?.purity_variance())
    }
}

fn mean_state(weights: &[f64], states: &[PauliCoords]) -> DensityMatrix {
    DensityMatrix::from_pauli_unchecked(&weighted_mean(weights, states).to_pauli(), Role::Normalized)
}

/// Filtered and smoothed estimates at one stored time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothedPoint {
    pub t: f64,
    /// Filter-weighted candidate average.
    pub filtered: BlochVector,
    pub smoothed: BlochVector,
    pub covariance: Matrix3<f64>,
    pub purity_variance: f64,
    pub ess: f64,
    pub filter_ess: f64,
}

#[derive(Clone, Debug, Default)]
pub struct SmoothedTrajectory {
    pub points: Vec<SmoothedPoint>,
}

/// Streams the candidate ensemble and reduces it at every stored time,
/// without keeping the candidates around.
pub fn smooth_record(model: &Unravelling, observed: &Record, source: CandidateSource<'_>) -> Result<SmoothedTrajectory> {
    let effects = retrofilter(model, observed)?;
    let mut points = Vec::with_capacity(effects.times.len());
    run_ensemble(model, observed, source, |index, t, states, log_w| {
        let fw = normalize_log_weights(log_w).ok_or(Error::EnsembleCollapse { t })?;
        let sw = smooth_weights(&fw, states, &effects.coords[index]).ok_or(Error::EnsembleCollapse { t })?;
        let cov = SmoothedCovariance::from_weights(&sw, states);
        points.push(SmoothedPoint {
            t,
            filtered: weighted_mean(&fw, states),
            smoothed: cov.mean,
            covariance: cov.bloch,
            purity_variance: cov.purity_variance(),
            ess: effective_sample_size(&sw),
            filter_ess: effective_sample_size(&fw),
        });
        Ok(())
    })?;
    Ok(SmoothedTrajectory { points })
}

impl SmoothedTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }

    /// Columns `t, x_F, y_F, z_F, P_F, x_S, y_S, z_S, P_S, dP_S, ESS`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,x_F,y_F,z_F,P_F,x_S,y_S,z_S,P_S,dP_S,ESS")?;
        for p in &self.points {
            let (f, s) = (p.filtered, p.smoothed);
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                p.t,
                f.x,
                f.y,
                f.z,
                f.purity(),
                s.x,
                s.y,
                s.z,
                s.purity(),
                p.purity_variance.sqrt(),
                p.ess
            )?;
        }
        w.flush()?;
        Ok(())
    }
}
