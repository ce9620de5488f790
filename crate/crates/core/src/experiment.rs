//! Batch driver: observed-record ensembles for the nine detector combinations.

use rayon::prelude::*;

use crate::error::Result;
use crate::metrics::{RecordPurities, RecoveryReport, TrueReference, DEFAULT_DENOMINATOR_GUARD};
use crate::rng::record_stream;
use crate::smoothing::{smooth_record, CandidateSource, SmoothedTrajectory};
use crate::unravelling::{DetectorKind, Run, SimConfig, Unravelling};
use crate::algebra::BlochVector;
use crate::metrics::yz_projection_purity_bloch;

/// The nine (observed, unobserved) pairs in the order dNdN, dNdX, dNdY, dXdN, …, dYdY.
pub const COMBINATIONS: [(DetectorKind, DetectorKind); 9] = {
    use DetectorKind::*;
    [(N, N), (N, X), (N, Y), (X, N), (X, X), (X, Y), (Y, N), (Y, X), (Y, Y)]
};

pub fn combination_index(observed: DetectorKind, unobserved: DetectorKind) -> usize {
    observed.code() as usize * 3 + unobserved.code() as usize
}

/// Everything produced for one observed record.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub run: usize,
    pub record: Run,
    /// Observed-only filter propagated directly.
    pub direct_filter: Vec<BlochVector>,
    pub smoothed: SmoothedTrajectory,
}

/// Per-time purities of one run, with both true-state references.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunPurities {
    pub filtered: Vec<f64>,
    pub smoothed: Vec<f64>,
    pub smoothed_variance: Vec<f64>,
    pub true_purity: Vec<f64>,
    pub true_yz: Vec<f64>,
}

impl RunPurities {
    pub fn from_output(out: &RunOutput) -> Self {
        let pts = &out.smoothed.points;
        Self {
            filtered: pts.iter().map(|p| p.filtered.purity()).collect(),
            smoothed: pts.iter().map(|p| p.smoothed.purity()).collect(),
            smoothed_variance: pts.iter().map(|p| p.purity_variance).collect(),
            true_purity: out.record.true_states.iter().map(|b| b.purity()).collect(),
            true_yz: out.record.true_states.iter().map(yz_projection_purity_bloch).collect(),
        }
    }

    pub fn with_reference(&self, reference: TrueReference) -> RecordPurities {
        RecordPurities {
            filtered: self.filtered.clone(),
            smoothed: self.smoothed.clone(),
            smoothed_variance: self.smoothed_variance.clone(),
            reference: match reference {
                TrueReference::Unity => vec![1.0; self.filtered.len()],
                TrueReference::YzProjection => self.true_yz.clone(),
            },
        }
    }
}

/// Generates observed record `run` of a combination and smooths it with fresh candidates.
pub fn run_record(model: &Unravelling, combination: usize, run: usize) -> Result<RunOutput> {
    let cfg = model.config();
    let record = model.generate_run(&mut record_stream(cfg.seed, combination, run))?;
    let source = CandidateSource::Sampled {
        seed: cfg.seed,
        combination,
        run,
        count: cfg.n_candidates,
    };
    let smoothed = smooth_record(model, &record.observed, source)?;
    let direct_filter = model.filter_record(&record.observed)?;
    Ok(RunOutput {
        run,
        record,
        direct_filter,
        smoothed,
    })
}

/// Evaluates `per_run` for runs `0..n` on the rayon pool; results come back in run order.
pub fn for_each_run<T, F>(n: usize, per_run: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..n).into_par_iter().map(per_run).collect()
}

/// Purities of all `n_observed` runs of a configuration.
pub fn simulate_combination(config: &SimConfig) -> Result<Vec<RunPurities>> {
    let model = Unravelling::new(config)?;
    let combination = combination_index(config.observed, config.unobserved);
    for_each_run(config.n_observed, |run| {
        run_record(&model, combination, run).map(|out| RunPurities::from_output(&out))
    })
}

/// Settings of the recovery analysis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalysisOptions {
    /// `None` picks the default reference of the combination.
    pub reference: Option<TrueReference>,
    /// Correlation time of the steady-state average; `None` means `1/γ`.
    pub t_corr: Option<f64>,
    pub guard: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            reference: None,
            t_corr: None,
            guard: DEFAULT_DENOMINATOR_GUARD,
        }
    }
}

pub fn analyze(config: &SimConfig, runs: &[RunPurities], options: &AnalysisOptions) -> Result<RecoveryReport> {
    let reference = options
        .reference
        .unwrap_or_else(|| TrueReference::default_for(config.observed, config.unobserved));
    let records: Vec<RecordPurities> = runs.iter().map(|r| r.with_reference(reference)).collect();
    RecoveryReport::new(
        config.combination_label(),
        reference,
        &config.stored_times(),
        &records,
        config.ss_interval,
        options.t_corr.unwrap_or(1.0 / config.gamma),
        options.guard,
    )
}

/// Copy of `base` for one combination.
pub fn config_for(base: &SimConfig, observed: DetectorKind, unobserved: DetectorKind) -> SimConfig {
    SimConfig {
        observed,
        unobserved,
        ..base.clone()
    }
}
