//! Experiment configuration file (TOML). Every field has a default, so an
//! empty file describes the standard desk-scale experiment.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use qsmooth::algebra::{BlochVector, DensityMatrix};
use qsmooth::experiment::AnalysisOptions;
use qsmooth::metrics::{TrueReference, DEFAULT_DENOMINATOR_GUARD};
use qsmooth::unravelling::{DetectorKind, OstensibleConfig, SimConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub physics: Physics,
    pub simulation: Simulation,
    pub analysis: Analysis,
    pub correlators: Correlators,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialState {
    /// `"excited"`, `"ground"` or `"mixed"`.
    Named(String),
    Bloch([f64; 3]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Physics {
    pub omega: f64,
    pub gamma: f64,
    pub gamma_o: f64,
    pub gamma_u: f64,
    pub initial_state: InitialState,
}

impl Default for Physics {
    fn default() -> Self {
        Self {
            omega: 5.0,
            gamma: 1.0,
            gamma_o: 0.5,
            gamma_u: 0.5,
            initial_state: InitialState::Named("excited".into()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Simulation {
    pub dt: f64,
    pub t_final: f64,
    pub store_every: usize,
    pub n_observed: usize,
    pub n_candidates: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observed_jump_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unobserved_jump_rate: Option<f64>,
}

impl Default for Simulation {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_final: 8.0,
            store_every: 10,
            n_observed: 200,
            n_candidates: 2000,
            seed: 0,
            observed_jump_rate: None,
            unobserved_jump_rate: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Analysis {
    pub ss_interval: [f64; 2],
    /// Correlation time of the steady-state average; defaults to `1/γ`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_corr: Option<f64>,
    pub guard: f64,
    /// `"default"`, `"unity"` or `"yz"`.
    pub reference: String,
}

impl Default for Analysis {
    fn default() -> Self {
        Self {
            ss_interval: [4.5, 6.0],
            t_corr: None,
            guard: DEFAULT_DENOMINATOR_GUARD,
            reference: "default".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Correlators {
    pub grid_points: usize,
    /// Grid end in Rabi periods.
    pub tau_max_periods: f64,
    /// `𝒯` in Rabi periods.
    pub big_t_periods: f64,
    pub threshold: f64,
}

impl Default for Correlators {
    fn default() -> Self {
        Self {
            grid_points: qsmooth::correlators::DEFAULT_GRID_POINTS,
            tau_max_periods: 3.0,
            big_t_periods: 1.0,
            threshold: qsmooth::correlators::DEFAULT_VANISH_THRESHOLD,
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
            }
        }
    }

    pub fn initial_state(&self) -> Result<DensityMatrix> {
        Ok(match &self.physics.initial_state {
            InitialState::Named(name) => match name.as_str() {
                "excited" => DensityMatrix::excited(),
                "ground" => DensityMatrix::ground(),
                "mixed" => DensityMatrix::maximally_mixed(),
                other => bail!("unknown initial state {other:?}"),
            },
            InitialState::Bloch([x, y, z]) => DensityMatrix::from_bloch(BlochVector::new(*x, *y, *z))?,
        })
    }

    pub fn sim_config(&self, observed: DetectorKind, unobserved: DetectorKind) -> Result<SimConfig> {
        let p = &self.physics;
        let s = &self.simulation;
        let config = SimConfig {
            omega: p.omega,
            gamma: p.gamma,
            gamma_o: p.gamma_o,
            gamma_u: p.gamma_u,
            dt: s.dt,
            t_final: s.t_final,
            rho0: self.initial_state()?,
            observed,
            unobserved,
            n_observed: s.n_observed,
            n_candidates: s.n_candidates,
            seed: s.seed,
            ss_interval: (self.analysis.ss_interval[0], self.analysis.ss_interval[1]),
            store_every: s.store_every,
            ostensible: OstensibleConfig {
                observed_jump_rate: s.observed_jump_rate,
                unobserved_jump_rate: s.unobserved_jump_rate,
            },
        };
        config.validate()?;
        Ok(config)
    }

    pub fn analysis_options(&self) -> Result<AnalysisOptions> {
        let reference = match self.analysis.reference.as_str() {
            "default" => None,
            "unity" => Some(TrueReference::Unity),
            "yz" => Some(TrueReference::YzProjection),
            other => bail!("unknown reference {other:?}; expected default, unity or yz"),
        };
        Ok(AnalysisOptions {
            reference,
            t_corr: self.analysis.t_corr,
            guard: self.analysis.guard,
        })
    }

    /// Hash of everything that determines the simulated and smoothed runs.
    pub fn run_hash(&self) -> String {
        digest(&serde_json::to_vec(&(&self.physics, &self.simulation)).expect("config serializes"))
    }

    pub fn full_hash(&self) -> String {
        digest(&serde_json::to_vec(self).expect("config serializes"))
    }
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
