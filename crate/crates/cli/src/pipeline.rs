//! Subcommand implementations. Every command writes its outputs below the
//! output directory and returns the files it produced.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use qsmooth::algebra::{qubit_liouvillian, steady_state, BlochVector};
use qsmooth::correlators::{predict_all, CorrelatorModel, CorrelatorReport, CSV_HEADER};
use qsmooth::experiment::{analyze, combination_index, for_each_run, RunPurities};
use qsmooth::metrics::yz_projection_purity_bloch;
use qsmooth::record_io;
use qsmooth::smoothing::{smooth_record, CandidateSource};
use qsmooth::unravelling::{click_rate, DetectorKind, SimConfig, Unravelling};

use crate::config::Config;

pub const SIMULATE_DONE: &str = "simulate.done";
pub const SMOOTH_DONE: &str = "smooth.done";

/// Outcome of a batch command over runs.
#[derive(Debug, Default, Serialize)]
pub struct BatchStats {
    pub computed: usize,
    pub skipped: usize,
}

pub fn run_dir(out: &Path, label: &str, run: usize) -> PathBuf {
    out.join(label).join(format!("run_{run:05}"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn is_done(marker: &Path, hash: &str) -> bool {
    fs::read_to_string(marker).map(|s| s.trim() == hash).unwrap_or(false)
}

#[derive(Serialize)]
struct SteadyReport {
    bloch: [f64; 3],
    purity: f64,
    click_rate_observed: f64,
    click_rate_unobserved: f64,
}

pub fn steady(config: &Config, out: &Path) -> Result<Vec<PathBuf>> {
    let p = &config.physics;
    let rho = steady_state(&qubit_liouvillian(p.omega, p.gamma)?)?;
    let b = BlochVector::from_pauli(&rho.pauli());
    let sim = config.sim_config(DetectorKind::N, DetectorKind::N)?;
    let report = SteadyReport {
        bloch: [b.x, b.y, b.z],
        purity: b.purity(),
        click_rate_observed: click_rate(&sim.observed_detector(), &rho),
        click_rate_unobserved: click_rate(&sim.unobserved_detector(), &rho),
    };
    let path = out.join("steady.json");
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &report)?;
    writeln!(w)?;
    w.flush()?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(vec![path])
}

/// Generates the true trajectory and both records of every run, plus the
/// observed-only filter. Runs with a matching done marker are skipped.
pub fn simulate(config: &Config, sim: &SimConfig, out: &Path) -> Result<(Vec<PathBuf>, BatchStats)> {
    let model = Unravelling::new(sim)?;
    let label = sim.combination_label();
    let combo = combination_index(sim.observed, sim.unobserved);
    let hash = config.run_hash();
    let results = for_each_run(sim.n_observed, |run| {
        let dir = run_dir(out, &label, run);
        let files = vec![dir.join("observed.rec"), dir.join("unobserved.rec"), dir.join("trajectory.csv")];
        if is_done(&dir.join(SIMULATE_DONE), &hash) {
            return Ok((files, false));
        }
        let data = model.generate_run(&mut qsmooth::rng::record_stream(sim.seed, combo, run))?;
        let filtered = model.filter_record(&data.observed)?;
        fs::create_dir_all(&dir)?;
        record_io::save(&data.observed, &files[0])?;
        record_io::save(&data.unobserved, &files[1])?;
        write_trajectory(&files[2], &data.times, &data.true_states, &filtered)?;
        fs::write(dir.join(SIMULATE_DONE), &hash)?;
        Ok((files, true))
    })
    .map_err(anyhow::Error::from)?;
    Ok(collect(results))
}

fn collect(results: Vec<(Vec<PathBuf>, bool)>) -> (Vec<PathBuf>, BatchStats) {
    let mut stats = BatchStats::default();
    let mut files = Vec::new();
    for (f, computed) in results {
        if computed {
            stats.computed += 1;
        } else {
            stats.skipped += 1;
        }
        files.extend(f);
    }
    (files, stats)
}

fn write_trajectory(path: &Path, times: &[f64], truth: &[BlochVector], filtered: &[BlochVector]) -> qsmooth::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,x_T,y_T,z_T,P_T,P_T_yz,x_F,y_F,z_F,P_F")?;
    for ((t, b), f) in times.iter().zip(truth).zip(filtered) {
        writeln!(
            w,
            "{t},{},{},{},{},{},{},{},{},{}",
            b.x,
            b.y,
            b.z,
            b.purity(),
            yz_projection_purity_bloch(b),
            f.x,
            f.y,
            f.z,
            f.purity()
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Smooths every simulated observed record with fresh candidates.
pub fn smooth(config: &Config, sim: &SimConfig, out: &Path) -> Result<(Vec<PathBuf>, BatchStats)> {
    let model = Unravelling::new(sim)?;
    let label = sim.combination_label();
    let combo = combination_index(sim.observed, sim.unobserved);
    let hash = config.run_hash();
    let results = for_each_run(sim.n_observed, |run| {
        let dir = run_dir(out, &label, run);
        let path = dir.join("smoothed.csv");
        if is_done(&dir.join(SMOOTH_DONE), &hash) {
            return Ok((vec![path], false));
        }
        if !is_done(&dir.join(SIMULATE_DONE), &hash) {
            return Err(qsmooth::Error::Config(format!(
                "{} has no simulation for this configuration; run `simulate` first",
                dir.display()
            )));
        }
        let observed = record_io::load(&dir.join("observed.rec"))?;
        let source = CandidateSource::Sampled {
            seed: sim.seed,
            combination: combo,
            run,
            count: sim.n_candidates,
        };
        let trajectory = smooth_record(&model, &observed, source)?;
        trajectory.write_csv(BufWriter::new(File::create(&path)?))?;
        fs::write(dir.join(SMOOTH_DONE), &hash)?;
        Ok((vec![path], true))
    })
    .map_err(anyhow::Error::from)?;
    Ok(collect(results))
}

/// Numeric CSV with a header row, as a map from column name to values.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
        let header = reader.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            rows.push(
                rec.iter()
                    .map(|f| f.parse::<f64>().with_context(|| format!("bad number {f:?} in {}", path.display())))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(Self { header, rows })
    }

    fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self
            .header
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("missing column {name}"))?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }
}

fn load_purities(dir: &Path) -> Result<RunPurities> {
    let traj = Table::read(&dir.join("trajectory.csv"))?;
    let smoothed = Table::read(&dir.join("smoothed.csv"))?;
    Ok(RunPurities {
        filtered: smoothed.column("P_F")?,
        smoothed: smoothed.column("P_S")?,
        smoothed_variance: smoothed.column("dP_S")?.iter().map(|d| d * d).collect(),
        true_purity: traj.column("P_T")?,
        true_yz: traj.column("P_T_yz")?,
    })
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub combination: String,
    pub reference: String,
    #[serde(rename = "R_A_ss")]
    pub r_a_ss: f64,
    #[serde(rename = "dR_A_ss")]
    pub d_r_a_ss: f64,
    #[serde(rename = "R_R_ss")]
    pub r_r_ss: f64,
    #[serde(rename = "dR_R_ss")]
    pub d_r_r_ss: f64,
    #[serde(rename = "N_O")]
    pub n_observed: usize,
    #[serde(rename = "N_U")]
    pub n_candidates: usize,
    pub seed: u64,
    pub config_hash: String,
}

/// Recovery curves and steady-state figures of merit from smoothed runs.
pub fn metrics(config: &Config, sim: &SimConfig, out: &Path) -> Result<(Vec<PathBuf>, Summary)> {
    let label = sim.combination_label();
    if sim.n_observed < 2 {
        bail!("{label}: metrics need at least 2 observed records, configuration has {}", sim.n_observed);
    }
    let runs = (0..sim.n_observed)
        .map(|run| {
            let dir = run_dir(out, &label, run);
            if !is_done(&dir.join(SMOOTH_DONE), &config.run_hash()) {
                bail!("{} is not smoothed for this configuration; run `smooth` first", dir.display());
            }
            load_purities(&dir)
        })
        .collect::<Result<Vec<_>>>()?;
    let report = analyze(sim, &runs, &config.analysis_options()?)?;
    let csv_path = out.join(&label).join("metrics.csv");
    report.write_csv(create(&csv_path)?)?;
    let summary = Summary {
        combination: label.clone(),
        reference: format!("{:?}", report.reference),
        r_a_ss: report.r_a_ss.mean,
        d_r_a_ss: report.r_a_ss.error(),
        r_r_ss: report.r_r_ss.mean,
        d_r_r_ss: report.r_r_ss.error(),
        n_observed: sim.n_observed,
        n_candidates: sim.n_candidates,
        seed: sim.seed,
        config_hash: config.full_hash(),
    };
    let json_path = out.join(&label).join("summary.json");
    let mut w = create(&json_path)?;
    serde_json::to_writer_pretty(&mut w, &summary)?;
    writeln!(w)?;
    w.flush()?;
    Ok((vec![csv_path, json_path], summary))
}

fn correlator_model(config: &Config) -> Result<(CorrelatorModel, Vec<f64>, f64)> {
    let p = &config.physics;
    let c = &config.correlators;
    if (p.gamma_o - p.gamma_u).abs() > 1e-12 {
        bail!("correlators assume equal channel rates, got gamma_o = {} and gamma_u = {}", p.gamma_o, p.gamma_u);
    }
    if c.grid_points == 0 || !(c.tau_max_periods > 0.0) || !(c.big_t_periods > 0.0) {
        bail!("correlator grid needs positive points, tau_max_periods and big_t_periods");
    }
    let model = CorrelatorModel::new(p.omega, p.gamma, p.gamma_o)?;
    let period = model.rabi_period();
    let step = c.tau_max_periods * period / c.grid_points as f64;
    let taus = (1..=c.grid_points).map(|j| j as f64 * step).collect();
    Ok((model, taus, c.big_t_periods * period))
}

pub fn correlators(config: &Config, out: &Path) -> Result<Vec<PathBuf>> {
    let (model, taus, big_t) = correlator_model(config)?;
    let path = out.join("correlators.csv");
    let mut w = create(&path)?;
    writeln!(w, "{CSV_HEADER}")?;
    for o in DetectorKind::ALL {
        for u in DetectorKind::ALL {
            CorrelatorReport::compute(&model, o, u, &taus, big_t)?.write_rows(model.rabi_period(), &mut w)?;
        }
    }
    w.flush()?;
    Ok(vec![path])
}

pub fn predict(config: &Config, out: &Path) -> Result<Vec<PathBuf>> {
    let (model, taus, big_t) = correlator_model(config)?;
    let table = predict_all(&model, &taus, big_t, config.correlators.threshold)?;
    let path = out.join("predict.json");
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &table)?;
    writeln!(w)?;
    w.flush()?;
    for row in &table {
        let level = row.level.map_or("unclassified".to_string(), |l| l.to_string());
        println!("{}{}  level {level}", row.observed, row.unobserved);
    }
    Ok(vec![path])
}

/// Lindblad reference trajectory at the stored times.
pub fn lindblad(sim: &SimConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let model = Unravelling::new(sim)?;
    let path = out.join("lindblad.csv");
    let mut w = create(&path)?;
    writeln!(w, "t,x,y,z,P")?;
    for (t, b) in sim.stored_times().iter().zip(model.lindblad_trajectory()?) {
        writeln!(w, "{t},{},{},{},{}", b.x, b.y, b.z, b.purity())?;
    }
    w.flush()?;
    Ok(vec![path])
}
