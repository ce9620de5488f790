mod config;
mod pipeline;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use qsmooth::experiment::{combination_index, COMBINATIONS};
use qsmooth::rng::stream_id;
use qsmooth::unravelling::DetectorKind;

use config::{digest, Config};

const WORKERS_ENV: &str = "QSMOOTH_WORKERS";

#[derive(Parser, Debug)]
#[command(name = "qsmooth", version, about = "Quantum state smoothing experiments for a driven qubit")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML configuration; every field is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (the QSMOOTH_WORKERS environment variable takes precedence).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Restrict to one combination such as dNdY (default: all nine).
    #[arg(long, global = true)]
    combination: Option<String>,
    /// N_O = 3000 observed records with N_U = 10⁴ candidates each.
    #[arg(long, global = true)]
    paper_scale: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Steady state and click rates.
    Steady,
    /// True trajectories, records and observed-only filters.
    Simulate,
    /// Smoothed trajectories of simulated records.
    Smooth,
    /// Recovery curves and steady-state figures of merit.
    Metrics,
    /// Two- and three-time record correlators for all nine combinations.
    Correlators,
    /// Smoothing-power levels from the correlator vanishing pattern.
    Predict,
    /// Complete data bundle for one figure.
    Reproduce {
        #[arg(long)]
        figure: u32,
        /// Multiplies the configured N_O and N_U.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
}

#[derive(Serialize)]
struct OutputFile {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct RunStreams {
    combination: String,
    runs: usize,
    /// Stream id of run 0's record; run r adds r << 24, candidate i adds 1 + i.
    first_record_stream: u64,
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    tool_version: &'static str,
    config: Config,
    config_hash: String,
    run_hash: String,
    seed: u64,
    workers: usize,
    streams: Vec<RunStreams>,
    batches: Vec<(String, pipeline::BatchStats)>,
    outputs: Vec<OutputFile>,
    wall_clock_seconds: f64,
}

fn parse_combination(label: &str) -> Result<(DetectorKind, DetectorKind)> {
    let ok = label.len() == 4 && label.is_char_boundary(2);
    if ok {
        if let (Ok(o), Ok(u)) = (label[..2].parse(), label[2..].parse()) {
            return Ok((o, u));
        }
    }
    bail!("invalid combination {label:?}; expected e.g. dNdY")
}

fn selected(global: &Global) -> Result<Vec<(DetectorKind, DetectorKind)>> {
    match &global.combination {
        Some(label) => Ok(vec![parse_combination(label)?]),
        None => Ok(COMBINATIONS.to_vec()),
    }
}

fn workers(global: &Global) -> Result<usize> {
    let from_env = match std::env::var(WORKERS_ENV) {
        Ok(v) => Some(v.parse::<usize>().with_context(|| format!("{WORKERS_ENV}={v:?} is not a count"))?),
        Err(_) => None,
    };
    Ok(from_env
        .or(global.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1))
}

struct Session {
    config: Config,
    out: PathBuf,
    combos: Vec<(DetectorKind, DetectorKind)>,
    outputs: Vec<PathBuf>,
    batches: Vec<(String, pipeline::BatchStats)>,
}

impl Session {
    fn simulate(&mut self) -> Result<()> {
        for &(o, u) in &self.combos {
            let sim = self.config.sim_config(o, u)?;
            log::info!("simulating {} ({} runs)", sim.combination_label(), sim.n_observed);
            let (files, stats) = pipeline::simulate(&self.config, &sim, &self.out)?;
            self.outputs.extend(files);
            self.batches.push((format!("simulate {}", sim.combination_label()), stats));
        }
        Ok(())
    }

    fn smooth(&mut self) -> Result<()> {
        for &(o, u) in &self.combos {
            let sim = self.config.sim_config(o, u)?;
            log::info!("smoothing {} ({} runs × {} candidates)", sim.combination_label(), sim.n_observed, sim.n_candidates);
            let (files, stats) = pipeline::smooth(&self.config, &sim, &self.out)?;
            self.outputs.extend(files);
            self.batches.push((format!("smooth {}", sim.combination_label()), stats));
        }
        Ok(())
    }

    fn metrics(&mut self) -> Result<()> {
        let mut summaries = Vec::new();
        for &(o, u) in &self.combos {
            let sim = self.config.sim_config(o, u)?;
            let (files, summary) = pipeline::metrics(&self.config, &sim, &self.out)?;
            println!(
                "{}  R_A,ss = {:.5} ± {:.5}  R_R,ss = {:.4} ± {:.4}",
                summary.combination, summary.r_a_ss, summary.d_r_a_ss, summary.r_r_ss, summary.d_r_r_ss
            );
            self.outputs.extend(files);
            summaries.push(summary);
        }
        let path = self.out.join("summary.json");
        std::fs::write(&path, serde_json::to_string_pretty(&summaries)? + "\n")?;
        self.outputs.push(path);
        Ok(())
    }
}

fn reproduce(session: &mut Session, figure: u32, scale: f64) -> Result<()> {
    if !(scale > 0.0) {
        bail!("scale must be positive");
    }
    let sim = &mut session.config.simulation;
    sim.n_observed = ((sim.n_observed as f64 * scale).round() as usize).max(2);
    sim.n_candidates = ((sim.n_candidates as f64 * scale).round() as usize).max(1);
    session.out = session.out.join(format!("fig{figure}"));
    match figure {
        2 => {
            // one sample trajectory each for three contrasting combinations
            session.config.simulation.n_observed = 1;
            session.combos = vec![
                (DetectorKind::N, DetectorKind::Y),
                (DetectorKind::Y, DetectorKind::X),
                (DetectorKind::X, DetectorKind::X),
            ];
            session.simulate()?;
            session.smooth()
        }
        3 | 4 | 6 => {
            session.simulate()?;
            session.smooth()?;
            session.metrics()?;
            let sim = session.config.sim_config(DetectorKind::N, DetectorKind::N)?;
            let files = pipeline::lindblad(&sim, &session.out)?;
            session.outputs.extend(files);
            Ok(())
        }
        5 => {
            let mut files = pipeline::correlators(&session.config, &session.out)?;
            files.extend(pipeline::predict(&session.config, &session.out)?);
            session.outputs.extend(files);
            Ok(())
        }
        other => bail!("unknown figure {other}; expected one of 2, 3, 4, 5, 6"),
    }
}

fn relative(out: &Path, p: &Path) -> String {
    p.strip_prefix(out).unwrap_or(p).display().to_string()
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let start = Instant::now();
    let n_workers = workers(&cli.global)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n_workers)
        .build_global()
        .context("starting worker pool")?;

    let mut config = Config::load(cli.global.config.as_deref())?;
    if let Some(seed) = cli.global.seed {
        config.simulation.seed = seed;
    }
    if cli.global.paper_scale {
        config.simulation.n_observed = 3000;
        config.simulation.n_candidates = 10_000;
    }
    let root = cli.global.out_dir.clone();
    std::fs::create_dir_all(&root).with_context(|| format!("creating {}", root.display()))?;
    let mut session = Session {
        config,
        out: root.clone(),
        combos: selected(&cli.global)?,
        outputs: Vec::new(),
        batches: Vec::new(),
    };

    let name = match &cli.command {
        Command::Steady => {
            session.outputs = pipeline::steady(&session.config, &session.out)?;
            "steady".to_string()
        }
        Command::Simulate => {
            session.simulate()?;
            "simulate".into()
        }
        Command::Smooth => {
            session.smooth()?;
            "smooth".into()
        }
        Command::Metrics => {
            session.metrics()?;
            "metrics".into()
        }
        Command::Correlators => {
            session.outputs = pipeline::correlators(&session.config, &session.out)?;
            "correlators".into()
        }
        Command::Predict => {
            session.outputs = pipeline::predict(&session.config, &session.out)?;
            "predict".into()
        }
        Command::Reproduce { figure, scale } => {
            reproduce(&mut session, *figure, *scale)?;
            format!("reproduce-fig{figure}")
        }
    };

    let streams = session
        .combos
        .iter()
        .map(|&(o, u)| RunStreams {
            combination: format!("{o}{u}"),
            runs: session.config.simulation.n_observed,
            first_record_stream: stream_id(combination_index(o, u), 0, 0),
        })
        .collect();
    let outputs = session
        .outputs
        .iter()
        .map(|p| {
            let bytes = std::fs::read(p).with_context(|| format!("hashing {}", p.display()))?;
            Ok(OutputFile {
                path: relative(&root, p),
                sha256: digest(&bytes),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        command: name.clone(),
        tool_version: env!("CARGO_PKG_VERSION"),
        config_hash: session.config.full_hash(),
        run_hash: session.config.run_hash(),
        seed: session.config.simulation.seed,
        config: session.config,
        workers: n_workers,
        streams,
        batches: session.batches,
        outputs,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    let path = root.join(format!("manifest-{name}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    log::info!("wrote {}", path.display());
    Ok(())
}
