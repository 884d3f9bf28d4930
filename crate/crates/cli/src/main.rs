use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use shoalcal::arena::ArenaGeometry;
use shoalcal::calibrator::{Calibrator, CalibratorConfig, RoundBudget};
use shoalcal::lab::{self, BestGenome, ExperimentConfig, LabError, NodeSummary, TransportKind};
use shoalcal::model::{simulate_group, Genome, GenomeBounds, SpeedDistribution, DEFAULT_DT, GENOME_LEN};
use shoalcal::rng::stream_rng;
use shoalcal::stats::{compute_stats, similarity};
use shoalcal::trajectory::TrajectoryBatch;
use shoalcal::wire::NodeRole;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_TRANSPORT: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "shoalcal", version, about = "Closed-loop calibration of a stochastic fish-school model")]
struct Cli {
    /// Log progress to standard error (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a full virtual experiment.
    Run(RunArgs),
    /// Simulate the model alone and write its trajectories.
    Simulate(SimulateArgs),
    /// Score one trajectory file against another.
    Analyze(AnalyzeArgs),
    /// Run one offline calibration round against a trajectory file.
    Calibrate(CalibrateArgs),
    /// Recompute an experiment's scores and check them against its logs.
    Replay(ReplayArgs),
    /// Run the brute-force oracles.
    Selftest,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TransportArg {
    Inproc,
    Sockets,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RoleArg {
    Controller,
    Analyst,
    Calibrator,
}

impl From<RoleArg> for NodeRole {
    fn from(r: RoleArg) -> Self {
        match r {
            RoleArg::Controller => NodeRole::Controller,
            RoleArg::Analyst => NodeRole::Analyst,
            RoleArg::Calibrator => NodeRole::Calibrator,
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    speedup: Option<f64>,
    #[arg(long, value_enum)]
    transport: Option<TransportArg>,
    #[arg(long)]
    out: PathBuf,
    /// Node hosted by this process; required with the socket transport.
    #[arg(long, value_enum)]
    role: Option<RoleArg>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// JSON genome: an array of 18 numbers or a best_genome.json file.
    #[arg(long, required_unless_present = "random", conflicts_with = "random")]
    genome: Option<PathBuf>,
    /// Draw the genome uniformly within the default bounds.
    #[arg(long)]
    random: bool,
    #[arg(long, default_value_t = 5)]
    agents: usize,
    #[arg(long, default_value_t = 120.0)]
    seconds: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Reference trajectories; robot rows are left out.
    #[arg(long)]
    control: PathBuf,
    /// Trajectories to score, all agents included.
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Target trajectories; robot rows are left out.
    #[arg(long)]
    target: PathBuf,
    #[arg(long, default_value_t = 10)]
    generations: u32,
    #[arg(long, default_value_t = 24)]
    population: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    /// Experiment directory written by `run`.
    dir: PathBuf,
    /// Where to write the per-window feature series.
    #[arg(long)]
    out: PathBuf,
}

/// Error carrying the process exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn config(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: EXIT_CONFIG, error: error.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: EXIT_FAILURE, error }
    }
}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        let code = match e {
            LabError::ConfigInvalid(_) => EXIT_CONFIG,
            LabError::Transport(_) => EXIT_TRANSPORT,
            _ => EXIT_FAILURE,
        };
        Failure { code, error: e.into() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Simulate(a) => simulate(a),
        Command::Analyze(a) => analyze(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Replay(a) => replay(a),
        Command::Selftest => selftest(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(a: RunArgs) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.master_seed = seed;
    }
    if let Some(speedup) = a.speedup {
        cfg.speedup = speedup;
    }
    if let Some(t) = a.transport {
        cfg.transport = match t {
            TransportArg::Inproc => TransportKind::Inproc,
            TransportArg::Sockets => TransportKind::Sockets,
        };
    }
    cfg.validate()?;
    match (cfg.transport, a.role) {
        (TransportKind::Inproc, None) => {
            let s = lab::run_experiment(&cfg, &a.out)?;
            println!(
                "{} batches, {} scored windows, {} calibration rounds -> {}",
                s.controller.batches_published,
                s.analyst.windows.len(),
                s.calibrator.rounds.len(),
                a.out.display()
            );
            if let Some(w) = s.analyst.windows.last() {
                println!("final window S = {:.4}", w.report.s);
            }
        }
        (TransportKind::Sockets, Some(role)) => match lab::run_node(&cfg, role.into(), &a.out)? {
            NodeSummary::Controller(c) => println!("controller published {} batches", c.batches_published),
            NodeSummary::Analyst(s) => println!("analyst scored {} windows", s.windows.len()),
            NodeSummary::Calibrator(c) => println!("calibrator ran {} rounds", c.rounds.len()),
        },
        (TransportKind::Sockets, None) => {
            return Err(Failure::config(anyhow!("the socket transport needs --role")));
        }
        (TransportKind::Inproc, Some(_)) => {
            return Err(Failure::config(anyhow!("--role only applies to the socket transport")));
        }
    }
    Ok(())
}

fn read_genome(path: &Path) -> Result<Genome, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::config)?;
    let genes: Vec<f64> = match serde_json::from_str::<BestGenome>(&text) {
        Ok(best) => best.genome.0.to_vec(),
        Err(_) => serde_json::from_str(&text)
            .with_context(|| format!("{} is neither a genome array nor a best-genome file", path.display()))
            .map_err(Failure::config)?,
    };
    let genes: [f64; GENOME_LEN] = genes
        .try_into()
        .map_err(|v: Vec<f64>| Failure::config(anyhow!("genome has {} genes, expected {GENOME_LEN}", v.len())))?;
    let genome = Genome(genes);
    if !GenomeBounds::default().contains(&genome) {
        return Err(Failure::config(anyhow!("genome is outside the parameter bounds")));
    }
    Ok(genome)
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    if a.agents == 0 || !(a.seconds > 0.0 && a.seconds.is_finite()) {
        return Err(Failure::config(anyhow!("--agents and --seconds must be positive")));
    }
    let mut rng = stream_rng(a.seed, &[]);
    let genome = match &a.genome {
        Some(path) => read_genome(path)?,
        None => GenomeBounds::default().random(&mut rng),
    };
    let frames = (a.seconds / DEFAULT_DT).round() as usize;
    let g = ArenaGeometry::default();
    let batch =
        simulate_group(&genome.params(), &SpeedDistribution::default(), &g, a.agents, frames, DEFAULT_DT, &mut rng);
    let file = File::create(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    batch.write_csv(BufWriter::new(file)).context("writing trajectories")?;
    println!("{frames} frames of {} agents -> {}", a.agents, a.out.display());
    Ok(())
}

fn read_batch(path: &Path) -> Result<TrajectoryBatch, Failure> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display())).map_err(Failure::config)?;
    TrajectoryBatch::read_csv(file)
        .with_context(|| format!("{} is not a valid trajectory CSV", path.display()))
        .map_err(Failure::config)
}

fn analyze(a: AnalyzeArgs) -> Result<(), Failure> {
    let (control, test) = (read_batch(&a.control)?, read_batch(&a.test)?);
    let g = ArenaGeometry::default();
    let reference = compute_stats(&control, &g, false).context("control statistics").map_err(Failure::config)?;
    let scored = compute_stats(&test, &g, true).context("test statistics").map_err(Failure::config)?;
    let report = similarity(&scored, &reference).context("similarity")?;
    let mut text = serde_json::to_string_pretty(&report).context("serialising report")?;
    text.push('\n');
    std::fs::write(&a.out, text).with_context(|| format!("cannot write {}", a.out.display()))?;
    println!("S = {:.6}", report.s);
    Ok(())
}

fn calibrate(a: CalibrateArgs) -> Result<(), Failure> {
    let target = read_batch(&a.target)?;
    let g = ArenaGeometry::default();
    let stats = compute_stats(&target, &g, false).context("target statistics").map_err(Failure::config)?;
    let config = CalibratorConfig { population_size: a.population, ..CalibratorConfig::default() };
    let calibrator = Calibrator::new(config, g, SpeedDistribution::default()).map_err(Failure::config)?;
    let mut rng = stream_rng(a.seed, &[]);
    let pop = calibrator
        .evolve_round_with(None, &stats, RoundBudget::generations(a.generations), &mut rng, |p| {
            if let Some(best) = p.best() {
                log::info!("generation {}: best S = {:.4}", p.generation, best.performance());
            }
        })
        .context("calibration round")?;
    let best = pop.best().ok_or_else(|| anyhow!("empty population"))?;
    let out = BestGenome { round: pop.round_index, best_s: best.performance(), genome: best.genome };
    let mut text = serde_json::to_string_pretty(&out).context("serialising genome")?;
    text.push('\n');
    std::fs::write(&a.out, text).with_context(|| format!("cannot write {}", a.out.display()))?;
    println!("best S = {:.4} after {} generations", out.best_s, pop.generation);
    Ok(())
}

fn replay(a: ReplayArgs) -> Result<(), Failure> {
    let report = lab::replay(&a.dir)?;
    let file = File::create(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    lab::write_series(&report.records, BufWriter::new(file))?;
    println!(
        "{} windows and {} rounds checked, 0 mismatches -> {}",
        report.windows_checked,
        report.rounds_checked,
        a.out.display()
    );
    Ok(())
}

fn selftest() -> Result<(), Failure> {
    let report = shoalcal::selftest::run();
    for check in &report.checks {
        println!("{check}");
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure { code: EXIT_FAILURE, error: anyhow!("selftest failed") })
    }
}
