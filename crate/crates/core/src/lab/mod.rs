//! The virtual experiment: simulated fish, a robot driven by the latest
//! calibrated genome, the analyst and the calibrator, wired together over
//! [`crate::wire`].
//!
//! Every report period the controller publishes the frames it simulated,
//! the analyst scores the last window, and from the first round on the
//! calibrator evolves a genome against the newest fish statistics. A genome
//! computed from data up to `t` drives the robot from `t + report_period_s`.

mod config;
mod nodes;
mod records;
mod schedule;

use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use thiserror::Error;

use crate::calibrator::CalibratorError;
use crate::stats::StatsError;
use crate::trajectory::TrajectoryError;
use crate::wire::{InProcBus, Link, NodeRole, TcpLink, WireError};

pub use config::{ClockMode, ExperimentConfig, TransportKind, DEFAULT_GROUND_TRUTH};
pub use nodes::{
    analyst_step, ground_truth_at, robot_controller_step, run_analyst, run_calibrator, run_controller, AnalystSummary,
    CalibratorSummary, ControllerSummary, RoundTrace, Tank,
};
pub use records::{
    batch_path, read_batches, read_rounds, read_scores, replay, write_series, BestGenome, ReplayReport, RoundOutcome,
    RoundRecord, RoundRow, ScoreRow, BEST_GENOME_FILE, CONFIG_FILE, ROUNDS_FILE, SCORES_FILE, SERIES_HEADER,
    TRAJECTORY_DIR,
};
pub use schedule::Schedule;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("window needs {need_s} s of data, only {have_s} s available")]
    InsufficientData { have_s: f64, need_s: f64 },
    #[error("corrupt experiment log: {0}")]
    CorruptLog(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("{role} node failed: {message}")]
    NodeFailed { role: NodeRole, message: String },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Calibrator(#[from] CalibratorError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<WireError> for LabError {
    fn from(e: WireError) -> Self {
        LabError::Transport(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub dir: PathBuf,
    pub controller: ControllerSummary,
    pub analyst: AnalystSummary,
    pub calibrator: CalibratorSummary,
}

fn prepare_dir(cfg: &ExperimentConfig, out: &Path) -> Result<(), LabError> {
    std::fs::create_dir_all(out.join(TRAJECTORY_DIR))?;
    let mut text = cfg.to_json();
    text.push('\n');
    std::fs::write(out.join(CONFIG_FILE), text)?;
    Ok(())
}

/// Runs a whole experiment in this process and writes it to `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentSummary, LabError> {
    cfg.validate()?;
    prepare_dir(cfg, out)?;
    match cfg.transport {
        TransportKind::Inproc => {
            let bus = InProcBus::new();
            run_nodes(cfg, out, |role| Ok(bus.link(role)))
        }
        TransportKind::Sockets => {
            let timeout = Duration::from_secs_f64(cfg.handshake_timeout_s);
            run_nodes(cfg, out, |role| TcpLink::open(role, &cfg.sockets, timeout))
        }
    }
}

/// Runs the three roles on their own threads over links from `open`.
pub fn run_nodes<L, F>(cfg: &ExperimentConfig, out: &Path, open: F) -> Result<ExperimentSummary, LabError>
where
    L: Link,
    F: Fn(NodeRole) -> Result<L, WireError> + Sync,
{
    thread::scope(|s| {
        let open = &open;
        let controller = s.spawn(move || run_controller(cfg, &mut open(NodeRole::Controller)?, out));
        let analyst = s.spawn(move || run_analyst(cfg, &mut open(NodeRole::Analyst)?, out));
        let calibrator = s.spawn(move || run_calibrator(cfg, &mut open(NodeRole::Calibrator)?, out));
        let controller = join(NodeRole::Controller, controller);
        let analyst = join(NodeRole::Analyst, analyst);
        let calibrator = join(NodeRole::Calibrator, calibrator);
        Ok(ExperimentSummary {
            dir: out.to_path_buf(),
            controller: controller?,
            analyst: analyst?,
            calibrator: calibrator?,
        })
    })
}

fn join<T>(role: NodeRole, h: thread::ScopedJoinHandle<'_, Result<T, LabError>>) -> Result<T, LabError> {
    h.join().map_err(|_| LabError::NodeFailed { role, message: "panicked".into() })?
}

/// What a single node produced when run on its own.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeSummary {
    Controller(ControllerSummary),
    Analyst(AnalystSummary),
    Calibrator(CalibratorSummary),
}

/// Runs one role over the socket transport; the other roles run elsewhere.
pub fn run_node(cfg: &ExperimentConfig, role: NodeRole, out: &Path) -> Result<NodeSummary, LabError> {
    cfg.validate()?;
    prepare_dir(cfg, out)?;
    let mut link = TcpLink::open(role, &cfg.sockets, Duration::from_secs_f64(cfg.handshake_timeout_s))?;
    Ok(match role {
        NodeRole::Controller => NodeSummary::Controller(run_controller(cfg, &mut link, out)?),
        NodeRole::Analyst => NodeSummary::Analyst(run_analyst(cfg, &mut link, out)?),
        NodeRole::Calibrator => NodeSummary::Calibrator(run_calibrator(cfg, &mut link, out)?),
    })
}
