//! Persisted logs of an experiment directory and their replay.
//!
//! ```text
//! <dir>/config.json
//! <dir>/trajectories/batch_<k>.csv   k = 1, 2, ...
//! <dir>/scores.csv                   window,t_start_s,t_end_s,S,I_D,I_W,I_O,I_T
//! <dir>/rounds.csv                   round,t_start_s,generations_done,best_S,best_I_D,...,g1..g18
//! <dir>/best_genome.json
//! ```

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{analyst_step, ExperimentConfig, LabError, Schedule};
use crate::model::{Genome, GenomeBounds, GENOME_LEN};
use crate::stats::SimilarityReport;
use crate::trajectory::TrajectoryBatch;

pub const CONFIG_FILE: &str = "config.json";
pub const SCORES_FILE: &str = "scores.csv";
pub const ROUNDS_FILE: &str = "rounds.csv";
pub const BEST_GENOME_FILE: &str = "best_genome.json";
pub const TRAJECTORY_DIR: &str = "trajectories";
pub const SERIES_HEADER: [&str; 5] = ["biomimetic", "inter-individual", "wall-distance", "occupation", "transitions"];

pub fn batch_path(dir: &Path, k: u32) -> PathBuf {
    dir.join(TRAJECTORY_DIR).join(format!("batch_{k}.csv"))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, LabError> {
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(File::create(path)?))
}

fn corrupt(path: &Path, e: impl std::fmt::Display) -> LabError {
    LabError::CorruptLog(format!("{}: {e}", path.display()))
}

/// One row of `scores.csv`: the robot-integration report of a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub window: u32,
    pub t_start_s: f64,
    pub t_end_s: f64,
    #[serde(flatten)]
    pub report: SimilarityReport,
}

/// One row of `rounds.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRow {
    pub round: u32,
    pub t_start_s: f64,
    pub generations_done: u32,
    pub best: SimilarityReport,
    pub genome: Genome,
}

const ROUND_FIXED: [&str; 8] =
    ["round", "t_start_s", "generations_done", "best_S", "best_I_D", "best_I_W", "best_I_O", "best_I_T"];

fn round_header() -> Vec<String> {
    ROUND_FIXED.iter().map(|s| s.to_string()).chain((1..=GENOME_LEN).map(|i| format!("g{i}"))).collect()
}

#[derive(Debug)]
pub struct ScoreLog(csv::Writer<File>);

impl ScoreLog {
    pub fn create(dir: &Path) -> Result<Self, LabError> {
        let mut w = csv_writer(&dir.join(SCORES_FILE))?;
        w.write_record(["window", "t_start_s", "t_end_s", "S", "I_D", "I_W", "I_O", "I_T"])?;
        w.flush()?;
        Ok(ScoreLog(w))
    }

    pub fn append(&mut self, row: &ScoreRow) -> Result<(), LabError> {
        let r = &row.report;
        let mut fields = vec![row.window.to_string()];
        fields.extend([row.t_start_s, row.t_end_s, r.s, r.i_d, r.i_w, r.i_o, r.i_t].iter().map(f64::to_string));
        self.0.write_record(&fields)?;
        self.0.flush()?;
        Ok(())
    }
}

#[derive(Debug)]
pub struct RoundLog(csv::Writer<File>);

impl RoundLog {
    pub fn create(dir: &Path) -> Result<Self, LabError> {
        let mut w = csv_writer(&dir.join(ROUNDS_FILE))?;
        w.write_record(round_header())?;
        w.flush()?;
        Ok(RoundLog(w))
    }

    pub fn append(&mut self, row: &RoundRow) -> Result<(), LabError> {
        let b = &row.best;
        let mut fields = vec![row.round.to_string(), row.t_start_s.to_string(), row.generations_done.to_string()];
        fields.extend([b.s, b.i_d, b.i_w, b.i_o, b.i_t].iter().map(f64::to_string));
        fields.extend(row.genome.0.iter().map(f64::to_string));
        self.0.write_record(&fields)?;
        self.0.flush()?;
        Ok(())
    }
}

/// Contents of `best_genome.json`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestGenome {
    pub round: u32,
    #[serde(rename = "best_S")]
    pub best_s: f64,
    pub genome: Genome,
}

pub fn write_best_genome(dir: &Path, best: &BestGenome) -> Result<(), LabError> {
    let mut text = serde_json::to_string_pretty(best).expect("genome serialises");
    text.push('\n');
    std::fs::write(dir.join(BEST_GENOME_FILE), text)?;
    Ok(())
}

fn parse_f64(path: &Path, line: usize, s: &str) -> Result<f64, LabError> {
    s.trim().parse().map_err(|_| corrupt(path, format!("line {line}: bad number {s:?}")))
}

fn parse_u32(path: &Path, line: usize, s: &str) -> Result<u32, LabError> {
    s.trim().parse().map_err(|_| corrupt(path, format!("line {line}: bad integer {s:?}")))
}

pub fn read_scores(dir: &Path) -> Result<Vec<ScoreRow>, LabError> {
    let path = dir.join(SCORES_FILE);
    let mut rdr = csv::Reader::from_path(&path).map_err(|e| corrupt(&path, e))?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| corrupt(&path, e))?;
        let line = i + 2;
        if rec.len() != 8 {
            return Err(corrupt(&path, format!("line {line} has {} fields", rec.len())));
        }
        let f = |j: usize| parse_f64(&path, line, &rec[j]);
        rows.push(ScoreRow {
            window: parse_u32(&path, line, &rec[0])?,
            t_start_s: f(1)?,
            t_end_s: f(2)?,
            report: SimilarityReport { s: f(3)?, i_d: f(4)?, i_w: f(5)?, i_o: f(6)?, i_t: f(7)? },
        });
    }
    Ok(rows)
}

pub fn read_rounds(dir: &Path) -> Result<Vec<RoundRow>, LabError> {
    let path = dir.join(ROUNDS_FILE);
    let mut rdr = csv::Reader::from_path(&path).map_err(|e| corrupt(&path, e))?;
    let headers = rdr.headers().map_err(|e| corrupt(&path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != round_header() {
        return Err(corrupt(&path, "unexpected header"));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| corrupt(&path, e))?;
        let line = i + 2;
        if rec.len() != ROUND_FIXED.len() + GENOME_LEN {
            return Err(corrupt(&path, format!("line {line} has {} fields", rec.len())));
        }
        let f = |j: usize| parse_f64(&path, line, &rec[j]);
        let mut genome = [0.0; GENOME_LEN];
        for (g, j) in genome.iter_mut().zip(ROUND_FIXED.len()..) {
            *g = f(j)?;
        }
        rows.push(RoundRow {
            round: parse_u32(&path, line, &rec[0])?,
            t_start_s: f(1)?,
            generations_done: parse_u32(&path, line, &rec[2])?,
            best: SimilarityReport { s: f(3)?, i_d: f(4)?, i_w: f(5)?, i_o: f(6)?, i_t: f(7)? },
            genome: Genome(genome),
        });
    }
    Ok(rows)
}

/// Calibrator outcome of the round started when a window closed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub round: u32,
    #[serde(rename = "best_S")]
    pub best_s: f64,
    pub generations_done: u32,
}

/// Per-window view of an experiment: the robot-integration report and,
/// when a round started at the window's end, that round's outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub window: u32,
    pub t_start_s: f64,
    pub t_end_s: f64,
    pub integration: SimilarityReport,
    pub calibration: Option<RoundOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub records: Vec<RoundRecord>,
    pub windows_checked: usize,
    pub rounds_checked: usize,
}

pub fn read_batches(dir: &Path, cfg: &ExperimentConfig) -> Result<Vec<TrajectoryBatch>, LabError> {
    let schedule = Schedule::new(cfg);
    let expected_frames = cfg.frames_per_period();
    let agents = cfg.n_fish + cfg.n_robots;
    (1..=schedule.report_count())
        .map(|k| {
            let path = batch_path(dir, k);
            let file = File::open(&path).map_err(|e| corrupt(&path, e))?;
            let batch = TrajectoryBatch::read_csv(file).map_err(|e| corrupt(&path, e))?;
            if batch.frames().len() != expected_frames || batch.agent_count() != agents {
                return Err(corrupt(
                    &path,
                    format!(
                        "holds {} frames of {} agents, expected {expected_frames} of {agents}",
                        batch.frames().len(),
                        batch.agent_count()
                    ),
                ));
            }
            Ok(batch)
        })
        .collect()
}

/// Recomputes every window's scores from the trajectory files and checks
/// them, and the round log, against what the run persisted.
pub fn replay(dir: &Path) -> Result<ReplayReport, LabError> {
    let cfg_path = dir.join(CONFIG_FILE);
    let text = std::fs::read_to_string(&cfg_path).map_err(|e| corrupt(&cfg_path, e))?;
    let cfg = ExperimentConfig::from_json(&text).map_err(|e| corrupt(&cfg_path, e))?;
    let g = cfg.geometry()?;
    let schedule = Schedule::new(&cfg);
    let batches = read_batches(dir, &cfg)?;
    let scores = read_scores(dir)?;
    let rounds = read_rounds(dir)?;

    let expected_windows: Vec<u32> = schedule.scored_reports().collect();
    if scores.len() != expected_windows.len() {
        return Err(LabError::CorruptLog(format!(
            "{SCORES_FILE} holds {} windows, expected {}",
            scores.len(),
            expected_windows.len()
        )));
    }
    let mut mismatches = Vec::new();
    let wb = schedule.window_batches() as usize;
    for (row, &k) in scores.iter().zip(&expected_windows) {
        let window = schedule.window_at(k).expect("scored report");
        let slice: Vec<&TrajectoryBatch> = batches[k as usize - wb..k as usize].iter().collect();
        let live = analyst_step(&slice, &g, cfg.window_s, window)?;
        let recomputed =
            ScoreRow { window, t_start_s: live.t_start_s, t_end_s: live.t_end_s, report: live.integration };
        if recomputed != *row {
            mismatches.push(format!("window {window}: logged {row:?}, recomputed {recomputed:?}"));
        }
    }

    let bounds = &cfg.calibrator.bounds;
    let round_reports: Vec<u32> = schedule.round_reports().collect();
    if rounds.len() > round_reports.len() {
        mismatches.push(format!("{} rounds logged, at most {} scheduled", rounds.len(), round_reports.len()));
    }
    let mut last_t = f64::NEG_INFINITY;
    for (i, r) in rounds.iter().enumerate() {
        let Some(k) = schedule.report_index(r.t_start_s).filter(|&k| schedule.is_round_report(k)) else {
            mismatches.push(format!("round {} starts off schedule at t={}", r.round, r.t_start_s));
            continue;
        };
        if r.round as usize != i + 1 || r.t_start_s <= last_t || schedule.round_at(k).is_none() {
            mismatches.push(format!("round {} out of sequence", r.round));
        }
        if !bounds.contains(&r.genome) || !GenomeBounds::default().contains(&r.genome) {
            mismatches.push(format!("round {} genome out of bounds", r.round));
        }
        last_t = r.t_start_s;
    }
    if !mismatches.is_empty() {
        return Err(LabError::CorruptLog(format!("{} mismatches; first: {}", mismatches.len(), mismatches[0])));
    }

    let records = scores
        .iter()
        .map(|s| RoundRecord {
            window: s.window,
            t_start_s: s.t_start_s,
            t_end_s: s.t_end_s,
            integration: s.report,
            calibration: rounds.iter().find(|r| r.t_start_s == s.t_end_s).map(|r| RoundOutcome {
                round: r.round,
                best_s: r.best.s,
                generations_done: r.generations_done,
            }),
        })
        .collect();
    Ok(ReplayReport { records, windows_checked: scores.len(), rounds_checked: rounds.len() })
}

/// Per-window feature scores for plotting, one row per window.
pub fn write_series<W: Write>(records: &[RoundRecord], w: W) -> Result<(), LabError> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(SERIES_HEADER)?;
    for r in records {
        let i = &r.integration;
        out.write_record([i.s, i.i_d, i.i_w, i.i_o, i.i_t].iter().map(f64::to_string))?;
    }
    out.flush()?;
    Ok(())
}
