use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LabError;
use crate::arena::{ArenaGeometry, ArenaSpec};
use crate::calibrator::CalibratorConfig;
use crate::model::{Genome, GenomeBounds, SpeedDistribution, SpeedSpec};
use crate::wire::SocketEndpoints;

/// Fish genome used when a config does not name one. The fish gather in
/// the room centres: from the centre they never head for the walls or the
/// corridor, near walls they wander, and from the wall band or the
/// corridor they are pulled back towards the centre.
pub const DEFAULT_GROUND_TRUTH: [f64; 18] =
    [0.0, 20.0, 0.0, 0.05, 8.7, 0.0, 2.37, 0.0, 2.0, 2.53, 20.0, 1.0, 5.0, 3.78, 0.0, 0.0, 0.2, 5.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    #[serde(alias = "in-process")]
    Inproc,
    Sockets,
}

/// How simulated time relates to wall-clock time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    /// The controller waits for each round's genome before simulating past
    /// its application time. Results are independent of machine speed.
    Lockstep,
    /// The controller runs at `speedup` times real time and rounds are
    /// capped at `report_period_s / speedup` wall seconds.
    Realtime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    pub duration_s: f64,
    pub control_dt_s: f64,
    pub report_period_s: f64,
    pub window_s: f64,
    pub first_round_s: f64,
    pub n_fish: usize,
    pub n_robots: usize,
    /// Simulated seconds per wall-clock second.
    pub speedup: f64,
    pub ground_truth_genome: Genome,
    /// Slow sinusoidal drift of every ground-truth gene, ±20% over the run.
    pub perturb_ground_truth: bool,
    pub master_seed: u64,
    pub transport: TransportKind,
    pub clock: ClockMode,
    /// Generation cap per calibration round; required in lockstep mode.
    pub generations_per_round: Option<u32>,
    /// Longest wait for a round's genome in lockstep mode, wall seconds.
    pub lockstep_timeout_s: f64,
    pub handshake_timeout_s: f64,
    pub calibrator: CalibratorConfig,
    pub arena: ArenaSpec,
    pub speeds: SpeedSpec,
    pub sockets: SocketEndpoints,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment_id: "shoalcal".into(),
            duration_s: 1800.0,
            control_dt_s: 0.2,
            report_period_s: 60.0,
            window_s: 120.0,
            first_round_s: 120.0,
            n_fish: 4,
            n_robots: 1,
            speedup: 20.0,
            ground_truth_genome: Genome(DEFAULT_GROUND_TRUTH),
            perturb_ground_truth: false,
            master_seed: 1,
            transport: TransportKind::Inproc,
            clock: ClockMode::Lockstep,
            generations_per_round: Some(10),
            lockstep_timeout_s: 600.0,
            handshake_timeout_s: 10.0,
            calibrator: CalibratorConfig { population_size: 24, ..CalibratorConfig::default() },
            arena: *ArenaGeometry::default().spec(),
            speeds: SpeedDistribution::default().into(),
            sockets: SocketEndpoints::default(),
        }
    }
}

fn is_multiple(x: f64, step: f64) -> bool {
    let k = (x / step).round();
    k >= 1.0 && (k * step - x).abs() <= 1e-9 * x.abs().max(1.0)
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, LabError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| LabError::ConfigInvalid(format!("config JSON: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::ConfigInvalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<(), LabError> {
        let invalid = |m: String| Err(LabError::ConfigInvalid(m));
        let times = [
            ("duration_s", self.duration_s),
            ("control_dt_s", self.control_dt_s),
            ("report_period_s", self.report_period_s),
            ("window_s", self.window_s),
            ("first_round_s", self.first_round_s),
        ];
        for (name, v) in times {
            if !(v.is_finite() && v > 0.0) {
                return invalid(format!("{name} must be positive, got {v}"));
            }
        }
        if !is_multiple(self.report_period_s, self.control_dt_s) {
            return invalid("report_period_s must be a multiple of control_dt_s".into());
        }
        for (name, v) in
            [("window_s", self.window_s), ("first_round_s", self.first_round_s), ("duration_s", self.duration_s)]
        {
            if !is_multiple(v, self.report_period_s) {
                return invalid(format!("{name} must be a multiple of report_period_s"));
            }
        }
        if self.window_s < self.report_period_s {
            return invalid("window_s must be at least report_period_s".into());
        }
        if self.first_round_s < self.window_s {
            return invalid("first_round_s must be at least window_s".into());
        }
        if self.duration_s <= self.first_round_s {
            return invalid("duration_s must exceed first_round_s".into());
        }
        if self.n_fish == 0 {
            return invalid("n_fish must be at least 1".into());
        }
        if !(self.speedup.is_finite() && self.speedup >= 1.0) {
            return invalid(format!("speedup must be at least 1, got {}", self.speedup));
        }
        if !(self.lockstep_timeout_s > 0.0 && self.handshake_timeout_s > 0.0) {
            return invalid("timeouts must be positive".into());
        }
        match (self.clock, self.generations_per_round) {
            (_, Some(0)) => return invalid("generations_per_round must be at least 1".into()),
            (ClockMode::Lockstep, None) => return invalid("lockstep clock needs generations_per_round".into()),
            _ => {}
        }
        self.calibrator.validate().map_err(|e| LabError::ConfigInvalid(e.to_string()))?;
        if !GenomeBounds::default().contains(&self.ground_truth_genome) {
            return invalid("ground_truth_genome is outside the model's parameter domain".into());
        }
        self.geometry()?;
        self.speed_distribution()?;
        Ok(())
    }

    pub fn geometry(&self) -> Result<ArenaGeometry, LabError> {
        ArenaGeometry::new(self.arena).map_err(|e| LabError::ConfigInvalid(e.to_string()))
    }

    pub fn speed_distribution(&self) -> Result<SpeedDistribution, LabError> {
        SpeedDistribution::try_from(self.speeds.clone()).map_err(|e| LabError::ConfigInvalid(e.to_string()))
    }

    pub fn frames_per_period(&self) -> usize {
        (self.report_period_s / self.control_dt_s).round() as usize
    }
}
