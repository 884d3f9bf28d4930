use super::ExperimentConfig;

/// Report, scoring and calibration instants of an experiment, all on the
/// report-period grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    period_s: f64,
    reports: u32,
    window_batches: u32,
    first_round_report: u32,
}

impl Schedule {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        let steps = |t: f64| (t / cfg.report_period_s).round() as u32;
        Schedule {
            period_s: cfg.report_period_s,
            reports: steps(cfg.duration_s),
            window_batches: steps(cfg.window_s),
            first_round_report: steps(cfg.first_round_s),
        }
    }

    /// Time of report `k` (1-based).
    pub fn report_time(&self, k: u32) -> f64 {
        f64::from(k) * self.period_s
    }

    pub fn report_count(&self) -> u32 {
        self.reports
    }

    /// Batches making up one scoring window.
    pub fn window_batches(&self) -> u32 {
        self.window_batches
    }

    /// Reports after which a full window exists.
    pub fn scored_reports(&self) -> impl Iterator<Item = u32> {
        self.window_batches..=self.reports
    }

    /// Window index (1-based) scored at report `k`.
    pub fn window_at(&self, k: u32) -> Option<u32> {
        (k >= self.window_batches && k <= self.reports).then(|| k - self.window_batches + 1)
    }

    /// Reports that start a calibration round: from the first round on, as
    /// long as the resulting genome can still be applied within the run.
    pub fn round_reports(&self) -> impl Iterator<Item = u32> {
        self.first_round_report..self.reports
    }

    pub fn is_round_report(&self, k: u32) -> bool {
        k >= self.first_round_report && k < self.reports
    }

    /// Calibration round (1-based) started at report `k`.
    pub fn round_at(&self, k: u32) -> Option<u32> {
        self.is_round_report(k).then(|| k - self.first_round_report + 1)
    }

    /// Report at which the genome of the round started at `k` takes effect.
    pub fn apply_report(&self, round_report: u32) -> u32 {
        round_report + 1
    }

    /// Report whose timestamp equals `t`, if any.
    pub fn report_index(&self, t: f64) -> Option<u32> {
        let k = (t / self.period_s).round();
        (k >= 1.0 && k <= f64::from(self.reports) && (k * self.period_s - t).abs() <= 1e-6).then_some(k as u32)
    }
}
