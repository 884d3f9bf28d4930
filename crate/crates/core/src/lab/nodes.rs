//! The three node roles. Each one owns its state and talks to the others
//! only through its [`Link`].

use std::collections::VecDeque;
use std::f64::consts::TAU;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::records::{batch_path, write_best_genome, BestGenome, RoundLog, RoundRow, ScoreLog, ScoreRow};
use super::{ClockMode, ExperimentConfig, LabError, Schedule};
use crate::arena::ArenaGeometry;
use crate::calibrator::{Calibrator, Population, RoundBudget};
use crate::model::{random_agent, step_agent, AgentState, Genome, GenomeBounds, ModelParams, SpeedDistribution};
use crate::rng::{label, stream_rng};
use crate::stats::{compute_stats, similarity, BehaviorStats};
use crate::trajectory::{frame_time, Frame, TrajectoryBatch};
use crate::wire::{
    AckMsg, Envelope, Link, NodeRole, ParamsMsg, Payload, ScoresMsg, ShutdownMsg, TrajectoryMsg, WireError,
};

const POLL: Duration = Duration::from_millis(50);
const PERTURBATION: f64 = 0.2;

fn transport(e: WireError) -> LabError {
    LabError::Transport(e.to_string())
}

fn shutdown(cfg: &ExperimentConfig, t: f64, origin: NodeRole, reason: &str) -> Envelope {
    Envelope::new(&cfg.experiment_id, t, Payload::Shutdown(ShutdownMsg { origin, reason: reason.into() }))
}

/// Longest silence a downstream node accepts from its upstream.
fn idle_limit(cfg: &ExperimentConfig) -> Duration {
    Duration::from_secs_f64(cfg.lockstep_timeout_s + cfg.report_period_s / cfg.speedup + cfg.handshake_timeout_s)
}

/// Tells the other nodes this one stopped early, so they do not wait on it.
fn announce_failure<L: Link>(cfg: &ExperimentConfig, link: &mut L, role: NodeRole, e: &LabError) {
    log::error!("{role}: {e}");
    if let Err(w) = link.publish(&shutdown(cfg, 0.0, role, &e.to_string())) {
        log::warn!("{role}: could not announce the failure: {w}");
    }
}

/// One model step of the robot: it reacts to the fish only and is assumed
/// to reach the sampled position.
pub fn robot_controller_step<R: Rng + ?Sized>(
    fish: &[AgentState],
    robot: &AgentState,
    genome: &Genome,
    g: &ArenaGeometry,
    dist: &SpeedDistribution,
    dt: f64,
    rng: &mut R,
) -> AgentState {
    step_agent(robot, fish, &genome.params(), dist, g, dt, rng)
}

/// Ground-truth genome at time `t`: fixed, or with every gene drifting
/// sinusoidally by ±20% over the run when perturbation is on.
pub fn ground_truth_at(cfg: &ExperimentConfig, t: f64) -> Genome {
    let base = cfg.ground_truth_genome;
    if !cfg.perturb_ground_truth {
        return base;
    }
    let n = base.0.len() as f64;
    let mut g = Genome(std::array::from_fn(|i| {
        let phase = TAU * i as f64 / n;
        base.0[i] * (1.0 + PERTURBATION * (TAU * t / cfg.duration_s + phase).sin())
    }));
    GenomeBounds::default().clamp(&mut g);
    g
}

/// Fish-only statistics of the last `window_s` seconds and the score of
/// the whole group against them.
pub fn analyst_step(
    batches: &[&TrajectoryBatch],
    g: &ArenaGeometry,
    window_s: f64,
    window_index: u32,
) -> Result<ScoresMsg, LabError> {
    if batches.is_empty() {
        return Err(LabError::InsufficientData { have_s: 0.0, need_s: window_s });
    }
    let all = TrajectoryBatch::concat(batches)?;
    let (start, end) = (all.start_time().unwrap_or(0.0), all.end_time().unwrap_or(0.0));
    let have = end - start;
    if have + 0.5 * all.frame_period() < window_s {
        return Err(LabError::InsufficientData { have_s: have, need_s: window_s });
    }
    let keep = (window_s / all.frame_period()).round() as usize;
    let frames = all.frames()[all.frames().len() - keep..].to_vec();
    let window =
        TrajectoryBatch::new(all.frame_period(), all.agent_ids().to_vec(), all.robot_flags().to_vec(), frames)?;
    let control = compute_stats(&window, g, false)?;
    let integration = similarity(&compute_stats(&window, g, true)?, &control)?;
    Ok(ScoresMsg { window_index, t_start_s: end - window_s, t_end_s: end, control, integration })
}

/// The simulated tank: ground-truth fish plus robots, each agent with its
/// own random stream.
#[derive(Debug, Clone)]
pub struct Tank {
    pub fish: Vec<AgentState>,
    pub robots: Vec<AgentState>,
    fish_rngs: Vec<ChaCha8Rng>,
    robot_rngs: Vec<ChaCha8Rng>,
}

impl Tank {
    pub fn new(cfg: &ExperimentConfig, g: &ArenaGeometry, dist: &SpeedDistribution) -> Self {
        let mut placement = stream_rng(cfg.master_seed, &[label::PLACEMENT]);
        let fish = (0..cfg.n_fish).map(|_| random_agent(g, dist, false, &mut placement)).collect();
        let robots = (0..cfg.n_robots).map(|_| random_agent(g, dist, true, &mut placement)).collect();
        Tank {
            fish,
            robots,
            fish_rngs: (0..cfg.n_fish).map(|i| stream_rng(cfg.master_seed, &[label::FISH, i as u64])).collect(),
            robot_rngs: (0..cfg.n_robots).map(|j| stream_rng(cfg.master_seed, &[label::ROBOT, j as u64])).collect(),
        }
    }

    pub fn positions(&self) -> Vec<crate::arena::Point> {
        self.fish.iter().chain(&self.robots).map(|a| a.position).collect()
    }

    /// Synchronous step: every agent reacts to the previous positions. Fish
    /// see fish and robots; robots see fish.
    pub fn step(
        &mut self,
        fish_params: &ModelParams,
        robot_genome: &Genome,
        g: &ArenaGeometry,
        dist: &SpeedDistribution,
        dt: f64,
    ) {
        let old_fish = self.fish.clone();
        let mut others = Vec::with_capacity(old_fish.len() + self.robots.len());
        for (i, rng) in self.fish_rngs.iter_mut().enumerate() {
            others.clear();
            others.extend(old_fish.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, a)| *a));
            others.extend(self.robots.iter().copied());
            self.fish[i] = step_agent(&old_fish[i], &others, fish_params, dist, g, dt, rng);
        }
        for (robot, rng) in self.robots.iter_mut().zip(&mut self.robot_rngs) {
            *robot = robot_controller_step(&old_fish, robot, robot_genome, g, dist, dt, rng);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerSummary {
    pub batches_published: u32,
    /// `(t_sim_s, round)` of every genome the robot switched to.
    pub genomes_applied: Vec<(f64, u32)>,
    pub acks_received: u32,
    pub final_robot_genome: Genome,
}

struct ControllerState<'a> {
    cfg: &'a ExperimentConfig,
    robot_genome: Genome,
    pending: Vec<(f64, ParamsMsg)>,
    applied: Vec<(f64, u32)>,
    acks: u32,
    calibrator_gone: bool,
}

impl ControllerState<'_> {
    fn handle(&mut self, msg: Envelope) {
        match msg.payload {
            Payload::Params(p) => {
                let domain = GenomeBounds::default();
                if p.within(&self.cfg.calibrator.bounds) && p.within(&domain) {
                    self.pending.push((msg.t_sim_s, p));
                } else {
                    log::warn!("controller: ignoring out-of-bounds genome from round {}", p.round);
                }
            }
            Payload::Ack(_) => self.acks += 1,
            Payload::Shutdown(s) if s.origin == NodeRole::Controller.upstream() => {
                log::warn!("controller: calibrator stopped ({}); keeping the current genome", s.reason);
                self.calibrator_gone = true;
            }
            other => log::debug!("controller: ignoring {}", other.topic()),
        }
    }

    /// Applies every pending genome due at or before `t`, oldest first.
    fn apply_due(&mut self, t: f64) {
        self.pending.sort_by(|a, b| a.0.total_cmp(&b.0));
        let due = self.pending.iter().take_while(|(at, _)| *at <= t + 1e-9).count();
        for (_, p) in self.pending.drain(..due) {
            self.robot_genome = p.genome();
            self.applied.push((t, p.round));
        }
    }

    fn has_params_for(&self, t: f64) -> bool {
        self.pending.iter().any(|(at, _)| (at - t).abs() <= 1e-6)
    }
}

/// Drives the tank for the whole run, publishing one batch per report
/// period and switching the robot to each calibrated genome when it is due.
pub fn run_controller<L: Link>(
    cfg: &ExperimentConfig,
    link: &mut L,
    out: &Path,
) -> Result<ControllerSummary, LabError> {
    let result = controller_loop(cfg, link, out);
    if let Err(e) = &result {
        announce_failure(cfg, link, NodeRole::Controller, e);
    }
    result
}

fn controller_loop<L: Link>(cfg: &ExperimentConfig, link: &mut L, out: &Path) -> Result<ControllerSummary, LabError> {
    let g = cfg.geometry()?;
    let dist = cfg.speed_distribution()?;
    let schedule = Schedule::new(cfg);
    let fpp = cfg.frames_per_period();
    let dt = cfg.control_dt_s;
    std::fs::create_dir_all(out.join(super::records::TRAJECTORY_DIR))?;

    let initial = cfg.calibrator.bounds.random(&mut stream_rng(cfg.master_seed, &[label::INITIAL_GENOME]));
    let mut st = ControllerState {
        cfg,
        robot_genome: initial,
        pending: Vec::new(),
        applied: Vec::new(),
        acks: 0,
        calibrator_gone: false,
    };
    let mut tank = Tank::new(cfg, &g, &dist);
    let ids: Vec<u32> = (0..(cfg.n_fish + cfg.n_robots) as u32).collect();
    let flags: Vec<bool> = (0..cfg.n_fish + cfg.n_robots).map(|i| i >= cfg.n_fish).collect();
    let fixed_truth = (!cfg.perturb_ground_truth).then(|| cfg.ground_truth_genome.params());
    let started = Instant::now();

    for k in 1..=schedule.report_count() {
        let t0 = schedule.report_time(k - 1);
        if cfg.clock == ClockMode::Lockstep && k >= 2 && schedule.is_round_report(k - 2) {
            wait_for_params(&mut st, link, t0)?;
        }
        let mut frames = Vec::with_capacity(fpp);
        for f in 0..fpp {
            let t = frame_time(u64::from(k - 1) * fpp as u64 + f as u64, dt);
            if cfg.clock == ClockMode::Realtime {
                let due = started + Duration::from_secs_f64(t / cfg.speedup);
                if let Some(wait) = due.checked_duration_since(Instant::now()) {
                    std::thread::sleep(wait);
                }
                while let Some(msg) = link.try_recv().map_err(transport)? {
                    st.handle(msg);
                }
            }
            st.apply_due(t);
            frames.push(Frame { t, positions: tank.positions() });
            let drifted;
            let truth = match &fixed_truth {
                Some(p) => p,
                None => {
                    drifted = ground_truth_at(cfg, t).params();
                    &drifted
                }
            };
            tank.step(truth, &st.robot_genome, &g, &dist, dt);
        }
        let batch = TrajectoryBatch::new(dt, ids.clone(), flags.clone(), frames)?;
        batch.write_csv(std::fs::File::create(batch_path(out, k))?)?;
        let msg = TrajectoryMsg { batch_index: k, batch };
        link.publish(&Envelope::new(&cfg.experiment_id, schedule.report_time(k), Payload::Trajectory(msg)))
            .map_err(transport)?;
        while let Some(msg) = link.try_recv().map_err(transport)? {
            st.handle(msg);
        }
    }
    let end = schedule.report_time(schedule.report_count());
    link.publish(&shutdown(cfg, end, NodeRole::Controller, "run complete")).map_err(transport)?;
    Ok(ControllerSummary {
        batches_published: schedule.report_count(),
        genomes_applied: st.applied,
        acks_received: st.acks,
        final_robot_genome: st.robot_genome,
    })
}

fn wait_for_params<L: Link>(st: &mut ControllerState<'_>, link: &mut L, t: f64) -> Result<(), LabError> {
    let deadline = Instant::now() + Duration::from_secs_f64(st.cfg.lockstep_timeout_s);
    while !st.calibrator_gone && !st.has_params_for(t) {
        let Some(left) = deadline.checked_duration_since(Instant::now()) else {
            log::warn!("controller: no genome for t={t} s, keeping the current one");
            return Ok(());
        };
        if let Some(msg) = link.recv_timeout(left.min(POLL)).map_err(transport)? {
            st.handle(msg);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalystSummary {
    pub windows: Vec<ScoreRow>,
    pub batches_received: u32,
}

/// Scores every full window as batches arrive and acknowledges each batch.
pub fn run_analyst<L: Link>(cfg: &ExperimentConfig, link: &mut L, out: &Path) -> Result<AnalystSummary, LabError> {
    let result = analyst_loop(cfg, link, out);
    if let Err(e) = &result {
        announce_failure(cfg, link, NodeRole::Analyst, e);
    }
    result
}

fn analyst_loop<L: Link>(cfg: &ExperimentConfig, link: &mut L, out: &Path) -> Result<AnalystSummary, LabError> {
    let g = cfg.geometry()?;
    let schedule = Schedule::new(cfg);
    let mut log = ScoreLog::create(out)?;
    let mut recent: VecDeque<TrajectoryBatch> = VecDeque::new();
    let mut last_index = 0;
    let mut summary = AnalystSummary { windows: Vec::new(), batches_received: 0 };
    let idle = idle_limit(cfg);
    let mut last_seen = Instant::now();
    loop {
        let Some(msg) = link.recv_timeout(POLL).map_err(transport)? else {
            if last_seen.elapsed() > idle {
                return Err(LabError::Transport("analyst: controller went silent".into()));
            }
            continue;
        };
        last_seen = Instant::now();
        let t = msg.t_sim_s;
        match msg.payload {
            Payload::Trajectory(m) => {
                summary.batches_received += 1;
                let ack = Payload::Ack(AckMsg { batch_index: m.batch_index });
                link.publish(&Envelope::new(&cfg.experiment_id, t, ack)).map_err(transport)?;
                if m.batch_index != last_index + 1 {
                    log::warn!("analyst: batch {} follows {last_index}; restarting the window", m.batch_index);
                    recent.clear();
                }
                last_index = m.batch_index;
                recent.push_back(m.batch);
                while recent.len() > schedule.window_batches() as usize {
                    recent.pop_front();
                }
                let Some(window) = schedule.window_at(m.batch_index) else { continue };
                if recent.len() < schedule.window_batches() as usize {
                    continue;
                }
                let slice: Vec<&TrajectoryBatch> = recent.iter().collect();
                let scores = analyst_step(&slice, &g, cfg.window_s, window)?;
                let row = ScoreRow {
                    window,
                    t_start_s: scores.t_start_s,
                    t_end_s: scores.t_end_s,
                    report: scores.integration,
                };
                log.append(&row)?;
                summary.windows.push(row);
                let env = Envelope::new(&cfg.experiment_id, scores.t_end_s, Payload::Scores(Box::new(scores)));
                link.publish(&env).map_err(transport)?;
            }
            Payload::Shutdown(s) if s.origin == NodeRole::Analyst.upstream() => {
                link.publish(&shutdown(cfg, t, NodeRole::Analyst, "upstream finished")).map_err(transport)?;
                return Ok(summary);
            }
            other => log::debug!("analyst: ignoring {}", other.topic()),
        }
    }
}

/// Genomes entering and leaving one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    pub round: u32,
    pub initial: Vec<Genome>,
    pub last: Vec<Genome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibratorSummary {
    pub rounds: Vec<RoundRow>,
    pub traces: Vec<RoundTrace>,
}

/// Runs one evolution round per scheduled report against the newest fish
/// statistics, warm-starting from the previous round's population.
pub fn run_calibrator<L: Link>(
    cfg: &ExperimentConfig,
    link: &mut L,
    out: &Path,
) -> Result<CalibratorSummary, LabError> {
    let result = calibrator_loop(cfg, link, out);
    if let Err(e) = &result {
        announce_failure(cfg, link, NodeRole::Calibrator, e);
    }
    result
}

fn calibrator_loop<L: Link>(cfg: &ExperimentConfig, link: &mut L, out: &Path) -> Result<CalibratorSummary, LabError> {
    let calibrator = Calibrator::new(cfg.calibrator.clone(), cfg.geometry()?, cfg.speed_distribution()?)?;
    let schedule = Schedule::new(cfg);
    let mut rng = stream_rng(cfg.master_seed, &[label::CALIBRATOR]);
    let mut log = RoundLog::create(out)?;
    let mut population: Option<Population> = None;
    let mut summary = CalibratorSummary { rounds: Vec::new(), traces: Vec::new() };
    let budget = match cfg.clock {
        ClockMode::Lockstep => RoundBudget::new(cfg.generations_per_round, None)?,
        ClockMode::Realtime => RoundBudget::new(
            cfg.generations_per_round,
            Some(Duration::from_secs_f64(cfg.report_period_s / cfg.speedup)),
        )?,
    };
    let idle = idle_limit(cfg);
    let mut last_seen = Instant::now();
    let mut backlog: VecDeque<Envelope> = VecDeque::new();
    loop {
        let msg = match backlog.pop_front() {
            Some(m) => m,
            None => match link.recv_timeout(POLL).map_err(transport)? {
                Some(m) => m,
                None if last_seen.elapsed() > idle => {
                    return Err(LabError::Transport("calibrator: analyst went silent".into()));
                }
                None => continue,
            },
        };
        last_seen = Instant::now();
        let t = msg.t_sim_s;
        match msg.payload {
            Payload::Scores(scores) => {
                if cfg.clock == ClockMode::Realtime {
                    while let Some(next) = link.try_recv().map_err(transport)? {
                        backlog.push_back(next);
                    }
                    if backlog.iter().any(|m| matches!(m.payload, Payload::Scores(_))) {
                        log::warn!("calibrator: skipping stale scores for t={t} s");
                        continue;
                    }
                }
                let Some(k) = schedule.report_index(t).filter(|&k| schedule.is_round_report(k)) else { continue };
                let (next, trace) =
                    calibrate_round(&calibrator, population.as_ref(), &scores.control, budget, &mut rng)?;
                let best = next.best().expect("population is not empty");
                let row = RoundRow {
                    round: next.round_index,
                    t_start_s: t,
                    generations_done: next.generation,
                    best: best.features,
                    genome: best.genome,
                };
                log.append(&row)?;
                write_best_genome(out, &BestGenome { round: row.round, best_s: row.best.s, genome: row.genome })?;
                let params = ParamsMsg { round: row.round, genome: row.genome.0, best_s: row.best.s };
                let apply_at = schedule.report_time(schedule.apply_report(k));
                link.publish(&Envelope::new(&cfg.experiment_id, apply_at, Payload::Params(params)))
                    .map_err(transport)?;
                summary.rounds.push(row);
                summary.traces.push(trace);
                population = Some(next);
            }
            Payload::Shutdown(s) if s.origin == NodeRole::Calibrator.upstream() => {
                link.publish(&shutdown(cfg, t, NodeRole::Calibrator, "upstream finished")).map_err(transport)?;
                return Ok(summary);
            }
            other => log::debug!("calibrator: ignoring {}", other.topic()),
        }
    }
}

fn calibrate_round(
    calibrator: &Calibrator,
    seed: Option<&Population>,
    target: &BehaviorStats,
    budget: RoundBudget,
    rng: &mut ChaCha8Rng,
) -> Result<(Population, RoundTrace), LabError> {
    let mut initial = Vec::new();
    let next = calibrator.evolve_round_with(seed, target, budget, rng, |p| {
        if p.generation == 0 {
            initial = p.genomes();
        }
    })?;
    let trace = RoundTrace { round: next.round_index, initial, last: next.genomes() };
    Ok((next, trace))
}
