use std::net::TcpListener;
use std::path::Path;

use shoalcal::calibrator::{CalibratorConfig, EvalSettings};
use shoalcal::lab::{
    batch_path, ground_truth_at, read_rounds, read_scores, replay, run_experiment, run_nodes, ClockMode,
    ExperimentConfig, LabError, Schedule, TransportKind, ROUNDS_FILE,
};
use shoalcal::wire::{InProcBus, NodeRole, SocketEndpoints, Topic};

fn small(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        duration_s: 360.0,
        master_seed: seed,
        generations_per_round: Some(2),
        calibrator: CalibratorConfig {
            population_size: 6,
            eval: EvalSettings { sim_seconds: 20.0, ..EvalSettings::default() },
            ..CalibratorConfig::default()
        },
        ..ExperimentConfig::default()
    }
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn small_run_follows_the_schedule_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(3);
    let summary = run_experiment(&cfg, dir.path()).unwrap();
    let schedule = Schedule::new(&cfg);
    assert_eq!(summary.controller.batches_published, 6);
    assert_eq!(summary.analyst.windows.len(), 5);
    assert_eq!(summary.analyst.windows[0].t_end_s, 120.0);
    let rounds = read_rounds(dir.path()).unwrap();
    let starts: Vec<f64> = rounds.iter().map(|r| r.t_start_s).collect();
    assert_eq!(starts, vec![120.0, 180.0, 240.0, 300.0]);
    assert_eq!(rounds.iter().map(|r| r.round).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
    assert!(rounds.iter().all(|r| r.generations_done == 2));
    // Each round's genome drives the robot from the next report on.
    let applied: Vec<(f64, u32)> = summary.controller.genomes_applied.clone();
    assert_eq!(applied, vec![(180.0, 1), (240.0, 2), (300.0, 3)]);
    assert!(summary.controller.acks_received >= 5);
    assert_eq!(schedule.round_reports().count(), 4);

    let report = replay(dir.path()).unwrap();
    assert_eq!(report.windows_checked, 5);
    assert_eq!(report.rounds_checked, 4);
    assert_eq!(report.records[0].calibration.unwrap().round, 1);
    assert!(report.records[4].calibration.is_none());
    for (live, rec) in summary.analyst.windows.iter().zip(&report.records) {
        assert_eq!(live.report, rec.integration);
    }
}

#[test]
fn identical_seeds_give_identical_logs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&small(11), a.path()).unwrap();
    run_experiment(&small(11), b.path()).unwrap();
    assert_eq!(read(&a.path().join(ROUNDS_FILE)), read(&b.path().join(ROUNDS_FILE)));
    assert_eq!(read_scores(a.path()).unwrap(), read_scores(b.path()).unwrap());
    assert_eq!(read(&batch_path(a.path(), 6)), read(&batch_path(b.path(), 6)));
}

#[test]
fn warm_start_carries_the_population_over() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run_experiment(&small(5), dir.path()).unwrap();
    let traces = &summary.calibrator.traces;
    assert_eq!(traces.len(), 4);
    for w in traces.windows(2) {
        assert_eq!(w[1].initial, w[0].last);
    }
}

#[test]
fn without_robots_the_integration_score_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { n_robots: 0, ..small(2) };
    let summary = run_experiment(&cfg, dir.path()).unwrap();
    assert!(summary.analyst.windows.iter().all(|w| w.report.s == 1.0));
}

#[test]
fn lost_scores_leave_the_initial_genome_in_place() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { lockstep_timeout_s: 0.05, ..small(4) };
    cfg.validate().unwrap();
    std::fs::create_dir_all(dir.path()).unwrap();
    let bus = InProcBus::new();
    bus.block_topic(Topic::Scores);
    let summary = run_nodes(&cfg, dir.path(), |role| Ok(bus.link(role))).unwrap();
    assert!(summary.controller.genomes_applied.is_empty());
    assert!(summary.calibrator.rounds.is_empty());
    assert_eq!(summary.controller.batches_published, 6);
    let published = bus.published();
    for (role, topic) in published {
        assert!(role.may_publish(topic));
    }
}

#[test]
fn replay_detects_truncated_and_edited_logs() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&small(6), dir.path()).unwrap();
    let scores = dir.path().join("scores.csv");
    let original = read(&scores);
    let edited = original.replacen("\n2,", "\n7,", 1);
    std::fs::write(&scores, edited).unwrap();
    assert!(matches!(replay(dir.path()), Err(LabError::CorruptLog(_))));
    std::fs::write(&scores, original).unwrap();
    replay(dir.path()).unwrap();

    let batch = batch_path(dir.path(), 3);
    let text = read(&batch);
    std::fs::write(&batch, &text[..text.len() / 2]).unwrap();
    assert!(matches!(replay(dir.path()), Err(LabError::CorruptLog(_))));
}

fn free_port() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    format!("127.0.0.1:{}", l.local_addr().unwrap().port())
}

#[test]
fn socket_and_in_process_runs_agree() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let inproc = small(9);
    let sockets = ExperimentConfig {
        transport: TransportKind::Sockets,
        sockets: SocketEndpoints { trajectory: free_port(), scores: free_port(), params: free_port() },
        ..small(9)
    };
    run_experiment(&inproc, a.path()).unwrap();
    run_experiment(&sockets, b.path()).unwrap();
    assert_eq!(read(&a.path().join(ROUNDS_FILE)), read(&b.path().join(ROUNDS_FILE)));
    assert_eq!(read(&a.path().join("scores.csv")), read(&b.path().join("scores.csv")));
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        ExperimentConfig { window_s: 30.0, ..ExperimentConfig::default() },
        ExperimentConfig { first_round_s: 60.0, ..ExperimentConfig::default() },
        ExperimentConfig { duration_s: 120.0, ..ExperimentConfig::default() },
        ExperimentConfig { speedup: 0.5, ..ExperimentConfig::default() },
        ExperimentConfig { n_fish: 0, ..ExperimentConfig::default() },
        ExperimentConfig { report_period_s: 61.1, ..ExperimentConfig::default() },
    ];
    for cfg in bad {
        assert!(matches!(cfg.validate(), Err(LabError::ConfigInvalid(_))), "{cfg:?}");
    }
    ExperimentConfig::default().validate().unwrap();
    let back = ExperimentConfig::from_json(&ExperimentConfig::default().to_json()).unwrap();
    assert_eq!(back, ExperimentConfig::default());
    assert!(ExperimentConfig::from_json(r#"{"duration_s": 1800, "bogus": 1}"#).is_err());
    let partial = ExperimentConfig::from_json(r#"{"master_seed": 9}"#).unwrap();
    assert_eq!(partial.master_seed, 9);
    assert_eq!(NodeRole::Analyst.upstream(), NodeRole::Controller);
}

#[test]
fn realtime_clock_runs_to_completion_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { clock: ClockMode::Realtime, speedup: 120.0, generations_per_round: None, ..small(12) };
    let summary = run_experiment(&cfg, dir.path()).unwrap();
    assert_eq!(summary.controller.batches_published, 6);
    assert_eq!(summary.analyst.windows.len(), 5);
    // Genomes are only ever applied after the round that produced them.
    for (t, round) in &summary.controller.genomes_applied {
        assert!(*t >= 120.0 + 60.0 * f64::from(*round));
    }
    replay(dir.path()).unwrap();
}

#[test]
fn drifting_fish_change_with_time() {
    let cfg = ExperimentConfig { perturb_ground_truth: true, ..small(1) };
    let (early, late) = (ground_truth_at(&cfg, 0.0), ground_truth_at(&cfg, 90.0));
    assert_ne!(early, late);
    assert!(cfg.calibrator.bounds.contains(&late));
    let fixed = small(1);
    assert_eq!(ground_truth_at(&fixed, 0.0), ground_truth_at(&fixed, 90.0));
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&cfg, dir.path()).unwrap();
    replay(dir.path()).unwrap();
}
