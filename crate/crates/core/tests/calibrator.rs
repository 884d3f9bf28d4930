use shoalcal::arena::canonical_geometry;
use shoalcal::calibrator::{Calibrator, CalibratorConfig, Population, RoundBudget};
use shoalcal::model::{simulate_group, GenomeBounds, SpeedDistribution};
use shoalcal::rng::stream_rng;
use shoalcal::stats::compute_stats;

const ROUNDS: usize = 10;
const GENERATIONS: u32 = 10;

/// Best performance of each of `ROUNDS` warm-started rounds against a
/// target simulated from a random genome.
fn recovery_run(seed: u64) -> Vec<f64> {
    let arena = canonical_geometry();
    let speeds = SpeedDistribution::default();
    let truth = GenomeBounds::default().random(&mut stream_rng(seed, &[0]));
    let fish = simulate_group(&truth.params(), &speeds, &arena, 5, 3000, 0.2, &mut stream_rng(seed, &[1]));
    let target = compute_stats(&fish, &arena, false).unwrap();
    let config = CalibratorConfig { population_size: 24, ..CalibratorConfig::default() };
    let calibrator = Calibrator::new(config, arena, speeds).unwrap();
    let mut rng = stream_rng(seed, &[2]);
    let mut population: Option<Population> = None;
    (0..ROUNDS)
        .map(|_| {
            let next = calibrator
                .evolve_round(population.as_ref(), &target, RoundBudget::generations(GENERATIONS), &mut rng)
                .unwrap();
            let best = next.best().unwrap().performance();
            population = Some(next);
            best
        })
        .collect()
}

#[test]
fn a_synthetic_target_is_recovered() {
    let mut recovered = 0;
    for seed in 1..=10 {
        let best = recovery_run(seed);
        let (first, last) = (best[0], best[ROUNDS - 1]);
        println!("seed {seed}: round 1 best {first:.3}, round {ROUNDS} best {last:.3}");
        recovered += usize::from(last > first && last > 0.75);
    }
    assert!(recovered >= 8, "{recovered}/10 seeds recovered the target");
}

#[test]
fn best_performance_never_drops_within_a_round() {
    let arena = canonical_geometry();
    let speeds = SpeedDistribution::default();
    let truth = GenomeBounds::default().random(&mut stream_rng(77, &[0]));
    let fish = simulate_group(&truth.params(), &speeds, &arena, 5, 600, 0.2, &mut stream_rng(77, &[1]));
    let target = compute_stats(&fish, &arena, false).unwrap();
    let config = CalibratorConfig { population_size: 8, ..CalibratorConfig::default() };
    let calibrator = Calibrator::new(config, arena, speeds).unwrap();
    let mut history = Vec::new();
    calibrator
        .evolve_round_with(None, &target, RoundBudget::generations(6), &mut stream_rng(77, &[2]), |p| {
            history.push(p.best().unwrap().performance());
        })
        .unwrap();
    assert_eq!(history.len(), 7);
    assert!(history.windows(2).all(|w| w[1] >= w[0]), "{history:?}");
}
