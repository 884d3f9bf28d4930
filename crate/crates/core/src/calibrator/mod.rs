//! Simulation-based multi-objective calibration of the model genome.
//!
//! Each individual is scored on three maximised objectives: its biomimetic
//! score against the target statistics (performance), its mean distance to
//! the other genomes (genotypic diversity) and its mean distance to the
//! other individuals' feature-similarity vectors (behavioural diversity).
//! A round runs NSGA-II generations until its budget is spent; the next
//! round starts from the final population of the previous one.

mod sorting;
mod variation;

use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arena::ArenaGeometry;
use crate::model::{simulate_group, Genome, GenomeBounds, SpeedDistribution, DEFAULT_DT, GENOME_LEN};
use crate::rng::{derive_seed, stream_rng};
use crate::stats::{compute_stats, similarity, BehaviorStats, SimilarityReport, StatsError};

pub use sorting::{crowding_distance, dominates, fast_nondominated_sort, mean_distances};
pub use variation::{binary_tournament, polynomial_mutation, sbx_crossover};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibratorError {
    #[error("diversity needs at least two individuals")]
    SingletonPopulation,
    #[error("invalid calibrator configuration: {0}")]
    InvalidConfig(String),
    #[error("seed population has {got} individuals, expected {expected}")]
    PopulationSize { got: usize, expected: usize },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Performance of one genome against a target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub performance: f64,
    pub features: SimilarityReport,
}

/// Simulation length and group size of one fitness evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub sim_seconds: f64,
    pub n_agents: usize,
    pub dt: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings { sim_seconds: 120.0, n_agents: 5, dt: DEFAULT_DT }
    }
}

/// Simulates `n_agents` agents driven by `genome` for `sim_seconds` and
/// scores their statistics against `target`.
pub fn evaluate(
    genome: &Genome,
    target: &BehaviorStats,
    g: &ArenaGeometry,
    dist: &SpeedDistribution,
    settings: &EvalSettings,
    seed: u64,
) -> Result<Evaluation, StatsError> {
    let mut rng = stream_rng(seed, &[]);
    let frames = ((settings.sim_seconds / settings.dt).round() as usize).max(1);
    let batch = simulate_group(&genome.params(), dist, g, settings.n_agents, frames, settings.dt, &mut rng);
    let stats = compute_stats(&batch, g, true)?;
    let features = similarity(&stats, target)?;
    Ok(Evaluation { performance: features.s, features })
}

/// Index of each objective in [`Individual::objectives`].
pub mod objective {
    pub const PERFORMANCE: usize = 0;
    pub const GENOTYPIC_DIVERSITY: usize = 1;
    pub const BEHAVIORAL_DIVERSITY: usize = 2;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genome: Genome,
    /// `[performance, genotypic diversity, behavioural diversity]`.
    pub objectives: [f64; 3],
    pub features: SimilarityReport,
    pub rank: usize,
    pub crowding: f64,
}

impl Individual {
    fn new(genome: Genome, eval: Evaluation) -> Self {
        Individual { genome, objectives: [eval.performance, 0.0, 0.0], features: eval.features, rank: 0, crowding: 0.0 }
    }

    pub fn performance(&self) -> f64 {
        self.objectives[objective::PERFORMANCE]
    }

    /// `[I_D, I_W, I_O, I_T]`.
    pub fn feature_scores(&self) -> [f64; 4] {
        self.features.features()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub individuals: Vec<Individual>,
    /// Generations completed in the current round.
    pub generation: u32,
    /// 1-based index of the round that produced this population.
    pub round_index: u32,
}

impl Population {
    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    pub fn genomes(&self) -> Vec<Genome> {
        self.individuals.iter().map(|i| i.genome).collect()
    }

    /// Highest-performance member (the first one on ties).
    pub fn best(&self) -> Option<&Individual> {
        self.individuals.iter().reduce(|best, i| if i.performance() > best.performance() { i } else { best })
    }
}

/// Mean normalised-genome distance of `ind` to the rest of `pop`.
pub fn genotypic_diversity(ind: &Individual, pop: &Population, bounds: &GenomeBounds) -> Result<f64, CalibratorError> {
    if pop.len() < 2 {
        return Err(CalibratorError::SingletonPopulation);
    }
    let x = bounds.normalise(&ind.genome);
    Ok(mean_distance_to_others(&x, pop.individuals.iter().map(|o| bounds.normalise(&o.genome)), pop.len()))
}

/// Mean feature-similarity-vector distance of `ind` to the rest of `pop`.
pub fn behavioral_diversity(ind: &Individual, pop: &Population) -> Result<f64, CalibratorError> {
    if pop.len() < 2 {
        return Err(CalibratorError::SingletonPopulation);
    }
    let x = ind.feature_scores();
    Ok(mean_distance_to_others(&x, pop.individuals.iter().map(|o| o.feature_scores()), pop.len()))
}

/// Sums distances to every member and divides by `n - 1`; `ind` itself is
/// expected among the members and contributes zero.
fn mean_distance_to_others<const N: usize>(x: &[f64; N], others: impl Iterator<Item = [f64; N]>, n: usize) -> f64 {
    let total: f64 = others.map(|o| x.iter().zip(&o).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()).sum();
    total / (n - 1) as f64
}

/// Limits of one calibration round; at least one is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundBudget {
    max_generations: Option<u32>,
    wall_clock_cap: Option<Duration>,
}

impl RoundBudget {
    pub fn new(max_generations: Option<u32>, wall_clock_cap: Option<Duration>) -> Result<Self, CalibratorError> {
        if max_generations.is_none() && wall_clock_cap.is_none() {
            return Err(CalibratorError::InvalidConfig("a round budget needs a generation or wall-clock limit".into()));
        }
        Ok(RoundBudget { max_generations, wall_clock_cap })
    }

    pub fn generations(n: u32) -> Self {
        RoundBudget { max_generations: Some(n), wall_clock_cap: None }
    }

    pub fn max_generations(&self) -> Option<u32> {
        self.max_generations
    }

    pub fn wall_clock_cap(&self) -> Option<Duration> {
        self.wall_clock_cap
    }

    fn allows(&self, generations_done: u32, elapsed: Duration) -> bool {
        self.max_generations.is_none_or(|m| generations_done < m) && self.wall_clock_cap.is_none_or(|c| elapsed < c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibratorConfig {
    pub population_size: usize,
    pub bounds: GenomeBounds,
    pub eval: EvalSettings,
    pub crossover_probability: f64,
    pub crossover_eta: f64,
    pub mutation_eta: f64,
    /// Per-gene mutation probability; `1 / 18` when unset.
    pub mutation_gene_probability: Option<f64>,
}

impl Default for CalibratorConfig {
    fn default() -> Self {
        CalibratorConfig {
            population_size: 60,
            bounds: GenomeBounds::default(),
            eval: EvalSettings::default(),
            crossover_probability: 0.9,
            crossover_eta: 15.0,
            mutation_eta: 20.0,
            mutation_gene_probability: None,
        }
    }
}

impl CalibratorConfig {
    pub fn validate(&self) -> Result<(), CalibratorError> {
        let bad = |m: &str| Err(CalibratorError::InvalidConfig(m.into()));
        if self.population_size < 2 {
            return bad("population_size must be at least 2");
        }
        self.bounds.validate().map_err(CalibratorError::InvalidConfig)?;
        if !(self.eval.sim_seconds > 0.0 && self.eval.dt > 0.0 && self.eval.sim_seconds.is_finite()) {
            return bad("evaluation sim_seconds and dt must be positive");
        }
        if self.eval.n_agents < 2 {
            return bad("evaluation needs at least two agents");
        }
        let p = self.mutation_probability();
        if !(0.0..=1.0).contains(&self.crossover_probability) || !(0.0..=1.0).contains(&p) {
            return bad("probabilities must lie in [0, 1]");
        }
        if !(self.crossover_eta >= 0.0 && self.mutation_eta >= 0.0) {
            return bad("distribution indices must be non-negative");
        }
        Ok(())
    }

    pub fn mutation_probability(&self) -> f64 {
        self.mutation_gene_probability.unwrap_or(1.0 / GENOME_LEN as f64)
    }
}

/// Calibration engine bound to an arena and a speed distribution.
#[derive(Debug, Clone)]
pub struct Calibrator {
    config: CalibratorConfig,
    geometry: ArenaGeometry,
    speeds: SpeedDistribution,
}

impl Calibrator {
    pub fn new(
        config: CalibratorConfig,
        geometry: ArenaGeometry,
        speeds: SpeedDistribution,
    ) -> Result<Self, CalibratorError> {
        config.validate()?;
        Ok(Calibrator { config, geometry, speeds })
    }

    pub fn config(&self) -> &CalibratorConfig {
        &self.config
    }

    pub fn evaluate(&self, genome: &Genome, target: &BehaviorStats, seed: u64) -> Result<Evaluation, StatsError> {
        evaluate(genome, target, &self.geometry, &self.speeds, &self.config.eval, seed)
    }

    /// Evaluates genomes in parallel; genome `i` uses the stream `i` below
    /// `base_seed`, so results do not depend on scheduling.
    fn evaluate_all(
        &self,
        genomes: &[Genome],
        target: &BehaviorStats,
        base_seed: u64,
    ) -> Result<Vec<Individual>, CalibratorError> {
        genomes
            .par_iter()
            .enumerate()
            .map(|(i, g)| Ok(Individual::new(*g, self.evaluate(g, target, derive_seed(base_seed, &[i as u64]))?)))
            .collect()
    }

    /// One calibration round. Without `seed` the population is drawn
    /// uniformly within bounds; otherwise the seed genomes are re-evaluated
    /// against `target` and evolution continues from them.
    pub fn evolve_round<R: Rng + ?Sized>(
        &self,
        seed: Option<&Population>,
        target: &BehaviorStats,
        budget: RoundBudget,
        rng: &mut R,
    ) -> Result<Population, CalibratorError> {
        self.evolve_round_with(seed, target, budget, rng, |_| {})
    }

    /// [`evolve_round`](Self::evolve_round) calling `observer` on the
    /// initial population and after every generation.
    pub fn evolve_round_with<R: Rng + ?Sized>(
        &self,
        seed: Option<&Population>,
        target: &BehaviorStats,
        budget: RoundBudget,
        rng: &mut R,
        mut observer: impl FnMut(&Population),
    ) -> Result<Population, CalibratorError> {
        let start = Instant::now();
        let n = self.config.population_size;
        let (genomes, round_index) = match seed {
            Some(p) if p.len() != n => return Err(CalibratorError::PopulationSize { got: p.len(), expected: n }),
            Some(p) => (p.genomes(), p.round_index + 1),
            None => ((0..n).map(|_| self.config.bounds.random(rng)).collect(), 1),
        };
        let mut individuals = self.evaluate_all(&genomes, target, rng.gen())?;
        self.assign_fitness(&mut individuals)?;
        let mut pop = Population { individuals, generation: 0, round_index };
        observer(&pop);
        while budget.allows(pop.generation, start.elapsed()) {
            let offspring = self.offspring(&pop, rng);
            let mut pool = std::mem::take(&mut pop.individuals);
            pool.extend(self.evaluate_all(&offspring, target, rng.gen())?);
            self.assign_fitness(&mut pool)?;
            let mut survivors = environmental_selection(pool, n);
            self.assign_fitness(&mut survivors)?;
            pop.individuals = survivors;
            pop.generation += 1;
            observer(&pop);
        }
        Ok(pop)
    }

    /// Recomputes the diversity objectives, ranks and crowding distances
    /// relative to `individuals`.
    fn assign_fitness(&self, individuals: &mut [Individual]) -> Result<(), CalibratorError> {
        let bounds = &self.config.bounds;
        let genomes: Vec<[f64; GENOME_LEN]> = individuals.iter().map(|i| bounds.normalise(&i.genome)).collect();
        let features: Vec<[f64; 4]> = individuals.iter().map(Individual::feature_scores).collect();
        let genotypic = mean_distances(&genomes)?;
        let behavioral = mean_distances(&features)?;
        for ((ind, g), b) in individuals.iter_mut().zip(genotypic).zip(behavioral) {
            ind.objectives[objective::GENOTYPIC_DIVERSITY] = g;
            ind.objectives[objective::BEHAVIORAL_DIVERSITY] = b;
        }
        rank_and_crowd(individuals);
        Ok(())
    }

    fn offspring<R: Rng + ?Sized>(&self, pop: &Population, rng: &mut R) -> Vec<Genome> {
        let cfg = &self.config;
        let ranks: Vec<usize> = pop.individuals.iter().map(|i| i.rank).collect();
        let crowding: Vec<f64> = pop.individuals.iter().map(|i| i.crowding).collect();
        let n = pop.len();
        let mut children = Vec::with_capacity(n + 1);
        while children.len() < n {
            let mut a = pop.individuals[binary_tournament(&ranks, &crowding, rng)].genome;
            let mut b = pop.individuals[binary_tournament(&ranks, &crowding, rng)].genome;
            if rng.gen::<f64>() < cfg.crossover_probability {
                sbx_crossover(&mut a, &mut b, &cfg.bounds, cfg.crossover_eta, rng);
            }
            for child in [&mut a, &mut b] {
                polynomial_mutation(child, &cfg.bounds, cfg.mutation_eta, cfg.mutation_probability(), rng);
                cfg.bounds.clamp(child);
            }
            children.push(a);
            children.push(b);
        }
        children.truncate(n);
        children
    }
}

/// Sets `rank` (front index) and `crowding` (within the front).
pub fn rank_and_crowd(individuals: &mut [Individual]) {
    let objectives: Vec<[f64; 3]> = individuals.iter().map(|i| i.objectives).collect();
    for (rank, front) in fast_nondominated_sort(&objectives).into_iter().enumerate() {
        let members: Vec<[f64; 3]> = front.iter().map(|&i| objectives[i]).collect();
        for (&i, d) in front.iter().zip(crowding_distance(&members)) {
            individuals[i].rank = rank;
            individuals[i].crowding = d;
        }
    }
}

/// Keeps the best `n` of a ranked pool: whole fronts in order, then the
/// least crowded members of the first front that does not fit, ties going
/// to higher performance.
pub fn environmental_selection(pool: Vec<Individual>, n: usize) -> Vec<Individual> {
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&pool[a], &pool[b]);
        x.rank
            .cmp(&y.rank)
            .then(y.crowding.total_cmp(&x.crowding))
            .then(y.performance().total_cmp(&x.performance()))
            .then(a.cmp(&b))
    });
    order.truncate(n);
    order.sort_unstable();
    let mut slots: Vec<Option<Individual>> = pool.into_iter().map(Some).collect();
    order.into_iter().map(|i| slots[i].take().expect("indices are unique")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arena::canonical_geometry;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ind(objectives: [f64; 3], features: [f64; 4]) -> Individual {
        Individual {
            genome: Genome([0.0; GENOME_LEN]),
            objectives,
            features: SimilarityReport::from_features(features[0], features[1], features[2], features[3]),
            rank: 0,
            crowding: 0.0,
        }
    }

    #[test]
    fn budget_requires_a_limit() {
        assert!(RoundBudget::new(None, None).is_err());
        assert!(RoundBudget::new(None, Some(Duration::from_secs(1))).is_ok());
        let b = RoundBudget::generations(2);
        assert!(b.allows(1, Duration::from_secs(1000)));
        assert!(!b.allows(2, Duration::ZERO));
    }

    #[test]
    fn diversity_examples() {
        let pop = Population {
            individuals: vec![ind([0.0; 3], [1.0; 4]), ind([0.0; 3], [0.0; 4])],
            generation: 0,
            round_index: 1,
        };
        assert_eq!(behavioral_diversity(&pop.individuals[0], &pop).unwrap(), 2.0);
        assert_eq!(genotypic_diversity(&pop.individuals[1], &pop, &GenomeBounds::default()).unwrap(), 0.0);
        let single = Population { individuals: vec![pop.individuals[0].clone()], generation: 0, round_index: 1 };
        assert_eq!(behavioral_diversity(&single.individuals[0], &single), Err(CalibratorError::SingletonPopulation));
    }

    #[test]
    fn selection_keeps_best_fronts() {
        let mut pool = vec![
            ind([0.9, 0.1, 0.1], [1.0; 4]),
            ind([0.1, 0.1, 0.1], [1.0; 4]),
            ind([0.5, 0.5, 0.5], [1.0; 4]),
            ind([0.2, 0.9, 0.2], [1.0; 4]),
        ];
        rank_and_crowd(&mut pool);
        assert_eq!(pool[1].rank, 1);
        let kept = environmental_selection(pool, 3);
        assert_eq!(kept.len(), 3);
        assert!(kept.iter().all(|i| i.rank == 0));
    }

    #[test]
    fn evaluation_is_deterministic() {
        let g = canonical_geometry();
        let speeds = SpeedDistribution::default();
        let settings = EvalSettings { sim_seconds: 20.0, ..EvalSettings::default() };
        let genome = GenomeBounds::default().random(&mut ChaCha8Rng::seed_from_u64(1));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch = simulate_group(&genome.params(), &speeds, &g, 5, 100, DEFAULT_DT, &mut rng);
        let target = compute_stats(&batch, &g, true).unwrap();
        let a = evaluate(&genome, &target, &g, &speeds, &settings, 11).unwrap();
        let b = evaluate(&genome, &target, &g, &speeds, &settings, 11).unwrap();
        assert_eq!(a, b);
        assert!((0.0..=1.0).contains(&a.performance));
    }

    #[test]
    fn config_validation() {
        assert!(CalibratorConfig::default().validate().is_ok());
        let cfg = CalibratorConfig { population_size: 1, ..CalibratorConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = CalibratorConfig { mutation_gene_probability: Some(1.5), ..CalibratorConfig::default() };
        assert!(cfg.validate().is_err());
        assert!((CalibratorConfig::default().mutation_probability() - 1.0 / 18.0).abs() < 1e-15);
    }
}
