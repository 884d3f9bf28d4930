//! Brute-force cross-checks of the numerical core, runnable from a
//! release build.

use std::f64::consts::PI;
use std::fmt;
use std::time::{Duration, Instant};

use rand::Rng;

use crate::calibrator::{dominates, fast_nondominated_sort};
use crate::model::{cdf_from_pdf, grid_angle, sample_direction, von_mises_density, DirectionPdf, GRID_SIZE};
use crate::rng::stream_rng;
use crate::stats::hellinger;

/// Signature of a non-dominated sort under test.
pub type Sorter = fn(&[[f64; 3]]) -> Vec<Vec<usize>>;

const SEED: u64 = 0x5e1f_7e57;
pub const SORT_POPULATIONS: usize = 1000;
pub const HELLINGER_TRIPLES: usize = 10_000;
pub const SAMPLING_DRAWS: usize = 100_000;
pub const SAMPLING_BINS: usize = 64;
pub const SAMPLING_MAX_HELLINGER: f64 = 0.05;
pub const SAMPLING_MAX_SECONDS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {:<20} {:>9.3} ms  {}", self.name, self.elapsed.as_secs_f64() * 1e3, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelftestReport {
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn timed(name: &'static str, f: impl FnOnce() -> (bool, String)) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = f();
    CheckResult { name, passed, detail, elapsed: start.elapsed() }
}

/// Runs every check with the library's own sort.
pub fn run() -> SelftestReport {
    run_with(fast_nondominated_sort)
}

/// Runs every check, substituting `sorter` for the non-dominated sort.
pub fn run_with(sorter: Sorter) -> SelftestReport {
    SelftestReport {
        checks: vec![
            timed("dominance-sort", || check_sort(sorter)),
            timed("hellinger", check_hellinger),
            timed("sampling-fidelity", check_sampling),
        ],
    }
}

/// Fronts by repeatedly peeling off the members no remaining member
/// dominates, using the full dominance matrix.
pub fn brute_force_fronts(objectives: &[[f64; 3]]) -> Vec<Vec<usize>> {
    let n = objectives.len();
    let matrix: Vec<Vec<bool>> =
        (0..n).map(|i| (0..n).map(|j| dominates(&objectives[i], &objectives[j])).collect()).collect();
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut fronts = Vec::new();
    while !remaining.is_empty() {
        let front: Vec<usize> =
            remaining.iter().copied().filter(|&j| !remaining.iter().any(|&i| matrix[i][j])).collect();
        remaining.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}

fn normalised_fronts(mut fronts: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    fronts.iter_mut().for_each(|f| f.sort_unstable());
    fronts
}

fn check_sort(sorter: Sorter) -> (bool, String) {
    let mut rng = stream_rng(SEED, &[1]);
    let mut mismatches = 0;
    for _ in 0..SORT_POPULATIONS {
        let n = rng.gen_range(1..=20);
        // Coarse values so that ties and duplicates occur.
        let pop: Vec<[f64; 3]> =
            (0..n).map(|_| std::array::from_fn(|_| f64::from(rng.gen_range(0..6u8)) / 5.0)).collect();
        if normalised_fronts(sorter(&pop)) != brute_force_fronts(&pop) {
            mismatches += 1;
        }
    }
    (mismatches == 0, format!("{mismatches} mismatches over {SORT_POPULATIONS} populations"))
}

fn random_distribution<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen::<f64>() }).collect();
    let total: f64 = raw.iter().sum();
    if total == 0.0 {
        let mut v = vec![0.0; n];
        v[0] = 1.0;
        return v;
    }
    raw.into_iter().map(|v| v / total).collect()
}

fn check_hellinger() -> (bool, String) {
    let h = |p: &[f64], q: &[f64]| hellinger(p, q).expect("normalised inputs");
    let mut failures = Vec::new();
    if h(&[0.25, 0.25, 0.5], &[0.25, 0.25, 0.5]) != 0.0 {
        failures.push("H(P,P) != 0".to_string());
    }
    if h(&[0.5, 0.5, 0.0, 0.0], &[0.0, 0.0, 0.3, 0.7]) != 1.0 {
        failures.push("disjoint supports != 1".to_string());
    }
    let known = h(&[1.0, 0.0], &[0.5, 0.5]);
    if (known - 0.541_196).abs() > 1e-6 {
        failures.push(format!("H([1,0],[.5,.5]) = {known}"));
    }
    let mut rng = stream_rng(SEED, &[2]);
    let mut broken = 0;
    for _ in 0..HELLINGER_TRIPLES {
        let n = rng.gen_range(2..=12);
        let (p, q, r) =
            (random_distribution(&mut rng, n), random_distribution(&mut rng, n), random_distribution(&mut rng, n));
        let (pq, qp, qr, pr) = (h(&p, &q), h(&q, &p), h(&q, &r), h(&p, &r));
        if (pq - qp).abs() > 1e-12 || pr > pq + qr + 1e-12 {
            broken += 1;
        }
    }
    if broken > 0 {
        failures.push(format!("{broken} triples break symmetry or the triangle inequality"));
    }
    let detail = if failures.is_empty() { format!("{HELLINGER_TRIPLES} triples ok") } else { failures.join("; ") };
    (failures.is_empty(), detail)
}

/// Probability mass of each of `bins` equal arcs of `[-π, π)` under
/// vM(`mu`, `kappa`), by composite Simpson integration.
pub fn von_mises_bin_masses(mu: f64, kappa: f64, bins: usize) -> Vec<f64> {
    const PANELS: usize = 64;
    let width = 2.0 * PI / bins as f64;
    (0..bins)
        .map(|b| {
            let a = -PI + b as f64 * width;
            let h = width / PANELS as f64;
            let f = |i: usize| von_mises_density(a + i as f64 * h, mu, kappa);
            let inner: f64 = (1..PANELS).map(|i| if i % 2 == 1 { 4.0 * f(i) } else { 2.0 * f(i) }).sum();
            h / 3.0 * (f(0) + inner + f(PANELS))
        })
        .collect()
}

/// Hellinger distance between `draws` inverse-transform samples of
/// vM(0, 2) and the exact binned distribution.
pub fn sampling_distance(draws: usize, bins: usize, seed: u64) -> f64 {
    let pdf = DirectionPdf::from_values(std::array::from_fn::<_, GRID_SIZE, _>(|k| {
        von_mises_density(grid_angle(k), 0.0, 2.0)
    }))
    .expect("von Mises density is positive");
    let cdf = cdf_from_pdf(&pdf);
    let mut rng = stream_rng(seed, &[3]);
    let mut counts = vec![0u64; bins];
    let width = 2.0 * PI / bins as f64;
    for _ in 0..draws {
        let theta = sample_direction(&cdf, rng.gen::<f64>());
        let b = (((theta + PI) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / draws as f64).collect();
    let exact = von_mises_bin_masses(0.0, 2.0, bins);
    let total: f64 = exact.iter().sum();
    let exact: Vec<f64> = exact.into_iter().map(|m| m / total).collect();
    hellinger(&empirical, &exact).expect("both histograms are normalised")
}

fn check_sampling() -> (bool, String) {
    let start = Instant::now();
    let d = sampling_distance(SAMPLING_DRAWS, SAMPLING_BINS, SEED);
    let secs = start.elapsed().as_secs_f64();
    let passed = d <= SAMPLING_MAX_HELLINGER && secs < SAMPLING_MAX_SECONDS;
    (passed, format!("H = {d:.5} over {SAMPLING_DRAWS} draws in {secs:.3} s"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reversed_sort(o: &[[f64; 3]]) -> Vec<Vec<usize>> {
        let mut fronts = fast_nondominated_sort(o);
        fronts.reverse();
        fronts
    }

    #[test]
    fn brute_force_matches_examples() {
        assert_eq!(brute_force_fronts(&[[0.0; 3], [1.0; 3], [1.0, 0.0, 0.0]]), vec![vec![1], vec![2], vec![0]]);
        assert!(brute_force_fronts(&[]).is_empty());
    }

    #[test]
    fn injected_sort_bug_is_caught() {
        let report = run_with(reversed_sort);
        assert!(!report.passed());
        assert!(!report.checks[0].passed && report.checks[1].passed);
    }

    #[test]
    fn bin_masses_sum_to_one() {
        let m = von_mises_bin_masses(0.3, 5.0, 64);
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }
}
