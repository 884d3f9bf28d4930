//! Behavioural statistics of a trajectory window and the biomimetic score.
//!
//! Four histogram families describe a window: inter-individual distances
//! (`D`) and nearest-wall distances (`W`), both per zone, zone occupation
//! (`O`) and zone transitions between consecutive frames (`T`, flattened
//! `from * 3 + to`). Two windows are compared feature by feature with
//! `I = 1 - H`, `H` the Hellinger distance, and the four similarities are
//! combined by their geometric mean.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arena::{ArenaError, ArenaGeometry, Zone};
use crate::trajectory::TrajectoryBatch;

pub const DISTANCE_BINS: usize = 30;
pub const DISTANCE_MAX_MM: f64 = 1000.0;
pub const WALL_BINS: usize = 20;
pub const WALL_MAX_MM: f64 = 200.0;
pub const TRANSITION_BINS: usize = Zone::COUNT * Zone::COUNT;

const NORMALISATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("histograms have different bin counts ({0} vs {1})")]
    BinMismatch(usize, usize),
    #[error("histogram sums to {0}, expected 1")]
    NotNormalised(f64),
    #[error("trajectory batch has no frames")]
    EmptyBatch,
    #[error("no agent is selected for analysis")]
    NoAgents,
    #[error(transparent)]
    Arena(#[from] ArenaError),
}

/// Hellinger distance `(1/√2) · ‖√P − √Q‖₂` between two probability vectors.
pub fn hellinger(p: &[f64], q: &[f64]) -> Result<f64, StatsError> {
    if p.len() != q.len() {
        return Err(StatsError::BinMismatch(p.len(), q.len()));
    }
    for h in [p, q] {
        let total: f64 = h.iter().sum();
        if (total - 1.0).abs() > NORMALISATION_TOLERANCE || h.iter().any(|v| *v < 0.0) {
            return Err(StatsError::NotNormalised(total));
        }
    }
    let sq: f64 = p.iter().zip(q).map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)).sum();
    Ok((sq.sqrt() / std::f64::consts::SQRT_2).clamp(0.0, 1.0))
}

/// A normalised histogram with explicit bin edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    /// Probability mass per bin; all zero when `samples == 0`.
    pub mass: Vec<f64>,
    pub samples: u64,
}

impl Histogram {
    fn from_counts(edges: Vec<f64>, counts: &[u64]) -> Self {
        let samples: u64 = counts.iter().sum();
        let mass = if samples == 0 {
            vec![0.0; counts.len()]
        } else {
            counts.iter().map(|&c| c as f64 / samples as f64).collect()
        };
        Histogram { edges, mass, samples }
    }

    pub fn bins(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples == 0
    }

    pub fn hellinger(&self, other: &Histogram) -> Result<f64, StatsError> {
        hellinger(&self.mass, &other.mass)
    }
}

fn uniform_edges(bins: usize, max: f64) -> Vec<f64> {
    (0..=bins).map(|i| max * i as f64 / bins as f64).collect()
}

fn category_edges(bins: usize) -> Vec<f64> {
    (0..=bins).map(|i| i as f64).collect()
}

/// Bin of `v` among `bins` equal bins over `[0, max]`; values at or past
/// `max` land in the last bin.
#[inline]
fn bin_of(v: f64, bins: usize, max: f64) -> usize {
    ((v.max(0.0) / max * bins as f64) as usize).min(bins - 1)
}

/// The four histogram families of one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorStats {
    /// Inter-individual distances, indexed by [`Zone::index`].
    #[serde(rename = "D")]
    pub distances: [Histogram; Zone::COUNT],
    /// Nearest-wall distances, indexed by [`Zone::index`].
    #[serde(rename = "W")]
    pub wall_distances: [Histogram; Zone::COUNT],
    #[serde(rename = "O")]
    pub occupation: Histogram,
    #[serde(rename = "T")]
    pub transitions: Histogram,
    pub zone_weights: [f64; Zone::COUNT],
}

struct Counts {
    distances: [[u64; DISTANCE_BINS]; Zone::COUNT],
    walls: [[u64; WALL_BINS]; Zone::COUNT],
    occupation: [u64; Zone::COUNT],
    transitions: [u64; TRANSITION_BINS],
}

/// Computes the statistics of a batch. With `include_robot == false` the
/// robot-flagged agents are left out (Control case).
///
/// Each considered agent contributes, per frame, its zone, its distance to
/// the nearest wall (to its zone's `W`) and its distances to every other
/// considered agent (to its zone's `D`), so every pair is counted once from
/// each side.
pub fn compute_stats(
    batch: &TrajectoryBatch,
    g: &ArenaGeometry,
    include_robot: bool,
) -> Result<BehaviorStats, StatsError> {
    if batch.is_empty() {
        return Err(StatsError::EmptyBatch);
    }
    let selected: Vec<usize> =
        batch.robot_flags().iter().enumerate().filter(|(_, r)| include_robot || !**r).map(|(i, _)| i).collect();
    if selected.is_empty() {
        return Err(StatsError::NoAgents);
    }
    let mut c = Counts {
        distances: [[0; DISTANCE_BINS]; Zone::COUNT],
        walls: [[0; WALL_BINS]; Zone::COUNT],
        occupation: [0; Zone::COUNT],
        transitions: [0; TRANSITION_BINS],
    };
    let mut previous: Vec<Zone> = Vec::with_capacity(selected.len());
    let mut zones: Vec<Zone> = Vec::with_capacity(selected.len());
    for (k, frame) in batch.frames().iter().enumerate() {
        zones.clear();
        for &i in &selected {
            let p = frame.positions[i];
            let zone = g.classify_zone(p)?;
            zones.push(zone);
            let z = zone.index();
            c.occupation[z] += 1;
            let (wall, _) = g.nearest_wall(p);
            c.walls[z][bin_of(wall, WALL_BINS, WALL_MAX_MM)] += 1;
            for &j in &selected {
                if j != i {
                    let d = p.distance(frame.positions[j]);
                    c.distances[z][bin_of(d, DISTANCE_BINS, DISTANCE_MAX_MM)] += 1;
                }
            }
        }
        if k > 0 {
            for (from, to) in previous.iter().zip(&zones) {
                c.transitions[from.index() * Zone::COUNT + to.index()] += 1;
            }
        }
        std::mem::swap(&mut previous, &mut zones);
    }
    let occupation = Histogram::from_counts(category_edges(Zone::COUNT), &c.occupation);
    let zone_weights = [occupation.mass[0], occupation.mass[1], occupation.mass[2]];
    Ok(BehaviorStats {
        distances: c.distances.map(|h| Histogram::from_counts(uniform_edges(DISTANCE_BINS, DISTANCE_MAX_MM), &h)),
        wall_distances: c.walls.map(|h| Histogram::from_counts(uniform_edges(WALL_BINS, WALL_MAX_MM), &h)),
        occupation,
        transitions: Histogram::from_counts(category_edges(TRANSITION_BINS), &c.transitions),
        zone_weights,
    })
}

/// Feature similarities and their geometric mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    #[serde(rename = "I_D")]
    pub i_d: f64,
    #[serde(rename = "I_W")]
    pub i_w: f64,
    #[serde(rename = "I_O")]
    pub i_o: f64,
    #[serde(rename = "I_T")]
    pub i_t: f64,
    #[serde(rename = "S")]
    pub s: f64,
}

impl SimilarityReport {
    pub fn from_features(i_d: f64, i_w: f64, i_o: f64, i_t: f64) -> Self {
        SimilarityReport { i_d, i_w, i_o, i_t, s: biomimetic_score([i_d, i_w, i_o, i_t]) }
    }

    /// `[I_D, I_W, I_O, I_T]`.
    pub fn features(&self) -> [f64; 4] {
        [self.i_d, self.i_w, self.i_o, self.i_t]
    }

    /// The identical-windows report.
    pub fn perfect() -> Self {
        SimilarityReport::from_features(1.0, 1.0, 1.0, 1.0)
    }
}

/// Fourth root of the product of the four feature similarities.
pub fn biomimetic_score(features: [f64; 4]) -> f64 {
    features.iter().product::<f64>().max(0.0).sqrt().sqrt()
}

/// `1 - H` on two histograms, with empty-histogram conventions: both empty
/// is a perfect match, one empty is no match.
fn feature_similarity(a: &Histogram, b: &Histogram) -> Result<f64, StatsError> {
    if a.bins() != b.bins() {
        return Err(StatsError::BinMismatch(a.bins(), b.bins()));
    }
    match (a.is_empty(), b.is_empty()) {
        (true, true) => Ok(1.0),
        (true, false) | (false, true) => Ok(0.0),
        (false, false) => Ok(1.0 - a.hellinger(b)?),
    }
}

/// Occupancy-weighted mean over zones of the per-zone similarity. Zones
/// empty on both sides are skipped; the weights of `weights` are
/// renormalised over the rest.
fn zoned_similarity(
    a: &[Histogram; Zone::COUNT],
    b: &[Histogram; Zone::COUNT],
    weights: &[f64; Zone::COUNT],
) -> Result<f64, StatsError> {
    let mut scores = Vec::with_capacity(Zone::COUNT);
    for z in 0..Zone::COUNT {
        if a[z].is_empty() && b[z].is_empty() {
            if a[z].bins() != b[z].bins() {
                return Err(StatsError::BinMismatch(a[z].bins(), b[z].bins()));
            }
            continue;
        }
        scores.push((weights[z].max(0.0), feature_similarity(&a[z], &b[z])?));
    }
    if scores.is_empty() {
        return Ok(1.0);
    }
    let total: f64 = scores.iter().map(|(w, _)| w).sum();
    if total > 0.0 {
        Ok(scores.iter().map(|(w, s)| w * s).sum::<f64>() / total)
    } else {
        Ok(scores.iter().map(|(_, s)| s).sum::<f64>() / scores.len() as f64)
    }
}

/// Compares `a` against the reference `b`; per-zone scores are weighted by
/// the occupancy of `b`.
pub fn similarity(a: &BehaviorStats, b: &BehaviorStats) -> Result<SimilarityReport, StatsError> {
    let i_d = zoned_similarity(&a.distances, &b.distances, &b.zone_weights)?;
    let i_w = zoned_similarity(&a.wall_distances, &b.wall_distances, &b.zone_weights)?;
    let i_o = feature_similarity(&a.occupation, &b.occupation)?;
    let i_t = feature_similarity(&a.transitions, &b.transitions)?;
    Ok(SimilarityReport::from_features(i_d, i_w, i_o, i_t))
}
