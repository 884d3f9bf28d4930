//! Zone-dependent model parameters and their flat 18-gene encoding.
//!
//! Gene order:
//!
//! | index | gene |
//! |-------|------|
//! | 0..4  | Wall: κ0, κ_wall, κ_fish, α |
//! | 4..8  | RoomCenter: κ0, κ_wall, κ_fish, α |
//! | 8..12 | Corridor: κ0, κ_wall, κ_fish, α |
//! | 12..18 | γ(W→C), γ(W→K), γ(C→W), γ(C→K), γ(K→W), γ(K→C) |
//!
//! where W = Wall, C = RoomCenter and K = Corridor.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::arena::Zone;

pub const GENOME_LEN: usize = 18;
pub const KAPPA_MAX: f64 = 20.0;
pub const GAMMA_MAX: f64 = 5.0;

/// Human-readable gene names, in genome order.
pub const GENE_NAMES: [&str; GENOME_LEN] = [
    "wall.kappa0",
    "wall.kappa_wall",
    "wall.kappa_fish",
    "wall.alpha",
    "center.kappa0",
    "center.kappa_wall",
    "center.kappa_fish",
    "center.alpha",
    "corridor.kappa0",
    "corridor.kappa_wall",
    "corridor.kappa_fish",
    "corridor.alpha",
    "gamma.wall_to_center",
    "gamma.wall_to_corridor",
    "gamma.center_to_wall",
    "gamma.center_to_corridor",
    "gamma.corridor_to_wall",
    "gamma.corridor_to_center",
];

/// Off-diagonal γ cells in genome order.
const GAMMA_CELLS: [(usize, usize); 6] = [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)];

/// Concentrations and mixing weight used while the agent is in one zone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneParams {
    /// Persistence around the current heading.
    pub kappa0: f64,
    /// Alignment with the nearest wall.
    pub kappa_wall: f64,
    /// Attraction towards the other agents.
    pub kappa_fish: f64,
    /// Weight of the wall/persistence PDF against the social PDF.
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub per_zone: [ZoneParams; 3],
    /// `gamma[from][to]` multiplies the density of directions whose probe
    /// ends in zone `to` while the agent is in zone `from`.
    pub gamma: [[f64; 3]; 3],
}

impl ModelParams {
    pub fn zone(&self, z: Zone) -> &ZoneParams {
        &self.per_zone[z.index()]
    }

    pub fn from_genome(genome: &Genome) -> Self {
        let g = &genome.0;
        let per_zone = std::array::from_fn(|z| ZoneParams {
            kappa0: g[4 * z],
            kappa_wall: g[4 * z + 1],
            kappa_fish: g[4 * z + 2],
            alpha: g[4 * z + 3],
        });
        let mut gamma = [[1.0; 3]; 3];
        for (k, &(i, j)) in GAMMA_CELLS.iter().enumerate() {
            gamma[i][j] = g[12 + k];
        }
        ModelParams { per_zone, gamma }
    }

    pub fn to_genome(&self) -> Genome {
        let mut g = [0.0; GENOME_LEN];
        for (z, p) in self.per_zone.iter().enumerate() {
            g[4 * z..4 * z + 4].copy_from_slice(&[p.kappa0, p.kappa_wall, p.kappa_fish, p.alpha]);
        }
        for (k, &(i, j)) in GAMMA_CELLS.iter().enumerate() {
            g[12 + k] = self.gamma[i][j];
        }
        Genome(g)
    }

    /// True when no zone-attraction modulation applies from zone `z`.
    pub fn gamma_is_neutral(&self, z: Zone) -> bool {
        self.gamma[z.index()].iter().all(|&v| v == 1.0)
    }
}

/// The flat parameter vector evolved by the calibrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Genome(pub [f64; GENOME_LEN]);

impl Genome {
    pub fn genes(&self) -> &[f64; GENOME_LEN] {
        &self.0
    }

    pub fn params(&self) -> ModelParams {
        ModelParams::from_genome(self)
    }
}

impl fmt::Display for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| format!("{v:.4}")).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

/// Per-gene lower and upper bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenomeBounds {
    pub lower: [f64; GENOME_LEN],
    pub upper: [f64; GENOME_LEN],
}

impl Default for GenomeBounds {
    fn default() -> Self {
        let lower = [0.0; GENOME_LEN];
        let mut upper = [0.0; GENOME_LEN];
        for z in 0..3 {
            upper[4 * z..4 * z + 4].copy_from_slice(&[KAPPA_MAX, KAPPA_MAX, KAPPA_MAX, 1.0]);
        }
        for u in &mut upper[12..] {
            *u = GAMMA_MAX;
        }
        GenomeBounds { lower, upper }
    }
}

impl GenomeBounds {
    /// Checks ordering and that the bounds stay inside the model's valid domain.
    pub fn validate(&self) -> Result<(), String> {
        let defaults = GenomeBounds::default();
        for (i, name) in GENE_NAMES.iter().enumerate() {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(format!("bounds for {name} must be finite with lower <= upper"));
            }
            if lo < defaults.lower[i] || hi > defaults.upper[i] {
                return Err(format!(
                    "bounds for {} must lie within [{}, {}]",
                    name, defaults.lower[i], defaults.upper[i]
                ));
            }
        }
        Ok(())
    }

    pub fn contains(&self, genome: &Genome) -> bool {
        genome.0.iter().enumerate().all(|(i, &v)| v >= self.lower[i] && v <= self.upper[i])
    }

    pub fn clamp(&self, genome: &mut Genome) {
        for (i, v) in genome.0.iter_mut().enumerate() {
            *v = if v.is_nan() { self.lower[i] } else { v.clamp(self.lower[i], self.upper[i]) };
        }
    }

    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> Genome {
        Genome(std::array::from_fn(|i| {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            if hi > lo {
                rng.gen_range(lo..=hi)
            } else {
                lo
            }
        }))
    }

    /// Maps each gene to `[0, 1]` by its bounds; fixed genes map to 0.
    pub fn normalise(&self, genome: &Genome) -> [f64; GENOME_LEN] {
        std::array::from_fn(|i| {
            let span = self.upper[i] - self.lower[i];
            if span > 0.0 {
                (genome.0[i] - self.lower[i]) / span
            } else {
                0.0
            }
        })
    }
}
