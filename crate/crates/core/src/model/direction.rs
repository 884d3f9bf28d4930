//! Heading distributions on a fixed angular grid.
//!
//! A heading PDF is a weighted mixture of von Mises components evaluated on
//! `GRID_SIZE` equally spaced angles over `[-π, π)`, optionally reshaped by
//! the zone-attraction multipliers, and renormalised so that its periodic
//! trapezoidal integral is one. Sampling goes through the cumulative
//! trapezoidal integral and linear inversion.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::arena::{wrap_angle, ArenaError, ArenaGeometry, Point};
use crate::model::agent::AgentState;
use crate::model::params::{ModelParams, ZoneParams};

pub const GRID_SIZE: usize = 360;
pub const GRID_STEP: f64 = 2.0 * PI / GRID_SIZE as f64;

/// Length scale of the decay of the wall influence, mm.
pub const WALL_DECAY_MM: f64 = 50.0;
/// Length of the look-ahead probe used for zone attraction, mm.
pub const PROBE_MM: f64 = 50.0;

#[inline]
pub fn grid_angle(k: usize) -> f64 {
    -PI + k as f64 * GRID_STEP
}

struct Trig {
    cos: [f64; GRID_SIZE],
    sin: [f64; GRID_SIZE],
}

fn trig() -> &'static Trig {
    static TABLE: OnceLock<Trig> = OnceLock::new();
    TABLE.get_or_init(|| Trig {
        cos: std::array::from_fn(|k| grid_angle(k).cos()),
        sin: std::array::from_fn(|k| grid_angle(k).sin()),
    })
}

/// Modified Bessel function of the first kind, order zero, by its power
/// series `Σ ((x/2)^k / k!)²`.
pub fn bessel_i0(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > sum * 1e-17 {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

/// Density of the von Mises distribution with mean `mu` and concentration
/// `kappa` at `theta`. Valid for `0 <= kappa` up to roughly 700, where the
/// unscaled exponential overflows.
pub fn von_mises_density(theta: f64, mu: f64, kappa: f64) -> f64 {
    (kappa * (theta - mu).cos()).exp() / (2.0 * PI * bessel_i0(kappa))
}

const EXP_TABLE_BITS: u32 = 5;
const EXP_TABLE_LEN: usize = 1 << EXP_TABLE_BITS;

fn exp2_table() -> &'static [f64; EXP_TABLE_LEN] {
    static TABLE: OnceLock<[f64; EXP_TABLE_LEN]> = OnceLock::new();
    TABLE.get_or_init(|| std::array::from_fn(|j| (j as f64 / EXP_TABLE_LEN as f64).exp2()))
}

/// `e^x` for `|x| <= 700` with relative error below `1e-14`, written so the
/// grid loops vectorise.
#[inline(always)]
fn fast_exp(x: f64, table: &[f64; EXP_TABLE_LEN]) -> f64 {
    const SHIFTER: f64 = 6_755_399_441_055_744.0;
    const SCALE: f64 = EXP_TABLE_LEN as f64 * std::f64::consts::LOG2_E;
    const STEP_HI: f64 = 6.931_471_803_691_238e-1 / EXP_TABLE_LEN as f64;
    const STEP_LO: f64 = 1.908_214_929_270_587_7e-10 / EXP_TABLE_LEN as f64;
    let t = x * SCALE + SHIFTER;
    let n = t - SHIFTER;
    let r = x - n * STEP_HI - n * STEP_LO;
    let mut p = 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    let k = (t.to_bits() as i64).wrapping_sub(SHIFTER.to_bits() as i64);
    let j = (k & (EXP_TABLE_LEN as i64 - 1)) as usize;
    let m = k >> EXP_TABLE_BITS;
    p * table[j] * f64::from_bits(((m + 1023) << 52) as u64)
}

/// Adds `weight · vM(θ_k; mu, kappa)` to every grid cell.
fn add_von_mises(acc: &mut [f64; GRID_SIZE], mu: f64, kappa: f64, weight: f64) {
    if weight == 0.0 {
        return;
    }
    let scale = weight / (2.0 * PI * bessel_i0(kappa));
    if kappa == 0.0 {
        acc.iter_mut().for_each(|v| *v += scale);
        return;
    }
    let t = trig();
    let (kc, ks) = (kappa * mu.cos(), kappa * mu.sin());
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports AVX2. The kernel has no fused operations,
        // so results are bit-identical to the portable path.
        unsafe { von_mises_kernel_avx2(acc, t, kc, ks, scale) };
        return;
    }
    von_mises_kernel(acc, t, kc, ks, scale);
}

#[inline(always)]
fn von_mises_kernel(acc: &mut [f64; GRID_SIZE], t: &Trig, kc: f64, ks: f64, scale: f64) {
    let table = exp2_table();
    for ((v, c), s) in acc.iter_mut().zip(&t.cos).zip(&t.sin) {
        *v += scale * fast_exp(kc * c + ks * s, table);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn von_mises_kernel_avx2(acc: &mut [f64; GRID_SIZE], t: &Trig, kc: f64, ks: f64, scale: f64) {
    von_mises_kernel(acc, t, kc, ks, scale)
}

/// Normalised heading density sampled on the angular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionPdf {
    density: [f64; GRID_SIZE],
}

impl DirectionPdf {
    pub fn uniform() -> Self {
        DirectionPdf { density: [1.0 / (2.0 * PI); GRID_SIZE] }
    }

    /// Normalises arbitrary non-negative grid values. Returns `None` when
    /// they carry no mass or are not finite.
    pub fn from_values(mut density: [f64; GRID_SIZE]) -> Option<Self> {
        if density.iter().any(|v| *v < 0.0) {
            return None;
        }
        let total = periodic_trapezoid(&density);
        if !(total > 0.0 && total.is_finite()) {
            return None;
        }
        density.iter_mut().for_each(|v| *v /= total);
        Some(DirectionPdf { density })
    }

    pub fn density(&self) -> &[f64; GRID_SIZE] {
        &self.density
    }

    /// Trapezoidal integral over `[-π, π]` (the value at `π` wraps to `-π`).
    pub fn integral(&self) -> f64 {
        periodic_trapezoid(&self.density)
    }

    /// Grid index of the highest density (first one on ties).
    pub fn argmax(&self) -> usize {
        self.density
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best })
            .0
    }
}

fn periodic_trapezoid(values: &[f64; GRID_SIZE]) -> f64 {
    values.iter().sum::<f64>() * GRID_STEP
}

/// Geometric and social cues entering the heading mixture, independent of
/// any arena.
#[derive(Debug, Clone, Copy)]
pub struct MixtureInputs<'a> {
    pub heading: f64,
    /// Wall-parallel direction of the nearest wall.
    pub wall_direction: f64,
    /// Weight of the wall component against persistence, in `[0, 1]`.
    pub wall_weight: f64,
    /// Bearings from the focal agent to every other agent.
    pub bearings: &'a [f64],
}

fn mixture_values(inputs: &MixtureInputs<'_>, p: &ZoneParams) -> [f64; GRID_SIZE] {
    let mut acc = [0.0; GRID_SIZE];
    let alpha = p.alpha;
    let w = inputs.wall_weight;
    add_von_mises(&mut acc, inputs.wall_direction, p.kappa_wall, alpha * w);
    add_von_mises(&mut acc, inputs.heading, p.kappa0, alpha * (1.0 - w));
    if inputs.bearings.is_empty() {
        add_von_mises(&mut acc, inputs.heading, p.kappa0, 1.0 - alpha);
    } else {
        let each = (1.0 - alpha) / inputs.bearings.len() as f64;
        for &b in inputs.bearings {
            add_von_mises(&mut acc, b, p.kappa_fish, each);
        }
    }
    acc
}

/// The unmodulated wall/social mixture, normalised on the grid.
pub fn mixture_pdf(inputs: &MixtureInputs<'_>, p: &ZoneParams) -> DirectionPdf {
    DirectionPdf::from_values(mixture_values(inputs, p)).unwrap_or_else(DirectionPdf::uniform)
}

/// Heading PDF of `agent` given the other agents, its zone's parameters and
/// the zone-attraction multipliers.
pub fn direction_pdf(
    agent: &AgentState,
    others: &[AgentState],
    params: &ModelParams,
    g: &ArenaGeometry,
) -> Result<DirectionPdf, ArenaError> {
    let zone = g.classify_zone(agent.position)?;
    let zp = params.zone(zone);
    let (wall_dist, _) = g.nearest_wall(agent.position);
    let bearings: Vec<f64> = others.iter().map(|o| agent.position.bearing_to(o.position)).collect();
    let inputs = MixtureInputs {
        heading: agent.heading,
        wall_direction: g.wall_parallel_direction(agent.position, agent.heading),
        wall_weight: (-wall_dist / WALL_DECAY_MM).exp(),
        bearings: &bearings,
    };
    let mut values = mixture_values(&inputs, zp);
    // A probe that cannot leave the agent's own zone meets the unit diagonal.
    let own_zone_only = g.uniform_zone_within(agent.position, PROBE_MM) == Some(zone);
    if !params.gamma_is_neutral(zone) && !own_zone_only {
        let row = &params.gamma[zone.index()];
        let t = trig();
        let origin = g.probe_origin(agent.position);
        let mut modulated = values;
        for (k, v) in modulated.iter_mut().enumerate() {
            let target = origin.zone_along(Point::new(t.cos[k], t.sin[k]), PROBE_MM);
            *v *= row[target.index()];
        }
        // A row that zeroes every reachable zone leaves the mixture unmodulated.
        if modulated.iter().any(|v| *v > 0.0) {
            values = modulated;
        }
    }
    Ok(DirectionPdf::from_values(values).unwrap_or_else(DirectionPdf::uniform))
}

/// Cumulative trapezoidal integral of a [`DirectionPdf`] at the grid angles
/// and at `π`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionCdf {
    values: [f64; GRID_SIZE + 1],
}

impl DirectionCdf {
    /// `values()[k]` is the CDF at `grid_angle(k)`; the last entry is at `π`.
    pub fn values(&self) -> &[f64; GRID_SIZE + 1] {
        &self.values
    }
}

pub fn cdf_from_pdf(pdf: &DirectionPdf) -> DirectionCdf {
    let d = &pdf.density;
    let mut values = [0.0; GRID_SIZE + 1];
    let half_step = 0.5 * GRID_STEP;
    for k in 0..GRID_SIZE {
        let next = d[(k + 1) % GRID_SIZE];
        values[k + 1] = values[k] + half_step * (d[k] + next);
    }
    DirectionCdf { values }
}

/// Inverse-transform sample: linear interpolation of the inverse CDF at `u`.
pub fn sample_direction(cdf: &DirectionCdf, u: f64) -> f64 {
    let v = &cdf.values;
    let k = v.partition_point(|&c| c <= u).saturating_sub(1).min(GRID_SIZE - 1);
    let width = v[k + 1] - v[k];
    let frac = if width > 0.0 { ((u - v[k]) / width).clamp(0.0, 1.0) } else { 0.0 };
    wrap_angle(grid_angle(k) + frac * GRID_STEP)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_reference_values() {
        // Abramowitz & Stegun table 9.8.
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-15);
        assert!((bessel_i0(0.0) - 1.0).abs() == 0.0);
        assert!((bessel_i0(20.0) / 4.355_828_255_955_353e7 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fast_exp_matches_std() {
        for i in -50_000..=50_000 {
            let x = i as f64 * 5e-4 + 1e-7;
            let rel = (fast_exp(x, exp2_table()) / x.exp() - 1.0).abs();
            assert!(rel < 1e-14, "x={x} rel={rel}");
        }
        assert_eq!(fast_exp(0.0, exp2_table()), 1.0);
    }

    #[test]
    fn von_mises_examples() {
        assert!((von_mises_density(0.0, 0.0, 0.0) - 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert!((von_mises_density(0.0, 0.0, 1.0) - 0.341_710).abs() < 1e-6);
        let a = von_mises_density(PI / 2.0, 0.0, 5.0);
        let b = von_mises_density(-PI / 2.0, 0.0, 5.0);
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_cdf_inversion() {
        let cdf = cdf_from_pdf(&DirectionPdf::uniform());
        assert!((cdf.values()[GRID_SIZE / 2] - 0.5).abs() < 1e-12);
        assert_eq!(sample_direction(&cdf, 0.0), -PI);
        assert!((sample_direction(&cdf, 0.75) - PI / 2.0).abs() <= GRID_STEP);
        let top = sample_direction(&cdf, 1.0 - 1e-15);
        assert!((-PI..PI).contains(&top));
    }

    #[test]
    fn symmetric_cdf_crosses_half_at_zero() {
        let inputs = MixtureInputs { heading: 0.0, wall_direction: 0.0, wall_weight: 0.0, bearings: &[] };
        let zp = ZoneParams { kappa0: 2.0, kappa_wall: 0.0, kappa_fish: 0.0, alpha: 1.0 };
        let pdf = mixture_pdf(&inputs, &zp);
        let cdf = cdf_from_pdf(&pdf);
        assert!((cdf.values()[GRID_SIZE / 2] - 0.5).abs() < 1e-6);
        assert!((cdf.values()[GRID_SIZE] - 1.0).abs() < 1e-9);
        let max_step = pdf.density().iter().cloned().fold(0.0, f64::max) * GRID_STEP;
        assert!(cdf.values().windows(2).all(|w| w[1] >= w[0] && w[1] - w[0] <= max_step + 1e-15));
    }

    #[test]
    fn zero_mass_values_are_rejected() {
        assert!(DirectionPdf::from_values([0.0; GRID_SIZE]).is_none());
        let mut v = [1.0; GRID_SIZE];
        v[3] = -1.0;
        assert!(DirectionPdf::from_values(v).is_none());
    }

    #[test]
    fn sampling_skips_zero_density_prefix() {
        let mut v = [0.0; GRID_SIZE];
        v[100..200].iter_mut().for_each(|x| *x = 1.0);
        let cdf = cdf_from_pdf(&DirectionPdf::from_values(v).unwrap());
        let theta = sample_direction(&cdf, 0.0);
        assert!(theta >= grid_angle(99) && theta <= grid_angle(100));
    }
}
