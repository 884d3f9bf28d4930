//! Agent kinematics: `X(t+dt) = X(t) + V(t) dt` with `V = v·(cos Θ, sin Θ)`,
//! where the heading Θ comes from the zone-dependent heading PDF and the
//! speed `v` from the measured speed distribution.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::arena::{wrap_angle, ArenaGeometry, Point};
use crate::model::direction::{cdf_from_pdf, direction_pdf, sample_direction};
use crate::model::params::ModelParams;
use crate::model::speed::SpeedDistribution;
use crate::trajectory::{frame_time, Frame, TrajectoryBatch};

/// Default control period, seconds.
pub const DEFAULT_DT: f64 = 0.2;
/// Heading/speed redraws before an exiting move is projected back inside.
pub const MAX_REDRAWS: usize = 10;
/// Depth of the inward projection after exhausted redraws, mm.
pub const BOUNDARY_INSET_MM: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Point,
    /// Radians in `[-π, π)`.
    pub heading: f64,
    /// mm/s.
    pub speed: f64,
    pub is_robot: bool,
}

impl AgentState {
    pub fn new(position: Point, heading: f64, speed: f64, is_robot: bool) -> Self {
        AgentState { position, heading: wrap_angle(heading), speed, is_robot }
    }
}

/// One explicit integration step for a known heading and speed.
pub fn advance(position: Point, heading: f64, speed: f64, dt: f64) -> Point {
    let (s, c) = heading.sin_cos();
    Point::new(position.x + speed * c * dt, position.y + speed * s * dt)
}

/// Moves `agent` one step of `dt` seconds under the model.
///
/// A move that would leave the water is redrawn up to [`MAX_REDRAWS`]
/// times; after that the last candidate is projected onto the region
/// shrunk by [`BOUNDARY_INSET_MM`].
pub fn step_agent<R: Rng + ?Sized>(
    agent: &AgentState,
    others: &[AgentState],
    params: &ModelParams,
    speeds: &SpeedDistribution,
    g: &ArenaGeometry,
    dt: f64,
    rng: &mut R,
) -> AgentState {
    let mut start = *agent;
    if !g.contains(start.position) {
        start.position = g.clamp_inside(start.position, BOUNDARY_INSET_MM);
    }
    let pdf = direction_pdf(&start, others, params, g).expect("start position is inside the arena");
    let cdf = cdf_from_pdf(&pdf);
    let attempt = |rng: &mut R| {
        let heading = sample_direction(&cdf, rng.gen::<f64>());
        let speed = speeds.draw(rng.gen::<f64>(), rng.gen::<f64>());
        (heading, speed, advance(start.position, heading, speed, dt))
    };
    let (mut heading, mut speed, mut next) = attempt(rng);
    for _ in 0..MAX_REDRAWS {
        if g.contains(next) {
            break;
        }
        (heading, speed, next) = attempt(rng);
    }
    if !g.contains(next) {
        next = g.clamp_inside(next, BOUNDARY_INSET_MM);
    }
    AgentState { position: next, heading, speed, is_robot: agent.is_robot }
}

/// Uniform position inside the water region (rejection sampling).
pub fn random_position<R: Rng + ?Sized>(g: &ArenaGeometry, rng: &mut R) -> Point {
    let bb = g.bounding_box();
    loop {
        let p = Point::new(rng.gen_range(bb.x0..=bb.x1), rng.gen_range(bb.y0..=bb.y1));
        if g.contains(p) {
            return p;
        }
    }
}

pub fn random_agent<R: Rng + ?Sized>(
    g: &ArenaGeometry,
    speeds: &SpeedDistribution,
    is_robot: bool,
    rng: &mut R,
) -> AgentState {
    let position = random_position(g, rng);
    let heading = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    let speed = speeds.draw(rng.gen(), rng.gen());
    AgentState::new(position, heading, speed, is_robot)
}

/// Advances every agent synchronously: each one reacts to the positions of
/// all others at the start of the step.
pub fn step_group<R: Rng + ?Sized>(
    agents: &[AgentState],
    params: &ModelParams,
    speeds: &SpeedDistribution,
    g: &ArenaGeometry,
    dt: f64,
    rng: &mut R,
) -> Vec<AgentState> {
    let mut others = Vec::with_capacity(agents.len().saturating_sub(1));
    (0..agents.len())
        .map(|i| {
            others.clear();
            others.extend(agents.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, a)| *a));
            step_agent(&agents[i], &others, params, speeds, g, dt, rng)
        })
        .collect()
}

/// Simulates `n_agents` model agents from random starts and records
/// `n_frames` frames (the first one is the initial state).
pub fn simulate_group<R: Rng + ?Sized>(
    params: &ModelParams,
    speeds: &SpeedDistribution,
    g: &ArenaGeometry,
    n_agents: usize,
    n_frames: usize,
    dt: f64,
    rng: &mut R,
) -> TrajectoryBatch {
    let mut agents: Vec<AgentState> = (0..n_agents).map(|_| random_agent(g, speeds, false, rng)).collect();
    let mut frames = Vec::with_capacity(n_frames);
    for k in 0..n_frames {
        frames.push(Frame { t: frame_time(k as u64, dt), positions: agents.iter().map(|a| a.position).collect() });
        if k + 1 < n_frames {
            agents = step_group(&agents, params, speeds, g, dt, rng);
        }
    }
    TrajectoryBatch::new(dt, (0..n_agents as u32).collect(), vec![false; n_agents], frames)
        .expect("simulated frames are regular")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arena::canonical_geometry;
    use crate::model::params::{Genome, GenomeBounds};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn explicit_step_arithmetic() {
        let p = advance(Point::new(100.0, 100.0), 0.0, 10.0, 0.2);
        assert_eq!(p, Point::new(102.0, 100.0));
    }

    #[test]
    fn seeded_steps_are_reproducible() {
        let g = canonical_geometry();
        let speeds = SpeedDistribution::default();
        let params = GenomeBounds::default().random(&mut ChaCha8Rng::seed_from_u64(1)).params();
        let a = AgentState::new(Point::new(175.0, 500.0), 0.3, 50.0, false);
        let others = [AgentState::new(Point::new(200.0, 450.0), 1.0, 40.0, false)];
        let run = || step_agent(&a, &others, &params, &speeds, &g, DEFAULT_DT, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(run(), run());
    }

    #[test]
    fn long_runs_stay_inside() {
        let g = canonical_geometry();
        let speeds = SpeedDistribution::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..3 {
            let params = GenomeBounds::default().random(&mut rng).params();
            let batch = simulate_group(&params, &speeds, &g, 3, 350, DEFAULT_DT, &mut rng);
            for f in batch.frames() {
                assert!(f.positions.iter().all(|p| g.contains(*p)));
            }
        }
    }

    #[test]
    fn fast_agents_hugging_walls_are_projected_inside() {
        let g = canonical_geometry();
        let speeds = SpeedDistribution::new(vec![2000.0, 2500.0], vec![1.0]).unwrap();
        let params = Genome([0.0; 18]).params();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut a = AgentState::new(Point::new(1.0, 330.0), 0.0, 0.0, false);
        for _ in 0..50 {
            a = step_agent(&a, &[], &params, &speeds, &g, DEFAULT_DT, &mut rng);
            assert!(g.contains(a.position));
        }
    }
}
