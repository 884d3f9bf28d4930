//! The multi-level, zone-dependent stochastic heading model.

pub mod agent;
pub mod direction;
pub mod params;
pub mod speed;

pub use agent::{
    advance, random_agent, random_position, simulate_group, step_agent, step_group, AgentState, DEFAULT_DT,
};
pub use direction::{
    bessel_i0, cdf_from_pdf, direction_pdf, grid_angle, mixture_pdf, sample_direction, von_mises_density, DirectionCdf,
    DirectionPdf, MixtureInputs, GRID_SIZE, GRID_STEP,
};
pub use params::{Genome, GenomeBounds, ModelParams, ZoneParams, GENE_NAMES, GENOME_LEN};
pub use speed::{draw_speed, SpeedDistribution, SpeedSpec};
