//! Closed-loop calibration of a zone-based stochastic fish-school model.
//!
//! The guide in `book/` walks through the modules in data-flow order.

pub mod arena;
pub mod calibrator;
pub mod lab;
pub mod model;
pub mod rng;
pub mod selftest;
pub mod stats;
pub mod trajectory;
pub mod wire;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/arena.md")]
    mod arena {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/statistics.md")]
    mod statistics {}
    #[doc = include_str!("../../../book/src/calibrator.md")]
    mod calibrator {}
    #[doc = include_str!("../../../book/src/wire.md")]
    mod wire {}
    #[doc = include_str!("../../../book/src/lab.md")]
    mod lab {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
