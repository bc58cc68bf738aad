#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity, clippy::needless_range_loop)]

pub mod analytic;
pub mod config;
pub mod error;
pub mod experiments;
pub mod quadrature;
pub mod rng;
pub mod shape;
pub mod simulate;
pub mod stats;
pub mod validate;
pub mod weight;

pub use error::{EsnError, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/shapes-and-weights.md")]
    mod shapes_and_weights {}
    #[doc = include_str!("../../../book/src/laws.md")]
    mod laws {}
    #[doc = include_str!("../../../book/src/alpha.md")]
    mod alpha {}
    #[doc = include_str!("../../../book/src/dependence.md")]
    mod dependence {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
