//! Numerical laboratory for a local contact blender: the standard contact
//! chart, an explicit perturbation flow, a synthetic partially hyperbolic
//! model, blender boxes with axiom checks, unstable holonomy, suspensions and
//! transitivity detection.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blender;
pub mod chart;
pub mod config;
pub mod cones;
pub mod embeddings;
pub mod error;
pub mod exec;
pub mod flows;
pub mod holonomy;
pub mod model;
pub mod numerics;
pub mod report;
pub mod suites;
pub mod suspension;
pub mod transitivity;
pub mod verdict;

pub use error::{Error, Result};
pub use exec::Exec;
pub use verdict::Verdict;
