//! Energy-efficient model-aggregation routing over LEO mega-constellations.
//!
//! The numeric core (`geometry`, `channel`, `topology`, `hierfl`) is generic
//! over the scalar type ([`scalar::Real`], `f32` or `f64`); the graph
//! algorithms in `routing` accept any ordered additive weight, including
//! integers and exact rationals. Scenario orchestration (`sim`, `config`,
//! `cli`) runs in `f64`. The aliases below fix the common choice.

// Range checks are written `!(x > 0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cli;
pub mod config;
pub mod geometry;
pub mod hierfl;
pub mod rng;
pub mod routing;
pub mod scalar;
pub mod sim;
pub mod topology;

pub use scalar::{Real, Weight};
pub use sim::{Algorithm, RunMetrics, ScenarioConfig};

pub type Constellation = geometry::ConstellationSpec<f64>;
pub type Ephemeris = geometry::Ephemeris<f64>;
pub type GroundCluster = geometry::GroundCluster<f64>;
pub type LinkParams = channel::LinkParams<f64>;
pub type Snapshot = topology::SnapshotGraph<f64>;
pub type Graph = routing::Digraph<f64>;
pub type Arborescence = routing::Arborescence<f64>;
pub type ModelVector = hierfl::ModelVector<f64>;
pub type LocalTask = hierfl::LocalTask<f64>;
