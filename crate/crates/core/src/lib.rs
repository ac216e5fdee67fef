//! Numerical laboratory for quasilinear degenerate subelliptic operators built
//! from Hörmander vector fields.

pub mod envelope;
pub mod error;
pub mod functions;
pub mod geometry;
pub mod grid;
pub mod harness;
pub mod io;
pub mod metric;
pub mod operator;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
pub use geometry::VectorFieldSystem;
pub use grid::{BoxDomain, Grid, GridFunction};
pub use harness::{ScenarioConfig, ScenarioReport};
pub use metric::{DistanceOracle, OracleKind};
pub use operator::{HorizontalJet, QuasilinearOperator};
