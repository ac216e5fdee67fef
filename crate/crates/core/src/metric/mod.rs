//! Symmetric distance oracles standing in for the smoothed CC metric, the
//! two-sided flow bound probe and the shrunken domains `Ω_ε`.

mod gauge;
mod graph;
mod probes;

use std::fmt;

use serde::Serialize;

use crate::grid::Grid;

pub use gauge::{gauge_distance_heisenberg, koranyi_gauge, EuclideanGauge, HeisenbergGauge};
pub use graph::{cc_distance_graph, GraphOracle};
pub use probes::{
    horizontal_gradient_bound, nsw_probe, nsw_probe_pairs, shrunken_domain, triangle_excess, NswFit, ShrunkenDomain,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    Gauge,
    Graph,
}

/// Symmetric distance evaluator. `distance(x, y) == distance(y, x)` holds
/// bitwise and `distance(x, x) == 0`.
pub trait DistanceOracle: Send + Sync + fmt::Debug {
    fn kind(&self) -> OracleKind;

    fn dim(&self) -> usize;

    fn name(&self) -> String;

    /// `f64::INFINITY` when the oracle cannot connect the points.
    fn distance(&self, x: &[f64], y: &[f64]) -> f64;

    fn distance_squared(&self, x: &[f64], y: &[f64]) -> f64 {
        let d = self.distance(x, y);
        d * d
    }

    /// Axis-aligned box containing the closed ball of radius `r` about `x`.
    fn ball_box(&self, _x: &[f64], _r: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }

    /// Lower bound of `distance(x, y)` over `y` in the box `[lo, hi]`.
    fn box_lower_bound(&self, _x: &[f64], _lo: &[f64], _hi: &[f64]) -> f64 {
        0.0
    }

    /// Distances from `x` to every node of `grid`.
    fn distances_to_grid(&self, x: &[f64], grid: &Grid) -> Vec<f64> {
        let mut y = vec![0.0; grid.dim()];
        (0..grid.len())
            .map(|node| {
                grid.coords_into(node, &mut y);
                self.distance(x, &y)
            })
            .collect()
    }

    /// For each query, the distance to the nearest source. `None` if the
    /// oracle has no faster route than pairwise evaluation.
    fn nearest_source_distances(&self, _sources: &[Vec<f64>], _queries: &[Vec<f64>]) -> Option<Vec<f64>> {
        None
    }

    /// Constant `K` with `d(x,z) ≤ K(d(x,y) + d(y,z))`.
    fn triangle_constant(&self) -> f64;
}

/// Lexicographic order used to symmetrize evaluations.
pub(crate) fn ordered<'a>(x: &'a [f64], y: &'a [f64]) -> (&'a [f64], &'a [f64]) {
    for (a, b) in x.iter().zip(y) {
        if a < b {
            return (x, y);
        }
        if a > b {
            return (y, x);
        }
    }
    (x, y)
}
