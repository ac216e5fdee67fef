use std::collections::VecDeque;
use std::fmt;

use super::{DistanceOracle, OracleKind};
use crate::error::{Error, Result};
use crate::geometry::{exp_flow, VectorFieldSystem};
use crate::grid::{BoxDomain, Grid};

/// RK4 steps per graph edge.
const EDGE_FLOW_STEPS: usize = 4;
/// Refuse lattices beyond this many nodes.
const MAX_NODES: usize = 4_000_000;

/// Horizontal graph estimate of the CC distance.
///
/// Nodes form a lattice over `region` with spacing at most `step/4`; node `p`
/// is joined to the lattice node nearest to `exp_p(±step·eᵢ)` for every field.
/// Edges are undirected with weight `step` and queries snap both points to the
/// lattice, so distinct points sharing a node get distance 0.
pub struct GraphOracle {
    sys: VectorFieldSystem,
    lattice: Grid,
    step: f64,
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl fmt::Debug for GraphOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GraphOracle")
            .field("system", &self.sys.name())
            .field("step", &self.step)
            .field("nodes", &self.lattice.len())
            .field("edges", &self.targets.len())
            .finish()
    }
}

impl GraphOracle {
    /// Lattice spacing defaults to `step/4`.
    pub fn new(sys: &VectorFieldSystem, region: BoxDomain, step: f64) -> Result<Self> {
        Self::with_spacing(sys, region, step, step / 4.0)
    }

    /// Step `1/64` of the shortest edge of `region`.
    pub fn with_default_step(sys: &VectorFieldSystem, region: BoxDomain) -> Result<Self> {
        let step = region.min_edge() / 64.0;
        Self::new(sys, region, step)
    }

    pub fn with_spacing(sys: &VectorFieldSystem, region: BoxDomain, step: f64, spacing: f64) -> Result<Self> {
        if !(step.is_finite() && step > 0.0 && spacing.is_finite() && spacing > 0.0) {
            return Err(Error::Config(format!("graph step and spacing must be positive, got {step}, {spacing}")));
        }
        let n = sys.dim();
        if region.dim() != n {
            return Err(Error::Dimension { expected: n, got: region.dim() });
        }
        let mut counts = Vec::with_capacity(n);
        let mut total: usize = 1;
        for k in 0..n {
            let edge = region.upper()[k] - region.lower()[k];
            let c = (edge / spacing - 1e-9).ceil().max(1.0) as usize + 1;
            total = total.saturating_mul(c);
            counts.push(c);
        }
        if total > MAX_NODES {
            return Err(Error::Config(format!("graph lattice would have {total} nodes (limit {MAX_NODES})")));
        }
        let lattice = Grid::new(region, counts)?;
        let m = sys.fields();
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); lattice.len()];
        let mut p = vec![0.0; n];
        let mut h = vec![0.0; m];
        for node in 0..lattice.len() {
            lattice.coords_into(node, &mut p);
            for i in 0..m {
                for s in [step, -step] {
                    h.fill(0.0);
                    h[i] = s;
                    let Ok(q) = exp_flow(sys, &p, &h, EDGE_FLOW_STEPS) else { continue };
                    if !lattice.contains(&q) {
                        continue;
                    }
                    let t = lattice.nearest(&q);
                    if t != node {
                        adj[node].push(t as u32);
                        adj[t].push(node as u32);
                    }
                }
            }
        }
        let mut offsets = Vec::with_capacity(lattice.len() + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
            targets.extend_from_slice(list);
            offsets.push(targets.len());
        }
        Ok(Self { sys: sys.clone(), lattice, step, offsets, targets })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn lattice(&self) -> &Grid {
        &self.lattice
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    fn snap(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.lattice.dim() || !self.lattice.contains(x) {
            return None;
        }
        Some(self.lattice.nearest(x))
    }

    /// Hop counts from the given source nodes; `u32::MAX` marks unreached nodes.
    fn bfs(&self, sources: &[usize]) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.lattice.len()];
        let mut queue = VecDeque::new();
        for &s in sources {
            if dist[s] != 0 {
                dist[s] = 0;
                queue.push_back(s);
            }
        }
        while let Some(v) = queue.pop_front() {
            let next = dist[v] + 1;
            for &t in &self.targets[self.offsets[v]..self.offsets[v + 1]] {
                let t = t as usize;
                if dist[t] == u32::MAX {
                    dist[t] = next;
                    queue.push_back(t);
                }
            }
        }
        dist
    }

    fn hops_to_distance(&self, h: u32) -> f64 {
        if h == u32::MAX {
            f64::INFINITY
        } else {
            h as f64 * self.step
        }
    }

    /// Shortest-path value between the snapped points.
    pub fn query(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let (a, b) = match (self.snap(x), self.snap(y)) {
            (Some(a), Some(b)) => (a, b),
            (None, _) => return Err(Error::ExitedDomain { time: 0.0, point: x.to_vec() }),
            (_, None) => return Err(Error::ExitedDomain { time: 0.0, point: y.to_vec() }),
        };
        if a == b {
            return Ok(0.0);
        }
        let d = self.bfs(&[a.min(b)])[a.max(b)];
        if d == u32::MAX {
            return Err(Error::Unreachable);
        }
        Ok(self.hops_to_distance(d))
    }
}

impl DistanceOracle for GraphOracle {
    fn kind(&self) -> OracleKind {
        OracleKind::Graph
    }
    fn dim(&self) -> usize {
        self.lattice.dim()
    }
    fn name(&self) -> String {
        format!("graph:{}:{}", self.sys.name().unwrap_or("system"), self.step)
    }
    fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        self.query(x, y).unwrap_or(f64::INFINITY)
    }
    fn distances_to_grid(&self, x: &[f64], grid: &Grid) -> Vec<f64> {
        let Some(s) = self.snap(x) else { return vec![f64::INFINITY; grid.len()] };
        let dist = self.bfs(&[s]);
        let mut y = vec![0.0; grid.dim()];
        (0..grid.len())
            .map(|node| {
                grid.coords_into(node, &mut y);
                match self.snap(&y) {
                    Some(t) => self.hops_to_distance(dist[t]),
                    None => f64::INFINITY,
                }
            })
            .collect()
    }
    fn nearest_source_distances(&self, sources: &[Vec<f64>], queries: &[Vec<f64>]) -> Option<Vec<f64>> {
        let seeds: Vec<usize> = sources.iter().filter_map(|s| self.snap(s)).collect();
        let dist = self.bfs(&seeds);
        Some(
            queries
                .iter()
                .map(|q| match self.snap(q) {
                    Some(t) => self.hops_to_distance(dist[t]),
                    None => f64::INFINITY,
                })
                .collect(),
        )
    }
    /// Graph distances between lattice nodes satisfy the triangle inequality exactly.
    fn triangle_constant(&self) -> f64 {
        1.0
    }
}

/// Graph CC estimate between `x` and `y` over the system's domain. Fails with
/// [`Error::Unreachable`] if the graph does not connect them.
pub fn cc_distance_graph(sys: &VectorFieldSystem, x: &[f64], y: &[f64], step: f64) -> Result<f64> {
    GraphOracle::new(sys, sys.domain().clone(), step)?.query(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{euclidean, heisenberg1};
    use crate::metric::gauge_distance_heisenberg;

    #[test]
    fn same_point_is_zero() {
        let sys = euclidean(2).with_domain(BoxDomain::cube(2, -1.0, 1.0).unwrap()).unwrap();
        assert_eq!(cc_distance_graph(&sys, &[0.3, 0.3], &[0.3, 0.3], 0.125).unwrap(), 0.0);
    }

    #[test]
    fn euclidean_segment() {
        let sys = euclidean(2);
        let region = BoxDomain::new(vec![-0.25, -0.25], vec![1.25, 0.25]).unwrap();
        let g = GraphOracle::new(&sys, region, 1.0 / 32.0).unwrap();
        let d = g.query(&[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((d - 1.0).abs() <= 1.0 / 32.0, "{d}");
        assert_eq!(g.distance(&[1.0, 0.0], &[0.0, 0.0]), d);
    }

    #[test]
    fn heisenberg_vertical_point_is_comparable_to_gauge() {
        let sys = heisenberg1();
        let region = BoxDomain::new(vec![-0.75, -0.75, -0.5], vec![0.75, 0.75, 0.5]).unwrap();
        let x = [0.0; 3];
        let y = [0.0, 0.0, 0.25];
        let gauge = gauge_distance_heisenberg(&x, &y);
        let mut prev = f64::INFINITY;
        for step in [1.0 / 8.0, 1.0 / 16.0] {
            let d = GraphOracle::new(&sys, region.clone(), step).unwrap().query(&x, &y).unwrap();
            let ratio = d / gauge;
            assert!((0.3..=3.5).contains(&ratio), "step {step}: ratio {ratio}");
            assert!(d <= prev + step, "refinement grew: {prev} -> {d}");
            prev = d;
        }
    }

    #[test]
    fn disconnected_lattice_is_reported() {
        // a single field ∂x cannot leave the line y = const
        let region = BoxDomain::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let one = VectorFieldSystem::from_fn(2, 1, |_x, out| {
            out[0] = 1.0;
            out[1] = 0.0;
        }, region.clone())
        .unwrap();
        let g = GraphOracle::new(&one, region, 0.125).unwrap();
        assert!(matches!(g.query(&[0.1, 0.1], &[0.1, 0.9]), Err(Error::Unreachable)));
        assert_eq!(g.distance(&[0.1, 0.1], &[0.1, 0.9]), f64::INFINITY);
    }

    #[test]
    fn outside_region_is_an_error() {
        let sys = euclidean(2);
        let g = GraphOracle::new(&sys, BoxDomain::cube(2, 0.0, 1.0).unwrap(), 0.25).unwrap();
        assert!(g.query(&[2.0, 0.0], &[0.5, 0.5]).is_err());
    }
}
