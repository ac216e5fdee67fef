//! Comparison, strong-maximum and translation-maximum experiments, and the
//! scenario pipeline that strings them together.

mod scenario;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{exp_flow, VectorFieldSystem};
use crate::grid::GridFunction;
use crate::operator::{horizontal_gradient_norm_grid, QuasilinearOperator};
use crate::solver::residual;

pub use scenario::{
    boundary_function, load_scenario, parse_scenario, scenario_run, BoundaryFn, ChecksConfig, DomainConfig,
    EnvelopeConfig, OperatorConfig, OracleConfig, ScenarioConfig, ScenarioRun, SolverConfig, SystemConfig,
};

/// Nodes within this much of a maximum belong to its argmax set.
pub const ARGMAX_SLACK: f64 = 1e-9;
/// Allowed ratio between fitted translation constants and measured gradients.
pub const LIPSCHITZ_SLACK: f64 = 1.2;
/// RK4 steps for the flows behind `u_h` and `v_l`.
const TRANSLATION_FLOW_STEPS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub check: String,
    pub node: Option<usize>,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageError {
    pub stage: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub scenario_id: String,
    pub verdict: Verdict,
    /// `max (u − v)` over the mask, `None` for an empty mask.
    pub max_interior_gap: Option<f64>,
    /// `max (u − v)⁺` off the mask.
    pub max_boundary_gap: f64,
    pub argmax_nodes: Vec<usize>,
    pub fitted_constants: BTreeMap<String, f64>,
    pub violations: Vec<Violation>,
    pub checks: Vec<CheckOutcome>,
    pub stage_errors: Vec<StageError>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_ms: Option<u64>,
}

impl ScenarioReport {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            scenario_id: id.into(),
            verdict: Verdict::Pass,
            max_interior_gap: None,
            max_boundary_gap: 0.0,
            argmax_nodes: Vec::new(),
            fitted_constants: BTreeMap::new(),
            violations: Vec::new(),
            checks: Vec::new(),
            stage_errors: Vec::new(),
            runtime_ms: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Compares `u` and `v` on the mask against their gap on the remaining nodes.
/// Passes iff `max_mask (u − v) ≤ max_rest (u − v)⁺ + tolerance`.
pub fn comparison_check(
    u: &GridFunction,
    v: &GridFunction,
    mask: &[bool],
    tolerance: f64,
) -> Result<(Verdict, ScenarioReport)> {
    if !u.same_grid(v) {
        return Err(Error::GridMismatch);
    }
    if mask.len() != u.grid().len() {
        return Err(Error::Dimension { expected: u.grid().len(), got: mask.len() });
    }
    let gap: Vec<f64> = u.values().iter().zip(v.values()).map(|(a, b)| a - b).collect();
    let mut interior: Option<f64> = None;
    let mut boundary: f64 = 0.0;
    for (node, &g) in gap.iter().enumerate() {
        if mask[node] {
            interior = Some(interior.map_or(g, |m| m.max(g)));
        } else {
            boundary = boundary.max(g);
        }
    }
    let mut report = ScenarioReport::new("comparison");
    report.max_interior_gap = interior;
    report.max_boundary_gap = boundary;
    if let Some(top) = interior {
        report.argmax_nodes = (0..gap.len()).filter(|&n| mask[n] && gap[n] >= top - ARGMAX_SLACK).collect();
    }
    let limit = boundary + tolerance;
    for (node, &g) in gap.iter().enumerate() {
        if mask[node] && g > limit {
            report.violations.push(Violation { check: "comparison".into(), node: Some(node), margin: g - limit });
        }
    }
    let verdict = Verdict::from_bool(report.violations.is_empty());
    report.verdict = verdict;
    Ok((verdict, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrongMaxVerdict {
    /// `ℒ̂u > tolerance` somewhere inside, so the probe does not apply.
    NotSubsolution,
    /// `max u < 0`.
    NegativeMaximum,
    BoundaryAttained,
    /// Interior maximum with oscillation within `10·tolerance`.
    Constant,
    /// Interior maximum of a non-constant subsolution.
    Violation,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StrongMaxReport {
    pub verdict: StrongMaxVerdict,
    pub max: f64,
    pub min: f64,
    /// Largest `ℒ̂u` over interior nodes.
    pub worst_residual: f64,
    pub interior_argmax: Vec<usize>,
}

impl StrongMaxReport {
    pub fn passed(&self) -> bool {
        self.verdict != StrongMaxVerdict::Violation
    }
}

/// Looks for a nonnegative interior maximum of a discrete subsolution.
pub fn strong_max_probe(
    op: &QuasilinearOperator,
    sys: &VectorFieldSystem,
    u: &GridFunction,
    tolerance: f64,
) -> Result<StrongMaxReport> {
    let grid = u.grid();
    let res = residual(op, sys, u)?;
    let worst_residual = grid.interior_nodes().into_iter().map(|n| res.value(n)).fold(f64::NEG_INFINITY, f64::max);
    let (max, min) = (u.max(), u.min());
    let interior_argmax: Vec<usize> =
        grid.interior_nodes().into_iter().filter(|&n| u.value(n) >= max - ARGMAX_SLACK).collect();
    let verdict = if worst_residual > tolerance {
        StrongMaxVerdict::NotSubsolution
    } else if max < 0.0 {
        StrongMaxVerdict::NegativeMaximum
    } else if interior_argmax.is_empty() {
        StrongMaxVerdict::BoundaryAttained
    } else if max - min <= 10.0 * tolerance {
        StrongMaxVerdict::Constant
    } else {
        StrongMaxVerdict::Violation
    };
    Ok(StrongMaxReport { verdict, max, min, worst_residual, interior_argmax })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TranslationCell {
    pub value: f64,
    pub argmax: Vec<usize>,
}

/// `M_δ(h, l) = max over the mask of u(exp_x(h·𝔛)) − v(exp_x(l·𝔛))`, stored
/// row-major in `(h, l)`. A cell is `None` when some flow leaves the grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TranslationTable {
    pub delta: f64,
    pub hs: Vec<Vec<f64>>,
    pub ls: Vec<Vec<f64>>,
    pub cells: Vec<Option<TranslationCell>>,
    pub mask_nodes: usize,
}

impl TranslationTable {
    pub fn get(&self, hi: usize, li: usize) -> Option<&TranslationCell> {
        self.cells[hi * self.ls.len() + li].as_ref()
    }

    pub fn valid_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// `w(exp_x(h·𝔛))` at each mask node, `None` where the flow leaves the grid.
fn translated(sys: &VectorFieldSystem, w: &GridFunction, nodes: &[usize], h: &[f64]) -> Vec<Option<f64>> {
    let grid = w.grid();
    let zero = h.iter().all(|a| *a == 0.0);
    let mut x = vec![0.0; grid.dim()];
    nodes
        .iter()
        .map(|&node| {
            if zero {
                return Some(w.value(node));
            }
            grid.coords_into(node, &mut x);
            exp_flow(sys, &x, h, TRANSLATION_FLOW_STEPS).ok().and_then(|y| w.interpolate(&y))
        })
        .collect()
}

pub fn translation_max_map(
    u: &GridFunction,
    v: &GridFunction,
    sys: &VectorFieldSystem,
    delta: f64,
    hs: &[Vec<f64>],
    ls: &[Vec<f64>],
    mask: &[bool],
) -> Result<TranslationTable> {
    if !u.same_grid(v) {
        return Err(Error::GridMismatch);
    }
    let grid = u.grid();
    if sys.dim() != grid.dim() {
        return Err(Error::Dimension { expected: grid.dim(), got: sys.dim() });
    }
    if mask.len() != grid.len() {
        return Err(Error::Dimension { expected: grid.len(), got: mask.len() });
    }
    for h in hs.iter().chain(ls) {
        if h.len() != sys.fields() {
            return Err(Error::Dimension { expected: sys.fields(), got: h.len() });
        }
        if !(norm(h) < delta) {
            return Err(Error::Config(format!("translation {h:?} is not shorter than delta = {delta}")));
        }
    }
    let nodes: Vec<usize> = (0..grid.len()).filter(|&n| mask[n]).collect();
    if nodes.is_empty() {
        return Err(Error::Degenerate("translation mask is empty".into()));
    }
    let uh: Vec<Vec<Option<f64>>> = hs.iter().map(|h| translated(sys, u, &nodes, h)).collect();
    let vl: Vec<Vec<Option<f64>>> = ls.iter().map(|l| translated(sys, v, &nodes, l)).collect();
    let mut cells = Vec::with_capacity(hs.len() * ls.len());
    for a in &uh {
        for b in &vl {
            let diffs: Option<Vec<f64>> = a.iter().zip(b).map(|(p, q)| Some((*p)? - (*q)?)).collect();
            cells.push(diffs.map(|d| {
                let value = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let argmax = nodes.iter().zip(&d).filter(|(_, g)| **g >= value - ARGMAX_SLACK).map(|(n, _)| *n).collect();
                TranslationCell { value, argmax }
            }));
        }
    }
    Ok(TranslationTable { delta, hs: hs.to_vec(), ls: ls.to_vec(), cells, mask_nodes: nodes.len() })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LipschitzFit {
    /// `max |M(h,l) − M(h',l)| / ‖h − h'‖` over valid pairs.
    pub h_ratio: f64,
    /// `max |M(h,l) − M(h,l')| / ‖l − l'‖` over valid pairs.
    pub l_ratio: f64,
    /// Measured `‖𝔛u‖∞`, `‖𝔛v‖∞`.
    pub grad_u: f64,
    pub grad_v: f64,
    pub pairs: usize,
    /// `h_ratio ≤ 1.2·grad_u` and `l_ratio ≤ 1.2·grad_v`, up to `1e-12`.
    pub passes: bool,
}

fn distinct_per_axis(points: &[Vec<f64>]) -> usize {
    let m = points.first().map_or(0, |p| p.len());
    (0..m)
        .map(|k| {
            let mut vals: Vec<f64> = points.iter().map(|p| p[k]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            vals.len()
        })
        .min()
        .unwrap_or(0)
}

pub fn lipschitz_probe(
    table: &TranslationTable,
    u: &GridFunction,
    v: &GridFunction,
    sys: &VectorFieldSystem,
) -> Result<LipschitzFit> {
    if distinct_per_axis(&table.hs) < 3 || distinct_per_axis(&table.ls) < 3 {
        return Err(Error::InsufficientTable("need at least 3 translation values per axis for h and l".into()));
    }
    let (nh, nl) = (table.hs.len(), table.ls.len());
    let diff = |a: &[f64], b: &[f64]| norm(&a.iter().zip(b).map(|(p, q)| p - q).collect::<Vec<_>>());
    let mut pairs = 0;
    let mut h_ratio: f64 = 0.0;
    for li in 0..nl {
        for a in 0..nh {
            for b in a + 1..nh {
                if let (Some(p), Some(q)) = (table.get(a, li), table.get(b, li)) {
                    let s = diff(&table.hs[a], &table.hs[b]);
                    if s > 0.0 {
                        h_ratio = h_ratio.max((p.value - q.value).abs() / s);
                        pairs += 1;
                    }
                }
            }
        }
    }
    let mut l_ratio: f64 = 0.0;
    for hi in 0..nh {
        for a in 0..nl {
            for b in a + 1..nl {
                if let (Some(p), Some(q)) = (table.get(hi, a), table.get(hi, b)) {
                    let s = diff(&table.ls[a], &table.ls[b]);
                    if s > 0.0 {
                        l_ratio = l_ratio.max((p.value - q.value).abs() / s);
                        pairs += 1;
                    }
                }
            }
        }
    }
    if pairs == 0 {
        return Err(Error::InsufficientTable("no pair of valid cells".into()));
    }
    let grad_u = horizontal_gradient_norm_grid(sys, u);
    let grad_v = horizontal_gradient_norm_grid(sys, v);
    let passes =
        h_ratio <= LIPSCHITZ_SLACK * grad_u + 1e-12 && l_ratio <= LIPSCHITZ_SLACK * grad_v + 1e-12;
    Ok(LipschitzFit { h_ratio, l_ratio, grad_u, grad_v, pairs, passes })
}

/// `k` evenly spaced translations per axis inside the cube of half-width
/// `0.99·delta/√m`, so every point has norm below `delta`.
pub fn translation_lattice(m: usize, delta: f64, k: usize) -> Vec<Vec<f64>> {
    let w = 0.99 * delta / (m as f64).sqrt();
    let axis: Vec<f64> = if k == 1 {
        vec![0.0]
    } else {
        (0..k).map(|i| -w + 2.0 * w * i as f64 / (k - 1) as f64).collect()
    };
    let mut out = vec![Vec::new()];
    for _ in 0..m {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |a| {
                    let mut q = p.clone();
                    q.push(*a);
                    q
                })
            })
            .collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{euclidean, heisenberg1};
    use crate::grid::{BoxDomain, Grid};
    use crate::solver::{solve_dirichlet, SolverParams};

    fn plane(count: usize) -> Grid {
        Grid::cube(2, -1.0, 1.0, count).unwrap()
    }

    #[test]
    fn equal_fields_pass_with_equal_gaps() {
        let u = GridFunction::from_fn(plane(9), |x| x[0] * x[1]);
        let (v, r) = comparison_check(&u, &u, u.mask(), 0.0).unwrap();
        assert_eq!(v, Verdict::Pass);
        assert_eq!(r.max_interior_gap, Some(0.0));
        assert_eq!(r.max_boundary_gap, 0.0);
        assert_eq!(r.argmax_nodes.len(), 49);
    }

    #[test]
    fn shifted_field_passes_with_negative_gap() {
        let u = GridFunction::from_fn(plane(9), |x| x[0] * x[1]);
        let v = u.map(|a| a + 1.0);
        let (verdict, r) = comparison_check(&u, &v, u.mask(), 0.0).unwrap();
        assert_eq!(verdict, Verdict::Pass);
        assert_eq!(r.max_interior_gap, Some(-1.0));
        assert_eq!(r.max_boundary_gap, 0.0);
    }

    #[test]
    fn interior_bump_fails_at_the_bump() {
        let u = GridFunction::from_fn(plane(9), |_| 0.0);
        let mut v = u.clone();
        let centre = u.grid().nearest(&[0.0, 0.0]);
        v.values_mut()[centre] = -0.5;
        let (verdict, r) = comparison_check(&u, &v, u.mask(), 1e-6).unwrap();
        assert_eq!(verdict, Verdict::Fail);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].node, Some(centre));
        assert_eq!(r.argmax_nodes, vec![centre]);
    }

    #[test]
    fn comparison_rejects_mismatched_grids() {
        let u = GridFunction::constant(plane(9), 0.0);
        let v = GridFunction::constant(plane(11), 0.0);
        assert!(matches!(comparison_check(&u, &v, u.mask(), 0.0), Err(Error::GridMismatch)));
    }

    #[test]
    fn constant_passes_strong_max() {
        let u = GridFunction::constant(Grid::cube(3, -1.0, 1.0, 9).unwrap(), 0.2);
        let r = strong_max_probe(&QuasilinearOperator::sublaplacian(), &heisenberg1(), &u, 1e-8).unwrap();
        assert_eq!(r.verdict, StrongMaxVerdict::Constant);
        assert!(r.passed());
    }

    #[test]
    fn solved_saddle_attains_its_max_on_the_rim() {
        let grid = Grid::cube(3, -1.0, 1.0, 9).unwrap();
        let op = QuasilinearOperator::sublaplacian();
        let f = |x: &[f64]| x[0] * x[0] - x[1] * x[1];
        let s = solve_dirichlet(&op, &heisenberg1(), &grid, &f, &SolverParams::default()).unwrap();
        let r = strong_max_probe(&op, &heisenberg1(), &s.field, 1e-8).unwrap();
        assert_eq!(r.verdict, StrongMaxVerdict::BoundaryAttained);
    }

    #[test]
    fn hand_built_interior_max_is_rejected() {
        let grid = Grid::cube(3, -1.0, 1.0, 9).unwrap();
        let u = GridFunction::from_fn(grid, |x| 1.0 - x.iter().map(|a| a * a).sum::<f64>());
        let r = strong_max_probe(&QuasilinearOperator::sublaplacian(), &heisenberg1(), &u, 1e-8).unwrap();
        assert_eq!(r.verdict, StrongMaxVerdict::NotSubsolution);
    }

    #[test]
    fn zero_translation_gives_plain_max() {
        let g = plane(17);
        let u = GridFunction::from_fn(g.clone(), |x| x[0] - x[1] * x[1]);
        let v = GridFunction::from_fn(g, |x| 0.3 * x[1]);
        let t = translation_max_map(&u, &v, &euclidean(2), 0.1, &[vec![0.0, 0.0]], &[vec![0.0, 0.0]], u.mask())
            .unwrap();
        let direct = (0..u.grid().len())
            .filter(|&n| u.mask()[n])
            .map(|n| u.value(n) - v.value(n))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(t.get(0, 0).unwrap().value, direct);
    }

    #[test]
    fn euclidean_translations_shift_arguments() {
        // linear fields are interpolated exactly
        let g = plane(17);
        let u = GridFunction::from_fn(g.clone(), |x| 2.0 * x[0] + x[1]);
        let v = GridFunction::from_fn(g, |x| -x[1]);
        let hs = vec![vec![0.05, 0.0], vec![0.0, -0.03]];
        let ls = vec![vec![0.0, 0.04]];
        let t = translation_max_map(&u, &v, &euclidean(2), 0.1, &hs, &ls, u.mask()).unwrap();
        for (hi, h) in hs.iter().enumerate() {
            let l = &ls[0];
            let direct = (0..u.grid().len())
                .filter(|&n| u.mask()[n])
                .map(|n| {
                    let x = u.grid().coords(n);
                    (2.0 * (x[0] + h[0]) + (x[1] + h[1])) + (x[1] + l[1])
                })
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((t.get(hi, 0).unwrap().value - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn long_translation_is_rejected() {
        let u = GridFunction::constant(plane(9), 0.0);
        let r = translation_max_map(&u, &u, &euclidean(2), 0.1, &[vec![0.1, 0.0]], &[vec![0.0, 0.0]], u.mask());
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn flows_leaving_the_grid_mark_cells_invalid() {
        let g = plane(9);
        let u = GridFunction::constant(g.clone(), 0.0);
        let all = vec![true; g.len()];
        let t = translation_max_map(&u, &u, &euclidean(2), 0.1, &[vec![0.05, 0.0]], &[vec![0.0, 0.0]], &all)
            .unwrap();
        assert!(t.get(0, 0).is_none());
        assert_eq!(t.valid_cells(), 0);
    }

    fn heisenberg_pair() -> (GridFunction, GridFunction) {
        let g = Grid::new(BoxDomain::cube(3, -0.5, 0.5).unwrap(), vec![11, 11, 11]).unwrap();
        let u = GridFunction::from_fn(g.clone(), |x| (x[0] - 0.2 * x[1]).sin() + 0.3 * x[2]);
        let v = GridFunction::from_fn(g, |x| (x[0] * x[0] + x[1] * x[1]).sqrt() * 0.5 - x[2]);
        (u, v)
    }

    #[test]
    fn heisenberg_table_is_finite_and_relabeling_symmetric() {
        let (u, v) = heisenberg_pair();
        let sys = heisenberg1();
        let hs = translation_lattice(2, 0.05, 5);
        assert!(hs.iter().all(|h| norm(h) <= 0.05));
        let mask = u.grid().interior_mask();
        let t = translation_max_map(&u, &v, &sys, 0.05, &hs, &hs, &mask).unwrap();
        assert_eq!(t.valid_cells(), 25 * 25);
        assert!(t.cells.iter().all(|c| c.as_ref().unwrap().value.is_finite()));
        // (u, v, h, l) → (−v, −u, l, h)
        let nu = v.map(|a| -a);
        let nv = u.map(|a| -a);
        let s = translation_max_map(&nu, &nv, &sys, 0.05, &hs, &hs, &mask).unwrap();
        for a in 0..25 {
            for b in 0..25 {
                let p = t.get(a, b).unwrap();
                let q = s.get(b, a).unwrap();
                assert_eq!(p.value, q.value);
                assert_eq!(p.argmax, q.argmax);
            }
        }
    }

    #[test]
    fn constants_shift_the_table_and_keep_argmax_sets() {
        let (u, v) = heisenberg_pair();
        let sys = heisenberg1();
        let hs = translation_lattice(2, 0.05, 3);
        let mask = u.grid().interior_mask();
        let t = translation_max_map(&u, &v, &sys, 0.05, &hs, &hs, &mask).unwrap();
        let s = translation_max_map(&u.map(|a| a + 0.75), &v.map(|a| a - 0.25), &sys, 0.05, &hs, &hs, &mask).unwrap();
        for (p, q) in t.cells.iter().zip(&s.cells) {
            let (p, q) = (p.as_ref().unwrap(), q.as_ref().unwrap());
            assert!((q.value - p.value - 1.0).abs() < 1e-12);
            assert_eq!(p.argmax, q.argmax);
        }
    }

    #[test]
    fn constants_have_zero_ratios() {
        let u = GridFunction::constant(plane(17), 1.5);
        let v = GridFunction::constant(plane(17), -0.5);
        let hs = translation_lattice(2, 0.1, 3);
        let t = translation_max_map(&u, &v, &euclidean(2), 0.1, &hs, &hs, u.mask()).unwrap();
        let fit = lipschitz_probe(&t, &u, &v, &euclidean(2)).unwrap();
        assert_eq!(fit.h_ratio, 0.0);
        assert_eq!(fit.l_ratio, 0.0);
        assert!(fit.passes);
    }

    #[test]
    fn linear_field_ratio_is_its_slope() {
        let g = plane(17);
        let a = [0.6, -0.8];
        let u = GridFunction::from_fn(g.clone(), |x| a[0] * x[0] + a[1] * x[1]);
        let v = GridFunction::constant(g, 0.0);
        let hs = translation_lattice(2, 0.1, 3);
        let t = translation_max_map(&u, &v, &euclidean(2), 0.1, &hs, &hs, u.mask()).unwrap();
        let fit = lipschitz_probe(&t, &u, &v, &euclidean(2)).unwrap();
        // a is not parallel to any lattice difference, so the best pair falls short of |a|
        let best = hs
            .iter()
            .flat_map(|p| hs.iter().map(move |q| (p, q)))
            .filter(|(p, q)| p != q)
            .map(|(p, q)| {
                let d = [p[0] - q[0], p[1] - q[1]];
                (a[0] * d[0] + a[1] * d[1]).abs() / norm(&d)
            })
            .fold(0.0, f64::max);
        assert!((fit.h_ratio - best).abs() < 1e-12);
        assert!(fit.h_ratio <= 1.0 + 1e-12);
        assert_eq!(fit.l_ratio, 0.0);
        assert!((fit.grad_u - 1.0).abs() < 1e-12);
    }

    #[test]
    fn axis_aligned_linear_field_reaches_its_slope() {
        let g = plane(17);
        let u = GridFunction::from_fn(g.clone(), |x| x[0]);
        let v = GridFunction::constant(g, 0.0);
        let hs = translation_lattice(2, 0.1, 3);
        let t = translation_max_map(&u, &v, &euclidean(2), 0.1, &hs, &hs, u.mask()).unwrap();
        let fit = lipschitz_probe(&t, &u, &v, &euclidean(2)).unwrap();
        assert!((fit.h_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_values_per_axis_are_insufficient() {
        let u = GridFunction::constant(plane(17), 0.0);
        let hs = translation_lattice(2, 0.1, 2);
        let t = translation_max_map(&u, &u, &euclidean(2), 0.1, &hs, &hs, u.mask()).unwrap();
        assert!(matches!(lipschitz_probe(&t, &u, &u, &euclidean(2)), Err(Error::InsufficientTable(_))));
    }
}
