//! Scenario files and the end-to-end pipeline.
//!
//! A scenario is a TOML document with top-level `id` and `seed` and the
//! sections `system`, `domain`, `oracle`, `operator`, `solver`, `envelope`
//! and `checks`. The schema is documented in `scenarios/README.md`.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use super::{
    comparison_check, lipschitz_probe, strong_max_probe, translation_lattice, translation_max_map, CheckOutcome,
    ScenarioReport, StageError, Verdict,
};
use crate::envelope::{inf_convolution, sup_convolution};
use crate::error::{Error, Result};
use crate::functions::{KoranyiPower, SmoothFunction};
use crate::geometry::polynomial::{Monomial, Polynomial};
use crate::geometry::{preset, VectorFieldSystem};
use crate::grid::{BoxDomain, Grid, GridFunction};
use crate::io::{field_to_bytes, table_to_csv};
use crate::metric::{nsw_probe, shrunken_domain, DistanceOracle, EuclideanGauge, GraphOracle, HeisenbergGauge};
use crate::operator::{check_structure, Profile, QuasilinearOperator};
use crate::solver::{make_sub_super_pair, Scheme, SolverParams};

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub id: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub system: Option<SystemConfig>,
    pub domain: Option<DomainConfig>,
    pub oracle: Option<OracleConfig>,
    pub operator: Option<OperatorConfig>,
    pub solver: Option<SolverConfig>,
    pub envelope: Option<EnvelopeConfig>,
    pub checks: Option<ChecksConfig>,
}

/// Either a preset name or polynomial tables, `fields[j][k]` holding the terms
/// of the `k`-th component of the `j`-th field.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub preset: Option<String>,
    pub dim: Option<usize>,
    pub fields: Option<Vec<Vec<Vec<Monomial>>>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    /// `gauge` or `graph`.
    pub kind: String,
    pub step: Option<f64>,
}

/// A preset name, or `m` with row-major polynomial entries `a` of `A` and an
/// optional drift `h` whose value at 0 must be declared as `h_at_zero`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    pub preset: Option<String>,
    pub phi: Option<String>,
    pub m: Option<usize>,
    pub a: Option<Vec<Vec<Monomial>>>,
    pub h: Option<Vec<Monomial>>,
    pub h_at_zero: Option<f64>,
}

fn default_tolerance() -> f64 {
    1e-8
}
fn default_iterations() -> usize {
    200_000
}
fn default_cfl() -> f64 {
    1.0
}
fn default_scheme() -> String {
    "accelerated".into()
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Named boundary data, see [`boundary_function`].
    pub boundary: String,
    /// The subsolution takes data `boundary − gap`.
    #[serde(default)]
    pub gap: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_scheme")]
    pub scheme: String,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeConfig {
    #[serde(default)]
    pub epsilons: Vec<f64>,
}

fn default_comparison_tolerance() -> f64 {
    1e-6
}
fn default_structure_samples() -> usize {
    1000
}
fn default_translation_steps() -> usize {
    5
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksConfig {
    #[serde(default = "default_comparison_tolerance")]
    pub comparison_tolerance: f64,
    /// 0 skips the structure check.
    #[serde(default = "default_structure_samples")]
    pub structure_samples: usize,
    /// 0 skips the NSW probe.
    #[serde(default)]
    pub nsw_samples: usize,
    /// Enables the translation-maximum probe.
    pub translation_delta: Option<f64>,
    #[serde(default = "default_translation_steps")]
    pub translation_steps: usize,
    #[serde(default = "default_true")]
    pub strong_max: bool,
}

impl Default for ChecksConfig {
    fn default() -> Self {
        Self {
            comparison_tolerance: default_comparison_tolerance(),
            structure_samples: default_structure_samples(),
            nsw_samples: 0,
            translation_delta: None,
            translation_steps: default_translation_steps(),
            strong_max: true,
        }
    }
}

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

/// Reads a scenario; the id defaults to the file stem.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let mut cfg = parse_scenario(&fs::read_to_string(path)?)?;
    if cfg.id.is_none() {
        cfg.id = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    }
    Ok(cfg)
}

pub type BoundaryFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

fn parse_numbers(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad number {t:?}"))))
        .collect()
}

/// Boundary data by name: `zero`, `constant:<c>`, `saddle` (`x₀² − x₁²`),
/// `saddle:<c>` (`c(x₀² − x₁²)`), `linear:<a₀>,<a₁>,…`, `quadratic`
/// (`|x|²/2`) and `koranyi:<p>` (`N^p` on ℝ³).
pub fn boundary_function(name: &str, dim: usize) -> Result<BoundaryFn> {
    let name = name.trim();
    let (head, arg) = match name.split_once(':') {
        Some((h, a)) => (h, Some(a)),
        None => (name, None),
    };
    let need = |k: usize| {
        if dim < k {
            Err(Error::Config(format!("boundary {name:?} needs dimension at least {k}")))
        } else {
            Ok(())
        }
    };
    let one = |a: Option<&str>| -> Result<f64> {
        let v = parse_numbers(a.ok_or_else(|| Error::Config(format!("boundary {name:?} needs an argument")))?)?;
        if v.len() != 1 {
            return Err(Error::Config(format!("boundary {name:?} takes one number")));
        }
        Ok(v[0])
    };
    let f: BoundaryFn = match head {
        "zero" => Arc::new(|_| 0.0),
        "constant" => {
            let c = one(arg)?;
            Arc::new(move |_| c)
        }
        "saddle" => {
            need(2)?;
            let c = if arg.is_some() { one(arg)? } else { 1.0 };
            Arc::new(move |x| c * (x[0] * x[0] - x[1] * x[1]))
        }
        "linear" => {
            let a = parse_numbers(arg.unwrap_or(""))?;
            if a.len() != dim {
                return Err(Error::Dimension { expected: dim, got: a.len() });
            }
            Arc::new(move |x| a.iter().zip(x).map(|(p, q)| p * q).sum())
        }
        "quadratic" => Arc::new(|x| 0.5 * x.iter().map(|a| a * a).sum::<f64>()),
        "koranyi" => {
            if dim != 3 {
                return Err(Error::Config("koranyi boundary data lives on R^3".into()));
            }
            let k = KoranyiPower { p: one(arg)? };
            Arc::new(move |x| k.value(x))
        }
        _ => return Err(Error::Config(format!("unknown boundary data {name:?}"))),
    };
    Ok(f)
}

/// Report plus side files, ready to be written out.
pub struct ScenarioRun {
    pub report: ScenarioReport,
    /// `(file name, CSV text)`.
    pub tables: Vec<(String, String)>,
    pub fields: Vec<(String, GridFunction)>,
}

impl ScenarioRun {
    /// Writes `report.json`, the CSV tables and the `.field` files into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(&self.report).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(dir.join("report.json"), json + "\n")?;
        for (name, text) in &self.tables {
            fs::write(dir.join(name), text)?;
        }
        for (name, field) in &self.fields {
            fs::write(dir.join(name), field_to_bytes(field))?;
        }
        Ok(())
    }
}

type Staged<T> = std::result::Result<T, (String, Error)>;

fn at<T>(stage: &str, r: Result<T>) -> Staged<T> {
    r.map_err(|e| (stage.to_string(), e))
}

fn missing(stage: &str) -> (String, Error) {
    (stage.to_string(), Error::Config(format!("missing [{stage}] section")))
}

fn polynomial(dim: usize, terms: &[Monomial]) -> Result<Polynomial> {
    Polynomial::from_terms(dim, terms.to_vec())
}

fn build_system(cfg: &SystemConfig, domain: &BoxDomain) -> Result<VectorFieldSystem> {
    match (&cfg.preset, &cfg.fields) {
        (Some(name), None) => preset(name),
        (None, Some(fields)) => {
            let n = cfg.dim.ok_or_else(|| Error::Config("polynomial system needs dim".into()))?;
            let tables = fields
                .iter()
                .map(|f| {
                    if f.len() != n {
                        return Err(Error::Dimension { expected: n, got: f.len() });
                    }
                    f.iter().map(|c| polynomial(n, c)).collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(VectorFieldSystem::from_polynomials(tables, domain.clone())?.with_name("custom"))
        }
        _ => Err(Error::Config("system needs exactly one of preset or fields".into())),
    }
}

fn build_oracle(cfg: &OracleConfig, sys: &VectorFieldSystem, grid: &Grid) -> Result<Box<dyn DistanceOracle>> {
    match cfg.kind.as_str() {
        "gauge" => match sys.name() {
            Some("heisenberg1") => Ok(Box::new(HeisenbergGauge)),
            Some(name) if name.starts_with("euclidean:") => Ok(Box::new(EuclideanGauge { n: sys.dim() })),
            other => Err(Error::Config(format!("no gauge oracle for system {other:?}"))),
        },
        "graph" => {
            let region = grid.domain().clone();
            Ok(Box::new(match cfg.step {
                Some(step) => GraphOracle::new(sys, region, step)?,
                None => GraphOracle::with_default_step(sys, region)?,
            }))
        }
        other => Err(Error::Config(format!("unknown oracle kind {other:?}"))),
    }
}

fn build_operator(cfg: &OperatorConfig) -> Result<QuasilinearOperator> {
    match (&cfg.preset, &cfg.a) {
        (Some(name), None) => QuasilinearOperator::preset(name, cfg.phi.as_deref()),
        (None, Some(a)) => {
            let m = cfg.m.ok_or_else(|| Error::Config("custom operator needs m".into()))?;
            let a = a.iter().map(|t| polynomial(m, t)).collect::<Result<Vec<_>>>()?;
            let h = cfg.h.as_ref().map(|t| polynomial(m, t)).transpose()?;
            let profile = Profile::parse(cfg.phi.as_deref().unwrap_or("power:1"))?;
            QuasilinearOperator::custom("custom", m, a, h, cfg.h_at_zero.unwrap_or(0.0), profile)
        }
        _ => Err(Error::Config("operator needs exactly one of preset or a".into())),
    }
}

fn solver_params(cfg: &SolverConfig) -> Result<SolverParams> {
    let scheme = match cfg.scheme.as_str() {
        "accelerated" => Scheme::Accelerated,
        "explicit" => Scheme::Explicit,
        other => return Err(Error::Config(format!("unknown scheme {other:?}"))),
    };
    Ok(SolverParams { cfl: cfg.cfl, tolerance: cfg.tolerance, max_iterations: cfg.max_iterations, scheme })
}

fn check(report: &mut ScenarioReport, name: impl Into<String>, passed: bool, detail: String) {
    report.checks.push(CheckOutcome { name: name.into(), passed, detail });
}

/// Runs the pipeline: system, domain, oracle, operator checks, sub/super pair,
/// raw and envelope-regularized comparisons, then the optional NSW,
/// translation-maximum and strong-maximum probes. Stage failures are recorded
/// in the report and stop the stages that depend on them.
pub fn scenario_run(cfg: &ScenarioConfig) -> ScenarioRun {
    let id = cfg.id.clone().unwrap_or_else(|| "scenario".into());
    let mut run = ScenarioRun { report: ScenarioReport::new(id), tables: Vec::new(), fields: Vec::new() };
    if let Err((stage, e)) = pipeline(cfg, &mut run) {
        run.report.stage_errors.push(StageError { stage, message: e.to_string() });
    }
    let ok = run.report.stage_errors.is_empty() && run.report.checks.iter().all(|c| c.passed);
    run.report.verdict = Verdict::from_bool(ok);
    run
}

fn pipeline(cfg: &ScenarioConfig, run: &mut ScenarioRun) -> Staged<()> {
    let dcfg = cfg.domain.as_ref().ok_or_else(|| missing("domain"))?;
    let domain = at("domain", BoxDomain::new(dcfg.lower.clone(), dcfg.upper.clone()))?;
    let grid = at("domain", Grid::new(domain.clone(), dcfg.counts.clone()))?;
    let sys = at("system", build_system(cfg.system.as_ref().ok_or_else(|| missing("system"))?, &domain))?;
    if sys.dim() != grid.dim() {
        return Err(("system".into(), Error::Dimension { expected: grid.dim(), got: sys.dim() }));
    }
    let oracle = at("oracle", build_oracle(cfg.oracle.as_ref().ok_or_else(|| missing("oracle"))?, &sys, &grid))?;
    let op = at("operator", build_operator(cfg.operator.as_ref().ok_or_else(|| missing("operator"))?))?;
    at("operator", op.check_dim(sys.fields()))?;
    let checks = cfg.checks.clone().unwrap_or_default();
    let report = &mut run.report;

    if checks.structure_samples > 0 {
        let s = at(
            "operator",
            check_structure(&op, sys.fields(), checks.structure_samples, (1.0, 4.0), (0.05, 4.0), cfg.seed),
        )?;
        let n = s.violations.len();
        for v in &s.violations {
            report.violations.push(super::Violation { check: v.check.clone(), node: None, margin: v.margin });
        }
        check(report, "structure", n == 0, format!("{n} violation(s) over {} samples", s.samples));
    }

    let scfg = cfg.solver.as_ref().ok_or_else(|| missing("solver"))?;
    let params = at("solver", solver_params(scfg))?;
    let f = at("solver", boundary_function(&scfg.boundary, grid.dim()))?;
    let (sub, sup) = at("solve", make_sub_super_pair(&op, &sys, &grid, &*f, scfg.gap, &params))?;
    let (u, v) = (&sub.field, &sup.field);
    report.fitted_constants.insert("sub_iterations".into(), sub.iterations as f64);
    report.fitted_constants.insert("super_iterations".into(), sup.iterations as f64);
    report.fitted_constants.insert("sub_residual".into(), sub.residual);
    report.fitted_constants.insert("super_residual".into(), sup.residual);
    for (name, s) in [("history_sub.csv", &sub), ("history_super.csv", &sup)] {
        let rows: Vec<Vec<f64>> = s.history.iter().map(|(i, r)| vec![*i as f64, *r]).collect();
        run.tables.push((name.into(), table_to_csv(&["iteration", "residual"], &rows)));
    }
    run.fields.push(("sub.field".into(), u.clone()));
    run.fields.push(("super.field".into(), v.clone()));

    let tol = checks.comparison_tolerance;
    let order = u.values().iter().zip(v.values()).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
    check(report, "nodewise-order", order <= tol, format!("max(u - v) = {order:e}"));
    let (verdict, cmp) = at("comparison", comparison_check(u, v, &grid.interior_mask(), tol))?;
    report.max_interior_gap = cmp.max_interior_gap;
    report.max_boundary_gap = cmp.max_boundary_gap;
    report.argmax_nodes = cmp.argmax_nodes;
    report.violations.extend(cmp.violations);
    check(
        report,
        "comparison",
        verdict == Verdict::Pass,
        format!("interior gap {:?}, boundary gap {:e}", report.max_interior_gap, report.max_boundary_gap),
    );

    let epsilons = cfg.envelope.as_ref().map(|e| e.epsilons.clone()).unwrap_or_default();
    if !epsilons.is_empty() {
        if epsilons.windows(2).any(|w| w[1] >= w[0]) || epsilons.iter().any(|e| !(*e > 0.0)) {
            return Err(("envelope".into(), Error::Config("epsilons must be positive and strictly decreasing".into())));
        }
        let r = 2.0 * u.sup_norm().max(v.sup_norm());
        report.fitted_constants.insert("envelope_r".into(), r);
        let mut rows = Vec::new();
        for &eps in &epsilons {
            let up = at("envelope", sup_convolution(u, eps, oracle.as_ref()))?;
            let vd = at("envelope", inf_convolution(v, eps, oracle.as_ref()))?;
            let mask = at("envelope", shrunken_domain(oracle.as_ref(), (1.0 + 4.0 * r) * eps, &grid))?;
            let name = format!("envelope-comparison eps={eps}");
            if mask.empty {
                check(report, name, false, "regularized mask is empty".into());
                rows.push(vec![eps, 0.0, f64::NAN, f64::NAN]);
                continue;
            }
            let (verdict, cmp) = at("envelope", comparison_check(&up.field, &vd.field, &mask.mask, tol))?;
            let gap = cmp.max_interior_gap.unwrap_or(f64::NAN);
            rows.push(vec![eps, mask.count() as f64, gap, cmp.max_boundary_gap]);
            check(
                report,
                name,
                verdict == Verdict::Pass,
                format!("{} mask nodes, interior gap {gap:e}, boundary gap {:e}", mask.count(), cmp.max_boundary_gap),
            );
            report.violations.extend(cmp.violations);
        }
        let header = ["epsilon", "mask_nodes", "max_interior_gap", "max_boundary_gap"];
        run.tables.push(("envelope.csv".into(), table_to_csv(&header, &rows)));
    }

    if checks.nsw_samples > 0 {
        let centre = grid.domain().center();
        let fit = at("nsw", nsw_probe(&sys, oracle.as_ref(), &centre, checks.nsw_samples, cfg.seed))?;
        report.fitted_constants.insert("nsw_slope".into(), fit.slope);
        report.fitted_constants.insert("nsw_c1".into(), fit.c1);
        report.fitted_constants.insert("nsw_c2".into(), fit.c2);
        check(report, "nsw", fit.passes, format!("slope {:.4}, step {}", fit.slope, fit.step));
    }

    if let Some(delta) = checks.translation_delta {
        let mask = at("translation", shrunken_domain(oracle.as_ref(), delta * delta, &grid))?;
        let hs = translation_lattice(sys.fields(), delta, checks.translation_steps);
        let table = at("translation", translation_max_map(u, v, &sys, delta, &hs, &hs, &mask.mask))?;
        let fit = at("translation", lipschitz_probe(&table, u, v, &sys))?;
        report.fitted_constants.insert("lipschitz_h_ratio".into(), fit.h_ratio);
        report.fitted_constants.insert("lipschitz_l_ratio".into(), fit.l_ratio);
        report.fitted_constants.insert("grad_u".into(), fit.grad_u);
        report.fitted_constants.insert("grad_v".into(), fit.grad_v);
        check(
            report,
            "lipschitz",
            fit.passes,
            format!(
                "h ratio {:.4e} vs grad u {:.4e}, l ratio {:.4e} vs grad v {:.4e}",
                fit.h_ratio, fit.grad_u, fit.l_ratio, fit.grad_v
            ),
        );
        let m = sys.fields();
        let mut header: Vec<String> = (0..m).map(|k| format!("h{k}")).collect();
        header.extend((0..m).map(|k| format!("l{k}")));
        header.push("value".into());
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut rows = Vec::new();
        for (a, h) in hs.iter().enumerate() {
            for (b, l) in hs.iter().enumerate() {
                let mut row = h.clone();
                row.extend(l);
                row.push(table.get(a, b).map_or(f64::NAN, |c| c.value));
                rows.push(row);
            }
        }
        run.tables.push(("translation.csv".into(), table_to_csv(&header, &rows)));
    }

    if checks.strong_max {
        let r = at("strong-max", strong_max_probe(&op, &sys, u, params.tolerance))?;
        check(report, "strong-max", r.passed(), format!("{:?}", r.verdict));
    }
    Ok(())
}
