//! `horlab`: runs scenarios and individual probes, exports fields and tables.
//!
//! Exit status is 0 when every asserted check passes, 1 when one fails and 2
//! on configuration errors.

use std::env;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use horlab_core::envelope::{inf_convolution, jensen_probe, sup_convolution};
use horlab_core::geometry::{perturbed_operator_convergence, preset};
use horlab_core::harness::{
    boundary_function, comparison_check, lipschitz_probe, load_scenario, scenario_run, translation_lattice,
    translation_max_map,
};
use horlab_core::io::{field_to_csv, read_field, table_to_csv, write_field};
use horlab_core::metric::{nsw_probe, shrunken_domain, EuclideanGauge, GraphOracle, HeisenbergGauge};
use horlab_core::operator::{check_structure, inequality_suite};
use horlab_core::solver::{solve_dirichlet, Scheme, SolverParams};
use horlab_core::stats::loglog_slope;
use horlab_core::{BoxDomain, DistanceOracle, Error, Grid, GridFunction, QuasilinearOperator, VectorFieldSystem};

const OUTPUT_ENV: &str = "HORLAB_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "horlab", version, about = "Probes for quasilinear subelliptic operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write its report.
    Run {
        scenario: PathBuf,
        /// Output root (overrides HORLAB_OUTPUT_DIR); the report goes to <out>/<id>/.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve a Dirichlet problem and write the field.
    Solve {
        #[command(flatten)]
        setup: Setup,
        #[arg(long, default_value = "sublaplacian")]
        operator: String,
        #[arg(long)]
        phi: Option<String>,
        #[arg(long, default_value = "zero")]
        boundary: String,
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
        #[arg(long, default_value_t = 200_000)]
        max_iterations: usize,
        #[arg(long)]
        explicit: bool,
        /// Field file to write; a CSV mirror is written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate oracle distances between point lists as CSV.
    Distance {
        #[arg(long, default_value = "heisenberg1")]
        system: String,
        #[command(flatten)]
        oracle: OracleArgs,
        /// Box for the graph lattice, as lo,hi per axis or a single lo,hi for all.
        #[arg(long, default_value = "-1,1")]
        region: String,
        /// Comma-separated coordinates; repeatable.
        #[arg(long = "from", required = true)]
        from: Vec<String>,
        #[arg(long = "to", required = true)]
        to: Vec<String>,
    },
    /// Sup- and inf-convolutions of a field.
    Convolve {
        field: PathBuf,
        #[arg(long, default_value = "heisenberg1")]
        system: String,
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long)]
        epsilon: f64,
        /// Output directory (defaults to HORLAB_OUTPUT_DIR or ./horlab-out).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample the structure conditions of an operator.
    CheckStructure {
        #[arg(long)]
        operator: String,
        #[arg(long)]
        phi: Option<String>,
        /// Number of fields `m`.
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Comparison check between two field files.
    Compare {
        u: PathBuf,
        v: PathBuf,
        /// Field whose nonzero values mark the mask; defaults to the mask stored in `u`.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
    /// Run a single probe.
    Probe {
        #[command(subcommand)]
        probe: Probe,
    },
}

#[derive(Subcommand)]
enum Probe {
    /// Flow-separation exponent at a point.
    Nsw {
        #[arg(long, default_value = "heisenberg1")]
        system: String,
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long, default_value = "-1,1")]
        region: String,
        /// Base point; defaults to the origin.
        #[arg(long)]
        at: Option<String>,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Translation-maximum table and its Lipschitz ratios.
    Lipschitz {
        u: PathBuf,
        v: PathBuf,
        #[arg(long, default_value = "heisenberg1")]
        system: String,
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 5)]
        steps: usize,
    },
    /// Perturbed maximizers near the maximum of a field.
    Jensen {
        field: PathBuf,
        #[arg(long, default_value_t = 0.25)]
        radius: f64,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Composition bound on random configurations.
    Chainrule {
        #[command(flatten)]
        op: OperatorArgs,
    },
    /// Linear-perturbation bound on random configurations.
    Perturbation {
        #[command(flatten)]
        op: OperatorArgs,
    },
    /// Pulled-back operator deviation against the flow scale.
    Pullback {
        #[arg(long, default_value = "heisenberg1")]
        system: String,
        #[arg(long, default_value = "sublaplacian")]
        operator: String,
        #[arg(long)]
        phi: Option<String>,
        #[arg(long)]
        at: Option<String>,
        #[arg(long, default_value = "0.1,0.01,0.001,0.0001")]
        scales: String,
    },
}

#[derive(Args)]
struct Setup {
    #[arg(long, default_value = "heisenberg1")]
    system: String,
    /// Nodes per axis.
    #[arg(long, default_value_t = 17)]
    grid: usize,
    /// Box as lo,hi per axis or a single lo,hi for all axes.
    #[arg(long = "box", default_value = "-1,1")]
    region: String,
}

#[derive(Args)]
struct OracleArgs {
    /// `gauge` or `graph`.
    #[arg(long, default_value = "gauge")]
    oracle: String,
    /// Graph step.
    #[arg(long)]
    step: Option<f64>,
}

#[derive(Args)]
struct OperatorArgs {
    #[arg(long, default_value = "heisenberg1")]
    system: String,
    #[arg(long, default_value = "sublaplacian")]
    operator: String,
    #[arg(long)]
    phi: Option<String>,
    #[arg(long, default_value_t = 50)]
    configs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Failure kinds mapped to exit codes.
enum Failure {
    Config(String),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonConvergence { .. } | Error::Certification { .. } | Error::Unreachable => {
                Failure::Check(e.to_string())
            }
            _ => Failure::Config(e.to_string()),
        }
    }
}

type Outcome = Result<bool, Failure>;

fn config(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

fn numbers(s: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| config(format!("bad number {t:?} in {s:?}"))))
        .collect()
}

fn region(spec: &str, dim: usize) -> Result<BoxDomain, Failure> {
    let v = numbers(spec)?;
    let (lo, hi): (Vec<f64>, Vec<f64>) = if v.len() == 2 {
        (vec![v[0]; dim], vec![v[1]; dim])
    } else if v.len() == 2 * dim {
        (v.iter().step_by(2).copied().collect(), v.iter().skip(1).step_by(2).copied().collect())
    } else {
        return Err(config(format!("box {spec:?} needs 2 or {} numbers", 2 * dim)));
    };
    Ok(BoxDomain::new(lo, hi)?)
}

fn oracle(args: &OracleArgs, sys: &VectorFieldSystem, region: &BoxDomain) -> Result<Box<dyn DistanceOracle>, Failure> {
    match args.oracle.as_str() {
        "gauge" => match sys.name() {
            Some("heisenberg1") => Ok(Box::new(HeisenbergGauge)),
            Some(n) if n.starts_with("euclidean:") => Ok(Box::new(EuclideanGauge { n: sys.dim() })),
            other => Err(config(format!("no gauge oracle for system {other:?}"))),
        },
        "graph" => Ok(Box::new(match args.step {
            Some(s) => GraphOracle::new(sys, region.clone(), s)?,
            None => GraphOracle::with_default_step(sys, region.clone())?,
        })),
        other => Err(config(format!("unknown oracle {other:?}"))),
    }
}

fn output_root(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| env::var_os(OUTPUT_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("horlab-out"))
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable report")
}

fn write_with_csv(path: &Path, u: &GridFunction) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| config(e.to_string()))?;
    }
    write_field(path, u)?;
    std::fs::write(path.with_extension("csv"), field_to_csv(u)).map_err(|e| config(e.to_string()))?;
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Run { scenario, out } => {
            let path = if scenario.exists() { scenario.clone() } else { scenario.with_extension("toml") };
            let cfg = load_scenario(&path)?;
            let start = Instant::now();
            let run = scenario_run(&cfg);
            let dir = output_root(out).join(&run.report.scenario_id);
            run.write_to(&dir)?;
            for c in &run.report.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            for e in &run.report.stage_errors {
                eprintln!("stage {}: {}", e.stage, e.message);
            }
            println!("verdict: {:?}", run.report.verdict);
            eprintln!("report written to {} in {} ms", dir.display(), start.elapsed().as_millis());
            if !run.report.stage_errors.is_empty() {
                return Err(config("scenario stopped at a stage error"));
            }
            Ok(run.report.passed())
        }
        Command::Solve { setup, operator, phi, boundary, tolerance, max_iterations, explicit, out } => {
            let sys = preset(&setup.system)?;
            let grid = Grid::new(region(&setup.region, sys.dim())?, vec![setup.grid; sys.dim()])?;
            let op = QuasilinearOperator::preset(&operator, phi.as_deref())?;
            let f = boundary_function(&boundary, sys.dim())?;
            let scheme = if explicit { Scheme::Explicit } else { Scheme::Accelerated };
            let params = SolverParams { tolerance, max_iterations, scheme, ..SolverParams::default() };
            let s = solve_dirichlet(&op, &sys, &grid, &*f, &params)?;
            let path = out.unwrap_or_else(|| output_root(None).join("solution.field"));
            write_with_csv(&path, &s.field)?;
            let rows: Vec<Vec<f64>> = s.history.iter().map(|(i, r)| vec![*i as f64, *r]).collect();
            let hist = path.with_file_name(format!(
                "{}.history.csv",
                path.file_stem().map(|s| s.to_string_lossy()).unwrap_or_default()
            ));
            std::fs::write(&hist, table_to_csv(&["iteration", "residual"], &rows)).map_err(|e| config(e.to_string()))?;
            println!("iterations {} residual {:e}", s.iterations, s.residual);
            println!("wrote {}", path.display());
            Ok(true)
        }
        Command::Distance { system, oracle: oa, region: r, from, to } => {
            let sys = preset(&system)?;
            let reg = region(&r, sys.dim())?;
            let o = oracle(&oa, &sys, &reg)?;
            let pts = |list: &[String]| -> Result<Vec<Vec<f64>>, Failure> {
                list.iter()
                    .map(|s| {
                        let p = numbers(s)?;
                        if p.len() != sys.dim() {
                            return Err(config(format!("point {s:?} needs {} coordinates", sys.dim())));
                        }
                        Ok(p)
                    })
                    .collect()
            };
            let (xs, ys) = (pts(&from)?, pts(&to)?);
            let n = sys.dim();
            let mut header: Vec<String> = (0..n).map(|k| format!("x{k}")).collect();
            header.extend((0..n).map(|k| format!("y{k}")));
            header.push("d".into());
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let rows: Vec<Vec<f64>> = xs
                .iter()
                .flat_map(|x| {
                    ys.iter().map(|y| {
                        let mut row = x.clone();
                        row.extend(y);
                        row.push(o.distance(x, y));
                        row
                    })
                })
                .collect();
            print!("{}", table_to_csv(&header, &rows));
            Ok(true)
        }
        Command::Convolve { field, system, oracle: oa, epsilon, out } => {
            let u = read_field(&field)?;
            let sys = preset(&system)?;
            let o = oracle(&oa, &sys, u.grid().domain())?;
            let sup = sup_convolution(&u, epsilon, o.as_ref())?;
            let inf = inf_convolution(&u, epsilon, o.as_ref())?;
            let dir = output_root(out);
            write_with_csv(&dir.join("sup.field"), &sup.field)?;
            write_with_csv(&dir.join("inf.field"), &inf.field)?;
            println!("wrote {}", dir.display());
            Ok(true)
        }
        Command::CheckStructure { operator, phi, m, samples, seed } => {
            let op = QuasilinearOperator::preset(&operator, phi.as_deref())?;
            let r = check_structure(&op, m, samples, (1.0, 4.0), (0.05, 4.0), seed)?;
            println!("{}", json(&r));
            Ok(r.passed())
        }
        Command::Compare { u, v, mask, tolerance } => {
            let (u, v) = (read_field(&u)?, read_field(&v)?);
            let mask: Vec<bool> = match mask {
                Some(p) => {
                    let m = read_field(&p)?;
                    if !m.same_grid(&u) {
                        return Err(Error::GridMismatch.into());
                    }
                    m.values().iter().map(|x| *x != 0.0).collect()
                }
                None => u.mask().to_vec(),
            };
            let (_, report) = comparison_check(&u, &v, &mask, tolerance)?;
            for viol in &report.violations {
                let node = viol.node.unwrap_or(0);
                eprintln!("violation at node {node} {:?}: margin {:e}", u.grid().coords(node), viol.margin);
            }
            println!("{}", json(&report));
            Ok(report.passed())
        }
        Command::Probe { probe } => run_probe(probe),
    }
}

fn run_probe(probe: Probe) -> Outcome {
    match probe {
        Probe::Nsw { system, oracle: oa, region: r, at, samples, seed } => {
            let sys = preset(&system)?;
            let reg = region(&r, sys.dim())?;
            let o = oracle(&oa, &sys, &reg)?;
            let x = match at {
                Some(s) => numbers(&s)?,
                None => vec![0.0; sys.dim()],
            };
            let fit = nsw_probe(&sys, o.as_ref(), &x, samples, seed)?;
            println!("{}", json(&fit));
            Ok(fit.passes)
        }
        Probe::Lipschitz { u, v, system, oracle: oa, delta, steps } => {
            let (u, v) = (read_field(&u)?, read_field(&v)?);
            let sys = preset(&system)?;
            let o = oracle(&oa, &sys, u.grid().domain())?;
            let mask = shrunken_domain(o.as_ref(), delta * delta, u.grid())?;
            let hs = translation_lattice(sys.fields(), delta, steps);
            let table = translation_max_map(&u, &v, &sys, delta, &hs, &hs, &mask.mask)?;
            let fit = lipschitz_probe(&table, &u, &v, &sys)?;
            println!("{}", json(&fit));
            Ok(fit.passes)
        }
        Probe::Jensen { field, radius, delta, trials, seed } => {
            let w = read_field(&field)?;
            let top = (0..w.grid().len()).max_by(|a, b| w.value(*a).total_cmp(&w.value(*b))).unwrap_or(0);
            let xhat = w.grid().coords(top);
            let r = jensen_probe(&w, &xhat, radius, delta, trials, seed)?;
            println!("{}", json(&r));
            Ok(r.passed())
        }
        Probe::Chainrule { op } | Probe::Perturbation { op } if op.configs == 0 => {
            Err(config(format!("--configs must be positive, got {}", op.configs)))
        }
        Probe::Chainrule { op: a } => {
            let (sys, op) = (preset(&a.system)?, QuasilinearOperator::preset(&a.operator, a.phi.as_deref())?);
            let s = inequality_suite(&op, &sys, a.configs, a.seed)?;
            let margins: Vec<_> = s.cases.iter().map(|c| &c.chain_rule).collect();
            println!("{}", json(&margins));
            println!("worst margin {:e}", s.worst_chain_margin);
            Ok(s.worst_chain_margin >= 0.0)
        }
        Probe::Perturbation { op: a } => {
            let (sys, op) = (preset(&a.system)?, QuasilinearOperator::preset(&a.operator, a.phi.as_deref())?);
            let s = inequality_suite(&op, &sys, a.configs, a.seed)?;
            let margins: Vec<_> = s.cases.iter().map(|c| &c.perturbation).collect();
            println!("{}", json(&margins));
            println!("worst margin {:e}", s.worst_perturbation_margin);
            Ok(s.worst_perturbation_margin >= 0.0)
        }
        Probe::Pullback { system, operator, phi, at, scales } => {
            let sys = preset(&system)?;
            let op = QuasilinearOperator::preset(&operator, phi.as_deref())?;
            let x = match at {
                Some(s) => numbers(&s)?,
                None => vec![0.1; sys.dim()],
            };
            let scales = numbers(&scales)?;
            let f = horlab_core::functions::Quadratic::half_norm_squared(sys.dim());
            let m = sys.fields();
            let dir = vec![1.0 / (m as f64).sqrt(); m];
            let rows = perturbed_operator_convergence(&sys, &op, &x, &f, &dir, &scales, 0.1)?;
            let table: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.h, r.deviation]).collect();
            print!("{}", table_to_csv(&["h", "deviation"], &table));
            let decreasing = rows.windows(2).all(|w| w[1].deviation < w[0].deviation);
            let positive: Vec<_> = rows.iter().filter(|r| r.h > 0.0 && r.deviation > 0.0).collect();
            let slope = loglog_slope(
                &positive.iter().map(|r| r.h).collect::<Vec<_>>(),
                &positive.iter().map(|r| r.deviation).collect::<Vec<_>>(),
            );
            println!("slope {slope:?}");
            Ok(decreasing && slope.is_some_and(|s| s >= 1.0))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Check(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
