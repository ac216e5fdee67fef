//! Sup/inf-convolutions against a distance oracle, semiconvexity, convergence
//! tables and the Jensen perturbation probe.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::metric::{shrunken_domain, DistanceOracle};

/// Envelope values with the node attaining each one.
#[derive(Clone, Debug, PartialEq)]
pub struct Envelope {
    pub field: GridFunction,
    pub argmax: Vec<usize>,
}

/// Tiles of `TILE^n` nodes with bounding boxes and block maxima.
const TILE: usize = 4;

struct Tiles {
    counts: Vec<usize>,
    lo: Vec<Vec<f64>>,
    hi: Vec<Vec<f64>>,
    max: Vec<f64>,
    nodes: Vec<Vec<usize>>,
}

impl Tiles {
    fn new(grid: &Grid, values: &[f64]) -> Self {
        let n = grid.dim();
        let counts: Vec<usize> = grid.counts().iter().map(|c| c.div_ceil(TILE)).collect();
        let total: usize = counts.iter().product();
        let mut lo = vec![vec![f64::INFINITY; n]; total];
        let mut hi = vec![vec![f64::NEG_INFINITY; n]; total];
        let mut max = vec![f64::NEG_INFINITY; total];
        let mut nodes = vec![Vec::new(); total];
        let mut idx = vec![0usize; n];
        let mut x = vec![0.0; n];
        for node in 0..grid.len() {
            grid.multi_index_into(node, &mut idx);
            grid.coords_into(node, &mut x);
            let t = Self::tile_of(&counts, &idx);
            for k in 0..n {
                lo[t][k] = lo[t][k].min(x[k]);
                hi[t][k] = hi[t][k].max(x[k]);
            }
            max[t] = max[t].max(values[node]);
            nodes[t].push(node);
        }
        Self { counts, lo, hi, max, nodes }
    }

    /// Tile holding the node with multi-index `idx`.
    fn tile_of(counts: &[usize], idx: &[usize]) -> usize {
        let mut t = 0;
        for k in 0..counts.len() {
            t = t * counts[k] + idx[k] / TILE;
        }
        t
    }

    /// Tile with tile-coordinates `tidx`.
    fn tile_at(counts: &[usize], tidx: &[usize]) -> usize {
        let mut t = 0;
        for k in 0..counts.len() {
            t = t * counts[k] + tidx[k];
        }
        t
    }
}

/// Odometer step over the box of tile indices; `false` once exhausted.
fn advance(idx: &mut [usize], ranges: &[(usize, usize)]) -> bool {
    for k in (0..idx.len()).rev() {
        if idx[k] < ranges[k].1 {
            idx[k] += 1;
            return true;
        }
        idx[k] = ranges[k].0;
    }
    false
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive and finite, got {epsilon}")));
    }
    Ok(())
}

/// `u^ε(x) = max over nodes y of u(y) − d(x,y)²/(2ε)`.
///
/// A maximizer satisfies `d² ≤ 2ε(max u − u(x))`, which is inside the window
/// `d² ≤ 4R₀ε` with `R₀ = 2‖u‖∞`; the search covers exactly that smaller ball.
/// For oracles with box bounds the search is a branch and bound over tiles,
/// otherwise each row of distances is computed in full. Ties go to the
/// smallest node index.
pub fn sup_convolution(u: &GridFunction, epsilon: f64, oracle: &dyn DistanceOracle) -> Result<Envelope> {
    check_epsilon(epsilon)?;
    let grid = u.grid();
    if oracle.dim() != grid.dim() {
        return Err(Error::Dimension { expected: grid.dim(), got: oracle.dim() });
    }
    let vals = u.values();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("envelope input has non-finite values".into()));
    }
    let umax = u.max();
    let inv = 1.0 / (2.0 * epsilon);
    let n = grid.dim();
    let mut out = vec![0.0; grid.len()];
    let mut arg = vec![0usize; grid.len()];
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    let probe = grid.coords(0);
    if oracle.ball_box(&probe, 0.0).is_some() {
        let tiles = Tiles::new(grid, vals);
        let mut cand: Vec<(f64, usize)> = Vec::new();
        let mut tidx = vec![0usize; n];
        let mut own = vec![0usize; n];
        for node in 0..grid.len() {
            grid.coords_into(node, &mut x);
            let ux = vals[node];
            let r = (2.0 * epsilon * (umax - ux)).max(0.0).sqrt();
            let (blo, bhi) = oracle.ball_box(&x, r).expect("oracle advertised ball boxes");
            grid.multi_index_into(node, &mut own);
            let ranges: Vec<(usize, usize)> = (0..n)
                .map(|k| {
                    let (a, b) = grid.index_range(k, blo[k], bhi[k]).unwrap_or((own[k], own[k]));
                    (a / TILE, b / TILE)
                })
                .collect();
            cand.clear();
            for k in 0..n {
                tidx[k] = ranges[k].0;
            }
            loop {
                let t = Tiles::tile_at(&tiles.counts, &tidx);
                let lb = oracle.box_lower_bound(&x, &tiles.lo[t], &tiles.hi[t]);
                let bound = tiles.max[t] - lb * lb * inv;
                if bound >= ux {
                    cand.push((bound, t));
                }
                if !advance(&mut tidx, &ranges) {
                    break;
                }
            }
            cand.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut best = f64::NEG_INFINITY;
            let mut best_y = node;
            for &(bound, t) in &cand {
                if bound < best {
                    break;
                }
                for &w in &tiles.nodes[t] {
                    if vals[w] < best {
                        continue;
                    }
                    grid.coords_into(w, &mut y);
                    let v = vals[w] - oracle.distance_squared(&x, &y) * inv;
                    if v > best || (v == best && w < best_y) {
                        best = v;
                        best_y = w;
                    }
                }
            }
            out[node] = best;
            arg[node] = best_y;
        }
    } else {
        for node in 0..grid.len() {
            grid.coords_into(node, &mut x);
            let row = oracle.distances_to_grid(&x, grid);
            let mut best = f64::NEG_INFINITY;
            let mut best_y = node;
            for (w, d) in row.iter().enumerate() {
                if !d.is_finite() {
                    continue;
                }
                let v = vals[w] - d * d * inv;
                if v > best {
                    best = v;
                    best_y = w;
                }
            }
            out[node] = best;
            arg[node] = best_y;
        }
    }
    let field = GridFunction::with_mask(grid.clone(), out, u.mask().to_vec())?;
    Ok(Envelope { field, argmax: arg })
}

/// `v_ε(x) = min over nodes y of v(y) + d(x,y)²/(2ε)`, computed as `−(−v)^ε`.
pub fn inf_convolution(v: &GridFunction, epsilon: f64, oracle: &dyn DistanceOracle) -> Result<Envelope> {
    let env = sup_convolution(&v.map(|a| -a), epsilon, oracle)?;
    Ok(Envelope { field: env.field.map(|a| -a), argmax: env.argmax })
}

/// Integer directions `δ ∈ {−1,0,1}ⁿ` with first nonzero entry positive.
fn half_directions(n: usize) -> Vec<Vec<isize>> {
    let mut out = Vec::new();
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        let mut c = code;
        let d: Vec<isize> = (0..n)
            .map(|_| {
                let v = (c % 3) as isize - 1;
                c /= 3;
                v
            })
            .collect();
        if let Some(first) = d.iter().find(|v| **v != 0) {
            if *first > 0 {
                out.push(d);
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SemiconvexityReport {
    pub is_semiconvex: bool,
    /// Least `Λ ≥ 0` making every second difference of `w + Λ|x|²/2` at least `−1e-9`.
    pub lambda: f64,
    pub cap: f64,
}

/// Axis and diagonal second differences of `w + Λ|x|²/2`.
pub fn semiconvexity_check(w: &GridFunction, lambda_cap: f64) -> Result<SemiconvexityReport> {
    let grid = w.grid();
    if grid.counts().iter().any(|&c| c < 3) {
        return Err(Error::Config("semiconvexity check needs at least 3 nodes per axis".into()));
    }
    let h = grid.spacing();
    let v = w.values();
    let mut lambda: f64 = 0.0;
    for d in half_directions(grid.dim()) {
        let len2: f64 = d.iter().zip(h).map(|(a, s)| (*a as f64 * s).powi(2)).sum();
        let back: Vec<isize> = d.iter().map(|a| -a).collect();
        for node in 0..grid.len() {
            let (Some(p), Some(q)) = (grid.offset(node, &d), grid.offset(node, &back)) else { continue };
            let delta = v[p] - 2.0 * v[node] + v[q];
            lambda = lambda.max((-delta - 1e-9) / len2);
        }
    }
    Ok(SemiconvexityReport { is_semiconvex: lambda <= lambda_cap, lambda, cap: lambda_cap })
}

/// `max over x, δ of max(0, Δ_δ d²(·, y*(x)))/|δ|²`, the discrete Hessian bound
/// of `d²` realized along the envelope's maximizers. With it,
/// `Λ(u^ε) ≤ C_d/(2ε)`.
pub fn realized_cd(env: &Envelope, oracle: &dyn DistanceOracle) -> f64 {
    let grid = env.field.grid();
    let n = grid.dim();
    let h = grid.spacing();
    let mut x = vec![0.0; n];
    let mut xp = vec![0.0; n];
    let mut xm = vec![0.0; n];
    let mut ys = vec![0.0; n];
    let mut cd: f64 = 0.0;
    for d in half_directions(n) {
        let len2: f64 = d.iter().zip(h).map(|(a, s)| (*a as f64 * s).powi(2)).sum();
        let back: Vec<isize> = d.iter().map(|a| -a).collect();
        for node in 0..grid.len() {
            let (Some(p), Some(q)) = (grid.offset(node, &d), grid.offset(node, &back)) else { continue };
            grid.coords_into(node, &mut x);
            grid.coords_into(p, &mut xp);
            grid.coords_into(q, &mut xm);
            grid.coords_into(env.argmax[node], &mut ys);
            let delta = oracle.distance_squared(&xp, &ys) - 2.0 * oracle.distance_squared(&x, &ys)
                + oracle.distance_squared(&xm, &ys);
            cd = cd.max(delta / len2);
        }
    }
    cd
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    /// `max (u^ε − u)` over `Ω_{(1+4R₀)ε}`; `None` when that set is empty.
    pub deviation: Option<f64>,
    pub mask_nodes: usize,
}

/// Convergence table of `u^ε` to `u` on the shrinking masks, `R₀ = 2‖u‖∞`.
pub fn convergence_report(
    u: &GridFunction,
    oracle: &dyn DistanceOracle,
    epsilons: &[f64],
) -> Result<Vec<ConvergenceRow>> {
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("epsilon sequence must be strictly decreasing".into()));
    }
    let r0 = 2.0 * u.sup_norm();
    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let env = sup_convolution(u, eps, oracle)?;
        let mask = shrunken_domain(oracle, (1.0 + 4.0 * r0) * eps, u.grid())?;
        let deviation = if mask.empty {
            None
        } else {
            Some(
                (0..u.grid().len())
                    .filter(|&v| mask.mask[v])
                    .map(|v| env.field.value(v) - u.value(v))
                    .fold(f64::NEG_INFINITY, f64::max),
            )
        };
        rows.push(ConvergenceRow { epsilon: eps, deviation, mask_nodes: mask.count() });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JensenReport {
    pub trials: usize,
    pub successes: usize,
    pub fraction: f64,
    /// Maximizer of `w + ⟨p, x⟩` per trial.
    pub maximizers: Vec<usize>,
}

impl JensenReport {
    pub fn passed(&self) -> bool {
        self.successes > 0
    }
}

/// Whether second differences at steps `h` and `2h` agree along every axis.
fn twice_differentiable_at(w: &GridFunction, node: usize) -> bool {
    let grid = w.grid();
    let n = grid.dim();
    let h = grid.spacing();
    let v = w.values();
    for k in 0..n {
        let mut d = vec![0isize; n];
        d[k] = 1;
        let Some(p1) = grid.offset(node, &d) else { return false };
        d[k] = 2;
        let Some(p2) = grid.offset(node, &d) else { return false };
        d[k] = -1;
        let Some(m1) = grid.offset(node, &d) else { return false };
        d[k] = -2;
        let Some(m2) = grid.offset(node, &d) else { return false };
        let q1 = (v[p1] - 2.0 * v[node] + v[m1]) / (h[k] * h[k]);
        let q2 = (v[p2] - 2.0 * v[node] + v[m2]) / (4.0 * h[k] * h[k]);
        if (q1 - q2).abs() > 1e-8 + 0.25 * q1.abs().max(q2.abs()) {
            return false;
        }
    }
    true
}

/// Perturbs `w` by `⟨p, x⟩` with `|p| < delta`, maximizes over the Euclidean
/// ball `B_r(xhat)` and counts maximizers where `w` looks twice differentiable.
/// `delta = 0` runs the single trial `p = 0`.
pub fn jensen_probe(
    w: &GridFunction,
    xhat: &[f64],
    r: f64,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<JensenReport> {
    let grid = w.grid();
    let n = grid.dim();
    if xhat.len() != n {
        return Err(Error::Dimension { expected: n, got: xhat.len() });
    }
    let centre = grid.nearest(xhat);
    let tol = 1e-9 * (1.0 + w.sup_norm());
    if w.value(centre) < w.max() - tol {
        return Err(Error::Degenerate("xhat is not a maximizer of w".into()));
    }
    let ball: Vec<usize> = (0..grid.len())
        .filter(|&v| {
            let x = grid.coords(v);
            x.iter().zip(xhat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= r * r
        })
        .collect();
    let trials = if delta == 0.0 { 1 } else { trials.max(1) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut maximizers = Vec::with_capacity(trials);
    let mut successes = 0;
    let mut x = vec![0.0; n];
    for _ in 0..trials {
        let p: Vec<f64> = if delta == 0.0 {
            vec![0.0; n]
        } else {
            loop {
                let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-delta..delta)).collect();
                if p.iter().map(|a| a * a).sum::<f64>() < delta * delta {
                    break p;
                }
            }
        };
        let mut best = f64::NEG_INFINITY;
        let mut arg = centre;
        for &v in &ball {
            grid.coords_into(v, &mut x);
            let val = w.value(v) + p.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
            if val > best {
                best = val;
                arg = v;
            }
        }
        if twice_differentiable_at(w, arg) {
            successes += 1;
        }
        maximizers.push(arg);
    }
    Ok(JensenReport { trials, successes, fraction: successes as f64 / trials as f64, maximizers })
}
