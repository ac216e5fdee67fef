use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::DistanceOracle;
use crate::error::{Error, Result};
use crate::geometry::{exp_flow_default, hormander_rank, VectorFieldSystem};
use crate::grid::Grid;
use crate::stats::slope;

/// Fit of `log d(exp_x(h·𝔛), exp_x(l·𝔛))` against `log |h − l|`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NswFit {
    pub slope: f64,
    /// Largest `C₁` with `C₁|h−l| ≤ d` on every sample.
    pub c1: f64,
    /// Smallest `C₂` with `d ≤ C₂|h−l|^{1/r}` on every sample.
    pub c2: f64,
    pub step: usize,
    pub samples: usize,
    /// Slope in `[1/r − 0.1, 1.1]` and both constants positive and finite.
    pub passes: bool,
}

fn step_of(sys: &VectorFieldSystem, x: &[f64]) -> Result<usize> {
    if let Some(r) = sys.declared_step() {
        return Ok(r);
    }
    hormander_rank(sys, x, 6)
        .step
        .ok_or_else(|| Error::Degenerate("Hörmander condition fails at the base point".into()))
}

/// NSW fit over explicit `(h, l)` pairs.
pub fn nsw_probe_pairs(
    sys: &VectorFieldSystem,
    oracle: &dyn DistanceOracle,
    x: &[f64],
    pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<NswFit> {
    let r = step_of(sys, x)?;
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    let mut c1 = f64::INFINITY;
    let mut c2: f64 = 0.0;
    for (h, l) in pairs {
        let sep = h.iter().zip(l).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if sep == 0.0 {
            continue;
        }
        let p = exp_flow_default(sys, x, h)?;
        let q = exp_flow_default(sys, x, l)?;
        let d = oracle.distance(&p, &q);
        if !d.is_finite() || d <= 0.0 {
            return Err(Error::Degenerate(format!("oracle returned {d} for separated flows")));
        }
        c1 = c1.min(d / sep);
        c2 = c2.max(d / sep.powf(1.0 / r as f64));
        lx.push(sep.ln());
        ly.push(d.ln());
    }
    if lx.len() < 2 {
        return Err(Error::Degenerate("fewer than two samples with h ≠ l".into()));
    }
    let s = slope(&lx, &ly).ok_or_else(|| Error::Degenerate("all separations coincide".into()))?;
    let lo = 1.0 / r as f64 - 0.1;
    let passes = (lo..=1.1).contains(&s) && c1 > 0.0 && c1.is_finite() && c2.is_finite();
    Ok(NswFit { slope: s, c1, c2, step: r, samples: lx.len(), passes })
}

/// Samples `h` with `|h| ≤ 0.08` and `l = h + δ`, `|δ| = 10^U(−4, log₁₀ 0.05)`,
/// `δ` orthogonal to `h` when `m ≥ 2`, then fits as [`nsw_probe_pairs`].
pub fn nsw_probe(
    sys: &VectorFieldSystem,
    oracle: &dyn DistanceOracle,
    x: &[f64],
    samples: usize,
    seed: u64,
) -> Result<NswFit> {
    if samples < 20 {
        return Err(Error::Config(format!("nsw probe needs at least 20 samples, got {samples}")));
    }
    let m = sys.fields();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = |rng: &mut ChaCha8Rng| loop {
        let v: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            return v.into_iter().map(|a| a / n).collect::<Vec<f64>>();
        }
    };
    let top = 0.05f64.log10();
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..samples)
        .map(|_| {
            let hd = unit(&mut rng);
            let hn = 0.08 * rng.gen::<f64>().powf(1.0 / m as f64);
            let h: Vec<f64> = hd.iter().map(|a| a * hn).collect();
            let mut dd = unit(&mut rng);
            if m >= 2 {
                let c: f64 = dd.iter().zip(&hd).map(|(a, b)| a * b).sum();
                for (a, b) in dd.iter_mut().zip(&hd) {
                    *a -= c * b;
                }
                let n = dd.iter().map(|a| a * a).sum::<f64>().sqrt();
                dd.iter_mut().for_each(|a| *a /= n);
            }
            let len = 10f64.powf(rng.gen_range(-4.0..top));
            let l: Vec<f64> = h.iter().zip(&dd).map(|(a, b)| a + len * b).collect();
            (h, l)
        })
        .collect();
    nsw_probe_pairs(sys, oracle, x, &pairs)
}

/// Nodes of `Ω_ε`: off the rim with `min over rim nodes of d² ≥ ε`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShrunkenDomain {
    pub mask: Vec<bool>,
    pub epsilon: f64,
    /// No node survived.
    pub empty: bool,
}

impl ShrunkenDomain {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|b| **b).count()
    }
}

/// `Ω_ε` on `grid`, comparing against rim nodes. The threshold carries a
/// relative slack of `1e-12` so that `ε = 0` keeps every node off the rim.
pub fn shrunken_domain(oracle: &dyn DistanceOracle, epsilon: f64, grid: &Grid) -> Result<ShrunkenDomain> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::Config(format!("epsilon must be finite and nonnegative, got {epsilon}")));
    }
    if oracle.dim() != grid.dim() {
        return Err(Error::Dimension { expected: grid.dim(), got: oracle.dim() });
    }
    let threshold = epsilon * (1.0 - 1e-12);
    let n = grid.dim();
    let interior = grid.interior_nodes();
    let mut mask = vec![false; grid.len()];
    if epsilon == 0.0 {
        for &v in &interior {
            mask[v] = true;
        }
    } else if let Some(dist) = {
        let rim: Vec<Vec<f64>> = grid.rim_nodes().into_iter().map(|v| grid.coords(v)).collect();
        let q: Vec<Vec<f64>> = interior.iter().map(|&v| grid.coords(v)).collect();
        oracle.nearest_source_distances(&rim, &q)
    } {
        for (&v, d) in interior.iter().zip(dist) {
            mask[v] = d * d >= threshold;
        }
    } else {
        let r = epsilon.sqrt();
        let rim = grid.rim_nodes();
        let mut x = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut idx = vec![0usize; n];
        for &v in &interior {
            grid.coords_into(v, &mut x);
            let keep = match oracle.ball_box(&x, r) {
                Some((lo, hi)) => {
                    // rim nodes inside the ball's bounding box, face by face
                    let mut ranges = Vec::with_capacity(n);
                    let mut hit = true;
                    for k in 0..n {
                        match grid.index_range(k, lo[k], hi[k]) {
                            Some(rg) => ranges.push(rg),
                            None => {
                                hit = false;
                                break;
                            }
                        }
                    }
                    !hit || !face_hit(grid, oracle, &x, &ranges, threshold, &mut idx, &mut y)
                }
                None => rim.iter().all(|&w| {
                    grid.coords_into(w, &mut y);
                    oracle.distance_squared(&x, &y) >= threshold
                }),
            };
            mask[v] = keep;
        }
    }
    let empty = !mask.iter().any(|b| *b);
    Ok(ShrunkenDomain { mask, epsilon, empty })
}

/// Whether some rim node within `ranges` has `d² < threshold`.
fn face_hit(
    grid: &Grid,
    oracle: &dyn DistanceOracle,
    x: &[f64],
    ranges: &[(usize, usize)],
    threshold: f64,
    idx: &mut [usize],
    y: &mut [f64],
) -> bool {
    let n = grid.dim();
    let counts = grid.counts();
    for axis in 0..n {
        for side in [0, counts[axis] - 1] {
            if side < ranges[axis].0 || side > ranges[axis].1 {
                continue;
            }
            // enumerate the face slab restricted to the ranges
            for k in 0..n {
                idx[k] = if k == axis { side } else { ranges[k].0 };
            }
            loop {
                let node = grid.node(idx);
                grid.coords_into(node, y);
                if oracle.distance_squared(x, y) < threshold {
                    return true;
                }
                let mut k = 0;
                loop {
                    if k == n {
                        break;
                    }
                    if k == axis {
                        k += 1;
                        continue;
                    }
                    if idx[k] < ranges[k].1 {
                        idx[k] += 1;
                        break;
                    }
                    idx[k] = ranges[k].0;
                    k += 1;
                }
                if k == n {
                    break;
                }
            }
        }
    }
    false
}

/// Largest `|σ(y)ᵀ∇_y d(x, y)|` over the pairs with `d ≥ d_min`, by central
/// differences with step `1e-6`.
pub fn horizontal_gradient_bound(
    sys: &VectorFieldSystem,
    oracle: &dyn DistanceOracle,
    pairs: &[(Vec<f64>, Vec<f64>)],
    d_min: f64,
) -> f64 {
    let (n, m) = (sys.dim(), sys.fields());
    let eps = 1e-6;
    let mut s = vec![0.0; n * m];
    let mut worst: f64 = 0.0;
    for (x, y) in pairs {
        if oracle.distance(x, y) < d_min {
            continue;
        }
        let mut g = vec![0.0; n];
        let mut z = y.clone();
        for k in 0..n {
            z[k] = y[k] + eps;
            let a = oracle.distance(x, &z);
            z[k] = y[k] - eps;
            let b = oracle.distance(x, &z);
            z[k] = y[k];
            g[k] = (a - b) / (2.0 * eps);
        }
        sys.sigma_into(y, &mut s);
        let norm = (0..m)
            .map(|i| {
                let v: f64 = (0..n).map(|k| s[i * n + k] * g[k]).sum();
                v * v
            })
            .sum::<f64>()
            .sqrt();
        worst = worst.max(norm);
    }
    worst
}

/// Largest `d(x,z) − K(d(x,y) + d(y,z))` over the triples, with `K` the
/// oracle's declared triangle constant.
pub fn triangle_excess(oracle: &dyn DistanceOracle, triples: &[[Vec<f64>; 3]]) -> f64 {
    let k = oracle.triangle_constant();
    triples
        .iter()
        .map(|[x, y, z]| oracle.distance(x, z) - k * (oracle.distance(x, y) + oracle.distance(y, z)))
        .fold(f64::NEG_INFINITY, f64::max)
}
