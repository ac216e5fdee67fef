use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::polynomial::{poly_bracket, PolyField};
use super::VectorFieldSystem;

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOLERANCE: f64 = 1e-8;

const SAMPLE_POINTS: usize = 12;
const NUMERIC_STEP: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RankReport {
    /// Rank of the span of all brackets up to `max_order` at the point.
    pub rank: usize,
    /// Least order whose brackets span the tangent space, if any does.
    pub step: Option<usize>,
    /// Cumulative rank after each order.
    pub rank_by_order: Vec<usize>,
}

type NumField = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
enum Tower {
    Poly(PolyField),
    Numeric(NumField),
}

impl Tower {
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Tower::Poly(f) => f.iter().map(|p| p.eval(x)).collect(),
            Tower::Numeric(f) => f(x),
        }
    }
}

fn numeric_jacobian(f: &NumField, x: &[f64], n: usize) -> Vec<f64> {
    // row-major: out[k*n + l] = ∂_l f_k
    let mut out = vec![0.0; n * n];
    let mut xp = x.to_vec();
    for l in 0..n {
        xp[l] = x[l] + NUMERIC_STEP;
        let fp = f(&xp);
        xp[l] = x[l] - NUMERIC_STEP;
        let fm = f(&xp);
        xp[l] = x[l];
        for k in 0..n {
            out[k * n + l] = (fp[k] - fm[k]) / (2.0 * NUMERIC_STEP);
        }
    }
    out
}

fn numeric_bracket(a: NumField, b: NumField, n: usize) -> NumField {
    Arc::new(move |x: &[f64]| {
        let va = a(x);
        let vb = b(x);
        let ja = numeric_jacobian(&a, x, n);
        let jb = numeric_jacobian(&b, x, n);
        (0..n)
            .map(|k| (0..n).map(|l| jb[k * n + l] * va[l] - ja[k * n + l] * vb[l]).sum())
            .collect()
    })
}

fn generators(sys: &VectorFieldSystem) -> (Vec<Tower>, Option<Vec<NumField>>) {
    if let Some(pf) = sys.coefficients().polynomial_fields() {
        return (pf.into_iter().map(Tower::Poly).collect(), None);
    }
    let m = sys.fields();
    let fields: Vec<NumField> = (0..m)
        .map(|j| {
            let s = sys.clone();
            Arc::new(move |x: &[f64]| s.field(j, x).expect("index checked")) as NumField
        })
        .collect();
    (fields.iter().cloned().map(Tower::Numeric).collect(), Some(fields))
}

fn sample_points(sys: &VectorFieldSystem) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let dom = sys.domain();
    (0..SAMPLE_POINTS)
        .map(|_| {
            dom.lower()
                .iter()
                .zip(dom.upper())
                .map(|(l, u)| {
                    let c = 0.5 * (l + u);
                    let r = 0.5 * (u - l);
                    c + r * rng.gen_range(-0.9..0.9)
                })
                .collect()
        })
        .collect()
}

/// Signature of a field on the sample set, normalised to unit length.
/// `None` when the field vanishes on every sample.
fn signature(t: &Tower, samples: &[Vec<f64>]) -> Option<Vec<f64>> {
    let v: Vec<f64> = samples.iter().flat_map(|x| t.eval(x)).collect();
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm < 1e-12 {
        None
    } else {
        Some(v.into_iter().map(|a| a / norm).collect())
    }
}

fn duplicates(sig: &[f64], seen: &[Vec<f64>]) -> bool {
    seen.iter().any(|s| {
        let dot: f64 = s.iter().zip(sig).map(|(a, b)| a * b).sum();
        dot.abs() > 1.0 - 1e-12
    })
}

fn rank_of(columns: &[Vec<f64>], n: usize) -> usize {
    if columns.is_empty() {
        return 0;
    }
    let mat = DMatrix::from_fn(n, columns.len(), |r, c| columns[c][r]);
    let sv = mat.singular_values();
    let top = sv.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > RANK_TOLERANCE * top).count()
}

/// Rank of the span of iterated brackets up to `max_order` at `x`, and the
/// least order reaching rank `n`.
///
/// Brackets are generated breadth-first as `[X_i, B]` with `B` from the
/// previous order. A new bracket is dropped when it vanishes on a fixed
/// sample set or is a scalar multiple of one already kept there. Polynomial
/// systems bracket symbolically; others use nested central differences.
pub fn hormander_rank(sys: &VectorFieldSystem, x: &[f64], max_order: usize) -> RankReport {
    let n = sys.dim();
    let max_order = max_order.max(1);
    let samples = sample_points(sys);
    let (gens, numeric) = generators(sys);

    let mut seen: Vec<Vec<f64>> = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut level: Vec<Tower> = Vec::new();
    for g in &gens {
        // generators are kept even if they vanish on the samples
        if let Some(s) = signature(g, &samples) {
            seen.push(s);
        }
        columns.push(g.eval(x));
        level.push(g.clone());
    }

    let mut rank_by_order = vec![rank_of(&columns, n)];
    let mut step = (rank_by_order[0] == n).then_some(1);
    for _order in 2..=max_order {
        if step.is_some() || level.is_empty() {
            break;
        }
        let mut next = Vec::new();
        for (i, g) in gens.iter().enumerate() {
            for b in &level {
                let t = match (g, b) {
                    (Tower::Poly(a), Tower::Poly(bb)) => Tower::Poly(poly_bracket(a, bb)),
                    (_, Tower::Numeric(bb)) => {
                        let a = numeric.as_ref().expect("numeric generators")[i].clone();
                        Tower::Numeric(numeric_bracket(a, bb.clone(), n))
                    }
                    (Tower::Numeric(a), Tower::Poly(_)) => {
                        Tower::Numeric(numeric_bracket(a.clone(), to_numeric(b), n))
                    }
                };
                if let Some(s) = signature(&t, &samples) {
                    if !duplicates(&s, &seen) {
                        seen.push(s);
                        columns.push(t.eval(x));
                        next.push(t);
                    }
                }
            }
        }
        level = next;
        let r = rank_of(&columns, n);
        rank_by_order.push(r);
        if r == n {
            step = Some(rank_by_order.len());
        }
    }
    RankReport { rank: *rank_by_order.last().expect("nonempty"), step, rank_by_order }
}

fn to_numeric(t: &Tower) -> NumField {
    let t = t.clone();
    Arc::new(move |x: &[f64]| t.eval(x))
}
