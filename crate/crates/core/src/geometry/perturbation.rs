use std::sync::Arc;

use serde::Serialize;

use super::pullback::{pullback_system, Diffeomorphism, FlowMap};
use super::{VectorFieldSystem, DEFAULT_FLOW_STEPS};
use crate::error::{Error, Result};
use crate::functions::SmoothFunction;
use crate::operator::{evaluate_operator, QuasilinearOperator};

/// One row of [`perturbed_operator_convergence`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PerturbationRow {
    pub h: f64,
    pub deviation: f64,
}

/// Probe points `x0` and `x0 ± r·e_k`.
fn probe_points(x0: &[f64], r: f64) -> Vec<Vec<f64>> {
    let mut pts = vec![x0.to_vec()];
    for k in 0..x0.len() {
        for s in [-1.0, 1.0] {
            let mut p = x0.to_vec();
            p[k] += s * r;
            pts.push(p);
        }
    }
    pts
}

/// For each scale `h`, pulls `sys` back through `Θ_h = exp(h·direction·𝔛)`
/// and returns `max |ℒ^h f − ℒf|` over `x0` and the `2n` points `x0 ± r·e_k`.
pub fn perturbed_operator_convergence(
    sys: &VectorFieldSystem,
    op: &QuasilinearOperator,
    x0: &[f64],
    f: &dyn SmoothFunction,
    direction: &[f64],
    scales: &[f64],
    probe_radius: f64,
) -> Result<Vec<PerturbationRow>> {
    if direction.len() != sys.fields() {
        return Err(Error::Dimension { expected: sys.fields(), got: direction.len() });
    }
    if x0.len() != sys.dim() {
        return Err(Error::Dimension { expected: sys.dim(), got: x0.len() });
    }
    let pts = probe_points(x0, probe_radius);
    let base: Vec<f64> = pts.iter().map(|p| evaluate_operator(op, sys, f, p)).collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(scales.len());
    for &h in scales {
        if !(h.is_finite() && h >= 0.0) {
            return Err(Error::Config(format!("scale must be finite and nonnegative, got {h}")));
        }
        if h == 0.0 {
            rows.push(PerturbationRow { h, deviation: 0.0 });
            continue;
        }
        let hv: Vec<f64> = direction.iter().map(|d| h * d).collect();
        let theta: Arc<dyn Diffeomorphism> = Arc::new(FlowMap::new(sys.clone(), hv, DEFAULT_FLOW_STEPS)?);
        let hat = pullback_system(sys, theta, &pts)?;
        let mut deviation: f64 = 0.0;
        for (p, b) in pts.iter().zip(&base) {
            let v = evaluate_operator(op, &hat, f, p)?;
            deviation = deviation.max((v - b).abs());
        }
        rows.push(PerturbationRow { h, deviation });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::Quadratic;
    use crate::geometry::{euclidean, heisenberg1, polynomial::Polynomial};
    use crate::stats::loglog_slope;

    #[test]
    fn zero_scale_is_exact() {
        let sys = heisenberg1();
        let op = QuasilinearOperator::sublaplacian();
        let f = Quadratic::half_norm_squared(3);
        let rows = perturbed_operator_convergence(&sys, &op, &[0.2, 0.1, 0.0], &f, &[1.0, 0.0], &[0.0], 0.05).unwrap();
        assert_eq!(rows[0].deviation, 0.0);
    }

    #[test]
    fn euclidean_quadratic_has_no_deviation() {
        let sys = euclidean(2);
        let op = QuasilinearOperator::sublaplacian();
        let f = Quadratic::new(vec![2.0, 0.5, 0.5, 1.0], vec![0.3, 0.0], 1.0);
        let rows =
            perturbed_operator_convergence(&sys, &op, &[0.1, 0.2], &f, &[0.6, 0.8], &[0.1, 0.01, 0.001], 0.05).unwrap();
        for r in rows {
            assert!(r.deviation < 1e-8, "{r:?}");
        }
    }

    #[test]
    fn heisenberg_deviation_shrinks_linearly() {
        // X̂₁ = X₁ − b∂t, X̂₂ = X₂ + a∂t for h = (a, b); on f = x²+y²+t² the
        // sub-Laplacian changes by −2(ax + by) − 2|h|², so the sup over the
        // probe points is |h|(√2 r + 2|h|) in the direction (1,1)/√2.
        let sys = heisenberg1();
        let op = QuasilinearOperator::sublaplacian();
        let mut f = Polynomial::zero(3);
        for k in 0..3 {
            f = f.add(&Polynomial::var(3, k).mul(&Polynomial::var(3, k)));
        }
        let d = [std::f64::consts::FRAC_1_SQRT_2; 2];
        let scales = [1e-1, 1e-2, 1e-3, 1e-4];
        let r = 0.05;
        let rows = perturbed_operator_convergence(&sys, &op, &[0.0; 3], &f, &d, &scales, r).unwrap();
        for row in &rows {
            let expect = row.h * (2f64.sqrt() * r + 2.0 * row.h);
            assert!((row.deviation - expect).abs() < 1e-6 * (1.0 + expect), "{row:?} vs {expect}");
        }
        let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
        let ds: Vec<f64> = rows.iter().map(|r| r.deviation).collect();
        assert!(ds.windows(2).all(|w| w[1] < w[0]));
        assert!(loglog_slope(&hs, &ds).unwrap() >= 1.0);
    }
}
