use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::flow::{exp_flow, flow_with_jacobian};
use super::{FieldCoefficients, VectorFieldSystem};
use crate::error::{Error, Result};

/// Invertible smooth map with a computable Jacobian.
pub trait Diffeomorphism: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn inverse(&self, y: &[f64]) -> Result<Vec<f64>>;

    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>>;

    fn forward_with_jacobian(&self, x: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        Ok((self.forward(x)?, self.jacobian(x)?))
    }

    fn is_identity(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Identity {
    pub n: usize,
}

impl Diffeomorphism for Identity {
    fn dim(&self) -> usize {
        self.n
    }
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(x.to_vec())
    }
    fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(y.to_vec())
    }
    fn jacobian(&self, _x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(DMatrix::identity(self.n, self.n))
    }
    fn is_identity(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone)]
pub struct Translation {
    pub v: Vec<f64>,
}

impl Diffeomorphism for Translation {
    fn dim(&self) -> usize {
        self.v.len()
    }
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(x.iter().zip(&self.v).map(|(a, b)| a + b).collect())
    }
    fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(y.iter().zip(&self.v).map(|(a, b)| a - b).collect())
    }
    fn jacobian(&self, _x: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.v.len();
        Ok(DMatrix::identity(n, n))
    }
}

/// `y ↦ exp_y(h·𝔛)`; the inverse is the flow by `−h`.
#[derive(Debug, Clone)]
pub struct FlowMap {
    pub sys: VectorFieldSystem,
    pub h: Vec<f64>,
    pub steps: usize,
}

impl FlowMap {
    pub fn new(sys: VectorFieldSystem, h: Vec<f64>, steps: usize) -> Result<Self> {
        if h.len() != sys.fields() {
            return Err(Error::Dimension { expected: sys.fields(), got: h.len() });
        }
        Ok(Self { sys, h, steps })
    }
}

impl Diffeomorphism for FlowMap {
    fn dim(&self) -> usize {
        self.sys.dim()
    }
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        exp_flow(&self.sys, x, &self.h, self.steps)
    }
    fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        let back: Vec<f64> = self.h.iter().map(|v| -v).collect();
        exp_flow(&self.sys, y, &back, self.steps)
    }
    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        flow_with_jacobian(&self.sys, x, &self.h, self.steps).map(|(_, j)| j)
    }
    fn forward_with_jacobian(&self, x: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        flow_with_jacobian(&self.sys, x, &self.h, self.steps)
    }
    fn is_identity(&self) -> bool {
        self.h.iter().all(|v| *v == 0.0)
    }
}

struct PulledBack {
    base: VectorFieldSystem,
    theta: Arc<dyn Diffeomorphism>,
}

impl fmt::Debug for PulledBack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PulledBack").field("base", &self.base).field("theta", &self.theta).finish()
    }
}

fn check_invertible(j: &DMatrix<f64>, at: &[f64]) -> Result<()> {
    let sv = j.singular_values();
    let top = sv.max();
    let bottom = sv.min();
    if !(top.is_finite() && bottom > 1e-12 * top.max(1.0)) {
        return Err(Error::SingularJacobian(at.to_vec()));
    }
    Ok(())
}

impl FieldCoefficients for PulledBack {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn fields(&self) -> usize {
        self.base.fields()
    }
    /// `X̂ᵢ(t) = (dΘ_t)⁻¹ Xᵢ(Θ(t))`. Points where `Θ` fails yield NaN.
    fn sigma_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dim();
        let m = self.fields();
        let Ok((y, j)) = self.theta.forward_with_jacobian(x) else {
            out.fill(f64::NAN);
            return;
        };
        let lu = j.lu();
        let mut s = vec![0.0; n * m];
        self.base.sigma_into(&y, &mut s);
        for c in 0..m {
            let rhs = DVector::from_column_slice(&s[c * n..(c + 1) * n]);
            match lu.solve(&rhs) {
                Some(v) => out[c * n..(c + 1) * n].copy_from_slice(v.as_slice()),
                None => out[c * n..(c + 1) * n].fill(f64::NAN),
            }
        }
    }
}

/// Pulls `sys` back through `theta`: the returned system has fields
/// `X̂ᵢ(t) = (dΘ_t)⁻¹ Xᵢ(Θ(t))`, so `X̂ᵢ(f∘Θ) = (Xᵢf)∘Θ`.
///
/// `probes` are points of the working region where the Jacobian is checked for
/// invertibility up front. `Dσ̂` of the result uses central differences.
pub fn pullback_system(
    sys: &VectorFieldSystem,
    theta: Arc<dyn Diffeomorphism>,
    probes: &[Vec<f64>],
) -> Result<VectorFieldSystem> {
    if theta.dim() != sys.dim() {
        return Err(Error::Dimension { expected: sys.dim(), got: theta.dim() });
    }
    if theta.is_identity() {
        return Ok(sys.clone());
    }
    for p in probes {
        let j = theta.jacobian(p)?;
        check_invertible(&j, p)?;
    }
    let name = format!("pullback({})", sys.name().unwrap_or("system"));
    let out = VectorFieldSystem::new(Arc::new(PulledBack { base: sys.clone(), theta }), sys.domain().clone())?
        .with_name(name);
    Ok(match sys.declared_step() {
        Some(r) => out.with_declared_step(r),
        None => out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{euclidean, heisenberg1, Euclidean};
    use crate::grid::BoxDomain;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_returns_same_system() {
        let sys = heisenberg1();
        let out = pullback_system(&sys, Arc::new(Identity { n: 3 }), &[]).unwrap();
        let x = [0.3, 0.1, -0.2];
        assert_eq!(out.sigma(&x), sys.sigma(&x));
        assert_eq!(out.name(), sys.name());
    }

    #[test]
    fn translation_keeps_constant_fields() {
        let sys = euclidean(2);
        let out = pullback_system(&sys, Arc::new(Translation { v: vec![0.5, -0.25] }), &[vec![0.0, 0.0]]).unwrap();
        assert_eq!(out.sigma(&[0.1, 0.9]), sys.sigma(&[0.1, 0.9]));
    }

    #[derive(Debug)]
    struct Collapse;
    impl Diffeomorphism for Collapse {
        fn dim(&self) -> usize {
            2
        }
        fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![x[0], 0.0])
        }
        fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
            Ok(y.to_vec())
        }
        fn jacobian(&self, _x: &[f64]) -> Result<DMatrix<f64>> {
            Ok(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]))
        }
    }

    #[test]
    fn singular_jacobian_is_rejected() {
        let sys = VectorFieldSystem::new(Arc::new(Euclidean { n: 2 }), BoxDomain::cube(2, -1.0, 1.0).unwrap()).unwrap();
        let err = pullback_system(&sys, Arc::new(Collapse), &[vec![0.0, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::SingularJacobian(_)));
    }

    #[test]
    fn flow_map_inverse_round_trips() {
        let sys = heisenberg1();
        let theta = FlowMap::new(sys, vec![0.3, -0.2], 64).unwrap();
        let x = [0.1, 0.2, 0.3];
        let back = theta.inverse(&theta.forward(&x).unwrap()).unwrap();
        for k in 0..3 {
            assert!((back[k] - x[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn heisenberg_chain_rule_identity() {
        // f(x,y,t) = x² + y t; compare X̂ᵢ(f∘Θ) with (Xᵢ f)∘Θ
        let f = |p: &[f64]| p[0] * p[0] + p[1] * p[2];
        let grad_f = |p: &[f64]| [2.0 * p[0], p[2], p[1]];
        let sys = heisenberg1();
        let h = vec![0.6e-2, 0.8e-2];
        let theta: Arc<dyn Diffeomorphism> = Arc::new(FlowMap::new(sys.clone(), h, 64).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Vec<f64>> = (0..20).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let hat = pullback_system(&sys, theta.clone(), &pts).unwrap();
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for p in &pts {
            let sig_hat = hat.sigma(p);
            let y = theta.forward(p).unwrap();
            let sig = sys.sigma(&y);
            let gy = grad_f(&y);
            let mut g = [0.0; 3];
            for k in 0..3 {
                let mut a = p.clone();
                let mut b = p.clone();
                a[k] += eps;
                b[k] -= eps;
                g[k] = (f(&theta.forward(&a).unwrap()) - f(&theta.forward(&b).unwrap())) / (2.0 * eps);
            }
            for i in 0..2 {
                let lhs: f64 = (0..3).map(|k| sig_hat[(k, i)] * g[k]).sum();
                let rhs: f64 = (0..3).map(|k| sig[(k, i)] * gy[k]).sum();
                worst = worst.max((lhs - rhs).abs());
            }
        }
        assert!(worst <= 1e-5, "max error {worst}");
    }
}
