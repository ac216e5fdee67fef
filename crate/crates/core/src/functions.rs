//! Smooth scalar test functions with analytic or finite-difference derivatives.

use std::fmt;
use std::sync::Arc;

use crate::geometry::polynomial::Polynomial;

/// Twice differentiable scalar function on `ℝⁿ`.
pub trait SmoothFunction: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64], out: &mut [f64]);

    /// Row-major `n×n` Hessian.
    fn hessian(&self, x: &[f64], out: &mut [f64]);
}

impl SmoothFunction for Polynomial {
    fn dim(&self) -> usize {
        Polynomial::dim(self)
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.derivative(k).eval(x);
        }
    }
    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let n = Polynomial::dim(self);
        for k in 0..n {
            let dk = self.derivative(k);
            for l in k..n {
                let v = dk.derivative(l).eval(x);
                out[k * n + l] = v;
                out[l * n + k] = v;
            }
        }
    }
}

/// `½xᵀQx + ⟨b, x⟩ + c` with symmetric `Q` (row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct Quadratic {
    pub q: Vec<f64>,
    pub b: Vec<f64>,
    pub c: f64,
}

impl Quadratic {
    /// Symmetrises `q` on construction.
    pub fn new(q: Vec<f64>, b: Vec<f64>, c: f64) -> Self {
        let n = b.len();
        assert_eq!(q.len(), n * n);
        let mut s = q.clone();
        for i in 0..n {
            for j in 0..n {
                s[i * n + j] = 0.5 * (q[i * n + j] + q[j * n + i]);
            }
        }
        Self { q: s, b, c }
    }

    /// `|x|²/2`.
    pub fn half_norm_squared(n: usize) -> Self {
        let mut q = vec![0.0; n * n];
        for i in 0..n {
            q[i * n + i] = 1.0;
        }
        Self::new(q, vec![0.0; n], 0.0)
    }
}

impl SmoothFunction for Quadratic {
    fn dim(&self) -> usize {
        self.b.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        let n = self.b.len();
        let mut acc = self.c;
        for i in 0..n {
            acc += self.b[i] * x[i];
            for j in 0..n {
                acc += 0.5 * x[i] * self.q[i * n + j] * x[j];
            }
        }
        acc
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let n = self.b.len();
        for i in 0..n {
            out[i] = self.b[i] + (0..n).map(|j| self.q[i * n + j] * x[j]).sum::<f64>();
        }
    }
    fn hessian(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.q);
    }
}

/// `N^p` for the Korányi gauge `N(x,y,t) = ((x²+y²)² + 16t²)^{1/4}` on ℝ³.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KoranyiPower {
    pub p: f64,
}

impl KoranyiPower {
    fn q_parts(x: &[f64]) -> (f64, [f64; 3], [f64; 9]) {
        let (a, b, t) = (x[0], x[1], x[2]);
        let r2 = a * a + b * b;
        let q = r2 * r2 + 16.0 * t * t;
        let g = [4.0 * a * r2, 4.0 * b * r2, 32.0 * t];
        let h = [
            4.0 * r2 + 8.0 * a * a,
            8.0 * a * b,
            0.0,
            8.0 * a * b,
            4.0 * r2 + 8.0 * b * b,
            0.0,
            0.0,
            0.0,
            32.0,
        ];
        (q, g, h)
    }
}

impl SmoothFunction for KoranyiPower {
    fn dim(&self) -> usize {
        3
    }
    fn value(&self, x: &[f64]) -> f64 {
        let (q, _, _) = Self::q_parts(x);
        q.powf(self.p / 4.0)
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let (q, g, _) = Self::q_parts(x);
        let e = self.p / 4.0;
        let c = e * q.powf(e - 1.0);
        for k in 0..3 {
            out[k] = c * g[k];
        }
    }
    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let (q, g, h) = Self::q_parts(x);
        let e = self.p / 4.0;
        let c1 = e * q.powf(e - 1.0);
        let c2 = e * (e - 1.0) * q.powf(e - 2.0);
        for i in 0..3 {
            for j in 0..3 {
                out[i * 3 + j] = c2 * g[i] * g[j] + c1 * h[i * 3 + j];
            }
        }
    }
}

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Closure with central-difference derivatives.
#[derive(Clone)]
pub struct FnFunction {
    n: usize,
    f: ScalarFn,
    grad_step: f64,
    hess_step: f64,
}

impl fmt::Debug for FnFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnFunction(n={})", self.n)
    }
}

impl FnFunction {
    pub fn new(n: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { n, f: Arc::new(f), grad_step: 1e-6, hess_step: 1e-4 }
    }
}

impl SmoothFunction for FnFunction {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let s = self.grad_step;
        let mut y = x.to_vec();
        for k in 0..self.n {
            y[k] = x[k] + s;
            let fp = (self.f)(&y);
            y[k] = x[k] - s;
            let fm = (self.f)(&y);
            y[k] = x[k];
            out[k] = (fp - fm) / (2.0 * s);
        }
    }
    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let s = self.hess_step;
        let n = self.n;
        let f0 = (self.f)(x);
        let mut y = x.to_vec();
        for k in 0..n {
            y[k] = x[k] + s;
            let fp = (self.f)(&y);
            y[k] = x[k] - s;
            let fm = (self.f)(&y);
            y[k] = x[k];
            out[k * n + k] = (fp - 2.0 * f0 + fm) / (s * s);
            for l in k + 1..n {
                let mut corner = |a: f64, b: f64| {
                    y[k] = x[k] + a * s;
                    y[l] = x[l] + b * s;
                    let v = (self.f)(&y);
                    y[k] = x[k];
                    y[l] = x[l];
                    v
                };
                let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                    / (4.0 * s * s);
                out[k * n + l] = v;
                out[l * n + k] = v;
            }
        }
    }
}

/// `w(x) + ⟨p, x⟩`.
#[derive(Clone)]
pub struct AddLinear {
    pub inner: Arc<dyn SmoothFunction>,
    pub p: Vec<f64>,
}

impl SmoothFunction for AddLinear {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.inner.value(x) + self.p.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        self.inner.gradient(x, out);
        for (o, p) in out.iter_mut().zip(&self.p) {
            *o += p;
        }
    }
    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        self.inner.hessian(x, out)
    }
}

/// Scalar profile `h: ℝ → ℝ` with two derivatives.
pub trait ScalarProfile: Send + Sync {
    fn value(&self, u: f64) -> f64;
    fn d1(&self, u: f64) -> f64;
    fn d2(&self, u: f64) -> f64;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityProfile;

impl ScalarProfile for IdentityProfile {
    fn value(&self, u: f64) -> f64 {
        u
    }
    fn d1(&self, _u: f64) -> f64 {
        1.0
    }
    fn d2(&self, _u: f64) -> f64 {
        0.0
    }
}

/// `h(u) = u + λ(u − u₀)²`; `h' ≥ 1` and `h'' ≥ 0` for `u ≥ u₀`, `λ ≥ 0`.
#[derive(Clone, Copy, Debug)]
pub struct QuadraticBump {
    pub lambda: f64,
    pub base: f64,
}

impl ScalarProfile for QuadraticBump {
    fn value(&self, u: f64) -> f64 {
        u + self.lambda * (u - self.base).powi(2)
    }
    fn d1(&self, u: f64) -> f64 {
        1.0 + 2.0 * self.lambda * (u - self.base)
    }
    fn d2(&self, _u: f64) -> f64 {
        2.0 * self.lambda
    }
}

/// `h ∘ ω`.
#[derive(Clone)]
pub struct Composed {
    pub inner: Arc<dyn SmoothFunction>,
    pub profile: Arc<dyn ScalarProfile>,
}

impl SmoothFunction for Composed {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.profile.value(self.inner.value(x))
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let d1 = self.profile.d1(self.inner.value(x));
        self.inner.gradient(x, out);
        for o in out.iter_mut() {
            *o *= d1;
        }
    }
    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let n = self.inner.dim();
        let u = self.inner.value(x);
        let (d1, d2) = (self.profile.d1(u), self.profile.d2(u));
        let mut g = vec![0.0; n];
        self.inner.gradient(x, &mut g);
        self.inner.hessian(x, out);
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = d1 * out[i * n + j] + d2 * g[i] * g[j];
            }
        }
    }
}
