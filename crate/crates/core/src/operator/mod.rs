//! The quasilinear operator family `ℒu = −Tr(A(𝔛u)𝔛*𝔛u) + H(𝔛u)` with its
//! scaling profile `φ`, horizontal jets, linearization and the structure
//! probes.

mod jet;
mod probes;

use std::fmt;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::polynomial::Polynomial;

pub use jet::{
    evaluate_operator, evaluate_operator_grid, horizontal_gradient_norm_grid, horizontal_jet,
    horizontal_jet_grid, jet_from_derivatives, HorizontalJet,
};
pub use probes::{
    chain_rule_bound_probe, check_structure, growth_lower_bound, inequality_suite, linear_perturbation_bound_probe,
    linearize_at, min_energy_on_sphere, ChainRuleProbe, GrowthReport, InequalityCase, InequalitySuite, Linearization,
    PerturbationProbe,
    StructureReport, StructureViolation,
};

/// Step of the central differences used for `D_ξA`, `D_ξH` without closed forms.
pub const XI_FD_STEP: f64 = 1e-6;

/// Diffusion map `ξ ↦ A(ξ)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Diffusion {
    /// `A ≡ I`.
    Identity,
    /// `A(ξ) = ξ⊗ξ`.
    Infinity,
    /// `A(ξ) = I + (p − 2) ξ⊗ξ/|ξ|²`.
    NormalizedP(f64),
    /// Entries of an `m×m` matrix (row-major) as polynomials in `ξ`.
    Polynomial(Vec<Polynomial>),
}

/// Drift map `ξ ↦ H(ξ)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Drift {
    Zero,
    Polynomial(Polynomial),
}

/// Scaling profile `φ: (0,1] → (0,1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Profile {
    /// `φ(s) = s^k`.
    Power(f64),
}

impl Profile {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            Profile::Power(k) => s.powf(*k),
        }
    }

    /// Parses `power:<k>`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let k = spec
            .strip_prefix("power:")
            .ok_or_else(|| Error::Config(format!("unknown profile {spec:?}, expected power:<k>")))?;
        let k: f64 = k.parse().map_err(|_| Error::Config(format!("bad exponent in {spec:?}")))?;
        if !(k.is_finite() && k >= 0.0) {
            return Err(Error::Config(format!("profile exponent must be finite and nonnegative, got {k}")));
        }
        Ok(Profile::Power(k))
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Power(k) => write!(f, "power:{k}"),
        }
    }
}

/// Value convention at a vanishing horizontal gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ZeroGradientRule {
    /// Evaluate the formula as is.
    Regular,
    /// Drop the second-order term at `ξ = 0` and flag the point as degenerate.
    DropSecondOrder,
}

/// Outcome of a pointwise evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    /// The zero-gradient rule was applied.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuasilinearOperator {
    pub name: String,
    pub diffusion: Diffusion,
    pub drift: Drift,
    pub profile: Profile,
    pub zero_rule: ZeroGradientRule,
}

impl QuasilinearOperator {
    /// `A ≡ I`, `H ≡ 0`, `φ(s) = s`.
    pub fn sublaplacian() -> Self {
        Self {
            name: "sublaplacian".into(),
            diffusion: Diffusion::Identity,
            drift: Drift::Zero,
            profile: Profile::Power(1.0),
            zero_rule: ZeroGradientRule::Regular,
        }
    }

    /// `A(ξ) = ξ⊗ξ`, `H ≡ 0`, `φ(s) = s³`.
    pub fn infinity() -> Self {
        Self {
            name: "infinity".into(),
            diffusion: Diffusion::Infinity,
            drift: Drift::Zero,
            profile: Profile::Power(3.0),
            zero_rule: ZeroGradientRule::DropSecondOrder,
        }
    }

    /// `A(ξ) = I + (p−2)ξ⊗ξ/|ξ|²`, `H ≡ 0`, `φ(s) = s`.
    pub fn normalized_p(p: f64) -> Result<Self> {
        if !(p.is_finite() && p > 1.0) {
            return Err(Error::Config(format!("normalized p-Laplacian needs p > 1, got {p}")));
        }
        Ok(Self {
            name: format!("pnorm:{p}"),
            diffusion: Diffusion::NormalizedP(p),
            drift: Drift::Zero,
            profile: Profile::Power(1.0),
            zero_rule: ZeroGradientRule::DropSecondOrder,
        })
    }

    /// Preset by name (`sublaplacian`, `infinity`, `pnorm:<p>`), optionally
    /// overriding the profile with `power:<k>`.
    pub fn preset(name: &str, phi: Option<&str>) -> Result<Self> {
        let name = name.trim();
        let mut op = match name {
            "sublaplacian" => Self::sublaplacian(),
            "infinity" => Self::infinity(),
            _ => match name.strip_prefix("pnorm:") {
                Some(p) => {
                    let p: f64 = p.parse().map_err(|_| Error::Config(format!("bad exponent in {name:?}")))?;
                    Self::normalized_p(p)?
                }
                None => return Err(Error::Config(format!("unknown operator preset {name:?}"))),
            },
        };
        if let Some(phi) = phi {
            op.profile = Profile::parse(phi)?;
        }
        Ok(op)
    }

    /// Operator with polynomial `A` entries and an optional polynomial `H`.
    /// `h_at_zero` must match `H(0)`.
    pub fn custom(
        name: impl Into<String>,
        m: usize,
        a: Vec<Polynomial>,
        h: Option<Polynomial>,
        h_at_zero: f64,
        profile: Profile,
    ) -> Result<Self> {
        if a.len() != m * m {
            return Err(Error::Dimension { expected: m * m, got: a.len() });
        }
        if let Some(p) = a.iter().find(|p| p.dim() != m) {
            return Err(Error::Dimension { expected: m, got: p.dim() });
        }
        let drift = match h {
            Some(h) => {
                if h.dim() != m {
                    return Err(Error::Dimension { expected: m, got: h.dim() });
                }
                let h0 = h.eval(&vec![0.0; m]);
                if (h0 - h_at_zero).abs() > 1e-12 * (1.0 + h0.abs()) {
                    return Err(Error::Config(format!("declared H(0) = {h_at_zero} but the drift gives {h0}")));
                }
                Drift::Polynomial(h)
            }
            None => {
                if h_at_zero != 0.0 {
                    return Err(Error::Config(format!("declared H(0) = {h_at_zero} for a zero drift")));
                }
                Drift::Zero
            }
        };
        Ok(Self {
            name: name.into(),
            diffusion: Diffusion::Polynomial(a),
            drift,
            profile,
            zero_rule: ZeroGradientRule::Regular,
        })
    }

    pub fn with_profile(mut self, profile: Profile) -> Self {
        self.profile = profile;
        self
    }

    /// Size `m` the operator is tied to, if any.
    pub fn fixed_dim(&self) -> Option<usize> {
        match &self.diffusion {
            Diffusion::Polynomial(a) => Some((a.len() as f64).sqrt().round() as usize),
            _ => None,
        }
    }

    pub fn check_dim(&self, m: usize) -> Result<()> {
        match self.fixed_dim() {
            Some(k) if k != m => Err(Error::Dimension { expected: k, got: m }),
            _ => Ok(()),
        }
    }

    pub fn phi(&self, s: f64) -> f64 {
        self.profile.eval(s)
    }

    pub fn is_degenerate(&self, xi: &[f64]) -> bool {
        self.zero_rule == ZeroGradientRule::DropSecondOrder && xi.iter().all(|v| *v == 0.0)
    }

    /// `A(ξ)` into a row-major `m×m` buffer. At `ξ = 0` the normalized
    /// p-Laplacian has no value; the identity part is written.
    pub fn diffusion_into(&self, xi: &[f64], out: &mut [f64]) {
        let m = xi.len();
        match &self.diffusion {
            Diffusion::Identity => {
                out.fill(0.0);
                for i in 0..m {
                    out[i * m + i] = 1.0;
                }
            }
            Diffusion::Infinity => {
                for i in 0..m {
                    for j in 0..m {
                        out[i * m + j] = xi[i] * xi[j];
                    }
                }
            }
            Diffusion::NormalizedP(p) => {
                let s: f64 = xi.iter().map(|v| v * v).sum();
                let c = if s > 0.0 { (p - 2.0) / s } else { 0.0 };
                for i in 0..m {
                    for j in 0..m {
                        out[i * m + j] = c * xi[i] * xi[j] + if i == j { 1.0 } else { 0.0 };
                    }
                }
            }
            Diffusion::Polynomial(a) => {
                for (o, p) in out.iter_mut().zip(a) {
                    *o = p.eval(xi);
                }
            }
        }
    }

    /// `A(ξ)`, or the zero matrix where the zero-gradient rule drops it.
    pub fn effective_diffusion_into(&self, xi: &[f64], out: &mut [f64]) {
        if self.is_degenerate(xi) {
            out.fill(0.0);
        } else {
            self.diffusion_into(xi, out);
        }
    }

    /// `A(ξ)` with `ξ⊗ξ/|ξ|²` replaced by `ξ⊗ξ/(|ξ|² + δ²)` for the
    /// normalized p-Laplacian; other diffusions are unchanged.
    pub fn diffusion_regularized_into(&self, xi: &[f64], delta: f64, out: &mut [f64]) {
        match &self.diffusion {
            Diffusion::NormalizedP(p) => {
                let m = xi.len();
                let s: f64 = xi.iter().map(|v| v * v).sum::<f64>() + delta * delta;
                let c = (p - 2.0) / s;
                for i in 0..m {
                    for j in 0..m {
                        out[i * m + j] = c * xi[i] * xi[j] + if i == j { 1.0 } else { 0.0 };
                    }
                }
            }
            _ => self.diffusion_into(xi, out),
        }
    }

    pub fn diffusion(&self, xi: &[f64]) -> DMatrix<f64> {
        let m = xi.len();
        let mut buf = vec![0.0; m * m];
        self.diffusion_into(xi, &mut buf);
        DMatrix::from_row_slice(m, m, &buf)
    }

    pub fn drift(&self, xi: &[f64]) -> f64 {
        match &self.drift {
            Drift::Zero => 0.0,
            Drift::Polynomial(h) => h.eval(xi),
        }
    }

    /// `ℰ(ξ) = ⟨A(ξ)ξ, ξ⟩`.
    pub fn energy(&self, xi: &[f64]) -> f64 {
        let m = xi.len();
        let mut a = vec![0.0; m * m];
        self.diffusion_into(xi, &mut a);
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                acc += a[i * m + j] * xi[i] * xi[j];
            }
        }
        acc
    }

    /// `−Tr(A(ξ)X) + H(ξ)` for symmetric row-major `X`, with the zero-gradient rule.
    pub fn apply(&self, xi: &[f64], x: &[f64]) -> Evaluation {
        let m = xi.len();
        if self.is_degenerate(xi) {
            return Evaluation { value: self.drift(xi), degenerate: true };
        }
        let mut a = vec![0.0; m * m];
        self.diffusion_into(xi, &mut a);
        let tr: f64 = a.iter().zip(x).map(|(p, q)| p * q).sum();
        Evaluation { value: -tr + self.drift(xi), degenerate: false }
    }

    /// `∂_k A_ij(ξ)` as `out[(k*m + i)*m + j]`.
    pub fn d_diffusion(&self, xi: &[f64]) -> Vec<f64> {
        let m = xi.len();
        let mut out = vec![0.0; m * m * m];
        let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        match &self.diffusion {
            Diffusion::Identity => {}
            Diffusion::Infinity => {
                for k in 0..m {
                    for i in 0..m {
                        for j in 0..m {
                            out[(k * m + i) * m + j] = delta(i, k) * xi[j] + xi[i] * delta(j, k);
                        }
                    }
                }
            }
            Diffusion::NormalizedP(p) => {
                let s: f64 = xi.iter().map(|v| v * v).sum();
                if s > 0.0 {
                    for k in 0..m {
                        for i in 0..m {
                            for j in 0..m {
                                let v = (delta(i, k) * xi[j] + xi[i] * delta(j, k)) / s
                                    - 2.0 * xi[i] * xi[j] * xi[k] / (s * s);
                                out[(k * m + i) * m + j] = (p - 2.0) * v;
                            }
                        }
                    }
                }
            }
            Diffusion::Polynomial(_) => {
                let mut xp = xi.to_vec();
                let mut ap = vec![0.0; m * m];
                let mut am = vec![0.0; m * m];
                for k in 0..m {
                    xp[k] = xi[k] + XI_FD_STEP;
                    self.diffusion_into(&xp, &mut ap);
                    xp[k] = xi[k] - XI_FD_STEP;
                    self.diffusion_into(&xp, &mut am);
                    xp[k] = xi[k];
                    for e in 0..m * m {
                        out[k * m * m + e] = (ap[e] - am[e]) / (2.0 * XI_FD_STEP);
                    }
                }
            }
        }
        out
    }

    /// `∇_ξ H(ξ)` by central differences.
    pub fn d_drift(&self, xi: &[f64]) -> Vec<f64> {
        let m = xi.len();
        match &self.drift {
            Drift::Zero => vec![0.0; m],
            Drift::Polynomial(_) => {
                let mut xp = xi.to_vec();
                (0..m)
                    .map(|k| {
                        xp[k] = xi[k] + XI_FD_STEP;
                        let hp = self.drift(&xp);
                        xp[k] = xi[k] - XI_FD_STEP;
                        let hm = self.drift(&xp);
                        xp[k] = xi[k];
                        (hp - hm) / (2.0 * XI_FD_STEP)
                    })
                    .collect()
            }
        }
    }

    /// Smallest `ℰ` on the unit sphere of `ℝᵐ`; scales the solver's
    /// zero-gradient surrogate.
    pub fn unit_energy_floor(&self, m: usize) -> f64 {
        match &self.diffusion {
            Diffusion::Identity | Diffusion::Infinity => 1.0,
            Diffusion::NormalizedP(p) => p - 1.0,
            Diffusion::Polynomial(_) => min_energy_on_sphere(self, m, 1.0),
        }
    }
}

/// `m×m` matrix from a row-major buffer.
pub(crate) fn mat(m: usize, buf: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(m, m, buf)
}
