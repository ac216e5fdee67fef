use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::jet::{horizontal_jet, HorizontalJet};
use super::{mat, QuasilinearOperator};
use crate::error::{Error, Result};
use crate::functions::{Composed, ScalarProfile, SmoothFunction};
use crate::geometry::VectorFieldSystem;

/// Coefficients of the linearization `v ↦ −Tr(P 𝔛*𝔛v) + ⟨b, 𝔛v⟩` at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct Linearization {
    /// `P = A(𝔛u(x₀))`.
    pub second_order: DMatrix<f64>,
    /// `b_k = −⟨∂_kA(𝔛u(x₀)), 𝔛*𝔛u(x₀)⟩_F + ∂_kH(𝔛u(x₀))`.
    pub first_order: DVector<f64>,
    pub jet: HorizontalJet,
}

impl Linearization {
    /// The linearized operator applied to the jet of `v`.
    pub fn apply(&self, v: &HorizontalJet) -> f64 {
        -self.second_order.component_mul(&v.hess).sum() + self.first_order.dot(&v.grad)
    }
}

/// Linearization of `ℒ` at `u`, `x`. Fails at a vanishing horizontal gradient
/// for operators whose value there is only a convention.
pub fn linearize_at(
    op: &QuasilinearOperator,
    sys: &VectorFieldSystem,
    u: &dyn SmoothFunction,
    x: &[f64],
) -> Result<Linearization> {
    let m = sys.fields();
    op.check_dim(m)?;
    let jet = horizontal_jet(sys, u, x)?;
    let xi = jet.grad_slice().to_vec();
    if op.is_degenerate(&xi) {
        return Err(Error::NonDifferentiable);
    }
    let second_order = op.diffusion(&xi);
    let da = op.d_diffusion(&xi);
    let dh = op.d_drift(&xi);
    let first_order = DVector::from_fn(m, |k, _| {
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                acc += da[(k * m + i) * m + j] * jet.hess[(i, j)];
            }
        }
        -acc + dh[k]
    });
    Ok(Linearization { second_order, first_order, jet })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StructureViolation {
    pub check: String,
    pub sample: usize,
    /// Positive amount by which the inequality fails.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StructureReport {
    pub operator: String,
    pub profile: String,
    pub samples: usize,
    pub violations: Vec<StructureViolation>,
    /// Largest `lhs − rhs` seen per check (≤ 0 means satisfied).
    pub worst_margins: BTreeMap<String, f64>,
}

impl StructureReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn random_unit<R: Rng>(rng: &mut R, m: usize) -> Vec<f64> {
    loop {
        // Box–Muller normals give a uniform direction after normalising
        let v: Vec<f64> = (0..m)
            .map(|_| {
                let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.gen();
                (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
            })
            .collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return v.into_iter().map(|a| a / norm).collect();
        }
    }
}

fn trace_prod(a: &[f64], x: &[f64]) -> f64 {
    a.iter().zip(x).map(|(p, q)| p * q).sum()
}

/// Samples `(t, ξ, X)` with `t ∈ t_range` (`t ≥ 1`), `|ξ| ∈ xi_range`, and
/// `X` symmetric with entries in `[−1, 1]`, and records every failure of
/// symmetry / PSD of `A`, strict ellipticity, and both scaling inequalities.
pub fn check_structure(
    op: &QuasilinearOperator,
    m: usize,
    samples: usize,
    t_range: (f64, f64),
    xi_range: (f64, f64),
    seed: u64,
) -> Result<StructureReport> {
    op.check_dim(m)?;
    if samples < 100 {
        return Err(Error::Config(format!("structure check needs at least 100 samples, got {samples}")));
    }
    let (t_lo, t_hi) = t_range;
    if !(t_lo >= 1.0 && t_hi >= t_lo) {
        return Err(Error::Config(format!("t range must satisfy 1 <= lo <= hi, got {t_range:?}")));
    }
    let (r_lo, r_hi) = xi_range;
    if !(r_lo > 0.0 && r_hi >= r_lo) {
        return Err(Error::Config(format!("xi range must satisfy 0 < lo <= hi, got {xi_range:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = Vec::new();
    let mut worst: BTreeMap<String, f64> = BTreeMap::new();
    let mut note = |check: &str, sample: usize, lhs: f64, rhs: f64, violations: &mut Vec<StructureViolation>| {
        let d = lhs - rhs;
        let w = worst.entry(check.to_string()).or_insert(f64::NEG_INFINITY);
        *w = w.max(d);
        if d > 1e-12 * (1.0 + lhs.abs() + rhs.abs()) {
            violations.push(StructureViolation { check: check.to_string(), sample, margin: d });
        }
    };
    let mut a = vec![0.0; m * m];
    let mut at = vec![0.0; m * m];
    for s in 0..samples {
        let t = if t_hi > t_lo { rng.gen_range(t_lo..=t_hi) } else { t_lo };
        let r = if r_hi > r_lo { rng.gen_range(r_lo..=r_hi) } else { r_lo };
        let xi: Vec<f64> = random_unit(&mut rng, m).into_iter().map(|v| v * r).collect();
        let txi: Vec<f64> = xi.iter().map(|v| v * t).collect();
        let mut x = vec![0.0; m * m];
        for i in 0..m {
            for j in i..m {
                let v = rng.gen_range(-1.0..=1.0);
                x[i * m + j] = v;
                x[j * m + i] = v;
            }
        }
        op.diffusion_into(&xi, &mut a);
        op.diffusion_into(&txi, &mut at);

        let mut asym: f64 = 0.0;
        let scale = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        for i in 0..m {
            for j in 0..m {
                asym = asym.max((a[i * m + j] - a[j * m + i]).abs());
            }
        }
        note("symmetry", s, asym, 1e-12 * (1.0 + scale), &mut violations);
        let sym = mat(m, &a).symmetric_part();
        let min_eig = SymmetricEigen::new(sym).eigenvalues.min();
        note("psd", s, -min_eig, 1e-10, &mut violations);
        let e = op.energy(&xi);
        note("ellipticity", s, -e, 0.0, &mut violations);
        if e == 0.0 {
            violations.push(StructureViolation { check: "ellipticity".into(), sample: s, margin: 0.0 });
        }

        let phi = op.phi(1.0 / t);
        let lhs = -trace_prod(&at, &x);
        let rhs = -trace_prod(&a, &x) / (t * phi);
        note("diffusion-scaling", s, lhs, rhs, &mut violations);

        let xx: Vec<f64> = (0..m * m).map(|k| xi[k / m] * xi[k % m]).collect();
        let lhs = -trace_prod(&at, &xx);
        let rhs = -trace_prod(&a, &xx) / (t * phi);
        note("energy-scaling", s, lhs, rhs, &mut violations);

        let lhs = op.drift(&txi);
        let rhs = op.drift(&xi) / phi;
        note("drift-scaling", s, lhs, rhs, &mut violations);
    }
    Ok(StructureReport {
        operator: op.name.clone(),
        profile: op.profile.to_string(),
        samples,
        violations,
        worst_margins: worst,
    })
}

/// `min ℰ(ζ)` over a dense sample of the sphere `|ζ| = θ` in `ℝᵐ`.
pub fn min_energy_on_sphere(op: &QuasilinearOperator, m: usize, theta: f64) -> f64 {
    let mut best = f64::INFINITY;
    let mut eval = |u: &[f64]| {
        let z: Vec<f64> = u.iter().map(|v| v * theta).collect();
        best = best.min(op.energy(&z));
    };
    match m {
        0 => return 0.0,
        1 => {
            eval(&[1.0]);
            eval(&[-1.0]);
        }
        2 => {
            let k = 4096;
            for i in 0..k {
                let a = 2.0 * PI * i as f64 / k as f64;
                eval(&[a.cos(), a.sin()]);
            }
        }
        _ => {
            for i in 0..m {
                for sgn in [1.0, -1.0] {
                    let mut e = vec![0.0; m];
                    e[i] = sgn;
                    eval(&e);
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            for _ in 0..20_000 {
                let u = random_unit(&mut rng, m);
                eval(&u);
            }
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthReport {
    pub theta: f64,
    pub a_theta: f64,
    /// Smallest `(ℰ(ξ) − bound)/max(1, bound)` over accepted samples.
    pub worst_margin: f64,
    pub checked: usize,
    /// Indices of samples with `|ξ| < θ`, which the bound does not cover.
    pub rejected: Vec<usize>,
}

impl GrowthReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.rejected.is_empty() && self.worst_margin >= -tol
    }
}

/// Checks `ℰ(ξ) ≥ |ξ| a_θ / (θ φ(θ/|ξ|))` for `|ξ| ≥ θ`, with
/// `a_θ = min_{|ζ| = θ} ℰ(ζ)`.
pub fn growth_lower_bound(op: &QuasilinearOperator, theta: f64, xi_samples: &[Vec<f64>]) -> Result<GrowthReport> {
    if !(theta > 0.0) {
        return Err(Error::Config(format!("theta must be positive, got {theta}")));
    }
    let Some(m) = xi_samples.first().map(|v| v.len()) else {
        return Err(Error::Degenerate("no samples".into()));
    };
    op.check_dim(m)?;
    let a_theta = min_energy_on_sphere(op, m, theta);
    let mut worst = f64::INFINITY;
    let mut rejected = Vec::new();
    let mut checked = 0;
    for (i, xi) in xi_samples.iter().enumerate() {
        if xi.len() != m {
            return Err(Error::Dimension { expected: m, got: xi.len() });
        }
        let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r < theta {
            rejected.push(i);
            continue;
        }
        let bound = r * a_theta / (theta * op.phi(theta / r));
        let margin = (op.energy(xi) - bound) / bound.abs().max(1.0);
        worst = worst.min(margin);
        checked += 1;
    }
    Ok(GrowthReport { theta, a_theta, worst_margin: worst, checked, rejected })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainRuleProbe {
    /// `ℒ(h∘ω)(x₀)`.
    pub lhs: f64,
    /// `(1/φ(1/h'))[ℒω(x₀) − (h''/h')ℰ(𝔛ω(x₀))]`.
    pub rhs: f64,
    /// `rhs + 1e−9 − lhs`; the bound holds iff this is nonnegative.
    pub margin: f64,
}

impl ChainRuleProbe {
    pub fn holds(&self) -> bool {
        self.margin >= 0.0
    }
}

/// Evaluates both sides of the composition bound for `h∘ω` at `x0`.
/// Requires `h'(ω(x0)) ≥ 1` and `h''(ω(x0)) ≥ 0`.
pub fn chain_rule_bound_probe(
    op: &QuasilinearOperator,
    sys: &VectorFieldSystem,
    omega: std::sync::Arc<dyn SmoothFunction>,
    profile: std::sync::Arc<dyn ScalarProfile>,
    x0: &[f64],
) -> Result<ChainRuleProbe> {
    op.check_dim(sys.fields())?;
    let w = omega.value(x0);
    let (d1, d2) = (profile.d1(w), profile.d2(w));
    if !(d1 >= 1.0 && d2 >= 0.0) {
        return Err(Error::Config(format!("profile needs h' >= 1 and h'' >= 0 at the point, got h' = {d1}, h'' = {d2}")));
    }
    let composed = Composed { inner: omega.clone(), profile };
    let jl = horizontal_jet(sys, &composed, x0)?;
    let lhs = op.apply(jl.grad_slice(), &jl.hess_row_major()).value;
    let jw = horizontal_jet(sys, omega.as_ref(), x0)?;
    let lw = op.apply(jw.grad_slice(), &jw.hess_row_major()).value;
    let rhs = (lw - d2 / d1 * op.energy(jw.grad_slice())) / op.phi(1.0 / d1);
    Ok(ChainRuleProbe { lhs, rhs, margin: rhs + 1e-9 - lhs })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerturbationProbe {
    /// `|ℒw_p(x) − ℒw(x)|` with `w_p = w + ⟨p, ·⟩`.
    pub deviation: f64,
    pub bound: f64,
    pub omega_a: f64,
    pub omega_h: f64,
    /// Constant multiplying the bracket, `max(1, c_M)`.
    pub c: f64,
    pub margin: f64,
}

impl PerturbationProbe {
    pub fn holds(&self) -> bool {
        self.margin >= 0.0
    }
}

const MODULUS_PAIRS: usize = 1000;
const MODULUS_SAFETY: f64 = 1.5;

/// Compares `|ℒw_p(x) − ℒw(x)|` with
/// `c[ω_A(|p|)(|𝔛*𝔛w| + |p|) + |A(𝔛w)||p| + ω_H(|p|)]`.
///
/// The moduli are sampled over pairs within distance `max(1, ‖σ(x)‖)|p|` of
/// `𝔛w(x)`, always including the pair `(𝔛w, 𝔛w_p)`, and inflated by 1.5.
/// Norms are Frobenius.
pub fn linear_perturbation_bound_probe(
    op: &QuasilinearOperator,
    sys: &VectorFieldSystem,
    w: &dyn SmoothFunction,
    p: &[f64],
    x: &[f64],
    seed: u64,
) -> Result<PerturbationProbe> {
    let (n, m) = (sys.dim(), sys.fields());
    op.check_dim(m)?;
    if p.len() != n {
        return Err(Error::Dimension { expected: n, got: p.len() });
    }
    let pn = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    let jet = horizontal_jet(sys, w, x)?;
    let xi = jet.grad_slice().to_vec();
    let hess = jet.hess_row_major();

    let mut s = vec![0.0; n * m];
    let mut ds = vec![0.0; m * n * n];
    sys.sigma_into(x, &mut s);
    sys.dsigma_into(x, &mut ds);
    // M(x, q) is linear in q; its Frobenius norm is bounded by c_M |q|
    let m_of = |q: &[f64]| -> Vec<f64> {
        let zero = vec![0.0; n * n];
        let (_, mm) = super::jet::jet_from_derivatives(n, m, &s, &ds, q, &zero);
        (0..m * m).map(|k| mm[(k / m, k % m)]).collect()
    };
    let mut c_m2 = 0.0;
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        c_m2 += m_of(&e).iter().map(|v| v * v).sum::<f64>();
    }
    let c = c_m2.sqrt().max(1.0);

    let sigma_norm = DMatrix::from_column_slice(n, m, &s).norm();
    let radius = sigma_norm.max(1.0) * pn;
    let xi_p: Vec<f64> = (0..m).map(|i| xi[i] + (0..n).map(|k| s[i * n + k] * p[k]).sum::<f64>()).collect();
    let hess_p: Vec<f64> = {
        let mp = m_of(p);
        hess.iter().zip(&mp).map(|(a, b)| a + b).collect()
    };

    let eval = |g: &[f64], h: &[f64]| op.apply(g, h).value;
    let deviation = (eval(&xi_p, &hess_p) - eval(&xi, &hess)).abs();

    let mut a1 = vec![0.0; m * m];
    let mut a2 = vec![0.0; m * m];
    let mut diff = |u: &[f64], v: &[f64]| -> (f64, f64) {
        op.effective_diffusion_into(u, &mut a1);
        op.effective_diffusion_into(v, &mut a2);
        let da = a1.iter().zip(&a2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let dh = (op.drift(u) - op.drift(v)).abs();
        (da, dh)
    };
    let (mut omega_a, mut omega_h) = diff(&xi, &xi_p);
    if radius > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..MODULUS_PAIRS {
            let u: Vec<f64> = {
                let d = random_unit(&mut rng, m);
                let r = radius * rng.gen::<f64>();
                xi.iter().zip(&d).map(|(a, b)| a + r * b).collect()
            };
            let v: Vec<f64> = {
                let d = random_unit(&mut rng, m);
                let r = radius * rng.gen::<f64>();
                u.iter().zip(&d).map(|(a, b)| a + r * b).collect()
            };
            let (da, dh) = diff(&u, &v);
            omega_a = omega_a.max(da);
            omega_h = omega_h.max(dh);
        }
    }
    omega_a *= MODULUS_SAFETY;
    omega_h *= MODULUS_SAFETY;
    let mut a0 = vec![0.0; m * m];
    op.effective_diffusion_into(&xi, &mut a0);
    let a_norm = a0.iter().map(|v| v * v).sum::<f64>().sqrt();
    let hess_norm = hess.iter().map(|v| v * v).sum::<f64>().sqrt();
    let bound = c * (omega_a * (hess_norm + pn) + a_norm * pn + omega_h);
    Ok(PerturbationProbe { deviation, bound, omega_a, omega_h, c, margin: bound - deviation })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityCase {
    pub point: Vec<f64>,
    pub lambda: f64,
    pub p: Vec<f64>,
    pub chain_rule: ChainRuleProbe,
    pub perturbation: PerturbationProbe,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalitySuite {
    pub cases: Vec<InequalityCase>,
    pub worst_chain_margin: f64,
    pub worst_perturbation_margin: f64,
}

impl InequalitySuite {
    pub fn passed(&self) -> bool {
        self.worst_chain_margin >= 0.0 && self.worst_perturbation_margin >= 0.0
    }
}

/// Runs both inequality probes on `configs` random cases. Each case draws a
/// quadratic `ω` with coefficients in `[−1, 1]`, a point in `[−0.8, 0.8]ⁿ`,
/// the profile `h(s) = s + λ(s − s₀)²` with `λ ∈ [0, 2]` and
/// `s₀ ∈ [ω(x₀) − 0.5, ω(x₀)]`, and a shift `p` with `|p| ≤ 0.1`.
pub fn inequality_suite(
    op: &QuasilinearOperator,
    sys: &VectorFieldSystem,
    configs: usize,
    seed: u64,
) -> Result<InequalitySuite> {
    use crate::functions::QuadraticBump;
    use crate::geometry::polynomial::{Monomial, Polynomial};
    use std::sync::Arc;

    let n = sys.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(configs);
    for _ in 0..configs {
        let mut terms = Vec::new();
        for i in 0..n {
            for j in i..n {
                let mut powers = vec![0u32; n];
                powers[i] += 1;
                powers[j] += 1;
                terms.push(Monomial { coeff: rng.gen_range(-1.0..=1.0), powers });
            }
            let mut powers = vec![0u32; n];
            powers[i] = 1;
            terms.push(Monomial { coeff: rng.gen_range(-1.0..=1.0), powers });
        }
        let omega = Polynomial::from_terms(n, terms)?;
        let point: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.8..=0.8)).collect();
        let lambda = rng.gen_range(0.0..=2.0);
        let base = omega.eval(&point) - rng.gen_range(0.0..=0.5);
        let p: Vec<f64> = random_unit(&mut rng, n).into_iter().map(|v| v * 0.1 * rng.gen::<f64>()).collect();
        let omega: Arc<dyn SmoothFunction> = Arc::new(omega);
        let chain_rule =
            chain_rule_bound_probe(op, sys, omega.clone(), Arc::new(QuadraticBump { lambda, base }), &point)?;
        let perturbation = linear_perturbation_bound_probe(op, sys, omega.as_ref(), &p, &point, rng.gen())?;
        cases.push(InequalityCase { point, lambda, p, chain_rule, perturbation });
    }
    let worst_chain_margin = cases.iter().map(|c| c.chain_rule.margin).fold(f64::INFINITY, f64::min);
    let worst_perturbation_margin = cases.iter().map(|c| c.perturbation.margin).fold(f64::INFINITY, f64::min);
    Ok(InequalitySuite { cases, worst_chain_margin, worst_perturbation_margin })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{IdentityProfile, KoranyiPower, Quadratic, QuadraticBump};
    use crate::geometry::{euclidean, heisenberg1, polynomial::Polynomial};
    use crate::operator::{evaluate_operator, Profile};
    use std::sync::Arc;

    #[test]
    fn sublaplacian_structure_is_exact() {
        let r = check_structure(&QuasilinearOperator::sublaplacian(), 2, 500, (1.0, 10.0), (0.1, 5.0), 1).unwrap();
        assert!(r.passed());
        assert!(r.worst_margins["diffusion-scaling"].abs() < 1e-12);
    }

    #[test]
    fn infinity_needs_cubic_profile() {
        let ok = check_structure(&QuasilinearOperator::infinity(), 2, 500, (1.0, 10.0), (0.1, 5.0), 2).unwrap();
        assert!(ok.passed(), "{:?}", ok.violations.first());
        let wrong = QuasilinearOperator::infinity().with_profile(Profile::Power(1.0));
        let bad = check_structure(&wrong, 2, 500, (1.0, 10.0), (0.1, 5.0), 2).unwrap();
        assert!(bad.violations.iter().any(|v| v.check == "diffusion-scaling"));
    }

    #[test]
    fn inequality_suite_holds_on_the_plane() {
        let s = inequality_suite(&QuasilinearOperator::sublaplacian(), &euclidean(2), 20, 1).unwrap();
        assert_eq!(s.cases.len(), 20);
        assert!(s.passed(), "{} {}", s.worst_chain_margin, s.worst_perturbation_margin);
    }

    #[test]
    fn structure_rejects_small_sample_counts() {
        assert!(check_structure(&QuasilinearOperator::sublaplacian(), 2, 99, (1.0, 2.0), (0.1, 1.0), 0).is_err());
    }

    #[test]
    fn growth_bound_for_presets() {
        let xs: Vec<Vec<f64>> = (0..200).map(|i| {
            let a = i as f64 * 0.1;
            let r = 1.0 + 0.05 * i as f64;
            vec![r * a.cos(), r * a.sin()]
        }).collect();
        for op in [QuasilinearOperator::sublaplacian(), QuasilinearOperator::infinity()] {
            let g = growth_lower_bound(&op, 1.0, &xs).unwrap();
            assert!((g.a_theta - 1.0).abs() < 1e-12);
            assert!(g.passed(1e-12), "{g:?}");
        }
        let g = growth_lower_bound(&QuasilinearOperator::sublaplacian(), 1.0, &[vec![0.5, 0.0]]).unwrap();
        assert_eq!(g.rejected, vec![0]);
        assert!(!g.passed(1e-12));
    }

    #[test]
    fn linearization_of_sublaplacian() {
        let sys = heisenberg1();
        let u = KoranyiPower { p: 1.0 };
        let lin = linearize_at(&QuasilinearOperator::sublaplacian(), &sys, &u, &[0.3, 0.2, 0.1]).unwrap();
        assert_eq!(lin.second_order, DMatrix::identity(2, 2));
        assert_eq!(lin.first_order, DVector::zeros(2));
    }

    #[test]
    fn linearization_of_infinity_at_e1() {
        // u = x on the plane: 𝔛u = e₁, 𝔛*𝔛u = 0
        let sys = euclidean(2);
        let u = Polynomial::var(2, 0);
        let lin = linearize_at(&QuasilinearOperator::infinity(), &sys, &u, &[0.1, 0.2]).unwrap();
        assert_eq!(lin.second_order, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert!(linearize_at(&QuasilinearOperator::infinity(), &sys, &Polynomial::zero(2), &[0.0, 0.0]).is_err());
    }

    #[test]
    fn linearization_is_directionally_consistent() {
        let sys = heisenberg1();
        let op = QuasilinearOperator::normalized_p(3.0).unwrap();
        let (x0, x1, x2) = (Polynomial::var(3, 0), Polynomial::var(3, 1), Polynomial::var(3, 2));
        let u = x0.add(&x1.mul(&x1).scale(0.5)).add(&x0.mul(&x2));
        let v = x1.mul(&x2).sub(&x0.mul(&x0));
        let x = [0.2, -0.3, 0.4];
        let lin = linearize_at(&op, &sys, &u, &x).unwrap();
        let lv = lin.apply(&horizontal_jet(&sys, &v, &x).unwrap());
        let base = evaluate_operator(&op, &sys, &u, &x).unwrap();
        let mut ss = Vec::new();
        let mut errs = Vec::new();
        for k in 2..=5 {
            let s = 10f64.powi(-k);
            let w = u.add(&v.scale(s));
            let q = (evaluate_operator(&op, &sys, &w, &x).unwrap() - base) / s;
            ss.push(s);
            errs.push((q - lv).abs());
        }
        let slope = crate::stats::loglog_slope(&ss, &errs).unwrap();
        assert!(slope >= 0.9, "slope {slope}, errors {errs:?}");
    }

    #[test]
    fn chain_rule_identity_profile_is_tight() {
        let sys = heisenberg1();
        let omega: Arc<dyn SmoothFunction> = Arc::new(Quadratic::half_norm_squared(3));
        let r = chain_rule_bound_probe(&QuasilinearOperator::sublaplacian(), &sys, omega, Arc::new(IdentityProfile), &[0.3, 0.1, 0.2]).unwrap();
        assert_eq!(r.lhs, r.rhs);
        assert!(r.holds());
    }

    #[test]
    fn chain_rule_with_bump_profiles() {
        let sys = euclidean(2);
        let omega: Arc<dyn SmoothFunction> = Arc::new(Quadratic::half_norm_squared(2));
        let r = chain_rule_bound_probe(
            &QuasilinearOperator::sublaplacian(),
            &sys,
            omega.clone(),
            Arc::new(QuadraticBump { lambda: 1.0, base: 0.0 }),
            &[0.5, 0.4],
        )
        .unwrap();
        assert!(r.holds(), "{r:?}");
        for lambda in [0.01, 0.1] {
            let r = chain_rule_bound_probe(
                &QuasilinearOperator::infinity(),
                &sys,
                omega.clone(),
                Arc::new(QuadraticBump { lambda, base: 0.0 }),
                &[0.5, -0.4],
            )
            .unwrap();
            assert!(r.holds(), "{r:?}");
        }
    }

    #[test]
    fn chain_rule_rejects_contracting_profile() {
        let sys = euclidean(2);
        let omega: Arc<dyn SmoothFunction> = Arc::new(Quadratic::half_norm_squared(2));
        let r = chain_rule_bound_probe(&QuasilinearOperator::sublaplacian(), &sys, omega, Arc::new(QuadraticBump { lambda: 1.0, base: 1.0 }), &[0.1, 0.1]);
        assert!(r.is_err());
    }

    #[test]
    fn perturbation_bound_cases() {
        let w = Polynomial::var(2, 0).mul(&Polynomial::var(2, 0)).sub(&Polynomial::var(2, 1).mul(&Polynomial::var(2, 1)));
        let zero = linear_perturbation_bound_probe(&QuasilinearOperator::sublaplacian(), &euclidean(2), &w, &[0.0, 0.0], &[0.3, 0.2], 0).unwrap();
        assert_eq!(zero.deviation, 0.0);
        let lin = linear_perturbation_bound_probe(&QuasilinearOperator::sublaplacian(), &euclidean(2), &w, &[0.06, 0.08], &[0.3, 0.2], 0).unwrap();
        assert_eq!(lin.deviation, 0.0);
        assert!(lin.holds());
        let op = QuasilinearOperator::normalized_p(4.0).unwrap();
        let r = linear_perturbation_bound_probe(&op, &euclidean(2), &w, &[0.06, 0.08], &[0.3, 0.2], 0).unwrap();
        assert!(r.deviation > 0.0 && r.holds(), "{r:?}");
        let w3 = Polynomial::var(3, 0).mul(&Polynomial::var(3, 0)).sub(&Polynomial::var(3, 1).mul(&Polynomial::var(3, 1)));
        let r = linear_perturbation_bound_probe(&QuasilinearOperator::sublaplacian(), &heisenberg1(), &w3, &[0.0, 0.0, 0.1], &[0.3, 0.2, 0.0], 0).unwrap();
        assert!(r.holds(), "{r:?}");
    }
}
