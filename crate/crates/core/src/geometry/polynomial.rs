//! Sparse multivariate polynomials with exact differentiation.
//!
//! These back the preset coefficient matrices and user systems read from
//! scenario files, and make the bracket tower symbolic for polynomial fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    dim: usize,
    terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn zero(dim: usize) -> Self {
        Self { dim, terms: Vec::new() }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::from_terms(dim, vec![Monomial { coeff: c, powers: vec![0; dim] }])
            .expect("constant has matching arity")
    }

    /// The coordinate function `x_k`.
    pub fn var(dim: usize, k: usize) -> Self {
        let mut powers = vec![0; dim];
        powers[k] = 1;
        Self::from_terms(dim, vec![Monomial { coeff: 1.0, powers }]).expect("arity")
    }

    pub fn from_terms(dim: usize, terms: Vec<Monomial>) -> Result<Self> {
        for t in &terms {
            if t.powers.len() != dim {
                return Err(Error::Dimension { expected: dim, got: t.powers.len() });
            }
            if !t.coeff.is_finite() {
                return Err(Error::Config("polynomial coefficient is not finite".into()));
            }
        }
        let mut p = Self { dim, terms };
        p.normalize();
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|t| t.powers.iter().sum::<u32>()).max().unwrap_or(0)
    }

    fn normalize(&mut self) {
        self.terms.sort_by(|a, b| a.powers.cmp(&b.powers));
        let mut merged: Vec<Monomial> = Vec::with_capacity(self.terms.len());
        for t in self.terms.drain(..) {
            match merged.last_mut() {
                Some(last) if last.powers == t.powers => last.coeff += t.coeff,
                _ => merged.push(t),
            }
        }
        merged.retain(|t| t.coeff != 0.0);
        self.terms = merged;
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let mut acc = 0.0;
        for t in &self.terms {
            let mut v = t.coeff;
            for (xi, &p) in x.iter().zip(&t.powers) {
                if p > 0 {
                    v *= xi.powi(p as i32);
                }
            }
            acc += v;
        }
        acc
    }

    pub fn derivative(&self, k: usize) -> Self {
        let terms = self
            .terms
            .iter()
            .filter(|t| t.powers[k] > 0)
            .map(|t| {
                let mut powers = t.powers.clone();
                let p = powers[k];
                powers[k] -= 1;
                Monomial { coeff: t.coeff * p as f64, powers }
            })
            .collect();
        let mut out = Self { dim: self.dim, terms };
        out.normalize();
        out
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = Self {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|t| Monomial { coeff: t.coeff * c, powers: t.powers.clone() })
                .collect(),
        };
        out.normalize();
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        let mut out = Self { dim: self.dim, terms };
        out.normalize();
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                terms.push(Monomial {
                    coeff: a.coeff * b.coeff,
                    powers: a.powers.iter().zip(&b.powers).map(|(p, q)| p + q).collect(),
                });
            }
        }
        let mut out = Self { dim: self.dim, terms };
        out.normalize();
        out
    }
}

/// Polynomial vector field, one polynomial per ambient coordinate.
pub type PolyField = Vec<Polynomial>;

/// `[X, Y] = DY·X − DX·Y` for polynomial fields.
pub fn poly_bracket(x: &PolyField, y: &PolyField) -> PolyField {
    let n = x.len();
    (0..n)
        .map(|k| {
            let mut acc = Polynomial::zero(n);
            for l in 0..n {
                acc = acc.add(&y[k].derivative(l).mul(&x[l]));
                acc = acc.sub(&x[k].derivative(l).mul(&y[l]));
            }
            acc
        })
        .collect()
}
