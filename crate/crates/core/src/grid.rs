//! Uniform Cartesian lattices over box domains and the scalar fields sampled on them.
//!
//! Nodes are stored row-major with the last axis varying fastest. A node is on the
//! *rim* when any of its indices is at the first or last position of its axis.

use crate::error::{Error, Result};

/// Axis-aligned box `[lower, upper]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(u > l)) {
            return Err(Error::Config(format!(
                "box bounds must satisfy lower < upper, got {lower:?} / {upper:?}"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Membership with an absolute slack proportional to the box size.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| {
                let slack = 1e-12 * (u - l);
                v.is_finite() && *v >= l - slack && *v <= u + slack
            })
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    pub fn min_edge(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Uniform lattice over a box with `counts[k] >= 2` nodes on axis `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    domain: BoxDomain,
    counts: Vec<usize>,
    strides: Vec<usize>,
    spacing: Vec<f64>,
}

impl Grid {
    pub fn new(domain: BoxDomain, counts: Vec<usize>) -> Result<Self> {
        if counts.len() != domain.dim() {
            return Err(Error::Dimension {
                expected: domain.dim(),
                got: counts.len(),
            });
        }
        if counts.iter().any(|&c| c < 2) {
            return Err(Error::Config("every axis needs at least 2 nodes".into()));
        }
        let mut strides = vec![1; counts.len()];
        for k in (0..counts.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * counts[k + 1];
        }
        let spacing = (0..counts.len())
            .map(|k| (domain.upper[k] - domain.lower[k]) / (counts[k] - 1) as f64)
            .collect();
        Ok(Self {
            domain,
            counts,
            strides,
            spacing,
        })
    }

    /// `count` nodes per axis on `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64, count: usize) -> Result<Self> {
        Self::new(BoxDomain::cube(dim, lo, hi)?, vec![count; dim])
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn lower(&self) -> &[f64] {
        &self.domain.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.domain.upper
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(0.0, f64::max)
    }

    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        self.multi_index_into(node, &mut out);
        out
    }

    pub fn multi_index_into(&self, mut node: usize, out: &mut [usize]) {
        for (k, s) in self.strides.iter().enumerate() {
            out[k] = node / s;
            node %= s;
        }
    }

    pub fn node(&self, index: &[usize]) -> usize {
        index.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.coords_into(node, &mut out);
        out
    }

    pub fn coords_into(&self, mut node: usize, out: &mut [f64]) {
        for k in 0..self.dim() {
            let i = node / self.strides[k];
            node %= self.strides[k];
            out[k] = self.axis_coord(k, i);
        }
    }

    pub fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        if i + 1 == self.counts[axis] {
            self.domain.upper[axis]
        } else {
            self.domain.lower[axis] + i as f64 * self.spacing[axis]
        }
    }

    pub fn is_rim(&self, node: usize) -> bool {
        let mut rest = node;
        for k in 0..self.dim() {
            let i = rest / self.strides[k];
            rest %= self.strides[k];
            if i == 0 || i + 1 == self.counts[k] {
                return true;
            }
        }
        false
    }

    pub fn rim_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&n| self.is_rim(n)).collect()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&n| !self.is_rim(n)).collect()
    }

    /// Mask that is `true` off the rim.
    pub fn interior_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|n| !self.is_rim(n)).collect()
    }

    /// Node displaced by the integer offset, if it stays on the lattice.
    pub fn offset(&self, node: usize, delta: &[isize]) -> Option<usize> {
        let mut rest = node;
        let mut out = 0usize;
        for k in 0..self.dim() {
            let i = (rest / self.strides[k]) as isize;
            rest %= self.strides[k];
            let j = i + delta[k];
            if j < 0 || j >= self.counts[k] as isize {
                return None;
            }
            out += j as usize * self.strides[k];
        }
        Some(out)
    }

    /// Closest lattice node, clamping coordinates into the box.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let mut node = 0;
        for k in 0..self.dim() {
            let r = ((x[k] - self.domain.lower[k]) / self.spacing[k]).round();
            let i = r.clamp(0.0, (self.counts[k] - 1) as f64) as usize;
            node += i * self.strides[k];
        }
        node
    }

    /// Inclusive index range of nodes whose coordinate on `axis` lies in `[lo, hi]`.
    pub fn index_range(&self, axis: usize, lo: f64, hi: f64) -> Option<(usize, usize)> {
        let h = self.spacing[axis];
        let base = self.domain.lower[axis];
        let last = (self.counts[axis] - 1) as f64;
        let a = ((lo - base) / h - 1e-9).ceil().max(0.0);
        let b = ((hi - base) / h + 1e-9).floor().min(last);
        if a > b {
            None
        } else {
            Some((a as usize, b as usize))
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.domain.contains(x)
    }

    /// Multilinear interpolation of nodal `values` at `x`; `None` outside the box.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> Option<f64> {
        if !self.contains(x) {
            return None;
        }
        let d = self.dim();
        let mut base = 0usize;
        let mut frac = [0.0f64; 8];
        let mut step = [0usize; 8];
        assert!(d <= 8, "interpolation supports up to 8 dimensions");
        for k in 0..d {
            let t = ((x[k] - self.domain.lower[k]) / self.spacing[k])
                .clamp(0.0, (self.counts[k] - 1) as f64);
            let mut i = t.floor() as usize;
            if i + 1 >= self.counts[k] {
                i = self.counts[k] - 2;
            }
            frac[k] = t - i as f64;
            step[k] = self.strides[k];
            base += i * self.strides[k];
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut node = base;
            for k in 0..d {
                if corner >> k & 1 == 1 {
                    w *= frac[k];
                    node += step[k];
                } else {
                    w *= 1.0 - frac[k];
                }
            }
            if w != 0.0 {
                acc += w * values[node];
            }
        }
        Some(acc)
    }
}

/// Scalar field sampled on a [`Grid`] together with an interior mask.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl GridFunction {
    /// Field with the default mask (every node off the rim).
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        let mask = grid.interior_mask();
        Self::with_mask(grid, values, mask)
    }

    pub fn with_mask(grid: Grid, values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if mask.len() != grid.len() {
            return Err(Error::Dimension {
                expected: grid.len(),
                got: mask.len(),
            });
        }
        Ok(Self { grid, values, mask })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut x = vec![0.0; grid.dim()];
        let values = (0..grid.len())
            .map(|n| {
                grid.coords_into(n, &mut x);
                f(&x)
            })
            .collect();
        let mask = grid.interior_mask();
        Self { grid, values, mask }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        let values = vec![c; grid.len()];
        let mask = grid.interior_mask();
        Self { grid, values, mask }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value(&self, node: usize) -> f64 {
        self.values[node]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn set_mask(&mut self, mask: Vec<bool>) -> Result<()> {
        if mask.len() != self.grid.len() {
            return Err(Error::Dimension {
                expected: self.grid.len(),
                got: mask.len(),
            });
        }
        self.mask = mask;
        Ok(())
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
            mask: self.mask.clone(),
        }
    }

    /// Pointwise combination; the mask of `self` is kept.
    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            mask: self.mask.clone(),
        })
    }

    pub fn interpolate(&self, x: &[f64]) -> Option<f64> {
        self.grid.interpolate(&self.values, x)
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.grid == other.grid
    }
}
