use super::{ordered, DistanceOracle, OracleKind};

/// Korányi gauge `N(x, y, t) = ((x² + y²)² + 16t²)^{1/4}`.
pub fn koranyi_gauge(g: &[f64]) -> f64 {
    let r2 = g[0] * g[0] + g[1] * g[1];
    (r2 * r2 + 16.0 * g[2] * g[2]).sqrt().sqrt()
}

/// `y⁻¹·x` for the law `p·q = (p₁+q₁, p₂+q₂, p₃+q₃ + ½(p₁q₂ − p₂q₁))`, under
/// which `∂x − (y/2)∂t` and `∂y + (x/2)∂t` are left-invariant.
fn left_quotient(x: &[f64], y: &[f64]) -> [f64; 3] {
    [x[0] - y[0], x[1] - y[1], x[2] - y[2] + 0.5 * (y[1] * x[0] - y[0] * x[1])]
}

/// `N(y⁻¹·x)`, evaluated on the lexicographically ordered pair.
pub fn gauge_distance_heisenberg(x: &[f64], y: &[f64]) -> f64 {
    let (a, b) = ordered(x, y);
    koranyi_gauge(&left_quotient(a, b))
}

/// Gauge oracle for the first Heisenberg group. The Korányi gauge with this
/// group law is a genuine metric, so the triangle constant is 1.
#[derive(Clone, Copy, Debug, Default)]
pub struct HeisenbergGauge;

impl DistanceOracle for HeisenbergGauge {
    fn kind(&self) -> OracleKind {
        OracleKind::Gauge
    }
    fn dim(&self) -> usize {
        3
    }
    fn name(&self) -> String {
        "gauge:heisenberg1".into()
    }
    fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        gauge_distance_heisenberg(x, y)
    }
    fn distance_squared(&self, x: &[f64], y: &[f64]) -> f64 {
        let (a, b) = ordered(x, y);
        let g = left_quotient(a, b);
        let r2 = g[0] * g[0] + g[1] * g[1];
        (r2 * r2 + 16.0 * g[2] * g[2]).sqrt()
    }
    /// `y = x·g⁻¹` with `|g₁|, |g₂| ≤ r`, `|g₃| ≤ r²/4`.
    fn ball_box(&self, x: &[f64], r: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let r = r * (1.0 + 1e-9) + 1e-12;
        let w = r * r / 4.0 + 0.5 * (x[0].abs() + x[1].abs()) * r;
        Some((vec![x[0] - r, x[1] - r, x[2] - w], vec![x[0] + r, x[1] + r, x[2] + w]))
    }
    fn box_lower_bound(&self, x: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
        // y⁻¹·x is affine in y, so each component ranges over an interval
        let gap = |a: f64, b: f64| if a > 0.0 { a } else if b < 0.0 { -b } else { 0.0 };
        let m1 = gap(x[0] - hi[0], x[0] - lo[0]);
        let m2 = gap(x[1] - hi[1], x[1] - lo[1]);
        // g₃ = x₃ − y₃ + ½(x₁y₂ − x₂y₁)
        let mut a = x[2] - hi[2];
        let mut b = x[2] - lo[2];
        for (c, l, h) in [(0.5 * x[0], lo[1], hi[1]), (-0.5 * x[1], lo[0], hi[0])] {
            let (p, q) = (c * l, c * h);
            a += p.min(q);
            b += p.max(q);
        }
        let m3 = gap(a, b);
        koranyi_gauge(&[m1, m2, m3]) * (1.0 - 1e-12)
    }
    fn triangle_constant(&self) -> f64 {
        1.0
    }
}

/// Euclidean distance in `ℝⁿ`.
#[derive(Clone, Copy, Debug)]
pub struct EuclideanGauge {
    pub n: usize,
}

impl DistanceOracle for EuclideanGauge {
    fn kind(&self) -> OracleKind {
        OracleKind::Gauge
    }
    fn dim(&self) -> usize {
        self.n
    }
    fn name(&self) -> String {
        format!("gauge:euclidean:{}", self.n)
    }
    fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        self.distance_squared(x, y).sqrt()
    }
    fn distance_squared(&self, x: &[f64], y: &[f64]) -> f64 {
        let (a, b) = ordered(x, y);
        a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
    }
    fn ball_box(&self, x: &[f64], r: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let r = r * (1.0 + 1e-9) + 1e-12;
        Some((x.iter().map(|v| v - r).collect(), x.iter().map(|v| v + r).collect()))
    }
    fn box_lower_bound(&self, x: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
        let s: f64 = (0..self.n)
            .map(|k| {
                let g = (lo[k] - x[k]).max(x[k] - hi[k]).max(0.0);
                g * g
            })
            .sum();
        s.sqrt() * (1.0 - 1e-12)
    }
    fn triangle_constant(&self) -> f64 {
        1.0
    }
}
