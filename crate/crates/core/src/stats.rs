//! Small regression helpers used by the fitted-exponent probes.

/// Least-squares slope of `ys` against `xs`. `None` when fewer than two
/// points or all `xs` coincide.
pub fn slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx <= f64::EPSILON * (1.0 + mx * mx) * n as f64 {
        return None;
    }
    Some(sxy / sxx)
}

/// Slope of `log y` against `log x`, skipping non-positive entries.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .unzip();
    slope(&lx, &ly)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.0).collect();
        assert!((slope(&xs, &ys).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn power_law() {
        let xs = [1e-1, 1e-2, 1e-3];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 5.0 * x.powf(1.5)).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() - 1.5).abs() < 1e-10);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(slope(&[1.0], &[2.0]).is_none());
        assert!(slope(&[1.0, 1.0], &[2.0, 3.0]).is_none());
    }
}
