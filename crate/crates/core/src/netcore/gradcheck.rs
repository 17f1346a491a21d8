//! Central finite differences, used to check analytic gradients.

/// Default step for central differences at 64-bit precision.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Estimates `∂f/∂x_i` for every coordinate of `x` by central differences.
/// `x` is restored before returning.
pub fn central_difference(x: &mut [f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let plus = f(x);
        x[i] = orig - h;
        let minus = f(x);
        x[i] = orig;
        grad.push((plus - minus) / (2.0 * h));
    }
    grad
}

/// `|a − b| / max(|a|, |b|, floor)`; the floor keeps near-zero gradients from
/// producing huge ratios out of rounding noise.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Largest relative error across two gradient vectors.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n, floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let mut x = vec![1.0, -2.0, 0.5];
        let g = central_difference(&mut x, DEFAULT_STEP, |v| v.iter().map(|a| a * a).sum());
        for (gi, xi) in g.iter().zip(&x) {
            assert!((gi - 2.0 * xi).abs() < 1e-8);
        }
        assert_eq!(x, vec![1.0, -2.0, 0.5]);
    }
}
