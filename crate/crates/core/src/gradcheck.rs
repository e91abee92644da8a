//! Finite-difference helpers for verifying analytic gradients.
//!
//! These evaluate only forward passes, so they stay independent of the
//! reverse-mode path they are used to check.

/// Central-difference gradient of a scalar function at `point`, one coordinate
/// at a time: `(f(x + h e_k) - f(x - h e_k)) / (2h)`.
pub fn central_difference<F>(point: &[f64], h: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut grad = vec![0.0; point.len()];
    let mut probe = point.to_vec();
    for k in 0..point.len() {
        let saved = probe[k];
        probe[k] = saved + h;
        let plus = f(&probe);
        probe[k] = saved - h;
        let minus = f(&probe);
        probe[k] = saved;
        grad[k] = (plus - minus) / (2.0 * h);
    }
    grad
}

/// Relative error with an absolute floor so near-zero pairs compare sanely.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-8 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn differentiates_simple_polynomials() {
        let g = central_difference(&[2.0, 3.0], 1e-5, |x| x[0] * x[0] + 4.0 * x[1]);
        assert!(relative_error(g[0], 4.0) < 1e-8);
        assert!(relative_error(g[1], 4.0) < 1e-8);
    }

    #[test]
    fn relative_error_floors_near_zero() {
        assert!(relative_error(1e-12, 0.0) < 1e-8);
        assert!(relative_error(2.0, 1.0) == 0.5);
    }
}
