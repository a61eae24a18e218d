//! Central finite differences for checking backward passes.
//!
//! These helpers only ever call the forward function, so they stay
//! independent of the gradient code they are used to verify.

/// `(f(x + h·e_i) − f(x − h·e_i)) / 2h` for each requested index.
pub fn central_differences<F>(mut f: F, x: &[f32], h: f32, indices: &[usize]) -> Vec<f64>
where
    F: FnMut(&[f32]) -> f64,
{
    let mut probe = x.to_vec();
    indices
        .iter()
        .map(|&i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h as f64)
        })
        .collect()
}

/// `|a − n| / max(|a|, |n|, floor)`. The floor keeps near-zero gradients
/// from turning rounding noise into huge relative errors.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Largest relative error over paired gradient entries.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n, floor))
        .fold(0.0, f64::max)
}

/// Norm-wise relative error `‖a − n‖∞ / max(‖a‖∞, ‖n‖∞)`.
///
/// In f32 a central difference carries an absolute rounding error of roughly
/// `ε·|f| / h`, so gradient entries far below the tensor's largest entry
/// cannot be resolved element-wise; the norm-wise measure scales the error
/// by the gradient as a whole.
pub fn normwise_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    let scale = analytic.iter().chain(numeric).map(|v| v.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_derivative() {
        let d = central_differences(
            |v| (v[0] as f64).powi(2) + 3.0 * v[1] as f64,
            &[3.0, 1.0],
            1e-2,
            &[0, 1],
        );
        assert!((d[0] - 6.0).abs() < 1e-3);
        assert!((d[1] - 3.0).abs() < 1e-3);
    }

    #[test]
    fn normwise_error_scales_by_largest_entry() {
        let e = normwise_relative_error(&[1.0, 0.01], &[1.0, 0.011]);
        assert!((e - 0.001).abs() < 1e-12);
        assert_eq!(normwise_relative_error(&[0.0], &[0.0]), 0.0);
    }

    #[test]
    fn relative_error_uses_floor() {
        assert_eq!(relative_error(1e-9, 0.0, 1e-3), 1e-6);
        assert!((relative_error(2.0, 1.0, 1e-3) - 0.5).abs() < 1e-12);
    }
}
