//! Central finite-difference gradient checking.

/// Relative error `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / scale
}

pub const DEFAULT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    /// Coordinate where the worst error occurred.
    pub worst_index: usize,
    pub coordinates: usize,
}

/// Compares `analytic` against central differences of `f` at `point`, over every coordinate.
pub fn gradient_check<Func>(mut f: Func, point: &[f64], analytic: &[f64], eps: f64) -> GradCheck
where
    Func: FnMut(&[f64]) -> f64,
{
    assert!(eps > 0.0, "eps must be positive");
    assert_eq!(point.len(), analytic.len(), "gradient length mismatch");
    let mut x = point.to_vec();
    let mut worst = GradCheck {
        max_relative_error: 0.0,
        worst_index: 0,
        coordinates: point.len(),
    };
    for k in 0..x.len() {
        let orig = x[k];
        x[k] = orig + eps;
        let up = f(&x);
        x[k] = orig - eps;
        let down = f(&x);
        x[k] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let err = relative_error(analytic[k], numeric, DEFAULT_FLOOR);
        if err > worst.max_relative_error {
            worst.max_relative_error = err;
            worst.worst_index = k;
        }
    }
    worst
}
