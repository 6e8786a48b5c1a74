use super::Real;

/// `|a − n| / max(1e-8, |a| + |n|)`
#[inline]
pub fn relative_error(analytic: Real, numeric: Real) -> Real {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares an analytic gradient against central differences of a scalar
/// function and returns the largest per-coordinate [`relative_error`].
///
/// Non-differentiable points (ReLU at 0, max ties) are the caller's
/// responsibility: pick inputs at least `h` away from them.
pub fn grad_check(
    mut f: impl FnMut(&[Real]) -> Real,
    x: &[Real],
    analytic: &[Real],
    h: Real,
) -> Real {
    assert_eq!(x.len(), analytic.len(), "gradient length mismatch");
    let mut probe = x.to_vec();
    let mut worst: Real = 0.0;
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_correct_and_flipped_gradients() {
        let f = |x: &[Real]| x[0] * x[0] + 3.0 * x[1];
        let x = [0.7, -1.2];
        let good = [1.4, 3.0];
        assert!(grad_check(f, &x, &good, 1e-5) < 1e-9);
        let flipped = [-1.4, -3.0];
        // the metric saturates at 1 when the sign is wrong
        assert!((grad_check(f, &x, &flipped, 1e-5) - 1.0).abs() < 1e-9);
    }
}
