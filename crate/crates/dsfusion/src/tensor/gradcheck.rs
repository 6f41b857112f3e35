//! Finite-difference gradient verification.
//!
//! The oracle here only ever re-runs *forward* computations, so it stays
//! independent of the reverse-mode implementation it is used to check.

use super::Real;

/// Central-difference gradient of `f` at `x`, component by component.
pub fn finite_diff<F>(f: F, x: &[Real], h: Real) -> Vec<Real>
where
    F: Fn(&[Real]) -> Real,
{
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = f(&probe);
        probe[i] = orig - h;
        let fm = f(&probe);
        probe[i] = orig;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// True when `|a-b| <= abs_floor + rel_tol·max(|a|,|b|)` for every pair.
pub fn grads_close(analytic: &[Real], numeric: &[Real], rel_tol: Real, abs_floor: Real) -> bool {
    max_discrepancy(analytic, numeric, abs_floor) < rel_tol
}

/// Largest relative discrepancy, with an absolute floor masking
/// finite-difference noise on near-zero entries.
pub fn max_discrepancy(analytic: &[Real], numeric: &[Real], abs_floor: Real) -> Real {
    assert_eq!(analytic.len(), numeric.len());
    let mut worst: Real = 0.0;
    for (&a, &n) in analytic.iter().zip(numeric) {
        let diff = (a - n).abs();
        if diff <= abs_floor {
            continue;
        }
        let scale = a.abs().max(n.abs()).max(abs_floor);
        worst = worst.max(diff / scale);
    }
    worst
}

/// Default step size used throughout the tests.
pub const H: Real = 1e-4;
/// Default relative tolerance.
pub const REL_TOL: Real = 1e-3;
/// Default absolute floor under which discrepancies are ignored.
pub const ABS_FLOOR: Real = 1e-6;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let f = |x: &[Real]| x[0] * x[0] + 3.0 * x[1];
        let g = finite_diff(f, &[2.0, -1.0], 1e-5);
        assert!((g[0] - 4.0).abs() < 1e-6);
        assert!((g[1] - 3.0).abs() < 1e-6);
    }
}
