//! Scalar search helper shared by best-response and regret computations.

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Argmax of a unimodal `f` on `[lo, hi]` by golden-section search; the
/// bracket is shrunk below `tol` before the midpoint is returned.
pub(crate) fn golden_section_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    debug_assert!(lo <= hi && tol > 0.0);
    let (mut a, mut b) = (lo, hi);
    if b - a <= tol {
        return 0.5 * (a + b);
    }
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_maximum() {
        let x = golden_section_max(|z| -(z - 1.7).powi(2), 0.0, 10.0, 1e-12);
        assert!((x - 1.7).abs() < 1e-9, "got {x}");
    }

    #[test]
    fn respects_bounds_for_monotone_objective() {
        let x = golden_section_max(|z| z, 0.0, 3.0, 1e-12);
        assert!((x - 3.0).abs() < 1e-9, "got {x}");
    }
}
