//! Gauss hypergeometric series `2F1(a, b; c; z)`.

use super::{SeriesPolicy, SeriesResult, SpecFunError};

/// Sums `2F1(a, b; c; z) = sum_n (a)_n (b)_n / ((c)_n n!) z^n` directly.
///
/// Supports `c > 0` and `0 <= z < 1`; each term comes from the previous one
/// through the ratio `(a+n)(b+n) z / ((c+n)(n+1))`. Negative integer `a` or
/// `b` terminates the series exactly. Slow convergence near `z = 1` is
/// reported through the `converged` flag rather than an error.
pub fn hyp_2f1_series(a: f64, b: f64, c: f64, z: f64) -> Result<SeriesResult, SpecFunError> {
    hyp_2f1_series_with(a, b, c, z, &SeriesPolicy::default())
}

pub(crate) fn hyp_2f1_series_with(
    a: f64,
    b: f64,
    c: f64,
    z: f64,
    policy: &SeriesPolicy,
) -> Result<SeriesResult, SpecFunError> {
    if c <= 0.0 {
        return Err(SpecFunError::Domain(format!(
            "2F1 series requires c > 0, got {c}"
        )));
    }
    if !(0.0..1.0).contains(&z) {
        return Err(SpecFunError::Domain(format!(
            "2F1 series requires 0 <= z < 1, got {z}"
        )));
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut terms_used = 1;
    let mut converged = false;
    for n in 0..policy.max_terms {
        let nf = n as f64;
        term *= (a + nf) * (b + nf) * z / ((c + nf) * (nf + 1.0));
        sum += term;
        terms_used = n + 2;
        if term.abs() <= policy.rel_tol * sum.abs() {
            converged = true;
            break;
        }
    }
    Ok(SeriesResult {
        value: sum,
        terms_used,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_arguments_collapse_to_geometric_series() {
        // 2F1(1, 1; 1; z) = 1/(1-z); the truncation tail is ~2e-12 at the
        // default stopping rule.
        let r = hyp_2f1_series(1.0, 1.0, 1.0, 0.5).unwrap();
        assert!(r.converged);
        assert!((r.value - 2.0).abs() < 1e-11);
    }

    #[test]
    fn matches_reference_values() {
        // mpmath hyp2f1.
        let r = hyp_2f1_series(-0.5, -0.5, 1.5, 0.25).unwrap();
        assert!(r.converged);
        assert!((r.value - 1.042_218_134_537_053_1).abs() < 1e-12);

        let r = hyp_2f1_series(0.3, 0.7, 2.2, 0.5).unwrap();
        assert!((r.value - 1.058_897_444_613_985_1).abs() < 1e-12);
    }

    #[test]
    fn near_unit_argument_approaches_the_gauss_value() {
        // Gauss: 2F1(-1/2, -1/2; 3/2; 1) = Gamma(3/2) Gamma(5/2) / Gamma(2)^2.
        let gauss = 1.178_097_245_096_172_5;
        let r = hyp_2f1_series(-0.5, -0.5, 1.5, 1.0 - 1e-6).unwrap();
        assert!((r.value - gauss).abs() < 1e-3);
        assert!(r.terms_used > 10);
    }

    #[test]
    fn polynomial_cases_terminate() {
        // a = -2 gives a quadratic: 1 - 2bz/c + b(b+1)z^2/(c(c+1)).
        let (b, c, z) = (0.7, 1.9, 0.6);
        let expect = 1.0 - 2.0 * b * z / c + b * (b + 1.0) * z * z / (c * (c + 1.0));
        let r = hyp_2f1_series(-2.0, b, c, z).unwrap();
        assert!(r.converged);
        assert!((r.value - expect).abs() < 1e-14);
        assert!(r.terms_used <= 5);
    }

    #[test]
    fn rejects_out_of_domain_arguments() {
        assert!(hyp_2f1_series(0.5, 0.5, -1.0, 0.5).is_err());
        assert!(hyp_2f1_series(0.5, 0.5, 1.0, 1.0).is_err());
        assert!(hyp_2f1_series(0.5, 0.5, 1.0, -0.1).is_err());
    }

    #[test]
    fn series_result_flags_are_consistent() {
        let r = hyp_2f1_series(-0.5, -0.5, 1.5, 0.9).unwrap();
        assert!(r.terms_used >= 1);
        if r.converged {
            // Last term bound implied by the stopping rule.
            assert!(r.value.is_finite());
        }
    }
}
