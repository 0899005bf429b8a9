//! Standard normal CDF via the regularized incomplete gamma function.

use super::gamma::ln_gamma;

const MAX_ITER: usize = 400;

/// Regularized lower incomplete gamma `P(a, x)` by power series.
/// Converges quickly for `x < a + 1`.
fn reg_lower_series(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let mut term = 1.0 / a;
    let mut sum = term;
    for n in 1..MAX_ITER {
        term *= x / (a + n as f64);
        sum += term;
        if term.abs() < sum.abs() * f64::EPSILON {
            break;
        }
    }
    let ln_gamma_a = ln_gamma(a).expect("a > 0 by construction");
    (a * x.ln() - x - ln_gamma_a).exp() * sum
}

/// Regularized upper incomplete gamma `Q(a, x)` by modified Lentz continued
/// fraction. Converges quickly for `x >= a + 1`.
fn reg_upper_cf(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < f64::EPSILON {
            break;
        }
    }
    let ln_gamma_a = ln_gamma(a).expect("a > 0 by construction");
    (a * x.ln() - x - ln_gamma_a).exp() * h
}

/// Standard normal cumulative distribution function.
///
/// Uses `Phi(x) = (1 + erf(x / sqrt(2))) / 2` with the error function
/// expressed through the regularized incomplete gamma of shape 1/2. Absolute
/// error is below 1e-14 across the real line; far tails saturate cleanly at
/// 0 and 1.
pub fn std_normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let t = 0.5 * x * x;
    if t == 0.0 {
        return 0.5;
    }
    // Series or continued fraction, whichever converges for this argument.
    let half_tail = if t < 1.5 {
        0.5 * (1.0 - reg_lower_series(0.5, t))
    } else {
        0.5 * reg_upper_cf(0.5, t)
    };
    if x > 0.0 {
        1.0 - half_tail
    } else {
        half_tail
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_reference_values() {
        // mpmath ncdf.
        assert!((std_normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-13);
        assert!((std_normal_cdf(-2.5) - 6.209_665_325_776_135e-3).abs() < 1e-14);
        assert_eq!(std_normal_cdf(0.0), 0.5);
    }

    #[test]
    fn symmetry_and_monotonicity() {
        let mut prev = 0.0;
        for i in -80..=80 {
            let x = i as f64 * 0.1;
            let p = std_normal_cdf(x);
            let q = std_normal_cdf(-x);
            assert!((p + q - 1.0).abs() < 1e-13, "symmetry broke at {x}");
            assert!(p >= prev, "monotonicity broke at {x}");
            prev = p;
        }
    }

    #[test]
    fn saturated_tails() {
        assert_eq!(std_normal_cdf(40.0), 1.0);
        assert_eq!(std_normal_cdf(-40.0), 0.0);
        assert!(std_normal_cdf(-8.0) > 0.0);
    }

    #[test]
    fn agrees_with_quadrature_of_the_density() {
        // Simpson rule on the density, fine enough to be an independent check.
        let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        for target in [0.3, 1.0, 1.7, 2.9] {
            let n = 20_000;
            let a = -12.0;
            let h = (target - a) / n as f64;
            let mut s = phi(a) + phi(target);
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * phi(a + i as f64 * h);
            }
            let simpson = s * h / 3.0;
            assert!(
                (std_normal_cdf(target) - simpson).abs() < 1e-12,
                "mismatch at {target}"
            );
        }
    }
}
