//! Modified Bessel functions of the second kind, orders 0 and 1.
//!
//! Small arguments (`z <= 2`) use the ascending power series; larger
//! arguments use the Thompson-Barnett continued fraction for the asymptotic
//! regime, which stays accurate right down to the crossover where the
//! truncated asymptotic series itself could not. Scaled variants return
//! `exp(z) * K(z)` so the arc length Bessel form can be assembled without
//! overflow for small derivative scales.

use super::SpecFunError;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const MAX_ITER: usize = 500;
const SPLIT: f64 = 2.0;

/// Power series for `(K_0, K_1)` on `(0, 2]`.
fn series_k0_k1(z: f64) -> (f64, f64) {
    let q = 0.25 * z * z;
    let log_half_z = (0.5 * z).ln();
    let mut a = 1.0; // q^k / (k!)^2
    let mut b = 1.0; // q^k / (k! (k+1)!)
    let mut harmonic = 0.0; // H_k
    let mut i0 = 1.0;
    let mut k0_tail = 0.0; // sum q^k H_k / (k!)^2
    let mut i1_sum = 1.0; // sum q^k / (k! (k+1)!)
    let mut k1_tail = 1.0; // sum (H_k + H_{k+1}) q^k / (k! (k+1)!)
    for k in 1..MAX_ITER {
        let kf = k as f64;
        a *= q / (kf * kf);
        b *= q / (kf * (kf + 1.0));
        harmonic += 1.0 / kf;
        i0 += a;
        k0_tail += a * harmonic;
        i1_sum += b;
        k1_tail += (2.0 * harmonic + 1.0 / (kf + 1.0)) * b;
        if a < f64::EPSILON * i0 && b < f64::EPSILON * i1_sum {
            break;
        }
    }
    let k0 = -(log_half_z + EULER_GAMMA) * i0 + k0_tail;
    let i1 = 0.5 * z * i1_sum;
    let k1 = 1.0 / z + log_half_z * i1 - 0.25 * z * (k1_tail - 2.0 * EULER_GAMMA * i1_sum);
    (k0, k1)
}

/// Thompson-Barnett continued fraction for `z > 2`.
/// Returns the scaled pair `(exp(z) K_0, exp(z) K_1)`.
fn continued_fraction_scaled(z: f64) -> Result<(f64, f64), SpecFunError> {
    let a0 = -0.25; // nu^2 - 1/4 at nu = 0
    let mut a = a0;
    let mut b = 2.0 * (z + 1.0);
    let mut d = 1.0 / b;
    let mut delta = d;
    let mut f = d;
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut c = -a;
    let mut q = -a;
    let mut s = 1.0 + q * delta;
    let mut converged = false;
    let mut iterations = 1;
    for k in 2..MAX_ITER {
        iterations = k;
        a -= 2.0 * (k as f64 - 1.0);
        b += 2.0;
        d = 1.0 / (a * d + b);
        delta *= b * d - 1.0;
        f += delta;
        let t = (prev - (b - 2.0) * cur) / a;
        prev = cur;
        cur = t;
        c *= -a / k as f64;
        q += c * t;
        s += q * delta;
        if (q * delta).abs() < s.abs() * 0.5 * f64::EPSILON {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SpecFunError::QuadratureNonConvergence {
            nodes: iterations,
            residual: (q * delta / s).abs(),
        });
    }
    let k0 = (std::f64::consts::PI / (2.0 * z)).sqrt() / s;
    let k1 = k0 * (0.5 + z + a0 * f) / z;
    Ok((k0, k1))
}

fn check_domain(z: f64, name: &str) -> Result<(), SpecFunError> {
    if !z.is_finite() || z <= 0.0 {
        return Err(SpecFunError::Domain(format!("{name} requires z > 0, got {z}")));
    }
    Ok(())
}

/// `K_0(z)` for `z > 0`. Relative error below 1e-10 on `[1e-4, 700]`.
pub fn bessel_k0(z: f64) -> Result<f64, SpecFunError> {
    check_domain(z, "bessel_k0")?;
    if z <= SPLIT {
        Ok(series_k0_k1(z).0)
    } else {
        Ok(continued_fraction_scaled(z)?.0 * (-z).exp())
    }
}

/// `K_1(z)` for `z > 0`. Relative error below 1e-10 on `[1e-4, 700]`.
pub fn bessel_k1(z: f64) -> Result<f64, SpecFunError> {
    check_domain(z, "bessel_k1")?;
    if z <= SPLIT {
        Ok(series_k0_k1(z).1)
    } else {
        Ok(continued_fraction_scaled(z)?.1 * (-z).exp())
    }
}

/// `exp(z) * K_0(z)`, safe for arguments where `K_0` itself underflows.
pub fn bessel_k0_scaled(z: f64) -> Result<f64, SpecFunError> {
    check_domain(z, "bessel_k0_scaled")?;
    if z <= SPLIT {
        Ok(series_k0_k1(z).0 * z.exp())
    } else {
        Ok(continued_fraction_scaled(z)?.0)
    }
}

/// `exp(z) * K_1(z)`, safe for arguments where `K_1` itself underflows.
pub fn bessel_k1_scaled(z: f64) -> Result<f64, SpecFunError> {
    check_domain(z, "bessel_k1_scaled")?;
    if z <= SPLIT {
        Ok(series_k0_k1(z).1 * z.exp())
    } else {
        Ok(continued_fraction_scaled(z)?.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // mpmath besselk reference values.
    const CASES_K0: [(f64, f64); 5] = [
        (1e-4, 9.326_271_913_450_275),
        (0.25, 1.541_506_751_248_302_8),
        (1.0, 0.421_024_438_240_708_33),
        (2.0, 0.113_893_872_749_533_43),
        (2.5, 0.062_347_553_200_366_19),
    ];
    const CASES_K1: [(f64, f64); 5] = [
        (1e-4, 9_999.999_508_686_405),
        (0.25, 3.747_025_974_440_711_6),
        (1.0, 0.601_907_230_197_234_6),
        (2.0, 0.139_865_881_816_522_43),
        (2.5, 0.073_890_816_347_747_06),
    ];

    #[test]
    fn matches_reference_values() {
        for (z, want) in CASES_K0 {
            let got = bessel_k0(z).unwrap();
            assert!(
                ((got - want) / want).abs() < 1e-12,
                "K0({z}): got {got}, want {want}"
            );
        }
        for (z, want) in CASES_K1 {
            let got = bessel_k1(z).unwrap();
            assert!(
                ((got - want) / want).abs() < 1e-12,
                "K1({z}): got {got}, want {want}"
            );
        }
    }

    #[test]
    fn scaled_variants_hold_up_at_large_argument() {
        // mpmath: besselk(i, 700) * exp(700).
        let k0e = bessel_k0_scaled(700.0).unwrap();
        let k1e = bessel_k1_scaled(700.0).unwrap();
        assert!(((k0e - 0.047_362_369_454_613_57) / k0e).abs() < 1e-12);
        assert!(((k1e - 0.047_396_187_653_494_54) / k1e).abs() < 1e-12);
        let k0e = bessel_k0_scaled(100.0).unwrap();
        let k1e = bessel_k1_scaled(100.0).unwrap();
        assert!(((k0e - 0.125_175_621_659_126_58) / k0e).abs() < 1e-12);
        assert!(((k1e - 0.125_799_950_479_578_53) / k1e).abs() < 1e-12);
        // Unscaled value still representable at 700.
        let k0 = bessel_k0(700.0).unwrap();
        assert!(((k0 - 4.669_776_431_685_377e-306) / k0).abs() < 1e-10);
    }

    #[test]
    fn agrees_with_cosh_integral_oracle() {
        // K_nu(z) = int_0^inf exp(-z cosh t) cosh(nu t) dt, Simpson rule.
        let oracle = |nu: f64, z: f64| {
            let t_max = (1500.0_f64 / z).acosh();
            let n = 400_000;
            let h = t_max / n as f64;
            let f = |t: f64| (-z * t.cosh()).exp() * (nu * t).cosh();
            let mut s = f(0.0) + f(t_max);
            for i in 1..n {
                s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        };
        for z in [0.5, 1.7, 2.0, 3.0, 9.0] {
            let k0 = bessel_k0(z).unwrap();
            let k1 = bessel_k1(z).unwrap();
            assert!(((k0 - oracle(0.0, z)) / k0).abs() < 1e-11, "K0({z})");
            assert!(((k1 - oracle(1.0, z)) / k1).abs() < 1e-11, "K1({z})");
        }
    }

    #[test]
    fn branches_agree_at_the_crossover() {
        let below = bessel_k0(SPLIT - 1e-9).unwrap();
        let above = bessel_k0(SPLIT + 1e-9).unwrap();
        assert!(((below - above) / below).abs() < 1e-8);
        let below = bessel_k1(SPLIT - 1e-9).unwrap();
        let above = bessel_k1(SPLIT + 1e-9).unwrap();
        assert!(((below - above) / below).abs() < 1e-8);
    }

    #[test]
    fn derivative_identity_k0_prime_is_minus_k1() {
        for z in [0.3, 1.0, 2.4, 7.0] {
            let h = 1e-6;
            let fd = (bessel_k0(z + h).unwrap() - bessel_k0(z - h).unwrap()) / (2.0 * h);
            let k1 = bessel_k1(z).unwrap();
            assert!(
                (fd + k1).abs() < 1e-6 * k1.abs().max(1.0),
                "K0' = -K1 failed at {z}"
            );
        }
    }

    #[test]
    fn rejects_nonpositive_arguments() {
        assert!(matches!(bessel_k0(0.0), Err(SpecFunError::Domain(_))));
        assert!(matches!(bessel_k1(-1.0), Err(SpecFunError::Domain(_))));
    }
}
