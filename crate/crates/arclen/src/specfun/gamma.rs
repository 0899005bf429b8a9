//! Gamma, log-gamma, and the rising factorial.

use super::SpecFunError;

/// Lanczos coefficients for `g = 10.900511` (Pugh, "An Analysis of the
/// Lanczos Gamma Approximation", 2004, p. 116). Accurate to ~16 digits.
const LANCZOS_DK: [f64; 11] = [
    2.485_740_891_387_535_5e-5,
    1.051_423_785_817_219_7,
    -3.456_870_972_220_162_5,
    4.512_277_094_668_948,
    -2.982_852_253_235_766_4,
    1.056_397_115_771_267,
    -1.954_287_731_916_458_7e-1,
    1.709_705_434_044_412e-2,
    -5.719_261_174_043_057e-4,
    4.633_994_733_599_057e-6,
    -2.719_949_084_886_077_2e-9,
];

const LANCZOS_R: f64 = 10.900511;

/// `2 * sqrt(e / pi)`.
const TWO_SQRT_E_OVER_PI: f64 = 1.860_382_734_205_265_7;

/// `ln(2 * sqrt(e / pi))`.
const LN_2_SQRT_E_OVER_PI: f64 = 0.620_782_237_635_245_2;

/// Largest argument whose gamma value fits in an `f64`.
const OVERFLOW_THRESHOLD: f64 = 171.614;

fn lanczos_sum(shifted: impl Fn(usize) -> f64) -> f64 {
    let mut s = LANCZOS_DK[0];
    for (i, dk) in LANCZOS_DK.iter().enumerate().skip(1) {
        s += dk / shifted(i);
    }
    s
}

/// Gamma function for positive arguments.
///
/// Relative error stays below 1e-12 on `[1e-3, 170]`; arguments past the
/// `f64` range report [`SpecFunError::Overflow`].
pub fn gamma_fn(x: f64) -> Result<f64, SpecFunError> {
    if !x.is_finite() || x <= 0.0 {
        return Err(SpecFunError::Domain(format!(
            "gamma requires x > 0, got {x}"
        )));
    }
    if x > OVERFLOW_THRESHOLD {
        return Err(SpecFunError::Overflow(format!("gamma({x}) exceeds f64")));
    }
    if x > 140.0 {
        // The direct product overflows an intermediate before the result
        // does; go through the log form instead.
        return Ok(ln_gamma(x)?.exp());
    }
    if x < 0.5 {
        let s = lanczos_sum(|i| i as f64 - x);
        Ok(std::f64::consts::PI
            / ((std::f64::consts::PI * x).sin()
                * s
                * TWO_SQRT_E_OVER_PI
                * ((0.5 - x + LANCZOS_R) / std::f64::consts::E).powf(0.5 - x)))
    } else {
        let s = lanczos_sum(|i| x + i as f64 - 1.0);
        Ok(s * TWO_SQRT_E_OVER_PI * ((x - 0.5 + LANCZOS_R) / std::f64::consts::E).powf(x - 0.5))
    }
}

/// Natural log of the gamma function for positive arguments.
pub fn ln_gamma(x: f64) -> Result<f64, SpecFunError> {
    if !x.is_finite() || x <= 0.0 {
        return Err(SpecFunError::Domain(format!(
            "ln_gamma requires x > 0, got {x}"
        )));
    }
    if x < 0.5 {
        let s = lanczos_sum(|i| i as f64 - x);
        Ok(std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().ln()
            - s.ln()
            - LN_2_SQRT_E_OVER_PI
            - (0.5 - x) * ((0.5 - x + LANCZOS_R) / std::f64::consts::E).ln())
    } else {
        let s = lanczos_sum(|i| x + i as f64 - 1.0);
        Ok(s.ln() + LN_2_SQRT_E_OVER_PI + (x - 0.5) * ((x - 0.5 + LANCZOS_R) / std::f64::consts::E).ln())
    }
}

/// Rising factorial `(q)_n = q (q+1) ... (q+n-1)`, with `(q)_0 = 1`.
pub fn pochhammer(q: f64, n: u32) -> f64 {
    let mut acc = 1.0;
    for k in 0..n {
        acc *= q + k as f64;
    }
    acc
}

/// `Gamma(m + 1/2) / Gamma(m)` for `m > 0`.
///
/// The log-gamma difference loses precision once `ln Gamma(m)` is huge, so
/// large arguments switch to the asymptotic expansion
/// `sqrt(m) (1 - 1/(8m) + 1/(128 m^2) + 5/(1024 m^3))`, whose truncation
/// error at the branch point is below 1e-15 relative.
pub fn gamma_half_ratio(m: f64) -> Result<f64, SpecFunError> {
    if !m.is_finite() || m <= 0.0 {
        return Err(SpecFunError::Domain(format!(
            "gamma_half_ratio requires m > 0, got {m}"
        )));
    }
    if m >= 1000.0 {
        let inv = 1.0 / m;
        return Ok(m.sqrt()
            * (1.0 + inv * (-0.125 + inv * (1.0 / 128.0 + inv * (5.0 / 1024.0)))));
    }
    Ok((ln_gamma(m + 0.5)? - ln_gamma(m)?).exp())
}
