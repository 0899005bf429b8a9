//! Distributions of the arc length integrand.
//!
//! Two regimes are covered. In one input dimension the integrand is
//! `sqrt(1 + X^2)` for normal `X`, whose density, distribution function, and
//! series mean are exact ([`Integrand1D`]). In several output dimensions the
//! integrand is the norm `|x|` of a correlated normal vector; its square is a
//! quadratic form whose first two moments are matched by a gamma and then
//! carried to a Nakagami distribution ([`NakagamiParams`]), the
//! moment-matching chain the higher-dimensional arc length moments build on.
//!
//! Densities are evaluated in log space internally so large shape
//! parameters do not overflow `Gamma(m)` or `Omega^m`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::gp::sub_seed;
use crate::quadrature::{integrate_1d, QuadratureSpec};
use crate::specfun::{
    gamma_half_ratio, hyp_2f1_series_with, hyp_u_ln, ln_gamma, std_normal_cdf, SeriesPolicy,
    SeriesResult, SpecFunError,
};

/// Errors from integrand distribution construction and evaluation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IntegrandError {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("covariance matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    AsymmetricMatrix { max_asymmetry: f64 },
    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
}

fn require_positive(name: &'static str, v: f64) -> Result<(), IntegrandError> {
    if !v.is_finite() || v <= 0.0 {
        return Err(IntegrandError::InvalidParameter {
            name,
            reason: format!("must be positive and finite, got {v}"),
        });
    }
    Ok(())
}

/// Ratio of the series mean regime to the quadrature fallback: beyond this
/// value of `|mu| / sigma^2` the series terms overflow before converging.
const MEAN_SERIES_LIMIT: f64 = 30.0;

/// Distribution of `sqrt(1 + X^2)` for `X ~ N(mu, sigma^2)`: the graph
/// length integrand of a one-dimensional process with derivative `X`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integrand1D {
    pub mu: f64,
    pub sigma: f64,
}

/// Mean of [`Integrand1D`] together with how it was computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mean1d {
    pub value: f64,
    /// Series terms accumulated; 0 when quadrature was used.
    pub terms_used: usize,
    pub converged: bool,
    /// True when the series was bypassed for direct quadrature of `y pdf(y)`.
    pub used_quadrature: bool,
}

impl Integrand1D {
    pub fn new(mu: f64, sigma: f64) -> Result<Self, IntegrandError> {
        if !mu.is_finite() {
            return Err(IntegrandError::InvalidParameter {
                name: "mu",
                reason: format!("must be finite, got {mu}"),
            });
        }
        require_positive("sigma", sigma)?;
        Ok(Integrand1D { mu, sigma })
    }

    /// Density at `y`; zero for `y <= 1`. The support boundary `y = 1`
    /// itself maps to 0, and quadrature over the support uses the
    /// substitution `y = sqrt(1 + u^2)` which removes the `1/sqrt(y^2 - 1)`
    /// edge singularity.
    pub fn pdf(&self, y: f64) -> f64 {
        if y <= 1.0 {
            return 0.0;
        }
        let r = (y * y - 1.0).sqrt();
        let s = self.sigma;
        let e_plus = (-(r + self.mu) * (r + self.mu) / (2.0 * s * s)).exp();
        let e_minus = (-(r - self.mu) * (r - self.mu) / (2.0 * s * s)).exp();
        (e_plus + e_minus) / ((2.0 * std::f64::consts::PI).sqrt() * s) * y / r
    }

    /// Distribution function at `y`; zero for `y <= 1`, one in the limit.
    pub fn cdf(&self, y: f64) -> f64 {
        if y <= 1.0 {
            return 0.0;
        }
        let r = (y * y - 1.0).sqrt();
        let value = std_normal_cdf((r + self.mu) / self.sigma)
            + std_normal_cdf((r - self.mu) / self.sigma)
            - 1.0;
        value.clamp(0.0, 1.0)
    }

    /// Mean `E[sqrt(1 + X^2)]`, always at least 1.
    ///
    /// Uses the exact series
    /// `1/(sqrt(2 pi) sigma) e^{-mu^2/(2 sigma^2)} sum_l Gamma(l + 1/2)/(2l)!
    ///  (mu/sigma^2)^{2l} U(l + 1/2, l + 2, 1/(2 sigma^2))`
    /// with `U` in the conventional normalisation, accumulated in log scale.
    /// When `|mu|/sigma^2` exceeds [`MEAN_SERIES_LIMIT`] the terms grow past
    /// `f64` range before the factorial wins, so the mean falls back to
    /// direct quadrature of `sqrt(1 + x^2)` against the normal density.
    pub fn mean(&self, policy: &SeriesPolicy) -> Result<Mean1d, IntegrandError> {
        let s2 = self.sigma * self.sigma;
        if self.mu.abs() / s2 > MEAN_SERIES_LIMIT {
            return self.mean_by_quadrature();
        }
        let z = 1.0 / (2.0 * s2);
        let ratio_sq = (self.mu / s2) * (self.mu / s2);
        // Log of term l, relative to nothing: assembled per-term because U
        // spans hundreds of orders of magnitude across l.
        let log_term = |l: u32| -> Result<f64, SpecFunError> {
            let lf = l as f64;
            let mut lt = ln_gamma(lf + 0.5)? - ln_gamma(2.0 * lf + 1.0)?
                + hyp_u_ln(lf + 0.5, lf + 2.0, z)?;
            if l > 0 {
                lt += lf * ratio_sq.ln();
            }
            Ok(lt)
        };
        let log0 = log_term(0)?;
        let mut acc = 1.0_f64;
        let mut terms_used = 1;
        let mut converged = true;
        if ratio_sq > 0.0 {
            converged = false;
            let mut prev = 1.0_f64;
            for l in 1..=policy.max_terms as u32 {
                let t = (log_term(l)? - log0).exp();
                acc += t;
                terms_used += 1;
                // Terms rise to a peak near l = mu/(2 sigma^2), then decay.
                if t < policy.rel_tol * acc && t < prev {
                    converged = true;
                    break;
                }
                prev = t;
            }
        }
        let log_pref =
            -((2.0 * std::f64::consts::PI).sqrt() * self.sigma).ln() - self.mu * self.mu * z;
        let value = (log_pref + log0 + acc.ln()).exp().max(1.0);
        Ok(Mean1d {
            value,
            terms_used,
            converged,
            used_quadrature: false,
        })
    }

    fn mean_by_quadrature(&self) -> Result<Mean1d, IntegrandError> {
        let spec = QuadratureSpec {
            refinements: 2,
            ..QuadratureSpec::default()
        };
        // The distribution depends on the drift only through its magnitude;
        // integrating with |mu| keeps the mean exactly symmetric in mu.
        let (mu, s) = (self.mu.abs(), self.sigma);
        let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * s);
        let f = move |x: f64| {
            let d = (x - mu) / s;
            (1.0 + x * x).sqrt() * norm * (-0.5 * d * d).exp()
        };
        let result = integrate_1d(f, mu - 12.0 * s, mu + 12.0 * s, &spec);
        Ok(Mean1d {
            value: result.value.max(1.0),
            terms_used: 0,
            converged: result.converged,
            used_quadrature: true,
        })
    }
}

/// Moment-matched gamma parameters for a quadratic form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaParams {
    pub shape: f64,
    pub scale: f64,
}

/// Nakagami parameters: the distribution of the norm whose square is the
/// matched gamma variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NakagamiParams {
    pub m: f64,
    pub omega: f64,
}

/// Mean `tr(Sigma) + mu' mu` and variance `2 tr(Sigma^2) + 4 mu' Sigma mu`
/// of the quadratic form `x' x` for `x ~ N(mu, Sigma)`.
pub fn quadratic_form_moments(
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
) -> Result<(f64, f64), IntegrandError> {
    if sigma.nrows() != sigma.ncols() || sigma.nrows() != mu.len() || mu.is_empty() {
        return Err(IntegrandError::InvalidParameter {
            name: "sigma",
            reason: format!(
                "need square covariance matching the {}-vector mean, got {}x{}",
                mu.len(),
                sigma.nrows(),
                sigma.ncols()
            ),
        });
    }
    let max_asymmetry = (sigma - sigma.transpose()).amax();
    if max_asymmetry > 1e-10 * sigma.amax().max(1.0) {
        return Err(IntegrandError::AsymmetricMatrix { max_asymmetry });
    }
    let trace = sigma.trace();
    let trace_sq: f64 = sigma.iter().map(|v| v * v).sum();
    let mean = trace + mu.dot(mu);
    let variance = 2.0 * trace_sq + 4.0 * mu.dot(&(sigma * mu));
    Ok((mean, variance))
}

/// Gamma parameters whose mean and variance equal the inputs exactly.
pub fn fit_gamma(mean: f64, variance: f64) -> Result<GammaParams, IntegrandError> {
    require_positive("mean", mean)?;
    require_positive("variance", variance)?;
    Ok(GammaParams {
        shape: mean * mean / variance,
        scale: variance / mean,
    })
}

/// Carries a gamma on the squared norm to the Nakagami of the norm:
/// `m = shape`, `Omega = shape * scale` (the gamma mean).
pub fn gamma_to_nakagami(g: GammaParams) -> NakagamiParams {
    NakagamiParams {
        m: g.shape,
        omega: g.shape * g.scale,
    }
}

/// Full moment-matching chain from a normal vector to the Nakagami
/// approximation of its norm. Exact when all eigenvalues of `Sigma` are
/// equal and `mu = 0` (the norm is then exactly a scaled chi variable).
pub fn nakagami_from_normal(
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
) -> Result<NakagamiParams, IntegrandError> {
    let (mean, variance) = quadratic_form_moments(mu, sigma)?;
    if mean <= 0.0 || variance <= 0.0 {
        return Err(IntegrandError::DegenerateCovariance(format!(
            "quadratic form has mean {mean} and variance {variance}; a nonzero covariance is required"
        )));
    }
    Ok(gamma_to_nakagami(fit_gamma(mean, variance)?))
}

impl NakagamiParams {
    pub fn new(m: f64, omega: f64) -> Result<Self, IntegrandError> {
        require_positive("m", m)?;
        require_positive("omega", omega)?;
        Ok(NakagamiParams { m, omega })
    }

    /// True when the shape lies below the classical lower bound 1/2.
    /// Moment matching against posterior covariances can produce such
    /// shapes; the density and moments remain well defined.
    pub fn is_sub_half_shape(&self) -> bool {
        self.m < 0.5
    }

    /// Density `2 m^m / (Gamma(m) Omega^m) x^{2m-1} e^{-(m/Omega) x^2}`,
    /// zero for `x <= 0`; assembled in log space.
    pub fn pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let (m, omega) = (self.m, self.omega);
        let log = std::f64::consts::LN_2 + m * (m / omega).ln() - ln_gamma(m).unwrap()
            + (2.0 * m - 1.0) * x.ln()
            - m / omega * x * x;
        log.exp()
    }

    /// Mean `Gamma(m + 1/2)/Gamma(m) sqrt(Omega/m)` and variance
    /// `Omega - mean^2`; the second moment is `Omega` exactly.
    pub fn moments(&self) -> Result<(f64, f64), IntegrandError> {
        let g = gamma_half_ratio(self.m)?;
        let mean = g * (self.omega / self.m).sqrt();
        let variance = (self.omega - mean * mean).max(0.0);
        Ok((mean, variance))
    }

    /// Mixed moment `E[W1 W2]` of two Nakagami variables with these
    /// parameters whose underlying gamma variables have correlation `rho`:
    /// `(Omega/m) [Gamma(m+1/2)/Gamma(m)]^2 2F1(-1/2, -1/2; m; rho)`.
    ///
    /// At `rho = 1` the Gauss summation collapses the product to `Omega`
    /// exactly (perfect correlation makes this the second moment), and that
    /// closed form is used for `rho` within 1e-9 of 1. Elsewhere the series
    /// term budget grows like `log(tol)/log(rho)` so near-unit correlations
    /// still converge.
    pub fn mixed_moment(
        &self,
        rho: f64,
        policy: &SeriesPolicy,
    ) -> Result<SeriesResult, IntegrandError> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(IntegrandError::InvalidParameter {
                name: "rho",
                reason: format!("must lie in [0, 1], got {rho}"),
            });
        }
        if rho > 1.0 - 1e-9 {
            return Ok(SeriesResult {
                value: self.omega,
                terms_used: 0,
                converged: true,
            });
        }
        let mut terms = policy.max_terms;
        if rho > 0.0 {
            let needed = (policy.rel_tol.ln() / rho.ln()).ceil() as usize + 20;
            terms = terms.max(needed).min(200_000);
        }
        let series = hyp_2f1_series_with(
            -0.5,
            -0.5,
            self.m,
            rho,
            &SeriesPolicy {
                rel_tol: policy.rel_tol,
                max_terms: terms,
            },
        )?;
        let g = gamma_half_ratio(self.m)?;
        Ok(SeriesResult {
            value: self.omega / self.m * g * g * series.value,
            ..series
        })
    }
}

/// Paired Monte Carlo sample streams of the quadratic form `x' A x`,
/// one from the direct draw `x = mu + Sigma^{1/2} w` and one from the
/// eigenvector expansion `sum_i lambda_i (u_i + b_i)^2 + linear + const`
/// with `lambda_i` the eigenvalues of `Sigma^{1/2} A Sigma^{1/2}`.
/// Backs approximation-quality checks; the two streams must agree in
/// distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticFormSamples {
    pub direct: Vec<f64>,
    pub eigen_form: Vec<f64>,
}

/// Symmetric PSD square root via eigendecomposition, clamping tiny
/// negative eigenvalues from round-off.
fn symmetric_sqrt(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let eigen = sigma.clone().symmetric_eigen();
    &eigen.eigenvectors
        * DMatrix::from_diagonal(&eigen.eigenvalues.map(|l| l.max(0.0).sqrt()))
        * eigen.eigenvectors.transpose()
}

/// Draws `count` samples of `x' A x` for `x ~ N(mu, Sigma)` through both
/// the direct and the eigen-expansion routes (`A = I` when absent).
pub fn quadratic_form_samples(
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    a: Option<&DMatrix<f64>>,
    count: usize,
    seed: u64,
) -> Result<QuadraticFormSamples, IntegrandError> {
    let n = mu.len();
    let identity;
    let a = match a {
        Some(m) => m,
        None => {
            identity = DMatrix::identity(n, n);
            &identity
        }
    };
    if sigma.nrows() != n || sigma.ncols() != n || a.nrows() != n || a.ncols() != n || n == 0 {
        return Err(IntegrandError::InvalidParameter {
            name: "sigma",
            reason: "mean, covariance, and form matrix dimensions must agree".into(),
        });
    }
    for (name, m) in [("sigma", sigma), ("a", a)] {
        let max_asymmetry = (m - m.transpose()).amax();
        if max_asymmetry > 1e-10 * m.amax().max(1.0) {
            let _ = name;
            return Err(IntegrandError::AsymmetricMatrix { max_asymmetry });
        }
    }

    let root = symmetric_sqrt(sigma);
    let mut rng = ChaCha12Rng::seed_from_u64(sub_seed(seed, 0));
    let direct: Vec<f64> = (0..count)
        .map(|_| {
            let w = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = mu + &root * w;
            x.dot(&(a * &x))
        })
        .collect();

    // x = mu + root w, so x'Ax = mu'A mu + 2 u' P' root A mu + sum lambda_i
    // u_i^2 after rotating w = P u into the eigenbasis of root*A*root.
    // Eigendirections with lambda away from zero complete the square to
    // lambda_i (u_i + b_i)^2; near-null directions keep their linear term.
    let form = &root * a * &root;
    let eigen = form.clone().symmetric_eigen();
    let c = eigen.eigenvectors.transpose() * (&root * (a * mu));
    let lambda_floor = 1e-12 * eigen.eigenvalues.amax().max(1.0);
    let mut constant = mu.dot(&(a * mu));
    let mut shifts = vec![0.0; n];
    for i in 0..n {
        if eigen.eigenvalues[i].abs() > lambda_floor {
            shifts[i] = c[i] / eigen.eigenvalues[i];
            constant -= c[i] * c[i] / eigen.eigenvalues[i];
        }
    }
    let mut rng = ChaCha12Rng::seed_from_u64(sub_seed(seed, 1));
    let eigen_form: Vec<f64> = (0..count)
        .map(|_| {
            let mut q = constant;
            for i in 0..n {
                let u: f64 = rng.sample(StandardNormal);
                if eigen.eigenvalues[i].abs() > lambda_floor {
                    let shifted = u + shifts[i];
                    q += eigen.eigenvalues[i] * shifted * shifted;
                } else {
                    q += 2.0 * c[i] * u;
                }
            }
            q
        })
        .collect();
    Ok(QuadraticFormSamples { direct, eigen_form })
}
