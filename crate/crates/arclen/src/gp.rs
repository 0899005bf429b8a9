//! Gaussian process posterior machinery for vector-valued processes.
//!
//! A [`GpPosterior`] is either a prior (no observations, explicit code path)
//! or a model fitted to [`Observations`] with covariance `B (x) K + noise`.
//! Besides the usual predictive mean and covariance it exposes the mean and
//! covariance of the derivative process, which drive the arc length moment
//! formulas, and joint path sampling over a grid for Monte Carlo checks.
//!
//! Factorization strategy: when the noise is shared across outputs and the
//! mixing matrix is positive definite, the Gram matrix diagonalises in the
//! eigenbasis of `B` into `D` independent `N x N` blocks (the Kronecker fast
//! path). Otherwise a dense `ND x ND` Cholesky is used. Both paths apply the
//! same jitter ladder: `1e-10` times the mean diagonal, escalating tenfold up
//! to `1e-4` before reporting a singular model.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::kernels::{symmetric_eigenvalues, CoregionalizedKernel, KernelError};

/// Errors from observation handling, fitting, and sampling.
#[derive(Debug, thiserror::Error)]
pub enum GpError {
    #[error("invalid observations: {0}")]
    InvalidObservations(String),
    #[error("duplicate observation time {t} (separation below 1e-12)")]
    DuplicateInput { t: f64 },
    #[error("model covariance is numerically singular even at maximum jitter (smallest eigenvalue estimate {min_eigenvalue:e})")]
    SingularModel { min_eigenvalue: f64 },
    #[error("invalid sampling grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("failed to read observations: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse observations CSV: {0}")]
    Csv(#[from] csv::Error),
}

/// Observation noise variance, one value shared across outputs or one per
/// output. Deserializes from a bare number or an array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseSpec {
    Shared(f64),
    PerOutput(Vec<f64>),
}

impl NoiseSpec {
    /// Noise variance for each of `d` outputs.
    pub fn resolve(&self, d: usize) -> Result<Vec<f64>, GpError> {
        let vars = match self {
            NoiseSpec::Shared(v) => vec![*v; d],
            NoiseSpec::PerOutput(vs) => {
                if vs.len() != d {
                    return Err(GpError::InvalidObservations(format!(
                        "noise has {} entries but the model has {d} outputs",
                        vs.len()
                    )));
                }
                vs.clone()
            }
        };
        for &v in &vars {
            if !v.is_finite() || v < 0.0 {
                return Err(GpError::InvalidObservations(format!(
                    "noise variance must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(vars)
    }

    /// The single shared value, if this is the shared variant.
    fn shared_value(&self) -> Option<f64> {
        match self {
            NoiseSpec::Shared(v) => Some(*v),
            NoiseSpec::PerOutput(_) => None,
        }
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::Shared(0.0)
    }
}

/// Observed data: times, an `N x D` target matrix, and noise variances.
/// Rows are sorted by time at construction; near-coincident times are
/// rejected because they make the noiseless Gram matrix singular.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    times: Vec<f64>,
    targets: DMatrix<f64>,
    noise: NoiseSpec,
}

impl Observations {
    pub fn new(times: Vec<f64>, targets: DMatrix<f64>, noise: NoiseSpec) -> Result<Self, GpError> {
        let n = times.len();
        if n == 0 {
            return Err(GpError::InvalidObservations(
                "at least one observation is required; use the prior constructor for no data".into(),
            ));
        }
        if targets.nrows() != n || targets.ncols() == 0 {
            return Err(GpError::InvalidObservations(format!(
                "target matrix is {}x{} but {n} observation times were given",
                targets.nrows(),
                targets.ncols()
            )));
        }
        if times.iter().any(|t| !t.is_finite()) || targets.iter().any(|y| !y.is_finite()) {
            return Err(GpError::InvalidObservations(
                "times and targets must all be finite".into(),
            ));
        }
        noise.resolve(targets.ncols())?;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| times[a].partial_cmp(&times[b]).unwrap());
        let sorted_times: Vec<f64> = order.iter().map(|&i| times[i]).collect();
        for w in sorted_times.windows(2) {
            if (w[1] - w[0]).abs() <= 1e-12 {
                return Err(GpError::DuplicateInput { t: w[0] });
            }
        }
        let sorted_targets =
            DMatrix::from_fn(n, targets.ncols(), |i, j| targets[(order[i], j)]);
        Ok(Observations {
            times: sorted_times,
            targets: sorted_targets,
            noise,
        })
    }

    /// Reads `t,y1,...,yD` CSV. Returns `Ok(None)` when the file holds only
    /// a header, which callers treat as "no data, use the prior".
    pub fn from_csv_path(path: &Path, noise: NoiseSpec) -> Result<Option<Self>, GpError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)?;
        let headers = reader.headers()?.clone();
        if headers.is_empty() || headers.get(0) != Some("t") {
            return Err(GpError::InvalidObservations(
                "CSV header must start with column 't'".into(),
            ));
        }
        let d = headers.len() - 1;
        if d == 0 {
            return Err(GpError::InvalidObservations(
                "CSV must have at least one output column after 't'".into(),
            ));
        }
        let mut times = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != d + 1 {
                return Err(GpError::InvalidObservations(format!(
                    "row {} has {} fields, expected {}",
                    line + 2,
                    record.len(),
                    d + 1
                )));
            }
            let mut parsed = Vec::with_capacity(d + 1);
            for field in record.iter() {
                parsed.push(field.parse::<f64>().map_err(|_| {
                    GpError::InvalidObservations(format!(
                        "row {}: cannot parse '{}' as a number",
                        line + 2,
                        field
                    ))
                })?);
            }
            times.push(parsed[0]);
            rows.push(parsed[1..].to_vec());
        }
        if times.is_empty() {
            return Ok(None);
        }
        let targets = DMatrix::from_fn(times.len(), d, |i, j| rows[i][j]);
        Observations::new(times, targets, noise).map(Some)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn output_dim(&self) -> usize {
        self.targets.ncols()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn targets(&self) -> &DMatrix<f64> {
        &self.targets
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }
}

enum Factor {
    /// Dense Cholesky of the full `ND x ND` Gram plus noise.
    Dense {
        chol: Cholesky<f64, Dyn>,
        alpha: DVector<f64>,
    },
    /// Per-eigenvalue blocks `lambda_c K + sigma^2 I` in the eigenbasis of
    /// the mixing matrix; usable when noise is shared and `B` is PD.
    EigenBlocks {
        basis: DMatrix<f64>,
        lambdas: Vec<f64>,
        chols: Vec<Cholesky<f64, Dyn>>,
        weights: Vec<DVector<f64>>,
    },
}

struct Fitted {
    obs: Observations,
    factor: Factor,
    jitter_used: f64,
}

/// A Gaussian process model: zero-mean prior, optionally conditioned on
/// observations. Immutable after construction; predictions are thread-safe.
pub struct GpPosterior {
    kernel: CoregionalizedKernel,
    fitted: Option<Fitted>,
    variance_clamps: AtomicU64,
}

/// Cholesky with an escalating diagonal jitter, relative to the mean
/// diagonal. Returns the factor and the absolute jitter that was added.
fn jittered_cholesky(a: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64), GpError> {
    let n = a.nrows();
    let mean_diag = a.diagonal().sum() / n as f64;
    let scale = if mean_diag > 0.0 { mean_diag } else { 1.0 };
    let mut rel = 1e-10;
    while rel < 1.5e-4 {
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] += rel * scale;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok((chol, rel * scale));
        }
        rel *= 10.0;
    }
    let min_eigenvalue = symmetric_eigenvalues(a)[0];
    Err(GpError::SingularModel { min_eigenvalue })
}

/// Derives an independent stream seed from a base seed (SplitMix64 step),
/// so draw `i` is reproducible regardless of how draws are batched.
pub fn sub_seed(base_seed: u64, stream: u64) -> u64 {
    let mut z = base_seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl GpPosterior {
    /// The prior model: zero mean, covariance `B (x) k`.
    pub fn prior(kernel: CoregionalizedKernel) -> Self {
        GpPosterior {
            kernel,
            fitted: None,
            variance_clamps: AtomicU64::new(0),
        }
    }

    /// Conditions the prior on observations.
    pub fn fit(kernel: CoregionalizedKernel, obs: Observations) -> Result<Self, GpError> {
        let d = kernel.output_dim();
        if obs.output_dim() != d {
            return Err(GpError::InvalidObservations(format!(
                "data has {} outputs but the kernel has {d}",
                obs.output_dim()
            )));
        }
        let n = obs.len();
        let noise_vars = obs.noise().resolve(d)?;

        let eigen = kernel.mixing().clone().symmetric_eigen();
        let max_lambda = eigen.eigenvalues.amax();
        let mixing_pd = eigen.eigenvalues.min() > 1e-12 * max_lambda.max(1.0);

        let factor = if let (Some(sigma2), true) = (obs.noise().shared_value(), mixing_pd) {
            // Kronecker fast path: D independent N x N blocks.
            let scalar_gram = DMatrix::from_fn(n, n, |i, j| {
                kernel.scalar().eval(obs.times()[i] - obs.times()[j])
            });
            let rotated = obs.targets() * &eigen.eigenvectors;
            let mut chols = Vec::with_capacity(d);
            let mut weights = Vec::with_capacity(d);
            let mut worst_jitter = 0.0_f64;
            for c in 0..d {
                let lambda = eigen.eigenvalues[c];
                let mut block = &scalar_gram * lambda;
                for i in 0..n {
                    block[(i, i)] += sigma2;
                }
                let (chol, jitter) = jittered_cholesky(&block)?;
                worst_jitter = worst_jitter.max(jitter);
                weights.push(chol.solve(&rotated.column(c).into_owned()));
                chols.push(chol);
            }
            Fitted {
                obs,
                factor: Factor::EigenBlocks {
                    basis: eigen.eigenvectors,
                    lambdas: eigen.eigenvalues.iter().copied().collect(),
                    chols,
                    weights,
                },
                jitter_used: worst_jitter,
            }
        } else {
            let mut gram = kernel.vector_gram(obs.times());
            for od in 0..d {
                for i in 0..n {
                    gram[(od * n + i, od * n + i)] += noise_vars[od];
                }
            }
            let (chol, jitter_used) = jittered_cholesky(&gram)?;
            let mut y_vec = DVector::zeros(n * d);
            for od in 0..d {
                for i in 0..n {
                    y_vec[od * n + i] = obs.targets()[(i, od)];
                }
            }
            let alpha = chol.solve(&y_vec);
            Fitted {
                obs,
                factor: Factor::Dense { chol, alpha },
                jitter_used,
            }
        };
        Ok(GpPosterior {
            kernel,
            fitted: Some(factor),
            variance_clamps: AtomicU64::new(0),
        })
    }

    pub fn kernel(&self) -> &CoregionalizedKernel {
        &self.kernel
    }

    pub fn observations(&self) -> Option<&Observations> {
        self.fitted.as_ref().map(|f| &f.obs)
    }

    pub fn output_dim(&self) -> usize {
        self.kernel.output_dim()
    }

    /// Absolute diagonal jitter added during fitting; 0 for the prior.
    pub fn jitter_used(&self) -> f64 {
        self.fitted.as_ref().map_or(0.0, |f| f.jitter_used)
    }

    /// How many negative predictive variances have been clamped to zero.
    pub fn negative_variance_clamps(&self) -> u64 {
        self.variance_clamps.load(Ordering::Relaxed)
    }

    /// Predictive mean vector at `t_star`; zero for the prior.
    pub fn posterior_mean(&self, t_star: f64) -> DVector<f64> {
        let d = self.output_dim();
        let Some(fitted) = &self.fitted else {
            return DVector::zeros(d);
        };
        let kvec = DVector::from_fn(fitted.obs.len(), |j, _| {
            self.kernel.scalar().eval(t_star - fitted.obs.times()[j])
        });
        self.project_mean(fitted, &kvec)
    }

    /// Predictive mean of the derivative process at `t_star`.
    pub fn posterior_deriv_mean(&self, t_star: f64) -> DVector<f64> {
        let d = self.output_dim();
        let Some(fitted) = &self.fitted else {
            return DVector::zeros(d);
        };
        let kvec = DVector::from_fn(fitted.obs.len(), |j, _| {
            self.kernel.scalar().first_derivative(t_star - fitted.obs.times()[j])
        });
        self.project_mean(fitted, &kvec)
    }

    /// Shared mean projection: the cross-covariance row for each output is
    /// `B[d, e] kvec[j]`, so the mean is `B p` with `p_e = kvec . alpha_e`.
    fn project_mean(&self, fitted: &Fitted, kvec: &DVector<f64>) -> DVector<f64> {
        let d = self.output_dim();
        let n = fitted.obs.len();
        match &fitted.factor {
            Factor::Dense { alpha, .. } => {
                let p = DVector::from_fn(d, |e, _| {
                    (0..n).map(|j| kvec[j] * alpha[e * n + j]).sum::<f64>()
                });
                self.kernel.mixing() * p
            }
            Factor::EigenBlocks {
                basis,
                lambdas,
                weights,
                ..
            } => {
                let q = DVector::from_fn(d, |c, _| lambdas[c] * kvec.dot(&weights[c]));
                basis * q
            }
        }
    }

    /// Predictive covariance matrix between outputs at `(t1, t2)`.
    pub fn posterior_cov(&self, t1: f64, t2: f64) -> DMatrix<f64> {
        let prior = self.kernel.mixing() * self.kernel.scalar().eval(t1 - t2);
        self.conditioned_cov(prior, t1, t2, false)
    }

    /// Predictive covariance of the derivative process at `(t1, t2)`.
    /// For the prior at `t1 = t2` this is the constant `B * (-k''(0))`.
    pub fn posterior_deriv_cov(&self, t1: f64, t2: f64) -> DMatrix<f64> {
        let prior = self.kernel.mixing() * self.kernel.scalar().cross_derivative(t1 - t2);
        self.conditioned_cov(prior, t1, t2, true)
    }

    fn conditioned_cov(
        &self,
        prior: DMatrix<f64>,
        t1: f64,
        t2: f64,
        derivative: bool,
    ) -> DMatrix<f64> {
        let mut cov = prior;
        if let Some(fitted) = &self.fitted {
            let n = fitted.obs.len();
            let eval = |t: f64, j: usize| {
                let tau = t - fitted.obs.times()[j];
                if derivative {
                    self.kernel.scalar().first_derivative(tau)
                } else {
                    self.kernel.scalar().eval(tau)
                }
            };
            let k1 = DVector::from_fn(n, |j, _| eval(t1, j));
            let k2 = DVector::from_fn(n, |j, _| eval(t2, j));
            cov -= self.cross_correction(fitted, &k1, &k2);
        }
        if t1 == t2 {
            let mut clamps = 0;
            for i in 0..cov.nrows() {
                if cov[(i, i)] < 0.0 {
                    cov[(i, i)] = 0.0;
                    clamps += 1;
                }
            }
            if clamps > 0 {
                self.variance_clamps.fetch_add(clamps, Ordering::Relaxed);
            }
        }
        cov
    }

    /// The data correction `K1X A^{-1} KX2` for scalar cross vectors
    /// `k1, k2` expanded through the mixing matrix.
    fn cross_correction(
        &self,
        fitted: &Fitted,
        k1: &DVector<f64>,
        k2: &DVector<f64>,
    ) -> DMatrix<f64> {
        let d = self.output_dim();
        let n = fitted.obs.len();
        match &fitted.factor {
            Factor::Dense { chol, .. } => {
                // Rows of K1X are B[d, e] k1[j]; assemble, solve, contract.
                let b = self.kernel.mixing();
                let mut right = DMatrix::zeros(n * d, d);
                for e in 0..d {
                    for f in 0..d {
                        for j in 0..n {
                            right[(f * n + j, e)] = b[(f, e)] * k2[j];
                        }
                    }
                }
                let solved = chol.solve(&right);
                DMatrix::from_fn(d, d, |dd, e| {
                    let mut acc = 0.0;
                    for f in 0..d {
                        let bf = b[(dd, f)];
                        for j in 0..n {
                            acc += bf * k1[j] * solved[(f * n + j, e)];
                        }
                    }
                    acc
                })
            }
            Factor::EigenBlocks {
                basis,
                lambdas,
                chols,
                ..
            } => {
                let mut corr = DMatrix::zeros(d, d);
                for c in 0..d {
                    let s = k1.dot(&chols[c].solve(k2));
                    let w = lambdas[c] * lambdas[c] * s;
                    for dd in 0..d {
                        for e in 0..d {
                            corr[(dd, e)] += w * basis[(dd, c)] * basis[(e, c)];
                        }
                    }
                }
                corr
            }
        }
    }

    /// Prepares a reproducible path sampler over `grid`. Draw `i` depends
    /// only on `(seed, i)`, so batching does not change the stream.
    pub fn path_sampler(&self, grid: &[f64], seed: u64) -> Result<PathSampler, GpError> {
        let m = grid.len();
        if m < 2 {
            return Err(GpError::InvalidGrid("grid needs at least 2 points".into()));
        }
        if grid.iter().any(|t| !t.is_finite()) {
            return Err(GpError::InvalidGrid("grid points must be finite".into()));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GpError::InvalidGrid("grid must be strictly increasing".into()));
        }
        let d = self.output_dim();

        if self.fitted.is_none() {
            // Prior: Kronecker square root, scalar grid factor times B^{1/2}.
            let scalar_gram =
                DMatrix::from_fn(m, m, |i, j| self.kernel.scalar().eval(grid[i] - grid[j]));
            let (chol, _) = jittered_cholesky(&scalar_gram)?;
            let eigen = self.kernel.mixing().clone().symmetric_eigen();
            let mix_sqrt = &eigen.eigenvectors
                * DMatrix::from_diagonal(&eigen.eigenvalues.map(|l| l.max(0.0).sqrt()))
                * eigen.eigenvectors.transpose();
            return Ok(PathSampler {
                mean: DMatrix::zeros(m, d),
                factor: SampleFactor::Structured {
                    grid_factor: chol.l(),
                    mix_sqrt,
                },
                base_seed: seed,
                grid_len: m,
                output_dim: d,
            });
        }

        let fitted = self.fitted.as_ref().unwrap();
        let mean = DMatrix::from_fn(m, d, |i, dd| self.posterior_mean(grid[i])[dd]);
        let mut joint = DMatrix::zeros(m * d, m * d);
        let b = self.kernel.mixing();
        for dd in 0..d {
            for e in 0..d {
                for i in 0..m {
                    for j in 0..m {
                        joint[(dd * m + i, e * m + j)] =
                            b[(dd, e)] * self.kernel.scalar().eval(grid[i] - grid[j]);
                    }
                }
            }
        }
        self.subtract_joint_correction(fitted, grid, &mut joint);
        let mut clamps = 0;
        for i in 0..m * d {
            if joint[(i, i)] < 0.0 {
                joint[(i, i)] = 0.0;
                clamps += 1;
            }
        }
        if clamps > 0 {
            self.variance_clamps.fetch_add(clamps, Ordering::Relaxed);
        }
        let (chol, _) = jittered_cholesky(&joint)?;
        Ok(PathSampler {
            mean,
            factor: SampleFactor::Joint { factor: chol.l() },
            base_seed: seed,
            grid_len: m,
            output_dim: d,
        })
    }

    /// Subtracts the data correction from the output-major joint prior
    /// covariance over the grid, in place.
    fn subtract_joint_correction(&self, fitted: &Fitted, grid: &[f64], joint: &mut DMatrix<f64>) {
        let d = self.output_dim();
        let n = fitted.obs.len();
        let m = grid.len();
        let cross = DMatrix::from_fn(m, n, |i, j| {
            self.kernel.scalar().eval(grid[i] - fitted.obs.times()[j])
        });
        match &fitted.factor {
            Factor::Dense { chol, .. } => {
                let b = self.kernel.mixing();
                let mut cx = DMatrix::zeros(m * d, n * d);
                for dd in 0..d {
                    for e in 0..d {
                        let bde = b[(dd, e)];
                        for i in 0..m {
                            for j in 0..n {
                                cx[(dd * m + i, e * n + j)] = bde * cross[(i, j)];
                            }
                        }
                    }
                }
                let solved = chol.solve(&cx.transpose());
                *joint -= &cx * solved;
            }
            Factor::EigenBlocks {
                basis,
                lambdas,
                chols,
                ..
            } => {
                for c in 0..d {
                    let solved = chols[c].solve(&cross.transpose());
                    let t = &cross * solved;
                    let w = lambdas[c] * lambdas[c];
                    for dd in 0..d {
                        for e in 0..d {
                            let scale = w * basis[(dd, c)] * basis[(e, c)];
                            for i in 0..m {
                                for j in 0..m {
                                    joint[(dd * m + i, e * m + j)] -= scale * t[(i, j)];
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Draws `count` joint paths over `grid`; result `[i]` is `M x D`.
    pub fn sample_paths(
        &self,
        grid: &[f64],
        count: usize,
        seed: u64,
    ) -> Result<Vec<DMatrix<f64>>, GpError> {
        let sampler = self.path_sampler(grid, seed)?;
        Ok((0..count as u64).map(|i| sampler.draw(i)).collect())
    }
}

enum SampleFactor {
    /// Prior draws: `grid_factor Z mix_sqrt` with iid `Z`.
    Structured {
        grid_factor: DMatrix<f64>,
        mix_sqrt: DMatrix<f64>,
    },
    /// Posterior draws from a dense factor of the `MD x MD` covariance.
    Joint { factor: DMatrix<f64> },
}

/// Reproducible path generator prepared by [`GpPosterior::path_sampler`].
pub struct PathSampler {
    mean: DMatrix<f64>,
    factor: SampleFactor,
    base_seed: u64,
    grid_len: usize,
    output_dim: usize,
}

impl PathSampler {
    pub fn grid_len(&self) -> usize {
        self.grid_len
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// Draw with the given index; depends only on the base seed and index.
    pub fn draw(&self, index: u64) -> DMatrix<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(sub_seed(self.base_seed, index));
        let m = self.grid_len;
        let d = self.output_dim;
        match &self.factor {
            SampleFactor::Structured {
                grid_factor,
                mix_sqrt,
            } => {
                let z = DMatrix::from_fn(m, d, |_, _| rng.sample::<f64, _>(StandardNormal));
                grid_factor * z * mix_sqrt
            }
            SampleFactor::Joint { factor } => {
                let z = DVector::from_fn(m * d, |_, _| rng.sample::<f64, _>(StandardNormal));
                let v = factor * z;
                DMatrix::from_fn(m, d, |i, dd| self.mean[(i, dd)] + v[dd * m + i])
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{KernelFamily, KernelSpec};
    use std::io::Write;

    fn se_scalar() -> CoregionalizedKernel {
        CoregionalizedKernel::scalar_only(KernelSpec::squared_exponential(1.0, 1.0).unwrap())
            .unwrap()
    }

    fn scalar_obs(times: &[f64], ys: &[f64], noise: NoiseSpec) -> Observations {
        Observations::new(
            times.to_vec(),
            DMatrix::from_fn(times.len(), 1, |i, _| ys[i]),
            noise,
        )
        .unwrap()
    }

    #[test]
    fn interpolates_a_single_noiseless_point() {
        let obs = scalar_obs(&[0.5], &[0.7], NoiseSpec::Shared(0.0));
        let gp = GpPosterior::fit(se_scalar(), obs).unwrap();
        assert!((gp.posterior_mean(0.5)[0] - 0.7).abs() < 1e-8);
        assert!(gp.posterior_cov(0.5, 0.5)[(0, 0)].abs() < 1e-8);
    }

    #[test]
    fn empty_observations_are_rejected() {
        let err = Observations::new(vec![], DMatrix::zeros(0, 1), NoiseSpec::Shared(0.0));
        assert!(matches!(err, Err(GpError::InvalidObservations(_))));
    }

    #[test]
    fn near_duplicate_times_are_rejected() {
        let err = Observations::new(
            vec![0.3, 0.3 + 1e-13],
            DMatrix::from_fn(2, 1, |i, _| i as f64),
            NoiseSpec::Shared(0.1),
        );
        assert!(matches!(err, Err(GpError::DuplicateInput { .. })));
    }

    /// Brute-force oracle: explicit inverse of the jittered Gram matrix.
    fn dense_oracle(
        kernel: &KernelSpec,
        times: &[f64],
        ys: &[f64],
        noise: f64,
    ) -> impl Fn(f64, f64) -> (f64, f64) + 'static {
        let n = times.len();
        let mut a = DMatrix::from_fn(n, n, |i, j| kernel.eval(times[i] - times[j]));
        let mean_diag = a.diagonal().sum() / n as f64;
        for i in 0..n {
            a[(i, i)] += noise + 1e-10 * mean_diag;
        }
        let a_inv = a.try_inverse().unwrap();
        let y = DVector::from_fn(n, |i, _| ys[i]);
        let times = times.to_vec();
        let kernel = *kernel;
        move |t1: f64, t2: f64| {
            let k1 = DVector::from_fn(n, |j, _| kernel.eval(t1 - times[j]));
            let k2 = DVector::from_fn(n, |j, _| kernel.eval(t2 - times[j]));
            let mean = k1.dot(&(&a_inv * &y));
            let cov = kernel.eval(t1 - t2) - k1.dot(&(&a_inv * k2));
            (mean, cov)
        }
    }

    #[test]
    fn matches_the_dense_inverse_oracle_on_both_code_paths() {
        let kernel = KernelSpec::matern52(1.3, 0.8).unwrap();
        let times = [0.1, 0.45, 0.8];
        let ys = [0.4, -0.2, 0.9];
        let noise = 0.05;
        let oracle = dense_oracle(&kernel, &times, &ys, noise);
        let ck = CoregionalizedKernel::scalar_only(kernel).unwrap();
        // Shared noise takes the eigenbasis path, per-output the dense path.
        for spec in [NoiseSpec::Shared(noise), NoiseSpec::PerOutput(vec![noise])] {
            let gp = GpPosterior::fit(ck.clone(), scalar_obs(&times, &ys, spec)).unwrap();
            for (t1, t2) in [(0.3, 0.3), (0.0, 0.6), (1.2, 0.2)] {
                let (want_mean, want_cov) = oracle(t1, t2);
                assert!((gp.posterior_mean(t1)[0] - want_mean).abs() < 1e-8);
                assert!((gp.posterior_cov(t1, t2)[(0, 0)] - want_cov).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn reverts_to_the_prior_far_from_data() {
        let obs = scalar_obs(&[0.0, 0.5, 1.0], &[1.0, -1.0, 2.0], NoiseSpec::Shared(0.01));
        let gp = GpPosterior::fit(se_scalar(), obs).unwrap();
        let far = 1.0 + 100.0;
        assert!(gp.posterior_mean(far)[0].abs() < 1e-6);
        assert!((gp.posterior_cov(far, far)[(0, 0)] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn prior_covariance_is_the_full_kernel() {
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let k = KernelSpec::matern32(1.7, 0.9).unwrap();
        let ck = CoregionalizedKernel::new(k, b.clone()).unwrap();
        let gp = GpPosterior::prior(ck);
        let cov = gp.posterior_cov(0.4, 0.4);
        for i in 0..2 {
            for j in 0..2 {
                assert!((cov[(i, j)] - 1.7 * b[(i, j)]).abs() < 1e-14);
            }
        }
        assert_eq!(gp.posterior_mean(0.4), DVector::zeros(2));
        assert_eq!(gp.posterior_deriv_mean(0.4), DVector::zeros(2));
    }

    #[test]
    fn derivative_mean_vanishes_for_symmetric_data() {
        let times = [-0.8, -0.3, 0.3, 0.8];
        let ys: Vec<f64> = times.iter().map(|t| t * t).collect();
        let gp = GpPosterior::fit(se_scalar(), scalar_obs(&times, &ys, NoiseSpec::Shared(0.0)))
            .unwrap();
        assert!(gp.posterior_deriv_mean(0.0)[0].abs() < 1e-8);
    }

    #[test]
    fn derivative_mean_matches_finite_differences_over_random_models() {
        use rand::Rng;
        let mut rng = ChaCha12Rng::seed_from_u64(905);
        let h = 1e-5;
        for trial in 0..50 {
            let n = rng.gen_range(3..8);
            let mut times: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            times.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
            let ys: Vec<f64> = times.iter().map(|_| rng.gen_range(-2.0..2.0)).collect();
            let family = [
                KernelFamily::SquaredExponential,
                KernelFamily::Matern52,
                KernelFamily::RationalQuadratic,
            ][trial % 3];
            let k = KernelSpec::new(family, 1.0, 0.7, 1.5).unwrap();
            let ck = CoregionalizedKernel::scalar_only(k).unwrap();
            let gp = GpPosterior::fit(ck, scalar_obs(&times, &ys, NoiseSpec::Shared(0.01)))
                .unwrap();
            let t_star = rng.gen_range(-1.2..1.2);
            let fd = (gp.posterior_mean(t_star + h)[0] - gp.posterior_mean(t_star - h)[0])
                / (2.0 * h);
            assert!(
                (gp.posterior_deriv_mean(t_star)[0] - fd).abs() < 1e-6,
                "trial {trial}"
            );
        }
    }

    #[test]
    fn prior_derivative_covariance_is_the_mixing_matrix_times_variance() {
        let b = DMatrix::from_row_slice(2, 2, &[1.5, -0.4, -0.4, 0.8]);
        let k = KernelSpec::matern52(1.2, 0.6).unwrap();
        let ck = CoregionalizedKernel::new(k, b.clone()).unwrap();
        let want = ck.derivative_covariance();
        let gp = GpPosterior::prior(ck);
        let got = gp.posterior_deriv_cov(0.3, 0.3);
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (got[(i, j)] - want[(i, j)]).abs() <= 1e-14 * want[(i, j)].abs().max(1.0)
                );
            }
        }
    }

    #[test]
    fn derivative_covariance_matches_cross_differences() {
        let kernel = KernelSpec::squared_exponential(1.0, 0.9).unwrap();
        let ck = CoregionalizedKernel::scalar_only(kernel).unwrap();
        let gp = GpPosterior::fit(
            ck,
            scalar_obs(&[0.0, 0.4, 1.1], &[0.5, -0.3, 0.8], NoiseSpec::Shared(0.02)),
        )
        .unwrap();
        let t = 0.37;
        let h = 1e-4;
        let c = |a: f64, b: f64| gp.posterior_cov(a, b)[(0, 0)];
        let fd = (c(t + h, t + h) - c(t + h, t - h) - c(t - h, t + h) + c(t - h, t - h))
            / (4.0 * h * h);
        let got = gp.posterior_deriv_cov(t, t)[(0, 0)];
        assert!((got - fd).abs() < 1e-4 * got.abs().max(1.0), "{got} vs {fd}");
    }

    #[test]
    fn conditioning_reduces_derivative_variance() {
        let ck = se_scalar();
        let prior_var = ck.scalar().derivative_variance();
        let gp = GpPosterior::fit(
            ck,
            scalar_obs(&[0.0, 0.5, 1.0], &[0.1, 0.3, -0.4], NoiseSpec::Shared(0.01)),
        )
        .unwrap();
        for t in [0.0, 0.25, 0.5, 0.9, 2.0] {
            assert!(gp.posterior_deriv_cov(t, t)[(0, 0)] <= prior_var + 1e-10);
        }
    }

    #[test]
    fn prior_sample_moments_match_the_kernel() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
        let k = KernelSpec::squared_exponential(1.0, 1.0).unwrap();
        let ck = CoregionalizedKernel::new(k, b).unwrap();
        let gp = GpPosterior::prior(ck.clone());
        let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
        let count = 10_000;
        let draws = gp.sample_paths(&grid, count, 7).unwrap();
        let m = grid.len();
        let d = 2;
        for dd in 0..d {
            for i in 0..m {
                let mean: f64 =
                    draws.iter().map(|p| p[(i, dd)]).sum::<f64>() / count as f64;
                assert!(mean.abs() < 4.0 / (count as f64).sqrt() * 1.5, "{mean}");
            }
        }
        // Sample covariance against B (x) K, spot-checked entries.
        let gram = ck.vector_gram(&grid);
        for (dd, i, e, j) in [(0, 0, 0, 0), (0, 1, 1, 1), (1, 2, 1, 2), (0, 0, 1, 4)] {
            let want = gram[(dd * m + i, e * m + j)];
            let got: f64 = draws
                .iter()
                .map(|p| p[(i, dd)] * p[(j, e)])
                .sum::<f64>()
                / count as f64;
            assert!(
                (got - want).abs() < 0.05 * want.abs().max(0.3),
                "cov[{dd}{i},{e}{j}]: {got} vs {want}"
            );
        }
    }

    #[test]
    fn sampling_is_deterministic_in_the_seed() {
        let gp = GpPosterior::fit(
            se_scalar(),
            scalar_obs(&[0.2, 0.7], &[0.5, -0.1], NoiseSpec::Shared(0.01)),
        )
        .unwrap();
        let grid = [0.0, 0.5, 1.0];
        let a = gp.sample_paths(&grid, 3, 42).unwrap();
        let b = gp.sample_paths(&grid, 3, 42).unwrap();
        assert_eq!(a, b);
        let c = gp.sample_paths(&grid, 3, 43).unwrap();
        assert_ne!(a, c);
        // Draw i depends only on (seed, i), not on the batch size.
        let sampler = gp.path_sampler(&grid, 42).unwrap();
        assert_eq!(sampler.draw(2), a[2]);
    }

    #[test]
    fn posterior_sample_covariance_converges_to_posterior_cov() {
        let gp = GpPosterior::fit(
            se_scalar(),
            scalar_obs(&[0.1, 0.6], &[0.8, -0.4], NoiseSpec::Shared(0.05)),
        )
        .unwrap();
        let grid = [0.0, 0.4, 0.9];
        let count = 100_000;
        let draws = gp.sample_paths(&grid, count, 11).unwrap();
        let means: Vec<f64> = (0..3).map(|i| gp.posterior_mean(grid[i])[0]).collect();
        for i in 0..3 {
            for j in 0..3 {
                let want = gp.posterior_cov(grid[i], grid[j])[(0, 0)];
                let got: f64 = draws
                    .iter()
                    .map(|p| (p[(i, 0)] - means[i]) * (p[(j, 0)] - means[j]))
                    .sum::<f64>()
                    / count as f64;
                let cii = gp.posterior_cov(grid[i], grid[i])[(0, 0)];
                let cjj = gp.posterior_cov(grid[j], grid[j])[(0, 0)];
                let se = ((cii * cjj + want * want) / count as f64).sqrt();
                assert!((got - want).abs() < 3.0 * se + 1e-12, "({i},{j}): {got} vs {want}");
            }
        }
    }

    #[test]
    fn scaling_targets_scales_the_mean() {
        let times = [0.0, 0.3, 0.9];
        let ys = [0.4, -0.7, 0.2];
        let scaled: Vec<f64> = ys.iter().map(|y| 2.5 * y).collect();
        let gp1 = GpPosterior::fit(se_scalar(), scalar_obs(&times, &ys, NoiseSpec::Shared(0.01)))
            .unwrap();
        let gp2 =
            GpPosterior::fit(se_scalar(), scalar_obs(&times, &scaled, NoiseSpec::Shared(0.01)))
                .unwrap();
        for t in [0.1, 0.5, 1.4] {
            let a = gp1.posterior_mean(t)[0];
            let b = gp2.posterior_mean(t)[0];
            assert!((b - 2.5 * a).abs() < 1e-10 * b.abs().max(1.0));
        }
    }

    #[test]
    fn eigen_and_dense_paths_agree_for_vector_models() {
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let k = KernelSpec::matern52(1.1, 0.7).unwrap();
        let ck = CoregionalizedKernel::new(k, b).unwrap();
        let times = vec![0.0, 0.4, 0.9];
        let targets = DMatrix::from_row_slice(3, 2, &[0.3, -0.1, 0.8, 0.4, -0.5, 0.2]);
        let shared = Observations::new(times.clone(), targets.clone(), NoiseSpec::Shared(0.02))
            .unwrap();
        let per_output =
            Observations::new(times, targets, NoiseSpec::PerOutput(vec![0.02, 0.02])).unwrap();
        let gp_eigen = GpPosterior::fit(ck.clone(), shared).unwrap();
        let gp_dense = GpPosterior::fit(ck, per_output).unwrap();
        for (t1, t2) in [(0.2, 0.2), (0.1, 0.7), (1.3, 0.5)] {
            let dm = (gp_eigen.posterior_mean(t1) - gp_dense.posterior_mean(t1)).amax();
            assert!(dm < 1e-9, "mean gap {dm}");
            let dc = (gp_eigen.posterior_cov(t1, t2) - gp_dense.posterior_cov(t1, t2)).amax();
            assert!(dc < 1e-9, "cov gap {dc}");
            let dd = (gp_eigen.posterior_deriv_cov(t1, t2) - gp_dense.posterior_deriv_cov(t1, t2))
                .amax();
            assert!(dd < 1e-9, "deriv cov gap {dd}");
        }
    }

    #[test]
    fn dense_factor_reconstructs_the_gram_matrix() {
        let kernel = KernelSpec::squared_exponential(1.0, 0.5).unwrap();
        let ck = CoregionalizedKernel::scalar_only(kernel).unwrap();
        let times: Vec<f64> = (0..30).map(|i| i as f64 * 0.03).collect();
        let ys: Vec<f64> = times.iter().map(|t| t.sin()).collect();
        // Per-output noise forces the dense path even for D=1.
        let obs = scalar_obs(&times, &ys, NoiseSpec::PerOutput(vec![0.0]));
        let gp = GpPosterior::fit(ck.clone(), obs).unwrap();
        let fitted = gp.fitted.as_ref().unwrap();
        let Factor::Dense { chol, .. } = &fitted.factor else {
            panic!("expected the dense factorization");
        };
        let l = chol.l();
        let reconstructed = &l * l.transpose();
        let mut gram = ck.vector_gram(&times);
        for i in 0..times.len() {
            gram[(i, i)] += gp.jitter_used();
        }
        let rel = (&reconstructed - &gram).norm() / gram.norm();
        assert!(rel < 1e-8, "relative Frobenius gap {rel}");
    }

    #[test]
    fn reads_csv_observations() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "t,y1,y2").unwrap();
        writeln!(f, "0.9,1.5,-0.5").unwrap();
        writeln!(f, "0.1,0.25,0.75").unwrap();
        drop(f);
        let obs = Observations::from_csv_path(&path, NoiseSpec::Shared(0.1))
            .unwrap()
            .unwrap();
        assert_eq!(obs.len(), 2);
        assert_eq!(obs.output_dim(), 2);
        // Rows come back sorted by time.
        assert_eq!(obs.times(), &[0.1, 0.9]);
        assert_eq!(obs.targets()[(0, 0)], 0.25);
        assert_eq!(obs.targets()[(1, 1)], -0.5);
    }

    #[test]
    fn header_only_csv_means_no_data() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        std::fs::write(&path, "t,y1\n").unwrap();
        let got = Observations::from_csv_path(&path, NoiseSpec::Shared(0.0)).unwrap();
        assert!(got.is_none());
    }

    #[test]
    fn csv_header_must_start_with_t() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "time,y1\n0.0,1.0\n").unwrap();
        assert!(Observations::from_csv_path(&path, NoiseSpec::Shared(0.0)).is_err());
    }

    #[test]
    fn rejects_dimension_mismatch_at_fit() {
        let obs = scalar_obs(&[0.1, 0.5], &[1.0, 2.0], NoiseSpec::Shared(0.0));
        let b = DMatrix::identity(2, 2);
        let ck = CoregionalizedKernel::new(
            KernelSpec::squared_exponential(1.0, 1.0).unwrap(),
            b,
        )
        .unwrap();
        assert!(matches!(
            GpPosterior::fit(ck, obs),
            Err(GpError::InvalidObservations(_))
        ));
    }

    #[test]
    fn rejects_bad_sampling_grids() {
        let gp = GpPosterior::prior(se_scalar());
        assert!(matches!(
            gp.sample_paths(&[0.0], 1, 1),
            Err(GpError::InvalidGrid(_))
        ));
        assert!(matches!(
            gp.sample_paths(&[0.0, 0.5, 0.5], 1, 1),
            Err(GpError::InvalidGrid(_))
        ));
    }
}
