//! Gauss-Legendre quadrature with cached node tables.
//!
//! Rules are generated by Newton iteration on the Legendre polynomials and
//! cached per node count, so repeated integrations reuse the same tables.
//! [`integrate_1d`] and [`integrate_2d`] evaluate a base rule plus a fixed
//! number of node-doubling refinements and report the difference between the
//! last two estimates as the error estimate. Non-convergence is flagged on the
//! result rather than raised, so callers can decide how strict to be.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

/// A Gauss-Legendre rule on the reference interval `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Computes an `n`-point rule by Newton iteration on `P_n`.
    fn compute(n: usize) -> Self {
        assert!(n >= 1, "rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Tricomi-style initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            for _ in 0..100 {
                let (p, p_prev) = legendre_pair(n, x);
                let slope = nf * (x * p - p_prev) / (x * x - 1.0);
                let step = p / slope;
                x -= step;
                if step.abs() < 1e-15 {
                    break;
                }
            }
            // One clean-up step so the weight uses a converged derivative.
            let (p, p_prev) = legendre_pair(n, x);
            let dp = nf * (x * p - p_prev) / (x * x - 1.0);
            x -= p / dp;
            if n % 2 == 1 && i == n / 2 {
                x = 0.0;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // Mirror so symmetry about 0 is exact.
            nodes[i] = -x.abs();
            nodes[n - 1 - i] = x.abs();
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// Nodes on `[-1, 1]`, ascending.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Weights matching [`Self::nodes`].
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrates `f` over `[a, b]` with this rule.
    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    if n == 1 {
        return (p, p_prev);
    }
    for k in 2..=n {
        let kf = k as f64;
        let next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = next;
    }
    (p, p_prev)
}

/// Returns the cached `n`-point rule, computing it on first use.
pub fn gauss_legendre(n: usize) -> Arc<GaussLegendre> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| Arc::new(GaussLegendre::compute(n)))
        .clone()
}

/// Node counts and tolerances for the refinement-based integrators.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSpec {
    /// Nodes per axis for the base estimate.
    pub nodes_per_axis: usize,
    /// Number of node-doubling refinements after the base estimate.
    pub refinements: usize,
    /// Absolute tolerance for declaring convergence.
    pub abs_tol: f64,
    /// Relative tolerance for declaring convergence.
    pub rel_tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            nodes_per_axis: 128,
            refinements: 1,
            abs_tol: 1e-8,
            rel_tol: 1e-8,
        }
    }
}

/// Outcome of a refinement-based integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    /// Estimate from the finest rule evaluated.
    pub value: f64,
    /// Absolute difference between the last two refinement levels.
    pub error_estimate: f64,
    /// Whether the error estimate met the requested tolerances.
    pub converged: bool,
    /// Nodes per axis in the finest rule.
    pub nodes_used: usize,
}

fn tolerance_met(err: f64, value: f64, spec: &QuadratureSpec) -> bool {
    err <= spec.abs_tol.max(spec.rel_tol * value.abs())
}

/// Integrates `f` over `[a, b]`, doubling the node count `spec.refinements`
/// times and comparing successive estimates.
pub fn integrate_1d<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> QuadResult {
    let mut n = spec.nodes_per_axis.max(2);
    let mut value = gauss_legendre(n).integrate(a, b, &f);
    let mut error = f64::INFINITY;
    for _ in 0..spec.refinements {
        n *= 2;
        let refined = gauss_legendre(n).integrate(a, b, &f);
        error = (refined - value).abs();
        value = refined;
    }
    QuadResult {
        value,
        error_estimate: error,
        converged: spec.refinements == 0 || tolerance_met(error, value, spec),
        nodes_used: n,
    }
}

/// Integrates `f` over the box `x_range x y_range` with a tensor-product rule,
/// refining both axes together.
pub fn integrate_2d<F: Fn(f64, f64) -> f64>(
    f: F,
    x_range: (f64, f64),
    y_range: (f64, f64),
    spec: &QuadratureSpec,
) -> QuadResult {
    let eval = |n: usize| -> f64 {
        let rule = gauss_legendre(n);
        let xm = 0.5 * (x_range.0 + x_range.1);
        let xh = 0.5 * (x_range.1 - x_range.0);
        let ym = 0.5 * (y_range.0 + y_range.1);
        let yh = 0.5 * (y_range.1 - y_range.0);
        let mut acc = 0.0;
        for (xi, wx) in rule.nodes().iter().zip(rule.weights()) {
            let x = xm + xh * xi;
            let mut inner = 0.0;
            for (yj, wy) in rule.nodes().iter().zip(rule.weights()) {
                inner += wy * f(x, ym + yh * yj);
            }
            acc += wx * inner;
        }
        acc * xh * yh
    };
    let mut n = spec.nodes_per_axis.max(2);
    let mut value = eval(n);
    let mut error = f64::INFINITY;
    for _ in 0..spec.refinements {
        n *= 2;
        let refined = eval(n);
        error = (refined - value).abs();
        value = refined;
    }
    QuadResult {
        value,
        error_estimate: error,
        converged: spec.refinements == 0 || tolerance_met(error, value, spec),
        nodes_used: n,
    }
}
