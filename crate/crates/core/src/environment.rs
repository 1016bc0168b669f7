//! State spaces, measures, Markov kernels and non-decreasing environments.
//!
//! An [`Environment`] is a finite sequence of pairs `(K_t, π_t)` for
//! `t = 1..=horizon`. The measure at time 0 is identified with the measure at
//! time 1. Consecutive steps that share a kernel are stored once behind an
//! `Arc`, so long horizons with piecewise-constant schedules stay cheap.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EPS_ROW: f64 = 1e-12;
pub const EPS_INV: f64 = 1e-10;
pub const EPS_MONO: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub row: f64,
    /// Relative to the total mass of the measure.
    pub inv: f64,
    pub mono: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { row: EPS_ROW, inv: EPS_INV, mono: EPS_MONO }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace {
    size: usize,
    labels: Option<Vec<String>>,
}

impl StateSpace {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::Structural("state space must have at least one state".into()));
        }
        Ok(StateSpace { size, labels: None })
    }

    pub fn with_labels(labels: Vec<String>) -> Result<Self> {
        let mut space = StateSpace::new(labels.len())?;
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::Structural(format!("duplicate state label {l:?}")));
            }
        }
        space.labels = Some(labels);
        Ok(space)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn label(&self, x: usize) -> String {
        match &self.labels {
            Some(l) => l[x].clone(),
            None => x.to_string(),
        }
    }
}

/// Nonnegative weights with positive total mass.
#[derive(Clone, Debug, PartialEq)]
pub struct Measure {
    weights: DVector<f64>,
    mass: f64,
    probability: bool,
}

impl Measure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        Measure::from_vector(DVector::from_vec(weights))
    }

    pub fn from_vector(weights: DVector<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Structural("measure over an empty state space".into()));
        }
        for (x, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Domain(format!("measure weight at state {x} is {w}")));
            }
        }
        let mass = weights.sum();
        if mass <= 0.0 {
            return Err(Error::Domain("measure has zero total mass".into()));
        }
        Ok(Measure { weights, mass, probability: false })
    }

    pub fn uniform(n: usize) -> Self {
        normalize(&Measure::new(vec![1.0; n.max(1)]).expect("positive weights"))
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn get(&self, x: usize) -> f64 {
        self.weights[x]
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn min(&self) -> f64 {
        self.weights.min()
    }

    pub fn is_positive(&self) -> bool {
        self.weights.iter().all(|&w| w > 0.0)
    }

    /// `π(f) = Σ π(x) f(x)`.
    pub fn integrate(&self, f: &DVector<f64>) -> f64 {
        self.weights.dot(f)
    }

    pub fn scaled(&self, lambda: f64) -> Result<Measure> {
        Measure::from_vector(&self.weights * lambda)
    }
}

/// `π̃ = π / π(V)`. Normalizing an already normalized measure returns it unchanged.
pub fn normalize(pi: &Measure) -> Measure {
    if pi.probability {
        return pi.clone();
    }
    let weights = &pi.weights / pi.mass;
    let mass = weights.sum();
    Measure { weights, mass, probability: true }
}

/// A row-stochastic matrix acting on functions by `(Kf)(x) = Σ_y K(x,y) f(y)`
/// and on measures by `(μK)(y) = Σ_x μ(x) K(x,y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    m: DMatrix<f64>,
}

impl Kernel {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        Kernel::with_tolerance(m, EPS_ROW)
    }

    pub fn with_tolerance(m: DMatrix<f64>, tol: f64) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::Structural(format!("kernel must be square and nonempty, got {}x{}", m.nrows(), m.ncols())));
        }
        for x in 0..m.nrows() {
            let mut s = 0.0;
            for y in 0..m.ncols() {
                let v = m[(x, y)];
                if !v.is_finite() || v < -tol || v > 1.0 + tol {
                    return Err(Error::Domain(format!("kernel entry ({x},{y}) = {v} outside [0,1]")));
                }
                s += v;
            }
            if (s - 1.0).abs() > tol {
                return Err(Error::Domain(format!("kernel row {x} sums to {s}")));
            }
        }
        Ok(Kernel { m })
    }

    /// Wraps a matrix known to be stochastic up to accumulated rounding, e.g. a product of kernels.
    pub(crate) fn from_product(m: DMatrix<f64>) -> Self {
        Kernel { m }
    }

    pub fn identity(n: usize) -> Self {
        Kernel { m: DMatrix::identity(n, n) }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn size(&self) -> usize {
        self.m.nrows()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.m[(x, y)]
    }

    pub fn apply(&self, f: &DVector<f64>) -> DVector<f64> {
        &self.m * f
    }

    pub fn push(&self, mu: &DVector<f64>) -> DVector<f64> {
        self.m.tr_mul(mu)
    }
}

/// `max_x |(πK)(x) − π(x)| ≤ tol · π(V)`.
pub fn is_invariant(k: &Kernel, pi: &Measure, tol: f64) -> Result<bool> {
    check_dims(k, pi)?;
    Ok(invariance_residual(k, pi).amax() <= tol * pi.mass())
}

pub(crate) fn invariance_residual(k: &Kernel, pi: &Measure) -> DVector<f64> {
    k.push(pi.weights()) - pi.weights()
}

pub(crate) fn check_dims(k: &Kernel, pi: &Measure) -> Result<()> {
    if k.size() != pi.len() {
        return Err(Error::Structural(format!("kernel has {} states but measure has {}", k.size(), pi.len())));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Environment {
    kernels: Vec<Arc<Kernel>>,
    measures: Vec<Arc<Measure>>,
    space: StateSpace,
}

impl Environment {
    pub fn new(kernels: Vec<Kernel>, measures: Vec<Measure>) -> Result<Self> {
        Environment::from_shared(kernels.into_iter().map(Arc::new).collect(), measures.into_iter().map(Arc::new).collect())
    }

    /// Steps sharing an `Arc` are treated as identical by downstream caches.
    pub fn from_shared(kernels: Vec<Arc<Kernel>>, measures: Vec<Arc<Measure>>) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::Structural("environment horizon must be at least 1".into()));
        }
        if kernels.len() != measures.len() {
            return Err(Error::Structural(format!("{} kernels but {} measures", kernels.len(), measures.len())));
        }
        let n = kernels[0].size();
        for (i, (k, m)) in kernels.iter().zip(&measures).enumerate() {
            if k.size() != n || m.len() != n {
                return Err(Error::Structural(format!("step {} has inconsistent state count", i + 1)));
            }
        }
        Ok(Environment { kernels, measures, space: StateSpace::new(n)? })
    }

    pub fn constant(k: Kernel, pi: Measure, horizon: usize) -> Result<Self> {
        let k = Arc::new(k);
        let pi = Arc::new(pi);
        Environment::from_shared(vec![k; horizon], vec![pi; horizon])
    }

    /// Builds the environment and rejects it unless [`validate_environment`] passes.
    pub fn validated(kernels: Vec<Arc<Kernel>>, measures: Vec<Arc<Measure>>, tol: &Tolerances) -> Result<Self> {
        let env = Environment::from_shared(kernels, measures)?;
        let report = validate_environment(&env, tol);
        match report.violations.first() {
            None => Ok(env),
            Some(v) => Err(Error::Hypothesis(format!("environment not non-decreasing: {v} ({} violations)", report.violations.len()))),
        }
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.size() {
            return Err(Error::Structural(format!("{} labels for {} states", labels.len(), self.size())));
        }
        self.space = StateSpace::with_labels(labels)?;
        Ok(self)
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn size(&self) -> usize {
        self.space.size()
    }

    pub fn horizon(&self) -> usize {
        self.kernels.len()
    }

    /// `K_t` for `1 ≤ t ≤ horizon`.
    pub fn kernel(&self, t: usize) -> &Kernel {
        self.shared_kernel(t)
    }

    pub fn shared_kernel(&self, t: usize) -> &Arc<Kernel> {
        assert!(t >= 1 && t <= self.horizon(), "kernel index {t} outside [1, {}]", self.horizon());
        &self.kernels[t - 1]
    }

    /// `π_t` for `0 ≤ t ≤ horizon`, with `π_0 = π_1`.
    pub fn measure(&self, t: usize) -> &Measure {
        self.shared_measure(t)
    }

    pub fn shared_measure(&self, t: usize) -> &Arc<Measure> {
        assert!(t <= self.horizon(), "measure index {t} outside [0, {}]", self.horizon());
        &self.measures[t.max(1) - 1]
    }

    pub fn check_time(&self, t: usize) -> Result<()> {
        if t > self.horizon() {
            return Err(Error::Range { index: t, horizon: self.horizon() });
        }
        Ok(())
    }

    /// True when every step carries the same kernel and measure.
    pub fn is_homogeneous(&self) -> bool {
        let (k0, m0) = (&self.kernels[0], &self.measures[0]);
        self.kernels.iter().all(|k| Arc::ptr_eq(k, k0) || k == k0) && self.measures.iter().all(|m| Arc::ptr_eq(m, m0) || m == m0)
    }

    pub fn truncated(&self, horizon: usize) -> Result<Environment> {
        if horizon == 0 || horizon > self.horizon() {
            return Err(Error::Range { index: horizon, horizon: self.horizon() });
        }
        Ok(Environment {
            kernels: self.kernels[..horizon].to_vec(),
            measures: self.measures[..horizon].to_vec(),
            space: self.space.clone(),
        })
    }

    /// Maximal runs `[start, end]` of consecutive steps sharing one kernel allocation.
    pub fn kernel_runs(&self) -> Vec<(usize, usize)> {
        let mut runs = Vec::new();
        let mut start = 1;
        for t in 2..=self.horizon() + 1 {
            if t > self.horizon() || !Arc::ptr_eq(&self.kernels[t - 1], &self.kernels[start - 1]) {
                runs.push((start, t - 1));
                start = t;
            }
        }
        runs
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Invariance,
    Monotonicity,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Check::Invariance => "invariance",
            Check::Monotonicity => "monotonicity",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub check: Check,
    pub t: usize,
    pub state: usize,
    pub magnitude: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} failure at t={} state={} magnitude={:e}", self.check, self.t, self.state, self.magnitude)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

/// Lists every invariance failure `|(π_t K_t)(x) − π_t(x)| > tol.inv · π_t(V)` and every
/// monotonicity failure `π_{t+1}(x) < π_t(x) − tol.mono`. Monotonicity failures are
/// reported at index `t` with magnitude `π_t(x) − π_{t+1}(x)`.
pub fn validate_environment(env: &Environment, tol: &Tolerances) -> ValidationReport {
    let mut violations = Vec::new();
    let mut last: Option<(&Arc<Kernel>, &Arc<Measure>)> = None;
    let mut last_failures: Vec<(usize, f64)> = Vec::new();
    for t in 1..=env.horizon() {
        let (k, m) = (env.shared_kernel(t), env.shared_measure(t));
        let repeated = matches!(last, Some((lk, lm)) if Arc::ptr_eq(lk, k) && Arc::ptr_eq(lm, m));
        if !repeated {
            let limit = tol.inv * m.mass();
            last_failures = invariance_residual(k, m)
                .iter()
                .enumerate()
                .filter(|(_, r)| !(r.abs() <= limit))
                .map(|(x, r)| (x, r.abs()))
                .collect();
            last = Some((k, m));
        }
        violations.extend(last_failures.iter().map(|&(state, magnitude)| Violation { check: Check::Invariance, t, state, magnitude }));
    }
    for t in 1..env.horizon() {
        let (a, b) = (env.shared_measure(t), env.shared_measure(t + 1));
        if Arc::ptr_eq(a, b) {
            continue;
        }
        for x in 0..env.size() {
            let drop = a.get(x) - b.get(x);
            if drop > tol.mono {
                violations.push(Violation { check: Check::Monotonicity, t, state: x, magnitude: drop });
            }
        }
    }
    ValidationReport { ok: violations.is_empty(), violations }
}
