//! Multiplicative symmetrization, Poincaré and log-Sobolev constants, Nash
//! inequality checks and comparison lower bounds.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{check_dims, normalize, Environment, Kernel, Measure};
use crate::error::{Error, Result};
use crate::evolution::adjoint;
use crate::functional::{dirichlet_inner, dirichlet_pairs, entropy_unchecked};

/// Detailed-balance tolerance on the normalized flow `π̃(x)Q(x,y)`.
pub const EPS_REVERSIBLE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectralMethod {
    ExactEigen,
    ComparisonBound,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub gamma: f64,
    pub lambda: f64,
    pub method: SpectralMethod,
}

impl SpectralReport {
    fn new(gamma: f64, method: SpectralMethod) -> Self {
        let gamma = gamma.clamp(0.0, 1.0);
        SpectralReport { gamma, lambda: 1.0 - gamma, method }
    }
}

/// `Q = K* K`, reversible with respect to `π`.
pub fn symmetrization(k: &Kernel, pi: &Measure) -> Result<Kernel> {
    let a = adjoint(k, pi)?;
    Ok(Kernel::from_product(a.matrix() * k.matrix()))
}

/// `max_{x,y} |π̃(x)Q(x,y) − π̃(y)Q(y,x)|`.
pub fn detailed_balance_defect(q: &Kernel, pi: &Measure) -> Result<f64> {
    check_dims(q, pi)?;
    let w = normalize(pi);
    let w = w.weights();
    let m = q.matrix();
    let n = q.size();
    let mut worst: f64 = 0.0;
    for x in 0..n {
        for y in (x + 1)..n {
            worst = worst.max((w[x] * m[(x, y)] - w[y] * m[(y, x)]).abs());
        }
    }
    Ok(worst)
}

fn require_reversible(q: &Kernel, pi: &Measure) -> Result<()> {
    let d = detailed_balance_defect(q, pi)?;
    if d > EPS_REVERSIBLE {
        return Err(Error::Hypothesis(format!("kernel is not reversible for the measure (defect {d:e})")));
    }
    if let Some(x) = pi.weights().iter().position(|&v| v <= 0.0) {
        return Err(Error::Domain(format!("measure vanishes at state {x}")));
    }
    Ok(())
}

/// Eigenvalues of a reversible `Q` in decreasing order with `ℓ²(π̃)`-orthonormal
/// eigenfunctions as columns.
pub fn spectrum(q: &Kernel, pi: &Measure) -> Result<(Vec<f64>, DMatrix<f64>)> {
    require_reversible(q, pi)?;
    let pt = normalize(pi);
    let s = pt.weights().map(f64::sqrt);
    let m = q.matrix();
    let n = q.size();
    let mut a = DMatrix::from_fn(n, n, |x, y| s[x] * m[(x, y)] / s[y]);
    a = (&a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |x, k| eig.eigenvectors[(x, order[k])] / s[x]);
    Ok((values, vectors))
}

/// `γ(Q) = 1 − λ₂(Q)` from the symmetric conjugation `D^{1/2} Q D^{−1/2}`.
pub fn poincare_gamma(q: &Kernel, pi: &Measure) -> Result<SpectralReport> {
    let (values, _) = spectrum(q, pi)?;
    let gamma = if values.len() < 2 { 1.0 } else { 1.0 - values[1] };
    Ok(SpectralReport::new(gamma, SpectralMethod::ExactEigen))
}

/// `γ(K_t* K_t)` for `t = 1..=horizon`, one eigensolve per distinct shared kernel.
pub fn poincare_gammas(env: &Environment) -> Result<Vec<f64>> {
    let mut key_of = Vec::with_capacity(env.horizon());
    let mut distinct: Vec<usize> = Vec::new();
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    for t in 1..=env.horizon() {
        let key = (Arc::as_ptr(env.shared_kernel(t)) as usize, Arc::as_ptr(env.shared_measure(t)) as usize);
        let idx = *seen.entry(key).or_insert_with(|| {
            distinct.push(t);
            distinct.len() - 1
        });
        key_of.push(idx);
    }
    let gammas: Vec<f64> = distinct
        .par_iter()
        .map(|&t| {
            let q = symmetrization(env.kernel(t), env.measure(t))?;
            Ok(poincare_gamma(&q, env.measure(t))?.gamma)
        })
        .collect::<Result<_>>()?;
    Ok(key_of.into_iter().map(|i| gammas[i]).collect())
}

/// `γ_target ≥ γ_ref / (a·M)` from `E_ref ≤ a·E_target` and `π_target ≤ M·π_ref`.
///
/// Both dominations are checked: the measure one pointwise, the Dirichlet one on
/// the supplied probes.
pub fn comparison_gamma(
    target: (&Kernel, &Measure),
    reference: (&Kernel, &Measure),
    m: f64,
    a: f64,
    probes: &[DVector<f64>],
) -> Result<SpectralReport> {
    let (qt, pt) = target;
    let (qr, pr) = reference;
    check_dims(qt, pt)?;
    check_dims(qr, pr)?;
    check_dims(qt, pr)?;
    if !(m >= 1.0) || !(a > 0.0) {
        return Err(Error::Domain(format!("comparison constants M = {m}, a = {a}")));
    }
    for x in 0..pt.len() {
        if pt.get(x) > m * pr.get(x) * (1.0 + 1e-12) {
            return Err(Error::Hypothesis(format!(
                "measure domination fails at state {x}: {} > {m}·{}",
                pt.get(x),
                pr.get(x)
            )));
        }
    }
    for (i, f) in probes.iter().enumerate() {
        let er = dirichlet_pairs(f.as_slice(), qr.matrix(), pr.weights().as_slice());
        let et = dirichlet_pairs(f.as_slice(), qt.matrix(), pt.weights().as_slice());
        if er > a * et * (1.0 + 1e-9) + 1e-12 {
            return Err(Error::Hypothesis(format!(
                "Dirichlet domination fails on probe {i}: E_ref = {er:e} > {a}·{et:e}; witness {:?}",
                f.as_slice()
            )));
        }
    }
    let base = poincare_gamma(qr, pr)?.gamma;
    Ok(SpectralReport::new(base / (a * m), SpectralMethod::ComparisonBound))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogSobMethod {
    GridOracle,
    Optimization,
    ComparisonBound,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogSobReport {
    pub alpha_lower: f64,
    pub alpha_estimate: f64,
    pub certified: bool,
    pub method: LogSobMethod,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogSobBudget {
    pub restarts: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for LogSobBudget {
    fn default() -> Self {
        LogSobBudget { restarts: 32, iterations: 10_000, seed: 0 }
    }
}

const CONSTANT_CUTOFF: f64 = 1e-8;
const GRID_STEP: f64 = 1e-5;

/// `α ≥ γ (1 − 2π*) / log(1/π* − 1)` with `π* = min π̃`, equal to `γ/2` when `π* = 1/2`.
///
/// Sharp on two-point spaces.
pub fn alpha_from_gap(gamma: f64, pi: &Measure) -> f64 {
    let p = normalize(pi).min();
    if (1.0 - 2.0 * p).abs() < 1e-12 {
        return gamma / 2.0;
    }
    gamma * (1.0 - 2.0 * p) / (1.0 / p - 1.0).ln()
}

struct Ratio<'a> {
    q: &'a DMatrix<f64>,
    w: &'a [f64],
}

impl Ratio<'_> {
    fn mean(&self, f: &[f64]) -> f64 {
        f.iter().zip(self.w).map(|(v, w)| v * w).sum()
    }

    fn spread(&self, f: &[f64]) -> f64 {
        let m = self.mean(f);
        f.iter().zip(self.w).map(|(v, w)| (v - m) * (v - m) * w).sum::<f64>().sqrt()
    }

    fn value(&self, f: &[f64]) -> Option<f64> {
        if self.spread(f) < CONSTANT_CUTOFF {
            return None;
        }
        let l = entropy_unchecked(f, self.w);
        if l <= 0.0 {
            return None;
        }
        Some(dirichlet_pairs(f, self.q, self.w) / l)
    }

    /// Ratio and its gradient in `ℓ²(π̃)` coordinates.
    fn value_and_gradient(&self, f: &[f64]) -> Option<(f64, Vec<f64>)> {
        let r = self.value(f)?;
        let n = f.len();
        let fv = DVector::from_column_slice(f);
        let qf = self.q * &fv;
        let m: f64 = f.iter().zip(self.w).map(|(v, w)| v * v * w).sum();
        let l = entropy_unchecked(f, self.w);
        let g = (0..n)
            .map(|i| {
                let de = 2.0 * (f[i] - qf[i]);
                let dl = if f[i] == 0.0 { 0.0 } else { 2.0 * f[i] * (f[i] * f[i] / m).ln() };
                (de - r * dl) / l
            })
            .collect();
        Some((r, g))
    }
}

/// Estimates `α(Q)` for reversible `Q`.
///
/// Two states: exhaustive grid over `f = (cos θ, sin θ)` with golden-section
/// refinement, certified. Larger spaces: multi-start projected gradient descent
/// for the estimate, with the certified lower bound [`alpha_from_gap`].
pub fn logsob_alpha(q: &Kernel, pi: &Measure, budget: &LogSobBudget) -> Result<LogSobReport> {
    require_reversible(q, pi)?;
    let n = q.size();
    if n < 2 {
        return Err(Error::Domain("log-Sobolev constant needs at least two states".into()));
    }
    let gamma = poincare_gamma(q, pi)?.gamma;
    let pt = normalize(pi);
    let ratio = Ratio { q: q.matrix(), w: pt.weights().as_slice() };
    if n == 2 {
        let at = |th: f64| ratio.value(&[th.cos(), th.sin()]).unwrap_or(f64::INFINITY);
        // E(|f|) ≤ E(f) and L(|f|) = L(f), so the first quadrant suffices.
        let steps = (std::f64::consts::FRAC_PI_2 / GRID_STEP).ceil() as usize;
        let (mut best_i, mut best) = (0, f64::INFINITY);
        for i in 0..=steps {
            let v = at(i as f64 * GRID_STEP);
            if v < best {
                best = v;
                best_i = i;
            }
        }
        let lo = (best_i.saturating_sub(1)) as f64 * GRID_STEP;
        let hi = ((best_i + 1) as f64 * GRID_STEP).min(std::f64::consts::FRAC_PI_2);
        let refined = golden_section(at, lo, hi, 100).min(best);
        let estimate = refined.min(gamma / 2.0);
        let lower = (estimate - 1e-9 * estimate.max(1.0)).max(0.0);
        return Ok(LogSobReport { alpha_lower: lower, alpha_estimate: estimate, certified: true, method: LogSobMethod::GridOracle });
    }
    let runs: Vec<f64> = (0..budget.restarts)
        .into_par_iter()
        .map(|i| descend(&ratio, budget.seed.wrapping_add(i as u64), i, budget.iterations))
        .collect();
    let best = runs.into_iter().fold(f64::INFINITY, f64::min);
    let estimate = best.min(gamma / 2.0);
    let lower = alpha_from_gap(gamma, pi).min(estimate);
    Ok(LogSobReport { alpha_lower: lower, alpha_estimate: estimate, certified: true, method: LogSobMethod::ComparisonBound })
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    fc.min(fd)
}

fn descend(ratio: &Ratio, seed: u64, index: usize, iterations: usize) -> f64 {
    let n = ratio.w.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f: Vec<f64> = if index % 2 == 0 {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    } else {
        (0..n).map(|_| (3.0 * rng.random::<f64>()).exp()).collect()
    };
    let normalize_f = |f: &mut Vec<f64>| {
        let s = f.iter().zip(ratio.w).map(|(v, w)| v * v * w).sum::<f64>().sqrt();
        f.iter_mut().for_each(|v| *v /= s);
    };
    normalize_f(&mut f);
    let Some((mut r, mut g)) = ratio.value_and_gradient(&f) else {
        return f64::INFINITY;
    };
    let mut best = r;
    let mut step = 1.0;
    for _ in 0..iterations {
        let gn: f64 = g.iter().zip(ratio.w).map(|(v, w)| v * v * w).sum();
        if gn < 1e-24 {
            break;
        }
        let mut accepted = None;
        while step > 1e-14 {
            let mut cand: Vec<f64> = f.iter().zip(&g).map(|(v, d)| v - step * d).collect();
            normalize_f(&mut cand);
            match ratio.value_and_gradient(&cand) {
                Some((rc, gc)) if rc <= r - 1e-4 * step * gn => {
                    accepted = Some((cand, rc, gc));
                    break;
                }
                _ => step *= 0.5,
            }
        }
        let Some((cand, rc, gc)) = accepted else { break };
        let improvement = r - rc;
        f = cand;
        r = rc;
        g = gc;
        best = best.min(r);
        step = (step * 2.0).min(1e3);
        if improvement < 1e-15 * r.abs().max(1e-300) {
            break;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NashParams {
    pub c: f64,
    pub d: f64,
    pub t: u32,
}

impl NashParams {
    pub fn new(c: f64, d: f64, t: u32) -> Result<Self> {
        if !(c > 0.0) || !(d > 0.0) || t < 1 || !c.is_finite() || !d.is_finite() {
            return Err(Error::Domain(format!("Nash parameters C = {c}, D = {d}, T = {t}")));
        }
        Ok(NashParams { c, d, t })
    }

    /// `B = (1 + 1/T)(1 + ⌈4D⌉)`.
    pub fn b(&self) -> f64 {
        self.b_with(Rounding::Ceil)
    }

    pub fn b_with(&self, rounding: Rounding) -> f64 {
        (1.0 + 1.0 / self.t as f64) * (1.0 + rounding.apply(4.0 * self.d))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rounding {
    Floor,
    Ceil,
}

impl Rounding {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Rounding::Floor => x.floor(),
            Rounding::Ceil => x.ceil(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// Largest `LHS − RHS` over probes; nonpositive means no violation.
    pub worst_margin: f64,
    pub worst_probe: Option<usize>,
    pub violations: Vec<usize>,
    pub checked: usize,
}

impl ProbeReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

struct NashTerms {
    l2: f64,
    l1: f64,
    e: f64,
}

fn nash_terms(f: &DVector<f64>, q: &DMatrix<f64>, w: &[f64]) -> NashTerms {
    let l2 = f.iter().zip(w).map(|(v, w)| v * v * w).sum::<f64>().sqrt();
    let l1 = f.iter().zip(w).map(|(v, w)| v.abs() * w).sum::<f64>();
    NashTerms { l2, l1, e: dirichlet_inner(f.as_slice(), q, w) }
}

/// Evaluates `‖f‖₂^{2+1/D} ≤ C(E(f,f) + ‖f‖₂²/T)‖f‖₁^{1/D}` in `ℓ^p(π̃)` on each probe.
///
/// A clean pass is evidence on the probe family, not a proof for all `f`.
pub fn nash_check(q: &Kernel, pi: &Measure, params: &NashParams, probes: &[DVector<f64>]) -> Result<ProbeReport> {
    require_reversible(q, pi)?;
    let pt = normalize(pi);
    let w = pt.weights().as_slice();
    let mut report = ProbeReport { worst_margin: f64::NEG_INFINITY, worst_probe: None, violations: vec![], checked: 0 };
    for (i, f) in probes.iter().enumerate() {
        let s = nash_terms(f, q.matrix(), w);
        if s.l1 == 0.0 {
            continue;
        }
        let lhs = s.l2.powf(2.0 + 1.0 / params.d);
        let rhs = params.c * (s.e + s.l2 * s.l2 / params.t as f64) * s.l1.powf(1.0 / params.d);
        let margin = lhs - rhs;
        report.checked += 1;
        if margin > report.worst_margin {
            report.worst_margin = margin;
            report.worst_probe = Some(i);
        }
        if margin > 1e-9 * rhs.abs().max(1e-300) {
            report.violations.push(i);
        }
    }
    Ok(report)
}

/// Smallest `C` for which every probe satisfies `N(C, D, T)` on `(Q, π̃)`.
pub fn fit_nash_c(q: &Kernel, pi: &Measure, d: f64, t: u32, probes: &[DVector<f64>]) -> Result<f64> {
    require_reversible(q, pi)?;
    let pt = normalize(pi);
    let w = pt.weights().as_slice();
    let mut c: f64 = 0.0;
    for f in probes {
        let s = nash_terms(f, q.matrix(), w);
        if s.l1 == 0.0 {
            continue;
        }
        c = c.max(s.l2.powf(2.0 + 1.0 / d) / ((s.e + s.l2 * s.l2 / t as f64) * s.l1.powf(1.0 / d)));
    }
    Ok(c)
}

/// `C` fitted over every distinct `(K_t* K_t, π̃_t)` of an environment with probes built per step.
pub fn fit_nash_c_env(env: &Environment, d: f64, t: u32, random: usize, seed: u64) -> Result<f64> {
    let mut steps = Vec::new();
    for (s, _) in env.kernel_runs() {
        steps.push(s);
    }
    let cs: Vec<f64> = steps
        .par_iter()
        .map(|&s| {
            let q = symmetrization(env.kernel(s), env.measure(s))?;
            let probes = probe_family(&q, env.measure(s), random, seed);
            fit_nash_c(&q, env.measure(s), d, t, &probes)
        })
        .collect::<Result<_>>()?;
    Ok(cs.into_iter().fold(0.0, f64::max))
}

/// `C' = 2C · M'^{(1 + 4/d)(1 + 2/d)}`, keeping `D` and `T`.
pub fn nash_transfer(params: &NashParams, m_prime: f64, d: f64) -> Result<NashParams> {
    if !(m_prime >= 1.0) || !(d > 0.0) {
        return Err(Error::Domain(format!("transfer constants M' = {m_prime}, d = {d}")));
    }
    NashParams::new(2.0 * params.c * m_prime.powf((1.0 + 4.0 / d) * (1.0 + 2.0 / d)), params.d, params.t)
}

/// Checks `‖Kf‖_{ℓ^p(π̃)} ≤ ‖f‖_{ℓ^q(π̃)}` for `p = q(1+α)`, `q ∈ {2, 3, 4}`.
pub fn hypercontractivity_check(k: &Kernel, pi: &Measure, alpha: f64, probes: &[DVector<f64>]) -> Result<ProbeReport> {
    check_dims(k, pi)?;
    let pt = normalize(pi);
    let w = pt.weights();
    let norm = |f: &DVector<f64>, p: f64| f.iter().zip(w.iter()).map(|(v, w)| v.abs().powf(p) * w).sum::<f64>().powf(1.0 / p);
    let mut report = ProbeReport { worst_margin: f64::NEG_INFINITY, worst_probe: None, violations: vec![], checked: 0 };
    for (i, f) in probes.iter().enumerate() {
        let kf = k.apply(f);
        for q in [2.0, 3.0, 4.0] {
            let lhs = norm(&kf, q * (1.0 + alpha));
            let rhs = norm(f, q);
            let margin = lhs - rhs;
            report.checked += 1;
            if margin > report.worst_margin {
                report.worst_margin = margin;
                report.worst_probe = Some(i);
            }
            if lhs > rhs * (1.0 + 1e-9) {
                report.violations.push(i);
            }
        }
    }
    report.violations.dedup();
    Ok(report)
}

/// Indicators, centered indicators, index ramps, heat bumps `Q^k 1_x` and `random` seeded
/// random functions.
pub fn probe_family(q: &Kernel, pi: &Measure, random: usize, seed: u64) -> Vec<DVector<f64>> {
    let n = q.size();
    let pt = normalize(pi);
    let mut out = Vec::new();
    for x in 0..n {
        let mut e = DVector::zeros(n);
        e[x] = 1.0;
        out.push(e.clone());
        out.push(e.add_scalar(-pt.get(x)));
    }
    out.push(DVector::from_fn(n, |x, _| x as f64));
    out.push(DVector::from_fn(n, |x, _| (n - x) as f64));
    out.push(DVector::from_fn(n, |x, _| (x as f64 - (n as f64 - 1.0) / 2.0).abs()));
    let centers: Vec<usize> = if n <= 16 { (0..n).collect() } else { (0..n).step_by(n / 8).collect() };
    for &x in &centers {
        let mut h = DVector::zeros(n);
        h[x] = 1.0;
        for k in 1..=16usize {
            h = q.apply(&h);
            if k.is_power_of_two() {
                out.push(h.clone());
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..random {
        let f = match i % 3 {
            0 => DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
            1 => DVector::from_fn(n, |_, _| rng.random::<f64>()),
            _ => DVector::from_fn(n, |_, _| (4.0 * rng.random::<f64>()).exp()),
        };
        out.push(f);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::{cycle_edges, kernel_from_conductances, lazify, ConductanceMatrix};
    use approx::assert_abs_diff_eq;

    fn flip(p: f64) -> Kernel {
        Kernel::new(DMatrix::from_row_slice(2, 2, &[1.0 - p, p, p, 1.0 - p])).unwrap()
    }

    fn lazy_cycle(n: usize) -> (Kernel, Measure) {
        let edges: Vec<_> = cycle_edges(n).into_iter().map(|(x, y)| (x, y, 1.0)).collect();
        let (p, pi) = kernel_from_conductances(&ConductanceMatrix::from_edges(n, &edges).unwrap());
        (lazify(&p, 0.5).unwrap(), pi)
    }

    fn random_kernel(n: usize, seed: u64) -> Kernel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>());
        for mut r in m.row_iter_mut() {
            let s = r.sum();
            r /= s;
        }
        Kernel::with_tolerance(m, 1e-12).unwrap()
    }

    fn stationary(k: &Kernel) -> Measure {
        let mut mu = DVector::from_element(k.size(), 1.0 / k.size() as f64);
        for _ in 0..5000 {
            mu = k.push(&mu);
        }
        Measure::from_vector(mu).unwrap()
    }

    #[test]
    fn symmetrization_examples() {
        let (k, pi) = lazy_cycle(6);
        let q = symmetrization(&k, &pi).unwrap();
        assert!((q.matrix() - k.matrix() * k.matrix()).amax() < 1e-15);
        let perm = Kernel::new(DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0])).unwrap();
        let q = symmetrization(&perm, &Measure::uniform(3)).unwrap();
        assert!((q.matrix() - DMatrix::identity(3, 3)).amax() < 1e-15);
        for seed in 0..5 {
            let k = random_kernel(5, seed);
            let pi = stationary(&k);
            let q = symmetrization(&k, &pi).unwrap();
            assert!(detailed_balance_defect(&q, &pi).unwrap() < 1e-12);
            assert!(q.matrix().row_iter().all(|r| (r.sum() - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn two_state_gamma() {
        for p in [0.1, 0.25, 0.5] {
            let k = flip(p);
            let q = symmetrization(&k, &Measure::uniform(2)).unwrap();
            let r = poincare_gamma(&q, &Measure::uniform(2)).unwrap();
            assert_abs_diff_eq!(r.gamma, 1.0 - (1.0 - 2.0 * p).powi(2), epsilon = 1e-14);
            assert_eq!(r.lambda, 1.0 - r.gamma);
        }
    }

    #[test]
    fn lazy_cycle_gamma_matches_circulant_formula() {
        for n in [5, 8, 16] {
            let (k, pi) = lazy_cycle(n);
            let q = symmetrization(&k, &pi).unwrap();
            let g = poincare_gamma(&q, &pi).unwrap().gamma;
            let lam = (1.0 + (2.0 * std::f64::consts::PI / n as f64).cos()) / 2.0;
            assert_abs_diff_eq!(g, 1.0 - lam * lam, epsilon = 1e-12);
        }
    }

    #[test]
    fn gamma_is_variational_infimum() {
        let k = random_kernel(6, 3);
        let pi = stationary(&k);
        let q = symmetrization(&k, &pi).unwrap();
        let g = poincare_gamma(&q, &pi).unwrap().gamma;
        let pt = normalize(&pi);
        let (_, vecs) = spectrum(&q, &pi).unwrap();
        let ratio = |f: &DVector<f64>| {
            let e = dirichlet_inner(f.as_slice(), q.matrix(), pt.weights().as_slice());
            e / crate::functional::variance(f.as_slice(), &pt).unwrap()
        };
        let v = vecs.column(1).into_owned();
        assert_abs_diff_eq!(ratio(&v), g, epsilon = 1e-9);
        for f in probe_family(&q, &pi, 200, 1) {
            if crate::functional::variance(f.as_slice(), &pt).unwrap() > 1e-12 {
                assert!(ratio(&f) >= g - 1e-9);
            }
        }
    }

    #[test]
    fn non_reversible_rejected() {
        let rot = Kernel::new(DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0])).unwrap();
        assert!(matches!(poincare_gamma(&rot, &Measure::uniform(3)), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn two_point_alpha_matches_closed_form() {
        // Reversible two-state chains with stationary (p, 1−p).
        for (p, s) in [(0.5, 0.3), (0.3, 0.2), (0.1, 0.05)] {
            let a = s * (1.0 - p);
            let b = s * p;
            let q = Kernel::new(DMatrix::from_row_slice(2, 2, &[1.0 - a, a, b, 1.0 - b])).unwrap();
            let pi = Measure::new(vec![p, 1.0 - p]).unwrap();
            let rep = logsob_alpha(&q, &pi, &LogSobBudget::default()).unwrap();
            let gamma = poincare_gamma(&q, &pi).unwrap().gamma;
            assert_abs_diff_eq!(gamma, s, epsilon = 1e-12);
            assert_eq!(rep.method, LogSobMethod::GridOracle);
            assert!(rep.certified);
            assert_abs_diff_eq!(rep.alpha_estimate, alpha_from_gap(gamma, &pi), epsilon = 1e-8);
            assert!(rep.alpha_lower <= rep.alpha_estimate);
            assert!(2.0 * rep.alpha_estimate <= gamma + 1e-9);
        }
    }

    #[test]
    fn two_point_grid_agrees_with_optimizer() {
        let q = Kernel::new(DMatrix::from_row_slice(2, 2, &[0.8, 0.2, 0.2, 0.8])).unwrap();
        let pi = Measure::uniform(2);
        let grid = logsob_alpha(&q, &pi, &LogSobBudget::default()).unwrap().alpha_estimate;
        let pt = normalize(&pi);
        let ratio = Ratio { q: q.matrix(), w: pt.weights().as_slice() };
        let opt = (0..8).map(|i| descend(&ratio, i, i as usize, 10_000)).fold(f64::INFINITY, f64::min).min(0.2);
        assert_abs_diff_eq!(grid, opt, epsilon = 1e-4);
    }

    #[test]
    fn larger_alpha_respects_gap() {
        let (k, pi) = lazy_cycle(6);
        let q = symmetrization(&k, &pi).unwrap();
        let gamma = poincare_gamma(&q, &pi).unwrap().gamma;
        let rep = logsob_alpha(&q, &pi, &LogSobBudget { restarts: 8, iterations: 2000, seed: 4 }).unwrap();
        assert!(2.0 * rep.alpha_estimate <= gamma + 1e-9);
        assert!(rep.alpha_lower <= rep.alpha_estimate);
        assert!(rep.alpha_lower > 0.0);
        let again = logsob_alpha(&q, &pi, &LogSobBudget { restarts: 8, iterations: 2000, seed: 4 }).unwrap();
        assert_eq!(rep, again);
    }

    #[test]
    fn comparison_examples() {
        let (k, pi) = lazy_cycle(8);
        let q = symmetrization(&k, &pi).unwrap();
        let probes = probe_family(&q, &pi, 50, 2);
        let exact = poincare_gamma(&q, &pi).unwrap().gamma;
        let same = comparison_gamma((&q, &pi), (&q, &pi), 1.0, 1.0, &probes).unwrap();
        assert_abs_diff_eq!(same.gamma, exact, epsilon = 1e-15);
        assert_eq!(same.method, SpectralMethod::ComparisonBound);
        // the identity kernel has a vanishing Dirichlet form, so any reference with motion fails
        let id = Kernel::identity(8);
        let err = comparison_gamma((&id, &pi), (&q, &pi), 1.0, 1.0, &probes).unwrap_err();
        assert!(matches!(err, Error::Hypothesis(ref s) if s.contains("witness")));
        let doubled = pi.scaled(2.0).unwrap();
        assert!(comparison_gamma((&q, &doubled), (&q, &pi), 1.5, 1.0, &probes).is_err());
    }

    #[test]
    fn poincare_gammas_reuse_shared_kernels() {
        let (k, pi) = lazy_cycle(5);
        let env = Environment::constant(k.clone(), pi.clone(), 40).unwrap();
        let gs = poincare_gammas(&env).unwrap();
        assert_eq!(gs.len(), 40);
        let g = poincare_gamma(&symmetrization(&k, &pi).unwrap(), &pi).unwrap().gamma;
        assert!(gs.iter().all(|&v| v == g));
    }

    #[test]
    fn nash_constant_function_needs_c_at_least_t() {
        let (k, pi) = lazy_cycle(6);
        let q = symmetrization(&k, &pi).unwrap();
        let one = vec![DVector::from_element(6, 1.0)];
        assert!(nash_check(&q, &pi, &NashParams::new(10.0, 1.0, 10).unwrap(), &one).unwrap().passed());
        assert!(!nash_check(&q, &pi, &NashParams::new(9.9, 1.0, 10).unwrap(), &one).unwrap().passed());
    }

    #[test]
    fn nash_fit_and_small_c_violation() {
        let (k, pi) = lazy_cycle(12);
        let q = symmetrization(&k, &pi).unwrap();
        let probes = probe_family(&q, &pi, 100, 7);
        let c = fit_nash_c(&q, &pi, 0.25, 144, &probes).unwrap();
        assert!(nash_check(&q, &pi, &NashParams::new(c, 0.25, 144).unwrap(), &probes).unwrap().passed());
        let rep = nash_check(&q, &pi, &NashParams::new(0.5 * c, 0.25, 144).unwrap(), &probes).unwrap();
        assert!(!rep.passed());
        assert!(rep.worst_margin > 0.0);
    }

    #[test]
    fn nash_b_and_transfer() {
        let p = NashParams::new(3.0, 1.0, 100).unwrap();
        assert_abs_diff_eq!(p.b(), 5.05, epsilon = 1e-14);
        assert_abs_diff_eq!(NashParams::new(1.0, 0.3, 1).unwrap().b(), 2.0 * 3.0);
        assert_abs_diff_eq!(NashParams::new(1.0, 0.3, 1).unwrap().b_with(Rounding::Floor), 2.0 * 2.0);
        assert_abs_diff_eq!(nash_transfer(&p, 1.0, 2.0).unwrap().c, 6.0);
        assert_abs_diff_eq!(nash_transfer(&p, 2.0, 4.0).unwrap().c, 48.0, epsilon = 1e-12);
        assert!(NashParams::new(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn hypercontractivity_examples() {
        let k = flip(0.2);
        let pi = Measure::uniform(2);
        let q = symmetrization(&k, &pi).unwrap();
        let probes = probe_family(&q, &pi, 1000, 11);
        assert!(hypercontractivity_check(&k, &pi, 0.0, &probes).unwrap().passed());
        let alpha = logsob_alpha(&q, &pi, &LogSobBudget::default()).unwrap().alpha_lower;
        assert!(hypercontractivity_check(&k, &pi, alpha, &probes).unwrap().passed());
        assert!(!hypercontractivity_check(&k, &pi, 20.0 * alpha + 1.0, &probes).unwrap().passed());
    }
}
