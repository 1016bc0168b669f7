//! Merging-time bounds from Poincaré, Nash and log-Sobolev constants, their
//! first-crossing searches and the exact brute-force oracle.
//!
//! Gamma and alpha sequences are indexed by time: `gammas[s - 1] = γ_s`. The
//! measure at time 0 is the one at time 1.

pub mod machinery;
pub mod sweep;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::environment::{normalize, Environment, Measure};
use crate::error::{Error, Result};
use crate::evolution::{Distribution, Propagator};
use crate::functional::{separation_distance, tv_distance};
use crate::spectral::{NashParams, Rounding};

pub use sweep::{bound_vs_exact_sweep, ExperimentReport, Query, SweepConstants, SweepRow, Theorem};

/// First time a curve reaches the target, or the statement that it never does within the horizon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Crossing {
    At(usize),
    NotReached,
}

impl Crossing {
    pub fn time(self) -> Option<usize> {
        match self {
            Crossing::At(t) => Some(t),
            Crossing::NotReached => None,
        }
    }
}

impl fmt::Display for Crossing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Crossing::At(t) => write!(f, "{t}"),
            Crossing::NotReached => f.write_str("not-reached"),
        }
    }
}

impl Serialize for Crossing {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Crossing::At(t) => s.serialize_u64(*t as u64),
            Crossing::NotReached => s.serialize_str("not-reached"),
        }
    }
}

impl<'de> Deserialize<'de> for Crossing {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            At(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::At(t) => Ok(Crossing::At(t as usize)),
            Raw::Text(s) if s == "not-reached" => Ok(Crossing::NotReached),
            Raw::Text(s) => Err(serde::de::Error::custom(format!("invalid crossing {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distance {
    Tv,
    Separation,
}

/// `∏_{l=a+1}^{b} (1 − γ_l)` in log form, tracking factors that vanish exactly.
#[derive(Clone, Debug)]
pub struct DecayProducts {
    logs: Vec<f64>,
    zeros: Vec<usize>,
}

impl DecayProducts {
    pub fn new(gammas: &[f64]) -> Result<Self> {
        let mut logs = vec![0.0];
        let mut zeros = vec![0];
        for (i, &g) in gammas.iter().enumerate() {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::Domain(format!("gamma at t = {} is {g}", i + 1)));
            }
            let (l, z) = if g == 1.0 { (0.0, 1) } else { ((-g).ln_1p(), 0) };
            logs.push(logs[i] + l);
            zeros.push(zeros[i] + z);
        }
        Ok(DecayProducts { logs, zeros })
    }

    pub fn horizon(&self) -> usize {
        self.logs.len() - 1
    }

    /// `∏_{l=a+1}^{b} (1 − γ_l)`; empty products are 1.
    pub fn product(&self, a: usize, b: usize) -> f64 {
        if self.zeros[b] > self.zeros[a] {
            0.0
        } else {
            (self.logs[b] - self.logs[a]).exp()
        }
    }

    /// `∏_{l=a+1}^{b} √(1 − γ_l)`.
    pub fn sqrt_product(&self, a: usize, b: usize) -> f64 {
        if self.zeros[b] > self.zeros[a] {
            0.0
        } else {
            (0.5 * (self.logs[b] - self.logs[a])).exp()
        }
    }
}

/// `π_t(V)` for `t = 0..=horizon`.
pub fn masses(env: &Environment) -> Vec<f64> {
    (0..=env.horizon()).map(|t| env.measure(t).mass()).collect()
}

fn check_gammas(env: &Environment, gammas: &[f64]) -> Result<DecayProducts> {
    if gammas.len() < env.horizon() {
        return Err(Error::Structural(format!("{} gammas for horizon {}", gammas.len(), env.horizon())));
    }
    DecayProducts::new(&gammas[..env.horizon()])
}

fn check_state(env: &Environment, x: usize) -> Result<()> {
    if x >= env.size() {
        return Err(Error::Structural(format!("state {x} outside {} states", env.size())));
    }
    Ok(())
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Domain(format!("eta = {eta} outside (0,1)")));
    }
    Ok(())
}

fn inverse_sqrt_sum(pt: &Measure, x: usize, y: usize) -> f64 {
    1.0 / pt.get(x).sqrt() + 1.0 / pt.get(y).sqrt()
}

/// `½ (1/√π̃(x) + 1/√π̃(y)) (1 − γ)^{t/2}`.
pub fn bound_t1(gamma: f64, pi: &Measure, x: usize, y: usize, t: usize) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Domain(format!("gamma = {gamma} makes the bound vacuous")));
    }
    if x >= pi.len() || y >= pi.len() {
        return Err(Error::Structural(format!("states ({x},{y}) outside {} states", pi.len())));
    }
    let pt = normalize(pi);
    let decay = if gamma == 1.0 { if t == 0 { 1.0 } else { 0.0 } } else { (0.5 * t as f64 * (-gamma).ln_1p()).exp() };
    Ok(0.5 * inverse_sqrt_sum(&pt, x, y) * decay)
}

/// `(2/γ)[log(1/η) + log(1/√π̃(x) + 1/√π̃(y))]`.
pub fn merging_time_t1(gamma: f64, pi: &Measure, x: usize, y: usize, eta: f64) -> Result<f64> {
    check_eta(eta)?;
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Domain(format!("gamma = {gamma} makes the bound vacuous")));
    }
    let pt = normalize(pi);
    Ok(2.0 / gamma * ((1.0 / eta).ln() + inverse_sqrt_sum(&pt, x, y).ln()))
}

/// `½ √(π_t(V)/π_1(V)) (1/√π̃_1(x) + 1/√π̃_1(y)) ∏_{s=1}^t √(1 − γ_s)`.
pub fn bound_t3(env: &Environment, gammas: &[f64], x: usize, y: usize, t: usize) -> Result<f64> {
    env.check_time(t)?;
    check_state(env, x)?;
    check_state(env, y)?;
    let d = check_gammas(env, gammas)?;
    Ok(t3_value(env, &d, &normalize(env.measure(1)), x, y, t))
}

fn t3_value(env: &Environment, d: &DecayProducts, pt1: &Measure, x: usize, y: usize, t: usize) -> f64 {
    let ratio = env.measure(t).mass() / env.measure(1).mass();
    0.5 * ratio.sqrt() * inverse_sqrt_sum(pt1, x, y) * d.sqrt_product(0, t)
}

pub fn merging_time_t3(env: &Environment, gammas: &[f64], x: usize, y: usize, eta: f64) -> Result<Crossing> {
    check_eta(eta)?;
    check_state(env, x)?;
    check_state(env, y)?;
    let d = check_gammas(env, gammas)?;
    let pt1 = normalize(env.measure(1));
    Ok(first_crossing(1..=env.horizon(), |t| t3_value(env, &d, &pt1, x, y, t) <= eta))
}

fn first_crossing(range: impl Iterator<Item = usize>, mut hit: impl FnMut(usize) -> bool) -> Crossing {
    for t in range {
        if hit(t) {
            return Crossing::At(t);
        }
    }
    Crossing::NotReached
}

/// Shared evaluator for the Nash-based bounds.
#[derive(Clone, Debug)]
pub struct NashBounds {
    masses: Vec<f64>,
    decay: DecayProducts,
    nash: NashParams,
    b: f64,
}

impl NashBounds {
    /// Requires `π_1(V) ≥ 1`.
    pub fn new(env: &Environment, gammas: &[f64], nash: NashParams) -> Result<Self> {
        NashBounds::with_rounding(env, gammas, nash, Rounding::Ceil)
    }

    pub fn with_rounding(env: &Environment, gammas: &[f64], nash: NashParams, rounding: Rounding) -> Result<Self> {
        let m1 = env.measure(1).mass();
        if m1 < 1.0 {
            return Err(Error::Hypothesis(format!("π_1(V) = {m1} < 1")));
        }
        let decay = check_gammas(env, gammas)?;
        Ok(NashBounds { masses: masses(env), decay, b: nash.b_with(rounding), nash })
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    fn factor(&self, r: usize) -> f64 {
        4.0 * self.nash.c * self.b / (r as f64 + 1.0)
    }

    fn check_r(&self, r: usize) -> Result<()> {
        if r > self.nash.t as usize {
            return Err(Error::Domain(format!("r = {r} exceeds T = {}", self.nash.t)));
        }
        Ok(())
    }

    /// `√(π_t(V)π_r(V)/π_1(V)) (4CB/(r+1))^D ∏_{l=r+1}^t √(1 − γ_l)`.
    pub fn tv(&self, r: usize, t: usize) -> Result<f64> {
        self.check_r(r)?;
        if r > t || t > self.decay.horizon() {
            return Err(Error::Range { index: t, horizon: self.decay.horizon() });
        }
        let m = &self.masses;
        Ok((m[t] * m[r] / m[1]).sqrt() * self.factor(r).powf(self.nash.d) * self.decay.sqrt_product(r, t))
    }

    /// `4π_t(V)(4CB/(r+1))^{2D} ∏_{l=r+1}^{r+u} √(1 − γ_l)` with `t = 2r + u`.
    pub fn sep(&self, r: usize, u: usize) -> Result<f64> {
        self.check_r(r)?;
        let t = 2 * r + u;
        if t > self.decay.horizon() {
            return Err(Error::Range { index: t, horizon: self.decay.horizon() });
        }
        Ok(4.0 * self.masses[t] * self.factor(r).powf(2.0 * self.nash.d) * self.decay.sqrt_product(r, r + u))
    }

    /// Minimum of the tv display over `r ∈ [0, min(t, T)]`, with the minimizing `r`.
    pub fn best_tv(&self, t: usize) -> Result<(f64, usize)> {
        let top = t.min(self.nash.t as usize);
        let mut best = (f64::INFINITY, 0);
        for r in 0..=top {
            let v = self.tv(r, t)?;
            if v < best.0 {
                best = (v, r);
            }
        }
        Ok(best)
    }

    /// Minimum of the separation display over `t = 2r + u`, `r ≤ T`.
    pub fn best_sep(&self, t: usize) -> Result<(f64, usize)> {
        let top = (t / 2).min(self.nash.t as usize);
        let mut best = (f64::INFINITY, 0);
        for r in 0..=top {
            let v = self.sep(r, t - 2 * r)?;
            if v < best.0 {
                best = (v, r);
            }
        }
        Ok(best)
    }

    pub fn merging_time_tv(&self, eta: f64) -> Result<Crossing> {
        check_eta(eta)?;
        for t in 1..=self.decay.horizon() {
            if self.best_tv(t)?.0 <= eta {
                return Ok(Crossing::At(t));
            }
        }
        Ok(Crossing::NotReached)
    }

    /// Smallest `2r + u` with `16 π_{2r+u}(V)(4CB/(r+1))^{2D} ∏ √(1 − γ_l) ≤ η`.
    pub fn merging_time_sep(&self, eta: f64) -> Result<Crossing> {
        if !(eta > 0.0 && eta < 0.5) {
            return Err(Error::Domain(format!("eta = {eta} outside (0,1/2)")));
        }
        for t in 1..=self.decay.horizon() {
            if 4.0 * self.best_sep(t)?.0 <= eta {
                return Ok(Crossing::At(t));
            }
        }
        Ok(Crossing::NotReached)
    }
}

pub fn bound_t4_tv(env: &Environment, gammas: &[f64], nash: NashParams, r: usize, t: usize) -> Result<f64> {
    NashBounds::new(env, gammas, nash)?.tv(r, t)
}

pub fn bound_t4_sep(env: &Environment, gammas: &[f64], nash: NashParams, r: usize, u: usize) -> Result<f64> {
    NashBounds::new(env, gammas, nash)?.sep(r, u)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogSobolevSchedule {
    /// `q[s] = 2 ∏_{u=1}^s (1 + α_u)`, `q[0] = 2`.
    pub q: Vec<f64>,
    pub r_x: usize,
    pub r_y: usize,
    pub r: usize,
    /// Set when a start state carries all of `π̃_0`, where the threshold is undefined.
    pub flagged: bool,
}

/// `r_z = min{s ≥ 1 : log q_s ≥ log log(1/π̃_0(z))}`.
pub fn logsob_schedule(alphas: &[f64], pi0: &Measure, x: usize, y: usize) -> Result<LogSobolevSchedule> {
    if let Some(i) = alphas.iter().position(|a| !(*a >= 0.0)) {
        return Err(Error::Domain(format!("alpha at t = {} is {}", i + 1, alphas[i])));
    }
    if x >= pi0.len() || y >= pi0.len() {
        return Err(Error::Structural(format!("states ({x},{y}) outside {} states", pi0.len())));
    }
    let pt = normalize(pi0);
    if !pt.is_positive() {
        return Err(Error::Domain("initial measure must be strictly positive".into()));
    }
    let mut q = vec![2.0];
    for a in alphas {
        q.push(q.last().unwrap() * (1.0 + a));
    }
    let mut flagged = false;
    let mut r_of = |z: usize| -> Result<usize> {
        let p = pt.get(z);
        if p >= 1.0 {
            flagged = true;
            return Ok(1);
        }
        let threshold = (1.0 / p).ln().ln();
        for s in 1..q.len() {
            if q[s].ln() >= threshold {
                return Ok(s);
            }
        }
        Err(Error::Hypothesis(format!("log q_s never reaches log log(1/π̃_0({z})) = {threshold} within {} steps", alphas.len())))
    };
    let r_x = r_of(x)?;
    let r_y = r_of(y)?;
    Ok(LogSobolevSchedule { q, r_x, r_y, r: r_x.max(r_y), flagged })
}

/// Evaluator for the log-Sobolev bound at a fixed schedule.
#[derive(Clone, Debug)]
pub struct LogSobBounds {
    masses: Vec<f64>,
    decay: DecayProducts,
    r: usize,
    q_r: f64,
}

impl LogSobBounds {
    pub fn new(env: &Environment, gammas: &[f64], schedule: &LogSobolevSchedule) -> Result<Self> {
        let decay = check_gammas(env, gammas)?;
        let q_r = *schedule.q.get(schedule.r).ok_or(Error::Range { index: schedule.r, horizon: schedule.q.len() - 1 })?;
        Ok(LogSobBounds { masses: masses(env), decay, r: schedule.r, q_r })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// `e √π_t(V) / π_0(V)^{1/q_r} ∏_{l=r+1}^t √(1 − γ_l)` for `t ≥ r`.
    pub fn value(&self, t: usize) -> Result<f64> {
        if t < self.r || t > self.decay.horizon() {
            return Err(Error::Range { index: t, horizon: self.decay.horizon() });
        }
        Ok(std::f64::consts::E * self.masses[t].sqrt() / self.masses[0].powf(1.0 / self.q_r) * self.decay.sqrt_product(self.r, t))
    }

    /// `r + min{u ≥ 1 : e √π_{r+u}(V)/π_0(V)^{1/q_r} ∏_{l=r+1}^{r+u} √(1 − γ_l) ≤ η}`.
    pub fn merging_time(&self, eta: f64) -> Result<Crossing> {
        check_eta(eta)?;
        for t in self.r + 1..=self.decay.horizon() {
            if self.value(t)? <= eta {
                return Ok(Crossing::At(t));
            }
        }
        Ok(Crossing::NotReached)
    }
}

pub fn bound_t5(env: &Environment, gammas: &[f64], schedule: &LogSobolevSchedule, t: usize) -> Result<f64> {
    LogSobBounds::new(env, gammas, schedule)?.value(t)
}

/// `r = ⌊log(log(1/ρ)/2) / log(1 + α)⌋ + 1`, at least 1.
pub fn t6_r(alpha: f64, rho: f64) -> Result<usize> {
    t6_r_with(alpha, rho, Rounding::Floor)
}

pub fn t6_r_with(alpha: f64, rho: f64, rounding: Rounding) -> Result<usize> {
    if !(alpha > 0.0) || !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Domain(format!("alpha = {alpha}, rho = {rho}")));
    }
    let v = rounding.apply(((1.0 / rho).ln() / 2.0).ln() / alpha.ln_1p()) + 1.0;
    Ok(if v < 1.0 { 1 } else { v as usize })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct T6Params {
    pub alpha: f64,
    pub rho: f64,
    pub r: usize,
}

/// Checks `π_1(V) ≥ 1`, `min_x π̃_t(x) ≥ ρ` and `α ≤ α_t` for every `t`, then fixes `r`.
pub fn t6_params(env: &Environment, alpha: f64, alphas: &[f64], rho: f64) -> Result<T6Params> {
    let m1 = env.measure(1).mass();
    if m1 < 1.0 {
        return Err(Error::Hypothesis(format!("π_1(V) = {m1} < 1")));
    }
    for t in 1..=env.horizon() {
        let p = normalize(env.measure(t));
        let (x, v) = p.weights().iter().enumerate().fold((0, f64::INFINITY), |b, (i, &w)| if w < b.1 { (i, w) } else { b });
        if v < rho {
            return Err(Error::Hypothesis(format!("min π̃_{t} = {v} at state {x} below rho = {rho}")));
        }
    }
    if let Some(t) = alphas.iter().take(env.horizon()).position(|&a| a < alpha) {
        return Err(Error::Hypothesis(format!("alpha_{} = {} below the uniform bound {alpha}", t + 1, alphas[t])));
    }
    Ok(T6Params { alpha, rho, r: t6_r(alpha, rho)? })
}

/// Smallest `min_{t,x} π̃_t(x)` over the horizon.
pub fn min_normalized_mass(env: &Environment) -> f64 {
    (1..=env.horizon()).map(|t| normalize(env.measure(t)).min()).fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug)]
pub struct T6Bounds {
    masses: Vec<f64>,
    decay: DecayProducts,
    r: usize,
}

impl T6Bounds {
    pub fn new(env: &Environment, gammas: &[f64], params: &T6Params) -> Result<Self> {
        Ok(T6Bounds { masses: masses(env), decay: check_gammas(env, gammas)?, r: params.r })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// `e² √(π_t(V) π_{r+u}(V) ∏_{l=r+1}^{r+u} (1 − γ_l))` at `t = 2r + u`.
    pub fn value(&self, u: usize) -> Result<f64> {
        let t = 2 * self.r + u;
        if t > self.decay.horizon() {
            return Err(Error::Range { index: t, horizon: self.decay.horizon() });
        }
        let r = self.r;
        Ok(std::f64::consts::E.powi(2) * (self.masses[t] * self.masses[r + u] * self.decay.product(r, r + u)).sqrt())
    }

    /// `2r + min{u ≥ 0 : 4e² √(…) ≤ η}`.
    pub fn merging_time(&self, eta: f64) -> Result<Crossing> {
        if !(eta > 0.0 && eta < 0.5) {
            return Err(Error::Domain(format!("eta = {eta} outside (0,1/2)")));
        }
        let mut u = 0;
        while 2 * self.r + u <= self.decay.horizon() {
            if 4.0 * self.value(u)? <= eta {
                return Ok(Crossing::At(2 * self.r + u));
            }
            u += 1;
        }
        Ok(Crossing::NotReached)
    }
}

pub fn bound_t6(env: &Environment, gammas: &[f64], params: &T6Params, u: usize) -> Result<f64> {
    T6Bounds::new(env, gammas, params)?.value(u)
}

/// `max(s(μ,ν), s(ν,μ))`.
pub fn pair_separation(mu: &[f64], nu: &[f64]) -> Result<f64> {
    Ok(separation_distance(mu, nu)?.value.max(separation_distance(nu, mu)?.value))
}

/// Brute-force first time the laws from `x` and `y` come within `η`.
///
/// Separation is symmetrized as [`pair_separation`].
pub fn exact_merging_time(env: &Environment, x: usize, y: usize, eta: f64, distance: Distance) -> Result<Crossing> {
    check_eta(eta)?;
    check_state(env, x)?;
    check_state(env, y)?;
    let mut p = Propagator::from_states(env.size(), &[x, y]);
    for t in 1..=env.horizon() {
        p.step(env)?;
        let a: Vec<f64> = p.rows().row(0).iter().copied().collect();
        let b: Vec<f64> = p.rows().row(1).iter().copied().collect();
        let d = match distance {
            Distance::Tv => tv_distance(&a, &b)?,
            Distance::Separation => pair_separation(&a, &b)?,
        };
        if d <= eta {
            return Ok(Crossing::At(t));
        }
    }
    Ok(Crossing::NotReached)
}

/// Exact distance curve `t ↦ d(μ_t^x, μ_t^y)` for `t = 1..=horizon`.
pub fn exact_curve(env: &Environment, x: usize, y: usize, distance: Distance) -> Result<Vec<f64>> {
    check_state(env, x)?;
    check_state(env, y)?;
    let mut mu = Distribution::dirac(env.size(), x).probabilities().clone();
    let mut nu = Distribution::dirac(env.size(), y).probabilities().clone();
    let mut out = Vec::with_capacity(env.horizon());
    for t in 1..=env.horizon() {
        mu = env.kernel(t).push(&mu);
        nu = env.kernel(t).push(&nu);
        out.push(match distance {
            Distance::Tv => tv_distance(mu.as_slice(), nu.as_slice())?,
            Distance::Separation => pair_separation(mu.as_slice(), nu.as_slice())?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::Kernel;
    use crate::networks::{gen_two_state_no_merging, kernel_from_conductances, lazify, ConductanceMatrix};
    use crate::spectral::{poincare_gamma, symmetrization};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn flip(p: f64) -> Kernel {
        Kernel::new(DMatrix::from_row_slice(2, 2, &[1.0 - p, p, p, 1.0 - p])).unwrap()
    }

    fn path_env(horizon: usize) -> Environment {
        let c = ConductanceMatrix::from_edges(4, &[(0, 1, 1.0), (1, 2, 2.0), (2, 3, 1.0), (0, 0, 1.0)]).unwrap();
        let (p, pi) = kernel_from_conductances(&c);
        Environment::constant(lazify(&p, 0.5).unwrap(), pi, horizon).unwrap()
    }

    #[test]
    fn t1_examples() {
        let pi = Measure::uniform(2);
        assert_eq!(bound_t1(1.0, &pi, 0, 1, 3).unwrap(), 0.0);
        let g: f64 = 0.3;
        assert_abs_diff_eq!(bound_t1(g, &pi, 0, 1, 5).unwrap(), 2f64.sqrt() * (1.0 - g).powf(2.5), epsilon = 1e-15);
        assert!(bound_t1(0.0, &pi, 0, 1, 5).is_err());
        let pi = Measure::new(vec![0.1, 0.2, 0.7]).unwrap();
        for eta in [0.3, 0.05, 1e-3] {
            let t = merging_time_t1(g, &pi, 0, 2, eta).unwrap().ceil() as usize;
            assert!(bound_t1(g, &pi, 0, 2, t).unwrap() <= eta);
        }
    }

    #[test]
    fn t3_collapses_to_t1() {
        let env = path_env(60);
        let q = symmetrization(env.kernel(1), env.measure(1)).unwrap();
        let g = poincare_gamma(&q, env.measure(1)).unwrap().gamma;
        let gammas = vec![g; 60];
        for t in [1, 10, 60] {
            let a = bound_t3(&env, &gammas, 0, 3, t).unwrap();
            let b = bound_t1(g, env.measure(1), 0, 3, t).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-12 * b.max(1e-300));
        }
    }

    #[test]
    fn t3_examples() {
        let env = path_env(10);
        assert_eq!(merging_time_t3(&env, &[1.0; 10], 0, 1, 0.5).unwrap(), Crossing::At(1));
        let flat = bound_t3(&env, &[0.0; 10], 0, 1, 10).unwrap();
        assert_abs_diff_eq!(flat, bound_t3(&env, &[0.0; 10], 0, 1, 1).unwrap());
        assert!(bound_t3(&env, &[0.1; 10], 0, 1, 11).is_err());
    }

    #[test]
    fn no_merging_t3_never_crosses() {
        let env = gen_two_state_no_merging(1.0, 2000).unwrap();
        let gammas: Vec<f64> = (1..=2000)
            .map(|t| poincare_gamma(&symmetrization(env.kernel(t), env.measure(t)).unwrap(), env.measure(t)).unwrap().gamma)
            .collect();
        assert_eq!(merging_time_t3(&env, &gammas, 0, 1, 0.1).unwrap(), Crossing::NotReached);
        assert_eq!(exact_merging_time(&env, 0, 1, 0.1, Distance::Tv).unwrap(), Crossing::NotReached);
    }

    #[test]
    fn exact_merging_examples() {
        let half = Environment::constant(flip(0.5), Measure::uniform(2), 5).unwrap();
        assert_eq!(exact_merging_time(&half, 0, 1, 0.01, Distance::Tv).unwrap(), Crossing::At(1));
        let id = Environment::constant(Kernel::identity(3), Measure::uniform(3), 50).unwrap();
        assert_eq!(exact_merging_time(&id, 0, 2, 0.5, Distance::Tv).unwrap(), Crossing::NotReached);
        assert_eq!(exact_merging_time(&id, 1, 1, 0.5, Distance::Separation).unwrap(), Crossing::At(1));
    }

    #[test]
    fn nash_examples() {
        let env = path_env(40);
        let gammas = vec![0.2; 40];
        let nash = NashParams::new(2.0, 1.0, 100).unwrap();
        let nb = NashBounds::new(&env, &gammas, nash).unwrap();
        assert_abs_diff_eq!(nb.b(), 5.05, epsilon = 1e-14);
        let m = env.measure(1).mass();
        let r = 7;
        assert_abs_diff_eq!(nb.tv(r, r).unwrap(), (m * m / m).sqrt() * (4.0 * 2.0 * 5.05 / 8.0), epsilon = 1e-12);
        assert_abs_diff_eq!(nb.sep(3, 0).unwrap(), 4.0 * m * (4.0 * 2.0 * 5.05 / 4.0f64).powi(2), epsilon = 1e-9);
        assert!(nb.sep(3, 5).unwrap() < nb.sep(3, 4).unwrap());
        let (best, r_best) = nb.best_tv(30).unwrap();
        let scan = (0..=30).map(|r| nb.tv(r, 30).unwrap()).fold(f64::INFINITY, f64::min);
        assert_eq!(best, scan);
        assert_eq!(nb.tv(r_best, 30).unwrap(), best);
        let small = Environment::constant(flip(0.3), Measure::new(vec![0.25, 0.25]).unwrap(), 5).unwrap();
        assert!(matches!(NashBounds::new(&small, &[0.5; 5], nash), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn schedule_examples() {
        let e2 = (-2.0f64).exp();
        let pi = Measure::new(vec![e2, 1.0 - e2]).unwrap();
        let s = logsob_schedule(&[0.0, 0.0, 0.0], &pi, 0, 0).unwrap();
        assert_eq!(s.r_x, 1);
        let s = logsob_schedule(&[0.1; 5], &Measure::uniform(8), 0, 1).unwrap();
        for (i, q) in s.q.iter().enumerate() {
            assert_abs_diff_eq!(*q, 2.0 * 1.1f64.powi(i as i32), epsilon = 1e-12);
        }
        // log log(1e6) ≈ 2.626 requires q_s ≥ 13.8
        let pi = Measure::new(vec![1e-6, 1.0 - 1e-6]).unwrap();
        let s = logsob_schedule(&[0.5; 10], &pi, 0, 1).unwrap();
        let need = (1e6f64).ln().ln();
        assert!(s.q[s.r_x].ln() >= need && s.q[s.r_x - 1].ln() < need);
        assert_eq!(s.r, s.r_x.max(s.r_y));
        assert!(logsob_schedule(&[0.01; 3], &pi, 0, 1).is_err());
    }

    #[test]
    fn t5_examples() {
        let env = path_env(30);
        let s = logsob_schedule(&[0.2; 30], env.measure(0), 0, 3).unwrap();
        let lb = LogSobBounds::new(&env, &[0.3; 30], &s).unwrap();
        let m = env.measure(1).mass();
        assert_abs_diff_eq!(lb.value(s.r).unwrap(), std::f64::consts::E * m.sqrt() / m.powf(1.0 / s.q[s.r]), epsilon = 1e-12);
        if s.r > 0 {
            assert!(lb.value(s.r - 1).is_err());
        }
    }

    #[test]
    fn t6_examples() {
        assert_eq!(t6_r(1.0, (-2.0f64).exp()).unwrap(), 1);
        assert_eq!(t6_r(0.1, 1e-3).unwrap(), ((((1e3f64).ln() / 2.0).ln() / 1.1f64.ln()).floor() as usize) + 1);
        assert_eq!(t6_r(0.5, 0.4).unwrap(), 1);
        let env = path_env(30);
        let params = T6Params { alpha: 0.1, rho: 0.05, r: 3 };
        let tb = T6Bounds::new(&env, &[0.2; 30], &params).unwrap();
        let m = env.measure(1).mass();
        assert_abs_diff_eq!(tb.value(0).unwrap(), std::f64::consts::E.powi(2) * m, epsilon = 1e-12);
        assert!(matches!(t6_params(&env, 0.1, &[0.05; 30], 0.01), Err(Error::Hypothesis(_))));
        assert!(matches!(t6_params(&env, 0.1, &[0.2; 30], 0.5), Err(Error::Hypothesis(_))));
        assert!(t6_params(&env, 0.1, &[0.2; 30], 0.01).is_ok());
    }

    #[test]
    fn crossing_serde() {
        assert_eq!(serde_json::to_string(&Crossing::At(5)).unwrap(), "5");
        assert_eq!(serde_json::to_string(&Crossing::NotReached).unwrap(), "\"not-reached\"");
        assert_eq!(serde_json::from_str::<Crossing>("\"not-reached\"").unwrap(), Crossing::NotReached);
        assert_eq!(serde_json::from_str::<Crossing>("12").unwrap(), Crossing::At(12));
    }

    #[test]
    fn decay_products() {
        let d = DecayProducts::new(&[0.5, 1.0, 0.2]).unwrap();
        assert_eq!(d.product(0, 1), 0.5);
        assert_eq!(d.product(0, 2), 0.0);
        assert_abs_diff_eq!(d.product(2, 3), 0.8, epsilon = 1e-15);
        assert_eq!(d.sqrt_product(1, 1), 1.0);
        assert!(DecayProducts::new(&[1.5]).is_err());
    }
}
