//! Exact distances against every requested bound curve, step by step.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    logsob_schedule, pair_separation, t3_value, Crossing, DecayProducts, LogSobBounds, NashBounds, T6Bounds, T6Params,
};
use crate::environment::{normalize, Environment};
use crate::error::{Error, Result};
use crate::evolution::Propagator;
use crate::functional::{separation_distance, tv_distance};
use crate::spectral::{NashParams, SpectralMethod};

/// Dominance margins below this are soundness failures.
pub const MARGIN_SLACK: f64 = -1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Theorem {
    T1,
    T3,
    T4,
    T5,
    T6,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Query {
    Pair(usize, usize),
    /// `max_x` distance between `μ_t^x` and `μ_t^{π̃_1}`.
    Centered,
}

impl Query {
    pub fn id(&self) -> String {
        match self {
            Query::Pair(x, y) => format!("{x}-{y}"),
            Query::Centered => "centered".into(),
        }
    }

    pub fn all_pairs(n: usize) -> Vec<Query> {
        let mut out = Vec::new();
        for x in 0..n {
            for y in x + 1..n {
                out.push(Query::Pair(x, y));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConstants {
    /// `γ(K_t* K_t)` or certified lower bounds, one per step.
    pub gammas: Vec<f64>,
    pub gamma_method: SpectralMethod,
    pub nash: Option<NashParams>,
    /// Set when `C` was fitted on probes rather than supplied.
    pub nash_fitted: bool,
    /// Lower bounds on `α(K_t* K_t)`, one per step.
    pub alphas: Option<Vec<f64>>,
    pub t6: Option<T6Params>,
}

impl SweepConstants {
    pub fn poincare(gammas: Vec<f64>) -> Self {
        SweepConstants { gammas, gamma_method: SpectralMethod::ExactEigen, nash: None, nash_fitted: false, alphas: None, t6: None }
    }
}

/// One time step of one query. Empty cells are bounds that do not apply.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub t: usize,
    pub pair_id: String,
    pub exact_tv: f64,
    pub exact_sep: f64,
    pub t1: Option<f64>,
    pub t3: Option<f64>,
    pub t4_tv: Option<f64>,
    pub t4_sep: Option<f64>,
    pub t5: Option<f64>,
    pub t6: Option<f64>,
    pub margin: Option<f64>,
}

impl SweepRow {
    fn settle(&mut self) {
        let tv = [self.t1, self.t3, self.t4_tv, self.t5].into_iter().flatten().map(|b| b - self.exact_tv);
        let sep = [self.t4_sep, self.t6].into_iter().flatten().map(|b| b - self.exact_sep);
        self.margin = tv.chain(sep).reduce(f64::min);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingRecord {
    pub pair_id: String,
    pub eta: f64,
    pub exact_tv: Crossing,
    pub exact_sep: Crossing,
    /// Keyed by curve name; curves whose statement excludes this `η` are omitted.
    pub curves: BTreeMap<String, Crossing>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub horizon: usize,
    pub size: usize,
    pub theorems: Vec<Theorem>,
    pub constants: SweepConstants,
    pub nash_b: Option<f64>,
    pub t5_r: BTreeMap<String, usize>,
    pub rows: Vec<SweepRow>,
    pub crossings: Vec<CrossingRecord>,
    pub min_margin: Option<f64>,
    pub notes: Vec<String>,
}

impl ExperimentReport {
    /// True when some margin falls below [`MARGIN_SLACK`].
    pub fn has_violation(&self) -> bool {
        self.min_margin.is_some_and(|m| m < MARGIN_SLACK)
    }

    pub fn violations(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.margin.is_some_and(|m| m < MARGIN_SLACK))
    }
}

struct Curves {
    t4: Option<NashBounds>,
    t6: Option<T6Bounds>,
    t4_tv: Vec<Option<f64>>,
    t4_sep: Vec<Option<f64>>,
    t6_values: Vec<Option<f64>>,
}

fn shared_curves(env: &Environment, c: &SweepConstants, theorems: &[Theorem]) -> Result<Curves> {
    let h = env.horizon();
    let mut out = Curves { t4: None, t6: None, t4_tv: vec![None; h + 1], t4_sep: vec![None; h + 1], t6_values: vec![None; h + 1] };
    if theorems.contains(&Theorem::T4) {
        let nash = c.nash.ok_or_else(|| Error::Config("T4 requested without Nash parameters".into()))?;
        let nb = NashBounds::new(env, &c.gammas, nash)?;
        let tv: Vec<(usize, f64, f64)> =
            (1..=h).into_par_iter().map(|t| Ok((t, nb.best_tv(t)?.0, nb.best_sep(t)?.0))).collect::<Result<_>>()?;
        for (t, a, b) in tv {
            out.t4_tv[t] = Some(a);
            out.t4_sep[t] = Some(b);
        }
        out.t4 = Some(nb);
    }
    if theorems.contains(&Theorem::T6) {
        let p = c.t6.ok_or_else(|| Error::Config("T6 requested without its parameters".into()))?;
        let tb = T6Bounds::new(env, &c.gammas, &p)?;
        for t in 2 * p.r..=h {
            out.t6_values[t] = Some(tb.value(t - 2 * p.r)?);
        }
        out.t6 = Some(tb);
    }
    Ok(out)
}

/// Runs every query against the exact evolution and the requested curves.
///
/// Pair rows compare tv bounds with the exact tv and the separation displays,
/// multiplied by 4 as required for pairwise statements, with the symmetrized pair
/// separation. Centered rows compare the separation displays with
/// `max_x s(μ_t^x, μ_t^{π̃_1})`.
pub fn bound_vs_exact_sweep(
    env: &Environment,
    queries: &[Query],
    theorems: &[Theorem],
    constants: &SweepConstants,
    etas: &[f64],
) -> Result<ExperimentReport> {
    let n = env.size();
    let h = env.horizon();
    if queries.is_empty() {
        return Err(Error::Config("no queries".into()));
    }
    for q in queries {
        if let Query::Pair(x, y) = *q {
            if x >= n || y >= n {
                return Err(Error::Config(format!("query {} outside {n} states", q.id())));
            }
        }
    }
    if let Some(e) = etas.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
        return Err(Error::Config(format!("eta = {e} outside (0,1)")));
    }
    let decay = DecayProducts::new(constants.gammas.get(..h).ok_or_else(|| {
        Error::Config(format!("{} gammas for horizon {h}", constants.gammas.len()))
    })?)?;
    let mut notes = Vec::new();
    let homogeneous = env.is_homogeneous();
    let want_t1 = theorems.contains(&Theorem::T1);
    if want_t1 && !homogeneous {
        notes.push("T1 skipped: environment is not homogeneous".into());
    }
    if want_t1 && homogeneous && !(constants.gammas[0] > 0.0) {
        notes.push("T1 skipped: gamma is zero".into());
    }
    let t1_on = want_t1 && homogeneous && constants.gammas[0] > 0.0;
    let curves = shared_curves(env, constants, theorems)?;
    if constants.nash_fitted && curves.t4.is_some() {
        notes.push("T4 uses a Nash constant fitted on probes; its curves are not rigorous".into());
    }
    if constants.gamma_method == SpectralMethod::ComparisonBound {
        notes.push("gammas are comparison lower bounds; curves are conservative".into());
    }

    let pt1 = normalize(env.measure(1));
    let mut t5: BTreeMap<String, LogSobBounds> = BTreeMap::new();
    if theorems.contains(&Theorem::T5) {
        let alphas = constants.alphas.as_ref().ok_or_else(|| Error::Config("T5 requested without alphas".into()))?;
        for q in queries {
            if let Query::Pair(x, y) = *q {
                let s = logsob_schedule(&alphas[..h.min(alphas.len())], env.measure(0), x, y)?;
                if s.flagged {
                    notes.push(format!("T5 schedule for {} uses the r = 1 convention", q.id()));
                }
                t5.insert(q.id(), LogSobBounds::new(env, &constants.gammas, &s)?);
            }
        }
    }

    // Rows of the propagator: every state needed by a query, then π̃_1 when centered.
    let centered = queries.contains(&Query::Centered);
    let states: Vec<usize> = if centered {
        (0..n).collect()
    } else {
        let mut s: Vec<usize> = queries.iter().flat_map(|q| if let Query::Pair(x, y) = *q { vec![x, y] } else { vec![] }).collect();
        s.sort_unstable();
        s.dedup();
        s
    };
    let row_of: BTreeMap<usize, usize> = states.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    let mut starts = DMatrix::zeros(states.len() + usize::from(centered), n);
    for (i, &x) in states.iter().enumerate() {
        starts[(i, x)] = 1.0;
    }
    if centered {
        starts.row_mut(states.len()).copy_from(&pt1.weights().transpose());
    }
    let mut prop = Propagator::new(starts);

    let mut rows = Vec::with_capacity(h * queries.len());
    for t in 1..=h {
        prop.step(env)?;
        let m = prop.rows();
        let dists: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        let step_rows: Vec<SweepRow> = queries
            .par_iter()
            .map(|q| {
                let mut row = SweepRow {
                    t,
                    pair_id: q.id(),
                    exact_tv: 0.0,
                    exact_sep: 0.0,
                    t1: None,
                    t3: None,
                    t4_tv: None,
                    t4_sep: None,
                    t5: None,
                    t6: None,
                    margin: None,
                };
                match *q {
                    Query::Pair(x, y) => {
                        let (a, b) = (&dists[row_of[&x]], &dists[row_of[&y]]);
                        row.exact_tv = tv_distance(a, b)?;
                        row.exact_sep = pair_separation(a, b)?;
                        if t1_on {
                            row.t1 = Some(super::bound_t1(constants.gammas[0], env.measure(1), x, y, t)?);
                        }
                        if theorems.contains(&Theorem::T3) {
                            row.t3 = Some(t3_value(env, &decay, &pt1, x, y, t));
                        }
                        row.t4_tv = curves.t4_tv[t];
                        row.t4_sep = curves.t4_sep[t].map(|v| 4.0 * v);
                        if let Some(lb) = t5.get(&row.pair_id) {
                            if t >= lb.r() {
                                row.t5 = Some(lb.value(t)?);
                            }
                        }
                        row.t6 = curves.t6_values[t].map(|v| 4.0 * v);
                    }
                    Query::Centered => {
                        let nu = &dists[states.len()];
                        for a in &dists[..states.len()] {
                            row.exact_tv = row.exact_tv.max(tv_distance(a, nu)?);
                            row.exact_sep = row.exact_sep.max(separation_distance(a, nu)?.value);
                        }
                        row.t4_sep = curves.t4_sep[t];
                        row.t6 = curves.t6_values[t];
                    }
                }
                row.settle();
                Ok(row)
            })
            .collect::<Result<_>>()?;
        rows.extend(step_rows);
    }
    if prop.max_drift() > crate::evolution::DRIFT_WARN {
        notes.push(format!("probability drift {:e} exceeds {:e}", prop.max_drift(), crate::evolution::DRIFT_WARN));
    }

    let mut crossings = Vec::new();
    for q in queries {
        let id = q.id();
        let mine: Vec<&SweepRow> = rows.iter().filter(|r| r.pair_id == id).collect();
        for &eta in etas {
            let first = |f: &dyn Fn(&SweepRow) -> Option<f64>| {
                mine.iter().find(|r| f(r).is_some_and(|v| v <= eta)).map_or(Crossing::NotReached, |r| Crossing::At(r.t))
            };
            let mut cv = BTreeMap::new();
            let has = |f: &dyn Fn(&SweepRow) -> Option<f64>| mine.iter().any(|r| f(r).is_some());
            if has(&|r| r.t1) {
                cv.insert("T1".into(), first(&|r| r.t1));
            }
            if has(&|r| r.t3) {
                cv.insert("T3".into(), first(&|r| r.t3));
            }
            if has(&|r| r.t4_tv) {
                cv.insert("T4-tv".into(), first(&|r| r.t4_tv));
            }
            if let Some(lb) = t5.get(&id) {
                cv.insert("T5".into(), lb.merging_time(eta)?);
            }
            if eta < 0.5 {
                if has(&|r| r.t4_sep) {
                    cv.insert("T4-sep".into(), first(&|r| r.t4_sep));
                }
                if has(&|r| r.t6) {
                    cv.insert("T6".into(), first(&|r| r.t6));
                }
            }
            crossings.push(CrossingRecord {
                pair_id: id.clone(),
                eta,
                exact_tv: first(&|r| Some(r.exact_tv)),
                exact_sep: first(&|r| Some(r.exact_sep)),
                curves: cv,
            });
        }
    }

    let min_margin = rows.iter().filter_map(|r| r.margin).reduce(f64::min);
    let mut theorems = theorems.to_vec();
    theorems.sort();
    theorems.dedup();
    Ok(ExperimentReport {
        horizon: h,
        size: n,
        theorems,
        constants: constants.clone(),
        nash_b: curves.t4.as_ref().map(NashBounds::b),
        t5_r: t5.iter().map(|(k, v)| (k.clone(), v.r())).collect(),
        rows,
        crossings,
        min_margin,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::{cycle_edges, gen_stick, ConductanceSchedule, EdgeExpr};
    use crate::spectral::poincare_gammas;

    fn stick(horizon: usize) -> Environment {
        let s = ConductanceSchedule::uniform(
            6,
            horizon,
            &cycle_edges(6),
            EdgeExpr::LinearCapped { start: 1.0, slope: 0.05, cap: 2.0 },
            true,
        )
        .unwrap();
        gen_stick(6, &s).unwrap()
    }

    #[test]
    fn t3_dominates_on_stick() {
        let env = stick(80);
        let c = SweepConstants::poincare(poincare_gammas(&env).unwrap());
        let rep = bound_vs_exact_sweep(&env, &Query::all_pairs(6), &[Theorem::T3, Theorem::T1], &c, &[0.25]).unwrap();
        assert_eq!(rep.rows.len(), 80 * 15);
        assert!(!rep.has_violation());
        assert!(rep.rows.iter().all(|r| r.t1.is_none()));
        assert!(rep.notes.iter().any(|n| n.contains("T1 skipped")));
        let cr = &rep.crossings[0];
        assert!(cr.exact_tv <= cr.curves["T3"]);
    }

    #[test]
    fn constant_env_t1_equals_t3() {
        let s = ConductanceSchedule::uniform(5, 40, &cycle_edges(5), EdgeExpr::Constant { value: 1.0 }, true).unwrap();
        let env = gen_stick(5, &s).unwrap();
        let c = SweepConstants::poincare(poincare_gammas(&env).unwrap());
        let rep = bound_vs_exact_sweep(&env, &[Query::Pair(0, 2)], &[Theorem::T1, Theorem::T3], &c, &[0.1]).unwrap();
        for r in &rep.rows {
            let (a, b) = (r.t1.unwrap(), r.t3.unwrap());
            assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
        }
    }

    #[test]
    fn missing_constants_are_config_errors() {
        let env = stick(10);
        let c = SweepConstants::poincare(poincare_gammas(&env).unwrap());
        assert!(matches!(bound_vs_exact_sweep(&env, &[Query::Centered], &[Theorem::T4], &c, &[0.1]), Err(Error::Config(_))));
        assert!(matches!(bound_vs_exact_sweep(&env, &[Query::Pair(0, 9)], &[Theorem::T3], &c, &[0.1]), Err(Error::Config(_))));
        assert!(matches!(bound_vs_exact_sweep(&env, &[Query::Pair(0, 1)], &[Theorem::T3], &c, &[1.5]), Err(Error::Config(_))));
    }

    #[test]
    fn sweep_is_deterministic() {
        let env = stick(30);
        let c = SweepConstants::poincare(poincare_gammas(&env).unwrap());
        let qs = [Query::Pair(0, 3), Query::Centered];
        let a = bound_vs_exact_sweep(&env, &qs, &[Theorem::T3], &c, &[0.2]).unwrap();
        let b = bound_vs_exact_sweep(&env, &qs, &[Theorem::T3], &c, &[0.2]).unwrap();
        assert_eq!(a, b);
    }
}
