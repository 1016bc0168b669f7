//! TOML experiment configurations: generator, queries, theorem list, constants policy.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    bound_vs_exact_sweep, min_normalized_mass, t6_params, Crossing, Distance, ExperimentReport, Query, SweepConstants, Theorem,
};
use crate::environment::{Environment, Kernel, Measure};
use crate::error::{Error, Result};
use crate::io::read_environment;
use crate::networks::{
    cycle_edges, gen_birth_death_hub, gen_hypercube, gen_interpolation, gen_stick, gen_torus, gen_two_state_no_merging_with,
    geometric_path, hypercube_edges, torus_edges, ConductanceMatrix, ConductanceSchedule, EdgeExpr, EdgeSchedule, DEFAULT_STATE_CAP,
};
use crate::spectral::{
    alpha_from_gap, comparison_gamma, fit_nash_c_env, logsob_alpha, poincare_gammas, probe_family, symmetrization,
    LogSobBudget, NashParams, SpectralMethod,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub horizon: usize,
    pub theorems: Vec<Theorem>,
    pub generator: GeneratorSpec,
    pub queries: QuerySpec,
    #[serde(default)]
    pub constants: ConstantsSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeneratorSpec {
    Stick {
        n: usize,
        schedule: ScheduleSpec,
    },
    TwoState {
        epsilon: f64,
        #[serde(default = "half")]
        laziness: f64,
    },
    Interpolation {
        n: usize,
        /// `[x, y, c]` triples.
        c1: Vec<(usize, usize, f64)>,
        c2: Vec<(usize, usize, f64)>,
    },
    BirthDeathHub {
        length: usize,
        decay: f64,
        /// Hub targets, cycled to the horizon.
        sites: Vec<usize>,
        /// Added weights, cycled to the horizon.
        weights: Vec<f64>,
        #[serde(default = "half")]
        laziness: f64,
    },
    Torus {
        n: usize,
        d: usize,
        schedule: ScheduleSpec,
        #[serde(default = "yes")]
        normalized: bool,
    },
    Hypercube {
        n: usize,
        schedule: ScheduleSpec,
        #[serde(default = "yes")]
        normalized: bool,
    },
    File {
        path: PathBuf,
    },
}

fn half() -> f64 {
    0.5
}

fn yes() -> bool {
    true
}

/// Conductance profile on the generator's natural edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Uniform { profile: EdgeExpr },
    /// Seeded random non-decreasing profiles in `[lo, hi]`.
    Random { lo: f64, hi: f64, changes: usize, period: usize },
    Edges { edges: Vec<EdgeSchedule> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct QuerySpec {
    #[serde(default)]
    pub pairs: Vec<(usize, usize)>,
    #[serde(default)]
    pub all_pairs: bool,
    #[serde(default)]
    pub centered: bool,
    pub etas: Vec<f64>,
    #[serde(default = "tv")]
    pub distance: Distance,
}

fn tv() -> Distance {
    Distance::Tv
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaPolicy {
    #[default]
    Exact,
    Comparison,
    Supplied,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ConstantsSpec {
    #[serde(default)]
    pub gammas: GammaPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nash: Option<NashSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logsob: Option<LogSobSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ComparisonSpec {
    /// Defaults to the largest conductance of the schedule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default = "two")]
    pub a: f64,
}

fn two() -> f64 {
    2.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct NashSpec {
    /// Fitted on probes when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    pub d: f64,
    pub t: u32,
    #[serde(default = "thousand")]
    pub random_probes: usize,
}

fn thousand() -> usize {
    1000
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaPolicy {
    /// `α_t ≥ γ_t(1 − 2π*)/log(1/π* − 1)`.
    CertifiedGap,
    /// Optimizer estimates per step; not rigorous.
    Estimate,
    Supplied,
    /// `α_t = κ/(a·M·N)` with `κ` estimated on the 1, 2 and 3 dimensional cubes.
    HypercubeExtrapolated,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct LogSobSpec {
    pub policy: AlphaPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Defaults to `min_{t,x} π̃_t(x)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default = "restarts")]
    pub restarts: usize,
    #[serde(default = "iterations")]
    pub iterations: usize,
}

fn restarts() -> usize {
    LogSobBudget::default().restarts
}

fn iterations() -> usize {
    LogSobBudget::default().iterations
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "out_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub plots: bool,
}

fn out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: out_dir(), plots: false }
    }
}

pub const GENERATOR_IDS: [&str; 7] = ["stick", "two-state", "interpolation", "birth-death-hub", "torus", "hypercube", "file"];

impl GeneratorSpec {
    pub fn id(&self) -> &'static str {
        match self {
            GeneratorSpec::Stick { .. } => "stick",
            GeneratorSpec::TwoState { .. } => "two-state",
            GeneratorSpec::Interpolation { .. } => "interpolation",
            GeneratorSpec::BirthDeathHub { .. } => "birth-death-hub",
            GeneratorSpec::Torus { .. } => "torus",
            GeneratorSpec::Hypercube { .. } => "hypercube",
            GeneratorSpec::File { .. } => "file",
        }
    }
}

fn field(name: &str, e: Error) -> Error {
    Error::Config(format!("{name}: {e}"))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.check()?;
        Ok(c)
    }

    /// Reads a config; relative `file` generator paths and the output directory
    /// resolve against the config's directory.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut c = ExperimentConfig::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let GeneratorSpec::File { path } = &mut c.generator {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        if c.output.dir.is_relative() {
            c.output.dir = base.join(&c.output.dir);
        }
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn check(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon: must be at least 1".into()));
        }
        let q = &self.queries;
        if let Some(e) = q.etas.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return Err(Error::Config(format!("queries.etas: {e} outside (0,1)")));
        }
        if q.etas.is_empty() {
            return Err(Error::Config("queries.etas: empty".into()));
        }
        if q.pairs.is_empty() && !q.all_pairs && !q.centered {
            return Err(Error::Config("queries: no pairs, all-pairs or centered query".into()));
        }
        if let Some((x, y)) = q.pairs.iter().find(|(x, y)| x == y) {
            return Err(Error::Config(format!("queries.pairs: [{x}, {y}] repeats a state")));
        }
        if self.theorems.is_empty() {
            return Err(Error::Config("theorems: empty".into()));
        }
        let c = &self.constants;
        if c.gammas == GammaPolicy::Supplied && c.gamma_values.as_ref().is_none_or(|v| v.len() < self.horizon) {
            return Err(Error::Config(format!("constants.gamma-values: need {} values", self.horizon)));
        }
        if self.theorems.contains(&Theorem::T4) && c.nash.is_none() {
            return Err(Error::Config("constants.nash: required by T4".into()));
        }
        if (self.theorems.contains(&Theorem::T5) || self.theorems.contains(&Theorem::T6)) && c.logsob.is_none() {
            return Err(Error::Config("constants.logsob: required by T5 and T6".into()));
        }
        if let Some(l) = &c.logsob {
            if l.policy == AlphaPolicy::Supplied && l.alpha.is_none() {
                return Err(Error::Config("constants.logsob.alpha: required by the supplied policy".into()));
            }
            if l.policy == AlphaPolicy::HypercubeExtrapolated && !matches!(self.generator, GeneratorSpec::Hypercube { .. }) {
                return Err(Error::Config("constants.logsob.policy: hypercube-extrapolated needs the hypercube generator".into()));
            }
        }
        Ok(())
    }

    pub fn queries(&self, n: usize) -> Vec<Query> {
        let mut out: Vec<Query> =
            if self.queries.all_pairs { Query::all_pairs(n) } else { self.queries.pairs.iter().map(|&(x, y)| Query::Pair(x, y)).collect() };
        if self.queries.centered {
            out.push(Query::Centered);
        }
        out
    }
}

/// An environment together with the schedule and scale it was built from, when any.
pub struct Built {
    pub env: Environment,
    pub schedule: Option<(ConductanceSchedule, f64)>,
}

fn schedule_on(spec: &ScheduleSpec, n: usize, horizon: usize, edges: &[(usize, usize)], seed: u64) -> Result<ConductanceSchedule> {
    match spec {
        ScheduleSpec::Uniform { profile } => ConductanceSchedule::uniform(n, horizon, edges, profile.clone(), true),
        ScheduleSpec::Random { lo, hi, changes, period } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            ConductanceSchedule::random_monotone(n, horizon, edges, *lo, *hi, *changes, *period, &mut rng)
        }
        ScheduleSpec::Edges { edges } => ConductanceSchedule::new(n, horizon, edges.clone(), true),
    }
}

pub fn build_environment(generator: &GeneratorSpec, horizon: usize, seed: u64) -> Result<Built> {
    let g = |e: Error| field("generator", e);
    let plain = |env: Environment| Built { env, schedule: None };
    match generator {
        GeneratorSpec::Stick { n, schedule } => {
            let s = schedule_on(schedule, *n, horizon, &cycle_edges(*n), seed).map_err(g)?;
            Ok(Built { env: gen_stick(*n, &s).map_err(g)?, schedule: Some((s, 1.0)) })
        }
        GeneratorSpec::TwoState { epsilon, laziness } => gen_two_state_no_merging_with(*epsilon, horizon, *laziness).map(plain).map_err(g),
        GeneratorSpec::Interpolation { n, c1, c2 } => {
            let c1 = ConductanceMatrix::from_edges(*n, c1).map_err(|e| field("generator.c1", e))?;
            let c2 = ConductanceMatrix::from_edges(*n, c2).map_err(|e| field("generator.c2", e))?;
            gen_interpolation(&c1, &c2, horizon).map(plain).map_err(g)
        }
        GeneratorSpec::BirthDeathHub { length, decay, sites, weights, laziness } => {
            if sites.is_empty() || weights.is_empty() {
                return Err(Error::Config("generator: sites and weights must be nonempty".into()));
            }
            let base = geometric_path(*length, *decay).map_err(g)?;
            let xs: Vec<usize> = sites.iter().copied().cycle().take(horizon).collect();
            let ws: Vec<f64> = weights.iter().copied().cycle().take(horizon).collect();
            gen_birth_death_hub(&base, &xs, &ws, horizon, *laziness).map(plain).map_err(g)
        }
        GeneratorSpec::Torus { n, d, schedule, normalized } => {
            let size = (*n as u128).checked_pow(*d as u32).filter(|&s| s <= DEFAULT_STATE_CAP as u128).ok_or_else(|| {
                Error::Config(format!("generator: {n}^{d} states exceed the cap of {DEFAULT_STATE_CAP}"))
            })? as usize;
            let s = schedule_on(schedule, size, horizon, &torus_edges(*n, *d), seed).map_err(g)?;
            let env = gen_torus(*n, *d, &s, *normalized, DEFAULT_STATE_CAP).map_err(g)?;
            let scale = if *normalized { 1.0 / ((n + 1) as f64).powi(*d as i32) } else { 1.0 };
            Ok(Built { env, schedule: Some((s, scale)) })
        }
        GeneratorSpec::Hypercube { n, schedule, normalized } => {
            if *n == 0 || *n >= 20 || (1usize << n) > DEFAULT_STATE_CAP {
                return Err(Error::Config(format!("generator: 2^{n} states exceed the cap of {DEFAULT_STATE_CAP}")));
            }
            let size = 1usize << n;
            let s = schedule_on(schedule, size, horizon, &hypercube_edges(*n), seed).map_err(g)?;
            let env = gen_hypercube(*n, &s, *normalized, DEFAULT_STATE_CAP).map_err(g)?;
            let scale = if *normalized { 1.0 / size as f64 } else { 1.0 };
            Ok(Built { env, schedule: Some((s, scale)) })
        }
        GeneratorSpec::File { path } => {
            let env = read_environment(path).map_err(|e| field("generator.path", e))?;
            if env.horizon() < horizon {
                return Err(Error::Config(format!("horizon: file has {} steps, config asks for {horizon}", env.horizon())));
            }
            let v = crate::environment::validate_environment(&env, &Default::default());
            if let Some(first) = v.violations.first() {
                return Err(Error::Config(format!("generator.path: {first} ({} violations)", v.violations.len())));
            }
            Ok(plain(env.truncated(horizon).map_err(g)?))
        }
    }
}

/// `γ_t ≥ γ_ref/(a·M)` with the unit-conductance walk on the same edges as reference.
pub fn comparison_gammas(env: &Environment, schedule: &ConductanceSchedule, scale: f64, m: f64, a: f64, seed: u64) -> Result<Vec<f64>> {
    let unit = ConductanceSchedule::uniform(
        schedule.size(),
        1,
        &schedule.edges().iter().map(|e| (e.x, e.y)).collect::<Vec<_>>(),
        EdgeExpr::Constant { value: 1.0 },
        true,
    )?;
    let reference = unit.environment(1.0, scale)?;
    let (kr, pr): (&Kernel, &Measure) = (reference.kernel(1), reference.measure(1));
    let mut out = vec![0.0; env.horizon()];
    for (s, e) in env.kernel_runs() {
        let q = symmetrization(env.kernel(s), env.measure(s))?;
        let probes = probe_family(&q, env.measure(s), 16, seed);
        let g = comparison_gamma((&q, env.measure(s)), (kr, pr), m, a, &probes)
            .map_err(|err| Error::Hypothesis(format!("step {s}: {err}")))?
            .gamma;
        out[s - 1..e].fill(g);
    }
    Ok(out)
}

/// `min_{k ≤ 3} k·α_k` for the lazy unit-conductance walk on `{0,1}^k`, with the
/// optimizer estimate for `k > 1`. An estimate, not a bound.
pub fn hypercube_kappa_estimate(budget: &LogSobBudget) -> Result<f64> {
    let mut kappa = f64::INFINITY;
    for k in 1..=3usize {
        let s = ConductanceSchedule::uniform(1 << k, 1, &hypercube_edges(k), EdgeExpr::Constant { value: 1.0 }, true)?;
        let env = s.environment(0.5, 1.0)?;
        let q = symmetrization(env.kernel(1), env.measure(1))?;
        let rep = logsob_alpha(&q, env.measure(1), budget)?;
        kappa = kappa.min(k as f64 * rep.alpha_estimate);
    }
    Ok(kappa)
}

pub struct Prepared {
    pub env: Environment,
    pub queries: Vec<Query>,
    pub constants: SweepConstants,
    pub notes: Vec<String>,
    pub extra: BTreeMap<String, serde_json::Value>,
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    config.check()?;
    let built = build_environment(&config.generator, config.horizon, config.seed)?;
    let env = built.env;
    let h = env.horizon();
    let c = &config.constants;
    let mut notes = Vec::new();
    let mut extra = BTreeMap::new();

    let (gammas, method) = match c.gammas {
        GammaPolicy::Exact => (poincare_gammas(&env).map_err(|e| field("constants.gammas", e))?, SpectralMethod::ExactEigen),
        GammaPolicy::Supplied => {
            let v = c.gamma_values.clone().unwrap_or_default();
            if let Some(g) = v.iter().find(|g| !(**g >= 0.0 && **g <= 1.0)) {
                return Err(Error::Config(format!("constants.gamma-values: {g} outside [0,1]")));
            }
            notes.push("gammas supplied by the configuration".into());
            (v[..h].to_vec(), SpectralMethod::ComparisonBound)
        }
        GammaPolicy::Comparison => {
            let (s, scale) = built
                .schedule
                .as_ref()
                .ok_or_else(|| Error::Config("constants.gammas: comparison needs a schedule-based generator".into()))?;
            let spec = c.comparison.unwrap_or(ComparisonSpec { m: None, a: 2.0 });
            let m = spec.m.unwrap_or_else(|| s.max_value());
            let g = comparison_gammas(&env, s, *scale, m, spec.a, config.seed).map_err(|e| field("constants.comparison", e))?;
            (g, SpectralMethod::ComparisonBound)
        }
    };

    let mut constants = SweepConstants { gammas, gamma_method: method, nash: None, nash_fitted: false, alphas: None, t6: None };

    if let Some(n) = &c.nash {
        let fitted = n.c.is_none();
        let value = match n.c {
            Some(v) => v,
            None => fit_nash_c_env(&env, n.d, n.t, n.random_probes, config.seed).map_err(|e| field("constants.nash", e))?,
        };
        constants.nash = Some(NashParams::new(value, n.d, n.t).map_err(|e| field("constants.nash", e))?);
        constants.nash_fitted = fitted;
    }

    if let Some(l) = &c.logsob {
        let budget = LogSobBudget { restarts: l.restarts, iterations: l.iterations, seed: config.seed };
        let alphas: Vec<f64> = match l.policy {
            AlphaPolicy::Supplied => vec![l.alpha.unwrap_or_default(); h],
            AlphaPolicy::CertifiedGap => {
                (1..=h).map(|t| alpha_from_gap(constants.gammas[t - 1], env.measure(t))).collect()
            }
            AlphaPolicy::Estimate => {
                notes.push("alphas are optimizer estimates, not certified".into());
                let mut out = vec![0.0; h];
                for (s, e) in env.kernel_runs() {
                    let q = symmetrization(env.kernel(s), env.measure(s))?;
                    out[s - 1..e].fill(logsob_alpha(&q, env.measure(s), &budget).map_err(|e| field("constants.logsob", e))?.alpha_estimate);
                }
                out
            }
            AlphaPolicy::HypercubeExtrapolated => {
                let GeneratorSpec::Hypercube { n, .. } = &config.generator else { unreachable!("checked") };
                let (s, _) = built.schedule.as_ref().expect("hypercube has a schedule");
                let m = c.comparison.and_then(|x| x.m).unwrap_or_else(|| s.max_value());
                let a = c.comparison.map_or(2.0, |x| x.a);
                let kappa = hypercube_kappa_estimate(&budget).map_err(|e| field("constants.logsob", e))?;
                notes.push(format!("alphas extrapolated from small cubes: kappa = {kappa} (estimate)"));
                extra.insert("kappa-estimate".into(), serde_json::json!(kappa));
                extra.insert("M".into(), serde_json::json!(m));
                vec![kappa / (a * m * *n as f64); h]
            }
        };
        if config.theorems.contains(&Theorem::T6) {
            let alpha = l.alpha.unwrap_or_else(|| alphas.iter().copied().fold(f64::INFINITY, f64::min));
            let rho = l.rho.unwrap_or_else(|| min_normalized_mass(&env));
            constants.t6 = Some(t6_params(&env, alpha, &alphas, rho).map_err(|e| field("constants.logsob", e))?);
        }
        constants.alphas = Some(alphas);
    }

    let queries = config.queries(env.size());
    Ok(Prepared { env, queries, constants, notes, extra })
}

pub struct Outcome {
    pub report: ExperimentReport,
    pub extra: BTreeMap<String, serde_json::Value>,
}

/// Builds everything the configuration asks for and runs the sweep.
pub fn execute(config: &ExperimentConfig) -> Result<Outcome> {
    let p = prepare(config)?;
    let mut report = bound_vs_exact_sweep(&p.env, &p.queries, &config.theorems, &p.constants, &config.queries.etas)?;
    report.notes.splice(0..0, p.notes);
    let mut extra = p.extra;
    extra.insert("distance".into(), serde_json::to_value(config.queries.distance).expect("plain enum"));
    let exact: BTreeMap<String, Crossing> = report
        .crossings
        .iter()
        .map(|c| (format!("{}@{}", c.pair_id, c.eta), if config.queries.distance == Distance::Tv { c.exact_tv } else { c.exact_sep }))
        .collect();
    extra.insert("exact-crossings".into(), serde_json::to_value(exact).expect("crossings serialize"));
    if let (GeneratorSpec::Hypercube { n, .. }, Some(m)) = (&config.generator, extra.get("M").and_then(|v| v.as_f64())) {
        let mut fits = BTreeMap::new();
        for c in &report.crossings {
            if let Some(Crossing::At(t)) = c.curves.get("T6") {
                fits.insert(format!("{}@{}", c.pair_id, c.eta), serde_json::json!(shape_constant(*t, m, *n, c.eta)));
            }
        }
        if !fits.is_empty() {
            extra.insert("shape-constant-A".into(), serde_json::Value::Object(fits.into_iter().collect()));
        }
    }
    Ok(Outcome { report, extra })
}

/// `A = T / (M·N·[log log M + log log N + log(1/η) + log M])`.
pub fn shape_constant(t: usize, m: f64, n: usize, eta: f64) -> f64 {
    let nf = n as f64;
    t as f64 / (m * nf * (m.ln().ln() + nf.ln().ln() + (1.0 / eta).ln() + m.ln()))
}
