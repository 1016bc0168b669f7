//! Conductance networks and the environment generators built from them.
//!
//! A conductance `c` induces `P(x,y) = c(x,y)/Σ_z c(x,z)` with reversible measure
//! `π(x) = Σ_y c(x,y)`. Every generator lazifies the induced kernel and packs the
//! steps into an [`Environment`], sharing storage across steps whose edge values
//! did not change.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{Environment, Kernel, Measure, Tolerances};
use crate::error::{Error, Result};

pub const DEFAULT_STATE_CAP: usize = 4096;

/// Symmetric nonnegative edge weights; diagonal entries are self-loops.
#[derive(Clone, Debug, PartialEq)]
pub struct ConductanceMatrix {
    w: DMatrix<f64>,
}

impl ConductanceMatrix {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        if w.nrows() != w.ncols() || w.nrows() == 0 {
            return Err(Error::Structural(format!("conductances must be square, got {}x{}", w.nrows(), w.ncols())));
        }
        let n = w.nrows();
        for x in 0..n {
            for y in 0..n {
                let v = w[(x, y)];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Domain(format!("conductance ({x},{y}) = {v}")));
                }
                if v != w[(y, x)] {
                    return Err(Error::Domain(format!("conductance not symmetric at ({x},{y})")));
                }
            }
            if w.row(x).sum() <= 0.0 {
                return Err(Error::Domain(format!("state {x} has zero total conductance")));
            }
        }
        Ok(ConductanceMatrix { w })
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut w = DMatrix::zeros(n, n);
        for &(x, y, c) in edges {
            if x >= n || y >= n {
                return Err(Error::Structural(format!("edge ({x},{y}) outside {n} states")));
            }
            w[(x, y)] += c;
            if x != y {
                w[(y, x)] += c;
            }
        }
        ConductanceMatrix::new(w)
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn size(&self) -> usize {
        self.w.nrows()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.w[(x, y)]
    }

    pub fn row_sums(&self) -> DVector<f64> {
        DVector::from_iterator(self.size(), self.w.row_iter().map(|r| r.sum()))
    }

    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        ConductanceMatrix::new(&self.w * lambda)
    }

    /// Connectivity of the graph of positive off-diagonal conductances.
    pub fn is_connected(&self) -> bool {
        let n = self.size();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(x) = stack.pop() {
            for y in 0..n {
                if !seen[y] && self.w[(x, y)] > 0.0 {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

pub fn kernel_from_conductances(c: &ConductanceMatrix) -> (Kernel, Measure) {
    let pi = c.row_sums();
    let mut p = c.weights().clone();
    for (x, mut row) in p.row_iter_mut().enumerate() {
        row /= pi[x];
    }
    (Kernel::from_product(p), Measure::from_vector(pi).expect("row sums are positive"))
}

/// `(1 − a)·I + a·K`.
pub fn lazify(k: &Kernel, a: f64) -> Result<Kernel> {
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::Domain(format!("laziness weight {a} outside (0,1]")));
    }
    if a == 1.0 {
        return Ok(k.clone());
    }
    let n = k.size();
    let mut m = k.matrix() * a;
    for x in 0..n {
        m[(x, x)] += 1.0 - a;
    }
    Ok(Kernel::from_product(m))
}

/// Time profile of one edge conductance, evaluated at `t ≥ 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "expr", rename_all = "kebab-case")]
pub enum EdgeExpr {
    Constant { value: f64 },
    /// `min(start + slope·t, cap)`
    LinearCapped { start: f64, slope: f64, cap: f64 },
    /// `scale·t^exponent + offset`
    PowerLaw { scale: f64, exponent: f64, offset: f64 },
    /// `values[t − 1]`
    CustomTable { values: Vec<f64> },
}

impl EdgeExpr {
    pub fn eval(&self, t: usize) -> f64 {
        let tf = t as f64;
        match self {
            EdgeExpr::Constant { value } => *value,
            EdgeExpr::LinearCapped { start, slope, cap } => (start + slope * tf).min(*cap),
            EdgeExpr::PowerLaw { scale, exponent, offset } => scale * tf.powf(*exponent) + offset,
            EdgeExpr::CustomTable { values } => values[t - 1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeSchedule {
    pub x: usize,
    pub y: usize,
    #[serde(flatten)]
    pub expr: EdgeExpr,
}

/// `t ↦ c_t` for `1 ≤ t ≤ horizon`, described edge by edge.
#[derive(Clone, Debug, PartialEq)]
pub struct ConductanceSchedule {
    n: usize,
    horizon: usize,
    edges: Vec<EdgeSchedule>,
    monotone: bool,
}

impl ConductanceSchedule {
    /// With `monotone`, every edge is checked to be non-decreasing at every step.
    pub fn new(n: usize, horizon: usize, edges: Vec<EdgeSchedule>, monotone: bool) -> Result<Self> {
        if n == 0 || horizon == 0 {
            return Err(Error::Structural("schedule needs at least one state and one step".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for e in &edges {
            if e.x >= n || e.y >= n {
                return Err(Error::Structural(format!("edge ({},{}) outside {n} states", e.x, e.y)));
            }
            if !seen.insert((e.x.min(e.y), e.x.max(e.y))) {
                return Err(Error::Structural(format!("edge ({},{}) listed twice", e.x, e.y)));
            }
            if let EdgeExpr::CustomTable { values } = &e.expr {
                if values.len() < horizon {
                    return Err(Error::Structural(format!("edge ({},{}) table has {} values for horizon {horizon}", e.x, e.y, values.len())));
                }
            }
        }
        let schedule = ConductanceSchedule { n, horizon, edges, monotone };
        for t in 1..=horizon {
            for e in &schedule.edges {
                let v = e.expr.eval(t);
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Domain(format!("edge ({},{}) has conductance {v} at t={t}", e.x, e.y)));
                }
                if monotone && t > 1 && v < e.expr.eval(t - 1) {
                    return Err(Error::Domain(format!("edge ({},{}) decreases at t={t}", e.x, e.y)));
                }
            }
        }
        for t in 1..=horizon {
            if monotone && t > 1 {
                break;
            }
            schedule.at(t)?;
        }
        Ok(schedule)
    }

    /// Every listed edge follows the same profile.
    pub fn uniform(n: usize, horizon: usize, edges: &[(usize, usize)], expr: EdgeExpr, monotone: bool) -> Result<Self> {
        let edges = edges.iter().map(|&(x, y)| EdgeSchedule { x, y, expr: expr.clone() }).collect();
        ConductanceSchedule::new(n, horizon, edges, monotone)
    }

    /// Random non-decreasing profiles in `[lo, hi]`: each edge starts in the lower half of the
    /// range and jumps `changes` times, at steps on a grid of spacing `period`, by a uniform
    /// fraction of its remaining headroom.
    pub fn random_monotone<R: Rng>(
        n: usize,
        horizon: usize,
        edges: &[(usize, usize)],
        lo: f64,
        hi: f64,
        changes: usize,
        period: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::Domain(format!("random schedule range [{lo}, {hi}]")));
        }
        let period = period.max(1);
        let slots = (horizon - 1) / period;
        let mut out = Vec::with_capacity(edges.len());
        for &(x, y) in edges {
            let mut value = lo + 0.5 * (hi - lo) * rng.random::<f64>();
            let mut jumps: Vec<usize> = (0..if slots == 0 { 0 } else { changes }).map(|_| 1 + period * rng.random_range(1..=slots)).collect();
            jumps.sort_unstable();
            let mut values = Vec::with_capacity(horizon);
            let mut next = 0;
            for t in 1..=horizon {
                while next < jumps.len() && jumps[next] == t {
                    value += (hi - value) * rng.random::<f64>();
                    next += 1;
                }
                values.push(value.min(hi));
            }
            out.push(EdgeSchedule { x, y, expr: EdgeExpr::CustomTable { values } });
        }
        ConductanceSchedule::new(n, horizon, out, true)
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn edges(&self) -> &[EdgeSchedule] {
        &self.edges
    }

    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    /// Largest conductance over all edges and steps.
    pub fn max_value(&self) -> f64 {
        (1..=self.horizon).flat_map(|t| self.edge_values(t)).fold(0.0, f64::max)
    }

    pub fn edge_values(&self, t: usize) -> Vec<f64> {
        self.edges.iter().map(|e| e.expr.eval(t)).collect()
    }

    pub fn at(&self, t: usize) -> Result<ConductanceMatrix> {
        if t == 0 || t > self.horizon {
            return Err(Error::Range { index: t, horizon: self.horizon });
        }
        self.matrix_from_values(&self.edge_values(t), 1.0)
    }

    fn matrix_from_values(&self, values: &[f64], scale: f64) -> Result<ConductanceMatrix> {
        let mut w = DMatrix::zeros(self.n, self.n);
        for (e, &v) in self.edges.iter().zip(values) {
            w[(e.x, e.y)] = v * scale;
            w[(e.y, e.x)] = v * scale;
        }
        ConductanceMatrix::new(w)
    }

    /// Lazified environment with conductances multiplied by `scale`; unchanged steps share storage.
    pub fn environment(&self, laziness: f64, scale: f64) -> Result<Environment> {
        let mut kernels: Vec<Arc<Kernel>> = Vec::with_capacity(self.horizon);
        let mut measures: Vec<Arc<Measure>> = Vec::with_capacity(self.horizon);
        let mut prev: Option<Vec<f64>> = None;
        for t in 1..=self.horizon {
            let values = self.edge_values(t);
            if prev.as_ref() == Some(&values) {
                kernels.push(kernels[t - 2].clone());
                measures.push(measures[t - 2].clone());
                continue;
            }
            let c = self.matrix_from_values(&values, scale)?;
            let (p, pi) = kernel_from_conductances(&c);
            kernels.push(Arc::new(lazify(&p, laziness)?));
            measures.push(Arc::new(pi));
            prev = Some(values);
        }
        Environment::validated(kernels, measures, &Tolerances::default())
    }

    fn check_support(&self, allowed: impl Fn(usize, usize) -> bool, required: &[(usize, usize)], name: &str) -> Result<()> {
        for e in &self.edges {
            if e.x != e.y && !allowed(e.x, e.y) {
                return Err(Error::Domain(format!("edge ({},{}) is not an edge of the {name}", e.x, e.y)));
            }
        }
        let present: std::collections::HashSet<(usize, usize)> = self.edges.iter().map(|e| (e.x.min(e.y), e.x.max(e.y))).collect();
        for &(x, y) in required {
            if !present.contains(&(x.min(y), x.max(y))) {
                return Err(Error::Domain(format!("{name} edge ({x},{y}) has no conductance")));
            }
        }
        Ok(())
    }

    fn check_monotone_at_least_one(&self) -> Result<()> {
        if !self.monotone {
            for t in 2..=self.horizon {
                for e in &self.edges {
                    if e.expr.eval(t) < e.expr.eval(t - 1) {
                        return Err(Error::Domain(format!("edge ({},{}) decreases at t={t}", e.x, e.y)));
                    }
                }
            }
        }
        for e in &self.edges {
            let v = e.expr.eval(1);
            if v < 1.0 {
                return Err(Error::Domain(format!("edge ({},{}) has conductance {v} < 1 at t=1", e.x, e.y)));
            }
        }
        Ok(())
    }
}

pub fn cycle_edges(n: usize) -> Vec<(usize, usize)> {
    match n {
        0 | 1 => vec![],
        2 => vec![(0, 1)],
        _ => (0..n).map(|x| (x, (x + 1) % n)).collect(),
    }
}

fn torus_index(coords: &[usize], n: usize) -> usize {
    coords.iter().rev().fold(0, |acc, &c| acc * n + c)
}

fn torus_coords(mut i: usize, n: usize, d: usize) -> Vec<usize> {
    (0..d)
        .map(|_| {
            let c = i % n;
            i /= n;
            c
        })
        .collect()
}

/// Nearest-neighbour edges of `(Z/NZ)^d`; state `x` has coordinates `x = Σ_k x_k N^k`.
pub fn torus_edges(n: usize, d: usize) -> Vec<(usize, usize)> {
    let size = n.pow(d as u32);
    let mut edges = Vec::new();
    for i in 0..size {
        let c = torus_coords(i, n, d);
        for k in 0..d {
            let mut c2 = c.clone();
            c2[k] = (c[k] + 1) % n;
            let j = torus_index(&c2, n);
            if n > 2 || i < j {
                edges.push((i, j));
            }
        }
    }
    edges
}

fn torus_neighbors(x: usize, y: usize, n: usize, d: usize) -> bool {
    let (a, b) = (torus_coords(x, n, d), torus_coords(y, n, d));
    let diffs: Vec<usize> = (0..d).filter(|&k| a[k] != b[k]).collect();
    diffs.len() == 1 && {
        let k = diffs[0];
        (a[k] + 1) % n == b[k] || (b[k] + 1) % n == a[k]
    }
}

pub fn hypercube_edges(n: usize) -> Vec<(usize, usize)> {
    let size = 1usize << n;
    (0..size).flat_map(|x| (0..n).map(move |k| (x, x ^ (1 << k))).filter(|&(x, y)| x < y)).collect()
}

/// Lazy walk on the cycle `Z/NZ` with `K_t = (I + P_t)/2`. Every neighbour edge needs
/// conductance at least 1; self-loops are allowed.
pub fn gen_stick(n: usize, schedule: &ConductanceSchedule) -> Result<Environment> {
    if n < 3 || schedule.size() != n {
        return Err(Error::Domain(format!("stick needs N ≥ 3 states matching the schedule, got N={n}, schedule has {}", schedule.size())));
    }
    schedule.check_support(|x, y| (x + 1) % n == y || (y + 1) % n == x, &cycle_edges(n), "cycle")?;
    schedule.check_monotone_at_least_one()?;
    schedule.environment(0.5, 1.0)
}

/// `c_t(0,0) = c_t(1,1) = t^{1+ε}`, `c_t(0,1) = 1`.
pub fn two_state_schedule(eps: f64, horizon: usize) -> Result<ConductanceSchedule> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("ε = {eps} must be positive")));
    }
    let grow = EdgeExpr::PowerLaw { scale: 1.0, exponent: 1.0 + eps, offset: 0.0 };
    let edges = vec![
        EdgeSchedule { x: 0, y: 0, expr: grow.clone() },
        EdgeSchedule { x: 1, y: 1, expr: grow },
        EdgeSchedule { x: 0, y: 1, expr: EdgeExpr::Constant { value: 1.0 } },
    ];
    ConductanceSchedule::new(2, horizon, edges, true)
}

/// Two-state environment whose stay probabilities tend to 1 fast enough that the
/// chains started at 0 and 1 never merge. Uses the lazy kernels `(I + P_t)/2`.
pub fn gen_two_state_no_merging(eps: f64, horizon: usize) -> Result<Environment> {
    gen_two_state_no_merging_with(eps, horizon, 0.5)
}

pub fn gen_two_state_no_merging_with(eps: f64, horizon: usize, laziness: f64) -> Result<Environment> {
    two_state_schedule(eps, horizon)?.environment(laziness, 1.0)
}

/// `c_t = c1/t + (1 − 1/t)·c2`, lazified. Requires both graphs connected and
/// `ν2(x) ≥ ν1(x)` for the row sums, which makes `π_t` non-decreasing.
pub fn gen_interpolation(c1: &ConductanceMatrix, c2: &ConductanceMatrix, horizon: usize) -> Result<Environment> {
    if c1.size() != c2.size() {
        return Err(Error::Structural("interpolated graphs have different sizes".into()));
    }
    if horizon == 0 {
        return Err(Error::Structural("horizon must be at least 1".into()));
    }
    for (name, c) in [("first", c1), ("second", c2)] {
        if !c.is_connected() {
            return Err(Error::Hypothesis(format!("{name} graph is not connected")));
        }
    }
    let (nu1, nu2) = (c1.row_sums(), c2.row_sums());
    for x in 0..c1.size() {
        if nu2[x] < nu1[x] {
            return Err(Error::Hypothesis(format!("row sum at state {x} decreases: ν2 = {} < ν1 = {}", nu2[x], nu1[x])));
        }
    }
    let mut kernels = Vec::with_capacity(horizon);
    let mut measures = Vec::with_capacity(horizon);
    let same = c1 == c2;
    for t in 1..=horizon {
        if same && t > 1 {
            kernels.push(Arc::clone(&kernels[0]));
            measures.push(Arc::clone(&measures[0]));
            continue;
        }
        let s = 1.0 / t as f64;
        let c = ConductanceMatrix::new(c1.weights() * s + c2.weights() * (1.0 - s))?;
        let (p, pi) = kernel_from_conductances(&c);
        kernels.push(Arc::new(lazify(&p, 0.5)?));
        measures.push(Arc::new(pi));
    }
    Environment::validated(kernels, measures, &Tolerances::default())
}

/// Birth-death conductances on `[0, len]` with `c(x, x+1) = decay^x` and a unit loop at 0,
/// scaled so that the row sums `u` form a probability with `u(0)` maximal.
pub fn geometric_path(len: usize, decay: f64) -> Result<ConductanceMatrix> {
    if len == 0 || !(decay > 0.0 && decay <= 1.0) {
        return Err(Error::Domain(format!("path length {len}, decay {decay}")));
    }
    let mut edges = vec![(0, 0, 1.0)];
    edges.extend((0..len).map(|x| (x, x + 1, decay.powi(x as i32))));
    let c = ConductanceMatrix::from_edges(len + 1, &edges)?;
    let total = c.row_sums().sum();
    c.scaled(1.0 / total)
}

/// At step `t` the hub edge `{0, xs[t-1]}` gains `u(xs[t-1])·ws[t-1]`, where `u` are the row
/// sums of the base path conductances. Requires `u(0) = max u`.
pub fn gen_birth_death_hub(base: &ConductanceMatrix, xs: &[usize], ws: &[f64], horizon: usize, laziness: f64) -> Result<Environment> {
    let n = base.size();
    if xs.len() < horizon || ws.len() < horizon {
        return Err(Error::Structural(format!("need {horizon} additions, got {} sites and {} weights", xs.len(), ws.len())));
    }
    for x in 0..n {
        for y in 0..n {
            if base.get(x, y) > 0.0 && x.abs_diff(y) > 1 {
                return Err(Error::Domain(format!("base conductance ({x},{y}) is not a path edge")));
            }
        }
    }
    let u = base.row_sums();
    if let Some(x) = (1..n).find(|&x| u[x] > u[0]) {
        return Err(Error::Hypothesis(format!("u(0) = {} is not maximal: u({x}) = {}", u[0], u[x])));
    }
    let mut c = base.weights().clone();
    let mut kernels: Vec<Arc<Kernel>> = Vec::with_capacity(horizon);
    let mut measures: Vec<Arc<Measure>> = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let (x, w) = (xs[t - 1], ws[t - 1]);
        if x == 0 || x >= n {
            return Err(Error::Domain(format!("hub target {x} at t={t} outside [1, {}]", n - 1)));
        }
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::Domain(format!("hub weight {w} at t={t}")));
        }
        if t > 1 && w == 0.0 {
            kernels.push(Arc::clone(&kernels[t - 2]));
            measures.push(Arc::clone(&measures[t - 2]));
            continue;
        }
        c[(0, x)] += u[x] * w;
        c[(x, 0)] = c[(0, x)];
        let (p, pi) = kernel_from_conductances(&ConductanceMatrix::new(c.clone())?);
        kernels.push(Arc::new(lazify(&p, laziness)?));
        measures.push(Arc::new(pi));
    }
    Environment::validated(kernels, measures, &Tolerances::default())
}

/// Lazy walk on `(Z/NZ)^d`. With `normalized`, conductances are divided by `(N+1)^d`.
pub fn gen_torus(n: usize, d: usize, schedule: &ConductanceSchedule, normalized: bool, cap: usize) -> Result<Environment> {
    if n < 3 || d == 0 {
        return Err(Error::Domain(format!("torus needs N ≥ 3 and d ≥ 1, got N={n}, d={d}")));
    }
    let size = (n as u128).checked_pow(d as u32).filter(|&s| s <= cap as u128).ok_or_else(|| Error::Resource(format!("{n}^{d} states exceed the cap of {cap}")))? as usize;
    if schedule.size() != size {
        return Err(Error::Structural(format!("schedule has {} states, torus has {size}", schedule.size())));
    }
    schedule.check_support(|x, y| torus_neighbors(x, y, n, d), &torus_edges(n, d), "torus")?;
    schedule.check_monotone_at_least_one()?;
    let scale = if normalized { 1.0 / ((n + 1) as f64).powi(d as i32) } else { 1.0 };
    schedule.environment(0.5, scale)
}

/// Lazy walk on `{0,1}^N`, state `x` read as a bit string. With `normalized`, the
/// measures are divided by `2^N`.
pub fn gen_hypercube(n: usize, schedule: &ConductanceSchedule, normalized: bool, cap: usize) -> Result<Environment> {
    if n == 0 || n >= usize::BITS as usize || (1usize << n) > cap {
        return Err(Error::Resource(format!("2^{n} states exceed the cap of {cap}")));
    }
    let size = 1usize << n;
    if schedule.size() != size {
        return Err(Error::Structural(format!("schedule has {} states, hypercube has {size}", schedule.size())));
    }
    schedule.check_support(|x, y| (x ^ y).count_ones() == 1, &hypercube_edges(n), "hypercube")?;
    schedule.check_monotone_at_least_one()?;
    let scale = if normalized { 1.0 / size as f64 } else { 1.0 };
    schedule.environment(0.5, scale)
}
