//! Exact evolution of distributions, kernel products, duals and centered operators.

use nalgebra::{DMatrix, DVector};

use crate::environment::{check_dims, invariance_residual, normalize, Environment, Kernel, Measure, EPS_INV, EPS_ROW};
use crate::error::{Error, Result};

/// Drift of a distribution's total mass beyond which evolution results are flagged.
pub const DRIFT_WARN: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    p: DVector<f64>,
}

impl Distribution {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        let p = DVector::from_vec(p);
        if p.is_empty() {
            return Err(Error::Structural("empty distribution".into()));
        }
        if let Some(x) = p.iter().position(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!("probability at state {x} is {}", p[x])));
        }
        if (p.sum() - 1.0).abs() > EPS_ROW {
            return Err(Error::Domain(format!("probabilities sum to {}", p.sum())));
        }
        Ok(Distribution { p })
    }

    pub fn dirac(n: usize, z: usize) -> Self {
        let mut p = DVector::zeros(n);
        p[z] = 1.0;
        Distribution { p }
    }

    pub fn from_measure(pi: &Measure) -> Self {
        Distribution { p: normalize(pi).weights().clone() }
    }

    /// Wraps a vector produced by pushing a distribution through kernels.
    pub(crate) fn evolved(p: DVector<f64>) -> Self {
        Distribution { p }
    }

    pub fn probabilities(&self) -> &DVector<f64> {
        &self.p
    }

    pub fn get(&self, x: usize) -> f64 {
        self.p[x]
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// `|Σ p − 1|`; evolution never renormalizes, so this exposes accumulated kernel defects.
    pub fn drift(&self) -> f64 {
        (self.p.sum() - 1.0).abs()
    }
}

/// `μ0 K_1 ⋯ K_t` by successive vector-matrix products.
pub fn evolve(mu0: &Distribution, env: &Environment, t: usize) -> Result<Distribution> {
    env.check_time(t)?;
    if mu0.len() != env.size() {
        return Err(Error::Structural(format!("distribution has {} states, environment {}", mu0.len(), env.size())));
    }
    let mut p = mu0.p.clone();
    for s in 1..=t {
        p = env.kernel(s).push(&p);
    }
    Ok(Distribution::evolved(p))
}

/// `K_{s,t} = K_{s+1} ⋯ K_t`, the identity when `s = t`.
pub fn kernel_product(env: &Environment, s: usize, t: usize) -> Result<Kernel> {
    env.check_time(t)?;
    if s > t {
        return Err(Error::Range { index: s, horizon: t });
    }
    let mut m = DMatrix::identity(env.size(), env.size());
    for u in s + 1..=t {
        m = &m * env.kernel(u).matrix();
    }
    Ok(Kernel::from_product(m))
}

/// Rows `μ_t^x` for a set of starting distributions, advanced one step at a time.
#[derive(Clone, Debug)]
pub struct Propagator {
    rows: DMatrix<f64>,
    t: usize,
}

impl Propagator {
    pub fn new(starts: DMatrix<f64>) -> Self {
        Propagator { rows: starts, t: 0 }
    }

    /// One row per starting state, `δ_x` for each listed `x`.
    pub fn from_states(n: usize, states: &[usize]) -> Self {
        let mut rows = DMatrix::zeros(states.len(), n);
        for (i, &x) in states.iter().enumerate() {
            rows[(i, x)] = 1.0;
        }
        Propagator::new(rows)
    }

    pub fn time(&self) -> usize {
        self.t
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn step(&mut self, env: &Environment) -> Result<()> {
        env.check_time(self.t + 1)?;
        self.t += 1;
        self.rows = &self.rows * env.kernel(self.t).matrix();
        Ok(())
    }

    pub fn max_drift(&self) -> f64 {
        self.rows.row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max)
    }
}

fn require_positive(pi: &Measure, what: &str) -> Result<()> {
    match pi.weights().iter().position(|&w| w <= 0.0) {
        Some(x) => Err(Error::Domain(format!("{what} vanishes at state {x}"))),
        None => Ok(()),
    }
}

/// `K*(x,y) = π(y)/π(x) · K(y,x)`, the adjoint of `K` in `ℓ²(π)`.
pub fn adjoint(k: &Kernel, pi: &Measure) -> Result<Kernel> {
    check_dims(k, pi)?;
    let r = invariance_residual(k, pi).amax();
    if r > EPS_INV * pi.mass() {
        return Err(Error::Hypothesis(format!("measure is not invariant for the kernel (residual {r:e})")));
    }
    require_positive(pi, "measure")?;
    Ok(Kernel::from_product(reweighted_transpose(k.matrix(), pi.weights(), pi.weights())))
}

/// `(x,y) ↦ num(y)/den(x) · A(y,x)`.
fn reweighted_transpose(a: &DMatrix<f64>, num: &DVector<f64>, den: &DVector<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    DMatrix::from_fn(n, n, |x, y| num[y] / den[x] * a[(y, x)])
}

/// The two forward duals of a kernel `K: ℓ²(π_next) → ℓ²(π_prev)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardDual {
    /// `K⇒(x,y) = π_prev(y)/π_next(x) · K(y,x)`, the dual between the unnormalized spaces.
    pub unnormalized: DMatrix<f64>,
    /// `K→(x,y) = π̃_prev(y)/π̃_next(x) · K(y,x)`, the dual between the normalized spaces.
    /// Equal to `(π_next(V)/π_prev(V)) · K⇒`.
    pub normalized: DMatrix<f64>,
}

pub fn dual_forward(k: &Kernel, pi_prev: &Measure, pi_next: &Measure) -> Result<ForwardDual> {
    check_dims(k, pi_prev)?;
    check_dims(k, pi_next)?;
    require_positive(pi_next, "next measure")?;
    let unnormalized = reweighted_transpose(k.matrix(), pi_prev.weights(), pi_next.weights());
    let normalized = reweighted_transpose(k.matrix(), normalize(pi_prev).weights(), normalize(pi_next).weights());
    Ok(ForwardDual { unnormalized, normalized })
}

/// `O_{s,t} f = K_{s,t} f − π̃_s(K_{s,t} f)·1`.
#[derive(Clone, Debug, PartialEq)]
pub struct CenteredOperator {
    pub matrix: DMatrix<f64>,
    pub s: usize,
    pub t: usize,
}

impl CenteredOperator {
    pub fn apply(&self, f: &DVector<f64>) -> DVector<f64> {
        &self.matrix * f
    }

    pub fn max_row_sum(&self) -> f64 {
        self.matrix.row_iter().map(|r| r.sum().abs()).fold(0.0, f64::max)
    }
}

pub fn centered_operator(env: &Environment, s: usize, t: usize) -> Result<CenteredOperator> {
    let k = kernel_product(env, s, t)?;
    Ok(center(k.matrix(), normalize(env.measure(s)).weights(), s, t))
}

pub(crate) fn center(k: &DMatrix<f64>, pi_tilde: &DVector<f64>, s: usize, t: usize) -> CenteredOperator {
    let mean = k.tr_mul(pi_tilde);
    let mut matrix = k.clone();
    for mut row in matrix.row_iter_mut() {
        row -= mean.transpose();
    }
    CenteredOperator { matrix, s, t }
}

/// `h = μ/π̃`.
pub fn density(mu: &Distribution, pi_tilde: &Measure) -> Result<DVector<f64>> {
    if mu.len() != pi_tilde.len() {
        return Err(Error::Structural("distribution and measure sizes differ".into()));
    }
    let pt = normalize(pi_tilde);
    require_positive(&pt, "reference measure")?;
    Ok(mu.p.component_div(pt.weights()))
}

/// Largest residual of `h_t^z = K→_{0,t} h_0^z` and `O→_{0,t} h_0^z = h_t^z − K→_{0,t} 1`.
///
/// The left sides are built from per-step normalized duals and from the dual of the
/// centered operator; the right sides from direct evolution of `δ_z`.
pub fn density_evolution_identity_check(env: &Environment, z: usize, t: usize) -> Result<f64> {
    env.check_time(t)?;
    if z >= env.size() {
        return Err(Error::Structural(format!("state {z} outside {} states", env.size())));
    }
    if t == 0 {
        return Ok(0.0);
    }
    let n = env.size();
    let p0 = normalize(env.measure(0));
    let pt = normalize(env.measure(t));
    let h0 = density(&Distribution::dirac(n, z), &p0)?;
    let ht = density(&evolve(&Distribution::dirac(n, z), env, t)?, &pt)?;

    let mut via_duals = h0.clone();
    let mut ones = DVector::from_element(n, 1.0);
    for s in 1..=t {
        let d = dual_forward(env.kernel(s), env.measure(s - 1), env.measure(s))?;
        via_duals = &d.normalized * via_duals;
        ones = &d.normalized * ones;
    }
    let first = (&via_duals - &ht).amax();

    let o = centered_operator(env, 0, t)?;
    let o_dual = reweighted_transpose(&o.matrix, p0.weights(), pt.weights());
    let second = (o_dual * &h0 - (&ht - &ones)).amax();
    Ok(first.max(second))
}

/// `K→_{0,t} 1` computed from the start state `z`: `Σ_w K→_{0,t}(·,w) π̃_0(h_0^z)`.
/// Independent of `z` whenever the identities above hold.
pub fn mass_profile(env: &Environment, t: usize) -> Result<DVector<f64>> {
    env.check_time(t)?;
    let mut m = DVector::from_element(env.size(), 1.0);
    for s in 1..=t {
        m = dual_forward(env.kernel(s), env.measure(s - 1), env.measure(s))?.normalized * m;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::Environment;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn swap() -> Kernel {
        Kernel::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap()
    }

    fn random_kernel(n: usize, rng: &mut ChaCha8Rng) -> Kernel {
        let mut m = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>());
        for mut r in m.row_iter_mut() {
            let s = r.sum();
            r /= s;
        }
        Kernel::new(m).unwrap()
    }

    fn random_env(n: usize, horizon: usize, seed: u64) -> Environment {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ks: Vec<Kernel> = (0..horizon).map(|_| random_kernel(n, &mut rng)).collect();
        let ms = vec![Measure::uniform(n); horizon];
        Environment::new(ks, ms).unwrap()
    }

    #[test]
    fn identity_and_swap_evolution() {
        let env = Environment::constant(Kernel::identity(3), Measure::uniform(3), 5).unwrap();
        assert_eq!(evolve(&Distribution::dirac(3, 0), &env, 5).unwrap(), Distribution::dirac(3, 0));
        let env = Environment::constant(swap(), Measure::uniform(2), 3).unwrap();
        assert_eq!(evolve(&Distribution::dirac(2, 0), &env, 1).unwrap(), Distribution::dirac(2, 1));
        assert!(matches!(evolve(&Distribution::dirac(2, 0), &env, 4), Err(Error::Range { .. })));
    }

    #[test]
    fn evolution_matches_path_enumeration() {
        let env = random_env(3, 3, 11);
        let mu = evolve(&Distribution::dirac(3, 1), &env, 3).unwrap();
        for z in 0..3 {
            let mut total = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    total += env.kernel(1).get(1, a) * env.kernel(2).get(a, b) * env.kernel(3).get(b, z);
                }
            }
            assert_abs_diff_eq!(mu.get(z), total, epsilon = 1e-15);
        }
    }

    #[test]
    fn product_examples() {
        let env = random_env(4, 3, 5);
        assert_eq!(kernel_product(&env, 2, 2).unwrap(), Kernel::identity(4));
        assert_eq!(kernel_product(&env, 0, 1).unwrap().matrix(), env.kernel(1).matrix());
        let k02 = kernel_product(&env, 0, 2).unwrap();
        for x in 0..4 {
            for z in 0..4 {
                let direct: f64 = (0..4).map(|y| env.kernel(1).get(x, y) * env.kernel(2).get(y, z)).sum();
                assert_abs_diff_eq!(k02.get(x, z), direct, epsilon = 1e-15);
            }
        }
        assert!(kernel_product(&env, 3, 2).is_err());
    }

    #[test]
    fn adjoint_examples() {
        let k = Kernel::new(DMatrix::from_row_slice(2, 2, &[0.7, 0.3, 0.1, 0.9])).unwrap();
        let pi = Measure::new(vec![1.0, 3.0]).unwrap();
        let a = adjoint(&k, &pi).unwrap();
        assert!((a.matrix() - k.matrix()).amax() < 1e-15);
        let rot = Kernel::new(DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0])).unwrap();
        let back = adjoint(&rot, &Measure::uniform(3)).unwrap();
        assert_eq!(back.matrix(), &rot.matrix().transpose());
        assert!(matches!(adjoint(&k, &Measure::uniform(2)), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn forward_dual_collapses_to_adjoint() {
        let k = Kernel::new(DMatrix::from_row_slice(2, 2, &[0.7, 0.3, 0.1, 0.9])).unwrap();
        let pi = Measure::new(vec![1.0, 3.0]).unwrap();
        let d = dual_forward(&k, &pi, &pi).unwrap();
        assert_eq!(d.unnormalized, adjoint(&k, &pi).unwrap().into_matrix());
    }

    #[test]
    fn forward_dual_mass_relation() {
        let k = Kernel::new(DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.25, 0.75])).unwrap();
        let prev = Measure::new(vec![1.0, 2.0]).unwrap();
        let next = Measure::new(vec![2.0, 5.0]).unwrap();
        let d = dual_forward(&k, &prev, &next).unwrap();
        let ratio = next.mass() / prev.mass();
        for x in 0..2 {
            for y in 0..2 {
                assert_abs_diff_eq!(d.normalized[(x, y)], ratio * d.unnormalized[(x, y)], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn centered_operator_examples() {
        let env = random_env(3, 4, 2);
        let o = centered_operator(&env, 2, 2).unwrap();
        let pt = normalize(env.measure(2));
        for x in 0..3 {
            for y in 0..3 {
                let expected = if x == y { 1.0 } else { 0.0 } - pt.get(y);
                assert_abs_diff_eq!(o.matrix[(x, y)], expected, epsilon = 1e-15);
            }
        }
        let o = centered_operator(&env, 0, 4).unwrap();
        assert!(o.apply(&DVector::from_element(3, 2.5)).amax() < 1e-14);
        assert!(o.max_row_sum() < EPS_ROW);
    }

    #[test]
    fn semigroup_on_random_environment() {
        let env = random_env(4, 6, 8);
        let a = centered_operator(&env, 1, 3).unwrap();
        let b = centered_operator(&env, 3, 6).unwrap();
        let c = centered_operator(&env, 1, 6).unwrap();
        assert!((&a.matrix * &b.matrix - &c.matrix).amax() < 1e-12);
    }

    #[test]
    fn density_examples() {
        let pi = Measure::new(vec![1.0, 3.0, 4.0]).unwrap();
        let h = density(&Distribution::from_measure(&pi), &pi).unwrap();
        assert!(h.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let h = density(&Distribution::dirac(3, 1), &pi).unwrap();
        assert_eq!(h.as_slice(), &[0.0, 1.0 / 0.375, 0.0]);
        let norm = (h.component_mul(&h).dot(normalize(&pi).weights())).sqrt();
        assert_abs_diff_eq!(norm, 1.0 / 0.375f64.sqrt(), epsilon = 1e-14);
        assert!(density(&Distribution::dirac(2, 0), &Measure::new(vec![0.0, 1.0]).unwrap()).is_err());
    }

    #[test]
    fn density_identities() {
        let pi = Measure::new(vec![2.0, 1.0, 1.0]).unwrap();
        let k = Kernel::new(DMatrix::from_row_slice(3, 3, &[0.5, 0.25, 0.25, 0.5, 0.5, 0.0, 0.5, 0.0, 0.5])).unwrap();
        let env = Environment::constant(k, pi, 50).unwrap();
        assert_eq!(density_evolution_identity_check(&env, 0, 0).unwrap(), 0.0);
        for z in 0..3 {
            assert!(density_evolution_identity_check(&env, z, 50).unwrap() <= 1e-10);
        }
        let m = mass_profile(&env, 50).unwrap();
        assert!(m.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn distribution_validation_and_drift() {
        assert!(Distribution::new(vec![0.5, 0.6]).is_err());
        assert!(Distribution::new(vec![-0.1, 1.1]).is_err());
        assert_eq!(Distribution::new(vec![0.25, 0.75]).unwrap().drift(), 0.0);
    }

    #[test]
    fn propagator_matches_evolve() {
        let env = random_env(5, 7, 21);
        let mut p = Propagator::from_states(5, &[0, 3]);
        for _ in 0..7 {
            p.step(&env).unwrap();
        }
        let direct = evolve(&Distribution::dirac(5, 3), &env, 7).unwrap();
        for y in 0..5 {
            assert_abs_diff_eq!(p.rows()[(1, y)], direct.get(y), epsilon = 1e-15);
        }
        assert!(p.step(&env).is_err());
        assert!(p.max_drift() < 1e-12);
    }
}
