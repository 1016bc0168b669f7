//! Numerical forms of the intermediate inequalities behind the merging bounds.
//!
//! Each check returns the worst excess `lhs − rhs`; a sound instance has excess
//! at most rounding level.

use nalgebra::DVector;

use crate::environment::{normalize, Environment, Measure};
use crate::error::{Error, Result};
use crate::evolution::{center, kernel_product};
use crate::functional::{dirichlet_inner, operator_norm, Exponent};
use crate::spectral::symmetrization;

/// `‖g − π̃(g)‖²_{ℓ²(π)}`.
fn centered_sq_norm(g: &DVector<f64>, pi: &Measure) -> f64 {
    let w = pi.weights();
    let mean = g.dot(w) / pi.mass();
    g.iter().zip(w.iter()).map(|(v, w)| (v - mean) * (v - mean) * w).sum()
}

/// `a_t(s) = ‖K_{t−s,t} f − π̃_{t−s}(K_{t−s,t} f)‖²_{ℓ²(π_{t−s})}` for `s = 0..=t`.
pub fn backward_sequence(env: &Environment, t: usize, f: &DVector<f64>) -> Result<Vec<f64>> {
    env.check_time(t)?;
    if f.len() != env.size() {
        return Err(Error::Structural(format!("function has {} entries, environment {}", f.len(), env.size())));
    }
    let mut g = f.clone();
    let mut out = vec![centered_sq_norm(&g, env.measure(t))];
    for s in 1..=t {
        g = env.kernel(t - s + 1).apply(&g);
        out.push(centered_sq_norm(&g, env.measure(t - s)));
    }
    Ok(out)
}

/// `max_s a_t(s+1) − λ_{t−s} a_t(s)` with `λ_u = 1 − γ_u`.
pub fn backward_contraction_excess(env: &Environment, gammas: &[f64], t: usize, f: &DVector<f64>) -> Result<f64> {
    let a = backward_sequence(env, t, f)?;
    let mut worst = f64::NEG_INFINITY;
    for s in 0..t {
        worst = worst.max(a[s + 1] - (1.0 - gammas[t - s - 1]) * a[s]);
    }
    Ok(worst)
}

/// `E_{Q_r,π_r}(g,g) − (‖g − π̃_r(g)‖²_{ℓ²(π_r)} − ‖K_r g − π̃_{r−1}(K_r g)‖²_{ℓ²(π_{r−1})})`.
pub fn dirichlet_control_excess(env: &Environment, r: usize, g: &DVector<f64>) -> Result<f64> {
    if r == 0 {
        return Err(Error::Range { index: 0, horizon: env.horizon() });
    }
    env.check_time(r)?;
    let pi = env.measure(r);
    let q = symmetrization(env.kernel(r), pi)?;
    let e = dirichlet_inner(g.as_slice(), q.matrix(), pi.weights().as_slice());
    let kg = env.kernel(r).apply(g);
    Ok(e - (centered_sq_norm(g, pi) - centered_sq_norm(&kg, env.measure(r - 1))))
}

/// Exact `‖K_{0,t} − π̃_1(K_{0,t}·)‖_{ℓ²(π̃_t) → ℓ²(π̃_1)}` and the bound `√((π_t(V)/π_1(V)) ∏ λ_s)`.
pub fn centered_norm_vs_bound(env: &Environment, gammas: &[f64], t: usize) -> Result<(f64, f64)> {
    let k = kernel_product(env, 0, t)?;
    let p1 = normalize(env.measure(1));
    let pt = normalize(env.measure(t));
    let o = center(k.matrix(), p1.weights(), 0, t);
    let lhs = operator_norm(&o.matrix, Exponent::Two, Exponent::Two, &pt, &p1)?;
    let prod: f64 = gammas[..t].iter().map(|g| 1.0 - g).product();
    let rhs = (env.measure(t).mass() / env.measure(1).mass() * prod).sqrt();
    Ok((lhs, rhs))
}

/// `(η, pairwise)` with `η = max_{x,z} |μ_t^x(z)/(π̃_0 K_{0,t})(z) − 1|` and
/// `pairwise = max_{x,y,z} |μ_t^x(z)/μ_t^y(z) − 1|`.
pub fn separation_lemma_quantities(env: &Environment, t: usize) -> Result<(f64, f64)> {
    let k = kernel_product(env, 0, t)?;
    Ok(lemma_terms(k.matrix(), normalize(env.measure(0)).weights()))
}

/// [`separation_lemma_quantities`] for every `t = 1..=horizon`, building `K_{0,t}` incrementally.
pub fn separation_lemma_curve(env: &Environment) -> Vec<(f64, f64)> {
    let p0 = normalize(env.measure(0));
    let mut m = nalgebra::DMatrix::identity(env.size(), env.size());
    (1..=env.horizon())
        .map(|t| {
            m = &m * env.kernel(t).matrix();
            lemma_terms(&m, p0.weights())
        })
        .collect()
}

fn lemma_terms(m: &nalgebra::DMatrix<f64>, p0: &DVector<f64>) -> (f64, f64) {
    let nu = m.tr_mul(p0);
    let mut eta: f64 = 0.0;
    let mut pairwise: f64 = 0.0;
    for z in 0..m.ncols() {
        let col = m.column(z);
        let (lo, hi) = col.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if nu[z] > 0.0 {
            eta = eta.max((hi / nu[z] - 1.0).abs()).max((lo / nu[z] - 1.0).abs());
        }
        pairwise = pairwise.max(if lo > 0.0 { hi / lo - 1.0 } else if hi > 0.0 { f64::INFINITY } else { 0.0 });
    }
    (eta, pairwise)
}

/// `‖K_{0,t} f‖_{ℓ^{q_t}(π̃_1)}` and `‖f‖_{ℓ^q(π̃_t)} π_t(V)^{1/q} / π_1(V)^{1/q_t}` with
/// `q_t = q ∏_{s ≤ t}(1 + α_s)`.
pub fn hypercontractive_chain(env: &Environment, alphas: &[f64], t: usize, q: f64, f: &DVector<f64>) -> Result<(f64, f64)> {
    env.check_time(t)?;
    if !(q >= 2.0) {
        return Err(Error::Domain(format!("q = {q} below 2")));
    }
    let qt = q * alphas[..t].iter().map(|a| 1.0 + a).product::<f64>();
    let k = kernel_product(env, 0, t)?;
    let kf = k.apply(f);
    let norm = |g: &DVector<f64>, p: f64, pi: &Measure| {
        let w = normalize(pi);
        g.iter().zip(w.weights().iter()).map(|(v, w)| v.abs().powf(p) * w).sum::<f64>().powf(1.0 / p)
    };
    let lhs = norm(&kf, qt, env.measure(1));
    let rhs = norm(f, q, env.measure(t)) * env.measure(t).mass().powf(1.0 / q) / env.measure(1).mass().powf(1.0 / qt);
    Ok((lhs, rhs))
}
