//! Weighted norms, variance, entropy, Dirichlet forms, distances between
//! distributions and exact weighted operator norms.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::environment::{invariance_residual, normalize, Kernel, Measure, EPS_INV};
use crate::error::{Error, Result};

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Structural(format!("dimension mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// `½ Σ |μ(x) − ν(x)|`.
pub fn tv_distance(mu: &[f64], nu: &[f64]) -> Result<f64> {
    same_len(mu.len(), nu.len())?;
    Ok(0.5 * mu.iter().zip(nu).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    pub value: f64,
    /// Set when `ν(x) = 0 < μ(x)` somewhere; the value is then 1 by convention.
    pub flagged: bool,
}

/// `s(μ,ν) = max_x (1 − μ(x)/ν(x))`, clamped to `[0, 1]`.
pub fn separation_distance(mu: &[f64], nu: &[f64]) -> Result<Separation> {
    same_len(mu.len(), nu.len())?;
    let mut value: f64 = 0.0;
    for (&a, &b) in mu.iter().zip(nu) {
        if b > 0.0 {
            value = value.max(1.0 - a / b);
        } else if a > 0.0 {
            return Ok(Separation { value: 1.0, flagged: true });
        }
    }
    Ok(Separation { value: value.min(1.0), flagged: false })
}

/// `max_x |μ(x)/ν(x) − 1|`, infinite when `ν` vanishes where `μ` does not.
pub fn relative_sup(mu: &[f64], nu: &[f64]) -> Result<f64> {
    same_len(mu.len(), nu.len())?;
    let mut worst: f64 = 0.0;
    for (&a, &b) in mu.iter().zip(nu) {
        if b > 0.0 {
            worst = worst.max((a / b - 1.0).abs());
        } else if a != 0.0 {
            return Ok(f64::INFINITY);
        }
    }
    Ok(worst)
}

/// `(Σ π(x)|f(x)|^p)^{1/p}`; `p = ∞` gives `max |f|` regardless of `π`.
pub fn lp_norm(f: &[f64], p: f64, pi: &Measure) -> Result<f64> {
    same_len(f.len(), pi.len())?;
    if !(p >= 1.0) {
        return Err(Error::Domain(format!("exponent {p} below 1")));
    }
    if p.is_infinite() {
        return Ok(f.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    let w = pi.weights();
    let s: f64 = if p == 1.0 {
        f.iter().zip(w.iter()).map(|(v, w)| w * v.abs()).sum()
    } else if p == 2.0 {
        f.iter().zip(w.iter()).map(|(v, w)| w * v * v).sum()
    } else {
        f.iter().zip(w.iter()).map(|(v, w)| w * v.abs().powf(p)).sum()
    };
    Ok(if p == 2.0 { s.sqrt() } else { s.powf(1.0 / p) })
}

/// `Var_π(f) = Σ (f(x) − π̃(f))² π(x)`, which equals `π(V)·Var_π̃(f)`.
pub fn variance(f: &[f64], pi: &Measure) -> Result<f64> {
    same_len(f.len(), pi.len())?;
    let w = pi.weights();
    let mean = f.iter().zip(w.iter()).map(|(v, w)| v * w).sum::<f64>() / pi.mass();
    Ok(f.iter().zip(w.iter()).map(|(v, w)| (v - mean) * (v - mean) * w).sum())
}

/// `(1/2π(V)) ΣΣ (f(x) − f(y))² π(x) π(y)`.
pub fn variance_double_sum(f: &[f64], pi: &Measure) -> Result<f64> {
    same_len(f.len(), pi.len())?;
    let w = pi.weights();
    let mut s = 0.0;
    for (x, fx) in f.iter().enumerate() {
        for (y, fy) in f.iter().enumerate() {
            s += (fx - fy) * (fx - fy) * w[x] * w[y];
        }
    }
    Ok(s / (2.0 * pi.mass()))
}

/// `L(f|π̃) = Σ f² log(f²/π̃(f²)) π̃` with `0·log 0 = 0`.
pub fn entropy(f: &[f64], pi: &Measure) -> Result<f64> {
    same_len(f.len(), pi.len())?;
    if f.iter().all(|&v| v == 0.0) {
        return Err(Error::Domain("entropy of the zero function".into()));
    }
    Ok(entropy_unchecked(f, normalize(pi).weights().as_slice()))
}

/// Sums the nonnegative terms `f² log(f²/m) − f² + m` so that near-constant `f` keeps
/// full relative precision.
pub(crate) fn entropy_unchecked(f: &[f64], pt: &[f64]) -> f64 {
    let m: f64 = f.iter().zip(pt).map(|(v, w)| v * v * w).sum();
    f.iter()
        .zip(pt)
        .map(|(v, w)| {
            let d = (v * v - m) / m;
            let psi = if d.abs() < 1e-3 {
                d * d * (0.5 - d * (1.0 / 6.0 - d * (1.0 / 12.0 - d / 20.0)))
            } else if d == -1.0 {
                1.0
            } else {
                (1.0 + d) * d.ln_1p() - d
            };
            m * psi * w
        })
        .sum()
}

/// Both expressions of a Dirichlet form, which agree whenever `π` is invariant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirichletForm {
    /// `½ ΣΣ (f(x) − f(y))² Q(x,y) π(x)`
    pub double_sum: f64,
    /// `⟨(I − Q) f, f⟩_π`
    pub inner_product: f64,
}

impl DirichletForm {
    pub fn value(&self) -> f64 {
        self.double_sum
    }

    pub fn discrepancy(&self) -> f64 {
        (self.double_sum - self.inner_product).abs()
    }
}

pub fn dirichlet_form(f: &[f64], q: &Kernel, pi: &Measure) -> Result<DirichletForm> {
    same_len(f.len(), pi.len())?;
    same_len(q.size(), pi.len())?;
    let r = invariance_residual(q, pi).amax();
    if r > EPS_INV * pi.mass() {
        return Err(Error::Hypothesis(format!("measure is not invariant for the kernel (residual {r:e})")));
    }
    let w = pi.weights().as_slice();
    Ok(DirichletForm { double_sum: dirichlet_pairs(f, q.matrix(), w), inner_product: dirichlet_inner(f, q.matrix(), w) })
}

/// `½ ΣΣ (f(x) − f(y))² Q(x,y) w(x)` without checks.
pub(crate) fn dirichlet_pairs(f: &[f64], q: &DMatrix<f64>, w: &[f64]) -> f64 {
    let n = f.len();
    let mut s = 0.0;
    for y in 0..n {
        for x in 0..n {
            let d = f[x] - f[y];
            s += d * d * q[(x, y)] * w[x];
        }
    }
    0.5 * s
}

/// `⟨(I − Q) f, f⟩_π` without checks.
pub(crate) fn dirichlet_inner(f: &[f64], q: &DMatrix<f64>, w: &[f64]) -> f64 {
    let fv = DVector::from_column_slice(f);
    let qf = q * &fv;
    (0..f.len()).map(|x| w[x] * f[x] * (f[x] - qf[x])).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Exponent {
    One,
    Two,
    Inf,
}

impl Exponent {
    fn value(self) -> f64 {
        match self {
            Exponent::One => 1.0,
            Exponent::Two => 2.0,
            Exponent::Inf => f64::INFINITY,
        }
    }
}

/// `‖A‖_{ℓ^p(π_dom) → ℓ^q(π_cod)}` for `A` acting on functions, `(Af)(x) = Σ_y A(x,y) f(y)`.
///
/// Supported pairs are `(1,1)`, `(1,2)`, `(1,∞)`, `(2,2)`, `(2,∞)` and `(∞,∞)`.
pub fn operator_norm(a: &DMatrix<f64>, p: Exponent, q: Exponent, pi_dom: &Measure, pi_cod: &Measure) -> Result<f64> {
    same_len(a.ncols(), pi_dom.len())?;
    same_len(a.nrows(), pi_cod.len())?;
    use Exponent::*;
    let wd = pi_dom.weights();
    match (p, q) {
        (One, _) => {
            // Extreme points of the ℓ¹(π) unit ball are ±δ_y/π(y).
            let mut best: f64 = 0.0;
            for y in 0..a.ncols() {
                if wd[y] <= 0.0 {
                    if a.column(y).amax() > 0.0 {
                        return Ok(f64::INFINITY);
                    }
                    continue;
                }
                let col: Vec<f64> = a.column(y).iter().copied().collect();
                best = best.max(lp_norm(&col, q.value(), pi_cod)? / wd[y]);
            }
            Ok(best)
        }
        (Two, Inf) | (Inf, Inf) => {
            // Row functional f ↦ Σ_y A(x,y) f(y) = Σ_y (A(x,y)/π(y)) f(y) π(y) has dual norm
            // ‖A(x,·)/π‖_{ℓ^{p'}(π)}.
            let mut best: f64 = 0.0;
            for x in 0..a.nrows() {
                let v = if p == Inf {
                    a.row(x).iter().map(|v| v.abs()).sum::<f64>()
                } else {
                    let mut s = 0.0;
                    for y in 0..a.ncols() {
                        let e = a[(x, y)];
                        if e != 0.0 {
                            if wd[y] <= 0.0 {
                                return Ok(f64::INFINITY);
                            }
                            s += e * e / wd[y];
                        }
                    }
                    s.sqrt()
                };
                best = best.max(v);
            }
            Ok(best)
        }
        (Two, Two) => {
            if let Some(y) = wd.iter().position(|&w| w <= 0.0) {
                return Err(Error::Domain(format!("domain measure vanishes at state {y}")));
            }
            let wc = pi_cod.weights();
            let b = DMatrix::from_fn(a.nrows(), a.ncols(), |x, y| wc[x].sqrt() * a[(x, y)] / wd[y].sqrt());
            Ok(b.singular_values().max())
        }
        _ => Err(Error::Unsupported(format!("operator norm for exponents ({p:?}, {q:?})"))),
    }
}
