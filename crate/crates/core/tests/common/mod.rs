#![allow(dead_code)]

use std::sync::Arc;

use merging::environment::Tolerances;
use merging::networks::{cycle_edges, gen_stick, kernel_from_conductances, lazify, ConductanceMatrix, ConductanceSchedule};
use merging::{Environment, Kernel, Measure};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random connected conductances on `n` states (path backbone plus random chords),
/// non-decreasing in `t`, lazified with a random laziness in `[0.3, 1]`. With
/// `circulate`, a `π_t`-preserving circulation around a random cycle makes each kernel
/// non-reversible.
pub fn random_env(seed: u64, n: usize, horizon: usize, circulate: bool) -> Environment {
    let mut r = rng(seed);
    let mut c = DMatrix::zeros(n, n);
    for x in 0..n - 1 {
        let v = r.random_range(0.5..2.0);
        c[(x, x + 1)] = v;
        c[(x + 1, x)] = v;
    }
    for _ in 0..n {
        let (x, y) = (r.random_range(0..n), r.random_range(0..n));
        let v = r.random_range(0.0..1.5);
        c[(x, y)] += v;
        if x != y {
            c[(y, x)] += v;
        }
    }
    let laziness = r.random_range(0.3..1.0);
    let mut kernels = Vec::with_capacity(horizon);
    let mut measures = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        if t > 1 && r.random_bool(0.3) {
            kernels.push(Arc::clone(&kernels[t - 2]));
            measures.push(Arc::clone(&measures[t - 2]));
            continue;
        }
        if t > 1 {
            let (x, y) = (r.random_range(0..n), r.random_range(0..n));
            let v = r.random_range(0.0..1.0);
            c[(x, y)] += v;
            if x != y {
                c[(y, x)] += v;
            }
        }
        let (p, pi) = kernel_from_conductances(&ConductanceMatrix::new(c.clone()).unwrap());
        let mut k = lazify(&p, laziness).unwrap().into_matrix();
        if circulate && n >= 3 {
            let mut order: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                order.swap(i, r.random_range(0..=i));
            }
            let eps = (0..n).map(|x| k[(x, x)] * pi.get(x)).fold(f64::INFINITY, f64::min) * r.random_range(0.0..0.9);
            for i in 0..n {
                let (x, y) = (order[i], order[(i + 1) % n]);
                k[(x, y)] += eps / pi.get(x);
                k[(x, x)] -= eps / pi.get(x);
            }
        }
        kernels.push(Arc::new(Kernel::new(k).unwrap()));
        measures.push(Arc::new(pi));
    }
    Environment::validated(kernels, measures, &Tolerances::default()).unwrap()
}

/// Lazy stick on `Z/nZ` with random non-decreasing conductances in `[lo, hi]`.
pub fn random_stick(seed: u64, n: usize, horizon: usize, lo: f64, hi: f64) -> (Environment, ConductanceSchedule) {
    let mut r = rng(seed);
    let changes = r.random_range(1..6);
    let s = ConductanceSchedule::random_monotone(n, horizon, &cycle_edges(n), lo, hi, changes, 10, &mut r).unwrap();
    (gen_stick(n, &s).unwrap(), s)
}

/// Random reversible kernel with its invariant measure, from random conductances.
pub fn random_reversible(seed: u64, n: usize) -> (Kernel, Measure) {
    let env = random_env(seed, n, 1, false);
    (env.kernel(1).clone(), env.measure(1).clone())
}

pub fn random_vector(r: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| r.random_range(-1.0..1.0))
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}
