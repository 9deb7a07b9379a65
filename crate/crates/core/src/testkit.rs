//! Reference computations used to check the numerical modules: brute-force
//! policy enumeration, power iteration, fixed-step RK4, closed-form
//! two-policy flows, difference Jacobians, bisection and path averages.
//!
//! Nothing here calls into the modules it is meant to check.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub oracle: String,
    pub instance: String,
    pub deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleReport {
    pub fn new(oracle: &str, instance: impl Into<String>, deviation: f64, tolerance: f64) -> Self {
        OracleReport {
            oracle: oracle.to_string(),
            instance: instance.into(),
            deviation,
            tolerance,
            pass: deviation <= tolerance,
        }
    }
}

impl std::fmt::Display for OracleReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} [{}]: deviation {:.3e} vs tolerance {:.1e} -> {}",
            self.oracle,
            self.instance,
            self.deviation,
            self.tolerance,
            if self.pass { "pass" } else { "FAIL" }
        )
    }
}

/// Every choice of one entry per state, lexicographic with the last state
/// varying fastest.
pub fn cartesian_policies(available: &[Vec<usize>]) -> Vec<Vec<usize>> {
    if available.is_empty() {
        return vec![vec![]];
    }
    available.iter().map(|a| a.iter().cloned()).multi_cartesian_product().collect()
}

/// Stationary row distribution of a row-stochastic matrix by power iteration
/// on the lazy chain `(I + P) / 2`.
pub fn power_iteration_stationary(p: &DMatrix<f64>, tol: f64, max_iter: usize) -> DVector<f64> {
    let n = p.nrows();
    let lazy = (DMatrix::identity(n, n) + p) * 0.5;
    let lazy_t = lazy.transpose();
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..max_iter {
        let next = &lazy_t * &v;
        let change = (&next - &v).amax();
        v = next;
        if change < tol {
            break;
        }
    }
    let s = v.sum();
    v / s
}

/// Classical RK4 with the largest step `<= h` that divides `t_end`; returns
/// the state at the step nearest each requested time.
pub fn reference_integrate<F>(mut f: F, y0: &[f64], t_end: f64, h: f64, samples: &[f64]) -> Vec<Vec<f64>>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let steps = ((t_end / h).ceil() as usize).max(1);
    let dt = t_end / steps as f64;
    let mut marks: Vec<(usize, usize)> = samples
        .iter()
        .enumerate()
        .map(|(i, &t)| (((t / dt).round() as usize).min(steps), i))
        .collect();
    marks.sort();
    let mut out = vec![Vec::new(); samples.len()];
    let mut next = 0;
    let mut y = y0.to_vec();
    let n = y.len();
    let axpy = |y: &[f64], k: &[f64], a: f64| -> Vec<f64> { (0..n).map(|i| y[i] + a * k[i]).collect() };
    for step in 0..=steps {
        while next < marks.len() && marks[next].0 == step {
            out[marks[next].1] = y.clone();
            next += 1;
        }
        if step == steps {
            break;
        }
        let k1 = f(&y);
        let k2 = f(&axpy(&y, &k1, dt / 2.0));
        let k3 = f(&axpy(&y, &k2, dt / 2.0));
        let k4 = f(&axpy(&y, &k3, dt));
        for i in 0..n {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    out
}

/// Mass on the worse of two policies under the pairwise-comparison flow
/// with constant payoff gap `gap > 0` and revision rate `rate`:
/// `x2' = -rate * gap * x2`.
pub fn smith_two_policy(x2_0: f64, gap: f64, rate: f64, t: f64) -> f64 {
    x2_0 * (-rate * gap * t).exp()
}

/// Mass on the worse policy under imitation with constant gap:
/// `x2' = -(rate * gap / m) x1 x2` (logistic).
pub fn imitation_two_policy(x2_0: f64, mass: f64, gap: f64, rate: f64, t: f64) -> f64 {
    let k = rate * gap;
    let x1_0 = mass - x2_0;
    mass * x2_0 / (x2_0 + x1_0 * (k * t).exp())
}

/// Mass on the worse policy under the excess-payoff flow with constant gap:
/// only the better policy has positive excess `x2 gap / m`, so
/// `x2' = -(rate * gap / m) x2^2`.
pub fn bnn_two_policy(x2_0: f64, mass: f64, gap: f64, rate: f64, t: f64) -> f64 {
    x2_0 / (1.0 + rate * gap * x2_0 * t / mass)
}

/// Central differences with one Richardson step.
pub fn fd_jacobian<F>(mut f: F, x: &[f64], h: f64) -> DMatrix<f64>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let n = x.len();
    let m = f(x).len();
    let mut jac = DMatrix::zeros(m, n);
    let mut central = |j: usize, step: f64| -> Vec<f64> {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += step;
        xm[j] -= step;
        let fp = f(&xp);
        let fm = f(&xm);
        (0..m).map(|i| (fp[i] - fm[i]) / (2.0 * step)).collect()
    };
    for j in 0..n {
        let d1 = central(j, h);
        let d2 = central(j, h / 2.0);
        for i in 0..m {
            jac[(i, j)] = (4.0 * d2[i] - d1[i]) / 3.0;
        }
    }
    jac
}

/// Root of a sign-changing scalar function on `[lo, hi]`.
pub fn bisection<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    assert!(flo * f(hi) <= 0.0, "bisection needs a sign change");
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if (fm <= 0.0) == (flo <= 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Fraction of `steps` transitions of a discrete chain spent in each state.
pub fn ergodic_occupancy(p: &DMatrix<f64>, start: usize, steps: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let n = p.nrows();
    let mut visits = DVector::zeros(n);
    let mut s = start;
    for _ in 0..steps {
        visits[s] += 1.0;
        let r: f64 = rng.random();
        let mut acc = 0.0;
        let mut next = n - 1;
        for k in 0..n {
            acc += p[(s, k)];
            if r < acc {
                next = k;
                break;
            }
        }
        s = next;
    }
    visits / steps as f64
}
