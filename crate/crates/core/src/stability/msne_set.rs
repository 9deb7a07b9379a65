//! Affine equilibrium sets `{x in D_x : x = x* + W theta}` with `W` a basis
//! of the kernel of the reward-shaping map restricted to optimal policies.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{Game, PiMap};
use crate::linalg::null_space;

pub const DEFAULT_ARGMAX_TOL: f64 = 1e-7;
/// Relative singular-value threshold for kernels.
pub const KERNEL_REL_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct MsneSet {
    pub anchor: DVector<f64>,
    /// Optimal policies per class (payoff within `argmax_tol` of the maximum).
    pub optimal: Vec<Vec<usize>>,
    /// Orthonormal columns spanning the admissible directions.
    pub basis: DMatrix<f64>,
    pub dim: usize,
    pub argmax_tol: f64,
    /// `max |Pi W|`.
    pub pi_residual: f64,
    pub pi: DMatrix<f64>,
}

/// Indices (in flattened x) of the optimal policies.
pub fn optimal_coordinates(game: &Game, optimal: &[Vec<usize>]) -> Vec<usize> {
    game.classes
        .iter()
        .zip(optimal)
        .flat_map(|(cd, opt)| opt.iter().map(move |&u| cd.x_offset + u))
        .collect()
}

pub fn build_msne_set(game: &Game, x_star: &DVector<f64>, pi: &PiMap, argmax_tol: f64) -> Result<MsneSet> {
    game.check_policy_masses(x_star, 1e-9)?;
    let payoff = game.steady_state_payoff(x_star)?;
    let mut optimal = Vec::new();
    for cd in &game.classes {
        let pay = payoff.rows(cd.x_offset, cd.n);
        let best = pay.max();
        let opt: Vec<usize> = (0..cd.n).filter(|&u| pay[u] >= best - argmax_tol).collect();
        for u in 0..cd.n {
            if x_star[cd.x_offset + u] > 1e-7 && !opt.contains(&u) {
                return Err(Error::Precondition(format!(
                    "anchor is not an equilibrium: policy {u} carries mass {:.3e} with payoff gap {:.3e}",
                    x_star[cd.x_offset + u],
                    best - pay[u]
                )));
            }
        }
        optimal.push(opt);
    }
    let coords = optimal_coordinates(game, &optimal);
    // kernel of [Pi; class sums] restricted to optimal coordinates
    let rows = pi.matrix.nrows() + game.classes.len();
    let mut stacked = DMatrix::zeros(rows, coords.len());
    for (j, &i) in coords.iter().enumerate() {
        stacked
            .view_mut((0, j), (pi.matrix.nrows(), 1))
            .copy_from(&pi.matrix.column(i));
        let class = game
            .classes
            .iter()
            .position(|cd| i >= cd.x_offset && i < cd.x_offset + cd.n)
            .unwrap();
        stacked[(pi.matrix.nrows() + class, j)] = 1.0;
    }
    let kernel = if coords.is_empty() {
        DMatrix::zeros(0, 0)
    } else {
        null_space(&stacked, KERNEL_REL_TOL)
    };
    let dim = kernel.ncols();
    let mut basis = DMatrix::zeros(game.x_len, dim);
    for (j, &i) in coords.iter().enumerate() {
        for k in 0..dim {
            basis[(i, k)] = kernel[(j, k)];
        }
    }
    let pi_residual = if dim == 0 {
        0.0
    } else {
        (&pi.matrix * &basis).amax()
    };
    Ok(MsneSet {
        anchor: x_star.clone(),
        optimal,
        basis,
        dim,
        argmax_tol,
        pi_residual,
        pi: pi.matrix.clone(),
    })
}

impl MsneSet {
    /// Range `[lo, hi]` of `t` keeping `x + t d` nonnegative.
    fn feasible_range(x: &DVector<f64>, d: &DVector<f64>) -> (f64, f64) {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..x.len() {
            if d[i] > 1e-15 {
                lo = lo.max(-x[i].max(0.0) / d[i]);
            } else if d[i] < -1e-15 {
                hi = hi.min(x[i].max(0.0) / -d[i]);
            }
        }
        (lo, hi)
    }

    /// Random members by a few hit-and-run moves from the anchor.
    pub fn sample_members(&self, count: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
        let mut out = Vec::with_capacity(count);
        let mut x = self.anchor.map(|v| v.max(0.0));
        for _ in 0..count {
            if self.dim > 0 {
                for _ in 0..5 {
                    let theta = DVector::from_fn(self.dim, |_, _| rng.random_range(-1.0..1.0));
                    let d = &self.basis * theta;
                    let (lo, hi) = Self::feasible_range(&x, &d);
                    if lo.is_finite() && hi.is_finite() && hi > lo {
                        let t = rng.random_range(lo..=hi) * 0.999;
                        x += d * t;
                        x.apply(|v| *v = v.max(0.0));
                    }
                }
            }
            out.push(x.clone());
        }
        out
    }

    /// Approximate Euclidean projection onto the set (Dykstra's alternating
    /// projections between the affine hull and the nonnegative orthant).
    pub fn project(&self, y: &DVector<f64>) -> DVector<f64> {
        let affine = |v: &DVector<f64>| -> DVector<f64> {
            if self.dim == 0 {
                return self.anchor.clone();
            }
            let d = v - &self.anchor;
            &self.anchor + &self.basis * (self.basis.transpose() * d)
        };
        let mut x = y.clone();
        let mut p = DVector::zeros(y.len());
        let mut q = DVector::zeros(y.len());
        for _ in 0..2000 {
            let a = affine(&(&x + &p));
            p = &x + &p - &a;
            let b = (&a + &q).map(|v| v.max(0.0));
            q = &a + &q - &b;
            let change = (&b - &x).amax();
            x = b;
            if change < 1e-15 {
                break;
            }
        }
        let mut out = affine(&x);
        out.apply(|v| *v = v.max(0.0));
        out
    }

    /// Upper bound on the Euclidean distance from `mu` to the equilibrium
    /// population states `{ embed(x) : x in set }`.
    pub fn distance_upper_bound(&self, game: &Game, mu: &DVector<f64>) -> f64 {
        let x = game.policy_masses(mu);
        let proj = self.project(&x);
        (mu - game.embed_stationary(&proj)).norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{ClassSpec, GameSpec, PiVariant};
    use crate::protocols::Protocol;
    use crate::reward::RewardModel;
    use rand::SeedableRng;

    #[test]
    fn cloned_policy_yields_one_kernel_direction() {
        // actions have identical transitions and rewards, so policies (x,y)
        // and (y,x) induce the same action marginal
        let class = ClassSpec {
            name: "c".into(),
            states: vec!["a".into(), "b".into()],
            actions: vec!["x".into(), "y".into()],
            available: vec![vec![0, 1], vec![0, 1]],
            kernel: vec![vec![vec![0.5, 0.5]; 2]; 2],
            reward: RewardModel::CongestionAffine {
                base: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
                slope: vec![1.0, 1.0],
            },
            mass: 1.0,
            rate_state: 1.0,
            rate_revision: 1.0,
            protocol: Protocol::Smith,
        };
        let game = Game::new(GameSpec { classes: vec![class] }).unwrap();
        let pi = game.pi_map(PiVariant::Action, None).unwrap();
        assert!((pi.matrix.column(1) - pi.matrix.column(2)).amax() < 1e-15);
        let x = DVector::from_column_slice(&[0.0, 0.5, 0.5, 0.0]);
        let set = build_msne_set(&game, &x, &pi, DEFAULT_ARGMAX_TOL).unwrap();
        assert!(set.dim >= 1);
        assert!(set.pi_residual < 1e-12);
        let diff = DVector::from_column_slice(&[0.0, 1.0, -1.0, 0.0]) / 2f64.sqrt();
        let coeff = set.basis.transpose() * &diff;
        assert!((coeff.norm() - 1.0).abs() < 1e-10, "clone difference in kernel");
        let members = set.sample_members(20, &mut ChaCha8Rng::seed_from_u64(1));
        let f0 = game.steady_state_payoff(&x).unwrap();
        for m in members {
            assert!(m.min() >= 0.0);
            assert!((game.steady_state_payoff(&m).unwrap() - &f0).amax() < 1e-12);
        }
    }

    #[test]
    fn non_equilibrium_anchor_is_rejected() {
        let class = ClassSpec {
            name: "c".into(),
            states: vec!["s".into()],
            actions: vec!["a".into(), "b".into()],
            available: vec![vec![0, 1]],
            kernel: vec![vec![vec![1.0], vec![1.0]]],
            reward: RewardModel::Table { values: vec![vec![0.0, 1.0]] },
            mass: 1.0,
            rate_state: 1.0,
            rate_revision: 1.0,
            protocol: Protocol::Smith,
        };
        let game = Game::new(GameSpec { classes: vec![class] }).unwrap();
        let pi = game.pi_map(PiVariant::StateAction, None).unwrap();
        let x = DVector::from_column_slice(&[1.0, 0.0]);
        assert!(matches!(
            build_msne_set(&game, &x, &pi, DEFAULT_ARGMAX_TOL),
            Err(Error::Precondition(_))
        ));
        let strict = DVector::from_column_slice(&[0.0, 1.0]);
        let set = build_msne_set(&game, &strict, &pi, DEFAULT_ARGMAX_TOL).unwrap();
        assert_eq!(set.dim, 0);
    }
}
