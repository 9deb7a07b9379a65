//! Sampling tests for the potential-game and stable-game hypotheses on the
//! steady-state game.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::jacobian::{payoff_jacobian, JacobianMode};
use crate::equilibrium::dirichlet_masses;
use crate::error::Result;
use crate::game::Game;
use crate::linalg::{helmert, symmetric_eigen_sorted};

pub const DEFAULT_HYPOTHESIS_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialVerdict {
    PotentialConcave,
    PotentialNonconcave,
    NotPotential,
}

impl std::fmt::Display for PotentialVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PotentialVerdict::PotentialConcave => "potential_concave",
            PotentialVerdict::PotentialNonconcave => "potential_nonconcave",
            PotentialVerdict::NotPotential => "not_potential",
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PotentialReport {
    pub verdict: PotentialVerdict,
    /// Largest `|DF - DF^T|` entry over the samples.
    pub max_asymmetry: f64,
    /// Largest eigenvalue of `DF + DF^T` restricted to the tangent space.
    pub max_tangent_eigenvalue: f64,
    pub samples: usize,
    pub tol: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StableReport {
    pub stable: bool,
    /// Largest `(y - x).(F(y) - F(x))` over sampled pairs.
    pub max_pair_product: f64,
    /// Largest `w^T DF w` over sampled unit tangent directions.
    pub max_quadratic: f64,
    pub samples: usize,
    pub tol: f64,
}

/// Orthonormal basis of the tangent space of the policy-mass domain
/// (zero-sum directions within each class).
pub fn tangent_basis(game: &Game) -> DMatrix<f64> {
    let cols: usize = game.classes.iter().map(|cd| cd.n - 1).sum();
    let mut phi = DMatrix::zeros(game.x_len, cols);
    let mut col = 0;
    for cd in &game.classes {
        let h = helmert(cd.n);
        phi.view_mut((cd.x_offset, col), (cd.n, cd.n - 1)).copy_from(&h);
        col += cd.n - 1;
    }
    phi
}

/// Full-potential and concavity test at `n_samples` random points.
pub fn check_potential_game(
    game: &Game,
    n_samples: usize,
    tol: f64,
    seed: u64,
    mode: JacobianMode,
) -> Result<PotentialReport> {
    let phi = tangent_basis(game);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_asymmetry: f64 = 0.0;
    let mut max_eig = f64::NEG_INFINITY;
    for _ in 0..n_samples {
        let x = dirichlet_masses(game, &mut rng);
        let d = payoff_jacobian(game, &x, mode)?.matrix;
        max_asymmetry = max_asymmetry.max((&d - d.transpose()).amax());
        if phi.ncols() > 0 {
            let s = phi.transpose() * (&d + d.transpose()) * &phi;
            let (eig, _) = symmetric_eigen_sorted(&s);
            max_eig = max_eig.max(eig.max());
        } else {
            max_eig = max_eig.max(0.0);
        }
    }
    let verdict = if max_asymmetry > tol {
        PotentialVerdict::NotPotential
    } else if max_eig > tol {
        PotentialVerdict::PotentialNonconcave
    } else {
        PotentialVerdict::PotentialConcave
    };
    Ok(PotentialReport {
        verdict,
        max_asymmetry,
        max_tangent_eigenvalue: max_eig,
        samples: n_samples,
        tol,
    })
}

/// Monotonicity test on sampled pairs plus the quadratic-form test on
/// sampled tangent directions.
pub fn check_stable_game(
    game: &Game,
    n_samples: usize,
    tol: f64,
    seed: u64,
    mode: JacobianMode,
) -> Result<StableReport> {
    let phi = tangent_basis(game);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_pair = f64::NEG_INFINITY;
    let mut max_quad = f64::NEG_INFINITY;
    for _ in 0..n_samples {
        let x = dirichlet_masses(game, &mut rng);
        let y = dirichlet_masses(game, &mut rng);
        let fx = game.steady_state_payoff(&x)?;
        let fy = game.steady_state_payoff(&y)?;
        max_pair = max_pair.max((&y - &x).dot(&(fy - fx)));
        if phi.ncols() > 0 {
            let theta = DVector::from_fn(phi.ncols(), |_, _| StandardNormal.sample(&mut rng));
            let w = &phi * theta.normalize();
            let d = payoff_jacobian(game, &x, mode)?.matrix;
            max_quad = max_quad.max(w.dot(&(d * &w)));
        } else {
            max_quad = max_quad.max(0.0);
        }
    }
    Ok(StableReport {
        stable: max_pair <= tol && max_quad <= tol,
        max_pair_product: max_pair,
        max_quadratic: max_quad,
        samples: n_samples,
        tol,
    })
}
