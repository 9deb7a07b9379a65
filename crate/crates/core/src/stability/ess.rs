//! Regular evolutionarily stable set certificates for affine equilibrium sets.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::jacobian::{payoff_jacobian, JacobianMode};
use super::lp;
use super::msne_set::{optimal_coordinates, MsneSet};
use crate::error::Result;
use crate::game::Game;
use crate::linalg::{helmert, orthogonal_complement, symmetric_eigen_sorted};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EssVerdict {
    RegularEss,
    NotEss,
    Inconclusive,
}

impl std::fmt::Display for EssVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EssVerdict::RegularEss => "regular_ess",
            EssVerdict::NotEss => "not_ess",
            EssVerdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EssOptions {
    pub jacobian: JacobianMode,
    /// Eigenvalues of `G + G^T` above this are positive, within it are null.
    pub tol_eig: f64,
    /// Null directions must satisfy `|Pi Phi v| <= null_residual`.
    pub null_residual: f64,
    /// Smallest optimum of the support LP that counts as interior.
    pub witness_tol: f64,
    /// Finite-difference consistency gap above which the Jacobian is
    /// considered unreliable.
    pub max_fd_gap: f64,
}

impl Default for EssOptions {
    fn default() -> Self {
        EssOptions {
            jacobian: JacobianMode::Auto,
            tol_eig: 1e-8,
            null_residual: 1e-7,
            witness_tol: 1e-10,
            max_fd_gap: 1e-3,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NullDirection {
    pub eigenvalue: f64,
    /// Coordinates in the `Phi` basis.
    pub vector: DVector<f64>,
    pub pi_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EssCertificate {
    pub verdict: EssVerdict,
    pub reason: String,
    pub eval_point: DVector<f64>,
    pub optimal: Vec<Vec<usize>>,
    pub argmax_tol: f64,
    pub set_dim: usize,
    /// Orthonormal basis of the tangent space restricted to optimal policies.
    pub phi: DMatrix<f64>,
    pub phi_perp: DMatrix<f64>,
    pub jacobian: DMatrix<f64>,
    pub jacobian_analytic: bool,
    pub jacobian_consistency: f64,
    pub g: DMatrix<f64>,
    /// Eigenvalues of `G + G^T`, ascending.
    pub spectrum: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
    pub null_directions: Vec<NullDirection>,
    pub max_eigenvalue: f64,
    pub witness: Option<DVector<f64>>,
    /// Optimal value of the support LP (smallest optimal-policy mass).
    pub witness_margin: f64,
    pub options: EssOptions,
}

/// Per-class Helmert contrasts over the optimal coordinates.
fn optimal_tangent_basis(game: &Game, optimal: &[Vec<usize>]) -> DMatrix<f64> {
    let cols: usize = optimal.iter().map(|o| o.len().saturating_sub(1)).sum();
    let mut phi = DMatrix::zeros(game.x_len, cols);
    let mut col = 0;
    for (cd, opt) in game.classes.iter().zip(optimal) {
        if opt.len() < 2 {
            continue;
        }
        let h = helmert(opt.len());
        for k in 0..h.ncols() {
            for (i, &u) in opt.iter().enumerate() {
                phi[(cd.x_offset + u, col)] = h[(i, k)];
            }
            col += 1;
        }
    }
    phi
}

/// Maximizes the smallest optimal-policy mass over members of the set.
/// Returns (margin, maximizer).
fn support_witness(game: &Game, set: &MsneSet) -> Result<(f64, DVector<f64>)> {
    let anchor = set.anchor.map(|v| v.max(0.0));
    let coords = optimal_coordinates(game, &set.optimal);
    if coords.is_empty() {
        return Ok((0.0, anchor));
    }
    let dim = set.dim;
    let cap = game.masses().into_iter().fold(0.0, f64::max);
    // variables: t, theta+, theta-; rows: t - W_u theta <= x*_u, t <= cap
    let nv = 1 + 2 * dim;
    let mut a = DMatrix::zeros(coords.len() + 1, nv);
    let mut b = Vec::with_capacity(coords.len() + 1);
    for (r, &i) in coords.iter().enumerate() {
        a[(r, 0)] = 1.0;
        for k in 0..dim {
            a[(r, 1 + k)] = -set.basis[(i, k)];
            a[(r, 1 + dim + k)] = set.basis[(i, k)];
        }
        b.push(anchor[i]);
    }
    a[(coords.len(), 0)] = 1.0;
    b.push(cap);
    let mut c = vec![0.0; nv];
    c[0] = 1.0;
    let (value, v) = lp::maximize(&c, &a, &b)?;
    let theta = DVector::from_fn(dim, |k, _| v[1 + k] - v[1 + dim + k]);
    let mut x = &anchor + &set.basis * theta;
    x.apply(|e| *e = e.max(0.0));
    Ok((value, x))
}

/// Certifies the set at its anchor.
pub fn check_regular_ess(game: &Game, set: &MsneSet, opts: &EssOptions) -> Result<EssCertificate> {
    check_regular_ess_at(game, set, &set.anchor, opts)
}

/// Certifies the set with the Jacobian evaluated at the member `x`.
pub fn check_regular_ess_at(
    game: &Game,
    set: &MsneSet,
    x: &DVector<f64>,
    opts: &EssOptions,
) -> Result<EssCertificate> {
    let phi = optimal_tangent_basis(game, &set.optimal);
    let phi_perp = orthogonal_complement(&phi, game.x_len);
    let (witness_margin, witness_point) = support_witness(game, set)?;
    let witness = (witness_margin > opts.witness_tol).then_some(witness_point);
    let jac = payoff_jacobian(game, x, opts.jacobian)?;
    let g = phi.transpose() * &jac.matrix * &phi;
    let sym = &g + g.transpose();
    let k = phi.ncols();
    let (spectrum, eigenvectors) = if k == 0 {
        (DVector::zeros(0), DMatrix::zeros(0, 0))
    } else {
        symmetric_eigen_sorted(&sym)
    };
    let max_eigenvalue = spectrum.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut null_directions = Vec::new();
    for i in 0..k {
        if spectrum[i].abs() <= opts.tol_eig {
            let v = eigenvectors.column(i).into_owned();
            let pi_residual = (&set.pi * (&phi * &v)).norm();
            null_directions.push(NullDirection {
                eigenvalue: spectrum[i],
                vector: v,
                pi_residual,
            });
        }
    }
    let (verdict, reason) = if !jac.finite {
        (EssVerdict::Inconclusive, "payoff Jacobian is not finite".to_string())
    } else if !jac.analytic && jac.consistency > opts.max_fd_gap {
        (
            EssVerdict::Inconclusive,
            format!(
                "finite differences disagree across step sizes (gap {:.3e}); payoff may be non-smooth here",
                jac.consistency
            ),
        )
    } else if k > 0 && max_eigenvalue > opts.tol_eig {
        (
            EssVerdict::NotEss,
            format!("G + G^T has positive eigenvalue {max_eigenvalue:.6e}"),
        )
    } else if witness.is_none() {
        (
            EssVerdict::NotEss,
            format!("no member has positive mass on every optimal policy (margin {witness_margin:.3e})"),
        )
    } else if let Some(bad) = null_directions.iter().find(|d| d.pi_residual > opts.null_residual) {
        (
            EssVerdict::Inconclusive,
            format!(
                "null direction of G + G^T leaves the kernel of Pi (residual {:.3e})",
                bad.pi_residual
            ),
        )
    } else {
        (
            EssVerdict::RegularEss,
            format!(
                "spectrum nonpositive, {} null direction(s) inside ker Pi, interior witness margin {witness_margin:.3e}",
                null_directions.len()
            ),
        )
    };
    Ok(EssCertificate {
        verdict,
        reason,
        eval_point: x.clone(),
        optimal: set.optimal.clone(),
        argmax_tol: set.argmax_tol,
        set_dim: set.dim,
        phi,
        phi_perp,
        jacobian: jac.matrix,
        jacobian_analytic: jac.analytic,
        jacobian_consistency: jac.consistency,
        g,
        spectrum,
        eigenvectors,
        null_directions,
        max_eigenvalue: if k == 0 { 0.0 } else { max_eigenvalue },
        witness,
        witness_margin,
        options: *opts,
    })
}
