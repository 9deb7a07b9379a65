//! Rest points of the reduced dynamics and their equilibrium verdicts.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{integrate_reduced_with, FieldWorkspace};
use crate::error::Result;
use crate::game::Game;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Tolerances {
    pub residual: f64,
    pub support: f64,
    pub payoff: f64,
    pub gap: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            residual: 1e-9,
            support: 1e-7,
            payoff: 1e-7,
            gap: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EquilibriumReport {
    pub x: Vec<f64>,
    pub mu: Vec<f64>,
    pub residual_reduced: f64,
    pub residual_full: f64,
    pub payoff: Vec<f64>,
    /// Supported policies per class (mass above the support tolerance).
    pub supports: Vec<Vec<usize>>,
    /// Some mass lies in `[support/10, support]`.
    pub marginal_support: bool,
    /// The search reached the residual target before `t_max`.
    pub converged: bool,
    pub is_rest_point: bool,
    pub is_msne: bool,
    pub is_strict: bool,
    pub tolerances: Tolerances,
}

impl EquilibriumReport {
    pub fn x_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x)
    }

    pub fn mu_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.mu)
    }
}

/// Builds a report for candidate policy masses `x`.
pub fn evaluate_candidate(game: &Game, x: &DVector<f64>, converged: bool, tol: Tolerances) -> Result<EquilibriumReport> {
    let mu = game.embed_stationary(x);
    let residual_reduced = game.reduced_field(x)?.amax();
    let residual_full = game.field(&mu)?.amax();
    let payoff = game.steady_state_payoff(x)?;
    let mut supports = Vec::new();
    let mut marginal = false;
    for cd in &game.classes {
        let mut sup = Vec::new();
        for u in 0..cd.n {
            let v = x[cd.x_offset + u];
            if v > tol.support {
                sup.push(u);
            } else if v >= tol.support / 10.0 {
                marginal = true;
            }
        }
        supports.push(sup);
    }
    let mut report = EquilibriumReport {
        x: x.iter().cloned().collect(),
        mu: mu.iter().cloned().collect(),
        residual_reduced,
        residual_full,
        payoff: payoff.iter().cloned().collect(),
        supports,
        marginal_support: marginal,
        converged,
        is_rest_point: residual_reduced <= tol.residual && residual_full <= tol.residual,
        is_msne: false,
        is_strict: false,
        tolerances: tol,
    };
    report.is_msne = verify_msne(game, &report, tol.payoff);
    report.is_strict = check_strict(game, &report, tol.gap);
    Ok(report)
}

/// Every supported policy earns within `tol_payoff` of its class maximum.
/// The state condition holds by construction since `mu` is the stationary
/// embedding of `x`.
pub fn verify_msne(game: &Game, report: &EquilibriumReport, tol_payoff: f64) -> bool {
    game.classes.iter().zip(&report.supports).all(|(cd, sup)| {
        let pay = &report.payoff[cd.x_offset..cd.x_offset + cd.n];
        let best = pay.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        sup.iter().all(|&u| pay[u] >= best - tol_payoff)
    })
}

/// Single supported policy per class, beating every alternative by more than `gap_tol`.
pub fn check_strict(game: &Game, report: &EquilibriumReport, gap_tol: f64) -> bool {
    if !verify_msne(game, report, report.tolerances.payoff) {
        return false;
    }
    game.classes.iter().zip(&report.supports).all(|(cd, sup)| {
        if sup.len() != 1 {
            return false;
        }
        let pay = &report.payoff[cd.x_offset..cd.x_offset + cd.n];
        let star = sup[0];
        (0..cd.n)
            .filter(|&v| v != star)
            .all(|v| pay[star] - pay[v] > gap_tol)
    })
}

#[derive(Clone, Debug)]
pub struct SearchOptions {
    pub n_starts: usize,
    pub t_max: f64,
    /// Stop integrating once the reduced field is this small.
    pub stop_residual: f64,
    pub integration_tol: f64,
    pub seed: u64,
    pub dedupe: f64,
    pub tolerances: Tolerances,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            n_starts: 8,
            t_max: 200.0,
            stop_residual: 1e-9,
            integration_tol: 1e-10,
            seed: 0,
            dedupe: 1e-6,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StartDiagnostic {
    pub start: usize,
    pub converged: bool,
    pub t_final: f64,
    pub residual_before_polish: f64,
    pub residual_after_polish: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RestPointSearch {
    pub reports: Vec<EquilibriumReport>,
    pub diagnostics: Vec<StartDiagnostic>,
}

/// Uniform draw from the product of simplices scaled by class masses.
pub fn dirichlet_masses(game: &Game, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let mut x = DVector::zeros(game.x_len);
    for (cd, class) in game.classes.iter().zip(&game.spec.classes) {
        let draws: Vec<f64> = (0..cd.n).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        for u in 0..cd.n {
            x[cd.x_offset + u] = draws[u] / total * class.mass;
        }
    }
    x
}

/// Multi-start search: integrate the reduced model from random starts until
/// the field is small or `t_max`, polish on the support face, deduplicate.
pub fn find_rest_points(game: &Game, opts: &SearchOptions) -> Result<RestPointSearch> {
    let outcomes: Vec<Result<(DVector<f64>, StartDiagnostic)>> = (0..opts.n_starts)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(i as u64 + 1);
            let x0 = dirichlet_masses(game, &mut rng);
            let mut ws = FieldWorkspace::new(game);
            let mut buf = vec![0.0; game.x_len];
            let traj = integrate_reduced_with(game, &x0, opts.t_max, &[], opts.integration_tol, |_, y| {
                game.reduced_field_into(y, &mut ws, &mut buf).is_ok()
                    && buf.iter().all(|v| v.abs() <= opts.stop_residual)
            })?;
            let before = game.reduced_field(&traj.final_state)?.amax();
            let polished = polish(game, &traj.final_state)?;
            let after = game.reduced_field(&polished)?.amax();
            Ok((
                polished,
                StartDiagnostic {
                    start: i,
                    converged: traj.stopped || after <= opts.stop_residual,
                    t_final: traj.t_final,
                    residual_before_polish: before,
                    residual_after_polish: after,
                },
            ))
        })
        .collect();
    let mut reports: Vec<EquilibriumReport> = Vec::new();
    let mut diagnostics = Vec::new();
    for out in outcomes {
        let (x, diag) = out?;
        let duplicate = reports
            .iter()
            .any(|r| r.x.iter().zip(x.iter()).all(|(a, b)| (a - b).abs() <= opts.dedupe));
        if !duplicate {
            reports.push(evaluate_candidate(game, &x, diag.converged, opts.tolerances)?);
        }
        diagnostics.push(diag);
    }
    Ok(RestPointSearch {
        reports,
        diagnostics,
    })
}

/// Residual of the support-face equations: per class, mass balance and
/// equal payoffs across the support.
fn face_residual(game: &Game, x: &DVector<f64>, supports: &[Vec<usize>]) -> Result<DVector<f64>> {
    let pay = game.steady_state_payoff(x)?;
    let mut r = Vec::new();
    for ((cd, class), sup) in game.classes.iter().zip(&game.spec.classes).zip(supports) {
        let mass: f64 = sup.iter().map(|&u| x[cd.x_offset + u]).sum();
        r.push(mass - class.mass);
        for &u in sup.iter().skip(1) {
            r.push(pay[cd.x_offset + u] - pay[cd.x_offset + sup[0]]);
        }
    }
    Ok(DVector::from_vec(r))
}

fn newton_on_face(game: &Game, x0: &DVector<f64>, supports: &[Vec<usize>]) -> Result<DVector<f64>> {
    let vars: Vec<usize> = game
        .classes
        .iter()
        .zip(supports)
        .flat_map(|(cd, sup)| sup.iter().map(move |&u| cd.x_offset + u))
        .collect();
    let mut x = DVector::zeros(game.x_len);
    for &i in &vars {
        x[i] = x0[i].max(0.0);
    }
    let mut r = face_residual(game, &x, supports)?;
    for _ in 0..50 {
        let norm = r.amax();
        if norm < 1e-15 {
            break;
        }
        let h = 1e-7;
        let mut jac = DMatrix::zeros(r.len(), vars.len());
        for (j, &i) in vars.iter().enumerate() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let col = (face_residual(game, &xp, supports)? - face_residual(game, &xm, supports)?) / (2.0 * h);
            jac.set_column(j, &col);
        }
        let step = match jac.svd(true, true).solve(&r, 1e-10) {
            Ok(s) => s,
            Err(_) => break,
        };
        let mut alpha = 1.0;
        let mut improved = false;
        while alpha > 1e-4 {
            let mut trial = x.clone();
            for (j, &i) in vars.iter().enumerate() {
                trial[i] -= alpha * step[j];
            }
            let rt = face_residual(game, &trial, supports)?;
            if rt.amax() < norm {
                x = trial;
                r = rt;
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(x)
}

/// Refines a near-rest point by solving the equal-payoff conditions on
/// candidate support faces (several mass thresholds); keeps whichever point
/// has the smallest reduced-field residual, including the input itself.
pub fn polish(game: &Game, x: &DVector<f64>) -> Result<DVector<f64>> {
    let mut best = x.clone();
    let mut best_res = game.reduced_field(x)?.amax();
    for threshold in [1e-2, 1e-3, 1e-4, 1e-5, 1e-6] {
        let mut supports: Vec<Vec<usize>> = game
            .classes
            .iter()
            .zip(&game.spec.classes)
            .map(|(cd, class)| {
                (0..cd.n)
                    .filter(|&u| x[cd.x_offset + u] > threshold * class.mass)
                    .collect()
            })
            .collect();
        if supports.iter().any(|s| s.is_empty()) {
            continue;
        }
        for _ in 0..game.x_len {
            let cand = newton_on_face(game, x, &supports)?;
            let (worst_idx, worst) = cand
                .iter()
                .enumerate()
                .fold((0, 0.0), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
            if worst < -1e-12 {
                // drop the most negative policy from its class support and retry
                let mut dropped = false;
                for (cd, sup) in game.classes.iter().zip(supports.iter_mut()) {
                    if worst_idx >= cd.x_offset && worst_idx < cd.x_offset + cd.n && sup.len() > 1 {
                        sup.retain(|&u| u != worst_idx - cd.x_offset);
                        dropped = true;
                    }
                }
                if !dropped {
                    break;
                }
                continue;
            }
            let mut cand = cand.map(|v| v.max(0.0));
            for (cd, class) in game.classes.iter().zip(&game.spec.classes) {
                let mut seg = cand.rows_mut(cd.x_offset, cd.n);
                let s = seg.sum();
                seg *= class.mass / s;
            }
            let res = game.reduced_field(&cand)?.amax();
            if res < best_res {
                best_res = res;
                best = cand;
            }
            break;
        }
    }
    Ok(best)
}
