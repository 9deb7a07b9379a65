//! Master-equation vector field and its integration.
//!
//! `mu_dot = f_state + f_revision` where, per class and policy `u`,
//! `f_state[., u] = R_d (P_u^T mu[., u] - mu[., u])` and
//! `f_revision[s, u] = R_r (sum_v mu[s, v] rho_{vu} - mu[s, u] sum_v rho_{uv})`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{Game, PayoffWorkspace};
use crate::ode::{self, GuardOutcome, OdeOptions, OdeStats, OdeSystem};

/// Coordinates more negative than this reject the step.
pub const SIMPLEX_REJECT: f64 = 1e-7;

#[derive(Clone, Debug)]
pub struct FieldWorkspace {
    pub payoff: PayoffWorkspace,
    pub pay: Vec<f64>,
    pub x: Vec<f64>,
    pub rho: Vec<DMatrix<f64>>,
}

impl FieldWorkspace {
    pub fn new(game: &Game) -> Self {
        Self {
            payoff: game.workspace(),
            pay: vec![0.0; game.x_len],
            x: vec![0.0; game.x_len],
            rho: game.classes.iter().map(|cd| DMatrix::zeros(cd.n, cd.n)).collect(),
        }
    }
}

impl Game {
    /// State drift, written into `out`.
    pub fn field_state_into(&self, mu: &[f64], out: &mut [f64]) {
        for (cd, class) in self.classes.iter().zip(&self.spec.classes) {
            let rd = class.rate_state;
            for u in 0..cd.n {
                let base = cd.mu_offset + cd.p * u;
                let pmat = &cd.chains[u].transition;
                for s in 0..cd.p {
                    let mut inflow = 0.0;
                    for s2 in 0..cd.p {
                        inflow += pmat[(s2, s)] * mu[base + s2];
                    }
                    out[base + s] = rd * (inflow - mu[base + s]);
                }
            }
        }
    }

    pub fn field_state(&self, mu: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.mu_len);
        self.field_state_into(mu.as_slice(), out.as_mut_slice());
        out
    }

    /// Evaluates payoffs and protocol rates (scaled by the revision rate)
    /// at `mu`, leaving them in the workspace.
    pub fn revision_rates_into(&self, mu: &[f64], ws: &mut FieldWorkspace) -> Result<()> {
        self.payoff_into(mu, &mut ws.payoff, &mut ws.pay)?;
        for cd in &self.classes {
            for u in 0..cd.n {
                let base = cd.mu_offset + cd.p * u;
                ws.x[cd.x_offset + u] = mu[base..base + cd.p].iter().sum();
            }
        }
        self.rates_from_payoff(ws);
        Ok(())
    }

    fn rates_from_payoff(&self, ws: &mut FieldWorkspace) {
        for (c, (cd, class)) in self.classes.iter().zip(&self.spec.classes).enumerate() {
            let range = cd.x_offset..cd.x_offset + cd.n;
            class
                .protocol
                .rates_into(&ws.pay[range.clone()], &ws.x[range], class.mass, &mut ws.rho[c]);
            ws.rho[c] *= class.rate_revision;
        }
    }

    /// Revision drift using rates already stored in `ws`, added to `out`
    /// when `accumulate` is set.
    fn revision_apply(&self, mu: &[f64], ws: &FieldWorkspace, out: &mut [f64], accumulate: bool) {
        for (c, cd) in self.classes.iter().enumerate() {
            let rho = &ws.rho[c];
            let n = cd.n;
            for u in 0..n {
                let outflow: f64 = (0..n).map(|v| rho[(u, v)]).sum();
                for s in 0..cd.p {
                    let mut inflow = 0.0;
                    for v in 0..n {
                        inflow += mu[cd.mu_offset + s + cd.p * v] * rho[(v, u)];
                    }
                    let idx = cd.mu_offset + s + cd.p * u;
                    let val = inflow - mu[idx] * outflow;
                    if accumulate {
                        out[idx] += val;
                    } else {
                        out[idx] = val;
                    }
                }
            }
        }
    }

    pub fn field_revision_into(&self, mu: &[f64], ws: &mut FieldWorkspace, out: &mut [f64]) -> Result<()> {
        self.revision_rates_into(mu, ws)?;
        self.revision_apply(mu, ws, out, false);
        Ok(())
    }

    pub fn field_revision(&self, mu: &DVector<f64>) -> Result<DVector<f64>> {
        let mut ws = FieldWorkspace::new(self);
        let mut out = DVector::zeros(self.mu_len);
        self.field_revision_into(mu.as_slice(), &mut ws, out.as_mut_slice())?;
        Ok(out)
    }

    pub fn field_into(&self, mu: &[f64], ws: &mut FieldWorkspace, out: &mut [f64]) -> Result<()> {
        self.revision_rates_into(mu, ws)?;
        self.field_state_into(mu, out);
        self.revision_apply(mu, ws, out, true);
        Ok(())
    }

    /// Full master-equation field.
    pub fn field(&self, mu: &DVector<f64>) -> Result<DVector<f64>> {
        let mut ws = FieldWorkspace::new(self);
        let mut out = DVector::zeros(self.mu_len);
        self.field_into(mu.as_slice(), &mut ws, out.as_mut_slice())?;
        Ok(out)
    }

    /// Reduced (slow) field on policy masses: evolutionary dynamics of the
    /// steady-state game.
    pub fn reduced_field_into(&self, x: &[f64], ws: &mut FieldWorkspace, out: &mut [f64]) -> Result<()> {
        self.steady_state_payoff_into(x, &mut ws.payoff, &mut ws.pay)?;
        ws.x.copy_from_slice(x);
        self.rates_from_payoff(ws);
        for (c, cd) in self.classes.iter().enumerate() {
            let rho = &ws.rho[c];
            for u in 0..cd.n {
                let mut val = 0.0;
                for v in 0..cd.n {
                    val += x[cd.x_offset + v] * rho[(v, u)] - x[cd.x_offset + u] * rho[(u, v)];
                }
                out[cd.x_offset + u] = val;
            }
        }
        Ok(())
    }

    pub fn reduced_field(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut ws = FieldWorkspace::new(self);
        let mut out = DVector::zeros(self.x_len);
        self.reduced_field_into(x.as_slice(), &mut ws, out.as_mut_slice())?;
        Ok(out)
    }

    /// Clip small negative coordinates and restore class masses; rejects
    /// violations beyond [`SIMPLEX_REJECT`].
    pub(crate) fn simplex_guard(&self, v: &mut [f64], use_mu: bool) -> (GuardOutcome, f64) {
        let mut worst: f64 = 0.0;
        let mut corrected = false;
        for (cd, class) in self.classes.iter().zip(&self.spec.classes) {
            let (start, len) = if use_mu {
                (cd.mu_offset, cd.mu_len())
            } else {
                (cd.x_offset, cd.n)
            };
            let seg = &mut v[start..start + len];
            let min = seg.iter().cloned().fold(f64::INFINITY, f64::min);
            worst = worst.max(-min);
            if min < -SIMPLEX_REJECT {
                return (GuardOutcome::Reject, worst);
            }
            if min < 0.0 {
                for e in seg.iter_mut() {
                    *e = e.max(0.0);
                }
                let sum: f64 = seg.iter().sum();
                let scale = class.mass / sum;
                for e in seg.iter_mut() {
                    *e *= scale;
                }
                corrected = true;
            }
        }
        let outcome = if corrected {
            GuardOutcome::Corrected
        } else {
            GuardOutcome::Unchanged
        };
        (outcome, worst)
    }
}

/// Master equation as an [`OdeSystem`] with the simplex guard.
pub struct MasterEquation<'a> {
    pub game: &'a Game,
    pub ws: FieldWorkspace,
}

impl<'a> MasterEquation<'a> {
    pub fn new(game: &'a Game) -> Self {
        Self {
            game,
            ws: FieldWorkspace::new(game),
        }
    }
}

impl OdeSystem for MasterEquation<'_> {
    fn dim(&self) -> usize {
        self.game.mu_len
    }
    fn rhs(&mut self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        self.game.field_into(y, &mut self.ws, dy)
    }
    fn guard(&mut self, y: &mut [f64]) -> (GuardOutcome, f64) {
        self.game.simplex_guard(y, true)
    }
}

/// Reduced model on policy masses as an [`OdeSystem`].
pub struct ReducedModel<'a> {
    pub game: &'a Game,
    pub ws: FieldWorkspace,
}

impl<'a> ReducedModel<'a> {
    pub fn new(game: &'a Game) -> Self {
        Self {
            game,
            ws: FieldWorkspace::new(game),
        }
    }
}

impl OdeSystem for ReducedModel<'_> {
    fn dim(&self) -> usize {
        self.game.x_len
    }
    fn rhs(&mut self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        self.game.reduced_field_into(y, &mut self.ws, dy)
    }
    fn guard(&mut self, y: &mut [f64]) -> (GuardOutcome, f64) {
        self.game.simplex_guard(y, false)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub stats: OdeStats,
    pub t_final: f64,
    pub final_state: DVector<f64>,
    pub stopped: bool,
}

impl Trajectory {
    fn from_solution(sol: ode::OdeSolution) -> Self {
        Self {
            times: sol.times,
            states: sol
                .states
                .into_iter()
                .map(DVector::from_vec)
                .collect(),
            stats: sol.stats,
            t_final: sol.t_final,
            final_state: DVector::from_vec(sol.y_final),
            stopped: sol.stopped,
        }
    }

    /// Largest per-class mass error and most negative coordinate over stored samples.
    pub fn invariant_errors(&self, game: &Game, on_mu: bool) -> (f64, f64) {
        let mut mass_err: f64 = 0.0;
        let mut min_coord = f64::INFINITY;
        for st in self.states.iter().chain(std::iter::once(&self.final_state)) {
            for (cd, class) in game.classes.iter().zip(&game.spec.classes) {
                let (start, len) = if on_mu {
                    (cd.mu_offset, cd.mu_len())
                } else {
                    (cd.x_offset, cd.n)
                };
                let seg = st.rows(start, len);
                mass_err = mass_err.max((seg.sum() - class.mass).abs());
                min_coord = min_coord.min(seg.min());
            }
        }
        (mass_err, min_coord)
    }
}

/// Uniform sample grid of `count` points on `[0, t_end]`.
pub fn uniform_grid(t_end: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![t_end];
    }
    (0..count)
        .map(|i| t_end * i as f64 / (count - 1) as f64)
        .collect()
}

fn check_tol(tol: f64) -> Result<()> {
    if !(1e-12..=1e-3).contains(&tol) {
        return Err(Error::Parameter(format!(
            "integration tolerance {tol:e} outside [1e-12, 1e-3]"
        )));
    }
    Ok(())
}

/// Integrates the master equation from `mu0`, sampling at `samples`.
/// `stop(t, mu)` may end the run early.
pub fn integrate_with(
    game: &Game,
    mu0: &DVector<f64>,
    t_end: f64,
    samples: &[f64],
    tol: f64,
    stop: impl FnMut(f64, &[f64]) -> bool,
) -> Result<Trajectory> {
    check_tol(tol)?;
    game.check_population(mu0, crate::game::SIMPLEX_TOL)?;
    let mut sys = MasterEquation::new(game);
    let sol = ode::solve(
        &mut sys,
        0.0,
        mu0.as_slice(),
        t_end,
        samples,
        &OdeOptions::with_tol(tol),
        stop,
    )?;
    Ok(Trajectory::from_solution(sol))
}

pub fn integrate(game: &Game, mu0: &DVector<f64>, t_end: f64, samples: &[f64], tol: f64) -> Result<Trajectory> {
    integrate_with(game, mu0, t_end, samples, tol, |_, _| false)
}

/// Integrates the reduced model on policy masses.
pub fn integrate_reduced_with(
    game: &Game,
    x0: &DVector<f64>,
    t_end: f64,
    samples: &[f64],
    tol: f64,
    stop: impl FnMut(f64, &[f64]) -> bool,
) -> Result<Trajectory> {
    check_tol(tol)?;
    game.check_policy_masses(x0, crate::game::SIMPLEX_TOL)?;
    let mut sys = ReducedModel::new(game);
    let sol = ode::solve(
        &mut sys,
        0.0,
        x0.as_slice(),
        t_end,
        samples,
        &OdeOptions::with_tol(tol),
        stop,
    )?;
    Ok(Trajectory::from_solution(sol))
}
