//! Derivatives of the steady-state payoff map.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::game::Game;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    /// Closed form when every reward provides it, differences otherwise.
    Auto,
    Analytic,
    FiniteDifference,
}

#[derive(Clone, Debug)]
pub struct JacobianEstimate {
    pub matrix: DMatrix<f64>,
    pub analytic: bool,
    /// Largest gap between the step-h and step-h/2 difference quotients;
    /// zero for closed forms.
    pub consistency: f64,
    pub finite: bool,
}

/// Closed-form Jacobian of the steady-state payoffs, `Pi_sa^T J Pi_sa` per
/// class, when every reward reads only its own class and exposes `J`.
pub fn analytic_payoff_jacobian(game: &Game, x: &DVector<f64>) -> Option<DMatrix<f64>> {
    if !game
        .spec
        .classes
        .iter()
        .all(|c| c.reward.is_own_class_only())
    {
        return None;
    }
    let mut ws = game.workspace();
    game.sigma_from_masses_into(x.as_slice(), &mut ws.sigma);
    let mut out = DMatrix::zeros(game.x_len, game.x_len);
    for (c, cd) in game.classes.iter().enumerate() {
        let j = game.spec.classes[c].reward.own_jacobian(&ws.sigma[c])?;
        let block = cd.pi_state_action.transpose() * j * &cd.pi_state_action;
        out.view_mut((cd.x_offset, cd.x_offset), (cd.n, cd.n))
            .copy_from(&block);
    }
    Some(out)
}

/// Central differences of `f` along the columns of `dirs` at `y0`, refined
/// once by Richardson extrapolation. Returns (jacobian, consistency gap).
pub fn richardson_jacobian<F>(f: &mut F, y0: &DVector<f64>, h: f64) -> Result<(DMatrix<f64>, f64)>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let k = y0.len();
    let mut cols = Vec::with_capacity(k);
    let mut gap: f64 = 0.0;
    let mut rows = 0;
    for j in 0..k {
        let central = |f: &mut F, step: f64| -> Result<DVector<f64>> {
            let mut yp = y0.clone();
            let mut ym = y0.clone();
            yp[j] += step;
            ym[j] -= step;
            Ok((f(&yp)? - f(&ym)?) / (2.0 * step))
        };
        let d1 = central(f, h)?;
        let d2 = central(f, h / 2.0)?;
        let diff = (&d2 - &d1).amax();
        let scale = 1.0 + d2.amax();
        gap = gap.max(diff / scale);
        rows = d2.len();
        cols.push((d2 * 4.0 - d1) / 3.0);
    }
    let mut m = DMatrix::zeros(rows, k);
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    Ok((m, gap))
}

/// Jacobian of the steady-state payoff map at `x` in the requested mode.
pub fn payoff_jacobian(game: &Game, x: &DVector<f64>, mode: JacobianMode) -> Result<JacobianEstimate> {
    if mode != JacobianMode::FiniteDifference {
        if let Some(m) = analytic_payoff_jacobian(game, x) {
            let finite = m.iter().all(|v| v.is_finite());
            return Ok(JacobianEstimate {
                matrix: m,
                analytic: true,
                consistency: 0.0,
                finite,
            });
        }
    }
    let h = 1e-6 * (1.0 + x.norm());
    let mut f = |y: &DVector<f64>| game.steady_state_payoff(y);
    let (m, gap) = richardson_jacobian(&mut f, x, h)?;
    let finite = m.iter().all(|v| v.is_finite());
    Ok(JacobianEstimate {
        matrix: m,
        analytic: false,
        consistency: gap,
        finite,
    })
}
