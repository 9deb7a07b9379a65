//! Empirical ultimate bound of the fast coordinate as the timescale ratio
//! shrinks.

use nalgebra::DVector;
use serde::Serialize;

use crate::decomposition::{integrate_xz, Decomposition};
use crate::dynamics::uniform_grid;
use crate::error::Result;
use crate::game::Game;

#[derive(Clone, Debug, Serialize)]
pub struct BoundRow {
    pub epsilon: f64,
    /// `sup |z(t)|` over the last 20% of the horizon.
    pub tail_sup: f64,
    pub steps: usize,
    pub rejected: usize,
}

/// Integrates the coordinate form for every ratio in `eps_list` (state rates
/// rescaled, revision rates fixed) and records the tail supremum of `|z|`.
pub fn ultimate_bound_experiment(
    game: &Game,
    eps_list: &[f64],
    x0: &DVector<f64>,
    z0: &DVector<f64>,
    horizon: f64,
    tol: f64,
) -> Result<Vec<BoundRow>> {
    let samples = uniform_grid(horizon, 4001);
    let tail_start = 0.8 * horizon;
    eps_list
        .iter()
        .map(|&eps| {
            let g = game.with_epsilon(eps)?;
            let d = Decomposition::build(&g)?;
            let traj = integrate_xz(&g, &d, x0, z0, horizon, &samples, tol)?;
            let tail_sup = traj
                .times
                .iter()
                .zip(&traj.z)
                .filter(|(t, _)| **t >= tail_start)
                .map(|(_, z)| z.norm())
                .fold(0.0, f64::max);
            Ok(BoundRow {
                epsilon: eps,
                tail_sup,
                steps: traj.stats.steps,
                rejected: traj.stats.rejected,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::tests::two_state_class;
    use crate::game::GameSpec;
    use crate::reward::RewardModel;

    #[test]
    fn constant_payoffs_leave_only_decay() {
        // equal payoffs: Smith rates vanish, z decays at the fast rate
        let class = two_state_class([0.3, 0.6], RewardModel::Table { values: vec![vec![1.0, 1.0], vec![1.0, 1.0]] });
        let game = Game::new(GameSpec { classes: vec![class] }).unwrap();
        let d = Decomposition::build(&game).unwrap();
        let mu = DVector::from_column_slice(&[0.5, 0.0, 0.0, 0.5]);
        let (x, z) = d.project(&mu);
        let rows = ultimate_bound_experiment(&game, &[1e-1, 1e-2], &x, &z, 5.0, 1e-10).unwrap();
        for r in rows {
            assert!(r.tail_sup < 1e-8, "{r:?}");
        }
    }
}
