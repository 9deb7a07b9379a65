//! Slow/fast coordinates of the master equation.
//!
//! Per class, `mu = B_sk x + B_sbk z` where the columns of `B_sk` embed unit
//! mass of each policy at its stationary distribution and `B_sbk` is block
//! diagonal with an orthonormal zero-sum basis per policy. The inverse is
//! split into `B_ks` (recovers `x`, equals `I (x) 1^T`) and `B_ksb`
//! (recovers `z`).

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dynamics::FieldWorkspace;
use crate::error::{Error, Result};
use crate::game::{Game, SIMPLEX_TOL};
use crate::linalg::{block_diag, condition_number, helmert, max_real_eigenvalue};
use crate::ode::{self, OdeOptions, OdeSystem};

pub const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Debug)]
pub struct ClassBasis {
    pub b_sk: DMatrix<f64>,
    pub b_sbk: DMatrix<f64>,
    pub b_ks: DMatrix<f64>,
    pub b_ksb: DMatrix<f64>,
    /// Unit-rate generator acting on the flattened class block.
    pub generator: DMatrix<f64>,
    pub condition: f64,
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub classes: Vec<ClassBasis>,
    pub b_sk: DMatrix<f64>,
    pub b_sbk: DMatrix<f64>,
    pub b_ks: DMatrix<f64>,
    pub b_ksb: DMatrix<f64>,
    pub generator: DMatrix<f64>,
    /// `diag(R_d^c Q^c) / min_c R_d^c`.
    pub q_bar: DMatrix<f64>,
    /// `B_ksb q_bar B_sbk`.
    pub q_bar_z: DMatrix<f64>,
    pub rate_state_min: f64,
    pub rate_revision_max: f64,
    pub epsilon: f64,
    pub x_len: usize,
    pub z_len: usize,
    pub mu_len: usize,
    pub z_offsets: Vec<usize>,
    rate_state: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BasisIdentityReport {
    /// Infinity-norm residuals of the eight equality identities, in order:
    /// column sums of B_sk, column sums of B_sbk, partition of unity,
    /// Q B_sk, B_ksb B_sk, B_ksb B_sbk - I, B_ks - I (x) 1^T, B_ks Q.
    pub residuals: [f64; 8],
    /// Largest real part of the spectrum of the reduced fast generator.
    pub max_real_eig_fast: f64,
    pub max_condition: f64,
}

impl BasisIdentityReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().cloned().fold(0.0, f64::max)
    }
}

fn kron_identity_ones(n: usize, p: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n * p);
    for u in 0..n {
        for s in 0..p {
            m[(u, u * p + s)] = 1.0;
        }
    }
    m
}

impl Decomposition {
    pub fn build(game: &Game) -> Result<Self> {
        let mut classes = Vec::with_capacity(game.classes.len());
        let mut z_offsets = Vec::new();
        let mut z_len = 0;
        for cd in &game.classes {
            let (p, n) = (cd.p, cd.n);
            let mut b_sk = DMatrix::zeros(p * n, n);
            for u in 0..n {
                b_sk.view_mut((u * p, u), (p, 1))
                    .copy_from(&cd.chains[u].stationary);
            }
            let h = helmert(p);
            let b_sbk = block_diag(&vec![h; n]);
            let mut combined = DMatrix::zeros(p * n, p * n);
            combined.view_mut((0, 0), (p * n, n)).copy_from(&b_sk);
            combined
                .view_mut((0, n), (p * n, (p - 1) * n))
                .copy_from(&b_sbk);
            let condition = condition_number(&combined);
            if !(condition <= MAX_CONDITION) {
                return Err(Error::DegenerateBasis(condition));
            }
            let inv = crate::linalg::inverse(&combined)?;
            let b_ks = inv.rows(0, n).into_owned();
            let b_ksb = inv.rows(n, (p - 1) * n).into_owned();
            let expected = kron_identity_ones(n, p);
            let dev = (&b_ks - &expected).amax();
            if dev > 1e-10 {
                return Err(Error::Numerical(format!(
                    "mass-recovery block deviates from I (x) 1^T by {dev:.3e}"
                )));
            }
            let generator = block_diag(
                &cd.chains
                    .iter()
                    .map(|ch| ch.generator.transpose())
                    .collect::<Vec<_>>(),
            );
            z_offsets.push(z_len);
            z_len += (p - 1) * n;
            classes.push(ClassBasis {
                b_sk,
                b_sbk,
                // exact by construction; the check above guards the inverse
                b_ks: expected,
                b_ksb,
                generator,
                condition,
            });
        }
        let (rd_min, rr_max) = game.spec.rate_bounds();
        let rate_state: Vec<f64> = game.spec.classes.iter().map(|c| c.rate_state).collect();
        let cat = |f: &dyn Fn(&ClassBasis) -> DMatrix<f64>| {
            block_diag(&classes.iter().map(f).collect::<Vec<_>>())
        };
        let b_sk = cat(&|b| b.b_sk.clone());
        let b_sbk = cat(&|b| b.b_sbk.clone());
        let b_ks = cat(&|b| b.b_ks.clone());
        let b_ksb = cat(&|b| b.b_ksb.clone());
        let generator = cat(&|b| b.generator.clone());
        let q_bar = block_diag(
            &classes
                .iter()
                .zip(&rate_state)
                .map(|(b, rd)| &b.generator * (rd / rd_min))
                .collect::<Vec<_>>(),
        );
        let q_bar_z = &b_ksb * &q_bar * &b_sbk;
        Ok(Self {
            classes,
            b_sk,
            b_sbk,
            b_ks,
            b_ksb,
            generator,
            q_bar,
            q_bar_z,
            rate_state_min: rd_min,
            rate_revision_max: rr_max,
            epsilon: rr_max / rd_min,
            x_len: game.x_len,
            z_len,
            mu_len: game.mu_len,
            z_offsets,
            rate_state,
        })
    }

    pub fn project(&self, mu: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (&self.b_ks * mu, &self.b_ksb * mu)
    }

    pub fn reconstruct(&self, x: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        &self.b_sk * x + &self.b_sbk * z
    }

    /// Residuals of the basis identities plus the fast-block spectrum.
    pub fn identity_report(&self) -> BasisIdentityReport {
        let mut r = [0.0f64; 8];
        let mut eig: f64 = f64::NEG_INFINITY;
        let mut cond: f64 = 0.0;
        for cb in &self.classes {
            let pn = cb.b_sk.nrows();
            let n = cb.b_sk.ncols();
            let p = pn / n;
            let ones = DMatrix::from_element(1, pn, 1.0);
            let vals = [
                (&ones * &cb.b_sk - DMatrix::from_element(1, n, 1.0)).amax(),
                (&ones * &cb.b_sbk).amax(),
                (&cb.b_sk * &cb.b_ks + &cb.b_sbk * &cb.b_ksb - DMatrix::identity(pn, pn)).amax(),
                (&cb.generator * &cb.b_sk).amax(),
                (&cb.b_ksb * &cb.b_sk).amax(),
                (&cb.b_ksb * &cb.b_sbk - DMatrix::identity((p - 1) * n, (p - 1) * n)).amax(),
                (&cb.b_ks - kron_identity_ones(n, p)).amax(),
                (&cb.b_ks * &cb.generator).amax(),
            ];
            for (dst, v) in r.iter_mut().zip(vals) {
                *dst = dst.max(v);
            }
            if p > 1 {
                let fast = &cb.b_ksb * &cb.generator * &cb.b_sbk;
                eig = eig.max(max_real_eigenvalue(&fast));
            }
            cond = cond.max(cb.condition);
        }
        BasisIdentityReport {
            residuals: r,
            max_real_eig_fast: eig,
            max_condition: cond,
        }
    }

    /// Whether `reconstruct(x, z)` lies in the population simplex.
    pub fn in_domain(&self, game: &Game, x: &DVector<f64>, z: &DVector<f64>) -> bool {
        game.check_population(&self.reconstruct(x, z), SIMPLEX_TOL).is_ok()
    }

    /// Real-time derivatives `(x_dot, z_dot)` computed from the coordinate form:
    /// `x_dot = B_ks f_r`, `z_dot = B_ksb diag(R_d Q) B_sbk z + B_ksb f_r`.
    #[allow(clippy::too_many_arguments)]
    pub fn xz_rates_unchecked(
        &self,
        game: &Game,
        x: &[f64],
        z: &[f64],
        ws: &mut FieldWorkspace,
        mu_buf: &mut DVector<f64>,
        fr_buf: &mut DVector<f64>,
        dx: &mut [f64],
        dz: &mut [f64],
    ) -> Result<()> {
        let xv = DVector::from_column_slice(x);
        let zv = DVector::from_column_slice(z);
        mu_buf.copy_from(&(&self.b_sk * &xv + &self.b_sbk * &zv));
        game.field_revision_into(mu_buf.as_slice(), ws, fr_buf.as_mut_slice())?;
        let xdot = &self.b_ks * &*fr_buf;
        let zdot = &self.q_bar_z * &zv * self.rate_state_min + &self.b_ksb * &*fr_buf;
        dx.copy_from_slice(xdot.as_slice());
        dz.copy_from_slice(zdot.as_slice());
        Ok(())
    }

    pub fn xz_rates(&self, game: &Game, x: &DVector<f64>, z: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        if !self.in_domain(game, x, z) {
            return Err(Error::Domain(
                "(x, z) reconstructs to a point outside the population simplex".into(),
            ));
        }
        let mut ws = FieldWorkspace::new(game);
        let mut mu = DVector::zeros(self.mu_len);
        let mut fr = DVector::zeros(self.mu_len);
        let mut dx = DVector::zeros(self.x_len);
        let mut dz = DVector::zeros(self.z_len);
        self.xz_rates_unchecked(
            game,
            x.as_slice(),
            z.as_slice(),
            &mut ws,
            &mut mu,
            &mut fr,
            dx.as_mut_slice(),
            dz.as_mut_slice(),
        )?;
        Ok((dx, dz))
    }

    /// Singular-perturbation form `(x_dot, epsilon * z_dot)`.
    pub fn xz_field(&self, game: &Game, x: &DVector<f64>, z: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let (dx, dz) = self.xz_rates(game, x, z)?;
        Ok((dx, dz * self.epsilon))
    }

    /// Fast linear dynamics `z_dot = min_c R_d^c * q_bar_z z`; with revision
    /// rates normalized to one this is `(1/epsilon) q_bar_z z`.
    pub fn boundary_layer_field(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.q_bar_z * z * self.rate_state_min
    }

    pub fn rate_state(&self) -> &[f64] {
        &self.rate_state
    }
}

/// The `(x, z)` system as an ODE (state vector `[x; z]`).
pub struct XzSystem<'a> {
    pub game: &'a Game,
    pub decomp: &'a Decomposition,
    ws: FieldWorkspace,
    mu: DVector<f64>,
    fr: DVector<f64>,
}

impl<'a> XzSystem<'a> {
    pub fn new(game: &'a Game, decomp: &'a Decomposition) -> Self {
        Self {
            game,
            decomp,
            ws: FieldWorkspace::new(game),
            mu: DVector::zeros(game.mu_len),
            fr: DVector::zeros(game.mu_len),
        }
    }
}

impl OdeSystem for XzSystem<'_> {
    fn dim(&self) -> usize {
        self.decomp.x_len + self.decomp.z_len
    }
    fn rhs(&mut self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let nx = self.decomp.x_len;
        let (x, z) = y.split_at(nx);
        let (dx, dz) = dy.split_at_mut(nx);
        self.decomp
            .xz_rates_unchecked(self.game, x, z, &mut self.ws, &mut self.mu, &mut self.fr, dx, dz)
    }
}

#[derive(Clone, Debug)]
pub struct XzTrajectory {
    pub times: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub z: Vec<DVector<f64>>,
    pub stats: ode::OdeStats,
}

/// Integrates the coordinate form from `(x0, z0)`.
pub fn integrate_xz(
    game: &Game,
    decomp: &Decomposition,
    x0: &DVector<f64>,
    z0: &DVector<f64>,
    t_end: f64,
    samples: &[f64],
    tol: f64,
) -> Result<XzTrajectory> {
    if !decomp.in_domain(game, x0, z0) {
        return Err(Error::Domain("initial (x, z) outside the domain".into()));
    }
    let mut sys = XzSystem::new(game, decomp);
    let y0: Vec<f64> = x0.iter().chain(z0.iter()).cloned().collect();
    let sol = ode::solve(&mut sys, 0.0, &y0, t_end, samples, &OdeOptions::with_tol(tol), |_, _| false)?;
    let nx = decomp.x_len;
    Ok(XzTrajectory {
        times: sol.times,
        x: sol.states.iter().map(|s| DVector::from_column_slice(&s[..nx])).collect(),
        z: sol.states.iter().map(|s| DVector::from_column_slice(&s[nx..])).collect(),
        stats: sol.stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::tests::two_state_class;
    use crate::game::GameSpec;
    use crate::reward::RewardModel;

    fn small_game() -> Game {
        let class = two_state_class(
            [0.3, 0.6],
            RewardModel::CongestionAffine {
                base: vec![vec![1.0, 0.8], vec![0.2, 0.0]],
                slope: vec![1.0, 0.5],
            },
        );
        Game::new(GameSpec { classes: vec![class] }).unwrap()
    }

    #[test]
    fn two_state_blocks_are_signed_unit_differences() {
        let game = small_game();
        let d = Decomposition::build(&game).unwrap();
        let r = 1.0 / 2f64.sqrt();
        assert!((d.b_sbk[(0, 0)] - r).abs() < 1e-15 && (d.b_sbk[(1, 0)] + r).abs() < 1e-15);
        let rep = d.identity_report();
        assert!(rep.max_residual() < 1e-10, "{:?}", rep.residuals);
        assert!(rep.max_real_eig_fast < 0.0);
    }

    #[test]
    fn fast_coordinates_match_closed_form() {
        // z_u = H^T (I - eta_u 1^T) mu_u
        let game = small_game();
        let d = Decomposition::build(&game).unwrap();
        let mu = DVector::from_column_slice(&[0.1, 0.3, 0.45, 0.15]);
        let (_, z) = d.project(&mu);
        let h = helmert(2);
        for u in 0..2 {
            let eta = &game.classes[0].chains[u].stationary;
            let block = mu.rows(2 * u, 2).into_owned();
            let centered = &block - eta * block.sum();
            let expect = h.transpose() * centered;
            assert!((expect[0] - z[u]).abs() < 1e-14);
        }
    }

    #[test]
    fn coordinate_field_matches_projected_master_field() {
        let game = small_game();
        let d = Decomposition::build(&game).unwrap();
        let mu = DVector::from_column_slice(&[0.1, 0.3, 0.45, 0.15]);
        let (x, z) = d.project(&mu);
        let (dx, dz) = d.xz_rates(&game, &x, &z).unwrap();
        let (px, pz) = d.project(&game.field(&mu).unwrap());
        assert!((dx - px).amax() < 1e-12 && (dz - pz).amax() < 1e-12);
    }

    #[test]
    fn single_state_has_no_fast_coordinates() {
        let game = Game::new(GameSpec {
            classes: vec![crate::game::ClassSpec {
                name: "c".into(),
                states: vec!["s".into()],
                actions: vec!["a".into(), "b".into()],
                available: vec![vec![0, 1]],
                kernel: vec![vec![vec![1.0], vec![1.0]]],
                reward: RewardModel::Table { values: vec![vec![0.0, 1.0]] },
                mass: 1.0,
                rate_state: 1.0,
                rate_revision: 1.0,
                protocol: crate::protocols::Protocol::Smith,
            }],
        })
        .unwrap();
        let d = Decomposition::build(&game).unwrap();
        assert_eq!(d.z_len, 0);
        assert!((&d.b_sk - DMatrix::<f64>::identity(2, 2)).amax() == 0.0);
    }
}
