//! Built-in games: the battery-constrained medium access game and seeded
//! random games.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{ClassSpec, Game, GameSpec};
use crate::protocols::Protocol;
use crate::reward::RewardModel;

/// Parameters of the medium access game.
///
/// Battery levels run from empty (index 0) to full (`levels - 1`). An empty
/// terminal stays silent and recharges to full with probability `recharge`;
/// transmitting at power `P` drops one level with probability
/// `alpha * P + gamma`. The level just above empty only allows the lowest
/// power, higher levels allow every power.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MacParams {
    /// Transmission powers, strictly increasing and positive (silence has power 0).
    pub powers: Vec<f64>,
    pub levels: usize,
    pub recharge: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub noise: f64,
    pub gain: f64,
    pub slot: f64,
    pub beta: f64,
    pub rate_state: f64,
    pub rate_revision: f64,
    pub mass: f64,
    pub protocol: Protocol,
}

impl Default for MacParams {
    /// Four battery levels, powers (1, 2). With these constants the
    /// interference load at which a transmission is worth exactly its cost
    /// lies strictly between the loads of the most and least aggressive
    /// policies, so the equilibrium mixes all four policies.
    fn default() -> Self {
        Self {
            powers: vec![1.0, 2.0],
            levels: 4,
            recharge: 0.3,
            alpha: 0.2,
            gamma: 0.1,
            noise: 0.1,
            gain: 1.0,
            slot: 0.1,
            beta: 1.0,
            rate_state: 10.0,
            rate_revision: 1.0,
            mass: 1.0,
            protocol: Protocol::Smith,
        }
    }
}

impl MacParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Parameter(format!("mac parameters: {m}")));
        if self.powers.is_empty() {
            return fail("at least one transmission power is required");
        }
        if !(self.powers[0] > 0.0) || self.powers.windows(2).any(|w| !(w[0] < w[1])) {
            return fail("powers must satisfy 0 < P_1 < P_2 < ...");
        }
        if self.levels < 2 {
            return fail("at least two battery levels are required");
        }
        if !(self.recharge > 0.0 && self.recharge <= 1.0) {
            return fail("recharge probability must lie in (0, 1]");
        }
        if !(self.alpha > 0.0) || !(self.gamma > 0.0) {
            return fail("alpha > 0 and gamma > 0 are required");
        }
        let pmax = *self.powers.last().unwrap();
        if self.alpha * pmax + self.gamma > 1.0 {
            return fail("alpha * P_max + gamma <= 1 is violated");
        }
        if !(self.noise > 0.0) || !(self.gain > 0.0) || !(self.slot > 0.0) {
            return fail("noise, gain and slot must be positive");
        }
        if !(self.beta >= 0.0) {
            return fail("beta must be nonnegative");
        }
        if !(self.rate_state > 0.0) || !(self.rate_revision > 0.0) || !(self.mass > 0.0) {
            return fail("rates and mass must be positive");
        }
        Ok(())
    }

    pub fn state_names(&self) -> Vec<String> {
        if self.levels == 4 {
            return ["E", "AE", "AF", "F"].iter().map(|s| s.to_string()).collect();
        }
        (0..self.levels)
            .map(|i| match i {
                0 => "E".to_string(),
                i if i + 1 == self.levels => "F".to_string(),
                i => format!("B{i}"),
            })
            .collect()
    }

    pub fn action_names(&self) -> Vec<String> {
        let mut names = vec!["N".to_string()];
        if self.powers.len() == 2 {
            names.extend(["L".to_string(), "H".to_string()]);
        } else {
            names.extend((1..=self.powers.len()).map(|i| format!("P{i}")));
        }
        names
    }
}

pub fn build_mac(params: &MacParams) -> Result<GameSpec> {
    params.validate()?;
    let k = params.levels;
    let n_pow = params.powers.len();
    let mut all_powers = vec![0.0];
    all_powers.extend(&params.powers);
    let mut available = Vec::with_capacity(k);
    let mut kernel = Vec::with_capacity(k);
    for s in 0..k {
        if s == 0 {
            available.push(vec![0]);
            let mut row = vec![0.0; k];
            row[0] = 1.0 - params.recharge;
            row[k - 1] += params.recharge;
            kernel.push(vec![row]);
        } else {
            let acts: Vec<usize> = if s == 1 { vec![1] } else { (1..=n_pow).collect() };
            let rows = acts
                .iter()
                .map(|&a| {
                    let drop = params.alpha * all_powers[a] + params.gamma;
                    let mut row = vec![0.0; k];
                    row[s] = 1.0 - drop;
                    row[s - 1] = drop;
                    row
                })
                .collect();
            available.push(acts);
            kernel.push(rows);
        }
    }
    Ok(GameSpec {
        classes: vec![ClassSpec {
            name: "terminals".into(),
            states: params.state_names(),
            actions: params.action_names(),
            available,
            kernel,
            reward: RewardModel::MacSinr {
                powers: all_powers,
                noise: params.noise,
                gain: params.gain,
                slot: params.slot,
                rate_state: params.rate_state,
                beta: params.beta,
            },
            mass: params.mass,
            rate_state: params.rate_state,
            rate_revision: params.rate_revision,
            protocol: params.protocol.clone(),
        }],
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomRewardKind {
    /// `b[s][a] - k[a] sigma[S, a]` with `k > 0`: concave potential.
    Congestion,
    /// Random bilinear reward with an unstructured coupling matrix.
    Generic,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RandomGameConfig {
    pub classes: usize,
    pub states: (usize, usize),
    /// Range of the number of available actions per state.
    pub actions: (usize, usize),
    pub kind: RandomRewardKind,
    pub max_policies: usize,
    pub protocol: Protocol,
    pub rate_state: (f64, f64),
    pub rate_revision: (f64, f64),
    pub mass: (f64, f64),
}

impl Default for RandomGameConfig {
    fn default() -> Self {
        Self {
            classes: 1,
            states: (1, 5),
            actions: (1, 3),
            kind: RandomRewardKind::Congestion,
            max_policies: 64,
            protocol: Protocol::Smith,
            rate_state: (1.0, 1.0),
            rate_revision: (1.0, 1.0),
            mass: (1.0, 1.0),
        }
    }
}

const MAX_ATTEMPTS: usize = 100;

fn dirichlet_row(rng: &mut ChaCha8Rng, p: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..p).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    let mixed: Vec<f64> = raw
        .iter()
        .map(|v| 0.95 * v / total + 0.05 / p as f64)
        .collect();
    let s: f64 = mixed.iter().sum();
    mixed.iter().map(|v| v / s).collect()
}

fn sample_range(rng: &mut ChaCha8Rng, r: (f64, f64)) -> f64 {
    if r.1 > r.0 {
        rng.random_range(r.0..r.1)
    } else {
        r.0
    }
}

fn random_class(rng: &mut ChaCha8Rng, c: usize, cfg: &RandomGameConfig) -> ClassSpec {
    let p = rng.random_range(cfg.states.0..=cfg.states.1);
    let q = cfg.actions.1;
    let mut available = Vec::with_capacity(p);
    for _ in 0..p {
        let count = rng.random_range(cfg.actions.0..=cfg.actions.1);
        let mut alphabet: Vec<usize> = (0..q).collect();
        alphabet.shuffle(rng);
        let mut chosen = alphabet[..count].to_vec();
        chosen.sort_unstable();
        available.push(chosen);
    }
    let kernel = available
        .iter()
        .map(|acts| acts.iter().map(|_| dirichlet_row(rng, p)).collect())
        .collect();
    let base: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..q).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    let reward = match cfg.kind {
        RandomRewardKind::Congestion => RewardModel::CongestionAffine {
            base,
            slope: (0..q).map(|_| rng.random_range(0.5..1.5)).collect(),
        },
        RandomRewardKind::Generic => RewardModel::Bilinear {
            base,
            coupling: (0..p * q)
                .map(|_| (0..p * q).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect(),
        },
    };
    ClassSpec {
        name: format!("class{c}"),
        states: (0..p).map(|s| format!("s{s}")).collect(),
        actions: (0..q).map(|a| format!("a{a}")).collect(),
        available,
        kernel,
        reward,
        mass: sample_range(rng, cfg.mass),
        rate_state: sample_range(rng, cfg.rate_state),
        rate_revision: sample_range(rng, cfg.rate_revision),
        protocol: cfg.protocol.clone(),
    }
}

/// Seeded random game. Kernel rows are Dirichlet(1) draws mixed with 5%
/// uniform mass, so every policy chain is irreducible; the chains are still
/// verified and the draw repeated (up to 100 times) on failure or when a
/// class exceeds `max_policies`.
pub fn build_random_game(seed: u64, cfg: &RandomGameConfig) -> Result<GameSpec> {
    if cfg.classes == 0 || cfg.states.0 == 0 || cfg.actions.0 == 0 {
        return Err(Error::Parameter("random game needs at least one class, state and action".into()));
    }
    if cfg.states.0 > cfg.states.1 || cfg.actions.0 > cfg.actions.1 {
        return Err(Error::Parameter("random game ranges must be ordered".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        let spec = GameSpec {
            classes: (0..cfg.classes).map(|c| random_class(&mut rng, c, cfg)).collect(),
        };
        let too_many = spec.classes.iter().any(|cl| {
            cl.available.iter().map(|a| a.len()).product::<usize>() > cfg.max_policies
        });
        if too_many {
            continue;
        }
        if Game::new(spec.clone()).is_ok() {
            return Ok(spec);
        }
    }
    Err(Error::Generation(MAX_ATTEMPTS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::PiVariant;

    #[test]
    fn mac_policies_follow_documented_order() {
        let game = Game::new(build_mac(&MacParams::default()).unwrap()).unwrap();
        let cd = &game.classes[0];
        assert_eq!(cd.n, 4);
        // states E, AE, AF, F; actions N=0, L=1, H=2
        let acts: Vec<Vec<usize>> = cd.policies.iter().map(|p| p.actions.clone()).collect();
        assert_eq!(
            acts,
            vec![vec![0, 1, 1, 1], vec![0, 1, 1, 2], vec![0, 1, 2, 1], vec![0, 1, 2, 2]]
        );
    }

    #[test]
    fn mac_action_map_entries() {
        let game = Game::new(build_mac(&MacParams::default()).unwrap()).unwrap();
        let pi = game.pi_map(PiVariant::Action, None).unwrap();
        let eta = |u: usize| game.classes[0].chains[u].stationary.clone();
        let (e1, e2, e3, e4) = (eta(0), eta(1), eta(2), eta(3));
        let m = &pi.matrix;
        assert!((m[(0, 0)] - e1[0]).abs() < 1e-15);
        assert!((m[(1, 0)] - (e1[1] + e1[2] + e1[3])).abs() < 1e-15);
        assert!((m[(1, 1)] - (e2[1] + e2[2])).abs() < 1e-15);
        assert!((m[(1, 2)] - (e3[1] + e3[3])).abs() < 1e-15);
        assert!((m[(1, 3)] - e4[1]).abs() < 1e-15);
        assert_eq!(m[(2, 0)], 0.0);
        assert!((m[(2, 1)] - e2[3]).abs() < 1e-15);
        assert!((m[(2, 2)] - e3[2]).abs() < 1e-15);
        assert!((m[(2, 3)] - (e4[2] + e4[3])).abs() < 1e-15);
    }

    #[test]
    fn mac_rejects_energy_constraint_violation() {
        let p = MacParams {
            alpha: 0.5,
            ..MacParams::default()
        };
        let msg = build_mac(&p).unwrap_err().to_string();
        assert!(msg.contains("alpha * P_max + gamma <= 1"));
    }

    #[test]
    fn generalized_mac_counts_policies() {
        let p = MacParams {
            powers: vec![0.5, 1.0, 1.5],
            levels: 5,
            alpha: 0.1,
            ..MacParams::default()
        };
        let game = Game::new(build_mac(&p).unwrap()).unwrap();
        // levels 2..4 choose among 3 powers
        assert_eq!(game.classes[0].n, 27);
    }

    #[test]
    fn random_games_are_seed_deterministic() {
        let cfg = RandomGameConfig {
            classes: 2,
            ..RandomGameConfig::default()
        };
        let a = build_random_game(11, &cfg).unwrap();
        let b = build_random_game(11, &cfg).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }
}
