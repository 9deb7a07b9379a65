//! Event-driven simulation of a finite population whose mean field is the
//! master equation.
//!
//! Each agent carries a state clock at rate `R_d` and a revision clock at a
//! class-wide bound `R_bar` on the row sums of the revision rates; a
//! revision opportunity switches `u -> v` with probability
//! `rho_uv / R_bar`. Agents are exchangeable, so the simulation tracks cell
//! counts per (class, state, policy) only.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Exp1};
use serde::{Deserialize, Serialize};

use crate::dynamics::{uniform_grid, FieldWorkspace};
use crate::error::{Error, Result};
use crate::game::Game;

/// Default additive smoothing for the divergence.
pub const KL_SMOOTHING: f64 = 1e-9;

const CLOCK_STREAM: u64 = 0;
const INIT_STREAM: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Agent {
    pub class: usize,
    pub state: usize,
    pub policy: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FinitePopOptions {
    /// Total number of agents, split across classes by mass.
    pub n: usize,
    pub horizon: f64,
    /// Number of uniform sample times including both ends.
    pub grid: usize,
    pub seed: u64,
    /// Revision-rate bounds per class; estimated by presampling if absent.
    pub rate_bounds: Option<Vec<f64>>,
    pub presamples: usize,
}

impl Default for FinitePopOptions {
    fn default() -> Self {
        FinitePopOptions {
            n: 1000,
            horizon: 10.0,
            grid: 101,
            seed: 0,
            rate_bounds: None,
            presamples: 64,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EmpiricalTrajectory {
    pub times: Vec<f64>,
    /// Empirical population states, per-class totals equal to the masses.
    pub states: Vec<DVector<f64>>,
    pub seed: u64,
    pub n: usize,
    pub agents_per_class: Vec<usize>,
    pub rate_bounds: Vec<f64>,
    pub state_events: u64,
    pub revision_events: u64,
    pub switches: u64,
}

/// Agents per class: `round(N m_c / sum m)`, at least one.
pub fn agents_per_class(game: &Game, n: usize) -> Vec<usize> {
    let masses = game.masses();
    let total: f64 = masses.iter().sum();
    masses
        .iter()
        .map(|m| ((n as f64 * m / total).round() as usize).max(1))
        .collect()
}

/// Draws initial agents i.i.d. from the normalized class distributions of `mu0`.
pub fn sample_agents(game: &Game, mu0: &DVector<f64>, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Agent>> {
    game.check_population(mu0, 1e-9)?;
    let counts = agents_per_class(game, n);
    let mut agents = Vec::with_capacity(counts.iter().sum());
    for (c, cd) in game.classes.iter().enumerate() {
        let cells = &mu0.as_slice()[cd.mu_offset..cd.mu_offset + cd.p * cd.n];
        let mut cumulative = Vec::with_capacity(cells.len());
        let mut acc = 0.0;
        for &v in cells {
            acc += v.max(0.0);
            cumulative.push(acc);
        }
        for _ in 0..counts[c] {
            let r = rng.random::<f64>() * acc;
            let idx = cumulative.partition_point(|&v| v <= r).min(cells.len() - 1);
            agents.push(Agent {
                class: c,
                state: idx % cd.p,
                policy: idx / cd.p,
            });
        }
    }
    Ok(agents)
}

/// Twice the largest revision row sum seen over `samples` random population
/// states and `mu0`.
pub fn estimate_rate_bounds(game: &Game, mu0: &DVector<f64>, samples: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let mut ws = FieldWorkspace::new(game);
    let mut best = vec![0.0f64; game.classes.len()];
    let mut mu = mu0.clone();
    for k in 0..=samples {
        if k > 0 {
            for (cd, class) in game.classes.iter().zip(&game.spec.classes) {
                let len = cd.p * cd.n;
                let draws: Vec<f64> = (0..len).map(|_| Exp1.sample(&mut rng)).collect();
                let total: f64 = draws.iter().sum();
                for (i, d) in draws.into_iter().enumerate() {
                    mu[cd.mu_offset + i] = d / total * class.mass;
                }
            }
        }
        game.revision_rates_into(mu.as_slice(), &mut ws)?;
        for (c, rho) in ws.rho.iter().enumerate() {
            for row in rho.row_iter() {
                best[c] = best[c].max(row.sum());
            }
        }
    }
    Ok(best.into_iter().map(|b| 2.0 * b).collect())
}

/// `KL(p || q)` of the normalized, `delta`-smoothed vectors.
pub fn kl_divergence(p: &[f64], q: &[f64], delta: f64) -> f64 {
    assert_eq!(p.len(), q.len(), "divergence of vectors of different length");
    let sp: f64 = p.iter().map(|v| v + delta).sum();
    let sq: f64 = q.iter().map(|v| v + delta).sum();
    p.iter()
        .zip(q)
        .map(|(&a, &b)| {
            let a = (a + delta) / sp;
            let b = (b + delta) / sq;
            if a <= 0.0 {
                0.0
            } else {
                a * (a / b).ln()
            }
        })
        .sum::<f64>()
        .max(0.0)
}

/// Samples agents from `mu0` and simulates them.
pub fn simulate(game: &Game, mu0: &DVector<f64>, opts: &FinitePopOptions) -> Result<EmpiricalTrajectory> {
    if opts.n == 0 {
        return Err(Error::Parameter("population size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(INIT_STREAM);
    let agents = sample_agents(game, mu0, opts.n, &mut rng)?;
    simulate_agents(game, &agents, mu0, opts)
}

/// Simulates a given initial population. `mu_ref` is only used to estimate
/// the revision bound when none is supplied.
pub fn simulate_agents(
    game: &Game,
    agents: &[Agent],
    mu_ref: &DVector<f64>,
    opts: &FinitePopOptions,
) -> Result<EmpiricalTrajectory> {
    if !(opts.horizon >= 0.0) || opts.grid < 2 {
        return Err(Error::Parameter("need a nonnegative horizon and at least two sample times".into()));
    }
    let nc = game.classes.len();
    let mut counts = vec![0u64; game.mu_len];
    let mut per_class = vec![0usize; nc];
    for a in agents {
        let cd = game
            .classes
            .get(a.class)
            .ok_or_else(|| Error::Parameter(format!("agent class {} out of range", a.class)))?;
        if a.state >= cd.p || a.policy >= cd.n {
            return Err(Error::Parameter(format!(
                "agent (class {}, state {}, policy {}) out of range",
                a.class, a.state, a.policy
            )));
        }
        counts[cd.mu_offset + a.state + cd.p * a.policy] += 1;
        per_class[a.class] += 1;
    }
    if per_class.contains(&0) {
        return Err(Error::Parameter("every class needs at least one agent".into()));
    }
    let bounds = match &opts.rate_bounds {
        Some(b) if b.len() == nc => b.clone(),
        Some(b) => {
            return Err(Error::Parameter(format!("{} rate bounds given for {nc} classes", b.len())));
        }
        None => estimate_rate_bounds(game, mu_ref, opts.presamples, opts.seed)?,
    };
    let scale: Vec<f64> = game
        .spec
        .classes
        .iter()
        .zip(&per_class)
        .map(|(class, &k)| class.mass / k as f64)
        .collect();
    let mut mu = DVector::zeros(game.mu_len);
    for (c, cd) in game.classes.iter().enumerate() {
        for i in cd.mu_offset..cd.mu_offset + cd.p * cd.n {
            mu[i] = counts[i] as f64 * scale[c];
        }
    }

    // constant aggregate rates: state clocks then revision clocks per class
    let mut channel_rates = Vec::with_capacity(2 * nc);
    for (c, class) in game.spec.classes.iter().enumerate() {
        channel_rates.push(per_class[c] as f64 * class.rate_state);
        channel_rates.push(per_class[c] as f64 * bounds[c]);
    }
    let total_rate: f64 = channel_rates.iter().sum();

    let mut clock = ChaCha8Rng::seed_from_u64(opts.seed);
    clock.set_stream(CLOCK_STREAM);
    let mut channels: Vec<ChaCha8Rng> = (0..2 * nc)
        .map(|k| {
            let mut r = ChaCha8Rng::seed_from_u64(opts.seed);
            r.set_stream(2 + k as u64);
            r
        })
        .collect();

    let times = uniform_grid(opts.horizon, opts.grid);
    let mut states = Vec::with_capacity(times.len());
    let mut ws = FieldWorkspace::new(game);
    let mut dirty = true;
    let (mut state_events, mut revision_events, mut switches) = (0u64, 0u64, 0u64);
    let mut t = 0.0;
    let mut next_sample = 0;
    let exp = if total_rate > 0.0 { Some(Exp::new(total_rate).map_err(|e| Error::Parameter(e.to_string()))?) } else { None };
    loop {
        let dt = match &exp {
            Some(e) => e.sample(&mut clock),
            None => f64::INFINITY,
        };
        let t_next = t + dt;
        while next_sample < times.len() && times[next_sample] < t_next {
            states.push(mu.clone());
            next_sample += 1;
        }
        if next_sample == times.len() {
            break;
        }
        t = t_next;
        let mut r = clock.random::<f64>() * total_rate;
        let mut channel = channel_rates.len() - 1;
        for (k, &w) in channel_rates.iter().enumerate() {
            if r < w {
                channel = k;
                break;
            }
            r -= w;
        }
        let c = channel / 2;
        let cd = &game.classes[c];
        let rng = &mut channels[channel];
        // uniformly random agent of the class
        let pick = rng.random_range(0..per_class[c] as u64);
        let mut acc = 0u64;
        let mut cell = cd.mu_offset;
        for i in cd.mu_offset..cd.mu_offset + cd.p * cd.n {
            acc += counts[i];
            if pick < acc {
                cell = i;
                break;
            }
        }
        let local = cell - cd.mu_offset;
        let (s, u) = (local % cd.p, local / cd.p);
        let target = if channel % 2 == 0 {
            state_events += 1;
            let row = cd.chains[u].transition.row(s);
            let r = rng.random::<f64>();
            let mut acc = 0.0;
            let mut s2 = cd.p - 1;
            for k in 0..cd.p {
                acc += row[k];
                if r < acc {
                    s2 = k;
                    break;
                }
            }
            cd.mu_offset + s2 + cd.p * u
        } else {
            revision_events += 1;
            if dirty {
                game.revision_rates_into(mu.as_slice(), &mut ws)?;
                for (k, rho) in ws.rho.iter().enumerate() {
                    let kd = &game.classes[k];
                    for v in 0..kd.n {
                        let occupied = (0..kd.p).any(|q| counts[kd.mu_offset + q + kd.p * v] > 0);
                        let sum = rho.row(v).sum();
                        if occupied && sum > bounds[k] * (1.0 + 1e-12) {
                            return Err(Error::RateBoundViolation {
                                class: k,
                                observed: sum,
                                bound: bounds[k],
                            });
                        }
                    }
                }
                dirty = false;
            }
            let rho = &ws.rho[c];
            let mut r = rng.random::<f64>() * bounds[c];
            let mut v_new = u;
            for v in 0..cd.n {
                if v == u {
                    continue;
                }
                if r < rho[(u, v)] {
                    v_new = v;
                    break;
                }
                r -= rho[(u, v)];
            }
            if v_new != u {
                switches += 1;
            }
            cd.mu_offset + s + cd.p * v_new
        };
        if target != cell {
            counts[cell] -= 1;
            counts[target] += 1;
            mu[cell] = counts[cell] as f64 * scale[c];
            mu[target] = counts[target] as f64 * scale[c];
            dirty = true;
        }
    }
    Ok(EmpiricalTrajectory {
        times,
        states,
        seed: opts.seed,
        n: opts.n,
        agents_per_class: per_class,
        rate_bounds: bounds,
        state_events,
        revision_events,
        switches,
    })
}

impl EmpiricalTrajectory {
    /// Divergence from the mean-field states sampled at the same times.
    pub fn kl_series(&self, mean_field: &[DVector<f64>], delta: f64) -> Vec<f64> {
        self.states
            .iter()
            .zip(mean_field)
            .map(|(a, b)| kl_divergence(a.as_slice(), b.as_slice(), delta))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::tests::two_state_class;
    use crate::game::GameSpec;
    use crate::reward::RewardModel;

    #[test]
    fn hand_computed_divergence() {
        let v = kl_divergence(&[0.5, 0.5], &[0.25, 0.75], 0.0);
        let expect = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((v - expect).abs() < 1e-15);
        assert_eq!(kl_divergence(&[0.2, 0.8], &[0.2, 0.8], 1e-9), 0.0);
        let d = kl_divergence(&[1.0, 0.0], &[0.0, 1.0], KL_SMOOTHING);
        assert!(d.is_finite() && d > 10.0);
    }

    fn flat_game() -> Game {
        let class = two_state_class([0.3, 0.6], RewardModel::Table { values: vec![vec![1.0, 1.0], vec![1.0, 1.0]] });
        Game::new(GameSpec { classes: vec![class] }).unwrap()
    }

    #[test]
    fn equal_payoffs_keep_policy_counts() {
        let game = flat_game();
        let mu0 = DVector::from_column_slice(&[0.25, 0.25, 0.25, 0.25]);
        let opts = FinitePopOptions {
            n: 200,
            horizon: 5.0,
            grid: 11,
            seed: 3,
            rate_bounds: Some(vec![1.0]),
            presamples: 0,
        };
        let traj = simulate(&game, &mu0, &opts).unwrap();
        assert_eq!(traj.switches, 0);
        let x0 = game.policy_masses(&traj.states[0]);
        for mu in &traj.states {
            assert!((mu.sum() - 1.0).abs() < 1e-12);
            assert!((game.policy_masses(mu) - &x0).amax() < 1e-12);
        }
        assert!(traj.state_events > 0 && traj.revision_events > 0);
    }

    #[test]
    fn permuted_agents_give_identical_paths() {
        let game = flat_game();
        let mu0 = DVector::from_column_slice(&[0.1, 0.2, 0.3, 0.4]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let agents = sample_agents(&game, &mu0, 50, &mut rng).unwrap();
        let mut reversed = agents.clone();
        reversed.reverse();
        let opts = FinitePopOptions { n: 50, horizon: 3.0, grid: 7, seed: 4, ..Default::default() };
        let a = simulate_agents(&game, &agents, &mu0, &opts).unwrap();
        let b = simulate_agents(&game, &reversed, &mu0, &opts).unwrap();
        assert_eq!(a.states, b.states);
    }

    #[test]
    fn too_small_bound_is_reported() {
        let class = two_state_class(
            [0.3, 0.6],
            RewardModel::Table { values: vec![vec![5.0, 0.0], vec![0.0, 0.0]] },
        );
        let game = Game::new(GameSpec { classes: vec![class] }).unwrap();
        let mu0 = DVector::from_column_slice(&[0.25, 0.25, 0.25, 0.25]);
        let opts = FinitePopOptions {
            n: 100,
            horizon: 5.0,
            grid: 5,
            seed: 1,
            rate_bounds: Some(vec![1e-3]),
            presamples: 0,
        };
        assert!(matches!(simulate(&game, &mu0, &opts), Err(Error::RateBoundViolation { .. })));
    }
}
