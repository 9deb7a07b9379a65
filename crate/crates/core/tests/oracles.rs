//! Module outputs compared against the independent references in `testkit`.

use mfg_evo::decomposition::Decomposition;
use mfg_evo::dynamics::{integrate, integrate_reduced_with, uniform_grid};
use mfg_evo::finite_pop::{simulate, FinitePopOptions};
use mfg_evo::scenarios::{build_mac, build_random_game, MacParams, RandomGameConfig, RandomRewardKind};
use mfg_evo::stability::jacobian::analytic_payoff_jacobian;
use mfg_evo::testkit::*;
use mfg_evo::{ClassSpec, Game, GameSpec, Protocol, RewardModel};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_games(count: u64, kind: RandomRewardKind) -> Vec<Game> {
    (0..count)
        .map(|seed| {
            let cfg = RandomGameConfig {
                classes: 1 + (seed as usize % 2),
                kind,
                ..RandomGameConfig::default()
            };
            Game::new(build_random_game(seed, &cfg).unwrap()).unwrap()
        })
        .collect()
}

fn single_state(payoffs: Vec<f64>, protocol: Protocol, mass: f64) -> Game {
    let q = payoffs.len();
    Game::new(GameSpec {
        classes: vec![ClassSpec {
            name: "c".into(),
            states: vec!["s".into()],
            actions: (0..q).map(|a| format!("a{a}")).collect(),
            available: vec![(0..q).collect()],
            kernel: vec![vec![vec![1.0]; q]],
            reward: RewardModel::Table { values: vec![payoffs] },
            mass,
            rate_state: 1.0,
            rate_revision: 2.0,
            protocol,
        }],
    })
    .unwrap()
}

#[test]
fn policy_enumeration_matches_cartesian_product() {
    for game in random_games(30, RandomRewardKind::Congestion) {
        for (cd, class) in game.classes.iter().zip(&game.spec.classes) {
            let brute = cartesian_policies(&class.available);
            let listed: Vec<Vec<usize>> = cd.policies.iter().map(|p| p.actions.clone()).collect();
            assert_eq!(listed, brute);
        }
    }
}

#[test]
fn stationary_distributions_match_power_iteration() {
    for game in random_games(30, RandomRewardKind::Congestion) {
        for cd in &game.classes {
            for chain in &cd.chains {
                let eta = power_iteration_stationary(&chain.transition, 1e-15, 1_000_000);
                let r = OracleReport::new("power iteration", "random chain", (&eta - &chain.stationary).amax(), 1e-10);
                assert!(r.pass, "{r}");
            }
        }
    }
}

#[test]
fn adaptive_integrator_matches_fixed_step_on_mac() {
    let game = Game::new(build_mac(&MacParams::default()).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x0 = mfg_evo::equilibrium::dirichlet_masses(&game, &mut rng);
    let mut mu0 = game.embed_stationary(&x0);
    // move state mass within each policy block so the fast part is excited
    let p = game.classes[0].p;
    for u in 0..game.classes[0].n {
        let total: f64 = mu0.rows(p * u, p).sum();
        mu0.rows_mut(p * u, p).fill(0.0);
        mu0[p * u] = total;
    }
    let times = uniform_grid(2.0, 11);
    let tol = 1e-9;
    let adaptive = integrate(&game, &mu0, 2.0, &times, tol).unwrap();
    let reference = reference_integrate(|y| game.field(&DVector::from_column_slice(y)).unwrap().as_slice().to_vec(), mu0.as_slice(), 2.0, 1e-4, &times);
    let dev = adaptive
        .states
        .iter()
        .zip(&reference)
        .map(|(a, b)| (a - DVector::from_column_slice(b)).amax())
        .fold(0.0, f64::max);
    let r = OracleReport::new("fixed-step RK4", "mac", dev, 10.0 * tol);
    assert!(r.pass, "{r}");
}

#[test]
fn two_policy_closed_forms() {
    let gap = 0.7;
    let mass = 1.5;
    let x2_0 = 1.2;
    let times = uniform_grid(6.0, 13);
    type Exact = Box<dyn Fn(f64) -> f64>;
    let cases: Vec<(Protocol, Exact)> = vec![
        (Protocol::Smith, Box::new(move |t| smith_two_policy(x2_0, gap, 2.0, t))),
        (Protocol::Bnn, Box::new(move |t| bnn_two_policy(x2_0, mass, gap, 2.0, t))),
        (Protocol::Ppi, Box::new(move |t| imitation_two_policy(x2_0, mass, gap, 2.0, t))),
    ];
    for (protocol, exact) in cases {
        let name = protocol.name().to_string();
        let game = single_state(vec![1.0 + gap, 1.0], protocol, mass);
        let x0 = DVector::from_column_slice(&[mass - x2_0, x2_0]);
        let traj = integrate_reduced_with(&game, &x0, 6.0, &times, 1e-11, |_, _| false).unwrap();
        let dev = traj
            .times
            .iter()
            .zip(&traj.states)
            .map(|(&t, x)| (x[1] - exact(t)).abs())
            .fold(0.0, f64::max);
        let r = OracleReport::new("two-policy closed form", name, dev, 1e-8);
        assert!(r.pass, "{r}");
    }
}

#[test]
fn stable_two_policy_game_reaches_bisection_equilibrium() {
    // payoff a_i - b_i x_i, so the crossing of the two payoffs is the equilibrium
    let class = ClassSpec {
        name: "c".into(),
        states: vec!["s".into()],
        actions: vec!["a".into(), "b".into()],
        available: vec![vec![0, 1]],
        kernel: vec![vec![vec![1.0]; 2]],
        reward: RewardModel::CongestionAffine {
            base: vec![vec![1.0, 0.6]],
            slope: vec![1.0, 0.5],
        },
        mass: 1.0,
        rate_state: 1.0,
        rate_revision: 1.0,
        protocol: Protocol::Smith,
    };
    let game = Game::new(GameSpec { classes: vec![class] }).unwrap();
    let x1 = bisection(|x1| (1.0 - x1) - (0.6 - 0.5 * (1.0 - x1)), 0.0, 1.0, 1e-14);
    let x0 = DVector::from_column_slice(&[0.1, 0.9]);
    let traj = integrate_reduced_with(&game, &x0, 200.0, &[], 1e-11, |_, _| false).unwrap();
    let r = OracleReport::new("bisection", "congestion pair", (traj.final_state[0] - x1).abs(), 1e-7);
    assert!(r.pass, "{r}");
}

#[test]
fn analytic_payoff_jacobian_matches_differences() {
    let mut games = random_games(10, RandomRewardKind::Generic);
    games.extend(random_games(10, RandomRewardKind::Congestion));
    games.push(Game::new(build_mac(&MacParams::default()).unwrap()).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for game in games {
        let x = mfg_evo::equilibrium::dirichlet_masses(&game, &mut rng);
        let exact = analytic_payoff_jacobian(&game, &x).unwrap();
        let fd = fd_jacobian(
            |y| game.steady_state_payoff(&DVector::from_column_slice(y)).unwrap().as_slice().to_vec(),
            x.as_slice(),
            1e-4,
        );
        let r = OracleReport::new("difference jacobian", "random game", (exact - fd).amax(), 1e-7);
        assert!(r.pass, "{r}");
    }
}

#[test]
fn reconstruction_inverts_projection() {
    for game in random_games(20, RandomRewardKind::Congestion) {
        let d = Decomposition::build(&game).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = mfg_evo::equilibrium::dirichlet_masses(&game, &mut rng);
        let mu = game.embed_stationary(&x);
        let (x2, z) = d.project(&mu);
        assert!((x2 - &x).amax() < 1e-12);
        assert!(z.amax() < 1e-12, "stationary embedding has no fast part");
    }
}

#[test]
fn single_agent_occupancy_matches_stationary_law() {
    // one agent, equal payoffs (no switching), two-state chain with a fixed policy
    let class = ClassSpec {
        name: "c".into(),
        states: vec!["a".into(), "b".into()],
        actions: vec!["x".into()],
        available: vec![vec![0], vec![0]],
        kernel: vec![vec![vec![0.3, 0.7]], vec![vec![0.4, 0.6]]],
        reward: RewardModel::Table { values: vec![vec![1.0], vec![1.0]] },
        mass: 1.0,
        rate_state: 1.0,
        rate_revision: 1.0,
        protocol: Protocol::Smith,
    };
    let game = Game::new(GameSpec { classes: vec![class] }).unwrap();
    let eta = power_iteration_stationary(&game.classes[0].chains[0].transition, 1e-15, 100_000);
    let mu0 = DVector::from_column_slice(&[1.0, 0.0]);
    let horizon = 20_000.0;
    let grid = 200_001;
    let traj = simulate(
        &game,
        &mu0,
        &FinitePopOptions {
            n: 1,
            horizon,
            grid,
            seed: 5,
            rate_bounds: Some(vec![0.0]),
            presamples: 0,
        },
    )
    .unwrap();
    let frac_a = traj.states.iter().map(|m| m[0]).sum::<f64>() / grid as f64;
    // grid spacing 0.1 against mean holding time ~1.6: correlated samples,
    // so bound by the continuous-time variance of the occupancy instead
    let q: f64 = 1.0 - 0.3;
    let r: f64 = 0.4;
    let sigma = (2.0 * q * r / (q + r).powi(3) / horizon).sqrt();
    assert!((frac_a - eta[0]).abs() < 3.0 * sigma, "{frac_a} vs {} (sigma {sigma})", eta[0]);
}
