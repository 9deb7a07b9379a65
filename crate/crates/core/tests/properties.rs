//! Randomized invariants over generated games.

use mfg_evo::decomposition::Decomposition;
use mfg_evo::dynamics::{integrate, uniform_grid};
use mfg_evo::equilibrium::dirichlet_masses;
use mfg_evo::finite_pop::kl_divergence;
use mfg_evo::scenarios::{build_random_game, RandomGameConfig, RandomRewardKind};
use mfg_evo::{growth_rates, Game, Protocol};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn game_for(seed: u64, classes: usize, generic: bool, protocol: Protocol) -> Game {
    let cfg = RandomGameConfig {
        classes,
        kind: if generic { RandomRewardKind::Generic } else { RandomRewardKind::Congestion },
        max_policies: 8,
        states: (1, 4),
        protocol,
        ..RandomGameConfig::default()
    };
    Game::new(build_random_game(seed, &cfg).unwrap()).unwrap()
}

fn interior_mu(game: &Game, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mu = DVector::zeros(game.mu_len);
    for (cd, class) in game.classes.iter().zip(&game.spec.classes) {
        let len = cd.p * cd.n;
        let w: Vec<f64> = (0..len).map(|_| rand::Rng::random_range(&mut rng, 0.05..1.0)).collect();
        let total: f64 = w.iter().sum();
        for (i, v) in w.into_iter().enumerate() {
            mu[cd.mu_offset + i] = v / total * class.mass;
        }
    }
    mu
}

fn protocol_strategy() -> impl Strategy<Value = Protocol> {
    prop_oneof![Just(Protocol::Smith), Just(Protocol::Bnn), Just(Protocol::Ppi)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn basis_identities_hold(seed in 0u64..10_000, classes in 1usize..=2) {
        let game = game_for(seed, classes, false, Protocol::Smith);
        let d = Decomposition::build(&game).unwrap();
        let rep = d.identity_report();
        prop_assert!(rep.max_residual() <= 1e-10, "{:?}", rep.residuals);
        prop_assert!(rep.max_real_eig_fast < -1e-8);
    }

    #[test]
    fn field_preserves_class_mass(seed in 0u64..10_000, generic: bool, protocol in protocol_strategy()) {
        let game = game_for(seed, 2, generic, protocol);
        let mu = interior_mu(&game, seed);
        let f = game.field(&mu).unwrap();
        for cd in &game.classes {
            prop_assert!(f.rows(cd.mu_offset, cd.p * cd.n).sum().abs() < 1e-12);
        }
    }

    #[test]
    fn trajectories_stay_in_domain(seed in 0u64..10_000, protocol in protocol_strategy()) {
        let game = game_for(seed, 1 + (seed % 2) as usize, seed % 3 == 0, protocol);
        let mu = interior_mu(&game, seed + 1);
        let traj = integrate(&game, &mu, 5.0, &uniform_grid(5.0, 26), 1e-9).unwrap();
        let (mass_err, min_coord) = traj.invariant_errors(&game, true);
        prop_assert!(mass_err <= 1e-9);
        prop_assert!(min_coord >= -1e-7);
    }

    #[test]
    fn projection_round_trip(seed in 0u64..10_000) {
        let game = game_for(seed, 2, true, Protocol::Bnn);
        let d = Decomposition::build(&game).unwrap();
        let mu = interior_mu(&game, seed);
        let (x, z) = d.project(&mu);
        prop_assert!((d.reconstruct(&x, &z) - &mu).amax() < 1e-12);
        prop_assert!((x - game.policy_masses(&mu)).amax() < 1e-12);
    }

    #[test]
    fn imitative_growth_rates_are_mass_neutral(seed in 0u64..10_000, n in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = 1.7;
        let pi = DVector::from_fn(n, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
        let w = DVector::from_fn(n, |_, _| rand::Rng::random_range(&mut rng, 0.0..1.0));
        let x = &w / w.sum() * m;
        let g = growth_rates(&Protocol::Ppi, &pi, &x, m).unwrap();
        prop_assert!(x.dot(&g).abs() <= 1e-10);
        for u in 0..n {
            for v in 0..n {
                if pi[u] > pi[v] {
                    prop_assert!(g[u] > g[v]);
                }
            }
        }
    }

    #[test]
    fn rates_are_nonnegative_and_lipschitz_in_payoffs(seed in 0u64..10_000, n in 2usize..7, protocol in protocol_strategy()) {
        // with the span semi-norm max - min on payoff differences the
        // constant is 1 for all built-in protocols
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rand::Rng::random_range(&mut rng, 0.2..3.0);
        let w = DVector::from_fn(n, |_, _| rand::Rng::random_range(&mut rng, 0.0..1.0));
        let x = &w / w.sum() * m;
        let p1 = DVector::from_fn(n, |_, _| rand::Rng::random_range(&mut rng, -5.0..5.0));
        let p2 = DVector::from_fn(n, |_, _| rand::Rng::random_range(&mut rng, -5.0..5.0));
        let r1 = protocol.rates(&p1, &x, m);
        let r2 = protocol.rates(&p2, &x, m);
        prop_assert!(r1.min() >= 0.0 && r2.min() >= 0.0);
        let dp = &p1 - &p2;
        let span = dp.max() - dp.min();
        prop_assert!((r1 - r2).amax() <= span + 1e-12);
    }

    #[test]
    fn divergence_is_nonnegative(a in prop::collection::vec(0.0f64..1.0, 6), b in prop::collection::vec(0.0f64..1.0, 6)) {
        prop_assume!(a.iter().sum::<f64>() > 0.0 && b.iter().sum::<f64>() > 0.0);
        prop_assert!(kl_divergence(&a, &b, 1e-9) >= 0.0);
        prop_assert!(kl_divergence(&a, &a, 1e-9) < 1e-15);
    }

    #[test]
    fn steady_state_payoff_matches_full_payoff_on_embedding(seed in 0u64..10_000) {
        let game = game_for(seed, 2, true, Protocol::Smith);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = dirichlet_masses(&game, &mut rng);
        let a = game.steady_state_payoff(&x).unwrap();
        let b = game.payoff(&game.embed_stationary(&x)).unwrap();
        prop_assert!((a - b).amax() < 1e-12);
    }
}
