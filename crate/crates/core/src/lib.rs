//! Continuous-time finite-state mean field games under evolutionary revision
//! dynamics: master-equation integration, slow/fast coordinate decomposition,
//! equilibrium search, stability certificates and finite-population
//! simulation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decomposition;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod finite_pop;
pub mod game;
pub mod linalg;
pub mod ode;
pub mod protocols;
pub mod reward;
pub mod scenarios;
pub mod spec_file;
pub mod stability;
pub mod testkit;

pub use error::{Error, Result};
pub use game::{
    enumerate_policies, stationary_distribution, ClassSpec, DeterministicPolicy, Game, GameSpec,
    PiMap, PiVariant, PolicyChain,
};
pub use protocols::{growth_rates, Family, Protocol};
pub use reward::RewardModel;
