//! Equilibrium sets, evolutionary stability certificates, game-class
//! hypotheses and boundary-layer Lyapunov certificates.

pub mod bound;
pub mod ess;
pub mod hypotheses;
pub mod jacobian;
pub mod lp;
pub mod lyapunov;
pub mod msne_set;

pub use bound::{ultimate_bound_experiment, BoundRow};
pub use ess::{check_regular_ess, check_regular_ess_at, EssCertificate, EssOptions, EssVerdict};
pub use hypotheses::{check_potential_game, check_stable_game, PotentialReport, PotentialVerdict, StableReport};
pub use jacobian::{payoff_jacobian, JacobianMode};
pub use lyapunov::{solve_boundary_layer_lyapunov, solve_lyapunov, LyapunovCertificate};
pub use msne_set::{build_msne_set, MsneSet};
