//! Maturation and survival modelling toolkit.
//!
//! Implements finite catenary chains of compartments with time-dependent
//! linear rates, their continuous limit with an explicit Binomial-Poisson
//! occupation law, Monte-Carlo simulators that validate those laws, and an
//! ordinary-least-squares fitting harness comparing the two model families
//! on multi-dose drug-toxicity data.

pub mod compartmental;
pub mod dist;
pub mod error;
pub mod fit;
pub mod ident;
pub mod kinetics;
pub mod model;
mod nelder;
pub mod quad;
pub mod resolvent;
pub mod schedule;
pub mod sim;

pub use compartmental::{
    catenary_system, equilibrium_init, integrate, integrate_on_grid, CompartmentalSystem,
    Trajectory,
};
pub use dist::BinomialPoissonLaw;
pub use error::{Error, Result};
pub use fit::{FitOptions, FitProblem, FitResult, ModelKind};
pub use kinetics::DrugKinetics;
pub use model::{ContinuousModel, KillingField};
pub use quad::integrate_adaptive;
pub use resolvent::{expm, propagator};
pub use schedule::{ExpSegment, ExpTerm, RateSchedule};
pub use sim::{JumpPath, ParticleOutcome, PointSet, RngStream};
