//! Monte Carlo laboratory for annihilating branching Brownian motion (ABBM),
//! its couplings, martingale functionals, and lattice analogues.

pub mod abbm;
pub mod bbm;
pub mod config;
pub mod couplings;
pub mod crossing;
mod engine;
pub mod error;
pub mod event;
pub mod experiments;
pub mod lattice;
pub mod martingales;
pub mod rng;
pub mod stats;

pub use abbm::{
    block_count, build_bell_configuration, interface, simulate_abbm, slope_estimate, symmetric_pair,
    two_block_configuration, CollisionScheme, InterfaceState, SlopeEstimate,
};
pub use bbm::{max_displacement, simulate_bbm, BBMParams};
pub use config::{make_configuration, validate_nontrivial, validate_ordered, Color, Configuration, Particle};
pub use error::{Error, Result};
pub use event::{Event, EventKind, Trajectory};
pub use rng::{RandomStream, StreamKey, ALGORITHM_ID};
