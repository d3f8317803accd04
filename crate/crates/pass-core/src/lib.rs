//! Core algorithms for pinching-antenna system (PASS) simulation: channel
//! geometry, convex beamforming subproblems, particle-swarm pinching design,
//! the waveguide-multiplexing and waveguide-switching protocol solvers, and
//! the SE-EE tradeoff sweep driver.
//!
//! Everything is deterministic given explicit seeds; there is no global state.

pub mod channel;
pub mod convex;
pub mod pso;
pub mod seed;
pub mod tradeoff;
pub mod wm;
pub mod ws;

pub use channel::{ChannelMatrix, PinchingLayout, SystemConfig, UserPos, UserSet};
pub use convex::{PowerAllocation, SdpProblem, SdpSolution, SolveError};
pub use pso::{PsoHyperparams, PsoResult};
pub use tradeoff::{Protocol, TradeoffCurve, TradeoffPoint};
pub use wm::WmSolution;
pub use ws::WsSolution;
