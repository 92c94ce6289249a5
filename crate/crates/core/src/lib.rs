//! Random walks among random conductances on `Z^d` (`d >= 3`), discrete
//! Hausdorff and packing dimensions of their ranges, and the lattice potential
//! theory (Green functions, capacities, Wiener series) behind them.

pub mod environment;
pub mod fractal;
pub mod geometry;
pub mod potential;
pub mod walk;

pub use environment::{canonical_edge, ConductanceLaw, Edge, EnvError, Environment, LatticePoint, Model};
pub use walk::{Clock, StopReason, StopRule, Trajectory, WalkError, Walker};

/// Crate version, recorded in experiment provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
