//! Generalized Pólya urn with graph-based interactions.
//!
//! Bins sit on the vertices of a graph (or hypergraph); every step each edge
//! awards one ball to one of its endpoints with probability proportional to a
//! power of the current ball counts. The crate simulates the process, exposes
//! its mean-field vector field and Lyapunov function, enumerates and classifies
//! equilibria, and runs Monte Carlo ensembles against the predicted limits.

pub mod cli;
pub mod dynamics;
pub mod equilibria;
pub mod experiments;
pub mod graph;
pub mod model;
pub mod report;
pub mod scalar;
pub mod urn;
pub mod verify;

pub use graph::{Family, Graph, GraphError, Hypergraph};
pub use model::{FieldSpec, Model, ModelError, Topology};
pub use scalar::Scalar;
pub use urn::{CheckpointSchedule, RngSpec, UrnError, UrnState};

/// Double-precision simplex point, the type the simulation and reports use.
pub type Point = dynamics::SimplexPoint<f64>;
/// Single-precision simplex point.
pub type Point32 = dynamics::SimplexPoint<f32>;
pub type Trajectory = dynamics::Trajectory<f64>;
