//! Stochastic recursions on directed random graphs and their branching
//! fixed points.

pub mod error;
pub mod graph;
pub mod io;
pub mod law;
pub mod metrics;
pub mod recursion;
pub mod seed;
pub mod tree;

pub use error::{Error, Result};
pub use graph::{DegreeSequence, DiGraph, GraphMode, IrdSpec, VertexMark};
pub use law::{CountLaw, InitialLaw, ScalarLaw};
pub use metrics::{wasserstein_p, EmpiricalDist};
pub use recursion::{Dynamics, RecursionModel};
pub use seed::{Seed, Stream};
pub use tree::{GWTreeSpec, MarkedTree, SamplePool};
