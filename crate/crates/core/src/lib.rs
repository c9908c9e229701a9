//! Graph-structured matching pursuit.
//!
//! Minimizes a differentiable cost `f(x)` subject to `supp(x)` lying in the
//! graph-structured sparsity model `M(k, g)`, using approximate head and tail
//! projections built on prize-collecting Steiner forests.

pub mod bench;
pub mod detect;
pub mod error;
pub mod exact;
pub mod graph;
pub mod objectives;
pub mod pcsf;
pub mod projection;
pub mod solver;
pub mod synth;
pub mod unionfind;
pub mod vector;
pub mod verify;

pub use error::{Error, Result};
pub use graph::{gamma, in_model, load_graph, support_of, Graph, NodeMap, SparsityModel, Support};
