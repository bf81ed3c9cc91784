//! Approximate model counting for non-deterministic free binary decision
//! diagrams.
//!
//! [`diagram`] holds the data model and brute-force oracle, [`transform`]
//! brings diagrams into the layered normal form the sampler needs,
//! [`fpras`] is the randomized counter, [`paths`] and [`harness`] check its
//! claims, and [`io`] reads, writes and generates diagrams.

pub mod cli;
pub mod diagram;
pub mod fpras;
pub mod harness;
pub mod io;
pub mod paths;
pub mod transform;

pub use diagram::{Assignment, DiagramError, LayerIndex, Nfbdd, NfbddBuilder, Node, NodeId, Var};
pub use fpras::{approx_count, approx_count_with, params_from, CountConfig, CountReport, FprasParams};
pub use transform::{normalize, NormalForm};
