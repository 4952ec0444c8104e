//! Influence-based targeted evasion attacks on graph node classifiers.
//!
//! The planner ranks single-edge toggles at a target node by how much they
//! shift label-propagation influence toward an attacker-chosen class, and
//! checks progress against a linearised graph convolution victim.

pub mod attack;
pub mod data;
pub mod error;
pub mod graph;
pub mod harness;
pub mod influence;
pub mod victim;

pub use error::{Error, ErrorKind, Result};
pub use graph::{ClassId, EdgeOverlay, Graph, NodeId, Topology};
