//! Privacy-preserving, event-triggered quantized average consensus on
//! directed graphs.
//!
//! Every node starts with an integer and ends holding the exact network
//! average as a ratio of two integers, after which all transmissions stop.
//! Nodes that want privacy split their value into several distinct
//! substates and inject them one per round, so their neighbors never see
//! the value itself.
//!
//! - [`graph`]: digraphs, strong connectivity, random generation.
//! - [`schedule`]: substate decompositions and their constraints.
//! - [`protocol`]: the per-node state machine.
//! - [`engine`]: the synchronous-round simulator and its audits.
//! - [`privacy`]: topology classification and executable attacks.
//! - [`experiments`]: trial configuration, batches, CSV output.

pub mod engine;
pub mod experiments;
pub mod graph;
pub mod privacy;
pub mod protocol;
pub mod schedule;

pub use engine::{run_simulation, ExactAverage, SimConfig, SimTrace, TrialReport};
pub use graph::{Digraph, NodeId};
pub use protocol::{Message, NodeState, Pair, Payload};
pub use schedule::{NodeRole, SubstateSchedule};
