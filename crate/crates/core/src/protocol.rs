//! Per-node state machine of the event-triggered quantized averaging
//! protocol with substate injection and transmission stopping.
//!
//! A node holds a *mass* `(y, z)` that it hands off whole to one
//! out-neighbor at a time, and a *state* `(y, z)` recording the largest mass
//! it has heard of. Pairs are ordered lexicographically by `z` first, then
//! `y`. Once every remaining mass is equal, nobody has a reason to transmit
//! and the network goes silent with every state at the exact average.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::graph::NodeId;
use crate::schedule::SubstateSchedule;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("node {node} got a message addressed to {dst}")]
    Misrouted { node: NodeId, dst: NodeId },
    #[error("node {node} overflowed 64-bit arithmetic in round {round}")]
    Overflow { node: NodeId, round: i64 },
    #[error("node {0} has no out-neighbors")]
    NoOutNeighbors(NodeId),
}

/// Integer pair `(y, z)` ordered by `z`, then `y`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Pair {
    pub y: i64,
    pub z: i64,
}

impl Pair {
    pub const ZERO: Pair = Pair { y: 0, z: 0 };

    pub const fn new(y: i64, z: i64) -> Self {
        Self { y, z }
    }

    pub fn is_zero(self) -> bool {
        self == Self::ZERO
    }

    pub fn checked_add(self, other: Pair) -> Option<Pair> {
        Some(Pair {
            y: self.y.checked_add(other.y)?,
            z: self.z.checked_add(other.z)?,
        })
    }

    /// `y / z == num / den`, by cross-multiplication.
    pub fn ratio_equals(self, num: i64, den: i64) -> bool {
        self.z != 0 && self.y as i128 * den as i128 == num as i128 * self.z as i128
    }
}

impl Ord for Pair {
    fn cmp(&self, other: &Self) -> Ordering {
        self.z.cmp(&other.z).then(self.y.cmp(&other.y))
    }
}

impl PartialOrd for Pair {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.y, self.z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Payload {
    /// The sender's state; one copy goes to every out-neighbor.
    StateBroadcast(Pair),
    /// The sender's whole mass, to one out-neighbor.
    MassTransfer(Pair),
}

impl Payload {
    pub fn pair(self) -> Pair {
        match self {
            Payload::StateBroadcast(p) | Payload::MassTransfer(p) => p,
        }
    }

    pub fn kind(self) -> &'static str {
        match self {
            Payload::StateBroadcast(_) => "state",
            Payload::MassTransfer(_) => "mass",
        }
    }
}

/// One delivered copy of a transmission. `round` is the round it was sent
/// in; initialization broadcasts carry round `-1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Message {
    pub round: i64,
    pub src: NodeId,
    pub dst: NodeId,
    pub payload: Payload,
}

/// Which event-trigger condition sets fired during one call.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Triggers {
    /// A received state beat ours and was adopted.
    pub adopted_received: bool,
    /// Our own mass beat our state and was promoted.
    pub promoted_mass: bool,
    /// Our mass is a follower and must be handed off.
    pub release_mass: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeState {
    pub id: NodeId,
    pub mass: Pair,
    pub state: Pair,
    /// Substate counter: index of the next substate to inject.
    pub s: usize,
    pub s_br: bool,
    pub m_tr: bool,
    /// Position in `out_order` of the next mass recipient.
    pub rr_cursor: usize,
    pub out_order: Arc<[NodeId]>,
    pub schedule: Arc<SubstateSchedule>,
}

/// Result of one [`NodeState::step`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StepOutput {
    pub outbox: Vec<Message>,
    /// `None` when nothing was received and the triggers were skipped.
    pub triggers: Option<Triggers>,
    pub broadcast: bool,
    pub transferred: Option<Pair>,
}

/// Sets up a node: the first substate becomes both its mass and its
/// state, and that state is broadcast to every out-neighbor.
pub fn init_node(
    id: NodeId,
    schedule: Arc<SubstateSchedule>,
    out_order: Arc<[NodeId]>,
) -> Result<(NodeState, Vec<Message>), ProtocolError> {
    if out_order.is_empty() {
        return Err(ProtocolError::NoOutNeighbors(id));
    }
    let first = Pair::new(schedule.uy_at(0), schedule.uz_at(0));
    let node = NodeState {
        id,
        mass: first,
        state: first,
        s: 1,
        s_br: false,
        m_tr: false,
        rr_cursor: 0,
        out_order,
        schedule,
    };
    let outbox = node.broadcast(-1);
    Ok((node, outbox))
}

/// Runs the three trigger condition sets in order against the node's
/// current (already merged) mass. Later conditions see the state as left by
/// earlier ones.
pub fn apply_event_triggers(node: &mut NodeState, received_states: &[Pair]) -> Triggers {
    let mut t = Triggers::default();

    if let Some(&best) = received_states.iter().max() {
        if best > node.state {
            node.state = best;
            node.s_br = true;
            t.adopted_received = true;
        }
    }

    if node.mass > node.state {
        node.state = node.mass;
        node.s_br = true;
        t.promoted_mass = true;
    }

    let m = node.mass;
    let st = node.state;
    if (0 < m.z && m.z < st.z) || (m.z == st.z && m.y < st.y) {
        node.m_tr = true;
        t.release_mass = true;
    }
    t
}

impl NodeState {
    pub fn out_degree(&self) -> usize {
        self.out_order.len()
    }

    fn broadcast(&self, round: i64) -> Vec<Message> {
        self.out_order
            .iter()
            .map(|&dst| Message {
                round,
                src: self.id,
                dst,
                payload: Payload::StateBroadcast(self.state),
            })
            .collect()
    }

    /// One synchronous iteration. `inbox` holds exactly the messages sent
    /// to this node in the previous round; the returned outbox is delivered
    /// in the next one.
    pub fn step(&mut self, inbox: &[Message], round: i64) -> Result<StepOutput, ProtocolError> {
        let overflow = ProtocolError::Overflow { node: self.id, round };
        let mut received = Vec::new();
        for msg in inbox {
            if msg.dst != self.id {
                return Err(ProtocolError::Misrouted {
                    node: self.id,
                    dst: msg.dst,
                });
            }
            match msg.payload {
                Payload::MassTransfer(p) => {
                    self.mass = self.mass.checked_add(p).ok_or_else(|| overflow.clone())?;
                }
                Payload::StateBroadcast(p) => received.push(p),
            }
        }

        let mut out = StepOutput::default();
        if !inbox.is_empty() {
            out.triggers = Some(apply_event_triggers(self, &received));
        }

        // Forced hand-off while substates remain.
        self.m_tr |= self.schedule.uz_at(self.s) == 1;

        if self.m_tr {
            let inject = Pair::new(self.schedule.uy_at(self.s), self.schedule.uz_at(self.s));
            let sent = self.mass.checked_add(inject).ok_or(overflow)?;
            let dst = self.out_order[self.rr_cursor];
            self.rr_cursor = (self.rr_cursor + 1) % self.out_order.len();
            out.outbox.push(Message {
                round,
                src: self.id,
                dst,
                payload: Payload::MassTransfer(sent),
            });
            out.transferred = Some(sent);
            self.mass = Pair::ZERO;
            self.m_tr = false;
            self.s += 1;
        }

        if self.s_br {
            out.outbox.extend(self.broadcast(round));
            out.broadcast = true;
            self.s_br = false;
        }
        Ok(out)
    }

    /// True once every substate has been injected.
    pub fn schedule_exhausted(&self) -> bool {
        self.s >= self.schedule.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(y0: i64, uy: Vec<i64>, out: &[NodeId]) -> (NodeState, Vec<Message>) {
        let sched = Arc::new(SubstateSchedule::from_substates(y0, uy));
        init_node(0, sched, out.into()).unwrap()
    }

    fn bare(state: Pair, mass: Pair) -> NodeState {
        let (mut n, _) = node(0, vec![0, 0, 0], &[1]);
        n.state = state;
        n.mass = mass;
        n
    }

    #[test]
    fn lexicographic_order() {
        assert!(Pair::new(0, 2) > Pair::new(100, 1));
        assert!(Pair::new(5, 1) > Pair::new(3, 1));
        assert_eq!(Pair::new(3, 1).cmp(&Pair::new(3, 1)), Ordering::Equal);
    }

    #[test]
    fn init_uses_first_substate() {
        let (n, out) = node(4, vec![1, 8, 6, 2, 3], &[1, 2]);
        assert_eq!(n.mass, Pair::new(1, 1));
        assert_eq!(n.state, Pair::new(1, 1));
        assert_eq!(n.s, 1);
        assert!(!n.s_br && !n.m_tr);
        assert_eq!(out.len(), 2);
        assert!(out
            .iter()
            .all(|m| m.round == -1 && m.payload == Payload::StateBroadcast(Pair::new(1, 1))));
    }

    #[test]
    fn init_public_node() {
        let sched = Arc::new(SubstateSchedule::public(7, 1));
        let (n, out) = init_node(3, sched, vec![0].into()).unwrap();
        assert_eq!((n.mass, n.state), (Pair::new(7, 1), Pair::new(7, 1)));
        assert_eq!(out[0].payload, Payload::StateBroadcast(Pair::new(7, 1)));
        assert!(n.state.ratio_equals(7, 1));
    }

    #[test]
    fn init_rejects_sink() {
        let sched = Arc::new(SubstateSchedule::public(7, 1));
        assert_eq!(
            init_node(3, sched, Vec::new().into()).unwrap_err(),
            ProtocolError::NoOutNeighbors(3)
        );
    }

    #[test]
    fn received_state_with_larger_weight_is_adopted() {
        let mut n = bare(Pair::new(3, 1), Pair::ZERO);
        let t = apply_event_triggers(&mut n, &[Pair::new(0, 2)]);
        assert_eq!(n.state, Pair::new(0, 2));
        assert!(n.s_br && t.adopted_received && !t.promoted_mass);
    }

    #[test]
    fn received_ties_break_on_y() {
        let mut n = bare(Pair::new(3, 1), Pair::ZERO);
        apply_event_triggers(&mut n, &[Pair::new(1, 2), Pair::new(9, 2), Pair::new(50, 1)]);
        assert_eq!(n.state, Pair::new(9, 2));
    }

    #[test]
    fn own_mass_with_larger_y_is_promoted() {
        let mut n = bare(Pair::new(3, 1), Pair::new(5, 1));
        let t = apply_event_triggers(&mut n, &[]);
        assert_eq!(n.state, Pair::new(5, 1));
        assert!(n.s_br && t.promoted_mass && !t.release_mass);
    }

    #[test]
    fn lighter_mass_is_released() {
        let mut n = bare(Pair::new(4, 2), Pair::new(9, 1));
        let t = apply_event_triggers(&mut n, &[]);
        assert_eq!(n.state, Pair::new(4, 2));
        assert!(n.m_tr && t.release_mass && !n.s_br);
    }

    #[test]
    fn zero_mass_never_released() {
        let mut n = bare(Pair::new(4, 2), Pair::ZERO);
        let t = apply_event_triggers(&mut n, &[Pair::new(1, 1)]);
        assert!(!t.release_mass && !n.m_tr);
    }

    #[test]
    fn idle_node_after_schedule_does_nothing() {
        let (mut n, _) = node(0, vec![1, -1, 0], &[1]);
        n.s = 3;
        n.mass = Pair::ZERO;
        let before = n.clone();
        let out = n.step(&[], 10).unwrap();
        assert!(out.outbox.is_empty() && out.triggers.is_none());
        assert_eq!(n, before);
    }

    #[test]
    fn misrouted_message_is_rejected() {
        let (mut n, _) = node(0, vec![1, -1, 0], &[1]);
        let m = Message {
            round: 0,
            src: 1,
            dst: 5,
            payload: Payload::MassTransfer(Pair::new(1, 1)),
        };
        assert_eq!(
            n.step(&[m], 1).unwrap_err(),
            ProtocolError::Misrouted { node: 0, dst: 5 }
        );
    }

    #[test]
    fn overflow_is_reported() {
        let (mut n, _) = node(0, vec![1, -1, 0], &[1]);
        let m = Message {
            round: 0,
            src: 1,
            dst: 0,
            payload: Payload::MassTransfer(Pair::new(i64::MAX, 1)),
        };
        assert_eq!(
            n.step(&[m], 1).unwrap_err(),
            ProtocolError::Overflow { node: 0, round: 1 }
        );
    }

    #[test]
    fn round_robin_cycles_through_out_order() {
        let sched = Arc::new(SubstateSchedule::public(1, 3));
        let (mut n, _) = init_node(0, sched, vec![2, 1, 3].into()).unwrap();
        let dsts: Vec<_> = (0..4).map(|k| n.step(&[], k).unwrap().outbox[0].dst).collect();
        assert_eq!(dsts, vec![2, 1, 3, 2]);
        assert!(n.schedule_exhausted());
    }
}
