//! What a coalition of honest-but-curious nodes can learn.
//!
//! Three tools:
//!
//! - [`classify_privacy`] decides from topology and roles alone whether a
//!   private node keeps its value hidden: it does iff at least one of its in-
//!   or out-neighbors is itself private.
//! - [`reconstruct_fully_surrounded`] is the attack for the breached case
//!   where every neighbor is curious: the coalition sees every mass the
//!   target receives and sends during injection, so it recovers each
//!   substate and therefore the initial value.
//! - [`ambiguity_witness`] certifies non-identifiability: it builds a second
//!   ground truth, with the target's value shifted, that produces a
//!   byte-identical coalition view. The check is done by re-running the
//!   simulation, never by argument.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::{run_simulation, NodeSnapshot, SimConfig, SimError, SimTrace};
use crate::graph::{Digraph, NodeId};
use crate::protocol::{Message, Pair, Payload};
use crate::schedule::{validate_schedule, NodeRole, SubstateSchedule};

#[derive(Debug, Error)]
pub enum PrivacyError {
    #[error("node {target} has neighbors outside the coalition: {outside:?}")]
    NotFullySurrounded { target: NodeId, outside: Vec<NodeId> },
    #[error("node {0} is itself in the coalition")]
    TargetInCoalition(NodeId),
    #[error("reconstruction of node {target} failed: {reason}")]
    ReconstructionFailed { target: NodeId, reason: String },
    #[error("delta must be nonzero")]
    ZeroDelta,
    #[error("node {helper} cannot help node {target}: {reason}")]
    BadHelper {
        target: NodeId,
        helper: NodeId,
        reason: &'static str,
    },
    #[error("no exchange between {target} and {helper} is hidden from the coalition")]
    WitnessUnavailable { target: NodeId, helper: NodeId },
    #[error("every shift by {delta} breaks substate distinctness")]
    DistinctnessUnsatisfiable { delta: i64 },
    #[error("none of {tried} alternatives for delta {delta} reproduces the coalition view")]
    NoIndistinguishableAlternative { delta: i64, tried: usize },
    #[error("re-simulation failed: {0}")]
    Sim(#[from] SimError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Classification {
    Preserved,
    Breached,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Preserved => "preserved",
            Classification::Breached => "breached",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Justification {
    /// This private neighbor's exchanges with the target are hidden.
    PrivateNeighbor(NodeId),
    /// The coalition sees every message in and out of the target.
    AllNeighborsCurious,
    /// No private neighbor; the listed neutral neighbors echo what they
    /// receive, so they do not hide anything.
    NeutralPassThrough(Vec<NodeId>),
}

impl fmt::Display for Justification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Justification::PrivateNeighbor(v) => write!(f, "private neighbor {v}"),
            Justification::AllNeighborsCurious => f.write_str("all neighbors curious"),
            Justification::NeutralPassThrough(vs) => {
                let ids: Vec<String> = vs.iter().map(ToString::to_string).collect();
                write!(f, "no private neighbor; neutral pass-through {}", ids.join(" "))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PrivacyVerdict {
    pub target: NodeId,
    pub classification: Classification,
    pub justification: Justification,
}

impl fmt::Display for PrivacyVerdict {
    /// `node,classification,justification`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.target, self.classification, self.justification)
    }
}

/// One verdict per private node, in id order.
pub fn classify_privacy(g: &Digraph, roles: &[NodeRole]) -> Vec<PrivacyVerdict> {
    (0..g.node_count())
        .filter(|&j| roles[j].is_private())
        .map(|target| {
            let nbrs = g.neighbors(target);
            if let Some(&p) = nbrs.iter().find(|&&v| roles[v].is_private()) {
                return PrivacyVerdict {
                    target,
                    classification: Classification::Preserved,
                    justification: Justification::PrivateNeighbor(p),
                };
            }
            let neutral: Vec<_> = nbrs.into_iter().filter(|&v| roles[v] == NodeRole::Neutral).collect();
            PrivacyVerdict {
                target,
                classification: Classification::Breached,
                justification: if neutral.is_empty() {
                    Justification::AllNeighborsCurious
                } else {
                    Justification::NeutralPassThrough(neutral)
                },
            }
        })
        .collect()
}

/// Everything the coalition jointly knows after a run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservationLog {
    pub coalition: BTreeSet<NodeId>,
    /// Per member: `(round, snapshot)` at initialization (`-1`) and at
    /// every round where its snapshot changed.
    pub histories: BTreeMap<NodeId, Vec<(i64, NodeSnapshot)>>,
    /// Every message sent or received by a member, in send order.
    pub messages: Vec<Message>,
}

impl ObservationLog {
    /// Stable text rendering; two logs are indistinguishable iff these
    /// bytes match.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut s = String::new();
        let ids: Vec<String> = self.coalition.iter().map(ToString::to_string).collect();
        let _ = writeln!(s, "coalition {}", ids.join(" "));
        for (id, hist) in &self.histories {
            for (round, snap) in hist {
                let _ = writeln!(
                    s,
                    "node {id} round {round} mass {} state {} s {} rr {}",
                    snap.mass, snap.state, snap.s, snap.rr_cursor
                );
            }
        }
        for m in &self.messages {
            let _ = writeln!(
                s,
                "msg {} {} {} {} {}",
                m.round,
                m.payload.kind(),
                m.src,
                m.dst,
                m.payload.pair()
            );
        }
        s.into_bytes()
    }

    /// SHA-256 of [`Self::canonical_bytes`], hex.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_bytes()))
    }

    pub fn is_empty(&self) -> bool {
        self.coalition.is_empty()
    }

    fn sent_by(&self, node: NodeId) -> impl Iterator<Item = &Message> {
        self.messages.iter().filter(move |m| m.src == node)
    }

    fn sent_to(&self, node: NodeId) -> impl Iterator<Item = &Message> {
        self.messages.iter().filter(move |m| m.dst == node)
    }
}

/// Projects a trace onto what `coalition` can see.
pub fn coalition_observations(trace: &SimTrace, coalition: &BTreeSet<NodeId>) -> ObservationLog {
    let mut histories = BTreeMap::new();
    for &id in coalition {
        let mut hist: Vec<(i64, NodeSnapshot)> = Vec::new();
        for r in trace.records() {
            let snap = r.snapshots[id];
            if hist.last().is_none_or(|(_, prev)| *prev != snap) {
                hist.push((r.round, snap));
            }
        }
        histories.insert(id, hist);
    }
    let messages = trace
        .all_messages()
        .filter(|m| coalition.contains(&m.src) || coalition.contains(&m.dst))
        .copied()
        .collect();
    ObservationLog {
        coalition: coalition.clone(),
        histories,
        messages,
    }
}

/// Recovers the initial value of a target whose every in- and out-neighbor
/// is in the coalition.
///
/// During the injection rounds `0..=dmax` the target forwards its whole
/// mass each round, so each outgoing payload minus what it received that
/// round is exactly the substate it injected. The first substate is its
/// initial broadcast.
pub fn reconstruct_fully_surrounded(
    log: &ObservationLog,
    g: &Digraph,
    target: NodeId,
    dmax: usize,
) -> Result<i64, PrivacyError> {
    if log.coalition.contains(&target) {
        return Err(PrivacyError::TargetInCoalition(target));
    }
    let outside: Vec<_> = g
        .neighbors(target)
        .into_iter()
        .filter(|v| !log.coalition.contains(v))
        .collect();
    if !outside.is_empty() {
        return Err(PrivacyError::NotFullySurrounded { target, outside });
    }
    let fail = |reason: String| PrivacyError::ReconstructionFailed { target, reason };

    let first = log
        .sent_by(target)
        .find(|m| m.round == -1)
        .ok_or_else(|| fail("initial broadcast not observed".into()))?
        .payload
        .pair();
    if first.z != 1 {
        return Err(fail(format!("initial broadcast has weight {}", first.z)));
    }
    let mut substates = vec![first.y];
    for k in 0..=dmax as i64 {
        let mut sent = log
            .sent_by(target)
            .filter(|m| m.round == k && matches!(m.payload, Payload::MassTransfer(_)));
        let out = sent
            .next()
            .ok_or_else(|| fail(format!("no mass transfer observed in round {k}")))?
            .payload
            .pair();
        if sent.next().is_some() {
            return Err(fail(format!("several mass transfers in round {k}")));
        }
        let received = log
            .sent_to(target)
            .filter(|m| m.round == k - 1)
            .filter_map(|m| match m.payload {
                Payload::MassTransfer(p) => Some(p),
                Payload::StateBroadcast(_) => None,
            })
            .fold(if k == 0 { first } else { Pair::ZERO }, |a, p| {
                Pair::new(a.y + p.y, a.z + p.z)
            });
        let injected = Pair::new(out.y - received.y, out.z - received.z);
        if injected.z != 1 {
            return Err(fail(format!(
                "round {k} accounts for weight {}, expected 1",
                injected.z
            )));
        }
        substates.push(injected.y);
    }
    let sum: i64 = substates.iter().sum();
    let count = dmax as i64 + 2;
    if sum % count != 0 {
        return Err(fail(format!("substates sum to {sum}, not a multiple of {count}")));
    }
    Ok(sum / count)
}

/// A second ground truth the coalition cannot tell apart from the real one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AmbiguityWitness {
    pub target: NodeId,
    pub helper: NodeId,
    pub delta: i64,
    /// Substate indices shifted in the target's and helper's schedules.
    pub shifted: (usize, usize),
    pub original_target_y0: i64,
    pub original_helper_y0: i64,
    pub target_schedule: SubstateSchedule,
    pub helper_schedule: SubstateSchedule,
    /// Digest of the (identical) coalition view under both ground truths.
    pub log_digest: String,
}

impl AmbiguityWitness {
    /// Structured text record.
    pub fn record(&self) -> String {
        let join = |v: &[i64]| v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(
            s,
            "witness target={} helper={} delta={}",
            self.target, self.helper, self.delta
        );
        let _ = writeln!(
            s,
            "  original target_y0={} helper_y0={}",
            self.original_target_y0, self.original_helper_y0
        );
        let _ = writeln!(
            s,
            "  alternative target_y0={} helper_y0={}",
            self.target_schedule.y0, self.helper_schedule.y0
        );
        let _ = writeln!(s, "  alternative target_uy={}", join(&self.target_schedule.uy));
        let _ = writeln!(s, "  alternative helper_uy={}", join(&self.helper_schedule.uy));
        let _ = writeln!(s, "  shifted_indices={},{}", self.shifted.0, self.shifted.1);
        let _ = writeln!(s, "  log_sha256={}", self.log_digest);
        s
    }
}

fn shift_schedule(s: &SubstateSchedule, index: usize, by: i64, y0_by: i64) -> Option<SubstateSchedule> {
    let mut out = s.clone();
    out.uy[index] = out.uy[index].checked_add(by)?;
    out.y0 = out.y0.checked_add(y0_by)?;
    Some(out)
}

/// Substate index pairs `(target, helper)` to try, most promising first:
/// a hidden transfer sent during injection and absorbed by the receiver's
/// own injection in the next round leaves every outgoing payload unchanged.
fn candidate_shifts(trace: &SimTrace, target: NodeId, helper: NodeId) -> Vec<(usize, usize)> {
    let dmax = trace.dmax as i64;
    let mut ordered = Vec::new();
    for m in trace.all_messages() {
        if m.round < 0 || m.round >= dmax || !matches!(m.payload, Payload::MassTransfer(_)) {
            continue;
        }
        let (sent, absorbed) = (m.round as usize + 1, m.round as usize + 2);
        if m.src == target && m.dst == helper {
            ordered.push((sent, absorbed));
        } else if m.src == helper && m.dst == target {
            ordered.push((absorbed, sent));
        }
    }
    let len = trace.dmax + 2;
    for a in 0..len {
        for b in 0..len {
            ordered.push((a, b));
        }
    }
    let mut seen = BTreeSet::new();
    ordered.retain(|c| seen.insert(*c));
    ordered
}

/// The inputs that produced a trace.
#[derive(Clone, Copy, Debug)]
pub struct GroundTruth<'a> {
    pub graph: &'a Digraph,
    pub schedules: &'a [SubstateSchedule],
    pub roles: &'a [NodeRole],
}

/// Searches for an alternative ground truth in which the target's initial
/// value is `delta` higher and the helper's `delta` lower, and which yields
/// the same coalition view as `log`.
pub fn ambiguity_witness(
    trace: &SimTrace,
    log: &ObservationLog,
    truth: GroundTruth<'_>,
    target: NodeId,
    helper: NodeId,
    delta: i64,
) -> Result<AmbiguityWitness, PrivacyError> {
    let GroundTruth {
        graph: g,
        schedules,
        roles,
    } = truth;
    if delta == 0 {
        return Err(PrivacyError::ZeroDelta);
    }
    if log.coalition.contains(&target) {
        return Err(PrivacyError::TargetInCoalition(target));
    }
    let bad = |reason| PrivacyError::BadHelper { target, helper, reason };
    if helper == target || !g.neighbors(target).contains(&helper) {
        return Err(bad("not a neighbor"));
    }
    if log.coalition.contains(&helper) {
        return Err(bad("in the coalition"));
    }
    if !roles[helper].is_private() {
        return Err(bad("not private"));
    }
    let hidden = trace.all_messages().any(|m| {
        matches!(m.payload, Payload::MassTransfer(_))
            && ((m.src == target && m.dst == helper) || (m.src == helper && m.dst == target))
            && !log.coalition.contains(&m.src)
            && !log.coalition.contains(&m.dst)
    });
    if !hidden {
        return Err(PrivacyError::WitnessUnavailable { target, helper });
    }

    let dmax = trace.dmax;
    let shift = delta
        .checked_mul(dmax as i64 + 2)
        .ok_or(PrivacyError::DistinctnessUnsatisfiable { delta })?;
    let expected = log.canonical_bytes();
    let cfg = SimConfig {
        max_rounds: None,
        quiescence_window: Some(trace.quiescence_window),
    };
    let mut tried = 0;
    for (a, b) in candidate_shifts(trace, target, helper) {
        let (Some(t), Some(h)) = (
            shift_schedule(&schedules[target], a, shift, delta),
            shift_schedule(&schedules[helper], b, -shift, -delta),
        ) else {
            continue;
        };
        if !validate_schedule(&t, dmax, roles[target]).is_empty()
            || !validate_schedule(&h, dmax, roles[helper]).is_empty()
        {
            continue;
        }
        tried += 1;
        let mut alt = schedules.to_vec();
        alt[target] = t;
        alt[helper] = h;
        let (alt_trace, alt_report) = run_simulation(g, &alt, cfg)?;
        if !alt_report.passed() {
            continue;
        }
        let alt_log = coalition_observations(&alt_trace, &log.coalition);
        if alt_log.canonical_bytes() == expected {
            return Ok(AmbiguityWitness {
                target,
                helper,
                delta,
                shifted: (a, b),
                original_target_y0: schedules[target].y0,
                original_helper_y0: schedules[helper].y0,
                target_schedule: alt[target].clone(),
                helper_schedule: alt[helper].clone(),
                log_digest: alt_log.digest(),
            });
        }
    }
    if tried == 0 {
        Err(PrivacyError::DistinctnessUnsatisfiable { delta })
    } else {
        Err(PrivacyError::NoIndistinguishableAlternative { delta, tried })
    }
}

/// Runs [`ambiguity_witness`] for each delta and collects the initial
/// values of the target that the coalition cannot rule out, the true one
/// included.
pub fn consistent_values(
    trace: &SimTrace,
    log: &ObservationLog,
    truth: GroundTruth<'_>,
    target: NodeId,
    helper: NodeId,
    deltas: impl IntoIterator<Item = i64>,
) -> (BTreeSet<i64>, Vec<Result<AmbiguityWitness, PrivacyError>>) {
    let mut values = BTreeSet::from([truth.schedules[target].y0]);
    let results: Vec<_> = deltas
        .into_iter()
        .map(|d| ambiguity_witness(trace, log, truth, target, helper, d))
        .collect();
    for w in results.iter().flatten() {
        values.insert(w.target_schedule.y0);
    }
    (values, results)
}
