//! Synchronous-round simulator.
//!
//! Messages sent in round `k` are delivered, exactly once, at round `k+1`;
//! initialization broadcasts (round `-1`) are delivered at round 0. The
//! engine observes the network from outside: it detects quiescence and
//! convergence and audits the run, but the nodes stop on their own.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::sync::Arc;

use num_integer::Integer;
use thiserror::Error;

use crate::graph::{is_strongly_connected, max_out_degree, Digraph, NodeId};
use crate::protocol::{init_node, Message, NodeState, Pair, Payload, ProtocolError, Triggers};
use crate::schedule::{validate_schedule, NodeRole, SubstateSchedule, Violation};

/// Header of the per-round trace CSV.
pub const TRACE_CSV_HEADER: &str = "round,state_broadcasts,mass_transfers,transmitting_nodes,converged_nodes";
/// Header of the message log.
pub const MESSAGE_LOG_HEADER: &str = "round,kind,src,dst,y,z";

#[derive(Debug, Error)]
pub enum SimError {
    #[error("digraph is not strongly connected")]
    NotStronglyConnected,
    #[error("expected {expected} schedules, got {got}")]
    ScheduleCount { expected: usize, got: usize },
    #[error("schedule of node {node} is malformed: {violations:?}")]
    BadSchedule { node: NodeId, violations: Vec<Violation> },
    #[error("quiescence window must be at least 1")]
    ZeroWindow,
    #[error("initialization failed: {0}")]
    Init(ProtocolError),
    #[error("{source} (trace kept up to round {})", trace.last_round())]
    Protocol {
        #[source]
        source: ProtocolError,
        trace: Box<SimTrace>,
    },
}

/// Exact average `num / den` in lowest terms, `den > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ExactAverage {
    pub num: i64,
    pub den: i64,
}

impl ExactAverage {
    pub fn new(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        let g = num.gcd(&den).max(1);
        let sign = if den < 0 { -1 } else { 1 };
        Self {
            num: sign * num / g,
            den: sign * den / g,
        }
    }

    pub fn of(values: impl IntoIterator<Item = i64>) -> Self {
        let (sum, n) = values.into_iter().fold((0i64, 0i64), |(s, c), v| (s + v, c + 1));
        Self::new(sum, n)
    }

    pub fn matches(&self, p: Pair) -> bool {
        p.ratio_equals(self.num, self.den)
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl std::fmt::Display for ExactAverage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// What one node looked like at the end of a round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeSnapshot {
    pub mass: Pair,
    pub state: Pair,
    pub s: usize,
    pub rr_cursor: usize,
}

impl From<&NodeState> for NodeSnapshot {
    fn from(n: &NodeState) -> Self {
        Self {
            mass: n.mass,
            state: n.state,
            s: n.s,
            rr_cursor: n.rr_cursor,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundRecord {
    pub round: i64,
    /// Every copy sent this round, delivered next round.
    pub messages: Vec<Message>,
    pub snapshots: Vec<NodeSnapshot>,
    /// Trigger outcome per node; `None` where nothing was received.
    pub triggers: Vec<Option<Triggers>>,
    /// Broadcast events, one per broadcasting node.
    pub state_broadcasts: usize,
    pub mass_transfers: usize,
    pub transmitting_nodes: usize,
}

impl RoundRecord {
    /// Broadcast copies (one per out-neighbor reached).
    pub fn broadcast_copies(&self) -> usize {
        self.messages
            .iter()
            .filter(|m| matches!(m.payload, Payload::StateBroadcast(_)))
            .count()
    }

    pub fn in_flight_mass(&self) -> impl Iterator<Item = Pair> + '_ {
        self.messages.iter().filter_map(|m| match m.payload {
            Payload::MassTransfer(p) => Some(p),
            Payload::StateBroadcast(_) => None,
        })
    }

    pub fn converged_nodes(&self, q: ExactAverage) -> usize {
        self.snapshots.iter().filter(|s| q.matches(s.state)).count()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimTrace {
    pub n: usize,
    pub dmax: usize,
    pub average: ExactAverage,
    /// Initialization (round `-1`): the initial broadcasts and states.
    pub init: RoundRecord,
    /// Rounds `0, 1, ...` in order.
    pub rounds: Vec<RoundRecord>,
    pub quiescence_round: Option<i64>,
    pub quiescence_window: usize,
}

impl SimTrace {
    pub fn last_round(&self) -> i64 {
        self.rounds.last().map_or(-1, |r| r.round)
    }

    /// Initialization followed by every round.
    pub fn records(&self) -> impl Iterator<Item = &RoundRecord> {
        std::iter::once(&self.init).chain(&self.rounds)
    }

    pub fn all_messages(&self) -> impl Iterator<Item = &Message> {
        self.records().flat_map(|r| &r.messages)
    }

    pub fn final_states(&self) -> Vec<Pair> {
        self.rounds
            .last()
            .unwrap_or(&self.init)
            .snapshots
            .iter()
            .map(|s| s.state)
            .collect()
    }

    /// Per-round CSV with [`TRACE_CSV_HEADER`].
    pub fn write_round_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{TRACE_CSV_HEADER}")?;
        for r in &self.rounds {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.round,
                r.state_broadcasts,
                r.mass_transfers,
                r.transmitting_nodes,
                r.converged_nodes(self.average)
            )?;
        }
        Ok(())
    }

    pub fn round_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_round_csv(&mut buf).expect("writing to a Vec");
        String::from_utf8(buf).expect("ascii")
    }

    /// Line-per-copy message log with [`MESSAGE_LOG_HEADER`].
    pub fn write_message_log<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{MESSAGE_LOG_HEADER}")?;
        for m in self.all_messages() {
            let p = m.payload.pair();
            writeln!(
                w,
                "{},{},{},{},{},{}",
                m.round,
                m.payload.kind(),
                m.src,
                m.dst,
                p.y,
                p.z
            )?;
        }
        Ok(())
    }
}

/// Knobs of a single run; `None` picks the default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SimConfig {
    /// Latest round at which quiescence may be detected. Defaults to the
    /// convergence bound of the network.
    pub max_rounds: Option<u64>,
    /// Silent rounds observed from the quiescence round on. Defaults to
    /// `5 n`.
    pub quiescence_window: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConservationVerdict {
    /// `(dmax + 2) * (sum of initial values, n)`.
    pub expected: Pair,
    /// First record (round index, `-1` for initialization) where the books
    /// do not balance.
    pub first_violation: Option<i64>,
}

impl ConservationVerdict {
    pub fn holds(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Monitor of the leading-mass dominance property: no node's state exceeds
/// the largest mass in the network.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DominanceVerdict {
    /// First round after the injection phase with a violation.
    pub first_violation: Option<i64>,
    /// Violations observed during the injection phase (logged only).
    pub injection_phase_exceedances: usize,
}

/// Monitor of the absorption property: once every nonzero mass is equal,
/// no mass is promoted again and traffic dies out within `n - 1` rounds.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AbsorptionVerdict {
    pub all_leading_round: Option<i64>,
    pub promotion_after: Option<i64>,
    pub last_emission: Option<i64>,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditReport {
    pub conservation: ConservationVerdict,
    pub dominance: DominanceVerdict,
    pub absorption: AbsorptionVerdict,
    /// Every final state equals the exact average.
    pub exact: bool,
    pub within_bound: bool,
    /// No message during the observed window after quiescence.
    pub silent_after_quiescence: bool,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.conservation.holds()
            && self.dominance.first_violation.is_none()
            && self.absorption.holds
            && self.exact
            && self.within_bound
            && self.silent_after_quiescence
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrialReport {
    pub n: usize,
    pub m: usize,
    pub dmax: usize,
    pub average: ExactAverage,
    pub convergence_round: Option<i64>,
    pub quiescence_round: Option<i64>,
    /// Transmissions in rounds `>= 0`, each broadcast counted once.
    pub tx_broadcast_as_one: u64,
    /// Transmissions in rounds `>= 0`, each broadcast counted per recipient.
    pub tx_broadcast_as_fanout: u64,
    pub bound: u64,
    pub final_states: Vec<Pair>,
    pub audit: AuditReport,
}

impl TrialReport {
    pub fn converged(&self) -> bool {
        self.convergence_round.is_some() && self.quiescence_round.is_some()
    }

    pub fn passed(&self) -> bool {
        self.converged() && self.audit.passed()
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "m = {}", self.m);
        let _ = writeln!(s, "dmax = {}", self.dmax);
        let _ = writeln!(s, "average = {}", self.average);
        let _ = writeln!(s, "convergence_round = {}", opt(self.convergence_round));
        let _ = writeln!(s, "quiescence_round = {}", opt(self.quiescence_round));
        let _ = writeln!(s, "tx_broadcast_as_one = {}", self.tx_broadcast_as_one);
        let _ = writeln!(s, "tx_broadcast_as_fanout = {}", self.tx_broadcast_as_fanout);
        let _ = writeln!(s, "bound = {}", self.bound);
        let a = &self.audit;
        let _ = writeln!(s, "audit.conservation = {}", a.conservation.holds());
        let _ = writeln!(s, "audit.dominance = {}", a.dominance.first_violation.is_none());
        let _ = writeln!(s, "audit.absorption = {}", a.absorption.holds);
        let _ = writeln!(s, "audit.exact = {}", a.exact);
        let _ = writeln!(s, "audit.within_bound = {}", a.within_bound);
        let _ = writeln!(s, "audit.silent_after_quiescence = {}", a.silent_after_quiescence);
        let states: Vec<String> = self.final_states.iter().map(ToString::to_string).collect();
        let _ = writeln!(s, "final_states = {}", states.join(","));
        s
    }
}

fn opt(v: Option<i64>) -> String {
    v.map_or_else(|| "none".into(), |v| v.to_string())
}

/// `1 + dmax + n^2 + (n - 1) m^2`.
pub fn theoretical_bound(n: u64, m: u64, dmax: u64) -> u64 {
    1 + dmax + n * n + (n - 1) * m * m
}

fn record(round: i64, nodes: &[NodeState], messages: Vec<Message>, triggers: Vec<Option<Triggers>>) -> RoundRecord {
    let mut broadcasters = vec![false; nodes.len()];
    let mut senders = vec![false; nodes.len()];
    let mut mass_transfers = 0;
    for m in &messages {
        senders[m.src] = true;
        match m.payload {
            Payload::StateBroadcast(_) => broadcasters[m.src] = true,
            Payload::MassTransfer(_) => mass_transfers += 1,
        }
    }
    RoundRecord {
        round,
        snapshots: nodes.iter().map(NodeSnapshot::from).collect(),
        triggers,
        state_broadcasts: broadcasters.iter().filter(|&&b| b).count(),
        mass_transfers,
        transmitting_nodes: senders.iter().filter(|&&b| b).count(),
        messages,
    }
}

fn check_inputs(g: &Digraph, schedules: &[SubstateSchedule], dmax: usize) -> Result<(), SimError> {
    if !is_strongly_connected(g) {
        return Err(SimError::NotStronglyConnected);
    }
    if schedules.len() != g.node_count() {
        return Err(SimError::ScheduleCount {
            expected: g.node_count(),
            got: schedules.len(),
        });
    }
    for (node, s) in schedules.iter().enumerate() {
        // Role-independent constraints only; distinctness is the caller's
        // business.
        let violations: Vec<_> = validate_schedule(s, dmax, NodeRole::Private)
            .into_iter()
            .filter(|v| {
                matches!(
                    v,
                    Violation::Length { .. } | Violation::UnitWeight { .. } | Violation::SumMismatch { .. }
                )
            })
            .collect();
        if !violations.is_empty() {
            return Err(SimError::BadSchedule { node, violations });
        }
    }
    Ok(())
}

/// Runs the protocol on `g` until quiescence has been observed for the
/// configured window, or until `max_rounds` passes without quiescence.
///
/// A run that never quiesces still returns `Ok`; its report has no
/// quiescence round and fails its audits.
pub fn run_simulation(
    g: &Digraph,
    schedules: &[SubstateSchedule],
    cfg: SimConfig,
) -> Result<(SimTrace, TrialReport), SimError> {
    let n = g.node_count();
    let m = g.edge_count();
    let dmax = max_out_degree(g);
    check_inputs(g, schedules, dmax)?;
    let window = cfg.quiescence_window.unwrap_or(5 * n);
    if window == 0 {
        return Err(SimError::ZeroWindow);
    }
    let bound = theoretical_bound(n as u64, m as u64, dmax as u64);
    let max_rounds = cfg.max_rounds.unwrap_or(bound) as i64;
    let average = ExactAverage::of(schedules.iter().map(|s| s.y0));

    let mut nodes = Vec::with_capacity(n);
    let mut in_flight = Vec::new();
    for (j, s) in schedules.iter().enumerate() {
        let (node, out) = init_node(j, Arc::new(s.clone()), g.out_neighbors(j).into()).map_err(SimError::Init)?;
        nodes.push(node);
        in_flight.extend(out);
    }
    let mut trace = SimTrace {
        n,
        dmax,
        average,
        init: record(-1, &nodes, in_flight.clone(), vec![None; n]),
        rounds: Vec::new(),
        quiescence_round: None,
        quiescence_window: window,
    };

    let mut round = 0i64;
    loop {
        let mut inboxes: Vec<Vec<Message>> = vec![Vec::new(); n];
        for msg in in_flight.drain(..) {
            inboxes[msg.dst].push(msg);
        }
        let mut emitted = Vec::new();
        let mut triggers = Vec::with_capacity(n);
        for (node, inbox) in nodes.iter_mut().zip(&inboxes) {
            match node.step(inbox, round) {
                Ok(out) => {
                    triggers.push(out.triggers);
                    emitted.extend(out.outbox);
                }
                Err(source) => {
                    return Err(SimError::Protocol {
                        source,
                        trace: Box::new(trace),
                    })
                }
            }
        }
        let quiet = emitted.is_empty() && nodes.iter().all(NodeState::schedule_exhausted);
        in_flight = emitted.clone();
        trace.rounds.push(record(round, &nodes, emitted, triggers));

        if quiet && trace.quiescence_round.is_none() {
            trace.quiescence_round = Some(round);
        }
        match trace.quiescence_round {
            Some(q) if round + 1 >= q + window as i64 => break,
            None if round >= max_rounds => break,
            _ => {}
        }
        round += 1;
    }

    let report = build_report(g, schedules, &trace, bound);
    Ok((trace, report))
}

fn build_report(g: &Digraph, schedules: &[SubstateSchedule], trace: &SimTrace, bound: u64) -> TrialReport {
    let convergence_round = detect_convergence_round(trace, trace.average);
    let final_states = trace.final_states();
    let (mut as_one, mut fanout) = (0u64, 0u64);
    for r in &trace.rounds {
        as_one += (r.state_broadcasts + r.mass_transfers) as u64;
        fanout += r.messages.len() as u64;
    }
    let silent_after_quiescence = match trace.quiescence_round {
        Some(q) => {
            let observed: Vec<_> = trace.rounds.iter().filter(|r| r.round >= q).collect();
            observed.len() >= trace.quiescence_window && observed.iter().all(|r| r.messages.is_empty())
        }
        None => false,
    };
    let audit = AuditReport {
        conservation: audit_mass_conservation(trace, schedules),
        dominance: audit_leading_mass(trace),
        absorption: audit_absorption(trace),
        exact: final_states.iter().all(|&p| trace.average.matches(p)),
        within_bound: convergence_round.is_some_and(|k| k as u64 <= bound),
        silent_after_quiescence,
    };
    TrialReport {
        n: trace.n,
        m: g.edge_count(),
        dmax: trace.dmax,
        average: trace.average,
        convergence_round,
        quiescence_round: trace.quiescence_round,
        tx_broadcast_as_one: as_one,
        tx_broadcast_as_fanout: fanout,
        bound,
        final_states,
        audit,
    }
}

/// Smallest round from which every node's state equals `q` through the end
/// of the trace.
pub fn detect_convergence_round(trace: &SimTrace, q: ExactAverage) -> Option<i64> {
    let last_bad = trace
        .rounds
        .iter()
        .rev()
        .find(|r| !r.snapshots.iter().all(|s| q.matches(s.state)));
    match last_bad {
        None => trace.rounds.first().map(|r| r.round),
        Some(r) if r.round == trace.last_round() => None,
        Some(r) => Some(r.round + 1),
    }
}

/// Checks, after initialization and after every round, that held mass plus
/// in-flight mass plus not-yet-injected substates adds up to
/// `(dmax + 2)` times the initial totals.
pub fn audit_mass_conservation(trace: &SimTrace, schedules: &[SubstateSchedule]) -> ConservationVerdict {
    let copies = trace.dmax as i128 + 2;
    let expected_y = copies * schedules.iter().map(|s| s.y0 as i128).sum::<i128>();
    let expected_z = copies * schedules.len() as i128;
    let first_violation = trace.records().find_map(|r| {
        let (mut y, mut z) = (0i128, 0i128);
        for (snap, sched) in r.snapshots.iter().zip(schedules) {
            y += snap.mass.y as i128 + sched.pending_y(snap.s) as i128;
            z += snap.mass.z as i128 + sched.pending_z(snap.s) as i128;
        }
        for p in r.in_flight_mass() {
            y += p.y as i128;
            z += p.z as i128;
        }
        (y != expected_y || z != expected_z).then_some(r.round)
    });
    ConservationVerdict {
        expected: Pair::new(expected_y as i64, expected_z as i64),
        first_violation,
    }
}

/// Largest nonzero mass held or in flight at the end of a record.
fn leading_mass(r: &RoundRecord) -> Option<Pair> {
    r.snapshots
        .iter()
        .map(|s| s.mass)
        .chain(r.in_flight_mass())
        .filter(|p| !p.is_zero())
        .max()
}

fn all_masses_equal(r: &RoundRecord) -> bool {
    let mut it = r
        .snapshots
        .iter()
        .map(|s| s.mass)
        .chain(r.in_flight_mass())
        .filter(|p| !p.is_zero());
    match it.next() {
        Some(first) => it.all(|p| p == first),
        None => false,
    }
}

pub fn audit_leading_mass(trace: &SimTrace) -> DominanceVerdict {
    let mut v = DominanceVerdict::default();
    for r in trace.records() {
        let Some(lead) = leading_mass(r) else { continue };
        if r.snapshots.iter().any(|s| s.state > lead) {
            if r.round > trace.dmax as i64 {
                v.first_violation.get_or_insert(r.round);
            } else {
                v.injection_phase_exceedances += 1;
            }
        }
    }
    v
}

pub fn audit_absorption(trace: &SimTrace) -> AbsorptionVerdict {
    let last_emission = trace
        .records()
        .filter(|r| !r.messages.is_empty())
        .map(|r| r.round)
        .last();
    let all_leading_round = trace
        .rounds
        .iter()
        .find(|r| r.round > trace.dmax as i64 && all_masses_equal(r))
        .map(|r| r.round);
    let Some(k) = all_leading_round else {
        return AbsorptionVerdict {
            last_emission,
            ..AbsorptionVerdict::default()
        };
    };
    let promotion_after = trace
        .rounds
        .iter()
        .filter(|r| r.round > k)
        .find(|r| r.triggers.iter().flatten().any(|t| t.promoted_mass))
        .map(|r| r.round);
    let deadline = k + trace.n as i64 - 1;
    AbsorptionVerdict {
        all_leading_round,
        promotion_after,
        last_emission,
        holds: promotion_after.is_none() && last_emission.is_none_or(|e| e <= deadline),
    }
}
