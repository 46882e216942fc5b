//! Batch trials, configuration files and CSV output.
//!
//! A [`TrialConfig`] is read from flat `key = value` text:
//!
//! ```text
//! # 20-node reproduction
//! n = 20
//! p = 0.3
//! seed = 7
//! roles = private
//! initial_states = 2,25,7,19,13,30,1,16,9,22,14,5,27,11,18,3,20,8,10,8
//! trials = 100
//! ```
//!
//! Recognised keys: `graph` (edge-list path, relative to the config file),
//! `n`, `p`, `seed`, `roles` (one role for all nodes or a comma list),
//! `private_fraction`, `curious_fraction`, `initial_states`, `state_min`,
//! `state_max`, `offset_bound`, `max_rounds`, `quiescence_window`,
//! `trials`, `jobs`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::engine::{run_simulation, SimConfig, SimError, SimTrace, TrialReport};
use crate::graph::{generate_random_strongly_connected, max_out_degree, Digraph, GraphError};
use crate::schedule::{
    decompose_initial_state, validate_schedule, NodeRole, ScheduleError, SubstateSchedule, Violation,
    DEFAULT_OFFSET_BOUND,
};

/// Initial values used for the 20-node reproduction. Mean 13.4.
pub const PINNED_STATES: [i64; 20] = [2, 25, 7, 19, 13, 30, 1, 16, 9, 22, 14, 5, 27, 11, 18, 3, 20, 8, 10, 8];

pub const SERIES_CSV_HEADER: &str =
    "round,avg_broadcasts,avg_mass_transfers,avg_transmitting_nodes,avg_converged_fraction";
pub const TRIALS_CSV_HEADER: &str =
    "trial,seed,n,m,dmax,convergence_round,quiescence_round,tx_broadcast_as_one,tx_broadcast_as_fanout,bound";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("bad value for {key}: {reason}")]
    Value { key: String, reason: String },
    #[error("unknown key {0}")]
    UnknownKey(String),
    #[error("missing {0}")]
    Missing(&'static str),
    #[error("{0}")]
    Inconsistent(String),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Debug, Error)]
pub enum TrialError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no completed trials to write")]
    Empty,
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Clone, Debug, PartialEq)]
pub enum GraphSource {
    File(PathBuf),
    Random { n: usize, p: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum RoleSpec {
    Explicit(Vec<NodeRole>),
    /// Rounded counts of private and curious nodes, the rest neutral,
    /// placed at random per trial.
    Fractions {
        private: f64,
        curious: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum StateSpec {
    /// Held fixed across trials.
    Explicit(Vec<i64>),
    /// Drawn uniformly per trial and node.
    Range { min: i64, max: i64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialConfig {
    pub graph: GraphSource,
    pub seed: u64,
    pub roles: RoleSpec,
    pub states: StateSpec,
    pub offset_bound: i64,
    pub max_rounds: Option<u64>,
    pub quiescence_window: Option<usize>,
    pub trials: usize,
    pub jobs: Option<usize>,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            graph: GraphSource::Random { n: 20, p: 0.3 },
            seed: 0,
            roles: RoleSpec::Fractions {
                private: 1.0,
                curious: 0.0,
            },
            states: StateSpec::Explicit(PINNED_STATES.to_vec()),
            offset_bound: DEFAULT_OFFSET_BOUND,
            max_rounds: None,
            quiescence_window: None,
            trials: 1,
            jobs: None,
        }
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(|x| {
            x.trim().parse().map_err(|e: T::Err| ConfigError::Value {
                key: key.into(),
                reason: format!("{x:?}: {e}"),
            })
        })
        .collect()
}

fn parse_one<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.into(),
        reason: e.to_string(),
    })
}

impl TrialConfig {
    /// Parses config text. Relative graph paths are resolved against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self, ConfigError> {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                reason: "expected key = value".into(),
            })?;
            let k = k.trim().to_string();
            if kv.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    reason: format!("duplicate key {k}"),
                });
            }
        }

        let mut cfg = TrialConfig::default();
        let mut n = None;
        let mut p = None;
        let mut fractions = (None, None);
        let mut range = (None, None);
        for (k, v) in &kv {
            match k.as_str() {
                "graph" => {
                    let path = PathBuf::from(v);
                    cfg.graph = GraphSource::File(match base {
                        Some(b) if path.is_relative() => b.join(path),
                        _ => path,
                    });
                }
                "n" => n = Some(parse_one::<usize>(k, v)?),
                "p" => p = Some(parse_one::<f64>(k, v)?),
                "seed" => cfg.seed = parse_one(k, v)?,
                "roles" => cfg.roles = RoleSpec::Explicit(parse_list(k, v)?),
                "private_fraction" => fractions.0 = Some(parse_one::<f64>(k, v)?),
                "curious_fraction" => fractions.1 = Some(parse_one::<f64>(k, v)?),
                "initial_states" => cfg.states = StateSpec::Explicit(parse_list(k, v)?),
                "state_min" => range.0 = Some(parse_one::<i64>(k, v)?),
                "state_max" => range.1 = Some(parse_one::<i64>(k, v)?),
                "offset_bound" => cfg.offset_bound = parse_one(k, v)?,
                "max_rounds" => cfg.max_rounds = Some(parse_one(k, v)?),
                "quiescence_window" => cfg.quiescence_window = Some(parse_one(k, v)?),
                "trials" => cfg.trials = parse_one(k, v)?,
                "jobs" => cfg.jobs = Some(parse_one(k, v)?),
                _ => return Err(ConfigError::UnknownKey(k.clone())),
            }
        }

        match (&cfg.graph, n, p) {
            (GraphSource::File(_), None, None) => {}
            (GraphSource::File(_), _, _) => {
                return Err(ConfigError::Inconsistent(
                    "graph file given together with n or p".into(),
                ))
            }
            (_, Some(n), Some(p)) => cfg.graph = GraphSource::Random { n, p },
            (_, Some(n), None) => cfg.graph = GraphSource::Random { n, p: 0.3 },
            (_, None, Some(p)) => cfg.graph = GraphSource::Random { n: 20, p },
            (_, None, None) => {}
        }
        if fractions != (None, None) {
            if kv.contains_key("roles") {
                return Err(ConfigError::Inconsistent(
                    "roles given both as a list and as fractions".into(),
                ));
            }
            let private = fractions.0.unwrap_or(0.0);
            let curious = fractions.1.unwrap_or(0.0);
            cfg.roles = RoleSpec::Fractions { private, curious };
        }
        match range {
            (None, None) => {}
            (Some(min), Some(max)) => {
                if kv.contains_key("initial_states") {
                    return Err(ConfigError::Inconsistent(
                        "initial states given both as a list and as a range".into(),
                    ));
                }
                cfg.states = StateSpec::Range { min, max };
            }
            _ => return Err(ConfigError::Missing("state_min and state_max together")),
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path.parent())
    }

    /// Checks everything that does not need the graph loaded.
    pub fn check(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, reason: &str| {
            Err(ConfigError::Value {
                key: key.into(),
                reason: reason.into(),
            })
        };
        if self.trials == 0 {
            return bad("trials", "must be at least 1");
        }
        if self.jobs == Some(0) {
            return bad("jobs", "must be at least 1");
        }
        if self.quiescence_window == Some(0) {
            return bad("quiescence_window", "must be at least 1");
        }
        if self.offset_bound < 1 {
            return bad("offset_bound", "must be positive");
        }
        if let RoleSpec::Fractions { private, curious } = self.roles {
            if !(0.0..=1.0).contains(&private) || !(0.0..=1.0).contains(&curious) || private + curious > 1.0 {
                return bad("private_fraction", "fractions must lie in [0, 1] and sum to at most 1");
            }
        }
        if let StateSpec::Range { min, max } = self.states {
            if min > max {
                return bad("state_min", "exceeds state_max");
            }
        }
        if let GraphSource::Random { n, .. } = self.graph {
            self.check_lengths(n)?;
        }
        Ok(())
    }

    fn check_lengths(&self, n: usize) -> Result<(), ConfigError> {
        if let RoleSpec::Explicit(r) = &self.roles {
            if r.len() != n && r.len() != 1 {
                return Err(ConfigError::Inconsistent(format!("{} roles for {n} nodes", r.len())));
            }
        }
        if let StateSpec::Explicit(s) = &self.states {
            if s.len() != n {
                return Err(ConfigError::Inconsistent(format!(
                    "{} initial states for {n} nodes",
                    s.len()
                )));
            }
        }
        Ok(())
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            max_rounds: self.max_rounds,
            quiescence_window: self.quiescence_window,
        }
    }
}

/// Seed of trial `index`: the first word of ChaCha stream `index` keyed by
/// the master seed.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

/// All inputs of one trial, drawn from its seed.
#[derive(Clone, Debug)]
pub struct TrialSetup {
    pub seed: u64,
    pub graph: Digraph,
    pub roles: Vec<NodeRole>,
    pub schedules: Vec<SubstateSchedule>,
}

impl TrialSetup {
    pub fn initial_states(&self) -> Vec<i64> {
        self.schedules.iter().map(|s| s.y0).collect()
    }
}

/// Builds a trial's graph, roles and schedules from `seed`. Deterministic.
pub fn prepare_trial(cfg: &TrialConfig, seed: u64) -> Result<TrialSetup, TrialError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graph = match &cfg.graph {
        GraphSource::File(path) => Digraph::load(path)?,
        GraphSource::Random { n, p } => generate_random_strongly_connected(*n, *p, &mut rng)?,
    };
    let n = graph.node_count();
    cfg.check_lengths(n)?;
    let roles = match &cfg.roles {
        RoleSpec::Explicit(r) if r.len() == 1 => vec![r[0]; n],
        RoleSpec::Explicit(r) => r.clone(),
        RoleSpec::Fractions { private, curious } => {
            let np = (private * n as f64).round() as usize;
            let nc = ((curious * n as f64).round() as usize).min(n - np);
            let mut r = vec![NodeRole::Neutral; n];
            r[..np].fill(NodeRole::Private);
            r[np..np + nc].fill(NodeRole::Curious);
            r.shuffle(&mut rng);
            r
        }
    };
    let states = match &cfg.states {
        StateSpec::Explicit(s) => s.clone(),
        StateSpec::Range { min, max } => (0..n).map(|_| rng.gen_range(*min..=*max)).collect(),
    };
    let dmax = max_out_degree(&graph);
    let schedules = states
        .iter()
        .zip(&roles)
        .map(|(&y, &role)| decompose_initial_state(y, dmax, role, cfg.offset_bound, &mut rng))
        .collect::<Result<_, _>>()?;
    Ok(TrialSetup {
        seed,
        graph,
        roles,
        schedules,
    })
}

/// Runs one trial from its seed. Use with a seed from the trials CSV to
/// replay it.
pub fn replay_trial(cfg: &TrialConfig, seed: u64) -> Result<(TrialSetup, SimTrace, TrialReport), TrialError> {
    let setup = prepare_trial(cfg, seed)?;
    let (trace, report) = run_simulation(&setup.graph, &setup.schedules, cfg.sim_config())?;
    Ok((setup, trace, report))
}

/// Per-round counts kept from a trace, rounds `0..`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RoundCounts {
    pub broadcasts: usize,
    pub mass_transfers: usize,
    pub transmitting_nodes: usize,
    pub converged_nodes: usize,
}

#[derive(Clone, Debug)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    pub report: TrialReport,
    pub series: Vec<RoundCounts>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesRow {
    pub round: usize,
    pub avg_broadcasts: f64,
    pub avg_mass_transfers: f64,
    pub avg_transmitting_nodes: f64,
    pub avg_converged_fraction: f64,
}

/// A trial that did not converge or failed an audit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FailedTrial {
    pub trial: usize,
    pub seed: u64,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct BatchSummary {
    pub rows: Vec<TrialRow>,
    pub failures: Vec<FailedTrial>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    (count > 0).then(|| sum / count as f64)
}

impl BatchSummary {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    /// Mean over trials that converged.
    pub fn mean_convergence_round(&self) -> Option<f64> {
        mean(
            self.rows
                .iter()
                .filter_map(|r| r.report.convergence_round)
                .map(|c| c as f64),
        )
    }

    pub fn mean_quiescence_round(&self) -> Option<f64> {
        mean(
            self.rows
                .iter()
                .filter_map(|r| r.report.quiescence_round)
                .map(|c| c as f64),
        )
    }

    pub fn mean_tx_broadcast_as_one(&self) -> Option<f64> {
        mean(self.rows.iter().map(|r| r.report.tx_broadcast_as_one as f64))
    }

    pub fn mean_tx_broadcast_as_fanout(&self) -> Option<f64> {
        mean(self.rows.iter().map(|r| r.report.tx_broadcast_as_fanout as f64))
    }

    /// Per-round means across trials. Shorter trials are extended with
    /// silent rounds at their final converged count.
    pub fn series(&self) -> Vec<SeriesRow> {
        let len = self.rows.iter().map(|r| r.series.len()).max().unwrap_or(0);
        let k = self.rows.len() as f64;
        (0..len)
            .map(|round| {
                let mut row = SeriesRow {
                    round,
                    avg_broadcasts: 0.0,
                    avg_mass_transfers: 0.0,
                    avg_transmitting_nodes: 0.0,
                    avg_converged_fraction: 0.0,
                };
                for t in &self.rows {
                    let c = t.series.get(round).copied().unwrap_or(RoundCounts {
                        converged_nodes: t.series.last().map_or(0, |c| c.converged_nodes),
                        ..RoundCounts::default()
                    });
                    row.avg_broadcasts += c.broadcasts as f64;
                    row.avg_mass_transfers += c.mass_transfers as f64;
                    row.avg_transmitting_nodes += c.transmitting_nodes as f64;
                    row.avg_converged_fraction += c.converged_nodes as f64 / t.report.n as f64;
                }
                row.avg_broadcasts /= k;
                row.avg_mass_transfers /= k;
                row.avg_transmitting_nodes /= k;
                row.avg_converged_fraction /= k;
                row
            })
            .collect()
    }

    /// Key = value text with the aggregates.
    pub fn report(&self) -> String {
        let opt = |x: Option<f64>| x.map_or("none".to_string(), |v| format!("{v:.2}"));
        let mut s = String::new();
        let _ = writeln!(s, "trials = {}", self.rows.len());
        let _ = writeln!(s, "failed = {}", self.failures.len());
        let _ = writeln!(s, "mean_convergence_round = {}", opt(self.mean_convergence_round()));
        let _ = writeln!(s, "mean_quiescence_round = {}", opt(self.mean_quiescence_round()));
        let _ = writeln!(s, "mean_tx_broadcast_as_one = {}", opt(self.mean_tx_broadcast_as_one()));
        let _ = writeln!(
            s,
            "mean_tx_broadcast_as_fanout = {}",
            opt(self.mean_tx_broadcast_as_fanout())
        );
        for f in &self.failures {
            let _ = writeln!(s, "failure trial={} seed={} reason={}", f.trial, f.seed, f.reason);
        }
        s
    }
}

fn failure_reason(r: &TrialReport) -> Option<String> {
    if r.passed() {
        return None;
    }
    let a = &r.audit;
    let mut why = Vec::new();
    if !r.converged() {
        why.push("no convergence");
    }
    if !a.exact {
        why.push("inexact final states");
    }
    if !a.within_bound {
        why.push("bound exceeded");
    }
    if !a.conservation.holds() {
        why.push("mass not conserved");
    }
    if a.dominance.first_violation.is_some() {
        why.push("leading mass overtaken");
    }
    if !a.absorption.holds {
        why.push("absorption not reached");
    }
    if !a.silent_after_quiescence {
        why.push("transmission after quiescence");
    }
    Some(why.join("; "))
}

fn run_indexed(cfg: &TrialConfig, trial: usize) -> Result<TrialRow, TrialError> {
    let seed = trial_seed(cfg.seed, trial as u64);
    let (_, trace, report) = replay_trial(cfg, seed)?;
    let series = trace
        .rounds
        .iter()
        .map(|r| RoundCounts {
            broadcasts: r.state_broadcasts,
            mass_transfers: r.mass_transfers,
            transmitting_nodes: r.transmitting_nodes,
            converged_nodes: r.converged_nodes(trace.average),
        })
        .collect();
    Ok(TrialRow {
        trial,
        seed,
        report,
        series,
    })
}

/// Runs `cfg.trials` trials, at most `cfg.jobs` at a time.
///
/// Trials that run but fail to converge or fail an audit are listed in
/// [`BatchSummary::failures`] with their seed. Errors that prevent a trial
/// from running at all abort the batch.
pub fn run_batch(cfg: &TrialConfig) -> Result<BatchSummary, TrialError> {
    cfg.check()?;
    let run = || -> Result<Vec<TrialRow>, TrialError> {
        (0..cfg.trials).into_par_iter().map(|i| run_indexed(cfg, i)).collect()
    };
    let rows = match cfg.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| TrialError::Pool(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    let failures = rows
        .iter()
        .filter_map(|r| {
            failure_reason(&r.report).map(|reason| FailedTrial {
                trial: r.trial,
                seed: r.seed,
                reason,
            })
        })
        .collect();
    Ok(BatchSummary { rows, failures })
}

pub fn series_csv(summary: &BatchSummary) -> String {
    let mut s = format!("{SERIES_CSV_HEADER}\n");
    for r in summary.series() {
        let _ = writeln!(
            s,
            "{},{:.6},{:.6},{:.6},{:.6}",
            r.round, r.avg_broadcasts, r.avg_mass_transfers, r.avg_transmitting_nodes, r.avg_converged_fraction
        );
    }
    s
}

pub fn trials_csv(summary: &BatchSummary) -> String {
    let opt = |x: Option<i64>| x.map_or(String::new(), |v| v.to_string());
    let mut s = format!("{TRIALS_CSV_HEADER}\n");
    for t in &summary.rows {
        let r = &t.report;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            t.trial,
            t.seed,
            r.n,
            r.m,
            r.dmax,
            opt(r.convergence_round),
            opt(r.quiescence_round),
            r.tx_broadcast_as_one,
            r.tx_broadcast_as_fanout,
            r.bound
        );
    }
    s
}

/// Writes `series.csv` and `trials.csv` into `dir`, creating it if needed.
/// Nothing is written for an empty summary.
pub fn emit_round_metrics(summary: &BatchSummary, dir: &Path) -> Result<(PathBuf, PathBuf), MetricsError> {
    if summary.rows.is_empty() {
        return Err(MetricsError::Empty);
    }
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| MetricsError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let series = dir.join("series.csv");
    let trials = dir.join("trials.csv");
    fs::write(&series, series_csv(summary)).map_err(io_err(&series))?;
    fs::write(&trials, trials_csv(summary)).map_err(io_err(&trials))?;
    Ok((series, trials))
}

/// A schedule read from `key = value` text with keys `y0`, `dmax`, `role`,
/// `uy` and optionally `uz` (all ones when absent).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScheduleFile {
    pub schedule: SubstateSchedule,
    pub dmax: usize,
    pub role: NodeRole,
}

impl ScheduleFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut kv = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                reason: "expected key = value".into(),
            })?;
            match k.trim() {
                key @ ("y0" | "dmax" | "role" | "uy" | "uz") => {
                    kv.insert(key, v.trim());
                }
                other => return Err(ConfigError::UnknownKey(other.into())),
            }
        }
        let y0 = parse_one("y0", kv.get("y0").ok_or(ConfigError::Missing("y0"))?)?;
        let dmax = parse_one("dmax", kv.get("dmax").ok_or(ConfigError::Missing("dmax"))?)?;
        let role = parse_one("role", kv.get("role").ok_or(ConfigError::Missing("role"))?)?;
        let uy: Vec<i64> = parse_list("uy", kv.get("uy").ok_or(ConfigError::Missing("uy"))?)?;
        let uz = match kv.get("uz") {
            Some(v) => parse_list("uz", v)?,
            None => vec![1; uy.len()],
        };
        Ok(Self {
            schedule: SubstateSchedule { y0, uy, uz },
            dmax,
            role,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn violations(&self) -> Vec<Violation> {
        validate_schedule(&self.schedule, self.dmax, self.role)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node_cfg(dir: &Path) -> TrialConfig {
        let path = dir.join("two.txt");
        Digraph::complete(2).unwrap().save(&path).unwrap();
        TrialConfig {
            graph: GraphSource::File(path),
            roles: RoleSpec::Explicit(vec![NodeRole::Neutral]),
            states: StateSpec::Explicit(vec![4, 6]),
            ..TrialConfig::default()
        }
    }

    #[test]
    fn pinned_states_mean() {
        assert_eq!(PINNED_STATES.iter().sum::<i64>(), 268);
    }

    #[test]
    fn parses_full_config() {
        let text = "# comment\nn = 12\np = 0.4\nseed = 9\nroles = p,c,n,p,p,p,p,p,p,p,p,p\n\
                    state_min = -5\nstate_max = 5\ntrials = 3\njobs = 2\nquiescence_window = 30\n";
        let cfg = TrialConfig::parse(text, None).unwrap();
        assert_eq!(cfg.graph, GraphSource::Random { n: 12, p: 0.4 });
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.states, StateSpec::Range { min: -5, max: 5 });
        assert_eq!(cfg.trials, 3);
        assert_eq!(cfg.jobs, Some(2));
        assert_eq!(cfg.quiescence_window, Some(30));
        match cfg.roles {
            RoleSpec::Explicit(r) => assert_eq!(r[1], NodeRole::Curious),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn graph_path_is_relative_to_config() {
        let cfg = TrialConfig::parse("graph = g.txt\ninitial_states = 1,2\n", Some(Path::new("/cfg"))).unwrap();
        assert_eq!(cfg.graph, GraphSource::File(PathBuf::from("/cfg/g.txt")));
    }

    #[test]
    fn rejects_bad_configs() {
        let cases = [
            "n = 3\ninitial_states = 1,2\n",
            "trials = 0\n",
            "nonsense = 1\n",
            "n 3\n",
            "n = 3\nn = 4\n",
            "private_fraction = 0.8\ncurious_fraction = 0.5\n",
            "state_min = 3\n",
            "state_min = 3\nstate_max = 1\n",
            "p = many\n",
            "roles = p,x\n",
            "graph = a.txt\nn = 3\n",
        ];
        for text in cases {
            assert!(TrialConfig::parse(text, None).is_err(), "{text:?}");
        }
    }

    #[test]
    fn trial_seeds_differ_and_repeat() {
        let a: Vec<_> = (0..50).map(|i| trial_seed(7, i)).collect();
        let b: Vec<_> = (0..50).map(|i| trial_seed(7, i)).collect();
        assert_eq!(a, b);
        let unique: std::collections::BTreeSet<_> = a.iter().collect();
        assert_eq!(unique.len(), 50);
        assert_ne!(trial_seed(7, 0), trial_seed(8, 0));
    }

    #[test]
    fn two_node_series_matches_hand_trace() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = two_node_cfg(dir.path());
        let summary = run_batch(&cfg).unwrap();
        assert!(summary.passed());
        let series = summary.series();
        // quiescence at 6, window 5n = 10
        assert_eq!(series.len(), 16);
        assert_eq!(series[4].avg_converged_fraction, 0.5);
        assert_eq!(series[5].avg_converged_fraction, 1.0);
        assert!(series[6..].iter().all(|r| r.avg_transmitting_nodes == 0.0));

        let (s, t) = emit_round_metrics(&summary, &dir.path().join("out")).unwrap();
        let series_text = fs::read_to_string(s).unwrap();
        assert!(series_text.starts_with(SERIES_CSV_HEADER));
        assert_eq!(series_text.lines().count(), 17);
        let trials_text = fs::read_to_string(t).unwrap();
        let row = trials_text.lines().nth(1).unwrap();
        // 8 broadcasts and 5 transfers; every broadcast has a single recipient.
        assert!(row.ends_with(",2,2,1,5,6,13,13,10"), "{row}");
    }

    #[test]
    fn repeated_batches_give_identical_csv() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = two_node_cfg(dir.path());
        let a = run_batch(&cfg).unwrap();
        let b = run_batch(&cfg).unwrap();
        assert_eq!(series_csv(&a), series_csv(&b));
        assert_eq!(trials_csv(&a), trials_csv(&b));
    }

    #[test]
    fn empty_summary_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let empty = BatchSummary {
            rows: Vec::new(),
            failures: Vec::new(),
        };
        assert!(matches!(emit_round_metrics(&empty, &out), Err(MetricsError::Empty)));
        assert!(!out.exists());
    }

    #[test]
    fn batch_is_independent_of_jobs_and_replayable() {
        let cfg = TrialConfig {
            graph: GraphSource::Random { n: 8, p: 0.4 },
            states: StateSpec::Range { min: -20, max: 20 },
            roles: RoleSpec::Fractions {
                private: 0.5,
                curious: 0.25,
            },
            trials: 6,
            seed: 3,
            ..TrialConfig::default()
        };
        let one = run_batch(&TrialConfig {
            jobs: Some(1),
            ..cfg.clone()
        })
        .unwrap();
        let many = run_batch(&TrialConfig {
            jobs: Some(4),
            ..cfg.clone()
        })
        .unwrap();
        assert_eq!(trials_csv(&one), trials_csv(&many));
        assert_eq!(series_csv(&one), series_csv(&many));
        assert!(one.passed());
        let row = &one.rows[4];
        let (setup, _, report) = replay_trial(&cfg, row.seed).unwrap();
        assert_eq!(report, row.report);
        assert_eq!(setup.roles.iter().filter(|r| r.is_private()).count(), 4);
        for r in one.series() {
            assert!(r.avg_transmitting_nodes <= 8.0);
        }
    }

    #[test]
    fn schedule_file_round_trip() {
        let f = ScheduleFile::parse("y0 = 4\ndmax = 3\nrole = private\nuy = 1,8,6,2,3\n").unwrap();
        assert!(f.violations().is_empty());
        let f = ScheduleFile::parse("y0 = 4\ndmax = 3\nrole = private\nuy = 1,8,6,2,4\n").unwrap();
        assert!(!f.violations().is_empty());
        let f = ScheduleFile::parse("y0 = 4\ndmax = 3\nrole = p\nuy = 1,8,6,2,3\nuz = 1,1,2,1,1\n").unwrap();
        assert!(!f.violations().is_empty());
        assert!(ScheduleFile::parse("y0 = 4\ndmax = 3\n").is_err());
    }
}
