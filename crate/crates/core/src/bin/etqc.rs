//! Command-line front end.
//!
//! Exit codes: 0 ok, 1 config error, 2 nonconvergence or failed audit,
//! 3 I/O error.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use etqc::engine::SimError;
use etqc::experiments::{
    emit_round_metrics, prepare_trial, run_batch, ConfigError, GraphSource, MetricsError, RoleSpec, ScheduleFile,
    StateSpec, TrialConfig, TrialError,
};
use etqc::graph::{max_out_degree, GraphError};
use etqc::privacy::{
    ambiguity_witness, classify_privacy, coalition_observations, reconstruct_fully_surrounded, Classification,
    GroundTruth, Justification,
};
use etqc::{run_simulation, NodeRole};

#[derive(Parser)]
#[command(
    name = "etqc",
    version,
    about = "Private event-triggered quantized average consensus"
)]
struct Cli {
    /// Master seed (batch) or trial seed (run, privacy-audit).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Trial configuration in `key = value` form.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Overrides {
    /// Edge-list file.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Comma-separated initial values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    states: Option<Vec<i64>>,
    /// Comma-separated roles (p, c, n), or one role for every node.
    #[arg(long, value_delimiter = ',')]
    roles: Option<Vec<NodeRole>>,
}

#[derive(Subcommand)]
enum Command {
    /// One trial; writes trace.csv, messages.csv and report.txt.
    Run(Overrides),
    /// Many trials; writes series.csv and trials.csv.
    Batch,
    /// Privacy verdict per private node, optionally with attacks.
    PrivacyAudit {
        #[command(flatten)]
        overrides: Overrides,
        /// Simulate and attack every private node from the curious coalition.
        #[arg(long)]
        attack: bool,
        /// Deltas tried by the ambiguity witness.
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            default_value = "-3,-2,-1,1,2,3"
        )]
        deltas: Vec<i64>,
    },
    /// Checks a schedule file.
    ValidateSchedule { file: PathBuf },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(e: impl std::fmt::Display) -> Self {
        Self {
            code: 1,
            message: e.to_string(),
        }
    }
    fn audit(e: impl std::fmt::Display) -> Self {
        Self {
            code: 2,
            message: e.to_string(),
        }
    }
    fn io(e: impl std::fmt::Display) -> Self {
        Self {
            code: 3,
            message: e.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure::io(e),
            _ => Failure::config(e),
        }
    }
}

impl From<TrialError> for Failure {
    fn from(e: TrialError) -> Self {
        match e {
            TrialError::Config(c) => c.into(),
            TrialError::Graph(GraphError::Io { .. }) => Failure::io(e),
            TrialError::Sim(SimError::Protocol { .. }) => Failure::audit(e),
            _ => Failure::config(e),
        }
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Empty => Failure::audit(e),
            MetricsError::Io { .. } => Failure::io(e),
        }
    }
}

fn config(cli: &Cli, overrides: Option<&Overrides>) -> Result<TrialConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => TrialConfig::load(path)?,
        None => TrialConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.jobs.is_some() {
        cfg.jobs = cli.jobs;
    }
    if let Some(o) = overrides {
        if let Some(g) = &o.graph {
            cfg.graph = GraphSource::File(g.clone());
        }
        if let Some(s) = &o.states {
            cfg.states = StateSpec::Explicit(s.clone());
        }
        if let Some(r) = &o.roles {
            cfg.roles = RoleSpec::Explicit(r.clone());
        }
    }
    cfg.check()?;
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::io(format!("cannot write {}: {e}", path.display())))
}

fn run(cli: &Cli, o: &Overrides) -> Result<(), Failure> {
    let cfg = config(cli, Some(o))?;
    let setup = prepare_trial(&cfg, cfg.seed)?;
    let (trace, report) = run_simulation(&setup.graph, &setup.schedules, cfg.sim_config()).map_err(TrialError::from)?;
    fs::create_dir_all(&cli.out_dir).map_err(Failure::io)?;
    let mut messages = Vec::new();
    trace.write_message_log(&mut messages).map_err(Failure::io)?;
    write(&cli.out_dir.join("trace.csv"), &trace.round_csv())?;
    write(&cli.out_dir.join("messages.csv"), &String::from_utf8_lossy(&messages))?;
    let summary = format!("seed = {}\n{}", setup.seed, report.summary());
    write(&cli.out_dir.join("report.txt"), &summary)?;
    print!("{summary}");
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::audit("trial failed to converge or failed an audit"))
    }
}

fn batch(cli: &Cli) -> Result<(), Failure> {
    let cfg = config(cli, None)?;
    let summary = run_batch(&cfg)?;
    let (series, trials) = emit_round_metrics(&summary, &cli.out_dir)?;
    print!("{}", summary.report());
    println!("series = {}", series.display());
    println!("trials_csv = {}", trials.display());
    if summary.passed() {
        Ok(())
    } else {
        Err(Failure::audit(format!("{} trial(s) failed", summary.failures.len())))
    }
}

fn privacy_audit(cli: &Cli, o: &Overrides, attack: bool, deltas: &[i64]) -> Result<(), Failure> {
    let cfg = config(cli, Some(o))?;
    let setup = prepare_trial(&cfg, cfg.seed)?;
    let verdicts = classify_privacy(&setup.graph, &setup.roles);
    for v in &verdicts {
        println!("{v}");
    }
    if !attack {
        return Ok(());
    }

    let (trace, _) = run_simulation(&setup.graph, &setup.schedules, cfg.sim_config()).map_err(TrialError::from)?;
    let coalition: BTreeSet<_> = (0..setup.roles.len())
        .filter(|&i| setup.roles[i] == NodeRole::Curious)
        .collect();
    let log = coalition_observations(&trace, &coalition);
    let truth = GroundTruth {
        graph: &setup.graph,
        schedules: &setup.schedules,
        roles: &setup.roles,
    };
    let dmax = max_out_degree(&setup.graph);
    let mut failed = 0;
    for v in &verdicts {
        let target = v.target;
        let actual = setup.schedules[target].y0;
        match (&v.classification, &v.justification) {
            (Classification::Breached, Justification::AllNeighborsCurious) => {
                match reconstruct_fully_surrounded(&log, &setup.graph, target, dmax) {
                    Ok(y) => {
                        println!("reconstruction target={target} recovered={y} actual={actual}");
                        failed += usize::from(y != actual);
                    }
                    Err(e) => {
                        println!("reconstruction target={target} error={e}");
                        failed += 1;
                    }
                }
            }
            (Classification::Breached, _) => {
                println!("reconstruction target={target} skipped=neutral pass-through");
            }
            (Classification::Preserved, _) => {
                let helpers: Vec<_> = setup
                    .graph
                    .neighbors(target)
                    .into_iter()
                    .filter(|&h| setup.roles[h].is_private())
                    .collect();
                let mut found = 0;
                for &delta in deltas {
                    let mut attempt = Err(None);
                    for &h in &helpers {
                        attempt = ambiguity_witness(&trace, &log, truth, target, h, delta).map_err(Some);
                        if attempt.is_ok() {
                            break;
                        }
                    }
                    match attempt {
                        Ok(w) => {
                            found += 1;
                            print!("{}", w.record());
                        }
                        Err(Some(e)) => println!("witness target={target} delta={delta} error={e}"),
                        Err(None) => println!("witness target={target} delta={delta} error=no private neighbor"),
                    }
                }
                if found == 0 {
                    failed += 1;
                }
            }
        }
    }
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::audit(format!("{failed} attack(s) did not match the verdict")))
    }
}

fn validate_schedule(file: &Path) -> Result<(), Failure> {
    let f = ScheduleFile::load(file)?;
    let violations = f.violations();
    if violations.is_empty() {
        println!("valid");
        return Ok(());
    }
    for v in &violations {
        println!("{v}");
    }
    Err(Failure::audit(format!("{} violation(s)", violations.len())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(o) => run(&cli, o),
        Command::Batch => batch(&cli),
        Command::PrivacyAudit {
            overrides,
            attack,
            deltas,
        } => privacy_audit(&cli, overrides, *attack, deltas),
        Command::ValidateSchedule { file } => validate_schedule(file),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
