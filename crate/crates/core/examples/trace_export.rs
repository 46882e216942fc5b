// Writing a trace, a message log and batch CSVs from a config file.
//
// Usage: cargo run --example trace_export [out-dir]

use std::fs;
use std::path::Path;

use etqc::experiments::{emit_round_metrics, replay_trial, run_batch, TrialConfig};

pub fn export(dir: &Path) -> Result<(), Box<dyn std::error::Error>> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("ring.txt"), "4 5\n0 1\n1 2\n2 3\n3 0\n0 2\n")?;
    fs::write(
        dir.join("ring.cfg"),
        "graph = ring.txt\nseed = 17\nroles = p,p,c,n\ninitial_states = 5,-3,8,2\ntrials = 4\n",
    )?;
    let cfg = TrialConfig::load(&dir.join("ring.cfg"))?;

    let summary = run_batch(&cfg)?;
    let (series, trials) = emit_round_metrics(&summary, dir)?;
    println!("wrote {} and {}", series.display(), trials.display());

    // Replay the second trial from its recorded seed and dump it in full.
    let (_, trace, report) = replay_trial(&cfg, summary.rows[1].seed)?;
    assert_eq!(report, summary.rows[1].report);
    fs::write(dir.join("trace.csv"), trace.round_csv())?;
    trace.write_message_log(fs::File::create(dir.join("messages.csv"))?)?;
    println!("wrote trace.csv and messages.csv for seed {}", summary.rows[1].seed);
    print!("{}", trace.round_csv().lines().take(6).collect::<Vec<_>>().join("\n"));
    println!();
    Ok(())
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("etqc-trace-export-{}", std::process::id()));
    let result = export(&dir);
    let _ = fs::remove_dir_all(&dir);
    result
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    match std::env::args().nth(1) {
        Some(dir) => export(Path::new(&dir)),
        None => run_example(),
    }
}
