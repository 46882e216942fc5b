// 20-node batch with the pinned initial vector, all nodes private.
//
// Usage: cargo run --release --example batch_reproduction [trials] [p]

use etqc::experiments::{run_batch, GraphSource, TrialConfig};

pub fn run_batch_example(trials: usize, p: f64) -> Result<(), Box<dyn std::error::Error>> {
    let cfg = TrialConfig {
        graph: GraphSource::Random { n: 20, p },
        seed: 2024,
        trials,
        ..TrialConfig::default()
    };
    let summary = run_batch(&cfg)?;
    print!("{}", summary.report());
    println!("reference: convergence 180 (185 in a second figure), transmissions 808.4");

    let series = summary.series();
    println!("\nround  transmitting  converged");
    for r in series.iter().step_by(10) {
        println!(
            "{:>5}  {:>12.2}  {:>9.3}",
            r.round, r.avg_transmitting_nodes, r.avg_converged_fraction
        );
    }
    for row in &summary.rows {
        assert_eq!(row.report.average.to_string(), "67/5");
    }
    Ok(())
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    run_batch_example(5, 0.3)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let trials = args.next().map(|a| a.parse()).transpose()?.unwrap_or(100);
    let p = args.next().map(|a| a.parse()).transpose()?.unwrap_or(0.3);
    run_batch_example(trials, p)
}
