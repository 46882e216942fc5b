// The two-node fixture traced round by round.
//
// Nodes 0 and 1 hold 4 and 6 and do not hide them. Both end on 30/6.

use etqc::{run_simulation, Digraph, SimConfig, SubstateSchedule};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let g = Digraph::complete(2)?;
    let schedules = [SubstateSchedule::public(4, 1), SubstateSchedule::public(6, 1)];
    let (trace, report) = run_simulation(&g, &schedules, SimConfig::default())?;

    println!("round  mass0   mass1   state0  state1  sent");
    for r in trace.records().take_while(|r| r.round <= 6) {
        let sent: Vec<String> = r
            .messages
            .iter()
            .map(|m| format!("{}{}->{}:{}", &m.payload.kind()[..1], m.src, m.dst, m.payload.pair()))
            .collect();
        println!(
            "{:>5}  {:<6}  {:<6}  {:<6}  {:<6}  {}",
            r.round,
            r.snapshots[0].mass.to_string(),
            r.snapshots[1].mass.to_string(),
            r.snapshots[0].state.to_string(),
            r.snapshots[1].state.to_string(),
            sent.join(" ")
        );
    }
    println!();
    print!("{}", report.summary());
    assert_eq!(report.convergence_round, Some(5));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
