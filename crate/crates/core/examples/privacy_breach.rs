// A private node whose neighbors are all curious loses its value.

use std::collections::BTreeSet;

use etqc::graph::max_out_degree;
use etqc::privacy::{classify_privacy, coalition_observations, reconstruct_fully_surrounded};
use etqc::schedule::decompose_initial_state;
use etqc::{run_simulation, Digraph, NodeRole, SimConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let g = Digraph::bidirectional_star(4)?;
    let roles = [
        NodeRole::Private,
        NodeRole::Curious,
        NodeRole::Curious,
        NodeRole::Curious,
        NodeRole::Curious,
    ];
    let initial = [42, -7, 3, 18, 0];
    for v in classify_privacy(&g, &roles) {
        println!("{v}");
    }

    let dmax = max_out_degree(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let schedules = initial
        .iter()
        .zip(&roles)
        .map(|(&y, &r)| decompose_initial_state(y, dmax, r, 100, &mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    println!("center substates: {:?}", schedules[0].uy);

    let (trace, _) = run_simulation(&g, &schedules, SimConfig::default())?;
    let coalition: BTreeSet<_> = (1..5).collect();
    let log = coalition_observations(&trace, &coalition);
    println!("coalition saw {} messages", log.messages.len());
    let recovered = reconstruct_fully_surrounded(&log, &g, 0, dmax)?;
    println!("recovered initial value of node 0: {recovered}");
    assert_eq!(recovered, 42);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
