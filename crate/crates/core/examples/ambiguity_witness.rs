// A private neighbor hides the target: an alternative set of initial
// values gives the coalition exactly the same view.

use std::collections::BTreeSet;

use etqc::graph::max_out_degree;
use etqc::privacy::{classify_privacy, coalition_observations, consistent_values, GroundTruth};
use etqc::schedule::decompose_initial_state;
use etqc::{run_simulation, Digraph, NodeRole, SimConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    // 0 <-> 1, 1 -> 2 -> 0, node 2 curious.
    let g = Digraph::from_edges(3, [(0, 1), (1, 0), (1, 2), (2, 0)])?;
    let roles = [NodeRole::Private, NodeRole::Private, NodeRole::Curious];
    for v in classify_privacy(&g, &roles) {
        println!("{v}");
    }
    let dmax = max_out_degree(&g);
    let coalition = BTreeSet::from([2]);

    // Not every run hides the exchange; take the first seed that does.
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let schedules = [3, 7, 5]
            .iter()
            .zip(&roles)
            .map(|(&y, &r)| decompose_initial_state(y, dmax, r, 100, &mut rng))
            .collect::<Result<Vec<_>, _>>()?;
        let (trace, _) = run_simulation(&g, &schedules, SimConfig::default())?;
        let log = coalition_observations(&trace, &coalition);
        let truth = GroundTruth {
            graph: &g,
            schedules: &schedules,
            roles: &roles,
        };
        let (values, results) = consistent_values(&trace, &log, truth, 0, 1, [-3, -2, -1, 1, 2, 3]);
        if values.len() < 2 {
            continue;
        }
        println!("seed {seed}: coalition log digest {}", log.digest());
        for w in results.iter().flatten() {
            print!("{}", w.record());
        }
        println!("values of node 0 consistent with the log: {values:?}");
        return Ok(());
    }
    Err("no seed produced a witness".into())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
