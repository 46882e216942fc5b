// Random strongly connected digraphs and the edge-list format.

use etqc::graph::{generate_random_strongly_connected, is_strongly_connected, max_out_degree};
use etqc::Digraph;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = generate_random_strongly_connected(8, 0.3, &mut rng)?;
    println!(
        "n = {}, m = {}, dmax = {}",
        g.node_count(),
        g.edge_count(),
        max_out_degree(&g)
    );
    for j in 0..g.node_count() {
        // Listed in round-robin priority order.
        println!("  {j} -> {:?}   (in: {:?})", g.out_neighbors(j), g.in_neighbors(j));
    }

    let text = g.to_edge_list();
    let back = Digraph::parse_edge_list(&text)?;
    assert_eq!(back, g);
    assert!(is_strongly_connected(&back));
    println!("\nedge list:\n{text}");

    // Same seed, same graph and edge order.
    let again = generate_random_strongly_connected(8, 0.3, &mut ChaCha8Rng::seed_from_u64(11))?;
    assert_eq!(again, g);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
