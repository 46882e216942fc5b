// Splitting an initial value into substates.

use etqc::schedule::{decompose_initial_state, min_feasible_offset_bound, validate_schedule};
use etqc::{NodeRole, SubstateSchedule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dmax = 3;
    for role in [NodeRole::Private, NodeRole::Curious, NodeRole::Neutral] {
        let s = decompose_initial_state(4, dmax, role, 10, &mut rng)?;
        println!("{role:<8} y0 = 4  uy = {:?}  uz = {:?}", s.uy, s.uz);
        assert!(validate_schedule(&s, dmax, role).is_empty());
    }

    println!(
        "\nsmallest offset bound for {} substates: {}",
        dmax + 2,
        min_feasible_offset_bound(dmax + 2)
    );

    let broken = SubstateSchedule::from_substates(4, vec![1, 8, 8, 2, 1]);
    println!("\nviolations of {:?}:", broken.uy);
    for v in validate_schedule(&broken, dmax, NodeRole::Private) {
        println!("  {v}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
