use etqc::graph::{generate_random_strongly_connected, max_out_degree};
use etqc::schedule::decompose_initial_state;
use etqc::{run_simulation, NodeRole, Payload, SimConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn role(i: u8) -> NodeRole {
    match i % 3 {
        0 => NodeRole::Private,
        1 => NodeRole::Curious,
        _ => NodeRole::Neutral,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn runs_are_exact_quiet_and_audited(
        seed in any::<u64>(),
        n in 2usize..10,
        p in 0.2f64..0.9,
        states in proptest::collection::vec(-1_000i64..1_000, 10),
        roles in proptest::collection::vec(any::<u8>(), 10),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = generate_random_strongly_connected(n, p, &mut rng).unwrap();
        let dmax = max_out_degree(&g);
        let schedules: Vec<_> = (0..n)
            .map(|i| decompose_initial_state(states[i], dmax, role(roles[i]), 100, &mut rng).unwrap())
            .collect();
        let (trace, report) = run_simulation(&g, &schedules, SimConfig::default()).unwrap();
        prop_assert!(report.passed(), "{}", report.summary());

        let sum: i128 = states[..n].iter().map(|&y| y as i128).sum();
        for s in trace.final_states() {
            prop_assert_eq!(s.y as i128 * n as i128, sum * s.z as i128);
        }

        // Every node forwards at least once to every out-neighbor during injection.
        for j in 0..n {
            for &l in g.out_neighbors(j) {
                prop_assert!(trace.all_messages().any(|m| m.src == j && m.dst == l
                    && matches!(m.payload, Payload::MassTransfer(_))));
            }
        }

        // Nothing travels along a non-edge.
        prop_assert!(trace.all_messages().all(|m| g.has_edge(m.src, m.dst)));

        let q = trace.quiescence_round.unwrap();
        prop_assert!(trace.rounds.iter().filter(|r| r.round >= q).all(|r| r.messages.is_empty()));
        prop_assert!(trace.rounds.iter().all(|r| r.transmitting_nodes <= n));
    }

    #[test]
    fn same_seed_same_trace(seed in any::<u64>(), n in 2usize..8) {
        let build = || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = generate_random_strongly_connected(n, 0.5, &mut rng).unwrap();
            let dmax = max_out_degree(&g);
            let s: Vec<_> = (0..n)
                .map(|i| decompose_initial_state(i as i64 * 3 - 5, dmax, NodeRole::Private, 100, &mut rng).unwrap())
                .collect();
            run_simulation(&g, &s, SimConfig::default()).unwrap().0.round_csv()
        };
        prop_assert_eq!(build(), build());
    }
}
