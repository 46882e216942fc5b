macro_rules! example {
    ($module:ident, $file:literal) => {
        #[allow(dead_code)]
        mod $module {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }
    };
}

example!(hand_trace, "hand_trace.rs");
example!(random_digraph, "random_digraph.rs");
example!(schedule_decomposition, "schedule_decomposition.rs");
example!(batch_reproduction, "batch_reproduction.rs");
example!(privacy_breach, "privacy_breach.rs");
example!(ambiguity_witness, "ambiguity_witness.rs");
example!(trace_export, "trace_export.rs");

#[test]
fn hand_trace_runs() {
    hand_trace::run_example().unwrap();
}

#[test]
fn random_digraph_runs() {
    random_digraph::run_example().unwrap();
}

#[test]
fn schedule_decomposition_runs() {
    schedule_decomposition::run_example().unwrap();
}

#[test]
fn batch_reproduction_runs() {
    batch_reproduction::run_example().unwrap();
}

#[test]
fn privacy_breach_runs() {
    privacy_breach::run_example().unwrap();
}

#[test]
fn ambiguity_witness_runs() {
    ambiguity_witness::run_example().unwrap();
}

#[test]
fn trace_export_runs() {
    trace_export::run_example().unwrap();
}
