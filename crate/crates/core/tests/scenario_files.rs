//! The shipped scenario files must stay in sync with the built-ins.

use driftcomp_core::scenario::Scenario;
use std::path::Path;

#[test]
fn shipped_scenarios_match_builtins() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    for name in ["reference", "crossing", "motion-only"] {
        let path = dir.join(format!("{name}.json"));
        let json = std::fs::read_to_string(&path)
            .unwrap_or_else(|e| panic!("reading {}: {e}", path.display()));
        let parsed = Scenario::from_json(&json).expect("scenario file parses");
        let builtin = Scenario::builtin(name).unwrap();
        assert_eq!(parsed, builtin, "{name}.json diverged from the built-in");
    }
}
