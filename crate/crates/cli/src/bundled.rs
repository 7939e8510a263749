//! Scenario files shipped inside the binary, looked up by name when no file
//! or scenario directory provides them.

pub const SCENARIOS: &[(&str, &str)] = &[
    ("coalition_49", include_str!("../scenarios/coalition_49.json")),
    ("crash", include_str!("../scenarios/crash.json")),
    ("flood", include_str!("../scenarios/flood.json")),
    ("fork", include_str!("../scenarios/fork.json")),
    ("honest_liveness", include_str!("../scenarios/honest_liveness.json")),
    ("honest_small", include_str!("../scenarios/honest_small.json")),
    ("lightweight", include_str!("../scenarios/lightweight.json")),
    ("recovery", include_str!("../scenarios/recovery.json")),
    ("self_transaction", include_str!("../scenarios/self_transaction.json")),
    ("tamper", include_str!("../scenarios/tamper.json")),
    ("witness_exclusion", include_str!("../scenarios/witness_exclusion.json")),
];

pub fn get(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".json").unwrap_or(name);
    SCENARIOS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}
