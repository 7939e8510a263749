use govledger_core::fraction::Fraction;
use govledger_core::sim::{run, Invariant, SimulationOutcome};
use govledger_core::suite::*;

fn failures(out: &SimulationOutcome) -> Vec<String> {
    out.report.invariants.iter().filter(|i| !i.passed).map(|i| format!("{:?}: {}", i.name, i.detail)).collect()
}

#[test]
fn busy_delegates_keep_every_invariant() {
    let mut s = with_busy_delegates(base_scenario("busy", 9, 4, 250));
    s.invariants.push(Invariant::WitnessExclusion);
    s.invariants.push(Invariant::StakeConsistency);
    s.invariants.push(Invariant::KeyContainment);
    let out = run(&s).unwrap();
    assert!(failures(&out).is_empty(), "{:?}", failures(&out));
    assert_eq!(out.report.sealed_blocks, 50);
}

#[test]
fn crashed_department_does_not_stall() {
    for seed in 0..5 {
        let out = run(&crash_scenario(seed, 40, "dept-3", 12)).unwrap();
        assert!(failures(&out).is_empty(), "seed {seed}: {:?}", failures(&out));
        assert_eq!(out.report.sealed_blocks, 8);
    }
}

#[test]
fn induced_forks_resolve_within_two_rounds() {
    for seed in 0..10 {
        let out = run(&fork_scenario(seed, 2)).unwrap();
        assert!(failures(&out).is_empty(), "seed {seed}: {:?}", failures(&out));
        let f = &out.report.forks[0];
        assert!(f.rounds_to_resolve.unwrap() <= 2, "{f:?}");
        assert!(!out.report.orphans.is_empty());
    }
}

#[test]
fn coalition_needs_threshold_stake() {
    let t = Fraction::new(51, 100).unwrap();
    let rows = coalition_sweep(
        &[Fraction::new(1, 10).unwrap(), Fraction::new(4, 10).unwrap(), Fraction::new(49, 100).unwrap(), Fraction::new(7, 10).unwrap()],
        t,
    );
    for r in &rows[..3] {
        assert!(!r.coalition_sealed && !r.honest_finalized, "{r:?}");
    }
    assert!(rows[3].coalition_sealed && rows[3].honest_finalized, "{:?}", rows[3]);
}

#[test]
fn recovery_keeps_history() {
    let out = run(&recovery_scenario(2)).unwrap();
    assert!(failures(&out).is_empty(), "{:?}", failures(&out));
}

#[test]
fn lightweight_citizen_verifies() {
    let out = run(&lightweight_scenario(2)).unwrap();
    assert!(failures(&out).is_empty(), "{:?}", failures(&out));
}

#[test]
fn self_transaction_forger_is_caught() {
    for style in [govledger_core::sim::ForgeStyle::SelfTransaction, govledger_core::sim::ForgeStyle::DoubleProposal] {
        let out = run(&forge_scenario(4, style)).unwrap();
        assert!(failures(&out).is_empty(), "{style:?} {:?}", failures(&out));
        assert!(!out.report.evictions.is_empty(), "{style:?}");
    }
}

#[test]
fn service_table_holds() {
    for v in check_table1_services() {
        assert!(v.passed, "{v:?}");
    }
}

#[test]
fn reruns_are_identical() {
    let a = run(&fork_scenario(3, 2)).unwrap();
    let b = run(&fork_scenario(3, 2)).unwrap();
    assert_eq!(a.report_hash, b.report_hash);
}

#[test]
fn bundled_style_scenarios_pass() {
    for s in [honest_small(1), witness_exclusion_scenario(2, 50), tamper_scenario(3), flood_scenario(4)] {
        let out = run(&s).unwrap();
        assert!(failures(&out).is_empty(), "{}: {:?}", s.name, failures(&out));
    }
}

#[test]
fn suite_report_has_table1_and_tight_sweep() {
    let r = suite_report(Fraction::new(51, 100).unwrap());
    assert!(r.passed(), "{r:#?}");
    assert!(!r.coalition_sweep[0].honest_finalized);
    let v = serde_json::to_value(&r).unwrap();
    assert_eq!(v["table1"].as_array().unwrap().len(), 7);
}

#[test]
fn sweep_boundary_follows_configured_threshold() {
    // At two thirds a 0.7 coalition still wins; a 0.6 one does not.
    let t = Fraction::new(2, 3).unwrap();
    let rows = coalition_sweep(&[Fraction::new(6, 10).unwrap(), Fraction::new(7, 10).unwrap()], t);
    assert!(!rows[0].honest_finalized, "{:?}", rows[0]);
    assert!(rows[1].honest_finalized, "{:?}", rows[1]);
}
