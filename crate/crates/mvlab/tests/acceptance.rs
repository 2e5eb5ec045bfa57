//! Acceptance suite at full budget: one pass/fail line per criterion.
//!
//! Run with `cargo test -p mvlab --test acceptance -- --nocapture` to see the
//! lines; the suite takes a few minutes at full scale on one core.

use mvlab::experiments::acceptance::{
    run_acceptance_suite, AcceptanceConfig, Budget, DEFAULT_SEED,
};

#[test]
fn full_acceptance_suite() {
    let cfg = AcceptanceConfig { budget: Budget::Full, seed: DEFAULT_SEED, zero_tolerance: false };
    let report = run_acceptance_suite(&cfg, None);
    for line in report.lines() {
        println!("{line}");
    }
    println!(
        "acceptance: {}/{} criteria passed in {:.1}s",
        report.outcomes.iter().filter(|o| o.passed).count(),
        report.outcomes.len(),
        report.wall_s
    );
    assert_eq!(report.outcomes.len(), 11);
    assert!(
        report.passed,
        "failed criteria: {:?}",
        report.failed_names()
    );
}

#[test]
fn zero_tolerance_fixture_fails_with_named_criteria() {
    let cfg = AcceptanceConfig { budget: Budget::Quick, seed: DEFAULT_SEED, zero_tolerance: true };
    let report = run_acceptance_suite(&cfg, Some("transport-exactness"));
    assert_eq!(report.outcomes.len(), 1);
    assert!(!report.passed);
    assert_eq!(report.failed_names(), vec!["transport-exactness"]);
}

#[test]
fn quick_suite_reruns_bitwise() {
    let cfg = AcceptanceConfig { budget: Budget::Quick, seed: 7, zero_tolerance: false };
    let first = run_acceptance_suite(&cfg, Some("chaos-one-dim"));
    let second = run_acceptance_suite(&cfg, Some("chaos-one-dim"));
    assert_eq!(first.outcomes.len(), 1);
    for (a, b) in first.outcomes.iter().zip(&second.outcomes) {
        assert_eq!(a.measured.len(), b.measured.len());
        for ((ka, va), (kb, vb)) in a.measured.iter().zip(&b.measured) {
            assert_eq!(ka, kb);
            assert_eq!(va.to_bits(), vb.to_bits(), "{ka} differs between reruns");
        }
    }
}
