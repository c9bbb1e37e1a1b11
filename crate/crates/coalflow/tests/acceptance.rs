//! The full verification battery, one test per criterion, at the stated
//! replicate counts and tolerances. Each test prints its pass/fail line;
//! run with `--nocapture` to see them as they complete.

use coalflow::suite::{run_criterion, SuiteKind, SuiteSettings};

fn run(id: usize) {
    let settings = SuiteSettings::new(SuiteKind::Full);
    let outcome = run_criterion(id, &settings).expect("criterion ran");
    println!("{}", outcome.line());
    for report in &outcome.reports {
        println!(
            "    {} value={:.6} threshold={:.6} {}",
            report.name,
            report.value,
            report.threshold,
            if report.pass { "ok" } else { "FAIL" }
        );
    }
    assert!(
        outcome.passed,
        "criterion {id} failed: {:#?}",
        outcome.reports
    );
}

#[test]
fn criterion_1_covariation_law() {
    run(1);
}

#[test]
fn criterion_2_coalescence_probability() {
    run(2);
}

#[test]
fn criterion_3_feller_exactness() {
    run(3);
}

#[test]
fn criterion_4_excursion_ensemble() {
    run(4);
}

#[test]
fn criterion_5_martingale_and_qv() {
    run(5);
}

#[test]
fn criterion_6_moment_duality() {
    run(6);
}

#[test]
fn criterion_7_flow_scaling() {
    run(7);
}

#[test]
fn criterion_8_superprocess_scaling() {
    run(8);
}

#[test]
fn criterion_9_determinism() {
    run(9);
}
