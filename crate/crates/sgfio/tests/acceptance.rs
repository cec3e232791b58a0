//! Acceptance gate: one test per headline capability so the harness
//! prints one pass/fail line each. Run with `-- --nocapture` to see the
//! measured values on passing checks too.

use sgfio::acceptance::{self, CriterionResult};

fn gate(result: CriterionResult) {
    let verdict = if result.pass { "PASS" } else { "FAIL" };
    let line = format!(
        "criterion {:02} {:<26} {} measured {:.3e} budget {:.3e} [{} ms] {}",
        result.index,
        result.name,
        verdict,
        result.measured,
        result.budget,
        result.elapsed_ms,
        result.detail
    );
    println!("{line}");
    assert!(result.pass, "{line}");
}

#[test]
fn criterion_01_identity_reduction() {
    gate(acceptance::identity_reduction());
}

#[test]
fn criterion_02_plane_phase_consistency() {
    gate(acceptance::plane_phase_consistency());
}

#[test]
fn criterion_03_adjoint_pairing() {
    gate(acceptance::adjoint_pairing());
}

#[test]
fn criterion_04_terminating_composition() {
    gate(acceptance::terminating_composition());
}

#[test]
fn criterion_05_classical_reduction() {
    gate(acceptance::classical_reduction());
}

#[test]
fn criterion_06_remainder_order_drop() {
    gate(acceptance::remainder_order_drop());
}

#[test]
fn criterion_07_phase_envelope_decay() {
    gate(acceptance::phase_envelope_decay());
}

#[test]
fn criterion_08_pair_composition() {
    gate(acceptance::pair_composition());
}

#[test]
fn criterion_09_parametrix_defect_order() {
    gate(acceptance::parametrix_defect_order());
}

#[test]
fn criterion_10_egorov_leading_symbol() {
    gate(acceptance::egorov_leading_symbol());
}

#[test]
fn criterion_11_norm_stability() {
    gate(acceptance::norm_stability());
}

#[test]
fn criterion_12_structure_functions() {
    gate(acceptance::structure_functions());
}

#[test]
fn criterion_13_jet_integrity() {
    gate(acceptance::jet_integrity());
}
