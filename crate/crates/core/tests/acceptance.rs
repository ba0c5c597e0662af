//! Acceptance suite: one test per acceptance criterion, each printing a
//! pass/fail line (run with `cargo test --test acceptance -- --nocapture`
//! to see them all).
//!
//! Criterion 4 (the published delta = 0.2 SharES table) is asserted exactly
//! as stated — required sizes within +/-1 of the published values — and
//! fails: the published table was evaluated on a step-10 grid of cell sizes
//! (every printed entry is congruent to 1 mod 10), so the true minimal sizes
//! sit well below several printed entries. The companion test
//! `shares_table2_explained_by_coarse_search_grid` pins the exact
//! relationship between the computed and published values.

use splitplot_lcrt::correlation::CorrelationStructure;
use splitplot_lcrt::design::{cell_plan, CellSizes, TrialDesign};
use splitplot_lcrt::power::power_for;
use splitplot_lcrt::variance::{effect_variance, v_lcrt, EffectQuery, Estimand, Model};
use splitplot_lcrt::verify::{
    self, coarse_grid_value, shares_required_sizes, VerifyOptions, TABLE1_BLOCK,
    TABLE1_EXCHANGEABLE, TABLE2_BLOCK, TABLE2_EXCHANGEABLE, TABLE_ROWS,
};
use std::sync::OnceLock;
use std::time::Instant;

/// The shared verification run: a >= 220-configuration oracle sweep plus the
/// Monte-Carlo suite, computed once per test process.
fn shared_report() -> &'static verify::VerifyReport {
    static REPORT: OnceLock<verify::VerifyReport> = OnceLock::new();
    REPORT.get_or_init(|| verify::run_verification(&VerifyOptions::default()))
}

fn criterion_line(n: u32, passed: bool, summary: &str) {
    println!(
        "ACCEPTANCE criterion {n}: {} - {summary}",
        if passed { "PASS" } else { "FAIL" }
    );
}

fn assert_check(n: u32, name: &str) {
    let report = shared_report();
    let check = report
        .check(name)
        .unwrap_or_else(|| panic!("missing verification property {name}"));
    criterion_line(
        n,
        check.passed,
        &format!(
            "{name}: worst {:e} against tolerance {:e} ({})",
            check.worst, check.tolerance, check.detail
        ),
    );
    assert!(check.passed, "criterion {n} failed: {}", check.detail);
}

#[test]
fn criterion_1_closed_forms_match_gls_oracle() {
    // >= 200 randomised configurations, every dispatch-table variance within
    // relative 1e-8 of the dense GLS covariance entry.
    assert_check(1, "closed_forms_vs_gls_oracle");
}

#[test]
fn criterion_2_dual_oracle_paths_agree() {
    // Individual-level GLS and the collapsed cell-mean GLS within 1e-10 on
    // the variable-cell-size configurations.
    assert_check(2, "full_vs_collapsed_gls");
}

#[test]
fn criterion_3_shares_table_delta_035() {
    let start = Instant::now();
    let exch = CorrelationStructure::exchangeable(1.0, 0.2).unwrap();
    let block = CorrelationStructure::new(1.0, 0.24, 0.192).unwrap();
    let got_exch = shares_required_sizes(&exch, 0.35);
    let got_block = shares_required_sizes(&block, 0.35);
    let elapsed = start.elapsed();

    let exch_exact = got_exch == TABLE1_EXCHANGEABLE.to_vec();
    let block_within_1 = got_block
        .iter()
        .zip(TABLE1_BLOCK.iter())
        .all(|(&g, &p)| g.abs_diff(p) <= 1);

    // The known block-exchangeable interaction cell: computed 6 where the
    // published table prints 5; power at 5 falls just short of 0.80.
    let d = TrialDesign::shares();
    let plan5 = cell_plan(&d, CellSizes::Constant(5), 0.5).unwrap();
    let q = EffectQuery::new(Estimand::Interaction, Model::WithInteraction).unwrap();
    let var5 = effect_variance(&d, &plan5, &block, q).unwrap().value;
    let power5 = power_for(var5, 0.35, 0.05).unwrap();
    println!(
        "criterion 3 documentation: block interaction cell computed m = {} vs published 5; \
         power at m = 5 is {power5:.4}",
        got_block[2]
    );

    let passed = exch_exact
        && block_within_1
        && got_block[2] == 6
        && (0.78..0.80).contains(&power5)
        && elapsed.as_secs_f64() < 1.0;
    criterion_line(
        3,
        passed,
        &format!(
            "exchangeable {got_exch:?} (published {TABLE1_EXCHANGEABLE:?}, exact match {exch_exact}), \
             block {got_block:?} (published {TABLE1_BLOCK:?}, within 1 {block_within_1}), \
             computed in {elapsed:?}"
        ),
    );
    assert!(exch_exact, "exchangeable column: got {got_exch:?}");
    assert!(block_within_1, "block column: got {got_block:?}");
    assert_eq!(got_block[2], 6, "the documented interaction-cell discrepancy");
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
}

#[test]
fn criterion_4_shares_table_delta_02_published_values() {
    let exch = CorrelationStructure::exchangeable(1.0, 0.2).unwrap();
    let block = CorrelationStructure::new(1.0, 0.24, 0.192).unwrap();
    let got_exch = shares_required_sizes(&exch, 0.2);
    let got_block = shares_required_sizes(&block, 0.2);

    let mut failures = Vec::new();
    for (scenario, got, published) in [
        ("exchangeable", &got_exch, &TABLE2_EXCHANGEABLE),
        ("block-exchangeable", &got_block, &TABLE2_BLOCK),
    ] {
        for ((&(est, model), &fine), &printed) in
            TABLE_ROWS.iter().zip(got.iter()).zip(published.iter())
        {
            let within = fine.abs_diff(printed) <= 1;
            println!(
                "criterion 4 cell {scenario} {est}/{model}: computed minimal m = {fine}, \
                 published {printed}, |diff| = {} ({}); published value equals the computed one \
                 rounded up to the step-10 grid {{1, 11, 21, ...}}: {}",
                fine.abs_diff(printed),
                if within { "within 1" } else { "OUTSIDE +/-1" },
                printed == coarse_grid_value(fine),
            );
            if !within {
                failures.push(format!("{scenario} {est}/{model}: computed {fine} vs published {printed}"));
            }
        }
    }
    let passed = failures.is_empty();
    criterion_line(
        4,
        passed,
        &format!(
            "computed exchangeable {got_exch:?} vs published {TABLE2_EXCHANGEABLE:?}; \
             computed block {got_block:?} vs published {TABLE2_BLOCK:?}"
        ),
    );
    assert!(
        passed,
        "published delta = 0.2 table not reproduced within +/-1: {}.\n\
         The published values lie on a step-10 search grid {{1, 11, 21, ...}} (every printed \
         entry is 1 mod 10); the minimal cell sizes under the same variance formulas that \
         reproduce the delta = 0.35 table exactly are smaller. See \
         shares_table2_explained_by_coarse_search_grid for the pinned relationship.",
        failures.join("; ")
    );
}

#[test]
fn shares_table2_explained_by_coarse_search_grid() {
    // Documented reality for the delta = 0.2 published table: every published
    // entry equals the computed minimal size rounded up to the step-10 grid
    // {1, 11, 21, ...}, except the borderline block cluster/interaction cell
    // where the computed minimal size (72) is within 1 of the published 71
    // (the power at 71 is 0.7990, a hair under the 0.80 target).
    let exch = CorrelationStructure::exchangeable(1.0, 0.2).unwrap();
    let block = CorrelationStructure::new(1.0, 0.24, 0.192).unwrap();
    let got_exch = shares_required_sizes(&exch, 0.2);
    let got_block = shares_required_sizes(&block, 0.2);
    assert_eq!(got_exch, vec![18, 9, 17, 13, 5]);
    assert_eq!(got_block, vec![72, 8, 16, 54, 4]);
    for (got, published) in [
        (&got_exch, &TABLE2_EXCHANGEABLE),
        (&got_block, &TABLE2_BLOCK),
    ] {
        for (&fine, &printed) in got.iter().zip(published.iter()) {
            assert!(
                printed == coarse_grid_value(fine) || fine.abs_diff(printed) <= 1,
                "computed {fine} vs published {printed}"
            );
        }
    }
    // The borderline cell: power at the published 71 just misses the target.
    let d = TrialDesign::shares();
    let plan = cell_plan(&d, CellSizes::Constant(71), 0.5).unwrap();
    let q = EffectQuery::new(Estimand::ClusterConditional, Model::WithInteraction).unwrap();
    let var = effect_variance(&d, &plan, &block, q).unwrap().value;
    let p71 = power_for(var, 0.2, 0.05).unwrap();
    assert!((0.798..0.800).contains(&p71), "power at 71 is {p71}");
}

#[test]
fn criterion_5_analytic_identities() {
    // Ratio identities, conditional-minus-marginal gap, bitwise invariance
    // to the between-period ICC, and the variable-to-fixed reduction, all at
    // 1e-12 relative.
    assert_check(5, "analytic_identities");
}

#[test]
fn criterion_6_monte_carlo_validation() {
    let start = Instant::now();
    assert_check(6, "monte_carlo_estimator_covariance");
    // The shared report may have been computed in another test; bound the
    // cost of one standalone run as the criterion asks.
    let standalone = verify::check_monte_carlo(&VerifyOptions::default());
    let elapsed = start.elapsed();
    assert!(standalone.passed, "{}", standalone.detail);
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}");
}

#[test]
fn criterion_7_curve_shapes() {
    // Monotone decreasing variances in m with an interaction/cluster
    // crossover, and the same ordering change along the within-period ICC at
    // a fixed 0.8 ICC ratio. The CSV-level behaviour of the curve command is
    // exercised in the CLI integration tests.
    assert_check(7, "curve_monotonicity_and_crossover");
}

#[test]
fn criterion_8_v_lcrt_spot_check_and_multiplier() {
    let d = TrialDesign::stepped_wedge(3).unwrap();
    let corr = CorrelationStructure::new(1.0, 0.0, 0.0).unwrap();
    let v = v_lcrt(&d, 1, &corr).unwrap();
    criterion_line(
        8,
        v == 2.0,
        &format!("stepped_wedge(3), m = 1, iid gives V_LCRT = {v} (hand value 2)"),
    );
    assert_eq!(v, 2.0);
    assert_check(8, "v_lcrt_ols_spot_check");
    assert_check(8, "cluster_multiplier_vs_replication_loop");
}
