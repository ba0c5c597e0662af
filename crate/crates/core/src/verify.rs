//! The verification suite: closed forms against the dense GLS oracle, the
//! dual oracle routes against each other, analytic identities, published
//! SharES reference tables, Monte-Carlo agreement, and the qualitative curve
//! behaviour. Used by the `verify` CLI command and the acceptance tests.

use crate::correlation::{coefficients, CorrelationStructure};
use crate::design::{cell_plan, CellPlan, CellSizes, TrialDesign};
use crate::norm::norm_quantile;
use crate::oracle::{
    self, empirical_estimator_cov, EffectLabel, OracleModel, Parametrisation, TrialEffects,
};
use crate::power::{
    detectable_delta, power_for, required_cell_size, required_cluster_multiplier, DEFAULT_M_MAX,
};
use crate::variance::{
    contrast_covariance, effect_variance, interaction_ratio_check, v_lcrt, EffectQuery, Estimand,
    Model,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Deliberate closed-form corruptions, used to prove the harness catches
/// formula regressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Corruption {
    /// Multiply the closed-form cluster-conditional variance by 1.01.
    InflateClusterVariance,
}

/// Knobs for one verification run.
#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Minimum number of sweep configurations for the oracle-equivalence
    /// property.
    pub min_sweep_configs: usize,
    pub mc_replicates: usize,
    pub run_monte_carlo: bool,
    pub corruption: Option<Corruption>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 987_654_321,
            min_sweep_configs: 220,
            mc_replicates: 2000,
            run_monte_carlo: true,
            corruption: None,
        }
    }
}

/// Outcome of one verified property.
#[derive(Debug, Clone)]
pub struct PropertyCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed deviation, in the units of `tolerance`.
    pub worst: f64,
    pub tolerance: f64,
    pub detail: String,
}

/// Full verification report.
#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub checks: Vec<PropertyCheck>,
    pub notes: Vec<String>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "{}: {} (worst {:e}, tolerance {:e}) {}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.worst,
                c.tolerance,
                c.detail
            ));
        }
        for n in &self.notes {
            out.push_str(&format!("note: {n}\n"));
        }
        out.push_str(&format!(
            "result: {}\n",
            if self.all_passed() { "all properties passed" } else { "FAILURES PRESENT" }
        ));
        out
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn matrix_rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.abs().max().max(b.abs().max()).max(f64::MIN_POSITIVE);
    (a - b).abs().max() / scale
}

// ---------------------------------------------------------------------------
// Sweep configuration generation
// ---------------------------------------------------------------------------

struct SweepConfig {
    design: TrialDesign,
    plan: CellPlan,
    corr: CorrelationStructure,
    /// Whether `pi_z * m` is integral in every cell, i.e. whether the
    /// individual-level oracle can represent the trial. Otherwise the
    /// collapsed (cell-mean) oracle provides the analytic continuation.
    integral: bool,
    variable: bool,
}

fn split_is_integral(plan: &CellPlan) -> bool {
    for i in 0..plan.clusters() {
        for j in 0..plan.periods() {
            let exact = plan.pi_z() * plan.size(i, j) as f64;
            if (exact - exact.round()).abs() > 1e-9 {
                return false;
            }
        }
    }
    true
}

fn random_design(rng: &mut ChaCha12Rng) -> Option<TrialDesign> {
    let t = rng.random_range(1..=5usize);
    let n = rng.random_range(2..=8usize);
    let rows: Vec<(Vec<u8>, usize)> = (0..n)
        .map(|_| ((0..t).map(|_| rng.random_range(0..=1u8)).collect(), 1))
        .collect();
    TrialDesign::new(t, rows).ok()
}

fn sweep_configs(opts: &VerifyOptions) -> Vec<SweepConfig> {
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
    let icc_pairs = [(0.0, 0.0), (0.2, 0.2), (0.24, 0.192)];
    let mut configs = Vec::new();
    let mut attempts = 0usize;
    while configs.len() < opts.min_sweep_configs && attempts < opts.min_sweep_configs * 60 {
        attempts += 1;
        let Some(design) = random_design(&mut rng) else {
            continue;
        };
        let (wp, bp) = icc_pairs[rng.random_range(0..icc_pairs.len())];
        let sigma2 = if rng.random_bool(0.5) { 1.0 } else { 1.7 };
        let corr = CorrelationStructure::new(sigma2, wp, bp).unwrap();
        let n = design.clusters();
        let t = design.periods();
        let variable = rng.random_bool(0.5);
        // Half the configurations keep pi_z * m integral in every cell so the
        // individual-level oracle applies; the rest exercise the collapsed
        // route's analytic continuation.
        let want_integral = rng.random_bool(0.5);
        let per_cell = |rng: &mut ChaCha12Rng, choices: &[u64]| {
            CellSizes::PerCell(
                (0..n)
                    .map(|_| (0..t).map(|_| choices[rng.random_range(0..choices.len())]).collect())
                    .collect(),
            )
        };
        let (pi_z, sizes) = match (variable, want_integral) {
            (true, true) => {
                if rng.random_bool(0.8) {
                    (0.5, per_cell(&mut rng, &[2, 4, 6]))
                } else {
                    (0.2, per_cell(&mut rng, &[5]))
                }
            }
            (true, false) => {
                let pi_z = if rng.random_bool(0.5) { 0.5 } else { 0.2 };
                (pi_z, per_cell(&mut rng, &[1, 2, 3, 4, 5, 6]))
            }
            (false, true) => {
                if rng.random_bool(0.7) {
                    (0.5, CellSizes::Constant([2u64, 4, 6][rng.random_range(0..3)]))
                } else {
                    (0.2, CellSizes::Constant(5))
                }
            }
            (false, false) => {
                let pi_z = if rng.random_bool(0.5) { 0.5 } else { 0.2 };
                let choices: &[u64] = if pi_z == 0.5 { &[1, 3, 5] } else { &[1, 2, 3, 4, 6] };
                (pi_z, CellSizes::Constant(choices[rng.random_range(0..choices.len())]))
            }
        };
        let Ok(plan) = cell_plan(&design, sizes, pi_z) else {
            continue;
        };
        // Keep only configurations where the design is estimable: probe the
        // cheapest oracle route.
        if oracle::collapsed_gls(&design, &plan, &corr, OracleModel::WithInteraction, Parametrisation::Centred)
            .is_err()
        {
            continue;
        }
        let integral = split_is_integral(&plan);
        configs.push(SweepConfig {
            design,
            plan,
            corr,
            integral,
            variable,
        });
    }
    configs
}

// ---------------------------------------------------------------------------
// Individual properties
// ---------------------------------------------------------------------------

fn closed_value(
    cfg: &SweepConfig,
    estimand: Estimand,
    model: Model,
    corruption: Option<Corruption>,
) -> crate::error::Result<f64> {
    let q = EffectQuery::new(estimand, model)?;
    let mut v = effect_variance(&cfg.design, &cfg.plan, &cfg.corr, q)?.value;
    if corruption == Some(Corruption::InflateClusterVariance)
        && estimand == Estimand::ClusterConditional
    {
        v *= 1.01;
    }
    Ok(v)
}

/// Closed forms against the dense GLS oracle on every sweep configuration.
fn check_closed_vs_oracle(
    configs: &[SweepConfig],
    opts: &VerifyOptions,
) -> (PropertyCheck, usize, f64) {
    const TOL: f64 = 1e-8;
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    let mut comparisons = 0usize;
    let mut failed_config = None;
    let mut max_condition: f64 = 0.0;
    for (idx, cfg) in configs.iter().enumerate() {
        let gls = |model: OracleModel, param: Parametrisation| {
            if cfg.integral {
                oracle::full_gls(&cfg.design, &cfg.plan, &cfg.corr, model, param)
            } else {
                oracle::collapsed_gls(&cfg.design, &cfg.plan, &cfg.corr, model, param)
            }
        };
        let cen = gls(OracleModel::WithInteraction, Parametrisation::Centred);
        let raw = gls(OracleModel::WithInteraction, Parametrisation::Raw);
        let cen_no = gls(OracleModel::NoInteraction, Parametrisation::Centred);
        let (Ok(cen), Ok(raw), Ok(cen_no)) = (cen, raw, cen_no) else {
            failed_config = Some(idx);
            continue;
        };
        max_condition = max_condition.max(cen.condition).max(raw.condition).max(cen_no.condition);
        let cases = [
            (Estimand::Individual, Model::WithInteraction, cen.variance(EffectLabel::Individual)),
            (Estimand::Interaction, Model::WithInteraction, cen.variance(EffectLabel::Interaction)),
            (Estimand::ClusterMarginal, Model::WithInteraction, cen.variance(EffectLabel::Cluster)),
            (Estimand::ClusterConditional, Model::WithInteraction, raw.variance(EffectLabel::Cluster)),
            (Estimand::Individual, Model::NoInteraction, cen_no.variance(EffectLabel::Individual)),
            (Estimand::ClusterConditional, Model::NoInteraction, cen_no.variance(EffectLabel::Cluster)),
        ];
        for (est, model, oracle_value) in cases {
            let (Ok(closed), Some(reference)) =
                (closed_value(cfg, est, model, opts.corruption), oracle_value)
            else {
                failed_config = Some(idx);
                continue;
            };
            comparisons += 1;
            let r = rel_err(closed, reference);
            if r > worst {
                worst = r;
                worst_at = format!(
                    "worst at {est}/{model}, n={}, T={}, {} sizes",
                    cfg.design.clusters(),
                    cfg.design.periods(),
                    if cfg.variable { "per-cell" } else { "constant" },
                );
            }
        }
    }
    let passed = worst <= TOL && failed_config.is_none() && comparisons > 0;
    let detail = if let Some(idx) = failed_config {
        format!("oracle/closed route disagreed on estimability at config {idx}")
    } else {
        format!("{comparisons} comparisons over {} configurations; {worst_at}", configs.len())
    };
    (
        PropertyCheck {
            name: "closed_forms_vs_gls_oracle",
            passed,
            worst,
            tolerance: TOL,
            detail,
        },
        comparisons,
        max_condition,
    )
}

/// Full individual-level GLS against the collapsed cell-mean GLS.
fn check_dual_path(configs: &[SweepConfig]) -> PropertyCheck {
    const TOL: f64 = 1e-10;
    let mut worst: f64 = 0.0;
    let mut compared = 0usize;
    for cfg in configs.iter().filter(|c| c.integral && c.variable) {
        for (model, param) in [
            (OracleModel::WithInteraction, Parametrisation::Centred),
            (OracleModel::WithInteraction, Parametrisation::Raw),
            (OracleModel::NoInteraction, Parametrisation::Centred),
        ] {
            let full = oracle::full_gls(&cfg.design, &cfg.plan, &cfg.corr, model, param);
            let coll = oracle::collapsed_gls(&cfg.design, &cfg.plan, &cfg.corr, model, param);
            if let (Ok(full), Ok(coll)) = (full, coll) {
                compared += 1;
                worst = worst.max(matrix_rel_err(&full.matrix, &coll.matrix));
            }
        }
    }
    PropertyCheck {
        name: "full_vs_collapsed_gls",
        passed: worst <= TOL && compared > 0,
        worst,
        tolerance: TOL,
        detail: format!("{compared} covariance matrices on variable-size configurations"),
    }
}

/// Sherman-Morrison inverse of the collapsed covariance against a dense inverse.
fn check_sherman_morrison(configs: &[SweepConfig]) -> PropertyCheck {
    const TOL: f64 = 1e-10;
    let mut worst: f64 = 0.0;
    let mut compared = 0usize;
    for cfg in configs.iter().filter(|c| c.variable).take(40) {
        let Ok(m) = oracle::build_collapsed_matrices(
            &cfg.design,
            &cfg.plan,
            &cfg.corr,
            OracleModel::WithInteraction,
            Parametrisation::Centred,
        ) else {
            continue;
        };
        for cl in &m.clusters {
            let sm = cl.sherman_morrison_inverse(m.sigma2_cluster);
            if let Some(dense) = cl.sigma_dense.clone().try_inverse() {
                compared += 1;
                worst = worst.max(matrix_rel_err(&sm, &dense));
            }
        }
    }
    PropertyCheck {
        name: "sherman_morrison_vs_dense_inverse",
        passed: worst <= TOL && compared > 0,
        worst,
        tolerance: TOL,
        detail: format!("{compared} per-cluster inverses"),
    }
}

/// The covariance coefficients compose with the covariance structure to the
/// identity matrix.
fn check_coefficient_identity(opts: &VerifyOptions) -> PropertyCheck {
    const TOL: f64 = 1e-10;
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed ^ 0xC0FFEE);
    let mut worst: f64 = 0.0;
    for _ in 0..25 {
        let wp: f64 = rng.random_range(0.0..0.9);
        let bp = wp * rng.random_range(0.0..=1.0);
        let sigma2 = rng.random_range(0.2..3.0);
        let corr = CorrelationStructure::new(sigma2, wp, bp).unwrap();
        let m = rng.random_range(1..=8u64);
        let t = rng.random_range(1..=6usize);
        if m as usize * t > 200 {
            continue;
        }
        let k = coefficients(&corr, m, t).unwrap();
        let dim = m as usize * t;
        let structure = |a: f64, b: f64, c: f64, scale: f64| {
            DMatrix::<f64>::from_fn(dim, dim, |r, s| {
                let mut v = c;
                if r / m as usize == s / m as usize {
                    v += b;
                }
                if r == s {
                    v += a;
                }
                v * scale
            })
        };
        let sigma = structure(k.a1, k.b1, k.c1, sigma2);
        let inv = structure(k.a2, k.b2, k.c2, 1.0 / sigma2);
        let prod = &sigma * &inv;
        let eye = DMatrix::<f64>::identity(dim, dim);
        worst = worst.max((&prod - &eye).abs().max());
    }
    PropertyCheck {
        name: "covariance_coefficient_inverse_identity",
        passed: worst <= TOL,
        worst,
        tolerance: TOL,
        detail: "25 random structures, dense product against the identity".to_string(),
    }
}

/// The exact algebraic identities among the closed forms.
fn check_analytic_identities(configs: &[SweepConfig]) -> PropertyCheck {
    const TOL: f64 = 1e-12;
    let mut worst: f64 = 0.0;
    let mut bitwise_ok = true;
    let mut checked = 0usize;
    for cfg in configs.iter() {
        let d = &cfg.design;
        let corr = &cfg.corr;
        let pi_z = cfg.plan.pi_z();

        // Requires both treatment fractions strictly inside (0, 1), which
        // the design constructor guarantees.
        if let Some(m) = cfg.plan.constant_size() {
            let plan = &cfg.plan;
            let (r1, r2) = interaction_ratio_check(d, plan, corr).unwrap();
            let pi_x = d.summarize().pi_x;
            worst = worst.max(rel_err(r1, 1.0 / (1.0 - pi_x)));
            worst = worst.max(rel_err(r2, pi_x));

            // Variable-size formulas reduce exactly to the fixed-size ones.
            let uniform = cell_plan(
                d,
                CellSizes::PerCell(vec![vec![m; d.periods()]; d.clusters()]),
                pi_z,
            )
            .unwrap();
            for (est, model) in [
                (Estimand::Individual, Model::WithInteraction),
                (Estimand::Interaction, Model::WithInteraction),
                (Estimand::ClusterMarginal, Model::WithInteraction),
                (Estimand::ClusterConditional, Model::WithInteraction),
                (Estimand::Individual, Model::NoInteraction),
                (Estimand::ClusterConditional, Model::NoInteraction),
            ] {
                let q = EffectQuery::new(est, model).unwrap();
                let a = effect_variance(d, plan, corr, q).unwrap().value;
                let b = effect_variance(d, &uniform, corr, q).unwrap().value;
                worst = worst.max(rel_err(a, b));
            }
        }

        // Conditional minus marginal equals pi_z^2 times the interaction
        // variance, in both size regimes.
        let q_cond = EffectQuery::new(Estimand::ClusterConditional, Model::WithInteraction).unwrap();
        let q_marg = EffectQuery::new(Estimand::ClusterMarginal, Model::WithInteraction).unwrap();
        let q_ic = EffectQuery::new(Estimand::Interaction, Model::WithInteraction).unwrap();
        let cond = effect_variance(d, &cfg.plan, corr, q_cond).unwrap().value;
        let marg = effect_variance(d, &cfg.plan, corr, q_marg).unwrap().value;
        let vic = effect_variance(d, &cfg.plan, corr, q_ic).unwrap().value;
        worst = worst.max(((cond - marg) - pi_z * pi_z * vic).abs() / cond);

        // Individual and interaction variances never read the between-period
        // ICC: perturbing it leaves them bit-identical.
        let perturbed = CorrelationStructure::new(
            corr.sigma2_total(),
            corr.wpicc(),
            corr.wpicc() * 0.31,
        )
        .unwrap();
        let q_i = EffectQuery::new(Estimand::Individual, Model::WithInteraction).unwrap();
        for q in [q_i, q_ic] {
            let a = effect_variance(d, &cfg.plan, corr, q).unwrap().value;
            let b = effect_variance(d, &cfg.plan, &perturbed, q).unwrap().value;
            if a.to_bits() != b.to_bits() {
                bitwise_ok = false;
            }
        }
        checked += 1;
    }
    PropertyCheck {
        name: "analytic_identities",
        passed: worst <= TOL && bitwise_ok && checked > 0,
        worst,
        tolerance: TOL,
        detail: format!(
            "{checked} configurations; between-period ICC invariance bitwise {}",
            if bitwise_ok { "exact" } else { "VIOLATED" }
        ),
    }
}

/// Contrast covariance equals the oracle propagation and is symmetric PSD.
fn check_contrast_covariance(configs: &[SweepConfig]) -> PropertyCheck {
    const TOL: f64 = 1e-10;
    let mut worst: f64 = 0.0;
    let mut compared = 0usize;
    for cfg in configs.iter().filter(|c| c.integral && !c.variable).take(30) {
        let Ok(cc) = contrast_covariance(&cfg.design, &cfg.plan, &cfg.corr) else {
            continue;
        };
        let Ok(g) = oracle::full_gls(
            &cfg.design,
            &cfg.plan,
            &cfg.corr,
            OracleModel::WithInteraction,
            Parametrisation::Centred,
        ) else {
            continue;
        };
        let pi_z = cfg.plan.pi_z();
        let base = nalgebra::Matrix3::new(
            g.matrix[(0, 0)], g.matrix[(0, 1)], g.matrix[(0, 2)],
            g.matrix[(1, 0)], g.matrix[(1, 1)], g.matrix[(1, 2)],
            g.matrix[(2, 0)], g.matrix[(2, 1)], g.matrix[(2, 2)],
        );
        let l = nalgebra::Matrix3::new(
            1.0, 0.0, 0.0,
            0.0, -pi_z, 1.0,
            1.0, 1.0 - pi_z, 1.0,
        );
        let reference = l * base * l.transpose();
        let scale = reference.abs().max();
        worst = worst.max((cc.matrix - reference).abs().max() / scale);

        let m = DMatrix::from_fn(3, 3, |r, c| cc.matrix[(r, c)]);
        let eig = nalgebra::linalg::SymmetricEigen::new(m);
        let min_ev = eig.eigenvalues.min();
        if min_ev < -1e-10 * eig.eigenvalues.max() {
            worst = worst.max(1.0);
        }
        compared += 1;
    }
    PropertyCheck {
        name: "contrast_covariance_vs_oracle",
        passed: worst <= TOL && compared > 0,
        worst,
        tolerance: TOL,
        detail: format!("{compared} equal-size configurations, 3x3 matrices and PSD"),
    }
}

/// Hand-checkable value: stepped wedge over 3 periods, one observation per
/// cell, independent outcomes has V_LCRT exactly 2.
fn check_v_lcrt_spot(_opts: &VerifyOptions) -> PropertyCheck {
    const TOL: f64 = 1e-12;
    let d = TrialDesign::stepped_wedge(3).unwrap();
    let corr = CorrelationStructure::new(1.0, 0.0, 0.0).unwrap();
    let v = v_lcrt(&d, 1, &corr).unwrap();
    let worst = (v - 2.0).abs();
    PropertyCheck {
        name: "v_lcrt_ols_spot_check",
        passed: worst <= TOL,
        worst,
        tolerance: TOL,
        detail: format!("computed {v}"),
    }
}

/// The ceiling formula for the cluster multiplier agrees with brute-force
/// replication of the design.
fn check_cluster_multiplier(opts: &VerifyOptions) -> PropertyCheck {
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed ^ 0xB0B);
    let mut worst: f64 = 0.0;
    let mut detail = String::new();
    for trial in 0..3 {
        let d = match trial {
            0 => TrialDesign::stepped_wedge(rng.random_range(3..=7usize)).unwrap(),
            1 => TrialDesign::crossover(2 * rng.random_range(1..=3usize)).unwrap(),
            _ => loop {
                if let Some(d) = random_design(&mut rng) {
                    break d;
                }
            },
        };
        let corr = CorrelationStructure::new(1.0, 0.24, 0.192).unwrap();
        let m = rng.random_range(1..=10u64);
        let delta = rng.random_range(0.15..0.5);
        let q = EffectQuery::new(Estimand::ClusterConditional, Model::WithInteraction).unwrap();
        let Ok(k) = required_cluster_multiplier(&d, m, &corr, 0.5, q, delta, 0.05, 0.8) else {
            continue;
        };
        let mut brute = None;
        for j in 1..=(k + 3) {
            let dj = d.replicate(j as usize).unwrap();
            let plan = cell_plan(&dj, CellSizes::Constant(m), 0.5).unwrap();
            let var = effect_variance(&dj, &plan, &corr, q).unwrap().value;
            if power_for(var, delta, 0.05).unwrap() >= 0.8 {
                brute = Some(j);
                break;
            }
        }
        if brute != Some(k) {
            worst = 1.0;
            detail = format!("formula {k} vs replication loop {brute:?}");
        }
    }
    PropertyCheck {
        name: "cluster_multiplier_vs_replication_loop",
        passed: worst == 0.0,
        worst,
        tolerance: 0.0,
        detail: if detail.is_empty() {
            "3 random configurations".to_string()
        } else {
            detail
        },
    }
}

/// Detectable effect round-trips through the power formula.
fn check_delta_roundtrip(opts: &VerifyOptions) -> PropertyCheck {
    const TOL: f64 = 1e-12;
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed ^ 0xDE17A);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let var = 10f64.powf(rng.random_range(-6.0..3.0));
        let target = rng.random_range(0.2..0.99);
        let delta = detectable_delta(var, 0.05, target).unwrap();
        let p = power_for(var, delta, 0.05).unwrap();
        worst = worst.max((p - target).abs());
    }
    PropertyCheck {
        name: "detectable_delta_roundtrip",
        passed: worst <= TOL,
        worst,
        tolerance: TOL,
        detail: "100 random variances".to_string(),
    }
}

/// Normal quantiles pinned to published double-precision values.
fn check_quantile_pins() -> PropertyCheck {
    const TOL: f64 = 1e-9;
    let pins = [
        (0.975, 1.959963984540054),
        (0.8, 0.8416212335729143),
        (0.95, 1.6448536269514722),
        (0.9, 1.2815515655446004),
        (0.5, 0.0),
    ];
    let mut worst: f64 = 0.0;
    for (p, z) in pins {
        worst = worst.max((norm_quantile(p) - z).abs());
    }
    PropertyCheck {
        name: "normal_quantile_pins",
        passed: worst <= TOL,
        worst,
        tolerance: TOL,
        detail: "published values of z_{0.975}, z_{0.8}, z_{0.95}, z_{0.9}, z_{0.5}".to_string(),
    }
}

// ---------------------------------------------------------------------------
// SharES reference tables
// ---------------------------------------------------------------------------

/// The five (model, estimand) rows of the published tables, in print order.
pub const TABLE_ROWS: [(Estimand, Model); 5] = [
    (Estimand::ClusterConditional, Model::WithInteraction),
    (Estimand::Individual, Model::WithInteraction),
    (Estimand::Interaction, Model::WithInteraction),
    (Estimand::ClusterConditional, Model::NoInteraction),
    (Estimand::Individual, Model::NoInteraction),
];

/// Published SharES required cell sizes at delta = 0.35:
/// exchangeable (icc 0.2) and block-exchangeable (0.24 / 0.192) columns.
pub const TABLE1_EXCHANGEABLE: [u64; 5] = [6, 3, 6, 4, 2];
pub const TABLE1_BLOCK: [u64; 5] = [7, 3, 5, 5, 2];

/// Published SharES required cell sizes at delta = 0.2.
pub const TABLE2_EXCHANGEABLE: [u64; 5] = [21, 11, 21, 21, 11];
pub const TABLE2_BLOCK: [u64; 5] = [71, 11, 21, 61, 11];

/// Compute the five required cell sizes for one correlation scenario.
pub fn shares_required_sizes(corr: &CorrelationStructure, delta: f64) -> Vec<u64> {
    let d = TrialDesign::shares();
    TABLE_ROWS
        .iter()
        .map(|&(est, model)| {
            let q = EffectQuery::new(est, model).unwrap();
            required_cell_size(&d, corr, 0.5, q, delta, 0.05, 0.8, DEFAULT_M_MAX).unwrap()
        })
        .collect()
}

fn shares_scenarios() -> (CorrelationStructure, CorrelationStructure) {
    (
        CorrelationStructure::exchangeable(1.0, 0.2).unwrap(),
        CorrelationStructure::new(1.0, 0.24, 0.192).unwrap(),
    )
}

fn check_shares_table1(report_notes: &mut Vec<String>) -> PropertyCheck {
    let (exch, block) = shares_scenarios();
    let got_exch = shares_required_sizes(&exch, 0.35);
    let got_block = shares_required_sizes(&block, 0.35);
    let exch_exact = got_exch == TABLE1_EXCHANGEABLE.to_vec();
    let block_within_1 = got_block
        .iter()
        .zip(TABLE1_BLOCK.iter())
        .all(|(&g, &p)| g.abs_diff(p) <= 1);
    // The known block-exchangeable interaction cell: computed 6, printed 5.
    let d = TrialDesign::shares();
    let q = EffectQuery::new(Estimand::Interaction, Model::WithInteraction).unwrap();
    let plan5 = cell_plan(&d, CellSizes::Constant(5), 0.5).unwrap();
    let var5 = effect_variance(&d, &plan5, &block, q).unwrap().value;
    let power5 = power_for(var5, 0.35, 0.05).unwrap();
    report_notes.push(format!(
        "SharES delta=0.35 block-exchangeable interaction cell: computed m=6 vs published 5; \
         the power at m=5 is {power5:.4}, just short of 0.80"
    ));
    let passed = exch_exact && block_within_1 && got_block[2] == 6;
    PropertyCheck {
        name: "shares_table_delta_035",
        passed,
        worst: if passed { 0.0 } else { 1.0 },
        tolerance: 0.0,
        detail: format!(
            "exchangeable computed {got_exch:?} (published {TABLE1_EXCHANGEABLE:?}, exact), \
             block computed {got_block:?} (published {TABLE1_BLOCK:?}, within 1)"
        ),
    }
}

/// Coarse search grid evidently used for the published delta = 0.2 table:
/// every printed entry is congruent to 1 modulo 10.
pub fn coarse_grid_value(fine: u64) -> u64 {
    let mut g = 1u64;
    while g < fine {
        g += 10;
    }
    g
}

fn check_shares_table2(report_notes: &mut Vec<String>) -> PropertyCheck {
    let (exch, block) = shares_scenarios();
    let got_exch = shares_required_sizes(&exch, 0.2);
    let got_block = shares_required_sizes(&block, 0.2);
    let mut all_explained = true;
    for (scenario, got, published) in [
        ("exchangeable", &got_exch, &TABLE2_EXCHANGEABLE),
        ("block", &got_block, &TABLE2_BLOCK),
    ] {
        for ((&(est, model), &fine), &printed) in
            TABLE_ROWS.iter().zip(got.iter()).zip(published.iter())
        {
            let coarse = coarse_grid_value(fine);
            let explained = printed == coarse || fine.abs_diff(printed) <= 1;
            if !explained {
                all_explained = false;
            }
            if fine.abs_diff(printed) > 1 {
                report_notes.push(format!(
                    "SharES delta=0.2 {scenario} {est}/{model}: minimal m = {fine}, published {printed} \
                     = next value on the step-10 grid {{1, 11, 21, ...}} the published table was \
                     evaluated over"
                ));
            }
        }
    }
    PropertyCheck {
        name: "shares_table_delta_02_documented",
        passed: all_explained,
        worst: if all_explained { 0.0 } else { 1.0 },
        tolerance: 0.0,
        detail: format!(
            "minimal sizes: exchangeable {got_exch:?} vs published {TABLE2_EXCHANGEABLE:?}, \
             block {got_block:?} vs published {TABLE2_BLOCK:?}; every published entry matches \
             the computed value rounded up to the step-10 grid (or is within 1)"
        ),
    }
}

// ---------------------------------------------------------------------------
// Monte-Carlo and curve behaviour
// ---------------------------------------------------------------------------

/// Monte-Carlo check: the empirical covariance of the GLS estimator over
/// seeded replicates matches the analytic covariance.
pub fn check_monte_carlo(opts: &VerifyOptions) -> PropertyCheck {
    const TOL: f64 = 0.10;
    let d = TrialDesign::stepped_wedge(4).unwrap().replicate(3).unwrap();
    let corr = CorrelationStructure::new(1.0, 0.24, 0.192).unwrap();
    let plan = cell_plan(&d, CellSizes::Constant(4), 0.5).unwrap();
    let effects = TrialEffects {
        cluster: 0.3,
        individual: 0.2,
        interaction: -0.1,
        period: vec![0.0, 0.05, 0.1, 0.15],
    };
    let analytic = oracle::full_gls(
        &d, &plan, &corr,
        OracleModel::WithInteraction, Parametrisation::Centred,
    )
    .unwrap();
    let emp = empirical_estimator_cov(
        &d, &plan, &corr, &effects,
        OracleModel::WithInteraction, Parametrisation::Centred,
        opts.mc_replicates, opts.seed,
    )
    .unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..analytic.labels.len() {
        worst = worst.max(rel_err(emp.matrix[(k, k)], analytic.matrix[(k, k)]));
    }
    // Unbiasedness: every mean within 4 standard errors of the truth.
    let truth = oracle::true_coefficients(
        &effects,
        OracleModel::WithInteraction,
        Parametrisation::Centred,
        0.5,
    );
    let mut unbiased = true;
    for k in 0..truth.len() {
        let se = (analytic.matrix[(k, k)] / emp.replicates as f64).sqrt();
        if (emp.mean[k] - truth[k]).abs() > 4.0 * se {
            unbiased = false;
        }
    }
    PropertyCheck {
        name: "monte_carlo_estimator_covariance",
        passed: worst <= TOL && unbiased,
        worst,
        tolerance: TOL,
        detail: format!(
            "{} replicates, diagonal of {} effects; means within 4 SE: {}",
            emp.replicates,
            analytic.labels.len(),
            unbiased
        ),
    }
}

/// Qualitative curve behaviour: variances fall with the cell size and the
/// interaction estimator overtakes the cluster estimator, both along the
/// cell-size axis and along the within-period-ICC axis.
pub fn check_curve_shapes() -> PropertyCheck {
    let d = TrialDesign::shares();
    let corr = CorrelationStructure::new(1.0, 0.24, 0.192).unwrap();
    let q_ic = EffectQuery::new(Estimand::Interaction, Model::WithInteraction).unwrap();
    let q_c = EffectQuery::new(Estimand::ClusterConditional, Model::WithInteraction).unwrap();

    let mut monotone = true;
    let mut crossover_m = None;
    let mut ic_starts_above = false;
    let mut last: Option<Vec<f64>> = None;
    for m in 1..=30u64 {
        let plan = cell_plan(&d, CellSizes::Constant(m), 0.5).unwrap();
        let values: Vec<f64> = TABLE_ROWS
            .iter()
            .map(|&(est, model)| {
                let q = EffectQuery::new(est, model).unwrap();
                effect_variance(&d, &plan, &corr, q).unwrap().value
            })
            .collect();
        if let Some(prev) = &last {
            if values.iter().zip(prev.iter()).any(|(v, p)| v >= p) {
                monotone = false;
            }
        }
        let vic = effect_variance(&d, &plan, &corr, q_ic).unwrap().value;
        let vc = effect_variance(&d, &plan, &corr, q_c).unwrap().value;
        if m == 1 && vic > vc {
            ic_starts_above = true;
        }
        if vic < vc && crossover_m.is_none() {
            crossover_m = Some(m);
        }
        last = Some(values);
    }

    // ICC sweep at fixed ratio 0.8 and fixed m: same ordering change.
    let mut icc_flip = None;
    let mut ic_above_at_low_icc = false;
    let plan = cell_plan(&d, CellSizes::Constant(10), 0.5).unwrap();
    let mut wp = 0.02;
    while wp <= 0.6 {
        let corr = CorrelationStructure::new(1.0, wp, 0.8 * wp).unwrap();
        let vic = effect_variance(&d, &plan, &corr, q_ic).unwrap().value;
        let vc = effect_variance(&d, &plan, &corr, q_c).unwrap().value;
        if wp < 0.03 && vic > vc {
            ic_above_at_low_icc = true;
        }
        if vic < vc && icc_flip.is_none() {
            icc_flip = Some(wp);
        }
        wp += 0.02;
    }

    let passed =
        monotone && ic_starts_above && crossover_m.is_some() && ic_above_at_low_icc && icc_flip.is_some();
    PropertyCheck {
        name: "curve_monotonicity_and_crossover",
        passed,
        worst: if passed { 0.0 } else { 1.0 },
        tolerance: 0.0,
        detail: format!(
            "variances strictly decreasing in m: {monotone}; interaction overtakes cluster at m = {:?}; \
             ICC sweep (ratio 0.8, m = 10) ordering flips at wpicc ~ {:?}",
            crossover_m, icc_flip
        ),
    }
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

/// Run the full verification suite.
pub fn run_verification(opts: &VerifyOptions) -> VerifyReport {
    let mut report = VerifyReport::default();
    let configs = sweep_configs(opts);

    let (sweep_check, _comparisons, max_condition) = check_closed_vs_oracle(&configs, opts);
    report.checks.push(sweep_check);
    if max_condition > 1e12 {
        report.notes.push(format!(
            "warning: an information matrix reached condition number {max_condition:.2e} (> 1e12); \
             treat the affected variances with caution"
        ));
    }
    report.checks.push(check_dual_path(&configs));
    report.checks.push(check_sherman_morrison(&configs));
    report.checks.push(check_coefficient_identity(opts));
    report.checks.push(check_analytic_identities(&configs));
    report.checks.push(check_contrast_covariance(&configs));
    report.checks.push(check_v_lcrt_spot(opts));
    report.checks.push(check_cluster_multiplier(opts));
    report.checks.push(check_delta_roundtrip(opts));
    report.checks.push(check_quantile_pins());
    report.checks.push(check_shares_table1(&mut report.notes));
    report.checks.push(check_shares_table2(&mut report.notes));
    report.checks.push(check_curve_shapes());
    if opts.run_monte_carlo {
        report.checks.push(check_monte_carlo(opts));
    }
    report
        .notes
        .push(format!("oracle sweep covered {} configurations", configs.len()));
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_opts() -> VerifyOptions {
        VerifyOptions {
            seed: 7,
            min_sweep_configs: 40,
            mc_replicates: 300,
            run_monte_carlo: false,
            corruption: None,
        }
    }

    #[test]
    fn quick_verification_passes() {
        let report = run_verification(&quick_opts());
        assert!(report.all_passed(), "{}", report.render());
    }

    #[test]
    fn corrupted_formula_is_caught_and_named() {
        let mut opts = quick_opts();
        opts.corruption = Some(Corruption::InflateClusterVariance);
        let report = run_verification(&opts);
        assert!(!report.all_passed());
        let failing = report.check("closed_forms_vs_gls_oracle").unwrap();
        assert!(!failing.passed);
        assert!(report.render().contains("FAIL: closed_forms_vs_gls_oracle"));
    }

    #[test]
    fn report_is_deterministic_for_a_seed() {
        let a = run_verification(&quick_opts()).render();
        let b = run_verification(&quick_opts()).render();
        assert_eq!(a, b);
    }

    #[test]
    fn coarse_grid_rounding() {
        assert_eq!(coarse_grid_value(1), 1);
        assert_eq!(coarse_grid_value(2), 11);
        assert_eq!(coarse_grid_value(11), 11);
        assert_eq!(coarse_grid_value(12), 21);
        assert_eq!(coarse_grid_value(72), 81);
    }
}
