//! Closed-form treatment-effect estimator variances.
//!
//! Covers every combination of estimand (cluster-conditional,
//! cluster-marginal, individual, interaction), model (with or without the
//! interaction term) and cell-size regime (constant or per-cell), plus the
//! variance of the cluster-effect estimator in the corresponding
//! single-intervention longitudinal design (`v_lcrt`) and the joint
//! covariance of the three contrasts against the double-control arm.
//!
//! Where no closed form exists (V_LCRT under unequal cell sizes) the value
//! is computed by the collapsed cell-mean GLS from [`crate::oracle`]; the
//! strictly-closed-form entry point reports that case as an error instead.

use crate::correlation::CorrelationStructure;
use crate::design::{CellPlan, TrialDesign};
use crate::error::{Error, Result};
use crate::oracle;
use nalgebra::Matrix3;

/// Which treatment effect a variance is requested for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimand {
    /// Cluster-level effect with the individual intervention at control.
    ClusterConditional,
    /// Cluster-level effect averaged over the individual allocation.
    ClusterMarginal,
    /// Individual-level effect.
    Individual,
    /// Interaction between the two interventions.
    Interaction,
}

impl std::fmt::Display for Estimand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Estimand::ClusterConditional => write!(f, "cluster"),
            Estimand::ClusterMarginal => write!(f, "cluster-marginal"),
            Estimand::Individual => write!(f, "individual"),
            Estimand::Interaction => write!(f, "interaction"),
        }
    }
}

/// Whether the outcome model includes the interaction term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    WithInteraction,
    NoInteraction,
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Model::WithInteraction => write!(f, "interaction"),
            Model::NoInteraction => write!(f, "no-interaction"),
        }
    }
}

/// A validated (estimand, model) pair.
///
/// The interaction estimand requires the interaction model; under the
/// no-interaction model the marginal and conditional cluster effects
/// coincide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EffectQuery {
    pub estimand: Estimand,
    pub model: Model,
}

impl EffectQuery {
    pub fn new(estimand: Estimand, model: Model) -> Result<Self> {
        if estimand == Estimand::Interaction && model == Model::NoInteraction {
            return Err(Error::Validation(
                "the interaction effect does not exist under the no-interaction model".to_string(),
            ));
        }
        Ok(Self { estimand, model })
    }
}

/// Which variance expression was dispatched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormulaId {
    EqualMIntCluster,
    EqualMIntClusterMarginal,
    EqualMIntIndividual,
    EqualMIntInteraction,
    EqualMNoIntCluster,
    EqualMNoIntIndividual,
    VariableMIntCluster,
    VariableMIntClusterMarginal,
    VariableMIntIndividual,
    VariableMIntInteraction,
    VariableMNoIntCluster,
    VariableMNoIntIndividual,
}

impl std::fmt::Display for FormulaId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FormulaId::EqualMIntCluster => "interaction/equal-m/cluster",
            FormulaId::EqualMIntClusterMarginal => "interaction/equal-m/cluster-marginal",
            FormulaId::EqualMIntIndividual => "interaction/equal-m/individual",
            FormulaId::EqualMIntInteraction => "interaction/equal-m/interaction",
            FormulaId::EqualMNoIntCluster => "no-interaction/equal-m/cluster",
            FormulaId::EqualMNoIntIndividual => "no-interaction/equal-m/individual",
            FormulaId::VariableMIntCluster => "interaction/variable-m/cluster",
            FormulaId::VariableMIntClusterMarginal => "interaction/variable-m/cluster-marginal",
            FormulaId::VariableMIntIndividual => "interaction/variable-m/individual",
            FormulaId::VariableMIntInteraction => "interaction/variable-m/interaction",
            FormulaId::VariableMNoIntCluster => "no-interaction/variable-m/cluster",
            FormulaId::VariableMNoIntIndividual => "no-interaction/variable-m/individual",
        };
        write!(f, "{s}")
    }
}

/// An estimator variance with its decomposition.
///
/// `value = v_lcrt_part + inflation_part`. For estimands whose variance has
/// no cluster-design component (individual, interaction, marginal cluster)
/// the inflation part is zero and `v_lcrt_part` carries the whole value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceResult {
    pub value: f64,
    pub v_lcrt_part: f64,
    pub inflation_part: f64,
    pub formula_id: FormulaId,
}

/// Covariance of the three contrasts (individual, cluster-conditional,
/// combined) against the double-control condition, with the interaction
/// model and equal cell sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastCovariance {
    /// 3x3 covariance over (individual, cluster, cluster+individual+interaction).
    pub matrix: Matrix3<f64>,
    /// The interaction-estimator variance `K* = K / (pi_x (1 - pi_x))`.
    pub k_star: f64,
}

/// V_LCRT: variance of the treatment-effect estimator in the single
/// cluster-level-intervention longitudinal trial of the same design, with a
/// constant cell size.
///
/// Evaluated on the cluster-expanded design matrix (one sequence per
/// cluster), which stays exact when sequences carry unequal cluster counts.
pub fn v_lcrt(design: &TrialDesign, cell_size: u64, corr: &CorrelationStructure) -> Result<f64> {
    if cell_size == 0 {
        return Err(Error::Validation("cell size must be at least 1".to_string()));
    }
    let m = cell_size as f64;
    let wp = corr.wpicc();
    let r = m * corr.bpicc() / (1.0 + (m - 1.0) * wp);
    v_lcrt_at(design, corr.sigma2_total(), m, 1.0 + (m - 1.0) * wp, r)
}

/// Limiting V_LCRT as the cell size grows without bound (the cluster-level
/// information floor). Zero when the within-period ICC is zero.
pub fn v_lcrt_limit(design: &TrialDesign, corr: &CorrelationStructure) -> Result<f64> {
    let wp = corr.wpicc();
    if wp == 0.0 {
        return Ok(0.0);
    }
    let r = corr.bpicc() / wp;
    // (1 + (m-1) wp) / m -> wp
    v_lcrt_at(design, corr.sigma2_total(), 1.0, wp, r)
}

/// Shared core: the Hooper-style closed form with cell-mean variance factor
/// `phi_num / m` and cluster-autocorrelation `r`.
fn v_lcrt_at(design: &TrialDesign, sigma2: f64, m: f64, phi_num: f64, r: f64) -> Result<f64> {
    let s = design.clusters() as f64;
    let t = design.periods() as f64;
    let sum = design.summarize();
    let (b, c, e) = (sum.b, sum.c, sum.e);
    let denom = s * b - e + (b * b + s * (t - 1.0) * b - (t - 1.0) * e - s * c) * r;
    if denom.abs() <= 1e-12 {
        return Err(Error::DegenerateDesign(
            "the cluster-level treatment effect is not estimable in this design".to_string(),
        ));
    }
    let num = s * s * (1.0 - r) * (1.0 + (t - 1.0) * r) * phi_num;
    Ok(sigma2 / (s * m) * num / denom)
}

/// V_LCRT for a per-cell size plan, via the collapsed single-intervention
/// cell-mean GLS (no closed form exists for unequal cells).
pub fn v_lcrt_collapsed(
    design: &TrialDesign,
    plan: &CellPlan,
    corr: &CorrelationStructure,
) -> Result<f64> {
    let cov = oracle::collapsed_gls(
        design,
        plan,
        corr,
        oracle::OracleModel::ClusterOnly,
        oracle::Parametrisation::Centred,
    )?;
    cov.variance(oracle::EffectLabel::Cluster)
        .ok_or_else(|| Error::Inestimable("cluster effect missing from GLS output".to_string()))
}

/// Strictly closed-form dispatch over the variance table.
///
/// Errors with [`Error::VLcrtUnavailable`] when the query needs V_LCRT under
/// a per-cell size plan; [`effect_variance`] adds the numerical route for
/// that case.
pub fn closed_form_variance(
    design: &TrialDesign,
    plan: &CellPlan,
    corr: &CorrelationStructure,
    query: EffectQuery,
) -> Result<VarianceResult> {
    dispatch_variance(design, plan, corr, query, None)
}

/// Variance of the requested estimator under the requested model.
///
/// Per-cell plans route their V_LCRT component through the collapsed
/// cell-mean GLS; everything else is closed-form arithmetic.
pub fn effect_variance(
    design: &TrialDesign,
    plan: &CellPlan,
    corr: &CorrelationStructure,
    query: EffectQuery,
) -> Result<VarianceResult> {
    match dispatch_variance(design, plan, corr, query, None) {
        Err(Error::VLcrtUnavailable) => {
            let v = v_lcrt_collapsed(design, plan, corr)?;
            dispatch_variance(design, plan, corr, query, Some(v))
        }
        other => other,
    }
}

fn dispatch_variance(
    design: &TrialDesign,
    plan: &CellPlan,
    corr: &CorrelationStructure,
    query: EffectQuery,
    v_lcrt_source: Option<f64>,
) -> Result<VarianceResult> {
    plan.check_matches(design)?;
    // ClusterMarginal == ClusterConditional under the no-interaction model.
    let estimand = match (query.model, query.estimand) {
        (Model::NoInteraction, Estimand::ClusterMarginal) => Estimand::ClusterConditional,
        (_, e) => e,
    };
    let sigma2 = corr.sigma2_total();
    let resid = (1.0 - corr.wpicc()) * sigma2;
    let sz2 = plan.sigma2_z();

    if let Some(m) = plan.constant_size() {
        let n = design.clusters() as f64;
        let t = design.periods() as f64;
        let mf = m as f64;
        let pi_x = design.summarize().pi_x;
        let v = || -> Result<f64> {
            match v_lcrt_source {
                Some(v) => Ok(v),
                None => v_lcrt(design, m, corr),
            }
        };
        let interaction_var = resid / (n * mf * t * sz2 * pi_x * (1.0 - pi_x));
        let result = match (query.model, estimand) {
            (Model::WithInteraction, Estimand::Individual) => VarianceResult {
                value: resid / (n * mf * t * sz2 * (1.0 - pi_x)),
                v_lcrt_part: resid / (n * mf * t * sz2 * (1.0 - pi_x)),
                inflation_part: 0.0,
                formula_id: FormulaId::EqualMIntIndividual,
            },
            (Model::WithInteraction, Estimand::Interaction) => VarianceResult {
                value: interaction_var,
                v_lcrt_part: interaction_var,
                inflation_part: 0.0,
                formula_id: FormulaId::EqualMIntInteraction,
            },
            (Model::WithInteraction, Estimand::ClusterMarginal) => {
                let v = v()?;
                VarianceResult {
                    value: v,
                    v_lcrt_part: v,
                    inflation_part: 0.0,
                    formula_id: FormulaId::EqualMIntClusterMarginal,
                }
            }
            (Model::WithInteraction, Estimand::ClusterConditional) => {
                let v = v()?;
                let inflation = (plan.pi_z() * plan.pi_z()) * interaction_var;
                VarianceResult {
                    value: v + inflation,
                    v_lcrt_part: v,
                    inflation_part: inflation,
                    formula_id: FormulaId::EqualMIntCluster,
                }
            }
            (Model::NoInteraction, Estimand::Individual) => VarianceResult {
                value: resid / (n * mf * t * sz2),
                v_lcrt_part: resid / (n * mf * t * sz2),
                inflation_part: 0.0,
                formula_id: FormulaId::EqualMNoIntIndividual,
            },
            (Model::NoInteraction, Estimand::ClusterConditional) => {
                let v = v()?;
                VarianceResult {
                    value: v,
                    v_lcrt_part: v,
                    inflation_part: 0.0,
                    formula_id: FormulaId::EqualMNoIntCluster,
                }
            }
            (Model::NoInteraction, _) => unreachable!("normalised above"),
        };
        return Ok(result);
    }

    // Per-cell sizes.
    let n_obs = plan.n_obs() as f64;
    let n_x1 = plan.n_x1() as f64;
    let n_x0 = plan.n_x0() as f64;
    let v = || -> Result<f64> { v_lcrt_source.ok_or(Error::VLcrtUnavailable) };
    let interaction_var = resid * n_obs / (sz2 * n_x1 * n_x0);
    let result = match (query.model, estimand) {
        (Model::WithInteraction, Estimand::Individual) => VarianceResult {
            value: resid / (sz2 * n_x0),
            v_lcrt_part: resid / (sz2 * n_x0),
            inflation_part: 0.0,
            formula_id: FormulaId::VariableMIntIndividual,
        },
        (Model::WithInteraction, Estimand::Interaction) => VarianceResult {
            value: interaction_var,
            v_lcrt_part: interaction_var,
            inflation_part: 0.0,
            formula_id: FormulaId::VariableMIntInteraction,
        },
        (Model::WithInteraction, Estimand::ClusterMarginal) => {
            let v = v()?;
            VarianceResult {
                value: v,
                v_lcrt_part: v,
                inflation_part: 0.0,
                formula_id: FormulaId::VariableMIntClusterMarginal,
            }
        }
        (Model::WithInteraction, Estimand::ClusterConditional) => {
            let v = v()?;
            let inflation = (plan.pi_z() * plan.pi_z()) * interaction_var;
            VarianceResult {
                value: v + inflation,
                v_lcrt_part: v,
                inflation_part: inflation,
                formula_id: FormulaId::VariableMIntCluster,
            }
        }
        (Model::NoInteraction, Estimand::Individual) => VarianceResult {
            value: resid / (sz2 * n_obs),
            v_lcrt_part: resid / (sz2 * n_obs),
            inflation_part: 0.0,
            formula_id: FormulaId::VariableMNoIntIndividual,
        },
        (Model::NoInteraction, Estimand::ClusterConditional) => {
            let v = v()?;
            VarianceResult {
                value: v,
                v_lcrt_part: v,
                inflation_part: 0.0,
                formula_id: FormulaId::VariableMNoIntCluster,
            }
        }
        (Model::NoInteraction, _) => unreachable!("normalised above"),
    };
    Ok(result)
}

/// The two variance ratios characterising the interaction model with equal
/// cell sizes: individual-effect variance with vs without the interaction
/// term, and individual vs interaction variance under the interaction model.
/// They equal `1 / (1 - pi_x)` and `pi_x`.
pub fn interaction_ratio_check(
    design: &TrialDesign,
    plan: &CellPlan,
    corr: &CorrelationStructure,
) -> Result<(f64, f64)> {
    if plan.constant_size().is_none() {
        return Err(Error::Validation(
            "the ratio identities are defined for equal cell sizes".to_string(),
        ));
    }
    let vi_int = effect_variance(
        design,
        plan,
        corr,
        EffectQuery::new(Estimand::Individual, Model::WithInteraction)?,
    )?
    .value;
    let vi_noint = effect_variance(
        design,
        plan,
        corr,
        EffectQuery::new(Estimand::Individual, Model::NoInteraction)?,
    )?
    .value;
    let vic = effect_variance(
        design,
        plan,
        corr,
        EffectQuery::new(Estimand::Interaction, Model::WithInteraction)?,
    )?
    .value;
    Ok((vi_int / vi_noint, vi_int / vic))
}

/// Joint covariance of the three contrasts against the double-control
/// condition under the interaction model with equal cell sizes: the base
/// covariance of (individual, interaction, marginal-cluster) estimators is
/// propagated through the linear map onto (individual, cluster,
/// cluster+individual+interaction).
pub fn contrast_covariance(
    design: &TrialDesign,
    plan: &CellPlan,
    corr: &CorrelationStructure,
) -> Result<ContrastCovariance> {
    let m = plan.constant_size().ok_or_else(|| {
        Error::Validation("contrast covariance is defined for equal cell sizes".to_string())
    })?;
    plan.check_matches(design)?;
    let pi_x = design.summarize().pi_x;
    if pi_x <= 0.0 || pi_x >= 1.0 {
        return Err(Error::DegenerateDesign(
            "contrasts need both treatment conditions present".to_string(),
        ));
    }
    let pi_z = plan.pi_z();
    let k_star = effect_variance(
        design,
        plan,
        corr,
        EffectQuery::new(Estimand::Interaction, Model::WithInteraction)?,
    )?
    .value;
    let v = v_lcrt(design, m, corr)?;

    let base = Matrix3::new(
        k_star * pi_x, -k_star * pi_x, 0.0,
        -k_star * pi_x, k_star, 0.0,
        0.0, 0.0, v,
    );
    let l = Matrix3::new(
        1.0, 0.0, 0.0,
        0.0, -pi_z, 1.0,
        1.0, 1.0 - pi_z, 1.0,
    );
    Ok(ContrastCovariance {
        matrix: l * base * l.transpose(),
        k_star,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{cell_plan, CellSizes};
    use crate::norm::norm_quantile;
    use crate::oracle::{full_gls, EffectLabel, OracleModel, Parametrisation};

    fn exch02() -> CorrelationStructure {
        CorrelationStructure::exchangeable(1.0, 0.2).unwrap()
    }

    fn block() -> CorrelationStructure {
        CorrelationStructure::new(1.0, 0.24, 0.192).unwrap()
    }

    #[test]
    fn v_lcrt_ols_hand_value() {
        let d = TrialDesign::stepped_wedge(3).unwrap();
        let corr = CorrelationStructure::new(1.0, 0.0, 0.0).unwrap();
        let v = v_lcrt(&d, 1, &corr).unwrap();
        assert_eq!(v, 2.0);
    }

    #[test]
    fn v_lcrt_iid_collapses() {
        // With both ICCs zero the formula collapses to sigma2 S^2 / (n m (S B - E)).
        let d = TrialDesign::shares();
        let corr = CorrelationStructure::new(1.7, 0.0, 0.0).unwrap();
        for m in [1u64, 3, 8] {
            let v = v_lcrt(&d, m, &corr).unwrap();
            let s = d.clusters() as f64;
            let sum = d.summarize();
            let expect = 1.7 * s * s / (s * m as f64 * (s * sum.b - sum.e));
            assert!((v - expect).abs() < 1e-15 * expect);
        }
    }

    #[test]
    fn v_lcrt_matches_collapsed_gls_for_equal_cells() {
        let d = TrialDesign::shares();
        for (corr, m) in [(exch02(), 4u64), (block(), 3)] {
            let closed = v_lcrt(&d, m, &corr).unwrap();
            let plan = cell_plan(&d, CellSizes::PerCell(vec![vec![m; 6]; 25]), 0.5).unwrap();
            let numeric = v_lcrt_collapsed(&d, &plan, &corr).unwrap();
            assert!(
                (closed - numeric).abs() < 1e-12 * closed,
                "closed {closed} numeric {numeric}"
            );
        }
    }

    #[test]
    fn shares_table_row_cluster_no_interaction() {
        // delta = 0.35 at 80% power / alpha 0.05 needs m = 4 under the
        // exchangeable assumption; m = 3 falls short.
        let d = TrialDesign::shares();
        let corr = exch02();
        let target = (0.35 / (norm_quantile(0.975) + norm_quantile(0.8))).powi(2);
        assert!(v_lcrt(&d, 4, &corr).unwrap() <= target);
        assert!(v_lcrt(&d, 3, &corr).unwrap() > target);
    }

    #[test]
    fn individual_no_interaction_hand_value() {
        let d = TrialDesign::shares();
        let plan = cell_plan(&d, CellSizes::Constant(2), 0.5).unwrap();
        let q = EffectQuery::new(Estimand::Individual, Model::NoInteraction).unwrap();
        let r = effect_variance(&d, &plan, &exch02(), q).unwrap();
        let expect = 0.8 / (2.0 * 6.0 * 0.25 * 25.0);
        assert!((r.value - expect).abs() < 1e-15);
        assert_eq!(r.inflation_part, 0.0);
        // power at delta = 0.35 clears 0.80 at m = 2 but not at m = 1
        let target = (0.35 / (norm_quantile(0.975) + norm_quantile(0.8))).powi(2);
        assert!(r.value <= target);
        let plan1 = cell_plan(&d, CellSizes::Constant(1), 0.5).unwrap();
        assert!(effect_variance(&d, &plan1, &exch02(), q).unwrap().value > target);
    }

    #[test]
    fn constant_and_uniform_per_cell_plans_agree() {
        let d = TrialDesign::stepped_wedge(4).unwrap();
        let corr = block();
        let constant = cell_plan(&d, CellSizes::Constant(5), 0.3).unwrap();
        let percell = cell_plan(&d, CellSizes::PerCell(vec![vec![5; 4]; 3]), 0.3).unwrap();
        for (est, model) in [
            (Estimand::Individual, Model::WithInteraction),
            (Estimand::Interaction, Model::WithInteraction),
            (Estimand::ClusterMarginal, Model::WithInteraction),
            (Estimand::ClusterConditional, Model::WithInteraction),
            (Estimand::Individual, Model::NoInteraction),
            (Estimand::ClusterConditional, Model::NoInteraction),
        ] {
            let q = EffectQuery::new(est, model).unwrap();
            let a = effect_variance(&d, &constant, &corr, q).unwrap();
            let b = effect_variance(&d, &percell, &corr, q).unwrap();
            let rel = (a.value - b.value).abs() / a.value;
            assert!(rel < 1e-12, "{est}/{model}: {} vs {} rel {rel}", a.value, b.value);
        }
    }

    #[test]
    fn variable_plan_matches_gls_oracle() {
        let d = TrialDesign::stepped_wedge(3).unwrap();
        let sizes = vec![vec![2, 6, 4], vec![6, 2, 2]];
        let plan = cell_plan(&d, CellSizes::PerCell(sizes), 0.5).unwrap();
        let corr = block();
        let cen = full_gls(&d, &plan, &corr, OracleModel::WithInteraction, Parametrisation::Centred)
            .unwrap();
        let raw = full_gls(&d, &plan, &corr, OracleModel::WithInteraction, Parametrisation::Raw)
            .unwrap();
        let cases = [
            (Estimand::Individual, cen.variance(EffectLabel::Individual).unwrap()),
            (Estimand::Interaction, cen.variance(EffectLabel::Interaction).unwrap()),
            (Estimand::ClusterMarginal, cen.variance(EffectLabel::Cluster).unwrap()),
            (Estimand::ClusterConditional, raw.variance(EffectLabel::Cluster).unwrap()),
        ];
        for (est, oracle_value) in cases {
            let q = EffectQuery::new(est, Model::WithInteraction).unwrap();
            let closed = effect_variance(&d, &plan, &corr, q).unwrap().value;
            let rel = (closed - oracle_value).abs() / oracle_value;
            assert!(rel < 1e-8, "{est}: closed {closed} oracle {oracle_value} rel {rel}");
        }
    }

    #[test]
    fn closed_form_route_reports_missing_v_lcrt() {
        let d = TrialDesign::stepped_wedge(3).unwrap();
        let plan = cell_plan(&d, CellSizes::PerCell(vec![vec![2; 3]; 2]), 0.5).unwrap();
        let q = EffectQuery::new(Estimand::ClusterConditional, Model::WithInteraction).unwrap();
        let err = closed_form_variance(&d, &plan, &exch02(), q).unwrap_err();
        assert!(matches!(err, Error::VLcrtUnavailable), "{err}");
        // ...but the individual effect stays closed-form.
        let q = EffectQuery::new(Estimand::Individual, Model::WithInteraction).unwrap();
        assert!(closed_form_variance(&d, &plan, &exch02(), q).is_ok());
    }

    #[test]
    fn marginal_conditional_gap_is_exactly_the_inflation() {
        let d = TrialDesign::shares();
        for plan in [
            cell_plan(&d, CellSizes::Constant(3), 0.4).unwrap(),
            cell_plan(
                &d,
                CellSizes::PerCell((0..25).map(|i| vec![1 + (i as u64 % 4); 6]).collect()),
                0.4,
            )
            .unwrap(),
        ] {
            let corr = block();
            let cond = effect_variance(
                &d, &plan, &corr,
                EffectQuery::new(Estimand::ClusterConditional, Model::WithInteraction).unwrap(),
            )
            .unwrap();
            let marg = effect_variance(
                &d, &plan, &corr,
                EffectQuery::new(Estimand::ClusterMarginal, Model::WithInteraction).unwrap(),
            )
            .unwrap();
            let vic = effect_variance(
                &d, &plan, &corr,
                EffectQuery::new(Estimand::Interaction, Model::WithInteraction).unwrap(),
            )
            .unwrap();
            let gap = cond.value - marg.value;
            assert!((gap - (0.4 * 0.4) * vic.value).abs() <= 1e-12 * cond.value);
            assert_eq!(cond.inflation_part, (0.4 * 0.4) * vic.value);
        }
    }

    #[test]
    fn individual_and_interaction_ignore_between_period_icc() {
        let d = TrialDesign::shares();
        let plan = cell_plan(&d, CellSizes::Constant(3), 0.5).unwrap();
        let a = CorrelationStructure::new(1.0, 0.24, 0.192).unwrap();
        let b = CorrelationStructure::new(1.0, 0.24, 0.05).unwrap();
        for est in [Estimand::Individual, Estimand::Interaction] {
            let q = EffectQuery::new(est, Model::WithInteraction).unwrap();
            let va = effect_variance(&d, &plan, &a, q).unwrap().value;
            let vb = effect_variance(&d, &plan, &b, q).unwrap().value;
            assert_eq!(va.to_bits(), vb.to_bits());
        }
    }

    #[test]
    fn ratio_identities() {
        for d in [
            TrialDesign::shares(),
            TrialDesign::stepped_wedge(3).unwrap(),
            TrialDesign::parallel(4).unwrap(),
        ] {
            let plan = cell_plan(&d, CellSizes::Constant(2), 0.5).unwrap();
            let (r1, r2) = interaction_ratio_check(&d, &plan, &exch02()).unwrap();
            let pi_x = d.summarize().pi_x;
            assert!((r1 - 1.0 / (1.0 - pi_x)).abs() < 1e-12);
            assert!((r2 - pi_x).abs() < 1e-12);
        }
        // All the above designs have pi_x = 1/2, so the ratios are (2, 1/2).
        let d = TrialDesign::shares();
        let plan = cell_plan(&d, CellSizes::Constant(2), 0.5).unwrap();
        let (r1, r2) = interaction_ratio_check(&d, &plan, &exch02()).unwrap();
        assert!((r1 - 2.0).abs() < 1e-12 && (r2 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn variances_decrease_in_cell_size() {
        let d = TrialDesign::shares();
        let corr = block();
        for (est, model) in [
            (Estimand::Individual, Model::WithInteraction),
            (Estimand::Interaction, Model::WithInteraction),
            (Estimand::ClusterConditional, Model::WithInteraction),
            (Estimand::ClusterMarginal, Model::WithInteraction),
            (Estimand::Individual, Model::NoInteraction),
            (Estimand::ClusterConditional, Model::NoInteraction),
        ] {
            let q = EffectQuery::new(est, model).unwrap();
            let mut last = f64::INFINITY;
            for m in 1..=12u64 {
                let plan = cell_plan(&d, CellSizes::Constant(m), 0.5).unwrap();
                let v = effect_variance(&d, &plan, &corr, q).unwrap().value;
                assert!(v < last, "{est}/{model} not decreasing at m={m}");
                last = v;
            }
        }
        // and in a single growing cell under the per-cell route
        let d = TrialDesign::stepped_wedge(3).unwrap();
        let mut last = f64::INFINITY;
        for grow in [1u64, 2, 5, 9] {
            let plan = cell_plan(
                &d,
                CellSizes::PerCell(vec![vec![2, grow, 3], vec![2, 2, 2]]),
                0.5,
            )
            .unwrap();
            let q = EffectQuery::new(Estimand::ClusterConditional, Model::WithInteraction).unwrap();
            let v = effect_variance(&d, &plan, &block(), q).unwrap().value;
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn contrast_covariance_consistency() {
        let d = TrialDesign::shares();
        let plan = cell_plan(&d, CellSizes::Constant(4), 0.5).unwrap();
        let corr = block();
        let cc = contrast_covariance(&d, &plan, &corr).unwrap();
        // Diagonal agrees with the single-effect variances.
        let vi = effect_variance(
            &d, &plan, &corr,
            EffectQuery::new(Estimand::Individual, Model::WithInteraction).unwrap(),
        )
        .unwrap()
        .value;
        let vc = effect_variance(
            &d, &plan, &corr,
            EffectQuery::new(Estimand::ClusterConditional, Model::WithInteraction).unwrap(),
        )
        .unwrap()
        .value;
        assert!((cc.matrix[(0, 0)] - vi).abs() < 1e-14 * vi);
        assert!((cc.matrix[(1, 1)] - vc).abs() < 1e-14 * vc);
        // Cov(individual, cluster) = K* pi_x pi_z.
        let pi_x = d.summarize().pi_x;
        let expect = cc.k_star * pi_x * 0.5;
        assert!((cc.matrix[(0, 1)] - expect).abs() < 1e-14 * expect.abs());
        // Symmetric PSD.
        let m = nalgebra::DMatrix::from_fn(3, 3, |r, c| cc.matrix[(r, c)]);
        let eig = nalgebra::linalg::SymmetricEigen::new(m);
        let min = eig.eigenvalues.min();
        assert!(min >= -1e-10 * eig.eigenvalues.max());
    }

    #[test]
    fn contrast_covariance_matches_oracle_propagation() {
        // Small fixed design, iid structure, pi near 1/2.
        let d = TrialDesign::new(2, vec![(vec![0, 1], 2), (vec![1, 0], 2)]).unwrap();
        let plan = cell_plan(&d, CellSizes::Constant(2), 0.5).unwrap();
        let corr = CorrelationStructure::new(1.0, 0.0, 0.0).unwrap();
        let cc = contrast_covariance(&d, &plan, &corr).unwrap();
        let g = full_gls(&d, &plan, &corr, OracleModel::WithInteraction, Parametrisation::Centred)
            .unwrap();
        let base = Matrix3::new(
            g.matrix[(0, 0)], g.matrix[(0, 1)], g.matrix[(0, 2)],
            g.matrix[(1, 0)], g.matrix[(1, 1)], g.matrix[(1, 2)],
            g.matrix[(2, 0)], g.matrix[(2, 1)], g.matrix[(2, 2)],
        );
        let l = Matrix3::new(1.0, 0.0, 0.0, 0.0, -0.5, 1.0, 1.0, 0.5, 1.0);
        let oracle_cc = l * base * l.transpose();
        let scale = oracle_cc.abs().max();
        assert!((cc.matrix - oracle_cc).abs().max() < 1e-10 * scale);
    }

    #[test]
    fn interaction_query_requires_interaction_model() {
        assert!(EffectQuery::new(Estimand::Interaction, Model::NoInteraction).is_err());
        // Marginal == conditional without interaction.
        let d = TrialDesign::shares();
        let plan = cell_plan(&d, CellSizes::Constant(2), 0.5).unwrap();
        let a = effect_variance(
            &d, &plan, &exch02(),
            EffectQuery::new(Estimand::ClusterMarginal, Model::NoInteraction).unwrap(),
        )
        .unwrap();
        let b = effect_variance(
            &d, &plan, &exch02(),
            EffectQuery::new(Estimand::ClusterConditional, Model::NoInteraction).unwrap(),
        )
        .unwrap();
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn degenerate_design_reported() {
        // Same crossover time in every cluster: cluster effect confounded
        // with period effects, the closed-form denominator vanishes.
        let d = TrialDesign::new(2, vec![(vec![0, 1], 3)]).unwrap();
        let err = v_lcrt(&d, 2, &exch02()).unwrap_err();
        assert!(matches!(err, Error::DegenerateDesign(_)), "{err}");
    }
}
