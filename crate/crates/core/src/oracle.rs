//! Brute-force verification engine: dense GLS covariance of the fixed-effect
//! estimators from first principles, the collapsed cell-mean formulation with
//! its Sherman-Morrison inverse, and Monte-Carlo simulation of the outcome
//! model.
//!
//! Everything here favours transparency over speed: matrices are assembled
//! explicitly and inverted densely at desk scale. The closed forms in
//! [`crate::variance`] are checked against these routes.

use crate::correlation::CorrelationStructure;
use crate::design::{CellPlan, TrialDesign};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use std::io::Write;

/// Default cap on the total number of observations for the dense
/// individual-level route.
pub const DEFAULT_OBS_CAP: u64 = 20_000;

/// Relative eigenvalue threshold below which the information matrix is
/// treated as singular.
const SINGULARITY_TOL: f64 = 1e-13;

/// How the individual-treatment column is coded.
///
/// Under `Raw` the cluster-treatment coefficient is the conditional effect
/// (individual intervention at control); under `Centred` (Z - pi_z) it is
/// the marginal effect averaged over the individual allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parametrisation {
    Raw,
    Centred,
}

/// Which fixed-effect model the oracle fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleModel {
    /// Individual, interaction and cluster treatment columns plus period effects.
    WithInteraction,
    /// Individual and cluster treatment columns plus period effects.
    NoInteraction,
    /// Cluster treatment column plus period effects only (a single-level
    /// longitudinal design on cell means; its cluster variance is V_LCRT).
    ClusterOnly,
}

impl OracleModel {
    pub fn labels(&self, periods: usize) -> Vec<EffectLabel> {
        let mut labels = match self {
            OracleModel::WithInteraction => vec![
                EffectLabel::Individual,
                EffectLabel::Interaction,
                EffectLabel::Cluster,
            ],
            OracleModel::NoInteraction => vec![EffectLabel::Individual, EffectLabel::Cluster],
            OracleModel::ClusterOnly => vec![EffectLabel::Cluster],
        };
        labels.extend((0..periods).map(EffectLabel::Period));
        labels
    }
}

/// Identity of one fixed effect in the oracle's covariance matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffectLabel {
    Individual,
    Interaction,
    Cluster,
    Period(usize),
}

impl std::fmt::Display for EffectLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EffectLabel::Individual => write!(f, "individual"),
            EffectLabel::Interaction => write!(f, "interaction"),
            EffectLabel::Cluster => write!(f, "cluster"),
            EffectLabel::Period(j) => write!(f, "period[{}]", j + 1),
        }
    }
}

/// Labelled covariance matrix of all fixed-effect estimators.
#[derive(Debug, Clone)]
pub struct GlsCovariance {
    pub labels: Vec<EffectLabel>,
    pub matrix: DMatrix<f64>,
    /// Spectral condition number of the information matrix.
    pub condition: f64,
}

impl GlsCovariance {
    pub fn index_of(&self, label: EffectLabel) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    pub fn variance(&self, label: EffectLabel) -> Option<f64> {
        let i = self.index_of(label)?;
        Some(self.matrix[(i, i)])
    }

    pub fn covariance(&self, a: EffectLabel, b: EffectLabel) -> Option<f64> {
        Some(self.matrix[(self.index_of(a)?, self.index_of(b)?)])
    }
}

// ---------------------------------------------------------------------------
// Shared layout helpers
// ---------------------------------------------------------------------------

/// Number of individuals with Z = 1 in a cell, enforcing block randomisation
/// (`pi_z * m` integral).
fn block_count(plan: &CellPlan, cluster: usize, period: usize) -> Result<u64> {
    let m = plan.size(cluster, period) as f64;
    let exact = plan.pi_z() * m;
    let rounded = exact.round();
    if (exact - rounded).abs() > 1e-9 {
        return Err(Error::Validation(format!(
            "block randomisation requires an integral split: pi_z * m = {} * {} = {} in cluster {}, period {}",
            plan.pi_z(),
            m,
            exact,
            cluster + 1,
            period + 1
        )));
    }
    Ok(rounded as u64)
}

/// Per-observation layout of one cluster: (period, z) in row order.
/// Within a cell the Z = 0 individuals come first.
fn cluster_layout(plan: &CellPlan, cluster: usize) -> Result<Vec<(usize, u8)>> {
    let mut rows = Vec::new();
    for period in 0..plan.periods() {
        let m = plan.size(cluster, period);
        let ones = block_count(plan, cluster, period)?;
        for k in 0..m {
            rows.push((period, u8::from(k >= m - ones)));
        }
    }
    Ok(rows)
}

fn z_effect(z: f64, pi_z: f64, param: Parametrisation) -> f64 {
    match param {
        Parametrisation::Raw => z,
        Parametrisation::Centred => z - pi_z,
    }
}

// ---------------------------------------------------------------------------
// Full individual-level GLS
// ---------------------------------------------------------------------------

/// Per-cluster design blocks and covariance matrices of the individual-level
/// model.
#[derive(Debug, Clone)]
pub struct FullModelMatrices {
    pub labels: Vec<EffectLabel>,
    pub parametrisation: Parametrisation,
    /// `(D_i, Sigma_i)` per cluster.
    pub clusters: Vec<(DMatrix<f64>, DMatrix<f64>)>,
}

/// Assemble the individual-level design and covariance blocks.
pub fn build_full_matrices(
    design: &TrialDesign,
    plan: &CellPlan,
    corr: &CorrelationStructure,
    model: OracleModel,
    param: Parametrisation,
) -> Result<FullModelMatrices> {
    build_full_matrices_with_cap(design, plan, corr, model, param, DEFAULT_OBS_CAP)
}

pub fn build_full_matrices_with_cap(
    design: &TrialDesign,
    plan: &CellPlan,
    corr: &CorrelationStructure,
    model: OracleModel,
    param: Parametrisation,
    obs_cap: u64,
) -> Result<FullModelMatrices> {
    plan.check_matches(design)?;
    if plan.n_obs() > obs_cap {
        return Err(Error::Validation(format!(
            "{} observations exceed the dense-oracle cap of {obs_cap}",
            plan.n_obs()
        )));
    }
    let t = design.periods();
    let labels = model.labels(t);
    let ncols = labels.len();
    let treatment_cols = ncols - t;

    let mut clusters = Vec::with_capacity(design.clusters());
    for i in 0..design.clusters() {
        let layout = match model {
            // The cluster-only model has no individual column, so the Z split
            // is irrelevant; one pseudo-observation per individual keeps the
            // covariance exact without requiring an integral split.
            OracleModel::ClusterOnly => {
                let mut rows = Vec::new();
                for period in 0..t {
                    for _ in 0..plan.size(i, period) {
                        rows.push((period, 0u8));
                    }
                }
                rows
            }
            _ => cluster_layout(plan, i)?,
        };
        let m_total = layout.len();
        let mut d = DMatrix::<f64>::zeros(m_total, ncols);
        for (r, &(period, z)) in layout.iter().enumerate() {
            let x = design.x(i, period);
            let ze = z_effect(z as f64, plan.pi_z(), param);
            match model {
                OracleModel::WithInteraction => {
                    d[(r, 0)] = ze;
                    d[(r, 1)] = x * ze;
                    d[(r, 2)] = x;
                }
                OracleModel::NoInteraction => {
                    d[(r, 0)] = ze;
                    d[(r, 1)] = x;
                }
                OracleModel::ClusterOnly => {
                    d[(r, 0)] = x;
                }
            }
            d[(r, treatment_cols + period)] = 1.0;
        }
        let sigma = DMatrix::<f64>::from_fn(m_total, m_total, |r, s| {
            corr.covariance_entry(r == s, layout[r].0 == layout[s].0)
        });
        clusters.push((d, sigma));
    }
    Ok(FullModelMatrices {
        labels,
        parametrisation: param,
        clusters,
    })
}

/// GLS covariance of all fixed effects from assembled matrices.
pub fn gls_covariance(matrices: &FullModelMatrices) -> Result<GlsCovariance> {
    let ncols = matrices.labels.len();
    let mut info = DMatrix::<f64>::zeros(ncols, ncols);
    for (d, sigma) in &matrices.clusters {
        let chol = nalgebra::linalg::Cholesky::new(sigma.clone()).ok_or_else(|| {
            Error::Validation("within-cluster covariance matrix is not positive definite".to_string())
        })?;
        let solved = chol.solve(d);
        info += d.transpose() * solved;
    }
    invert_information(info, &matrices.labels)
}

/// Dense individual-level GLS covariance of all fixed effects.
pub fn full_gls(
    design: &TrialDesign,
    plan: &CellPlan,
    corr: &CorrelationStructure,
    model: OracleModel,
    param: Parametrisation,
) -> Result<GlsCovariance> {
    let matrices = build_full_matrices(design, plan, corr, model, param)?;
    gls_covariance(&matrices)
}

/// Invert the accumulated information matrix, diagnosing singular directions.
fn invert_information(info: DMatrix<f64>, labels: &[EffectLabel]) -> Result<GlsCovariance> {
    let eigen = nalgebra::linalg::SymmetricEigen::new(info.clone());
    let max_ev = eigen.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let (min_idx, min_ev) = eigen
        .eigenvalues
        .iter()
        .cloned()
        .enumerate()
        .fold((0, f64::MAX), |acc, (i, ev)| if ev < acc.1 { (i, ev) } else { acc });
    if max_ev.is_nan() || max_ev <= 0.0 || min_ev <= SINGULARITY_TOL * max_ev {
        let dir = eigen.eigenvectors.column(min_idx);
        let mut terms: Vec<(f64, String)> = labels
            .iter()
            .zip(dir.iter())
            .filter(|(_, &w)| w.abs() > 0.15)
            .map(|(l, &w)| (w.abs(), format!("{w:+.2}*{l}")))
            .collect();
        terms.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let dir_text: Vec<String> = terms.into_iter().map(|(_, s)| s).collect();
        return Err(Error::Inestimable(format!(
            "information matrix is singular along {}",
            dir_text.join(" ")
        )));
    }
    let condition = max_ev / min_ev;
    let chol = nalgebra::linalg::Cholesky::new(info).ok_or_else(|| {
        Error::Inestimable("information matrix is not positive definite".to_string())
    })?;
    Ok(GlsCovariance {
        labels: labels.to_vec(),
        matrix: chol.inverse(),
        condition,
    })
}

// ---------------------------------------------------------------------------
// Collapsed cell-mean GLS (Sherman-Morrison route)
// ---------------------------------------------------------------------------

/// One cluster of the collapsed system: the block-diagonal part `A_i` of the
/// cell-mean covariance, its analytic inverse, and the Sherman-Morrison
/// pieces for the rank-one cluster-level update.
#[derive(Debug, Clone)]
pub struct CollapsedCluster {
    /// Design block over the cell means.
    pub design_block: DMatrix<f64>,
    /// Dense cell-mean covariance `A_i + sigma2_cluster * 11'` (for checks).
    pub sigma_dense: DMatrix<f64>,
    /// Analytic inverse of the block-diagonal part.
    pub block_inverse: DMatrix<f64>,
    /// `q_i = A_i^{-1} 1`.
    pub sm_vector: DVector<f64>,
    /// `1 + sigma2_cluster * 1' A_i^{-1} 1`.
    pub sm_denominator: f64,
    /// Per-cell variance of the cell mean about the cluster level,
    /// `sigma2_cluster_period + sigma2_residual / m_ij`.
    pub cell_variances: Vec<f64>,
}

impl CollapsedCluster {
    /// `Sigma_i^{-1}` via Sherman-Morrison.
    pub fn sherman_morrison_inverse(&self, sigma2_cluster: f64) -> DMatrix<f64> {
        let q = &self.sm_vector;
        &self.block_inverse - (q * q.transpose()) * (sigma2_cluster / self.sm_denominator)
    }
}

/// The collapsed cell-mean system for every cluster.
#[derive(Debug, Clone)]
pub struct CollapsedMatrices {
    pub labels: Vec<EffectLabel>,
    pub parametrisation: Parametrisation,
    pub sigma2_cluster: f64,
    pub clusters: Vec<CollapsedCluster>,
}

/// Assemble the collapsed system. With an individual-level column the means
/// are per cluster-period-Z group (two rows per cell); the split is analytic,
/// so `pi_z * m` need not be integral. `ClusterOnly` collapses to one mean
/// per cell.
pub fn build_collapsed_matrices(
    design: &TrialDesign,
    plan: &CellPlan,
    corr: &CorrelationStructure,
    model: OracleModel,
    param: Parametrisation,
) -> Result<CollapsedMatrices> {
    plan.check_matches(design)?;
    let comps = corr.components();
    let (sa2, sb2, se2) = (
        comps.sigma2_cluster,
        comps.sigma2_cluster_period,
        comps.sigma2_residual,
    );
    let t = design.periods();
    let labels = model.labels(t);
    let ncols = labels.len();
    let treatment_cols = ncols - t;
    let pi_z = plan.pi_z();

    let mut clusters = Vec::with_capacity(design.clusters());
    for i in 0..design.clusters() {
        let rows_per_cell = if model == OracleModel::ClusterOnly { 1 } else { 2 };
        let dim = rows_per_cell * t;
        let mut d = DMatrix::<f64>::zeros(dim, ncols);
        let mut block_inv = DMatrix::<f64>::zeros(dim, dim);
        let mut q = DVector::<f64>::zeros(dim);
        let mut qsum = 0.0;
        let mut sigma_dense = DMatrix::<f64>::from_element(dim, dim, sa2);
        let mut cell_variances = Vec::with_capacity(t);

        for period in 0..t {
            let m = plan.size(i, period) as f64;
            let x = design.x(i, period);
            let cell_var = sb2 + se2 / m;
            cell_variances.push(cell_var);

            if model == OracleModel::ClusterOnly {
                let r = period;
                d[(r, 0)] = x;
                d[(r, treatment_cols + period)] = 1.0;
                block_inv[(r, r)] = 1.0 / cell_var;
                q[r] = 1.0 / cell_var;
                qsum += q[r];
                sigma_dense[(r, r)] += cell_var;
            } else {
                // Two rows per cell: the Z=0 group mean then the Z=1 group mean.
                let r0 = 2 * period;
                let r1 = r0 + 1;
                let x1 = se2 / ((1.0 - pi_z) * m);
                let x2 = se2 / (pi_z * m);
                let det = sb2 * (x1 + x2) + x1 * x2;

                for (r, z) in [(r0, 0.0), (r1, 1.0)] {
                    let ze = z_effect(z, pi_z, param);
                    match model {
                        OracleModel::WithInteraction => {
                            d[(r, 0)] = ze;
                            d[(r, 1)] = x * ze;
                            d[(r, 2)] = x;
                        }
                        OracleModel::NoInteraction => {
                            d[(r, 0)] = ze;
                            d[(r, 1)] = x;
                        }
                        OracleModel::ClusterOnly => unreachable!(),
                    }
                    d[(r, treatment_cols + period)] = 1.0;
                }

                block_inv[(r0, r0)] = (sb2 + x2) / det;
                block_inv[(r0, r1)] = -sb2 / det;
                block_inv[(r1, r0)] = -sb2 / det;
                block_inv[(r1, r1)] = (sb2 + x1) / det;
                q[r0] = x2 / det;
                q[r1] = x1 / det;
                qsum += q[r0] + q[r1];

                sigma_dense[(r0, r0)] += sb2 + x1;
                sigma_dense[(r1, r1)] += sb2 + x2;
                sigma_dense[(r0, r1)] += sb2;
                sigma_dense[(r1, r0)] += sb2;
            }
        }

        clusters.push(CollapsedCluster {
            design_block: d,
            sigma_dense,
            block_inverse: block_inv,
            sm_vector: q,
            sm_denominator: 1.0 + sa2 * qsum,
            cell_variances,
        });
    }
    Ok(CollapsedMatrices {
        labels,
        parametrisation: param,
        sigma2_cluster: sa2,
        clusters,
    })
}

/// GLS covariance via the collapsed cell-mean system.
pub fn collapsed_gls(
    design: &TrialDesign,
    plan: &CellPlan,
    corr: &CorrelationStructure,
    model: OracleModel,
    param: Parametrisation,
) -> Result<GlsCovariance> {
    let matrices = build_collapsed_matrices(design, plan, corr, model, param)?;
    let ncols = matrices.labels.len();
    let sa2 = matrices.sigma2_cluster;
    let mut info = DMatrix::<f64>::zeros(ncols, ncols);
    for cl in &matrices.clusters {
        let d = &cl.design_block;
        let base = d.transpose() * (&cl.block_inverse * d);
        let dq = d.transpose() * &cl.sm_vector;
        info += base - (&dq * dq.transpose()) * (sa2 / cl.sm_denominator);
    }
    invert_information(info, &matrices.labels)
}

// ---------------------------------------------------------------------------
// Monte-Carlo simulation
// ---------------------------------------------------------------------------

/// True fixed effects used to generate data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialEffects {
    pub cluster: f64,
    pub individual: f64,
    pub interaction: f64,
    pub period: Vec<f64>,
}

impl TrialEffects {
    pub fn null(periods: usize) -> Self {
        Self {
            cluster: 0.0,
            individual: 0.0,
            interaction: 0.0,
            period: vec![0.0; periods],
        }
    }
}

/// One simulated observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub cluster: usize,
    pub period: usize,
    pub individual: usize,
    pub x: u8,
    pub z: u8,
    pub y: f64,
}

/// A simulated trial dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedTrial {
    pub observations: Vec<Observation>,
}

impl SimulatedTrial {
    /// Dump as CSV with columns cluster, period, individual, x, z, y.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "cluster,period,individual,x,z,y")?;
        for o in &self.observations {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                o.cluster + 1,
                o.period + 1,
                o.individual + 1,
                o.x,
                o.z,
                o.y
            )?;
        }
        Ok(())
    }
}

/// Draw per-cluster outcome vectors in the oracle's row layout.
fn simulate_y(
    design: &TrialDesign,
    plan: &CellPlan,
    corr: &CorrelationStructure,
    effects: &TrialEffects,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<DVector<f64>>> {
    let comps = corr.components();
    let sd_a = comps.sigma2_cluster.sqrt();
    let sd_b = comps.sigma2_cluster_period.sqrt();
    let sd_e = comps.sigma2_residual.sqrt();
    let t = design.periods();
    if effects.period.len() != t {
        return Err(Error::Validation(format!(
            "expected {t} period effects, got {}",
            effects.period.len()
        )));
    }
    let mut out = Vec::with_capacity(design.clusters());
    for i in 0..design.clusters() {
        let layout = cluster_layout(plan, i)?;
        let a_i: f64 = sd_a * rng.sample::<f64, _>(StandardNormal);
        let b_i: Vec<f64> = (0..t)
            .map(|_| sd_b * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut y = DVector::<f64>::zeros(layout.len());
        for (r, &(period, z)) in layout.iter().enumerate() {
            let x = design.x(i, period);
            let zf = z as f64;
            let eps: f64 = sd_e * rng.sample::<f64, _>(StandardNormal);
            y[r] = effects.cluster * x
                + effects.individual * zf
                + effects.interaction * x * zf
                + effects.period[period]
                + a_i
                + b_i[period]
                + eps;
        }
        out.push(y);
    }
    Ok(out)
}

/// Simulate one trial dataset. Deterministic for a given seed; every cell
/// gets exactly `pi_z * m` individuals on the individual-level intervention.
pub fn simulate_trial(
    design: &TrialDesign,
    plan: &CellPlan,
    corr: &CorrelationStructure,
    effects: &TrialEffects,
    seed: u64,
) -> Result<SimulatedTrial> {
    plan.check_matches(design)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let ys = simulate_y(design, plan, corr, effects, &mut rng)?;
    let mut observations = Vec::new();
    for (i, y) in ys.iter().enumerate() {
        let layout = cluster_layout(plan, i)?;
        let mut within_cell = vec![0usize; design.periods()];
        for (r, &(period, z)) in layout.iter().enumerate() {
            observations.push(Observation {
                cluster: i,
                period,
                individual: within_cell[period],
                x: design.x(i, period) as u8,
                z,
                y: y[r],
            });
            within_cell[period] += 1;
        }
    }
    Ok(SimulatedTrial { observations })
}

/// Sample covariance and mean of the GLS estimates over seeded replicates.
#[derive(Debug, Clone)]
pub struct EmpiricalEstimatorCov {
    pub labels: Vec<EffectLabel>,
    pub matrix: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub replicates: usize,
}

/// The true coefficient vector in the fitted parametrisation.
pub fn true_coefficients(
    effects: &TrialEffects,
    model: OracleModel,
    param: Parametrisation,
    pi_z: f64,
) -> DVector<f64> {
    let t = effects.period.len();
    let mut v = Vec::new();
    match model {
        OracleModel::WithInteraction => {
            v.push(effects.individual);
            v.push(effects.interaction);
            match param {
                Parametrisation::Raw => v.push(effects.cluster),
                Parametrisation::Centred => v.push(effects.cluster + pi_z * effects.interaction),
            }
        }
        OracleModel::NoInteraction => {
            v.push(effects.individual);
            v.push(effects.cluster);
        }
        OracleModel::ClusterOnly => v.push(effects.cluster),
    }
    for j in 0..t {
        let shift = match (model, param) {
            (OracleModel::ClusterOnly, _) => 0.0,
            (_, Parametrisation::Centred) => pi_z * effects.individual,
            (_, Parametrisation::Raw) => 0.0,
        };
        v.push(effects.period[j] + shift);
    }
    DVector::from_vec(v)
}

/// Fit the known-covariance GLS estimator to `replicates` simulated datasets
/// and return the sample covariance of the estimates.
///
/// Replicate r uses the random stream `(seed, r)`, so results do not depend
/// on evaluation order.
#[allow(clippy::too_many_arguments)]
pub fn empirical_estimator_cov(
    design: &TrialDesign,
    plan: &CellPlan,
    corr: &CorrelationStructure,
    effects: &TrialEffects,
    model: OracleModel,
    param: Parametrisation,
    replicates: usize,
    seed: u64,
) -> Result<EmpiricalEstimatorCov> {
    if replicates < 2 {
        return Err(Error::Validation(
            "need at least 2 replicates for a sample covariance".to_string(),
        ));
    }
    let matrices = build_full_matrices(design, plan, corr, model, param)?;
    let ncols = matrices.labels.len();

    // Precompute Sigma_i^{-1} D_i and the estimator map; the design is fixed
    // across replicates, only y changes.
    let mut weights = Vec::with_capacity(matrices.clusters.len());
    let mut info = DMatrix::<f64>::zeros(ncols, ncols);
    for (d, sigma) in &matrices.clusters {
        let chol = nalgebra::linalg::Cholesky::new(sigma.clone()).ok_or_else(|| {
            Error::Validation("within-cluster covariance matrix is not positive definite".to_string())
        })?;
        let w = chol.solve(d);
        info += d.transpose() * &w;
        weights.push(w);
    }
    let cov = invert_information(info, &matrices.labels)?;

    let mut estimates = Vec::with_capacity(replicates);
    let mut mean = DVector::<f64>::zeros(ncols);
    for rep in 0..replicates {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(rep as u64 + 1);
        let ys = simulate_y(design, plan, corr, effects, &mut rng)?;
        let mut rhs = DVector::<f64>::zeros(ncols);
        for (w, y) in weights.iter().zip(ys.iter()) {
            rhs += w.transpose() * y;
        }
        let est = &cov.matrix * rhs;
        mean += &est;
        estimates.push(est);
    }
    mean /= replicates as f64;

    let mut sample_cov = DMatrix::<f64>::zeros(ncols, ncols);
    for est in &estimates {
        let dev = est - &mean;
        sample_cov += &dev * dev.transpose();
    }
    sample_cov /= (replicates - 1) as f64;

    Ok(EmpiricalEstimatorCov {
        labels: matrices.labels,
        matrix: sample_cov,
        mean,
        replicates,
    })
}
