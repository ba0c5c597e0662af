//! Cluster-level treatment designs and per-cell size plans.
//!
//! A design is a list of treatment sequences (0/1 pattern over periods) with
//! a cluster count per sequence. All summaries are computed on the
//! cluster-expanded matrix (one row per cluster), which keeps the design
//! constants exact for designs with unequal clusters per sequence.

use crate::error::{Error, Result};
use serde::Deserialize;

/// One treatment sequence and the number of clusters following it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceRow {
    pub pattern: Vec<u8>,
    pub clusters: usize,
}

/// A cluster-level treatment design: which cluster is under the cluster-level
/// intervention in which period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialDesign {
    periods: usize,
    rows: Vec<SequenceRow>,
    clusters: usize,
}

impl TrialDesign {
    /// Build a design from `(pattern, cluster_count)` rows.
    ///
    /// Every pattern must have length `periods` with entries in {0, 1}; the
    /// expanded design needs at least two clusters and at least one 0 and one
    /// 1 entry overall (otherwise no treatment contrast is estimable).
    pub fn new(periods: usize, rows: Vec<(Vec<u8>, usize)>) -> Result<Self> {
        if periods == 0 {
            return Err(Error::Validation("periods must be at least 1".to_string()));
        }
        let rows: Vec<SequenceRow> = rows
            .into_iter()
            .map(|(pattern, clusters)| SequenceRow { pattern, clusters })
            .collect();
        for (idx, row) in rows.iter().enumerate() {
            if row.pattern.len() != periods {
                return Err(Error::Validation(format!(
                    "sequence {idx} has {} periods, expected {periods}",
                    row.pattern.len()
                )));
            }
            if row.pattern.iter().any(|&x| x > 1) {
                return Err(Error::Validation(format!(
                    "sequence {idx} has entries outside {{0,1}}"
                )));
            }
            if row.clusters == 0 {
                return Err(Error::Validation(format!(
                    "sequence {idx} has zero clusters"
                )));
            }
        }
        let clusters: usize = rows.iter().map(|r| r.clusters).sum();
        if clusters < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 clusters, got {clusters}"
            )));
        }
        let ones: u64 = rows
            .iter()
            .map(|r| r.clusters as u64 * r.pattern.iter().map(|&x| x as u64).sum::<u64>())
            .sum();
        let total = clusters as u64 * periods as u64;
        if ones == 0 || ones == total {
            return Err(Error::DegenerateDesign(
                "every cluster-period is under the same condition; treatment effects are inestimable"
                    .to_string(),
            ));
        }
        Ok(Self {
            periods,
            rows,
            clusters,
        })
    }

    /// Standard stepped wedge over `periods` periods: `periods - 1` sequences,
    /// sequence s crossing over after period s; one cluster per sequence.
    pub fn stepped_wedge(periods: usize) -> Result<Self> {
        if periods < 2 {
            return Err(Error::Validation(format!(
                "stepped wedge needs at least 2 periods, got {periods}"
            )));
        }
        let rows = (1..periods)
            .map(|s| {
                let pattern = (1..=periods).map(|j| u8::from(j > s)).collect();
                (pattern, 1)
            })
            .collect();
        Self::new(periods, rows)
    }

    /// Parallel design: one all-control and one all-intervention sequence.
    pub fn parallel(periods: usize) -> Result<Self> {
        Self::new(
            periods,
            vec![(vec![0; periods], 1), (vec![1; periods], 1)],
        )
    }

    /// Two-sequence crossover: control/intervention swapped at mid-trial.
    /// Requires an even number of periods.
    pub fn crossover(periods: usize) -> Result<Self> {
        if periods == 0 || !periods.is_multiple_of(2) {
            return Err(Error::Validation(format!(
                "crossover needs an even number of periods, got {periods}"
            )));
        }
        let half = periods / 2;
        let mut first = vec![0u8; half];
        first.extend(vec![1u8; half]);
        let second: Vec<u8> = first.iter().map(|&x| 1 - x).collect();
        Self::new(periods, vec![(first, 1), (second, 1)])
    }

    /// The SharES trial design: 6 periods, 25 clusters; 5 clusters on each of
    /// the two constant (parallel) sequences and 3 clusters on each of the 5
    /// standard stepped-wedge sequences.
    pub fn shares() -> Self {
        let mut rows = vec![(vec![0u8; 6], 5), (vec![1u8; 6], 5)];
        for s in 1..6usize {
            let pattern = (1..=6usize).map(|j| u8::from(j > s)).collect();
            rows.push((pattern, 3));
        }
        Self::new(6, rows).expect("the SharES layout is a valid design")
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    /// Total number of clusters (rows of the expanded matrix).
    pub fn clusters(&self) -> usize {
        self.clusters
    }

    pub fn rows(&self) -> &[SequenceRow] {
        &self.rows
    }

    /// One pattern per cluster, in sequence order.
    pub fn cluster_patterns(&self) -> Vec<&[u8]> {
        let mut out = Vec::with_capacity(self.clusters);
        for row in &self.rows {
            for _ in 0..row.clusters {
                out.push(row.pattern.as_slice());
            }
        }
        out
    }

    /// Treatment indicator of cluster `i` (expanded index) in period `j`.
    pub fn x(&self, cluster: usize, period: usize) -> f64 {
        self.cluster_patterns()[cluster][period] as f64
    }

    /// The same design with every sequence's cluster count multiplied by `k`.
    pub fn replicate(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Validation("replication factor must be >= 1".to_string()));
        }
        Self::new(
            self.periods,
            self.rows
                .iter()
                .map(|r| (r.pattern.clone(), r.clusters * k))
                .collect(),
        )
    }

    pub fn summarize(&self) -> DesignSummary {
        summarize(self)
    }
}

/// Scalar summaries of the cluster-expanded treatment matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSummary {
    /// Overall intervention fraction over cluster-periods.
    pub pi_x: f64,
    /// Per-cluster intervention fraction, expanded order.
    pub pi_x_cluster: Vec<f64>,
    /// Mean of the squared per-cluster fractions.
    pub pi_xx: f64,
    /// Per-period intervention fraction across clusters.
    pub pi_x_period: Vec<f64>,
    /// Sum of all treatment indicators.
    pub b: f64,
    /// Sum of squared cluster (row) totals.
    pub c: f64,
    /// Sum of squared period (column) totals.
    pub e: f64,
}

/// Compute the design constants on the cluster-expanded matrix.
pub fn summarize(design: &TrialDesign) -> DesignSummary {
    let t = design.periods();
    let n = design.clusters();
    let patterns = design.cluster_patterns();

    let mut b = 0u64;
    let mut c = 0u64;
    let mut col_sums = vec![0u64; t];
    let mut pi_x_cluster = Vec::with_capacity(n);
    for pat in &patterns {
        let row_sum: u64 = pat.iter().map(|&x| x as u64).sum();
        b += row_sum;
        c += row_sum * row_sum;
        for (j, &x) in pat.iter().enumerate() {
            col_sums[j] += x as u64;
        }
        pi_x_cluster.push(row_sum as f64 / t as f64);
    }
    let e: u64 = col_sums.iter().map(|&s| s * s).sum();

    // Derived from the exact integer counts, so the summaries are invariant
    // under row permutation down to the last bit.
    let pi_x = b as f64 / (n as f64 * t as f64);
    let pi_xx = c as f64 / (n as f64 * (t as f64 * t as f64));
    let pi_x_period = col_sums.iter().map(|&s| s as f64 / n as f64).collect();

    DesignSummary {
        pi_x,
        pi_x_cluster,
        pi_xx,
        pi_x_period,
        b: b as f64,
        c: c as f64,
        e: e as f64,
    }
}

/// Cluster-period cell sizes: a single constant or one count per cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CellSizes {
    Constant(u64),
    /// Row per cluster (expanded order), column per period.
    PerCell(Vec<Vec<u64>>),
}

/// Cell sizes plus the individual-allocation fraction, with derived counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CellPlan {
    sizes: CellSizes,
    pi_z: f64,
    clusters: usize,
    periods: usize,
    n_obs: u64,
    n_x1: u64,
    n_x0: u64,
}

impl CellPlan {
    pub fn sizes(&self) -> &CellSizes {
        &self.sizes
    }

    /// `Some(m)` when the plan was built from a single constant size.
    /// A per-cell matrix that happens to have equal entries still reports
    /// `None`: it is dispatched through the variable-size formulas.
    pub fn constant_size(&self) -> Option<u64> {
        match self.sizes {
            CellSizes::Constant(m) => Some(m),
            CellSizes::PerCell(_) => None,
        }
    }

    pub fn size(&self, cluster: usize, period: usize) -> u64 {
        match &self.sizes {
            CellSizes::Constant(m) => *m,
            CellSizes::PerCell(mat) => mat[cluster][period],
        }
    }

    pub fn pi_z(&self) -> f64 {
        self.pi_z
    }

    /// Variance of the individual-allocation indicator, `pi_z * (1 - pi_z)`.
    pub fn sigma2_z(&self) -> f64 {
        self.pi_z * (1.0 - self.pi_z)
    }

    pub fn clusters(&self) -> usize {
        self.clusters
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    /// Total number of observations.
    pub fn n_obs(&self) -> u64 {
        self.n_obs
    }

    /// Observations in cluster-periods under the cluster-level intervention.
    pub fn n_x1(&self) -> u64 {
        self.n_x1
    }

    /// Observations in control cluster-periods.
    pub fn n_x0(&self) -> u64 {
        self.n_x0
    }

    /// Check the plan matches the design it will be evaluated with.
    pub fn check_matches(&self, design: &TrialDesign) -> Result<()> {
        if self.clusters != design.clusters() || self.periods != design.periods() {
            return Err(Error::Validation(format!(
                "cell plan is {}x{} but design is {}x{}",
                self.clusters,
                self.periods,
                design.clusters(),
                design.periods()
            )));
        }
        Ok(())
    }
}

/// Build a [`CellPlan`] for a design, validating shape and `0 < pi_z < 1`.
pub fn cell_plan(design: &TrialDesign, sizes: CellSizes, pi_z: f64) -> Result<CellPlan> {
    if !(pi_z > 0.0 && pi_z < 1.0) {
        return Err(Error::Validation(format!(
            "pi_z must be strictly between 0 and 1, got {pi_z}"
        )));
    }
    let n = design.clusters();
    let t = design.periods();
    match &sizes {
        CellSizes::Constant(m) => {
            if *m == 0 {
                return Err(Error::Validation("cell size must be at least 1".to_string()));
            }
        }
        CellSizes::PerCell(mat) => {
            if mat.len() != n {
                return Err(Error::Validation(format!(
                    "cell size matrix has {} rows, design has {n} clusters",
                    mat.len()
                )));
            }
            for (i, row) in mat.iter().enumerate() {
                if row.len() != t {
                    return Err(Error::Validation(format!(
                        "cell size row {i} has {} entries, design has {t} periods",
                        row.len()
                    )));
                }
                if row.contains(&0) {
                    return Err(Error::Validation(format!(
                        "cell size row {i} contains an empty cell"
                    )));
                }
            }
        }
    }

    let patterns = design.cluster_patterns();
    let mut n_obs = 0u64;
    let mut n_x1 = 0u64;
    for (i, pat) in patterns.iter().enumerate() {
        for (j, &x) in pat.iter().enumerate() {
            let m = match &sizes {
                CellSizes::Constant(m) => *m,
                CellSizes::PerCell(mat) => mat[i][j],
            };
            n_obs += m;
            if x == 1 {
                n_x1 += m;
            }
        }
    }
    Ok(CellPlan {
        sizes,
        pi_z,
        clusters: n,
        periods: t,
        n_obs,
        n_x1,
        n_x0: n_obs - n_x1,
    })
}

// ---------------------------------------------------------------------------
// Design file (JSON) read by the CLI
// ---------------------------------------------------------------------------

/// On-disk design description. Unknown keys are rejected.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignFile {
    pub periods: usize,
    pub sequences: Vec<SequenceEntry>,
    #[serde(default)]
    pub cell_size: Option<u64>,
    #[serde(default)]
    pub cell_sizes: Option<Vec<Vec<u64>>>,
    #[serde(default)]
    pub pi_z: Option<f64>,
    #[serde(default)]
    pub correlation: Option<CorrelationEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceEntry {
    pub pattern: Vec<u8>,
    pub clusters: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationEntry {
    pub sigma2: f64,
    pub wpicc: f64,
    pub bpicc: f64,
}

impl DesignFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: DesignFile =
            serde_json::from_str(text).map_err(|e| Error::DesignFile(e.to_string()))?;
        if file.cell_size.is_some() && file.cell_sizes.is_some() {
            return Err(Error::DesignFile(
                "specify cell_size or cell_sizes, not both".to_string(),
            ));
        }
        Ok(file)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_design(&self) -> Result<TrialDesign> {
        TrialDesign::new(
            self.periods,
            self.sequences
                .iter()
                .map(|s| (s.pattern.clone(), s.clusters))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn stepped_wedge_layout() {
        let d = TrialDesign::stepped_wedge(3).unwrap();
        let pats: Vec<Vec<u8>> = d.cluster_patterns().iter().map(|p| p.to_vec()).collect();
        assert_eq!(pats, vec![vec![0, 1, 1], vec![0, 0, 1]]);
        assert!((d.summarize().pi_x - 0.5).abs() < 1e-15);
        let d6 = TrialDesign::stepped_wedge(6).unwrap();
        assert_eq!(d6.rows().len(), 5);
        assert_eq!(d6.summarize().b, 15.0);
        assert!(TrialDesign::stepped_wedge(1).is_err());
    }

    #[test]
    fn parallel_and_crossover_layout() {
        let p = TrialDesign::parallel(6).unwrap();
        let pats = p.cluster_patterns();
        assert_eq!(pats[0], &[0; 6]);
        assert_eq!(pats[1], &[1; 6]);
        let five_each = TrialDesign::new(6, vec![(vec![0; 6], 5), (vec![1; 6], 5)]).unwrap();
        assert!((five_each.summarize().pi_x - 0.5).abs() < 1e-15);

        let x = TrialDesign::crossover(2).unwrap();
        let pats: Vec<Vec<u8>> = x.cluster_patterns().iter().map(|p| p.to_vec()).collect();
        assert_eq!(pats, vec![vec![0, 1], vec![1, 0]]);
        assert_eq!(x.summarize().e, 2.0);
        assert!(TrialDesign::crossover(3).is_err());
    }

    #[test]
    fn shares_layout() {
        let d = TrialDesign::shares();
        assert_eq!(d.clusters(), 25);
        assert_eq!(d.periods(), 6);
        let s = d.summarize();
        assert!((s.pi_x - 0.5).abs() < 1e-15);
        // 5 all-control, 5 all-intervention, 3 clusters on each wedge step.
        let expected_pi_xx = (5.0 * 0.0 + 5.0 * 1.0 + 3.0 * (25.0 + 16.0 + 9.0 + 4.0 + 1.0) / 36.0) / 25.0;
        assert!((s.pi_xx - expected_pi_xx).abs() < 1e-15);
        assert_eq!((s.b, s.c, s.e), (75.0, 345.0, 1095.0));
    }

    #[test]
    fn summarize_small_designs() {
        let s = TrialDesign::stepped_wedge(3).unwrap().summarize();
        assert_eq!((s.b, s.c, s.e), (3.0, 5.0, 5.0));
        let p = TrialDesign::parallel(2).unwrap().summarize();
        assert!((p.pi_x - 0.5).abs() < 1e-15);
        assert!((p.pi_xx - 0.5).abs() < 1e-15);
    }

    #[test]
    fn degenerate_uniform_design_rejected() {
        let err = TrialDesign::new(2, vec![(vec![0, 0], 2)]).unwrap_err();
        assert!(matches!(err, Error::DegenerateDesign(_)), "{err}");
        let err = TrialDesign::new(2, vec![(vec![1, 1], 3)]).unwrap_err();
        assert!(matches!(err, Error::DegenerateDesign(_)), "{err}");
    }

    #[test]
    fn cell_plan_counts() {
        let d = TrialDesign::shares();
        let plan = cell_plan(&d, CellSizes::Constant(4), 0.5).unwrap();
        assert_eq!(plan.n_obs(), 600);
        assert_eq!(plan.n_x1(), 300);
        assert_eq!(plan.n_x0(), 300);
        assert!((plan.sigma2_z() - 0.25).abs() < 1e-15);

        let sw = TrialDesign::stepped_wedge(3).unwrap();
        let plan = cell_plan(&sw, CellSizes::Constant(1), 0.5).unwrap();
        assert_eq!(plan.n_x1(), 3);

        // pi_z = 0.5 maximises sigma2_z.
        for pz in [0.1, 0.3, 0.7, 0.9] {
            let p = cell_plan(&sw, CellSizes::Constant(1), pz).unwrap();
            assert!(p.sigma2_z() <= 0.25);
        }
    }

    #[test]
    fn constant_plan_reproduces_product_count() {
        let d = TrialDesign::shares();
        let s = d.summarize();
        let plan = cell_plan(&d, CellSizes::Constant(7), 0.5).unwrap();
        let expected = s.pi_x * 7.0 * d.clusters() as f64 * d.periods() as f64;
        assert_eq!(plan.n_x1() as f64, expected);
    }

    #[test]
    fn cell_plan_validation() {
        let d = TrialDesign::stepped_wedge(3).unwrap();
        assert!(cell_plan(&d, CellSizes::Constant(2), 0.0).is_err());
        assert!(cell_plan(&d, CellSizes::Constant(2), 1.0).is_err());
        assert!(cell_plan(&d, CellSizes::Constant(0), 0.5).is_err());
        // wrong shape: 2 clusters x 3 periods expected
        assert!(cell_plan(&d, CellSizes::PerCell(vec![vec![1, 2], vec![3, 4]]), 0.5).is_err());
        assert!(cell_plan(&d, CellSizes::PerCell(vec![vec![1, 2, 0], vec![3, 4, 5]]), 0.5).is_err());
        assert!(cell_plan(&d, CellSizes::PerCell(vec![vec![1, 2, 3], vec![3, 4, 5]]), 0.5).is_ok());
    }

    #[test]
    fn replication_scales_design_constants() {
        // B and C scale with the replication factor, E with its square;
        // the intervention fractions are unchanged.
        let d = TrialDesign::stepped_wedge(4).unwrap();
        let s1 = d.summarize();
        let s3 = d.replicate(3).unwrap().summarize();
        assert_eq!(s3.b, 3.0 * s1.b);
        assert_eq!(s3.c, 3.0 * s1.c);
        assert_eq!(s3.e, 9.0 * s1.e);
        assert_eq!(s3.pi_x, s1.pi_x);
        assert_eq!(s3.pi_xx, s1.pi_xx);
    }

    #[test]
    fn design_file_parsing() {
        let text = r#"{
            "periods": 2,
            "sequences": [
                {"pattern": [0, 1], "clusters": 2},
                {"pattern": [0, 0], "clusters": 1}
            ],
            "cell_size": 3,
            "pi_z": 0.5,
            "correlation": {"sigma2": 1.0, "wpicc": 0.2, "bpicc": 0.1}
        }"#;
        let file = DesignFile::from_json(text).unwrap();
        let d = file.to_design().unwrap();
        assert_eq!(d.clusters(), 3);
        assert_eq!(file.cell_size, Some(3));

        let unknown = r#"{"periods": 2, "sequences": [], "color": "red"}"#;
        assert!(DesignFile::from_json(unknown).is_err());

        let both = r#"{
            "periods": 1,
            "sequences": [{"pattern": [0], "clusters": 1}, {"pattern": [1], "clusters": 1}],
            "cell_size": 2,
            "cell_sizes": [[2], [2]]
        }"#;
        assert!(DesignFile::from_json(both).is_err());
    }

    proptest! {
        #[test]
        fn prop_summaries_invariant_under_row_permutation(
            seed in 0u64..1000,
            t in 1usize..5,
            n in 2usize..7,
        ) {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            let mut rows: Vec<(Vec<u8>, usize)> = (0..n)
                .map(|_| ((0..t).map(|_| rng.random_range(0..=1u8)).collect(), 1))
                .collect();
            let ones: u64 = rows.iter().flat_map(|(p, _)| p.iter()).map(|&x| x as u64).sum();
            prop_assume!(ones > 0 && ones < (n * t) as u64);
            let d1 = TrialDesign::new(t, rows.clone()).unwrap();
            rows.shuffle(&mut rng);
            let d2 = TrialDesign::new(t, rows).unwrap();
            let (s1, s2) = (d1.summarize(), d2.summarize());
            prop_assert_eq!(s1.b, s2.b);
            prop_assert_eq!(s1.c, s2.c);
            prop_assert_eq!(s1.e, s2.e);
            prop_assert_eq!(s1.pi_x, s2.pi_x);
            prop_assert_eq!(s1.pi_xx, s2.pi_xx);
        }
    }
}
