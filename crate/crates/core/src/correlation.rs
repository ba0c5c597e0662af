//! Block-exchangeable correlation structure of the outcome model and the
//! scalar coefficients derived from it.
//!
//! One observation has total variance `sigma2_total`. Two observations from
//! the same cluster correlate at `wpicc` (within-period ICC) when they share
//! a period and at `bpicc` (between-period ICC) otherwise, with
//! `bpicc <= wpicc`. Equivalently the model has three variance components:
//! cluster (`sigma2_cluster`), cluster-period (`sigma2_cluster_period`) and
//! residual (`sigma2_residual`). Setting `bpicc == wpicc` recovers the
//! exchangeable structure (cluster-period component zero).

use crate::error::{Error, Result};

/// Slack used when validating ICC inputs, to absorb decimal round-trip noise.
const ICC_SLACK: f64 = 1e-12;

/// Total variance plus within/between-period intraclass correlations.
///
/// Immutable after construction; all derived quantities are pure functions
/// of the three fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationStructure {
    sigma2_total: f64,
    wpicc: f64,
    bpicc: f64,
}

/// The three variance components implied by a [`CorrelationStructure`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceComponents {
    /// Cluster-level component (between-period covariance).
    pub sigma2_cluster: f64,
    /// Cluster-period component (extra within-period covariance).
    pub sigma2_cluster_period: f64,
    /// Residual (individual-level) component.
    pub sigma2_residual: f64,
}

impl CorrelationStructure {
    /// Build and validate a block-exchangeable structure.
    ///
    /// Requires `sigma2_total > 0` and `0 <= bpicc <= wpicc < 1` (up to a
    /// 1e-12 slack; values inside the slack are clamped onto the boundary).
    pub fn new(sigma2_total: f64, wpicc: f64, bpicc: f64) -> Result<Self> {
        if !sigma2_total.is_finite() || sigma2_total <= 0.0 {
            return Err(Error::Validation(format!(
                "sigma2_total must be a positive finite number, got {sigma2_total}"
            )));
        }
        if !wpicc.is_finite() || !bpicc.is_finite() {
            return Err(Error::Validation(
                "ICCs must be finite numbers".to_string(),
            ));
        }
        if bpicc < -ICC_SLACK {
            return Err(Error::Validation(format!(
                "violated 0 <= bpicc: between-period ICC is {bpicc}"
            )));
        }
        if wpicc - bpicc < -ICC_SLACK {
            return Err(Error::Validation(format!(
                "violated bpicc <= wpicc: between-period ICC {bpicc} exceeds within-period ICC {wpicc}"
            )));
        }
        if wpicc >= 1.0 {
            return Err(Error::Validation(format!(
                "violated wpicc < 1: within-period ICC is {wpicc}"
            )));
        }
        let bpicc = bpicc.max(0.0);
        let wpicc = wpicc.max(bpicc);
        Ok(Self {
            sigma2_total,
            wpicc,
            bpicc,
        })
    }

    /// Exchangeable structure: a single ICC, `bpicc == wpicc`.
    pub fn exchangeable(sigma2_total: f64, icc: f64) -> Result<Self> {
        Self::new(sigma2_total, icc, icc)
    }

    pub fn sigma2_total(&self) -> f64 {
        self.sigma2_total
    }

    /// Within-period ICC (same cluster, same period).
    pub fn wpicc(&self) -> f64 {
        self.wpicc
    }

    /// Between-period ICC (same cluster, different periods).
    pub fn bpicc(&self) -> f64 {
        self.bpicc
    }

    /// Replace the between-period ICC, keeping everything else.
    pub fn with_bpicc(&self, bpicc: f64) -> Result<Self> {
        Self::new(self.sigma2_total, self.wpicc, bpicc)
    }

    /// Split the total variance into cluster / cluster-period / residual
    /// components. Each component is within an ulp of the defining product
    /// and `(a + b) + c == sigma2_total` holds bit-exactly: each split puts
    /// the rounding on the smaller half so the other half is a Sterbenz-exact
    /// difference.
    pub fn components(&self) -> VarianceComponents {
        // splits x into (h, r) with h + r == x bit-exactly and h within an
        // ulp of the requested head value: keep the direct difference when
        // it is already exact, otherwise rebase the head on the rounded
        // remainder (a Sterbenz-exact difference, since an inexact remainder
        // implies head < x/2).
        fn exact_split(x: f64, head: f64) -> (f64, f64) {
            let head = head.min(x);
            let rest = x - head;
            if head + rest == x {
                (head, rest)
            } else {
                (x - rest, rest)
            }
        }
        let total = self.sigma2_total;
        let (w, sigma2_residual) = exact_split(total, self.wpicc * total);
        let (sigma2_cluster, sigma2_cluster_period) = exact_split(w, self.bpicc * total);
        VarianceComponents {
            sigma2_cluster,
            sigma2_cluster_period,
            sigma2_residual,
        }
    }

    /// Covariance between two observations of the same cluster: the total
    /// variance on the diagonal, `wpicc * sigma2` within a period,
    /// `bpicc * sigma2` across periods.
    pub fn covariance_entry(&self, same_observation: bool, same_period: bool) -> f64 {
        if same_observation {
            self.sigma2_total
        } else if same_period {
            self.wpicc * self.sigma2_total
        } else {
            self.bpicc * self.sigma2_total
        }
    }
}

/// Scalar coefficients of the within-cluster covariance matrix and its
/// inverse, for a cluster observed over `periods` periods with `cell_size`
/// observations per cluster-period.
///
/// The covariance matrix is `sigma2 * (a1*I + b1*(I_T (x) J_m) + c1*J_mT)`
/// and its inverse is `sigma2^-1 * (a2*I + b2*(I_T (x) J_m) + c2*J_mT)`;
/// `a3, b3, c3` are the aggregate versions used when the matrix is collapsed
/// over cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceCoefficients {
    pub a1: f64,
    pub b1: f64,
    pub c1: f64,
    pub a2: f64,
    pub b2: f64,
    pub c2: f64,
    pub a3: f64,
    pub b3: f64,
    pub c3: f64,
}

/// Convenience alias for [`CorrelationStructure::components`].
pub fn components(corr: &CorrelationStructure) -> VarianceComponents {
    corr.components()
}

/// Compute the nine covariance coefficients for `cell_size` observations per
/// period over `periods` periods.
pub fn coefficients(
    corr: &CorrelationStructure,
    cell_size: u64,
    periods: usize,
) -> Result<CovarianceCoefficients> {
    if cell_size < 1 {
        return Err(Error::Validation(
            "cell size must be at least 1".to_string(),
        ));
    }
    if periods < 1 {
        return Err(Error::Validation(
            "number of periods must be at least 1".to_string(),
        ));
    }
    let m = cell_size as f64;
    let t = periods as f64;
    let a1 = 1.0 - corr.wpicc();
    let b1 = corr.wpicc() - corr.bpicc();
    let c1 = corr.bpicc();
    let a2 = 1.0 / a1;
    let b2 = -b1 / (a1 * (a1 + b1 * m));
    let c2 = -c1 / ((a1 + b1 * m) * (a1 + b1 * m + c1 * m * t));
    Ok(CovarianceCoefficients {
        a1,
        b1,
        c1,
        a2,
        b2,
        c2,
        a3: a2 * m * t,
        b3: b2 * m * m * t,
        c3: c2 * m * m * t * t,
    })
}
