//! Ground costs, temporal distances, and the Gaussian temporal prior.
//!
//! The transport geometry is built from three pieces:
//!
//! * a cosine ground cost          c[i][j] = 1 - cos(h_i, z_j)
//! * a normalized temporal offset  d[i][j] = |i/l_a - j/l_t| / sqrt(1/l_a^2 + 1/l_t^2)
//! * a Gaussian prior over offsets p[i][j] = exp(-d[i][j]^2 / (2 sigma^2)) / (sigma sqrt(2 pi))
//!
//! Positions are 1-based in the distance formula, so the (1,1) cell of an
//! equal-length pair sits exactly on the diagonal with d = 0.
//!
//! Two equivalent ways of folding temporal order into the ground cost are
//! provided. The KL form subtracts scaled log-prior terms,
//!
//! ```text
//! c~[i][j] = c[i][j] - alpha2 * ln p[i][j]
//! ```
//!
//! and the beta form adds a squared-distance penalty,
//!
//! ```text
//! c~[i][j] = c[i][j] + beta * d[i][j]^2
//! ```
//!
//! With beta = alpha2 / (2 sigma^2) the two differ only by the constant
//! alpha2 * ln(sigma sqrt(2 pi)) added to every entry, which transport
//! solutions ignore. The beta form is the canonical entry point; sigma is
//! not recoverable from beta alone and is only needed when working with an
//! explicit prior.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::seq::{check_finite, FeatureSequence};

/// Default weight on the squared temporal distance in the beta-form cost.
pub const DEFAULT_BETA: f64 = 0.5;

/// Dense l_a x l_t matrix of per-pair transport costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    entries: Array2<f64>,
}

impl CostMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::EmptyInput {
                context: "cost matrix",
            });
        }
        check_finite(&entries, "cost matrix")?;
        Ok(Self { entries })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.entries.nrows(), self.entries.ncols())
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> Array2<f64> {
        self.entries
    }
}

/// Gaussian prior over temporal offsets. Log-entries are kept alongside the
/// density values because the downstream cost construction and KL terms
/// consume ln p, and the density itself underflows to 0 long before its log
/// misbehaves (d^2/(2 sigma^2) > ~745 already flushes exp to zero).
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalPrior {
    entries: Array2<f64>,
    log_entries: Array2<f64>,
    sigma: f64,
}

impl TemporalPrior {
    /// Wraps an explicit prior matrix. Entries must be strictly positive,
    /// finite, and no larger than the Gaussian peak 1/(sigma sqrt(2 pi)).
    pub fn from_entries(entries: Array2<f64>, sigma: f64) -> Result<Self> {
        if sigma <= 0.0 || !sigma.is_finite() {
            return Err(Error::InvalidParameter {
                name: "sigma",
                requirement: "a positive finite real",
                value: sigma,
            });
        }
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::EmptyInput {
                context: "temporal prior",
            });
        }
        check_finite(&entries, "temporal prior")?;
        let peak = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        for ((i, j), &p) in entries.indexed_iter() {
            if p <= 0.0 {
                return Err(Error::NonPositivePrior { row: i, col: j });
            }
            if p > peak * (1.0 + 1e-12) {
                return Err(Error::InvalidParameter {
                    name: "prior entry",
                    requirement: "at most the Gaussian peak 1/(sigma*sqrt(2*pi))",
                    value: p,
                });
            }
        }
        let log_entries = entries.mapv(f64::ln);
        Ok(Self {
            entries,
            log_entries,
            sigma,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.entries.nrows(), self.entries.ncols())
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    /// ln p[i][j], exact even where the density itself underflows.
    pub fn log_entries(&self) -> &Array2<f64> {
        &self.log_entries
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// Pairwise cosine distances 1 - cos(h_i, z_j), clamped to [0, 2].
///
/// A zero-norm row has no direction; its costs are defined as 1 (treated as
/// orthogonal to everything) so the matrix stays finite.
pub fn cosine_cost(h: &FeatureSequence, z: &FeatureSequence) -> Result<CostMatrix> {
    if h.dim() != z.dim() {
        return Err(Error::DimensionMismatch {
            left: h.dim(),
            right: z.dim(),
        });
    }
    let mut entries = Array2::zeros((h.len(), z.len()));
    for (i, hi) in h.data().rows().into_iter().enumerate() {
        for (j, zj) in z.data().rows().into_iter().enumerate() {
            entries[[i, j]] = cosine_distance(hi, zj);
        }
    }
    CostMatrix::new(entries)
}

/// 1 - cos between two rows, clamped to [0, 2]; zero-norm rows cost 1.
pub(crate) fn cosine_distance(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    1.0 - (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Cross-temporal distances on normalized 1-based positions:
/// d[i][j] = |i/l_a - j/l_t| / sqrt(1/l_a^2 + 1/l_t^2).
pub fn temporal_distance(l_a: usize, l_t: usize) -> Result<Array2<f64>> {
    if l_a == 0 || l_t == 0 {
        return Err(Error::InvalidParameter {
            name: "sequence length",
            requirement: "at least 1",
            value: l_a.min(l_t) as f64,
        });
    }
    let (fa, ft) = (l_a as f64, l_t as f64);
    let denom = (1.0 / (fa * fa) + 1.0 / (ft * ft)).sqrt();
    let mut d = Array2::zeros((l_a, l_t));
    for i in 1..=l_a {
        for j in 1..=l_t {
            d[[i - 1, j - 1]] = (i as f64 / fa - j as f64 / ft).abs() / denom;
        }
    }
    Ok(d)
}

/// Unnormalized Gaussian density of the temporal distance,
/// p[i][j] = exp(-d[i][j]^2 / (2 sigma^2)) / (sigma sqrt(2 pi)).
///
/// The matrix is used as a prior for KL regularization and is deliberately
/// not rescaled to total mass 1: only differences of ln p reach the solver,
/// and those are normalization-invariant.
pub fn gaussian_prior(l_a: usize, l_t: usize, sigma: f64) -> Result<TemporalPrior> {
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(Error::InvalidParameter {
            name: "sigma",
            requirement: "a positive finite real",
            value: sigma,
        });
    }
    let d = temporal_distance(l_a, l_t)?;
    let log_peak = -(sigma * (2.0 * std::f64::consts::PI).sqrt()).ln();
    let inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
    let log_entries = d.mapv(|dij| log_peak - dij * dij * inv_two_sigma_sq);
    let entries = log_entries.mapv(f64::exp);
    Ok(TemporalPrior {
        entries,
        log_entries,
        sigma,
    })
}

/// KL-form combined cost: c~[i][j] = c[i][j] - alpha2 * ln p[i][j].
pub fn combined_cost_kl(c: &CostMatrix, p: &TemporalPrior, alpha2: f64) -> Result<CostMatrix> {
    if alpha2 < 0.0 || !alpha2.is_finite() {
        return Err(Error::InvalidParameter {
            name: "alpha2",
            requirement: "a nonnegative finite real",
            value: alpha2,
        });
    }
    let (rows, cols) = c.shape();
    if p.shape() != (rows, cols) {
        return Err(Error::ShapeMismatch {
            context: "combined_cost_kl prior",
            expected_rows: rows,
            expected_cols: cols,
            rows: p.shape().0,
            cols: p.shape().1,
        });
    }
    CostMatrix::new(c.entries() - &(alpha2 * p.log_entries()))
}

/// Beta-form combined cost: c~[i][j] = c[i][j] + beta * d[i][j]^2 with the
/// temporal distance for the given lengths.
pub fn combined_cost_beta(c: &CostMatrix, beta: f64, l_a: usize, l_t: usize) -> Result<CostMatrix> {
    if beta < 0.0 || !beta.is_finite() {
        return Err(Error::InvalidParameter {
            name: "beta",
            requirement: "a nonnegative finite real",
            value: beta,
        });
    }
    if c.shape() != (l_a, l_t) {
        return Err(Error::ShapeMismatch {
            context: "combined_cost_beta",
            expected_rows: l_a,
            expected_cols: l_t,
            rows: c.shape().0,
            cols: c.shape().1,
        });
    }
    let d = temporal_distance(l_a, l_t)?;
    CostMatrix::new(c.entries() + &d.mapv(|x| beta * x * x))
}
