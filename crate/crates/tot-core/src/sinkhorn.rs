//! Entropic optimal transport via Sinkhorn iteration.
//!
//! Given a cost matrix C and marginals a, b, the solver finds the coupling
//! minimizing <gamma, C> - eps * H(gamma) over the polytope of nonnegative
//! matrices with row sums a and column sums b. It alternates diagonal
//! scalings of the kernel G = exp(-C/eps): each sweep updates the row
//! scaling u1, then the column scaling u2, and the solution is assembled as
//! diag(u1) * G * diag(u2).
//!
//! Two evaluation domains are provided. The plain domain iterates on u1, u2
//! directly and is fine for moderate eps. For small eps the kernel entries
//! exp(-c/eps) underflow, so the stabilized variant iterates on the dual
//! potentials f = eps*ln(u1), g = eps*ln(u2) with log-sum-exp reductions;
//! it is the default below eps = 0.05. Plain-domain underflow is reported
//! as an error rather than silently returning NaN.
//!
//! Convergence is declared when the L1 marginal violation
//! max(sum_i |row_i - a_i|, sum_j |col_j - b_j|) drops below the configured
//! tolerance. Hitting max_iterations first is not an error: the coupling is
//! returned flagged as non-converged and the caller decides.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::geometry::{combined_cost_beta, cosine_cost, CostMatrix, TemporalPrior};
use crate::math::logsumexp;
use crate::seq::{FeatureSequence, MarginalWeights};

pub const DEFAULT_EPSILON: f64 = 0.5;
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;

/// Below this temperature the kernel exp(-c/eps) underflows for ordinary
/// cosine-scale costs, so the log-domain path becomes the default.
pub const STABILIZED_BELOW: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    pub epsilon: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub stabilized: bool,
}

impl SinkhornConfig {
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            tolerance: DEFAULT_TOLERANCE,
            stabilized: epsilon < STABILIZED_BELOW,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn with_stabilized(mut self, stabilized: bool) -> Self {
        self.stabilized = stabilized;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                requirement: "a positive finite real",
                value: self.epsilon,
            });
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "tolerance",
                requirement: "a positive finite real",
                value: self.tolerance,
            });
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter {
                name: "max_iterations",
                requirement: "at least 1",
                value: 0.0,
            });
        }
        Ok(())
    }
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self::new(DEFAULT_EPSILON)
    }
}

/// Transport plan together with the marginals it was solved against and the
/// solver diagnostics. Entries are nonnegative and the row/column sums match
/// the marginals up to `marginal_error`.
#[derive(Debug, Clone)]
pub struct Coupling {
    entries: Array2<f64>,
    row_marginals: MarginalWeights,
    col_marginals: MarginalWeights,
    iterations: usize,
    marginal_error: f64,
    converged: bool,
}

impl Coupling {
    /// Wraps an externally produced plan, checking coupling invariants
    /// against the given tolerance.
    pub fn from_parts(
        entries: Array2<f64>,
        row_marginals: MarginalWeights,
        col_marginals: MarginalWeights,
        tolerance: f64,
    ) -> Result<Self> {
        if entries.nrows() != row_marginals.len() || entries.ncols() != col_marginals.len() {
            return Err(Error::ShapeMismatch {
                context: "coupling",
                expected_rows: row_marginals.len(),
                expected_cols: col_marginals.len(),
                rows: entries.nrows(),
                cols: entries.ncols(),
            });
        }
        for ((i, j), &v) in entries.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: "coupling",
                    row: i,
                    col: j,
                });
            }
            if v < 0.0 {
                return Err(Error::NegativeMass {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
        let violation = marginal_violation(&entries, &row_marginals, &col_marginals);
        if violation > tolerance {
            return Err(Error::MarginalViolation {
                violation,
                tolerance,
            });
        }
        Ok(Self {
            entries,
            row_marginals,
            col_marginals,
            iterations: 0,
            marginal_error: violation,
            converged: true,
        })
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.entries.nrows(), self.entries.ncols())
    }

    pub fn row_marginals(&self) -> &MarginalWeights {
        &self.row_marginals
    }

    pub fn col_marginals(&self) -> &MarginalWeights {
        &self.col_marginals
    }

    /// Sweeps executed by the solver (0 for externally built plans).
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// L1 marginal violation measured on the assembled plan.
    pub fn marginal_error(&self) -> f64 {
        self.marginal_error
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Total mass shipped through cells whose normalized 1-based positions
    /// satisfy |i/l_a - j/l_t| <= band. band = 0.1 is the conventional
    /// near-diagonal statistic.
    pub fn near_diagonal_mass(&self, band: f64) -> f64 {
        let (la, lt) = self.shape();
        let (fa, ft) = (la as f64, lt as f64);
        let mut mass = 0.0;
        for ((i, j), &v) in self.entries.indexed_iter() {
            if ((i + 1) as f64 / fa - (j + 1) as f64 / ft).abs() <= band {
                mass += v;
            }
        }
        mass
    }
}

fn marginal_violation(entries: &Array2<f64>, a: &MarginalWeights, b: &MarginalWeights) -> f64 {
    let row_gap: f64 = entries
        .rows()
        .into_iter()
        .zip(a.as_array())
        .map(|(row, &ai)| (row.sum() - ai).abs())
        .sum();
    let col_gap: f64 = entries
        .columns()
        .into_iter()
        .zip(b.as_array())
        .map(|(col, &bj)| (col.sum() - bj).abs())
        .sum();
    row_gap.max(col_gap)
}

/// Entropic OT by alternating kernel scalings.
pub fn sinkhorn(
    c: &CostMatrix,
    a: &MarginalWeights,
    b: &MarginalWeights,
    cfg: &SinkhornConfig,
) -> Result<Coupling> {
    cfg.validate()?;
    let (rows, cols) = c.shape();
    if rows != a.len() || cols != b.len() {
        return Err(Error::ShapeMismatch {
            context: "sinkhorn cost",
            expected_rows: a.len(),
            expected_cols: b.len(),
            rows,
            cols,
        });
    }
    let (entries, iterations, converged) = if cfg.stabilized {
        solve_log_domain(c.entries(), a.as_array(), b.as_array(), cfg)
    } else {
        solve_plain(c.entries(), a.as_array(), b.as_array(), cfg)?
    };
    let marginal_error = marginal_violation(&entries, a, b);
    Ok(Coupling {
        entries,
        row_marginals: a.clone(),
        col_marginals: b.clone(),
        iterations,
        marginal_error,
        converged,
    })
}

fn solve_plain(
    c: &Array2<f64>,
    a: &Array1<f64>,
    b: &Array1<f64>,
    cfg: &SinkhornConfig,
) -> Result<(Array2<f64>, usize, bool)> {
    let kernel = c.mapv(|x| (-x / cfg.epsilon).exp());
    let mut u = Array1::<f64>::ones(a.len());
    let mut v = Array1::<f64>::ones(b.len());
    let mut kv = kernel.dot(&v);
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < cfg.max_iterations {
        sweeps += 1;
        u = a / &kv;
        let ktu = kernel.t().dot(&u);
        v = b / &ktu;
        kv = kernel.dot(&v);
        let healthy = u.iter().chain(v.iter()).all(|x| x.is_finite())
            && kv.iter().all(|x| x.is_finite() && *x > 0.0);
        if !healthy {
            return Err(Error::NumericalInstability { sweeps });
        }
        // Column sums are exact right after the v update, so the row gap is
        // the whole violation.
        let row_gap: f64 = u
            .iter()
            .zip(kv.iter())
            .zip(a)
            .map(|((ui, kvi), ai)| (ui * kvi - ai).abs())
            .sum();
        if row_gap < cfg.tolerance {
            converged = true;
            break;
        }
    }
    let entries = Array2::from_shape_fn(c.dim(), |(i, j)| u[i] * kernel[[i, j]] * v[j]);
    Ok((entries, sweeps, converged))
}

fn solve_log_domain(
    c: &Array2<f64>,
    a: &Array1<f64>,
    b: &Array1<f64>,
    cfg: &SinkhornConfig,
) -> (Array2<f64>, usize, bool) {
    let eps = cfg.epsilon;
    let (n, m) = c.dim();
    let log_a = a.mapv(f64::ln);
    let log_b = b.mapv(f64::ln);
    let mut f = Array1::<f64>::zeros(n);
    let mut g = Array1::<f64>::zeros(m);
    let mut scratch = vec![0.0; n.max(m)];
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < cfg.max_iterations {
        sweeps += 1;
        for i in 0..n {
            for j in 0..m {
                scratch[j] = (g[j] - c[[i, j]]) / eps;
            }
            f[i] = eps * (log_a[i] - logsumexp(&scratch[..m]));
        }
        for j in 0..m {
            for i in 0..n {
                scratch[i] = (f[i] - c[[i, j]]) / eps;
            }
            g[j] = eps * (log_b[j] - logsumexp(&scratch[..n]));
        }
        let mut row_gap = 0.0;
        for i in 0..n {
            let mut sum = 0.0;
            for j in 0..m {
                sum += ((f[i] + g[j] - c[[i, j]]) / eps).exp();
            }
            row_gap += (sum - a[i]).abs();
        }
        if row_gap < cfg.tolerance {
            converged = true;
            break;
        }
    }
    let entries = Array2::from_shape_fn((n, m), |(i, j)| ((f[i] + g[j] - c[[i, j]]) / eps).exp());
    (entries, sweeps, converged)
}

/// Temporal-order-preserving coupling: entropic OT on the cosine cost with
/// the beta-weighted squared temporal distance folded in, under uniform
/// marginals.
pub fn tot_coupling(
    h: &FeatureSequence,
    z: &FeatureSequence,
    beta: f64,
    cfg: &SinkhornConfig,
) -> Result<Coupling> {
    let c = cosine_cost(h, z)?;
    let c = combined_cost_beta(&c, beta, h.len(), z.len())?;
    let a = MarginalWeights::uniform(h.len())?;
    let b = MarginalWeights::uniform(z.len())?;
    sinkhorn(&c, &a, &b, cfg)
}

/// Transported cost <gamma, C> = sum_ij gamma_ij * c_ij.
pub fn ot_objective(gamma: &Coupling, c: &CostMatrix) -> Result<f64> {
    if gamma.shape() != c.shape() {
        return Err(Error::ShapeMismatch {
            context: "ot_objective",
            expected_rows: gamma.shape().0,
            expected_cols: gamma.shape().1,
            rows: c.shape().0,
            cols: c.shape().1,
        });
    }
    Ok(gamma
        .entries()
        .iter()
        .zip(c.entries())
        .map(|(g, c)| g * c)
        .sum())
}

/// Coupling entropy -sum gamma * ln(gamma), with 0 * ln 0 = 0.
pub fn entropy(gamma: &Coupling) -> Result<f64> {
    let mut h = 0.0;
    for ((i, j), &v) in gamma.entries().indexed_iter() {
        if v < 0.0 {
            return Err(Error::NegativeMass {
                row: i,
                col: j,
                value: v,
            });
        }
        if v > 0.0 {
            h -= v * v.ln();
        }
    }
    Ok(h)
}

/// KL divergence sum gamma * ln(gamma / p) against a temporal prior;
/// zero-mass cells contribute 0. Prior entries are strictly positive by
/// construction, evaluated through their exact logs.
pub fn kl_divergence(gamma: &Coupling, p: &TemporalPrior) -> Result<f64> {
    if gamma.shape() != p.shape() {
        return Err(Error::ShapeMismatch {
            context: "kl_divergence",
            expected_rows: gamma.shape().0,
            expected_cols: gamma.shape().1,
            rows: p.shape().0,
            cols: p.shape().1,
        });
    }
    let mut kl = 0.0;
    for ((i, j), &v) in gamma.entries().indexed_iter() {
        if v < 0.0 {
            return Err(Error::NegativeMass {
                row: i,
                col: j,
                value: v,
            });
        }
        if v > 0.0 {
            kl += v * (v.ln() - p.log_entries()[[i, j]]);
        }
    }
    Ok(kl)
}

/// Order-regularized objective <gamma, C> - alpha1 * H(gamma)
/// + alpha2 * KL(gamma || P).
pub fn tot_objective(
    gamma: &Coupling,
    c: &CostMatrix,
    p: &TemporalPrior,
    alpha1: f64,
    alpha2: f64,
) -> Result<f64> {
    let transport = ot_objective(gamma, c)?;
    let h = entropy(gamma)?;
    let kl = kl_divergence(gamma, p)?;
    Ok(transport - alpha1 * h + alpha2 * kl)
}
