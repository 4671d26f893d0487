//! Cross-modal transfer pipeline: adapter fusion, barycentric projection,
//! alignment and total loss assembly.
//!
//! The acoustic stream h_ca (l_a x d_a) is lifted into the linguistic
//! dimension, coupled against the linguistic sequence z (l_t x d_t) by
//! temporal-order-preserving OT, projected back onto z's time axis, and
//! scored. The fused stream feeds a softmax head for CTC. Concretely:
//!
//! ```text
//! h_a     = FC2(h_ca)
//! h_hat   = FC3(LN(h_a))
//! h_fused = h_ca + s * LN(h_hat)
//! z~_j    = sum_i gamma[i][j] * h_a_i / b_j
//! align   = sum over interior j of (1 - cos(z~_j, z_j))
//! total   = lambda * ctc + (1 - lambda) * w * (align + tot)
//! ```
//!
//! where gamma comes from `tot_coupling` and tot is the transported cost
//! <gamma, C~> under the combined cost actually solved. Evaluation only:
//! weights arrive from files or `AdapterWeights::seeded`, nothing here
//! computes gradients.

use ndarray::{Array1, Array2};

use crate::ctc::{ctc_loss, CtcLoss};
use crate::error::{Error, Result};
use crate::geometry::{combined_cost_beta, cosine_cost, cosine_distance};
use crate::rng::SplitMix64;
use crate::seq::{FeatureSequence, TokenSequence};
use crate::sinkhorn::{entropy, ot_objective, tot_coupling, Coupling, SinkhornConfig};

pub const DEFAULT_LAMBDA: f64 = 0.3;
pub const DEFAULT_W: f64 = 1.0;

/// Blank id used by `evaluate_pair`; `ctc_loss` itself takes any id.
pub const DEFAULT_BLANK: usize = 0;

/// Affine map applied row-wise: y = x W^T + bias. Weight is out_dim x
/// in_dim.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    weight: Array2<f64>,
    bias: Array1<f64>,
}

impl Affine {
    pub fn new(weight: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if weight.nrows() == 0 || weight.ncols() == 0 {
            return Err(Error::EmptyInput {
                context: "affine weight",
            });
        }
        if bias.len() != weight.nrows() {
            return Err(Error::DimensionMismatch {
                left: weight.nrows(),
                right: bias.len(),
            });
        }
        crate::seq::check_finite(&weight, "affine weight")?;
        if let Some(pos) = bias.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "affine bias",
                row: 0,
                col: pos,
            });
        }
        Ok(Self { weight, bias })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn weight(&self) -> &Array2<f64> {
        &self.weight
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }
}

/// Per-row layer normalization (x - mean) / sqrt(var + 1e-5) * gain + bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    gain: Array1<f64>,
    bias: Array1<f64>,
}

impl LayerNorm {
    pub const EPSILON: f64 = 1e-5;

    pub fn new(gain: Array1<f64>, bias: Array1<f64>) -> Result<Self> {
        if gain.is_empty() {
            return Err(Error::EmptyInput {
                context: "layer norm",
            });
        }
        if gain.len() != bias.len() {
            return Err(Error::DimensionMismatch {
                left: gain.len(),
                right: bias.len(),
            });
        }
        for (pos, v) in gain.iter().chain(bias.iter()).enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: "layer norm",
                    row: 0,
                    col: pos,
                });
            }
        }
        Ok(Self { gain, bias })
    }

    /// Gain 1, bias 0 in every coordinate.
    pub fn identity(dim: usize) -> Result<Self> {
        Self::new(Array1::ones(dim), Array1::zeros(dim))
    }

    pub fn dim(&self) -> usize {
        self.gain.len()
    }

    pub fn gain(&self) -> &Array1<f64> {
        &self.gain
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let d = x.ncols() as f64;
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            let mean = row.sum() / d;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
            let denom = (var + Self::EPSILON).sqrt();
            for (k, v) in row.iter_mut().enumerate() {
                *v = (*v - mean) / denom * self.gain[k] + self.bias[k];
            }
        }
        out
    }
}

/// The adapter stack's parameters. FC2 lifts acoustic features into the
/// linguistic dimension, FC3 maps them back, FC1 is the vocabulary head,
/// and the two layer norms sit before FC3 and before the scaled residual.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterWeights {
    pub fc1: Affine,
    pub fc2: Affine,
    pub fc3: Affine,
    pub ln_inner: LayerNorm,
    pub ln_outer: LayerNorm,
    pub scale: f64,
}

impl AdapterWeights {
    pub fn new(
        fc1: Affine,
        fc2: Affine,
        fc3: Affine,
        ln_inner: LayerNorm,
        ln_outer: LayerNorm,
        scale: f64,
    ) -> Result<Self> {
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "s",
                requirement: "a nonnegative finite real",
                value: scale,
            });
        }
        let d_a = fc2.in_dim();
        let d_t = fc2.out_dim();
        let consistent = fc3.in_dim() == d_t
            && fc3.out_dim() == d_a
            && fc1.in_dim() == d_a
            && ln_inner.dim() == d_t
            && ln_outer.dim() == d_a;
        if !consistent {
            return Err(Error::DimensionMismatch {
                left: d_a,
                right: d_t,
            });
        }
        Ok(Self {
            fc1,
            fc2,
            fc3,
            ln_inner,
            ln_outer,
            scale,
        })
    }

    /// Deterministic weights for fixtures and smoke tests. Affine entries
    /// are drawn uniformly from [-1/sqrt(in_dim), 1/sqrt(in_dim)] in a
    /// fixed order (fc2 weight row-major, fc2 bias, fc3 weight, fc3 bias,
    /// fc1 weight, fc1 bias); layer norms start at identity.
    pub fn seeded(d_a: usize, d_t: usize, vocab: usize, scale: f64, seed: u64) -> Result<Self> {
        if d_a == 0 || d_t == 0 || vocab == 0 {
            return Err(Error::EmptyInput {
                context: "adapter dimensions",
            });
        }
        let mut rng = SplitMix64::new(seed);
        let mut affine = |out: usize, inp: usize| {
            let lim = 1.0 / (inp as f64).sqrt();
            let weight = Array2::from_shape_fn((out, inp), |_| rng.uniform_in(-lim, lim));
            let bias = Array1::from_shape_fn(out, |_| rng.uniform_in(-lim, lim));
            Affine::new(weight, bias)
        };
        let fc2 = affine(d_t, d_a)?;
        let fc3 = affine(d_a, d_t)?;
        let fc1 = affine(vocab, d_a)?;
        Self::new(
            fc1,
            fc2,
            fc3,
            LayerNorm::identity(d_t)?,
            LayerNorm::identity(d_a)?,
            scale,
        )
    }

    pub fn d_a(&self) -> usize {
        self.fc2.in_dim()
    }

    pub fn d_t(&self) -> usize {
        self.fc2.out_dim()
    }

    pub fn vocab(&self) -> usize {
        self.fc1.out_dim()
    }
}

/// Solver diagnostics copied into a loss report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingStats {
    pub converged: bool,
    pub iterations: usize,
    pub marginal_error: f64,
}

impl CouplingStats {
    fn from_coupling(gamma: &Coupling) -> Self {
        Self {
            converged: gamma.converged(),
            iterations: gamma.iterations(),
            marginal_error: gamma.marginal_error(),
        }
    }
}

/// Components of the training objective for one sequence pair.
///
/// `total` is lambda * ctc + (1 - lambda) * w * (align + tot); it is `None`
/// exactly when the CTC term is infeasible. `tot` is the transported cost
/// under the combined cost actually solved; `tot_regularized` additionally
/// subtracts epsilon times the coupling entropy (populated by
/// `evaluate_pair`, absent for bare `total_loss` arithmetic).
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub ctc: CtcLoss,
    pub align: f64,
    pub tot: f64,
    pub lambda: f64,
    pub w: f64,
    pub total: Option<f64>,
    pub tot_regularized: Option<f64>,
    pub coupling: Option<CouplingStats>,
}

fn validate_mixing(lambda: f64, w: f64) -> Result<()> {
    if !(lambda.is_finite() && (0.0..=1.0).contains(&lambda)) {
        return Err(Error::InvalidParameter {
            name: "lambda",
            requirement: "within [0, 1]",
            value: lambda,
        });
    }
    if !(w >= 0.0 && w.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "w",
            requirement: "a nonnegative finite real",
            value: w,
        });
    }
    Ok(())
}

fn compose_total(ctc: CtcLoss, align: f64, tot: f64, lambda: f64, w: f64) -> Option<f64> {
    ctc.value()
        .map(|c| lambda * c + (1.0 - lambda) * w * (align + tot))
}

/// Assembles a loss report from already-computed terms.
pub fn total_loss(ctc: f64, align: f64, tot: f64, lambda: f64, w: f64) -> Result<LossReport> {
    validate_mixing(lambda, w)?;
    let ctc = CtcLoss::Feasible(ctc);
    Ok(LossReport {
        ctc,
        align,
        tot,
        lambda,
        w,
        total: compose_total(ctc, align, tot, lambda, w),
        tot_regularized: None,
        coupling: None,
    })
}

/// Barycentric projection of h onto the column side of the coupling:
/// row j of the result is sum_i gamma[i][j] * h_i divided by the column
/// marginal b_j.
pub fn project(gamma: &Coupling, h: &FeatureSequence) -> Result<FeatureSequence> {
    let (l_a, _) = gamma.shape();
    if h.len() != l_a {
        return Err(Error::ShapeMismatch {
            context: "project",
            expected_rows: l_a,
            expected_cols: h.dim(),
            rows: h.len(),
            cols: h.dim(),
        });
    }
    let mut out = gamma.entries().t().dot(h.data());
    for (j, mut row) in out.rows_mut().into_iter().enumerate() {
        let b_j = gamma.col_marginals().as_array()[j];
        if b_j <= 0.0 {
            return Err(Error::ZeroColumnMarginal { index: j });
        }
        row.mapv_inplace(|v| v / b_j);
    }
    FeatureSequence::new(out, "projected")
}

/// Sum of cosine distances between corresponding rows, skipping the first
/// and last row (the CLS/SEP positions).
pub fn alignment_loss(z_proj: &FeatureSequence, z: &FeatureSequence) -> Result<f64> {
    if z_proj.len() != z.len() || z_proj.dim() != z.dim() {
        return Err(Error::ShapeMismatch {
            context: "alignment_loss",
            expected_rows: z.len(),
            expected_cols: z.dim(),
            rows: z_proj.len(),
            cols: z_proj.dim(),
        });
    }
    let l_t = z.len();
    if l_t < 3 {
        return Err(Error::TooFewRows { rows: l_t });
    }
    let mut loss = 0.0;
    for j in 1..l_t - 1 {
        loss += cosine_distance(z_proj.data().row(j), z.data().row(j));
    }
    Ok(loss)
}

/// Runs the adapter: returns the dimension-matched stream h_a = FC2(h_ca)
/// and the fused stream h_ca + s * LN(FC3(LN(h_a))).
pub fn adapter_forward(
    h_ca: &FeatureSequence,
    w: &AdapterWeights,
) -> Result<(FeatureSequence, FeatureSequence)> {
    if h_ca.dim() != w.d_a() {
        return Err(Error::DimensionMismatch {
            left: h_ca.dim(),
            right: w.d_a(),
        });
    }
    let h_a = w.fc2.apply(h_ca.data());
    let h_hat = w.fc3.apply(&w.ln_inner.apply(&h_a));
    let fused = h_ca.data() + &(w.scale * &w.ln_outer.apply(&h_hat));
    Ok((
        FeatureSequence::new(h_a, "matched")?,
        FeatureSequence::new(fused, "fused")?,
    ))
}

/// Row-wise softmax over the vocabulary head FC1(h_fused).
pub fn softmax_predict(h_fused: &FeatureSequence, w: &AdapterWeights) -> Result<Array2<f64>> {
    if h_fused.dim() != w.fc1.in_dim() {
        return Err(Error::DimensionMismatch {
            left: h_fused.dim(),
            right: w.fc1.in_dim(),
        });
    }
    let mut logits = w.fc1.apply(h_fused.data());
    for mut row in logits.rows_mut() {
        let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - hi).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    Ok(logits)
}

/// Full evaluation of one pair: adapter, coupling, projection, alignment,
/// CTC, and the mixed total. Non-convergence of the solver is recorded in
/// the report rather than failing the evaluation.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_pair(
    h_ca: &FeatureSequence,
    z: &FeatureSequence,
    labels: &TokenSequence,
    weights: &AdapterWeights,
    beta: f64,
    cfg: &SinkhornConfig,
    lambda: f64,
    w_scale: f64,
) -> Result<LossReport> {
    validate_mixing(lambda, w_scale)?;
    if !labels.is_framed() || labels.len() != z.len() {
        return Err(Error::BadFraming);
    }
    let (h_a, h_fused) = adapter_forward(h_ca, weights)?;
    if h_a.dim() != z.dim() {
        return Err(Error::DimensionMismatch {
            left: h_a.dim(),
            right: z.dim(),
        });
    }

    let gamma = tot_coupling(&h_a, z, beta, cfg)?;
    let z_proj = project(&gamma, &h_a)?;
    let align = alignment_loss(&z_proj, z)?;

    let cost = cosine_cost(&h_a, z)?;
    let combined = combined_cost_beta(&cost, beta, h_a.len(), z.len())?;
    let tot = ot_objective(&gamma, &combined)?;
    let tot_regularized = tot - cfg.epsilon * entropy(&gamma)?;

    let probs = softmax_predict(&h_fused, weights)?;
    let log_probs = probs.mapv(f64::ln);
    let ctc = ctc_loss(&log_probs, labels, DEFAULT_BLANK)?;

    Ok(LossReport {
        ctc,
        align,
        tot,
        lambda,
        w: w_scale,
        total: compose_total(ctc, align, tot, lambda, w_scale),
        tot_regularized: Some(tot_regularized),
        coupling: Some(CouplingStats::from_coupling(&gamma)),
    })
}
