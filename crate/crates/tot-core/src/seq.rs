//! Row-per-timestep feature sequences and transport marginals.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Dense feature sequence: one row per timestep, one column per feature
/// dimension. Rows are ordered by time.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    data: Array2<f64>,
    modality: String,
}

impl FeatureSequence {
    /// Wraps a non-empty matrix of finite values. The modality tag is
    /// informational only ("acoustic", "linguistic", ...).
    pub fn new(data: Array2<f64>, modality: impl Into<String>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::EmptyInput {
                context: "feature sequence",
            });
        }
        check_finite(&data, "feature sequence")?;
        Ok(Self {
            data,
            modality: modality.into(),
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, modality: impl Into<String>) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::EmptyInput {
                context: "feature sequence (ragged rows)",
            });
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let data = Array2::from_shape_vec((n, d), flat).expect("shape checked above");
        Self::new(data, modality)
    }

    /// Number of timesteps.
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    /// Feature dimension.
    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn modality(&self) -> &str {
        &self.modality
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }
}

pub(crate) fn check_finite(m: &Array2<f64>, context: &'static str) -> Result<()> {
    for ((i, j), &v) in m.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context,
                row: i,
                col: j,
            });
        }
    }
    Ok(())
}

/// Probability weights over the timesteps of one sequence: strictly
/// positive, summing to 1 within 1e-12.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalWeights {
    weights: Array1<f64>,
}

impl MarginalWeights {
    const SUM_TOLERANCE: f64 = 1e-12;

    pub fn new(weights: Array1<f64>) -> Result<Self> {
        let sum: f64 = weights.sum();
        let ok = weights.len() > 0
            && weights.iter().all(|w| w.is_finite() && *w > 0.0)
            && (sum - 1.0).abs() <= Self::SUM_TOLERANCE;
        if !ok {
            return Err(Error::InvalidMarginals { sum });
        }
        Ok(Self { weights })
    }

    /// Uniform weights 1/n, the default for sequences without a prior
    /// notion of importance.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidMarginals { sum: 0.0 });
        }
        Self::new(Array1::from_elem(n, 1.0 / n as f64))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.len() == 0
    }

    pub fn as_array(&self) -> &Array1<f64> {
        &self.weights
    }
}

/// Token ids for one linguistic sequence, together with the reserved CLS
/// and SEP sentinel ids of its vocabulary.
///
/// A framed sequence models `[CLS, tokens..., SEP]` and exposes the interior
/// tokens as CTC targets; a bare sequence is the target list itself.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    ids: Vec<usize>,
    cls_id: usize,
    sep_id: usize,
    framed: bool,
}

impl TokenSequence {
    /// Sequence whose first id must be CLS and last id must be SEP.
    pub fn framed(ids: Vec<usize>, cls_id: usize, sep_id: usize) -> Result<Self> {
        if ids.len() < 2 || ids[0] != cls_id || *ids.last().unwrap() != sep_id {
            return Err(Error::BadFraming);
        }
        Ok(Self {
            ids,
            cls_id,
            sep_id,
            framed: true,
        })
    }

    /// Plain label sequence without sentinel framing.
    pub fn bare(ids: Vec<usize>, cls_id: usize, sep_id: usize) -> Self {
        Self {
            ids,
            cls_id,
            sep_id,
            framed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn is_framed(&self) -> bool {
        self.framed
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    /// The CTC target tokens: interior ids when framed, all ids when bare.
    pub fn labels(&self) -> &[usize] {
        if self.framed {
            &self.ids[1..self.ids.len() - 1]
        } else {
            &self.ids
        }
    }

    pub fn cls_id(&self) -> usize {
        self.cls_id
    }

    pub fn sep_id(&self) -> usize {
        self.sep_id
    }
}
