use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows whose Euclidean norm falls below this are rejected by [`l2_normalize`].
pub const MIN_ROW_NORM: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Real,
    Synthetic,
}

impl Origin {
    pub fn to_byte(self) -> u8 {
        match self {
            Origin::Real => 0,
            Origin::Synthetic => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Origin::Real),
            1 => Some(Origin::Synthetic),
            _ => None,
        }
    }
}

/// Dense row-major embedding matrix with per-row class label and origin tag.
///
/// Values are stored as `f32`, the on-disk precision. Arithmetic happens in
/// `f64` via [`FeatureMatrix::to_array`].
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
    labels: Vec<u32>,
    origin: Vec<Origin>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f32>, labels: Vec<u32>, origin: Vec<Origin>) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(Error::DimensionMismatch {
                context: "feature data length".into(),
                expected: rows * dim,
                found: data.len(),
            });
        }
        for (what, len) in [("labels", labels.len()), ("origin tags", origin.len())] {
            if len != rows {
                return Err(Error::DimensionMismatch {
                    context: format!("feature {what}"),
                    expected: rows,
                    found: len,
                });
            }
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / dim,
                col: pos % dim,
            });
        }
        Ok(Self {
            rows,
            dim,
            data,
            labels,
            origin,
        })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            rows: 0,
            dim,
            data: Vec::new(),
            labels: Vec::new(),
            origin: Vec::new(),
        }
    }

    /// Builds a matrix from `f64` values, rounding each to `f32`.
    pub fn from_array(values: &Array2<f64>, labels: Vec<u32>, origin: Vec<Origin>) -> Result<Self> {
        let (rows, dim) = values.dim();
        let data = values.iter().map(|&v| v as f32).collect();
        Self::new(rows, dim, data, labels, origin)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn origin(&self) -> &[Origin] {
        &self.origin
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels_usize(&self) -> Vec<usize> {
        self.labels.iter().map(|&l| l as usize).collect()
    }

    pub fn to_array(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.rows, self.dim), |(i, j)| self.data[i * self.dim + j] as f64)
    }

    pub fn check_labels(&self, classes: usize) -> Result<()> {
        match self.labels.iter().position(|&l| l as usize >= classes) {
            Some(row) => Err(Error::LabelOutOfRange {
                row,
                label: self.labels[row],
                classes,
            }),
            None => Ok(()),
        }
    }

    /// Fails unless every row has unit norm within `tol`.
    pub fn check_normalized(&self, context: &str, tol: f64) -> Result<()> {
        for i in 0..self.rows {
            let norm = row_norm(self.row(i));
            if (norm - 1.0).abs() > tol {
                return Err(Error::Unnormalized {
                    context: context.to_string(),
                    row: i,
                    norm,
                });
            }
        }
        Ok(())
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        let mut origin = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
            origin.push(self.origin[i]);
        }
        Self {
            rows: indices.len(),
            dim: self.dim,
            data,
            labels,
            origin,
        }
    }

    pub fn concat(parts: &[&FeatureMatrix]) -> Result<Self> {
        let dim = parts.first().map(|m| m.dim).unwrap_or(0);
        let mut out = Self::empty(dim);
        for m in parts {
            if m.dim != dim {
                return Err(Error::DimensionMismatch {
                    context: "concatenated feature matrices".into(),
                    expected: dim,
                    found: m.dim,
                });
            }
            out.rows += m.rows;
            out.data.extend_from_slice(&m.data);
            out.labels.extend_from_slice(&m.labels);
            out.origin.extend_from_slice(&m.origin);
        }
        Ok(out)
    }

    pub fn with_labels(mut self, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != self.rows {
            return Err(Error::DimensionMismatch {
                context: "relabelled rows".into(),
                expected: self.rows,
                found: labels.len(),
            });
        }
        self.labels = labels;
        Ok(self)
    }

    /// Row indices tagged with `origin`.
    pub fn indices_with_origin(&self, origin: Origin) -> Vec<usize> {
        (0..self.rows).filter(|&i| self.origin[i] == origin).collect()
    }
}

fn row_norm(row: &[f32]) -> f64 {
    row.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
}

/// Scales every row to unit Euclidean norm. Labels and origin are preserved.
///
/// Rows with norm below [`MIN_ROW_NORM`] are an error: dropping them would
/// desynchronize the label and origin arrays.
pub fn l2_normalize(m: &FeatureMatrix) -> Result<FeatureMatrix> {
    let mut data = Vec::with_capacity(m.data.len());
    for i in 0..m.rows {
        let row = m.row(i);
        let norm = row_norm(row);
        if norm < MIN_ROW_NORM {
            return Err(Error::ZeroRow { row: i, norm });
        }
        data.extend(row.iter().map(|&v| (v as f64 / norm) as f32));
    }
    Ok(FeatureMatrix {
        rows: m.rows,
        dim: m.dim,
        data,
        labels: m.labels.clone(),
        origin: m.origin.clone(),
    })
}
