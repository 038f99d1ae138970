//! Row-major point storage and the observed sample.

use crate::error::{Error, Result};

/// A set of points in R^dim stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    dim: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("points must have dimension >= 1"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::Dimension {
                expected: dim,
                got: data.len() % dim,
            });
        }
        Ok(Points { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(1);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Points::new(dim, data)
    }

    /// Univariate points.
    pub fn from_column(values: Vec<f64>) -> Self {
        Points { dim: 1, data: values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Per-coordinate (min, max) over all rows.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        let mut out = vec![(f64::INFINITY, f64::NEG_INFINITY); self.dim];
        for r in self.rows() {
            for (b, &v) in out.iter_mut().zip(r) {
                b.0 = b.0.min(v);
                b.1 = b.1.max(v);
            }
        }
        out
    }

    /// Keeps the listed columns, in order.
    pub fn select_columns(&self, cols: &[usize]) -> Points {
        let mut data = Vec::with_capacity(self.len() * cols.len());
        for r in self.rows() {
            data.extend(cols.iter().map(|&c| r[c]));
        }
        Points {
            dim: cols.len(),
            data,
        }
    }
}

/// Observed sample: covariates S, outcome Y and, for two-stage problems, the
/// first-stage response T (one column per generated covariate).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub s: Points,
    pub t: Option<Points>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(s: Points, t: Option<Points>, y: Vec<f64>) -> Result<Self> {
        if s.len() != y.len() {
            return Err(Error::Dimension {
                expected: s.len(),
                got: y.len(),
            });
        }
        if let Some(t) = &t {
            if t.len() != y.len() {
                return Err(Error::Dimension {
                    expected: y.len(),
                    got: t.len(),
                });
            }
        }
        Ok(Dataset { s, t, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}
