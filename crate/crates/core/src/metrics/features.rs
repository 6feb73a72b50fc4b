use ndarray::{Array2, Axis};

use crate::error::{bail_shape, bail_validation, Result};
use crate::prior::EmotionEmbedding;

/// `M x D_e` matrix of embeddings with an optional class per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    rows: Array2<f64>,
    classes: Option<Vec<usize>>,
}

impl FeatureSet {
    pub fn new(rows: Array2<f64>, classes: Option<Vec<usize>>) -> Result<Self> {
        if rows.iter().any(|v| !v.is_finite()) {
            bail_validation!("feature set contains non-finite values");
        }
        if let Some(c) = &classes {
            if c.len() != rows.nrows() {
                bail_shape!("{} classes for {} feature rows", c.len(), rows.nrows());
            }
        }
        Ok(Self { rows, classes })
    }

    pub fn from_embeddings(embeddings: &[EmotionEmbedding], classes: Option<Vec<usize>>) -> Result<Self> {
        let d = embeddings.first().map_or(0, |e| e.len());
        if embeddings.iter().any(|e| e.len() != d) {
            bail_shape!("embeddings differ in width");
        }
        let flat: Vec<f64> = embeddings.iter().flat_map(|e| e.as_slice().iter().copied()).collect();
        let rows = Array2::from_shape_vec((embeddings.len(), d), flat).expect("checked widths");
        Self::new(rows, classes)
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn classes(&self) -> Option<&[usize]> {
        self.classes.as_deref()
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    /// Rows (and classes) at `indices`, repeats allowed.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            rows: self.rows.select(Axis(0), indices),
            classes: self.classes.as_ref().map(|c| indices.iter().map(|&i| c[i]).collect()),
        }
    }
}
