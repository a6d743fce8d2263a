use ndarray::Array2;
use rand::Rng;

use super::DataError;
use crate::flow::{dequantize, PreprocessConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DataKind {
    /// Integer intensities in `[0, levels)`.
    Pixels { levels: u32 },
    Real,
}

/// Fixed-dimension observations with a class label each.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    kind: DataKind,
    items: Vec<f64>,
    labels: Vec<usize>,
    class_index: Vec<Vec<usize>>,
}

impl Dataset {
    pub fn new(dim: usize, kind: DataKind, items: Vec<f64>, labels: Vec<usize>) -> Result<Self, DataError> {
        if dim == 0 || items.len() != dim * labels.len() {
            return Err(DataError::DimensionMismatch(format!(
                "{} values for {} items of dimension {dim}",
                items.len(),
                labels.len()
            )));
        }
        if let DataKind::Pixels { levels } = kind {
            if let Some(&v) = items.iter().find(|&&v| !(v >= 0.0 && v < levels as f64 && v.fract() == 0.0)) {
                return Err(DataError::ConstraintViolation(format!("pixel value {v} outside [0, {levels})")));
            }
        } else if items.iter().any(|v| !v.is_finite()) {
            return Err(DataError::ConstraintViolation("non-finite observation".into()));
        }
        let classes = labels.iter().max().map_or(0, |&m| m + 1);
        let mut class_index = vec![Vec::new(); classes];
        for (i, &l) in labels.iter().enumerate() {
            class_index[l].push(i);
        }
        Ok(Self {
            dim,
            kind,
            items,
            labels,
            class_index,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> DataKind {
        self.kind
    }

    pub fn item(&self, i: usize) -> &[f64] {
        &self.items[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.class_index.len()
    }

    pub fn class_items(&self, class: usize) -> &[usize] {
        &self.class_index[class]
    }

    /// Smallest class size.
    pub fn min_class_size(&self) -> usize {
        self.class_index.iter().map(Vec::len).min().unwrap_or(0)
    }

    /// Raw rows for `indices`.
    pub fn rows(&self, indices: &[usize]) -> Array2<f64> {
        Array2::from_shape_fn((indices.len(), self.dim), |(r, c)| self.items[indices[r] * self.dim + c])
    }

    /// Rows mapped into the flow's input space: pixels are dequantized to
    /// `[0, 1)` (with fresh noise, or the cell centre when dequantization is
    /// off); real vectors pass through.
    pub fn prepare<R: Rng + ?Sized>(
        &self,
        indices: &[usize],
        preprocess: &PreprocessConfig,
        rng: &mut R,
    ) -> Result<Array2<f64>, DataError> {
        let raw = self.rows(indices);
        match self.kind {
            DataKind::Real => Ok(raw),
            DataKind::Pixels { levels } => {
                if !preprocess.dequantize {
                    return Ok(raw.mapv(|v| (v + 0.5) / levels as f64));
                }
                let flat = raw.as_slice().expect("standard layout");
                let out = dequantize(flat, levels, rng)?;
                Ok(Array2::from_shape_vec(raw.raw_dim(), out).expect("same shape"))
            }
        }
    }

    /// Keeps only the listed classes, relabelled `0..classes.len()`.
    pub fn subset_classes(&self, classes: &[usize]) -> Result<Self, DataError> {
        let mut items = Vec::new();
        let mut labels = Vec::new();
        for (new, &c) in classes.iter().enumerate() {
            if c >= self.num_classes() {
                return Err(DataError::DimensionMismatch(format!("class {c} out of range")));
            }
            for &i in self.class_items(c) {
                items.extend_from_slice(self.item(i));
                labels.push(new);
            }
        }
        Self::new(self.dim, self.kind, items, labels)
    }

    /// Adds copies rotated by 90°, 180° and 270°; each rotation of a class
    /// becomes a new class. Items must be square single-channel images.
    pub fn with_rotations(&self) -> Result<Self, DataError> {
        let side = (self.dim as f64).sqrt().round() as usize;
        if side * side != self.dim {
            return Err(DataError::DimensionMismatch(format!("dimension {} is not a square image", self.dim)));
        }
        let classes = self.num_classes();
        let mut items = Vec::with_capacity(self.items.len() * 4);
        let mut labels = Vec::with_capacity(self.len() * 4);
        for quarter in 0..4 {
            for i in 0..self.len() {
                let img = self.item(i);
                for r in 0..side {
                    for c in 0..side {
                        // pixel (r, c) of the image rotated clockwise `quarter` times
                        let (sr, sc) = match quarter {
                            0 => (r, c),
                            1 => (side - 1 - c, r),
                            2 => (side - 1 - r, side - 1 - c),
                            _ => (c, side - 1 - r),
                        };
                        items.push(img[sr * side + sc]);
                    }
                }
                labels.push(self.labels[i] + quarter * classes);
            }
        }
        Self::new(self.dim, self.kind, items, labels)
    }
}
