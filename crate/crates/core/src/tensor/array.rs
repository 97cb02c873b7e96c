use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense array of `f64`.
///
/// Extents are positive and every value is finite. One-dimensional arrays are
/// single samples; two-dimensional arrays are batches with one sample per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawArray")]
pub struct DenseArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl TryFrom<RawArray> for DenseArray {
    type Error = Error;

    fn try_from(raw: RawArray) -> Result<Self> {
        DenseArray::new(raw.shape, raw.data)
    }
}

impl DenseArray {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::Dimension(format!("extents must be positive, got {shape:?}")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Dimension(format!("shape {shape:?} needs {expected} values, got {}", data.len())));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("index {i}")));
        }
        Ok(Self { shape, data })
    }

    /// One-dimensional array.
    pub fn vector(data: Vec<f64>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        assert!(len > 0, "zero-sized array");
        Self { shape: shape.to_vec(), data: vec![0.0; len] }
    }

    /// Builds a batch from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Dimension(format!("row {i} has {} columns, expected {cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Self::matrix(rows.len(), cols, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of samples: 1 for a vector, the row count for a matrix.
    pub fn rows(&self) -> usize {
        if self.shape.len() == 1 {
            1
        } else {
            self.shape[0]
        }
    }

    /// Width of one sample.
    pub fn cols(&self) -> usize {
        *self.shape.last().expect("non-empty shape")
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    /// Gathers the given rows into a new batch.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let c = self.cols();
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            if i >= self.rows() {
                return Err(Error::Argument(format!("row {i} out of range ({} rows)", self.rows())));
            }
            data.extend_from_slice(self.row(i));
        }
        Self::matrix(indices.len(), c, data)
    }

    /// Concatenates batches along the feature axis, in the order given.
    pub fn concat_cols(parts: &[&DenseArray]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Argument("nothing to concatenate".into()))?;
        let rows = first.rows();
        if let Some(p) = parts.iter().find(|p| p.rows() != rows) {
            return Err(Error::Dimension(format!("row counts differ: {rows} vs {}", p.rows())));
        }
        let cols: usize = parts.iter().map(|p| p.cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(r));
            }
        }
        if first.shape.len() == 1 && parts.iter().all(|p| p.shape.len() == 1) {
            Self::vector(data)
        } else {
            Self::matrix(rows, cols, data)
        }
    }

    /// Splits the feature axis into consecutive blocks of the given widths.
    pub fn split_cols(&self, widths: &[usize]) -> Result<Vec<Self>> {
        if widths.iter().sum::<usize>() != self.cols() {
            return Err(Error::Dimension(format!("widths {widths:?} do not sum to {}", self.cols())));
        }
        let rows = self.rows();
        let mut out: Vec<Vec<f64>> = widths.iter().map(|w| Vec::with_capacity(rows * w)).collect();
        for r in 0..rows {
            let row = self.row(r);
            let mut offset = 0;
            for (buf, &w) in out.iter_mut().zip(widths) {
                buf.extend_from_slice(&row[offset..offset + w]);
                offset += w;
            }
        }
        out.into_iter()
            .zip(widths)
            .map(|(d, &w)| if self.shape.len() == 1 { Self::vector(d) } else { Self::matrix(rows, w, d) })
            .collect()
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|v| v * factor).collect() }
    }

    /// Adds `other` element-wise; shapes must agree.
    pub fn add_assign(&mut self, other: &DenseArray) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// Index of the largest entry in row `i`; ties go to the lowest index.
    pub fn argmax_row(&self, i: usize) -> usize {
        let row = self.row(i);
        let mut best = 0;
        for (j, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = j;
            }
        }
        best
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}
