//! Kernel tensors and their matrix form.
//!
//! A convolution weight of shape `o × i × k_h × k_w` is viewed as an `o × d`
//! matrix with `d = i·k_h·k_w`: each row is one filter flattened in
//! `(i, k_h, k_w)` order, the last index varying fastest.

mod arch;
mod container;

pub use arch::{load_architecture, LayerDescriptor, LayerKind};
pub use container::{load_tensor, read_tensor_file, save_tensor, write_tensor_file, Dtype};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn checked_numel(dims: &[usize]) -> Result<usize> {
    dims.iter().try_fold(1usize, |acc, &d| {
        acc.checked_mul(d)
            .ok_or_else(|| Error::Size(format!("dimension product {dims:?} overflows")))
    })
}

fn check_finite(data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// Raw 4-D convolution weight, row-major with the output channel outermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelTensor {
    name: String,
    dims: [usize; 4],
    data: Vec<f64>,
}

impl KernelTensor {
    pub fn new(name: impl Into<String>, dims: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Shape(format!(
                "all dims must be positive, got {dims:?}"
            )));
        }
        let numel = checked_numel(&dims)?;
        if data.len() != numel {
            return Err(Error::Shape(format!(
                "dims {dims:?} need {numel} values, got {}",
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self {
            name: name.into(),
            dims,
            data,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    /// `[o, i, k_h, k_w]`
    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn out_channels(&self) -> usize {
        self.dims[0]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// `o × d` filter matrix; row `j` is filter `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    source: Option<String>,
    // (i, k_h, k_w) recorded at reshape time so the tensor can be rebuilt.
    inner: [usize; 3],
}

impl KernelMatrix {
    /// Builds a matrix directly, treating it as a `rows × cols × 1 × 1` kernel.
    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("matrix {rows}x{cols} is empty")));
        }
        let numel = checked_numel(&[rows, cols])?;
        if data.len() != numel {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {numel} values, got {}",
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self {
            rows,
            cols,
            data,
            source: None,
            inner: [cols, 1, 1],
        })
    }

    pub fn from_row_vecs(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::from_rows(rows.len(), cols, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for j in 0..n {
            data[j * n + j] = 1.0;
        }
        Self::from_rows(n, n, data).expect("identity is well formed")
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn source(&self) -> Option<&str> {
        self.source.as_deref()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access for in-place optimizer updates. Row order is fixed.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.cols..(j + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Rebuilds the 4-D tensor this matrix was reshaped from.
    pub fn to_tensor(&self) -> KernelTensor {
        let [i, kh, kw] = self.inner;
        KernelTensor {
            name: self.source.clone().unwrap_or_default(),
            dims: [self.rows, i, kh, kw],
            data: self.data.clone(),
        }
    }
}

/// Flattens each filter of `t` into one row.
pub fn reshape_kernel(t: &KernelTensor) -> Result<KernelMatrix> {
    let [o, i, kh, kw] = t.dims;
    let d = checked_numel(&[i, kh, kw])?;
    checked_numel(&[o, d])?;
    Ok(KernelMatrix {
        rows: o,
        cols: d,
        data: t.data.clone(),
        source: (!t.name.is_empty()).then(|| t.name.clone()),
        inner: [i, kh, kw],
    })
}
