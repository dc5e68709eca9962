//! Dense 4-D tensors in (batch, channels, height, width) layout.

use crate::error::{Error, Result};

/// Row-major dense array of `f64` with extents (batch, channels, height,
/// width). Activations, kernels, and gradients all use this type.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4 {
    dims: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4 {
    /// Validates extents, length, and finiteness.
    pub fn new(dims: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Parameter(format!(
                "tensor extents must all be >= 1, got {dims:?}"
            )));
        }
        let expected = dims.iter().product::<usize>();
        if data.len() != expected {
            return Err(Error::dimension("Tensor4::new", expected, data.len()));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("Tensor4::new".into()));
        }
        Ok(Tensor4 { dims, data })
    }

    pub fn zeros(dims: [usize; 4]) -> Self {
        let len = dims.iter().product::<usize>().max(1);
        Tensor4 {
            dims,
            data: vec![0.0; len],
        }
    }

    pub fn from_fn(dims: [usize; 4], mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut t = Tensor4::zeros(dims);
        let [b, c, h, w] = dims;
        let mut idx = 0;
        for bi in 0..b {
            for ci in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        t.data[idx] = f(bi, ci, y, x);
                        idx += 1;
                    }
                }
            }
        }
        t
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn offset(&self, b: usize, c: usize, y: usize, x: usize) -> usize {
        ((b * self.dims[1] + c) * self.dims[2] + y) * self.dims[3] + x
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.offset(b, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, y: usize, x: usize, v: f64) {
        let i = self.offset(b, c, y, x);
        self.data[i] = v;
    }

    /// Contiguous (channels * height * width) slice of one batch item.
    pub fn sample(&self, b: usize) -> &[f64] {
        let stride = self.dims[1] * self.dims[2] * self.dims[3];
        &self.data[b * stride..(b + 1) * stride]
    }

    pub fn sample_mut(&mut self, b: usize) -> &mut [f64] {
        let stride = self.dims[1] * self.dims[2] * self.dims[3];
        &mut self.data[b * stride..(b + 1) * stride]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    /// Sum of all elements.
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}
