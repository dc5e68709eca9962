//! Scalar-wave propagation by the angular spectrum method.
//!
//! A monochromatic field sampled on an N-by-N grid (N a power of two) is
//! decomposed into plane waves by a 2-D DFT, each component is advanced by
//! the phase factor `exp(i*k_z*z)` with `k_z = sqrt(k^2 - k_x^2 - k_y^2)`,
//! and the result is transformed back. Components with `k_x^2 + k_y^2 > k^2`
//! (imaginary `k_z`) are evanescent and are zeroed: at millimetre distances
//! their decay exceeds hundreds of orders of magnitude, and dropping them
//! keeps `+z` and `-z` exact adjoints on the retained band.
//!
//! Conventions, fixed so that files and tests are bit-stable:
//!
//! * forward DFT uses the negative exponent and no scaling; the inverse
//!   carries the full `1/N^2`,
//! * frequency sample `m` maps to index `m` for `m < N/2` and `m - N`
//!   otherwise (wraparound order, no center shift anywhere),
//! * frequency spacing is `2*pi / (N * pixel_pitch)`,
//! * all arithmetic is `f64`.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};

fn check_grid(n: usize) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::GridSize(n));
    }
    Ok(())
}

/// 2-D complex wave field on a square power-of-two grid, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    n: usize,
    data: Vec<Complex64>,
}

impl ComplexField {
    /// Validates the grid size and that every value is finite.
    pub fn new(n: usize, data: Vec<Complex64>) -> Result<Self> {
        check_grid(n)?;
        if data.len() != n * n {
            return Err(Error::dimension("ComplexField::new", n * n, data.len()));
        }
        if !data.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            return Err(Error::NonFinite("ComplexField::new".into()));
        }
        Ok(ComplexField { n, data })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        check_grid(n)?;
        Ok(ComplexField {
            n,
            data: vec![Complex64::new(0.0, 0.0); n * n],
        })
    }

    /// Builds a field from a function of (row, col).
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Result<Self> {
        check_grid(n)?;
        let mut data = Vec::with_capacity(n * n);
        for y in 0..n {
            for x in 0..n {
                data.push(f(y, x));
            }
        }
        ComplexField::new(n, data)
    }

    /// Grid side length in pixels.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.n + col]
    }

    /// Sum of squared moduli over the grid.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    fn unchecked(n: usize, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), n * n);
        ComplexField { n, data }
    }
}

/// 2-D non-negative real image on a square grid, row-major.
///
/// Holds generating images, interferograms, magnitude holograms, and network
/// outputs. Any square side length is accepted; lifting to a [`ComplexField`]
/// (and hence any propagation) additionally requires a power-of-two side.
#[derive(Clone, Debug, PartialEq)]
pub struct RealImage {
    n: usize,
    data: Vec<f64>,
}

impl RealImage {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Parameter("image side must be at least 1".into()));
        }
        if data.len() != n * n {
            return Err(Error::dimension("RealImage::new", n * n, data.len()));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("RealImage::new".into()));
        }
        if data.iter().any(|&v| v < 0.0) {
            return Err(Error::Parameter("RealImage values must be >= 0".into()));
        }
        Ok(RealImage { n, data })
    }

    pub fn zeros(n: usize) -> Self {
        RealImage {
            n,
            data: vec![0.0; n.max(1) * n.max(1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.n + col] = value;
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().cloned().fold(0.0, f64::max)
    }

    /// (row, col) of the maximum value, first occurrence in row-major order.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        let mut best_v = self.data[0];
        for (i, &v) in self.data.iter().enumerate() {
            if v > best_v {
                best_v = v;
                best = i;
            }
        }
        (best / self.n, best % self.n)
    }

    /// Scales so the peak value is exactly 1; an all-zero image is returned
    /// unchanged.
    pub fn normalize_max(&self) -> RealImage {
        let m = self.max_value();
        if m == 0.0 {
            return self.clone();
        }
        RealImage {
            n: self.n,
            data: self.data.iter().map(|&v| v / m).collect(),
        }
    }

    /// Lifts to a complex field with zero imaginary part.
    pub fn to_complex(&self) -> Result<ComplexField> {
        check_grid(self.n)?;
        Ok(ComplexField::unchecked(
            self.n,
            self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        ))
    }

    pub(crate) fn unchecked(n: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n * n);
        RealImage { n, data }
    }
}

/// Optical sampling geometry plus a signed propagation distance.
///
/// The wavenumber `k = 2*pi / wavelength` is always derived, never stored.
/// The sign of `z` selects the propagation direction; there is no separate
/// direction flag.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PropagationParams {
    pub wavelength: f64,
    pub pixel_pitch: f64,
    pub n: usize,
    pub z: f64,
}

impl PropagationParams {
    pub fn new(wavelength: f64, pixel_pitch: f64, n: usize, z: f64) -> Result<Self> {
        if !(wavelength > 0.0) || !wavelength.is_finite() {
            return Err(Error::Parameter(format!(
                "wavelength must be positive and finite, got {wavelength}"
            )));
        }
        if !(pixel_pitch > 0.0) || !pixel_pitch.is_finite() {
            return Err(Error::Parameter(format!(
                "pixel pitch must be positive and finite, got {pixel_pitch}"
            )));
        }
        if !z.is_finite() {
            return Err(Error::Parameter("z must be finite".into()));
        }
        check_grid(n)?;
        Ok(PropagationParams {
            wavelength,
            pixel_pitch,
            n,
            z,
        })
    }

    /// Same geometry, different signed distance.
    pub fn with_z(&self, z: f64) -> Self {
        PropagationParams { z, ..*self }
    }

    /// Wavenumber `2*pi / wavelength`.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// Frequency-sample spacing `2*pi / (n * pixel_pitch)`.
    pub fn delta_k(&self) -> f64 {
        2.0 * PI / (self.n as f64 * self.pixel_pitch)
    }
}

/// Transform direction for [`dft2`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

// Iterative radix-2 decimation-in-time FFT over one row of length n.
// Twiddles hold exp(-2*pi*i*k/n) for k in 0..n/2; the inverse pass conjugates
// them and applies the 1/n scale.
fn fft_row(data: &mut [Complex64], twiddles: &[Complex64], inverse: bool) {
    let n = data.len();
    let levels = n.trailing_zeros();

    // Bit-reversal permutation.
    for i in 0..n {
        let j = (i.reverse_bits() >> (usize::BITS - levels)) as usize;
        if j > i {
            data.swap(i, j);
        }
    }

    let mut span = 2;
    while span <= n {
        let half = span / 2;
        let step = n / span;
        for start in (0..n).step_by(span) {
            for k in 0..half {
                let mut w = twiddles[k * step];
                if inverse {
                    w = w.conj();
                }
                let a = data[start + k];
                let b = data[start + k + half] * w;
                data[start + k] = a + b;
                data[start + k + half] = a - b;
            }
        }
        span *= 2;
    }

    if inverse {
        let scale = 1.0 / n as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

fn transpose(n: usize, data: &mut [Complex64]) {
    for y in 0..n {
        for x in (y + 1)..n {
            data.swap(y * n + x, x * n + y);
        }
    }
}

/// 2-D discrete Fourier transform.
///
/// Forward uses the negative exponent and no scaling; inverse carries the
/// full `1/N^2`, so `dft2(dft2(f, Forward), Inverse)` reproduces `f`.
pub fn dft2(field: &ComplexField, direction: Direction) -> ComplexField {
    let n = field.n;
    let inverse = direction == Direction::Inverse;
    let twiddles: Vec<Complex64> = (0..n / 2)
        .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
        .collect();

    let mut data = field.data.clone();
    for row in data.chunks_mut(n) {
        fft_row(row, &twiddles, inverse);
    }
    transpose(n, &mut data);
    for row in data.chunks_mut(n) {
        fft_row(row, &twiddles, inverse);
    }
    transpose(n, &mut data);
    ComplexField::unchecked(n, data)
}

/// Frequency-domain propagation factor `exp(i*k_z*z)` on the wraparound
/// grid, zero on evanescent components.
pub fn transfer_function(params: &PropagationParams) -> ComplexField {
    let n = params.n;
    let dk = params.delta_k();
    let k = params.wavenumber();
    let k2 = k * k;
    let half = n as isize / 2;

    let mut data = Vec::with_capacity(n * n);
    for my in 0..n as isize {
        let cy = if my < half { my } else { my - n as isize };
        let ky = cy as f64 * dk;
        for mx in 0..n as isize {
            let cx = if mx < half { mx } else { mx - n as isize };
            let kx = cx as f64 * dk;
            let radicand = k2 - kx * kx - ky * ky;
            if radicand >= 0.0 {
                let kz = radicand.sqrt();
                data.push(Complex64::from_polar(1.0, kz * params.z));
            } else {
                data.push(Complex64::new(0.0, 0.0));
            }
        }
    }
    ComplexField::unchecked(n, data)
}

/// Propagates a field over the signed distance in `params`:
/// inverse-DFT( forward-DFT(field) x transfer_function ).
pub fn propagate(field: &ComplexField, params: &PropagationParams) -> Result<ComplexField> {
    propagate_with(field, &transfer_function(params))
}

/// Same as [`propagate`] with a precomputed transfer function, for callers
/// that reuse one geometry across many fields.
pub fn propagate_with(field: &ComplexField, transfer: &ComplexField) -> Result<ComplexField> {
    if field.n != transfer.n {
        return Err(Error::dimension("propagate", transfer.n, field.n));
    }
    let mut spectrum = dft2(field, Direction::Forward);
    for (s, t) in spectrum.data.iter_mut().zip(&transfer.data) {
        *s *= t;
    }
    Ok(dft2(&spectrum, Direction::Inverse))
}

/// Pointwise modulus of a complex field.
pub fn rectify(field: &ComplexField) -> RealImage {
    RealImage::unchecked(field.n, field.data.iter().map(|c| c.norm()).collect())
}

/// Classical rendering: lifts an interferogram to a complex field,
/// propagates by `+z`, and takes the magnitude.
///
/// `params.z` must be positive; synthesis in the opposite direction passes a
/// negative `z` to [`propagate`] directly.
pub fn reconstruct_hologram(
    interferogram: &RealImage,
    params: &PropagationParams,
) -> Result<RealImage> {
    if params.z <= 0.0 {
        return Err(Error::Parameter(format!(
            "reconstruction distance must be positive, got {}",
            params.z
        )));
    }
    if interferogram.n != params.n {
        return Err(Error::dimension(
            "reconstruct_hologram",
            params.n,
            interferogram.n,
        ));
    }
    let field = interferogram.to_complex()?;
    Ok(rectify(&propagate(&field, params)?))
}
