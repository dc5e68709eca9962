//! Independent oracles shared by the integration suites.
//!
//! Everything here is deliberately naive: direct O(N^4) summation for the
//! transforms and central differences for gradients. None of it calls the
//! library's FFT or backward passes, so agreement is evidence, not tautology.

#![allow(dead_code)]

use num_complex::Complex64;
use std::f64::consts::PI;

use gaborkit::rng::SplitMix64;

/// Direct-summation 2-D DFT. Forward uses the negative exponent; inverse is
/// scaled by 1/N^2, matching the library's stated convention.
pub fn dft2_direct(n: usize, data: &[Complex64], inverse: bool) -> Vec<Complex64> {
    assert_eq!(data.len(), n * n);
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut out = Vec::with_capacity(n * n);
    for p in 0..n {
        for q in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for y in 0..n {
                for x in 0..n {
                    let phase = sign * 2.0 * PI * (p * y + q * x) as f64 / n as f64;
                    acc += data[y * n + x] * Complex64::from_polar(1.0, phase);
                }
            }
            if inverse {
                acc /= (n * n) as f64;
            }
            out.push(acc);
        }
    }
    out
}

/// Scalar re-evaluation of the angular-spectrum factor at one frequency
/// sample, written independently of the library's vectorized builder.
pub fn transfer_sample(
    n: usize,
    my: usize,
    mx: usize,
    wavelength: f64,
    pitch: f64,
    z: f64,
) -> Complex64 {
    let centered = |m: usize| -> f64 {
        if m < n / 2 {
            m as f64
        } else {
            m as f64 - n as f64
        }
    };
    let dk = 2.0 * PI / (n as f64 * pitch);
    let k = 2.0 * PI / wavelength;
    let kx = centered(mx) * dk;
    let ky = centered(my) * dk;
    let radicand = k * k - kx * kx - ky * ky;
    if radicand >= 0.0 {
        Complex64::from_polar(1.0, radicand.sqrt() * z)
    } else {
        Complex64::new(0.0, 0.0)
    }
}

/// Direct evaluation of band-limited angular-spectrum propagation:
/// brute-force DFT, per-sample transfer factor, brute-force inverse DFT.
pub fn propagate_direct(
    n: usize,
    data: &[Complex64],
    wavelength: f64,
    pitch: f64,
    z: f64,
) -> Vec<Complex64> {
    let mut spectrum = dft2_direct(n, data, false);
    for my in 0..n {
        for mx in 0..n {
            spectrum[my * n + mx] *= transfer_sample(n, my, mx, wavelength, pitch, z);
        }
    }
    dft2_direct(n, &spectrum, true)
}

/// Deterministic pseudo-random complex field for test inputs.
pub fn random_field(n: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = SplitMix64::new(seed);
    (0..n * n)
        .map(|_| Complex64::new(rng.next_f64() - 0.5, rng.next_f64() - 0.5))
        .collect()
}

/// Deterministic pseudo-random real buffer in (-0.5, 0.5).
pub fn random_reals(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = SplitMix64::new(seed);
    (0..len).map(|_| rng.next_f64() - 0.5).collect()
}

pub fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Central finite difference of a scalar function at x0.
pub fn central_diff(mut f: impl FnMut(f64) -> f64, x0: f64, eps: f64) -> f64 {
    (f(x0 + eps) - f(x0 - eps)) / (2.0 * eps)
}

/// Relative-error comparison used by every gradient check. Entries whose
/// magnitudes are both below `floor` are compared absolutely instead, since
/// relative error is meaningless against finite-difference noise there.
pub fn gradients_match(analytic: f64, numeric: f64, rel_tol: f64, floor: f64) -> bool {
    let scale = analytic.abs().max(numeric.abs());
    if scale <= floor {
        (analytic - numeric).abs() <= floor
    } else {
        (analytic - numeric).abs() / scale <= rel_tol
    }
}

/// Asserts an entire gradient array against finite differences of `loss`,
/// perturbing one coordinate at a time.
pub fn check_gradient_array(
    label: &str,
    values: &mut [f64],
    analytic: &[f64],
    mut loss: impl FnMut(&[f64]) -> f64,
    eps: f64,
    rel_tol: f64,
) {
    assert_eq!(values.len(), analytic.len(), "{label}: length mismatch");
    for i in 0..values.len() {
        let saved = values[i];
        values[i] = saved + eps;
        let up = loss(values);
        values[i] = saved - eps;
        let down = loss(values);
        values[i] = saved;
        let numeric = (up - down) / (2.0 * eps);
        assert!(
            gradients_match(analytic[i], numeric, rel_tol, 1e-8),
            "{label}[{i}]: analytic {} vs numeric {}",
            analytic[i],
            numeric
        );
    }
}
