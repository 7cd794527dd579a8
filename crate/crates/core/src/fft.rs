//! Thin n-dimensional wrapper around `rustfft` for flat row-major arrays.
//!
//! Convention: `forward` produces coefficients normalized by 1/N so that
//! `f(x) = sum_k c_k exp(i k.x)`; `inverse` is the plain unnormalized
//! synthesis sum. Two real fields are frequently packed into one complex
//! transform (Hermitian split) to halve transform counts in hot paths.

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

fn plan_cache() -> &'static Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn plan(len: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    let mut cache = plan_cache().lock().unwrap();
    cache
        .entry((len, forward))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            planner.plan_fft(
                len,
                if forward {
                    FftDirection::Forward
                } else {
                    FftDirection::Inverse
                },
            )
        })
        .clone()
}

/// Apply 1D transforms along every axis of a row-major array of the given shape.
fn transform(shape: &[usize], data: &mut [Complex64], forward: bool) {
    let total: usize = shape.iter().product();
    assert_eq!(total, data.len(), "shape/product mismatch");
    let dim = shape.len();
    for axis in 0..dim {
        let len = shape[axis];
        let fft = plan(len, forward);
        // stride between consecutive elements along `axis`
        let stride: usize = shape[axis + 1..].iter().product();
        let lines = total / len;
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        if stride == 1 {
            for line in data.chunks_exact_mut(len) {
                fft.process(line);
            }
        } else {
            for l in 0..lines {
                // decompose line index into (outer, inner) around the axis
                let outer = l / stride;
                let inner = l % stride;
                let base = outer * len * stride + inner;
                for (j, b) in buf.iter_mut().enumerate() {
                    *b = data[base + j * stride];
                }
                fft.process(&mut buf);
                for (j, b) in buf.iter().enumerate() {
                    data[base + j * stride] = *b;
                }
            }
        }
    }
}

/// Forward transform, normalized by 1/N (analysis coefficients).
pub fn forward(shape: &[usize], data: &mut [Complex64]) {
    transform(shape, data, true);
    let scale = 1.0 / data.len() as f64;
    for c in data.iter_mut() {
        *c *= scale;
    }
}

/// Inverse transform (plain synthesis sum, no normalization).
pub fn inverse(shape: &[usize], data: &mut [Complex64]) {
    transform(shape, data, false);
}

/// Flat index of the frequency -k (mod n per axis) for row-major `shape`.
pub fn negate_index(shape: &[usize], idx: usize) -> usize {
    let mut rem = idx;
    let mut neg = 0usize;
    for (axis, &n) in shape.iter().enumerate() {
        let stride: usize = shape[axis + 1..].iter().product();
        let i = rem / stride;
        rem %= stride;
        let ni = if i == 0 { 0 } else { n - i };
        neg += ni * stride;
    }
    neg
}

/// Forward transforms of two real fields sharing one complex FFT.
pub fn forward_real_pair(shape: &[usize], a: &[f64], b: &[f64]) -> (Vec<Complex64>, Vec<Complex64>) {
    let mut z: Vec<Complex64> = a
        .iter()
        .zip(b.iter())
        .map(|(&x, &y)| Complex64::new(x, y))
        .collect();
    forward(shape, &mut z);
    let n = z.len();
    let mut ca = vec![Complex64::new(0.0, 0.0); n];
    let mut cb = vec![Complex64::new(0.0, 0.0); n];
    for idx in 0..n {
        let nidx = negate_index(shape, idx);
        let zp = z[idx];
        let zm = z[nidx].conj();
        ca[idx] = 0.5 * (zp + zm);
        let d = zp - zm;
        cb[idx] = Complex64::new(0.5 * d.im, -0.5 * d.re); // d / (2i)
    }
    (ca, cb)
}

/// Forward transform of a single real field.
pub fn forward_real(shape: &[usize], a: &[f64]) -> Vec<Complex64> {
    let mut z: Vec<Complex64> = a.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    forward(shape, &mut z);
    z
}

/// Inverse transforms of two Hermitian spectra sharing one complex FFT.
pub fn inverse_real_pair(shape: &[usize], ca: &[Complex64], cb: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
    let mut z: Vec<Complex64> = ca
        .iter()
        .zip(cb.iter())
        .map(|(&x, &y)| x + Complex64::new(-y.im, y.re)) // x + i*y
        .collect();
    inverse(shape, &mut z);
    (z.iter().map(|c| c.re).collect(), z.iter().map(|c| c.im).collect())
}

/// Inverse transform of one Hermitian spectrum to real samples.
pub fn inverse_real(shape: &[usize], c: &[Complex64]) -> Vec<f64> {
    let mut z = c.to_vec();
    inverse(shape, &mut z);
    z.iter().map(|v| v.re).collect()
}
