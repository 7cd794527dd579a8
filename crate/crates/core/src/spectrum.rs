//! Evaluation kernels over generic spectral boxes.
//!
//! A `SpectrumView` is a cube of Fourier coefficients with an arbitrary
//! per-axis wavenumber table, so the same kernels serve full grids and
//! compact dealiased bands (solver output carries only `|m| <= n/3`, which
//! cuts point-evaluation cost by ~3.5x at n = 32).

use crate::field::Grid;
use num_complex::Complex64;

#[derive(Debug, Clone, Copy)]
pub struct SpectrumView<'a> {
    pub dim: usize,
    pub side: usize,
    pub wav: &'a [f64],
    pub coeffs: &'a [Complex64],
}

impl<'a> SpectrumView<'a> {
    fn phase(&self, x: f64) -> Vec<Complex64> {
        self.wav.iter().map(|&k| Complex64::from_polar(1.0, k * x)).collect()
    }

    /// `Re sum_k c_k exp(i k.x)` at one point.
    pub fn eval_point(&self, p: &[f64]) -> f64 {
        let n = self.side;
        if self.dim == 2 {
            let px = self.phase(p[0]);
            let py = self.phase(p[1]);
            let mut tot = Complex64::new(0.0, 0.0);
            for i0 in 0..n {
                let base = i0 * n;
                let mut s = Complex64::new(0.0, 0.0);
                for i1 in 0..n {
                    s += self.coeffs[base + i1] * py[i1];
                }
                tot += s * px[i0];
            }
            tot.re
        } else {
            let px = self.phase(p[0]);
            let py = self.phase(p[1]);
            let pz = self.phase(p[2]);
            let mut tot = Complex64::new(0.0, 0.0);
            for i0 in 0..n {
                let mut s1 = Complex64::new(0.0, 0.0);
                for i1 in 0..n {
                    let base = (i0 * n + i1) * n;
                    let mut s2 = Complex64::new(0.0, 0.0);
                    for i2 in 0..n {
                        s2 += self.coeffs[base + i2] * pz[i2];
                    }
                    s1 += s2 * py[i1];
                }
                tot += s1 * px[i0];
            }
            tot.re
        }
    }

    /// Value and gradient at one point.
    pub fn eval_point_with_grad(&self, p: &[f64]) -> (f64, [f64; 3]) {
        let n = self.side;
        let w = self.wav;
        if self.dim == 2 {
            let px = self.phase(p[0]);
            let py = self.phase(p[1]);
            let mut t = Complex64::new(0.0, 0.0);
            let mut t0 = Complex64::new(0.0, 0.0);
            let mut t1 = Complex64::new(0.0, 0.0);
            for i0 in 0..n {
                let base = i0 * n;
                let mut s = Complex64::new(0.0, 0.0);
                let mut sk = Complex64::new(0.0, 0.0);
                for i1 in 0..n {
                    let c = self.coeffs[base + i1] * py[i1];
                    s += c;
                    sk += c * w[i1];
                }
                t += s * px[i0];
                t0 += s * (px[i0] * w[i0]);
                t1 += sk * px[i0];
            }
            (t.re, [-t0.im, -t1.im, 0.0])
        } else {
            let px = self.phase(p[0]);
            let py = self.phase(p[1]);
            let pz = self.phase(p[2]);
            let mut t = Complex64::new(0.0, 0.0);
            let mut ta = [Complex64::new(0.0, 0.0); 3];
            for i0 in 0..n {
                let mut s1 = Complex64::new(0.0, 0.0);
                let mut s1y = Complex64::new(0.0, 0.0);
                let mut s1z = Complex64::new(0.0, 0.0);
                for i1 in 0..n {
                    let base = (i0 * n + i1) * n;
                    let mut s2 = Complex64::new(0.0, 0.0);
                    let mut s2z = Complex64::new(0.0, 0.0);
                    for i2 in 0..n {
                        let c = self.coeffs[base + i2] * pz[i2];
                        s2 += c;
                        s2z += c * w[i2];
                    }
                    s1 += s2 * py[i1];
                    s1y += s2 * (py[i1] * w[i1]);
                    s1z += s2z * py[i1];
                }
                t += s1 * px[i0];
                ta[0] += s1 * (px[i0] * w[i0]);
                ta[1] += s1y * px[i0];
                ta[2] += s1z * px[i0];
            }
            (t.re, [-ta[0].im, -ta[1].im, -ta[2].im])
        }
    }

    /// Value, gradient, Hessian at one point.
    pub fn eval_point_derivs2(&self, p: &[f64]) -> (f64, [f64; 3], [[f64; 3]; 3]) {
        let n = self.side;
        let w = self.wav;
        let mut hess = [[0.0f64; 3]; 3];
        if self.dim == 2 {
            let px = self.phase(p[0]);
            let py = self.phase(p[1]);
            let mut t = Complex64::new(0.0, 0.0);
            let mut g = [Complex64::new(0.0, 0.0); 2];
            let mut h = [[Complex64::new(0.0, 0.0); 2]; 2];
            for i0 in 0..n {
                let base = i0 * n;
                let mut s = Complex64::new(0.0, 0.0);
                let mut sk = Complex64::new(0.0, 0.0);
                let mut skk = Complex64::new(0.0, 0.0);
                for i1 in 0..n {
                    let c = self.coeffs[base + i1] * py[i1];
                    s += c;
                    sk += c * w[i1];
                    skk += c * (w[i1] * w[i1]);
                }
                let p0 = px[i0];
                let k0 = w[i0];
                t += s * p0;
                g[0] += s * (p0 * k0);
                g[1] += sk * p0;
                h[0][0] += s * (p0 * k0 * k0);
                h[0][1] += sk * (p0 * k0);
                h[1][1] += skk * p0;
            }
            let grad = [-g[0].im, -g[1].im, 0.0];
            hess[0][0] = -h[0][0].re;
            hess[0][1] = -h[0][1].re;
            hess[1][0] = hess[0][1];
            hess[1][1] = -h[1][1].re;
            (t.re, grad, hess)
        } else {
            let px = self.phase(p[0]);
            let py = self.phase(p[1]);
            let pz = self.phase(p[2]);
            let mut t = Complex64::new(0.0, 0.0);
            let mut g = [Complex64::new(0.0, 0.0); 3];
            let mut h = [[Complex64::new(0.0, 0.0); 3]; 3];
            for i0 in 0..n {
                let mut s = Complex64::new(0.0, 0.0);
                let mut sy = Complex64::new(0.0, 0.0);
                let mut sz = Complex64::new(0.0, 0.0);
                let mut syy = Complex64::new(0.0, 0.0);
                let mut szz = Complex64::new(0.0, 0.0);
                let mut syz = Complex64::new(0.0, 0.0);
                for i1 in 0..n {
                    let base = (i0 * n + i1) * n;
                    let mut s2 = Complex64::new(0.0, 0.0);
                    let mut s2z = Complex64::new(0.0, 0.0);
                    let mut s2zz = Complex64::new(0.0, 0.0);
                    for i2 in 0..n {
                        let c = self.coeffs[base + i2] * pz[i2];
                        s2 += c;
                        s2z += c * w[i2];
                        s2zz += c * (w[i2] * w[i2]);
                    }
                    let p1 = py[i1];
                    let k1 = w[i1];
                    s += s2 * p1;
                    sy += s2 * (p1 * k1);
                    sz += s2z * p1;
                    syy += s2 * (p1 * k1 * k1);
                    syz += s2z * (p1 * k1);
                    szz += s2zz * p1;
                }
                let p0 = px[i0];
                let k0 = w[i0];
                t += s * p0;
                g[0] += s * (p0 * k0);
                g[1] += sy * p0;
                g[2] += sz * p0;
                h[0][0] += s * (p0 * k0 * k0);
                h[0][1] += sy * (p0 * k0);
                h[0][2] += sz * (p0 * k0);
                h[1][1] += syy * p0;
                h[1][2] += syz * p0;
                h[2][2] += szz * p0;
            }
            let grad = [-g[0].im, -g[1].im, -g[2].im];
            for a in 0..3 {
                for b in a..3 {
                    hess[a][b] = -h[a][b].re;
                    hess[b][a] = hess[a][b];
                }
            }
            (t.re, grad, hess)
        }
    }

    fn lattice_phase(&self, axis: usize, origin: &[f64], spacing: &[f64], counts: &[usize]) -> Vec<Vec<Complex64>> {
        (0..counts[axis])
            .map(|c| {
                let x = origin[axis] + c as f64 * spacing[axis];
                self.phase(x)
            })
            .collect()
    }

    /// Values on the tensor lattice `origin + j .* spacing`.
    pub fn eval_lattice(&self, origin: &[f64], spacing: &[f64], counts: &[usize]) -> Vec<f64> {
        let n = self.side;
        if self.dim == 2 {
            let (m0, m1) = (counts[0], counts[1]);
            let t1 = self.lattice_phase(1, origin, spacing, counts);
            let mut u = vec![Complex64::new(0.0, 0.0); n * m1];
            for i0 in 0..n {
                for (c1, t) in t1.iter().enumerate() {
                    let mut s = Complex64::new(0.0, 0.0);
                    for i1 in 0..n {
                        s += self.coeffs[i0 * n + i1] * t[i1];
                    }
                    u[i0 * m1 + c1] = s;
                }
            }
            let t0 = self.lattice_phase(0, origin, spacing, counts);
            let mut out = vec![0.0; m0 * m1];
            for (c0, t) in t0.iter().enumerate() {
                for c1 in 0..m1 {
                    let mut s = Complex64::new(0.0, 0.0);
                    for i0 in 0..n {
                        s += u[i0 * m1 + c1] * t[i0];
                    }
                    out[c0 * m1 + c1] = s.re;
                }
            }
            out
        } else {
            let (m0, m1, m2) = (counts[0], counts[1], counts[2]);
            let t2 = self.lattice_phase(2, origin, spacing, counts);
            let mut u = vec![Complex64::new(0.0, 0.0); n * n * m2];
            for i01 in 0..n * n {
                let base = i01 * n;
                for (c2, t) in t2.iter().enumerate() {
                    let mut s = Complex64::new(0.0, 0.0);
                    for i2 in 0..n {
                        s += self.coeffs[base + i2] * t[i2];
                    }
                    u[i01 * m2 + c2] = s;
                }
            }
            let t1 = self.lattice_phase(1, origin, spacing, counts);
            let mut v = vec![Complex64::new(0.0, 0.0); n * m1 * m2];
            for i0 in 0..n {
                for (c1, t) in t1.iter().enumerate() {
                    for c2 in 0..m2 {
                        let mut s = Complex64::new(0.0, 0.0);
                        for i1 in 0..n {
                            s += u[(i0 * n + i1) * m2 + c2] * t[i1];
                        }
                        v[(i0 * m1 + c1) * m2 + c2] = s;
                    }
                }
            }
            let t0 = self.lattice_phase(0, origin, spacing, counts);
            let mut out = vec![0.0; m0 * m1 * m2];
            for (c0, t) in t0.iter().enumerate() {
                for c12 in 0..m1 * m2 {
                    let mut s = Complex64::new(0.0, 0.0);
                    for i0 in 0..n {
                        s += v[i0 * m1 * m2 + c12] * t[i0];
                    }
                    out[c0 * m1 * m2 + c12] = s.re;
                }
            }
            out
        }
    }
}

/// Owned spectral cube, either the full mode lattice of a grid or the
/// compact symmetric band actually carrying coefficients.
#[derive(Debug, Clone)]
pub struct CompactCoeffs {
    pub dim: usize,
    pub side: usize,
    pub wav: Vec<f64>,
    pub coeffs: Vec<Complex64>,
}

impl CompactCoeffs {
    /// Wrap the full mode lattice (any spectrum).
    pub fn full(grid: &Grid, coeffs: &[Complex64]) -> CompactCoeffs {
        CompactCoeffs {
            dim: grid.dim(),
            side: grid.n(),
            wav: grid.wavenumbers(),
            coeffs: coeffs.to_vec(),
        }
    }

    /// Extract the smallest symmetric band `|m_a| <= K` holding all
    /// coefficients above `1e-13 * max`; falls back to the full lattice when
    /// the Nyquist planes carry mass.
    pub fn compact(grid: &Grid, coeffs: &[Complex64]) -> CompactCoeffs {
        let max = coeffs.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        let thresh = 1e-13 * max;
        let n2 = grid.n() as i64 / 2;
        let mut kmax = 0i64;
        let mut nyquist = false;
        grid.for_each_mode(|flat, m, _| {
            if coeffs[flat].norm() > thresh {
                if m.iter().any(|&v| v == -n2) {
                    nyquist = true;
                } else {
                    kmax = kmax.max(m.iter().map(|v| v.abs()).max().unwrap());
                }
            }
        });
        if nyquist || max == 0.0 && grid.n() <= 2 {
            return CompactCoeffs::full(grid, coeffs);
        }
        let side = (2 * kmax + 1) as usize;
        let two_pi_over_l = 2.0 * std::f64::consts::PI / grid.box_length();
        let wav: Vec<f64> = (0..side)
            .map(|j| (j as i64 - kmax) as f64 * two_pi_over_l)
            .collect();
        let n = grid.n();
        let store = |m: i64| -> usize {
            if m >= 0 {
                m as usize
            } else {
                (m + n as i64) as usize
            }
        };
        let dim = grid.dim();
        let mut out = vec![Complex64::new(0.0, 0.0); side.pow(dim as u32)];
        if dim == 2 {
            for (a, out_row) in out.chunks_mut(side).enumerate() {
                let i0 = store(a as i64 - kmax);
                for (b, o) in out_row.iter_mut().enumerate() {
                    let i1 = store(b as i64 - kmax);
                    *o = coeffs[i0 * n + i1];
                }
            }
        } else {
            let mut idx = 0;
            for a in 0..side {
                let i0 = store(a as i64 - kmax);
                for b in 0..side {
                    let i1 = store(b as i64 - kmax);
                    for c in 0..side {
                        let i2 = store(c as i64 - kmax);
                        out[idx] = coeffs[(i0 * n + i1) * n + i2];
                        idx += 1;
                    }
                }
            }
        }
        CompactCoeffs { dim, side, wav, coeffs: out }
    }

    pub fn view(&self) -> SpectrumView<'_> {
        SpectrumView { dim: self.dim, side: self.side, wav: &self.wav, coeffs: &self.coeffs }
    }

    /// Weighted linear combination of same-shape spectra.
    pub fn combine(parts: &[(f64, &CompactCoeffs)]) -> CompactCoeffs {
        let first = parts[0].1;
        let mut out = CompactCoeffs {
            dim: first.dim,
            side: first.side,
            wav: first.wav.clone(),
            coeffs: vec![Complex64::new(0.0, 0.0); first.coeffs.len()],
        };
        for (w, p) in parts {
            assert_eq!(p.side, first.side, "combine requires equal bands");
            for (o, c) in out.coeffs.iter_mut().zip(&p.coeffs) {
                *o += *w * c;
            }
        }
        out
    }
}
