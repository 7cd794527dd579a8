//! Periodic grids and real scalar/vector fields with exact spectral duals.
//!
//! Fields are immutable after construction: every operation returns a fresh
//! field. The spectral dual is cached lazily behind a `OnceLock`, so shared
//! read-only use across threads is safe. Convention: coefficients `c_k`
//! satisfy `f(x) = sum_k c_k exp(i k.x)` with `k = 2*pi/L * m`, integer modes
//! `m` in `[-n/2, n/2)` per axis.

use crate::error::Error;
use crate::fft;
use crate::Result;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

/// Maximum total derivative order accepted by spectral differentiation.
pub const DERIVATIVE_CAP: u32 = 12;

/// Uniform periodic grid on `[0, L)^dim`, `dim` in {2, 3}, `n` a power of two.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    n: usize,
    len: f64,
}

impl Grid {
    pub fn new(dim: usize, n_per_axis: usize, box_length: f64) -> Result<Grid> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidGrid(format!("dim must be 2 or 3, got {dim}")));
        }
        if n_per_axis < 8 || !n_per_axis.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n_per_axis must be a power of two >= 8, got {n_per_axis}"
            )));
        }
        if !(box_length > 0.0) || !box_length.is_finite() {
            return Err(Error::InvalidGrid(format!("box_length must be positive, got {box_length}")));
        }
        Ok(Grid { dim, n: n_per_axis, len: box_length })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn box_length(&self) -> f64 {
        self.len
    }

    pub fn cells(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn spacing(&self) -> f64 {
        self.len / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn shape(&self) -> Vec<usize> {
        vec![self.n; self.dim]
    }

    /// Signed integer mode for storage index `i` (Nyquist represented as -n/2).
    pub fn mode(&self, i: usize) -> i64 {
        if i <= self.n / 2 - 1 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Physical wavenumber for storage index `i`.
    pub fn wavenumber(&self, i: usize) -> f64 {
        2.0 * std::f64::consts::PI / self.len * self.mode(i) as f64
    }

    /// Per-axis wavenumber table (identical for every axis).
    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.wavenumber(i)).collect()
    }

    /// Largest integer mode kept by the 2/3 dealiasing rule.
    pub fn dealias_keep(&self) -> i64 {
        (self.n / 3) as i64
    }

    /// Flat row-major index of a multi-dimensional index.
    pub fn flat(&self, idx: &[usize]) -> usize {
        let mut f = 0;
        for &i in idx.iter().take(self.dim) {
            f = f * self.n + i;
        }
        f
    }

    /// Physical coordinates of the grid node with flat index `flat`.
    pub fn node(&self, flat: usize) -> Vec<f64> {
        let mut rem = flat;
        let mut out = vec![0.0; self.dim];
        for a in (0..self.dim).rev() {
            out[a] = (rem % self.n) as f64 * self.spacing();
            rem /= self.n;
        }
        out
    }

    /// Fold a point into `[0, L)` per axis.
    pub fn fold(&self, p: &[f64]) -> Vec<f64> {
        p.iter().take(self.dim).map(|&x| x.rem_euclid(self.len)).collect()
    }

    /// Minimum-image distance between two points on the torus.
    pub fn torus_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            let mut d = (a[i] - b[i]).rem_euclid(self.len);
            if d > 0.5 * self.len {
                d = self.len - d;
            }
            s += d * d;
        }
        s.sqrt()
    }

    /// Visit every mode as `(flat index, integer modes, wavenumber vector)`.
    pub fn for_each_mode(&self, mut visit: impl FnMut(usize, &[i64; 3], &[f64; 3])) {
        let n = self.n;
        let two_pi_over_l = 2.0 * std::f64::consts::PI / self.len;
        if self.dim == 2 {
            let mut flat = 0;
            for i0 in 0..n {
                let m0 = self.mode(i0);
                for i1 in 0..n {
                    let m1 = self.mode(i1);
                    let m = [m0, m1, 0];
                    let k = [m0 as f64 * two_pi_over_l, m1 as f64 * two_pi_over_l, 0.0];
                    visit(flat, &m, &k);
                    flat += 1;
                }
            }
        } else {
            let mut flat = 0;
            for i0 in 0..n {
                let m0 = self.mode(i0);
                for i1 in 0..n {
                    let m1 = self.mode(i1);
                    for i2 in 0..n {
                        let m2 = self.mode(i2);
                        let m = [m0, m1, m2];
                        let k = [
                            m0 as f64 * two_pi_over_l,
                            m1 as f64 * two_pi_over_l,
                            m2 as f64 * two_pi_over_l,
                        ];
                        visit(flat, &m, &k);
                        flat += 1;
                    }
                }
            }
        }
    }
}

/// Multi-index of partial-derivative orders per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MultiIndex {
    orders: [u32; 3],
}

impl MultiIndex {
    pub fn new(orders: &[u32]) -> Result<MultiIndex> {
        let mut o = [0u32; 3];
        for (i, &v) in orders.iter().take(3).enumerate() {
            o[i] = v;
        }
        let total: u32 = o.iter().sum();
        if total > DERIVATIVE_CAP {
            return Err(Error::DerivativeOrder { order: total, cap: DERIVATIVE_CAP });
        }
        Ok(MultiIndex { orders: o })
    }

    pub fn order(&self, axis: usize) -> u32 {
        self.orders[axis]
    }

    pub fn total(&self) -> u32 {
        self.orders.iter().sum()
    }

    /// All multi-indices of total order `n` in `dim` axes.
    pub fn all_of_order(dim: usize, n: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        if dim == 2 {
            for a in 0..=n {
                out.push(MultiIndex { orders: [a, n - a, 0] });
            }
        } else {
            for a in 0..=n {
                for b in 0..=(n - a) {
                    out.push(MultiIndex { orders: [a, b, n - a - b] });
                }
            }
        }
        out
    }

    /// Multinomial weight n!/(m1! m2! m3!): number of orderings of this index.
    pub fn multinomial(&self) -> f64 {
        fn fact(k: u32) -> f64 {
            (1..=k).map(|v| v as f64).product::<f64>().max(1.0)
        }
        fact(self.total()) / (fact(self.orders[0]) * fact(self.orders[1]) * fact(self.orders[2]))
    }
}

/// Real scalar field on a periodic grid with a lazily cached spectral dual.
#[derive(Debug)]
pub struct ScalarField {
    grid: Grid,
    samples: Vec<f64>,
    spectral: OnceLock<Vec<Complex64>>,
}

impl Clone for ScalarField {
    fn clone(&self) -> Self {
        let f = ScalarField {
            grid: self.grid,
            samples: self.samples.clone(),
            spectral: OnceLock::new(),
        };
        if let Some(s) = self.spectral.get() {
            let _ = f.spectral.set(s.clone());
        }
        f
    }
}

impl ScalarField {
    pub fn from_samples(grid: Grid, samples: Vec<f64>) -> ScalarField {
        assert_eq!(samples.len(), grid.cells(), "sample count must match grid");
        ScalarField { grid, samples, spectral: OnceLock::new() }
    }

    pub fn from_spectral(grid: Grid, coeffs: Vec<Complex64>) -> ScalarField {
        assert_eq!(coeffs.len(), grid.cells());
        let samples = fft::inverse_real(&grid.shape(), &coeffs);
        let f = ScalarField { grid, samples, spectral: OnceLock::new() };
        let _ = f.spectral.set(coeffs);
        f
    }

    pub fn zeros(grid: Grid) -> ScalarField {
        ScalarField::from_samples(grid, vec![0.0; grid.cells()])
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> ScalarField {
        let samples = (0..grid.cells()).map(|i| f(&grid.node(i))).collect();
        ScalarField::from_samples(grid, samples)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn spectral(&self) -> &[Complex64] {
        self.spectral
            .get_or_init(|| fft::forward_real(&self.grid.shape(), &self.samples))
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn sup_norm(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    /// Physical-space L2 norm, `sqrt(sum f^2 * cell_volume)`.
    pub fn l2_norm(&self) -> f64 {
        (self.samples.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    /// L2 norm from the spectral side (Parseval).
    pub fn l2_norm_spectral(&self) -> f64 {
        let vol = self.grid.len.powi(self.grid.dim as i32);
        (self.spectral().iter().map(|c| c.norm_sqr()).sum::<f64>() * vol).sqrt()
    }

    pub fn scale(&self, c: f64) -> ScalarField {
        ScalarField::from_samples(self.grid, self.samples.iter().map(|v| c * v).collect())
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        assert_eq!(self.grid, other.grid);
        ScalarField::from_samples(
            self.grid,
            self.samples.iter().zip(&other.samples).map(|(a, b)| a + b).collect(),
        )
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        assert_eq!(self.grid, other.grid);
        ScalarField::from_samples(
            self.grid,
            self.samples.iter().zip(&other.samples).map(|(a, b)| a - b).collect(),
        )
    }

    pub fn mul_pointwise(&self, other: &ScalarField) -> ScalarField {
        assert_eq!(self.grid, other.grid);
        ScalarField::from_samples(
            self.grid,
            self.samples.iter().zip(&other.samples).map(|(a, b)| a * b).collect(),
        )
    }

    /// Remove the spatial mean.
    pub fn zero_mean(&self) -> ScalarField {
        let m = self.mean();
        ScalarField::from_samples(self.grid, self.samples.iter().map(|v| v - m).collect())
    }

    /// Spectral partial derivative with multiplier `(ik)^m`. Nyquist modes are
    /// zeroed on axes with odd order so the result stays real.
    pub fn derivative(&self, m: &MultiIndex) -> ScalarField {
        let grid = self.grid;
        let n = grid.n;
        // per-axis multiplier tables
        let mut tables: Vec<Vec<Complex64>> = Vec::with_capacity(grid.dim);
        for axis in 0..grid.dim {
            let ord = m.order(axis);
            let table: Vec<Complex64> = (0..n)
                .map(|i| {
                    if ord == 0 {
                        return Complex64::new(1.0, 0.0);
                    }
                    if grid.mode(i) == -(n as i64) / 2 {
                        return Complex64::new(0.0, 0.0);
                    }
                    Complex64::new(0.0, grid.wavenumber(i)).powu(ord)
                })
                .collect();
            tables.push(table);
        }
        let src = self.spectral();
        let mut out = vec![Complex64::new(0.0, 0.0); src.len()];
        if grid.dim == 2 {
            let mut flat = 0;
            for i0 in 0..n {
                let t0 = tables[0][i0];
                for i1 in 0..n {
                    out[flat] = src[flat] * t0 * tables[1][i1];
                    flat += 1;
                }
            }
        } else {
            let mut flat = 0;
            for i0 in 0..n {
                let t0 = tables[0][i0];
                for i1 in 0..n {
                    let t01 = t0 * tables[1][i1];
                    for i2 in 0..n {
                        out[flat] = src[flat] * t01 * tables[2][i2];
                        flat += 1;
                    }
                }
            }
        }
        ScalarField::from_spectral(grid, out)
    }

    /// Apply a real Fourier multiplier given per mode.
    pub fn real_multiplier(&self, mult: impl Fn(&[i64; 3], &[f64; 3]) -> f64) -> ScalarField {
        let src = self.spectral();
        let mut out = vec![Complex64::new(0.0, 0.0); src.len()];
        self.grid.for_each_mode(|flat, m, k| {
            out[flat] = src[flat] * mult(m, k);
        });
        ScalarField::from_spectral(self.grid, out)
    }

    /// Zero every mode with any `|m_a|` above the 2/3 cutoff.
    pub fn dealias(&self) -> ScalarField {
        let keep = self.grid.dealias_keep();
        let src = self.spectral();
        let mut out = src.to_vec();
        self.grid.for_each_mode(|flat, m, _| {
            if m.iter().any(|v| v.abs() > keep) {
                out[flat] = Complex64::new(0.0, 0.0);
            }
        });
        ScalarField::from_spectral(self.grid, out)
    }

    /// Exact trigonometric evaluation of the band-limited interpolant at
    /// arbitrary points (folded into the box).
    pub fn sample_at(&self, points: &[Vec<f64>]) -> Vec<f64> {
        let coeffs = self.spectral();
        points
            .iter()
            .map(|p| eval_point(&self.grid, coeffs, &self.grid.fold(p)))
            .collect()
    }
}

/// Vector field: `dim` scalar components on one shared grid.
#[derive(Debug, Clone)]
pub struct VectorField {
    components: Vec<ScalarField>,
    divfree: bool,
}

impl VectorField {
    pub fn new(components: Vec<ScalarField>) -> VectorField {
        assert!(!components.is_empty());
        let grid = *components[0].grid();
        assert_eq!(components.len(), grid.dim());
        for c in &components {
            assert_eq!(*c.grid(), grid);
        }
        VectorField { components, divfree: false }
    }

    pub fn zeros(grid: Grid) -> VectorField {
        let comps = (0..grid.dim()).map(|_| ScalarField::zeros(grid)).collect();
        VectorField { components: comps, divfree: true }
    }

    pub fn grid(&self) -> &Grid {
        self.components[0].grid()
    }

    pub fn component(&self, i: usize) -> &ScalarField {
        &self.components[i]
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn is_divfree_tagged(&self) -> bool {
        self.divfree
    }

    pub(crate) fn with_divfree_tag(mut self, tag: bool) -> VectorField {
        self.divfree = tag;
        self
    }

    pub fn map(&self, f: impl Fn(&ScalarField) -> ScalarField) -> VectorField {
        VectorField::new(self.components.iter().map(f).collect())
    }

    pub fn scale(&self, c: f64) -> VectorField {
        self.map(|s| s.scale(c)).with_divfree_tag(self.divfree)
    }

    pub fn add(&self, other: &VectorField) -> VectorField {
        VectorField::new(
            self.components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.add(b))
                .collect(),
        )
        .with_divfree_tag(self.divfree && other.divfree)
    }

    pub fn sub(&self, other: &VectorField) -> VectorField {
        VectorField::new(
            self.components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.sub(b))
                .collect(),
        )
        .with_divfree_tag(self.divfree && other.divfree)
    }

    /// Total kinetic quantity `||u||^2_{L2}` (no 1/2 factor).
    pub fn energy(&self) -> f64 {
        self.components.iter().map(|c| c.l2_norm().powi(2)).sum()
    }

    /// `||grad u||^2_{L2}` evaluated spectrally.
    pub fn grad_sq(&self) -> f64 {
        let grid = self.grid();
        let vol = grid.box_length().powi(grid.dim() as i32);
        let mut total = 0.0;
        for c in &self.components {
            let spec = c.spectral();
            let mut acc = 0.0;
            grid.for_each_mode(|flat, _, k| {
                let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
                acc += k2 * spec[flat].norm_sqr();
            });
            total += acc;
        }
        total * vol
    }

    /// Spectral divergence as a scalar field.
    pub fn divergence(&self) -> ScalarField {
        let grid = *self.grid();
        let mut out = vec![Complex64::new(0.0, 0.0); grid.cells()];
        for (axis, c) in self.components.iter().enumerate() {
            let spec = c.spectral();
            grid.for_each_mode(|flat, m, k| {
                if m[axis] == -(grid.n() as i64) / 2 {
                    return;
                }
                out[flat] += Complex64::new(0.0, k[axis]) * spec[flat];
            });
        }
        ScalarField::from_spectral(grid, out)
    }

    /// Max spectral divergence modulus and max spectral velocity modulus,
    /// for the relative divergence-free check.
    pub fn divergence_ratio(&self) -> f64 {
        let grid = self.grid();
        let mut div_max = 0.0f64;
        let mut vel_max = 0.0f64;
        let specs: Vec<&[Complex64]> = self.components.iter().map(|c| c.spectral()).collect();
        grid.for_each_mode(|flat, _, k| {
            let mut d = Complex64::new(0.0, 0.0);
            for (axis, spec) in specs.iter().enumerate() {
                d += Complex64::new(0.0, k[axis]) * spec[flat];
                vel_max = vel_max.max(spec[flat].norm());
            }
            div_max = div_max.max(d.norm());
        });
        if vel_max == 0.0 {
            0.0
        } else {
            div_max / vel_max
        }
    }

    /// Pointwise modulus field |u|.
    pub fn modulus(&self) -> ScalarField {
        let grid = *self.grid();
        let mut out = vec![0.0; grid.cells()];
        for c in &self.components {
            for (o, v) in out.iter_mut().zip(c.samples()) {
                *o += v * v;
            }
        }
        ScalarField::from_samples(grid, out.into_iter().map(f64::sqrt).collect())
    }

    pub fn dealias(&self) -> VectorField {
        self.map(|c| c.dealias()).with_divfree_tag(self.divfree)
    }

    /// Pin the spatial mean of every component to zero.
    pub fn zero_mean(&self) -> VectorField {
        self.map(|c| c.zero_mean()).with_divfree_tag(self.divfree)
    }
}

/// Spectral Leray projection onto divergence-free fields. The zero mode is
/// left unchanged; the projector is idempotent and annihilates gradients.
pub fn leray_project(v: &VectorField) -> VectorField {
    let grid = *v.grid();
    let dim = grid.dim();
    let specs: Vec<Vec<Complex64>> = v.components().iter().map(|c| c.spectral().to_vec()).collect();
    let mut out: Vec<Vec<Complex64>> = specs.clone();
    grid.for_each_mode(|flat, _, k| {
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        if k2 == 0.0 {
            return;
        }
        let mut kdotu = Complex64::new(0.0, 0.0);
        for (axis, spec) in specs.iter().enumerate() {
            kdotu += k[axis] * spec[flat];
        }
        let factor = kdotu / k2;
        for (axis, o) in out.iter_mut().enumerate().take(dim) {
            o[flat] -= k[axis] * factor;
        }
    });
    VectorField::new(
        out.into_iter().map(|c| ScalarField::from_spectral(grid, c)).collect(),
    )
    .with_divfree_tag(true)
}

/// Taylor-Green initial data. 2D is the initial datum of the closed-form
/// decaying solution `A exp(-2 nu kappa^2 t) (sin kx cos ky, -cos kx sin ky)`.
pub fn taylor_green(grid: Grid, amplitude: f64) -> VectorField {
    let kappa = 2.0 * std::f64::consts::PI / grid.box_length();
    let v = if grid.dim() == 2 {
        let u0 = ScalarField::from_fn(grid, |p| amplitude * (kappa * p[0]).sin() * (kappa * p[1]).cos());
        let u1 = ScalarField::from_fn(grid, |p| -amplitude * (kappa * p[0]).cos() * (kappa * p[1]).sin());
        VectorField::new(vec![u0, u1])
    } else {
        let u0 = ScalarField::from_fn(grid, |p| {
            amplitude * (kappa * p[0]).sin() * (kappa * p[1]).cos() * (kappa * p[2]).cos()
        });
        let u1 = ScalarField::from_fn(grid, |p| {
            -amplitude * (kappa * p[0]).cos() * (kappa * p[1]).sin() * (kappa * p[2]).cos()
        });
        let u2 = ScalarField::zeros(grid);
        VectorField::new(vec![u0, u1, u2])
    };
    v.with_divfree_tag(true)
}

/// Deterministic Gaussian random divergence-free field. Coefficients are
/// shaped by `|k|^slope * exp(-(|k|/k_peak)^2)`, band-limited to the dealias
/// band, Leray-projected, zero-mean, and normalized to the target energy.
pub fn random_divfree_field(
    grid: Grid,
    spectrum_slope: f64,
    k_peak: f64,
    energy: f64,
    seed: u64,
) -> VectorField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = grid.dim();
    let keep = grid.dealias_keep();
    let mut specs: Vec<Vec<Complex64>> = (0..dim)
        .map(|_| vec![Complex64::new(0.0, 0.0); grid.cells()])
        .collect();
    let shape = grid.shape();
    let two_pi_over_l = 2.0 * std::f64::consts::PI / grid.box_length();
    // canonical representative: first nonzero integer mode positive
    let is_canonical = |m: &[i64; 3]| -> bool {
        for &v in m.iter() {
            if v > 0 {
                return true;
            }
            if v < 0 {
                return false;
            }
        }
        false
    };
    let gauss = |rng: &mut ChaCha8Rng| -> f64 {
        // Box-Muller
        let u1: f64 = rng.gen::<f64>().max(1e-300);
        let u2: f64 = rng.gen::<f64>();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    let mut assignments: Vec<(usize, usize, Complex64)> = Vec::new();
    grid.for_each_mode(|flat, m, _| {
        if m.iter().all(|&v| v == 0) {
            return;
        }
        if m.iter().any(|v| v.abs() > keep) {
            return;
        }
        if !is_canonical(m) {
            return;
        }
        let kmag = two_pi_over_l
            * ((m[0] * m[0] + m[1] * m[1] + m[2] * m[2]) as f64).sqrt();
        let env = kmag.powf(spectrum_slope) * (-(kmag / k_peak).powi(2)).exp();
        let nidx = fft::negate_index(&shape, flat);
        for axis in 0..dim {
            let c = Complex64::new(gauss(&mut rng), gauss(&mut rng)) * env
                / std::f64::consts::SQRT_2;
            assignments.push((axis, flat, c));
            assignments.push((axis, nidx, c.conj()));
        }
    });
    for (axis, idx, c) in assignments {
        specs[axis][idx] = c;
    }
    let raw = VectorField::new(
        specs.into_iter().map(|c| ScalarField::from_spectral(grid, c)).collect(),
    );
    let projected = leray_project(&raw);
    let e0 = projected.energy();
    if e0 == 0.0 {
        return projected;
    }
    projected.scale((energy / e0).sqrt()).with_divfree_tag(true)
}

// ---------------------------------------------------------------------------
// Trigonometric evaluation kernels
// ---------------------------------------------------------------------------

fn view<'a>(grid: &Grid, coeffs: &'a [Complex64], wav: &'a [f64]) -> crate::spectrum::SpectrumView<'a> {
    crate::spectrum::SpectrumView { dim: grid.dim(), side: grid.n(), wav, coeffs }
}

/// Evaluate `Re sum_k c_k exp(i k.x)` at a single point.
pub fn eval_point(grid: &Grid, coeffs: &[Complex64], p: &[f64]) -> f64 {
    let wav = grid.wavenumbers();
    view(grid, coeffs, &wav).eval_point(p)
}

/// Evaluate value and gradient at a single point.
pub fn eval_point_with_grad(grid: &Grid, coeffs: &[Complex64], p: &[f64]) -> (f64, [f64; 3]) {
    let wav = grid.wavenumbers();
    view(grid, coeffs, &wav).eval_point_with_grad(p)
}

/// Evaluate value, gradient and Hessian at a single point (in 2D the third
/// row/column is zero).
pub fn eval_point_derivs2(
    grid: &Grid,
    coeffs: &[Complex64],
    p: &[f64],
) -> (f64, [f64; 3], [[f64; 3]; 3]) {
    let wav = grid.wavenumbers();
    view(grid, coeffs, &wav).eval_point_derivs2(p)
}

/// Tensor-lattice evaluation: values at `origin + j .* spacing` for
/// `j` in `0..counts` per axis, exploiting the separable phase structure.
pub fn eval_lattice(
    grid: &Grid,
    coeffs: &[Complex64],
    origin: &[f64],
    spacing: &[f64],
    counts: &[usize],
) -> Vec<f64> {
    let wav = grid.wavenumbers();
    view(grid, coeffs, &wav).eval_lattice(origin, spacing, counts)
}

/// Tensor-lattice evaluation of value and gradient.
pub fn eval_lattice_with_grad(
    grid: &Grid,
    coeffs: &[Complex64],
    origin: &[f64],
    spacing: &[f64],
    counts: &[usize],
) -> (Vec<f64>, Vec<[f64; 3]>) {
    // Four contractions sharing phase tables: plain, and k-weighted per axis.
    let n = grid.n();
    let w = grid.wavenumbers();
    let dim = grid.dim();
    let weighted: Vec<Complex64> = Vec::new();
    drop(weighted);
    let mut out_v = Vec::new();
    let mut out_g = Vec::new();
    // Reuse eval_lattice by evaluating the k_a-weighted coefficient arrays.
    // The extra arrays are built once per call; for repeated use on the same
    // coefficients prefer the point kernels.
    let plain = eval_lattice(grid, coeffs, origin, spacing, counts);
    let total: usize = counts.iter().take(dim).product();
    out_v.resize(total, 0.0);
    out_v.copy_from_slice(&plain);
    let mut grads = vec![[0.0f64; 3]; total];
    for axis in 0..dim {
        let mut weighted = coeffs.to_vec();
        if dim == 2 {
            for i0 in 0..n {
                for i1 in 0..n {
                    let k = if axis == 0 { w[i0] } else { w[i1] };
                    weighted[i0 * n + i1] *= Complex64::new(0.0, k);
                }
            }
        } else {
            let mut flat = 0;
            for i0 in 0..n {
                for i1 in 0..n {
                    for i2 in 0..n {
                        let k = match axis {
                            0 => w[i0],
                            1 => w[i1],
                            _ => w[i2],
                        };
                        weighted[flat] *= Complex64::new(0.0, k);
                        flat += 1;
                    }
                }
            }
        }
        let g = eval_lattice(grid, &weighted, origin, spacing, counts);
        for (dst, src) in grads.iter_mut().zip(g) {
            dst[axis] = src;
        }
    }
    out_g.extend(grads);
    (out_v, out_g)
}
