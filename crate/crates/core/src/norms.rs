//! Mixed space-time Lebesgue and weak norms (quasi-norms for p < 1), the
//! three scale lines, the dissipation-based pivot budget, level-set measures,
//! and the higher-derivative inequality evaluator.
//!
//! Time quadrature is trapezoidal on the snapshot grid; spatial regions are
//! axis-aligned boxes (periodic wrap allowed) measured by node counting.

use crate::error::Error;
use crate::field::{Grid, MultiIndex, ScalarField, VectorField};
use crate::ops;
use crate::quad;
use crate::solver::{compute_pressure, Trajectory};
use crate::Result;

/// Positive Lebesgue exponent or infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub fn finite(p: f64) -> Result<Exponent> {
        if !(p > 0.0) || !p.is_finite() {
            return Err(Error::InvalidExponent(format!("exponent must be positive, got {p}")));
        }
        Ok(Exponent::Finite(p))
    }
}

/// Axis-aligned space-time box. Spatial intervals are half-open `[lo, hi)`;
/// an interval with `hi <= lo` wraps through the period.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub t_lo: f64,
    pub t_hi: f64,
    pub x_lo: [f64; 3],
    pub x_hi: [f64; 3],
}

impl Region {
    pub fn new(t_lo: f64, t_hi: f64, x_lo: [f64; 3], x_hi: [f64; 3]) -> Region {
        Region { t_lo, t_hi, x_lo, x_hi }
    }

    /// Full spatial torus over a time interval.
    pub fn full_box(grid: &Grid, t_lo: f64, t_hi: f64) -> Region {
        let l = grid.box_length();
        Region { t_lo, t_hi, x_lo: [0.0; 3], x_hi: [l; 3] }
    }

    pub fn contains_spatial(&self, grid: &Grid, p: &[f64]) -> bool {
        for axis in 0..grid.dim() {
            let x = p[axis].rem_euclid(grid.box_length());
            let lo = self.x_lo[axis].rem_euclid(grid.box_length());
            let mut hi = self.x_hi[axis];
            // treat hi == L as the full period endpoint
            if (hi - self.x_lo[axis] - grid.box_length()).abs() < 1e-12 {
                continue;
            }
            hi = hi.rem_euclid(grid.box_length());
            let inside = if lo < hi { x >= lo && x < hi } else { x >= lo || x < hi };
            if !inside {
                return false;
            }
        }
        true
    }

    pub fn node_mask(&self, grid: &Grid) -> Vec<bool> {
        (0..grid.cells())
            .map(|i| self.contains_spatial(grid, &grid.node(i)))
            .collect()
    }

    /// Spatial measure by node counting (exact for grid-aligned boxes).
    pub fn spatial_measure(&self, grid: &Grid) -> f64 {
        self.node_mask(grid).iter().filter(|&&b| b).count() as f64 * grid.cell_volume()
    }

    /// Indices and trapezoid weights of the stored times inside the window.
    pub fn select_times(&self, traj: &Trajectory) -> Result<(Vec<usize>, Vec<f64>)> {
        let eps = 1e-12 * traj.times().last().unwrap().abs().max(1.0);
        let idx: Vec<usize> = traj
            .times()
            .iter()
            .enumerate()
            .filter(|(_, &t)| t >= self.t_lo - eps && t <= self.t_hi + eps)
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            return Err(Error::WindowOutOfRange(format!(
                "no snapshots in [{}, {}]",
                self.t_lo, self.t_hi
            )));
        }
        let times: Vec<f64> = idx.iter().map(|&i| traj.time(i)).collect();
        Ok((idx, quad::trapezoid_weights(&times)))
    }

    /// Compact label for report rows.
    pub fn label(&self, dim: usize) -> String {
        let mut s = format!("t[{:.6},{:.6}]", self.t_lo, self.t_hi);
        for a in 0..dim {
            s.push_str(&format!("x{}[{:.6},{:.6}]", a, self.x_lo[a], self.x_hi[a]));
        }
        s
    }
}

/// Derivative request: full gradient tensor of integer order, or a fractional
/// Laplacian power applied componentwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DerivOrder {
    Gradient(u32),
    Fractional(f64),
}

/// A (derivative, time exponent, space exponent, region) norm request.
#[derive(Debug, Clone)]
pub struct NormSpec {
    pub order: DerivOrder,
    pub p_t: Exponent,
    pub q_x: Exponent,
    pub region: Region,
}

// ---------------------------------------------------------------------------
// Elementary norms
// ---------------------------------------------------------------------------

/// `(sum |f|^p * cell)^{1/p}` (a quasi-norm when p < 1), or max for p = inf.
pub fn lebesgue_norm(values: &[f64], cell_measure: f64, p: Exponent) -> f64 {
    match p {
        Exponent::Infinity => values.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        Exponent::Finite(p) => {
            let sum: f64 = values.iter().map(|v| v.abs().powf(p)).sum();
            (sum * cell_measure).powf(1.0 / p)
        }
    }
}

/// Weak-Lp functional: `max over sampled levels v of v |{|f| >= v}|^{1/p}`,
/// levels being the distinct sample magnitudes. Exact for simple functions.
pub fn weak_norm(values: &[f64], cell_measure: f64, p: f64) -> f64 {
    let mut mags: Vec<f64> = values.iter().map(|v| v.abs()).filter(|&v| v > 0.0).collect();
    if mags.is_empty() {
        return 0.0;
    }
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut best = 0.0f64;
    let mut count = 0usize;
    let mut i = 0;
    while i < mags.len() {
        let v = mags[i];
        while i < mags.len() && mags[i] == v {
            count += 1;
            i += 1;
        }
        best = best.max(v * (count as f64 * cell_measure).powf(1.0 / p));
    }
    best
}

/// Space-time measure of `{|f| >= lambda}` within the spatial region mask.
pub fn level_set_measure(f: &ScalarField, lambda: f64, mask: Option<&[bool]>) -> f64 {
    let cell = f.grid().cell_volume();
    f.samples()
        .iter()
        .enumerate()
        .filter(|(i, v)| v.abs() >= lambda && mask.map_or(true, |m| m[*i]))
        .count() as f64
        * cell
}

/// Reconstruct `||f||_p^p` from level-set measures on a geometric ladder of
/// ratio `r` (the from-local-to-global summation device). Levels use the
/// geometric midpoint of each rung, so the relative error is O(r^{p/2} - 1).
pub fn lp_from_level_sets(f: &ScalarField, p: f64, ratio: f64) -> f64 {
    assert!(ratio > 1.0);
    let max = f.sup_norm();
    if max == 0.0 {
        return 0.0;
    }
    let min_pos = f
        .samples()
        .iter()
        .map(|v| v.abs())
        .filter(|&v| v > 0.0)
        .fold(f64::INFINITY, f64::min);
    let mut levels = vec![min_pos / ratio];
    while *levels.last().unwrap() <= max {
        let next = levels.last().unwrap() * ratio;
        levels.push(next);
    }
    let measures: Vec<f64> = levels.iter().map(|&l| level_set_measure(f, l, None)).collect();
    let mut total = 0.0;
    for k in 0..levels.len() - 1 {
        let drop = measures[k] - measures[k + 1];
        let mid = (levels[k] * levels[k + 1]).sqrt();
        total += mid.powf(p) * drop;
    }
    total
}

// ---------------------------------------------------------------------------
// Pointwise magnitude fields
// ---------------------------------------------------------------------------

/// Pointwise `|grad u|^2`.
pub fn grad_sq_field(u: &VectorField) -> ScalarField {
    let grid = *u.grid();
    let dim = grid.dim();
    let mut acc = vec![0.0; grid.cells()];
    for c in u.components() {
        for axis in 0..dim {
            let mut orders = [0u32; 3];
            orders[axis] = 1;
            let d = c.derivative(&MultiIndex::new(&orders).unwrap());
            for (o, v) in acc.iter_mut().zip(d.samples()) {
                *o += v * v;
            }
        }
    }
    ScalarField::from_samples(grid, acc)
}

/// Pointwise Frobenius magnitude of the full order-n derivative tensor,
/// `sqrt(sum over orderings and components of (d^m u_c)^2)`.
pub fn deriv_tensor_magnitude(u: &VectorField, n: u32) -> ScalarField {
    let grid = *u.grid();
    if n == 0 {
        return u.modulus();
    }
    let mut acc = vec![0.0; grid.cells()];
    for m in MultiIndex::all_of_order(grid.dim(), n) {
        let weight = m.multinomial();
        for c in u.components() {
            let d = c.derivative(&m);
            for (o, v) in acc.iter_mut().zip(d.samples()) {
                *o += weight * v * v;
            }
        }
    }
    ScalarField::from_samples(grid, acc.into_iter().map(f64::sqrt).collect())
}

/// Pointwise magnitude of `(-Delta)^{d/2} u` applied componentwise.
pub fn fractional_magnitude(u: &VectorField, d: f64) -> Result<ScalarField> {
    let grid = *u.grid();
    let mut acc = vec![0.0; grid.cells()];
    for c in u.components() {
        let g = ops::fractional_laplacian(c, d / 2.0)?;
        for (o, v) in acc.iter_mut().zip(g.samples()) {
            *o += v * v;
        }
    }
    Ok(ScalarField::from_samples(grid, acc.into_iter().map(f64::sqrt).collect()))
}

fn magnitude_field(u: &VectorField, order: &DerivOrder) -> Result<ScalarField> {
    match order {
        DerivOrder::Gradient(n) => Ok(deriv_tensor_magnitude(u, *n)),
        DerivOrder::Fractional(d) => fractional_magnitude(u, *d),
    }
}

// ---------------------------------------------------------------------------
// Trajectory norms
// ---------------------------------------------------------------------------

/// `L^{p_t}` in time of the spatial `L^{q_x}` norms of the requested
/// derivative magnitude, restricted to the region.
pub fn mixed_norm(traj: &Trajectory, spec: &NormSpec) -> Result<f64> {
    let grid = traj.grid();
    let (idx, w) = spec.region.select_times(traj)?;
    let mask = spec.region.node_mask(grid);
    let cell = grid.cell_volume();
    let spatial: Vec<f64> = idx
        .iter()
        .map(|&i| {
            let mag = magnitude_field(traj.snapshot(i), &spec.order)?;
            let vals: Vec<f64> = mag
                .samples()
                .iter()
                .zip(&mask)
                .filter(|(_, &m)| m)
                .map(|(v, _)| *v)
                .collect();
            Ok(lebesgue_norm(&vals, cell, spec.q_x))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(match spec.p_t {
        Exponent::Infinity => spatial.iter().fold(0.0f64, |m, v| m.max(*v)),
        Exponent::Finite(p) => {
            let sum: f64 = spatial.iter().zip(&w).map(|(g, w)| w * g.powf(p)).sum();
            sum.powf(1.0 / p)
        }
    })
}

/// Space-time integral of a per-snapshot scalar field over a region
/// (trapezoid in time, node counting in space).
pub fn spacetime_integral(
    traj: &Trajectory,
    region: &Region,
    mut integrand: impl FnMut(&VectorField) -> Result<ScalarField>,
) -> Result<f64> {
    let grid = traj.grid();
    let (idx, w) = region.select_times(traj)?;
    let mask = region.node_mask(grid);
    let cell = grid.cell_volume();
    let mut total = 0.0;
    for (&i, &wt) in idx.iter().zip(&w) {
        let f = integrand(traj.snapshot(i))?;
        let spatial: f64 = f
            .samples()
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|(v, _)| *v)
            .sum::<f64>()
            * cell;
        total += wt * spatial;
    }
    Ok(total)
}

/// Dissipation `D(u) = int int |grad u|^2` over a region.
pub fn dissipation_region(traj: &Trajectory, region: &Region) -> Result<f64> {
    spacetime_integral(traj, region, |u| Ok(grad_sq_field(u)))
}

/// Dissipation over the whole stored trajectory.
pub fn dissipation(traj: &Trajectory) -> f64 {
    let region = Region::full_box(traj.grid(), traj.time(0), *traj.times().last().unwrap());
    dissipation_region(traj, &region).unwrap()
}

/// Energy-scale quantity `F(u) = int int |u|^{10/3}` over a region.
pub fn f_norm_region(traj: &Trajectory, region: &Region) -> Result<f64> {
    spacetime_integral(traj, region, |u| {
        let m = u.modulus();
        Ok(ScalarField::from_samples(
            *u.grid(),
            m.samples().iter().map(|v| v.abs().powf(10.0 / 3.0)).collect(),
        ))
    })
}

pub fn f_norm(traj: &Trajectory) -> f64 {
    let region = Region::full_box(traj.grid(), traj.time(0), *traj.times().last().unwrap());
    f_norm_region(traj, &region).unwrap()
}

/// `int int |grad^n u|^p` over a region (the nonlinear-family quantity).
pub fn grad_norm_p_region(traj: &Trajectory, region: &Region, n: u32, p: f64) -> Result<f64> {
    spacetime_integral(traj, region, |u| {
        let m = deriv_tensor_magnitude(u, n);
        Ok(ScalarField::from_samples(
            *u.grid(),
            m.samples().iter().map(|v| v.abs().powf(p)).collect(),
        ))
    })
}

/// `int int |(-Delta)^{d/2} u|^p` over a region (energy-scale family).
pub fn energy_family_region(traj: &Trajectory, region: &Region, d: f64, p: f64) -> Result<f64> {
    spacetime_integral(traj, region, |u| {
        let m = fractional_magnitude(u, d)?;
        Ok(ScalarField::from_samples(
            *u.grid(),
            m.samples().iter().map(|v| v.abs().powf(p)).collect(),
        ))
    })
}

// ---------------------------------------------------------------------------
// Scale classification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleLabel {
    Energy,
    Critical,
    NonlinearAdmissible,
    NonlinearLimit,
    None,
}

#[derive(Debug, Clone, Copy)]
pub struct ScaleClass {
    pub label: ScaleLabel,
    /// `4/p - (d + 1)`: positive strictly inside the nonlinear family.
    pub slack: f64,
}

/// Classify a (derivative order, exponent) pair against the three scale
/// lines `5/p = d + 3/2` (energy), `5/p = d + 1` (critical) and the
/// nonlinear family `4/p > d + 1`. Exact on rational inputs up to f64
/// arithmetic; the `p = infinity` endpoint (d = -1 on the critical line)
/// is outside numeric scope.
pub fn scale_classify(d: f64, p: f64) -> Result<ScaleClass> {
    if !(p > 0.0) {
        return Err(Error::InvalidExponent(format!("p must be positive, got {p}")));
    }
    let tol = 1e-12;
    let slack = 4.0 / p - (d + 1.0);
    let label = if (5.0 / p - (d + 1.5)).abs() <= tol {
        ScaleLabel::Energy
    } else if (5.0 / p - (d + 1.0)).abs() <= tol {
        ScaleLabel::Critical
    } else if slack.abs() <= tol {
        ScaleLabel::NonlinearLimit
    } else if slack > 0.0 {
        ScaleLabel::NonlinearAdmissible
    } else {
        ScaleLabel::None
    };
    Ok(ScaleClass { label, slack })
}

// ---------------------------------------------------------------------------
// Pivot budget
// ---------------------------------------------------------------------------

/// The three global integrals of the dissipation-based pivot quantity with
/// the derived exponents `delta = 5s/(1+4s)`, `gamma = s/(1+3s)`.
#[derive(Debug, Clone, Copy)]
pub struct PivotBudget {
    pub s: f64,
    pub delta: f64,
    pub gamma: f64,
    /// `int int |grad u|^2`.
    pub i_grad: f64,
    /// `int int |grad^2 P|` (Frobenius magnitude, L1).
    pub i_hess_p: f64,
    /// `int int |M((-Delta)^{-delta/2} grad^2 P)|^{1+gamma}`.
    pub i_max_frac: f64,
    /// Reference `||u0||^2 + ||u0||^{2(1+gamma)}`.
    pub rhs: f64,
    /// `(i_grad + i_hess_p + i_max_frac) / rhs`.
    pub ratio: f64,
}

pub fn pivot_exponents(s: f64) -> Result<(f64, f64)> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::ScaleParam(format!("s must lie in (0,1), got {s}")));
    }
    Ok((5.0 * s / (1.0 + 4.0 * s), s / (1.0 + 3.0 * s)))
}

/// Hessian of a scalar field as `dim*dim` row-major component fields, with
/// an optional extra negative fractional power `|k|^{-2 sigma}`.
pub fn hessian_fields(p: &ScalarField, sigma: f64) -> Vec<ScalarField> {
    let grid = *p.grid();
    let dim = grid.dim();
    let n2 = grid.n() as i64 / 2;
    let mut out = Vec::with_capacity(dim * dim);
    for a in 0..dim {
        for b in 0..dim {
            let f = p.real_multiplier(|m, k| {
                if m[a] == -n2 || m[b] == -n2 {
                    return 0.0;
                }
                let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
                if k2 == 0.0 {
                    return 0.0;
                }
                -k[a] * k[b] * k2.powf(-sigma)
            });
            out.push(f);
        }
    }
    out
}

/// Pointwise Frobenius magnitude of a row-major matrix of fields.
pub fn matrix_magnitude(grid: &Grid, m: &[ScalarField]) -> ScalarField {
    let mut acc = vec![0.0; grid.cells()];
    for f in m {
        for (o, v) in acc.iter_mut().zip(f.samples()) {
            *o += v * v;
        }
    }
    ScalarField::from_samples(*grid, acc.into_iter().map(f64::sqrt).collect())
}

/// The integrand `F^delta = |M((-Delta)^{-delta/2} grad^2 P)|^{1+gamma}
/// + |grad u|^2 + |grad^2 P|` of the pivot/tube machinery, per snapshot.
pub fn pivot_integrand(u: &VectorField, delta: f64, gamma: f64, ladder: &ops::RadiiLadder) -> Result<ScalarField> {
    let grid = *u.grid();
    let p = compute_pressure(u);
    let g2 = grad_sq_field(u);
    let hess = hessian_fields(&p, 0.0);
    let hmod = matrix_magnitude(&grid, &hess);
    let smooth = hessian_fields(&p, delta / 2.0);
    let smod = matrix_magnitude(&grid, &smooth);
    let m = ops::maximal_function(&smod, ladder)?;
    let samples: Vec<f64> = (0..grid.cells())
        .map(|i| m.samples()[i].powf(1.0 + gamma) + g2.samples()[i] + hmod.samples()[i])
        .collect();
    Ok(ScalarField::from_samples(grid, samples))
}

/// Assemble the pivot budget of a trajectory at parameter `s`.
pub fn pivot_budget(traj: &Trajectory, s: f64) -> Result<PivotBudget> {
    let (delta, gamma) = pivot_exponents(s)?;
    let grid = traj.grid();
    let ladder = ops::RadiiLadder::for_grid(grid);
    let cell = grid.cell_volume();
    let w = quad::trapezoid_weights(traj.times());
    let mut i_grad = 0.0;
    let mut i_hess = 0.0;
    let mut i_max = 0.0;
    for (i, u) in traj.snapshots().iter().enumerate() {
        i_grad += w[i] * u.grad_sq();
        let p = compute_pressure(u);
        let hess = hessian_fields(&p, 0.0);
        let hmod = matrix_magnitude(grid, &hess);
        i_hess += w[i] * hmod.samples().iter().sum::<f64>() * cell;
        let smooth = hessian_fields(&p, delta / 2.0);
        let smod = matrix_magnitude(grid, &smooth);
        let m = ops::maximal_function(&smod, &ladder)?;
        i_max += w[i]
            * m.samples().iter().map(|v| v.powf(1.0 + gamma)).sum::<f64>()
            * cell;
    }
    let e0 = traj.initial_energy();
    let rhs = e0 + e0.powf(1.0 + gamma);
    let total = i_grad + i_hess + i_max;
    Ok(PivotBudget {
        s,
        delta,
        gamma,
        i_grad,
        i_hess_p: i_hess,
        i_max_frac: i_max,
        rhs,
        ratio: if rhs > 0.0 { total / rhs } else { 0.0 },
    })
}

// ---------------------------------------------------------------------------
// Higher-derivative bound probe
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct DerivativeBoundGap {
    /// Joint space-time `L^p` norm of `|grad^n u|` over the region.
    pub lhs: f64,
    /// `||u0||^{2(1+gamma)/p} + 1`.
    pub rhs_ref: f64,
    /// Empirical constant `lhs / rhs_ref`.
    pub ratio: f64,
    /// `4/p > n + 1` strictly (boundary excluded).
    pub admissible: bool,
}

pub fn derivative_bound_gap(
    traj: &Trajectory,
    n: u32,
    p: f64,
    gamma: f64,
    region: &Region,
) -> Result<DerivativeBoundGap> {
    if !(p > 0.0) {
        return Err(Error::InvalidExponent(format!("p must be positive, got {p}")));
    }
    let lhs_pow = grad_norm_p_region(traj, region, n, p)?;
    let lhs = lhs_pow.powf(1.0 / p);
    let u0_l2 = traj.initial_energy().sqrt();
    let rhs_ref = u0_l2.powf(2.0 * (1.0 + gamma) / p) + 1.0;
    Ok(DerivativeBoundGap {
        lhs,
        rhs_ref,
        ratio: lhs / rhs_ref,
        admissible: 4.0 / p > n as f64 + 1.0 + 1e-12,
    })
}

// ---------------------------------------------------------------------------
// Local L1 control probe
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct LocalL1Check {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Probe of the local-L1-by-maximal-function control: `||f||_{L1(B1)}` vs
/// `|int f phi| + ||M((-Delta)^{-s} grad f)||_{Lp(B1)}` with the unit ball at
/// the box center.
pub fn local_l1_control_check(
    f: &ScalarField,
    s: f64,
    p: f64,
    bump: &ops::Mollifier,
) -> Result<LocalL1Check> {
    if !(s > 0.0 && s < 0.5) {
        return Err(Error::ScaleParam(format!("s must lie in (0, 1/2), got {s}")));
    }
    let grid = *f.grid();
    let zf = f.zero_mean();
    let center: Vec<f64> = vec![grid.box_length() / 2.0; grid.dim()];
    let mask = ops::ball_mask(&grid, &center, 1.0);
    let cell = grid.cell_volume();
    let lhs: f64 = zf
        .samples()
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|(v, _)| v.abs())
        .sum::<f64>()
        * cell;
    let mean_term = bump.convolve_at(&grid, zf.spectral(), &center, 1.0).abs();
    let g = ops::fractional_gradient(&zf, s)?;
    let gmod = matrix_magnitude(&grid, &g);
    let ladder = ops::RadiiLadder::for_grid(&grid);
    let m = ops::maximal_function(&gmod, &ladder)?;
    let vals: Vec<f64> = m
        .samples()
        .iter()
        .zip(&mask)
        .filter(|(_, &ma)| ma)
        .map(|(v, _)| *v)
        .collect();
    let max_term = lebesgue_norm(&vals, cell, Exponent::finite(p)?);
    let rhs = mean_term + max_term;
    Ok(LocalL1Check { lhs, rhs, ratio: if rhs > 0.0 { lhs / rhs } else { 0.0 } })
}

// ---------------------------------------------------------------------------
// Report rows (CSV schema shared with the CLI)
// ---------------------------------------------------------------------------

pub const CSV_HEADER: &str = "quantity,n,p,q,s,delta,gamma,region,value,ratio,admissible";

/// Round-trip-exact decimal rendering (17 significant digits).
pub fn format_real(x: f64) -> String {
    format!("{:.16e}", x)
}

#[derive(Debug, Clone, Default)]
pub struct ReportRow {
    pub quantity: String,
    pub n: Option<f64>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub s: Option<f64>,
    pub delta: Option<f64>,
    pub gamma: Option<f64>,
    pub region: Option<String>,
    pub value: Option<f64>,
    pub ratio: Option<f64>,
    pub admissible: Option<bool>,
}

impl ReportRow {
    pub fn named(quantity: &str) -> ReportRow {
        ReportRow { quantity: quantity.to_string(), ..Default::default() }
    }

    pub fn csv_line(&self) -> String {
        let opt = |v: &Option<f64>| v.map(format_real).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.quantity,
            opt(&self.n),
            opt(&self.p),
            opt(&self.q),
            opt(&self.s),
            opt(&self.delta),
            opt(&self.gamma),
            self.region.clone().unwrap_or_default(),
            opt(&self.value),
            opt(&self.ratio),
            self.admissible.map(|b| b.to_string()).unwrap_or_default(),
        )
    }
}
