//! Lagrangian blow-up frames: the mollified-velocity flow map, backward
//! tube averages of the pivot integrand, the good-set membership test and
//! complement-measure estimate, the local rescaled pair `(v_eps, P_eps)` on
//! `Q_2`, the local smallness criterion, and the derivative-at-base-point
//! identity.
//!
//! Normalization conventions (fixed once here):
//! * `tube_average` is the `(2 eps)^{-5}`-normalized moving average: the
//!   time average over the window `4 eps^2` of the exact ball average at
//!   radius `2 eps`, so a space-time-constant integrand `c` averages to `c`;
//! * good-set membership compares the `1/eps`-prefactored tube integral
//!   `32 eps^4 x tube_average` (the conversion factor `(2 eps)^5 / eps`)
//!   against `eta* eps^delta`;
//! * the change-of-variables identity is checked with true ball volumes on
//!   both sides.

use crate::error::Error;
use crate::field::{Grid, ScalarField};
use crate::norms;
use crate::ops::{self, Mollifier, RadiiLadder};
use crate::quad;
use crate::solver::{compute_pressure, time_derivative, Trajectory};
use crate::spectrum::CompactCoeffs;
use crate::Result;
use num_complex::Complex64;
use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

/// RK4 steps per backward window (step `h = eps^2 / 8`).
const FLOW_STEPS: usize = 32;

/// Backward characteristic of the mollified velocity from a base point.
#[derive(Debug, Clone)]
pub struct FlowPath {
    pub epsilon: f64,
    pub base_time: f64,
    pub base_point: Vec<f64>,
    /// Increasing times spanning `[t - 4 eps^2, t]`.
    pub times: Vec<f64>,
    /// Unfolded positions aligned with `times`; `positions.last() == base`.
    pub positions: Vec<Vec<f64>>,
    /// Flow-gradient determinant estimates (filled by the jacobian variant).
    pub jacobian_dets: Vec<f64>,
}

impl FlowPath {
    /// Cubic interpolation of the path position at time `s`.
    pub fn position_at(&self, s: f64) -> Vec<f64> {
        let times = &self.times;
        let n = times.len();
        let h = times[1] - times[0];
        let mut j = (((s - times[0]) / h).floor() as i64).clamp(0, n as i64 - 2) as usize;
        // shift the 4-node window inside the array
        j = j.saturating_sub(1).min(n - 4);
        let nodes = [times[j], times[j + 1], times[j + 2], times[j + 3]];
        let w = quad::cubic_weights(&nodes, s);
        let dim = self.base_point.len();
        let mut out = vec![0.0; dim];
        for (wi, pos) in w.iter().zip(&self.positions[j..j + 4]) {
            for a in 0..dim {
                out[a] += wi * pos[a];
            }
        }
        out
    }
}

/// Good-set parameters: membership threshold `eta* eps^delta`.
#[derive(Debug, Clone, Copy)]
pub struct GoodSetParams {
    pub delta: f64,
    pub eta_star: f64,
    pub epsilon: f64,
    pub gamma: f64,
}

/// `1/eps` times the paper-scaled tube integral, from the normalized tube
/// average: `(2 eps)^5 / eps = 32 eps^4`.
pub fn tube_scaled_integral(epsilon: f64, tube_average: f64) -> f64 {
    32.0 * epsilon.powi(4) * tube_average
}

/// Membership test given a precomputed tube average.
pub fn is_good(params: &GoodSetParams, tube_average: f64) -> bool {
    tube_scaled_integral(params.epsilon, tube_average)
        <= params.eta_star * params.epsilon.powf(params.delta)
}

/// Integrand components cached per snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Kind {
    /// `|grad u|^2`
    GradSq,
    /// `|grad^2 P|` (Frobenius)
    HessMod,
    /// `|M((-Delta)^{-delta/2} grad^2 P)|^{1+gamma}`
    MaxFrac,
    /// Sum of the three (the tube integrand `F^delta`)
    Pivot,
}

/// Measured complement of the good set over a base-point lattice.
#[derive(Debug, Clone, Copy)]
pub struct GoodSetMeasure {
    pub epsilon: f64,
    pub total_points: usize,
    pub bad_points: usize,
    /// Bad fraction times the sampled box measure.
    pub measured: f64,
    /// `measured / (eps^{4-delta} (E0 + E0^{1+gamma}) / eta*)`.
    pub bound_ratio: f64,
    pub box_measure: f64,
}

/// Base-point lattice: times (snapshot-aligned) times a uniform spatial grid.
#[derive(Debug, Clone)]
pub struct ScanLattice {
    pub t_samples: Vec<f64>,
    pub x_per_axis: usize,
}

impl ScanLattice {
    pub fn points(&self, grid: &Grid) -> Vec<Vec<f64>> {
        let h = grid.box_length() / self.x_per_axis as f64;
        let mut out = Vec::new();
        let m = self.x_per_axis;
        if grid.dim() == 2 {
            for a in 0..m {
                for b in 0..m {
                    out.push(vec![a as f64 * h, b as f64 * h]);
                }
            }
        } else {
            for a in 0..m {
                for b in 0..m {
                    for c in 0..m {
                        out.push(vec![a as f64 * h, b as f64 * h, c as f64 * h]);
                    }
                }
            }
        }
        out
    }
}

/// Local frame data: the rescaled pair sampled on a `(s, y)` lattice over
/// `Q_2 = (-4, 0) x B_2` in frame variables.
#[derive(Debug, Clone)]
pub struct FlowFrame {
    pub epsilon: f64,
    pub delta: f64,
    pub gamma: f64,
    pub base_time: f64,
    pub base_point: Vec<f64>,
    pub path: FlowPath,
    /// Frame times in `[-4, 0]`, increasing.
    pub s_times: Vec<f64>,
    /// Lattice points per axis spanning `[-2, 2]`.
    pub y_per_axis: usize,
    /// `v_eps` samples, layout `[slice][y_flat][component]`.
    pub v: Vec<f64>,
    /// `P_eps` samples, layout `[slice][y_flat]`.
    pub p: Vec<f64>,
    /// Norm of the mollified frame mean `int phi v_eps dy` per slice
    /// (the zero-mean identity residual).
    pub phi_mean_residual: Vec<f64>,
    /// Normalized tube average of the pivot integrand along the path.
    pub tube_avg: f64,
    pub good: bool,
}

impl FlowFrame {
    pub fn y_spacing(&self) -> f64 {
        4.0 / (self.y_per_axis - 1) as f64
    }

    pub fn y_coord(&self, flat: usize, dim: usize) -> Vec<f64> {
        let m = self.y_per_axis;
        let h = self.y_spacing();
        let mut rem = flat;
        let mut idx = vec![0usize; dim];
        for a in (0..dim).rev() {
            idx[a] = rem % m;
            rem /= m;
        }
        idx.iter().map(|&i| -2.0 + i as f64 * h).collect()
    }

    pub fn y_count(&self, dim: usize) -> usize {
        self.y_per_axis.pow(dim as u32)
    }

    pub fn v_at(&self, slice: usize, y_flat: usize, comp: usize, dim: usize) -> f64 {
        self.v[(slice * self.y_count(dim) + y_flat) * dim + comp]
    }

    pub fn p_at(&self, slice: usize, y_flat: usize, dim: usize) -> f64 {
        self.p[slice * self.y_count(dim) + y_flat]
    }
}

/// Frame sampling resolution.
#[derive(Debug, Clone, Copy)]
pub struct FrameConfig {
    pub s_slices: usize,
    pub y_per_axis: usize,
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig { s_slices: 17, y_per_axis: 13 }
    }
}

/// Change-of-variables check between frame and tube quadratures, per
/// integrand component (grad, hess, maximal).
#[derive(Debug, Clone, Copy)]
pub struct ChangeOfVarCheck {
    pub frame_terms: [f64; 3],
    pub tube_terms_scaled: [f64; 3],
    pub rel_err: [f64; 3],
}

/// Local smallness report on `Q_1`.
#[derive(Debug, Clone, Copy)]
pub struct SmallnessReport {
    pub sup_l2_b1: f64,
    pub grad_sq_q1: f64,
    pub pressure_lp_q1: f64,
    pub total: f64,
    pub fires: bool,
    pub sup_q_half: f64,
}

/// Derivative-at-base-point identity record.
#[derive(Debug, Clone)]
pub struct DerivAtBase {
    pub local: Vec<f64>,
    pub global: Vec<f64>,
    pub local_norm: f64,
    pub global_norm: f64,
    pub ratio: f64,
    pub expected: f64,
}

type ScalarCache = RefCell<HashMap<(usize, u8), Rc<CompactCoeffs>>>;

/// Per-trajectory operator cache: spectral snapshots, mollified velocities,
/// pressure, pivot-integrand fields and their ball averages, keyed by
/// snapshot index (and width where applicable). Single-threaded by design;
/// construction is cheap, so build one per analysis pass.
pub struct TrajOps<'a> {
    traj: &'a Trajectory,
    pub delta: f64,
    pub gamma: f64,
    moll: Mollifier,
    ladder: RadiiLadder,
    fdelta_override: Option<f64>,
    vel: RefCell<HashMap<usize, Rc<Vec<CompactCoeffs>>>>,
    moll_vel: RefCell<HashMap<(usize, u64), Rc<Vec<CompactCoeffs>>>>,
    rhs_moll: RefCell<HashMap<(usize, u64), Rc<Vec<CompactCoeffs>>>>,
    pressure: RefCell<HashMap<usize, Rc<CompactCoeffs>>>,
    integrand: ScalarCache,
    ball: RefCell<HashMap<(usize, u8, u64), Rc<CompactCoeffs>>>,
}

impl<'a> TrajOps<'a> {
    pub fn new(traj: &'a Trajectory, delta: f64, gamma: f64) -> Result<TrajOps<'a>> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::ScaleParam(format!("delta must lie in (0,1), got {delta}")));
        }
        let moll = Mollifier::new(traj.grid().dim());
        let ladder = RadiiLadder::for_grid(traj.grid());
        Ok(TrajOps {
            traj,
            delta,
            gamma,
            moll,
            ladder,
            fdelta_override: None,
            vel: RefCell::new(HashMap::new()),
            moll_vel: RefCell::new(HashMap::new()),
            rhs_moll: RefCell::new(HashMap::new()),
            pressure: RefCell::new(HashMap::new()),
            integrand: RefCell::new(HashMap::new()),
            ball: RefCell::new(HashMap::new()),
        })
    }

    /// Replace the pivot integrand by the constant `c` (synthetic
    /// normalization checks with an exactly computable answer).
    pub fn with_constant_integrand(mut self, c: f64) -> Self {
        self.fdelta_override = Some(c);
        self
    }

    pub fn trajectory(&self) -> &Trajectory {
        self.traj
    }

    pub fn mollifier(&self) -> &Mollifier {
        &self.moll
    }

    fn grid(&self) -> &Grid {
        self.traj.grid()
    }

    // -- caches ------------------------------------------------------------

    fn vel_spec(&self, i: usize) -> Rc<Vec<CompactCoeffs>> {
        if let Some(hit) = self.vel.borrow().get(&i) {
            return hit.clone();
        }
        let u = self.traj.snapshot(i);
        let grid = self.grid();
        let built: Vec<CompactCoeffs> = u
            .components()
            .iter()
            .map(|c| CompactCoeffs::compact(grid, c.spectral()))
            .collect();
        let rc = Rc::new(built);
        self.vel.borrow_mut().insert(i, rc.clone());
        rc
    }

    fn moll_vel_spec(&self, i: usize, eps: f64) -> Rc<Vec<CompactCoeffs>> {
        let key = (i, eps.to_bits());
        if let Some(hit) = self.moll_vel.borrow().get(&key) {
            return hit.clone();
        }
        let grid = self.grid();
        let mult = self.moll.multiplier(grid, eps);
        let u = self.traj.snapshot(i);
        let built: Vec<CompactCoeffs> = u
            .components()
            .iter()
            .map(|c| {
                let spec: Vec<Complex64> = c
                    .spectral()
                    .iter()
                    .zip(mult.iter())
                    .map(|(v, m)| v * m)
                    .collect();
                CompactCoeffs::compact(grid, &spec)
            })
            .collect();
        let rc = Rc::new(built);
        self.moll_vel.borrow_mut().insert(key, rc.clone());
        rc
    }

    fn rhs_moll_spec(&self, i: usize, eps: f64) -> Rc<Vec<CompactCoeffs>> {
        let key = (i, eps.to_bits());
        if let Some(hit) = self.rhs_moll.borrow().get(&key) {
            return hit.clone();
        }
        let grid = self.grid();
        let mult = self.moll.multiplier(grid, eps);
        let rhs = time_derivative(self.traj.snapshot(i), self.traj.config());
        let built: Vec<CompactCoeffs> = rhs
            .components()
            .iter()
            .map(|c| {
                let spec: Vec<Complex64> = c
                    .spectral()
                    .iter()
                    .zip(mult.iter())
                    .map(|(v, m)| v * m)
                    .collect();
                CompactCoeffs::compact(grid, &spec)
            })
            .collect();
        let rc = Rc::new(built);
        self.rhs_moll.borrow_mut().insert(key, rc.clone());
        rc
    }

    fn pressure_spec(&self, i: usize) -> Rc<CompactCoeffs> {
        if let Some(hit) = self.pressure.borrow().get(&i) {
            return hit.clone();
        }
        let p = compute_pressure(self.traj.snapshot(i));
        let rc = Rc::new(CompactCoeffs::compact(self.grid(), p.spectral()));
        self.pressure.borrow_mut().insert(i, rc.clone());
        rc
    }

    fn integrand_field(&self, i: usize, kind: Kind) -> Result<ScalarField> {
        let grid = *self.grid();
        let u = self.traj.snapshot(i);
        Ok(match kind {
            Kind::GradSq => norms::grad_sq_field(u),
            Kind::HessMod => {
                let p = compute_pressure(u);
                norms::matrix_magnitude(&grid, &norms::hessian_fields(&p, 0.0))
            }
            Kind::MaxFrac => {
                let p = compute_pressure(u);
                let smod =
                    norms::matrix_magnitude(&grid, &norms::hessian_fields(&p, self.delta / 2.0));
                let m = ops::maximal_function(&smod, &self.ladder)?;
                ScalarField::from_samples(
                    grid,
                    m.samples().iter().map(|v| v.powf(1.0 + self.gamma)).collect(),
                )
            }
            Kind::Pivot => {
                if let Some(c) = self.fdelta_override {
                    ScalarField::from_fn(grid, |_| c)
                } else {
                    norms::pivot_integrand(u, self.delta, self.gamma, &self.ladder)?
                }
            }
        })
    }

    fn integrand_spec(&self, i: usize, kind: Kind) -> Result<Rc<CompactCoeffs>> {
        let key = (i, kind_code(kind));
        if let Some(hit) = self.integrand.borrow().get(&key) {
            return Ok(hit.clone());
        }
        let f = self.integrand_field(i, kind)?;
        let rc = Rc::new(CompactCoeffs::full(self.grid(), f.spectral()));
        self.integrand.borrow_mut().insert(key, rc.clone());
        Ok(rc)
    }

    fn ball_spec(&self, i: usize, kind: Kind, radius: f64) -> Result<Rc<CompactCoeffs>> {
        let key = (i, kind_code(kind), radius.to_bits());
        if let Some(hit) = self.ball.borrow().get(&key) {
            return Ok(hit.clone());
        }
        let grid = self.grid();
        let f = self.integrand_field(i, kind)?;
        let mult = ops::ball_average_multiplier_exact(grid, radius);
        let spec: Vec<Complex64> = f
            .spectral()
            .iter()
            .zip(mult.iter())
            .map(|(c, m)| c * m)
            .collect();
        let rc = Rc::new(CompactCoeffs::full(grid, &spec));
        self.ball.borrow_mut().insert(key, rc.clone());
        Ok(rc)
    }

    // -- window bookkeeping ------------------------------------------------

    /// Snapshot subsampling stride honoring `stride * dt <= eps^2 / 4`.
    pub fn flow_stride(&self, eps: f64) -> Result<usize> {
        let dt = self.traj.spacing();
        let bound = eps * eps / 4.0;
        if dt > bound * (1.0 + 1e-9) {
            return Err(Error::InvalidConfig(format!(
                "snapshot spacing {dt} exceeds eps^2/4 = {bound}; store finer snapshots"
            )));
        }
        Ok(((bound / dt) * (1.0 + 1e-9)).floor().max(1.0) as usize)
    }

    /// Increasing subset of snapshot indices covering `[t - 4 eps^2, t]`
    /// with one margin node below (and one above when available).
    fn window_subset(&self, t_idx: usize, eps: f64) -> Result<Vec<usize>> {
        let stride = self.flow_stride(eps)?;
        let t = self.traj.time(t_idx);
        let lo = t - 4.0 * eps * eps;
        let mut idxs: Vec<usize> = Vec::new();
        let mut i = t_idx as i64;
        let mut covered = false;
        while i >= 0 {
            idxs.push(i as usize);
            if self.traj.time(i as usize) < lo - 1e-12 {
                covered = true;
                break;
            }
            i -= stride as i64;
        }
        if !covered {
            return Err(Error::WindowOutOfRange(format!(
                "window [{lo}, {t}] extends before the stored trajectory"
            )));
        }
        idxs.reverse();
        if t_idx + stride < self.traj.len() {
            idxs.push(t_idx + stride);
        }
        if idxs.len() < 4 {
            return Err(Error::WindowOutOfRange("window holds fewer than 4 snapshots".into()));
        }
        Ok(idxs)
    }

    fn base_index(&self, t: f64) -> Result<usize> {
        let i = self.traj.index_at(t)?;
        if (self.traj.time(i) - t).abs() > 1e-9 * self.traj.spacing().max(1e-12) {
            return Err(Error::WindowOutOfRange(format!(
                "base time {t} must coincide with a stored snapshot"
            )));
        }
        Ok(i)
    }

    /// Cubic time combination of per-snapshot vector spectra at time `sigma`.
    fn combined_vec(
        &self,
        idxs: &[usize],
        sigma: f64,
        fetch: &dyn Fn(usize) -> Rc<Vec<CompactCoeffs>>,
    ) -> Vec<CompactCoeffs> {
        let (nodes, w) = self.bracket(idxs, sigma);
        let parts: Vec<Rc<Vec<CompactCoeffs>>> = nodes.iter().map(|&i| fetch(i)).collect();
        let dim = self.grid().dim();
        (0..dim)
            .map(|c| {
                let refs: Vec<(f64, &CompactCoeffs)> =
                    w.iter().zip(&parts).map(|(&wi, p)| (wi, &p[c])).collect();
                CompactCoeffs::combine(&refs)
            })
            .collect()
    }

    fn combined_scalar(
        &self,
        idxs: &[usize],
        sigma: f64,
        fetch: &dyn Fn(usize) -> Result<Rc<CompactCoeffs>>,
    ) -> Result<CompactCoeffs> {
        let (nodes, w) = self.bracket(idxs, sigma);
        let parts: Vec<Rc<CompactCoeffs>> =
            nodes.iter().map(|&i| fetch(i)).collect::<Result<_>>()?;
        let refs: Vec<(f64, &CompactCoeffs)> =
            w.iter().zip(&parts).map(|(&wi, p)| (wi, p.as_ref())).collect();
        Ok(CompactCoeffs::combine(&refs))
    }

    /// Four bracketing subset indices and Lagrange weights for time `sigma`.
    fn bracket(&self, idxs: &[usize], sigma: f64) -> ([usize; 4], [f64; 4]) {
        let times: Vec<f64> = idxs.iter().map(|&i| self.traj.time(i)).collect();
        let n = times.len();
        let mut j = 0;
        while j + 1 < n && times[j + 1] <= sigma + 1e-15 {
            j += 1;
        }
        let start = j.saturating_sub(1).min(n - 4);
        let nodes = [times[start], times[start + 1], times[start + 2], times[start + 3]];
        let w = quad::cubic_weights(&nodes, sigma);
        (
            [idxs[start], idxs[start + 1], idxs[start + 2], idxs[start + 3]],
            w,
        )
    }

    // -- flow integration ---------------------------------------------------

    /// Backward RK4 integration of `dX/ds = u_eps(s, X)` for a batch of base
    /// points sharing one base time (stage velocities are combined once and
    /// evaluated per point).
    pub fn integrate_flows(&self, eps: f64, t: f64, bases: &[Vec<f64>]) -> Result<Vec<FlowPath>> {
        if eps > self.grid().box_length() / 16.0 + 1e-12 {
            return Err(Error::MollifierWidth { epsilon: eps, max: self.grid().box_length() / 16.0 });
        }
        let t_idx = self.base_index(t)?;
        let idxs = self.window_subset(t_idx, eps)?;
        let h = -(eps * eps) / 8.0;
        let fetch = |i: usize| self.moll_vel_spec(i, eps);
        let dim = self.grid().dim();
        let mut positions: Vec<Vec<f64>> = bases.to_vec();
        let mut nodes_t = vec![t];
        let mut nodes_x: Vec<Vec<Vec<f64>>> = vec![positions.clone()];
        let mut s = t;
        // stage fields are shared across all base points
        for _ in 0..FLOW_STEPS {
            let f0 = self.combined_vec(&idxs, s, &fetch);
            let fh = self.combined_vec(&idxs, s + h / 2.0, &fetch);
            let f1 = self.combined_vec(&idxs, s + h, &fetch);
            let eval = |fields: &[CompactCoeffs], p: &[f64]| -> Vec<f64> {
                fields.iter().map(|c| c.view().eval_point(p)).collect()
            };
            for pos in positions.iter_mut() {
                let k1 = eval(&f0, pos);
                let p2: Vec<f64> = (0..dim).map(|a| pos[a] + 0.5 * h * k1[a]).collect();
                let k2 = eval(&fh, &p2);
                let p3: Vec<f64> = (0..dim).map(|a| pos[a] + 0.5 * h * k2[a]).collect();
                let k3 = eval(&fh, &p3);
                let p4: Vec<f64> = (0..dim).map(|a| pos[a] + h * k3[a]).collect();
                let k4 = eval(&f1, &p4);
                for a in 0..dim {
                    pos[a] += h / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
                }
            }
            s += h;
            nodes_t.push(s);
            nodes_x.push(positions.clone());
        }
        nodes_t.reverse();
        nodes_x.reverse();
        Ok(bases
            .iter()
            .enumerate()
            .map(|(b, base)| FlowPath {
                epsilon: eps,
                base_time: t,
                base_point: base.clone(),
                times: nodes_t.clone(),
                positions: nodes_x.iter().map(|slice| slice[b].clone()).collect(),
                jacobian_dets: Vec::new(),
            })
            .collect())
    }

    /// Single-path variant that also estimates the flow-gradient determinant
    /// along the path by finite differences of neighboring paths.
    pub fn integrate_flow_with_jacobian(&self, eps: f64, t: f64, base: &[f64]) -> Result<FlowPath> {
        let dim = self.grid().dim();
        let d = eps / 100.0;
        let mut bases = vec![base.to_vec()];
        for a in 0..dim {
            let mut plus = base.to_vec();
            plus[a] += d;
            let mut minus = base.to_vec();
            minus[a] -= d;
            bases.push(plus);
            bases.push(minus);
        }
        let mut paths = self.integrate_flows(eps, t, &bases)?;
        let main = paths.remove(0);
        let mut dets = Vec::with_capacity(main.times.len());
        for node in 0..main.times.len() {
            // columns d X / d x_a
            let mut j = [[0.0f64; 3]; 3];
            for a in 0..dim {
                let plus = &paths[2 * a].positions[node];
                let minus = &paths[2 * a + 1].positions[node];
                for r in 0..dim {
                    j[r][a] = (plus[r] - minus[r]) / (2.0 * d);
                }
            }
            let det = if dim == 2 {
                j[0][0] * j[1][1] - j[0][1] * j[1][0]
            } else {
                j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1])
                    - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
                    + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0])
            };
            dets.push(det);
        }
        Ok(FlowPath { jacobian_dets: dets, ..main })
    }

    // -- tube averages and the good set -------------------------------------

    /// `(2 eps)^{-5}`-normalized moving tube average of the pivot integrand:
    /// time average over `[t - 4 eps^2, t]` of the exact ball average at
    /// radius `2 eps` along the path (midpoint rule over the snapshot subset).
    pub fn tube_average(&self, path: &FlowPath) -> Result<f64> {
        let eps = path.epsilon;
        let t = path.base_time;
        let lo = t - 4.0 * eps * eps;
        let t_idx = self.base_index(t)?;
        let idxs = self.window_subset(t_idx, eps)?;
        let times: Vec<f64> = idxs.iter().map(|&i| self.traj.time(i)).collect();
        let w = quad::window_weights(&times, lo, t);
        let mut acc = 0.0;
        for ((&i, &ti), &wi) in idxs.iter().zip(&times).zip(&w) {
            if wi == 0.0 {
                continue;
            }
            let ball = self.ball_spec(i, Kind::Pivot, 2.0 * eps)?;
            let pos = path.position_at(ti.clamp(lo, t));
            acc += wi * ball.view().eval_point(&pos);
        }
        Ok(acc / (4.0 * eps * eps))
    }

    /// Good-set membership of a base point.
    pub fn good_set_indicator(&self, params: &GoodSetParams, t: f64, x: &[f64]) -> Result<bool> {
        let path = self
            .integrate_flows(params.epsilon, t, &[x.to_vec()])?
            .remove(0);
        let avg = self.tube_average(&path)?;
        Ok(is_good(params, avg))
    }

    /// Tube averages over a base-point lattice (one flow batch per time).
    pub fn scan_tube_averages(&self, eps: f64, scan: &ScanLattice) -> Result<Vec<f64>> {
        let points = scan.points(self.grid());
        let mut out = Vec::with_capacity(scan.t_samples.len() * points.len());
        for &t in &scan.t_samples {
            let paths = self.integrate_flows(eps, t, &points)?;
            for path in &paths {
                out.push(self.tube_average(path)?);
            }
        }
        Ok(out)
    }

    /// Threshold a precomputed scan into a complement-measure estimate.
    pub fn measure_from_averages(
        &self,
        averages: &[f64],
        params: &GoodSetParams,
        scan: &ScanLattice,
    ) -> GoodSetMeasure {
        let total = averages.len();
        let bad = averages.iter().filter(|&&a| !is_good(params, a)).count();
        let grid = self.grid();
        let t_span = if scan.t_samples.len() > 1 {
            scan.t_samples.last().unwrap() - scan.t_samples.first().unwrap()
        } else {
            self.traj.spacing()
        };
        let box_measure = t_span * grid.box_length().powi(grid.dim() as i32);
        let measured = bad as f64 / total as f64 * box_measure;
        let e0 = self.traj.initial_energy();
        let denom = params.epsilon.powf(4.0 - params.delta)
            * (e0 + e0.powf(1.0 + params.gamma))
            / params.eta_star;
        GoodSetMeasure {
            epsilon: params.epsilon,
            total_points: total,
            bad_points: bad,
            measured,
            bound_ratio: if denom > 0.0 { measured / denom } else { 0.0 },
            box_measure,
        }
    }

    /// Full complement-measure check at one epsilon.
    pub fn complement_measure_check(
        &self,
        params: &GoodSetParams,
        scan: &ScanLattice,
    ) -> Result<GoodSetMeasure> {
        let avgs = self.scan_tube_averages(params.epsilon, scan)?;
        Ok(self.measure_from_averages(&avgs, params, scan))
    }

    // -- local frames --------------------------------------------------------

    /// Build the local rescaled pair on `Q_2` around a base point. The
    /// pressure corrector uses the material-derivative identity
    /// `d/ds u_eps(t + eps^2 s, X) = eps^2 (dt u_eps + (u_eps . grad) u_eps)`.
    pub fn build_local_frame(
        &self,
        eps: f64,
        t: f64,
        x: &[f64],
        fc: &FrameConfig,
    ) -> Result<FlowFrame> {
        self.build_local_frame_with_threshold(eps, t, x, fc, None)
    }

    /// As `build_local_frame`, additionally marking good-set membership
    /// against the given `eta_star`.
    pub fn build_local_frame_with_threshold(
        &self,
        eps: f64,
        t: f64,
        x: &[f64],
        fc: &FrameConfig,
        eta_star: Option<f64>,
    ) -> Result<FlowFrame> {
        let dim = self.grid().dim();
        let t_idx = self.base_index(t)?;
        let idxs = self.window_subset(t_idx, eps)?;
        let path = self.integrate_flows(eps, t, &[x.to_vec()])?.remove(0);
        let tube_avg = self.tube_average(&path)?;
        let s_count = fc.s_slices.max(2);
        let y_m = fc.y_per_axis.max(3);
        let h_y = 4.0 / (y_m - 1) as f64;
        let s_times: Vec<f64> =
            (0..s_count).map(|k| -4.0 + 4.0 * k as f64 / (s_count - 1) as f64).collect();
        let y_total = y_m.pow(dim as u32);
        let mut v = vec![0.0; s_count * y_total * dim];
        let mut p = vec![0.0; s_count * y_total];
        let mut phi_res = vec![0.0; s_count];
        let vel_fetch = |i: usize| self.vel_spec(i);
        let moll_fetch = |i: usize| self.moll_vel_spec(i, eps);
        let rhs_fetch = |i: usize| self.rhs_moll_spec(i, eps);
        for (k, &s) in s_times.iter().enumerate() {
            let sigma = (t + eps * eps * s).clamp(self.traj.time(idxs[0]), t);
            let center = path.position_at(sigma);
            let origin: Vec<f64> = (0..dim).map(|a| center[a] - 2.0 * eps).collect();
            let spacing = vec![eps * h_y; dim];
            let counts = vec![y_m; dim];
            let raw = self.combined_vec(&idxs, sigma, &vel_fetch);
            let moll = self.combined_vec(&idxs, sigma, &moll_fetch);
            // mollified velocity and gradient at the path point
            let mut u_eps = vec![0.0; dim];
            let mut grad_u_eps = vec![[0.0f64; 3]; dim];
            for c in 0..dim {
                let (val, g) = moll[c].view().eval_point_with_grad(&center);
                u_eps[c] = val;
                grad_u_eps[c] = g;
            }
            // v samples
            for c in 0..dim {
                let vals = raw[c].view().eval_lattice(&origin, &spacing, &counts);
                for (j, val) in vals.iter().enumerate() {
                    v[(k * y_total + j) * dim + c] = eps * (val - u_eps[c]);
                }
            }
            // the zero-mean identity: direct stencil sum vs multiplier value
            let mut res2 = 0.0;
            for c in 0..dim {
                let stencil = stencil_sum(&self.moll, &raw[c], &center, eps);
                let r = eps * (stencil - u_eps[c]);
                res2 += r * r;
            }
            phi_res[k] = res2.sqrt();
            // pressure and corrector
            let p_comb = self.combined_scalar(&idxs, sigma, &|i| Ok(self.pressure_spec(i)))?;
            let p_vals = p_comb.view().eval_lattice(&origin, &spacing, &counts);
            let rhs = self.combined_vec(&idxs, sigma, &rhs_fetch);
            let mut accel = vec![0.0; dim];
            for c in 0..dim {
                let dtu = rhs[c].view().eval_point(&center);
                let mut adv = 0.0;
                for a in 0..dim {
                    adv += u_eps[a] * grad_u_eps[c][a];
                }
                accel[c] = eps * eps * (dtu + adv);
            }
            for j in 0..y_total {
                let mut rem = j;
                let mut ycoord = vec![0.0; dim];
                for a in (0..dim).rev() {
                    ycoord[a] = -2.0 + (rem % y_m) as f64 * h_y;
                    rem /= y_m;
                }
                let mut corr = 0.0;
                for a in 0..dim {
                    corr += ycoord[a] * accel[a];
                }
                p[k * y_total + j] = eps * eps * p_vals[j] + eps * corr;
            }
        }
        let good = eta_star
            .map(|eta| {
                let params = GoodSetParams {
                    delta: self.delta,
                    eta_star: eta,
                    epsilon: eps,
                    gamma: self.gamma,
                };
                is_good(&params, tube_avg)
            })
            .unwrap_or(false);
        Ok(FlowFrame {
            epsilon: eps,
            delta: self.delta,
            gamma: self.gamma,
            base_time: t,
            base_point: x.to_vec(),
            path,
            s_times,
            y_per_axis: y_m,
            v,
            p,
            phi_mean_residual: phi_res,
            tube_avg,
            good,
        })
    }

    /// Change-of-variables identity between the `Q_2` frame quadrature of the
    /// scaled integrands and the lab-frame tube integrals (true ball volumes
    /// on both sides).
    pub fn frame_tube_identity(&self, frame: &FlowFrame) -> Result<ChangeOfVarCheck> {
        let dim = self.grid().dim();
        let eps = frame.epsilon;
        let t = frame.base_time;
        let t_idx = self.base_index(t)?;
        let idxs = self.window_subset(t_idx, eps)?;
        let kinds = [Kind::GradSq, Kind::HessMod, Kind::MaxFrac];
        let powers = [4.0, 4.0, (4.0 - self.delta) * (1.0 + self.gamma)];
        // frame side: trapezoid in s, cell-overlap ball quadrature in y
        let y_m = frame.y_per_axis;
        let h_y = frame.y_spacing();
        let ball_w = ball_quadrature_weights(y_m, dim, 2.0);
        let sw = quad::trapezoid_weights(&frame.s_times);
        let mut frame_terms = [0.0f64; 3];
        for (k, &s) in frame.s_times.iter().enumerate() {
            let sigma = (t + eps * eps * s).clamp(self.traj.time(idxs[0]), t);
            let center = frame.path.position_at(sigma);
            let origin: Vec<f64> = (0..dim).map(|a| center[a] - 2.0 * eps).collect();
            let spacing = vec![eps * h_y; dim];
            let counts = vec![y_m; dim];
            for (ki, &kind) in kinds.iter().enumerate() {
                let comb = self.combined_scalar(&idxs, sigma, &|i| self.integrand_spec(i, kind))?;
                let vals = comb.view().eval_lattice(&origin, &spacing, &counts);
                let sum: f64 = vals.iter().zip(&ball_w).map(|(v, w)| v * w).sum();
                frame_terms[ki] += sw[k] * eps.powf(powers[ki]) * sum;
            }
        }
        // tube side: midpoint in time, exact ball average x true ball volume
        let lo = t - 4.0 * eps * eps;
        let times: Vec<f64> = idxs.iter().map(|&i| self.traj.time(i)).collect();
        let w = quad::window_weights(&times, lo, t);
        let vball = if dim == 3 {
            4.0 / 3.0 * std::f64::consts::PI * (2.0 * eps).powi(3)
        } else {
            std::f64::consts::PI * (2.0 * eps).powi(2)
        };
        let mut tube_terms = [0.0f64; 3];
        for ((&i, &ti), &wi) in idxs.iter().zip(&times).zip(&w) {
            if wi == 0.0 {
                continue;
            }
            let pos = frame.path.position_at(ti.clamp(lo, t));
            for (ki, &kind) in kinds.iter().enumerate() {
                let ball = self.ball_spec(i, kind, 2.0 * eps)?;
                tube_terms[ki] += wi * vball * ball.view().eval_point(&pos);
            }
        }
        // change of variables: frame integral of eps^p F = eps^{p-5} tube
        let mut scaled = [0.0f64; 3];
        let mut rel = [0.0f64; 3];
        for ki in 0..3 {
            scaled[ki] = tube_terms[ki] * eps.powf(powers[ki] - 5.0);
            let denom = scaled[ki].abs().max(1e-300);
            rel[ki] = (frame_terms[ki] - scaled[ki]).abs() / denom;
        }
        Ok(ChangeOfVarCheck { frame_terms, tube_terms_scaled: scaled, rel_err: rel })
    }

    /// Local smallness terms on `Q_1` and the pointwise-boundedness report.
    pub fn local_smallness_criterion(&self, frame: &FlowFrame, p: f64, eta: f64) -> Result<SmallnessReport> {
        let dim = self.grid().dim();
        let eps = frame.epsilon;
        let t = frame.base_time;
        let t_idx = self.base_index(t)?;
        let idxs = self.window_subset(t_idx, eps)?;
        let y_m = frame.y_per_axis;
        let h_y = frame.y_spacing();
        let y_total = y_m.pow(dim as u32);
        let b1 = ball_quadrature_weights(y_m, dim, 1.0);
        // sup over Q_1 times of int_{B_1} |v|^2
        let mut sup_l2 = 0.0f64;
        let mut pressure_series = Vec::new();
        let mut q1_times = Vec::new();
        for (k, &s) in frame.s_times.iter().enumerate() {
            if s < -1.0 - 1e-12 {
                continue;
            }
            q1_times.push(s);
            let mut l2 = 0.0;
            let mut pl1 = 0.0;
            for j in 0..y_total {
                if b1[j] == 0.0 {
                    continue;
                }
                let mut v2 = 0.0;
                for c in 0..dim {
                    let val = frame.v_at(k, j, c, dim);
                    v2 += val * val;
                }
                l2 += v2 * b1[j];
                pl1 += frame.p_at(k, j, dim).abs() * b1[j];
            }
            sup_l2 = sup_l2.max(l2);
            pressure_series.push(pl1);
        }
        // int int_{Q_1} |grad v|^2 = int int eps^4 |grad u|^2 (mapped)
        let sw = quad::trapezoid_weights(&q1_times);
        let mut grad_q1 = 0.0;
        for (qk, &s) in q1_times.iter().enumerate() {
            let sigma = (t + eps * eps * s).clamp(self.traj.time(idxs[0]), t);
            let center = frame.path.position_at(sigma);
            let origin: Vec<f64> = (0..dim).map(|a| center[a] - 2.0 * eps).collect();
            let comb = self.combined_scalar(&idxs, sigma, &|i| self.integrand_spec(i, Kind::GradSq))?;
            let vals = comb
                .view()
                .eval_lattice(&origin, &vec![eps * h_y; dim], &vec![y_m; dim]);
            let sum: f64 = vals.iter().zip(&b1).map(|(v, w)| v * w).sum();
            grad_q1 += sw[qk] * eps.powi(4) * sum;
        }
        let pressure_lp: f64 = pressure_series
            .iter()
            .zip(&sw)
            .map(|(v, w)| w * v.powf(p))
            .sum();
        let total = sup_l2 + grad_q1 + pressure_lp;
        // sup over Q_{1/2}
        let mut sup_half = 0.0f64;
        for (k, &s) in frame.s_times.iter().enumerate() {
            if s < -0.25 - 1e-12 {
                continue;
            }
            for j in 0..y_total {
                let y = frame.y_coord(j, dim);
                if y.iter().map(|v| v * v).sum::<f64>() > 0.25 {
                    continue;
                }
                let mut v2 = 0.0;
                for c in 0..dim {
                    let val = frame.v_at(k, j, c, dim);
                    v2 += val * val;
                }
                sup_half = sup_half.max(v2.sqrt());
            }
        }
        Ok(SmallnessReport {
            sup_l2_b1: sup_l2,
            grad_sq_q1: grad_q1,
            pressure_lp_q1: pressure_lp,
            total,
            fires: total <= eta,
            sup_q_half: sup_half,
        })
    }

    /// Compare the local frame derivative `grad^n_y v_eps(0, 0)` (finite
    /// differences on fresh trigonometric samples) with the global spectral
    /// `grad^n u(t, x)`; their norm ratio is `eps^{n+1}` exactly in the
    /// continuum. Supports n in {1, 2}.
    pub fn derivative_at_basepoint(&self, frame: &FlowFrame, n: u32) -> Result<DerivAtBase> {
        if n == 0 || n > 2 {
            return Err(Error::DerivativeOrder { order: n, cap: 2 });
        }
        let dim = self.grid().dim();
        let eps = frame.epsilon;
        let t_idx = self.base_index(frame.base_time)?;
        let vel = self.vel_spec(t_idx);
        let x = &frame.base_point;
        let h = 0.15; // frame units; content is band-limited to eps k_max
        // g_c(y) = u_c(x + eps y): local derivatives of v are eps * d^n g
        let sample = |c: usize, offs: &[f64]| -> f64 {
            let p: Vec<f64> = (0..dim).map(|a| x[a] + eps * offs[a]).collect();
            vel[c].view().eval_point(&p)
        };
        let mut local = Vec::new();
        if n == 1 {
            let c1 = [-1.0 / 60.0, 3.0 / 20.0, -3.0 / 4.0, 0.0, 3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];
            for a in 0..dim {
                for c in 0..dim {
                    let mut acc = 0.0;
                    for (si, &w) in c1.iter().enumerate() {
                        if w == 0.0 {
                            continue;
                        }
                        let mut offs = vec![0.0; dim];
                        offs[a] = (si as f64 - 3.0) * h;
                        acc += w * sample(c, &offs);
                    }
                    local.push(eps * acc / h);
                }
            }
        } else {
            let c2 = [1.0 / 90.0, -3.0 / 20.0, 3.0 / 2.0, -49.0 / 18.0, 3.0 / 2.0, -3.0 / 20.0, 1.0 / 90.0];
            let c1 = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
            for a in 0..dim {
                for b in 0..dim {
                    for c in 0..dim {
                        let val = if a == b {
                            let mut acc = 0.0;
                            for (si, &w) in c2.iter().enumerate() {
                                let mut offs = vec![0.0; dim];
                                offs[a] = (si as f64 - 3.0) * h;
                                acc += w * sample(c, &offs);
                            }
                            acc / (h * h)
                        } else {
                            let mut acc = 0.0;
                            for (si, &wi) in c1.iter().enumerate() {
                                if wi == 0.0 {
                                    continue;
                                }
                                for (sj, &wj) in c1.iter().enumerate() {
                                    if wj == 0.0 {
                                        continue;
                                    }
                                    let mut offs = vec![0.0; dim];
                                    offs[a] = (si as f64 - 2.0) * h;
                                    offs[b] = (sj as f64 - 2.0) * h;
                                    acc += wi * wj * sample(c, &offs);
                                }
                            }
                            acc / (h * h)
                        };
                        local.push(eps * val);
                    }
                }
            }
        }
        // global spectral derivatives at the base point
        let mut global = Vec::new();
        for c in 0..dim {
            let (_, grad, hess) = vel[c].view().eval_point_derivs2(x);
            if n == 1 {
                for a in 0..dim {
                    global.push(grad[a]);
                }
            } else {
                for a in 0..dim {
                    for b in 0..dim {
                        global.push(hess[a][b]);
                    }
                }
            }
        }
        // layouts differ (component-major vs axis-major); compare norms
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let local_norm = norm(&local);
        let global_norm = norm(&global);
        Ok(DerivAtBase {
            local,
            global,
            local_norm,
            global_norm,
            ratio: if global_norm > 0.0 { local_norm / global_norm } else { 0.0 },
            expected: eps.powi(n as i32 + 1),
        })
    }
}

fn kind_code(kind: Kind) -> u8 {
    match kind {
        Kind::GradSq => 0,
        Kind::HessMod => 1,
        Kind::MaxFrac => 2,
        Kind::Pivot => 3,
    }
}

/// Ball-quadrature weights on the frame lattice over `[-2, 2]^dim`: each
/// node carries the fraction of its cell inside the ball of the given
/// radius (boundary cells resolved by subsampling), times the cell volume.
/// Reduces the sharp-mask O(h) boundary error to roughly O(h^2).
pub fn ball_quadrature_weights(y_per_axis: usize, dim: usize, radius: f64) -> Vec<f64> {
    let m = y_per_axis;
    let h = 4.0 / (m - 1) as f64;
    let total = m.pow(dim as u32);
    let coord = |flat: usize| -> Vec<f64> {
        let mut rem = flat;
        let mut idx = vec![0usize; dim];
        for a in (0..dim).rev() {
            idx[a] = rem % m;
            rem /= m;
        }
        idx.iter().map(|&i| -2.0 + i as f64 * h).collect()
    };
    let r2 = radius * radius;
    let half_diag = 0.5 * h * (dim as f64).sqrt();
    let sub = 6usize;
    let mut out = vec![0.0; total];
    for (flat, w) in out.iter_mut().enumerate() {
        let y = coord(flat);
        let d = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if d + half_diag <= radius {
            *w = h.powi(dim as i32);
        } else if d - half_diag >= radius {
            *w = 0.0;
        } else {
            // boundary cell: subsample
            let mut inside = 0usize;
            let count = sub.pow(dim as u32);
            for s in 0..count {
                let mut rem = s;
                let mut p = vec![0.0; dim];
                for a in (0..dim).rev() {
                    let j = rem % sub;
                    rem /= sub;
                    p[a] = y[a] - 0.5 * h + (j as f64 + 0.5) * h / sub as f64;
                }
                if p.iter().map(|v| v * v).sum::<f64>() <= r2 {
                    inside += 1;
                }
            }
            *w = h.powi(dim as i32) * inside as f64 / count as f64;
        }
    }
    out
}

/// Direct stencil sum `sum_j w_j f(center + eps y_j)` of the sampled bump,
/// through tensor-lattice trig evaluation (the independent code path of the
/// mollifier multiplier).
fn stencil_sum(moll: &Mollifier, coeffs: &CompactCoeffs, center: &[f64], eps: f64) -> f64 {
    let dim = coeffs.dim;
    let side = moll.side();
    let h = eps / moll.resolution() as f64;
    let origin: Vec<f64> = (0..dim).map(|a| center[a] - eps).collect();
    let vals = coeffs
        .view()
        .eval_lattice(&origin, &vec![h; dim], &vec![side; dim]);
    vals.iter().zip(moll.weights_flat()).map(|(v, w)| v * w).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{taylor_green, VectorField};
    use crate::solver::SolverConfig;
    use std::f64::consts::PI;

    fn still_trajectory(u: VectorField, t_end: f64, steps: usize) -> Trajectory {
        // synthetic time-constant trajectory (not a solver run)
        let dt = t_end / steps as f64;
        let times: Vec<f64> = (0..=steps).map(|i| i as f64 * dt).collect();
        let snaps = vec![u; steps + 1];
        Trajectory::from_snapshots(times, snaps, SolverConfig::new(dt, t_end))
    }

    #[test]
    fn zero_velocity_flow_is_static() {
        let g = Grid::new(3, 16, 2.0 * PI).unwrap();
        let traj = still_trajectory(VectorField::zeros(g), 0.2, 64);
        let ops = TrajOps::new(&traj, 0.5, 0.2).unwrap();
        let eps = 0.125;
        let base = vec![1.0, 2.0, 3.0];
        let path = ops.integrate_flows(eps, 0.2, &[base.clone()]).unwrap().remove(0);
        for pos in &path.positions {
            for a in 0..3 {
                assert!((pos[a] - base[a]).abs() < 1e-14);
            }
        }
        // zero trajectory: every point is good, averages vanish
        let avg = ops.tube_average(&path).unwrap();
        assert_eq!(avg, 0.0);
        let params = GoodSetParams { delta: 0.5, eta_star: 1e-12, epsilon: eps, gamma: 0.2 };
        assert!(is_good(&params, avg));
    }

    #[test]
    fn rigid_rotation_conserves_radius() {
        // solid-body rotation in the (x,y) plane about the box center
        let g = Grid::new(2, 32, 2.0 * PI).unwrap();
        let omega = 0.7;
        let cx = PI;
        let u0 = ScalarField::from_fn(g, |p| -omega * (p[1] - cx));
        let u1 = ScalarField::from_fn(g, |p| omega * (p[0] - cx));
        // remove the discontinuous wrap by keeping only low modes
        let u = VectorField::new(vec![u0, u1]).dealias();
        let traj = still_trajectory(u, 0.05, 128);
        let ops = TrajOps::new(&traj, 0.5, 0.2).unwrap();
        let eps = 0.0625;
        // near the center the dealiased field is close to the linear one
        let base = vec![cx + 0.25, cx];
        let path = ops.integrate_flows(eps, 0.05, &[base.clone()]).unwrap().remove(0);
        let r0 = 0.25f64;
        for (k, pos) in path.positions.iter().enumerate() {
            let r = ((pos[0] - cx).powi(2) + (pos[1] - cx).powi(2)).sqrt();
            assert!((r - r0).abs() < 2e-3, "node {k}: r = {r}");
        }
    }

    #[test]
    fn taylor_green_flow_matches_refined_quadrature() {
        let g = Grid::new(2, 32, 2.0 * PI).unwrap();
        let traj = still_trajectory(taylor_green(g, 1.0), 0.1, 256);
        let ops = TrajOps::new(&traj, 0.5, 0.2).unwrap();
        let eps = 0.125;
        let base = vec![1.3, 2.1];
        let path = ops.integrate_flows(eps, 0.1, &[base.clone()]).unwrap().remove(0);
        // dense RK4 oracle with h/16 on the analytic mollified field
        let moll = ops.mollifier();
        let mult_eval = |p: &[f64]| -> Vec<f64> {
            // mollified Taylor-Green: multiplier at |k| = sqrt(2)
            let m = moll.transform(&[eps, eps, 0.0]);
            vec![m * p[0].sin() * p[1].cos(), -m * p[0].cos() * p[1].sin()]
        };
        let h = -(eps * eps) / 8.0 / 16.0;
        let mut pos = base.clone();
        for _ in 0..(FLOW_STEPS * 16) {
            let k1 = mult_eval(&pos);
            let p2: Vec<f64> = (0..2).map(|a| pos[a] + 0.5 * h * k1[a]).collect();
            let k2 = mult_eval(&p2);
            let p3: Vec<f64> = (0..2).map(|a| pos[a] + 0.5 * h * k2[a]).collect();
            let k3 = mult_eval(&p3);
            let p4: Vec<f64> = (0..2).map(|a| pos[a] + h * k3[a]).collect();
            let k4 = mult_eval(&p4);
            for a in 0..2 {
                pos[a] += h / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
            }
        }
        let end = &path.positions[0];
        for a in 0..2 {
            assert!((end[a] - pos[a]).abs() < 1e-6, "axis {a}: {} vs {}", end[a], pos[a]);
        }
    }

    #[test]
    fn constant_integrand_tube_average_is_exact() {
        let g = Grid::new(3, 16, 2.0 * PI).unwrap();
        let traj = still_trajectory(VectorField::zeros(g), 0.3, 256);
        let c = 0.37;
        let ops = TrajOps::new(&traj, 0.5, 0.2)
            .unwrap()
            .with_constant_integrand(c);
        let eps = 0.125;
        let path = ops.integrate_flows(eps, 0.3, &[vec![1.0, 1.0, 1.0]]).unwrap().remove(0);
        let avg = ops.tube_average(&path).unwrap();
        assert!((avg - c).abs() < 1e-12 * c);
        // threshold: good iff 32 eps^4 c <= eta* eps^delta
        let delta = 0.5;
        let exact = tube_scaled_integral(eps, c) / eps.powf(delta);
        let good_params = GoodSetParams { delta, eta_star: exact * (1.0 + 1e-6), epsilon: eps, gamma: 0.2 };
        let bad_params = GoodSetParams { delta, eta_star: exact * (1.0 - 1e-6), epsilon: eps, gamma: 0.2 };
        assert!(is_good(&good_params, avg));
        assert!(!is_good(&bad_params, avg));
    }

    #[test]
    fn good_set_monotone_in_eta() {
        let g = Grid::new(2, 32, 2.0 * PI).unwrap();
        let traj = still_trajectory(taylor_green(g, 1.0), 0.2, 256);
        let ops = TrajOps::new(&traj, 0.5, 0.2).unwrap();
        let scan = ScanLattice { t_samples: vec![0.2], x_per_axis: 4 };
        let eps = 0.0625;
        let avgs = ops.scan_tube_averages(eps, &scan).unwrap();
        let mut prev_good = 0usize;
        for eta in [1e-6, 1e-4, 1e-2, 1.0] {
            let params = GoodSetParams { delta: 0.5, eta_star: eta, epsilon: eps, gamma: 0.2 };
            let m = ops.measure_from_averages(&avgs, &params, &scan);
            let good = m.total_points - m.bad_points;
            assert!(good >= prev_good);
            prev_good = good;
        }
    }

    #[test]
    fn volume_preservation_along_paths() {
        let g = Grid::new(2, 32, 2.0 * PI).unwrap();
        let traj = still_trajectory(taylor_green(g, 1.0), 0.1, 256);
        let ops = TrajOps::new(&traj, 0.5, 0.2).unwrap();
        let path = ops.integrate_flow_with_jacobian(0.125, 0.1, &[2.0, 3.0]).unwrap();
        assert!(!path.jacobian_dets.is_empty());
        for det in &path.jacobian_dets {
            assert!((det - 1.0).abs() < 1e-4, "det = {det}");
        }
    }

    #[test]
    fn frame_zero_field_and_mean_identity() {
        let g = Grid::new(3, 16, 2.0 * PI).unwrap();
        let traj = still_trajectory(VectorField::zeros(g), 0.3, 128);
        let ops = TrajOps::new(&traj, 0.5, 0.2).unwrap();
        let fc = FrameConfig { s_slices: 5, y_per_axis: 5 };
        let frame = ops.build_local_frame(0.125, 0.3, &[1.0, 2.0, 3.0], &fc).unwrap();
        assert!(frame.v.iter().all(|&v| v == 0.0));
        assert!(frame.p.iter().all(|&v| v == 0.0));
        assert!(frame.phi_mean_residual.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn frame_mean_identity_taylor_green() {
        let g = Grid::new(2, 32, 2.0 * PI).unwrap();
        let traj = still_trajectory(taylor_green(g, 1.0), 0.1, 256);
        let ops = TrajOps::new(&traj, 0.5, 0.2).unwrap();
        let fc = FrameConfig { s_slices: 5, y_per_axis: 7 };
        let frame = ops.build_local_frame(0.0625, 0.1, &[1.7, 2.9], &fc).unwrap();
        for &r in &frame.phi_mean_residual {
            assert!(r < 1e-10, "phi-mean residual {r}");
        }
    }

    #[test]
    fn derivative_at_basepoint_taylor_green() {
        let g = Grid::new(2, 32, 2.0 * PI).unwrap();
        let traj = still_trajectory(taylor_green(g, 1.0), 0.05, 512);
        let ops = TrajOps::new(&traj, 0.5, 0.2).unwrap();
        let fc = FrameConfig { s_slices: 3, y_per_axis: 5 };
        let eps = 1.0 / 16.0;
        let frame = ops.build_local_frame(eps, 0.05, &[1.1, 0.7], &fc).unwrap();
        let d1 = ops.derivative_at_basepoint(&frame, 1).unwrap();
        assert!(
            (d1.ratio - eps * eps).abs() < 1e-4 * eps * eps,
            "ratio {} vs {}",
            d1.ratio,
            eps * eps
        );
        let d2 = ops.derivative_at_basepoint(&frame, 2).unwrap();
        assert!(
            (d2.ratio - eps.powi(3)).abs() < 1e-3 * eps.powi(3),
            "ratio {} vs {}",
            d2.ratio,
            eps.powi(3)
        );
        assert!(ops.derivative_at_basepoint(&frame, 3).is_err());
        // closed-form cross-check of the global side at the base point
        let (dx, dy) = (1.1f64, 0.7f64);
        let g00 = dx.cos() * dy.cos();
        let g01 = -dx.sin() * dy.sin();
        let g10 = dx.sin() * dy.sin();
        let g11 = -dx.cos() * dy.cos();
        let frob = (g00 * g00 + g01 * g01 + g10 * g10 + g11 * g11).sqrt();
        assert!((d1.global_norm - frob).abs() < 1e-8);
    }

    #[test]
    fn stencil_sum_matches_multiplier_path() {
        let g = Grid::new(2, 32, 2.0 * PI).unwrap();
        let f = ScalarField::from_fn(g, |p| (2.0 * p[0]).sin() * (3.0 * p[1]).cos());
        let moll = Mollifier::new(2);
        let eps = 0.2;
        let cc = CompactCoeffs::compact(&g, f.spectral());
        let center = vec![1.234, 4.321];
        let direct = stencil_sum(&moll, &cc, &center, eps);
        let mult = moll.multiplier(&g, eps);
        let spec: Vec<Complex64> = f
            .spectral()
            .iter()
            .zip(mult.iter())
            .map(|(c, m)| c * m)
            .collect();
        let via = crate::field::eval_point(&g, &spec, &center);
        assert!((direct - via).abs() < 1e-11);
    }
}
