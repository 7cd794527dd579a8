//! Analysis task execution: each task consumes the shared immutable
//! trajectory and produces report rows.

use crate::config::AnalysisTask;
use nsscale_core::frame::{FrameConfig, GoodSetParams, ScanLattice, TrajOps};
use nsscale_core::norms::{self, ReportRow};
use nsscale_core::scaling::{scaling_exponent_fit, ScalingQuantity};
use nsscale_core::solver::{energy_budget, Trajectory};

pub fn run_task(task: &AnalysisTask, traj: &Trajectory) -> Result<Vec<ReportRow>, String> {
    match task {
        AnalysisTask::EnergyBudget => energy_budget_rows(traj),
        AnalysisTask::PivotBudget { s } => pivot_rows(traj, s),
        AnalysisTask::ScalingFit { quantity, epsilons, window, x0, n, p, d } => {
            scaling_rows(traj, quantity, epsilons, window, *x0, *n, *p, *d)
        }
        AnalysisTask::DerivativeBound { n, p, gamma, region } => {
            derivative_bound_rows(traj, *n, *p, *gamma, region)
        }
        AnalysisTask::Goodset { delta, eta_star, epsilons, t_samples, x_per_axis, gamma } => {
            goodset_rows(traj, *delta, *eta_star, epsilons, t_samples, *x_per_axis, *gamma)
        }
        AnalysisTask::Frames { epsilon, delta, gamma, base_points, n_list, s_slices, y_per_axis } => {
            frames_rows(traj, *epsilon, *delta, *gamma, base_points, n_list, *s_slices, *y_per_axis)
        }
    }
}

fn energy_budget_rows(traj: &Trajectory) -> Result<Vec<ReportRow>, String> {
    let budget = energy_budget(traj);
    let mut rows = Vec::new();
    for (i, &t) in budget.times.iter().enumerate() {
        let label = format!("t[{t:.9}]");
        let mut k = ReportRow::named("kinetic_energy");
        k.region = Some(label.clone());
        k.value = Some(budget.kinetic[i]);
        rows.push(k);
        let mut d = ReportRow::named("cumulative_dissipation");
        d.region = Some(label.clone());
        d.value = Some(budget.dissipation[i]);
        rows.push(d);
        let mut r = ReportRow::named("energy_residual");
        r.region = Some(label);
        r.value = Some(budget.residual[i]);
        rows.push(r);
    }
    let mut m = ReportRow::named("max_abs_energy_residual");
    m.value = Some(budget.max_abs_residual);
    m.ratio = Some(budget.max_abs_residual / traj.initial_energy().max(1e-300));
    rows.push(m);
    Ok(rows)
}

fn pivot_rows(traj: &Trajectory, s_values: &[f64]) -> Result<Vec<ReportRow>, String> {
    let mut rows = Vec::new();
    for &s in s_values {
        let b = norms::pivot_budget(traj, s).map_err(|e| e.to_string())?;
        for (name, value) in [
            ("pivot_i_grad", b.i_grad),
            ("pivot_i_hess_p", b.i_hess_p),
            ("pivot_i_max_frac", b.i_max_frac),
            ("pivot_total", b.i_grad + b.i_hess_p + b.i_max_frac),
        ] {
            let mut row = ReportRow::named(name);
            row.s = Some(s);
            row.delta = Some(b.delta);
            row.gamma = Some(b.gamma);
            row.value = Some(value);
            row.ratio = Some(b.ratio);
            rows.push(row);
        }
    }
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn scaling_rows(
    traj: &Trajectory,
    quantity: &str,
    epsilons: &[f64],
    window: &crate::config::RegionSpec,
    x0: [f64; 3],
    n: Option<u32>,
    p: Option<f64>,
    d: Option<f64>,
) -> Result<Vec<ReportRow>, String> {
    let q = match quantity {
        "dissipation" => ScalingQuantity::Dissipation,
        "f_norm" => ScalingQuantity::FNorm,
        "grad_norm_p" => ScalingQuantity::GradNormP {
            n: n.ok_or("grad_norm_p requires n")?,
            p: p.ok_or("grad_norm_p requires p")?,
        },
        "energy_family" => ScalingQuantity::EnergyFamily {
            d: d.ok_or("energy_family requires d")?,
            p: p.ok_or("energy_family requires p")?,
        },
        other => return Err(format!("unknown scaling quantity {other}")),
    };
    let region = window.to_region(traj.grid().box_length());
    let fit = scaling_exponent_fit(&q, traj, epsilons, &region, x0).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    let mut slope = ReportRow::named(&format!("scaling_slope_{}", q.name()));
    slope.n = n.map(f64::from);
    slope.p = p;
    slope.value = Some(fit.slope);
    slope.ratio = Some(fit.r2);
    slope.region = Some(region.label(traj.grid().dim()));
    rows.push(slope);
    for (eps, value) in &fit.points {
        let mut row = ReportRow::named(&format!("scaling_value_{}", q.name()));
        row.s = Some(*eps);
        row.value = Some(*value);
        rows.push(row);
    }
    Ok(rows)
}

fn derivative_bound_rows(
    traj: &Trajectory,
    n: u32,
    p: f64,
    gamma: f64,
    region: &crate::config::RegionSpec,
) -> Result<Vec<ReportRow>, String> {
    let region = region.to_region(traj.grid().box_length());
    let gap = norms::derivative_bound_gap(traj, n, p, gamma, &region).map_err(|e| e.to_string())?;
    let mut row = ReportRow::named("derivative_bound_gap");
    row.n = Some(n as f64);
    row.p = Some(p);
    row.gamma = Some(gamma);
    row.region = Some(region.label(traj.grid().dim()));
    row.value = Some(gap.lhs);
    row.ratio = Some(gap.ratio);
    row.admissible = Some(gap.admissible);
    Ok(vec![row])
}

fn goodset_rows(
    traj: &Trajectory,
    delta: f64,
    eta_star: f64,
    epsilons: &[f64],
    t_samples: &[f64],
    x_per_axis: usize,
    gamma: f64,
) -> Result<Vec<ReportRow>, String> {
    let ops = TrajOps::new(traj, delta, gamma).map_err(|e| e.to_string())?;
    let scan = ScanLattice { t_samples: t_samples.to_vec(), x_per_axis };
    let mut rows = Vec::new();
    for &eps in epsilons {
        let params = GoodSetParams { delta, eta_star, epsilon: eps, gamma };
        let m = ops.complement_measure_check(&params, &scan).map_err(|e| e.to_string())?;
        let mut row = ReportRow::named("goodset_complement_measure");
        row.s = Some(eps);
        row.delta = Some(delta);
        row.gamma = Some(gamma);
        row.value = Some(m.measured);
        row.ratio = Some(m.bound_ratio);
        rows.push(row);
        let mut frac = ReportRow::named("goodset_bad_fraction");
        frac.s = Some(eps);
        frac.value = Some(m.bad_points as f64 / m.total_points.max(1) as f64);
        rows.push(frac);
    }
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn frames_rows(
    traj: &Trajectory,
    epsilon: f64,
    delta: f64,
    gamma: f64,
    base_points: &[Vec<f64>],
    n_list: &[u32],
    s_slices: usize,
    y_per_axis: usize,
) -> Result<Vec<ReportRow>, String> {
    let ops = TrajOps::new(traj, delta, gamma).map_err(|e| e.to_string())?;
    let fc = FrameConfig { s_slices, y_per_axis };
    let mut rows = Vec::new();
    for (i, point) in base_points.iter().enumerate() {
        let (t, x) = point.split_first().ok_or("base point needs [t, x...]")?;
        let frame = ops
            .build_local_frame(epsilon, *t, x, &fc)
            .map_err(|e| e.to_string())?;
        let max_phi = frame
            .phi_mean_residual
            .iter()
            .fold(0.0f64, |m, &v| m.max(v));
        let mut row = ReportRow::named("frame_phi_mean_max");
        row.s = Some(epsilon);
        row.region = Some(format!("base{i}"));
        row.value = Some(max_phi);
        rows.push(row);
        let mut tube = ReportRow::named("frame_tube_average");
        tube.s = Some(epsilon);
        tube.region = Some(format!("base{i}"));
        tube.value = Some(frame.tube_avg);
        rows.push(tube);
        let check = ops.frame_tube_identity(&frame).map_err(|e| e.to_string())?;
        let mut cov = ReportRow::named("frame_change_of_var_max_rel_err");
        cov.s = Some(epsilon);
        cov.region = Some(format!("base{i}"));
        cov.value = Some(check.rel_err.iter().fold(0.0f64, |m, &v| m.max(v)));
        rows.push(cov);
        for &n in n_list {
            let d = ops
                .derivative_at_basepoint(&frame, n)
                .map_err(|e| e.to_string())?;
            let mut row = ReportRow::named("frame_derivative_ratio");
            row.n = Some(n as f64);
            row.s = Some(epsilon);
            row.region = Some(format!("base{i}"));
            row.value = Some(d.ratio);
            row.ratio = Some(d.expected);
            rows.push(row);
        }
    }
    Ok(rows)
}
