//! Integration checks of the Lagrangian frame machinery: tube quadrature
//! against dense refinement, good-set behavior, the bulk-transport
//! cancellation probe, and the local smallness criterion.

use nsscale_core::field::{random_divfree_field, taylor_green, Grid, ScalarField, VectorField};
use nsscale_core::frame::{
    tube_scaled_integral, FrameConfig, GoodSetParams, ScanLattice, TrajOps,
};
use nsscale_core::norms::pivot_integrand;
use nsscale_core::ops::RadiiLadder;
use nsscale_core::solver::{SolverConfig, Trajectory};
use std::f64::consts::PI;

fn still_trajectory(u: VectorField, t_end: f64, steps: usize) -> Trajectory {
    let dt = t_end / steps as f64;
    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * dt).collect();
    let snaps = vec![u; steps + 1];
    Trajectory::from_snapshots(times, snaps, SolverConfig::new(dt, t_end))
}

#[test]
fn tube_average_matches_dense_quadrature() {
    // 2D time-constant Taylor-Green state: the oracle refines the ball
    // quadrature 4x in every variable (the integrand is steady in time)
    let g = Grid::new(2, 32, 2.0 * PI).unwrap();
    let u = taylor_green(g, 1.0);
    let traj = still_trajectory(u.clone(), 0.1, 256);
    let delta = 0.625;
    let gamma = 1.0 / 7.0;
    let ops = TrajOps::new(&traj, delta, gamma).unwrap();
    let eps = 0.125;
    let base = vec![1.9, 2.8];
    let path = ops.integrate_flows(eps, 0.1, &[base]).unwrap().remove(0);
    let ours = ops.tube_average(&path).unwrap();
    // dense oracle: fine disc lattice, cell-overlap weights, fine time nodes
    let ladder = RadiiLadder::for_grid(&g);
    let f = pivot_integrand(&u, delta, gamma, &ladder).unwrap();
    let r = 2.0 * eps;
    let m = 129usize; // lattice across the disc diameter
    let h = 2.0 * r / (m - 1) as f64;
    let time_nodes = 64usize;
    let window = 4.0 * eps * eps;
    let mut acc = 0.0;
    for q in 0..time_nodes {
        let s = 0.1 - window + (q as f64 + 0.5) * window / time_nodes as f64;
        let center = path.position_at(s);
        let mut disc_sum = 0.0;
        let mut weight_sum = 0.0;
        for a in 0..m {
            for b in 0..m {
                let (dx, dy) = (-r + a as f64 * h, -r + b as f64 * h);
                let d2 = dx * dx + dy * dy;
                if d2 > r * r {
                    continue;
                }
                let p = vec![center[0] + dx, center[1] + dy];
                disc_sum += f.sample_at(&[p])[0];
                weight_sum += 1.0;
            }
        }
        acc += disc_sum / weight_sum; // disc average at this time
    }
    let oracle = acc / time_nodes as f64;
    assert!(
        (ours - oracle).abs() <= 0.01 * oracle.abs(),
        "tube {ours} vs oracle {oracle}"
    );
}

#[test]
fn small_amplitude_good_everywhere_and_zero_measure() {
    let g = Grid::new(2, 32, 2.0 * PI).unwrap();
    let traj = still_trajectory(taylor_green(g, 0.01), 0.1, 256);
    let ops = TrajOps::new(&traj, 0.625, 1.0 / 7.0).unwrap();
    let eps = 1.0 / 16.0;
    let scan = ScanLattice { t_samples: vec![0.1], x_per_axis: 4 };
    let params = GoodSetParams { delta: 0.625, eta_star: 0.1, epsilon: eps, gamma: 1.0 / 7.0 };
    let avgs = ops.scan_tube_averages(eps, &scan).unwrap();
    for &a in &avgs {
        // amplitude chosen so the scaled tube integral is far below threshold
        assert!(tube_scaled_integral(eps, a) <= 1e-3 * params.eta_star * eps.powf(params.delta));
    }
    let m = ops.measure_from_averages(&avgs, &params, &scan);
    assert_eq!(m.bad_points, 0);
    assert_eq!(m.measured, 0.0);
}

#[test]
fn galilean_sweep_cancellation() {
    // two synthetic runs whose velocities differ by a rigid low-mode sweep:
    // frames built by following the flow agree up to the sweep's
    // mollification error, an order below the raw sweep amplitude
    let g = Grid::new(2, 32, 2.0 * PI).unwrap();
    let v0 = 0.5;
    let eps = 1.0 / 16.0;
    let t_star = 0.05;
    let steps = 512usize;
    let base: Vec<f64> = vec![2.2, 3.1];
    // small-scale carrier field
    let carrier = random_divfree_field(g, 2.0, 4.0, 0.25, 7).dealias();
    // sweep: lowest-mode shear, divergence-free
    let sweep = VectorField::new(vec![
        ScalarField::from_fn(g, |p| v0 * (p[1]).sin()),
        ScalarField::zeros(g),
    ]);
    let w_bar = [v0 * (base[1]).sin(), 0.0];
    // run A: steady carrier; run B: carrier transported by the constant
    // w_bar plus the additive sweep field
    let traj_a = still_trajectory(carrier.clone(), 0.06, steps);
    let dt = 0.06 / steps as f64;
    let mut times = Vec::new();
    let mut snaps = Vec::new();
    for i in 0..=steps {
        let t = i as f64 * dt;
        let shifted = carrier.map(|c| {
            let spec: Vec<num_complex::Complex64> = {
                let mut s = c.spectral().to_vec();
                g.for_each_mode(|flat, _, k| {
                    let phase = -(k[0] * w_bar[0] + k[1] * w_bar[1]) * t;
                    s[flat] *= num_complex::Complex64::from_polar(1.0, phase);
                });
                s
            };
            ScalarField::from_spectral(g, spec)
        });
        times.push(t);
        snaps.push(shifted.add(&sweep));
    }
    let traj_b = Trajectory::from_snapshots(times, snaps, SolverConfig::new(dt, 0.06));
    let ops_a = TrajOps::new(&traj_a, 0.5, 0.2).unwrap();
    let ops_b = TrajOps::new(&traj_b, 0.5, 0.2).unwrap();
    let fc = FrameConfig { s_slices: 5, y_per_axis: 7 };
    // base time must be a stored snapshot for both runs
    let t_idx = (t_star / dt).round() as usize;
    let t_base = traj_a.time(t_idx);
    let frame_a = ops_a.build_local_frame(eps, t_base, &base, &fc).unwrap();
    let base_b = vec![base[0] + w_bar[0] * t_base, base[1] + w_bar[1] * t_base];
    let frame_b = ops_b.build_local_frame(eps, t_base, &base_b, &fc).unwrap();
    let mut max_diff = 0.0f64;
    let mut max_v = 0.0f64;
    for (a, b) in frame_a.v.iter().zip(&frame_b.v) {
        max_diff = max_diff.max((a - b).abs());
        max_v = max_v.max(a.abs());
    }
    // raw sweep scale in frame units is eps * v0; the residual after
    // following the flow is the sweep's mollification error, one eps-power
    // smaller: |W(X + eps y) - W_eps(X)| <= v0 k (|y| + 1) eps with k = 1
    // and |y| <= 2 sqrt(2) on the frame lattice
    let sweep_scale = eps * v0;
    let mollification_scale = v0 * eps * eps * (2.0 * 2.0f64.sqrt() + 1.0);
    assert!(
        max_diff <= 1.5 * mollification_scale,
        "frame diff {max_diff} vs mollification scale {mollification_scale}"
    );
    assert!(
        max_diff <= 0.25 * sweep_scale,
        "no bulk-transport cancellation: {max_diff} vs {sweep_scale}"
    );
    assert!(max_v > 0.0);
}

#[test]
fn smallness_criterion_zero_and_small_amplitude() {
    let g = Grid::new(2, 32, 2.0 * PI).unwrap();
    let ops_zero_traj = still_trajectory(VectorField::zeros(g), 0.1, 128);
    let ops_zero = TrajOps::new(&ops_zero_traj, 0.5, 0.2).unwrap();
    let fc = FrameConfig { s_slices: 9, y_per_axis: 9 };
    let frame = ops_zero.build_local_frame(0.0625, 0.1, &[1.0, 1.0], &fc).unwrap();
    let report = ops_zero.local_smallness_criterion(&frame, 1.5, 1e-9).unwrap();
    assert!(report.fires);
    assert_eq!(report.sup_q_half, 0.0);
    assert_eq!(report.total, 0.0);

    // small-amplitude Taylor-Green: hypothesis holds at eta = 0.1 and the
    // pointwise conclusion is satisfied by a wide margin
    let traj = still_trajectory(taylor_green(g, 0.05), 0.1, 256);
    let ops = TrajOps::new(&traj, 0.5, 0.2).unwrap();
    let frame = ops.build_local_frame(0.0625, 0.1, &[2.3, 1.2], &fc).unwrap();
    let report = ops.local_smallness_criterion(&frame, 1.5, 0.1).unwrap();
    assert!(report.fires, "total = {}", report.total);
    assert!(report.sup_q_half <= 1.0);
}

#[test]
fn good_point_frame_smallness_chain() {
    // for a good base point, each Q_2 frame integral is controlled by the
    // tube threshold; the ball-volume conversion from the r^3-normalized
    // tube convention is the explicit factor 4 pi / 3
    let g = Grid::new(2, 32, 2.0 * PI).unwrap();
    let traj = still_trajectory(taylor_green(g, 1.0), 0.1, 256);
    let delta = 0.625;
    let gamma = 1.0 / 7.0;
    let ops = TrajOps::new(&traj, delta, gamma).unwrap();
    let eps = 1.0 / 16.0;
    let fc = FrameConfig { s_slices: 9, y_per_axis: 13 };
    let base = vec![1.4, 0.8];
    let frame = ops.build_local_frame(eps, 0.1, &base, &fc).unwrap();
    // tightest eta* for which this point is good
    let eta_star = tube_scaled_integral(eps, frame.tube_avg) / eps.powf(delta) * (1.0 + 1e-9);
    let params = GoodSetParams { delta, eta_star, epsilon: eps, gamma };
    assert!(nsscale_core::frame::is_good(&params, frame.tube_avg));
    let check = ops.frame_tube_identity(&frame).unwrap();
    // in 2D the disc-area conversion is pi (vs 4 pi/3 in 3D)
    let conversion = PI;
    let budget = conversion * eta_star;
    for (i, term) in check.frame_terms.iter().enumerate() {
        assert!(
            *term <= budget * 1.05,
            "term {i} = {term} exceeds converted budget {budget}"
        );
    }
}
