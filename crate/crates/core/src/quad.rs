//! Small quadrature helpers shared by the diagnostic modules.

/// Trapezoid weights for (possibly non-uniform) increasing sample times.
pub fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    let mut w = vec![0.0; n];
    if n < 2 {
        return w;
    }
    for i in 0..n - 1 {
        let h = times[i + 1] - times[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}

/// Composite Simpson weights for uniformly spaced samples. Falls back to
/// trapezoid on the final interval when the count is even.
pub fn simpson_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    if n < 3 {
        return trapezoid_weights(times);
    }
    let h = times[1] - times[0];
    let mut w = vec![0.0; n];
    let pairs = (n - 1) / 2;
    for p in 0..pairs {
        let i = 2 * p;
        w[i] += h / 3.0;
        w[i + 1] += 4.0 * h / 3.0;
        w[i + 2] += h / 3.0;
    }
    if (n - 1) % 2 == 1 {
        w[n - 2] += 0.5 * h;
        w[n - 1] += 0.5 * h;
    }
    w
}

/// Midpoint-style weights: each node owns the part of `[lo, hi]` closer to it
/// than to its neighbors (Voronoi cells clipped to the window).
pub fn window_weights(times: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let n = times.len();
    let mut w = vec![0.0; n];
    for i in 0..n {
        let left = if i == 0 { lo } else { 0.5 * (times[i - 1] + times[i]) };
        let right = if i == n - 1 { hi } else { 0.5 * (times[i] + times[i + 1]) };
        w[i] = (right.min(hi) - left.max(lo)).max(0.0);
    }
    w
}

/// Least-squares slope and r^2 of `log(y)` against `log(x)`.
pub fn log_log_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, r2)
}

/// Cubic (Catmull-Rom style) interpolation weights for target `t` between
/// `t1` and `t2` of four uniformly spaced nodes `t0 < t1 < t2 < t3`.
pub fn cubic_weights(times: &[f64; 4], t: f64) -> [f64; 4] {
    // Lagrange basis on the four nodes: exact for cubics, C0 across segments.
    let mut w = [0.0; 4];
    for i in 0..4 {
        let mut num = 1.0;
        let mut den = 1.0;
        for j in 0..4 {
            if i == j {
                continue;
            }
            num *= t - times[j];
            den *= times[i] - times[j];
        }
        w[i] = num / den;
    }
    w
}
