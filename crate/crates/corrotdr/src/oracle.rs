//! Independent reference implementations used by the verification suites.
//!
//! Everything here is deliberately brute force (direct summation, dense
//! grid search, finite differences) and shares no code with the production
//! paths it is used to check.

/// Direct O(N*M) cross-correlation: `c[k] = sum_j received[j + k] * reference[j]`,
/// one lag per received sample.
pub fn direct_cross_correlate(received: &[f64], reference: &[f64]) -> Vec<f64> {
    let n = received.len();
    (0..n)
        .map(|k| {
            reference
                .iter()
                .enumerate()
                .take_while(|(j, _)| j + k < n)
                .map(|(j, &r)| received[j + k] * r)
                .sum()
        })
        .collect()
}

/// Sum of squared residuals of the best Gaussian with the given center and
/// width, with amplitude and offset solved by linear least squares.
fn gaussian_profile_ssr(xs: &[f64], ys: &[f64], center: f64, width: f64) -> f64 {
    let n = xs.len() as f64;
    let mut se = 0.0;
    let mut see = 0.0;
    let mut sy = 0.0;
    let mut sey = 0.0;
    let es: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let u = x - center;
            (-u * u / (2.0 * width * width)).exp()
        })
        .collect();
    for (&e, &y) in es.iter().zip(ys) {
        se += e;
        see += e * e;
        sy += y;
        sey += e * y;
    }
    let det = see * n - se * se;
    if det.abs() < 1e-14 * (see * n).abs().max(1e-300) {
        return f64::INFINITY;
    }
    let amp = (sey * n - se * sy) / det;
    let offset = (see * sy - se * sey) / det;
    es.iter()
        .zip(ys)
        .map(|(&e, &y)| {
            let r = y - amp * e - offset;
            r * r
        })
        .sum()
}

/// Dense grid search over (center, width) with linear amplitude/offset
/// solves, hierarchically refined until the center grid step reaches
/// `target_step` (in samples). Returns the best-fit center as an absolute
/// lag in sample units.
pub fn grid_fit_gaussian_center(
    values: &[f64],
    apex: usize,
    window_halfwidth: usize,
    target_step: f64,
) -> f64 {
    assert!(apex >= window_halfwidth && apex + window_halfwidth < values.len());
    let lo = apex - window_halfwidth;
    let ys = &values[lo..lo + 2 * window_halfwidth + 1];
    let xs: Vec<f64> = (0..ys.len())
        .map(|i| i as f64 - window_halfwidth as f64)
        .collect();

    // The apex sample bounds the true center to within one sample.
    let mut c_lo = -1.0;
    let mut c_hi = 1.0;
    let mut w_lo: f64 = 0.3;
    let mut w_hi: f64 = window_halfwidth as f64;
    let (mut best_c, mut best_w) = (0.0, 1.0);
    loop {
        let c_step = (c_hi - c_lo) / 40.0;
        let w_ratio = (w_hi / w_lo).powf(1.0 / 24.0);
        let mut best_ssr = f64::INFINITY;
        for ci in 0..=40 {
            let c = c_lo + ci as f64 * c_step;
            for wi in 0..=24 {
                let w = w_lo * w_ratio.powi(wi);
                let ssr = gaussian_profile_ssr(&xs, ys, c, w);
                if ssr < best_ssr {
                    best_ssr = ssr;
                    best_c = c;
                    best_w = w;
                }
            }
        }
        if c_step <= target_step {
            return apex as f64 + best_c;
        }
        c_lo = best_c - 2.0 * c_step;
        c_hi = best_c + 2.0 * c_step;
        w_lo = (best_w / w_ratio.powi(2)).max(0.05);
        w_hi = best_w * w_ratio.powi(2);
    }
}

/// Central finite differences of the Gaussian model with respect to
/// `[center, width, amplitude, offset]` at `x`.
pub fn gaussian_jacobian_fd(
    center: f64,
    width: f64,
    amplitude: f64,
    offset: f64,
    x: f64,
    rel_step: f64,
) -> [f64; 4] {
    let f = |c: f64, w: f64, a: f64, o: f64| {
        let u = x - c;
        o + a * (-u * u / (2.0 * w * w)).exp()
    };
    let h = |v: f64| rel_step * v.abs().max(1.0);
    let hc = h(center);
    let hw = h(width);
    let ha = h(amplitude);
    let ho = h(offset);
    [
        (f(center + hc, width, amplitude, offset) - f(center - hc, width, amplitude, offset))
            / (2.0 * hc),
        (f(center, width + hw, amplitude, offset) - f(center, width - hw, amplitude, offset))
            / (2.0 * hw),
        (f(center, width, amplitude + ha, offset) - f(center, width, amplitude - ha, offset))
            / (2.0 * ha),
        (f(center, width, amplitude, offset + ho) - f(center, width, amplitude, offset - ho))
            / (2.0 * ho),
    ]
}
