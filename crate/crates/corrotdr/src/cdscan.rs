//! Multi-wavelength workflow: per-wavelength subset latencies, shared
//! temperature-drift estimation and compensation, quadratic latency fit and
//! chromatic dispersion extraction.
//!
//! All latencies here are round trips. The dispersion conversion divides the
//! fitted slope by **twice** the fiber length; dropping that factor of two is
//! the classic mistake in single-ended dispersion work.

use rayon::prelude::*;

use crate::corrproc::{SidelobeFilter, TraceAverager};
use crate::error::{Error, Result};
use crate::fibersim::{DispersionParams, Trace};
use crate::peakfit::{self, PipelineConfig};
use crate::seqgen::SampledWaveform;
use crate::Real;

/// Subset latencies measured at one wavelength: `(wall_clock_s, end_rtt_s)`
/// per subset, wall clocks ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanEntry<T: Real = f64> {
    pub wavelength_nm: T,
    pub subsets: Vec<(T, T)>,
}

/// The full multi-wavelength data set.
#[derive(Debug, Clone, PartialEq)]
pub struct WavelengthScan<T: Real = f64> {
    pub entries: Vec<ScanEntry<T>>,
    pub fiber_length_km: T,
}

/// Linear-in-time latency drift shared across wavelengths, with a free
/// constant per wavelength (the quantity of interest).
#[derive(Debug, Clone, PartialEq)]
pub struct DriftModel<T: Real = f64> {
    /// Latency drift rate, seconds per second of wall clock.
    pub rate: T,
    /// Per-wavelength constants at wall clock zero: `(lambda_nm, offset_s)`.
    pub offsets: Vec<(T, T)>,
    /// RMS residual of the drift fit, seconds.
    pub residual_rms: T,
}

impl<T: Real> DriftModel<T> {
    pub fn zero() -> Self {
        DriftModel {
            rate: T::zero(),
            offsets: Vec::new(),
            residual_rms: T::zero(),
        }
    }

    pub fn rate_ps_per_hour(&self) -> T {
        self.rate * T::of(1e12 * 3600.0)
    }
}

/// Quadratic round-trip latency model on centered wavelength:
/// `rtt(lambda) = b0 + b1 (lambda - lambda0) + b2 (lambda - lambda0)^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyPolynomial<T: Real = f64> {
    pub b0_s: T,
    pub b1_s_per_nm: T,
    pub b2_s_per_nm2: T,
    pub lambda0_nm: T,
}

impl<T: Real> LatencyPolynomial<T> {
    pub fn rtt_at(&self, lambda_nm: T) -> T {
        let x = lambda_nm - self.lambda0_nm;
        self.b0_s + self.b1_s_per_nm * x + self.b2_s_per_nm2 * x * x
    }

    /// d(rtt)/d(lambda) in seconds per nm.
    pub fn slope_at(&self, lambda_nm: T) -> T {
        let x = lambda_nm - self.lambda0_nm;
        self.b1_s_per_nm + T::of(2.0) * self.b2_s_per_nm2 * x
    }
}

/// Dispersion analysis output: the latency polynomial, its fit quality, the
/// extracted D(lambda) curve in ps/(nm km), and the drift model that was
/// compensated.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionResult<T: Real = f64> {
    pub poly: LatencyPolynomial<T>,
    pub fit_rms_s: T,
    /// `(lambda_nm, D ps/(nm km))` on the requested grid.
    pub d_curve: Vec<(T, T)>,
    pub drift: DriftModel<T>,
}

/// Reference dispersion to compare a measured curve against: either the
/// analytic linear model or a tabulated two-column curve.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceDispersion<T: Real = f64> {
    Analytic(DispersionParams<T>),
    /// `(lambda_nm, D ps/(nm km))` samples, ascending in wavelength.
    Tabulated(Vec<(T, T)>),
}

/// Builds one scan entry by averaging and analyzing consecutive subsets of
/// the wavelength's trace set. The provider is called with the trace index.
pub fn scan_entry_with<T, F>(
    wavelength_nm: T,
    n_traces: usize,
    provider: F,
    subset_size: usize,
    reference: &SampledWaveform<T>,
    filter: &SidelobeFilter<T>,
    cfg: &PipelineConfig<T>,
) -> Result<ScanEntry<T>>
where
    T: Real,
    F: Fn(usize) -> Trace<T> + Sync,
{
    if subset_size == 0 {
        return Err(Error::invalid("subset size must be positive"));
    }
    let n_subsets = n_traces / subset_size;
    if n_subsets < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 subsets per wavelength, got {n_subsets}"
        )));
    }

    let subsets: Vec<Option<(T, T)>> = (0..n_subsets)
        .into_par_iter()
        .map(|s| {
            let mut avg = TraceAverager::new();
            let mut clock_sum = T::zero();
            for i in s * subset_size..(s + 1) * subset_size {
                let trace = provider(i);
                clock_sum += trace.wall_clock;
                avg.add(&trace).ok()?;
            }
            let averaged = avg.finish().ok()?;
            let outcome = peakfit::analyze_average(&averaged, reference, filter, cfg).ok()?;
            let report = peakfit::latency_report(&outcome.accepted_peaks()).ok()?;
            Some((clock_sum / T::of_usize(subset_size), report.end_rtt))
        })
        .collect();

    let kept: Vec<(T, T)> = subsets.iter().flatten().copied().collect();
    if kept.len() < 2 {
        return Err(Error::invalid(format!(
            "only {} of {n_subsets} subsets at {wavelength_nm} nm produced a latency",
            kept.len()
        )));
    }
    if kept.len() < n_subsets {
        log::warn!(
            "{} of {n_subsets} subsets at {wavelength_nm} nm were dropped",
            n_subsets - kept.len()
        );
    }
    Ok(ScanEntry {
        wavelength_nm,
        subsets: kept,
    })
}

/// Least-squares fit of a global linear-in-time drift shared across
/// wavelengths, with a free per-wavelength constant. This is the
/// within-group (fixed-effects) estimator: per-wavelength means carry the
/// dispersion information and are left untouched; only the common time slope
/// is extracted.
pub fn estimate_drift<T: Real>(scan: &WavelengthScan<T>) -> Result<DriftModel<T>> {
    if scan.entries.is_empty() {
        return Err(Error::invalid("scan has no entries"));
    }
    for e in &scan.entries {
        if e.subsets.len() < 2 {
            return Err(Error::invalid(format!(
                "wavelength {} nm has fewer than 2 subsets",
                e.wavelength_nm
            )));
        }
    }

    let mut num = T::zero();
    let mut den = T::zero();
    let mut means = Vec::with_capacity(scan.entries.len());
    for e in &scan.entries {
        let n = T::of_usize(e.subsets.len());
        let t_mean = e.subsets.iter().map(|&(t, _)| t).sum::<T>() / n;
        let y_mean = e.subsets.iter().map(|&(_, y)| y).sum::<T>() / n;
        for &(t, y) in &e.subsets {
            num += (t - t_mean) * (y - y_mean);
            den += (t - t_mean) * (t - t_mean);
        }
        means.push((t_mean, y_mean));
    }

    // Lever arm threshold: a pure-roundoff denominator means every subset of
    // every wavelength sits at one wall clock.
    let t_scale = scan
        .entries
        .iter()
        .flat_map(|e| e.subsets.iter().map(|&(t, _)| t.abs()))
        .fold(T::one(), T::max);
    if den <= t_scale * t_scale * T::of(1e-20) {
        return Err(Error::DegenerateDrift(
            "all subsets share one wall clock; no time lever arm".into(),
        ));
    }

    let rate = num / den;
    let offsets: Vec<(T, T)> = scan
        .entries
        .iter()
        .zip(&means)
        .map(|(e, &(t_mean, y_mean))| (e.wavelength_nm, y_mean - rate * t_mean))
        .collect();

    let mut ss = T::zero();
    let mut count = 0usize;
    for (e, &(_, offset)) in scan.entries.iter().zip(&offsets) {
        for &(t, y) in &e.subsets {
            let r = y - offset - rate * t;
            ss += r * r;
            count += 1;
        }
    }
    Ok(DriftModel {
        rate,
        offsets,
        residual_rms: (ss / T::of_usize(count)).sqrt(),
    })
}

/// Subtracts `rate * (wall_clock - scan_start)` from every subset latency and
/// averages the subsets per wavelength. Returns `(lambda_nm, rtt_s)` pairs.
pub fn compensate_drift<T: Real>(
    scan: &WavelengthScan<T>,
    drift: &DriftModel<T>,
) -> Vec<(T, T)> {
    let t_start = scan
        .entries
        .iter()
        .flat_map(|e| e.subsets.iter().map(|&(t, _)| t))
        .fold(T::infinity(), T::min);
    scan.entries
        .iter()
        .map(|e| {
            let n = T::of_usize(e.subsets.len());
            let mean = e
                .subsets
                .iter()
                .map(|&(t, y)| y - drift.rate * (t - t_start))
                .sum::<T>()
                / n;
            (e.wavelength_nm, mean)
        })
        .collect()
}

/// Ordinary least squares of a 2nd-order polynomial on centered wavelength.
/// Exact for quadratic input; `fit_rms` is the RMS residual over the points.
pub fn fit_latency_polynomial<T: Real>(
    pairs: &[(T, T)],
    lambda0_nm: T,
) -> Result<(LatencyPolynomial<T>, T)> {
    let mut distinct: Vec<f64> = pairs.iter().map(|&(l, _)| l.as_()).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    if distinct.len() < 3 {
        return Err(Error::invalid(format!(
            "quadratic fit needs at least 3 distinct wavelengths, got {}",
            distinct.len()
        )));
    }

    let mut s = [T::zero(); 5];
    let mut rhs = [T::zero(); 3];
    for &(l, y) in pairs {
        let x = l - lambda0_nm;
        let mut xp = T::one();
        for sk in s.iter_mut() {
            *sk += xp;
            xp *= x;
        }
        rhs[0] += y;
        rhs[1] += x * y;
        rhs[2] += x * x * y;
    }
    let mut a = [
        s[0], s[1], s[2], //
        s[1], s[2], s[3], //
        s[2], s[3], s[4],
    ];
    let mut b = rhs;
    if crate::linalg::cholesky_solve(&mut a, &mut b, 3).is_none() {
        return Err(Error::RankDeficient(
            "wavelength design matrix is singular".into(),
        ));
    }
    let poly = LatencyPolynomial {
        b0_s: b[0],
        b1_s_per_nm: b[1],
        b2_s_per_nm2: b[2],
        lambda0_nm,
    };
    let ss = pairs
        .iter()
        .map(|&(l, y)| {
            let r = y - poly.rtt_at(l);
            r * r
        })
        .sum::<T>();
    let rms = (ss / T::of_usize(pairs.len())).sqrt();
    Ok((poly, rms))
}

/// Evaluates `D(lambda) = d(rtt)/d(lambda) / (2 L)` on the grid, in
/// ps/(nm km). The division by twice the length converts the round-trip
/// slope to a one-way, per-kilometer quantity.
pub fn compute_dispersion<T: Real>(
    poly: &LatencyPolynomial<T>,
    fiber_length_km: T,
    lambdas_nm: &[T],
) -> Vec<(T, T)> {
    lambdas_nm
        .iter()
        .map(|&l| {
            let d = poly.slope_at(l) / (T::of(2.0) * fiber_length_km) * T::of(1e12);
            (l, d)
        })
        .collect()
}

/// Maximum absolute difference between the measured curve and the reference
/// over the overlapping wavelength range, in ps/(nm km).
pub fn compare_with_reference<T: Real>(
    d_curve: &[(T, T)],
    reference: &ReferenceDispersion<T>,
) -> Result<T> {
    if d_curve.is_empty() {
        return Err(Error::invalid("empty dispersion curve"));
    }
    let mut worst = T::neg_infinity();
    let mut overlap = false;
    for &(l, d) in d_curve {
        let reference_value = match reference {
            ReferenceDispersion::Analytic(p) => Some(p.d_at(l)),
            ReferenceDispersion::Tabulated(table) => interpolate_table(table, l),
        };
        if let Some(dr) = reference_value {
            overlap = true;
            worst = worst.max((d - dr).abs());
        }
    }
    if !overlap {
        return Err(Error::invalid(
            "reference and measured curves cover disjoint wavelength ranges",
        ));
    }
    Ok(worst)
}

fn interpolate_table<T: Real>(table: &[(T, T)], l: T) -> Option<T> {
    if table.is_empty() || l < table[0].0 || l > table[table.len() - 1].0 {
        return None;
    }
    for pair in table.windows(2) {
        let (l0, d0) = pair[0];
        let (l1, d1) = pair[1];
        if l <= l1 {
            if l1 == l0 {
                return Some(d0);
            }
            let f = (l - l0) / (l1 - l0);
            return Some(d0 + f * (d1 - d0));
        }
    }
    Some(table[table.len() - 1].1)
}

/// Temperature change implied by a drift of `rate` over `duration`, given
/// the thermal coefficient and the base round trip.
pub fn implied_temperature_change<T: Real>(
    rate_s_per_s: T,
    duration_s: T,
    coeff_per_deg_c: T,
    base_rtt_s: T,
) -> T {
    rate_s_per_s * duration_s / (coeff_per_deg_c * base_rtt_s)
}

/// Full scan evaluation: drift estimation, optional compensation, quadratic
/// fit and dispersion extraction on the grid.
pub fn evaluate_scan<T: Real>(
    scan: &WavelengthScan<T>,
    lambda0_nm: T,
    grid_nm: &[T],
    compensate: bool,
) -> Result<DispersionResult<T>> {
    let drift = estimate_drift(scan)?;
    let applied = if compensate {
        drift.clone()
    } else {
        DriftModel::zero()
    };
    let pairs = compensate_drift(scan, &applied);
    let (poly, fit_rms_s) = fit_latency_polynomial(&pairs, lambda0_nm)?;
    let d_curve = compute_dispersion(&poly, scan.fiber_length_km, grid_nm);
    Ok(DispersionResult {
        poly,
        fit_rms_s,
        d_curve,
        drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    /// 7 wavelengths, 4 subsets each, laid out sequentially over 3.5 hours.
    fn synthetic_scan(rate_ps_per_h: f64, noise_ps: f64, seed: u64) -> WavelengthScan {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rate = rate_ps_per_h * 1e-12 / 3600.0;
        let total = 3.5 * 3600.0;
        let per_set = total / 7.0;
        let base = 21638.9586e-9;
        let entries = (0..7)
            .map(|i| {
                let lambda = 1530.0 + i as f64 * (35.0 / 6.0);
                let dl = lambda - 1550.0;
                // Quadratic dispersion signature plus drift plus noise.
                let disp = 2.0 * 2.2095 * (16.5 * dl + 0.5 * 0.058 * dl * dl) * 1e-12;
                let subsets = (0..4)
                    .map(|s| {
                        let t = i as f64 * per_set + (s as f64 + 0.5) * per_set / 4.0;
                        let n: f64 = rng.sample(rand_distr::StandardNormal);
                        (t, base + disp + rate * t + noise_ps * 1e-12 * n)
                    })
                    .collect();
                ScanEntry {
                    wavelength_nm: lambda,
                    subsets,
                }
            })
            .collect();
        WavelengthScan {
            entries,
            fiber_length_km: 2.2095,
        }
    }

    #[test]
    fn recovers_injected_drift_rate() {
        // 120 ps over 3.5 h is 34.3 ps/h.
        let scan = synthetic_scan(120.0 / 3.5, 0.3, 1);
        let drift = estimate_drift(&scan).unwrap();
        assert_relative_eq!(drift.rate_ps_per_hour(), 34.2857, max_relative = 0.05);
    }

    #[test]
    fn zero_drift_recovered_as_zero() {
        let scan = synthetic_scan(0.0, 0.3, 2);
        let drift = estimate_drift(&scan).unwrap();
        assert!(drift.rate_ps_per_hour().abs() < 0.5);
    }

    #[test]
    fn implied_temperature_matches_thermal_model() {
        let scan = synthetic_scan(120.0 / 3.5, 0.2, 3);
        let drift = estimate_drift(&scan).unwrap();
        let dt = implied_temperature_change(
            drift.rate,
            3.5 * 3600.0,
            7e-6,
            21638.9586e-9,
        );
        assert_relative_eq!(dt, 0.792, max_relative = 0.05);
    }

    #[test]
    fn degenerate_wall_clocks_rejected() {
        let entries = (0..3)
            .map(|i| ScanEntry {
                wavelength_nm: 1540.0 + i as f64,
                subsets: vec![(100.0, 1e-6), (100.0, 1.0001e-6)],
            })
            .collect();
        let scan = WavelengthScan {
            entries,
            fiber_length_km: 2.2,
        };
        assert!(matches!(
            estimate_drift(&scan),
            Err(Error::DegenerateDrift(_))
        ));
    }

    #[test]
    fn compensation_flattens_pure_drift() {
        // No dispersion, only drift: corrected latencies agree across
        // wavelengths to arithmetic precision.
        let rate = 30e-12 / 3600.0;
        let entries = (0..5)
            .map(|i| {
                let subsets = (0..4)
                    .map(|s| {
                        let t = (i * 4 + s) as f64 * 450.0;
                        (t, 2e-5 + rate * t)
                    })
                    .collect();
                ScanEntry {
                    wavelength_nm: 1535.0 + 5.0 * i as f64,
                    subsets,
                }
            })
            .collect();
        let scan = WavelengthScan {
            entries,
            fiber_length_km: 2.2,
        };
        let drift = estimate_drift(&scan).unwrap();
        let pairs = compensate_drift(&scan, &drift);
        for &(_, y) in &pairs {
            assert!((y - pairs[0].1).abs() < 1e-15, "residual {}", y - pairs[0].1);
        }
    }

    #[test]
    fn zero_drift_model_is_plain_average() {
        let scan = synthetic_scan(50.0, 0.0, 4);
        let pairs = compensate_drift(&scan, &DriftModel::zero());
        for (e, &(l, y)) in scan.entries.iter().zip(&pairs) {
            assert_eq!(l, e.wavelength_nm);
            let mean = e.subsets.iter().map(|&(_, v)| v).sum::<f64>() / e.subsets.len() as f64;
            assert_relative_eq!(y, mean, max_relative = 1e-15);
        }
    }

    #[test]
    fn quadratic_input_fit_is_exact() {
        let pairs: Vec<(f64, f64)> = (0..7)
            .map(|i| {
                let l = 1530.0 + i as f64 * 5.8333;
                let x = l - 1550.0;
                (l, 2.16e-5 + 7.3e-11 * x + 1.3e-13 * x * x)
            })
            .collect();
        let (poly, rms) = fit_latency_polynomial(&pairs, 1550.0).unwrap();
        assert_relative_eq!(poly.b0_s, 2.16e-5, max_relative = 1e-10);
        assert_relative_eq!(poly.b1_s_per_nm, 7.3e-11, max_relative = 1e-10);
        assert_relative_eq!(poly.b2_s_per_nm2, 1.3e-13, max_relative = 1e-10);
        assert!(rms < 1e-15);
    }

    #[test]
    fn constant_latency_has_zero_slope_terms() {
        let pairs: Vec<(f64, f64)> = (0..5)
            .map(|i| (1530.0 + 8.0 * i as f64, 2.2e-5))
            .collect();
        // Roundoff floor: sub-femtosecond-per-nm slopes on a 22 us latency.
        let (poly, _) = fit_latency_polynomial(&pairs, 1550.0).unwrap();
        assert!(poly.b1_s_per_nm.abs() < 1e-18);
        assert!(poly.b2_s_per_nm2.abs() < 1e-19);
    }

    #[test]
    fn too_few_wavelengths_rejected() {
        let pairs = vec![(1540.0, 1e-5), (1550.0, 1.1e-5), (1540.0, 1e-5)];
        assert!(matches!(
            fit_latency_polynomial(&pairs, 1550.0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn noise_scales_fit_rms_as_expected() {
        // With n points and 3 parameters, E[rms] approaches
        // sigma * sqrt((n - 3) / n).
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let sigma_ps = 2.0;
        let n_rep = 300;
        let mut acc = 0.0;
        for _ in 0..n_rep {
            let pairs: Vec<(f64, f64)> = (0..7)
                .map(|i| {
                    let l = 1530.0 + i as f64 * 35.0 / 6.0;
                    let x: f64 = l - 1550.0;
                    let noise: f64 = rng.sample(rand_distr::StandardNormal);
                    (
                        l,
                        2.16e-5 + 7e-11 * x + 1e-13 * x * x + sigma_ps * 1e-12 * noise,
                    )
                })
                .collect();
            let (_, rms) = fit_latency_polynomial(&pairs, 1550.0).unwrap();
            acc += rms * 1e12;
        }
        let mean_rms = acc / n_rep as f64;
        let expected = sigma_ps * (4.0f64 / 7.0).sqrt();
        assert_relative_eq!(mean_rms, expected, max_relative = 0.20);
    }

    #[test]
    fn flat_polynomial_gives_zero_dispersion() {
        let poly = LatencyPolynomial {
            b0_s: 2.2e-5,
            b1_s_per_nm: 0.0,
            b2_s_per_nm2: 0.0,
            lambda0_nm: 1550.0,
        };
        let grid: Vec<f64> = (0..8).map(|i| 1530.0 + 5.0 * i as f64).collect();
        for (_, d) in compute_dispersion(&poly, 2.2, &grid) {
            assert_eq!(d, 0.0);
        }
    }

    #[test]
    fn doubling_length_halves_dispersion() {
        let poly = LatencyPolynomial {
            b0_s: 2.2e-5,
            b1_s_per_nm: 7.3e-11,
            b2_s_per_nm2: 1.3e-13,
            lambda0_nm: 1550.0,
        };
        let grid = [1540.0, 1550.0, 1560.0];
        let d1 = compute_dispersion(&poly, 2.2, &grid);
        let d2 = compute_dispersion(&poly, 4.4, &grid);
        for (a, b) in d1.iter().zip(&d2) {
            assert_relative_eq!(a.1, 2.0 * b.1, max_relative = 1e-12);
        }
    }

    #[test]
    fn analytic_curve_consistent_with_numeric_derivative() {
        let poly = LatencyPolynomial {
            b0_s: 2.2e-5,
            b1_s_per_nm: 7.3e-11,
            b2_s_per_nm2: 1.3e-13,
            lambda0_nm: 1550.0,
        };
        let l_km = 2.2095;
        for lambda in [1532.0, 1550.0, 1563.0] {
            // Central differences are exact for a quadratic, so a wide step
            // only reduces the cancellation against the 22 us base latency.
            let h = 0.5;
            let numeric =
                (poly.rtt_at(lambda + h) - poly.rtt_at(lambda - h)) / (2.0 * h);
            let d_numeric = numeric / (2.0 * l_km) * 1e12;
            let d_closed = compute_dispersion(&poly, l_km, &[lambda])[0].1;
            assert_relative_eq!(d_numeric, d_closed, max_relative = 1e-9);
        }
    }

    #[test]
    fn identical_curves_compare_to_zero() {
        let p = DispersionParams {
            d0_ps_per_nm_km: 16.5,
            s0_ps_per_nm2_km: 0.058,
            lambda0_nm: 1550.0,
        };
        let curve: Vec<(f64, f64)> = (0..8)
            .map(|i| {
                let l = 1530.0 + 5.0 * i as f64;
                (l, p.d_at(l))
            })
            .collect();
        let diff = compare_with_reference(&curve, &ReferenceDispersion::Analytic(p)).unwrap();
        assert!(diff < 1e-12);
    }

    #[test]
    fn constant_offset_compares_to_the_offset() {
        let p = DispersionParams {
            d0_ps_per_nm_km: 16.5,
            s0_ps_per_nm2_km: 0.058,
            lambda0_nm: 1550.0,
        };
        let curve: Vec<(f64, f64)> = (0..8)
            .map(|i| {
                let l = 1530.0 + 5.0 * i as f64;
                (l, p.d_at(l) + 0.1)
            })
            .collect();
        let diff = compare_with_reference(&curve, &ReferenceDispersion::Analytic(p)).unwrap();
        assert_relative_eq!(diff, 0.1, max_relative = 1e-9);
    }

    #[test]
    fn disjoint_tabulated_ranges_rejected() {
        let curve = vec![(1530.0, 16.2), (1540.0, 16.4)];
        let table = ReferenceDispersion::Tabulated(vec![(1600.0, 17.0), (1610.0, 17.2)]);
        assert!(compare_with_reference(&curve, &table).is_err());
    }

    #[test]
    fn evaluate_scan_end_to_end_on_synthetic_data() {
        let scan = synthetic_scan(34.2857, 0.3, 7);
        let grid: Vec<f64> = (0..71).map(|i| 1530.0 + 0.5 * i as f64).collect();
        let result = evaluate_scan(&scan, 1550.0, &grid, true).unwrap();
        let truth = DispersionParams {
            d0_ps_per_nm_km: 16.5,
            s0_ps_per_nm2_km: 0.058,
            lambda0_nm: 1550.0,
        };
        let diff =
            compare_with_reference(&result.d_curve, &ReferenceDispersion::Analytic(truth))
                .unwrap();
        assert!(diff < 0.05, "max dispersion error {diff} ps/nm/km");
        assert!(result.fit_rms_s * 1e12 < 5.0);

        // Skipping compensation on drifting data must degrade the fit.
        let uncompensated = evaluate_scan(&scan, 1550.0, &grid, false).unwrap();
        assert!(uncompensated.fit_rms_s > result.fit_rms_s);
    }
}
