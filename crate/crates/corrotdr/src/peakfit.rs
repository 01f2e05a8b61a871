//! Peak analysis: local-maximum detection in the filtered correlation,
//! four-parameter Gaussian fitting for sub-sample latency estimation, and
//! latency/consistency reporting.

use rayon::prelude::*;

use crate::corrproc::{self, CorrelationResult, SidelobeFilter};
use crate::error::{Error, Result};
use crate::fibersim::Trace;
use crate::seqgen::SampledWaveform;
use crate::Real;

/// Result of a Gaussian fit to one reflection peak.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakEstimate<T: Real = f64> {
    /// Peak center, seconds: the round-trip latency.
    pub center: T,
    /// Gaussian sigma, seconds.
    pub width: T,
    pub amplitude: T,
    pub offset: T,
    pub residual_rms: T,
    pub converged: bool,
    pub iterations: usize,
}

/// Latencies assigned by time order: input reflection, fiber end, and (when
/// present) the end-input-end triple whose delay must equal
/// `2 * end - input`. The consistency error is the built-in accuracy check.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyReport<T: Real = f64> {
    pub input_rtt: T,
    pub end_rtt: T,
    pub triple_rtt: Option<T>,
    /// `triple - (2 * end - input)`, seconds.
    pub consistency_error: Option<T>,
    /// `end - input`, seconds: the fiber-only round trip.
    pub fiber_rtt: T,
}

/// One row of the subset RMS study.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetRmsRow<T: Real = f64> {
    pub subset_size: usize,
    pub n_subsets: usize,
    /// RMS of the per-subset consistency errors, seconds.
    pub rms_error: T,
    /// Subsets dropped because a fit failed to converge or the triple peak
    /// was not recovered. Reported rather than silently skipped so the
    /// statistics cannot be quietly biased.
    pub n_excluded: usize,
}

/// Analysis-chain parameters shared by the CLI and the study helpers.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig<T: Real = f64> {
    /// Peak detection threshold relative to the global maximum.
    pub threshold_rel: T,
    /// Minimum peak separation, seconds.
    pub min_separation_s: T,
    pub max_peaks: usize,
    /// Gaussian fit window half-width, samples.
    pub fit_window_halfwidth: usize,
    /// Sidelobe filter regularization (relative to the autocorrelation peak).
    pub regularization: T,
}

/// Local maxima above `threshold_rel` times the global maximum, greedily
/// selected by descending amplitude with `min_separation` exclusion, returned
/// in lag order as `(index, value)` pairs.
pub fn detect_peaks<T: Real>(
    corr: &CorrelationResult<T>,
    threshold_rel: T,
    min_separation_s: T,
    max_peaks: usize,
) -> Result<Vec<(usize, T)>> {
    detect_peaks_bounded(corr, threshold_rel, min_separation_s, max_peaks, corr.len())
}

/// [`detect_peaks`] restricted to lags below `search_end`. The analysis
/// chain uses this to skip the trailing lags where the reference no longer
/// fully overlaps the record and the zero-padded correlation turns into an
/// edge artifact.
pub fn detect_peaks_bounded<T: Real>(
    corr: &CorrelationResult<T>,
    threshold_rel: T,
    min_separation_s: T,
    max_peaks: usize,
    search_end: usize,
) -> Result<Vec<(usize, T)>> {
    if threshold_rel <= T::zero() || threshold_rel >= T::one() {
        return Err(Error::invalid("threshold_rel must lie in (0, 1)"));
    }
    let v = &corr.values[..search_end.min(corr.len())];
    if v.len() < 3 {
        return Ok(Vec::new());
    }
    let global_max = v.iter().copied().fold(T::neg_infinity(), T::max);
    if global_max <= T::zero() {
        return Ok(Vec::new());
    }
    let threshold = threshold_rel * global_max;
    let mut candidates: Vec<(usize, T)> = (1..v.len() - 1)
        .filter(|&i| v[i] > v[i - 1] && v[i] >= v[i + 1] && v[i] >= threshold)
        .map(|i| (i, v[i]))
        .collect();
    candidates.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());

    let min_sep: f64 = (min_separation_s * corr.sample_rate).as_();
    let mut kept: Vec<(usize, T)> = Vec::new();
    for (i, val) in candidates {
        if kept.len() >= max_peaks {
            break;
        }
        if kept
            .iter()
            .all(|&(j, _)| (i as f64 - j as f64).abs() >= min_sep)
        {
            kept.push((i, val));
        }
    }
    kept.sort_by_key(|&(i, _)| i);
    Ok(kept)
}

/// Gaussian model value and its Jacobian row
/// `[df/dcenter, df/dwidth, df/damplitude, df/doffset]` at `x`.
///
/// `f(x) = offset + amplitude * exp(-(x - center)^2 / (2 width^2))`
pub fn gaussian_value_and_jacobian<T: Real>(
    center: T,
    width: T,
    amplitude: T,
    offset: T,
    x: T,
) -> (T, [T; 4]) {
    let u = x - center;
    let w2 = width * width;
    let e = (-u * u / (T::of(2.0) * w2)).exp();
    let value = offset + amplitude * e;
    let d_center = amplitude * e * u / w2;
    let d_width = amplitude * e * u * u / (w2 * width);
    (value, [d_center, d_width, e, T::one()])
}

fn sum_squared_residuals<T: Real>(xs: &[T], ys: &[T], p: &[T; 4]) -> T {
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let (f, _) = gaussian_value_and_jacobian(p[0], p[1], p[2], p[3], x);
            let r = y - f;
            r * r
        })
        .sum()
}

/// Damped Gauss-Newton (Levenberg-Marquardt) fit of the four-parameter
/// Gaussian over a window around the detected apex.
///
/// Initialization follows the window statistics: the center starts on the
/// apex lag, the offset on the window median, the amplitude on the apex
/// above that median and the width on the half-maximum crossing distance.
/// Iteration stops when the relative parameter step falls below 1e-10 or
/// after 200 iterations, whichever comes first; a non-converged result is
/// returned with `converged = false` rather than as an error.
pub fn fit_gaussian<T: Real>(
    corr: &CorrelationResult<T>,
    peak_index: usize,
    window_halfwidth: usize,
) -> Result<PeakEstimate<T>> {
    if window_halfwidth < 2 {
        return Err(Error::invalid("fit window must span at least 2 samples"));
    }
    if peak_index < window_halfwidth || peak_index + window_halfwidth >= corr.len() {
        return Err(Error::invalid(format!(
            "fit window around lag {peak_index} (halfwidth {window_halfwidth}) leaves the correlation"
        )));
    }
    let lo = peak_index - window_halfwidth;
    let hi = peak_index + window_halfwidth + 1;
    let ys: Vec<T> = corr.values[lo..hi].to_vec();
    // Local coordinates in sample units, centered on the apex, keep the
    // normal equations well conditioned regardless of the absolute delay.
    let xs: Vec<T> = (0..ys.len())
        .map(|i| T::of(i as f64 - window_halfwidth as f64))
        .collect();

    let y_min = ys.iter().copied().fold(T::infinity(), T::min);
    let y_max = ys.iter().copied().fold(T::neg_infinity(), T::max);
    if y_max <= y_min {
        return Err(Error::FitDegenerate);
    }

    let mut sorted = ys.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    let apex_val = ys[window_halfwidth];
    let amp0 = apex_val - median;
    if amp0 <= T::zero() {
        return Err(Error::FitDegenerate);
    }

    // Half-max crossing distance on each side of the apex.
    let half_level = median + amp0 / T::of(2.0);
    let mut right = window_halfwidth as f64;
    for (k, &y) in ys.iter().enumerate().skip(window_halfwidth + 1) {
        if y < half_level {
            right = (k - window_halfwidth) as f64;
            break;
        }
    }
    let mut left = window_halfwidth as f64;
    for k in (0..window_halfwidth).rev() {
        if ys[k] < half_level {
            left = (window_halfwidth - k) as f64;
            break;
        }
    }
    let hwhm = 0.5 * (left + right);
    let sigma0 = (hwhm / (2.0 * 2f64.ln()).sqrt()).max(0.3);

    let mut p: [T; 4] = [T::zero(), T::of(sigma0), amp0, median];
    let mut ssr = sum_squared_residuals(&xs, &ys, &p);
    let mut lambda = T::of(1e-3);
    let mut converged = false;
    let mut iterations = 0;
    let step_tol = T::of(1e-10);

    for _ in 0..200 {
        iterations += 1;
        // Normal equations J^T J and gradient J^T r.
        let mut n = [[T::zero(); 4]; 4];
        let mut g = [T::zero(); 4];
        for (&x, &y) in xs.iter().zip(&ys) {
            let (f, jrow) = gaussian_value_and_jacobian(p[0], p[1], p[2], p[3], x);
            let r = y - f;
            for a in 0..4 {
                g[a] += jrow[a] * r;
                for b in a..4 {
                    n[a][b] += jrow[a] * jrow[b];
                }
            }
        }
        let mut a = [T::zero(); 16];
        let mut rhs = [T::zero(); 4];
        for i in 0..4 {
            for j in 0..4 {
                let v = if j >= i { n[i][j] } else { n[j][i] };
                a[i * 4 + j] = v;
            }
            a[i * 4 + i] *= T::one() + lambda;
            rhs[i] = g[i];
        }
        if crate::linalg::cholesky_solve(&mut a, &mut rhs, 4).is_none() {
            lambda *= T::of(10.0);
            if lambda > T::of(1e12) {
                break;
            }
            continue;
        }
        let step = rhs;
        let step_norm = step.iter().map(|&s| s * s).sum::<T>().sqrt();
        let p_norm = p.iter().map(|&v| v * v).sum::<T>().sqrt();
        let trial = [p[0] + step[0], p[1] + step[1], p[2] + step[2], p[3] + step[3]];
        let trial_ssr = sum_squared_residuals(&xs, &ys, &trial);
        if trial_ssr < ssr {
            p = trial;
            ssr = trial_ssr;
            lambda = (lambda / T::of(10.0)).max(T::of(1e-12));
        } else {
            lambda *= T::of(10.0);
            if lambda > T::of(1e12) {
                break;
            }
        }
        if step_norm <= step_tol * (p_norm + T::of(1e-30)) {
            converged = true;
            break;
        }
    }

    let n_window = ys.len();
    let sample_rate = corr.sample_rate;
    let center_lag = T::of(peak_index as f64) + p[0];
    Ok(PeakEstimate {
        center: corr.t0 + center_lag / sample_rate,
        width: p[1].abs() / sample_rate,
        amplitude: p[2],
        offset: p[3],
        residual_rms: (ssr / T::of_usize(n_window)).sqrt(),
        converged,
        iterations,
    })
}

/// Assigns input/end/triple reflections by time order and computes the
/// fiber round trip and the triple-reflection consistency error.
pub fn latency_report<T: Real>(peaks: &[PeakEstimate<T>]) -> Result<LatencyReport<T>> {
    if peaks.len() < 2 {
        return Err(Error::InsufficientPeaks { found: peaks.len() });
    }
    if peaks.len() > 3 {
        return Err(Error::invalid(format!(
            "latency report expects 2 or 3 peaks, got {}",
            peaks.len()
        )));
    }
    for pair in peaks.windows(2) {
        if pair[1].center <= pair[0].center {
            return Err(Error::invalid("peaks must have ascending centers"));
        }
    }
    let input_rtt = peaks[0].center;
    let end_rtt = peaks[1].center;
    let triple_rtt = peaks.get(2).map(|p| p.center);
    let consistency_error =
        triple_rtt.map(|t3| t3 - (T::of(2.0) * end_rtt - input_rtt));
    Ok(LatencyReport {
        input_rtt,
        end_rtt,
        triple_rtt,
        consistency_error,
        fiber_rtt: end_rtt - input_rtt,
    })
}

/// Outcome of one average-correlate-filter-detect-fit pass.
#[derive(Debug, Clone)]
pub struct AnalysisOutcome<T: Real = f64> {
    /// The sidelobe-filtered correlation.
    pub correlation: CorrelationResult<T>,
    /// One estimate per detected peak, in lag order.
    pub peaks: Vec<PeakEstimate<T>>,
    /// Detected peaks whose fit errored out.
    pub n_failed_fits: usize,
}

impl<T: Real> AnalysisOutcome<T> {
    /// Peaks usable for latency reporting: converged, positive amplitude,
    /// and a residual smaller than the peak itself.
    pub fn accepted_peaks(&self) -> Vec<PeakEstimate<T>> {
        self.peaks
            .iter()
            .filter(|p| p.converged && p.amplitude > T::zero() && p.residual_rms < p.amplitude)
            .cloned()
            .collect()
    }
}

/// Runs the correlation stage of the pipeline on an averaged waveform.
///
/// Peak search stops where the reference stops fully overlapping the record
/// (minus the filter half-span): beyond that the zero-padded correlation is
/// an edge artifact, and any real reflection landing there would be wrapped
/// and ambiguous anyway.
pub fn analyze_average<T: Real>(
    averaged: &SampledWaveform<T>,
    reference: &SampledWaveform<T>,
    filter: &SidelobeFilter<T>,
    cfg: &PipelineConfig<T>,
) -> Result<AnalysisOutcome<T>> {
    let corr = corrproc::cross_correlate(averaged, reference)?;
    let filtered = corrproc::apply_filter(&corr, filter)?;
    let search_end = corr
        .len()
        .saturating_sub(reference.len() + filter.center_index() * filter.tap_spacing);
    let detected = detect_peaks_bounded(
        &filtered,
        cfg.threshold_rel,
        cfg.min_separation_s,
        cfg.max_peaks,
        search_end,
    )?;
    let mut peaks = Vec::with_capacity(detected.len());
    let mut n_failed_fits = 0;
    for (idx, _) in detected {
        match fit_gaussian(&filtered, idx, cfg.fit_window_halfwidth) {
            Ok(est) => peaks.push(est),
            Err(err) => {
                log::debug!("fit at lag {idx} failed: {err}");
                n_failed_fits += 1;
            }
        }
    }
    Ok(AnalysisOutcome {
        correlation: filtered,
        peaks,
        n_failed_fits,
    })
}

/// Splits `n_traces` into consecutive disjoint subsets of `subset_size`,
/// runs the full analysis per subset and returns the RMS of the
/// triple-reflection consistency error across subsets. The provider is
/// called with the trace index, which lets callers stream traces from disk
/// or regenerate them on demand.
pub fn subset_rms_with<T, F>(
    n_traces: usize,
    provider: F,
    reference: &SampledWaveform<T>,
    filter: &SidelobeFilter<T>,
    cfg: &PipelineConfig<T>,
    subset_size: usize,
) -> Result<SubsetRmsRow<T>>
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
            "subset size {subset_size} leaves fewer than 2 subsets of {n_traces} traces"
        )));
    }

    let outcomes: Vec<Option<T>> = (0..n_subsets)
        .into_par_iter()
        .map(|s| {
            let mut avg = corrproc::TraceAverager::new();
            for i in s * subset_size..(s + 1) * subset_size {
                avg.add(&provider(i)).ok()?;
            }
            let averaged = avg.finish().ok()?;
            let outcome = analyze_average(&averaged, reference, filter, cfg).ok()?;
            let accepted = outcome.accepted_peaks();
            let report = latency_report(&accepted).ok()?;
            report.consistency_error
        })
        .collect();

    let errors: Vec<T> = outcomes.iter().flatten().copied().collect();
    let n_excluded = n_subsets - errors.len();
    if errors.is_empty() {
        return Err(Error::invalid(
            "no subset produced a triple-reflection consistency error",
        ));
    }
    let rms = (errors.iter().map(|&e| e * e).sum::<T>() / T::of_usize(errors.len())).sqrt();
    Ok(SubsetRmsRow {
        subset_size,
        n_subsets,
        rms_error: rms,
        n_excluded,
    })
}

/// Slice-backed variant of [`subset_rms_with`].
pub fn subset_rms<T: Real>(
    traces: &[Trace<T>],
    reference: &SampledWaveform<T>,
    filter: &SidelobeFilter<T>,
    cfg: &PipelineConfig<T>,
    subset_size: usize,
) -> Result<SubsetRmsRow<T>> {
    subset_rms_with(
        traces.len(),
        |i| traces[i].clone(),
        reference,
        filter,
        cfg,
        subset_size,
    )
}
