//! Correlation processing: trace averaging, fast cross-correlation against
//! the transmitted PRBS burst, and the bit-spaced sidelobe deconvolution
//! filter that removes the pre- and post-cursors of the aperiodic PRBS
//! autocorrelation.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rustfft::num_complex::Complex;

use crate::dsp;
use crate::error::{Error, Result};
use crate::fibersim::Trace;
use crate::linalg::cholesky_solve;
use crate::seqgen::{BitSequence, SampledWaveform};
use crate::Real;

/// Cross-correlation amplitude per lag. Lag `k` corresponds to a delay of
/// `t0 + k / sample_rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationResult<T: Real = f64> {
    pub values: Vec<T>,
    pub sample_rate: T,
    pub t0: T,
}

impl<T: Real> CorrelationResult<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Delay mapped to lag index `k`.
    pub fn delay_of(&self, k: usize) -> T {
        self.t0 + T::of_usize(k) / self.sample_rate
    }
}

/// Streaming mean of equally shaped traces; lets callers average a large
/// trace set without holding it in memory.
#[derive(Debug, Clone)]
pub struct TraceAverager<T: Real = f64> {
    sum: Vec<T>,
    count: usize,
    sample_rate: T,
    t0: T,
    wavelength_nm: T,
}

impl<T: Real> TraceAverager<T> {
    pub fn new() -> Self {
        TraceAverager {
            sum: Vec::new(),
            count: 0,
            sample_rate: T::zero(),
            t0: T::zero(),
            wavelength_nm: T::zero(),
        }
    }

    pub fn add(&mut self, trace: &Trace<T>) -> Result<()> {
        if self.count == 0 {
            self.sum = trace.waveform.samples.clone();
            self.sample_rate = trace.waveform.sample_rate;
            self.t0 = trace.waveform.t0;
            self.wavelength_nm = trace.wavelength_nm;
        } else {
            if trace.waveform.len() != self.sum.len() {
                return Err(Error::invalid(format!(
                    "trace length {} does not match {}",
                    trace.waveform.len(),
                    self.sum.len()
                )));
            }
            if trace.waveform.sample_rate != self.sample_rate
                || trace.wavelength_nm != self.wavelength_nm
            {
                return Err(Error::invalid(
                    "traces must share sample rate and wavelength",
                ));
            }
            for (acc, &s) in self.sum.iter_mut().zip(&trace.waveform.samples) {
                *acc += s;
            }
        }
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(self) -> Result<SampledWaveform<T>> {
        if self.count == 0 {
            return Err(Error::invalid("cannot average an empty trace list"));
        }
        let scale = T::one() / T::of_usize(self.count);
        Ok(SampledWaveform {
            samples: self.sum.into_iter().map(|s| s * scale).collect(),
            sample_rate: self.sample_rate,
            t0: self.t0,
        })
    }
}

impl<T: Real> Default for TraceAverager<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Pointwise arithmetic mean of a trace set.
pub fn average_traces<T: Real>(traces: &[Trace<T>]) -> Result<SampledWaveform<T>> {
    let mut avg = TraceAverager::new();
    for t in traces {
        avg.add(t)?;
    }
    avg.finish()
}

/// Builds the correlation reference: the PRBS bits in +1/-1 mapping, held for
/// `samples_per_bit` samples each. The bipolar mapping keeps the burst
/// zero-mean so the constant intensity floor of the received traces does not
/// produce a correlation ramp.
pub fn make_reference<T: Real>(
    seq: &BitSequence,
    samples_per_bit: usize,
    sample_rate: T,
) -> SampledWaveform<T> {
    let mut samples = Vec::with_capacity(seq.len() * samples_per_bit);
    for &bit in &seq.bits {
        let v = if bit == 1 { T::one() } else { -T::one() };
        samples.extend(std::iter::repeat_n(v, samples_per_bit));
    }
    SampledWaveform {
        samples,
        sample_rate,
        t0: T::zero(),
    }
}

/// Cross-correlates the received waveform against the reference:
/// `c[k] = sum_j received[j + k] * reference[j]`, computed by FFT fast
/// convolution. The output has one lag per received sample; lag `k` maps to
/// delay `t0 + k / sample_rate`.
pub fn cross_correlate<T: Real>(
    received: &SampledWaveform<T>,
    reference: &SampledWaveform<T>,
) -> Result<CorrelationResult<T>> {
    let n = received.len();
    let m = reference.len();
    if m == 0 || n == 0 {
        return Err(Error::invalid("empty input to cross_correlate"));
    }
    if m > n {
        return Err(Error::invalid(format!(
            "reference ({m} samples) longer than received ({n})"
        )));
    }
    let rel_rate: f64 = ((received.sample_rate - reference.sample_rate) / received.sample_rate)
        .abs()
        .as_();
    if rel_rate > 1e-9 {
        return Err(Error::invalid("sample rates of received and reference differ"));
    }

    let size = (n + m - 1).next_power_of_two();
    let fr = dsp::fft_real(&received.samples, size);
    let ff = dsp::fft_real(&reference.samples, size);
    let prod: Vec<Complex<T>> = fr.iter().zip(&ff).map(|(a, b)| a * b.conj()).collect();
    let full = dsp::ifft_real(prod);

    Ok(CorrelationResult {
        values: full[..n].to_vec(),
        sample_rate: received.sample_rate,
        t0: received.t0,
    })
}

/// The pre-calculated deconvolution filter. `2 * len(seq) + 1` taps placed
/// one bit period apart; for a PRBS-7 sequence that is 255 taps with the
/// center tap at index 127.
#[derive(Debug, Clone, PartialEq)]
pub struct SidelobeFilter<T: Real = f64> {
    /// Tap weights in bit-lag space, symmetric about the center tap.
    pub taps: Vec<T>,
    /// Tap spacing in samples (one bit period).
    pub tap_spacing: usize,
    /// Regularization weight relative to the squared autocorrelation peak.
    pub regularization: T,
    /// Conditioning estimate of the regularized normal equations (ratio of
    /// extreme Cholesky pivots, squared). Large values flag an
    /// ill-conditioned design rather than failing it.
    pub condition_estimate: T,
}

impl<T: Real> SidelobeFilter<T> {
    pub fn center_index(&self) -> usize {
        self.taps.len() / 2
    }
}

/// Bit-lag pattern a single reflection imprints on the correlation: the
/// aperiodic cross-correlation of the transmitted on-off bits against the
/// bipolar reference, lags `-(n-1)..=(n-1)`.
///
/// The transmitted burst is on-off keyed, so on top of the sequence
/// autocorrelation it carries the sliding partial sums of the reference
/// (the burst envelope correlating with the +-1 mapping). A filter designed
/// against the pure autocorrelation leaves that envelope structure standing;
/// deconvolving this pattern removes both.
pub fn transmit_correlation_pattern<T: Real>(seq: &BitSequence) -> Vec<T> {
    let b: Vec<T> = seq.to_bipolar();
    let n = b.len();
    let mut chi = vec![T::zero(); 2 * n - 1];
    for (i, slot) in chi.iter_mut().enumerate() {
        let lag = i as isize - (n as isize - 1);
        let mut acc = T::zero();
        for (j, &bj) in b.iter().enumerate() {
            let k = j as isize + lag;
            if k >= 0 && (k as usize) < n && seq.bits[k as usize] == 1 {
                acc += bj;
            }
        }
        *slot = acc;
    }
    chi
}

/// Weight (in power) of the center-lag residual in the deconvolution. Plain
/// unweighted least squares shaves several percent off the center to buy
/// sidelobe power; weighting the center row keeps the peak amplitude within
/// a fraction of a percent.
const CENTER_WEIGHT: f64 = 1e3;
/// Extra weight on the output lags within [`NEAR_SPAN_BITS`] of the center,
/// which pins the residues inside the Gaussian fit window to the 1e-3 level
/// so filtering cannot bias the sub-sample peak centers.
const NEAR_WEIGHT: f64 = 30.0;
const NEAR_SPAN_BITS: usize = 6;

/// Solves the weighted regularized least-squares deconvolution
/// `min ||W (pattern * g - d)||^2 + reg_abs ||g||^2` for taps `g`, where `d`
/// is the unit impulse at the center of the full convolution support.
/// `pattern` holds odd-length zero-lag-centered data.
fn solve_deconvolution<T: Real>(pattern: &[T], reg_abs: T) -> Option<(Vec<T>, T)> {
    assert!(pattern.len() % 2 == 1);
    let half = (pattern.len() - 1) / 2; // n - 1
    let n_taps = pattern.len() + 2; // 2n + 1
    let tap_half = half + 1; // n

    // Full aperiodic autocorrelation of the pattern: the unit-weight part of
    // the normal matrix is Toeplitz with entries phi[|i - j|].
    let mut phi = vec![T::zero(); n_taps];
    for (d, slot) in phi.iter_mut().enumerate() {
        let mut acc = T::zero();
        for u in 0..pattern.len() {
            if u + d < pattern.len() {
                acc += pattern[u] * pattern[u + d];
            }
        }
        *slot = acc;
    }

    // Row of the convolution operator at output lag t: pattern[t - m].
    let operator_row = |t: isize| -> Vec<T> {
        (0..n_taps)
            .map(|j| {
                let m = j as isize - tap_half as isize;
                let l = t - m + half as isize;
                if l >= 0 && (l as usize) < pattern.len() {
                    pattern[l as usize]
                } else {
                    T::zero()
                }
            })
            .collect()
    };

    let mut a = vec![T::zero(); n_taps * n_taps];
    for i in 0..n_taps {
        for j in 0..n_taps {
            a[i * n_taps + j] = phi[i.abs_diff(j)];
        }
        a[i * n_taps + i] += reg_abs;
    }

    // Reweighted rows enter as rank-one updates.
    let mut reweighted: Vec<(isize, f64)> = vec![(0, CENTER_WEIGHT)];
    for dt in 1..=NEAR_SPAN_BITS as isize {
        reweighted.push((dt, NEAR_WEIGHT));
        reweighted.push((-dt, NEAR_WEIGHT));
    }
    for &(t, w) in &reweighted {
        let row = operator_row(t);
        let dw = T::of(w - 1.0);
        for i in 0..n_taps {
            if row[i] == T::zero() {
                continue;
            }
            for j in 0..n_taps {
                a[i * n_taps + j] += dw * row[i] * row[j];
            }
        }
    }

    // rhs = A^T W d with d the center impulse.
    let mut rhs = operator_row(0);
    for r in &mut rhs {
        *r *= T::of(CENTER_WEIGHT);
    }

    let cond = cholesky_solve(&mut a, &mut rhs, n_taps)?;
    Some((rhs, cond))
}

/// Designs the sidelobe-removal filter for `seq`: regularized least-squares
/// deconvolution of the burst's bit-lag correlation pattern (see
/// [`transmit_correlation_pattern`]) towards a unit impulse, solved once in
/// bit-spaced lag space. `regularization` is relative to the squared pattern
/// peak; at zero the solver escalates a tiny ridge until the system factors
/// and reports the conditioning in the result instead of failing.
pub fn design_sidelobe_filter<T: Real>(
    seq: &BitSequence,
    regularization: T,
    samples_per_bit: usize,
) -> SidelobeFilter<T> {
    assert!(samples_per_bit >= 1, "samples_per_bit must be at least 1");
    let pattern = transmit_correlation_pattern::<T>(seq);
    let peak = pattern[(pattern.len() - 1) / 2];
    let mut reg = regularization.max(T::zero());
    let mut reg_abs = reg * peak * peak;
    loop {
        if let Some((taps, cond)) = solve_deconvolution(&pattern, reg_abs) {
            return SidelobeFilter {
                taps,
                tap_spacing: samples_per_bit,
                regularization: reg,
                condition_estimate: cond,
            };
        }
        // Not positive definite at this ridge; escalate and keep going.
        reg = if reg == T::zero() {
            T::of(1e-12)
        } else {
            reg * T::of(10.0)
        };
        reg_abs = reg * peak * peak;
        log::warn!(
            "deconvolution system ill-conditioned; escalating regularization to {reg}"
        );
    }
}

/// Convolves the correlation with the bit-spaced filter kernel. Taps are
/// placed every `tap_spacing` samples symmetrically about the center tap, so
/// the lag axis is preserved and peak centers do not move.
pub fn apply_filter<T: Real>(
    corr: &CorrelationResult<T>,
    filt: &SidelobeFilter<T>,
) -> Result<CorrelationResult<T>> {
    if filt.tap_spacing == 0 || filt.tap_spacing >= corr.len().max(1) {
        return Err(Error::invalid(format!(
            "tap spacing {} inconsistent with correlation length {}",
            filt.tap_spacing,
            corr.len()
        )));
    }
    let center = filt.center_index() as isize;
    let spacing = filt.tap_spacing as isize;
    let n = corr.len() as isize;
    let mut out = vec![T::zero(); corr.len()];
    for (j, &tap) in filt.taps.iter().enumerate() {
        if tap == T::zero() {
            continue;
        }
        let offset = (j as isize - center) * spacing;
        let lo = 0.max(offset);
        let hi = n.min(n + offset);
        for i in lo..hi {
            out[i as usize] += tap * corr.values[(i - offset) as usize];
        }
    }
    Ok(CorrelationResult {
        values: out,
        sample_rate: corr.sample_rate,
        t0: corr.t0,
    })
}

#[derive(PartialEq, Eq, Hash)]
struct FilterKey {
    bits: Vec<u8>,
    reg_bits: u64,
    samples_per_bit: usize,
}

/// Concurrent cache for designed filters: the deconvolution is solved once
/// per (sequence, regularization, spacing) and shared afterwards.
pub struct FilterCache<T: Real = f64> {
    inner: RwLock<HashMap<FilterKey, Arc<SidelobeFilter<T>>>>,
}

impl<T: Real> FilterCache<T> {
    pub fn new() -> Self {
        FilterCache {
            inner: RwLock::new(HashMap::new()),
        }
    }

    pub fn get_or_design(
        &self,
        seq: &BitSequence,
        regularization: T,
        samples_per_bit: usize,
    ) -> Arc<SidelobeFilter<T>> {
        let key = FilterKey {
            bits: seq.bits.clone(),
            reg_bits: <T as num_traits::AsPrimitive<f64>>::as_(regularization).to_bits(),
            samples_per_bit,
        };
        if let Some(f) = self.inner.read().unwrap().get(&key) {
            return Arc::clone(f);
        }
        let designed = Arc::new(design_sidelobe_filter(seq, regularization, samples_per_bit));
        let mut map = self.inner.write().unwrap();
        Arc::clone(map.entry(key).or_insert(designed))
    }
}

impl<T: Real> Default for FilterCache<T> {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use crate::seqgen::{self, gen_prbs};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn wave(samples: Vec<f64>) -> SampledWaveform {
        SampledWaveform {
            samples,
            sample_rate: 10e9,
            t0: 0.0,
        }
    }

    fn trace_of(samples: Vec<f64>) -> Trace {
        Trace {
            waveform: wave(samples),
            wall_clock: 0.0,
            wavelength_nm: 1550.0,
        }
    }

    #[test]
    fn impulse_probe_reproduces_reversed_reference() {
        let reference = wave(vec![1.0, 2.0, 3.0, 4.0]);
        let mut rx = vec![0.0; 16];
        rx[9] = 1.0;
        let c = cross_correlate(&wave(rx), &reference).unwrap();
        // c[k] = reference[9 - k]
        for (k, &v) in c.values.iter().enumerate() {
            let expected = if (6..=9).contains(&k) {
                reference.samples[9 - k]
            } else {
                0.0
            };
            assert_relative_eq!(v, expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn prbs_self_correlation_peaks_at_508() {
        let seq = gen_prbs(7, seqgen::default_polynomial(7).unwrap(), 0x7F).unwrap();
        let reference = make_reference::<f64>(&seq, 4, 40e9);
        let c = cross_correlate(&reference, &reference).unwrap();
        let direct = oracle::direct_cross_correlate(&reference.samples, &reference.samples);
        assert_relative_eq!(c.values[0], 508.0, epsilon = 1e-6);
        assert_relative_eq!(direct[0], 508.0, epsilon = 1e-9);
    }

    #[test]
    fn reference_longer_than_received_rejected() {
        let r = wave(vec![1.0; 8]);
        let f = wave(vec![1.0; 9]);
        assert!(cross_correlate(&r, &f).is_err());
    }

    #[test]
    fn linearity_holds_pointwise() {
        let a = wave((0..200).map(|i| (i as f64 * 0.1).sin()).collect());
        let b = wave((0..200).map(|i| (i as f64 * 0.05).cos()).collect());
        let r = wave((0..32).map(|i| (i as f64 * 0.3).sin()).collect());
        let sum = wave(
            a.samples
                .iter()
                .zip(&b.samples)
                .map(|(x, y)| x + y)
                .collect(),
        );
        let ca = cross_correlate(&a, &r).unwrap();
        let cb = cross_correlate(&b, &r).unwrap();
        let cs = cross_correlate(&sum, &r).unwrap();
        for k in 0..cs.len() {
            assert!((cs.values[k] - (ca.values[k] + cb.values[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn shifting_received_shifts_lags() {
        let r = wave((0..16).map(|i| ((i * 7) % 5) as f64 - 2.0).collect());
        let mut base = vec![0.0; 128];
        base[20..36].copy_from_slice(&r.samples);
        let shift = 11usize;
        let mut moved = vec![0.0; 128];
        moved[20 + shift..36 + shift].copy_from_slice(&r.samples);
        let c0 = cross_correlate(&wave(base), &r).unwrap();
        let c1 = cross_correlate(&wave(moved), &r).unwrap();
        for k in 0..c0.len() - shift {
            assert_relative_eq!(c1.values[k + shift], c0.values[k], epsilon = 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn fast_correlation_matches_direct_sum(
            n in 64usize..600,
            m in 4usize..64,
            seed in 0u64..1000,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let rx: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let rf: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let fast = cross_correlate(&wave(rx.clone()), &wave(rf.clone())).unwrap();
            let direct = oracle::direct_cross_correlate(&rx, &rf);
            let scale = direct.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-30);
            for k in 0..n {
                prop_assert!((fast.values[k] - direct[k]).abs() <= 1e-9 * scale);
            }
        }
    }

    #[test]
    fn fast_matches_direct_at_ten_thousand_samples() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let rx: Vec<f64> = (0..10_000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rf: Vec<f64> = (0..508).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fast = cross_correlate(&wave(rx.clone()), &wave(rf.clone())).unwrap();
        let direct = oracle::direct_cross_correlate(&rx, &rf);
        let scale = direct.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        for k in 0..rx.len() {
            assert!(
                (fast.values[k] - direct[k]).abs() <= 1e-9 * scale,
                "lag {k}"
            );
        }
    }

    #[test]
    fn averaging_identical_traces_is_identity() {
        let t = trace_of(vec![1.0, 2.0, 3.0]);
        let avg = average_traces(&[t.clone(), t.clone(), t.clone()]).unwrap();
        assert_eq!(avg.samples, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn averaging_two_traces_is_midpoint() {
        let a = trace_of(vec![1.0, 0.0]);
        let b = trace_of(vec![3.0, 2.0]);
        let avg = average_traces(&[a, b]).unwrap();
        assert_eq!(avg.samples, vec![2.0, 1.0]);
    }

    #[test]
    fn empty_and_mismatched_inputs_rejected() {
        assert!(average_traces::<f64>(&[]).is_err());
        let a = trace_of(vec![1.0, 2.0]);
        let b = trace_of(vec![1.0, 2.0, 3.0]);
        assert!(average_traces(&[a, b]).is_err());
    }

    #[test]
    fn averaging_reduces_noise_by_sqrt_n() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let n_traces = 1000;
        let len = 4000;
        let sigma = 0.5;
        let mut avg = TraceAverager::new();
        for _ in 0..n_traces {
            let samples: Vec<f64> = (0..len)
                .map(|_| {
                    let u: f64 = rng.sample(rand_distr::StandardNormal);
                    u * sigma
                })
                .collect();
            avg.add(&trace_of(samples)).unwrap();
        }
        let mean = avg.finish().unwrap();
        let var: f64 =
            mean.samples.iter().map(|&s| s * s).sum::<f64>() / mean.samples.len() as f64;
        let expected = sigma / (n_traces as f64).sqrt();
        assert_relative_eq!(var.sqrt(), expected, max_relative = 0.10);
    }

    fn prbs7_filter(reg: f64) -> (BitSequence, SidelobeFilter) {
        let seq = gen_prbs(7, seqgen::default_polynomial(7).unwrap(), 0x7F).unwrap();
        let filt = design_sidelobe_filter(&seq, reg, 4);
        (seq, filt)
    }

    #[test]
    fn filter_has_255_taps_for_order_7() {
        let (_, filt) = prbs7_filter(1e-3);
        assert_eq!(filt.taps.len(), 255);
        assert_eq!(filt.center_index(), 127);
    }

    #[test]
    fn pattern_center_counts_the_ones() {
        let seq = gen_prbs(7, seqgen::default_polynomial(7).unwrap(), 0x7F).unwrap();
        let chi = transmit_correlation_pattern::<f64>(&seq);
        assert_eq!(chi.len(), 253);
        assert_eq!(chi[126], 64.0);
    }

    /// Applies taps to a zero-lag-centered bit pattern, returning output lags
    /// within the pattern's own span.
    fn apply_taps_in_bit_space(pattern: &[f64], filt: &SidelobeFilter) -> Vec<f64> {
        let half = (pattern.len() as isize - 1) / 2;
        let tap_half = (filt.taps.len() as isize - 1) / 2;
        (-half..=half)
            .map(|t| {
                filt.taps
                    .iter()
                    .enumerate()
                    .map(|(j, &g)| {
                        let m = j as isize - tap_half;
                        let l = t - m + half;
                        if l >= 0 && (l as usize) < pattern.len() {
                            g * pattern[l as usize]
                        } else {
                            0.0
                        }
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn filter_suppresses_burst_pattern_and_preserves_center() {
        let (seq, filt) = prbs7_filter(1e-3);
        let pattern = transmit_correlation_pattern::<f64>(&seq);
        let out = apply_taps_in_bit_space(&pattern, &filt);
        let center_idx = seq.len() - 1;
        let center = out[center_idx];
        assert!((center - 1.0).abs() <= 0.01, "center distorted: {center}");
        let worst = out
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != center_idx)
            .fold(0.0f64, |a, (_, &v)| a.max(v.abs()));
        assert!(
            worst <= 0.1 * center,
            "sidelobe suppression only {:.1} dB",
            20.0 * (center / worst).log10()
        );
    }

    /// Aperiodic autocorrelation of the bipolar sequence; lags
    /// `-(n-1)..=(n-1)` stored in order.
    fn aperiodic_autocorrelation(seq: &BitSequence) -> Vec<f64> {
        let b: Vec<f64> = seq.to_bipolar();
        let n = b.len();
        (0..2 * n - 1)
            .map(|i| {
                let lag = i as isize - (n as isize - 1);
                b.iter()
                    .enumerate()
                    .filter_map(|(j, &bj)| {
                        let k = j as isize + lag;
                        if k >= 0 && (k as usize) < n {
                            Some(bj * b[k as usize])
                        } else {
                            None
                        }
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn bipolar_autocorrelation_deconvolution_meets_the_same_bar() {
        // The same solver pointed at the sequence's own +-1 autocorrelation:
        // center within 1 %, sidelobes at least 20 dB down.
        let seq = gen_prbs(7, seqgen::default_polynomial(7).unwrap(), 0x7F).unwrap();
        let rho = aperiodic_autocorrelation(&seq);
        let reg_abs = 1e-3 * (seq.len() * seq.len()) as f64;
        let (taps, _) = solve_deconvolution(&rho, reg_abs).unwrap();
        let filt = SidelobeFilter {
            taps,
            tap_spacing: 4,
            regularization: 1e-3,
            condition_estimate: 1.0,
        };
        let out = apply_taps_in_bit_space(&rho, &filt);
        let center_idx = seq.len() - 1;
        let center = out[center_idx];
        assert!((center - 1.0).abs() <= 0.01, "center distorted: {center}");
        let worst = out
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != center_idx)
            .fold(0.0f64, |a, (_, &v)| a.max(v.abs()));
        assert!(
            worst <= 0.1 * center,
            "suppression only {:.1} dB",
            20.0 * (center / worst).log10()
        );
    }

    #[test]
    fn near_in_residues_are_tiny() {
        // The weighted design keeps the fit window around the peak clean so
        // filtering cannot bias the Gaussian centers.
        let (seq, filt) = prbs7_filter(1e-3);
        let pattern = transmit_correlation_pattern::<f64>(&seq);
        let out = apply_taps_in_bit_space(&pattern, &filt);
        let center_idx = seq.len() - 1;
        for dt in 1..=6usize {
            assert!(out[center_idx + dt].abs() < 5e-3, "residue at +{dt} bits");
            assert!(out[center_idx - dt].abs() < 5e-3, "residue at -{dt} bits");
        }
    }

    #[test]
    fn deconvolving_a_delta_returns_a_delta() {
        // Autocorrelation already an impulse: the optimal taps are the
        // identity up to the regularization bias.
        let mut rho = vec![0.0f64; 9];
        rho[4] = 5.0;
        let (taps, _) = solve_deconvolution(&rho, 1e-3 * 25.0).unwrap();
        let center = taps.len() / 2;
        assert_relative_eq!(taps[center], 1.0 / 5.0, max_relative = 2e-3);
        for (j, &t) in taps.iter().enumerate() {
            if j != center {
                assert!(t.abs() < 1e-12, "tap {j} = {t}");
            }
        }
    }

    #[test]
    fn identity_filter_passes_input_through() {
        let mut taps = vec![0.0; 255];
        taps[127] = 1.0;
        let filt = SidelobeFilter {
            taps,
            tap_spacing: 4,
            regularization: 0.0,
            condition_estimate: 1.0,
        };
        let corr = CorrelationResult {
            values: (0..4096).map(|i| (i as f64 * 0.01).sin()).collect(),
            sample_rate: 10e9,
            t0: 0.0,
        };
        let out = apply_filter(&corr, &filt).unwrap();
        assert_eq!(out.values, corr.values);
    }

    #[test]
    fn inconsistent_spacing_rejected() {
        let (_, filt) = prbs7_filter(1e-3);
        let corr = CorrelationResult {
            values: vec![0.0; 3],
            sample_rate: 10e9,
            t0: 0.0,
        };
        assert!(apply_filter(&corr, &filt).is_err());
    }

    #[test]
    fn zero_regularization_reports_conditioning_instead_of_failing() {
        let seq = gen_prbs(7, seqgen::default_polynomial(7).unwrap(), 0x7F).unwrap();
        let filt = design_sidelobe_filter::<f64>(&seq, 0.0, 4);
        assert_eq!(filt.taps.len(), 255);
        assert!(filt.condition_estimate.is_finite());
    }

    #[test]
    fn suppression_quality_across_regularization_sweep() {
        // Logged curve only: suppression degrades as the ridge grows past
        // the design point.
        let seq = gen_prbs(7, seqgen::default_polynomial(7).unwrap(), 0x7F).unwrap();
        let pattern = transmit_correlation_pattern::<f64>(&seq);
        for reg in [1e-5, 1e-4, 1e-3, 1e-2, 1e-1] {
            let filt = design_sidelobe_filter(&seq, reg, 4);
            let out = apply_taps_in_bit_space(&pattern, &filt);
            let center = out[seq.len() - 1];
            let worst = out
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != seq.len() - 1)
                .fold(0.0f64, |a, (_, &v)| a.max(v.abs()));
            log::info!(
                "reg {reg:.0e}: center {center:.4}, peak-to-sidelobe {:.1} dB",
                20.0 * (center / worst).log10()
            );
        }
    }

    #[test]
    fn filter_cache_designs_once_and_shares() {
        let seq = gen_prbs(7, seqgen::default_polynomial(7).unwrap(), 0x7F).unwrap();
        let cache = FilterCache::<f64>::new();
        let a = cache.get_or_design(&seq, 1e-3, 4);
        let b = cache.get_or_design(&seq, 1e-3, 4);
        assert!(Arc::ptr_eq(&a, &b));
        let c = cache.get_or_design(&seq, 1e-2, 4);
        assert!(!Arc::ptr_eq(&a, &c));
    }

    #[test]
    fn correlation_works_in_f32() {
        let seq = gen_prbs(7, seqgen::default_polynomial(7).unwrap(), 0x7F).unwrap();
        let reference = make_reference::<f32>(&seq, 4, 40e9);
        let c = cross_correlate(&reference, &reference).unwrap();
        assert!((c.values[0] - 508.0).abs() < 1e-2);
    }
}
