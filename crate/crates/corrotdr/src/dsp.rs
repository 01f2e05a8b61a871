//! Shared DSP plumbing: FFT helpers, zero-phase low-pass filtering and
//! band-limited fractional-delay interpolation.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::Real;

/// Forward FFT of a real signal, zero-padded to length `n`.
pub(crate) fn fft_real<T: Real>(x: &[T], n: usize) -> Vec<Complex<T>> {
    let mut buf: Vec<Complex<T>> = Vec::with_capacity(n);
    buf.extend(x.iter().map(|&v| Complex::new(v, T::zero())));
    buf.resize(n, Complex::new(T::zero(), T::zero()));
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf
}

/// Inverse FFT, returning the real part scaled by 1/n.
pub(crate) fn ifft_real<T: Real>(mut buf: Vec<Complex<T>>) -> Vec<T> {
    let n = buf.len();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let scale = T::of(1.0 / n as f64);
    buf.into_iter().map(|c| c.re * scale).collect()
}

/// Circular convolution of two equal-length real signals.
pub(crate) fn circular_convolve<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let fa = fft_real(a, n);
    let fb = fft_real(b, n);
    let prod: Vec<Complex<T>> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    ifft_real(prod)
}

/// Applies a zero-phase low-pass with single-pole magnitude response
/// `|H(f)| = 1/sqrt(1 + (f/cutoff)^2)` to `samples`, circularly.
///
/// Zero phase (the filter is purely real in the frequency domain) means the
/// receiver model adds no group delay: peak centers stay where the channel
/// put them, which is what a delay-calibrated receiver chain looks like to
/// the analysis. A non-finite cutoff bypasses the filter.
pub(crate) fn zero_phase_lowpass<T: Real>(samples: &mut [T], sample_rate: f64, cutoff: f64) {
    if !cutoff.is_finite() || samples.is_empty() {
        return;
    }
    let n = samples.len();
    let mut buf = fft_real(samples, n);
    for (k, c) in buf.iter_mut().enumerate() {
        let f = if k <= n / 2 {
            k as f64 * sample_rate / n as f64
        } else {
            (k as f64 - n as f64) * sample_rate / n as f64
        };
        let gain = 1.0 / (1.0 + (f / cutoff).powi(2)).sqrt();
        *c *= T::of(gain);
    }
    let out = ifft_real(buf);
    samples.copy_from_slice(&out);
}

pub(crate) const FRAC_TAPS: usize = 31;
const FRAC_HALF: isize = (FRAC_TAPS as isize - 1) / 2;
/// Kaiser window shape parameter. At 31 taps this keeps the interpolation
/// error near 1e-5 of the signal for content below 0.25 cycles/sample.
const KAISER_BETA: f64 = 12.0;

/// Modified Bessel function I0, by series (converges quickly for the window
/// arguments used here).
fn bessel_i0(x: f64) -> f64 {
    let h = 0.5 * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..=40 {
        term *= (h / k as f64) * (h / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Kaiser-windowed sinc kernel realizing a delay of `frac` samples
/// (`0 <= frac < 1`): `y[k] = sum_m c[m] * x[k - m]` with `m` centered.
/// Normalized to unit DC gain so constant levels shift exactly.
pub(crate) fn fractional_delay_kernel(frac: f64) -> [f64; FRAC_TAPS] {
    debug_assert!((0.0..1.0).contains(&frac));
    let denom = bessel_i0(KAISER_BETA);
    let half_extent = FRAC_HALF as f64 + 1.0;
    let mut c = [0.0; FRAC_TAPS];
    for (i, cm) in c.iter_mut().enumerate() {
        let m = i as f64 - FRAC_HALF as f64;
        let x = m - frac;
        let t = x / half_extent;
        let w = if t.abs() < 1.0 {
            bessel_i0(KAISER_BETA * (1.0 - t * t).sqrt()) / denom
        } else {
            0.0
        };
        *cm = sinc(x) * w;
    }
    let s: f64 = c.iter().sum();
    for cm in &mut c {
        *cm /= s;
    }
    c
}

/// Adds `gain * pulse(t - delay_samples)` into `out`, circularly.
///
/// `pulse_start` is the index of `pulse[0]` on the output time axis when the
/// delay is zero. The fractional part of the delay is realized with the
/// windowed-sinc kernel, so sub-sample ground-truth delays are not quantized
/// to the sample grid.
pub(crate) fn add_delayed_pulse<T: Real>(
    out: &mut [T],
    pulse: &[T],
    pulse_start: isize,
    delay_samples: f64,
    gain: T,
) {
    if pulse.is_empty() || out.is_empty() {
        return;
    }
    let n0 = delay_samples.floor();
    let frac = delay_samples - n0;
    let kernel = fractional_delay_kernel(frac);
    let kernel_t: Vec<T> = kernel.iter().map(|&k| T::of(k)).collect();

    let n = out.len() as isize;
    let plen = pulse.len() as isize;
    let base = pulse_start + n0 as isize;
    for j in -FRAC_HALF..plen + FRAC_HALF + 1 {
        let mut acc = T::zero();
        for (mi, &km) in kernel_t.iter().enumerate() {
            let pi = j - (mi as isize - FRAC_HALF);
            if pi >= 0 && pi < plen {
                acc += pulse[pi as usize] * km;
            }
        }
        let idx = (base + j).rem_euclid(n) as usize;
        out[idx] += gain * acc;
    }
}
