//! PRBS probe generation: maximal-length LFSR sequences and their rendering
//! as sampled NRZ intensity bursts with trailing zero padding.

use crate::error::{Error, Result};
use crate::Real;

/// One full period of a maximal-length LFSR sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitSequence {
    /// The bits of one period, length `2^order - 1`.
    pub bits: Vec<u8>,
    /// LFSR register width.
    pub order: u32,
    /// Generator tap mask; bit `k` set means the polynomial contains the
    /// term `x^(k+1)` (the constant term is implicit). The ITU-conventional
    /// PRBS-7 polynomial `x^7 + x^6 + 1` is mask `0x60`.
    pub polynomial: u32,
}

impl BitSequence {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Number of ones; `2^(order-1)` for a maximal-length sequence.
    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    /// Bits mapped to +1/-1 (bit 1 -> +1).
    pub fn to_bipolar<T: Real>(&self) -> Vec<T> {
        self.bits
            .iter()
            .map(|&b| if b == 1 { T::one() } else { -T::one() })
            .collect()
    }
}

/// Default generator polynomial (tap mask) for a given order, taken from the
/// standard table of maximal-length LFSR feedback taps. PRBS-7 uses the
/// ITU-conventional `x^7 + x^6 + 1`.
pub fn default_polynomial(order: u32) -> Option<u32> {
    let mask = match order {
        3 => 0x6,
        4 => 0xC,
        5 => 0x14,
        6 => 0x30,
        7 => 0x60,
        8 => 0xB8,
        9 => 0x110,
        10 => 0x240,
        11 => 0x500,
        12 => 0x829,
        13 => 0x100D,
        14 => 0x2015,
        15 => 0x6000,
        16 => 0xD008,
        17 => 0x1_2000,
        18 => 0x2_0400,
        19 => 0x4_0023,
        20 => 0x9_0000,
        21 => 0x14_0000,
        22 => 0x30_0000,
        23 => 0x42_0000,
        24 => 0xE1_0000,
        25 => 0x120_0000,
        26 => 0x200_0023,
        27 => 0x400_0013,
        28 => 0x900_0000,
        29 => 0x1400_0000,
        30 => 0x2000_0029,
        31 => 0x4800_0000,
        _ => return None,
    };
    Some(mask)
}

/// Generates one full LFSR period starting from `seed`.
///
/// The register shifts left; the output bit is the top stage (bit
/// `order - 1`) and the feedback (parity of the tapped stages) enters at the
/// bottom. Generation fails with [`Error::InvalidPolynomial`] when the state
/// returns to the seed before `2^order - 1` steps, i.e. the mask is not
/// primitive.
pub fn gen_prbs(order: u32, polynomial: u32, seed: u32) -> Result<BitSequence> {
    if !(3..=31).contains(&order) {
        return Err(Error::invalid(format!(
            "PRBS order must be in 3..=31, got {order}"
        )));
    }
    let mask_all: u32 = (1u32 << order) - 1;
    if seed == 0 || (seed & !mask_all) != 0 {
        return Err(Error::invalid(format!(
            "LFSR seed must be a nonzero {order}-bit state, got {seed:#x}"
        )));
    }
    if polynomial & (1 << (order - 1)) == 0 || (polynomial & !mask_all) != 0 || polynomial == 0 {
        return Err(Error::invalid(format!(
            "tap mask {polynomial:#x} must set bit {} (the x^{order} term) and no bits above it",
            order - 1
        )));
    }

    let expected = (1usize << order) - 1;
    let mut bits = Vec::with_capacity(expected);
    let mut state = seed;
    for step in 0..expected {
        bits.push(((state >> (order - 1)) & 1) as u8);
        let feedback = (state & polynomial).count_ones() & 1;
        state = ((state << 1) | feedback) & mask_all;
        if state == seed && step + 1 < expected {
            return Err(Error::InvalidPolynomial {
                order,
                polynomial,
                period: step + 1,
                expected,
            });
        }
    }
    if state != seed {
        // The orbit through `seed` is longer than 2^order - 1 states, which
        // cannot happen for a maximal mask.
        return Err(Error::InvalidPolynomial {
            order,
            polynomial,
            period: expected + 1,
            expected,
        });
    }

    Ok(BitSequence {
        bits,
        order,
        polynomial,
    })
}

/// Transmit-side burst parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BurstSpec<T: Real = f64> {
    /// Modulation bit rate, Hz.
    pub bit_rate: T,
    /// Repetition period of the burst, seconds. Must exceed twice the fiber
    /// round-trip time so multi-reflection signals stay observable.
    pub period: T,
    /// Sample rate of the rendered waveform, samples/s; must be an integer
    /// multiple of the bit rate.
    pub sample_rate: T,
    /// Extinction ratio between the "1" and "0" intensity levels, dB.
    /// `infinity` gives an exact zero floor.
    pub extinction_ratio_db: T,
    /// Intensity of a transmitted "1".
    pub peak_level: T,
}

impl<T: Real> BurstSpec<T> {
    /// Samples per bit; errors unless `sample_rate / bit_rate` is integral.
    pub fn samples_per_bit(&self) -> Result<usize> {
        let ratio: f64 = (self.sample_rate / self.bit_rate).as_();
        let rounded = ratio.round();
        if ratio <= 0.0 || (ratio - rounded).abs() > 1e-6 * ratio.max(1.0) || rounded < 1.0 {
            return Err(Error::invalid(format!(
                "sample_rate must be an integer multiple of bit_rate (ratio {ratio})"
            )));
        }
        Ok(rounded as usize)
    }

    /// Intensity of a transmitted "0": `peak_level * 10^(-ER/10)`.
    pub fn zero_floor(&self) -> T {
        if self.extinction_ratio_db.is_infinite() {
            T::zero()
        } else {
            self.peak_level * T::of(10.0).powf(-self.extinction_ratio_db / T::of(10.0))
        }
    }

    /// Total samples in one period.
    pub fn period_samples(&self) -> usize {
        let n: f64 = (self.period * self.sample_rate).as_();
        n.round() as usize
    }
}

/// A uniformly sampled intensity waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledWaveform<T: Real = f64> {
    pub samples: Vec<T>,
    /// Samples per second.
    pub sample_rate: T,
    /// Time of the first sample, seconds.
    pub t0: T,
}

impl<T: Real> SampledWaveform<T> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time of sample `k`: `t0 + k / sample_rate`.
    pub fn time_of(&self, k: usize) -> T {
        self.t0 + T::of_usize(k) / self.sample_rate
    }

    pub fn duration(&self) -> T {
        T::of_usize(self.len()) / self.sample_rate
    }
}

/// Renders the sequence as an NRZ burst: each bit occupies
/// `sample_rate / bit_rate` consecutive samples at `peak_level` (one) or the
/// zero floor (zero); the remainder of the period is filled with the zero
/// floor, modeling the transmitted run of zeroes.
pub fn build_burst<T: Real>(seq: &BitSequence, spec: &BurstSpec<T>) -> Result<SampledWaveform<T>> {
    let spb = spec.samples_per_bit()?;
    if spec.peak_level <= T::zero() {
        return Err(Error::invalid("peak_level must be positive"));
    }
    let total = spec.period_samples();
    let burst_len = seq.len() * spb;
    if burst_len > total {
        return Err(Error::invalid(format!(
            "period holds {total} samples but the sequence needs {burst_len}"
        )));
    }
    let floor = spec.zero_floor();
    let mut samples = vec![floor; total];
    for (i, &bit) in seq.bits.iter().enumerate() {
        if bit == 1 {
            for s in &mut samples[i * spb..(i + 1) * spb] {
                *s = spec.peak_level;
            }
        }
    }
    Ok(SampledWaveform {
        samples,
        sample_rate: spec.sample_rate,
        t0: T::zero(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn prbs7() -> BitSequence {
        gen_prbs(7, default_polynomial(7).unwrap(), 0x7F).unwrap()
    }

    #[test]
    fn prbs7_has_full_length_and_balance() {
        let seq = prbs7();
        assert_eq!(seq.len(), 127);
        assert_eq!(seq.popcount(), 64);
    }

    #[test]
    fn order3_matches_hand_stepped_register() {
        // x^3 + x^2 + 1 (mask 0b110), seed 0b111, stepped by hand.
        let seq = gen_prbs(3, 0b110, 0b111).unwrap();
        assert_eq!(seq.bits, vec![1, 1, 1, 0, 0, 1, 0]);
    }

    #[test]
    fn every_window_appears_exactly_once() {
        for order in 3..=10u32 {
            let seq = gen_prbs(order, default_polynomial(order).unwrap(), 1).unwrap();
            let n = seq.len();
            let mut seen = HashSet::new();
            for start in 0..n {
                let mut window = 0u32;
                for k in 0..order as usize {
                    window = (window << 1) | seq.bits[(start + k) % n] as u32;
                }
                assert_ne!(window, 0, "zero window in order-{order} sequence");
                assert!(seen.insert(window), "repeated window in order {order}");
            }
            assert_eq!(seen.len(), n);
            assert_eq!(seq.popcount(), 1 << (order - 1));
        }
    }

    #[test]
    fn default_polynomials_are_maximal() {
        // Exhaustive period check; kept to orders that finish quickly.
        for order in 3..=22u32 {
            let poly = default_polynomial(order).unwrap();
            let seq = gen_prbs(order, poly, 1).unwrap();
            assert_eq!(seq.len(), (1 << order) - 1, "order {order}");
        }
    }

    #[test]
    fn zero_seed_rejected() {
        assert!(matches!(
            gen_prbs(7, 0x60, 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn non_maximal_polynomial_rejected() {
        // x^4 + x^2 + 1 = (x^2 + x + 1)^2 is not primitive.
        let err = gen_prbs(4, 0b1010, 1).unwrap_err();
        match err {
            Error::InvalidPolynomial {
                period, expected, ..
            } => {
                assert!(period < expected);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn mask_without_top_tap_rejected() {
        assert!(matches!(
            gen_prbs(7, 0b11, 1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(prbs7(), prbs7());
    }

    #[test]
    fn cyclic_autocorrelation_is_two_valued() {
        for order in [3u32, 5, 7, 10] {
            let seq = gen_prbs(order, default_polynomial(order).unwrap(), 1).unwrap();
            let b: Vec<f64> = seq.to_bipolar();
            let n = b.len();
            for lag in 0..n {
                let acf: f64 = (0..n).map(|i| b[i] * b[(i + lag) % n]).sum();
                let expected = if lag == 0 { n as f64 } else { -1.0 };
                assert!(
                    (acf - expected).abs() < 1e-9,
                    "order {order} lag {lag}: {acf}"
                );
            }
        }
    }

    fn paper_spec() -> BurstSpec {
        BurstSpec {
            bit_rate: 10e9,
            period: 50e-6,
            sample_rate: 40e9,
            extinction_ratio_db: 10.0,
            peak_level: 1.0,
        }
    }

    #[test]
    fn burst_arithmetic_matches_parameters() {
        let seq = prbs7();
        let burst = build_burst(&seq, &paper_spec()).unwrap();
        assert_eq!(burst.len(), 2_000_000);
        // 127 bits at 4 samples/bit occupy the first 508 samples; everything
        // after that sits at the zero floor.
        let floor = paper_spec().zero_floor();
        assert!(burst.samples[..508]
            .iter()
            .any(|&s| (s - 1.0).abs() < 1e-12));
        assert!(burst.samples[508..].iter().all(|&s| s == floor));
    }

    #[test]
    fn infinite_extinction_ratio_gives_exact_zeros() {
        let seq = prbs7();
        let spec = BurstSpec {
            extinction_ratio_db: f64::INFINITY,
            ..paper_spec()
        };
        let burst = build_burst(&seq, &spec).unwrap();
        for (i, &bit) in seq.bits.iter().enumerate() {
            if bit == 0 {
                assert_eq!(burst.samples[i * 4], 0.0);
            }
        }
        assert!(burst.samples[508..].iter().all(|&s| s == 0.0));
    }

    #[test]
    fn ten_db_extinction_gives_tenth_floor() {
        let spec = paper_spec();
        assert!((spec.zero_floor() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn too_short_period_rejected() {
        let seq = prbs7();
        let spec = BurstSpec {
            period: 10e-9,
            ..paper_spec()
        };
        assert!(matches!(
            build_burst(&seq, &spec),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn fractional_samples_per_bit_rejected() {
        let spec = BurstSpec {
            sample_rate: 25e9,
            ..paper_spec()
        };
        assert!(spec.samples_per_bit().is_err());
    }

    /// Threshold-decodes a burst back to bits at the mid level.
    fn decode_burst(burst: &SampledWaveform, spec: &BurstSpec, n_bits: usize) -> Vec<u8> {
        let spb = spec.samples_per_bit().unwrap();
        let mid = (spec.peak_level + spec.zero_floor()) / 2.0;
        (0..n_bits)
            .map(|i| u8::from(burst.samples[i * spb] > mid))
            .collect()
    }

    proptest! {
        #[test]
        fn burst_round_trips_to_bits(er in 3.1f64..40.0, order in 3u32..9) {
            let seq = gen_prbs(order, default_polynomial(order).unwrap(), 1).unwrap();
            let spec = BurstSpec {
                bit_rate: 10e9,
                period: 2.0 * seq.len() as f64 / 10e9,
                sample_rate: 40e9,
                extinction_ratio_db: er,
                peak_level: 1.0,
            };
            let burst = build_burst(&seq, &spec).unwrap();
            prop_assert_eq!(decode_burst(&burst, &spec, seq.len()), seq.bits);
        }
    }

    #[test]
    fn works_in_f32() {
        let seq = prbs7();
        let spec = BurstSpec::<f32> {
            bit_rate: 10e9,
            period: 1e-6,
            sample_rate: 40e9,
            extinction_ratio_db: f32::INFINITY,
            peak_level: 1.0,
        };
        let burst = build_burst(&seq, &spec).unwrap();
        assert_eq!(burst.len(), 40_000);
    }
}
