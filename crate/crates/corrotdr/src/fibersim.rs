//! Reflective fiber channel simulation: discrete reflection paths including
//! multi-bounce combinations, wavelength-dependent group delay, temperature
//! drift, attenuation, frozen coherent backscatter and receiver effects.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;

use crate::dsp;
use crate::error::{Error, Result};
use crate::seqgen::SampledWaveform;
use crate::{Real, SPEED_OF_LIGHT};

/// A discrete reflector along the fiber.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionEvent<T: Real = f64> {
    /// Distance from the fiber input, meters.
    pub position_m: T,
    /// Power reflectivity in (0, 1].
    pub reflectivity: T,
    pub label: String,
}

impl<T: Real> ReflectionEvent<T> {
    pub fn new(position_m: T, reflectivity: T, label: impl Into<String>) -> Self {
        ReflectionEvent {
            position_m,
            reflectivity,
            label: label.into(),
        }
    }
}

/// Linear chromatic dispersion model: `D(lambda) = d0 + s0 (lambda - lambda0)`
/// in ps/(nm km), which makes the group delay quadratic in wavelength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionParams<T: Real = f64> {
    pub d0_ps_per_nm_km: T,
    pub s0_ps_per_nm2_km: T,
    pub lambda0_nm: T,
}

impl<T: Real> DispersionParams<T> {
    pub fn d_at(&self, lambda_nm: T) -> T {
        self.d0_ps_per_nm_km + self.s0_ps_per_nm2_km * (lambda_nm - self.lambda0_nm)
    }
}

/// Laboratory temperature as a function of wall-clock time.
#[derive(Debug, Clone, PartialEq)]
pub enum TemperatureDrift<T: Real = f64> {
    /// Constant drift rate in degC per hour.
    Linear { deg_c_per_hour: T },
    /// Piecewise-linear (wall_clock seconds, degC) samples; clamped outside
    /// the covered span.
    PiecewiseLinear(Vec<(T, T)>),
}

/// Thermal model of the fiber: the round-trip delay scales by
/// `1 + coeff * (T(t) - t_ref)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureProfile<T: Real = f64> {
    pub t_ref_deg_c: T,
    pub drift: TemperatureDrift<T>,
    /// Relative delay change per degC; typical fiber sits near 7e-6.
    pub coeff_per_deg_c: T,
}

impl<T: Real> TemperatureProfile<T> {
    pub fn stable(t_ref_deg_c: T, coeff_per_deg_c: T) -> Self {
        TemperatureProfile {
            t_ref_deg_c,
            drift: TemperatureDrift::Linear {
                deg_c_per_hour: T::zero(),
            },
            coeff_per_deg_c,
        }
    }

    pub fn temperature_at(&self, wall_clock_s: T) -> T {
        match &self.drift {
            TemperatureDrift::Linear { deg_c_per_hour } => {
                self.t_ref_deg_c + *deg_c_per_hour * wall_clock_s / T::of(3600.0)
            }
            TemperatureDrift::PiecewiseLinear(points) => {
                if points.is_empty() {
                    return self.t_ref_deg_c;
                }
                if wall_clock_s <= points[0].0 {
                    return points[0].1;
                }
                for pair in points.windows(2) {
                    let (t0, v0) = pair[0];
                    let (t1, v1) = pair[1];
                    if wall_clock_s <= t1 {
                        let f = (wall_clock_s - t0) / (t1 - t0);
                        return v0 + f * (v1 - v0);
                    }
                }
                points[points.len() - 1].1
            }
        }
    }

    /// Multiplicative delay scale at the given wall clock.
    pub fn delay_scale_at(&self, wall_clock_s: T) -> T {
        T::one() + self.coeff_per_deg_c * (self.temperature_at(wall_clock_s) - self.t_ref_deg_c)
    }
}

/// The fiber under test.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberModel<T: Real = f64> {
    /// Physical length, meters.
    pub length_m: T,
    /// Group index at the dispersion reference wavelength.
    pub group_index: T,
    pub attenuation_db_per_km: T,
    /// Round-trip delay from the receiver reference plane to the fiber input
    /// (coupler and lead-in patch), seconds. Not temperature-scaled: it is
    /// the timing reference the fiber measurement is made against.
    pub lead_in_delay_s: T,
    /// Reflectors, positions strictly increasing.
    pub events: Vec<ReflectionEvent<T>>,
    pub dispersion: DispersionParams<T>,
    pub temperature: TemperatureProfile<T>,
    /// Maximum number of reflections per enumerated path.
    pub max_bounce_order: u32,
    /// Seed of the frozen backscatter speckle; a property of the fiber, held
    /// fixed across traces.
    pub speckle_seed: u64,
}

impl<T: Real> FiberModel<T> {
    /// Fiber length that yields the given full-fiber round-trip time at the
    /// reference wavelength and temperature.
    pub fn length_for_rtt(fiber_rtt_s: T, group_index: T) -> T {
        fiber_rtt_s * T::of(SPEED_OF_LIGHT) / (T::of(2.0) * group_index)
    }

    /// Full-fiber round-trip time at the reference wavelength and temperature.
    pub fn base_rtt(&self) -> T {
        T::of(2.0) * self.length_m * self.group_index / T::of(SPEED_OF_LIGHT)
    }

    pub fn validate(&self) -> Result<()> {
        if self.length_m <= T::zero() {
            return Err(Error::invalid("fiber length must be positive"));
        }
        if self.group_index <= T::one() || self.group_index >= T::of(2.0) {
            return Err(Error::invalid("group index must lie in (1, 2)"));
        }
        if self.attenuation_db_per_km < T::zero() {
            return Err(Error::invalid("attenuation must be non-negative"));
        }
        if self.lead_in_delay_s < T::zero() {
            return Err(Error::invalid("lead-in delay must be non-negative"));
        }
        if self.max_bounce_order < 1 {
            return Err(Error::invalid("max_bounce_order must be at least 1"));
        }
        if self.temperature.coeff_per_deg_c <= T::zero() {
            return Err(Error::invalid("temperature coefficient must be positive"));
        }
        let mut prev = -T::one();
        for ev in &self.events {
            if ev.position_m < T::zero() || ev.position_m > self.length_m {
                return Err(Error::invalid(format!(
                    "event '{}' lies outside the fiber",
                    ev.label
                )));
            }
            if ev.position_m <= prev {
                return Err(Error::invalid(
                    "event positions must be strictly increasing",
                ));
            }
            if ev.reflectivity <= T::zero() || ev.reflectivity > T::one() {
                return Err(Error::invalid(format!(
                    "event '{}' reflectivity must lie in (0, 1]",
                    ev.label
                )));
            }
            prev = ev.position_m;
        }
        Ok(())
    }

    /// One-way group delay per meter at `lambda_nm`, without the temperature
    /// scale: `n_g/c` plus the integrated dispersion offset.
    fn per_meter_one_way(&self, lambda_nm: T) -> T {
        let dl = lambda_nm - self.dispersion.lambda0_nm;
        // D integrated over wavelength: ps/(nm km) * nm -> ps/km -> s/m is 1e-15.
        let disp = (self.dispersion.d0_ps_per_nm_km * dl
            + self.dispersion.s0_ps_per_nm2_km * dl * dl / T::of(2.0))
            * T::of(1e-15);
        self.group_index / T::of(SPEED_OF_LIGHT) + disp
    }
}

fn check_wavelength<T: Real>(lambda_nm: T) -> Result<()> {
    let l: f64 = lambda_nm.as_();
    if !(1260.0..=1650.0).contains(&l) {
        return Err(Error::invalid(format!(
            "wavelength {l} nm outside the supported 1260-1650 nm range"
        )));
    }
    Ok(())
}

/// Round-trip group delay of the full fiber at the given wavelength and wall
/// clock: quadratic in wavelength through the linear dispersion model,
/// scaled by the temperature factor. Excludes the lead-in offset.
pub fn group_delay_rtt<T: Real>(model: &FiberModel<T>, lambda_nm: T, wall_clock_s: T) -> Result<T> {
    check_wavelength(lambda_nm)?;
    let one_way = model.per_meter_one_way(lambda_nm) * model.length_m;
    Ok(T::of(2.0) * one_way * model.temperature.delay_scale_at(wall_clock_s))
}

/// One reflection path through the channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PathContribution<T: Real = f64> {
    /// Arrival delay at the receiver, seconds.
    pub delay_s: T,
    /// Linear power amplitude: reflectivities, pass-through transmittances
    /// and fiber attenuation over the traveled distance.
    pub amplitude: T,
    pub label: String,
    /// Number of reflections along the path.
    pub bounces: u32,
}

struct PathWalker<'a, T: Real> {
    events: &'a [ReflectionEvent<T>],
    max_bounce: u32,
    /// (total distance, reflect/transmit product, event indices bounced on)
    found: Vec<(T, T, Vec<usize>)>,
}

impl<'a, T: Real> PathWalker<'a, T> {
    fn forward(&mut self, next: usize, pos: T, dist: T, amp: T, bounces: u32, path: &mut Vec<usize>) {
        if amp == T::zero() || bounces >= self.max_bounce {
            // A forward-traveling ray needs at least one more reflection to
            // reach the receiver.
            if bounces >= self.max_bounce {
                return;
            }
        }
        if next >= self.events.len() {
            return; // exits the far end
        }
        let ev = &self.events[next];
        let d = dist + (ev.position_m - pos);
        let through = amp * (T::one() - ev.reflectivity);
        if through > T::zero() {
            self.forward(next + 1, ev.position_m, d, through, bounces, path);
        }
        path.push(next);
        self.backward(next as isize - 1, ev.position_m, d, amp * ev.reflectivity, bounces + 1, path);
        path.pop();
    }

    fn backward(&mut self, next: isize, pos: T, dist: T, amp: T, bounces: u32, path: &mut Vec<usize>) {
        if amp == T::zero() {
            return;
        }
        if next < 0 {
            // Exits towards the receiver.
            let total = dist + pos;
            self.found.push((total, amp, path.clone()));
            return;
        }
        let ev = &self.events[next as usize];
        let d = dist + (pos - ev.position_m);
        let through = amp * (T::one() - ev.reflectivity);
        if through > T::zero() {
            self.backward(next - 1, ev.position_m, d, through, bounces, path);
        }
        if bounces < self.max_bounce {
            path.push(next as usize);
            self.forward(next as usize + 1, ev.position_m, d, amp * ev.reflectivity, bounces + 1, path);
            path.pop();
        }
    }
}

/// Enumerates every reflection path with at most `max_bounce_order` bounces.
/// Each path's delay is the lead-in offset plus the traveled distance times
/// the wavelength- and temperature-scaled group delay; its amplitude is the
/// product of reflectivities, pass-through transmittances and attenuation.
/// Paths are sorted by delay.
pub fn enumerate_paths<T: Real>(
    model: &FiberModel<T>,
    lambda_nm: T,
    wall_clock_s: T,
) -> Result<Vec<PathContribution<T>>> {
    model.validate()?;
    check_wavelength(lambda_nm)?;
    if model.events.is_empty() {
        return Ok(Vec::new());
    }

    let mut walker = PathWalker {
        events: &model.events,
        max_bounce: model.max_bounce_order,
        found: Vec::new(),
    };
    let mut path = Vec::new();
    walker.forward(0, T::zero(), T::zero(), T::one(), 0, &mut path);

    let per_meter = model.per_meter_one_way(lambda_nm) * model.temperature.delay_scale_at(wall_clock_s);
    let mut out: Vec<PathContribution<T>> = walker
        .found
        .into_iter()
        .map(|(dist, amp, indices)| {
            let att = T::of(10.0).powf(
                -model.attenuation_db_per_km * dist * T::of(1e-3) / T::of(10.0),
            );
            let label = indices
                .iter()
                .map(|&i| model.events[i].label.as_str())
                .collect::<Vec<_>>()
                .join("->");
            PathContribution {
                delay_s: model.lead_in_delay_s + dist * per_meter,
                amplitude: amp * att,
                label,
                bounces: indices.len() as u32,
            }
        })
        .collect();
    out.sort_by(|a, b| a.delay_s.partial_cmp(&b.delay_s).unwrap());
    Ok(out)
}

/// Receiver and digitizer settings for one capture campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureSettings<T: Real = f64> {
    /// Nominal digitizer rate, samples/s; must match the rendered burst.
    pub sample_rate: T,
    /// Std of the white Gaussian receiver noise added at the sampler,
    /// intensity units.
    pub noise_sigma: T,
    /// Relative error of the digitizer time base, ppm. Recovered delays
    /// scale by exactly `1 + ppm * 1e-6`.
    pub clock_error_ppm: T,
    /// Receiver low-pass cutoff, Hz (single-pole magnitude, applied with
    /// zero phase). Non-finite bypasses the filter.
    pub receiver_bandwidth: T,
    /// Mean power reflectivity per resolved backscatter segment; 0 disables
    /// the backscatter model.
    pub backscatter_level: T,
    pub rng_seed: u64,
}

/// One captured trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace<T: Real = f64> {
    pub waveform: SampledWaveform<T>,
    /// Seconds since the start of the capture campaign.
    pub wall_clock: T,
    pub wavelength_nm: T,
}

/// Precomputed per-campaign state: the receiver-filtered probe pulse and the
/// frozen backscatter waveform. Reusable (and `Sync`) across traces, so a
/// trace set can be generated in parallel with deterministic results.
pub struct TraceSimulator<T: Real = f64> {
    model: FiberModel<T>,
    settings: CaptureSettings<T>,
    n_samples: usize,
    floor: T,
    pulse: Vec<T>,
    pulse_start: isize,
    backscatter: Option<Vec<T>>,
}

const PULSE_PAD: usize = 512;

impl<T: Real> TraceSimulator<T> {
    pub fn new(
        model: FiberModel<T>,
        burst: &SampledWaveform<T>,
        settings: CaptureSettings<T>,
    ) -> Result<Self> {
        model.validate()?;
        if burst.is_empty() {
            return Err(Error::invalid("burst waveform is empty"));
        }
        let rel: f64 = ((settings.sample_rate - burst.sample_rate) / burst.sample_rate)
            .abs()
            .as_();
        if rel > 1e-9 {
            return Err(Error::invalid(
                "capture sample rate must match the rendered burst",
            ));
        }
        let fs: f64 = settings.sample_rate.as_();
        let bw: f64 = settings.receiver_bandwidth.as_();
        if bw.is_finite() && fs < 2.0 * bw {
            log::warn!("sample rate {fs:.3e} below twice the receiver bandwidth {bw:.3e}");
        }

        let floor = burst
            .samples
            .iter()
            .copied()
            .fold(T::infinity(), |a, b| a.min(b));
        let first = burst.samples.iter().position(|&s| s > floor);
        let (pulse, pulse_start) = match first {
            Some(start) => {
                let end = burst.samples.iter().rposition(|&s| s > floor).unwrap() + 1;
                let mut buf = vec![T::zero(); end - start + 2 * PULSE_PAD];
                for (dst, src) in buf[PULSE_PAD..PULSE_PAD + end - start]
                    .iter_mut()
                    .zip(&burst.samples[start..end])
                {
                    *dst = *src - floor;
                }
                dsp::zero_phase_lowpass(&mut buf, fs, bw);
                (buf, start as isize - PULSE_PAD as isize)
            }
            None => (Vec::new(), 0),
        };

        let n_samples = burst.len();
        let backscatter = if settings.backscatter_level > T::zero() {
            Some(build_backscatter(&model, burst, &settings))
        } else {
            None
        };

        let sim = TraceSimulator {
            model,
            settings,
            n_samples,
            floor,
            pulse,
            pulse_start,
            backscatter,
        };

        // Wrapped-reflection check at the reference operating point.
        let paths = enumerate_paths(&sim.model, sim.model.dispersion.lambda0_nm, T::zero())?;
        if let Some(last) = paths.last() {
            let burst_dur: f64 = burst.duration().as_();
            let max_delay: f64 = last.delay_s.as_();
            if max_delay + burst_dur > n_samples as f64 / fs {
                log::warn!(
                    "longest reflection path ({:.3} us) wraps around the {:.3} us period",
                    max_delay * 1e6,
                    n_samples as f64 / fs * 1e6
                );
            }
        }
        Ok(sim)
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn model(&self) -> &FiberModel<T> {
        &self.model
    }

    /// The frozen backscatter contribution added to every trace.
    pub fn backscatter(&self) -> SampledWaveform<T> {
        let samples = match &self.backscatter {
            Some(bs) => bs.clone(),
            None => vec![T::zero(); self.n_samples],
        };
        SampledWaveform {
            samples,
            sample_rate: self.settings.sample_rate,
            t0: T::zero(),
        }
    }

    /// Simulates one trace. Deterministic in `(rng_seed, trace_index)`; the
    /// same arguments always produce the same samples, independent of call
    /// order or threading.
    pub fn simulate(&self, wall_clock: T, lambda_nm: T, trace_index: u64) -> Result<Trace<T>> {
        let paths = enumerate_paths(&self.model, lambda_nm, wall_clock)?;

        let mut out = match &self.backscatter {
            Some(bs) => bs.clone(),
            None => vec![T::zero(); self.n_samples],
        };

        let amp_sum: T = paths.iter().map(|p| p.amplitude).sum();
        let dc = self.floor * amp_sum;
        if dc != T::zero() {
            for s in &mut out {
                *s += dc;
            }
        }

        let fs: f64 = self.settings.sample_rate.as_();
        let clock: f64 = 1.0 + self.settings.clock_error_ppm.as_() * 1e-6;
        if !self.pulse.is_empty() {
            for p in &paths {
                let delay_samples = p.delay_s.as_() * clock * fs;
                dsp::add_delayed_pulse(
                    &mut out,
                    &self.pulse,
                    self.pulse_start,
                    delay_samples,
                    p.amplitude,
                );
            }
        }

        if self.settings.noise_sigma > T::zero() {
            let mut rng = ChaCha8Rng::seed_from_u64(self.settings.rng_seed);
            rng.set_stream(trace_index);
            let normal = rand_distr::StandardNormal;
            let sigma = self.settings.noise_sigma;
            for s in &mut out {
                let u: f64 = normal.sample(&mut rng);
                *s += sigma * T::of(u);
            }
        }

        Ok(Trace {
            waveform: SampledWaveform {
                samples: out,
                sample_rate: self.settings.sample_rate,
                t0: T::zero(),
            },
            wall_clock,
            wavelength_nm: lambda_nm,
        })
    }
}

/// Frozen coherent backscatter: the transmitted waveform (including its
/// nonzero floor) convolved with a static random impulse response holding one
/// exponentially distributed reflectivity per resolved fiber segment. Drawn
/// once from the fiber's speckle seed, so averaging traces does not reduce it.
fn build_backscatter<T: Real>(
    model: &FiberModel<T>,
    burst: &SampledWaveform<T>,
    settings: &CaptureSettings<T>,
) -> Vec<T> {
    let n = burst.len();
    let fs: f64 = settings.sample_rate.as_();
    let ng: f64 = model.group_index.as_();
    let level: f64 = settings.backscatter_level.as_();
    let alpha: f64 = model.attenuation_db_per_km.as_();
    let segment_m = SPEED_OF_LIGHT / (2.0 * ng * fs);
    let n_segments = ((model.length_m.as_()) / segment_m).round() as usize;
    let lead = (model.lead_in_delay_s.as_() * fs).round() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(model.speckle_seed);
    let exp = rand_distr::Exp::new(1.0).expect("unit-rate exponential");
    let mut impulse = vec![T::zero(); n];
    for j in 0..n_segments {
        let z_km = (j as f64 + 0.5) * segment_m * 1e-3;
        let att = 10f64.powf(-2.0 * alpha * z_km / 10.0);
        let r: f64 = exp.sample(&mut rng);
        let idx = (lead + j) % n;
        impulse[idx] += T::of(level * r * att);
    }

    let mut bs = dsp::circular_convolve(&burst.samples, &impulse);
    dsp::zero_phase_lowpass(&mut bs, fs, settings.receiver_bandwidth.as_());
    bs
}

/// One-shot convenience wrapper around [`TraceSimulator`]; for trace sets,
/// build the simulator once and reuse it.
pub fn simulate_trace<T: Real>(
    model: &FiberModel<T>,
    burst: &SampledWaveform<T>,
    settings: &CaptureSettings<T>,
    wall_clock: T,
    lambda_nm: T,
    trace_index: u64,
) -> Result<Trace<T>> {
    TraceSimulator::new(model.clone(), burst, settings.clone())?
        .simulate(wall_clock, lambda_nm, trace_index)
}

/// The standalone backscatter contribution for the given campaign.
pub fn backscatter_waveform<T: Real>(
    model: &FiberModel<T>,
    burst: &SampledWaveform<T>,
    settings: &CaptureSettings<T>,
) -> Result<SampledWaveform<T>> {
    Ok(TraceSimulator::new(model.clone(), burst, settings.clone())?.backscatter())
}
