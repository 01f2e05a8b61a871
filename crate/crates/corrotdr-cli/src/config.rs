//! Run configuration: a TOML schema with documented defaults, strict
//! (unknown keys rejected), resolved into the core model types and hashed so
//! every output can be traced back to the exact configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use corrotdr::fibersim::{
    CaptureSettings, DispersionParams, FiberModel, ReflectionEvent, TemperatureDrift,
    TemperatureProfile,
};
use corrotdr::peakfit::PipelineConfig;
use corrotdr::presets;
use corrotdr::seqgen::{self, BitSequence, BurstSpec};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub burst: BurstSection,
    pub fiber: FiberSection,
    pub capture: CaptureSection,
    pub pipeline: PipelineSection,
    pub run: RunSection,
    pub sweep: SweepSection,
    /// Reference dispersion for cd-sweep comparisons; defaults to the
    /// channel's own dispersion parameters.
    pub reference: Option<ReferenceSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BurstSection {
    pub prbs_order: u32,
    /// Generator tap mask; bit k set means the term x^(k+1). Omit to use
    /// the standard polynomial for the order (0x60 for PRBS-7).
    pub polynomial: Option<u32>,
    pub lfsr_seed: u32,
    pub bit_rate_hz: f64,
    pub period_s: f64,
    pub extinction_ratio_db: f64,
    pub peak_level: f64,
}

impl Default for BurstSection {
    fn default() -> Self {
        BurstSection {
            prbs_order: presets::PRBS_ORDER,
            polynomial: None,
            lfsr_seed: presets::PRBS_SEED,
            bit_rate_hz: presets::BIT_RATE_HZ,
            period_s: presets::PERIOD_S,
            extinction_ratio_db: presets::EXTINCTION_RATIO_DB,
            peak_level: presets::PEAK_LEVEL,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FiberSection {
    /// Round trip to the fiber-end reflector, ns. Mutually exclusive with
    /// `length_m`.
    pub end_rtt_ns: Option<f64>,
    /// Physical fiber length, m. Mutually exclusive with `end_rtt_ns`; when
    /// neither is given the reference 21,733.1958 ns round trip applies.
    pub length_m: Option<f64>,
    /// Round trip to the input air gap (timing reference plane), ns.
    pub input_rtt_ns: f64,
    pub group_index: f64,
    pub attenuation_db_per_km: f64,
    /// Linear power reflectivity of the input air gap.
    pub input_reflectivity: f64,
    /// Linear power reflectivity of the fiber-end termination.
    pub end_reflectivity: f64,
    pub max_bounce_order: u32,
    pub speckle_seed: u64,
    pub dispersion: DispersionSection,
    pub temperature: TemperatureSection,
    /// Additional reflectors between input and end.
    pub extra_events: Vec<EventSection>,
}

impl Default for FiberSection {
    fn default() -> Self {
        FiberSection {
            end_rtt_ns: None,
            length_m: None,
            input_rtt_ns: presets::INPUT_RTT_S * 1e9,
            group_index: presets::GROUP_INDEX,
            attenuation_db_per_km: presets::ATTENUATION_DB_PER_KM,
            input_reflectivity: presets::INPUT_REFLECTIVITY,
            end_reflectivity: presets::END_REFLECTIVITY,
            max_bounce_order: presets::MAX_BOUNCE_ORDER,
            speckle_seed: presets::SPECKLE_SEED,
            dispersion: DispersionSection::default(),
            temperature: TemperatureSection::default(),
            extra_events: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DispersionSection {
    pub d0_ps_per_nm_km: f64,
    pub s0_ps_per_nm2_km: f64,
    pub lambda0_nm: f64,
}

impl Default for DispersionSection {
    fn default() -> Self {
        DispersionSection {
            d0_ps_per_nm_km: presets::D0_PS_PER_NM_KM,
            s0_ps_per_nm2_km: presets::S0_PS_PER_NM2_KM,
            lambda0_nm: presets::LAMBDA0_NM,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TemperatureSection {
    pub t_ref_deg_c: f64,
    pub coeff_per_deg_c: f64,
    pub drift_deg_c_per_hour: f64,
    /// Piecewise-linear (wall_clock_s, deg_c) samples; overrides the linear
    /// drift rate when non-empty.
    pub profile_points: Vec<(f64, f64)>,
}

impl Default for TemperatureSection {
    fn default() -> Self {
        TemperatureSection {
            t_ref_deg_c: presets::T_REF_DEG_C,
            coeff_per_deg_c: presets::TEMPERATURE_COEFF_PER_DEG_C,
            drift_deg_c_per_hour: 0.0,
            profile_points: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EventSection {
    pub position_m: f64,
    pub reflectivity: f64,
    pub label: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CaptureSection {
    pub sample_rate_hz: f64,
    pub wavelength_nm: f64,
    /// Receiver noise std at the sampler, intensity units. The default is
    /// calibrated so the lite subset-100 consistency RMS sits in 3-4 ps.
    pub noise_sigma: f64,
    pub clock_error_ppm: f64,
    pub receiver_bandwidth_hz: f64,
    pub backscatter_level: f64,
    pub rng_seed: u64,
    /// Wall-clock spacing between consecutive captured traces, seconds.
    pub trace_interval_s: f64,
}

impl Default for CaptureSection {
    fn default() -> Self {
        CaptureSection {
            sample_rate_hz: presets::SAMPLE_RATE_HZ,
            wavelength_nm: presets::LAMBDA0_NM,
            noise_sigma: presets::CALIBRATED_NOISE_SIGMA,
            clock_error_ppm: 0.0,
            receiver_bandwidth_hz: presets::RECEIVER_BANDWIDTH_HZ,
            backscatter_level: 0.0,
            rng_seed: 1,
            trace_interval_s: 1.8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSection {
    pub threshold_rel: f64,
    /// Peak exclusion radius, ns. Omit to use three burst durations, which
    /// keeps deconvolution residues of a strong peak from registering as
    /// separate reflections.
    pub min_separation_ns: Option<f64>,
    pub max_peaks: usize,
    pub fit_window_halfwidth_bits: usize,
    pub regularization: f64,
    pub subset_sizes: Vec<usize>,
    pub compensate_drift: bool,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection {
            threshold_rel: presets::THRESHOLD_REL,
            min_separation_ns: None,
            max_peaks: presets::MAX_PEAKS,
            fit_window_halfwidth_bits: presets::FIT_WINDOW_HALFWIDTH_BITS,
            regularization: presets::REGULARIZATION,
            subset_sizes: vec![50, 100, 250, 500],
            compensate_drift: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub traces: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { traces: 1000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub wavelengths_nm: Vec<f64>,
    pub traces_per_wavelength: usize,
    pub subset_size: usize,
    pub grid_start_nm: f64,
    pub grid_stop_nm: f64,
    pub grid_step_nm: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            wavelengths_nm: presets::sweep_wavelengths_nm(),
            traces_per_wavelength: 1000,
            subset_size: 250,
            grid_start_nm: 1530.0,
            grid_stop_nm: 1565.0,
            grid_step_nm: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    pub d0_ps_per_nm_km: f64,
    pub s0_ps_per_nm2_km: f64,
    pub lambda0_nm: f64,
}

/// Command-line overrides applied before resolution and hashing.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub traces: Option<usize>,
    pub lite: bool,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::io(format!("reading {}: {e}", p.display())))?;
                toml::from_str(&text)
                    .map_err(|e| CliError::config(format!("{}: {e}", p.display())))
            }
        }
    }

    /// Applies the lite preset and explicit flag overrides. Lite shortens the
    /// record four-fold via the sample rate (the 50 us period still holds the
    /// full multi-reflection geometry), scales the bit rate to keep 4 samples
    /// per bit, and caps trace counts at the desk-scale 100.
    pub fn apply_overrides(&mut self, ov: &Overrides) {
        if ov.lite {
            self.capture.sample_rate_hz = presets::LITE_SAMPLE_RATE_HZ;
            self.burst.bit_rate_hz = presets::LITE_BIT_RATE_HZ;
            self.capture.receiver_bandwidth_hz = presets::LITE_RECEIVER_BANDWIDTH_HZ;
            self.run.traces = self.run.traces.min(presets::LITE_TRACES);
            self.sweep.traces_per_wavelength =
                self.sweep.traces_per_wavelength.min(presets::LITE_TRACES);
            self.sweep.subset_size = self
                .sweep
                .subset_size
                .min((self.sweep.traces_per_wavelength / 4).max(1));
        }
        if let Some(seed) = ov.seed {
            self.capture.rng_seed = seed;
        }
        if let Some(traces) = ov.traces {
            self.run.traces = traces;
            self.sweep.traces_per_wavelength = traces;
        }
    }

    /// Canonical text form of the effective configuration.
    pub fn canonical_toml(&self) -> String {
        toml::to_string_pretty(self).expect("serializable config")
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_toml().as_bytes());
        hex::encode(&digest[..8])
    }
}

/// The configuration resolved into core types.
pub struct Resolved {
    pub config: RunConfig,
    pub config_hash: String,
    pub seq: BitSequence,
    pub burst_spec: BurstSpec,
    pub model: FiberModel,
    pub settings: CaptureSettings,
    pub pipeline: PipelineConfig,
    pub samples_per_bit: usize,
}

pub fn resolve(config: RunConfig) -> Result<Resolved> {
    let config_hash = config.hash();

    let polynomial = match config.burst.polynomial {
        Some(p) => p,
        None => seqgen::default_polynomial(config.burst.prbs_order).ok_or_else(|| {
            CliError::config(format!(
                "no default polynomial for order {}; set burst.polynomial",
                config.burst.prbs_order
            ))
        })?,
    };
    let seq = seqgen::gen_prbs(config.burst.prbs_order, polynomial, config.burst.lfsr_seed)
        .map_err(CliError::config)?;

    let burst_spec = BurstSpec {
        bit_rate: config.burst.bit_rate_hz,
        period: config.burst.period_s,
        sample_rate: config.capture.sample_rate_hz,
        extinction_ratio_db: config.burst.extinction_ratio_db,
        peak_level: config.burst.peak_level,
    };
    let samples_per_bit = burst_spec.samples_per_bit().map_err(CliError::config)?;

    let f = &config.fiber;
    let length_m = match (f.end_rtt_ns, f.length_m) {
        (Some(_), Some(_)) => {
            return Err(CliError::config(
                "fiber.end_rtt_ns and fiber.length_m are mutually exclusive",
            ))
        }
        (Some(end_rtt_ns), None) => {
            let fiber_rtt = (end_rtt_ns - f.input_rtt_ns) * 1e-9;
            if fiber_rtt <= 0.0 {
                return Err(CliError::config("end_rtt_ns must exceed input_rtt_ns"));
            }
            FiberModel::length_for_rtt(fiber_rtt, f.group_index)
        }
        (None, Some(length_m)) => length_m,
        (None, None) => FiberModel::length_for_rtt(
            presets::END_RTT_S - f.input_rtt_ns * 1e-9,
            f.group_index,
        ),
    };

    let mut events = vec![ReflectionEvent::new(0.0, f.input_reflectivity, "air-gap")];
    for ev in &f.extra_events {
        events.push(ReflectionEvent::new(
            ev.position_m,
            ev.reflectivity,
            ev.label.clone(),
        ));
    }
    events.push(ReflectionEvent::new(length_m, f.end_reflectivity, "fiber-end"));

    let drift = if f.temperature.profile_points.is_empty() {
        TemperatureDrift::Linear {
            deg_c_per_hour: f.temperature.drift_deg_c_per_hour,
        }
    } else {
        TemperatureDrift::PiecewiseLinear(f.temperature.profile_points.clone())
    };

    let model = FiberModel {
        length_m,
        group_index: f.group_index,
        attenuation_db_per_km: f.attenuation_db_per_km,
        lead_in_delay_s: f.input_rtt_ns * 1e-9,
        events,
        dispersion: DispersionParams {
            d0_ps_per_nm_km: f.dispersion.d0_ps_per_nm_km,
            s0_ps_per_nm2_km: f.dispersion.s0_ps_per_nm2_km,
            lambda0_nm: f.dispersion.lambda0_nm,
        },
        temperature: TemperatureProfile {
            t_ref_deg_c: f.temperature.t_ref_deg_c,
            drift,
            coeff_per_deg_c: f.temperature.coeff_per_deg_c,
        },
        max_bounce_order: f.max_bounce_order,
        speckle_seed: f.speckle_seed,
    };
    model.validate().map_err(CliError::config)?;

    let settings = CaptureSettings {
        sample_rate: config.capture.sample_rate_hz,
        noise_sigma: config.capture.noise_sigma,
        clock_error_ppm: config.capture.clock_error_ppm,
        receiver_bandwidth: config.capture.receiver_bandwidth_hz,
        backscatter_level: config.capture.backscatter_level,
        rng_seed: config.capture.rng_seed,
    };

    let p = &config.pipeline;
    if p.threshold_rel <= 0.0 || p.threshold_rel >= 1.0 {
        return Err(CliError::config("pipeline.threshold_rel must lie in (0, 1)"));
    }
    let min_separation_s = match p.min_separation_ns {
        Some(ns) => ns * 1e-9,
        None => presets::default_min_separation_s(config.burst.bit_rate_hz, seq.len()),
    };
    let pipeline = PipelineConfig {
        threshold_rel: p.threshold_rel,
        min_separation_s,
        max_peaks: p.max_peaks,
        fit_window_halfwidth: p.fit_window_halfwidth_bits * samples_per_bit,
        regularization: p.regularization,
    };

    Ok(Resolved {
        config,
        config_hash,
        seq,
        burst_spec,
        model,
        settings,
        pipeline,
        samples_per_bit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_resolves_to_reference_geometry() {
        let resolved = resolve(RunConfig::default()).unwrap();
        assert_eq!(resolved.seq.len(), 127);
        assert_eq!(resolved.samples_per_bit, 4);
        assert_eq!(resolved.burst_spec.period_samples(), 2_000_000);
        assert!((resolved.model.length_m - 2209.5).abs() < 0.1);
        assert_eq!(resolved.config.run.traces, 1000);
        assert!((resolved.model.lead_in_delay_s * 1e9 - 94.2372).abs() < 1e-9);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("[burst]\nbogus_key = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus_key"));
    }

    #[test]
    fn lite_override_scales_sampling() {
        let mut cfg = RunConfig::default();
        cfg.apply_overrides(&Overrides {
            lite: true,
            ..Default::default()
        });
        let resolved = resolve(cfg).unwrap();
        assert_eq!(resolved.burst_spec.period_samples(), 500_000);
        assert_eq!(resolved.samples_per_bit, 4);
        assert_eq!(resolved.config.run.traces, 100);
    }

    #[test]
    fn hash_tracks_effective_config() {
        let base = RunConfig::default();
        let mut other = RunConfig::default();
        other.apply_overrides(&Overrides {
            seed: Some(42),
            ..Default::default()
        });
        assert_ne!(base.hash(), other.hash());
        assert_eq!(base.hash(), RunConfig::default().hash());
    }

    #[test]
    fn rtt_and_length_are_mutually_exclusive() {
        let mut cfg = RunConfig::default();
        cfg.fiber.end_rtt_ns = Some(21733.1958);
        cfg.fiber.length_m = Some(2200.0);
        assert!(matches!(resolve(cfg), Err(CliError::Config(_))));
    }
}
