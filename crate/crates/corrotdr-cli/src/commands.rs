//! The four subcommands: simulate, analyze, rms-study and cd-sweep.

use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use serde::Serialize;

use corrotdr::cdscan::{self, ReferenceDispersion, WavelengthScan};
use corrotdr::corrproc::{self, SidelobeFilter};
use corrotdr::fibersim::{DispersionParams, TraceSimulator};
use corrotdr::peakfit::{self, LatencyReport, PeakEstimate, PipelineConfig};
use corrotdr::seqgen::{self, BitSequence, SampledWaveform};
use corrotdr::Error as CoreError;

use crate::config::{resolve, Overrides, Resolved, RunConfig};
use crate::error::{CliError, Result};
use crate::tracefile::{GroundTruthPath, TraceSetMeta, TraceSetReader, TraceSetWriter};

/// Everything the correlation stage needs, derivable from a resolved config
/// or from stored trace-set metadata.
struct AnalysisKit {
    seq: BitSequence,
    reference: SampledWaveform<f64>,
    filter: SidelobeFilter<f64>,
    pipeline: PipelineConfig<f64>,
}

impl AnalysisKit {
    fn from_resolved(r: &Resolved) -> Self {
        let reference =
            corrproc::make_reference(&r.seq, r.samples_per_bit, r.burst_spec.sample_rate);
        let filter = corrproc::design_sidelobe_filter(
            &r.seq,
            r.pipeline.regularization,
            r.samples_per_bit,
        );
        AnalysisKit {
            seq: r.seq.clone(),
            reference,
            filter,
            pipeline: r.pipeline.clone(),
        }
    }

    fn from_meta(meta: &TraceSetMeta) -> Result<Self> {
        let resolved = resolve(meta.config.clone())?;
        let stored: Vec<u8> = meta
            .bits
            .chars()
            .map(|c| match c {
                '0' => Ok(0u8),
                '1' => Ok(1u8),
                other => Err(CliError::io(format!("invalid bit character '{other}'"))),
            })
            .collect::<Result<_>>()?;
        if stored != resolved.seq.bits {
            return Err(CliError::io(
                "stored bit sequence does not match the embedded configuration",
            ));
        }
        Ok(Self::from_resolved(&resolved))
    }
}

fn analysis_error(e: CoreError) -> CliError {
    CliError::analysis(e)
}

// ---------------------------------------------------------------------------
// simulate

pub fn cmd_simulate(
    config_path: Option<&Path>,
    out: &Path,
    overrides: &Overrides,
) -> Result<()> {
    let mut config = RunConfig::load(config_path)?;
    config.apply_overrides(overrides);
    if config.run.traces == 0 {
        return Err(CliError::config("refusing to simulate an empty trace set"));
    }
    let resolved = resolve(config)?;
    let burst =
        seqgen::build_burst(&resolved.seq, &resolved.burst_spec).map_err(CliError::config)?;
    let sim = TraceSimulator::new(resolved.model.clone(), &burst, resolved.settings.clone())
        .map_err(CliError::config)?;

    let lambda = resolved.config.capture.wavelength_nm;
    let paths =
        corrotdr::fibersim::enumerate_paths(&resolved.model, lambda, 0.0).map_err(CliError::config)?;
    println!("config hash: {}", resolved.config_hash);
    println!(
        "simulating {} traces x {} samples at {:.3e} S/s, wavelength {lambda} nm",
        resolved.config.run.traces,
        sim.n_samples(),
        resolved.config.capture.sample_rate_hz
    );
    println!("ground-truth paths (at capture start):");
    println!("  #  delay_ns          amplitude   label");
    for (i, p) in paths.iter().enumerate() {
        println!(
            "  {}  {:<16.4}  {:<9.6}   {}",
            i + 1,
            p.delay_s * 1e9,
            p.amplitude,
            p.label
        );
    }

    let mut writer = TraceSetWriter::create(out)?;
    let interval = resolved.config.capture.trace_interval_s;
    for i in 0..resolved.config.run.traces {
        let trace = sim
            .simulate(i as f64 * interval, lambda, i as u64)
            .map_err(CliError::config)?;
        writer.write_trace(&trace)?;
    }

    let meta = TraceSetMeta {
        format_version: crate::tracefile::FORMAT_VERSION,
        config_hash: resolved.config_hash.clone(),
        n_traces: 0,
        samples_per_trace: 0,
        sample_rate_hz: resolved.config.capture.sample_rate_hz,
        bit_rate_hz: resolved.config.burst.bit_rate_hz,
        wavelength_nm: lambda,
        bits: resolved
            .seq
            .bits
            .iter()
            .map(|&b| if b == 1 { '1' } else { '0' })
            .collect(),
        wall_clocks_s: Vec::new(),
        ground_truth: paths
            .iter()
            .map(|p| GroundTruthPath {
                label: p.label.clone(),
                delay_ns: p.delay_s * 1e9,
                amplitude: p.amplitude,
            })
            .collect(),
        config: resolved.config.clone(),
    };
    writer.finish(&burst, meta)?;
    println!("wrote {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// analyze

#[derive(Debug, Serialize)]
struct PeakRow {
    center_ns: f64,
    width_ps: f64,
    amplitude: f64,
    offset: f64,
    residual_rms: f64,
    converged: bool,
    iterations: usize,
}

impl From<&PeakEstimate<f64>> for PeakRow {
    fn from(p: &PeakEstimate<f64>) -> Self {
        PeakRow {
            center_ns: p.center * 1e9,
            width_ps: p.width * 1e12,
            amplitude: p.amplitude,
            offset: p.offset,
            residual_rms: p.residual_rms,
            converged: p.converged,
            iterations: p.iterations,
        }
    }
}

#[derive(Debug, Serialize)]
struct LatencySectionOut {
    input_rtt_ns: f64,
    end_rtt_ns: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    triple_rtt_ns: Option<f64>,
    fiber_rtt_ns: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    consistency_error_ps: Option<f64>,
}

impl From<&LatencyReport<f64>> for LatencySectionOut {
    fn from(r: &LatencyReport<f64>) -> Self {
        LatencySectionOut {
            input_rtt_ns: r.input_rtt * 1e9,
            end_rtt_ns: r.end_rtt * 1e9,
            triple_rtt_ns: r.triple_rtt.map(|t| t * 1e9),
            fiber_rtt_ns: r.fiber_rtt * 1e9,
            consistency_error_ps: r.consistency_error.map(|e| e * 1e12),
        }
    }
}

#[derive(Debug, Serialize)]
struct AnalyzeReportOut {
    config_hash: String,
    n_traces_averaged: usize,
    n_detected_peaks: usize,
    n_failed_fits: usize,
    peaks: Vec<PeakRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    latency: Option<LatencySectionOut>,
}

pub fn cmd_analyze(traceset: &Path, out: &Path, dump_correlation: bool) -> Result<()> {
    let mut reader = TraceSetReader::open(traceset)?;
    let kit = AnalysisKit::from_meta(reader.meta())?;
    let n_traces = reader.meta().n_traces;
    let config_hash = reader.meta().config_hash.clone();

    let mut averager = corrproc::TraceAverager::new();
    for i in 0..n_traces {
        let trace = reader.read_trace(i)?;
        averager.add(&trace).map_err(analysis_error)?;
    }
    let averaged = averager.finish().map_err(analysis_error)?;

    let outcome = peakfit::analyze_average(&averaged, &kit.reference, &kit.filter, &kit.pipeline)
        .map_err(analysis_error)?;
    let accepted = outcome.accepted_peaks();
    let latency = peakfit::latency_report(&accepted);

    std::fs::create_dir_all(out)?;
    let report = AnalyzeReportOut {
        config_hash: config_hash.clone(),
        n_traces_averaged: n_traces,
        n_detected_peaks: outcome.peaks.len(),
        n_failed_fits: outcome.n_failed_fits,
        peaks: outcome.peaks.iter().map(PeakRow::from).collect(),
        latency: latency.as_ref().ok().map(LatencySectionOut::from),
    };
    let text = toml::to_string_pretty(&report)
        .map_err(|e| CliError::io(format!("serializing report: {e}")))?;
    std::fs::write(out.join("report.toml"), &text)?;

    write_peak_windows_csv(
        out,
        &outcome.correlation,
        &accepted,
        kit.pipeline.fit_window_halfwidth,
        &config_hash,
    )?;
    if dump_correlation {
        write_correlation_csv(out, &outcome.correlation, &config_hash)?;
    }

    match latency {
        Ok(rep) => {
            println!("config hash: {config_hash}");
            println!("averaged {n_traces} traces");
            println!("input rtt:  {:.4} ns", rep.input_rtt * 1e9);
            println!("end rtt:    {:.4} ns", rep.end_rtt * 1e9);
            if let Some(t) = rep.triple_rtt {
                println!("triple rtt: {:.4} ns", t * 1e9);
            }
            println!("fiber rtt:  {:.4} ns", rep.fiber_rtt * 1e9);
            if let Some(e) = rep.consistency_error {
                println!("consistency error: {:+.2} ps", e * 1e12);
            }
            println!("wrote {}", out.display());
            Ok(())
        }
        Err(e) => {
            println!("diagnostic report written to {}", out.display());
            Err(analysis_error(e))
        }
    }
}

fn write_correlation_csv(
    out: &Path,
    corr: &corrproc::CorrelationResult<f64>,
    config_hash: &str,
) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(out.join("correlation.csv"))?);
    writeln!(f, "# config_hash = {config_hash}")?;
    writeln!(f, "lag,delay_ns,value")?;
    for (k, &v) in corr.values.iter().enumerate() {
        writeln!(f, "{k},{:.6},{v:.9}", corr.delay_of(k) * 1e9)?;
    }
    Ok(())
}

fn write_peak_windows_csv(
    out: &Path,
    corr: &corrproc::CorrelationResult<f64>,
    peaks: &[PeakEstimate<f64>],
    halfwidth: usize,
    config_hash: &str,
) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(out.join("peak_windows.csv"))?);
    writeln!(f, "# config_hash = {config_hash}")?;
    writeln!(f, "peak,lag,delay_ns,value")?;
    for (pi, p) in peaks.iter().enumerate() {
        let center_lag = (p.center * corr.sample_rate).round() as usize;
        let lo = center_lag.saturating_sub(2 * halfwidth);
        let hi = (center_lag + 2 * halfwidth + 1).min(corr.len());
        for k in lo..hi {
            writeln!(f, "{pi},{k},{:.6},{:.9}", corr.delay_of(k) * 1e9, corr.values[k])?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// rms-study

pub fn cmd_rms_study(traceset: &Path, out: &Path, sizes: &[usize]) -> Result<()> {
    let reader = TraceSetReader::open(traceset)?;
    let kit = AnalysisKit::from_meta(reader.meta())?;
    let n_traces = reader.meta().n_traces;
    let config_hash = reader.meta().config_hash.clone();
    let sizes: Vec<usize> = if sizes.is_empty() {
        reader.meta().config.pipeline.subset_sizes.clone()
    } else {
        sizes.to_vec()
    };

    let shared = Mutex::new(reader);
    let provider = |i: usize| {
        shared
            .lock()
            .expect("reader lock")
            .read_trace(i)
            .expect("validated trace set readable")
    };

    std::fs::create_dir_all(out)?;
    let mut csv = format!("# config_hash = {config_hash}\nsubset_size,n_subsets,rms_ps,excluded\n");
    println!("config hash: {config_hash}");
    println!("subset_size  n_subsets  rms_ps    excluded");
    for &size in &sizes {
        if size == 0 || n_traces / size.max(1) < 2 {
            log::warn!("subset size {size} leaves fewer than 2 subsets of {n_traces}; skipped");
            continue;
        }
        let row = peakfit::subset_rms_with(
            n_traces,
            provider,
            &kit.reference,
            &kit.filter,
            &kit.pipeline,
            size,
        )
        .map_err(analysis_error)?;
        let rms_ps = row.rms_error * 1e12;
        println!(
            "{:<12} {:<10} {:<9.3} {}",
            row.subset_size, row.n_subsets, rms_ps, row.n_excluded
        );
        csv.push_str(&format!(
            "{},{},{:.4},{}\n",
            row.subset_size, row.n_subsets, rms_ps, row.n_excluded
        ));
    }
    std::fs::write(out.join("rms.csv"), csv)?;
    println!("wrote {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// cd-sweep

#[derive(Debug, Serialize)]
struct DriftOut {
    rate_ps_per_hour: f64,
    residual_rms_ps: f64,
    implied_temperature_change_deg_c: f64,
    compensated: bool,
}

#[derive(Debug, Serialize)]
struct PolyOut {
    b0_ns: f64,
    b1_ps_per_nm: f64,
    b2_ps_per_nm2: f64,
    lambda0_nm: f64,
}

#[derive(Debug, Serialize)]
struct CdReportOut {
    config_hash: String,
    drift: DriftOut,
    poly: PolyOut,
    fit_rms_ps: f64,
    max_reference_diff_ps_nm_km: f64,
}

fn load_reference_curve(path: &Path) -> Result<ReferenceDispersion<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("reading {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split([',', ' ', '\t']).filter(|s| !s.is_empty()).collect();
        if fields.len() != 2 {
            return Err(CliError::config(format!(
                "{}:{}: expected two columns (lambda_nm, d_ps_nm_km)",
                path.display(),
                ln + 1
            )));
        }
        let l: f64 = fields[0]
            .parse()
            .map_err(|e| CliError::config(format!("{}:{}: {e}", path.display(), ln + 1)))?;
        let d: f64 = fields[1]
            .parse()
            .map_err(|e| CliError::config(format!("{}:{}: {e}", path.display(), ln + 1)))?;
        rows.push((l, d));
    }
    if rows.len() < 2 {
        return Err(CliError::config("reference curve needs at least two rows"));
    }
    rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(ReferenceDispersion::Tabulated(rows))
}

pub struct CdSweepOptions {
    pub reference_file: Option<std::path::PathBuf>,
    pub no_drift_compensation: bool,
}

pub fn cmd_cd_sweep(
    config_path: Option<&Path>,
    out: &Path,
    overrides: &Overrides,
    options: &CdSweepOptions,
) -> Result<()> {
    let mut config = RunConfig::load(config_path)?;
    config.apply_overrides(overrides);
    let resolved = resolve(config)?;
    let sweep = resolved.config.sweep.clone();
    if sweep.wavelengths_nm.len() < 3 {
        return Err(CliError::config(
            "cd-sweep needs at least 3 wavelengths for a quadratic fit",
        ));
    }
    if sweep.traces_per_wavelength / sweep.subset_size.max(1) < 2 {
        return Err(CliError::config(format!(
            "subset size {} leaves fewer than 2 subsets of {} traces",
            sweep.subset_size, sweep.traces_per_wavelength
        )));
    }

    let kit = AnalysisKit::from_resolved(&resolved);
    let burst =
        seqgen::build_burst(&kit.seq, &resolved.burst_spec).map_err(CliError::config)?;
    let sim = TraceSimulator::new(resolved.model.clone(), &burst, resolved.settings.clone())
        .map_err(CliError::config)?;

    let interval = resolved.config.capture.trace_interval_s;
    let tpw = sweep.traces_per_wavelength;
    println!("config hash: {}", resolved.config_hash);
    println!(
        "sweeping {} wavelengths x {tpw} traces (subsets of {})",
        sweep.wavelengths_nm.len(),
        sweep.subset_size
    );

    let mut entries = Vec::new();
    for (set_index, &lambda) in sweep.wavelengths_nm.iter().enumerate() {
        let base = set_index * tpw;
        let provider = |j: usize| {
            let global = base + j;
            sim.simulate(global as f64 * interval, lambda, global as u64)
                .expect("validated simulation settings")
        };
        let entry = cdscan::scan_entry_with(
            lambda,
            tpw,
            provider,
            sweep.subset_size,
            &kit.reference,
            &kit.filter,
            &kit.pipeline,
        )
        .map_err(analysis_error)?;
        log::info!("wavelength {lambda} nm: {} subsets", entry.subsets.len());
        entries.push(entry);
    }

    let scan = WavelengthScan {
        entries,
        fiber_length_km: resolved.model.length_m * 1e-3,
    };
    let lambda0 = resolved.config.fiber.dispersion.lambda0_nm;
    let mut grid = Vec::new();
    let mut l = sweep.grid_start_nm;
    while l <= sweep.grid_stop_nm + 1e-9 {
        grid.push(l);
        l += sweep.grid_step_nm;
    }

    let compensate = resolved.config.pipeline.compensate_drift && !options.no_drift_compensation;
    let result =
        cdscan::evaluate_scan(&scan, lambda0, &grid, compensate).map_err(analysis_error)?;

    let reference = match &options.reference_file {
        Some(path) => load_reference_curve(path)?,
        None => {
            let r = resolved
                .config
                .reference
                .clone()
                .map(|r| DispersionParams {
                    d0_ps_per_nm_km: r.d0_ps_per_nm_km,
                    s0_ps_per_nm2_km: r.s0_ps_per_nm2_km,
                    lambda0_nm: r.lambda0_nm,
                })
                .unwrap_or(resolved.model.dispersion);
            ReferenceDispersion::Analytic(r)
        }
    };
    let max_diff =
        cdscan::compare_with_reference(&result.d_curve, &reference).map_err(analysis_error)?;

    let duration = scan
        .entries
        .iter()
        .flat_map(|e| e.subsets.iter().map(|&(t, _)| t))
        .fold(0.0f64, f64::max);
    let implied_dt = cdscan::implied_temperature_change(
        result.drift.rate,
        duration,
        resolved.config.fiber.temperature.coeff_per_deg_c,
        resolved.model.base_rtt(),
    );

    std::fs::create_dir_all(out)?;
    let report = CdReportOut {
        config_hash: resolved.config_hash.clone(),
        drift: DriftOut {
            rate_ps_per_hour: result.drift.rate_ps_per_hour(),
            residual_rms_ps: result.drift.residual_rms * 1e12,
            implied_temperature_change_deg_c: implied_dt,
            compensated: compensate,
        },
        poly: PolyOut {
            b0_ns: result.poly.b0_s * 1e9,
            b1_ps_per_nm: result.poly.b1_s_per_nm * 1e12,
            b2_ps_per_nm2: result.poly.b2_s_per_nm2 * 1e12,
            lambda0_nm: result.poly.lambda0_nm,
        },
        fit_rms_ps: result.fit_rms_s * 1e12,
        max_reference_diff_ps_nm_km: max_diff,
    };
    let text = toml::to_string_pretty(&report)
        .map_err(|e| CliError::io(format!("serializing report: {e}")))?;
    std::fs::write(out.join("result.toml"), &text)?;

    let mut dcurve = format!(
        "# config_hash = {}\nlambda_nm,d_measured_ps_nm_km,d_reference_ps_nm_km,diff\n",
        resolved.config_hash
    );
    for &(l, d) in &result.d_curve {
        let dr = match &reference {
            ReferenceDispersion::Analytic(p) => p.d_at(l),
            ReferenceDispersion::Tabulated(_) => f64::NAN,
        };
        dcurve.push_str(&format!("{l:.3},{d:.6},{dr:.6},{:.6}\n", d - dr));
    }
    std::fs::write(out.join("dcurve.csv"), dcurve)?;

    let mut latencies = format!(
        "# config_hash = {}\nwavelength_nm,wall_clock_s,end_rtt_ns\n",
        resolved.config_hash
    );
    for e in &scan.entries {
        for &(t, y) in &e.subsets {
            latencies.push_str(&format!("{:.3},{t:.3},{:.6}\n", e.wavelength_nm, y * 1e9));
        }
    }
    std::fs::write(out.join("latencies.csv"), latencies)?;

    println!(
        "drift: {:+.2} ps/h (residual {:.2} ps rms), implied temperature change {:+.2} degC",
        report.drift.rate_ps_per_hour, report.drift.residual_rms_ps, implied_dt
    );
    println!(
        "latency fit: rms {:.3} ps, D({lambda0}) = {:.4} ps/nm/km",
        report.fit_rms_ps,
        result.poly.b1_s_per_nm * 1e12 / (2.0 * scan.fiber_length_km)
    );
    println!("max |D - D_ref| over the grid: {max_diff:.4} ps/nm/km");
    println!("wrote {}", out.display());
    Ok(())
}
