//! On-disk trace set layout: a directory holding
//!
//! * `meta.toml`: capture metadata, per-trace wall clocks, the transmitted
//!   bit sequence, ground-truth paths and the full resolved configuration;
//! * `traces.f32`: `n_traces * samples_per_trace` little-endian 32-bit
//!   floats, row-major;
//! * `burst.f32`: the transmitted burst waveform in the same encoding.
//!
//! Reading back what was written is bit-exact: samples are quantized to f32
//! once at write time and the metadata is plain text.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use corrotdr::fibersim::Trace;
use corrotdr::seqgen::SampledWaveform;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const META_FILE: &str = "meta.toml";
pub const TRACES_FILE: &str = "traces.f32";
pub const BURST_FILE: &str = "burst.f32";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthPath {
    pub label: String,
    pub delay_ns: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSetMeta {
    pub format_version: u32,
    pub config_hash: String,
    pub n_traces: usize,
    pub samples_per_trace: usize,
    pub sample_rate_hz: f64,
    pub bit_rate_hz: f64,
    pub wavelength_nm: f64,
    /// Transmitted PRBS bits as a 0/1 string.
    pub bits: String,
    pub wall_clocks_s: Vec<f64>,
    pub ground_truth: Vec<GroundTruthPath>,
    pub config: RunConfig,
}

pub struct TraceSetWriter {
    dir: PathBuf,
    traces: BufWriter<File>,
    n_written: usize,
    samples_per_trace: Option<usize>,
    wall_clocks: Vec<f64>,
}

impl TraceSetWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::io(format!("creating {}: {e}", dir.display())))?;
        let traces = File::create(dir.join(TRACES_FILE))
            .map_err(|e| CliError::io(format!("creating trace file: {e}")))?;
        Ok(TraceSetWriter {
            dir: dir.to_path_buf(),
            traces: BufWriter::new(traces),
            n_written: 0,
            samples_per_trace: None,
            wall_clocks: Vec::new(),
        })
    }

    pub fn write_trace(&mut self, trace: &Trace<f64>) -> Result<()> {
        match self.samples_per_trace {
            None => self.samples_per_trace = Some(trace.waveform.len()),
            Some(n) if n != trace.waveform.len() => {
                return Err(CliError::io("trace length changed mid-set"))
            }
            _ => {}
        }
        for &s in &trace.waveform.samples {
            self.traces.write_all(&(s as f32).to_le_bytes())?;
        }
        self.wall_clocks.push(trace.wall_clock);
        self.n_written += 1;
        Ok(())
    }

    /// Writes the burst waveform and metadata, consuming the writer. The
    /// caller supplies everything except the trace-count bookkeeping.
    pub fn finish(
        mut self,
        burst: &SampledWaveform<f64>,
        mut meta: TraceSetMeta,
    ) -> Result<()> {
        self.traces.flush()?;
        meta.format_version = FORMAT_VERSION;
        meta.n_traces = self.n_written;
        meta.samples_per_trace = self.samples_per_trace.unwrap_or(0);
        meta.wall_clocks_s = self.wall_clocks;

        let mut bf = BufWriter::new(File::create(self.dir.join(BURST_FILE))?);
        for &s in &burst.samples {
            bf.write_all(&(s as f32).to_le_bytes())?;
        }
        bf.flush()?;

        let text = toml::to_string_pretty(&meta)
            .map_err(|e| CliError::io(format!("serializing metadata: {e}")))?;
        std::fs::write(self.dir.join(META_FILE), text)?;
        Ok(())
    }
}

pub struct TraceSetReader {
    dir: PathBuf,
    meta: TraceSetMeta,
    traces: BufReader<File>,
}

impl TraceSetReader {
    pub fn open(dir: &Path) -> Result<Self> {
        let meta_text = std::fs::read_to_string(dir.join(META_FILE))
            .map_err(|e| CliError::io(format!("reading {}: {e}", dir.display())))?;
        let meta: TraceSetMeta = toml::from_str(&meta_text)
            .map_err(|e| CliError::io(format!("corrupt metadata: {e}")))?;
        if meta.format_version != FORMAT_VERSION {
            return Err(CliError::io(format!(
                "unsupported trace set format version {}",
                meta.format_version
            )));
        }
        if meta.wall_clocks_s.len() != meta.n_traces {
            return Err(CliError::io(
                "metadata trace count does not match wall clock list",
            ));
        }
        let file = File::open(dir.join(TRACES_FILE))?;
        let expected = meta.n_traces as u64 * meta.samples_per_trace as u64 * 4;
        let actual = file.metadata()?.len();
        if actual != expected {
            return Err(CliError::io(format!(
                "trace file holds {actual} bytes, metadata implies {expected}"
            )));
        }
        Ok(TraceSetReader {
            dir: dir.to_path_buf(),
            meta,
            traces: BufReader::new(file),
        })
    }

    pub fn meta(&self) -> &TraceSetMeta {
        &self.meta
    }

    pub fn read_trace(&mut self, index: usize) -> Result<Trace<f64>> {
        if index >= self.meta.n_traces {
            return Err(CliError::io(format!(
                "trace {index} out of range ({} stored)",
                self.meta.n_traces
            )));
        }
        let n = self.meta.samples_per_trace;
        self.traces
            .seek(SeekFrom::Start(index as u64 * n as u64 * 4))?;
        let mut bytes = vec![0u8; n * 4];
        self.traces.read_exact(&mut bytes)?;
        let samples: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Ok(Trace {
            waveform: SampledWaveform {
                samples,
                sample_rate: self.meta.sample_rate_hz,
                t0: 0.0,
            },
            wall_clock: self.meta.wall_clocks_s[index],
            wavelength_nm: self.meta.wavelength_nm,
        })
    }

    pub fn read_burst(&self) -> Result<SampledWaveform<f64>> {
        let bytes = std::fs::read(self.dir.join(BURST_FILE))?;
        if bytes.len() % 4 != 0 {
            return Err(CliError::io("burst file length not a multiple of 4"));
        }
        let samples: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Ok(SampledWaveform {
            samples,
            sample_rate: self.meta.sample_rate_hz,
            t0: 0.0,
        })
    }
}
