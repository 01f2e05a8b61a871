//! Calibration of the default receiver noise: search noise_sigma until the
//! lite configuration's subset-100 triple-reflection consistency RMS lands
//! inside the 3-4 ps band, then freeze the value as the preset default.
//!
//! The per-trace noise streams are scaled copies of the same unit draws, so
//! the RMS is monotone (near-linear) in sigma and a scale step plus a short
//! bisection converges quickly.
//!
//! Run with: cargo run --release -p corrotdr-cli --example calibrate_noise

use corrotdr::corrproc::{self, FilterCache};
use corrotdr::fibersim::{CaptureSettings, TraceSimulator};
use corrotdr::peakfit;
use corrotdr::presets;
use corrotdr::seqgen;

fn rms_at_subset_100(sigma: f64, seed: u64, n_traces: usize) -> f64 {
    let spec = presets::lite_burst();
    let seq = presets::prbs7();
    let burst = seqgen::build_burst(&seq, &spec).unwrap();
    let settings = CaptureSettings {
        noise_sigma: sigma,
        ..presets::lite_capture(seed)
    };
    let model = presets::paper_fiber();
    let sim = TraceSimulator::new(model, &burst, settings).unwrap();

    let spb = spec.samples_per_bit().unwrap();
    let reference = corrproc::make_reference(&seq, spb, spec.sample_rate);
    let cache = FilterCache::new();
    let filter = cache.get_or_design(&seq, presets::REGULARIZATION, spb);
    let cfg = presets::default_pipeline(&spec, seq.len());

    let provider = |i: usize| sim.simulate(i as f64 * 0.05, 1550.0, i as u64).unwrap();
    let row =
        peakfit::subset_rms_with(n_traces, provider, &reference, &filter, &cfg, 100).unwrap();
    assert_eq!(row.n_excluded, 0, "subsets dropped at sigma {sigma}");
    row.rms_error * 1e12
}

fn main() {
    let target = 3.4; // middle of the 3-4 ps band
    let probe = 0.05;
    let t0 = std::time::Instant::now();
    let rms_probe = rms_at_subset_100(probe, 7, 1000);
    println!(
        "probe sigma {probe}: rms {rms_probe:.3} ps  ({:.1} s)",
        t0.elapsed().as_secs_f64()
    );

    let mut sigma = probe * target / rms_probe;
    for step in 0..6 {
        let rms = rms_at_subset_100(sigma, 7, 1000);
        println!("step {step}: sigma {sigma:.5} -> rms {rms:.3} ps");
        if (3.15..=3.65).contains(&rms) {
            break;
        }
        sigma *= target / rms;
    }

    println!("--- verification at sigma {sigma:.5} ---");
    for seed in [7u64, 8, 9] {
        let rms = rms_at_subset_100(sigma, seed, 1000);
        println!("seed {seed}, 1000 traces: rms {rms:.3} ps");
    }
    let rms2k = rms_at_subset_100(sigma, 7, 2000);
    println!("seed 7, 2000 traces: rms {rms2k:.3} ps");
    println!("calibrated noise_sigma = {sigma:.5}");
}
