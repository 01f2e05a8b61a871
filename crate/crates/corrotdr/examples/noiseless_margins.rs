//! Prints the noiseless figures of merit of the analysis chain on the
//! reference geometry: per-peak center error against the channel's analytic
//! delays, fitted widths and the triple-reflection consistency error.

use corrotdr::corrproc::{self, FilterCache};
use corrotdr::fibersim::{self, CaptureSettings, TraceSimulator};
use corrotdr::peakfit;
use corrotdr::presets;
use corrotdr::seqgen;

fn main() {
    let spec = presets::lite_burst();
    let seq = presets::prbs7();
    let burst = seqgen::build_burst(&seq, &spec).unwrap();
    let settings = CaptureSettings {
        noise_sigma: 0.0,
        ..presets::lite_capture(1)
    };
    let model = presets::paper_fiber();
    let sim = TraceSimulator::new(model.clone(), &burst, settings).unwrap();
    let trace = sim.simulate(0.0, 1550.0, 0).unwrap();

    let spb = spec.samples_per_bit().unwrap();
    let reference = corrproc::make_reference(&seq, spb, spec.sample_rate);
    let cache = FilterCache::new();
    let filter = cache.get_or_design(&seq, presets::REGULARIZATION, spb);
    let cfg = presets::default_pipeline(&spec, seq.len());

    let avg = corrproc::average_traces(&[trace]).unwrap();
    let outcome = peakfit::analyze_average(&avg, &reference, &filter, &cfg).unwrap();
    let accepted = outcome.accepted_peaks();
    let truth = fibersim::enumerate_paths(&model, 1550.0, 0.0).unwrap();
    println!("noiseless lite run on the reference geometry:");
    for (p, t) in accepted.iter().zip(&truth) {
        println!(
            "  {:28} truth {:14.4} ns  est {:14.4} ns  err {:+8.4} ps  width {:6.1} ps  amp {:.4}",
            t.label,
            t.delay_s * 1e9,
            p.center * 1e9,
            (p.center - t.delay_s) * 1e12,
            p.width * 1e12,
            p.amplitude
        );
    }
    let report = peakfit::latency_report(&accepted).unwrap();
    println!(
        "  consistency error: {:+.4} ps",
        report.consistency_error.unwrap() * 1e12
    );
}
