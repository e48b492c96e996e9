//! Runs the full pipeline on the synthetic benchmark and prints the scored
//! mode table.

use std::time::Instant;

use aeromodal::config::PipelineConfig;
use aeromodal::pipeline::{run_full, run_limited};
use aeromodal::report::{emit_report, score, ReportFormat};
use aeromodal::synth::{generate, standard_benchmark};

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let cfg_text = std::env::args().nth(2).unwrap_or_default();
    let cfg = PipelineConfig::from_text(&cfg_text.replace(';', "\n")).expect("config");
    let data = generate(&standard_benchmark(seed)).expect("synth");
    let start = Instant::now();
    let out = if cfg.compressed.is_some() {
        run_limited(&data.dataset, &cfg)
    } else {
        run_full(&data.dataset, &cfg)
    }
    .expect("pipeline");
    let secs = start.elapsed().as_secs_f64();
    emit_report(&out.report, ReportFormat::Table, std::io::stdout()).unwrap();
    let table = score(&out.report, &data.truth, 0.01, 0.10);
    println!(
        "detected {}/{} accepted {} in {secs:.1}s",
        table.detected(),
        data.truth.modes.len(),
        table.accepted
    );
    for t in &out.diagnostics.timings {
        println!("{:>12} {:.2}s", t.stage, t.seconds);
    }
    let d = &out.diagnostics;
    println!(
        "rank {:?} second {:?} rec {:?} sel {} of {}",
        d.truncation.map(|t| t.rank),
        d.second_rank,
        d.reconstruction.as_ref().map(|r| r.history.clone()),
        d.selected.len(),
        d.eigenvalues.len()
    );
    if std::env::var("DUMP").is_ok() {
        let mut rows: Vec<(f64, f64, f64, bool)> = out
            .analysis
            .full
            .omega
            .iter()
            .enumerate()
            .filter(|(_, w)| w.im >= 0.0)
            .map(|(k, w)| {
                let (f, z, _, _) = aeromodal::dmd::modal_parameters_of(*w, 1.0);
                (f, z, out.analysis.full.amplitudes[k].norm(), d.selected.contains(&k))
            })
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        for r in rows {
            println!(
                "  f {:.5} z {:.4} |b| {:.3e} {}",
                r.0,
                r.1,
                r.2,
                if r.3 { "*" } else { "" }
            );
        }
    }
    let t = d.truncation.unwrap();
    println!("first threshold {:.3e} energy {:.5}", t.threshold, t.energy_captured);
}
