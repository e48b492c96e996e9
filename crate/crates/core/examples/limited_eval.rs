//! Limited-sensor accuracy over seeds, measurement kinds and sensor counts.
//! RPCA runs once per seed on the full-state matrix; every measurement is
//! then applied to the raw and filtered matrices.
//!
//! usage: limited_eval [seeds] [config; separated; lines] [kinds] [p list]

use aeromodal::config::PipelineConfig;
use aeromodal::cs::{compress_snapshot, make_measurement, MeasurementKind};
use aeromodal::ingest::{build_snapshot_matrix, detect_maneuvers};
use aeromodal::pipeline::{analyze_filtered, mode_entries, Diagnostics};
use aeromodal::report::ModeReport;
use aeromodal::rpca::rpca_ialm;
use aeromodal::synth::{generate, standard_benchmark};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seeds: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let extra = args.get(2).cloned().unwrap_or_default();
    let cfg = PipelineConfig::from_text(&extra.replace(';', "\n")).expect("config");
    let kinds: Vec<MeasurementKind> = match args.get(3) {
        Some(list) => list.split(',').map(|k| k.parse().unwrap()).collect(),
        None => MeasurementKind::ALL.to_vec(),
    };
    let ps: Vec<usize> = match args.get(4) {
        Some(list) => list.split(',').map(|k| k.parse().unwrap()).collect(),
        None => vec![20, 15, 10, 5],
    };
    for seed in 0..seeds {
        let data = generate(&standard_benchmark(seed)).unwrap();
        let truth: Vec<f64> = data.truth.modes.iter().map(|m| m.scaled_freq).collect();
        let ing = &cfg.ingestion;
        let windows = detect_maneuvers(&data.dataset, ing.maneuver_count, ing.window_length, &ing.detection).unwrap();
        let x = build_snapshot_matrix(&data.dataset, &windows, ing.window_length, ing.demean).unwrap();
        let low = rpca_ialm(x.values.as_ref(), &cfg.rpca).unwrap().low_rank;
        let filtered = x.with_values(low);
        for &kind in &kinds {
            for &p in &ps {
                let t = std::time::Instant::now();
                let c = make_measurement(kind, p, data.dataset.valid_count(), seed).unwrap();
                let y = compress_snapshot(&x, &c).unwrap();
                let yf = compress_snapshot(&filtered, &c).unwrap();
                let mut diag = Diagnostics::default();
                let analysis = analyze_filtered(&y, yf.values, true, &cfg, &mut diag).unwrap();
                let report = ModeReport::new("cs", mode_entries(&analysis), Default::default());
                let est: Vec<f64> = report.non_static().map(|m| m.scaled_freq).collect();
                let errs: Vec<f64> = truth
                    .iter()
                    .map(|f| est.iter().map(|e| (e - f).abs() / f).fold(f64::INFINITY, f64::min))
                    .collect();
                let within = errs.iter().filter(|&&e| e <= 0.01).count();
                let missed: Vec<f64> = truth
                    .iter()
                    .zip(&errs)
                    .filter(|(_, &e)| e > 0.01)
                    .map(|(f, _)| *f)
                    .collect();
                println!(
                    "seed {seed} {:<15} p {p:2}: <=1% {within:2} worst {:6.2}% selected {:2} of {:2} missed {missed:?} {:.1}s",
                    kind.name(),
                    100.0 * errs.iter().copied().fold(0.0, f64::max),
                    analysis.selected.len(),
                    analysis.full.len(),
                    t.elapsed().as_secs_f64()
                );
            }
        }
    }
}
