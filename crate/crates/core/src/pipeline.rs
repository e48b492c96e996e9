//! End-to-end identification runs: full sensor set, limited sensor set and
//! compressed snapshots.

use std::time::Instant;

use faer::{c64, Mat};
use serde::Serialize;

use crate::config::{DelayMode, PipelineConfig, RpcaPlacement};
use crate::cs::{compress_dataset, compress_snapshot, make_measurement, CsDmdResult, MeasurementMatrix};
use crate::dmd::{
    extract_modal_parameters, iterate_against, sweep_delay, DelaySweep, DmdResult, ModalParameters,
    ReconstructionReport, TruncationDecision,
};
use crate::error::{ModalError, Result};
use crate::ingest::{build_snapshot_matrix, detect_maneuvers, ManeuverWindow, SnapshotMatrix, TestPointDataset};
use crate::report::{MeasurementInfo, ModeEntry, ModeReport, Provenance, StageTiming, STATIC};
use crate::rpca::rpca_ialm;
use crate::sparsity::{
    admm_sparsify, build_amplitude_problem, gamma_sweep, select_at, select_optimal_gamma, SparsitySweep,
};

pub const GROWING: &str = "growing";

#[derive(Debug, Clone, Serialize)]
pub struct RpcaSummary {
    pub iterations: usize,
    pub converged: bool,
    pub final_residual: f64,
    /// Fraction of entries assigned to the sparse component.
    pub sparse_fraction: f64,
    pub objective: Vec<f64>,
}

/// Intermediate results kept for inspection, filled in stage by stage so a
/// failed run still reports how far it got.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    pub windows: Vec<ManeuverWindow>,
    pub excluded_channels: Vec<String>,
    pub snapshot_shape: Option<(usize, usize)>,
    pub rpca: Option<RpcaSummary>,
    pub delay_sweep: Option<DelaySweep>,
    pub singular_values: Vec<f64>,
    pub truncation: Option<TruncationDecision>,
    pub second_rank: Option<usize>,
    pub reconstruction: Option<ReconstructionReport>,
    /// Every eigenvalue of the final chain pass as `[re, im]`.
    pub eigenvalues: Vec<[f64; 2]>,
    pub sweep: Option<SparsitySweep>,
    pub selected: Vec<usize>,
    pub gamma: Option<f64>,
    pub timings: Vec<StageTiming>,
}

impl Diagnostics {
    fn time<T>(&mut self, stage: &'static str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f(self).map_err(|e| e.in_stage(stage));
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

#[derive(Debug, Clone)]
pub struct Analysis {
    /// Every mode of the final chain pass.
    pub full: DmdResult,
    /// Modes kept by the sparsity stage, with polished amplitudes.
    pub selected: DmdResult,
    pub parameters: Vec<ModalParameters>,
    pub converged: bool,
}

fn rpca_stage(raw: faer::MatRef<'_, f64>, cfg: &PipelineConfig, diag: &mut Diagnostics) -> Result<(Mat<f64>, bool)> {
    diag.time("rpca", |d| {
        let r = rpca_ialm(raw, &cfg.rpca)?;
        let nonzero = r
            .sparse
            .col_iter()
            .flat_map(|c| c.iter().copied())
            .filter(|v| *v != 0.0)
            .count();
        d.rpca = Some(RpcaSummary {
            iterations: r.iterations,
            converged: r.converged,
            final_residual: r.final_residual,
            sparse_fraction: nonzero as f64 / (raw.nrows() * raw.ncols()).max(1) as f64,
            objective: r.objective,
        });
        Ok((r.low_rank, r.converged))
    })
}

/// RPCA filtering, the outer reconstruction loop around the truncated
/// delay-embedded DMD, and sparsity-promoting mode selection.
pub fn analyze_snapshot(x: &SnapshotMatrix, cfg: &PipelineConfig, diag: &mut Diagnostics) -> Result<Analysis> {
    cfg.validate()?;
    let (filtered, rpca_ok) = if cfg.rpca_enabled {
        rpca_stage(x.values.as_ref(), cfg, diag)?
    } else {
        (x.values.clone(), true)
    };
    analyze_filtered(x, filtered, rpca_ok, cfg, diag)
}

/// The chain after filtering: `filtered` feeds the DMD and the amplitude
/// fit, while reconstruction errors are measured against `x`. `rpca_ok`
/// says whether the filter converged.
pub fn analyze_filtered(
    x: &SnapshotMatrix,
    filtered: Mat<f64>,
    rpca_ok: bool,
    cfg: &PipelineConfig,
    diag: &mut Diagnostics,
) -> Result<Analysis> {
    let raw = x.values.as_ref();
    if filtered.shape() != raw.shape() {
        return Err(ModalError::Dimension(
            "filtered and raw snapshots differ in shape".into(),
        ));
    }
    diag.snapshot_shape = Some(raw.shape());
    let mut dmd_cfg = cfg.dmd;
    match &cfg.delay {
        DelayMode::Fixed(d) => dmd_cfg.delay = *d,
        DelayMode::Sweep(candidates) => {
            let sweep = diag.time("delay_sweep", |_| {
                sweep_delay(filtered.as_ref(), x.dt, candidates, &dmd_cfg)
            })?;
            dmd_cfg.delay = sweep.recommended;
            diag.delay_sweep = Some(sweep);
        }
    }

    let (chain, rec) = diag.time("dmd", |_| {
        iterate_against(filtered.as_ref(), raw, x.dt, &dmd_cfg, &cfg.outer_loop)
    })?;
    diag.singular_values = chain.singular_values.clone();
    diag.truncation = Some(chain.truncation);
    diag.second_rank = Some(chain.second_rank);
    diag.eigenvalues = chain.result.eigenvalues.iter().map(|z| [z.re, z.im]).collect();
    let loop_ok = rec.converged;
    diag.reconstruction = Some(rec);
    let full = chain.result;

    let selected = if cfg.sparsity.enabled {
        diag.time("sparsity", |d| {
            let problem =
                build_amplitude_problem(filtered.as_ref(), full.modes.as_ref(), &full.eigenvalues, x.ncols())?;
            let sel = match cfg.sparsity.gamma {
                Some(g) => {
                    let out = admm_sparsify(&problem, g, &cfg.sparsity.sweep.admm)?;
                    select_at(&problem, g, &out.polished)?
                }
                None => {
                    let sweep = gamma_sweep(&problem, &cfg.sparsity.sweep)?;
                    let sel = select_optimal_gamma(&problem, &sweep)?;
                    d.sweep = Some(sweep);
                    sel
                }
            };
            d.selected = sel.indices.clone();
            d.gamma = Some(sel.gamma);
            Ok(full.restrict(&sel.indices, &sel.amplitudes))
        })?
    } else {
        diag.selected = (0..full.len()).collect();
        full.clone()
    };
    let parameters = extract_modal_parameters(&selected);
    Ok(Analysis {
        full,
        selected,
        parameters,
        converged: rpca_ok && loop_ok,
    })
}

/// One report row per conjugate pair or real eigenvalue of the selection.
pub fn mode_entries(analysis: &Analysis) -> Vec<ModeEntry> {
    analysis
        .parameters
        .iter()
        .map(|p| {
            let mut flags = Vec::new();
            if p.is_static {
                flags.push(STATIC.to_string());
            } else if p.growth_rate > 0.0 {
                flags.push(GROWING.to_string());
            }
            ModeEntry {
                scaled_freq: p.scaled_freq,
                damping_ratio: p.damping_ratio,
                growth_rate: p.growth_rate,
                amplitude: analysis.selected.amplitudes[p.index].norm(),
                is_static: p.is_static,
                flags,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: ModeReport,
    pub analysis: Analysis,
    pub diagnostics: Diagnostics,
}

/// A failed run: the stage-tagged error plus whatever diagnostics were
/// collected before it.
#[derive(Debug)]
pub struct PipelineFailure {
    pub error: ModalError,
    pub diagnostics: Diagnostics,
}

impl std::fmt::Display for PipelineFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for PipelineFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

pub type RunResult = std::result::Result<PipelineOutput, PipelineFailure>;

fn run_dataset(
    dataset: &TestPointDataset,
    cfg: &PipelineConfig,
    measurement: Option<(&MeasurementMatrix, RpcaPlacement)>,
    excluded: Vec<String>,
    diag: &mut Diagnostics,
) -> Result<(ModeReport, Analysis)> {
    let start = Instant::now();
    diag.excluded_channels = excluded.clone();
    let ing = &cfg.ingestion;
    let windows = diag.time("detect", |_| {
        detect_maneuvers(dataset, ing.maneuver_count, ing.window_length, &ing.detection)
    })?;
    diag.windows = windows.clone();
    let x = diag.time("stack", |_| {
        build_snapshot_matrix(dataset, &windows, ing.window_length, ing.demean)
    })?;
    let analysis = match measurement {
        Some((c, RpcaPlacement::FullState)) => {
            cfg.validate()?;
            let (filtered, rpca_ok) = if cfg.rpca_enabled {
                rpca_stage(x.values.as_ref(), cfg, diag)?
            } else {
                (x.values.clone(), true)
            };
            let (y, y_filtered) = diag.time("compress", |_| {
                Ok((
                    compress_snapshot(&x, c)?,
                    compress_snapshot(&x.with_values(filtered), c)?,
                ))
            })?;
            analyze_filtered(&y, y_filtered.values, rpca_ok, cfg, diag)?
        }
        _ => analyze_snapshot(&x, cfg, diag)?,
    };
    let measurement = measurement.map(|(c, _)| c);
    let provenance = Provenance {
        config_hash: cfg.hash(),
        seed: Some(cfg.seed),
        measurement: measurement.map(|c| MeasurementInfo {
            kind: c.kind.to_string(),
            p: c.p,
            n: c.n,
            seed: c.seed,
        }),
        excluded_channels: excluded,
        rank: Some(analysis.full.rank),
        delay: Some(analysis.full.delay),
        gamma: diag.gamma,
        converged: Some(analysis.converged),
        runtime_seconds: start.elapsed().as_secs_f64(),
        stage_timings: diag.timings.clone(),
    };
    let report = ModeReport::new(dataset.test_point_id.clone(), mode_entries(&analysis), provenance);
    Ok((report, analysis))
}

fn finish(result: Result<(ModeReport, Analysis)>, diagnostics: Diagnostics) -> RunResult {
    match result {
        Ok((report, analysis)) => Ok(PipelineOutput {
            report,
            analysis,
            diagnostics,
        }),
        Err(error) => Err(PipelineFailure { error, diagnostics }),
    }
}

/// Runs the chain on every valid channel of the dataset.
pub fn run_full(dataset: &TestPointDataset, cfg: &PipelineConfig) -> RunResult {
    let mut diag = Diagnostics::default();
    let result = dataset
        .validate()
        .map_err(|e| e.in_stage("ingest"))
        .and_then(|_| run_dataset(dataset, cfg, None, dataset.excluded_channels(), &mut diag));
    finish(result, diag)
}

/// Draws the measurement matrix described by `cfg.compressed` and runs
/// [`run_with_measurement`].
pub fn run_limited(dataset: &TestPointDataset, cfg: &PipelineConfig) -> RunResult {
    let drawn = cfg
        .compressed
        .ok_or_else(|| ModalError::Config("limited-sensor run needs a compressed section".into()))
        .and_then(|c| make_measurement(c.kind, c.p, dataset.valid_count(), c.seed))
        .map_err(|e| e.in_stage("compress"));
    match drawn {
        Ok(c) => run_with_measurement(dataset, cfg, &c),
        Err(error) => Err(PipelineFailure {
            error,
            diagnostics: Diagnostics::default(),
        }),
    }
}

/// Measures the valid channels with `c` and runs the chain on the resulting
/// pseudo-channels. With [`RpcaPlacement::FullState`] maneuvers are found
/// and RPCA runs on the full-state data, and `C` is applied block-wise to
/// the stacked matrix and its filtered part.
pub fn run_with_measurement(dataset: &TestPointDataset, cfg: &PipelineConfig, c: &MeasurementMatrix) -> RunResult {
    let mut diag = Diagnostics::default();
    let excluded = dataset.excluded_channels();
    let result = dataset.validate().map_err(|e| e.in_stage("ingest")).and_then(|_| {
        if c.n != dataset.valid_count() {
            return Err(ModalError::Dimension(format!(
                "measurement expects {} sensors, dataset has {} valid channels",
                c.n,
                dataset.valid_count()
            ))
            .in_stage("compress"));
        }
        match cfg.limited_rpca {
            RpcaPlacement::FullState => {
                run_dataset(dataset, cfg, Some((c, RpcaPlacement::FullState)), excluded, &mut diag)
            }
            RpcaPlacement::Compressed => {
                let compressed = diag.time("compress", |_| compress_dataset(dataset, c))?;
                run_dataset(
                    &compressed,
                    cfg,
                    Some((c, RpcaPlacement::Compressed)),
                    excluded,
                    &mut diag,
                )
            }
        }
    });
    finish(result, diag)
}

/// DMD of the compressed snapshot `C X`, applied per maneuver block. RPCA
/// runs before or after compression according to `cfg.limited_rpca`.
pub fn cs_dmd(x: &SnapshotMatrix, c: &MeasurementMatrix, cfg: &PipelineConfig) -> Result<CsDmdResult> {
    let mut diag = Diagnostics::default();
    let analysis = match cfg.limited_rpca {
        RpcaPlacement::FullState => {
            cfg.validate()?;
            let (filtered, ok) = if cfg.rpca_enabled {
                rpca_stage(x.values.as_ref(), cfg, &mut diag)?
            } else {
                (x.values.clone(), true)
            };
            let y = compress_snapshot(x, c).map_err(|e| e.in_stage("compress"))?;
            let yf = compress_snapshot(&x.with_values(filtered), c).map_err(|e| e.in_stage("compress"))?;
            analyze_filtered(&y, yf.values, ok, cfg, &mut diag)?
        }
        RpcaPlacement::Compressed => {
            let y = compress_snapshot(x, c).map_err(|e| e.in_stage("compress"))?;
            analyze_snapshot(&y, cfg, &mut diag)?
        }
    };
    Ok(CsDmdResult {
        dmd: analysis.selected,
        measurement: c.clone(),
    })
}

/// Eigenvalues as complex numbers, sorted by angle then magnitude.
pub fn sorted_eigenvalues(values: &[c64]) -> Vec<c64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.im.total_cmp(&b.im).then(a.re.total_cmp(&b.re)));
    v
}

/// Detection, stacking and RPCA followed by the delay sweep, for choosing
/// `d` before a full run.
pub fn sweep_delay_for(dataset: &TestPointDataset, cfg: &PipelineConfig, candidates: &[usize]) -> Result<DelaySweep> {
    dataset.validate().map_err(|e| e.in_stage("ingest"))?;
    let ing = &cfg.ingestion;
    let windows = detect_maneuvers(dataset, ing.maneuver_count, ing.window_length, &ing.detection)
        .map_err(|e| e.in_stage("detect"))?;
    let x = build_snapshot_matrix(dataset, &windows, ing.window_length, ing.demean).map_err(|e| e.in_stage("stack"))?;
    let filtered = if cfg.rpca_enabled {
        rpca_ialm(x.values.as_ref(), &cfg.rpca)
            .map_err(|e| e.in_stage("rpca"))?
            .low_rank
    } else {
        x.values.clone()
    };
    sweep_delay(filtered.as_ref(), x.dt, candidates, &cfg.dmd).map_err(|e| e.in_stage("delay_sweep"))
}
