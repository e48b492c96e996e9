//! Measurement matrices, sensor-level compression, restricted-isometry
//! diagnostics and orthogonal matching pursuit.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use faer::{c64, Mat, MatRef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dmd::DmdResult;
use crate::error::{ModalError, Result};
use crate::ingest::{ChannelRecord, RowLabel, SnapshotMatrix, TestPointDataset};
use crate::linalg::complex_lstsq_min_norm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    UniformRandom,
    GaussianRandom,
    SinglePixel,
}

impl MeasurementKind {
    pub const ALL: [MeasurementKind; 3] = [
        MeasurementKind::UniformRandom,
        MeasurementKind::GaussianRandom,
        MeasurementKind::SinglePixel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MeasurementKind::UniformRandom => "uniform_random",
            MeasurementKind::GaussianRandom => "gaussian_random",
            MeasurementKind::SinglePixel => "single_pixel",
        }
    }
}

impl fmt::Display for MeasurementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeasurementKind {
    type Err = ModalError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" | "uniform_random" => Ok(MeasurementKind::UniformRandom),
            "gaussian" | "gaussian_random" => Ok(MeasurementKind::GaussianRandom),
            "single_pixel" | "single-pixel" | "pixel" => Ok(MeasurementKind::SinglePixel),
            other => Err(ModalError::Config(format!("unknown measurement kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMatrix {
    pub kind: MeasurementKind,
    pub entries: Mat<f64>,
    pub seed: u64,
    pub p: usize,
    pub n: usize,
}

pub fn make_measurement(kind: MeasurementKind, p: usize, n: usize, seed: u64) -> Result<MeasurementMatrix> {
    if p == 0 || p > n {
        return Err(ModalError::Dimension(format!(
            "measurement count {p} must lie in 1..={n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (n as f64).sqrt();
    let entries = match kind {
        MeasurementKind::GaussianRandom => Mat::from_fn(p, n, |_, _| scale * rng.sample::<f64, _>(StandardNormal)),
        MeasurementKind::UniformRandom => Mat::from_fn(p, n, |_, _| scale * rng.random_range(-1.0..1.0)),
        MeasurementKind::SinglePixel => {
            let rows = rand::seq::index::sample(&mut rng, n, p).into_vec();
            selection_matrix(&rows, n)
        }
    };
    Ok(MeasurementMatrix {
        kind,
        entries,
        seed,
        p,
        n,
    })
}

fn selection_matrix(rows: &[usize], n: usize) -> Mat<f64> {
    Mat::from_fn(rows.len(), n, |i, j| if rows[i] == j { 1.0 } else { 0.0 })
}

impl MeasurementMatrix {
    /// Single-pixel measurement picking the listed sensors, in order.
    pub fn from_indices(indices: &[usize], n: usize, seed: u64) -> Result<Self> {
        let mut seen = vec![false; n];
        for &i in indices {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(ModalError::InvalidInput(format!(
                    "sensor index {i} repeated or out of range"
                )));
            }
        }
        if indices.is_empty() {
            return Err(ModalError::Dimension("no sensors selected".into()));
        }
        Ok(Self {
            kind: MeasurementKind::SinglePixel,
            entries: selection_matrix(indices, n),
            seed,
            p: indices.len(),
            n,
        })
    }

    /// Selected sensor per row, for single-pixel matrices.
    pub fn selected_sensors(&self) -> Option<Vec<usize>> {
        if self.kind != MeasurementKind::SinglePixel {
            return None;
        }
        Some(
            (0..self.p)
                .map(|i| (0..self.n).find(|&j| self.entries[(i, j)] == 1.0).unwrap_or(0))
                .collect(),
        )
    }

    pub fn write_csv(&self, mut sink: impl Write) -> std::io::Result<()> {
        writeln!(sink, "kind={},p={},n={},seed={}", self.kind, self.p, self.n, self.seed)?;
        for i in 0..self.p {
            let row: Vec<String> = (0..self.n).map(|j| self.entries[(i, j)].to_string()).collect();
            writeln!(sink, "{}", row.join(","))?;
        }
        sink.flush()
    }

    pub fn read_csv(source: impl BufRead) -> Result<Self> {
        let mut lines = source.lines();
        let header = lines
            .next()
            .ok_or_else(|| ModalError::Parse {
                line: 1,
                message: "empty measurement file".into(),
            })?
            .map_err(|e| ModalError::Parse {
                line: 1,
                message: e.to_string(),
            })?;
        let mut kind = None;
        let mut p = None;
        let mut n = None;
        let mut seed = None;
        for field in header.split(',') {
            let (key, value) = field.split_once('=').ok_or_else(|| ModalError::Parse {
                line: 1,
                message: format!("header field `{field}` is not key=value"),
            })?;
            let bad = |_| ModalError::Parse {
                line: 1,
                message: format!("bad value for `{key}`"),
            };
            match key.trim() {
                "kind" => kind = Some(value.parse::<MeasurementKind>()?),
                "p" => p = Some(value.trim().parse::<usize>().map_err(bad)?),
                "n" => n = Some(value.trim().parse::<usize>().map_err(bad)?),
                "seed" => seed = Some(value.trim().parse::<u64>().map_err(bad)?),
                other => {
                    return Err(ModalError::Parse {
                        line: 1,
                        message: format!("unknown header key `{other}`"),
                    })
                }
            }
        }
        let missing = || ModalError::Parse {
            line: 1,
            message: "header needs kind, p, n and seed".into(),
        };
        let (kind, p, n, seed) = (
            kind.ok_or_else(missing)?,
            p.ok_or_else(missing)?,
            n.ok_or_else(missing)?,
            seed.ok_or_else(missing)?,
        );
        let mut entries = Mat::<f64>::zeros(p, n);
        for i in 0..p {
            let line_no = i + 2;
            let line = lines
                .next()
                .ok_or_else(|| ModalError::Parse {
                    line: line_no,
                    message: format!("expected {p} matrix rows"),
                })?
                .map_err(|e| ModalError::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?;
            let values: Vec<&str> = line.split(',').collect();
            if values.len() != n {
                return Err(ModalError::Parse {
                    line: line_no,
                    message: format!("expected {n} entries, found {}", values.len()),
                });
            }
            for (j, v) in values.iter().enumerate() {
                entries[(i, j)] = v.trim().parse().map_err(|_| ModalError::Parse {
                    line: line_no,
                    message: format!("entry `{v}` is not numeric"),
                })?;
            }
        }
        Ok(Self {
            kind,
            entries,
            seed,
            p,
            n,
        })
    }
}

/// Applies `C` to the valid channels, producing `p` pseudo-channels named
/// `m1..mp`. Defective channels are not measured.
pub fn compress_dataset(dataset: &TestPointDataset, c: &MeasurementMatrix) -> Result<TestPointDataset> {
    let valid: Vec<&ChannelRecord> = dataset.valid_channels().collect();
    if valid.len() != c.n {
        return Err(ModalError::Dimension(format!(
            "measurement expects {} sensors, dataset has {} valid channels",
            c.n,
            valid.len()
        )));
    }
    let len = dataset.record_len();
    let channels = (0..c.p)
        .map(|i| {
            let mut samples = vec![0.0; len];
            for (k, ch) in valid.iter().enumerate() {
                let w = c.entries[(i, k)];
                if w != 0.0 {
                    for (s, x) in samples.iter_mut().zip(&ch.samples) {
                        *s += w * x;
                    }
                }
            }
            ChannelRecord::new(format!("m{}", i + 1), samples)
        })
        .collect();
    TestPointDataset::new(dataset.test_point_id.clone(), channels, dataset.dt)
}

/// Compresses a channel-major stacked matrix block by block:
/// `Y[i·M + j] = Σ_c C[i, c] X[c·M + j]` for `M` maneuvers.
pub fn compress_snapshot(x: &SnapshotMatrix, c: &MeasurementMatrix) -> Result<SnapshotMatrix> {
    let m = x.maneuvers_per_channel();
    if m == 0 || x.nrows() != c.n * m {
        return Err(ModalError::Dimension(format!(
            "{} stacked rows do not match {} sensors",
            x.nrows(),
            c.n
        )));
    }
    let cols = x.ncols();
    let mut values = Mat::<f64>::zeros(c.p * m, cols);
    for i in 0..c.p {
        for k in 0..c.n {
            let w = c.entries[(i, k)];
            if w == 0.0 {
                continue;
            }
            for j in 0..m {
                for t in 0..cols {
                    values[(i * m + j, t)] += w * x.values[(k * m + j, t)];
                }
            }
        }
    }
    let labels = (0..c.p * m)
        .map(|row| RowLabel {
            channel_id: format!("m{}", row / m + 1),
            maneuver: x.row_labels[row % m].maneuver,
        })
        .collect();
    SnapshotMatrix::new(values, labels, x.dt)
}

#[derive(Debug, Clone)]
pub struct CsDmdResult {
    /// DMD of the compressed data; `modes` are the compressed modes `Φ_Y`.
    pub dmd: DmdResult,
    pub measurement: MeasurementMatrix,
}

impl CsDmdResult {
    pub fn eigenvalues(&self) -> &[c64] {
        &self.dmd.eigenvalues
    }

    pub fn compressed_modes(&self) -> MatRef<'_, c64> {
        self.dmd.modes.as_ref()
    }
}

#[derive(Debug, Clone)]
pub struct SparseBasis {
    pub psi: Mat<c64>,
    pub label: String,
}

impl SparseBasis {
    pub fn identity(n: usize) -> Self {
        Self {
            psi: Mat::from_fn(n, n, |i, j| c64::new(if i == j { 1.0 } else { 0.0 }, 0.0)),
            label: "identity".into(),
        }
    }

    /// Unitary discrete Fourier basis.
    pub fn fourier(n: usize) -> Self {
        let scale = 1.0 / (n as f64).sqrt();
        Self {
            psi: Mat::from_fn(n, n, |i, j| {
                let angle = 2.0 * std::f64::consts::PI * (i * j) as f64 / n as f64;
                c64::new(angle.cos() * scale, angle.sin() * scale)
            }),
            label: "fourier".into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.psi.nrows()
    }
}

/// Monte Carlo lower bound on the restricted isometry constant of `CΨ`
/// over random `k`-sparse unit vectors.
pub fn rip_diagnostic(c: &MeasurementMatrix, basis: &SparseBasis, k: usize, trials: usize, seed: u64) -> Result<f64> {
    if basis.dim() != c.n {
        return Err(ModalError::Dimension(format!(
            "basis is {}-dimensional, C has {} columns",
            basis.dim(),
            c.n
        )));
    }
    if k == 0 {
        return Ok(0.0);
    }
    if k > c.p || trials == 0 {
        return Err(ModalError::InvalidInput(format!(
            "need 1 <= k <= {} and trials >= 1",
            c.p
        )));
    }
    let a = crate::linalg::to_complex(c.entries.as_ref()) * &basis.psi;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut delta = 0.0_f64;
    for _ in 0..trials {
        let support = rand::seq::index::sample(&mut rng, c.n, k).into_vec();
        let mut coef: Vec<c64> = (0..k)
            .map(|_| c64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let norm = coef.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        coef.iter_mut().for_each(|z| *z /= norm);
        let mut energy = 0.0;
        for i in 0..c.p {
            let mut acc = c64::new(0.0, 0.0);
            for (&j, z) in support.iter().zip(&coef) {
                acc += a[(i, j)] * z;
            }
            energy += acc.norm_sqr();
        }
        delta = delta.max((energy - 1.0).abs());
    }
    Ok(delta)
}

#[derive(Debug, Clone)]
pub struct OmpResult {
    pub coefficients: Vec<c64>,
    pub support: Vec<usize>,
    pub residual: f64,
}

/// Orthogonal matching pursuit: greedily adds the atom most correlated with
/// the residual and refits on the support, until `k` atoms are chosen or
/// the residual norm falls to `tol`.
pub fn omp(a: MatRef<'_, c64>, y: &[c64], k: usize, tol: f64) -> Result<OmpResult> {
    let (p, n) = a.shape();
    if y.len() != p {
        return Err(ModalError::Dimension(format!(
            "dictionary has {p} rows, measurement has {}",
            y.len()
        )));
    }
    if k > p {
        return Err(ModalError::InvalidInput(format!(
            "sparsity {k} exceeds {p} measurements"
        )));
    }
    let norms: Vec<f64> = (0..n)
        .map(|j| a.col(j).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    if let Some(j) = norms.iter().position(|&v| v == 0.0) {
        return Err(ModalError::Numerical(format!("dictionary column {j} is zero")));
    }
    let mut residual: Vec<c64> = y.to_vec();
    let mut support: Vec<usize> = Vec::new();
    let mut coef_s: Vec<c64> = Vec::new();
    let res_norm = |r: &[c64]| r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    while support.len() < k && res_norm(&residual) > tol {
        let mut best = None;
        let mut best_val = -1.0;
        for j in 0..n {
            if support.contains(&j) {
                continue;
            }
            let mut acc = c64::new(0.0, 0.0);
            for i in 0..p {
                acc += a[(i, j)].conj() * residual[i];
            }
            let v = acc.norm() / norms[j];
            if v > best_val {
                best_val = v;
                best = Some(j);
            }
        }
        let Some(j) = best else { break };
        support.push(j);
        let sub = Mat::from_fn(p, support.len(), |i, c| a[(i, support[c])]);
        coef_s = complex_lstsq_min_norm(sub.as_ref(), y)?;
        for i in 0..p {
            let mut fit = c64::new(0.0, 0.0);
            for (c, &s) in support.iter().enumerate() {
                fit += a[(i, s)] * coef_s[c];
            }
            residual[i] = y[i] - fit;
        }
    }
    let mut coefficients = vec![c64::new(0.0, 0.0); n];
    for (c, &s) in support.iter().enumerate() {
        coefficients[s] = coef_s[c];
    }
    Ok(OmpResult {
        coefficients,
        residual: res_norm(&residual),
        support,
    })
}

#[derive(Debug, Clone)]
pub struct FullModes {
    /// Recovered full-state modes, stacked per maneuver block like the data.
    pub modes: Mat<c64>,
    /// `true` where recovery failed for at least one block of that mode.
    pub failed: Vec<bool>,
}

/// Recovers full-state modes from compressed ones by solving
/// `(CΨ) s = φ_Y` with OMP in every maneuver block and mapping `φ_X = Ψ s`.
pub fn reconstruct_full_modes(
    compressed: MatRef<'_, c64>,
    blocks: usize,
    c: &MeasurementMatrix,
    basis: &SparseBasis,
    k: usize,
) -> Result<FullModes> {
    if blocks == 0 || compressed.nrows() != c.p * blocks || basis.dim() != c.n {
        return Err(ModalError::Dimension(format!(
            "compressed modes have {} rows for {} measurements x {blocks} blocks",
            compressed.nrows(),
            c.p
        )));
    }
    let dict = crate::linalg::to_complex(c.entries.as_ref()) * &basis.psi;
    let n_modes = compressed.ncols();
    let mut modes = Mat::<c64>::zeros(c.n * blocks, n_modes);
    let mut failed = vec![false; n_modes];
    for mode in 0..n_modes {
        for j in 0..blocks {
            let y: Vec<c64> = (0..c.p).map(|i| compressed[(i * blocks + j, mode)]).collect();
            let tol = 1e-12 * y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            match omp(dict.as_ref(), &y, k, tol) {
                Ok(sol) => {
                    for row in 0..c.n {
                        let mut acc = c64::new(0.0, 0.0);
                        for &s in &sol.support {
                            acc += basis.psi[(row, s)] * sol.coefficients[s];
                        }
                        modes[(row * blocks + j, mode)] = acc;
                    }
                }
                Err(_) => failed[mode] = true,
            }
        }
    }
    Ok(FullModes { modes, failed })
}
