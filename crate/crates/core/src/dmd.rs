//! Rank truncation, POD projection, time-delay embedding and exact DMD.

use faer::{c64, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{ModalError, Result};
use crate::linalg::{complex_lstsq_min_norm, energy_fraction, energy_rank, median, to_complex, ThinSvd};

/// `λ(β)` of the optimal hard threshold for a known noise level.
pub fn gd_lambda(beta: f64) -> f64 {
    let b1 = beta + 1.0;
    (2.0 * b1 + 8.0 * beta / (b1 + (beta * beta + 14.0 * beta + 1.0).sqrt())).sqrt()
}

fn mp_bounds(beta: f64) -> (f64, f64) {
    let sb = beta.sqrt();
    ((1.0 - sb).powi(2), (1.0 + sb).powi(2))
}

/// Integrand of the Marchenko–Pastur CDF after substituting
/// `x = a + (b − a)(1 − cos θ)/2`, which removes the edge singularities.
fn mp_theta_density(theta: f64, beta: f64, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    // 1 − cos θ without cancellation near θ = 0
    let x = a + 2.0 * half * (0.5 * theta).sin().powi(2);
    if x <= 0.0 {
        // β = 1 at θ = 0: the limit of sin²θ / x is 1/half
        return half * half / (2.0 * std::f64::consts::PI * beta * half);
    }
    let s = half * theta.sin();
    s * s / (2.0 * std::f64::consts::PI * beta * x)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(a, m, fa, flm, fm);
        let right = simpson(m, b, fm, frm, fb);
        let delta = left + right - whole;
        // below a few ulps of the panel the error estimate is rounding noise
        let floor = 64.0 * f64::EPSILON * (left.abs() + right.abs());
        if depth == 0 || delta.abs() <= 15.0 * tol.max(floor) {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(a, b, fa, fm, fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 32)
}

/// Marchenko–Pastur CDF for aspect ratio `beta ∈ (0, 1]`.
pub fn mp_cdf(x: f64, beta: f64) -> f64 {
    let (a, b) = mp_bounds(beta);
    if x <= a {
        return 0.0;
    }
    if x >= b {
        return 1.0;
    }
    let theta = (1.0 - 2.0 * (x - a) / (b - a)).clamp(-1.0, 1.0).acos();
    adaptive_simpson(&|t| mp_theta_density(t, beta, a, b), 0.0, theta, 1e-14)
}

/// Median of the Marchenko–Pastur distribution, by bisection on the CDF.
pub fn mp_median(beta: f64) -> f64 {
    assert!(beta > 0.0 && beta <= 1.0, "beta must lie in (0, 1]");
    let (mut lo, mut hi) = mp_bounds(beta);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if mp_cdf(mid, beta) < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `ω(β)` for an unknown noise level, applied to the median singular value.
pub fn gd_omega(beta: f64) -> f64 {
    gd_lambda(beta) / mp_median(beta).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationMethod {
    GavishDonoho,
    Energy,
    Fixed,
    /// Larger of the Gavish–Donoho rank and the energy rank.
    Combined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationConfig {
    pub method: TruncationMethod,
    pub energy: f64,
    pub rank: Option<usize>,
    /// Known noise standard deviation per entry.
    pub eta: Option<f64>,
    /// Upper bound applied after the method's choice.
    pub max_rank: Option<usize>,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        Self {
            method: TruncationMethod::Combined,
            energy: 0.999,
            rank: None,
            eta: None,
            max_rank: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationDecision {
    pub rank: usize,
    pub threshold: f64,
    pub beta: f64,
    pub eta: Option<f64>,
    pub energy_captured: f64,
}

pub fn optimal_hard_threshold(s: &[f64], n: usize, m: usize, eta: Option<f64>) -> Result<TruncationDecision> {
    if n == 0 || m == 0 || s.is_empty() {
        return Err(ModalError::InvalidInput("empty spectrum".into()));
    }
    if s.iter().all(|&x| x == 0.0) {
        return Err(ModalError::Degenerate("all singular values are zero".into()));
    }
    let beta = n.min(m) as f64 / n.max(m) as f64;
    let threshold = match eta {
        Some(eta) => gd_lambda(beta) * (n.max(m) as f64).sqrt() * eta,
        None => gd_omega(beta) * median(s),
    };
    let rank = s.iter().filter(|&&x| x > threshold).count().max(1);
    Ok(TruncationDecision {
        rank,
        threshold,
        beta,
        eta,
        energy_captured: energy_fraction(s, rank),
    })
}

pub fn choose_rank(s: &[f64], n: usize, m: usize, cfg: &TruncationConfig) -> Result<TruncationDecision> {
    let gd = optimal_hard_threshold(s, n, m, cfg.eta)?;
    let rank = match cfg.method {
        TruncationMethod::GavishDonoho => gd.rank,
        TruncationMethod::Energy => energy_rank(s, cfg.energy),
        TruncationMethod::Combined => gd.rank.max(energy_rank(s, cfg.energy)),
        TruncationMethod::Fixed => cfg
            .rank
            .ok_or_else(|| ModalError::Config("fixed truncation needs a rank".into()))?,
    };
    let rank = rank.min(cfg.max_rank.unwrap_or(usize::MAX)).clamp(1, s.len());
    Ok(TruncationDecision {
        rank,
        energy_captured: energy_fraction(s, rank),
        ..gd
    })
}

/// Projects `x` onto its leading `rank` left singular vectors. Returns the
/// reduced matrix `U_rᵀX` and the basis `U_r`.
pub fn pod_project(x: MatRef<'_, f64>, rank: usize) -> Result<(Mat<f64>, Mat<f64>)> {
    let svd = ThinSvd::new(x)?;
    pod_from_svd(&svd, rank)
}

pub fn pod_from_svd(svd: &ThinSvd, rank: usize) -> Result<(Mat<f64>, Mat<f64>)> {
    if rank == 0 || rank > svd.len() {
        return Err(ModalError::Dimension(format!("rank {rank} outside 1..={}", svd.len())));
    }
    let m = svd.v.nrows();
    let reduced = Mat::from_fn(rank, m, |i, j| svd.s[i] * svd.v[(j, i)]);
    Ok((reduced, svd.u.subcols(0, rank).to_owned()))
}

/// Block-Hankel embedding: block row `i` holds columns `i..i + m − d + 1`.
pub fn hankel_embed(x: MatRef<'_, f64>, d: usize) -> Result<Mat<f64>> {
    let (r, m) = x.shape();
    if d == 0 || d >= m {
        return Err(ModalError::Dimension(format!("delay {d} must lie in 1..{m}")));
    }
    let cols = m - d + 1;
    Ok(Mat::from_fn(r * d, cols, |row, j| x[(row % r, row / r + j)]))
}

#[derive(Debug, Clone)]
pub struct ExactDmd {
    /// Exact DMD modes in the embedded coordinates, one column per eigenvalue.
    pub modes: Mat<c64>,
    pub eigenvalues: Vec<c64>,
    /// Truncated left singular basis of the first snapshot block.
    pub basis: Mat<f64>,
    pub rank: usize,
}

/// Exact DMD of the snapshot sequence stored column-wise in `h`.
pub fn exact_dmd(h: MatRef<'_, f64>, second_level_energy: f64) -> Result<ExactDmd> {
    let (rows, cols) = h.shape();
    if cols < 2 {
        return Err(ModalError::Dimension("exact DMD needs at least two snapshots".into()));
    }
    let h1 = h.subcols(0, cols - 1);
    let h2 = h.subcols(1, cols - 1);
    let svd = ThinSvd::new(h1)?;
    if svd.s[0] == 0.0 {
        return Err(ModalError::Degenerate("first snapshot block has rank zero".into()));
    }
    // singular values below roundoff carry no direction
    let floor = svd.s[0] * f64::EPSILON * rows.max(cols) as f64;
    let numeric_rank = svd.s.iter().filter(|&&s| s > floor).count();
    let r2 = energy_rank(&svd.s, second_level_energy).clamp(1, numeric_rank);

    let u1 = svd.u.subcols(0, r2);
    let v1 = svd.v.subcols(0, r2);
    let mut b = h2 * v1;
    for k in 0..r2 {
        let inv = 1.0 / svd.s[k];
        for i in 0..rows {
            b[(i, k)] *= inv;
        }
    }
    let a_tilde = u1.transpose() * &b;
    let eig = a_tilde
        .eigen()
        .map_err(|e| ModalError::Numerical(format!("eigendecomposition failed: {e:?}")))?;
    let eigenvalues: Vec<c64> = eig.S().column_vector().iter().copied().collect();
    let modes = to_complex(b.as_ref()) * eig.U();
    Ok(ExactDmd {
        modes,
        eigenvalues,
        basis: u1.to_owned(),
        rank: r2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondLevelMethod {
    /// Smallest rank reaching `second_level_energy`.
    Energy,
    /// Optimal hard threshold with unknown noise on the embedded spectrum.
    GavishDonoho,
}

fn second_level_rank(s: &[f64], rows: usize, cols: usize, method: SecondLevelMethod, energy: f64) -> Result<usize> {
    Ok(match method {
        SecondLevelMethod::Energy => energy_rank(s, energy),
        SecondLevelMethod::GavishDonoho => optimal_hard_threshold(s, rows, cols, None)?.rank,
    })
}

/// Exact DMD of the block-Hankel embedding of `xt` with delay `d`. Works
/// from the Gram matrices `H₁ᵀH₁` and `H₁ᵀH₂`, which are sums of shifted
/// blocks of `xtᵀxt`, so the `rd`-row embedding is never formed. Returns
/// the same quantities as [`exact_dmd`] on [`hankel_embed`]`(xt, d)`.
pub fn hankel_dmd(
    xt: MatRef<'_, f64>,
    d: usize,
    method: SecondLevelMethod,
    energy: f64,
) -> Result<(ExactDmd, Vec<f64>)> {
    let (r, m) = xt.shape();
    if d == 0 || d + 1 >= m {
        return Err(ModalError::Dimension(format!(
            "delay {d} leaves fewer than two snapshots of {m}"
        )));
    }
    let c = m - d;
    let k = xt.transpose() * xt;
    let mut g = Mat::<f64>::zeros(c, c);
    let mut cross = Mat::<f64>::zeros(c, c);
    for j in 0..d {
        g += k.submatrix(j, j, c, c);
        cross += k.submatrix(j, j + 1, c, c);
    }
    let eig = g
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| ModalError::Numerical(format!("Gram eigendecomposition failed: {e:?}")))?;
    let vals = eig.S().column_vector();
    // ascending eigenvalues, reversed into descending singular values
    let order: Vec<usize> = (0..c).rev().collect();
    let s: Vec<f64> = order.iter().map(|&i| vals[i].max(0.0).sqrt()).collect();
    if s[0] == 0.0 {
        return Err(ModalError::Degenerate("first snapshot block has rank zero".into()));
    }
    // the Gram route squares the condition number
    let floor = s[0] * 1e-7;
    let numeric_rank = s.iter().filter(|&&v| v > floor).count().max(1);
    let r2 = second_level_rank(&s, r * d, c, method, energy)?.clamp(1, numeric_rank);

    let u = eig.U();
    let ws = Mat::from_fn(c, r2, |i, j| u[(i, order[j])] / s[j]);
    let a_tilde = ws.transpose() * &cross * &ws;
    let eig_a = a_tilde
        .eigen()
        .map_err(|e| ModalError::Numerical(format!("eigendecomposition failed: {e:?}")))?;
    let eigenvalues: Vec<c64> = eig_a.S().column_vector().iter().copied().collect();

    let mut b = Mat::<f64>::zeros(r * d, r2);
    let mut basis = Mat::<f64>::zeros(r * d, r2);
    for j in 0..d {
        b.subrows_mut(j * r, r).copy_from(xt.subcols(j + 1, c) * &ws);
        basis.subrows_mut(j * r, r).copy_from(xt.subcols(j, c) * &ws);
    }
    let modes = to_complex(b.as_ref()) * eig_a.U();
    Ok((
        ExactDmd {
            modes,
            eigenvalues,
            basis,
            rank: r2,
        },
        s,
    ))
}

/// Maps embedded reduced modes to full-state modes: keeps the current-time
/// block (first `rows(Φ̃)/d` rows) and applies the first-level basis.
pub fn lift_modes(reduced: MatRef<'_, c64>, basis: MatRef<'_, f64>, d: usize) -> Result<Mat<c64>> {
    if d == 0 || reduced.nrows() % d != 0 {
        return Err(ModalError::Dimension(format!(
            "{} embedded rows are not a multiple of delay {d}",
            reduced.nrows()
        )));
    }
    let r = reduced.nrows() / d;
    if basis.ncols() != r {
        return Err(ModalError::Dimension(format!(
            "basis has {} columns, reduced state has {r}",
            basis.ncols()
        )));
    }
    Ok(to_complex(basis) * reduced.subrows(0, r))
}

/// Minimum-norm least-squares amplitudes with `Φ b ≈ x1`.
pub fn amplitudes_pinv(modes: MatRef<'_, c64>, x1: &[c64]) -> Result<Vec<c64>> {
    complex_lstsq_min_norm(modes, x1)
}

#[derive(Debug, Clone)]
pub struct DmdResult {
    pub eigenvalues: Vec<c64>,
    pub omega: Vec<c64>,
    /// Full-state modes, column `k` paired with `eigenvalues[k]`.
    pub modes: Mat<c64>,
    pub amplitudes: Vec<c64>,
    pub rank: usize,
    pub delay: usize,
    pub dt: f64,
}

impl DmdResult {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Keeps the listed mode indices with new amplitudes.
    pub fn restrict(&self, indices: &[usize], amplitudes: &[c64]) -> DmdResult {
        DmdResult {
            eigenvalues: indices.iter().map(|&k| self.eigenvalues[k]).collect(),
            omega: indices.iter().map(|&k| self.omega[k]).collect(),
            modes: Mat::from_fn(self.modes.nrows(), indices.len(), |i, j| self.modes[(i, indices[j])]),
            amplitudes: amplitudes.to_vec(),
            rank: self.rank,
            delay: self.delay,
            dt: self.dt,
        }
    }
}

/// Vandermonde matrix with entry `(k, t) = λ_k^t`, `t = 0..n_time`.
pub fn vandermonde(eigenvalues: &[c64], n_time: usize) -> Mat<c64> {
    let mut v = Mat::<c64>::zeros(eigenvalues.len(), n_time);
    for (k, &lam) in eigenvalues.iter().enumerate() {
        let mut p = c64::new(1.0, 0.0);
        for t in 0..n_time {
            v[(k, t)] = p;
            p *= lam;
        }
    }
    v
}

/// `Re(Φ diag(b) V)`: the real trajectory of the mode expansion.
pub fn reconstruct(result: &DmdResult, n_steps: usize) -> Mat<f64> {
    let n = result.modes.nrows();
    let k = result.len();
    let weighted = Mat::from_fn(n, k, |i, j| result.modes[(i, j)] * result.amplitudes[j]);
    let v = continuous_vandermonde(&result.omega, result.dt, n_steps);
    let full = weighted * v;
    Mat::from_fn(n, n_steps, |i, j| full[(i, j)].re)
}

fn continuous_vandermonde(omega: &[c64], dt: f64, n_steps: usize) -> Mat<c64> {
    Mat::from_fn(omega.len(), n_steps, |k, t| (omega[k] * (t as f64 * dt)).exp())
}

/// Relative Frobenius error of the reconstruction against `reference`.
pub fn reconstruction_error(result: &DmdResult, reference: MatRef<'_, f64>) -> f64 {
    let rec = reconstruct(result, reference.ncols());
    crate::linalg::relative_diff(rec.as_ref(), reference, reference)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmdConfig {
    pub truncation: TruncationConfig,
    pub delay: usize,
    pub second_level: SecondLevelMethod,
    pub second_level_energy: f64,
    /// Eigenvalues smaller than this in magnitude are dropped.
    pub min_eigenvalue: f64,
}

impl Default for DmdConfig {
    fn default() -> Self {
        Self {
            truncation: TruncationConfig::default(),
            delay: 300,
            second_level: SecondLevelMethod::GavishDonoho,
            second_level_energy: 1.0 - 1e-8,
            min_eigenvalue: 1e-12,
        }
    }
}

/// Everything produced by one pass of truncate → embed → DMD.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub result: DmdResult,
    pub truncation: TruncationDecision,
    pub singular_values: Vec<f64>,
    /// Singular values of the first embedded snapshot block.
    pub second_singular_values: Vec<f64>,
    pub second_rank: usize,
}

pub fn dmd_chain(x: MatRef<'_, f64>, dt: f64, cfg: &DmdConfig) -> Result<ChainOutput> {
    let (n, m) = x.shape();
    if !(dt > 0.0) {
        return Err(ModalError::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let svd = ThinSvd::new(x)?;
    let truncation = choose_rank(&svd.s, n, m, &cfg.truncation)?;
    let (reduced, basis) = pod_from_svd(&svd, truncation.rank)?;
    let (ex, second_singular_values) =
        hankel_dmd(reduced.as_ref(), cfg.delay, cfg.second_level, cfg.second_level_energy)?;

    let keep: Vec<usize> = (0..ex.eigenvalues.len())
        .filter(|&k| ex.eigenvalues[k].norm() >= cfg.min_eigenvalue)
        .collect();
    if keep.is_empty() {
        return Err(ModalError::Degenerate("every DMD eigenvalue vanished".into()));
    }
    let eigenvalues: Vec<c64> = keep.iter().map(|&k| ex.eigenvalues[k]).collect();
    let reduced_modes = Mat::from_fn(ex.modes.nrows(), keep.len(), |i, j| ex.modes[(i, keep[j])]);
    let modes = lift_modes(reduced_modes.as_ref(), basis.as_ref(), cfg.delay)?;
    // amplitudes fitted to the first embedded snapshot, which spans d steps
    let r = reduced.nrows();
    let h0: Vec<c64> = (0..r * cfg.delay)
        .map(|i| c64::new(reduced[(i % r, i / r)], 0.0))
        .collect();
    let mut amplitudes = amplitudes_pinv(reduced_modes.as_ref(), &h0)?;
    // unit-norm modes; the scale moves into the amplitude
    let mut modes = modes;
    for (k, b) in amplitudes.iter_mut().enumerate() {
        let norm = modes.col(k).norm_l2();
        if norm > 0.0 {
            modes.col_mut(k).iter_mut().for_each(|z| *z /= norm);
            *b *= norm;
        }
    }
    let omega = eigenvalues.iter().map(|l| l.ln() / dt).collect();

    Ok(ChainOutput {
        result: DmdResult {
            eigenvalues,
            omega,
            modes,
            amplitudes,
            rank: truncation.rank,
            delay: cfg.delay,
            dt,
        },
        truncation,
        singular_values: svd.s,
        second_singular_values,
        second_rank: ex.rank,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelaySweep {
    pub points: Vec<(usize, f64)>,
    pub recommended: usize,
}

/// Reconstruction error of the full chain for each delay candidate. The
/// recommendation is the smallest delay within 0.01 of the best error.
pub fn sweep_delay(x: MatRef<'_, f64>, dt: f64, candidates: &[usize], cfg: &DmdConfig) -> Result<DelaySweep> {
    if candidates.is_empty() {
        return Err(ModalError::InvalidInput("no delay candidates".into()));
    }
    let mut points = Vec::with_capacity(candidates.len());
    for &d in candidates {
        if d >= x.ncols() {
            return Err(ModalError::Dimension(format!(
                "delay {d} must be below {} columns",
                x.ncols()
            )));
        }
        let out = dmd_chain(x, dt, &DmdConfig { delay: d, ..*cfg })?;
        points.push((d, reconstruction_error(&out.result, x)));
    }
    let best = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let recommended = points
        .iter()
        .filter(|p| p.1 <= best + 0.01)
        .map(|p| p.0)
        .min()
        .unwrap_or(candidates[0]);
    Ok(DelaySweep { points, recommended })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub threshold: f64,
    pub max_outer: usize,
    /// Minimum absolute error improvement that justifies another pass.
    pub stall: f64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            threshold: 0.2,
            max_outer: 5,
            stall: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub rel_rms: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
    pub converged: bool,
}

/// Repeats the chain on its own reconstruction until the error against the
/// original matrix drops below the threshold, stalls, or the pass budget is
/// spent. A pass that makes the error worse is discarded, so the reported
/// history never increases.
pub fn iterate_until_converged(
    x: MatRef<'_, f64>,
    dt: f64,
    cfg: &DmdConfig,
    loop_cfg: &LoopConfig,
) -> Result<(ChainOutput, ReconstructionReport)> {
    iterate_against(x, x, dt, cfg, loop_cfg)
}

/// Like [`iterate_until_converged`], but runs the chain on `x` and measures
/// the error against `reference`, usually the matrix before filtering.
pub fn iterate_against(
    x: MatRef<'_, f64>,
    reference: MatRef<'_, f64>,
    dt: f64,
    cfg: &DmdConfig,
    loop_cfg: &LoopConfig,
) -> Result<(ChainOutput, ReconstructionReport)> {
    if reference.shape() != x.shape() {
        return Err(ModalError::Dimension("reference and data shapes differ".into()));
    }
    if !(loop_cfg.threshold > 0.0 && loop_cfg.threshold < 1.0) || loop_cfg.max_outer == 0 {
        return Err(ModalError::Config(format!("invalid outer-loop settings: {loop_cfg:?}")));
    }
    let mut best = dmd_chain(x, dt, cfg)?;
    let mut rec = reconstruct(&best.result, x.ncols());
    let mut err = crate::linalg::relative_diff(rec.as_ref(), reference, reference);
    let mut history = vec![err];
    while err > loop_cfg.threshold && history.len() < loop_cfg.max_outer {
        let next = dmd_chain(rec.as_ref(), dt, cfg)?;
        let next_rec = reconstruct(&next.result, x.ncols());
        let next_err = crate::linalg::relative_diff(next_rec.as_ref(), reference, reference);
        if next_err > err {
            break;
        }
        let gain = err - next_err;
        history.push(next_err);
        best = next;
        rec = next_rec;
        err = next_err;
        if gain < loop_cfg.stall {
            break;
        }
    }
    let report = ReconstructionReport {
        rel_rms: err,
        iterations: history.len(),
        converged: err <= loop_cfg.threshold,
        history,
    };
    Ok((best, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModalParameters {
    /// Index into the eigenvalue list of the representative.
    pub index: usize,
    /// Index of the conjugate partner, if one was matched.
    pub partner: Option<usize>,
    pub scaled_freq: f64,
    pub damping_ratio: f64,
    pub growth_rate: f64,
    pub is_static: bool,
}

pub const STATIC_FREQ: f64 = 1e-4;

pub fn modal_parameters_of(omega: c64, dt: f64) -> (f64, f64, f64, bool) {
    let scaled_freq = omega.im.abs() * dt / std::f64::consts::PI;
    let mag = omega.norm();
    let damping = if mag == 0.0 { 0.0 } else { -omega.re / mag };
    (scaled_freq, damping, omega.re, scaled_freq < STATIC_FREQ)
}

/// One entry per conjugate pair (the member with `Im ω ≥ 0`) plus every
/// real eigenvalue.
pub fn extract_modal_parameters(result: &DmdResult) -> Vec<ModalParameters> {
    let lam = &result.eigenvalues;
    let mut used = vec![false; lam.len()];
    let mut out = Vec::new();
    for k in 0..lam.len() {
        let w = result.omega[k];
        if w.im < 0.0 {
            continue;
        }
        let target = lam[k].conj();
        let tol = 1e-8 * lam[k].norm().max(1.0);
        let partner = if lam[k].im == 0.0 {
            None
        } else {
            (0..lam.len())
                .filter(|&j| j != k && !used[j] && result.omega[j].im < 0.0 && (lam[j] - target).norm() <= tol)
                .min_by(|&a, &b| (lam[a] - target).norm().total_cmp(&(lam[b] - target).norm()))
        };
        if let Some(j) = partner {
            used[j] = true;
        }
        let (scaled_freq, damping_ratio, growth_rate, is_static) = modal_parameters_of(w, result.dt);
        out.push(ModalParameters {
            index: k,
            partner,
            scaled_freq,
            damping_ratio,
            growth_rate,
            is_static,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn lambda_at_square_aspect() {
        assert!((gd_lambda(1.0) - 4.0 / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn omega_at_square_aspect() {
        assert!((gd_omega(1.0) - 2.858).abs() < 1e-3);
    }

    #[test]
    fn mp_median_tends_to_one_for_thin_matrices() {
        assert!((mp_median(1e-6) - 1.0).abs() < 1e-2);
    }

    #[test]
    fn all_zero_spectrum_is_degenerate() {
        assert!(matches!(
            optimal_hard_threshold(&[0.0, 0.0], 2, 3, None),
            Err(ModalError::Degenerate(_))
        ));
    }

    #[test]
    fn hankel_hand_example() {
        let x = Mat::from_fn(1, 5, |_, j| (j + 1) as f64);
        let h = hankel_embed(x.as_ref(), 3).unwrap();
        let expected = [[1.0, 2.0, 3.0], [2.0, 3.0, 4.0], [3.0, 4.0, 5.0]];
        for (i, row) in expected.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert_eq!(h[(i, j)], *v);
            }
        }
        assert_eq!(hankel_embed(x.as_ref(), 1).unwrap(), x);
        assert!(hankel_embed(x.as_ref(), 5).is_err());
    }

    #[test]
    fn hankel_blocks_follow_shift_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Mat::from_fn(3, 20, |_, _| rng.sample::<f64, _>(StandardNormal));
        let d = 6;
        let h = hankel_embed(x.as_ref(), d).unwrap();
        for bi in 0..d {
            for bj in 0..(20 - d + 1) {
                for r in 0..3 {
                    assert_eq!(h[(bi * 3 + r, bj)], x[(r, bi + bj)]);
                }
            }
        }
    }

    #[test]
    fn scalar_geometric_sequence() {
        let x = Mat::from_fn(1, 30, |_, t| 0.9f64.powi(t as i32));
        let ex = exact_dmd(x.as_ref(), 1.0 - 1e-8).unwrap();
        assert_eq!(ex.eigenvalues.len(), 1);
        assert!((ex.eigenvalues[0] - c64::new(0.9, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn chain_modes_are_unit_norm_and_reconstruct() {
        let x = Mat::from_fn(4, 200, |i, t| {
            let t = t as f64;
            (1.0 + i as f64) * 0.99f64.powf(t) * (0.2 * t + i as f64).cos() + 0.5 * 0.98f64.powf(t) * (0.5 * t).sin()
        });
        let cfg = DmdConfig {
            truncation: TruncationConfig {
                method: TruncationMethod::Fixed,
                rank: Some(4),
                ..TruncationConfig::default()
            },
            delay: 5,
            second_level: SecondLevelMethod::Energy,
            ..DmdConfig::default()
        };
        let out = dmd_chain(x.as_ref(), 1.0, &cfg).unwrap();
        for k in 0..out.result.len() {
            assert!((out.result.modes.col(k).norm_l2() - 1.0).abs() < 1e-12);
        }
        let rec = reconstruct(&out.result, 200);
        assert!((&rec - &x).norm_l2() < 1e-6 * x.norm_l2());
    }

    #[test]
    fn lift_with_identity_basis_is_identity() {
        let phi = Mat::from_fn(3, 2, |i, j| c64::new(i as f64, j as f64 + 1.0));
        let eye = Mat::<f64>::identity(3, 3);
        assert_eq!(lift_modes(phi.as_ref(), eye.as_ref(), 1).unwrap(), phi);
        assert!(lift_modes(phi.as_ref(), eye.as_ref(), 2).is_err());
    }

    #[test]
    fn pinv_with_orthonormal_columns_is_adjoint_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Mat::from_fn(6, 3, |_, _| {
            c64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let q = a.qr().compute_thin_Q();
        let x: Vec<c64> = (0..6).map(|i| c64::new(i as f64, -(i as f64) * 0.5)).collect();
        let b = amplitudes_pinv(q.as_ref(), &x).unwrap();
        for k in 0..3 {
            let mut e = c64::new(0.0, 0.0);
            for i in 0..6 {
                e += q[(i, k)].conj() * x[i];
            }
            assert!((b[k] - e).norm() < 1e-12);
        }
    }

    #[test]
    fn vandermonde_powers() {
        let v = vandermonde(&[c64::new(2.0, 0.0)], 4);
        for (t, e) in [1.0, 2.0, 4.0, 8.0].iter().enumerate() {
            assert_eq!(v[(0, t)], c64::new(*e, 0.0));
        }
        let ones = vandermonde(&[c64::new(0.3, 0.2), c64::new(-1.0, 0.5)], 1);
        assert!(ones.col(0).iter().all(|z| *z == c64::new(1.0, 0.0)));
    }

    #[test]
    fn modal_parameters_of_planted_exponent() {
        let (f, z, g, s) = modal_parameters_of(c64::new(-0.01, 0.2), 1.0);
        assert!((f - 0.2 / std::f64::consts::PI).abs() < 1e-12);
        assert!((z - 0.01 / (0.0001f64 + 0.04).sqrt()).abs() < 1e-12);
        assert_eq!(g, -0.01);
        assert!(!s);
        let (f, z, _, s) = modal_parameters_of(c64::new(0.5f64.ln(), 0.0), 1.0);
        assert_eq!(f, 0.0);
        assert_eq!(z, 1.0);
        assert!(s);
        let (_, z, g, _) = modal_parameters_of(c64::new(0.0, 0.3), 1.0);
        assert_eq!((z, g), (0.0, 0.0));
    }

    #[test]
    fn loop_rejects_bad_settings() {
        let x = Mat::from_fn(2, 10, |i, t| (i + t) as f64);
        let bad = LoopConfig {
            threshold: 1.5,
            ..LoopConfig::default()
        };
        assert!(iterate_until_converged(x.as_ref(), 1.0, &DmdConfig::default(), &bad).is_err());
    }
}
