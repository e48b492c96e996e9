//! Optimal and sparsity-promoting DMD amplitudes.
//!
//! The amplitude objective is `J(b) = ‖X − Φ diag(b) V‖²_F`, written in the
//! quadratic form `b*Pb − q*b − b*q + s`. The ℓ1-penalized version is solved
//! by ADMM for a log-spaced grid of penalties, each solution is polished on
//! its support, and the operating point is picked where the normalized
//! cardinality and loss curves cross.

use faer::linalg::solvers::Solve;
use faer::{c64, Mat, MatRef, Side};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dmd::vandermonde;
use crate::error::{ModalError, Result};
use crate::linalg::{column_vec, hermitian_solve};

pub use crate::dmd::vandermonde as build_vandermonde;

const RIDGE_SCALE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct AmplitudeProblem {
    pub p: Mat<c64>,
    pub q: Vec<c64>,
    pub s: f64,
    pub eigenvalues: Vec<c64>,
    pub n_time: usize,
}

impl AmplitudeProblem {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// `J(b) = b*Pb − 2 Re(q*b) + s`.
    pub fn objective(&self, b: &[c64]) -> f64 {
        let r = self.len();
        let mut quad = 0.0;
        for i in 0..r {
            let mut pb = c64::new(0.0, 0.0);
            for j in 0..r {
                pb += self.p[(i, j)] * b[j];
            }
            quad += (b[i].conj() * pb).re;
        }
        let lin: f64 = self.q.iter().zip(b).map(|(q, b)| (q.conj() * b).re).sum();
        quad - 2.0 * lin + self.s
    }

    /// Reconstruction loss in percent of the data norm.
    pub fn loss_percent(&self, b: &[c64]) -> f64 {
        if self.s == 0.0 {
            return 0.0;
        }
        100.0 * (self.objective(b).max(0.0) / self.s).sqrt()
    }

    /// Index of the conjugate partner of each eigenvalue, if any.
    pub fn conjugate_partners(&self) -> Vec<Option<usize>> {
        let lam = &self.eigenvalues;
        (0..lam.len())
            .map(|k| {
                if lam[k].im == 0.0 {
                    return None;
                }
                let target = lam[k].conj();
                let tol = 1e-8 * lam[k].norm().max(1.0);
                (0..lam.len())
                    .filter(|&j| j != k && (lam[j] - target).norm() <= tol)
                    .min_by(|&a, &b| (lam[a] - target).norm().total_cmp(&(lam[b] - target).norm()))
            })
            .collect()
    }
}

/// Builds `P = (Φ*Φ) ∘ conj(VV*)`, `q = conj(diag(V X* Φ))`, `s = ‖X‖²_F`
/// for the data `x` with `n_time` columns.
pub fn build_amplitude_problem(
    x: MatRef<'_, f64>,
    modes: MatRef<'_, c64>,
    eigenvalues: &[c64],
    n_time: usize,
) -> Result<AmplitudeProblem> {
    let r = eigenvalues.len();
    if modes.ncols() != r || modes.nrows() != x.nrows() || x.ncols() != n_time {
        return Err(ModalError::Dimension(format!(
            "data {}x{}, modes {}x{}, {r} eigenvalues, {n_time} time steps",
            x.nrows(),
            x.ncols(),
            modes.nrows(),
            modes.ncols()
        )));
    }
    let v = vandermonde(eigenvalues, n_time);
    let gram = modes.adjoint() * modes;
    let vv = &v * v.adjoint();
    let p = Mat::from_fn(r, r, |i, j| gram[(i, j)] * vv[(i, j)].conj());

    // (X* Φ)[t, k] with X real
    let xc = Mat::from_fn(x.nrows(), x.ncols(), |i, j| c64::new(x[(i, j)], 0.0));
    let g = xc.transpose() * modes;
    let q = (0..r)
        .map(|k| {
            let mut acc = c64::new(0.0, 0.0);
            for t in 0..n_time {
                acc += v[(k, t)] * g[(t, k)];
            }
            acc.conj()
        })
        .collect();
    let s = x.norm_l2().powi(2);
    Ok(AmplitudeProblem {
        p,
        q,
        s,
        eigenvalues: eigenvalues.to_vec(),
        n_time,
    })
}

/// `P⁻¹q`; the flag reports whether the ridge fallback was needed.
pub fn optimal_amplitudes(problem: &AmplitudeProblem) -> Result<(Vec<c64>, bool)> {
    hermitian_solve(problem.p.as_ref(), &problem.q, RIDGE_SCALE)
}

/// Minimizer of `J` with every amplitude outside `support` fixed at zero.
pub fn polish(problem: &AmplitudeProblem, support: &[usize]) -> Result<Vec<c64>> {
    let r = problem.len();
    let mut out = vec![c64::new(0.0, 0.0); r];
    if support.is_empty() {
        return Ok(out);
    }
    let k = support.len();
    let sub = Mat::from_fn(k, k, |i, j| problem.p[(support[i], support[j])]);
    let rhs: Vec<c64> = support.iter().map(|&i| problem.q[i]).collect();
    let (b, _) = hermitian_solve(sub.as_ref(), &rhs, RIDGE_SCALE)?;
    for (&i, v) in support.iter().zip(b) {
        out[i] = v;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    pub rho: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            eps_abs: 1e-6,
            eps_rel: 1e-4,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdmmOutcome {
    /// ADMM iterate before polishing.
    pub raw: Vec<c64>,
    pub polished: Vec<c64>,
    pub support: Vec<usize>,
    pub loss_percent: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn complex_soft(v: c64, tau: f64) -> c64 {
    let mag = v.norm();
    if mag <= tau {
        c64::new(0.0, 0.0)
    } else {
        v * ((mag - tau) / mag)
    }
}

fn norm2(v: &[c64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Reusable ADMM state: the problem rescaled so that `trace(P)/r = 1`, and
/// the Cholesky factor of `P + (ρ/2) I`.
pub struct AdmmSolver<'a> {
    problem: &'a AmplitudeProblem,
    scale: f64,
    factor: faer::linalg::solvers::Llt<c64>,
    q: Vec<c64>,
    cfg: AdmmConfig,
}

impl<'a> AdmmSolver<'a> {
    pub fn new(problem: &'a AmplitudeProblem, cfg: AdmmConfig) -> Result<Self> {
        let r = problem.len();
        if r == 0 {
            return Err(ModalError::Degenerate("amplitude problem has no modes".into()));
        }
        if !(cfg.rho > 0.0) || cfg.max_iter == 0 {
            return Err(ModalError::Config(format!("invalid ADMM settings: {cfg:?}")));
        }
        let trace: f64 = (0..r).map(|i| problem.p[(i, i)].re).sum();
        let scale = if trace > 0.0 { trace / r as f64 } else { 1.0 };
        let shifted = Mat::from_fn(r, r, |i, j| {
            let v = problem.p[(i, j)] / scale;
            if i == j {
                v + c64::new(cfg.rho / 2.0, 0.0)
            } else {
                v
            }
        });
        let factor = shifted
            .llt(Side::Lower)
            .map_err(|e| ModalError::Numerical(format!("ADMM system factorization failed: {e:?}")))?;
        let q = problem.q.iter().map(|v| v / scale).collect();
        Ok(Self {
            problem,
            scale,
            factor,
            q,
            cfg,
        })
    }

    /// Solves `min J(b) + γ Σ|b_i|`, then polishes on the support found.
    pub fn solve(&self, gamma: f64) -> Result<AdmmOutcome> {
        if !(gamma >= 0.0) {
            return Err(ModalError::InvalidInput(format!(
                "gamma must be non-negative, got {gamma}"
            )));
        }
        let r = self.problem.len();
        let rho = self.cfg.rho;
        let kappa = gamma / self.scale / rho;
        let sqrt_r = (r as f64).sqrt();
        let zero = c64::new(0.0, 0.0);
        let mut z = vec![zero; r];
        let mut y = vec![zero; r];
        let mut x = vec![zero; r];
        let mut converged = false;
        let mut iterations = 0;
        let mut rhs = Mat::<c64>::zeros(r, 1);
        while iterations < self.cfg.max_iter {
            iterations += 1;
            for i in 0..r {
                rhs[(i, 0)] = self.q[i] + (z[i] - y[i] / rho) * (rho / 2.0);
            }
            let sol = self.factor.solve(&rhs);
            for i in 0..r {
                x[i] = sol[(i, 0)];
            }
            let z_old = std::mem::replace(&mut z, (0..r).map(|i| complex_soft(x[i] + y[i] / rho, kappa)).collect());
            let mut primal = 0.0;
            let mut dual = 0.0;
            for i in 0..r {
                let d = x[i] - z[i];
                y[i] += d * rho;
                primal += d.norm_sqr();
                dual += (z[i] - z_old[i]).norm_sqr();
            }
            let primal = primal.sqrt();
            let dual = rho * dual.sqrt();
            let eps_prim = sqrt_r * self.cfg.eps_abs + self.cfg.eps_rel * norm2(&x).max(norm2(&z));
            let eps_dual = sqrt_r * self.cfg.eps_abs + self.cfg.eps_rel * norm2(&y);
            if primal < eps_prim && dual < eps_dual {
                converged = true;
                break;
            }
        }
        let support: Vec<usize> = (0..r).filter(|&i| z[i] != zero).collect();
        let polished = polish(self.problem, &support)?;
        Ok(AdmmOutcome {
            loss_percent: self.problem.loss_percent(&polished),
            raw: z,
            polished,
            support,
            iterations,
            converged,
        })
    }

    /// Cardinality of the ADMM support at `gamma`.
    pub fn cardinality(&self, gamma: f64) -> Result<usize> {
        Ok(self.solve(gamma)?.support.len())
    }
}

pub fn admm_sparsify(problem: &AmplitudeProblem, gamma: f64, cfg: &AdmmConfig) -> Result<AdmmOutcome> {
    AdmmSolver::new(problem, *cfg)?.solve(gamma)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparsitySweep {
    pub gammas: Vec<f64>,
    #[serde(skip)]
    pub amplitudes: Vec<Vec<c64>>,
    pub cardinality: Vec<usize>,
    pub performance_loss: Vec<f64>,
    pub converged: Vec<bool>,
    pub selected_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n_gammas: usize,
    /// Explicit `(γ_min, γ_max)`; calibrated when absent.
    pub span: Option<(f64, f64)>,
    pub max_probes: usize,
    pub admm: AdmmConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_gammas: 200,
            span: None,
            max_probes: 40,
            admm: AdmmConfig::default(),
        }
    }
}

const REFINE_STEPS: usize = 30;

/// Finds `γ_max` with at most two active amplitudes and `γ_min` with all of
/// them active by repeated halving from `2‖q‖∞`, where every amplitude is
/// already zero. When halving jumps past the two-mode solution, `γ_max` is
/// then refined by log-bisection towards it.
pub fn calibrate_span(solver: &AdmmSolver<'_>, max_probes: usize) -> Result<(f64, f64)> {
    let problem = solver.problem;
    let r = problem.len();
    let q_inf = problem.q.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if q_inf == 0.0 {
        return Err(ModalError::Degenerate("data are orthogonal to every mode".into()));
    }
    let mut probes = 0;
    let mut gamma = 2.0 * q_inf;
    let mut hi = (gamma, 0usize);
    let mut lo = None;
    let mut sparse_side = true;
    while probes < max_probes {
        let next = gamma / 2.0;
        probes += 1;
        let card = solver.cardinality(next)?;
        if card == r {
            lo = Some((next, card));
            break;
        }
        if card > 2 {
            sparse_side = false;
        } else if sparse_side {
            hi = (next, card);
        }
        gamma = next;
    }
    if lo.is_some() && hi.1 < 2 {
        let (mut upper, mut lower) = (hi.0, hi.0 / 2.0);
        for _ in 0..REFINE_STEPS {
            let mid = (upper * lower).sqrt();
            let card = solver.cardinality(mid)?;
            if card <= 2 {
                if card >= hi.1 {
                    hi = (mid, card);
                }
                upper = mid;
                if card == 2 {
                    break;
                }
            } else {
                lower = mid;
            }
        }
    }
    match lo {
        Some((g_lo, _)) if g_lo < hi.0 => Ok((g_lo, hi.0)),
        _ => Err(ModalError::Calibration {
            probes,
            gamma_min: gamma,
            card_min: solver.cardinality(gamma).unwrap_or(0),
            gamma_max: hi.0,
            card_max: hi.1,
        }),
    }
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

pub fn gamma_sweep(problem: &AmplitudeProblem, cfg: &SweepConfig) -> Result<SparsitySweep> {
    if cfg.n_gammas < 2 {
        return Err(ModalError::Config("a sweep needs at least two gamma values".into()));
    }
    let solver = AdmmSolver::new(problem, cfg.admm)?;
    let (lo, hi) = match cfg.span {
        Some(span) => span,
        None => calibrate_span(&solver, cfg.max_probes)?,
    };
    if !(lo > 0.0 && hi > lo) {
        return Err(ModalError::Config(format!("invalid gamma span ({lo}, {hi})")));
    }
    let gammas = log_grid(lo, hi, cfg.n_gammas);
    let outcomes: Vec<AdmmOutcome> = gammas.par_iter().map(|&g| solver.solve(g)).collect::<Result<_>>()?;
    let mut sweep = SparsitySweep {
        cardinality: outcomes.iter().map(|o| o.support.len()).collect(),
        performance_loss: outcomes.iter().map(|o| o.loss_percent).collect(),
        converged: outcomes.iter().map(|o| o.converged).collect(),
        amplitudes: outcomes.into_iter().map(|o| o.polished).collect(),
        gammas,
        selected_index: 0,
    };
    sweep.selected_index = crossing_index(&sweep.cardinality, &sweep.performance_loss);
    Ok(sweep)
}

/// Scales a non-negative curve by its largest value, so both curves share a
/// zero baseline.
fn normalize(values: &[f64]) -> Vec<f64> {
    let hi = values.iter().copied().fold(0.0, f64::max);
    if !(hi > 0.0) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| v / hi).collect()
}

/// Index minimizing `|card_norm − loss_norm|`, preferring the larger γ
/// (later index) on ties.
pub fn crossing_index(cardinality: &[usize], loss: &[f64]) -> usize {
    let card: Vec<f64> = cardinality.iter().map(|&c| c as f64).collect();
    let cn = normalize(&card);
    let ln = normalize(loss);
    let mut best = 0;
    let mut best_gap = f64::INFINITY;
    for i in 0..cn.len() {
        let gap = (cn[i] - ln[i]).abs();
        if gap <= best_gap + 1e-12 {
            best = i;
            best_gap = best_gap.min(gap);
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct SelectedModes {
    pub indices: Vec<usize>,
    /// Polished amplitudes, one per entry of `indices`.
    pub amplitudes: Vec<c64>,
    pub gamma: f64,
    pub loss: f64,
}

/// Adds the conjugate partner of every selected mode.
pub fn symmetrize_support(problem: &AmplitudeProblem, support: &[usize]) -> Vec<usize> {
    let partners = problem.conjugate_partners();
    let mut out: Vec<usize> = support.to_vec();
    for &k in support {
        if let Some(j) = partners[k] {
            out.push(j);
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

pub fn select_optimal_gamma(problem: &AmplitudeProblem, sweep: &SparsitySweep) -> Result<SelectedModes> {
    if sweep.gammas.is_empty() {
        return Err(ModalError::InvalidInput("empty sparsity sweep".into()));
    }
    let idx = sweep.selected_index.min(sweep.gammas.len() - 1);
    select_at(problem, sweep.gammas[idx], &sweep.amplitudes[idx])
}

/// Symmetrizes and polishes the support of `amplitudes`.
pub fn select_at(problem: &AmplitudeProblem, gamma: f64, amplitudes: &[c64]) -> Result<SelectedModes> {
    let zero = c64::new(0.0, 0.0);
    let support: Vec<usize> = (0..amplitudes.len()).filter(|&i| amplitudes[i] != zero).collect();
    let support = symmetrize_support(problem, &support);
    let full = polish(problem, &support)?;
    Ok(SelectedModes {
        amplitudes: support.iter().map(|&i| full[i]).collect(),
        loss: problem.loss_percent(&full),
        indices: support,
        gamma,
    })
}

/// Direct evaluation of `‖X − Φ diag(b) V‖²_F`, used to cross-check the
/// quadratic form.
pub fn direct_residual(x: MatRef<'_, f64>, modes: MatRef<'_, c64>, eigenvalues: &[c64], b: &[c64]) -> f64 {
    let v = vandermonde(eigenvalues, x.ncols());
    let weighted = Mat::from_fn(modes.nrows(), modes.ncols(), |i, j| modes[(i, j)] * b[j]);
    let model = weighted * v;
    let mut acc = 0.0;
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            acc += (c64::new(x[(i, j)], 0.0) - model[(i, j)]).norm_sqr();
        }
    }
    acc
}

pub fn gradient_residual(problem: &AmplitudeProblem, b: &[c64]) -> f64 {
    let pb = &problem.p * column_vec(b);
    let num: f64 = (0..b.len())
        .map(|i| (pb[(i, 0)] - problem.q[i]).norm_sqr())
        .sum::<f64>()
        .sqrt();
    num / norm2(&problem.q).max(f64::MIN_POSITIVE)
}
