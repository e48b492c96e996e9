//! Principal component pursuit by the inexact augmented Lagrange multiplier
//! method: `X = L + S` with `L` low rank and `S` sparse.

use faer::Mat;
use faer::MatRef;
use serde::{Deserialize, Serialize};

use crate::error::{ModalError, Result};
use crate::linalg::{frobenius, ThinSvd};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RpcaConfig {
    /// Multiplier on the `1/√max(n,m)` sparsity weight.
    pub lambda: f64,
    /// Initial penalty; `None` uses `1.25/σ₁(X)`.
    pub mu0: Option<f64>,
    pub rho: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for RpcaConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            mu0: None,
            rho: 1.5,
            tol: 1e-7,
            max_iter: 500,
        }
    }
}

impl RpcaConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda > 0.0
            && self.mu0.is_none_or(|m| m > 0.0)
            && self.rho >= 1.0
            && self.tol > 0.0
            && self.max_iter >= 1;
        if ok {
            Ok(())
        } else {
            Err(ModalError::Config(format!("invalid RPCA settings: {self:?}")))
        }
    }

    /// Weight on the ℓ1 term for an `n × m` matrix.
    pub fn lambda0(&self, n: usize, m: usize) -> f64 {
        self.lambda / (n.max(m) as f64).sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct RpcaResult {
    pub low_rank: Mat<f64>,
    pub sparse: Mat<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_residual: f64,
    /// `‖L‖* + λ0‖S‖₁` after each iteration.
    pub objective: Vec<f64>,
}

fn soft(x: f64, tau: f64) -> f64 {
    x.signum() * (x.abs() - tau).max(0.0)
}

/// Entrywise `sign(m)·max(|m| − τ, 0)`.
pub fn soft_threshold(m: MatRef<'_, f64>, tau: f64) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| soft(m[(i, j)], tau))
}

/// Singular value thresholding; also returns the nuclear norm of the result.
pub fn svt_with_norm(m: MatRef<'_, f64>, tau: f64) -> Result<(Mat<f64>, f64)> {
    let svd = ThinSvd::new(m)?;
    let kept: Vec<(usize, f64)> = svd
        .s
        .iter()
        .enumerate()
        .map(|(k, &s)| (k, s - tau))
        .filter(|&(_, s)| s > 0.0)
        .collect();
    let (n, c) = m.shape();
    if kept.is_empty() {
        return Ok((Mat::zeros(n, c), 0.0));
    }
    let r = kept.len();
    // singular values are sorted, so the kept ones are the leading block
    let us = Mat::from_fn(n, r, |i, k| svd.u[(i, k)] * kept[k].1);
    let out = &us * svd.v.subcols(0, r).transpose();
    Ok((out, kept.iter().map(|&(_, s)| s).sum()))
}

pub fn singular_value_threshold(m: MatRef<'_, f64>, tau: f64) -> Result<Mat<f64>> {
    svt_with_norm(m, tau).map(|(out, _)| out)
}

pub fn rpca_ialm(x: MatRef<'_, f64>, cfg: &RpcaConfig) -> Result<RpcaResult> {
    cfg.validate()?;
    let (n, m) = x.shape();
    if n == 0 || m == 0 {
        return Err(ModalError::InvalidInput("RPCA of an empty matrix".into()));
    }
    if (0..m).any(|j| (0..n).any(|i| !x[(i, j)].is_finite())) {
        return Err(ModalError::InvalidInput(
            "RPCA input contains non-finite entries".into(),
        ));
    }
    let norm_x = frobenius(x);
    if norm_x == 0.0 {
        return Ok(RpcaResult {
            low_rank: Mat::zeros(n, m),
            sparse: Mat::zeros(n, m),
            iterations: 1,
            converged: true,
            final_residual: 0.0,
            objective: vec![0.0],
        });
    }

    let lambda0 = cfg.lambda0(n, m);
    let sigma1 = x
        .singular_values()
        .map_err(|e| ModalError::Numerical(format!("{e:?}")))?[0];
    let inf_norm = (0..m)
        .flat_map(|j| (0..n).map(move |i| (i, j)))
        .fold(0.0_f64, |acc, (i, j)| acc.max(x[(i, j)].abs()));
    let dual_scale = sigma1.max(inf_norm / lambda0);
    let mut y = Mat::from_fn(n, m, |i, j| x[(i, j)] / dual_scale);
    let mut mu = cfg.mu0.unwrap_or(1.25 / sigma1);
    let mu_max = mu * 1e7;

    let mut l = Mat::<f64>::zeros(n, m);
    let mut s = Mat::<f64>::zeros(n, m);
    let mut objective = Vec::new();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        iterations += 1;
        let inv_mu = 1.0 / mu;
        let target_l = Mat::from_fn(n, m, |i, j| x[(i, j)] - s[(i, j)] + inv_mu * y[(i, j)]);
        let (new_l, nuclear) = svt_with_norm(target_l.as_ref(), inv_mu)?;
        l = new_l;
        let shrink = lambda0 * inv_mu;
        s = Mat::from_fn(n, m, |i, j| soft(x[(i, j)] - l[(i, j)] + inv_mu * y[(i, j)], shrink));

        let mut res_sq = 0.0;
        let mut l1 = 0.0;
        for j in 0..m {
            for i in 0..n {
                let z = x[(i, j)] - l[(i, j)] - s[(i, j)];
                res_sq += z * z;
                y[(i, j)] += mu * z;
                l1 += s[(i, j)].abs();
            }
        }
        objective.push(nuclear + lambda0 * l1);
        residual = res_sq.sqrt() / norm_x;
        if residual <= cfg.tol {
            break;
        }
        mu = (mu * cfg.rho).min(mu_max);
    }

    Ok(RpcaResult {
        low_rank: l,
        sparse: s,
        iterations,
        converged: residual <= cfg.tol,
        final_residual: residual,
        objective,
    })
}
