//! Thin helpers over `faer` shared by the numerical modules.

use faer::linalg::solvers::Solve;
use faer::{c64, Mat, MatRef, Side};

use crate::error::{ModalError, Result};

/// Real thin SVD with singular values as a plain descending vector.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: Mat<f64>,
    pub s: Vec<f64>,
    pub v: Mat<f64>,
}

impl ThinSvd {
    pub fn new(m: MatRef<'_, f64>) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(ModalError::Degenerate("SVD of an empty matrix".into()));
        }
        let svd = m
            .thin_svd()
            .map_err(|e| ModalError::Numerical(format!("SVD did not converge: {e:?}")))?;
        let s = svd.S().column_vector().iter().copied().collect();
        Ok(Self {
            u: svd.U().to_owned(),
            s,
            v: svd.V().to_owned(),
        })
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// Smallest rank whose cumulative energy (sum of squared singular
    /// values) reaches `fraction` of the total.
    pub fn energy_rank(&self, fraction: f64) -> usize {
        energy_rank(&self.s, fraction)
    }
}

pub fn energy_rank(s: &[f64], fraction: f64) -> usize {
    let total: f64 = s.iter().map(|x| x * x).sum();
    if total == 0.0 {
        return 0;
    }
    let target = fraction * total;
    let mut acc = 0.0;
    for (i, x) in s.iter().enumerate() {
        acc += x * x;
        if acc >= target * (1.0 - 1e-15) {
            return i + 1;
        }
    }
    s.len()
}

pub fn energy_fraction(s: &[f64], rank: usize) -> f64 {
    let total: f64 = s.iter().map(|x| x * x).sum();
    if total == 0.0 {
        return 1.0;
    }
    s.iter().take(rank).map(|x| x * x).sum::<f64>() / total
}

pub fn frobenius(m: MatRef<'_, f64>) -> f64 {
    m.norm_l2()
}

pub fn frobenius_c(m: MatRef<'_, c64>) -> f64 {
    m.norm_l2()
}

/// `‖a − b‖_F / ‖reference‖_F`, or the absolute difference norm when the
/// reference is zero.
pub fn relative_diff(a: MatRef<'_, f64>, b: MatRef<'_, f64>, reference: MatRef<'_, f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let d = a[(i, j)] - b[(i, j)];
            acc += d * d;
        }
    }
    let den = frobenius(reference);
    if den == 0.0 {
        acc.sqrt()
    } else {
        acc.sqrt() / den
    }
}

pub fn to_complex(m: MatRef<'_, f64>) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| c64::new(m[(i, j)], 0.0))
}

pub fn real_part(m: MatRef<'_, c64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].re)
}

pub fn column_vec(values: &[c64]) -> Mat<c64> {
    Mat::from_fn(values.len(), 1, |i, _| values[i])
}

/// Minimum-norm least-squares solution of `a x = b` through the SVD,
/// discarding singular values below `max(n, m)·eps·σ₁`.
pub fn complex_lstsq_min_norm(a: MatRef<'_, c64>, b: &[c64]) -> Result<Vec<c64>> {
    if a.nrows() != b.len() {
        return Err(ModalError::Dimension(format!(
            "system has {} rows, right-hand side has {}",
            a.nrows(),
            b.len()
        )));
    }
    if a.ncols() == 0 {
        return Ok(Vec::new());
    }
    if a.nrows() == 0 {
        return Ok(vec![c64::new(0.0, 0.0); a.ncols()]);
    }
    let svd = a
        .thin_svd()
        .map_err(|e| ModalError::Numerical(format!("complex SVD did not converge: {e:?}")))?;
    let u = svd.U();
    let v = svd.V();
    let s: Vec<f64> = svd.S().column_vector().iter().map(|x| x.re).collect();
    let cutoff = s.first().copied().unwrap_or(0.0) * f64::EPSILON * a.nrows().max(a.ncols()) as f64;
    let mut x = vec![c64::new(0.0, 0.0); a.ncols()];
    for (k, &sk) in s.iter().enumerate() {
        if sk <= cutoff || sk == 0.0 {
            continue;
        }
        let mut coef = c64::new(0.0, 0.0);
        for i in 0..a.nrows() {
            coef += u[(i, k)].conj() * b[i];
        }
        coef /= sk;
        for (j, xj) in x.iter_mut().enumerate() {
            *xj += v[(j, k)] * coef;
        }
    }
    Ok(x)
}

/// Solves a Hermitian positive (semi)definite system. Falls back to a ridge
/// of `ridge_scale·trace(P)/r` when the Cholesky factorization fails.
/// Returns the solution and whether the ridge was needed.
pub fn hermitian_solve(p: MatRef<'_, c64>, q: &[c64], ridge_scale: f64) -> Result<(Vec<c64>, bool)> {
    let n = p.nrows();
    if p.ncols() != n || q.len() != n {
        return Err(ModalError::Dimension(format!(
            "hermitian solve: P is {}x{}, q has {}",
            p.nrows(),
            p.ncols(),
            q.len()
        )));
    }
    if n == 0 {
        return Ok((Vec::new(), false));
    }
    let rhs = column_vec(q);
    if let Ok(llt) = p.llt(Side::Lower) {
        let x = llt.solve(&rhs);
        if x.col(0).iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Ok((x.col(0).iter().copied().collect(), false));
        }
    }
    let trace: f64 = (0..n).map(|i| p[(i, i)].re).sum();
    let ridge = (ridge_scale * trace / n as f64).max(f64::MIN_POSITIVE);
    let mut reg = p.to_owned();
    for i in 0..n {
        reg[(i, i)] += c64::new(ridge, 0.0);
    }
    let x = match reg.llt(Side::Lower) {
        Ok(llt) => llt.solve(&rhs),
        Err(_) => reg.partial_piv_lu().solve(&rhs),
    };
    let out: Vec<c64> = x.col(0).iter().copied().collect();
    if out.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(ModalError::Numerical("singular amplitude system".into()));
    }
    Ok((out, true))
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
