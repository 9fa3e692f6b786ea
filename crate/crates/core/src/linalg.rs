use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance for declaring a column linearly dependent on earlier ones.
pub(crate) const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub(crate) struct OlsFit {
    pub beta: DVector<f64>,
    pub rss: f64,
    /// `(X'X)^{-1}`
    pub xtx_inv: DMatrix<f64>,
}

/// Least squares via Householder QR. Fails on (numerically) rank-deficient `x`.
pub(crate) fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let (n, p) = x.shape();
    if n < p || p == 0 {
        return Err(Error::TooFewObservations { needed: p.max(1), have: n });
    }
    let dependent = dependent_columns(x);
    if !dependent.is_empty() {
        return Err(Error::RankDeficient(
            dependent.iter().map(|j| format!("column {j}")).collect(),
        ));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let qty = qr.q().transpose() * y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Numerical("singular triangular factor".into()))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::Numerical("singular triangular factor".into()))?;
    let xtx_inv = &r_inv * r_inv.transpose();
    let rss = (y - x * &beta).norm_squared();
    Ok(OlsFit {
        beta,
        rss,
        xtx_inv,
    })
}

/// Indices of columns that are (numerically) in the span of the preceding
/// columns, found by modified Gram-Schmidt.
pub(crate) fn dependent_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm0 = col.norm();
        let mut v = col;
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v -= q * c;
            }
        }
        let norm = v.norm();
        if norm0 == 0.0 || norm <= RANK_TOL * norm0.max(1e-300) {
            dependent.push(j);
        } else {
            basis.push(v / norm);
        }
    }
    dependent
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ols_recovers_exact_line() {
        let x = DMatrix::from_fn(5, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let y = DVector::from_fn(5, |i, _| 2.0 + 3.0 * i as f64);
        let fit = ols(&x, &y).unwrap();
        assert!((fit.beta[0] - 2.0).abs() < 1e-12);
        assert!((fit.beta[1] - 3.0).abs() < 1e-12);
        assert!(fit.rss < 1e-20);
        // (X'X)^{-1} for x = 0..4 with intercept: [[0.6, -0.2], [-0.2, 0.1]]
        assert!((fit.xtx_inv[(0, 0)] - 0.6).abs() < 1e-12);
        assert!((fit.xtx_inv[(1, 1)] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn dependent_columns_are_named() {
        let x = DMatrix::from_fn(6, 3, |i, j| match j {
            0 => 1.0,
            1 => i as f64,
            _ => 2.0 * i as f64 + 1.0,
        });
        assert_eq!(dependent_columns(&x), vec![2]);
        assert!(matches!(
            ols(&x, &DVector::zeros(6)),
            Err(Error::RankDeficient(_))
        ));
    }
}
