use nalgebra::{DMatrix, DVector};

use super::forward::check_inputs;
use super::{count_knots, BasisFunction, MarsModel, MarsOptions};
use crate::error::{Error, Result};
use crate::linalg::{dependent_columns, ols};
use crate::tobit::DesignMatrix;

/// Generalized cross-validation score `(RSS/n) / (1 - C/n)^2`; infinite
/// once the effective parameter count `C` reaches `n`.
pub fn gcv(rss: f64, n: usize, effective_params: f64) -> f64 {
    let n = n as f64;
    let shrink = 1.0 - effective_params / n;
    if shrink <= 0.0 {
        return f64::INFINITY;
    }
    rss / n / (shrink * shrink)
}

fn effective_params(basis: &[&BasisFunction], penalty_d: f64) -> f64 {
    basis.len() as f64 + penalty_d * count_knots(basis.iter().copied()) as f64
}

fn design(columns: &[&[f64]], active: &[usize], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, active.len(), |i, j| columns[active[j]][i])
}

/// Least-squares coefficients and GCV for a fixed basis.
pub(crate) fn refit(
    variable_names: Vec<String>,
    basis: Vec<BasisFunction>,
    columns: &[&[f64]],
    y: &[f64],
    options: &MarsOptions,
) -> Result<MarsModel> {
    let n = y.len();
    let all: Vec<usize> = (0..basis.len()).collect();
    let fit = ols(&design(columns, &all, n), &DVector::from_column_slice(y))?;
    let refs: Vec<&BasisFunction> = basis.iter().collect();
    let gcv = gcv(fit.rss, n, effective_params(&refs, options.penalty_d));
    Ok(MarsModel {
        variable_names,
        coefficients: fit.beta.iter().copied().collect(),
        basis,
        rss: fit.rss,
        gcv,
        max_degree: options.max_degree,
        penalty_d: options.penalty_d,
        forward_rss: Vec::new(),
    })
}

/// Backward elimination. Repeatedly drops the non-intercept term whose
/// removal gives the lowest GCV and returns the subset with the lowest GCV
/// seen along the way (the smaller subset on exact ties).
pub fn backward_prune(model: &MarsModel, x: &DesignMatrix, y: &[f64]) -> Result<MarsModel> {
    check_inputs(x, y)?;
    if x.ncols() != model.n_features() {
        return Err(Error::Shape {
            expected: model.n_features(),
            got: x.ncols(),
        });
    }
    let n = y.len();
    let d = model.penalty_d;
    let owned: Vec<Vec<f64>> = model.basis.iter().map(|b| b.column(x)).collect();
    let columns: Vec<&[f64]> = owned.iter().map(Vec::as_slice).collect();
    let yv = DVector::from_column_slice(y);

    // Terms that duplicate earlier ones cannot be estimated; drop them first.
    let dependent = dependent_columns(&design(&columns, &(0..owned.len()).collect::<Vec<_>>(), n));
    let mut active: Vec<usize> = (0..owned.len()).filter(|j| !dependent.contains(j)).collect();
    let score = |active: &[usize], rss: f64| {
        let refs: Vec<&BasisFunction> = active.iter().map(|&j| &model.basis[j]).collect();
        gcv(rss, n, effective_params(&refs, d))
    };

    let mut fit = ols(&design(&columns, &active, n), &yv)?;
    let mut best = (score(&active, fit.rss), active.clone());
    loop {
        let removable: Vec<usize> = (0..active.len())
            .filter(|&pos| !model.basis[active[pos]].is_intercept())
            .collect();
        if removable.is_empty() || active.len() == 1 {
            break;
        }
        // Scan from the highest index so that exact ties drop the later term.
        let mut choice: Option<(f64, f64, usize)> = None;
        for &pos in removable.iter().rev() {
            let beta = fit.beta[pos];
            let rss = fit.rss + beta * beta / fit.xtx_inv[(pos, pos)];
            let mut rest = active.clone();
            rest.remove(pos);
            let g = score(&rest, rss);
            let better = match choice {
                None => true,
                Some((bg, brss, _)) => g < bg || (g == bg && rss < brss),
            };
            if better {
                choice = Some((g, rss, pos));
            }
        }
        let Some((_, _, pos)) = choice else { break };
        active.remove(pos);
        fit = ols(&design(&columns, &active, n), &yv)?;
        let g = score(&active, fit.rss);
        if g <= best.0 {
            best = (g, active.clone());
        }
    }

    let keep = best.1;
    refit(
        model.variable_names.clone(),
        keep.iter().map(|&j| model.basis[j].clone()).collect(),
        &keep.iter().map(|&j| columns[j]).collect::<Vec<_>>(),
        y,
        &MarsOptions {
            max_degree: model.max_degree,
            penalty_d: d,
            ..MarsOptions::default()
        },
    )
}
