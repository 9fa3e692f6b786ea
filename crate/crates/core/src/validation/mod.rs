//! Coefficient-stability cross-validation, quarterly in-sample aggregation
//! and downturn-underestimation ranking.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lgd::{observed_lgd, LoanDefaultRecord};
use crate::series::Quarter;
use crate::tobit::{fit_tobit, predict_censored_mean, CensoredMeanForm, DesignMatrix, TobitFit, TobitOptions, INTERCEPT};

/// Flag threshold in full-sample standard errors for k-fold plans.
pub const KFOLD_THRESHOLD_SE: f64 = 1.0;
/// Flag threshold in full-sample standard errors for leave-one-group plans.
pub const LEAVE_ONE_GROUP_THRESHOLD_SE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum FoldScheme {
    KFold { k: usize, seed: u64 },
    LeaveOneGroup { group_key: String },
}

/// Assignment of every row to exactly one held-out fold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldPlan {
    scheme: FoldScheme,
    /// Fold index per row.
    assignment: Vec<usize>,
    labels: Vec<String>,
}

impl FoldPlan {
    /// Seeded shuffle of the row indices, then round-robin into `k` folds.
    pub fn k_fold(n: usize, k: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
        }
        if k > n {
            return Err(Error::Config(format!("k-fold with k = {k} exceeds the {n} rows")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut assignment = vec![0; n];
        for (pos, &row) in order.iter().enumerate() {
            assignment[row] = pos % k;
        }
        Ok(Self {
            scheme: FoldScheme::KFold { k, seed },
            assignment,
            labels: (1..=k).map(|i| i.to_string()).collect(),
        })
    }

    /// One fold per distinct group value, ordered by value.
    pub fn leave_one_group<S: AsRef<str>>(group_key: &str, groups: &[S]) -> Result<Self> {
        let mut labels: Vec<String> = groups.iter().map(|g| g.as_ref().to_string()).collect();
        labels.sort();
        labels.dedup();
        if labels.len() < 2 {
            return Err(Error::Config(format!(
                "leave-one-group on `{group_key}` needs at least 2 groups, found {}",
                labels.len()
            )));
        }
        let assignment = groups
            .iter()
            .map(|g| labels.binary_search_by(|l| l.as_str().cmp(g.as_ref())).expect("label present"))
            .collect();
        Ok(Self {
            scheme: FoldScheme::LeaveOneGroup {
                group_key: group_key.to_string(),
            },
            assignment,
            labels,
        })
    }

    /// Leave-one-year-out by default year.
    pub fn leave_one_year(records: &[LoanDefaultRecord]) -> Result<Self> {
        let years: Vec<String> = records.iter().map(|r| r.default_month.year().to_string()).collect();
        Self::leave_one_group("default_year", &years)
    }

    pub fn scheme(&self) -> &FoldScheme {
        &self.scheme
    }

    pub fn n_rows(&self) -> usize {
        self.assignment.len()
    }

    pub fn n_folds(&self) -> usize {
        self.labels.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn label(&self, fold: usize) -> &str {
        &self.labels[fold]
    }

    pub fn label_of_row(&self, row: usize) -> &str {
        &self.labels[self.assignment[row]]
    }

    pub fn held_out(&self, fold: usize) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn training(&self, fold: usize) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.assignment[i] != fold).collect()
    }

    pub fn default_threshold_se(&self) -> f64 {
        match self.scheme {
            FoldScheme::KFold { .. } => KFOLD_THRESHOLD_SE,
            FoldScheme::LeaveOneGroup { .. } => LEAVE_ONE_GROUP_THRESHOLD_SE,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldResult {
    pub label: String,
    pub held_out: usize,
    pub training: usize,
    /// `None` when the training split could not be fitted.
    pub fit: Option<TobitFit>,
    pub failure: Option<String>,
}

impl FoldResult {
    pub fn is_degenerate(&self) -> bool {
        self.fit.is_none()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoefficientFlags {
    pub coefficient: String,
    /// Labels of the folds whose refit strays beyond the threshold.
    pub folds: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub scheme: FoldScheme,
    pub threshold_se: f64,
    pub full_sample_fit: TobitFit,
    pub per_fold: Vec<FoldResult>,
    pub flags: Vec<CoefficientFlags>,
}

impl StabilityReport {
    pub fn n_flags(&self) -> usize {
        self.flags.iter().map(|f| f.folds.len()).sum()
    }

    pub fn flagged_folds(&self, coefficient: &str) -> Option<&[String]> {
        self.flags
            .iter()
            .find(|f| f.coefficient == coefficient)
            .map(|f| f.folds.as_slice())
    }

    pub fn degenerate_folds(&self) -> Vec<&str> {
        self.per_fold
            .iter()
            .filter(|f| f.is_degenerate())
            .map(|f| f.label.as_str())
            .collect()
    }

    /// One row per fold per coefficient, preceded by the full-sample rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "fold",
            "held_out",
            "training",
            "coefficient",
            "estimate",
            "full_estimate",
            "full_std_error",
            "deviation_se",
            "flagged",
            "status",
        ])
        .map_err(Error::output)?;
        let full = &self.full_sample_fit;
        for (j, name) in full.names.iter().enumerate() {
            w.write_record([
                "full",
                "0",
                &full.n_obs.to_string(),
                name,
                &format!("{:.6}", full.beta[j]),
                &format!("{:.6}", full.beta[j]),
                &format!("{:.6}", full.std_errors[j]),
                "0.000000",
                "false",
                "ok",
            ])
            .map_err(Error::output)?;
        }
        for fold in &self.per_fold {
            for (j, name) in full.names.iter().enumerate() {
                let (estimate, deviation, flagged, status) = match &fold.fit {
                    Some(fit) => {
                        let dev = (fit.beta[j] - full.beta[j]) / full.std_errors[j];
                        let flagged = self
                            .flagged_folds(name)
                            .is_some_and(|f| f.contains(&fold.label));
                        (format!("{:.6}", fit.beta[j]), format!("{dev:.6}"), flagged.to_string(), "ok".to_string())
                    }
                    None => (String::new(), String::new(), "false".into(), "degenerate".into()),
                };
                w.write_record([
                    fold.label.as_str(),
                    &fold.held_out.to_string(),
                    &fold.training.to_string(),
                    name,
                    &estimate,
                    &format!("{:.6}", full.beta[j]),
                    &format!("{:.6}", full.std_errors[j]),
                    &deviation,
                    &flagged,
                    &status,
                ])
                .map_err(Error::output)?;
            }
        }
        w.flush().map_err(Error::output)
    }
}

/// Refits on the complement of every fold and flags coefficients that move
/// more than `threshold_se` full-sample standard errors. Folds whose
/// training split cannot be fitted are reported rather than aborting.
pub fn run_stability_cv(
    x: &DesignMatrix,
    y: &[f64],
    plan: &FoldPlan,
    threshold_se: f64,
    options: TobitOptions,
) -> Result<StabilityReport> {
    if plan.n_rows() != x.nrows() || y.len() != x.nrows() {
        return Err(Error::Shape {
            expected: x.nrows(),
            got: if plan.n_rows() != x.nrows() { plan.n_rows() } else { y.len() },
        });
    }
    if !(threshold_se.is_finite() && threshold_se > 0.0) {
        return Err(Error::Config(format!("threshold_se must be positive, got {threshold_se}")));
    }
    let full = fit_tobit(x, y, options)?;
    let per_fold: Vec<FoldResult> = (0..plan.n_folds())
        .into_par_iter()
        .map(|fold| {
            let train = plan.training(fold);
            let held_out = plan.n_rows() - train.len();
            let fit = x.select_rows(&train).and_then(|xt| {
                let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
                fit_tobit(&xt, &yt, options)
            });
            let (fit, failure) = match fit {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            };
            FoldResult {
                label: plan.label(fold).to_string(),
                held_out,
                training: train.len(),
                fit,
                failure,
            }
        })
        .collect();
    let flags = full
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| CoefficientFlags {
            coefficient: name.clone(),
            folds: per_fold
                .iter()
                .filter_map(|f| {
                    let fit = f.fit.as_ref()?;
                    ((fit.beta[j] - full.beta[j]).abs() > threshold_se * full.std_errors[j]).then(|| f.label.clone())
                })
                .collect(),
        })
        .collect();
    Ok(StabilityReport {
        scheme: plan.scheme().clone(),
        threshold_se,
        full_sample_fit: full,
        per_fold,
        flags,
    })
}

/// Regressor row for `record` in the column order of `fit`.
pub fn record_row(record: &LoanDefaultRecord, names: &[String]) -> Result<Vec<f64>> {
    names
        .iter()
        .map(|name| {
            if name == INTERCEPT {
                Ok(1.0)
            } else {
                record
                    .covariate(name)
                    .ok_or_else(|| Error::Config(format!("loan {} has no covariate `{name}`", record.loan_id)))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuarterRow {
    pub quarter: Quarter,
    pub n: usize,
    pub actual: f64,
    pub predicted: f64,
}

/// Simple averages of observed and predicted censored LGD by default quarter.
pub fn quarterly_mean_fit(
    records: &[LoanDefaultRecord],
    fit: &TobitFit,
    form: CensoredMeanForm,
) -> Result<Vec<QuarterRow>> {
    let actual = observed_lgd(records)?;
    let mut acc: BTreeMap<Quarter, (usize, f64, f64)> = BTreeMap::new();
    for (record, a) in records.iter().zip(actual) {
        let p = predict_censored_mean(fit, &record_row(record, &fit.names)?, form)?;
        let e = acc.entry(record.default_month.quarter()).or_default();
        e.0 += 1;
        e.1 += a;
        e.2 += p;
    }
    Ok(acc
        .into_iter()
        .map(|(quarter, (n, a, p))| QuarterRow {
            quarter,
            n,
            actual: a / n as f64,
            predicted: p / n as f64,
        })
        .collect())
}

pub fn write_quarterly_csv<W: Write>(writer: W, rows: &[QuarterRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["quarter", "n", "actual_mean_lgd", "predicted_mean_lgd"])
        .map_err(Error::output)?;
    for r in rows {
        w.write_record([
            r.quarter.to_string(),
            r.n.to_string(),
            format!("{:.6}", r.actual),
            format!("{:.6}", r.predicted),
        ])
        .map_err(Error::output)?;
    }
    w.flush().map_err(Error::output)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DownturnRank {
    pub model: String,
    pub actual: f64,
    pub predicted: f64,
    /// `actual - predicted`; lower means the downturn is better captured.
    pub underestimation: f64,
}

/// Orders candidate fits by their underestimation of mean LGD in `target`,
/// lowest first; ties keep name order.
pub fn downturn_underestimation_rank(
    candidates: &[(String, TobitFit)],
    records: &[LoanDefaultRecord],
    target: Quarter,
    form: CensoredMeanForm,
) -> Result<Vec<DownturnRank>> {
    let in_quarter: Vec<LoanDefaultRecord> = records
        .iter()
        .filter(|r| r.default_month.quarter() == target)
        .cloned()
        .collect();
    if in_quarter.is_empty() {
        return Err(Error::MissingQuarter(target.to_string()));
    }
    let mut ranks = candidates
        .iter()
        .map(|(name, fit)| {
            let rows = quarterly_mean_fit(&in_quarter, fit, form)?;
            let row = &rows[0];
            Ok(DownturnRank {
                model: name.clone(),
                actual: row.actual,
                predicted: row.predicted,
                underestimation: row.actual - row.predicted,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranks.sort_by(|a, b| {
        a.underestimation
            .total_cmp(&b.underestimation)
            .then_with(|| a.model.cmp(&b.model))
    });
    Ok(ranks)
}
