//! Loan-level workout LGD: the accounting identity, censoring at zero, the
//! value-change versus inflation study and a synthetic portfolio generator.

mod generator;
mod io;

use indexmap::IndexMap;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::screen::{pearson, CorrelationReport};
use crate::series::{MonthKey, MonthWindow, MonthlySeries, TransformSpec};

pub use self::generator::{
    generate_synthetic_portfolio, synthetic_hpi_series, DriverSpec, GeneratorConfig, LoanCovariateSpec, MevPanel,
    StressSpec, ValueChangeSpec, DEFAULT_YEAR_WEIGHTS,
};
pub use self::io::{parse_loan_csv, read_loan_csv, write_loan_csv};

/// Longest workout horizon accepted between default and sale.
pub const MAX_RESOLUTION_MONTHS: i64 = 120;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoanDefaultRecord {
    pub loan_id: String,
    pub default_month: MonthKey,
    pub sale_month: MonthKey,
    pub balance_at_default: f64,
    pub balance_at_sale: f64,
    pub value_at_default: f64,
    pub value_at_sale: f64,
    pub workout_cost: f64,
    pub appraisal_month: Option<MonthKey>,
    pub covariates: IndexMap<String, f64>,
}

impl LoanDefaultRecord {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Domain(format!("loan {}: {what}", self.loan_id)));
        let r = self.resolution_months();
        if !(0..=MAX_RESOLUTION_MONTHS).contains(&r) {
            return bad(&format!("resolution time {r} months outside 0..={MAX_RESOLUTION_MONTHS}"));
        }
        if !(self.balance_at_default > 0.0) || !(self.balance_at_sale > 0.0) {
            return bad("balances must be positive");
        }
        if !(self.value_at_default > 0.0) || !(self.value_at_sale >= 0.0) {
            return bad("value at default must be positive and sale value non-negative");
        }
        if !(self.workout_cost >= 0.0) {
            return bad("workout cost must be non-negative");
        }
        let ltv = self.ltv_at_default();
        if !(ltv.is_finite() && ltv > 0.0) {
            return bad("LTV at default is not finite and positive");
        }
        if let Some((name, _)) = self.covariates.iter().find(|(_, v)| !v.is_finite()) {
            return bad(&format!("covariate `{name}` is not finite"));
        }
        Ok(())
    }

    pub fn resolution_months(&self) -> i64 {
        self.default_month.months_until(self.sale_month)
    }

    pub fn ltv_at_default(&self) -> f64 {
        self.balance_at_default / self.value_at_default
    }

    /// `(V_s - V_d) / V_d`
    pub fn value_change_ratio(&self) -> f64 {
        (self.value_at_sale - self.value_at_default) / self.value_at_default
    }

    /// `W / B_d`
    pub fn workout_ratio(&self) -> f64 {
        self.workout_cost / self.balance_at_default
    }

    /// Whether the decomposition's `B_s = B_d` assumption holds.
    pub fn balances_match(&self) -> bool {
        self.balance_at_sale == self.balance_at_default
    }

    pub fn covariate(&self, name: &str) -> Option<f64> {
        self.covariates.get(name).copied()
    }
}

/// `(B_d + W - V_s) / B_d`.
pub fn raw_lgd(record: &LoanDefaultRecord) -> Result<f64> {
    raw_lgd_parts(record.balance_at_default, record.workout_cost, record.value_at_sale)
}

pub fn raw_lgd_parts(balance_at_default: f64, workout_cost: f64, value_at_sale: f64) -> Result<f64> {
    if !(balance_at_default > 0.0) {
        return Err(Error::Domain(format!(
            "balance at default must be positive, got {balance_at_default}"
        )));
    }
    Ok((balance_at_default + workout_cost - value_at_sale) / balance_at_default)
}

/// LGD rebuilt from LTV at default, the relative value change and the workout
/// ratio: `1 - 1/ltv - (dV/V_d)/ltv + W/B_d`.
pub fn lgd_decomposed(ltv_d: f64, value_change_ratio: f64, workout_ratio: f64) -> Result<f64> {
    if !(ltv_d > 0.0) {
        return Err(Error::Domain(format!("LTV must be positive, got {ltv_d}")));
    }
    Ok(1.0 - 1.0 / ltv_d - value_change_ratio / ltv_d + workout_ratio)
}

/// Decomposed LGD of a record, or `None` when `B_s != B_d`.
pub fn decomposition_check(record: &LoanDefaultRecord) -> Result<Option<f64>> {
    if !record.balances_match() {
        return Ok(None);
    }
    lgd_decomposed(record.ltv_at_default(), record.value_change_ratio(), record.workout_ratio()).map(Some)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LgdOutcome {
    pub raw_lgd: f64,
    pub censored_lgd: f64,
}

pub fn censor(raw: f64) -> LgdOutcome {
    LgdOutcome {
        raw_lgd: raw,
        censored_lgd: raw.max(0.0),
    }
}

/// Censored LGD of every record, i.e. the observable response.
pub fn observed_lgd(records: &[LoanDefaultRecord]) -> Result<Vec<f64>> {
    records.iter().map(|r| raw_lgd(r).map(|v| censor(v).censored_lgd)).collect()
}

/// Which property value the value-change study trusts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueBasis {
    /// `V_d` is an appraisal; keep only records appraised near default.
    Appraisal,
    /// `V_d` is a model value available for every record; no filter.
    Model,
}

impl ValueBasis {
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "appraisal" => Ok(Self::Appraisal),
            "model" => Ok(Self::Model),
            other => Err(Error::Config(format!("unknown value basis `{other}`"))),
        }
    }
}

/// Correlation between inflation at default and the realised value change
/// over each loan's own workout period.
///
/// Under [`ValueBasis::Appraisal`] only records whose appraisal lies within
/// `appraisal_window_months` of default survive. Records whose default month
/// has no inflation reading are skipped.
pub fn value_change_correlation_real_time(
    records: &[LoanDefaultRecord],
    cpi_yoy: &MonthlySeries,
    appraisal_window_months: u32,
    basis: ValueBasis,
) -> Result<CorrelationReport> {
    let window = i64::from(appraisal_window_months);
    let kept: Vec<&LoanDefaultRecord> = records
        .iter()
        .filter(|r| match basis {
            ValueBasis::Model => true,
            ValueBasis::Appraisal => r
                .appraisal_month
                .is_some_and(|a| a.months_until(r.default_month).abs() <= window),
        })
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyAfterFilter);
    }
    let mut months: Vec<MonthKey> = Vec::new();
    let sample: Vec<(f64, f64)> = kept
        .iter()
        .filter_map(|r| {
            let cpi = cpi_yoy.get(r.default_month)?;
            months.push(r.default_month);
            Some((cpi, r.value_change_ratio()))
        })
        .collect();
    let span = match (months.iter().min(), months.iter().max()) {
        (Some(a), Some(b)) => MonthWindow::new(*a, *b)?,
        _ => MonthWindow::unbounded(),
    };
    Ok(CorrelationReport {
        series_x_name: cpi_yoy.name().to_string(),
        series_y_name: "value_change_ratio".into(),
        transform_x: TransformSpec::RAW,
        transform_y: TransformSpec::RAW,
        lead_months: 0,
        window: span,
        n_pairs: sample.len(),
        pearson_r: pearson(&sample),
    })
}
