use std::io::{Read, Write};
use std::path::Path;

use indexmap::IndexMap;

use super::LoanDefaultRecord;
use crate::error::{Error, Result};
use crate::series::MonthKey;

const FIXED: [&str; 9] = [
    "loan_id",
    "default_month",
    "sale_month",
    "B_d",
    "B_s",
    "V_d",
    "V_s",
    "W",
    "appraisal_month",
];

pub fn read_loan_csv(path: &Path) -> Result<Vec<LoanDefaultRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_loan_csv(file, &path.display().to_string())
}

/// Parses the loan table: the fixed columns in order, then one column per
/// covariate. Every record is validated; `#` lines are comments.
pub fn parse_loan_csv<R: Read>(reader: R, source: &str) -> Result<Vec<LoanDefaultRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let err = |line: usize, message: String| Error::Parse {
        file: source.to_string(),
        line,
        message,
    };
    let headers = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
    if headers.len() < FIXED.len() || headers.iter().zip(FIXED).any(|(h, f)| h != f) {
        return Err(err(1, format!("header must start with {}", FIXED.join(","))));
    }
    let covariate_names: Vec<String> = headers.iter().skip(FIXED.len()).map(str::to_string).collect();

    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let month = |i: usize| {
            MonthKey::parse(&record[i]).map_err(|_| err(line, format!("invalid {} `{}`", FIXED[i], &record[i])))
        };
        let number = |i: usize, name: &str| {
            record[i]
                .parse::<f64>()
                .map_err(|_| err(line, format!("invalid {name} `{}`", &record[i])))
        };
        let appraisal_month = if record[8].is_empty() { None } else { Some(month(8)?) };
        let mut covariates = IndexMap::with_capacity(covariate_names.len());
        for (j, name) in covariate_names.iter().enumerate() {
            covariates.insert(name.clone(), number(FIXED.len() + j, name)?);
        }
        let rec = LoanDefaultRecord {
            loan_id: record[0].to_string(),
            default_month: month(1)?,
            sale_month: month(2)?,
            balance_at_default: number(3, "B_d")?,
            balance_at_sale: number(4, "B_s")?,
            value_at_default: number(5, "V_d")?,
            value_at_sale: number(6, "V_s")?,
            workout_cost: number(7, "W")?,
            appraisal_month,
            covariates,
        };
        rec.validate().map_err(|e| err(line, e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

/// Writes records with the covariate columns of the first record. Floats use
/// the shortest round-trip representation, so output is byte-stable.
pub fn write_loan_csv<W: Write>(writer: W, records: &[LoanDefaultRecord]) -> Result<()> {
    let covariate_names: Vec<&String> = records.first().map(|r| r.covariates.keys().collect()).unwrap_or_default();
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<&str> = FIXED
        .iter()
        .copied()
        .chain(covariate_names.iter().map(|s| s.as_str()))
        .collect();
    w.write_record(&header).map_err(Error::output)?;
    for r in records {
        let mut row = vec![
            r.loan_id.clone(),
            r.default_month.to_string(),
            r.sale_month.to_string(),
            r.balance_at_default.to_string(),
            r.balance_at_sale.to_string(),
            r.value_at_default.to_string(),
            r.value_at_sale.to_string(),
            r.workout_cost.to_string(),
            r.appraisal_month.map(|m| m.to_string()).unwrap_or_default(),
        ];
        for name in &covariate_names {
            let v = r
                .covariates
                .get(*name)
                .ok_or_else(|| Error::DegenerateData(format!("loan {} lacks covariate `{name}`", r.loan_id)))?;
            row.push(v.to_string());
        }
        w.write_record(&row).map_err(Error::output)?;
    }
    w.flush().map_err(Error::output)?;
    Ok(())
}
