use std::io::Read;
use std::path::Path;

use super::{MonthKey, MonthlySeries};
use crate::error::{Error, Result};

/// Reads a two-column `date,value` CSV (FRED export layout).
///
/// The series is named after the header's value column when a header is
/// present, otherwise after the file stem.
pub fn read_series_csv(path: &Path) -> Result<MonthlySeries> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_series_csv(file, &stem, &path.display().to_string())
}

pub fn parse_series_csv<R: Read>(reader: R, default_name: &str, source: &str) -> Result<MonthlySeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut name = default_name.to_string();
    let mut series = MonthlySeries::new(default_name);
    let parse_err = |line: usize, message: String| Error::Parse {
        file: source.to_string(),
        line,
        message,
    };

    for (idx, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| parse_err(idx + 1, e.to_string()))?;
        let line = record.position().map_or(idx + 1, |p| p.line() as usize);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if record.len() != 2 {
            return Err(parse_err(
                line,
                format!("expected 2 columns, found {}", record.len()),
            ));
        }
        let (date, value) = (&record[0], &record[1]);
        if idx == 0 && !date.starts_with(|c: char| c.is_ascii_digit()) {
            if !value.is_empty() {
                name = value.to_string();
            }
            continue;
        }
        let month =
            MonthKey::parse(date).map_err(|_| parse_err(line, format!("invalid date `{date}`")))?;
        if matches!(value, "" | "." | "NA" | "na" | "NaN") {
            continue;
        }
        let v: f64 = value
            .parse()
            .map_err(|_| parse_err(line, format!("invalid value `{value}`")))?;
        if series.insert(month, v).is_some() {
            return Err(parse_err(line, format!("duplicate month {month}")));
        }
    }
    Ok(series.renamed(name))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<MonthlySeries> {
        parse_series_csv(text.as_bytes(), "stem", "mem.csv")
    }

    #[test]
    fn fred_export_with_header() {
        let s = parse("observation_date,CPIAUCSL\n1947-01-01,21.48\n1947-02-01,21.62\n1947-03-01,.\n1947-04-01,22.0\n").unwrap();
        assert_eq!(s.name(), "CPIAUCSL");
        assert_eq!(s.len(), 3);
        assert_eq!(s.missing_interior_months(), 1);
        assert_eq!(s.get(MonthKey::new(1947, 2).unwrap()), Some(21.62));
    }

    #[test]
    fn headerless_uses_stem_and_na_is_missing() {
        let s = parse("2020-01,1.5\n2020-02,NA\n2020-03,\n2020-04,2\n").unwrap();
        assert_eq!(s.name(), "stem");
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn invalid_month_names_line() {
        let err = parse("date,value\n2020-12,1\n2020-13,2\n").unwrap_err();
        match err {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("2020-13"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_garbage_rows_fail() {
        assert!(parse("2020-01,1\n2020-01-15,2\n").is_err());
        assert!(parse("2020-01,abc\n").is_err());
        assert!(parse("2020-01,1,2\n").is_err());
    }
}
