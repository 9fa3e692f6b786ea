use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lgd::{observed_lgd, LoanDefaultRecord};

pub const INTERCEPT: &str = "Intercept";

/// Regressor matrix with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    data: DMatrix<f64>,
    names: Vec<String>,
}

impl DesignMatrix {
    /// Builds from row-major values. Rejects non-finite entries, `n <= p`,
    /// repeated names and exactly duplicated columns.
    pub fn from_row_major(nrows: usize, names: Vec<String>, values: &[f64]) -> Result<Self> {
        let p = names.len();
        if values.len() != nrows * p {
            return Err(Error::Shape {
                expected: nrows * p,
                got: values.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(nrows, p, values), names)
    }

    pub fn from_columns(names: Vec<String>, columns: &[Vec<f64>]) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::Shape {
                expected: names.len(),
                got: columns.len(),
            });
        }
        let n = columns.first().map_or(0, Vec::len);
        if let Some(bad) = columns.iter().find(|c| c.len() != n) {
            return Err(Error::Shape {
                expected: n,
                got: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]), names)
    }

    pub fn new(data: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        let (n, p) = data.shape();
        if names.len() != p {
            return Err(Error::Shape {
                expected: p,
                got: names.len(),
            });
        }
        if p == 0 {
            return Err(Error::Config("design matrix needs at least one column".into()));
        }
        if n <= p {
            return Err(Error::TooFewObservations { needed: p + 1, have: n });
        }
        for (j, name) in names.iter().enumerate() {
            if names[..j].contains(name) {
                return Err(Error::Config(format!("duplicate column name `{name}`")));
            }
            if data.column(j).iter().any(|v| !v.is_finite()) {
                return Err(Error::DegenerateData(format!("column `{name}` has non-finite entries")));
            }
        }
        let duplicated: Vec<String> = (0..p)
            .filter(|&j| (0..j).any(|k| data.column(j) == data.column(k)))
            .map(|j| names[j].clone())
            .collect();
        if !duplicated.is_empty() {
            return Err(Error::RankDeficient(duplicated));
        }
        Ok(Self { data, names })
    }

    /// Row subset, keeping the order given. Rejects subsets with `n <= p`.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let p = self.ncols();
        if rows.len() <= p {
            return Err(Error::TooFewObservations {
                needed: p + 1,
                have: rows.len(),
            });
        }
        Ok(Self {
            data: self.data.select_rows(rows),
            names: self.names.clone(),
        })
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.data.row(i).iter().copied().collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn has_intercept(&self) -> bool {
        self.column_index(INTERCEPT).is_some()
    }
}

/// Design matrix from record covariates plus the observed (censored) LGD.
pub fn design_from_records(
    records: &[LoanDefaultRecord],
    columns: &[String],
    intercept: bool,
) -> Result<(DesignMatrix, DVector<f64>)> {
    let mut names = Vec::with_capacity(columns.len() + 1);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(columns.len() + 1);
    if intercept {
        names.push(INTERCEPT.to_string());
        cols.push(vec![1.0; records.len()]);
    }
    for name in columns {
        let col = records
            .iter()
            .map(|r| {
                r.covariate(name)
                    .ok_or_else(|| Error::Config(format!("loan {} has no covariate `{name}`", r.loan_id)))
            })
            .collect::<Result<Vec<f64>>>()?;
        names.push(name.clone());
        cols.push(col);
    }
    let x = DesignMatrix::from_columns(names, &cols)?;
    let y = DVector::from_vec(observed_lgd(records)?);
    Ok((x, y))
}
