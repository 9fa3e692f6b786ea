//! Calendar-indexed monthly series and the k-month difference transforms.
//!
//! A missing month is simply an absent key. Transforms never raise on gaps or
//! non-positive bases; the affected output months are left absent instead.

mod csv;
mod month;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub use self::csv::{parse_series_csv, read_series_csv};
pub use self::month::{MonthKey, Quarter};

#[derive(Debug, Clone, PartialEq)]
pub struct MonthlySeries {
    name: String,
    observations: BTreeMap<MonthKey, f64>,
}

impl MonthlySeries {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            observations: BTreeMap::new(),
        }
    }

    pub fn from_observations(
        name: impl Into<String>,
        observations: impl IntoIterator<Item = (MonthKey, f64)>,
    ) -> Self {
        Self {
            name: name.into(),
            observations: observations.into_iter().collect(),
        }
    }

    /// Consecutive months starting at `start`; `None` entries are missing.
    pub fn from_values(
        name: impl Into<String>,
        start: MonthKey,
        values: impl IntoIterator<Item = Option<f64>>,
    ) -> Self {
        let observations = values
            .into_iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (start.add_months(i as i64), v)))
            .collect();
        Self {
            name: name.into(),
            observations,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn get(&self, month: MonthKey) -> Option<f64> {
        self.observations.get(&month).copied()
    }

    pub fn insert(&mut self, month: MonthKey, value: f64) -> Option<f64> {
        self.observations.insert(month, value)
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn first_month(&self) -> Option<MonthKey> {
        self.observations.keys().next().copied()
    }

    pub fn last_month(&self) -> Option<MonthKey> {
        self.observations.keys().next_back().copied()
    }

    /// Months between the first and last observation that carry no value.
    pub fn missing_interior_months(&self) -> usize {
        match (self.first_month(), self.last_month()) {
            (Some(a), Some(b)) => (a.months_until(b) + 1) as usize - self.len(),
            _ => 0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (MonthKey, f64)> + '_ {
        self.observations.iter().map(|(k, v)| (*k, *v))
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.observations.values().copied()
    }

    pub fn keys(&self) -> impl Iterator<Item = MonthKey> + '_ {
        self.observations.keys().copied()
    }

    /// Values of the longest run of consecutive months; ties go to the later run.
    pub fn longest_contiguous_run(&self) -> Vec<f64> {
        let mut best: (usize, usize) = (0, 0);
        let mut start = 0usize;
        let keys: Vec<MonthKey> = self.keys().collect();
        for i in 0..keys.len() {
            if i > 0 && keys[i - 1].succ() != keys[i] {
                start = i;
            }
            let len = i + 1 - start;
            if len >= best.1 - best.0 {
                best = (start, i + 1);
            }
        }
        let values: Vec<f64> = self.values().collect();
        values[best.0..best.1].to_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TransformKind {
    Raw,
    Diff,
    Rdiff,
    Ldiff,
}

/// A named series transformation such as `RDIFF12M` or `LDIFF6M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TransformSpec {
    pub kind: TransformKind,
    pub horizon: u32,
}

impl TransformSpec {
    pub const RAW: TransformSpec = TransformSpec {
        kind: TransformKind::Raw,
        horizon: 0,
    };

    pub fn raw() -> Self {
        Self::RAW
    }

    pub fn diff(k: u32) -> Self {
        Self {
            kind: TransformKind::Diff,
            horizon: k,
        }
    }

    pub fn rdiff(k: u32) -> Self {
        Self {
            kind: TransformKind::Rdiff,
            horizon: k,
        }
    }

    pub fn ldiff(k: u32) -> Self {
        Self {
            kind: TransformKind::Ldiff,
            horizon: k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != TransformKind::Raw && self.horizon < 1 {
            return Err(Error::InvalidSpec(format!(
                "{:?} needs a horizon of at least one month",
                self.kind
            )));
        }
        Ok(())
    }

    /// Parses `RAW`, `DIFF12M`, `RDIFF3M`, `LDIFF6M` (case-insensitive, trailing `M` optional).
    pub fn parse(text: &str) -> Result<Self> {
        let upper = text.trim().to_ascii_uppercase();
        if upper == "RAW" {
            return Ok(Self::RAW);
        }
        let (kind, rest) = if let Some(rest) = upper.strip_prefix("RDIFF") {
            (TransformKind::Rdiff, rest)
        } else if let Some(rest) = upper.strip_prefix("LDIFF") {
            (TransformKind::Ldiff, rest)
        } else if let Some(rest) = upper.strip_prefix("DIFF") {
            (TransformKind::Diff, rest)
        } else {
            return Err(Error::InvalidSpec(text.to_string()));
        };
        let digits = rest.strip_suffix('M').unwrap_or(rest);
        let horizon: u32 = digits
            .parse()
            .map_err(|_| Error::InvalidSpec(text.to_string()))?;
        let spec = Self { kind, horizon };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for TransformSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            TransformKind::Raw => f.write_str("RAW"),
            TransformKind::Diff => write!(f, "DIFF{}M", self.horizon),
            TransformKind::Rdiff => write!(f, "RDIFF{}M", self.horizon),
            TransformKind::Ldiff => write!(f, "LDIFF{}M", self.horizon),
        }
    }
}

impl FromStr for TransformSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl Serialize for TransformSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TransformSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        TransformSpec::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Inclusive month range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MonthWindow {
    pub start: MonthKey,
    pub end: MonthKey,
}

impl MonthWindow {
    pub fn new(start: MonthKey, end: MonthKey) -> Result<Self> {
        if start > end {
            return Err(Error::InvalidWindow {
                start: start.to_string(),
                end: end.to_string(),
            });
        }
        Ok(Self { start, end })
    }

    /// Whole years, January of `first` through December of `last`.
    pub fn years(first: i32, last: i32) -> Result<Self> {
        Self::new(MonthKey::new(first, 1)?, MonthKey::new(last, 12)?)
    }

    pub fn unbounded() -> Self {
        Self {
            start: MonthKey::from_ordinal(0),
            end: MonthKey::from_ordinal(9999 * 12 + 11),
        }
    }

    pub fn contains(&self, month: MonthKey) -> bool {
        self.start <= month && month <= self.end
    }

    /// Parses `1973-01..2022-12`.
    pub fn parse(text: &str) -> Result<Self> {
        let (a, b) = text
            .split_once("..")
            .ok_or_else(|| Error::Config(format!("window `{text}` is not START..END")))?;
        Self::new(MonthKey::parse(a)?, MonthKey::parse(b)?)
    }
}

impl fmt::Display for MonthWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

pub fn apply_transform(series: &MonthlySeries, spec: TransformSpec) -> Result<MonthlySeries> {
    spec.validate()?;
    if spec.kind == TransformKind::Raw {
        return Ok(series.clone());
    }
    let k = i64::from(spec.horizon);
    let observations = series
        .iter()
        .filter_map(|(month, current)| {
            let base = series.get(month.add_months(-k))?;
            let value = match spec.kind {
                TransformKind::Diff => current - base,
                TransformKind::Rdiff if base > 0.0 => current / base - 1.0,
                TransformKind::Ldiff if base > 0.0 && current > 0.0 => (current / base).ln(),
                _ => return None,
            };
            value.is_finite().then_some((month, value))
        })
        .collect();
    Ok(MonthlySeries {
        name: format!("{}.{}", series.name, spec),
        observations,
    })
}

/// Re-keys the series so that the value observed at `t` sits at `t - months`.
///
/// Aligning the result with an unshifted series at `t` pairs `x_t` with `y_{t+months}`.
pub fn shift_forward(series: &MonthlySeries, months: i64) -> MonthlySeries {
    MonthlySeries {
        name: series.name.clone(),
        observations: series
            .iter()
            .map(|(k, v)| (k.add_months(-months), v))
            .collect(),
    }
}

/// Pairs `(a_t, b_t)` for every month where both series carry a value.
pub fn align(a: &MonthlySeries, b: &MonthlySeries) -> Vec<(f64, f64)> {
    align_keyed(a, b).into_iter().map(|(_, x, y)| (x, y)).collect()
}

pub fn align_keyed(a: &MonthlySeries, b: &MonthlySeries) -> Vec<(MonthKey, f64, f64)> {
    a.iter()
        .filter_map(|(k, x)| b.get(k).map(|y| (k, x, y)))
        .collect()
}

pub fn window(series: &MonthlySeries, start: MonthKey, end: MonthKey) -> Result<MonthlySeries> {
    let w = MonthWindow::new(start, end)?;
    Ok(MonthlySeries {
        name: series.name.clone(),
        observations: series
            .observations
            .range(w.start..=w.end)
            .map(|(k, v)| (*k, *v))
            .collect(),
    })
}
