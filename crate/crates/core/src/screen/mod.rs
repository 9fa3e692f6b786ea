//! Correlation screening of macro series: spot and lead/lag Pearson
//! correlations, bucketed correlations, the transform correlation matrix and
//! unit-root testing.

mod adf;

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::series::{
    align_keyed, apply_transform, shift_forward, MonthKey, MonthWindow, MonthlySeries, TransformSpec,
};

pub use self::adf::{
    adf_test, adf_test_values, critical_values, mackinnon_p_value, schwert_max_lag, AdfResult, LagOrder,
    RegressionKind, MIN_ADF_OBS,
};

/// Default p-value below which a screened series is flagged stationary.
pub const DEFAULT_STATIONARITY_LEVEL: f64 = 0.10;

/// Pearson correlation of a paired sample.
///
/// `None` for fewer than two pairs or when either margin has zero variance.
pub fn pearson(sample: &[(f64, f64)]) -> Option<f64> {
    let n = sample.len();
    if n < 2 {
        return None;
    }
    // an exactly constant margin can leave rounding residue in the centred sums
    if sample.iter().all(|p| p.0 == sample[0].0) || sample.iter().all(|p| p.1 == sample[0].1) {
        return None;
    }
    let nf = n as f64;
    let (sx, sy) = sample.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / nf, sy / nf);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in sample {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    r.is_finite().then(|| r.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrelationReport {
    pub series_x_name: String,
    pub series_y_name: String,
    pub transform_x: TransformSpec,
    pub transform_y: TransformSpec,
    pub lead_months: i64,
    pub window: MonthWindow,
    pub n_pairs: usize,
    pub pearson_r: Option<f64>,
}

/// Transformed, shifted and windowed inputs of one screen, keyed by `t`.
struct Prepared {
    x: MonthlySeries,
    y: MonthlySeries,
    pairs: Vec<(MonthKey, f64, f64)>,
}

fn prepare(
    x: &MonthlySeries,
    y: &MonthlySeries,
    tx: TransformSpec,
    ty: TransformSpec,
    lead_months: i64,
    window: MonthWindow,
) -> Result<Prepared> {
    let xt = apply_transform(x, tx)?;
    let yt = shift_forward(&apply_transform(y, ty)?, lead_months);
    let xw = crate::series::window(&xt, window.start, window.end)?;
    let yw = crate::series::window(&yt, window.start, window.end)?;
    let pairs = align_keyed(&xw, &yw);
    Ok(Prepared { x: xw, y: yw, pairs })
}

/// Correlates `tx(x)_t` with `ty(y)_{t+lead_months}` over months `t` in `window`.
pub fn screen(
    x: &MonthlySeries,
    y: &MonthlySeries,
    tx: TransformSpec,
    ty: TransformSpec,
    lead_months: i64,
    window: MonthWindow,
) -> Result<CorrelationReport> {
    let prep = prepare(x, y, tx, ty, lead_months, window)?;
    Ok(report(x, y, tx, ty, lead_months, window, &prep.pairs))
}

fn report(
    x: &MonthlySeries,
    y: &MonthlySeries,
    tx: TransformSpec,
    ty: TransformSpec,
    lead_months: i64,
    window: MonthWindow,
    pairs: &[(MonthKey, f64, f64)],
) -> CorrelationReport {
    let sample: Vec<(f64, f64)> = pairs.iter().map(|(_, a, b)| (*a, *b)).collect();
    CorrelationReport {
        series_x_name: x.name().to_string(),
        series_y_name: y.name().to_string(),
        transform_x: tx,
        transform_y: ty,
        lead_months,
        window,
        n_pairs: sample.len(),
        pearson_r: pearson(&sample),
    }
}

/// Thresholds splitting the real line into left-open, right-closed intervals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketSpec {
    edges: Vec<f64>,
}

impl BucketSpec {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::Config("bucket edges must be finite".into()));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("bucket edges must be strictly increasing".into()));
        }
        Ok(Self { edges })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the interval holding `value`.
    pub fn bucket_of(&self, value: f64) -> usize {
        self.edges.partition_point(|e| *e < value)
    }

    pub fn bucket(&self, index: usize) -> Bucket {
        Bucket {
            index,
            lower: index.checked_sub(1).map(|i| self.edges[i]),
            upper: self.edges.get(index).copied(),
        }
    }
}

/// `(lower, upper]`, unbounded where `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bucket {
    pub index: usize,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.lower, self.upper) {
            (None, None) => write!(f, "(-inf, inf)"),
            (None, Some(u)) => write!(f, "(-inf, {u}]"),
            (Some(l), None) => write!(f, "({l}, inf)"),
            (Some(l), Some(u)) => write!(f, "({l}, {u}]"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BucketReport {
    pub bucket: Bucket,
    pub month_count: usize,
    pub report: CorrelationReport,
}

/// Like [`screen`], with the aligned pairs split by the bucket of the x value.
pub fn screen_bucketed(
    x: &MonthlySeries,
    y: &MonthlySeries,
    tx: TransformSpec,
    ty: TransformSpec,
    lead_months: i64,
    window: MonthWindow,
    buckets: &BucketSpec,
) -> Result<Vec<BucketReport>> {
    let prep = prepare(x, y, tx, ty, lead_months, window)?;
    let mut split: Vec<Vec<(MonthKey, f64, f64)>> = vec![Vec::new(); buckets.len()];
    for p in prep.pairs {
        split[buckets.bucket_of(p.1)].push(p);
    }
    Ok(split
        .iter()
        .enumerate()
        .map(|(i, pairs)| BucketReport {
            bucket: buckets.bucket(i),
            month_count: pairs.len(),
            report: report(x, y, tx, ty, lead_months, window, pairs),
        })
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    /// Row-major, symmetric.
    pub values: Vec<Vec<Option<f64>>>,
    pub n_months: usize,
    pub first_month: Option<MonthKey>,
    pub last_month: Option<MonthKey>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i][j]
    }
}

/// Pairwise correlations of several transforms of one series, over the months
/// where every transform is defined.
pub fn transform_correlation_matrix(
    series: &MonthlySeries,
    specs: &[TransformSpec],
    window: MonthWindow,
) -> Result<CorrelationMatrix> {
    if specs.len() < 2 {
        return Err(Error::Config("a correlation matrix needs at least two transforms".into()));
    }
    let transformed = specs
        .iter()
        .map(|s| apply_transform(series, *s).and_then(|t| crate::series::window(&t, window.start, window.end)))
        .collect::<Result<Vec<_>>>()?;
    let mut common: BTreeSet<MonthKey> = transformed[0].keys().collect();
    for t in &transformed[1..] {
        common.retain(|k| t.get(*k).is_some());
    }
    let columns: Vec<Vec<f64>> = transformed
        .iter()
        .map(|t| common.iter().map(|k| t.get(*k).unwrap_or(f64::NAN)).collect())
        .collect();
    let m = specs.len();
    let mut values = vec![vec![None; m]; m];
    for i in 0..m {
        for j in i..m {
            let sample: Vec<(f64, f64)> = columns[i].iter().copied().zip(columns[j].iter().copied()).collect();
            let r = pearson(&sample);
            let r = if i == j { r.map(|_| 1.0) } else { r };
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        labels: specs.iter().map(|s| s.to_string()).collect(),
        values,
        n_months: common.len(),
        first_month: common.first().copied(),
        last_month: common.last().copied(),
    })
}

/// Nominal rate implied by a real rate and expected inflation: `(1+r)(1+pi) - 1`.
pub fn fisher_nominal(real_rate: f64, expected_inflation: f64) -> Result<f64> {
    if !(real_rate > -1.0) || !(expected_inflation > -1.0) {
        return Err(Error::Domain(format!(
            "fisher_nominal needs both rates above -1, got {real_rate} and {expected_inflation}"
        )));
    }
    Ok(real_rate + expected_inflation + real_rate * expected_inflation)
}

/// One row of a screening table.
#[derive(Debug, Clone, Serialize)]
pub struct ScreenRow {
    pub x_name: String,
    pub x_transform: TransformSpec,
    pub y_name: String,
    pub y_transform: TransformSpec,
    pub lead_months: i64,
    pub window_start: MonthKey,
    pub window_end: MonthKey,
    pub bucket: String,
    pub n_pairs: usize,
    pub pearson_r: Option<f64>,
    pub adf_p_x: Option<f64>,
    pub adf_p_y: Option<f64>,
}

/// Screens `(x, y)` and attaches ADF p-values of both transformed, windowed
/// inputs. An ADF failure (too short, constant) leaves the p-value empty.
pub fn screen_row(
    x: &MonthlySeries,
    y: &MonthlySeries,
    tx: TransformSpec,
    ty: TransformSpec,
    lead_months: i64,
    window: MonthWindow,
    adf_kind: RegressionKind,
) -> Result<ScreenRow> {
    let prep = prepare(x, y, tx, ty, lead_months, window)?;
    let rep = report(x, y, tx, ty, lead_months, window, &prep.pairs);
    let adf_p = |s: &MonthlySeries| adf_test(s, adf_kind, LagOrder::Auto).ok().map(|r| r.p_value);
    Ok(ScreenRow {
        x_name: rep.series_x_name,
        x_transform: tx,
        y_name: rep.series_y_name,
        y_transform: ty,
        lead_months,
        window_start: window.start,
        window_end: window.end,
        bucket: "all".into(),
        n_pairs: rep.n_pairs,
        pearson_r: rep.pearson_r,
        adf_p_x: adf_p(&prep.x),
        adf_p_y: adf_p(&prep.y),
    })
}

/// Bucketed variant of [`screen_row`]; one row per bucket.
#[allow(clippy::too_many_arguments)]
pub fn screen_rows_bucketed(
    x: &MonthlySeries,
    y: &MonthlySeries,
    tx: TransformSpec,
    ty: TransformSpec,
    lead_months: i64,
    window: MonthWindow,
    buckets: &BucketSpec,
    adf_kind: RegressionKind,
) -> Result<Vec<ScreenRow>> {
    let base = screen_row(x, y, tx, ty, lead_months, window, adf_kind)?;
    let reports = screen_bucketed(x, y, tx, ty, lead_months, window, buckets)?;
    Ok(reports
        .into_iter()
        .map(|b| ScreenRow {
            bucket: b.bucket.to_string(),
            n_pairs: b.month_count,
            pearson_r: b.report.pearson_r,
            ..base.clone()
        })
        .collect())
}

pub fn write_screen_csv<W: std::io::Write>(writer: W, rows: &[ScreenRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "x_name",
        "x_transform",
        "y_name",
        "y_transform",
        "lead_months",
        "window_start",
        "window_end",
        "bucket",
        "n_pairs",
        "pearson_r",
        "adf_p_x",
        "adf_p_y",
    ])
    .map_err(Error::output)?;
    let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.x_name.clone(),
            r.x_transform.to_string(),
            r.y_name.clone(),
            r.y_transform.to_string(),
            r.lead_months.to_string(),
            r.window_start.to_string(),
            r.window_end.to_string(),
            r.bucket.clone(),
            r.n_pairs.to_string(),
            opt(r.pearson_r),
            opt(r.adf_p_x),
            opt(r.adf_p_y),
        ])
        .map_err(Error::output)?;
    }
    w.flush().map_err(Error::output)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn month(y: i32, m: u32) -> MonthKey {
        MonthKey::new(y, m).unwrap()
    }

    fn series(name: &str, values: &[f64]) -> MonthlySeries {
        MonthlySeries::from_values(name, month(2000, 1), values.iter().map(|v| Some(*v)))
    }

    #[test]
    fn pearson_edge_cases() {
        let xs = [1.0, 2.0, 4.0, 7.0];
        let same: Vec<_> = xs.iter().map(|x| (*x, *x)).collect();
        let anti: Vec<_> = xs.iter().map(|x| (*x, -*x)).collect();
        assert!((pearson(&same).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&anti).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&[(1.0, 2.0)]), None);
        assert_eq!(pearson(&[(1.0, 2.0), (1.0, 3.0)]), None);
        assert_eq!(pearson(&[]), None);
    }

    #[test]
    fn pearson_matches_textbook_formula() {
        // centred sums: sxy = 3, sxx = syy = 5, so r = 0.6
        let r = pearson(&[(1.0, 2.0), (2.0, 1.0), (3.0, 4.0), (4.0, 3.0)]).unwrap();
        assert!((r - 0.6).abs() < 1e-15);
    }

    #[test]
    fn screen_self_and_lead() {
        let x = series("x", &[1.0, 3.0, 2.0, 5.0, 4.0, 6.0, 8.0, 7.0]);
        let rep = screen(&x, &x, TransformSpec::RAW, TransformSpec::RAW, 0, MonthWindow::unbounded()).unwrap();
        assert_eq!(rep.n_pairs, 8);
        assert!((rep.pearson_r.unwrap() - 1.0).abs() < 1e-15);

        let rep = screen(&x, &x, TransformSpec::RAW, TransformSpec::RAW, 2, MonthWindow::unbounded()).unwrap();
        assert_eq!(rep.n_pairs, 6);
        let manual: Vec<_> = (0..6).map(|i| {
            let v = [1.0, 3.0, 2.0, 5.0, 4.0, 6.0, 8.0, 7.0];
            (v[i], v[i + 2])
        }).collect();
        assert_eq!(rep.pearson_r, pearson(&manual));
    }

    #[test]
    fn screen_rejects_bad_spec() {
        let x = series("x", &[1.0, 2.0]);
        let bad = TransformSpec {
            kind: crate::series::TransformKind::Diff,
            horizon: 0,
        };
        assert!(matches!(
            screen(&x, &x, bad, TransformSpec::RAW, 0, MonthWindow::unbounded()),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn bucket_intervals_are_left_open() {
        let b = BucketSpec::new(vec![0.02, 0.04]).unwrap();
        assert_eq!(b.bucket_of(0.02), 0);
        assert_eq!(b.bucket_of(0.0200001), 1);
        assert_eq!(b.bucket_of(0.04), 1);
        assert_eq!(b.bucket_of(0.05), 2);
        assert_eq!(b.bucket(0).to_string(), "(-inf, 0.02]");
        assert_eq!(b.bucket(2).to_string(), "(0.04, inf)");
        assert!(BucketSpec::new(vec![0.04, 0.02]).is_err());
        assert!(BucketSpec::new(vec![0.04, 0.04]).is_err());
    }

    #[test]
    fn sign_flip_across_buckets() {
        // y = x below the edge, y = -x above it
        let xs: Vec<f64> = (0..80).map(|i| i as f64 * 0.001).collect();
        let ys: Vec<f64> = xs.iter().map(|x| if *x > 0.04 { -x } else { *x }).collect();
        let x = series("x", &xs);
        let y = series("y", &ys);
        let spec = BucketSpec::new(vec![0.04]).unwrap();
        let out = screen_bucketed(&x, &y, TransformSpec::RAW, TransformSpec::RAW, 0, MonthWindow::unbounded(), &spec)
            .unwrap();
        assert_eq!(out[0].month_count, 41);
        assert_eq!(out[1].month_count, 39);
        assert!((out[0].report.pearson_r.unwrap() - 1.0).abs() < 1e-12);
        assert!((out[1].report.pearson_r.unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_bucket_equals_screen_and_degenerate_bucket() {
        let x = series("x", &[0.1, 0.5, 0.2, 0.7, 0.3]);
        let y = series("y", &[1.0, 2.0, 0.5, 3.0, 1.5]);
        let all = BucketSpec::new(vec![]).unwrap();
        let w = MonthWindow::unbounded();
        let plain = screen(&x, &y, TransformSpec::RAW, TransformSpec::RAW, 0, w).unwrap();
        let one = screen_bucketed(&x, &y, TransformSpec::RAW, TransformSpec::RAW, 0, w, &all).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].report.pearson_r, plain.pearson_r);
        assert_eq!(one[0].month_count, plain.n_pairs);

        let tight = BucketSpec::new(vec![0.15, 10.0]).unwrap();
        let out = screen_bucketed(&x, &y, TransformSpec::RAW, TransformSpec::RAW, 0, w, &tight).unwrap();
        assert_eq!(out[0].month_count, 1);
        assert_eq!(out[0].report.pearson_r, None);
        assert_eq!(out[2].month_count, 0);
    }

    #[test]
    fn fisher_examples() {
        assert_eq!(fisher_nominal(0.0, 0.0).unwrap(), 0.0);
        assert!((fisher_nominal(0.02, 0.03).unwrap() - 0.0506).abs() < 1e-15);
        assert_eq!(fisher_nominal(0.037, 0.0).unwrap(), 0.037);
        assert!(matches!(fisher_nominal(-1.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(fisher_nominal(0.0, -1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn matrix_diagonal_and_common_months() {
        let values: Vec<f64> = (0..60).map(|i| 100.0 * (1.0 + 0.002 * i as f64 + 0.01 * (i as f64).sin())).collect();
        let s = series("cpi", &values);
        let specs = [TransformSpec::rdiff(12), TransformSpec::ldiff(12), TransformSpec::rdiff(3)];
        let m = transform_correlation_matrix(&s, &specs, MonthWindow::unbounded()).unwrap();
        assert_eq!(m.n_months, 48);
        for i in 0..3 {
            assert_eq!(m.get(i, i), Some(1.0));
            for j in 0..3 {
                assert_eq!(m.get(i, j), m.get(j, i));
            }
        }
        assert!(m.get(0, 1).unwrap() > 0.999);
        assert!(transform_correlation_matrix(&s, &specs[..1], MonthWindow::unbounded()).is_err());
    }

    #[test]
    fn csv_has_rectangular_rows() {
        let x = series("x", &[1.0, 2.0, 1.5]);
        let row = screen_row(&x, &x, TransformSpec::RAW, TransformSpec::RAW, 0, MonthWindow::unbounded(), RegressionKind::Constant)
            .unwrap();
        assert_eq!(row.adf_p_x, None);
        let mut buf = Vec::new();
        write_screen_csv(&mut buf, &[row]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
    }

    proptest! {
        #[test]
        fn pearson_affine_invariance(
            xs in prop::collection::vec(-100.0f64..100.0, 3..50),
            noise in prop::collection::vec(-1.0f64..1.0, 50),
            a in 0.01f64..100.0,
            b in -100.0f64..100.0,
        ) {
            let sample: Vec<(f64, f64)> = xs.iter().zip(&noise).map(|(x, e)| (*x, x * 0.5 + e)).collect();
            let moved: Vec<(f64, f64)> = sample.iter().map(|(x, y)| (a * x + b, *y)).collect();
            match (pearson(&sample), pearson(&moved)) {
                (Some(r), Some(s)) => {
                    prop_assert!(r.abs() <= 1.0 + 1e-12);
                    prop_assert!((r - s).abs() < 1e-10);
                }
                (None, None) => {}
                other => prop_assert!(false, "{other:?}"),
            }
        }

        #[test]
        fn lead_symmetry(
            xs in prop::collection::vec(0.5f64..2.0, 20..40),
            ys in prop::collection::vec(0.5f64..2.0, 20..40),
            lead in -6i64..6,
        ) {
            let x = series("x", &xs);
            let y = series("y", &ys);
            let w = MonthWindow::unbounded();
            let a = screen(&x, &y, TransformSpec::rdiff(1), TransformSpec::RAW, lead, w).unwrap();
            let b = screen(&y, &x, TransformSpec::RAW, TransformSpec::rdiff(1), -lead, w).unwrap();
            prop_assert_eq!(a.n_pairs, b.n_pairs);
            match (a.pearson_r, b.pearson_r) {
                (Some(r), Some(s)) => prop_assert!((r - s).abs() < 1e-12),
                (r, s) => prop_assert_eq!(r, s),
            }
        }

        #[test]
        fn bucket_counts_sum(
            xs in prop::collection::vec(-0.1f64..0.1, 5..60),
            edges in prop::collection::btree_set(-50i32..50, 0..4),
        ) {
            let ys: Vec<f64> = xs.iter().map(|v| v * v).collect();
            let x = series("x", &xs);
            let y = series("y", &ys);
            let spec = BucketSpec::new(edges.iter().map(|e| *e as f64 / 500.0).collect()).unwrap();
            let w = MonthWindow::unbounded();
            let all = screen(&x, &y, TransformSpec::RAW, TransformSpec::RAW, 1, w).unwrap();
            let parts = screen_bucketed(&x, &y, TransformSpec::RAW, TransformSpec::RAW, 1, w, &spec).unwrap();
            prop_assert_eq!(parts.iter().map(|p| p.month_count).sum::<usize>(), all.n_pairs);
        }
    }
}
