use std::collections::BTreeMap;

use lgdkit::lgd::{
    generate_synthetic_portfolio, read_loan_csv, synthetic_hpi_series, write_loan_csv, GeneratorConfig,
    LoanDefaultRecord, MevPanel,
};
use lgdkit::mars::{mars_fit, mars_predict};
use lgdkit::screen::{adf_test, screen_row, screen_rows_bucketed, write_screen_csv, BucketSpec, LagOrder, RegressionKind};
use lgdkit::series::{apply_transform, read_series_csv, window};
use lgdkit::tobit::{
    design_from_records, fit_tobit, predict_censored_mean, rank_by_bic, CensoredMeanForm, TobitOptions,
};
use lgdkit::validation::{
    downturn_underestimation_rank, quarterly_mean_fit, run_stability_cv, write_quarterly_csv, FoldPlan,
};
use lgdkit::{
    DesignMatrix, Error, MarsOptions, MonthWindow, MonthlySeries, Quarter, Result, TobitFit, TransformSpec,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::report::Reporter;

/// `SERIES.TRANSFORM`, split at the last dot; a bare name means RAW.
fn series_ref(text: &str) -> Result<(String, TransformSpec)> {
    match text.rsplit_once('.') {
        Some((name, spec)) => Ok((name.to_string(), TransformSpec::parse(spec)?)),
        None => Ok((text.to_string(), TransformSpec::raw())),
    }
}

/// Loads every `*.csv` in `data.mev_dir`, then applies aliases and the
/// optional synthetic HPI.
pub fn load_store(cfg: &RunConfig) -> Result<BTreeMap<String, MonthlySeries>> {
    let mut store = BTreeMap::new();
    if let Some(dir) = cfg.path("data.mev_dir")? {
        let entries = std::fs::read_dir(&dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        let mut files = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::Io {
                path: dir.clone(),
                source: e,
            })?;
            let path = entry.path();
            if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
                files.push(path);
            }
        }
        files.sort();
        for path in files {
            let series = read_series_csv(&path)?;
            let name = series.name().to_string();
            if store.insert(name.clone(), series).is_some() {
                return Err(Error::DuplicateSeries(name));
            }
        }
    }
    for (alias, source) in cfg.section("data.alias") {
        let series = store
            .get(source)
            .ok_or_else(|| Error::Config(format!("alias `{alias}` points at unknown series `{source}`")))?
            .clone()
            .renamed(alias);
        if store.insert(alias.to_string(), series).is_some() {
            return Err(Error::DuplicateSeries(alias.to_string()));
        }
    }
    if let Some(span) = cfg.get("data.synthetic_hpi") {
        let (first, last) = span
            .split_once("..")
            .and_then(|(a, b)| Some((a.trim().parse::<i32>().ok()?, b.trim().parse::<i32>().ok()?)))
            .filter(|(a, b)| a <= b)
            .ok_or_else(|| Error::Config(format!("`data.synthetic_hpi`: expected FIRST..LAST years, got `{span}`")))?;
        let seed = cfg.require_seed()?;
        let hpi = synthetic_hpi_series(first, last, seed).renamed("HPI");
        if store.insert("HPI".to_string(), hpi).is_some() {
            return Err(Error::DuplicateSeries("HPI".into()));
        }
    }
    Ok(store)
}

fn require_series<'a>(store: &'a BTreeMap<String, MonthlySeries>, name: &str) -> Result<&'a MonthlySeries> {
    store
        .get(name)
        .ok_or_else(|| Error::Config(format!("unknown series `{name}`")))
}

fn generator_config(cfg: &RunConfig) -> Result<GeneratorConfig> {
    let pairs: Vec<(&str, &str)> = cfg.section("generator").collect();
    if pairs.iter().any(|(k, _)| *k == "seed") {
        return Err(Error::Config("set the generator seed with the top-level `seed`".into()));
    }
    let mut gen = GeneratorConfig::from_pairs(pairs)?;
    gen.seed = cfg.require_seed()?;
    Ok(gen)
}

/// Loans from `data.loans`, or drawn by the generator.
pub fn load_loans(cfg: &RunConfig) -> Result<Vec<LoanDefaultRecord>> {
    if let Some(path) = cfg.path("data.loans")? {
        return read_loan_csv(&path);
    }
    Ok(generate(cfg)?.1)
}

fn generate(cfg: &RunConfig) -> Result<(GeneratorConfig, Vec<LoanDefaultRecord>)> {
    let gen = generator_config(cfg)?;
    let mut panel = MevPanel::new();
    for (name, series) in load_store(cfg)? {
        panel.insert(name, series);
    }
    let records = generate_synthetic_portfolio(&gen, &panel)?;
    Ok((gen, records))
}

/// Columns of `model.NAME`, checked against the loan covariates.
fn model_columns(cfg: &RunConfig, name: &str, records: &[LoanDefaultRecord]) -> Result<Vec<String>> {
    let key = format!("model.{name}");
    let columns = cfg.list(&key);
    if cfg.get(&key).is_none() {
        return Err(Error::Config(format!("model `{name}` is not defined (`{key}`)")));
    }
    if let Some(first) = records.first() {
        if let Some(missing) = columns.iter().find(|c| first.covariate(c).is_none()) {
            return Err(Error::Config(format!("model `{name}` uses unknown column `{missing}`")));
        }
    }
    Ok(columns)
}

fn tobit_for(cfg: &RunConfig, name: &str, records: &[LoanDefaultRecord]) -> Result<TobitFit> {
    let columns = model_columns(cfg, name, records)?;
    let (x, y) = design_from_records(records, &columns, true)?;
    fit_tobit(&x, y.as_slice(), TobitOptions::default())
}

fn censored_form(cfg: &RunConfig, key: &str) -> Result<CensoredMeanForm> {
    cfg.get(key).map_or(Ok(CensoredMeanForm::default()), CensoredMeanForm::parse)
}

#[derive(Serialize)]
struct SeriesSummary {
    name: String,
    first: Option<String>,
    last: Option<String>,
    n_obs: usize,
    missing_months: usize,
}

pub fn ingest(cfg: &RunConfig, rep: &mut Reporter) -> Result<()> {
    let store = load_store(cfg)?;
    let summary: Vec<SeriesSummary> = store
        .values()
        .map(|s| SeriesSummary {
            name: s.name().to_string(),
            first: s.first_month().map(|m| m.to_string()),
            last: s.last_month().map(|m| m.to_string()),
            n_obs: s.len(),
            missing_months: s.missing_interior_months(),
        })
        .collect();
    println!("{} series", summary.len());
    for s in &summary {
        println!(
            "{}\t{}..{}\t{} obs\t{} missing",
            s.name,
            s.first.as_deref().unwrap_or("-"),
            s.last.as_deref().unwrap_or("-"),
            s.n_obs,
            s.missing_months
        );
    }
    rep.json("ingest.json", &summary)
}

struct ScreenJob {
    x: (String, TransformSpec),
    y: (String, TransformSpec),
    lead: i64,
    window: MonthWindow,
}

pub fn screen(cfg: &RunConfig, rep: &mut Reporter) -> Result<()> {
    let pairs = cfg
        .list("screen.pairs")
        .iter()
        .map(|p| {
            let (x, y) = p
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("screen pair `{p}` must look like X.T:Y.T")))?;
            Ok((series_ref(x.trim())?, series_ref(y.trim())?))
        })
        .collect::<Result<Vec<_>>>()?;
    if pairs.is_empty() {
        return Err(Error::Config("`screen.pairs` is empty".into()));
    }
    let leads = match cfg.get("screen.leads") {
        None => vec![0],
        Some(_) => cfg
            .list("screen.leads")
            .iter()
            .map(|l| l.parse::<i64>().map_err(|_| Error::Config(format!("bad lead `{l}`"))))
            .collect::<Result<Vec<_>>>()?,
    };
    let windows = cfg
        .list("screen.windows")
        .iter()
        .map(|w| MonthWindow::parse(w))
        .collect::<Result<Vec<_>>>()?;
    let windows = if windows.is_empty() { vec![MonthWindow::unbounded()] } else { windows };
    let buckets = match cfg.get("screen.buckets") {
        None => None,
        Some(_) => Some(BucketSpec::new(
            cfg.list("screen.buckets")
                .iter()
                .map(|e| e.parse::<f64>().map_err(|_| Error::Config(format!("bad bucket edge `{e}`"))))
                .collect::<Result<Vec<_>>>()?,
        )?),
    };
    let adf_kind = cfg.get("screen.adf_regression").map_or(Ok(RegressionKind::Constant), RegressionKind::parse)?;

    let store = load_store(cfg)?;
    for ((x, _), (y, _)) in &pairs {
        require_series(&store, x)?;
        require_series(&store, y)?;
    }

    let mut jobs = Vec::new();
    for (x, y) in &pairs {
        for &lead in &leads {
            for &window in &windows {
                jobs.push(ScreenJob {
                    x: x.clone(),
                    y: y.clone(),
                    lead,
                    window,
                });
            }
        }
    }
    let blocks = jobs
        .par_iter()
        .map(|job| {
            let xs = &store[&job.x.0];
            let ys = &store[&job.y.0];
            let mut rows = vec![screen_row(xs, ys, job.x.1, job.y.1, job.lead, job.window, adf_kind)?];
            if let Some(b) = &buckets {
                rows.extend(screen_rows_bucketed(xs, ys, job.x.1, job.y.1, job.lead, job.window, b, adf_kind)?);
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<_> = blocks.into_iter().flatten().collect();
    println!("{} screening rows", rows.len());
    rep.csv("screen.csv", |w| write_screen_csv(w, &rows))
}

#[derive(Serialize)]
struct AdfEntry {
    series: String,
    transform: String,
    #[serde(flatten)]
    result: lgdkit::screen::AdfResult,
}

pub fn adf(cfg: &RunConfig, rep: &mut Reporter) -> Result<()> {
    let targets = cfg
        .list("adf.series")
        .iter()
        .map(|s| series_ref(s))
        .collect::<Result<Vec<_>>>()?;
    if targets.is_empty() {
        return Err(Error::Config("`adf.series` is empty".into()));
    }
    let win = cfg.get("adf.window").map_or(Ok(MonthWindow::unbounded()), MonthWindow::parse)?;
    let kind = cfg.get("adf.regression").map_or(Ok(RegressionKind::Constant), RegressionKind::parse)?;
    let lags = match (cfg.parsed::<usize>("adf.max_lag")?, cfg.parsed::<usize>("adf.lags")?) {
        (Some(_), Some(_)) => return Err(Error::Config("set at most one of `adf.max_lag` and `adf.lags`".into())),
        (Some(m), None) => LagOrder::Max(m),
        (None, Some(l)) => LagOrder::Fixed(l),
        (None, None) => LagOrder::Auto,
    };
    let store = load_store(cfg)?;
    for (name, _) in &targets {
        require_series(&store, name)?;
    }
    let entries = targets
        .par_iter()
        .map(|(name, spec)| {
            let t = apply_transform(&store[name], *spec)?;
            let t = window(&t, win.start, win.end)?;
            Ok(AdfEntry {
                series: name.clone(),
                transform: spec.to_string(),
                result: adf_test(&t, kind, lags)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for e in &entries {
        println!(
            "{}.{}\tstat {:.4}\tp {:.4}\tlags {}",
            e.series, e.transform, e.result.test_statistic, e.result.p_value, e.result.lags_used
        );
    }
    rep.json("adf.json", &entries)
}

#[derive(Serialize)]
struct FitEntry {
    name: String,
    columns: Vec<String>,
    report: lgdkit::tobit::TobitReport,
}

#[derive(Serialize)]
struct FitSummary {
    n_loans: usize,
    models: Vec<FitEntry>,
    bic_ranking: Vec<String>,
    quarterly_model: String,
    downturn: Option<Vec<lgdkit::validation::DownturnRank>>,
}

fn model_names(cfg: &RunConfig, key: &str) -> Vec<String> {
    let listed = cfg.list(key);
    if listed.is_empty() {
        cfg.section("model").map(|(k, _)| k.to_string()).collect()
    } else {
        listed
    }
}

pub fn fit(cfg: &RunConfig, rep: &mut Reporter) -> Result<()> {
    let names = model_names(cfg, "fit.models");
    if names.is_empty() {
        return Err(Error::Config("no models defined; add `model.NAME = col, ...`".into()));
    }
    let form = censored_form(cfg, "fit.censored_mean")?;
    let downturn_q = cfg.get("fit.downturn_quarter").map(Quarter::parse).transpose()?;
    let records = load_loans(cfg)?;
    for name in &names {
        model_columns(cfg, name, &records)?;
    }
    let fits = names
        .par_iter()
        .map(|name| Ok((name.clone(), tobit_for(cfg, name, &records)?)))
        .collect::<Result<Vec<_>>>()?;
    let ranked = rank_by_bic(&fits)?;
    let best = &ranked[0];
    let quarterly_name = cfg.get("fit.quarterly_model").unwrap_or(&best.0).to_string();
    let quarterly_fit = &fits
        .iter()
        .find(|(n, _)| *n == quarterly_name)
        .ok_or_else(|| Error::Config(format!("`fit.quarterly_model` names unknown model `{quarterly_name}`")))?
        .1;
    let quarterly = quarterly_mean_fit(&records, quarterly_fit, form)?;
    let downturn = downturn_q
        .map(|q| downturn_underestimation_rank(&fits, &records, q, form))
        .transpose()?;

    for (name, f) in &ranked {
        println!("{name}\tBIC {:.3}\tlogL {:.3}\tsigma {:.4}", f.bic, f.log_likelihood, f.sigma);
    }
    let summary = FitSummary {
        n_loans: records.len(),
        models: fits
            .iter()
            .map(|(name, f)| FitEntry {
                name: name.clone(),
                columns: cfg.list(&format!("model.{name}")),
                report: f.report(),
            })
            .collect(),
        bic_ranking: ranked.iter().map(|(n, _)| n.clone()).collect(),
        quarterly_model: quarterly_name,
        downturn,
    };
    rep.json("fit.json", &summary)?;
    rep.csv("quarterly.csv", |w| write_quarterly_csv(w, &quarterly))
}

pub fn cv(cfg: &RunConfig, rep: &mut Reporter) -> Result<()> {
    let name = cfg.require("cv.model")?.to_string();
    let scheme = cfg.get("cv.scheme").unwrap_or("kfold");
    let records = load_loans(cfg)?;
    let columns = model_columns(cfg, &name, &records)?;
    let plan = match scheme {
        "kfold" => FoldPlan::k_fold(records.len(), cfg.parsed_or("cv.k", 10usize)?, cfg.require_seed()?)?,
        "leave_one_year" => FoldPlan::leave_one_year(&records)?,
        other => return Err(Error::Config(format!("unknown CV scheme `{other}`"))),
    };
    let threshold = cfg.parsed_or("cv.threshold_se", plan.default_threshold_se())?;
    let (x, y) = design_from_records(&records, &columns, true)?;
    let report = run_stability_cv(&x, y.as_slice(), &plan, threshold, TobitOptions::default())?;
    println!(
        "{} folds, {} flags, {} degenerate",
        plan.n_folds(),
        report.n_flags(),
        report.degenerate_folds().len()
    );
    rep.csv("cv.csv", |w| report.write_csv(w))?;
    rep.json("cv.json", &report)
}

fn mars_options(cfg: &RunConfig) -> Result<MarsOptions> {
    let d = MarsOptions::default();
    Ok(MarsOptions {
        max_terms: cfg.parsed_or("mars.max_terms", d.max_terms)?,
        max_degree: cfg.parsed_or("mars.max_degree", d.max_degree)?,
        penalty_d: cfg.parsed_or("mars.penalty", d.penalty_d)?,
        minspan: cfg.parsed("mars.minspan")?.or(d.minspan),
        endspan: cfg.parsed("mars.endspan")?.or(d.endspan),
        allow_self_product: cfg.flag("mars.self_product")?,
        forward_threshold: cfg.parsed_or("mars.threshold", d.forward_threshold)?,
    })
}

fn mars_design(cfg: &RunConfig, key: &str, records: &[LoanDefaultRecord]) -> Result<(DesignMatrix, Vec<f64>)> {
    let name = cfg.require(key)?.to_string();
    let columns = model_columns(cfg, &name, records)?;
    let (x, y) = design_from_records(records, &columns, false)?;
    Ok((x, y.iter().copied().collect()))
}

#[derive(Serialize)]
struct MarsSummary {
    model: String,
    options: MarsOptions,
    n_obs: usize,
    n_knots: usize,
    fit: lgdkit::mars::MarsDump,
}

pub fn mars(cfg: &RunConfig, rep: &mut Reporter) -> Result<()> {
    let options = mars_options(cfg)?;
    let records = load_loans(cfg)?;
    let (x, y) = mars_design(cfg, "mars.model", &records)?;
    let model = mars_fit(&x, &y, &options)?;
    println!("{model}");
    rep.json(
        "mars.json",
        &MarsSummary {
            model: cfg.require("mars.model")?.to_string(),
            options,
            n_obs: y.len(),
            n_knots: model.n_knots(),
            fit: model.dump(),
        },
    )
}

#[derive(Serialize)]
struct Prediction {
    model: String,
    kind: String,
    x: Vec<f64>,
    prediction: f64,
}

pub fn predict(cfg: &RunConfig, rep: &mut Reporter) -> Result<()> {
    let name = cfg.require("predict.model")?.to_string();
    let kind = cfg.get("predict.kind").unwrap_or("tobit").to_string();
    let xs = cfg
        .list("predict.x")
        .iter()
        .map(|v| v.parse::<f64>().map_err(|_| Error::Config(format!("`predict.x`: bad value `{v}`"))))
        .collect::<Result<Vec<f64>>>()?;
    let width = cfg.list(&format!("model.{name}")).len();
    if cfg.get(&format!("model.{name}")).is_some() && xs.len() != width {
        return Err(Error::Shape {
            expected: width,
            got: xs.len(),
        });
    }
    let records = load_loans(cfg)?;
    let prediction = match kind.as_str() {
        "tobit" => {
            let fit = tobit_for(cfg, &name, &records)?;
            let row: Vec<f64> = std::iter::once(1.0).chain(xs.iter().copied()).collect();
            predict_censored_mean(&fit, &row, censored_form(cfg, "predict.censored_mean")?)?
        }
        "mars" => {
            let (x, y) = mars_design(cfg, "predict.model", &records)?;
            let model = mars_fit(&x, &y, &mars_options(cfg)?)?;
            mars_predict(&model, &xs)?
        }
        other => return Err(Error::Config(format!("unknown prediction kind `{other}`"))),
    };
    println!("{prediction}");
    rep.json(
        "predict.json",
        &Prediction {
            model: name,
            kind,
            x: xs,
            prediction,
        },
    )
}

#[derive(Serialize)]
struct SimulationSummary {
    n_loans: usize,
    n_censored: usize,
    censored_share: f64,
    generator: GeneratorConfig,
}

pub fn simulate(cfg: &RunConfig, rep: &mut Reporter) -> Result<()> {
    let (gen, records) = generate(cfg)?;
    let observed = lgdkit::lgd::observed_lgd(&records)?;
    let n_censored = observed.iter().filter(|v| **v == 0.0).count();
    println!("{} loans, {} censored at zero", records.len(), n_censored);
    rep.csv("loans.csv", |w| write_loan_csv(w, &records))?;
    rep.json(
        "simulate.json",
        &SimulationSummary {
            n_loans: records.len(),
            n_censored,
            censored_share: n_censored as f64 / records.len().max(1) as f64,
            generator: gen,
        },
    )
}
