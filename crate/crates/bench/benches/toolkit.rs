use criterion::{criterion_group, criterion_main, Criterion};
use lgdkit::lgd::GeneratorConfig;
use lgdkit::mars::mars_fit;
use lgdkit::screen::{adf_test, screen_row, transform_correlation_matrix, LagOrder, RegressionKind};
use lgdkit::tobit::{design_from_records, fit_tobit, TobitOptions};
use lgdkit::{MarsOptions, MonthWindow, TransformSpec};
use lgdkit_bench::{cpi, panel, portfolio};

const COLUMNS: [&str; 2] = ["CPI.LDIFF6M", "HPI.LDIFF6M"];

fn columns() -> Vec<String> {
    COLUMNS.iter().map(|c| c.to_string()).collect()
}

fn screening(c: &mut Criterion) {
    let cpi = cpi();
    let window = MonthWindow::parse("1952-01..2022-12").unwrap();
    let yoy = TransformSpec::rdiff(12);
    c.bench_function("screen_row cpi yoy lead 12", |b| {
        b.iter(|| screen_row(&cpi, &cpi, yoy, yoy, 12, window, RegressionKind::Constant).unwrap())
    });
    let specs: Vec<TransformSpec> = [1, 3, 12]
        .into_iter()
        .flat_map(|k| [TransformSpec::rdiff(k), TransformSpec::ldiff(k)])
        .collect();
    c.bench_function("transform matrix 6x6", |b| {
        b.iter(|| transform_correlation_matrix(&cpi, &specs, window).unwrap())
    });
    let inflation = lgdkit::series::apply_transform(&cpi, yoy).unwrap();
    c.bench_function("adf auto lag", |b| {
        b.iter(|| adf_test(&inflation, RegressionKind::Constant, LagOrder::Auto).unwrap())
    });
}

fn generator(c: &mut Criterion) {
    let panel = panel(3);
    let config = GeneratorConfig {
        n_loans: 4000,
        seed: 3,
        ..GeneratorConfig::default()
    };
    c.bench_function("generate 4000 loans", |b| {
        b.iter(|| lgdkit::lgd::generate_synthetic_portfolio(&config, &panel).unwrap())
    });
}

fn tobit(c: &mut Criterion) {
    let records = portfolio(4000, 5);
    let (x, y) = design_from_records(&records, &columns(), true).unwrap();
    c.bench_function("tobit fit n=4000 p=3", |b| {
        b.iter(|| fit_tobit(&x, y.as_slice(), TobitOptions::default()).unwrap())
    });
}

fn mars(c: &mut Criterion) {
    let records = portfolio(4000, 7);
    let (x, y) = design_from_records(&records, &columns(), false).unwrap();
    let y: Vec<f64> = y.iter().copied().collect();
    let mut group = c.benchmark_group("mars");
    group.sample_size(20);
    for degree in [1, 2] {
        let options = MarsOptions {
            max_degree: degree,
            ..MarsOptions::default()
        };
        group.bench_function(format!("fit n=4000 degree {degree}"), |b| {
            b.iter(|| mars_fit(&x, &y, &options).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, screening, generator, tobit, mars);
criterion_main!(benches);
