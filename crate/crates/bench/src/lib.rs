//! Shared inputs for the benchmarks: the checked-in CPI export and
//! synthetic portfolios drawn on top of it.

use std::path::Path;

use lgdkit::lgd::{generate_synthetic_portfolio, synthetic_hpi_series, GeneratorConfig, LoanDefaultRecord, MevPanel};
use lgdkit::series::read_series_csv;
use lgdkit::MonthlySeries;

pub fn cpi() -> MonthlySeries {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/CPIAUCSL.csv");
    read_series_csv(&path).expect("CPI fixture")
}

pub fn panel(seed: u64) -> MevPanel {
    MevPanel::new()
        .with("CPI", cpi())
        .with("HPI", synthetic_hpi_series(1999, 2022, seed))
}

pub fn portfolio(n_loans: usize, seed: u64) -> Vec<LoanDefaultRecord> {
    let config = GeneratorConfig {
        n_loans,
        seed,
        ..GeneratorConfig::default()
    };
    generate_synthetic_portfolio(&config, &panel(seed)).expect("portfolio")
}
