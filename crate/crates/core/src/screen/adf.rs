//! Augmented Dickey-Fuller unit-root test with MacKinnon response-surface
//! p-values and information-criterion lag selection.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::ols;
use crate::normal;
use crate::series::MonthlySeries;

/// Smallest regression sample accepted after lags are constructed.
pub const MIN_ADF_OBS: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionKind {
    None,
    Constant,
    ConstantAndTrend,
}

impl RegressionKind {
    fn deterministic_terms(self) -> usize {
        match self {
            RegressionKind::None => 0,
            RegressionKind::Constant => 1,
            RegressionKind::ConstantAndTrend => 2,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "n" | "none" => Ok(Self::None),
            "c" | "constant" => Ok(Self::Constant),
            "ct" | "constant_and_trend" | "trend" => Ok(Self::ConstantAndTrend),
            other => Err(Error::Config(format!("unknown ADF regression kind `{other}`"))),
        }
    }
}

/// How many lagged differences enter the test regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LagOrder {
    /// AIC search over `0..=floor(12 (n/100)^(1/4))`.
    Auto,
    /// AIC search over `0..=max`.
    Max(usize),
    /// Exactly this many lags, no search.
    Fixed(usize),
}

#[derive(Debug, Clone, Serialize)]
pub struct AdfResult {
    pub test_statistic: f64,
    pub p_value: f64,
    pub lags_used: usize,
    pub regression_kind: RegressionKind,
    pub n_obs: usize,
    /// 1%, 5%, 10% critical values for this sample size.
    pub critical_values: [f64; 3],
    pub aic: f64,
}

impl AdfResult {
    pub fn rejects_unit_root(&self, level: f64) -> bool {
        self.p_value < level
    }
}

pub fn schwert_max_lag(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

/// Runs the test on the longest run of consecutive months in `series`.
pub fn adf_test(series: &MonthlySeries, kind: RegressionKind, lags: LagOrder) -> Result<AdfResult> {
    let run = series.longest_contiguous_run();
    adf_test_values(&run, kind, lags).map_err(|e| match e {
        Error::ConstantSeries(_) => Error::ConstantSeries(series.name().to_string()),
        other => other,
    })
}

pub fn adf_test_values(values: &[f64], kind: RegressionKind, lags: LagOrder) -> Result<AdfResult> {
    let n = values.len();
    if n < MIN_ADF_OBS + 2 {
        return Err(Error::TooFewObservations {
            needed: MIN_ADF_OBS + 2,
            have: n,
        });
    }
    if values.iter().all(|v| *v == values[0]) {
        return Err(Error::ConstantSeries(String::new()));
    }
    let ntrend = kind.deterministic_terms();
    // leave room for the level, the deterministic terms and a residual
    let cap = (n / 2).saturating_sub(ntrend + 1);
    let (max_lag, search) = match lags {
        LagOrder::Auto => (schwert_max_lag(n).min(cap), true),
        LagOrder::Max(m) => (m.min(cap), true),
        LagOrder::Fixed(p) => (p, false),
    };
    if n < max_lag + 1 + MIN_ADF_OBS {
        return Err(Error::TooFewObservations {
            needed: max_lag + 1 + MIN_ADF_OBS,
            have: n,
        });
    }

    let diffs: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let chosen = if search {
        let mut best: Option<(f64, usize)> = None;
        for p in 0..=max_lag {
            let reg = adf_regression(values, &diffs, p, max_lag, kind)?;
            if best.is_none_or(|(aic, _)| reg.aic < aic) {
                best = Some((reg.aic, p));
            }
        }
        best.map(|(_, p)| p).unwrap_or(0)
    } else {
        max_lag
    };
    let reg = adf_regression(values, &diffs, chosen, chosen, kind)?;
    Ok(AdfResult {
        test_statistic: reg.t_stat,
        p_value: mackinnon_p_value(reg.t_stat, kind),
        lags_used: chosen,
        regression_kind: kind,
        n_obs: reg.nobs,
        critical_values: critical_values(kind, reg.nobs),
        aic: reg.aic,
    })
}

struct AdfRegression {
    t_stat: f64,
    aic: f64,
    nobs: usize,
}

/// Regresses `dx_t` on `x_{t-1}`, `dx_{t-1..t-p}` and deterministic terms, using
/// the sample that `max_lag` lags would leave so that AIC values are comparable.
fn adf_regression(
    levels: &[f64],
    diffs: &[f64],
    p: usize,
    max_lag: usize,
    kind: RegressionKind,
) -> Result<AdfRegression> {
    let nobs = diffs.len() - max_lag;
    let ncols = 1 + p + kind.deterministic_terms();
    if nobs < MIN_ADF_OBS || nobs <= ncols {
        return Err(Error::TooFewObservations {
            needed: MIN_ADF_OBS.max(ncols + 1),
            have: nobs,
        });
    }
    let mut x = DMatrix::zeros(nobs, ncols);
    let mut y = DVector::zeros(nobs);
    for row in 0..nobs {
        // diffs[t] = levels[t+1] - levels[t]
        let t = row + max_lag;
        y[row] = diffs[t];
        x[(row, 0)] = levels[t];
        for j in 1..=p {
            x[(row, j)] = diffs[t - j];
        }
        match kind {
            RegressionKind::None => {}
            RegressionKind::Constant => x[(row, p + 1)] = 1.0,
            RegressionKind::ConstantAndTrend => {
                x[(row, p + 1)] = 1.0;
                x[(row, p + 2)] = (row + 1) as f64;
            }
        }
    }
    let fit = ols(&x, &y).map_err(|e| match e {
        Error::RankDeficient(_) => Error::ConstantSeries(String::new()),
        other => other,
    })?;
    let dof = (nobs - ncols) as f64;
    let sigma2 = fit.rss / dof;
    let se = (sigma2 * fit.xtx_inv[(0, 0)]).sqrt();
    if !(se > 0.0 && se.is_finite()) {
        return Err(Error::ConstantSeries(String::new()));
    }
    let nf = nobs as f64;
    let llf = -0.5 * nf * ((2.0 * std::f64::consts::PI).ln() + (fit.rss / nf).ln() + 1.0);
    Ok(AdfRegression {
        t_stat: fit.beta[0] / se,
        aic: -2.0 * llf + 2.0 * ncols as f64,
        nobs,
    })
}

// MacKinnon (1994) response-surface coefficients for a single I(1) series,
// ascending powers of the statistic.
struct PValueSurface {
    max: f64,
    min: f64,
    star: f64,
    small: [f64; 3],
    large: [f64; 4],
}

const SURFACE_NONE: PValueSurface = PValueSurface {
    max: f64::INFINITY,
    min: -19.04,
    star: -1.04,
    small: [0.6344, 1.2378, 3.2496e-2],
    large: [0.4797, 9.3557e-1, -0.6999e-1, 3.3066e-2],
};

const SURFACE_CONSTANT: PValueSurface = PValueSurface {
    max: 2.74,
    min: -18.83,
    star: -1.61,
    small: [2.1659, 1.4412, 3.8269e-2],
    large: [1.7339, 9.3202e-1, -1.2745e-1, -1.0368e-2],
};

const SURFACE_TREND: PValueSurface = PValueSurface {
    max: 0.7,
    min: -16.18,
    star: -2.89,
    small: [3.2512, 1.6047, 4.9588e-2],
    large: [2.5261, 6.1654e-1, -3.7956e-1, -6.0285e-2],
};

fn surface(kind: RegressionKind) -> &'static PValueSurface {
    match kind {
        RegressionKind::None => &SURFACE_NONE,
        RegressionKind::Constant => &SURFACE_CONSTANT,
        RegressionKind::ConstantAndTrend => &SURFACE_TREND,
    }
}

fn poly(coefs: &[f64], x: f64) -> f64 {
    coefs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Approximate asymptotic p-value of an ADF t-statistic.
pub fn mackinnon_p_value(stat: f64, kind: RegressionKind) -> f64 {
    let s = surface(kind);
    if stat > s.max {
        return 1.0;
    }
    if stat < s.min {
        return 0.0;
    }
    let z = if stat <= s.star {
        poly(&s.small, stat)
    } else {
        poly(&s.large, stat)
    };
    normal::cdf(z)
}

// MacKinnon (2010) finite-sample critical values: b0 + b1/T + b2/T^2 + b3/T^3.
const CRIT_NONE: [[f64; 4]; 3] = [
    [-2.56574, -2.2358, -3.627, 0.0],
    [-1.941, -0.2686, -3.365, 31.223],
    [-1.61682, 0.2656, -2.714, 25.364],
];
const CRIT_CONSTANT: [[f64; 4]; 3] = [
    [-3.43035, -6.5393, -16.786, -79.433],
    [-2.86154, -2.8903, -4.234, -40.04],
    [-2.56677, -1.5384, -2.809, 0.0],
];
const CRIT_TREND: [[f64; 4]; 3] = [
    [-3.95877, -9.0531, -28.428, -134.155],
    [-3.41049, -4.3904, -9.036, -45.374],
    [-3.12705, -2.5856, -3.925, -22.38],
];

pub fn critical_values(kind: RegressionKind, nobs: usize) -> [f64; 3] {
    let table = match kind {
        RegressionKind::None => &CRIT_NONE,
        RegressionKind::Constant => &CRIT_CONSTANT,
        RegressionKind::ConstantAndTrend => &CRIT_TREND,
    };
    let inv = 1.0 / nobs as f64;
    table.map(|b| poly(&b, inv))
}
