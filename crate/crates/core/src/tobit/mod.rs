//! Tobit-I regression, left-censored at zero, estimated by maximum likelihood
//! in Olsen's parametrization `gamma = beta / sigma`, `theta = 1 / sigma`, where
//! the negative log-likelihood is convex.

mod design;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dependent_columns, ols};
use crate::normal;

pub use self::design::{design_from_records, DesignMatrix, INTERCEPT};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TobitOptions {
    /// Stop once the largest per-observation gradient component is below this.
    pub gradient_tol: f64,
    pub max_iter: usize,
}

impl Default for TobitOptions {
    fn default() -> Self {
        Self {
            gradient_tol: 1e-8,
            max_iter: 500,
        }
    }
}

fn check_inputs(x: &DesignMatrix, y: &[f64]) -> Result<()> {
    if y.len() != x.nrows() {
        return Err(Error::Shape {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::DegenerateData(format!(
            "response row {i} is {}; censored responses must be finite and >= 0",
            y[i]
        )));
    }
    Ok(())
}

/// Olsen-parametrized negative log-likelihood.
///
/// Rows with `y = 0` contribute `-ln Phi(-x'gamma)`, the rest
/// `-ln theta - ln phi(theta y - x'gamma)`.
pub fn tobit_negative_log_likelihood(gamma: &[f64], theta: f64, x: &DesignMatrix, y: &[f64]) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::Domain(format!("theta must be positive, got {theta}")));
    }
    if gamma.len() != x.ncols() {
        return Err(Error::Shape {
            expected: x.ncols(),
            got: gamma.len(),
        });
    }
    check_inputs(x, y)?;
    let params = DVector::from_column_slice(gamma).push(theta);
    Ok(Objective::new(x, y).value(&params))
}

/// Gradient of [`tobit_negative_log_likelihood`] with respect to `(gamma, theta)`.
pub fn tobit_gradient(gamma: &[f64], theta: f64, x: &DesignMatrix, y: &[f64]) -> Result<Vec<f64>> {
    if !(theta > 0.0) {
        return Err(Error::Domain(format!("theta must be positive, got {theta}")));
    }
    if gamma.len() != x.ncols() {
        return Err(Error::Shape {
            expected: x.ncols(),
            got: gamma.len(),
        });
    }
    check_inputs(x, y)?;
    let params = DVector::from_column_slice(gamma).push(theta);
    Ok(Objective::new(x, y).gradient(&params).iter().copied().collect())
}

struct Objective<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [f64],
    p: usize,
}

impl<'a> Objective<'a> {
    fn new(x: &'a DesignMatrix, y: &'a [f64]) -> Self {
        Self {
            x: x.matrix(),
            y,
            p: x.ncols(),
        }
    }

    fn eta(&self, params: &DVector<f64>) -> DVector<f64> {
        self.x * params.rows(0, self.p)
    }

    fn value(&self, params: &DVector<f64>) -> f64 {
        let theta = params[self.p];
        let eta = self.eta(params);
        let ln_theta = theta.ln();
        self.y
            .iter()
            .zip(eta.iter())
            .map(|(&y, &e)| {
                if y == 0.0 {
                    -normal::ln_cdf(-e)
                } else {
                    let r = theta * y - e;
                    -ln_theta + 0.5 * r * r + LN_SQRT_2PI
                }
            })
            .sum()
    }

    fn gradient(&self, params: &DVector<f64>) -> DVector<f64> {
        let p = self.p;
        let theta = params[p];
        let eta = self.eta(params);
        // d(NLL)/d(eta_i), accumulated into X' w
        let mut w = DVector::zeros(self.y.len());
        let mut g_theta = 0.0;
        for (i, (&y, &e)) in self.y.iter().zip(eta.iter()).enumerate() {
            if y == 0.0 {
                w[i] = normal::pdf_over_cdf(-e);
            } else {
                let r = theta * y - e;
                w[i] = -r;
                g_theta += -1.0 / theta + r * y;
            }
        }
        let g_gamma = self.x.tr_mul(&w);
        let mut g = DVector::zeros(p + 1);
        g.rows_mut(0, p).copy_from(&g_gamma);
        g[p] = g_theta;
        g
    }

    fn hessian(&self, params: &DVector<f64>) -> DMatrix<f64> {
        let p = self.p;
        let theta = params[p];
        let eta = self.eta(params);
        let n = self.y.len();
        let mut curv = DVector::zeros(n);
        let mut cross = DVector::zeros(n);
        let mut h_tt = 0.0;
        for (i, (&y, &e)) in self.y.iter().zip(eta.iter()).enumerate() {
            if y == 0.0 {
                let a = -e;
                let h = normal::pdf_over_cdf(a);
                curv[i] = h * (a + h);
            } else {
                curv[i] = 1.0;
                cross[i] = -y;
                h_tt += 1.0 / (theta * theta) + y * y;
            }
        }
        let mut weighted = self.x.clone();
        for mut col in weighted.column_iter_mut() {
            col.component_mul_assign(&curv);
        }
        let h_gg = self.x.tr_mul(&weighted);
        let h_gt = self.x.tr_mul(&cross);
        let mut hess = DMatrix::zeros(p + 1, p + 1);
        hess.view_mut((0, 0), (p, p)).copy_from(&h_gg);
        hess.view_mut((0, p), (p, 1)).copy_from(&h_gt);
        hess.view_mut((p, 0), (1, p)).copy_from(&h_gt.transpose());
        hess[(p, p)] = h_tt;
        hess
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TobitFit {
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    pub sigma: f64,
    /// Standard errors of `beta` followed by that of `sigma`.
    pub std_errors: Vec<f64>,
    pub log_likelihood: f64,
    pub n_obs: usize,
    pub n_censored: usize,
    pub bic: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Hash of the response vector; fits are comparable only when it matches.
    pub sample_fingerprint: u64,
}

impl TobitFit {
    pub fn n_params(&self) -> usize {
        self.beta.len() + 1
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.beta[i])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.std_errors[i])
    }

    pub fn sigma_std_error(&self) -> f64 {
        self.std_errors[self.beta.len()]
    }

    pub fn z_values(&self) -> Vec<f64> {
        self.beta.iter().zip(&self.std_errors).map(|(b, s)| b / s).collect()
    }

    /// Two-sided normal p-values of the coefficient z statistics.
    pub fn p_values(&self) -> Vec<f64> {
        self.z_values().iter().map(|z| 2.0 * normal::cdf(-z.abs())).collect()
    }

    /// Linear index `x'beta`.
    pub fn linear_predictor(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.beta.len() {
            return Err(Error::Shape {
                expected: self.beta.len(),
                got: x.len(),
            });
        }
        Ok(x.iter().zip(&self.beta).map(|(a, b)| a * b).sum())
    }

    pub fn report(&self) -> TobitReport {
        let z = self.z_values();
        let pv = self.p_values();
        TobitReport {
            coefficients: (0..self.beta.len())
                .map(|i| CoefficientRow {
                    name: self.names[i].clone(),
                    estimate: self.beta[i],
                    std_error: self.std_errors[i],
                    z_value: z[i],
                    p_value: pv[i],
                })
                .collect(),
            sigma: self.sigma,
            sigma_std_error: self.sigma_std_error(),
            log_likelihood: self.log_likelihood,
            bic: self.bic,
            n_obs: self.n_obs,
            n_censored: self.n_censored,
            converged: self.converged,
            iterations: self.iterations,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoefficientRow {
    pub name: String,
    #[serde(rename = "Estimate")]
    pub estimate: f64,
    #[serde(rename = "Standard Error")]
    pub std_error: f64,
    #[serde(rename = "z value")]
    pub z_value: f64,
    #[serde(rename = "approx P>|z|")]
    pub p_value: f64,
}

/// Serializable coefficient table and fit statistics.
#[derive(Debug, Clone, Serialize)]
pub struct TobitReport {
    pub coefficients: Vec<CoefficientRow>,
    pub sigma: f64,
    pub sigma_std_error: f64,
    pub log_likelihood: f64,
    pub bic: f64,
    pub n_obs: usize,
    pub n_censored: usize,
    pub converged: bool,
    pub iterations: usize,
}

/// FNV-1a over the bit patterns of `y`.
pub fn sample_fingerprint(y: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in y {
        for b in v.to_bits().to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

fn starting_point(x: &DesignMatrix, y: &[f64]) -> DVector<f64> {
    let p = x.ncols();
    let uncensored: Vec<usize> = (0..y.len()).filter(|&i| y[i] > 0.0).collect();
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
    let fallback = || {
        let mut v = DVector::zeros(p + 1);
        v[p] = 1.0 / sd;
        v
    };
    if uncensored.len() <= p {
        return fallback();
    }
    let xs = x.matrix().select_rows(&uncensored);
    let ys = DVector::from_iterator(uncensored.len(), uncensored.iter().map(|&i| y[i]));
    match ols(&xs, &ys) {
        Ok(fit) => {
            let dof = (uncensored.len() - p) as f64;
            // a perfect fit on the uncensored rows would start at sigma = 0
            let sigma = (fit.rss / dof).sqrt().max(1e-3 * sd);
            if !sigma.is_finite() {
                return fallback();
            }
            let mut v = DVector::zeros(p + 1);
            v.rows_mut(0, p).copy_from(&(fit.beta / sigma));
            v[p] = 1.0 / sigma;
            v
        }
        Err(_) => fallback(),
    }
}

fn inverse_spd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.inverse())
}

/// Maximum-likelihood Tobit-I fit by BFGS with backtracking line search,
/// started from OLS on the uncensored rows and finished with Newton steps.
pub fn fit_tobit(x: &DesignMatrix, y: &[f64], options: TobitOptions) -> Result<TobitFit> {
    check_inputs(x, y)?;
    let n = y.len();
    let p = x.ncols();
    let n_censored = y.iter().filter(|v| **v == 0.0).count();
    if n_censored == n {
        return Err(Error::DegenerateData("every observation is censored".into()));
    }
    let dependent = dependent_columns(x.matrix());
    if !dependent.is_empty() {
        return Err(Error::RankDeficient(
            dependent.iter().map(|&j| x.names()[j].clone()).collect(),
        ));
    }

    let obj = Objective::new(x, y);
    let scale = n as f64;
    let small = |g: &DVector<f64>| g.amax() / scale < options.gradient_tol;

    let mut z = starting_point(x, y);
    let mut f = obj.value(&z);
    let mut g = obj.gradient(&z);
    let identity = || DMatrix::<f64>::identity(p + 1, p + 1);
    let mut h_inv = inverse_spd(&obj.hessian(&z)).unwrap_or_else(identity);
    let mut iterations = 0;
    let mut just_reset = true;

    while iterations < options.max_iter && !small(&g) {
        let mut d = -(&h_inv * &g);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            h_inv = inverse_spd(&obj.hessian(&z)).unwrap_or_else(identity);
            d = -(&h_inv * &g);
            slope = g.dot(&d);
            if !(slope < 0.0) {
                d = -g.clone();
                slope = g.dot(&d);
            }
        }
        let mut step = 1.0;
        let accepted = loop {
            let cand = &z + &d * step;
            if cand[p] > 0.0 {
                let fc = obj.value(&cand);
                if fc.is_finite() && fc <= f + 1e-4 * step * slope {
                    break Some((cand, fc));
                }
            }
            step *= 0.5;
            if step < 1e-16 {
                break None;
            }
        };
        iterations += 1;
        match accepted {
            Some((z_new, f_new)) => {
                let g_new = obj.gradient(&z_new);
                let s = &z_new - &z;
                let yv = &g_new - &g;
                let sy = s.dot(&yv);
                if sy > 1e-12 * s.norm() * yv.norm() {
                    let rho = 1.0 / sy;
                    let hy = &h_inv * &yv;
                    let yhy = yv.dot(&hy);
                    h_inv += (&s * s.transpose()) * (rho * rho * yhy + rho) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
                }
                z = z_new;
                f = f_new;
                g = g_new;
                just_reset = false;
            }
            None if !just_reset => {
                h_inv = inverse_spd(&obj.hessian(&z)).unwrap_or_else(identity);
                just_reset = true;
            }
            None => break,
        }
    }

    // Newton polish: the objective is convex and smooth, so a few full steps
    // from a near-optimum drive the gradient to rounding level
    for _ in 0..3 {
        let hess = obj.hessian(&z);
        let Some(chol) = hess.cholesky() else { break };
        let cand = &z - chol.solve(&g);
        if !(cand[p] > 0.0) {
            break;
        }
        let fc = obj.value(&cand);
        let gc = obj.gradient(&cand);
        if fc.is_finite() && fc <= f + 1e-12 * f.abs().max(1.0) && gc.amax() <= g.amax() {
            z = cand;
            f = fc;
            g = gc;
        } else {
            break;
        }
    }
    let converged = small(&g);

    let hess = obj.hessian(&z);
    let cov = inverse_spd(&hess).ok_or_else(|| {
        Error::RankDeficient(x.names().to_vec())
    })?;
    let theta = z[p];
    let gamma = z.rows(0, p).into_owned();
    // delta method from (gamma, theta) to (beta, sigma)
    let mut jac = DMatrix::zeros(p + 1, p + 1);
    for i in 0..p {
        jac[(i, i)] = 1.0 / theta;
        jac[(i, p)] = -gamma[i] / (theta * theta);
    }
    jac[(p, p)] = -1.0 / (theta * theta);
    let cov_bs = &jac * cov * jac.transpose();
    let std_errors: Vec<f64> = (0..=p).map(|i| cov_bs[(i, i)].max(0.0).sqrt()).collect();

    let log_likelihood = -f;
    Ok(TobitFit {
        names: x.names().to_vec(),
        beta: gamma.iter().map(|g| g / theta).collect(),
        sigma: 1.0 / theta,
        std_errors,
        log_likelihood,
        n_obs: n,
        n_censored,
        bic: -2.0 * log_likelihood + (p + 1) as f64 * (n as f64).ln(),
        converged,
        iterations,
        sample_fingerprint: sample_fingerprint(y),
    })
}

/// How the censored mean evaluates the normal terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CensoredMeanForm {
    /// `Phi(mu/sigma) mu + sigma phi(mu/sigma)`.
    #[default]
    Textbook,
    /// `Phi(mu) mu + sigma phi(mu)`, with the normal terms evaluated at the
    /// unscaled index.
    Unscaled,
}

impl CensoredMeanForm {
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "textbook" => Ok(Self::Textbook),
            "unscaled" => Ok(Self::Unscaled),
            other => Err(Error::Config(format!("unknown censored-mean form `{other}`"))),
        }
    }
}

/// `E[max(Y, 0)]` for `Y ~ N(mu, sigma^2)`.
pub fn censored_mean(mu: f64, sigma: f64, form: CensoredMeanForm) -> f64 {
    match form {
        CensoredMeanForm::Textbook => sigma * normal::positive_part_mean(mu / sigma),
        CensoredMeanForm::Unscaled => normal::cdf(mu) * mu + sigma * normal::pdf(mu),
    }
}

pub fn predict_censored_mean(fit: &TobitFit, x: &[f64], form: CensoredMeanForm) -> Result<f64> {
    let mu = fit.linear_predictor(x)?;
    Ok(censored_mean(mu, fit.sigma, form))
}

/// Sorts named fits by BIC, then parameter count, then name.
///
/// All fits must come from the same response sample.
pub fn rank_by_bic(fits: &[(String, TobitFit)]) -> Result<Vec<(String, TobitFit)>> {
    if let Some((_, first)) = fits.first() {
        for (name, fit) in fits {
            if fit.n_obs != first.n_obs || fit.sample_fingerprint != first.sample_fingerprint {
                return Err(Error::NotComparable(format!(
                    "fit `{name}` was estimated on a different sample"
                )));
            }
        }
    }
    let mut out = fits.to_vec();
    out.sort_by(|(na, a), (nb, b)| {
        a.bic
            .total_cmp(&b.bic)
            .then(a.n_params().cmp(&b.n_params()))
            .then_with(|| na.cmp(nb))
    });
    Ok(out)
}
