//! Multivariate adaptive regression splines: greedy forward growth with
//! mirrored hinge pairs, then backward elimination scored by generalized
//! cross-validation.

mod forward;
mod prune;

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tobit::DesignMatrix;

pub use self::forward::forward_pass;
pub use self::prune::{backward_prune, gcv};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    /// `max(0, x - t)`
    Plus,
    /// `max(0, t - x)`
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Factor {
    Linear { var: usize },
    Hinge { var: usize, direction: Direction, knot: f64 },
}

impl Factor {
    pub fn var(&self) -> usize {
        match *self {
            Factor::Linear { var } | Factor::Hinge { var, .. } => var,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.apply(x[self.var()])
    }

    /// Value of the factor when its variable equals `value`.
    pub fn apply(&self, value: f64) -> f64 {
        match *self {
            Factor::Linear { .. } => value,
            Factor::Hinge {
                direction: Direction::Plus,
                knot,
                ..
            } => (value - knot).max(0.0),
            Factor::Hinge {
                direction: Direction::Minus,
                knot,
                ..
            } => (knot - value).max(0.0),
        }
    }

    fn formula(&self, names: &[String]) -> String {
        match *self {
            Factor::Linear { var } => names[var].clone(),
            Factor::Hinge { var, direction, knot } => {
                let name = &names[var];
                match direction {
                    Direction::Plus if knot < 0.0 => format!("max(0, {name} + {:.4})", -knot),
                    Direction::Plus => format!("max(0, {name} - {knot:.4})"),
                    Direction::Minus => format!("max(0, {knot:.4} - {name})"),
                }
            }
        }
    }
}

/// Product of factors; the empty product is the intercept.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasisFunction {
    pub factors: Vec<Factor>,
}

impl BasisFunction {
    pub fn intercept() -> Self {
        Self { factors: Vec::new() }
    }

    pub fn degree(&self) -> usize {
        self.factors.len()
    }

    pub fn is_intercept(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn uses_var(&self, var: usize) -> bool {
        self.factors.iter().any(|f| f.var() == var)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.factors.iter().map(|f| f.eval(x)).product()
    }

    pub fn knots(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.factors.iter().filter_map(|f| match *f {
            Factor::Hinge { var, knot, .. } => Some((var, knot)),
            Factor::Linear { .. } => None,
        })
    }

    pub fn formula(&self, names: &[String]) -> String {
        if self.factors.is_empty() {
            return "(Intercept)".into();
        }
        self.factors.iter().map(|f| f.formula(names)).collect::<Vec<_>>().join(" * ")
    }

    fn column(&self, x: &DesignMatrix) -> Vec<f64> {
        let m = x.matrix();
        (0..m.nrows())
            .map(|i| self.factors.iter().map(|f| f.apply(m[(i, f.var())])).product())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarsOptions {
    /// Upper bound on basis functions, intercept included.
    pub max_terms: usize,
    pub max_degree: usize,
    /// GCV cost per knot.
    pub penalty_d: f64,
    /// Distinct-value stride between candidate knots; `None` means `ceil(n / 50)`.
    pub minspan: Option<usize>,
    /// Rows kept beyond the outermost knot on each side; `None` means
    /// `ceil(3 - log2(0.05 / p))` for `p` predictors.
    pub endspan: Option<usize>,
    /// Let a variable enter the same basis function twice (e.g. `x * x`).
    pub allow_self_product: bool,
    /// Forward growth stops when a step removes less than this share of the
    /// total sum of squares.
    pub forward_threshold: f64,
}

impl Default for MarsOptions {
    fn default() -> Self {
        Self {
            max_terms: 21,
            max_degree: 1,
            penalty_d: 3.0,
            minspan: None,
            endspan: None,
            allow_self_product: false,
            forward_threshold: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MarsModel {
    pub variable_names: Vec<String>,
    pub basis: Vec<BasisFunction>,
    pub coefficients: Vec<f64>,
    pub rss: f64,
    pub gcv: f64,
    pub max_degree: usize,
    pub penalty_d: f64,
    /// Residual sum of squares after each forward step, starting from the
    /// intercept-only fit. Empty for pruned models.
    pub forward_rss: Vec<f64>,
}

impl MarsModel {
    pub fn n_features(&self) -> usize {
        self.variable_names.len()
    }

    pub fn n_knots(&self) -> usize {
        count_knots(&self.basis)
    }

    /// Whether any non-intercept term involves `var`.
    pub fn uses_var(&self, var: usize) -> bool {
        self.basis.iter().any(|b| b.uses_var(var))
    }

    pub fn dump(&self) -> MarsDump {
        MarsDump {
            terms: self
                .basis
                .iter()
                .zip(&self.coefficients)
                .map(|(b, c)| MarsTerm {
                    formula: b.formula(&self.variable_names),
                    degree: b.degree(),
                    coefficient: *c,
                })
                .collect(),
            rss: self.rss,
            gcv: self.gcv,
            max_degree: self.max_degree,
            penalty_d: self.penalty_d,
        }
    }
}

impl fmt::Display for MarsModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for term in self.dump().terms {
            writeln!(f, "{:>14.6}  {}", term.coefficient, term.formula)?;
        }
        write!(f, "GCV {:.6e}", self.gcv)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MarsTerm {
    pub formula: String,
    pub degree: usize,
    pub coefficient: f64,
}

/// JSON-friendly model listing.
#[derive(Debug, Clone, Serialize)]
pub struct MarsDump {
    pub terms: Vec<MarsTerm>,
    pub rss: f64,
    pub gcv: f64,
    pub max_degree: usize,
    pub penalty_d: f64,
}

pub(crate) fn count_knots<'a>(basis: impl IntoIterator<Item = &'a BasisFunction>) -> usize {
    let mut knots: Vec<(usize, u64)> = basis
        .into_iter()
        .flat_map(|b| b.knots().map(|(v, k)| (v, k.to_bits())).collect::<Vec<_>>())
        .collect();
    knots.sort_unstable();
    knots.dedup();
    knots.len()
}

pub fn mars_predict(model: &MarsModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.n_features() {
        return Err(Error::Shape {
            expected: model.n_features(),
            got: x.len(),
        });
    }
    Ok(model.basis.iter().zip(&model.coefficients).map(|(b, c)| c * b.eval(x)).sum())
}

/// Forward pass followed by backward pruning.
pub fn mars_fit(x: &DesignMatrix, y: &[f64], options: &MarsOptions) -> Result<MarsModel> {
    let grown = forward_pass(x, y, options)?;
    backward_prune(&grown, x, y)
}

#[cfg(test)]
mod tests;
