//! Loss-given-default modelling toolkit: monthly macro-series transforms and
//! screening, LGD accounting, Tobit-I regression, MARS and stability
//! cross-validation.

pub mod error;
pub mod lgd;
mod linalg;
pub mod mars;
pub mod normal;
pub mod screen;
pub mod series;
pub mod tobit;
pub mod validation;

pub use error::{Error, ErrorClass, Result};
pub use mars::{MarsModel, MarsOptions};
pub use series::{MonthKey, MonthWindow, MonthlySeries, Quarter, TransformKind, TransformSpec};
pub use tobit::{DesignMatrix, TobitFit};
