//! Generalized truncated power series algebra.

mod analytic;
mod coef;
mod descriptor;
mod series;

pub use analytic::Func;
pub use coef::Coef;
pub use descriptor::Descriptor;
pub use series::{compose_many, CTpsa, Tpsa};
