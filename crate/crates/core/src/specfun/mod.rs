//! Special functions on H^n: Plancherel density, spherical functions and the
//! coefficient functions F_k^m of iterated radial derivatives of the
//! Gaussian phase.

pub mod gamma;
pub mod hypexpr;
pub mod fk;
pub mod spherical;
pub mod tables;

use std::f64::consts::PI;

use crate::hypgeo::Dimension;

pub use fk::{fk_bound_check, fk_table, FkBoundReport, FkBoundRow, FkTable};
pub use spherical::{
    spherical_function, spherical_function_integral, spherical_function_origin,
    spherical_normalization,
};
pub use tables::{harish_chandra_c, spherical_row, spherical_table};

/// Plancherel density (1/(2(2π)^n)) |Γ(iλ+ρ)|²/|Γ(iλ)|².
pub fn plancherel_density(dim: Dimension, lambda: f64) -> f64 {
    gamma::gamma_ratio_sq(dim, lambda) / (2.0 * (2.0 * PI).powi(dim.n() as i32))
}
