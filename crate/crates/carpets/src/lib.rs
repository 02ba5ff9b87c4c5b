//! Exact models of self-affine carpets (Gatzouras-Lalley, Barański, and the
//! homogeneous uniform-fibre special case) together with the numerical
//! machinery built on top of them: Hausdorff dimension via the variational
//! formulas, log-ratio rationality classification, inner uniform-fibre
//! subsystems, cylinder covers and approximate squares, projected box
//! counting, maximal separated subfamilies with their energy/density
//! diagnostics, and a tree-based lower-bound certifier for projections.
//!
//! All carpet geometry is exact rational; floating point enters only in
//! optimization, box counting, and the projection charts.

pub mod carpet;
pub mod dimension;
pub mod projection;
pub mod rational;
pub mod rationality;
pub mod separated;
pub mod subsystem;
pub mod symbolic;
pub mod treecert;

pub use carpet::{
    AffineMap, BaranskiCarpet, Carpet, Cell, GLCarpet, Row, UniformFibreCarpet, ValidationReport,
    Violation,
};
pub use rational::Rational;

/// Errors shared by every module in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid carpet: {0}")]
    InvalidCarpet(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
}

pub type Result<T> = std::result::Result<T, Error>;
