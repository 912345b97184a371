//! Numerical dynamics of holomorphic correspondences on the Riemann sphere.
//!
//! A correspondence is stored as a chain of bihomogeneous polynomials with
//! multiplicities. The crate composes and iterates chains by resultant
//! elimination, solves fibers, estimates the invariant measure from backward
//! orbits, certifies attractor blocks on a two-chart grid and probes the
//! normality set with a spherical-derivative indicator.

// `!(x <= tol)` is used on purpose so that NaN counts as a failure.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod branches;
pub mod chain;
pub mod format;
pub mod measure;
pub mod poly;
pub mod relation;
pub mod roots;
pub mod sphere;

pub use chain::{Chain, Component, Correspondence, CorrespondenceSum, DegreePair, PolyGraph};
pub use poly::{BihomPoly, HomUnivariate};
pub use roots::RootSet;
pub use sphere::{AtlasGrid, Chart, ProjPoint, C64};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("fiber polynomial vanishes identically over {0:?}")]
    IdenticallyZeroFiber(ProjPoint),
    #[error("resultant is identically zero (shared component)")]
    DegenerateResultant,
    #[error("polynomial is identically zero")]
    ZeroPolynomial,
    #[error("chain invariant violated: {0}")]
    ChainInvariantViolation(String),
    #[error("size budget exceeded: need {required}, budget {budget}")]
    SizeBudgetExceeded { required: u128, budget: u128 },
    #[error("cell set is not an attractor block (offending cell {0})")]
    NotABlock(usize),
    #[error("omega iteration still shrinking after {iters} iterations ({last} -> {current} cells)")]
    NoFixpoint {
        iters: usize,
        last: usize,
        current: usize,
    },
    #[error("backward fiber of {0:?} escaped the block")]
    FiberEscapedBlock(ProjPoint),
    #[error("base point {point:?} within {distance:e} of critical value candidate {candidate:?}")]
    CriticalProximity {
        point: ProjPoint,
        candidate: ProjPoint,
        distance: f64,
    },
    #[error("root jump detected at step {step}: moved {moved:e}, bound {bound:e}")]
    RootJumpDetected { step: usize, moved: f64, bound: f64 },
    #[error("histograms live on different grids")]
    GridMismatch,
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
