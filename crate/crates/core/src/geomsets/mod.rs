//! Convex set representations and the set calculus used by the
//! reachability algorithms.
//!
//! Operations are free functions named after the operation they perform
//! (`zono_linmap`, `poly_minkdiff`, ...). Every set value is immutable once
//! built. Emptiness is something you ask a set about; it is never a
//! construction error.

mod ball;
mod conzono;
mod hpoly;
mod interval;
mod zonotope;

pub use ball::Ball;
pub use conzono::{
    cz_convhull, cz_halfspace_intersect, cz_linmap, cz_minksum, cz_poly_intersect, cz_support, intmat_mul_cz,
    ConstrainedZonotope,
};
pub use hpoly::{
    poly_box, poly_is_empty, poly_linmap_inv, poly_map_with_inverse, poly_minkdiff, poly_outer_minksum,
    poly_support, poly_to_cz, poly_to_cz_in_box, set_in_poly, HPolytope,
};
pub use interval::{Interval, IntervalMatrix};
pub use zonotope::{intmat_mul_zono, zono_linmap, zono_minksum, zono_reduce, zono_support, Zonotope};

use crate::lp::LpError;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Generators with Euclidean norm at or below this value are dropped by
/// the normalization pass.
pub const ZERO_GENERATOR_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SetError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("set is empty")]
    Empty,
    #[error("set is unbounded")]
    Unbounded,
    #[error("matrix is singular or too ill-conditioned to invert")]
    SingularMatrix,
    #[error("invalid set data: {0}")]
    Invalid(String),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Sets whose support function ρ(S, ℓ) = max_{x∈S} ℓᵀx can be evaluated.
///
/// Empty sets return −∞; sets unbounded in ℓ return +∞.
pub trait Support {
    fn dim(&self) -> usize;
    fn support(&self, dir: &DVector<f64>) -> Result<f64, SetError>;
}

pub(crate) fn check_dim(what: &str, expected: usize, got: usize) -> Result<(), SetError> {
    if expected == got {
        Ok(())
    } else {
        Err(SetError::Dimension(format!("{what}: expected {expected}, got {got}")))
    }
}

/// Horizontal concatenation of matrices with equal row counts.
pub fn hcat(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        debug_assert_eq!(b.nrows(), rows);
        out.view_mut((0, at), (rows, b.ncols())).copy_from(b);
        at += b.ncols();
    }
    out
}

/// Block-diagonal stacking `[a 0; 0 b]`.
pub fn blkdiag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    out
}

/// Vertical concatenation of vectors.
pub fn vcat(parts: &[&DVector<f64>]) -> DVector<f64> {
    let len: usize = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(len);
    let mut at = 0;
    for p in parts {
        out.rows_mut(at, p.len()).copy_from(p);
        at += p.len();
    }
    out
}

pub(crate) fn all_finite<'a>(values: impl IntoIterator<Item = &'a f64>) -> bool {
    values.into_iter().all(|v| v.is_finite())
}
