//! Support-function projections onto coordinate planes.

use anyhow::{bail, Result};
use backreach::geomsets::Support;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Closed polygon (first vertex repeated at the end) enclosing a projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<[f64; 2]>,
    pub empty: bool,
}

impl Polygon {
    pub fn empty() -> Self {
        Polygon { vertices: Vec::new(), empty: true }
    }

    /// Shoelace area.
    pub fn area(&self) -> f64 {
        self.vertices.windows(2).map(|p| p[0][0] * p[1][1] - p[1][0] * p[0][1]).sum::<f64>().abs() / 2.0
    }
}

/// Outer polygon of the projection of `set` onto dimensions (i, j), from its
/// support values along `n_angles` uniform directions.
pub fn project2d(set: &dyn Support, dims: (usize, usize), n_angles: usize) -> Result<Polygon> {
    let n = set.dim();
    let (i, j) = dims;
    if i >= n || j >= n || i == j {
        bail!("projection dimensions ({i}, {j}) invalid for a {n}-dimensional set");
    }
    if n_angles < 3 {
        bail!("at least 3 angles are needed, got {n_angles}");
    }
    let mut normals = Vec::with_capacity(n_angles);
    let mut values = Vec::with_capacity(n_angles);
    for k in 0..n_angles {
        let theta = TAU * k as f64 / n_angles as f64;
        let (s, c) = theta.sin_cos();
        let mut dir = DVector::zeros(n);
        dir[i] = c;
        dir[j] = s;
        let rho = set.support(&dir)?;
        if rho == f64::NEG_INFINITY {
            return Ok(Polygon::empty());
        }
        if !rho.is_finite() {
            bail!("set is unbounded in the projected plane");
        }
        normals.push((c, s));
        values.push(rho);
    }
    let mut vertices = Vec::with_capacity(n_angles + 1);
    for k in 0..n_angles {
        let (a1, b1) = normals[k];
        let (a2, b2) = normals[(k + 1) % n_angles];
        let det = a1 * b2 - a2 * b1;
        let (r1, r2) = (values[k], values[(k + 1) % n_angles]);
        vertices.push([(r1 * b2 - r2 * b1) / det, (a1 * r2 - a2 * r1) / det]);
    }
    vertices.push(vertices[0]);
    Ok(Polygon { vertices, empty: false })
}
