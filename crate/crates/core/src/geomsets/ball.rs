use super::{check_dim, SetError, Support};
use nalgebra::DVector;

/// Euclidean ball of radius ε around the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct Ball {
    radius: f64,
    dim: usize,
}

impl Ball {
    pub fn new(radius: f64, dim: usize) -> Result<Self, SetError> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(SetError::Invalid(format!("ball radius {radius}")));
        }
        Ok(Ball { radius, dim })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

impl Support for Ball {
    fn dim(&self) -> usize {
        self.dim
    }

    fn support(&self, dir: &DVector<f64>) -> Result<f64, SetError> {
        check_dim("direction", self.dim, dir.len())?;
        Ok(self.radius * dir.norm())
    }
}
