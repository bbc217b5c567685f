use super::{all_finite, check_dim, SetError, Support, Zonotope};
use nalgebra::{DMatrix, DVector};

/// Axis-aligned box `[lo, hi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Interval {
    lo: DVector<f64>,
    hi: DVector<f64>,
}

impl Interval {
    pub fn new(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self, SetError> {
        check_dim("interval bounds", lo.len(), hi.len())?;
        if !all_finite(lo.iter()) || !all_finite(hi.iter()) {
            return Err(SetError::Invalid("interval bounds must be finite".into()));
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
            return Err(SetError::Invalid("interval with lo > hi".into()));
        }
        Ok(Interval { lo, hi })
    }

    pub fn from_slices(lo: &[f64], hi: &[f64]) -> Result<Self, SetError> {
        Interval::new(DVector::from_column_slice(lo), DVector::from_column_slice(hi))
    }

    pub fn point(p: DVector<f64>) -> Self {
        Interval { lo: p.clone(), hi: p }
    }

    pub fn lo(&self) -> &DVector<f64> {
        &self.lo
    }

    pub fn hi(&self) -> &DVector<f64> {
        &self.hi
    }

    pub fn center(&self) -> DVector<f64> {
        (&self.lo + &self.hi) * 0.5
    }

    pub fn radius(&self) -> DVector<f64> {
        (&self.hi - &self.lo) * 0.5
    }

    /// ⟨center, diag(radius)⟩ with one generator per axis of nonzero width.
    pub fn to_zonotope(&self) -> Zonotope {
        let r = self.radius();
        let n = r.len();
        let keep: Vec<usize> = (0..n).filter(|&i| r[i] > 0.0).collect();
        let mut g = DMatrix::zeros(n, keep.len());
        for (k, &i) in keep.iter().enumerate() {
            g[(i, k)] = r[i];
        }
        Zonotope::new(self.center(), g).expect("finite box")
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.len() == self.lo.len()
            && (0..x.len()).all(|i| x[i] >= self.lo[i] - tol && x[i] <= self.hi[i] + tol)
    }

    /// Box shifted by `v`.
    pub fn translate(&self, v: &DVector<f64>) -> Interval {
        Interval { lo: &self.lo + v, hi: &self.hi + v }
    }
}

impl Support for Interval {
    fn dim(&self) -> usize {
        self.lo.len()
    }

    fn support(&self, dir: &DVector<f64>) -> Result<f64, SetError> {
        check_dim("direction", self.lo.len(), dir.len())?;
        Ok((0..dir.len()).map(|i| if dir[i] >= 0.0 { dir[i] * self.hi[i] } else { dir[i] * self.lo[i] }).sum())
    }
}

/// Elementwise matrix interval `[L, U]`.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalMatrix {
    lo: DMatrix<f64>,
    hi: DMatrix<f64>,
}

impl IntervalMatrix {
    pub fn new(lo: DMatrix<f64>, hi: DMatrix<f64>) -> Result<Self, SetError> {
        if lo.shape() != hi.shape() {
            return Err(SetError::Dimension(format!("interval matrix {:?} vs {:?}", lo.shape(), hi.shape())));
        }
        if !all_finite(lo.iter()) || !all_finite(hi.iter()) {
            return Err(SetError::Invalid("interval matrix entries must be finite".into()));
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
            return Err(SetError::Invalid("interval matrix with L > U".into()));
        }
        Ok(IntervalMatrix { lo, hi })
    }

    /// Degenerate interval `[M, M]`.
    pub fn point(m: DMatrix<f64>) -> Self {
        IntervalMatrix { lo: m.clone(), hi: m }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        IntervalMatrix::point(DMatrix::zeros(rows, cols))
    }

    /// `[−R, R]` for an elementwise nonnegative `R`.
    pub fn symmetric(radius: DMatrix<f64>) -> Self {
        let lo = -&radius;
        IntervalMatrix { lo, hi: radius }
    }

    /// `[a, b]·M` evaluated per entry from the sign of `M`.
    pub fn scalar_times(a: f64, b: f64, m: &DMatrix<f64>) -> Self {
        debug_assert!(a <= b);
        let lo = m.map(|v| (a * v).min(b * v));
        let hi = m.map(|v| (a * v).max(b * v));
        IntervalMatrix { lo, hi }
    }

    pub fn lo(&self) -> &DMatrix<f64> {
        &self.lo
    }

    pub fn hi(&self) -> &DMatrix<f64> {
        &self.hi
    }

    pub fn shape(&self) -> (usize, usize) {
        self.lo.shape()
    }

    pub fn center(&self) -> DMatrix<f64> {
        (&self.lo + &self.hi) * 0.5
    }

    pub fn radius(&self) -> DMatrix<f64> {
        (&self.hi - &self.lo) * 0.5
    }

    /// Interval addition (Minkowski sum of interval matrices).
    pub fn add(&self, other: &IntervalMatrix) -> Result<IntervalMatrix, SetError> {
        if self.shape() != other.shape() {
            return Err(SetError::Dimension(format!("{:?} + {:?}", self.shape(), other.shape())));
        }
        Ok(IntervalMatrix { lo: &self.lo + &other.lo, hi: &self.hi + &other.hi })
    }

    /// Multiplication by a nonnegative scalar.
    pub fn scale(&self, s: f64) -> IntervalMatrix {
        if s >= 0.0 {
            IntervalMatrix { lo: &self.lo * s, hi: &self.hi * s }
        } else {
            IntervalMatrix { lo: &self.hi * s, hi: &self.lo * s }
        }
    }

    /// Largest absolute entry over both bounds.
    pub fn max_abs(&self) -> f64 {
        self.lo.amax().max(self.hi.amax())
    }

    pub fn contains(&self, m: &DMatrix<f64>, tol: f64) -> bool {
        m.shape() == self.shape()
            && m.iter().zip(self.lo.iter().zip(self.hi.iter())).all(|(v, (l, h))| *v >= l - tol && *v <= h + tol)
    }
}
