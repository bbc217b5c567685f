use super::{all_finite, check_dim, ConstrainedZonotope, Interval, SetError, Support, Zonotope};
use crate::lp::{solve_lp, LpOutcome, LpProblem, FEAS_TOL};
use nalgebra::{DMatrix, DVector};

/// H-polytope { x | Cx ≤ d }.
#[derive(Clone, Debug, PartialEq)]
pub struct HPolytope {
    lhs: DMatrix<f64>,
    rhs: DVector<f64>,
}

impl HPolytope {
    pub fn new(lhs: DMatrix<f64>, rhs: DVector<f64>) -> Result<Self, SetError> {
        check_dim("polytope rows", lhs.nrows(), rhs.len())?;
        if !all_finite(lhs.iter()) || !all_finite(rhs.iter()) {
            return Err(SetError::Invalid("polytope data must be finite".into()));
        }
        if let Some(j) = (0..lhs.nrows()).find(|&j| lhs.row(j).iter().all(|&v| v == 0.0)) {
            return Err(SetError::Invalid(format!("constraint row {j} is all zero")));
        }
        Ok(HPolytope { lhs, rhs })
    }

    /// The whole space ℝⁿ (no constraints).
    pub fn universe(n: usize) -> Self {
        HPolytope { lhs: DMatrix::zeros(0, n), rhs: DVector::zeros(0) }
    }

    pub fn from_interval(b: &Interval) -> Self {
        let n = b.dim();
        let mut lhs = DMatrix::zeros(2 * n, n);
        let mut rhs = DVector::zeros(2 * n);
        for i in 0..n {
            lhs[(i, i)] = 1.0;
            rhs[i] = b.hi()[i];
            lhs[(n + i, i)] = -1.0;
            rhs[n + i] = -b.lo()[i];
        }
        HPolytope { lhs, rhs }
    }

    pub fn lhs(&self) -> &DMatrix<f64> {
        &self.lhs
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    pub fn num_constraints(&self) -> usize {
        self.rhs.len()
    }

    /// Row j of C as a column vector.
    pub fn normal(&self, j: usize) -> DVector<f64> {
        self.lhs.row(j).transpose()
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.max_violation(x) <= tol
    }

    /// max_j (C_j x − d_j), −∞ for the whole space.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let r = &self.lhs * x - &self.rhs;
        r.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Signed distance proxy max_j (C_j x − d_j)/‖C_j‖.
    pub fn signed_distance(&self, x: &DVector<f64>) -> f64 {
        (0..self.num_constraints())
            .map(|j| (self.lhs.row(j).transpose().dot(x) - self.rhs[j]) / self.lhs.row(j).norm())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// { c + s(x − c) | x ∈ P }.
    pub fn scale_about(&self, center: &DVector<f64>, s: f64) -> HPolytope {
        let cc = &self.lhs * center;
        HPolytope { lhs: self.lhs.clone(), rhs: &cc + (&self.rhs - &cc) * s }
    }

    /// Same normals with a new right-hand side.
    pub fn with_rhs(&self, rhs: DVector<f64>) -> Result<HPolytope, SetError> {
        HPolytope::new(self.lhs.clone(), rhs)
    }
}

impl Support for HPolytope {
    fn dim(&self) -> usize {
        self.lhs.ncols()
    }

    fn support(&self, dir: &DVector<f64>) -> Result<f64, SetError> {
        poly_support(self, dir)
    }
}

/// LP maximum of ℓᵀx over P; +∞ when unbounded, −∞ when empty.
pub fn poly_support(p: &HPolytope, dir: &DVector<f64>) -> Result<f64, SetError> {
    check_dim("direction", p.dim(), dir.len())?;
    let lp = LpProblem::new(dir.clone(), p.lhs.clone(), p.rhs.clone());
    Ok(match solve_lp(&lp)? {
        LpOutcome::Optimal { value, .. } => value,
        LpOutcome::Unbounded => f64::INFINITY,
        LpOutcome::Infeasible => f64::NEG_INFINITY,
    })
}

pub fn poly_is_empty(p: &HPolytope) -> Result<bool, SetError> {
    let lp = LpProblem::new(DVector::zeros(p.dim()), p.lhs.clone(), p.rhs.clone());
    Ok(matches!(solve_lp(&lp)?, LpOutcome::Infeasible))
}

/// Image M·P = ⟨C M⁻¹, d⟩ for invertible M.
pub fn poly_linmap_inv(m: &DMatrix<f64>, p: &HPolytope) -> Result<HPolytope, SetError> {
    let n = p.dim();
    if m.shape() != (n, n) {
        return Err(SetError::Dimension(format!("map {:?} on {}-dimensional polytope", m.shape(), n)));
    }
    let inv = m.clone().try_inverse().ok_or(SetError::SingularMatrix)?;
    let cond = m.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max)
        * inv.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max);
    if !cond.is_finite() || cond >= 1e12 {
        return Err(SetError::SingularMatrix);
    }
    poly_map_with_inverse(&inv, p)
}

/// Image M·P when M⁻¹ is already known: ⟨C M⁻¹, d⟩.
pub fn poly_map_with_inverse(m_inv: &DMatrix<f64>, p: &HPolytope) -> Result<HPolytope, SetError> {
    check_dim("inverse map rows", p.dim(), m_inv.nrows())?;
    HPolytope::new(&p.lhs * m_inv, p.rhs.clone())
}

/// P ⊖ S = ⟨C, d − ρ(S, Cⱼᵀ)⟩.
pub fn poly_minkdiff(p: &HPolytope, s: &dyn Support) -> Result<HPolytope, SetError> {
    check_dim("Minkowski difference", p.dim(), s.dim())?;
    let mut rhs = p.rhs.clone();
    for j in 0..p.num_constraints() {
        let rho = s.support(&p.normal(j))?;
        if !rho.is_finite() {
            return Err(SetError::Invalid(format!("subtrahend support {rho} along constraint {j}")));
        }
        rhs[j] -= rho;
    }
    Ok(HPolytope { lhs: p.lhs.clone(), rhs })
}

/// Outer approximation P ⊕̂ Z = ⟨C, d + ρ(Z, Cⱼᵀ)⟩.
pub fn poly_outer_minksum(p: &HPolytope, z: &Zonotope) -> Result<HPolytope, SetError> {
    check_dim("Minkowski sum", p.dim(), z.dim())?;
    let mut rhs = p.rhs.clone();
    for j in 0..p.num_constraints() {
        rhs[j] += z.support(&p.normal(j))?;
    }
    Ok(HPolytope { lhs: p.lhs.clone(), rhs })
}

/// Tightest enclosing box from 2n support evaluations.
pub fn poly_box(p: &HPolytope) -> Result<Interval, SetError> {
    let n = p.dim();
    let mut lo = DVector::zeros(n);
    let mut hi = DVector::zeros(n);
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        let up = poly_support(p, &e)?;
        if up == f64::NEG_INFINITY {
            return Err(SetError::Empty);
        }
        let down = poly_support(p, &(-e))?;
        if up == f64::INFINITY || down == f64::INFINITY {
            return Err(SetError::Unbounded);
        }
        hi[i] = up;
        lo[i] = (-down).min(up);
    }
    Interval::new(lo, hi)
}

/// Exact conversion of a bounded, nonempty polytope to a constrained zonotope.
pub fn poly_to_cz(p: &HPolytope) -> Result<ConstrainedZonotope, SetError> {
    let b = poly_box(p)?;
    poly_to_cz_in_box(p, &b)
}

/// Conversion using a caller-supplied box enclosure; the result is P ∩ box,
/// which equals P whenever the box encloses P.
///
/// Rows already implied by the box are left out of the constraint system,
/// and a row that misses the box altogether yields the empty set.
pub fn poly_to_cz_in_box(p: &HPolytope, enclosure: &Interval) -> Result<ConstrainedZonotope, SetError> {
    let n = p.dim();
    check_dim("enclosing box", n, enclosure.dim())?;
    let z = enclosure.to_zonotope();
    let c = z.center();
    let g = z.generators();
    let cg = &p.lhs * g;
    let cc = &p.lhs * c;
    let mut rows = Vec::new();
    let mut offsets = Vec::new();
    for j in 0..p.num_constraints() {
        let spread: f64 = cg.row(j).iter().map(|v| v.abs()).sum();
        let (low, up) = (cc[j] - spread, cc[j] + spread);
        let d = p.rhs[j];
        if d >= up {
            continue;
        }
        if low > d + FEAS_TOL {
            return Ok(ConstrainedZonotope::empty(n));
        }
        rows.push(j);
        offsets.push(low.min(d));
    }
    let k = rows.len();
    let gamma = g.ncols();
    let mut gens = DMatrix::zeros(n, gamma + k);
    gens.view_mut((0, 0), (n, gamma)).copy_from(g);
    let mut a = DMatrix::zeros(k, gamma + k);
    let mut b = DVector::zeros(k);
    for (r, (&j, &o)) in rows.iter().zip(offsets.iter()).enumerate() {
        let d = p.rhs[j];
        a.view_mut((r, 0), (1, gamma)).copy_from(&cg.row(j));
        a[(r, gamma + r)] = 0.5 * (o - d);
        b[r] = 0.5 * (d + o) - cc[j];
    }
    ConstrainedZonotope::new(c.clone(), gens, a, b)
}

/// True iff ρ(S, Cⱼᵀ) ≤ dⱼ + feas_tol for every row.
pub fn set_in_poly(s: &dyn Support, p: &HPolytope) -> Result<bool, SetError> {
    check_dim("containment", p.dim(), s.dim())?;
    for j in 0..p.num_constraints() {
        if s.support(&p.normal(j))? > p.rhs[j] + FEAS_TOL {
            return Ok(false);
        }
    }
    Ok(true)
}
