use super::{
    all_finite, blkdiag, check_dim, hcat, vcat, IntervalMatrix, HPolytope, SetError, Support, Zonotope,
    ZERO_GENERATOR_TOL,
};
use crate::lp::{solve_lp, LpOutcome, LpProblem, FEAS_TOL};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Constrained zonotope ⟨c, G, Â, b̂⟩ = { c + Gα | Âα = b̂, α ∈ [−1,1]^γ }.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstrainedZonotope {
    center: DVector<f64>,
    generators: DMatrix<f64>,
    con_lhs: DMatrix<f64>,
    con_rhs: DVector<f64>,
}

impl ConstrainedZonotope {
    pub fn new(
        center: DVector<f64>,
        generators: DMatrix<f64>,
        con_lhs: DMatrix<f64>,
        con_rhs: DVector<f64>,
    ) -> Result<Self, SetError> {
        check_dim("generator rows", center.len(), generators.nrows())?;
        check_dim("constraint columns", generators.ncols(), con_lhs.ncols())?;
        check_dim("constraint rows", con_lhs.nrows(), con_rhs.len())?;
        let finite = all_finite(center.iter())
            && all_finite(generators.iter())
            && all_finite(con_lhs.iter())
            && all_finite(con_rhs.iter());
        if !finite {
            return Err(SetError::Invalid("constrained zonotope data must be finite".into()));
        }
        Ok(ConstrainedZonotope { center, generators, con_lhs, con_rhs })
    }

    pub fn from_zonotope(z: &Zonotope) -> Self {
        let gamma = z.num_generators();
        ConstrainedZonotope {
            center: z.center().clone(),
            generators: z.generators().clone(),
            con_lhs: DMatrix::zeros(0, gamma),
            con_rhs: DVector::zeros(0),
        }
    }

    pub fn point(p: DVector<f64>) -> Self {
        ConstrainedZonotope::from_zonotope(&Zonotope::point(p))
    }

    /// Canonical empty set in ℝⁿ: no generators and the constraint 0 = 1.
    pub fn empty(n: usize) -> Self {
        ConstrainedZonotope {
            center: DVector::zeros(n),
            generators: DMatrix::zeros(n, 0),
            con_lhs: DMatrix::zeros(1, 0),
            con_rhs: DVector::from_element(1, 1.0),
        }
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn generators(&self) -> &DMatrix<f64> {
        &self.generators
    }

    pub fn con_lhs(&self) -> &DMatrix<f64> {
        &self.con_lhs
    }

    pub fn con_rhs(&self) -> &DVector<f64> {
        &self.con_rhs
    }

    pub fn num_generators(&self) -> usize {
        self.generators.ncols()
    }

    pub fn num_constraints(&self) -> usize {
        self.con_rhs.len()
    }

    /// ⟨c, G⟩ with the constraints dropped; always encloses the set.
    pub fn relaxation(&self) -> Zonotope {
        Zonotope::new(self.center.clone(), self.generators.clone()).expect("finite data")
    }

    /// Columns of Â that are identically zero.
    pub fn free_factors(&self) -> Vec<bool> {
        (0..self.num_generators()).map(|j| self.con_lhs.column(j).iter().all(|&v| v == 0.0)).collect()
    }

    /// True for the canonical empty set and other structurally infeasible
    /// encodings (a zero constraint row with nonzero right-hand side).
    pub fn is_trivially_empty(&self) -> bool {
        (0..self.num_constraints())
            .any(|i| self.con_lhs.row(i).iter().all(|&v| v == 0.0) && self.con_rhs[i].abs() > FEAS_TOL)
    }

    /// Feasibility LP over the factors.
    pub fn is_empty(&self) -> Result<bool, SetError> {
        if self.num_constraints() == 0 {
            return Ok(false);
        }
        if self.is_trivially_empty() {
            return Ok(true);
        }
        let (cons, _) = self.split_factors();
        let a = self.con_lhs.select_columns(cons.iter());
        let k = cons.len();
        let lp = LpProblem::with_equalities(
            DVector::zeros(k),
            a,
            self.con_rhs.clone(),
            DVector::from_element(k, -1.0),
            DVector::from_element(k, 1.0),
        );
        Ok(matches!(solve_lp(&lp)?, LpOutcome::Infeasible))
    }

    pub fn point_at(&self, factors: &DVector<f64>) -> DVector<f64> {
        &self.center + &self.generators * factors
    }

    /// Membership of `x` via the factor feasibility LP.
    pub fn contains(&self, x: &DVector<f64>) -> Result<bool, SetError> {
        Ok(self.membership_factors(x)?.is_some())
    }

    /// Factors α with c + Gα = x, Âα = b̂, |α| ≤ 1, if any exist.
    pub fn membership_factors(&self, x: &DVector<f64>) -> Result<Option<DVector<f64>>, SetError> {
        check_dim("point", self.dim(), x.len())?;
        let gamma = self.num_generators();
        let lhs = stack_rows(&self.con_lhs, &self.generators);
        let rhs = vcat(&[&self.con_rhs, &(x - &self.center)]);
        let lp = LpProblem::with_equalities(
            DVector::zeros(gamma),
            lhs,
            rhs,
            DVector::from_element(gamma, -1.0),
            DVector::from_element(gamma, 1.0),
        );
        Ok(match solve_lp(&lp)? {
            LpOutcome::Optimal { point, .. } => Some(point),
            _ => None,
        })
    }

    pub fn neg(&self) -> ConstrainedZonotope {
        ConstrainedZonotope {
            center: -&self.center,
            generators: -&self.generators,
            con_lhs: self.con_lhs.clone(),
            con_rhs: self.con_rhs.clone(),
        }
    }

    pub fn translate(&self, v: &DVector<f64>) -> ConstrainedZonotope {
        ConstrainedZonotope { center: &self.center + v, ..self.clone() }
    }

    /// { c + s(x − c) | x ∈ CZ } around the representation center.
    pub fn scale_about_center(&self, s: f64) -> ConstrainedZonotope {
        ConstrainedZonotope { generators: &self.generators * s, ..self.clone() }
    }

    /// Normalization pass: drops unconstrained generators of norm ≤ 1e-14.
    pub fn compact(&self) -> ConstrainedZonotope {
        let free = self.free_factors();
        let keep: Vec<usize> = (0..self.num_generators())
            .filter(|&j| !free[j] || self.generators.column(j).norm() > ZERO_GENERATOR_TOL)
            .collect();
        if keep.len() == self.num_generators() {
            return self.clone();
        }
        ConstrainedZonotope {
            center: self.center.clone(),
            generators: self.generators.select_columns(keep.iter()),
            con_lhs: self.con_lhs.select_columns(keep.iter()),
            con_rhs: self.con_rhs.clone(),
        }
    }

    fn split_factors(&self) -> (Vec<usize>, Vec<usize>) {
        let free = self.free_factors();
        let mut cons = Vec::new();
        let mut open = Vec::new();
        for (j, f) in free.into_iter().enumerate() {
            if f {
                open.push(j);
            } else {
                cons.push(j);
            }
        }
        (cons, open)
    }

    /// Random feasible factor vectors: convex mixtures of LP vertices for the
    /// constrained factors, independent vertex or uniform draws for the
    /// unconstrained ones. Returns an empty list for an empty set.
    pub fn sample_factors<R: Rng>(&self, rng: &mut R, count: usize) -> Result<Vec<DVector<f64>>, SetError> {
        let gamma = self.num_generators();
        let (cons, open) = self.split_factors();
        let mut pool: Vec<DVector<f64>> = Vec::new();
        if self.num_constraints() > 0 {
            if self.is_trivially_empty() {
                return Ok(Vec::new());
            }
            let a = self.con_lhs.select_columns(cons.iter());
            let k = cons.len();
            let pool_size = (2 * k + 2).clamp(4, 24);
            for attempt in 0..pool_size {
                let obj = if attempt % 2 == 0 || self.dim() == 0 {
                    DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0))
                } else {
                    let dir = DVector::from_fn(self.dim(), |_, _| rng.gen_range(-1.0..1.0));
                    self.generators.select_columns(cons.iter()).tr_mul(&dir)
                };
                let lp = LpProblem::with_equalities(
                    obj,
                    a.clone(),
                    self.con_rhs.clone(),
                    DVector::from_element(k, -1.0),
                    DVector::from_element(k, 1.0),
                );
                match solve_lp(&lp)? {
                    LpOutcome::Optimal { point, .. } => pool.push(point),
                    LpOutcome::Infeasible => return Ok(Vec::new()),
                    LpOutcome::Unbounded => {}
                }
            }
        }
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let mut alpha = DVector::zeros(gamma);
            if !pool.is_empty() {
                let mixed = if rng.gen_bool(0.3) {
                    pool[rng.gen_range(0..pool.len())].clone()
                } else {
                    let w: Vec<f64> = pool.iter().map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
                    let total: f64 = w.iter().sum();
                    let mut acc = DVector::zeros(cons.len());
                    for (p, wi) in pool.iter().zip(w.iter()) {
                        acc += p * (wi / total);
                    }
                    acc
                };
                for (slot, &j) in cons.iter().enumerate() {
                    alpha[j] = mixed[slot].clamp(-1.0, 1.0);
                }
            }
            let vertex = rng.gen_bool(0.5);
            for &j in &open {
                alpha[j] = if vertex {
                    if rng.gen_bool(0.5) {
                        1.0
                    } else {
                        -1.0
                    }
                } else {
                    rng.gen_range(-1.0..=1.0)
                };
            }
            out.push(alpha);
        }
        Ok(out)
    }
}

impl Support for ConstrainedZonotope {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn support(&self, dir: &DVector<f64>) -> Result<f64, SetError> {
        cz_support(self, dir)
    }
}

fn stack_rows(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.view_mut((0, 0), top.shape()).copy_from(top);
    out.view_mut((top.nrows(), 0), bottom.shape()).copy_from(bottom);
    out
}

/// ⟨Mc, MG, Â, b̂⟩.
pub fn cz_linmap(m: &DMatrix<f64>, cz: &ConstrainedZonotope) -> Result<ConstrainedZonotope, SetError> {
    check_dim("linear map columns", cz.dim(), m.ncols())?;
    Ok(ConstrainedZonotope {
        center: m * &cz.center,
        generators: m * &cz.generators,
        con_lhs: cz.con_lhs.clone(),
        con_rhs: cz.con_rhs.clone(),
    })
}

/// Concatenated generators with block-diagonal constraints.
pub fn cz_minksum(a: &ConstrainedZonotope, b: &ConstrainedZonotope) -> Result<ConstrainedZonotope, SetError> {
    check_dim("Minkowski sum", a.dim(), b.dim())?;
    Ok(ConstrainedZonotope {
        center: &a.center + &b.center,
        generators: hcat(&[&a.generators, &b.generators]),
        con_lhs: blkdiag(&a.con_lhs, &b.con_lhs),
        con_rhs: vcat(&[&a.con_rhs, &b.con_rhs]),
    })
}

/// max ℓᵀ(c + Gα) s.t. Âα = b̂, α ∈ [−1,1]^γ; −∞ for an empty set.
///
/// Factors that do not appear in the constraints contribute |ℓᵀGᵢ| in
/// closed form, so the LP only runs over the constrained ones.
pub fn cz_support(cz: &ConstrainedZonotope, dir: &DVector<f64>) -> Result<f64, SetError> {
    check_dim("direction", cz.dim(), dir.len())?;
    let proj = cz.generators.tr_mul(dir);
    let base = dir.dot(&cz.center);
    if cz.num_constraints() == 0 {
        return Ok(base + proj.iter().map(|v| v.abs()).sum::<f64>());
    }
    if cz.is_trivially_empty() {
        return Ok(f64::NEG_INFINITY);
    }
    let (cons, open) = cz.split_factors();
    let free_part: f64 = open.iter().map(|&j| proj[j].abs()).sum();
    let k = cons.len();
    let obj = DVector::from_iterator(k, cons.iter().map(|&j| proj[j]));
    let lp = LpProblem::with_equalities(
        obj,
        cz.con_lhs.select_columns(cons.iter()),
        cz.con_rhs.clone(),
        DVector::from_element(k, -1.0),
        DVector::from_element(k, 1.0),
    );
    match solve_lp(&lp)? {
        LpOutcome::Optimal { value, .. } => Ok(base + free_part + value),
        LpOutcome::Infeasible => Ok(f64::NEG_INFINITY),
        LpOutcome::Unbounded => Err(SetError::Unbounded),
    }
}

/// Exact intersection with the halfspace { x | c̄x ≤ d̄ }.
pub fn cz_halfspace_intersect(
    cz: &ConstrainedZonotope,
    normal: &DVector<f64>,
    rhs: f64,
) -> Result<ConstrainedZonotope, SetError> {
    check_dim("halfspace normal", cz.dim(), normal.len())?;
    // implied by the unconstrained relaxation: nothing to add
    if cz.relaxation().support(normal)? <= rhs {
        return Ok(cz.clone());
    }
    let lowest = -cz_support(cz, &(-normal))?;
    if lowest == f64::INFINITY || lowest > rhs + FEAS_TOL {
        return Ok(ConstrainedZonotope::empty(cz.dim()));
    }
    let o = lowest.min(rhs);
    let gamma = cz.num_generators();
    let h = cz.num_constraints();
    let n = cz.dim();
    let mut gens = DMatrix::zeros(n, gamma + 1);
    gens.view_mut((0, 0), (n, gamma)).copy_from(&cz.generators);
    let mut a = DMatrix::zeros(h + 1, gamma + 1);
    a.view_mut((0, 0), (h, gamma)).copy_from(&cz.con_lhs);
    let cg = cz.generators.tr_mul(normal);
    for j in 0..gamma {
        a[(h, j)] = cg[j];
    }
    a[(h, gamma)] = 0.5 * (rhs - o);
    let mut b = DVector::zeros(h + 1);
    b.rows_mut(0, h).copy_from(&cz.con_rhs);
    b[h] = 0.5 * (rhs + o) - normal.dot(&cz.center);
    Ok(ConstrainedZonotope { center: cz.center.clone(), generators: gens, con_lhs: a, con_rhs: b })
}

/// Fold of the halfspace intersection over the rows of P.
pub fn cz_poly_intersect(cz: &ConstrainedZonotope, p: &HPolytope) -> Result<ConstrainedZonotope, SetError> {
    check_dim("intersection", cz.dim(), p.dim())?;
    let mut acc = cz.clone();
    for j in 0..p.num_constraints() {
        acc = cz_halfspace_intersect(&acc, &p.normal(j), p.rhs()[j])?;
        if acc.is_trivially_empty() {
            break;
        }
    }
    Ok(acc)
}

/// Exact convex hull of two constrained zonotopes.
///
/// With λ' ∈ [−1,1] weighting the two sets, the hull is parameterized by
/// scaled factors a₁ = λα₁, a₂ = (1−λ)α₂ (λ = (1+λ')/2), whose box bounds
/// |a₁| ≤ λ and |a₂| ≤ 1−λ are written as equalities with slack factors.
pub fn cz_convhull(a: &ConstrainedZonotope, b: &ConstrainedZonotope) -> Result<ConstrainedZonotope, SetError> {
    check_dim("convex hull", a.dim(), b.dim())?;
    if a.is_trivially_empty() {
        return Ok(b.clone());
    }
    if b.is_trivially_empty() {
        return Ok(a.clone());
    }
    let n = a.dim();
    let (g1, g2) = (a.num_generators(), b.num_generators());
    let (h1, h2) = (a.num_constraints(), b.num_constraints());
    let lam = g1 + g2;
    let slack0 = lam + 1;
    let gamma = slack0 + 2 * (g1 + g2);
    let rows = h1 + h2 + 2 * (g1 + g2);

    let mut gens = DMatrix::zeros(n, gamma);
    gens.view_mut((0, 0), (n, g1)).copy_from(&a.generators);
    gens.view_mut((0, g1), (n, g2)).copy_from(&b.generators);
    gens.set_column(lam, &((&a.center - &b.center) * 0.5));

    let mut con = DMatrix::zeros(rows, gamma);
    let mut rhs = DVector::zeros(rows);
    con.view_mut((0, 0), (h1, g1)).copy_from(&a.con_lhs);
    for i in 0..h1 {
        con[(i, lam)] = -0.5 * a.con_rhs[i];
        rhs[i] = 0.5 * a.con_rhs[i];
    }
    con.view_mut((h1, g1), (h2, g2)).copy_from(&b.con_lhs);
    for i in 0..h2 {
        con[(h1 + i, lam)] = 0.5 * b.con_rhs[i];
        rhs[h1 + i] = 0.5 * b.con_rhs[i];
    }
    let mut r = h1 + h2;
    let mut s = slack0;
    for (offset, count, lam_coef) in [(0usize, g1, -0.5), (g1, g2, 0.5)] {
        for sign in [1.0, -1.0] {
            for j in 0..count {
                con[(r, offset + j)] = sign;
                con[(r, lam)] = lam_coef;
                con[(r, s)] = 1.0;
                rhs[r] = -0.5;
                r += 1;
                s += 1;
            }
        }
    }
    Ok(ConstrainedZonotope { center: (&a.center + &b.center) * 0.5, generators: gens, con_lhs: con, con_rhs: rhs })
}

/// Interval-matrix product: the zonotope enclosure applied to ⟨c, G⟩ with
/// constraints kept and unconstrained radius generators appended.
pub fn intmat_mul_cz(im: &IntervalMatrix, cz: &ConstrainedZonotope) -> Result<ConstrainedZonotope, SetError> {
    let (rows, cols) = im.shape();
    check_dim("interval matrix columns", cz.dim(), cols)?;
    let mc = im.center();
    let spread = im.radius() * cz.relaxation().abs_extent();
    let extra: Vec<usize> = (0..rows).filter(|&i| spread[i] > 0.0).collect();
    let gamma = cz.num_generators();
    let mut gens = DMatrix::zeros(rows, gamma + extra.len());
    gens.view_mut((0, 0), (rows, gamma)).copy_from(&(&mc * &cz.generators));
    for (k, &i) in extra.iter().enumerate() {
        gens[(i, gamma + k)] = spread[i];
    }
    let mut con = DMatrix::zeros(cz.num_constraints(), gamma + extra.len());
    con.view_mut((0, 0), cz.con_lhs.shape()).copy_from(&cz.con_lhs);
    Ok(ConstrainedZonotope { center: &mc * &cz.center, generators: gens, con_lhs: con, con_rhs: cz.con_rhs.clone() })
}
