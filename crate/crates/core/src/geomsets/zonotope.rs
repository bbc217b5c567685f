use super::{all_finite, check_dim, hcat, Interval, IntervalMatrix, SetError, Support, ZERO_GENERATOR_TOL};
use nalgebra::{DMatrix, DVector};

/// Zonotope ⟨c, G⟩ = { c + Gα | α ∈ [−1,1]^γ }.
#[derive(Clone, Debug, PartialEq)]
pub struct Zonotope {
    center: DVector<f64>,
    generators: DMatrix<f64>,
}

impl Zonotope {
    pub fn new(center: DVector<f64>, generators: DMatrix<f64>) -> Result<Self, SetError> {
        check_dim("zonotope generators", center.len(), generators.nrows())?;
        if !all_finite(center.iter()) || !all_finite(generators.iter()) {
            return Err(SetError::Invalid("zonotope data must be finite".into()));
        }
        Ok(Zonotope { center, generators })
    }

    pub fn point(p: DVector<f64>) -> Self {
        let n = p.len();
        Zonotope { center: p, generators: DMatrix::zeros(n, 0) }
    }

    pub fn origin(n: usize) -> Self {
        Zonotope::point(DVector::zeros(n))
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn generators(&self) -> &DMatrix<f64> {
        &self.generators
    }

    pub fn num_generators(&self) -> usize {
        self.generators.ncols()
    }

    pub fn order(&self) -> f64 {
        if self.center.is_empty() {
            0.0
        } else {
            self.num_generators() as f64 / self.center.len() as f64
        }
    }

    /// Same generators around the origin.
    pub fn centered(&self) -> Zonotope {
        Zonotope { center: DVector::zeros(self.center.len()), generators: self.generators.clone() }
    }

    pub fn translate(&self, v: &DVector<f64>) -> Zonotope {
        Zonotope { center: &self.center + v, generators: self.generators.clone() }
    }

    /// −Z.
    pub fn neg(&self) -> Zonotope {
        Zonotope { center: -&self.center, generators: -&self.generators }
    }

    /// Normalization pass: drops generators of norm ≤ 1e-14.
    pub fn compact(&self) -> Zonotope {
        let keep: Vec<usize> =
            (0..self.num_generators()).filter(|&j| self.generators.column(j).norm() > ZERO_GENERATOR_TOL).collect();
        if keep.len() == self.num_generators() {
            return self.clone();
        }
        Zonotope { center: self.center.clone(), generators: self.generators.select_columns(keep.iter()) }
    }

    /// Σ|Gᵢ| + |c|, the vector ν of the interval-matrix product.
    pub fn abs_extent(&self) -> DVector<f64> {
        let mut nu = self.center.abs();
        for g in self.generators.column_iter() {
            nu += g.abs();
        }
        nu
    }

    /// Tightest axis-aligned box.
    pub fn interval_hull(&self) -> Interval {
        let mut r = DVector::zeros(self.center.len());
        for g in self.generators.column_iter() {
            r += g.abs();
        }
        Interval::new(&self.center - &r, &self.center + &r).expect("finite zonotope")
    }

    pub fn point_at(&self, factors: &DVector<f64>) -> DVector<f64> {
        &self.center + &self.generators * factors
    }
}

impl Support for Zonotope {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn support(&self, dir: &DVector<f64>) -> Result<f64, SetError> {
        zono_support(self, dir)
    }
}

/// ⟨Mc, MG⟩.
pub fn zono_linmap(m: &DMatrix<f64>, z: &Zonotope) -> Result<Zonotope, SetError> {
    check_dim("linear map columns", z.dim(), m.ncols())?;
    Ok(Zonotope { center: m * &z.center, generators: m * &z.generators })
}

/// ⟨c₁+c₂, [G₁ G₂]⟩.
pub fn zono_minksum(a: &Zonotope, b: &Zonotope) -> Result<Zonotope, SetError> {
    check_dim("Minkowski sum", a.dim(), b.dim())?;
    Ok(Zonotope { center: &a.center + &b.center, generators: hcat(&[&a.generators, &b.generators]) })
}

/// ℓᵀc + Σᵢ |ℓᵀGᵢ|.
pub fn zono_support(z: &Zonotope, dir: &DVector<f64>) -> Result<f64, SetError> {
    check_dim("direction", z.dim(), dir.len())?;
    let proj = z.generators.tr_mul(dir);
    Ok(dir.dot(&z.center) + proj.iter().map(|v| v.abs()).sum::<f64>())
}

/// Enclosure ⟨M_c c, [M_c G, diag(M_r ν)]⟩ of { Mz | M ∈ IM, z ∈ Z }.
pub fn intmat_mul_zono(im: &IntervalMatrix, z: &Zonotope) -> Result<Zonotope, SetError> {
    let (rows, cols) = im.shape();
    check_dim("interval matrix columns", z.dim(), cols)?;
    let mc = im.center();
    let mr = im.radius();
    let spread = &mr * z.abs_extent();
    let mut box_gens = DMatrix::zeros(rows, rows);
    for i in 0..rows {
        box_gens[(i, i)] = spread[i];
    }
    let keep: Vec<usize> = (0..rows).filter(|&i| spread[i] > 0.0).collect();
    let box_gens = box_gens.select_columns(keep.iter());
    Ok(Zonotope { center: &mc * &z.center, generators: hcat(&[&(&mc * &z.generators), &box_gens]) })
}

/// Interval-hull order reduction: keeps the largest generators and bundles
/// the rest into one axis-aligned box so that γ ≤ max_order·n.
pub fn zono_reduce(z: &Zonotope, max_order: f64) -> Zonotope {
    let z = z.compact();
    let n = z.dim();
    let limit = (max_order.max(1.0) * n as f64).floor() as usize;
    if z.num_generators() <= limit || n == 0 {
        return z;
    }
    let keep_count = limit - n;
    let g = &z.generators;
    let mut order: Vec<(usize, f64)> = (0..g.ncols())
        .map(|j| {
            let col = g.column(j);
            (j, col.lp_norm(1) - col.amax())
        })
        .collect();
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
    let mut kept: Vec<usize> = order[..keep_count].iter().map(|p| p.0).collect();
    kept.sort_unstable();
    let mut radius = DVector::zeros(n);
    for &(j, _) in &order[keep_count..] {
        radius += g.column(j).abs();
    }
    let mut boxed = DMatrix::zeros(n, n);
    for i in 0..n {
        boxed[(i, i)] = radius[i];
    }
    let gens = hcat(&[&g.select_columns(kept.iter()), &boxed]);
    Zonotope { center: z.center.clone(), generators: gens }.compact()
}
