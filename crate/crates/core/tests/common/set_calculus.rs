//! Randomized set-calculus laws, shared by the geomsets property tests and
//! the acceptance suite. Each check builds its own instance from a dimension
//! and a seed and returns a description of the first violation.

#![allow(dead_code)]

use backreach::geomsets::{
    cz_convhull, cz_linmap, cz_minksum, intmat_mul_cz, intmat_mul_zono, poly_is_empty, poly_map_with_inverse,
    poly_minkdiff, poly_outer_minksum, poly_to_cz, set_in_poly, zono_linmap, zono_minksum, zono_reduce,
    ConstrainedZonotope, HPolytope, IntervalMatrix, Support, Zonotope,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SET_TOL: f64 = 1e-8;

pub type Check = fn(usize, u64) -> Result<(), String>;

pub const CHECKS: [(&str, Check); 6] = [
    ("support identities", support_identities),
    ("Minkowski-difference laws", minkdiff_laws),
    ("re-ordering inequality", reordering),
    ("convex-hull distributivity", convhull_distributivity),
    ("polytope conversion exactness", conversion_exactness),
    ("enclosure containment", enclosures),
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_vec(rng: &mut ChaCha8Rng, n: usize, s: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-s..=s))
}

pub fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize, s: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-s..=s))
}

pub fn rand_dir(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    loop {
        let v = rand_vec(rng, n, 1.0);
        let norm = v.norm();
        if norm > 1e-3 {
            return v / norm;
        }
    }
}

/// Axis directions plus `extra` random unit directions.
pub fn test_dirs(rng: &mut ChaCha8Rng, n: usize, extra: usize) -> Vec<DVector<f64>> {
    let mut dirs: Vec<_> = (0..n)
        .flat_map(|i| {
            let e = DVector::from_fn(n, |k, _| if k == i { 1.0 } else { 0.0 });
            [e.clone(), -e]
        })
        .collect();
    dirs.extend((0..extra).map(|_| rand_dir(rng, n)));
    dirs
}

pub fn rand_zono(rng: &mut ChaCha8Rng, n: usize, gens: usize, s: f64) -> Zonotope {
    Zonotope::new(rand_vec(rng, n, 0.2 * s), rand_mat(rng, n, gens, s)).expect("finite data")
}

/// Bounded polytope around `offset`: a random box cut by n random halfspaces
/// that keep the offset inside.
pub fn rand_poly(rng: &mut ChaCha8Rng, n: usize, offset: &DVector<f64>) -> HPolytope {
    let rows = 3 * n;
    let mut c = DMatrix::zeros(rows, n);
    let mut d = DVector::zeros(rows);
    for i in 0..n {
        c[(2 * i, i)] = 1.0;
        c[(2 * i + 1, i)] = -1.0;
        d[2 * i] = rng.gen_range(0.5..2.0);
        d[2 * i + 1] = rng.gen_range(0.5..2.0);
    }
    for j in 2 * n..rows {
        let a = rand_dir(rng, n);
        c.row_mut(j).copy_from(&a.transpose());
        d[j] = rng.gen_range(0.4..2.0);
    }
    let shift = &c * offset;
    HPolytope::new(c, d + shift).expect("finite data")
}

fn close(what: &str, got: f64, want: f64) -> Result<(), String> {
    if (got - want).abs() <= SET_TOL * want.abs().max(1.0) {
        Ok(())
    } else {
        Err(format!("{what}: {got} vs {want}"))
    }
}

fn below(what: &str, lhs: f64, rhs: f64) -> Result<(), String> {
    if lhs <= rhs + SET_TOL * rhs.abs().max(1.0) {
        Ok(())
    } else {
        Err(format!("{what}: {lhs} > {rhs}"))
    }
}

fn sup(s: &dyn Support, l: &DVector<f64>) -> Result<f64, String> {
    s.support(l).map_err(|e| e.to_string())
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// ρ(MS, ℓ) = ρ(S, Mᵀℓ) and ρ(S₁ ⊕ S₂, ℓ) = ρ(S₁, ℓ) + ρ(S₂, ℓ).
pub fn support_identities(n: usize, seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let m_rows = r.gen_range(1..=4);
    let m = rand_mat(&mut r, m_rows, n, 1.5);
    let g_z = r.gen_range(0..=2 * n + 1);
    let z = rand_zono(&mut r, n, g_z, 1.0);
    let g_z2 = r.gen_range(0..=n + 1);
    let z2 = rand_zono(&mut r, n, g_z2, 1.0);
    let off = rand_vec(&mut r, n, 1.0);
    let p = rand_poly(&mut r, n, &off);
    let cz = poly_to_cz(&p).map_err(err)?;
    let mz = zono_linmap(&m, &z).map_err(err)?;
    let mcz = cz_linmap(&m, &cz).map_err(err)?;
    for l in test_dirs(&mut r, m_rows, 8) {
        let back = m.tr_mul(&l);
        close("zonotope map", sup(&mz, &l)?, sup(&z, &back)?)?;
        close("constrained zonotope map", sup(&mcz, &l)?, sup(&cz, &back)?)?;
    }
    // invertible maps of H-polytopes
    let mut sq = rand_mat(&mut r, n, n, 1.0);
    for i in 0..n {
        sq[(i, i)] += 2.0;
    }
    let inv = sq.clone().try_inverse().ok_or("singular test matrix")?;
    let mp = poly_map_with_inverse(&inv, &p).map_err(err)?;
    let zsum = zono_minksum(&z, &z2).map_err(err)?;
    let czsum = cz_minksum(&cz, &ConstrainedZonotope::from_zonotope(&z2)).map_err(err)?;
    for l in test_dirs(&mut r, n, 8) {
        close("polytope map", sup(&mp, &l)?, sup(&p, &sq.tr_mul(&l))?)?;
        close("zonotope sum", sup(&zsum, &l)?, sup(&z, &l)? + sup(&z2, &l)?)?;
        close("constrained zonotope sum", sup(&czsum, &l)?, sup(&p, &l)? + sup(&z2, &l)?)?;
    }
    Ok(())
}

/// (P ⊖ S) ⊕ S ⊆ P, (P ⊕̂ S) ⊖ S ⊇ P and P ⊖ (S₁ ⊕ S₂) = (P ⊖ S₁) ⊖ S₂.
pub fn minkdiff_laws(n: usize, seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let p = rand_poly(&mut r, n, &DVector::zeros(n));
    let g_s1 = r.gen_range(1..=n + 1);
    let s1 = rand_zono(&mut r, n, g_s1, 0.2);
    let g_s2 = r.gen_range(1..=n + 1);
    let s2 = rand_zono(&mut r, n, g_s2, 0.2);
    let d = poly_minkdiff(&p, &s1).map_err(err)?;
    if !poly_is_empty(&d).map_err(err)? {
        let back = cz_minksum(&poly_to_cz(&d).map_err(err)?, &ConstrainedZonotope::from_zonotope(&s1)).map_err(err)?;
        if !set_in_poly(&back, &p).map_err(err)? {
            return Err("(P ⊖ S) ⊕ S not inside P".into());
        }
        let outer = poly_outer_minksum(&d, &s1).map_err(err)?;
        if !set_in_poly(&outer, &p).map_err(err)? {
            return Err("(P ⊖ S) ⊕̂ S not inside P".into());
        }
    }
    let grown = poly_minkdiff(&poly_outer_minksum(&p, &s1).map_err(err)?, &s1).map_err(err)?;
    for j in 0..p.num_constraints() {
        let l = p.normal(j);
        below("(P ⊕̂ S) ⊖ S ⊇ P", sup(&p, &l)?, sup(&grown, &l)?)?;
    }
    let once = poly_minkdiff(&p, &zono_minksum(&s1, &s2).map_err(err)?).map_err(err)?;
    let twice = poly_minkdiff(&d, &s2).map_err(err)?;
    for j in 0..p.num_constraints() {
        close("iterated difference", once.rhs()[j], twice.rhs()[j])?;
    }
    Ok(())
}

/// (S₁ ⊖ S₃) ⊕ S₂ ⊆ (S₁ ⊕ S₂) ⊖ S₃ for a polytope S₁ and zonotopes S₂, S₃:
/// every sampled point x of the left side has x + v ∈ S₁ ⊕ S₂ for every
/// vertex v of S₃.
pub fn reordering(n: usize, seed: u64) -> Result<(), String> {
    reordering_scaled(n, seed, 1.0)
}

/// The re-ordering check with S₃'s vertices scaled by `stretch`; values
/// above one test the check itself.
pub fn reordering_scaled(n: usize, seed: u64, stretch: f64) -> Result<(), String> {
    let mut r = rng(seed);
    let s1 = rand_poly(&mut r, n, &DVector::zeros(n));
    let g2 = r.gen_range(1..=n + 1);
    let s2 = ConstrainedZonotope::from_zonotope(&rand_zono(&mut r, n, g2, 0.5));
    let g3 = r.gen_range(1..=3);
    let s3 = rand_zono(&mut r, n, g3, 0.15).centered();
    let d = poly_minkdiff(&s1, &s3).map_err(err)?;
    if poly_is_empty(&d).map_err(err)? {
        return Ok(());
    }
    let lhs = cz_minksum(&poly_to_cz(&d).map_err(err)?, &s2).map_err(err)?;
    let sum = cz_minksum(&poly_to_cz(&s1).map_err(err)?, &s2).map_err(err)?;
    let verts = zono_vertices(&s3);
    for f in lhs.sample_factors(&mut r, 3).map_err(err)? {
        let x = lhs.point_at(&f);
        for v in &verts {
            if !sum.contains(&(&x + v * stretch)).map_err(err)? {
                return Err(format!("x + v outside S1 ⊕ S2 for x = {}", x.transpose()));
            }
        }
    }
    Ok(())
}

fn zono_vertices(z: &Zonotope) -> Vec<DVector<f64>> {
    let g = z.num_generators();
    (0..1usize << g)
        .map(|mask| {
            let f = DVector::from_fn(g, |i, _| if mask >> i & 1 == 1 { 1.0 } else { -1.0 });
            z.point_at(&f)
        })
        .collect()
}

/// conv(S₁ ⊖ S₃, S₂ ⊖ S₃) ⊆ conv(S₁, S₂) ⊖ S₃: every sampled point x of the
/// left side has x + v ∈ conv(S₁, S₂) for every vertex v of S₃.
pub fn convhull_distributivity(n: usize, seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let p1 = rand_poly(&mut r, n, &DVector::zeros(n));
    let off = rand_vec(&mut r, n, 1.5);
    let p2 = rand_poly(&mut r, n, &off);
    let g_s3 = r.gen_range(1..=3);
    let s3 = rand_zono(&mut r, n, g_s3, 0.15);
    let d1 = poly_minkdiff(&p1, &s3).map_err(err)?;
    let d2 = poly_minkdiff(&p2, &s3).map_err(err)?;
    if poly_is_empty(&d1).map_err(err)? || poly_is_empty(&d2).map_err(err)? {
        return Ok(());
    }
    let lhs = cz_convhull(&poly_to_cz(&d1).map_err(err)?, &poly_to_cz(&d2).map_err(err)?).map_err(err)?;
    let hull = cz_convhull(&poly_to_cz(&p1).map_err(err)?, &poly_to_cz(&p2).map_err(err)?).map_err(err)?;
    let verts = zono_vertices(&s3);
    for f in lhs.sample_factors(&mut r, 3).map_err(err)? {
        let x = lhs.point_at(&f);
        for v in &verts {
            if !hull.contains(&(&x + v)).map_err(err)? {
                return Err(format!("x + v outside conv(S1, S2) for x = {}", x.transpose()));
            }
        }
    }
    Ok(())
}

/// The constrained zonotope of a polytope has the same support function.
pub fn conversion_exactness(n: usize, seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let off = rand_vec(&mut r, n, 2.0);
    let p = rand_poly(&mut r, n, &off);
    let cz = poly_to_cz(&p).map_err(err)?;
    for l in test_dirs(&mut r, n, 32) {
        close("conversion", sup(&cz, &l)?, sup(&p, &l)?)?;
    }
    Ok(())
}

/// Interval-matrix products, outer sums and order reduction enclose what
/// they approximate.
pub fn enclosures(n: usize, seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let mid = rand_mat(&mut r, n, n, 1.0);
    let rad = rand_mat(&mut r, n, n, 0.2).abs();
    let im = IntervalMatrix::new(&mid - &rad, &mid + &rad).map_err(err)?;
    let g_z = r.gen_range(1..=2 * n);
    let z = rand_zono(&mut r, n, g_z, 1.0);
    let off = rand_vec(&mut r, n, 0.5);
    let p = rand_poly(&mut r, n, &off);
    let cz = poly_to_cz(&p).map_err(err)?;
    let imz = intmat_mul_zono(&im, &z).map_err(err)?;
    let imcz = intmat_mul_cz(&im, &cz).map_err(err)?;
    let dirs = test_dirs(&mut r, n, 8);
    for _ in 0..4 {
        let m = DMatrix::from_fn(n, n, |i, j| mid[(i, j)] + rad[(i, j)] * r.gen_range(-1.0..=1.0));
        let mz = zono_linmap(&m, &z).map_err(err)?;
        let mcz = cz_linmap(&m, &cz).map_err(err)?;
        for l in &dirs {
            below("interval matrix times zonotope", sup(&mz, l)?, sup(&imz, l)?)?;
            below("interval matrix times constrained zonotope", sup(&mcz, l)?, sup(&imcz, l)?)?;
        }
    }
    let outer = poly_outer_minksum(&p, &z).map_err(err)?;
    let exact = cz_minksum(&cz, &ConstrainedZonotope::from_zonotope(&z)).map_err(err)?;
    let g_many = r.gen_range(n..=6 * n);
    let many = rand_zono(&mut r, n, g_many, 1.0);
    let reduced = zono_reduce(&many, r.gen_range(1.0..3.0));
    for l in &dirs {
        below("outer Minkowski sum", sup(&exact, l)?, sup(&outer, l)?)?;
        below("order reduction", sup(&many, l)?, sup(&reduced, l)?)?;
    }
    Ok(())
}
