//! Matrix exponential, remainder and curvature interval matrices, and the
//! particular solutions used to propagate input and disturbance sets.

use crate::geomsets::{
    cz_convhull, cz_linmap, cz_minksum, intmat_mul_cz, intmat_mul_zono, zono_minksum, zono_reduce, ConstrainedZonotope,
    IntervalMatrix, SetError, Support, Zonotope,
};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Default tolerance on max|E| used to pick η automatically.
pub const DEFAULT_ETA_TOL: f64 = 1e-10;
/// Largest truncation order [`auto_eta`] will try.
pub const MAX_ETA: usize = 50;
/// Steps between re-validations of cached flow matrices against `expm`.
pub const REVALIDATE_EVERY: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("matrix exponential overflowed (‖At‖ too large)")]
    Overflow,
    #[error("no truncation order ≤ {max} reaches remainder tolerance {tol:e} at Δt = {dt}; use more steps")]
    EtaNotReached { tol: f64, dt: f64, max: usize },
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Set(#[from] SetError),
}

/// Uniform grid t_k = t0 + kΔt over [t0, t_end] with σ steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepGrid {
    pub t0: f64,
    pub t_end: f64,
    pub steps: usize,
}

impl StepGrid {
    pub fn new(t0: f64, t_end: f64, steps: usize) -> Result<Self, FlowError> {
        if !(t0 >= 0.0 && t_end > t0 && t_end.is_finite()) {
            return Err(FlowError::InvalidGrid(format!("need t_end > t0 ≥ 0, got [{t0}, {t_end}]")));
        }
        if steps == 0 {
            return Err(FlowError::InvalidGrid("step count must be ≥ 1".into()));
        }
        Ok(StepGrid { t0, t_end, steps })
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t0) / self.steps as f64
    }

    pub fn t(&self, k: usize) -> f64 {
        if k == self.steps {
            self.t_end
        } else {
            self.t0 + k as f64 * self.dt()
        }
    }
}

/// Truncation order η of the exponential series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct TruncationOrder(pub usize);

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max)
}

/// e^{At} by scaling and squaring with the degree-13 Padé approximant.
pub fn expm(a: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>, FlowError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(FlowError::Dimension(format!("expm of {:?} matrix", a.shape())));
    }
    let at = a * t;
    if !at.iter().all(|v| v.is_finite()) {
        return Err(FlowError::Overflow);
    }
    let nrm = norm1(&at);
    if nrm == 0.0 {
        return Ok(DMatrix::identity(n, n));
    }
    let s = if nrm > THETA13 { (nrm / THETA13).log2().ceil().max(0.0) as i32 } else { 0 };
    let x = at * 2f64.powi(-s);
    let id = DMatrix::<f64>::identity(n, n);
    let b = &PADE13;
    let x2 = &x * &x;
    let x4 = &x2 * &x2;
    let x6 = &x4 * &x2;
    let inner_u = &x6 * (&x6 * b[13] + &x4 * b[11] + &x2 * b[9]);
    let u = &x * (inner_u + &x6 * b[7] + &x4 * b[5] + &x2 * b[3] + &id * b[1]);
    let inner_v = &x6 * (&x6 * b[12] + &x4 * b[10] + &x2 * b[8]);
    let v = inner_v + &x6 * b[6] + &x4 * b[4] + &x2 * b[2] + &id * b[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).ok_or(FlowError::Overflow)?;
    for _ in 0..s {
        r = &r * &r;
    }
    if r.iter().all(|v| v.is_finite()) {
        Ok(r)
    } else {
        Err(FlowError::Overflow)
    }
}

/// Terms (|A|Δt)ⁱ/i! of the nonnegative exponential series, until they are
/// negligible, plus a rigorous bound on everything after the last term.
fn abs_series_terms(a: &DMatrix<f64>, dt: f64, min_terms: usize) -> (Vec<DMatrix<f64>>, f64) {
    let n = a.nrows();
    let m = a.abs() * dt;
    let q = norm1(&m);
    let mut terms = vec![DMatrix::identity(n, n)];
    let mut i = 0usize;
    loop {
        let next = &terms[i] * &m / (i + 1) as f64;
        i += 1;
        let mx = next.max();
        terms.push(next);
        let ratio = q / (i + 1) as f64;
        if i >= min_terms && ratio < 0.5 && mx < 1e-22 {
            // later terms are bounded entrywise by mx·ratio^j
            return (terms, mx * ratio / (1.0 - ratio));
        }
        if i > 2000 {
            return (terms, f64::INFINITY);
        }
    }
}

fn remainder_from_terms(terms: &[DMatrix<f64>], tail: f64, eta: usize) -> DMatrix<f64> {
    let n = terms[0].nrows();
    let mut e = DMatrix::from_element(n, n, tail);
    for t in terms.iter().skip(eta + 1) {
        e += t;
    }
    if tail == 0.0 {
        e
    } else {
        e.map(|v| v.max(0.0))
    }
}

/// Remainder E(Δt,η) = e^{|A|Δt} − Σ_{i≤η} (|A|Δt)ⁱ/i!, returned as [−E, E].
///
/// The difference is evaluated as the nonnegative series tail so that no
/// cancellation occurs.
pub fn remainder_e(a: &DMatrix<f64>, dt: f64, eta: usize) -> IntervalMatrix {
    let (terms, tail) = abs_series_terms(a, dt, eta + 1);
    IntervalMatrix::symmetric(remainder_from_terms(&terms, tail, eta))
}

fn curvature_coef(i: usize, dt: f64) -> f64 {
    let fi = i as f64;
    let p = fi - 1.0;
    (fi.powf(-fi / p) - fi.powf(-1.0 / p)) * dt.powi(i as i32)
}

fn factorial(i: usize) -> f64 {
    (1..=i).map(|k| k as f64).product()
}

fn powers(a: &DMatrix<f64>, upto: usize) -> Vec<DMatrix<f64>> {
    let n = a.nrows();
    let mut out = vec![DMatrix::identity(n, n)];
    for i in 1..=upto {
        let next = &out[i - 1] * a;
        out.push(next);
    }
    out
}

fn curvature_f_from(pw: &[DMatrix<f64>], e: &IntervalMatrix, dt: f64, eta: usize) -> IntervalMatrix {
    let mut acc = e.clone();
    for i in 2..=eta {
        let term = IntervalMatrix::scalar_times(curvature_coef(i, dt), 0.0, &(&pw[i] / factorial(i)));
        acc = acc.add(&term).expect("same shape");
    }
    acc
}

fn curvature_g_from(pw: &[DMatrix<f64>], e: &IntervalMatrix, dt: f64, eta: usize) -> IntervalMatrix {
    let mut acc = e.scale(dt);
    for i in 2..=eta + 1 {
        let term = IntervalMatrix::scalar_times(curvature_coef(i, dt), 0.0, &(&pw[i - 1] / factorial(i)));
        acc = acc.add(&term).expect("same shape");
    }
    acc
}

/// F = ⊕_{i=2}^{η} [(i^{−i/(i−1)} − i^{−1/(i−1)})Δtⁱ, 0]·Aⁱ/i! ⊕ E.
pub fn curvature_f(a: &DMatrix<f64>, dt: f64, eta: usize) -> IntervalMatrix {
    let e = remainder_e(a, dt, eta);
    curvature_f_from(&powers(a, eta), &e, dt, eta)
}

/// G = ⊕_{i=2}^{η+1} [(i^{−i/(i−1)} − i^{−1/(i−1)})Δtⁱ, 0]·A^{i−1}/i! ⊕ EΔt.
pub fn curvature_g(a: &DMatrix<f64>, dt: f64, eta: usize) -> IntervalMatrix {
    let e = remainder_e(a, dt, eta);
    curvature_g_from(&powers(a, eta + 1), &e, dt, eta)
}

/// Smallest η ≤ 50 whose remainder has max-abs entry ≤ tol.
pub fn auto_eta(a: &DMatrix<f64>, dt: f64, tol: f64) -> Result<TruncationOrder, FlowError> {
    let (terms, tail) = abs_series_terms(a, dt, 2);
    let n = a.nrows();
    // suffix sums of the series tail
    let mut suffix = DMatrix::from_element(n, n, tail);
    let mut by_eta = vec![0.0; terms.len()];
    for i in (1..terms.len()).rev() {
        by_eta[i] = suffix.max();
        suffix += &terms[i];
    }
    for eta in 1..=MAX_ETA {
        let e_max = if eta < terms.len() { by_eta[eta] } else { tail };
        if e_max <= tol {
            return Ok(TruncationOrder(eta));
        }
    }
    Err(FlowError::EtaNotReached { tol, dt, max: MAX_ETA })
}

fn condition_estimate(a: &DMatrix<f64>) -> Option<(f64, DMatrix<f64>)> {
    let inv = a.clone().try_inverse()?;
    let c = norm1(a) * norm1(&inv);
    if c.is_finite() {
        Some((c, inv))
    } else {
        None
    }
}

/// T(Δt) = ∫₀^Δt e^{Aθ}dθ = A⁻¹(e^{AΔt} − I).
///
/// The closed form is used when A is well conditioned (condition < 1e8).
/// Otherwise the integrated series Σ AⁱΔt^{i+1}/(i+1)! is summed until a term
/// drops below 1e-16, on a step small enough for fast convergence, and
/// brought back to Δt by the doubling identity T(2h) = (2I + A·T(h))·T(h).
pub fn inner_step_matrix(a: &DMatrix<f64>, dt: f64) -> Result<DMatrix<f64>, FlowError> {
    let n = a.nrows();
    if let Some((cond, inv)) = condition_estimate(a) {
        if cond < 1e8 {
            let phi = expm(a, dt)?;
            return Ok(inv * (phi - DMatrix::identity(n, n)));
        }
    }
    let nrm = norm1(a) * dt;
    let halvings = if nrm > 0.5 { (nrm / 0.5).log2().ceil() as i32 } else { 0 };
    let h = dt * 2f64.powi(-halvings);
    let id = DMatrix::<f64>::identity(n, n);
    let mut term = &id * h;
    let mut sum = term.clone();
    let mut i = 1usize;
    while term.amax() >= 1e-16 * h.min(1.0) && i < 200 {
        term = &term * a * (h / (i + 1) as f64);
        sum += &term;
        i += 1;
    }
    for _ in 0..halvings {
        sum = (&id * 2.0 + a * &sum) * &sum;
    }
    if sum.iter().all(|v| v.is_finite()) {
        Ok(sum)
    } else {
        Err(FlowError::Overflow)
    }
}

/// Outer enclosure of Z_S(Δt): ⊕_{i=0}^{η} AⁱΔt^{i+1}/(i+1)!·S ⊕ EΔt·S.
pub fn outer_particular_step(a: &DMatrix<f64>, s: &Zonotope, dt: f64, eta: usize) -> Result<Zonotope, FlowError> {
    let e = remainder_e(a, dt, eta);
    outer_step_with(&outer_coefficients(&powers(a, eta), dt), &e.scale(dt), s)
}

fn outer_coefficients(pw: &[DMatrix<f64>], dt: f64) -> Vec<DMatrix<f64>> {
    pw.iter().enumerate().map(|(i, p)| p * (dt.powi(i as i32 + 1) / factorial(i + 1))).collect()
}

fn outer_step_with(coefs: &[DMatrix<f64>], e_dt: &IntervalMatrix, s: &Zonotope) -> Result<Zonotope, FlowError> {
    let n = coefs[0].nrows();
    if s.dim() != n {
        return Err(FlowError::Dimension(format!("input set of dim {} for {n} states", s.dim())));
    }
    let mut center = DVector::zeros(n);
    let mut blocks: Vec<DMatrix<f64>> = Vec::with_capacity(coefs.len() + 1);
    for m in coefs {
        center += m * s.center();
        blocks.push(m * s.generators());
    }
    let rem = intmat_mul_zono(e_dt, s)?;
    center += rem.center();
    blocks.push(rem.generators().clone());
    let refs: Vec<&DMatrix<f64>> = blocks.iter().collect();
    Ok(Zonotope::new(center, crate::geomsets::hcat(&refs))?.compact())
}

/// Inner approximation T(Δt)·S of Z_S(Δt) (constant inputs only).
pub fn inner_particular_step(a: &DMatrix<f64>, s: &Zonotope, dt: f64) -> Result<Zonotope, FlowError> {
    let t = inner_step_matrix(a, dt)?;
    Ok(crate::geomsets::zono_linmap(&t, s)?)
}

/// Z(t_{k+1}) = Z(t_k) ⊕ e^{At_k}·Z(Δt).
pub fn propagate_particular(
    z_prev: &Zonotope,
    a: &DMatrix<f64>,
    t_k: f64,
    z_step: &Zonotope,
) -> Result<Zonotope, FlowError> {
    let phi = expm(a, t_k)?;
    propagate_with(z_prev, &phi, z_step)
}

/// Propagation step with e^{At_k} supplied by the caller.
pub fn propagate_with(z_prev: &Zonotope, flow: &DMatrix<f64>, z_step: &Zonotope) -> Result<Zonotope, FlowError> {
    let mapped = crate::geomsets::zono_linmap(flow, z_step)?;
    Ok(zono_minksum(z_prev, &mapped)?)
}

/// Enclosure of the solution for a piecewise-constant input over τ_k.
///
/// With P_k = Σ_{j<k} e^{At_{k−1−j}}T s(t_j) the exact solution at t_k, the
/// solution at t_k + r equals e^{Ar}P_k + T(r)s(t_k). It is enclosed by the
/// chord from P_k to P_{k+1} plus F·{P_k} (curvature of the free motion)
/// plus G·{s(t_k)} (curvature of the input response).
pub fn traj_particular(
    a: &DMatrix<f64>,
    s_traj: &[DVector<f64>],
    dt: f64,
    eta: usize,
    k: usize,
) -> Result<Zonotope, FlowError> {
    if s_traj.len() < k + 1 {
        return Err(FlowError::Dimension(format!("trajectory has {} values, need {}", s_traj.len(), k + 1)));
    }
    let cache = FlowCache::new(a, dt, eta)?;
    let mut p = DVector::zeros(a.nrows());
    for s in &s_traj[..k] {
        p = &cache.phi * &p + &cache.inner_t * s;
    }
    cache.traj_interval(&p, &s_traj[k])
}

/// Outer enclosure of Z_S(τ_k), splitting S = S₀ ⊕ {center(S)}:
/// Z_{S₀}(t_{k+1}) ⊕ Z_{center}(τ_k).
pub fn outer_particular_interval(
    a: &DMatrix<f64>,
    s: &Zonotope,
    k: usize,
    dt: f64,
    eta: usize,
    cache: Option<&FlowCache>,
) -> Result<Zonotope, FlowError> {
    let owned;
    let cache = match cache {
        Some(c) => c,
        None => {
            owned = FlowCache::new(a, dt, eta)?;
            &owned
        }
    };
    let s0 = s.centered();
    let step = cache.outer_step(&s0)?;
    let mut flows = cache.flows(0.0)?;
    let mut acc = Zonotope::origin(a.nrows());
    let mut p = DVector::zeros(a.nrows());
    for j in 0..=k {
        acc = zono_reduce(&propagate_with(&acc, flows.current(), &step)?, 20.0);
        if j < k {
            p = &cache.phi * &p + &cache.inner_t * s.center();
        }
        flows.advance()?;
    }
    Ok(zono_minksum(&acc, &cache.traj_interval(&p, s.center())?)?)
}

/// conv(H, e^{AΔt}H) ⊕ F·H ⊇ { e^{At}x | t ∈ [0,Δt], x ∈ H }.
pub fn homog_outer_interval(
    h: &ConstrainedZonotope,
    a: &DMatrix<f64>,
    dt: f64,
    f: &IntervalMatrix,
) -> Result<ConstrainedZonotope, FlowError> {
    let phi = expm(a, dt)?;
    homog_outer_with(h, &phi, f)
}

pub(crate) fn homog_outer_with(
    h: &ConstrainedZonotope,
    phi: &DMatrix<f64>,
    f: &IntervalMatrix,
) -> Result<ConstrainedZonotope, FlowError> {
    let moved = cz_linmap(phi, h)?;
    let hull = cz_convhull(h, &moved)?;
    let curve = intmat_mul_cz(f, h)?;
    Ok(cz_minksum(&hull, &curve)?)
}

/// μ = √γ‖(e^{AΔt} − I)G‖₂.
pub fn mu_bound(box_gens: &DMatrix<f64>, a: &DMatrix<f64>, dt: f64) -> Result<f64, FlowError> {
    let n = a.nrows();
    if box_gens.nrows() != n {
        return Err(FlowError::Dimension("generator rows".into()));
    }
    if box_gens.ncols() == 0 {
        return Ok(0.0);
    }
    let phi = expm(a, dt)?;
    let m = (phi - DMatrix::identity(n, n)) * box_gens;
    let sv = m.singular_values();
    Ok((box_gens.ncols() as f64).sqrt() * sv.max())
}

/// Precomputed quantities for fixed (A, Δt, η).
#[derive(Clone, Debug)]
pub struct FlowCache {
    pub a: DMatrix<f64>,
    pub dt: f64,
    pub eta: usize,
    /// e^{AΔt}
    pub phi: DMatrix<f64>,
    /// e^{−AΔt}
    pub phi_inv: DMatrix<f64>,
    /// Aⁱ for i = 0..=η+1
    pub powers: Vec<DMatrix<f64>>,
    pub e: IntervalMatrix,
    pub f: IntervalMatrix,
    pub g: IntervalMatrix,
    /// A⁻¹(e^{AΔt} − I)
    pub inner_t: DMatrix<f64>,
    outer_coefs: Vec<DMatrix<f64>>,
    e_dt: IntervalMatrix,
}

impl FlowCache {
    pub fn new(a: &DMatrix<f64>, dt: f64, eta: usize) -> Result<Self, FlowError> {
        if a.nrows() != a.ncols() {
            return Err(FlowError::Dimension(format!("system matrix {:?}", a.shape())));
        }
        if !(dt > 0.0) {
            return Err(FlowError::InvalidGrid(format!("Δt = {dt}")));
        }
        let eta = eta.max(1);
        let pw = powers(a, eta + 1);
        let (terms, tail) = abs_series_terms(a, dt, eta + 1);
        let e = IntervalMatrix::symmetric(remainder_from_terms(&terms, tail, eta));
        let f = curvature_f_from(&pw, &e, dt, eta);
        let g = curvature_g_from(&pw, &e, dt, eta);
        let outer_coefs = outer_coefficients(&pw[..=eta], dt);
        Ok(FlowCache {
            a: a.clone(),
            dt,
            eta,
            phi: expm(a, dt)?,
            phi_inv: expm(a, -dt)?,
            inner_t: inner_step_matrix(a, dt)?,
            e_dt: e.scale(dt),
            powers: pw,
            e,
            f,
            g,
            outer_coefs,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn outer_step(&self, s: &Zonotope) -> Result<Zonotope, FlowError> {
        outer_step_with(&self.outer_coefs, &self.e_dt, s)
    }

    pub fn inner_step(&self, s: &Zonotope) -> Result<Zonotope, FlowError> {
        Ok(crate::geomsets::zono_linmap(&self.inner_t, s)?)
    }

    /// Enclosure over one step of the solution e^{Ar}p + T(r)s, r ∈ [0,Δt].
    pub fn traj_interval(&self, p: &DVector<f64>, s: &DVector<f64>) -> Result<Zonotope, FlowError> {
        let next = &self.phi * p + &self.inner_t * s;
        let chord = Zonotope::new((p + &next) * 0.5, DMatrix::from_column_slice(p.len(), 1, ((&next - p) * 0.5).as_slice()))?;
        let free = intmat_mul_zono(&self.f, &Zonotope::point(p.clone()))?;
        let forced = intmat_mul_zono(&self.g, &Zonotope::point(s.clone()))?;
        Ok(zono_minksum(&zono_minksum(&chord, &free)?, &forced)?.compact())
    }

    pub fn homog_outer(&self, h: &ConstrainedZonotope) -> Result<ConstrainedZonotope, FlowError> {
        homog_outer_with(h, &self.phi, &self.f)
    }

    /// Sequence e^{At_k}, t_k = t0 + kΔt, starting at k = 0.
    pub fn flows(&self, t0: f64) -> Result<FlowSequence<'_>, FlowError> {
        Ok(FlowSequence { cache: self, t0, k: 0, current: expm(&self.a, t0)?, max_drift: 0.0 })
    }
}

/// Running e^{At_k} by repeated multiplication with e^{AΔt}, replaced by a
/// direct `expm` every 64 steps.
pub struct FlowSequence<'a> {
    cache: &'a FlowCache,
    t0: f64,
    k: usize,
    current: DMatrix<f64>,
    max_drift: f64,
}

impl FlowSequence<'_> {
    pub fn current(&self) -> &DMatrix<f64> {
        &self.current
    }

    pub fn step(&self) -> usize {
        self.k
    }

    pub fn time(&self) -> f64 {
        self.t0 + self.k as f64 * self.cache.dt
    }

    /// Largest relative deviation seen at re-validation points.
    pub fn max_drift(&self) -> f64 {
        self.max_drift
    }

    pub fn advance(&mut self) -> Result<(), FlowError> {
        self.k += 1;
        self.current = &self.current * &self.cache.phi;
        if self.k % REVALIDATE_EVERY == 0 {
            let direct = expm(&self.cache.a, self.time())?;
            let scale = direct.amax().max(1.0);
            let drift = (&direct - &self.current).amax() / scale;
            self.max_drift = self.max_drift.max(drift);
            self.current = direct;
        }
        Ok(())
    }
}
