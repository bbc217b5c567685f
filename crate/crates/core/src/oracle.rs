//! Independent checks for the backward algorithms: closed forms in one
//! dimension, RK4 simulation, membership and support comparisons, and
//! sampled game replays.

use crate::backward::{LinSys, ResultKind, WitnessLayout};
use crate::linflow::expm;
use crate::geomsets::{
    poly_to_cz, ConstrainedZonotope, HPolytope, SetError, Support, Zonotope,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

/// Absolute tolerance on the signed distance for a replay to count as a hit.
pub const GAME_TOL: f64 = 1e-4;
/// Evaluation times per step window in replays.
pub const TIMES_PER_WINDOW: usize = 100;
/// Polytope membership slack.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid signal: {0}")]
    Signal(String),
    #[error("invalid oracle input: {0}")]
    Input(String),
    #[error(transparent)]
    Set(#[from] SetError),
}

type Result<T> = std::result::Result<T, OracleError>;

/// Piecewise-constant signal: `values[i]` holds on `[knots[i], knots[i+1])`,
/// the last value also holds from the final knot onwards.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseConstantSignal {
    knots: Vec<f64>,
    values: Vec<DVector<f64>>,
}

impl PiecewiseConstantSignal {
    /// Uniform signal starting at 0 with step `dt`.
    pub fn uniform(values: Vec<DVector<f64>>, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(OracleError::Signal(format!("step {dt} must be positive")));
        }
        let knots = (0..=values.len()).map(|i| i as f64 * dt).collect();
        Self::from_knots(knots, values)
    }

    pub fn constant(value: DVector<f64>, t_end: f64) -> Result<Self> {
        Self::from_knots(vec![0.0, t_end.max(0.0)], vec![value])
    }

    pub fn from_knots(knots: Vec<f64>, values: Vec<DVector<f64>>) -> Result<Self> {
        if values.is_empty() {
            return Err(OracleError::Signal("at least one value is required".into()));
        }
        if knots.len() != values.len() + 1 {
            return Err(OracleError::Signal(format!("{} knots for {} values", knots.len(), values.len())));
        }
        if knots.windows(2).any(|w| !(w[1] >= w[0])) {
            return Err(OracleError::Signal("knots must be nondecreasing".into()));
        }
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(OracleError::Signal("values must share one dimension".into()));
        }
        Ok(PiecewiseConstantSignal { knots, values })
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn value_at(&self, t: f64) -> &DVector<f64> {
        let i = self.knots[1..].partition_point(|&k| k <= t);
        &self.values[i.min(self.values.len() - 1)]
    }
}

fn rk4_span(
    a: &DMatrix<f64>,
    drive: &DVector<f64>,
    x: &mut DVector<f64>,
    len: f64,
    h_max: f64,
) {
    if len <= 0.0 {
        return;
    }
    let n_sub = (len / h_max).ceil().max(1.0) as usize;
    let h = len / n_sub as f64;
    for _ in 0..n_sub {
        let k1 = a * &*x + drive;
        let k2 = a * (&*x + &k1 * (h / 2.0)) + drive;
        let k3 = a * (&*x + &k2 * (h / 2.0)) + drive;
        let k4 = a * (&*x + &k3 * h) + drive;
        *x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
}

/// States of ẋ = Ax + Bu + Ew at the sorted query times, by RK4 with
/// sub-steps no longer than a twentieth of the shortest signal step.
pub fn ode_trajectory(
    sys: &LinSys,
    x0: &DVector<f64>,
    u: &PiecewiseConstantSignal,
    w: &PiecewiseConstantSignal,
    times: &[f64],
) -> Result<Vec<DVector<f64>>> {
    if x0.len() != sys.dim() || u.dim() != sys.b.ncols() || w.dim() != sys.e.ncols() {
        return Err(OracleError::Input("state or signal dimension does not match the system".into()));
    }
    if times.windows(2).any(|p| p[1] < p[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(OracleError::Input("query times must be sorted and nonnegative".into()));
    }
    let t_max = times.last().copied().unwrap_or(0.0);
    let mut events: Vec<f64> =
        u.knots().iter().chain(w.knots().iter()).copied().filter(|&k| k > 0.0 && k < t_max).collect();
    events.extend_from_slice(times);
    events.sort_by(|a, b| a.partial_cmp(b).unwrap());
    events.dedup();

    let min_step = u
        .knots()
        .windows(2)
        .chain(w.knots().windows(2))
        .map(|p| p[1] - p[0])
        .filter(|&d| d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let a_norm = sys.a.abs().row_sum().max();
    let mut h_max = (min_step / 20.0).min(if a_norm > 0.0 { 0.01 / a_norm } else { f64::INFINITY });
    if !h_max.is_finite() {
        h_max = t_max.max(1.0) / 20.0;
    }

    let mut out = Vec::with_capacity(times.len());
    let mut x = x0.clone();
    let mut t = 0.0;
    let mut next_query = 0;
    for &e in &events {
        let mid = 0.5 * (t + e);
        let drive = &sys.b * u.value_at(mid) + &sys.e * w.value_at(mid);
        rk4_span(&sys.a, &drive, &mut x, e - t, h_max);
        t = e;
        while next_query < times.len() && times[next_query] <= t {
            out.push(x.clone());
            next_query += 1;
        }
    }
    while out.len() < times.len() {
        out.push(x.clone());
    }
    Ok(out)
}

/// ξ(t; x0, u, w).
pub fn ode_simulate(
    sys: &LinSys,
    x0: &DVector<f64>,
    u: &PiecewiseConstantSignal,
    w: &PiecewiseConstantSignal,
    t: f64,
) -> Result<DVector<f64>> {
    Ok(ode_trajectory(sys, x0, u, w, &[t])?.pop().expect("one query time"))
}

/// Exact backward reachable interval of ẋ = ax + u + w, or None when empty.
///
/// With φ = (e^{at} − 1)/a every particular solution is φ·S, so the AE set is
/// e^{−at}((X ⊕ −φW) ⊖ φU) and the EA set is e^{−at}((X ⊖ φW) ⊕ −φU).
pub fn analytic_1d_brs(
    a: f64,
    u: (f64, f64),
    w: (f64, f64),
    x_end: (f64, f64),
    t: f64,
    kind: ResultKind,
) -> Option<(f64, f64)> {
    let phi = if a == 0.0 { t } else { (a * t).exp_m1() / a };
    let (lo, hi) = match kind {
        ResultKind::AeOuter | ResultKind::AeInner => {
            (x_end.0 - phi * w.1 - phi * u.0, x_end.1 - phi * w.0 - phi * u.1)
        }
        ResultKind::EaOuter | ResultKind::EaInner => {
            (x_end.0 - phi * w.0 - phi * u.1, x_end.1 - phi * w.1 - phi * u.0)
        }
    };
    let scale = (-a * t).exp();
    (lo <= hi).then_some((scale * lo, scale * hi))
}

/// A set a point can be tested against.
#[derive(Clone, Copy, Debug)]
pub enum SetRef<'a> {
    Polytope(&'a HPolytope),
    ConZono(&'a ConstrainedZonotope),
}

impl<'a> From<&'a HPolytope> for SetRef<'a> {
    fn from(p: &'a HPolytope) -> Self {
        SetRef::Polytope(p)
    }
}

impl<'a> From<&'a ConstrainedZonotope> for SetRef<'a> {
    fn from(cz: &'a ConstrainedZonotope) -> Self {
        SetRef::ConZono(cz)
    }
}

pub fn membership<'a>(x: &DVector<f64>, set: impl Into<SetRef<'a>>) -> Result<bool> {
    Ok(match set.into() {
        SetRef::Polytope(p) => p.contains(x, MEMBERSHIP_TOL),
        SetRef::ConZono(cz) => cz.contains(x)?,
    })
}

/// maxⱼ ρ(S_in, ℓⱼ) − ρ(S_out, ℓⱼ) over the columns of `dirs`.
///
/// Nonpositive values certify containment along every tested direction.
pub fn directional_gap(s_in: &dyn Support, s_out: &dyn Support, dirs: &DMatrix<f64>) -> Result<f64> {
    let mut gap = f64::NEG_INFINITY;
    for j in 0..dirs.ncols() {
        let l = dirs.column(j).into_owned();
        let (a, b) = (s_in.support(&l)?, s_out.support(&l)?);
        let d = if a == f64::NEG_INFINITY || b == f64::INFINITY { f64::NEG_INFINITY } else { a - b };
        gap = gap.max(d);
    }
    Ok(gap)
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct GameVerdict {
    pub samples: usize,
    pub passes: usize,
    /// Largest signed distance to the target over failing or passing samples.
    pub worst_violation: f64,
    pub stage_log: Vec<String>,
}

impl GameVerdict {
    pub fn all_passed(&self) -> bool {
        self.samples > 0 && self.passes == self.samples
    }

    pub fn failures(&self) -> usize {
        self.samples - self.passes
    }

    pub fn merge(&mut self, other: GameVerdict) {
        if self.samples == 0 {
            self.worst_violation = other.worst_violation;
        } else if other.samples > 0 {
            self.worst_violation = self.worst_violation.max(other.worst_violation);
        }
        self.samples += other.samples;
        self.passes += other.passes;
        self.stage_log.extend(other.stage_log);
    }
}

fn sample_rng(seed: u64, stream: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Random disturbance signal on [0, t_end] with step `dt`: a random vertex of
/// W per step, or uniform factors per step.
pub fn random_disturbance<R: Rng>(
    w: &Zonotope,
    t_end: f64,
    dt: f64,
    rng: &mut R,
    vertex: bool,
) -> Result<PiecewiseConstantSignal> {
    let steps = (t_end / dt).ceil().max(1.0) as usize;
    let values = (0..steps)
        .map(|_| {
            let f = DVector::from_fn(w.num_generators(), |_, _| {
                if vertex {
                    if rng.gen_bool(0.5) {
                        1.0
                    } else {
                        -1.0
                    }
                } else {
                    rng.gen_range(-1.0..=1.0)
                }
            });
            w.point_at(&f)
        })
        .collect();
    PiecewiseConstantSignal::uniform(values, dt)
}

/// Disturbance that takes, on every step, the vertex of W pushing the state
/// at `t_ref` furthest along `dir`, i.e. the maximizer of ℓᵀe^{A(t_ref − s)}Ew.
pub fn extreme_disturbance(
    sys: &LinSys,
    dir: &DVector<f64>,
    t_ref: f64,
    t_end: f64,
    dt: f64,
) -> Result<PiecewiseConstantSignal> {
    let steps = (t_end / dt).ceil().max(1.0) as usize;
    let g = sys.w.generators();
    let values = (0..steps)
        .map(|k| {
            let lag = t_ref - (k as f64 + 0.5) * dt;
            let flow = expm(&sys.a, lag).map_err(|e| OracleError::Input(e.to_string()))?;
            let pull = (&flow * &sys.e).tr_mul(dir);
            let signs = g.tr_mul(&pull).map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
            Ok(sys.w.point_at(&signs))
        })
        .collect::<Result<Vec<_>>>()?;
    PiecewiseConstantSignal::uniform(values, dt)
}

/// Disturbance number `index` of a sample batch: odd indices are uniform,
/// even ones are vertex signals, half of them aimed along a random row of
/// `normals` (or a random direction when there are none).
fn sampled_disturbance(
    sys: &LinSys,
    normals: &DMatrix<f64>,
    index: usize,
    t_ref: f64,
    t_end: f64,
    dt: f64,
    rng: &mut ChaCha8Rng,
) -> Result<PiecewiseConstantSignal> {
    if index % 4 != 0 {
        return random_disturbance(&sys.w, t_end, dt, rng, index % 2 == 0);
    }
    let dir = if normals.nrows() > 0 {
        normals.row(rng.gen_range(0..normals.nrows())).transpose()
    } else {
        DVector::from_fn(sys.dim(), |_, _| rng.gen_range(-1.0..1.0))
    };
    extreme_disturbance(sys, &dir, t_ref, t_end, dt)
}

/// Time window in which the target must be hit, with the decoded inputs.
#[derive(Clone, Debug)]
pub struct ReplayWindow {
    pub t_lo: f64,
    pub t_hi: f64,
    /// Step of the sampled disturbance signals.
    pub signal_dt: f64,
}

impl ReplayWindow {
    pub fn point(t: f64, signal_dt: f64) -> Self {
        ReplayWindow { t_lo: t, t_hi: t, signal_dt }
    }

    fn times(&self) -> Vec<f64> {
        if self.t_hi <= self.t_lo {
            return vec![self.t_lo];
        }
        (0..TIMES_PER_WINDOW)
            .map(|i| self.t_lo + (self.t_hi - self.t_lo) * i as f64 / (TIMES_PER_WINDOW - 1) as f64)
            .collect()
    }
}

/// Input signal on [0, t_end] realizing a witness.
///
/// The decoded schedule ends at the layout's reference time; the center of U
/// fills any time before the first segment and after the reference time.
pub fn witness_signal(layout: &WitnessLayout, factors: &DVector<f64>, t_end: f64) -> Result<PiecewiseConstantSignal> {
    let segs = layout.decode(factors);
    let mut knots = Vec::with_capacity(segs.len() + 3);
    let mut values = Vec::with_capacity(segs.len() + 2);
    if segs.first().map_or(true, |s| s.start > 1e-12) {
        knots.push(0.0);
        values.push(layout.u_center.clone());
    }
    for s in &segs {
        knots.push(s.start.max(0.0));
        values.push(s.u.clone());
    }
    let last = segs.last().map_or(0.0, |s| s.end);
    if t_end > last + 1e-12 {
        knots.push(last);
        values.push(layout.u_center.clone());
    }
    knots.push(t_end.max(last));
    PiecewiseConstantSignal::from_knots(knots, values)
}

/// Replays sampled points of an EA inner set against sampled disturbances.
///
/// Each point x0 = c + Gα is driven by the input decoded from α; it passes
/// when, for every disturbance signal, the trajectory comes within
/// [`GAME_TOL`] of the target at some time of the window. Superposition
/// splits each trajectory into an input part and a disturbance part.
pub fn ea_witness_replay(
    sys: &LinSys,
    set: &ConstrainedZonotope,
    layout: &WitnessLayout,
    target: &HPolytope,
    window: &ReplayWindow,
    n_x0: usize,
    n_w: usize,
    seed: u64,
) -> Result<GameVerdict> {
    let times = window.times();
    let zero_u = PiecewiseConstantSignal::constant(DVector::zeros(sys.b.ncols()), window.t_hi)?;
    let zero_w = PiecewiseConstantSignal::constant(DVector::zeros(sys.e.ncols()), window.t_hi)?;
    let origin = DVector::zeros(sys.dim());

    let mut w_paths = Vec::with_capacity(n_w);
    for i in 0..n_w {
        let mut rng = sample_rng(seed, 1, i);
        let w = sampled_disturbance(sys, target.lhs(), i, window.t_hi, window.t_hi, window.signal_dt, &mut rng)?;
        w_paths.push(ode_trajectory(sys, &origin, &zero_u, &w, &times)?);
    }

    let mut rng = sample_rng(seed, 2, 0);
    let factors = set.sample_factors(&mut rng, n_x0)?;
    let mut verdict = GameVerdict { samples: factors.len(), worst_violation: f64::NEG_INFINITY, ..Default::default() };
    for (i, alpha) in factors.iter().enumerate() {
        let x0 = set.point_at(alpha);
        let u = witness_signal(layout, alpha, window.t_hi)?;
        let base = ode_trajectory(sys, &x0, &u, &zero_w, &times)?;
        let mut worst = f64::NEG_INFINITY;
        for wp in &w_paths {
            let hit = base
                .iter()
                .zip(wp.iter())
                .map(|(xb, xw)| target.signed_distance(&(xb + xw)))
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(hit);
        }
        if worst <= GAME_TOL {
            verdict.passes += 1;
        } else if verdict.stage_log.len() < 8 {
            verdict.stage_log.push(format!("sample {i}: signed distance {worst:.3e}"));
        }
        verdict.worst_violation = verdict.worst_violation.max(worst);
    }
    Ok(verdict)
}

/// Samples states that provably reach the target and checks that the
/// supplied outer set contains them.
///
/// U must be a single point. A target point x_end, a time t in the window
/// and a disturbance are sampled; integrating the time-inverted dynamics for
/// t gives a state x0 with ξ(t; x0, u, w) = x_end. `contains` receives x0
/// and t.
pub fn ae_backward_sampling(
    sys: &LinSys,
    target: &HPolytope,
    window: &ReplayWindow,
    n_samples: usize,
    seed: u64,
    contains: &dyn Fn(&DVector<f64>, f64) -> Result<bool>,
) -> Result<GameVerdict> {
    if sys.u.generators().iter().any(|&g| g != 0.0) {
        return Err(OracleError::Input("backward sampling needs a single-point input set".into()));
    }
    let inverted = LinSys::new(
        -&sys.a,
        -&sys.b,
        -&sys.e,
        sys.u.clone(),
        sys.w.clone(),
    )
    .map_err(|e| OracleError::Input(e.to_string()))?;
    let target_cz = poly_to_cz(target)?;
    let no_normals = DMatrix::zeros(0, sys.dim());
    let mut rng = sample_rng(seed, 3, 0);
    let ends = target_cz.sample_factors(&mut rng, n_samples)?;
    let mut verdict = GameVerdict { samples: ends.len(), worst_violation: f64::NEG_INFINITY, ..Default::default() };
    for (i, alpha) in ends.iter().enumerate() {
        let mut rng = sample_rng(seed, 4, i);
        let t = if window.t_hi > window.t_lo { rng.gen_range(window.t_lo..=window.t_hi) } else { window.t_lo };
        let x_end = target_cz.point_at(alpha);
        let u = PiecewiseConstantSignal::constant(sys.u.center().clone(), t)?;
        let w = sampled_disturbance(&inverted, &no_normals, i, t, t.max(window.signal_dt), window.signal_dt, &mut rng)?;
        let x0 = ode_simulate(&inverted, &x_end, &u, &w, t)?;
        if contains(&x0, t)? {
            verdict.passes += 1;
        } else if verdict.stage_log.len() < 8 {
            verdict.stage_log.push(format!("sample {i}: t = {t:.4}, x0 outside"));
        }
    }
    verdict.worst_violation = verdict.failures() as f64;
    Ok(verdict)
}
