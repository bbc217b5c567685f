//! Minimal (AE) and maximal (EA) backward reachable sets, for a single time
//! point and over a time interval.
//!
//! All particular solutions are zonotopes. Target-derived sets stay
//! H-polytopes until they have to be combined with a zonotope by Minkowski
//! sum, at which point they are converted to constrained zonotopes.

use crate::geomsets::{
    cz_convhull, cz_linmap, cz_minksum, cz_poly_intersect, intmat_mul_zono, poly_box, poly_is_empty,
    poly_map_with_inverse, poly_minkdiff, poly_outer_minksum, poly_support, poly_to_cz, poly_to_cz_in_box,
    zono_linmap, zono_minksum, zono_reduce, zono_support, Ball, ConstrainedZonotope, HPolytope, Interval, SetError,
    Support, Zonotope,
};
use crate::linflow::{
    auto_eta, expm, inner_step_matrix, mu_bound, propagate_with, FlowCache, FlowError, StepGrid, DEFAULT_ETA_TOL,
};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

/// Default zonotope order above which outer particular solutions are reduced.
pub const DEFAULT_MAX_ORDER: f64 = 20.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackwardError {
    #[error("invalid system: {0}")]
    System(String),
    #[error("invalid specification: {0}")]
    Spec(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Set(#[from] SetError),
}

pub type Result<T> = std::result::Result<T, BackwardError>;

/// ẋ = Ax + Bu + Ew with u ∈ U and w ∈ W.
#[derive(Clone, Debug)]
pub struct LinSys {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub u: Zonotope,
    pub w: Zonotope,
}

impl LinSys {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, e: DMatrix<f64>, u: Zonotope, w: Zonotope) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || n == 0 {
            return Err(BackwardError::System(format!("A must be square and nonempty, got {:?}", a.shape())));
        }
        if b.nrows() != n || e.nrows() != n {
            return Err(BackwardError::System(format!("B and E need {n} rows, got {} and {}", b.nrows(), e.nrows())));
        }
        if u.dim() != b.ncols() {
            return Err(BackwardError::System(format!("U has dimension {}, B has {} columns", u.dim(), b.ncols())));
        }
        if w.dim() != e.ncols() {
            return Err(BackwardError::System(format!("W has dimension {}, E has {} columns", w.dim(), e.ncols())));
        }
        if !a.iter().chain(b.iter()).chain(e.iter()).all(|v| v.is_finite()) {
            return Err(BackwardError::System("system matrices must be finite".into()));
        }
        Ok(LinSys { a, b, e, u, w })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// B·U.
    pub fn input_set(&self) -> Zonotope {
        zono_linmap(&self.b, &self.u).expect("dimensions checked at construction")
    }

    /// E·W.
    pub fn disturbance_set(&self) -> Zonotope {
        zono_linmap(&self.e, &self.w).expect("dimensions checked at construction")
    }
}

/// The same system with W replaced by {0}.
pub fn unperturbed_mode(sys: &LinSys) -> LinSys {
    LinSys { w: Zonotope::origin(sys.w.dim()), ..sys.clone() }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Horizon {
    Point { t: f64 },
    Interval { t0: f64, t_end: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaChoice {
    /// Smallest order whose remainder is below the tolerance.
    Auto(f64),
    Fixed(usize),
}

impl Default for EtaChoice {
    fn default() -> Self {
        EtaChoice::Auto(DEFAULT_ETA_TOL)
    }
}

#[derive(Clone, Debug)]
pub struct BackwardSpec {
    pub target: HPolytope,
    pub horizon: Horizon,
    pub steps: usize,
    pub eta: EtaChoice,
    /// Directions appended to [I −I] for the time-interval AE halfspaces, one per column.
    pub extra_directions: Option<DMatrix<f64>>,
    pub max_order: f64,
}

impl BackwardSpec {
    pub fn time_point(target: HPolytope, t: f64, steps: usize) -> Self {
        BackwardSpec {
            target,
            horizon: Horizon::Point { t },
            steps,
            eta: EtaChoice::default(),
            extra_directions: None,
            max_order: DEFAULT_MAX_ORDER,
        }
    }

    pub fn time_interval(target: HPolytope, t0: f64, t_end: f64, steps: usize) -> Self {
        BackwardSpec { horizon: Horizon::Interval { t0, t_end }, ..BackwardSpec::time_point(target, 1.0, steps) }
    }

    pub fn with_eta(mut self, eta: EtaChoice) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_directions(mut self, dirs: DMatrix<f64>) -> Self {
        self.extra_directions = Some(dirs);
        self
    }

    pub fn with_max_order(mut self, order: f64) -> Self {
        self.max_order = order;
        self
    }

    /// N = [I −I extra].
    pub fn directions(&self, n: usize) -> DMatrix<f64> {
        let extra = self.extra_directions.as_ref().map_or(0, |d| d.ncols());
        let mut out = DMatrix::zeros(n, 2 * n + extra);
        for i in 0..n {
            out[(i, i)] = 1.0;
            out[(i, n + i)] = -1.0;
        }
        if let Some(d) = &self.extra_directions {
            out.view_mut((0, 2 * n), (n, extra)).copy_from(d);
        }
        out
    }

    pub fn grid(&self) -> Result<StepGrid> {
        let g = match self.horizon {
            Horizon::Point { t } => StepGrid::new(0.0, t, self.steps),
            Horizon::Interval { t0, t_end } => StepGrid::new(t0, t_end, self.steps),
        };
        g.map_err(|e| BackwardError::Spec(e.to_string()))
    }

    fn check(&self, sys: &LinSys, interval: bool) -> Result<StepGrid> {
        if self.target.dim() != sys.dim() {
            return Err(BackwardError::Spec(format!(
                "target has dimension {}, system has {}",
                self.target.dim(),
                sys.dim()
            )));
        }
        match (self.horizon, interval) {
            (Horizon::Point { .. }, true) => {
                return Err(BackwardError::Spec("time-interval algorithm needs an interval horizon".into()))
            }
            (Horizon::Interval { .. }, false) => {
                return Err(BackwardError::Spec("time-point algorithm needs a time-point horizon".into()))
            }
            _ => {}
        }
        if let Some(d) = &self.extra_directions {
            if d.nrows() != sys.dim() {
                return Err(BackwardError::Spec(format!("directions need {} rows", sys.dim())));
            }
        }
        if !(self.max_order >= 1.0) {
            return Err(BackwardError::Spec(format!("max_order {} < 1", self.max_order)));
        }
        self.grid()
    }

    /// Truncation order used for step dt.
    pub fn eta(&self, a: &DMatrix<f64>, dt: f64) -> Result<usize> {
        Ok(match self.eta {
            EtaChoice::Fixed(k) if k >= 1 => k,
            EtaChoice::Fixed(_) => return Err(BackwardError::Spec("η must be ≥ 1".into())),
            EtaChoice::Auto(tol) => auto_eta(a, dt, tol)?.0,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultKind {
    AeOuter,
    AeInner,
    EaOuter,
    EaInner,
}

/// Stage at which a computation became empty.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyStage {
    /// Target shrunk by the time-interval curvature terms.
    TargetErosion,
    /// Target ⊖ input particular solution.
    InputErosion,
    /// Target ⊖ disturbance particular solution.
    DisturbanceErosion,
    /// Intersection with the support halfspaces.
    Intersection,
    /// Final set.
    Result,
}

#[derive(Clone, Debug)]
pub enum TimePointSet {
    Polytope(HPolytope),
    ConZono(ConstrainedZonotope),
}

impl TimePointSet {
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> Result<bool> {
        Ok(match self {
            TimePointSet::Polytope(p) => p.contains(x, tol),
            TimePointSet::ConZono(cz) => cz.contains(x)?,
        })
    }
}

impl Support for TimePointSet {
    fn dim(&self) -> usize {
        match self {
            TimePointSet::Polytope(p) => p.dim(),
            TimePointSet::ConZono(cz) => cz.dim(),
        }
    }

    fn support(&self, dir: &DVector<f64>) -> std::result::Result<f64, SetError> {
        match self {
            TimePointSet::Polytope(p) => poly_support(p, dir),
            TimePointSet::ConZono(cz) => cz.support(dir),
        }
    }
}

/// Support values along the target normals after a named stage.
#[derive(Clone, Debug, Serialize)]
pub struct StageLog {
    pub stage: &'static str,
    pub values: Vec<f64>,
}

/// Input schedule interval, as a lag before the reference time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LagBlock {
    pub lag_start: f64,
    pub lag_end: f64,
}

/// Where the input particular solution sits inside a set's factors, so that
/// any point of the set can be mapped back to a piecewise-constant input.
///
/// The set contains the term −Ž_U(t_ref); its generators occupy the columns
/// `offset..offset + blocks.len()·γ_u`, block i being e^{A·lagᵢ}·T·B·G_U.
#[derive(Clone, Debug)]
pub struct WitnessLayout {
    pub offset: usize,
    pub u_center: DVector<f64>,
    pub u_gens: DMatrix<f64>,
    pub blocks: Vec<LagBlock>,
    pub reference_time: f64,
}

/// Constant input on the forward-time interval [start, end].
#[derive(Clone, Debug, PartialEq)]
pub struct InputSegment {
    pub start: f64,
    pub end: f64,
    pub u: DVector<f64>,
}

impl WitnessLayout {
    pub fn num_columns(&self) -> usize {
        self.blocks.len() * self.u_gens.ncols()
    }

    /// Piecewise-constant input realizing the Ž_U component of the point
    /// with the given factors, sorted by time and ending at `reference_time`.
    pub fn decode(&self, factors: &DVector<f64>) -> Vec<InputSegment> {
        let g = self.u_gens.ncols();
        let mut segs: Vec<InputSegment> = self
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let alpha = factors.rows(self.offset + i * g, g);
                InputSegment {
                    start: self.reference_time - b.lag_end,
                    end: self.reference_time - b.lag_start,
                    u: &self.u_center + &self.u_gens * alpha,
                }
            })
            .collect();
        segs.sort_by(|a, b| a.start.partial_cmp(&b.start).unwrap_or(std::cmp::Ordering::Equal));
        segs
    }
}

#[derive(Clone, Debug)]
pub struct TimePointResult {
    pub set: TimePointSet,
    pub kind: ResultKind,
    pub t: f64,
    pub empty: Option<EmptyStage>,
    pub diagnostics: Vec<StageLog>,
    pub witness: Option<WitnessLayout>,
}

impl TimePointResult {
    pub fn is_empty(&self) -> bool {
        self.empty.is_some()
    }
}

#[derive(Clone, Debug)]
pub enum Piece {
    Set(ConstrainedZonotope),
    Empty(EmptyStage),
}

impl Piece {
    pub fn set(&self) -> Option<&ConstrainedZonotope> {
        match self {
            Piece::Set(cz) => Some(cz),
            Piece::Empty(_) => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TimeIntervalResult {
    pub pieces: Vec<Piece>,
    pub kind: ResultKind,
    pub grid: StepGrid,
    /// ⟨N, p⟩ intersected with every piece (AE only).
    pub halfspaces: Option<HPolytope>,
    /// Input bookkeeping per piece (EA only).
    pub witnesses: Vec<Option<WitnessLayout>>,
    /// Largest drift between propagated and direct exponentials.
    pub flow_drift: f64,
}

impl TimeIntervalResult {
    pub fn nonempty_count(&self) -> usize {
        self.pieces.iter().filter(|p| p.set().is_some()).count()
    }

    /// Membership in the union of pieces, by factor feasibility LPs.
    pub fn union_contains(&self, x: &DVector<f64>) -> Result<Option<usize>> {
        for (k, p) in self.pieces.iter().enumerate() {
            if let Piece::Set(cz) = p {
                if cz.contains(x)? {
                    return Ok(Some(k));
                }
            }
        }
        Ok(None)
    }
}

fn target_values(target: &HPolytope, set: &dyn Support) -> std::result::Result<Vec<f64>, SetError> {
    (0..target.num_constraints()).map(|j| set.support(&target.normal(j))).collect()
}

fn reduce_if_needed(z: Zonotope, max_order: f64) -> Zonotope {
    if z.order() > max_order {
        zono_reduce(&z, max_order)
    } else {
        z
    }
}

/// Outer particular solution Ẑ_S(kh) after `steps` propagation steps.
fn outer_particular(cache: &FlowCache, s: &Zonotope, steps: usize, max_order: f64) -> Result<Zonotope> {
    let step = cache.outer_step(s)?;
    let mut flows = cache.flows(0.0)?;
    let mut acc = Zonotope::origin(cache.dim());
    for _ in 0..steps {
        acc = reduce_if_needed(propagate_with(&acc, flows.current(), &step)?, max_order);
        flows.advance()?;
    }
    Ok(acc)
}

/// Inner particular solution Σₖ e^{A·kh}·T·B·U kept generator-exact, with the
/// lag of each block.
struct InnerInput {
    center: DVector<f64>,
    blocks: Vec<DMatrix<f64>>,
    lags: Vec<LagBlock>,
}

impl InnerInput {
    fn new(n: usize) -> Self {
        InnerInput { center: DVector::zeros(n), blocks: Vec::new(), lags: Vec::new() }
    }

    /// Adds e^{A·lag}·T·(B c_U + B G_U α).
    fn push(&mut self, flow: &DMatrix<f64>, tb: &DMatrix<f64>, u: &Zonotope, lag: f64, step: f64) {
        let m = flow * tb;
        self.center += &m * u.center();
        self.blocks.push(&m * u.generators());
        self.lags.push(LagBlock { lag_start: lag, lag_end: lag + step });
    }

    fn zonotope(&self) -> Zonotope {
        let refs: Vec<&DMatrix<f64>> = self.blocks.iter().collect();
        let gens = if refs.is_empty() {
            DMatrix::zeros(self.center.len(), 0)
        } else {
            crate::geomsets::hcat(&refs)
        };
        Zonotope::new(self.center.clone(), gens).expect("finite blocks")
    }

    fn layout(&self, u: &Zonotope, offset: usize, reference_time: f64) -> WitnessLayout {
        WitnessLayout {
            offset,
            u_center: u.center().clone(),
            u_gens: u.generators().clone(),
            blocks: self.lags.clone(),
            reference_time,
        }
    }
}

fn inner_input(cache: &FlowCache, b: &DMatrix<f64>, u: &Zonotope, steps: usize) -> Result<InnerInput> {
    let tb = &cache.inner_t * b;
    let mut acc = InnerInput::new(cache.dim());
    let mut flows = cache.flows(0.0)?;
    for k in 0..steps {
        acc.push(flows.current(), &tb, u, k as f64 * cache.dt, cache.dt);
        flows.advance()?;
    }
    Ok(acc)
}

struct TimePointParts {
    t: f64,
    flow_inv: DMatrix<f64>,
    cache: FlowCache,
    steps: usize,
    max_order: f64,
}

impl TimePointParts {
    fn new(sys: &LinSys, spec: &BackwardSpec) -> Result<Self> {
        let grid = spec.check(sys, false)?;
        let dt = grid.dt();
        let eta = spec.eta(&sys.a, dt)?;
        Ok(TimePointParts {
            t: grid.t_end,
            flow_inv: expm(&sys.a, -grid.t_end)?,
            cache: FlowCache::new(&sys.a, dt, eta)?,
            steps: grid.steps,
            max_order: spec.max_order,
        })
    }

    fn outer(&self, s: &Zonotope) -> Result<Zonotope> {
        outer_particular(&self.cache, s, self.steps, self.max_order)
    }

    fn inner(&self, b: &DMatrix<f64>, u: &Zonotope) -> Result<InnerInput> {
        inner_input(&self.cache, b, u, self.steps)
    }
}

fn empty_point_result(n: usize, kind: ResultKind, t: f64, stage: EmptyStage, diag: Vec<StageLog>) -> TimePointResult {
    TimePointResult {
        set: TimePointSet::ConZono(ConstrainedZonotope::empty(n)),
        kind,
        t,
        empty: Some(stage),
        diagnostics: diag,
        witness: None,
    }
}

/// Polytope ⊇ BRS_AE(−t): e^{−At}((X ⊕̂ −Ẑ_W(t)) ⊖ Ž_U(t)).
pub fn ae_tp_outer(sys: &LinSys, spec: &BackwardSpec) -> Result<TimePointResult> {
    let parts = TimePointParts::new(sys, spec)?;
    let zw = parts.outer(&sys.disturbance_set())?;
    let zu = parts.inner(&sys.b, &sys.u)?.zonotope();
    let mut diag = Vec::new();
    let widened = poly_outer_minksum(&spec.target, &zw.neg())?;
    diag.push(StageLog { stage: "target_plus_disturbance", values: widened.rhs().iter().copied().collect() });
    let eroded = poly_minkdiff(&widened, &zu)?;
    diag.push(StageLog { stage: "minus_input", values: eroded.rhs().iter().copied().collect() });
    let flow = expm(&sys.a, parts.t)?;
    let set = poly_map_with_inverse(&flow, &eroded)?;
    let empty = if poly_is_empty(&set)? { Some(EmptyStage::Result) } else { None };
    Ok(TimePointResult {
        set: TimePointSet::Polytope(set),
        kind: ResultKind::AeOuter,
        t: parts.t,
        empty,
        diagnostics: diag,
        witness: None,
    })
}

/// Constrained zonotope ⊆ BRS_AE(−t): e^{−At}(czof(X ⊖ Ẑ_U(t)) ⊕ −Ž_W(t)).
pub fn ae_tp_inner(sys: &LinSys, spec: &BackwardSpec) -> Result<TimePointResult> {
    let parts = TimePointParts::new(sys, spec)?;
    let zu = parts.outer(&sys.input_set())?;
    let zw = parts.inner(&sys.e, &sys.w)?.zonotope();
    let eroded = poly_minkdiff(&spec.target, &zu)?;
    let diag = vec![StageLog { stage: "minus_input", values: eroded.rhs().iter().copied().collect() }];
    if poly_is_empty(&eroded)? {
        return Ok(empty_point_result(sys.dim(), ResultKind::AeInner, parts.t, EmptyStage::InputErosion, diag));
    }
    let cz = poly_to_cz(&eroded)?;
    let summed = cz_minksum(&cz, &ConstrainedZonotope::from_zonotope(&zw.neg()))?;
    let set = cz_linmap(&parts.flow_inv, &summed)?;
    Ok(TimePointResult {
        set: TimePointSet::ConZono(set),
        kind: ResultKind::AeInner,
        t: parts.t,
        empty: None,
        diagnostics: diag,
        witness: None,
    })
}

/// Constrained zonotope ⊇ BRS_EA(−t): e^{−At}(czof(X ⊖ Ž_W(t)) ⊕ −Ẑ_U(t)).
pub fn ea_tp_outer(sys: &LinSys, spec: &BackwardSpec) -> Result<TimePointResult> {
    let parts = TimePointParts::new(sys, spec)?;
    let zw = parts.inner(&sys.e, &sys.w)?.zonotope();
    let zu = parts.outer(&sys.input_set())?;
    ea_tp_finish(sys, spec, &parts, &zw, &zu, None, ResultKind::EaOuter)
}

/// Constrained zonotope ⊆ BRS_EA(−t): e^{−At}(czof(X ⊖ Ẑ_W(t)) ⊕ −Ž_U(t)).
///
/// The result carries a [`WitnessLayout`] for input reconstruction.
pub fn ea_tp_inner(sys: &LinSys, spec: &BackwardSpec) -> Result<TimePointResult> {
    let parts = TimePointParts::new(sys, spec)?;
    let zw = parts.outer(&sys.disturbance_set())?;
    let zu = parts.inner(&sys.b, &sys.u)?;
    ea_tp_finish(sys, spec, &parts, &zw, &zu.zonotope(), Some(&zu), ResultKind::EaInner)
}

fn ea_tp_finish(
    sys: &LinSys,
    spec: &BackwardSpec,
    parts: &TimePointParts,
    zw: &Zonotope,
    zu: &Zonotope,
    bookkeeping: Option<&InnerInput>,
    kind: ResultKind,
) -> Result<TimePointResult> {
    let eroded = poly_minkdiff(&spec.target, zw)?;
    let diag = vec![StageLog { stage: "minus_disturbance", values: eroded.rhs().iter().copied().collect() }];
    if poly_is_empty(&eroded)? {
        return Ok(empty_point_result(sys.dim(), kind, parts.t, EmptyStage::DisturbanceErosion, diag));
    }
    let cz = poly_to_cz(&eroded)?;
    let offset = cz.num_generators();
    let summed = cz_minksum(&cz, &ConstrainedZonotope::from_zonotope(&zu.neg()))?;
    let set = cz_linmap(&parts.flow_inv, &summed)?;
    Ok(TimePointResult {
        set: TimePointSet::ConZono(set),
        kind,
        t: parts.t,
        empty: None,
        diagnostics: diag,
        witness: bookkeeping.map(|b| b.layout(&sys.u, offset, parts.t)),
    })
}

/// Steps and step size used to reach t0 > 0 before the main loop.
fn lead_in(t0: f64, dt: f64) -> (usize, f64) {
    if t0 <= 0.0 {
        return (0, 0.0);
    }
    let count = ((t0 / dt) - 1e-9).ceil().max(1.0) as usize;
    (count, t0 / count as f64)
}

/// Outer approximation of BRS_AE(−τ) as a union of constrained zonotopes.
///
/// Each piece encloses the states that reach the target during τ_k under the
/// constant center input, and is intersected with the halfspaces ⟨N, p⟩ that
/// bound the backward sets of the direction-wise extremal inputs.
pub fn ae_ti_outer(sys: &LinSys, spec: &BackwardSpec) -> Result<TimeIntervalResult> {
    let grid = spec.check(sys, true)?;
    let n = sys.dim();
    let dt = grid.dt();
    let eta = spec.eta(&sys.a, dt)?;
    let neg_a = -&sys.a;
    let fwd = FlowCache::new(&sys.a, dt, eta)?;
    let inv = FlowCache::new(&neg_a, dt, eta)?;

    let ew0 = sys.disturbance_set().centered();
    let s = sys.disturbance_set().center() + sys.input_set().center();
    let dirs = spec.directions(n);
    let q = dirs.ncols();

    // particular solutions of the time-inverted dynamics at t0
    let (lead, h) = lead_in(grid.t0, dt);
    let mut zw0 = Zonotope::origin(n);
    let mut u_support = vec![0.0; q];
    if lead > 0 {
        let inv_h = FlowCache::new(&neg_a, h, eta)?;
        zw0 = outer_particular(&inv_h, &ew0, lead, spec.max_order)?;
        let tb = &inv_h.inner_t * &sys.b;
        let mut flows = inv_h.flows(0.0)?;
        for _ in 0..lead {
            let m = flows.current() * &tb;
            for (j, rho) in u_support.iter_mut().enumerate() {
                *rho += zono_support(&sys.u.centered(), &m.tr_mul(&dirs.column(j)))?;
            }
            flows.advance()?;
        }
    }
    let mut traj_state = inner_step_matrix(&neg_a, grid.t0)? * &s;
    let w_step = inv.outer_step(&ew0)?;
    let tb_inv = &inv.inner_t * &sys.b;

    let cz_target = poly_to_cz(&spec.target)?;
    let target_box = cz_target.relaxation();

    let mut inv_flows = inv.flows(grid.t0)?;
    // ρ(X, e^{−At_k}ᵀℓⱼ) for the current k
    let target_rho = |flow: &DMatrix<f64>| -> Result<Vec<f64>> {
        (0..q).map(|j| Ok(poly_support(&spec.target, &flow.tr_mul(&dirs.column(j)))?)).collect()
    };
    let mut rho_now = target_rho(inv_flows.current())?;

    let mut p = vec![f64::NEG_INFINITY; q];
    let mut explicit = Vec::with_capacity(grid.steps);
    for _k in 0..grid.steps {
        let flow_k = inv_flows.current().clone();
        inv_flows.advance()?;
        let flow_next = inv_flows.current().clone();

        let zw_next = reduce_if_needed(propagate_with(&zw0, &flow_k, &w_step)?, spec.max_order);
        let traj = inv.traj_interval(&traj_state, &s)?;
        let zw_tau = zono_minksum(&zw_next, &traj)?.neg();

        let h_next = cz_linmap(&flow_next, &cz_target)?;
        let homog = fwd.homog_outer(&h_next)?;
        let piece = cz_minksum(&homog, &ConstrainedZonotope::from_zonotope(&zw_tau))?;

        let rho_next = target_rho(&flow_next)?;
        let curvature = intmat_mul_zono(&fwd.f, &zono_linmap(&flow_next, &target_box)?)?;
        let m_u = &flow_k * &tb_inv;
        for j in 0..q {
            let l = dirs.column(j).into_owned();
            let value = rho_now[j].max(rho_next[j])
                + zono_support(&curvature, &l)?
                + zono_support(&zw_tau, &l)?
                - u_support[j];
            p[j] = p[j].max(value);
            u_support[j] += zono_support(&sys.u.centered(), &m_u.tr_mul(&l))?;
        }
        explicit.push(piece);
        zw0 = zw_next;
        traj_state = &inv.phi * &traj_state + &inv.inner_t * &s;
        rho_now = rho_next;
    }

    let halfspaces = HPolytope::new(dirs.transpose(), DVector::from_vec(p))?;
    let mut pieces = Vec::with_capacity(explicit.len());
    for cz in explicit {
        let cut = cz_poly_intersect(&cz, &halfspaces)?;
        pieces.push(if cut.is_trivially_empty() { Piece::Empty(EmptyStage::Intersection) } else { Piece::Set(cut) });
    }
    Ok(TimeIntervalResult {
        witnesses: vec![None; pieces.len()],
        pieces,
        kind: ResultKind::AeOuter,
        grid,
        halfspaces: Some(halfspaces),
        flow_drift: inv_flows.max_drift(),
    })
}

/// Inner approximation of BRS_EA(−τ) as a union of constrained zonotopes.
///
/// With the drift s = E·c_W + B·c_U, S_k = Ẑ_{W₀}(t_{k+1}) ⊕ p(τ_k), and
/// P₁ = (X ⊖ F·box(X)) ⊖ B_μ, P₂ = (e^{AΔt}X ⊖ F·box(X)) ⊖ B_μ, piece k is
///
///   e^{−At_{k+1}} conv(czof(P₁ ⊖ S_k), czof(P₂ ⊖ e^{AΔt}S_k)) ⊕ −e^{−At_k} Ž_{U₀}(t_k).
///
/// A point of piece k is steered into X at some t ∈ τ_k by the decoded
/// input on [0, t_k] followed by c_U.
pub fn ea_ti_inner(sys: &LinSys, spec: &BackwardSpec) -> Result<TimeIntervalResult> {
    let grid = spec.check(sys, true)?;
    let n = sys.dim();
    let dt = grid.dt();
    let eta = spec.eta(&sys.a, dt)?;
    let cache = FlowCache::new(&sys.a, dt, eta)?;

    let ew0 = sys.disturbance_set().centered();
    let u0 = sys.u.centered();
    let s = sys.disturbance_set().center() + sys.input_set().center();

    let (lead, h) = lead_in(grid.t0, dt);
    let mut zu = InnerInput::new(n);
    let mut zw0 = Zonotope::origin(n);
    if lead > 0 {
        let lead_cache = FlowCache::new(&sys.a, h, eta)?;
        zu = inner_input(&lead_cache, &sys.b, &u0, lead)?;
        zw0 = outer_particular(&lead_cache, &ew0, lead, spec.max_order)?;
    }
    let mut traj_state = inner_step_matrix(&sys.a, grid.t0)? * &s;

    let target_box = poly_box(&spec.target)?;
    let box_z = target_box.to_zonotope();
    let mu = mu_bound(box_z.generators(), &sys.a, dt)?;
    let curvature = intmat_mul_zono(&cache.f, &box_z)?;
    let ball = Ball::new(mu, n)?;
    let p1 = poly_minkdiff(&poly_minkdiff(&spec.target, &curvature)?, &ball)?;
    let moved = poly_map_with_inverse(&cache.phi_inv, &spec.target)?;
    let p2 = poly_minkdiff(&poly_minkdiff(&moved, &curvature)?, &ball)?;
    let boxes = [shrunk_box(&p1)?, shrunk_box(&p2)?];
    let polys = [p1, p2];

    let w_step = cache.outer_step(&ew0)?;
    let tb = &cache.inner_t * &sys.b;
    let mut fwd_flows = cache.flows(grid.t0)?;
    let inv = FlowCache::new(&(-&sys.a), dt, eta)?;
    let mut inv_flows = inv.flows(grid.t0)?;

    let mut pieces = Vec::with_capacity(grid.steps);
    let mut witnesses = Vec::with_capacity(grid.steps);
    for k in 0..grid.steps {
        let t_k = grid.t(k);
        let back_k = inv_flows.current().clone();
        inv_flows.advance()?;
        let zw_next = reduce_if_needed(propagate_with(&zw0, fwd_flows.current(), &w_step)?, spec.max_order);
        let traj = cache.traj_interval(&traj_state, &s)?;
        let zw_tau = zono_minksum(&zw_next, &traj)?;
        let zw_moved = zono_linmap(&cache.phi, &zw_tau)?;

        let mut parts = Vec::with_capacity(2);
        for ((poly, bx), sub) in polys.iter().zip(boxes.iter()).zip([&zw_tau, &zw_moved]) {
            let Some(bx) = bx else { continue };
            let eroded = poly_minkdiff(poly, sub)?;
            if poly_is_empty(&eroded)? {
                continue;
            }
            let enclosure = bx.translate(&(-sub.center()));
            parts.push(poly_to_cz_in_box(&eroded, &enclosure)?);
        }
        let hull = match parts.len() {
            0 => None,
            1 => parts.pop(),
            _ => Some(cz_convhull(&parts[0], &parts[1])?),
        };
        match hull {
            None => {
                let stage = if boxes.iter().all(|b| b.is_none()) {
                    EmptyStage::TargetErosion
                } else {
                    EmptyStage::DisturbanceErosion
                };
                pieces.push(Piece::Empty(stage));
                witnesses.push(None);
            }
            Some(hull) => {
                let mapped = cz_linmap(inv_flows.current(), &hull)?;
                let offset = mapped.num_generators();
                let input = zono_linmap(&back_k, &zu.zonotope())?.neg();
                pieces.push(Piece::Set(cz_minksum(&mapped, &ConstrainedZonotope::from_zonotope(&input))?));
                witnesses.push(Some(zu.layout(&sys.u, offset, t_k)));
            }
        }

        zu.push(fwd_flows.current(), &tb, &u0, t_k, dt);
        zw0 = zw_next;
        traj_state = &cache.phi * &traj_state + &cache.inner_t * &s;
        fwd_flows.advance()?;
    }
    Ok(TimeIntervalResult {
        pieces,
        kind: ResultKind::EaInner,
        grid,
        halfspaces: None,
        witnesses,
        flow_drift: fwd_flows.max_drift().max(inv_flows.max_drift()),
    })
}

/// Bounding box of P, or None when P is empty.
fn shrunk_box(p: &HPolytope) -> Result<Option<Interval>> {
    match poly_box(p) {
        Ok(b) => Ok(Some(b)),
        Err(SetError::Empty) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Support values of a time-point result along the target normals.
pub fn target_supports(result: &TimePointResult, target: &HPolytope) -> Result<Vec<f64>> {
    Ok(target_values(target, &result.set)?)
}
