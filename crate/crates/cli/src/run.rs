//! Executes a run configuration.

use crate::config::{Algorithm, Resolved, RunConfig};
use crate::project::project2d;
use crate::report::{kind_name, CheckRecord, ProjectionRecord, ResultRecord, Report, SetRecord, SystemRecord, Timing, SCHEMA_VERSION};
use anyhow::Result;
use backreach::backward::{
    ae_ti_outer, ae_tp_inner, ae_tp_outer, ea_ti_inner, ea_tp_inner, ea_tp_outer, ResultKind, TimeIntervalResult,
    TimePointResult, TimePointSet,
};
use backreach::geomsets::Support;
use backreach::oracle::{ae_backward_sampling, analytic_1d_brs, ea_witness_replay, GameVerdict, OracleError, ReplayWindow};
use nalgebra::DVector;
use std::time::Instant;

pub const DEFAULT_ANGLES: usize = 64;
/// Tolerance of the one-dimensional closed-form check.
pub const ANALYTIC_TOL: f64 = 1e-3;
const REPLAY_X0: usize = 50;
const REPLAY_W: usize = 20;
const REPLAY_PIECES: usize = 10;
const AE_SAMPLES: usize = 1000;

pub enum Computed {
    TimePoint(TimePointResult),
    TimeInterval(TimeIntervalResult),
}

impl Computed {
    pub fn record(&self) -> ResultRecord {
        match self {
            Computed::TimePoint(r) => ResultRecord::TimePoint { t: r.t, set: SetRecord::from_time_point(&r.set, r.empty) },
            Computed::TimeInterval(r) => ResultRecord::TimeInterval {
                t0: r.grid.t0,
                t_end: r.grid.t_end,
                steps: r.grid.steps,
                pieces: r.pieces.iter().map(SetRecord::from_piece).collect(),
                halfspaces: r.halfspaces.as_ref().map(SetRecord::from_polytope),
                flow_drift: r.flow_drift,
            },
        }
    }

    pub fn kind(&self) -> ResultKind {
        match self {
            Computed::TimePoint(r) => r.kind,
            Computed::TimeInterval(r) => r.kind,
        }
    }
}

pub fn compute(algorithm: Algorithm, resolved: &Resolved) -> Result<Computed> {
    let (sys, spec) = (&resolved.sys, &resolved.spec);
    Ok(match algorithm {
        Algorithm::AeTpOuter => Computed::TimePoint(ae_tp_outer(sys, spec)?),
        Algorithm::AeTpInner => Computed::TimePoint(ae_tp_inner(sys, spec)?),
        Algorithm::EaTpOuter => Computed::TimePoint(ea_tp_outer(sys, spec)?),
        Algorithm::EaTpInner => Computed::TimePoint(ea_tp_inner(sys, spec)?),
        Algorithm::AeTiOuter => Computed::TimeInterval(ae_ti_outer(sys, spec)?),
        Algorithm::EaTiInner => Computed::TimeInterval(ea_ti_inner(sys, spec)?),
    })
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub validate: bool,
    pub seed: Option<u64>,
}

/// Runs a configuration and assembles its report.
pub fn execute(config: &RunConfig, opts: &RunOptions) -> Result<(Report, Computed)> {
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |stage: &str, timings: &mut Vec<Timing>| {
        timings.push(Timing { stage: stage.into(), seconds: clock.elapsed().as_secs_f64() });
        clock = Instant::now();
    };

    config.validate()?;
    let resolved = config.resolve()?;
    let grid = resolved.spec.grid()?;
    let eta = resolved.spec.eta(&resolved.sys.a, grid.dt())?;
    lap("setup", &mut timings);

    let computed = compute(config.algorithm, &resolved)?;
    lap("compute", &mut timings);

    let result = computed.record();
    let mut projections = Vec::new();
    if let Some(pairs) = &config.projections {
        let angles = config.angles.unwrap_or(DEFAULT_ANGLES);
        projections = project_record(&result, pairs, angles)?;
        lap("projection", &mut timings);
    }

    let mut validation = Vec::new();
    if opts.validate {
        let seed = opts.seed.or(config.seed).unwrap_or(0);
        validation = validate(&resolved, &computed, seed)?;
        lap("validation", &mut timings);
    }

    let sys = &resolved.sys;
    let report = Report {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        system: SystemRecord {
            name: resolved.name.clone(),
            n: sys.dim(),
            m: sys.b.ncols(),
            r: sys.e.ncols(),
            provenance: resolved.provenance.clone(),
        },
        algorithm: config.algorithm.name().into(),
        kind: kind_name(computed.kind()),
        eta,
        max_order: resolved.spec.max_order,
        timings,
        result,
        projections,
        validation,
    };
    Ok((report, computed))
}

/// Projects every set of a result onto the given 1-based dimension pairs.
pub fn project_record(result: &ResultRecord, pairs: &[[usize; 2]], angles: usize) -> Result<Vec<ProjectionRecord>> {
    let sets = result
        .sets()
        .into_iter()
        .map(SetRecord::to_set)
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(pairs.len());
    for &[i, j] in pairs {
        let polygons = sets
            .iter()
            .map(|s| match s {
                Some(set) => project2d(set.as_ref(), (i - 1, j - 1), angles),
                None => Ok(crate::project::Polygon::empty()),
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(ProjectionRecord { dims: [i, j], angles, polygons });
    }
    Ok(out)
}

fn interval_of(s: &dyn Support) -> Result<(f64, f64)> {
    let e = DVector::from_element(1, 1.0);
    Ok((-s.support(&-&e)?, s.support(&e)?))
}

/// Oracle checks that apply to the computed result.
pub fn validate(resolved: &Resolved, computed: &Computed, seed: u64) -> Result<Vec<CheckRecord>> {
    let sys = &resolved.sys;
    let target = &resolved.spec.target;
    let mut checks = Vec::new();

    if let (1, Computed::TimePoint(r)) = (sys.dim(), computed) {
        let expected = analytic_1d_brs(
            sys.a[(0, 0)],
            interval_of(&sys.input_set())?,
            interval_of(&sys.disturbance_set())?,
            interval_of(target)?,
            r.t,
            r.kind,
        );
        let (passed, value) = match (expected, r.is_empty()) {
            (None, true) => (true, 0.0),
            (Some((lo, hi)), false) => {
                let (a, b) = interval_of(&r.set)?;
                let dev = (a - lo).abs().max((b - hi).abs());
                (dev <= ANALYTIC_TOL, dev)
            }
            _ => (false, f64::INFINITY),
        };
        checks.push(CheckRecord {
            check: "analytic_1d".into(),
            passed,
            samples: None,
            passes: None,
            value,
            notes: Vec::new(),
        });
    }

    match computed {
        Computed::TimePoint(r) if r.kind == ResultKind::EaInner && !r.is_empty() => {
            if let (TimePointSet::ConZono(cz), Some(layout)) = (&r.set, &r.witness) {
                let window = ReplayWindow::point(r.t, r.t / resolved.spec.steps as f64);
                let v = ea_witness_replay(sys, cz, layout, target, &window, REPLAY_X0, REPLAY_W, seed)?;
                checks.push(CheckRecord::from_verdict("witness_replay", &v));
            }
        }
        Computed::TimeInterval(r) if r.kind == ResultKind::EaInner => {
            let n = r.pieces.len();
            let stride = n.div_ceil(REPLAY_PIECES).max(1);
            let mut total = None;
            for k in (0..n).step_by(stride) {
                if let (Some(cz), Some(layout)) = (r.pieces[k].set(), &r.witnesses[k]) {
                    let window = ReplayWindow { t_lo: r.grid.t(k), t_hi: r.grid.t(k + 1), signal_dt: r.grid.dt() };
                    let v = ea_witness_replay(sys, cz, layout, target, &window, REPLAY_X0, REPLAY_W, seed)?;
                    match &mut total {
                        None => total = Some(v),
                        Some(t) => GameVerdict::merge(t, v),
                    }
                }
            }
            if let Some(v) = total {
                checks.push(CheckRecord::from_verdict("witness_replay", &v));
            }
        }
        _ => {}
    }

    let point_input = sys.u.generators().iter().all(|&g| g == 0.0);
    if point_input && computed.kind() == ResultKind::AeOuter {
        let v = match computed {
            Computed::TimePoint(r) => {
                let window = ReplayWindow::point(r.t, r.t / resolved.spec.steps as f64);
                ae_backward_sampling(sys, target, &window, AE_SAMPLES, seed, &|x, _| r.set.contains(x, 1e-7).map_err(|e| OracleError::Input(e.to_string())))?
            }
            Computed::TimeInterval(r) => {
                let window = ReplayWindow { t_lo: r.grid.t0, t_hi: r.grid.t_end, signal_dt: r.grid.dt() };
                ae_backward_sampling(sys, target, &window, AE_SAMPLES, seed, &|x, t| {
                    piece_first_contains(r, x, t).map_err(|e| OracleError::Input(e.to_string()))
                })?
            }
        };
        checks.push(CheckRecord::from_verdict("backward_sampling", &v));
    }
    Ok(checks)
}

/// Union membership that tries the piece covering time t before the others.
pub fn piece_first_contains(r: &TimeIntervalResult, x: &DVector<f64>, t: f64) -> backreach::backward::Result<bool> {
    let n = r.pieces.len();
    let k = (((t - r.grid.t0) / r.grid.dt()).floor().max(0.0) as usize).min(n.saturating_sub(1));
    for j in std::iter::once(k).chain(k.saturating_sub(1)..n.min(k + 2)).chain(0..n) {
        if let Some(cz) = r.pieces.get(j).and_then(|p| p.set()) {
            if cz.contains(x)? {
                return Ok(true);
            }
        }
    }
    Ok(false)
}
