//! JSON run configuration.

use crate::systems::{builtin_system, matrix_from_rows, Benchmark, BuiltinParams};
use anyhow::{anyhow, bail, Context, Result};
use backreach::backward::{BackwardSpec, EtaChoice, Horizon, LinSys, DEFAULT_MAX_ORDER};
use backreach::geomsets::{HPolytope, Interval, Zonotope};
use backreach::linflow::DEFAULT_ETA_TOL;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    AeTpOuter,
    AeTpInner,
    AeTiOuter,
    EaTpOuter,
    EaTpInner,
    EaTiInner,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::AeTpOuter,
        Algorithm::AeTpInner,
        Algorithm::AeTiOuter,
        Algorithm::EaTpOuter,
        Algorithm::EaTpInner,
        Algorithm::EaTiInner,
    ];

    pub fn is_ae(self) -> bool {
        matches!(self, Algorithm::AeTpOuter | Algorithm::AeTpInner | Algorithm::AeTiOuter)
    }

    pub fn is_time_interval(self) -> bool {
        matches!(self, Algorithm::AeTiOuter | Algorithm::EaTiInner)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::AeTpOuter => "ae-tp-outer",
            Algorithm::AeTpInner => "ae-tp-inner",
            Algorithm::AeTiOuter => "ae-ti-outer",
            Algorithm::EaTpOuter => "ea-tp-outer",
            Algorithm::EaTpInner => "ea-tp-inner",
            Algorithm::EaTiInner => "ea-ti-inner",
        }
    }

    pub fn parse(s: &str) -> Result<Algorithm> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| anyhow!("unknown algorithm '{s}'"))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trucks: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    Builtin {
        name: String,
        #[serde(default)]
        params: ParamsSpec,
    },
    Inline {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        e: Vec<Vec<f64>>,
    },
}

/// A set given as a box, a zonotope (row-major generators) or halfspaces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Zonotope { center: Vec<f64>, generators: Vec<Vec<f64>> },
    Halfspaces { c: Vec<Vec<f64>>, d: Vec<f64> },
}

impl SetSpec {
    pub fn to_zonotope(&self) -> Result<Zonotope> {
        match self {
            SetSpec::Box { lo, hi } => Ok(Interval::from_slices(lo, hi)?.to_zonotope()),
            SetSpec::Zonotope { center, generators } => {
                let c = DVector::from_column_slice(center);
                let g = if generators.is_empty() {
                    DMatrix::zeros(c.len(), 0)
                } else {
                    matrix_from_rows(generators)?
                };
                Ok(Zonotope::new(c, g)?)
            }
            SetSpec::Halfspaces { .. } => bail!("input and disturbance sets must be boxes or zonotopes"),
        }
    }

    pub fn to_polytope(&self) -> Result<HPolytope> {
        match self {
            SetSpec::Box { lo, hi } => Ok(HPolytope::from_interval(&Interval::from_slices(lo, hi)?)),
            SetSpec::Halfspaces { c, d } => Ok(HPolytope::new(matrix_from_rows(c)?, DVector::from_column_slice(d))?),
            SetSpec::Zonotope { .. } => bail!("target sets must be boxes or halfspaces"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HorizonSpec {
    Point { t: f64 },
    Interval { t0: f64, t_end: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EtaSpec {
    Fixed(usize),
    Named(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSpec,
    pub algorithm: Algorithm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<SetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<SetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<SetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<HorizonSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<EtaSpec>,
    /// Extra directions for the time-interval AE halfspaces, one vector each.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directions: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_order: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// 1-based dimension pairs to project.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projections: Option<Vec<[usize; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angles: Option<usize>,
}

/// Everything a run needs, after validation.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub name: String,
    pub sys: LinSys,
    pub spec: BackwardSpec,
    pub provenance: Option<String>,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<RunConfig> {
        let config: RunConfig = serde_json::from_str(text).context("config does not match the schema")?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == Some(0) {
            bail!("steps must be at least 1");
        }
        if let Some(EtaSpec::Named(s)) = &self.eta {
            if s != "auto" {
                bail!("eta must be a positive integer or \"auto\", got \"{s}\"");
            }
        }
        if self.eta == Some(EtaSpec::Fixed(0)) {
            bail!("eta must be at least 1");
        }
        if let Some(h) = self.horizon {
            match (h, self.algorithm.is_time_interval()) {
                (HorizonSpec::Point { .. }, true) => bail!("{} needs a horizon {{t0, t_end}}", self.algorithm.name()),
                (HorizonSpec::Interval { .. }, false) => bail!("{} needs a horizon {{t}}", self.algorithm.name()),
                _ => {}
            }
        }
        if let Some(p) = &self.projections {
            if p.iter().any(|&[i, j]| i == 0 || j == 0 || i == j) {
                bail!("projection dimensions are 1-based and must differ");
            }
        }
        if self.angles.is_some_and(|a| a < 3) {
            bail!("at least 3 projection angles are needed");
        }
        if let SystemSpec::Inline { .. } = self.system {
            if self.target.is_none() || self.u.is_none() || self.w.is_none() {
                bail!("inline systems need target, u and w");
            }
            if self.horizon.is_none() || self.steps.is_none() {
                bail!("inline systems need horizon and steps");
            }
        }
        Ok(())
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let bench: Option<Benchmark> = match &self.system {
            SystemSpec::Builtin { name, params } => Some(builtin_system(
                name,
                &BuiltinParams {
                    zeta: params.zeta,
                    phi: params.phi,
                    case: params.case,
                    trucks: params.trucks,
                    data_dir: params.data_dir.clone(),
                },
            )?),
            SystemSpec::Inline { .. } => None,
        };
        let (a, b, e) = match (&self.system, &bench) {
            (SystemSpec::Inline { a, b, e }, _) => (matrix_from_rows(a)?, matrix_from_rows(b)?, matrix_from_rows(e)?),
            (_, Some(bm)) => (bm.sys.a.clone(), bm.sys.b.clone(), bm.sys.e.clone()),
            _ => unreachable!("builtin systems resolve to a benchmark"),
        };
        let pick_zono = |spec: &Option<SetSpec>, fallback: Option<&Zonotope>| -> Result<Zonotope> {
            match (spec, fallback) {
                (Some(s), _) => s.to_zonotope(),
                (None, Some(z)) => Ok(z.clone()),
                (None, None) => bail!("missing set"),
            }
        };
        let u = pick_zono(&self.u, bench.as_ref().map(|bm| &bm.sys.u))?;
        let w = pick_zono(&self.w, bench.as_ref().map(|bm| &bm.sys.w))?;
        let sys = LinSys::new(a, b, e, u, w)?;

        let ae = self.algorithm.is_ae();
        let target = match (&self.target, &bench) {
            (Some(s), _) => s.to_polytope()?,
            (None, Some(bm)) => bm.target(ae).clone(),
            (None, None) => bail!("missing target"),
        };
        let horizon = match (self.horizon, &bench) {
            (Some(HorizonSpec::Point { t }), _) => Horizon::Point { t },
            (Some(HorizonSpec::Interval { t0, t_end }), _) => Horizon::Interval { t0, t_end },
            (None, Some(bm)) if self.algorithm.is_time_interval() => Horizon::Interval { t0: bm.tau.0, t_end: bm.tau.1 },
            (None, Some(bm)) => Horizon::Point { t: bm.t },
            (None, None) => bail!("missing horizon"),
        };
        let steps = self.steps.or(bench.as_ref().map(|bm| bm.steps)).ok_or_else(|| anyhow!("missing steps"))?;
        let eta = match &self.eta {
            Some(EtaSpec::Fixed(k)) => EtaChoice::Fixed(*k),
            _ => EtaChoice::Auto(DEFAULT_ETA_TOL),
        };
        let mut spec = BackwardSpec {
            target,
            horizon,
            steps,
            eta,
            extra_directions: None,
            max_order: self.max_order.unwrap_or(DEFAULT_MAX_ORDER),
        };
        if let Some(dirs) = &self.directions {
            let n = sys.dim();
            if dirs.iter().any(|d| d.len() != n) {
                bail!("directions must have {n} entries each");
            }
            if !dirs.is_empty() {
                spec.extra_directions = Some(DMatrix::from_fn(n, dirs.len(), |i, j| dirs[j][i]));
            }
        }
        let name = match &self.system {
            SystemSpec::Builtin { .. } => bench.as_ref().map(|bm| bm.name.clone()).unwrap_or_default(),
            SystemSpec::Inline { .. } => "inline".into(),
        };
        Ok(Resolved { name, sys, spec, provenance: bench.and_then(|bm| bm.provenance) })
    }
}
