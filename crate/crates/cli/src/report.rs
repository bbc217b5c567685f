//! Result reports written as JSON.

use crate::config::RunConfig;
use crate::project::Polygon;
use anyhow::{bail, Result};
use backreach::backward::{EmptyStage, Piece, ResultKind, TimePointSet};
use backreach::geomsets::{ConstrainedZonotope, HPolytope, Support};
use backreach::oracle::GameVerdict;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

/// A set in row-major form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SetRecord {
    Polytope {
        c: Vec<Vec<f64>>,
        d: Vec<f64>,
    },
    ConZono {
        center: Vec<f64>,
        generators: Vec<Vec<f64>>,
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
    Empty {
        stage: String,
    },
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(rows: &[Vec<f64>], ncols: usize) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != ncols) {
        bail!("ragged matrix in set record");
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn stage_name(stage: EmptyStage) -> String {
    serde_json::to_value(stage).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

pub fn kind_name(kind: ResultKind) -> String {
    serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

impl SetRecord {
    pub fn from_polytope(p: &HPolytope) -> Self {
        SetRecord::Polytope { c: rows(p.lhs()), d: p.rhs().iter().copied().collect() }
    }

    pub fn from_cz(cz: &ConstrainedZonotope) -> Self {
        SetRecord::ConZono {
            center: cz.center().iter().copied().collect(),
            generators: rows(cz.generators()),
            a: rows(cz.con_lhs()),
            b: cz.con_rhs().iter().copied().collect(),
        }
    }

    pub fn from_time_point(set: &TimePointSet, empty: Option<EmptyStage>) -> Self {
        match (empty, set) {
            (Some(stage), _) => SetRecord::Empty { stage: stage_name(stage) },
            (None, TimePointSet::Polytope(p)) => Self::from_polytope(p),
            (None, TimePointSet::ConZono(cz)) => Self::from_cz(cz),
        }
    }

    pub fn from_piece(piece: &Piece) -> Self {
        match piece {
            Piece::Set(cz) => Self::from_cz(cz),
            Piece::Empty(stage) => SetRecord::Empty { stage: stage_name(*stage) },
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, SetRecord::Empty { .. })
    }

    /// Rebuilds the set; None for empty records.
    pub fn to_set(&self) -> Result<Option<Box<dyn Support>>> {
        Ok(match self {
            SetRecord::Polytope { c, d } => {
                let n = c.first().map_or(0, Vec::len);
                Some(Box::new(HPolytope::new(matrix(c, n)?, DVector::from_column_slice(d))?))
            }
            SetRecord::ConZono { center, generators, a, b } => {
                let ng = generators.first().map_or(0, Vec::len);
                Some(Box::new(ConstrainedZonotope::new(
                    DVector::from_column_slice(center),
                    matrix(generators, ng)?,
                    matrix(a, ng)?,
                    DVector::from_column_slice(b),
                )?))
            }
            SetRecord::Empty { .. } => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ResultRecord {
    TimePoint {
        t: f64,
        set: SetRecord,
    },
    TimeInterval {
        t0: f64,
        t_end: f64,
        steps: usize,
        pieces: Vec<SetRecord>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        halfspaces: Option<SetRecord>,
        flow_drift: f64,
    },
}

impl ResultRecord {
    pub fn sets(&self) -> Vec<&SetRecord> {
        match self {
            ResultRecord::TimePoint { set, .. } => vec![set],
            ResultRecord::TimeInterval { pieces, .. } => pieces.iter().collect(),
        }
    }

    /// True when no set of the result is nonempty.
    pub fn all_empty(&self) -> bool {
        self.sets().iter().all(|s| s.is_empty())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRecord {
    pub dims: [usize; 2],
    pub angles: usize,
    pub polygons: Vec<Polygon>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub check: String,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passes: Option<usize>,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl CheckRecord {
    pub fn from_verdict(check: &str, v: &GameVerdict) -> Self {
        CheckRecord {
            check: check.into(),
            passed: v.all_passed(),
            samples: Some(v.samples),
            passes: Some(v.passes),
            value: v.worst_violation,
            notes: v.stage_log.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemRecord {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub r: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub config: RunConfig,
    pub system: SystemRecord,
    pub algorithm: String,
    pub kind: String,
    pub eta: usize,
    pub max_order: f64,
    pub timings: Vec<Timing>,
    pub result: ResultRecord,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub projections: Vec<ProjectionRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub validation: Vec<CheckRecord>,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Report> {
        let r: Report = serde_json::from_str(text)?;
        if r.schema_version != SCHEMA_VERSION {
            bail!("unsupported report schema version {}", r.schema_version);
        }
        Ok(r)
    }

    pub fn read(path: &Path) -> Result<Report> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
