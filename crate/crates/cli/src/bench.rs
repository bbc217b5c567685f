//! Platoon scaling benchmark.

use crate::config::Algorithm;
use crate::config::Resolved;
use crate::run::{compute, Computed};
use crate::systems::{default_data_dir, platoon};
use anyhow::Result;
use backreach::backward::{BackwardSpec, Horizon};
use serde::Serialize;
use std::path::Path;
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchStatus {
    Ok,
    Empty,
    Timeout,
    Error,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub trucks: usize,
    pub n: usize,
    pub m: usize,
    pub seconds: f64,
    pub status: BenchStatus,
}

fn is_empty(c: &Computed) -> bool {
    match c {
        Computed::TimePoint(r) => r.is_empty(),
        Computed::TimeInterval(r) => r.nonempty_count() == 0,
    }
}

/// Times one platoon size; the computation is abandoned after `timeout`.
pub fn bench_one(trucks: usize, algorithm: Algorithm, timeout: Duration, data_dir: &Path) -> Result<BenchRow> {
    let bm = platoon(trucks, data_dir)?;
    let (n, m) = (bm.sys.dim(), bm.sys.b.ncols());
    let horizon = if algorithm.is_time_interval() {
        Horizon::Interval { t0: bm.tau.0, t_end: bm.tau.1 }
    } else {
        Horizon::Point { t: bm.t }
    };
    let mut spec = BackwardSpec::time_point(bm.target(algorithm.is_ae()).clone(), bm.t, bm.steps);
    spec.horizon = horizon;
    let resolved = Resolved { name: bm.name.clone(), sys: bm.sys.clone(), spec, provenance: bm.provenance.clone() };

    let (tx, rx) = mpsc::channel();
    let start = Instant::now();
    thread::spawn(move || {
        let out = compute(algorithm, &resolved).map(|c| is_empty(&c));
        let _ = tx.send(out);
    });
    let (status, seconds) = match rx.recv_timeout(timeout) {
        Ok(Ok(empty)) => (if empty { BenchStatus::Empty } else { BenchStatus::Ok }, start.elapsed().as_secs_f64()),
        Ok(Err(e)) => {
            log::warn!("platoon θ={trucks}: {e}");
            (BenchStatus::Error, start.elapsed().as_secs_f64())
        }
        Err(_) => (BenchStatus::Timeout, timeout.as_secs_f64()),
    };
    Ok(BenchRow { trucks, n, m, seconds, status })
}

pub fn bench_platoon(sizes: &[usize], algorithm: Algorithm, timeout: Duration, data_dir: Option<&Path>) -> Result<Vec<BenchRow>> {
    let dir = data_dir.map(Path::to_path_buf).unwrap_or_else(default_data_dir);
    sizes.iter().map(|&k| bench_one(k, algorithm, timeout, &dir)).collect()
}

/// Least-squares slope of log(seconds) against log(n) over completed rows.
pub fn loglog_slope(rows: &[BenchRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| matches!(r.status, BenchStatus::Ok | BenchStatus::Empty) && r.seconds > 0.0)
        .map(|r| ((r.n as f64).ln(), r.seconds.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn write_csv(rows: &[BenchRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
