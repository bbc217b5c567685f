//! Builtin benchmark systems.

use anyhow::{anyhow, bail, Context, Result};
use backreach::backward::LinSys;
use backreach::geomsets::{blkdiag, HPolytope, Interval, Zonotope};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

pub const BUILTIN_NAMES: [&str; 4] = ["pursuit-evasion", "quadrotor6d", "quadrotor12d", "platoon"];

/// Parameters of a builtin system.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BuiltinParams {
    /// Input scaling ζ.
    pub zeta: Option<f64>,
    /// Disturbance scaling φ.
    pub phi: Option<f64>,
    /// Numbered (ζ, φ) case, 1-based.
    pub case: Option<usize>,
    /// Number of trucks θ.
    pub trucks: Option<usize>,
    pub data_dir: Option<PathBuf>,
}

/// A system with its targets and default horizons.
#[derive(Clone, Debug)]
pub struct Benchmark {
    pub name: String,
    pub sys: LinSys,
    pub target_ae: HPolytope,
    pub target_ea: HPolytope,
    pub t: f64,
    pub tau: (f64, f64),
    pub steps: usize,
    pub provenance: Option<String>,
}

impl Benchmark {
    pub fn target(&self, ae: bool) -> &HPolytope {
        if ae {
            &self.target_ae
        } else {
            &self.target_ea
        }
    }
}

pub fn default_data_dir() -> PathBuf {
    std::env::var_os("REACH_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("data"))
}

pub fn builtin_system(name: &str, params: &BuiltinParams) -> Result<Benchmark> {
    match name {
        "pursuit-evasion" => Ok(pursuit_evasion()),
        "quadrotor6d" => {
            let (zeta, phi) = scaling(params, &[(1.0, 10.0), (1.0, 1.0), (2.0, 1.0)])?;
            quadrotor6d(zeta, phi)
        }
        "quadrotor12d" => {
            let (zeta, phi) = scaling(params, &[(0.5, 0.0), (1.0, 0.0), (1.0, 0.05)])?;
            quadrotor12d(zeta, phi, &params.data_dir.clone().unwrap_or_else(default_data_dir))
        }
        "platoon" => {
            let trucks = params.trucks.ok_or_else(|| anyhow!("platoon needs the number of trucks"))?;
            platoon(trucks, &params.data_dir.clone().unwrap_or_else(default_data_dir))
        }
        other => bail!("unknown system '{other}', expected one of {}", BUILTIN_NAMES.join(", ")),
    }
}

fn scaling(params: &BuiltinParams, cases: &[(f64, f64)]) -> Result<(f64, f64)> {
    let (mut zeta, mut phi) = cases[1];
    if let Some(c) = params.case {
        (zeta, phi) = *cases
            .get(c.wrapping_sub(1))
            .ok_or_else(|| anyhow!("case {c} out of range 1..={}", cases.len()))?;
    }
    Ok((params.zeta.unwrap_or(zeta), params.phi.unwrap_or(phi)))
}

fn rows(r: usize, c: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(r, c, data)
}

fn interval_zono(lo: &[f64], hi: &[f64]) -> Zonotope {
    Interval::from_slices(lo, hi).expect("literal bounds").to_zonotope()
}

fn box_target(lo: &[f64], hi: &[f64]) -> HPolytope {
    HPolytope::from_interval(&Interval::from_slices(lo, hi).expect("literal bounds"))
}

pub fn pursuit_evasion() -> Benchmark {
    let a = rows(4, 4, &[0., 1., 0., 0., 0., 0., 0., 0., 0., 0., 0., 1., 0., 0., 0., 0.]);
    let b = rows(4, 2, &[0., 0., 1., 0., 0., 0., 0., 1.]);
    let e = -&b;
    let sys = LinSys::new(
        a,
        b,
        e,
        interval_zono(&[-0.5, -0.1], &[0.1, 0.5]),
        interval_zono(&[-0.1, -0.5], &[0.5, 0.1]),
    )
    .expect("literal system");
    let target = box_target(&[-0.5; 4], &[0.5; 4]);
    Benchmark {
        name: "pursuit-evasion".into(),
        sys,
        target_ae: target.clone(),
        target_ea: target,
        t: 1.0,
        tau: (0.0, 1.0),
        steps: 100,
        provenance: None,
    }
}

pub fn quadrotor6d(zeta: f64, phi: f64) -> Result<Benchmark> {
    let (g, d0, d1, k, n0) = (9.81, 70.0, 17.0, 0.89 / 1.4, 55.0);
    #[rustfmt::skip]
    let a = rows(6, 6, &[
        0., 0., 1., 0., 0., 0.,
        0., 0., 0., 1., 0., 0.,
        0., 0., 0., 0., g, 0.,
        0., 0., 0., 0., 0., 0.,
        0., 0., 0., 0., 0., 1.,
        0., 0., 0., 0., -d0, -d1,
    ]);
    let mut b = DMatrix::zeros(6, 2);
    b[(3, 0)] = k;
    b[(5, 1)] = n0;
    let mut e = DMatrix::zeros(6, 2);
    e[(2, 0)] = 1.0;
    e[(3, 1)] = 1.0;
    let u = Zonotope::new(
        DVector::from_vec(vec![g / k, 0.0]),
        DMatrix::from_diagonal(&DVector::from_vec(vec![1.5 * zeta, PI / 6.0])),
    )?;
    let w = Zonotope::new(DVector::zeros(2), DMatrix::from_diagonal(&DVector::from_vec(vec![0.2760 * phi, 0.3668])))?;
    #[rustfmt::skip]
    let c = rows(15, 6, &[
        1., 0., 0., 0., 0., 0.,
        -1., 0., 0., 0., 0., 0.,
        0., 1., 0., 0., 0., 0.,
        0., -1., 0., 0., 0., 0.,
        1., -2., 0., 0., 0., 0.,
        -1., -2., 0., 0., 0., 0.,
        0., 0., 1., 0., 0., 0.,
        0., 0., -1., 0., 0., 0.,
        0., 0., 0., 1., 0., 0.,
        0., 0., 0., -1., 0., 0.,
        0., 10., 0., -1., 0., 0.,
        0., 0., 0., 0., 1., 0.,
        0., 0., 0., 0., -1., 0.,
        0., 0., 0., 0., 0., 1.,
        0., 0., 0., 0., 0., -1.,
    ]);
    let d = DVector::from_vec(vec![
        0.5,
        0.5,
        0.1,
        0.0,
        0.3,
        0.3,
        1.0,
        1.0,
        0.0,
        1.0,
        1.0,
        PI / 15.0,
        PI / 15.0,
        PI / 2.0,
        PI / 2.0,
    ]);
    let target = HPolytope::new(c, d)?;
    Ok(Benchmark {
        name: "quadrotor6d".into(),
        sys: LinSys::new(a, b, e, u, w)?,
        target_ae: target.clone(),
        target_ea: target,
        t: 0.5,
        tau: (0.0, 0.5),
        steps: 200,
        provenance: None,
    })
}

/// Generator matrix of the 12-dimensional safe terminal set.
#[rustfmt::skip]
pub const TERMINAL_GENERATORS: [f64; 144] = [
    -0.0042, 0.0455, 0.0064, -0.0694, 0., 0., 0.0001, -0.0004, 0., 0., -0.0002, -0.0004,
    0.0455, 0.0042, 0.0694, 0.0064, 0., 0., 0.0004, 0.0001, 0., 0., -0.0004, 0.0002,
    0., 0., 0., 0., -0.0370, 0.0377, 0., 0., 0., 0., 0., 0.,
    0.0086, -0.0924, 0.0031, -0.0331, 0., 0., 0.0008, -0.0022, 0., 0., -0.0003, -0.0006,
    -0.0924, -0.0086, 0.0331, 0.0031, 0., 0., 0.0022, 0.0008, 0., 0., -0.0006, 0.0003,
    0., 0., 0., 0., 0.0491, 0.0284, 0., 0., 0., 0., 0., 0.,
    -0.0044, -0.0004, 0.0083, 0.0008, 0., 0., 0.0088, 0.0032, 0., 0., 0.0046, -0.0023,
    0.0004, -0.0044, 0.0008, -0.0083, 0., 0., 0.0032, -0.0088, 0., 0., 0.0023, 0.0046,
    0., 0., 0., 0., 0., 0., 0., 0., 0.0045, -0.0005, 0., 0.,
    -0.0091, -0.0008, 0.0071, 0.0007, 0., 0., -0.0244, -0.0088, 0., 0., 0.0016, -0.0008,
    0.0008, -0.0091, 0.0007, -0.0071, 0., 0., -0.0088, 0.0244, 0., 0., 0.0008, 0.0016,
    0., 0., 0., 0., 0., 0., 0., 0., -0.0019, -0.0011, 0., 0.,
];

/// Input and disturbance shape matrix of the 12-dimensional quadrotor.
#[rustfmt::skip]
const SHAPE_3X9: [f64; 27] = [
    1., 0., 0., 1., -1., 1., -1., 0., 0.,
    0., 1., 0., 1., 1., 0., 0., 1., -1.,
    0., 0., 1., 0., 0., 1., 1., 1., 1.,
];

/// H-representation of the parallelotope ⟨0, G⟩ for square invertible G:
/// |G⁻¹x|∞ ≤ 1.
pub fn parallelotope(g: &DMatrix<f64>) -> Result<HPolytope> {
    let inv = g.clone().try_inverse().ok_or_else(|| anyhow!("generator matrix is singular"))?;
    let n = g.nrows();
    let lhs = DMatrix::from_fn(2 * n, n, |i, j| if i < n { inv[(i, j)] } else { -inv[(i - n, j)] });
    Ok(HPolytope::new(lhs, DVector::from_element(2 * n, 1.0))?)
}

#[derive(Deserialize)]
struct QuadrotorData {
    version: u32,
    provenance: String,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct PlatoonData {
    version: u32,
    provenance: String,
    a_self: Vec<Vec<f64>>,
    a_prev: Vec<Vec<f64>>,
    b_self: Vec<Vec<f64>>,
    e_lead: Vec<Vec<f64>>,
}

fn read_data<T: for<'de> Deserialize<'de>>(dir: &Path, file: &str) -> Result<T> {
    let path = dir.join(file);
    let text = std::fs::read_to_string(&path).with_context(|| {
        format!("data file {} is missing; this benchmark needs its bundled dynamics", path.display())
    })?;
    serde_json::from_str(&text).with_context(|| format!("malformed data file {}", path.display()))
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        bail!("ragged matrix rows");
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn quadrotor12d(zeta: f64, phi: f64, data_dir: &Path) -> Result<Benchmark> {
    let data: QuadrotorData = read_data(data_dir, "quadrotor12.json")?;
    if data.version != 1 {
        bail!("unsupported quadrotor data version {}", data.version);
    }
    let a = matrix_from_rows(&data.a)?;
    let b = matrix_from_rows(&data.b)?;
    if a.shape() != (12, 12) || b.shape() != (12, 4) {
        bail!("quadrotor data must hold a 12x12 A and a 12x4 B");
    }
    let mut e = DMatrix::zeros(12, 3);
    e[(3, 0)] = 1.0;
    e[(4, 1)] = 1.0;
    e[(5, 2)] = 1.0;
    let shape = DMatrix::from_row_slice(3, 9, &SHAPE_3X9) / 5.0;
    let thrust = Interval::from_slices(&[-9.81], &[2.38])?.to_zonotope();
    let u = Zonotope::new(
        backreach::geomsets::vcat(&[thrust.center(), &DVector::zeros(3)]),
        blkdiag(thrust.generators(), &(&shape * zeta)),
    )?;
    let w = Zonotope::new(DVector::zeros(3), &shape * phi)?;
    let target = parallelotope(&DMatrix::from_row_slice(12, 12, &TERMINAL_GENERATORS))?;
    Ok(Benchmark {
        name: "quadrotor12d".into(),
        sys: LinSys::new(a, b, e, u, w)?,
        target_ae: target.clone(),
        target_ea: target,
        t: 1.0,
        tau: (0.0, 1.0),
        steps: 1000,
        provenance: Some(data.provenance),
    })
}

pub fn platoon(trucks: usize, data_dir: &Path) -> Result<Benchmark> {
    if trucks < 1 {
        bail!("platoon needs at least one truck, got {trucks}");
    }
    let data: PlatoonData = read_data(data_dir, "platoon.json")?;
    if data.version != 1 {
        bail!("unsupported platoon data version {}", data.version);
    }
    let a_self = matrix_from_rows(&data.a_self)?;
    let a_prev = matrix_from_rows(&data.a_prev)?;
    let b_self = matrix_from_rows(&data.b_self)?;
    let e_lead = matrix_from_rows(&data.e_lead)?;
    if a_self.shape() != (3, 3) || a_prev.shape() != (3, 3) || b_self.shape() != (3, 1) || e_lead.shape() != (3, 1)
    {
        bail!("platoon blocks must be 3x3, 3x3, 3x1 and 3x1");
    }
    let n = 3 * trucks;
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, trucks);
    for j in 0..trucks {
        a.view_mut((3 * j, 3 * j), (3, 3)).copy_from(&a_self);
        if j > 0 {
            a.view_mut((3 * j, 3 * (j - 1)), (3, 3)).copy_from(&a_prev);
        }
        b.view_mut((3 * j, j), (3, 1)).copy_from(&b_self);
    }
    let mut e = DMatrix::zeros(n, 1);
    e.view_mut((0, 0), (3, 1)).copy_from(&e_lead);
    let u = interval_zono(&vec![-5.0; trucks], &vec![1.0; trucks]);
    let w = interval_zono(&[-0.5], &[0.5]);
    #[rustfmt::skip]
    let c = DMatrix::from_row_slice(7, 3, &[
        1., 0., 0.,
        -1., 0., 0.,
        -1., -2., 0.,
        0., 1., 0.,
        0., -1., 0.,
        0., 0., 1.,
        0., 0., -1.,
    ]);
    let stack = |d: &[f64]| -> Result<HPolytope> {
        let lhs = (1..trucks).fold(c.clone(), |acc, _| blkdiag(&acc, &c));
        let rhs = DVector::from_fn(7 * trucks, |i, _| d[i % 7]);
        Ok(HPolytope::new(lhs, rhs)?)
    };
    Ok(Benchmark {
        name: format!("platoon({trucks})"),
        sys: LinSys::new(a, b, e, u, w)?,
        target_ae: stack(&[0., 20., 7., 10., -3., 5., -1.])?,
        target_ea: stack(&[20., 0., 0., 1.5, 1.5, 1., 1.])?,
        t: 2.0,
        tau: (0.0, 2.0),
        steps: 100,
        provenance: Some(data.provenance),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn platoon_dimensions() {
        let b = platoon(5, &default_data_dir()).unwrap();
        assert_eq!(b.sys.dim(), 15);
        assert_eq!(b.sys.b.ncols(), 5);
        assert!(platoon(0, &default_data_dir()).is_err());
    }

    #[test]
    fn missing_data_is_reported() {
        let err = quadrotor12d(1.0, 0.0, Path::new("/nonexistent")).unwrap_err();
        assert!(format!("{err:#}").contains("missing"));
    }

    #[test]
    fn quadrotor_cases() {
        let p = BuiltinParams { case: Some(3), ..Default::default() };
        let b = builtin_system("quadrotor6d", &p).unwrap();
        assert!((b.sys.u.generators()[(0, 0)] - 3.0).abs() < 1e-15);
        assert!(builtin_system("nope", &p).is_err());
    }
}
