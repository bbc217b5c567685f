use backreach::backward::LinSys;
use backreach::geomsets::{ConstrainedZonotope, Interval, Support, Zonotope};
use backreach::linflow::{
    auto_eta, curvature_f, curvature_g, expm, homog_outer_interval, inner_particular_step, mu_bound,
    outer_particular_interval, outer_particular_step, propagate_particular, remainder_e, traj_particular,
    FlowCache,
};
use backreach::oracle::{ode_simulate, PiecewiseConstantSignal};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn m(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, v)
}

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

fn zono(c: &[f64], g: DMatrix<f64>) -> Zonotope {
    Zonotope::new(v(c), g).unwrap()
}

/// Stable A = −(PPᵀ + εI) + K with K skew.
fn stable_2d(p: &[f64]) -> DMatrix<f64> {
    let pm = m(2, 2, &p[..4]);
    let spd = &pm * pm.transpose() + DMatrix::identity(2, 2) * 0.1;
    let k = m(2, 2, &[0.0, p[4], -p[4], 0.0]);
    -spd + k
}

/// System ẋ = Ax + s with s ∈ S entering through B = I.
fn driven(a: &DMatrix<f64>, s: &Zonotope) -> LinSys {
    let n = a.nrows();
    LinSys::new(a.clone(), DMatrix::identity(n, n), DMatrix::zeros(n, 1), s.clone(), Zonotope::origin(1)).unwrap()
}

/// ρ(Z_S(t), ℓ) = ∫₀ᵗ ρ(S, e^{Aᵀθ}ℓ) dθ by composite Simpson.
fn exact_particular_support(a: &DMatrix<f64>, s: &Zonotope, t: f64, l: &DVector<f64>) -> f64 {
    let nodes = 4000;
    let h = t / nodes as f64;
    let step = expm(&a.transpose(), h).unwrap();
    let mut dir = l.clone();
    let mut acc = 0.0;
    for i in 0..=nodes {
        let w = if i == 0 || i == nodes { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * s.support(&dir).unwrap();
        dir = &step * dir;
    }
    acc * h / 3.0
}

fn directions(count: usize) -> Vec<DVector<f64>> {
    (0..count)
        .map(|k| {
            let th = std::f64::consts::TAU * k as f64 / count as f64;
            v(&[th.cos(), th.sin()])
        })
        .collect()
}

fn propagated(a: &DMatrix<f64>, s: &Zonotope, t: f64, steps: usize, outer: bool) -> Zonotope {
    let dt = t / steps as f64;
    let eta = auto_eta(a, dt, 1e-12).unwrap().0;
    let step = if outer { outer_particular_step(a, s, dt, eta).unwrap() } else { inner_particular_step(a, s, dt).unwrap() };
    let mut acc = Zonotope::origin(a.nrows());
    for k in 0..steps {
        acc = propagate_particular(&acc, a, k as f64 * dt, &step).unwrap();
    }
    acc
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn particular_solutions_sandwich_the_exact_one(
        p in prop::collection::vec(-1.0f64..1.0, 5),
        c in prop::collection::vec(-0.5f64..0.5, 2),
        g in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        let a = stable_2d(&p);
        let s = zono(&c, m(2, 2, &g));
        let (inner, outer) = (propagated(&a, &s, 1.0, 20, false), propagated(&a, &s, 1.0, 20, true));
        for l in directions(16) {
            let exact = exact_particular_support(&a, &s, 1.0, &l);
            prop_assert!(inner.support(&l).unwrap() <= exact + 1e-6);
            prop_assert!(exact <= outer.support(&l).unwrap() + 1e-6);
        }
    }

    #[test]
    fn gap_shrinks_linearly(
        p in prop::collection::vec(-1.0f64..1.0, 5),
        g in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        let a = stable_2d(&p);
        let s = zono(&[0.2, -0.1], m(2, 2, &g));
        let gap = |steps| {
            let (i, o) = (propagated(&a, &s, 1.0, steps, false), propagated(&a, &s, 1.0, steps, true));
            directions(16).iter().map(|l| o.support(l).unwrap() - i.support(l).unwrap()).collect::<Vec<_>>()
        };
        let (coarse, fine) = (gap(10), gap(40));
        for (c, f) in coarse.iter().zip(&fine) {
            if *c > 1e-10 {
                prop_assert!(c / f.max(1e-300) >= 2.0, "{c} -> {f}");
            }
        }
    }

    #[test]
    fn two_propagated_steps_refine_one_double_step(
        p in prop::collection::vec(-1.0f64..1.0, 5),
        g in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        let a = stable_2d(&p);
        let s = zono(&[0.1, 0.3], m(2, 2, &g));
        let dt = 0.05;
        let eta = auto_eta(&a, 2.0 * dt, 1e-12).unwrap().0;
        let one = outer_particular_step(&a, &s, 2.0 * dt, eta).unwrap();
        let step = outer_particular_step(&a, &s, dt, eta).unwrap();
        let two = propagate_particular(&step, &a, dt, &step).unwrap();
        for l in directions(16) {
            let exact = exact_particular_support(&a, &s, 2.0 * dt, &l);
            prop_assert!(exact <= two.support(&l).unwrap() + 1e-9);
            prop_assert!(exact <= one.support(&l).unwrap() + 1e-9);
            prop_assert!(two.support(&l).unwrap() <= one.support(&l).unwrap() + 1e-6);
        }
    }

    #[test]
    fn expm_of_symmetric_matrix_matches_eigendecomposition(
        q in prop::collection::vec(-1.0f64..1.0, 9),
        scale in 0.1f64..50.0,
    ) {
        let b = m(3, 3, &q);
        let sym = (&b + b.transpose()) * 0.5;
        let nrm = sym.norm().max(1e-9);
        let a = sym * (scale / nrm);
        let eig = a.clone().symmetric_eigen();
        let want = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::exp)) * eig.eigenvectors.transpose();
        let got = expm(&a, 1.0).unwrap();
        prop_assert!((&got - &want).amax() <= 1e-12 * want.amax(), "{}", (&got - &want).amax() / want.amax());
    }
}

#[test]
fn scalar_step_closed_forms() {
    let a = m(1, 1, &[-1.0]);
    let s = zono(&[0.0], m(1, 1, &[1.0]));
    let exact = 1.0 - (-0.1f64).exp();
    let outer = outer_particular_step(&a, &s, 0.1, 4).unwrap();
    assert!(outer.support(&v(&[1.0])).unwrap() >= exact);
    assert!(outer.support(&v(&[-1.0])).unwrap() >= exact);
    let inner = inner_particular_step(&a, &s, 0.1).unwrap();
    assert!((inner.support(&v(&[1.0])).unwrap() - exact).abs() < 1e-15);

    let zero = DMatrix::zeros(1, 1);
    let o0 = outer_particular_step(&zero, &s, 0.1, 3).unwrap();
    let i0 = inner_particular_step(&zero, &s, 0.1).unwrap();
    for z in [&o0, &i0] {
        assert!((z.support(&v(&[1.0])).unwrap() - 0.1).abs() < 1e-15);
    }
    let pt = outer_particular_step(&zero, &Zonotope::point(v(&[2.0])), 0.1, 3).unwrap();
    assert!((pt.support(&v(&[1.0])).unwrap() - 0.2).abs() < 1e-15 && (pt.support(&v(&[-1.0])).unwrap() + 0.2).abs() < 1e-15);
}

#[test]
fn inner_step_points_are_reached_by_constant_inputs() {
    let a = m(2, 2, &[0.0, 1.0, -2.0, -0.3]);
    let s = zono(&[0.1, 0.0], m(2, 2, &[0.5, 0.1, 0.0, 0.3]));
    let dt = 0.2;
    let inner = inner_particular_step(&a, &s, dt).unwrap();
    let sys = driven(&a, &s);
    let zero_w = PiecewiseConstantSignal::constant(DVector::zeros(1), dt).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let f = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..=1.0));
        let u = PiecewiseConstantSignal::constant(s.point_at(&f), dt).unwrap();
        let x = ode_simulate(&sys, &DVector::zeros(2), &u, &zero_w, dt).unwrap();
        assert!((x - inner.point_at(&f)).amax() < 1e-9);
    }
}

#[test]
fn propagation_telescopes() {
    let zero = DMatrix::zeros(1, 1);
    let s = zono(&[0.0], m(1, 1, &[1.0]));
    let z = propagated(&zero, &s, 0.7, 7, false);
    assert!((z.support(&v(&[1.0])).unwrap() - 0.7).abs() < 1e-14);
    // scalar a = −1: inner propagation is exact, (1 − e^{−t})·S
    let z = propagated(&m(1, 1, &[-1.0]), &s, 1.0, 50, false);
    assert!((z.support(&v(&[1.0])).unwrap() - (1.0 - (-1.0f64).exp())).abs() < 1e-13);
    let first = propagate_particular(&Zonotope::origin(1), &zero, 0.0, &s).unwrap();
    assert_eq!(first.support(&v(&[1.0])).unwrap(), 1.0);
}

#[test]
fn trajectory_enclosures() {
    let zero = DMatrix::zeros(1, 1);
    let z = traj_particular(&zero, &vec![v(&[0.0]); 4], 0.1, 3, 3).unwrap();
    assert_eq!(z.support(&v(&[1.0])).unwrap(), 0.0);
    assert_eq!(z.support(&v(&[-1.0])).unwrap(), 0.0);
    // A = 0, constant s̄: the segment {t·s̄ | t ∈ τ_k}
    let z = traj_particular(&zero, &vec![v(&[2.0]); 4], 0.1, 3, 3).unwrap();
    assert!(z.support(&v(&[1.0])).unwrap() >= 0.8 - 1e-12 && -z.support(&v(&[-1.0])).unwrap() <= 0.6 + 1e-12);
    // scalar a = −1: x(t) = 1 − e^{−t} for s ≡ 1
    let a = m(1, 1, &[-1.0]);
    let k = 5;
    let z = traj_particular(&a, &vec![v(&[1.0]); 6], 0.1, 4, k).unwrap();
    let (lo, hi) = (-z.support(&v(&[-1.0])).unwrap(), z.support(&v(&[1.0])).unwrap());
    for i in 0..=20 {
        let t = 0.5 + 0.1 * i as f64 / 20.0;
        let x = 1.0 - (-t as f64).exp();
        assert!(lo - 1e-12 <= x && x <= hi + 1e-12, "{t}: {x} not in [{lo}, {hi}]");
    }
}

#[test]
fn interval_particular_contains_simulated_trajectories() {
    let a = m(2, 2, &[0.0, 1.0, -1.0, -0.5]);
    let s = zono(&[0.3, -0.2], m(2, 2, &[0.2, 0.05, 0.0, 0.1]));
    let (dt, k) = (0.05, 6);
    let cache = FlowCache::new(&a, dt, 6).unwrap();
    let encl = ConstrainedZonotope::from_zonotope(&outer_particular_interval(&a, &s, k, dt, 6, Some(&cache)).unwrap());
    let sys = driven(&a, &s);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let t_hi = (k + 1) as f64 * dt;
    for _ in 0..200 {
        let values = (0..=k).map(|_| s.point_at(&DVector::from_fn(2, |_, _| rng.gen_range(-1.0..=1.0)))).collect();
        let u = PiecewiseConstantSignal::uniform(values, dt).unwrap();
        let zero_w = PiecewiseConstantSignal::constant(DVector::zeros(1), t_hi).unwrap();
        let t = rng.gen_range(k as f64 * dt..=t_hi);
        let x = ode_simulate(&sys, &DVector::zeros(2), &u, &zero_w, t).unwrap();
        assert!(encl.contains(&x).unwrap(), "t = {t}, x = {}", x.transpose());
    }
}

#[test]
fn homogeneous_interval_enclosures() {
    let zero = DMatrix::zeros(2, 2);
    let h = ConstrainedZonotope::from_zonotope(&zono(&[1.0, 0.0], m(2, 1, &[0.5, 0.5])));
    let same = homog_outer_interval(&h, &zero, 0.1, &curvature_f(&zero, 0.1, 3)).unwrap();
    for l in directions(8) {
        assert!((same.support(&l).unwrap() - h.support(&l).unwrap()).abs() < 1e-12);
    }

    let a1 = m(1, 1, &[-1.0]);
    let one = ConstrainedZonotope::point(v(&[1.0]));
    let e1 = homog_outer_interval(&one, &a1, 0.2, &curvature_f(&a1, 0.2, 6)).unwrap();
    for i in 0..=10 {
        let x = (-0.02 * i as f64).exp();
        assert!(e1.contains(&v(&[x])).unwrap());
    }

    let rot = m(2, 2, &[0.0, -2.0, 2.0, 0.0]);
    let dt = 0.1;
    let box_h = ConstrainedZonotope::from_zonotope(&Interval::from_slices(&[0.5, -0.2], &[1.0, 0.3]).unwrap().to_zonotope());
    let encl = homog_outer_interval(&box_h, &rot, dt, &curvature_f(&rot, dt, 8)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for f in box_h.sample_factors(&mut rng, 1000).unwrap() {
        let t = rng.gen_range(0.0..=dt);
        let y = expm(&rot, t).unwrap() * box_h.point_at(&f);
        assert!(encl.contains(&y).unwrap());
    }
}

#[test]
fn mu_values() {
    let g = DMatrix::identity(2, 2);
    assert_eq!(mu_bound(&g, &DMatrix::zeros(2, 2), 0.1).unwrap(), 0.0);
    let scalar = mu_bound(&m(1, 1, &[1.0]), &m(1, 1, &[1.0]), 0.1).unwrap();
    assert!((scalar - 0.1f64.exp_m1()).abs() < 1e-15);
    let a = m(2, 2, &[0.0, 1.0, -3.0, -0.4]);
    let (coarse, fine) = (mu_bound(&g, &a, 0.02).unwrap(), mu_bound(&g, &a, 0.01).unwrap());
    assert!(coarse / fine >= 1.9, "{coarse} / {fine}");
}

#[test]
fn remainder_and_curvature_scaling() {
    let a1 = m(1, 1, &[1.0]);
    let direct: f64 = 0.1f64.exp() - (0..=4).map(|i| 0.1f64.powi(i) / (1..=i).map(f64::from).product::<f64>()).sum::<f64>();
    let e = remainder_e(&a1, 0.1, 4);
    assert!((e.hi()[(0, 0)] - direct).abs() <= 1e-6 * direct, "{} vs {direct}", e.hi()[(0, 0)]);
    let mut last = f64::INFINITY;
    for eta in 1..8 {
        let cur = remainder_e(&a1, 0.1, eta).hi()[(0, 0)];
        assert!(cur < last);
        last = cur;
    }
    let a = m(2, 2, &[-0.5, 2.0, -1.0, 0.3]);
    for f in [curvature_f, curvature_g] {
        let big = f(&a, 0.02, 6).max_abs();
        let small = f(&a, 0.01, 6).max_abs();
        assert!(big / small >= 2.0, "{big} / {small}");
    }
    assert_eq!(curvature_f(&DMatrix::zeros(2, 2), 0.1, 4).max_abs(), 0.0);
    assert_eq!(curvature_g(&DMatrix::zeros(2, 2), 0.1, 4).max_abs(), 0.0);
}

#[test]
fn auto_eta_matches_scalar_scan() {
    let a = m(1, 1, &[1.0]);
    let (dt, tol) = (0.01, 1e-12);
    // tail e^{x} − Σ_{i≤η} xⁱ/i! summed explicitly
    let tail = |eta: i32| -> f64 {
        let mut term = 1.0;
        let mut sum = 0.0;
        for i in 1..60 {
            term *= dt / i as f64;
            if i > eta {
                sum += term;
            }
        }
        sum
    };
    let want = (1..=50).find(|&eta| tail(eta) <= tol).unwrap() as usize;
    assert_eq!(auto_eta(&a, dt, tol).unwrap().0, want);
    assert_eq!(auto_eta(&DMatrix::zeros(2, 2), 0.1, 1e-10).unwrap().0, 1);
    let mut last = 0;
    for tol in [1e-4, 1e-8, 1e-12, 1e-15] {
        let eta = auto_eta(&m(2, 2, &[0.0, 1.0, -4.0, -1.0]), 0.05, tol).unwrap().0;
        assert!(eta >= last);
        last = eta;
    }
}
