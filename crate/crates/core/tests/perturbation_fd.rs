use num_complex::Complex64;

use edflow_core::dirac::quaternionic_j;
use edflow_core::pencil::{solve_window, EigenOptions, EigenPair, Pencil};
use edflow_core::perturbation::{
    eigenpath_step, fd_validate, growth_bound_check, growth_rate, lambda_dot, projected_resolvent, psi_dot,
    PathState, PerturbOptions,
};
use edflow_core::torus::trig::TrigPolynomial;
use edflow_core::torus::{ExponentTable, ScalarField, SpinStructure, SpinorField, TorusGrid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const STEPS: [f64; 3] = [1e-2, 5e-3, 2.5e-3];

// Lowest positive cluster is quaternionic-simple with gap ~0.14 at N = 6.
fn base_u(g: &TorusGrid) -> ScalarField {
    TrigPolynomial::constant(1.0)
        .with_term(0.3, [1, 0, 0])
        .with_term(0.2, [0, 1, 0])
        .with_term(0.1, [0, 0, 1])
        .sample(g)
}

fn direction(g: &TorusGrid) -> ScalarField {
    TrigPolynomial::constant(0.1)
        .with_term(0.4, [1, 1, 0])
        .with_term(-0.25, [0, 0, 1])
        .sample(g)
}

fn simple_pair(p: &Pencil, target: f64) -> (EigenPair, Vec<EigenPair>) {
    let w = solve_window(p, target, 8, &EigenOptions::default()).unwrap();
    let c = w.cluster_near(target).unwrap().clone();
    assert_eq!(c.len, 2);
    let mut pair = w.cluster_members(&c)[0].clone();
    pair.lambda = c.center;
    (pair, w.pairs.clone())
}

#[test]
fn derivatives_match_central_differences() {
    let g = TorusGrid::with_points(6).unwrap();
    let r = fd_validate(
        &base_u(&g),
        &direction(&g),
        SpinStructure::default(),
        &ExponentTable::three(),
        0.54,
        &STEPS,
        &EigenOptions::default(),
        &PerturbOptions::default(),
    )
    .unwrap();
    assert!((r.lambda_slope - 2.0).abs() <= 0.1, "{r:?}");
    assert!((r.psi_slope - 2.0).abs() <= 0.1, "{r:?}");
    assert!(r.psi_errors[2] <= 1e-4);
    assert!(r.normalization_rate.abs() <= 1e-9);
}

#[test]
fn uniform_relative_rate_closed_forms() {
    let g = TorusGrid::with_points(6).unwrap();
    let exps = ExponentTable::three();
    let u = base_u(&g);
    let s = 0.7;
    let udot = u.scale(s);
    let p = Pencil::new(&u, SpinStructure::default(), &exps).unwrap();
    let (pair, _) = simple_pair(&p, 0.54);
    let ld = lambda_dot(&u, &udot, &pair, &exps).unwrap();
    assert!((ld + 2.0 * s * pair.lambda).abs() <= 1e-12);
    let pd = psi_dot(&p, &udot, &pair, ld, &PerturbOptions::default()).unwrap();
    let mut expect = pair.psi.clone();
    expect.scale_mut(Complex64::new(-s, 0.0));
    assert!(p.norm(&pd.sub(&expect)) <= 1e-10);
}

#[test]
fn projected_resolvent_contract() {
    let g = TorusGrid::with_points(6).unwrap();
    let u = base_u(&g);
    let spin = SpinStructure::default();
    let p = Pencil::new(&u, spin, &ExponentTable::three()).unwrap();
    let (pair, pairs) = simple_pair(&p, 0.54);
    let opts = PerturbOptions::default();
    let lam = pair.lambda;
    let jpsi = quaternionic_j(&pair.psi);

    // random right-hand side: round trip and orthogonality
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let r = SpinorField::random_band_limited(&g, spin, 2, &mut rng);
    let x = projected_resolvent(&p, lam, &pair, &r, &opts).unwrap();
    assert!(p.inner(&pair.psi, &x).norm() <= 1e-10);
    assert!(p.inner(&jpsi, &x).norm() <= 1e-10);
    let mut fwd = p.apply_weighted_dirac(&x);
    fwd.axpy(Complex64::new(-lam, 0.0), &x);
    let mut proj = r.clone();
    for q in edflow_core::pencil::orthonormal_weighted(&p, &[pair.psi.clone(), jpsi.clone()]) {
        proj.axpy(-p.inner(&q, &r), &q);
    }
    assert!(fwd.sub(&proj).norm_l2() <= 1e-9 * r.norm_l2());

    // kernel input maps to zero
    let mut k = pair.psi.scale(Complex64::new(0.3, -0.2));
    k.axpy(Complex64::new(1.1, 0.0), &jpsi);
    let z = projected_resolvent(&p, lam, &pair, &k, &opts).unwrap();
    assert!(z.norm_l2() <= 1e-10 * k.norm_l2());

    // another eigenvector is scaled by 1/(μ - λ)
    let other = pairs.iter().find(|q| (q.lambda - lam).abs() > 0.05).unwrap();
    let y = projected_resolvent(&p, lam, &pair, &other.psi, &opts).unwrap();
    let expect = other.psi.scale(Complex64::new(1.0 / (other.lambda - lam), 0.0));
    assert!(y.sub(&expect).norm_l2() <= 1e-8 * expect.norm_l2());
}

#[test]
fn eigenpath_scaling_and_stationary() {
    let g = TorusGrid::with_points(6).unwrap();
    let exps = ExponentTable::three();
    let spin = SpinStructure::default();
    let u0 = base_u(&g);
    let p = Pencil::new(&u0, spin, &exps).unwrap();
    let (pair, _) = simple_pair(&p, 0.54);
    let opts = PerturbOptions::default();
    let start = PathState {
        t: 0.0,
        lambda: pair.lambda,
        psi: pair.psi.clone(),
        gap: pair.gap,
    };

    // u(t) = e^{st} u0: λ(t) = λ0 e^{-2st}
    let s = -0.5;
    let u0c = u0.clone();
    let scaling = move |t: f64| Ok((u0c.scale((s * t).exp()), u0c.scale(s * (s * t).exp())));
    let endpoint = |dt: f64| {
        let mut st = start.clone();
        let n = (0.2 / dt).round() as usize;
        let mut trace = vec![(st.t, st.lambda)];
        for _ in 0..n {
            st = eigenpath_step(&scaling, spin, &exps, &st, dt, &opts).unwrap();
            trace.push((st.t, st.lambda));
        }
        (st, trace)
    };
    let exact = pair.lambda * (-2.0 * s * 0.2f64).exp();
    let (a, trace) = endpoint(0.1);
    let (b, _) = endpoint(0.05);
    let ea = (a.lambda - exact).abs();
    let eb = (b.lambda - exact).abs();
    assert!(ea <= 1e-6 && eb <= ea / 12.0, "{ea} {eb}");
    let pend = Pencil::new(&u0.scale((0.2 * s).exp()), spin, &exps).unwrap();
    assert!(pend.constraint_residual(b.lambda, &b.psi) <= 1e-7);

    // growth bound: exact with C = 2|s|, violated below it
    let n0 = pair.lambda.abs();
    let pts: Vec<_> = (0..=2).map(|i| scaling(0.1 * i as f64).unwrap()).collect();
    let c = growth_rate(&pts, &exps);
    assert!((c - 2.0 * s.abs()).abs() <= 1e-12);
    assert!(growth_bound_check(&trace, n0, c + 1e-6).pass);
    assert!(!growth_bound_check(&trace, n0, c - 0.1).pass);

    // stationary path
    let u0s = u0.clone();
    let still = move |_t: f64| Ok((u0s.clone(), ScalarField::zeros(u0s.grid())));
    let next = eigenpath_step(&still, spin, &exps, &start, 0.1, &opts).unwrap();
    assert_eq!(next.lambda, start.lambda);
    assert!(p.norm(&next.psi.sub(&start.psi)) <= 1e-12);
}

#[test]
fn eigenpath_tracks_generic_path() {
    let g = TorusGrid::with_points(6).unwrap();
    let exps = ExponentTable::three();
    let spin = SpinStructure::default();
    let u0 = base_u(&g);
    let v = direction(&g);
    let p = Pencil::new(&u0, spin, &exps).unwrap();
    let (pair, _) = simple_pair(&p, 0.54);
    let (u0c, vc) = (u0.clone(), v.clone());
    let path = move |t: f64| {
        let mut w = u0c.clone();
        w.axpy(t, &vc);
        Ok((w, vc.clone()))
    };
    let mut st = PathState {
        t: 0.0,
        lambda: pair.lambda,
        psi: pair.psi.clone(),
        gap: pair.gap,
    };
    for _ in 0..4 {
        st = eigenpath_step(&path, spin, &exps, &st, 0.025, &PerturbOptions::default()).unwrap();
    }
    let (uend, _) = path(0.1).unwrap();
    let pend = Pencil::new(&uend, spin, &exps).unwrap();
    let (oracle, _) = simple_pair(&pend, st.lambda);
    assert!((st.lambda - oracle.lambda).abs() <= 1e-7, "{} {}", st.lambda, oracle.lambda);
    assert!(pend.constraint_residual(st.lambda, &st.psi) <= 1e-5);
}
