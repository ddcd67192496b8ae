//! Self-contained validation suites behind `perturb-validate`,
//! `parabolic-validate` and `covariance-check`. Each returns a JSON report
//! whose `pass` field decides the exit code.

use std::sync::Arc;

use edflow_core::conformal::yamabe_covariance_residual;
use edflow_core::parabolic::{
    check_axioms, constant_provider, energy_estimate_check, garding_constants, manufactured_forcing, solve,
    uniqueness_check, NonlocalOperator, ParabolicProblem, Primitive, Scheme, SolveOptions,
};
use edflow_core::pencil::EigenOptions;
use edflow_core::perturbation::{fd_validate, fit_order, lambda_dot, PerturbOptions};
use edflow_core::torus::trig::TrigPolynomial;
use edflow_core::torus::{ExponentTable, ScalarField, SpinStructure, TorusGrid};
use edflow_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

struct Checks(Vec<Value>);

impl Checks {
    fn push(&mut self, name: &str, pass: bool, detail: Value) {
        self.0.push(json!({ "name": name, "pass": pass, "detail": detail }));
    }

    fn report(self, suite: &str) -> Value {
        let pass = self.0.iter().all(|c| c["pass"] == json!(true));
        json!({ "suite": suite, "pass": pass, "checks": self.0 })
    }
}

pub fn report_passed(report: &Value) -> bool {
    report["pass"] == json!(true)
}

/// Centered-difference check of the eigenvalue and eigenspinor derivative
/// formulas, plus the uniform-scaling closed form.
pub fn perturb_validate() -> Result<Value> {
    let g = TorusGrid::with_points(6)?;
    let exps = ExponentTable::three();
    let u = TrigPolynomial::constant(1.0)
        .with_term(0.3, [1, 0, 0])
        .with_term(0.2, [0, 1, 0])
        .with_term(0.1, [0, 0, 1])
        .sample(&g);
    let udot = TrigPolynomial::constant(0.1)
        .with_term(0.4, [1, 1, 0])
        .with_term(-0.25, [0, 0, 1])
        .sample(&g);
    let steps = [1e-2, 5e-3, 2.5e-3];
    let spin = SpinStructure::default();
    let r = fd_validate(
        &u,
        &udot,
        spin,
        &exps,
        0.54,
        &steps,
        &EigenOptions::default(),
        &PerturbOptions::default(),
    )?;
    let mut c = Checks(Vec::new());
    c.push(
        "lambda_dot_slope",
        (r.lambda_slope - 2.0).abs() <= 0.1,
        json!({ "slope": r.lambda_slope, "errors": r.lambda_errors, "steps": steps }),
    );
    c.push(
        "psi_dot_slope",
        (r.psi_slope - 2.0).abs() <= 0.1,
        json!({ "slope": r.psi_slope, "errors": r.psi_errors, "steps": steps }),
    );
    c.push(
        "normalization_rate",
        r.normalization_rate.abs() <= 1e-9,
        json!({ "rate": r.normalization_rate }),
    );
    let s = 0.7;
    let pair = edflow_core::flow::flow_operator_at(&u, spin, 0.54, &exps, &EigenOptions::default())?.1;
    let ld = lambda_dot(&u, &u.scale(s), &pair, &exps)?;
    let exact = -2.0 * s * pair.lambda;
    c.push(
        "uniform_scaling_closed_form",
        (ld - exact).abs() <= 1e-12 * (1.0 + exact.abs()),
        json!({ "lambda_dot": ld, "expected": exact }),
    );
    Ok(c.report("perturb-validate"))
}

fn heat(g: &TorusGrid, steps: usize) -> ParabolicProblem {
    ParabolicProblem {
        diffusivity: constant_provider(ScalarField::constant(g, 1.0)),
        operator: NonlocalOperator::zero(),
        forcing: None,
        initial: ScalarField::from_fn(g, |x| x[0].cos()),
        horizon: 1.0,
        steps,
    }
}

fn manufactured(g: TorusGrid, steps: usize) -> ParabolicProblem {
    let diff: Arc<dyn Fn(f64) -> ScalarField + Send + Sync> =
        Arc::new(move |t| ScalarField::from_fn(&g, |x| 1.0 + 0.3 * (x[0] + t).sin()));
    let b0 = ScalarField::from_fn(&g, |x| 0.2 * x[1].cos());
    let zero = ScalarField::zeros(&g);
    let op = NonlocalOperator::mean(&g)
        .with(Primitive::Multiply(Arc::new(move |t| {
            ScalarField::from_fn(&g, |x| 0.5 + 0.1 * t * x[2].cos())
        })))
        .with(Primitive::GradContract(Arc::new(move |_| [b0.clone(), zero.clone(), zero.clone()])));
    let exact = Arc::new(move |t: f64| {
        let w = ScalarField::from_fn(&g, |x| (-t).exp() * (1.0 + 0.2 * x[1].cos()));
        let wt = w.scale(-1.0);
        (w, wt)
    });
    ParabolicProblem {
        diffusivity: diff.clone(),
        operator: op.clone(),
        forcing: Some(manufactured_forcing(diff, op, exact.clone())),
        initial: exact(0.0).0,
        horizon: 1.0,
        steps,
    }
}

/// Random coercive problem: positive diffusivity, multiplication, gradient
/// contraction and a rank-one integral term, with time-dependent forcing.
pub fn random_problem(rng: &mut ChaCha8Rng) -> Result<ParabolicProblem> {
    let g = TorusGrid::with_points(6)?;
    let a = TrigPolynomial::random_positive(3, 2, 0.6, rng)
        .sample(&g)
        .scale(rng.gen_range(0.5..1.5));
    let k = ScalarField::random_band_limited(&g, 2, 0.3, rng);
    let h = ScalarField::random_band_limited(&g, 2, 0.3, rng);
    let m = ScalarField::random_band_limited(&g, 2, 0.5, rng);
    let b = [
        ScalarField::random_band_limited(&g, 1, 0.3, rng),
        ScalarField::random_band_limited(&g, 1, 0.3, rng),
        ScalarField::random_band_limited(&g, 1, 0.3, rng),
    ];
    let f = ScalarField::random_band_limited(&g, 2, 1.0, rng);
    let op = NonlocalOperator::zero()
        .with(Primitive::Multiply(Arc::new(move |t| m.scale(1.0 + t))))
        .with(Primitive::GradContract(Arc::new(move |_| b.clone())))
        .with(Primitive::RankOne {
            kernel: constant_provider(k),
            emitter: constant_provider(h),
        });
    Ok(ParabolicProblem {
        diffusivity: constant_provider(a),
        operator: op,
        forcing: Some(Arc::new(move |t| f.scale((3.0 * t).cos()))),
        initial: ScalarField::random_band_limited(&g, 2, 1.0, rng),
        horizon: 1.0,
        steps: 20,
    })
}

/// Heat-mode decay, scheme orders, energy estimate on `instances` random
/// problems, axioms and double-solve uniqueness.
pub fn parabolic_validate(instances: usize, seed: u64) -> Result<Value> {
    let g = TorusGrid::with_points(8)?;
    let mut c = Checks(Vec::new());
    let steps = [10usize, 20, 40];
    let hs: Vec<f64> = steps.iter().map(|&n| 1.0 / n as f64).collect();
    let exact_heat = ScalarField::from_fn(&g, |x| (-1.0f64).exp() * x[0].cos());
    let mut heat_err = Vec::new();
    for &n in &steps {
        let s = solve(&heat(&g, n), Scheme::CrankNicolson, &SolveOptions::default())?;
        heat_err.push(s.last().sub(&exact_heat).sup_norm());
    }
    let heat_order = fit_order(&hs, &heat_err);
    c.push(
        "heat_mode_decay",
        (heat_order - 2.0).abs() <= 0.1 && heat_err[2] <= 1e-4,
        json!({ "amplitude_errors": heat_err, "order": heat_order }),
    );

    let exact = ScalarField::from_fn(&g, |x| (-1.0f64).exp() * (1.0 + 0.2 * x[1].cos()));
    let mut cn = Vec::new();
    let mut be = Vec::new();
    for &n in &steps {
        cn.push(solve(&manufactured(g, n), Scheme::CrankNicolson, &SolveOptions::default())?.last().sub(&exact).sup_norm());
        be.push(solve(&manufactured(g, n), Scheme::BackwardEuler, &SolveOptions::default())?.last().sub(&exact).sup_norm());
    }
    let (cn_order, be_order) = (fit_order(&hs, &cn), fit_order(&hs, &be));
    c.push(
        "crank_nicolson_order",
        (cn_order - 2.0).abs() <= 0.1,
        json!({ "order": cn_order, "errors": cn }),
    );
    c.push(
        "backward_euler_order",
        (be_order - 1.0).abs() <= 0.1,
        json!({ "order": be_order, "errors": be }),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    let mut all = true;
    for _ in 0..instances {
        let p = random_problem(&mut rng)?;
        let k = garding_constants(&p, 1, 20, 5)?;
        let s = solve(&p, Scheme::BackwardEuler, &SolveOptions::default())?;
        let r = energy_estimate_check(&p, &s, &k, k.kappa + 0.5)?;
        all &= r.pass;
        worst = worst.min(r.margin / r.rhs.max(f64::MIN_POSITIVE));
    }
    c.push(
        "energy_estimate",
        all,
        json!({ "instances": instances, "worst_relative_margin": worst }),
    );

    let p = random_problem(&mut rng)?;
    let ax = check_axioms(&p.operator, p.grid(), 1.0, 50, seed)?;
    c.push(
        "axioms",
        ax.a2_violation <= 1e-12 && ax.a1_constant <= ax.a1_bound,
        json!({ "a1_constant": ax.a1_constant, "a1_bound": ax.a1_bound, "a2_violation": ax.a2_violation }),
    );
    let u = uniqueness_check(&manufactured(g, 20), Scheme::CrankNicolson, seed)?;
    c.push("uniqueness", u <= 1e-9, json!({ "difference": u }));
    Ok(c.report("parabolic-validate"))
}

/// Conformal covariance of the conformal Laplacian for constant and
/// band-limited conformal exponents.
pub fn covariance_check(seed: u64) -> Result<Value> {
    let mut c = Checks(Vec::new());
    let g = TorusGrid::with_points(16)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // band 1: the nonlinear terms of the identity (exponentials, |∇f|²) stay
    // resolved at N = 16; band-2 data already aliases at the 1e-7 level
    let u = TrigPolynomial::random_positive(4, 1, 0.5, &mut rng).sample(&g);
    let zero = yamabe_covariance_residual(&ScalarField::zeros(&g), &u);
    c.push("f_zero", zero == 0.0, json!({ "residual": zero }));
    let constant = yamabe_covariance_residual(&ScalarField::constant(&g, 0.4), &u);
    c.push("f_constant", constant <= 1e-10, json!({ "residual": constant }));
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let f = ScalarField::random_band_limited(&g, 1, 0.3, &mut rng);
        let v = TrigPolynomial::random_positive(4, 1, 0.5, &mut rng).sample(&g);
        worst = worst.max(yamabe_covariance_residual(&f, &v));
    }
    c.push("f_band_limited", worst <= 1e-8, json!({ "residual": worst }));
    Ok(c.report("covariance-check"))
}
