//! First-order derivatives of a quaternionic-simple eigenpair of the pencil
//! along a curve of conformal factors, the projected resolvent they need, and
//! a Runge-Kutta integrator for the resulting ODE.

use num_complex::Complex64;

use crate::dirac::quaternionic_j;
use crate::error::{Error, Result};
use crate::krylov::{cdot, minres, KrylovOptions};
use crate::pencil::{solve_window, EigenOptions, EigenPair, Pencil};
use crate::torus::{ExponentTable, ScalarField, SpinStructure, SpinorField};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug)]
pub struct PerturbOptions {
    /// Minimum exterior gap, relative to `1 + |λ|`.
    pub gap_tol: f64,
    /// Relative residual target for the projected resolvent solve.
    pub solve_tol: f64,
}

impl Default for PerturbOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-3,
            solve_tol: 1e-12,
        }
    }
}

fn check_gap(lambda: f64, gap: Option<f64>, opts: &PerturbOptions) -> Result<()> {
    if lambda == 0.0 {
        return Err(Error::ZeroEigenvalue);
    }
    if let Some(g) = gap {
        let tol = opts.gap_tol * (1.0 + lambda.abs());
        if g < tol {
            return Err(Error::SmallGap { gap: g, tol });
        }
    }
    Ok(())
}

/// `λ' = -p1 λ ∫ u^{p1-1} u̇ |ψ|^2` for `(ψ, ψ)_u = 1`.
pub fn lambda_dot(u: &ScalarField, udot: &ScalarField, pair: &EigenPair, exps: &ExponentTable) -> Result<f64> {
    u.ensure_positive()?;
    let integrand = u.pow(exps.p1 - 1.0).mul(udot).mul(&pair.psi.pointwise_norm_sq());
    Ok(-exps.p1 * pair.lambda * crate::torus::quadrature(&integrand))
}

/// Orthonormal (Euclidean, `φ` coordinates) basis of `span_C{ψ, Jψ}`.
fn kernel_basis(pencil: &Pencil, psi: &SpinorField) -> Vec<Vec<Complex64>> {
    let mut basis: Vec<Vec<Complex64>> = Vec::new();
    for f in [psi.clone(), quaternionic_j(psi)] {
        let mut v = pencil.to_phi(&f);
        for _ in 0..2 {
            for q in &basis {
                let c = cdot(q, &v);
                for (x, y) in v.iter_mut().zip(q) {
                    *x -= c * y;
                }
            }
        }
        let n = crate::krylov::cnorm(&v);
        if n > 0.0 {
            v.iter_mut().for_each(|z| *z /= n);
            basis.push(v);
        }
    }
    basis
}

fn project_out(basis: &[Vec<Complex64>], v: &mut [Complex64]) {
    for q in basis {
        let c = cdot(q, v);
        for (x, y) in v.iter_mut().zip(q) {
            *x -= c * y;
        }
    }
}

/// `P_λ`: `(·,·)_u`-orthogonal projection onto `span_C{ψ, Jψ}`.
pub fn project_kernel(pencil: &Pencil, psi: &SpinorField, r: &SpinorField) -> SpinorField {
    let basis = kernel_basis(pencil, psi);
    let mut v = pencil.to_phi(r);
    let orig = v.clone();
    project_out(&basis, &mut v);
    let kept: Vec<Complex64> = orig.iter().zip(&v).map(|(a, b)| a - b).collect();
    pencil.from_phi(kept)
}

/// `x = (u^{-p1} D - λ)^{-1} (I - P_λ) r`, with `x ⊥ span{ψ, Jψ}` in `(·,·)_u`.
pub fn projected_resolvent(
    pencil: &Pencil,
    lambda: f64,
    pair: &EigenPair,
    r: &SpinorField,
    opts: &PerturbOptions,
) -> Result<SpinorField> {
    check_gap(lambda, pair.gap, opts)?;
    let basis = kernel_basis(pencil, &pair.psi);
    let dim = pencil.dim();
    let mut rhs = pencil.to_phi(r);
    let full = crate::krylov::cnorm(&rhs);
    project_out(&basis, &mut rhs);
    // The tolerance is relative to the unprojected input, so inputs that lie
    // (numerically) in the kernel map to zero instead of chasing round-off.
    let tol = opts.solve_tol * full / crate::krylov::cnorm(&rhs).max(f64::MIN_POSITIVE);
    if tol >= 1.0 {
        return Ok(SpinorField::zeros(pencil.grid(), pencil.spin()));
    }
    let floor = pencil.preconditioner_floor(lambda);
    let op = |x: &[Complex64], out: &mut [Complex64]| {
        let mut xp = x.to_vec();
        project_out(&basis, &mut xp);
        pencil.apply_c(&xp, out);
        for (o, &xi) in out.iter_mut().zip(&xp) {
            *o -= xi * lambda;
        }
        project_out(&basis, out);
    };
    let prec = |x: &[Complex64], out: &mut [Complex64]| {
        let mut xp = x.to_vec();
        project_out(&basis, &mut xp);
        pencil.apply_preconditioner(lambda, floor, &xp, out);
        project_out(&basis, out);
    };
    let mut xi = vec![ZERO; dim];
    minres(
        &op,
        Some(&prec),
        &rhs,
        &mut xi,
        &KrylovOptions {
            tol,
            cycle: 500,
            max_cycles: 10,
        },
    )?;
    project_out(&basis, &mut xi);
    Ok(pencil.from_phi(xi))
}

/// `ψ' = (λ'/2λ) ψ + p1 λ R(u^{-1} u̇ ψ)` with `R` the projected resolvent.
///
/// The components of `ψ'` along `iψ` and `Jψ` are gauge and set to zero.
pub fn psi_dot(
    pencil: &Pencil,
    udot: &ScalarField,
    pair: &EigenPair,
    lambda_dot: f64,
    opts: &PerturbOptions,
) -> Result<SpinorField> {
    check_gap(pair.lambda, pair.gap, opts)?;
    let exps = pencil.exps();
    let rate = udot.zip_map(pencil.u(), |d, u| d / u);
    let r = pair.psi.mul_scalar(&rate);
    let mut out = projected_resolvent(pencil, pair.lambda, pair, &r, opts)?;
    out.scale_mut(Complex64::new(exps.p1 * pair.lambda, 0.0));
    out.axpy(Complex64::new(lambda_dot / (2.0 * pair.lambda), 0.0), &pair.psi);
    Ok(out)
}

/// `d/dt (ψ, ψ)_u = ∫ p1 u^{p1-1} u̇ |ψ|^2 + 2 (ψ', ψ)_u`.
pub fn normalization_rate(pencil: &Pencil, udot: &ScalarField, psi: &SpinorField, psidot: &SpinorField) -> f64 {
    let exps = pencil.exps();
    let a = crate::torus::quadrature(&pencil.u().pow(exps.p1 - 1.0).mul(udot).mul(&psi.pointwise_norm_sq()));
    exps.p1 * a + 2.0 * pencil.inner(psidot, psi).re
}

/// Multiply `psi` by the unit quaternion `a + bJ` maximizing
/// `Re (a ψ + b Jψ, reference)_u`; the result keeps the weighted norm of `psi`.
pub fn quaternionic_align(pencil: &Pencil, psi: &SpinorField, reference: &SpinorField) -> SpinorField {
    let jpsi = quaternionic_j(psi);
    let c1 = pencil.inner(psi, reference);
    let c2 = pencil.inner(&jpsi, reference);
    let n = (c1.norm_sqr() + c2.norm_sqr()).sqrt();
    if n == 0.0 {
        return psi.clone();
    }
    let mut out = psi.scale(c1 / n);
    out.axpy(c2 / n, &jpsi);
    out
}

/// Best `(·,·)_u` approximation of `reference` inside the span of `members`,
/// normalized; for a quaternionic pair this is the quaternionic
/// least-squares gauge alignment.
pub fn align_to_span(pencil: &Pencil, members: &[SpinorField], reference: &SpinorField) -> SpinorField {
    let basis = crate::pencil::orthonormal_weighted(pencil, members);
    let mut out = SpinorField::zeros(pencil.grid(), pencil.spin());
    for q in &basis {
        out.axpy(pencil.inner(q, reference), q);
    }
    let n = pencil.norm(&out);
    if n > 0.0 {
        out.scale_mut(Complex64::new(1.0 / n, 0.0));
    }
    out
}

/// A point on a conformal-factor path together with its velocity.
pub type PathPoint = (ScalarField, ScalarField);

#[derive(Clone, Debug)]
pub struct PathState {
    pub t: f64,
    pub lambda: f64,
    pub psi: SpinorField,
    /// Exterior gap carried from the last solve, used for the gap guard.
    pub gap: Option<f64>,
}

fn derivative_at(
    spin: SpinStructure,
    exps: &ExponentTable,
    point: &PathPoint,
    lambda: f64,
    psi: &SpinorField,
    gap: Option<f64>,
    opts: &PerturbOptions,
) -> Result<(f64, SpinorField)> {
    let (u, udot) = point;
    let pencil = Pencil::new(u, spin, exps)?;
    let pair = EigenPair {
        lambda,
        psi: psi.clone(),
        residual: 0.0,
        gap,
    };
    let ld = lambda_dot(u, udot, &pair, exps)?;
    let pd = psi_dot(&pencil, udot, &pair, ld, opts)?;
    Ok((ld, pd))
}

/// One classical RK4 step of `(λ', ψ')` along the path `t ↦ (u(t), u̇(t))`,
/// followed by renormalization and quaternionic gauge alignment to the
/// previous spinor.
pub fn eigenpath_step(
    path: &dyn Fn(f64) -> Result<PathPoint>,
    spin: SpinStructure,
    exps: &ExponentTable,
    state: &PathState,
    dt: f64,
    opts: &PerturbOptions,
) -> Result<PathState> {
    let t = state.t;
    let p0 = path(t)?;
    let pm = path(t + 0.5 * dt)?;
    let p1 = path(t + dt)?;
    let g = state.gap;
    let (l1, k1) = derivative_at(spin, exps, &p0, state.lambda, &state.psi, g, opts)?;
    let stage = |k: &SpinorField, h: f64| {
        let mut s = state.psi.clone();
        s.axpy(Complex64::new(h, 0.0), k);
        s
    };
    let (l2, k2) = derivative_at(spin, exps, &pm, state.lambda + 0.5 * dt * l1, &stage(&k1, 0.5 * dt), g, opts)?;
    let (l3, k3) = derivative_at(spin, exps, &pm, state.lambda + 0.5 * dt * l2, &stage(&k2, 0.5 * dt), g, opts)?;
    let (l4, k4) = derivative_at(spin, exps, &p1, state.lambda + dt * l3, &stage(&k3, dt), g, opts)?;
    let lambda = state.lambda + dt / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
    let mut psi = state.psi.clone();
    for (w, k) in [(1.0, &k1), (2.0, &k2), (2.0, &k3), (1.0, &k4)] {
        psi.axpy(Complex64::new(dt * w / 6.0, 0.0), k);
    }
    let pencil = Pencil::new(&p1.0, spin, exps)?;
    let n = pencil.norm(&psi);
    psi.scale_mut(Complex64::new(1.0 / n, 0.0));
    let psi = quaternionic_align(&pencil, &psi, &state.psi);
    Ok(PathState {
        t: t + dt,
        lambda,
        psi,
        gap: state.gap,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthReport {
    pub pass: bool,
    /// `min_t [n0 (e^{Ct} - 1) - |λ(t) - λ(0)|]`; negative means violated.
    pub worst_margin: f64,
}

/// Check `|λ(t) - λ(0)| <= n0 (e^{Ct} - 1)` along a recorded trace.
pub fn growth_bound_check(trace: &[(f64, f64)], n0: f64, c: f64) -> GrowthReport {
    let Some(&(t0, l0)) = trace.first() else {
        return GrowthReport {
            pass: true,
            worst_margin: 0.0,
        };
    };
    let mut worst = f64::INFINITY;
    for &(t, l) in trace {
        let bound = n0 * (c * (t - t0)).exp_m1();
        worst = worst.min(bound - (l - l0).abs());
    }
    let slack = 1e-13 * (1.0 + l0.abs());
    GrowthReport {
        pass: worst >= -slack,
        worst_margin: worst,
    }
}

/// Growth rate `C = p1 sup |u̇/u|` over sampled path points, which bounds
/// `|λ'| <= C |λ|`.
pub fn growth_rate(points: &[PathPoint], exps: &ExponentTable) -> f64 {
    points
        .iter()
        .map(|(u, ud)| ud.zip_map(u, |d, x| (d / x).abs()).max())
        .fold(0.0, f64::max)
        * exps.p1
}

/// Least-squares slope of `log e` against `log h`.
pub fn fit_order(steps: &[f64], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = steps.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.max(f64::MIN_POSITIVE).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Outcome of comparing `λ'` and `ψ'` with centered differences of re-solved,
/// gauge-aligned eigenpairs.
#[derive(Clone, Debug, PartialEq)]
pub struct FdReport {
    pub lambda: f64,
    pub lambda_dot: f64,
    pub steps: Vec<f64>,
    pub lambda_errors: Vec<f64>,
    pub psi_errors: Vec<f64>,
    pub lambda_slope: f64,
    pub psi_slope: f64,
    /// `d/dt (ψ, ψ)_u` predicted by the formulas; zero in exact arithmetic.
    pub normalization_rate: f64,
}

fn simple_pair_at(
    u: &ScalarField,
    spin: SpinStructure,
    exps: &ExponentTable,
    target: f64,
    opts: &EigenOptions,
) -> Result<(Pencil, EigenPair, Vec<SpinorField>)> {
    let pencil = Pencil::new(u, spin, exps)?;
    let window = solve_window(&pencil, target, 6, opts)?;
    let c = window
        .cluster_near(target)
        .filter(|c| c.complete && c.len == 2)
        .ok_or(Error::NoSimpleEigenvalue { target })?
        .clone();
    let members = window.cluster_members(&c);
    let mut pair = members[0].clone();
    pair.lambda = c.center;
    let psis = members.iter().map(|m| m.psi.clone()).collect();
    Ok((pencil, pair, psis))
}

/// Finite-difference validation of [`lambda_dot`] and [`psi_dot`] at the
/// quaternionic-simple cluster of `u` nearest `target`, in direction `udot`.
pub fn fd_validate(
    u: &ScalarField,
    udot: &ScalarField,
    spin: SpinStructure,
    exps: &ExponentTable,
    target: f64,
    steps: &[f64],
    eig: &EigenOptions,
    opts: &PerturbOptions,
) -> Result<FdReport> {
    let (p0, pair, _) = simple_pair_at(u, spin, exps, target, eig)?;
    let ld = lambda_dot(u, udot, &pair, exps)?;
    let pd = psi_dot(&p0, udot, &pair, ld, opts)?;
    let pd_norm = p0.norm(&pd).max(f64::MIN_POSITIVE);
    let mut lambda_errors = Vec::with_capacity(steps.len());
    let mut psi_errors = Vec::with_capacity(steps.len());
    for &h in steps {
        let side = |sign: f64| -> Result<(f64, SpinorField)> {
            let mut w = u.clone();
            w.axpy(sign * h, udot);
            let (p, q, members) = simple_pair_at(&w, spin, exps, pair.lambda, eig)?;
            Ok((q.lambda, align_to_span(&p, &members, &pair.psi)))
        };
        let (lp, ap) = side(1.0)?;
        let (lm, am) = side(-1.0)?;
        let fd_l = (lp - lm) / (2.0 * h);
        lambda_errors.push((fd_l - ld).abs() / ld.abs().max(f64::MIN_POSITIVE));
        let mut fd = ap.sub(&am);
        fd.scale_mut(Complex64::new(0.5 / h, 0.0));
        psi_errors.push(p0.norm(&fd.sub(&pd)) / pd_norm);
    }
    Ok(FdReport {
        lambda: pair.lambda,
        lambda_dot: ld,
        steps: steps.to_vec(),
        lambda_slope: fit_order(steps, &lambda_errors),
        psi_slope: fit_order(steps, &psi_errors),
        lambda_errors,
        psi_errors,
        normalization_rate: normalization_rate(&p0, udot, &pair.psi, &pd),
    })
}
