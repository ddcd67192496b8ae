//! The conformal Einstein-Dirac flow `∂_t u = -u^{1-p3} [L u - (E / ∫u^{p1}|ψ|²) |ψ|² u^{p2}]`
//! coupled to a tracked quaternionic-simple eigenpair of the pencil, with
//! diagnostics and the linearized operator `cl_v`.

use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::conformal::{background_scal, conformal_laplacian, laplacian, scal_conformal, total_energy};
use crate::dirac::quaternionic_j;
use crate::error::{Error, Result};
use crate::parabolic::{
    constant_provider, solve as solve_parabolic, NonlocalOperator, ParabolicProblem, Primitive, Scheme,
    SolveOptions,
};
use crate::pencil::{simplicity_gap, solve_window, solve_window_from, EigenOptions, EigenPair, Pencil, Simplicity};
use crate::perturbation::{
    align_to_span, eigenpath_step, lambda_dot, projected_resolvent, psi_dot, PathState, PerturbOptions,
};
use crate::torus::{quadrature, ExponentTable, ScalarField, SpinStructure, SpinorField};

/// `(ψ, ψ)_u`.
fn weighted_norm_sq(u: &ScalarField, psi: &SpinorField, exps: &ExponentTable) -> f64 {
    quadrature(&u.pow(exps.p1).mul(&psi.pointwise_norm_sq()))
}

/// Right-hand side of the flow in `u`-form, coefficient kept in ratio form.
pub fn rhs_u(u: &ScalarField, pair: &EigenPair, exps: &ExponentTable) -> Result<ScalarField> {
    u.ensure_positive()?;
    let lu = conformal_laplacian(u, exps);
    let energy = quadrature(&u.mul(&lu));
    let ratio = energy / weighted_norm_sq(u, &pair.psi, exps);
    let mut bracket = lu;
    bracket.axpy(-ratio, &pair.psi.pointwise_norm_sq().mul(&u.pow(exps.p2)));
    Ok(bracket.mul(&u.pow(1.0 - exps.p3)).scale(-1.0))
}

/// The same right-hand side evaluated from the `u^{p3}` form of the flow,
/// `∂_t u^{p3} = -p3 [...]`, divided through by `p3 u^{p3-1}`.
pub fn rhs_u_power_form(u: &ScalarField, pair: &EigenPair, exps: &ExponentTable) -> Result<ScalarField> {
    u.ensure_positive()?;
    let lu = conformal_laplacian(u, exps);
    let num = quadrature(&u.mul(&lu));
    let den = weighted_norm_sq(u, &pair.psi, exps);
    let psi2 = pair.psi.pointwise_norm_sq();
    let dt_power = lu
        .sub(&psi2.mul(&u.pow(exps.p2)).scale(num / den))
        .scale(-exps.p3);
    Ok(dt_power.zip_map(u, |d, x| d / (exps.p3 * x.powf(exps.p3 - 1.0))))
}

/// `η_u = -p4 [scal_{u^{p4} g} - E |ψ_u|² u^{-p7}]` with `ψ_u` normalized in
/// `(·,·)_u`; the flow reads `∂_t u = η_u u / p4`.
pub fn eta_u(u: &ScalarField, pair: &EigenPair, exps: &ExponentTable) -> Result<ScalarField> {
    let scal = scal_conformal(u, exps)?;
    let energy = total_energy(u, exps);
    let norm = weighted_norm_sq(u, &pair.psi, exps);
    let psi2 = pair.psi.pointwise_norm_sq().scale(1.0 / norm);
    let mut out = scal;
    out.axpy(-energy, &psi2.mul(&u.pow(-exps.p7)));
    Ok(out.scale(-exps.p4))
}

/// `(‖L u - (E / ∫u^{p1}|ψ|²) |ψ|² u^{p2}‖_2, ‖Dψ - λ u^{p1} ψ‖_2 / ‖ψ‖_2)`.
pub fn stationarity_residual(u: &ScalarField, pair: &EigenPair, exps: &ExponentTable) -> Result<(f64, f64)> {
    u.ensure_positive()?;
    let lu = conformal_laplacian(u, exps);
    let energy = quadrature(&u.mul(&lu));
    let ratio = energy / weighted_norm_sq(u, &pair.psi, exps);
    let mut r = lu;
    r.axpy(-ratio, &pair.psi.pointwise_norm_sq().mul(&u.pow(exps.p2)));
    let pencil = Pencil::new(u, pair.psi.spin(), exps)?;
    Ok((r.l2_norm(), pencil.constraint_residual(pair.lambda, &pair.psi)))
}

/// `Φ(u, ψ) = ∫ [u L u + Re<Dψ, ψ> - λ u^{p1} |ψ|²]`.
pub fn action_value(u: &ScalarField, psi: &SpinorField, lambda: f64, exps: &ExponentTable) -> f64 {
    let dpsi = crate::dirac::apply_dirac(psi);
    let ones = ScalarField::constant(u.grid(), 1.0);
    total_energy(u, exps) + psi.inner_weighted(&ones, &dpsi).re - lambda * weighted_norm_sq(u, psi, exps)
}

/// `∫ u^{p5}`, the volume of `u^{p4} g`.
pub fn volume(u: &ScalarField, exps: &ExponentTable) -> f64 {
    quadrature(&u.pow(exps.p5))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Diagnostics {
    pub energy: f64,
    pub volume: f64,
    pub constraint_residual: f64,
    pub stationarity_residual: f64,
    pub min_u: f64,
    pub gap: f64,
    pub action: f64,
}

#[derive(Clone, Debug)]
pub struct FlowState {
    pub t: f64,
    pub u: ScalarField,
    pub pair: EigenPair,
    pub diagnostics: Diagnostics,
    /// Steps taken since the last eigenpair re-solve.
    pub since_projection: usize,
}

impl FlowState {
    pub fn new(t: f64, u: ScalarField, pair: EigenPair, exps: &ExponentTable) -> Result<Self> {
        let diagnostics = diagnose(&u, &pair, exps)?;
        Ok(Self {
            t,
            u,
            pair,
            diagnostics,
            since_projection: 0,
        })
    }
}

pub fn diagnose(u: &ScalarField, pair: &EigenPair, exps: &ExponentTable) -> Result<Diagnostics> {
    let (stat, constraint) = stationarity_residual(u, pair, exps)?;
    Ok(Diagnostics {
        energy: total_energy(u, exps),
        volume: volume(u, exps),
        constraint_residual: constraint,
        stationarity_residual: stat,
        min_u: u.min(),
        gap: pair.gap.unwrap_or(f64::NAN),
        action: action_value(u, &pair.psi, pair.lambda, exps),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FlowScheme {
    Rk4,
    Imex,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DtPolicy {
    Fixed(f64),
    /// `dt = c h² min(u)^{p4} / c_m`, re-evaluated every step.
    Cfl(f64),
}

#[derive(Clone, Debug)]
pub struct FlowConfig {
    pub dt: DtPolicy,
    pub horizon: f64,
    /// Steps between eigenpair re-solves.
    pub projection_period: usize,
    pub positivity_eps: f64,
    /// Minimum exterior gap, relative to `1 + |λ|`.
    pub gap_tol: f64,
    pub scheme: FlowScheme,
    /// Window size for re-solves.
    pub eigen_count: usize,
    pub eigen: EigenOptions,
}

/// CFL constant for the explicit scheme. The spectral Laplacian reaches
/// `3π²/h²` and RK4 is stable up to about 2.78 on the negative axis, which
/// caps the constant near 0.094; half of that keeps the stiff modes accurate
/// enough for the eigen-constraint to hold to ~1e-7 between re-solves.
pub const DEFAULT_CFL: f64 = 0.04;

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            dt: DtPolicy::Cfl(DEFAULT_CFL),
            horizon: 0.1,
            projection_period: 5,
            positivity_eps: 1e-3,
            gap_tol: 1e-3,
            scheme: FlowScheme::Rk4,
            eigen_count: 6,
            eigen: EigenOptions::default(),
        }
    }
}

impl FlowConfig {
    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidField(msg.to_string()));
        if self.projection_period == 0 {
            return bad("projection period must be at least 1");
        }
        if !(self.positivity_eps > 0.0) {
            return bad("positivity threshold must be positive");
        }
        if !(self.horizon >= 0.0) {
            return bad("horizon must be non-negative");
        }
        match self.dt {
            DtPolicy::Fixed(dt) if !(dt > 0.0) => bad("dt must be positive"),
            DtPolicy::Cfl(c) if !(c > 0.0) => bad("CFL constant must be positive"),
            _ => Ok(()),
        }
    }

    fn perturb(&self) -> PerturbOptions {
        PerturbOptions {
            gap_tol: self.gap_tol,
            ..PerturbOptions::default()
        }
    }
}

/// Explicit stability limit `c h² min(u)^{p4} / c_m`.
pub fn cfl_limit(u: &ScalarField, exps: &ExponentTable, c: f64) -> f64 {
    let h = u.grid().spacing();
    c * h * h * u.min().powf(exps.p4) / exps.c_m
}

fn pair_with(lambda: f64, psi: SpinorField, gap: Option<f64>) -> EigenPair {
    EigenPair {
        lambda,
        psi,
        residual: f64::NAN,
        gap,
    }
}

/// Time derivative of the coupled state `(u, λ, ψ)`.
fn coupled_rhs(
    u: &ScalarField,
    pair: &EigenPair,
    exps: &ExponentTable,
    opts: &PerturbOptions,
) -> Result<(ScalarField, f64, SpinorField)> {
    let du = rhs_u(u, pair, exps)?;
    let pencil = Pencil::new(u, pair.psi.spin(), exps)?;
    let dl = lambda_dot(u, &du, pair, exps)?;
    let dpsi = psi_dot(&pencil, &du, pair, dl, opts)?;
    Ok((du, dl, dpsi))
}

fn rk4_step(state: &FlowState, dt: f64, exps: &ExponentTable, opts: &PerturbOptions) -> Result<(ScalarField, f64, SpinorField)> {
    let gap = state.pair.gap;
    let stage = |k_u: &ScalarField, k_l: f64, k_p: &SpinorField, h: f64| -> (ScalarField, EigenPair) {
        let mut u = state.u.clone();
        u.axpy(h, k_u);
        let mut psi = state.pair.psi.clone();
        psi.axpy(Complex64::new(h, 0.0), k_p);
        (u, pair_with(state.pair.lambda + h * k_l, psi, gap))
    };
    let (u1, l1, p1) = coupled_rhs(&state.u, &state.pair, exps, opts)?;
    let (su, sp) = stage(&u1, l1, &p1, 0.5 * dt);
    let (u2, l2, p2) = coupled_rhs(&su, &sp, exps, opts)?;
    let (su, sp) = stage(&u2, l2, &p2, 0.5 * dt);
    let (u3, l3, p3) = coupled_rhs(&su, &sp, exps, opts)?;
    let (su, sp) = stage(&u3, l3, &p3, dt);
    let (u4, l4, p4) = coupled_rhs(&su, &sp, exps, opts)?;
    let mut u = state.u.clone();
    let mut psi = state.pair.psi.clone();
    for (w, ku, kp) in [(1.0, &u1, &p1), (2.0, &u2, &p2), (2.0, &u3, &p3), (1.0, &u4, &p4)] {
        u.axpy(dt * w / 6.0, ku);
        psi.axpy(Complex64::new(dt * w / 6.0, 0.0), kp);
    }
    let lambda = state.pair.lambda + dt / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
    Ok((u, lambda, psi))
}

/// Backward Euler on `c_m u^{-p4} Δ` with the coefficient frozen at `u_n`,
/// the remaining terms explicit; the eigenpair follows the linear path from
/// `u_n` to `u_{n+1}` by one RK4 eigenpath step.
fn imex_step(state: &FlowState, dt: f64, exps: &ExponentTable, opts: &PerturbOptions) -> Result<(ScalarField, f64, SpinorField)> {
    let u0 = &state.u;
    let coef = u0.pow(-exps.p4).scale(exps.c_m);
    let explicit = rhs_u(u0, &state.pair, exps)?.sub(&coef.mul(&laplacian(u0)));
    let problem = ParabolicProblem {
        diffusivity: constant_provider(coef),
        operator: NonlocalOperator::zero(),
        forcing: Some(constant_provider(explicit)),
        initial: u0.clone(),
        horizon: dt,
        steps: 1,
    };
    let sol = solve_parabolic(
        &problem,
        Scheme::BackwardEuler,
        &SolveOptions {
            tol: 1e-12,
            random_start: None,
        },
    )?;
    let u1 = sol.last().clone();
    let velocity = u1.sub(u0).scale(1.0 / dt);
    let (start, vel) = (u0.clone(), velocity);
    let path = move |s: f64| {
        let mut w = start.clone();
        w.axpy(s, &vel);
        Ok((w, vel.clone()))
    };
    let ps = PathState {
        t: 0.0,
        lambda: state.pair.lambda,
        psi: state.pair.psi.clone(),
        gap: state.pair.gap,
    };
    let next = eigenpath_step(&path, state.pair.psi.spin(), exps, &ps, dt, opts)?;
    Ok((u1, next.lambda, next.psi))
}

/// Re-solve the cluster near `lambda` at `u`, align `psi` into it and
/// normalize; also returns the refreshed exterior gap.
fn project(
    u: &ScalarField,
    lambda: f64,
    psi: &SpinorField,
    exps: &ExponentTable,
    config: &FlowConfig,
) -> Result<EigenPair> {
    let pencil = Pencil::new(u, psi.spin(), exps)?;
    let start = [psi.clone(), quaternionic_j(psi)];
    let window = solve_window_from(&pencil, lambda, config.eigen_count, &config.eigen, &start)?;
    let near = window.cluster_near(lambda).cloned();
    let cluster = match near {
        Some(c) if c.complete && c.len == 2 => c,
        // a degenerate cluster is only tolerated while ψ is still an exact
        // eigenspinor, e.g. at a constant fixed point; there is nothing to correct
        Some(c) if (c.center - lambda).abs() <= config.eigen.tol * (1.0 + lambda.abs()) => {
            let residual = pencil.constraint_residual(lambda, psi);
            if residual > config.eigen.tol * (1.0 + lambda.abs()) {
                return Err(Error::NoSimpleEigenvalue { target: lambda });
            }
            let n = weighted_norm_sq(u, psi, exps).sqrt();
            return Ok(EigenPair {
                lambda,
                psi: psi.scale(Complex64::new(1.0 / n, 0.0)),
                residual,
                gap: if c.complete { Some(c.gap()) } else { None },
            });
        }
        _ => return Err(Error::NoSimpleEigenvalue { target: lambda }),
    };
    let tol = config.gap_tol * (1.0 + lambda.abs());
    if cluster.gap() < tol {
        return Err(Error::SmallGap { gap: cluster.gap(), tol });
    }
    let members: Vec<SpinorField> = window.cluster_members(&cluster).iter().map(|m| m.psi.clone()).collect();
    let aligned = align_to_span(&pencil, &members, psi);
    let residual = pencil.constraint_residual(cluster.center, &aligned);
    Ok(EigenPair {
        lambda: cluster.center,
        psi: aligned,
        residual,
        gap: Some(cluster.gap()),
    })
}

/// One step of the coupled flow, followed by renormalization and, every
/// `projection_period` steps, an eigenpair re-solve.
pub fn step(state: &FlowState, dt: f64, exps: &ExponentTable, config: &FlowConfig) -> Result<FlowState> {
    let opts = config.perturb();
    let (u, lambda, psi) = match config.scheme {
        FlowScheme::Rk4 => rk4_step(state, dt, exps, &opts)?,
        FlowScheme::Imex => imex_step(state, dt, exps, &opts)?,
    };
    let min = u.min();
    if min < config.positivity_eps {
        return Err(Error::PositivityLoss {
            min,
            threshold: config.positivity_eps,
        });
    }
    let since = state.since_projection + 1;
    let pair = if since >= config.projection_period {
        project(&u, lambda, &psi, exps, config)?
    } else {
        let n = weighted_norm_sq(&u, &psi, exps).sqrt();
        let psi = psi.scale(Complex64::new(1.0 / n, 0.0));
        pair_with(lambda, psi, state.pair.gap)
    };
    let mut next = FlowState::new(state.t + dt, u, pair, exps)?;
    next.since_projection = if since >= config.projection_period { 0 } else { since };
    Ok(next)
}

/// Select the quaternionic-simple cluster nearest `target` at `u0`.
pub fn initial_state(
    u0: &ScalarField,
    spin: SpinStructure,
    target: f64,
    exps: &ExponentTable,
    config: &FlowConfig,
) -> Result<FlowState> {
    config.validate()?;
    let pencil = Pencil::new(u0, spin, exps)?;
    let window = solve_window(&pencil, target, config.eigen_count, &config.eigen)?;
    let nearest = window
        .pairs
        .iter()
        .min_by(|a, b| (a.lambda - target).abs().total_cmp(&(b.lambda - target).abs()))
        .ok_or(Error::NoSimpleEigenvalue { target })?
        .lambda;
    let report = match simplicity_gap(&window, nearest, config.gap_tol * (1.0 + nearest.abs())) {
        Ok(r) => r,
        Err(Error::WindowTooNarrow { .. }) => return Err(Error::NoSimpleEigenvalue { target }),
        Err(e) => return Err(e),
    };
    if report.class != Simplicity::QuaternionicSimple {
        return Err(Error::NoSimpleEigenvalue { target });
    }
    if report.center == 0.0 {
        return Err(Error::ZeroEigenvalue);
    }
    let cluster = window.cluster_near(nearest).expect("classified cluster").clone();
    let mut pair = window.cluster_members(&cluster)[0].clone();
    pair.lambda = cluster.center;
    let n = weighted_norm_sq(u0, &pair.psi, exps).sqrt();
    pair.psi.scale_mut(Complex64::new(1.0 / n, 0.0));
    FlowState::new(0.0, u0.clone(), pair, exps)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub lambda: f64,
    pub energy: f64,
    pub volume: f64,
    pub constraint_residual: f64,
    pub stationarity_residual: f64,
    pub min_u: f64,
    pub gap: f64,
    pub dt: f64,
}

impl TrajectoryRow {
    fn of(state: &FlowState, dt: f64) -> Self {
        let d = &state.diagnostics;
        Self {
            t: state.t,
            lambda: state.pair.lambda,
            energy: d.energy,
            volume: d.volume,
            constraint_residual: d.constraint_residual,
            stationarity_residual: d.stationarity_residual,
            min_u: d.min_u,
            gap: d.gap,
            dt,
        }
    }
}

#[derive(Debug)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
    /// `(step index, t, u)` every `stride` steps, plus the final state.
    pub snapshots: Vec<(usize, f64, ScalarField)>,
    pub last: FlowState,
    pub abort: Option<Error>,
}

/// Integrate from `state` to the configured horizon; a failing step ends
/// the run and is recorded as the abort reason.
pub fn run_from(
    state: FlowState,
    exps: &ExponentTable,
    config: &FlowConfig,
    snapshot_stride: Option<usize>,
) -> Result<Trajectory> {
    config.validate()?;
    let mut rows = vec![TrajectoryRow::of(&state, 0.0)];
    let mut snapshots = Vec::new();
    if snapshot_stride.is_some() {
        snapshots.push((0, state.t, state.u.clone()));
    }
    let mut cur = state;
    let mut abort = None;
    let mut n = 0;
    let end = config.horizon;
    while cur.t < end * (1.0 - 1e-12) {
        let raw = match config.dt {
            DtPolicy::Fixed(dt) => dt,
            DtPolicy::Cfl(c) => cfl_limit(&cur.u, exps, c),
        };
        let remaining = end - cur.t;
        // avoid a sliver of a final step
        let dt = if remaining <= raw * (1.0 + 1e-9) { remaining } else { raw };
        match step(&cur, dt, exps, config) {
            Ok(mut next) => {
                n += 1;
                if remaining <= raw * (1.0 + 1e-9) {
                    next.t = end;
                }
                rows.push(TrajectoryRow::of(&next, dt));
                if let Some(s) = snapshot_stride {
                    if s > 0 && n % s == 0 {
                        snapshots.push((n, next.t, next.u.clone()));
                    }
                }
                cur = next;
            }
            Err(e) => {
                abort = Some(e);
                break;
            }
        }
    }
    if snapshot_stride.is_some() && snapshots.last().map(|s| s.0) != Some(n) {
        snapshots.push((n, cur.t, cur.u.clone()));
    }
    Ok(Trajectory {
        rows,
        snapshots,
        last: cur,
        abort,
    })
}

/// [`initial_state`] followed by [`run_from`].
pub fn run(
    u0: &ScalarField,
    spin: SpinStructure,
    target: f64,
    exps: &ExponentTable,
    config: &FlowConfig,
    snapshot_stride: Option<usize>,
) -> Result<Trajectory> {
    let state = initial_state(u0, spin, target, exps, config)?;
    run_from(state, exps, config, snapshot_stride)
}

/// `cl_v` with `d𝓠[v](w) = c_m v^{-p4} Δw + cl_v[w]`, where
/// `𝓠[v] = c_m v^{-p4} Δv - scal v^{1-p4} + E(v) |ψ_v|² v^{-p6}` is the flow
/// right-hand side with a normalized eigenspinor. Terms: one multiplication,
/// two rank-one integrals and the eigenspinor response through the
/// projected resolvent.
pub fn linearized_flow_operator(v: &ScalarField, pair: &EigenPair, exps: &ExponentTable) -> Result<NonlocalOperator> {
    v.ensure_positive()?;
    let gap = pair.gap.unwrap_or(0.0);
    let opts = PerturbOptions::default();
    let tol = opts.gap_tol * (1.0 + pair.lambda.abs());
    if gap < tol {
        return Err(Error::SmallGap { gap, tol });
    }
    let m = exps.m as f64;
    let grid = *v.grid();
    let pencil = Arc::new(Pencil::new(v, pair.psi.spin(), exps)?);
    let norm = weighted_norm_sq(v, &pair.psi, exps).sqrt();
    let psi = pair.psi.scale(Complex64::new(1.0 / norm, 0.0));
    let psi2 = psi.pointwise_norm_sq();
    let lv = conformal_laplacian(v, exps);
    let energy = quadrature(&v.mul(&lv));
    let scal = background_scal(&grid);
    let emitter = psi2.mul(&v.pow(-exps.p6));

    let mut mult = laplacian(v).mul(&v.pow(-exps.p3)).scale(-exps.p4 * exps.c_m);
    mult.axpy(-(m - 6.0) / (m - 2.0), &scal.mul(&v.pow(-exps.p4)));
    mult.axpy(-exps.p6 * energy, &psi2.mul(&v.pow(-exps.p7)));

    // 2 E Re<ψ, φ_w> v^{-p6}, φ_w = (κ_w / 2) ψ + p1 λ R(v^{-1} w ψ)
    let kappa_kernel = v.pow(exps.p2).mul(&psi2).scale(-exps.p1 * energy);
    let lambda = pair.lambda;
    let base = EigenPair {
        lambda,
        psi: psi.clone(),
        residual: pair.residual,
        gap: pair.gap,
    };
    let (vinv, weight) = (v.pow(-1.0), v.pow(-exps.p6));
    let resp_pencil = Arc::clone(&pencil);
    let p1 = exps.p1;
    // E at a constant v is round-off; the response then carries a vanishing
    // factor and the resolvent on the degenerate flat cluster is skipped
    let negligible = energy.abs() <= 64.0 * f64::EPSILON * quadrature(&v.mul(v)) * exps.c_m;
    let response = move |_t: f64, w: &ScalarField| -> Result<ScalarField> {
        if negligible {
            return Ok(ScalarField::constant(&grid, 0.0));
        }
        let r = base.psi.mul_scalar(&w.mul(&vinv));
        let x = projected_resolvent(&resp_pencil, lambda, &base, &r, &opts)?;
        let re: Vec<f64> = base.psi.pointwise_inner(&x).into_iter().map(|z| z.re).collect();
        let re = ScalarField::new(&grid, re)?;
        Ok(re.mul(&weight).scale(2.0 * energy * p1 * lambda))
    };
    let sup_psi2 = psi2.max();
    let bound = 2.0 * energy.abs() * exps.p1 * lambda.abs() * sup_psi2 * v.pow(-exps.p6).max() * v.pow(-1.0).max()
        * (v.pow(exps.p1).max() / v.pow(exps.p1).min()).sqrt()
        / gap;

    Ok(NonlocalOperator::zero()
        .with(Primitive::Multiply(constant_provider(mult)))
        .with(Primitive::RankOne {
            kernel: constant_provider(lv.scale(2.0)),
            emitter: constant_provider(emitter.clone()),
        })
        .with(Primitive::RankOne {
            kernel: constant_provider(kappa_kernel),
            emitter: constant_provider(emitter),
        })
        .with(Primitive::Response {
            map: Arc::new(response),
            bound,
        }))
}

/// `𝓠[v]` with the eigenspinor of the quaternionic-simple cluster of `v`
/// nearest `target`; any cluster member gives the same `|ψ|²`.
pub fn flow_operator_at(
    v: &ScalarField,
    spin: SpinStructure,
    target: f64,
    exps: &ExponentTable,
    eigen: &EigenOptions,
) -> Result<(ScalarField, EigenPair)> {
    let pencil = Pencil::new(v, spin, exps)?;
    let window = solve_window(&pencil, target, 6, eigen)?;
    let c = window
        .cluster_near(target)
        .filter(|c| c.complete && c.len == 2)
        .ok_or(Error::NoSimpleEigenvalue { target })?
        .clone();
    let mut pair = window.cluster_members(&c)[0].clone();
    pair.lambda = c.center;
    pair.gap = Some(c.gap());
    let n = weighted_norm_sq(v, &pair.psi, exps).sqrt();
    pair.psi.scale_mut(Complex64::new(1.0 / n, 0.0));
    Ok((rhs_u(v, &pair, exps)?, pair))
}

/// Quaternionic multiples `a ψ + b Jψ` with `|a|² + |b|² = 1` leave `|ψ|²`
/// and hence the flow unchanged; returns the sup of the change in `rhs_u`.
pub fn gauge_defect(u: &ScalarField, pair: &EigenPair, a: Complex64, b: Complex64, exps: &ExponentTable) -> Result<f64> {
    let n = (a.norm_sqr() + b.norm_sqr()).sqrt();
    let mut psi = pair.psi.scale(a / n);
    psi.axpy(b / n, &quaternionic_j(&pair.psi));
    let other = EigenPair {
        psi,
        ..pair.clone()
    };
    Ok(rhs_u(u, pair, exps)?.sub(&rhs_u(u, &other, exps)?).sup_norm())
}
