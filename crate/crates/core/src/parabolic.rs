//! The linear parabolic model problem `∂_t w - 𝓐(x,t) Δw + 𝓛[w] = f` with a
//! time-fibered nonlocal operator `𝓛`: operator assembly, axiom probes,
//! Gårding constants, a θ-scheme solver and the weighted energy estimate.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conformal::{gradient, h1_norm_sq, laplacian, screened_inverse};
use crate::error::{Error, Result};
use crate::krylov::{gmres, KrylovOptions};
use crate::torus::{ScalarField, TorusGrid};

pub type ScalarProvider = Arc<dyn Fn(f64) -> ScalarField + Send + Sync>;
pub type VectorProvider = Arc<dyn Fn(f64) -> [ScalarField; 3] + Send + Sync>;
/// A linear map acting on the spatial slice at time `t`.
pub type FiberMap = Arc<dyn Fn(f64, &ScalarField) -> Result<ScalarField> + Send + Sync>;

pub fn constant_provider(f: ScalarField) -> ScalarProvider {
    Arc::new(move |_| f.clone())
}

#[derive(Clone)]
pub enum Primitive {
    /// `w ↦ a(·,t) w`
    Multiply(ScalarProvider),
    /// `w ↦ b(·,t)·∇w`
    GradContract(VectorProvider),
    /// `w ↦ (∫ w K(·,t)) h(·,t)`
    RankOne { kernel: ScalarProvider, emitter: ScalarProvider },
    /// A general fiberwise linear map with a known `L² → L²` bound.
    Response { map: FiberMap, bound: f64 },
}

impl Primitive {
    fn apply(&self, t: f64, w: &ScalarField) -> Result<ScalarField> {
        Ok(match self {
            Primitive::Multiply(a) => a(t).mul(w),
            Primitive::GradContract(b) => {
                let b = b(t);
                let g = gradient(w);
                b[0].mul(&g[0]).add(&b[1].mul(&g[1])).add(&b[2].mul(&g[2]))
            }
            Primitive::RankOne { kernel, emitter } => emitter(t).scale(w.dot(&kernel(t))),
            Primitive::Response { map, .. } => map(t, w)?,
        })
    }

    /// Constant `C` with `|P w|_2 <= C ‖w‖_{H^1}` at time `t`.
    fn bound(&self, t: f64) -> f64 {
        match self {
            Primitive::Multiply(a) => a(t).sup_norm(),
            Primitive::GradContract(b) => {
                let b = b(t);
                b[0].mul(&b[0]).add(&b[1].mul(&b[1])).add(&b[2].mul(&b[2])).max().sqrt()
            }
            Primitive::RankOne { kernel, emitter } => kernel(t).l2_norm() * emitter(t).l2_norm(),
            Primitive::Response { bound, .. } => *bound,
        }
    }
}

/// Sum of time-fibered primitives.
#[derive(Clone, Default)]
pub struct NonlocalOperator {
    terms: Vec<Primitive>,
}

impl NonlocalOperator {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn with(mut self, p: Primitive) -> Self {
        self.terms.push(p);
        self
    }

    /// `w ↦ (∫ w / |T|) 1`.
    pub fn mean(grid: &TorusGrid) -> Self {
        let k = ScalarField::constant(grid, 1.0 / grid.volume());
        let h = ScalarField::constant(grid, 1.0);
        Self::zero().with(Primitive::RankOne {
            kernel: constant_provider(k),
            emitter: constant_provider(h),
        })
    }

    pub fn terms(&self) -> &[Primitive] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn apply(&self, t: f64, w: &ScalarField) -> Result<ScalarField> {
        let mut out = ScalarField::zeros(w.grid());
        for p in &self.terms {
            out.axpy(1.0, &p.apply(t, w)?);
        }
        Ok(out)
    }

    /// Sum of the primitive bounds at time `t`.
    pub fn bound(&self, t: f64) -> f64 {
        self.terms.iter().map(|p| p.bound(t)).sum()
    }
}

impl std::fmt::Debug for NonlocalOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let names: Vec<&str> = self
            .terms
            .iter()
            .map(|p| match p {
                Primitive::Multiply(_) => "Multiply",
                Primitive::GradContract(_) => "GradContract",
                Primitive::RankOne { .. } => "RankOne",
                Primitive::Response { .. } => "Response",
            })
            .collect();
        f.debug_struct("NonlocalOperator").field("terms", &names).finish()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxiomReport {
    /// Largest observed `|𝓛w|_2 / ‖w‖_{H^1}` over probes.
    pub a1_constant: f64,
    /// Sum of primitive bounds, maximized over the probe times.
    pub a1_bound: f64,
    /// Largest relative `|𝓛[αw](t) - α(t) 𝓛[w](t)|_2`.
    pub a2_violation: f64,
    pub probes: usize,
}

/// Probe (A1) and (A2) with random band-limited fields at random times in
/// `[0, horizon]`; the constant field is always among the probes.
pub fn check_axioms(
    op: &NonlocalOperator,
    grid: &TorusGrid,
    horizon: f64,
    trials: usize,
    seed: u64,
) -> Result<AxiomReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a1 = 0.0f64;
    let mut a1_bound = 0.0f64;
    let mut a2 = 0.0f64;
    for i in 0..trials.max(1) {
        let t = if i == 0 { 0.0 } else { rng.gen_range(0.0..=horizon) };
        let w = if i == 0 {
            ScalarField::constant(grid, 1.0)
        } else {
            let band = rng.gen_range(1..=3);
            ScalarField::random_band_limited(grid, band, 1.0, &mut rng)
        };
        let lw = op.apply(t, &w)?;
        a1 = a1.max(lw.l2_norm() / h1_norm_sq(&w).sqrt());
        a1_bound = a1_bound.max(op.bound(t));
        // α(t) = 1 + t + t^2 for the fibered scaling identity
        let alpha = 1.0 + t + t * t;
        let scaled = op.apply(t, &w.scale(alpha))?;
        let expect = lw.scale(alpha);
        let denom = expect.l2_norm().max(w.l2_norm() * alpha * f64::EPSILON);
        a2 = a2.max(scaled.sub(&expect).l2_norm() / denom);
    }
    Ok(AxiomReport {
        a1_constant: a1,
        a1_bound,
        a2_violation: a2,
        probes: trials.max(1),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    BackwardEuler,
    CrankNicolson,
}

impl Scheme {
    pub fn theta(self) -> f64 {
        match self {
            Scheme::BackwardEuler => 1.0,
            Scheme::CrankNicolson => 0.5,
        }
    }
}

#[derive(Clone)]
pub struct ParabolicProblem {
    pub diffusivity: ScalarProvider,
    pub operator: NonlocalOperator,
    pub forcing: Option<ScalarProvider>,
    pub initial: ScalarField,
    pub horizon: f64,
    pub steps: usize,
}

impl ParabolicProblem {
    pub fn grid(&self) -> &TorusGrid {
        self.initial.grid()
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|n| n as f64 * self.dt()).collect()
    }

    fn forcing_at(&self, t: f64) -> ScalarField {
        match &self.forcing {
            Some(f) => f(t),
            None => ScalarField::zeros(self.grid()),
        }
    }

    /// Minimum of `𝓐` over the space-time grid; errors if not positive.
    pub fn min_diffusivity(&self) -> Result<f64> {
        if self.steps == 0 || !(self.horizon > 0.0) {
            return Err(Error::InvalidField("parabolic problem needs horizon > 0 and steps >= 1".into()));
        }
        let min = self
            .times()
            .iter()
            .map(|&t| (self.diffusivity)(t).min())
            .fold(f64::INFINITY, f64::min);
        if !(min > 0.0) {
            return Err(Error::NonPositiveDiffusivity { min });
        }
        Ok(min)
    }

    /// `B_t w = -𝓐(t) Δw + 𝓛_t[w]`.
    pub fn spatial(&self, t: f64, w: &ScalarField) -> Result<ScalarField> {
        let mut out = (self.diffusivity)(t).mul(&laplacian(w)).scale(-1.0);
        if !self.operator.is_zero() {
            out.axpy(1.0, &self.operator.apply(t, w)?);
        }
        Ok(out)
    }

    /// `𝓐_t(φ, ψ) = ∫ ψ B_t φ`.
    pub fn form(&self, t: f64, phi: &ScalarField, psi: &ScalarField) -> Result<f64> {
        Ok(psi.dot(&self.spatial(t, phi)?))
    }
}

/// Forcing that makes `exact(t) = (w, ∂_t w)` a solution.
pub fn manufactured_forcing(
    diffusivity: ScalarProvider,
    operator: NonlocalOperator,
    exact: Arc<dyn Fn(f64) -> (ScalarField, ScalarField) + Send + Sync>,
) -> ScalarProvider {
    Arc::new(move |t| {
        let (w, wt) = exact(t);
        let mut f = diffusivity(t).mul(&laplacian(&w)).scale(-1.0);
        f.axpy(1.0, &wt);
        f.axpy(1.0, &operator.apply(t, &w).expect("manufactured operator application"));
        f
    })
}

#[derive(Clone, Debug)]
pub struct ParabolicSolution {
    pub times: Vec<f64>,
    pub states: Vec<ScalarField>,
    /// Largest relative step residual.
    pub max_residual: f64,
    pub iterations: usize,
}

impl ParabolicSolution {
    pub fn last(&self) -> &ScalarField {
        self.states.last().expect("solution has the initial state")
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    pub tol: f64,
    /// When set, every step's Krylov iteration starts from a random vector
    /// drawn from this seed instead of the previous state.
    pub random_start: Option<u64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            random_start: None,
        }
    }
}

/// θ-scheme in time: `(I + θΔt B_{n+1}) w_{n+1} = (I - (1-θ)Δt B_n) w_n +
/// Δt (θ f_{n+1} + (1-θ) f_n)`, each step solved by GMRES with the
/// Fourier-diagonal preconditioner `(I - θΔt mean(𝓐) Δ)^{-1}`.
pub fn solve(problem: &ParabolicProblem, scheme: Scheme, opts: &SolveOptions) -> Result<ParabolicSolution> {
    problem.min_diffusivity()?;
    let grid = *problem.grid();
    let dt = problem.dt();
    let theta = scheme.theta();
    let times = problem.times();
    let mut states = vec![problem.initial.clone()];
    let mut rng = opts.random_start.map(ChaCha8Rng::seed_from_u64);
    let mut max_residual = 0.0f64;
    let mut iterations = 0;
    let kopts = KrylovOptions {
        tol: opts.tol,
        cycle: 60,
        max_cycles: 40,
    };
    for n in 0..problem.steps {
        let (t0, t1) = (times[n], times[n + 1]);
        let w0 = &states[n];
        let mut rhs = w0.clone();
        if theta < 1.0 {
            rhs.axpy(-(1.0 - theta) * dt, &problem.spatial(t0, w0)?);
            rhs.axpy((1.0 - theta) * dt, &problem.forcing_at(t0));
        }
        rhs.axpy(theta * dt, &problem.forcing_at(t1));

        let c = theta * dt * (problem.diffusivity)(t1).mean();
        let failure = std::cell::Cell::new(None);
        let op = |x: &[f64], out: &mut [f64]| {
            let w = ScalarField::from_vec(&grid, x.to_vec());
            match problem.spatial(t1, &w) {
                Ok(bw) => {
                    for ((o, xi), b) in out.iter_mut().zip(x).zip(bw.values()) {
                        *o = xi + theta * dt * b;
                    }
                }
                Err(e) => {
                    failure.set(Some(e.to_string()));
                    out.copy_from_slice(x);
                }
            }
        };
        let prec = |x: &[f64], out: &mut [f64]| {
            let w = ScalarField::from_vec(&grid, x.to_vec());
            out.copy_from_slice(screened_inverse(&w, c).values());
        };
        let mut x: Vec<f64> = match rng.as_mut() {
            Some(r) => (0..grid.size()).map(|_| r.gen_range(-1.0..1.0)).collect(),
            None => w0.values().to_vec(),
        };
        let report = gmres(&op, Some(&prec), rhs.values(), &mut x, &kopts)?;
        if let Some(msg) = failure.take() {
            return Err(Error::InvalidField(msg));
        }
        max_residual = max_residual.max(report.residual);
        iterations += report.iterations;
        states.push(ScalarField::new(&grid, x)?);
    }
    Ok(ParabolicSolution {
        times,
        states,
        max_residual,
        iterations,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GardingConstants {
    pub delta: f64,
    pub kappa: f64,
    pub probes: usize,
}

fn real_fourier_basis(grid: &TorusGrid, band: i64) -> Vec<ScalarField> {
    let b = grid.base_wavenumber();
    let mut out = vec![ScalarField::constant(grid, 1.0)];
    for k0 in -band..=band {
        for k1 in -band..=band {
            for k2 in -band..=band {
                let k = [k0, k1, k2];
                // one representative of each ±k pair
                if k <= [0, 0, 0] {
                    continue;
                }
                let phase = |x: [f64; 3]| b * (k0 as f64 * x[0] + k1 as f64 * x[1] + k2 as f64 * x[2]);
                out.push(ScalarField::from_fn(grid, |x| phase(x).cos()));
                out.push(ScalarField::from_fn(grid, |x| phase(x).sin()));
            }
        }
    }
    out
}

/// `(δ, κ)` with `𝓐_t(φ,φ) >= (δ/2)‖φ‖_{H^1}^2 - κ|φ|_2^2`: `δ = 2 min 𝓐`,
/// and `κ` the largest deficit ratio found by exact maximization over the
/// band-`band` trigonometric subspace plus `random_probes` random fields, at
/// up to 11 sampled times. A lower-bound estimate, not a certificate.
pub fn garding_constants(
    problem: &ParabolicProblem,
    band: i64,
    random_probes: usize,
    seed: u64,
) -> Result<GardingConstants> {
    let delta = 2.0 * problem.min_diffusivity()?;
    let grid = *problem.grid();
    let times = problem.times();
    let stride = times.len().div_ceil(11).max(1);
    let sample_times: Vec<f64> = times.iter().copied().step_by(stride).collect();
    let basis = real_fourier_basis(&grid, band);
    let basis_lap: Vec<ScalarField> = basis.iter().map(laplacian).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kappa = f64::NEG_INFINITY;
    let mut probes = 0;
    let deficit = |t: f64, phi: &ScalarField, psi: &ScalarField| -> Result<f64> {
        let h1 = phi.dot(psi) - phi.dot(&laplacian(psi));
        Ok(0.5 * delta * h1 - problem.form(t, phi, psi)?)
    };
    for &t in &sample_times {
        let images: Vec<ScalarField> = basis.iter().map(|b| problem.spatial(t, b)).collect::<Result<_>>()?;
        let n = basis.len();
        let mut q = DMatrix::<f64>::zeros(n, n);
        let mut gram = vec![0.0; n];
        for i in 0..n {
            gram[i] = basis[i].dot(&basis[i]);
            for j in 0..n {
                let h1 = basis[i].dot(&basis[j]) - basis[i].dot(&basis_lap[j]);
                q[(i, j)] = 0.5 * delta * h1 - basis[i].dot(&images[j]);
            }
        }
        // symmetrize and normalize by the (diagonal) Gram matrix
        let mut s = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                s[(i, j)] = 0.5 * (q[(i, j)] + q[(j, i)]) / (gram[i] * gram[j]).sqrt();
            }
        }
        let top = s.symmetric_eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        kappa = kappa.max(top);
        probes += n;
        for _ in 0..random_probes {
            let band = rng.gen_range(1..=(grid.n() / 2).max(1));
            let phi = ScalarField::random_band_limited(&grid, band, 1.0, &mut rng);
            kappa = kappa.max(deficit(t, &phi, &phi)? / phi.dot(&phi));
            probes += 1;
        }
    }
    Ok(GardingConstants {
        delta,
        kappa: kappa.max(0.0),
        probes,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyReport {
    pub pass: bool,
    /// `‖u‖²_{LH_a^1}` by weighted trapezoidal sum over the time grid.
    pub lhs: f64,
    /// `(|u_0|² + ‖f‖²_{LH_a^0}) / δ`.
    pub rhs: f64,
    /// `rhs - lhs`.
    pub margin: f64,
}

/// Discrete `‖u‖²_{LH_a^1} <= (|u_0|_2^2 + ‖f‖²_{LH_a^0}) / δ` with weights
/// `e^{-2at}` and trapezoidal time sums; requires `a >= κ + 1/2`.
pub fn energy_estimate_check(
    problem: &ParabolicProblem,
    solution: &ParabolicSolution,
    constants: &GardingConstants,
    a: f64,
) -> Result<EnergyReport> {
    let required = constants.kappa + 0.5;
    // κ is a probed quantity; ignore round-off in the comparison
    if a < required - 1e-10 * (1.0 + required) {
        return Err(Error::ParameterTooSmall { a, required });
    }
    let dt = problem.dt();
    let trap = |vals: &[f64]| -> f64 {
        let n = vals.len();
        let inner: f64 = vals.iter().sum();
        dt * (inner - 0.5 * (vals[0] + vals[n - 1]))
    };
    let weights: Vec<f64> = solution.times.iter().map(|&t| (-2.0 * a * t).exp()).collect();
    let u_terms: Vec<f64> = solution
        .states
        .iter()
        .zip(&weights)
        .map(|(u, w)| w * h1_norm_sq(u))
        .collect();
    let f_terms: Vec<f64> = solution
        .times
        .iter()
        .zip(&weights)
        .map(|(&t, w)| {
            let f = problem.forcing_at(t);
            w * f.dot(&f)
        })
        .collect();
    let lhs = trap(&u_terms);
    let u0 = &problem.initial;
    let rhs = (u0.dot(u0) + trap(&f_terms)) / constants.delta;
    let slack = 1e-12 * (1.0 + rhs.abs());
    Ok(EnergyReport {
        pass: lhs <= rhs + slack,
        lhs,
        rhs,
        margin: rhs - lhs,
    })
}

/// Solve twice, from the previous state and from random Krylov starts, and
/// return the largest sup-norm difference over the time grid.
pub fn uniqueness_check(problem: &ParabolicProblem, scheme: Scheme, seed: u64) -> Result<f64> {
    let a = solve(problem, scheme, &SolveOptions::default())?;
    let b = solve(
        problem,
        scheme,
        &SolveOptions {
            random_start: Some(seed),
            ..SolveOptions::default()
        },
    )?;
    Ok(a
        .states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| x.sub(y).sup_norm())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourier_basis_is_orthogonal() {
        let g = TorusGrid::with_points(6).unwrap();
        let b = real_fourier_basis(&g, 1);
        assert_eq!(b.len(), 27);
        for i in 0..b.len() {
            for j in 0..i {
                assert!(b[i].dot(&b[j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn mean_operator_bound_is_one() {
        let g = TorusGrid::with_points(6).unwrap();
        let op = NonlocalOperator::mean(&g);
        assert!((op.bound(0.0) - 1.0).abs() < 1e-12);
        let w = ScalarField::constant(&g, 2.5);
        let out = op.apply(0.3, &w).unwrap();
        assert!(out.sub(&w).sup_norm() < 1e-12);
    }
}
