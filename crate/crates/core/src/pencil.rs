//! The Hermitian pencil `Dψ = λ u^{p1} ψ`.
//!
//! With `b = u^{-p1/2}` and `φ = u^{p1/2} ψ` the pencil becomes the ordinary
//! Hermitian problem `C φ = λ φ`, `C = b D b`, and the weighted product
//! `(ψ, ψ')_u` becomes the plain `L^2` product of the `φ`'s. Everything below
//! works in `φ` coordinates and converts at the boundary.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dirac::DiracOperator;
use crate::error::{Error, Result};
use crate::krylov::{cdot, cnorm, minres, KrylovOptions};
use crate::torus::{ExponentTable, ScalarField, SpinStructure, SpinorField, TorusGrid};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Relative offset between the requested target and the inner solve shift.
const SHIFT_OFFSET: f64 = 1e-3;

/// Largest grid accepted by [`dense_oracle`].
pub const DENSE_MAX_N: usize = 6;

/// The pencil at a fixed conformal factor.
#[derive(Clone, Debug)]
pub struct Pencil {
    u: ScalarField,
    exps: ExponentTable,
    dirac: DiracOperator,
    /// `u^{-p1/2}` per grid point.
    b: Vec<f64>,
    /// `u^{p1}` as a field.
    weight: ScalarField,
    /// Mean of `u^{-p1}`; scales the flat preconditioner.
    scale: f64,
}

impl Pencil {
    pub fn new(u: &ScalarField, spin: SpinStructure, exps: &ExponentTable) -> Result<Self> {
        u.ensure_positive()?;
        let b: Vec<f64> = u.values().iter().map(|&x| x.powf(-0.5 * exps.p1)).collect();
        let scale = b.iter().map(|v| v * v).sum::<f64>() / b.len() as f64;
        Ok(Self {
            u: u.clone(),
            exps: *exps,
            dirac: DiracOperator::new(u.grid(), spin),
            b,
            weight: u.pow(exps.p1),
            scale,
        })
    }

    pub fn u(&self) -> &ScalarField {
        &self.u
    }

    pub fn grid(&self) -> &TorusGrid {
        self.u.grid()
    }

    pub fn spin(&self) -> SpinStructure {
        self.dirac.spin()
    }

    pub fn exps(&self) -> &ExponentTable {
        &self.exps
    }

    pub fn dirac(&self) -> &DiracOperator {
        &self.dirac
    }

    /// `u^{p1}`.
    pub fn weight(&self) -> &ScalarField {
        &self.weight
    }

    /// Dimension `2 N^3` of the discrete problem.
    pub fn dim(&self) -> usize {
        2 * self.grid().size()
    }

    /// `out = C x` on raw `φ` arrays.
    pub fn apply_c(&self, x: &[Complex64], out: &mut [Complex64]) {
        let mut t: Vec<Complex64> = x.iter().enumerate().map(|(i, &z)| z * self.b[i / 2]).collect();
        self.dirac.apply_raw(&t, out);
        for (i, z) in out.iter_mut().enumerate() {
            *z *= self.b[i / 2];
        }
        t.clear();
    }

    /// Fourier-diagonal approximation of `(C - σ)^{-1}`, positive definite.
    pub fn apply_preconditioner(&self, sigma: f64, floor: f64, x: &[Complex64], out: &mut [Complex64]) {
        let s = self.scale;
        self.dirac
            .apply_function_raw(x, out, |mu| 1.0 / (s * mu - sigma).abs().max(floor));
    }

    /// Default preconditioner floor for shift `σ`.
    pub fn preconditioner_floor(&self, sigma: f64) -> f64 {
        0.05 * (sigma.abs() + self.scale * self.dirac.min_momentum())
    }

    pub fn to_phi(&self, psi: &SpinorField) -> Vec<Complex64> {
        psi.values().iter().enumerate().map(|(i, &z)| z / self.b[i / 2]).collect()
    }

    pub fn from_phi(&self, phi: Vec<Complex64>) -> SpinorField {
        let values = phi.into_iter().enumerate().map(|(i, z)| z * self.b[i / 2]).collect();
        SpinorField::new(self.grid(), self.spin(), values).expect("finite spinor")
    }

    /// `∫ u^{p1} <ψ, φ>`, antilinear in `ψ`; the real part is `(ψ, φ)_u`.
    pub fn inner(&self, psi: &SpinorField, phi: &SpinorField) -> Complex64 {
        psi.inner_weighted(&self.weight, phi)
    }

    pub fn norm(&self, psi: &SpinorField) -> f64 {
        self.inner(psi, psi).re.max(0.0).sqrt()
    }

    /// `‖Dψ - λ u^{p1} ψ‖_2 / ‖ψ‖_2`.
    pub fn constraint_residual(&self, lambda: f64, psi: &SpinorField) -> f64 {
        let mut r = self.dirac.apply(psi);
        r.axpy(Complex64::new(-lambda, 0.0), &psi.mul_scalar(&self.weight));
        r.norm_l2() / psi.norm_l2()
    }

    /// `u^{-p1} D ψ`.
    pub fn apply_weighted_dirac(&self, psi: &SpinorField) -> SpinorField {
        self.dirac.apply(psi).mul_scalar(&self.weight.map(|w| 1.0 / w))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigenPair {
    pub lambda: f64,
    /// Normalized so `(ψ, ψ)_u = 1`.
    pub psi: SpinorField,
    /// `‖Dψ - λ u^{p1} ψ‖_2 / ‖ψ‖_2` at solve time.
    pub residual: f64,
    /// Exterior gap of the cluster containing this pair, when known.
    pub gap: Option<f64>,
}

/// A maximal group of eigenvalues closer than the cluster tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    /// Index of the first member in [`SpectrumWindow::pairs`].
    pub start: usize,
    pub len: usize,
    pub center: f64,
    pub width: f64,
    /// Distance to the next cluster below, or a lower bound from the window edge.
    pub gap_below: f64,
    pub gap_above: f64,
    /// False when the cluster touches the window boundary and may have
    /// members outside it.
    pub complete: bool,
}

impl Cluster {
    pub fn gap(&self) -> f64 {
        self.gap_below.min(self.gap_above)
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

#[derive(Clone, Debug)]
pub struct SpectrumWindow {
    pub target: f64,
    pub count: usize,
    /// Sorted by `λ`, mutually orthonormal in `(·,·)_u`.
    pub pairs: Vec<EigenPair>,
    /// Every eigenvalue with `|λ - target| < radius` is in `pairs`.
    pub radius: f64,
    pub clusters: Vec<Cluster>,
    pub outer_iterations: usize,
}

impl SpectrumWindow {
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.lambda).collect()
    }

    /// Cluster containing the eigenvalue nearest `lambda`.
    pub fn cluster_near(&self, lambda: f64) -> Option<&Cluster> {
        let i = self
            .pairs
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1.lambda - lambda).abs().total_cmp(&(b.1.lambda - lambda).abs()))?
            .0;
        self.clusters.iter().find(|c| c.range().contains(&i))
    }

    pub fn cluster_members(&self, cluster: &Cluster) -> &[EigenPair] {
        &self.pairs[cluster.range()]
    }
}

#[derive(Clone, Debug)]
pub struct EigenOptions {
    /// Target on `‖Cφ - θφ‖` for unit `φ`, relative to `1 + |θ|`.
    pub tol: f64,
    /// Inner shift-invert solve tolerance.
    pub inner_tol: f64,
    pub max_outer: usize,
    /// Block padding beyond `count`.
    pub extra: usize,
    pub seed: u64,
    /// Eigenvalues within `cluster_tol (1 + |λ|)` form one cluster.
    pub cluster_tol: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            inner_tol: 1e-10,
            max_outer: 80,
            extra: 8,
            seed: 0x5eed,
            cluster_tol: 1e-6,
        }
    }
}

/// Modified Gram-Schmidt (two passes) of `cand` against the orthonormal
/// `basis`; dependent candidates are dropped.
fn orthonormalize_into(basis: &mut Vec<Vec<Complex64>>, cand: Vec<Vec<Complex64>>) {
    for mut v in cand {
        let n0 = cnorm(&v);
        if n0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for q in basis.iter() {
                let c = cdot(q, &v);
                for (x, y) in v.iter_mut().zip(q) {
                    *x -= c * y;
                }
            }
        }
        let n1 = cnorm(&v);
        if n1 > 1e-13 * n0 {
            v.iter_mut().for_each(|z| *z /= n1);
            basis.push(v);
        }
    }
}

fn random_vector(dim: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    (0..dim)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}

/// Harmonic Ritz extraction at shift `σ`: returns the `keep` combinations of
/// the orthonormal `basis` whose harmonic Ritz values lie nearest `σ`.
///
/// Plain Rayleigh-Ritz produces spurious interior Ritz values near an
/// interior shift; the harmonic variant does not.
fn harmonic_select(pencil: &Pencil, basis: &[Vec<Complex64>], sigma: f64, keep: usize) -> Vec<Vec<Complex64>> {
    let k = basis.len();
    let dim = pencil.dim();
    let g: Vec<Vec<Complex64>> = basis
        .iter()
        .map(|v| {
            let mut out = vec![ZERO; dim];
            pencil.apply_c(v, &mut out);
            for (o, &x) in out.iter_mut().zip(v) {
                *o -= x * sigma;
            }
            out
        })
        .collect();
    let mut a = DMatrix::<Complex64>::zeros(k, k);
    let mut b = DMatrix::<Complex64>::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            a[(i, j)] = cdot(&g[i], &g[j]);
            b[(i, j)] = cdot(&basis[i], &g[j]);
        }
    }
    let half = Complex64::new(0.5, 0.0);
    let a = (&a + a.adjoint()) * half;
    let b = (&b + b.adjoint()) * half;
    // B y = ν A y with A = L L^H; ν = 1/(θ - σ).
    let l = match a.clone().cholesky() {
        Some(c) => c.l(),
        None => DMatrix::<Complex64>::identity(k, k),
    };
    let x = l.solve_lower_triangular(&b).expect("nonsingular Cholesky factor");
    let m = l.solve_lower_triangular(&x.adjoint()).expect("nonsingular Cholesky factor").adjoint();
    let m = (&m + m.adjoint()) * half;
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].abs().total_cmp(&eig.eigenvalues[i].abs()).then(i.cmp(&j)));
    let lh = l.adjoint();
    order
        .iter()
        .take(keep)
        .map(|&c| {
            let z = eig.eigenvectors.column(c).into_owned();
            let y = lh.solve_upper_triangular(&z).expect("nonsingular Cholesky factor");
            let mut v = vec![ZERO; dim];
            for i in 0..k {
                for t in 0..dim {
                    v[t] += basis[i][t] * y[i];
                }
            }
            v
        })
        .collect()
}

/// Rayleigh-Ritz of `C` on an orthonormal basis; returns `(θ, vectors)` sorted by `|θ - σ|`.
fn rayleigh_ritz(pencil: &Pencil, basis: &[Vec<Complex64>], sigma: f64) -> (Vec<f64>, Vec<Vec<Complex64>>, Vec<Vec<Complex64>>) {
    let k = basis.len();
    let dim = pencil.dim();
    let cb: Vec<Vec<Complex64>> = basis
        .iter()
        .map(|v| {
            let mut out = vec![ZERO; dim];
            pencil.apply_c(v, &mut out);
            out
        })
        .collect();
    let mut h = DMatrix::<Complex64>::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            h[(i, j)] = cdot(&basis[i], &cb[j]);
        }
    }
    let h = (&h + h.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        (eig.eigenvalues[a] - sigma)
            .abs()
            .total_cmp(&(eig.eigenvalues[b] - sigma).abs())
            .then(a.cmp(&b))
    });
    let mut thetas = Vec::with_capacity(k);
    let mut vecs = Vec::with_capacity(k);
    let mut cvecs = Vec::with_capacity(k);
    for &c in &order {
        let mut v = vec![ZERO; dim];
        let mut cv = vec![ZERO; dim];
        for i in 0..k {
            let y = eig.eigenvectors[(i, c)];
            for t in 0..dim {
                v[t] += basis[i][t] * y;
                cv[t] += cb[i][t] * y;
            }
        }
        thetas.push(eig.eigenvalues[c]);
        vecs.push(v);
        cvecs.push(cv);
    }
    (thetas, vecs, cvecs)
}

/// Make the first significant Fourier coefficient real and positive.
pub fn fix_gauge(psi: &mut SpinorField) {
    let coeffs = crate::torus::fourier_transform(psi);
    let max = coeffs.data.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if max == 0.0 {
        return;
    }
    let size = psi.grid().size();
    // Walk modes in storage order, component-interleaved, like the field itself.
    for p in 0..size {
        for c in 0..2 {
            let z = coeffs.data[c * size + p];
            if z.norm() > 1e-6 * max {
                psi.scale_mut(z.conj() / z.norm());
                return;
            }
        }
    }
}

/// Group sorted eigenvalues into clusters and compute exterior gaps.
pub fn build_clusters(lambdas: &[f64], target: f64, radius: f64, cluster_tol: f64) -> Vec<Cluster> {
    let mut clusters: Vec<Cluster> = Vec::new();
    let mut i = 0;
    while i < lambdas.len() {
        let mut j = i + 1;
        while j < lambdas.len() && lambdas[j] - lambdas[j - 1] <= cluster_tol * (1.0 + lambdas[j].abs()) {
            j += 1;
        }
        let members = &lambdas[i..j];
        clusters.push(Cluster {
            start: i,
            len: j - i,
            center: members.iter().sum::<f64>() / members.len() as f64,
            width: members[members.len() - 1] - members[0],
            gap_below: 0.0,
            gap_above: 0.0,
            complete: true,
        });
        i = j;
    }
    let lo_edge = target - radius;
    let hi_edge = target + radius;
    let edge_slack = |x: f64| cluster_tol * (1.0 + x.abs());
    let nc = clusters.len();
    for c in 0..nc {
        let first = lambdas[clusters[c].start];
        let last = lambdas[clusters[c].start + clusters[c].len - 1];
        clusters[c].gap_below = if c > 0 {
            first - lambdas[clusters[c - 1].start + clusters[c - 1].len - 1]
        } else {
            (first - lo_edge).max(0.0)
        };
        clusters[c].gap_above = if c + 1 < nc {
            lambdas[clusters[c + 1].start] - last
        } else {
            (hi_edge - last).max(0.0)
        };
        let touches_low = c == 0 && first - lo_edge <= edge_slack(first);
        let touches_high = c + 1 == nc && hi_edge - last <= edge_slack(last);
        clusters[c].complete = !(touches_low || touches_high);
    }
    clusters
}

/// The `count` eigenpairs of the pencil nearest `target`, by block
/// shift-invert subspace iteration with MINRES inner solves.
pub fn solve_window(pencil: &Pencil, target: f64, count: usize, opts: &EigenOptions) -> Result<SpectrumWindow> {
    solve_window_from(pencil, target, count, opts, &[])
}

/// As [`solve_window`], seeding the block with `start` (e.g. the previous
/// eigenvectors along a path).
pub fn solve_window_from(
    pencil: &Pencil,
    target: f64,
    count: usize,
    opts: &EigenOptions,
    start: &[SpinorField],
) -> Result<SpectrumWindow> {
    let dim = pencil.dim();
    if count == 0 || count + opts.extra > dim / 2 {
        return Err(Error::InvalidField(format!(
            "eigenpair count {count} outside the budget for dimension {dim}"
        )));
    }
    let p = count + opts.extra;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v: Vec<Vec<Complex64>> = Vec::new();
    orthonormalize_into(&mut v, start.iter().take(p).map(|s| pencil.to_phi(s)).collect());
    while v.len() < p {
        let r = random_vector(dim, &mut rng);
        orthonormalize_into(&mut v, vec![r]);
    }

    // Targets frequently sit exactly on an eigenvalue (continuation), which
    // would make the inner systems singular; solve at a nearby shift instead.
    let sigma = target + SHIFT_OFFSET * (1.0 + target.abs());
    let floor = pencil.preconditioner_floor(sigma);
    let shifted = |x: &[Complex64], out: &mut [Complex64]| {
        pencil.apply_c(x, out);
        for (o, &xi) in out.iter_mut().zip(x) {
            *o -= xi * sigma;
        }
    };
    let prec = |x: &[Complex64], out: &mut [Complex64]| pencil.apply_preconditioner(sigma, floor, x, out);
    let kopts = KrylovOptions {
        tol: opts.inner_tol,
        cycle: 300,
        max_cycles: 4,
    };

    let mut worst = f64::INFINITY;
    for outer in 1..=opts.max_outer {
        let mut w = Vec::with_capacity(p);
        for col in &v {
            let mut x = vec![ZERO; dim];
            // Inner failures only slow the outer iteration down.
            let _ = minres(&shifted, Some(&prec), col, &mut x, &kopts);
            w.push(x);
        }
        let mut basis = v.clone();
        orthonormalize_into(&mut basis, w);
        while basis.len() < 2 * p {
            let r = random_vector(dim, &mut rng);
            orthonormalize_into(&mut basis, vec![r]);
        }
        let mut sel = Vec::with_capacity(p);
        orthonormalize_into(&mut sel, harmonic_select(pencil, &basis, sigma, p));
        while sel.len() < p {
            let r = random_vector(dim, &mut rng);
            orthonormalize_into(&mut sel, vec![r]);
        }
        let (thetas, vecs, cvecs) = rayleigh_ritz(pencil, &sel, target);
        worst = 0.0;
        for i in 0..count {
            let r: f64 = vecs[i]
                .iter()
                .zip(&cvecs[i])
                .map(|(x, cx)| (cx - x * thetas[i]).norm_sqr())
                .sum::<f64>()
                .sqrt();
            worst = worst.max(r / (1.0 + thetas[i].abs()));
        }
        v = vecs.into_iter().take(p).collect();
        if worst <= opts.tol {
            return Ok(finish_window(pencil, target, count, opts, &thetas[..p], v, outer));
        }
    }
    Err(Error::ConvergenceFailure {
        iterations: opts.max_outer,
        residual: worst,
    })
}

fn finish_window(
    pencil: &Pencil,
    target: f64,
    count: usize,
    opts: &EigenOptions,
    thetas: &[f64],
    vecs: Vec<Vec<Complex64>>,
    outer: usize,
) -> SpectrumWindow {
    let h3 = pencil.grid().cell_volume();
    let radius = (thetas[count - 1] - target).abs();
    let mut pairs: Vec<EigenPair> = thetas
        .iter()
        .zip(vecs)
        .take(count)
        .map(|(&lambda, phi)| {
            let scale = 1.0 / h3.sqrt();
            let mut psi = pencil.from_phi(phi.into_iter().map(|z| z * scale).collect());
            fix_gauge(&mut psi);
            let residual = pencil.constraint_residual(lambda, &psi);
            EigenPair {
                lambda,
                psi,
                residual,
                gap: None,
            }
        })
        .collect();
    pairs.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let lambdas: Vec<f64> = pairs.iter().map(|p| p.lambda).collect();
    let clusters = build_clusters(&lambdas, target, radius, opts.cluster_tol);
    for c in &clusters {
        for i in c.range() {
            pairs[i].gap = Some(c.gap());
        }
    }
    SpectrumWindow {
        target,
        count,
        pairs,
        radius,
        clusters,
        outer_iterations: outer,
    }
}

/// Full dense decomposition of the symmetrized pencil.
#[derive(Clone, Debug)]
pub struct DenseSpectrum {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Eigenspinors normalized in `(·,·)_u`, aligned with `values`.
    pub vectors: Vec<SpinorField>,
}

impl DenseSpectrum {
    /// Indices of eigenvalues within `tol (1 + |λ|)` of `lambda`.
    pub fn cluster_indices(&self, lambda: f64, tol: f64) -> Vec<usize> {
        (0..self.values.len())
            .filter(|&i| (self.values[i] - lambda).abs() <= tol * (1.0 + lambda.abs()))
            .collect()
    }

    /// The `count` eigenvalues nearest `target`, sorted ascending.
    pub fn nearest(&self, target: f64, count: usize) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()));
        v.truncate(count);
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }
}

/// Assemble `C` column by column and diagonalize it (`N <= 6`).
pub fn dense_oracle(pencil: &Pencil) -> Result<DenseSpectrum> {
    let n = pencil.grid().n();
    if n > DENSE_MAX_N {
        return Err(Error::GridTooLarge { n, max: DENSE_MAX_N });
    }
    let dim = pencil.dim();
    let mut m = DMatrix::<Complex64>::zeros(dim, dim);
    let mut e = vec![ZERO; dim];
    let mut col = vec![ZERO; dim];
    for j in 0..dim {
        e[j] = Complex64::new(1.0, 0.0);
        pencil.apply_c(&e, &mut col);
        for i in 0..dim {
            m[(i, j)] = col[i];
        }
        e[j] = ZERO;
    }
    let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let scale = 1.0 / pencil.grid().cell_volume().sqrt();
    let values = order.iter().map(|&c| eig.eigenvalues[c]).collect();
    let vectors = order
        .iter()
        .map(|&c| {
            let phi: Vec<Complex64> = (0..dim).map(|i| eig.eigenvectors[(i, c)] * scale).collect();
            pencil.from_phi(phi)
        })
        .collect();
    Ok(DenseSpectrum { values, vectors })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Simplicity {
    QuaternionicSimple,
    Multiple,
    Indeterminate,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimplicityReport {
    pub class: Simplicity,
    /// Complex dimension of the cluster.
    pub multiplicity: usize,
    pub center: f64,
    pub width: f64,
    pub gap: f64,
}

/// Classify the cluster nearest `lambda`: complex dimension two with exterior
/// gap at least `gap_tol` is quaternionic-simple.
pub fn simplicity_gap(window: &SpectrumWindow, lambda: f64, gap_tol: f64) -> Result<SimplicityReport> {
    let c = window.cluster_near(lambda).ok_or(Error::WindowTooNarrow { lambda })?;
    if !c.complete {
        return Err(Error::WindowTooNarrow { lambda });
    }
    let class = match c.len {
        2 if c.gap() >= gap_tol => Simplicity::QuaternionicSimple,
        n if n > 2 => Simplicity::Multiple,
        _ => Simplicity::Indeterminate,
    };
    Ok(SimplicityReport {
        class,
        multiplicity: c.len,
        center: c.center,
        width: c.width,
        gap: c.gap(),
    })
}

/// Eigenvalue branches of one cluster under `u + ε v`.
#[derive(Clone, Debug, PartialEq)]
pub struct SplittingReport {
    pub eps: Vec<f64>,
    /// Sorted cluster eigenvalues for each `ε`.
    pub branches: Vec<Vec<f64>>,
    /// `max - min` of each branch set.
    pub separation: Vec<f64>,
    pub strictly_increasing: bool,
}

/// Track the cluster of `lambda` at `u` along `u + ε v` by continuation in `ε`.
pub fn splitting_probe(
    u: &ScalarField,
    spin: SpinStructure,
    exps: &ExponentTable,
    lambda: f64,
    v: &ScalarField,
    eps_list: &[f64],
    opts: &EigenOptions,
) -> Result<SplittingReport> {
    let base = Pencil::new(u, spin, exps)?;
    let mult = cluster_multiplicity(&base, lambda, opts)?;
    let mut branches = Vec::new();
    let mut separation = Vec::new();
    let mut center = lambda;
    for &eps in eps_list {
        let mut w = u.clone();
        w.axpy(eps, v);
        let pencil = Pencil::new(&w, spin, exps)?;
        let win = solve_window(&pencil, center, mult, opts)?;
        let vals = win.eigenvalues();
        center = vals.iter().sum::<f64>() / vals.len() as f64;
        separation.push(vals[vals.len() - 1] - vals[0]);
        branches.push(vals);
    }
    let strictly_increasing = separation.windows(2).all(|s| s[1] > s[0]);
    Ok(SplittingReport {
        eps: eps_list.to_vec(),
        branches,
        separation,
        strictly_increasing,
    })
}

/// Complex dimension of the eigenvalue cluster at `lambda`, growing the
/// window until the cluster is complete.
pub fn cluster_multiplicity(pencil: &Pencil, lambda: f64, opts: &EigenOptions) -> Result<usize> {
    let mut count = 4;
    loop {
        let win = solve_window(pencil, lambda, count, opts)?;
        let c = win.cluster_near(lambda).ok_or(Error::WindowTooNarrow { lambda })?;
        if c.complete {
            return Ok(c.len);
        }
        if 2 * count + opts.extra > pencil.dim() / 2 {
            return Err(Error::WindowTooNarrow { lambda });
        }
        count *= 2;
    }
}

/// Sup over grid points of the spread of `|ψ(x)|` across the given cluster
/// members and `samples` random unit combinations of them.
pub fn rigidity_probe(pencil: &Pencil, members: &[SpinorField], samples: usize, seed: u64) -> f64 {
    let orth = orthonormal_weighted(pencil, members);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fields: Vec<ScalarField> = orth.iter().map(|m| m.pointwise_norm_sq()).collect();
    for _ in 0..samples {
        let coef: Vec<Complex64> = (0..orth.len())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let norm = coef.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let mut comb = SpinorField::zeros(pencil.grid(), pencil.spin());
        for (c, m) in coef.iter().zip(&orth) {
            comb.axpy(c / norm, m);
        }
        fields.push(comb.pointwise_norm_sq());
    }
    let size = pencil.grid().size();
    (0..size)
        .map(|p| {
            let (lo, hi) = fields.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| {
                let v = f.values()[p].sqrt();
                (lo.min(v), hi.max(v))
            });
            hi - lo
        })
        .fold(0.0, f64::max)
}

/// Orthonormal basis (in `(·,·)_u`, complex Gram-Schmidt) of the span.
pub fn orthonormal_weighted(pencil: &Pencil, fields: &[SpinorField]) -> Vec<SpinorField> {
    let mut out: Vec<SpinorField> = Vec::new();
    for f in fields {
        let mut v = f.clone();
        let n0 = pencil.norm(&v);
        for _ in 0..2 {
            for q in &out {
                let c = pencil.inner(q, &v);
                v.axpy(-c, q);
            }
        }
        let n1 = pencil.norm(&v);
        if n1 > 1e-8 * n0 {
            v.scale_mut(Complex64::new(1.0 / n1, 0.0));
            out.push(v);
        }
    }
    out
}

/// Principal angles (radians, ascending) between two subspaces of equal
/// dimension, measured in `(·,·)_u`.
pub fn principal_angles(pencil: &Pencil, a: &[SpinorField], b: &[SpinorField]) -> Vec<f64> {
    let qa = orthonormal_weighted(pencil, a);
    let qb = orthonormal_weighted(pencil, b);
    let mut m = DMatrix::<Complex64>::zeros(qa.len(), qb.len());
    for i in 0..qa.len() {
        for j in 0..qb.len() {
            m[(i, j)] = pencil.inner(&qa[i], &qb[j]);
        }
    }
    let sv = m.singular_values();
    let mut angles: Vec<f64> = sv.iter().map(|s| s.min(1.0).acos()).collect();
    angles.sort_by(|x, y| x.total_cmp(y));
    angles
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clusters_and_gaps() {
        let l = [-1.0, 0.5, 0.5 + 1e-9, 0.9, 0.9, 0.9];
        let c = build_clusters(&l, 0.2, 1.3, 1e-6);
        assert_eq!(c.len(), 3);
        assert_eq!((c[1].start, c[1].len), (1, 2));
        assert!((c[1].gap_below - 1.5).abs() < 1e-12);
        assert!((c[1].gap_above - 0.4).abs() < 1e-8);
        assert!(c.iter().all(|c| c.complete));
        // -1.0 sits exactly on the lower edge of a radius-1.2 window
        assert!(!build_clusters(&l, 0.2, 1.2, 1e-6)[0].complete);
        let c = build_clusters(&l, 0.2, 0.7, 1e-6);
        assert!(!c[2].complete && !c[0].complete);
    }

    #[test]
    fn dense_oracle_rejects_large_grids() {
        let g = TorusGrid::with_points(8).unwrap();
        let p = Pencil::new(&ScalarField::constant(&g, 1.0), SpinStructure::default(), &ExponentTable::three()).unwrap();
        assert!(matches!(dense_oracle(&p), Err(Error::GridTooLarge { n: 8, max: 6 })));
    }

    #[test]
    fn pencil_rejects_nonpositive_u() {
        let g = TorusGrid::with_points(4).unwrap();
        let u = ScalarField::from_fn(&g, |x| x[0].cos());
        assert!(matches!(
            Pencil::new(&u, SpinStructure::default(), &ExponentTable::three()),
            Err(Error::NonPositiveConformalFactor { .. })
        ));
    }
}
