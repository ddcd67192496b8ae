//! Flat Dirac operator `D = -i Σ σ_a ∂_a` on the spin-shifted Fourier lattice
//! and the quaternionic structure `J`.

use num_complex::Complex64;

use crate::torus::{Fft3, SpinStructure, SpinorField, TorusGrid};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Clifford multiplication by the coordinate frame (Pauli matrices).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CliffordFrame {
    pub sigma: [[[Complex64; 2]; 2]; 3],
}

impl CliffordFrame {
    pub fn pauli() -> Self {
        let o = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        Self {
            sigma: [
                [[ZERO, o], [o, ZERO]],
                [[ZERO, -i], [i, ZERO]],
                [[o, ZERO], [ZERO, -o]],
            ],
        }
    }

    /// Largest entry of `σ_a σ_b + σ_b σ_a - 2 δ_ab` over all pairs.
    pub fn anticommutator_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                let (s, t) = (&self.sigma[a], &self.sigma[b]);
                for r in 0..2 {
                    for c in 0..2 {
                        let mut v = ZERO;
                        for q in 0..2 {
                            v += s[r][q] * t[q][c] + t[r][q] * s[q][c];
                        }
                        if a == b && r == c {
                            v -= 2.0;
                        }
                        worst = worst.max(v.norm());
                    }
                }
            }
        }
        worst
    }

    /// `σ·κ`
    pub fn symbol(&self, kappa: [f64; 3]) -> [[Complex64; 2]; 2] {
        let mut m = [[ZERO; 2]; 2];
        for a in 0..3 {
            for r in 0..2 {
                for c in 0..2 {
                    m[r][c] += self.sigma[a][r][c] * kappa[a];
                }
            }
        }
        m
    }
}

impl Default for CliffordFrame {
    fn default() -> Self {
        Self::pauli()
    }
}

/// Matrix-free Dirac operator with cached momenta and FFT plans.
///
/// Works on raw interleaved spinor arrays (`2p + c`) so Krylov solvers can
/// call it without allocating fields.
#[derive(Clone, Debug)]
pub struct DiracOperator {
    grid: TorusGrid,
    spin: SpinStructure,
    fft: Fft3,
    kappa: Vec<[f64; 3]>,
}

impl DiracOperator {
    pub fn new(grid: &TorusGrid, spin: SpinStructure) -> Self {
        let kappa = (0..grid.size()).map(|p| spin.momentum(grid, grid.unravel(p))).collect();
        Self {
            grid: *grid,
            spin,
            fft: Fft3::new(grid),
            kappa,
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn spin(&self) -> SpinStructure {
        self.spin
    }

    /// Momentum of the Fourier mode stored at grid index `p`.
    pub fn momentum(&self, p: usize) -> [f64; 3] {
        self.kappa[p]
    }

    /// Smallest nonzero `|κ|` on the lattice (zero if none is nonzero).
    pub fn min_momentum(&self) -> f64 {
        self.kappa
            .iter()
            .map(|k| (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt())
            .filter(|&m| m > 0.0)
            .fold(f64::INFINITY, f64::min)
    }

    fn split(&self, x: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let n = self.grid.size();
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for p in 0..n {
            a.push(x[2 * p]);
            b.push(x[2 * p + 1]);
        }
        self.fft.forward(&mut a);
        self.fft.forward(&mut b);
        (a, b)
    }

    fn merge(&self, mut a: Vec<Complex64>, mut b: Vec<Complex64>, out: &mut [Complex64]) {
        self.fft.inverse(&mut a);
        self.fft.inverse(&mut b);
        for p in 0..self.grid.size() {
            out[2 * p] = a[p];
            out[2 * p + 1] = b[p];
        }
    }

    /// `out = D x` on raw arrays.
    pub fn apply_raw(&self, x: &[Complex64], out: &mut [Complex64]) {
        let (mut a, mut b) = self.split(x);
        for p in 0..self.grid.size() {
            let [k1, k2, k3] = self.kappa[p];
            let (s, t) = (a[p], b[p]);
            a[p] = s * k3 + t * Complex64::new(k1, -k2);
            b[p] = s * Complex64::new(k1, k2) - t * k3;
        }
        self.merge(a, b, out);
    }

    /// `out = f(D) x` for a real function of the symbol eigenvalues `±|κ|`.
    pub fn apply_function_raw(&self, x: &[Complex64], out: &mut [Complex64], f: impl Fn(f64) -> f64) {
        let (mut a, mut b) = self.split(x);
        for p in 0..self.grid.size() {
            let [k1, k2, k3] = self.kappa[p];
            let r = (k1 * k1 + k2 * k2 + k3 * k3).sqrt();
            let (s, t) = (a[p], b[p]);
            if r == 0.0 {
                let f0 = f(0.0);
                a[p] = s * f0;
                b[p] = t * f0;
                continue;
            }
            let (fp, fm) = (f(r), f(-r));
            // f(σ·κ) = (fp + fm)/2 + (fp - fm)/2 σ·κ̂
            let avg = 0.5 * (fp + fm);
            let dif = 0.5 * (fp - fm) / r;
            let sa = s * k3 + t * Complex64::new(k1, -k2);
            let sb = s * Complex64::new(k1, k2) - t * k3;
            a[p] = s * avg + sa * dif;
            b[p] = t * avg + sb * dif;
        }
        self.merge(a, b, out);
    }

    pub fn apply(&self, psi: &SpinorField) -> SpinorField {
        assert_eq!(psi.grid(), &self.grid);
        assert_eq!(psi.spin(), self.spin);
        let mut out = SpinorField::zeros(&self.grid, self.spin);
        self.apply_raw(psi.values(), out.values_mut());
        out
    }
}

pub fn apply_dirac(psi: &SpinorField) -> SpinorField {
    DiracOperator::new(psi.grid(), psi.spin()).apply(psi)
}

/// Antilinear `J ψ = ε conj(ψ)` with `ε = iσ_2`, written in the trivialized
/// gauge: `(Jψ)~ = e^{-2iθ(x)} ε conj(ψ~)`, `θ = (2π/L) δ·x`.
pub fn quaternionic_j(psi: &SpinorField) -> SpinorField {
    let mut out = psi.clone();
    quaternionic_j_raw(psi.grid(), psi.spin(), psi.values(), out.values_mut());
    out
}

pub fn quaternionic_j_raw(grid: &TorusGrid, spin: SpinStructure, x: &[Complex64], out: &mut [Complex64]) {
    let d = spin.shift();
    let b = grid.base_wavenumber();
    let trivial = d == [0.0; 3];
    for p in 0..grid.size() {
        let (s, t) = (x[2 * p], x[2 * p + 1]);
        let (mut a, mut c) = (t.conj(), -s.conj());
        if !trivial {
            let pt = grid.point(p);
            let ph = Complex64::from_polar(1.0, -2.0 * b * (d[0] * pt[0] + d[1] * pt[1] + d[2] * pt[2]));
            a *= ph;
            c *= ph;
        }
        out[2 * p] = a;
        out[2 * p + 1] = c;
    }
}

/// Exact flat eigenvalues `±|κ|` with complex multiplicities over the modes
/// representable on the grid, restricted to `[lo, hi]` and sorted.
///
/// Nyquist modes on unshifted axes carry no resolved momentum and are
/// excluded; the discrete operator maps them to zero.
pub fn flat_spectrum_oracle(grid: &TorusGrid, spin: SpinStructure, window: (f64, f64)) -> Vec<(f64, usize)> {
    let op = DiracOperator::new(grid, spin);
    let shift = spin.shift();
    let nyq = -(grid.n() as i64) / 2;
    let mut vals = Vec::new();
    for p in 0..grid.size() {
        let j = grid.unravel(p);
        if (0..3).any(|a| shift[a] == 0.0 && grid.mode(j[a]) == nyq) {
            continue;
        }
        let [k1, k2, k3] = op.momentum(p);
        let r = (k1 * k1 + k2 * k2 + k3 * k3).sqrt();
        vals.push(r);
        vals.push(-r);
    }
    vals.retain(|&v| v >= window.0 && v <= window.1);
    vals.sort_by(|a, b| a.total_cmp(b));
    let mut out: Vec<(f64, usize)> = Vec::new();
    for v in vals {
        match out.last_mut() {
            Some((w, m)) if (v - *w).abs() <= 1e-12 * (1.0 + v.abs()) => *m += 1,
            _ => out.push((v, 1)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pauli_frame_is_clifford() {
        let f = CliffordFrame::pauli();
        assert!(f.anticommutator_defect() < 1e-15);
        for s in f.sigma {
            assert!((s[0][0] + s[1][1]).norm() < 1e-15);
            assert!((s[0][1] - s[1][0].conj()).norm() < 1e-15);
        }
    }

    #[test]
    fn lowest_mode_eigenvalue() {
        let g = TorusGrid::with_points(8).unwrap();
        let spin = SpinStructure::default();
        // +eigenvector of σ·(1,1,1)/√3.
        let s3 = 3f64.sqrt();
        let chi0 = Complex64::new(1.0 + 1.0 / s3, 0.0);
        let chi1 = Complex64::new(1.0, 1.0) / s3;
        let psi = SpinorField::plane_wave(&g, spin, [0, 0, 0], [chi0, chi1]);
        let dpsi = apply_dirac(&psi);
        let expect = psi.scale(Complex64::new(s3 / 2.0, 0.0));
        assert!(dpsi.sub(&expect).norm_l2() < 1e-12 * psi.norm_l2());
    }

    #[test]
    fn harmonic_constants_for_periodic_structure() {
        let g = TorusGrid::with_points(6).unwrap();
        let psi = SpinorField::from_fn(&g, SpinStructure::periodic(), |_| {
            [Complex64::new(0.3, 0.1), Complex64::new(-1.0, 0.0)]
        });
        assert!(apply_dirac(&psi).norm_l2() < 1e-13);
    }

    #[test]
    fn hermitian_and_commutes_with_j() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for spin in [SpinStructure::default(), SpinStructure::periodic(), SpinStructure::new([0.5, 0.0, 0.5]).unwrap()] {
            let g = TorusGrid::with_points(6).unwrap();
            let psi = SpinorField::random_band_limited(&g, spin, 3, &mut rng);
            let phi = SpinorField::random_band_limited(&g, spin, 3, &mut rng);
            let lhs = apply_dirac(&psi).inner(&phi);
            let rhs = psi.inner(&apply_dirac(&phi));
            assert!((lhs - rhs).norm() < 1e-12);
            let dj = apply_dirac(&quaternionic_j(&psi));
            let jd = quaternionic_j(&apply_dirac(&psi));
            assert!(dj.sub(&jd).norm_l2() < 1e-12);
            let jj = quaternionic_j(&quaternionic_j(&psi));
            assert!(jj.add(&psi).norm_l2() < 1e-15);
            let pw = psi.pointwise_inner(&quaternionic_j(&psi));
            assert!(pw.iter().all(|z| z.norm() < 1e-15));
        }
    }

    #[test]
    fn flat_oracle_multiplicities() {
        let g = TorusGrid::with_points(8).unwrap();
        let s = flat_spectrum_oracle(&g, SpinStructure::default(), (0.0, 1.7));
        assert_eq!(s.len(), 2);
        assert!((s[0].0 - 3f64.sqrt() / 2.0).abs() < 1e-14 && s[0].1 == 8);
        assert!((s[1].0 - 11f64.sqrt() / 2.0).abs() < 1e-14 && s[1].1 == 24);
        let neg = flat_spectrum_oracle(&g, SpinStructure::default(), (-0.9, 0.0));
        assert_eq!(neg, vec![(-(3f64.sqrt()) / 2.0, 8)]);
        let half = flat_spectrum_oracle(&g, SpinStructure::new([0.5, 0.0, 0.0]).unwrap(), (0.0, 0.6));
        assert_eq!(half, vec![(0.5, 2)]);
    }

    #[test]
    fn functional_calculus_matches_dirac() {
        let g = TorusGrid::with_points(6).unwrap();
        let spin = SpinStructure::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let psi = SpinorField::random_band_limited(&g, spin, 3, &mut rng);
        let op = DiracOperator::new(&g, spin);
        let mut a = vec![ZERO; psi.values().len()];
        op.apply_function_raw(psi.values(), &mut a, |l| l);
        let d = op.apply(&psi);
        let err: f64 = a.iter().zip(d.values()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12);
    }
}
