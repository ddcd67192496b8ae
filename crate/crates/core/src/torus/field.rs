use num_complex::Complex64;
use rand::Rng;

use super::{pairwise_sum_by, power, ExponentTable, Fft3, SpinStructure, TorusGrid};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: &TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.size() {
            return Err(Error::InvalidField(format!(
                "expected {} values, got {}",
                grid.size(),
                values.len()
            )));
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!("non-finite value at index {p}")));
        }
        Ok(Self { grid: *grid, values })
    }

    /// Unchecked constructor for internally produced arrays.
    pub(crate) fn from_vec(grid: &TorusGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.size());
        Self { grid: *grid, values }
    }

    pub fn from_fn(grid: &TorusGrid, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..grid.size()).map(|p| f(grid.point(p))).collect();
        Self { grid: *grid, values }
    }

    pub fn constant(grid: &TorusGrid, c: f64) -> Self {
        Self {
            grid: *grid,
            values: vec![c; grid.size()],
        }
    }

    pub fn zeros(grid: &TorusGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Real band-limited field: random complex Fourier data on modes with
    /// `|k_a| <= band`, synthesized and reduced to its real part, then scaled
    /// so the sup norm equals `amplitude`.
    pub fn random_band_limited(grid: &TorusGrid, band: usize, amplitude: f64, rng: &mut impl Rng) -> Self {
        let data = random_spectrum(grid, 1, band, rng);
        let mut values: Vec<f64> = data.iter().map(|z| z.re).collect();
        let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if sup > 0.0 {
            for v in &mut values {
                *v *= amplitude / sup;
            }
        }
        Self { grid: *grid, values }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "fields on different grids");
        Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &Self) {
        assert_eq!(self.grid, x.grid, "fields on different grids");
        for (s, &v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
    }

    pub fn pow(&self, p: f64) -> Self {
        self.map(|v| power(v, p))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        quadrature(self) / self.grid.volume()
    }

    /// `∫ self * other`
    pub fn dot(&self, other: &Self) -> f64 {
        assert_eq!(self.grid, other.grid, "fields on different grids");
        let (a, b) = (&self.values, &other.values);
        self.grid.cell_volume() * pairwise_sum_by(a.len(), &|i| a[i] * b[i])
    }

    /// `(∫ f^2)^{1/2}`
    pub fn l2_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Errors unless every value is strictly positive.
    pub fn ensure_positive(&self) -> Result<()> {
        let min = self.min();
        if min > 0.0 {
            Ok(())
        } else {
            Err(Error::NonPositiveConformalFactor { min })
        }
    }
}

/// `h^3 * sum f`, pairwise-reduced.
pub fn quadrature(f: &ScalarField) -> f64 {
    let v = f.values();
    f.grid().cell_volume() * pairwise_sum_by(v.len(), &|i| v[i])
}

/// Spinor field in the trivialized periodic gauge; value `2p + c` is
/// component `c` at grid point `p`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinorField {
    grid: TorusGrid,
    spin: SpinStructure,
    values: Vec<Complex64>,
}

impl SpinorField {
    pub fn new(grid: &TorusGrid, spin: SpinStructure, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != 2 * grid.size() {
            return Err(Error::InvalidField(format!(
                "expected {} spinor values, got {}",
                2 * grid.size(),
                values.len()
            )));
        }
        if let Some(p) = values.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::InvalidField(format!("non-finite spinor value at index {p}")));
        }
        Ok(Self {
            grid: *grid,
            spin,
            values,
        })
    }

    pub(crate) fn from_vec(grid: &TorusGrid, spin: SpinStructure, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), 2 * grid.size());
        Self {
            grid: *grid,
            spin,
            values,
        }
    }

    pub fn zeros(grid: &TorusGrid, spin: SpinStructure) -> Self {
        Self::from_vec(grid, spin, vec![Complex64::new(0.0, 0.0); 2 * grid.size()])
    }

    /// Build from stored (trivialized) values.
    pub fn from_fn(grid: &TorusGrid, spin: SpinStructure, f: impl Fn([f64; 3]) -> [Complex64; 2]) -> Self {
        let mut values = Vec::with_capacity(2 * grid.size());
        for p in 0..grid.size() {
            values.extend_from_slice(&f(grid.point(p)));
        }
        Self::from_vec(grid, spin, values)
    }

    /// The single Fourier mode `chi * exp(i (2π/L)(k + δ)·x)`, stored as
    /// `chi * exp(i (2π/L) k·x)`.
    pub fn plane_wave(grid: &TorusGrid, spin: SpinStructure, k: [i64; 3], chi: [Complex64; 2]) -> Self {
        let b = grid.base_wavenumber();
        Self::from_fn(grid, spin, |x| {
            let phase = Complex64::from_polar(1.0, b * (k[0] as f64 * x[0] + k[1] as f64 * x[1] + k[2] as f64 * x[2]));
            [chi[0] * phase, chi[1] * phase]
        })
    }

    /// Random spinor with independent complex Fourier data on `|k_a| <= band`,
    /// normalized to unit unweighted `L^2` norm.
    pub fn random_band_limited(grid: &TorusGrid, spin: SpinStructure, band: usize, rng: &mut impl Rng) -> Self {
        let [a, b] = {
            let d = random_spectrum(grid, 2, band, rng);
            let (a, b) = d.split_at(grid.size());
            [a.to_vec(), b.to_vec()]
        };
        let mut psi = Self::from_components(grid, spin, [a, b]);
        let n = psi.norm_l2();
        psi.scale_mut(Complex64::new(1.0 / n, 0.0));
        psi
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn spin(&self) -> SpinStructure {
        self.spin
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn same_space(&self, other: &Self) -> bool {
        self.grid == other.grid && self.spin == other.spin
    }

    /// Value at point `p` in the physical (untrivialized) gauge.
    pub fn physical_value(&self, p: usize) -> [Complex64; 2] {
        let x = self.grid.point(p);
        let d = self.spin.shift();
        let theta = self.grid.base_wavenumber() * (d[0] * x[0] + d[1] * x[1] + d[2] * x[2]);
        let ph = Complex64::from_polar(1.0, theta);
        [self.values[2 * p] * ph, self.values[2 * p + 1] * ph]
    }

    pub fn split_components(&self) -> [Vec<Complex64>; 2] {
        let n = self.grid.size();
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for p in 0..n {
            a.push(self.values[2 * p]);
            b.push(self.values[2 * p + 1]);
        }
        [a, b]
    }

    pub fn from_components(grid: &TorusGrid, spin: SpinStructure, comps: [Vec<Complex64>; 2]) -> Self {
        let [a, b] = comps;
        let mut values = Vec::with_capacity(2 * grid.size());
        for (x, y) in a.into_iter().zip(b) {
            values.push(x);
            values.push(y);
        }
        Self::from_vec(grid, spin, values)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        out.scale_mut(c);
        out
    }

    pub fn scale_mut(&mut self, c: Complex64) {
        for z in &mut self.values {
            *z *= c;
        }
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: Complex64, x: &Self) {
        assert!(self.same_space(x), "spinors on different spaces");
        for (s, &v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(Complex64::new(1.0, 0.0), other);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(Complex64::new(-1.0, 0.0), other);
        out
    }

    /// Pointwise product with a real scalar field.
    pub fn mul_scalar(&self, f: &ScalarField) -> Self {
        assert_eq!(&self.grid, f.grid(), "fields on different grids");
        let fv = f.values();
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &z)| z * fv[i / 2])
            .collect();
        Self::from_vec(&self.grid, self.spin, values)
    }

    /// `∫ w <self, other>` with the Hermitian product antilinear in `self`.
    pub fn inner_weighted(&self, weight: &ScalarField, other: &Self) -> Complex64 {
        assert!(self.same_space(other), "spinors on different spaces");
        assert_eq!(&self.grid, weight.grid(), "weight on a different grid");
        let (a, b, w) = (&self.values, &other.values, weight.values());
        let term = |i: usize| a[i].conj() * b[i] * w[i / 2];
        let re = pairwise_sum_by(a.len(), &|i| term(i).re);
        let im = pairwise_sum_by(a.len(), &|i| term(i).im);
        Complex64::new(re, im) * self.grid.cell_volume()
    }

    /// Unweighted `∫ <self, other>`, antilinear in `self`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        assert!(self.same_space(other), "spinors on different spaces");
        let (a, b) = (&self.values, &other.values);
        let re = pairwise_sum_by(a.len(), &|i| (a[i].conj() * b[i]).re);
        let im = pairwise_sum_by(a.len(), &|i| (a[i].conj() * b[i]).im);
        Complex64::new(re, im) * self.grid.cell_volume()
    }

    pub fn norm_l2(&self) -> f64 {
        let a = &self.values;
        (self.grid.cell_volume() * pairwise_sum_by(a.len(), &|i| a[i].norm_sqr())).sqrt()
    }

    /// `|ψ(x)|^2` as a scalar field (gauge independent).
    pub fn pointwise_norm_sq(&self) -> ScalarField {
        let values = (0..self.grid.size())
            .map(|p| self.values[2 * p].norm_sqr() + self.values[2 * p + 1].norm_sqr())
            .collect();
        ScalarField::from_vec(&self.grid, values)
    }

    /// Pointwise Hermitian product `<self(x), other(x)>`, antilinear in `self`.
    pub fn pointwise_inner(&self, other: &Self) -> Vec<Complex64> {
        assert!(self.same_space(other), "spinors on different spaces");
        (0..self.grid.size())
            .map(|p| {
                self.values[2 * p].conj() * other.values[2 * p]
                    + self.values[2 * p + 1].conj() * other.values[2 * p + 1]
            })
            .collect()
    }
}

/// `(ψ, φ)_u = Re ∫ u^{p1} <ψ, φ>`.
pub fn weighted_spinor_inner(
    u: &ScalarField,
    psi: &SpinorField,
    phi: &SpinorField,
    exps: &ExponentTable,
) -> Result<f64> {
    u.ensure_positive()?;
    if !psi.same_space(phi) || psi.grid() != u.grid() {
        return Err(Error::GridMismatch);
    }
    Ok(psi.inner_weighted(&u.pow(exps.p1), phi).re)
}

/// Random complex Fourier data on `|k_a| <= band`, synthesized to physical
/// space; `components` blocks of `N^3` values each.
fn random_spectrum(grid: &TorusGrid, components: usize, band: usize, rng: &mut impl Rng) -> Vec<Complex64> {
    let size = grid.size();
    let band = band.min(grid.n() / 2 - 1) as i64;
    let fft = Fft3::new(grid);
    let mut out = vec![Complex64::new(0.0, 0.0); components * size];
    for c in 0..components {
        let block = &mut out[c * size..(c + 1) * size];
        for k0 in -band..=band {
            for k1 in -band..=band {
                for k2 in -band..=band {
                    let p = grid.index(grid.mode_index(k0), grid.mode_index(k1), grid.mode_index(k2));
                    block[p] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                }
            }
        }
        fft.inverse(block);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::fourier_transform;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid(n: usize) -> TorusGrid {
        TorusGrid::with_points(n).unwrap()
    }

    #[test]
    fn quadrature_examples() {
        let g = grid(8);
        let vol = (2.0 * PI).powi(3);
        assert!((quadrature(&ScalarField::constant(&g, 1.0)) - vol).abs() < 1e-11);
        assert!((vol - 248.05021).abs() < 1e-5);
        assert!(quadrature(&ScalarField::from_fn(&g, |x| x[0].cos())).abs() < 1e-12);
        let c2 = ScalarField::from_fn(&g, |x| x[0].cos().powi(2));
        assert!((quadrature(&c2) - vol / 2.0).abs() < 1e-11);
    }

    #[test]
    fn weighted_inner_examples() {
        let g = grid(6);
        let e = ExponentTable::three();
        let spin = SpinStructure::periodic();
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let psi = SpinorField::from_fn(&g, spin, |_| [one, zero]);
        let vol = (2.0 * PI).powi(3);
        let w1 = weighted_spinor_inner(&ScalarField::constant(&g, 1.0), &psi, &psi, &e).unwrap();
        assert!((w1 - vol).abs() < 1e-10);
        let w2 = weighted_spinor_inner(&ScalarField::constant(&g, 2.0), &psi, &psi, &e).unwrap();
        assert!((w2 - 4.0 * vol).abs() < 1e-10);
        let phi = SpinorField::plane_wave(&g, spin, [1, 0, 0], [one, zero]);
        let w3 = weighted_spinor_inner(&ScalarField::constant(&g, 1.0), &psi, &phi, &e).unwrap();
        assert!(w3.abs() < 1e-12);
        assert!(matches!(
            weighted_spinor_inner(&ScalarField::constant(&g, 0.0), &psi, &psi, &e),
            Err(Error::NonPositiveConformalFactor { .. })
        ));
    }

    #[test]
    fn constructor_validation() {
        let g = grid(4);
        assert!(ScalarField::new(&g, vec![0.0; 10]).is_err());
        let mut v = vec![0.0; 64];
        v[3] = f64::NAN;
        assert!(ScalarField::new(&g, v).is_err());
        assert!(SpinorField::new(&g, SpinStructure::default(), vec![Complex64::new(0.0, 0.0); 64]).is_err());
    }

    #[test]
    fn parseval_and_determinism() {
        let g = grid(12);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = ScalarField::random_band_limited(&g, 3, 1.0, &mut rng);
        let lhs = quadrature(&f.mul(&f));
        let rhs = g.volume() * fourier_transform(&f).energy();
        assert!((lhs - rhs).abs() <= 1e-10 * lhs);
        assert_eq!(quadrature(&f).to_bits(), quadrature(&f).to_bits());
    }

    #[test]
    fn physical_gauge_phase() {
        let g = grid(4);
        let spin = SpinStructure::default();
        let one = Complex64::new(1.0, 0.0);
        let psi = SpinorField::from_fn(&g, spin, |_| [one, one]);
        let p = g.index(1, 0, 0);
        let v = psi.physical_value(p);
        let expect = Complex64::from_polar(1.0, 0.5 * g.spacing());
        assert!((v[0] - expect).norm() < 1e-15);
    }
}
