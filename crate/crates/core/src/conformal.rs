//! Flat and conformal Laplacians, conformal scalar curvature, and the scalar
//! energy `E(u) = ∫ u L u`.

use num_complex::Complex64;

use crate::error::Result;
use crate::torus::{quadrature, ExponentTable, Fft3, ScalarField, TorusGrid};

/// Apply a Fourier multiplier indexed by array position and return the real part.
pub fn apply_multiplier(f: &ScalarField, symbol: impl Fn(&TorusGrid, [usize; 3]) -> Complex64) -> ScalarField {
    let grid = *f.grid();
    let fft = Fft3::new(&grid);
    let mut data: Vec<Complex64> = f.values().iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft.forward(&mut data);
    for (p, z) in data.iter_mut().enumerate() {
        *z *= symbol(&grid, grid.unravel(p));
    }
    fft.inverse(&mut data);
    ScalarField::from_vec(&grid, data.into_iter().map(|z| z.re).collect())
}

/// Spectral Laplacian, multiplier `-|k|^2`.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    apply_multiplier(f, |g, j| {
        let k2: f64 = j.iter().map(|&ja| g.even_wavenumber(ja).powi(2)).sum();
        Complex64::new(-k2, 0.0)
    })
}

/// `(1 - c Δ)^{-1} f` for `c >= 0`.
pub fn screened_inverse(f: &ScalarField, c: f64) -> ScalarField {
    apply_multiplier(f, |g, j| {
        let k2: f64 = j.iter().map(|&ja| g.even_wavenumber(ja).powi(2)).sum();
        Complex64::new(1.0 / (1.0 + c * k2), 0.0)
    })
}

/// `‖f‖_{H^1}^2 = ∫ f^2 + ∫ |∇f|^2`, the gradient part taken as `-∫ f Δf`.
pub fn h1_norm_sq(f: &ScalarField) -> f64 {
    f.dot(f) - f.dot(&laplacian(f))
}

/// Spectral gradient (Nyquist mode dropped).
pub fn gradient(f: &ScalarField) -> [ScalarField; 3] {
    std::array::from_fn(|a| apply_multiplier(f, move |g, j| Complex64::new(0.0, g.odd_wavenumber(j[a]))))
}

/// `∇f·∇g` pointwise.
pub fn grad_dot(f: &ScalarField, g: &ScalarField) -> ScalarField {
    let gf = gradient(f);
    let gg = gradient(g);
    let mut out = gf[0].mul(&gg[0]);
    out = out.add(&gf[1].mul(&gg[1]));
    out.add(&gf[2].mul(&gg[2]))
}

/// Scalar curvature of the flat background (identically zero).
pub fn background_scal(grid: &TorusGrid) -> ScalarField {
    ScalarField::zeros(grid)
}

/// Yamabe operator `L u = -c_m Δu + scal u` of the flat metric.
pub fn conformal_laplacian(u: &ScalarField, exps: &ExponentTable) -> ScalarField {
    let mut out = laplacian(u).scale(-exps.c_m);
    out.axpy(1.0, &background_scal(u.grid()).mul(u));
    out
}

/// Scalar curvature of `u^{p4} g`: `u^{-p3} L u`.
pub fn scal_conformal(u: &ScalarField, exps: &ExponentTable) -> Result<ScalarField> {
    u.ensure_positive()?;
    Ok(conformal_laplacian(u, exps).mul(&u.pow(-exps.p3)))
}

/// Laplace-Beltrami operator of `e^{2f} g` applied to `phi`, flat base, `m = 3`:
/// `e^{-2f}(Δφ + (m-2)∇f·∇φ)`.
pub fn laplace_beltrami_conformal(f: &ScalarField, phi: &ScalarField) -> ScalarField {
    let m = crate::torus::DIM as f64;
    let mut inner = laplacian(phi);
    inner.axpy(m - 2.0, &grad_dot(f, phi));
    inner.mul(&f.map(|v| (-2.0 * v).exp()))
}

/// Scalar curvature of `e^{2f} g`, flat base:
/// `e^{-2f}(-2(m-1)Δf - (m-1)(m-2)|∇f|^2)`.
pub fn scal_of_conformal_metric(f: &ScalarField) -> ScalarField {
    let m = crate::torus::DIM as f64;
    let mut inner = laplacian(f).scale(-2.0 * (m - 1.0));
    inner.axpy(-(m - 1.0) * (m - 2.0), &grad_dot(f, f));
    inner.mul(&f.map(|v| (-2.0 * v).exp()))
}

/// Yamabe operator of the metric `e^{2f} g` applied to `w`.
pub fn conformal_laplacian_of_metric(f: &ScalarField, w: &ScalarField, exps: &ExponentTable) -> ScalarField {
    let mut out = laplace_beltrami_conformal(f, w).scale(-exps.c_m);
    out.axpy(1.0, &scal_of_conformal_metric(f).mul(w));
    out
}

/// `‖L_g u - e^{(m+2)f/2} L_{e^{2f}g}(e^{-(m-2)f/2} u)‖_2`.
pub fn yamabe_covariance_residual(f: &ScalarField, u: &ScalarField) -> f64 {
    let exps = ExponentTable::three();
    let m = exps.m as f64;
    let lhs = conformal_laplacian(u, &exps);
    let w = u.mul(&f.map(|v| (-(m - 2.0) * v / 2.0).exp()));
    let rhs = conformal_laplacian_of_metric(f, &w, &exps).mul(&f.map(|v| ((m + 2.0) * v / 2.0).exp()));
    lhs.sub(&rhs).l2_norm()
}

/// `E(u) = ∫ u L u`.
pub fn total_energy(u: &ScalarField, exps: &ExponentTable) -> f64 {
    quadrature(&u.mul(&conformal_laplacian(u, exps)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn g16() -> TorusGrid {
        TorusGrid::with_points(16).unwrap()
    }

    fn close(a: &ScalarField, b: &ScalarField, tol: f64) -> bool {
        a.sub(b).sup_norm() <= tol
    }

    #[test]
    fn laplacian_examples() {
        let g = g16();
        let c1 = ScalarField::from_fn(&g, |x| x[0].cos());
        assert!(close(&laplacian(&c1), &c1.scale(-1.0), 1e-12));
        assert!(laplacian(&ScalarField::constant(&g, 3.0)).sup_norm() < 1e-13);
        let c2 = ScalarField::from_fn(&g, |x| (2.0 * x[1]).cos());
        assert!(close(&laplacian(&c2), &c2.scale(-4.0), 1e-12));
    }

    #[test]
    fn conformal_laplacian_examples() {
        let g = g16();
        let e = ExponentTable::three();
        let c2 = ScalarField::from_fn(&g, |x| (2.0 * x[1]).cos());
        assert!(close(&conformal_laplacian(&c2, &e), &c2.scale(32.0), 1e-11));
        assert!(conformal_laplacian(&ScalarField::constant(&g, 2.0), &e).sup_norm() < 1e-12);
        let s = ScalarField::from_fn(&g, |x| x[0].cos() + x[2].cos());
        assert!(close(&conformal_laplacian(&s, &e), &s.scale(8.0), 1e-11));
    }

    #[test]
    fn scal_conformal_examples() {
        let g = g16();
        let e = ExponentTable::three();
        assert!(scal_conformal(&ScalarField::constant(&g, 1.7), &e).unwrap().sup_norm() < 1e-12);
        let u = ScalarField::from_fn(&g, |x| 1.0 + 0.1 * x[0].cos());
        let expect = ScalarField::from_fn(&g, |x| 0.8 * x[0].cos() * (1.0 + 0.1 * x[0].cos()).powi(-5));
        assert!(close(&scal_conformal(&u, &e).unwrap(), &expect, 1e-12));
        assert!(scal_conformal(&ScalarField::constant(&g, -1.0), &e).is_err());
    }

    #[test]
    fn conformal_metric_identities() {
        let g = g16();
        let phi = ScalarField::from_fn(&g, |x| x[1].cos() + 0.5 * (x[0] + x[2]).sin());
        assert!(close(&laplace_beltrami_conformal(&ScalarField::zeros(&g), &phi), &laplacian(&phi), 1e-13));
        let c = 0.3;
        let lb = laplace_beltrami_conformal(&ScalarField::constant(&g, c), &phi);
        assert!(close(&lb, &laplacian(&phi).scale((-2.0 * c).exp()), 1e-12));

        assert!(scal_of_conformal_metric(&ScalarField::zeros(&g)).sup_norm() < 1e-14);
        assert!(scal_of_conformal_metric(&ScalarField::constant(&g, 0.7)).sup_norm() < 1e-13);
        let eps = 1e-4;
        let f = ScalarField::from_fn(&g, |x| eps * x[0].cos());
        let lead = ScalarField::from_fn(&g, |x| 4.0 * eps * x[0].cos());
        assert!(close(&scal_of_conformal_metric(&f), &lead, 20.0 * eps * eps));
    }

    #[test]
    fn energy_examples() {
        let g = g16();
        let e = ExponentTable::three();
        let vol = (2.0 * PI).powi(3);
        assert!(total_energy(&ScalarField::constant(&g, 2.0), &e).abs() < 1e-10);
        let u = ScalarField::from_fn(&g, |x| 1.0 + 0.1 * x[0].cos());
        assert!((total_energy(&u, &e) - 0.04 * vol).abs() < 1e-10);
        assert!((0.04 * vol - 9.92201).abs() < 1e-5);
        let (a, b) = (0.2, -0.15);
        let u = ScalarField::from_fn(&g, |x| 1.0 + a * x[0].cos() + b * x[1].cos());
        assert!((total_energy(&u, &e) - 4.0 * (a * a + b * b) * vol).abs() < 1e-10);
    }

    #[test]
    fn gradient_of_sine() {
        let g = g16();
        let f = ScalarField::from_fn(&g, |x| (3.0 * x[2]).sin());
        let gr = gradient(&f);
        let expect = ScalarField::from_fn(&g, |x| 3.0 * (3.0 * x[2]).cos());
        assert!(close(&gr[2], &expect, 1e-12));
        assert!(gr[0].sup_norm() < 1e-13 && gr[1].sup_norm() < 1e-13);
    }
}
