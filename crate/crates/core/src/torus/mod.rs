//! Grid, field and Fourier foundation on the flat torus `[0, L)^3`.
//!
//! Scalar fields are stored as `N^3` reals in lexicographic `(i, j, k)` order
//! with the third axis fastest. Spinor fields carry two complex components per
//! point (component-major inside each point) and are stored in the trivialized
//! gauge, so every stored array is periodic regardless of the spin structure.

mod fft;
mod field;
pub mod snapshot;
pub mod trig;

pub use fft::{fourier_transform, inverse_fourier_transform, Fft3, SpectralCoefficients, Transformable};
pub use field::{quadrature, weighted_spinor_inner, ScalarField, SpinorField};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometric dimension of the torus.
pub const DIM: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    n: usize,
    length: f64,
}

impl TorusGrid {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 4 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be even and >= 4, got {n}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "side length must be positive, got {length}"
            )));
        }
        Ok(Self { n, length })
    }

    /// Grid with the default side length `2π`.
    pub fn with_points(n: usize) -> Result<Self> {
        Self::new(n, 2.0 * PI)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Quadrature weight `h^3`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(3)
    }

    pub fn volume(&self) -> f64 {
        self.length.powi(3)
    }

    /// Number of grid points `N^3`.
    pub fn size(&self) -> usize {
        self.n * self.n * self.n
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    #[inline]
    pub fn unravel(&self, p: usize) -> [usize; 3] {
        let n = self.n;
        [p / (n * n), (p / n) % n, p % n]
    }

    pub fn point(&self, p: usize) -> [f64; 3] {
        let h = self.spacing();
        let [i, j, k] = self.unravel(p);
        [i as f64 * h, j as f64 * h, k as f64 * h]
    }

    /// Signed Fourier mode for array index `j`, in `[-N/2, N/2)`.
    #[inline]
    pub fn mode(&self, j: usize) -> i64 {
        let n = self.n as i64;
        let j = j as i64;
        if j < n / 2 {
            j
        } else {
            j - n
        }
    }

    /// Array index of a signed mode, wrapped modulo `N`.
    #[inline]
    pub fn mode_index(&self, k: i64) -> usize {
        k.rem_euclid(self.n as i64) as usize
    }

    /// `2π/L`.
    pub fn base_wavenumber(&self) -> f64 {
        2.0 * PI / self.length
    }

    /// Wavenumber used by first-order (odd) derivatives: the Nyquist mode is
    /// dropped so the discrete derivative stays skew-adjoint.
    #[inline]
    pub fn odd_wavenumber(&self, j: usize) -> f64 {
        let k = self.mode(j);
        if k == -(self.n as i64) / 2 {
            0.0
        } else {
            self.base_wavenumber() * k as f64
        }
    }

    /// Wavenumber used by second-order derivatives (Nyquist retained).
    #[inline]
    pub fn even_wavenumber(&self, j: usize) -> f64 {
        self.base_wavenumber() * self.mode(j) as f64
    }
}

/// Conformal exponents for dimension `m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentTable {
    pub m: u32,
    /// `2/(m-2)`: weight exponent of the pencil.
    pub p1: f64,
    /// `(4-m)/(m-2)`
    pub p2: f64,
    /// `(m+2)/(m-2)`
    pub p3: f64,
    /// `4/(m-2)`
    pub p4: f64,
    /// `2m/(m-2)`: volume exponent.
    pub p5: f64,
    /// `m/(m-2)`
    pub p6: f64,
    /// `2(m-1)/(m-2)`
    pub p7: f64,
    /// `4(m-1)/(m-2)`: leading coefficient of the conformal Laplacian.
    pub c_m: f64,
}

impl ExponentTable {
    pub fn new(m: u32) -> Result<Self> {
        if m < 3 {
            return Err(Error::InvalidGrid(format!("dimension must be >= 3, got {m}")));
        }
        let mf = m as f64;
        let d = mf - 2.0;
        Ok(Self {
            m,
            p1: 2.0 / d,
            p2: (4.0 - mf) / d,
            p3: (mf + 2.0) / d,
            p4: 4.0 / d,
            p5: 2.0 * mf / d,
            p6: mf / d,
            p7: 2.0 * (mf - 1.0) / d,
            c_m: 4.0 * (mf - 1.0) / d,
        })
    }

    /// The table for the torus dimension.
    pub fn three() -> Self {
        Self::new(DIM).expect("dimension 3 is valid")
    }
}

impl Default for ExponentTable {
    fn default() -> Self {
        Self::three()
    }
}

/// `x^p`, using repeated multiplication when `p` is an integer.
#[inline]
pub fn power(x: f64, p: f64) -> f64 {
    if p == p.trunc() && p.abs() <= 16.0 {
        x.powi(p as i32)
    } else {
        x.powf(p)
    }
}

/// One of the eight spin structures of `T^3`, selected by a shift in `{0, 1/2}^3`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinStructure {
    shift: [f64; 3],
}

impl SpinStructure {
    pub fn new(shift: [f64; 3]) -> Result<Self> {
        for s in shift {
            if s != 0.0 && s != 0.5 {
                return Err(Error::InvalidField(format!(
                    "spin shift components must be 0 or 1/2, got {s}"
                )));
            }
        }
        Ok(Self { shift })
    }

    /// The periodic (trivial) spin structure.
    pub fn periodic() -> Self {
        Self { shift: [0.0; 3] }
    }

    pub fn shift(&self) -> [f64; 3] {
        self.shift
    }

    /// Momentum `(2π/L)(k + δ)` of the Fourier mode at array index `j`.
    ///
    /// Axes with zero shift drop the Nyquist mode, like [`TorusGrid::odd_wavenumber`].
    pub fn momentum(&self, grid: &TorusGrid, j: [usize; 3]) -> [f64; 3] {
        let mut kappa = [0.0; 3];
        for a in 0..3 {
            kappa[a] = if self.shift[a] == 0.0 {
                grid.odd_wavenumber(j[a])
            } else {
                grid.base_wavenumber() * (grid.mode(j[a]) as f64 + self.shift[a])
            };
        }
        kappa
    }
}

impl Default for SpinStructure {
    fn default() -> Self {
        Self { shift: [0.5; 3] }
    }
}

/// Pairwise (tree) summation; the reduction order depends only on the length.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        let mut s = 0.0;
        for &v in values {
            s += v;
        }
        return s;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Pairwise sum of `f(i)` for `i` in `0..len` without materializing the terms.
pub fn pairwise_sum_by(len: usize, f: &impl Fn(usize) -> f64) -> f64 {
    fn rec(lo: usize, hi: usize, f: &impl Fn(usize) -> f64) -> f64 {
        if hi - lo <= 32 {
            let mut s = 0.0;
            for i in lo..hi {
                s += f(i);
            }
            return s;
        }
        let mid = lo + (hi - lo) / 2;
        rec(lo, mid, f) + rec(mid, hi, f)
    }
    rec(0, len, f)
}
