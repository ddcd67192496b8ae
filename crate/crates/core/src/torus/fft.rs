use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{ScalarField, SpinorField, TorusGrid};

type PlanPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

fn plans(n: usize) -> PlanPair {
    static CACHE: OnceLock<Mutex<(FftPlanner<f64>, HashMap<usize, PlanPair>)>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    let (planner, map) = &mut *guard;
    if let Some(p) = map.get(&n) {
        return p.clone();
    }
    let p = (planner.plan_fft_forward(n), planner.plan_fft_inverse(n));
    map.insert(n, p.clone());
    p
}

/// Three-dimensional complex FFT on an `N^3` block in grid storage order.
///
/// The forward transform is normalized by `1/N^3`, so coefficients are
/// Fourier means and the inverse is a plain synthesis.
#[derive(Clone)]
pub struct Fft3 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("n", &self.n).finish()
    }
}

impl Fft3 {
    pub fn new(grid: &TorusGrid) -> Self {
        let (forward, inverse) = plans(grid.n());
        Self {
            n: grid.n(),
            forward,
            inverse,
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward);
        let scale = 1.0 / (self.n * self.n * self.n) as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
    }

    fn run(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        assert_eq!(data.len(), n * n * n, "FFT block has wrong length");
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        // Third axis is contiguous.
        plan.process_with_scratch(data, &mut scratch);
        let mut lines = vec![Complex64::new(0.0, 0.0); n * n * n];
        // Second axis: gather lines (i, k) into contiguous rows.
        for i in 0..n {
            for k in 0..n {
                let row = (i * n + k) * n;
                for j in 0..n {
                    lines[row + j] = data[(i * n + j) * n + k];
                }
            }
        }
        plan.process_with_scratch(&mut lines, &mut scratch);
        for i in 0..n {
            for k in 0..n {
                let row = (i * n + k) * n;
                for j in 0..n {
                    data[(i * n + j) * n + k] = lines[row + j];
                }
            }
        }
        // First axis.
        for j in 0..n {
            for k in 0..n {
                let row = (j * n + k) * n;
                for i in 0..n {
                    lines[row + i] = data[(i * n + j) * n + k];
                }
            }
        }
        plan.process_with_scratch(&mut lines, &mut scratch);
        for j in 0..n {
            for k in 0..n {
                let row = (j * n + k) * n;
                for i in 0..n {
                    data[(i * n + j) * n + k] = lines[row + i];
                }
            }
        }
    }
}

/// Fourier coefficients of a scalar (one component) or spinor (two) field.
///
/// Component `c` occupies `data[c * N^3 .. (c + 1) * N^3]` in grid index order;
/// use [`SpectralCoefficients::get`] to address by signed mode.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralCoefficients {
    pub grid: TorusGrid,
    pub components: usize,
    pub data: Vec<Complex64>,
}

impl SpectralCoefficients {
    pub fn get(&self, k: [i64; 3], component: usize) -> Complex64 {
        let g = &self.grid;
        let p = g.index(g.mode_index(k[0]), g.mode_index(k[1]), g.mode_index(k[2]));
        self.data[component * g.size() + p]
    }

    /// `sum |c_k|^2` over all modes and components.
    pub fn energy(&self) -> f64 {
        let v: Vec<f64> = self.data.iter().map(|z| z.norm_sqr()).collect();
        super::pairwise_sum(&v)
    }
}

/// Trait implemented by the two field kinds so one transform serves both.
pub trait Transformable {
    fn to_coefficients(&self) -> SpectralCoefficients;
}

impl Transformable for ScalarField {
    fn to_coefficients(&self) -> SpectralCoefficients {
        let grid = *self.grid();
        let mut data: Vec<Complex64> = self.values().iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Fft3::new(&grid).forward(&mut data);
        SpectralCoefficients {
            grid,
            components: 1,
            data,
        }
    }
}

impl Transformable for SpinorField {
    fn to_coefficients(&self) -> SpectralCoefficients {
        let grid = *self.grid();
        let [mut a, mut b] = self.split_components();
        let fft = Fft3::new(&grid);
        fft.forward(&mut a);
        fft.forward(&mut b);
        a.extend_from_slice(&b);
        SpectralCoefficients {
            grid,
            components: 2,
            data: a,
        }
    }
}

/// Normalized forward transform; coefficients are indexed by modes in `[-N/2, N/2)^3`.
pub fn fourier_transform<F: Transformable>(field: &F) -> SpectralCoefficients {
    field.to_coefficients()
}

/// Synthesis from coefficients: the flat component-major array of values.
///
/// For a single component the result is complex; callers that know the
/// input came from a real field take real parts.
pub fn inverse_fourier_transform(coeffs: &SpectralCoefficients) -> Vec<Complex64> {
    let size = coeffs.grid.size();
    let fft = Fft3::new(&coeffs.grid);
    let mut out = coeffs.data.clone();
    for c in 0..coeffs.components {
        fft.inverse(&mut out[c * size..(c + 1) * size]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_and_cosine_coefficients() {
        let g = TorusGrid::with_points(8).unwrap();
        let one = ScalarField::constant(&g, 1.0);
        let c = fourier_transform(&one);
        assert!((c.get([0, 0, 0], 0).re - 1.0).abs() < 1e-14);
        assert!(c.energy() - 1.0 < 1e-14);

        let cx = ScalarField::from_fn(&g, |x| x[0].cos());
        let c = fourier_transform(&cx);
        for k in [[1, 0, 0], [-1, 0, 0]] {
            assert!((c.get(k, 0) - Complex64::new(0.5, 0.0)).norm() < 1e-14);
        }
        assert!((c.energy() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn mixed_mode_lands_on_right_index() {
        let g = TorusGrid::with_points(8).unwrap();
        let f = ScalarField::from_fn(&g, |x| (x[0] + 2.0 * x[1] - 3.0 * x[2]).cos());
        let c = fourier_transform(&f);
        assert!((c.get([1, 2, -3], 0).re - 0.5).abs() < 1e-13);
        assert!((c.get([-1, -2, 3], 0).re - 0.5).abs() < 1e-13);
    }

    #[test]
    fn round_trip() {
        let g = TorusGrid::with_points(6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut data: Vec<Complex64> = (0..g.size())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let orig = data.clone();
        let fft = Fft3::new(&g);
        fft.forward(&mut data);
        fft.inverse(&mut data);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-13);
        }
    }
}
