//! Trigonometric polynomials `c0 + Σ a cos((2π/L) k·x)` used for initial data
//! and test inputs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ScalarField, TorusGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosTerm {
    pub amplitude: f64,
    pub mode: [i64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigPolynomial {
    pub constant: f64,
    pub terms: Vec<CosTerm>,
}

impl TrigPolynomial {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            terms: Vec::new(),
        }
    }

    pub fn with_term(mut self, amplitude: f64, mode: [i64; 3]) -> Self {
        self.terms.push(CosTerm { amplitude, mode });
        self
    }

    /// Random positive polynomial with constant 1 and `count` terms on modes
    /// `|k_a| <= band`; amplitudes sum to at most `budget` in absolute value,
    /// so the minimum is at least `1 - budget`.
    pub fn random_positive(count: usize, band: i64, budget: f64, rng: &mut impl Rng) -> Self {
        let mut poly = Self::constant(1.0);
        let raw: Vec<f64> = (0..count).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let total: f64 = raw.iter().map(|a| a.abs()).sum::<f64>().max(1e-300);
        let scale = budget * rng.gen_range(0.5..1.0) / total;
        for a in raw {
            let mut mode = [0i64; 3];
            while mode == [0, 0, 0] {
                for m in &mut mode {
                    *m = rng.gen_range(-band..=band);
                }
            }
            poly.terms.push(CosTerm {
                amplitude: a * scale,
                mode,
            });
        }
        poly
    }

    /// Lower bound `c0 - Σ|a|`.
    pub fn lower_bound(&self) -> f64 {
        self.constant - self.terms.iter().map(|t| t.amplitude.abs()).sum::<f64>()
    }

    pub fn max_mode(&self) -> i64 {
        self.terms
            .iter()
            .flat_map(|t| t.mode.iter().map(|m| m.abs()))
            .max()
            .unwrap_or(0)
    }

    pub fn sample(&self, grid: &TorusGrid) -> ScalarField {
        let b = grid.base_wavenumber();
        ScalarField::from_fn(grid, |x| {
            let mut v = self.constant;
            for t in &self.terms {
                let k = t.mode;
                v += t.amplitude * (b * (k[0] as f64 * x[0] + k[1] as f64 * x[1] + k[2] as f64 * x[2])).cos();
            }
            v
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_polynomials_stay_positive() {
        let g = TorusGrid::with_points(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let p = TrigPolynomial::random_positive(4, 2, 0.5, &mut rng);
            assert!(p.lower_bound() >= 0.5 - 1e-15);
            assert!(p.sample(&g).min() >= p.lower_bound() - 1e-12);
        }
    }

    #[test]
    fn sampling_matches_closed_form() {
        let g = TorusGrid::with_points(6).unwrap();
        let p = TrigPolynomial::constant(1.0).with_term(0.3, [1, 0, 0]).with_term(0.2, [0, 1, 1]);
        let f = p.sample(&g);
        let x = g.point(17);
        let expect = 1.0 + 0.3 * x[0].cos() + 0.2 * (x[1] + x[2]).cos();
        assert!((f.values()[17] - expect).abs() < 1e-14);
    }
}
