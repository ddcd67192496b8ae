//! Preconditioned MINRES for Hermitian (possibly indefinite) complex operators
//! and restarted GMRES for real nonsymmetric operators.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::torus::pairwise_sum_by;

pub type ComplexOp<'a> = &'a dyn Fn(&[Complex64], &mut [Complex64]);
pub type RealOp<'a> = &'a dyn Fn(&[f64], &mut [f64]);

#[derive(Clone, Copy, Debug)]
pub struct KrylovOptions {
    /// Relative residual target `‖b - Ax‖ / ‖b‖`.
    pub tol: f64,
    /// Iterations per cycle (MINRES) or Krylov dimension (GMRES).
    pub cycle: usize,
    /// Maximum number of cycles; each restarts from the true residual.
    pub max_cycles: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            cycle: 400,
            max_cycles: 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KrylovReport {
    pub iterations: usize,
    pub residual: f64,
}

pub fn cdot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    let re = pairwise_sum_by(a.len(), &|i| (a[i].conj() * b[i]).re);
    let im = pairwise_sum_by(a.len(), &|i| (a[i].conj() * b[i]).im);
    Complex64::new(re, im)
}

pub fn cnorm(a: &[Complex64]) -> f64 {
    pairwise_sum_by(a.len(), &|i| a[i].norm_sqr()).sqrt()
}

pub fn rdot(a: &[f64], b: &[f64]) -> f64 {
    pairwise_sum_by(a.len(), &|i| a[i] * b[i])
}

pub fn rnorm(a: &[f64]) -> f64 {
    rdot(a, a).sqrt()
}

/// Solve `A x = b` for Hermitian `A` with a Hermitian positive definite
/// preconditioner `M ≈ A^{-1}` (pass `None` for the identity).
///
/// `x` holds the initial guess on entry. Each cycle runs preconditioned
/// MINRES on the current true residual; the loop stops once the true
/// relative residual is below `tol`.
pub fn minres(
    op: ComplexOp,
    prec: Option<ComplexOp>,
    b: &[Complex64],
    x: &mut [Complex64],
    opts: &KrylovOptions,
) -> Result<KrylovReport> {
    let n = b.len();
    let bnorm = cnorm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        return Ok(KrylovReport {
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut r = vec![Complex64::new(0.0, 0.0); n];
    let mut total = 0;
    let mut rel = f64::INFINITY;
    for _ in 0..opts.max_cycles {
        op(x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        rel = cnorm(&r) / bnorm;
        if rel <= opts.tol {
            return Ok(KrylovReport {
                iterations: total,
                residual: rel,
            });
        }
        let mut dx = vec![Complex64::new(0.0, 0.0); n];
        // Inner target slightly tighter than the outer one, since the
        // preconditioned residual norm differs from the Euclidean one.
        let inner_tol = (0.1 * opts.tol * bnorm / cnorm(&r)).min(0.1);
        total += minres_cycle(op, prec, &r, &mut dx, inner_tol, opts.cycle);
        for i in 0..n {
            x[i] += dx[i];
        }
    }
    op(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    rel = rel.min(cnorm(&r) / bnorm);
    if rel <= opts.tol {
        Ok(KrylovReport {
            iterations: total,
            residual: rel,
        })
    } else {
        Err(Error::ConvergenceFailure {
            iterations: total,
            residual: rel,
        })
    }
}

/// One MINRES run from a zero initial guess; returns the iteration count.
fn minres_cycle(
    op: ComplexOp,
    prec: Option<ComplexOp>,
    b: &[Complex64],
    x: &mut [Complex64],
    tol: f64,
    maxit: usize,
) -> usize {
    let n = b.len();
    let zero = Complex64::new(0.0, 0.0);
    let apply_prec = |src: &[Complex64], dst: &mut [Complex64]| match prec {
        Some(m) => m(src, dst),
        None => dst.copy_from_slice(src),
    };
    let mut r1 = b.to_vec();
    let mut y = vec![zero; n];
    apply_prec(&r1, &mut y);
    let beta1 = cdot(&r1, &y).re;
    if beta1 <= 0.0 {
        return 0;
    }
    let beta1 = beta1.sqrt();
    let mut r2 = r1.clone();
    let mut v = vec![zero; n];
    let mut w = vec![zero; n];
    let mut w1 = vec![zero; n];
    let mut w2 = vec![zero; n];
    let (mut oldb, mut beta, mut dbar, mut epsln) = (0.0f64, beta1, 0.0f64, 0.0f64);
    let mut phibar = beta1;
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);
    for itn in 1..=maxit {
        let s = 1.0 / beta;
        for i in 0..n {
            v[i] = y[i] * s;
        }
        op(&v, &mut y);
        if itn >= 2 {
            let c = beta / oldb;
            for i in 0..n {
                y[i] -= r1[i] * c;
            }
        }
        let alfa = cdot(&v, &y).re;
        let c = alfa / beta;
        for i in 0..n {
            y[i] -= r2[i] * c;
        }
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        apply_prec(&r2, &mut y);
        oldb = beta;
        let b2 = cdot(&r2, &y).re;
        beta = b2.max(0.0).sqrt();

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let denom = 1.0 / gamma;
        std::mem::swap(&mut w1, &mut w2);
        std::mem::swap(&mut w2, &mut w);
        for i in 0..n {
            w[i] = (v[i] - w1[i] * oldeps - w2[i] * delta) * denom;
            x[i] += w[i] * phi;
        }
        if phibar <= tol * beta1 || beta == 0.0 {
            return itn;
        }
    }
    maxit
}

/// Restarted GMRES with right preconditioning for real operators.
pub fn gmres(op: RealOp, prec: Option<RealOp>, b: &[f64], x: &mut [f64], opts: &KrylovOptions) -> Result<KrylovReport> {
    let n = b.len();
    let m = opts.cycle.max(1);
    let bnorm = rnorm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|z| *z = 0.0);
        return Ok(KrylovReport {
            iterations: 0,
            residual: 0.0,
        });
    }
    let apply_prec = |src: &[f64], dst: &mut [f64]| match prec {
        Some(p) => p(src, dst),
        None => dst.copy_from_slice(src),
    };
    let mut total = 0;
    let mut r = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut rel;
    for _ in 0..opts.max_cycles {
        op(x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let beta = rnorm(&r);
        rel = beta / bnorm;
        if rel <= opts.tol {
            return Ok(KrylovReport {
                iterations: total,
                residual: rel,
            });
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for j in 0..m {
            apply_prec(&basis[j], &mut tmp);
            let mut wv = vec![0.0; n];
            op(&tmp, &mut wv);
            // Modified Gram-Schmidt with one reorthogonalization pass.
            for _ in 0..2 {
                for (i, q) in basis.iter().enumerate() {
                    let c = rdot(q, &wv);
                    h[i][j] += c;
                    for t in 0..n {
                        wv[t] -= c * q[t];
                    }
                }
            }
            let hn = rnorm(&wv);
            h[j + 1][j] = hn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let d = h[j][j].hypot(h[j + 1][j]);
            if d == 0.0 {
                cs[j] = 1.0;
                sn[j] = 0.0;
            } else {
                cs[j] = h[j][j] / d;
                sn[j] = h[j + 1][j] / d;
            }
            h[j][j] = d;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            total += 1;
            k_used = j + 1;
            if g[j + 1].abs() <= 0.5 * opts.tol * bnorm || hn == 0.0 {
                break;
            }
            basis.push(wv.iter().map(|v| v / hn).collect());
        }
        let mut ycoef = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for t in i + 1..k_used {
                s -= h[i][t] * ycoef[t];
            }
            ycoef[i] = s / h[i][i];
        }
        let mut z = vec![0.0; n];
        for (i, c) in ycoef.iter().enumerate() {
            for t in 0..n {
                z[t] += c * basis[i][t];
            }
        }
        apply_prec(&z, &mut tmp);
        for t in 0..n {
            x[t] += tmp[t];
        }
    }
    op(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    rel = rnorm(&r) / bnorm;
    if rel <= opts.tol {
        Ok(KrylovReport {
            iterations: total,
            residual: rel,
        })
    } else {
        Err(Error::ConvergenceFailure {
            iterations: total,
            residual: rel,
        })
    }
}
