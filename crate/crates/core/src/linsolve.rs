//! Jacobi-preconditioned conjugate gradients for the symmetric
//! positive-definite systems of the implicit diffusion and viscous steps.

use crate::error::{Result, SimError};
use crate::exec::Exec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct CgSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub exec: Exec,
}

/// Solves `A x = b` starting from the contents of `x`. `apply(v, out)`
/// writes `A v`; `diag` is the diagonal of `A`. Convergence is declared on
/// the true relative residual `|b - A x| / |b|`.
pub fn pcg<F>(apply: F, diag: &[f64], b: &[f64], x: &mut [f64], s: CgSettings) -> Result<SolveStats>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let ex = s.exec;
    let bnorm = ex.dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats { iterations: 0, residual: 0.0 });
    }
    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let true_residual = |x: &[f64], r: &mut [f64], ap: &mut [f64]| -> f64 {
        apply(x, ap);
        ex.fill(r, |k| b[k] - ap[k]);
        ex.dot(r, r).sqrt() / bnorm
    };
    let mut rel = true_residual(x, &mut r, &mut ap);
    if rel <= s.tol {
        return Ok(SolveStats { iterations: 0, residual: rel });
    }
    let mut z = vec![0.0; n];
    ex.fill(&mut z, |k| r[k] / diag[k]);
    let mut p = z.clone();
    let mut rz = ex.dot(&r, &z);
    let mut it = 0;
    while it < s.max_iter {
        apply(&p, &mut ap);
        let pap = ex.dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(SimError::LinearSolveDiverged { residual: rel, iterations: it });
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        it += 1;
        rel = ex.dot(&r, &r).sqrt() / bnorm;
        if rel <= s.tol {
            rel = true_residual(x, &mut r, &mut ap);
            if rel <= s.tol {
                return Ok(SolveStats { iterations: it, residual: rel });
            }
        }
        ex.fill(&mut z, |k| r[k] / diag[k]);
        let rz_new = ex.dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(SimError::LinearSolveDiverged { residual: rel, iterations: it })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_a_tridiagonal_system() {
        let n = 50;
        let apply = |v: &[f64], out: &mut [f64]| {
            for k in 0..n {
                let l = if k > 0 { v[k - 1] } else { 0.0 };
                let r = if k + 1 < n { v[k + 1] } else { 0.0 };
                out[k] = 3.0 * v[k] - l - r;
            }
        };
        let b: Vec<f64> = (0..n).map(|k| (k as f64).cos()).collect();
        let mut x = vec![0.0; n];
        let s = CgSettings { tol: 1e-12, max_iter: 500, exec: Exec::Serial };
        let stats = pcg(apply, &vec![3.0; n], &b, &mut x, s).unwrap();
        assert!(stats.residual <= 1e-12);
        let mut ax = vec![0.0; n];
        apply(&x, &mut ax);
        for k in 0..n {
            assert!((ax[k] - b[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn iteration_cap_reports_divergence() {
        let apply = |v: &[f64], out: &mut [f64]| {
            for k in 0..v.len() {
                out[k] = (k as f64 + 1.0) * v[k];
            }
        };
        let b = vec![1.0; 100];
        let mut x = vec![0.0; 100];
        let s = CgSettings { tol: 1e-14, max_iter: 2, exec: Exec::Serial };
        // Identity preconditioner hides the diagonal scaling from CG.
        let r = pcg(apply, &vec![1.0; 100], &b, &mut x, s);
        assert!(matches!(r, Err(SimError::LinearSolveDiverged { iterations: 2, .. })));
    }
}
