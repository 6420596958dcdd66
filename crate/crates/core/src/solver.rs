//! Matrix-free solution of the interpolation system and evaluation of the
//! resulting interpolant.

use crate::error::{Error, Result};
use crate::expansion::{phi_imq, KernelParams};
use crate::fastmv::FastOperator;
use crate::geometry::Point2;
use crate::reference::DenseMatrix;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 500;
pub const DEFAULT_RESTART: usize = 50;

/// Anything that can apply a square matrix to a vector.
pub trait LinearOperator {
    fn dim(&self) -> usize;

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()>;
}

impl LinearOperator for FastOperator {
    fn dim(&self) -> usize {
        self.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.apply_into(x, y)
    }
}

impl LinearOperator for DenseMatrix {
    fn dim(&self) -> usize {
        DenseMatrix::dim(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        let r = self.matvec(x)?;
        y.copy_from_slice(&r);
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Stop once `|A c - f|_2 / |f|_2 <= tol`.
    pub tol: f64,
    /// Budget of operator applications inside the Krylov cycles.
    pub max_iter: usize,
    /// Krylov subspace size per cycle.
    pub restart: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            restart: DEFAULT_RESTART,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub c: Vec<f64>,
    pub iterations: usize,
    pub final_relative_residual: f64,
    pub converged: bool,
    /// True relative residual at the start and after every restart cycle.
    pub cycle_residuals: Vec<f64>,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn residual<A: LinearOperator + ?Sized>(a: &A, x: &[f64], f: &[f64], r: &mut [f64]) -> Result<()> {
    a.apply(x, r)?;
    for (ri, fi) in r.iter_mut().zip(f) {
        *ri = fi - *ri;
    }
    Ok(())
}

/// Restarted GMRES from a zero initial guess.
pub fn gmres<A: LinearOperator + ?Sized>(a: &A, f: &[f64], opts: SolverOptions) -> Result<SolveReport> {
    let n = a.dim();
    if f.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: f.len(),
        });
    }
    if opts.tol.is_nan() || opts.tol <= 0.0 {
        return Err(Error::InvalidSolverSetting(format!("tolerance must be positive, got {}", opts.tol)));
    }
    if opts.restart == 0 {
        return Err(Error::InvalidSolverSetting("restart length must be at least 1".into()));
    }

    let mut x = vec![0.0; n];
    let f_norm = norm2(f);
    if f_norm == 0.0 {
        return Ok(SolveReport {
            c: x,
            iterations: 0,
            final_relative_residual: 0.0,
            converged: true,
            cycle_residuals: vec![0.0],
        });
    }

    let m = opts.restart.min(n.max(1));
    let mut r = f.to_vec();
    let mut beta = f_norm;
    let mut rel = 1.0;
    let mut cycle_residuals = vec![rel];
    let mut iterations = 0;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut w = vec![0.0; n];

    while iterations < opts.max_iter && rel > opts.tol {
        basis.clear();
        basis.push(r.iter().map(|v| v / beta).collect());
        // Hessenberg columns, each of length m + 1.
        let mut h = vec![vec![0.0; m + 1]; m];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut used = 0;

        for k in 0..m {
            if iterations >= opts.max_iter {
                break;
            }
            a.apply(&basis[k], &mut w)?;
            iterations += 1;
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteIteration { iteration: iterations });
            }
            // Modified Gram-Schmidt with one reorthogonalization pass.
            for _ in 0..2 {
                for (i, vi) in basis.iter().enumerate() {
                    let hik = dot(&w, vi);
                    h[k][i] += hik;
                    for (wj, vj) in w.iter_mut().zip(vi) {
                        *wj -= hik * vj;
                    }
                }
            }
            let wn = norm2(&w);
            h[k][k + 1] = wn;

            for i in 0..k {
                let (a0, a1) = (h[k][i], h[k][i + 1]);
                h[k][i] = cs[i] * a0 + sn[i] * a1;
                h[k][i + 1] = -sn[i] * a0 + cs[i] * a1;
            }
            let (a0, a1) = (h[k][k], h[k][k + 1]);
            let denom = a0.hypot(a1);
            if denom == 0.0 {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = a0 / denom;
                sn[k] = a1 / denom;
            }
            h[k][k] = denom;
            h[k][k + 1] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            used = k + 1;

            if !g[k + 1].is_finite() {
                return Err(Error::NonFiniteIteration { iteration: iterations });
            }
            if g[k + 1].abs() / f_norm <= opts.tol || wn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }

        if used == 0 {
            break;
        }
        // Back substitution for the least-squares coefficients.
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for j in (i + 1)..used {
                s -= h[j][i] * y[j];
            }
            y[i] = if h[i][i] != 0.0 { s / h[i][i] } else { 0.0 };
        }
        for (yi, vi) in y.iter().zip(&basis) {
            for (xj, vj) in x.iter_mut().zip(vi) {
                *xj += yi * vj;
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteIteration { iteration: iterations });
        }

        residual(a, &x, f, &mut r)?;
        beta = norm2(&r);
        rel = beta / f_norm;
        cycle_residuals.push(rel);
        if beta == 0.0 {
            break;
        }
    }

    Ok(SolveReport {
        c: x,
        iterations,
        final_relative_residual: rel,
        converged: rel <= opts.tol,
        cycle_residuals,
    })
}

/// Solves `A c = f` with the fast operator as the only access to `A`.
pub fn iterative_solve(op: &FastOperator, f: &[f64], tol: f64, max_iter: usize) -> Result<SolveReport> {
    gmres(
        op,
        f,
        SolverOptions {
            tol,
            max_iter,
            restart: DEFAULT_RESTART,
        },
    )
}

/// `P(x) = sum_j c_j phi(|x - y_j|)`.
#[derive(Clone, Debug)]
pub struct Interpolant {
    pub centers: Vec<Point2>,
    pub coefficients: Vec<f64>,
    pub params: KernelParams,
}

impl Interpolant {
    pub fn new(centers: Vec<Point2>, coefficients: Vec<f64>, params: KernelParams) -> Result<Self> {
        if centers.len() != coefficients.len() {
            return Err(Error::LengthMismatch {
                expected: centers.len(),
                got: coefficients.len(),
            });
        }
        Ok(Self {
            centers,
            coefficients,
            params,
        })
    }

    pub fn evaluate(&self, x: Point2) -> f64 {
        self.centers
            .iter()
            .zip(&self.coefficients)
            .map(|(y, c)| c * phi_imq(x, *y, &self.params))
            .sum()
    }
}

pub fn evaluate_interpolant(interp: &Interpolant, x: Point2) -> f64 {
    interp.evaluate(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fastmv::{build_operator, Levels};
    use crate::reference::{assemble_dense, dense_solve, halton2d, rel_err_inf};
    use approx::assert_relative_eq;

    #[test]
    fn single_point_solves_in_one_step() {
        let params = KernelParams::new(0.4).unwrap();
        let op = build_operator(&[Point2::new(0.2, 0.3)], params, 10, Levels::Auto).unwrap();
        let rep = iterative_solve(&op, &[2.0], 1e-12, 10).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations, 1);
        assert_relative_eq!(rep.c[0], 0.8, max_relative = 1e-14);
    }

    #[test]
    fn zero_budget_returns_initial_guess() {
        let pts = halton2d(20);
        let op = build_operator(&pts, KernelParams::new(0.1).unwrap(), 10, Levels::Auto).unwrap();
        let rep = iterative_solve(&op, &[1.0; 20], 1e-8, 0).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 0);
        assert!(rep.c.iter().all(|&c| c == 0.0));
        assert_eq!(rep.final_relative_residual, 1.0);
    }

    #[test]
    fn zero_rhs_and_bad_settings() {
        let pts = halton2d(10);
        let op = build_operator(&pts, KernelParams::new(0.1).unwrap(), 4, Levels::Auto).unwrap();
        let rep = iterative_solve(&op, &[0.0; 10], 1e-8, 10).unwrap();
        assert!(rep.converged && rep.c.iter().all(|&c| c == 0.0));
        assert!(iterative_solve(&op, &[1.0; 10], 0.0, 10).is_err());
        assert!(iterative_solve(&op, &[1.0; 9], 1e-8, 10).is_err());
        let bad = SolverOptions {
            restart: 0,
            ..SolverOptions::default()
        };
        assert!(gmres(&op, &[1.0; 10], bad).is_err());
    }

    struct Blowup(usize);

    impl LinearOperator for Blowup {
        fn dim(&self) -> usize {
            self.0
        }

        fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
            for (yi, xi) in y.iter_mut().zip(x) {
                *yi = xi * f64::INFINITY;
            }
            Ok(())
        }
    }

    #[test]
    fn non_finite_values_are_reported() {
        let err = gmres(&Blowup(3), &[1.0, 2.0, 3.0], SolverOptions::default());
        assert!(matches!(err, Err(Error::NonFiniteIteration { iteration: 1 })));
    }

    #[test]
    fn recovers_constructed_solution() {
        let pts = halton2d(500);
        let params = KernelParams::new(0.05).unwrap();
        let op = build_operator(&pts, params, 10, Levels::Auto).unwrap();
        let c_star: Vec<f64> = (0..500).map(|i| ((i as f64) * 0.37).sin()).collect();
        let f = op.fast_matvec(&c_star).unwrap();
        let rep = iterative_solve(&op, &f, 1e-10, 2000).unwrap();
        assert!(rep.converged, "{rep:?}");
        assert!(rep.final_relative_residual <= 1e-10);
        assert!(rel_err_inf(&rep.c, &c_star).unwrap() <= 1e-6);
        for w in rep.cycle_residuals.windows(2) {
            assert!(w[1] <= w[0], "{:?}", rep.cycle_residuals);
        }
    }

    #[test]
    fn dense_operator_matches_direct_solve() {
        let pts = halton2d(300);
        let params = KernelParams::new(0.05).unwrap();
        let a = assemble_dense(&pts, &params).unwrap();
        let f: Vec<f64> = pts.iter().map(|p| (2.0 * p.x1).cos() + p.x2 * p.x2).collect();
        let direct = dense_solve(&a, &f).unwrap();
        let rep = gmres(&a, &f, SolverOptions { tol: 1e-12, max_iter: 1000, restart: 60 }).unwrap();
        assert!(rep.converged);
        assert!(rel_err_inf(&rep.c, &direct).unwrap() <= 1e-8);
    }

    #[test]
    fn interpolant_cases() {
        let params = KernelParams::new(1.0).unwrap();
        let one = Interpolant::new(vec![Point2::new(0.5, 0.5)], vec![1.0], params).unwrap();
        assert_eq!(evaluate_interpolant(&one, Point2::new(0.5, 0.5)), 1.0);
        let zero = Interpolant::new(halton2d(5), vec![0.0; 5], params).unwrap();
        assert_eq!(zero.evaluate(Point2::new(0.1, 0.2)), 0.0);
        assert!(Interpolant::new(halton2d(5), vec![0.0; 4], params).is_err());
    }
}
