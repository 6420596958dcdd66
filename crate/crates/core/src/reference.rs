//! Dense reference computations and experiment inputs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expansion::KernelParams;
use crate::geometry::Point2;

/// Largest point count [`assemble_dense`] accepts by default.
pub const DEFAULT_DENSE_CAP: usize = 5000;

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::LengthMismatch { expected, got });
    }
    Ok(())
}

/// `b_i = sum_j phi(|x_i - x_j|) u_j`, row by row without storing the matrix.
pub fn dense_matvec(points: &[Point2], params: &KernelParams, u: &[f64]) -> Result<Vec<f64>> {
    check_len(points.len(), u.len())?;
    let xs: Vec<f64> = points.iter().map(|p| p.x1).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.x2).collect();
    let t2 = params.shape() * params.shape();
    Ok(points
        .par_iter()
        .map(|p| {
            let (px, py) = (p.x1, p.x2);
            xs.iter()
                .zip(&ys)
                .zip(u)
                .map(|((&x, &y), &uj)| {
                    let dx = px - x;
                    let dy = py - y;
                    uj / (t2 + dx * dx + dy * dy).sqrt()
                })
                .sum()
        })
        .collect())
}

/// Assembled interpolation matrix `a_ij = phi(|x_i - x_j|)`.
#[derive(Clone, Debug)]
pub struct DenseMatrix {
    params: KernelParams,
    a: DMatrix<f64>,
}

impl DenseMatrix {
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[(i, j)]
    }

    pub fn params(&self) -> KernelParams {
        self.params
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn matvec(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), u.len())?;
        Ok((&self.a * DVector::from_column_slice(u)).as_slice().to_vec())
    }

    /// True when a Cholesky factorization succeeds, i.e. every pivot is positive.
    pub fn is_positive_definite(&self) -> bool {
        self.a.clone().cholesky().is_some()
    }
}

pub fn assemble_dense(points: &[Point2], params: &KernelParams) -> Result<DenseMatrix> {
    assemble_dense_capped(points, params, DEFAULT_DENSE_CAP)
}

/// Assembles the matrix, evaluating each unordered pair once.
pub fn assemble_dense_capped(
    points: &[Point2],
    params: &KernelParams,
    cap: usize,
) -> Result<DenseMatrix> {
    let n = points.len();
    if n > cap {
        return Err(Error::MatrixTooLarge { n, cap });
    }
    let mut a = DMatrix::zeros(n, n);
    let diag = 1.0 / params.shape();
    for i in 0..n {
        a[(i, i)] = diag;
        for j in 0..i {
            let v = params.eval_sq(points[i].dist_sq(&points[j]));
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    Ok(DenseMatrix { params: *params, a })
}

/// Solves `A c = f` by LU with partial pivoting.
pub fn dense_solve(a: &DenseMatrix, f: &[f64]) -> Result<Vec<f64>> {
    let n = a.dim();
    check_len(n, f.len())?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let lu = a.a.clone().lu();
    let u = lu.u();
    let diag = u.diagonal();
    let max = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    let ratio = if max > 0.0 { min / max } else { 0.0 };
    if ratio.is_nan() || ratio <= f64::EPSILON {
        return Err(Error::SingularMatrix(ratio));
    }
    let c = lu
        .solve(&DVector::from_column_slice(f))
        .ok_or(Error::SingularMatrix(ratio))?;
    Ok(c.as_slice().to_vec())
}

/// `max_i |test_i - ref_i| / max_i |ref_i|`.
pub fn rel_err_inf(test: &[f64], reference: &[f64]) -> Result<f64> {
    check_len(reference.len(), test.len())?;
    let scale = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::ZeroReference);
    }
    let diff = test
        .iter()
        .zip(reference)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(diff / scale)
}

fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut value = 0.0;
    while index > 0 {
        value += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    value
}

/// First `n` points of the base (2, 3) Halton sequence, starting at index 1.
pub fn halton2d(n: usize) -> Vec<Point2> {
    (1..=n as u64)
        .map(|i| Point2::new(radical_inverse(i, 2), radical_inverse(i, 3)))
        .collect()
}

/// `n` values uniform on `[-1, 1]` from a ChaCha8 stream seeded with `seed`.
pub fn random_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

/// Reads whitespace-separated coordinate pairs, one per line; `#` starts a
/// comment line and blank lines are skipped.
pub fn read_points(path: &Path) -> Result<Vec<Point2>> {
    let reader = BufReader::new(File::open(path)?);
    let mut points = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(parse_err(format!("expected 2 fields, found {}", fields.len())));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| parse_err(format!("bad number {s:?}: {e}")))
        };
        let p = Point2::new(parse(fields[0])?, parse(fields[1])?);
        if !p.is_finite() {
            return Err(parse_err("non-finite coordinate".into()));
        }
        points.push(p);
    }
    Ok(points)
}

pub fn write_points(path: &Path, points: &[Point2]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# {} points", points.len())?;
    for p in points {
        writeln!(w, "{:e} {:e}", p.x1, p.x2)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::collections::HashSet;

    fn unit() -> KernelParams {
        KernelParams::new(1.0).unwrap()
    }

    #[test]
    fn dense_matvec_small_cases() {
        let params = KernelParams::new(0.5).unwrap();
        let b = dense_matvec(&[Point2::new(0.3, 0.3)], &params, &[3.0]).unwrap();
        assert_relative_eq!(b[0], 6.0);

        let pts = halton2d(7);
        let mut e = vec![0.0; 7];
        e[4] = 1.0;
        let b = dense_matvec(&pts, &params, &e).unwrap();
        assert_relative_eq!(b[4], 2.0);
        for (i, bi) in b.iter().enumerate() {
            assert_eq!(*bi, params.eval_sq(pts[i].dist_sq(&pts[4])));
        }

        let pts = [Point2::new(0.0, 0.0), Point2::new(3f64.sqrt(), 0.0)];
        let b = dense_matvec(&pts, &unit(), &[1.0, 1.0]).unwrap();
        assert_relative_eq!(b[0], 1.5, max_relative = 1e-15);
        assert_relative_eq!(b[1], 1.5, max_relative = 1e-15);

        assert!(matches!(
            dense_matvec(&pts, &unit(), &[1.0]),
            Err(Error::LengthMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn assembled_matrix_invariants() {
        let pts = halton2d(60);
        let a = assemble_dense(&pts, &KernelParams::new(0.3).unwrap()).unwrap();
        for i in 0..60 {
            assert_eq!(a.get(i, i), 1.0 / 0.3);
            for j in 0..60 {
                assert_eq!(a.get(i, j), a.get(j, i));
                assert!(a.get(i, j) > 0.0 && a.get(i, j) <= 1.0 / 0.3);
            }
        }

        let line = [Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(2.0, 0.0)];
        let a = assemble_dense(&line, &unit()).unwrap();
        let s2 = 1.0 / 2f64.sqrt();
        assert_relative_eq!(a.get(0, 1), s2);
        assert_relative_eq!(a.get(1, 2), s2);
        assert_relative_eq!(a.get(0, 2), 1.0 / 5f64.sqrt());

        let err = assemble_dense_capped(&halton2d(11), &unit(), 10);
        assert!(matches!(err, Err(Error::MatrixTooLarge { n: 11, cap: 10 })));
    }

    #[test]
    fn assembled_and_rowwise_agree() {
        let pts = halton2d(300);
        let params = KernelParams::new(0.7).unwrap();
        let u = random_vector(300, 5);
        let a = assemble_dense(&pts, &params).unwrap();
        let b1 = a.matvec(&u).unwrap();
        let b2 = dense_matvec(&pts, &params, &u).unwrap();
        assert!(rel_err_inf(&b1, &b2).unwrap() <= 1e-13);
    }

    #[test]
    fn dense_solve_cases() {
        let params = KernelParams::new(0.25).unwrap();
        let a = assemble_dense(&[Point2::new(0.1, 0.9)], &params).unwrap();
        assert_relative_eq!(dense_solve(&a, &[2.0]).unwrap()[0], 0.5);

        let pts = halton2d(200);
        let params = KernelParams::new(0.1).unwrap();
        let a = assemble_dense(&pts, &params).unwrap();
        let ones = vec![1.0; 200];
        let f = a.matvec(&ones).unwrap();
        let c = dense_solve(&a, &f).unwrap();
        assert!(c.iter().all(|ci| (ci - 1.0).abs() <= 1e-8));

        let f: Vec<f64> = pts.iter().map(|p| (3.0 * p.x1).sin() * p.x2.exp()).collect();
        let c = dense_solve(&a, &f).unwrap();
        let r: Vec<f64> = a.matvec(&c).unwrap();
        assert!(rel_err_inf(&r, &f).unwrap() <= 1e-10);
        assert!(a.is_positive_definite());
    }

    #[test]
    fn dense_solve_detects_singularity() {
        // Coincident sites give two identical rows.
        let pts = [Point2::new(0.2, 0.2), Point2::new(0.2, 0.2), Point2::new(0.7, 0.1)];
        let a = assemble_dense(&pts, &unit()).unwrap();
        assert!(matches!(dense_solve(&a, &[1.0, 2.0, 3.0]), Err(Error::SingularMatrix(_))));
    }

    #[test]
    fn rel_err_cases() {
        let r = [1.0, -2.0, 0.5];
        assert_eq!(rel_err_inf(&r, &r).unwrap(), 0.0);
        let t: Vec<f64> = r.iter().map(|v| 1.01 * v).collect();
        assert_relative_eq!(rel_err_inf(&t, &r).unwrap(), 0.01, max_relative = 1e-12);
        assert!(matches!(rel_err_inf(&[1.0], &[0.0]), Err(Error::ZeroReference)));
        assert!(rel_err_inf(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn halton_values() {
        let h = halton2d(3);
        assert_eq!(h[0], Point2::new(0.5, 1.0 / 3.0));
        assert_eq!(h[1], Point2::new(0.25, 2.0 / 3.0));
        assert_eq!(h[2], Point2::new(0.75, 1.0 / 9.0));
    }

    #[test]
    fn halton_points_distinct() {
        let h = halton2d(100_000);
        assert!(h.iter().all(|p| p.x1 > 0.0 && p.x1 < 1.0 && p.x2 > 0.0 && p.x2 < 1.0));
        let set: HashSet<(u64, u64)> = h.iter().map(|p| (p.x1.to_bits(), p.x2.to_bits())).collect();
        assert_eq!(set.len(), h.len());
    }

    #[test]
    fn random_vector_properties() {
        let a = random_vector(1000, 42);
        assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(a, random_vector(1000, 42));
        assert_ne!(a, random_vector(1000, 43));
    }

    #[test]
    fn point_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pts.txt");
        let pts = halton2d(50);
        write_points(&path, &pts).unwrap();
        assert_eq!(read_points(&path).unwrap(), pts);

        std::fs::write(&path, "# header\n0.5 0.25\n\n  1e-3\t2\n").unwrap();
        assert_eq!(
            read_points(&path).unwrap(),
            vec![Point2::new(0.5, 0.25), Point2::new(1e-3, 2.0)]
        );

        std::fs::write(&path, "0.5 0.25\n0.1\n").unwrap();
        assert!(matches!(read_points(&path), Err(Error::Parse { line: 2, .. })));
        std::fs::write(&path, "0.5 abc\n").unwrap();
        assert!(read_points(&path).is_err());
    }
}
