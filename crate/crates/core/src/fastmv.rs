//! Fast product `b = A u` for the inverse multiquadric interpolation matrix.
//!
//! For every level and every source block the sources are condensed into
//! cosine and sine moments about the block center. Targets in the block's
//! interaction list pick those moments up through the separated expansion.
//! Whatever is still adjacent at the finest level is summed directly.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expansion::KernelParams;
use crate::geometry::{to_spherical, Point2, Point3, SphericalCoord};
use crate::partition::{bounding_square, build_tree, BlockRef, BlockTree, MAX_LEVELS};
use crate::specfun::{fill_assoc_legendre, flat, CoeffTable, ExpansionOrder};

/// Number of partition levels: chosen from the cost model or given explicitly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Levels {
    #[default]
    Auto,
    Fixed(usize),
}

/// Sine (`v`) and cosine (`w`) moments of one block, indexed by flat `(n, m)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

impl Moments {
    pub fn zeros(len: usize) -> Self {
        Self {
            v: vec![0.0; len],
            w: vec![0.0; len],
        }
    }
}

/// Source-side data for one level: each point's lifted offset from its own
/// block center, with `cos(m omega)` and `sin(m omega)` for `m <= M`.
#[derive(Clone, Debug)]
struct LevelTables {
    coords: Vec<SphericalCoord>,
    cos_m: Vec<f64>,
    sin_m: Vec<f64>,
    centers: Vec<Point2>,
}

/// Tables that depend only on the geometry, built once per operator.
#[derive(Clone, Debug)]
pub struct PrecomputedTables {
    d: CoeffTable,
    levels: Vec<LevelTables>,
}

impl PrecomputedTables {
    pub fn coeffs(&self) -> &CoeffTable {
        &self.d
    }

    /// Lifted spherical coordinates of point `index` relative to its block
    /// center at `level`.
    pub fn source_coord(&self, level: usize, index: usize) -> SphericalCoord {
        self.levels[level - 1].coords[index]
    }
}

/// Counts of the work done by one application.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WorkCounts {
    /// Sum over levels of per-point moment contributions.
    pub moment_terms: usize,
    /// (target, source block) pairs evaluated through the expansion.
    pub far_pairs: usize,
    /// (target, source) pairs evaluated directly.
    pub near_pairs: usize,
}

impl WorkCounts {
    /// Multiplication count in the style of the cost model: `4K` per moment
    /// term and per far pair, one per near pair.
    pub fn multiplications(&self, order: ExpansionOrder) -> usize {
        4 * order.len() * (self.moment_terms + self.far_pairs) + self.near_pairs
    }
}

/// Reusable per-thread buffers.
struct Scratch {
    legendre: Vec<f64>,
    cos_m: Vec<f64>,
    sin_m: Vec<f64>,
}

impl Scratch {
    fn new(order: ExpansionOrder) -> Self {
        let m = order.max_degree() + 1;
        Self {
            legendre: vec![0.0; order.len()],
            cos_m: vec![0.0; m],
            sin_m: vec![0.0; m],
        }
    }
}

/// Finest-level points laid out contiguously by block.
#[derive(Clone, Debug)]
struct NearLayout {
    perm: Vec<usize>,
    start: Vec<usize>,
    xs: Vec<f64>,
    ys: Vec<f64>,
}

/// Assembled operator applying `u -> A u` without forming `A`.
#[derive(Clone, Debug)]
pub struct FastOperator {
    points: Vec<Point2>,
    params: KernelParams,
    order: ExpansionOrder,
    tree: BlockTree,
    tables: PrecomputedTables,
    near: NearLayout,
}

/// Upper bound `N (109 K L + 9 N / 4^{L+1})` on the multiplications per product.
pub fn cost_upper_bound(n: usize, max_degree: usize, levels: usize) -> f64 {
    let k = ExpansionOrder::new(max_degree).len() as f64;
    let n = n as f64;
    n * (109.0 * k * levels as f64 + 9.0 * n / 4f64.powi(levels as i32 + 1))
}

/// Level count from the cost model `g(L) = 109 K L + (9N/4) 4^{-L}`.
///
/// Takes the deepest integer level not past the continuous minimizer
/// `log_4(beta ln 4 / alpha)`, clamped to `[1, L_max]` where `L_max` keeps at
/// least one expected point per finest block.
pub fn auto_level(n: usize, max_degree: usize) -> usize {
    let alpha = 109.0 * ExpansionOrder::new(max_degree).len() as f64;
    let beta = 9.0 * n as f64 / 4.0;
    let lambda = (beta * 4f64.ln() / alpha).ln() / 4f64.ln();
    let mut l_max = 1;
    while l_max < MAX_LEVELS && n >> (2 * (l_max + 2)) >= 1 {
        l_max += 1;
    }
    let l = if lambda.is_finite() && lambda >= 1.0 {
        lambda.floor() as usize
    } else {
        1
    };
    l.clamp(1, l_max)
}

fn trig_into(c1: f64, s1: f64, cos_m: &mut [f64], sin_m: &mut [f64]) {
    cos_m[0] = 1.0;
    sin_m[0] = 0.0;
    for m in 1..cos_m.len() {
        cos_m[m] = cos_m[m - 1] * c1 - sin_m[m - 1] * s1;
        sin_m[m] = sin_m[m - 1] * c1 + cos_m[m - 1] * s1;
    }
}

/// Builds the partition and the geometry tables.
pub fn build_operator(
    points: &[Point2],
    params: KernelParams,
    max_degree: usize,
    levels: Levels,
) -> Result<FastOperator> {
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    let square = bounding_square(points)?;
    let levels = match levels {
        Levels::Auto => auto_level(points.len(), max_degree),
        Levels::Fixed(l) => l,
    };
    let tree = build_tree(points, square, levels)?;
    let order = ExpansionOrder::new(max_degree);
    let m1 = max_degree + 1;

    let level_tables = (1..=levels)
        .map(|level| {
            let centers: Vec<Point2> = (0..tree.num_blocks(level))
                .map(|b| tree.center(tree.block_ref(level, b)))
                .collect();
            let mut coords = Vec::with_capacity(points.len());
            let mut cos_m = vec![0.0; points.len() * m1];
            let mut sin_m = vec![0.0; points.len() * m1];
            for (i, p) in points.iter().enumerate() {
                let z = centers[tree.block_index(tree.block_of(level, i))];
                // Source and center share the plane x3 = -t/2.
                let s = to_spherical(Point3::new(p.x1 - z.x1, p.x2 - z.x2, 0.0));
                let (s1, c1) = s.omega.sin_cos();
                trig_into(
                    c1,
                    s1,
                    &mut cos_m[i * m1..(i + 1) * m1],
                    &mut sin_m[i * m1..(i + 1) * m1],
                );
                coords.push(s);
            }
            LevelTables {
                coords,
                cos_m,
                sin_m,
                centers,
            }
        })
        .collect();

    let finest = tree.num_levels();
    let nblocks = tree.num_blocks(finest);
    let mut perm = Vec::with_capacity(points.len());
    let mut start = Vec::with_capacity(nblocks + 1);
    for b in 0..nblocks {
        start.push(perm.len());
        perm.extend_from_slice(tree.bucket(tree.block_ref(finest, b)));
    }
    start.push(perm.len());
    let near = NearLayout {
        xs: perm.iter().map(|&i| points[i].x1).collect(),
        ys: perm.iter().map(|&i| points[i].x2).collect(),
        perm,
        start,
    };

    Ok(FastOperator {
        points: points.to_vec(),
        params,
        order,
        tree,
        tables: PrecomputedTables {
            d: CoeffTable::new(order),
            levels: level_tables,
        },
        near,
    })
}

impl FastOperator {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn params(&self) -> KernelParams {
        self.params
    }

    pub fn order(&self) -> ExpansionOrder {
        self.order
    }

    pub fn tree(&self) -> &BlockTree {
        &self.tree
    }

    pub fn tables(&self) -> &PrecomputedTables {
        &self.tables
    }

    pub fn num_levels(&self) -> usize {
        self.tree.num_levels()
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got,
            });
        }
        Ok(())
    }

    /// Accumulates `(w, v)` for a block into `out`, laid out as interleaved
    /// pairs `out[2k] = w_k`, `out[2k + 1] = v_k`.
    fn accumulate_moments(&self, level: usize, bucket: &[usize], u: &[f64], legendre: &mut [f64], out: &mut [f64]) {
        let lt = &self.tables.levels[level - 1];
        let big_m = self.order.max_degree();
        let m1 = big_m + 1;
        let mut filled_for = f64::NAN;
        for &j in bucket {
            let uj = u[j];
            let s = lt.coords[j];
            let x = s.theta.cos();
            if x != filled_for {
                fill_assoc_legendre(big_m, x, legendre);
                filled_for = x;
            }
            let cos_m = &lt.cos_m[j * m1..(j + 1) * m1];
            let sin_m = &lt.sin_m[j * m1..(j + 1) * m1];
            let mut radial = uj;
            for n in 0..=big_m {
                let base = flat(n, 0);
                for m in 0..=n {
                    let jj = legendre[base + m] * radial;
                    out[2 * (base + m)] += jj * cos_m[m];
                    out[2 * (base + m) + 1] += jj * sin_m[m];
                }
                radial *= s.rho;
            }
        }
    }

    /// Moments `v_k`, `w_k` of block `p` for the vector `u`.
    pub fn compute_moments(&self, p: BlockRef, u: &[f64]) -> Result<Moments> {
        self.check_len(u.len())?;
        let k = self.order.len();
        let mut flat_out = vec![0.0; 2 * k];
        let mut legendre = vec![0.0; k];
        self.accumulate_moments(p.level, self.tree.bucket(p), u, &mut legendre, &mut flat_out);
        Ok(Moments {
            w: flat_out.iter().step_by(2).copied().collect(),
            v: flat_out.iter().skip(1).step_by(2).copied().collect(),
        })
    }

    /// All moments at a level with `d_{n,m}` folded in; `None` for empty blocks.
    fn scaled_level_moments(&self, level: usize, u: &[f64]) -> Vec<Option<Vec<f64>>> {
        let k = self.order.len();
        let d = self.tables.d.as_slice();
        (0..self.tree.num_blocks(level))
            .into_par_iter()
            .map_init(
                || vec![0.0; k],
                |legendre, b| {
                    let bucket = &self.tree.level(level).buckets[b];
                    if bucket.is_empty() {
                        return None;
                    }
                    let mut out = vec![0.0; 2 * k];
                    self.accumulate_moments(level, bucket, u, legendre, &mut out);
                    for (pair, dk) in out.chunks_exact_mut(2).zip(d) {
                        pair[0] *= dk;
                        pair[1] *= dk;
                    }
                    Some(out)
                },
            )
            .collect()
    }

    /// Far-field value at target `x` of a source block centered at `z`, given
    /// the block's interleaved moments already scaled by `d_{n,m}`.
    fn far_value(&self, x: Point2, z: Point2, scaled: &[f64], scratch: &mut Scratch) -> f64 {
        let t = self.params.shape();
        let dx = x.x1 - z.x1;
        let dy = x.x2 - z.x2;
        let planar_sq = dx * dx + dy * dy;
        let rho = (planar_sq + t * t).sqrt();
        let planar = planar_sq.sqrt();
        let (c1, s1) = if planar > 0.0 {
            (dx / planar, dy / planar)
        } else {
            (1.0, 0.0)
        };
        let big_m = self.order.max_degree();
        fill_assoc_legendre(big_m, t / rho, &mut scratch.legendre);
        trig_into(c1, s1, &mut scratch.cos_m, &mut scratch.sin_m);

        let inv = 1.0 / rho;
        let mut radial = inv;
        let mut acc = 0.0;
        for n in 0..=big_m {
            let base = flat(n, 0);
            let mut inner = 0.0;
            for m in 0..=n {
                let k = base + m;
                inner += scratch.legendre[k]
                    * (scratch.cos_m[m] * scaled[2 * k] + scratch.sin_m[m] * scaled[2 * k + 1]);
            }
            acc += inner * radial;
            radial *= inv;
        }
        acc
    }

    /// Adds block `p`'s far-field contribution to every target in its
    /// interaction list.
    pub fn apply_far(&self, p: BlockRef, moments: &Moments, b: &mut [f64]) -> Result<()> {
        self.check_len(b.len())?;
        let k = self.order.len();
        if moments.v.len() != k || moments.w.len() != k {
            return Err(Error::LengthMismatch {
                expected: k,
                got: moments.v.len().min(moments.w.len()),
            });
        }
        let d = self.tables.d.as_slice();
        let mut scaled = vec![0.0; 2 * k];
        for i in 0..k {
            scaled[2 * i] = d[i] * moments.w[i];
            scaled[2 * i + 1] = d[i] * moments.v[i];
        }
        let z = self.tree.center(p);
        let mut scratch = Scratch::new(self.order);
        for q in self.tree.interaction_list(p) {
            for &i in self.tree.bucket(q) {
                b[i] += self.far_value(self.points[i], z, &scaled, &mut scratch);
            }
        }
        Ok(())
    }

    /// Adds the direct finest-level contributions `A_ij u_j` for every pair in
    /// neighbouring blocks.
    pub fn apply_near(&self, u: &[f64], b: &mut [f64]) -> Result<()> {
        self.check_len(u.len())?;
        self.check_len(b.len())?;
        let finest = self.num_levels();
        for pb in 0..self.tree.num_blocks(finest) {
            let p = self.tree.block_ref(finest, pb);
            let sources = self.tree.bucket(p);
            for q in self.tree.near_list(p)? {
                for &i in self.tree.bucket(q) {
                    for &j in sources {
                        b[i] += self.params.eval_sq(self.points[i].dist_sq(&self.points[j])) * u[j];
                    }
                }
            }
        }
        Ok(())
    }

    /// Block-by-block product following the source-major loop order: moments
    /// and far field per level and block, then the near field.
    pub fn matvec_blockwise(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u.len())?;
        let mut b = vec![0.0; self.len()];
        for level in 1..=self.num_levels() {
            for pb in 0..self.tree.num_blocks(level) {
                let p = self.tree.block_ref(level, pb);
                if self.tree.bucket(p).is_empty() {
                    continue;
                }
                let moments = self.compute_moments(p, u)?;
                self.apply_far(p, &moments, &mut b)?;
            }
        }
        self.apply_near(u, &mut b)?;
        Ok(b)
    }

    /// `b = A u` within the truncation tolerance.
    pub fn fast_matvec(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut b = vec![0.0; self.len()];
        self.apply_into(u, &mut b)?;
        Ok(b)
    }

    /// Writes `A u` into `b`. Each entry is accumulated by a single task in a
    /// fixed order (levels, then source blocks row-major, then degree), so the
    /// result does not depend on the thread count.
    pub fn apply_into(&self, u: &[f64], b: &mut [f64]) -> Result<()> {
        self.check_len(u.len())?;
        self.check_len(b.len())?;
        let moments: Vec<_> = (1..=self.num_levels())
            .map(|level| self.scaled_level_moments(level, u))
            .collect();
        let near = &self.near;
        let u_sorted: Vec<f64> = near.perm.iter().map(|&j| u[j]).collect();
        let finest = self.num_levels();
        let t2 = self.params.shape() * self.params.shape();

        b.par_iter_mut().enumerate().for_each_init(
            || Scratch::new(self.order),
            |scratch, (i, bi)| {
                let x = self.points[i];
                let mut acc = 0.0;
                for level in 1..=finest {
                    let lt = &self.tables.levels[level - 1];
                    let q = self.tree.level(level).point_block[i];
                    for &p in self.tree.interaction_indices(level, q) {
                        if let Some(scaled) = &moments[level - 1][p] {
                            acc += self.far_value(x, lt.centers[p], scaled, scratch);
                        }
                    }
                }
                let q = self.tree.level(finest).point_block[i];
                for &p in self.tree.near_indices(q) {
                    let range = near.start[p]..near.start[p + 1];
                    acc += near.xs[range.clone()]
                        .iter()
                        .zip(&near.ys[range.clone()])
                        .zip(&u_sorted[range])
                        .map(|((&sx, &sy), &uj)| {
                            let dx = x.x1 - sx;
                            let dy = x.x2 - sy;
                            uj / (t2 + dx * dx + dy * dy).sqrt()
                        })
                        .sum::<f64>();
                }
                *bi = acc;
            },
        );
        Ok(())
    }

    /// Work performed by one application, counted from the partition.
    pub fn work_counts(&self) -> WorkCounts {
        let finest = self.num_levels();
        let mut far_pairs = 0;
        for level in 1..=finest {
            let lv = self.tree.level(level);
            for &q in &lv.point_block {
                far_pairs += self
                    .tree
                    .interaction_indices(level, q)
                    .iter()
                    .filter(|&&p| !lv.buckets[p].is_empty())
                    .count();
            }
        }
        let lv = self.tree.level(finest);
        let near_pairs = lv
            .point_block
            .iter()
            .map(|&q| {
                self.tree
                    .near_indices(q)
                    .iter()
                    .map(|&p| lv.buckets[p].len())
                    .sum::<usize>()
            })
            .sum();
        WorkCounts {
            moment_terms: self.len() * finest,
            far_pairs,
            near_pairs,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expansion::phi_imq;
    use crate::reference::{dense_matvec, halton2d, random_vector, rel_err_inf};
    use crate::specfun::ExpansionOrder;
    use approx::assert_relative_eq;

    fn unit() -> KernelParams {
        KernelParams::new(1.0).unwrap()
    }

    #[test]
    fn single_point_is_scalar() {
        let op = build_operator(&[Point2::new(0.3, 0.9)], KernelParams::new(0.5).unwrap(), 10, Levels::Auto).unwrap();
        assert_eq!(op.num_levels(), 1);
        let b = op.fast_matvec(&[1.5]).unwrap();
        assert_relative_eq!(b[0], 3.0, max_relative = 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(build_operator(&[], unit(), 10, Levels::Auto), Err(Error::EmptyInput)));
        let bad = [Point2::new(0.0, f64::INFINITY)];
        assert!(build_operator(&bad, unit(), 10, Levels::Auto).is_err());
        let pts = halton2d(10);
        assert!(matches!(build_operator(&pts, unit(), 10, Levels::Fixed(0)), Err(Error::InvalidLevels(0))));
        let op = build_operator(&pts, unit(), 10, Levels::Fixed(1)).unwrap();
        assert!(matches!(op.fast_matvec(&[0.0; 9]), Err(Error::LengthMismatch { expected: 10, got: 9 })));
    }

    #[test]
    fn zero_vector() {
        let pts = halton2d(500);
        let op = build_operator(&pts, unit(), 10, Levels::Fixed(2)).unwrap();
        assert!(op.fast_matvec(&vec![0.0; 500]).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn moments_basic_cases() {
        let pts = halton2d(400);
        let op = build_operator(&pts, unit(), 10, Levels::Fixed(2)).unwrap();
        let u = random_vector(400, 1);
        let zero = op.compute_moments(BlockRef::new(1, 2, 1), &vec![0.0; 400]).unwrap();
        assert!(zero.v.iter().chain(&zero.w).all(|&x| x == 0.0));

        for level in 1..=2 {
            for b in 0..op.tree().num_blocks(level) {
                let m = op.compute_moments(op.tree().block_ref(level, b), &u).unwrap();
                for n in 0..=10 {
                    assert_eq!(m.v[flat(n, 0)], 0.0);
                }
                assert!(m.v.iter().chain(&m.w).all(|x| x.is_finite()));
            }
        }
    }

    #[test]
    fn moments_match_pointwise_factors() {
        use crate::expansion::factor_pair;
        use crate::geometry::{lift_center, lift_pair};
        let pts = halton2d(300);
        let t = 0.8;
        let op = build_operator(&pts, KernelParams::new(t).unwrap(), 6, Levels::Fixed(1)).unwrap();
        let u = random_vector(300, 9);
        let p = BlockRef::new(1, 1, 2);
        let m = op.compute_moments(p, &u).unwrap();
        let z = op.tree().center(p);
        let order = ExpansionOrder::new(6);
        for n in 0..=6 {
            for mm in 0..=n {
                let k = order.flat_index(n, mm).unwrap();
                let (mut v, mut w) = (0.0, 0.0);
                for &j in op.tree().bucket(p) {
                    let (_, yl) = lift_pair(Point2::default(), pts[j], t).unwrap();
                    let rel = yl - lift_center(z, t).unwrap();
                    let f = factor_pair(n, mm, Point3::new(0.0, 0.0, 1.0), rel).unwrap();
                    let omega = to_spherical(rel).omega;
                    v += f.j * (mm as f64 * omega).sin() * u[j];
                    w += f.j * (mm as f64 * omega).cos() * u[j];
                }
                assert!((m.v[k] - v).abs() <= 1e-13 * (1.0 + v.abs()), "v n={n} m={mm}");
                assert!((m.w[k] - w).abs() <= 1e-13 * (1.0 + w.abs()), "w n={n} m={mm}");
            }
        }
    }

    #[test]
    fn source_at_center_moments() {
        // One point per level-1 block center of the unit square.
        let mut pts = Vec::new();
        for j in 0..4 {
            for i in 0..4 {
                pts.push(Point2::new(0.125 + 0.25 * i as f64, 0.125 + 0.25 * j as f64));
            }
        }
        pts.push(Point2::new(0.0, 0.0));
        pts.push(Point2::new(1.0, 1.0));
        let op = build_operator(&pts, unit(), 10, Levels::Fixed(1)).unwrap();
        let p = op.tree().block_of(1, 5);
        let mut u = vec![0.0; pts.len()];
        u[5] = 0.75;
        let z = op.tree().center(p);
        assert!((z.x1 - pts[5].x1).abs() < 1e-8 && (z.x2 - pts[5].x2).abs() < 1e-8);
        let m = op.compute_moments(p, &u).unwrap();
        assert_eq!(m.w[0], 0.75);
        // The bounding square is inflated, so the center is off by ~1e-9.
        assert!(m.w[1..].iter().chain(&m.v).all(|x| x.abs() <= 1e-8));
    }

    #[test]
    fn monopole_and_exact_center_far_field() {
        let pts = halton2d(200);
        let op0 = build_operator(&pts, unit(), 0, Levels::Fixed(1)).unwrap();
        let u = random_vector(200, 4);
        let p = BlockRef::new(1, 0, 0);
        let m = op0.compute_moments(p, &u).unwrap();
        let mut b = vec![0.0; 200];
        op0.apply_far(p, &m, &mut b).unwrap();
        let z = op0.tree().center(p);
        for q in op0.tree().interaction_list(p) {
            for &i in op0.tree().bucket(q) {
                let rho = (pts[i].dist_sq(&z) + 1.0).sqrt();
                assert_relative_eq!(b[i], m.w[0] / rho, max_relative = 1e-14);
            }
        }

        let unchanged = b.clone();
        op0.apply_far(p, &Moments::zeros(1), &mut b).unwrap();
        assert_eq!(b, unchanged);

        // A single unit source at the block center: the far field is exactly phi.
        let op = build_operator(&pts, unit(), 10, Levels::Fixed(1)).unwrap();
        let moments = Moments {
            v: vec![0.0; 66],
            w: (0..66).map(|k| if k == 0 { 1.0 } else { 0.0 }).collect(),
        };
        let mut b = vec![0.0; 200];
        op.apply_far(p, &moments, &mut b).unwrap();
        let z = op.tree().center(p);
        for q in op.tree().interaction_list(p) {
            for &i in op.tree().bucket(q) {
                assert_relative_eq!(b[i], phi_imq(pts[i], z, &unit()), max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn near_field_alone_on_degenerate_tree() {
        // Coincident sites collapse into a single block: nothing is far.
        let pts = vec![Point2::new(0.4, 0.6); 5];
        let params = KernelParams::new(0.3).unwrap();
        let op = build_operator(&pts, params, 10, Levels::Fixed(1)).unwrap();
        assert_eq!(op.work_counts().far_pairs, 0);
        let u = random_vector(5, 2);
        let mut b = vec![0.0; 5];
        op.apply_near(&u, &mut b).unwrap();
        let dense = dense_matvec(&pts, &params, &u).unwrap();
        assert!(rel_err_inf(&b, &dense).unwrap() < 1e-15);
        assert_eq!(op.fast_matvec(&u).unwrap(), b);
    }

    #[test]
    fn adjacent_pair_is_direct() {
        let pts = [Point2::new(0.24, 0.1), Point2::new(0.26, 0.1), Point2::new(0.9, 0.9)];
        let op = build_operator(&pts, unit(), 10, Levels::Fixed(1)).unwrap();
        let mut u = vec![0.0; 3];
        u[1] = 1.0;
        let mut b = vec![0.0; 3];
        op.apply_near(&u, &mut b).unwrap();
        assert_relative_eq!(b[0], phi_imq(pts[0], pts[1], &unit()), max_relative = 1e-15);
        assert_relative_eq!(b[1], 1.0, max_relative = 1e-15);
    }

    #[test]
    fn blockwise_and_targetwise_agree() {
        let pts = halton2d(1500);
        let op = build_operator(&pts, KernelParams::new(0.5).unwrap(), 10, Levels::Fixed(3)).unwrap();
        let u = random_vector(1500, 8);
        let a = op.fast_matvec(&u).unwrap();
        let b = op.matvec_blockwise(&u).unwrap();
        assert!(rel_err_inf(&a, &b).unwrap() <= 1e-13);
    }

    #[test]
    fn basis_vectors_reproduce_columns() {
        let pts = halton2d(600);
        let params = unit();
        let op = build_operator(&pts, params, 10, Levels::Fixed(2)).unwrap();
        for j in [0, 17, 301, 599] {
            let mut e = vec![0.0; 600];
            e[j] = 1.0;
            let col = op.fast_matvec(&e).unwrap();
            let exact = dense_matvec(&pts, &params, &e).unwrap();
            let dev = col.iter().zip(&exact).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            // Level-one worst case of the truncation bound.
            assert!(dev <= 2.87e-9, "column {j}: {dev}");
        }
    }

    #[test]
    fn matches_dense_small() {
        for &t in &[0.5, 1.0, 2.0] {
            for levels in [1, 2] {
                let pts = halton2d(2000);
                let params = KernelParams::new(t).unwrap();
                let op = build_operator(&pts, params, 10, Levels::Fixed(levels)).unwrap();
                let u = random_vector(2000, 13);
                let fast = op.fast_matvec(&u).unwrap();
                let dense = dense_matvec(&pts, &params, &u).unwrap();
                let e = rel_err_inf(&fast, &dense).unwrap();
                assert!(e <= 5e-8, "t={t} L={levels}: {e}");
            }
        }
    }

    #[test]
    fn cost_bound_values() {
        let k10 = 66.0;
        assert_relative_eq!(cost_upper_bound(100, 10, 1), 100.0 * (109.0 * k10 + 900.0 / 16.0));
        assert!(cost_upper_bound(100_000, 10, 2) < cost_upper_bound(100_000, 10, 5));
        // Convex in L.
        let g: Vec<f64> = (1..8).map(|l| cost_upper_bound(100_000, 10, l)).collect();
        for w in g.windows(3) {
            assert!(w[0] + w[2] >= 2.0 * w[1]);
        }
        let first = |m| cost_upper_bound(1, m, 1) - 9.0 / 16.0;
        assert_relative_eq!(first(14) / first(10), 120.0 / 66.0, max_relative = 1e-12);
    }

    #[test]
    fn auto_level_values() {
        assert_eq!(auto_level(20_000, 10), 1);
        for n in [40_000, 60_000, 80_000, 100_000] {
            assert_eq!(auto_level(n, 10), 2, "N={n}");
        }
        assert_eq!(auto_level(16, 10), 1);
        assert_eq!(auto_level(1, 10), 1);
    }

    #[test]
    fn auto_level_never_deeper_than_points() {
        for n in [1usize, 15, 16, 63, 64, 255, 256, 10_000] {
            for m in [0, 2, 10] {
                let l = auto_level(n, m);
                assert!(l == 1 || n >> (2 * (l + 1)) >= 1, "N={n} M={m} L={l}");
            }
        }
    }
}
