//! Multilevel uniform partition of the bounding square.
//!
//! Level `l` splits the square into `2^{l+1} x 2^{l+1}` blocks. A source block
//! `p` interacts through its expansion with the blocks of its interaction list:
//! at level 1 every block at Chebyshev index distance at least 2, and at deeper
//! levels the children of the parent's neighbours that are not themselves
//! neighbours of `p`. Pairs still adjacent at the finest level are handled
//! directly through the near list.

use crate::error::{Error, Result};
use crate::expansion::KernelParams;
use crate::geometry::Point2;

/// Deepest supported partition; `4^{13}` blocks is already far beyond useful.
pub const MAX_LEVELS: usize = 12;

const MIN_SIDE: f64 = 1e-9;
const SIDE_INFLATION: f64 = 1e-9;

/// Axis-aligned square with half-open cells `[origin, origin + side)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Square {
    pub origin: Point2,
    pub side: f64,
}

impl Square {
    pub fn new(origin: Point2, side: f64) -> Result<Self> {
        if !(side > 0.0 && side.is_finite()) {
            return Err(Error::InvalidRadius(side));
        }
        Ok(Self { origin, side })
    }

    pub fn unit() -> Self {
        Self {
            origin: Point2::new(0.0, 0.0),
            side: 1.0,
        }
    }

    pub fn contains(&self, p: &Point2) -> bool {
        let ox = p.x1 - self.origin.x1;
        let oy = p.x2 - self.origin.x2;
        (0.0..self.side).contains(&ox) && (0.0..self.side).contains(&oy)
    }
}

/// Smallest square holding all points, with the shorter axis centered.
pub fn bounding_square(points: &[Point2]) -> Result<Square> {
    let first = points.first().ok_or(Error::EmptyInput)?;
    let (mut lo, mut hi) = (*first, *first);
    for (index, p) in points.iter().enumerate() {
        if !p.is_finite() {
            return Err(Error::NonFiniteCoordinate { index });
        }
        lo.x1 = lo.x1.min(p.x1);
        lo.x2 = lo.x2.min(p.x2);
        hi.x1 = hi.x1.max(p.x1);
        hi.x2 = hi.x2.max(p.x2);
    }
    let ex = hi.x1 - lo.x1;
    let ey = hi.x2 - lo.x2;
    let side = (ex.max(ey) * (1.0 + SIDE_INFLATION)).max(MIN_SIDE);
    let origin = Point2::new(lo.x1 - 0.5 * (side - ex), lo.x2 - 0.5 * (side - ey));
    Square::new(origin, side)
}

/// A block `(i, j)` at a level, `i` indexing along `x1` and `j` along `x2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockRef {
    pub level: usize,
    pub i: usize,
    pub j: usize,
}

impl BlockRef {
    pub const fn new(level: usize, i: usize, j: usize) -> Self {
        Self { level, i, j }
    }
}

/// Number of blocks per side at a level.
pub const fn grid_dim(level: usize) -> usize {
    1 << (level + 1)
}

fn chebyshev(a: (usize, usize), b: (usize, usize)) -> usize {
    a.0.abs_diff(b.0).max(a.1.abs_diff(b.1))
}

#[derive(Clone, Debug)]
pub(crate) struct Level {
    pub(crate) dim: usize,
    pub(crate) cell: f64,
    /// Point indices per block, row-major (`j * dim + i`), ascending.
    pub(crate) buckets: Vec<Vec<usize>>,
    pub(crate) point_block: Vec<usize>,
    pub(crate) interaction: Vec<Vec<usize>>,
}

/// The full partition: buckets, centers and interaction/near lists per level.
#[derive(Clone, Debug)]
pub struct BlockTree {
    square: Square,
    levels: Vec<Level>,
    near: Vec<Vec<usize>>,
}

impl BlockTree {
    pub fn square(&self) -> Square {
        self.square
    }

    /// Finest level `L`.
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub(crate) fn level(&self, level: usize) -> &Level {
        &self.levels[level - 1]
    }

    pub fn cell_side(&self, level: usize) -> f64 {
        self.level(level).cell
    }

    pub fn num_blocks(&self, level: usize) -> usize {
        let d = grid_dim(level);
        d * d
    }

    pub fn block_index(&self, b: BlockRef) -> usize {
        b.j * grid_dim(b.level) + b.i
    }

    pub fn block_ref(&self, level: usize, index: usize) -> BlockRef {
        let d = grid_dim(level);
        BlockRef::new(level, index % d, index / d)
    }

    fn check(&self, b: BlockRef) {
        assert!(
            b.level >= 1 && b.level <= self.num_levels() && b.i < grid_dim(b.level) && b.j < grid_dim(b.level),
            "block {b:?} outside the tree"
        );
    }

    pub fn center(&self, b: BlockRef) -> Point2 {
        let cell = self.cell_side(b.level);
        Point2::new(
            self.square.origin.x1 + (b.i as f64 + 0.5) * cell,
            self.square.origin.x2 + (b.j as f64 + 0.5) * cell,
        )
    }

    /// Point indices inside a block.
    pub fn bucket(&self, b: BlockRef) -> &[usize] {
        self.check(b);
        &self.level(b.level).buckets[self.block_index(b)]
    }

    /// Block that holds point `index` at a level.
    pub fn block_of(&self, level: usize, index: usize) -> BlockRef {
        self.block_ref(level, self.level(level).point_block[index])
    }

    /// Well-separated blocks served by `p`'s expansion, in row-major order.
    pub fn interaction_list(&self, p: BlockRef) -> Vec<BlockRef> {
        self.check(p);
        self.level(p.level).interaction[self.block_index(p)]
            .iter()
            .map(|&q| self.block_ref(p.level, q))
            .collect()
    }

    pub(crate) fn interaction_indices(&self, level: usize, block: usize) -> &[usize] {
        &self.level(level).interaction[block]
    }

    /// Finest-level neighbours of `p` (including `p`).
    pub fn near_list(&self, p: BlockRef) -> Result<Vec<BlockRef>> {
        let finest = self.num_levels();
        if p.level != finest {
            return Err(Error::NotFinestLevel {
                level: p.level,
                finest,
            });
        }
        self.check(p);
        Ok(self.near[self.block_index(p)]
            .iter()
            .map(|&q| self.block_ref(finest, q))
            .collect())
    }

    pub(crate) fn near_indices(&self, block: usize) -> &[usize] {
        &self.near[block]
    }

    /// Largest lifted radius ratio over all well-separated pairs, for a
    /// vertical offset `t >= 0` between target and source planes.
    ///
    /// Sources sit anywhere in `p` (at most half a diagonal from the center);
    /// targets sit anywhere in the closed blocks of the interaction list.
    pub fn separation_report(&self, t: f64) -> SeparationReport {
        let per_level = (1..=self.num_levels())
            .map(|level| {
                let lv = self.level(level);
                let s = lv.cell;
                let source_radius = s / std::f64::consts::SQRT_2;
                let mut worst: f64 = 0.0;
                for (p, list) in lv.interaction.iter().enumerate() {
                    let (pi, pj) = (p % lv.dim, p / lv.dim);
                    for &q in list {
                        let (qi, qj) = (q % lv.dim, q / lv.dim);
                        let gap = |a: usize, b: usize| {
                            let k = a.abs_diff(b) as f64;
                            if k == 0.0 {
                                0.0
                            } else {
                                (k - 0.5) * s
                            }
                        };
                        let gx = gap(pi, qi);
                        let gy = gap(pj, qj);
                        let target_radius = (gx * gx + gy * gy + t * t).sqrt();
                        worst = worst.max(source_radius / target_radius);
                    }
                }
                worst
            })
            .collect::<Vec<_>>();
        let max_ratio = per_level.iter().copied().fold(0.0, f64::max);
        SeparationReport {
            per_level,
            max_ratio,
        }
    }
}

/// Worst lifted radius ratio per level.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparationReport {
    pub per_level: Vec<f64>,
    pub max_ratio: f64,
}

impl SeparationReport {
    /// The expansion criterion is a ratio strictly below one half.
    pub fn is_valid(&self) -> bool {
        self.max_ratio < 0.5
    }
}

/// Separation report for the kernel's shape parameter.
pub fn verify_separation(tree: &BlockTree, params: &KernelParams) -> SeparationReport {
    tree.separation_report(params.shape())
}

fn level_one_interactions(dim: usize) -> Vec<Vec<usize>> {
    (0..dim * dim)
        .map(|p| {
            let pc = (p % dim, p / dim);
            (0..dim * dim)
                .filter(|&q| chebyshev(pc, (q % dim, q / dim)) >= 2)
                .collect()
        })
        .collect()
}

fn neighbours(dim: usize, c: (usize, usize)) -> impl Iterator<Item = (usize, usize)> {
    let lo_i = c.0.saturating_sub(1);
    let hi_i = (c.0 + 1).min(dim - 1);
    let lo_j = c.1.saturating_sub(1);
    let hi_j = (c.1 + 1).min(dim - 1);
    (lo_j..=hi_j).flat_map(move |j| (lo_i..=hi_i).map(move |i| (i, j)))
}

fn deeper_interactions(dim: usize) -> Vec<Vec<usize>> {
    let parent_dim = dim / 2;
    (0..dim * dim)
        .map(|p| {
            let pc = (p % dim, p / dim);
            let mut list = Vec::with_capacity(27);
            for (ai, aj) in neighbours(parent_dim, (pc.0 / 2, pc.1 / 2)) {
                for (ci, cj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    let q = (2 * ai + ci, 2 * aj + cj);
                    if chebyshev(pc, q) >= 2 {
                        list.push(q.1 * dim + q.0);
                    }
                }
            }
            list.sort_unstable();
            list
        })
        .collect()
}

/// Buckets the points into every level of the partition and builds the
/// interaction and near lists.
pub fn build_tree(points: &[Point2], square: Square, levels: usize) -> Result<BlockTree> {
    if !(1..=MAX_LEVELS).contains(&levels) {
        return Err(Error::InvalidLevels(levels));
    }
    for (index, p) in points.iter().enumerate() {
        if !p.is_finite() {
            return Err(Error::NonFiniteCoordinate { index });
        }
        if !square.contains(p) {
            return Err(Error::PointOutsideSquare { index });
        }
    }

    let levels = (1..=levels)
        .map(|level| {
            let dim = grid_dim(level);
            let cell = square.side / dim as f64;
            let cell_of = |v: f64, o: f64| {
                // Multiplying by dim/side keeps exact edges exact for
                // power-of-two side lengths.
                let c = ((v - o) / square.side * dim as f64).floor() as usize;
                c.min(dim - 1)
            };
            let mut buckets = vec![Vec::new(); dim * dim];
            let point_block = points
                .iter()
                .enumerate()
                .map(|(idx, p)| {
                    let b = cell_of(p.x2, square.origin.x2) * dim + cell_of(p.x1, square.origin.x1);
                    buckets[b].push(idx);
                    b
                })
                .collect();
            let interaction = if level == 1 {
                level_one_interactions(dim)
            } else {
                deeper_interactions(dim)
            };
            Level {
                dim,
                cell,
                buckets,
                point_block,
                interaction,
            }
        })
        .collect::<Vec<_>>();

    let finest_dim = levels.last().expect("at least one level").dim;
    let near = (0..finest_dim * finest_dim)
        .map(|p| {
            neighbours(finest_dim, (p % finest_dim, p / finest_dim))
                .map(|(i, j)| j * finest_dim + i)
                .collect()
        })
        .collect();

    Ok(BlockTree {
        square,
        levels,
        near,
    })
}
