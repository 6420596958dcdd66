//! Fast matrix-vector products for inverse multiquadric RBF interpolation.
//!
//! The kernel `1/sqrt(t^2 + |x - y|^2)` is the Laplace Green's function between
//! points lifted to the planes `x3 = +t/2` and `x3 = -t/2`. Its spherical
//! expansion, translated to block centers of a uniform multilevel partition,
//! separates source and target contributions so `A u` costs `O(N log N)`
//! instead of `O(N^2)`.
//!
//! ```
//! use imq_fastmv::{build_operator, dense_matvec, halton2d, random_vector, rel_err_inf};
//! use imq_fastmv::{KernelParams, Levels};
//!
//! let points = halton2d(2_000);
//! let params = KernelParams::new(1.0).unwrap();
//! let op = build_operator(&points, params, 10, Levels::Auto).unwrap();
//! let u = random_vector(points.len(), 42);
//! let fast = op.fast_matvec(&u).unwrap();
//! let dense = dense_matvec(&points, &params, &u).unwrap();
//! assert!(rel_err_inf(&fast, &dense).unwrap() < 1e-8);
//! ```

pub mod cli;
pub mod error;
pub mod expansion;
pub mod fastmv;
pub mod geometry;
pub mod partition;
pub mod reference;
pub mod solver;
pub mod specfun;

pub use error::{Error, Result};
pub use expansion::{
    factor_pair, green_exact, green_truncated, phi_imq, translated_kernel_approx,
    truncation_error_bound, FactorPair, KernelParams,
};
pub use fastmv::{
    auto_level, build_operator, cost_upper_bound, FastOperator, Levels, Moments, WorkCounts,
};
pub use geometry::{lift_center, lift_pair, to_spherical, Point2, Point3, SphericalCoord};
pub use partition::{
    bounding_square, build_tree, verify_separation, BlockRef, BlockTree, SeparationReport, Square,
};
pub use reference::{
    assemble_dense, dense_matvec, dense_solve, halton2d, random_vector, read_points,
    rel_err_inf, write_points, DenseMatrix,
};
pub use solver::{
    evaluate_interpolant, gmres, iterative_solve, Interpolant, LinearOperator, SolveReport,
    SolverOptions,
};
pub use specfun::{assoc_legendre, coeff_d, legendre, neumann, CoeffTable, ExpansionOrder};
