//! The inverse multiquadric kernel, the Laplace Green's function, its truncated
//! spherical expansion and the separated target/source factors used by the
//! fast operator.

use crate::error::{Error, Result};
use crate::geometry::{lift_center, lift_pair, to_spherical, Point2, Point3};
use crate::specfun::{fill_assoc_legendre, flat, CoeffTable, ExpansionOrder};
use crate::specfun::assoc_legendre;

/// Shape parameter of the inverse multiquadric kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelParams {
    t: f64,
}

impl KernelParams {
    pub fn new(t: f64) -> Result<Self> {
        if t > 0.0 && t.is_finite() {
            Ok(Self { t })
        } else {
            Err(Error::InvalidShape(t))
        }
    }

    pub fn shape(&self) -> f64 {
        self.t
    }

    /// `1/sqrt(t^2 + r^2)` for a squared planar distance `r^2`.
    #[inline]
    pub fn eval_sq(&self, dist_sq: f64) -> f64 {
        1.0 / (self.t * self.t + dist_sq).sqrt()
    }
}

/// `phi(|x - y|) = 1/sqrt(t^2 + |x - y|^2)`.
pub fn phi_imq(x: Point2, y: Point2, params: &KernelParams) -> f64 {
    params.eval_sq(x.dist_sq(&y))
}

/// `G(X; Y) = 1/|X - Y|`.
pub fn green_exact(x: Point3, y: Point3) -> Result<f64> {
    let d = x.dist(&y);
    if d == 0.0 {
        return Err(Error::Singularity);
    }
    Ok(1.0 / d)
}

/// Truncated expansion of `1/|X - Y|` keeping degrees `n <= max_degree`.
///
/// Uses the angle-difference form `cos(m(omega_x - omega_y))` and picks the
/// branch by which radius is larger.
pub fn green_truncated(x: Point3, y: Point3, max_degree: usize) -> Result<f64> {
    let sx = to_spherical(x);
    let sy = to_spherical(y);
    if sx.rho == sy.rho {
        return Err(Error::EqualRadii(sx.rho));
    }
    let (inner, outer) = if sx.rho < sy.rho {
        (sx.rho, sy.rho)
    } else {
        (sy.rho, sx.rho)
    };
    let order = ExpansionOrder::new(max_degree);
    let d = CoeffTable::new(order);
    let mut px = vec![0.0; order.len()];
    let mut py = vec![0.0; order.len()];
    fill_assoc_legendre(max_degree, sx.theta.cos(), &mut px);
    fill_assoc_legendre(max_degree, sy.theta.cos(), &mut py);
    let dw = sx.omega - sy.omega;
    let ratio = inner / outer;

    let mut total = 0.0;
    let mut radial = 1.0 / outer;
    for n in 0..=max_degree {
        let mut inner_sum = 0.0;
        for m in 0..=n {
            let k = flat(n, m);
            inner_sum += d.as_slice()[k] * py[k] * px[k] * (m as f64 * dw).cos();
        }
        total += inner_sum * radial;
        radial *= ratio;
    }
    Ok(total)
}

/// Upper bound `r^{M+1} / (rho_major (1 - r))` on the truncation error.
///
/// `rho_major` is the larger of the two radii and `r` the ratio of the smaller
/// to the larger; a zero ratio gives a zero bound.
pub fn truncation_error_bound(rho_major: f64, r: f64, max_degree: usize) -> Result<f64> {
    if !(rho_major > 0.0 && rho_major.is_finite()) {
        return Err(Error::InvalidRadius(rho_major));
    }
    if !(0.0..1.0).contains(&r) {
        return Err(Error::RatioOutOfRange(r));
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    Ok(r.powi(max_degree as i32 + 1) / (rho_major * (1.0 - r)))
}

/// Target factor `h_{n,m}` and source factor `j_{n,m}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FactorPair {
    pub h: f64,
    pub j: f64,
}

/// `h_{n,m}(X_rel) = P_n^m(cos theta) / rho^{n+1}` and
/// `j_{n,m}(Y_rel) = P_n^m(cos theta) rho^n`.
///
/// `j` at the origin is its continuous limit: 1 for `n = 0` and 0 otherwise.
pub fn factor_pair(n: usize, m: usize, x_rel: Point3, y_rel: Point3) -> Result<FactorPair> {
    let sx = to_spherical(x_rel);
    if sx.rho == 0.0 {
        return Err(Error::InvalidRadius(0.0));
    }
    let h = assoc_legendre(n, m, cos_polar(x_rel, sx.rho))? / sx.rho.powi(n as i32 + 1);
    let sy = to_spherical(y_rel);
    let j = if sy.rho == 0.0 {
        if n == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        assoc_legendre(n, m, cos_polar(y_rel, sy.rho))? * sy.rho.powi(n as i32)
    };
    Ok(FactorPair { h, j })
}

// Taken from the Cartesian component so in-plane offsets give exactly zero.
fn cos_polar(v: Point3, rho: f64) -> f64 {
    (v.x3 / rho).clamp(-1.0, 1.0)
}

/// Approximates `phi(|x - y|)` by the expansion translated to the center `z`,
/// evaluated in the separated cosine/sine form.
///
/// Requires the lifted source offset `|Y - Z|` to be strictly smaller than
/// the lifted target offset `|X - Z|`.
pub fn translated_kernel_approx(
    x: Point2,
    y: Point2,
    z: Point2,
    params: &KernelParams,
    max_degree: usize,
) -> Result<f64> {
    let t = params.shape();
    let (xl, yl) = lift_pair(x, y, t)?;
    let zl = lift_center(z, t)?;
    let sx = to_spherical(xl - zl);
    let sy = to_spherical(yl - zl);
    if sx.rho == sy.rho {
        return Err(Error::EqualRadii(sx.rho));
    }
    if sy.rho > sx.rho {
        return Err(Error::RadiusOrder {
            source_radius: sy.rho,
            target_radius: sx.rho,
        });
    }

    let order = ExpansionOrder::new(max_degree);
    let d = CoeffTable::new(order);
    let mut px = vec![0.0; order.len()];
    let mut py = vec![0.0; order.len()];
    fill_assoc_legendre(max_degree, sx.theta.cos(), &mut px);
    fill_assoc_legendre(max_degree, sy.theta.cos(), &mut py);

    let mut cos_part = 0.0;
    let mut sin_part = 0.0;
    let mut h_radial = 1.0 / sx.rho;
    let mut j_radial = 1.0;
    for n in 0..=max_degree {
        for m in 0..=n {
            let k = flat(n, m);
            let h = px[k] * h_radial;
            let j = py[k] * j_radial;
            let (sx_m, cx_m) = (m as f64 * sx.omega).sin_cos();
            let (sy_m, cy_m) = (m as f64 * sy.omega).sin_cos();
            cos_part += d.as_slice()[k] * h * cx_m * j * cy_m;
            sin_part += d.as_slice()[k] * h * sx_m * j * sy_m;
        }
        h_radial /= sx.rho;
        j_radial *= sy.rho;
    }
    Ok(cos_part + sin_part)
}
