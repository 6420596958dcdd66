//! Planar data sites, their lift into three dimensions and spherical coordinates.
//!
//! Targets are lifted to the plane `x3 = t/2` and sources to `x3 = -t/2`, so the
//! Euclidean distance between lifted points is `sqrt(|x - y|^2 + t^2)` and the
//! inverse multiquadric kernel becomes the Laplace Green's function `1/|X - Y|`.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::ops::Sub;

use crate::error::{Error, Result};

/// A data site in the plane.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point2 {
    pub x1: f64,
    pub x2: f64,
}

impl Point2 {
    pub const fn new(x1: f64, x2: f64) -> Self {
        Self { x1, x2 }
    }

    pub fn is_finite(&self) -> bool {
        self.x1.is_finite() && self.x2.is_finite()
    }

    pub fn dist_sq(&self, other: &Point2) -> f64 {
        let d1 = self.x1 - other.x1;
        let d2 = self.x2 - other.x2;
        d1 * d1 + d2 * d2
    }
}

impl Sub for Point2 {
    type Output = Point2;

    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x1 - rhs.x1, self.x2 - rhs.x2)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point3 {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
}

impl Point3 {
    pub const fn new(x1: f64, x2: f64, x3: f64) -> Self {
        Self { x1, x2, x3 }
    }

    pub fn norm_sq(&self) -> f64 {
        self.x1 * self.x1 + self.x2 * self.x2 + self.x3 * self.x3
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist(&self, other: &Point3) -> f64 {
        (*self - *other).norm()
    }
}

impl Sub for Point3 {
    type Output = Point3;

    fn sub(self, rhs: Point3) -> Point3 {
        Point3::new(self.x1 - rhs.x1, self.x2 - rhs.x2, self.x3 - rhs.x3)
    }
}

/// Spherical coordinates `(rho, theta, omega)` with `theta` the polar angle
/// measured from the positive `x3` axis and `omega` the azimuth in `[0, 2pi)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphericalCoord {
    pub rho: f64,
    pub theta: f64,
    pub omega: f64,
}

impl SphericalCoord {
    pub fn to_cartesian(&self) -> Point3 {
        let (st, ct) = self.theta.sin_cos();
        let (so, co) = self.omega.sin_cos();
        Point3::new(self.rho * st * co, self.rho * st * so, self.rho * ct)
    }
}

fn check_shape(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidShape(t))
    }
}

/// Lifts a (target, source) pair onto the two planes `x3 = +t/2` and `x3 = -t/2`.
pub fn lift_pair(x: Point2, y: Point2, t: f64) -> Result<(Point3, Point3)> {
    check_shape(t)?;
    let half = 0.5 * t;
    Ok((Point3::new(x.x1, x.x2, half), Point3::new(y.x1, y.x2, -half)))
}

/// Lifts an expansion center onto the source plane.
pub fn lift_center(z: Point2, t: f64) -> Result<Point3> {
    check_shape(t)?;
    Ok(Point3::new(z.x1, z.x2, -0.5 * t))
}

/// Azimuth of the planar vector `(a, b)` in `[0, 2pi)`.
pub(crate) fn azimuth(a: f64, b: f64) -> f64 {
    let w = b.atan2(a);
    if w < 0.0 {
        // atan2 can return -0.0 or a tiny negative that rounds to 2pi.
        let shifted = w + TAU;
        if shifted >= TAU {
            0.0
        } else {
            shifted
        }
    } else {
        w
    }
}

/// Converts a Cartesian vector to spherical coordinates.
///
/// The origin maps to `(0, pi/2, 0)`.
pub fn to_spherical(v: Point3) -> SphericalCoord {
    let rho = v.norm();
    if rho == 0.0 {
        return SphericalCoord {
            rho: 0.0,
            theta: FRAC_PI_2,
            omega: 0.0,
        };
    }
    let c = (v.x3 / rho).clamp(-1.0, 1.0);
    SphericalCoord {
        rho,
        theta: c.acos(),
        omega: azimuth(v.x1, v.x2),
    }
}
