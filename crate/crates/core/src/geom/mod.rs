//! Perspective geometry: DLT homography estimation, robust consensus fitting
//! and inverse-mapping warps.
//!
//! A [`Homography`] maps source coordinates to destination coordinates,
//! `p' ~ H p`. In the deidentification pipeline the source is always the
//! generated-image frame and the destination the video frame.

mod dlt;
pub mod linalg;
mod robust;
mod warp;

pub use dlt::estimate_homography_dlt;
pub use robust::{robust_homography, RobustFitConfig};
pub use warp::warp_image;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use linalg::{mat3_det, mat3_inverse, mat3_mul, Mat3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn dist(&self, other: &Point2) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// 3×3 projective transform with `m[2][2] == 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography {
    m: Mat3,
}

const DET_TOL: f64 = 1e-12;

impl Homography {
    /// Normalizes `m` so the bottom-right entry is 1 and checks invertibility.
    pub fn new(m: Mat3) -> Result<Self> {
        let h22 = m[2][2];
        let norm = m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || h22.abs() <= 1e-14 * norm {
            return Err(Error::Degenerate(
                "homography has a vanishing bottom-right entry".into(),
            ));
        }
        let mut out = m;
        for v in out.iter_mut().flatten() {
            *v /= h22;
        }
        if !(mat3_det(&out).abs() > DET_TOL) {
            return Err(Error::NotInvertible);
        }
        Ok(Homography { m: out })
    }

    pub fn identity() -> Self {
        Homography {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Homography {
            m: [[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]],
        }
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.m
    }

    pub fn inverse(&self) -> Result<Homography> {
        let inv = mat3_inverse(&self.m, DET_TOL).ok_or(Error::NotInvertible)?;
        Homography::new(inv)
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn after(&self, first: &Homography) -> Result<Homography> {
        Homography::new(mat3_mul(&self.m, &first.m))
    }

    /// Largest absolute entry-wise difference to `other`.
    pub fn max_abs_diff(&self, other: &Homography) -> f64 {
        self.m
            .iter()
            .flatten()
            .zip(other.m.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    #[inline]
    pub(crate) fn project_raw(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let m = &self.m;
        (
            m[0][0] * x + m[0][1] * y + m[0][2],
            m[1][0] * x + m[1][1] * y + m[1][2],
            m[2][0] * x + m[2][1] * y + m[2][2],
        )
    }
}

/// Maps a point through `h` with perspective division.
pub fn apply_homography(p: Point2, h: &Homography) -> Result<Point2> {
    let (x, y, w) = h.project_raw(p.x, p.y);
    if w.abs() < 1e-12 {
        return Err(Error::PointAtInfinity(w));
    }
    Ok(Point2::new(x / w, y / w))
}
