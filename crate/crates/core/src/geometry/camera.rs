//! Pinhole camera model.
//!
//! Pixel centers sit at integer coordinates, so a `W`-pixel-wide image spans
//! continuous `u` in `[0, W - 1]`. Projection:
//!
//! ```text
//! u = fx * x / z + cx
//! v = fy * y / z + cy
//! ```

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

/// Continuous pixel position plus the camera-frame depth of the point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidIntrinsics("non-finite parameter".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx = {}, fy = {})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidIntrinsics("image size must be non-zero".into()));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64) {
            return Err(Error::InvalidIntrinsics(format!(
                "cx = {} outside (0, {})",
                self.cx, self.width
            )));
        }
        if !(self.cy > 0.0 && self.cy < self.height as f64) {
            return Err(Error::InvalidIntrinsics(format!(
                "cy = {} outside (0, {})",
                self.cy, self.height
            )));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn project(&self, point: &Vector3<f64>) -> Result<Projection> {
        if !(point.z > 0.0) {
            return Err(Error::BehindCamera { z: point.z });
        }
        Ok(self.project_unchecked(point))
    }

    #[inline]
    pub(crate) fn project_unchecked(&self, p: &Vector3<f64>) -> Projection {
        Projection {
            u: self.fx * p.x / p.z + self.cx,
            v: self.fy * p.y / p.z + self.cy,
            depth: p.z,
        }
    }

    pub fn backproject(&self, u: f64, v: f64, depth: f64) -> Result<Vector3<f64>> {
        if !(depth.is_finite() && depth > 0.0) {
            return Err(Error::InvalidDepth { depth });
        }
        Ok(self.backproject_unchecked(u, v, depth))
    }

    #[inline]
    pub(crate) fn backproject_unchecked(&self, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        self.ray(u, v) * depth
    }

    /// Viewing ray through `(u, v)`, scaled so that its z-component is 1.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// True when `(u, v)` lies inside the sampling domain `[0, W-1] x [0, H-1]`.
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u <= (self.width - 1) as f64 && v <= (self.height - 1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k100() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, 101, 101).unwrap()
    }

    #[test]
    fn projects_optical_axis_to_principal_point() {
        let p = k100().project(&Vector3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!((p.u, p.v, p.depth), (50.0, 50.0, 2.0));
    }

    #[test]
    fn projects_offset_point() {
        let p = k100().project(&Vector3::new(1.0, 0.0, 2.0)).unwrap();
        assert_eq!((p.u, p.v), (100.0, 50.0));
    }

    #[test]
    fn random_points_match_scalar_formula() {
        let k = CameraIntrinsics::new(123.4, 98.7, 61.2, 40.3, 128, 80).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let (x, y, z) = (
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(0.1..50.0),
            );
            let p = k.project(&Vector3::new(x, y, z)).unwrap();
            let u = 123.4 * (x / z) + 61.2;
            let v = 98.7 * (y / z) + 40.3;
            assert!((p.u - u).abs() < 1e-9 && (p.v - v).abs() < 1e-9);
            assert_eq!(p.depth, z);
        }
    }

    #[test]
    fn behind_camera_is_an_error() {
        assert!(matches!(
            k100().project(&Vector3::new(0.0, 0.0, 0.0)),
            Err(Error::BehindCamera { .. })
        ));
        assert!(k100().project(&Vector3::new(0.0, 0.0, -1.0)).is_err());
    }

    #[test]
    fn backprojects_principal_point_and_offset() {
        let k = k100();
        assert_eq!(k.backproject(50.0, 50.0, 3.0).unwrap(), Vector3::new(0.0, 0.0, 3.0));
        assert_eq!(k.backproject(100.0, 50.0, 2.0).unwrap(), Vector3::new(1.0, 0.0, 2.0));
        assert!(matches!(k.backproject(1.0, 1.0, 0.0), Err(Error::InvalidDepth { .. })));
    }

    #[test]
    fn round_trip_thousand_pixels() {
        let k = CameraIntrinsics::new(88.0, 91.0, 40.5, 30.5, 80, 60).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let u = rng.random_range(0.0..79.0);
            let v = rng.random_range(0.0..59.0);
            let d = rng.random_range(0.5..80.0);
            let p = k.project(&k.backproject(u, v, d).unwrap()).unwrap();
            assert!((p.u - u).abs() <= 1e-9 && (p.v - v).abs() <= 1e-9);
            assert!((p.depth - d).abs() <= 1e-9);
        }
    }

    #[test]
    fn rejects_bad_intrinsics() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 1.0, 0.0, 4, 4).is_err());
    }
}
