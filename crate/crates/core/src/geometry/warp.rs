//! Inverse warping with bilinear sampling.
//!
//! Each target pixel is lifted with its depth, moved into the source camera
//! and projected there; the source image is sampled bilinearly. Samples that
//! leave `[0, W-1] x [0, H-1]`, land behind the camera, or draw on a masked
//! source pixel are flagged instead of silently blended. Invalid outputs are
//! written as black.
//!
//! Fractional tap offsets within [`TAP_SNAP`] of an integer are snapped to
//! it, and taps with zero weight are never read. This makes integer-aligned
//! warps bit-exact copies of the source.

use nalgebra::Vector3;
use rayon::prelude::*;

use super::{CameraIntrinsics, DepthMap, ImageBuffer, Mask, RigidPose};
use crate::error::Result;

/// Snap tolerance for fractional tap offsets, in pixels.
pub const TAP_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum SampleStatus {
    Valid = 0,
    /// The sample fell outside the source frustum or behind the camera.
    OutOfView = 1,
    /// A non-zero-weight tap touched a masked source pixel.
    Occluded = 2,
    /// The target pixel had no valid depth.
    NoDepth = 3,
}

impl SampleStatus {
    pub fn is_valid(self) -> bool {
        self == SampleStatus::Valid
    }
}

/// Bilinear footprint of a continuous sample position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilinearTaps {
    pub x0: usize,
    pub y0: usize,
    /// Fractional offsets in `[0, 1)`.
    pub ax: f64,
    pub ay: f64,
}

impl BilinearTaps {
    /// Locates `(u, v)` in a `width x height` grid, or `None` outside it.
    pub fn locate(u: f64, v: f64, width: usize, height: usize) -> Option<Self> {
        let (x0, ax) = snap_axis(u, width)?;
        let (y0, ay) = snap_axis(v, height)?;
        Some(Self { x0, y0, ax, ay })
    }

    /// Taps with non-zero weight as `(x, y, weight)`.
    pub fn taps(&self) -> impl Iterator<Item = (usize, usize, f64)> {
        let (ax, ay) = (self.ax, self.ay);
        let (x0, y0) = (self.x0, self.y0);
        [
            (x0, y0, (1.0 - ax) * (1.0 - ay)),
            (x0 + 1, y0, ax * (1.0 - ay)),
            (x0, y0 + 1, (1.0 - ax) * ay),
            (x0 + 1, y0 + 1, ax * ay),
        ]
        .into_iter()
        .filter(|t| t.2 > 0.0)
    }

    pub fn touches(&self, mask: &Mask) -> bool {
        self.taps().any(|(x, y, _)| mask.get(x, y))
    }

    /// Writes the interpolated value of every channel into `out`.
    pub fn sample_into(&self, img: &ImageBuffer, out: &mut [f64]) {
        out.fill(0.0);
        for (x, y, w) in self.taps() {
            for (o, s) in out.iter_mut().zip(img.pixel(x, y)) {
                *o += w * s;
            }
        }
    }

    /// Partial derivatives of the bilinear interpolant with respect to the
    /// continuous sample position, per channel. Only meaningful strictly
    /// inside a cell; at a snapped (integer) offset it returns the one-sided
    /// derivative towards `+u` / `+v`.
    pub fn gradient(&self, img: &ImageBuffer, du: &mut [f64], dv: &mut [f64]) {
        let (w, h) = (img.width(), img.height());
        let x1 = (self.x0 + 1).min(w - 1);
        let y1 = (self.y0 + 1).min(h - 1);
        for c in 0..img.channels() {
            let s00 = img.get(self.x0, self.y0, c);
            let s10 = img.get(x1, self.y0, c);
            let s01 = img.get(self.x0, y1, c);
            let s11 = img.get(x1, y1, c);
            du[c] = (1.0 - self.ay) * (s10 - s00) + self.ay * (s11 - s01);
            dv[c] = (1.0 - self.ax) * (s01 - s00) + self.ax * (s11 - s10);
        }
    }
}

fn snap_axis(u: f64, n: usize) -> Option<(usize, f64)> {
    let max = (n - 1) as f64;
    if !(u >= -TAP_SNAP && u <= max + TAP_SNAP) {
        return None;
    }
    let f = u.floor();
    let mut i = f as i64;
    let mut a = u - f;
    if a < TAP_SNAP {
        a = 0.0;
    } else if a > 1.0 - TAP_SNAP {
        i += 1;
        a = 0.0;
    }
    let i = i.clamp(0, n as i64 - 1) as usize;
    if i == n - 1 {
        a = 0.0;
    }
    Some((i, a))
}

/// Where target pixel `(x, y)` at `depth` lands in the source view.
#[inline]
pub fn reproject_pixel(
    intr: &CameraIntrinsics,
    pose_target_to_source: &RigidPose,
    x: usize,
    y: usize,
    depth: f64,
) -> Option<(f64, f64, f64)> {
    let p = intr.backproject_unchecked(x as f64, y as f64, depth);
    let q: Vector3<f64> = pose_target_to_source.transform(&p);
    if !(q.z > 0.0) {
        return None;
    }
    let pr = intr.project_unchecked(&q);
    Some((pr.u, pr.v, pr.depth))
}

/// Result of [`warp_image`]: the resampled image and a per-pixel status.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpOutput {
    pub image: ImageBuffer,
    pub status: Vec<SampleStatus>,
}

impl WarpOutput {
    pub fn valid_mask(&self) -> Mask {
        self.mask_where(|s| s.is_valid())
    }

    pub fn invalid_mask(&self) -> Mask {
        self.mask_where(|s| !s.is_valid())
    }

    pub fn occluded_mask(&self) -> Mask {
        self.mask_where(|s| s == SampleStatus::Occluded)
    }

    fn mask_where(&self, f: impl Fn(SampleStatus) -> bool) -> Mask {
        Mask::from_vec(
            self.image.width(),
            self.image.height(),
            self.status.iter().map(|s| f(*s)).collect(),
        )
        .expect("status has one entry per pixel")
    }
}

/// Warps `source` into the target view described by `target_depth`.
pub fn warp_image(
    source: &ImageBuffer,
    target_depth: &DepthMap,
    pose_target_to_source: &RigidPose,
    intr: &CameraIntrinsics,
    source_invalid: Option<&Mask>,
) -> Result<WarpOutput> {
    target_depth.check_dims("target depth", intr.width, intr.height)?;
    warp_with(
        source,
        |i| target_depth.get(i),
        pose_target_to_source,
        intr,
        source_invalid,
    )
}

/// Warps `source` assuming every target pixel lies at `depth`.
pub fn warp_constant_depth(
    source: &ImageBuffer,
    depth: f64,
    pose_target_to_source: &RigidPose,
    intr: &CameraIntrinsics,
    source_invalid: Option<&Mask>,
) -> Result<WarpOutput> {
    if !(depth.is_finite() && depth > 0.0) {
        return Err(crate::Error::InvalidDepth { depth });
    }
    warp_with(source, |_| Some(depth), pose_target_to_source, intr, source_invalid)
}

fn warp_with<F>(
    source: &ImageBuffer,
    depth_at: F,
    pose: &RigidPose,
    intr: &CameraIntrinsics,
    source_invalid: Option<&Mask>,
) -> Result<WarpOutput>
where
    F: Fn(usize) -> Option<f64> + Sync,
{
    let (w, h) = (intr.width, intr.height);
    source.check_dims("warp source", w, h)?;
    if let Some(m) = source_invalid {
        m.check_dims("source invalid mask", w, h)?;
    }
    pose.validate()?;
    let c = source.channels();
    let mut image = ImageBuffer::zeros(w, h, c);
    let mut status = vec![SampleStatus::Valid; w * h];

    image
        .data_mut()
        .par_chunks_mut(w * c)
        .zip(status.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (row, srow))| {
            for x in 0..w {
                let out = &mut row[x * c..(x + 1) * c];
                let st = match depth_at(y * w + x) {
                    None => SampleStatus::NoDepth,
                    Some(d) => match reproject_pixel(intr, pose, x, y, d)
                        .and_then(|(u, v, _)| BilinearTaps::locate(u, v, w, h))
                    {
                        None => SampleStatus::OutOfView,
                        Some(taps) => {
                            if source_invalid.is_some_and(|m| taps.touches(m)) {
                                SampleStatus::Occluded
                            } else {
                                taps.sample_into(source, out);
                                SampleStatus::Valid
                            }
                        }
                    },
                };
                if !st.is_valid() {
                    out.fill(0.0);
                }
                srow[x] = st;
            }
        });

    Ok(WarpOutput { image, status })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> ImageBuffer {
        let mut data = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let v = (x as f64 * 0.013 + y as f64 * 0.007).sin() * 0.4 + 0.5;
                data.extend([v, 1.0 - v, v * 0.5]);
            }
        }
        ImageBuffer::from_vec(w, h, 3, data).unwrap()
    }

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(50.0, 50.0, 15.5, 11.5, 32, 24).unwrap()
    }

    #[test]
    fn identity_warp_is_bit_exact() {
        let src = ramp(32, 24);
        let depth = DepthMap::constant(32, 24, 3.7).unwrap();
        let out = warp_image(&src, &depth, &RigidPose::identity(), &k(), None).unwrap();
        assert_eq!(out.image, src);
        assert!(out.status.iter().all(|s| s.is_valid()));
    }

    #[test]
    fn frustum_exit_invalidates_everything() {
        let src = ramp(32, 24);
        let pose = RigidPose::from_translation(Vector3::new(100.0, 0.0, 0.0));
        let out = warp_constant_depth(&src, 2.0, &pose, &k(), None).unwrap();
        assert!(out.status.iter().all(|s| *s == SampleStatus::OutOfView));
        assert!(out.image.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn behind_camera_is_out_of_view() {
        let src = ramp(32, 24);
        let pose = RigidPose::from_translation(Vector3::new(0.0, 0.0, -10.0));
        let out = warp_constant_depth(&src, 2.0, &pose, &k(), None).unwrap();
        assert!(out.status.iter().all(|s| *s == SampleStatus::OutOfView));
    }

    #[test]
    fn integer_shift_copies_and_masks_only_touched_taps() {
        // Translation of 0.2 m at 5 m depth with fx = 50 shifts by exactly 2 px.
        let src = ramp(32, 24);
        let pose = RigidPose::from_translation(Vector3::new(0.2, 0.0, 0.0));
        let mut hole = Mask::empty(32, 24);
        hole.set(12, 5, true);
        let out = warp_constant_depth(&src, 5.0, &pose, &k(), Some(&hole)).unwrap();
        for y in 0..24 {
            for x in 0..30 {
                let i = y * 32 + x;
                if (x, y) == (10, 5) {
                    assert_eq!(out.status[i], SampleStatus::Occluded);
                } else {
                    assert_eq!(out.status[i], SampleStatus::Valid, "{x},{y}");
                    assert_eq!(out.image.pixel(x, y), src.pixel(x + 2, y));
                }
            }
            assert_eq!(out.status[y * 32 + 30], SampleStatus::OutOfView);
        }
    }

    #[test]
    fn invalid_depth_is_flagged() {
        let src = ramp(32, 24);
        let mut depth = DepthMap::constant(32, 24, 2.0).unwrap();
        depth.set(7, None);
        let out = warp_image(&src, &depth, &RigidPose::identity(), &k(), None).unwrap();
        assert_eq!(out.status[7], SampleStatus::NoDepth);
    }

    #[test]
    fn taps_snap_near_integers() {
        let t = BilinearTaps::locate(3.0 + 1e-12, 4.0 - 1e-12, 10, 10).unwrap();
        assert_eq!((t.x0, t.y0, t.ax, t.ay), (3, 4, 0.0, 0.0));
        assert_eq!(t.taps().count(), 1);
        let t = BilinearTaps::locate(9.0, 0.5, 10, 10).unwrap();
        assert_eq!(t.taps().count(), 2);
        assert!(BilinearTaps::locate(9.01, 0.0, 10, 10).is_none());
        assert!(BilinearTaps::locate(-0.01, 0.0, 10, 10).is_none());
    }
}
