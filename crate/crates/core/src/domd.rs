//! Dynamic object motion disentanglement.
//!
//! A moving object breaks the static-scene assumption that plane sweeping
//! relies on: its pixels in the reference frame were recorded at a different
//! world position. Disentangling replaces the reference-frame appearance of
//! every dynamic object with its time-`t` appearance, forward-splatted into
//! the reference view through the depth prior. Reference pixels that were
//! covered by an object and are not repainted have no valid data; they are
//! painted black and reported in the occlusion mask `O`.

use crate::error::{Error, Result};
use crate::geometry::{neighborhood, CameraIntrinsics, DepthMap, ImageBuffer, Mask, RigidPose};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DomdParams {
    /// Close one-pixel cracks in the repainted region.
    pub close_pinholes: bool,
}

impl Default for DomdParams {
    fn default() -> Self {
        Self { close_pinholes: true }
    }
}

/// `occluded` and `visible` partition the frame.
#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionMasks {
    pub occluded: Mask,
    pub visible: Mask,
}

impl OcclusionMasks {
    pub fn none(width: usize, height: usize) -> Self {
        Self::from_occluded(Mask::empty(width, height))
    }

    pub fn from_occluded(occluded: Mask) -> Self {
        let visible = occluded.not();
        Self { occluded, visible }
    }

    pub fn check_partition(&self) -> Result<()> {
        if self.occluded.width() != self.visible.width() || self.occluded.height() != self.visible.height() {
            return Err(Error::MaskPartition("O and V differ in size".into()));
        }
        for (i, (o, v)) in self.occluded.data().iter().zip(self.visible.data()).enumerate() {
            if o == v {
                return Err(Error::MaskPartition(format!(
                    "pixel {i} is {} O and V",
                    if *o { "in both" } else { "in neither of" }
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisentangledFrame {
    /// Reference image with dynamic objects moved to their time-`t` pose.
    pub image: ImageBuffer,
    pub masks: OcclusionMasks,
    /// Pixels painted from the splatted time-`t` objects.
    pub repainted: Mask,
}

impl DisentangledFrame {
    /// A raw reference frame with no holes, as used when disentangling is off.
    pub fn passthrough(image: &ImageBuffer) -> Self {
        let (w, h) = (image.width(), image.height());
        Self {
            image: image.clone(),
            masks: OcclusionMasks::none(w, h),
            repainted: Mask::empty(w, h),
        }
    }
}

/// Nearest-pixel, z-buffered forward splat of the `s_t` pixels of `i_t`.
///
/// Returns, per reference pixel, the linear index of the winning source
/// pixel. Sources are visited in raster order and only a strictly nearer
/// splat replaces the current one, so depth ties go to the smaller index.
pub fn splat_objects(
    s_t: &Mask,
    d_pr: &DepthMap,
    pose_t_to_ref: &RigidPose,
    intr: &CameraIntrinsics,
) -> Result<Vec<Option<usize>>> {
    let (w, h) = (intr.width, intr.height);
    s_t.check_dims("object mask S_t", w, h)?;
    d_pr.check_dims("depth prior", w, h)?;
    let mut zbuf = vec![f64::INFINITY; w * h];
    let mut winner = vec![None; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !s_t.at(i) {
                continue;
            }
            let d = d_pr.get(i).ok_or(Error::PriorCoverage { x, y })?;
            let p = intr.backproject_unchecked(x as f64, y as f64, d);
            let q = pose_t_to_ref.transform(&p);
            if !(q.z > 0.0) {
                continue;
            }
            let pr = intr.project_unchecked(&q);
            let (u, v) = (pr.u.round(), pr.v.round());
            if !(u >= 0.0 && v >= 0.0 && u < w as f64 && v < h as f64) {
                continue;
            }
            let j = v as usize * w + u as usize;
            if q.z < zbuf[j] {
                zbuf[j] = q.z;
                winner[j] = Some(i);
            }
        }
    }
    Ok(winner)
}

/// Builds the disentangled reference frame `I^d` and its occlusion masks.
#[allow(clippy::too_many_arguments)]
pub fn disentangle(
    i_ref: &ImageBuffer,
    i_t: &ImageBuffer,
    s_ref: &Mask,
    s_t: &Mask,
    d_pr: &DepthMap,
    pose_t_to_ref: &RigidPose,
    intr: &CameraIntrinsics,
    params: DomdParams,
) -> Result<DisentangledFrame> {
    let (w, h) = (intr.width, intr.height);
    i_ref.check_dims("reference image", w, h)?;
    i_t.check_dims("target image", w, h)?;
    s_ref.check_dims("object mask S_ref", w, h)?;
    if i_ref.channels() != i_t.channels() {
        return Err(Error::InvalidImage(
            "reference and target differ in channel count".into(),
        ));
    }
    let c = i_t.channels();
    let winner = splat_objects(s_t, d_pr, pose_t_to_ref, intr)?;

    let splatted = Mask::from_vec(w, h, winner.iter().map(Option::is_some).collect())?;
    let mut image = i_ref.painted_black(s_ref);
    for (j, src) in winner.iter().enumerate() {
        if let Some(i) = *src {
            image.set_pixel(j % w, j / w, i_t.pixel(i % w, i / w));
        }
    }

    let repainted = if params.close_pinholes {
        let closed = splatted.close3();
        let mut acc = vec![0.0; c];
        for y in 0..h {
            for x in 0..w {
                if !closed.get(x, y) || splatted.get(x, y) {
                    continue;
                }
                acc.fill(0.0);
                let mut n = 0usize;
                for (nx, ny) in neighborhood(x, y, w, h) {
                    if splatted.get(nx, ny) {
                        let src = winner[ny * w + nx].expect("splatted pixel has a source");
                        for (a, s) in acc.iter_mut().zip(i_t.pixel(src % w, src / w)) {
                            *a += s;
                        }
                        n += 1;
                    }
                }
                // A closed pixel outside the splat always has a splatted
                // 8-neighbour.
                let mean: Vec<f64> = acc.iter().map(|a| a / n as f64).collect();
                image.set_pixel(x, y, &mean);
            }
        }
        closed
    } else {
        splatted
    };

    let occluded = s_ref.and_not(&repainted);
    let image = image.painted_black(&occluded);
    Ok(DisentangledFrame {
        image,
        masks: OcclusionMasks::from_occluded(occluded),
        repainted,
    })
}
