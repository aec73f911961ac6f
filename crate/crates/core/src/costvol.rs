//! Plane-sweep cost volume with occlusion filling.
//!
//! Layer `i` holds the per-pixel L1 photometric cost (mean over channels) of
//! the reference image warped into the target at constant depth `p_i`.
//! Voxels whose warp left the reference frustum or drew on a hole of the
//! disentangled reference carry no data; [`fill_occlusions`] copies the cost
//! of the nearest data-bearing voxel in the same column.
//!
//! Layout is bin-major: voxel `(p, x, y)` lives at `p * W * H + y * W + x`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domd::DisentangledFrame;
use crate::error::{Error, Result};
use crate::geometry::{warp_constant_depth, CameraIntrinsics, DepthMap, ImageBuffer, Mask, RigidPose, SampleStatus};

/// Default number of hypotheses.
pub const DEFAULT_BINS: usize = 96;
/// Default occlusion-fill window, in bins.
pub const DEFAULT_FILL_RADIUS: usize = 8;

/// Depth hypotheses `p_0 < p_1 < ... < p_{n-1}`, evenly spaced in inverse
/// depth.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthHypotheses {
    values: Vec<f64>,
    inverse: Vec<f64>,
}

impl DepthHypotheses {
    pub fn linear_inverse(d_min: f64, d_max: f64, bins: usize) -> Result<Self> {
        if !(d_min.is_finite() && d_max.is_finite() && d_min > 0.0 && d_max > d_min) {
            return Err(Error::InvalidParameter(format!(
                "hypothesis range must satisfy 0 < d_min < d_max (got {d_min}, {d_max})"
            )));
        }
        let step = (1.0 / d_min - 1.0 / d_max) / (bins.max(2) - 1) as f64;
        Self::from_inverse_step(d_max, step, bins)
    }

    /// `bins` hypotheses whose inverse depths are `1/d_max + k * step`.
    pub fn from_inverse_step(d_max: f64, step: f64, bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 hypotheses, got {bins}"
            )));
        }
        if !(d_max.is_finite() && d_max > 0.0 && step.is_finite() && step > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "invalid hypothesis spacing (d_max = {d_max}, step = {step})"
            )));
        }
        let inverse: Vec<f64> = (0..bins).rev().map(|k| 1.0 / d_max + k as f64 * step).collect();
        let values = inverse.iter().map(|i| 1.0 / i).collect::<Vec<_>>();
        if values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter("hypotheses are not strictly increasing".into()));
        }
        Ok(Self { values, inverse })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn depth(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn inverse_depth(&self, i: usize) -> f64 {
        self.inverse[i]
    }

    pub fn d_min(&self) -> f64 {
        self.values[0]
    }

    pub fn d_max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Bin whose inverse depth is closest to `1 / depth` (ties: smaller
    /// index).
    pub fn nearest_bin(&self, depth: f64) -> usize {
        let inv = 1.0 / depth;
        let mut best = 0;
        for i in 1..self.len() {
            if (self.inverse[i] - inv).abs() < (self.inverse[best] - inv).abs() {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum VoxelState {
    Valid = 0,
    /// Occluded or out of view in the raw volume, repaired by filling.
    Filled = 1,
    /// The warp drew on a hole of the disentangled reference.
    Occluded = 2,
    /// The warp left the reference frustum.
    OutOfView = 3,
}

impl VoxelState {
    /// Carries a cost that extraction may use.
    pub fn is_usable(self) -> bool {
        matches!(self, VoxelState::Valid | VoxelState::Filled)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    bins: usize,
    width: usize,
    height: usize,
    cost: Vec<f64>,
    state: Vec<VoxelState>,
}

impl CostVolume {
    /// Builds a volume from raw parts; `cost` must be finite and
    /// non-negative wherever the state is usable.
    pub fn from_parts(
        bins: usize,
        width: usize,
        height: usize,
        cost: Vec<f64>,
        state: Vec<VoxelState>,
    ) -> Result<Self> {
        let n = bins * width * height;
        if cost.len() != n || state.len() != n {
            return Err(Error::InvalidParameter(format!(
                "cost volume needs {n} voxels, got {} costs and {} states",
                cost.len(),
                state.len()
            )));
        }
        if cost
            .iter()
            .zip(&state)
            .any(|(c, s)| s.is_usable() && !(c.is_finite() && *c >= 0.0))
        {
            return Err(Error::InvalidParameter("usable voxel with invalid cost".into()));
        }
        Ok(Self {
            bins,
            width,
            height,
            cost,
            state,
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn costs(&self) -> &[f64] {
        &self.cost
    }

    pub fn states(&self) -> &[VoxelState] {
        &self.state
    }

    #[inline]
    fn index(&self, p: usize, pixel: usize) -> usize {
        p * self.width * self.height + pixel
    }

    pub fn cost(&self, p: usize, x: usize, y: usize) -> f64 {
        self.cost[self.index(p, y * self.width + x)]
    }

    pub fn state(&self, p: usize, x: usize, y: usize) -> VoxelState {
        self.state[self.index(p, y * self.width + x)]
    }

    /// Pixels whose column holds at least one voxel in `state`.
    pub fn columns_with(&self, state: VoxelState) -> Mask {
        Mask::from_fn(self.width, self.height, |x, y| {
            (0..self.bins).any(|p| self.state(p, x, y) == state)
        })
    }

    /// Layer `p` rendered as a grayscale image, costs scaled by `1 / max`
    /// over usable voxels of the whole volume. Unusable voxels are black.
    pub fn slice_image(&self, p: usize) -> ImageBuffer {
        let max = self
            .cost
            .iter()
            .zip(&self.state)
            .filter(|(_, s)| s.is_usable())
            .fold(0.0f64, |m, (c, _)| m.max(*c));
        let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
        let n = self.width * self.height;
        let data = (0..n)
            .map(|i| {
                let j = self.index(p, i);
                if self.state[j].is_usable() {
                    (self.cost[j] * scale).min(1.0)
                } else {
                    0.0
                }
            })
            .collect();
        ImageBuffer::from_vec(self.width, self.height, 1, data).expect("normalized costs lie in [0, 1]")
    }
}

/// Builds the volume from a disentangled reference; its holes invalidate
/// voxels whose bilinear footprint touches them.
pub fn build_cost_volume(
    f_t: &ImageBuffer,
    reference: &DisentangledFrame,
    pose_t_to_ref: &RigidPose,
    intr: &CameraIntrinsics,
    hyp: &DepthHypotheses,
) -> Result<CostVolume> {
    build_cost_volume_raw(
        f_t,
        &reference.image,
        Some(&reference.masks.occluded),
        pose_t_to_ref,
        intr,
        hyp,
    )
}

/// Builds the volume straight from an image, optionally masking source
/// pixels. With `source_invalid = None` this is plain plane sweeping.
pub fn build_cost_volume_raw(
    f_t: &ImageBuffer,
    reference: &ImageBuffer,
    source_invalid: Option<&Mask>,
    pose_t_to_ref: &RigidPose,
    intr: &CameraIntrinsics,
    hyp: &DepthHypotheses,
) -> Result<CostVolume> {
    let (w, h) = (intr.width, intr.height);
    f_t.check_dims("target features", w, h)?;
    reference.check_dims("reference features", w, h)?;
    if f_t.channels() != reference.channels() {
        return Err(Error::InvalidImage(
            "target and reference differ in channel count".into(),
        ));
    }
    let c = f_t.channels();
    let n = w * h;
    let mut cost = vec![0.0; hyp.len() * n];
    let mut state = vec![VoxelState::Valid; hyp.len() * n];
    for (p, (layer, lstate)) in cost.chunks_mut(n).zip(state.chunks_mut(n)).enumerate() {
        let warped = warp_constant_depth(reference, hyp.depth(p), pose_t_to_ref, intr, source_invalid)?;
        let (ft, fw) = (f_t.data(), warped.image.data());
        layer
            .par_chunks_mut(w)
            .zip(lstate.par_chunks_mut(w))
            .enumerate()
            .for_each(|(y, (row, srow))| {
                for x in 0..w {
                    let i = y * w + x;
                    srow[x] = match warped.status[i] {
                        SampleStatus::Valid => VoxelState::Valid,
                        SampleStatus::Occluded => VoxelState::Occluded,
                        SampleStatus::OutOfView | SampleStatus::NoDepth => VoxelState::OutOfView,
                    };
                    if srow[x] == VoxelState::Valid {
                        let mut acc = 0.0;
                        for k in 0..c {
                            acc += (ft[i * c + k] - fw[i * c + k]).abs();
                        }
                        row[x] = acc / c as f64;
                    }
                }
            });
    }
    CostVolume::from_parts(hyp.len(), w, h, cost, state)
}

/// Replaces every unusable voxel with the cost of the nearest originally
/// valid voxel in its column within `radius` bins; ties go to the smaller
/// index. Valid voxels are never modified.
pub fn fill_occlusions(cv: &CostVolume, radius: usize) -> CostVolume {
    let mut out = cv.clone();
    let n = cv.width * cv.height;
    let bins = cv.bins;
    let fills: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|pix| {
            let mut col = Vec::new();
            for p in 0..bins {
                if cv.state[cv.index(p, pix)] == VoxelState::Valid {
                    continue;
                }
                let donor = (1..=radius).find_map(|d| {
                    let below = p
                        .checked_sub(d)
                        .filter(|&q| cv.state[cv.index(q, pix)] == VoxelState::Valid);
                    let above = Some(p + d).filter(|&q| q < bins && cv.state[cv.index(q, pix)] == VoxelState::Valid);
                    below.or(above)
                });
                if let Some(q) = donor {
                    col.push((p, cv.cost[cv.index(q, pix)]));
                }
            }
            col
        })
        .collect();
    for (pix, col) in fills.into_iter().enumerate() {
        for (p, c) in col {
            let j = out.index(p, pix);
            out.cost[j] = c;
            out.state[j] = VoxelState::Filled;
        }
    }
    out
}

/// Winner-take-all bin per pixel over usable voxels. Ties prefer a valid
/// voxel over a filled one, then the smaller index.
pub fn argmin_bins(cv: &CostVolume) -> Vec<Option<usize>> {
    let n = cv.width * cv.height;
    (0..n)
        .into_par_iter()
        .map(|pix| {
            let mut best: Option<(f64, u8, usize)> = None;
            for p in 0..cv.bins {
                let j = cv.index(p, pix);
                let s = cv.state[j];
                if !s.is_usable() {
                    continue;
                }
                let key = (cv.cost[j], s as u8, p);
                if best.is_none_or(|b| (key.0, key.1) < (b.0, b.1)) {
                    best = Some(key);
                }
            }
            best.map(|b| b.2)
        })
        .collect()
}

/// Sub-bin offset in `[-0.5, 0.5]` of the parabola through three costs.
fn parabola_offset(cm: f64, c0: f64, cp: f64) -> f64 {
    let denom = cm - 2.0 * c0 + cp;
    if denom > 0.0 {
        (0.5 * (cm - cp) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    }
}

/// Winner-take-all depth with parabolic refinement in inverse depth.
/// Refinement needs the winner and both neighbours measured, not filled.
/// Columns without a usable voxel give invalid pixels.
pub fn extract_depth(cv: &CostVolume, hyp: &DepthHypotheses) -> Result<DepthMap> {
    if hyp.len() != cv.bins {
        return Err(Error::InvalidParameter(format!(
            "{} hypotheses for a {}-bin volume",
            hyp.len(),
            cv.bins
        )));
    }
    let winners = argmin_bins(cv);
    let n = cv.width * cv.height;
    let mut depth = vec![0.0; n];
    let mut valid = vec![false; n];
    for (pix, k) in winners.into_iter().enumerate() {
        let Some(k) = k else { continue };
        let mut inv = hyp.inverse_depth(k);
        if k > 0 && k + 1 < cv.bins {
            let (jm, j0, jp) = (cv.index(k - 1, pix), cv.index(k, pix), cv.index(k + 1, pix));
            if [jm, j0, jp].iter().all(|&j| cv.state[j] == VoxelState::Valid) {
                let off = parabola_offset(cv.cost[jm], cv.cost[j0], cv.cost[jp]);
                inv += if off >= 0.0 {
                    off * (hyp.inverse_depth(k + 1) - hyp.inverse_depth(k))
                } else {
                    -off * (hyp.inverse_depth(k - 1) - hyp.inverse_depth(k))
                };
            }
        }
        depth[pix] = 1.0 / inv;
        valid[pix] = true;
    }
    DepthMap::from_parts(cv.width, cv.height, depth, valid)
}
