//! Self-supervision signals: re-projection losses, occlusion-aware source
//! switching, dynamic-object cycle consistency and edge-aware smoothness.
//!
//! All scalar reductions use fixed-order pairwise summation.

mod photometric;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DepthMap, ImageBuffer, Mask};
use crate::reduce::{mean, pairwise_sum};

pub use photometric::{masked_photometric, photometric_error, ssim, ErrorMap, PhotometricParams};

/// Which source frame supplied a pixel's occlusion-aware error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum SourceChoice {
    /// Visible only in `t-1`.
    Prev = 0,
    /// Visible only in `t+1`.
    Next = 1,
    /// Visible in both; the smaller error is taken.
    Min = 2,
    /// Occluded in both; contributes nothing.
    None = 3,
}

/// Mean over all pixels of `(E_prev + E_next) / 2`.
pub fn reprojection_loss(e_prev: &ErrorMap, e_next: &ErrorMap) -> Result<f64> {
    e_prev.check_same(e_next)?;
    let v: Vec<f64> = e_prev
        .values
        .iter()
        .zip(&e_next.values)
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    Ok(mean(&v).unwrap_or(0.0))
}

/// Mean over all pixels of `min(E_prev, E_next)`.
pub fn min_reprojection_loss(e_prev: &ErrorMap, e_next: &ErrorMap) -> Result<f64> {
    e_prev.check_same(e_next)?;
    let v: Vec<f64> = e_prev
        .values
        .iter()
        .zip(&e_next.values)
        .map(|(a, b)| a.min(*b))
        .collect();
    Ok(mean(&v).unwrap_or(0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionAwareLoss {
    pub loss: f64,
    /// Switched per-pixel error; 0 where both sources are occluded.
    pub map: ErrorMap,
    pub choice: Vec<SourceChoice>,
    /// Every pixel was occluded in both sources; `loss` is 0.
    pub empty_support: bool,
}

fn check_partition(o: &Mask, v: &Mask, which: &str) -> Result<()> {
    if o.width() != v.width() || o.height() != v.height() {
        return Err(Error::MaskPartition(format!("{which}: O and V differ in size")));
    }
    if let Some(i) = o.data().iter().zip(v.data()).position(|(a, b)| a == b) {
        return Err(Error::MaskPartition(format!(
            "{which}: pixel {i} is not in exactly one of O and V"
        )));
    }
    Ok(())
}

/// Four-case source switching: a pixel visible in exactly one source takes
/// that source's error, visible in both takes the minimum, occluded in both
/// contributes 0. The sum is normalized by the number of pixels not occluded
/// in both sources.
pub fn occlusion_aware_loss(
    e_prev: &ErrorMap,
    e_next: &ErrorMap,
    o_prev: &Mask,
    v_prev: &Mask,
    o_next: &Mask,
    v_next: &Mask,
) -> Result<OcclusionAwareLoss> {
    e_prev.check_same(e_next)?;
    let (w, h) = (e_prev.width, e_prev.height);
    for m in [o_prev, v_prev, o_next, v_next] {
        m.check_dims("visibility mask", w, h)?;
    }
    check_partition(o_prev, v_prev, "t-1")?;
    check_partition(o_next, v_next, "t+1")?;
    let n = w * h;
    let mut values = vec![0.0; n];
    let mut choice = vec![SourceChoice::None; n];
    let mut support = Mask::empty(w, h);
    for i in 0..n {
        let (a, b) = (e_prev.values[i], e_next.values[i]);
        let (c, v) = match (v_prev.at(i), v_next.at(i)) {
            (true, true) => (SourceChoice::Min, a.min(b)),
            (true, false) => (SourceChoice::Prev, a),
            (false, true) => (SourceChoice::Next, b),
            (false, false) => (SourceChoice::None, 0.0),
        };
        values[i] = v;
        choice[i] = c;
        support.set_index(i, c != SourceChoice::None);
    }
    let denom = support.count();
    let loss = if denom == 0 {
        0.0
    } else {
        pairwise_sum(&values) / denom as f64
    };
    Ok(OcclusionAwareLoss {
        loss,
        map: ErrorMap::new(w, h, values, support)?,
        choice,
        empty_support: denom == 0,
    })
}

/// Default relative-gap threshold of the cycle-consistency set.
pub const CYCLE_THRESHOLD: f64 = 1.0;

/// Relative gap `|a - b| / min(a, b)`.
#[inline]
fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.min(b)
}

fn check_positive(index: usize, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveDepth { index, value })
    }
}

/// Cycle loss over raw depth slices: the mean of `|d - d_pr|` over pixels of
/// `s` whose relative gap exceeds `threshold`, or 0 if there are none.
pub fn cycle_consistency_values(d: &[f64], d_pr: &[f64], s: &[bool], threshold: f64) -> Result<f64> {
    if d.len() != d_pr.len() || d.len() != s.len() {
        return Err(Error::InvalidParameter(
            "cycle-consistency inputs differ in length".into(),
        ));
    }
    let mut terms = Vec::new();
    for i in (0..d.len()).filter(|&i| s[i]) {
        check_positive(i, d[i])?;
        check_positive(i, d_pr[i])?;
        if relative_gap(d[i], d_pr[i]) > threshold {
            terms.push((d[i] - d_pr[i]).abs());
        }
    }
    Ok(mean(&terms).unwrap_or(0.0))
}

/// The set `A ∩ S` on which the cycle loss acts. Pixels where the
/// prediction is invalid are skipped; an invalid prior on `S` is an error.
pub fn cycle_set(d: &DepthMap, d_pr: &DepthMap, s: &Mask, threshold: f64) -> Result<Mask> {
    let (w, h) = (d.width(), d.height());
    d_pr.check_dims("depth prior", w, h)?;
    s.check_dims("object mask", w, h)?;
    let mut out = Mask::empty(w, h);
    for i in (0..w * h).filter(|&i| s.at(i)) {
        let Some(pr) = d_pr.get(i) else {
            return Err(Error::NonPositiveDepth {
                index: i,
                value: d_pr.depths()[i],
            });
        };
        if let Some(dv) = d.get(i) {
            out.set_index(i, relative_gap(dv, pr) > threshold);
        }
    }
    Ok(out)
}

/// Cycle loss between a prediction and the prior on `S`.
pub fn cycle_consistency(d: &DepthMap, d_pr: &DepthMap, s: &Mask, threshold: f64) -> Result<f64> {
    let a = cycle_set(d, d_pr, s, threshold)?;
    let terms: Vec<f64> = (0..a.data().len())
        .filter(|&i| a.at(i))
        .map(|i| (d.depths()[i] - d_pr.depths()[i]).abs())
        .collect();
    Ok(mean(&terms).unwrap_or(0.0))
}

/// Edge-aware smoothness of the mean-normalized inverse depth.
///
/// Every pixel with `x < W-1` and `y < H-1` whose three stencil pixels have
/// valid depth contributes `|dx d*| e^{-|dx I|} + |dy d*| e^{-|dy I|}`, where
/// `|dI|` is the channel mean of absolute forward differences.
pub fn smoothness(d: &DepthMap, image: &ImageBuffer) -> Result<f64> {
    let (w, h) = (d.width(), d.height());
    image.check_dims("smoothness image", w, h)?;
    let inv: Vec<f64> = d
        .depths()
        .iter()
        .zip(d.valid_flags())
        .filter(|(_, v)| **v)
        .map(|(z, _)| 1.0 / z)
        .collect();
    let Some(mean_inv) = mean(&inv) else {
        return Ok(0.0);
    };
    let c = image.channels();
    let dstar = |x: usize, y: usize| d.at(x, y).map(|z| (1.0 / z) / mean_inv);
    let grad = |x0: usize, y0: usize, x1: usize, y1: usize| {
        (0..c)
            .map(|k| (image.get(x1, y1, k) - image.get(x0, y0, k)).abs())
            .sum::<f64>()
            / c as f64
    };
    let mut terms = Vec::with_capacity(w * h);
    for y in 0..h.saturating_sub(1) {
        for x in 0..w.saturating_sub(1) {
            let (Some(p), Some(px), Some(py)) = (dstar(x, y), dstar(x + 1, y), dstar(x, y + 1)) else {
                continue;
            };
            terms.push((px - p).abs() * (-grad(x, y, x + 1, y)).exp() + (py - p).abs() * (-grad(x, y, x, y + 1)).exp());
        }
    }
    Ok(mean(&terms).unwrap_or(0.0))
}

/// Per-term weights of the total loss. The default is the plain sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub cycle: f64,
    pub reprojection: f64,
    pub smoothness: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            cycle: 1.0,
            reprojection: 1.0,
            smoothness: 1.0,
        }
    }
}

/// Loss terms of one solve. `l_c`, `l_or` and `l_s` are stored weighted, so
/// `l_total = l_c + l_or + l_s` always holds.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub l_c: f64,
    pub l_or: f64,
    pub l_s: f64,
    pub l_total: f64,
    /// Per-source error maps `E_{t-1}`, `E_{t+1}`.
    pub e_maps: [ErrorMap; 2],
    pub e_or_map: ErrorMap,
    pub source_choice: Vec<SourceChoice>,
    pub empty_support: bool,
}

/// Weighted sum of the three terms `(l_total, [l_c, l_or, l_s])`.
pub fn total_loss(l_c: f64, l_or: f64, l_s: f64, weights: &LossWeights) -> (f64, [f64; 3]) {
    let parts = [
        weights.cycle * l_c,
        weights.reprojection * l_or,
        weights.smoothness * l_s,
    ];
    (parts[0] + parts[1] + parts[2], parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn map(values: Vec<f64>, w: usize, h: usize) -> ErrorMap {
        ErrorMap::new(w, h, values, Mask::full(w, h)).unwrap()
    }

    #[test]
    fn reprojection_examples() {
        let z = ErrorMap::zeros(4, 3);
        assert_eq!(reprojection_loss(&z, &z).unwrap(), 0.0);
        let a = map(vec![0.1; 12], 4, 3);
        let b = map(vec![0.3; 12], 4, 3);
        assert!((reprojection_loss(&a, &b).unwrap() - 0.2).abs() < 1e-15);
        assert!((min_reprojection_loss(&a, &a).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(min_reprojection_loss(&a, &z).unwrap(), 0.0);
    }

    #[test]
    fn reprojection_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (w, h) = (23, 11);
        let a = map((0..w * h).map(|_| rng.random_range(0.0..1.0)).collect(), w, h);
        let b = map((0..w * h).map(|_| rng.random_range(0.0..1.0)).collect(), w, h);
        let (mut s, mut m) = (0.0, 0.0);
        for y in 0..h {
            for x in 0..w {
                let (p, q) = (a.values[y * w + x], b.values[y * w + x]);
                s += (p + q) / 2.0;
                m += p.min(q);
            }
        }
        let n = (w * h) as f64;
        assert!((reprojection_loss(&a, &b).unwrap() - s / n).abs() < 1e-12);
        assert!((min_reprojection_loss(&a, &b).unwrap() - m / n).abs() < 1e-12);
    }

    #[test]
    fn all_visible_reduces_to_min() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = map((0..40).map(|_| rng.random_range(0.0..1.0)).collect(), 8, 5);
        let b = map((0..40).map(|_| rng.random_range(0.0..1.0)).collect(), 8, 5);
        let (o, v) = (Mask::empty(8, 5), Mask::full(8, 5));
        let r = occlusion_aware_loss(&a, &b, &o, &v, &o, &v).unwrap();
        assert_eq!(r.loss, min_reprojection_loss(&a, &b).unwrap());
        assert!(r.choice.iter().all(|c| *c == SourceChoice::Min));
    }

    #[test]
    fn occluded_source_is_not_chosen_even_if_smaller() {
        let a = map(vec![0.1], 1, 1);
        let b = map(vec![0.4], 1, 1);
        let (o, v) = (Mask::full(1, 1), Mask::empty(1, 1));
        let r = occlusion_aware_loss(&a, &b, &o, &v, &v, &o).unwrap();
        assert_eq!(r.loss, 0.4);
        assert_eq!(r.choice, vec![SourceChoice::Next]);
    }

    #[test]
    fn both_occluded_gives_empty_support() {
        let a = map(vec![0.1; 4], 2, 2);
        let (o, v) = (Mask::full(2, 2), Mask::empty(2, 2));
        let r = occlusion_aware_loss(&a, &a, &o, &v, &o, &v).unwrap();
        assert_eq!(r.loss, 0.0);
        assert!(r.empty_support);
        assert!(occlusion_aware_loss(&a, &a, &o, &o, &o, &v).is_err());
    }

    #[test]
    fn cycle_examples() {
        let s = [true];
        assert_eq!(cycle_consistency_values(&[2.0], &[2.0], &s, 1.0).unwrap(), 0.0);
        assert_eq!(cycle_consistency_values(&[3.0], &[1.0], &s, 1.0).unwrap(), 2.0);
        assert_eq!(cycle_consistency_values(&[1.9], &[1.0], &s, 1.0).unwrap(), 0.0);
        assert!(cycle_consistency_values(&[0.0], &[1.0], &s, 1.0).is_err());
        assert!(cycle_consistency_values(&[1.0], &[-1.0], &s, 1.0).is_err());
        // Off-mask pixels are ignored entirely.
        assert_eq!(cycle_consistency_values(&[-1.0], &[1.0], &[false], 1.0).unwrap(), 0.0);
    }

    #[test]
    fn cycle_threshold_boundary() {
        let s = [true];
        let above = cycle_consistency_values(&[2.0 + 1e-6], &[1.0], &s, 1.0).unwrap();
        assert!((above - (1.0 + 1e-6)).abs() < 1e-12);
        let above = cycle_consistency_values(&[1.0], &[2.0 + 1e-6], &s, 1.0).unwrap();
        assert!((above - (1.0 + 1e-6)).abs() < 1e-12);
        assert_eq!(cycle_consistency_values(&[2.0 - 1e-6], &[1.0], &s, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn cycle_symmetric_and_scale_covariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let d: Vec<f64> = (0..200).map(|_| rng.random_range(0.5..8.0)).collect();
        let p: Vec<f64> = (0..200).map(|_| rng.random_range(0.5..8.0)).collect();
        let s: Vec<bool> = (0..200).map(|_| rng.random_bool(0.7)).collect();
        let a = cycle_consistency_values(&d, &p, &s, 1.0).unwrap();
        assert_eq!(a, cycle_consistency_values(&p, &d, &s, 1.0).unwrap());
        let k = 4.0;
        let dk: Vec<f64> = d.iter().map(|v| v * k).collect();
        let pk: Vec<f64> = p.iter().map(|v| v * k).collect();
        assert!((cycle_consistency_values(&dk, &pk, &s, 1.0).unwrap() - k * a).abs() < 1e-12);
        assert!(a > 0.0);
    }

    #[test]
    fn smoothness_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (w, h) = (9, 7);
        let img = ImageBuffer::from_vec(w, h, 3, (0..w * h * 3).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        assert_eq!(smoothness(&DepthMap::constant(w, h, 4.0).unwrap(), &img).unwrap(), 0.0);
        let raw: Vec<f64> = (0..w * h).map(|_| rng.random_range(1.0..10.0)).collect();
        let d = DepthMap::from_depths(w, h, raw.clone()).unwrap();
        let ls = smoothness(&d, &img).unwrap();
        assert!((smoothness(&d.scaled(3.7).unwrap(), &img).unwrap() - ls).abs() < 1e-12);

        // Direct finite-difference reference.
        let mi = raw.iter().map(|z| 1.0 / z).sum::<f64>() / raw.len() as f64;
        let ds = |x: usize, y: usize| (1.0 / raw[y * w + x]) / mi;
        let gi = |x0: usize, y0: usize, x1: usize, y1: usize| {
            (0..3)
                .map(|c| (img.get(x1, y1, c) - img.get(x0, y0, c)).abs())
                .sum::<f64>()
                / 3.0
        };
        let mut acc = 0.0;
        for y in 0..h - 1 {
            for x in 0..w - 1 {
                acc += (ds(x + 1, y) - ds(x, y)).abs() * (-gi(x, y, x + 1, y)).exp()
                    + (ds(x, y + 1) - ds(x, y)).abs() * (-gi(x, y, x, y + 1)).exp();
            }
        }
        assert!((ls - acc / ((w - 1) * (h - 1)) as f64).abs() < 1e-12);
    }

    #[test]
    fn smoothness_skips_invalid_pixels() {
        let img = ImageBuffer::filled(3, 3, 1, 0.5).unwrap();
        let mut d = DepthMap::from_depths(3, 3, vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0]).unwrap();
        d.set(4, None);
        // Only the (0, 0) stencil avoids pixel 4; mean 1/D over valid is 0.75.
        let want = (0.5 / 0.75) * 2.0;
        assert!((smoothness(&d, &img).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn total_is_plain_sum() {
        let w = LossWeights::default();
        assert_eq!(total_loss(0.0, 0.0, 0.0, &w).0, 0.0);
        let (t, p) = total_loss(0.1, 0.2, 0.3, &w);
        assert_eq!(t, p[0] + p[1] + p[2]);
        assert!((t - 0.6).abs() < 1e-15);
    }
}
