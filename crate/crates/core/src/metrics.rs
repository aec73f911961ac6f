//! Standard depth-evaluation metrics and error-map rendering.
//!
//! Over the `n` pixels where prediction, ground truth and the optional mask
//! are all valid, with predictions clipped into `[min_depth, clip_max]`:
//!
//! ```text
//! abs_rel  = mean |p - g| / g
//! sq_rel   = mean (p - g)^2 / g
//! rmse     = sqrt(mean (p - g)^2)
//! rmse_log = sqrt(mean (ln p - ln g)^2)
//! delta_k  = fraction with max(p / g, g / p) < 1.25^k
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DepthMap, ImageBuffer, Mask};
use crate::reduce::pairwise_sum;

pub const DELTA_BASE: f64 = 1.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricOptions {
    /// Upper clip applied to predictions, meters.
    pub clip_max: f64,
    /// Lower clip applied to predictions, meters.
    pub min_depth: f64,
    /// Rescale predictions by `median(g) / median(p)` before evaluation.
    pub median_scaling: bool,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            clip_max: 80.0,
            min_depth: 1e-3,
            median_scaling: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub n_pixels: usize,
}

impl MetricReport {
    /// Values in CSV column order, without `n_pixels`.
    pub fn values(&self) -> [f64; 7] {
        [
            self.abs_rel,
            self.sq_rel,
            self.rmse,
            self.rmse_log,
            self.delta1,
            self.delta2,
            self.delta3,
        ]
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn compute_metrics(
    pred: &DepthMap,
    gt: &DepthMap,
    mask: Option<&Mask>,
    opts: &MetricOptions,
) -> Result<MetricReport> {
    let (w, h) = (gt.width(), gt.height());
    pred.check_dims("prediction", w, h)?;
    if let Some(m) = mask {
        m.check_dims("evaluation mask", w, h)?;
    }
    if !(opts.min_depth > 0.0 && opts.clip_max > opts.min_depth) {
        return Err(Error::InvalidParameter(format!(
            "metric clip range must satisfy 0 < min_depth < clip_max (got {}, {})",
            opts.min_depth, opts.clip_max
        )));
    }
    let mut pairs: Vec<(f64, f64)> = (0..w * h)
        .filter(|&i| mask.is_none_or(|m| m.at(i)))
        .filter_map(|i| Some((pred.get(i)?, gt.get(i)?)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::EmptySupport(
            "no pixel has valid prediction, ground truth and mask".into(),
        ));
    }
    if opts.median_scaling {
        let mut p: Vec<f64> = pairs.iter().map(|x| x.0).collect();
        let mut g: Vec<f64> = pairs.iter().map(|x| x.1).collect();
        let s = median(&mut g) / median(&mut p);
        for x in &mut pairs {
            x.0 *= s;
        }
    }
    for x in &mut pairs {
        x.0 = x.0.clamp(opts.min_depth, opts.clip_max);
    }
    let n = pairs.len() as f64;
    let m = |f: &dyn Fn(f64, f64) -> f64| pairwise_sum(&pairs.iter().map(|&(p, g)| f(p, g)).collect::<Vec<_>>()) / n;
    let thresh = |k: i32| {
        let t = DELTA_BASE.powi(k);
        m(&|p, g| ((p / g).max(g / p) < t) as u8 as f64)
    };
    Ok(MetricReport {
        abs_rel: m(&|p, g| (p - g).abs() / g),
        sq_rel: m(&|p, g| (p - g) * (p - g) / g),
        rmse: m(&|p, g| (p - g) * (p - g)).sqrt(),
        rmse_log: m(&|p, g| (p.ln() - g.ln()).powi(2)).sqrt(),
        delta1: thresh(1),
        delta2: thresh(2),
        delta3: thresh(3),
        n_pixels: pairs.len(),
    })
}

/// Abs-rel at which the ramp saturates.
pub const ERROR_MAP_SATURATION: f64 = 0.5;

/// RGB rendering of per-pixel abs-rel: `t = min(abs_rel / 0.5, 1)` maps to
/// `(1, 1 - t, 1 - t)`, white for exact and pure red at saturation. Pixels
/// without a valid pair are mid gray.
pub fn error_map(pred: &DepthMap, gt: &DepthMap) -> Result<ImageBuffer> {
    let (w, h) = (gt.width(), gt.height());
    pred.check_dims("prediction", w, h)?;
    let mut img = ImageBuffer::zeros(w, h, 3);
    for i in 0..w * h {
        let rgb = match (pred.get(i), gt.get(i)) {
            (Some(p), Some(g)) => {
                let t = ((p - g).abs() / g / ERROR_MAP_SATURATION).min(1.0);
                [1.0, 1.0 - t, 1.0 - t]
            }
            _ => [0.5; 3],
        };
        img.set_pixel(i % w, i / w, &rgb);
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gt(w: usize, h: usize, seed: u64) -> DepthMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DepthMap::from_depths(w, h, (0..w * h).map(|_| rng.random_range(1.0..60.0)).collect()).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let g = gt(8, 6, 1);
        let r = compute_metrics(&g, &g, None, &MetricOptions::default()).unwrap();
        assert_eq!(r.values(), [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(r.n_pixels, 48);
    }

    #[test]
    fn scaled_prediction_closed_form() {
        let g = DepthMap::constant(5, 4, 10.0).unwrap();
        let r = compute_metrics(&g.scaled(1.3).unwrap(), &g, None, &MetricOptions::default()).unwrap();
        assert!((r.abs_rel - 0.3).abs() < 1e-15);
        assert_eq!((r.delta1, r.delta2, r.delta3), (0.0, 1.0, 1.0));
        let g = gt(9, 9, 2);
        for k in [0.5, 0.9, 1.1, 1.3] {
            let r = compute_metrics(
                &g.scaled(k).unwrap(),
                &g,
                None,
                &MetricOptions {
                    clip_max: 1e4,
                    ..Default::default()
                },
            )
            .unwrap();
            assert!((r.abs_rel - (k - 1.0f64).abs()).abs() < 1e-12);
            assert!(r.delta1 <= r.delta2 && r.delta2 <= r.delta3);
        }
    }

    #[test]
    fn matches_direct_loop() {
        let g = gt(20, 10, 3);
        let p = gt(20, 10, 4);
        let mask = Mask::from_fn(20, 10, |x, y| (x + y) % 3 != 0);
        let opts = MetricOptions {
            clip_max: 50.0,
            ..Default::default()
        };
        let r = compute_metrics(&p, &g, Some(&mask), &opts).unwrap();
        let (mut a, mut s, mut e, mut l, mut d) = (0.0, 0.0, 0.0, 0.0, [0.0; 3]);
        let mut n = 0.0;
        for y in 0..10 {
            for x in 0..20 {
                if !mask.get(x, y) {
                    continue;
                }
                #[allow(clippy::manual_clamp)]
                let pv = p.at(x, y).unwrap().min(50.0).max(1e-3);
                let gv = g.at(x, y).unwrap();
                n += 1.0;
                a += (pv - gv).abs() / gv;
                s += (pv - gv).powi(2) / gv;
                e += (pv - gv).powi(2);
                l += (pv.ln() - gv.ln()).powi(2);
                let th = if pv / gv > gv / pv { pv / gv } else { gv / pv };
                for (k, dk) in d.iter_mut().enumerate() {
                    if th < 1.25f64.powi(k as i32 + 1) {
                        *dk += 1.0;
                    }
                }
            }
        }
        let want = [
            a / n,
            s / n,
            (e / n).sqrt(),
            (l / n).sqrt(),
            d[0] / n,
            d[1] / n,
            d[2] / n,
        ];
        for (got, want) in r.values().iter().zip(want) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn disjoint_masks_combine_linearly() {
        let g = gt(16, 8, 5);
        let p = gt(16, 8, 6);
        let a = Mask::from_fn(16, 8, |x, _| x < 5);
        let b = a.not();
        let o = MetricOptions::default();
        let (ra, rb) = (
            compute_metrics(&p, &g, Some(&a), &o).unwrap(),
            compute_metrics(&p, &g, Some(&b), &o).unwrap(),
        );
        let r = compute_metrics(&p, &g, None, &o).unwrap();
        let (na, nb) = (ra.n_pixels as f64, rb.n_pixels as f64);
        assert!((r.abs_rel - (na * ra.abs_rel + nb * rb.abs_rel) / (na + nb)).abs() < 1e-12);
        assert!((r.sq_rel - (na * ra.sq_rel + nb * rb.sq_rel) / (na + nb)).abs() < 1e-12);
    }

    #[test]
    fn empty_support_and_clipping() {
        let g = DepthMap::constant(2, 2, 10.0).unwrap();
        let none = Mask::empty(2, 2);
        assert!(matches!(
            compute_metrics(&g, &g, Some(&none), &MetricOptions::default()),
            Err(Error::EmptySupport(_))
        ));
        let far = DepthMap::constant(2, 2, 200.0).unwrap();
        let g80 = DepthMap::constant(2, 2, 80.0).unwrap();
        assert_eq!(
            compute_metrics(&far, &g80, None, &MetricOptions::default())
                .unwrap()
                .abs_rel,
            0.0
        );
    }

    #[test]
    fn median_scaling_removes_scale() {
        let g = gt(6, 6, 7);
        let o = MetricOptions {
            median_scaling: true,
            ..Default::default()
        };
        let r = compute_metrics(&g.scaled(2.0).unwrap(), &g, None, &o).unwrap();
        assert!(r.abs_rel < 1e-12);
    }

    #[test]
    fn error_map_ramp() {
        let g = DepthMap::constant(3, 1, 10.0).unwrap();
        let mut p = DepthMap::from_depths(3, 1, vec![10.0, 20.0, 1.0]).unwrap();
        p.set(2, None);
        let img = error_map(&p, &g).unwrap();
        assert_eq!(img.pixel(0, 0), &[1.0, 1.0, 1.0]);
        assert_eq!(img.pixel(1, 0), &[1.0, 0.0, 0.0]);
        assert_eq!(img.pixel(2, 0), &[0.5, 0.5, 0.5]);
    }
}
