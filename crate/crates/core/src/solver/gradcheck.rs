//! Finite-difference check of the L1 photometric gradient with respect to
//! per-pixel depth.
//!
//! For target pixel `x` at depth `d`, with the better source `a` frozen at
//! the base depth,
//!
//! ```text
//! f(d)  = (1 - gamma) / C * sum_c |I_t,c(x) - W_a,c(u(d), v(d))|
//! f'(d) = -(1 - gamma) / C * sum_c sign(r_c) * (dW/du * du/dd + dW/dv * dv/dd)
//! ```
//!
//! The analytic derivative goes through the bilinear weights and the
//! projection Jacobian. It is only exact while the four taps stay fixed and
//! no residual changes sign, so such pixels are skipped.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{BilinearTaps, CameraIntrinsics, DepthMap, ImageBuffer, RigidPose};
use crate::scenesim::{Frame, FrameTriplet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckParams {
    /// Step as a fraction of the pixel depth.
    pub eps_rel: f64,
    pub threshold: f64,
    pub gamma: f64,
    /// Largest relative step of the convergence sweep.
    pub sweep_start: f64,
    pub sweep_halvings: usize,
}

impl Default for GradCheckParams {
    fn default() -> Self {
        Self {
            eps_rel: 1e-4,
            threshold: 1e-3,
            gamma: 0.85,
            sweep_start: 1e-2,
            sweep_halvings: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    /// Some evaluation point leaves the source frame or lands behind it.
    InvalidWarp,
    /// The source is flat at the sample position.
    ZeroTexture,
    /// The bilinear footprint changes within the stencil.
    TapCrossing,
    /// A residual changes sign within the stencil.
    SignChange,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradSample {
    pub x: usize,
    pub y: usize,
    pub depth: f64,
    pub source: Frame,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
    pub skipped: Option<SkipReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub samples: Vec<GradSample>,
    pub n_checked: usize,
    pub n_skipped: usize,
    pub max_rel_err: f64,
    /// Fraction of checked samples with `rel_err <= threshold`.
    pub pass_fraction: f64,
    /// `(eps_rel, median |numeric - analytic|)` per sweep step.
    pub sweep: Vec<(f64, f64)>,
    /// Median of `log2(err(eps) / err(eps / 2))` over the sweep.
    pub convergence_order: Option<f64>,
}

impl GradCheckReport {
    pub fn passed(&self, threshold: f64) -> bool {
        self.max_rel_err <= threshold
    }
}

struct Eval {
    taps: BilinearTaps,
    residual: Vec<f64>,
    f: f64,
}

struct PixelProblem<'a> {
    intr: &'a CameraIntrinsics,
    pose: RigidPose,
    source: &'a ImageBuffer,
    target: &'a [f64],
    x: usize,
    y: usize,
    scale: f64,
}

impl PixelProblem<'_> {
    fn point(&self, d: f64) -> Option<Vector3<f64>> {
        let ray = self.intr.ray(self.x as f64, self.y as f64);
        let q = self.pose.transform(&(ray * d));
        (q.z > 0.0).then_some(q)
    }

    fn eval(&self, d: f64) -> Option<Eval> {
        let q = self.point(d)?;
        let u = self.intr.fx * q.x / q.z + self.intr.cx;
        let v = self.intr.fy * q.y / q.z + self.intr.cy;
        let taps = BilinearTaps::locate(u, v, self.intr.width, self.intr.height)?;
        let mut w = vec![0.0; self.source.channels()];
        taps.sample_into(self.source, &mut w);
        let residual: Vec<f64> = self.target.iter().zip(&w).map(|(t, s)| t - s).collect();
        let f = self.scale * residual.iter().map(|r| r.abs()).sum::<f64>();
        Some(Eval { taps, residual, f })
    }

    /// `(du/dd, dv/dd)` from the projection Jacobian.
    fn uv_rate(&self, d: f64) -> (f64, f64) {
        let q = self.point(d).expect("evaluated point is in front of the camera");
        let dq = self.pose.rotation() * self.intr.ray(self.x as f64, self.y as f64);
        let z2 = q.z * q.z;
        (
            self.intr.fx * (dq.x * q.z - q.x * dq.z) / z2,
            self.intr.fy * (dq.y * q.z - q.y * dq.z) / z2,
        )
    }

    fn analytic(&self, d: f64, base: &Eval) -> (f64, bool) {
        let c = self.source.channels();
        let (mut gu, mut gv) = (vec![0.0; c], vec![0.0; c]);
        base.taps.gradient(self.source, &mut gu, &mut gv);
        let flat = gu.iter().chain(&gv).all(|g| *g == 0.0);
        let (du, dv) = self.uv_rate(d);
        let g = (0..c)
            .map(|k| -base.residual[k].signum() * (gu[k] * du + gv[k] * dv))
            .sum::<f64>();
        (self.scale * g, flat)
    }

    fn central(&self, d: f64, h: f64) -> Option<f64> {
        Some((self.eval(d + h)?.f - self.eval(d - h)?.f) / (2.0 * h))
    }

    /// Whether the footprint and residual signs hold over `[d - h, d + h]`.
    fn stable(&self, base: &Eval, d: f64, h: f64) -> std::result::Result<(), SkipReason> {
        for e in [self.eval(d - h), self.eval(d + h)] {
            let e = e.ok_or(SkipReason::InvalidWarp)?;
            if (e.taps.x0, e.taps.y0) != (base.taps.x0, base.taps.y0) {
                return Err(SkipReason::TapCrossing);
            }
            let same_sign = e
                .residual
                .iter()
                .zip(&base.residual)
                .all(|(a, b)| a.signum() == b.signum() && *a != 0.0 && *b != 0.0);
            if !same_sign {
                return Err(SkipReason::SignChange);
            }
        }
        Ok(())
    }
}

fn rel_err(a: f64, n: f64) -> f64 {
    let m = a.abs().max(n.abs());
    if m == 0.0 {
        0.0
    } else {
        (a - n).abs() / m
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Checks the analytic gradient at `pixels` of `depth`, which must be valid
/// there. The source with the lower L1 term at the base depth is used.
pub fn grad_check(
    triplet: &FrameTriplet,
    depth: &DepthMap,
    pixels: &[(usize, usize)],
    params: &GradCheckParams,
) -> Result<GradCheckReport> {
    triplet.validate()?;
    let intr = &triplet.intrinsics;
    depth.check_dims("depth", intr.width, intr.height)?;
    if !(params.eps_rel > 0.0 && params.sweep_start > 0.0 && params.threshold > 0.0) {
        return Err(Error::InvalidParameter(
            "gradient-check steps and threshold must be positive".into(),
        ));
    }
    let i_t = triplet.image(Frame::Current);
    let scale = (1.0 - params.gamma) / i_t.channels() as f64;
    let mut samples = Vec::with_capacity(pixels.len());
    // Per checked sample, per sweep step: |numeric - analytic|.
    let mut sweep_errs: Vec<Vec<f64>> = vec![Vec::new(); params.sweep_halvings + 1];
    for &(x, y) in pixels {
        if !intr.contains(x as f64, y as f64) {
            return Err(Error::InvalidParameter(format!(
                "sample pixel ({x}, {y}) outside the image"
            )));
        }
        let d = depth.at(x, y).ok_or(Error::InvalidDepth { depth: f64::NAN })?;
        let problem = |f: Frame| PixelProblem {
            intr,
            pose: triplet.pose_to(f),
            source: triplet.image(f),
            target: i_t.pixel(x, y),
            x,
            y,
            scale,
        };
        let candidates: Vec<(Frame, PixelProblem, Eval)> = [Frame::Prev, Frame::Next]
            .into_iter()
            .filter_map(|f| {
                let p = problem(f);
                p.eval(d).map(|e| (f, p, e))
            })
            .collect();
        let mut sample = GradSample {
            x,
            y,
            depth: d,
            source: Frame::Prev,
            analytic: 0.0,
            numeric: 0.0,
            rel_err: 0.0,
            skipped: None,
        };
        let Some((frame, p, base)) = candidates.into_iter().min_by(|a, b| a.2.f.total_cmp(&b.2.f)) else {
            sample.skipped = Some(SkipReason::InvalidWarp);
            samples.push(sample);
            continue;
        };
        sample.source = frame;
        let h = params.eps_rel * d;
        let (analytic, flat) = p.analytic(d, &base);
        sample.analytic = analytic;
        sample.numeric = p.central(d, h).unwrap_or(f64::NAN);
        if sample.numeric.is_nan() {
            sample.skipped = Some(SkipReason::InvalidWarp);
        } else if flat {
            sample.skipped = Some(SkipReason::ZeroTexture);
        } else if let Err(reason) = p.stable(&base, d, h) {
            sample.skipped = Some(reason);
        } else {
            sample.rel_err = rel_err(analytic, sample.numeric);
            if p.stable(&base, d, params.sweep_start * d).is_ok() {
                for (k, errs) in sweep_errs.iter_mut().enumerate() {
                    let hk = params.sweep_start * d * 0.5f64.powi(k as i32);
                    if let Some(n) = p.central(d, hk) {
                        errs.push((n - analytic).abs());
                    }
                }
            }
        }
        samples.push(sample);
    }

    let checked: Vec<&GradSample> = samples.iter().filter(|s| s.skipped.is_none()).collect();
    let n_checked = checked.len();
    let max_rel_err = checked.iter().map(|s| s.rel_err).fold(0.0, f64::max);
    let pass_fraction = if n_checked == 0 {
        1.0
    } else {
        checked.iter().filter(|s| s.rel_err <= params.threshold).count() as f64 / n_checked as f64
    };
    let sweep: Vec<(f64, f64)> = sweep_errs
        .into_iter()
        .enumerate()
        .filter_map(|(k, e)| Some((params.sweep_start * 0.5f64.powi(k as i32), median(e)?)))
        .collect();
    let orders: Vec<f64> = sweep
        .windows(2)
        .filter(|w| w[0].1 > 0.0 && w[1].1 > 0.0)
        .map(|w| (w[0].1 / w[1].1).log2())
        .collect();
    Ok(GradCheckReport {
        n_skipped: samples.len() - n_checked,
        samples,
        n_checked,
        max_rel_err,
        pass_fraction,
        sweep,
        convergence_order: median(orders),
    })
}

/// `count` distinct pixels drawn from the interior, at least 3 px away from
/// every object-mask boundary in the target frame.
pub fn sample_pixels(triplet: &FrameTriplet, count: usize, seed: u64) -> Vec<(usize, usize)> {
    let (w, h) = (triplet.intrinsics.width, triplet.intrinsics.height);
    let s = triplet.mask(Frame::Current);
    let (mut grown, mut shrunk) = (s.clone(), s.clone());
    for _ in 0..3 {
        grown = grown.dilate3();
        shrunk = shrunk.erode3();
    }
    let boundary = grown.and_not(&shrunk);
    let margin = 3;
    let pool: Vec<(usize, usize)> = (margin..h.saturating_sub(margin))
        .flat_map(|y| (margin..w.saturating_sub(margin)).map(move |x| (x, y)))
        .filter(|&(x, y)| !boundary.get(x, y))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, pool.len(), count.min(pool.len())).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| pool[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenesim::{render, suite};

    #[test]
    fn textured_static_scene_passes() {
        let t = render(&suite::standard_suite(suite::SuiteKind::Static, 1, 3)[0]).unwrap();
        let px = sample_pixels(&t, 200, 1);
        let r = grad_check(&t, t.depth(Frame::Current), &px, &GradCheckParams::default()).unwrap();
        assert!(r.n_checked >= 100, "{} checked", r.n_checked);
        assert!(r.pass_fraction >= 0.95, "{}", r.pass_fraction);
        let order = r.convergence_order.unwrap();
        assert!((order - 2.0).abs() < 0.3, "order {order}");
    }

    #[test]
    fn constant_image_is_all_skipped() {
        let mut t = render(&suite::standard_suite(suite::SuiteKind::Static, 1, 3)[0]).unwrap();
        for img in &mut t.images {
            *img = ImageBuffer::filled(img.width(), img.height(), 3, 0.4).unwrap();
        }
        let px = sample_pixels(&t, 50, 2);
        let r = grad_check(&t, t.depth(Frame::Current), &px, &GradCheckParams::default()).unwrap();
        assert_eq!(r.n_checked, 0);
        let flat: Vec<_> = r
            .samples
            .iter()
            .filter(|s| s.skipped == Some(SkipReason::ZeroTexture))
            .collect();
        assert!(!flat.is_empty());
        assert!(flat.iter().all(|s| s.analytic == 0.0 && s.numeric.abs() < 1e-12));
        assert!(r
            .samples
            .iter()
            .all(|s| matches!(s.skipped, Some(SkipReason::ZeroTexture | SkipReason::InvalidWarp))));
    }

    #[test]
    fn sampling_is_seeded_and_distinct() {
        let t = render(&suite::standard_suite(suite::SuiteKind::Moving, 1, 3)[0]).unwrap();
        let a = sample_pixels(&t, 64, 7);
        assert_eq!(a, sample_pixels(&t, 64, 7));
        let mut b = a.clone();
        b.dedup();
        assert_eq!(a.len(), b.len());
    }
}
