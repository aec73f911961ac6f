//! SSIM + L1 photometric error.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ImageBuffer, Mask};
use crate::reduce::pairwise_sum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhotometricParams {
    /// Weight of the SSIM term; `1 - gamma` weighs L1.
    pub gamma: f64,
    /// Odd SSIM window side, pixels.
    pub ssim_window: usize,
    pub ssim_c1: f64,
    pub ssim_c2: f64,
}

impl Default for PhotometricParams {
    fn default() -> Self {
        Self {
            gamma: 0.85,
            ssim_window: 3,
            ssim_c1: 1e-4,
            ssim_c2: 9e-4,
        }
    }
}

impl PhotometricParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidParameter(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if self.ssim_window < 3 || self.ssim_window.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "SSIM window must be odd and >= 3, got {}",
                self.ssim_window
            )));
        }
        if !(self.ssim_c1 > 0.0 && self.ssim_c2 > 0.0) {
            return Err(Error::InvalidParameter("SSIM constants must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-pixel error with the set of pixels that take part in aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub support: Mask,
}

impl ErrorMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>, support: Mask) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::InvalidParameter("error map size mismatch".into()));
        }
        support.check_dims("error map support", width, height)?;
        Ok(Self {
            width,
            height,
            values,
            support,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
            support: Mask::full(width, height),
        }
    }

    pub(crate) fn check_same(&self, other: &ErrorMap) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch {
                what: "error map",
                got_w: other.width,
                got_h: other.height,
                want_w: self.width,
                want_h: self.height,
            });
        }
        Ok(())
    }

    /// Mean over the support; `None` when the support is empty.
    pub fn mean_over_support(&self) -> Option<f64> {
        let v: Vec<f64> = self
            .values
            .iter()
            .zip(self.support.data())
            .filter(|(_, s)| **s)
            .map(|(v, _)| *v)
            .collect();
        crate::reduce::mean(&v)
    }

    /// Map as a grayscale image, values clamped into `[0, 1]`.
    pub fn to_image(&self) -> ImageBuffer {
        ImageBuffer::from_vec(
            self.width,
            self.height,
            1,
            self.values.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        )
        .expect("clamped values lie in [0, 1]")
    }
}

/// Reflect-101 index: `-1 -> 1`, `n -> n - 2`.
#[inline]
fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - j;
    }
    j as usize
}

/// Per-pixel, per-channel SSIM over a square window with reflect-101
/// borders. Output is channel-interleaved like the inputs.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer, params: &PhotometricParams) -> Result<Vec<f64>> {
    params.validate()?;
    if !a.same_shape(b) {
        return Err(Error::InvalidImage("SSIM inputs differ in shape".into()));
    }
    let (w, h, c) = (a.width(), a.height(), a.channels());
    let r = (params.ssim_window / 2) as i64;
    let n = (params.ssim_window * params.ssim_window) as f64;
    let (c1, c2) = (params.ssim_c1, params.ssim_c2);
    let mut out = vec![0.0; w * h * c];
    out.par_chunks_mut(w * c).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            for ch in 0..c {
                let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in -r..=r {
                    let yy = reflect(y as i64 + dy, h);
                    for dx in -r..=r {
                        let xx = reflect(x as i64 + dx, w);
                        let va = a.get(xx, yy, ch);
                        let vb = b.get(xx, yy, ch);
                        sa += va;
                        sb += vb;
                        saa += va * va;
                        sbb += vb * vb;
                        sab += va * vb;
                    }
                }
                let (ma, mb) = (sa / n, sb / n);
                let va = saa / n - ma * ma;
                let vb = sbb / n - mb * mb;
                let cov = sab / n - ma * mb;
                let num = (2.0 * (ma * mb) + c1) * (2.0 * cov + c2);
                let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
                row[x * c + ch] = num / den;
            }
        }
    });
    Ok(out)
}

/// `E = (gamma / 2) (1 - SSIM) + (1 - gamma) |a - b|`, meaned over channels.
/// `1 - SSIM` is clamped at 0 so the error is never negative.
pub fn photometric_error(a: &ImageBuffer, b: &ImageBuffer, params: &PhotometricParams) -> Result<ErrorMap> {
    let s = ssim(a, b, params)?;
    let (w, h, c) = (a.width(), a.height(), a.channels());
    let g = params.gamma;
    let (da, db) = (a.data(), b.data());
    let values = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let terms: Vec<f64> = (0..c)
                .map(|k| {
                    let j = i * c + k;
                    0.5 * g * (1.0 - s[j]).max(0.0) + (1.0 - g) * (da[j] - db[j]).abs()
                })
                .collect();
            pairwise_sum(&terms) / c as f64
        })
        .collect();
    ErrorMap::new(w, h, values, Mask::full(w, h))
}

/// Photometric error with pixels in `o_a` painted black on both sides,
/// zeroed, and removed from the support.
pub fn masked_photometric(
    i_t: &ImageBuffer,
    i_warp: &ImageBuffer,
    o_a: &Mask,
    params: &PhotometricParams,
) -> Result<ErrorMap> {
    o_a.check_dims("occlusion mask", i_t.width(), i_t.height())?;
    let a = i_t.painted_black(o_a);
    let b = i_warp.painted_black(o_a);
    let mut e = photometric_error(&a, &b, params)?;
    for (v, o) in e.values.iter_mut().zip(o_a.data()) {
        if *o {
            *v = 0.0;
        }
    }
    e.support = o_a.not();
    Ok(e)
}
