//! Seeded value noise used to texture planes and sprites.
//!
//! Two octaves of lattice noise with quintic interpolation, each channel and
//! octave on its own offset lattice. The quintic fade
//! keeps the texture C2-continuous, so bilinear resampling error is bounded
//! by the (small) second derivative at pixel scale.

use serde::{Deserialize, Serialize};

/// Number of noise octaves. Fixed so that textures stay band-limited.
pub const OCTAVES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TextureKind {
    #[default]
    ValueNoise,
    /// Uniform color. Rejected by scene validation; exists so that configs
    /// asking for it get a clear error.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextureSpec {
    #[serde(default)]
    pub kind: TextureKind,
    pub seed: u64,
    /// Lattice spacing of the coarsest octave, meters on the surface.
    pub cell: f64,
    /// Peak deviation from `mean`.
    #[serde(default = "default_contrast")]
    pub contrast: f64,
    #[serde(default = "default_mean")]
    pub mean: f64,
}

fn default_contrast() -> f64 {
    0.35
}

fn default_mean() -> f64 {
    0.5
}

impl TextureSpec {
    pub fn value_noise(seed: u64, cell: f64) -> Self {
        Self {
            kind: TextureKind::ValueNoise,
            seed,
            cell,
            contrast: default_contrast(),
            mean: default_mean(),
        }
    }

    /// RGB value at surface coordinates `(s, t)` meters.
    pub fn eval(&self, s: f64, t: f64) -> [f64; 3] {
        let mut rgb = [self.mean; 3];
        if self.kind == TextureKind::Constant {
            return rgb.map(|v| v.clamp(0.0, 1.0));
        }
        for (ch, out) in rgb.iter_mut().enumerate() {
            let mut acc = 0.0;
            let mut norm = 0.0;
            let mut amp = 1.0;
            let mut cell = self.cell;
            for octave in 0..OCTAVES {
                let key = self
                    .seed
                    .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                    .wrapping_add((ch as u64) << 32 | octave as u64);
                // Per-layer lattice offsets keep the flat lines of the fade
                // from coinciding across channels and octaves.
                let (ox, oy) = (unit(key ^ 0x5851_F42D), unit(key ^ 0x1405_7B7E));
                acc += amp * lattice_noise(s / cell + ox, t / cell + oy, key);
                norm += amp;
                amp *= 0.5;
                cell *= 0.5;
            }
            *out = (self.mean + self.contrast * acc / norm).clamp(0.0, 1.0);
        }
        rgb
    }
}

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

fn lattice_noise(x: f64, y: f64, key: u64) -> f64 {
    let xf = x.floor();
    let yf = y.floor();
    let (i, j) = (xf as i64, yf as i64);
    let (fx, fy) = (fade(x - xf), fade(y - yf));
    let v00 = lattice_value(i, j, key);
    let v10 = lattice_value(i + 1, j, key);
    let v01 = lattice_value(i, j + 1, key);
    let v11 = lattice_value(i + 1, j + 1, key);
    let a = v00 + (v10 - v00) * fx;
    let b = v01 + (v11 - v01) * fx;
    a + (b - a) * fy
}

/// Hash of `key` into `[0, 1)`.
fn unit(key: u64) -> f64 {
    0.5 * (lattice_value(0, 0, key) + 1.0)
}

/// Hash of a lattice point into `[-1, 1]`.
fn lattice_value(i: i64, j: i64, key: u64) -> f64 {
    let mut z = key ^ (i as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93) ^ (j as u64).wrapping_mul(0xA076_1D64_78BD_642F);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let t = TextureSpec::value_noise(42, 0.7);
        for k in 0..500 {
            let (s, u) = (k as f64 * 0.137 - 20.0, k as f64 * 0.071 - 9.0);
            let a = t.eval(s, u);
            assert_eq!(a, t.eval(s, u));
            assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn has_variance_and_differs_by_seed() {
        let a = TextureSpec::value_noise(1, 0.5);
        let b = TextureSpec::value_noise(2, 0.5);
        let samples: Vec<f64> = (0..400).map(|k| a.eval(k as f64 * 0.09, 0.3)[0]).collect();
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / samples.len() as f64;
        assert!(var > 1e-3, "variance {var}");
        assert_ne!(a.eval(0.3, 0.3), b.eval(0.3, 0.3));
    }

    #[test]
    fn channels_are_decorrelated() {
        let t = TextureSpec::value_noise(9, 0.5);
        let v = t.eval(1.234, 5.678);
        assert!(v[0] != v[1] && v[1] != v[2]);
    }

    #[test]
    fn continuous_across_lattice_lines() {
        let t = TextureSpec::value_noise(3, 1.0);
        let a = t.eval(2.0 - 1e-9, 0.4);
        let b = t.eval(2.0 + 1e-9, 0.4);
        for c in 0..3 {
            assert!((a[c] - b[c]).abs() < 1e-6);
        }
    }
}
