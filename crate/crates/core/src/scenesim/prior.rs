//! Synthetic depth priors: ground truth with configurable corruption.

use std::fmt;
use std::str::FromStr;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DepthMap;

/// How the prior is derived from ground truth.
///
/// Textual form: `exact`, `noise:<sigma>` or `bias:<beta>`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PriorMode {
    #[default]
    Exact,
    /// `d * exp(e)`, `e ~ Uniform(-sigma, sigma)` per pixel.
    Noise(f64),
    /// `d * (1 + beta)`.
    Bias(f64),
}

impl PriorMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PriorMode::Exact => Ok(()),
            PriorMode::Noise(s) if s.is_finite() && s >= 0.0 => Ok(()),
            PriorMode::Noise(s) => Err(Error::InvalidParameter(format!(
                "prior noise sigma must be finite and >= 0, got {s}"
            ))),
            PriorMode::Bias(b) if b.is_finite() && b > -1.0 => Ok(()),
            PriorMode::Bias(b) => Err(Error::InvalidParameter(format!(
                "prior bias {b} would make depths non-positive (need beta > -1)"
            ))),
        }
    }
}

impl fmt::Display for PriorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriorMode::Exact => write!(f, "exact"),
            PriorMode::Noise(s) => write!(f, "noise:{s}"),
            PriorMode::Bias(b) => write!(f, "bias:{b}"),
        }
    }
}

impl FromStr for PriorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || {
            Error::InvalidParameter(format!(
                "prior mode {s:?}: expected `exact`, `noise:<sigma>` or `bias:<beta>`"
            ))
        };
        let mode = match s.split_once(':') {
            None if s == "exact" => PriorMode::Exact,
            Some(("noise", v)) => PriorMode::Noise(v.trim().parse().map_err(|_| bad())?),
            Some(("bias", v)) => PriorMode::Bias(v.trim().parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        mode.validate()?;
        Ok(mode)
    }
}

impl TryFrom<String> for PriorMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PriorMode> for String {
    fn from(m: PriorMode) -> String {
        m.to_string()
    }
}

/// Corrupts `gt` according to `mode`. Invalid ground-truth pixels stay
/// invalid; the noise stream advances once per pixel regardless.
pub fn make_prior(gt: &DepthMap, mode: PriorMode, seed: u64) -> Result<DepthMap> {
    mode.validate()?;
    let mut out = gt.clone();
    match mode {
        PriorMode::Exact => {}
        PriorMode::Bias(beta) => {
            for i in 0..gt.len() {
                out.set(i, gt.get(i).map(|d| d * (1.0 + beta)));
            }
        }
        PriorMode::Noise(sigma) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in 0..gt.len() {
                let e = if sigma > 0.0 {
                    rng.random_range(-sigma..sigma)
                } else {
                    0.0
                };
                out.set(i, gt.get(i).map(|d| d * e.exp()));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt() -> DepthMap {
        DepthMap::from_depths(4, 3, (1..=12).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn exact_is_bitwise_copy() {
        assert_eq!(make_prior(&gt(), PriorMode::Exact, 3).unwrap(), gt());
    }

    #[test]
    fn bias_scales() {
        let d = DepthMap::constant(2, 2, 10.0).unwrap();
        let p = make_prior(&d, PriorMode::Bias(0.1), 0).unwrap();
        assert!(p.depths().iter().all(|v| (*v - 11.0).abs() < 1e-12));
        assert!(make_prior(&d, PriorMode::Bias(-1.0), 0).is_err());
    }

    #[test]
    fn noise_is_seeded_and_bounded() {
        let a = make_prior(&gt(), PriorMode::Noise(0.05), 9).unwrap();
        assert_eq!(a, make_prior(&gt(), PriorMode::Noise(0.05), 9).unwrap());
        assert_ne!(a, make_prior(&gt(), PriorMode::Noise(0.05), 10).unwrap());
        for (p, g) in a.depths().iter().zip(gt().depths()) {
            assert!((p / g).ln().abs() <= 0.05);
        }
    }

    #[test]
    fn parses_textual_modes() {
        assert_eq!("exact".parse::<PriorMode>().unwrap(), PriorMode::Exact);
        assert_eq!("noise:0.05".parse::<PriorMode>().unwrap(), PriorMode::Noise(0.05));
        assert_eq!("bias:0.3".parse::<PriorMode>().unwrap(), PriorMode::Bias(0.3));
        assert!("bias".parse::<PriorMode>().is_err());
        assert!("noise:-1".parse::<PriorMode>().is_err());
        let m = PriorMode::Bias(0.3);
        assert_eq!(m.to_string().parse::<PriorMode>().unwrap(), m);
    }
}
