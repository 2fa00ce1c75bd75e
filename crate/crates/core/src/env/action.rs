//! Action decoding: raw policy outputs in `[-1, 1]` to oscillator drive and
//! foot offsets.
//!
//! The action vector is laid out channel by channel, four legs each, in the
//! order `mu`, `omega`, `x_off`, `z_off`, skipping disabled channels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pattern::FootOffsets;
use crate::rhythm::SupraspinalDrive;
use crate::NUM_LEGS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActionConfig {
    pub use_mu: bool,
    pub use_omega: bool,
    pub use_x_off: bool,
    pub use_z_off: bool,
    /// Keep the horizontal oscillation `L_step r cos(theta)` in the foot
    /// target. Off for the "rhythm in z only" case.
    pub x_oscillation: bool,
    pub mu_range: [f64; 2],
    /// Intrinsic frequency range (Hz under the default convention).
    pub omega_range: [f64; 2],
    pub x_off_range: [f64; 2],
    pub z_off_range: [f64; 2],
    /// Amplitude used when `mu` is not modulated.
    pub default_mu: f64,
    /// Frequency used when `omega` is not modulated. Zero freezes the rhythm.
    pub fixed_omega: f64,
}

impl Default for ActionConfig {
    fn default() -> Self {
        Self::case(4).expect("case 4 exists")
    }
}

impl ActionConfig {
    fn base() -> Self {
        Self {
            use_mu: false,
            use_omega: false,
            use_x_off: false,
            use_z_off: false,
            x_oscillation: true,
            mu_range: [0.5, 4.0],
            omega_range: [0.0, 5.0],
            x_off_range: [-0.07, 0.07],
            z_off_range: [-0.07, 0.07],
            default_mu: 1.0,
            fixed_omega: 2.5,
        }
    }

    /// The six action-space cases:
    ///
    /// 1. flat terrain, rhythm modulation (mu, omega)
    /// 2. gap terrain, rhythm modulation (mu, omega)
    /// 3. gap terrain, rhythm in z only (omega) plus x offset
    /// 4. gap terrain, rhythm (mu, omega) plus x offset
    /// 5. gap terrain, offsets only (x, z), rhythm held at `fixed_omega`
    /// 6. gap terrain, rhythm plus both offsets
    ///
    /// Cases 1 and 2 share an action space; the terrain differs.
    pub fn case(n: u8) -> Result<Self> {
        let b = Self::base();
        Ok(match n {
            1 | 2 => Self {
                use_mu: true,
                use_omega: true,
                ..b
            },
            3 => Self {
                use_omega: true,
                use_x_off: true,
                x_oscillation: false,
                ..b
            },
            4 => Self {
                use_mu: true,
                use_omega: true,
                use_x_off: true,
                ..b
            },
            5 => Self {
                use_x_off: true,
                use_z_off: true,
                ..b
            },
            6 => Self {
                use_mu: true,
                use_omega: true,
                use_x_off: true,
                use_z_off: true,
                ..b
            },
            _ => return Err(Error::config("action.case", format!("{n} is not in 1..=6"))),
        })
    }

    pub fn channels(&self) -> usize {
        [self.use_mu, self.use_omega, self.use_x_off, self.use_z_off]
            .iter()
            .filter(|&&b| b)
            .count()
    }

    pub fn dim(&self) -> usize {
        NUM_LEGS * self.channels()
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels() == 0 {
            return Err(Error::config("action", "at least one channel must be enabled"));
        }
        for (key, [lo, hi]) in [
            ("action.mu_range", self.mu_range),
            ("action.omega_range", self.omega_range),
            ("action.x_off_range", self.x_off_range),
            ("action.z_off_range", self.z_off_range),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::config(key, "need finite min <= max"));
            }
        }
        if !(self.mu_range[0] >= 0.0) {
            return Err(Error::config("action.mu_range", "amplitude must be >= 0"));
        }
        if !(self.default_mu >= 0.0 && self.default_mu.is_finite()) {
            return Err(Error::config("action.default_mu", "must be finite and >= 0"));
        }
        if !self.fixed_omega.is_finite() {
            return Err(Error::config("action.fixed_omega", "must be finite"));
        }
        Ok(())
    }
}

#[inline]
fn affine(raw: f64, [lo, hi]: [f64; 2]) -> f64 {
    lo + 0.5 * (raw + 1.0) * (hi - lo)
}

/// Clamps raw actions to `[-1, 1]`, rejecting NaN.
pub fn clamp_action(raw: &[f64]) -> Result<Vec<f64>> {
    raw.iter()
        .map(|&a| {
            if a.is_nan() {
                Err(Error::NonFinite("action"))
            } else {
                Ok(a.clamp(-1.0, 1.0))
            }
        })
        .collect()
}

/// Maps a raw action to oscillator drive and foot offsets.
pub fn scale_action(raw: &[f64], cfg: &ActionConfig) -> Result<(SupraspinalDrive, FootOffsets)> {
    if raw.len() != cfg.dim() {
        return Err(Error::Shape {
            what: "action".into(),
            expected: cfg.dim(),
            actual: raw.len(),
        });
    }
    let raw = clamp_action(raw)?;
    let mut drive = SupraspinalDrive::uniform(cfg.default_mu, cfg.fixed_omega);
    let mut off = FootOffsets::default();
    let mut chunks = raw.chunks_exact(NUM_LEGS);
    let mut next = |on: bool| if on { chunks.next() } else { None };
    if let Some(c) = next(cfg.use_mu) {
        drive.mu = std::array::from_fn(|i| affine(c[i], cfg.mu_range));
    }
    if let Some(c) = next(cfg.use_omega) {
        drive.omega = std::array::from_fn(|i| affine(c[i], cfg.omega_range));
    }
    if let Some(c) = next(cfg.use_x_off) {
        off.x = std::array::from_fn(|i| affine(c[i], cfg.x_off_range));
    }
    if let Some(c) = next(cfg.use_z_off) {
        off.z = std::array::from_fn(|i| affine(c[i], cfg.z_off_range));
    }
    Ok((drive, off))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_dimensions() {
        let dims: Vec<usize> = (1..=6).map(|c| ActionConfig::case(c).unwrap().dim()).collect();
        assert_eq!(dims, vec![8, 8, 8, 12, 8, 16]);
        assert!(ActionConfig::case(0).is_err());
        assert!(ActionConfig::case(7).is_err());
    }

    #[test]
    fn mu_upper_limit() {
        let cfg = ActionConfig::case(1).unwrap();
        let mut raw = vec![0.0; 8];
        raw[..4].fill(1.0);
        let (drive, _) = scale_action(&raw, &cfg).unwrap();
        assert_eq!(drive.mu, [4.0; 4]);
    }

    #[test]
    fn omega_lower_limit() {
        let cfg = ActionConfig::case(1).unwrap();
        let mut raw = vec![0.0; 8];
        raw[4..].fill(-1.0);
        let (drive, _) = scale_action(&raw, &cfg).unwrap();
        assert_eq!(drive.omega, [0.0; 4]);
    }

    #[test]
    fn x_off_midpoint_is_zero() {
        let cfg = ActionConfig::case(4).unwrap();
        let (drive, off) = scale_action(&[0.0; 12], &cfg).unwrap();
        assert_eq!(off.x, [0.0; 4]);
        assert_eq!(off.z, [0.0; 4]);
        assert_eq!(drive.mu, [2.25; 4]);
        assert_eq!(drive.omega, [2.5; 4]);
    }

    #[test]
    fn disabled_channels_hold_defaults() {
        let cfg = ActionConfig::case(5).unwrap();
        let (drive, off) = scale_action(&[1.0; 8], &cfg).unwrap();
        assert_eq!(drive.mu, [1.0; 4]);
        assert_eq!(drive.omega, [2.5; 4]);
        assert!(off.x.iter().all(|v| (v - 0.07).abs() < 1e-15));
        assert!(off.z.iter().all(|v| (v - 0.07).abs() < 1e-15));
    }

    #[test]
    fn out_of_range_is_clamped() {
        let cfg = ActionConfig::case(6).unwrap();
        let raw: Vec<f64> = (0..16).map(|i| if i % 2 == 0 { 5.0 } else { -3.0 }).collect();
        let (drive, off) = scale_action(&raw, &cfg).unwrap();
        assert_eq!(drive.mu, [4.0, 0.5, 4.0, 0.5]);
        assert_eq!(drive.omega, [5.0, 0.0, 5.0, 0.0]);
        assert!(off.x.iter().all(|v| v.abs() <= 0.07 + 1e-15));
    }

    #[test]
    fn wrong_length_and_nan_rejected() {
        let cfg = ActionConfig::case(4).unwrap();
        assert!(scale_action(&[0.0; 8], &cfg).is_err());
        let mut raw = vec![0.0; 12];
        raw[3] = f64::NAN;
        assert!(scale_action(&raw, &cfg).is_err());
    }

    #[test]
    fn empty_config_invalid() {
        let cfg = ActionConfig {
            use_mu: false,
            use_omega: false,
            use_x_off: false,
            use_z_off: false,
            ..ActionConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
