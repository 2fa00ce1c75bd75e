//! Pattern formation: oscillator state to foot targets, and planar leg kinematics.
//!
//! Foot targets live in each hip frame (x forward, z up, attached to the
//! pitched body). Joint angles use a right-handed rotation about +y, so a
//! positive hip angle swings the foot backwards and the animal-like
//! knee-backward branch has `knee <= 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rhythm::OscillatorState;
use crate::NUM_LEGS;

/// Radial margin kept from the workspace boundary (m).
pub const WORKSPACE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PfParams {
    /// Step length scale `L_step` (m); multiplied by the oscillator amplitude.
    pub step_length: f64,
    /// Nominal leg length `h` (m).
    pub nominal_height: f64,
    /// Max ground clearance during swing (m).
    pub clearance: f64,
    /// Max ground penetration during stance (m).
    pub penetration: f64,
}

impl Default for PfParams {
    fn default() -> Self {
        Self {
            step_length: 0.05,
            nominal_height: 0.25,
            clearance: 0.05,
            penetration: 0.01,
        }
    }
}

impl PfParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("pattern.step_length", self.step_length),
            ("pattern.nominal_height", self.nominal_height),
            ("pattern.clearance", self.clearance),
            ("pattern.penetration", self.penetration),
        ];
        for (key, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(key, "must be finite and > 0"));
            }
        }
        if self.clearance >= self.nominal_height {
            return Err(Error::config("pattern.clearance", "must be < nominal_height"));
        }
        if self.penetration >= self.nominal_height {
            return Err(Error::config("pattern.penetration", "must be < nominal_height"));
        }
        Ok(())
    }
}

/// Set-point offsets of the foot oscillation, per leg (m).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FootOffsets {
    pub x: [f64; NUM_LEGS],
    pub z: [f64; NUM_LEGS],
}

/// Desired foot positions in each hip frame (m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootTarget {
    pub x: [f64; NUM_LEGS],
    pub z: [f64; NUM_LEGS],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LegGeometry {
    /// Thigh length (m).
    pub l1: f64,
    /// Shank length (m).
    pub l2: f64,
    /// Hip x positions in the base frame, FR, FL, RR, RL (m).
    pub hip_x: [f64; NUM_LEGS],
    pub hip_limits: [f64; 2],
    pub knee_limits: [f64; 2],
}

impl Default for LegGeometry {
    fn default() -> Self {
        Self {
            l1: 0.2,
            l2: 0.2,
            hip_x: [0.183, 0.183, -0.183, -0.183],
            hip_limits: [-1.6, 2.6],
            knee_limits: [-2.8, 0.0],
        }
    }
}

impl LegGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.l1 > 0.0) || !self.l1.is_finite() {
            return Err(Error::config("robot.legs.l1", "must be finite and > 0"));
        }
        if !(self.l2 > 0.0) || !self.l2.is_finite() {
            return Err(Error::config("robot.legs.l2", "must be finite and > 0"));
        }
        if self.hip_limits[0] >= self.hip_limits[1] {
            return Err(Error::config("robot.legs.hip_limits", "min must be < max"));
        }
        if self.knee_limits[0] >= self.knee_limits[1] {
            return Err(Error::config("robot.legs.knee_limits", "min must be < max"));
        }
        Ok(())
    }

    pub fn min_reach(&self) -> f64 {
        (self.l1 - self.l2).abs() + WORKSPACE_EPS
    }

    pub fn max_reach(&self) -> f64 {
        self.l1 + self.l2 - WORKSPACE_EPS
    }

    /// Clamps joint angles to the configured limits.
    pub fn clamp_joints(&self, a: LegAngles) -> LegAngles {
        LegAngles {
            hip: a.hip.clamp(self.hip_limits[0], self.hip_limits[1]),
            knee: a.knee.clamp(self.knee_limits[0], self.knee_limits[1]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegAngles {
    pub hip: f64,
    pub knee: f64,
}

/// Desired foot positions from oscillator state and offsets.
///
/// `x = x_off - L_step r cos(theta)`; `z` uses the clearance branch when
/// `sin(theta) > 0` (swing) and the penetration branch otherwise (stance).
pub fn foot_target(osc: &OscillatorState, off: &FootOffsets, pf: &PfParams) -> FootTarget {
    let mut t = FootTarget {
        x: [0.0; NUM_LEGS],
        z: [0.0; NUM_LEGS],
    };
    for i in 0..NUM_LEGS {
        let (s, c) = osc.theta[i].sin_cos();
        t.x[i] = off.x[i] - pf.step_length * osc.r[i] * c;
        let lift = if s > 0.0 { pf.clearance } else { pf.penetration };
        t.z[i] = off.z[i] - pf.nominal_height + lift * s;
    }
    t
}

/// Same as [`foot_target`] with the horizontal oscillation switched off
/// (`x = x_off`), for action spaces where the rhythm only drives `z`.
pub fn foot_target_z_only(osc: &OscillatorState, off: &FootOffsets, pf: &PfParams) -> FootTarget {
    let mut t = foot_target(osc, off, pf);
    t.x = off.x;
    t
}

/// Radially clamps a hip-frame point into the reachable annulus.
pub fn clamp_to_workspace(x: f64, z: f64, geom: &LegGeometry) -> (f64, f64) {
    let d = x.hypot(z);
    let lo = geom.min_reach();
    let hi = geom.max_reach();
    if d > hi {
        (x * hi / d, z * hi / d)
    } else if d < lo {
        if d == 0.0 {
            // direction is undefined; reach straight down
            (0.0, -lo)
        } else {
            (x * lo / d, z * lo / d)
        }
    } else {
        (x, z)
    }
}

/// Planar two-link IK, knee-backward branch.
pub fn inverse_kinematics(x: f64, z: f64, geom: &LegGeometry) -> Result<LegAngles> {
    if !x.is_finite() || !z.is_finite() {
        return Err(Error::NonFinite("IK target"));
    }
    let (x, z) = clamp_to_workspace(x, z, geom);
    let (l1, l2) = (geom.l1, geom.l2);
    let d2 = x * x + z * z;
    let cos_knee = ((d2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let knee = -cos_knee.acos();
    // direction of the hip-foot line, measured like a joint angle from straight down
    let psi = (-x).atan2(-z);
    let (sk, ck) = knee.sin_cos();
    let hip = psi - (l2 * sk).atan2(l1 + l2 * ck);
    Ok(LegAngles { hip, knee })
}

/// Foot position in the hip frame for given joint angles.
pub fn forward_kinematics(hip: f64, knee: f64, geom: &LegGeometry) -> (f64, f64) {
    let a2 = hip + knee;
    let x = -geom.l1 * hip.sin() - geom.l2 * a2.sin();
    let z = -geom.l1 * hip.cos() - geom.l2 * a2.cos();
    (x, z)
}
