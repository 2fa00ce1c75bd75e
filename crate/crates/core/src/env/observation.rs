//! Observation assembly.
//!
//! Layout, in order:
//!
//! | block                | size | contents                                        |
//! |----------------------|------|-------------------------------------------------|
//! | orientation          | 1    | pitch                                           |
//! | linear velocity      | 2    | base velocity in the body frame (fwd, up)       |
//! | angular velocity     | 1    | pitch rate                                      |
//! | joint positions      | 8    | hip, knee per leg                               |
//! | joint velocities     | 8    |                                                 |
//! | foot contacts        | 4    | 0 / 1                                           |
//! | previous action      | k    | raw, clamped to [-1, 1]                         |
//! | CPG state            | 20   | r, r_dot, cos(theta), sin(theta), theta_dot     |
//! | feet gap distance    | 4/8  | (start, end) per front foot or per foot         |
//! | base gap distance    | 2    | (start, end) from the base                      |
//! | feet clearance       | 4    | foot height over the ground below it            |
//! | gap contact          | 4    | foot below ground level inside a gap            |
//!
//! The exteroceptive blocks are present only when enabled.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{RobotModel, SimState};
use crate::rhythm::OscillatorState;
use crate::terrain::{Ground, TerrainSpec};
use crate::{NUM_JOINTS, NUM_LEGS};

/// Predictive distances are clamped to this radius (m).
pub const DISTANCE_CLAMP: f64 = 2.0;
/// Foot clearance is clamped to this magnitude (m).
pub const CLEARANCE_CLAMP: f64 = 1.0;

/// Size of the proprioceptive block without the previous action.
pub const PROPRIO_BASE: usize = 1 + 2 + 1 + NUM_JOINTS + NUM_JOINTS + NUM_LEGS + 5 * NUM_LEGS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeetSelection {
    #[default]
    None,
    /// FR and FL only.
    Front,
    All,
}

impl FeetSelection {
    pub fn legs(self) -> &'static [usize] {
        match self {
            FeetSelection::None => &[],
            FeetSelection::Front => &[0, 1],
            FeetSelection::All => &[0, 1, 2, 3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ObsConfig {
    pub feet_gap_distance: FeetSelection,
    pub base_gap_distance: bool,
    pub feet_clearance: bool,
    pub gap_contact: bool,
}

/// The sixteen exteroceptive combinations used in the sensory sweep.
///
/// Ids 1-12 carry at least one predictive feature; 13-15 are instantaneous
/// only; 16 is proprioception only. Id 1 is front-feet distances alone and
/// id 7 enables everything.
pub const OBS_COMBINATIONS: [(FeetSelection, bool, bool, bool); 16] = {
    use FeetSelection::*;
    [
        (Front, false, false, false),
        (Front, true, false, false),
        (Front, false, true, false),
        (All, false, false, false),
        (All, true, false, false),
        (Front, false, false, true),
        (All, true, true, true),
        (None, true, false, false),
        (All, false, true, false),
        (None, true, true, false),
        (All, false, false, true),
        (None, true, false, true),
        (None, false, true, false),
        (None, false, false, true),
        (None, false, true, true),
        (None, false, false, false),
    ]
};

impl ObsConfig {
    pub fn all() -> Self {
        Self {
            feet_gap_distance: FeetSelection::All,
            base_gap_distance: true,
            feet_clearance: true,
            gap_contact: true,
        }
    }

    pub fn front_feet() -> Self {
        Self {
            feet_gap_distance: FeetSelection::Front,
            ..Self::default()
        }
    }

    /// Sweep combination by id, 1..=16.
    pub fn combination(id: u8) -> Result<Self> {
        let idx = (id as usize)
            .checked_sub(1)
            .filter(|&i| i < OBS_COMBINATIONS.len())
            .ok_or_else(|| Error::config("observation.combination", format!("{id} is not in 1..=16")))?;
        let (feet, base, clearance, contact) = OBS_COMBINATIONS[idx];
        Ok(Self {
            feet_gap_distance: feet,
            base_gap_distance: base,
            feet_clearance: clearance,
            gap_contact: contact,
        })
    }

    pub fn has_predictive(&self) -> bool {
        self.feet_gap_distance != FeetSelection::None || self.base_gap_distance
    }

    pub fn exteroceptive_dim(&self) -> usize {
        2 * self.feet_gap_distance.legs().len()
            + if self.base_gap_distance { 2 } else { 0 }
            + if self.feet_clearance { NUM_LEGS } else { 0 }
            + if self.gap_contact { NUM_LEGS } else { 0 }
    }

    /// Total observation length for a given action dimension.
    pub fn dim(&self, action_dim: usize) -> usize {
        PROPRIO_BASE + action_dim + self.exteroceptive_dim()
    }

    /// Short label such as `front+base`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        match self.feet_gap_distance {
            FeetSelection::None => {}
            FeetSelection::Front => parts.push("front_feet"),
            FeetSelection::All => parts.push("all_feet"),
        }
        if self.base_gap_distance {
            parts.push("base");
        }
        if self.feet_clearance {
            parts.push("clearance");
        }
        if self.gap_contact {
            parts.push("contact");
        }
        if parts.is_empty() {
            "proprio".into()
        } else {
            parts.join("+")
        }
    }
}

/// Signed distances from `x` to the start and end of the nearest gap whose
/// end lies ahead, clamped to the distance radius.
pub fn gap_distances(terrain: &TerrainSpec, x: f64) -> [f64; 2] {
    match terrain.next_gap(x) {
        Some((_, g)) => [
            (g.start - x).clamp(-DISTANCE_CLAMP, DISTANCE_CLAMP),
            (g.end - x).clamp(-DISTANCE_CLAMP, DISTANCE_CLAMP),
        ],
        None => [DISTANCE_CLAMP; 2],
    }
}

/// Vertical distance of a foot over the ground beneath it.
pub fn foot_clearance(terrain: &TerrainSpec, foot: [f64; 2]) -> f64 {
    let ground = match terrain.ground_query(foot[0]) {
        Ground::Surface { height } => height,
        Ground::Gap { .. } => crate::terrain::GAP_FLOOR,
    };
    (foot[1] - ground).clamp(-CLEARANCE_CLAMP, CLEARANCE_CLAMP)
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn build_observation(
    sim: &SimState,
    model: &RobotModel,
    cpg: &OscillatorState,
    prev_action: &[f64],
    terrain: &TerrainSpec,
    cfg: &ObsConfig,
) -> Vec<f64> {
    let mut obs = Vec::with_capacity(cfg.dim(prev_action.len()));
    obs.push(sim.base_pos[2]);
    obs.extend_from_slice(&sim.body_velocity());
    obs.extend_from_slice(&sim.q);
    obs.extend_from_slice(&sim.qd);
    obs.extend(sim.contact.iter().map(|&c| flag(c)));
    obs.extend_from_slice(prev_action);
    obs.extend_from_slice(&cpg.r);
    obs.extend_from_slice(&cpg.r_dot);
    obs.extend(cpg.theta.iter().map(|t| t.cos()));
    obs.extend(cpg.theta.iter().map(|t| t.sin()));
    obs.extend_from_slice(&cpg.theta_dot);

    let feet = sim.feet(model);
    for &leg in cfg.feet_gap_distance.legs() {
        obs.extend_from_slice(&gap_distances(terrain, feet[leg][0]));
    }
    if cfg.base_gap_distance {
        obs.extend_from_slice(&gap_distances(terrain, sim.base_pos[0]));
    }
    if cfg.feet_clearance {
        obs.extend(feet.iter().map(|f| foot_clearance(terrain, *f)));
    }
    if cfg.gap_contact {
        obs.extend(sim.foot_in_gap.iter().map(|&g| flag(g)));
    }
    debug_assert_eq!(obs.len(), cfg.dim(prev_action.len()));
    obs
}
