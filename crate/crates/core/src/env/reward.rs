//! Five-term reward plus the sparse gap bonus.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::SimState;
use crate::NUM_JOINTS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    /// Forward progress weight.
    pub alpha1: f64,
    /// Max rewarded forward progress per control cycle (m).
    pub d_max: f64,
    /// Bonus per crossed gap.
    pub s_gap: f64,
    /// Penalty per control cycle with a foot below ground inside a gap.
    pub n_gap: f64,
    /// Lateral deviation weight.
    pub alpha3: f64,
    /// Orientation weight.
    pub alpha4: f64,
    /// Power weight.
    pub alpha5: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            alpha1: 2.0,
            d_max: 0.03,
            s_gap: 3.0,
            n_gap: -0.03,
            alpha3: -0.05,
            alpha4: -0.02,
            alpha5: -0.00008,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_max > 0.0) || !self.d_max.is_finite() {
            return Err(Error::config("reward.d_max", "must be finite and > 0"));
        }
        let all = [
            self.alpha1,
            self.s_gap,
            self.n_gap,
            self.alpha3,
            self.alpha4,
            self.alpha5,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("reward", "weights must be finite"));
        }
        Ok(())
    }
}

/// Per-term reward contributions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub forward: f64,
    pub gap_bonus: f64,
    pub gap_penalty: f64,
    pub lateral: f64,
    pub orientation: f64,
    pub power: f64,
}

impl RewardBreakdown {
    pub const NAMES: [&'static str; 6] = [
        "forward",
        "gap_bonus",
        "gap_penalty",
        "lateral",
        "orientation",
        "power",
    ];

    pub fn terms(&self) -> [f64; 6] {
        [
            self.forward,
            self.gap_bonus,
            self.gap_penalty,
            self.lateral,
            self.orientation,
            self.power,
        ]
    }

    /// Sum of the terms, always in the same order.
    pub fn total(&self) -> f64 {
        self.terms().iter().fold(0.0, |acc, t| acc + t)
    }
}

/// Events observed during one control cycle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CycleEvents {
    pub gaps_crossed: usize,
    pub foot_in_gap: bool,
    /// Lateral base offset; always zero in the sagittal model.
    pub lateral_offset: f64,
}

/// Reward for the transition `prev -> cur`.
///
/// `torque` is the joint torque attributed to the cycle; the power term is
/// `|tau . (qd_t - qd_{t-1})|`.
pub fn compute_reward(
    prev: &SimState,
    cur: &SimState,
    torque: &[f64; NUM_JOINTS],
    events: &CycleEvents,
    w: &RewardWeights,
) -> (f64, RewardBreakdown) {
    let dx = cur.base_pos[0] - prev.base_pos[0];
    let power: f64 = (0..NUM_JOINTS)
        .map(|j| torque[j] * (cur.qd[j] - prev.qd[j]))
        .sum();
    let b = RewardBreakdown {
        forward: w.alpha1 * dx.min(w.d_max),
        gap_bonus: w.s_gap * events.gaps_crossed as f64,
        gap_penalty: if events.foot_in_gap { w.n_gap } else { 0.0 },
        lateral: w.alpha3 * events.lateral_offset.abs(),
        // o_zero is level, so the orientation error is |pitch|
        orientation: w.alpha4 * cur.base_pos[2].abs(),
        power: w.alpha5 * power.abs(),
    };
    (b.total(), b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::RobotModel;

    fn state() -> SimState {
        SimState::standing(&RobotModel::default(), &[(0.0, -0.25); 4], 0.0).unwrap()
    }

    #[test]
    fn gap_bonus_alone() {
        let s = state();
        let ev = CycleEvents {
            gaps_crossed: 1,
            ..CycleEvents::default()
        };
        let (r, b) = compute_reward(&s, &s, &[0.0; 8], &ev, &RewardWeights::default());
        assert_eq!(r, 3.0);
        assert_eq!(b.gap_bonus, 3.0);
    }

    #[test]
    fn gap_penalty_alone() {
        let s = state();
        let ev = CycleEvents {
            foot_in_gap: true,
            ..CycleEvents::default()
        };
        let (r, _) = compute_reward(&s, &s, &[0.0; 8], &ev, &RewardWeights::default());
        assert_eq!(r, -0.03);
    }

    #[test]
    fn forward_progress_is_clipped() {
        let a = state();
        let mut b = a;
        b.base_pos[0] += 0.05;
        let (r, br) = compute_reward(&a, &b, &[0.0; 8], &CycleEvents::default(), &RewardWeights::default());
        assert!((br.forward - 0.06).abs() < 1e-15);
        assert_eq!(r, br.total());
        // backwards motion is not clipped
        let (_, br) = compute_reward(&b, &a, &[0.0; 8], &CycleEvents::default(), &RewardWeights::default());
        assert!((br.forward + 0.1).abs() < 1e-12);
    }

    #[test]
    fn power_uses_velocity_change() {
        let a = state();
        let mut b = a;
        b.qd[0] = 2.0;
        b.qd[1] = -1.0;
        let tau = [3.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let (_, br) = compute_reward(&a, &b, &tau, &CycleEvents::default(), &RewardWeights::default());
        // |3*2 + 4*(-1)| = 2
        assert!((br.power - (-0.00008 * 2.0)).abs() < 1e-18);
    }

    #[test]
    fn orientation_penalises_pitch_both_ways() {
        let a = state();
        let mut b = a;
        b.base_pos[2] = -0.5;
        let (_, br) = compute_reward(&a, &b, &[0.0; 8], &CycleEvents::default(), &RewardWeights::default());
        assert!((br.orientation + 0.01).abs() < 1e-15);
    }
}
