//! The gap-crossing MDP.
//!
//! One control step (100 Hz) decodes the action and runs ten 1 kHz substeps of
//! oscillator integration, foot-target generation, inverse kinematics, joint
//! PD and physics. A gap counts as crossed the first time both hind feet have
//! touched ground beyond its end.

pub mod action;
pub mod observation;
pub mod reward;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pattern::{foot_target, foot_target_z_only, inverse_kinematics, FootOffsets, PfParams};
use crate::physics::{fall_check, pd_torque, step_physics, RobotModel, SimState};
use crate::rhythm::{reset_rg, step_rg, InitMode, OscillatorState, RgParams, SupraspinalDrive};
use crate::seed;
use crate::terrain::{TerrainConfig, TerrainSpec};
use crate::trace::{EpisodeTrace, PowerTrace, TraceRow};
use crate::{NUM_JOINTS, NUM_LEGS};

pub use action::{scale_action, ActionConfig};
pub use observation::{build_observation, FeetSelection, ObsConfig};
pub use reward::{compute_reward, CycleEvents, RewardBreakdown, RewardWeights};

/// Hind legs (RR, RL).
const HIND: [usize; 2] = [2, 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CpgInit {
    #[default]
    Trot,
    /// Phases drawn uniformly per episode from the reset seed.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub action: ActionConfig,
    pub observation: ObsConfig,
    pub terrain: TerrainConfig,
    pub reward: RewardWeights,
    pub pattern: PfParams,
    pub rhythm: RgParams,
    pub robot: RobotModel,
    pub cpg_init: CpgInit,
    pub episode_seconds: f64,
    /// Physics/oscillator steps per control step.
    pub control_substeps: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            action: ActionConfig::default(),
            observation: ObsConfig::all(),
            terrain: TerrainConfig::default(),
            reward: RewardWeights::default(),
            pattern: PfParams::default(),
            rhythm: RgParams::default(),
            robot: RobotModel::default(),
            cpg_init: CpgInit::Trot,
            episode_seconds: 10.0,
            control_substeps: 10,
        }
    }
}

impl EnvConfig {
    /// Validates every section; error keys carry the full `env.` path.
    pub fn validate(&self) -> Result<()> {
        let sections = || -> Result<()> {
            self.action.validate()?;
            self.terrain.validate()?;
            self.reward.validate()?;
            self.pattern.validate()?;
            self.rhythm.validate()?;
            self.robot.validate()?;
            if self.control_substeps == 0 {
                return Err(Error::config("control_substeps", "must be >= 1"));
            }
            if !(self.episode_seconds > 0.0) || !self.episode_seconds.is_finite() {
                return Err(Error::config("episode_seconds", "must be finite and > 0"));
            }
            Ok(())
        };
        sections().map_err(|e| match e {
            Error::Config { key, reason } => Error::Config {
                key: format!("env.{key}"),
                reason,
            },
            other => other,
        })
    }

    pub fn action_dim(&self) -> usize {
        self.action.dim()
    }

    pub fn obs_dim(&self) -> usize {
        self.observation.dim(self.action.dim())
    }

    pub fn control_dt(&self) -> f64 {
        self.rhythm.dt * self.control_substeps as f64
    }

    pub fn max_steps(&self) -> usize {
        (self.episode_seconds / self.control_dt()).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoneReason {
    Timeout,
    Fall,
    PhysicsFault,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepInfo {
    pub gaps_crossed: usize,
    pub total_gaps_crossed: usize,
    pub foot_in_gap: bool,
    pub time: f64,
    /// Mechanical work during the cycle (J).
    pub work: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub breakdown: RewardBreakdown,
    pub done: bool,
    pub reason: Option<DoneReason>,
    pub info: StepInfo,
}

/// Whole-episode aggregates used by the evaluation metrics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpisodeStats {
    pub n_gaps: usize,
    pub gaps_crossed: usize,
    pub distance: f64,
    pub duration: f64,
    pub work: f64,
    pub sum_abs_pitch_rate: f64,
    pub steps: usize,
    pub fell: bool,
    pub total_reward: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct GapProgress {
    hind_touched: [bool; 2],
    crossed: bool,
}

pub struct GapEnv {
    cfg: EnvConfig,
    terrain: TerrainSpec,
    sim: SimState,
    cpg: OscillatorState,
    drive: SupraspinalDrive,
    offsets: FootOffsets,
    prev_action: Vec<f64>,
    steps: usize,
    gaps: Vec<GapProgress>,
    stats: EpisodeStats,
    start_x: f64,
    done: bool,
    trace: Option<EpisodeTrace>,
}

impl GapEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        let cpg = reset_rg(InitMode::Trot);
        let sim = SimState::standing(&cfg.robot, &[(0.0, -cfg.pattern.nominal_height); NUM_LEGS], 0.0)?;
        let dim = cfg.action_dim();
        let mut env = Self {
            terrain: TerrainSpec::flat(),
            sim,
            cpg,
            drive: SupraspinalDrive::uniform(cfg.action.default_mu, cfg.action.fixed_omega),
            offsets: FootOffsets::default(),
            prev_action: vec![0.0; dim],
            steps: 0,
            gaps: Vec::new(),
            stats: EpisodeStats::default(),
            start_x: 0.0,
            done: true,
            trace: None,
            cfg,
        };
        env.reset(0)?;
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn terrain(&self) -> &TerrainSpec {
        &self.terrain
    }

    pub fn sim(&self) -> &SimState {
        &self.sim
    }

    pub fn cpg(&self) -> &OscillatorState {
        &self.cpg
    }

    pub fn stats(&self) -> &EpisodeStats {
        &self.stats
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn action_dim(&self) -> usize {
        self.cfg.action_dim()
    }

    pub fn obs_dim(&self) -> usize {
        self.cfg.obs_dim()
    }

    /// Starts recording a trace from the next reset (or immediately).
    pub fn set_recording(&mut self, on: bool) {
        self.trace = on.then(|| EpisodeTrace {
            rows: Vec::new(),
            power: PowerTrace::new(self.cfg.rhythm.dt),
            gaps: self.terrain.gaps.clone(),
        });
    }

    pub fn take_trace(&mut self) -> Option<EpisodeTrace> {
        let t = self.trace.take();
        if t.is_some() {
            self.set_recording(true);
        }
        t
    }

    /// Resets with terrain generated from the config and `seed`.
    pub fn reset(&mut self, seed_value: u64) -> Result<Vec<f64>> {
        let terrain = self.cfg.terrain.generate(seed::derive(seed_value, &[seed::stream::TERRAIN]));
        self.reset_with_terrain(seed_value, terrain)
    }

    /// Resets onto an explicit terrain (replay of a stored scenario).
    pub fn reset_with_terrain(&mut self, seed_value: u64, terrain: TerrainSpec) -> Result<Vec<f64>> {
        terrain.validate()?;
        let init = match self.cfg.cpg_init {
            CpgInit::Trot => InitMode::Trot,
            CpgInit::Random => InitMode::UniformRandom {
                seed: seed::derive(seed_value, &[seed::stream::CPG_RESET]),
            },
        };
        self.cpg = reset_rg(init);
        self.drive = SupraspinalDrive::uniform(self.cfg.action.default_mu, self.cfg.action.fixed_omega);
        self.offsets = FootOffsets::default();
        let target = self.foot_targets();
        let feet: [(f64, f64); NUM_LEGS] = std::array::from_fn(|i| (target.x[i], target.z[i]));
        self.sim = SimState::standing(&self.cfg.robot, &feet, 0.0)?;
        self.terrain = terrain;
        self.prev_action = vec![0.0; self.cfg.action_dim()];
        self.steps = 0;
        self.gaps = vec![GapProgress::default(); self.terrain.gaps.len()];
        self.start_x = self.sim.base_pos[0];
        self.stats = EpisodeStats {
            n_gaps: self.terrain.gaps.len(),
            ..EpisodeStats::default()
        };
        self.done = false;
        if self.trace.is_some() {
            self.set_recording(true);
        }
        Ok(self.observe())
    }

    fn foot_targets(&self) -> crate::pattern::FootTarget {
        if self.cfg.action.x_oscillation {
            foot_target(&self.cpg, &self.offsets, &self.cfg.pattern)
        } else {
            foot_target_z_only(&self.cpg, &self.offsets, &self.cfg.pattern)
        }
    }

    pub fn observe(&self) -> Vec<f64> {
        build_observation(
            &self.sim,
            &self.cfg.robot,
            &self.cpg,
            &self.prev_action,
            &self.terrain,
            &self.cfg.observation,
        )
    }

    fn desired_joints(&self) -> Result<[f64; NUM_JOINTS]> {
        let t = self.foot_targets();
        let mut q = [0.0; NUM_JOINTS];
        for i in 0..NUM_LEGS {
            let a = self.cfg.robot.legs.clamp_joints(inverse_kinematics(t.x[i], t.z[i], &self.cfg.robot.legs)?);
            q[2 * i] = a.hip;
            q[2 * i + 1] = a.knee;
        }
        Ok(q)
    }

    /// Marks hind-foot touchdowns beyond gap ends; returns newly crossed gaps.
    fn update_gap_progress(&mut self) -> usize {
        if self.gaps.is_empty() {
            return 0;
        }
        let feet = self.sim.feet(&self.cfg.robot);
        let mut crossed = 0;
        for (h, &leg) in HIND.iter().enumerate() {
            if !self.sim.contact[leg] || self.sim.foot_in_gap[leg] {
                continue;
            }
            let x = feet[leg][0];
            for (g, p) in self.terrain.gaps.iter().zip(self.gaps.iter_mut()) {
                if g.end > x {
                    break;
                }
                p.hind_touched[h] = true;
            }
        }
        for p in &mut self.gaps {
            if !p.crossed && p.hind_touched[0] && p.hind_touched[1] {
                p.crossed = true;
                crossed += 1;
            }
        }
        crossed
    }

    pub fn step(&mut self, raw_action: &[f64]) -> Result<StepResult> {
        if self.done {
            return Err(Error::config("env", "step called on a finished episode; reset first"));
        }
        let (drive, offsets) = scale_action(raw_action, &self.cfg.action)?;
        self.drive = drive;
        self.offsets = offsets;
        let raw = action::clamp_action(raw_action)?;

        let prev = self.sim;
        let dt = self.cfg.rhythm.dt;
        let mut torque_sum = [0.0; NUM_JOINTS];
        let mut substeps_done = 0;
        let mut events = CycleEvents::default();
        let mut work = 0.0;
        let mut fault = false;
        for _ in 0..self.cfg.control_substeps {
            self.cpg = step_rg(&self.cpg, &self.drive, &self.cfg.rhythm)?;
            let q_des = self.desired_joints()?;
            let tau = pd_torque(&q_des, &self.sim.q, &self.sim.qd, &self.cfg.robot);
            match step_physics(&self.sim, &tau, &self.terrain, &self.cfg.robot, dt) {
                Ok(next) => self.sim = next,
                Err(_) => {
                    fault = true;
                    break;
                }
            }
            substeps_done += 1;
            let p: f64 = tau.iter().zip(&self.sim.qd).map(|(t, v)| (t * v).abs()).sum();
            work += p * dt;
            for j in 0..NUM_JOINTS {
                torque_sum[j] += tau[j];
            }
            if let Some(tr) = &mut self.trace {
                tr.power.push(tau, self.sim.qd);
            }
            events.foot_in_gap |= self.sim.foot_in_gap.iter().any(|&g| g);
            events.gaps_crossed += self.update_gap_progress();
        }
        let mean_torque = if substeps_done > 0 {
            torque_sum.map(|t| t / substeps_done as f64)
        } else {
            torque_sum
        };
        let (reward, breakdown) = compute_reward(&prev, &self.sim, &mean_torque, &events, &self.cfg.reward);

        self.steps += 1;
        self.prev_action = raw;
        let time = self.steps as f64 * self.cfg.control_dt();
        let reason = if fault {
            Some(DoneReason::PhysicsFault)
        } else if fall_check(&self.sim) {
            Some(DoneReason::Fall)
        } else if self.steps >= self.cfg.max_steps() {
            Some(DoneReason::Timeout)
        } else {
            None
        };
        self.done = reason.is_some();

        let s = &mut self.stats;
        s.gaps_crossed += events.gaps_crossed;
        s.distance = self.sim.base_pos[0] - self.start_x;
        s.duration = time;
        s.work += work;
        s.sum_abs_pitch_rate += self.sim.base_vel[2].abs();
        s.steps = self.steps;
        s.fell |= matches!(reason, Some(DoneReason::Fall | DoneReason::PhysicsFault));
        s.total_reward += reward;

        if self.trace.is_some() {
            let row = self.trace_row(time, reward, breakdown, work);
            if let Some(tr) = &mut self.trace {
                tr.rows.push(row);
            }
        }

        Ok(StepResult {
            observation: self.observe(),
            reward,
            breakdown,
            done: self.done,
            reason,
            info: StepInfo {
                gaps_crossed: events.gaps_crossed,
                total_gaps_crossed: self.stats.gaps_crossed,
                foot_in_gap: events.foot_in_gap,
                time,
                work,
            },
        })
    }

    fn trace_row(&self, time: f64, reward: f64, breakdown: RewardBreakdown, work: f64) -> TraceRow {
        let feet = self.sim.feet(&self.cfg.robot);
        TraceRow {
            time,
            base: self.sim.base_pos,
            base_vel: self.sim.base_vel,
            foot_x: feet.map(|f| f[0]),
            foot_z: feet.map(|f| f[1]),
            over_gap: feet.map(|f| self.terrain.gap_index(f[0]).is_some()),
            contact: self.sim.contact,
            r: self.cpg.r,
            theta: self.cpg.theta,
            mu: self.drive.mu,
            omega: self.drive.omega,
            x_off: self.offsets.x,
            z_off: self.offsets.z,
            action: self.prev_action.clone(),
            reward,
            breakdown,
            work,
        }
    }

    /// Deterministic fingerprint of the current state, for reproducibility checks.
    pub fn state_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: f64| {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        self.sim
            .base_pos
            .iter()
            .chain(&self.sim.base_vel)
            .chain(&self.sim.q)
            .chain(&self.sim.qd)
            .chain(&self.cpg.r)
            .chain(&self.cpg.theta)
            .for_each(|&v| eat(v));
        h
    }
}
