//! Rhythm generator: one amplitude-controlled phase oscillator per limb.
//!
//! Amplitude follows critically damped second-order dynamics towards the
//! intrinsic amplitude `mu`, and the phase advances at the intrinsic frequency
//! plus an optional coupling sum `sum_j r_j w_ij sin(theta_j - theta_i - phi_ij)`.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::NUM_LEGS;

/// Per-limb oscillator state. Index order FR, FL, RR, RL.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillatorState {
    pub r: [f64; NUM_LEGS],
    pub r_dot: [f64; NUM_LEGS],
    /// Phase, wrapped to `[0, 2pi)`.
    pub theta: [f64; NUM_LEGS],
    pub theta_dot: [f64; NUM_LEGS],
}

/// How the intrinsic frequency `omega` is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OmegaConvention {
    /// `theta_dot = omega`.
    RadiansPerSecond,
    /// `theta_dot = 2 pi omega`.
    #[default]
    CyclesPerSecond,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    SemiImplicitEuler,
    /// Classic RK4 over `(r, r_dot, theta)`; used to validate the Euler path.
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RgParams {
    /// Convergence factor (1/s).
    pub alpha: f64,
    /// Coupling weights `w[i][j]`.
    pub coupling: [[f64; NUM_LEGS]; NUM_LEGS],
    /// Phase biases `phi[i][j]` (rad).
    pub phase_bias: [[f64; NUM_LEGS]; NUM_LEGS],
    pub dt: f64,
    pub omega_convention: OmegaConvention,
    pub integrator: Integrator,
}

impl Default for RgParams {
    fn default() -> Self {
        Self {
            alpha: 50.0,
            coupling: [[0.0; NUM_LEGS]; NUM_LEGS],
            phase_bias: [[0.0; NUM_LEGS]; NUM_LEGS],
            dt: 1e-3,
            omega_convention: OmegaConvention::CyclesPerSecond,
            integrator: Integrator::SemiImplicitEuler,
        }
    }
}

impl RgParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::config("rhythm.alpha", "must be finite and > 0"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::config("rhythm.dt", "must be finite and > 0"));
        }
        let all = self.coupling.iter().chain(self.phase_bias.iter()).flatten();
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::config("rhythm.coupling", "non-finite entry"));
        }
        Ok(())
    }

    /// Phase rate contributed by an intrinsic frequency.
    #[inline]
    pub fn phase_rate(&self, omega: f64) -> f64 {
        match self.omega_convention {
            OmegaConvention::RadiansPerSecond => omega,
            OmegaConvention::CyclesPerSecond => TAU * omega,
        }
    }
}

/// Descending drive for the oscillators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupraspinalDrive {
    pub mu: [f64; NUM_LEGS],
    pub omega: [f64; NUM_LEGS],
}

impl SupraspinalDrive {
    pub fn uniform(mu: f64, omega: f64) -> Self {
        Self {
            mu: [mu; NUM_LEGS],
            omega: [omega; NUM_LEGS],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum InitMode {
    /// Diagonal pairs in phase: theta = [0, pi, pi, 0].
    Trot,
    /// theta ~ U[0, 2pi) per limb, drawn from the given seed.
    UniformRandom { seed: u64 },
}

impl Default for InitMode {
    fn default() -> Self {
        InitMode::Trot
    }
}

#[inline]
pub fn wrap_phase(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

impl OscillatorState {
    pub fn zeros() -> Self {
        Self {
            r: [0.0; NUM_LEGS],
            r_dot: [0.0; NUM_LEGS],
            theta: [0.0; NUM_LEGS],
            theta_dot: [0.0; NUM_LEGS],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.r
            .iter()
            .chain(&self.r_dot)
            .chain(&self.theta)
            .chain(&self.theta_dot)
            .all(|v| v.is_finite())
    }
}

/// Initial oscillator state for an episode.
pub fn reset_rg(init: InitMode) -> OscillatorState {
    let theta = match init {
        InitMode::Trot => [0.0, PI, PI, 0.0],
        InitMode::UniformRandom { seed } => {
            let mut rng = seed::rng(seed, &[seed::stream::CPG_RESET]);
            std::array::from_fn(|_| rng.random_range(0.0..TAU))
        }
    };
    OscillatorState {
        r: [1.0; NUM_LEGS],
        r_dot: [0.0; NUM_LEGS],
        theta,
        theta_dot: [0.0; NUM_LEGS],
    }
}

fn amplitude_accel(alpha: f64, mu: f64, r: f64, r_dot: f64) -> f64 {
    alpha * (0.25 * alpha * (mu - r) - r_dot)
}

fn phase_rates(
    r: &[f64; NUM_LEGS],
    theta: &[f64; NUM_LEGS],
    drive: &SupraspinalDrive,
    params: &RgParams,
) -> [f64; NUM_LEGS] {
    std::array::from_fn(|i| {
        let coupling: f64 = (0..NUM_LEGS)
            .map(|j| {
                let w = params.coupling[i][j];
                if w == 0.0 {
                    0.0
                } else {
                    r[j] * w * (theta[j] - theta[i] - params.phase_bias[i][j]).sin()
                }
            })
            .sum();
        params.phase_rate(drive.omega[i]) + coupling
    })
}

/// Advances the oscillators by one step of `params.dt`.
pub fn step_rg(
    state: &OscillatorState,
    drive: &SupraspinalDrive,
    params: &RgParams,
) -> Result<OscillatorState> {
    if !state.is_finite() {
        return Err(Error::NonFinite("oscillator state"));
    }
    if drive.mu.iter().chain(&drive.omega).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("supraspinal drive"));
    }
    let dt = params.dt;
    let alpha = params.alpha;
    let mut next = *state;
    match params.integrator {
        Integrator::SemiImplicitEuler => {
            let theta_dot = phase_rates(&state.r, &state.theta, drive, params);
            for i in 0..NUM_LEGS {
                let r_ddot = amplitude_accel(alpha, drive.mu[i], state.r[i], state.r_dot[i]);
                next.r_dot[i] = state.r_dot[i] + dt * r_ddot;
                next.r[i] = state.r[i] + dt * next.r_dot[i];
                next.theta_dot[i] = theta_dot[i];
                next.theta[i] = state.theta[i] + dt * theta_dot[i];
            }
        }
        Integrator::Rk4 => {
            type S = ([f64; NUM_LEGS], [f64; NUM_LEGS], [f64; NUM_LEGS]);
            let deriv = |(r, rd, th): &S| -> S {
                let thd = phase_rates(r, th, drive, params);
                let rdd = std::array::from_fn(|i| amplitude_accel(alpha, drive.mu[i], r[i], rd[i]));
                (*rd, rdd, thd)
            };
            let axpy = |s: &S, k: &S, h: f64| -> S {
                (
                    std::array::from_fn(|i| s.0[i] + h * k.0[i]),
                    std::array::from_fn(|i| s.1[i] + h * k.1[i]),
                    std::array::from_fn(|i| s.2[i] + h * k.2[i]),
                )
            };
            let s0: S = (state.r, state.r_dot, state.theta);
            let k1 = deriv(&s0);
            let k2 = deriv(&axpy(&s0, &k1, 0.5 * dt));
            let k3 = deriv(&axpy(&s0, &k2, 0.5 * dt));
            let k4 = deriv(&axpy(&s0, &k3, dt));
            for i in 0..NUM_LEGS {
                let comb = |a: f64, b: f64, c: f64, d: f64| (a + 2.0 * b + 2.0 * c + d) / 6.0;
                next.r[i] = state.r[i] + dt * comb(k1.0[i], k2.0[i], k3.0[i], k4.0[i]);
                next.r_dot[i] = state.r_dot[i] + dt * comb(k1.1[i], k2.1[i], k3.1[i], k4.1[i]);
                next.theta[i] = state.theta[i] + dt * comb(k1.2[i], k2.2[i], k3.2[i], k4.2[i]);
            }
            next.theta_dot = phase_rates(&next.r, &next.theta, drive, params);
        }
    }
    for i in 0..NUM_LEGS {
        next.r[i] = next.r[i].max(0.0);
        next.theta[i] = wrap_phase(next.theta[i]);
    }
    if !next.is_finite() {
        return Err(Error::NonFinite("oscillator state after step"));
    }
    Ok(next)
}
