//! Oscillator behaviour checked against independent fine-step integration.

use std::f64::consts::{PI, TAU};

use gapcross::rhythm::{step_rg, OscillatorState, RgParams, SupraspinalDrive};

fn wrap_diff(a: f64) -> f64 {
    (a + PI).rem_euclid(TAU) - PI
}

/// Reference right-hand side written out independently of the crate:
/// r'' = a (a/4 (mu - r) - r'), theta' = 2 pi f + sum_j r_j w_ij sin(theta_j - theta_i - phi_ij).
fn reference_rhs(
    y: &[f64; 12],
    alpha: f64,
    mu: f64,
    freq: f64,
    w: &[[f64; 4]; 4],
    phi: &[[f64; 4]; 4],
) -> [f64; 12] {
    // y = [r0..r3, rd0..rd3, th0..th3]
    let mut d = [0.0; 12];
    for i in 0..4 {
        let (r, rd) = (y[i], y[4 + i]);
        d[i] = rd;
        d[4 + i] = alpha * (alpha / 4.0 * (mu - r) - rd);
        let mut th = TAU * freq;
        for j in 0..4 {
            th += y[j] * w[i][j] * (y[8 + j] - y[8 + i] - phi[i][j]).sin();
        }
        d[8 + i] = th;
    }
    d
}

fn rk4(y: &mut [f64; 12], h: f64, f: impl Fn(&[f64; 12]) -> [f64; 12]) {
    let add = |a: &[f64; 12], b: &[f64; 12], s: f64| -> [f64; 12] { std::array::from_fn(|k| a[k] + s * b[k]) };
    let k1 = f(y);
    let k2 = f(&add(y, &k1, h / 2.0));
    let k3 = f(&add(y, &k2, h / 2.0));
    let k4 = f(&add(y, &k3, h));
    for k in 0..12 {
        y[k] += h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
    }
}

#[test]
fn amplitude_settles_to_drive() {
    let params = RgParams::default();
    let drive = SupraspinalDrive::uniform(1.0, 0.0);
    let mut s = OscillatorState::zeros();
    for _ in 0..2000 {
        s = step_rg(&s, &drive, &params).unwrap();
    }
    for i in 0..4 {
        assert!((s.r[i] - 1.0).abs() < 1e-3, "r = {}", s.r[i]);
    }
}

#[test]
fn one_hertz_is_one_turn_per_second() {
    let params = RgParams::default();
    let drive = SupraspinalDrive::uniform(1.0, 1.0);
    let mut s = OscillatorState::zeros();
    s.r = [1.0; 4];
    let mut unwrapped = 0.0;
    let mut prev = s.theta[0];
    for _ in 0..1000 {
        s = step_rg(&s, &drive, &params).unwrap();
        unwrapped += wrap_diff(s.theta[0] - prev);
        prev = s.theta[0];
    }
    assert!((unwrapped - TAU).abs() < 1e-6, "advance {unwrapped}");
}

#[test]
fn amplitude_matches_fine_reference() {
    let params = RgParams::default();
    let drive = SupraspinalDrive::uniform(2.5, 0.0);
    let mut s = OscillatorState::zeros();
    let mut y = [0.0; 12];
    let zero = [[0.0; 4]; 4];
    for _ in 0..500 {
        s = step_rg(&s, &drive, &params).unwrap();
        for _ in 0..100 {
            rk4(&mut y, 1e-5, |y| reference_rhs(y, 50.0, 2.5, 0.0, &zero, &zero));
        }
    }
    // first-order integrator at 1 ms against a 1e-5 s reference
    assert!((s.r[0] - y[0]).abs() < 5e-3, "{} vs {}", s.r[0], y[0]);
}

#[test]
fn coupled_pair_locks_in_antiphase() {
    // oscillators 0 and 1 coupled with biases +-pi; 2 and 3 left free
    let mut w = [[0.0; 4]; 4];
    let mut phi = [[0.0; 4]; 4];
    w[0][1] = 1.0;
    w[1][0] = 1.0;
    phi[0][1] = PI;
    phi[1][0] = -PI;
    let params = RgParams {
        coupling: w,
        phase_bias: phi,
        ..RgParams::default()
    };
    let drive = SupraspinalDrive::uniform(1.0, 1.5);

    let mut s = OscillatorState::zeros();
    s.r = [1.0; 4];
    s.theta = [0.0, 2.5, 0.0, 0.0];
    let mut y = [0.0; 12];
    y[..4].copy_from_slice(&[1.0; 4]);
    y[9] = 2.5;

    for _ in 0..20_000 {
        s = step_rg(&s, &drive, &params).unwrap();
        for _ in 0..100 {
            rk4(&mut y, 1e-5, |y| reference_rhs(y, 50.0, 1.0, 1.5, &w, &phi));
        }
    }
    let reference = wrap_diff(y[9] - y[8]);
    let ours = wrap_diff(s.theta[1] - s.theta[0]);
    // the fine reference confirms the attractor at pi
    assert!((reference.abs() - PI).abs() < 1e-6, "reference diff {reference}");
    assert!((ours.abs() - PI).abs() < 1e-3, "diff {ours}");
}
