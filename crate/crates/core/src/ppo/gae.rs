//! Generalised advantage estimation.

/// Advantages and returns for one trajectory segment.
///
/// `values[t]` is `V(s_t)`; `last_value` bootstraps the step after the
/// segment. `dones[t]` cuts the recursion after step `t`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lam: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert_eq!(values.len(), n);
    assert_eq!(dones.len(), n);
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let not_done = if dones[t] { 0.0 } else { 1.0 };
        let next_v = if t + 1 < n { values[t + 1] } else { last_value };
        let delta = rewards[t] + gamma * next_v * not_done - values[t];
        running = delta + gamma * lam * not_done * running;
        adv[t] = running;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Shifts to zero mean and scales to unit (population) variance in place.
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let inv = 1.0 / (var.sqrt() + 1e-12);
    for x in xs.iter_mut() {
        *x = (*x - mean) * inv;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_terminal() {
        let (a, r) = gae(&[1.5], &[0.4], &[true], 9.0, 0.99, 0.95);
        assert!((a[0] - (1.5 - 0.4)).abs() < 1e-15);
        assert!((r[0] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn single_step_bootstrapped() {
        let (a, _) = gae(&[1.5], &[0.4], &[false], 2.0, 0.99, 0.95);
        assert!((a[0] - (1.5 + 0.99 * 2.0 - 0.4)).abs() < 1e-15);
    }

    #[test]
    fn lambda_zero_gives_td_residuals() {
        let r = [1.0, -0.5, 2.0];
        let v = [0.3, 0.1, -0.2];
        let (a, _) = gae(&r, &v, &[false, false, false], 0.7, 0.9, 0.0);
        assert!((a[0] - (1.0 + 0.9 * 0.1 - 0.3)).abs() < 1e-15);
        assert!((a[1] - (-0.5 + 0.9 * -0.2 - 0.1)).abs() < 1e-15);
        assert!((a[2] - (2.0 + 0.9 * 0.7 + 0.2)).abs() < 1e-15);
    }

    #[test]
    fn normalized_moments() {
        let mut x: Vec<f64> = (0..97).map(|i| ((i * 37) % 11) as f64 * 0.3 - 1.0).collect();
        normalize(&mut x);
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let s = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
        assert!(m.abs() < 1e-6);
        assert!((s - 1.0).abs() < 1e-6);
    }
}
