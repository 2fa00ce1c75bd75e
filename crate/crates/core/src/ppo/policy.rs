//! Actor-critic parameters and the tanh-squashed diagonal Gaussian.

use std::f64::consts::{LN_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::mlp::{Mlp, MlpCache};
use crate::error::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Policy network, state-independent log-std and value network in one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    pub policy: Mlp,
    pub value: Mlp,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    pub value: f64,
}

/// One sampled action with everything the update needs later.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Pre-squash Gaussian draw.
    pub latent: Vec<f64>,
    /// `tanh(latent)`, the action handed to the environment.
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub mean: Vec<f64>,
    pub value: f64,
}

impl ActorCritic {
    pub fn new(obs_dim: usize, act_dim: usize, hidden: &[usize]) -> Self {
        let policy = Mlp::new(obs_dim, hidden, act_dim);
        let value = Mlp::new(obs_dim, hidden, 1);
        let n = policy.n_params() + act_dim + value.n_params();
        Self {
            policy,
            value,
            params: vec![0.0; n],
        }
    }

    pub fn init(obs_dim: usize, act_dim: usize, hidden: &[usize], init_log_std: f64, seed: u64) -> Self {
        let mut ac = Self::new(obs_dim, act_dim, hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (policy, value) = (ac.policy.clone(), ac.value.clone());
        let (p, ls, v) = ac.split_mut();
        policy.init(p, 0.01, &mut rng);
        ls.fill(init_log_std);
        value.init(v, 1.0, &mut rng);
        ac
    }

    pub fn obs_dim(&self) -> usize {
        self.policy.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.policy.output_dim()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn bounds(&self) -> (usize, usize) {
        let a = self.policy.n_params();
        (a, a + self.act_dim())
    }

    pub fn split(&self) -> (&[f64], &[f64], &[f64]) {
        let (a, b) = self.bounds();
        let (p, rest) = self.params.split_at(a);
        let (ls, v) = rest.split_at(b - a);
        (p, ls, v)
    }

    pub fn split_mut(&mut self) -> (&mut [f64], &mut [f64], &mut [f64]) {
        let (a, b) = self.bounds();
        let (p, rest) = self.params.split_at_mut(a);
        let (ls, v) = rest.split_at_mut(b - a);
        (p, ls, v)
    }

    pub fn log_std(&self) -> &[f64] {
        self.split().1
    }

    /// `(name, shape)` of every tensor in parameter order.
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out: Vec<_> = self
            .policy
            .tensor_shapes()
            .into_iter()
            .map(|(n, s)| (format!("policy.{n}"), s))
            .collect();
        out.push(("policy.log_std".into(), vec![self.act_dim()]));
        out.extend(
            self.value
                .tensor_shapes()
                .into_iter()
                .map(|(n, s)| (format!("value.{n}"), s)),
        );
        out
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Shape {
                what: "actor-critic parameters".into(),
                expected: self.params.len(),
                actual: params.len(),
            });
        }
        self.params = params;
        Ok(())
    }

    pub fn forward_batch(&self, obs: &[f64], batch: usize) -> (MlpCache, MlpCache) {
        let (p, _, v) = self.split();
        (self.policy.forward(p, obs, batch), self.value.forward(v, obs, batch))
    }

    pub fn forward(&self, obs: &[f64]) -> PolicyOutput {
        let (pc, vc) = self.forward_batch(obs, 1);
        PolicyOutput {
            mean: pc.output().to_vec(),
            log_std: self.log_std().to_vec(),
            value: vc.output()[0],
        }
    }

    pub fn value(&self, obs: &[f64]) -> f64 {
        let (_, _, v) = self.split();
        self.value.forward(v, obs, 1).output()[0]
    }

    /// Deterministic action `tanh(mean)`.
    pub fn act_deterministic(&self, obs: &[f64]) -> Vec<f64> {
        let (p, _, _) = self.split();
        self.policy.forward(p, obs, 1).output().iter().map(|m| m.tanh()).collect()
    }

    pub fn sample<R: Rng>(&self, obs: &[f64], rng: &mut R) -> Sample {
        let out = self.forward(obs);
        let latent: Vec<f64> = out
            .mean
            .iter()
            .zip(&out.log_std)
            .map(|(m, ls)| {
                let e: f64 = StandardNormal.sample(rng);
                m + ls.exp() * e
            })
            .collect();
        let log_prob = squashed_log_prob(&latent, &out.mean, &out.log_std);
        Sample {
            action: latent.iter().map(|u| u.tanh()).collect(),
            latent,
            log_prob,
            mean: out.mean,
            value: out.value,
        }
    }
}

/// `log(1 - tanh(u)^2)`, stable for large `|u|`.
pub fn log_tanh_jacobian(u: f64) -> f64 {
    2.0 * (LN_2 - u - softplus(-2.0 * u))
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Gaussian log-density of `u` (no squash correction).
pub fn gaussian_log_prob(u: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    u.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((u, m), ls)| {
            let z = (u - m) * (-ls).exp();
            -0.5 * z * z - ls - HALF_LN_2PI
        })
        .sum()
}

/// Log-density of `tanh(u)` under the squashed Gaussian.
pub fn squashed_log_prob(u: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    gaussian_log_prob(u, mean, log_std) - u.iter().map(|&v| log_tanh_jacobian(v)).sum::<f64>()
}

/// Entropy of the pre-squash Gaussian.
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| ls + 0.5 * (1.0 + (2.0 * PI).ln())).sum()
}

/// `KL(old || new)` between diagonal Gaussians with shared-per-dim log-std vectors.
pub fn gaussian_kl(mean_old: &[f64], ls_old: &[f64], mean_new: &[f64], ls_new: &[f64]) -> f64 {
    mean_old
        .iter()
        .zip(ls_old)
        .zip(mean_new.iter().zip(ls_new))
        .map(|((m0, l0), (m1, l1))| {
            let v0 = (2.0 * l0).exp();
            let v1 = (2.0 * l1).exp();
            l1 - l0 + (v0 + (m0 - m1).powi(2)) / (2.0 * v1) - 0.5
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_zero_outputs() {
        let ac = ActorCritic::new(5, 3, &[8, 8]);
        let o = ac.forward(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(o.mean, vec![0.0; 3]);
        assert_eq!(o.value, 0.0);
    }

    #[test]
    fn deterministic_action_is_bounded() {
        let mut ac = ActorCritic::init(4, 2, &[8], 0.0, 1);
        ac.params.iter_mut().for_each(|p| *p *= 100.0);
        let a = ac.act_deterministic(&[10.0, -10.0, 5.0, 3.0]);
        assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn squash_correction_is_stable() {
        for u in [-50.0, -3.0, 0.0, 0.7, 25.0, 400.0] {
            let direct = (1.0 - f64::tanh(u).powi(2)).ln();
            let stable = log_tanh_jacobian(u);
            assert!(stable.is_finite());
            if direct.is_finite() && u.abs() < 10.0 {
                assert!((direct - stable).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn kl_zero_for_same_distribution() {
        let m = [0.3, -0.2];
        let l = [-0.5, 0.1];
        assert!(gaussian_kl(&m, &l, &m, &l).abs() < 1e-15);
        assert!(gaussian_kl(&m, &l, &[0.4, -0.2], &l) > 0.0);
    }

    #[test]
    fn entropy_monotone_in_log_std() {
        let a = gaussian_entropy(&[-1.0, 0.0, 0.5]);
        let b = gaussian_entropy(&[-0.9, 0.1, 0.6]);
        assert!(b > a);
    }

    #[test]
    fn sample_log_prob_recomputes_bitwise() {
        let ac = ActorCritic::init(6, 4, &[16, 16], -0.5, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let obs = [0.1, 0.2, -0.3, 0.4, 0.5, -0.6];
        let s = ac.sample(&obs, &mut rng);
        let o = ac.forward(&obs);
        assert_eq!(
            squashed_log_prob(&s.latent, &o.mean, &o.log_std).to_bits(),
            s.log_prob.to_bits()
        );
    }
}
