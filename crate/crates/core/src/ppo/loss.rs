//! Clipped-surrogate PPO loss with exact reverse-mode gradients.

use super::policy::{gaussian_entropy, gaussian_kl, squashed_log_prob, ActorCritic};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossCoefs {
    pub clip: f64,
    pub entropy: f64,
    pub value: f64,
}

/// Row-major views of one minibatch. All per-action arrays are `n x act_dim`.
#[derive(Debug, Clone, Copy)]
pub struct Minibatch<'a> {
    pub n: usize,
    pub obs: &'a [f64],
    pub latent: &'a [f64],
    pub old_log_prob: &'a [f64],
    pub old_mean: &'a [f64],
    pub old_log_std: &'a [f64],
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossStats {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Mean `KL(old || current)` over the minibatch.
    pub kl: f64,
    pub clip_fraction: f64,
    /// Mean probability ratio.
    pub ratio: f64,
}

/// Loss `-surrogate + c_v * mse(V, R) - c_e * H`, averaged over the minibatch.
///
/// When `grad` is given, `d loss / d params` is accumulated into it.
pub fn ppo_loss(ac: &ActorCritic, mb: &Minibatch, coefs: &LossCoefs, grad: Option<&mut [f64]>) -> LossStats {
    let n = mb.n;
    let k = ac.act_dim();
    let inv_n = 1.0 / n as f64;
    let (pc, vc) = ac.forward_batch(mb.obs, n);
    let mean = pc.output();
    let values = vc.output();
    let log_std = ac.log_std();
    let inv_std: Vec<f64> = log_std.iter().map(|l| (-l).exp()).collect();

    let mut d_mean = vec![0.0; n * k];
    let mut d_log_std = vec![-coefs.entropy; k];
    let mut d_value = vec![0.0; n];
    let mut surrogate = 0.0;
    let mut value_loss = 0.0;
    let mut kl = 0.0;
    let mut clipped = 0usize;
    let mut ratio_sum = 0.0;

    for i in 0..n {
        let u = &mb.latent[i * k..(i + 1) * k];
        let m = &mean[i * k..(i + 1) * k];
        let logp = squashed_log_prob(u, m, log_std);
        let ratio = (logp - mb.old_log_prob[i]).exp();
        let a = mb.advantages[i];
        let unclipped = ratio * a;
        let clipped_obj = ratio.clamp(1.0 - coefs.clip, 1.0 + coefs.clip) * a;
        let d_logp = if unclipped <= clipped_obj {
            surrogate += unclipped;
            -inv_n * a * ratio
        } else {
            surrogate += clipped_obj;
            clipped += 1;
            0.0
        };
        if d_logp != 0.0 {
            for j in 0..k {
                let z = (u[j] - m[j]) * inv_std[j];
                d_mean[i * k + j] = d_logp * z * inv_std[j];
                d_log_std[j] += d_logp * (z * z - 1.0);
            }
        }
        let err = values[i] - mb.returns[i];
        value_loss += err * err;
        d_value[i] = 2.0 * coefs.value * inv_n * err;
        kl += gaussian_kl(&mb.old_mean[i * k..(i + 1) * k], mb.old_log_std, m, log_std);
        ratio_sum += ratio;
    }
    let policy_loss = -surrogate * inv_n;
    let value_loss = value_loss * inv_n;
    let entropy = gaussian_entropy(log_std);

    if let Some(g) = grad {
        let (gp, gl, gv) = {
            let (a, b) = (ac.policy.n_params(), ac.policy.n_params() + k);
            let (p, rest) = g.split_at_mut(a);
            let (l, v) = rest.split_at_mut(b - a);
            (p, l, v)
        };
        let (pp, _, vp) = ac.split();
        ac.policy.backward(pp, &pc, &d_mean, gp);
        for (g, d) in gl.iter_mut().zip(&d_log_std) {
            *g += d;
        }
        ac.value.backward(vp, &vc, &d_value, gv);
    }

    LossStats {
        loss: policy_loss + coefs.value * value_loss - coefs.entropy * entropy,
        policy_loss,
        value_loss,
        entropy,
        kl: kl * inv_n,
        clip_fraction: clipped as f64 * inv_n,
        ratio: ratio_sum * inv_n,
    }
}
