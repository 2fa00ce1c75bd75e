//! Learner numerics against brute-force and finite-difference oracles.

use gapcross::ppo::gae::{gae, normalize};
use gapcross::ppo::policy::{gaussian_entropy, squashed_log_prob, ActorCritic};
use gapcross::ppo::{ppo_loss, LossCoefs, Minibatch};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `A_t = sum_k (gamma lam)^k delta_{t+k}`, truncated at the first done, by explicit double loop.
fn brute_force_gae(r: &[f64], v: &[f64], d: &[bool], last: f64, gamma: f64, lam: f64) -> Vec<f64> {
    let n = r.len();
    let delta: Vec<f64> = (0..n)
        .map(|t| {
            let next = if t + 1 < n { v[t + 1] } else { last };
            let nd = if d[t] { 0.0 } else { 1.0 };
            r[t] + gamma * next * nd - v[t]
        })
        .collect();
    (0..n)
        .map(|t| {
            let mut acc = 0.0;
            let mut w = 1.0;
            for k in t..n {
                acc += w * delta[k];
                if d[k] {
                    break;
                }
                w *= gamma * lam;
            }
            acc
        })
        .collect()
}

#[test]
fn gae_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let n = 100;
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let d: Vec<bool> = (0..n).map(|_| rng.random_bool(0.05)).collect();
        let last = rng.random_range(-5.0..5.0);
        let (adv, ret) = gae(&r, &v, &d, last, 0.99, 0.95);
        let oracle = brute_force_gae(&r, &v, &d, last, 0.99, 0.95);
        for t in 0..n {
            assert!((adv[t] - oracle[t]).abs() < 1e-10, "t={t}: {} vs {}", adv[t], oracle[t]);
            assert!((ret[t] - (oracle[t] + v[t])).abs() < 1e-10);
        }
    }
}

struct Batch {
    obs: Vec<f64>,
    latent: Vec<f64>,
    logp: Vec<f64>,
    mean: Vec<f64>,
    ls: Vec<f64>,
    adv: Vec<f64>,
    ret: Vec<f64>,
}

impl Batch {
    fn view(&self) -> Minibatch<'_> {
        Minibatch {
            n: self.adv.len(),
            obs: &self.obs,
            latent: &self.latent,
            old_log_prob: &self.logp,
            old_mean: &self.mean,
            old_log_std: &self.ls,
            advantages: &self.adv,
            returns: &self.ret,
        }
    }
}

/// Random small instance with the "old" policy slightly different from the
/// current one so ratios spread across both sides of the clip range.
fn instance(seed: u64) -> (ActorCritic, Batch) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut old = ActorCritic::init(6, 4, &[8, 8], -0.3, seed);
    for p in old.params.iter_mut() {
        *p += rng.random_range(-0.3..0.3);
    }
    let mut cur = old.clone();
    for p in cur.params.iter_mut() {
        *p += rng.random_range(-0.05..0.05);
    }
    let n = 16;
    let mut b = Batch {
        obs: Vec::new(),
        latent: Vec::new(),
        logp: Vec::new(),
        mean: Vec::new(),
        ls: old.log_std().to_vec(),
        adv: Vec::new(),
        ret: Vec::new(),
    };
    for _ in 0..n {
        let o: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let s = old.sample(&o, &mut rng);
        b.obs.extend(o);
        b.latent.extend(s.latent);
        b.logp.push(s.log_prob);
        b.mean.extend(s.mean);
        b.adv.push(rng.random_range(-1.5..1.5));
        b.ret.push(rng.random_range(-1.0..1.0));
    }
    normalize(&mut b.adv);
    (cur, b)
}

#[test]
fn loss_gradient_matches_central_differences() {
    let coefs = LossCoefs {
        clip: 0.2,
        entropy: 0.01,
        value: 0.5,
    };
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for seed in 0..10 {
        let (ac, b) = instance(seed);
        let mut g = vec![0.0; ac.n_params()];
        ppo_loss(&ac, &b.view(), &coefs, Some(&mut g));
        for k in 0..ac.n_params() {
            let mut p = ac.clone();
            p.params[k] += h;
            let up = ppo_loss(&p, &b.view(), &coefs, None).loss;
            p.params[k] -= 2.0 * h;
            let down = ppo_loss(&p, &b.view(), &coefs, None).loss;
            let fd = (up - down) / (2.0 * h);
            let scale = g[k].abs().max(fd.abs());
            if scale < 1e-7 {
                // both effectively zero (e.g. clipped samples only)
                assert!((g[k] - fd).abs() < 1e-9);
                continue;
            }
            let rel = (g[k] - fd).abs() / scale;
            worst = worst.max(rel);
            checked += 1;
        }
    }
    assert!(checked > 1000);
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn zero_loss_terms_give_zero_gradient() {
    let coefs = LossCoefs {
        clip: 0.2,
        entropy: 0.0,
        value: 0.0,
    };
    let (ac, mut b) = instance(3);
    b.adv.fill(0.0);
    let mut g = vec![0.0; ac.n_params()];
    ppo_loss(&ac, &b.view(), &coefs, Some(&mut g));
    assert!(g.iter().all(|&v| v == 0.0));
}

#[test]
fn advantage_normalization_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in [2usize, 17, 128, 4096] {
        let mut a: Vec<f64> = (0..n).map(|_| rng.random_range(-30.0..90.0)).collect();
        normalize(&mut a);
        let m = a.iter().sum::<f64>() / n as f64;
        let s = (a.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!(m.abs() < 1e-6);
        assert!((s - 1.0).abs() < 1e-6);
    }
}

#[test]
fn log_prob_recomputes_bitwise_at_full_width() {
    let ac = ActorCritic::init(73, 12, &[256, 256], -0.5, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let obs: Vec<Vec<f64>> = (0..128)
        .map(|_| (0..73).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect();
    let samples: Vec<_> = obs.iter().map(|o| ac.sample(o, &mut rng)).collect();
    let flat: Vec<f64> = obs.concat();
    let (pc, _) = ac.forward_batch(&flat, 128);
    for (i, s) in samples.iter().enumerate() {
        let lp = squashed_log_prob(&s.latent, &pc.output()[i * 12..(i + 1) * 12], ac.log_std());
        assert_eq!(lp.to_bits(), s.log_prob.to_bits(), "row {i}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn entropy_increases_with_every_log_std(ls in proptest::collection::vec(-3.0f64..1.0, 1..12), bump in 1e-6f64..0.5) {
        let up: Vec<f64> = ls.iter().map(|l| l + bump).collect();
        prop_assert!(gaussian_entropy(&up) > gaussian_entropy(&ls));
    }

    #[test]
    fn gae_lambda_zero_is_td(rs in proptest::collection::vec(-1.0f64..1.0, 1..40), last in -1.0f64..1.0) {
        let v: Vec<f64> = rs.iter().map(|r| 0.5 * r + 0.1).collect();
        let d = vec![false; rs.len()];
        let (a, _) = gae(&rs, &v, &d, last, 0.9, 0.0);
        for t in 0..rs.len() {
            let next = if t + 1 < rs.len() { v[t + 1] } else { last };
            prop_assert!((a[t] - (rs[t] + 0.9 * next - v[t])).abs() < 1e-12);
        }
    }
}
