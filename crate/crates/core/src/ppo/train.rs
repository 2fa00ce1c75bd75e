//! Rollout collection, updates, metrics and checkpoints.
//!
//! Each batch is split across `workers` environments. At the start of every
//! batch each worker resets its environment with a seed derived from
//! `(seed, batch, worker)`, so a batch depends only on the parameters,
//! the normaliser and those indices. Checkpoints therefore resume exactly.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{clip_grad_norm, Adam};
use super::checkpoint::Checkpoint;
use super::gae::{gae, normalize};
use super::loss::{ppo_loss, LossStats, Minibatch};
use super::normalizer::RunningNorm;
use super::policy::ActorCritic;
use super::PpoConfig;
use crate::env::{DoneReason, EnvConfig, GapEnv};
use crate::error::{Error, Result};
use crate::seed::{self, stream};

pub const METRICS_SCHEMA: &str = "# schema: gapcross-metrics/v1";
pub const METRICS_HEADER: &str = "samples,mean_return,success_rate,kl,entropy,lr";

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BatchStats {
    pub batch: u64,
    pub samples: u64,
    /// Mean return over episodes finished in this batch (falls back to the
    /// unfinished segments when none finished).
    pub mean_return: f64,
    /// Crossed / total gaps over finished episodes; NaN without gaps.
    pub success_rate: f64,
    pub episodes: usize,
    pub kl: f64,
    pub entropy: f64,
    /// Learning rate after this batch's adaptation.
    pub lr: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub clip_fraction: f64,
}

impl BatchStats {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.samples, self.mean_return, self.success_rate, self.kl, self.entropy, self.lr
        )
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct EpisodeSummary {
    ret: f64,
    gaps: usize,
    crossed: usize,
    finished: bool,
}

#[derive(Debug, Default)]
struct Segment {
    raw_obs: Vec<f64>,
    obs: Vec<f64>,
    latent: Vec<f64>,
    mean: Vec<f64>,
    log_prob: Vec<f64>,
    reward: Vec<f64>,
    value: Vec<f64>,
    done: Vec<bool>,
    last_value: f64,
    episodes: Vec<EpisodeSummary>,
}

fn collect_segment(
    env: &mut GapEnv,
    ac: &ActorCritic,
    norm: &RunningNorm,
    steps: usize,
    gamma: f64,
    run_seed: u64,
    batch: u64,
    worker: u64,
) -> Result<Segment> {
    let mut rng = seed::rng(run_seed, &[stream::ROLLOUT, batch, worker]);
    let mut episode = 0u64;
    let env_seed = |ep: u64| seed::derive(run_seed, &[stream::ENV, batch, worker, ep]);
    let mut raw = env.reset(env_seed(episode))?;
    let mut seg = Segment::default();
    let mut cur = EpisodeSummary {
        gaps: env.terrain().gaps.len(),
        ..Default::default()
    };
    for _ in 0..steps {
        let obs = norm.normalize(&raw);
        let s = ac.sample(&obs, &mut rng);
        let r = env.step(&s.action)?;
        let mut reward = r.reward;
        if r.reason == Some(DoneReason::Timeout) {
            reward += gamma * ac.value(&norm.normalize(&r.observation));
        }
        seg.raw_obs.extend_from_slice(&raw);
        seg.obs.extend(obs);
        seg.latent.extend(s.latent);
        seg.mean.extend(s.mean);
        seg.log_prob.push(s.log_prob);
        seg.reward.push(reward);
        seg.value.push(s.value);
        seg.done.push(r.done);
        cur.ret += r.reward;
        cur.crossed += r.info.gaps_crossed;
        if r.done {
            cur.finished = true;
            seg.episodes.push(cur);
            episode += 1;
            raw = env.reset(env_seed(episode))?;
            cur = EpisodeSummary {
                gaps: env.terrain().gaps.len(),
                ..Default::default()
            };
        } else {
            raw = r.observation;
        }
    }
    seg.last_value = ac.value(&norm.normalize(&raw));
    if !seg.done.last().copied().unwrap_or(true) {
        seg.episodes.push(cur);
    }
    Ok(seg)
}

/// Flattened, GAE-processed batch.
#[derive(Debug, Default, Clone)]
pub struct RolloutBuffer {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub obs: Vec<f64>,
    pub latent: Vec<f64>,
    pub mean: Vec<f64>,
    pub log_prob: Vec<f64>,
    pub log_std: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.log_prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_prob.is_empty()
    }

    /// Copies the rows in `idx` into a contiguous minibatch.
    pub fn gather(&self, idx: &[usize]) -> OwnedMinibatch {
        let (d, k) = (self.obs_dim, self.act_dim);
        let mut m = OwnedMinibatch {
            log_std: self.log_std.clone(),
            ..Default::default()
        };
        for &i in idx {
            m.obs.extend_from_slice(&self.obs[i * d..(i + 1) * d]);
            m.latent.extend_from_slice(&self.latent[i * k..(i + 1) * k]);
            m.mean.extend_from_slice(&self.mean[i * k..(i + 1) * k]);
            m.log_prob.push(self.log_prob[i]);
            m.advantages.push(self.advantages[i]);
            m.returns.push(self.returns[i]);
        }
        m
    }
}

#[derive(Debug, Default, Clone)]
pub struct OwnedMinibatch {
    pub obs: Vec<f64>,
    pub latent: Vec<f64>,
    pub mean: Vec<f64>,
    pub log_prob: Vec<f64>,
    pub log_std: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl OwnedMinibatch {
    pub fn view(&self) -> Minibatch<'_> {
        Minibatch {
            n: self.log_prob.len(),
            obs: &self.obs,
            latent: &self.latent,
            old_log_prob: &self.log_prob,
            old_mean: &self.mean,
            old_log_std: &self.log_std,
            advantages: &self.advantages,
            returns: &self.returns,
        }
    }
}

/// Serialised alongside the tensors in every checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerMeta {
    pub seed: u64,
    pub workers: usize,
    pub batch: u64,
    pub samples: u64,
    pub lr: f64,
    pub adam_t: u64,
    pub ppo: PpoConfig,
    pub env: EnvConfig,
}

pub struct Trainer {
    pub cfg: PpoConfig,
    pub env_cfg: EnvConfig,
    pub seed: u64,
    pub workers: usize,
    pub ac: ActorCritic,
    pub adam: Adam,
    pub norm: RunningNorm,
    pub lr: f64,
    pub batch: u64,
    pub samples: u64,
    envs: Vec<GapEnv>,
}

impl Trainer {
    pub fn new(env_cfg: EnvConfig, cfg: PpoConfig, seed_value: u64, workers: usize) -> Result<Self> {
        cfg.validate()?;
        env_cfg.validate()?;
        if workers == 0 || workers > cfg.batch_size {
            return Err(Error::config("workers", "must be in 1..=ppo.batch_size"));
        }
        let envs = (0..workers)
            .map(|_| GapEnv::new(env_cfg.clone()))
            .collect::<Result<Vec<_>>>()?;
        let ac = ActorCritic::init(
            env_cfg.obs_dim(),
            env_cfg.action_dim(),
            &cfg.hidden,
            cfg.init_log_std,
            seed::derive(seed_value, &[stream::INIT]),
        );
        Ok(Self {
            adam: Adam::new(ac.n_params()),
            norm: RunningNorm::new(env_cfg.obs_dim()),
            lr: cfg.learning_rate,
            batch: 0,
            samples: 0,
            ac,
            cfg,
            env_cfg,
            seed: seed_value,
            workers,
            envs,
        })
    }

    pub fn is_finished(&self) -> bool {
        self.samples >= self.cfg.total_samples
    }

    /// Collects one batch and builds the GAE buffer; also returns episode stats.
    fn collect(&mut self) -> Result<(RolloutBuffer, Vec<f64>, Vec<EpisodeSummary>)> {
        let n = self.cfg.batch_size;
        let w = self.workers;
        let per: Vec<usize> = (0..w).map(|i| n / w + usize::from(i < n % w)).collect();
        let (ac, norm, gamma, seed_value, batch) = (&self.ac, &self.norm, self.cfg.gamma, self.seed, self.batch);
        let segments: Vec<Result<Segment>> = if w == 1 {
            vec![collect_segment(&mut self.envs[0], ac, norm, per[0], gamma, seed_value, batch, 0)]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = self
                    .envs
                    .iter_mut()
                    .zip(&per)
                    .enumerate()
                    .map(|(i, (env, &steps))| {
                        s.spawn(move || collect_segment(env, ac, norm, steps, gamma, seed_value, batch, i as u64))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("rollout worker panicked"))
                    .collect()
            })
        };
        let mut buf = RolloutBuffer {
            obs_dim: self.ac.obs_dim(),
            act_dim: self.ac.act_dim(),
            log_std: self.ac.log_std().to_vec(),
            ..Default::default()
        };
        let mut raw = Vec::with_capacity(n * buf.obs_dim);
        let mut episodes = Vec::new();
        for seg in segments {
            let seg = seg?;
            let (adv, ret) = gae(&seg.reward, &seg.value, &seg.done, seg.last_value, self.cfg.gamma, self.cfg.lam);
            buf.obs.extend(seg.obs);
            buf.latent.extend(seg.latent);
            buf.mean.extend(seg.mean);
            buf.log_prob.extend(seg.log_prob);
            buf.advantages.extend(adv);
            buf.returns.extend(ret);
            raw.extend(seg.raw_obs);
            episodes.extend(seg.episodes);
        }
        normalize(&mut buf.advantages);
        Ok((buf, raw, episodes))
    }

    /// Runs the SGD epochs on a filled buffer.
    pub fn update(&mut self, buf: &RolloutBuffer) -> LossStats {
        let n = buf.len();
        let mut idx: Vec<usize> = (0..n).collect();
        let mut acc = LossStats::default();
        let mut count = 0usize;
        let mut grad = vec![0.0; self.ac.n_params()];
        let coefs = self.cfg.coefs();
        for epoch in 0..self.cfg.sgd_iters {
            let mut rng = seed::rng(self.seed, &[stream::SHUFFLE, self.batch, epoch as u64]);
            idx.shuffle(&mut rng);
            for chunk in idx.chunks(self.cfg.minibatch_size) {
                let mb = buf.gather(chunk);
                grad.fill(0.0);
                let s = ppo_loss(&self.ac, &mb.view(), &coefs, Some(&mut grad));
                self.lr = self.cfg.adapt_lr(self.lr, s.kl);
                clip_grad_norm(&mut grad, self.cfg.max_grad_norm);
                self.adam.step(&mut self.ac.params, &grad, self.lr);
                acc.loss += s.loss;
                acc.policy_loss += s.policy_loss;
                acc.value_loss += s.value_loss;
                acc.kl += s.kl;
                acc.clip_fraction += s.clip_fraction;
                acc.ratio += s.ratio;
                count += 1;
            }
        }
        let c = count.max(1) as f64;
        LossStats {
            loss: acc.loss / c,
            policy_loss: acc.policy_loss / c,
            value_loss: acc.value_loss / c,
            entropy: super::policy::gaussian_entropy(self.ac.log_std()),
            kl: acc.kl / c,
            clip_fraction: acc.clip_fraction / c,
            ratio: acc.ratio / c,
        }
    }

    /// Collects and trains on one batch.
    pub fn train_batch(&mut self) -> Result<BatchStats> {
        let (buf, raw, episodes) = self.collect()?;
        let loss = self.update(&buf);
        self.norm.update(&raw);
        if !self.ac.params.iter().all(|p| p.is_finite()) {
            return Err(Error::NonFinite("policy parameters after update"));
        }
        self.batch += 1;
        self.samples += buf.len() as u64;

        let finished: Vec<&EpisodeSummary> = episodes.iter().filter(|e| e.finished).collect();
        let pool: Vec<&EpisodeSummary> = if finished.is_empty() {
            episodes.iter().collect()
        } else {
            finished.clone()
        };
        let mean_return = if pool.is_empty() {
            f64::NAN
        } else {
            pool.iter().map(|e| e.ret).sum::<f64>() / pool.len() as f64
        };
        let gaps: usize = finished.iter().map(|e| e.gaps).sum();
        let crossed: usize = finished.iter().map(|e| e.crossed).sum();
        let success_rate = if gaps == 0 {
            f64::NAN
        } else {
            crossed as f64 / gaps as f64
        };
        Ok(BatchStats {
            batch: self.batch,
            samples: self.samples,
            mean_return,
            success_rate,
            episodes: finished.len(),
            kl: loss.kl,
            entropy: loss.entropy,
            lr: self.lr,
            policy_loss: loss.policy_loss,
            value_loss: loss.value_loss,
            clip_fraction: loss.clip_fraction,
        })
    }

    /// Loss of the next batch without changing any state; used to check
    /// that a reloaded checkpoint continues identically.
    pub fn probe_next_loss(&mut self) -> Result<LossStats> {
        let (buf, _, _) = self.collect()?;
        let mb = buf.gather(&(0..buf.len()).collect::<Vec<_>>());
        Ok(ppo_loss(&self.ac, &mb.view(), &self.cfg.coefs(), None))
    }

    pub fn meta(&self) -> TrainerMeta {
        TrainerMeta {
            seed: self.seed,
            workers: self.workers,
            batch: self.batch,
            samples: self.samples,
            lr: self.lr,
            adam_t: self.adam.t,
            ppo: self.cfg.clone(),
            env: self.env_cfg.clone(),
        }
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let meta = toml::to_string(&self.meta()).map_err(|e| Error::ConfigParse(e.to_string()))?;
        let mut c = Checkpoint {
            meta,
            tensors: Vec::new(),
        };
        let mut off = 0;
        for (name, shape) in self.ac.tensor_shapes() {
            let len: usize = shape.iter().product();
            c.push(name, shape, self.ac.params[off..off + len].to_vec());
            off += len;
        }
        let n = self.ac.n_params();
        c.push("adam.m", vec![n], self.adam.m.clone());
        c.push("adam.v", vec![n], self.adam.v.clone());
        let d = self.norm.dim();
        c.push("obs_norm.count", vec![], vec![self.norm.count]);
        c.push("obs_norm.mean", vec![d], self.norm.mean.clone());
        c.push("obs_norm.var", vec![d], self.norm.var.clone());
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn from_checkpoint(c: &Checkpoint, path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::Checkpoint {
            path: path.to_path_buf(),
            reason,
        };
        let meta: TrainerMeta = toml::from_str(&c.meta).map_err(|e| bad(format!("metadata: {e}")))?;
        let mut t = Self::new(meta.env.clone(), meta.ppo.clone(), meta.seed, meta.workers)?;
        let tensor = |name: &str, len: usize| -> Result<Vec<f64>> {
            let x = c.get(name).ok_or_else(|| bad(format!("missing tensor {name}")))?;
            if x.data.len() != len {
                return Err(bad(format!("tensor {name}: expected {len} values, found {}", x.data.len())));
            }
            Ok(x.data.clone())
        };
        let mut params = Vec::with_capacity(t.ac.n_params());
        for (name, shape) in t.ac.tensor_shapes() {
            let x = c.get(&name).ok_or_else(|| bad(format!("missing tensor {name}")))?;
            if x.shape != shape {
                return Err(bad(format!("tensor {name}: shape {:?}, expected {shape:?}", x.shape)));
            }
            params.extend_from_slice(&x.data);
        }
        t.ac.set_params(params)?;
        let n = t.ac.n_params();
        t.adam.m = tensor("adam.m", n)?;
        t.adam.v = tensor("adam.v", n)?;
        t.adam.t = meta.adam_t;
        let d = t.norm.dim();
        t.norm.count = tensor("obs_norm.count", 1)?[0];
        t.norm.mean = tensor("obs_norm.mean", d)?;
        t.norm.var = tensor("obs_norm.var", d)?;
        t.lr = meta.lr;
        t.batch = meta.batch;
        t.samples = meta.samples;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?, path)
    }

    /// Trains until `total_samples`, appending to `metrics` and writing
    /// checkpoints into `ckpt_dir`. `on_batch` sees every batch's stats.
    pub fn run(
        &mut self,
        metrics: Option<&mut MetricsLog>,
        ckpt_dir: Option<&Path>,
        mut on_batch: impl FnMut(&BatchStats),
    ) -> Result<Option<PathBuf>> {
        let mut metrics = metrics;
        let mut last = None;
        while !self.is_finished() {
            let stats = self.train_batch()?;
            if let Some(m) = metrics.as_deref_mut() {
                m.append(&stats)?;
            }
            on_batch(&stats);
            if let Some(dir) = ckpt_dir {
                let every = self.cfg.checkpoint_every;
                if (every > 0 && self.batch % every == 0) || self.is_finished() {
                    let p = dir.join(format!("ckpt_{:06}.bin", self.batch));
                    self.save(&p)?;
                    self.save(&dir.join("latest.bin"))?;
                    last = Some(p);
                }
            }
        }
        Ok(last)
    }

    /// Policy-only copy with its normaliser, for evaluation.
    pub fn policy(&self) -> TrainedPolicy {
        TrainedPolicy {
            ac: self.ac.clone(),
            norm: self.norm.clone(),
        }
    }
}

/// A frozen policy plus the observation normaliser it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPolicy {
    pub ac: ActorCritic,
    pub norm: RunningNorm,
}

impl TrainedPolicy {
    pub fn act(&self, raw_obs: &[f64]) -> Vec<f64> {
        self.ac.act_deterministic(&self.norm.normalize(raw_obs))
    }
}

/// Append-only metrics CSV.
pub struct MetricsLog {
    out: BufWriter<File>,
    pub path: PathBuf,
}

impl MetricsLog {
    /// Creates the file, or appends when resuming (`resume = true`).
    pub fn open(path: &Path, resume: bool) -> Result<Self> {
        let exists = path.exists();
        let f = if resume && exists {
            OpenOptions::new().append(true).open(path)?
        } else {
            File::create(path)?
        };
        let mut out = BufWriter::new(f);
        if !(resume && exists) {
            writeln!(out, "{METRICS_SCHEMA}")?;
            writeln!(out, "{METRICS_HEADER}")?;
        }
        out.flush()?;
        Ok(Self {
            out,
            path: path.to_path_buf(),
        })
    }

    pub fn append(&mut self, s: &BatchStats) -> Result<()> {
        writeln!(self.out, "{}", s.csv_line())?;
        self.out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{ActionConfig, ObsConfig};
    use crate::terrain::TerrainConfig;

    fn tiny() -> (EnvConfig, PpoConfig) {
        let env = EnvConfig {
            action: ActionConfig::case(1).unwrap(),
            observation: ObsConfig::default(),
            terrain: TerrainConfig::flat(),
            episode_seconds: 1.0,
            ..EnvConfig::default()
        };
        let ppo = PpoConfig {
            batch_size: 256,
            minibatch_size: 64,
            sgd_iters: 2,
            hidden: vec![16, 16],
            total_samples: 768,
            ..PpoConfig::default()
        };
        (env, ppo)
    }

    #[test]
    fn sample_counter_stops_at_total() {
        let (env, ppo) = tiny();
        let mut t = Trainer::new(env, ppo, 1, 1).unwrap();
        let mut n = 0;
        t.run(None, None, |_| n += 1).unwrap();
        assert_eq!(n, 3);
        assert_eq!(t.samples, 768);
    }

    #[test]
    fn workers_split_the_batch() {
        let (env, ppo) = tiny();
        let mut t = Trainer::new(env, PpoConfig { batch_size: 250, ..ppo }, 1, 3).unwrap();
        let (buf, raw, _) = t.collect().unwrap();
        assert_eq!(buf.len(), 250);
        assert_eq!(raw.len(), 250 * t.ac.obs_dim());
    }

    #[test]
    fn stored_log_probs_recompute_bitwise() {
        let (env, ppo) = tiny();
        let mut t = Trainer::new(env, ppo, 4, 2).unwrap();
        let (buf, _, _) = t.collect().unwrap();
        let idx: Vec<usize> = (0..buf.len()).rev().collect();
        let mb = buf.gather(&idx);
        let (pc, _) = t.ac.forward_batch(&mb.obs, idx.len());
        let k = t.ac.act_dim();
        for (r, &i) in idx.iter().enumerate() {
            let lp = super::super::policy::squashed_log_prob(
                &mb.latent[r * k..(r + 1) * k],
                &pc.output()[r * k..(r + 1) * k],
                t.ac.log_std(),
            );
            assert_eq!(lp.to_bits(), buf.log_prob[i].to_bits());
        }
    }

    #[test]
    fn checkpoint_resume_gives_identical_next_batch() {
        let dir = tempfile::tempdir().unwrap();
        let (env, ppo) = tiny();
        let mut a = Trainer::new(env, ppo, 9, 1).unwrap();
        a.train_batch().unwrap();
        let p = dir.path().join("c.bin");
        a.save(&p).unwrap();
        let mut b = Trainer::load(&p).unwrap();
        let la = a.probe_next_loss().unwrap();
        let lb = b.probe_next_loss().unwrap();
        assert_eq!(la.loss.to_bits(), lb.loss.to_bits());
        let sa = a.train_batch().unwrap();
        let sb = b.train_batch().unwrap();
        assert_eq!(sa.csv_line(), sb.csv_line());
        assert_eq!(a.ac.params, b.ac.params);
    }
}
