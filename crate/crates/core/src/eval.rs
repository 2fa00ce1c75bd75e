//! Rollout evaluation: success rate, cost of transport, Froude number and
//! mean body angular velocity.

use std::fmt::Write as _;
use std::path::Path;

use crate::env::{EnvConfig, GapEnv};
use crate::error::Result;
use crate::ppo::train::TrainedPolicy;
use crate::seed::{self, stream};
use crate::trace::{EpisodeTrace, PowerTrace};

/// Anything that maps an observation to an action in `[-1, 1]^k`.
pub trait Controller: Sync {
    fn act(&self, obs: &[f64]) -> Vec<f64>;
}

impl Controller for TrainedPolicy {
    fn act(&self, obs: &[f64]) -> Vec<f64> {
        TrainedPolicy::act(self, obs)
    }
}

/// Holds one action for the whole episode.
pub struct ConstantAction(pub Vec<f64>);

impl Controller for ConstantAction {
    fn act(&self, _: &[f64]) -> Vec<f64> {
        self.0.clone()
    }
}

/// Percentage of gaps crossed; `None` when no gap was presented.
pub fn success_rate(crossed: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| 100.0 * crossed as f64 / total as f64)
}

/// Mechanical cost of transport `W / (m g d)`; `None` unless `d > 0`.
pub fn cost_of_transport(work: f64, mass: f64, gravity: f64, distance: f64) -> Option<f64> {
    (distance > 0.0).then(|| work / (mass * gravity * distance))
}

pub fn cost_of_transport_trace(power: &PowerTrace, mass: f64, gravity: f64, distance: f64) -> Option<f64> {
    cost_of_transport(power.work(), mass, gravity, distance)
}

/// `v^2 / (g h)`.
pub fn froude(velocity: f64, leg_length: f64, gravity: f64) -> f64 {
    velocity * velocity / (gravity * leg_length)
}

/// `(sum |w_x| + |w_y| + |w_z|) / 3N`. Only pitch rotates in the sagittal
/// model, so callers pass pitch rates and the other two axes contribute zero.
pub fn mean_body_angular_velocity(pitch_rates: &[f64]) -> f64 {
    if pitch_rates.is_empty() {
        return 0.0;
    }
    sorted_sum(pitch_rates.iter().map(|w| w.abs())) / (3.0 * pitch_rates.len() as f64)
}

/// Order-independent sum (sorted before accumulation).
fn sorted_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = xs.collect();
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

/// Mean and population standard deviation, order-independent.
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let m = sorted_sum(xs.iter().copied()) / n;
    let var = sorted_sum(xs.iter().map(|x| (x - m).powi(2))) / n;
    Some((m, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutRecord {
    pub index: usize,
    pub seed: u64,
    pub gaps: usize,
    pub crossed: usize,
    pub distance: f64,
    pub duration: f64,
    pub velocity: f64,
    pub work: f64,
    pub cot: Option<f64>,
    pub froude: f64,
    pub body_angular_velocity: f64,
    pub fell: bool,
    pub total_reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub label: String,
    pub n_rollouts: usize,
    /// Percent; `None` on gap-free terrain.
    pub success_rate: Option<f64>,
    pub cot: Option<Summary>,
    pub froude: Summary,
    pub velocity: Summary,
    pub mean_body_angular_velocity: Summary,
    pub fall_rate: f64,
    pub records: Vec<RolloutRecord>,
}

fn summary(xs: &[f64]) -> Option<Summary> {
    mean_std(xs).map(|(mean, std)| Summary { mean, std })
}

impl EvalReport {
    pub fn from_records(label: impl Into<String>, mut records: Vec<RolloutRecord>) -> Self {
        records.sort_by_key(|r| r.index);
        let col = |f: fn(&RolloutRecord) -> f64| -> Vec<f64> { records.iter().map(f).collect() };
        let zero = Summary { mean: 0.0, std: 0.0 };
        let cots: Vec<f64> = records.iter().filter_map(|r| r.cot).collect();
        let gaps: usize = records.iter().map(|r| r.gaps).sum();
        let crossed: usize = records.iter().map(|r| r.crossed).sum();
        let falls = records.iter().filter(|r| r.fell).count();
        Self {
            label: label.into(),
            n_rollouts: records.len(),
            success_rate: success_rate(crossed, gaps),
            cot: summary(&cots),
            froude: summary(&col(|r| r.froude)).unwrap_or(zero.clone()),
            velocity: summary(&col(|r| r.velocity)).unwrap_or(zero.clone()),
            mean_body_angular_velocity: summary(&col(|r| r.body_angular_velocity)).unwrap_or(zero),
            fall_rate: if records.is_empty() {
                0.0
            } else {
                falls as f64 / records.len() as f64
            },
            records,
        }
    }

    pub const CSV_HEADER: &'static str = "label,n_rollouts,success_rate,cot,cot_std,froude,froude_std,velocity,velocity_std,body_angular_velocity,body_angular_velocity_std,fall_rate";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.label,
            self.n_rollouts,
            opt(self.success_rate),
            opt(self.cot.as_ref().map(|s| s.mean)),
            opt(self.cot.as_ref().map(|s| s.std)),
            self.froude.mean,
            self.froude.std,
            self.velocity.mean,
            self.velocity.std,
            self.mean_body_angular_velocity.mean,
            self.mean_body_angular_velocity.std,
            self.fall_rate
        )
    }

    pub fn write_csv(reports: &[EvalReport], path: &Path) -> Result<()> {
        let mut s = String::from("# schema: gapcross-eval/v1\n");
        s.push_str(Self::CSV_HEADER);
        s.push('\n');
        for r in reports {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn write_records_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::from("# schema: gapcross-rollouts/v1\n");
        s.push_str("index,seed,gaps,crossed,distance,duration,velocity,work,cot,froude,body_angular_velocity,fell,total_reward\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.index,
                r.seed,
                r.gaps,
                r.crossed,
                r.distance,
                r.duration,
                r.velocity,
                r.work,
                r.cot.map_or_else(String::new, |c| c.to_string()),
                r.froude,
                r.body_angular_velocity,
                u8::from(r.fell),
                r.total_reward
            );
        }
        std::fs::write(path, s)?;
        Ok(())
    }

    /// Plain-text table, one row per report.
    pub fn table(reports: &[EvalReport]) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<24} {:>5} {:>9} {:>13} {:>13} {:>13} {:>13} {:>6}",
            "policy", "n", "success%", "CoT", "Froude", "v [m/s]", "w_body", "falls"
        );
        let pm = |m: f64, sd: f64| format!("{m:.3}±{sd:.3}");
        for r in reports {
            let _ = writeln!(
                s,
                "{:<24} {:>5} {:>9} {:>13} {:>13} {:>13} {:>13} {:>6.2}",
                r.label,
                r.n_rollouts,
                r.success_rate.map_or("-".into(), |v| format!("{v:.1}")),
                r.cot.as_ref().map_or("-".into(), |c| pm(c.mean, c.std)),
                pm(r.froude.mean, r.froude.std),
                pm(r.velocity.mean, r.velocity.std),
                pm(r.mean_body_angular_velocity.mean, r.mean_body_angular_velocity.std),
                r.fall_rate
            );
        }
        s
    }
}

/// Environment seed of rollout `i` for a given evaluation seed.
pub fn rollout_seed(eval_seed: u64, i: usize) -> u64 {
    seed::derive(eval_seed, &[stream::EVAL, i as u64])
}

/// Runs one deterministic rollout; optionally records its trace.
pub fn run_rollout(
    ctrl: &dyn Controller,
    env: &mut GapEnv,
    index: usize,
    env_seed: u64,
    record: bool,
) -> Result<(RolloutRecord, Option<EpisodeTrace>)> {
    env.set_recording(record);
    let mut obs = env.reset(env_seed)?;
    loop {
        let r = env.step(&ctrl.act(&obs))?;
        obs = r.observation;
        if r.done {
            break;
        }
    }
    let cfg = env.config();
    let s = *env.stats();
    let velocity = if s.duration > 0.0 { s.distance / s.duration } else { 0.0 };
    let rec = RolloutRecord {
        index,
        seed: env_seed,
        gaps: s.n_gaps,
        crossed: s.gaps_crossed,
        distance: s.distance,
        duration: s.duration,
        velocity,
        work: s.work,
        cot: cost_of_transport(s.work, cfg.robot.total_mass(), cfg.robot.gravity, s.distance),
        froude: froude(velocity, cfg.pattern.nominal_height, cfg.robot.gravity),
        body_angular_velocity: if s.steps > 0 {
            s.sum_abs_pitch_rate / (3.0 * s.steps as f64)
        } else {
            0.0
        },
        fell: s.fell,
        total_reward: s.total_reward,
    };
    let trace = if record { env.take_trace() } else { None };
    env.set_recording(false);
    Ok((rec, trace))
}

/// `n` deterministic rollouts split across `workers` threads.
pub fn evaluate(
    ctrl: &dyn Controller,
    env_cfg: &EnvConfig,
    n: usize,
    eval_seed: u64,
    workers: usize,
    label: &str,
) -> Result<EvalReport> {
    let workers = workers.clamp(1, n.max(1));
    let run_range = |w: usize| -> Result<Vec<RolloutRecord>> {
        let mut env = GapEnv::new(env_cfg.clone())?;
        (w..n)
            .step_by(workers)
            .map(|i| run_rollout(ctrl, &mut env, i, rollout_seed(eval_seed, i), false).map(|r| r.0))
            .collect()
    };
    let mut records = Vec::with_capacity(n);
    if workers == 1 {
        records = run_range(0)?;
    } else {
        let parts: Vec<Result<Vec<RolloutRecord>>> = std::thread::scope(|s| {
            let hs: Vec<_> = (0..workers).map(|w| s.spawn(move || run_range(w))).collect();
            hs.into_iter().map(|h| h.join().expect("eval worker panicked")).collect()
        });
        for p in parts {
            records.extend(p?);
        }
    }
    Ok(EvalReport::from_records(label, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::ActionConfig;
    use crate::terrain::TerrainConfig;

    #[test]
    fn success_rate_examples() {
        assert_eq!(success_rate(7, 7), Some(100.0));
        assert_eq!(success_rate(0, 7), Some(0.0));
        let r = success_rate(204, 30 * 7).unwrap();
        assert!((r - 97.142_857).abs() < 1e-4);
        assert_eq!(success_rate(0, 0), None);
    }

    #[test]
    fn cot_examples() {
        assert_eq!(cost_of_transport(0.0, 12.0, 9.81, 3.0), Some(0.0));
        // constant power P for T seconds over distance d
        let (p, t, d) = (40.0, 10.0, 8.0);
        let c = cost_of_transport(p * t, 12.0, 9.81, d).unwrap();
        assert!((c - p * t / (12.0 * 9.81 * d)).abs() < 1e-15);
        assert_eq!(cost_of_transport(5.0, 12.0, 9.81, 0.0), None);
        assert_eq!(cost_of_transport(5.0, 12.0, 9.81, -1.0), None);
    }

    #[test]
    fn single_joint_constant_power_trace() {
        let mut pt = PowerTrace::new(1e-3);
        for _ in 0..2000 {
            let mut tau = [0.0; 8];
            let mut qd = [0.0; 8];
            tau[3] = 4.0;
            qd[3] = -2.5;
            pt.push(tau, qd);
        }
        let c = cost_of_transport_trace(&pt, 12.0, 9.81, 1.5).unwrap();
        assert!((c - 10.0 * 2.0 / (12.0 * 9.81 * 1.5)).abs() < 1e-12);
    }

    #[test]
    fn froude_examples() {
        assert!((froude(1.0, 0.25, 9.81) - 0.4077).abs() < 1e-4);
        assert_eq!(froude(0.0, 0.25, 9.81), 0.0);
    }

    #[test]
    fn body_angular_velocity_examples() {
        assert_eq!(mean_body_angular_velocity(&[0.0; 10]), 0.0);
        let w = mean_body_angular_velocity(&[0.3, -0.3, 0.3, -0.3]);
        assert!((w - 0.1).abs() < 1e-15);
    }

    #[test]
    fn report_is_permutation_invariant() {
        let recs: Vec<RolloutRecord> = (0..6)
            .map(|i| RolloutRecord {
                index: i,
                seed: i as u64,
                gaps: 7,
                crossed: i,
                distance: 1.0 + 0.37 * i as f64,
                duration: 10.0,
                velocity: 0.1 + 0.037 * i as f64,
                work: 3.3 * i as f64,
                cot: Some(0.1 * i as f64 + 0.01),
                froude: 0.01 * (i * i) as f64,
                body_angular_velocity: 0.2 / (1.0 + i as f64),
                fell: i % 2 == 0,
                total_reward: 1.0,
            })
            .collect();
        let a = EvalReport::from_records("x", recs.clone());
        let mut rev = recs;
        rev.reverse();
        rev.swap(1, 4);
        let b = EvalReport::from_records("x", rev);
        assert_eq!(a.csv_row(), b.csv_row());
        assert_eq!(a.fall_rate, 0.5);
    }

    #[test]
    fn evaluation_is_reproducible_and_worker_independent() {
        let cfg = EnvConfig {
            action: ActionConfig::case(1).unwrap(),
            episode_seconds: 0.5,
            terrain: TerrainConfig::default(),
            ..EnvConfig::default()
        };
        let ctrl = ConstantAction(vec![0.0; cfg.action_dim()]);
        let a = evaluate(&ctrl, &cfg, 4, 3, 1, "c").unwrap();
        let b = evaluate(&ctrl, &cfg, 4, 3, 3, "c").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_rollouts, 4);
        assert!(a.success_rate.is_some());
        assert!(a.velocity.mean > 0.0);
    }
}
