//! Episode traces: one row per control step, exported as CSV.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::env::reward::RewardBreakdown;
use crate::error::{Error, Result};
use crate::{LEG_NAMES, NUM_JOINTS, NUM_LEGS};

pub const TRACE_SCHEMA: &str = "# schema: gapcross-trace/v1";

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub time: f64,
    /// `[x, z, pitch]`
    pub base: [f64; 3],
    /// `[vx, vz, pitch_rate]`
    pub base_vel: [f64; 3],
    pub foot_x: [f64; NUM_LEGS],
    pub foot_z: [f64; NUM_LEGS],
    /// Foot is horizontally over a gap interval.
    pub over_gap: [bool; NUM_LEGS],
    pub contact: [bool; NUM_LEGS],
    pub r: [f64; NUM_LEGS],
    pub theta: [f64; NUM_LEGS],
    pub mu: [f64; NUM_LEGS],
    pub omega: [f64; NUM_LEGS],
    pub x_off: [f64; NUM_LEGS],
    pub z_off: [f64; NUM_LEGS],
    pub action: Vec<f64>,
    pub reward: f64,
    pub breakdown: RewardBreakdown,
    /// Mechanical work `sum |tau . qd| dt` during the cycle (J).
    pub work: f64,
}

/// Joint torque and velocity at every physics step, for energy metrics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PowerTrace {
    pub dt: f64,
    pub torque: Vec<[f64; NUM_JOINTS]>,
    pub qdot: Vec<[f64; NUM_JOINTS]>,
}

impl PowerTrace {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            torque: Vec::new(),
            qdot: Vec::new(),
        }
    }

    pub fn push(&mut self, torque: [f64; NUM_JOINTS], qdot: [f64; NUM_JOINTS]) {
        self.torque.push(torque);
        self.qdot.push(qdot);
    }

    pub fn len(&self) -> usize {
        self.torque.len()
    }

    pub fn is_empty(&self) -> bool {
        self.torque.is_empty()
    }

    /// Total absolute mechanical work (J).
    pub fn work(&self) -> f64 {
        self.torque
            .iter()
            .zip(&self.qdot)
            .map(|(t, v)| t.iter().zip(v).map(|(a, b)| (a * b).abs()).sum::<f64>() * self.dt)
            .sum()
    }

    /// Linear resampling at `factor` times the original rate.
    pub fn upsample(&self, factor: usize) -> Self {
        assert!(factor >= 1);
        let mut out = Self::new(self.dt / factor as f64);
        let n = self.len();
        for k in 0..n {
            let next = (k + 1).min(n - 1);
            for s in 0..factor {
                let w = s as f64 / factor as f64;
                let lerp = |a: &[f64; NUM_JOINTS], b: &[f64; NUM_JOINTS]| -> [f64; NUM_JOINTS] {
                    std::array::from_fn(|j| a[j] + w * (b[j] - a[j]))
                };
                out.push(
                    lerp(&self.torque[k], &self.torque[next]),
                    lerp(&self.qdot[k], &self.qdot[next]),
                );
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeTrace {
    pub rows: Vec<TraceRow>,
    pub power: PowerTrace,
    pub gaps: Vec<crate::terrain::Gap>,
}

fn per_leg(prefix: &str) -> impl Iterator<Item = String> + '_ {
    LEG_NAMES.iter().map(move |l| format!("{prefix}_{l}"))
}

fn header(action_dim: usize) -> Vec<String> {
    let mut h: Vec<String> = ["time", "x", "z", "pitch", "vx", "vz", "pitch_rate"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for p in [
        "foot_x", "foot_z", "over_gap", "contact", "r", "theta", "mu", "omega", "x_off", "z_off",
    ] {
        h.extend(per_leg(p));
    }
    h.extend((0..action_dim).map(|i| format!("action_{i}")));
    h.push("reward".into());
    h.extend(RewardBreakdown::NAMES.iter().map(|n| format!("r_{n}")));
    h.push("work".into());
    h
}

fn b2f(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

impl EpisodeTrace {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{TRACE_SCHEMA}")?;
        let gaps: Vec<String> = self
            .gaps
            .iter()
            .map(|g| format!("{}:{}", g.start, g.end))
            .collect();
        writeln!(w, "# gaps: {}", gaps.join(" "))?;
        let action_dim = self.rows.first().map_or(0, |r| r.action.len());
        writeln!(w, "{}", header(action_dim).join(","))?;
        for r in &self.rows {
            let mut vals: Vec<f64> = vec![r.time];
            vals.extend_from_slice(&r.base);
            vals.extend_from_slice(&r.base_vel);
            vals.extend_from_slice(&r.foot_x);
            vals.extend_from_slice(&r.foot_z);
            vals.extend(r.over_gap.iter().map(|&b| b2f(b)));
            vals.extend(r.contact.iter().map(|&b| b2f(b)));
            for a in [&r.r, &r.theta, &r.mu, &r.omega, &r.x_off, &r.z_off] {
                vals.extend_from_slice(a);
            }
            vals.extend_from_slice(&r.action);
            vals.push(r.reward);
            vals.extend_from_slice(&r.breakdown.terms());
            vals.push(r.work);
            let line: Vec<String> = vals.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads back the rows written by [`EpisodeTrace::write_csv`]. The power
    /// trace is not part of the CSV.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let err = |reason: String| Error::Csv {
            path: path.to_path_buf(),
            reason,
        };
        let text = std::fs::read_to_string(path)?;
        let mut gaps = Vec::new();
        let mut lines = text.lines();
        match lines.next() {
            Some(l) if l.trim() == TRACE_SCHEMA => {}
            other => return Err(err(format!("unexpected schema line {other:?}"))),
        }
        let mut body = String::new();
        for l in lines {
            if let Some(g) = l.strip_prefix("# gaps:") {
                for tok in g.split_whitespace() {
                    let (s, e) = tok.split_once(':').ok_or_else(|| err(format!("bad gap {tok}")))?;
                    let parse = |v: &str| v.parse::<f64>().map_err(|e| err(e.to_string()));
                    gaps.push(crate::terrain::Gap {
                        start: parse(s)?,
                        end: parse(e)?,
                    });
                }
            } else if !l.starts_with('#') {
                body.push_str(l);
                body.push('\n');
            }
        }
        let mut rdr = csv::ReaderBuilder::new().from_reader(body.as_bytes());
        let headers = rdr.headers().map_err(|e| err(e.to_string()))?.clone();
        let action_dim = headers.iter().filter(|h| h.starts_with("action_")).count();
        if headers.len() != header(action_dim).len() {
            return Err(err(format!("expected {} columns, found {}", header(action_dim).len(), headers.len())));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| err(e.to_string()))?;
            let v: Vec<f64> = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| err(e.to_string())))
                .collect::<Result<_>>()?;
            let mut it = v.into_iter();
            let mut take = |n: usize| -> Vec<f64> { it.by_ref().take(n).collect() };
            let arr4 = |v: Vec<f64>| -> [f64; NUM_LEGS] { [v[0], v[1], v[2], v[3]] };
            let time = take(1)[0];
            let base = take(3);
            let vel = take(3);
            let foot_x = arr4(take(4));
            let foot_z = arr4(take(4));
            let over_gap = arr4(take(4)).map(|f| f > 0.5);
            let contact = arr4(take(4)).map(|f| f > 0.5);
            let r = arr4(take(4));
            let theta = arr4(take(4));
            let mu = arr4(take(4));
            let omega = arr4(take(4));
            let x_off = arr4(take(4));
            let z_off = arr4(take(4));
            let action = take(action_dim);
            let reward = take(1)[0];
            let t = take(6);
            let work = take(1)[0];
            rows.push(TraceRow {
                time,
                base: [base[0], base[1], base[2]],
                base_vel: [vel[0], vel[1], vel[2]],
                foot_x,
                foot_z,
                over_gap,
                contact,
                r,
                theta,
                mu,
                omega,
                x_off,
                z_off,
                action,
                reward,
                breakdown: RewardBreakdown {
                    forward: t[0],
                    gap_bonus: t[1],
                    gap_penalty: t[2],
                    lateral: t[3],
                    orientation: t[4],
                    power: t[5],
                },
                work,
            });
        }
        Ok(Self {
            rows,
            power: PowerTrace::default(),
            gaps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upsample_preserves_constant_power() {
        let mut p = PowerTrace::new(1e-3);
        for _ in 0..100 {
            p.push([2.0; NUM_JOINTS], [0.5; NUM_JOINTS]);
        }
        let w = p.work();
        assert!((w - 100.0 * 8.0 * 1e-3).abs() < 1e-12);
        let u = p.upsample(2);
        assert_eq!(u.len(), 200);
        assert!((u.work() - w).abs() < 1e-12);
    }
}
