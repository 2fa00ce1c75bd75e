//! Command-line surface: train, eval, sweep, rollout and plot.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::env::{ActionConfig, EnvConfig, ObsConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate, run_rollout, EvalReport};
use crate::plot::{bar_chart_svg, panels_svg, rollout_svg, Panel, Series};
use crate::ppo::train::{MetricsLog, TrainedPolicy, METRICS_SCHEMA};
use crate::ppo::Trainer;
use crate::terrain::{TerrainConfig, TerrainMode};
use crate::trace::{EpisodeTrace, TRACE_SCHEMA};
use crate::LEG_NAMES;

#[derive(Debug, Parser)]
#[command(
    name = "gapcross",
    version,
    about = "Train and evaluate CPG-based quadruped gap-crossing policies",
    after_help = "Outputs default to $GAPCROSS_OUT/<label> (or runs/<label>) unless --out is given."
)]
pub struct Cli {
    /// Only print errors and final summaries.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TerrainArg {
    Flat,
    Standard,
    Challenging,
}

impl From<TerrainArg> for TerrainMode {
    fn from(t: TerrainArg) -> Self {
        match t {
            TerrainArg::Flat => TerrainMode::Flat,
            TerrainArg::Standard => TerrainMode::Standard,
            TerrainArg::Challenging => TerrainMode::Challenging,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SweepKind {
    /// The six action-space cases.
    Actions,
    /// The sixteen observation combinations.
    Observations,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a policy; writes checkpoints, metrics.csv, the resolved config and an evaluation.
    Train {
        /// Run configuration (TOML). Defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory (overrides the config and $GAPCROSS_OUT).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override ppo.total_samples.
        #[arg(long)]
        total_samples: Option<u64>,
        /// Continue from <out>/checkpoints/latest.bin.
        #[arg(long)]
        resume: bool,
        /// Skip the evaluation after training.
        #[arg(long)]
        no_eval: bool,
    },
    /// Evaluate a checkpoint (or an untrained policy built from --config).
    Eval {
        #[arg(long, required_unless_present = "config")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of rollouts (default: the config's eval.n_rollouts).
        #[arg(long)]
        n: Option<usize>,
        /// Evaluation seed (default: the config's eval.seed).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        terrain: Option<TerrainArg>,
        /// Number of gaps in the evaluation terrain.
        #[arg(long)]
        gaps: Option<usize>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        label: Option<String>,
    },
    /// Train and evaluate every action case or observation combination.
    Sweep {
        #[arg(long, value_enum)]
        kind: SweepKind,
        /// Base configuration shared by all entries.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Restrict to these case / combination ids (comma separated).
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
        #[arg(long)]
        total_samples: Option<u64>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one episode from a checkpoint; with --record, write the trace CSV and SVG.
    Rollout {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        record: bool,
        #[arg(long)]
        terrain: Option<TerrainArg>,
        #[arg(long)]
        gaps: Option<usize>,
        /// Limb whose drive signals are plotted.
        #[arg(long, default_value = "FL")]
        limb: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-render SVGs from trace, metrics or eval CSVs.
    Plot {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Output directory (default: next to each input).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::ConfigParse(_) => 2,
        _ => 1,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let quiet = cli.quiet;
    match cli.command {
        Command::Train {
            config,
            seed,
            workers,
            out,
            total_samples,
            resume,
            no_eval,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if let Some(t) = total_samples {
                cfg.ppo.total_samples = t;
            }
            if let Some(o) = out {
                cfg.output_dir = Some(o);
            }
            cfg.validate()?;
            cmd_train(&cfg, resume, !no_eval, quiet).map(|_| ())
        }
        Command::Eval {
            checkpoint,
            config,
            n,
            seed,
            terrain,
            gaps,
            workers,
            out,
            label,
        } => {
            let (policy, mut run) = match (&checkpoint, &config) {
                (Some(c), cfg_path) => {
                    let t = Trainer::load(c)?;
                    let mut run = match cfg_path {
                        Some(p) => RunConfig::load(p)?,
                        None => RunConfig::default(),
                    };
                    run.env = t.env_cfg.clone();
                    (t.policy(), run)
                }
                (None, Some(p)) => {
                    let run = RunConfig::load(p)?;
                    let t = Trainer::new(run.env.clone(), run.ppo.clone(), run.seed, 1)?;
                    (t.policy(), run)
                }
                (None, None) => unreachable!("clap requires one of them"),
            };
            apply_terrain(&mut run.env, terrain, gaps);
            let n = n.unwrap_or(run.eval.n_rollouts);
            let seed = seed.unwrap_or(run.eval.seed);
            let label = label.unwrap_or_else(|| run.label.clone());
            let out = out.unwrap_or_else(|| crate::config::default_root().join(format!("{label}_eval")));
            cmd_eval(&policy, &run.env, n, seed, workers, &label, &out).map(|r| {
                println!("{}", EvalReport::table(&[r]));
            })
        }
        Command::Sweep {
            kind,
            config,
            only,
            total_samples,
            n,
            workers,
            out,
        } => {
            let mut base = load_config(config.as_deref())?;
            if let Some(t) = total_samples {
                base.ppo.total_samples = t;
            }
            if let Some(n) = n {
                base.eval.n_rollouts = n;
            }
            if let Some(w) = workers {
                base.workers = w;
            }
            let out = out.unwrap_or_else(|| crate::config::default_root().join(format!("sweep_{}", kind_name(kind))));
            let reports = cmd_sweep(kind, &base, &only, &out, quiet)?;
            println!("{}", EvalReport::table(&reports));
            Ok(())
        }
        Command::Rollout {
            checkpoint,
            seed,
            record,
            terrain,
            gaps,
            limb,
            out,
        } => {
            let limb = LEG_NAMES
                .iter()
                .position(|l| l.eq_ignore_ascii_case(&limb))
                .ok_or_else(|| Error::config("limb", format!("must be one of {LEG_NAMES:?}")))?;
            let t = Trainer::load(&checkpoint)?;
            let mut env = t.env_cfg.clone();
            apply_terrain(&mut env, terrain, gaps);
            let out = out.unwrap_or_else(|| crate::config::default_root().join(format!("rollout_{seed}")));
            cmd_rollout(&t.policy(), &env, seed, record, limb, &out)
        }
        Command::Plot { inputs, out } => {
            for p in inputs {
                let written = cmd_plot(&p, out.as_deref())?;
                if !quiet {
                    eprintln!("wrote {}", written.display());
                }
            }
            Ok(())
        }
    }
}

fn kind_name(k: SweepKind) -> &'static str {
    match k {
        SweepKind::Actions => "actions",
        SweepKind::Observations => "observations",
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn apply_terrain(env: &mut EnvConfig, terrain: Option<TerrainArg>, gaps: Option<usize>) {
    if let Some(t) = terrain {
        env.terrain.mode = t.into();
        if env.terrain.mode != TerrainMode::Flat && env.terrain.n_gaps == 0 {
            env.terrain.n_gaps = TerrainConfig::default().n_gaps;
        }
    }
    if let Some(g) = gaps {
        env.terrain.n_gaps = g;
    }
}

/// Drops metrics rows written after the checkpoint being resumed.
fn truncate_metrics(path: &Path, keep: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let text = std::fs::read_to_string(path)?;
    let mut out = String::new();
    let mut rows = 0u64;
    for line in text.lines() {
        let is_data = !line.starts_with('#') && !line.starts_with("samples");
        if is_data {
            if rows == keep {
                break;
            }
            rows += 1;
        }
        out.push_str(line);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Trains per `cfg`; returns the final trainer.
pub fn cmd_train(cfg: &RunConfig, resume: bool, eval_after: bool, quiet: bool) -> Result<Trainer> {
    let out = cfg.output_dir();
    let ckpt_dir = out.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir)?;
    let mut snapshot = cfg.clone();
    snapshot.output_dir = None;
    std::fs::write(out.join("config.toml"), snapshot.to_toml())?;

    let metrics_path = out.join("metrics.csv");
    let latest = ckpt_dir.join("latest.bin");
    let mut trainer = if resume && latest.exists() {
        let mut t = Trainer::load(&latest)?;
        if t.cfg.total_samples != cfg.ppo.total_samples {
            t.cfg.total_samples = cfg.ppo.total_samples;
        }
        truncate_metrics(&metrics_path, t.batch)?;
        if !quiet {
            eprintln!("resuming at batch {} ({} samples)", t.batch, t.samples);
        }
        t
    } else {
        Trainer::new(cfg.env.clone(), cfg.ppo.clone(), cfg.seed, cfg.workers)?
    };
    let mut metrics = MetricsLog::open(&metrics_path, resume)?;
    let start = std::time::Instant::now();
    trainer.run(Some(&mut metrics), Some(&ckpt_dir), |s| {
        if !quiet {
            eprintln!(
                "batch {:>5} samples {:>9} return {:>8.3} success {:>6.3} kl {:.4} entropy {:.3} lr {:.2e} [{:.0}s]",
                s.batch,
                s.samples,
                s.mean_return,
                s.success_rate,
                s.kl,
                s.entropy,
                s.lr,
                start.elapsed().as_secs_f64()
            );
        }
    })?;
    if trainer.samples > 0 && !latest.exists() {
        trainer.save(&latest)?;
    }
    write_learning_curve(&metrics_path, &out.join("learning_curve.svg"))?;
    if eval_after {
        let r = cmd_eval(
            &trainer.policy(),
            &cfg.env,
            cfg.eval.n_rollouts,
            cfg.eval.seed,
            cfg.workers,
            &cfg.label,
            &out,
        )?;
        println!("{}", EvalReport::table(&[r]));
    }
    write_manifest(&out)?;
    Ok(trainer)
}

pub fn cmd_eval(
    policy: &TrainedPolicy,
    env: &EnvConfig,
    n: usize,
    seed: u64,
    workers: usize,
    label: &str,
    out: &Path,
) -> Result<EvalReport> {
    std::fs::create_dir_all(out)?;
    let r = evaluate(policy, env, n, seed, workers, label)?;
    EvalReport::write_csv(std::slice::from_ref(&r), &out.join("eval.csv"))?;
    r.write_records_csv(&out.join("rollouts.csv"))?;
    std::fs::write(out.join("eval.txt"), EvalReport::table(std::slice::from_ref(&r)))?;
    write_manifest(out)?;
    Ok(r)
}

/// Entries of a sweep: `(label, resolved config)`.
pub fn sweep_entries(kind: SweepKind, base: &RunConfig, only: &[u8]) -> Result<Vec<(String, RunConfig)>> {
    let ids: Vec<u8> = match kind {
        SweepKind::Actions => (1..=6).collect(),
        SweepKind::Observations => (1..=16).collect(),
    };
    let mut out = Vec::new();
    for id in ids.into_iter().filter(|i| only.is_empty() || only.contains(i)) {
        let mut c = base.clone();
        match kind {
            SweepKind::Actions => {
                let preset = ActionConfig::case(id)?;
                let a = &mut c.env.action;
                a.use_mu = preset.use_mu;
                a.use_omega = preset.use_omega;
                a.use_x_off = preset.use_x_off;
                a.use_z_off = preset.use_z_off;
                a.x_oscillation = preset.x_oscillation;
                if id == 1 {
                    c.env.terrain = TerrainConfig::flat();
                } else if c.env.terrain.mode == TerrainMode::Flat {
                    c.env.terrain = TerrainConfig::default();
                }
                c.label = format!("case{id}");
            }
            SweepKind::Observations => {
                c.env.observation = ObsConfig::combination(id)?;
                c.label = format!("obs{id:02}");
            }
        }
        out.push((c.label.clone(), c));
    }
    Ok(out)
}

pub fn cmd_sweep(kind: SweepKind, base: &RunConfig, only: &[u8], out: &Path, quiet: bool) -> Result<Vec<EvalReport>> {
    std::fs::create_dir_all(out)?;
    let mut reports = Vec::new();
    for (label, mut cfg) in sweep_entries(kind, base, only)? {
        cfg.output_dir = Some(out.join(&label));
        cfg.validate()?;
        if !quiet {
            eprintln!("== {label}");
        }
        let t = cmd_train(&cfg, true, false, quiet)?;
        let r = cmd_eval(
            &t.policy(),
            &cfg.env,
            cfg.eval.n_rollouts,
            cfg.eval.seed,
            cfg.workers,
            &label,
            cfg.output_dir.as_deref().unwrap(),
        )?;
        reports.push(r);
        EvalReport::write_csv(&reports, &out.join("sweep.csv"))?;
    }
    std::fs::write(out.join("sweep.txt"), EvalReport::table(&reports))?;
    write_sweep_svgs(&reports, out)?;
    write_manifest(out)?;
    Ok(reports)
}

fn write_sweep_svgs(reports: &[EvalReport], out: &Path) -> Result<()> {
    let bars = |f: &dyn Fn(&EvalReport) -> (f64, Option<f64>)| -> Vec<(String, f64, Option<f64>)> {
        reports
            .iter()
            .map(|r| {
                let (v, e) = f(r);
                (r.label.clone(), v, e)
            })
            .collect()
    };
    std::fs::write(
        out.join("success_rate.svg"),
        bar_chart_svg(
            "success rate",
            "%",
            &bars(&|r| (r.success_rate.unwrap_or(f64::NAN), None)),
        ),
    )?;
    std::fs::write(
        out.join("cot.svg"),
        bar_chart_svg(
            "cost of transport",
            "CoT",
            &bars(&|r| r.cot.as_ref().map_or((f64::NAN, None), |c| (c.mean, Some(c.std)))),
        ),
    )?;
    std::fs::write(
        out.join("froude.svg"),
        bar_chart_svg("Froude number", "Fr", &bars(&|r| (r.froude.mean, Some(r.froude.std)))),
    )?;
    std::fs::write(
        out.join("body_angular_velocity.svg"),
        bar_chart_svg(
            "mean body angular velocity",
            "rad/s",
            &bars(&|r| {
                (
                    r.mean_body_angular_velocity.mean,
                    Some(r.mean_body_angular_velocity.std),
                )
            }),
        ),
    )?;
    Ok(())
}

pub fn cmd_rollout(
    policy: &TrainedPolicy,
    env_cfg: &EnvConfig,
    seed: u64,
    record: bool,
    limb: usize,
    out: &Path,
) -> Result<()> {
    let mut env = crate::env::GapEnv::new(env_cfg.clone())?;
    let (rec, trace) = run_rollout(policy, &mut env, 0, seed, record)?;
    println!(
        "seed {seed}: distance {:.3} m in {:.2} s, gaps {}/{}, fell {}, return {:.3}",
        rec.distance, rec.duration, rec.crossed, rec.gaps, rec.fell, rec.total_reward
    );
    if let Some(trace) = trace {
        std::fs::create_dir_all(out)?;
        trace.write_csv(&out.join("trace.csv"))?;
        std::fs::write(
            out.join("rollout.svg"),
            rollout_svg(&trace, limb, &format!("rollout seed {seed}")),
        )?;
        write_manifest(out)?;
    }
    Ok(())
}

fn first_line(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path)?;
    Ok(text.lines().next().unwrap_or_default().trim().to_string())
}

fn csv_columns(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(err)?;
    let headers = rdr.headers().map_err(err)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for r in rdr.records() {
        rows.push(r.map_err(err)?.iter().map(String::from).collect());
    }
    Ok((headers, rows))
}

fn column(headers: &[String], rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let Some(i) = headers.iter().position(|h| h == name) else {
        return Vec::new();
    };
    rows.iter()
        .map(|r| r.get(i).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN))
        .collect()
}

fn write_learning_curve(metrics: &Path, svg: &Path) -> Result<()> {
    let (h, rows) = csv_columns(metrics)?;
    let x = column(&h, &rows, "samples");
    let panel = |name: &str, label: &str| Panel {
        title: name.replace('_', " "),
        y_label: label.into(),
        series: vec![Series::new(name, x.clone(), column(&h, &rows, name))],
        bands: Vec::new(),
    };
    let panels = [
        panel("mean_return", "return"),
        panel("success_rate", "fraction"),
        panel("kl", "KL"),
        panel("lr", "learning rate"),
    ];
    std::fs::write(svg, panels_svg("training", "samples", &panels))?;
    Ok(())
}

/// Renders an SVG for a trace, metrics or eval CSV; returns the written path.
pub fn cmd_plot(input: &Path, out: Option<&Path>) -> Result<PathBuf> {
    let dir = match out {
        Some(d) => d.to_path_buf(),
        None => input.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    std::fs::create_dir_all(&dir)?;
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
    let target = dir.join(format!("{stem}.svg"));
    let schema = first_line(input)?;
    if schema == TRACE_SCHEMA {
        let t = EpisodeTrace::read_csv(input)?;
        std::fs::write(&target, rollout_svg(&t, 1, stem))?;
    } else if schema == METRICS_SCHEMA {
        write_learning_curve(input, &target)?;
    } else if schema.starts_with("# schema: gapcross-eval/") {
        let (h, rows) = csv_columns(input)?;
        let labels: Vec<String> = rows.iter().map(|r| r[0].clone()).collect();
        let succ = column(&h, &rows, "success_rate");
        let bars: Vec<_> = labels.into_iter().zip(succ).map(|(l, v)| (l, v, None)).collect();
        std::fs::write(&target, bar_chart_svg("success rate", "%", &bars))?;
    } else {
        return Err(Error::Csv {
            path: input.to_path_buf(),
            reason: format!("unrecognised schema line {schema:?}"),
        });
    }
    Ok(target)
}

/// Writes `manifest.txt`: sha256 and relative path of every file under `dir`.
pub fn write_manifest(dir: &Path) -> Result<()> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    files.sort();
    let mut s = String::from("# sha256  path\n");
    for rel in files {
        if rel == Path::new("manifest.txt") {
            continue;
        }
        let bytes = std::fs::read(dir.join(&rel))?;
        s.push_str(&format!("{}  {}\n", hex::encode(Sha256::digest(&bytes)), rel.display()));
    }
    std::fs::write(dir.join("manifest.txt"), s)?;
    Ok(())
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else if let Ok(rel) = p.strip_prefix(root) {
            out.push(rel.to_path_buf());
        }
    }
    Ok(())
}
