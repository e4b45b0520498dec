use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use flowcritic::analysis::checks::{run_checks, ChecksConfig};
use flowcritic::analysis::toy::{GridRegion, ToyConfig, ToyExperiment};
use flowcritic::analysis::Verdict;
use flowcritic::rl::{run_bench, summarize_bench, CriticKind, IterationMetrics, TrainConfig, Trainer};
use serde::{Deserialize, Serialize};

use crate::config::{echo, layered, read_file};
use crate::{BenchArgs, ChecksArgs, Common, Hyper, Preset, ToyArgs, TrainArgs, EXIT_CHECK, EXIT_NUMERIC};

const DEFAULT_STEPS: u64 = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRun {
    pub preset: Preset,
    /// Environment transitions; rounded up to whole iterations.
    pub steps: u64,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchRunConfig {
    pub preset: Preset,
    pub steps: u64,
    /// Seeds run are `train.seed .. train.seed + seeds`.
    pub seeds: usize,
    pub critics: Vec<CriticKind>,
    pub train: TrainConfig,
}

fn preset_defaults(preset: Preset) -> TrainConfig {
    match preset {
        Preset::Desk => TrainConfig::desk(),
        Preset::Full => TrainConfig::default(),
    }
}

fn file_preset(file: &Option<serde_json::Value>) -> Result<Option<Preset>> {
    match file.as_ref().and_then(|f| f.get("preset")) {
        Some(v) => Ok(Some(serde_json::from_value(v.clone()).context("invalid preset")?)),
        None => Ok(None),
    }
}

fn apply_hyper(cfg: &mut TrainConfig, steps: &mut u64, h: &Hyper, seed: Option<u64>) {
    macro_rules! set {
        ($flag:expr => $field:expr) => {
            if let Some(v) = $flag.clone() {
                $field = v;
            }
        };
    }
    set!(h.env => cfg.env);
    set!(h.steps => *steps);
    set!(h.alpha => cfg.cov_temperature);
    set!(h.delta => cfg.velocity_clip);
    set!(h.n_samples => cfg.n_value_samples);
    set!(h.m_trunc => cfg.truncation);
    set!(h.num_envs => cfg.num_envs);
    set!(h.rollout_len => cfg.rollout_len);
    set!(h.epochs => cfg.epochs);
    set!(h.minibatches => cfg.minibatches);
    set!(h.lr => cfg.learning_rate);
    set!(h.gamma => cfg.gamma);
    set!(h.lambda => cfg.lambda);
    set!(h.clip => cfg.ppo_clip);
    set!(seed => cfg.seed);
}

fn run_dir(common: &Common, command: &str) -> PathBuf {
    common
        .run_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(command))
}

fn load(common: &Common) -> Result<Option<serde_json::Value>> {
    common.config.as_deref().map(read_file).transpose()
}

pub fn resolve_train(args: &TrainArgs) -> Result<TrainRun> {
    let file = load(&args.common)?;
    let preset = args.hyper.preset.or(file_preset(&file)?).unwrap_or(Preset::Desk);
    let defaults = TrainRun {
        preset,
        steps: DEFAULT_STEPS,
        train: preset_defaults(preset),
    };
    let mut run = layered(&defaults, file)?;
    run.preset = preset;
    apply_hyper(&mut run.train, &mut run.steps, &args.hyper, args.common.seed);
    if let Some(c) = args.critic {
        run.train.critic = c;
    }
    run.train.validate()?;
    Ok(run)
}

fn iterations(steps: u64, cfg: &TrainConfig) -> u64 {
    steps.div_ceil(cfg.batch_size() as u64).max(1)
}

fn write_metrics(out: &mut impl Write, m: &IterationMetrics) -> Result<()> {
    serde_json::to_writer(&mut *out, m)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<u8> {
    let run = resolve_train(&args)?;
    let dir = run_dir(&args.common, "train");
    echo(&dir, &run)?;
    let iters = iterations(run.steps, &run.train);
    let mut trainer = Trainer::new(run.train.clone())?;
    let mut metrics = BufWriter::new(File::create(dir.join("metrics.jsonl"))?);
    let mut status = 0;
    let mut last = None;
    for i in 0..iters {
        let m = trainer.train_iteration()?;
        write_metrics(&mut metrics, &m)?;
        if m.aborted {
            eprintln!("iteration {i}: numeric failure, stopping");
            status = EXIT_NUMERIC;
            break;
        }
        if (i + 1) % 10 == 0 || i + 1 == iters {
            eprintln!(
                "iteration {}/{iters} steps {} return {}",
                i + 1,
                m.env_steps,
                m.mean_return.map_or("-".to_string(), |r| format!("{r:.3}"))
            );
        }
        last = Some(m);
    }
    metrics.flush()?;
    trainer.checkpoint().save(dir.join("checkpoint.fckp"))?;
    if let Some(m) = last {
        println!(
            "{} on {}: {} steps, mean return {}",
            run.train.critic,
            run.train.env,
            m.env_steps,
            m.mean_return.map_or("n/a".to_string(), |r| format!("{r:.4}"))
        );
    }
    println!("artifacts in {}", dir.display());
    Ok(status)
}

pub fn resolve_toy(args: &ToyArgs) -> Result<ToyConfig> {
    let mut cfg = layered(&ToyConfig::default(), load(&args.common)?)?;
    if let Some(v) = args.common.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.samples {
        cfg.train_samples = v;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.n_samples {
        cfg.n_value_samples = v;
    }
    if let Some(v) = args.m_trunc {
        cfg.truncation = v;
    }
    if let Some(v) = args.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.delta {
        cfg.velocity_clip = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

fn write_file(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write(&mut out)?;
    out.flush()?;
    Ok(())
}

pub fn toy(args: ToyArgs) -> Result<u8> {
    let cfg = resolve_toy(&args)?;
    let dir = run_dir(&args.common, "toy");
    echo(&dir, &cfg)?;
    let mut exp = ToyExperiment::new(cfg)?;
    exp.train(|epoch, l| {
        eprintln!(
            "epoch {}: point loss {:.4}, flow loss {:.4}",
            epoch + 1,
            l.point_loss,
            l.flow_loss
        )
    })?;
    let maps = exp.evaluate()?;
    write_file(&dir.join("error_point.csv"), |o| {
        Ok(maps.write_csv(o, "err_point", |c| c.err_point())?)
    })?;
    write_file(&dir.join("error_flow.csv"), |o| {
        Ok(maps.write_csv(o, "err_flow", |c| c.err_flow())?)
    })?;
    write_file(&dir.join("cov_flow.csv"), |o| Ok(maps.write_csv(o, "cov", |c| c.cov)?))?;
    write_file(&dir.join("grid.csv"), |o| Ok(maps.write_grid_csv(o)?))?;

    let disk = maps.region(GridRegion::Disk);
    let ring = maps.region(GridRegion::TrainRing);
    let inside = maps.region(GridRegion::Train);
    let outside = maps.region(GridRegion::Outside);
    let thresholds = [
        ("point_disk_max_error_above_0.15", disk.max_err_point > 0.15),
        (
            "flow_disk_mean_error_below_point",
            disk.mean_err_flow < disk.mean_err_point,
        ),
        ("cov_disk_above_ring", disk.mean_cov > ring.mean_cov),
        ("cov_outside_above_train", outside.mean_cov > inside.mean_cov),
    ];
    let mut summary = maps.summary();
    for (name, ok) in thresholds {
        summary.push_str(&format!("threshold.{name} = {}\n", pass(ok)));
    }
    fs::write(dir.join("summary.txt"), &summary)?;

    println!("region       mean|err| point  max|err| point  mean|err| flow  mean cov");
    for r in [disk, ring, inside, outside] {
        println!(
            "{:<12} {:>15.4} {:>15.4} {:>15.4} {:>9.3}",
            r.region.name(),
            r.mean_err_point,
            r.max_err_point,
            r.mean_err_flow,
            r.mean_cov
        );
    }
    for (name, ok) in thresholds {
        println!("{:<36} {}", name, pass(ok).to_uppercase());
    }
    println!("artifacts in {}", dir.display());
    Ok(0)
}

pub fn resolve_checks(args: &ChecksArgs) -> Result<ChecksConfig> {
    let mut cfg = layered(&ChecksConfig::default(), load(&args.common)?)?;
    if let Some(v) = args.common.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = args.eps_max {
        cfg.eps_max = v;
    }
    if let Some(v) = args.trials {
        cfg.trials = v;
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    anyhow::ensure!((0.0..1.0).contains(&cfg.gamma), "gamma must be in [0, 1)");
    anyhow::ensure!(cfg.eps_max >= 0.0, "eps_max must be non-negative");
    anyhow::ensure!(cfg.trials >= 2, "trials must be at least 2");
    Ok(cfg)
}

pub fn checks(args: ChecksArgs) -> Result<u8> {
    let cfg = resolve_checks(&args)?;
    let dir = run_dir(&args.common, "checks");
    echo(&dir, &cfg)?;
    let results = run_checks(&cfg)?;
    let mut table = String::new();
    for r in &results {
        table.push_str(&format!("{r}\n"));
    }
    print!("{table}");
    fs::write(dir.join("checks.txt"), &table)?;
    let failed = results.iter().filter(|r| r.verdict == Verdict::Fail).count();
    if failed > 0 {
        eprintln!("{failed} check(s) failed");
        return Ok(EXIT_CHECK);
    }
    Ok(0)
}

pub fn resolve_bench(args: &BenchArgs) -> Result<BenchRunConfig> {
    let file = load(&args.common)?;
    let preset = args.hyper.preset.or(file_preset(&file)?).unwrap_or(Preset::Desk);
    let defaults = BenchRunConfig {
        preset,
        steps: DEFAULT_STEPS,
        seeds: 3,
        critics: CriticKind::ALL.to_vec(),
        train: preset_defaults(preset),
    };
    let mut run = layered(&defaults, file)?;
    run.preset = preset;
    apply_hyper(&mut run.train, &mut run.steps, &args.hyper, args.common.seed);
    if let Some(s) = args.seeds {
        run.seeds = s;
    }
    if let Some(c) = &args.critics {
        run.critics = c.clone();
    }
    anyhow::ensure!(run.seeds > 0, "need at least one seed");
    anyhow::ensure!(!run.critics.is_empty(), "need at least one critic");
    run.train.validate()?;
    Ok(run)
}

pub fn bench(args: BenchArgs) -> Result<u8> {
    let run = resolve_bench(&args)?;
    let dir = run_dir(&args.common, "bench");
    echo(&dir, &run)?;
    let iters = iterations(run.steps, &run.train) as usize;
    let seeds: Vec<u64> = (0..run.seeds as u64).map(|i| run.train.seed + i).collect();
    let runs = run_bench(&run.train, &run.critics, &seeds, iters, |critic, seed, m| {
        if (m.iteration + 1) as usize == iters {
            eprintln!("{critic} seed {seed}: done, return {:?}", m.mean_return);
        }
    })?;
    let mut aborted = false;
    for r in &runs {
        let run_path = dir.join(r.critic.name()).join(format!("seed{}", r.seed));
        fs::create_dir_all(&run_path)?;
        write_file(&run_path.join("metrics.jsonl"), |o| {
            for m in &r.metrics {
                write_metrics(o, m)?;
            }
            Ok(())
        })?;
        aborted |= r.metrics.iter().any(|m| m.aborted);
    }
    let rows = summarize_bench(&runs);
    let mut table = format!(
        "env {} | {} seeds | {} steps per run\n",
        run.train.env,
        run.seeds,
        iters * run.train.batch_size()
    );
    table.push_str("critic         runs   final-10% return (mean ± std)\n");
    for row in &rows {
        table.push_str(&format!(
            "{:<14} {:>4}   {:.4} ± {:.4}\n",
            row.critic.name(),
            row.runs,
            row.mean,
            row.std
        ));
    }
    print!("{table}");
    fs::write(dir.join("summary.txt"), &table)?;
    let json: Vec<_> = rows
        .iter()
        .map(|r| {
            serde_json::json!({
                "critic": r.critic,
                "runs": r.runs,
                "mean": r.mean,
                "std": r.std,
                "final_returns": r.final_returns,
            })
        })
        .collect();
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&json)?)?;
    Ok(if aborted { EXIT_NUMERIC } else { 0 })
}
