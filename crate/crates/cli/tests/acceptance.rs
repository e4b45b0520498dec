//! End-to-end acceptance run: one PASS/FAIL line per criterion, nonzero exit
//! if any fails. Takes several minutes on one core. Select a subset with
//! `ACCEPTANCE=1,7,10`.

mod support;

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use flowcritic::analysis::checks::{run_checks, CheckResult, ChecksConfig};
use flowcritic::analysis::toy::{GridRegion, ToyConfig, ToyExperiment};
use flowcritic::analysis::{fit_bimodal_flow, BimodalFitConfig, Verdict};
use flowcritic::envs::EnvKind;
use flowcritic::rl::{run_bench, summarize_bench, CriticKind, TrainConfig};
use support::reference_ppo::first_divergence;

const SEEDS: u64 = 5;
const REQUIRED_SEEDS: usize = 4;
const TOY_THRESHOLD: f64 = 0.15;
const BIMODAL_W1: f64 = 0.15;
const BENCH_STEPS: u64 = 200_000;
const PPO_ITERATIONS: usize = 5;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: u32, title: &str, started: Instant, o: Outcome) -> bool {
    println!(
        "criterion {id:>2} {} {title}: {} [{:.0}s]",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        started.elapsed().as_secs_f64()
    );
    o.pass
}

fn toy_criteria() -> (Outcome, Outcome) {
    let mut errors = Vec::new();
    let mut covs = Vec::new();
    for seed in 0..SEEDS {
        let mut exp = ToyExperiment::new(ToyConfig {
            seed,
            ..ToyConfig::default()
        })
        .unwrap();
        exp.train(|_, _| {}).unwrap();
        let maps = exp.evaluate().unwrap();
        let disk = maps.region(GridRegion::Disk);
        let ring = maps.region(GridRegion::TrainRing);
        let train = maps.region(GridRegion::Train);
        let outside = maps.region(GridRegion::Outside);
        let ok = disk.max_err_point > TOY_THRESHOLD && disk.mean_err_flow < disk.mean_err_point;
        errors.push((
            ok,
            format!(
                "seed {seed}: point max {:.3} mean {:.3}, flow mean {:.3}",
                disk.max_err_point, disk.mean_err_point, disk.mean_err_flow
            ),
        ));
        let ok = disk.mean_cov > ring.mean_cov && outside.mean_cov > train.mean_cov;
        covs.push((
            ok,
            format!(
                "seed {seed}: disk {:.2} ring {:.2}, outside {:.2} train {:.2}",
                disk.mean_cov, ring.mean_cov, outside.mean_cov, train.mean_cov
            ),
        ));
    }
    let summarize = |rows: Vec<(bool, String)>| {
        let passed = rows.iter().filter(|r| r.0).count();
        let detail: Vec<String> = rows.into_iter().map(|r| r.1).collect();
        Outcome {
            pass: passed >= REQUIRED_SEEDS,
            detail: format!("{passed}/{SEEDS} seeds ({})", detail.join("; ")),
        }
    };
    (summarize(errors), summarize(covs))
}

fn checks_outcome(results: &[CheckResult], names: &[&str]) -> Outcome {
    let picked: Vec<&CheckResult> = names
        .iter()
        .map(|n| results.iter().find(|r| r.name == *n).expect("check present"))
        .collect();
    Outcome {
        pass: picked.iter().all(|r| r.verdict == Verdict::Pass),
        detail: picked
            .iter()
            .map(|r| r.to_string().split_whitespace().collect::<Vec<_>>().join(" "))
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn ppo_reduction() -> Outcome {
    let cfg = TrainConfig {
        critic: CriticKind::Point,
        cov_temperature: 0.0,
        ..TrainConfig::desk()
    };
    match first_divergence(cfg, PPO_ITERATIONS) {
        None => Outcome {
            pass: true,
            detail: format!("{PPO_ITERATIONS} iterations bit-identical to the reference PPO"),
        },
        Some((it, why)) => Outcome {
            pass: false,
            detail: format!("diverged at iteration {it}: {}", why.replace('\n', " | ")),
        },
    }
}

fn bimodal() -> Outcome {
    let fit = fit_bimodal_flow(&BimodalFitConfig::default()).unwrap();
    let w1 = fit.final_w1();
    Outcome {
        pass: w1 < BIMODAL_W1,
        detail: format!("W1 {:.4} (start {:.4})", w1, fit.history[0].1),
    }
}

fn desk_benefit() -> Outcome {
    let base = TrainConfig {
        env: EnvKind::PointMass,
        ..TrainConfig::desk()
    };
    let iterations = BENCH_STEPS.div_ceil(base.batch_size() as u64) as usize;
    let seeds: Vec<u64> = (0..SEEDS).collect();
    let runs = run_bench(
        &base,
        &[CriticKind::Point, CriticKind::Flow],
        &seeds,
        iterations,
        |_, _, _| {},
    )
    .unwrap();
    let rows = summarize_bench(&runs);
    let row = |k| rows.iter().find(|r| r.critic == k).unwrap();
    let (point, flow) = (row(CriticKind::Point), row(CriticKind::Flow));
    let pooled = ((point.std.powi(2) + flow.std.powi(2)) / 2.0).sqrt();
    Outcome {
        pass: flow.mean >= point.mean - pooled,
        detail: format!(
            "flow {:.2} ± {:.2}, point {:.2} ± {:.2}, pooled std {:.2} ({} steps, {} seeds)",
            flow.mean,
            flow.std,
            point.mean,
            point.std,
            pooled,
            iterations * base.batch_size(),
            SEEDS
        ),
    }
}

fn run_cli(args: &[&str], dir: &Path) {
    let out = Command::new(env!("CARGO_BIN_EXE_flowcritic"))
        .args(args)
        .arg("--run-dir")
        .arg(dir)
        .env_remove("FLOWCRITIC_RUN_DIR")
        .output()
        .expect("spawn flowcritic");
    assert!(
        matches!(out.status.code(), Some(0) | Some(3)),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let cases: [(&str, &[&str], &[&str]); 4] = [
        (
            "train",
            &["train", "--critic", "flow", "--seed", "7", "--steps", "4096"],
            &["metrics.jsonl", "checkpoint.fckp"],
        ),
        (
            "toy",
            &["toy", "--seed", "2", "--samples", "20000", "--epochs", "1"],
            &["error_point.csv", "error_flow.csv", "cov_flow.csv", "summary.txt"],
        ),
        (
            "checks",
            &["checks", "--seed", "3", "--trials", "2000"],
            &["checks.txt"],
        ),
        (
            "bench",
            &["bench", "--seeds", "2", "--steps", "2048"],
            &[
                "summary.txt",
                "flow/seed1/metrics.jsonl",
                "quantile/seed0/metrics.jsonl",
            ],
        ),
    ];
    let mut differing = Vec::new();
    for (name, args, files) in cases {
        let a = tmp.path().join(format!("{name}_a"));
        let b = tmp.path().join(format!("{name}_b"));
        run_cli(args, &a);
        run_cli(args, &b);
        for f in files {
            if fs::read(a.join(f)).unwrap() != fs::read(b.join(f)).unwrap() {
                differing.push(format!("{name}/{f}"));
            }
        }
    }
    Outcome {
        pass: differing.is_empty(),
        detail: if differing.is_empty() {
            "train, toy, checks and bench outputs byte-identical across reruns".into()
        } else {
            format!("differing files: {}", differing.join(", "))
        },
    }
}

fn main() {
    let selected: Option<Vec<u32>> = std::env::var("ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wants = |id: u32| selected.as_ref().is_none_or(|s| s.contains(&id));
    let mut all = true;

    if wants(1) || wants(2) {
        let t = Instant::now();
        let (errors, covs) = toy_criteria();
        if wants(1) {
            all &= report(1, "toy error", t, errors);
        }
        if wants(2) {
            all &= report(2, "toy CoV structure", t, covs);
        }
    }
    if (3..=6).any(wants) {
        let t = Instant::now();
        let results = run_checks(&ChecksConfig::default()).unwrap();
        let groups: [(u32, &str, &[&str]); 4] = [
            (3, "Bellman contraction", &["bellman_contraction"]),
            (4, "convergence bound", &["convergence_bound", "convergence_rate"]),
            (
                5,
                "Wasserstein metric properties",
                &["w1_shift_invariance", "w1_homogeneity", "w1_triangle"],
            ),
            (6, "variance reduction", &["phi_slope_sign", "variance_reduction"]),
        ];
        for (id, title, names) in groups {
            if wants(id) {
                all &= report(id, title, t, checks_outcome(&results, names));
            }
        }
    }
    let rest: [(u32, &str, fn() -> Outcome); 4] = [
        (7, "PPO reduction", ppo_reduction),
        (8, "bimodal flow fit", bimodal),
        (9, "desk-scale benefit", desk_benefit),
        (10, "determinism", determinism),
    ];
    for (id, title, f) in rest {
        if wants(id) {
            let t = Instant::now();
            all &= report(id, title, t, f());
        }
    }
    if !all {
        std::process::exit(1);
    }
}
