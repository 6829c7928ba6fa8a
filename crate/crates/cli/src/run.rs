use std::path::{Path, PathBuf};
use std::thread;

use anyhow::{bail, Context, Result};
use mppac::learn::{
    on_demand_bvi, BoundsReport, ClockKind, LearnerConfig, MecBoundsMethod, PrecisionMode, StopReason,
    UpdateStyle,
};
use mppac::model::{ExplicitModel, InfoLevel, SampleOracle};
use mppac::whitebox::{exact_mean_payoff, DEFAULT_BETA};

use crate::svg;
use crate::{ClockArg, Mode, RunArgs};

/// Parses `A..B` (inclusive) or `a,b,c`.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = spec.split_once("..") {
        let a: u64 = a.trim().parse().with_context(|| format!("bad seed range {spec:?}"))?;
        let b: u64 = b
            .trim()
            .trim_start_matches('=')
            .parse()
            .with_context(|| format!("bad seed range {spec:?}"))?;
        if b < a {
            bail!("empty seed range {spec:?}");
        }
        return Ok((a..=b).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse().with_context(|| format!("bad seed {s:?}")))
        .collect()
}

fn seeds(args: &RunArgs) -> Result<Vec<u64>> {
    let list = match &args.seeds {
        Some(spec) => parse_seeds(spec)?,
        None => (0..args.repeat.max(1) as u64).map(|i| args.seed + i).collect(),
    };
    if args.repeat > 1 && list.len() != args.repeat {
        bail!("--repeat {} but {} seeds given", args.repeat, list.len());
    }
    Ok(list)
}

pub fn config(args: &RunArgs, seed: u64) -> LearnerConfig {
    LearnerConfig {
        epsilon_mp: args.epsilon,
        delta_mp: args.delta,
        revisit_threshold: args.revisit_threshold,
        episodes_per_round: args.episodes_per_round,
        precision: if args.absolute {
            PrecisionMode::Absolute
        } else {
            PrecisionMode::Relative
        },
        timeout_s: Some(args.timeout_s),
        seed,
        update_style: match args.mode {
            Mode::Blackbox => UpdateStyle::Blackbox,
            Mode::BlackboxGreyUpdates => UpdateStyle::GreyboxEquations,
            Mode::Greybox => UpdateStyle::GreyboxWhenComplete,
        },
        anytime: args.anytime,
        max_rounds: args.max_rounds,
        max_steps: args.max_steps,
        mec_bounds: if args.exact_mec_bounds {
            MecBoundsMethod::Exact
        } else {
            MecBoundsMethod::Heuristic
        },
        clock: match args.clock {
            ClockArg::Wall => ClockKind::Wall,
            ClockArg::Virtual => ClockKind::Virtual,
        },
        ..LearnerConfig::default()
    }
}

fn info_level(mode: Mode) -> InfoLevel {
    match mode {
        Mode::Greybox => InfoLevel::Greybox,
        Mode::Blackbox | Mode::BlackboxGreyUpdates => InfoLevel::Blackbox,
    }
}

/// `dir/stem-seed<N>.ext` for repeated runs, `path` otherwise.
fn per_run_path(path: &Path, seed: u64, repeated: bool) -> PathBuf {
    if !repeated {
        return path.to_path_buf();
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}-seed{seed}.{ext}"),
        None => format!("{stem}-seed{seed}"),
    };
    path.with_file_name(name)
}

pub fn write_csv(path: &Path, report: &BoundsReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["time_s", "episodes", "lower", "upper"])?;
    for row in &report.trace {
        w.write_record([
            row.time_s.to_string(),
            row.episodes.to_string(),
            row.lower.to_string(),
            row.upper.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn stop_name(s: StopReason) -> &'static str {
    match s {
        StopReason::Converged => "converged",
        StopReason::Timeout => "timeout",
        StopReason::RoundLimit => "round limit",
        StopReason::StepLimit => "step limit",
    }
}

fn describe(seed: u64, r: &BoundsReport) -> String {
    format!(
        "seed {seed}: interval [{:.6}, {:.6}] width {:.6} inconfidence {} ({} after {} rounds, {} episodes, {} steps)",
        r.lower,
        r.upper,
        r.width(),
        r.certified_inconfidence,
        stop_name(r.stop),
        r.rounds,
        r.episodes,
        r.steps
    )
}

pub fn run(args: &RunArgs, model: &ExplicitModel) -> Result<()> {
    let seeds = seeds(args)?;
    let repeated = seeds.len() > 1;
    let info = info_level(args.mode);
    let results: Vec<(u64, Result<BoundsReport>)> = thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let cfg = config(args, seed);
                scope.spawn(move || {
                    let mut oracle = SampleOracle::new(model, info, seed);
                    (seed, on_demand_bvi(&mut oracle, &cfg).map_err(anyhow::Error::from))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("learner thread panicked"))
            .collect()
    });

    let mut reports = Vec::with_capacity(results.len());
    for (seed, res) in results {
        let report = res.with_context(|| format!("run with seed {seed}"))?;
        if let Some(p) = &args.csv {
            write_csv(&per_run_path(p, seed, repeated), &report)?;
        }
        if let Some(p) = &args.svg {
            let path = per_run_path(p, seed, repeated);
            std::fs::write(&path, svg::convergence_plot(&report.trace, report.r_max))
                .with_context(|| format!("writing {}", path.display()))?;
        }
        println!("{}", describe(seed, &report));
        reports.push(report);
    }
    if repeated {
        let value = exact_mean_payoff(model, DEFAULT_BETA)?;
        let covered = reports.iter().filter(|r| r.contains(value)).count();
        println!("coverage {covered}/{} runs contain the exact value {value:.6}", reports.len());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_specs() {
        assert_eq!(parse_seeds("1..4").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_seeds("1..=2").unwrap(), vec![1, 2]);
        assert_eq!(parse_seeds("7, 9").unwrap(), vec![7, 9]);
        assert!(parse_seeds("4..1").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn repeated_runs_get_distinct_files() {
        let p = Path::new("/tmp/out/trace.csv");
        assert_eq!(per_run_path(p, 3, false), p);
        assert_eq!(per_run_path(p, 3, true), Path::new("/tmp/out/trace-seed3.csv"));
    }
}
