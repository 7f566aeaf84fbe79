//! `pjs`: the patchwise joint-sparse tracker CLI.
//!
//! Three subcommands: `track` runs the tracker over sequences (one run per
//! seed), `eval` aggregates run CSVs into accuracy reports and SVG plots,
//! and `synth` generates synthetic test sequences. `PJS_THREADS` caps the
//! candidate-evaluation worker count; results are identical for any value.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pjs::eval::{
    aggregate_runs, parse_run_csv, report_csv, success_curve_csv, svg_line_plot, RunReport,
    Sequence,
};
use pjs::synth::{SynthKind, SynthSpec};
use pjs::tracker::{results_to_csv, Tracker};
use pjs::{SolverKind, TrackerConfig};

#[derive(Parser)]
#[command(name = "pjs", version, about = "Patchwise joint-sparse visual tracker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the tracker over sequences, one run per seed
    Track(TrackArgs),
    /// Aggregate run CSVs against ground truth into reports and plots
    Eval(EvalArgs),
    /// Generate a synthetic sequence (frames + ground truth)
    Synth(SynthArgs),
}

#[derive(Args)]
struct TrackArgs {
    /// Sequence directory (repeatable)
    #[arg(long = "seq", required = true)]
    seq: Vec<PathBuf>,
    /// Output directory for run CSVs
    #[arg(long)]
    out: PathBuf,
    /// JSON config file with flat tracker keys; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seeds: inclusive range `a..b`, a single seed, or a comma list
    #[arg(long, default_value = "0..9")]
    seeds: String,
    /// Solver override: pjs-s (greedy) or pjs-m (convex)
    #[arg(long)]
    solver: Option<SolverKindArg>,
    /// Dump per-frame dictionary snapshots next to each run CSV
    #[arg(long)]
    dump_dict: bool,
}

#[derive(Clone)]
struct SolverKindArg(SolverKind);

impl std::str::FromStr for SolverKindArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        s.parse().map(SolverKindArg).map_err(|e| e.to_string())
    }
}

#[derive(Args)]
struct EvalArgs {
    /// Directory containing `seed*.csv` run files
    #[arg(long)]
    runs: PathBuf,
    /// Sequence directory providing the ground truth
    #[arg(long)]
    seq: PathBuf,
    /// Output directory for reports (defaults to the runs directory)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overlap threshold for the headline success rate
    #[arg(long, default_value_t = 0.6)]
    threshold: f64,
}

#[derive(Args)]
struct SynthArgs {
    /// Sequence kind: static, translate, or occlude
    #[arg(long)]
    kind: String,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    frames: usize,
    /// Horizontal speed in pixels per frame
    #[arg(long, default_value_t = 2.0)]
    speed: f64,
    /// Texture seed
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    configure_threads()?;
    match Cli::parse().command {
        Command::Track(args) => cmd_track(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Synth(args) => cmd_synth(args),
    }
}

/// `PJS_THREADS` caps the rayon pool used for candidate evaluation.
fn configure_threads() -> Result<()> {
    if let Ok(value) = std::env::var("PJS_THREADS") {
        let threads: usize = value
            .parse()
            .with_context(|| format!("PJS_THREADS must be a positive integer, got '{value}'"))?;
        if threads == 0 {
            bail!("PJS_THREADS must be >= 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("rayon pool already initialized")?;
    }
    Ok(())
}

/// Parses `a..b` (inclusive), `a`, or a comma list of those.
fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.trim().parse().context("bad seed range start")?;
            let b: u64 = b.trim().parse().context("bad seed range end")?;
            if a > b {
                bail!("seed range {a}..{b} is empty");
            }
            seeds.extend(a..=b);
        } else {
            seeds.push(part.parse().context("bad seed")?);
        }
    }
    if seeds.is_empty() {
        bail!("empty seed list");
    }
    Ok(seeds)
}

fn load_config(args: &TrackArgs) -> Result<TrackerConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            TrackerConfig::from_json(&text)?
        }
        None => TrackerConfig::default(),
    };
    if let Some(SolverKindArg(kind)) = args.solver {
        config.solver = kind;
    }
    config.validate()?;
    Ok(config)
}

fn cmd_track(args: TrackArgs) -> Result<()> {
    let config = load_config(&args)?;
    let seeds = parse_seeds(&args.seeds)?;
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("config.json"), config.to_json())?;

    let mut failures = 0usize;
    for seq_dir in &args.seq {
        let sequence = Sequence::load(seq_dir)?;
        let seq_out = args.out.join(&sequence.name);
        fs::create_dir_all(&seq_out)?;
        for &seed in &seeds {
            let started = Instant::now();
            let mut run_config = config.clone();
            run_config.seed = seed;
            match run_one(&sequence, &run_config, args.dump_dict, &seq_out, seed) {
                Ok(frames) => {
                    eprintln!(
                        "track {} seed {seed}: {frames} frames in {:.1}s",
                        sequence.name,
                        started.elapsed().as_secs_f64()
                    );
                }
                Err(err) => {
                    failures += 1;
                    let path = seq_out.join(format!("seed{seed:02}.error.txt"));
                    fs::write(&path, format!("{err:#}\n"))?;
                    eprintln!("track {} seed {seed}: FAILED ({err:#})", sequence.name);
                }
            }
        }
    }
    if failures > 0 {
        eprintln!("{failures} run(s) failed; see the error files");
    }
    Ok(())
}

fn run_one(
    sequence: &Sequence,
    config: &TrackerConfig,
    dump_dict: bool,
    seq_out: &Path,
    seed: u64,
) -> Result<usize> {
    let dict_dir = seq_out.join(format!("seed{seed:02}.dict"));
    if dump_dict {
        fs::create_dir_all(&dict_dir)?;
    }
    let first = sequence.load_frame(0)?;
    let (mut tracker, first_result) =
        Tracker::init(&first, &sequence.ground_truth[0], config.clone())?;
    let mut results = vec![first_result];
    let snapshot = |tracker: &Tracker, frame: usize| -> Result<()> {
        if dump_dict {
            let mut buf = Vec::new();
            tracker.dictionary().write_snapshot(&mut buf)?;
            fs::write(dict_dir.join(format!("frame{frame:04}.txt")), buf)?;
        }
        Ok(())
    };
    snapshot(&tracker, 0)?;
    for index in 1..sequence.len() {
        let frame = sequence.load_frame(index)?;
        results.push(tracker.track_frame(&frame)?);
        snapshot(&tracker, index)?;
    }
    fs::write(
        seq_out.join(format!("seed{seed:02}.csv")),
        results_to_csv(&results),
    )?;
    Ok(results.len())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let sequence = Sequence::load(&args.seq)?;
    let mut run_files: Vec<PathBuf> = fs::read_dir(&args.runs)
        .with_context(|| format!("reading runs dir {}", args.runs.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("seed") && n.ends_with(".csv"))
                .unwrap_or(false)
        })
        .collect();
    run_files.sort();
    if run_files.is_empty() {
        bail!("no seed*.csv run files in {}", args.runs.display());
    }

    let mut reports = Vec::new();
    for path in &run_files {
        let text = fs::read_to_string(path)?;
        let rows = parse_run_csv(&text)?;
        if rows.len() != sequence.ground_truth.len() {
            bail!(
                "{}: {} rows but ground truth has {} boxes",
                path.display(),
                rows.len(),
                sequence.ground_truth.len()
            );
        }
        let boxes: Vec<_> = rows.iter().map(|(_, rect, _)| *rect).collect();
        reports.push(RunReport::from_boxes(
            &boxes,
            &sequence.ground_truth,
            args.threshold,
            101,
        )?);
    }
    let aggregate = aggregate_runs(&reports)?;

    let out_dir = args.out.clone().unwrap_or_else(|| args.runs.clone());
    fs::create_dir_all(&out_dir)?;
    fs::write(out_dir.join("report.csv"), report_csv(&aggregate))?;
    fs::write(
        out_dir.join("success_curve.csv"),
        success_curve_csv(&aggregate),
    )?;
    write_plots(&out_dir, &aggregate)?;

    println!("runs: {}", reports.len());
    println!("mean_cle: {:.4}", aggregate.mean_cle);
    println!("mean_overlap: {:.4}", aggregate.mean_overlap);
    println!(
        "sr@{:.2}: {:.4}",
        aggregate.success_threshold, aggregate.success_rate
    );
    Ok(())
}

fn write_plots(out_dir: &Path, aggregate: &RunReport) -> Result<()> {
    let frames: Vec<(f64, f64)> = aggregate
        .cle
        .iter()
        .enumerate()
        .map(|(i, &v)| (i as f64, v))
        .collect();
    fs::write(
        out_dir.join("cle.svg"),
        svg_line_plot(
            "Center location error vs frame",
            "frame",
            "CLE (px)",
            &[("cle".to_string(), frames)],
        ),
    )?;
    let overlaps: Vec<(f64, f64)> = aggregate
        .overlap
        .iter()
        .enumerate()
        .map(|(i, &v)| (i as f64, v))
        .collect();
    fs::write(
        out_dir.join("overlap.svg"),
        svg_line_plot(
            "Overlap vs frame",
            "frame",
            "VOC overlap",
            &[("overlap".to_string(), overlaps)],
        ),
    )?;
    fs::write(
        out_dir.join("success.svg"),
        svg_line_plot(
            "Success plot",
            "overlap threshold",
            "success rate",
            &[("success".to_string(), aggregate.success_curve.clone())],
        ),
    )?;
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let kind: SynthKind = args.kind.parse()?;
    let spec = SynthSpec {
        kind,
        frames: args.frames,
        speed: args.speed,
        texture_seed: args.seed,
        ..SynthSpec::default()
    };
    pjs::synth::write_sequence(&spec, &args.out)
        .with_context(|| format!("writing sequence to {}", args.out.display()))?;
    eprintln!(
        "synth {}: {} frames under {}",
        args.kind,
        args.frames,
        args.out.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_specs_parse() {
        assert_eq!(parse_seeds("0..9").unwrap(), (0..=9).collect::<Vec<_>>());
        assert_eq!(parse_seeds("5").unwrap(), vec![5]);
        assert_eq!(parse_seeds("1,3,7..8").unwrap(), vec![1, 3, 7, 8]);
        assert!(parse_seeds("").is_err());
        assert!(parse_seeds("9..3").is_err());
        assert!(parse_seeds("x").is_err());
    }
}
