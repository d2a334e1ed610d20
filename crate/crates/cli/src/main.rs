mod manifest;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use trackfuse::ablation::run_ablation;
use trackfuse::appearance::FeatureStrategy;
use trackfuse::fusion::fuse;
use trackfuse::geometry::CoordinateMode;
use trackfuse::io::{load_run, load_scenario, read_timeline_csv, read_toml, write_tracks_csv, RunConfig};
use trackfuse::metrics::{evaluate, EvalReport, MatchingParams};
use trackfuse::simulator::{export_scenario, simulate, ExportPaths};

use manifest::{commented, write_atomic, RunManifest};

#[derive(Parser)]
#[command(name = "trackfuse", version, about = "Multi-camera track fusion on a shared floor plane")]
struct Cli {
    /// Suppress the summary printed on success.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario and export tracklets, ground truth and a run file.
    Simulate(SimulateArgs),
    /// Fuse per-camera tracklets listed in a run file into global tracks.
    Fuse(FuseArgs),
    /// Score predicted tracks against ground truth.
    Eval(EvalArgs),
    /// Run all six anchor/appearance conditions over several seeds.
    Ablation(AblationArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario TOML.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides `world.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FuseArgs {
    /// Run TOML as written by `simulate`.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    coordinate_mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    features: Option<FeaturesArg>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Run TOML whose `[metrics]` table sets the matching parameters.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct AblationArgs {
    /// Scenario TOML; its `[fusion]` table supplies the thresholds.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated seeds or inclusive ranges, e.g. `1-10` or `3,7,9`.
    /// Defaults to the scenario's own seed.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<SeedList>,
}

#[derive(Clone, Debug)]
struct SeedList(Vec<u64>);

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    BboxCenter,
    Foot,
}

impl From<ModeArg> for CoordinateMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::BboxCenter => CoordinateMode::BboxCenter,
            ModeArg::Foot => CoordinateMode::Foot,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FeaturesArg {
    None,
    Mean,
    PdAware,
}

impl From<FeaturesArg> for FeatureStrategy {
    fn from(f: FeaturesArg) -> Self {
        match f {
            FeaturesArg::None => FeatureStrategy::None,
            FeaturesArg::Mean => FeatureStrategy::SimpleAveraging,
            FeaturesArg::PdAware => FeatureStrategy::PositionDirectionAware,
        }
    }
}

fn parse_seeds(s: &str) -> Result<SeedList, String> {
    let mut seeds = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |t: &str| t.trim().parse::<u64>().map_err(|_| format!("invalid seed `{t}`"));
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if a > b {
                    return Err(format!("empty seed range `{part}`"));
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(num(part)?),
        }
    }
    if seeds.is_empty() {
        return Err("at least one seed is required".into());
    }
    Ok(SeedList(seeds))
}

fn create_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn cmd_simulate(args: &SimulateArgs, quiet: bool) -> Result<()> {
    let mut scenario = load_scenario(&args.config)?;
    if let Some(seed) = args.seed {
        scenario = scenario.with_seed(seed);
    }
    let mut manifest = RunManifest::new("simulate", Some(&args.config))?;
    manifest.seeds = vec![scenario.world.seed];
    manifest.outputs.push("gt.csv".into());
    for cam in &scenario.cameras {
        manifest.outputs.push(format!("cam{}_tracklets.csv", cam.camera_id));
        if scenario.noise.feature_dim > 0 {
            manifest.outputs.push(format!("cam{}_features.csv", cam.camera_id));
        }
    }
    manifest.outputs.push("run.toml".into());

    let sim = simulate(&scenario)?;
    create_dir(&args.out)?;
    let written = export_scenario(&scenario, &sim, &ExportPaths::new(&args.out), Some(&manifest.comment()))?;
    if !quiet {
        let tracklets = sim.tracklets();
        let detections: usize = tracklets.iter().map(|t| t.len()).sum();
        println!(
            "workers={} frames={} cameras={} tracklets={} detections={} gt_rows={} files={}",
            scenario.world.n_workers,
            scenario.world.n_frames,
            scenario.cameras.len(),
            tracklets.len(),
            detections,
            sim.ground_truth.num_points(),
            written.len()
        );
    }
    Ok(())
}

fn cmd_fuse(args: &FuseArgs, quiet: bool) -> Result<()> {
    let run = load_run(&args.config)?;
    let mut cfg = run.config.fusion.clone();
    if let Some(m) = args.coordinate_mode {
        cfg.coordinate_mode = m.into();
    }
    if let Some(f) = args.features {
        cfg.feature_strategy = f.into();
    }
    let tracks = fuse(&run.tracklets, &run.rig, &cfg)?;

    let mut manifest = RunManifest::new("fuse", Some(&args.config))?;
    manifest.inputs = run_inputs(&run.config);
    manifest.outputs = vec!["tracks.csv".into(), "manifest.json".into()];
    manifest.coordinate_mode = Some(cfg.coordinate_mode.to_string());
    manifest.feature_strategy = Some(cfg.feature_strategy.to_string());

    create_dir(&args.out)?;
    write_tracks_csv(&args.out.join("tracks.csv"), &tracks, Some(&manifest.comment()))?;
    write_atomic(&args.out.join("manifest.json"), manifest.to_json().as_bytes())?;
    if !quiet {
        let rows: usize = tracks.iter().map(|t| t.detections.len()).sum();
        println!(
            "tracklets={} tracks={} rows={} coordinate_mode={} features={}",
            run.tracklets.len(),
            tracks.len(),
            rows,
            cfg.coordinate_mode,
            cfg.feature_strategy
        );
    }
    Ok(())
}

fn run_inputs(config: &RunConfig) -> Vec<String> {
    let mut inputs = Vec::new();
    for input in &config.inputs {
        inputs.push(input.tracklets.display().to_string());
        if let Some(f) = &input.features {
            inputs.push(f.display().to_string());
        }
    }
    inputs
}

#[derive(Serialize)]
struct EvalDocument<'a> {
    manifest: &'a RunManifest,
    report: &'a EvalReport,
}

fn cmd_eval(args: &EvalArgs, quiet: bool) -> Result<()> {
    let params = match &args.config {
        Some(p) => read_toml::<RunConfig>(p)?.metrics,
        None => MatchingParams::default(),
    };
    let gt = read_timeline_csv(&args.gt)?;
    let pred = read_timeline_csv(&args.pred)?;
    let report = evaluate(&gt, &pred, &params)?;

    let mut manifest = RunManifest::new("eval", args.config.as_deref())?;
    manifest.inputs = vec![args.gt.display().to_string(), args.pred.display().to_string()];
    manifest.outputs = vec!["report.txt".into(), "report.json".into()];

    create_dir(&args.out)?;
    write_atomic(&args.out.join("report.txt"), commented(&manifest, &report.to_key_value()).as_bytes())?;
    let doc = serde_json::to_string_pretty(&EvalDocument {
        manifest: &manifest,
        report: &report,
    })? + "\n";
    write_atomic(&args.out.join("report.json"), doc.as_bytes())?;
    if !quiet {
        println!(
            "hota={:.3} idf1={:.3} mota={:.3} fp={} fn={} idsw={}",
            report.hota, report.idf1, report.mota, report.fp, report.fn_, report.idsw
        );
    }
    Ok(())
}

fn cmd_ablation(args: &AblationArgs, quiet: bool) -> Result<()> {
    let scenario = load_scenario(&args.config)?;
    let seeds = args.seeds.clone().map_or_else(|| vec![scenario.world.seed], |s| s.0);
    let table = run_ablation(&scenario, &seeds, &MatchingParams::default())?;

    let mut manifest = RunManifest::new("ablation", Some(&args.config))?;
    manifest.seeds = seeds;
    manifest.outputs = vec!["ablation.csv".into(), "ablation.txt".into(), "manifest.json".into()];

    create_dir(&args.out)?;
    let text = table.to_text();
    write_atomic(&args.out.join("ablation.csv"), commented(&manifest, &table.to_csv()?).as_bytes())?;
    write_atomic(&args.out.join("ablation.txt"), commented(&manifest, &text).as_bytes())?;
    write_atomic(&args.out.join("manifest.json"), manifest.to_json().as_bytes())?;
    if !quiet {
        print!("{text}");
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, cli.quiet),
        Command::Fuse(a) => cmd_fuse(a, cli.quiet),
        Command::Eval(a) => cmd_eval(a, cli.quiet),
        Command::Ablation(a) => cmd_ablation(a, cli.quiet),
    }
}
