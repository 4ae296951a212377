//! `falsitrack` command line: `track`, `simulate`, `eval`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::config::{load_config, TrackerConfig};
use crate::error::Error;
use crate::metrics;
use crate::mot_io;
use crate::pipeline::{FrameResult, Modules, RunSummary, Tracker};
use crate::simulator::{self, ScenarioScript};

pub const RESULTS_FILE: &str = "results.txt";
pub const EVENTS_FILE: &str = "events.txt";

#[derive(Debug, Parser)]
#[command(name = "falsitrack", version, about = "Multi-object tracker with identity-switch detection and rectification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Track a MOT detection file and write results and an event log.
    Track(TrackArgs),
    /// Generate a synthetic dataset (det.txt, embeddings.txt, gt.txt) from a scenario script.
    Simulate(SimulateArgs),
    /// Score results against ground truth and write an identity report.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// MOT detection file (frame,id,left,top,width,height,score,x,y,z).
    #[arg(long)]
    pub det: PathBuf,
    /// Embedding sidecar aligned with the detection rows.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Tracker config in key=value form; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Image size as WIDTHxHEIGHT, e.g. 1920x1080.
    #[arg(long, value_parser = parse_image_size)]
    pub image_size: (f64, f64),
    /// Output directory for results.txt and events.txt.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Disable ambiguous-match pruning.
    #[arg(long)]
    pub no_ami: bool,
    /// Disable identity-switch detection (requires --no-idsr).
    #[arg(long)]
    pub no_idsd: bool,
    /// Disable identity-switch rectification.
    #[arg(long)]
    pub no_idsr: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario script in key=value form.
    #[arg(long)]
    pub script: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Override the script's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Tracker results in MOT format.
    #[arg(long)]
    pub results: PathBuf,
    /// Ground truth in MOT gt format.
    #[arg(long)]
    pub gt: PathBuf,
    /// Event log written by `track`; without it recovery fields are n/a.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Report output path.
    #[arg(long)]
    pub report: PathBuf,
}

pub fn parse_image_size(s: &str) -> Result<(f64, f64), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got `{s}`"))?;
    let w: f64 = w.trim().parse().map_err(|_| format!("invalid width `{w}`"))?;
    let h: f64 = h.trim().parse().map_err(|_| format!("invalid height `{h}`"))?;
    if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
        return Err(format!("image size must be positive, got `{s}`"));
    }
    Ok((w, h))
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn format_summary(s: &RunSummary) -> String {
    format!(
        "frames={} births={} removals={} falsifications={} recoveries={} reassignments={}",
        s.frames, s.births, s.removals, s.falsifications, s.recoveries, s.reassignments
    )
}

/// Runs the tracker over files; returns per-frame results and the summary.
pub fn track_files(
    det: &Path,
    embeddings: &Path,
    config: &TrackerConfig,
    image_size: (f64, f64),
    modules: Modules,
) -> crate::error::Result<(Vec<FrameResult>, RunSummary)> {
    let mut frames = mot_io::parse_detections(det)?;
    let table = mot_io::parse_embeddings(embeddings)?;
    mot_io::attach_embeddings(&mut frames, &table, config.tau)?;
    let mut tracker = Tracker::with_modules(config.clone(), image_size, modules)?;
    let results = tracker.run(frames.iter().map(|f| (f.frame, f.detections.as_slice())), None)?;
    Ok((results, tracker.finalize()))
}

pub fn cmd_track(args: &TrackArgs) -> anyhow::Result<RunSummary> {
    if args.no_idsd && !args.no_idsr {
        bail!("--no-idsd requires --no-idsr: rectification depends on switch detection");
    }
    let config = match &args.config {
        Some(p) => load_config(p)?,
        None => TrackerConfig::default(),
    };
    let modules = Modules {
        ami: !args.no_ami,
        idsd: !args.no_idsd,
        idsr: !args.no_idsr,
    };
    let (results, summary) = track_files(&args.det, &args.embeddings, &config, args.image_size, modules)?;
    create_dir(&args.out_dir)?;
    mot_io::write_results(&results, args.out_dir.join(RESULTS_FILE))?;
    mot_io::write_events(results.iter().flat_map(|r| &r.events), args.out_dir.join(EVENTS_FILE))?;
    Ok(summary)
}

pub fn cmd_simulate(args: &SimulateArgs) -> anyhow::Result<simulator::Dataset> {
    let mut script = ScenarioScript::load(&args.script)?;
    if let Some(seed) = args.seed {
        script.seed = seed;
    }
    create_dir(&args.out_dir)?;
    Ok(simulator::emit_dataset(&script, &args.out_dir)?)
}

pub fn cmd_eval(args: &EvalArgs) -> anyhow::Result<metrics::IdentityReport> {
    let results = mot_io::read_detection_rows(&args.results)?;
    let gt = mot_io::parse_ground_truth(&args.gt)?;
    let events = match &args.events {
        Some(p) => Some(mot_io::parse_events(p)?),
        None => None,
    };
    let report = metrics::evaluate(&results, &gt, events.as_deref())?;
    fs::write(&args.report, report.to_text())
        .map_err(|e| Error::io(&args.report, e))?;
    Ok(report)
}

/// Dispatches a parsed command line, printing what each command reports.
pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Track(a) => {
            let s = cmd_track(&a)?;
            println!("{}", format_summary(&s));
        }
        Command::Simulate(a) => {
            let d = cmd_simulate(&a)?;
            let rows: usize = d.frames.iter().map(|f| f.detections.len()).sum();
            println!(
                "frames={} detections={} agents={} out_dir={}",
                d.frame_count,
                rows,
                d.identities.len(),
                a.out_dir.display()
            );
        }
        Command::Eval(a) => {
            let r = cmd_eval(&a)?;
            print!("{}", r.to_text());
        }
    }
    Ok(())
}
