use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use disc_pallor::batch::{evaluate, qc_summary, run_batch, write_eval_csv, BatchOptions};
use disc_pallor::imgio::{read_manifest, read_pallor_csv};
use disc_pallor::overlay::ReferenceStats;
use disc_pallor::providers::MaskFileProvider;
use disc_pallor::synth::{parse_scene_spec, write_dataset};
use disc_pallor::PipelineConfig;

#[derive(Parser)]
#[command(name = "disc-pallor", version, about = "Sectoral optic disc pallor from fundus photographs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure every image in a manifest.
    Process {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write diagnostic panels to OUT/overlays.
        #[arg(long)]
        overlays: bool,
        /// Reference `zone,mean,sd` CSV for the zone wheel and bar chart.
        #[arg(long)]
        ref_stats: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// `key=value` configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Extra `key=value` overrides, applied after the file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Compare predicted disc masks and fovea points against ground truth.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render synthetic scenes with known pallor.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// JSON scene file, or `random:N[:SEED]`.
        #[arg(long)]
        scenes: String,
    },
    /// Summarize a pallor.csv.
    Qc {
        #[arg(long)]
        results: PathBuf,
    },
    /// Per-zone mean and SD over the OK rows of a pallor.csv.
    RefStats {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Input errors (bad manifest, config or arguments) exit with 2.
struct UsageError(anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for UsageError {
    fn from(e: E) -> Self {
        Self(e.into())
    }
}

fn load_config(path: Option<&PathBuf>, overrides: &[String]) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match path {
        Some(p) => PipelineConfig::from_file(p).with_context(|| format!("reading config {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    for kv in overrides {
        let (k, v) = kv.split_once('=').with_context(|| format!("expected KEY=VALUE, got `{kv}`"))?;
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn process(
    manifest: PathBuf,
    out: PathBuf,
    overlays: bool,
    ref_stats: Option<PathBuf>,
    jobs: usize,
    config: Option<PathBuf>,
    set: Vec<String>,
) -> Result<ExitCode, UsageError> {
    let cfg = load_config(config.as_ref(), &set)?;
    let entries = read_manifest(&manifest).with_context(|| format!("reading manifest {}", manifest.display()))?;
    if entries.is_empty() {
        return Err(UsageError(anyhow::anyhow!("manifest {} has no rows", manifest.display())));
    }
    let reference = ref_stats
        .map(|p| ReferenceStats::read(&p).with_context(|| format!("reading reference stats {}", p.display())))
        .transpose()?;
    let opts = BatchOptions { jobs, overlays, reference };
    let report = match run_batch(&entries, &MaskFileProvider, &cfg, &out, &opts) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(1));
        }
    };
    let summary = qc_summary(&report.records);
    eprint!("{summary}");
    eprintln!("wrote {}", report.pallor_csv.display());
    Ok(ExitCode::from(report.exit_code() as u8))
}

fn run(cli: Cli) -> Result<ExitCode, UsageError> {
    match cli.command {
        Command::Process { manifest, out, overlays, ref_stats, jobs, config, set } => {
            process(manifest, out, overlays, ref_stats, jobs, config, set)
        }
        Command::Evaluate { pred, gt, out } => {
            let pred = read_manifest(&pred).with_context(|| format!("reading {}", pred.display()))?;
            let gt = read_manifest(&gt).with_context(|| format!("reading {}", gt.display()))?;
            let report = evaluate(&pred, &gt).map_err(|e| UsageError(e.into()))?;
            write_eval_csv(&report, &out)?;
            if let Some(s) = report.one_r {
                println!(
                    "1R: {:.1}% within 0.25R, {:.1}% within 0.5R, {:.1}% within R, {:.1}% failed",
                    100.0 * s.within_q25,
                    100.0 * s.within_q50,
                    100.0 * s.within_r1,
                    100.0 * s.failure
                );
            }
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth { out, scenes } => {
            let scenes = parse_scene_spec(&scenes)?;
            let manifest = write_dataset(&scenes, &out)?;
            println!("wrote {} scenes, manifest {}", scenes.len(), manifest.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Qc { results } => {
            let records = read_pallor_csv(&results).with_context(|| format!("reading {}", results.display()))?;
            print!("{}", qc_summary(&records));
            Ok(ExitCode::SUCCESS)
        }
        Command::RefStats { results, out } => {
            let records = read_pallor_csv(&results).with_context(|| format!("reading {}", results.display()))?;
            let stats = ReferenceStats::from_records(&records);
            if stats.zones.is_empty() {
                return Err(UsageError(anyhow::anyhow!("no OK rows in {}", results.display())));
            }
            stats.write(&out)?;
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(UsageError(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
