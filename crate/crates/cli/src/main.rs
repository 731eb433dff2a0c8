use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dkcf_core::experiment::{sweep, ExperimentConfig, RowKind, SweepTable};
use dkcf_core::manager::PipelineMode;
use dkcf_core::network::TopologyKind;
use log::{info, warn};

#[derive(Parser)]
#[command(name = "dkcf", version, about = "Distributed multi-camera tracking experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one config file for all of its repetitions.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run every `*.json` config in a directory, in file name order.
    Sweep {
        config_dir: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// First seed; repetitions use consecutive seeds from here.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repetitions: Option<usize>,
    /// dkf, dkf+lda or dkf+lda+dtm.
    #[arg(long)]
    mode: Option<PipelineMode>,
    /// complete, ring, chain or disconnected.
    #[arg(long)]
    topology: Option<TopologyKind>,
    #[arg(long)]
    variant: Option<usize>,
    /// Directory for the CSV; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(n) = self.repetitions {
            config.repetitions = n;
        }
        if let Some(mode) = self.mode {
            config.mode = mode;
        }
        if let Some(topology) = self.topology {
            config.topology = topology;
            if self.variant.is_none() {
                config.variant = 0;
            }
        }
        if let Some(variant) = self.variant {
            config.variant = variant;
        }
    }
}

fn load(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(path)?;
    if config.name.is_empty() {
        config.name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    }
    overrides.apply(&mut config);
    config.validate().with_context(|| format!("{} after overrides", path.display()))?;
    Ok(config)
}

fn config_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.extension().is_some_and(|e| e == "json"));
    files.sort();
    if files.is_empty() {
        bail!("no .json configs in {}", dir.display());
    }
    Ok(files)
}

fn emit(table: &SweepTable, out: Option<&Path>, file_name: &str) -> Result<()> {
    let csv = table.to_csv();
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(file_name);
            fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
            info!("wrote {}", path.display());
        }
        None => std::io::stdout().write_all(csv.as_bytes())?,
    }
    Ok(())
}

fn execute(configs: &[ExperimentConfig], overrides: &Overrides, file_name: &str) -> Result<bool> {
    let (table, _) = sweep(configs)?;
    let mut clean = true;
    for row in &table.rows {
        match &row.kind {
            RowKind::Median => info!(
                "{} {} variant {}: median MOTA {:.4} IDF1 {:.4} totalKB/frame {:.3}",
                row.mode, row.topology, row.variant, row.report.mota, row.report.idf1, row.total_kb_per_frame
            ),
            RowKind::Failed(seed, msg) => {
                clean = false;
                warn!("{} {} seed {seed} failed: {msg}", row.mode, row.topology);
            }
            RowKind::Run(_) => {}
        }
    }
    emit(&table, overrides.out.as_deref(), file_name)?;
    Ok(clean)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { config, overrides } => load(config, overrides).and_then(|c| {
            let name = format!("{}.csv", if c.name.is_empty() { "run" } else { &c.name });
            execute(&[c], overrides, &name)
        }),
        Command::Sweep { config_dir, overrides } => config_files(config_dir)
            .and_then(|files| files.iter().map(|f| load(f, overrides)).collect::<Result<Vec<_>>>())
            .and_then(|configs| execute(&configs, overrides, "sweep.csv")),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
