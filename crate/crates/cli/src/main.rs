use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::{error, info};

use cdt_core::binscan::{self, asm, Arch, SinkList};
use cdt_core::extractor::DEFAULT_MAX_DEPTH;
use cdt_core::model;
use cdt_core::pipeline::{
    self, analyze_cdt, create_cdt, diff_reports, AnalysisInputs, PipelineConfig, StageLog, EXIT_ERROR,
};
use cdt_core::sca::load_signature_db;

#[derive(Parser)]
#[command(name = "cdt", version, about = "Build and analyze cyber digital twins of firmware images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract a firmware image and write its twin document.
    Create {
        image: PathBuf,
        #[arg(long)]
        signatures: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_DEPTH)]
        max_depth: usize,
        /// Defaults to the image file name.
        #[arg(long)]
        firmware_id: Option<String>,
    },
    /// Analyze a twin document and write the verification report.
    Analyze {
        cdt: PathBuf,
        #[arg(long)]
        cve_db: PathBuf,
        #[arg(long)]
        requirements: PathBuf,
        #[arg(long)]
        mapping: PathBuf,
        #[arg(long)]
        context: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Extracted tree holding the code artifacts. Defaults to the
        /// `extracted` directory next to the twin.
        #[arg(long)]
        extracted: Option<PathBuf>,
    },
    /// Run the whole pipeline from a TOML configuration file.
    Run { config: PathBuf },
    /// Run the pipeline, then re-run it whenever an input changes.
    Watch {
        config: PathBuf,
        /// Poll interval in seconds.
        #[arg(long, default_value_t = 5.0)]
        interval: f64,
        /// Stop after this many polls.
        #[arg(long)]
        max_ticks: Option<u64>,
    },
    /// Compare two reports.
    Diff { old: PathBuf, new: PathBuf },
    /// Analyze one MVFW binary and print its findings.
    ScanBinary { file: PathBuf },
    /// Assemble a program into an MVFW binary.
    Assemble {
        source: PathBuf,
        #[arg(long, default_value = "mv32")]
        arch: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join(name)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Create {
            image,
            signatures,
            out,
            max_depth,
            firmware_id,
        } => {
            let sigs = load_signature_db(&signatures)?;
            let id = firmware_id.unwrap_or_else(|| {
                image.file_name().map_or_else(|| "firmware".into(), |n| n.to_string_lossy().into_owned())
            });
            let extracted = sibling(&out, "extracted");
            let cdt = create_cdt(&image, &sigs, &extracted, max_depth, &id, &mut StageLog::default())?;
            fs::write(&out, model::serialize(&cdt)).with_context(|| format!("writing {}", out.display()))?;
            info!("{} components, {} code artifacts", cdt.sbom.len(), cdt.code_artifacts.len());
            Ok(0)
        }
        Command::Analyze {
            cdt,
            cve_db,
            requirements,
            mapping,
            context,
            out,
            extracted,
        } => {
            let bytes = fs::read(&cdt).with_context(|| format!("reading {}", cdt.display()))?;
            let twin = model::deserialize(&bytes).with_context(|| format!("loading {}", cdt.display()))?;
            let inputs = AnalysisInputs::load(&cve_db, &requirements, &mapping, context.as_deref())?;
            let extracted = extracted.unwrap_or_else(|| sibling(&cdt, "extracted"));
            let cache = sibling(&cdt, "binscan-cache");
            let analysis = analyze_cdt(
                &twin,
                extracted.is_dir().then_some(extracted.as_path()),
                Some(&cache),
                &inputs,
                &mut StageLog::default(),
            )?;
            fs::write(&out, &analysis.report).with_context(|| format!("writing {}", out.display()))?;
            Ok(analysis.exit_code())
        }
        Command::Run { config } => {
            let cfg = PipelineConfig::load(&config)?;
            let outcome = pipeline::run_pipeline(&cfg)?;
            info!("report written to {}", outcome.report_path.display());
            Ok(outcome.exit_code)
        }
        Command::Watch {
            config,
            interval,
            max_ticks,
        } => {
            if !(interval.is_finite() && interval >= 0.0) {
                bail!("interval must be a non-negative number of seconds");
            }
            let cfg = PipelineConfig::load(&config)?;
            let mut last = None;
            let first = pipeline::watch(cfg, Duration::from_secs_f64(interval), max_ticks, |event| {
                last = Some(event.exit_code);
                if let Err(e) = print_json(&event.diff) {
                    error!("cannot print diff: {}", e);
                }
            })?;
            Ok(last.unwrap_or(first.exit_code))
        }
        Command::Diff { old, new } => {
            let old_text = fs::read_to_string(&old).with_context(|| format!("reading {}", old.display()))?;
            let new_text = fs::read_to_string(&new).with_context(|| format!("reading {}", new.display()))?;
            print_json(&diff_reports(&old_text, &new_text)?)?;
            Ok(0)
        }
        Command::ScanBinary { file } => {
            let analysis = binscan::analyze_binary(&file, &SinkList::builtin())?;
            print_json(&analysis)?;
            Ok(0)
        }
        Command::Assemble { source, arch, out } => {
            let arch = Arch::parse(&arch).with_context(|| format!("unknown architecture {:?}", arch))?;
            let text = fs::read_to_string(&source).with_context(|| format!("reading {}", source.display()))?;
            let bytes = asm::assemble(&text, arch).map_err(|e| anyhow::anyhow!("{}: {}", source.display(), e))?;
            fs::write(&out, bytes).with_context(|| format!("writing {}", out.display()))?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CDT_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
