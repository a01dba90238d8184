//! End-to-end orchestration: create the twin, analyze it, verify
//! requirements, and keep the result current as inputs change.

pub mod config;
pub mod diff;
pub mod watch;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::Utc;
use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binscan::{analyze_image, SinkList, WeaknessFinding};
use crate::digest::sha256_hex;
use crate::extractor::{extract_recursive, list_tree, tree_digest};
use crate::model::{self, CyberDigitalTwin};
use crate::sca::{
    analyze_licenses, build_sbom, compile_signatures, harvest_cdt_facets, load_signature_db, parse_package_db,
    scan_components, LicenseFingerprints, Signature,
};
use crate::verifier::{
    check_policies, load_mappings, load_requirements, render_report, retrace, verify_requirements, CweMapping,
    Finding, PolicyFinding, Requirement, RequirementStatus, RequirementVerdict,
};
use crate::vuln::{filter_by_context, load_context_overrides, load_cve_db, match_cves, AliasTable, ContextOverrides, CveRecord, KnownFinding};

pub use config::PipelineConfig;
pub use diff::{diff_reports, diff_rows, ReportDiff, StatusChange};
pub use watch::{watch, WatchEvent, Watcher};

pub const EXIT_FULFILLED: i32 = 0;
pub const EXIT_UNFULFILLED: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Load,
    Extract,
    Sca,
    Match,
    Binscan,
    Verify,
    Emit,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Extract => "extract",
            Stage::Sca => "sca",
            Stage::Match => "match",
            Stage::Binscan => "binscan",
            Stage::Verify => "verify",
            Stage::Emit => "emit",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage} stage failed: {message}")]
    Stage { stage: Stage, message: String },
    #[error("stored twin is stale ({0}); run the full pipeline")]
    StaleCdt(String),
}

impl PipelineError {
    pub fn new(stage: Stage, message: impl fmt::Display) -> PipelineError {
        PipelineError::Stage {
            stage,
            message: message.to_string(),
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Stage { stage, .. } => Some(*stage),
            PipelineError::StaleCdt(_) => None,
        }
    }
}

/// Stages executed during one run, in order, with an optional detail.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StageLog {
    pub entries: Vec<(Stage, String)>,
}

impl StageLog {
    pub fn record(&mut self, stage: Stage, detail: impl Into<String>) {
        let detail = detail.into();
        info!("stage {} {}", stage, detail);
        self.entries.push((stage, detail));
    }

    pub fn ran(&self, stage: Stage) -> bool {
        self.entries.iter().any(|(s, _)| *s == stage)
    }

    pub fn stages(&self) -> Vec<Stage> {
        self.entries.iter().map(|(s, _)| *s).collect()
    }

    fn append_to(&self, path: &Path, run: &str) -> std::io::Result<()> {
        use std::io::Write;
        let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
        writeln!(f, "run {}", run)?;
        for (stage, detail) in &self.entries {
            if detail.is_empty() {
                writeln!(f, "{}", stage)?;
            } else {
                writeln!(f, "{} {}", stage, detail)?;
            }
        }
        Ok(())
    }
}

fn stage_err<E: fmt::Display>(stage: Stage) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::new(stage, e)
}

/// Extract `image` into `extracted_dir` (replacing previous content) and
/// build its twin.
pub fn create_cdt(
    image: &Path,
    signatures: &[Signature],
    extracted_dir: &Path,
    max_depth: usize,
    firmware_id: &str,
    log: &mut StageLog,
) -> Result<CyberDigitalTwin, PipelineError> {
    if extracted_dir.exists() {
        fs::remove_dir_all(extracted_dir)
            .map_err(|e| PipelineError::new(Stage::Extract, format!("{}: {}", extracted_dir.display(), e)))?;
    }
    let extraction = extract_recursive(image, extracted_dir, max_depth).map_err(stage_err(Stage::Extract))?;
    for w in &extraction.warnings {
        warn!("extract: {}: {}", w.path, w.message);
    }
    log.record(Stage::Extract, format!("{} nodes", extraction.nodes.len()));

    let root = extracted_dir;
    let nodes = &extraction.nodes;
    let compiled = compile_signatures(signatures).map_err(stage_err(Stage::Sca))?;
    let scanned = scan_components(root, nodes, &compiled);
    let (parsed, pkg_warnings) = parse_package_db(root, nodes);
    let sbom = analyze_licenses(root, build_sbom(scanned, parsed), nodes, signatures, &LicenseFingerprints::builtin());
    let facets = harvest_cdt_facets(root, nodes);
    for w in pkg_warnings.iter().chain(&facets.warnings) {
        warn!("sca: {}", w);
    }

    let mut cdt = CyberDigitalTwin::empty(firmware_id, Utc::now());
    facets.apply_to(&mut cdt);
    cdt.sbom = sbom;
    cdt.file_tree_digest = extraction.tree_digest();
    cdt.canonicalize();
    cdt.validate().map_err(stage_err(Stage::Sca))?;
    log.record(Stage::Sca, format!("{} components", cdt.sbom.len()));
    Ok(cdt)
}

/// Everything besides the twin that analysis reads.
#[derive(Debug, Clone)]
pub struct AnalysisInputs {
    pub cve_db: Vec<CveRecord>,
    pub aliases: AliasTable,
    pub requirements: Vec<Requirement>,
    pub mappings: Vec<CweMapping>,
    pub overrides: Option<ContextOverrides>,
    pub sinks: SinkList,
}

impl AnalysisInputs {
    pub fn load(
        cve_db: &Path,
        requirements: &Path,
        mapping: &Path,
        context: Option<&Path>,
    ) -> Result<AnalysisInputs, PipelineError> {
        Ok(AnalysisInputs {
            cve_db: load_cve_db(cve_db).map_err(stage_err(Stage::Load))?,
            aliases: AliasTable::builtin(),
            requirements: load_requirements(requirements).map_err(stage_err(Stage::Load))?,
            mappings: load_mappings(mapping).map_err(stage_err(Stage::Load))?,
            overrides: context
                .map(load_context_overrides)
                .transpose()
                .map_err(stage_err(Stage::Load))?,
            sinks: SinkList::builtin(),
        })
    }

    pub fn from_config(config: &PipelineConfig) -> Result<AnalysisInputs, PipelineError> {
        AnalysisInputs::load(
            &config.cve_db_path,
            &config.requirements_path,
            &config.mapping_path,
            config.context_overrides_path.as_deref(),
        )
    }
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub known: Vec<KnownFinding>,
    /// (code artifact path, finding).
    pub weaknesses: Vec<(String, WeaknessFinding)>,
    pub policy: Vec<PolicyFinding>,
    pub findings: Vec<Finding>,
    pub verdicts: Vec<RequirementVerdict>,
    pub report: String,
}

impl Analysis {
    pub fn exit_code(&self) -> i32 {
        exit_code_for(&self.verdicts)
    }
}

pub fn exit_code_for(verdicts: &[RequirementVerdict]) -> i32 {
    if verdicts.iter().any(|v| v.status == RequirementStatus::Unfulfilled) {
        EXIT_UNFULFILLED
    } else {
        EXIT_FULFILLED
    }
}

/// Process exit code for a pipeline result.
pub fn exit_code_of(result: &Result<RunOutcome, PipelineError>) -> i32 {
    result.as_ref().map_or(EXIT_ERROR, |o| o.exit_code)
}

/// Weakness findings of one code artifact, from the cache when its digest
/// has been analyzed before.
fn scan_artifact(
    bytes: Vec<u8>,
    cache_dir: Option<&Path>,
    sinks: &SinkList,
) -> Result<(Vec<WeaknessFinding>, bool), String> {
    let digest = sha256_hex(&bytes);
    let cached = cache_dir.map(|d| d.join(format!("{}.json", digest)));
    if let Some(path) = &cached {
        if let Ok(text) = fs::read(path) {
            match serde_json::from_slice(&text) {
                Ok(findings) => return Ok((findings, true)),
                Err(e) => warn!("ignoring corrupt cache entry {}: {}", path.display(), e),
            }
        }
    }
    let analysis = analyze_image(bytes, sinks).map_err(|e| e.to_string())?;
    if let Some(path) = &cached {
        let write = path
            .parent()
            .map_or(Ok(()), fs::create_dir_all)
            .and_then(|_| fs::write(path, serde_json::to_vec(&analysis.findings).expect("findings serialize")));
        if let Err(e) = write {
            warn!("cannot write cache entry {}: {}", path.display(), e);
        }
    }
    Ok((analysis.findings, false))
}

/// Match, scan code artifacts, check policies and verify requirements.
///
/// Code artifacts are read from `extracted_root`; when it is absent they
/// are skipped with a warning.
pub fn analyze_cdt(
    cdt: &CyberDigitalTwin,
    extracted_root: Option<&Path>,
    cache_dir: Option<&Path>,
    inputs: &AnalysisInputs,
    log: &mut StageLog,
) -> Result<Analysis, PipelineError> {
    let matched = match_cves(&cdt.sbom, &inputs.cve_db, &inputs.aliases);
    let known = filter_by_context(matched, cdt, &inputs.cve_db, inputs.overrides.as_ref());
    let filtered = known.iter().filter(|k| k.filter_reason.is_some()).count();
    log.record(Stage::Match, format!("{} matches, {} filtered out", known.len(), filtered));

    let mut weaknesses = Vec::new();
    let (mut analyzed, mut cached) = (0, 0);
    for artifact in &cdt.code_artifacts {
        let Some(root) = extracted_root else {
            warn!("binscan: no extracted tree, skipping {}", artifact);
            continue;
        };
        let path = root.join(artifact);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) => {
                warn!("binscan: skipping {}: {}", path.display(), e);
                continue;
            }
        };
        let (found, hit) = scan_artifact(bytes, cache_dir, &inputs.sinks)
            .map_err(|e| PipelineError::new(Stage::Binscan, format!("{}: {}", artifact, e)))?;
        if hit {
            cached += 1;
        } else {
            analyzed += 1;
        }
        weaknesses.extend(found.into_iter().map(|f| (artifact.clone(), f)));
    }
    log.record(Stage::Binscan, format!("{} analyzed, {} cached", analyzed, cached));

    let policy = check_policies(cdt);
    let policy_rows: Vec<Finding> = policy.iter().map(Finding::policy).collect();
    let mut findings: Vec<Finding> = known.iter().map(Finding::known).collect();
    findings.extend(weaknesses.iter().map(|(a, w)| Finding::weakness(a, w)));
    findings.extend(policy_rows.iter().cloned());
    let retraced = retrace(&findings, &inputs.mappings);
    let verdicts = verify_requirements(&inputs.requirements, &retraced, &policy_rows);
    let report = render_report(cdt, &findings, &verdicts);
    log.record(
        Stage::Verify,
        format!("{} findings, {} requirements", findings.len(), verdicts.len()),
    );
    Ok(Analysis {
        known,
        weaknesses,
        policy,
        findings,
        verdicts,
        report,
    })
}

/// Content digests of the pipeline inputs, used for staleness checks and
/// change detection.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigests {
    pub image: String,
    pub signatures: String,
    pub cve_db: String,
    pub requirements: String,
    pub mapping: String,
    pub context: Option<String>,
}

fn file_digest(path: &Path) -> std::io::Result<String> {
    if path.is_dir() {
        let nodes = list_tree(path).map_err(|e| std::io::Error::other(e.to_string()))?;
        Ok(tree_digest(&nodes))
    } else {
        Ok(sha256_hex(&fs::read(path)?))
    }
}

impl InputDigests {
    pub fn compute(config: &PipelineConfig) -> std::io::Result<InputDigests> {
        Ok(InputDigests {
            image: file_digest(&config.image_path)?,
            signatures: file_digest(&config.signature_db_path)?,
            cve_db: file_digest(&config.cve_db_path)?,
            requirements: file_digest(&config.requirements_path)?,
            mapping: file_digest(&config.mapping_path)?,
            context: config.context_overrides_path.as_deref().map(file_digest).transpose()?,
        })
    }

    /// True when the change requires extraction and SCA again.
    pub fn needs_full_run(&self, other: &InputDigests) -> bool {
        self.image != other.image || self.signatures != other.signatures
    }
}

/// Written next to the twin after each run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineState {
    pub inputs: InputDigests,
    pub file_tree_digest: String,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub cdt_path: PathBuf,
    pub report_path: PathBuf,
    pub exit_code: i32,
    pub analysis: Analysis,
    pub stages: StageLog,
}

fn write_file(stage: Stage, path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    fs::write(path, bytes).map_err(|e| PipelineError::new(stage, format!("{}: {}", path.display(), e)))
}

fn finish(
    config: &PipelineConfig,
    cdt: &CyberDigitalTwin,
    digests: InputDigests,
    analysis: Analysis,
    mut log: StageLog,
    run: &str,
) -> Result<RunOutcome, PipelineError> {
    let report_path = config.report_path();
    write_file(Stage::Emit, &report_path, analysis.report.as_bytes())?;
    let state = PipelineState {
        inputs: digests,
        file_tree_digest: cdt.file_tree_digest.clone(),
    };
    write_file(
        Stage::Emit,
        &config.state_path(),
        &serde_json::to_vec_pretty(&state).expect("state serializes"),
    )?;
    log.record(Stage::Emit, report_path.display().to_string());
    if let Err(e) = log.append_to(&config.stage_log_path(), run) {
        warn!("cannot append stage log: {}", e);
    }
    Ok(RunOutcome {
        cdt_path: config.cdt_path(),
        report_path,
        exit_code: analysis.exit_code(),
        analysis,
        stages: log,
    })
}

/// Extract, build the twin, analyze it and write the twin, the report and
/// the run state into the output directory.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunOutcome, PipelineError> {
    config.check_inputs()?;
    fs::create_dir_all(&config.output_dir)
        .map_err(|e| PipelineError::new(Stage::Config, format!("{}: {}", config.output_dir.display(), e)))?;
    let digests = InputDigests::compute(config).map_err(stage_err(Stage::Load))?;
    let mut log = StageLog::default();
    let inputs = AnalysisInputs::from_config(config)?;
    let signatures = load_signature_db(&config.signature_db_path).map_err(stage_err(Stage::Load))?;
    log.record(Stage::Load, "");

    let extracted = config.extracted_dir();
    let cdt = create_cdt(
        &config.image_path,
        &signatures,
        &extracted,
        config.max_depth,
        &config.firmware_id(),
        &mut log,
    )?;
    write_file(Stage::Sca, &config.cdt_path(), &model::serialize(&cdt))?;
    let analysis = analyze_cdt(&cdt, Some(&extracted), Some(&config.cache_dir()), &inputs, &mut log)?;
    finish(config, &cdt, digests, analysis, log, "full")
}

/// Re-run matching, binscan (cached) and verification from a stored twin,
/// without extraction or SCA.
pub fn reanalyze(cdt_path: &Path, config: &PipelineConfig) -> Result<RunOutcome, PipelineError> {
    config.check_inputs()?;
    let bytes = fs::read(cdt_path).map_err(|e| PipelineError::new(Stage::Load, format!("{}: {}", cdt_path.display(), e)))?;
    let cdt = model::deserialize(&bytes).map_err(stage_err(Stage::Load))?;
    let digests = InputDigests::compute(config).map_err(stage_err(Stage::Load))?;
    let state: PipelineState = fs::read(config.state_path())
        .ok()
        .and_then(|b| serde_json::from_slice(&b).ok())
        .ok_or_else(|| PipelineError::StaleCdt("no run state recorded".into()))?;
    if state.file_tree_digest != cdt.file_tree_digest {
        return Err(PipelineError::StaleCdt("file tree digest differs from the last run".into()));
    }
    if state.inputs.needs_full_run(&digests) {
        return Err(PipelineError::StaleCdt("firmware image or signatures changed".into()));
    }
    let mut log = StageLog::default();
    let inputs = AnalysisInputs::from_config(config)?;
    log.record(Stage::Load, "");
    let extracted = config.extracted_dir();
    let analysis = analyze_cdt(
        &cdt,
        extracted.is_dir().then_some(extracted.as_path()),
        Some(&config.cache_dir()),
        &inputs,
        &mut log,
    )?;
    finish(config, &cdt, digests, analysis, log, "reanalyze")
}
