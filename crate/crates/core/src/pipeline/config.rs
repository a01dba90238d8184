//! Pipeline configuration file (TOML).

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{PipelineError, Stage};
use crate::extractor::DEFAULT_MAX_DEPTH;

/// Paths are resolved against the directory of the configuration file.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub image_path: PathBuf,
    pub signature_db_path: PathBuf,
    pub cve_db_path: PathBuf,
    pub requirements_path: PathBuf,
    pub mapping_path: PathBuf,
    #[serde(default)]
    pub context_overrides_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default = "default_depth")]
    pub max_depth: usize,
    /// Defaults to the image file name.
    #[serde(default)]
    pub firmware_id: Option<String>,
}

fn default_depth() -> usize {
    DEFAULT_MAX_DEPTH
}

impl PipelineConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<PipelineConfig, PipelineError> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::new(Stage::Config, e))?;
        for p in [
            &mut cfg.image_path,
            &mut cfg.signature_db_path,
            &mut cfg.cve_db_path,
            &mut cfg.requirements_path,
            &mut cfg.mapping_path,
            &mut cfg.output_dir,
        ] {
            *p = base_dir.join(&*p);
        }
        if let Some(p) = &mut cfg.context_overrides_path {
            *p = base_dir.join(&*p);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<PipelineConfig, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::new(Stage::Config, format!("{}: {}", path.display(), e)))?;
        PipelineConfig::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Every input path must exist before a run starts.
    pub fn check_inputs(&self) -> Result<(), PipelineError> {
        let mut inputs = vec![
            ("image_path", &self.image_path),
            ("signature_db_path", &self.signature_db_path),
            ("cve_db_path", &self.cve_db_path),
            ("requirements_path", &self.requirements_path),
            ("mapping_path", &self.mapping_path),
        ];
        if let Some(p) = &self.context_overrides_path {
            inputs.push(("context_overrides_path", p));
        }
        for (name, p) in inputs {
            if !p.exists() {
                return Err(PipelineError::new(
                    Stage::Config,
                    format!("{} {} does not exist", name, p.display()),
                ));
            }
        }
        if self.max_depth == 0 {
            return Err(PipelineError::new(Stage::Config, "max_depth must be at least 1"));
        }
        Ok(())
    }

    pub fn firmware_id(&self) -> String {
        self.firmware_id.clone().unwrap_or_else(|| {
            self.image_path
                .file_name()
                .map_or_else(|| "firmware".to_string(), |n| n.to_string_lossy().into_owned())
        })
    }

    pub fn cdt_path(&self) -> PathBuf {
        self.output_dir.join("cdt.json")
    }

    pub fn report_path(&self) -> PathBuf {
        self.output_dir.join("report.csv")
    }

    pub fn extracted_dir(&self) -> PathBuf {
        self.output_dir.join("extracted")
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.output_dir.join("binscan-cache")
    }

    pub fn state_path(&self) -> PathBuf {
        self.output_dir.join("state.json")
    }

    pub fn stage_log_path(&self) -> PathBuf {
        self.output_dir.join("stages.log")
    }
}
