//! The offline CVE feed: a JSON array of records.
//!
//! ```json
//! [{"cve_id": "CVE-2020-11656", "description": "...", "cwe_ids": ["CWE-416"],
//!   "cvss": 9.8, "affected": [{"vendor": "sqlite", "product": "sqlite",
//!   "version_end_excl": "3.32.0"}], "context": {}, "fixed_in": "3.32.0"}]
//! ```
//!
//! `severity` may be given; it must then agree with the band of `cvss`.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CpuArch, OsFamily, Severity};
use crate::version::{Version, UNKNOWN_VERSION};

#[derive(Debug, Error)]
pub enum CveDbError {
    #[error("cannot read CVE feed {path}: {message}")]
    Io { path: String, message: String },
    #[error("CVE feed is not a JSON array of records: {0}")]
    Parse(String),
    #[error("CVE record {record}: {message}")]
    Malformed { record: String, message: String },
    #[error("duplicate cve_id {0}")]
    Duplicate(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffectedRange {
    pub vendor: String,
    pub product: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version_exact: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version_start_incl: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version_end_excl: Option<String>,
}

impl AffectedRange {
    pub fn is_unbounded(&self) -> bool {
        self.version_exact.is_none() && self.version_start_incl.is_none() && self.version_end_excl.is_none()
    }

    /// Whether `version` falls in this range. Unknown or unparseable
    /// versions only match an unbounded range.
    pub fn contains(&self, version: &str) -> bool {
        if self.is_unbounded() {
            return true;
        }
        if version == UNKNOWN_VERSION {
            return false;
        }
        let Ok(v) = Version::parse(version) else {
            return false;
        };
        let parse = |s: &Option<String>| s.as_deref().map(Version::parse);
        if let Some(Ok(exact)) = parse(&self.version_exact) {
            return v == exact;
        }
        if let Some(Ok(start)) = parse(&self.version_start_incl) {
            if v < start {
                return false;
            }
        }
        if let Some(Ok(end)) = parse(&self.version_end_excl) {
            if v >= end {
                return false;
            }
        }
        true
    }
}

/// Applicability constraints. Absent or empty fields do not constrain.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextConstraints {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub os_families: Option<BTreeSet<OsFamily>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpu_archs: Option<BTreeSet<CpuArch>>,
    /// `key=value` pairs, or a bare `key` that only has to be present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub required_kernel_flags: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description_keywords_exclude: Option<Vec<String>>,
}

impl ContextConstraints {
    pub fn is_empty(&self) -> bool {
        self.os_families.as_ref().is_none_or(BTreeSet::is_empty)
            && self.cpu_archs.as_ref().is_none_or(BTreeSet::is_empty)
            && self.required_kernel_flags.as_ref().is_none_or(Vec::is_empty)
            && self.description_keywords_exclude.as_ref().is_none_or(Vec::is_empty)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CveRecord {
    pub cve_id: String,
    pub description: String,
    pub cwe_ids: Vec<String>,
    pub cvss: f64,
    pub severity: Severity,
    pub affected: Vec<AffectedRange>,
    #[serde(default)]
    pub context: ContextConstraints,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_in: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    cve_id: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    cwe_ids: Vec<String>,
    cvss: f64,
    #[serde(default)]
    severity: Option<Severity>,
    affected: Vec<AffectedRange>,
    #[serde(default)]
    context: ContextConstraints,
    #[serde(default)]
    fixed_in: Option<String>,
}

fn cve_id_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^CVE-\d{4}-\d{4,}$").expect("static regex"))
}

fn cwe_id_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^CWE-\d+$").expect("static regex"))
}

pub fn is_cwe_id(s: &str) -> bool {
    cwe_id_regex().is_match(s)
}

fn validate_range(r: &AffectedRange) -> Result<(), String> {
    if r.vendor.trim().is_empty() || r.product.trim().is_empty() {
        return Err("affected vendor and product must be nonempty".into());
    }
    let parse = |field: &str, s: &Option<String>| -> Result<Option<Version>, String> {
        s.as_deref()
            .map(|v| Version::parse(v).map_err(|e| format!("{}: {}", field, e)))
            .transpose()
    };
    let exact = parse("version_exact", &r.version_exact)?;
    let start = parse("version_start_incl", &r.version_start_incl)?;
    let end = parse("version_end_excl", &r.version_end_excl)?;
    if exact.is_some() && (start.is_some() || end.is_some()) {
        return Err("version_exact cannot be combined with range bounds".into());
    }
    if let (Some(s), Some(e)) = (&start, &end) {
        if s >= e {
            return Err(format!("range start {} is not below end {}", s, e));
        }
    }
    Ok(())
}

fn validate(raw: RawRecord) -> Result<CveRecord, String> {
    if !cve_id_regex().is_match(&raw.cve_id) {
        return Err(format!("cve_id {:?} is not of the form CVE-YYYY-NNNN", raw.cve_id));
    }
    if let Some(bad) = raw.cwe_ids.iter().find(|c| !is_cwe_id(c)) {
        return Err(format!("cwe id {:?} is not of the form CWE-N", bad));
    }
    if !(0.0..=10.0).contains(&raw.cvss) {
        return Err(format!("cvss {} outside 0.0-10.0", raw.cvss));
    }
    let severity = Severity::from_cvss(raw.cvss);
    if let Some(given) = raw.severity {
        if given != severity {
            return Err(format!("severity {} disagrees with cvss {} ({})", given, raw.cvss, severity));
        }
    }
    if raw.affected.is_empty() {
        return Err("affected must be nonempty".into());
    }
    for r in &raw.affected {
        validate_range(r)?;
    }
    if let Some(f) = &raw.fixed_in {
        Version::parse(f).map_err(|e| format!("fixed_in: {}", e))?;
    }
    Ok(CveRecord {
        cve_id: raw.cve_id,
        description: raw.description,
        cwe_ids: raw.cwe_ids,
        cvss: raw.cvss,
        severity,
        affected: raw.affected,
        context: raw.context,
        fixed_in: raw.fixed_in,
    })
}

/// Parse and validate a feed.
pub fn parse_cve_db(text: &str) -> Result<Vec<CveRecord>, CveDbError> {
    let values: Vec<serde_json::Value> = serde_json::from_str(text).map_err(|e| CveDbError::Parse(e.to_string()))?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(values.len());
    for (index, value) in values.into_iter().enumerate() {
        let label = value
            .get("cve_id")
            .and_then(|v| v.as_str())
            .map_or_else(|| format!("#{}", index), str::to_string);
        let malformed = |message: String| CveDbError::Malformed {
            record: label.clone(),
            message,
        };
        let raw: RawRecord = serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;
        let record = validate(raw).map_err(malformed)?;
        if !seen.insert(record.cve_id.clone()) {
            return Err(CveDbError::Duplicate(record.cve_id));
        }
        out.push(record);
    }
    Ok(out)
}

pub fn load_cve_db(path: &Path) -> Result<Vec<CveRecord>, CveDbError> {
    let text = std::fs::read_to_string(path).map_err(|e| CveDbError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_cve_db(&text)
}
