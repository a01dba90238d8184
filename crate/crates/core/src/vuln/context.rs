//! Context filtering of matched CVEs.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::feed::{ContextConstraints, CveDbError, CveRecord};
use super::{Applicability, KnownFinding};
use crate::model::CyberDigitalTwin;

/// Extra constraints per CVE id; the key `*` applies to every CVE.
pub type ContextOverrides = BTreeMap<String, ContextConstraints>;

pub const OVERRIDE_ALL: &str = "*";

pub fn parse_context_overrides(text: &str) -> Result<ContextOverrides, CveDbError> {
    serde_json::from_str(text).map_err(|e| CveDbError::Parse(format!("context overrides: {}", e)))
}

pub fn load_context_overrides(path: &Path) -> Result<ContextOverrides, CveDbError> {
    let text = std::fs::read_to_string(path).map_err(|e| CveDbError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_context_overrides(&text)
}

/// The first constraint `cdt` fails, described for the report.
pub fn failed_constraint(c: &ContextConstraints, cdt: &CyberDigitalTwin, description: &str) -> Option<String> {
    if let Some(families) = c.os_families.as_ref().filter(|s| !s.is_empty()) {
        if !families.contains(&cdt.os_info.family) {
            return Some("os family".into());
        }
    }
    if let Some(archs) = c.cpu_archs.as_ref().filter(|s| !s.is_empty()) {
        if !archs.contains(&cdt.hw_bom.cpu_arch) {
            return Some("cpu arch".into());
        }
    }
    for flag in c.required_kernel_flags.iter().flatten() {
        let ok = match flag.split_once('=') {
            Some((k, v)) => cdt.kernel_config.get(k.trim()).is_some_and(|have| have.trim() == v.trim()),
            None => cdt.kernel_config.contains_key(flag.trim()),
        };
        if !ok {
            return Some(format!("kernel flag {}", flag));
        }
    }
    let lowered = description.to_lowercase();
    for word in c.description_keywords_exclude.iter().flatten() {
        if !word.is_empty() && lowered.contains(&word.to_lowercase()) {
            return Some(format!("description keyword {}", word));
        }
    }
    None
}

/// Mark findings whose CVE does not apply to `cdt` as filtered out.
///
/// The record's own constraints are checked first, then any override for
/// its id, then the `*` override. Findings are never added or removed.
pub fn filter_by_context(
    findings: Vec<KnownFinding>,
    cdt: &CyberDigitalTwin,
    db: &[CveRecord],
    overrides: Option<&ContextOverrides>,
) -> Vec<KnownFinding> {
    let by_id: HashMap<&str, &CveRecord> = db.iter().map(|r| (r.cve_id.as_str(), r)).collect();
    findings
        .into_iter()
        .map(|mut f| {
            if f.applicability != Applicability::Applicable {
                return f;
            }
            let Some(rec) = by_id.get(f.cve_id.as_str()) else {
                return f;
            };
            let extra = overrides
                .into_iter()
                .flat_map(|o| [o.get(&rec.cve_id), o.get(OVERRIDE_ALL)])
                .flatten();
            let reason = std::iter::once(&rec.context)
                .chain(extra)
                .find_map(|c| failed_constraint(c, cdt, &rec.description));
            if let Some(reason) = reason {
                f.applicability = Applicability::FilteredOut;
                f.filter_reason = Some(reason);
            }
            f
        })
        .collect()
}
