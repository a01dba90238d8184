//! Differences between two verification reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::verifier::{parse_report, ReportError, ReportRow};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StatusChange {
    pub req_id: String,
    pub old: String,
    pub new: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportDiff {
    pub added: Vec<String>,
    pub removed: Vec<String>,
    pub status_changes: Vec<StatusChange>,
}

impl ReportDiff {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty() && self.status_changes.is_empty()
    }
}

fn index(rows: &[ReportRow]) -> (BTreeMap<&str, &ReportRow>, BTreeMap<&str, &str>) {
    let mut findings = BTreeMap::new();
    let mut summaries = BTreeMap::new();
    for r in rows {
        if r.is_summary() {
            summaries.insert(r.requirement_ids.as_str(), r.requirement_status.as_str());
        } else {
            findings.insert(r.finding_id.as_str(), r);
        }
    }
    (findings, summaries)
}

/// Finding rows are keyed by finding id, summary rows by requirement id.
/// Requirements present in only one report are not status changes.
pub fn diff_rows(old: &[ReportRow], new: &[ReportRow]) -> ReportDiff {
    let (old_f, old_s) = index(old);
    let (new_f, new_s) = index(new);
    ReportDiff {
        added: new_f.keys().filter(|k| !old_f.contains_key(*k)).map(|k| k.to_string()).collect(),
        removed: old_f.keys().filter(|k| !new_f.contains_key(*k)).map(|k| k.to_string()).collect(),
        status_changes: new_s
            .iter()
            .filter_map(|(req, new)| {
                let old = old_s.get(req)?;
                (old != new).then(|| StatusChange {
                    req_id: req.to_string(),
                    old: old.to_string(),
                    new: new.to_string(),
                })
            })
            .collect(),
    }
}

pub fn diff_reports(old: &str, new: &str) -> Result<ReportDiff, ReportError> {
    Ok(diff_rows(&parse_report(old)?, &parse_report(new)?))
}
