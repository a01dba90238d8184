//! The CSV verification report.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::requirements::RequirementVerdict;
use super::Finding;
use crate::model::CyberDigitalTwin;

pub const REPORT_COLUMNS: [&str; 12] = [
    "firmware_id",
    "finding_id",
    "finding_kind",
    "component",
    "version",
    "cve_id",
    "cwe_id",
    "severity",
    "applicability",
    "validation",
    "requirement_ids",
    "requirement_status",
];

/// `finding_kind` of the per-requirement summary rows.
pub const SUMMARY_KIND: &str = "requirement";
/// `requirement_status` of applicable findings that retrace nowhere.
pub const UNMAPPED: &str = "unmapped";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write report {path}: {message}")]
    Write { path: String, message: String },
    #[error("report schema mismatch: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ReportRow {
    pub firmware_id: String,
    pub finding_id: String,
    pub finding_kind: String,
    pub component: String,
    pub version: String,
    pub cve_id: String,
    pub cwe_id: String,
    pub severity: String,
    pub applicability: String,
    pub validation: String,
    pub requirement_ids: String,
    pub requirement_status: String,
}

impl ReportRow {
    pub fn is_summary(&self) -> bool {
        self.finding_kind == SUMMARY_KIND
    }
}

/// Finding rows in a stable order, then one summary row per requirement.
pub fn report_rows(cdt: &CyberDigitalTwin, findings: &[Finding], verdicts: &[RequirementVerdict]) -> Vec<ReportRow> {
    let mut reqs_of: BTreeMap<&str, Vec<&RequirementVerdict>> = BTreeMap::new();
    for v in verdicts {
        for id in &v.retraced_findings {
            reqs_of.entry(id.as_str()).or_default().push(v);
        }
    }

    let mut ordered: Vec<&Finding> = findings.iter().collect();
    ordered.sort_by(|a, b| {
        (a.kind, &a.component, &a.version, &a.cve_id, &a.cwe_ids, &a.finding_id).cmp(&(
            b.kind,
            &b.component,
            &b.version,
            &b.cve_id,
            &b.cwe_ids,
            &b.finding_id,
        ))
    });

    let mut rows: Vec<ReportRow> = ordered
        .into_iter()
        .map(|f| {
            let (requirement_ids, requirement_status) = if !f.is_applicable() {
                (String::new(), String::new())
            } else {
                match reqs_of.get(f.finding_id.as_str()) {
                    None => (String::new(), UNMAPPED.to_string()),
                    Some(vs) => {
                        let mut ids: Vec<&str> = vs.iter().map(|v| v.req_id.as_str()).collect();
                        ids.sort();
                        ids.dedup();
                        let mut statuses: Vec<&str> = vs.iter().map(|v| v.status.as_str()).collect();
                        statuses.sort();
                        statuses.dedup();
                        (ids.join(";"), statuses.join(";"))
                    }
                }
            };
            ReportRow {
                firmware_id: cdt.firmware_id.clone(),
                finding_id: f.finding_id.clone(),
                finding_kind: f.kind.as_str().to_string(),
                component: f.component.clone(),
                version: f.version.clone(),
                cve_id: f.cve_id.clone(),
                cwe_id: f.cwe_ids.join(";"),
                severity: f.severity.as_str().to_string(),
                applicability: f.applicability.as_str().to_string(),
                validation: f.validation.clone(),
                requirement_ids,
                requirement_status,
            }
        })
        .collect();

    let mut summaries: Vec<&RequirementVerdict> = verdicts.iter().collect();
    summaries.sort_by(|a, b| a.req_id.cmp(&b.req_id));
    rows.extend(summaries.into_iter().map(|v| ReportRow {
        firmware_id: cdt.firmware_id.clone(),
        finding_kind: SUMMARY_KIND.to_string(),
        requirement_ids: v.req_id.clone(),
        requirement_status: v.status.as_str().to_string(),
        ..ReportRow::default()
    }));
    rows
}

pub fn write_rows(rows: &[ReportRow]) -> String {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(REPORT_COLUMNS).expect("in-memory write");
    for row in rows {
        w.serialize(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("rows are UTF-8")
}

pub fn render_report(cdt: &CyberDigitalTwin, findings: &[Finding], verdicts: &[RequirementVerdict]) -> String {
    write_rows(&report_rows(cdt, findings, verdicts))
}

pub fn emit_report(
    cdt: &CyberDigitalTwin,
    findings: &[Finding],
    verdicts: &[RequirementVerdict],
    dest: &Path,
) -> Result<(), ReportError> {
    std::fs::write(dest, render_report(cdt, findings, verdicts)).map_err(|e| ReportError::Write {
        path: dest.display().to_string(),
        message: e.to_string(),
    })
}

pub fn parse_report(text: &str) -> Result<Vec<ReportRow>, ReportError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| ReportError::Schema(e.to_string()))?;
    if headers.iter().ne(REPORT_COLUMNS) {
        return Err(ReportError::Schema(format!(
            "expected columns {}, found {}",
            REPORT_COLUMNS.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    rdr.deserialize()
        .map(|r| r.map_err(|e| ReportError::Schema(e.to_string())))
        .collect()
}
