//! Policy checks, CWE-based retracing to security requirements, and the
//! CSV verification report.

pub mod policy;
pub mod report;
pub mod requirements;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::binscan::WeaknessFinding;
use crate::digest::DigestBuilder;
use crate::model::Severity;
use crate::vuln::{Applicability, KnownFinding};

pub use policy::{check_policies, PolicyFinding};
pub use report::{emit_report, parse_report, render_report, ReportError, ReportRow, REPORT_COLUMNS};
pub use requirements::{
    load_mappings, load_requirements, parse_mappings, parse_requirements, retrace, verify_requirements, CweMapping,
    RequirementError, Requirement, RequirementStatus, RequirementVerdict, Retrace,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    Known,
    Weakness,
    Policy,
}

impl FindingKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FindingKind::Known => "known",
            FindingKind::Weakness => "weakness",
            FindingKind::Policy => "policy",
        }
    }
}

impl fmt::Display for FindingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A known, weakness or policy finding flattened into the report's shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub finding_id: String,
    pub kind: FindingKind,
    /// Component name, code artifact path or policy check id.
    pub component: String,
    pub version: String,
    pub cve_id: String,
    pub cwe_ids: Vec<String>,
    pub severity: Severity,
    pub applicability: Applicability,
    /// Empty for known and policy findings.
    pub validation: String,
    /// Policy check id, empty for other kinds.
    pub check_id: String,
}

/// Stable identifier of a finding: a truncated SHA-256 over its identity.
pub fn finding_id(kind: FindingKind, component: &str, version: &str, class_id: &str, site: &str) -> String {
    let mut d = DigestBuilder::new();
    d.part(kind.as_str().as_bytes())
        .part(component.as_bytes())
        .part(version.as_bytes())
        .part(class_id.as_bytes())
        .part(site.as_bytes());
    d.finish_hex()[..16].to_string()
}

impl Finding {
    pub fn known(k: &KnownFinding) -> Finding {
        let component = k.component.to_string();
        Finding {
            finding_id: finding_id(FindingKind::Known, &component, &k.component.version, &k.cve_id, ""),
            kind: FindingKind::Known,
            component,
            version: k.component.version.clone(),
            cve_id: k.cve_id.clone(),
            cwe_ids: k.cwe_ids.clone(),
            severity: k.severity,
            applicability: k.applicability,
            validation: String::new(),
            check_id: String::new(),
        }
    }

    /// A weakness found in the code artifact at `artifact`.
    pub fn weakness(artifact: &str, w: &WeaknessFinding) -> Finding {
        let site = format!("{}@{}", w.function, w.site);
        Finding {
            finding_id: finding_id(FindingKind::Weakness, artifact, "", &w.cwe_id, &site),
            kind: FindingKind::Weakness,
            component: artifact.to_string(),
            version: String::new(),
            cve_id: String::new(),
            cwe_ids: vec![w.cwe_id.clone()],
            severity: w.severity,
            applicability: Applicability::Applicable,
            validation: w.validation.as_str().to_string(),
            check_id: String::new(),
        }
    }

    pub fn policy(p: &PolicyFinding) -> Finding {
        let cwe = p.cwe_id.clone().unwrap_or_default();
        let site = format!("{} {}", p.evidence, p.description);
        Finding {
            finding_id: finding_id(FindingKind::Policy, &p.check_id, "", &cwe, &site),
            kind: FindingKind::Policy,
            component: p.check_id.clone(),
            version: String::new(),
            cve_id: String::new(),
            cwe_ids: p.cwe_id.iter().cloned().collect(),
            severity: p.severity,
            applicability: Applicability::Applicable,
            validation: String::new(),
            check_id: p.check_id.clone(),
        }
    }

    pub fn is_applicable(&self) -> bool {
        self.applicability == Applicability::Applicable
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_stable_and_distinct() {
        let a = finding_id(FindingKind::Known, "sqlite:sqlite", "3.31.1", "CVE-2020-11656", "");
        assert_eq!(a, finding_id(FindingKind::Known, "sqlite:sqlite", "3.31.1", "CVE-2020-11656", ""));
        assert_eq!(a.len(), 16);
        assert_ne!(a, finding_id(FindingKind::Known, "sqlite:sqlite", "3.31.1", "CVE-2020-13631", ""));
        assert_ne!(a, finding_id(FindingKind::Weakness, "sqlite:sqlite", "3.31.1", "CVE-2020-11656", ""));
    }
}
