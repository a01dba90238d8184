//! Security requirements, CWE mappings, retracing and verdicts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Finding, FindingKind};

#[derive(Debug, Error)]
pub enum RequirementError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("requirements: {0}")]
    Requirements(String),
    #[error("mapping line {line}: {message}")]
    Mapping { line: usize, message: String },
}

fn read(path: &Path) -> Result<String, RequirementError> {
    std::fs::read_to_string(path).map_err(|e| RequirementError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Requirement {
    pub req_id: String,
    pub title: String,
    #[serde(default)]
    pub source: String,
    #[serde(default)]
    pub policy_check_ids: Vec<String>,
}

/// Parse a JSON array of requirement records. Ids must be unique.
pub fn parse_requirements(text: &str) -> Result<Vec<Requirement>, RequirementError> {
    let reqs: Vec<Requirement> =
        serde_json::from_str(text).map_err(|e| RequirementError::Requirements(e.to_string()))?;
    let mut seen = BTreeSet::new();
    for r in &reqs {
        if r.req_id.trim().is_empty() {
            return Err(RequirementError::Requirements("empty req_id".into()));
        }
        if !seen.insert(r.req_id.as_str()) {
            return Err(RequirementError::Requirements(format!("duplicate req_id {}", r.req_id)));
        }
    }
    Ok(reqs)
}

pub fn load_requirements(path: &Path) -> Result<Vec<Requirement>, RequirementError> {
    parse_requirements(&read(path)?)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CweMapping {
    pub cwe_id: String,
    pub req_id: String,
}

/// Parse a `cwe_id,req_id` CSV with header. Repeated pairs are rejected.
pub fn parse_mappings(text: &str) -> Result<Vec<CweMapping>, RequirementError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| RequirementError::Mapping {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != ["cwe_id", "req_id"] {
        return Err(RequirementError::Mapping {
            line: 1,
            message: format!("expected header cwe_id,req_id, found {}", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for rec in rdr.deserialize::<CweMapping>() {
        let m = rec.map_err(|e| RequirementError::Mapping {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = out.len() + 2;
        if !crate::vuln::feed::is_cwe_id(&m.cwe_id) {
            return Err(RequirementError::Mapping {
                line,
                message: format!("{:?} is not a CWE id", m.cwe_id),
            });
        }
        if m.req_id.is_empty() {
            return Err(RequirementError::Mapping {
                line,
                message: "empty req_id".into(),
            });
        }
        if !seen.insert(m.clone()) {
            return Err(RequirementError::Mapping {
                line,
                message: format!("duplicate pair {},{}", m.cwe_id, m.req_id),
            });
        }
        out.push(m);
    }
    Ok(out)
}

pub fn load_mappings(path: &Path) -> Result<Vec<CweMapping>, RequirementError> {
    parse_mappings(&read(path)?)
}

/// Findings grouped by the requirements their CWE ids map to.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Retrace {
    /// Every mapped requirement, possibly with no findings.
    pub by_requirement: BTreeMap<String, BTreeSet<String>>,
    /// Applicable findings whose CWE ids map nowhere.
    pub unmapped: BTreeSet<String>,
}

/// Retrace applicable findings to requirements by CWE id. Filtered-out
/// findings are ignored.
pub fn retrace(findings: &[Finding], mappings: &[CweMapping]) -> Retrace {
    let mut by_cwe: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut out = Retrace::default();
    for m in mappings {
        by_cwe.entry(m.cwe_id.as_str()).or_default().push(&m.req_id);
        out.by_requirement.entry(m.req_id.clone()).or_default();
    }
    for f in findings.iter().filter(|f| f.is_applicable()) {
        let mut mapped = false;
        for req in f.cwe_ids.iter().filter_map(|c| by_cwe.get(c.as_str())).flatten() {
            mapped = true;
            out.by_requirement
                .get_mut(*req)
                .expect("every mapped requirement has an entry")
                .insert(f.finding_id.clone());
        }
        if !mapped {
            out.unmapped.insert(f.finding_id.clone());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequirementStatus {
    Fulfilled,
    Unfulfilled,
    NotEvaluated,
}

impl RequirementStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RequirementStatus::Fulfilled => "fulfilled",
            RequirementStatus::Unfulfilled => "unfulfilled",
            RequirementStatus::NotEvaluated => "not_evaluated",
        }
    }

    pub fn parse(s: &str) -> Option<RequirementStatus> {
        match s {
            "fulfilled" => Some(RequirementStatus::Fulfilled),
            "unfulfilled" => Some(RequirementStatus::Unfulfilled),
            "not_evaluated" => Some(RequirementStatus::NotEvaluated),
            _ => None,
        }
    }
}

impl fmt::Display for RequirementStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequirementVerdict {
    pub req_id: String,
    pub status: RequirementStatus,
    /// Sorted finding ids, including failed policy checks the requirement lists.
    pub retraced_findings: Vec<String>,
}

/// One verdict per requirement, sorted by id.
///
/// A requirement is unfulfilled when a finding retraces to it or one of its
/// policy checks failed, fulfilled when it is mapped or names a check, and
/// not evaluated otherwise.
pub fn verify_requirements(
    requirements: &[Requirement],
    retraced: &Retrace,
    policy_results: &[Finding],
) -> Vec<RequirementVerdict> {
    let mut out: Vec<RequirementVerdict> = requirements
        .iter()
        .map(|r| {
            let mapped = retraced.by_requirement.get(&r.req_id);
            let mut ids: BTreeSet<String> = mapped.cloned().unwrap_or_default();
            ids.extend(
                policy_results
                    .iter()
                    .filter(|p| p.kind == FindingKind::Policy && r.policy_check_ids.contains(&p.check_id))
                    .map(|p| p.finding_id.clone()),
            );
            let status = if !ids.is_empty() {
                RequirementStatus::Unfulfilled
            } else if mapped.is_some() || !r.policy_check_ids.is_empty() {
                RequirementStatus::Fulfilled
            } else {
                RequirementStatus::NotEvaluated
            };
            RequirementVerdict {
                req_id: r.req_id.clone(),
                status,
                retraced_findings: ids.into_iter().collect(),
            }
        })
        .collect();
    out.sort_by(|a, b| a.req_id.cmp(&b.req_id));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Severity;
    use crate::vuln::Applicability;
    use proptest::prelude::*;

    fn req(id: &str, checks: &[&str]) -> Requirement {
        Requirement {
            req_id: id.into(),
            title: id.into(),
            source: String::new(),
            policy_check_ids: checks.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn finding(id: &str, kind: FindingKind, cwe: &str, applicable: bool) -> Finding {
        Finding {
            finding_id: id.into(),
            kind,
            component: "c".into(),
            version: String::new(),
            cve_id: String::new(),
            cwe_ids: if cwe.is_empty() { vec![] } else { vec![cwe.into()] },
            severity: Severity::High,
            applicability: if applicable {
                Applicability::Applicable
            } else {
                Applicability::FilteredOut
            },
            validation: String::new(),
            check_id: if kind == FindingKind::Policy { "aslr".into() } else { String::new() },
        }
    }

    fn map(pairs: &[(&str, &str)]) -> Vec<CweMapping> {
        pairs
            .iter()
            .map(|(c, r)| CweMapping {
                cwe_id: c.to_string(),
                req_id: r.to_string(),
            })
            .collect()
    }

    #[test]
    fn uaf_retraces_to_hardening() {
        let f = [finding("a", FindingKind::Known, "CWE-416", true)];
        let r = retrace(&f, &map(&[("CWE-416", "REQ-HARD")]));
        assert_eq!(r.by_requirement["REQ-HARD"].iter().collect::<Vec<_>>(), vec!["a"]);
        let v = verify_requirements(&[req("REQ-HARD", &[])], &r, &[]);
        assert_eq!(v[0].status, RequirementStatus::Unfulfilled);
    }

    #[test]
    fn weak_random_retraces_to_privacy() {
        let f = [finding("w", FindingKind::Weakness, "CWE-338", true)];
        let r = retrace(&f, &map(&[("CWE-338", "REQ-PRIV"), ("CWE-416", "REQ-HARD")]));
        assert!(r.by_requirement["REQ-PRIV"].contains("w"));
        assert!(r.by_requirement["REQ-HARD"].is_empty());
    }

    #[test]
    fn verdict_cases() {
        let r = retrace(&[], &map(&[("CWE-416", "REQ-HARD")]));
        assert!(r.by_requirement.values().all(BTreeSet::is_empty));
        assert_eq!(retrace(&[], &[]), Retrace::default());
        let reqs = [req("REQ-Z", &[]), req("REQ-HARD", &[]), req("REQ-CFG", &["aslr"])];
        let v = verify_requirements(&reqs, &r, &[]);
        let got: Vec<_> = v.iter().map(|v| (v.req_id.as_str(), v.status)).collect();
        assert_eq!(
            got,
            vec![
                ("REQ-CFG", RequirementStatus::Fulfilled),
                ("REQ-HARD", RequirementStatus::Fulfilled),
                ("REQ-Z", RequirementStatus::NotEvaluated)
            ]
        );
        let p = finding("p", FindingKind::Policy, "", true);
        let v = verify_requirements(&reqs, &r, &[p]);
        assert_eq!(v[0].status, RequirementStatus::Unfulfilled);
        assert_eq!(v[0].retraced_findings, vec!["p"]);
    }

    #[test]
    fn filtered_and_unmapped() {
        let f = [
            finding("gone", FindingKind::Known, "CWE-416", false),
            finding("lost", FindingKind::Known, "CWE-79", true),
        ];
        let r = retrace(&f, &map(&[("CWE-416", "REQ-HARD")]));
        assert!(r.by_requirement["REQ-HARD"].is_empty());
        assert_eq!(r.unmapped.iter().collect::<Vec<_>>(), vec!["lost"]);
        let v = verify_requirements(&[req("REQ-HARD", &[])], &r, &[]);
        assert_eq!(v[0].status, RequirementStatus::Fulfilled);
    }

    #[test]
    fn parse_files() {
        let reqs = parse_requirements(
            r#"[{"req_id":"REQ-HARD","title":"System hardening","source":"UNECE WP.29 Annex 5","policy_check_ids":["aslr"]}]"#,
        )
        .unwrap();
        assert_eq!(reqs[0].policy_check_ids, vec!["aslr"]);
        assert!(parse_requirements(r#"[{"req_id":"A","title":"x"},{"req_id":"A","title":"y"}]"#).is_err());
        let m = parse_mappings("cwe_id,req_id\nCWE-416,REQ-HARD\nCWE-416, REQ-MEM\n").unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[1].req_id, "REQ-MEM");
        assert!(parse_mappings("cwe,req\nCWE-416,R\n").is_err());
        assert!(parse_mappings("cwe_id,req_id\n416,R\n").is_err());
        assert!(parse_mappings("cwe_id,req_id\nCWE-1,R\nCWE-1,R\n").is_err());
    }

    fn scenario() -> impl Strategy<Value = (Vec<(u8, u8, bool)>, Vec<(u8, u8)>)> {
        (
            prop::collection::vec((0u8..6, 0u8..3, any::<bool>()), 0..12),
            prop::collection::btree_set((0u8..6, 0u8..4), 0..10).prop_map(|s| s.into_iter().collect()),
        )
    }

    fn build(raw: &[(u8, u8, bool)], pairs: &[(u8, u8)]) -> (Vec<Finding>, Vec<CweMapping>, Vec<Requirement>) {
        let findings = raw
            .iter()
            .enumerate()
            .map(|(i, &(cwe, kind, ok))| {
                let kind = [FindingKind::Known, FindingKind::Weakness, FindingKind::Policy][kind as usize];
                finding(&format!("f{}", i), kind, &format!("CWE-{}", cwe), ok)
            })
            .collect();
        let maps = pairs
            .iter()
            .map(|&(c, r)| CweMapping {
                cwe_id: format!("CWE-{}", c),
                req_id: format!("R{}", r),
            })
            .collect();
        let reqs = (0..5).map(|r| req(&format!("R{}", r), if r == 4 { &["aslr"] } else { &[] })).collect();
        (findings, maps, reqs)
    }

    fn verdicts(f: &[Finding], m: &[CweMapping], r: &[Requirement]) -> BTreeMap<String, RequirementStatus> {
        let policy: Vec<Finding> = f.iter().filter(|x| x.kind == FindingKind::Policy && x.is_applicable()).cloned().collect();
        verify_requirements(r, &retrace(f, m), &policy)
            .into_iter()
            .map(|v| (v.req_id, v.status))
            .collect()
    }

    proptest! {
        #[test]
        fn adding_a_finding_never_fulfils((raw, pairs) in scenario(), extra in (0u8..6, 0u8..3, any::<bool>())) {
            let (f, m, r) = build(&raw, &pairs);
            let before = verdicts(&f, &m, &r);
            let mut raw2 = raw.clone();
            raw2.push(extra);
            let (f2, _, _) = build(&raw2, &pairs);
            let after = verdicts(&f2, &m, &r);
            for (id, s) in before {
                if s == RequirementStatus::Unfulfilled {
                    prop_assert_eq!(after[&id], RequirementStatus::Unfulfilled);
                }
            }
        }

        #[test]
        fn filtered_findings_never_matter((raw, pairs) in scenario()) {
            let (f, m, r) = build(&raw, &pairs);
            let kept: Vec<Finding> = f.iter().filter(|x| x.is_applicable()).cloned().collect();
            prop_assert_eq!(verdicts(&f, &m, &r), verdicts(&kept, &m, &r));
        }
    }
}
