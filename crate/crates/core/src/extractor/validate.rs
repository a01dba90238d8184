//! Post-extraction sanity checks.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{path_has_suffix, FileNode, NodeKind, EXTRACTED_SUFFIX};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub digest: String,
    pub path: String,
}

/// Parse `<hex-digest> <path>` lines. Blank lines and `#` comments are skipped.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>, String> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (digest, path) = line
            .split_once(' ')
            .ok_or_else(|| format!("line {}: expected `<digest> <path>`", lineno + 1))?;
        if digest.is_empty() || !digest.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(format!("line {}: digest is not hex", lineno + 1));
        }
        if path.is_empty() {
            return Err(format!("line {}: empty path", lineno + 1));
        }
        out.push(ManifestEntry {
            digest: digest.to_ascii_lowercase(),
            path: path.to_string(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const CHECK_PAYLOAD: &str = "nonzero_regular_files";
pub const CHECK_CONTAINMENT: &str = "paths_contained";
pub const CHECK_MANIFEST: &str = "manifest_match";

fn escapes(path: &str) -> bool {
    path.is_empty()
        || path.starts_with('/')
        || path.contains('\\')
        || path.split('/').any(|p| p == ".." || p.is_empty())
}

/// Check an extraction result against heuristics and an optional manifest.
///
/// Payload files are regular files that were not themselves expanded as
/// containers. Manifest paths match a node when equal to it or equal to a
/// trailing run of its path components, so `/etc/passwd` matches
/// `fw.tar.extracted/etc/passwd`.
pub fn validate_extraction(nodes: &[FileNode], manifest: Option<&[ManifestEntry]>) -> ValidationReport {
    let mut checks = Vec::new();

    let expanded: Vec<&str> = nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Directory)
        .filter_map(|n| n.path.strip_suffix(EXTRACTED_SUFFIX))
        .collect();
    let payload = nodes
        .iter()
        .filter(|n| n.is_regular() && !expanded.contains(&n.path.as_str()))
        .count();
    checks.push(CheckResult {
        name: CHECK_PAYLOAD.into(),
        passed: payload > 0,
        detail: format!("{} payload files", payload),
    });

    let escaping: Vec<&str> = nodes.iter().map(|n| n.path.as_str()).filter(|p| escapes(p)).collect();
    checks.push(CheckResult {
        name: CHECK_CONTAINMENT.into(),
        passed: escaping.is_empty(),
        detail: if escaping.is_empty() {
            "all paths relative and contained".into()
        } else {
            format!("escaping paths: {}", escaping.join(", "))
        },
    });

    if let Some(manifest) = manifest {
        let mut by_suffix: HashMap<&str, Vec<&FileNode>> = HashMap::new();
        for node in nodes.iter().filter(|n| n.is_regular()) {
            by_suffix.entry(node.file_name()).or_default().push(node);
        }
        let mut problems = Vec::new();
        for entry in manifest {
            let wanted = entry.path.trim_start_matches('/');
            let name = wanted.rsplit('/').next().unwrap_or(wanted);
            let candidates: Vec<&&FileNode> = by_suffix
                .get(name)
                .map(|v| v.iter().filter(|n| path_has_suffix(&n.path, wanted)).collect())
                .unwrap_or_default();
            if candidates.is_empty() {
                problems.push(format!("missing {}", entry.path));
            } else if !candidates
                .iter()
                .any(|n| n.content_digest.as_deref() == Some(entry.digest.as_str()))
            {
                problems.push(format!("digest mismatch {}", entry.path));
            }
        }
        checks.push(CheckResult {
            name: CHECK_MANIFEST.into(),
            passed: problems.is_empty(),
            detail: if problems.is_empty() {
                format!("{} manifest entries matched", manifest.len())
            } else {
                problems.join("; ")
            },
        });
    }
    ValidationReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::digest::sha256_hex;
    use crate::extractor::pack::{pack_tar, PackEntry};
    use crate::extractor::extract_recursive;

    fn file(path: &str, content: &[u8]) -> FileNode {
        FileNode {
            path: path.into(),
            kind: NodeKind::Regular,
            content_digest: Some(sha256_hex(content)),
            size_bytes: content.len() as u64,
        }
    }

    #[test]
    fn exact_manifest_passes() {
        let nodes = vec![file("etc/passwd", b"root:x"), file("bin/sh", b"sh")];
        let manifest = parse_manifest(&format!(
            "{} /etc/passwd\n{} bin/sh\n",
            sha256_hex(b"root:x"),
            sha256_hex(b"sh")
        ))
        .unwrap();
        let report = validate_extraction(&nodes, Some(&manifest));
        assert!(report.all_passed(), "{report:?}");
    }

    #[test]
    fn missing_manifest_path_is_named() {
        let nodes = vec![file("bin/sh", b"sh")];
        let manifest = vec![ManifestEntry {
            digest: sha256_hex(b"root:x"),
            path: "/etc/passwd".into(),
        }];
        let report = validate_extraction(&nodes, Some(&manifest));
        let check = report.check(CHECK_MANIFEST).unwrap();
        assert!(!check.passed);
        assert!(check.detail.contains("/etc/passwd"));
        assert!(report.check(CHECK_PAYLOAD).unwrap().passed);
    }

    #[test]
    fn digest_mismatch_fails() {
        let nodes = vec![file("fw.tar.extracted/etc/passwd", b"root:x")];
        let manifest = vec![ManifestEntry {
            digest: sha256_hex(b"other"),
            path: "etc/passwd".into(),
        }];
        assert!(!validate_extraction(&nodes, Some(&manifest)).all_passed());
    }

    #[test]
    fn archive_of_empty_dirs_has_no_payload() {
        let dir = tempfile::tempdir().unwrap();
        let tar = pack_tar(&[PackEntry::dir("etc"), PackEntry::dir("usr/lib")]).unwrap();
        let image = dir.path().join("fw.tar");
        std::fs::write(&image, tar).unwrap();
        let out = extract_recursive(&image, &dir.path().join("out"), 8).unwrap();
        let report = validate_extraction(&out.nodes, None);
        assert!(!report.check(CHECK_PAYLOAD).unwrap().passed);
        assert!(report.check(CHECK_CONTAINMENT).unwrap().passed);
        assert!(report.check(CHECK_MANIFEST).is_none());
    }

    #[test]
    fn escaping_paths_fail() {
        let nodes = vec![file("../x", b"a"), file("/abs", b"b")];
        assert!(!validate_extraction(&nodes, None).check(CHECK_CONTAINMENT).unwrap().passed);
    }

    #[test]
    fn manifest_parse_errors() {
        assert!(parse_manifest("nohexhere\n").is_err());
        assert!(parse_manifest("zz path\n").is_err());
        assert_eq!(parse_manifest("# c\n\nab x\n").unwrap().len(), 1);
    }
}
