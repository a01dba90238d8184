//! License detection from signature metadata and license-file fingerprints.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use log::warn;

use super::signature::Signature;
use crate::extractor::FileNode;
use crate::model::SbomEntry;

const BUILTIN_FINGERPRINTS: &str = include_str!("../../data/license_fingerprints.tsv");

/// Largest license file read for fingerprinting.
const MAX_LICENSE_FILE: u64 = 1 << 20;

fn normalize_text(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// A phrase to SPDX id table.
#[derive(Debug, Clone)]
pub struct LicenseFingerprints {
    entries: Vec<(String, String)>,
}

impl LicenseFingerprints {
    pub fn builtin() -> LicenseFingerprints {
        LicenseFingerprints::parse(BUILTIN_FINGERPRINTS).expect("builtin table is well formed")
    }

    /// Parse `id<TAB>phrase` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<LicenseFingerprints, String> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (id, phrase) = line
                .split_once('\t')
                .ok_or_else(|| format!("line {}: expected <id><TAB><phrase>", i + 1))?;
            let phrase = normalize_text(phrase);
            if id.trim().is_empty() || phrase.is_empty() {
                return Err(format!("line {}: empty id or phrase", i + 1));
            }
            entries.push((id.trim().to_string(), phrase));
        }
        Ok(LicenseFingerprints { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// License ids whose phrase occurs in `text`, in table order.
    ///
    /// A phrase ending in a version number only matches when the number is
    /// not continued, so "Version 2" does not fire on "Version 2.1".
    pub fn identify(&self, text: &str) -> Vec<String> {
        let haystack = normalize_text(text);
        self.entries
            .iter()
            .filter(|(_, phrase)| phrase_occurs(&haystack, phrase))
            .map(|(id, _)| id.clone())
            .collect()
    }
}

fn phrase_occurs(haystack: &str, phrase: &str) -> bool {
    let ends_in_digit = phrase.ends_with(|c: char| c.is_ascii_digit());
    haystack.match_indices(phrase).any(|(at, _)| {
        if !ends_in_digit {
            return true;
        }
        let rest = haystack[at + phrase.len()..].as_bytes();
        match rest {
            [d, ..] if d.is_ascii_digit() => false,
            [b'.', d, ..] if d.is_ascii_digit() => false,
            _ => true,
        }
    })
}

fn is_license_file(name: &str) -> bool {
    let upper = name.to_ascii_uppercase();
    ["LICENSE", "LICENCE", "COPYING"]
        .iter()
        .any(|stem| upper == *stem || upper.starts_with(&format!("{}.", stem)) || upper.starts_with(&format!("{}-", stem)))
}

fn parent_dir(path: &str) -> Option<&str> {
    path.rsplit_once('/').map(|(p, _)| p)
}

/// Populate `licenses` on each entry.
///
/// Licenses come from the signature declaring the component, plus any
/// fingerprint match in a LICENSE/LICENCE/COPYING file located in the
/// directory of an evidence path or in its parent.
pub fn analyze_licenses(
    root: &Path,
    sbom: Vec<SbomEntry>,
    nodes: &[FileNode],
    signatures: &[Signature],
    fingerprints: &LicenseFingerprints,
) -> Vec<SbomEntry> {
    let mut license_files: BTreeMap<&str, Vec<&FileNode>> = BTreeMap::new();
    for node in nodes.iter().filter(|n| n.is_regular() && is_license_file(n.file_name())) {
        license_files.entry(node.parent()).or_default().push(node);
    }
    let mut file_ids: BTreeMap<&str, Vec<String>> = BTreeMap::new();

    sbom.into_iter()
        .map(|mut entry| {
            for sig in signatures.iter().filter(|s| s.same_component(&entry.vendor, &entry.product)) {
                entry.licenses.extend(sig.licenses.iter().cloned());
            }
            let mut dirs: Vec<&str> = Vec::new();
            for ev in &entry.evidence {
                let dir = parent_dir(&ev.matched_path).unwrap_or("");
                dirs.push(dir);
                if !dir.is_empty() {
                    dirs.push(parent_dir(dir).unwrap_or(""));
                }
            }
            dirs.sort_unstable();
            dirs.dedup();
            for dir in dirs {
                let Some((&dir_key, files)) = license_files.get_key_value(dir) else {
                    continue;
                };
                let ids = file_ids.entry(dir_key).or_insert_with(|| {
                    let mut ids = Vec::new();
                    for file in files {
                        if file.size_bytes > MAX_LICENSE_FILE {
                            continue;
                        }
                        match fs::read(root.join(&file.path)) {
                            Ok(bytes) => ids.extend(fingerprints.identify(&String::from_utf8_lossy(&bytes))),
                            Err(e) => warn!("cannot read {}: {}", file.path, e),
                        }
                    }
                    ids
                });
                entry.licenses.extend(ids.iter().cloned());
            }
            entry.normalize();
            entry
        })
        .collect()
}
