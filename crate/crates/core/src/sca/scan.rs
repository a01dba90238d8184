//! Signature-based component detection over an extracted tree.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use regex::RegexSet;

use super::pkgdb::{is_status_file, parse_status};
use super::signature::CompiledSignature;
use crate::extractor::{FileNode, EXTRACTED_SUFFIX};
use crate::model::{Evidence, IndicatorKind, SbomEntry};
use crate::version::is_valid_version;

pub use crate::version::UNKNOWN_VERSION;

/// Regular files that were not themselves expanded as containers.
pub fn payload_nodes(nodes: &[FileNode]) -> Vec<&FileNode> {
    let expanded: HashSet<&str> = nodes
        .iter()
        .filter(|n| !n.is_regular())
        .filter_map(|n| n.path.strip_suffix(EXTRACTED_SUFFIX))
        .collect();
    nodes
        .iter()
        .filter(|n| n.is_regular() && !expanded.contains(n.path.as_str()))
        .collect()
}

/// Reduce binary content to its printable text.
///
/// Bytes outside printable ASCII (plus tab, CR, LF) are dropped and each run
/// of them becomes a single newline, so strings embedded in executables stay
/// contiguous while section padding and opcodes disappear.
pub fn printable_text(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len());
    let mut in_gap = false;
    for &b in bytes {
        if (0x20..=0x7e).contains(&b) || b == b'\t' || b == b'\n' || b == b'\r' {
            out.push(b as char);
            in_gap = false;
        } else if !in_gap {
            out.push('\n');
            in_gap = true;
        }
    }
    out
}

fn normalized_version(captured: Option<String>) -> String {
    match captured {
        Some(v) if is_valid_version(&v) => v,
        _ => UNKNOWN_VERSION.to_string(),
    }
}

type Hit = ((usize, String), Evidence);

fn scan_file(root: &Path, node: &FileNode, signatures: &[CompiledSignature], strings: &StringIndex) -> Vec<Hit> {
    let mut hits = Vec::new();
    let name = node.file_name();
    for (si, sig) in signatures.iter().enumerate() {
        for ind in &sig.indicators {
            let haystack = match ind.kind {
                IndicatorKind::Path => node.path.as_str(),
                IndicatorKind::Filename => name,
                _ => continue,
            };
            if let Some(v) = ind.match_version(haystack) {
                hits.push((
                    (si, normalized_version(v)),
                    Evidence {
                        indicator_kind: ind.kind,
                        matched_path: node.path.clone(),
                    },
                ));
            }
        }
    }

    let wants_content = !strings.targets.is_empty() || (strings.has_pkgdb && is_status_file(&node.path));
    if !wants_content {
        return hits;
    }
    let bytes = match fs::read(root.join(&node.path)) {
        Ok(b) => b,
        Err(e) => {
            warn!("cannot read {}: {}", node.path, e);
            return hits;
        }
    };

    if !strings.targets.is_empty() {
        let text = printable_text(&bytes);
        for set_idx in strings.set.matches(&text).into_iter() {
            let (si, ii) = strings.targets[set_idx];
            let ind = &signatures[si].indicators[ii];
            if let Some(v) = ind.match_version(&text) {
                hits.push((
                    (si, normalized_version(v)),
                    Evidence {
                        indicator_kind: IndicatorKind::UniqueString,
                        matched_path: node.path.clone(),
                    },
                ));
            }
        }
    }

    if strings.has_pkgdb && is_status_file(&node.path) {
        let (stanzas, _) = parse_status(&String::from_utf8_lossy(&bytes));
        for stanza in stanzas {
            for (si, sig) in signatures.iter().enumerate() {
                for ind in sig.indicators.iter().filter(|i| i.kind == IndicatorKind::Pkgdb) {
                    let Some(caps) = ind.regex.captures(&stanza.package) else {
                        continue;
                    };
                    let version = match ind.version_capture {
                        Some(g) => caps.get(g).map(|m| m.as_str().to_string()),
                        None => Some(stanza.version.clone()),
                    };
                    hits.push((
                        (si, normalized_version(version)),
                        Evidence {
                            indicator_kind: IndicatorKind::Pkgdb,
                            matched_path: node.path.clone(),
                        },
                    ));
                }
            }
        }
    }
    hits
}

struct StringIndex {
    set: RegexSet,
    /// (signature index, indicator index) per set pattern.
    targets: Vec<(usize, usize)>,
    has_pkgdb: bool,
}

impl StringIndex {
    fn new(signatures: &[CompiledSignature]) -> StringIndex {
        let mut patterns = Vec::new();
        let mut targets = Vec::new();
        let mut has_pkgdb = false;
        for (si, sig) in signatures.iter().enumerate() {
            for (ii, ind) in sig.indicators.iter().enumerate() {
                match ind.kind {
                    IndicatorKind::UniqueString => {
                        patterns.push(ind.regex.as_str().to_string());
                        targets.push((si, ii));
                    }
                    IndicatorKind::Pkgdb => has_pkgdb = true,
                    _ => {}
                }
            }
        }
        StringIndex {
            set: RegexSet::new(&patterns).expect("patterns were validated individually"),
            targets,
            has_pkgdb,
        }
    }
}

/// Detect components in the payload files under `root`.
///
/// Evidence for the same (vendor, product, version) is merged into one
/// entry. Versions come from the indicator's capture group; when there is
/// none, or it does not parse, the version is `unknown`.
pub fn scan_components(root: &Path, nodes: &[FileNode], signatures: &[CompiledSignature]) -> Vec<SbomEntry> {
    let index = StringIndex::new(signatures);
    let hits: Vec<Hit> = payload_nodes(nodes)
        .par_iter()
        .flat_map_iter(|node| scan_file(root, node, signatures, &index))
        .collect();

    let mut merged: BTreeMap<(usize, String), SbomEntry> = BTreeMap::new();
    for ((si, version), evidence) in hits {
        let sig = &signatures[si].signature;
        let entry = merged.entry((si, version.clone())).or_insert_with(|| {
            let mut e = SbomEntry::new(&sig.vendor, &sig.product, &version);
            e.origin = sig.origin;
            e.latest_version = sig.latest_version.clone();
            e
        });
        entry.evidence.push(evidence);
    }
    super::merge_entries(merged.into_values())
}
