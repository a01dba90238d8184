//! Package manager status database (`var/lib/pkgdb/status`).
//!
//! Stanzas are blank-line separated `Field: value` blocks. `Package` and
//! `Version` are required; `Vendor` defaults to the package name and
//! `Origin` to `open_source`.

use std::fs;
use std::path::Path;

use log::warn;

use crate::extractor::{path_has_suffix, FileNode};
use crate::model::{Evidence, IndicatorKind, Origin, SbomEntry};
use crate::version::is_valid_version;

pub const STATUS_PATH: &str = "var/lib/pkgdb/status";

pub fn is_status_file(path: &str) -> bool {
    path_has_suffix(path, STATUS_PATH)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stanza {
    pub package: String,
    pub version: String,
    pub vendor: Option<String>,
    pub origin: Option<String>,
}

/// Parse stanzas. Invalid stanzas are skipped and described in the second
/// return value.
pub fn parse_status(text: &str) -> (Vec<Stanza>, Vec<String>) {
    let mut stanzas = Vec::new();
    let mut warnings = Vec::new();
    let blocks = text.replace("\r\n", "\n");
    for (i, block) in blocks.split("\n\n").enumerate() {
        if block.trim().is_empty() {
            continue;
        }
        let mut package = None;
        let mut version = None;
        let mut vendor = None;
        let mut origin = None;
        for line in block.lines() {
            if line.starts_with([' ', '\t']) {
                continue;
            }
            let Some((key, value)) = line.split_once(':') else {
                continue;
            };
            let value = value.trim().to_string();
            match key.trim() {
                "Package" => package = Some(value),
                "Version" => version = Some(value),
                "Vendor" => vendor = Some(value),
                "Origin" => origin = Some(value),
                _ => {}
            }
        }
        match (package, version) {
            (Some(p), Some(v)) if !p.is_empty() && is_valid_version(&v) => stanzas.push(Stanza {
                package: p,
                version: v,
                vendor,
                origin,
            }),
            (Some(p), Some(v)) if !p.is_empty() => {
                warnings.push(format!("stanza {} ({}): version {:?} does not parse", i + 1, p, v))
            }
            (Some(p), None) => warnings.push(format!("stanza {} ({}): missing Version", i + 1, p)),
            _ => warnings.push(format!("stanza {}: missing Package", i + 1)),
        }
    }
    (stanzas, warnings)
}

fn parse_origin(s: Option<&str>) -> Origin {
    match s.map(str::trim) {
        Some("commercial") => Origin::Commercial,
        Some("first_party") => Origin::FirstParty,
        Some("unknown") => Origin::Unknown,
        _ => Origin::OpenSource,
    }
}

/// Entries from every package status database in the tree.
pub fn parse_package_db(root: &Path, nodes: &[FileNode]) -> (Vec<SbomEntry>, Vec<String>) {
    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    for node in nodes.iter().filter(|n| n.is_regular() && is_status_file(&n.path)) {
        let text = match fs::read(root.join(&node.path)) {
            Ok(bytes) => String::from_utf8_lossy(&bytes).into_owned(),
            Err(e) => {
                warnings.push(format!("{}: {}", node.path, e));
                continue;
            }
        };
        let (stanzas, stanza_warnings) = parse_status(&text);
        for w in stanza_warnings {
            warn!("{}: {}", node.path, w);
            warnings.push(format!("{}: {}", node.path, w));
        }
        for stanza in stanzas {
            let vendor = stanza.vendor.as_deref().unwrap_or(&stanza.package);
            let mut entry = SbomEntry::new(vendor, &stanza.package, &stanza.version);
            entry.origin = parse_origin(stanza.origin.as_deref());
            entry.evidence.push(Evidence {
                indicator_kind: IndicatorKind::Pkgdb,
                matched_path: node.path.clone(),
            });
            entries.push(entry);
        }
    }
    (super::merge_entries(entries), warnings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extractor::list_tree;

    #[test]
    fn expat_stanza() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("var/lib/pkgdb")).unwrap();
        fs::write(
            dir.path().join("var/lib/pkgdb/status"),
            "Package: expat\nVersion: 2.2.0\nDescription: XML parser\n continuation\n\nPackage: broken\n\n",
        )
        .unwrap();
        let (entries, warnings) = parse_package_db(dir.path(), &list_tree(dir.path()).unwrap());
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].key(), ("expat", "expat", "2.2.0"));
        assert_eq!(entries[0].origin, Origin::OpenSource);
        assert_eq!(entries[0].evidence[0].indicator_kind, IndicatorKind::Pkgdb);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("missing Version"));
    }

    #[test]
    fn no_db_no_entries() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("x"), "y").unwrap();
        let (entries, warnings) = parse_package_db(dir.path(), &list_tree(dir.path()).unwrap());
        assert!(entries.is_empty() && warnings.is_empty());
    }

    #[test]
    fn vendor_and_origin_fields() {
        let (stanzas, _) = parse_status("Package: qt\nVersion: 5.12\nVendor: qt-project\nOrigin: commercial\n");
        assert_eq!(stanzas[0].vendor.as_deref(), Some("qt-project"));
        assert_eq!(parse_origin(stanzas[0].origin.as_deref()), Origin::Commercial);
    }

    #[test]
    fn bad_version_is_skipped() {
        let (stanzas, warnings) = parse_status("Package: x\nVersion: 1..2\n");
        assert!(stanzas.is_empty());
        assert_eq!(warnings.len(), 1);
    }
}
