//! Software composition analysis: component detection, package databases,
//! licenses, and the configuration facets of a twin.

pub mod facets;
pub mod glob;
pub mod license;
pub mod pkgdb;
pub mod scan;
pub mod signature;

use std::collections::BTreeMap;

use crate::model::{Origin, SbomEntry};

pub use facets::{harvest_cdt_facets, Facets};
pub use license::{analyze_licenses, LicenseFingerprints};
pub use pkgdb::parse_package_db;
pub use scan::{scan_components, UNKNOWN_VERSION};
pub use signature::{compile_signatures, load_signature_db, parse_signature_db, CompiledSignature, Signature, SignatureError};

fn absorb(into: &mut SbomEntry, from: SbomEntry) {
    into.evidence.extend(from.evidence);
    into.licenses.extend(from.licenses);
    if into.origin == Origin::Unknown {
        into.origin = from.origin;
    }
    if into.latest_version.is_none() {
        into.latest_version = from.latest_version;
    }
}

/// Merge entries sharing (vendor, product, version) and sort canonically.
pub(crate) fn merge_entries(entries: impl IntoIterator<Item = SbomEntry>) -> Vec<SbomEntry> {
    let mut merged: BTreeMap<(String, String, String), SbomEntry> = BTreeMap::new();
    for entry in entries {
        let key = (entry.vendor.clone(), entry.product.clone(), entry.version.clone());
        match merged.get_mut(&key) {
            Some(existing) => absorb(existing, entry),
            None => {
                merged.insert(key, entry);
            }
        }
    }
    merged
        .into_values()
        .map(|mut e| {
            e.normalize();
            e
        })
        .collect()
}

/// Union of scanned and package-database entries.
///
/// Entries are identified by (vendor, product, version); differing versions
/// of one product stay separate. When both sources know a component, the
/// package database decides its origin.
pub fn build_sbom(scanned: Vec<SbomEntry>, parsed: Vec<SbomEntry>) -> Vec<SbomEntry> {
    let mut merged: BTreeMap<(String, String, String), SbomEntry> = BTreeMap::new();
    for entry in parsed {
        let key = (entry.vendor.clone(), entry.product.clone(), entry.version.clone());
        match merged.get_mut(&key) {
            Some(existing) => absorb(existing, entry),
            None => {
                merged.insert(key, entry);
            }
        }
    }
    for entry in scanned {
        let key = (entry.vendor.clone(), entry.product.clone(), entry.version.clone());
        match merged.get_mut(&key) {
            Some(existing) => absorb(existing, entry),
            None => {
                merged.insert(key, entry);
            }
        }
    }
    merge_entries(merged.into_values())
}
