//! SBoM to CVE matching.

use std::collections::HashMap;

use rayon::prelude::*;

use super::alias::AliasTable;
use super::feed::CveRecord;
use super::{Applicability, ComponentRef, KnownFinding};
use crate::model::SbomEntry;

/// CVE records indexed by canonical (vendor, product).
pub struct CveIndex<'a> {
    records: &'a [CveRecord],
    by_product: HashMap<(String, String), Vec<usize>>,
    aliases: &'a AliasTable,
}

impl<'a> CveIndex<'a> {
    pub fn new(records: &'a [CveRecord], aliases: &'a AliasTable) -> CveIndex<'a> {
        let mut by_product: HashMap<(String, String), Vec<usize>> = HashMap::new();
        for (i, rec) in records.iter().enumerate() {
            for r in &rec.affected {
                let ids = by_product.entry(aliases.canonical(&r.vendor, &r.product)).or_default();
                if ids.last() != Some(&i) {
                    ids.push(i);
                }
            }
        }
        CveIndex {
            records,
            by_product,
            aliases,
        }
    }

    fn matches_for(&self, entry: &SbomEntry) -> Vec<KnownFinding> {
        let key = self.aliases.canonical(&entry.vendor, &entry.product);
        let Some(ids) = self.by_product.get(&key) else {
            return Vec::new();
        };
        ids.iter()
            .map(|&i| &self.records[i])
            .filter(|rec| {
                rec.affected.iter().any(|r| {
                    self.aliases.canonical(&r.vendor, &r.product) == key && r.contains(&entry.version)
                })
            })
            .map(|rec| KnownFinding {
                cve_id: rec.cve_id.clone(),
                component: ComponentRef::of(entry),
                cwe_ids: rec.cwe_ids.clone(),
                severity: rec.severity,
                applicability: Applicability::Applicable,
                filter_reason: None,
            })
            .collect()
    }
}

/// One finding per (SBoM entry, CVE) pair whose identity and version match,
/// sorted by CVE id then component.
pub fn match_cves(sbom: &[SbomEntry], db: &[CveRecord], aliases: &AliasTable) -> Vec<KnownFinding> {
    let index = CveIndex::new(db, aliases);
    let mut out: Vec<KnownFinding> = sbom.par_iter().flat_map_iter(|e| index.matches_for(e)).collect();
    out.sort_by(|a, b| (&a.cve_id, &a.component).cmp(&(&b.cve_id, &b.component)));
    out
}
