//! Known-vulnerability matching against an offline CVE feed.

pub mod alias;
pub mod context;
pub mod feed;
pub mod matcher;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{SbomEntry, Severity};

pub use alias::AliasTable;
pub use context::{filter_by_context, load_context_overrides, parse_context_overrides, ContextOverrides};
pub use feed::{load_cve_db, parse_cve_db, AffectedRange, ContextConstraints, CveDbError, CveRecord};
pub use matcher::match_cves;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ComponentRef {
    pub vendor: String,
    pub product: String,
    pub version: String,
}

impl ComponentRef {
    pub fn of(e: &SbomEntry) -> ComponentRef {
        ComponentRef {
            vendor: e.vendor.clone(),
            product: e.product.clone(),
            version: e.version.clone(),
        }
    }
}

impl fmt::Display for ComponentRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.vendor, self.product)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Applicability {
    Applicable,
    FilteredOut,
}

impl Applicability {
    pub fn as_str(self) -> &'static str {
        match self {
            Applicability::Applicable => "applicable",
            Applicability::FilteredOut => "filtered_out",
        }
    }
}

/// A CVE matched to one SBoM entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnownFinding {
    pub cve_id: String,
    pub component: ComponentRef,
    pub cwe_ids: Vec<String>,
    pub severity: Severity,
    pub applicability: Applicability,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_reason: Option<String>,
}
