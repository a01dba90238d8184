//! The component signature database.
//!
//! One JSON record per line; blank lines and lines starting with `#` are
//! skipped:
//!
//! ```text
//! {"vendor":"zlib","product":"zlib","origin":"open_source","licenses":["Zlib"],
//!  "latest_version":"1.2.11",
//!  "indicators":[{"kind":"filename","pattern":"libz.so.*","version_capture":1}]}
//! ```

use std::collections::HashSet;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::glob::{filename_regex, path_regex, wildcard_count};
use crate::model::{IndicatorKind, Origin};
use crate::version::is_valid_version;

#[derive(Debug, Error)]
pub enum SignatureError {
    #[error("cannot read signature db {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("signature db line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Indicator {
    pub kind: IndicatorKind,
    pub pattern: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version_capture: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Signature {
    pub vendor: String,
    pub product: String,
    #[serde(default)]
    pub origin: Origin,
    #[serde(default)]
    pub licenses: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latest_version: Option<String>,
    pub indicators: Vec<Indicator>,
}

impl Signature {
    pub fn same_component(&self, vendor: &str, product: &str) -> bool {
        self.vendor.eq_ignore_ascii_case(vendor) && self.product.eq_ignore_ascii_case(product)
    }
}

/// An indicator with its pattern compiled.
#[derive(Debug, Clone)]
pub struct CompiledIndicator {
    pub kind: IndicatorKind,
    pub regex: Regex,
    pub version_capture: Option<usize>,
}

impl CompiledIndicator {
    pub fn compile(indicator: &Indicator) -> Result<CompiledIndicator, String> {
        let (regex, groups) = match indicator.kind {
            IndicatorKind::Path => (
                path_regex(&indicator.pattern).map_err(|e| e.to_string())?,
                wildcard_count(&indicator.pattern),
            ),
            IndicatorKind::Filename => (
                filename_regex(&indicator.pattern).map_err(|e| e.to_string())?,
                wildcard_count(&indicator.pattern),
            ),
            IndicatorKind::UniqueString => {
                let re = Regex::new(&indicator.pattern).map_err(|e| e.to_string())?;
                let n = re.captures_len() - 1;
                (re, n)
            }
            IndicatorKind::Pkgdb => {
                let re = Regex::new(&format!("^(?:{})$", indicator.pattern)).map_err(|e| e.to_string())?;
                let n = re.captures_len() - 1;
                (re, n)
            }
        };
        if let Some(group) = indicator.version_capture {
            if group == 0 || group > groups {
                return Err(format!(
                    "version_capture {} out of range for pattern {:?} with {} groups",
                    group, indicator.pattern, groups
                ));
            }
        }
        Ok(CompiledIndicator {
            kind: indicator.kind,
            regex,
            version_capture: indicator.version_capture,
        })
    }

    /// Match `haystack`; on success return the captured version, if any.
    pub fn match_version(&self, haystack: &str) -> Option<Option<String>> {
        match self.version_capture {
            None => self.regex.is_match(haystack).then_some(None),
            Some(group) => {
                let caps = self.regex.captures(haystack)?;
                Some(caps.get(group).map(|m| m.as_str().to_string()))
            }
        }
    }
}

/// A signature with compiled indicators, ready for scanning.
#[derive(Debug, Clone)]
pub struct CompiledSignature {
    pub signature: Signature,
    pub indicators: Vec<CompiledIndicator>,
}

pub fn compile_signatures(signatures: &[Signature]) -> Result<Vec<CompiledSignature>, String> {
    signatures
        .iter()
        .map(|s| {
            Ok(CompiledSignature {
                signature: s.clone(),
                indicators: s.indicators.iter().map(CompiledIndicator::compile).collect::<Result<_, _>>()?,
            })
        })
        .collect()
}

pub fn parse_signature_db(text: &str) -> Result<Vec<Signature>, SignatureError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let malformed = |message: String| SignatureError::Malformed { line, message };
        let sig: Signature = serde_json::from_str(trimmed).map_err(|e| malformed(e.to_string()))?;
        if sig.vendor.trim().is_empty() || sig.product.trim().is_empty() {
            return Err(malformed("vendor and product must be nonempty".into()));
        }
        if sig.indicators.is_empty() {
            return Err(malformed("indicators must be nonempty".into()));
        }
        if let Some(latest) = &sig.latest_version {
            if !is_valid_version(latest) {
                return Err(malformed(format!("latest_version {:?} is not a version", latest)));
            }
        }
        for indicator in &sig.indicators {
            CompiledIndicator::compile(indicator).map_err(malformed)?;
            let key = (
                sig.vendor.to_ascii_lowercase(),
                sig.product.to_ascii_lowercase(),
                indicator.kind,
                indicator.pattern.clone(),
            );
            if !seen.insert(key) {
                return Err(malformed(format!(
                    "duplicate indicator {} {:?} for {}/{}",
                    indicator.kind, indicator.pattern, sig.vendor, sig.product
                )));
            }
        }
        out.push(sig);
    }
    Ok(out)
}

pub fn load_signature_db(path: &Path) -> Result<Vec<Signature>, SignatureError> {
    let text = std::fs::read_to_string(path).map_err(|source| SignatureError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_signature_db(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQLITE: &str = r#"{"vendor":"sqlite","product":"sqlite","origin":"open_source","licenses":["blessing"],"indicators":[{"kind":"unique_string","pattern":"SQLite version ([0-9.]+)","version_capture":1}]}"#;

    #[test]
    fn singleton_db() {
        let sigs = parse_signature_db(SQLITE).unwrap();
        assert_eq!(sigs.len(), 1);
        assert_eq!(sigs[0].product, "sqlite");
    }

    #[test]
    fn empty_db() {
        assert!(parse_signature_db("").unwrap().is_empty());
        assert!(parse_signature_db("\n# nothing\n").unwrap().is_empty());
    }

    #[test]
    fn duplicate_indicator_is_rejected_with_line() {
        let text = format!("{}\n\n{}\n", SQLITE, SQLITE);
        match parse_signature_db(&text).unwrap_err() {
            SignatureError::Malformed { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("duplicate"));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn bad_records() {
        let no_ind = r#"{"vendor":"a","product":"b","indicators":[]}"#;
        assert!(parse_signature_db(no_ind).is_err());
        let bad_cap = r#"{"vendor":"a","product":"b","indicators":[{"kind":"filename","pattern":"libb.so","version_capture":1}]}"#;
        assert!(parse_signature_db(bad_cap).is_err());
        let bad_re = r#"{"vendor":"a","product":"b","indicators":[{"kind":"unique_string","pattern":"("}]}"#;
        assert!(parse_signature_db(bad_re).is_err());
        assert!(matches!(parse_signature_db("{not json"), Err(SignatureError::Malformed { line: 1, .. })));
    }
}
