//! Dotted component versions.
//!
//! A version is a non-empty list of dot-separated segments. Each segment is a
//! maximal run of ASCII digits (possibly empty) followed by an optional suffix
//! of ASCII alphanumerics or `-`, `_`, `+`, `~`. Examples: `1.2.8`, `3.31.1`,
//! `1.0.2k`, `2.0rc1`.
//!
//! Ordering compares segment by segment. Missing trailing segments count as
//! `0`, numeric prefixes compare as unbounded integers and equal prefixes are
//! tie-broken on the suffix, where "no suffix" sorts first.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VersionError {
    #[error("empty version string")]
    Empty,
    #[error("version {version:?}: segment {index} is empty")]
    EmptySegment { version: String, index: usize },
    #[error("version {version:?}: invalid character {ch:?} in segment {index}")]
    InvalidChar {
        version: String,
        index: usize,
        ch: char,
    },
}

#[derive(Debug, Clone)]
struct Segment {
    /// Digits without leading zeros; empty means zero.
    number: String,
    suffix: String,
}

static ZERO_SEGMENT: Segment = Segment {
    number: String::new(),
    suffix: String::new(),
};

impl Segment {
    fn is_zero(&self) -> bool {
        self.number.is_empty() && self.suffix.is_empty()
    }

    fn cmp_number(&self, other: &Segment) -> Ordering {
        self.number
            .len()
            .cmp(&other.number.len())
            .then_with(|| self.number.cmp(&other.number))
    }

    fn cmp_suffix(&self, other: &Segment) -> Ordering {
        match (self.suffix.is_empty(), other.suffix.is_empty()) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            (false, false) => self.suffix.cmp(&other.suffix),
        }
    }
}

fn is_suffix_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '+' | '~')
}

/// A parsed version. Equality and hashing follow [`compare_versions`]
/// semantics, so `1.2` and `1.2.0` are the same version.
#[derive(Debug, Clone)]
pub struct Version {
    raw: String,
    segments: Vec<Segment>,
}

impl Version {
    pub fn parse(s: &str) -> Result<Version, VersionError> {
        if s.is_empty() {
            return Err(VersionError::Empty);
        }
        let mut segments = Vec::new();
        for (index, part) in s.split('.').enumerate() {
            if part.is_empty() {
                return Err(VersionError::EmptySegment {
                    version: s.to_string(),
                    index,
                });
            }
            let digits = part.bytes().take_while(u8::is_ascii_digit).count();
            let (number, suffix) = part.split_at(digits);
            if let Some(ch) = suffix.chars().find(|c| !is_suffix_char(*c)) {
                return Err(VersionError::InvalidChar {
                    version: s.to_string(),
                    index,
                    ch,
                });
            }
            segments.push(Segment {
                number: number.trim_start_matches('0').to_string(),
                suffix: suffix.to_string(),
            });
        }
        Ok(Version {
            raw: s.to_string(),
            segments,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    /// Segments with trailing zero segments removed.
    fn significant(&self) -> &[Segment] {
        let end = self
            .segments
            .iter()
            .rposition(|s| !s.is_zero())
            .map_or(0, |i| i + 1);
        &self.segments[..end]
    }
}

/// Placeholder version for components whose version could not be determined.
/// It never falls inside a bounded version range.
pub const UNKNOWN_VERSION: &str = "unknown";

/// Returns true when `s` parses under the version grammar.
pub fn is_valid_version(s: &str) -> bool {
    Version::parse(s).is_ok()
}

/// Compare two version strings under the version grammar.
pub fn compare_versions(a: &str, b: &str) -> Result<Ordering, VersionError> {
    Ok(Version::parse(a)?.cmp(&Version::parse(b)?))
}

impl Ord for Version {
    fn cmp(&self, other: &Self) -> Ordering {
        let n = self.segments.len().max(other.segments.len());
        for i in 0..n {
            let a = self.segments.get(i).unwrap_or(&ZERO_SEGMENT);
            let b = other.segments.get(i).unwrap_or(&ZERO_SEGMENT);
            let ord = a.cmp_number(b).then_with(|| a.cmp_suffix(b));
            if ord != Ordering::Equal {
                return ord;
            }
        }
        Ordering::Equal
    }
}

impl PartialOrd for Version {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Version {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Version {}

impl Hash for Version {
    fn hash<H: Hasher>(&self, state: &mut H) {
        for seg in self.significant() {
            seg.number.hash(state);
            seg.suffix.hash(state);
        }
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

impl FromStr for Version {
    type Err = VersionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Version::parse(s)
    }
}

impl Serialize for Version {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.raw)
    }
}

impl<'de> Deserialize<'de> for Version {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Version::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent oracle: pad both segment lists to the same length with
    /// `(0, "")`, then compare `(number, has_suffix, suffix)` tuples
    /// lexicographically. Only valid for numbers that fit in u128.
    fn oracle_cmp(a: &str, b: &str) -> Ordering {
        fn split(s: &str) -> Vec<(u128, bool, String)> {
            s.split('.')
                .map(|seg| {
                    let d: String = seg.chars().take_while(|c| c.is_ascii_digit()).collect();
                    let suffix = seg[d.len()..].to_string();
                    let n = if d.is_empty() { 0 } else { d.parse().unwrap() };
                    (n, !suffix.is_empty(), suffix)
                })
                .collect()
        }
        let mut x = split(a);
        let mut y = split(b);
        let len = x.len().max(y.len());
        x.resize(len, (0, false, String::new()));
        y.resize(len, (0, false, String::new()));
        x.cmp(&y)
    }

    fn version_strategy() -> impl Strategy<Value = String> {
        let seg = (0u32..40, prop_oneof![Just(""), Just("a"), Just("b"), Just("rc1"), Just("p")])
            .prop_map(|(n, s)| format!("{}{}", n, s));
        let zero_padded = (0u32..5).prop_map(|n| format!("0{}", n));
        prop::collection::vec(prop_oneof![4 => seg, 1 => zero_padded], 1..5).prop_map(|v| v.join("."))
    }

    #[test]
    fn basic_orderings() {
        assert_eq!(compare_versions("1.2.8", "1.2.9").unwrap(), Ordering::Less);
        assert_eq!(compare_versions("1.2", "1.2.0").unwrap(), Ordering::Equal);
        assert_eq!(compare_versions("1.0", "1.0a").unwrap(), Ordering::Less);
        assert_eq!(compare_versions("1.0.2k", "1.0.2j").unwrap(), Ordering::Greater);
        assert_eq!(compare_versions("3.31.1", "3.32.0").unwrap(), Ordering::Less);
        assert_eq!(compare_versions("10.0", "9.9").unwrap(), Ordering::Greater);
        assert_eq!(compare_versions("01.2", "1.2").unwrap(), Ordering::Equal);
    }

    #[test]
    fn huge_numbers_do_not_overflow() {
        let a = "123456789012345678901234567890.1";
        let b = "123456789012345678901234567891.0";
        assert_eq!(compare_versions(a, b).unwrap(), Ordering::Less);
    }

    #[test]
    fn grammar_rejects_garbage() {
        assert_eq!(Version::parse(""), Err(VersionError::Empty));
        assert!(matches!(Version::parse("1..2"), Err(VersionError::EmptySegment { index: 1, .. })));
        assert!(matches!(Version::parse("1.2 beta"), Err(VersionError::InvalidChar { ch: ' ', .. })));
        assert!(is_valid_version("unknown"));
        assert!(is_valid_version("2.0-beta"));
    }

    #[test]
    fn equal_versions_hash_equal() {
        use std::collections::HashSet;
        let set: HashSet<Version> = ["1.2", "1.2.0", "1.2.0.0", "01.02"]
            .iter()
            .map(|s| Version::parse(s).unwrap())
            .collect();
        assert_eq!(set.len(), 1);
    }

    proptest! {
        #[test]
        fn agrees_with_padded_oracle(a in version_strategy(), b in version_strategy()) {
            prop_assert_eq!(compare_versions(&a, &b).unwrap(), oracle_cmp(&a, &b));
        }

        #[test]
        fn antisymmetric(a in version_strategy(), b in version_strategy()) {
            let ab = compare_versions(&a, &b).unwrap();
            let ba = compare_versions(&b, &a).unwrap();
            prop_assert_eq!(ab, ba.reverse());
        }

        #[test]
        fn transitive(a in version_strategy(), b in version_strategy(), c in version_strategy()) {
            let (a, b, c) = (Version::parse(&a).unwrap(), Version::parse(&b).unwrap(), Version::parse(&c).unwrap());
            if a <= b && b <= c {
                prop_assert!(a <= c);
            }
            if a == b && b == c {
                prop_assert!(a == c);
            }
        }
    }
}
