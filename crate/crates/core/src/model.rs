//! The Cyber Digital Twin document model.
//!
//! A [`CyberDigitalTwin`] captures the security-relevant facts extracted from
//! one firmware image. Its serialized form is canonical: list fields are
//! sorted and keys are emitted in a fixed order, so equal twins serialize to
//! identical bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::version::is_valid_version;

/// Flat key/value settings, kept sorted by key.
pub type Settings = BTreeMap<String, String>;

/// The top-level keys of a serialized twin, in emission order.
pub const DOCUMENT_KEYS: [&str; 17] = [
    "firmware_id",
    "created_at",
    "file_tree_digest",
    "hw_bom",
    "network_interfaces",
    "sbom",
    "os_info",
    "kernel_config",
    "os_security_config",
    "memory_config",
    "credentials",
    "firewall_rules",
    "app_frameworks",
    "apis",
    "app_config",
    "encryption_assets",
    "code_artifacts",
];

#[derive(Debug, Error)]
pub enum CdtError {
    #[error("malformed twin document: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("invariant violated at {path}: {message}")]
    Invariant { path: String, message: String },
}

fn invariant(path: impl Into<String>, message: impl Into<String>) -> CdtError {
    CdtError::Invariant {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
pub enum CpuArch {
    #[serde(rename = "MV32")]
    Mv32,
    #[serde(rename = "MV16")]
    Mv16,
    #[default]
    #[serde(rename = "unknown")]
    Unknown,
}

impl fmt::Display for CpuArch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CpuArch::Mv32 => "MV32",
            CpuArch::Mv16 => "MV16",
            CpuArch::Unknown => "unknown",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct HwBom {
    pub cpu_arch: CpuArch,
    /// 16, 32, or 0 when unknown.
    pub cpu_bits: u8,
    pub peripherals: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    OpenSource,
    Commercial,
    FirstParty,
    #[default]
    Unknown,
}

/// How a software component was recognised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndicatorKind {
    Path,
    Filename,
    UniqueString,
    Pkgdb,
}

impl fmt::Display for IndicatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IndicatorKind::Path => "path",
            IndicatorKind::Filename => "filename",
            IndicatorKind::UniqueString => "unique_string",
            IndicatorKind::Pkgdb => "pkgdb",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Evidence {
    pub indicator_kind: IndicatorKind,
    pub matched_path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbomEntry {
    pub vendor: String,
    pub product: String,
    pub version: String,
    pub origin: Origin,
    pub evidence: Vec<Evidence>,
    pub licenses: Vec<String>,
    /// Newest release known to the signature catalog, when it declares one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latest_version: Option<String>,
}

impl SbomEntry {
    pub fn new(vendor: &str, product: &str, version: &str) -> SbomEntry {
        SbomEntry {
            vendor: vendor.to_string(),
            product: product.to_string(),
            version: version.to_string(),
            origin: Origin::Unknown,
            evidence: Vec::new(),
            licenses: Vec::new(),
            latest_version: None,
        }
    }

    pub fn key(&self) -> (&str, &str, &str) {
        (&self.vendor, &self.product, &self.version)
    }

    /// Sort and dedup evidence and licenses.
    pub fn normalize(&mut self) {
        self.evidence.sort();
        self.evidence.dedup();
        self.licenses.sort();
        self.licenses.dedup();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecretKind {
    Plaintext,
    Hashed,
    Token,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Credential {
    pub username: String,
    pub secret: String,
    pub secret_kind: SecretKind,
}

/// True when `secret` starts with a crypt-style `$<scheme>$` prefix.
pub fn has_hash_prefix(secret: &str) -> bool {
    let Some(rest) = secret.strip_prefix('$') else {
        return false;
    };
    match rest.find('$') {
        Some(0) | None => false,
        Some(end) => rest[..end].chars().all(|c| c.is_ascii_alphanumeric()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleAction {
    Allow,
    Deny,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    In,
    Out,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirewallRule {
    pub ordinal: u32,
    pub action: RuleAction,
    pub direction: Direction,
    pub pattern: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncryptionKind {
    PublicKey,
    PrivateKey,
    ProtocolDecl,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncryptionAsset {
    pub kind: EncryptionKind,
    pub path: String,
    pub algorithm: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OsFamily {
    LinuxLike,
    RtosLike,
    #[default]
    None,
}

impl fmt::Display for OsFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OsFamily::LinuxLike => "linux_like",
            OsFamily::RtosLike => "rtos_like",
            OsFamily::None => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OsInfo {
    pub family: OsFamily,
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterfaceKind {
    Ethernet,
    Usb,
    Wifi,
    Bluetooth,
    Can,
    Cellular,
    Radio,
    Zigbee,
    SmsLogical,
}

impl InterfaceKind {
    pub const ALL: [InterfaceKind; 9] = [
        InterfaceKind::Ethernet,
        InterfaceKind::Usb,
        InterfaceKind::Wifi,
        InterfaceKind::Bluetooth,
        InterfaceKind::Can,
        InterfaceKind::Cellular,
        InterfaceKind::Radio,
        InterfaceKind::Zigbee,
        InterfaceKind::SmsLogical,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InterfaceKind::Ethernet => "ethernet",
            InterfaceKind::Usb => "usb",
            InterfaceKind::Wifi => "wifi",
            InterfaceKind::Bluetooth => "bluetooth",
            InterfaceKind::Can => "can",
            InterfaceKind::Cellular => "cellular",
            InterfaceKind::Radio => "radio",
            InterfaceKind::Zigbee => "zigbee",
            InterfaceKind::SmsLogical => "sms_logical",
        }
    }

    pub fn from_name(s: &str) -> Option<InterfaceKind> {
        InterfaceKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfaceDecl {
    pub kind: InterfaceKind,
    pub evidence_path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppFramework {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Low,
    Medium,
    High,
    Critical,
}

impl Severity {
    /// CVSS banding: critical >= 9.0, high >= 7.0, medium >= 4.0, else low.
    pub fn from_cvss(score: f64) -> Severity {
        if score >= 9.0 {
            Severity::Critical
        } else if score >= 7.0 {
            Severity::High
        } else if score >= 4.0 {
            Severity::Medium
        } else {
            Severity::Low
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Low => "low",
            Severity::Medium => "medium",
            Severity::High => "high",
            Severity::Critical => "critical",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The digital twin of one firmware image.
///
/// Equality ignores `created_at`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CyberDigitalTwin {
    pub firmware_id: String,
    pub created_at: DateTime<Utc>,
    pub file_tree_digest: String,
    pub hw_bom: HwBom,
    pub network_interfaces: Vec<InterfaceDecl>,
    pub sbom: Vec<SbomEntry>,
    pub os_info: OsInfo,
    pub kernel_config: Settings,
    pub os_security_config: Settings,
    pub memory_config: Settings,
    pub credentials: Vec<Credential>,
    pub firewall_rules: Vec<FirewallRule>,
    pub app_frameworks: Vec<AppFramework>,
    pub apis: Vec<String>,
    pub app_config: Settings,
    pub encryption_assets: Vec<EncryptionAsset>,
    /// Paths, relative to the extracted tree, of analyzable code binaries.
    pub code_artifacts: Vec<String>,
}

impl PartialEq for CyberDigitalTwin {
    fn eq(&self, other: &Self) -> bool {
        self.firmware_id == other.firmware_id
            && self.file_tree_digest == other.file_tree_digest
            && self.hw_bom == other.hw_bom
            && self.network_interfaces == other.network_interfaces
            && self.sbom == other.sbom
            && self.os_info == other.os_info
            && self.kernel_config == other.kernel_config
            && self.os_security_config == other.os_security_config
            && self.memory_config == other.memory_config
            && self.credentials == other.credentials
            && self.firewall_rules == other.firewall_rules
            && self.app_frameworks == other.app_frameworks
            && self.apis == other.apis
            && self.app_config == other.app_config
            && self.encryption_assets == other.encryption_assets
            && self.code_artifacts == other.code_artifacts
    }
}

impl CyberDigitalTwin {
    /// An empty twin with every category present but empty.
    pub fn empty(firmware_id: &str, created_at: DateTime<Utc>) -> CyberDigitalTwin {
        CyberDigitalTwin {
            firmware_id: firmware_id.to_string(),
            created_at,
            file_tree_digest: String::new(),
            hw_bom: HwBom::default(),
            network_interfaces: Vec::new(),
            sbom: Vec::new(),
            os_info: OsInfo::default(),
            kernel_config: Settings::new(),
            os_security_config: Settings::new(),
            memory_config: Settings::new(),
            credentials: Vec::new(),
            firewall_rules: Vec::new(),
            app_frameworks: Vec::new(),
            apis: Vec::new(),
            app_config: Settings::new(),
            encryption_assets: Vec::new(),
            code_artifacts: Vec::new(),
        }
    }

    /// Bring every list into canonical order.
    pub fn canonicalize(&mut self) {
        self.hw_bom.peripherals.sort();
        self.network_interfaces.sort();
        for entry in &mut self.sbom {
            entry.normalize();
        }
        self.sbom.sort_by(|a, b| a.key().cmp(&b.key()));
        self.credentials.sort();
        self.firewall_rules.sort_by_key(|r| r.ordinal);
        self.app_frameworks.sort();
        self.apis.sort();
        self.encryption_assets.sort();
        self.code_artifacts.sort();
    }

    pub fn canonicalized(mut self) -> CyberDigitalTwin {
        self.canonicalize();
        self
    }

    /// Check the document-level invariants.
    pub fn validate(&self) -> Result<(), CdtError> {
        if self.firmware_id.is_empty() {
            return Err(invariant("firmware_id", "must be nonempty"));
        }
        if !matches!(self.hw_bom.cpu_bits, 0 | 16 | 32) {
            return Err(invariant(
                "hw_bom.cpu_bits",
                format!("{} is not one of 0, 16, 32", self.hw_bom.cpu_bits),
            ));
        }

        let mut seen = BTreeSet::new();
        for (i, entry) in self.sbom.iter().enumerate() {
            if !seen.insert(entry.key()) {
                return Err(invariant(
                    format!("sbom[{}]", i),
                    format!(
                        "duplicate component ({}, {}, {})",
                        entry.vendor, entry.product, entry.version
                    ),
                ));
            }
            if !is_valid_version(&entry.version) {
                return Err(invariant(
                    format!("sbom[{}].version", i),
                    format!("{:?} does not parse as a version", entry.version),
                ));
            }
            if entry.evidence.is_empty() {
                return Err(invariant(format!("sbom[{}].evidence", i), "must be nonempty"));
            }
            if let Some(latest) = &entry.latest_version {
                if !is_valid_version(latest) {
                    return Err(invariant(
                        format!("sbom[{}].latest_version", i),
                        format!("{:?} does not parse as a version", latest),
                    ));
                }
            }
        }

        if self.os_info.family == OsFamily::None && !self.os_info.name.is_empty() {
            return Err(invariant("os_info.name", "must be empty when family is none"));
        }

        for (i, cred) in self.credentials.iter().enumerate() {
            let hashed = has_hash_prefix(&cred.secret);
            if hashed != (cred.secret_kind == SecretKind::Hashed) {
                return Err(invariant(
                    format!("credentials[{}].secret_kind", i),
                    "must be hashed exactly when the secret has a $scheme$ prefix",
                ));
            }
        }

        let mut ordinals: Vec<u32> = self.firewall_rules.iter().map(|r| r.ordinal).collect();
        ordinals.sort_unstable();
        if ordinals.iter().enumerate().any(|(i, &o)| o as usize != i) {
            return Err(invariant(
                "firewall_rules",
                "ordinals must be unique and contiguous from 0",
            ));
        }

        for (i, asset) in self.encryption_assets.iter().enumerate() {
            if asset.kind != EncryptionKind::ProtocolDecl && asset.path.is_empty() {
                return Err(invariant(format!("encryption_assets[{}].path", i), "must be nonempty"));
            }
        }
        Ok(())
    }
}

/// Serialize a twin to its canonical document bytes.
pub fn serialize(cdt: &CyberDigitalTwin) -> Vec<u8> {
    let canonical = cdt.clone().canonicalized();
    let mut bytes = serde_json::to_vec_pretty(&canonical).expect("twin serialization is total");
    bytes.push(b'\n');
    bytes
}

/// Parse and validate a twin document.
pub fn deserialize(bytes: &[u8]) -> Result<CyberDigitalTwin, CdtError> {
    let cdt: CyberDigitalTwin = serde_json::from_slice(bytes)?;
    cdt.validate()?;
    Ok(cdt.canonicalized())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn epoch() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2020, 9, 30, 12, 0, 0).unwrap()
    }

    fn entry(vendor: &str, product: &str, version: &str) -> SbomEntry {
        let mut e = SbomEntry::new(vendor, product, version);
        e.origin = Origin::OpenSource;
        e.evidence.push(Evidence {
            indicator_kind: IndicatorKind::Filename,
            matched_path: format!("usr/lib/lib{}.so", product),
        });
        e
    }

    #[test]
    fn empty_twin_has_every_key() {
        let doc: serde_json::Value =
            serde_json::from_slice(&serialize(&CyberDigitalTwin::empty("fw", epoch()))).unwrap();
        let keys: Vec<&str> = doc.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        let mut expected = DOCUMENT_KEYS.to_vec();
        expected.sort_unstable();
        let mut got = keys.clone();
        got.sort_unstable();
        assert_eq!(got, expected);
        assert_eq!(doc["sbom"], serde_json::json!([]));
        assert_eq!(doc["kernel_config"], serde_json::json!({}));
    }

    #[test]
    fn keys_are_emitted_in_document_order() {
        let text = String::from_utf8(serialize(&CyberDigitalTwin::empty("fw", epoch()))).unwrap();
        let positions: Vec<usize> = DOCUMENT_KEYS
            .iter()
            .map(|k| text.find(&format!("\"{}\"", k)).unwrap())
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn single_sqlite_entry() {
        let mut cdt = CyberDigitalTwin::empty("fw", epoch());
        cdt.sbom.push(entry("sqlite", "sqlite", "3.31.1"));
        let doc: serde_json::Value = serde_json::from_slice(&serialize(&cdt)).unwrap();
        let sbom = doc["sbom"].as_array().unwrap();
        assert_eq!(sbom.len(), 1);
        assert_eq!(sbom[0]["version"], "3.31.1");
    }

    #[test]
    fn sbom_order_does_not_change_bytes() {
        let mut a = CyberDigitalTwin::empty("fw", epoch());
        a.sbom = vec![entry("zlib", "zlib", "1.2.8"), entry("gnu", "bzip2", "1.0.6")];
        let mut b = a.clone();
        b.sbom.reverse();
        assert_eq!(serialize(&a), serialize(&b));
    }

    #[test]
    fn missing_sbom_key_is_malformed() {
        let mut doc: serde_json::Value =
            serde_json::from_slice(&serialize(&CyberDigitalTwin::empty("fw", epoch()))).unwrap();
        doc.as_object_mut().unwrap().remove("sbom");
        let err = deserialize(&serde_json::to_vec(&doc).unwrap()).unwrap_err();
        assert!(matches!(err, CdtError::Malformed(_)), "{err}");
    }

    #[test]
    fn duplicate_sbom_entries_violate_invariant() {
        let mut cdt = CyberDigitalTwin::empty("fw", epoch());
        cdt.sbom = vec![entry("zlib", "zlib", "1.2.8"), entry("zlib", "zlib", "1.2.8")];
        let bytes = serde_json::to_vec(&cdt).unwrap();
        match deserialize(&bytes).unwrap_err() {
            CdtError::Invariant { path, .. } => assert_eq!(path, "sbom[1]"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn invariant_paths_are_reported() {
        let mut cdt = CyberDigitalTwin::empty("fw", epoch());
        cdt.credentials.push(Credential {
            username: "root".into(),
            secret: "$6$abc$def".into(),
            secret_kind: SecretKind::Plaintext,
        });
        match cdt.validate().unwrap_err() {
            CdtError::Invariant { path, .. } => assert_eq!(path, "credentials[0].secret_kind"),
            other => panic!("unexpected {other}"),
        }

        let mut cdt = CyberDigitalTwin::empty("fw", epoch());
        cdt.firewall_rules.push(FirewallRule {
            ordinal: 1,
            action: RuleAction::Deny,
            direction: Direction::In,
            pattern: "*".into(),
        });
        assert!(cdt.validate().is_err());

        let cdt = CyberDigitalTwin::empty("", epoch());
        assert!(cdt.validate().is_err());
    }

    #[test]
    fn hash_prefix_rule() {
        assert!(has_hash_prefix("$6$salt$hash"));
        assert!(has_hash_prefix("$1$x"));
        assert!(!has_hash_prefix("$$x"));
        assert!(!has_hash_prefix("password"));
        assert!(!has_hash_prefix("$nodollar"));
    }

    #[test]
    fn created_at_is_ignored_by_equality() {
        let a = CyberDigitalTwin::empty("fw", epoch());
        let b = CyberDigitalTwin::empty("fw", Utc::now());
        assert_eq!(a, b);
    }

    fn word() -> impl Strategy<Value = String> {
        "[a-z][a-z0-9_]{0,7}"
    }

    fn twin_strategy() -> impl Strategy<Value = CyberDigitalTwin> {
        let sbom = prop::collection::btree_map(
            (word(), word(), "[0-9]{1,2}\\.[0-9]{1,2}(\\.[0-9]{1,2})?"),
            (0usize..4, prop::collection::vec("[A-Za-z0-9-]{1,8}", 0..3)),
            0..6,
        )
        .prop_map(|m| {
            m.into_iter()
                .map(|((v, p, ver), (origin, licenses))| {
                    let mut e = entry(&v, &p, &ver);
                    e.origin = [Origin::OpenSource, Origin::Commercial, Origin::FirstParty, Origin::Unknown][origin];
                    e.licenses = licenses;
                    e
                })
                .collect::<Vec<_>>()
        });
        let creds = prop::collection::vec((word(), "[a-zA-Z0-9]{1,10}", any::<bool>()), 0..4).prop_map(|v| {
            v.into_iter()
                .map(|(u, s, hashed)| {
                    if hashed {
                        Credential { username: u, secret: format!("$6${}", s), secret_kind: SecretKind::Hashed }
                    } else {
                        Credential { username: u, secret: s, secret_kind: SecretKind::Plaintext }
                    }
                })
                .collect::<Vec<_>>()
        });
        let rules = prop::collection::vec((any::<bool>(), any::<bool>(), "[0-9*.:/]{1,12}"), 0..5).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (allow, inbound, pattern))| FirewallRule {
                    ordinal: i as u32,
                    action: if allow { RuleAction::Allow } else { RuleAction::Deny },
                    direction: if inbound { Direction::In } else { Direction::Out },
                    pattern,
                })
                .collect::<Vec<_>>()
        });
        let settings = || prop::collection::btree_map("[a-z.]{1,12}", "[a-z0-9]{0,6}", 0..4);
        let misc = (
            prop::collection::vec(word(), 0..4),
            prop::collection::vec(0usize..9, 0..3),
            prop_oneof![Just((CpuArch::Mv32, 32u8)), Just((CpuArch::Mv16, 16)), Just((CpuArch::Unknown, 0))],
            prop::collection::vec(word(), 0..3),
        );
        (word(), sbom, creds, rules, settings(), settings(), settings(), misc).prop_map(
            |(id, sbom, credentials, firewall_rules, kernel, security, app, (apis, ifaces, (arch, bits), code))| {
                let mut cdt = CyberDigitalTwin::empty(&id, epoch());
                cdt.sbom = sbom;
                cdt.credentials = credentials;
                cdt.firewall_rules = firewall_rules;
                cdt.kernel_config = kernel;
                cdt.os_security_config = security;
                cdt.app_config = app;
                cdt.apis = apis;
                cdt.network_interfaces = ifaces
                    .into_iter()
                    .map(|k| InterfaceDecl { kind: InterfaceKind::ALL[k], evidence_path: "etc/interfaces".into() })
                    .collect();
                cdt.hw_bom = HwBom { cpu_arch: arch, cpu_bits: bits, peripherals: vec!["gps".into()] };
                cdt.os_info = OsInfo { family: OsFamily::LinuxLike, name: "Linux".into(), version: "5.4".into() };
                cdt.code_artifacts = code.into_iter().map(|c| format!("bin/{}.mvfw", c)).collect();
                cdt.encryption_assets.push(EncryptionAsset {
                    kind: EncryptionKind::PrivateKey,
                    path: "etc/ssl/key.pem".into(),
                    algorithm: "RSA".into(),
                });
                cdt.canonicalized()
            },
        )
    }

    proptest! {
        #[test]
        fn round_trip_is_lossless(cdt in twin_strategy()) {
            let back = deserialize(&serialize(&cdt)).unwrap();
            prop_assert_eq!(&back, &cdt);
            prop_assert_eq!(back.created_at, cdt.created_at);
        }

        #[test]
        fn permutations_serialize_identically(cdt in twin_strategy(), seed in any::<u64>()) {
            let mut shuffled = cdt.clone();
            let n = shuffled.sbom.len().max(1) as u64;
            shuffled.sbom.rotate_left((seed % n) as usize);
            shuffled.credentials.reverse();
            shuffled.firewall_rules.reverse();
            prop_assert_eq!(serialize(&shuffled), serialize(&cdt));
        }
    }
}
