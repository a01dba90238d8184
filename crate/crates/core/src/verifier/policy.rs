//! Built-in hardening and configuration checks over a twin.

use serde::{Deserialize, Serialize};

use crate::model::{CyberDigitalTwin, Direction, EncryptionKind, RuleAction, SecretKind, Severity};
use crate::version::{compare_versions, UNKNOWN_VERSION};

pub const CHECK_ASLR: &str = "aslr";
pub const CHECK_PLAINTEXT_CREDENTIALS: &str = "plaintext-credentials";
pub const CHECK_FIREWALL_DEFAULT_DENY: &str = "firewall-default-deny";
pub const CHECK_PRIVATE_KEY: &str = "embedded-private-key";
pub const CHECK_OUTDATED_COMPONENT: &str = "outdated-component";

pub const ALL_CHECKS: [&str; 5] = [
    CHECK_ASLR,
    CHECK_PLAINTEXT_CREDENTIALS,
    CHECK_FIREWALL_DEFAULT_DENY,
    CHECK_PRIVATE_KEY,
    CHECK_OUTDATED_COMPONENT,
];

pub const ASLR_KEY: &str = "kernel.randomize_va_space";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyFinding {
    pub check_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cwe_id: Option<String>,
    pub description: String,
    pub severity: Severity,
    /// JSON pointer into the serialized twin.
    pub evidence: String,
}

/// Escape one JSON pointer reference token.
pub fn pointer_token(s: &str) -> String {
    s.replace('~', "~0").replace('/', "~1")
}

fn finding(check: &str, cwe: Option<&str>, severity: Severity, evidence: String, description: String) -> PolicyFinding {
    PolicyFinding {
        check_id: check.to_string(),
        cwe_id: cwe.map(str::to_string),
        description,
        severity,
        evidence,
    }
}

/// Run every built-in check. Evidence pointers index the canonical form of
/// the twin, which is what `serialize` writes.
pub fn check_policies(cdt: &CyberDigitalTwin) -> Vec<PolicyFinding> {
    let cdt = cdt.clone().canonicalized();
    let mut out = Vec::new();

    match cdt.kernel_config.get(ASLR_KEY) {
        Some(v) if v.trim().parse::<i64>().is_ok_and(|n| n >= 1) => {}
        Some(v) => out.push(finding(
            CHECK_ASLR,
            Some("CWE-1189"),
            Severity::Medium,
            format!("/kernel_config/{}", pointer_token(ASLR_KEY)),
            format!("address space layout randomization disabled ({} = {})", ASLR_KEY, v),
        )),
        None => out.push(finding(
            CHECK_ASLR,
            Some("CWE-1189"),
            Severity::Medium,
            "/kernel_config".into(),
            format!("{} not set", ASLR_KEY),
        )),
    }

    for (i, c) in cdt.credentials.iter().enumerate() {
        if c.secret_kind == SecretKind::Plaintext {
            out.push(finding(
                CHECK_PLAINTEXT_CREDENTIALS,
                Some("CWE-256"),
                Severity::High,
                format!("/credentials/{}", i),
                format!("plaintext secret stored for user {}", c.username),
            ));
        }
    }

    let last_inbound = cdt
        .firewall_rules
        .iter()
        .enumerate()
        .filter(|(_, r)| r.direction == Direction::In)
        .next_back();
    match last_inbound {
        Some((_, r)) if r.action == RuleAction::Deny => {}
        Some((i, r)) => out.push(finding(
            CHECK_FIREWALL_DEFAULT_DENY,
            None,
            Severity::Medium,
            format!("/firewall_rules/{}", i),
            format!("last inbound rule (ordinal {}) allows {}", r.ordinal, r.pattern),
        )),
        None => out.push(finding(
            CHECK_FIREWALL_DEFAULT_DENY,
            None,
            Severity::Medium,
            "/firewall_rules".into(),
            "no inbound firewall rules, traffic is not denied by default".into(),
        )),
    }

    for (i, a) in cdt.encryption_assets.iter().enumerate() {
        if a.kind == EncryptionKind::PrivateKey {
            out.push(finding(
                CHECK_PRIVATE_KEY,
                Some("CWE-321"),
                Severity::High,
                format!("/encryption_assets/{}", i),
                format!("{} private key embedded at {}", a.algorithm, a.path),
            ));
        }
    }

    for (i, e) in cdt.sbom.iter().enumerate() {
        let Some(latest) = &e.latest_version else {
            continue;
        };
        if e.version == UNKNOWN_VERSION {
            continue;
        }
        if compare_versions(&e.version, latest).is_ok_and(|o| o.is_lt()) {
            out.push(finding(
                CHECK_OUTDATED_COMPONENT,
                Some("CWE-1104"),
                Severity::Low,
                format!("/sbom/{}/version", i),
                format!("{} {} predates latest release {}", e.product, e.version, latest),
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{serialize, Credential, EncryptionAsset, FirewallRule, SbomEntry};
    use chrono::Utc;

    fn hardened() -> CyberDigitalTwin {
        let mut cdt = CyberDigitalTwin::empty("fw", Utc::now());
        cdt.kernel_config.insert(ASLR_KEY.into(), "2".into());
        cdt.firewall_rules.push(FirewallRule {
            ordinal: 0,
            action: RuleAction::Deny,
            direction: Direction::In,
            pattern: "*".into(),
        });
        cdt
    }

    fn ids(cdt: &CyberDigitalTwin) -> Vec<String> {
        check_policies(cdt).into_iter().map(|f| f.check_id).collect()
    }

    fn assert_evidence_resolves(cdt: &CyberDigitalTwin) {
        let doc: serde_json::Value = serde_json::from_slice(&serialize(cdt)).unwrap();
        for f in check_policies(cdt) {
            assert!(doc.pointer(&f.evidence).is_some(), "{} does not resolve", f.evidence);
        }
    }

    #[test]
    fn hardened_twin_passes() {
        assert!(check_policies(&hardened()).is_empty());
    }

    #[test]
    fn aslr_disabled_or_missing() {
        let mut cdt = hardened();
        cdt.kernel_config.insert(ASLR_KEY.into(), "0".into());
        let f = check_policies(&cdt);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].cwe_id.as_deref(), Some("CWE-1189"));
        assert_eq!(f[0].evidence, "/kernel_config/kernel.randomize_va_space");
        assert_evidence_resolves(&cdt);
        cdt.kernel_config.clear();
        assert_eq!(ids(&cdt), vec![CHECK_ASLR]);
        assert_evidence_resolves(&cdt);
    }

    #[test]
    fn plaintext_root_password() {
        let mut cdt = hardened();
        cdt.credentials.push(Credential {
            username: "admin".into(),
            secret: "$6$salt$hash".into(),
            secret_kind: SecretKind::Hashed,
        });
        cdt.credentials.push(Credential {
            username: "root".into(),
            secret: "root".into(),
            secret_kind: SecretKind::Plaintext,
        });
        let f = check_policies(&cdt);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].cwe_id.as_deref(), Some("CWE-256"));
        assert_evidence_resolves(&cdt);
    }

    #[test]
    fn trailing_allow_breaks_default_deny() {
        let mut cdt = hardened();
        cdt.firewall_rules.push(FirewallRule {
            ordinal: 1,
            action: RuleAction::Allow,
            direction: Direction::In,
            pattern: "*".into(),
        });
        cdt.firewall_rules.push(FirewallRule {
            ordinal: 2,
            action: RuleAction::Allow,
            direction: Direction::Out,
            pattern: "*".into(),
        });
        let f = check_policies(&cdt);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].check_id, CHECK_FIREWALL_DEFAULT_DENY);
        assert_eq!(f[0].evidence, "/firewall_rules/1");
        assert_evidence_resolves(&cdt);
        cdt.firewall_rules.clear();
        assert_eq!(ids(&cdt), vec![CHECK_FIREWALL_DEFAULT_DENY]);
    }

    #[test]
    fn private_key_and_outdated_component() {
        let mut cdt = hardened();
        cdt.encryption_assets.push(EncryptionAsset {
            kind: EncryptionKind::PrivateKey,
            path: "etc/ssl/private/device.key".into(),
            algorithm: "RSA".into(),
        });
        let mut old = SbomEntry::new("zlib", "zlib", "1.2.8");
        old.latest_version = Some("1.2.11".into());
        let mut unknown = SbomEntry::new("busybox", "busybox", UNKNOWN_VERSION);
        unknown.latest_version = Some("1.36.0".into());
        let mut current = SbomEntry::new("bzip", "bzip2", "1.0.8");
        current.latest_version = Some("1.0.8".into());
        cdt.sbom = vec![unknown, current, old];
        assert_eq!(ids(&cdt), vec![CHECK_PRIVATE_KEY, CHECK_OUTDATED_COMPONENT]);
        let f = check_policies(&cdt);
        assert_eq!(f[1].severity, Severity::Low);
        assert_evidence_resolves(&cdt);
    }
}
