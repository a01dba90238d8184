//! Configuration facets of a twin, harvested from well-known paths.
//!
//! | path (suffix)                  | facet |
//! |--------------------------------|-------|
//! | `etc/os-release`               | OS name, version and family |
//! | `etc/sysctl.conf`, `etc/sysctl.d/*.conf` | kernel config (`key=value`) |
//! | `etc/login.defs`               | OS security config, keys prefixed `login.` |
//! | `etc/ssh/sshd_config`          | OS security config, keys prefixed `sshd.` |
//! | `etc/memory.conf`              | memory config (`key=value`) |
//! | `etc/passwd`, `etc/shadow`     | credentials (`user:secret:...`) |
//! | `etc/tokens`                   | token credentials (`user:token`) |
//! | `etc/firewall.rules`           | firewall rules (`<allow|deny> <in|out> <pattern>`) |
//! | `etc/interfaces`               | network interfaces |
//! | `etc/crypto.conf`              | protocol declarations (`protocol=<name>`) |
//! | `etc/app-frameworks.conf`      | application frameworks (`name=version`) |
//! | `etc/app/<name>.conf`          | app config, keys prefixed `<name>.` |
//! | `etc/peripherals`              | hardware peripherals, one per line |
//! | any file with a PEM header     | encryption keys and certificates |
//! | any file with MVFW magic       | code artifacts, CPU architecture, APIs |

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use regex::bytes::Regex;

use super::scan::payload_nodes;
use crate::binscan::image::{has_magic, map_sections, parse_binary};
use crate::extractor::{path_has_suffix, FileNode};
use crate::model::{
    has_hash_prefix, AppFramework, CpuArch, Credential, CyberDigitalTwin, Direction, EncryptionAsset, EncryptionKind,
    FirewallRule, HwBom, InterfaceDecl, InterfaceKind, OsFamily, OsInfo, RuleAction, SecretKind, Settings,
};

/// Files larger than this are not searched for PEM blocks.
const MAX_PEM_SCAN: u64 = 16 << 20;

const RTOS_MARKERS: [&str; 6] = ["qnx", "vxworks", "freertos", "zephyr", "threadx", "rtos"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Facets {
    pub os_info: OsInfo,
    pub kernel_config: Settings,
    pub os_security_config: Settings,
    pub memory_config: Settings,
    pub credentials: Vec<Credential>,
    pub firewall_rules: Vec<FirewallRule>,
    pub network_interfaces: Vec<InterfaceDecl>,
    pub encryption_assets: Vec<EncryptionAsset>,
    pub apis: Vec<String>,
    pub app_frameworks: Vec<AppFramework>,
    pub app_config: Settings,
    pub hw_bom: HwBom,
    pub code_artifacts: Vec<String>,
    pub warnings: Vec<String>,
}

impl Facets {
    /// Copy every facet into `cdt`.
    pub fn apply_to(self, cdt: &mut CyberDigitalTwin) {
        cdt.os_info = self.os_info;
        cdt.kernel_config = self.kernel_config;
        cdt.os_security_config = self.os_security_config;
        cdt.memory_config = self.memory_config;
        cdt.credentials = self.credentials;
        cdt.firewall_rules = self.firewall_rules;
        cdt.network_interfaces = self.network_interfaces;
        cdt.encryption_assets = self.encryption_assets;
        cdt.apis = self.apis;
        cdt.app_frameworks = self.app_frameworks;
        cdt.app_config = self.app_config;
        cdt.hw_bom = self.hw_bom;
        cdt.code_artifacts = self.code_artifacts;
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#') && !l.starts_with(';'))
}

fn unquote(s: &str) -> &str {
    let s = s.trim();
    s.strip_prefix('"')
        .and_then(|r| r.strip_suffix('"'))
        .or_else(|| s.strip_prefix('\'').and_then(|r| r.strip_suffix('\'')))
        .unwrap_or(s)
}

fn parse_key_values(text: &str, prefix: &str, out: &mut Settings) {
    for line in content_lines(text) {
        if let Some((k, v)) = line.split_once('=') {
            let k = k.trim();
            if !k.is_empty() {
                out.insert(format!("{}{}", prefix, k), unquote(v).to_string());
            }
        }
    }
}

fn parse_space_separated(text: &str, prefix: &str, out: &mut Settings) {
    for line in content_lines(text) {
        let (k, v) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        out.insert(format!("{}{}", prefix, k), v.trim().to_string());
    }
}

fn parse_os_release(text: &str) -> OsInfo {
    let mut fields = Settings::new();
    parse_key_values(text, "", &mut fields);
    let name = fields
        .get("NAME")
        .or_else(|| fields.get("ID"))
        .cloned()
        .unwrap_or_default();
    let version = fields
        .get("VERSION_ID")
        .or_else(|| fields.get("VERSION"))
        .cloned()
        .unwrap_or_default();
    let id_text = format!(
        "{} {}",
        fields.get("ID").map_or("", String::as_str),
        name
    )
    .to_lowercase();
    let family = if RTOS_MARKERS.iter().any(|m| id_text.contains(m)) {
        OsFamily::RtosLike
    } else {
        OsFamily::LinuxLike
    };
    OsInfo { family, name, version }
}

fn is_unusable_secret(secret: &str) -> bool {
    matches!(secret, "" | "x" | "*") || secret.starts_with('!') || secret.starts_with('*')
}

fn parse_credentials(text: &str, token_file: bool, out: &mut Vec<Credential>) {
    for line in content_lines(text) {
        let mut fields = line.split(':');
        let user = fields.next().unwrap_or("").trim();
        let secret = fields.next().unwrap_or("").trim();
        if user.is_empty() || is_unusable_secret(secret) {
            continue;
        }
        let secret_kind = if has_hash_prefix(secret) {
            SecretKind::Hashed
        } else if token_file {
            SecretKind::Token
        } else {
            SecretKind::Plaintext
        };
        out.push(Credential {
            username: user.to_string(),
            secret: secret.to_string(),
            secret_kind,
        });
    }
}

fn parse_firewall(text: &str, path: &str, out: &mut Vec<FirewallRule>, warnings: &mut Vec<String>) {
    for line in content_lines(text) {
        let mut parts = line.splitn(3, char::is_whitespace);
        let action = match parts.next() {
            Some("allow") => RuleAction::Allow,
            Some("deny") => RuleAction::Deny,
            _ => {
                warnings.push(format!("{}: unparseable rule {:?}", path, line));
                continue;
            }
        };
        let direction = match parts.next() {
            Some("in") => Direction::In,
            Some("out") => Direction::Out,
            _ => {
                warnings.push(format!("{}: unparseable rule {:?}", path, line));
                continue;
            }
        };
        let pattern = parts.next().map_or("*", str::trim).to_string();
        out.push(FirewallRule {
            ordinal: out.len() as u32,
            action,
            direction,
            pattern,
        });
    }
}

/// Classify an interface device name such as `eth0` or `can1`.
pub fn classify_interface_name(name: &str) -> Option<InterfaceKind> {
    let n = name.to_ascii_lowercase();
    let table: [(&str, InterfaceKind); 12] = [
        ("eth", InterfaceKind::Ethernet),
        ("en", InterfaceKind::Ethernet),
        ("wlan", InterfaceKind::Wifi),
        ("wl", InterfaceKind::Wifi),
        ("vcan", InterfaceKind::Can),
        ("can", InterfaceKind::Can),
        ("usb", InterfaceKind::Usb),
        ("hci", InterfaceKind::Bluetooth),
        ("bt", InterfaceKind::Bluetooth),
        ("wwan", InterfaceKind::Cellular),
        ("ppp", InterfaceKind::Cellular),
        ("zb", InterfaceKind::Zigbee),
    ];
    if let Some(kind) = InterfaceKind::from_name(&n) {
        return Some(kind);
    }
    table.iter().find(|(p, _)| n.starts_with(p)).map(|(_, k)| *k)
}

fn parse_interfaces(text: &str, path: &str, out: &mut Vec<InterfaceDecl>, warnings: &mut Vec<String>) {
    for line in content_lines(text) {
        let mut tokens = line.split_whitespace();
        let first = tokens.next().unwrap_or("");
        let name = match first {
            "iface" | "auto" | "allow-hotplug" => tokens.next().unwrap_or(""),
            other => other,
        };
        if name == "lo" {
            continue;
        }
        match classify_interface_name(name) {
            Some(kind) => out.push(InterfaceDecl {
                kind,
                evidence_path: path.to_string(),
            }),
            None => warnings.push(format!("{}: unrecognized interface {:?}", path, name)),
        }
    }
}

fn pem_regex() -> Regex {
    Regex::new(r"-----BEGIN ([A-Z0-9 ]+)-----").expect("static regex")
}

/// Map a PEM label to (kind, algorithm).
pub fn classify_pem_label(label: &str) -> Option<(EncryptionKind, &'static str)> {
    let kind = if label.ends_with("PRIVATE KEY") {
        EncryptionKind::PrivateKey
    } else if label.ends_with("PUBLIC KEY") || label.ends_with("CERTIFICATE") {
        EncryptionKind::PublicKey
    } else {
        return None;
    };
    let algorithm = match label {
        l if l.starts_with("RSA ") => "RSA",
        l if l.starts_with("EC ") => "EC",
        l if l.starts_with("DSA ") => "DSA",
        l if l.starts_with("OPENSSH ") => "OpenSSH",
        l if l.ends_with("CERTIFICATE") => "X509",
        "PUBLIC KEY" => "SPKI",
        _ => "PKCS8",
    };
    Some((kind, algorithm))
}

fn scan_pem(root: &Path, node: &FileNode, re: &Regex) -> Vec<EncryptionAsset> {
    if node.size_bytes > MAX_PEM_SCAN {
        return Vec::new();
    }
    let Ok(bytes) = fs::read(root.join(&node.path)) else {
        return Vec::new();
    };
    let mut found = BTreeSet::new();
    for caps in re.captures_iter(&bytes) {
        let label = String::from_utf8_lossy(&caps[1]).into_owned();
        if let Some((kind, algorithm)) = classify_pem_label(&label) {
            found.insert(EncryptionAsset {
                kind,
                path: node.path.clone(),
                algorithm: algorithm.to_string(),
            });
        }
    }
    found.into_iter().collect()
}

fn app_config_name(path: &str) -> Option<&str> {
    let (dir, file) = path.rsplit_once('/')?;
    if !path_has_suffix(dir, "etc/app") {
        return None;
    }
    file.strip_suffix(".conf").filter(|n| !n.is_empty())
}

fn read_text(root: &Path, node: &FileNode, warnings: &mut Vec<String>) -> Option<String> {
    match fs::read(root.join(&node.path)) {
        Ok(b) => Some(String::from_utf8_lossy(&b).into_owned()),
        Err(e) => {
            warnings.push(format!("{}: {}", node.path, e));
            None
        }
    }
}

/// Harvest every configuration facet from the payload files under `root`.
pub fn harvest_cdt_facets(root: &Path, nodes: &[FileNode]) -> Facets {
    let mut f = Facets::default();
    let payload = payload_nodes(nodes);

    let mut os_release_seen = false;
    let mut shadow_users = BTreeSet::new();
    let mut passwd_creds = Vec::new();
    let mut shadow_creds = Vec::new();
    let mut sysctl_d = Vec::new();

    for node in &payload {
        let p = node.path.as_str();
        let is = |suffix: &str| path_has_suffix(p, suffix);
        if is("etc/os-release") {
            if os_release_seen {
                f.warnings.push(format!("{}: additional os-release ignored", p));
                continue;
            }
            os_release_seen = true;
            if let Some(t) = read_text(root, node, &mut f.warnings) {
                f.os_info = parse_os_release(&t);
            }
        } else if is("etc/sysctl.conf") {
            if let Some(t) = read_text(root, node, &mut f.warnings) {
                parse_key_values(&t, "", &mut f.kernel_config);
            }
        } else if node.parent().ends_with("etc/sysctl.d") && p.ends_with(".conf") {
            sysctl_d.push(*node);
        } else if is("etc/login.defs") {
            if let Some(t) = read_text(root, node, &mut f.warnings) {
                parse_space_separated(&t, "login.", &mut f.os_security_config);
            }
        } else if is("etc/ssh/sshd_config") {
            if let Some(t) = read_text(root, node, &mut f.warnings) {
                parse_space_separated(&t, "sshd.", &mut f.os_security_config);
            }
        } else if is("etc/memory.conf") {
            if let Some(t) = read_text(root, node, &mut f.warnings) {
                parse_key_values(&t, "", &mut f.memory_config);
            }
        } else if is("etc/passwd") {
            if let Some(t) = read_text(root, node, &mut f.warnings) {
                parse_credentials(&t, false, &mut passwd_creds);
            }
        } else if is("etc/shadow") {
            if let Some(t) = read_text(root, node, &mut f.warnings) {
                for line in content_lines(&t) {
                    shadow_users.insert(line.split(':').next().unwrap_or("").to_string());
                }
                parse_credentials(&t, false, &mut shadow_creds);
            }
        } else if is("etc/tokens") {
            if let Some(t) = read_text(root, node, &mut f.warnings) {
                parse_credentials(&t, true, &mut f.credentials);
            }
        } else if is("etc/firewall.rules") {
            if let Some(t) = read_text(root, node, &mut f.warnings) {
                parse_firewall(&t, p, &mut f.firewall_rules, &mut f.warnings);
            }
        } else if is("etc/interfaces") {
            if let Some(t) = read_text(root, node, &mut f.warnings) {
                parse_interfaces(&t, p, &mut f.network_interfaces, &mut f.warnings);
            }
        } else if is("etc/crypto.conf") {
            if let Some(t) = read_text(root, node, &mut f.warnings) {
                let mut settings = Settings::new();
                parse_key_values(&t, "", &mut settings);
                for (k, v) in settings {
                    if k == "protocol" || k.starts_with("protocol.") {
                        for proto in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                            f.encryption_assets.push(EncryptionAsset {
                                kind: EncryptionKind::ProtocolDecl,
                                path: p.to_string(),
                                algorithm: proto.to_string(),
                            });
                        }
                    }
                }
            }
        } else if is("etc/app-frameworks.conf") {
            if let Some(t) = read_text(root, node, &mut f.warnings) {
                let mut settings = Settings::new();
                parse_key_values(&t, "", &mut settings);
                f.app_frameworks
                    .extend(settings.into_iter().map(|(name, version)| AppFramework { name, version }));
            }
        } else if let Some(name) = app_config_name(p) {
            let prefix = format!("{}.", name);
            if let Some(t) = read_text(root, node, &mut f.warnings) {
                parse_key_values(&t, &prefix, &mut f.app_config);
            }
        } else if is("etc/peripherals") {
            if let Some(t) = read_text(root, node, &mut f.warnings) {
                f.hw_bom.peripherals.extend(content_lines(&t).map(str::to_string));
            }
        }
    }
    for node in sysctl_d {
        if let Some(t) = read_text(root, node, &mut f.warnings) {
            parse_key_values(&t, "", &mut f.kernel_config);
        }
    }

    // A shadow entry supersedes the passwd entry for the same user.
    passwd_creds.retain(|c| !shadow_users.contains(&c.username));
    f.credentials.extend(passwd_creds);
    f.credentials.extend(shadow_creds);
    f.credentials.sort();
    f.credentials.dedup();

    let re = pem_regex();
    let (pem, artifacts): (Vec<Vec<EncryptionAsset>>, Vec<Option<(String, Vec<u8>)>>) = payload
        .par_iter()
        .map(|node| {
            let pem = scan_pem(root, node, &re);
            let artifact = fs::read(root.join(&node.path))
                .ok()
                .filter(|b| has_magic(b))
                .map(|b| (node.path.clone(), b));
            (pem, artifact)
        })
        .unzip();
    f.encryption_assets.extend(pem.into_iter().flatten());

    let mut apis = BTreeSet::new();
    for (path, bytes) in artifacts.into_iter().flatten() {
        let mut image = match parse_binary(bytes) {
            Ok(img) => img,
            Err(e) => {
                f.warnings.push(format!("{}: MVFW header unreadable: {}", path, e));
                continue;
            }
        };
        if f.hw_bom.cpu_arch == CpuArch::Unknown {
            f.hw_bom.cpu_arch = image.arch.into();
            f.hw_bom.cpu_bits = image.arch.bits();
        } else if f.hw_bom.cpu_arch != CpuArch::from(image.arch) {
            f.warnings.push(format!("{}: architecture {} differs from {}", path, image.arch, f.hw_bom.cpu_arch));
        }
        match map_sections(&mut image) {
            Ok(_) => apis.extend(image.symbols.into_iter().map(|s| s.name)),
            Err(e) => f.warnings.push(format!("{}: {}", path, e)),
        }
        f.code_artifacts.push(path);
    }
    f.apis = apis.into_iter().collect();

    f.hw_bom.peripherals.sort();
    f.hw_bom.peripherals.dedup();
    f.network_interfaces.sort();
    f.network_interfaces.dedup();
    f.encryption_assets.sort();
    f.encryption_assets.dedup();
    f.app_frameworks.sort();
    f.code_artifacts.sort();
    for w in &f.warnings {
        warn!("{}", w);
    }
    f
}
