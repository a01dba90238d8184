//! Fixture builders shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use cdt_core::binscan::{asm, Arch};
use cdt_core::extractor::pack::{gzip, pack_tar, PackEntry};
use cdt_core::pipeline::PipelineConfig;

pub const SQLITE_SIGNATURE: &str = r#"{"vendor":"sqlite","product":"sqlite","origin":"open_source","licenses":["blessing"],"latest_version":"3.45.0","indicators":[{"kind":"filename","pattern":"libsqlite3.so.*","version_capture":1}]}"#;

pub const GOLDEN_FEED: &str = r#"[
  {"cve_id":"CVE-2020-11656","description":"In SQLite through 3.31.1, the ALTER TABLE implementation has a use-after-free.","cwe_ids":["CWE-416"],"cvss":9.8,
   "affected":[{"vendor":"sqlite","product":"sqlite","version_end_excl":"3.32.0"}]},
  {"cve_id":"CVE-2020-13631","description":"SQLite before 3.32.0 allows a virtual table to be renamed to the name of one of its shadow tables.","cwe_ids":[],"cvss":5.5,
   "affected":[{"vendor":"sqlite","product":"sqlite","version_end_excl":"3.32.0"}]}
]"#;

pub const REQUIREMENTS: &str = r#"[
  {"req_id":"REQ-HARD","title":"System hardening","source":"UNECE WP.29 Annex 5 4.3.6","policy_check_ids":[]},
  {"req_id":"REQ-PRIV","title":"Protection of privacy information","source":"UNECE WP.29 Annex 5 4.3.6","policy_check_ids":[]}
]"#;

pub const MAPPING: &str = "cwe_id,req_id\nCWE-416,REQ-HARD\n";

/// Configuration files of a device that passes every policy check.
pub fn hardened_etc() -> Vec<PackEntry> {
    vec![
        PackEntry::file("etc/os-release", "NAME=\"Linux\"\nVERSION_ID=5.4\n"),
        PackEntry::file("etc/sysctl.conf", "kernel.randomize_va_space=2\n"),
        PackEntry::file("etc/firewall.rules", "allow in tcp:443\ndeny in *\n"),
        PackEntry::file("etc/shadow", "root:$6$salt$hash:19000:0:99999:7:::\n"),
    ]
}

pub fn firmware_with_sqlite(version: &str) -> Vec<PackEntry> {
    let mut entries = hardened_etc();
    entries.push(PackEntry::file(format!("usr/lib/libsqlite3.so.{}", version), vec![0x7f, b'E', b'L', b'F', 1, 2, 3]));
    entries
}

/// Write `entries` as a gzipped tarball at `path`.
pub fn write_tgz(path: &Path, entries: &[PackEntry]) {
    fs::write(path, gzip(&pack_tar(entries).unwrap()).unwrap()).unwrap();
}

pub fn mvfw(program: &str) -> Vec<u8> {
    asm::assemble(program, Arch::Mv32).unwrap()
}

/// A workspace directory holding every pipeline input and a config file.
pub struct Workspace {
    pub dir: tempfile::TempDir,
}

impl Workspace {
    pub fn new(firmware: &[PackEntry], signatures: &str, feed: &str, requirements: &str, mapping: &str) -> Workspace {
        let ws = Workspace {
            dir: tempfile::tempdir().unwrap(),
        };
        write_tgz(&ws.path("firmware.tar.gz"), firmware);
        ws.write("signatures.jsonl", signatures);
        ws.write("cves.json", feed);
        ws.write("requirements.json", requirements);
        ws.write("mapping.csv", mapping);
        ws.write(
            "pipeline.toml",
            "image_path = \"firmware.tar.gz\"\nsignature_db_path = \"signatures.jsonl\"\ncve_db_path = \"cves.json\"\nrequirements_path = \"requirements.json\"\nmapping_path = \"mapping.csv\"\noutput_dir = \"out\"\n",
        );
        ws
    }

    pub fn golden() -> Workspace {
        Workspace::new(&firmware_with_sqlite("3.31.1"), SQLITE_SIGNATURE, GOLDEN_FEED, REQUIREMENTS, MAPPING)
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn write(&self, rel: &str, content: impl AsRef<[u8]>) {
        fs::write(self.path(rel), content).unwrap();
    }

    pub fn read(&self, rel: &str) -> String {
        fs::read_to_string(self.path(rel)).unwrap()
    }

    pub fn config(&self) -> PipelineConfig {
        PipelineConfig::load(&self.path("pipeline.toml")).unwrap()
    }

    /// Append one record to the JSON array feed.
    pub fn append_cve(&self, record: &str) {
        let feed = self.read("cves.json");
        let end = feed.rfind(']').unwrap();
        let sep = if feed[..end].trim_end().ends_with('[') { "" } else { "," };
        self.write("cves.json", format!("{}{}\n{}\n]", &feed[..end].trim_end(), sep, record));
    }
}
