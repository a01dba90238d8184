use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SIGNATURES: &str = r#"{"vendor":"sqlite","product":"sqlite","indicators":[{"kind":"filename","pattern":"libsqlite3.so.*","version_capture":1}]}"#;
const FEED: &str = r#"[{"cve_id":"CVE-2020-11656","cwe_ids":["CWE-416"],"cvss":9.8,"affected":[{"vendor":"sqlite","product":"sqlite","version_end_excl":"3.32.0"}]}]"#;
const REQUIREMENTS: &str = r#"[{"req_id":"REQ-HARD","title":"System hardening","source":"UNECE WP.29"}]"#;
const MAPPING: &str = "cwe_id,req_id\nCWE-416,REQ-HARD\n";

fn cdt(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdt"))
        .args(args)
        .current_dir(cwd)
        .env("CDT_LOG", "error")
        .output()
        .unwrap()
}

fn setup(sqlite_version: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let fw = dir.path().join("fw");
    fs::create_dir_all(fw.join("usr/lib")).unwrap();
    fs::create_dir_all(fw.join("etc")).unwrap();
    fs::write(fw.join(format!("usr/lib/libsqlite3.so.{}", sqlite_version)), b"\x7fELF").unwrap();
    fs::write(fw.join("etc/sysctl.conf"), "kernel.randomize_va_space=2\n").unwrap();
    fs::write(fw.join("etc/firewall.rules"), "deny in *\n").unwrap();
    fs::write(dir.path().join("sigs.jsonl"), SIGNATURES).unwrap();
    fs::write(dir.path().join("cves.json"), FEED).unwrap();
    fs::write(dir.path().join("req.json"), REQUIREMENTS).unwrap();
    fs::write(dir.path().join("map.csv"), MAPPING).unwrap();
    dir
}

#[test]
fn create_then_analyze() {
    let dir = setup("3.31.1");
    let d = dir.path();
    let out = cdt(&["create", "fw", "--signatures", "sigs.jsonl", "--out", "cdt.json"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(d.join("cdt.json")).unwrap()).unwrap();
    assert_eq!(doc["sbom"][0]["version"], "3.31.1");

    let args = [
        "analyze", "cdt.json", "--cve-db", "cves.json", "--requirements", "req.json", "--mapping", "map.csv", "--out",
        "report.csv",
    ];
    let out = cdt(&args, d);
    assert_eq!(out.status.code(), Some(1));
    let report = fs::read_to_string(d.join("report.csv")).unwrap();
    assert!(report.contains("CVE-2020-11656"));
    assert!(report.lines().any(|l| l.ends_with(",REQ-HARD,unfulfilled")));
}

#[test]
fn run_and_diff() {
    let dir = setup("3.32.0");
    let d = dir.path();
    fs::write(
        d.join("pipeline.toml"),
        "image_path = \"fw\"\nsignature_db_path = \"sigs.jsonl\"\ncve_db_path = \"cves.json\"\nrequirements_path = \"req.json\"\nmapping_path = \"map.csv\"\noutput_dir = \"out\"\n",
    )
    .unwrap();
    assert_eq!(cdt(&["run", "pipeline.toml"], d).status.code(), Some(0));
    fs::copy(d.join("out/report.csv"), d.join("before.csv")).unwrap();

    fs::rename(d.join("fw/usr/lib/libsqlite3.so.3.32.0"), d.join("fw/usr/lib/libsqlite3.so.3.31.1")).unwrap();
    assert_eq!(cdt(&["run", "pipeline.toml"], d).status.code(), Some(1));

    let out = cdt(&["diff", "before.csv", "out/report.csv"], d);
    assert!(out.status.success());
    let diff: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(diff["added"].as_array().unwrap().len(), 1);
    assert_eq!(diff["status_changes"][0]["new"], "unfulfilled");
}

#[test]
fn execution_errors_exit_2() {
    let dir = setup("3.31.1");
    let d = dir.path();
    fs::write(
        d.join("pipeline.toml"),
        "image_path = \"fw\"\nsignature_db_path = \"sigs.jsonl\"\ncve_db_path = \"missing.json\"\nrequirements_path = \"req.json\"\nmapping_path = \"map.csv\"\noutput_dir = \"out\"\n",
    )
    .unwrap();
    let out = cdt(&["run", "pipeline.toml"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config stage failed"));
    assert_eq!(cdt(&["diff", "map.csv", "map.csv"], d).status.code(), Some(2));
}

#[test]
fn watch_with_no_changes_prints_nothing() {
    let dir = setup("3.31.1");
    let d = dir.path();
    fs::write(
        d.join("pipeline.toml"),
        "image_path = \"fw\"\nsignature_db_path = \"sigs.jsonl\"\ncve_db_path = \"cves.json\"\nrequirements_path = \"req.json\"\nmapping_path = \"map.csv\"\noutput_dir = \"out\"\n",
    )
    .unwrap();
    let out = cdt(&["watch", "pipeline.toml", "--interval", "0", "--max-ticks", "2"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
}

#[test]
fn assemble_and_scan_binary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("uaf.s"), "main:\n  ALLOC r1, 8\n  FREE r1\n  LOAD r2, [r1]\n  RET\n").unwrap();
    for arch in ["mv32", "mv16"] {
        let bin = format!("uaf-{}.mvfw", arch);
        assert!(cdt(&["assemble", "uaf.s", "--arch", arch, "--out", &bin], d).status.success());
        let out = cdt(&["scan-binary", &bin], d);
        assert!(out.status.success());
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(v["findings"][0]["cwe_id"], "CWE-416");
        assert_eq!(v["findings"][0]["validation"], "confirmed");
    }
    fs::write(d.join("bad.mvfw"), b"ELF\x7f").unwrap();
    let out = cdt(&["scan-binary", "bad.mvfw"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("magic"));
}
