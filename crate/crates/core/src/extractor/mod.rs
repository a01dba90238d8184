//! Recursive firmware extraction.
//!
//! An image (a file or a directory) is copied into a destination directory,
//! then every recognised container is expanded next to itself under
//! `<name>.extracted/`, recursively, until only opaque files remain. The
//! result is the flattened, path-sorted list of [`FileNode`]s of the
//! destination tree.
//!
//! Corrupt containers never abort a run: they are kept as opaque files and a
//! warning is recorded. Exceeding the nesting limit is a hard error.

mod flat;
pub mod pack;
mod validate;

use std::fs::{self, File};
use std::io::{self, Read};
use std::path::{Component, Path, PathBuf};

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

use crate::digest::{sha256_hex, DigestBuilder};

pub use flat::{read_flat, write_flat, FlatEntry, FlatError, FLAT_MAGIC};
pub use validate::{parse_manifest, validate_extraction, CheckResult, ManifestEntry, ValidationReport};

pub const DEFAULT_MAX_DEPTH: usize = 8;

/// Number of leading bytes inspected by [`detect_format`].
pub const SNIFF_LEN: usize = 512;

/// Suffix of the directory a container is expanded into.
pub const EXTRACTED_SUFFIX: &str = ".extracted";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContainerFormat {
    Directory,
    TarLike,
    ZipLike,
    GzipLike,
    FlatImage,
    Opaque,
}

impl ContainerFormat {
    pub fn is_container(self) -> bool {
        !matches!(self, ContainerFormat::Opaque)
    }
}

/// Identify a file's container format from its leading bytes and name.
///
/// Magic numbers win over the extension. Unrecognised input is opaque.
pub fn detect_format(leading: &[u8], filename: &str) -> ContainerFormat {
    if leading.starts_with(&[0x1f, 0x8b]) {
        return ContainerFormat::GzipLike;
    }
    if leading.starts_with(b"PK\x03\x04") || leading.starts_with(b"PK\x05\x06") {
        return ContainerFormat::ZipLike;
    }
    if leading.starts_with(FLAT_MAGIC) {
        return ContainerFormat::FlatImage;
    }
    if leading.len() >= 262 && &leading[257..262] == b"ustar" {
        return ContainerFormat::TarLike;
    }
    let name = filename.to_ascii_lowercase();
    if name.ends_with(".tar") {
        ContainerFormat::TarLike
    } else if name.ends_with(".zip") {
        ContainerFormat::ZipLike
    } else if name.ends_with(".gz") || name.ends_with(".tgz") {
        ContainerFormat::GzipLike
    } else if name.ends_with(".flt") {
        ContainerFormat::FlatImage
    } else {
        ContainerFormat::Opaque
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Regular,
    Directory,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FileNode {
    /// Relative, `/`-separated path inside the extraction root.
    pub path: String,
    pub kind: NodeKind,
    /// SHA-256 of the content, for regular files only.
    pub content_digest: Option<String>,
    pub size_bytes: u64,
}

impl FileNode {
    pub fn is_regular(&self) -> bool {
        self.kind == NodeKind::Regular
    }

    pub fn file_name(&self) -> &str {
        self.path.rsplit('/').next().unwrap_or(&self.path)
    }

    /// Parent directory, `""` for top-level nodes.
    pub fn parent(&self) -> &str {
        self.path.rsplit_once('/').map_or("", |(p, _)| p)
    }
}

/// True when `path` is `suffix` or ends with `/suffix`.
pub fn path_has_suffix(path: &str, suffix: &str) -> bool {
    path == suffix
        || (path.len() > suffix.len()
            && path.ends_with(suffix)
            && path.as_bytes()[path.len() - suffix.len() - 1] == b'/')
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractWarning {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extraction {
    pub nodes: Vec<FileNode>,
    pub warnings: Vec<ExtractWarning>,
}

impl Extraction {
    /// Digest over all node paths and content digests.
    pub fn tree_digest(&self) -> String {
        tree_digest(&self.nodes)
    }
}

pub fn tree_digest(nodes: &[FileNode]) -> String {
    let mut builder = DigestBuilder::new();
    for node in nodes {
        builder.part(node.path.as_bytes());
        builder.part(node.content_digest.as_deref().unwrap_or("dir").as_bytes());
    }
    builder.finish_hex()
}

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("max_depth must be at least 1")]
    InvalidDepth,
    #[error("nesting depth {max_depth} exceeded at {path}")]
    DepthExceeded { path: String, max_depth: usize },
    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExtractError + '_ {
    move |source| ExtractError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Normalise an archive member name into a safe relative path.
///
/// Returns `None` for names that are empty, absolute on another platform, or
/// climb out of the root with `..`.
pub fn sanitize_member_path(name: &str) -> Option<PathBuf> {
    let mut out = PathBuf::new();
    for part in name.split(['/', '\\']) {
        match part {
            "" | "." => continue,
            ".." => return None,
            p if p.contains(':') => return None,
            p => out.push(p),
        }
    }
    if out.as_os_str().is_empty() {
        None
    } else {
        Some(out)
    }
}

struct Extractor<'a> {
    root: &'a Path,
    max_depth: usize,
    warnings: Vec<ExtractWarning>,
}

impl Extractor<'_> {
    fn rel(&self, path: &Path) -> String {
        rel_path(self.root, path)
    }

    fn warn(&mut self, path: &Path, message: impl Into<String>) {
        let message = message.into();
        let path = self.rel(path);
        warn!("{}: {}", path, message);
        self.warnings.push(ExtractWarning { path, message });
    }

    fn process_dir(&mut self, dir: &Path, level: usize) -> Result<(), ExtractError> {
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io_err(dir))?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()
            .map_err(io_err(dir))?;
        entries.sort();

        let mut containers = Vec::new();
        let mut subdirs = Vec::new();
        for path in entries {
            let meta = fs::symlink_metadata(&path).map_err(io_err(&path))?;
            if meta.is_file() {
                if self.process_file(&path, level)? {
                    containers.push(path);
                }
            } else if meta.is_dir() {
                subdirs.push(path);
            }
        }
        for sub in subdirs {
            // Already handled as the expansion of a sibling container.
            if containers.iter().any(|c| expansion_dir(c) == sub) {
                continue;
            }
            self.process_dir(&sub, level)?;
        }
        Ok(())
    }

    /// Returns true when the file was expanded as a container.
    fn process_file(&mut self, path: &Path, level: usize) -> Result<bool, ExtractError> {
        let mut head = Vec::with_capacity(SNIFF_LEN);
        File::open(path)
            .and_then(|f| f.take(SNIFF_LEN as u64).read_to_end(&mut head))
            .map_err(io_err(path))?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let format = detect_format(&head, &name);
        if !format.is_container() {
            return Ok(false);
        }
        if level > self.max_depth {
            return Err(ExtractError::DepthExceeded {
                path: self.rel(path),
                max_depth: self.max_depth,
            });
        }
        let target = expansion_dir(path);
        if target.exists() {
            fs::remove_dir_all(&target).map_err(io_err(&target))?;
        }
        fs::create_dir_all(&target).map_err(io_err(&target))?;
        debug!("expanding {} as {:?}", self.rel(path), format);

        if let Err(err) = self.expand(path, &name, format, &target) {
            self.warn(path, format!("corrupt {:?} container kept as opaque: {}", format, err));
            fs::remove_dir_all(&target).map_err(io_err(&target))?;
            return Ok(false);
        }
        self.process_dir(&target, level + 1)?;
        Ok(true)
    }

    fn expand(&mut self, path: &Path, name: &str, format: ContainerFormat, target: &Path) -> io::Result<()> {
        match format {
            ContainerFormat::TarLike => self.expand_tar(path, target),
            ContainerFormat::ZipLike => self.expand_zip(path, target),
            ContainerFormat::GzipLike => {
                let mut decoder = flate2::read::GzDecoder::new(File::open(path)?);
                let mut content = Vec::new();
                decoder.read_to_end(&mut content)?;
                fs::write(target.join(gunzip_name(name)), content)
            }
            ContainerFormat::FlatImage => {
                let data = fs::read(path)?;
                let entries = read_flat(&data).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
                for entry in entries {
                    match sanitize_member_path(&entry.path) {
                        Some(rel) => write_member(target, &rel, &entry.content)?,
                        None => self.warn(path, format!("skipped unsafe member {:?}", entry.path)),
                    }
                }
                Ok(())
            }
            ContainerFormat::Directory | ContainerFormat::Opaque => Ok(()),
        }
    }

    fn expand_tar(&mut self, path: &Path, target: &Path) -> io::Result<()> {
        let mut archive = tar::Archive::new(File::open(path)?);
        for entry in archive.entries()? {
            let mut entry = entry?;
            let member = String::from_utf8_lossy(&entry.path_bytes()).into_owned();
            let Some(rel) = sanitize_member_path(&member) else {
                self.warn(path, format!("skipped unsafe member {:?}", member));
                continue;
            };
            match entry.header().entry_type() {
                tar::EntryType::Regular | tar::EntryType::Continuous => {
                    let mut content = Vec::with_capacity(entry.size() as usize);
                    entry.read_to_end(&mut content)?;
                    write_member(target, &rel, &content)?;
                }
                tar::EntryType::Directory => fs::create_dir_all(target.join(&rel))?,
                tar::EntryType::XGlobalHeader | tar::EntryType::XHeader => {}
                other => self.warn(path, format!("ignored {:?} member {:?}", other, member)),
            }
        }
        Ok(())
    }

    fn expand_zip(&mut self, path: &Path, target: &Path) -> io::Result<()> {
        let mut archive = zip::ZipArchive::new(File::open(path)?).map_err(io::Error::other)?;
        for i in 0..archive.len() {
            let mut file = archive.by_index(i).map_err(io::Error::other)?;
            let member = file.name().to_string();
            let Some(rel) = sanitize_member_path(&member) else {
                self.warn(path, format!("skipped unsafe member {:?}", member));
                continue;
            };
            if file.is_symlink() {
                self.warn(path, format!("ignored symlink member {:?}", member));
            } else if file.is_dir() {
                fs::create_dir_all(target.join(&rel))?;
            } else {
                let mut content = Vec::with_capacity(file.size() as usize);
                file.read_to_end(&mut content)?;
                write_member(target, &rel, &content)?;
            }
        }
        Ok(())
    }
}

fn write_member(target: &Path, rel: &Path, content: &[u8]) -> io::Result<()> {
    let dest = target.join(rel);
    if let Some(parent) = dest.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(dest, content)
}

fn expansion_dir(container: &Path) -> PathBuf {
    let mut name = container.file_name().unwrap_or_default().to_os_string();
    name.push(EXTRACTED_SUFFIX);
    container.with_file_name(name)
}

fn gunzip_name(name: &str) -> String {
    let lower = name.to_ascii_lowercase();
    if lower.ends_with(".tgz") {
        format!("{}.tar", &name[..name.len() - 4])
    } else if lower.ends_with(".gz") && name.len() > 3 {
        name[..name.len() - 3].to_string()
    } else {
        format!("{}.out", name)
    }
}

fn rel_path(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .filter_map(|c| match c {
            Component::Normal(s) => Some(s.to_string_lossy().into_owned()),
            _ => None,
        })
        .collect::<Vec<_>>()
        .join("/")
}

fn copy_tree(src: &Path, dest: &Path, ex: &mut Extractor<'_>) -> Result<(), ExtractError> {
    for entry in WalkDir::new(src).min_depth(1).sort_by_file_name() {
        let entry = entry.map_err(|e| ExtractError::Io {
            path: src.display().to_string(),
            source: e.into(),
        })?;
        let rel = entry.path().strip_prefix(src).expect("walk stays under root");
        let out = dest.join(rel);
        let ft = entry.file_type();
        if ft.is_dir() {
            fs::create_dir_all(&out).map_err(io_err(&out))?;
        } else if ft.is_file() {
            fs::copy(entry.path(), &out).map_err(io_err(entry.path()))?;
        } else {
            ex.warnings.push(ExtractWarning {
                path: rel_path(src, entry.path()),
                message: "ignored symlink or special file".into(),
            });
        }
    }
    Ok(())
}

/// List `root` as sorted [`FileNode`]s, hashing regular files in parallel.
pub fn list_tree(root: &Path) -> Result<Vec<FileNode>, ExtractError> {
    let mut entries = Vec::new();
    for entry in WalkDir::new(root).min_depth(1) {
        let entry = entry.map_err(|e| ExtractError::Io {
            path: root.display().to_string(),
            source: e.into(),
        })?;
        let ft = entry.file_type();
        if ft.is_dir() || ft.is_file() {
            entries.push((rel_path(root, entry.path()), entry.path().to_path_buf(), ft.is_dir()));
        }
    }
    let mut nodes = entries
        .into_par_iter()
        .map(|(rel, path, is_dir)| {
            if is_dir {
                return Ok(FileNode {
                    path: rel,
                    kind: NodeKind::Directory,
                    content_digest: None,
                    size_bytes: 0,
                });
            }
            let content = fs::read(&path).map_err(io_err(&path))?;
            Ok(FileNode {
                path: rel,
                kind: NodeKind::Regular,
                content_digest: Some(sha256_hex(&content)),
                size_bytes: content.len() as u64,
            })
        })
        .collect::<Result<Vec<_>, ExtractError>>()?;
    nodes.sort();
    Ok(nodes)
}

/// Extract `image` (file or directory) into `dest`, expanding nested
/// containers up to `max_depth` levels.
pub fn extract_recursive(image: &Path, dest: &Path, max_depth: usize) -> Result<Extraction, ExtractError> {
    if max_depth == 0 {
        return Err(ExtractError::InvalidDepth);
    }
    fs::create_dir_all(dest).map_err(io_err(dest))?;
    let mut ex = Extractor {
        root: dest,
        max_depth,
        warnings: Vec::new(),
    };
    let meta = fs::metadata(image).map_err(io_err(image))?;
    if meta.is_dir() {
        copy_tree(image, dest, &mut ex)?;
    } else {
        let name = image.file_name().ok_or_else(|| ExtractError::Io {
            path: image.display().to_string(),
            source: io::Error::new(io::ErrorKind::InvalidInput, "image has no file name"),
        })?;
        let copy = dest.join(name);
        fs::copy(image, &copy).map_err(io_err(image))?;
    }
    ex.process_dir(dest, 1)?;
    let warnings = ex.warnings;
    Ok(Extraction {
        nodes: list_tree(dest)?,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::pack::*;
    use super::*;

    #[test]
    fn magic_detection() {
        assert_eq!(detect_format(&[0x1f, 0x8b, 8, 0, 0, 0, 0, 0], "x.bin"), ContainerFormat::GzipLike);
        assert_eq!(detect_format(b"PK\x03\x04rest", "x.bin"), ContainerFormat::ZipLike);
        assert_eq!(detect_format(b"FLT1\0\0\0\0", "dump"), ContainerFormat::FlatImage);
        assert_eq!(detect_format(&[0x13, 0x37, 0xde, 0xad, 0xbe, 0xef, 1, 2], "x.bin"), ContainerFormat::Opaque);
        // magic beats extension
        assert_eq!(detect_format(b"PK\x03\x04", "x.tar"), ContainerFormat::ZipLike);
        let tar = pack_tar(&[PackEntry::file("a", "b")]).unwrap();
        assert_eq!(detect_format(&tar[..SNIFF_LEN], "noext"), ContainerFormat::TarLike);
        assert_eq!(detect_format(&[0u8; 16], "old.tar"), ContainerFormat::TarLike);
    }

    #[test]
    fn member_paths_are_sanitized() {
        assert_eq!(sanitize_member_path("./a/b"), Some(PathBuf::from("a/b")));
        assert_eq!(sanitize_member_path("/etc/passwd"), Some(PathBuf::from("etc/passwd")));
        assert_eq!(sanitize_member_path("../evil"), None);
        assert_eq!(sanitize_member_path("a/../../evil"), None);
        assert_eq!(sanitize_member_path("C:\\x"), None);
        assert_eq!(sanitize_member_path("./"), None);
    }

    #[test]
    fn gunzip_names() {
        assert_eq!(gunzip_name("rootfs.tar.gz"), "rootfs.tar");
        assert_eq!(gunzip_name("x.tgz"), "x.tar");
        assert_eq!(gunzip_name("blob"), "blob.out");
    }

    #[test]
    fn suffix_matching() {
        assert!(path_has_suffix("etc/passwd", "etc/passwd"));
        assert!(path_has_suffix("fw.tar.extracted/etc/passwd", "etc/passwd"));
        assert!(!path_has_suffix("fw/xetc/passwd", "etc/passwd"));
    }

    #[test]
    fn nested_zip_tar_file() {
        let dir = tempfile::tempdir().unwrap();
        let tar = pack_tar(&[PackEntry::file("docs/a.txt", "hello")]).unwrap();
        let zip = pack_zip(&[PackEntry::file("inner.tar", tar)]).unwrap();
        let image = dir.path().join("fw.zip");
        fs::write(&image, zip).unwrap();
        let out = extract_recursive(&image, &dir.path().join("out"), 8).unwrap();
        let node = out
            .nodes
            .iter()
            .find(|n| n.path == "fw.zip.extracted/inner.tar.extracted/docs/a.txt")
            .expect("nested file present");
        assert_eq!(node.content_digest.as_deref(), Some(sha256_hex(b"hello").as_str()));
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn directory_image_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("src");
        fs::create_dir_all(src.join("etc")).unwrap();
        fs::write(src.join("etc/os-release"), "ID=linux\n").unwrap();
        fs::write(src.join("readme"), "x").unwrap();
        let out = extract_recursive(&src, &dir.path().join("out"), 8).unwrap();
        let paths: Vec<&str> = out.nodes.iter().map(|n| n.path.as_str()).collect();
        assert_eq!(paths, ["etc", "etc/os-release", "readme"]);
    }

    #[test]
    fn corrupt_container_degrades_to_opaque() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("src");
        fs::create_dir_all(&src).unwrap();
        fs::write(src.join("broken.zip"), b"PK\x03\x04 this is not really a zip").unwrap();
        fs::write(src.join("ok.txt"), "fine").unwrap();
        let out = extract_recursive(&src, &dir.path().join("out"), 8).unwrap();
        let paths: Vec<&str> = out.nodes.iter().map(|n| n.path.as_str()).collect();
        assert_eq!(paths, ["broken.zip", "ok.txt"]);
        assert_eq!(out.warnings.len(), 1);
        assert_eq!(out.warnings[0].path, "broken.zip");
    }

    #[test]
    fn depth_limit_names_innermost_archive() {
        let dir = tempfile::tempdir().unwrap();
        let mut blob = pack_zip(&[PackEntry::file("payload.txt", "x")]).unwrap();
        // 9 nested zips: level1.zip > level2.zip > ... > level9.zip
        for level in (1..9).rev() {
            blob = pack_zip(&[PackEntry::file(format!("level{}.zip", level + 1), blob)]).unwrap();
        }
        let image = dir.path().join("level1.zip");
        fs::write(&image, &blob).unwrap();
        match extract_recursive(&image, &dir.path().join("out"), 8) {
            Err(ExtractError::DepthExceeded { path, max_depth }) => {
                assert_eq!(max_depth, 8);
                assert!(path.ends_with("level9.zip"), "{path}");
            }
            other => panic!("expected depth error, got {other:?}"),
        }
        let ok = extract_recursive(&image, &dir.path().join("out9"), 9).unwrap();
        assert!(ok.nodes.iter().any(|n| n.path.ends_with("level9.zip.extracted/payload.txt")));
    }

    #[test]
    fn traversal_members_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let flat = pack_flat(&[PackEntry::file("../../escape", "x"), PackEntry::file("ok", "y")]).unwrap();
        let image = dir.path().join("dump.bin");
        fs::write(&image, flat).unwrap();
        let out = extract_recursive(&image, &dir.path().join("out"), 8).unwrap();
        assert!(out.nodes.iter().all(|n| !n.path.contains("..")));
        assert!(out.nodes.iter().any(|n| n.path == "dump.bin.extracted/ok"));
        assert_eq!(out.warnings.len(), 1);
        assert!(!dir.path().join("escape").exists());
    }

    #[test]
    fn reextracting_output_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let inner = gzip(&pack_tar(&[PackEntry::file("bin/app", "code")]).unwrap()).unwrap();
        let zip = pack_zip(&[PackEntry::file("rootfs.tar.gz", inner), PackEntry::file("notes", "n")]).unwrap();
        let image = dir.path().join("fw.zip");
        fs::write(&image, zip).unwrap();
        let first = extract_recursive(&image, &dir.path().join("a"), 8).unwrap();
        let second = extract_recursive(&dir.path().join("a"), &dir.path().join("b"), 8).unwrap();
        assert_eq!(first.nodes, second.nodes);
        let again = extract_recursive(&image, &dir.path().join("c"), 8).unwrap();
        assert_eq!(first, again);
    }
}
