//! Builders for the supported container formats.
//!
//! Used to produce fixtures and synthetic firmware images. Output is
//! deterministic: timestamps are fixed and entries keep the given order.

use std::io::{self, Cursor, Write};

use flate2::write::GzEncoder;
use flate2::Compression;
use zip::write::SimpleFileOptions;

use super::flat::{write_flat, FlatEntry};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PackEntry {
    File { path: String, content: Vec<u8> },
    Dir { path: String },
}

impl PackEntry {
    pub fn file(path: impl Into<String>, content: impl Into<Vec<u8>>) -> PackEntry {
        PackEntry::File {
            path: path.into(),
            content: content.into(),
        }
    }

    pub fn dir(path: impl Into<String>) -> PackEntry {
        PackEntry::Dir { path: path.into() }
    }
}

pub fn pack_tar(entries: &[PackEntry]) -> io::Result<Vec<u8>> {
    let mut builder = tar::Builder::new(Vec::new());
    for entry in entries {
        let mut header = tar::Header::new_gnu();
        header.set_mtime(0);
        header.set_uid(0);
        header.set_gid(0);
        match entry {
            PackEntry::File { path, content } => {
                header.set_entry_type(tar::EntryType::Regular);
                header.set_mode(0o644);
                header.set_size(content.len() as u64);
                builder.append_data(&mut header, path, content.as_slice())?;
            }
            PackEntry::Dir { path } => {
                header.set_entry_type(tar::EntryType::Directory);
                header.set_mode(0o755);
                header.set_size(0);
                builder.append_data(&mut header, path, io::empty())?;
            }
        }
    }
    builder.into_inner()
}

pub fn pack_zip(entries: &[PackEntry]) -> io::Result<Vec<u8>> {
    let mut writer = zip::ZipWriter::new(Cursor::new(Vec::new()));
    let options = SimpleFileOptions::default()
        .compression_method(zip::CompressionMethod::Deflated)
        .last_modified_time(zip::DateTime::default());
    for entry in entries {
        match entry {
            PackEntry::File { path, content } => {
                writer.start_file(path.as_str(), options).map_err(io::Error::other)?;
                writer.write_all(content)?;
            }
            PackEntry::Dir { path } => {
                writer.add_directory(path.as_str(), options).map_err(io::Error::other)?;
            }
        }
    }
    Ok(writer.finish().map_err(io::Error::other)?.into_inner())
}

pub fn gzip(content: &[u8]) -> io::Result<Vec<u8>> {
    let mut encoder = GzEncoder::new(Vec::new(), Compression::fast());
    encoder.write_all(content)?;
    encoder.finish()
}

/// Directory entries are dropped; the flat format only stores files.
pub fn pack_flat(entries: &[PackEntry]) -> io::Result<Vec<u8>> {
    let files: Vec<FlatEntry> = entries
        .iter()
        .filter_map(|e| match e {
            PackEntry::File { path, content } => Some(FlatEntry {
                path: path.clone(),
                content: content.clone(),
            }),
            PackEntry::Dir { .. } => None,
        })
        .collect();
    write_flat(&files).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))
}
