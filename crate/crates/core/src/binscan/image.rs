//! The MVFW container: header, section table and symbol table.
//!
//! ```text
//! "MVFW" | u8 format version (1) | u8 arch (1 = MV32, 2 = MV16) | u16 LE section count
//! per section: u8 kind (1 code, 2 data, 3 symtab) | u32 LE offset | u32 LE length
//! symtab entry: u16 LE name length | name bytes | u32 LE code byte offset
//! ```
//!
//! Offsets are absolute within the file.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::BinaryError;
use crate::model::CpuArch;

pub const MAGIC: &[u8; 4] = b"MVFW";
pub const FORMAT_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 8;
pub const SECTION_ENTRY_LEN: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Arch {
    #[serde(rename = "MV32")]
    Mv32,
    #[serde(rename = "MV16")]
    Mv16,
}

impl Arch {
    pub fn from_code(code: u8) -> Option<Arch> {
        match code {
            1 => Some(Arch::Mv32),
            2 => Some(Arch::Mv16),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Arch::Mv32 => 1,
            Arch::Mv16 => 2,
        }
    }

    /// Instruction width in bytes.
    pub fn word_size(self) -> usize {
        match self {
            Arch::Mv32 => 8,
            Arch::Mv16 => 4,
        }
    }

    pub fn bits(self) -> u8 {
        match self {
            Arch::Mv32 => 32,
            Arch::Mv16 => 16,
        }
    }

    pub fn parse(name: &str) -> Option<Arch> {
        match name.to_ascii_uppercase().as_str() {
            "MV32" => Some(Arch::Mv32),
            "MV16" => Some(Arch::Mv16),
            _ => None,
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Mv32 => "MV32",
            Arch::Mv16 => "MV16",
        })
    }
}

impl From<Arch> for CpuArch {
    fn from(a: Arch) -> CpuArch {
        match a {
            Arch::Mv32 => CpuArch::Mv32,
            Arch::Mv16 => CpuArch::Mv16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionKind {
    Code,
    Data,
    Symtab,
}

impl SectionKind {
    pub fn from_code(code: u8) -> Option<SectionKind> {
        match code {
            1 => Some(SectionKind::Code),
            2 => Some(SectionKind::Data),
            3 => Some(SectionKind::Symtab),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            SectionKind::Code => 1,
            SectionKind::Data => 2,
            SectionKind::Symtab => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub kind: SectionKind,
    pub offset: u32,
    pub length: u32,
}

impl Section {
    pub fn end(&self) -> u64 {
        self.offset as u64 + self.length as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Symbol {
    pub name: String,
    /// Byte offset into the code section.
    pub code_offset: u32,
}

/// A loaded MVFW file. `symbols` is filled in by [`map_sections`].
#[derive(Debug, Clone)]
pub struct BinaryImage {
    pub arch: Arch,
    pub sections: Vec<Section>,
    pub symbols: Vec<Symbol>,
    pub bytes: Vec<u8>,
}

impl BinaryImage {
    /// Bytes of the (single) code section. Call after [`map_sections`].
    pub fn code(&self) -> &[u8] {
        self.sections
            .iter()
            .find(|s| s.kind == SectionKind::Code)
            .map_or(&[], |s| &self.bytes[s.offset as usize..s.end() as usize])
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], BinaryError> {
        if self.bytes.len() - self.pos < n {
            return Err(BinaryError::Truncated { what: what.to_string() });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8, BinaryError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16, BinaryError> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32, BinaryError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// True when `bytes` starts with the MVFW magic.
pub fn has_magic(bytes: &[u8]) -> bool {
    bytes.starts_with(MAGIC)
}

/// Parse the header and section table.
pub fn parse_binary(bytes: Vec<u8>) -> Result<BinaryImage, BinaryError> {
    if bytes.len() < MAGIC.len() || !has_magic(&bytes) {
        return Err(BinaryError::BadMagic);
    }
    let mut r = Reader { bytes: &bytes, pos: 4 };
    let version = r.u8("header")?;
    if version != FORMAT_VERSION {
        return Err(BinaryError::UnsupportedVersion(version));
    }
    let arch_code = r.u8("header")?;
    let arch = Arch::from_code(arch_code).ok_or(BinaryError::UnknownArch(arch_code))?;
    let count = r.u16("header")?;
    let mut sections = Vec::with_capacity(count as usize);
    for index in 0..count as usize {
        let kind_code = r.u8("section table")?;
        let kind = SectionKind::from_code(kind_code).ok_or(BinaryError::UnknownSectionKind { index, kind: kind_code })?;
        let offset = r.u32("section table")?;
        let length = r.u32("section table")?;
        sections.push(Section { kind, offset, length });
    }
    Ok(BinaryImage {
        arch,
        sections,
        symbols: Vec::new(),
        bytes,
    })
}

pub fn load_binary(path: &Path) -> Result<BinaryImage, BinaryError> {
    let bytes = std::fs::read(path).map_err(|e| BinaryError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_binary(bytes)
}

/// Check section bounds and overlap, require exactly one code section, and
/// parse the symbol table into `image.symbols`.
pub fn map_sections(image: &mut BinaryImage) -> Result<Vec<Section>, BinaryError> {
    let file_len = image.bytes.len() as u64;
    for (index, s) in image.sections.iter().enumerate() {
        if s.end() > file_len {
            return Err(BinaryError::SectionOutOfBounds { index });
        }
    }
    let mut order: Vec<usize> = (0..image.sections.len()).collect();
    order.sort_by_key(|&i| (image.sections[i].offset, image.sections[i].length));
    for pair in order.windows(2) {
        let (a, b) = (&image.sections[pair[0]], &image.sections[pair[1]]);
        if a.length > 0 && b.length > 0 && b.offset as u64 <= a.end() - 1 {
            return Err(BinaryError::OverlappingSections {
                first: pair[0].min(pair[1]),
                second: pair[0].max(pair[1]),
            });
        }
    }
    let code: Vec<&Section> = image.sections.iter().filter(|s| s.kind == SectionKind::Code).collect();
    match code.len() {
        0 => return Err(BinaryError::NoCodeSection),
        1 => {}
        n => return Err(BinaryError::MultipleCodeSections(n)),
    }
    let code_len = code[0].length;

    let mut symbols = Vec::new();
    for s in image.sections.iter().filter(|s| s.kind == SectionKind::Symtab) {
        let mut r = Reader {
            bytes: &image.bytes[s.offset as usize..s.end() as usize],
            pos: 0,
        };
        while r.pos < r.bytes.len() {
            let len = r.u16("symbol table")? as usize;
            let name = std::str::from_utf8(r.take(len, "symbol table")?)
                .map_err(|_| BinaryError::BadSymbol("name is not UTF-8".into()))?
                .to_string();
            let code_offset = r.u32("symbol table")?;
            if code_offset as usize % image.arch.word_size() != 0 || code_offset >= code_len {
                return Err(BinaryError::BadSymbol(format!("{} at byte offset {} is not an instruction", name, code_offset)));
            }
            symbols.push(Symbol { name, code_offset });
        }
    }
    image.symbols = symbols;
    Ok(image.sections.clone())
}

/// Serialize an image from its parts. Sections are laid out as code, data,
/// symtab after the section table.
pub fn build_image(arch: Arch, code: &[u8], data: &[u8], symbols: &[Symbol]) -> Vec<u8> {
    let mut symtab = Vec::new();
    for sym in symbols {
        symtab.extend_from_slice(&(sym.name.len() as u16).to_le_bytes());
        symtab.extend_from_slice(sym.name.as_bytes());
        symtab.extend_from_slice(&sym.code_offset.to_le_bytes());
    }
    let mut parts: Vec<(SectionKind, &[u8])> = vec![(SectionKind::Code, code)];
    if !data.is_empty() {
        parts.push((SectionKind::Data, data));
    }
    if !symtab.is_empty() {
        parts.push((SectionKind::Symtab, &symtab));
    }
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(FORMAT_VERSION);
    out.push(arch.code());
    out.extend_from_slice(&(parts.len() as u16).to_le_bytes());
    let mut offset = HEADER_LEN + SECTION_ENTRY_LEN * parts.len();
    for (kind, body) in &parts {
        out.push(kind.code());
        out.extend_from_slice(&(offset as u32).to_le_bytes());
        out.extend_from_slice(&(body.len() as u32).to_le_bytes());
        offset += body.len();
    }
    for (_, body) in &parts {
        out.extend_from_slice(body);
    }
    out
}
