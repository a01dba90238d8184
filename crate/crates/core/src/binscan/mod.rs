//! Binary analysis of MVFW code artifacts.

pub mod asm;
pub mod cfg;
pub mod dataflow;
pub mod detect;
pub mod functions;
pub mod image;
pub mod interp;
pub mod isa;

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub use image::{load_binary, map_sections, parse_binary, Arch, BinaryImage, Section, SectionKind, Symbol};
pub use isa::{disassemble, Instruction, Op};
pub use detect::{SinkList, Validation, WeaknessFinding};
pub use functions::IlFunction;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BinaryError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("bad magic: not an MVFW file")]
    BadMagic,
    #[error("unsupported MVFW format version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown architecture code {0}")]
    UnknownArch(u8),
    #[error("truncated file: {what} ends early")]
    Truncated { what: String },
    #[error("section {index}: unknown kind {kind}")]
    UnknownSectionKind { index: usize, kind: u8 },
    #[error("section {index} extends past end of file")]
    SectionOutOfBounds { index: usize },
    #[error("sections {first} and {second} overlap")]
    OverlappingSections { first: usize, second: usize },
    #[error("no code section")]
    NoCodeSection,
    #[error("{0} code sections; exactly one is allowed")]
    MultipleCodeSections(usize),
    #[error("bad symbol: {0}")]
    BadSymbol(String),
    #[error("code length {length} is not a multiple of the {word}-byte word")]
    MisalignedCode { length: usize, word: usize },
    #[error("unknown opcode {opcode:#04x} at ordinal {ordinal}")]
    UnknownOpcode { ordinal: usize, opcode: u8 },
    #[error("register r{register} out of range at ordinal {ordinal}")]
    BadRegister { ordinal: usize, register: u8 },
    #[error("{op} at ordinal {ordinal} targets {target}, which is not an instruction")]
    BadTarget { ordinal: usize, op: &'static str, target: i64 },
    #[error("dataflow did not converge within {cap} iterations in {function}")]
    IterationCap { function: String, cap: usize },
}

/// Per-function summary of an analysis run.
#[derive(Debug, Clone, Serialize)]
pub struct FunctionSummary {
    pub function: IlFunction,
    pub blocks: usize,
    pub edges: usize,
    pub dataflow_iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BinaryAnalysis {
    pub arch: Arch,
    pub instructions: usize,
    pub functions: Vec<FunctionSummary>,
    /// Sorted by (function, site, cwe).
    pub findings: Vec<WeaknessFinding>,
}

/// Run every analysis phase on an in-memory MVFW file. Functions are
/// analyzed in parallel; each finding is dynamically validated.
pub fn analyze_image(bytes: Vec<u8>, sinks: &SinkList) -> Result<BinaryAnalysis, BinaryError> {
    let mut image = parse_binary(bytes)?;
    map_sections(&mut image)?;
    let il = disassemble(&image)?;
    let symbols = functions::symbol_ordinals(&image);
    let funcs = functions::reconstruct_functions(&il, &symbols)?;
    let names = detect::function_names(&funcs);

    let per_function: Vec<(FunctionSummary, Vec<WeaknessFinding>)> = funcs
        .par_iter()
        .map(|f| {
            let cfg = cfg::build_cfg(f, &il)?;
            let facts = dataflow::dataflow_taint(f, &cfg, &il)?;
            let mut found = detect::detect_weaknesses(f, &facts, &il, &names, sinks);
            for w in &mut found {
                let v = interp::dynamic_validate(f, w, &il, &names, sinks);
                w.validation = v.status;
                w.validation_note = Some(v.note);
            }
            let summary = FunctionSummary {
                function: f.clone(),
                blocks: cfg.blocks.len(),
                edges: cfg.edges.len(),
                dataflow_iterations: facts.iterations,
            };
            Ok((summary, found))
        })
        .collect::<Result<_, BinaryError>>()?;

    let mut functions = Vec::with_capacity(per_function.len());
    let mut findings = Vec::new();
    for (summary, found) in per_function {
        functions.push(summary);
        findings.extend(found);
    }
    findings.sort_by(|a, b| (&a.function, a.site, &a.cwe_id).cmp(&(&b.function, b.site, &b.cwe_id)));
    Ok(BinaryAnalysis {
        arch: image.arch,
        instructions: il.len(),
        functions,
        findings,
    })
}

pub fn analyze_binary(path: &Path, sinks: &SinkList) -> Result<BinaryAnalysis, BinaryError> {
    let bytes = std::fs::read(path).map_err(|e| BinaryError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    analyze_image(bytes, sinks)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PROGRAM: &str = "
        main:
            ALLOC r1, 8
            FREE r1
            LOAD r2, [r1]
            RAND r0
            CALL make_key
            ALLOC r3, 4
            STORE [r3+4], r2
            RET
        make_key:
            RET
    ";

    #[test]
    fn arch_independent_findings() {
        let a = analyze_image(asm::assemble(PROGRAM, Arch::Mv32).unwrap(), &SinkList::builtin()).unwrap();
        let b = analyze_image(asm::assemble(PROGRAM, Arch::Mv16).unwrap(), &SinkList::builtin()).unwrap();
        assert_eq!(a.arch, Arch::Mv32);
        assert_eq!(b.arch, Arch::Mv16);
        assert_eq!(a.findings, b.findings);
        let cwes: Vec<&str> = a.findings.iter().map(|f| f.cwe_id.as_str()).collect();
        assert_eq!(cwes, vec!["CWE-416", "CWE-338", "CWE-119"]);
        assert!(a.findings.iter().all(|f| f.validation == Validation::Confirmed));
    }
}
