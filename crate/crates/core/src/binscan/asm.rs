//! A line-oriented assembler for MV programs.
//!
//! ```text
//! ; comment (also '#')
//! main:                 ; exported to the symbol table
//!     ALLOC r1, 8
//!     BEQ r2, r0, .done  ; labels starting with '.' stay local
//!     LOAD r2, [r1+8]
//!     STORE [r1-4], r2
//!     CALL make_key
//! .done:
//!     RET
//! .data 48656c6c6f      ; hex bytes appended to the data section
//! ```
//!
//! Branch and call operands are labels or literal ordinals.

use std::collections::HashMap;

use thiserror::Error;

use super::image::{build_image, Arch, Symbol};
use super::isa::{encode, Instruction, Op, NUM_REGISTERS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct AsmError {
    pub line: usize,
    pub message: String,
}

/// An assembled program before encoding.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Program {
    pub instructions: Vec<Instruction>,
    /// Exported labels with their instruction ordinals, in definition order.
    pub symbols: Vec<(String, usize)>,
    pub data: Vec<u8>,
}

impl Program {
    /// Encode into an MVFW file.
    pub fn to_image(&self, arch: Arch) -> Result<Vec<u8>, String> {
        let code = encode(arch, &self.instructions)?;
        let symbols: Vec<Symbol> = self
            .symbols
            .iter()
            .map(|(name, ordinal)| Symbol {
                name: name.clone(),
                code_offset: (ordinal * arch.word_size()) as u32,
            })
            .collect();
        Ok(build_image(arch, &code, &self.data, &symbols))
    }
}

enum Operand {
    Reg(u8),
    Imm(i32),
    Mem(u8, i32),
    Label(String),
}

fn strip_comment(line: &str) -> &str {
    let end = line.find([';', '#']).unwrap_or(line.len());
    line[..end].trim()
}

fn parse_reg(s: &str) -> Option<u8> {
    let n: u8 = s.strip_prefix(['r', 'R'])?.parse().ok()?;
    (n < NUM_REGISTERS).then_some(n)
}

fn parse_int(s: &str) -> Option<i32> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let v = if let Some(hex) = body.strip_prefix("0x") {
        i64::from_str_radix(hex, 16).ok()?
    } else {
        body.parse::<i64>().ok()?
    };
    i32::try_from(if neg { -v } else { v }).ok()
}

fn parse_operand(s: &str) -> Result<Operand, String> {
    if let Some(inner) = s.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
        let inner = inner.replace(' ', "");
        let split = inner.find(['+', '-']).unwrap_or(inner.len());
        let reg = parse_reg(&inner[..split]).ok_or_else(|| format!("bad base register in {:?}", s))?;
        let off = if split == inner.len() {
            0
        } else {
            parse_int(&inner[split..]).ok_or_else(|| format!("bad offset in {:?}", s))?
        };
        return Ok(Operand::Mem(reg, off));
    }
    if let Some(r) = parse_reg(s) {
        return Ok(Operand::Reg(r));
    }
    if s.starts_with(['r', 'R']) && s[1..].chars().all(|c| c.is_ascii_digit()) && s.len() > 1 {
        return Err(format!("register {} out of range", s));
    }
    if let Some(i) = parse_int(s) {
        return Ok(Operand::Imm(i));
    }
    if is_label(s) {
        return Ok(Operand::Label(s.to_string()));
    }
    Err(format!("cannot parse operand {:?}", s))
}

fn is_label(s: &str) -> bool {
    let body = s.strip_prefix('.').unwrap_or(s);
    !body.is_empty()
        && body.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && body.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

struct Pending {
    line: usize,
    op: Op,
    operands: Vec<Operand>,
}

/// Parse assembler text into a [`Program`].
pub fn parse_program(text: &str) -> Result<Program, AsmError> {
    let mut labels: HashMap<String, usize> = HashMap::new();
    let mut symbols = Vec::new();
    let mut pending: Vec<Pending> = Vec::new();
    let mut data = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| AsmError { line, message };
        let mut rest = strip_comment(raw);
        if let Some(hex_bytes) = rest.strip_prefix(".data") {
            let bytes = hex::decode(hex_bytes.trim()).map_err(|e| err(format!("bad .data bytes: {}", e)))?;
            data.extend(bytes);
            continue;
        }
        if let Some((label, after)) = rest.split_once(':') {
            let label = label.trim();
            if !is_label(label) {
                return Err(err(format!("bad label {:?}", label)));
            }
            if labels.insert(label.to_string(), pending.len()).is_some() {
                return Err(err(format!("duplicate label {:?}", label)));
            }
            if !label.starts_with('.') {
                symbols.push((label.to_string(), pending.len()));
            }
            rest = after.trim();
        }
        if rest.is_empty() {
            continue;
        }
        let (mnemonic, args) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
        let op = Op::from_mnemonic(mnemonic).ok_or_else(|| err(format!("unknown mnemonic {:?}", mnemonic)))?;
        let operands = split_operands(args)
            .into_iter()
            .map(|s| parse_operand(&s))
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?;
        pending.push(Pending { line, op, operands });
    }

    if let Some((name, _)) = symbols.iter().find(|(_, ord)| *ord >= pending.len()) {
        return Err(AsmError {
            line: text.lines().count(),
            message: format!("label {:?} does not precede an instruction", name),
        });
    }

    let mut instructions = Vec::with_capacity(pending.len());
    for (index, p) in pending.into_iter().enumerate() {
        let mut ins = build(&p, &labels).map_err(|message| AsmError { line: p.line, message })?;
        ins.index = index;
        instructions.push(ins);
    }
    Ok(Program {
        instructions,
        symbols,
        data,
    })
}

fn split_operands(args: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0;
    let mut cur = String::new();
    for c in args.chars() {
        match c {
            '[' => depth += 1,
            ']' => depth -= 1,
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
                continue;
            }
            _ => {}
        }
        cur.push(c);
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

fn build(p: &Pending, labels: &HashMap<String, usize>) -> Result<Instruction, String> {
    let target = |o: &Operand| -> Result<i32, String> {
        match o {
            Operand::Imm(i) => Ok(*i),
            Operand::Label(l) => labels
                .get(l)
                .map(|&o| o as i32)
                .ok_or_else(|| format!("undefined label {:?}", l)),
            _ => Err("expected a label or ordinal".into()),
        }
    };
    let shape = || format!("bad operands for {}", p.op.mnemonic());
    use Operand::*;
    let ops = p.operands.as_slice();
    let ins = match (p.op, ops) {
        (Op::Nop | Op::Ret | Op::Halt, []) => Instruction::new(p.op, 0, 0, 0, 0),
        (Op::Loadi | Op::Alloc, [Reg(rd), Imm(i)]) => Instruction::new(p.op, *rd, 0, 0, *i),
        (Op::Mov, [Reg(rd), Reg(rs)]) => Instruction::new(p.op, *rd, *rs, 0, 0),
        (Op::Add | Op::Sub, [Reg(rd), Reg(a), Reg(b)]) => Instruction::new(p.op, *rd, *a, *b, 0),
        (Op::Load, [Reg(rd), Mem(base, off)]) => Instruction::new(p.op, *rd, *base, 0, *off),
        (Op::Store, [Mem(base, off), Reg(rs)]) => Instruction::new(p.op, *rs, *base, 0, *off),
        (Op::Free, [Reg(rs)]) => Instruction::new(p.op, 0, *rs, 0, 0),
        (Op::Rand, [Reg(rd)]) => Instruction::new(p.op, *rd, 0, 0, 0),
        (Op::Call | Op::Jmp, [t]) => Instruction::new(p.op, 0, 0, 0, target(t)?),
        (Op::Beq, [Reg(a), Reg(b), t]) => Instruction::new(p.op, *a, *b, 0, target(t)?),
        _ => return Err(shape()),
    };
    Ok(ins)
}

/// Assemble text straight to an MVFW file.
pub fn assemble(text: &str, arch: Arch) -> Result<Vec<u8>, AsmError> {
    let program = parse_program(text)?;
    program.to_image(arch).map_err(|message| AsmError { line: 0, message })
}

/// Render instructions back to assembler text using ordinal operands.
pub fn render(program: &[Instruction]) -> String {
    let mut out = String::new();
    for ins in program {
        out.push_str(&ins.to_string());
        out.push('\n');
    }
    out
}
