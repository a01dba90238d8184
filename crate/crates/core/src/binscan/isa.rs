//! The MV instruction set and its two encodings.
//!
//! MV32 words are 8 bytes: `op, rd, rs1, rs2, imm:i32 LE`. MV16 words are 4
//! bytes: `op, rd<<4 | rs1, imm:i16 LE` with `rs2` fixed to 0. Both decode to
//! the same [`Instruction`] form.
//!
//! | op | mnemonic | effect |
//! |----|----------|--------|
//! | 0  | NOP   | |
//! | 1  | LOADI | `rd = imm` |
//! | 2  | MOV   | `rd = rs1` |
//! | 3  | ADD   | `rd = rs1 + rs2` |
//! | 4  | SUB   | `rd = rs1 - rs2` |
//! | 5  | LOAD  | `rd = mem[rs1 + imm]` |
//! | 6  | STORE | `mem[rs1 + imm] = rd` |
//! | 7  | ALLOC | `rd = alloc(imm)` |
//! | 8  | FREE  | `free(rs1)` |
//! | 9  | CALL  | call ordinal `imm`; result in r0 |
//! | 10 | RET   | |
//! | 11 | JMP   | jump to ordinal `imm` |
//! | 12 | BEQ   | if `rd == rs1` jump to ordinal `imm` |
//! | 13 | RAND  | `rd = random()` |
//! | 14 | HALT  | |

use std::fmt;

use serde::{Deserialize, Serialize};

use super::image::{Arch, BinaryImage};
use super::BinaryError;

pub const NUM_REGISTERS: u8 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Op {
    Nop,
    Loadi,
    Mov,
    Add,
    Sub,
    Load,
    Store,
    Alloc,
    Free,
    Call,
    Ret,
    Jmp,
    Beq,
    Rand,
    Halt,
}

impl Op {
    pub const ALL: [Op; 15] = [
        Op::Nop,
        Op::Loadi,
        Op::Mov,
        Op::Add,
        Op::Sub,
        Op::Load,
        Op::Store,
        Op::Alloc,
        Op::Free,
        Op::Call,
        Op::Ret,
        Op::Jmp,
        Op::Beq,
        Op::Rand,
        Op::Halt,
    ];

    pub fn from_code(code: u8) -> Option<Op> {
        Op::ALL.get(code as usize).copied()
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Op::Nop => "NOP",
            Op::Loadi => "LOADI",
            Op::Mov => "MOV",
            Op::Add => "ADD",
            Op::Sub => "SUB",
            Op::Load => "LOAD",
            Op::Store => "STORE",
            Op::Alloc => "ALLOC",
            Op::Free => "FREE",
            Op::Call => "CALL",
            Op::Ret => "RET",
            Op::Jmp => "JMP",
            Op::Beq => "BEQ",
            Op::Rand => "RAND",
            Op::Halt => "HALT",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Op> {
        Op::ALL.into_iter().find(|op| op.mnemonic().eq_ignore_ascii_case(s))
    }

    /// Ends a function body path: no fallthrough.
    pub fn is_terminator(self) -> bool {
        matches!(self, Op::Ret | Op::Halt | Op::Jmp)
    }

    /// `imm` is an instruction ordinal.
    pub fn has_target(self) -> bool {
        matches!(self, Op::Call | Op::Jmp | Op::Beq)
    }
}

/// One decoded instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instruction {
    pub index: usize,
    pub op: Op,
    pub rd: u8,
    pub rs1: u8,
    pub rs2: u8,
    pub imm: i32,
}

impl Instruction {
    pub fn new(op: Op, rd: u8, rs1: u8, rs2: u8, imm: i32) -> Instruction {
        Instruction {
            index: 0,
            op,
            rd,
            rs1,
            rs2,
            imm,
        }
    }

    /// Branch or call target, when `imm` is an ordinal.
    pub fn target(&self) -> Option<usize> {
        (self.op.has_target() && self.imm >= 0).then_some(self.imm as usize)
    }

    /// Registers this instruction reads.
    pub fn reads(&self) -> Vec<u8> {
        match self.op {
            Op::Mov | Op::Load | Op::Free => vec![self.rs1],
            Op::Add | Op::Sub => vec![self.rs1, self.rs2],
            Op::Store | Op::Beq => vec![self.rd, self.rs1],
            _ => Vec::new(),
        }
    }

    /// Register this instruction writes.
    pub fn writes(&self) -> Option<u8> {
        match self.op {
            Op::Loadi | Op::Mov | Op::Add | Op::Sub | Op::Load | Op::Alloc | Op::Rand => Some(self.rd),
            Op::Call => Some(0),
            _ => None,
        }
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.op.mnemonic();
        let mem = |reg: u8, imm: i32| match imm {
            0 => format!("[r{}]", reg),
            i if i > 0 => format!("[r{}+{}]", reg, i),
            i => format!("[r{}{}]", reg, i),
        };
        match self.op {
            Op::Nop | Op::Ret | Op::Halt => f.write_str(m),
            Op::Loadi | Op::Alloc => write!(f, "{} r{}, {}", m, self.rd, self.imm),
            Op::Mov => write!(f, "{} r{}, r{}", m, self.rd, self.rs1),
            Op::Add | Op::Sub => write!(f, "{} r{}, r{}, r{}", m, self.rd, self.rs1, self.rs2),
            Op::Load => write!(f, "{} r{}, {}", m, self.rd, mem(self.rs1, self.imm)),
            Op::Store => write!(f, "{} {}, r{}", m, mem(self.rs1, self.imm), self.rd),
            Op::Free => write!(f, "{} r{}", m, self.rs1),
            Op::Call | Op::Jmp => write!(f, "{} {}", m, self.imm),
            Op::Beq => write!(f, "{} r{}, r{}, {}", m, self.rd, self.rs1, self.imm),
            Op::Rand => write!(f, "{} r{}", m, self.rd),
        }
    }
}

fn check_registers(ins: &Instruction, ordinal: usize) -> Result<(), BinaryError> {
    for reg in [ins.rd, ins.rs1, ins.rs2] {
        if reg >= NUM_REGISTERS {
            return Err(BinaryError::BadRegister { ordinal, register: reg });
        }
    }
    Ok(())
}

/// Decode a code section.
pub fn decode(arch: Arch, code: &[u8]) -> Result<Vec<Instruction>, BinaryError> {
    let word = arch.word_size();
    if code.len() % word != 0 {
        return Err(BinaryError::MisalignedCode { length: code.len(), word });
    }
    code.chunks_exact(word)
        .enumerate()
        .map(|(index, w)| {
            let op = Op::from_code(w[0]).ok_or(BinaryError::UnknownOpcode { ordinal: index, opcode: w[0] })?;
            let ins = match arch {
                Arch::Mv32 => Instruction {
                    index,
                    op,
                    rd: w[1],
                    rs1: w[2],
                    rs2: w[3],
                    imm: i32::from_le_bytes([w[4], w[5], w[6], w[7]]),
                },
                Arch::Mv16 => Instruction {
                    index,
                    op,
                    rd: w[1] >> 4,
                    rs1: w[1] & 0x0f,
                    rs2: 0,
                    imm: i16::from_le_bytes([w[2], w[3]]) as i32,
                },
            };
            check_registers(&ins, index)?;
            Ok(ins)
        })
        .collect()
}

/// Decode the code section of a mapped image.
pub fn disassemble(image: &BinaryImage) -> Result<Vec<Instruction>, BinaryError> {
    decode(image.arch, image.code())
}

/// Encode instructions; fails when an operand does not fit the encoding.
pub fn encode(arch: Arch, program: &[Instruction]) -> Result<Vec<u8>, String> {
    let mut out = Vec::with_capacity(program.len() * arch.word_size());
    for (i, ins) in program.iter().enumerate() {
        if ins.rd >= NUM_REGISTERS || ins.rs1 >= NUM_REGISTERS || ins.rs2 >= NUM_REGISTERS {
            return Err(format!("instruction {}: register out of range", i));
        }
        match arch {
            Arch::Mv32 => {
                out.extend_from_slice(&[ins.op.code(), ins.rd, ins.rs1, ins.rs2]);
                out.extend_from_slice(&ins.imm.to_le_bytes());
            }
            Arch::Mv16 => {
                if ins.rs2 != 0 {
                    return Err(format!("instruction {}: MV16 cannot encode rs2 = r{}", i, ins.rs2));
                }
                let imm = i16::try_from(ins.imm)
                    .map_err(|_| format!("instruction {}: immediate {} does not fit MV16", i, ins.imm))?;
                out.extend_from_slice(&[ins.op.code(), (ins.rd << 4) | ins.rs1]);
                out.extend_from_slice(&imm.to_le_bytes());
            }
        }
    }
    Ok(out)
}
