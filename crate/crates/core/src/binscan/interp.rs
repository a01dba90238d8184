//! Concrete interpretation used to confirm or refute static findings.

use std::collections::{BTreeMap, HashMap};

use super::detect::{SinkList, Validation, WeaknessFinding, CWE_OOB_READ, CWE_OOB_WRITE, CWE_USE_AFTER_FREE, CWE_WEAK_RANDOM};
use super::functions::{IlFunction, ARG_REGISTERS};
use super::isa::{Instruction, Op};

pub const STEP_BUDGET: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Val {
    Int(i64),
    Ptr { obj: usize, off: i64 },
    /// A value the interpreter cannot know; `rand` marks random origin.
    Opaque { rand: bool },
}

impl Val {
    fn is_rand(self) -> bool {
        matches!(self, Val::Opaque { rand: true })
    }
}

#[derive(Debug)]
struct Object {
    size: i64,
    freed: bool,
    cells: HashMap<i64, Val>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationOutcome {
    pub status: Validation,
    pub note: String,
}

fn outcome(status: Validation, note: impl Into<String>) -> ValidationOutcome {
    ValidationOutcome {
        status,
        note: note.into(),
    }
}

/// Execute `f` from its entry and report whether the finding's fault occurs.
///
/// Branches whose operands are concrete are decided concretely; branches on
/// unknown values follow the witness trace while execution is still on it,
/// and fall through otherwise. Calls are not entered: r0 becomes unknown.
pub fn dynamic_validate(
    f: &IlFunction,
    finding: &WeaknessFinding,
    il: &[Instruction],
    names: &BTreeMap<usize, String>,
    sinks: &SinkList,
) -> ValidationOutcome {
    let mut regs = [Val::Opaque { rand: false }; 16];
    let mut heap: Vec<Object> = Vec::new();
    let mut pc = f.entry;
    let trace = &finding.trace;
    let mut cursor = Some(0usize).filter(|_| trace.first() == Some(&f.entry));

    for _ in 0..STEP_BUDGET {
        if !f.contains(pc) {
            return outcome(Validation::Unconfirmed, format!("execution left the function at ordinal {}", pc));
        }
        let ins = il[pc];
        if pc == finding.site && faults(&ins, &regs, &heap, &finding.cwe_id, names, sinks) {
            return outcome(Validation::Confirmed, format!("fault reached at ordinal {}", pc));
        }

        let mut next = pc + 1;
        let rd = ins.rd as usize;
        match ins.op {
            Op::Loadi => regs[rd] = Val::Int(ins.imm as i64),
            Op::Mov => regs[rd] = regs[ins.rs1 as usize],
            Op::Add | Op::Sub => {
                let sign = if ins.op == Op::Add { 1 } else { -1 };
                regs[rd] = match (regs[ins.rs1 as usize], regs[ins.rs2 as usize]) {
                    (Val::Int(a), Val::Int(b)) => Val::Int(a.wrapping_add(sign * b)),
                    (Val::Ptr { obj, off }, Val::Int(b)) => Val::Ptr {
                        obj,
                        off: off.wrapping_add(sign * b),
                    },
                    (Val::Int(a), Val::Ptr { obj, off }) if sign == 1 => Val::Ptr {
                        obj,
                        off: off.wrapping_add(a),
                    },
                    (a, b) => Val::Opaque {
                        rand: a.is_rand() || b.is_rand(),
                    },
                };
            }
            Op::Load => {
                regs[rd] = match cell(&regs, &heap, &ins) {
                    Some((obj, addr)) => heap[obj].cells.get(&addr).copied().unwrap_or(Val::Int(0)),
                    None => Val::Opaque { rand: false },
                };
            }
            Op::Store => {
                if let Some((obj, addr)) = cell(&regs, &heap, &ins) {
                    heap[obj].cells.insert(addr, regs[rd]);
                }
            }
            Op::Alloc => {
                heap.push(Object {
                    size: ins.imm as i64,
                    freed: false,
                    cells: HashMap::new(),
                });
                regs[rd] = Val::Ptr {
                    obj: heap.len() - 1,
                    off: 0,
                };
            }
            Op::Free => {
                if let Val::Ptr { obj, .. } = regs[ins.rs1 as usize] {
                    heap[obj].freed = true;
                }
            }
            Op::Rand => regs[rd] = Val::Opaque { rand: true },
            Op::Call => regs[0] = Val::Opaque { rand: false },
            Op::Ret | Op::Halt => {
                return outcome(Validation::Unconfirmed, "execution finished without the faulting access");
            }
            Op::Jmp => next = ins.imm as usize,
            Op::Beq => {
                let target = ins.imm as usize;
                next = match (regs[rd], regs[ins.rs1 as usize]) {
                    (Val::Int(a), Val::Int(b)) => {
                        if a == b {
                            target
                        } else {
                            pc + 1
                        }
                    }
                    (a @ Val::Ptr { .. }, b @ Val::Ptr { .. }) => {
                        if a == b {
                            target
                        } else {
                            pc + 1
                        }
                    }
                    _ => match cursor.and_then(|c| trace.get(c + 1)) {
                        Some(&t) if t == target || t == pc + 1 => t,
                        _ => pc + 1,
                    },
                };
            }
            Op::Nop => {}
        }

        cursor = cursor.and_then(|c| (trace.get(c + 1) == Some(&next)).then_some(c + 1));
        if next >= il.len() {
            return outcome(Validation::Unconfirmed, "execution fell off the end of the code");
        }
        pc = next;
    }
    outcome(
        Validation::Unconfirmed,
        format!("step budget of {} exhausted before the fault", STEP_BUDGET),
    )
}

/// The live, in-bounds heap cell addressed by a LOAD/STORE, if any.
fn cell(regs: &[Val; 16], heap: &[Object], ins: &Instruction) -> Option<(usize, i64)> {
    match regs[ins.rs1 as usize] {
        Val::Ptr { obj, off } => {
            let addr = off.wrapping_add(ins.imm as i64);
            let o = &heap[obj];
            (!o.freed && addr >= 0 && addr < o.size).then_some((obj, addr))
        }
        _ => None,
    }
}

fn faults(
    ins: &Instruction,
    regs: &[Val; 16],
    heap: &[Object],
    cwe: &str,
    names: &BTreeMap<usize, String>,
    sinks: &SinkList,
) -> bool {
    match (ins.op, cwe) {
        (Op::Load | Op::Store, _) => {
            let Val::Ptr { obj, off } = regs[ins.rs1 as usize] else {
                return false;
            };
            let o = &heap[obj];
            let addr = off.wrapping_add(ins.imm as i64);
            match cwe {
                CWE_USE_AFTER_FREE => o.freed,
                CWE_OOB_READ if ins.op == Op::Load => !o.freed && (addr < 0 || addr >= o.size),
                CWE_OOB_WRITE if ins.op == Op::Store => !o.freed && (addr < 0 || addr >= o.size),
                _ => false,
            }
        }
        (Op::Call, CWE_WEAK_RANDOM) => {
            let sink = ins.target().and_then(|t| names.get(&t)).is_some_and(|n| sinks.contains(n));
            sink && regs[..ARG_REGISTERS as usize].iter().any(|v| v.is_rand())
        }
        _ => false,
    }
}
