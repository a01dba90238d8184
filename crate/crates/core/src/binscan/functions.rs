//! Function reconstruction and parameter/stack inference.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::image::BinaryImage;
use super::isa::{Instruction, Op};
use super::BinaryError;

/// Registers r0..=r3 carry arguments.
pub const ARG_REGISTERS: u8 = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IlFunction {
    pub name: String,
    pub entry: usize,
    /// Sorted ordinals belonging to this function.
    pub body: Vec<usize>,
    pub params: u8,
    pub stack_slots: usize,
}

impl IlFunction {
    pub fn contains(&self, ordinal: usize) -> bool {
        self.body.binary_search(&ordinal).is_ok()
    }
}

/// Symbol names with instruction ordinals, in symbol table order.
pub fn symbol_ordinals(image: &BinaryImage) -> Vec<(String, usize)> {
    let word = image.arch.word_size();
    image
        .symbols
        .iter()
        .map(|s| (s.name.clone(), s.code_offset as usize / word))
        .collect()
}

/// Intra-procedural successors of `ordinal`, ignoring call targets.
pub(crate) fn local_successors(il: &[Instruction], ordinal: usize) -> Vec<usize> {
    let ins = &il[ordinal];
    let mut out = Vec::with_capacity(2);
    match ins.op {
        Op::Ret | Op::Halt => {}
        Op::Jmp => out.extend(ins.target()),
        Op::Beq => {
            out.extend(ins.target());
            out.push(ordinal + 1);
        }
        _ => out.push(ordinal + 1),
    }
    out.retain(|&o| o < il.len());
    out.dedup();
    out
}

/// Split the instruction stream into functions.
///
/// Entries are symbol ordinals plus CALL targets (ordinal 0 when there are
/// none). Each ordinal belongs to the nearest entry at or below it; a
/// function's body is what its entry reaches without leaving that range.
pub fn reconstruct_functions(il: &[Instruction], symbols: &[(String, usize)]) -> Result<Vec<IlFunction>, BinaryError> {
    if il.is_empty() {
        return Ok(Vec::new());
    }
    let mut names: BTreeMap<usize, String> = BTreeMap::new();
    for (name, ordinal) in symbols {
        if *ordinal >= il.len() {
            return Err(BinaryError::BadSymbol(format!("{} at ordinal {} is past the code", name, ordinal)));
        }
        names.entry(*ordinal).or_insert_with(|| name.clone());
    }
    let mut entries: BTreeSet<usize> = names.keys().copied().collect();
    for ins in il.iter().filter(|i| i.op == Op::Call) {
        match ins.target() {
            Some(t) if t < il.len() => {
                entries.insert(t);
            }
            _ => {
                return Err(BinaryError::BadTarget {
                    ordinal: ins.index,
                    op: "CALL",
                    target: ins.imm as i64,
                })
            }
        }
    }
    if entries.is_empty() {
        entries.insert(0);
    }
    let owner = |o: usize| entries.range(..=o).next_back().copied();

    let mut functions = Vec::with_capacity(entries.len());
    for &entry in &entries {
        let mut body = BTreeSet::new();
        let mut stack = vec![entry];
        while let Some(o) = stack.pop() {
            if owner(o) != Some(entry) || !body.insert(o) {
                continue;
            }
            stack.extend(local_successors(il, o));
        }
        let name = names.get(&entry).cloned().unwrap_or_else(|| format!("fn_{}", entry));
        let mut f = IlFunction {
            name,
            entry,
            body: body.into_iter().collect(),
            params: 0,
            stack_slots: 0,
        };
        analyze_params_stack(&mut f, il);
        functions.push(f);
    }
    Ok(functions)
}

/// Fill in `params` and `stack_slots`.
///
/// `params` is one more than the highest argument register read before any
/// write in body order; `stack_slots` counts ALLOC sites.
pub fn analyze_params_stack(f: &mut IlFunction, il: &[Instruction]) {
    let mut written = [false; 16];
    let mut params = 0u8;
    for &o in &f.body {
        let ins = &il[o];
        for r in ins.reads() {
            if r < ARG_REGISTERS && !written[r as usize] {
                params = params.max(r + 1);
            }
        }
        if let Some(w) = ins.writes() {
            written[w as usize] = true;
        }
    }
    f.params = params;
    f.stack_slots = f.body.iter().filter(|&&o| il[o].op == Op::Alloc).count();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binscan::asm::parse_program;

    fn funcs(src: &str) -> Vec<IlFunction> {
        let p = parse_program(src).unwrap();
        reconstruct_functions(&p.instructions, &p.symbols).unwrap()
    }

    #[test]
    fn single_function_spans_all() {
        let f = funcs("LOADI r1, 1\nNOP\nRET");
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].name, "fn_0");
        assert_eq!(f[0].body, vec![0, 1, 2]);
    }

    #[test]
    fn call_to_unlabeled_offset() {
        let mut src = String::from("main:\nCALL 40\nRET\n");
        for _ in 2..40 {
            src.push_str("NOP\n");
        }
        src.push_str("LOADI r0, 1\nRET\n");
        let f = funcs(&src);
        assert_eq!(f.len(), 2);
        assert_eq!(f[0].name, "main");
        assert_eq!(f[0].body, vec![0, 1]);
        assert_eq!(f[1].name, "fn_40");
        assert_eq!(f[1].body, vec![40, 41]);
    }

    #[test]
    fn empty_code() {
        assert!(reconstruct_functions(&[], &[]).unwrap().is_empty());
    }

    #[test]
    fn call_outside_code() {
        let p = parse_program("CALL 9\nRET").unwrap();
        assert!(matches!(
            reconstruct_functions(&p.instructions, &p.symbols),
            Err(BinaryError::BadTarget { ordinal: 0, .. })
        ));
    }

    #[test]
    fn bodies_are_disjoint() {
        let f = funcs("a:\nBEQ r0, r1, b\nRET\nb:\nJMP .x\n.x:\nRET");
        let all: Vec<usize> = f.iter().flat_map(|f| f.body.clone()).collect();
        let set: BTreeSet<usize> = all.iter().copied().collect();
        assert_eq!(all.len(), set.len());
        assert!(f.iter().all(|f| f.contains(f.entry)));
    }

    #[test]
    fn params_and_stack() {
        assert_eq!(funcs("ADD r4, r0, r1\nRET")[0].params, 2);
        assert_eq!(funcs("LOADI r0, 1\nMOV r5, r0\nRET")[0].params, 0);
        let f = funcs("ALLOC r1, 4\nALLOC r2, 8\nSTORE [r1], r2\nRET");
        assert_eq!(f[0].stack_slots, 2);
        assert_eq!(f[0].params, 0);
    }
}
