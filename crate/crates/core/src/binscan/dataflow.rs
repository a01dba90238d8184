//! Forward may-analysis of register contents.
//!
//! Each register holds a set of abstract values: unknown, small constants,
//! allocations `alloc(site, size)`, freed allocations `freed(site)` and
//! randomness. Join is set union; constant sets wider than
//! [`CONST_LIMIT`] collapse to unknown so loops terminate.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::cfg::{Cfg, EdgeKind, EdgeTarget};
use super::functions::IlFunction;
use super::isa::{Instruction, Op, NUM_REGISTERS};
use super::BinaryError;

pub const CONST_LIMIT: usize = 16;

/// Iteration cap multiplier: the cap is `blocks * registers * ITERATION_FACTOR`.
pub const ITERATION_FACTOR: usize = 16;

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize)]
pub struct AbsValue {
    pub unknown: bool,
    pub consts: BTreeSet<i64>,
    /// `(site, size)` pairs.
    pub allocs: BTreeSet<(usize, i64)>,
    pub freed: BTreeSet<usize>,
    pub rand: bool,
}

impl AbsValue {
    pub fn unknown() -> AbsValue {
        AbsValue {
            unknown: true,
            ..AbsValue::default()
        }
    }

    pub fn constant(k: i64) -> AbsValue {
        AbsValue {
            consts: [k].into_iter().collect(),
            ..AbsValue::default()
        }
    }

    pub fn alloc(site: usize, size: i64) -> AbsValue {
        AbsValue {
            allocs: [(site, size)].into_iter().collect(),
            ..AbsValue::default()
        }
    }

    pub fn rand() -> AbsValue {
        AbsValue {
            rand: true,
            ..AbsValue::default()
        }
    }

    pub fn may_be_freed(&self) -> bool {
        !self.freed.is_empty()
    }

    fn is_pointer_only(&self) -> bool {
        !self.unknown && self.consts.is_empty() && self.freed.is_empty() && !self.rand
    }

    fn widen(&mut self) {
        if self.consts.len() > CONST_LIMIT {
            self.consts.clear();
            self.unknown = true;
        }
    }

    /// Union `other` into `self`; returns whether anything changed.
    pub fn join(&mut self, other: &AbsValue) -> bool {
        let before = self.clone();
        self.unknown |= other.unknown;
        self.rand |= other.rand;
        self.consts.extend(other.consts.iter().copied());
        self.allocs.extend(other.allocs.iter().copied());
        self.freed.extend(other.freed.iter().copied());
        self.widen();
        *self != before
    }

    fn arith(a: &AbsValue, b: &AbsValue, f: impl Fn(i64, i64) -> i64) -> AbsValue {
        let mut out = AbsValue {
            unknown: a.unknown
                || b.unknown
                || !a.allocs.is_empty()
                || !b.allocs.is_empty()
                || !a.freed.is_empty()
                || !b.freed.is_empty(),
            rand: a.rand || b.rand,
            ..AbsValue::default()
        };
        for &x in &a.consts {
            for &y in &b.consts {
                out.consts.insert(f(x, y));
            }
        }
        out.widen();
        out
    }
}

/// Abstract register file.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct State {
    pub regs: Vec<AbsValue>,
}

impl State {
    pub fn initial() -> State {
        State {
            regs: vec![AbsValue::unknown(); NUM_REGISTERS as usize],
        }
    }

    pub fn reg(&self, r: u8) -> &AbsValue {
        &self.regs[r as usize]
    }

    pub fn join(&mut self, other: &State) -> bool {
        let mut changed = false;
        for (a, b) in self.regs.iter_mut().zip(&other.regs) {
            changed |= a.join(b);
        }
        changed
    }
}

/// Apply one instruction to `state`.
pub fn transfer(state: &mut State, ins: &Instruction) {
    let rd = ins.rd as usize;
    match ins.op {
        Op::Nop | Op::Ret | Op::Halt | Op::Jmp | Op::Beq | Op::Store => {}
        Op::Loadi => state.regs[rd] = AbsValue::constant(ins.imm as i64),
        Op::Mov => state.regs[rd] = state.regs[ins.rs1 as usize].clone(),
        Op::Add | Op::Sub => {
            let (a, b) = (state.reg(ins.rs1), state.reg(ins.rs2));
            state.regs[rd] = if ins.op == Op::Add {
                AbsValue::arith(a, b, i64::wrapping_add)
            } else {
                AbsValue::arith(a, b, i64::wrapping_sub)
            };
        }
        Op::Load => state.regs[rd] = AbsValue::unknown(),
        Op::Alloc => state.regs[rd] = AbsValue::alloc(ins.index, ins.imm as i64),
        Op::Rand => state.regs[rd] = AbsValue::rand(),
        Op::Call => state.regs[0] = AbsValue::unknown(),
        Op::Free => {
            let target = state.reg(ins.rs1).clone();
            if target.allocs.is_empty() {
                return;
            }
            let strong = target.is_pointer_only() && target.allocs.len() == 1;
            for (r, value) in state.regs.iter_mut().enumerate() {
                let hit: Vec<(usize, i64)> = value.allocs.intersection(&target.allocs).copied().collect();
                if hit.is_empty() {
                    continue;
                }
                for a in &hit {
                    value.freed.insert(a.0);
                    if strong || r == ins.rs1 as usize {
                        value.allocs.remove(a);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DataflowFacts {
    /// State before each body ordinal.
    pub before: BTreeMap<usize, State>,
    /// Join of the states where the function returns, halts or falls off.
    pub exit: State,
    pub iterations: usize,
    pub cap: usize,
}

impl DataflowFacts {
    pub fn at(&self, ordinal: usize) -> Option<&State> {
        self.before.get(&ordinal)
    }
}

/// Run the analysis to a fixpoint over `cfg`.
pub fn dataflow_taint(f: &IlFunction, cfg: &Cfg, il: &[Instruction]) -> Result<DataflowFacts, BinaryError> {
    let cap = cfg.blocks.len() * NUM_REGISTERS as usize * ITERATION_FACTOR;
    let mut input: Vec<Option<State>> = vec![None; cfg.blocks.len()];
    let mut worklist = BTreeSet::new();
    if !cfg.blocks.is_empty() {
        input[0] = Some(State::initial());
        worklist.insert(0usize);
    }
    let mut iterations = 0;
    while let Some(b) = worklist.pop_first() {
        iterations += 1;
        if iterations > cap {
            return Err(BinaryError::IterationCap {
                function: f.name.clone(),
                cap,
            });
        }
        let mut state = input[b].clone().expect("queued blocks have input");
        for o in cfg.blocks[b].ordinals() {
            transfer(&mut state, &il[o]);
        }
        for edge in cfg.successors(b) {
            if let EdgeTarget::Block(t) = edge.to {
                let changed = match &mut input[t] {
                    Some(existing) => existing.join(&state),
                    slot @ None => {
                        *slot = Some(state.clone());
                        true
                    }
                };
                if changed {
                    worklist.insert(t);
                }
            }
        }
    }

    let mut before = BTreeMap::new();
    let mut exit: Option<State> = None;
    for (b, block) in cfg.blocks.iter().enumerate() {
        let Some(mut state) = input[b].clone() else {
            continue;
        };
        for o in block.ordinals() {
            before.insert(o, state.clone());
            transfer(&mut state, &il[o]);
        }
        let exits = il[block.end].op == Op::Halt
            || cfg
                .successors(b)
                .any(|e| e.to == EdgeTarget::Exit || (e.kind != EdgeKind::Call && matches!(e.to, EdgeTarget::Function(_))));
        if exits {
            match &mut exit {
                Some(e) => {
                    e.join(&state);
                }
                None => exit = Some(state),
            }
        }
    }
    Ok(DataflowFacts {
        before,
        exit: exit.unwrap_or_else(State::initial),
        iterations,
        cap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binscan::asm::parse_program;
    use crate::binscan::cfg::build_cfg;
    use crate::binscan::functions::{local_successors, reconstruct_functions};
    use proptest::prelude::*;

    fn facts(src: &str) -> (Vec<Instruction>, DataflowFacts) {
        let p = parse_program(src).unwrap();
        let f = reconstruct_functions(&p.instructions, &p.symbols).unwrap();
        let cfg = build_cfg(&f[0], &p.instructions).unwrap();
        let facts = dataflow_taint(&f[0], &cfg, &p.instructions).unwrap();
        (p.instructions, facts)
    }

    #[test]
    fn free_marks_freed() {
        let (_, fx) = facts("ALLOC r1, 8\nFREE r1\nRET");
        let r1 = fx.exit.reg(1);
        assert!(r1.allocs.is_empty());
        assert_eq!(r1.freed, [0].into_iter().collect());
    }

    #[test]
    fn one_armed_free_joins() {
        let (_, fx) = facts("ALLOC r1, 8\nBEQ r2, r3, .j\nFREE r1\n.j:\nRET");
        let r1 = fx.exit.reg(1);
        assert_eq!(r1.allocs, [(0, 8)].into_iter().collect());
        assert_eq!(r1.freed, [0].into_iter().collect());
    }

    #[test]
    fn aliases_see_the_free() {
        let (_, fx) = facts("ALLOC r1, 8\nMOV r2, r1\nFREE r1\nRET");
        assert!(fx.exit.reg(2).may_be_freed());
        assert!(fx.exit.reg(2).allocs.is_empty());
    }

    #[test]
    fn loops_converge_under_cap() {
        let (_, fx) = facts("LOADI r1, 0\nLOADI r2, 1\n.top:\nADD r1, r1, r2\nBEQ r1, r3, .top\nRET");
        assert!(fx.iterations <= fx.cap);
        assert!(fx.exit.reg(1).unknown);
    }

    #[test]
    fn call_havocs_r0() {
        let (_, fx) = facts("main:\nRAND r0\nCALL f\nRET\nf:\nRET");
        assert!(!fx.exit.reg(0).rand);
        assert!(fx.exit.reg(0).unknown);
    }

    /// One concrete-path value per register.
    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    enum PathVal {
        Unknown,
        Const(i64),
        Alloc(usize, i64),
        Freed(usize),
        Rand,
    }

    fn step(regs: &mut [PathVal; 16], ins: &Instruction) {
        match ins.op {
            Op::Loadi => regs[ins.rd as usize] = PathVal::Const(ins.imm as i64),
            Op::Load => regs[ins.rd as usize] = PathVal::Unknown,
            Op::Alloc => regs[ins.rd as usize] = PathVal::Alloc(ins.index, ins.imm as i64),
            Op::Rand => regs[ins.rd as usize] = PathVal::Rand,
            Op::Call => regs[0] = PathVal::Unknown,
            Op::Free => {
                if let PathVal::Alloc(s, _) = regs[ins.rs1 as usize] {
                    for r in regs.iter_mut() {
                        if matches!(*r, PathVal::Alloc(t, _) if t == s) {
                            *r = PathVal::Freed(s);
                        }
                    }
                }
            }
            _ => {}
        }
    }

    fn atoms(v: &AbsValue) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        if v.unknown {
            out.insert("?".to_string());
        }
        if v.rand {
            out.insert("rand".to_string());
        }
        out.extend(v.consts.iter().map(|k| format!("c{}", k)));
        out.extend(v.allocs.iter().map(|(s, n)| format!("a{}:{}", s, n)));
        out.extend(v.freed.iter().map(|s| format!("f{}", s)));
        out
    }

    fn atom(v: PathVal) -> String {
        match v {
            PathVal::Unknown => "?".into(),
            PathVal::Rand => "rand".into(),
            PathVal::Const(k) => format!("c{}", k),
            PathVal::Alloc(s, n) => format!("a{}:{}", s, n),
            PathVal::Freed(s) => format!("f{}", s),
        }
    }

    /// Union over every acyclic path of the per-path register values.
    fn enumerate(il: &[Instruction]) -> BTreeMap<usize, Vec<BTreeSet<String>>> {
        let mut seen: BTreeMap<usize, Vec<BTreeSet<String>>> = BTreeMap::new();
        let mut stack = vec![(0usize, [PathVal::Unknown; 16])];
        while let Some((o, mut regs)) = stack.pop() {
            let slot = seen.entry(o).or_insert_with(|| vec![BTreeSet::new(); 16]);
            for (r, v) in regs.iter().enumerate() {
                slot[r].insert(atom(*v));
            }
            step(&mut regs, &il[o]);
            for s in local_successors(il, o) {
                stack.push((s, regs));
            }
        }
        seen
    }

    fn program_strategy() -> impl Strategy<Value = Vec<Instruction>> {
        let op = prop_oneof![
            (0u8..4, 0i32..3).prop_map(|(r, k)| Instruction::new(Op::Loadi, r, 0, 0, k)),
            prop_oneof![Just(4), Just(8)].prop_map(|n| Instruction::new(Op::Alloc, 1, 0, 0, n)),
            Just(Instruction::new(Op::Free, 0, 1, 0, 0)),
            (prop_oneof![Just(0u8), Just(2), Just(3)], 0i32..9).prop_map(|(r, k)| Instruction::new(Op::Load, r, 1, 0, k)),
            (0u8..4, 0i32..9).prop_map(|(r, k)| Instruction::new(Op::Store, r, 1, 0, k)),
            prop_oneof![Just(0u8), Just(2)].prop_map(|r| Instruction::new(Op::Rand, r, 0, 0, 0)),
            (0u8..4, 0u8..4, 1usize..4).prop_map(|(a, b, d)| Instruction::new(Op::Beq, a, b, 0, -(d as i32))),
            (1usize..4).prop_map(|d| Instruction::new(Op::Jmp, 0, 0, 0, -(d as i32))),
        ];
        prop::collection::vec(op, 1..12).prop_map(|mut v| {
            v.push(Instruction::new(Op::Ret, 0, 0, 0, 0));
            let len = v.len();
            for (i, ins) in v.iter_mut().enumerate() {
                ins.index = i;
                if ins.op.has_target() {
                    // Negative imm encodes a forward distance.
                    ins.imm = ((i + (-ins.imm) as usize).min(len - 1)) as i32;
                }
            }
            v
        })
    }

    proptest! {
        #[test]
        fn facts_equal_path_enumeration(il in program_strategy()) {
            let f = reconstruct_functions(&il, &[]).unwrap();
            let cfg = build_cfg(&f[0], &il).unwrap();
            let fx = dataflow_taint(&f[0], &cfg, &il).unwrap();
            let oracle = enumerate(&il);
            prop_assert_eq!(fx.before.keys().copied().collect::<Vec<_>>(), oracle.keys().copied().collect::<Vec<_>>());
            for (o, regs) in &oracle {
                let state = &fx.before[o];
                for r in 0..16 {
                    prop_assert_eq!(&atoms(&state.regs[r]), &regs[r], "ordinal {} register {}", o, r);
                }
            }
        }
    }
}
