//! Basic blocks and control-flow edges of one function.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::functions::IlFunction;
use super::isa::{Instruction, Op};
use super::BinaryError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Fallthrough,
    Branch,
    Call,
    Return,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeTarget {
    /// Index into [`Cfg::blocks`].
    Block(usize),
    /// Another function, by entry ordinal.
    Function(usize),
    /// Leaving the function.
    Exit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: EdgeTarget,
    pub kind: EdgeKind,
}

/// Inclusive ordinal range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub start: usize,
    pub end: usize,
}

impl Block {
    pub fn ordinals(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cfg {
    pub blocks: Vec<Block>,
    pub edges: Vec<Edge>,
}

impl Cfg {
    pub fn block_of(&self, ordinal: usize) -> Option<usize> {
        let i = self.blocks.partition_point(|b| b.end < ordinal);
        (i < self.blocks.len() && self.blocks[i].start <= ordinal).then_some(i)
    }

    pub fn successors(&self, block: usize) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.from == block)
    }

    /// Edges between blocks of this function.
    pub fn internal_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(|e| matches!(e.to, EdgeTarget::Block(_)))
    }

    /// True when `b` follows `a` along some intra-function edge.
    pub fn is_step(&self, a: usize, b: usize) -> bool {
        match (self.block_of(a), self.block_of(b)) {
            (Some(ba), Some(bb)) if ba == bb => b == a + 1,
            (Some(ba), Some(bb)) => {
                self.blocks[ba].end == a
                    && bb_starts(self, bb, b)
                    && self.successors(ba).any(|e| e.to == EdgeTarget::Block(bb))
            }
            _ => false,
        }
    }
}

fn bb_starts(cfg: &Cfg, block: usize, ordinal: usize) -> bool {
    cfg.blocks[block].start == ordinal
}

fn check_target(ins: &Instruction, len: usize) -> Result<usize, BinaryError> {
    match ins.target() {
        Some(t) if t < len => Ok(t),
        _ => Err(BinaryError::BadTarget {
            ordinal: ins.index,
            op: ins.op.mnemonic(),
            target: ins.imm as i64,
        }),
    }
}

/// Build the control-flow graph of `f`.
pub fn build_cfg(f: &IlFunction, il: &[Instruction]) -> Result<Cfg, BinaryError> {
    let body: BTreeSet<usize> = f.body.iter().copied().collect();
    let mut leaders = BTreeSet::new();
    if let Some(&first) = f.body.first() {
        leaders.insert(first);
    }
    for &o in &f.body {
        let ins = &il[o];
        if matches!(ins.op, Op::Jmp | Op::Beq) {
            let t = check_target(ins, il.len())?;
            if body.contains(&t) {
                leaders.insert(t);
            }
        }
        if matches!(ins.op, Op::Jmp | Op::Beq | Op::Call | Op::Ret | Op::Halt) && body.contains(&(o + 1)) {
            leaders.insert(o + 1);
        }
        if o > 0 && !body.contains(&(o - 1)) {
            leaders.insert(o);
        }
    }

    let mut blocks: Vec<Block> = Vec::new();
    for &o in &f.body {
        if leaders.contains(&o) {
            blocks.push(Block { start: o, end: o });
        } else if let Some(last) = blocks.last_mut() {
            last.end = o;
        }
    }

    let mut cfg = Cfg { blocks, edges: Vec::new() };
    let target_of = |cfg: &Cfg, o: usize| -> EdgeTarget {
        if body.contains(&o) {
            EdgeTarget::Block(cfg.block_of(o).expect("body ordinal has a block"))
        } else if o < il.len() {
            EdgeTarget::Function(o)
        } else {
            EdgeTarget::Exit
        }
    };
    let mut edges = Vec::new();
    for (bi, b) in cfg.blocks.iter().enumerate() {
        let last = &il[b.end];
        let next = b.end + 1;
        let mut push = |to, kind| edges.push(Edge { from: bi, to, kind });
        match last.op {
            Op::Ret => push(EdgeTarget::Exit, EdgeKind::Return),
            Op::Halt => {}
            Op::Jmp => push(target_of(&cfg, last.imm as usize), EdgeKind::Branch),
            Op::Beq => {
                push(target_of(&cfg, last.imm as usize), EdgeKind::Branch);
                push(target_of(&cfg, next), EdgeKind::Fallthrough);
            }
            Op::Call => {
                push(EdgeTarget::Function(last.imm as usize), EdgeKind::Call);
                push(target_of(&cfg, next), EdgeKind::Fallthrough);
            }
            _ => push(target_of(&cfg, next), EdgeKind::Fallthrough),
        }
    }
    cfg.edges = edges;
    Ok(cfg)
}
