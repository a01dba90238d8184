//! Weakness detection over dataflow facts, witness search and remediation.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::dataflow::{AbsValue, DataflowFacts};
use super::functions::{local_successors, IlFunction, ARG_REGISTERS};
use super::isa::{Instruction, Op};
use crate::model::Severity;

pub const CWE_USE_AFTER_FREE: &str = "CWE-416";
pub const CWE_OOB_READ: &str = "CWE-125";
pub const CWE_OOB_WRITE: &str = "CWE-119";
pub const CWE_WEAK_RANDOM: &str = "CWE-338";

/// Path states explored by the witness search before falling back to the
/// shortest control-flow path.
pub const WITNESS_STATE_BUDGET: usize = 50_000;

const BUILTIN_SINKS: &str = include_str!("../../data/sensitive_sinks.txt");

/// Symbols that must not receive random-derived arguments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SinkList(BTreeSet<String>);

impl SinkList {
    pub fn builtin() -> SinkList {
        SinkList::parse(BUILTIN_SINKS)
    }

    pub fn parse(text: &str) -> SinkList {
        SinkList(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string)
                .collect(),
        )
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validation {
    Unvalidated,
    Confirmed,
    Unconfirmed,
}

impl Validation {
    pub fn as_str(self) -> &'static str {
        match self {
            Validation::Unvalidated => "unvalidated",
            Validation::Confirmed => "confirmed",
            Validation::Unconfirmed => "unconfirmed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeaknessFinding {
    pub cwe_id: String,
    pub function: String,
    pub site: usize,
    /// Ordinals from the function entry to `site`.
    pub trace: Vec<usize>,
    pub severity: Severity,
    pub validation: Validation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_note: Option<String>,
    pub remediation: String,
}

pub fn severity_for(cwe_id: &str) -> Severity {
    match cwe_id {
        CWE_USE_AFTER_FREE | CWE_OOB_WRITE => Severity::High,
        _ => Severity::Medium,
    }
}

/// Fixed remediation advice naming the site.
pub fn suggest_remediation(finding: &WeaknessFinding) -> String {
    remediation_text(&finding.cwe_id, finding.site, &finding.trace)
}

fn remediation_text(cwe_id: &str, site: usize, trace: &[usize]) -> String {
    let path = trace.iter().map(usize::to_string).collect::<Vec<_>>().join(" -> ");
    match cwe_id {
        CWE_USE_AFTER_FREE => format!(
            "Use after free at ordinal {}: clear or reassign the pointer right after it is freed along {} so it cannot be dereferenced.",
            site, path
        ),
        CWE_OOB_READ => format!(
            "Out-of-bounds read at ordinal {}: bound the offset against the allocation size before reading.",
            site
        ),
        CWE_OOB_WRITE => format!(
            "Out-of-bounds write at ordinal {}: bound the offset against the allocation size before writing.",
            site
        ),
        CWE_WEAK_RANDOM => format!(
            "Predictable randomness reaches a sensitive call at ordinal {}: replace the randomness source with a cryptographically secure generator.",
            site
        ),
        other => format!("Review the code at ordinal {} for {}.", site, other),
    }
}

fn out_of_bounds(size: i64, offset: i64) -> bool {
    offset < 0 || offset >= size
}

/// The weakness class flagged at `ins` given the abstract state, if any.
fn classify(ins: &Instruction, regs: &[AbsValue], callee_is_sink: bool) -> Option<&'static str> {
    match ins.op {
        Op::Load | Op::Store => {
            let base = &regs[ins.rs1 as usize];
            if base.may_be_freed() {
                Some(CWE_USE_AFTER_FREE)
            } else if base.allocs.iter().any(|&(_, size)| out_of_bounds(size, ins.imm as i64)) {
                Some(if ins.op == Op::Load { CWE_OOB_READ } else { CWE_OOB_WRITE })
            } else {
                None
            }
        }
        Op::Call if callee_is_sink => regs[..ARG_REGISTERS as usize]
            .iter()
            .any(|v| v.rand)
            .then_some(CWE_WEAK_RANDOM),
        _ => None,
    }
}

/// Name of each function by entry ordinal.
pub fn function_names(functions: &[IlFunction]) -> BTreeMap<usize, String> {
    functions.iter().map(|f| (f.entry, f.name.clone())).collect()
}

fn callee_is_sink(ins: &Instruction, names: &BTreeMap<usize, String>, sinks: &SinkList) -> bool {
    ins.op == Op::Call
        && ins
            .target()
            .and_then(|t| names.get(&t))
            .is_some_and(|n| sinks.contains(n))
}

/// Flag weaknesses in `f` and attach a witness trace and remediation to
/// each. Validation is left for [`super::interp::dynamic_validate`].
pub fn detect_weaknesses(
    f: &IlFunction,
    facts: &DataflowFacts,
    il: &[Instruction],
    names: &BTreeMap<usize, String>,
    sinks: &SinkList,
) -> Vec<WeaknessFinding> {
    let mut out = Vec::new();
    for &o in &f.body {
        let Some(state) = facts.at(o) else {
            continue;
        };
        let ins = &il[o];
        let sink = callee_is_sink(ins, names, sinks);
        if let Some(cwe) = classify(ins, &state.regs, sink) {
            let trace = witness_trace(f, il, o, cwe, sink);
            out.push(WeaknessFinding {
                cwe_id: cwe.to_string(),
                function: f.name.clone(),
                site: o,
                remediation: remediation_text(cwe, o, &trace),
                trace,
                severity: severity_for(cwe),
                validation: Validation::Unvalidated,
                validation_note: None,
            });
        }
    }
    out
}

/// A single value along one path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum PathVal {
    Unknown,
    Const(i64),
    Alloc(usize, i64),
    Freed(usize),
    Rand,
}

fn path_step(regs: &mut [PathVal; 16], ins: &Instruction) {
    let rd = ins.rd as usize;
    match ins.op {
        Op::Loadi => regs[rd] = PathVal::Const(ins.imm as i64),
        Op::Mov => regs[rd] = regs[ins.rs1 as usize],
        Op::Add | Op::Sub => {
            regs[rd] = match (regs[ins.rs1 as usize], regs[ins.rs2 as usize]) {
                (PathVal::Const(a), PathVal::Const(b)) => PathVal::Const(if ins.op == Op::Add {
                    a.wrapping_add(b)
                } else {
                    a.wrapping_sub(b)
                }),
                (PathVal::Rand, _) | (_, PathVal::Rand) => PathVal::Rand,
                _ => PathVal::Unknown,
            }
        }
        Op::Load => regs[rd] = PathVal::Unknown,
        Op::Alloc => regs[rd] = PathVal::Alloc(ins.index, ins.imm as i64),
        Op::Rand => regs[rd] = PathVal::Rand,
        Op::Call => regs[0] = PathVal::Unknown,
        Op::Free => {
            if let PathVal::Alloc(site, _) = regs[ins.rs1 as usize] {
                for r in regs.iter_mut() {
                    if matches!(*r, PathVal::Alloc(s, _) if s == site) {
                        *r = PathVal::Freed(site);
                    }
                }
            }
        }
        _ => {}
    }
}

fn path_faults(ins: &Instruction, regs: &[PathVal; 16], cwe: &str, sink: bool) -> bool {
    match (ins.op, cwe) {
        (Op::Load | Op::Store, CWE_USE_AFTER_FREE) => matches!(regs[ins.rs1 as usize], PathVal::Freed(_)),
        (Op::Load, CWE_OOB_READ) | (Op::Store, CWE_OOB_WRITE) => {
            matches!(regs[ins.rs1 as usize], PathVal::Alloc(_, size) if out_of_bounds(size, ins.imm as i64))
        }
        (Op::Call, CWE_WEAK_RANDOM) => sink && regs[..ARG_REGISTERS as usize].contains(&PathVal::Rand),
        _ => false,
    }
}

/// Shortest path from the entry of `f` to `site` along which the flagged
/// fault actually happens; the shortest control-flow path when the search
/// budget runs out first.
pub fn witness_trace(f: &IlFunction, il: &[Instruction], site: usize, cwe: &str, sink: bool) -> Vec<usize> {
    let start = (f.entry, [PathVal::Unknown; 16]);
    let mut parent: HashMap<(usize, [PathVal; 16]), Option<(usize, [PathVal; 16])>> = HashMap::new();
    parent.insert(start, None);
    let mut queue = VecDeque::from([start]);
    while let Some(node) = queue.pop_front() {
        let (o, regs) = node;
        if o == site && path_faults(&il[o], &regs, cwe, sink) {
            let mut trace = vec![o];
            let mut cur = node;
            while let Some(Some(prev)) = parent.get(&cur) {
                trace.push(prev.0);
                cur = *prev;
            }
            trace.reverse();
            return trace;
        }
        if parent.len() > WITNESS_STATE_BUDGET {
            break;
        }
        let mut next_regs = regs;
        path_step(&mut next_regs, &il[o]);
        for s in local_successors(il, o) {
            if !f.contains(s) {
                continue;
            }
            let child = (s, next_regs);
            if !parent.contains_key(&child) {
                parent.insert(child, Some(node));
                queue.push_back(child);
            }
        }
    }
    shortest_cfg_path(f, il, site)
}

fn shortest_cfg_path(f: &IlFunction, il: &[Instruction], site: usize) -> Vec<usize> {
    let mut parent: HashMap<usize, Option<usize>> = HashMap::from([(f.entry, None)]);
    let mut queue = VecDeque::from([f.entry]);
    while let Some(o) = queue.pop_front() {
        if o == site {
            break;
        }
        for s in local_successors(il, o) {
            if f.contains(s) && !parent.contains_key(&s) {
                parent.insert(s, Some(o));
                queue.push_back(s);
            }
        }
    }
    let mut trace = vec![site];
    let mut cur = site;
    while let Some(Some(prev)) = parent.get(&cur) {
        trace.push(*prev);
        cur = *prev;
    }
    trace.reverse();
    trace
}
