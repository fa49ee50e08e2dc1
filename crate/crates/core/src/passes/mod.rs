//! The optimizing pass library, pass sequences and planted bugs.
//!
//! Every pass is semantics-preserving when no bug is enabled: it never
//! changes outputs, never turns a trapping run into a clean one or back, and
//! never increases the interpreter step count.

mod bugs;
mod constant_fold;
mod dead_store;
mod inject_vthread;
mod let_inline;
mod loop_partition;
mod seq;
mod simplify;
mod unroll;
mod util;
mod vectorize;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bugs::{BugEffect, BugId, BugPlan, CatalogError};
pub use seq::{
    mutate_pass_seq, mutate_pass_seq_with, random_pass_seq, PassEdit, PassSequence, MAX_PASSES,
};

use crate::coverage::{pass_visit_site, CoverageHandle};
use crate::ir::visit::{for_each_stmt, next_free_id};
use crate::ir::{validate, NodeRef, PrimExpr, PrimFunc};

pub(crate) const PROBES: &[&[&str]] = &[
    ENTRY_PROBES,
    constant_fold::PROBES,
    simplify::PROBES,
    unroll::PROBES,
    loop_partition::PROBES,
    dead_store::PROBES,
    vectorize::PROBES,
    inject_vthread::PROBES,
    let_inline::PROBES,
];

const ENTRY_PROBES: &[&str] = &[
    "constant_fold.entry.active",
    "constant_fold.entry.gated",
    "simplify.entry.active",
    "simplify.entry.gated",
    "unroll_loop.entry.active",
    "unroll_loop.entry.gated",
    "loop_partition.entry.active",
    "loop_partition.entry.gated",
    "dead_store_elim.entry.active",
    "dead_store_elim.entry.gated",
    "vectorize_lower.entry.active",
    "vectorize_lower.entry.gated",
    "inject_virtual_thread.entry.active",
    "inject_virtual_thread.entry.gated",
    "let_inline.entry.active",
    "let_inline.entry.gated",
    "pipeline.invalid_output",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassId {
    ConstantFold,
    Simplify,
    UnrollLoop,
    LoopPartition,
    DeadStoreElim,
    VectorizeLower,
    InjectVirtualThread,
    LetInline,
}

impl PassId {
    pub const ALL: [PassId; 8] = [
        PassId::ConstantFold,
        PassId::Simplify,
        PassId::UnrollLoop,
        PassId::LoopPartition,
        PassId::DeadStoreElim,
        PassId::VectorizeLower,
        PassId::InjectVirtualThread,
        PassId::LetInline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PassId::ConstantFold => "constant_fold",
            PassId::Simplify => "simplify",
            PassId::UnrollLoop => "unroll_loop",
            PassId::LoopPartition => "loop_partition",
            PassId::DeadStoreElim => "dead_store_elim",
            PassId::VectorizeLower => "vectorize_lower",
            PassId::InjectVirtualThread => "inject_virtual_thread",
            PassId::LetInline => "let_inline",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        PassId::ALL.into_iter().find(|p| p.name() == s)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Lowest opt level at which the pass transforms at all.
    pub fn min_opt_level(self) -> u8 {
        match self {
            PassId::ConstantFold | PassId::InjectVirtualThread => 0,
            PassId::Simplify | PassId::UnrollLoop | PassId::VectorizeLower | PassId::LetInline => 1,
            PassId::LoopPartition | PassId::DeadStoreElim => 2,
        }
    }
}

impl std::fmt::Display for PassId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A pass aborted. This is the crash-oracle signal.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{pass} panicked{}: {detail}", .index.map(|i| format!(" at position {i}")).unwrap_or_default())]
pub struct PassPanic {
    pub pass: PassId,
    /// Position in the pipeline, when raised by [`run_pipeline`].
    pub index: Option<usize>,
    pub detail: String,
    /// Innermost probe label at the time of failure.
    pub label: String,
}

/// Per-invocation state shared by the pass implementations.
pub(crate) struct Ctx<'a> {
    pub pass: PassId,
    pub opt_level: u8,
    pub bugs: &'a BugPlan,
    pub cov: &'a mut CoverageHandle,
    pub next_id: u32,
}

impl Ctx<'_> {
    /// Whether `bug` activates here. Trap bugs fire whenever their pass runs;
    /// miscompile and slowdown bugs only in the aggressive variants.
    pub fn fires(&mut self, bug: BugId) -> bool {
        if !self.bugs.is_enabled(bug) {
            return false;
        }
        if bug.effect() != BugEffect::Trap && self.opt_level < 3 {
            return false;
        }
        self.cov.note_fault(bug.site_label());
        true
    }

    pub fn panic(&self, detail: impl Into<String>) -> PassPanic {
        PassPanic {
            pass: self.pass,
            index: None,
            detail: detail.into(),
            label: self.cov.last_label().unwrap_or("").to_string(),
        }
    }

    pub fn fresh_id(&mut self) -> u32 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }
}

fn record_visits(pass: PassId, func: &PrimFunc, cov: &mut CoverageHandle) {
    for_each_stmt(&func.body, &mut |s| {
        cov.hit(pass_visit_site(pass, NodeRef::Stmt(s)));
        for e in crate::ir::visit::direct_exprs(s) {
            crate::ir::visit::for_each_expr(e, &mut |x: &PrimExpr| {
                cov.hit(pass_visit_site(pass, NodeRef::Expr(x)))
            });
        }
    });
}

fn entry_probe(pass: PassId, active: bool, cov: &mut CoverageHandle) {
    use crate::probe;
    match (pass, active) {
        (PassId::ConstantFold, true) => probe!(cov, "constant_fold.entry.active"),
        (PassId::ConstantFold, false) => probe!(cov, "constant_fold.entry.gated"),
        (PassId::Simplify, true) => probe!(cov, "simplify.entry.active"),
        (PassId::Simplify, false) => probe!(cov, "simplify.entry.gated"),
        (PassId::UnrollLoop, true) => probe!(cov, "unroll_loop.entry.active"),
        (PassId::UnrollLoop, false) => probe!(cov, "unroll_loop.entry.gated"),
        (PassId::LoopPartition, true) => probe!(cov, "loop_partition.entry.active"),
        (PassId::LoopPartition, false) => probe!(cov, "loop_partition.entry.gated"),
        (PassId::DeadStoreElim, true) => probe!(cov, "dead_store_elim.entry.active"),
        (PassId::DeadStoreElim, false) => probe!(cov, "dead_store_elim.entry.gated"),
        (PassId::VectorizeLower, true) => probe!(cov, "vectorize_lower.entry.active"),
        (PassId::VectorizeLower, false) => probe!(cov, "vectorize_lower.entry.gated"),
        (PassId::InjectVirtualThread, true) => probe!(cov, "inject_virtual_thread.entry.active"),
        (PassId::InjectVirtualThread, false) => probe!(cov, "inject_virtual_thread.entry.gated"),
        (PassId::LetInline, true) => probe!(cov, "let_inline.entry.active"),
        (PassId::LetInline, false) => probe!(cov, "let_inline.entry.gated"),
    }
}

/// Applies one pass. A pass gated above `opt_level` returns `func` unchanged
/// after recording its entry probe.
pub fn apply_pass(
    pass: PassId,
    func: &PrimFunc,
    opt_level: u8,
    bugs: &BugPlan,
    cov: &mut CoverageHandle,
) -> Result<PrimFunc, PassPanic> {
    let active = opt_level >= pass.min_opt_level();
    entry_probe(pass, active, cov);
    if !active {
        return Ok(func.clone());
    }
    record_visits(pass, func, cov);
    let mut ctx = Ctx {
        pass,
        opt_level,
        bugs,
        cov,
        next_id: next_free_id(func),
    };
    let mut out = func.clone();
    match pass {
        PassId::ConstantFold => constant_fold::run(&mut out, &mut ctx)?,
        PassId::Simplify => simplify::run(&mut out, &mut ctx)?,
        PassId::UnrollLoop => unroll::run(&mut out, &mut ctx)?,
        PassId::LoopPartition => loop_partition::run(&mut out, &mut ctx)?,
        PassId::DeadStoreElim => dead_store::run(&mut out, &mut ctx)?,
        PassId::VectorizeLower => vectorize::run(&mut out, &mut ctx)?,
        PassId::InjectVirtualThread => inject_vthread::run(&mut out, &mut ctx)?,
        PassId::LetInline => let_inline::run(&mut out, &mut ctx)?,
    }
    Ok(out)
}

/// Left fold of [`apply_pass`] over the sequence. Each intermediate result
/// is validated; an invalid one is reported as a panic of the pass that
/// produced it.
pub fn run_pipeline(
    func: &PrimFunc,
    seq: &PassSequence,
    bugs: &BugPlan,
    cov: &mut CoverageHandle,
) -> Result<PrimFunc, PassPanic> {
    let mut cur = func.clone();
    for (i, &pass) in seq.passes.iter().enumerate() {
        cur = apply_pass(pass, &cur, seq.opt_level, bugs, cov).map_err(|mut p| {
            p.index = Some(i);
            p
        })?;
        let v = validate(&cur);
        if !v.is_ok() {
            crate::probe!(cov, "pipeline.invalid_output");
            return Err(PassPanic {
                pass,
                index: Some(i),
                detail: format!("invalid output: {}", v.messages().join("; ")),
                label: "pipeline.invalid_output".into(),
            });
        }
    }
    Ok(cur)
}

#[cfg(test)]
mod tests;
