//! IR mutation: holes and constraints, the size-bounded generator, the three
//! general-purpose mutators and the three domain-specific ones.

mod domain;
mod general;
mod generate;

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use domain::{loop_nesting, memory_operation, thread_binding};
pub use general::{mutate_delete, mutate_insert, mutate_replace};
pub use generate::{generate, generate_with};

use crate::ir::visit::{for_each_expr, for_each_stmt, next_free_id, stmt_binders};
use crate::ir::{
    collect_nodes, infer_dtype, node_at, scope_at, AttrKey, Buffer, DataType, NodePath, NodeRef,
    PrimExpr, PrimFunc, Scope, Stmt, Var, MAX_UNROLL_STEPS, MAX_VIRTUAL_THREADS,
};

/// Mutation size parameters are drawn uniformly from this range.
pub const SIZE_RANGE: std::ops::RangeInclusive<usize> = 1..=8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Stmt,
    Expr,
    /// A bare variable reference of any dtype.
    Var,
}

/// What a replacement for a hole must satisfy.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraints {
    pub node_kind: NodeKind,
    pub expr_dtype: Option<DataType>,
    pub vars_in_scope: Vec<Var>,
    pub buffers_in_scope: Vec<Buffer>,
    pub require_bound: bool,
    /// Attribute value slots only accept an int32 immediate in this range.
    pub imm_range: Option<(i64, i64)>,
    /// Smallest binder id unused in the enclosing function.
    pub next_id: u32,
}

impl Constraints {
    pub fn stmt(vars: Vec<Var>, buffers: Vec<Buffer>, next_id: u32) -> Self {
        Constraints {
            node_kind: NodeKind::Stmt,
            expr_dtype: None,
            vars_in_scope: vars,
            buffers_in_scope: buffers,
            require_bound: true,
            imm_range: None,
            next_id,
        }
    }

    pub fn expr(dtype: DataType, vars: Vec<Var>, buffers: Vec<Buffer>, next_id: u32) -> Self {
        Constraints {
            node_kind: NodeKind::Expr,
            expr_dtype: Some(dtype),
            ..Constraints::stmt(vars, buffers, next_id)
        }
    }

    pub fn scope(&self) -> Scope {
        let mut s = Scope::new();
        s.vars = self.vars_in_scope.clone();
        s.buffers = self.buffers_in_scope.clone();
        s
    }
}

/// A function with one position singled out for replacement.
#[derive(Clone, Debug, PartialEq)]
pub struct Context {
    pub func: PrimFunc,
    pub hole: NodePath,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MutateError {
    #[error("no node satisfies the constraints within the size bound")]
    Unsatisfiable,
}

/// Uniform choice over every addressable node of the body.
pub fn pick_hole(func: &PrimFunc, rng: &mut impl Rng) -> Context {
    let nodes = collect_nodes(func);
    Context {
        func: func.clone(),
        hole: nodes
            .choose(rng)
            .expect("the body is always addressable")
            .clone(),
    }
}

pub fn derive_constraints(ctx: &Context) -> Constraints {
    let scope = scope_at(&ctx.func, &ctx.hole).expect("hole is a valid path");
    let next_id = next_free_id(&ctx.func);
    let node = node_at(&ctx.func, &ctx.hole).expect("hole is a valid path");
    let mut c = match node {
        NodeRef::Stmt(_) => Constraints::stmt(scope.vars.clone(), scope.buffers.clone(), next_id),
        NodeRef::Expr(e) => {
            let dtype = infer_dtype(e, &mut scope.clone()).expect("valid function");
            Constraints::expr(dtype, scope.vars.clone(), scope.buffers.clone(), next_id)
        }
    };
    if let Some(parent) = ctx.hole.parent() {
        let last = *ctx.hole.0.last().unwrap();
        if let Some(NodeRef::Stmt(Stmt::Attr { key, .. })) = node_at(&ctx.func, &parent) {
            if last == 0 {
                c.imm_range = Some(match key {
                    AttrKey::VirtualThread(_) => (1, MAX_VIRTUAL_THREADS),
                    AttrKey::UnrollMaxSteps => (0, MAX_UNROLL_STEPS as i64),
                });
            }
        }
    }
    c
}

/// Lane count of `e`, computed structurally.
pub(crate) fn expr_lanes(e: &PrimExpr) -> u16 {
    match e {
        PrimExpr::Var(v) => v.dtype.lanes,
        PrimExpr::IntImm(..) | PrimExpr::FloatImm(..) => 1,
        PrimExpr::Binary(op, l, r) => {
            if op.is_comparison() {
                1
            } else {
                expr_lanes(l).max(expr_lanes(r))
            }
        }
        PrimExpr::Call { dtype, .. } | PrimExpr::Cast(dtype, _) => dtype.lanes,
        PrimExpr::Let { body, .. } => expr_lanes(body),
        PrimExpr::Load { indices, .. } => indices.iter().map(expr_lanes).max().unwrap_or(1),
        PrimExpr::Ramp { lanes, .. } | PrimExpr::Broadcast { lanes, .. } => *lanes,
    }
}

fn scope_ids(scope: &Scope) -> (HashSet<u32>, HashSet<u32>) {
    (
        scope.vars.iter().map(|v| v.id).collect(),
        scope.buffers.iter().map(|b| b.id()).collect(),
    )
}

/// Whether every variable and buffer `e` refers to is bound inside `e` or in
/// `scope`.
pub(crate) fn expr_is_closed(e: &PrimExpr, scope: &Scope) -> bool {
    let (vars, bufs) = scope_ids(scope);
    let mut bound = HashSet::new();
    for_each_expr(e, &mut |x| {
        if let PrimExpr::Let { var, .. } = x {
            bound.insert(var.id);
        }
    });
    let mut ok = true;
    for_each_expr(e, &mut |x| match x {
        PrimExpr::Var(v) => ok &= vars.contains(&v.id) || bound.contains(&v.id),
        PrimExpr::Load { buffer, .. } => ok &= bufs.contains(&buffer.id()),
        _ => {}
    });
    ok
}

pub(crate) fn stmt_is_closed(s: &Stmt, scope: &Scope) -> bool {
    let (vars, bufs) = scope_ids(scope);
    let mut binders = Vec::new();
    stmt_binders(s, &mut binders);
    let bound: HashSet<u32> = binders.iter().map(|v| v.id).collect();
    let mut ok = true;
    for_each_stmt(s, &mut |st| {
        if let Stmt::Store { buffer, .. } = st {
            ok &= bufs.contains(&buffer.id()) || bound.contains(&buffer.id());
        }
        for e in crate::ir::visit::direct_exprs(st) {
            for_each_expr(e, &mut |x| match x {
                PrimExpr::Var(v) => ok &= vars.contains(&v.id) || bound.contains(&v.id),
                PrimExpr::Load { buffer, .. } => {
                    ok &= bufs.contains(&buffer.id()) || bound.contains(&buffer.id())
                }
                _ => {}
            });
        }
    });
    ok
}

/// The six mutators, sampled uniformly during fuzzing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutator {
    Insert,
    Delete,
    Replace,
    LoopNesting,
    MemoryOperation,
    ThreadBinding,
}

impl Mutator {
    pub const ALL: [Mutator; 6] = [
        Mutator::Insert,
        Mutator::Delete,
        Mutator::Replace,
        Mutator::LoopNesting,
        Mutator::MemoryOperation,
        Mutator::ThreadBinding,
    ];
    pub const GENERAL: [Mutator; 3] = [Mutator::Insert, Mutator::Delete, Mutator::Replace];

    pub fn name(self) -> &'static str {
        match self {
            Mutator::Insert => "insert",
            Mutator::Delete => "delete",
            Mutator::Replace => "replace",
            Mutator::LoopNesting => "loop_nesting",
            Mutator::MemoryOperation => "memory_operation",
            Mutator::ThreadBinding => "thread_binding",
        }
    }

    pub fn is_domain(self) -> bool {
        !Mutator::GENERAL.contains(&self)
    }

    /// One application. General mutators pick their own hole; `None` means
    /// the mutator did not apply (deletion without a usable child).
    pub fn apply(self, func: &PrimFunc, rng: &mut impl Rng) -> Option<PrimFunc> {
        match self {
            Mutator::Insert => Some(mutate_insert(&pick_hole(func, rng), rng)),
            Mutator::Delete => mutate_delete(&pick_hole(func, rng), rng),
            Mutator::Replace => Some(mutate_replace(&pick_hole(func, rng), rng)),
            Mutator::LoopNesting => Some(loop_nesting(func, rng)),
            Mutator::MemoryOperation => Some(memory_operation(func, rng)),
            Mutator::ThreadBinding => Some(thread_binding(func, rng)),
        }
    }
}

/// Draws mutators from `choices` until one applies (at most `tries` draws).
pub fn mutate_with(
    func: &PrimFunc,
    choices: &[Mutator],
    tries: usize,
    rng: &mut impl Rng,
) -> Option<(Mutator, PrimFunc)> {
    for _ in 0..tries {
        let m = *choices.choose(rng)?;
        if let Some(out) = m.apply(func, rng) {
            return Some((m, out));
        }
    }
    None
}

#[cfg(test)]
mod tests;
