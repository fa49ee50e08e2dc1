//! Removes a store that is immediately overwritten by the next statement.

use super::util::{const_int, stmts_post, PassResult};
use super::{BugId, Ctx};
use crate::ir::visit::{for_each_expr, is_pure_trap_free};
use crate::ir::{Buffer, PrimExpr, PrimFunc, Stmt};
use crate::probe;

pub(super) const PROBES: &[&str] = &[
    "dead_store_elim.seq.flatten",
    "dead_store_elim.pair.same_buffer",
    "dead_store_elim.pair.removed",
    "dead_store_elim.pair.impure_value",
    "dead_store_elim.pair.reads_buffer",
    "dead_store_elim.pair.partial_index_match",
    "dead_store_elim.pair.index_mismatch",
];

pub(super) fn run(func: &mut PrimFunc, ctx: &mut Ctx) -> PassResult {
    stmts_post(&mut func.body, &mut |s| {
        if let Stmt::Seq(stmts) = s {
            if stmts.iter().any(|c| matches!(c, Stmt::Seq(_))) {
                probe!(ctx.cov, "dead_store_elim.seq.flatten");
                let flat = stmts
                    .drain(..)
                    .flat_map(|c| match c {
                        Stmt::Seq(inner) => inner,
                        other => vec![other],
                    })
                    .collect();
                *stmts = flat;
            }
            eliminate(stmts, ctx);
            if stmts.len() == 1 {
                *s = stmts.pop().unwrap();
            }
        }
        Ok(())
    })
}

/// Constant indices that are all in bounds for `buffer`.
fn const_in_bounds(buffer: &Buffer, indices: &[PrimExpr]) -> Option<Vec<i64>> {
    let idx: Option<Vec<i64>> = indices.iter().map(const_int).collect();
    let idx = idx?;
    let ok = idx
        .iter()
        .zip(&buffer.shape)
        .all(|(&i, &d)| i >= 0 && i < d as i64);
    ok.then_some(idx)
}

fn reads_buffer(e: &PrimExpr, buffer: &Buffer) -> bool {
    let mut found = false;
    for_each_expr(e, &mut |x| {
        found |= matches!(x, PrimExpr::Load { buffer: b, .. } if b.var.id == buffer.var.id);
    });
    found
}

fn eliminate(stmts: &mut Vec<Stmt>, ctx: &mut Ctx) {
    let mut i = 0;
    while i + 1 < stmts.len() {
        if dead_pair(&stmts[i], &stmts[i + 1], ctx) {
            stmts.remove(i);
        } else {
            i += 1;
        }
    }
}

fn dead_pair(first: &Stmt, second: &Stmt, ctx: &mut Ctx) -> bool {
    let (
        Stmt::Store {
            buffer: b1,
            value: v1,
            indices: i1,
        },
        Stmt::Store {
            buffer: b2,
            value: v2,
            indices: i2,
        },
    ) = (first, second)
    else {
        return false;
    };
    if b1.var.id != b2.var.id {
        return false;
    }
    let (Some(x1), Some(x2)) = (const_in_bounds(b1, i1), const_in_bounds(b2, i2)) else {
        return false;
    };
    probe!(ctx.cov, "dead_store_elim.pair.same_buffer");
    if !is_pure_trap_free(v1) {
        probe!(ctx.cov, "dead_store_elim.pair.impure_value");
        return false;
    }
    if reads_buffer(v2, b2) {
        probe!(ctx.cov, "dead_store_elim.pair.reads_buffer");
        return false;
    }
    if x1 == x2 {
        probe!(ctx.cov, "dead_store_elim.pair.removed");
        return true;
    }
    if x1.len() >= 2 && x1[0] == x2[0] {
        probe!(ctx.cov, "dead_store_elim.pair.partial_index_match");
        if ctx.fires(BugId::Mc3) {
            return true;
        }
    }
    probe!(ctx.cov, "dead_store_elim.pair.index_mismatch");
    false
}
