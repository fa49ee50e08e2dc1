//! Expands virtual-thread scopes into one copy of the body per thread.

use super::util::{stmts_post, PassResult};
use super::{BugId, Ctx};
use crate::ir::visit::{
    child_stmts, direct_exprs, for_each_expr, for_each_stmt, freshen, substitute,
};
use crate::ir::{AttrKey, Buffer, PrimExpr, PrimFunc, Stmt};
use crate::probe;

pub(super) const PROBES: &[&str] = &[
    "inject_virtual_thread.expand.single",
    "inject_virtual_thread.expand.multi",
    "inject_virtual_thread.alloc.local",
    "inject_virtual_thread.alloc.read_before_write",
];

pub(super) fn run(func: &mut PrimFunc, ctx: &mut Ctx) -> PassResult {
    stmts_post(&mut func.body, &mut |s| {
        let Stmt::Attr {
            key: AttrKey::VirtualThread(var),
            value,
            body,
        } = s
        else {
            return Ok(());
        };
        let Some(k) = value.as_int_imm() else {
            return Ok(());
        };
        let mut allocs = Vec::new();
        for_each_stmt(body, &mut |x| {
            if let Stmt::Allocate { buffer, body } = x {
                allocs.push((buffer, body.as_ref()));
            }
        });
        for (buffer, scope) in allocs {
            probe!(ctx.cov, "inject_virtual_thread.alloc.local");
            if read_before_write(scope, buffer) == Some(true) {
                probe!(ctx.cov, "inject_virtual_thread.alloc.read_before_write");
                if ctx.fires(BugId::Oob1) {
                    return Err(ctx.panic(format!("thread-local {} read before write", buffer.var)));
                }
            }
        }
        let id = var.id;
        let mut copies = Vec::with_capacity(k.max(0) as usize);
        for t in 0..k.max(0) {
            let mut b = body.as_ref().clone();
            substitute(&mut b, id, &PrimExpr::int(t));
            if t > 0 {
                freshen(&mut b, &mut ctx.next_id);
            }
            copies.push(b);
        }
        if k == 1 {
            probe!(ctx.cov, "inject_virtual_thread.expand.single");
        } else {
            probe!(ctx.cov, "inject_virtual_thread.expand.multi");
        }
        *s = Stmt::seq(copies);
        Ok(())
    })
}

fn loads(e: &PrimExpr, buffer: &Buffer) -> bool {
    let mut found = false;
    for_each_expr(e, &mut |x| {
        found |= matches!(x, PrimExpr::Load { buffer: b, .. } if b.var.id == buffer.var.id);
    });
    found
}

/// In evaluation order of the statement tree: `Some(true)` if `buffer` is
/// loaded before the first store to it, `Some(false)` if a store comes first,
/// `None` if neither occurs.
fn read_before_write(s: &Stmt, buffer: &Buffer) -> Option<bool> {
    if direct_exprs(s).into_iter().any(|e| loads(e, buffer)) {
        return Some(true);
    }
    if matches!(s, Stmt::Store { buffer: b, .. } if b.var.id == buffer.var.id) {
        return Some(false);
    }
    child_stmts(s)
        .into_iter()
        .find_map(|c| read_before_write(c, buffer))
}
