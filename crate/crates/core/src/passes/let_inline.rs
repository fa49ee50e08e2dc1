//! Drops unused bindings and inlines single-use pure ones.

use super::util::{exprs_post, replace_expr, replace_stmt, stmts_post, PassResult};
use super::{BugId, Ctx};
use crate::ir::visit::{
    child_stmts, count_uses, count_uses_expr, direct_exprs, direct_exprs_mut, is_pure_trap_free,
    substitute, substitute_expr,
};
use crate::ir::{AttrKey, PrimExpr, PrimFunc, Stmt};
use crate::probe;

pub(super) const PROBES: &[&str] = &[
    "let_inline.unused.drop",
    "let_inline.unused.keep",
    "let_inline.unused.call_value",
    "let_inline.single.inline",
    "let_inline.single.in_loop",
    "let_inline.keep.impure",
    "let_inline.keep.multi_use",
];

pub(super) fn run(func: &mut PrimFunc, ctx: &mut Ctx) -> PassResult {
    stmts_post(&mut func.body, &mut |s| {
        for e in direct_exprs_mut(s) {
            exprs_post(e, &mut |x| inline_expr(x, ctx))?;
        }
        inline_stmt(s, ctx)
    })
}

enum Action {
    Keep,
    Drop,
    Inline,
}

fn decide(
    value: &PrimExpr,
    uses: usize,
    in_loop: bool,
    ctx: &mut Ctx,
) -> Result<Action, super::PassPanic> {
    let pure = is_pure_trap_free(value);
    if uses == 0 {
        if matches!(value, PrimExpr::Call { .. }) {
            probe!(ctx.cov, "let_inline.unused.call_value");
            if ctx.fires(BugId::Li1) {
                return Err(ctx.panic("unused call binding"));
            }
        }
        return Ok(if pure {
            probe!(ctx.cov, "let_inline.unused.drop");
            Action::Drop
        } else {
            probe!(ctx.cov, "let_inline.unused.keep");
            Action::Keep
        });
    }
    if uses > 1 {
        probe!(ctx.cov, "let_inline.keep.multi_use");
        return Ok(Action::Keep);
    }
    if !pure {
        probe!(ctx.cov, "let_inline.keep.impure");
        return Ok(Action::Keep);
    }
    if in_loop {
        probe!(ctx.cov, "let_inline.single.in_loop");
        return Ok(Action::Keep);
    }
    probe!(ctx.cov, "let_inline.single.inline");
    Ok(Action::Inline)
}

fn inline_expr(e: &mut PrimExpr, ctx: &mut Ctx) -> PassResult {
    let PrimExpr::Let { var, value, body } = e else {
        return Ok(());
    };
    let uses = count_uses_expr(body, var.id);
    match decide(value, uses, false, ctx)? {
        Action::Keep => {}
        Action::Drop => replace_expr(e, |old| match old {
            PrimExpr::Let { body, .. } => *body,
            _ => unreachable!(),
        }),
        Action::Inline => replace_expr(e, |old| match old {
            PrimExpr::Let {
                var,
                value,
                mut body,
            } => {
                substitute_expr(&mut body, var.id, &value);
                *body
            }
            _ => unreachable!(),
        }),
    }
    Ok(())
}

fn inline_stmt(s: &mut Stmt, ctx: &mut Ctx) -> PassResult {
    let Stmt::LetStmt { var, value, body } = s else {
        return Ok(());
    };
    let uses = count_uses(body, var.id);
    let in_loop = uses > 0 && used_in_loop(body, var.id, false);
    match decide(value, uses, in_loop, ctx)? {
        Action::Keep => {}
        Action::Drop => replace_stmt(s, |old| match old {
            Stmt::LetStmt { body, .. } => *body,
            _ => unreachable!(),
        }),
        Action::Inline => replace_stmt(s, |old| match old {
            Stmt::LetStmt {
                var,
                value,
                mut body,
            } => {
                substitute(&mut body, var.id, &value);
                *body
            }
            _ => unreachable!(),
        }),
    }
    Ok(())
}

/// Whether `id` is referenced somewhere that may execute more than once.
fn used_in_loop(s: &Stmt, id: u32, looping: bool) -> bool {
    let repeats = looping
        || matches!(s, Stmt::While { .. })
        || matches!(
            s,
            Stmt::Attr {
                key: AttrKey::VirtualThread(_),
                ..
            }
        );
    let own = match s {
        // Loop bounds are evaluated once per entry.
        Stmt::For(l) => {
            looping && (count_uses_expr(&l.min, id) + count_uses_expr(&l.extent, id)) > 0
        }
        _ => {
            repeats
                && direct_exprs(s)
                    .into_iter()
                    .any(|e| count_uses_expr(e, id) > 0)
        }
    };
    own || child_stmts(s)
        .into_iter()
        .any(|c| used_in_loop(c, id, repeats || matches!(s, Stmt::For(_))))
}
