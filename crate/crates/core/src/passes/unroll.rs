//! Fully unrolls short constant-trip loops marked `unroll`.

use super::util::{const_int, PassResult};
use super::{BugId, Ctx};
use crate::ir::visit::{child_stmts_mut, for_each_stmt, freshen, stmt_node_count, substitute};
use crate::ir::{AttrKey, DataType, ForKind, ForLoop, PrimExpr, PrimFunc, Stmt, Var};
use crate::probe;

pub(super) const PROBES: &[&str] = &[
    "unroll_loop.skip.kind",
    "unroll_loop.skip.non_const",
    "unroll_loop.skip.too_large",
    "unroll_loop.empty",
    "unroll_loop.single",
    "unroll_loop.expand",
    "unroll_loop.over_cap",
    "unroll_loop.over_cap.with_attr",
    "unroll_loop.body.has_vectorize",
    "unroll_loop.cap.from_attr",
    "unroll_loop.cap.from_loop",
];

/// Cap override values are clamped to this.
const CAP_LIMIT: i64 = 32;
/// Unrolling is skipped when the expansion would exceed this many nodes.
const MAX_EXPANDED_NODES: usize = 4096;

pub(super) fn run(func: &mut PrimFunc, ctx: &mut Ctx) -> PassResult {
    let cap = if ctx.opt_level >= 3 { 16 } else { 4 };
    visit(&mut func.body, cap, ctx)
}

fn visit(s: &mut Stmt, cap: i64, ctx: &mut Ctx) -> PassResult {
    let inner_cap = match s {
        Stmt::Attr {
            key: AttrKey::UnrollMaxSteps,
            value,
            ..
        } => match value.as_int_imm() {
            Some(v) => {
                probe!(ctx.cov, "unroll_loop.cap.from_attr");
                v.min(CAP_LIMIT)
            }
            None => cap,
        },
        _ => cap,
    };
    for c in child_stmts_mut(s) {
        visit(c, inner_cap, ctx)?;
    }
    if let Stmt::For(l) = s {
        if let Some(new) = unroll(l, cap, ctx)? {
            *s = new;
        }
    }
    Ok(())
}

fn contains_vectorize(s: &Stmt) -> bool {
    let mut found = false;
    for_each_stmt(s, &mut |x| {
        found |= matches!(x, Stmt::For(l) if l.kind == ForKind::Vectorize);
    });
    found
}

fn unroll(l: &mut ForLoop, cap: i64, ctx: &mut Ctx) -> Result<Option<Stmt>, super::PassPanic> {
    if l.kind != ForKind::Unroll {
        probe!(ctx.cov, "unroll_loop.skip.kind");
        return Ok(None);
    }
    let (Some(min), Some(extent)) = (const_int(&l.min), const_int(&l.extent)) else {
        probe!(ctx.cov, "unroll_loop.skip.non_const");
        return Ok(None);
    };
    let cap = match l.attrs.unroll_max_steps {
        Some(steps) => {
            probe!(ctx.cov, "unroll_loop.cap.from_loop");
            (steps as i64).min(CAP_LIMIT)
        }
        None => cap,
    };
    if extent <= 0 {
        probe!(ctx.cov, "unroll_loop.empty");
        return Ok(Some(Stmt::Nop));
    }
    if extent > cap {
        probe!(ctx.cov, "unroll_loop.over_cap");
        if l.attrs.unroll_max_steps.is_some() {
            probe!(ctx.cov, "unroll_loop.over_cap.with_attr");
            if ctx.fires(BugId::Sd1) {
                let r = Var::new("r", DataType::INT32, ctx.fresh_id());
                let spin = Stmt::for_loop(
                    r,
                    PrimExpr::int(0),
                    PrimExpr::int(64),
                    ForKind::Serial,
                    Stmt::Evaluate(PrimExpr::var(&l.var)),
                );
                let body = std::mem::replace(&mut l.body, Stmt::Nop);
                l.body = Stmt::Seq(vec![body, spin]);
            }
        }
        return Ok(None);
    }
    if contains_vectorize(&l.body) {
        probe!(ctx.cov, "unroll_loop.body.has_vectorize");
        if ctx.fires(BugId::Ur2) {
            return Err(ctx.panic("cannot unroll around a vectorized loop"));
        }
    }
    if extent as usize * stmt_node_count(&l.body) > MAX_EXPANDED_NODES {
        probe!(ctx.cov, "unroll_loop.skip.too_large");
        return Ok(None);
    }
    if extent == 1 {
        probe!(ctx.cov, "unroll_loop.single");
    } else {
        probe!(ctx.cov, "unroll_loop.expand");
    }
    let mut copies = Vec::with_capacity(extent as usize);
    for k in 0..extent {
        let mut b = l.body.clone();
        substitute(&mut b, l.var.id, &PrimExpr::int((min + k) as i32 as i64));
        if k > 0 {
            freshen(&mut b, &mut ctx.next_id);
        }
        copies.push(b);
    }
    Ok(Some(Stmt::seq(copies)))
}
