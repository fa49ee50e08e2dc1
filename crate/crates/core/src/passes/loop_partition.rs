//! Splits a constant-range loop whose body branches on a bound of the loop
//! variable into branch-free pieces.

use super::util::{const_int, stmts_post, PassResult};
use super::{BugId, Ctx};
use crate::ir::visit::freshen;
use crate::ir::{BinOp, ForLoop, PrimExpr, PrimFunc, Stmt, Var};
use crate::probe;

pub(super) const PROBES: &[&str] = &[
    "loop_partition.skip.hint_off",
    "loop_partition.skip.non_const",
    "loop_partition.skip.no_branch",
    "loop_partition.skip.cond_shape",
    "loop_partition.lt.split_inside",
    "loop_partition.gt.split_inside",
    "loop_partition.resolve.low",
    "loop_partition.resolve.high",
    "loop_partition.split.out_of_range",
];

pub(super) fn run(func: &mut PrimFunc, ctx: &mut Ctx) -> PassResult {
    stmts_post(&mut func.body, &mut |s| {
        if let Stmt::For(l) = s {
            if let Some(new) = partition(l, ctx)? {
                *s = new;
            }
        }
        Ok(())
    })
}

#[derive(Clone, Copy, PartialEq)]
enum Side {
    /// `i < p` selects the then branch.
    Below,
    /// `i >= p` selects the then branch.
    Above,
}

/// Matches `i + k`, `i - k` or `i`, returning `k`.
fn offset_of(e: &PrimExpr, var: &Var) -> Option<i64> {
    match e {
        PrimExpr::Var(v) if v == var => Some(0),
        PrimExpr::Binary(BinOp::Add, a, b) => match (a.as_ref(), b.as_ref()) {
            (PrimExpr::Var(v), k) | (k, PrimExpr::Var(v)) if v == var => const_int(k),
            _ => None,
        },
        PrimExpr::Binary(BinOp::Sub, a, b) => match a.as_ref() {
            PrimExpr::Var(v) if v == var => const_int(b).map(|k| -k),
            _ => None,
        },
        _ => None,
    }
}

fn partition(l: &mut ForLoop, ctx: &mut Ctx) -> Result<Option<Stmt>, super::PassPanic> {
    let Stmt::IfThenElse { cond, .. } = &l.body else {
        return Ok(None);
    };
    if l.attrs.partition_hint == Some(false) {
        probe!(ctx.cov, "loop_partition.skip.hint_off");
        return Ok(None);
    }
    let (Some(m), Some(e)) = (const_int(&l.min), const_int(&l.extent)) else {
        probe!(ctx.cov, "loop_partition.skip.non_const");
        return Ok(None);
    };
    if e <= 0 || i32::try_from(m + e).is_err() {
        probe!(ctx.cov, "loop_partition.skip.no_branch");
        return Ok(None);
    }
    let PrimExpr::Binary(op @ (BinOp::Lt | BinOp::Gt), lhs, rhs) = cond else {
        probe!(ctx.cov, "loop_partition.skip.cond_shape");
        return Ok(None);
    };
    let (Some(k), Some(c)) = (offset_of(lhs, &l.var), const_int(rhs)) else {
        probe!(ctx.cov, "loop_partition.skip.cond_shape");
        return Ok(None);
    };
    // The offset must not wrap anywhere in the iteration range.
    if i32::try_from(m + k).is_err() || i32::try_from(m + e - 1 + k).is_err() {
        probe!(ctx.cov, "loop_partition.skip.cond_shape");
        return Ok(None);
    }
    let (side, p) = match op {
        BinOp::Lt => (Side::Below, c - k),
        _ => (Side::Above, c - k + 1),
    };
    let end = m + e;
    if p < m || p > end {
        probe!(ctx.cov, "loop_partition.split.out_of_range");
        if ctx.fires(BugId::Lp1) {
            return Err(ctx.panic(format!("partition point {p} outside [{m}, {end}]")));
        }
    }
    let Stmt::IfThenElse {
        then_case,
        else_case,
        ..
    } = std::mem::replace(&mut l.body, Stmt::Nop)
    else {
        unreachable!()
    };
    let then_case = *then_case;
    let else_case = else_case.map_or(Stmt::Nop, |s| *s);
    let (low, high) = match side {
        Side::Below => (then_case, else_case),
        Side::Above => (else_case, then_case),
    };
    let piece = |var: Var, lo: i64, hi: i64, body: Stmt, l: &ForLoop| {
        Stmt::For(Box::new(ForLoop {
            var,
            min: PrimExpr::int(lo),
            extent: PrimExpr::int(hi - lo),
            kind: l.kind,
            body,
            attrs: l.attrs,
        }))
    };
    if p <= m {
        probe!(ctx.cov, "loop_partition.resolve.high");
        let body = high;
        return Ok(Some(piece(l.var.clone(), m, end, body, l)));
    }
    if p >= end {
        probe!(ctx.cov, "loop_partition.resolve.low");
        return Ok(Some(piece(l.var.clone(), m, end, low, l)));
    }
    let mut split = p;
    if side == Side::Above {
        probe!(ctx.cov, "loop_partition.gt.split_inside");
        if ctx.fires(BugId::Mc2) {
            split = p - 1;
        }
    } else {
        probe!(ctx.cov, "loop_partition.lt.split_inside");
    }
    let var2 = Var::new(&l.var.name, l.var.dtype, ctx.fresh_id());
    let mut high = high;
    crate::ir::visit::substitute(&mut high, l.var.id, &PrimExpr::var(&var2));
    freshen(&mut high, &mut ctx.next_id);
    Ok(Some(Stmt::Seq(vec![
        piece(l.var.clone(), m, split, low, l),
        piece(var2, split, end, high, l),
    ])))
}
