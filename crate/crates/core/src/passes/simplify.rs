//! Algebraic identities, ramp arithmetic and dead control flow.

use super::util::{const_int, exprs_post, is_int_imm_of, replace_stmt, stmts_post, PassResult};
use super::{BugId, Ctx};
use crate::interp::{binop, Scalar};
use crate::ir::visit::{direct_exprs_mut, is_pure_trap_free};
use crate::ir::{BinOp, DataType, PrimExpr, PrimFunc, ScalarKind, Stmt};
use crate::probe;

pub(super) const PROBES: &[&str] = &[
    "simplify.add.zero",
    "simplify.sub.zero",
    "simplify.mul.one",
    "simplify.mul.zero",
    "simplify.div.one",
    "simplify.mod.one",
    "simplify.and.true",
    "simplify.and.false",
    "simplify.or.false",
    "simplify.or.true",
    "simplify.eq.same_var",
    "simplify.ramp_div.uniform",
    "simplify.ramp_div.exact",
    "simplify.ramp_div.keep",
    "simplify.ramp_mod.broadcast",
    "simplify.ramp_mod.keep",
    "simplify.ramp_div.zero_divisor",
    "simplify.if.const_cond",
    "simplify.while.false",
    "simplify.seq.flatten",
    "simplify.evaluate.pure",
    "simplify.for.empty",
];

pub(super) fn run(func: &mut PrimFunc, ctx: &mut Ctx) -> PassResult {
    stmts_post(&mut func.body, &mut |s| {
        for e in direct_exprs_mut(s) {
            exprs_post(e, &mut |x| simplify_expr(x, ctx))?;
        }
        simplify_stmt(s, ctx);
        Ok(())
    })
}

fn is_int_zero(e: &PrimExpr) -> bool {
    matches!(e, PrimExpr::IntImm(t, 0) if t.lanes == 1 && t.kind.is_int())
}

fn is_int_one(e: &PrimExpr) -> bool {
    matches!(e, PrimExpr::IntImm(t, 1) if t.lanes == 1 && t.kind.is_int())
}

fn int_zero_like(e: &PrimExpr) -> PrimExpr {
    match e {
        PrimExpr::IntImm(t, _) => PrimExpr::IntImm(*t, 0),
        _ => unreachable!("caller checked for an integer immediate"),
    }
}

fn simplify_expr(e: &mut PrimExpr, ctx: &mut Ctx) -> PassResult {
    let PrimExpr::Binary(op, l, r) = e else {
        return Ok(());
    };
    let (l, r) = (l.as_mut(), r.as_mut());
    let take = |x: &mut PrimExpr| std::mem::replace(x, PrimExpr::int(0));
    let new = match op {
        BinOp::Add if is_int_zero(r) => {
            probe!(ctx.cov, "simplify.add.zero");
            take(l)
        }
        BinOp::Add if is_int_zero(l) => {
            probe!(ctx.cov, "simplify.add.zero");
            take(r)
        }
        BinOp::Sub if is_int_zero(r) => {
            probe!(ctx.cov, "simplify.sub.zero");
            take(l)
        }
        BinOp::Mul if is_int_one(r) => {
            probe!(ctx.cov, "simplify.mul.one");
            take(l)
        }
        BinOp::Mul if is_int_one(l) => {
            probe!(ctx.cov, "simplify.mul.one");
            take(r)
        }
        BinOp::Mul if is_int_zero(r) && is_pure_trap_free(l) => {
            probe!(ctx.cov, "simplify.mul.zero");
            int_zero_like(r)
        }
        BinOp::Mul if is_int_zero(l) && is_pure_trap_free(r) => {
            probe!(ctx.cov, "simplify.mul.zero");
            int_zero_like(l)
        }
        BinOp::FloorDiv if is_int_one(r) => {
            probe!(ctx.cov, "simplify.div.one");
            take(l)
        }
        BinOp::FloorMod if is_int_one(r) && is_pure_trap_free(l) => {
            probe!(ctx.cov, "simplify.mod.one");
            int_zero_like(r)
        }
        BinOp::And | BinOp::Or => {
            let unit = *op == BinOp::And;
            let (c, other) = match (bool_imm(l), bool_imm(r)) {
                (Some(c), _) => (c, r),
                (None, Some(c)) => (c, l),
                (None, None) => return Ok(()),
            };
            if c == unit {
                if unit {
                    probe!(ctx.cov, "simplify.and.true");
                } else {
                    probe!(ctx.cov, "simplify.or.false");
                }
                take(other)
            } else if is_pure_trap_free(other) {
                if unit {
                    probe!(ctx.cov, "simplify.and.false");
                } else {
                    probe!(ctx.cov, "simplify.or.true");
                }
                PrimExpr::boolean(c)
            } else {
                return Ok(());
            }
        }
        BinOp::Eq => match (&*l, &*r) {
            (PrimExpr::Var(a), PrimExpr::Var(b))
                if a == b && a.dtype.kind.is_int() && a.dtype.is_scalar() =>
            {
                probe!(ctx.cov, "simplify.eq.same_var");
                PrimExpr::boolean(true)
            }
            _ => return Ok(()),
        },
        BinOp::FloorDiv | BinOp::FloorMod => match ramp_division(*op, l, r, ctx)? {
            Some(new) => new,
            None => return Ok(()),
        },
        _ => return Ok(()),
    };
    *e = new;
    Ok(())
}

fn bool_imm(e: &PrimExpr) -> Option<bool> {
    [false, true]
        .into_iter()
        .find(|&b| is_int_imm_of(e, ScalarKind::Bool, b as i64))
}

/// `Ramp(b, s, n) // Broadcast(c, n)` and `Ramp(x, s, n) % Broadcast(c, n)`
/// with immediate divisor.
fn ramp_division(
    op: BinOp,
    l: &mut PrimExpr,
    r: &PrimExpr,
    ctx: &mut Ctx,
) -> Result<Option<PrimExpr>, super::PassPanic> {
    let (
        PrimExpr::Ramp {
            base,
            stride,
            lanes,
        },
        PrimExpr::Broadcast {
            value: divisor,
            lanes: dl,
        },
    ) = (&mut *l, r)
    else {
        return Ok(None);
    };
    let Some(c) = const_int(divisor) else {
        return Ok(None);
    };
    if lanes != dl {
        return Ok(None);
    }
    let n = *lanes;
    if c == 0 {
        probe!(ctx.cov, "simplify.ramp_div.zero_divisor");
        if ctx.fires(BugId::Ae1) {
            return Err(ctx.panic("div by zero in ramp simplify"));
        }
        return Ok(None);
    }
    let Some(s) = const_int(stride) else {
        return Ok(None);
    };
    let b = const_int(base);
    let last = (n as i64 - 1) * s;
    let no_wrap = |b: i64| i32::try_from(b + last).is_ok();
    if op == BinOp::FloorDiv {
        let Some(b) = b.filter(|&b| no_wrap(b)) else {
            probe!(ctx.cov, "simplify.ramp_div.keep");
            return Ok(None);
        };
        let qs: Vec<i64> = (0..n as i64).map(|k| floordiv(b + k * s, c)).collect();
        if qs.iter().all(|&x| x == qs[0]) && i32::try_from(qs[0]).is_ok() {
            probe!(ctx.cov, "simplify.ramp_div.uniform");
            return Ok(Some(PrimExpr::Broadcast {
                value: Box::new(PrimExpr::int(qs[0])),
                lanes: n,
            }));
        }
        if b % c == 0 && s % c == 0 && i32::try_from(b / c).is_ok() && i32::try_from(s / c).is_ok()
        {
            probe!(ctx.cov, "simplify.ramp_div.exact");
            return Ok(Some(PrimExpr::Ramp {
                base: Box::new(PrimExpr::int(b / c)),
                stride: Box::new(PrimExpr::int(s / c)),
                lanes: n,
            }));
        }
        probe!(ctx.cov, "simplify.ramp_div.keep");
        return Ok(None);
    }
    // Every lane is congruent to the base when c divides the stride. With a
    // non-constant base the lanes may wrap, which preserves the residue only
    // for power-of-two divisors.
    let wrap_safe = match b {
        Some(b) => no_wrap(b),
        None => c.unsigned_abs().is_power_of_two(),
    };
    if s % c != 0 || !wrap_safe {
        probe!(ctx.cov, "simplify.ramp_mod.keep");
        return Ok(None);
    }
    probe!(ctx.cov, "simplify.ramp_mod.broadcast");
    let base = std::mem::replace(base.as_mut(), PrimExpr::int(0));
    let value = match base {
        PrimExpr::IntImm(_, b) => match binop(
            BinOp::FloorMod,
            Scalar::I32(b as i32),
            Scalar::I32(c as i32),
        ) {
            Ok(Scalar::I32(v)) => PrimExpr::int(v as i64),
            _ => unreachable!("nonzero int32 divisor"),
        },
        other => PrimExpr::binary(BinOp::FloorMod, other, PrimExpr::int(c)),
    };
    Ok(Some(PrimExpr::Broadcast {
        value: Box::new(value),
        lanes: n,
    }))
}

fn floordiv(a: i64, b: i64) -> i64 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

fn simplify_stmt(s: &mut Stmt, ctx: &mut Ctx) {
    match s {
        Stmt::IfThenElse {
            cond: PrimExpr::IntImm(t, v),
            ..
        } if *t == DataType::BOOL => {
            probe!(ctx.cov, "simplify.if.const_cond");
            let taken = *v != 0;
            replace_stmt(s, |old| match old {
                Stmt::IfThenElse {
                    then_case,
                    else_case,
                    ..
                } => {
                    if taken {
                        *then_case
                    } else {
                        else_case.map_or(Stmt::Nop, |e| *e)
                    }
                }
                _ => unreachable!(),
            });
        }
        Stmt::While {
            cond: PrimExpr::IntImm(_, 0),
            ..
        } => {
            probe!(ctx.cov, "simplify.while.false");
            *s = Stmt::Nop;
        }
        Stmt::Seq(stmts) => {
            if stmts.iter().any(|c| matches!(c, Stmt::Seq(_) | Stmt::Nop)) {
                probe!(ctx.cov, "simplify.seq.flatten");
                let mut flat = Vec::with_capacity(stmts.len());
                for c in stmts.drain(..) {
                    match c {
                        Stmt::Seq(inner) => flat.extend(inner),
                        Stmt::Nop => {}
                        other => flat.push(other),
                    }
                }
                *s = Stmt::seq(flat);
            }
        }
        Stmt::Evaluate(e) if is_pure_trap_free(e) => {
            probe!(ctx.cov, "simplify.evaluate.pure");
            *s = Stmt::Nop;
        }
        Stmt::For(l)
            if l.extent.as_int_imm().is_some_and(|e| e <= 0) && is_pure_trap_free(&l.min) =>
        {
            probe!(ctx.cov, "simplify.for.empty");
            *s = Stmt::Nop;
        }
        _ => {}
    }
}
