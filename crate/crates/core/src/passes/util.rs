use crate::interp::Scalar;
use crate::ir::visit::{child_exprs_mut, child_stmts_mut, direct_exprs_mut};
use crate::ir::{DataType, PrimExpr, ScalarKind, Stmt};

use super::PassPanic;

pub(super) type PassResult = Result<(), PassPanic>;

/// Post-order visit of every subexpression of `e`.
pub(super) fn exprs_post(
    e: &mut PrimExpr,
    f: &mut impl FnMut(&mut PrimExpr) -> PassResult,
) -> PassResult {
    for c in child_exprs_mut(e) {
        exprs_post(c, f)?;
    }
    f(e)
}

/// Post-order visit of every expression held anywhere in `s`.
pub(super) fn stmt_exprs_post(
    s: &mut Stmt,
    f: &mut impl FnMut(&mut PrimExpr) -> PassResult,
) -> PassResult {
    for e in direct_exprs_mut(s) {
        exprs_post(e, f)?;
    }
    for c in child_stmts_mut(s) {
        stmt_exprs_post(c, f)?;
    }
    Ok(())
}

/// Post-order visit of every statement in `s`.
pub(super) fn stmts_post(s: &mut Stmt, f: &mut impl FnMut(&mut Stmt) -> PassResult) -> PassResult {
    for c in child_stmts_mut(s) {
        stmts_post(c, f)?;
    }
    f(s)
}

pub(super) fn imm_scalar(e: &PrimExpr) -> Option<Scalar> {
    match e {
        PrimExpr::IntImm(t, v) if t.lanes == 1 => Some(Scalar::from_int_imm(*t, *v)),
        PrimExpr::FloatImm(_, v) => Some(Scalar::F32(*v as f32)),
        _ => None,
    }
}

/// Immediate holding `v`, or `None` for non-finite floats.
pub(super) fn scalar_imm(v: Scalar) -> Option<PrimExpr> {
    Some(match v {
        Scalar::I32(x) => PrimExpr::IntImm(DataType::INT32, x as i64),
        Scalar::U32(x) => PrimExpr::IntImm(DataType::UINT32, x as i64),
        Scalar::Bool(b) => PrimExpr::boolean(b),
        Scalar::F32(x) if x.is_finite() => PrimExpr::FloatImm(DataType::FLOAT32, x as f64),
        Scalar::F32(_) => return None,
    })
}

/// Value of an int32 immediate.
pub(super) fn const_int(e: &PrimExpr) -> Option<i64> {
    match e {
        PrimExpr::IntImm(t, v) if *t == DataType::INT32 => Some(*v),
        _ => None,
    }
}

pub(super) fn is_int_imm_of(e: &PrimExpr, kind: ScalarKind, value: i64) -> bool {
    matches!(e, PrimExpr::IntImm(t, v) if t.lanes == 1 && t.kind == kind && *v == value)
}

/// Replaces `*e` by `f(old)`, moving the old value out.
pub(super) fn replace_expr(e: &mut PrimExpr, f: impl FnOnce(PrimExpr) -> PrimExpr) {
    let old = std::mem::replace(e, PrimExpr::int(0));
    *e = f(old);
}

pub(super) fn replace_stmt(s: &mut Stmt, f: impl FnOnce(Stmt) -> Stmt) {
    let old = std::mem::replace(s, Stmt::Nop);
    *s = f(old);
}
