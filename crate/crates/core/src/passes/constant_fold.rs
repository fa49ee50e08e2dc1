//! Folds operators whose operands are all immediates.

use super::util::{imm_scalar, scalar_imm, stmt_exprs_post, PassResult};
use super::{BugId, Ctx};
use crate::interp::{binop, cast, intrinsic, Scalar};
use crate::ir::{BinOp, PrimExpr, PrimFunc};
use crate::probe;

pub(super) const PROBES: &[&str] = &[
    "constant_fold.binary.fold",
    "constant_fold.binary.keep_trap",
    "constant_fold.binary.keep_nonfinite",
    "constant_fold.floormod.mixed_sign",
    "constant_fold.cast.fold",
    "constant_fold.cast.keep_trap",
    "constant_fold.call.fold",
    "constant_fold.call.keep",
];

pub(super) fn run(func: &mut PrimFunc, ctx: &mut Ctx) -> PassResult {
    stmt_exprs_post(&mut func.body, &mut |e| {
        fold(e, ctx);
        Ok(())
    })
}

fn fold(e: &mut PrimExpr, ctx: &mut Ctx) {
    let folded = match e {
        PrimExpr::Binary(op, l, r) => {
            let (Some(a), Some(b)) = (imm_scalar(l), imm_scalar(r)) else {
                return;
            };
            if *op == BinOp::FloorMod {
                if let (Scalar::I32(x), Scalar::I32(y)) = (a, b) {
                    if x != 0 && y != 0 && (x < 0) != (y < 0) && x.wrapping_rem(y) != 0 {
                        probe!(ctx.cov, "constant_fold.floormod.mixed_sign");
                        if ctx.fires(BugId::Mc1) {
                            *e = PrimExpr::int(x.wrapping_rem(y) as i64);
                            return;
                        }
                    }
                }
            }
            match binop(*op, a, b) {
                Ok(v) => match scalar_imm(v) {
                    Some(imm) => {
                        probe!(ctx.cov, "constant_fold.binary.fold");
                        imm
                    }
                    None => {
                        probe!(ctx.cov, "constant_fold.binary.keep_nonfinite");
                        return;
                    }
                },
                Err(_) => {
                    probe!(ctx.cov, "constant_fold.binary.keep_trap");
                    return;
                }
            }
        }
        PrimExpr::Cast(t, v) if t.is_scalar() => {
            let Some(a) = imm_scalar(v) else {
                return;
            };
            match cast(a, t.kind).ok().and_then(scalar_imm) {
                Some(imm) => {
                    probe!(ctx.cov, "constant_fold.cast.fold");
                    imm
                }
                None => {
                    probe!(ctx.cov, "constant_fold.cast.keep_trap");
                    return;
                }
            }
        }
        PrimExpr::Call { dtype, op, args } if dtype.is_scalar() => {
            let vals: Option<Vec<Scalar>> = args.iter().map(imm_scalar).collect();
            let Some(vals) = vals else {
                return;
            };
            match scalar_imm(intrinsic(*op, &vals)) {
                Some(imm) => {
                    probe!(ctx.cov, "constant_fold.call.fold");
                    imm
                }
                None => {
                    probe!(ctx.cov, "constant_fold.call.keep");
                    return;
                }
            }
        }
        _ => return,
    };
    *e = folded;
}
