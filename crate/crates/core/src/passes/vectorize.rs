//! Lowers short `vectorize` loops over straight-line stores to vector stores.

use super::util::{const_int, stmts_post, PassResult};
use super::{BugId, Ctx};
use crate::ir::visit::{for_each_expr_in_stmt, for_each_stmt, stmt_node_count};
use crate::ir::{ForKind, ForLoop, PrimExpr, PrimFunc, ScalarKind, Stmt, Var, MAX_LANES};
use crate::probe;

pub(super) const PROBES: &[&str] = &[
    "vectorize_lower.skip.non_const",
    "vectorize_lower.skip.extent",
    "vectorize_lower.reject.conditional_body",
    "vectorize_lower.reject.body_shape",
    "vectorize_lower.reject.buffer_conflict",
    "vectorize_lower.reject.expr",
    "vectorize_lower.reject.invariant_index",
    "vectorize_lower.reject.cost",
    "vectorize_lower.broadcast",
    "vectorize_lower.lowered",
];

pub(super) fn run(func: &mut PrimFunc, ctx: &mut Ctx) -> PassResult {
    stmts_post(&mut func.body, &mut |s| {
        if let Stmt::For(l) = s {
            if l.kind == ForKind::Vectorize {
                if let Some(new) = lower(l, ctx)? {
                    *s = new;
                }
            }
        }
        Ok(())
    })
}

fn lower(l: &ForLoop, ctx: &mut Ctx) -> Result<Option<Stmt>, super::PassPanic> {
    let (Some(m), Some(e)) = (const_int(&l.min), const_int(&l.extent)) else {
        probe!(ctx.cov, "vectorize_lower.skip.non_const");
        return Ok(None);
    };
    if !(2..=MAX_LANES as i64).contains(&e) || i32::try_from(m + e - 1).is_err() {
        probe!(ctx.cov, "vectorize_lower.skip.extent");
        return Ok(None);
    }
    let mut conditional = false;
    for_each_stmt(&l.body, &mut |s| {
        conditional |= matches!(s, Stmt::IfThenElse { .. })
    });
    if conditional {
        probe!(ctx.cov, "vectorize_lower.reject.conditional_body");
        if ctx.fires(BugId::Vl1) {
            return Err(ctx.panic("conditional in vectorized body"));
        }
        return Ok(None);
    }
    let stores: Vec<&Stmt> = match &l.body {
        s @ Stmt::Store { .. } => vec![s],
        Stmt::Seq(v) if v.iter().all(|s| matches!(s, Stmt::Store { .. })) => v.iter().collect(),
        _ => {
            probe!(ctx.cov, "vectorize_lower.reject.body_shape");
            return Ok(None);
        }
    };
    let mut stored = Vec::new();
    for s in &stores {
        if let Stmt::Store { buffer, .. } = s {
            if buffer.dtype.kind == ScalarKind::Bool || stored.contains(&buffer.var.id) {
                probe!(ctx.cov, "vectorize_lower.reject.buffer_conflict");
                return Ok(None);
            }
            stored.push(buffer.var.id);
        }
    }
    let mut conflict = false;
    for_each_expr_in_stmt(&l.body, &mut |x| {
        conflict |= matches!(x, PrimExpr::Load { buffer, .. } if stored.contains(&buffer.var.id));
    });
    if conflict {
        probe!(ctx.cov, "vectorize_lower.reject.buffer_conflict");
        return Ok(None);
    }
    let lanes = e as u16;
    let mut v = Vectorizer {
        var: &l.var,
        base: m,
        lanes,
        broadcasts: 0,
    };
    let mut out = Vec::with_capacity(stores.len());
    for s in stores {
        let Stmt::Store {
            buffer,
            value,
            indices,
        } = s
        else {
            unreachable!()
        };
        let lowered = (|| {
            let mut any_varying = false;
            let mut idx = Vec::with_capacity(indices.len());
            for i in indices {
                let (x, varying) = v.expr(i)?;
                any_varying |= varying;
                idx.push(x);
            }
            let (val, val_varying) = v.expr(value)?;
            Some((any_varying, idx, val, val_varying))
        })();
        let Some((any_varying, idx, val, val_varying)) = lowered else {
            probe!(ctx.cov, "vectorize_lower.reject.expr");
            return Ok(None);
        };
        if !any_varying {
            probe!(ctx.cov, "vectorize_lower.reject.invariant_index");
            return Ok(None);
        }
        let val = if val_varying { val } else { v.broadcast(val) };
        out.push(Stmt::Store {
            buffer: buffer.clone(),
            value: val,
            indices: idx,
        });
    }
    let new = Stmt::seq(out);
    let old_cost = 3 + e as usize * (1 + stmt_node_count(&l.body));
    if stmt_node_count(&new) > old_cost {
        probe!(ctx.cov, "vectorize_lower.reject.cost");
        return Ok(None);
    }
    if v.broadcasts > 0 {
        probe!(ctx.cov, "vectorize_lower.broadcast");
    }
    probe!(ctx.cov, "vectorize_lower.lowered");
    Ok(Some(new))
}

struct Vectorizer<'a> {
    var: &'a Var,
    base: i64,
    lanes: u16,
    broadcasts: usize,
}

impl Vectorizer<'_> {
    fn broadcast(&mut self, e: PrimExpr) -> PrimExpr {
        self.broadcasts += 1;
        PrimExpr::Broadcast {
            value: Box::new(e),
            lanes: self.lanes,
        }
    }

    fn widen(&mut self, (e, varying): (PrimExpr, bool)) -> PrimExpr {
        if varying {
            e
        } else {
            self.broadcast(e)
        }
    }

    /// The lowered expression and whether it varies across lanes, or `None`
    /// when `e` has no vector form.
    fn expr(&mut self, e: &PrimExpr) -> Option<(PrimExpr, bool)> {
        Some(match e {
            PrimExpr::Var(v) if v == self.var => (
                PrimExpr::Ramp {
                    base: Box::new(PrimExpr::int(self.base)),
                    stride: Box::new(PrimExpr::int(1)),
                    lanes: self.lanes,
                },
                true,
            ),
            PrimExpr::Var(_) | PrimExpr::IntImm(..) | PrimExpr::FloatImm(..) => (e.clone(), false),
            PrimExpr::Load { buffer, indices } => {
                let mut varying = false;
                let mut idx = Vec::with_capacity(indices.len());
                for i in indices {
                    let (x, v) = self.expr(i)?;
                    varying |= v;
                    idx.push(x);
                }
                if varying && buffer.dtype.kind == ScalarKind::Bool {
                    return None;
                }
                (
                    PrimExpr::Load {
                        buffer: buffer.clone(),
                        indices: idx,
                    },
                    varying,
                )
            }
            PrimExpr::Binary(op, a, b) => {
                let (a, va) = self.expr(a)?;
                let (b, vb) = self.expr(b)?;
                if !(va || vb) {
                    (PrimExpr::binary(*op, a, b), false)
                } else if !op.is_arith() {
                    return None;
                } else {
                    let a = self.widen((a, va));
                    let b = self.widen((b, vb));
                    (PrimExpr::binary(*op, a, b), true)
                }
            }
            PrimExpr::Call { dtype, op, args } => {
                let lowered: Vec<(PrimExpr, bool)> =
                    args.iter().map(|a| self.expr(a)).collect::<Option<_>>()?;
                if !lowered.iter().any(|(_, v)| *v) {
                    let args = lowered.into_iter().map(|(a, _)| a).collect();
                    (
                        PrimExpr::Call {
                            dtype: *dtype,
                            op: *op,
                            args,
                        },
                        false,
                    )
                } else if !op.has_vector_form() {
                    return None;
                } else {
                    let args = lowered.into_iter().map(|a| self.widen(a)).collect();
                    (
                        PrimExpr::Call {
                            dtype: dtype.with_lanes(self.lanes),
                            op: *op,
                            args,
                        },
                        true,
                    )
                }
            }
            PrimExpr::Cast(t, x) => {
                let (x, varying) = self.expr(x)?;
                if !varying {
                    (PrimExpr::Cast(*t, Box::new(x)), false)
                } else if t.kind == ScalarKind::Bool {
                    return None;
                } else {
                    (PrimExpr::Cast(t.with_lanes(self.lanes), Box::new(x)), true)
                }
            }
            PrimExpr::Let { .. } | PrimExpr::Ramp { .. } | PrimExpr::Broadcast { .. } => {
                return None
            }
        })
    }
}
