//! Insertion, deletion and replacement at a hole.

use rand::seq::SliceRandom;
use rand::Rng;

use super::generate::{generate, Gen};
use super::{
    derive_constraints, expr_is_closed, stmt_is_closed, Constraints, Context, NodeKind, SIZE_RANGE,
};
use crate::ir::validate;
use crate::ir::{
    infer_dtype, node_at, replace_at, BinOp, DataType, ForKind, Intrinsic, IrNode, NodeRef,
    PrimExpr, PrimFunc, ScalarKind, Scope, Stmt,
};

/// Attempts per mutation before falling back to the unchanged function.
const ATTEMPTS: usize = 8;

fn accept(ctx: &Context, node: IrNode) -> Option<PrimFunc> {
    let f = replace_at(&ctx.func, &ctx.hole, node)?;
    validate(&f).is_ok().then_some(f)
}

/// Replaces the hole with a freshly generated node.
pub fn mutate_insert(ctx: &Context, rng: &mut impl Rng) -> PrimFunc {
    let c = derive_constraints(ctx);
    for _ in 0..ATTEMPTS {
        let size = rng.gen_range(SIZE_RANGE);
        if let Some(f) = generate(&c, size, rng).ok().and_then(|n| accept(ctx, n)) {
            return f;
        }
    }
    ctx.func.clone()
}

/// Replaces the hole with one of its children that satisfies the hole's
/// constraints; `None` when no child does.
pub fn mutate_delete(ctx: &Context, rng: &mut impl Rng) -> Option<PrimFunc> {
    let c = derive_constraints(ctx);
    let scope = c.scope();
    let node = node_at(&ctx.func, &ctx.hole)?;
    let candidates: Vec<NodeRef> = node
        .children()
        .into_iter()
        .filter(|&ch| satisfies(ch, &c, &scope))
        .collect();
    let pick = candidates.choose(rng)?;
    accept(ctx, (*pick).to_owned())
}

fn satisfies(n: NodeRef, c: &Constraints, scope: &Scope) -> bool {
    match (c.node_kind, n) {
        (NodeKind::Stmt, NodeRef::Stmt(s)) => stmt_is_closed(s, scope),
        (NodeKind::Expr, NodeRef::Expr(e)) => {
            if let Some((lo, hi)) = c.imm_range {
                return e.as_int_imm().is_some_and(|v| (lo..=hi).contains(&v));
            }
            expr_is_closed(e, scope) && infer_dtype(e, &mut scope.clone()).ok() == c.expr_dtype
        }
        _ => false,
    }
}

/// Perturbs primitives; swaps or rebuilds constructors, reusing the hole's
/// children where their types fit.
pub fn mutate_replace(ctx: &Context, rng: &mut impl Rng) -> PrimFunc {
    let c = derive_constraints(ctx);
    let Some(node) = node_at(&ctx.func, &ctx.hole) else {
        return ctx.func.clone();
    };
    for _ in 0..ATTEMPTS {
        let candidate = match node {
            NodeRef::Expr(e) => replace_expr(e, &c, rng).map(IrNode::Expr),
            NodeRef::Stmt(s) => Some(IrNode::Stmt(replace_stmt(s, &c, rng))),
        };
        if let Some(f) = candidate.and_then(|n| accept(ctx, n)) {
            return f;
        }
    }
    ctx.func.clone()
}

fn perturb_int(v: i64, rng: &mut impl Rng) -> i64 {
    match rng.gen_range(0..5) {
        0 => v + 1,
        1 => v - 1,
        2 => v * 2,
        3 => -v,
        _ => rng.gen_range(-64..=63),
    }
}

fn clamp_imm(dt: DataType, v: i64, range: Option<(i64, i64)>) -> i64 {
    let (lo, hi) = range.unwrap_or(match dt.kind {
        ScalarKind::Int32 => (i32::MIN as i64, i32::MAX as i64),
        ScalarKind::UInt32 => (0, u32::MAX as i64),
        _ => (0, 1),
    });
    v.clamp(lo, hi)
}

fn replace_primitive(e: &PrimExpr, c: &Constraints, rng: &mut impl Rng) -> Option<PrimExpr> {
    match e {
        PrimExpr::IntImm(dt, v) if dt.kind == ScalarKind::Bool => {
            Some(PrimExpr::IntImm(*dt, 1 - *v))
        }
        PrimExpr::IntImm(dt, v) => Some(PrimExpr::IntImm(
            *dt,
            clamp_imm(*dt, perturb_int(*v, rng), c.imm_range),
        )),
        PrimExpr::FloatImm(dt, v) => {
            let nv = match rng.gen_range(0..5) {
                0 => v + 1.0,
                1 => v - 1.0,
                2 => v * 2.0,
                3 => -v,
                _ => rng.gen_range(-16..=16) as f64 / 8.0,
            };
            let nv = nv as f32 as f64;
            Some(PrimExpr::FloatImm(
                *dt,
                if nv.is_finite() { nv } else { 0.0 },
            ))
        }
        PrimExpr::Var(v) => {
            let others: Vec<_> = c
                .vars_in_scope
                .iter()
                .filter(|o| o.dtype == v.dtype && o.id != v.id)
                .collect();
            match others.choose(rng) {
                Some(o) if rng.gen_bool(0.5) => Some(PrimExpr::var(o)),
                _ => {
                    let mut g = Gen::new(rng, c.scope(), c.next_id);
                    if v.dtype.is_scalar() {
                        Some(g.imm(v.dtype))
                    } else {
                        Some(g.expr(v.dtype, 2))
                    }
                }
            }
        }
        _ => None,
    }
}

/// Swaps the constructor for a compatible one over the same children.
fn swap_constructor(e: &PrimExpr, scope: &Scope, rng: &mut impl Rng) -> Option<PrimExpr> {
    match e {
        PrimExpr::Binary(op, l, r) => {
            let operand = infer_dtype(l, &mut scope.clone()).ok()?;
            let family: Vec<BinOp> = if op.is_logical() {
                vec![BinOp::And, BinOp::Or]
            } else if op.is_comparison() {
                if operand.kind.is_numeric() {
                    vec![BinOp::Eq, BinOp::Gt, BinOp::Lt]
                } else {
                    vec![BinOp::Eq]
                }
            } else {
                BinOp::ALL.into_iter().filter(|o| o.is_arith()).collect()
            };
            let other: Vec<BinOp> = family.into_iter().filter(|o| o != op).collect();
            let op = *other.choose(rng)?;
            Some(PrimExpr::Binary(op, l.clone(), r.clone()))
        }
        PrimExpr::Call { dtype, op, args } => {
            let other: Vec<Intrinsic> = Intrinsic::ALL
                .into_iter()
                .filter(|o| {
                    o != op
                        && o.arity() == op.arity()
                        && o.accepts(dtype.kind)
                        && (dtype.is_scalar() || o.has_vector_form())
                })
                .collect();
            Some(PrimExpr::Call {
                dtype: *dtype,
                op: *other.choose(rng)?,
                args: args.clone(),
            })
        }
        _ => None,
    }
}

fn replace_expr(e: &PrimExpr, c: &Constraints, rng: &mut impl Rng) -> Option<PrimExpr> {
    if let Some(p) = replace_primitive(e, c, rng) {
        return Some(p);
    }
    let scope = c.scope();
    if rng.gen_bool(0.5) {
        if let Some(s) = swap_constructor(e, &scope, rng) {
            return Some(s);
        }
    }
    let t = c.expr_dtype?;
    let pool: Vec<(PrimExpr, DataType)> = NodeRef::Expr(e)
        .children()
        .into_iter()
        .filter_map(|ch| match ch {
            NodeRef::Expr(x) if expr_is_closed(x, &scope) => infer_dtype(x, &mut scope.clone())
                .ok()
                .map(|t| (x.clone(), t)),
            _ => None,
        })
        .collect();
    let size = rng.gen_range(SIZE_RANGE);
    let mut g = Gen::new(rng, scope, c.next_id);
    g.pool_exprs = pool;
    Some(g.expr_root(t, 2 * size))
}

fn replace_stmt(s: &Stmt, c: &Constraints, rng: &mut impl Rng) -> Stmt {
    if let Stmt::For(l) = s {
        if rng.gen_bool(0.5) {
            let kinds: Vec<ForKind> = ForKind::ALL.into_iter().filter(|k| *k != l.kind).collect();
            let mut l = l.clone();
            l.kind = *kinds.choose(rng).unwrap();
            return Stmt::For(l);
        }
    }
    let scope = c.scope();
    let mut pool_exprs = Vec::new();
    let mut pool_stmts = Vec::new();
    for ch in NodeRef::Stmt(s).children() {
        match ch {
            NodeRef::Stmt(x) if stmt_is_closed(x, &scope) => pool_stmts.push(x.clone()),
            NodeRef::Expr(x) if expr_is_closed(x, &scope) => {
                if let Ok(t) = infer_dtype(x, &mut scope.clone()) {
                    pool_exprs.push((x.clone(), t));
                }
            }
            _ => {}
        }
    }
    let size = rng.gen_range(SIZE_RANGE);
    let mut g = Gen::new(rng, scope, c.next_id);
    g.pool_exprs = pool_exprs;
    g.pool_stmts = pool_stmts;
    g.stmt_root(2 * size)
}
