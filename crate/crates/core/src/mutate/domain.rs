//! Mutators aimed at specific passes: loop nests, memory accesses and
//! virtual-thread bindings.

use rand::seq::SliceRandom;
use rand::Rng;

use super::expr_lanes;
use super::generate::Gen;
use crate::ir::visit::{child_exprs_mut, child_stmts_mut, direct_exprs_mut, next_free_id};
use crate::ir::{
    collect_nodes, node_at, replace_at, scope_at, AttrKey, BinOp, Buffer, DataType, ForKind,
    ForLoop, Intrinsic, IrNode, LoopAttrs, NodePath, NodeRef, PrimExpr, PrimFunc, Stmt, Var,
};

/// A variable with its known inclusive value range.
type Ranged = (Var, (i64, i64));

const CONST_EXTENTS: [i64; 4] = [2, 4, 8, 16];
const VARIABLE_EXTENT_CAP: i64 = 16;

fn stmt_paths(func: &PrimFunc) -> Vec<NodePath> {
    collect_nodes(func)
        .into_iter()
        .filter(|p| matches!(node_at(func, p), Some(NodeRef::Stmt(_))))
        .collect()
}

fn stmt_at(func: &PrimFunc, path: &NodePath) -> Stmt {
    match node_at(func, path) {
        Some(NodeRef::Stmt(s)) => s.clone(),
        _ => unreachable!("path addresses a statement"),
    }
}

/// Ranges of the loop and virtual-thread variables enclosing `path` whose
/// bounds are constant.
fn ranged_vars(func: &PrimFunc, path: &NodePath) -> Vec<Ranged> {
    let mut out = Vec::new();
    let mut node = NodeRef::Stmt(&func.body);
    for &i in &path.0 {
        match node {
            NodeRef::Stmt(Stmt::For(l)) if i == 2 => {
                if let (Some(m), Some(e)) = (l.min.as_int_imm(), l.extent.as_int_imm()) {
                    if e > 0 {
                        out.push((l.var.clone(), (m, m + e - 1)));
                    }
                }
            }
            NodeRef::Stmt(Stmt::Attr {
                key: AttrKey::VirtualThread(v),
                value,
                ..
            }) if i == 1 => {
                if let Some(k) = value.as_int_imm() {
                    out.push((v.clone(), (0, k - 1)));
                }
            }
            _ => {}
        }
        node = node
            .children()
            .into_iter()
            .nth(i as usize)
            .expect("valid path");
    }
    out
}

/// An int32 index into a dimension of extent `dim` built from the given
/// variables: `a*c + b` or `a`, wrapped in `floormod(_, dim)` unless the
/// ranges prove it in bounds. `must` is always among the terms.
fn affine_index(
    dim: u32,
    must: Option<&Ranged>,
    ranged: &[Ranged],
    rng: &mut impl Rng,
) -> PrimExpr {
    let mut terms: Vec<&Ranged> = must.into_iter().collect();
    let others: Vec<&Ranged> = ranged
        .iter()
        .filter(|r| must.is_none_or(|m| m.0.id != r.0.id))
        .collect();
    let want = rng.gen_range(1..=2);
    while terms.len() < want {
        match others.choose(rng) {
            Some(&o) if !terms.iter().any(|t| t.0.id == o.0.id) => terms.insert(0, o),
            _ => break,
        }
    }
    let (expr, lo, hi) = match terms.as_slice() {
        [] => return PrimExpr::int(rng.gen_range(0..dim as i64)),
        [a] => (PrimExpr::var(&a.0), a.1 .0, a.1 .1),
        [a, b, ..] => {
            let c = if rng.gen_bool(0.5) {
                16
            } else {
                (b.1 .1 - b.1 .0 + 1).max(1)
            };
            let e = PrimExpr::add(
                PrimExpr::mul(PrimExpr::var(&a.0), PrimExpr::int(c)),
                PrimExpr::var(&b.0),
            );
            (e, a.1 .0 * c + b.1 .0, a.1 .1 * c + b.1 .1)
        }
    };
    if lo >= 0 && hi < dim as i64 {
        expr
    } else {
        PrimExpr::binary(BinOp::FloorMod, expr, PrimExpr::int(dim as i64))
    }
}

/// Visits every scalar buffer index in `s` with the extent of its dimension.
fn for_each_index_slot(s: &mut Stmt, f: &mut impl FnMut(&mut PrimExpr, u32)) {
    if let Stmt::Store {
        buffer, indices, ..
    } = s
    {
        for (idx, &d) in indices.iter_mut().zip(&buffer.shape) {
            if expr_lanes(idx) == 1 {
                f(idx, d);
            }
        }
    }
    for e in direct_exprs_mut(s) {
        index_slots_in_expr(e, f);
    }
    for c in child_stmts_mut(s) {
        for_each_index_slot(c, f);
    }
}

fn index_slots_in_expr(e: &mut PrimExpr, f: &mut impl FnMut(&mut PrimExpr, u32)) {
    if let PrimExpr::Load { buffer, indices } = e {
        for (idx, &d) in indices.iter_mut().zip(&buffer.shape) {
            if expr_lanes(idx) == 1 {
                f(idx, d);
            }
        }
    }
    for c in child_exprs_mut(e) {
        index_slots_in_expr(c, f);
    }
}

/// Rewrites one randomly chosen scalar index of `s` with `build(dim, rng)`.
/// Returns false when `s` has no buffer index.
fn rewrite_one_index<R: Rng>(
    s: &mut Stmt,
    rng: &mut R,
    mut build: impl FnMut(u32, &mut R) -> PrimExpr,
) -> bool {
    let mut n = 0usize;
    for_each_index_slot(s, &mut |_, _| n += 1);
    if n == 0 {
        return false;
    }
    let target = rng.gen_range(0..n);
    let mut seen = 0usize;
    for_each_index_slot(s, &mut |idx, d| {
        if seen == target {
            *idx = build(d, rng);
        }
        seen += 1;
    });
    true
}

/// Wraps a random statement in one to three new loops and rewrites one
/// buffer index inside it in terms of the new loop variables.
pub fn loop_nesting(func: &PrimFunc, rng: &mut impl Rng) -> PrimFunc {
    let paths = stmt_paths(func);
    let path = paths.choose(rng).expect("the body is a statement").clone();
    let scope = scope_at(func, &path).expect("valid path");
    let ints: Vec<Var> = scope
        .vars
        .iter()
        .filter(|v| v.dtype == DataType::INT32)
        .cloned()
        .collect();
    let mut ranged = ranged_vars(func, &path);

    let depth = rng.gen_range(1..=3);
    let mut loops = Vec::with_capacity(depth);
    for id in (next_free_id(func)..).take(depth) {
        let var = Var::new(["i", "j", "k"][loops.len()], DataType::INT32, id);
        let (extent, hi) = match ints.choose(rng) {
            Some(v) if rng.gen_bool(1.0 / 3.0) => (
                PrimExpr::Call {
                    dtype: DataType::INT32,
                    op: Intrinsic::Min,
                    args: vec![PrimExpr::var(v), PrimExpr::int(VARIABLE_EXTENT_CAP)],
                },
                VARIABLE_EXTENT_CAP - 1,
            ),
            _ => {
                let e = *CONST_EXTENTS.choose(rng).unwrap();
                (PrimExpr::int(e), e - 1)
            }
        };
        ranged.push((var.clone(), (0, hi)));
        loops.push((var, extent, *ForKind::ALL.choose(rng).unwrap()));
    }

    let mut body = stmt_at(func, &path);
    let inner = ranged.last().cloned();
    rewrite_one_index(&mut body, rng, |dim, r| {
        affine_index(dim, inner.as_ref(), &ranged, r)
    });

    let mut attrs: Vec<LoopAttrs> = vec![LoopAttrs::default(); depth];
    if rng.gen_bool(0.5) {
        let i = rng.gen_range(0..depth);
        attrs[i].unroll_max_steps = Some(*[0, 2, 4, 8, 16, 32, 64].choose(rng).unwrap());
    }
    if rng.gen_bool(0.25) {
        let i = rng.gen_range(0..depth);
        attrs[i].partition_hint = Some(!attrs[i].partition_hint.unwrap_or(true));
    }

    for ((var, extent, kind), attrs) in loops.into_iter().zip(attrs).rev() {
        body = Stmt::For(Box::new(ForLoop {
            var,
            min: PrimExpr::int(0),
            extent,
            kind,
            body,
            attrs,
        }));
    }
    replace_at(func, &path, IrNode::Stmt(body)).expect("statement path")
}

/// Inserts a store, a load or a fresh allocation next to a random statement.
pub fn memory_operation(func: &PrimFunc, rng: &mut impl Rng) -> PrimFunc {
    let paths = stmt_paths(func);
    let with_buffers: Vec<&NodePath> = paths
        .iter()
        .filter(|p| scope_at(func, p).is_some_and(|s| !s.buffers.is_empty()))
        .collect();
    let edit = rng.gen_range(0..3);
    if edit == 2 || with_buffers.is_empty() {
        let path = paths.choose(rng).expect("the body is a statement").clone();
        return allocate_edit(func, &path, rng);
    }
    let path = (*with_buffers.choose(rng).unwrap()).clone();
    let scope = scope_at(func, &path).expect("valid path");
    let ranged = ranged_vars(func, &path);
    let buffer: Buffer = scope.buffers.choose(rng).unwrap().clone();
    let indices: Vec<PrimExpr> = buffer
        .shape
        .iter()
        .map(|&d| affine_index(d, None, &ranged, rng))
        .collect();
    let original = stmt_at(func, &path);
    let next_id = next_free_id(func);
    let mut g = Gen::new(rng, scope, next_id);
    let new = if edit == 0 {
        let size = g.rng.gen_range(super::SIZE_RANGE);
        let value = g.expr(buffer.dtype, 2 * size);
        let store = Stmt::store(&buffer, value, indices);
        beside(store, original, g.rng)
    } else {
        let load = PrimExpr::load(&buffer, indices);
        if g.rng.gen_bool(0.5) {
            beside(Stmt::Evaluate(load), original, g.rng)
        } else {
            let var = g.fresh_var("v", buffer.dtype);
            Stmt::LetStmt {
                var,
                value: load,
                body: Box::new(original),
            }
        }
    };
    replace_at(func, &path, IrNode::Stmt(new)).expect("statement path")
}

fn beside(new: Stmt, original: Stmt, rng: &mut impl Rng) -> Stmt {
    if rng.gen_bool(0.5) {
        Stmt::Seq(vec![new, original])
    } else {
        Stmt::Seq(vec![original, new])
    }
}

fn allocate_edit(func: &PrimFunc, path: &NodePath, rng: &mut impl Rng) -> PrimFunc {
    let scope = scope_at(func, path).expect("valid path");
    let ranged = ranged_vars(func, path);
    let original = stmt_at(func, path);
    let mut g = Gen::new(rng, scope, next_free_id(func));
    let buffer = g.fresh_buffer();
    let body = if g.rng.gen_bool(0.5) {
        g.scope.buffers.push(buffer.clone());
        let size = g.rng.gen_range(super::SIZE_RANGE);
        let value = g.expr(buffer.dtype, 2 * size);
        let indices = buffer
            .shape
            .iter()
            .map(|&d| affine_index(d, None, &ranged, g.rng))
            .collect();
        Stmt::Seq(vec![Stmt::store(&buffer, value, indices), original])
    } else {
        original
    };
    let new = Stmt::Allocate {
        buffer,
        body: Box::new(body),
    };
    replace_at(func, path, IrNode::Stmt(new)).expect("statement path")
}

/// Wraps a random statement in a virtual-thread scope of 2 or 4 threads and
/// makes one buffer index inside it depend on the thread variable.
pub fn thread_binding(func: &PrimFunc, rng: &mut impl Rng) -> PrimFunc {
    let paths = stmt_paths(func);
    let path = paths.choose(rng).expect("the body is a statement").clone();
    let ranged = ranged_vars(func, &path);
    let k = *[2i64, 4].choose(rng).unwrap();
    let var = Var::new("vt", DataType::INT32, next_free_id(func));
    let vt: Ranged = (var.clone(), (0, k - 1));
    let mut body = stmt_at(func, &path);
    rewrite_one_index(&mut body, rng, |dim, r| {
        affine_index(dim, Some(&vt), &ranged, r)
    });
    let new = Stmt::Attr {
        key: AttrKey::VirtualThread(var),
        value: PrimExpr::int(k),
        body: Box::new(body),
    };
    replace_at(func, &path, IrNode::Stmt(new)).expect("statement path")
}
