//! Traversal and rewriting utilities shared by the passes and mutators.

use std::collections::HashMap;

use super::{AttrKey, PrimExpr, PrimFunc, Stmt, Var};

/// Pre-order visit of `e` and all its subexpressions.
pub fn for_each_expr<'a>(e: &'a PrimExpr, f: &mut impl FnMut(&'a PrimExpr)) {
    f(e);
    match e {
        PrimExpr::Var(_) | PrimExpr::IntImm(..) | PrimExpr::FloatImm(..) => {}
        PrimExpr::Binary(_, l, r) => {
            for_each_expr(l, f);
            for_each_expr(r, f);
        }
        PrimExpr::Call { args, .. } => args.iter().for_each(|a| for_each_expr(a, f)),
        PrimExpr::Cast(_, v) | PrimExpr::Broadcast { value: v, .. } => for_each_expr(v, f),
        PrimExpr::Let { value, body, .. } => {
            for_each_expr(value, f);
            for_each_expr(body, f);
        }
        PrimExpr::Load { indices, .. } => indices.iter().for_each(|i| for_each_expr(i, f)),
        PrimExpr::Ramp { base, stride, .. } => {
            for_each_expr(base, f);
            for_each_expr(stride, f);
        }
    }
}

/// Pre-order visit of every statement in `s`.
pub fn for_each_stmt<'a>(s: &'a Stmt, f: &mut impl FnMut(&'a Stmt)) {
    f(s);
    match s {
        Stmt::While { body, .. }
        | Stmt::LetStmt { body, .. }
        | Stmt::Allocate { body, .. }
        | Stmt::Attr { body, .. } => for_each_stmt(body, f),
        Stmt::For(l) => for_each_stmt(&l.body, f),
        Stmt::IfThenElse {
            then_case,
            else_case,
            ..
        } => {
            for_each_stmt(then_case, f);
            if let Some(e) = else_case {
                for_each_stmt(e, f);
            }
        }
        Stmt::Seq(v) => v.iter().for_each(|c| for_each_stmt(c, f)),
        Stmt::Store { .. } | Stmt::Evaluate(_) | Stmt::Nop => {}
    }
}

/// The expressions held directly by `s` (not those of nested statements).
pub fn direct_exprs(s: &Stmt) -> Vec<&PrimExpr> {
    match s {
        Stmt::While { cond, .. } | Stmt::IfThenElse { cond, .. } => vec![cond],
        Stmt::For(l) => vec![&l.min, &l.extent],
        Stmt::LetStmt { value, .. } | Stmt::Attr { value, .. } => vec![value],
        Stmt::Store { value, indices, .. } => {
            std::iter::once(value).chain(indices.iter()).collect()
        }
        Stmt::Evaluate(e) => vec![e],
        Stmt::Seq(_) | Stmt::Allocate { .. } | Stmt::Nop => vec![],
    }
}

/// Visits every expression node anywhere in `s`, in pre-order.
pub fn for_each_expr_in_stmt<'a>(s: &'a Stmt, f: &mut impl FnMut(&'a PrimExpr)) {
    for_each_stmt(s, &mut |st| {
        for e in direct_exprs(st) {
            for_each_expr(e, f);
        }
    });
}

/// Mutable access to the expression slots held directly by `s`.
pub fn direct_exprs_mut(s: &mut Stmt) -> Vec<&mut PrimExpr> {
    match s {
        Stmt::While { cond, .. } | Stmt::IfThenElse { cond, .. } => vec![cond],
        Stmt::For(l) => vec![&mut l.min, &mut l.extent],
        Stmt::LetStmt { value, .. } | Stmt::Attr { value, .. } => vec![value],
        Stmt::Store { value, indices, .. } => {
            std::iter::once(value).chain(indices.iter_mut()).collect()
        }
        Stmt::Evaluate(e) => vec![e],
        Stmt::Seq(_) | Stmt::Allocate { .. } | Stmt::Nop => vec![],
    }
}

/// The statements nested directly in `s`.
pub fn child_stmts(s: &Stmt) -> Vec<&Stmt> {
    match s {
        Stmt::While { body, .. }
        | Stmt::LetStmt { body, .. }
        | Stmt::Allocate { body, .. }
        | Stmt::Attr { body, .. } => vec![body],
        Stmt::For(l) => vec![&l.body],
        Stmt::IfThenElse {
            then_case,
            else_case,
            ..
        } => std::iter::once(then_case.as_ref())
            .chain(else_case.as_deref())
            .collect(),
        Stmt::Seq(v) => v.iter().collect(),
        Stmt::Store { .. } | Stmt::Evaluate(_) | Stmt::Nop => vec![],
    }
}

/// Mutable access to the statements nested directly in `s`.
pub fn child_stmts_mut(s: &mut Stmt) -> Vec<&mut Stmt> {
    match s {
        Stmt::While { body, .. }
        | Stmt::LetStmt { body, .. }
        | Stmt::Allocate { body, .. }
        | Stmt::Attr { body, .. } => vec![body],
        Stmt::For(l) => vec![&mut l.body],
        Stmt::IfThenElse {
            then_case,
            else_case,
            ..
        } => {
            let mut v: Vec<&mut Stmt> = vec![then_case];
            if let Some(e) = else_case {
                v.push(e);
            }
            v
        }
        Stmt::Seq(v) => v.iter_mut().collect(),
        Stmt::Store { .. } | Stmt::Evaluate(_) | Stmt::Nop => vec![],
    }
}

pub fn child_exprs_mut(e: &mut PrimExpr) -> Vec<&mut PrimExpr> {
    match e {
        PrimExpr::Var(_) | PrimExpr::IntImm(..) | PrimExpr::FloatImm(..) => vec![],
        PrimExpr::Binary(_, l, r) => vec![l, r],
        PrimExpr::Call { args, .. } => args.iter_mut().collect(),
        PrimExpr::Cast(_, v) | PrimExpr::Broadcast { value: v, .. } => vec![v],
        PrimExpr::Let { value, body, .. } => vec![value, body],
        PrimExpr::Load { indices, .. } => indices.iter_mut().collect(),
        PrimExpr::Ramp { base, stride, .. } => vec![base, stride],
    }
}

/// Post-order mutable visit of every expression node in `e`.
pub fn for_each_expr_mut(e: &mut PrimExpr, f: &mut impl FnMut(&mut PrimExpr)) {
    for c in child_exprs_mut(e) {
        for_each_expr_mut(c, f);
    }
    f(e);
}

/// Post-order mutable visit of every expression node in `s`.
pub fn for_each_expr_in_stmt_mut(s: &mut Stmt, f: &mut impl FnMut(&mut PrimExpr)) {
    for e in direct_exprs_mut(s) {
        for_each_expr_mut(e, f);
    }
    for c in child_stmts_mut(s) {
        for_each_expr_in_stmt_mut(c, f);
    }
}

fn for_each_var_in_expr_mut(e: &mut PrimExpr, f: &mut impl FnMut(&mut Var)) {
    match e {
        PrimExpr::Var(v) => f(v),
        PrimExpr::Let { var, .. } => f(var),
        PrimExpr::Load { buffer, .. } => f(&mut buffer.var),
        _ => {}
    }
    for c in child_exprs_mut(e) {
        for_each_var_in_expr_mut(c, f);
    }
}

/// Visits every variable occurrence in `s`: binders, references and
/// buffer handles.
pub fn for_each_var_mut(s: &mut Stmt, f: &mut impl FnMut(&mut Var)) {
    match s {
        Stmt::For(l) => f(&mut l.var),
        Stmt::LetStmt { var, .. } => f(var),
        Stmt::Store { buffer, .. } | Stmt::Allocate { buffer, .. } => f(&mut buffer.var),
        Stmt::Attr {
            key: AttrKey::VirtualThread(v),
            ..
        } => f(v),
        _ => {}
    }
    for e in direct_exprs_mut(s) {
        for_each_var_in_expr_mut(e, f);
    }
    for c in child_stmts_mut(s) {
        for_each_var_mut(c, f);
    }
}

fn expr_binders(e: &PrimExpr, out: &mut Vec<Var>) {
    for_each_expr(e, &mut |sub| {
        if let PrimExpr::Let { var, .. } = sub {
            out.push(var.clone());
        }
    });
}

/// Binding occurrences inside `s` in pre-order.
pub fn stmt_binders(s: &Stmt, out: &mut Vec<Var>) {
    match s {
        Stmt::For(l) => out.push(l.var.clone()),
        Stmt::LetStmt { var, .. } => out.push(var.clone()),
        Stmt::Allocate { buffer, .. } => out.push(buffer.var.clone()),
        Stmt::Attr {
            key: AttrKey::VirtualThread(v),
            ..
        } => out.push(v.clone()),
        _ => {}
    }
    for e in direct_exprs(s) {
        expr_binders(e, out);
    }
    match s {
        Stmt::While { body, .. }
        | Stmt::LetStmt { body, .. }
        | Stmt::Allocate { body, .. }
        | Stmt::Attr { body, .. } => stmt_binders(body, out),
        Stmt::For(l) => stmt_binders(&l.body, out),
        Stmt::IfThenElse {
            then_case,
            else_case,
            ..
        } => {
            stmt_binders(then_case, out);
            if let Some(e) = else_case {
                stmt_binders(e, out);
            }
        }
        Stmt::Seq(v) => v.iter().for_each(|c| stmt_binders(c, out)),
        _ => {}
    }
}

/// Every binding occurrence of the function: parameters, the return buffer
/// handle, then body binders in pre-order.
pub fn binders(func: &PrimFunc) -> Vec<Var> {
    let mut out: Vec<Var> = func.params.clone();
    if let Some(r) = &func.ret_buffer {
        out.push(r.var.clone());
    }
    stmt_binders(&func.body, &mut out);
    out
}

/// Smallest id not used by any binder.
pub fn next_free_id(func: &PrimFunc) -> u32 {
    binders(func).iter().map(|v| v.id + 1).max().unwrap_or(0)
}

pub fn next_free_id_in_stmt(s: &Stmt) -> u32 {
    let mut b = Vec::new();
    stmt_binders(s, &mut b);
    b.iter().map(|v| v.id + 1).max().unwrap_or(0)
}

/// Replaces variable ids according to `map` everywhere in `s`.
pub fn rename(s: &mut Stmt, map: &HashMap<u32, Var>) {
    if map.is_empty() {
        return;
    }
    for_each_var_mut(s, &mut |v| {
        if let Some(n) = map.get(&v.id) {
            *v = n.clone();
        }
    });
}

pub fn rename_expr(e: &mut PrimExpr, map: &HashMap<u32, Var>) {
    if map.is_empty() {
        return;
    }
    for_each_var_in_expr_mut(e, &mut |v| {
        if let Some(n) = map.get(&v.id) {
            *v = n.clone();
        }
    });
}

/// Gives every binder inside `s` a fresh id starting at `*next_id`, so that
/// copies of a subtree can coexist in one function.
pub fn freshen(s: &mut Stmt, next_id: &mut u32) {
    let mut b = Vec::new();
    stmt_binders(s, &mut b);
    let map: HashMap<u32, Var> = b
        .into_iter()
        .map(|v| {
            let id = *next_id;
            *next_id += 1;
            (v.id, Var { id, ..v })
        })
        .collect();
    rename(s, &map);
}

pub fn freshen_expr(e: &mut PrimExpr, next_id: &mut u32) {
    let mut b = Vec::new();
    expr_binders(e, &mut b);
    let map: HashMap<u32, Var> = b
        .into_iter()
        .map(|v| {
            let id = *next_id;
            *next_id += 1;
            (v.id, Var { id, ..v })
        })
        .collect();
    rename_expr(e, &map);
}

/// Replaces references to variable `id` with `with`.
pub fn substitute(s: &mut Stmt, id: u32, with: &PrimExpr) {
    for_each_expr_in_stmt_mut(s, &mut |e| {
        if matches!(e, PrimExpr::Var(v) if v.id == id) {
            *e = with.clone();
        }
    });
}

pub fn substitute_expr(e: &mut PrimExpr, id: u32, with: &PrimExpr) {
    for_each_expr_mut(e, &mut |sub| {
        if matches!(sub, PrimExpr::Var(v) if v.id == id) {
            *sub = with.clone();
        }
    });
}

/// Number of references to variable `id` in `s`.
pub fn count_uses(s: &Stmt, id: u32) -> usize {
    let mut n = 0;
    for_each_expr_in_stmt(s, &mut |e| {
        if matches!(e, PrimExpr::Var(v) if v.id == id) {
            n += 1;
        }
    });
    n
}

pub fn count_uses_expr(e: &PrimExpr, id: u32) -> usize {
    let mut n = 0;
    for_each_expr(e, &mut |sub| {
        if matches!(sub, PrimExpr::Var(v) if v.id == id) {
            n += 1;
        }
    });
    n
}

pub fn expr_node_count(e: &PrimExpr) -> usize {
    let mut n = 0;
    for_each_expr(e, &mut |_| n += 1);
    n
}

pub fn stmt_node_count(s: &Stmt) -> usize {
    let mut n = 0;
    for_each_stmt(s, &mut |st| {
        n += 1;
        for e in direct_exprs(st) {
            n += expr_node_count(e);
        }
    });
    n
}

/// Number of addressable nodes in the body (equals `collect_nodes().len()`).
pub fn node_count(func: &PrimFunc) -> usize {
    stmt_node_count(&func.body)
}

/// Renumbers binder ids densely in binding order (parameters first).
pub fn canonicalize(func: &PrimFunc) -> PrimFunc {
    let map: HashMap<u32, Var> = binders(func)
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v.id, Var { id: i as u32, ..v }))
        .collect();
    let fix = |v: &Var| map.get(&v.id).cloned().unwrap_or_else(|| v.clone());
    let mut out = func.clone();
    out.params = func.params.iter().map(fix).collect();
    for b in out.buffers.iter_mut().chain(out.ret_buffer.iter_mut()) {
        b.var = fix(&b.var);
    }
    rename(&mut out.body, &map);
    out
}

/// Deepest loop nesting (For, While and virtual-thread scopes).
pub fn loop_depth(s: &Stmt) -> usize {
    match s {
        Stmt::For(l) => 1 + loop_depth(&l.body),
        Stmt::While { body, .. } => 1 + loop_depth(body),
        Stmt::Attr {
            key: AttrKey::VirtualThread(_),
            body,
            ..
        } => 1 + loop_depth(body),
        Stmt::LetStmt { body, .. } | Stmt::Allocate { body, .. } | Stmt::Attr { body, .. } => {
            loop_depth(body)
        }
        Stmt::IfThenElse {
            then_case,
            else_case,
            ..
        } => loop_depth(then_case).max(else_case.as_deref().map_or(0, loop_depth)),
        Stmt::Seq(v) => v.iter().map(loop_depth).max().unwrap_or(0),
        _ => 0,
    }
}

/// True when evaluating `e` can neither trap nor read memory: no loads, no
/// divisions, no unbound vector intrinsics and no casts into integers (float
/// to int casts trap when out of range). Such expressions may be dropped,
/// duplicated or reordered.
pub fn is_pure_trap_free(e: &PrimExpr) -> bool {
    let mut ok = true;
    for_each_expr(e, &mut |sub| match sub {
        PrimExpr::Load { .. } => ok = false,
        PrimExpr::Binary(op, ..) if op.is_division() => ok = false,
        PrimExpr::Call { dtype, op, .. } if dtype.lanes > 1 && !op.has_vector_form() => ok = false,
        PrimExpr::Cast(to, v)
            if to.kind.is_int() && !matches!(v.as_ref(), PrimExpr::IntImm(..)) =>
        {
            ok = false
        }
        _ => {}
    });
    ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{collect_nodes, Buffer, DataType, ForKind};

    #[test]
    fn canonicalize_renumbers_in_binding_order() {
        let a = Var::new("a", DataType::INT32, 40);
        let i = Var::new("i", DataType::INT32, 7);
        let f = PrimFunc::new(
            vec![a.clone()],
            vec![],
            Stmt::for_loop(
                i.clone(),
                PrimExpr::int(0),
                PrimExpr::var(&a),
                ForKind::Serial,
                Stmt::Evaluate(PrimExpr::var(&i)),
            ),
        );
        let c = canonicalize(&f);
        assert_eq!(c.params[0].id, 0);
        let ids: Vec<u32> = binders(&c).iter().map(|v| v.id).collect();
        assert_eq!(ids, [0, 1]);
        assert_eq!(canonicalize(&c), c);
    }

    #[test]
    fn freshen_updates_buffer_references() {
        let t = Buffer::new(Var::new("T", DataType::INT32, 3), vec![4]);
        let mut s = Stmt::Allocate {
            buffer: t.clone(),
            body: Box::new(Stmt::store(&t, PrimExpr::int(1), vec![PrimExpr::int(0)])),
        };
        let mut next = 10;
        freshen(&mut s, &mut next);
        assert_eq!(next, 11);
        match &s {
            Stmt::Allocate { buffer, body } => {
                assert_eq!(buffer.var.id, 10);
                assert!(matches!(body.as_ref(), Stmt::Store { buffer: b, .. } if b.var.id == 10));
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn node_count_matches_collect_nodes() {
        let x = Var::new("x", DataType::INT32, 0);
        let f = PrimFunc::new(
            vec![x.clone()],
            vec![],
            Stmt::seq(vec![
                Stmt::Evaluate(PrimExpr::add(PrimExpr::var(&x), PrimExpr::int(1))),
                Stmt::Nop,
            ]),
        );
        assert_eq!(node_count(&f), collect_nodes(&f).len());
        assert_eq!(node_count(&f), 6);
    }
}
