use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::ir::visit::{expr_node_count, loop_depth, stmt_node_count};
use crate::ir::{parse, replace_at, serialize, validate, BinOp, IrNode, ScalarKind};

const SEEDS: &[&str] = &[
    "(primfunc (params (var A.0 int32) (var n.1 int32)) (buffers (buffer A.0 int32 (shape 16))) \
     (body (for (var i.2 int32) serial (imm int32 0) (imm int32 16) \
       (store A.0 (add (load A.0 i.2) (imm int32 1)) i.2))))",
    "(primfunc (params (var A.0 float32) (var B.1 float32)) \
     (buffers (buffer A.0 float32 (shape 4 8)) (buffer B.1 float32 (shape 8))) \
     (body (seq (store B.1 (imm float32 0.5) (imm int32 0)) \
       (if (and (eq (imm int32 1) (imm int32 1)) (gt (imm int32 3) (imm int32 2))) \
         (store A.0 (load B.1 (imm int32 0)) (imm int32 1) (imm int32 2))))))",
    "(primfunc (params) (body (nop)))",
    "(primfunc (params (var x.0 int32)) (body (evaluate (mul x.0 (imm int32 3)))))",
];

fn seeds() -> Vec<PrimFunc> {
    SEEDS
        .iter()
        .map(|s| parse(s).unwrap_or_else(|e| panic!("{e}")))
        .collect()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn assert_valid(f: &PrimFunc, what: &str) {
    let v = validate(f);
    assert!(v.is_ok(), "{what}: {:?}\n{}", v.messages(), serialize(f));
}

fn node_size(n: &IrNode) -> usize {
    match n {
        IrNode::Stmt(s) => stmt_node_count(s),
        IrNode::Expr(e) => expr_node_count(e),
    }
}

#[test]
fn generator_respects_size_bound_and_types() {
    let f = &seeds()[1];
    let mut r = rng(1);
    for i in 0..3000 {
        let ctx = pick_hole(f, &mut r);
        let c = derive_constraints(&ctx);
        let size = 1 + i % 8;
        let node = generate(&c, size, &mut r).unwrap();
        let n = node_size(&node);
        let min = c.expr_dtype.map_or(1, |t| if t.lanes > 1 { 2 } else { 1 });
        assert!(n <= (2 * size).max(min), "size {size}: {n} nodes");
        let out = replace_at(&ctx.func, &ctx.hole, node).unwrap();
        assert_valid(&out, "generate");
    }
}

#[test]
fn generator_reports_unsatisfiable() {
    let c = Constraints {
        node_kind: NodeKind::Var,
        ..Constraints::stmt(vec![], vec![], 0)
    };
    assert_eq!(
        generate(&c, 3, &mut rng(0)),
        Err(MutateError::Unsatisfiable)
    );
    let c = Constraints::expr(DataType::vector(ScalarKind::Bool, 4), vec![], vec![], 0);
    assert_eq!(
        generate(&c, 3, &mut rng(0)),
        Err(MutateError::Unsatisfiable)
    );
}

#[test]
fn attr_value_holes_only_take_constants_in_range() {
    let f = parse(
        "(primfunc (params) (body (attr virtual_thread (var vt.0 int32) (imm int32 2) (nop))))",
    )
    .unwrap();
    let ctx = Context {
        func: f,
        hole: NodePath(vec![0]),
    };
    let c = derive_constraints(&ctx);
    assert_eq!(c.imm_range, Some((1, 16)));
    let mut r = rng(2);
    for _ in 0..200 {
        assert_valid(&mutate_insert(&ctx, &mut r), "insert");
        assert_valid(&mutate_replace(&ctx, &mut r), "replace");
    }
}

fn and_hole() -> Context {
    let f = &seeds()[1];
    let hole = collect_nodes(f)
        .into_iter()
        .find(|p| {
            matches!(
                node_at(f, p),
                Some(NodeRef::Expr(PrimExpr::Binary(BinOp::And, ..)))
            )
        })
        .unwrap();
    Context {
        func: f.clone(),
        hole,
    }
}

#[test]
fn delete_returns_a_child_of_the_hole() {
    let ctx = and_hole();
    let NodeRef::Expr(PrimExpr::Binary(_, l, r)) = node_at(&ctx.func, &ctx.hole).unwrap() else {
        unreachable!()
    };
    let mut g = rng(3);
    let mut seen = HashSet::new();
    for _ in 0..50 {
        let out = mutate_delete(&ctx, &mut g).unwrap();
        let NodeRef::Expr(e) = node_at(&out, &ctx.hole).unwrap() else {
            unreachable!()
        };
        assert!(e == l.as_ref() || e == r.as_ref());
        seen.insert(serialize(&out));
    }
    assert_eq!(seen.len(), 2);
}

#[test]
fn delete_without_usable_child_is_absent() {
    let f = &seeds()[0];
    let imm = collect_nodes(f)
        .into_iter()
        .find(|p| matches!(node_at(f, p), Some(NodeRef::Expr(PrimExpr::IntImm(..)))))
        .unwrap();
    let ctx = Context {
        func: f.clone(),
        hole: imm,
    };
    assert!(mutate_delete(&ctx, &mut rng(4)).is_none());
    // The loop body refers to the loop variable, so it cannot replace the loop.
    let ctx = Context {
        func: f.clone(),
        hole: NodePath::root(),
    };
    assert!(mutate_delete(&ctx, &mut rng(4)).is_none());
}

#[test]
fn replace_can_swap_and_for_or() {
    let ctx = and_hole();
    let mut g = rng(5);
    let swapped = (0..200).any(|_| {
        let out = mutate_replace(&ctx, &mut g);
        assert_valid(&out, "replace");
        matches!(
            node_at(&out, &ctx.hole),
            Some(NodeRef::Expr(PrimExpr::Binary(BinOp::Or, ..)))
        )
    });
    assert!(swapped);
}

#[test]
fn replace_perturbs_immediates_within_type() {
    let f = &seeds()[3];
    let hole = collect_nodes(f)
        .into_iter()
        .find(|p| matches!(node_at(f, p), Some(NodeRef::Expr(PrimExpr::IntImm(..)))))
        .unwrap();
    let ctx = Context {
        func: f.clone(),
        hole,
    };
    let mut g = rng(6);
    for _ in 0..100 {
        let out = mutate_replace(&ctx, &mut g);
        assert!(matches!(
            node_at(&out, &ctx.hole),
            Some(NodeRef::Expr(PrimExpr::IntImm(t, _))) if *t == DataType::INT32
        ));
    }
}

fn chain(mut f: PrimFunc, m: Mutator, n: usize, r: &mut ChaCha8Rng) {
    for step in 0..n {
        if let Some(out) = m.apply(&f, r) {
            assert_valid(&out, m.name());
            f = out;
        }
        // Restart periodically so functions stay small.
        if step % 20 == 19 {
            f = seeds()[step % SEEDS.len()].clone();
        }
    }
}

#[test]
fn every_mutator_preserves_validity() {
    for (i, m) in Mutator::ALL.into_iter().enumerate() {
        let mut r = rng(100 + i as u64);
        for f in seeds() {
            chain(f, m, 300, &mut r);
        }
    }
}

fn vt_attrs(s: &Stmt) -> usize {
    let mut n = 0;
    for_each_stmt(s, &mut |x| {
        n += usize::from(matches!(
            x,
            Stmt::Attr {
                key: AttrKey::VirtualThread(_),
                ..
            }
        ));
    });
    n
}

fn buffer_ops(s: &Stmt) -> usize {
    let mut n = 0;
    for_each_stmt(s, &mut |x| {
        n += usize::from(matches!(x, Stmt::Store { .. } | Stmt::Allocate { .. }));
    });
    crate::ir::visit::for_each_expr_in_stmt(s, &mut |e| {
        n += usize::from(matches!(e, PrimExpr::Load { .. }));
    });
    n
}

#[test]
fn domain_mutators_grow_their_targets() {
    let mut r = rng(7);
    for f in seeds() {
        for _ in 0..200 {
            let out = loop_nesting(&f, &mut r);
            assert!(loop_depth(&out.body) > loop_depth(&f.body) || loop_depth(&out.body) >= 1);
            assert!(loop_depth(&out.body) >= loop_depth(&f.body));

            let out = memory_operation(&f, &mut r);
            assert!(buffer_ops(&out.body) > buffer_ops(&f.body));

            let out = thread_binding(&f, &mut r);
            assert_eq!(vt_attrs(&out.body), vt_attrs(&f.body) + 1);
        }
    }
}

#[test]
fn loop_nesting_forms_affine_indices() {
    let f = parse(
        "(primfunc (params (var A.0 int32)) (buffers (buffer A.0 int32 (shape 256))) \
         (body (store A.0 (imm int32 1) (imm int32 0))))",
    )
    .unwrap();
    let mut r = rng(8);
    let found = (0..200).any(|_| {
        let out = loop_nesting(&f, &mut r);
        let text = serialize(&out);
        text.contains("(add (mul i.") && text.contains("(imm int32 16)) j.")
    });
    assert!(found);
}

#[test]
fn thread_binding_uses_the_thread_variable() {
    let f = &seeds()[0];
    let mut r = rng(9);
    for _ in 0..100 {
        let out = thread_binding(f, &mut r);
        let mut vt = None;
        for_each_stmt(&out.body, &mut |s| {
            if let Stmt::Attr {
                key: AttrKey::VirtualThread(v),
                body,
                ..
            } = s
            {
                vt = Some((v.id, crate::ir::visit::count_uses(body, v.id)));
            }
        });
        let (_, uses) = vt.unwrap();
        assert!(uses >= 1, "{}", serialize(&out));
    }
}

#[test]
fn memory_operation_falls_back_to_allocation() {
    let f = &seeds()[2];
    let mut r = rng(10);
    for _ in 0..50 {
        let out = memory_operation(f, &mut r);
        assert!(matches!(out.body, Stmt::Allocate { .. }));
    }
}

#[test]
fn mutate_with_retries_absent_results() {
    let f = &seeds()[2];
    assert!(mutate_with(f, &[Mutator::Delete], 5, &mut rng(11)).is_none());
    let (m, _) = mutate_with(f, &Mutator::ALL, 50, &mut rng(11)).unwrap();
    assert!(Mutator::ALL.contains(&m));
}

#[test]
fn general_mutators_rarely_leave_the_function_unchanged() {
    let mut r = rng(12);
    for m in [Mutator::Insert, Mutator::Replace] {
        let mut same = 0;
        let mut total = 0;
        for f in seeds() {
            for _ in 0..500 {
                let out = m.apply(&f, &mut r).unwrap();
                same += usize::from(out == f);
                total += 1;
            }
        }
        assert!(same * 20 < total, "{}: {same}/{total} unchanged", m.name());
    }
}
