use super::*;
use crate::interp::{execute, gen_inputs, ExecOutcome, ExecStatus, Limits};
use crate::ir::{parse, serialize, Stmt};

const SOURCES: &[&str] = &[
    include_str!("mod.rs"),
    include_str!("constant_fold.rs"),
    include_str!("simplify.rs"),
    include_str!("unroll.rs"),
    include_str!("loop_partition.rs"),
    include_str!("dead_store.rs"),
    include_str!("vectorize.rs"),
    include_str!("inject_vthread.rs"),
    include_str!("let_inline.rs"),
    include_str!("../interp/mod.rs"),
];

fn func(text: &str) -> PrimFunc {
    parse(text).unwrap_or_else(|e| panic!("{e}\n{text}"))
}

fn apply(pass: PassId, f: &PrimFunc, bugs: &BugPlan) -> Result<PrimFunc, PassPanic> {
    let out = apply_pass(pass, f, 4, bugs, &mut CoverageHandle::new())?;
    assert!(
        validate(&out).is_ok(),
        "{:?}\n{}",
        validate(&out).messages(),
        serialize(&out)
    );
    Ok(out)
}

fn run(f: &PrimFunc, seed: u64) -> ExecOutcome {
    execute(f, &gen_inputs(f, seed), Limits::default())
}

fn same_outputs(a: &ExecOutcome, b: &ExecOutcome) -> bool {
    a.outputs.len() == b.outputs.len()
        && a.outputs.iter().zip(&b.outputs).all(|(x, y)| {
            x.data.len() == y.data.len() && x.data.iter().zip(&y.data).all(|(p, q)| p.same(*q))
        })
}

/// Same status class, same outputs on clean runs, no extra steps.
fn assert_preserves(before: &PrimFunc, after: &PrimFunc) {
    for seed in 0..6 {
        let a = run(before, seed);
        let b = run(after, seed);
        assert_eq!(
            std::mem::discriminant(&a.status),
            std::mem::discriminant(&b.status),
            "{}\n=>\n{}",
            serialize(before),
            serialize(after)
        );
        if a.status == ExecStatus::Ok {
            assert!(
                same_outputs(&a, &b),
                "{}\n=>\n{}",
                serialize(before),
                serialize(after)
            );
        }
        assert!(
            b.step_count <= a.step_count,
            "steps {} -> {}",
            a.step_count,
            b.step_count
        );
    }
}

fn wrap(buffers: &str, body: &str) -> String {
    format!("(primfunc (params (var A.0 int32)) (buffers {buffers}) (body {body}))")
}

fn vec_buf() -> &'static str {
    "(buffer A.0 int32 (shape 8))"
}

#[test]
fn every_probe_label_is_registered() {
    let reg = crate::coverage::registry();
    let mut n = 0;
    for src in SOURCES {
        for part in src.split("probe!(").skip(1) {
            let Some(start) = part.find('"') else {
                continue;
            };
            let rest = &part[start + 1..];
            let label = &rest[..rest.find('"').unwrap()];
            assert!(reg.lookup(label).is_some(), "unregistered probe {label}");
            n += 1;
        }
    }
    assert!(n > 60);
    for bug in BugId::ALL {
        assert!(reg.lookup(bug.site_label()).is_some(), "{bug}");
    }
}

#[test]
fn constant_fold_adds_immediates() {
    let f = func("(primfunc (params) (body (evaluate (add (imm int32 1) (imm int32 2)))))");
    let out = apply(PassId::ConstantFold, &f, &BugPlan::none()).unwrap();
    assert_eq!(out.body, Stmt::Evaluate(PrimExpr::int(3)));
}

#[test]
fn constant_fold_keeps_trapping_division() {
    let f = func("(primfunc (params) (body (evaluate (floordiv (imm int32 1) (imm int32 0)))))");
    let out = apply(PassId::ConstantFold, &f, &BugPlan::none()).unwrap();
    assert_eq!(out, f);
}

#[test]
fn unroll_expands_three_stores() {
    let f = func(&wrap(
        vec_buf(),
        "(for (var i.1 int32) unroll (imm int32 0) (imm int32 3) (store A.0 i.1 i.1))",
    ));
    let out = apply(PassId::UnrollLoop, &f, &BugPlan::none()).unwrap();
    let Stmt::Seq(stores) = &out.body else {
        panic!("{}", serialize(&out))
    };
    assert_eq!(stores.len(), 3);
    for (k, s) in stores.iter().enumerate() {
        assert!(matches!(s, Stmt::Store { value: PrimExpr::IntImm(_, v), .. } if v == &(k as i64)));
    }
    assert_preserves(&f, &out);
}

#[test]
fn gated_pass_is_identity() {
    let f = func(&wrap(
        vec_buf(),
        "(for (var i.1 int32) serial (imm int32 0) (imm int32 8) (if (lt i.1 (imm int32 3)) (store A.0 (imm int32 1) i.1)))",
    ));
    let mut cov = CoverageHandle::new();
    let out = apply_pass(
        PassId::LoopPartition,
        &f,
        1,
        &BugPlan::default_catalog(),
        &mut cov,
    )
    .unwrap();
    assert_eq!(out, f);
    assert_eq!(cov.last_label(), Some("loop_partition.entry.gated"));
}

#[test]
fn simplify_identities_and_dead_branches() {
    let f = func(
        "(primfunc (params (var x.0 int32)) (buffers) (ret (buffer R.1 int32 (shape 2))) (body (seq \
         (store R.1 (add (mul x.0 (imm int32 1)) (imm int32 0)) (imm int32 0)) \
         (if (imm bool 0) (store R.1 (imm int32 9) (imm int32 1)) (seq (nop) (store R.1 (floordiv x.0 (imm int32 1)) (imm int32 1)))) \
         (evaluate (add x.0 x.0)))))",
    );
    let out = apply(PassId::Simplify, &f, &BugPlan::none()).unwrap();
    assert_eq!(
        out.body,
        func(
            "(primfunc (params (var x.0 int32)) (buffers) (ret (buffer R.1 int32 (shape 2))) (body (seq \
             (store R.1 x.0 (imm int32 0)) (store R.1 x.0 (imm int32 1)))))"
        )
        .body
    );
    assert_preserves(&f, &out);
}

#[test]
fn simplify_ramp_division() {
    let f = func(
        "(primfunc (params) (buffers) (ret (buffer R.0 int32 (shape 8))) (body \
         (store R.0 (floordiv (ramp (imm int32 0) (imm int32 4) 4) (broadcast (imm int32 2) 4)) (ramp (imm int32 0) (imm int32 1) 4))))",
    );
    let out = apply(PassId::Simplify, &f, &BugPlan::none()).unwrap();
    let Stmt::Store { value, .. } = &out.body else {
        unreachable!()
    };
    assert_eq!(
        value,
        &PrimExpr::Ramp {
            base: Box::new(PrimExpr::int(0)),
            stride: Box::new(PrimExpr::int(2)),
            lanes: 4
        }
    );
    assert_preserves(&f, &out);
}

#[test]
fn loop_partition_splits_at_bound() {
    let f = func(&wrap(
        vec_buf(),
        "(for (var i.1 int32) serial (imm int32 0) (imm int32 8) \
         (if (gt i.1 (imm int32 3)) (store A.0 (imm int32 1) i.1) (store A.0 (imm int32 2) i.1)))",
    ));
    let out = apply(PassId::LoopPartition, &f, &BugPlan::none()).unwrap();
    let Stmt::Seq(parts) = &out.body else {
        panic!()
    };
    assert_eq!(parts.len(), 2);
    assert_preserves(&f, &out);
}

#[test]
fn dead_store_removes_overwritten_store() {
    let f = func(&wrap(
        vec_buf(),
        "(seq (store A.0 (imm int32 1) (imm int32 2)) (store A.0 (imm int32 5) (imm int32 2)) (store A.0 (imm int32 7) (imm int32 3)))",
    ));
    let out = apply(PassId::DeadStoreElim, &f, &BugPlan::none()).unwrap();
    assert!(matches!(&out.body, Stmt::Seq(v) if v.len() == 2));
    assert_preserves(&f, &out);
}

#[test]
fn vectorize_lowers_store_loop() {
    let f = func(
        "(primfunc (params (var A.0 float32) (var B.1 float32)) \
         (buffers (buffer A.0 float32 (shape 8)) (buffer B.1 float32 (shape 8))) (body \
         (for (var i.2 int32) vectorize (imm int32 0) (imm int32 8) \
         (store B.1 (add (load A.0 i.2) (imm float32 1.5)) i.2))))",
    );
    let out = apply(PassId::VectorizeLower, &f, &BugPlan::none()).unwrap();
    assert!(
        matches!(&out.body, Stmt::Store { .. }),
        "{}",
        serialize(&out)
    );
    assert_preserves(&f, &out);
}

#[test]
fn vectorize_rejects_invariant_index() {
    let f = func(&wrap(
        vec_buf(),
        "(for (var i.1 int32) vectorize (imm int32 0) (imm int32 4) (store A.0 i.1 (imm int32 0)))",
    ));
    let out = apply(PassId::VectorizeLower, &f, &BugPlan::none()).unwrap();
    assert_eq!(out, f);
}

#[test]
fn inject_virtual_thread_replicates_body() {
    let f = func(&wrap(
        vec_buf(),
        "(attr virtual_thread (var vt.1 int32) (imm int32 4) (store A.0 vt.1 vt.1))",
    ));
    let out = apply(PassId::InjectVirtualThread, &f, &BugPlan::none()).unwrap();
    assert!(matches!(&out.body, Stmt::Seq(v) if v.len() == 4));
    assert_preserves(&f, &out);
}

#[test]
fn let_inline_drops_and_inlines() {
    let f = func(&wrap(
        vec_buf(),
        "(letstmt (var x.1 int32) (imm int32 3) (letstmt (var y.2 int32) (imm int32 4) \
         (store A.0 x.1 (imm int32 0))))",
    ));
    let out = apply(PassId::LetInline, &f, &BugPlan::none()).unwrap();
    assert!(matches!(
        &out.body,
        Stmt::Store {
            value: PrimExpr::IntImm(_, 3),
            ..
        }
    ));
    assert_preserves(&f, &out);
}

#[test]
fn let_inline_keeps_binding_used_in_loop() {
    let f = func(&wrap(
        vec_buf(),
        "(letstmt (var x.1 int32) (add (imm int32 3) (imm int32 1)) \
         (for (var i.2 int32) serial (imm int32 0) (imm int32 8) (store A.0 x.1 i.2)))",
    ));
    let out = apply(PassId::LetInline, &f, &BugPlan::none()).unwrap();
    assert_eq!(out, f);
}

/// A witness program for each planted bug.
fn witness(bug: BugId) -> PrimFunc {
    bug.example()
}

#[test]
fn witnesses_trigger_their_bug_and_are_preserved_without_it() {
    for bug in BugId::ALL {
        let f = witness(bug);
        assert!(bug.trigger(&f), "{bug} not triggered");
        for other in BugId::ALL.into_iter().filter(|&b| b != bug) {
            assert!(!other.trigger(&f), "{other} triggered by witness of {bug}");
        }
        let clean = apply(bug.host_pass(), &f, &BugPlan::none()).unwrap();
        assert_preserves(&f, &clean);
    }
}

#[test]
fn enabled_bugs_manifest() {
    for bug in BugId::ALL {
        let f = witness(bug);
        let res = apply_pass(
            bug.host_pass(),
            &f,
            4,
            &BugPlan::only(bug),
            &mut CoverageHandle::new(),
        );
        match bug.effect() {
            BugEffect::Trap => {
                let p = res.expect_err(bug.name());
                assert_eq!(p.label, bug.site_label());
            }
            BugEffect::Miscompile => {
                let out = res.unwrap();
                let (a, b) = (run(&f, 0), run(&out, 0));
                assert!(!same_outputs(&a, &b), "{bug} did not miscompile");
            }
            BugEffect::Slowdown => {
                let out = res.unwrap();
                let (a, b) = (run(&f, 0), run(&out, 0));
                assert!(a.step_count >= 100 && b.step_count * 2 > a.step_count * 3);
            }
        }
    }
}

#[test]
fn ae1_reports_ramp_division() {
    let f = witness(BugId::Ae1);
    let p = apply_pass(
        PassId::Simplify,
        &f,
        1,
        &BugPlan::default_catalog(),
        &mut CoverageHandle::new(),
    )
    .unwrap_err();
    assert_eq!(p.detail, "div by zero in ramp simplify");
}

#[test]
fn miscompiles_need_aggressive_levels() {
    let f = witness(BugId::Mc1);
    let out = apply_pass(
        PassId::ConstantFold,
        &f,
        2,
        &BugPlan::default_catalog(),
        &mut CoverageHandle::new(),
    )
    .unwrap();
    assert_preserves(&f, &out);
}

#[test]
fn pipeline_reports_position() {
    let f = witness(BugId::Li1);
    let seq = PassSequence::new(vec![PassId::ConstantFold, PassId::LetInline], 4);
    let p = run_pipeline(
        &f,
        &seq,
        &BugPlan::default_catalog(),
        &mut CoverageHandle::new(),
    )
    .unwrap_err();
    assert_eq!((p.pass, p.index), (PassId::LetInline, Some(1)));
}
