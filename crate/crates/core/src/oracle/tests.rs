use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::interp::TrapKind;
use crate::ir::{parse, validate};
use crate::mutate::{generate, Constraints};
use crate::passes::{random_pass_seq, BugEffect, PassId};

fn template() -> PrimFunc {
    parse(
        "(primfunc (params (var A.0 int32) (var B.1 float32) (var n.2 int32)) \
         (buffers (buffer A.0 int32 (shape 8)) (buffer B.1 float32 (shape 2 4))) (body (nop)))",
    )
    .unwrap()
}

/// A random valid function over the template's parameters.
fn random_func(rng: &mut ChaCha8Rng) -> PrimFunc {
    let mut f = template();
    let c = Constraints::stmt(
        f.scalar_params().cloned().collect(),
        f.global_buffers().cloned().collect(),
        3,
    );
    let size = rand::Rng::gen_range(rng, 4..=16);
    f.body = generate(&c, size, rng).unwrap().into_stmt().unwrap();
    assert!(validate(&f).is_ok());
    f
}

#[test]
fn no_failures_with_bugs_disabled() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..1000 {
        let f = random_func(&mut rng);
        let seq = random_pass_seq(&mut rng, 0..=8, 4);
        let v = differential_check(&f, &seq, &BugPlan::none(), &mut CoverageHandle::new(), i);
        assert!(
            v.is_pass(),
            "{v:?}\n{}\n{}",
            crate::ir::serialize(&f),
            seq.to_text()
        );
    }
}

fn expected_kind(bug: BugId) -> VerdictKind {
    match bug.effect() {
        BugEffect::Trap => VerdictKind::Crash,
        BugEffect::Miscompile => VerdictKind::Inconsistency,
        BugEffect::Slowdown => VerdictKind::PerfDegradation,
    }
}

#[test]
fn each_planted_bug_yields_its_effect() {
    let mut keys = std::collections::BTreeSet::new();
    for bug in BugId::ALL {
        let f = bug.example();
        let seq = PassSequence::new(vec![bug.host_pass()], 4);
        let v = differential_check(
            &f,
            &seq,
            &BugPlan::default_catalog(),
            &mut CoverageHandle::new(),
            0,
        );
        assert_eq!(v.kind, expected_kind(bug), "{bug}: {v:?}");
        assert_eq!(v.planted_bug(), Some(bug), "{v:?}");
        assert!(v.dedup_key.contains(bug.host_pass().name()), "{v:?}");
        // Same root signal, different input: same key.
        let again = differential_check(
            &f,
            &seq,
            &BugPlan::default_catalog(),
            &mut CoverageHandle::new(),
            9,
        );
        assert_eq!(again.dedup_key, v.dedup_key);
        keys.insert(v.dedup_key);
        let clean = differential_check(&f, &seq, &BugPlan::none(), &mut CoverageHandle::new(), 0);
        assert!(clean.is_pass(), "{bug}: {clean:?}");
    }
    assert_eq!(keys.len(), 10);
}

#[test]
fn slowdown_exceeds_the_margin() {
    let f = BugId::Sd1.example();
    let seq = PassSequence::new(vec![PassId::UnrollLoop], 4);
    let v = differential_check(
        &f,
        &seq,
        &BugPlan::only(BugId::Sd1),
        &mut CoverageHandle::new(),
        0,
    );
    assert_eq!(v.kind, VerdictKind::PerfDegradation);
    let ratio: f64 = v
        .detail
        .split('(')
        .nth(1)
        .unwrap()
        .trim_end_matches("x)")
        .parse()
        .unwrap();
    assert!(ratio > 1.5, "{}", v.detail);
}

#[test]
fn coverage_includes_both_compilations_and_runs() {
    let f = BugId::Mc1.example();
    let seq = PassSequence::new(vec![PassId::Simplify], 4);
    let mut cov = CoverageHandle::new();
    differential_check(&f, &seq, &BugPlan::none(), &mut cov, 0);
    let reg = crate::coverage::registry();
    for label in [
        "simplify.entry.gated",
        "simplify.entry.active",
        "interp.store.scalar",
    ] {
        assert!(
            cov.map().get(reg.lookup(label).unwrap().0 as usize),
            "{label}"
        );
    }
}

fn outcome(status: ExecStatus, data: Vec<Scalar>, steps: u64) -> ExecOutcome {
    ExecOutcome {
        status,
        outputs: if status == ExecStatus::Ok {
            vec![TensorValue {
                dtype: crate::ir::DataType::FLOAT32,
                shape: vec![data.len() as u32],
                data,
            }]
        } else {
            vec![]
        },
        step_count: steps,
        trap_detail: (status != ExecStatus::Ok).then(|| "trap".to_string()),
    }
}

#[test]
fn float_tolerance_needs_both_bounds_exceeded() {
    let cfg = OracleConfig::default();
    assert!(!floats_differ(1.0, 1.00001, &cfg));
    assert!(floats_differ(1.0, 1.001, &cfg));
    assert!(!floats_differ(1e-7, 5e-7, &cfg));
    assert!(floats_differ(1e-3, 2e-3, &cfg));
    assert!(!floats_differ(f32::NAN, f32::NAN, &cfg));
    assert!(floats_differ(f32::NAN, 0.0, &cfg));
    assert!(!floats_differ(f32::INFINITY, f32::INFINITY, &cfg));
    assert!(floats_differ(f32::INFINITY, f32::NEG_INFINITY, &cfg));
    assert!(floats_differ(f32::INFINITY, 1.0, &cfg));
}

#[test]
fn comparison_is_symmetric_except_for_performance() {
    let cfg = OracleConfig::default();
    let a = outcome(ExecStatus::Ok, vec![Scalar::F32(1.0)], 100);
    let b = outcome(ExecStatus::Ok, vec![Scalar::F32(2.0)], 100);
    assert_eq!(compare(&a, &b, None, &cfg).kind, VerdictKind::Inconsistency);
    assert_eq!(compare(&b, &a, None, &cfg).kind, VerdictKind::Inconsistency);

    let fast = outcome(ExecStatus::Ok, vec![Scalar::F32(1.0)], 100);
    let slow = outcome(ExecStatus::Ok, vec![Scalar::F32(1.0)], 151);
    assert_eq!(
        compare(&fast, &slow, None, &cfg).kind,
        VerdictKind::PerfDegradation
    );
    assert!(compare(&slow, &fast, None, &cfg).is_pass());

    let edge = outcome(ExecStatus::Ok, vec![Scalar::F32(1.0)], 150);
    assert!(compare(&fast, &edge, None, &cfg).is_pass());
    let short = outcome(ExecStatus::Ok, vec![Scalar::F32(1.0)], 99);
    let long = outcome(ExecStatus::Ok, vec![Scalar::F32(1.0)], 1000);
    assert!(compare(&short, &long, None, &cfg).is_pass());
}

#[test]
fn one_sided_traps_are_unexpected_exceptions() {
    let cfg = OracleConfig::default();
    let ok = outcome(ExecStatus::Ok, vec![Scalar::F32(1.0)], 10);
    let trap = outcome(ExecStatus::Trap(TrapKind::OutOfBounds), vec![], 10);
    let v = compare(&ok, &trap, None, &cfg);
    assert_eq!(v.kind, VerdictKind::UnexpectedException);
    assert_eq!(
        v.dedup_key,
        "unexpected_exception--out_of_bounds--unattributed"
    );
    assert_eq!(compare(&trap, &ok, None, &cfg).dedup_key, v.dedup_key);
    assert!(compare(&trap, &trap, None, &cfg).is_pass());
    let limit = outcome(ExecStatus::ResourceExceeded, vec![], 1_000_001);
    assert!(compare(&limit, &ok, None, &cfg).is_pass());
    assert!(compare(&trap, &limit, None, &cfg).is_pass());
}

fn witness_of(bug: BugId) -> (Witness, OracleVerdict) {
    let w = Witness {
        func: bug.example(),
        seq: PassSequence::new(vec![bug.host_pass()], 4),
        input_seed: 3,
    };
    let v = differential_check(
        &w.func,
        &w.seq,
        &BugPlan::default_catalog(),
        &mut CoverageHandle::new(),
        3,
    );
    (w, v)
}

#[test]
fn dedup_groups_by_key() {
    let mut reports = BugReports::default();
    let (w, v) = witness_of(BugId::Li1);
    assert!(classify_and_dedup(&mut reports, &v, &w, 1).unwrap().1);
    assert!(!classify_and_dedup(&mut reports, &v, &w, 2).unwrap().1);
    assert_eq!(reports.len(), 1);
    let r = reports.iter().next().unwrap();
    assert_eq!((r.hits, r.first_iteration), (2, 1));

    // Same pass, different kind of failure: separate report.
    let other = OracleVerdict::failure(
        VerdictKind::Inconsistency,
        "let_inline",
        "let_inline.unused.call_value",
        "x".into(),
    );
    classify_and_dedup(&mut reports, &other, &w, 3);
    assert_eq!(reports.len(), 2);

    let pass = OracleVerdict::pass();
    assert!(classify_and_dedup(&mut reports, &pass, &w, 4).is_none());
    assert_eq!(reports.planted_bugs(), [BugId::Li1].into_iter().collect());
}

#[test]
fn report_directories_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = BugReports::default();
    for bug in [BugId::Mc2, BugId::Oob1] {
        let (w, v) = witness_of(bug);
        classify_and_dedup(&mut reports, &v, &w, 0);
    }
    reports.write_dirs(dir.path()).unwrap();
    for r in reports.iter() {
        let d = dir.path().join(&r.dedup_key);
        for f in ["witness.tir", "passes.txt", "verdict.txt", "input_seed.txt"] {
            assert!(d.join(f).is_file(), "{f}");
        }
        let (w, recorded) = read_witness(&d).unwrap();
        assert_eq!(recorded, Some((r.kind, r.dedup_key.clone())));
        assert_eq!(w.seq, r.passes);
        assert_eq!(w.input_seed, r.input_seed);
        let v = differential_check(
            &w.func,
            &w.seq,
            &BugPlan::default_catalog(),
            &mut CoverageHandle::new(),
            w.input_seed,
        );
        assert_eq!(v.dedup_key, r.dedup_key);
    }
}

#[test]
fn corrupted_witness_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("witness.tir"),
        "(primfunc (params) (body (store X.9 ",
    )
    .unwrap();
    std::fs::write(dir.path().join("passes.txt"), "simplify\nopt_level=4\n").unwrap();
    std::fs::write(dir.path().join("input_seed.txt"), "1\n").unwrap();
    assert!(matches!(
        read_witness(dir.path()),
        Err(WitnessError::Parse(_))
    ));
}

#[test]
fn recheck_counts_reproducing_inputs() {
    let (w, v) = witness_of(BugId::Lp1);
    let n = recheck(
        &w.func,
        &w.seq,
        &BugPlan::default_catalog(),
        w.input_seed,
        &v,
        &OracleConfig::default(),
    );
    assert_eq!(n, RECHECK_INPUTS);
}
