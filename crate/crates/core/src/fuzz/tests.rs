use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::ir::{parse, serialize, Stmt};
use crate::passes::{BugId, PassId};

fn cfg(iters: u64, seed: u64) -> CampaignConfig {
    CampaignConfig {
        budget: Budget::Iterations(iters),
        rng_seed: seed,
        ..CampaignConfig::default()
    }
}

#[test]
fn curated_seeds_are_valid_and_trigger_no_planted_bug() {
    let seeds = default_seeds();
    assert_eq!(seeds.len(), DEFAULT_SEED_NAMES.len());
    for (f, name) in seeds.iter().zip(DEFAULT_SEED_NAMES) {
        let v = validate(f);
        assert!(v.is_ok(), "{name}: {:?}", v.messages());
        for bug in BugId::ALL {
            assert!(!bug.trigger(f), "{name} triggers {}", bug.name());
        }
        for p in PassId::ALL {
            let seq = PassSequence::new(vec![p], POOL_OPT_LEVEL);
            let (v, _) = execute_target(f, &seq, &BugPlan::default_catalog(), 1);
            assert!(v.is_pass(), "{name} with {}: {v:?}", p.name());
        }
    }
}

#[test]
fn generated_seeds_are_valid_and_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let f = generate_seed(&mut rng, 120);
        assert!(validate(&f).is_ok(), "{}", serialize(&f));
        assert!(node_count(&f) <= 120);
        assert_eq!(serialize(&parse(&serialize(&f)).unwrap()), serialize(&f));
    }
}

#[test]
fn select_is_uniform_and_rejects_an_empty_pool() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    assert!(matches!(select(&[], &mut rng), Err(FuzzError::EmptyPool)));
    let entry = SeedEntry {
        func: PrimFunc::empty(),
        seq: PassSequence::new(vec![], 4),
        stale_count: 0,
    };
    let pool = vec![entry; 8];
    let draws = 80_000;
    let mut counts = [0f64; 8];
    for _ in 0..draws {
        counts[select(&pool, &mut rng).unwrap()] += 1.0;
    }
    let expected = draws as f64 / 8.0;
    let chi2: f64 = counts
        .iter()
        .map(|c| (c - expected).powi(2) / expected)
        .sum();
    // 7 degrees of freedom, p = 0.001.
    assert!(chi2 < 24.32, "chi2 = {chi2}");
}

#[test]
fn config_rejects_zero_nmax_and_bad_weights() {
    let c = CampaignConfig {
        n_max: 0,
        ..cfg(1, 0)
    };
    assert!(matches!(Campaign::new(c), Err(FuzzError::Config(_))));
    let c = CampaignConfig {
        mutator_weights: Some([0.0; 6]),
        ..cfg(1, 0)
    };
    assert!(matches!(Campaign::new(c), Err(FuzzError::Config(_))));
    let c = CampaignConfig {
        ablation: Ablation::NoDomain,
        mutator_weights: Some([0.0, 0.0, 0.0, 1.0, 1.0, 1.0]),
        ..cfg(1, 0)
    };
    assert!(matches!(Campaign::new(c), Err(FuzzError::Config(_))));
    assert!(matches!(
        Campaign::from_seeds(cfg(1, 0), vec![]),
        Err(FuzzError::EmptyPool)
    ));
}

#[test]
fn zero_budget_executes_only_the_seeds() {
    let r = fuzz(cfg(0, 1)).unwrap();
    assert_eq!(r.iterations, 0);
    assert_eq!(r.valuable_tests, 0);
    assert_eq!(r.stats.executions, DEFAULT_SEED_NAMES.len() as u64);
    assert_eq!(r.coverage_timeline, vec![(0, r.popcount())]);
    assert!(r.popcount() > 0);
}

const LOOP_SEED: &str =
    "(primfunc (params (var A.0 int32)) (buffers (buffer A.0 int32 (shape 8))) \
    (body (for (var i.1 int32) serial (imm int32 0) (imm int32 8) (store A.0 i.1 i.1))))";

fn single(n_max: u32) -> Campaign {
    let c = CampaignConfig {
        n_max,
        bugs: BugPlan::none(),
        ..cfg(0, 5)
    };
    let seq = PassSequence::new(vec![PassId::Simplify], POOL_OPT_LEVEL);
    Campaign::from_seeds(c, vec![(parse(LOOP_SEED).unwrap(), seq)]).unwrap()
}

#[test]
fn stale_ir_mutations_count_up_to_the_pass_branch() {
    let mut c = single(2);
    let seed = c.pool()[0].func.clone();
    c.step_scripted(0, Scripted::Ir(seed.clone())).unwrap();
    assert_eq!(c.pool()[0].stale_count, 1);
    c.step_scripted(0, Scripted::Ir(seed.clone())).unwrap();
    assert_eq!(c.pool()[0].stale_count, 2);
    assert!(matches!(
        c.step_scripted(0, Scripted::Ir(seed)),
        Err(FuzzError::ScriptMismatch(_))
    ));
    // A pass mutation without new coverage keeps P but still resets N.
    let old = c.pool()[0].seq.clone();
    c.step_scripted(0, Scripted::Pass(old.clone())).unwrap();
    assert_eq!(c.pool()[0].stale_count, 0);
    assert_eq!(c.pool()[0].seq, old);
    assert_eq!(c.valuable_tests(), 0);
    assert!(matches!(
        c.step_scripted(0, Scripted::Pass(old)),
        Err(FuzzError::ScriptMismatch(_))
    ));
}

#[test]
fn invalid_mutants_are_counted_but_never_pooled() {
    let mut c = single(5);
    let mut bad = c.pool()[0].func.clone();
    bad.body = Stmt::Evaluate(crate::ir::PrimExpr::Var(crate::ir::Var::new(
        "q",
        crate::ir::DataType::INT32,
        99,
    )));
    c.step_scripted(0, Scripted::Ir(bad)).unwrap();
    assert_eq!(c.iteration(), 1);
    assert_eq!(c.pool().len(), 1);
    assert_eq!(c.pool()[0].stale_count, 1);
    let r = c.finish();
    assert_eq!(r.stats.invalid_mutants, 1);
    assert_eq!(r.stats.executions, 1);
}

/// Three iterations with `N_max = 1`: a covering IR mutant, a stale IR
/// mutant, then a covering pass mutation.
#[test]
fn scripted_scenario_counts_two_valuable_tests() {
    let mut c = single(1);
    let seed = c.pool()[0].func.clone();
    let child = parse(
        "(primfunc (params (var A.0 int32)) (buffers (buffer A.0 int32 (shape 8))) \
         (body (for (var i.1 int32) serial (imm int32 0) (imm int32 8) \
           (if (lt i.1 (imm int32 4)) (store A.0 (mul i.1 (imm int32 3)) i.1) \
             (store A.0 (floordiv i.1 (imm int32 2)) i.1)))))",
    )
    .unwrap();
    c.step_scripted(0, Scripted::Ir(child.clone())).unwrap();
    assert_eq!(c.pool().len(), 2);
    assert_eq!(c.pool()[1].func, child);
    assert_eq!(c.pool()[0].stale_count, 0);
    assert_eq!(c.valuable_tests(), 1);

    c.step_scripted(0, Scripted::Ir(seed)).unwrap();
    assert_eq!(c.pool()[0].stale_count, 1);
    assert_eq!(c.valuable_tests(), 1);

    let p2 = PassSequence::new(
        vec![
            PassId::LoopPartition,
            PassId::UnrollLoop,
            PassId::VectorizeLower,
        ],
        4,
    );
    c.step_scripted(0, Scripted::Pass(p2.clone())).unwrap();
    assert_eq!(c.pool()[0].seq, p2);
    assert_eq!(c.pool()[0].stale_count, 0);
    assert_eq!(c.valuable_tests(), 2);
    assert_eq!(c.finish().iterations, 3);
}

#[test]
fn iteration_mode_is_deterministic() {
    let a = fuzz(cfg(300, 9)).unwrap();
    let b = fuzz(cfg(300, 9)).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.coverage_csv(), b.coverage_csv());
    assert_eq!(a.pool, b.pool);
    let c = fuzz(cfg(300, 10)).unwrap();
    assert_ne!(a.to_json(), c.to_json());
}

#[test]
fn report_invariants_hold() {
    let r = fuzz(cfg(400, 11)).unwrap();
    assert_eq!(r.iterations, 400);
    assert_eq!(
        r.stats.ir_mutations + r.stats.pass_mutations + r.stats.no_mutation,
        400
    );
    // Every pool insertion and every covering pass mutation is valuable.
    assert!(r.valuable_tests >= r.pool.len() as u64 - DEFAULT_SEED_NAMES.len() as u64);
    assert!(r.pool.iter().all(|e| e.stale_count <= DEFAULT_N_MAX));
    assert!(r
        .pool
        .iter()
        .all(|e| node_count(&e.func) <= DEFAULT_MAX_NODES));
    let t = &r.coverage_timeline;
    assert_eq!(t.first().unwrap().0, 0);
    assert_eq!(t.last(), Some(&(400, r.popcount())));
    assert!(t.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
    assert!(r.stats.pass_mutations > 0);
}

#[test]
fn bugs_off_campaign_files_nothing() {
    let r = fuzz(CampaignConfig {
        bugs: BugPlan::none(),
        ..cfg(500, 12)
    })
    .unwrap();
    assert!(
        r.bug_reports.is_empty(),
        "{:?}",
        r.bug_reports.reports.keys().collect::<Vec<_>>()
    );
}

#[test]
fn ablations_change_the_loop() {
    let no_fb = fuzz(CampaignConfig {
        ablation: Ablation::NoFeedback,
        ..cfg(200, 13)
    })
    .unwrap();
    assert_eq!(no_fb.pool.len(), DEFAULT_SEED_NAMES.len());
    assert_eq!(no_fb.valuable_tests, 0);
    assert!(no_fb.stats.pass_mutations > 0);

    let ir = fuzz(CampaignConfig {
        ablation: Ablation::IrOnly,
        ..cfg(200, 13)
    })
    .unwrap();
    assert_eq!(ir.stats.pass_mutations, 0);

    let nd = fuzz(CampaignConfig {
        ablation: Ablation::NoDomain,
        ..cfg(200, 13)
    })
    .unwrap();
    assert!(nd
        .stats
        .mutators
        .keys()
        .all(|k| ["insert", "delete", "replace"].contains(&k.as_str())));

    let rj = fuzz(CampaignConfig {
        ablation: Ablation::RandomJoint,
        ..cfg(200, 13)
    })
    .unwrap();
    assert_eq!(rj.stats.pass_mutations, 0);
    let seqs: std::collections::HashSet<_> = rj.pool.iter().map(|e| e.seq.clone()).collect();
    assert!(seqs.len() > DEFAULT_SEED_NAMES.len() / 2);

    for a in Ablation::ALL {
        assert_eq!(Ablation::from_name(a.name()), Some(a));
    }
}

#[test]
fn empty_seed_source_starts_from_one_function() {
    let r = fuzz(CampaignConfig {
        seed_source: SeedSource::Empty,
        ..cfg(100, 14)
    })
    .unwrap();
    assert_eq!(r.iterations, 100);
    assert!(r.pool.len() > 1);
}

#[test]
fn time_budget_stops() {
    let start = std::time::Instant::now();
    let r = fuzz(CampaignConfig {
        budget: Budget::Seconds(0.3),
        ..cfg(0, 15)
    })
    .unwrap();
    assert!(start.elapsed().as_secs_f64() < 5.0);
    assert!(r.iterations > 0);
}

#[test]
fn parallel_runs_merge() {
    let r = fuzz_parallel(cfg(100, 16), 2).unwrap();
    assert_eq!(r.iterations, 200);
    let a = fuzz(cfg(100, 16)).unwrap();
    let b = fuzz(cfg(100, 17)).unwrap();
    let mut m = a.clone();
    m.merge(b);
    assert_eq!(r.to_json(), m.to_json());
    assert!(r.popcount() >= a.popcount());
    assert_eq!(r.coverage_timeline.last(), Some(&(100, r.popcount())));
}

#[test]
fn execute_target_is_deterministic_and_covers_pass_entries() {
    let f = parse(LOOP_SEED).unwrap();
    let empty = PassSequence::new(vec![], POOL_OPT_LEVEL);
    let (v, cov) = execute_target(&f, &empty, &BugPlan::none(), 3);
    assert!(v.is_pass());
    assert!(cov.popcount() > 0);
    let (_, again) = execute_target(&f, &empty, &BugPlan::none(), 3);
    assert_eq!(cov, again);

    let bug = BugId::Ur2;
    let seq = PassSequence::new(vec![bug.host_pass()], POOL_OPT_LEVEL);
    let (v, cov) = execute_target(&bug.example(), &seq, &BugPlan::default_catalog(), 3);
    assert_eq!(v.kind, crate::oracle::VerdictKind::Crash);
    assert_eq!(v.planted_bug(), Some(bug));
    assert!(cov.popcount() > 0);
}
