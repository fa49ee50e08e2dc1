use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use tirfuzz_core::coverage::CoverageHandle;
use tirfuzz_core::fuzz::{default_seeds, Budget, Campaign, CampaignConfig};
use tirfuzz_core::interp::{execute, gen_inputs, Limits};
use tirfuzz_core::mutate::Mutator;
use tirfuzz_core::oracle::differential_check;
use tirfuzz_core::passes::{run_pipeline, BugPlan, PassId, PassSequence};

fn all_passes() -> PassSequence {
    PassSequence::new(PassId::ALL.to_vec(), 4)
}

fn pipeline(c: &mut Criterion) {
    let seeds = default_seeds();
    let seq = all_passes();
    let bugs = BugPlan::none();
    c.bench_function("pipeline/all_passes/seeds", |b| {
        b.iter(|| {
            for f in &seeds {
                let _ = black_box(run_pipeline(f, &seq, &bugs, &mut CoverageHandle::new()));
            }
        })
    });
    c.bench_function("interp/seeds", |b| {
        let inputs: Vec<_> = seeds.iter().map(|f| gen_inputs(f, 1)).collect();
        b.iter(|| {
            for (f, i) in seeds.iter().zip(&inputs) {
                black_box(execute(f, i, Limits::default()));
            }
        })
    });
    c.bench_function("oracle/differential_check/seeds", |b| {
        let catalog = BugPlan::default_catalog();
        b.iter(|| {
            for f in &seeds {
                black_box(differential_check(
                    f,
                    &seq,
                    &catalog,
                    &mut CoverageHandle::new(),
                    1,
                ));
            }
        })
    });
}

fn mutation(c: &mut Criterion) {
    let seeds = default_seeds();
    let mut g = c.benchmark_group("mutate");
    for m in Mutator::ALL {
        g.bench_with_input(BenchmarkId::from_parameter(m.name()), &m, |b, m| {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let mut i = 0;
            b.iter(|| {
                i = (i + 1) % seeds.len();
                black_box(m.apply(&seeds[i], &mut rng))
            })
        });
    }
    g.finish();
}

fn campaign(c: &mut Criterion) {
    c.bench_function("campaign/step", |b| {
        let mut camp = Campaign::new(CampaignConfig {
            budget: Budget::Iterations(0),
            ..CampaignConfig::default()
        })
        .unwrap();
        b.iter(|| camp.step())
    });
}

criterion_group!(benches, pipeline, mutation, campaign);
criterion_main!(benches);
