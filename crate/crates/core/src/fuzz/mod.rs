//! The joint IR/pass-sequence fuzzing loop.
//!
//! Each pool entry carries a stale counter `N`. An entry whose counter has
//! reached `n_max` gets its pass sequence mutated; otherwise its function is
//! mutated and the mutant joins the pool when it reaches new coverage.

mod report;
mod seeds;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{CampaignReport, CampaignStats, CATALOG_FILE};
pub use seeds::{default_seeds, generate_seed, load_seed_dir, DEFAULT_SEED_NAMES};

use crate::coverage::{registry, CoverageHandle, CoverageMap};
use crate::ir::visit::node_count;
use crate::ir::{validate, PrimFunc};
use crate::mix_seed;
use crate::mutate::Mutator;
use crate::oracle::{
    classify_and_dedup, differential_check_with, recheck, BugReports, OracleConfig, OracleVerdict,
    Witness,
};
use crate::passes::{mutate_pass_seq, random_pass_seq, BugPlan, PassSequence};

/// Default `N_max`.
pub const DEFAULT_N_MAX: u32 = 5;
/// Mutants with more nodes than this are discarded unexecuted.
pub const DEFAULT_MAX_NODES: usize = 400;
/// Mutator draws per IR mutation before giving up on the iteration.
const MUTATOR_TRIES: usize = 8;
/// Initial pass sequences have this many passes.
const INITIAL_SEQ_LEN: std::ops::RangeInclusive<usize> = 1..=3;
/// Opt level recorded in pool pass sequences (the optimized build).
const POOL_OPT_LEVEL: u8 = crate::oracle::OPTIMIZED_LEVEL;

/// One pool entry `<F, P, N>`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedEntry {
    pub func: PrimFunc,
    pub seq: PassSequence,
    pub stale_count: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Iterations(u64),
    Seconds(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    /// The full joint loop.
    Full,
    /// Never mutate pass sequences.
    IrOnly,
    /// Coverage never counts as new: the pool stays at its seeds.
    NoFeedback,
    /// Only insertion, deletion and replacement.
    NoDomain,
    /// Mutate the function and its parent's pass sequence together every
    /// iteration.
    RandomJoint,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::Full,
        Ablation::IrOnly,
        Ablation::NoFeedback,
        Ablation::NoDomain,
        Ablation::RandomJoint,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::IrOnly => "ir-only",
            Ablation::NoFeedback => "no-feedback",
            Ablation::NoDomain => "no-domain",
            Ablation::RandomJoint => "random-joint",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Ablation::ALL.into_iter().find(|a| a.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SeedSource {
    /// The curated seeds shipped with the crate.
    Default,
    /// A single empty function.
    Empty,
    /// Every `.tir` file in a directory.
    Dir(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CampaignConfig {
    pub budget: Budget,
    pub n_max: u32,
    pub rng_seed: u64,
    pub bugs: BugPlan,
    pub seed_source: SeedSource,
    /// Relative weights in [`Mutator::ALL`] order; uniform when absent.
    pub mutator_weights: Option<[f64; 6]>,
    pub ablation: Ablation,
    pub oracle: OracleConfig,
    pub max_nodes: usize,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            budget: Budget::Iterations(1000),
            n_max: DEFAULT_N_MAX,
            rng_seed: 0,
            bugs: BugPlan::default_catalog(),
            seed_source: SeedSource::Default,
            mutator_weights: None,
            ablation: Ablation::Full,
            oracle: OracleConfig::default(),
            max_nodes: DEFAULT_MAX_NODES,
        }
    }
}

impl CampaignConfig {
    pub fn check(&self) -> Result<(), FuzzError> {
        if self.n_max < 1 {
            return Err(FuzzError::Config("nmax must be ≥ 1".into()));
        }
        if let Budget::Seconds(s) = self.budget {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(FuzzError::Config(format!("invalid time budget {s}")));
            }
        }
        if let Some(w) = &self.mutator_weights {
            let usable: Vec<f64> = self
                .mutator_choices()
                .iter()
                .map(|m| w[*m as usize])
                .collect();
            if w.iter().any(|x| !(*x >= 0.0 && x.is_finite())) || usable.iter().sum::<f64>() <= 0.0
            {
                return Err(FuzzError::Config(
                    "mutator weights must be non-negative with a positive sum".into(),
                ));
            }
        }
        Ok(())
    }

    fn mutator_choices(&self) -> &'static [Mutator] {
        if self.ablation == Ablation::NoDomain {
            &Mutator::GENERAL
        } else {
            &Mutator::ALL
        }
    }
}

#[derive(Debug, Error)]
pub enum FuzzError {
    #[error("seed pool is empty")]
    EmptyPool,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot read seeds: {0}")]
    Seeds(String),
    #[error("scripted mutation does not match the {0} branch")]
    ScriptMismatch(&'static str),
}

/// Uniformly random pool index.
pub fn select(pool: &[SeedEntry], rng: &mut impl Rng) -> Result<usize, FuzzError> {
    if pool.is_empty() {
        return Err(FuzzError::EmptyPool);
    }
    Ok(rng.gen_range(0..pool.len()))
}

/// Runs the differential check with a fresh coverage handle.
pub fn execute_target(
    func: &PrimFunc,
    seq: &PassSequence,
    bugs: &BugPlan,
    input_seed: u64,
) -> (OracleVerdict, CoverageMap) {
    execute_target_with(func, seq, bugs, input_seed, &OracleConfig::default())
}

pub fn execute_target_with(
    func: &PrimFunc,
    seq: &PassSequence,
    bugs: &BugPlan,
    input_seed: u64,
    cfg: &OracleConfig,
) -> (OracleVerdict, CoverageMap) {
    let mut cov = CoverageHandle::new();
    let v = differential_check_with(func, seq, bugs, &mut cov, input_seed, cfg);
    (v, cov.map().clone())
}

/// Input seed of iteration `iteration` of a campaign.
pub fn input_seed(rng_seed: u64, iteration: u64) -> u64 {
    mix_seed(rng_seed, iteration)
}

/// A mutation supplied by the caller instead of drawn at random. It must
/// match the branch the loop takes for the selected entry.
#[derive(Clone, Debug, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Scripted {
    Ir(PrimFunc),
    Pass(PassSequence),
}

/// A running campaign.
pub struct Campaign {
    cfg: CampaignConfig,
    rng: ChaCha8Rng,
    pool: Vec<SeedEntry>,
    total: CoverageMap,
    iteration: u64,
    valuable: u64,
    timeline: Vec<(u64, usize)>,
    reports: BugReports,
    stats: CampaignStats,
    weights: Option<WeightedIndex<f64>>,
}

impl Campaign {
    /// Loads the configured seeds and executes each once.
    pub fn new(cfg: CampaignConfig) -> Result<Self, FuzzError> {
        cfg.check()?;
        let funcs = match &cfg.seed_source {
            SeedSource::Default => default_seeds(),
            SeedSource::Empty => vec![PrimFunc::empty()],
            SeedSource::Dir(dir) => load_seed_dir(dir).map_err(FuzzError::Seeds)?,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        let seeds = funcs
            .into_iter()
            .map(|f| {
                let seq = random_pass_seq(&mut rng, INITIAL_SEQ_LEN, POOL_OPT_LEVEL);
                (f, seq)
            })
            .collect();
        Self::with_seeds(cfg, seeds, rng)
    }

    /// A campaign over explicit `(function, pass sequence)` seeds.
    pub fn from_seeds(
        cfg: CampaignConfig,
        seeds: Vec<(PrimFunc, PassSequence)>,
    ) -> Result<Self, FuzzError> {
        cfg.check()?;
        let rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        Self::with_seeds(cfg, seeds, rng)
    }

    fn with_seeds(
        cfg: CampaignConfig,
        seeds: Vec<(PrimFunc, PassSequence)>,
        rng: ChaCha8Rng,
    ) -> Result<Self, FuzzError> {
        if seeds.is_empty() {
            return Err(FuzzError::EmptyPool);
        }
        for (f, _) in &seeds {
            let v = validate(f);
            if !v.is_ok() {
                return Err(FuzzError::Seeds(v.messages().join("; ")));
            }
        }
        let weights = cfg.mutator_weights.map(|w| {
            let choices = cfg.mutator_choices();
            WeightedIndex::new(choices.iter().map(|m| w[*m as usize])).expect("checked weights")
        });
        let mut c = Campaign {
            rng,
            pool: Vec::with_capacity(seeds.len()),
            total: registry().empty_map(),
            iteration: 0,
            valuable: 0,
            timeline: Vec::new(),
            reports: BugReports::default(),
            stats: CampaignStats::default(),
            weights,
            cfg,
        };
        for (func, seq) in seeds {
            let seed = input_seed(c.cfg.rng_seed, 0);
            c.execute(&func, &seq, seed);
            c.pool.push(SeedEntry {
                func,
                seq,
                stale_count: 0,
            });
        }
        c.timeline.push((0, c.total.popcount()));
        Ok(c)
    }

    pub fn pool(&self) -> &[SeedEntry] {
        &self.pool
    }

    pub fn total_coverage(&self) -> &CoverageMap {
        &self.total
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn valuable_tests(&self) -> u64 {
        self.valuable
    }

    /// Executes a test, files any failure and merges its coverage. Returns
    /// whether the coverage was new.
    fn execute(&mut self, func: &PrimFunc, seq: &PassSequence, input_seed: u64) -> bool {
        self.stats.executions += 1;
        let (verdict, cov) =
            execute_target_with(func, seq, &self.cfg.bugs, input_seed, &self.cfg.oracle);
        if !verdict.is_pass() {
            let witness = Witness {
                func: func.clone(),
                seq: seq.clone(),
                input_seed,
            };
            if let Some((report, true)) =
                classify_and_dedup(&mut self.reports, &verdict, &witness, self.iteration)
            {
                report.extra_repros = recheck(
                    func,
                    seq,
                    &self.cfg.bugs,
                    input_seed,
                    &verdict,
                    &self.cfg.oracle,
                );
            }
        }
        let new = crate::coverage::has_new(&cov, &self.total).expect("same registry");
        if new {
            self.total.merge_from(&cov).expect("same registry");
        }
        new && self.cfg.ablation != Ablation::NoFeedback
    }

    fn draw_mutator(&mut self) -> Mutator {
        let choices = self.cfg.mutator_choices();
        match &self.weights {
            Some(w) => choices[w.sample(&mut self.rng)],
            None => *choices.choose(&mut self.rng).unwrap(),
        }
    }

    fn mutate_ir(&mut self, func: &PrimFunc) -> Option<PrimFunc> {
        for _ in 0..MUTATOR_TRIES {
            let m = self.draw_mutator();
            if let Some(out) = m.apply(func, &mut self.rng) {
                *self.stats.mutators.entry(m.name().to_string()).or_default() += 1;
                return Some(out);
            }
        }
        None
    }

    fn takes_pass_branch(&self, idx: usize) -> bool {
        self.cfg.ablation != Ablation::IrOnly
            && self.cfg.ablation != Ablation::RandomJoint
            && self.pool[idx].stale_count >= self.cfg.n_max
    }

    /// One iteration with random selection and mutation.
    pub fn step(&mut self) {
        let idx = select(&self.pool, &mut self.rng).expect("pool is never empty");
        let mutation = if self.takes_pass_branch(idx) {
            Scripted::Pass(mutate_pass_seq(&self.pool[idx].seq, &mut self.rng))
        } else {
            let func = self.pool[idx].func.clone();
            match self.mutate_ir(&func) {
                Some(f) => Scripted::Ir(f),
                None => {
                    self.iteration += 1;
                    self.stats.no_mutation += 1;
                    self.stale(idx);
                    self.record();
                    return;
                }
            }
        };
        self.apply(idx, mutation);
    }

    /// One iteration on pool entry `idx` with a given mutation.
    pub fn step_scripted(&mut self, idx: usize, mutation: Scripted) -> Result<(), FuzzError> {
        if idx >= self.pool.len() {
            return Err(FuzzError::EmptyPool);
        }
        match (&mutation, self.takes_pass_branch(idx)) {
            (Scripted::Pass(_), false) => return Err(FuzzError::ScriptMismatch("IR")),
            (Scripted::Ir(_), true) => return Err(FuzzError::ScriptMismatch("pass")),
            _ => {}
        }
        self.apply(idx, mutation);
        Ok(())
    }

    fn stale(&mut self, idx: usize) {
        let n = &mut self.pool[idx].stale_count;
        *n = (*n + 1).min(self.cfg.n_max);
    }

    fn apply(&mut self, idx: usize, mutation: Scripted) {
        self.iteration += 1;
        let seed = input_seed(self.cfg.rng_seed, self.iteration);
        match mutation {
            Scripted::Pass(p2) => {
                self.stats.pass_mutations += 1;
                let func = self.pool[idx].func.clone();
                if self.execute(&func, &p2, seed) {
                    self.valuable += 1;
                    self.pool[idx].seq = p2;
                }
                // Reset on both outcomes: no consecutive pass mutations.
                self.pool[idx].stale_count = 0;
            }
            Scripted::Ir(f2) => {
                self.stats.ir_mutations += 1;
                let seq = if self.cfg.ablation == Ablation::RandomJoint {
                    mutate_pass_seq(&self.pool[idx].seq, &mut self.rng)
                } else {
                    self.pool[idx].seq.clone()
                };
                if !validate(&f2).is_ok() {
                    self.stats.invalid_mutants += 1;
                    self.stale(idx);
                } else if node_count(&f2) > self.cfg.max_nodes {
                    self.stats.oversized_mutants += 1;
                    self.stale(idx);
                } else if self.execute(&f2, &seq, seed) {
                    self.valuable += 1;
                    self.pool.push(SeedEntry {
                        func: f2,
                        seq,
                        stale_count: 0,
                    });
                    self.pool[idx].stale_count = 0;
                } else {
                    self.stale(idx);
                }
            }
        }
        self.record();
    }

    fn record(&mut self) {
        let pc = self.total.popcount();
        if self.timeline.last().is_none_or(|&(_, last)| last != pc) {
            self.timeline.push((self.iteration, pc));
        }
    }

    /// Runs until the budget is spent.
    pub fn run(&mut self) {
        match self.cfg.budget {
            Budget::Iterations(n) => {
                while self.iteration < n {
                    self.step();
                }
            }
            Budget::Seconds(s) => {
                let deadline = Instant::now() + Duration::from_secs_f64(s);
                while Instant::now() < deadline {
                    self.step();
                }
            }
        }
    }

    pub fn finish(mut self) -> CampaignReport {
        let pc = self.total.popcount();
        if self
            .timeline
            .last()
            .is_some_and(|&(it, _)| it != self.iteration)
        {
            self.timeline.push((self.iteration, pc));
        }
        self.stats.pool_size = self.pool.len() as u64;
        CampaignReport {
            total_coverage: self.total,
            valuable_tests: self.valuable,
            iterations: self.iteration,
            bug_reports: self.reports,
            coverage_timeline: self.timeline,
            stats: self.stats,
            pool: self.pool,
            bugs: self.cfg.bugs,
        }
    }
}

/// Runs one campaign to completion.
pub fn fuzz(cfg: CampaignConfig) -> Result<CampaignReport, FuzzError> {
    let mut c = Campaign::new(cfg)?;
    c.run();
    Ok(c.finish())
}

/// Runs `jobs` independent campaigns whose rng seeds are `rng_seed`,
/// `rng_seed + 1`, ... on separate threads and merges their reports.
pub fn fuzz_parallel(cfg: CampaignConfig, jobs: usize) -> Result<CampaignReport, FuzzError> {
    cfg.check()?;
    let jobs = jobs.max(1);
    let results: Vec<Result<CampaignReport, FuzzError>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..jobs as u64)
            .map(|k| {
                let cfg = CampaignConfig {
                    rng_seed: cfg.rng_seed.wrapping_add(k),
                    ..cfg.clone()
                };
                s.spawn(move || fuzz(cfg))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("campaign thread panicked"))
            .collect()
    });
    let mut merged: Option<CampaignReport> = None;
    for r in results {
        let r = r?;
        match &mut merged {
            None => merged = Some(r),
            Some(m) => m.merge(r),
        }
    }
    Ok(merged.expect("at least one job"))
}

#[cfg(test)]
mod tests;
