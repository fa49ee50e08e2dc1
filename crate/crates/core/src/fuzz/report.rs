//! Campaign results and their on-disk form.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SeedEntry;
use crate::coverage::CoverageMap;
use crate::ir::serialize;
use crate::oracle::BugReports;
use crate::passes::{BugId, BugPlan};

/// Counters kept alongside the algorithm's own state.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignStats {
    pub executions: u64,
    pub ir_mutations: u64,
    pub pass_mutations: u64,
    /// Mutants rejected by the validator.
    pub invalid_mutants: u64,
    /// Mutants over the node cap.
    pub oversized_mutants: u64,
    /// Iterations where no drawn mutator applied.
    pub no_mutation: u64,
    /// Successful applications per mutator.
    pub mutators: BTreeMap<String, u64>,
    pub pool_size: u64,
}

impl CampaignStats {
    fn merge(&mut self, o: &CampaignStats) {
        self.executions += o.executions;
        self.ir_mutations += o.ir_mutations;
        self.pass_mutations += o.pass_mutations;
        self.invalid_mutants += o.invalid_mutants;
        self.oversized_mutants += o.oversized_mutants;
        self.no_mutation += o.no_mutation;
        for (k, v) in &o.mutators {
            *self.mutators.entry(k.clone()).or_default() += v;
        }
        self.pool_size += o.pool_size;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CampaignReport {
    pub total_coverage: CoverageMap,
    pub valuable_tests: u64,
    pub iterations: u64,
    pub bug_reports: BugReports,
    /// `(iteration, popcount)` at iteration 0, at every change and at the end.
    pub coverage_timeline: Vec<(u64, usize)>,
    pub stats: CampaignStats,
    pub pool: Vec<SeedEntry>,
    /// Planted bugs enabled during the campaign.
    pub bugs: BugPlan,
}

/// Enabled-bug catalog stored in each bug-report directory.
pub const CATALOG_FILE: &str = "bugs.catalog";

#[derive(Serialize)]
struct BugSummary<'a> {
    dedup_key: &'a str,
    kind: &'a str,
    planted_bug: Option<&'a str>,
    first_iteration: u64,
    hits: u64,
    extra_repros: u64,
    detail: &'a str,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    iterations: u64,
    total_coverage: usize,
    coverage_sites: usize,
    coverage_bits: String,
    valuable_tests: u64,
    distinct_bugs: usize,
    planted_bugs_found: Vec<&'static str>,
    bug_reports: Vec<BugSummary<'a>>,
    coverage_timeline: &'a [(u64, usize)],
    stats: &'a CampaignStats,
}

impl CampaignReport {
    pub fn popcount(&self) -> usize {
        self.total_coverage.popcount()
    }

    /// Planted bugs with at least one attributed report.
    pub fn planted_bugs_found(&self) -> Vec<BugId> {
        self.bug_reports.planted_bugs().into_iter().collect()
    }

    /// `report.json` contents. Contains no timing data, so equal campaigns
    /// give byte-identical output.
    pub fn to_json(&self) -> String {
        let r = ReportJson {
            iterations: self.iterations,
            total_coverage: self.popcount(),
            coverage_sites: self.total_coverage.len(),
            coverage_bits: self.total_coverage.to_hex(),
            valuable_tests: self.valuable_tests,
            distinct_bugs: self.bug_reports.len(),
            planted_bugs_found: self
                .planted_bugs_found()
                .into_iter()
                .map(BugId::name)
                .collect(),
            bug_reports: self
                .bug_reports
                .iter()
                .map(|b| BugSummary {
                    dedup_key: &b.dedup_key,
                    kind: b.kind.name(),
                    planted_bug: b.planted_bug.map(BugId::name),
                    first_iteration: b.first_iteration,
                    hits: b.hits,
                    extra_repros: b.extra_repros,
                    detail: &b.detail,
                })
                .collect(),
            coverage_timeline: &self.coverage_timeline,
            stats: &self.stats,
        };
        let mut s = serde_json::to_string_pretty(&r).expect("report serializes");
        s.push('\n');
        s
    }

    /// `coverage.csv` contents: `iteration,covered_sites` rows.
    pub fn coverage_csv(&self) -> String {
        let mut s = String::from("iteration,covered_sites\n");
        for (it, pc) in &self.coverage_timeline {
            writeln!(s, "{it},{pc}").unwrap();
        }
        s
    }

    /// Writes `report.json`, `coverage.csv`, the final pool as
    /// `seeds/NNNNN.tir` with `seeds/NNNNN.passes.txt`, and one
    /// `bugs/<dedup_key>/` directory per report (plus `bugs.catalog`, the
    /// enabled bugs, for replay).
    pub fn write_to(&self, out: &Path) -> io::Result<()> {
        fs::create_dir_all(out)?;
        fs::write(out.join("report.json"), self.to_json())?;
        fs::write(out.join("coverage.csv"), self.coverage_csv())?;
        let seeds = out.join("seeds");
        fs::create_dir_all(&seeds)?;
        for (i, e) in self.pool.iter().enumerate() {
            fs::write(seeds.join(format!("{i:05}.tir")), serialize(&e.func))?;
            fs::write(seeds.join(format!("{i:05}.passes.txt")), e.seq.to_text())?;
        }
        let bugs = out.join("bugs");
        fs::create_dir_all(&bugs)?;
        self.bug_reports.write_dirs(&bugs)?;
        let catalog = self.bugs.to_catalog();
        for r in self.bug_reports.iter() {
            fs::write(bugs.join(&r.dedup_key).join(CATALOG_FILE), &catalog)?;
        }
        Ok(())
    }

    /// Folds in an independent campaign. Counters add up; the timeline
    /// becomes the per-iteration maximum of both, ending at the merged
    /// coverage.
    pub fn merge(&mut self, other: CampaignReport) {
        let last = self.iterations.max(other.iterations);
        let mut points: Vec<u64> = self
            .coverage_timeline
            .iter()
            .chain(&other.coverage_timeline)
            .map(|p| p.0)
            .collect();
        points.sort_unstable();
        points.dedup();
        let at = |t: &[(u64, usize)], it: u64| {
            t.iter().take_while(|p| p.0 <= it).last().map_or(0, |p| p.1)
        };
        let mut timeline: Vec<(u64, usize)> = points
            .into_iter()
            .map(|it| {
                (
                    it,
                    at(&self.coverage_timeline, it).max(at(&other.coverage_timeline, it)),
                )
            })
            .collect();
        self.total_coverage
            .merge_from(&other.total_coverage)
            .expect("campaigns share the site registry");
        timeline.retain(|p| p.0 < last);
        timeline.push((last, self.total_coverage.popcount()));
        self.coverage_timeline = timeline;
        self.valuable_tests += other.valuable_tests;
        self.iterations += other.iterations;
        self.bug_reports.merge(&other.bug_reports);
        self.stats.merge(&other.stats);
        self.pool.extend(other.pool);
        self.bugs.enabled.extend(other.bugs.enabled);
    }
}
