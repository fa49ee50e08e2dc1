use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tirfuzz_core::coverage::CoverageHandle;
use tirfuzz_core::fuzz::{self, Ablation, Budget, CampaignConfig, SeedSource, CATALOG_FILE};
use tirfuzz_core::ir::visit::node_count;
use tirfuzz_core::ir::{parse, serialize, validate};
use tirfuzz_core::oracle::{differential_check, read_witness};
use tirfuzz_core::passes::{BugPlan, PassSequence};

const EXIT_USAGE: u8 = 1;
const EXIT_BUGS: u8 = 2;
const EXIT_NO_REPRO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "tirfuzz",
    version,
    about = "Coverage-guided fuzzer for a miniature tensor compiler"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a fuzzing campaign.
    Fuzz(FuzzArgs),
    /// Re-run a filed bug report and check that its verdict reproduces.
    Replay {
        dir: PathBuf,
        /// Catalog file, `none` or `default`; defaults to the catalog
        /// recorded with the report.
        #[arg(long)]
        bugs: Option<String>,
    },
    /// Summarize a corpus directory.
    CorpusStats { dir: PathBuf },
    /// Write `n` generated seed programs.
    GenSeeds {
        n: usize,
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        rng_seed: u64,
    },
}

#[derive(clap::Args)]
struct FuzzArgs {
    /// Seed directory, or `empty` for a single empty function. Defaults to
    /// the built-in seeds.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long, conflicts_with = "seconds")]
    iters: Option<u64>,
    #[arg(long)]
    seconds: Option<f64>,
    #[arg(long, default_value_t = fuzz::DEFAULT_N_MAX)]
    nmax: u32,
    #[arg(long, default_value_t = 0)]
    rng_seed: u64,
    /// Catalog file, `none` or `default`.
    #[arg(long, default_value = "default")]
    bugs: String,
    #[arg(long, env = "TZER_MINI_OUT", default_value = "tirfuzz-out")]
    out: PathBuf,
    #[arg(long, default_value = "full")]
    ablation: String,
    /// Independent campaigns with consecutive rng seeds, merged at the end.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_USAGE)
}

fn load_bugs(spec: &str) -> Result<BugPlan, String> {
    match spec {
        "none" => Ok(BugPlan::none()),
        "default" => Ok(BugPlan::default_catalog()),
        path => {
            let text = fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?;
            BugPlan::parse_catalog(&text).map_err(|e| format!("{path}: {e}"))
        }
    }
}

fn cmd_fuzz(a: FuzzArgs) -> ExitCode {
    let budget = match (a.iters, a.seconds) {
        (Some(n), _) => Budget::Iterations(n),
        (None, Some(s)) => Budget::Seconds(s),
        (None, None) => Budget::Iterations(1000),
    };
    let bugs = match load_bugs(&a.bugs) {
        Ok(b) => b,
        Err(e) => return fail(e),
    };
    let Some(ablation) = Ablation::from_name(&a.ablation) else {
        return fail(format!("unknown ablation '{}'", a.ablation));
    };
    let seed_source = match a.seeds.as_deref() {
        None => SeedSource::Default,
        Some("empty") => SeedSource::Empty,
        Some(dir) => SeedSource::Dir(dir.into()),
    };
    let cfg = CampaignConfig {
        budget,
        n_max: a.nmax,
        rng_seed: a.rng_seed,
        bugs,
        seed_source,
        ablation,
        ..CampaignConfig::default()
    };
    let result = if a.jobs > 1 {
        fuzz::fuzz_parallel(cfg, a.jobs)
    } else {
        fuzz::fuzz(cfg)
    };
    let report = match result {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    if let Err(e) = report.write_to(&a.out) {
        return fail(format!("{}: {e}", a.out.display()));
    }
    println!(
        "iterations={} coverage={} valuable_tests={} pool={} bug_reports={}",
        report.iterations,
        report.popcount(),
        report.valuable_tests,
        report.pool.len(),
        report.bug_reports.len()
    );
    for r in report.bug_reports.iter() {
        let planted = r.planted_bug.map_or("-", |b| b.name());
        println!(
            "  {} [{planted}] first at iteration {}",
            r.dedup_key, r.first_iteration
        );
    }
    if report.bug_reports.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_BUGS)
    }
}

fn cmd_replay(dir: &Path, bugs: Option<String>) -> ExitCode {
    let (witness, recorded) = match read_witness(dir) {
        Ok(w) => w,
        Err(e) => return fail(e),
    };
    let plan = match bugs {
        Some(spec) => load_bugs(&spec),
        None => match fs::read_to_string(dir.join(CATALOG_FILE)) {
            Ok(text) => BugPlan::parse_catalog(&text).map_err(|e| format!("{CATALOG_FILE}: {e}")),
            Err(_) => Ok(BugPlan::default_catalog()),
        },
    };
    let plan = match plan {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    let v = differential_check(
        &witness.func,
        &witness.seq,
        &plan,
        &mut CoverageHandle::new(),
        witness.input_seed,
    );
    println!("verdict={} dedup_key={}", v.kind.name(), v.dedup_key);
    let reproduced = match &recorded {
        Some((kind, key)) => v.kind == *kind && (key.is_empty() || v.dedup_key == *key),
        None => !v.is_pass(),
    };
    if reproduced {
        println!("reproduced");
        ExitCode::SUCCESS
    } else {
        if let Some((kind, key)) = recorded {
            println!("recorded verdict={} dedup_key={key}", kind.name());
        }
        println!("did not reproduce");
        ExitCode::from(EXIT_NO_REPRO)
    }
}

fn cmd_corpus_stats(dir: &Path) -> ExitCode {
    let seeds = dir.join("seeds");
    let dir = if seeds.is_dir() {
        seeds
    } else {
        dir.to_path_buf()
    };
    let entries = match fs::read_dir(&dir) {
        Ok(e) => e,
        Err(e) => return fail(format!("{}: {e}", dir.display())),
    };
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "tir"))
        .collect();
    paths.sort();
    let mut total_nodes = 0usize;
    let mut count = 0usize;
    let mut skipped = 0usize;
    let mut lengths: BTreeMap<usize, usize> = BTreeMap::new();
    for p in &paths {
        let Ok(f) = fs::read_to_string(p)
            .map_err(|e| e.to_string())
            .and_then(|t| parse(&t).map_err(|e| e.to_string()))
        else {
            skipped += 1;
            continue;
        };
        count += 1;
        total_nodes += node_count(&f);
        let passes = p.with_extension("passes.txt");
        if let Some(seq) = fs::read_to_string(passes)
            .ok()
            .and_then(|t| PassSequence::from_text(&t).ok())
        {
            *lengths.entry(seq.passes.len()).or_default() += 1;
        }
    }
    let mean = if count == 0 {
        0.0
    } else {
        total_nodes as f64 / count as f64
    };
    println!("count={count}");
    println!("mean_node_size={mean:.3}");
    if skipped > 0 {
        println!("unparseable={skipped}");
    }
    println!("pass_length_histogram:");
    for (len, n) in &lengths {
        println!("  {len}: {n}");
    }
    ExitCode::SUCCESS
}

fn cmd_gen_seeds(n: usize, out: &Path, rng_seed: u64) -> ExitCode {
    if let Err(e) = fs::create_dir_all(out) {
        return fail(format!("{}: {e}", out.display()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for i in 0..n {
        let f = fuzz::generate_seed(&mut rng, 120);
        debug_assert!(validate(&f).is_ok());
        let path = out.join(format!("gen_{i:04}.tir"));
        if let Err(e) = fs::write(&path, serialize(&f)) {
            return fail(format!("{}: {e}", path.display()));
        }
    }
    println!("wrote {n} seeds to {}", out.display());
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match cli.cmd {
        Cmd::Fuzz(a) => cmd_fuzz(a),
        Cmd::Replay { dir, bugs } => cmd_replay(&dir, bugs),
        Cmd::CorpusStats { dir } => cmd_corpus_stats(&dir),
        Cmd::GenSeeds {
            n,
            out_dir,
            rng_seed,
        } => cmd_gen_seeds(n, &out_dir, rng_seed),
    }
}
