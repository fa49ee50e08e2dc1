use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use tirfuzz_core::ir::{collect_nodes, parse, serialize, validate};
use tirfuzz_core::passes::BugId;

const TIME_LIMIT: Duration = Duration::from_secs(10);

fn tirfuzz(args: &[&str]) -> Output {
    run(Command::new(env!("CARGO_BIN_EXE_tirfuzz"))
        .args(args)
        .env_remove("TZER_MINI_OUT"))
}

fn run(cmd: &mut Command) -> Output {
    let start = Instant::now();
    let out = cmd.output().expect("binary runs");
    assert!(start.elapsed() <= TIME_LIMIT, "took {:?}", start.elapsed());
    out
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn report(out: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

/// A seed directory holding the trigger program of every planted bug.
fn trigger_seeds(dir: &Path) -> PathBuf {
    let seeds = dir.join("trigger-seeds");
    fs::create_dir_all(&seeds).unwrap();
    for bug in BugId::ALL {
        fs::write(
            seeds.join(format!("{}.tir", bug.name())),
            serialize(&bug.example()),
        )
        .unwrap();
    }
    seeds
}

fn bug_dirs(out: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(out.join("bugs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    v.sort();
    v
}

#[test]
fn fuzz_from_empty_seed_without_bugs_is_clean() {
    let t = tempfile::tempdir().unwrap();
    let o = tirfuzz(&[
        "fuzz",
        "--seeds",
        "empty",
        "--iters",
        "1000",
        "--bugs",
        "none",
        "--out",
        s(t.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = report(t.path());
    assert_eq!(r["iterations"], 1000);
    assert_eq!(r["distinct_bugs"], 0);
    assert!(bug_dirs(t.path()).is_empty());
    let csv = fs::read_to_string(t.path().join("coverage.csv")).unwrap();
    assert!(csv.starts_with("iteration,covered_sites\n0,"));
    assert!(csv.lines().last().unwrap().starts_with("1000,"));
    assert!(t.path().join("seeds/00000.tir").is_file());
}

#[test]
fn zero_nmax_is_a_usage_error() {
    let t = tempfile::tempdir().unwrap();
    let o = tirfuzz(&["fuzz", "--nmax", "0", "--iters", "10", "--out", s(t.path())]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("nmax must be ≥ 1"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_1() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("o");
    let o = tirfuzz(&[
        "fuzz",
        "--ablation",
        "bogus",
        "--iters",
        "1",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("ablation"));
    let cat = t.path().join("bad.catalog");
    fs::write(&cat, "AE-1\nXX-9\n").unwrap();
    let o = tirfuzz(&["fuzz", "--bugs", s(&cat), "--iters", "1", "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("XX-9"));
    let o = tirfuzz(&[
        "fuzz",
        "--seeds",
        s(&t.path().join("missing")),
        "--iters",
        "1",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 1);
    let o = tirfuzz(&["fuzz", "--iters", "1", "--seconds", "1", "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    let o = tirfuzz(&["frobnicate"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn out_defaults_to_the_environment() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("from-env");
    let o = run(Command::new(env!("CARGO_BIN_EXE_tirfuzz"))
        .args(["fuzz", "--iters", "20", "--bugs", "none"])
        .env("TZER_MINI_OUT", &out)
        .current_dir(t.path()));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(out.join("report.json").is_file());
}

#[test]
fn time_budget_and_jobs() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("timed");
    let o = tirfuzz(&[
        "fuzz",
        "--seconds",
        "0.5",
        "--bugs",
        "none",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(report(&out)["iterations"].as_u64().unwrap() > 0);

    let out = t.path().join("jobs");
    let o = tirfuzz(&[
        "fuzz",
        "--iters",
        "50",
        "--jobs",
        "2",
        "--bugs",
        "none",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(report(&out)["iterations"], 100);
}

#[test]
fn every_ablation_runs() {
    let t = tempfile::tempdir().unwrap();
    for a in [
        "full",
        "ir-only",
        "no-feedback",
        "no-domain",
        "random-joint",
    ] {
        let out = t.path().join(a);
        let o = tirfuzz(&[
            "fuzz",
            "--iters",
            "100",
            "--bugs",
            "none",
            "--ablation",
            a,
            "--out",
            s(&out),
        ]);
        assert_eq!(code(&o), 0, "{a}: {}", stderr(&o));
        assert_eq!(report(&out)["iterations"], 100);
    }
}

/// Files bug reports, then replays them with and without planted bugs and
/// after corrupting a witness.
#[test]
fn filed_bugs_replay() {
    let t = tempfile::tempdir().unwrap();
    let seeds = trigger_seeds(t.path());
    let out = t.path().join("out");
    let o = tirfuzz(&[
        "fuzz",
        "--seeds",
        s(&seeds),
        "--iters",
        "300",
        "--rng-seed",
        "3",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let dirs = bug_dirs(&out);
    assert!(!dirs.is_empty());
    assert_eq!(report(&out)["distinct_bugs"], dirs.len());
    for d in &dirs {
        for f in ["witness.tir", "passes.txt", "verdict.txt", "input_seed.txt"] {
            assert!(d.join(f).is_file(), "{}/{f}", d.display());
        }
        let o = tirfuzz(&["replay", s(d)]);
        assert_eq!(code(&o), 0, "{}: {}", d.display(), stdout(&o));
        assert!(stdout(&o).contains("reproduced"));
    }

    let planted = dirs
        .iter()
        .find(|d| {
            let key = d.file_name().unwrap().to_str().unwrap();
            BugId::ALL.iter().any(|b| key.ends_with(b.site_label()))
        })
        .expect("a planted bug was filed");
    let o = tirfuzz(&["replay", s(planted), "--bugs", "none"]);
    assert_eq!(code(&o), 3, "{}", stdout(&o));
    assert!(stdout(&o).contains("verdict=pass"));
    assert!(stdout(&o).contains("did not reproduce"));

    let broken = t.path().join("broken");
    fs::create_dir_all(&broken).unwrap();
    for f in ["passes.txt", "verdict.txt", "input_seed.txt"] {
        fs::copy(planted.join(f), broken.join(f)).unwrap();
    }
    let mut w = fs::read_to_string(planted.join("witness.tir")).unwrap();
    w.truncate(w.len() / 2);
    fs::write(broken.join("witness.tir"), w).unwrap();
    let o = tirfuzz(&["replay", s(&broken)]);
    assert_eq!(code(&o), 1);

    let o = tirfuzz(&["replay", s(&t.path().join("nothing"))]);
    assert_eq!(code(&o), 1);
}

#[test]
fn identical_flags_give_identical_output() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    for out in [&a, &b] {
        let o = tirfuzz(&["fuzz", "--iters", "400", "--rng-seed", "7", "--out", s(out)]);
        assert!(matches!(code(&o), 0 | 2), "{}", stderr(&o));
    }
    for f in ["report.json", "coverage.csv"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn gen_seeds_writes_valid_files() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("gen");
    let o = tirfuzz(&["gen-seeds", "5", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let files: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(files.len(), 5);
    for f in files {
        let func = parse(&fs::read_to_string(&f).unwrap()).unwrap();
        assert!(validate(&func).is_ok(), "{}", f.display());
    }
    // Generated seeds are usable as a campaign's seed directory.
    let o = tirfuzz(&[
        "fuzz",
        "--seeds",
        s(&out),
        "--iters",
        "50",
        "--bugs",
        "none",
        "--out",
        s(&t.path().join("o")),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn corpus_stats_on_an_empty_and_a_missing_dir() {
    let t = tempfile::tempdir().unwrap();
    let o = tirfuzz(&["corpus-stats", s(t.path())]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("count=0"));
    let o = tirfuzz(&["corpus-stats", s(&t.path().join("missing"))]);
    assert_eq!(code(&o), 1);
}

fn stat(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .to_string()
}

#[test]
fn corpus_stats_matches_a_recount() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("out");
    let o = tirfuzz(&["fuzz", "--iters", "200", "--bugs", "none", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = tirfuzz(&["corpus-stats", s(&out)]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);

    let mut sizes = Vec::new();
    let mut lengths = std::collections::BTreeMap::<usize, usize>::new();
    for e in fs::read_dir(out.join("seeds")).unwrap() {
        let p = e.unwrap().path();
        let name = p.file_name().unwrap().to_str().unwrap().to_string();
        if name.ends_with(".passes.txt") {
            let n = fs::read_to_string(&p)
                .unwrap()
                .lines()
                .filter(|l| !l.starts_with("opt_level=") && !l.trim().is_empty())
                .count();
            *lengths.entry(n).or_default() += 1;
        } else if name.ends_with(".tir") {
            sizes.push(collect_nodes(&parse(&fs::read_to_string(&p).unwrap()).unwrap()).len());
        }
    }
    assert_eq!(stat(&text, "count"), sizes.len().to_string());
    let mean = sizes.iter().sum::<usize>() as f64 / sizes.len() as f64;
    let reported: f64 = stat(&text, "mean_node_size").parse().unwrap();
    assert!((reported - mean).abs() < 1e-3, "{reported} vs {mean}");
    for (len, n) in lengths {
        assert!(
            text.contains(&format!("  {len}: {n}\n")),
            "{len}: {n} missing from\n{text}"
        );
    }
}
