use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{OracleVerdict, VerdictKind};
use crate::ir::{parse, serialize, PrimFunc};
use crate::passes::{BugId, PassSequence};

/// Everything needed to re-run one differential check.
#[derive(Clone, Debug, PartialEq)]
pub struct Witness {
    pub func: PrimFunc,
    pub seq: PassSequence,
    pub input_seed: u64,
}

/// One deduplicated failure with its first witness.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugReport {
    pub dedup_key: String,
    pub kind: VerdictKind,
    pub detail: String,
    /// Planted bug the failure is attributed to, if any.
    pub planted_bug: Option<BugId>,
    /// First witness in `.tir` text form.
    pub witness: String,
    pub passes: PassSequence,
    pub input_seed: u64,
    pub first_iteration: u64,
    /// Number of failing tests mapped to this key.
    pub hits: u64,
    /// How many of the extra re-check inputs reproduced the key.
    pub extra_repros: u64,
}

impl BugReport {
    /// Writes `witness.tir`, `passes.txt`, `verdict.txt` and
    /// `input_seed.txt` into `dir/<dedup_key>/`.
    pub fn write_dir(&self, dir: &Path) -> io::Result<()> {
        let d = dir.join(&self.dedup_key);
        fs::create_dir_all(&d)?;
        fs::write(d.join("witness.tir"), &self.witness)?;
        let passes = format!(
            "{}# reference opt_level={}\n",
            self.passes.to_text(),
            super::REFERENCE_LEVEL
        );
        fs::write(d.join("passes.txt"), passes)?;
        fs::write(
            d.join("verdict.txt"),
            format!(
                "kind={}\ndedup_key={}\ndetail={}\n",
                self.kind.name(),
                self.dedup_key,
                self.detail
            ),
        )?;
        fs::write(d.join("input_seed.txt"), format!("{}\n", self.input_seed))
    }
}

#[derive(Debug, Error)]
pub enum WitnessError {
    #[error("{0}: {1}")]
    Io(String, io::Error),
    #[error("witness.tir: {0}")]
    Parse(String),
    #[error("{0}")]
    Format(String),
}

fn read(dir: &Path, name: &str) -> Result<String, WitnessError> {
    fs::read_to_string(dir.join(name)).map_err(|e| WitnessError::Io(name.into(), e))
}

/// Loads a bug-report directory: the witness and the recorded verdict
/// (kind and dedup key), when `verdict.txt` is present.
pub fn read_witness(dir: &Path) -> Result<(Witness, Option<(VerdictKind, String)>), WitnessError> {
    let func = parse(&read(dir, "witness.tir")?).map_err(|e| WitnessError::Parse(e.to_string()))?;
    let v = crate::ir::validate(&func);
    if !v.is_ok() {
        return Err(WitnessError::Parse(v.messages().join("; ")));
    }
    let seq = PassSequence::from_text(&read(dir, "passes.txt")?)
        .map_err(|e| WitnessError::Format(format!("passes.txt: {e}")))?;
    let seed_text = read(dir, "input_seed.txt")?;
    let input_seed = seed_text.trim().parse().map_err(|_| {
        WitnessError::Format(format!("input_seed.txt: bad seed '{}'", seed_text.trim()))
    })?;
    let recorded = match fs::read_to_string(dir.join("verdict.txt")) {
        Ok(text) => {
            let field = |k: &str| {
                text.lines()
                    .find_map(|l| l.strip_prefix(k).and_then(|r| r.strip_prefix('=')))
                    .map(str::to_string)
            };
            let kind = field("kind")
                .and_then(|k| VerdictKind::from_name(&k))
                .ok_or_else(|| WitnessError::Format("verdict.txt: missing kind".into()))?;
            Some((kind, field("dedup_key").unwrap_or_default()))
        }
        Err(_) => None,
    };
    Ok((
        Witness {
            func,
            seq,
            input_seed,
        },
        recorded,
    ))
}

/// Failures grouped by dedup key.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugReports {
    pub reports: BTreeMap<String, BugReport>,
}

impl BugReports {
    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &BugReport> {
        self.reports.values()
    }

    pub fn planted_bugs(&self) -> BTreeSet<BugId> {
        self.iter().filter_map(|r| r.planted_bug).collect()
    }

    pub fn write_dirs(&self, dir: &Path) -> io::Result<()> {
        for r in self.iter() {
            r.write_dir(dir)?;
        }
        Ok(())
    }

    /// Merges reports of another campaign; the earlier witness wins.
    pub fn merge(&mut self, other: &BugReports) {
        for (k, r) in &other.reports {
            match self.reports.get_mut(k) {
                Some(mine) => mine.hits += r.hits,
                None => {
                    self.reports.insert(k.clone(), r.clone());
                }
            }
        }
    }
}

/// Files `verdict` under its dedup key. The first witness of a key is kept;
/// later ones only increase the hit count. Returns the report and whether the
/// key is new. Passing verdicts are not filed.
pub fn classify_and_dedup<'r>(
    reports: &'r mut BugReports,
    verdict: &OracleVerdict,
    witness: &Witness,
    iteration: u64,
) -> Option<(&'r mut BugReport, bool)> {
    if verdict.is_pass() {
        return None;
    }
    let mut new = false;
    let r = reports
        .reports
        .entry(verdict.dedup_key.clone())
        .or_insert_with(|| {
            new = true;
            BugReport {
                dedup_key: verdict.dedup_key.clone(),
                kind: verdict.kind,
                detail: verdict.detail.clone(),
                planted_bug: verdict.planted_bug(),
                witness: serialize(&witness.func),
                passes: witness.seq.clone(),
                input_seed: witness.input_seed,
                first_iteration: iteration,
                hits: 0,
                extra_repros: 0,
            }
        });
    r.hits += 1;
    Some((r, new))
}
