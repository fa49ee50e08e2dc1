//! Planted faults. Each bug lives on one branch of its host pass and is
//! gated on an IR pattern that the pass sees in its input.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::PassId;
use crate::coverage::CoverageHandle;
use crate::ir::{parse, PrimFunc};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BugId {
    #[serde(rename = "AE-1")]
    Ae1,
    #[serde(rename = "OOB-1")]
    Oob1,
    #[serde(rename = "MC-1")]
    Mc1,
    #[serde(rename = "MC-2")]
    Mc2,
    #[serde(rename = "MC-3")]
    Mc3,
    #[serde(rename = "SD-1")]
    Sd1,
    #[serde(rename = "LP-1")]
    Lp1,
    #[serde(rename = "LI-1")]
    Li1,
    #[serde(rename = "VL-1")]
    Vl1,
    #[serde(rename = "UR-2")]
    Ur2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BugEffect {
    Miscompile,
    Slowdown,
    Trap,
}

impl BugId {
    pub const ALL: [BugId; 10] = [
        BugId::Ae1,
        BugId::Oob1,
        BugId::Mc1,
        BugId::Mc2,
        BugId::Mc3,
        BugId::Sd1,
        BugId::Lp1,
        BugId::Li1,
        BugId::Vl1,
        BugId::Ur2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BugId::Ae1 => "AE-1",
            BugId::Oob1 => "OOB-1",
            BugId::Mc1 => "MC-1",
            BugId::Mc2 => "MC-2",
            BugId::Mc3 => "MC-3",
            BugId::Sd1 => "SD-1",
            BugId::Lp1 => "LP-1",
            BugId::Li1 => "LI-1",
            BugId::Vl1 => "VL-1",
            BugId::Ur2 => "UR-2",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        BugId::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s))
    }

    pub fn host_pass(self) -> PassId {
        match self {
            BugId::Ae1 => PassId::Simplify,
            BugId::Oob1 => PassId::InjectVirtualThread,
            BugId::Mc1 => PassId::ConstantFold,
            BugId::Mc2 | BugId::Lp1 => PassId::LoopPartition,
            BugId::Mc3 => PassId::DeadStoreElim,
            BugId::Sd1 | BugId::Ur2 => PassId::UnrollLoop,
            BugId::Li1 => PassId::LetInline,
            BugId::Vl1 => PassId::VectorizeLower,
        }
    }

    pub fn effect(self) -> BugEffect {
        match self {
            BugId::Mc1 | BugId::Mc2 | BugId::Mc3 => BugEffect::Miscompile,
            BugId::Sd1 => BugEffect::Slowdown,
            _ => BugEffect::Trap,
        }
    }

    /// Probe label of the branch the bug lives on.
    pub fn site_label(self) -> &'static str {
        match self {
            BugId::Ae1 => "simplify.ramp_div.zero_divisor",
            BugId::Oob1 => "inject_virtual_thread.alloc.read_before_write",
            BugId::Mc1 => "constant_fold.floormod.mixed_sign",
            BugId::Mc2 => "loop_partition.gt.split_inside",
            BugId::Mc3 => "dead_store_elim.pair.partial_index_match",
            BugId::Sd1 => "unroll_loop.over_cap.with_attr",
            BugId::Lp1 => "loop_partition.split.out_of_range",
            BugId::Li1 => "let_inline.unused.call_value",
            BugId::Vl1 => "vectorize_lower.reject.conditional_body",
            BugId::Ur2 => "unroll_loop.body.has_vectorize",
        }
    }

    pub fn from_site_label(label: &str) -> Option<Self> {
        BugId::ALL.into_iter().find(|b| b.site_label() == label)
    }

    pub fn description(self) -> &'static str {
        match self {
            BugId::Ae1 => "floordiv/floormod of a ramp by a zero broadcast aborts simplification",
            BugId::Oob1 => "reading a thread-local allocation before any store aborts injection",
            BugId::Mc1 => "mixed-sign floormod of immediates is folded with truncating remainder",
            BugId::Mc2 => "partitioning on i > c splits at c instead of c + 1",
            BugId::Mc3 => "a store is dropped when the next store shares only its leading index",
            BugId::Sd1 => "a loop over its unroll cap receives a redundant inner loop",
            BugId::Lp1 => "a partition point outside the loop range aborts partitioning",
            BugId::Li1 => "an unused binding of a call aborts inlining",
            BugId::Vl1 => "a conditional in a vectorized loop body aborts lowering",
            BugId::Ur2 => "unrolling a loop that contains a vectorized loop aborts",
        }
    }

    /// A small function whose compilation with the host pass at opt level 4
    /// reaches the faulty branch, and no other planted branch.
    pub fn example(self) -> PrimFunc {
        let body = match self {
            BugId::Ae1 => "(store A.0 (floormod (ramp (imm int32 0) (imm int32 1) 4) (broadcast (imm int32 0) 4)) \
                           (ramp (imm int32 0) (imm int32 1) 4))",
            BugId::Oob1 => "(attr virtual_thread (var vt.1 int32) (imm int32 2) \
                            (allocate (buffer T.2 int32 (shape 4)) (store A.0 (load T.2 vt.1) vt.1)))",
            BugId::Mc1 => "(store A.0 (floormod (imm int32 -7) (imm int32 3)) (imm int32 0))",
            BugId::Mc2 => "(for (var i.1 int32) serial (imm int32 0) (imm int32 8) \
                           (if (gt i.1 (imm int32 3)) (store A.0 (imm int32 1) i.1) (store A.0 (imm int32 2) i.1)))",
            BugId::Mc3 => {
                return parse(
                    "(primfunc (params (var A.0 int32)) (buffers (buffer A.0 int32 (shape 2 2))) (body \
                     (seq (store A.0 (imm int32 100) (imm int32 0) (imm int32 0)) \
                     (store A.0 (imm int32 101) (imm int32 0) (imm int32 1)))))",
                )
                .expect("well-formed example")
            }
            BugId::Sd1 => "(for (var i.1 int32) unroll (imm int32 0) (imm int32 32) (attrs (unroll_max_steps 8)) \
                           (store A.0 i.1 (imm int32 0)))",
            BugId::Lp1 => "(for (var i.1 int32) serial (imm int32 0) (imm int32 8) \
                           (if (lt i.1 (imm int32 20)) (store A.0 (imm int32 1) i.1)))",
            BugId::Li1 => "(letstmt (var x.1 float32) (call float32 sqrt (cast float32 (load A.0 (imm int32 0)))) \
                           (store A.0 (imm int32 1) (imm int32 0)))",
            BugId::Vl1 => "(for (var i.1 int32) vectorize (imm int32 0) (imm int32 4) \
                           (if (lt i.1 (imm int32 2)) (store A.0 i.1 i.1)))",
            BugId::Ur2 => "(for (var i.1 int32) unroll (imm int32 0) (imm int32 2) \
                           (for (var j.2 int32) vectorize (imm int32 0) (imm int32 4) (store A.0 i.1 j.2)))",
        };
        parse(&format!(
            "(primfunc (params (var A.0 int32)) (buffers (buffer A.0 int32 (shape 8))) (body {body}))"
        ))
        .expect("well-formed example")
    }

    /// Whether the host pass, running at opt level 4 on `func` with only
    /// this bug enabled, reaches the faulty branch.
    pub fn trigger(self, func: &PrimFunc) -> bool {
        let mut cov = CoverageHandle::new();
        let _ = super::apply_pass(self.host_pass(), func, 4, &BugPlan::only(self), &mut cov);
        cov.fault_label() == Some(self.site_label())
    }
}

impl fmt::Display for BugId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogError {
    #[error("line {line}: unknown bug id '{id}'")]
    UnknownBug { line: usize, id: String },
}

/// The set of enabled planted bugs.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugPlan {
    pub enabled: BTreeSet<BugId>,
}

impl BugPlan {
    pub fn none() -> Self {
        Self::default()
    }

    /// The full 10-bug catalog.
    pub fn default_catalog() -> Self {
        BugPlan {
            enabled: BugId::ALL.into_iter().collect(),
        }
    }

    pub fn only(bug: BugId) -> Self {
        BugPlan {
            enabled: [bug].into_iter().collect(),
        }
    }

    pub fn is_enabled(&self, bug: BugId) -> bool {
        self.enabled.contains(&bug)
    }

    pub fn is_empty(&self) -> bool {
        self.enabled.is_empty()
    }

    /// Catalog file: one bug id per line; `#` starts a comment.
    pub fn parse_catalog(text: &str) -> Result<Self, CatalogError> {
        let mut enabled = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let bug = BugId::from_name(line).ok_or_else(|| CatalogError::UnknownBug {
                line: i + 1,
                id: line.to_string(),
            })?;
            enabled.insert(bug);
        }
        Ok(BugPlan { enabled })
    }

    pub fn to_catalog(&self) -> String {
        self.enabled.iter().map(|b| format!("{b}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_shape() {
        let effects: Vec<_> = BugId::ALL.iter().map(|b| b.effect()).collect();
        let count = |e| effects.iter().filter(|&&x| x == e).count();
        assert!(count(BugEffect::Miscompile) >= 2);
        assert!(count(BugEffect::Slowdown) >= 1);
        assert_eq!(count(BugEffect::Trap), 6);
        let labels: BTreeSet<_> = BugId::ALL.iter().map(|b| b.site_label()).collect();
        assert_eq!(labels.len(), 10);
    }

    #[test]
    fn catalog_file_round_trip() {
        let plan = BugPlan::parse_catalog("# planted\nAE-1\nmc-3  # lower case ok\n\n").unwrap();
        assert_eq!(plan.to_catalog(), "AE-1\nMC-3\n");
        assert_eq!(
            BugPlan::parse_catalog("XX-9"),
            Err(CatalogError::UnknownBug {
                line: 1,
                id: "XX-9".into()
            })
        );
    }
}
