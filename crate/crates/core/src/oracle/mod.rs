//! Differential oracles: result inconsistency, performance degradation and
//! crashes, plus deduplication and on-disk bug reports.

mod report;

use serde::{Deserialize, Serialize};

pub use report::{classify_and_dedup, read_witness, BugReport, BugReports, Witness, WitnessError};

use crate::coverage::CoverageHandle;
use crate::interp::{
    execute_with_coverage, gen_inputs, ExecOutcome, ExecStatus, Limits, Scalar, TensorValue,
};
use crate::ir::PrimFunc;
use crate::passes::{run_pipeline, BugId, BugPlan, PassPanic, PassSequence};

/// Optimization level of the reference compilation.
pub const REFERENCE_LEVEL: u8 = 0;
/// Optimization level of the compilation under test.
pub const OPTIMIZED_LEVEL: u8 = 4;
/// Extra inputs tried when a failure is first seen.
pub const RECHECK_INPUTS: u64 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Pass,
    Inconsistency,
    PerfDegradation,
    Crash,
    UnexpectedException,
}

impl VerdictKind {
    pub fn name(self) -> &'static str {
        match self {
            VerdictKind::Pass => "pass",
            VerdictKind::Inconsistency => "inconsistency",
            VerdictKind::PerfDegradation => "perf_degradation",
            VerdictKind::Crash => "crash",
            VerdictKind::UnexpectedException => "unexpected_exception",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [
            VerdictKind::Pass,
            VerdictKind::Inconsistency,
            VerdictKind::PerfDegradation,
            VerdictKind::Crash,
            VerdictKind::UnexpectedException,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleVerdict {
    pub kind: VerdictKind,
    pub detail: String,
    /// Empty for `pass`.
    pub dedup_key: String,
}

impl OracleVerdict {
    fn pass() -> Self {
        OracleVerdict {
            kind: VerdictKind::Pass,
            detail: String::new(),
            dedup_key: String::new(),
        }
    }

    fn failure(kind: VerdictKind, origin: &str, label: &str, detail: String) -> Self {
        OracleVerdict {
            kind,
            dedup_key: format!("{}--{origin}--{label}", kind.name()),
            detail,
        }
    }

    pub fn is_pass(&self) -> bool {
        self.kind == VerdictKind::Pass
    }

    /// Probe label component of the dedup key.
    pub fn label(&self) -> &str {
        self.dedup_key.rsplit("--").next().unwrap_or("")
    }

    /// The planted bug whose faulty branch the failure is attributed to.
    pub fn planted_bug(&self) -> Option<BugId> {
        BugId::from_site_label(self.label())
    }
}

/// Tolerances and resource limits of the differential check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub atol: f64,
    pub rtol: f64,
    pub perf_margin: f64,
    /// Reference runs shorter than this are never judged slow.
    pub perf_floor: u64,
    pub limits: Limits,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            atol: 1e-6,
            rtol: 1e-4,
            perf_margin: 1.5,
            perf_floor: 100,
            limits: Limits::default(),
        }
    }
}

/// Label for failures no planted branch accounts for.
const UNATTRIBUTED: &str = "unattributed";

fn floats_differ(a: f32, b: f32, cfg: &OracleConfig) -> bool {
    if a.is_nan() || b.is_nan() {
        return a.is_nan() != b.is_nan();
    }
    if a == b {
        return false;
    }
    let (a, b) = (a as f64, b as f64);
    let diff = (a - b).abs();
    // Infinities of different sign, or one infinite side.
    if !diff.is_finite() {
        return true;
    }
    diff > cfg.atol && diff > cfg.rtol * a.abs().max(b.abs())
}

fn scalars_differ(a: Scalar, b: Scalar, cfg: &OracleConfig) -> bool {
    match (a, b) {
        (Scalar::F32(x), Scalar::F32(y)) => floats_differ(x, y, cfg),
        _ => a != b,
    }
}

/// First differing output element as `(tensor, flat index, a, b)`.
fn first_difference(
    a: &[TensorValue],
    b: &[TensorValue],
    cfg: &OracleConfig,
) -> Option<(usize, usize, String, String)> {
    if a.len() != b.len() {
        return Some((
            a.len().min(b.len()),
            0,
            format!("{} outputs", a.len()),
            format!("{} outputs", b.len()),
        ));
    }
    for (t, (x, y)) in a.iter().zip(b).enumerate() {
        if x.data.len() != y.data.len() {
            return Some((
                t,
                0,
                format!("{} elements", x.data.len()),
                format!("{} elements", y.data.len()),
            ));
        }
        for (i, (p, q)) in x.data.iter().zip(&y.data).enumerate() {
            if scalars_differ(*p, *q, cfg) {
                return Some((t, i, format!("{p:?}"), format!("{q:?}")));
            }
        }
    }
    None
}

fn crash(side: &str, p: &PassPanic, fault: Option<&'static str>) -> OracleVerdict {
    let label = fault.unwrap_or(if p.label.is_empty() {
        UNATTRIBUTED
    } else {
        &p.label
    });
    OracleVerdict::failure(
        VerdictKind::Crash,
        p.pass.name(),
        label,
        format!("{side} pipeline: {p}"),
    )
}

/// Pass name owning the faulty branch `label`, or `pipeline`.
fn origin_of(label: Option<&str>) -> &'static str {
    label
        .and_then(BugId::from_site_label)
        .map_or("pipeline", |b| b.host_pass().name())
}

/// Compiles `func` with the passes of `seq` at the reference and at the
/// aggressive level, runs both on the same deterministic inputs and compares
/// them. Probes of both compilations and executions are recorded in `cov`.
pub fn differential_check(
    func: &PrimFunc,
    seq: &PassSequence,
    bugs: &BugPlan,
    cov: &mut CoverageHandle,
    input_seed: u64,
) -> OracleVerdict {
    differential_check_with(func, seq, bugs, cov, input_seed, &OracleConfig::default())
}

pub fn differential_check_with(
    func: &PrimFunc,
    seq: &PassSequence,
    bugs: &BugPlan,
    cov: &mut CoverageHandle,
    input_seed: u64,
    cfg: &OracleConfig,
) -> OracleVerdict {
    let mut cov_a = CoverageHandle::new();
    let mut cov_b = CoverageHandle::new();
    let a = run_pipeline(func, &seq.with_opt_level(REFERENCE_LEVEL), bugs, &mut cov_a);
    let b = run_pipeline(func, &seq.with_opt_level(OPTIMIZED_LEVEL), bugs, &mut cov_b);
    let verdict = match (a, b) {
        (Err(p), _) => crash("reference", &p, cov_a.fault_label()),
        (_, Err(p)) => crash("optimized", &p, cov_b.fault_label()),
        (Ok(fa), Ok(fb)) => {
            let fault = cov_b.fault_label().or(cov_a.fault_label());
            let inputs = gen_inputs(func, input_seed);
            let ra = execute_with_coverage(&fa, &inputs, cfg.limits, &mut cov_a);
            let rb = execute_with_coverage(&fb, &inputs, cfg.limits, &mut cov_b);
            compare(&ra, &rb, fault, cfg)
        }
    };
    cov.absorb(&cov_a);
    cov.absorb(&cov_b);
    verdict
}

fn compare(
    a: &ExecOutcome,
    b: &ExecOutcome,
    fault: Option<&'static str>,
    cfg: &OracleConfig,
) -> OracleVerdict {
    let origin = origin_of(fault);
    let label = fault.unwrap_or(UNATTRIBUTED);
    let slow = |a: &ExecOutcome, b: &ExecOutcome| {
        a.step_count >= cfg.perf_floor
            && b.step_count as f64 > cfg.perf_margin * a.step_count as f64
    };
    match (a.status, b.status) {
        (ExecStatus::ResourceExceeded, _) => OracleVerdict::pass(),
        (ExecStatus::Ok, ExecStatus::ResourceExceeded) => {
            if slow(a, b) {
                OracleVerdict::failure(
                    VerdictKind::PerfDegradation,
                    origin,
                    label,
                    format!(
                        "steps {} -> limit exceeded after {}",
                        a.step_count, b.step_count
                    ),
                )
            } else {
                OracleVerdict::pass()
            }
        }
        (ExecStatus::Trap(_), ExecStatus::ResourceExceeded) => OracleVerdict::pass(),
        (ExecStatus::Trap(t), ExecStatus::Ok) | (ExecStatus::Ok, ExecStatus::Trap(t)) => {
            let side = if matches!(a.status, ExecStatus::Trap(_)) {
                "reference"
            } else {
                "optimized"
            };
            let detail = a
                .trap_detail
                .as_ref()
                .or(b.trap_detail.as_ref())
                .cloned()
                .unwrap_or_default();
            OracleVerdict::failure(
                VerdictKind::UnexpectedException,
                t.name(),
                label,
                format!("only the {side} build traps: {detail}"),
            )
        }
        (ExecStatus::Trap(_), ExecStatus::Trap(_)) => OracleVerdict::pass(),
        (ExecStatus::Ok, ExecStatus::Ok) => {
            if let Some((t, i, x, y)) = first_difference(&a.outputs, &b.outputs, cfg) {
                OracleVerdict::failure(
                    VerdictKind::Inconsistency,
                    origin,
                    label,
                    format!("output {t}[{i}]: reference {x}, optimized {y}"),
                )
            } else if slow(a, b) {
                OracleVerdict::failure(
                    VerdictKind::PerfDegradation,
                    origin,
                    label,
                    format!(
                        "steps {} -> {} ({:.2}x)",
                        a.step_count,
                        b.step_count,
                        b.step_count as f64 / a.step_count as f64
                    ),
                )
            } else {
                OracleVerdict::pass()
            }
        }
    }
}

/// Input seed of the `k`-th extra input derived from `input_seed`.
pub fn extra_input_seed(input_seed: u64, k: u64) -> u64 {
    crate::mix_seed(input_seed, k + 1)
}

/// Re-runs the check on [`RECHECK_INPUTS`] further inputs and counts how
/// many reproduce `verdict`'s dedup key.
pub fn recheck(
    func: &PrimFunc,
    seq: &PassSequence,
    bugs: &BugPlan,
    input_seed: u64,
    verdict: &OracleVerdict,
    cfg: &OracleConfig,
) -> u64 {
    (0..RECHECK_INPUTS)
        .filter(|&k| {
            let v = differential_check_with(
                func,
                seq,
                bugs,
                &mut CoverageHandle::new(),
                extra_input_seed(input_seed, k),
                cfg,
            );
            v.dedup_key == verdict.dedup_key
        })
        .count() as u64
}

#[cfg(test)]
mod tests;
