use crate::interp::TrapKind;
use crate::ir::{BinOp, DataType, Intrinsic, NodeRef, PrimExpr, ScalarKind, Stmt};
use crate::passes::PassId;

use super::{SiteId, SiteRegistry};

/// Node kinds in family order: statements, then expressions.
pub const NODE_KINDS: [&str; 29] = [
    "while",
    "for",
    "if",
    "letstmt",
    "seq",
    "store",
    "allocate",
    "attr",
    "evaluate",
    "nop",
    "var",
    "and",
    "or",
    "eq",
    "gt",
    "lt",
    "add",
    "sub",
    "mul",
    "floordiv",
    "floormod",
    "call",
    "cast",
    "let",
    "load",
    "float_imm",
    "int_imm",
    "ramp",
    "broadcast",
];

const DEPTH_BUCKETS: usize = 4;
const DTYPE_SLOTS: usize = 5;

struct Bases {
    pass_visit: u32,
    interp_node: u32,
    binop: u32,
    call: u32,
    cast: u32,
    trap: u32,
}

static BASES: std::sync::OnceLock<Bases> = std::sync::OnceLock::new();

fn bases() -> &'static Bases {
    super::registry();
    BASES.get().expect("registry initialised")
}

pub(super) fn build() -> SiteRegistry {
    let mut r = SiteRegistry::new();
    let mut reg = |label: String| r.register_site(&label).expect("unique probe label").0;
    for label in crate::passes::PROBES
        .iter()
        .copied()
        .flatten()
        .chain(crate::interp::PROBES)
    {
        reg(label.to_string());
    }
    let pass_visit = reg(format!("{}.visit.{}", PassId::ALL[0].name(), NODE_KINDS[0]));
    for (p, pass) in PassId::ALL.iter().enumerate() {
        for (k, kind) in NODE_KINDS.iter().enumerate() {
            if p + k > 0 {
                reg(format!("{}.visit.{kind}", pass.name()));
            }
        }
    }
    let interp_node = reg(format!("interp.node.{}.d0", NODE_KINDS[0]));
    for (k, kind) in NODE_KINDS.iter().enumerate() {
        for d in 0..DEPTH_BUCKETS {
            if k + d > 0 {
                reg(format!("interp.node.{kind}.d{d}"));
            }
        }
    }
    let binop = reg(format!(
        "interp.op.{}.{}",
        BinOp::ALL[0].name(),
        dtype_slot_name(0)
    ));
    for (o, op) in BinOp::ALL.iter().enumerate() {
        for t in 0..DTYPE_SLOTS {
            if o + t > 0 {
                reg(format!("interp.op.{}.{}", op.name(), dtype_slot_name(t)));
            }
        }
    }
    let call = reg(format!("interp.call.{}.scalar", Intrinsic::ALL[0].name()));
    for (i, op) in Intrinsic::ALL.iter().enumerate() {
        if i > 0 {
            reg(format!("interp.call.{}.scalar", op.name()));
        }
        reg(format!("interp.call.{}.vector", op.name()));
    }
    let cast = reg(format!(
        "interp.cast.{}.{}",
        ScalarKind::ALL[0].name(),
        ScalarKind::ALL[0].name()
    ));
    for (f, from) in ScalarKind::ALL.iter().enumerate() {
        for (t, to) in ScalarKind::ALL.iter().enumerate() {
            if f + t > 0 {
                reg(format!("interp.cast.{}.{}", from.name(), to.name()));
            }
        }
    }
    let trap = reg(format!("interp.trap.{}", TrapKind::ALL[0].name()));
    for kind in &TrapKind::ALL[1..] {
        reg(format!("interp.trap.{}", kind.name()));
    }
    let _ = BASES.set(Bases {
        pass_visit,
        interp_node,
        binop,
        call,
        cast,
        trap,
    });
    r
}

fn dtype_slot_name(slot: usize) -> &'static str {
    match slot {
        0 => "int32",
        1 => "uint32",
        2 => "float32",
        3 => "bool",
        _ => "vector",
    }
}

fn dtype_slot(t: DataType) -> usize {
    if t.lanes > 1 {
        return 4;
    }
    match t.kind {
        ScalarKind::Int32 => 0,
        ScalarKind::UInt32 => 1,
        ScalarKind::Float32 => 2,
        ScalarKind::Bool => 3,
    }
}

fn kind_pos(k: ScalarKind) -> usize {
    ScalarKind::ALL.iter().position(|&x| x == k).unwrap()
}

pub fn node_kind_index(node: NodeRef<'_>) -> usize {
    match node {
        NodeRef::Stmt(s) => match s {
            Stmt::While { .. } => 0,
            Stmt::For(_) => 1,
            Stmt::IfThenElse { .. } => 2,
            Stmt::LetStmt { .. } => 3,
            Stmt::Seq(_) => 4,
            Stmt::Store { .. } => 5,
            Stmt::Allocate { .. } => 6,
            Stmt::Attr { .. } => 7,
            Stmt::Evaluate(_) => 8,
            Stmt::Nop => 9,
        },
        NodeRef::Expr(e) => match e {
            PrimExpr::Var(_) => 10,
            PrimExpr::Binary(op, ..) => 11 + BinOp::ALL.iter().position(|o| o == op).unwrap(),
            PrimExpr::Call { .. } => 21,
            PrimExpr::Cast(..) => 22,
            PrimExpr::Let { .. } => 23,
            PrimExpr::Load { .. } => 24,
            PrimExpr::FloatImm(..) => 25,
            PrimExpr::IntImm(..) => 26,
            PrimExpr::Ramp { .. } => 27,
            PrimExpr::Broadcast { .. } => 28,
        },
    }
}

pub fn pass_visit_site(pass: PassId, node: NodeRef<'_>) -> SiteId {
    SiteId(bases().pass_visit + (pass.index() * NODE_KINDS.len() + node_kind_index(node)) as u32)
}

pub fn interp_node_site(node_kind: usize, loop_depth: usize) -> SiteId {
    let d = loop_depth.min(DEPTH_BUCKETS - 1);
    SiteId(bases().interp_node + (node_kind * DEPTH_BUCKETS + d) as u32)
}

pub fn binop_site(op: BinOp, t: DataType) -> SiteId {
    let o = BinOp::ALL.iter().position(|&x| x == op).unwrap();
    SiteId(bases().binop + (o * DTYPE_SLOTS + dtype_slot(t)) as u32)
}

pub fn call_site(op: Intrinsic, vector: bool) -> SiteId {
    let i = Intrinsic::ALL.iter().position(|&x| x == op).unwrap();
    SiteId(bases().call + (i * 2 + vector as usize) as u32)
}

pub fn cast_site(from: ScalarKind, to: ScalarKind) -> SiteId {
    SiteId(bases().cast + (kind_pos(from) * 4 + kind_pos(to)) as u32)
}

pub fn trap_site(kind: TrapKind) -> SiteId {
    let k = TrapKind::ALL.iter().position(|&x| x == kind).unwrap();
    SiteId(bases().trap + k as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverage::registry;

    #[test]
    fn family_ids_match_labels() {
        let r = registry();
        let nop = Stmt::Nop;
        assert_eq!(
            r.label(pass_visit_site(PassId::LetInline, NodeRef::Stmt(&nop))),
            "let_inline.visit.nop"
        );
        assert_eq!(r.label(interp_node_site(1, 9)), "interp.node.for.d3");
        assert_eq!(
            r.label(binop_site(
                BinOp::FloorMod,
                DataType::vector(ScalarKind::Int32, 4)
            )),
            "interp.op.floormod.vector"
        );
        assert_eq!(
            r.label(call_site(Intrinsic::Ceil, true)),
            "interp.call.ceil.vector"
        );
        assert_eq!(
            r.label(cast_site(ScalarKind::Bool, ScalarKind::Float32)),
            "interp.cast.bool.float32"
        );
        assert_eq!(
            r.label(trap_site(TrapKind::AllocLimit)),
            "interp.trap.alloc_limit"
        );
    }
}
