//! The miniature tensor IR: data types, variables, buffers, expressions,
//! statements and functions.
//!
//! Trees are plain owned values. Every binding occurrence carries a
//! function-unique integer id; references compare by the whole [`Var`].

mod dtype;
mod path;
mod text;
mod validate;
pub mod visit;

use std::fmt;
use std::sync::Arc;

pub use dtype::{infer_dtype, Scope, TypeError};
pub use path::scope_at;
pub use path::{collect_nodes, node_at, replace_at, IrNode, NodePath, NodeRef};
pub use text::{parse, serialize, ParseError};
pub use validate::{is_valid, validate, ValidationResult, Violation};

/// Upper bound on the element count of one buffer.
pub const MAX_BUFFER_ELEMS: u64 = 1 << 20;
/// Upper bound on vector lanes.
pub const MAX_LANES: u16 = 16;
/// Upper bound on `LoopAttrs::unroll_max_steps`.
pub const MAX_UNROLL_STEPS: u32 = 1024;
/// Upper bound on the replication factor of a virtual-thread scope.
pub const MAX_VIRTUAL_THREADS: i64 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScalarKind {
    Int32,
    UInt32,
    Float32,
    Bool,
}

impl ScalarKind {
    pub const ALL: [ScalarKind; 4] = [
        ScalarKind::Int32,
        ScalarKind::UInt32,
        ScalarKind::Float32,
        ScalarKind::Bool,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScalarKind::Int32 => "int32",
            ScalarKind::UInt32 => "uint32",
            ScalarKind::Float32 => "float32",
            ScalarKind::Bool => "bool",
        }
    }

    pub fn is_int(self) -> bool {
        matches!(self, ScalarKind::Int32 | ScalarKind::UInt32)
    }

    pub fn is_numeric(self) -> bool {
        !matches!(self, ScalarKind::Bool)
    }
}

/// Scalar kind plus lane count. `lanes > 1` only appears after vectorization
/// or in hand-written vector code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DataType {
    pub kind: ScalarKind,
    pub lanes: u16,
}

impl DataType {
    pub const INT32: DataType = DataType::scalar(ScalarKind::Int32);
    pub const UINT32: DataType = DataType::scalar(ScalarKind::UInt32);
    pub const FLOAT32: DataType = DataType::scalar(ScalarKind::Float32);
    pub const BOOL: DataType = DataType::scalar(ScalarKind::Bool);

    pub const fn scalar(kind: ScalarKind) -> Self {
        DataType { kind, lanes: 1 }
    }

    pub const fn vector(kind: ScalarKind, lanes: u16) -> Self {
        DataType { kind, lanes }
    }

    pub fn is_scalar(self) -> bool {
        self.lanes == 1
    }

    pub fn with_lanes(self, lanes: u16) -> Self {
        DataType {
            kind: self.kind,
            lanes,
        }
    }

    pub fn element(self) -> Self {
        self.with_lanes(1)
    }

    /// `lanes >= 1`, `lanes <= MAX_LANES`, bool is scalar.
    pub fn is_well_formed(self) -> bool {
        self.lanes >= 1
            && self.lanes <= MAX_LANES
            && !(self.kind == ScalarKind::Bool && self.lanes != 1)
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.lanes == 1 {
            f.write_str(self.kind.name())
        } else {
            write!(f, "{}x{}", self.kind.name(), self.lanes)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    pub name: Arc<str>,
    pub dtype: DataType,
    pub id: u32,
}

impl Var {
    pub fn new(name: &str, dtype: DataType, id: u32) -> Self {
        Var {
            name: Arc::from(name),
            dtype,
            id,
        }
    }

    pub fn is_valid_name(name: &str) -> bool {
        let mut chars = name.chars();
        match chars.next() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
            _ => return false,
        }
        chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.name, self.id)
    }
}

/// A statically shaped storage region. `var` is the handle; its dtype equals
/// the element dtype.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Buffer {
    pub var: Var,
    pub shape: Vec<u32>,
    pub dtype: DataType,
}

impl Buffer {
    pub fn new(var: Var, shape: Vec<u32>) -> Self {
        let dtype = var.dtype;
        Buffer { var, shape, dtype }
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn num_elements(&self) -> u64 {
        self.shape.iter().map(|&d| d as u64).product()
    }

    pub fn id(&self) -> u32 {
        self.var.id
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    And,
    Or,
    Eq,
    Gt,
    Lt,
    Add,
    Sub,
    Mul,
    FloorDiv,
    FloorMod,
}

impl BinOp {
    pub const ALL: [BinOp; 10] = [
        BinOp::And,
        BinOp::Or,
        BinOp::Eq,
        BinOp::Gt,
        BinOp::Lt,
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::FloorDiv,
        BinOp::FloorMod,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BinOp::And => "and",
            BinOp::Or => "or",
            BinOp::Eq => "eq",
            BinOp::Gt => "gt",
            BinOp::Lt => "lt",
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::FloorDiv => "floordiv",
            BinOp::FloorMod => "floormod",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        BinOp::ALL.into_iter().find(|op| op.name() == s)
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or)
    }

    pub fn is_comparison(self) -> bool {
        matches!(self, BinOp::Eq | BinOp::Gt | BinOp::Lt)
    }

    pub fn is_arith(self) -> bool {
        !self.is_logical() && !self.is_comparison()
    }

    pub fn is_division(self) -> bool {
        matches!(self, BinOp::FloorDiv | BinOp::FloorMod)
    }
}

/// The fixed intrinsic set callable through [`PrimExpr::Call`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Intrinsic {
    Abs,
    Min,
    Max,
    Clz,
    Popcount,
    Sqrt,
    Sin,
    Cos,
    Exp,
    Log,
    Floor,
    Ceil,
}

impl Intrinsic {
    pub const ALL: [Intrinsic; 12] = [
        Intrinsic::Abs,
        Intrinsic::Min,
        Intrinsic::Max,
        Intrinsic::Clz,
        Intrinsic::Popcount,
        Intrinsic::Sqrt,
        Intrinsic::Sin,
        Intrinsic::Cos,
        Intrinsic::Exp,
        Intrinsic::Log,
        Intrinsic::Floor,
        Intrinsic::Ceil,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Intrinsic::Abs => "abs",
            Intrinsic::Min => "min",
            Intrinsic::Max => "max",
            Intrinsic::Clz => "clz",
            Intrinsic::Popcount => "popcount",
            Intrinsic::Sqrt => "sqrt",
            Intrinsic::Sin => "sin",
            Intrinsic::Cos => "cos",
            Intrinsic::Exp => "exp",
            Intrinsic::Log => "log",
            Intrinsic::Floor => "floor",
            Intrinsic::Ceil => "ceil",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Intrinsic::ALL.into_iter().find(|i| i.name() == s)
    }

    pub fn arity(self) -> usize {
        match self {
            Intrinsic::Min | Intrinsic::Max => 2,
            _ => 1,
        }
    }

    /// Whether the intrinsic accepts operands of `kind`.
    pub fn accepts(self, kind: ScalarKind) -> bool {
        match self {
            Intrinsic::Abs | Intrinsic::Min | Intrinsic::Max => kind.is_numeric(),
            Intrinsic::Clz | Intrinsic::Popcount => kind.is_int(),
            _ => kind == ScalarKind::Float32,
        }
    }

    /// Intrinsics with a vector (multi-lane) implementation.
    pub fn has_vector_form(self) -> bool {
        !matches!(self, Intrinsic::Clz | Intrinsic::Popcount)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PrimExpr {
    /// Variable reference (the injection of a `Var` into expressions).
    Var(Var),
    Binary(BinOp, Box<PrimExpr>, Box<PrimExpr>),
    Call {
        dtype: DataType,
        op: Intrinsic,
        args: Vec<PrimExpr>,
    },
    Cast(DataType, Box<PrimExpr>),
    Let {
        var: Var,
        value: Box<PrimExpr>,
        body: Box<PrimExpr>,
    },
    Load {
        buffer: Buffer,
        indices: Vec<PrimExpr>,
    },
    FloatImm(DataType, f64),
    IntImm(DataType, i64),
    Ramp {
        base: Box<PrimExpr>,
        stride: Box<PrimExpr>,
        lanes: u16,
    },
    Broadcast {
        value: Box<PrimExpr>,
        lanes: u16,
    },
}

impl PrimExpr {
    pub fn int(v: i64) -> Self {
        PrimExpr::IntImm(DataType::INT32, v)
    }

    pub fn uint(v: i64) -> Self {
        PrimExpr::IntImm(DataType::UINT32, v)
    }

    pub fn boolean(b: bool) -> Self {
        PrimExpr::IntImm(DataType::BOOL, b as i64)
    }

    pub fn float(v: f64) -> Self {
        PrimExpr::FloatImm(DataType::FLOAT32, v)
    }

    pub fn var(v: &Var) -> Self {
        PrimExpr::Var(v.clone())
    }

    pub fn binary(op: BinOp, lhs: PrimExpr, rhs: PrimExpr) -> Self {
        PrimExpr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn add(lhs: PrimExpr, rhs: PrimExpr) -> Self {
        Self::binary(BinOp::Add, lhs, rhs)
    }

    pub fn mul(lhs: PrimExpr, rhs: PrimExpr) -> Self {
        Self::binary(BinOp::Mul, lhs, rhs)
    }

    pub fn load(buffer: &Buffer, indices: Vec<PrimExpr>) -> Self {
        PrimExpr::Load {
            buffer: buffer.clone(),
            indices,
        }
    }

    pub fn as_int_imm(&self) -> Option<i64> {
        match self {
            PrimExpr::IntImm(dt, v) if dt.kind != ScalarKind::Bool => Some(*v),
            _ => None,
        }
    }

    pub fn is_imm(&self) -> bool {
        matches!(self, PrimExpr::IntImm(..) | PrimExpr::FloatImm(..))
    }

    /// Short lowercase constructor name, used in probe labels and text.
    pub fn kind_name(&self) -> &'static str {
        match self {
            PrimExpr::Var(_) => "var",
            PrimExpr::Binary(op, ..) => op.name(),
            PrimExpr::Call { .. } => "call",
            PrimExpr::Cast(..) => "cast",
            PrimExpr::Let { .. } => "let",
            PrimExpr::Load { .. } => "load",
            PrimExpr::FloatImm(..) => "float_imm",
            PrimExpr::IntImm(..) => "int_imm",
            PrimExpr::Ramp { .. } => "ramp",
            PrimExpr::Broadcast { .. } => "broadcast",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ForKind {
    Serial,
    Vectorize,
    Unroll,
    Parallel,
    VirtualThreadBound,
}

impl ForKind {
    pub const ALL: [ForKind; 5] = [
        ForKind::Serial,
        ForKind::Vectorize,
        ForKind::Unroll,
        ForKind::Parallel,
        ForKind::VirtualThreadBound,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ForKind::Serial => "serial",
            ForKind::Vectorize => "vectorize",
            ForKind::Unroll => "unroll",
            ForKind::Parallel => "parallel",
            ForKind::VirtualThreadBound => "vthread",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        ForKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct LoopAttrs {
    pub unroll_max_steps: Option<u32>,
    pub partition_hint: Option<bool>,
}

impl LoopAttrs {
    pub fn is_empty(&self) -> bool {
        self.unroll_max_steps.is_none() && self.partition_hint.is_none()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForLoop {
    pub var: Var,
    pub min: PrimExpr,
    pub extent: PrimExpr,
    pub kind: ForKind,
    pub body: Stmt,
    pub attrs: LoopAttrs,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum AttrKey {
    /// Replicates the body across `value` virtual threads bound to the var.
    VirtualThread(Var),
    /// Unroll cap override for loops in the body.
    UnrollMaxSteps,
}

impl AttrKey {
    pub fn name(&self) -> &'static str {
        match self {
            AttrKey::VirtualThread(_) => "virtual_thread",
            AttrKey::UnrollMaxSteps => "unroll_max_steps",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Stmt {
    While {
        cond: PrimExpr,
        body: Box<Stmt>,
    },
    For(Box<ForLoop>),
    IfThenElse {
        cond: PrimExpr,
        then_case: Box<Stmt>,
        else_case: Option<Box<Stmt>>,
    },
    LetStmt {
        var: Var,
        value: PrimExpr,
        body: Box<Stmt>,
    },
    Seq(Vec<Stmt>),
    Store {
        buffer: Buffer,
        value: PrimExpr,
        indices: Vec<PrimExpr>,
    },
    Allocate {
        buffer: Buffer,
        body: Box<Stmt>,
    },
    Attr {
        key: AttrKey,
        value: PrimExpr,
        body: Box<Stmt>,
    },
    Evaluate(PrimExpr),
    Nop,
}

impl Stmt {
    /// Builds a sequence, flattening to `Nop` or the single element when
    /// possible.
    pub fn seq(mut stmts: Vec<Stmt>) -> Stmt {
        match stmts.len() {
            0 => Stmt::Nop,
            1 => stmts.pop().unwrap(),
            _ => Stmt::Seq(stmts),
        }
    }

    pub fn store(buffer: &Buffer, value: PrimExpr, indices: Vec<PrimExpr>) -> Stmt {
        Stmt::Store {
            buffer: buffer.clone(),
            value,
            indices,
        }
    }

    pub fn for_loop(var: Var, min: PrimExpr, extent: PrimExpr, kind: ForKind, body: Stmt) -> Stmt {
        Stmt::For(Box::new(ForLoop {
            var,
            min,
            extent,
            kind,
            body,
            attrs: LoopAttrs::default(),
        }))
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Stmt::While { .. } => "while",
            Stmt::For(_) => "for",
            Stmt::IfThenElse { .. } => "if",
            Stmt::LetStmt { .. } => "letstmt",
            Stmt::Seq(_) => "seq",
            Stmt::Store { .. } => "store",
            Stmt::Allocate { .. } => "allocate",
            Stmt::Attr { .. } => "attr",
            Stmt::Evaluate(_) => "evaluate",
            Stmt::Nop => "nop",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrimFunc {
    pub params: Vec<Var>,
    /// Buffers bound to parameter handles.
    pub buffers: Vec<Buffer>,
    pub body: Stmt,
    /// Zero-initialized output buffer provided by the runtime.
    pub ret_buffer: Option<Buffer>,
}

impl PrimFunc {
    pub fn new(params: Vec<Var>, buffers: Vec<Buffer>, body: Stmt) -> Self {
        PrimFunc {
            params,
            buffers,
            body,
            ret_buffer: None,
        }
    }

    /// The empty function `PrimFunc([]){Nop}`.
    pub fn empty() -> Self {
        PrimFunc::new(Vec::new(), Vec::new(), Stmt::Nop)
    }

    pub fn buffer_for_param(&self, param: &Var) -> Option<&Buffer> {
        self.buffers.iter().find(|b| b.var.id == param.id)
    }

    /// Buffers visible everywhere in the body.
    pub fn global_buffers(&self) -> impl Iterator<Item = &Buffer> {
        self.buffers.iter().chain(self.ret_buffer.iter())
    }

    /// Parameters that are plain values rather than buffer handles.
    pub fn scalar_params(&self) -> impl Iterator<Item = &Var> {
        self.params
            .iter()
            .filter(move |p| self.buffers.iter().all(|b| b.var.id != p.id))
    }
}
