//! Size-bounded random generation of statements and expressions.
//!
//! Every constructor is only chosen when its smallest completion fits the
//! remaining node budget, so a generated node never exceeds the budget
//! (except that a vector expression needs at least two nodes).

use rand::seq::SliceRandom;
use rand::Rng;

use super::{Constraints, MutateError, NodeKind};
use crate::ir::{
    AttrKey, BinOp, Buffer, DataType, ForKind, ForLoop, Intrinsic, IrNode, LoopAttrs, PrimExpr,
    ScalarKind, Scope, Stmt, Var,
};

const ARITH: [BinOp; 5] = [
    BinOp::Add,
    BinOp::Sub,
    BinOp::Mul,
    BinOp::FloorDiv,
    BinOp::FloorMod,
];
const SCALAR_KINDS: [ScalarKind; 4] = ScalarKind::ALL;
const NUMERIC_KINDS: [ScalarKind; 3] = [ScalarKind::Int32, ScalarKind::UInt32, ScalarKind::Float32];

/// Generates a node satisfying `c` with at most `2 * size` nodes.
pub fn generate(c: &Constraints, size: usize, rng: &mut impl Rng) -> Result<IrNode, MutateError> {
    generate_with(c, size, Vec::new(), Vec::new(), rng)
}

/// Like [`generate`], but child slots may be filled from the given subtrees
/// (which must be valid in the constraint scope). Reused subtrees do not
/// count toward the size bound.
pub fn generate_with(
    c: &Constraints,
    size: usize,
    pool_exprs: Vec<(PrimExpr, DataType)>,
    pool_stmts: Vec<Stmt>,
    rng: &mut impl Rng,
) -> Result<IrNode, MutateError> {
    if size == 0 {
        return Err(MutateError::Unsatisfiable);
    }
    let mut g = Gen::new(rng, c.scope(), c.next_id);
    g.pool_exprs = pool_exprs;
    g.pool_stmts = pool_stmts;
    let budget = 2 * size;
    match c.node_kind {
        NodeKind::Stmt => Ok(IrNode::Stmt(g.stmt_root(budget))),
        NodeKind::Var => {
            let v = c
                .vars_in_scope
                .choose(g.rng)
                .ok_or(MutateError::Unsatisfiable)?;
            Ok(IrNode::Expr(PrimExpr::var(v)))
        }
        NodeKind::Expr => {
            let t = c.expr_dtype.ok_or(MutateError::Unsatisfiable)?;
            if let Some((lo, hi)) = c.imm_range {
                if t != DataType::INT32 || lo > hi {
                    return Err(MutateError::Unsatisfiable);
                }
                return Ok(IrNode::Expr(PrimExpr::int(
                    g.rng.gen_range(lo..=hi.min(lo + 63)),
                )));
            }
            if !t.is_well_formed() {
                return Err(MutateError::Unsatisfiable);
            }
            Ok(IrNode::Expr(g.expr_root(t, budget)))
        }
    }
}

pub(crate) struct Gen<'r, R: Rng> {
    pub rng: &'r mut R,
    pub next_id: u32,
    pub scope: Scope,
    pub pool_exprs: Vec<(PrimExpr, DataType)>,
    pub pool_stmts: Vec<Stmt>,
}

#[derive(Clone, Copy, PartialEq)]
enum ExprCtor {
    Arith,
    Compare,
    Logic,
    Cast,
    Call,
    Let,
    Load,
    Broadcast,
    Ramp,
}

#[derive(Clone, Copy, PartialEq)]
enum StmtCtor {
    Nop,
    Evaluate,
    Store,
    If,
    For,
    LetStmt,
    Seq,
    Allocate,
    VirtualThread,
    UnrollAttr,
    While,
}

/// Node count of the counted-while template around a one-node body.
const WHILE_MIN: usize = 15;

impl<'r, R: Rng> Gen<'r, R> {
    pub fn new(rng: &'r mut R, scope: Scope, next_id: u32) -> Self {
        Gen {
            rng,
            next_id,
            scope,
            pool_exprs: Vec::new(),
            pool_stmts: Vec::new(),
        }
    }

    pub fn fresh_var(&mut self, name: &str, dtype: DataType) -> Var {
        let v = Var::new(name, dtype, self.next_id);
        self.next_id += 1;
        v
    }

    /// Splits `budget` among children with the given minimum sizes.
    fn split(&mut self, budget: usize, mins: &[usize]) -> Vec<usize> {
        let mut surplus = budget.saturating_sub(mins.iter().sum());
        let mut out = mins.to_vec();
        let mut order: Vec<usize> = (0..mins.len()).collect();
        order.shuffle(self.rng);
        for (n, &i) in order.iter().enumerate() {
            let extra = if n + 1 == order.len() {
                surplus
            } else {
                self.rng.gen_range(0..=surplus)
            };
            surplus -= extra;
            out[i] += extra;
        }
        out
    }

    // ---- immediates -------------------------------------------------------

    pub fn imm(&mut self, t: DataType) -> PrimExpr {
        match t.kind {
            ScalarKind::Int32 => PrimExpr::int(self.rng.gen_range(-64..=63)),
            ScalarKind::UInt32 => PrimExpr::uint(self.rng.gen_range(0..=127)),
            ScalarKind::Float32 => PrimExpr::float(self.rng.gen_range(-16..=16) as f64 / 8.0),
            ScalarKind::Bool => PrimExpr::boolean(self.rng.gen()),
        }
    }

    fn vars_of(&self, t: DataType) -> Vec<Var> {
        self.scope
            .vars
            .iter()
            .filter(|v| v.dtype == t)
            .cloned()
            .collect()
    }

    fn leaf(&mut self, t: DataType) -> PrimExpr {
        if t.lanes > 1 {
            let v = self.leaf(t.element());
            return PrimExpr::Broadcast {
                value: Box::new(v),
                lanes: t.lanes,
            };
        }
        let vars = self.vars_of(t);
        if !vars.is_empty() && self.rng.gen_bool(0.6) {
            PrimExpr::var(vars.choose(self.rng).unwrap())
        } else {
            self.imm(t)
        }
    }

    fn take_pooled_expr(&mut self, t: DataType) -> Option<PrimExpr> {
        let idx: Vec<usize> = (0..self.pool_exprs.len())
            .filter(|&i| self.pool_exprs[i].1 == t)
            .collect();
        let &i = idx.choose(self.rng)?;
        if self.rng.gen_bool(0.7) {
            Some(self.pool_exprs.swap_remove(i).0)
        } else {
            None
        }
    }

    // ---- expressions -------------------------------------------------------

    fn loadable(&self, t: DataType) -> Vec<Buffer> {
        self.scope
            .buffers
            .iter()
            .filter(|b| b.dtype.kind == t.kind)
            .cloned()
            .collect()
    }

    fn expr_ctors(&self, t: DataType, budget: usize) -> Vec<ExprCtor> {
        use ExprCtor::*;
        let mut v = Vec::new();
        if t.lanes > 1 {
            let fits = |n: usize| n <= budget;
            if fits(2) {
                v.push(Broadcast);
            }
            if t.kind == ScalarKind::Int32 && fits(3) {
                v.push(Ramp);
            }
            if fits(3) {
                v.push(Cast);
                if !call_ops(t, true).is_empty() {
                    v.push(Call);
                }
            }
            if fits(5) {
                v.push(Arith);
            }
            return v;
        }
        if budget >= 2 {
            v.push(Cast);
        }
        if budget >= 3 {
            v.push(Let);
            if t.kind == ScalarKind::Bool {
                v.push(Compare);
                v.push(Logic);
            } else {
                v.push(Arith);
                v.push(Call);
            }
        }
        if self.loadable(t).iter().any(|b| b.rank() < budget) {
            v.push(Load);
        }
        v
    }

    /// An expression whose root is a constructor (not a leaf) when the budget
    /// allows one.
    pub fn expr_root(&mut self, t: DataType, budget: usize) -> PrimExpr {
        let ctors = self.expr_ctors(t, budget);
        match ctors.choose(self.rng) {
            Some(&c) => self.build_expr(c, t, budget),
            None => self.leaf(t),
        }
    }

    pub fn expr(&mut self, t: DataType, budget: usize) -> PrimExpr {
        if let Some(e) = self.take_pooled_expr(t) {
            return e;
        }
        let ctors = self.expr_ctors(t, budget);
        let leaf_p = if t.lanes > 1 {
            0.0
        } else if budget <= 2 {
            0.7
        } else {
            0.25
        };
        if ctors.is_empty() || self.rng.gen_bool(leaf_p) {
            return self.leaf(t);
        }
        let c = *ctors.choose(self.rng).unwrap();
        self.build_expr(c, t, budget)
    }

    fn build_expr(&mut self, c: ExprCtor, t: DataType, budget: usize) -> PrimExpr {
        let vector = t.lanes > 1;
        let child_min = if vector { 2 } else { 1 };
        match c {
            ExprCtor::Arith => {
                let b = self.split(budget - 1, &[child_min, child_min]);
                let op = *ARITH.choose(self.rng).unwrap();
                let l = self.expr(t, b[0]);
                let r = self.expr(t, b[1]);
                PrimExpr::binary(op, l, r)
            }
            ExprCtor::Compare => {
                let op = *[BinOp::Eq, BinOp::Gt, BinOp::Lt].choose(self.rng).unwrap();
                let kinds: &[ScalarKind] = if op == BinOp::Eq {
                    &SCALAR_KINDS
                } else {
                    &NUMERIC_KINDS
                };
                let ot = DataType::scalar(*kinds.choose(self.rng).unwrap());
                let b = self.split(budget - 1, &[1, 1]);
                let l = self.expr(ot, b[0]);
                let r = self.expr(ot, b[1]);
                PrimExpr::binary(op, l, r)
            }
            ExprCtor::Logic => {
                let op = *[BinOp::And, BinOp::Or].choose(self.rng).unwrap();
                let b = self.split(budget - 1, &[1, 1]);
                let l = self.expr(DataType::BOOL, b[0]);
                let r = self.expr(DataType::BOOL, b[1]);
                PrimExpr::binary(op, l, r)
            }
            ExprCtor::Cast => {
                let kinds: &[ScalarKind] = if vector {
                    &NUMERIC_KINDS
                } else {
                    &SCALAR_KINDS
                };
                let from: Vec<ScalarKind> =
                    kinds.iter().copied().filter(|&k| k != t.kind).collect();
                let from = DataType::vector(*from.choose(self.rng).unwrap(), t.lanes);
                let v = self.expr(from, budget - 1);
                PrimExpr::Cast(t, Box::new(v))
            }
            ExprCtor::Call => self.call(t, budget),
            ExprCtor::Let => {
                let vt = DataType::scalar(*SCALAR_KINDS.choose(self.rng).unwrap());
                let var = self.fresh_var("v", vt);
                let b = self.split(budget - 1, &[1, child_min]);
                let value = self.expr(vt, b[0]);
                self.scope.push_var(var.clone());
                let body = self.expr(t, b[1]);
                self.scope.pop_var();
                PrimExpr::Let {
                    var,
                    value: Box::new(value),
                    body: Box::new(body),
                }
            }
            ExprCtor::Load => {
                let bufs: Vec<Buffer> = self
                    .loadable(t)
                    .into_iter()
                    .filter(|b| b.rank() < budget)
                    .collect();
                let buf = self.pick_buffer(&bufs);
                let mins = vec![1; buf.rank()];
                let b = self.split(budget - 1, &mins);
                let indices = buf
                    .shape
                    .iter()
                    .zip(b)
                    .map(|(&d, bb)| self.index(d, bb))
                    .collect();
                PrimExpr::Load {
                    buffer: buf,
                    indices,
                }
            }
            ExprCtor::Broadcast => {
                let v = self.expr(t.element(), budget - 1);
                PrimExpr::Broadcast {
                    value: Box::new(v),
                    lanes: t.lanes,
                }
            }
            ExprCtor::Ramp => {
                let b = self.split(budget - 1, &[1, 1]);
                let base = self.expr(DataType::INT32, b[0]);
                let stride = self.expr(DataType::INT32, b[1]);
                PrimExpr::Ramp {
                    base: Box::new(base),
                    stride: Box::new(stride),
                    lanes: t.lanes,
                }
            }
        }
    }

    /// An intrinsic call of type `t`, wrapped in a cast when the chosen
    /// intrinsic does not produce `t` directly.
    fn call(&mut self, t: DataType, budget: usize) -> PrimExpr {
        let vector = t.lanes > 1;
        let child_min = if vector { 2 } else { 1 };
        let mut options: Vec<(Intrinsic, DataType)> =
            call_ops(t, vector).into_iter().map(|op| (op, t)).collect();
        if !vector {
            for kind in NUMERIC_KINDS.into_iter().filter(|&k| k != t.kind) {
                let at = DataType::scalar(kind);
                options.extend(call_ops(at, false).into_iter().map(|op| (op, at)));
            }
        }
        options.retain(|(op, at)| 1 + usize::from(*at != t) + op.arity() * child_min <= budget);
        let Some(&(op, at)) = options.choose(self.rng) else {
            return self.leaf(t);
        };
        let overhead = 1 + usize::from(at != t);
        let b = self.split(budget - overhead, &vec![child_min; op.arity()]);
        let args = b.into_iter().map(|bb| self.expr(at, bb)).collect();
        let call = PrimExpr::Call {
            dtype: at,
            op,
            args,
        };
        if at == t {
            call
        } else {
            PrimExpr::Cast(t, Box::new(call))
        }
    }

    fn pick_buffer(&mut self, bufs: &[Buffer]) -> Buffer {
        // Prefer the innermost buffer so fresh allocations get used.
        if self.rng.gen_bool(0.4) {
            if let Some(last) = self.scope.buffers.iter().rev().find(|b| bufs.contains(b)) {
                return last.clone();
            }
        }
        bufs.choose(self.rng).unwrap().clone()
    }

    /// An index into a dimension of extent `dim`, usually in bounds:
    /// immediates, loop-variable affine forms reduced modulo `dim`, or an
    /// arbitrary int32 expression.
    pub fn index(&mut self, dim: u32, budget: usize) -> PrimExpr {
        let ints = self.vars_of(DataType::INT32);
        let dim_e = PrimExpr::int(dim as i64);
        let roll = self.rng.gen_range(0..100);
        if ints.is_empty() || budget < 3 || roll < 30 {
            if !ints.is_empty() && roll < 10 {
                return PrimExpr::var(ints.choose(self.rng).unwrap());
            }
            return PrimExpr::int(self.rng.gen_range(0..dim as i64));
        }
        if roll < 85 {
            let a = PrimExpr::var(ints.choose(self.rng).unwrap());
            let affine = if budget >= 7 && self.rng.gen_bool(0.5) {
                let b = PrimExpr::var(ints.choose(self.rng).unwrap());
                let c = PrimExpr::int(*[2, 4, 8, 16].choose(self.rng).unwrap());
                PrimExpr::add(PrimExpr::mul(a, c), b)
            } else if budget >= 5 && self.rng.gen_bool(0.5) {
                PrimExpr::add(a, PrimExpr::int(self.rng.gen_range(1..=8)))
            } else {
                a
            };
            return PrimExpr::binary(BinOp::FloorMod, affine, dim_e);
        }
        self.expr(DataType::INT32, budget)
    }

    // ---- statements ---------------------------------------------------------

    fn stmt_ctors(&self, budget: usize) -> Vec<StmtCtor> {
        use StmtCtor::*;
        let mut v = vec![Nop];
        if budget >= 2 {
            v.push(Evaluate);
            v.push(Allocate);
        }
        if self.scope.buffers.iter().any(|b| 2 + b.rank() <= budget) {
            v.push(Store);
            v.push(Store);
        }
        if budget >= 3 {
            v.extend([If, LetStmt, Seq, VirtualThread, UnrollAttr]);
        }
        if budget >= 4 {
            v.push(For);
            v.push(For);
        }
        if budget >= WHILE_MIN {
            v.push(While);
        }
        v
    }

    /// A statement whose root is not `Nop` when the budget allows.
    pub fn stmt_root(&mut self, budget: usize) -> Stmt {
        let ctors: Vec<StmtCtor> = self
            .stmt_ctors(budget)
            .into_iter()
            .filter(|&c| c != StmtCtor::Nop)
            .collect();
        match ctors.choose(self.rng) {
            Some(&c) => self.build_stmt(c, budget),
            None => Stmt::Nop,
        }
    }

    pub fn stmt(&mut self, budget: usize) -> Stmt {
        if !self.pool_stmts.is_empty() && self.rng.gen_bool(0.6) {
            let i = self.rng.gen_range(0..self.pool_stmts.len());
            return self.pool_stmts.swap_remove(i);
        }
        let ctors = self.stmt_ctors(budget);
        let c = *ctors.choose(self.rng).unwrap();
        self.build_stmt(c, budget)
    }

    fn build_stmt(&mut self, c: StmtCtor, budget: usize) -> Stmt {
        match c {
            StmtCtor::Nop => Stmt::Nop,
            StmtCtor::Evaluate => {
                let t = DataType::scalar(*SCALAR_KINDS.choose(self.rng).unwrap());
                Stmt::Evaluate(self.expr(t, budget - 1))
            }
            StmtCtor::Store => {
                let bufs: Vec<Buffer> = self
                    .scope
                    .buffers
                    .iter()
                    .filter(|b| 2 + b.rank() <= budget)
                    .cloned()
                    .collect();
                let buf = self.pick_buffer(&bufs);
                self.store(&buf, budget)
            }
            StmtCtor::If => {
                let with_else = budget >= 4 && self.rng.gen_bool(0.5);
                let mins: &[usize] = if with_else { &[1, 1, 1] } else { &[1, 1] };
                let b = self.split(budget - 1, mins);
                let cond = self.expr(DataType::BOOL, b[0]);
                let then_case = Box::new(self.stmt(b[1]));
                let else_case = with_else.then(|| Box::new(self.stmt(b[2])));
                Stmt::IfThenElse {
                    cond,
                    then_case,
                    else_case,
                }
            }
            StmtCtor::For => {
                let name = *["i", "j", "k"].choose(self.rng).unwrap();
                let var = self.fresh_var(name, DataType::INT32);
                let kind = *ForKind::ALL.choose(self.rng).unwrap();
                let extent = *[1, 2, 3, 4, 4, 8, 8, 16].choose(self.rng).unwrap();
                let min = if self.rng.gen_bool(0.8) {
                    0
                } else {
                    self.rng.gen_range(-4..=4)
                };
                self.scope.push_var(var.clone());
                let body = self.stmt(budget - 3);
                self.scope.pop_var();
                let mut attrs = LoopAttrs::default();
                if self.rng.gen_bool(0.2) {
                    attrs.unroll_max_steps = Some(*[0, 2, 4, 8, 16, 32].choose(self.rng).unwrap());
                }
                Stmt::For(Box::new(ForLoop {
                    var,
                    min: PrimExpr::int(min),
                    extent: PrimExpr::int(extent),
                    kind,
                    body,
                    attrs,
                }))
            }
            StmtCtor::LetStmt => {
                let t = DataType::scalar(*SCALAR_KINDS.choose(self.rng).unwrap());
                let var = self.fresh_var("v", t);
                let b = self.split(budget - 1, &[1, 1]);
                let value = self.expr(t, b[0]);
                self.scope.push_var(var.clone());
                let body = self.stmt(b[1]);
                self.scope.pop_var();
                Stmt::LetStmt {
                    var,
                    value,
                    body: Box::new(body),
                }
            }
            StmtCtor::Seq => {
                let n = if budget >= 4 {
                    self.rng.gen_range(2..=3)
                } else {
                    2
                };
                let b = self.split(budget - 1, &vec![1; n]);
                Stmt::Seq(b.into_iter().map(|bb| self.stmt(bb)).collect())
            }
            StmtCtor::Allocate => {
                let buffer = self.fresh_buffer();
                self.scope.buffers.push(buffer.clone());
                let body = self.stmt(budget - 1);
                self.scope.buffers.pop();
                Stmt::Allocate {
                    buffer,
                    body: Box::new(body),
                }
            }
            StmtCtor::VirtualThread => {
                let var = self.fresh_var("vt", DataType::INT32);
                let k = *[2, 4].choose(self.rng).unwrap();
                self.scope.push_var(var.clone());
                let body = self.stmt(budget - 2);
                self.scope.pop_var();
                Stmt::Attr {
                    key: AttrKey::VirtualThread(var),
                    value: PrimExpr::int(k),
                    body: Box::new(body),
                }
            }
            StmtCtor::UnrollAttr => {
                let v = *[0, 2, 4, 8, 16].choose(self.rng).unwrap();
                Stmt::Attr {
                    key: AttrKey::UnrollMaxSteps,
                    value: PrimExpr::int(v),
                    body: Box::new(self.stmt(budget - 2)),
                }
            }
            StmtCtor::While => self.counted_while(budget),
        }
    }

    pub fn store(&mut self, buf: &Buffer, budget: usize) -> Stmt {
        let mut mins = vec![1; buf.rank() + 1];
        mins[0] = 1;
        let b = self.split(budget.saturating_sub(1).max(buf.rank() + 1), &mins);
        let value = self.expr(buf.dtype, b[0]);
        let indices = buf
            .shape
            .iter()
            .zip(&b[1..])
            .map(|(&d, &bb)| self.index(d, bb))
            .collect();
        Stmt::Store {
            buffer: buf.clone(),
            value,
            indices,
        }
    }

    pub fn fresh_buffer(&mut self) -> Buffer {
        let kind = *SCALAR_KINDS.choose(self.rng).unwrap();
        let shape = if self.rng.gen_bool(0.7) {
            vec![*[1, 2, 4, 8, 16, 32].choose(self.rng).unwrap()]
        } else {
            vec![
                *[2, 4, 8].choose(self.rng).unwrap(),
                *[2, 4, 8, 16].choose(self.rng).unwrap(),
            ]
        };
        let var = self.fresh_var("T", DataType::scalar(kind));
        Buffer::new(var, shape)
    }

    /// `allocate c[1]; while c[0] < n { body; c[0] = c[0] + 1 }`
    fn counted_while(&mut self, budget: usize) -> Stmt {
        let counter = Buffer::new(self.fresh_var("c", DataType::INT32), vec![1]);
        let n = self.rng.gen_range(1..=8);
        let load = PrimExpr::load(&counter, vec![PrimExpr::int(0)]);
        let cond = PrimExpr::binary(BinOp::Lt, load.clone(), PrimExpr::int(n));
        let bump = Stmt::store(
            &counter,
            PrimExpr::add(load, PrimExpr::int(1)),
            vec![PrimExpr::int(0)],
        );
        let body = self.stmt(budget + 1 - WHILE_MIN);
        Stmt::Allocate {
            buffer: counter,
            body: Box::new(Stmt::While {
                cond,
                body: Box::new(Stmt::Seq(vec![body, bump])),
            }),
        }
    }
}

/// Intrinsics producing `t` directly (with vector forms when `vector`).
fn call_ops(t: DataType, vector: bool) -> Vec<Intrinsic> {
    Intrinsic::ALL
        .into_iter()
        .filter(|op| op.accepts(t.kind) && (!vector || op.has_vector_form()))
        .collect()
}
