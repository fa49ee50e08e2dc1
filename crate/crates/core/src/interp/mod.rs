//! Reference big-step interpreter.
//!
//! Cost table: every executed statement or expression node costs one step
//! (vector nodes included), and every loop iteration of `For`, `While` and a
//! virtual-thread `Attr` costs one additional step. All loop kinds run
//! sequentially with identical semantics.

mod ops;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use ops::{binop, cast, intrinsic, Scalar};

use crate::coverage::{
    binop_site, call_site, cast_site, interp_node_site, node_kind_index, trap_site, CoverageHandle,
};
use crate::ir::{AttrKey, Buffer, DataType, NodeRef, PrimExpr, PrimFunc, ScalarKind, Stmt};
use crate::probe;

pub(crate) const PROBES: &[&str] = &[
    "interp.while.enter",
    "interp.while.exit",
    "interp.for.empty",
    "interp.for.iterate",
    "interp.if.then",
    "interp.if.else",
    "interp.if.skip",
    "interp.load.scalar",
    "interp.load.vector",
    "interp.store.scalar",
    "interp.store.vector",
    "interp.allocate",
    "interp.attr.virtual_thread",
    "interp.attr.unroll",
    "interp.ramp",
    "interp.broadcast",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrapKind {
    OutOfBounds,
    DivByZero,
    OverflowChecked,
    UnboundIntrinsic,
    StepLimit,
    AllocLimit,
}

impl TrapKind {
    pub const ALL: [TrapKind; 6] = [
        TrapKind::OutOfBounds,
        TrapKind::DivByZero,
        TrapKind::OverflowChecked,
        TrapKind::UnboundIntrinsic,
        TrapKind::StepLimit,
        TrapKind::AllocLimit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrapKind::OutOfBounds => "out_of_bounds",
            TrapKind::DivByZero => "div_by_zero",
            TrapKind::OverflowChecked => "overflow_checked",
            TrapKind::UnboundIntrinsic => "unbound_intrinsic",
            TrapKind::StepLimit => "step_limit",
            TrapKind::AllocLimit => "alloc_limit",
        }
    }

    pub fn is_resource(self) -> bool {
        matches!(self, TrapKind::StepLimit | TrapKind::AllocLimit)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorValue {
    pub dtype: DataType,
    pub shape: Vec<u32>,
    pub data: Vec<Scalar>,
}

impl TensorValue {
    pub fn scalar(v: Scalar) -> Self {
        TensorValue {
            dtype: DataType::scalar(v.kind()),
            shape: Vec::new(),
            data: vec![v],
        }
    }

    pub fn zeros(dtype: DataType, shape: Vec<u32>) -> Self {
        let n = shape.iter().map(|&d| d as usize).product();
        TensorValue {
            dtype,
            data: vec![Scalar::zero(dtype.kind); n],
            shape,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecStatus {
    Ok,
    Trap(TrapKind),
    ResourceExceeded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExecOutcome {
    pub status: ExecStatus,
    pub outputs: Vec<TensorValue>,
    pub step_count: u64,
    pub trap_detail: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub max_steps: u64,
    pub max_alloc: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_steps: 1_000_000,
            max_alloc: 1 << 22,
        }
    }
}

/// The output used when a function has no buffers at all, so that a
/// successful run always yields at least one tensor.
pub fn unit_output() -> TensorValue {
    TensorValue::scalar(Scalar::I32(0))
}

#[derive(Debug)]
struct Stop {
    kind: TrapKind,
    detail: String,
}

type Exec<T> = Result<T, Stop>;

#[derive(Clone, Debug)]
enum Value {
    S(Scalar),
    V(Vec<Scalar>),
}

impl Value {
    fn lanes(&self) -> usize {
        match self {
            Value::S(_) => 1,
            Value::V(v) => v.len(),
        }
    }

    fn lane(&self, i: usize) -> Scalar {
        match self {
            Value::S(s) => *s,
            Value::V(v) => v[i],
        }
    }

    fn scalar(&self) -> Scalar {
        match self {
            Value::S(s) => *s,
            Value::V(v) => v[0],
        }
    }
}

struct Slot {
    id: u32,
    dtype: DataType,
    shape: Vec<u32>,
    data: Vec<Scalar>,
}

struct Machine<'c> {
    vars: Vec<(u32, Value)>,
    buffers: Vec<Slot>,
    steps: u64,
    limits: Limits,
    live_alloc: u64,
    depth: usize,
    cov: &'c mut CoverageHandle,
}

impl Machine<'_> {
    fn trap(&mut self, kind: TrapKind, detail: impl Into<String>) -> Stop {
        self.cov.hit(trap_site(kind));
        Stop {
            kind,
            detail: detail.into(),
        }
    }

    #[inline]
    fn tick(&mut self) -> Exec<()> {
        self.steps += 1;
        if self.steps > self.limits.max_steps {
            return Err(self.trap(TrapKind::StepLimit, "step limit exceeded"));
        }
        Ok(())
    }

    #[inline]
    fn visit(&mut self, node: NodeRef<'_>) -> Exec<()> {
        self.cov
            .hit(interp_node_site(node_kind_index(node), self.depth));
        self.tick()
    }

    fn lookup_var(&self, id: u32) -> &Value {
        &self
            .vars
            .iter()
            .rev()
            .find(|(v, _)| *v == id)
            .expect("validated function has no free variables")
            .1
    }

    fn slot_index(&self, buf: &Buffer) -> usize {
        self.buffers
            .iter()
            .rposition(|s| s.id == buf.var.id)
            .expect("validated function only touches declared buffers")
    }

    fn flat_offsets(&mut self, slot: usize, buf: &Buffer, idx: &[Value]) -> Exec<Vec<usize>> {
        let lanes = idx.iter().map(Value::lanes).max().unwrap_or(1);
        let mut out = Vec::with_capacity(lanes);
        for lane in 0..lanes {
            let mut flat = 0usize;
            for (d, v) in idx.iter().enumerate() {
                let dim = self.buffers[slot].shape[d];
                let i = v.lane(lane).as_i64().expect("int32 index");
                if i < 0 || i >= dim as i64 {
                    return Err(self.trap(
                        TrapKind::OutOfBounds,
                        format!(
                            "index {i} out of bounds for dim {d} of {} (extent {dim})",
                            buf.var
                        ),
                    ));
                }
                flat = flat * dim as usize + i as usize;
            }
            out.push(flat);
        }
        Ok(out)
    }

    fn eval(&mut self, e: &PrimExpr) -> Exec<Value> {
        self.visit(NodeRef::Expr(e))?;
        match e {
            PrimExpr::Var(v) => Ok(self.lookup_var(v.id).clone()),
            PrimExpr::IntImm(t, v) => Ok(Value::S(Scalar::from_int_imm(*t, *v))),
            PrimExpr::FloatImm(_, v) => Ok(Value::S(Scalar::F32(*v as f32))),
            PrimExpr::Binary(op, l, r) => {
                let a = self.eval(l)?;
                let b = self.eval(r)?;
                let lanes = a.lanes().max(b.lanes());
                let t = DataType::vector(a.lane(0).kind(), lanes as u16);
                self.cov.hit(binop_site(*op, t));
                if lanes == 1 {
                    return match binop(*op, a.scalar(), b.scalar()) {
                        Ok(v) => Ok(Value::S(v)),
                        Err(k) => Err(self.trap(k, format!("{} by zero", op.name()))),
                    };
                }
                let mut out = Vec::with_capacity(lanes);
                for i in 0..lanes {
                    match binop(*op, a.lane(i), b.lane(i)) {
                        Ok(v) => out.push(v),
                        Err(k) => {
                            return Err(self.trap(k, format!("{} by zero in lane {i}", op.name())))
                        }
                    }
                }
                Ok(Value::V(out))
            }
            PrimExpr::Call { op, args, dtype } => {
                let vals = args
                    .iter()
                    .map(|a| self.eval(a))
                    .collect::<Exec<Vec<_>>>()?;
                let vector = dtype.lanes > 1;
                self.cov.hit(call_site(*op, vector));
                if !vector {
                    let s: Vec<Scalar> = vals.iter().map(Value::scalar).collect();
                    return Ok(Value::S(intrinsic(*op, &s)));
                }
                if !op.has_vector_form() {
                    return Err(self.trap(
                        TrapKind::UnboundIntrinsic,
                        format!("no vector implementation of {} for {dtype}", op.name()),
                    ));
                }
                let lanes = dtype.lanes as usize;
                Ok(Value::V(
                    (0..lanes)
                        .map(|i| {
                            let s: Vec<Scalar> = vals.iter().map(|v| v.lane(i)).collect();
                            intrinsic(*op, &s)
                        })
                        .collect(),
                ))
            }
            PrimExpr::Cast(t, v) => {
                let x = self.eval(v)?;
                self.cov.hit(cast_site(x.lane(0).kind(), t.kind));
                let mut out = Vec::with_capacity(x.lanes());
                for i in 0..x.lanes() {
                    match cast(x.lane(i), t.kind) {
                        Ok(c) => out.push(c),
                        Err(k) => {
                            return Err(self.trap(k, format!("cast of {:?} to {t}", x.lane(i))))
                        }
                    }
                }
                Ok(if out.len() == 1 && t.lanes == 1 {
                    Value::S(out[0])
                } else {
                    Value::V(out)
                })
            }
            PrimExpr::Let { var, value, body } => {
                let v = self.eval(value)?;
                self.vars.push((var.id, v));
                let r = self.eval(body);
                self.vars.pop();
                r
            }
            PrimExpr::Load { buffer, indices } => {
                let idx = indices
                    .iter()
                    .map(|i| self.eval(i))
                    .collect::<Exec<Vec<_>>>()?;
                let slot = self.slot_index(buffer);
                let offs = self.flat_offsets(slot, buffer, &idx)?;
                let data = &self.buffers[slot].data;
                if offs.len() == 1 {
                    let v = data[offs[0]];
                    probe!(self.cov, "interp.load.scalar");
                    Ok(Value::S(v))
                } else {
                    let v = offs.iter().map(|&o| data[o]).collect();
                    probe!(self.cov, "interp.load.vector");
                    Ok(Value::V(v))
                }
            }
            PrimExpr::Ramp {
                base,
                stride,
                lanes,
            } => {
                let b = self.eval(base)?.scalar();
                let s = self.eval(stride)?.scalar();
                probe!(self.cov, "interp.ramp");
                let (Scalar::I32(b), Scalar::I32(s)) = (b, s) else {
                    unreachable!("ramp operands are int32")
                };
                Ok(Value::V(
                    (0..*lanes as i32)
                        .map(|i| Scalar::I32(b.wrapping_add(s.wrapping_mul(i))))
                        .collect(),
                ))
            }
            PrimExpr::Broadcast { value, lanes } => {
                let v = self.eval(value)?.scalar();
                probe!(self.cov, "interp.broadcast");
                Ok(Value::V(vec![v; *lanes as usize]))
            }
        }
    }

    fn exec(&mut self, s: &Stmt) -> Exec<()> {
        self.visit(NodeRef::Stmt(s))?;
        match s {
            Stmt::While { cond, body } => {
                self.depth += 1;
                let mut entered = false;
                let r = loop {
                    match self.eval(cond) {
                        Ok(c) if c.scalar().as_bool() => {}
                        Ok(_) => break Ok(()),
                        Err(e) => break Err(e),
                    }
                    if !entered {
                        probe!(self.cov, "interp.while.enter");
                        entered = true;
                    }
                    if let Err(e) = self.tick().and_then(|_| self.exec(body)) {
                        break Err(e);
                    }
                };
                self.depth -= 1;
                if r.is_ok() {
                    probe!(self.cov, "interp.while.exit");
                }
                r
            }
            Stmt::For(l) => {
                let min = self.eval(&l.min)?.scalar().as_i64().expect("int32 min");
                let extent = self
                    .eval(&l.extent)?
                    .scalar()
                    .as_i64()
                    .expect("int32 extent");
                if extent <= 0 {
                    probe!(self.cov, "interp.for.empty");
                    return Ok(());
                }
                probe!(self.cov, "interp.for.iterate");
                self.depth += 1;
                self.vars.push((l.var.id, Value::S(Scalar::I32(0))));
                let mut r = Ok(());
                for k in 0..extent {
                    let i = (min + k) as i32;
                    self.vars.last_mut().unwrap().1 = Value::S(Scalar::I32(i));
                    r = self.tick().and_then(|_| self.exec(&l.body));
                    if r.is_err() {
                        break;
                    }
                }
                self.vars.pop();
                self.depth -= 1;
                r
            }
            Stmt::IfThenElse {
                cond,
                then_case,
                else_case,
            } => {
                if self.eval(cond)?.scalar().as_bool() {
                    probe!(self.cov, "interp.if.then");
                    self.exec(then_case)
                } else if let Some(e) = else_case {
                    probe!(self.cov, "interp.if.else");
                    self.exec(e)
                } else {
                    probe!(self.cov, "interp.if.skip");
                    Ok(())
                }
            }
            Stmt::LetStmt { var, value, body } => {
                let v = self.eval(value)?;
                self.vars.push((var.id, v));
                let r = self.exec(body);
                self.vars.pop();
                r
            }
            Stmt::Seq(stmts) => {
                for st in stmts {
                    self.exec(st)?;
                }
                Ok(())
            }
            Stmt::Store {
                buffer,
                value,
                indices,
            } => {
                let v = self.eval(value)?;
                let idx = indices
                    .iter()
                    .map(|i| self.eval(i))
                    .collect::<Exec<Vec<_>>>()?;
                let slot = self.slot_index(buffer);
                let offs = self.flat_offsets(slot, buffer, &idx)?;
                if offs.len() == 1 {
                    probe!(self.cov, "interp.store.scalar");
                } else {
                    probe!(self.cov, "interp.store.vector");
                }
                let data = &mut self.buffers[slot].data;
                for (lane, &o) in offs.iter().enumerate() {
                    data[o] = v.lane(lane.min(v.lanes() - 1));
                }
                Ok(())
            }
            Stmt::Allocate { buffer, body } => {
                probe!(self.cov, "interp.allocate");
                let n = buffer.num_elements();
                self.live_alloc += n;
                if self.live_alloc > self.limits.max_alloc {
                    return Err(self.trap(TrapKind::AllocLimit, "allocation limit exceeded"));
                }
                self.buffers.push(Slot {
                    id: buffer.var.id,
                    dtype: buffer.dtype,
                    shape: buffer.shape.clone(),
                    data: vec![Scalar::zero(buffer.dtype.kind); n as usize],
                });
                let r = self.exec(body);
                self.buffers.pop();
                self.live_alloc -= n;
                r
            }
            Stmt::Attr { key, value, body } => match key {
                AttrKey::VirtualThread(var) => {
                    probe!(self.cov, "interp.attr.virtual_thread");
                    let k = self
                        .eval(value)?
                        .scalar()
                        .as_i64()
                        .expect("int32 thread count");
                    self.vars.push((var.id, Value::S(Scalar::I32(0))));
                    let mut r = Ok(());
                    for t in 0..k.max(0) {
                        self.vars.last_mut().unwrap().1 = Value::S(Scalar::I32(t as i32));
                        r = self.tick().and_then(|_| self.exec(body));
                        if r.is_err() {
                            break;
                        }
                    }
                    self.vars.pop();
                    r
                }
                AttrKey::UnrollMaxSteps => {
                    probe!(self.cov, "interp.attr.unroll");
                    self.eval(value)?;
                    self.exec(body)
                }
            },
            Stmt::Evaluate(e) => self.eval(e).map(|_| ()),
            Stmt::Nop => Ok(()),
        }
    }
}

/// Runs `func` on `inputs` (one tensor per parameter, scalars with shape
/// `[]`). Outputs are the final contents of the parameter buffers in
/// parameter order followed by the return buffer.
pub fn execute(func: &PrimFunc, inputs: &[TensorValue], limits: Limits) -> ExecOutcome {
    execute_with_coverage(func, inputs, limits, &mut CoverageHandle::new())
}

pub fn execute_with_coverage(
    func: &PrimFunc,
    inputs: &[TensorValue],
    limits: Limits,
    cov: &mut CoverageHandle,
) -> ExecOutcome {
    assert_eq!(inputs.len(), func.params.len(), "one input per parameter");
    let mut m = Machine {
        vars: Vec::new(),
        buffers: Vec::new(),
        steps: 0,
        limits,
        live_alloc: 0,
        depth: 0,
        cov,
    };
    for (p, input) in func.params.iter().zip(inputs) {
        match func.buffer_for_param(p) {
            Some(b) => {
                assert_eq!(input.shape, b.shape, "input shape for {}", p);
                m.live_alloc += b.num_elements();
                m.buffers.push(Slot {
                    id: b.var.id,
                    dtype: b.dtype,
                    shape: b.shape.clone(),
                    data: input.data.clone(),
                });
            }
            None => m.vars.push((p.id, Value::S(input.data[0]))),
        }
    }
    if let Some(r) = &func.ret_buffer {
        m.live_alloc += r.num_elements();
        m.buffers.push(Slot {
            id: r.var.id,
            dtype: r.dtype,
            shape: r.shape.clone(),
            data: vec![Scalar::zero(r.dtype.kind); r.num_elements() as usize],
        });
    }
    let result = if m.live_alloc > limits.max_alloc {
        Err(m.trap(TrapKind::AllocLimit, "allocation limit exceeded"))
    } else {
        m.exec(&func.body)
    };
    let step_count = m.steps.min(limits.max_steps + 1);
    match result {
        Ok(()) => {
            let global = func.global_buffers().count();
            let mut outputs: Vec<TensorValue> = m
                .buffers
                .drain(..global)
                .map(|slot| TensorValue {
                    dtype: slot.dtype,
                    shape: slot.shape,
                    data: slot.data,
                })
                .collect();
            if outputs.is_empty() {
                outputs.push(unit_output());
            }
            ExecOutcome {
                status: ExecStatus::Ok,
                outputs,
                step_count,
                trap_detail: None,
            }
        }
        Err(stop) => ExecOutcome {
            status: if stop.kind.is_resource() {
                ExecStatus::ResourceExceeded
            } else {
                ExecStatus::Trap(stop.kind)
            },
            outputs: Vec::new(),
            step_count,
            trap_detail: Some(format!("{}: {}", stop.kind.name(), stop.detail)),
        },
    }
}

fn random_scalar(kind: ScalarKind, rng: &mut ChaCha8Rng) -> Scalar {
    match kind {
        ScalarKind::Int32 => Scalar::I32(rng.gen_range(-64..=63)),
        ScalarKind::UInt32 => Scalar::U32(rng.gen_range(0..=127)),
        ScalarKind::Float32 => Scalar::F32(rng.gen_range(-2.0f32..=2.0)),
        ScalarKind::Bool => Scalar::Bool(rng.gen()),
    }
}

/// Deterministic inputs for `func`: ints uniform in `[-64, 63]` (uint32 in
/// `[0, 127]`), floats uniform in `[-2, 2]`, bools uniform.
pub fn gen_inputs(func: &PrimFunc, rng_seed: u64) -> Vec<TensorValue> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    func.params
        .iter()
        .map(|p| {
            let (dtype, shape) = match func.buffer_for_param(p) {
                Some(b) => (b.dtype, b.shape.clone()),
                None => (p.dtype, Vec::new()),
            };
            let n: usize = shape.iter().map(|&d| d as usize).product();
            TensorValue {
                dtype,
                data: (0..n)
                    .map(|_| random_scalar(dtype.kind, &mut rng))
                    .collect(),
                shape,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{parse, BinOp, ForKind, Var};

    #[test]
    fn out_of_bounds_store_traps() {
        let a = Var::new("A", DataType::INT32, 0);
        let buf = Buffer::new(a.clone(), vec![4]);
        let f = PrimFunc::new(
            vec![a],
            vec![buf.clone()],
            Stmt::store(&buf, PrimExpr::int(1), vec![PrimExpr::int(5)]),
        );
        let out = execute(&f, &gen_inputs(&f, 0), Limits::default());
        assert_eq!(out.status, ExecStatus::Trap(TrapKind::OutOfBounds));
        assert!(out.outputs.is_empty());
    }

    #[test]
    fn nonterminating_while_exceeds_step_limit() {
        let f = PrimFunc::new(
            vec![],
            vec![],
            Stmt::While {
                cond: PrimExpr::binary(BinOp::Eq, PrimExpr::int(0), PrimExpr::int(0)),
                body: Box::new(Stmt::Nop),
            },
        );
        let limits = Limits {
            max_steps: 1000,
            ..Limits::default()
        };
        let out = execute(&f, &[], limits);
        assert_eq!(out.status, ExecStatus::ResourceExceeded);
        assert_eq!(out.step_count, 1001);
    }

    #[test]
    fn gen_inputs_is_deterministic_and_in_range() {
        let f = parse(
            "(primfunc (params (var A.0 float32) (var n.1 int32))
               (buffers (buffer A.0 float32 (shape 2 3)))
               (body (nop)))",
        )
        .unwrap();
        let a = gen_inputs(&f, 0);
        assert_eq!(a, gen_inputs(&f, 0));
        assert_eq!(a[0].data.len(), 6);
        assert!(a[0]
            .data
            .iter()
            .all(|s| matches!(s, Scalar::F32(v) if (-2.0..=2.0).contains(v))));
        assert!(gen_inputs(&PrimFunc::empty(), 0).is_empty());
    }

    #[test]
    fn vector_popcount_is_unbound() {
        let f = PrimFunc::new(
            vec![],
            vec![],
            Stmt::Evaluate(PrimExpr::Call {
                dtype: DataType::vector(ScalarKind::Int32, 4),
                op: crate::ir::Intrinsic::Popcount,
                args: vec![PrimExpr::Broadcast {
                    value: Box::new(PrimExpr::int(3)),
                    lanes: 4,
                }],
            }),
        );
        let out = execute(&f, &[], Limits::default());
        assert_eq!(out.status, ExecStatus::Trap(TrapKind::UnboundIntrinsic));
    }

    #[test]
    fn loop_kinds_share_semantics() {
        let mk = |kind| {
            let a = Var::new("A", DataType::INT32, 0);
            let i = Var::new("i", DataType::INT32, 1);
            let buf = Buffer::new(a.clone(), vec![4]);
            PrimFunc::new(
                vec![a],
                vec![buf.clone()],
                Stmt::for_loop(
                    i.clone(),
                    PrimExpr::int(0),
                    PrimExpr::int(4),
                    kind,
                    Stmt::store(&buf, PrimExpr::var(&i), vec![PrimExpr::var(&i)]),
                ),
            )
        };
        let base = execute(
            &mk(ForKind::Serial),
            &gen_inputs(&mk(ForKind::Serial), 1),
            Limits::default(),
        );
        for kind in ForKind::ALL {
            let f = mk(kind);
            assert_eq!(execute(&f, &gen_inputs(&f, 1), Limits::default()), base);
        }
    }
}
