use thiserror::Error;

use super::{BinOp, Buffer, DataType, PrimExpr, ScalarKind, Var, MAX_LANES};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TypeError {
    #[error("type mismatch in {op}: {lhs} vs {rhs}")]
    Mismatch {
        op: &'static str,
        lhs: DataType,
        rhs: DataType,
    },
    #[error("unbound variable {0}")]
    UnboundVariable(String),
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> TypeError {
    TypeError::Invalid(msg.into())
}

/// Lexical scope: value variables and buffers visible at some position.
/// Lookups scan from the innermost binding outward.
#[derive(Clone, Debug, Default)]
pub struct Scope {
    pub vars: Vec<Var>,
    pub buffers: Vec<Buffer>,
}

impl Scope {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn lookup_var(&self, id: u32) -> Option<&Var> {
        self.vars.iter().rev().find(|v| v.id == id)
    }

    pub fn lookup_buffer(&self, id: u32) -> Option<&Buffer> {
        self.buffers.iter().rev().find(|b| b.var.id == id)
    }

    pub fn push_var(&mut self, v: Var) {
        self.vars.push(v);
    }

    pub fn pop_var(&mut self) {
        self.vars.pop();
    }
}

fn check_lanes(lanes: u16) -> Result<(), TypeError> {
    if (2..=MAX_LANES).contains(&lanes) {
        Ok(())
    } else {
        Err(invalid(format!("vector lanes {lanes} out of range")))
    }
}

/// Infers the data type of `expr` under `scope`. No implicit conversions:
/// operands of arithmetic and comparisons must agree exactly.
pub fn infer_dtype(expr: &PrimExpr, scope: &mut Scope) -> Result<DataType, TypeError> {
    match expr {
        PrimExpr::Var(v) => match scope.lookup_var(v.id) {
            Some(bound) if bound == v => Ok(v.dtype),
            Some(bound) => Err(invalid(format!(
                "reference {v}:{} does not match binding {bound}:{}",
                v.dtype, bound.dtype
            ))),
            None => Err(TypeError::UnboundVariable(v.name.to_string())),
        },
        PrimExpr::Binary(op, lhs, rhs) => {
            let l = infer_dtype(lhs, scope)?;
            let r = infer_dtype(rhs, scope)?;
            if l != r {
                return Err(TypeError::Mismatch {
                    op: op.name(),
                    lhs: l,
                    rhs: r,
                });
            }
            match op {
                BinOp::And | BinOp::Or => {
                    if l != DataType::BOOL {
                        return Err(invalid(format!(
                            "{} expects bool operands, got {l}",
                            op.name()
                        )));
                    }
                    Ok(DataType::BOOL)
                }
                BinOp::Eq | BinOp::Gt | BinOp::Lt => {
                    if !l.is_scalar() {
                        return Err(invalid(format!("{} on vector operands", op.name())));
                    }
                    if *op != BinOp::Eq && !l.kind.is_numeric() {
                        return Err(invalid(format!("{} expects numeric operands", op.name())));
                    }
                    Ok(DataType::BOOL)
                }
                _ => {
                    if !l.kind.is_numeric() {
                        return Err(invalid(format!("{} expects numeric operands", op.name())));
                    }
                    Ok(l)
                }
            }
        }
        PrimExpr::Call { dtype, op, args } => {
            if args.len() != op.arity() {
                return Err(invalid(format!(
                    "{} expects {} args, got {}",
                    op.name(),
                    op.arity(),
                    args.len()
                )));
            }
            let mut arg_ty = None;
            for a in args {
                let t = infer_dtype(a, scope)?;
                match arg_ty {
                    None => arg_ty = Some(t),
                    Some(prev) if prev != t => {
                        return Err(TypeError::Mismatch {
                            op: op.name(),
                            lhs: prev,
                            rhs: t,
                        })
                    }
                    _ => {}
                }
            }
            let t = arg_ty.expect("arity >= 1");
            if !op.accepts(t.kind) {
                return Err(invalid(format!("{} does not accept {t}", op.name())));
            }
            if *dtype != t {
                return Err(TypeError::Mismatch {
                    op: op.name(),
                    lhs: *dtype,
                    rhs: t,
                });
            }
            Ok(t)
        }
        PrimExpr::Cast(dtype, value) => {
            let t = infer_dtype(value, scope)?;
            if !dtype.is_well_formed() {
                return Err(invalid(format!("ill-formed cast type {dtype}")));
            }
            if t.lanes != dtype.lanes {
                return Err(invalid(format!("cast changes lanes {t} -> {dtype}")));
            }
            Ok(*dtype)
        }
        PrimExpr::Let { var, value, body } => {
            let t = infer_dtype(value, scope)?;
            if t != var.dtype {
                return Err(TypeError::Mismatch {
                    op: "let",
                    lhs: var.dtype,
                    rhs: t,
                });
            }
            scope.push_var(var.clone());
            let r = infer_dtype(body, scope);
            scope.pop_var();
            r
        }
        PrimExpr::Load { buffer, indices } => {
            if indices.len() != buffer.rank() {
                return Err(invalid(format!(
                    "load of {} with {} indices, rank {}",
                    buffer.var,
                    indices.len(),
                    buffer.rank()
                )));
            }
            let lanes = index_lanes(indices, scope)?;
            Ok(buffer.dtype.with_lanes(lanes))
        }
        PrimExpr::FloatImm(dt, v) => {
            if *dt != DataType::FLOAT32 {
                return Err(invalid(format!("float immediate of type {dt}")));
            }
            if !v.is_finite() || (*v as f32) as f64 != *v {
                return Err(invalid(format!("float immediate {v} not a finite float32")));
            }
            Ok(*dt)
        }
        PrimExpr::IntImm(dt, v) => {
            let ok = match (dt.kind, dt.lanes) {
                (ScalarKind::Int32, 1) => i32::try_from(*v).is_ok(),
                (ScalarKind::UInt32, 1) => u32::try_from(*v).is_ok(),
                (ScalarKind::Bool, 1) => *v == 0 || *v == 1,
                _ => false,
            };
            if ok {
                Ok(*dt)
            } else {
                Err(invalid(format!("immediate {v} not representable as {dt}")))
            }
        }
        PrimExpr::Ramp {
            base,
            stride,
            lanes,
        } => {
            check_lanes(*lanes)?;
            for part in [base, stride] {
                let t = infer_dtype(part, scope)?;
                if t != DataType::INT32 {
                    return Err(TypeError::Mismatch {
                        op: "ramp",
                        lhs: DataType::INT32,
                        rhs: t,
                    });
                }
            }
            Ok(DataType::vector(ScalarKind::Int32, *lanes))
        }
        PrimExpr::Broadcast { value, lanes } => {
            check_lanes(*lanes)?;
            let t = infer_dtype(value, scope)?;
            if !t.is_scalar() || t.kind == ScalarKind::Bool {
                return Err(invalid(format!("cannot broadcast {t}")));
            }
            Ok(t.with_lanes(*lanes))
        }
    }
}

/// Lane count of an index tuple: every index is int32, scalar or all
/// vector indices agree on lanes.
pub(crate) fn index_lanes(indices: &[PrimExpr], scope: &mut Scope) -> Result<u16, TypeError> {
    let mut lanes = 1u16;
    for idx in indices {
        let t = infer_dtype(idx, scope)?;
        if t.kind != ScalarKind::Int32 {
            return Err(invalid(format!("index of type {t}, expected int32")));
        }
        if t.lanes != 1 {
            if lanes != 1 && lanes != t.lanes {
                return Err(invalid("indices disagree on lanes"));
            }
            lanes = t.lanes;
        }
    }
    Ok(lanes)
}
