use std::collections::HashSet;
use std::fmt;

use super::dtype::index_lanes;
use super::{
    infer_dtype, AttrKey, Buffer, DataType, NodePath, PrimExpr, PrimFunc, Scope, Stmt, Var,
    MAX_BUFFER_ELEMS, MAX_UNROLL_STEPS, MAX_VIRTUAL_THREADS,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    /// Position of the offending statement, or `None` for function-level
    /// problems (parameters, buffer declarations).
    pub path: Option<NodePath>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.path {
            Some(p) => write!(f, "at {:?}: {}", p.0, self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationResult {
    pub violations: Vec<Violation>,
}

impl ValidationResult {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(|v| v.message.clone()).collect()
    }
}

struct Validator {
    violations: Vec<Violation>,
}

impl Validator {
    fn report(&mut self, path: Option<&[u16]>, message: impl Into<String>) {
        self.violations.push(Violation {
            path: path.map(|p| NodePath(p.to_vec())),
            message: message.into(),
        });
    }

    fn check_var(&mut self, v: &Var) {
        if !Var::is_valid_name(&v.name) {
            self.report(None, format!("invalid variable name {:?}", &*v.name));
        }
        if !v.dtype.is_well_formed() {
            self.report(None, format!("ill-formed dtype {} on {v}", v.dtype));
        }
    }

    fn check_buffer_decl(&mut self, b: &Buffer) {
        self.check_var(&b.var);
        if b.shape.is_empty() || b.shape.contains(&0) {
            self.report(
                None,
                format!("buffer {} has invalid shape {:?}", b.var, b.shape),
            );
        } else if b.num_elements() > MAX_BUFFER_ELEMS {
            self.report(
                None,
                format!("buffer {} exceeds {MAX_BUFFER_ELEMS} elements", b.var),
            );
        }
        if !b.dtype.is_scalar() || b.dtype != b.var.dtype {
            self.report(
                None,
                format!("buffer {} has inconsistent dtype {}", b.var, b.dtype),
            );
        }
    }

    fn expr(&mut self, e: &PrimExpr, scope: &mut Scope, path: &[u16]) -> Option<DataType> {
        if let Some(msg) = undeclared_buffer(e, scope) {
            self.report(Some(path), msg);
            return None;
        }
        match infer_dtype(e, scope) {
            Ok(t) => Some(t),
            Err(err) => {
                self.report(Some(path), err.to_string());
                None
            }
        }
    }

    fn buffer_ref(&mut self, b: &Buffer, scope: &Scope, path: &[u16]) -> bool {
        match scope.lookup_buffer(b.var.id) {
            Some(decl) if decl == b => true,
            Some(_) => {
                self.report(
                    Some(path),
                    format!("buffer {} does not match its declaration", b.var),
                );
                false
            }
            None => {
                self.report(Some(path), format!("undeclared buffer {}", b.var.name));
                false
            }
        }
    }

    fn stmt(&mut self, s: &Stmt, scope: &mut Scope, path: &mut Vec<u16>) {
        match s {
            Stmt::While { cond, body } => {
                path.push(0);
                let t = self.expr(cond, scope, path);
                path.pop();
                if t.is_some_and(|t| t != DataType::BOOL) {
                    self.report(Some(path), "While condition must be bool");
                }
                path.push(1);
                self.stmt(body, scope, path);
                path.pop();
            }
            Stmt::For(l) => {
                for (i, e) in [&l.min, &l.extent].into_iter().enumerate() {
                    path.push(i as u16);
                    let t = self.expr(e, scope, path);
                    path.pop();
                    if t.is_some_and(|t| t != DataType::INT32) {
                        self.report(Some(path), "For bounds must be int32");
                    }
                }
                if l.var.dtype != DataType::INT32 {
                    self.report(Some(path), "loop variable must be int32");
                }
                if l.attrs
                    .unroll_max_steps
                    .is_some_and(|s| s > MAX_UNROLL_STEPS)
                {
                    self.report(Some(path), "unroll_max_steps exceeds 1024");
                }
                scope.push_var(l.var.clone());
                path.push(2);
                self.stmt(&l.body, scope, path);
                path.pop();
                scope.pop_var();
            }
            Stmt::IfThenElse {
                cond,
                then_case,
                else_case,
            } => {
                path.push(0);
                let t = self.expr(cond, scope, path);
                path.pop();
                if t.is_some_and(|t| t != DataType::BOOL) {
                    self.report(Some(path), "IfThenElse condition must be bool");
                }
                path.push(1);
                self.stmt(then_case, scope, path);
                path.pop();
                if let Some(e) = else_case {
                    path.push(2);
                    self.stmt(e, scope, path);
                    path.pop();
                }
            }
            Stmt::LetStmt { var, value, body } => {
                path.push(0);
                let t = self.expr(value, scope, path);
                path.pop();
                if t.is_some_and(|t| t != var.dtype) {
                    self.report(
                        Some(path),
                        format!("LetStmt value does not match {}", var.dtype),
                    );
                }
                scope.push_var(var.clone());
                path.push(1);
                self.stmt(body, scope, path);
                path.pop();
                scope.pop_var();
            }
            Stmt::Seq(stmts) => {
                if stmts.is_empty() {
                    self.report(Some(path), "empty SeqStmt");
                }
                for (i, c) in stmts.iter().enumerate() {
                    path.push(i as u16);
                    self.stmt(c, scope, path);
                    path.pop();
                }
            }
            Stmt::Store {
                buffer,
                value,
                indices,
            } => {
                if !self.buffer_ref(buffer, scope, path) {
                    return;
                }
                path.push(0);
                let vt = self.expr(value, scope, path);
                path.pop();
                let mut ok = true;
                for (i, idx) in indices.iter().enumerate() {
                    path.push(i as u16 + 1);
                    ok &= self.expr(idx, scope, path).is_some();
                    path.pop();
                }
                if indices.len() != buffer.rank() {
                    self.report(
                        Some(path),
                        format!(
                            "store to {} with {} indices, rank {}",
                            buffer.var,
                            indices.len(),
                            buffer.rank()
                        ),
                    );
                    return;
                }
                if !ok {
                    return;
                }
                match index_lanes(indices, scope) {
                    Ok(lanes) => {
                        if let Some(vt) = vt {
                            if vt != buffer.dtype.with_lanes(lanes) {
                                self.report(
                                    Some(path),
                                    format!(
                                        "store of {vt} into {} buffer with {lanes} lanes",
                                        buffer.dtype
                                    ),
                                );
                            }
                        }
                    }
                    Err(e) => self.report(Some(path), e.to_string()),
                }
            }
            Stmt::Allocate { buffer, body } => {
                self.check_buffer_decl(buffer);
                scope.buffers.push(buffer.clone());
                path.push(0);
                self.stmt(body, scope, path);
                path.pop();
                scope.buffers.pop();
            }
            Stmt::Attr { key, value, body } => {
                path.push(0);
                let t = self.expr(value, scope, path);
                path.pop();
                if t.is_some_and(|t| t != DataType::INT32) {
                    self.report(Some(path), "attribute value must be int32");
                }
                let (lo, hi) = match key {
                    AttrKey::VirtualThread(_) => (1, MAX_VIRTUAL_THREADS),
                    AttrKey::UnrollMaxSteps => (0, MAX_UNROLL_STEPS as i64),
                };
                match value.as_int_imm() {
                    Some(v) if (lo..=hi).contains(&v) => {}
                    _ => self.report(
                        Some(path),
                        format!("{} value must be a constant in [{lo}, {hi}]", key.name()),
                    ),
                }
                let bound = match key {
                    AttrKey::VirtualThread(v) => {
                        if v.dtype != DataType::INT32 {
                            self.report(Some(path), "virtual thread variable must be int32");
                        }
                        scope.push_var(v.clone());
                        true
                    }
                    AttrKey::UnrollMaxSteps => false,
                };
                path.push(1);
                self.stmt(body, scope, path);
                path.pop();
                if bound {
                    scope.pop_var();
                }
            }
            Stmt::Evaluate(e) => {
                path.push(0);
                self.expr(e, scope, path);
                path.pop();
            }
            Stmt::Nop => {}
        }
    }
}

/// First load of a buffer that is not in scope, if any.
fn undeclared_buffer(e: &PrimExpr, scope: &Scope) -> Option<String> {
    let mut found = None;
    super::visit::for_each_expr(e, &mut |sub| {
        if found.is_some() {
            return;
        }
        if let PrimExpr::Load { buffer, .. } = sub {
            match scope.lookup_buffer(buffer.var.id) {
                Some(decl) if decl == buffer => {}
                Some(_) => {
                    found = Some(format!(
                        "buffer {} does not match its declaration",
                        buffer.var
                    ))
                }
                None => found = Some(format!("undeclared buffer {}", buffer.var.name)),
            }
        }
    });
    found
}

/// Checks every structural, scoping and typing invariant of `func`.
/// Never panics; problems are returned as data.
pub fn validate(func: &PrimFunc) -> ValidationResult {
    let mut v = Validator {
        violations: Vec::new(),
    };

    let mut seen = HashSet::new();
    for b in super::visit::binders(func) {
        if !seen.insert(b.id) {
            v.report(None, format!("duplicate binding id {} ({})", b.id, b.name));
        }
    }

    for p in &func.params {
        v.check_var(p);
    }
    let mut bound_params = HashSet::new();
    for b in &func.buffers {
        v.check_buffer_decl(b);
        if !func.params.contains(&b.var) {
            v.report(
                None,
                format!("buffer {} is not bound to a parameter", b.var),
            );
        } else if !bound_params.insert(b.var.id) {
            v.report(None, format!("parameter {} bound to two buffers", b.var));
        }
    }
    if let Some(r) = &func.ret_buffer {
        v.check_buffer_decl(r);
        if func.params.iter().any(|p| p.id == r.var.id) {
            v.report(None, "return buffer aliases a parameter");
        }
    }

    let mut scope = Scope::new();
    scope.vars.extend(func.scalar_params().cloned());
    scope.buffers.extend(func.global_buffers().cloned());
    v.stmt(&func.body, &mut scope, &mut Vec::new());
    ValidationResult {
        violations: v.violations,
    }
}

/// Convenience for callers that only need a yes/no answer.
pub fn is_valid(func: &PrimFunc) -> bool {
    validate(func).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{BinOp, ForKind};

    #[test]
    fn minimal_function_is_ok() {
        let a = Var::new("a", DataType::INT32, 0);
        let f = PrimFunc::new(vec![a.clone()], vec![], Stmt::Evaluate(PrimExpr::var(&a)));
        assert!(validate(&f).is_ok());
    }

    #[test]
    fn unbound_variable_is_reported() {
        let b = Var::new("b", DataType::INT32, 0);
        let f = PrimFunc::new(vec![], vec![], Stmt::Evaluate(PrimExpr::var(&b)));
        assert_eq!(validate(&f).messages(), ["unbound variable b"]);
    }

    #[test]
    fn while_condition_must_be_bool() {
        let f = PrimFunc::new(
            vec![],
            vec![],
            Stmt::While {
                cond: PrimExpr::int(1),
                body: Box::new(Stmt::Nop),
            },
        );
        assert_eq!(validate(&f).messages(), ["While condition must be bool"]);
    }

    #[test]
    fn loop_variable_is_scoped_to_body() {
        let i = Var::new("i", DataType::INT32, 0);
        let f = PrimFunc::new(
            vec![],
            vec![],
            Stmt::for_loop(
                i.clone(),
                PrimExpr::int(0),
                PrimExpr::var(&i),
                ForKind::Serial,
                Stmt::Evaluate(PrimExpr::var(&i)),
            ),
        );
        assert_eq!(validate(&f).messages(), ["unbound variable i"]);
    }

    #[test]
    fn store_arity_and_buffer_scope() {
        let a = Var::new("A", DataType::INT32, 0);
        let buf = Buffer::new(a.clone(), vec![2, 2]);
        let f = PrimFunc::new(
            vec![a.clone()],
            vec![buf.clone()],
            Stmt::store(&buf, PrimExpr::int(1), vec![PrimExpr::int(0)]),
        );
        assert!(!validate(&f).is_ok());

        let t = Buffer::new(Var::new("T", DataType::INT32, 1), vec![4]);
        let g = PrimFunc::new(
            vec![],
            vec![],
            Stmt::Evaluate(PrimExpr::load(&t, vec![PrimExpr::int(0)])),
        );
        assert_eq!(validate(&g).messages(), ["undeclared buffer T"]);
    }

    #[test]
    fn duplicate_binding_ids() {
        let a = Var::new("a", DataType::INT32, 0);
        let b = Var::new("b", DataType::INT32, 0);
        let f = PrimFunc::new(
            vec![a],
            vec![],
            Stmt::LetStmt {
                var: b,
                value: PrimExpr::int(0),
                body: Box::new(Stmt::Nop),
            },
        );
        assert!(validate(&f).messages()[0].starts_with("duplicate binding id 0"));
    }

    #[test]
    fn handle_variables_are_not_values() {
        let a = Var::new("A", DataType::INT32, 0);
        let buf = Buffer::new(a.clone(), vec![2]);
        let f = PrimFunc::new(
            vec![a.clone()],
            vec![buf],
            Stmt::Evaluate(PrimExpr::binary(
                BinOp::Add,
                PrimExpr::var(&a),
                PrimExpr::int(1),
            )),
        );
        assert!(!validate(&f).is_ok());
    }
}
