//! Canonical S-expression text format (`.tir` files).
//!
//! ```text
//! file    := "(primfunc" params buffers? ret? body ")"
//! params  := "(params" vardecl* ")"
//! buffers := "(buffers" bufdecl* ")"
//! ret     := "(ret" bufdecl ")"
//! body    := "(body" stmt ")"
//! vardecl := "(var" NAME "." ID DTYPE ")"
//! bufdecl := "(buffer" NAME "." ID DTYPE "(shape" INT+ "))"
//! stmt    := "(while" expr stmt ")"
//!          | "(for" vardecl KIND expr expr attrs? stmt ")"
//!          | "(if" expr stmt stmt? ")"
//!          | "(letstmt" vardecl expr stmt ")"
//!          | "(seq" stmt+ ")"
//!          | "(store" REF expr expr+ ")"
//!          | "(allocate" bufdecl stmt ")"
//!          | "(attr virtual_thread" vardecl expr stmt ")"
//!          | "(attr unroll_max_steps" expr stmt ")"
//!          | "(evaluate" expr ")" | "(nop)"
//! attrs   := "(attrs" ("(unroll_max_steps" INT ")")? ("(partition_hint" BOOL ")")? ")"
//! expr    := REF | "(imm" DTYPE NUMBER ")"
//!          | "(" BINOP expr expr ")" | "(call" DTYPE INTRIN expr+ ")"
//!          | "(cast" DTYPE expr ")" | "(let" vardecl expr expr ")"
//!          | "(load" REF expr+ ")" | "(ramp" expr expr INT ")"
//!          | "(broadcast" expr INT ")"
//! REF     := NAME "." ID      (resolved against enclosing binders)
//! DTYPE   := ("int32" | "uint32" | "float32" | "bool") ("x" LANES)?
//! ```
//!
//! Comments start with `;` and run to the end of the line. Serialization
//! renumbers binder ids canonically, so `parse(serialize(f))` equals
//! `canonicalize(f)`.

use std::fmt::Write as _;

use thiserror::Error;

use super::visit::canonicalize;
use super::{
    AttrKey, BinOp, Buffer, DataType, ForKind, ForLoop, Intrinsic, LoopAttrs, PrimExpr, PrimFunc,
    ScalarKind, Stmt, Var,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

// ---------------------------------------------------------------------------
// printing

fn dtype_str(t: DataType) -> String {
    t.to_string()
}

fn var_decl(v: &Var) -> String {
    format!("(var {}.{} {})", v.name, v.id, dtype_str(v.dtype))
}

fn buf_decl(b: &Buffer) -> String {
    let dims: Vec<String> = b.shape.iter().map(|d| d.to_string()).collect();
    format!(
        "(buffer {}.{} {} (shape {}))",
        b.var.name,
        b.var.id,
        dtype_str(b.dtype),
        dims.join(" ")
    )
}

fn float_str(v: f64) -> String {
    let s = format!("{v:?}");
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

fn expr_str(e: &PrimExpr, out: &mut String) {
    match e {
        PrimExpr::Var(v) => {
            let _ = write!(out, "{}.{}", v.name, v.id);
        }
        PrimExpr::IntImm(t, v) => {
            let _ = write!(out, "(imm {} {v})", dtype_str(*t));
        }
        PrimExpr::FloatImm(t, v) => {
            let _ = write!(out, "(imm {} {})", dtype_str(*t), float_str(*v));
        }
        PrimExpr::Binary(op, l, r) => {
            let _ = write!(out, "({} ", op.name());
            expr_str(l, out);
            out.push(' ');
            expr_str(r, out);
            out.push(')');
        }
        PrimExpr::Call { dtype, op, args } => {
            let _ = write!(out, "(call {} {}", dtype_str(*dtype), op.name());
            for a in args {
                out.push(' ');
                expr_str(a, out);
            }
            out.push(')');
        }
        PrimExpr::Cast(t, v) => {
            let _ = write!(out, "(cast {} ", dtype_str(*t));
            expr_str(v, out);
            out.push(')');
        }
        PrimExpr::Let { var, value, body } => {
            let _ = write!(out, "(let {} ", var_decl(var));
            expr_str(value, out);
            out.push(' ');
            expr_str(body, out);
            out.push(')');
        }
        PrimExpr::Load { buffer, indices } => {
            let _ = write!(out, "(load {}.{}", buffer.var.name, buffer.var.id);
            for i in indices {
                out.push(' ');
                expr_str(i, out);
            }
            out.push(')');
        }
        PrimExpr::Ramp {
            base,
            stride,
            lanes,
        } => {
            out.push_str("(ramp ");
            expr_str(base, out);
            out.push(' ');
            expr_str(stride, out);
            let _ = write!(out, " {lanes})");
        }
        PrimExpr::Broadcast { value, lanes } => {
            out.push_str("(broadcast ");
            expr_str(value, out);
            let _ = write!(out, " {lanes})");
        }
    }
}

fn e(expr: &PrimExpr) -> String {
    let mut s = String::new();
    expr_str(expr, &mut s);
    s
}

fn stmt_str(s: &Stmt, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    match s {
        Stmt::While { cond, body } => {
            let _ = writeln!(out, "{pad}(while {}", e(cond));
            stmt_str(body, indent + 1, out);
            close(out);
        }
        Stmt::For(l) => {
            let _ = write!(
                out,
                "{pad}(for {} {} {} {}",
                var_decl(&l.var),
                l.kind.name(),
                e(&l.min),
                e(&l.extent)
            );
            if !l.attrs.is_empty() {
                out.push_str(" (attrs");
                if let Some(n) = l.attrs.unroll_max_steps {
                    let _ = write!(out, " (unroll_max_steps {n})");
                }
                if let Some(b) = l.attrs.partition_hint {
                    let _ = write!(out, " (partition_hint {b})");
                }
                out.push(')');
            }
            out.push('\n');
            stmt_str(&l.body, indent + 1, out);
            close(out);
        }
        Stmt::IfThenElse {
            cond,
            then_case,
            else_case,
        } => {
            let _ = writeln!(out, "{pad}(if {}", e(cond));
            stmt_str(then_case, indent + 1, out);
            if let Some(el) = else_case {
                out.push('\n');
                stmt_str(el, indent + 1, out);
            }
            close(out);
        }
        Stmt::LetStmt { var, value, body } => {
            let _ = writeln!(out, "{pad}(letstmt {} {}", var_decl(var), e(value));
            stmt_str(body, indent + 1, out);
            close(out);
        }
        Stmt::Seq(v) => {
            let _ = write!(out, "{pad}(seq");
            for c in v {
                out.push('\n');
                stmt_str(c, indent + 1, out);
            }
            close(out);
        }
        Stmt::Store {
            buffer,
            value,
            indices,
        } => {
            let _ = write!(
                out,
                "{pad}(store {}.{} {}",
                buffer.var.name,
                buffer.var.id,
                e(value)
            );
            for i in indices {
                let _ = write!(out, " {}", e(i));
            }
            out.push(')');
        }
        Stmt::Allocate { buffer, body } => {
            let _ = writeln!(out, "{pad}(allocate {}", buf_decl(buffer));
            stmt_str(body, indent + 1, out);
            close(out);
        }
        Stmt::Attr { key, value, body } => {
            match key {
                AttrKey::VirtualThread(v) => {
                    let _ = writeln!(
                        out,
                        "{pad}(attr virtual_thread {} {}",
                        var_decl(v),
                        e(value)
                    );
                }
                AttrKey::UnrollMaxSteps => {
                    let _ = writeln!(out, "{pad}(attr unroll_max_steps {}", e(value));
                }
            }
            stmt_str(body, indent + 1, out);
            close(out);
        }
        Stmt::Evaluate(x) => {
            let _ = write!(out, "{pad}(evaluate {})", e(x));
        }
        Stmt::Nop => {
            let _ = write!(out, "{pad}(nop)");
        }
    }
}

fn close(out: &mut String) {
    out.push(')');
}

/// Renders `func` in canonical form. Binder ids are renumbered first.
pub fn serialize(func: &PrimFunc) -> String {
    let f = canonicalize(func);
    let mut out = String::from("(primfunc\n  (params");
    for p in &f.params {
        let _ = write!(out, " {}", var_decl(p));
    }
    out.push(')');
    if !f.buffers.is_empty() {
        out.push_str("\n  (buffers");
        for b in &f.buffers {
            let _ = write!(out, " {}", buf_decl(b));
        }
        out.push(')');
    }
    if let Some(r) = &f.ret_buffer {
        let _ = write!(out, "\n  (ret {})", buf_decl(r));
    }
    out.push_str("\n  (body\n");
    stmt_str(&f.body, 2, &mut out);
    out.push_str("))\n");
    out
}

// ---------------------------------------------------------------------------
// parsing

#[derive(Debug, Clone)]
enum Sexp {
    Atom(String, usize, usize),
    List(Vec<Sexp>, usize, usize),
}

impl Sexp {
    fn pos(&self) -> (usize, usize) {
        match self {
            Sexp::Atom(_, l, c) | Sexp::List(_, l, c) => (*l, *c),
        }
    }
}

fn err_at(pos: (usize, usize), msg: impl Into<String>) -> ParseError {
    ParseError {
        line: pos.0,
        col: pos.1,
        message: msg.into(),
    }
}

fn read_sexps(text: &str) -> Result<Vec<Sexp>, ParseError> {
    let mut stack: Vec<(Vec<Sexp>, usize, usize)> = vec![(Vec::new(), 1, 1)];
    let mut chars = text.chars().peekable();
    let (mut line, mut col) = (1usize, 1usize);
    while let Some(&c) = chars.peek() {
        match c {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                col += 1;
            }
            ';' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                    col += 1;
                }
            }
            '(' => {
                chars.next();
                stack.push((Vec::new(), line, col));
                col += 1;
            }
            ')' => {
                chars.next();
                if stack.len() == 1 {
                    return Err(err_at((line, col), "unbalanced ')'"));
                }
                let (items, l, cc) = stack.pop().unwrap();
                stack.last_mut().unwrap().0.push(Sexp::List(items, l, cc));
                col += 1;
            }
            _ => {
                let (l, cc) = (line, col);
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    s.push(c);
                    chars.next();
                    col += 1;
                }
                stack.last_mut().unwrap().0.push(Sexp::Atom(s, l, cc));
            }
        }
    }
    if stack.len() != 1 {
        let (_, l, c) = stack.pop().unwrap();
        return Err(err_at((l, c), "unclosed '('"));
    }
    Ok(stack.pop().unwrap().0)
}

fn parse_dtype(s: &str) -> Option<DataType> {
    let (base, lanes) = match s.split_once('x') {
        Some((b, l)) => (b, l.parse::<u16>().ok()?),
        None => (s, 1),
    };
    let kind = ScalarKind::ALL.into_iter().find(|k| k.name() == base)?;
    let t = DataType { kind, lanes };
    t.is_well_formed().then_some(t)
}

fn split_ref(s: &str) -> Option<(&str, u32)> {
    let (name, id) = s.rsplit_once('.')?;
    Var::is_valid_name(name).then_some(())?;
    Some((name, id.parse().ok()?))
}

#[derive(Default)]
struct Env {
    vars: Vec<Var>,
    buffers: Vec<Buffer>,
}

struct Parser {
    env: Env,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn atom<'a>(&self, s: &'a Sexp) -> PResult<&'a str> {
        match s {
            Sexp::Atom(a, ..) => Ok(a),
            Sexp::List(..) => Err(err_at(s.pos(), "expected atom")),
        }
    }

    fn list<'a>(&self, s: &'a Sexp, head: &str) -> PResult<&'a [Sexp]> {
        match s {
            Sexp::List(items, ..) => match items.first() {
                Some(Sexp::Atom(h, ..)) if h == head => Ok(&items[1..]),
                _ => Err(err_at(s.pos(), format!("expected ({head} ...)"))),
            },
            Sexp::Atom(..) => Err(err_at(s.pos(), format!("expected ({head} ...)"))),
        }
    }

    fn int<T: std::str::FromStr>(&self, s: &Sexp) -> PResult<T> {
        self.atom(s)?
            .parse()
            .map_err(|_| err_at(s.pos(), "expected integer"))
    }

    fn dtype(&self, s: &Sexp) -> PResult<DataType> {
        parse_dtype(self.atom(s)?).ok_or_else(|| err_at(s.pos(), "unknown dtype"))
    }

    fn arity(&self, s: &Sexp, items: &[Sexp], n: usize) -> PResult<()> {
        if items.len() == n {
            Ok(())
        } else {
            Err(err_at(
                s.pos(),
                format!("expected {n} operands, got {}", items.len()),
            ))
        }
    }

    fn var_decl(&self, s: &Sexp) -> PResult<Var> {
        let items = self.list(s, "var")?;
        self.arity(s, items, 2)?;
        let (name, id) = split_ref(self.atom(&items[0])?)
            .ok_or_else(|| err_at(items[0].pos(), "bad variable"))?;
        let dtype = self.dtype(&items[1])?;
        Ok(Var::new(name, dtype, id))
    }

    fn buf_decl(&self, s: &Sexp) -> PResult<Buffer> {
        let items = self.list(s, "buffer")?;
        self.arity(s, items, 3)?;
        let (name, id) =
            split_ref(self.atom(&items[0])?).ok_or_else(|| err_at(items[0].pos(), "bad buffer"))?;
        let dtype = self.dtype(&items[1])?;
        let dims = self.list(&items[2], "shape")?;
        let shape = dims
            .iter()
            .map(|d| self.int(d))
            .collect::<PResult<Vec<u32>>>()?;
        Ok(Buffer::new(Var::new(name, dtype, id), shape))
    }

    fn lookup_var(&self, s: &Sexp) -> PResult<Var> {
        let (name, id) =
            split_ref(self.atom(s)?).ok_or_else(|| err_at(s.pos(), "bad variable reference"))?;
        self.env
            .vars
            .iter()
            .rev()
            .find(|v| v.id == id && &*v.name == name)
            .cloned()
            .ok_or_else(|| err_at(s.pos(), format!("unbound variable {name}.{id}")))
    }

    fn lookup_buffer(&self, s: &Sexp) -> PResult<Buffer> {
        let (name, id) =
            split_ref(self.atom(s)?).ok_or_else(|| err_at(s.pos(), "bad buffer reference"))?;
        self.env
            .buffers
            .iter()
            .rev()
            .find(|b| b.var.id == id && &*b.var.name == name)
            .cloned()
            .ok_or_else(|| err_at(s.pos(), format!("undeclared buffer {name}.{id}")))
    }

    fn with_var<T>(&mut self, v: Var, f: impl FnOnce(&mut Self) -> PResult<T>) -> PResult<T> {
        self.env.vars.push(v);
        let r = f(self);
        self.env.vars.pop();
        r
    }

    fn expr(&mut self, s: &Sexp) -> PResult<PrimExpr> {
        let (items, head) = match s {
            Sexp::Atom(..) => return Ok(PrimExpr::Var(self.lookup_var(s)?)),
            Sexp::List(items, ..) => match items.first() {
                Some(Sexp::Atom(h, ..)) => (&items[1..], h.as_str()),
                _ => return Err(err_at(s.pos(), "expected expression")),
            },
        };
        if let Some(op) = BinOp::from_name(head) {
            self.arity(s, items, 2)?;
            return Ok(PrimExpr::binary(
                op,
                self.expr(&items[0])?,
                self.expr(&items[1])?,
            ));
        }
        match head {
            "imm" => {
                self.arity(s, items, 2)?;
                let t = self.dtype(&items[0])?;
                let text = self.atom(&items[1])?;
                if t.kind == ScalarKind::Float32 {
                    let v: f64 = text
                        .parse()
                        .map_err(|_| err_at(items[1].pos(), "expected float"))?;
                    Ok(PrimExpr::FloatImm(t, v))
                } else {
                    let v = match text {
                        "true" => 1,
                        "false" => 0,
                        _ => text
                            .parse()
                            .map_err(|_| err_at(items[1].pos(), "expected integer"))?,
                    };
                    Ok(PrimExpr::IntImm(t, v))
                }
            }
            "call" => {
                if items.len() < 3 {
                    return Err(err_at(s.pos(), "call needs dtype, intrinsic and arguments"));
                }
                let dtype = self.dtype(&items[0])?;
                let op = Intrinsic::from_name(self.atom(&items[1])?)
                    .ok_or_else(|| err_at(items[1].pos(), "unknown intrinsic"))?;
                let args = items[2..]
                    .iter()
                    .map(|a| self.expr(a))
                    .collect::<PResult<_>>()?;
                Ok(PrimExpr::Call { dtype, op, args })
            }
            "cast" => {
                self.arity(s, items, 2)?;
                Ok(PrimExpr::Cast(
                    self.dtype(&items[0])?,
                    Box::new(self.expr(&items[1])?),
                ))
            }
            "let" => {
                self.arity(s, items, 3)?;
                let var = self.var_decl(&items[0])?;
                let value = self.expr(&items[1])?;
                let body = self.with_var(var.clone(), |p| p.expr(&items[2]))?;
                Ok(PrimExpr::Let {
                    var,
                    value: Box::new(value),
                    body: Box::new(body),
                })
            }
            "load" => {
                if items.is_empty() {
                    return Err(err_at(s.pos(), "load needs a buffer"));
                }
                let buffer = self.lookup_buffer(&items[0])?;
                let indices = items[1..]
                    .iter()
                    .map(|a| self.expr(a))
                    .collect::<PResult<_>>()?;
                Ok(PrimExpr::Load { buffer, indices })
            }
            "ramp" => {
                self.arity(s, items, 3)?;
                Ok(PrimExpr::Ramp {
                    base: Box::new(self.expr(&items[0])?),
                    stride: Box::new(self.expr(&items[1])?),
                    lanes: self.int(&items[2])?,
                })
            }
            "broadcast" => {
                self.arity(s, items, 2)?;
                Ok(PrimExpr::Broadcast {
                    value: Box::new(self.expr(&items[0])?),
                    lanes: self.int(&items[1])?,
                })
            }
            other => Err(err_at(s.pos(), format!("unknown expression '{other}'"))),
        }
    }

    fn stmt(&mut self, s: &Sexp) -> PResult<Stmt> {
        let (items, head) = match s {
            Sexp::List(items, ..) => match items.first() {
                Some(Sexp::Atom(h, ..)) => (&items[1..], h.as_str()),
                _ => return Err(err_at(s.pos(), "expected statement")),
            },
            Sexp::Atom(..) => return Err(err_at(s.pos(), "expected statement")),
        };
        match head {
            "while" => {
                self.arity(s, items, 2)?;
                Ok(Stmt::While {
                    cond: self.expr(&items[0])?,
                    body: Box::new(self.stmt(&items[1])?),
                })
            }
            "for" => {
                if items.len() != 5 && items.len() != 6 {
                    return Err(err_at(s.pos(), "malformed for"));
                }
                let var = self.var_decl(&items[0])?;
                let kind = ForKind::from_name(self.atom(&items[1])?)
                    .ok_or_else(|| err_at(items[1].pos(), "unknown loop kind"))?;
                let min = self.expr(&items[2])?;
                let extent = self.expr(&items[3])?;
                let attrs = if items.len() == 6 {
                    self.loop_attrs(&items[4])?
                } else {
                    LoopAttrs::default()
                };
                let body = self.with_var(var.clone(), |p| p.stmt(items.last().unwrap()))?;
                Ok(Stmt::For(Box::new(ForLoop {
                    var,
                    min,
                    extent,
                    kind,
                    body,
                    attrs,
                })))
            }
            "if" => {
                if items.len() != 2 && items.len() != 3 {
                    return Err(err_at(s.pos(), "malformed if"));
                }
                Ok(Stmt::IfThenElse {
                    cond: self.expr(&items[0])?,
                    then_case: Box::new(self.stmt(&items[1])?),
                    else_case: match items.get(2) {
                        Some(e) => Some(Box::new(self.stmt(e)?)),
                        None => None,
                    },
                })
            }
            "letstmt" => {
                self.arity(s, items, 3)?;
                let var = self.var_decl(&items[0])?;
                let value = self.expr(&items[1])?;
                let body = self.with_var(var.clone(), |p| p.stmt(&items[2]))?;
                Ok(Stmt::LetStmt {
                    var,
                    value,
                    body: Box::new(body),
                })
            }
            "seq" => {
                if items.is_empty() {
                    return Err(err_at(s.pos(), "empty seq"));
                }
                Ok(Stmt::Seq(
                    items.iter().map(|c| self.stmt(c)).collect::<PResult<_>>()?,
                ))
            }
            "store" => {
                if items.len() < 3 {
                    return Err(err_at(s.pos(), "store needs buffer, value and indices"));
                }
                let buffer = self.lookup_buffer(&items[0])?;
                let value = self.expr(&items[1])?;
                let indices = items[2..]
                    .iter()
                    .map(|a| self.expr(a))
                    .collect::<PResult<_>>()?;
                Ok(Stmt::Store {
                    buffer,
                    value,
                    indices,
                })
            }
            "allocate" => {
                self.arity(s, items, 2)?;
                let buffer = self.buf_decl(&items[0])?;
                self.env.buffers.push(buffer.clone());
                let body = self.stmt(&items[1]);
                self.env.buffers.pop();
                Ok(Stmt::Allocate {
                    buffer,
                    body: Box::new(body?),
                })
            }
            "attr" => {
                if items.is_empty() {
                    return Err(err_at(s.pos(), "attr needs a key"));
                }
                match self.atom(&items[0])? {
                    "virtual_thread" => {
                        self.arity(s, items, 4)?;
                        let var = self.var_decl(&items[1])?;
                        let value = self.expr(&items[2])?;
                        let body = self.with_var(var.clone(), |p| p.stmt(&items[3]))?;
                        Ok(Stmt::Attr {
                            key: AttrKey::VirtualThread(var),
                            value,
                            body: Box::new(body),
                        })
                    }
                    "unroll_max_steps" => {
                        self.arity(s, items, 3)?;
                        Ok(Stmt::Attr {
                            key: AttrKey::UnrollMaxSteps,
                            value: self.expr(&items[1])?,
                            body: Box::new(self.stmt(&items[2])?),
                        })
                    }
                    _ => Err(err_at(items[0].pos(), "unknown attribute key")),
                }
            }
            "evaluate" => {
                self.arity(s, items, 1)?;
                Ok(Stmt::Evaluate(self.expr(&items[0])?))
            }
            "nop" => {
                self.arity(s, items, 0)?;
                Ok(Stmt::Nop)
            }
            other => Err(err_at(s.pos(), format!("unknown statement '{other}'"))),
        }
    }

    fn loop_attrs(&self, s: &Sexp) -> PResult<LoopAttrs> {
        let mut attrs = LoopAttrs::default();
        for item in self.list(s, "attrs")? {
            if let Ok(v) = self.list(item, "unroll_max_steps") {
                self.arity(item, v, 1)?;
                attrs.unroll_max_steps = Some(self.int(&v[0])?);
            } else if let Ok(v) = self.list(item, "partition_hint") {
                self.arity(item, v, 1)?;
                attrs.partition_hint = Some(match self.atom(&v[0])? {
                    "true" => true,
                    "false" => false,
                    _ => return Err(err_at(v[0].pos(), "expected true or false")),
                });
            } else {
                return Err(err_at(item.pos(), "unknown loop attribute"));
            }
        }
        Ok(attrs)
    }

    fn func(&mut self, s: &Sexp) -> PResult<PrimFunc> {
        let items = self.list(s, "primfunc")?;
        let mut params = None;
        let mut buffers = Vec::new();
        let mut ret = None;
        let mut body_sexp = None;
        for item in items {
            if let Ok(ps) = self.list(item, "params") {
                params = Some(
                    ps.iter()
                        .map(|p| self.var_decl(p))
                        .collect::<PResult<Vec<_>>>()?,
                );
            } else if let Ok(bs) = self.list(item, "buffers") {
                buffers = bs
                    .iter()
                    .map(|b| self.buf_decl(b))
                    .collect::<PResult<Vec<_>>>()?;
            } else if let Ok(r) = self.list(item, "ret") {
                self.arity(item, r, 1)?;
                ret = Some(self.buf_decl(&r[0])?);
            } else if let Ok(b) = self.list(item, "body") {
                self.arity(item, b, 1)?;
                body_sexp = Some(&b[0]);
            } else {
                return Err(err_at(item.pos(), "unexpected primfunc section"));
            }
        }
        let params = params.ok_or_else(|| err_at(s.pos(), "missing params"))?;
        let body_sexp = body_sexp.ok_or_else(|| err_at(s.pos(), "missing body"))?;
        for b in &buffers {
            if !params.iter().any(|p| p.id == b.var.id) {
                return Err(err_at(
                    s.pos(),
                    format!("buffer {} has no parameter", b.var),
                ));
            }
        }
        self.env.vars = params
            .iter()
            .filter(|p| buffers.iter().all(|b| b.var.id != p.id))
            .cloned()
            .collect();
        self.env.buffers = buffers.iter().cloned().chain(ret.iter().cloned()).collect();
        let body = self.stmt(body_sexp)?;
        Ok(PrimFunc {
            params,
            buffers,
            body,
            ret_buffer: ret,
        })
    }
}

/// Parses one function from `.tir` text.
pub fn parse(text: &str) -> Result<PrimFunc, ParseError> {
    let top = read_sexps(text)?;
    match top.as_slice() {
        [one] => Parser {
            env: Env::default(),
        }
        .func(one),
        [] => Err(err_at((1, 1), "empty input")),
        [_, second, ..] => Err(err_at(second.pos(), "trailing input after primfunc")),
    }
}
