//! Addressing of AST positions.
//!
//! A [`NodePath`] is the list of child indices from the function body down to
//! a node. Child order per constructor:
//!
//! | node | children |
//! |------|----------|
//! | `While` | cond, body |
//! | `For` | min, extent, body |
//! | `IfThenElse` | cond, then, else (if present) |
//! | `LetStmt` / `Let` | value, body |
//! | `Seq` | elements |
//! | `Store` | value, indices... |
//! | `Allocate` | body |
//! | `Attr` | value, body |
//! | `Evaluate` / `Cast` / `Broadcast` | operand |
//! | `Binary` | lhs, rhs |
//! | `Call` | args... |
//! | `Load` | indices... |
//! | `Ramp` | base, stride |
//!
//! Variable references and immediates are leaves; binders and buffers are
//! not addressable nodes.

use super::{AttrKey, PrimExpr, PrimFunc, Scope, Stmt};

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodePath(pub Vec<u16>);

impl NodePath {
    pub fn root() -> Self {
        NodePath(Vec::new())
    }

    pub fn child(&self, idx: usize) -> Self {
        let mut v = self.0.clone();
        v.push(idx as u16);
        NodePath(v)
    }

    pub fn parent(&self) -> Option<NodePath> {
        if self.0.is_empty() {
            None
        } else {
            Some(NodePath(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn is_prefix_of(&self, other: &NodePath) -> bool {
        other.0.starts_with(&self.0)
    }
}

#[derive(Clone, Copy, Debug)]
pub enum NodeRef<'a> {
    Stmt(&'a Stmt),
    Expr(&'a PrimExpr),
}

#[derive(Clone, Debug, PartialEq)]
pub enum IrNode {
    Stmt(Stmt),
    Expr(PrimExpr),
}

impl IrNode {
    pub fn as_ref(&self) -> NodeRef<'_> {
        match self {
            IrNode::Stmt(s) => NodeRef::Stmt(s),
            IrNode::Expr(e) => NodeRef::Expr(e),
        }
    }

    pub fn into_stmt(self) -> Option<Stmt> {
        match self {
            IrNode::Stmt(s) => Some(s),
            IrNode::Expr(_) => None,
        }
    }

    pub fn into_expr(self) -> Option<PrimExpr> {
        match self {
            IrNode::Expr(e) => Some(e),
            IrNode::Stmt(_) => None,
        }
    }
}

impl<'a> NodeRef<'a> {
    pub fn to_owned(self) -> IrNode {
        match self {
            NodeRef::Stmt(s) => IrNode::Stmt(s.clone()),
            NodeRef::Expr(e) => IrNode::Expr(e.clone()),
        }
    }

    pub fn is_stmt(self) -> bool {
        matches!(self, NodeRef::Stmt(_))
    }

    pub fn kind_name(self) -> &'static str {
        match self {
            NodeRef::Stmt(s) => s.kind_name(),
            NodeRef::Expr(e) => e.kind_name(),
        }
    }

    pub fn children(self) -> Vec<NodeRef<'a>> {
        use NodeRef::{Expr as E, Stmt as S};
        match self {
            NodeRef::Stmt(s) => match s {
                Stmt::While { cond, body } => vec![E(cond), S(body)],
                Stmt::For(l) => vec![E(&l.min), E(&l.extent), S(&l.body)],
                Stmt::IfThenElse {
                    cond,
                    then_case,
                    else_case,
                } => {
                    let mut v = vec![E(cond), S(then_case)];
                    if let Some(e) = else_case {
                        v.push(S(e));
                    }
                    v
                }
                Stmt::LetStmt { value, body, .. } => vec![E(value), S(body)],
                Stmt::Seq(stmts) => stmts.iter().map(S).collect(),
                Stmt::Store { value, indices, .. } => std::iter::once(E(value))
                    .chain(indices.iter().map(E))
                    .collect(),
                Stmt::Allocate { body, .. } => vec![S(body)],
                Stmt::Attr { value, body, .. } => vec![E(value), S(body)],
                Stmt::Evaluate(e) => vec![E(e)],
                Stmt::Nop => vec![],
            },
            NodeRef::Expr(e) => match e {
                PrimExpr::Var(_) | PrimExpr::IntImm(..) | PrimExpr::FloatImm(..) => vec![],
                PrimExpr::Binary(_, l, r) => vec![E(l), E(r)],
                PrimExpr::Call { args, .. } => args.iter().map(E).collect(),
                PrimExpr::Cast(_, v) => vec![E(v)],
                PrimExpr::Let { value, body, .. } => vec![E(value), E(body)],
                PrimExpr::Load { indices, .. } => indices.iter().map(E).collect(),
                PrimExpr::Ramp { base, stride, .. } => vec![E(base), E(stride)],
                PrimExpr::Broadcast { value, .. } => vec![E(value)],
            },
        }
    }

    /// Applies the binders that `self` introduces for child `idx` to `scope`.
    pub fn extend_scope_for_child(self, idx: usize, scope: &mut Scope) {
        match self {
            NodeRef::Stmt(s) => match s {
                Stmt::For(l) if idx == 2 => scope.push_var(l.var.clone()),
                Stmt::LetStmt { var, .. } if idx == 1 => scope.push_var(var.clone()),
                Stmt::Allocate { buffer, .. } => scope.buffers.push(buffer.clone()),
                Stmt::Attr {
                    key: AttrKey::VirtualThread(v),
                    ..
                } if idx == 1 => scope.push_var(v.clone()),
                _ => {}
            },
            NodeRef::Expr(PrimExpr::Let { var, .. }) if idx == 1 => scope.push_var(var.clone()),
            NodeRef::Expr(_) => {}
        }
    }
}

enum NodeMut<'a> {
    Stmt(&'a mut Stmt),
    Expr(&'a mut PrimExpr),
}

fn child_mut(node: NodeMut<'_>, idx: usize) -> Option<NodeMut<'_>> {
    use NodeMut::{Expr as E, Stmt as S};
    match node {
        NodeMut::Stmt(s) => match s {
            Stmt::While { cond, body } => match idx {
                0 => Some(E(cond)),
                1 => Some(S(body)),
                _ => None,
            },
            Stmt::For(l) => match idx {
                0 => Some(E(&mut l.min)),
                1 => Some(E(&mut l.extent)),
                2 => Some(S(&mut l.body)),
                _ => None,
            },
            Stmt::IfThenElse {
                cond,
                then_case,
                else_case,
            } => match idx {
                0 => Some(E(cond)),
                1 => Some(S(then_case)),
                2 => else_case.as_deref_mut().map(S),
                _ => None,
            },
            Stmt::LetStmt { value, body, .. } | Stmt::Attr { value, body, .. } => match idx {
                0 => Some(E(value)),
                1 => Some(S(body)),
                _ => None,
            },
            Stmt::Seq(stmts) => stmts.get_mut(idx).map(S),
            Stmt::Store { value, indices, .. } => {
                if idx == 0 {
                    Some(E(value))
                } else {
                    indices.get_mut(idx - 1).map(E)
                }
            }
            Stmt::Allocate { body, .. } => (idx == 0).then_some(S(body)),
            Stmt::Evaluate(e) => (idx == 0).then_some(E(e)),
            Stmt::Nop => None,
        },
        NodeMut::Expr(e) => match e {
            PrimExpr::Var(_) | PrimExpr::IntImm(..) | PrimExpr::FloatImm(..) => None,
            PrimExpr::Binary(_, l, r) => match idx {
                0 => Some(E(l)),
                1 => Some(E(r)),
                _ => None,
            },
            PrimExpr::Call { args, .. } => args.get_mut(idx).map(E),
            PrimExpr::Cast(_, v) | PrimExpr::Broadcast { value: v, .. } => {
                (idx == 0).then_some(E(v))
            }
            PrimExpr::Let { value, body, .. } => match idx {
                0 => Some(E(value)),
                1 => Some(E(body)),
                _ => None,
            },
            PrimExpr::Load { indices, .. } => indices.get_mut(idx).map(E),
            PrimExpr::Ramp { base, stride, .. } => match idx {
                0 => Some(E(base)),
                1 => Some(E(stride)),
                _ => None,
            },
        },
    }
}

/// Post-order enumeration of every statement and expression position.
pub fn collect_nodes(func: &PrimFunc) -> Vec<NodePath> {
    fn go(node: NodeRef<'_>, path: &mut Vec<u16>, out: &mut Vec<NodePath>) {
        for (i, c) in node.children().into_iter().enumerate() {
            path.push(i as u16);
            go(c, path, out);
            path.pop();
        }
        out.push(NodePath(path.clone()));
    }
    let mut out = Vec::new();
    go(NodeRef::Stmt(&func.body), &mut Vec::new(), &mut out);
    out
}

pub fn node_at<'a>(func: &'a PrimFunc, path: &NodePath) -> Option<NodeRef<'a>> {
    let mut node = NodeRef::Stmt(&func.body);
    for &i in &path.0 {
        node = node.children().into_iter().nth(i as usize)?;
    }
    Some(node)
}

/// Scope in effect at `path` (the binders of all ancestors plus function
/// parameters and buffers).
pub fn scope_at(func: &PrimFunc, path: &NodePath) -> Option<Scope> {
    let mut scope = Scope::new();
    scope.vars.extend(func.scalar_params().cloned());
    scope.buffers.extend(func.global_buffers().cloned());
    let mut node = NodeRef::Stmt(&func.body);
    for &i in &path.0 {
        node.extend_scope_for_child(i as usize, &mut scope);
        node = node.children().into_iter().nth(i as usize)?;
    }
    Some(scope)
}

/// Replaces the node at `path` with `new`. Returns `None` when the path is
/// invalid or the node kind (statement vs expression) does not match.
pub fn replace_at(func: &PrimFunc, path: &NodePath, new: IrNode) -> Option<PrimFunc> {
    let mut out = func.clone();
    let mut node = NodeMut::Stmt(&mut out.body);
    for &i in &path.0 {
        node = child_mut(node, i as usize)?;
    }
    match (node, new) {
        (NodeMut::Stmt(slot), IrNode::Stmt(s)) => *slot = s,
        (NodeMut::Expr(slot), IrNode::Expr(e)) => *slot = e,
        _ => return None,
    }
    Some(out)
}
