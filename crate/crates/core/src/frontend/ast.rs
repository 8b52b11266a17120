//! Syntax tree for the supported Verilog subset.
//!
//! Spans and expression ids are bookkeeping: they never take part in
//! structural equality, so `parse(print(parse(t))) == parse(t)` compares
//! only what the source says.

use serde::Serialize;
use std::fmt;

/// Byte range plus the 1-based line/column of its start.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub line: u32,
    pub col: u32,
}

impl PartialEq for Span {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}

impl Eq for Span {}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// Identity of one expression occurrence in a module.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ExprId(pub u32);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceUnit {
    pub modules: Vec<ModuleDecl>,
    /// Original text the unit was parsed from (empty for synthesized units).
    pub source_text: String,
}

impl SourceUnit {
    pub fn module(&self, name: &str) -> Option<&ModuleDecl> {
        self.modules.iter().find(|m| m.name == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Input,
    Output,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NetKind {
    Wire,
    Reg,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Range {
    pub msb: Expr,
    pub lsb: Expr,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Port {
    pub name: String,
    pub dir: Direction,
    pub kind: NetKind,
    pub range: Option<Range>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModuleDecl {
    pub name: String,
    pub ports: Vec<Port>,
    pub items: Vec<Item>,
    pub span: Span,
}

impl ModuleDecl {
    pub fn nets(&self) -> impl Iterator<Item = &NetDecl> {
        self.items.iter().filter_map(|i| match i {
            Item::Net(n) => Some(n),
            _ => None,
        })
    }

    pub fn params(&self) -> impl Iterator<Item = &ParamDecl> {
        self.items.iter().filter_map(|i| match i {
            Item::Param(p) => Some(p),
            _ => None,
        })
    }

    pub fn assigns(&self) -> impl Iterator<Item = &ContinuousAssign> {
        self.items.iter().filter_map(|i| match i {
            Item::Assign(a) => Some(a),
            _ => None,
        })
    }

    pub fn processes(&self) -> impl Iterator<Item = &ProcessBlock> {
        self.items.iter().filter_map(|i| match i {
            Item::Process(p) => Some(p),
            _ => None,
        })
    }

    pub fn instances(&self) -> impl Iterator<Item = &Instance> {
        self.items.iter().filter_map(|i| match i {
            Item::Instance(p) => Some(p),
            _ => None,
        })
    }

    pub fn port(&self, name: &str) -> Option<&Port> {
        self.ports.iter().find(|p| p.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Item {
    Net(NetDecl),
    Param(ParamDecl),
    Assign(ContinuousAssign),
    Process(ProcessBlock),
    Instance(Instance),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetDecl {
    pub kind: NetKind,
    pub range: Option<Range>,
    pub names: Vec<NetName>,
    pub span: Span,
}

/// One declarator; `array` is present for memories (`reg [7:0] m [0:15]`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetName {
    pub name: String,
    pub array: Option<Range>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamDecl {
    pub local: bool,
    pub range: Option<Range>,
    pub assigns: Vec<(String, Expr)>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContinuousAssign {
    pub lhs: LValue,
    pub rhs: Expr,
    pub span: Span,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Posedge,
    Negedge,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AsyncReset {
    pub name: String,
    pub active_high: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Sensitivity {
    /// `@*` / `@(*)`
    Comb,
    Clocked {
        edge: EdgeKind,
        clock: String,
        reset: Option<AsyncReset>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProcessBlock {
    pub sensitivity: Sensitivity,
    pub body: Stmt,
    pub span: Span,
}

impl ProcessBlock {
    pub fn is_clocked(&self) -> bool {
        matches!(self.sensitivity, Sensitivity::Clocked { .. })
    }

    pub fn reset(&self) -> Option<&AsyncReset> {
        match &self.sensitivity {
            Sensitivity::Clocked { reset, .. } => reset.as_ref(),
            Sensitivity::Comb => None,
        }
    }

    /// Reset branch and functional branch of the leading `if` of an async-reset process.
    pub fn reset_branches(&self) -> Option<(&Stmt, Option<&Stmt>)> {
        let r = self.reset()?;
        match &self.body.unwrap_single().kind {
            StmtKind::If {
                cond,
                then_stmt,
                else_stmt,
            } if is_reset_test(cond, r) => Some((then_stmt, else_stmt.as_deref())),
            _ => None,
        }
    }

    /// The statements that run on a clock edge when not in reset.
    pub fn functional_body(&self) -> Option<&Stmt> {
        match self.reset() {
            None => Some(&self.body),
            Some(_) => self.reset_branches().and_then(|(_, f)| f),
        }
    }
}

/// `rst` for active-high resets, `!rst` / `~rst` for active-low ones.
pub fn is_reset_test(cond: &Expr, r: &AsyncReset) -> bool {
    match &cond.kind {
        ExprKind::Ident(n) => r.active_high && *n == r.name,
        ExprKind::Unary {
            op: UnaryOp::LogNot | UnaryOp::Not,
            arg,
        } => !r.active_high && matches!(&arg.kind, ExprKind::Ident(n) if *n == r.name),
        _ => false,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub module: String,
    pub name: String,
    pub conns: Vec<PortConn>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PortConn {
    Named(String, Option<Expr>),
    Positional(Expr),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LValue {
    Whole(String),
    Bit { name: String, index: Expr },
    Part { name: String, msb: Expr, lsb: Expr },
}

impl LValue {
    pub fn name(&self) -> &str {
        match self {
            LValue::Whole(n) | LValue::Bit { name: n, .. } | LValue::Part { name: n, .. } => n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AssignKind {
    Blocking,
    NonBlocking,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StmtKind {
    Block(Vec<Stmt>),
    If {
        cond: Expr,
        then_stmt: Box<Stmt>,
        else_stmt: Option<Box<Stmt>>,
    },
    Case {
        sel: Expr,
        items: Vec<CaseItem>,
    },
    Assign {
        kind: AssignKind,
        lhs: LValue,
        /// Only the intra-assignment `#1` emitted on SP registers is accepted.
        delay: Option<u32>,
        rhs: Expr,
    },
    Null,
}

/// An empty label list marks the `default` arm.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CaseItem {
    pub labels: Vec<Expr>,
    pub body: Stmt,
}

impl CaseItem {
    pub fn is_default(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Clone, Debug, Eq)]
pub struct Expr {
    pub id: ExprId,
    pub kind: ExprKind,
    pub span: Span,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Literal {
    /// `None` for unsized literals such as `1` or `'d3`.
    pub width: Option<u32>,
    pub value: u128,
    pub text: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum UnaryOp {
    Not,
    LogNot,
    Neg,
    RedAnd,
    RedOr,
    RedXor,
    RedNand,
    RedNor,
    RedXnor,
}

impl UnaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            UnaryOp::Not => "~",
            UnaryOp::LogNot => "!",
            UnaryOp::Neg => "-",
            UnaryOp::RedAnd => "&",
            UnaryOp::RedOr => "|",
            UnaryOp::RedXor => "^",
            UnaryOp::RedNand => "~&",
            UnaryOp::RedNor => "~|",
            UnaryOp::RedXnor => "~^",
        }
    }

    pub fn is_reduction(self) -> bool {
        matches!(
            self,
            UnaryOp::RedAnd
                | UnaryOp::RedOr
                | UnaryOp::RedXor
                | UnaryOp::RedNand
                | UnaryOp::RedNor
                | UnaryOp::RedXnor
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    And,
    Or,
    Xor,
    Xnor,
    LogAnd,
    LogOr,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Shl,
    Shr,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::And => "&",
            BinaryOp::Or => "|",
            BinaryOp::Xor => "^",
            BinaryOp::Xnor => "~^",
            BinaryOp::LogAnd => "&&",
            BinaryOp::LogOr => "||",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::Shl => "<<",
            BinaryOp::Shr => ">>",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinaryOp::Mul => 10,
            BinaryOp::Add | BinaryOp::Sub => 9,
            BinaryOp::Shl | BinaryOp::Shr => 8,
            BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => 7,
            BinaryOp::Eq | BinaryOp::Ne => 6,
            BinaryOp::And => 5,
            BinaryOp::Xor | BinaryOp::Xnor => 4,
            BinaryOp::Or => 3,
            BinaryOp::LogAnd => 2,
            BinaryOp::LogOr => 1,
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExprKind {
    Ident(String),
    Literal(Literal),
    /// Bit-select on a vector or word read on a memory.
    Index {
        base: String,
        index: Box<Expr>,
    },
    /// Constant part-select `a[msb:lsb]`.
    Slice {
        base: String,
        msb: Box<Expr>,
        lsb: Box<Expr>,
    },
    Unary {
        op: UnaryOp,
        arg: Box<Expr>,
    },
    Binary {
        op: BinaryOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Ternary {
        cond: Box<Expr>,
        then_expr: Box<Expr>,
        else_expr: Box<Expr>,
    },
    Concat(Vec<Expr>),
    Repeat {
        count: Box<Expr>,
        parts: Vec<Expr>,
    },
}

impl Expr {
    pub fn new(id: ExprId, kind: ExprKind) -> Self {
        Expr {
            id,
            kind,
            span: Span::default(),
        }
    }

    /// Direct sub-expressions in source order.
    pub fn children(&self) -> Vec<&Expr> {
        match &self.kind {
            ExprKind::Ident(_) | ExprKind::Literal(_) => vec![],
            ExprKind::Index { index, .. } => vec![index],
            ExprKind::Slice { msb, lsb, .. } => vec![msb, lsb],
            ExprKind::Unary { arg, .. } => vec![arg],
            ExprKind::Binary { lhs, rhs, .. } => vec![lhs, rhs],
            ExprKind::Ternary {
                cond,
                then_expr,
                else_expr,
            } => vec![cond, then_expr, else_expr],
            ExprKind::Concat(parts) => parts.iter().collect(),
            ExprKind::Repeat { count, parts } => {
                let mut v: Vec<&Expr> = vec![count];
                v.extend(parts.iter());
                v
            }
        }
    }

    pub fn children_mut(&mut self) -> Vec<&mut Expr> {
        match &mut self.kind {
            ExprKind::Ident(_) | ExprKind::Literal(_) => vec![],
            ExprKind::Index { index, .. } => vec![index],
            ExprKind::Slice { msb, lsb, .. } => vec![msb, lsb],
            ExprKind::Unary { arg, .. } => vec![arg],
            ExprKind::Binary { lhs, rhs, .. } => vec![lhs, rhs],
            ExprKind::Ternary {
                cond,
                then_expr,
                else_expr,
            } => vec![cond, then_expr, else_expr],
            ExprKind::Concat(parts) => parts.iter_mut().collect(),
            ExprKind::Repeat { count, parts } => {
                let mut v: Vec<&mut Expr> = vec![count];
                v.extend(parts.iter_mut());
                v
            }
        }
    }

    /// Visit every expression in pre-order.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        for c in self.children() {
            c.walk(f);
        }
    }

    pub fn walk_mut(&mut self, f: &mut dyn FnMut(&mut Expr)) {
        f(self);
        for c in self.children_mut() {
            c.walk_mut(f);
        }
    }

    /// Every signal name this expression reads, including index bases.
    pub fn referenced_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.walk(&mut |e| match &e.kind {
            ExprKind::Ident(n) => out.push(n.clone()),
            ExprKind::Index { base, .. } | ExprKind::Slice { base, .. } => out.push(base.clone()),
            _ => {}
        });
        out
    }
}

impl Stmt {
    pub fn new(kind: StmtKind) -> Self {
        Stmt {
            kind,
            span: Span::default(),
        }
    }

    /// Strip `begin ... end` wrappers around a single statement.
    pub fn unwrap_single(&self) -> &Stmt {
        match &self.kind {
            StmtKind::Block(v) if v.len() == 1 => v[0].unwrap_single(),
            _ => self,
        }
    }

    /// Top-level statements of a block, or the statement itself.
    pub fn top_level(&self) -> Vec<&Stmt> {
        match &self.kind {
            StmtKind::Block(v) => v.iter().flat_map(|s| s.top_level()).collect(),
            _ => vec![self],
        }
    }

    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Stmt)) {
        f(self);
        match &self.kind {
            StmtKind::Block(stmts) => stmts.iter().for_each(|s| s.walk(f)),
            StmtKind::If {
                then_stmt,
                else_stmt,
                ..
            } => {
                then_stmt.walk(f);
                if let Some(e) = else_stmt {
                    e.walk(f);
                }
            }
            StmtKind::Case { items, .. } => items.iter().for_each(|i| i.body.walk(f)),
            StmtKind::Assign { .. } | StmtKind::Null => {}
        }
    }

    pub fn walk_mut(&mut self, f: &mut dyn FnMut(&mut Stmt)) {
        f(self);
        match &mut self.kind {
            StmtKind::Block(stmts) => stmts.iter_mut().for_each(|s| s.walk_mut(f)),
            StmtKind::If {
                then_stmt,
                else_stmt,
                ..
            } => {
                then_stmt.walk_mut(f);
                if let Some(e) = else_stmt {
                    e.walk_mut(f);
                }
            }
            StmtKind::Case { items, .. } => items.iter_mut().for_each(|i| i.body.walk_mut(f)),
            StmtKind::Assign { .. } | StmtKind::Null => {}
        }
    }

    /// Expressions owned directly by this statement (not by nested statements).
    pub fn own_exprs_mut(&mut self) -> Vec<&mut Expr> {
        match &mut self.kind {
            StmtKind::If { cond, .. } => vec![cond],
            StmtKind::Case { sel, items } => {
                let mut v: Vec<&mut Expr> = vec![sel];
                for it in items.iter_mut() {
                    v.extend(it.labels.iter_mut());
                }
                v
            }
            StmtKind::Assign { lhs, rhs, .. } => {
                let mut v: Vec<&mut Expr> = Vec::new();
                match lhs {
                    LValue::Whole(_) => {}
                    LValue::Bit { index, .. } => v.push(index),
                    LValue::Part { msb, lsb, .. } => {
                        v.push(msb);
                        v.push(lsb);
                    }
                }
                v.push(rhs);
                v
            }
            StmtKind::Block(_) | StmtKind::Null => vec![],
        }
    }

    pub fn own_exprs(&self) -> Vec<&Expr> {
        match &self.kind {
            StmtKind::If { cond, .. } => vec![cond],
            StmtKind::Case { sel, items } => {
                let mut v: Vec<&Expr> = vec![sel];
                for it in items {
                    v.extend(it.labels.iter());
                }
                v
            }
            StmtKind::Assign { lhs, rhs, .. } => {
                let mut v: Vec<&Expr> = Vec::new();
                match lhs {
                    LValue::Whole(_) => {}
                    LValue::Bit { index, .. } => v.push(index),
                    LValue::Part { msb, lsb, .. } => {
                        v.push(msb);
                        v.push(lsb);
                    }
                }
                v.push(rhs);
                v
            }
            StmtKind::Block(_) | StmtKind::Null => vec![],
        }
    }
}

/// Apply `f` to every expression in the module, ranges included.
pub fn for_each_expr_mut(module: &mut ModuleDecl, f: &mut dyn FnMut(&mut Expr)) {
    fn range(r: &mut Option<Range>, f: &mut dyn FnMut(&mut Expr)) {
        if let Some(r) = r {
            r.msb.walk_mut(f);
            r.lsb.walk_mut(f);
        }
    }
    fn lvalue(l: &mut LValue, f: &mut dyn FnMut(&mut Expr)) {
        match l {
            LValue::Whole(_) => {}
            LValue::Bit { index, .. } => index.walk_mut(f),
            LValue::Part { msb, lsb, .. } => {
                msb.walk_mut(f);
                lsb.walk_mut(f);
            }
        }
    }
    for p in &mut module.ports {
        range(&mut p.range, f);
    }
    for item in &mut module.items {
        match item {
            Item::Net(n) => {
                range(&mut n.range, f);
                for nm in &mut n.names {
                    range(&mut nm.array, f);
                }
            }
            Item::Param(p) => {
                range(&mut p.range, f);
                for (_, e) in &mut p.assigns {
                    e.walk_mut(f);
                }
            }
            Item::Assign(a) => {
                lvalue(&mut a.lhs, f);
                a.rhs.walk_mut(f);
            }
            Item::Process(p) => p.body.walk_mut(&mut |s| {
                match &mut s.kind {
                    StmtKind::If { cond, .. } => cond.walk_mut(f),
                    StmtKind::Case { sel, items } => {
                        sel.walk_mut(f);
                        for it in items {
                            for l in &mut it.labels {
                                l.walk_mut(f);
                            }
                        }
                    }
                    StmtKind::Assign { lhs, rhs, .. } => {
                        lvalue(lhs, f);
                        rhs.walk_mut(f);
                    }
                    StmtKind::Block(_) | StmtKind::Null => {}
                }
            }),
            Item::Instance(inst) => {
                for c in &mut inst.conns {
                    match c {
                        PortConn::Named(_, Some(e)) | PortConn::Positional(e) => e.walk_mut(f),
                        PortConn::Named(_, None) => {}
                    }
                }
            }
        }
    }
}

/// Give every expression in the module a fresh id starting at `start`; returns the next free id.
pub fn renumber_exprs(module: &mut ModuleDecl, start: u32) -> u32 {
    let mut next = start;
    for_each_expr_mut(module, &mut |e| {
        e.id = ExprId(next);
        next += 1;
    });
    next
}

/// Largest expression id in use plus one.
pub fn next_expr_id(module: &mut ModuleDecl) -> u32 {
    let mut max = 0;
    for_each_expr_mut(module, &mut |e| max = max.max(e.id.0 + 1));
    max
}
