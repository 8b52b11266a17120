//! Recursive-descent parser for the synthesizable subset.

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::ParseError;

const UNSUPPORTED_ITEMS: &[&str] = &[
    "initial",
    "generate",
    "genvar",
    "function",
    "task",
    "integer",
    "real",
    "time",
    "specify",
    "defparam",
    "inout",
    "tri",
    "supply0",
    "supply1",
    "wand",
    "wor",
    "always_ff",
    "always_comb",
    "always_latch",
    "and",
    "or",
    "nand",
    "nor",
    "xor",
    "xnor",
    "not",
    "buf",
    "bufif0",
    "bufif1",
    "notif0",
    "notif1",
    "primitive",
];

const UNSUPPORTED_STMTS: &[&str] = &[
    "for", "while", "repeat", "forever", "wait", "fork", "disable", "casez", "casex", "force",
    "release", "deassign",
];

pub fn parse(text: &str) -> Result<SourceUnit, ParseError> {
    let tokens = tokenize(text)?;
    let mut p = Parser {
        toks: tokens,
        pos: 0,
        next_id: 0,
    };
    let mut modules = Vec::new();
    while !p.at_eof() {
        modules.push(p.module()?);
    }
    Ok(SourceUnit {
        modules,
        source_text: text.to_string(),
    })
}

/// Parse a standalone expression (used by tests and config overrides).
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let tokens = tokenize(text)?;
    let mut p = Parser {
        toks: tokens,
        pos: 0,
        next_id: 0,
    };
    let e = p.expr()?;
    if !p.at_eof() {
        return Err(p.err_here("trailing tokens after expression"));
    }
    Ok(e)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    next_id: u32,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn prev_end(&self) -> usize {
        if self.pos == 0 {
            0
        } else {
            self.toks[self.pos - 1].span.end
        }
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == k)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, k: &str) -> bool {
        if self.is_kw(k) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn err_here(&self, msg: &str) -> ParseError {
        let sp = self.span();
        ParseError::syntax(msg, sp.line, sp.col)
    }

    fn expect_sym(&mut self, s: &str) -> Result<Span, ParseError> {
        if self.is_sym(s) {
            Ok(self.bump().span)
        } else {
            Err(self.err_here(&format!("expected '{s}', found {}", describe(self.peek()))))
        }
    }

    fn expect_kw(&mut self, k: &str) -> Result<Span, ParseError> {
        if self.is_kw(k) {
            Ok(self.bump().span)
        } else {
            Err(self.err_here(&format!("expected '{k}', found {}", describe(self.peek()))))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_reserved(&s) => {
                self.bump();
                Ok(s)
            }
            t => Err(self.err_here(&format!("expected identifier, found {}", describe(&t)))),
        }
    }

    fn finish(&self, start: Span) -> Span {
        Span {
            start: start.start,
            end: self.prev_end(),
            line: start.line,
            col: start.col,
        }
    }

    fn new_expr(&mut self, kind: ExprKind, span: Span) -> Expr {
        let id = ExprId(self.next_id);
        self.next_id += 1;
        Expr { id, kind, span }
    }

    fn module(&mut self) -> Result<ModuleDecl, ParseError> {
        let start = self.span();
        if let Tok::Ident(k) = self.peek() {
            if k == "macromodule" || k == "primitive" {
                return Err(ParseError::unsupported(k, start));
            }
        }
        self.expect_kw("module")?;
        let name = self.ident()?;
        if self.is_sym("#") {
            return Err(ParseError::unsupported("parameter port list", self.span()));
        }
        let mut ports = Vec::new();
        if self.eat_sym("(") {
            if !self.is_sym(")") {
                self.port_list(&mut ports)?;
            }
            self.expect_sym(")")?;
        }
        self.expect_sym(";")?;
        let mut items = Vec::new();
        while !self.is_kw("endmodule") {
            if self.at_eof() {
                return Err(self.err_here("unexpected end of input inside module"));
            }
            items.push(self.item()?);
        }
        self.bump();
        Ok(ModuleDecl {
            name,
            ports,
            items,
            span: self.finish(start),
        })
    }

    fn port_list(&mut self, ports: &mut Vec<Port>) -> Result<(), ParseError> {
        let mut current: Option<(Direction, NetKind, Option<Range>)> = None;
        loop {
            let sp = self.span();
            if self.is_kw("inout") {
                return Err(ParseError::unsupported("inout port", sp));
            }
            if self.is_kw("input") || self.is_kw("output") {
                let dir = if self.eat_kw("input") {
                    Direction::Input
                } else {
                    self.bump();
                    Direction::Output
                };
                let kind = if self.eat_kw("reg") {
                    NetKind::Reg
                } else {
                    self.eat_kw("wire");
                    NetKind::Wire
                };
                if self.is_kw("signed") {
                    return Err(ParseError::unsupported("signed", self.span()));
                }
                let range = self.opt_range()?;
                current = Some((dir, kind, range));
            } else if current.is_none() {
                return Err(ParseError::unsupported("non-ANSI port list", sp));
            }
            let name = self.ident()?;
            let (dir, kind, range) = current.clone().expect("port header seen");
            ports.push(Port {
                name,
                dir,
                kind,
                range,
                span: self.finish(sp),
            });
            if !self.eat_sym(",") {
                return Ok(());
            }
        }
    }

    fn opt_range(&mut self) -> Result<Option<Range>, ParseError> {
        if !self.is_sym("[") {
            return Ok(None);
        }
        self.bump();
        let msb = self.expr()?;
        self.expect_sym(":")?;
        let lsb = self.expr()?;
        self.expect_sym("]")?;
        Ok(Some(Range { msb, lsb }))
    }

    fn item(&mut self) -> Result<Item, ParseError> {
        let start = self.span();
        let kw = match self.peek() {
            Tok::Ident(s) => s.clone(),
            t => return Err(self.err_here(&format!("expected module item, found {}", describe(t)))),
        };
        if UNSUPPORTED_ITEMS.contains(&kw.as_str()) {
            return Err(ParseError::unsupported(&kw, start));
        }
        match kw.as_str() {
            "input" | "output" => Err(ParseError::unsupported("non-ANSI port declaration", start)),
            "wire" | "reg" => {
                self.bump();
                let kind = if kw == "reg" { NetKind::Reg } else { NetKind::Wire };
                if self.is_kw("signed") {
                    return Err(ParseError::unsupported("signed", self.span()));
                }
                let range = self.opt_range()?;
                let mut names = Vec::new();
                loop {
                    let name = self.ident()?;
                    let array = self.opt_range()?;
                    if self.is_sym("=") {
                        return Err(ParseError::unsupported("declaration assignment", self.span()));
                    }
                    names.push(NetName { name, array });
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                self.expect_sym(";")?;
                Ok(Item::Net(NetDecl {
                    kind,
                    range,
                    names,
                    span: self.finish(start),
                }))
            }
            "parameter" | "localparam" => {
                self.bump();
                let range = self.opt_range()?;
                let mut assigns = Vec::new();
                loop {
                    let name = self.ident()?;
                    self.expect_sym("=")?;
                    let e = self.expr()?;
                    assigns.push((name, e));
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                self.expect_sym(";")?;
                Ok(Item::Param(ParamDecl {
                    local: kw == "localparam",
                    range,
                    assigns,
                    span: self.finish(start),
                }))
            }
            "assign" => {
                self.bump();
                if self.is_sym("#") {
                    return Err(ParseError::unsupported("delay on continuous assignment", self.span()));
                }
                let lhs = self.lvalue()?;
                self.expect_sym("=")?;
                let rhs = self.expr()?;
                if self.is_sym(",") {
                    return Err(ParseError::unsupported("multiple assignments in one assign", self.span()));
                }
                self.expect_sym(";")?;
                Ok(Item::Assign(ContinuousAssign {
                    lhs,
                    rhs,
                    span: self.finish(start),
                }))
            }
            "always" => {
                self.bump();
                self.expect_sym("@")?;
                let sens = self.sensitivity()?;
                let body = self.stmt()?;
                let sensitivity = resolve_reset(sens, &body);
                Ok(Item::Process(ProcessBlock {
                    sensitivity,
                    body,
                    span: self.finish(start),
                }))
            }
            _ => {
                // module instantiation: <module> <name> ( ... );
                let module = self.ident()?;
                if self.is_sym("#") {
                    return Err(ParseError::unsupported("parameter override", self.span()));
                }
                let name = self.ident()?;
                self.expect_sym("(")?;
                let mut conns = Vec::new();
                if !self.is_sym(")") {
                    loop {
                        if self.eat_sym(".") {
                            let port = self.ident()?;
                            self.expect_sym("(")?;
                            let e = if self.is_sym(")") { None } else { Some(self.expr()?) };
                            self.expect_sym(")")?;
                            conns.push(PortConn::Named(port, e));
                        } else {
                            conns.push(PortConn::Positional(self.expr()?));
                        }
                        if !self.eat_sym(",") {
                            break;
                        }
                    }
                }
                self.expect_sym(")")?;
                self.expect_sym(";")?;
                Ok(Item::Instance(Instance {
                    module,
                    name,
                    conns,
                    span: self.finish(start),
                }))
            }
        }
    }

    fn sensitivity(&mut self) -> Result<RawSens, ParseError> {
        if self.eat_sym("*") {
            return Ok(RawSens::Comb);
        }
        let open = self.expect_sym("(")?;
        if self.eat_sym("*") {
            self.expect_sym(")")?;
            return Ok(RawSens::Comb);
        }
        let mut events = Vec::new();
        loop {
            let sp = self.span();
            let edge = if self.eat_kw("posedge") {
                EdgeKind::Posedge
            } else if self.eat_kw("negedge") {
                EdgeKind::Negedge
            } else {
                return Err(ParseError::unsupported("explicit combinational sensitivity list", sp));
            };
            let name = self.ident()?;
            events.push((edge, name));
            if !(self.eat_kw("or") || self.eat_sym(",")) {
                break;
            }
        }
        self.expect_sym(")")?;
        if events.len() > 2 {
            return Err(ParseError::unsupported("more than two edge events", open));
        }
        Ok(RawSens::Edges(events))
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        let start = self.span();
        if self.eat_sym(";") {
            return Ok(Stmt {
                kind: StmtKind::Null,
                span: start,
            });
        }
        if self.is_sym("#") {
            return Err(ParseError::unsupported("delay control", start));
        }
        if self.is_sym("@") {
            return Err(ParseError::unsupported("event control inside a process", start));
        }
        if self.is_sym("$") || matches!(self.peek(), Tok::Ident(s) if s.starts_with('$')) {
            return Err(ParseError::unsupported("system task", start));
        }
        if self.is_sym("{") {
            return Err(ParseError::unsupported("concatenation on the left-hand side", start));
        }
        let kw = match self.peek() {
            Tok::Ident(s) => s.clone(),
            t => return Err(self.err_here(&format!("expected statement, found {}", describe(t)))),
        };
        if UNSUPPORTED_STMTS.contains(&kw.as_str()) {
            return Err(ParseError::unsupported(&kw, start));
        }
        match kw.as_str() {
            "begin" => {
                self.bump();
                if self.is_sym(":") {
                    return Err(ParseError::unsupported("named block", self.span()));
                }
                let mut stmts = Vec::new();
                while !self.is_kw("end") {
                    if self.at_eof() {
                        return Err(self.err_here("unexpected end of input inside begin/end"));
                    }
                    stmts.push(self.stmt()?);
                }
                self.bump();
                Ok(Stmt {
                    kind: StmtKind::Block(stmts),
                    span: self.finish(start),
                })
            }
            "if" => {
                self.bump();
                self.expect_sym("(")?;
                let cond = self.expr()?;
                self.expect_sym(")")?;
                let then_stmt = Box::new(self.stmt()?);
                let else_stmt = if self.eat_kw("else") {
                    Some(Box::new(self.stmt()?))
                } else {
                    None
                };
                Ok(Stmt {
                    kind: StmtKind::If {
                        cond,
                        then_stmt,
                        else_stmt,
                    },
                    span: self.finish(start),
                })
            }
            "case" => {
                self.bump();
                self.expect_sym("(")?;
                let sel = self.expr()?;
                self.expect_sym(")")?;
                let mut items = Vec::new();
                while !self.is_kw("endcase") {
                    if self.at_eof() {
                        return Err(self.err_here("unexpected end of input inside case"));
                    }
                    let labels = if self.eat_kw("default") {
                        self.eat_sym(":");
                        Vec::new()
                    } else {
                        let mut labels = vec![self.expr()?];
                        while self.eat_sym(",") {
                            labels.push(self.expr()?);
                        }
                        self.expect_sym(":")?;
                        labels
                    };
                    let body = self.stmt()?;
                    items.push(CaseItem { labels, body });
                }
                self.bump();
                Ok(Stmt {
                    kind: StmtKind::Case { sel, items },
                    span: self.finish(start),
                })
            }
            _ => {
                let lhs = self.lvalue()?;
                let kind = if self.eat_sym("=") {
                    AssignKind::Blocking
                } else if self.eat_sym("<=") {
                    AssignKind::NonBlocking
                } else {
                    return Err(self.err_here("expected '=' or '<='"));
                };
                let mut delay = None;
                if self.is_sym("#") {
                    let dsp = self.bump().span;
                    match self.bump().tok {
                        Tok::Number(None, 1, _) if kind == AssignKind::NonBlocking => delay = Some(1),
                        _ => return Err(ParseError::unsupported("delay other than #1", dsp)),
                    }
                }
                let rhs = self.expr()?;
                self.expect_sym(";")?;
                Ok(Stmt {
                    kind: StmtKind::Assign {
                        kind,
                        lhs,
                        delay,
                        rhs,
                    },
                    span: self.finish(start),
                })
            }
        }
    }

    fn lvalue(&mut self) -> Result<LValue, ParseError> {
        if self.is_sym("{") {
            return Err(ParseError::unsupported("concatenation on the left-hand side", self.span()));
        }
        let name = self.ident()?;
        if !self.eat_sym("[") {
            return Ok(LValue::Whole(name));
        }
        let first = self.expr()?;
        if self.is_sym("+:") || self.is_sym("-:") {
            return Err(ParseError::unsupported("indexed part-select", self.span()));
        }
        if self.eat_sym(":") {
            let lsb = self.expr()?;
            self.expect_sym("]")?;
            return Ok(LValue::Part {
                name,
                msb: first,
                lsb,
            });
        }
        self.expect_sym("]")?;
        if self.is_sym("[") {
            return Err(ParseError::unsupported("multi-dimensional select", self.span()));
        }
        Ok(LValue::Bit { name, index: first })
    }

    pub fn expr(&mut self) -> Result<Expr, ParseError> {
        let start = self.span();
        let cond = self.binary(1)?;
        if self.eat_sym("?") {
            let then_expr = self.expr()?;
            self.expect_sym(":")?;
            let else_expr = self.expr()?;
            let span = self.finish(start);
            return Ok(self.new_expr(
                ExprKind::Ternary {
                    cond: Box::new(cond),
                    then_expr: Box::new(then_expr),
                    else_expr: Box::new(else_expr),
                },
                span,
            ));
        }
        Ok(cond)
    }

    fn binary_op(&self) -> Result<Option<BinaryOp>, ParseError> {
        let s = match self.peek() {
            Tok::Sym(s) => *s,
            _ => return Ok(None),
        };
        Ok(Some(match s {
            "+" => BinaryOp::Add,
            "-" => BinaryOp::Sub,
            "*" => BinaryOp::Mul,
            "&" => BinaryOp::And,
            "|" => BinaryOp::Or,
            "^" => BinaryOp::Xor,
            "~^" | "^~" => BinaryOp::Xnor,
            "&&" => BinaryOp::LogAnd,
            "||" => BinaryOp::LogOr,
            "==" => BinaryOp::Eq,
            "!=" => BinaryOp::Ne,
            "<" => BinaryOp::Lt,
            "<=" => BinaryOp::Le,
            ">" => BinaryOp::Gt,
            ">=" => BinaryOp::Ge,
            "<<" => BinaryOp::Shl,
            ">>" => BinaryOp::Shr,
            "/" | "%" | "===" | "!==" | "<<<" | ">>>" => {
                return Err(ParseError::unsupported(&format!("operator '{s}'"), self.span()))
            }
            _ => return Ok(None),
        }))
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr, ParseError> {
        let start = self.span();
        let mut lhs = self.unary()?;
        while let Some(op) = self.binary_op()? {
            if op.precedence() < min_prec {
                break;
            }
            self.bump();
            if self.is_sym("*") && op == BinaryOp::Mul {
                return Err(ParseError::unsupported("operator '**'", self.span()));
            }
            let rhs = self.binary(op.precedence() + 1)?;
            let span = self.finish(start);
            lhs = self.new_expr(
                ExprKind::Binary {
                    op,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                },
                span,
            );
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        let start = self.span();
        let op = match self.peek() {
            Tok::Sym("~") => Some(UnaryOp::Not),
            Tok::Sym("!") => Some(UnaryOp::LogNot),
            Tok::Sym("-") => Some(UnaryOp::Neg),
            Tok::Sym("&") => Some(UnaryOp::RedAnd),
            Tok::Sym("|") => Some(UnaryOp::RedOr),
            Tok::Sym("^") => Some(UnaryOp::RedXor),
            Tok::Sym("~&") => Some(UnaryOp::RedNand),
            Tok::Sym("~|") => Some(UnaryOp::RedNor),
            Tok::Sym("~^") | Tok::Sym("^~") => Some(UnaryOp::RedXnor),
            Tok::Sym("+") => {
                return Err(ParseError::unsupported("unary '+'", start));
            }
            _ => None,
        };
        match op {
            Some(op) => {
                self.bump();
                let arg = self.unary()?;
                let span = self.finish(start);
                Ok(self.new_expr(
                    ExprKind::Unary {
                        op,
                        arg: Box::new(arg),
                    },
                    span,
                ))
            }
            None => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let start = self.span();
        match self.peek().clone() {
            Tok::Number(width, value, text) => {
                self.bump();
                Ok(self.new_expr(ExprKind::Literal(Literal { width, value, text }), start))
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Sym("{") => {
                self.bump();
                let first = self.expr()?;
                if self.is_sym("{") {
                    self.bump();
                    let mut parts = vec![self.expr()?];
                    while self.eat_sym(",") {
                        parts.push(self.expr()?);
                    }
                    self.expect_sym("}")?;
                    self.expect_sym("}")?;
                    let span = self.finish(start);
                    return Ok(self.new_expr(
                        ExprKind::Repeat {
                            count: Box::new(first),
                            parts,
                        },
                        span,
                    ));
                }
                let mut parts = vec![first];
                while self.eat_sym(",") {
                    parts.push(self.expr()?);
                }
                self.expect_sym("}")?;
                let span = self.finish(start);
                Ok(self.new_expr(ExprKind::Concat(parts), span))
            }
            Tok::Sym("$") => Err(ParseError::unsupported("system function", start)),
            Tok::Ident(s) if s.starts_with('$') => Err(ParseError::unsupported("system function", start)),
            Tok::Ident(_) => {
                let name = self.ident()?;
                if self.is_sym("(") {
                    return Err(ParseError::unsupported("function call", start));
                }
                if !self.eat_sym("[") {
                    return Ok(self.new_expr(ExprKind::Ident(name), start));
                }
                let first = self.expr()?;
                if self.is_sym("+:") || self.is_sym("-:") {
                    return Err(ParseError::unsupported("indexed part-select", self.span()));
                }
                if self.eat_sym(":") {
                    let lsb = self.expr()?;
                    self.expect_sym("]")?;
                    let span = self.finish(start);
                    return Ok(self.new_expr(
                        ExprKind::Slice {
                            base: name,
                            msb: Box::new(first),
                            lsb: Box::new(lsb),
                        },
                        span,
                    ));
                }
                self.expect_sym("]")?;
                if self.is_sym("[") {
                    return Err(ParseError::unsupported("multi-dimensional select", self.span()));
                }
                let span = self.finish(start);
                Ok(self.new_expr(
                    ExprKind::Index {
                        base: name,
                        index: Box::new(first),
                    },
                    span,
                ))
            }
            t => Err(self.err_here(&format!("expected expression, found {}", describe(&t)))),
        }
    }
}

enum RawSens {
    Comb,
    Edges(Vec<(EdgeKind, String)>),
}

/// With two edge events the reset is whichever one the body tests first.
fn resolve_reset(sens: RawSens, body: &Stmt) -> Sensitivity {
    let events = match sens {
        RawSens::Comb => return Sensitivity::Comb,
        RawSens::Edges(e) => e,
    };
    if events.len() == 1 {
        let (edge, clock) = events.into_iter().next().expect("one event");
        return Sensitivity::Clocked {
            edge,
            clock,
            reset: None,
        };
    }
    let tested = top_condition_name(body);
    let reset_idx = match tested {
        Some(n) if events[0].1 == n => 0,
        _ => 1,
    };
    let clock_idx = 1 - reset_idx;
    Sensitivity::Clocked {
        edge: events[clock_idx].0,
        clock: events[clock_idx].1.clone(),
        reset: Some(AsyncReset {
            name: events[reset_idx].1.clone(),
            active_high: events[reset_idx].0 == EdgeKind::Posedge,
        }),
    }
}

fn top_condition_name(body: &Stmt) -> Option<&str> {
    let s = match &body.kind {
        StmtKind::Block(v) if v.len() == 1 => &v[0],
        _ => body,
    };
    if let StmtKind::If { cond, .. } = &s.kind {
        match &cond.kind {
            ExprKind::Ident(n) => return Some(n),
            ExprKind::Unary { arg, .. } => {
                if let ExprKind::Ident(n) = &arg.kind {
                    return Some(n);
                }
            }
            _ => {}
        }
    }
    None
}

fn is_reserved(s: &str) -> bool {
    matches!(
        s,
        "module"
            | "endmodule"
            | "input"
            | "output"
            | "inout"
            | "wire"
            | "reg"
            | "assign"
            | "always"
            | "begin"
            | "end"
            | "if"
            | "else"
            | "case"
            | "endcase"
            | "default"
            | "posedge"
            | "negedge"
            | "parameter"
            | "localparam"
            | "initial"
            | "or"
            | "signed"
    )
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("'{s}'"),
        Tok::Number(_, _, text) => format!("'{text}'"),
        Tok::Sym(s) => format!("'{s}'"),
        Tok::Eof => "end of input".to_string(),
    }
}
