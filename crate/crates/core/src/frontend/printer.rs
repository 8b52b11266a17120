//! Canonical pretty-printer. Output reparses to a structurally equal tree.

use super::ast::*;
use std::fmt::Write;

const INDENT: &str = "  ";

pub fn print_unit(unit: &SourceUnit) -> String {
    let mut out = String::new();
    for (i, m) in unit.modules.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        print_module_into(&mut out, m);
    }
    out
}

pub fn print_module(m: &ModuleDecl) -> String {
    let mut out = String::new();
    print_module_into(&mut out, m);
    out
}

fn print_module_into(out: &mut String, m: &ModuleDecl) {
    if m.ports.is_empty() {
        let _ = writeln!(out, "module {};", m.name);
    } else {
        let _ = writeln!(out, "module {}(", m.name);
        for (i, p) in m.ports.iter().enumerate() {
            let dir = match p.dir {
                Direction::Input => "input",
                Direction::Output => "output",
            };
            let kind = match p.kind {
                NetKind::Reg => " reg",
                NetKind::Wire => "",
            };
            let sep = if i + 1 < m.ports.len() { "," } else { "" };
            let _ = writeln!(out, "{INDENT}{dir}{kind}{} {}{sep}", range_str(&p.range, true), p.name);
        }
        out.push_str(");\n");
    }
    for item in &m.items {
        print_item(out, item);
    }
    out.push_str("endmodule\n");
}

fn range_str(r: &Option<Range>, leading_space: bool) -> String {
    match r {
        None => String::new(),
        Some(r) => {
            let s = format!("[{}:{}]", expr_str(&r.msb), expr_str(&r.lsb));
            if leading_space {
                format!(" {s}")
            } else {
                s
            }
        }
    }
}

fn print_item(out: &mut String, item: &Item) {
    match item {
        Item::Net(n) => {
            let kw = match n.kind {
                NetKind::Wire => "wire",
                NetKind::Reg => "reg",
            };
            let names: Vec<String> = n
                .names
                .iter()
                .map(|nm| match &nm.array {
                    Some(_) => format!("{} {}", nm.name, range_str(&nm.array, false)),
                    None => nm.name.clone(),
                })
                .collect();
            let _ = writeln!(out, "{INDENT}{kw}{} {};", range_str(&n.range, true), names.join(", "));
        }
        Item::Param(p) => {
            let kw = if p.local { "localparam" } else { "parameter" };
            let parts: Vec<String> = p
                .assigns
                .iter()
                .map(|(n, e)| format!("{n} = {}", expr_str(e)))
                .collect();
            let _ = writeln!(out, "{INDENT}{kw}{} {};", range_str(&p.range, true), parts.join(", "));
        }
        Item::Assign(a) => {
            let _ = writeln!(out, "{INDENT}assign {} = {};", lvalue_str(&a.lhs), expr_str(&a.rhs));
        }
        Item::Process(p) => {
            let sens = match &p.sensitivity {
                Sensitivity::Comb => "*".to_string(),
                Sensitivity::Clocked { edge, clock, reset } => {
                    let mut s = format!("({} {clock}", edge_str(*edge));
                    if let Some(r) = reset {
                        let e = if r.active_high { "posedge" } else { "negedge" };
                        let _ = write!(s, " or {e} {}", r.name);
                    }
                    s.push(')');
                    s
                }
            };
            let _ = write!(out, "{INDENT}always @{sens}");
            print_attached(out, &p.body, 1);
        }
        Item::Instance(inst) => {
            let _ = write!(out, "{INDENT}{} {} (", inst.module, inst.name);
            let conns: Vec<String> = inst
                .conns
                .iter()
                .map(|c| match c {
                    PortConn::Named(p, Some(e)) => format!(".{p}({})", expr_str(e)),
                    PortConn::Named(p, None) => format!(".{p}()"),
                    PortConn::Positional(e) => expr_str(e),
                })
                .collect();
            if conns.is_empty() {
                out.push_str(");\n");
            } else {
                out.push('\n');
                for (i, c) in conns.iter().enumerate() {
                    let sep = if i + 1 < conns.len() { "," } else { "" };
                    let _ = writeln!(out, "{INDENT}{INDENT}{c}{sep}");
                }
                let _ = writeln!(out, "{INDENT});");
            }
        }
    }
}

fn edge_str(e: EdgeKind) -> &'static str {
    match e {
        EdgeKind::Posedge => "posedge",
        EdgeKind::Negedge => "negedge",
    }
}

/// Print a statement that follows a header (`always @..`, `if (..)`, `else`).
/// Blocks open on the header line; anything else goes on its own indented line.
fn print_attached(out: &mut String, s: &Stmt, level: usize) {
    match &s.kind {
        StmtKind::Block(_) => {
            out.push(' ');
            print_stmt_inline(out, s, level);
            out.push('\n');
        }
        _ => {
            out.push('\n');
            print_stmt(out, s, level + 1);
        }
    }
}

fn pad(level: usize) -> String {
    INDENT.repeat(level)
}

fn print_stmt(out: &mut String, s: &Stmt, level: usize) {
    out.push_str(&pad(level));
    print_stmt_inline(out, s, level);
    out.push('\n');
}

/// Print without leading indentation or trailing newline.
fn print_stmt_inline(out: &mut String, s: &Stmt, level: usize) {
    match &s.kind {
        StmtKind::Null => out.push(';'),
        StmtKind::Block(stmts) => {
            out.push_str("begin\n");
            for st in stmts {
                print_stmt(out, st, level + 1);
            }
            out.push_str(&pad(level));
            out.push_str("end");
        }
        StmtKind::Assign {
            kind,
            lhs,
            delay,
            rhs,
        } => {
            let op = match kind {
                AssignKind::Blocking => "=",
                AssignKind::NonBlocking => "<=",
            };
            let d = delay.map(|d| format!("#{d} ")).unwrap_or_default();
            let _ = write!(out, "{} {op} {d}{};", lvalue_str(lhs), expr_str(rhs));
        }
        StmtKind::If {
            cond,
            then_stmt,
            else_stmt,
        } => {
            let _ = write!(out, "if ({})", expr_str(cond));
            let then_is_block = matches!(then_stmt.kind, StmtKind::Block(_));
            if then_is_block {
                out.push(' ');
                print_stmt_inline(out, then_stmt, level);
            } else {
                out.push('\n');
                out.push_str(&pad(level + 1));
                print_stmt_inline(out, then_stmt, level + 1);
            }
            if let Some(e) = else_stmt {
                if then_is_block {
                    out.push_str(" else");
                } else {
                    out.push('\n');
                    out.push_str(&pad(level));
                    out.push_str("else");
                }
                match &e.kind {
                    StmtKind::If { .. } | StmtKind::Block(_) => {
                        out.push(' ');
                        print_stmt_inline(out, e, level);
                    }
                    _ => {
                        out.push('\n');
                        out.push_str(&pad(level + 1));
                        print_stmt_inline(out, e, level + 1);
                    }
                }
            }
        }
        StmtKind::Case { sel, items } => {
            let _ = writeln!(out, "case ({})", expr_str(sel));
            for it in items {
                out.push_str(&pad(level + 1));
                if it.is_default() {
                    out.push_str("default:");
                } else {
                    let labels: Vec<String> = it.labels.iter().map(expr_str).collect();
                    let _ = write!(out, "{}:", labels.join(", "));
                }
                match &it.body.kind {
                    StmtKind::Block(_) => {
                        out.push(' ');
                        print_stmt_inline(out, &it.body, level + 1);
                        out.push('\n');
                    }
                    _ => {
                        out.push('\n');
                        print_stmt(out, &it.body, level + 2);
                    }
                }
            }
            out.push_str(&pad(level));
            out.push_str("endcase");
        }
    }
}

pub fn lvalue_str(l: &LValue) -> String {
    match l {
        LValue::Whole(n) => n.clone(),
        LValue::Bit { name, index } => format!("{name}[{}]", expr_str(index)),
        LValue::Part { name, msb, lsb } => format!("{name}[{}:{}]", expr_str(msb), expr_str(lsb)),
    }
}

pub fn expr_str(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e);
    s
}

// Ternary binds loosest; primaries tightest.
const PREC_TERNARY: u8 = 0;
const PREC_UNARY: u8 = 20;
const PREC_PRIMARY: u8 = 30;

fn prec_of(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Ternary { .. } => PREC_TERNARY,
        ExprKind::Binary { op, .. } => op.precedence(),
        ExprKind::Unary { .. } => PREC_UNARY,
        _ => PREC_PRIMARY,
    }
}

fn write_paren(out: &mut String, e: &Expr, paren: bool) {
    if paren {
        out.push('(');
        write_expr(out, e);
        out.push(')');
    } else {
        write_expr(out, e);
    }
}

fn write_expr(out: &mut String, e: &Expr) {
    match &e.kind {
        ExprKind::Ident(n) => out.push_str(n),
        ExprKind::Literal(l) => out.push_str(&l.text),
        ExprKind::Index { base, index } => {
            let _ = write!(out, "{base}[{}]", expr_str(index));
        }
        ExprKind::Slice { base, msb, lsb } => {
            let _ = write!(out, "{base}[{}:{}]", expr_str(msb), expr_str(lsb));
        }
        ExprKind::Unary { op, arg } => {
            out.push_str(op.symbol());
            // nested unary operators are parenthesized so `~&` or `--` never fuse
            let paren = prec_of(arg) < PREC_PRIMARY;
            write_paren(out, arg, paren);
        }
        ExprKind::Binary { op, lhs, rhs } => {
            let p = op.precedence();
            let lp = prec_of(lhs);
            let rp = prec_of(rhs);
            let lparen = lp < p || is_fusable_unary(lhs);
            let rparen = rp <= p || is_fusable_unary(rhs);
            write_paren(out, lhs, lparen);
            let _ = write!(out, " {} ", op.symbol());
            write_paren(out, rhs, rparen);
        }
        ExprKind::Ternary {
            cond,
            then_expr,
            else_expr,
        } => {
            write_paren(out, cond, prec_of(cond) == PREC_TERNARY);
            out.push_str(" ? ");
            write_paren(out, then_expr, prec_of(then_expr) == PREC_TERNARY);
            out.push_str(" : ");
            write_expr(out, else_expr);
        }
        ExprKind::Concat(parts) => {
            out.push('{');
            let v: Vec<String> = parts.iter().map(expr_str).collect();
            out.push_str(&v.join(", "));
            out.push('}');
        }
        ExprKind::Repeat { count, parts } => {
            let v: Vec<String> = parts.iter().map(expr_str).collect();
            let _ = write!(out, "{{{}{{{}}}}}", expr_str(count), v.join(", "));
        }
    }
}

/// Reductions and negation next to a binary operator read ambiguously (`a & &b`).
fn is_fusable_unary(e: &Expr) -> bool {
    matches!(&e.kind, ExprKind::Unary { op, .. } if op.is_reduction() || *op == UnaryOp::Neg)
}

#[cfg(test)]
mod tests {
    use super::super::parser::{parse, parse_expr};
    use super::*;

    fn rt(src: &str) -> String {
        expr_str(&parse_expr(src).unwrap())
    }

    #[test]
    fn minimal_parentheses() {
        assert_eq!(rt("a + (b * c)"), "a + b * c");
        assert_eq!(rt("(a + b) * c"), "(a + b) * c");
        assert_eq!(rt("a - (b - c)"), "a - (b - c)");
        assert_eq!(rt("(a - b) - c"), "a - b - c");
        assert_eq!(rt("a & (&b)"), "a & (&b)");
        assert_eq!(rt("c ? (d ? e : f) : g ? h : i"), "c ? (d ? e : f) : g ? h : i");
        assert_eq!(rt("{2{a, b}}"), "{2{a, b}}");
        assert_eq!(rt("~(a | b)"), "~(a | b)");
    }

    #[test]
    fn module_layout() {
        let src = "module t(input a, input b, output y); assign y = a & b; endmodule";
        let printed = print_unit(&parse(src).unwrap());
        assert_eq!(
            printed,
            "module t(\n  input a,\n  input b,\n  output y\n);\n  assign y = a & b;\nendmodule\n"
        );
    }

    #[test]
    fn else_if_chain_layout() {
        let src = "module t(input clk, input a, output reg q);
            always @(posedge clk) if (a) q <= 1'b1; else if (q) q <= 1'b0; else begin q <= a; end
            endmodule";
        let printed = print_unit(&parse(src).unwrap());
        assert!(printed.contains("  always @(posedge clk)\n    if (a)\n      q <= 1'b1;\n    else if (q)\n"));
        assert_eq!(parse(&printed).unwrap().modules, parse(src).unwrap().modules);
    }
}
