//! Per-module symbol table, constant evaluation and expression widths.
//!
//! Width rules (self-determined, unsigned, zero-extension):
//!
//! | expression                     | width                          |
//! |--------------------------------|--------------------------------|
//! | identifier / parameter         | declared width                 |
//! | sized literal `N'...`          | N                              |
//! | unsized literal                | bits needed for its value (≥1) |
//! | `a[i]` on a vector             | 1                              |
//! | `m[i]` on a memory             | word width                     |
//! | `a[h:l]`                       | h − l + 1                      |
//! | `~a`, `-a`                     | width of a                     |
//! | `!a`, reductions               | 1                              |
//! | `+ - & \| ^ ~^`                 | max of operands                |
//! | `*`                            | sum of operands                |
//! | comparisons, `&&`, `\|\|`        | 1                              |
//! | `<<`, `>>`                     | width of left operand          |
//! | `c ? a : b`                    | max of a and b                 |
//! | `{a, b}` / `{n{a}}`            | sum / n × sum                  |
//!
//! Operands are zero-extended to the result width and results are truncated
//! to it. Assignments zero-extend or truncate to the target width. Unlike
//! IEEE 1364 there is no context-determined widening: `a + b` on two 8-bit
//! values is an 8-bit sum wherever it appears, so any subexpression can be
//! lifted into its own wire without changing its value.

use super::ast::*;
use std::collections::{BTreeMap, BTreeSet};

pub const MAX_WIDTH: u32 = 128;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SymKind {
    Input,
    Output,
    Wire,
    Reg,
    Memory { depth: u32, base: i64 },
    Param { value: u128 },
}

#[derive(Clone, Debug)]
pub struct Symbol {
    pub name: String,
    pub kind: SymKind,
    /// `reg` vs `wire` for outputs.
    pub net_kind: NetKind,
    pub width: u32,
    /// Index of the least significant bit in the declared range.
    pub lsb: i64,
    pub span: Span,
}

impl Symbol {
    pub fn is_memory(&self) -> bool {
        matches!(self.kind, SymKind::Memory { .. })
    }

    pub fn is_param(&self) -> bool {
        matches!(self.kind, SymKind::Param { .. })
    }
}

#[derive(Clone, Debug, Default)]
pub struct Scope {
    pub symbols: BTreeMap<String, Symbol>,
    /// Declaration order.
    pub order: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScopeError {
    pub message: String,
    pub span: Span,
}

pub(crate) fn serr(message: impl Into<String>, span: Span) -> ScopeError {
    ScopeError {
        message: message.into(),
        span,
    }
}

pub fn bits_for(value: u128) -> u32 {
    (128 - value.leading_zeros()).max(1)
}

pub fn mask(width: u32) -> u128 {
    if width >= 128 {
        u128::MAX
    } else {
        (1u128 << width) - 1
    }
}

impl Scope {
    /// Build the symbol table; collects every problem instead of stopping at the first.
    pub fn build(module: &ModuleDecl) -> (Scope, Vec<ScopeError>) {
        let mut scope = Scope::default();
        let mut errs = Vec::new();
        // parameters first so ranges can use them
        for p in module.params() {
            for (name, e) in &p.assigns {
                let value = match scope.const_eval(e) {
                    Ok(v) => v,
                    Err(err) => {
                        errs.push(err);
                        0
                    }
                };
                let (width, lsb) = match &p.range {
                    Some(r) => match scope.range_width(r) {
                        Ok(w) => w,
                        Err(err) => {
                            errs.push(err);
                            (1, 0)
                        }
                    },
                    None => (bits_for(value), 0),
                };
                let value = value & mask(width);
                scope.insert(
                    Symbol {
                        name: name.clone(),
                        kind: SymKind::Param { value },
                        net_kind: NetKind::Wire,
                        width,
                        lsb,
                        span: p.span,
                    },
                    &mut errs,
                );
            }
        }
        for port in &module.ports {
            let (width, lsb) = scope.opt_range_width(&port.range, &mut errs);
            let kind = match port.dir {
                Direction::Input => SymKind::Input,
                Direction::Output => SymKind::Output,
            };
            if port.dir == Direction::Input && port.kind == NetKind::Reg {
                errs.push(serr(format!("input '{}' declared as reg", port.name), port.span));
            }
            scope.insert(
                Symbol {
                    name: port.name.clone(),
                    kind,
                    net_kind: port.kind,
                    width,
                    lsb,
                    span: port.span,
                },
                &mut errs,
            );
        }
        for n in module.nets() {
            let (width, lsb) = scope.opt_range_width(&n.range, &mut errs);
            for nm in &n.names {
                let kind = match (&nm.array, n.kind) {
                    (Some(arr), NetKind::Reg) => match scope.range_bounds(arr) {
                        Ok((a, b)) => {
                            let depth = (a - b).unsigned_abs() + 1;
                            if depth > (1 << 20) {
                                errs.push(serr(format!("memory '{}' too deep", nm.name), n.span));
                            }
                            SymKind::Memory {
                                depth: depth as u32,
                                base: a.min(b),
                            }
                        }
                        Err(e) => {
                            errs.push(e);
                            SymKind::Memory { depth: 1, base: 0 }
                        }
                    },
                    (Some(_), NetKind::Wire) => {
                        errs.push(serr(format!("wire array '{}' is not supported", nm.name), n.span));
                        SymKind::Wire
                    }
                    (None, NetKind::Reg) => SymKind::Reg,
                    (None, NetKind::Wire) => SymKind::Wire,
                };
                scope.insert(
                    Symbol {
                        name: nm.name.clone(),
                        kind,
                        net_kind: n.kind,
                        width,
                        lsb,
                        span: n.span,
                    },
                    &mut errs,
                );
            }
        }
        (scope, errs)
    }

    fn insert(&mut self, sym: Symbol, errs: &mut Vec<ScopeError>) {
        if self.symbols.contains_key(&sym.name) {
            errs.push(serr(format!("duplicate declaration of '{}'", sym.name), sym.span));
            return;
        }
        self.order.push(sym.name.clone());
        self.symbols.insert(sym.name.clone(), sym);
    }

    pub fn get(&self, name: &str) -> Option<&Symbol> {
        self.symbols.get(name)
    }

    fn opt_range_width(&self, r: &Option<Range>, errs: &mut Vec<ScopeError>) -> (u32, i64) {
        match r {
            None => (1, 0),
            Some(r) => match self.range_width(r) {
                Ok(w) => w,
                Err(e) => {
                    errs.push(e);
                    (1, 0)
                }
            },
        }
    }

    pub fn range_bounds(&self, r: &Range) -> Result<(i64, i64), ScopeError> {
        let msb = self.const_eval(&r.msb)? as i64;
        let lsb = self.const_eval(&r.lsb)? as i64;
        Ok((msb, lsb))
    }

    /// Width and lsb offset of a packed range; only descending ranges are accepted.
    pub fn range_width(&self, r: &Range) -> Result<(u32, i64), ScopeError> {
        let (msb, lsb) = self.range_bounds(r)?;
        if msb < lsb {
            return Err(serr("ascending packed ranges are not supported", r.msb.span));
        }
        let w = (msb - lsb + 1) as u64;
        if w > MAX_WIDTH as u64 {
            return Err(serr(format!("width {w} exceeds the {MAX_WIDTH}-bit limit"), r.msb.span));
        }
        Ok((w as u32, lsb))
    }

    /// Evaluate a constant expression (literals and parameters only).
    pub fn const_eval(&self, e: &Expr) -> Result<u128, ScopeError> {
        if !self.is_const(e) {
            return Err(serr("expression is not constant", e.span));
        }
        let c = super::eval::compile(e, self, &|_| None)?;
        Ok(c.eval(&[], &[]))
    }

    /// True when the expression depends only on literals and parameters.
    pub fn is_const(&self, e: &Expr) -> bool {
        let mut ok = true;
        e.walk(&mut |x| match &x.kind {
            ExprKind::Ident(n) | ExprKind::Index { base: n, .. } | ExprKind::Slice { base: n, .. } => {
                if !self.get(n).map(|s| s.is_param()).unwrap_or(false) {
                    ok = false;
                }
            }
            _ => {}
        });
        ok
    }

    /// Self-determined width of an expression.
    pub fn width(&self, e: &Expr) -> Result<u32, ScopeError> {
        super::eval::compile(e, self, &|_| Some(0)).map(|c| c.width)
    }

    /// True when a `case` has a `default` arm or its labels enumerate every selector value.
    pub fn case_is_full(&self, sel: &Expr, items: &[CaseItem]) -> bool {
        if items.iter().any(|i| i.is_default()) {
            return true;
        }
        let Ok(w) = self.width(sel) else { return false };
        if w > 16 {
            return false;
        }
        let mut seen = BTreeSet::new();
        for l in items.iter().flat_map(|i| i.labels.iter()) {
            match self.const_eval(l) {
                Ok(v) if v <= mask(w) => {
                    seen.insert(v);
                }
                Ok(_) => {}
                Err(_) => return false,
            }
        }
        seen.len() as u128 == 1u128 << w
    }

    /// Width of the bits written by an lvalue.
    pub fn lvalue_width(&self, l: &LValue) -> Result<u32, ScopeError> {
        let sym = self
            .get(l.name())
            .ok_or_else(|| serr(format!("undeclared identifier '{}'", l.name()), Span::default()))?;
        Ok(match l {
            LValue::Whole(_) => sym.width,
            LValue::Bit { .. } => {
                if sym.is_memory() {
                    sym.width
                } else {
                    1
                }
            }
            LValue::Part { msb, lsb, .. } => {
                let h = self.const_eval(msb)? as i64;
                let lo = self.const_eval(lsb)? as i64;
                if h < lo || lo < sym.lsb || h >= sym.lsb + sym.width as i64 {
                    return Err(serr(format!("part-select out of range for '{}'", l.name()), msb.span));
                }
                (h - lo + 1) as u32
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::parser::parse;
    use super::*;

    fn scope_of(src: &str) -> Scope {
        let u = parse(src).unwrap();
        let (s, errs) = Scope::build(&u.modules[0]);
        assert!(errs.is_empty(), "{errs:?}");
        s
    }

    #[test]
    fn widths_follow_the_table() {
        let s = scope_of(
            "module t(input [7:0] a, input [3:0] b, output y); localparam [1:0] K = 2; reg [7:0] m [0:3]; endmodule",
        );
        let w = |src: &str| s.width(&super::super::parser::parse_expr(src).unwrap()).unwrap();
        assert_eq!(w("a + b"), 8);
        assert_eq!(w("a * b"), 12);
        assert_eq!(w("a + 1"), 8);
        assert_eq!(w("a == b"), 1);
        assert_eq!(w("&a"), 1);
        assert_eq!(w("{a, b}"), 12);
        assert_eq!(w("{3{b}}"), 12);
        assert_eq!(w("a[2]"), 1);
        assert_eq!(w("a[5:2]"), 4);
        assert_eq!(w("m[b]"), 8);
        assert_eq!(w("b ? a : b"), 8);
        assert_eq!(w("a << b"), 8);
        assert_eq!(w("K"), 2);
        assert_eq!(w("300"), 9);
    }

    #[test]
    fn params_feed_ranges() {
        let s = scope_of("module t(input a); localparam W = 12; wire [W-1:0] x; endmodule");
        assert_eq!(s.get("x").unwrap().width, 12);
    }

    #[test]
    fn duplicate_reported() {
        let u = parse("module t(input a); wire a; endmodule").unwrap();
        let (_, errs) = Scope::build(&u.modules[0]);
        assert_eq!(errs.len(), 1);
    }
}
