//! Width-annotated expression form shared by constant folding and the simulator.

use super::ast::{BinaryOp, Expr, ExprKind, UnaryOp};
use super::scope::{bits_for, mask, serr, Scope, ScopeError, SymKind, MAX_WIDTH};

#[derive(Clone, Debug)]
pub struct CExpr {
    pub width: u32,
    pub op: COp,
}

#[derive(Clone, Debug)]
pub enum COp {
    Const(u128),
    Net(u32),
    Bit {
        net: u32,
        index: Box<CExpr>,
        lsb: i64,
        src_width: u32,
    },
    Slice {
        net: u32,
        shift: u32,
    },
    MemRead {
        mem: u32,
        index: Box<CExpr>,
        base: i64,
        depth: u32,
    },
    Unary(UnaryOp, Box<CExpr>),
    Binary(BinaryOp, Box<CExpr>, Box<CExpr>),
    Ternary(Box<CExpr>, Box<CExpr>, Box<CExpr>),
    /// Most significant part first.
    Concat(Vec<CExpr>),
    Repeat(u32, Vec<CExpr>),
}

/// Compile `e` against `scope`; `slot` maps net and memory names to storage indices.
/// Parameters fold to constants. A `None` slot is an error unless the name is a parameter.
pub fn compile(e: &Expr, scope: &Scope, slot: &dyn Fn(&str) -> Option<u32>) -> Result<CExpr, ScopeError> {
    let resolve = |name: &str| -> Result<(&super::scope::Symbol, Option<u32>), ScopeError> {
        let sym = scope
            .get(name)
            .ok_or_else(|| serr(format!("undeclared identifier '{name}'"), e.span))?;
        Ok((sym, slot(name)))
    };
    let (width, op) = match &e.kind {
        ExprKind::Literal(l) => {
            let w = l.width.unwrap_or_else(|| bits_for(l.value));
            (w, COp::Const(l.value & mask(w)))
        }
        ExprKind::Ident(n) => {
            let (sym, s) = resolve(n)?;
            match &sym.kind {
                SymKind::Param { value } => (sym.width, COp::Const(*value)),
                SymKind::Memory { .. } => {
                    return Err(serr(format!("memory '{n}' used without an index"), e.span))
                }
                _ => {
                    let s = s.ok_or_else(|| serr(format!("'{n}' is not a constant"), e.span))?;
                    (sym.width, COp::Net(s))
                }
            }
        }
        ExprKind::Index { base, index } => {
            let (sym, s) = resolve(base)?;
            let index = Box::new(compile(index, scope, slot)?);
            match &sym.kind {
                SymKind::Memory { depth, base: mbase } => {
                    let s = s.ok_or_else(|| serr(format!("'{base}' is not a constant"), e.span))?;
                    (
                        sym.width,
                        COp::MemRead {
                            mem: s,
                            index,
                            base: *mbase,
                            depth: *depth,
                        },
                    )
                }
                SymKind::Param { value } => {
                    let i = index.eval(&[], &[]) as i64 - sym.lsb;
                    let bit = if (0..sym.width as i64).contains(&i) { (value >> i) & 1 } else { 0 };
                    (1, COp::Const(bit))
                }
                _ => {
                    let s = s.ok_or_else(|| serr(format!("'{base}' is not a constant"), e.span))?;
                    (
                        1,
                        COp::Bit {
                            net: s,
                            index,
                            lsb: sym.lsb,
                            src_width: sym.width,
                        },
                    )
                }
            }
        }
        ExprKind::Slice { base, msb, lsb } => {
            let (sym, s) = resolve(base)?;
            if sym.is_memory() {
                return Err(serr("part-select on a memory", e.span));
            }
            let h = scope.const_eval(msb)? as i64;
            let l = scope.const_eval(lsb)? as i64;
            if h < l || l < sym.lsb || h >= sym.lsb + sym.width as i64 {
                return Err(serr(format!("part-select [{h}:{l}] out of range for '{base}'"), e.span));
            }
            let w = (h - l + 1) as u32;
            let shift = (l - sym.lsb) as u32;
            match &sym.kind {
                SymKind::Param { value } => (w, COp::Const((value >> shift) & mask(w))),
                _ => {
                    let s = s.ok_or_else(|| serr(format!("'{base}' is not a constant"), e.span))?;
                    (w, COp::Slice { net: s, shift })
                }
            }
        }
        ExprKind::Unary { op, arg } => {
            let a = compile(arg, scope, slot)?;
            let w = match op {
                UnaryOp::Not | UnaryOp::Neg => a.width,
                _ => 1,
            };
            (w, COp::Unary(*op, Box::new(a)))
        }
        ExprKind::Binary { op, lhs, rhs } => {
            let a = compile(lhs, scope, slot)?;
            let b = compile(rhs, scope, slot)?;
            let w = match op {
                BinaryOp::Add | BinaryOp::Sub | BinaryOp::And | BinaryOp::Or | BinaryOp::Xor | BinaryOp::Xnor => {
                    a.width.max(b.width)
                }
                BinaryOp::Mul => a.width + b.width,
                BinaryOp::Shl | BinaryOp::Shr => a.width,
                _ => 1,
            };
            (w, COp::Binary(*op, Box::new(a), Box::new(b)))
        }
        ExprKind::Ternary {
            cond,
            then_expr,
            else_expr,
        } => {
            let c = compile(cond, scope, slot)?;
            let t = compile(then_expr, scope, slot)?;
            let f = compile(else_expr, scope, slot)?;
            (t.width.max(f.width), COp::Ternary(Box::new(c), Box::new(t), Box::new(f)))
        }
        ExprKind::Concat(parts) => {
            let parts = parts
                .iter()
                .map(|p| compile(p, scope, slot))
                .collect::<Result<Vec<_>, _>>()?;
            let w: u64 = parts.iter().map(|p| p.width as u64).sum();
            (w.min(u32::MAX as u64) as u32, COp::Concat(parts))
        }
        ExprKind::Repeat { count, parts } => {
            let n = scope.const_eval(count)?;
            if n == 0 {
                return Err(serr("replication count must be at least 1", e.span));
            }
            let parts = parts
                .iter()
                .map(|p| compile(p, scope, slot))
                .collect::<Result<Vec<_>, _>>()?;
            let w: u128 = parts.iter().map(|p| p.width as u128).sum::<u128>().saturating_mul(n);
            let n = n.min(u32::MAX as u128) as u32;
            (w.min(u32::MAX as u128) as u32, COp::Repeat(n, parts))
        }
    };
    if width > MAX_WIDTH {
        return Err(serr(
            format!("expression width {width} exceeds the {MAX_WIDTH}-bit limit"),
            e.span,
        ));
    }
    Ok(CExpr { width, op })
}

impl CExpr {
    /// Evaluate against net values and memory contents. Results are masked to `self.width`.
    pub fn eval(&self, nets: &[u128], mems: &[Vec<u128>]) -> u128 {
        let w = self.width;
        let v = match &self.op {
            COp::Const(v) => *v,
            COp::Net(s) => nets[*s as usize],
            COp::Bit {
                net,
                index,
                lsb,
                src_width,
            } => {
                let i = index.eval(nets, mems) as i128 - *lsb as i128;
                if i >= 0 && i < *src_width as i128 {
                    (nets[*net as usize] >> i) & 1
                } else {
                    0
                }
            }
            COp::Slice { net, shift } => nets[*net as usize] >> shift,
            COp::MemRead {
                mem,
                index,
                base,
                depth,
            } => {
                let i = index.eval(nets, mems) as i128 - *base as i128;
                if i >= 0 && i < *depth as i128 {
                    mems[*mem as usize][i as usize]
                } else {
                    0
                }
            }
            COp::Unary(op, a) => {
                let x = a.eval(nets, mems);
                let m = mask(a.width);
                match op {
                    UnaryOp::Not => !x,
                    UnaryOp::Neg => x.wrapping_neg(),
                    UnaryOp::LogNot => (x == 0) as u128,
                    UnaryOp::RedAnd => (x == m) as u128,
                    UnaryOp::RedNand => (x != m) as u128,
                    UnaryOp::RedOr => (x != 0) as u128,
                    UnaryOp::RedNor => (x == 0) as u128,
                    UnaryOp::RedXor => (x.count_ones() & 1) as u128,
                    UnaryOp::RedXnor => ((x.count_ones() & 1) ^ 1) as u128,
                }
            }
            COp::Binary(op, a, b) => {
                let x = a.eval(nets, mems);
                let y = b.eval(nets, mems);
                match op {
                    BinaryOp::Add => x.wrapping_add(y),
                    BinaryOp::Sub => x.wrapping_sub(y),
                    BinaryOp::Mul => x.wrapping_mul(y),
                    BinaryOp::And => x & y,
                    BinaryOp::Or => x | y,
                    BinaryOp::Xor => x ^ y,
                    BinaryOp::Xnor => !(x ^ y),
                    BinaryOp::LogAnd => (x != 0 && y != 0) as u128,
                    BinaryOp::LogOr => (x != 0 || y != 0) as u128,
                    BinaryOp::Eq => (x == y) as u128,
                    BinaryOp::Ne => (x != y) as u128,
                    BinaryOp::Lt => (x < y) as u128,
                    BinaryOp::Le => (x <= y) as u128,
                    BinaryOp::Gt => (x > y) as u128,
                    BinaryOp::Ge => (x >= y) as u128,
                    BinaryOp::Shl => {
                        if y >= w as u128 {
                            0
                        } else {
                            x << y
                        }
                    }
                    BinaryOp::Shr => {
                        if y >= 128 {
                            0
                        } else {
                            x >> y
                        }
                    }
                }
            }
            COp::Ternary(c, t, f) => {
                if c.eval(nets, mems) != 0 {
                    t.eval(nets, mems)
                } else {
                    f.eval(nets, mems)
                }
            }
            COp::Concat(parts) => concat(parts, nets, mems),
            COp::Repeat(n, parts) => {
                let unit = concat(parts, nets, mems);
                let uw: u32 = parts.iter().map(|p| p.width).sum();
                let mut acc = 0u128;
                for _ in 0..*n {
                    acc = if uw >= 128 { unit } else { (acc << uw) | unit };
                }
                acc
            }
        };
        v & mask(w)
    }
}

fn concat(parts: &[CExpr], nets: &[u128], mems: &[Vec<u128>]) -> u128 {
    let mut acc = 0u128;
    for p in parts {
        let v = p.eval(nets, mems);
        acc = if p.width >= 128 { v } else { (acc << p.width) | v };
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::super::parser::{parse, parse_expr};
    use super::*;

    fn eval_in(decls: &str, expr: &str, values: &[(&str, u128)]) -> u128 {
        let u = parse(&format!("module t({decls}); endmodule")).unwrap();
        let (scope, errs) = Scope::build(&u.modules[0]);
        assert!(errs.is_empty());
        let names: Vec<String> = scope.order.clone();
        let slot = |n: &str| names.iter().position(|x| x == n).map(|i| i as u32);
        let c = compile(&parse_expr(expr).unwrap(), &scope, &slot).unwrap();
        let mut nets = vec![0u128; names.len()];
        for (n, v) in values {
            nets[slot(n).unwrap() as usize] = *v;
        }
        c.eval(&nets, &[])
    }

    #[test]
    fn self_determined_arithmetic_wraps() {
        let d = "input [7:0] a, input [7:0] b";
        assert_eq!(eval_in(d, "a + b", &[("a", 200), ("b", 100)]), 44);
        assert_eq!(eval_in(d, "a - b", &[("a", 1), ("b", 2)]), 255);
        assert_eq!(eval_in(d, "a * b", &[("a", 200), ("b", 100)]), 20000);
        assert_eq!(eval_in(d, "{a, b}", &[("a", 1), ("b", 2)]), 0x0102);
        assert_eq!(eval_in(d, "a << 3", &[("a", 0x81)]), 0x08);
        assert_eq!(eval_in(d, "a << b", &[("a", 1), ("b", 9)]), 0);
        assert_eq!(eval_in(d, "~a", &[("a", 0x0F)]), 0xF0);
        assert_eq!(eval_in(d, "-a", &[("a", 1)]), 0xFF);
        assert_eq!(eval_in(d, "^a", &[("a", 0b0111)]), 1);
        assert_eq!(eval_in(d, "~|a", &[("a", 0)]), 1);
        assert_eq!(eval_in(d, "a[b]", &[("a", 0b100), ("b", 2)]), 1);
        assert_eq!(eval_in(d, "a[b]", &[("a", 0xFF), ("b", 8)]), 0);
        assert_eq!(eval_in(d, "a[6:4]", &[("a", 0b0101_0000)]), 0b101);
        assert_eq!(eval_in(d, "{2{a[1:0]}}", &[("a", 0b10)]), 0b1010);
        assert_eq!(eval_in(d, "a > b ? a : b", &[("a", 3), ("b", 9)]), 9);
    }

    #[test]
    fn lsb_offset_ranges() {
        let d = "input [11:4] a";
        assert_eq!(eval_in(d, "a[4]", &[("a", 1)]), 1);
        assert_eq!(eval_in(d, "a[11:8]", &[("a", 0xA5)]), 0xA);
    }
}
