//! Inline module instances into a single flat module.
//!
//! Nets of an instance `u` become `u__<net>`. An input port tied to a plain
//! parent net of the same width is replaced by that net, so clocks and resets
//! pass through without an intermediate wire.

use super::ast::*;
use super::scope::Scope;
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum FlattenError {
    #[error("unknown module '{0}'")]
    UnknownModule(String),
    #[error("recursive instantiation of '{0}'")]
    Recursive(String),
    #[error("instance '{inst}': {msg}")]
    Connection { inst: String, msg: String },
}

/// Flatten `top` and every module below it; expression ids are renumbered from zero.
pub fn flatten(unit: &SourceUnit, top: &str) -> Result<ModuleDecl, FlattenError> {
    let mut m = flatten_rec(unit, top, &mut Vec::new())?;
    renumber_exprs(&mut m, 0);
    Ok(m)
}

fn flatten_rec(unit: &SourceUnit, name: &str, stack: &mut Vec<String>) -> Result<ModuleDecl, FlattenError> {
    let m = unit
        .module(name)
        .ok_or_else(|| FlattenError::UnknownModule(name.to_string()))?;
    if stack.iter().any(|s| s == name) {
        return Err(FlattenError::Recursive(name.to_string()));
    }
    if m.instances().next().is_none() {
        return Ok(m.clone());
    }
    stack.push(name.to_string());
    let (parent_scope, _) = Scope::build(m);
    let mut items = Vec::new();
    for item in &m.items {
        match item {
            Item::Instance(inst) => {
                let sub = flatten_rec(unit, &inst.module, stack)?;
                inline(&parent_scope, inst, sub, &mut items)?;
            }
            other => items.push(other.clone()),
        }
    }
    stack.pop();
    Ok(ModuleDecl {
        name: m.name.clone(),
        ports: m.ports.clone(),
        items,
        span: m.span,
    })
}

fn conn_err(inst: &Instance, msg: impl Into<String>) -> FlattenError {
    FlattenError::Connection {
        inst: inst.name.clone(),
        msg: msg.into(),
    }
}

fn inline(parent: &Scope, inst: &Instance, sub: ModuleDecl, items: &mut Vec<Item>) -> Result<(), FlattenError> {
    let (sub_scope, _) = Scope::build(&sub);
    let mut conns: BTreeMap<String, Option<Expr>> = BTreeMap::new();
    for (i, c) in inst.conns.iter().enumerate() {
        let (port, e) = match c {
            PortConn::Named(n, e) => (n.clone(), e.clone()),
            PortConn::Positional(e) => match sub.ports.get(i) {
                Some(p) => (p.name.clone(), Some(e.clone())),
                None => return Err(conn_err(inst, "too many positional connections")),
            },
        };
        if sub.port(&port).is_none() {
            return Err(conn_err(inst, format!("no port '{port}' on '{}'", sub.name)));
        }
        conns.insert(port, e);
    }

    // Inputs wired straight to a same-width parent net are substituted.
    let mut subst: BTreeMap<String, String> = BTreeMap::new();
    for p in &sub.ports {
        if p.dir != Direction::Input {
            continue;
        }
        if let Some(Some(Expr {
            kind: ExprKind::Ident(n),
            ..
        })) = conns.get(&p.name)
        {
            let pw = parent.get(n).map(|s| (s.width, s.is_memory() || s.is_param()));
            let sw = sub_scope.get(&p.name).map(|s| s.width);
            if let (Some((w, false)), Some(sw)) = (pw, sw) {
                if w == sw {
                    subst.insert(p.name.clone(), n.clone());
                }
            }
        }
    }
    let prefix = format!("{}__", inst.name);
    let rename = |n: &str| -> String {
        match subst.get(n) {
            Some(p) => p.clone(),
            None => format!("{prefix}{n}"),
        }
    };
    for n in sub_scope.order.iter().filter(|n| !subst.contains_key(*n)) {
        let new = rename(n);
        if parent.get(&new).is_some() {
            return Err(conn_err(inst, format!("flattened name '{new}' collides with a parent net")));
        }
    }

    let mut sub = sub;
    for_each_expr_mut(&mut sub, &mut |e| match &mut e.kind {
        ExprKind::Ident(n) => *n = rename(n),
        ExprKind::Index { base, .. } | ExprKind::Slice { base, .. } => *base = rename(base),
        _ => {}
    });
    let rename_lv = |l: &mut LValue| match l {
        LValue::Whole(n) | LValue::Bit { name: n, .. } | LValue::Part { name: n, .. } => *n = rename(n),
    };

    for p in &sub.ports {
        if subst.contains_key(&p.name) {
            continue;
        }
        let wire = rename(&p.name);
        items.push(Item::Net(NetDecl {
            kind: p.kind,
            range: p.range.clone(),
            names: vec![NetName {
                name: wire.clone(),
                array: None,
            }],
            span: p.span,
        }));
        let ident = |n: &str| Expr {
            id: ExprId(0),
            kind: ExprKind::Ident(n.to_string()),
            span: inst.span,
        };
        match (p.dir, conns.get(&p.name).cloned().flatten()) {
            (Direction::Input, Some(e)) => items.push(Item::Assign(ContinuousAssign {
                lhs: LValue::Whole(wire),
                rhs: e,
                span: inst.span,
            })),
            (Direction::Input, None) => items.push(Item::Assign(ContinuousAssign {
                lhs: LValue::Whole(wire),
                rhs: Expr {
                    id: ExprId(0),
                    kind: ExprKind::Literal(Literal {
                        width: None,
                        value: 0,
                        text: "0".into(),
                    }),
                    span: inst.span,
                },
                span: inst.span,
            })),
            (Direction::Output, Some(e)) => {
                let lhs = match e.kind {
                    ExprKind::Ident(n) => LValue::Whole(n),
                    ExprKind::Index { base, index } => LValue::Bit { name: base, index: *index },
                    ExprKind::Slice { base, msb, lsb } => LValue::Part {
                        name: base,
                        msb: *msb,
                        lsb: *lsb,
                    },
                    _ => return Err(conn_err(inst, format!("output '{}' must connect to a net", p.name))),
                };
                items.push(Item::Assign(ContinuousAssign {
                    lhs,
                    rhs: ident(&wire),
                    span: inst.span,
                }));
            }
            (Direction::Output, None) => {}
        }
    }

    for item in sub.items {
        items.push(match item {
            Item::Net(mut n) => {
                for nm in &mut n.names {
                    nm.name = rename(&nm.name);
                }
                Item::Net(n)
            }
            Item::Param(mut p) => {
                p.local = true;
                for (n, _) in &mut p.assigns {
                    *n = rename(n);
                }
                Item::Param(p)
            }
            Item::Assign(mut a) => {
                rename_lv(&mut a.lhs);
                Item::Assign(a)
            }
            Item::Process(mut p) => {
                if let Sensitivity::Clocked { clock, reset, .. } = &mut p.sensitivity {
                    *clock = rename(clock);
                    if let Some(r) = reset {
                        r.name = rename(&r.name);
                    }
                }
                p.body.walk_mut(&mut |s| {
                    if let StmtKind::Assign { lhs, .. } = &mut s.kind {
                        rename_lv(lhs);
                    }
                });
                Item::Process(p)
            }
            Item::Instance(_) => unreachable!("sub-module already flattened"),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::{parse_source, printer::print_module};
    use super::*;

    #[test]
    fn clock_passes_through_and_nets_are_prefixed() {
        let u = parse_source(
            "module r(input clk, input [3:0] d, output reg [3:0] q); always @(posedge clk) q <= d; endmodule
             module top(input clk, input [3:0] a, output [3:0] y); r u0(.clk(clk), .d(a + 4'd1), .q(y)); endmodule",
        )
        .unwrap();
        let flat = flatten(&u, "top").unwrap();
        let text = print_module(&flat);
        assert!(text.contains("always @(posedge clk)"), "{text}");
        assert!(text.contains("assign u0__d = a + 4'd1;"), "{text}");
        assert!(text.contains("assign y = u0__q;"), "{text}");
        assert!(text.contains("u0__q <= u0__d;"), "{text}");
    }

    #[test]
    fn recursion_rejected() {
        let u = parse_source("module a(input x, output y); a inner(.x(x), .y(y)); endmodule").unwrap();
        assert_eq!(flatten(&u, "a"), Err(FlattenError::Recursive("a".into())));
    }
}
