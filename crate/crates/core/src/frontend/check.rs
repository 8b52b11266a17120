//! Subset rules that the grammar alone cannot express.

use super::ast::*;
use super::scope::{Scope, SymKind};
use super::{flatten, infer_top, Diagnostic};
use std::collections::{BTreeMap, BTreeSet};

/// Every reason the unit falls outside the supported subset; empty means in-subset.
pub fn subset_check(unit: &SourceUnit) -> Vec<Diagnostic> {
    let mut out = Diags::default();
    let mut names = BTreeSet::new();
    for m in &unit.modules {
        if !names.insert(m.name.as_str()) {
            out.push(format!("duplicate module '{}'", m.name), m.span);
        }
    }
    check_hierarchy(unit, &mut out);
    for m in &unit.modules {
        check_module(unit, m, &mut out);
    }
    // Cycles and clocking across instance boundaries only show up once flattened.
    if out.list.is_empty() {
        if let Some(top) = infer_top(unit) {
            let m = unit.module(top).expect("top exists");
            if m.instances().next().is_some() {
                match flatten(unit, top) {
                    Ok(flat) => check_module(unit, &flat, &mut out),
                    Err(e) => out.push(e.to_string(), m.span),
                }
            }
        }
    }
    out.list
}

#[derive(Default)]
struct Diags {
    list: Vec<Diagnostic>,
    seen: BTreeSet<(u32, u32, String)>,
}

impl Diags {
    fn push(&mut self, msg: impl Into<String>, span: Span) {
        let msg = msg.into();
        if self.seen.insert((span.line, span.col, msg.clone())) {
            self.list.push(Diagnostic::error(msg, span));
        }
    }
}

fn check_hierarchy(unit: &SourceUnit, out: &mut Diags) {
    fn visit<'a>(unit: &'a SourceUnit, m: &'a ModuleDecl, stack: &mut Vec<&'a str>, out: &mut Diags) {
        stack.push(&m.name);
        for inst in m.instances() {
            match unit.module(&inst.module) {
                None => out.push(format!("unknown module '{}'", inst.module), inst.span),
                Some(sub) if stack.contains(&sub.name.as_str()) => {
                    out.push(format!("recursive instantiation of '{}'", sub.name), inst.span)
                }
                Some(sub) => visit(unit, sub, stack, out),
            }
        }
        stack.pop();
    }
    for m in &unit.modules {
        visit(unit, m, &mut Vec::new(), out);
    }
}

#[derive(Clone, Copy)]
enum Driver {
    Assign,
    Process,
    Instance,
}

fn check_module(unit: &SourceUnit, m: &ModuleDecl, out: &mut Diags) {
    let (scope, errs) = Scope::build(m);
    for e in errs {
        out.push(e.message, e.span);
    }
    let ctx = Ctx { scope: &scope, m };
    ctx.check_exprs(out);

    let mut drivers: BTreeMap<String, Vec<(Driver, Span)>> = BTreeMap::new();
    let mut comb_deps: BTreeMap<String, (BTreeSet<String>, Span)> = BTreeMap::new();
    let mut read: BTreeMap<String, Span> = BTreeMap::new();

    for a in m.assigns() {
        let t = a.lhs.name();
        ctx.check_continuous_target(t, &a.lhs, a.span, out);
        drivers.entry(t.to_string()).or_default().push((Driver::Assign, a.span));
        let mut deps: BTreeSet<String> = a.rhs.referenced_names().into_iter().collect();
        for n in lvalue_reads(&a.lhs) {
            deps.insert(n);
        }
        for n in &deps {
            read.entry(n.clone()).or_insert(a.span);
        }
        comb_deps.insert(t.to_string(), (deps, a.span));
    }

    let mut clock: Option<(String, EdgeKind, Span)> = None;
    let mut mem_writes: BTreeMap<String, usize> = BTreeMap::new();
    let mut allowed_reads: BTreeSet<ExprId> = BTreeSet::new();
    for p in m.processes() {
        let mut targets = BTreeSet::new();
        p.body.walk(&mut |s| {
            if let StmtKind::Assign { lhs, .. } = &s.kind {
                targets.insert(lhs.name().to_string());
            }
        });
        for t in &targets {
            drivers.entry(t.clone()).or_default().push((Driver::Process, p.span));
        }
        p.body.walk(&mut |s| {
            for e in s.own_exprs() {
                for n in e.referenced_names() {
                    read.entry(n).or_insert(s.span);
                }
            }
        });
        match &p.sensitivity {
            Sensitivity::Clocked { edge, clock: ck, reset } => {
                ctx.check_clock(ck, *edge, p.span, &mut clock, out);
                if let Some(r) = reset {
                    read.entry(r.name.clone()).or_insert(p.span);
                    match ctx.scope.get(&r.name).map(|s| &s.kind) {
                        Some(SymKind::Input) => {}
                        _ => out.push(format!("asynchronous reset '{}' must be an input port", r.name), p.span),
                    }
                    if p.reset_branches().is_none() {
                        out.push(
                            format!("process with asynchronous reset must begin with 'if' on '{}'", r.name),
                            p.span,
                        );
                    }
                }
                ctx.check_clocked(p, &mut mem_writes, &mut allowed_reads, out);
            }
            Sensitivity::Comb => {
                ctx.check_comb(p, &targets, &mut comb_deps, out);
            }
        }
    }
    for (mem, n) in &mem_writes {
        if *n > 1 {
            let span = ctx.scope.get(mem).map(|s| s.span).unwrap_or_default();
            out.push(format!("memory '{mem}' has {n} write statements; only one write port is supported"), span);
        }
    }
    ctx.check_memory_reads(&allowed_reads, out);

    for inst in m.instances() {
        ctx.check_instance(unit, inst, &mut drivers, &mut read, out);
    }

    for (name, ds) in &drivers {
        if ds.len() > 1 {
            out.push(format!("multiple drivers for '{name}'"), ds[1].1);
        }
        if let Some(sym) = scope.get(name) {
            let procedural = ds.iter().any(|(d, _)| matches!(d, Driver::Process));
            let structural = ds.iter().any(|(d, _)| matches!(d, Driver::Assign | Driver::Instance));
            if procedural && sym.net_kind == NetKind::Wire && !matches!(sym.kind, SymKind::Input) {
                out.push(format!("procedural assignment to wire '{name}'"), ds[0].1);
            }
            if structural && sym.net_kind == NetKind::Reg {
                out.push(format!("continuous assignment to reg '{name}'"), ds[0].1);
            }
        }
    }
    for name in &scope.order {
        let sym = &scope.symbols[name];
        let driven = drivers.contains_key(name);
        match sym.kind {
            SymKind::Output if !driven => out.push(format!("output '{name}' is never driven"), sym.span),
            SymKind::Wire | SymKind::Reg if !driven => {
                if let Some(sp) = read.get(name) {
                    out.push(format!("'{name}' is read but never driven"), *sp);
                }
            }
            _ => {}
        }
    }
    comb_cycles(&comb_deps, out);
}

fn lvalue_reads(l: &LValue) -> Vec<String> {
    match l {
        LValue::Whole(_) => vec![],
        LValue::Bit { index, .. } => index.referenced_names(),
        LValue::Part { msb, lsb, .. } => {
            let mut v = msb.referenced_names();
            v.extend(lsb.referenced_names());
            v
        }
    }
}

struct Ctx<'a> {
    scope: &'a Scope,
    m: &'a ModuleDecl,
}

impl Ctx<'_> {
    /// Every expression must resolve and have a width within limits.
    fn check_exprs(&self, out: &mut Diags) {
        let chk = |e: &Expr, out: &mut Diags| {
            if let Err(err) = self.scope.width(e) {
                out.push(err.message, if err.span.line == 0 { e.span } else { err.span });
            }
        };
        let chk_lv = |l: &LValue, span: Span, out: &mut Diags| {
            if self.scope.get(l.name()).is_none() {
                out.push(format!("undeclared identifier '{}'", l.name()), span);
                return;
            }
            if let LValue::Bit { index, .. } = l {
                chk(index, out);
            }
            if let Err(err) = self.scope.lvalue_width(l) {
                out.push(err.message, span);
            }
        };
        for a in self.m.assigns() {
            chk_lv(&a.lhs, a.span, out);
            chk(&a.rhs, out);
        }
        for p in self.m.processes() {
            p.body.walk(&mut |s| match &s.kind {
                StmtKind::If { cond, .. } => chk(cond, out),
                StmtKind::Case { sel, items } => {
                    chk(sel, out);
                    for l in items.iter().flat_map(|i| i.labels.iter()) {
                        chk(l, out);
                        if !self.scope.is_const(l) {
                            out.push("case labels must be constant", l.span);
                        }
                    }
                }
                StmtKind::Assign { lhs, rhs, .. } => {
                    chk_lv(lhs, s.span, out);
                    chk(rhs, out);
                }
                StmtKind::Block(_) | StmtKind::Null => {}
            });
        }
        for inst in self.m.instances() {
            for c in &inst.conns {
                if let PortConn::Named(_, Some(e)) | PortConn::Positional(e) = c {
                    chk(e, out);
                }
            }
        }
    }

    fn check_continuous_target(&self, t: &str, lhs: &LValue, span: Span, out: &mut Diags) {
        match self.scope.get(t).map(|s| &s.kind) {
            Some(SymKind::Input) => out.push(format!("assignment to input '{t}'"), span),
            Some(SymKind::Param { .. }) => out.push(format!("assignment to parameter '{t}'"), span),
            Some(SymKind::Memory { .. }) => out.push(format!("continuous assignment to memory '{t}'"), span),
            _ => {}
        }
        if !matches!(lhs, LValue::Whole(_)) {
            out.push(format!("partial driver of '{t}': assign the whole net"), span);
        }
    }

    fn is_clock_alias(&self, name: &str) -> bool {
        let Some(rest) = name.strip_prefix("clk_sp") else { return false };
        !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit())
    }

    fn check_clock(
        &self,
        ck: &str,
        edge: EdgeKind,
        span: Span,
        seen: &mut Option<(String, EdgeKind, Span)>,
        out: &mut Diags,
    ) {
        let alias = self.is_clock_alias(ck);
        match self.scope.get(ck).map(|s| &s.kind) {
            Some(SymKind::Input) => {}
            Some(SymKind::Wire) if alias => {}
            _ => out.push(format!("clock '{ck}' must be an input port"), span),
        }
        match seen {
            None => *seen = Some((ck.to_string(), edge, span)),
            Some((first, e0, _)) => {
                if *e0 != edge {
                    out.push("all clocked processes must use the same clock edge", span);
                }
                if first != ck && !alias {
                    if self.is_clock_alias(first) {
                        *first = ck.to_string();
                    } else {
                        out.push(
                            format!("second clock domain '{ck}' (first clock is '{first}')"),
                            span,
                        );
                    }
                }
            }
        }
    }

    fn check_clocked(
        &self,
        p: &ProcessBlock,
        mem_writes: &mut BTreeMap<String, usize>,
        allowed_reads: &mut BTreeSet<ExprId>,
        out: &mut Diags,
    ) {
        let mut assign_count: BTreeMap<&str, usize> = BTreeMap::new();
        p.body.walk(&mut |s| {
            if let StmtKind::Assign { kind, lhs, .. } = &s.kind {
                *assign_count.entry(lhs.name()).or_default() += 1;
                if *kind == AssignKind::Blocking {
                    out.push("blocking assignment in clocked process; use '<='", s.span);
                }
                if let Some(sym) = self.scope.get(lhs.name()) {
                    if sym.is_memory() {
                        match lhs {
                            LValue::Bit { .. } => {
                                *mem_writes.entry(sym.name.clone()).or_default() += 1;
                            }
                            _ => out.push(format!("memory '{}' must be written one word at a time", sym.name), s.span),
                        }
                    }
                }
            }
        });
        // `rd <= m[addr];` at the top level of the functional body is the only memory read form.
        if let Some(body) = p.functional_body() {
            for s in body.top_level() {
                if let StmtKind::Assign {
                    lhs: LValue::Whole(rd),
                    rhs,
                    ..
                } = &s.kind
                {
                    if let ExprKind::Index { base, index } = &rhs.kind {
                        let is_mem = self.scope.get(base).map(|s| s.is_memory()).unwrap_or(false);
                        let rd_reg = matches!(
                            self.scope.get(rd).map(|s| &s.kind),
                            Some(SymKind::Reg) | Some(SymKind::Output)
                        );
                        if is_mem && rd_reg && assign_count.get(rd.as_str()) == Some(&1) {
                            let nested = index
                                .referenced_names()
                                .iter()
                                .any(|n| self.scope.get(n).map(|s| s.is_memory()).unwrap_or(false));
                            if !nested {
                                allowed_reads.insert(rhs.id);
                            }
                        }
                    }
                }
            }
        }
    }

    fn check_memory_reads(&self, allowed: &BTreeSet<ExprId>, out: &mut Diags) {
        let visit = |e: &Expr, out: &mut Diags| {
            e.walk(&mut |x| {
                if let ExprKind::Index { base, .. } = &x.kind {
                    if self.scope.get(base).map(|s| s.is_memory()).unwrap_or(false) && !allowed.contains(&x.id) {
                        out.push(
                            format!(
                                "memory '{base}' may only be read as 'rd <= {base}[addr];' at the top level of a clocked process"
                            ),
                            x.span,
                        );
                    }
                }
            })
        };
        for a in self.m.assigns() {
            visit(&a.rhs, out);
            if let LValue::Bit { index, .. } = &a.lhs {
                visit(index, out);
            }
        }
        for p in self.m.processes() {
            p.body.walk(&mut |s| {
                for e in s.own_exprs() {
                    visit(e, out);
                }
            });
        }
        for inst in self.m.instances() {
            for c in &inst.conns {
                if let PortConn::Named(_, Some(e)) | PortConn::Positional(e) = c {
                    visit(e, out);
                }
            }
        }
    }

    fn check_comb(
        &self,
        p: &ProcessBlock,
        targets: &BTreeSet<String>,
        comb_deps: &mut BTreeMap<String, (BTreeSet<String>, Span)>,
        out: &mut Diags,
    ) {
        p.body.walk(&mut |s| {
            if let StmtKind::Assign { kind, lhs, .. } = &s.kind {
                if *kind == AssignKind::NonBlocking {
                    out.push("non-blocking assignment in combinational process; use '='", s.span);
                }
                if self.scope.get(lhs.name()).map(|s| s.is_memory()).unwrap_or(false) {
                    out.push(format!("memory '{}' written outside a clocked process", lhs.name()), s.span);
                }
            }
        });
        let mut flow = Flow::default();
        let mut reported = BTreeSet::new();
        self.flow(&p.body, targets, &mut flow, &BTreeSet::new(), &mut reported, out);
        for t in targets {
            if !flow.assigned.contains(t) {
                out.push(format!("latch inferred: '{t}' is not assigned on every path"), p.span);
            }
            let deps = flow.env.get(t).cloned().unwrap_or_default();
            comb_deps.insert(t.clone(), (deps, p.span));
        }
    }

    fn flow(
        &self,
        s: &Stmt,
        targets: &BTreeSet<String>,
        flow: &mut Flow,
        ctrl: &BTreeSet<String>,
        reported: &mut BTreeSet<String>,
        out: &mut Diags,
    ) {
        let resolve = |names: Vec<String>, flow: &Flow, reported: &mut BTreeSet<String>, out: &mut Diags| {
            let mut deps = BTreeSet::new();
            for n in names {
                if targets.contains(&n) {
                    if !flow.assigned.contains(&n) && reported.insert(n.clone()) {
                        out.push(format!("'{n}' is read before it is assigned (latch)"), s.span);
                    }
                    if let Some(d) = flow.env.get(&n) {
                        deps.extend(d.iter().cloned());
                    }
                } else {
                    deps.insert(n);
                }
            }
            deps
        };
        match &s.kind {
            StmtKind::Null => {}
            StmtKind::Block(v) => {
                for st in v {
                    self.flow(st, targets, flow, ctrl, reported, out);
                }
            }
            StmtKind::Assign { lhs, rhs, .. } => {
                let mut names = rhs.referenced_names();
                names.extend(lvalue_reads(lhs));
                let mut deps = resolve(names, flow, reported, out);
                deps.extend(ctrl.iter().cloned());
                let t = lhs.name().to_string();
                if matches!(lhs, LValue::Whole(_)) {
                    flow.env.insert(t.clone(), deps);
                    flow.assigned.insert(t);
                } else {
                    if !flow.assigned.contains(&t) && reported.insert(t.clone()) {
                        out.push(format!("partial assignment to '{t}' before a full assignment (latch)"), s.span);
                    }
                    flow.env.entry(t).or_default().extend(deps);
                }
            }
            StmtKind::If {
                cond,
                then_stmt,
                else_stmt,
            } => {
                let mut c = ctrl.clone();
                c.extend(resolve(cond.referenced_names(), flow, reported, out));
                let mut a = flow.clone();
                self.flow(then_stmt, targets, &mut a, &c, reported, out);
                let mut b = flow.clone();
                if let Some(e) = else_stmt {
                    self.flow(e, targets, &mut b, &c, reported, out);
                }
                *flow = Flow::merge(vec![a, b]);
            }
            StmtKind::Case { sel, items } => {
                let mut c = ctrl.clone();
                c.extend(resolve(sel.referenced_names(), flow, reported, out));
                let mut branches = Vec::new();
                for it in items {
                    let mut f = flow.clone();
                    self.flow(&it.body, targets, &mut f, &c, reported, out);
                    branches.push(f);
                }
                if !self.scope.case_is_full(sel, items) {
                    branches.push(flow.clone());
                }
                *flow = Flow::merge(branches);
            }
        }
    }

    fn check_instance(
        &self,
        unit: &SourceUnit,
        inst: &Instance,
        drivers: &mut BTreeMap<String, Vec<(Driver, Span)>>,
        read: &mut BTreeMap<String, Span>,
        out: &mut Diags,
    ) {
        if self.scope.get(&inst.name).is_some() {
            out.push(format!("instance name '{}' collides with a net", inst.name), inst.span);
        }
        let Some(sub) = unit.module(&inst.module) else { return };
        let mut bound = BTreeSet::new();
        for (i, c) in inst.conns.iter().enumerate() {
            let (port, e) = match c {
                PortConn::Named(n, e) => match sub.port(n) {
                    Some(p) => (p, e.as_ref()),
                    None => {
                        out.push(format!("module '{}' has no port '{n}'", sub.name), inst.span);
                        continue;
                    }
                },
                PortConn::Positional(e) => match sub.ports.get(i) {
                    Some(p) => (p, Some(e)),
                    None => {
                        out.push(format!("too many connections for module '{}'", sub.name), inst.span);
                        continue;
                    }
                },
            };
            if !bound.insert(port.name.as_str()) {
                out.push(format!("port '{}' connected twice", port.name), inst.span);
            }
            let Some(e) = e else { continue };
            match port.dir {
                Direction::Input => {
                    for n in e.referenced_names() {
                        read.entry(n).or_insert(inst.span);
                    }
                }
                Direction::Output => match &e.kind {
                    ExprKind::Ident(n) => {
                        drivers.entry(n.clone()).or_default().push((Driver::Instance, inst.span));
                    }
                    ExprKind::Index { base, .. } | ExprKind::Slice { base, .. } => {
                        out.push(format!("partial driver of '{base}' from instance output"), inst.span);
                        drivers.entry(base.clone()).or_default().push((Driver::Instance, inst.span));
                    }
                    _ => out.push(format!("output port '{}' must connect to a net", port.name), inst.span),
                },
            }
        }
    }
}

#[derive(Clone, Default)]
struct Flow {
    /// Signals each locally assigned target currently depends on.
    env: BTreeMap<String, BTreeSet<String>>,
    /// Targets assigned on every path so far.
    assigned: BTreeSet<String>,
}

impl Flow {
    fn merge(branches: Vec<Flow>) -> Flow {
        let mut it = branches.into_iter();
        let mut acc = it.next().unwrap_or_default();
        for f in it {
            for (k, v) in f.env {
                acc.env.entry(k).or_default().extend(v);
            }
            acc.assigned = acc.assigned.intersection(&f.assigned).cloned().collect();
        }
        acc
    }
}

fn comb_cycles(deps: &BTreeMap<String, (BTreeSet<String>, Span)>, out: &mut Diags) {
    #[derive(Clone, Copy, PartialEq)]
    enum Color {
        White,
        Gray,
        Black,
    }
    fn dfs<'a>(
        n: &'a str,
        deps: &'a BTreeMap<String, (BTreeSet<String>, Span)>,
        color: &mut BTreeMap<&'a str, Color>,
        stack: &mut Vec<&'a str>,
        out: &mut Diags,
    ) {
        color.insert(n, Color::Gray);
        stack.push(n);
        for d in &deps[n].0 {
            if !deps.contains_key(d) {
                continue;
            }
            match color.get(d.as_str()).copied().unwrap_or(Color::White) {
                Color::White => dfs(d, deps, color, stack, out),
                Color::Gray => {
                    let pos = stack.iter().position(|x| *x == d).expect("on stack");
                    let mut cyc: Vec<&str> = stack[pos..].to_vec();
                    cyc.reverse();
                    cyc.push(cyc[0]);
                    out.push(format!("combinational cycle: {}", cyc.join(" -> ")), deps[d.as_str()].1);
                }
                Color::Black => {}
            }
        }
        stack.pop();
        color.insert(n, Color::Black);
    }
    let mut color = BTreeMap::new();
    for n in deps.keys() {
        if color.get(n.as_str()).copied().unwrap_or(Color::White) == Color::White {
            dfs(n, deps, &mut color, &mut Vec::new(), out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_source;
    use super::*;

    fn diags(src: &str) -> Vec<String> {
        subset_check(&parse_source(src).unwrap())
            .into_iter()
            .map(|d| d.message)
            .collect()
    }

    #[test]
    fn clean_counter() {
        let d = diags(
            "module c(input clk, input rst, input en, output reg [7:0] q);
               always @(posedge clk) if (rst) q <= 0; else q <= q + en;
             endmodule",
        );
        assert!(d.is_empty(), "{d:?}");
    }

    #[test]
    fn latch_from_missing_else() {
        let d = diags(
            "module l(input a, input b, output reg y);
               always @* if (a) y = b;
             endmodule",
        );
        assert!(d.iter().any(|m| m.contains("latch")), "{d:?}");
    }

    #[test]
    fn two_cycle() {
        let d = diags("module c(input i, output o); wire a, b; assign a = b; assign b = a; assign o = a; endmodule");
        assert!(d.iter().any(|m| m.contains("combinational cycle")), "{d:?}");
    }

    #[test]
    fn full_case_needs_no_default() {
        let d = diags(
            "module f(input [1:0] s, output reg y);
               always @* case (s) 0: y = 1; 1: y = 0; 2: y = 1; 3: y = 0; endcase
             endmodule",
        );
        assert!(d.is_empty(), "{d:?}");
    }

    #[test]
    fn memory_read_forms() {
        let ok = diags(
            "module r(input clk, input [3:0] a, input [7:0] d, input we, output reg [7:0] q);
               reg [7:0] m [0:15];
               always @(posedge clk) begin q <= m[a]; if (we) m[a] <= d; end
             endmodule",
        );
        assert!(ok.is_empty(), "{ok:?}");
        let bad = diags(
            "module r(input clk, input [3:0] a, output [7:0] y);
               reg [7:0] m [0:15];
               assign y = m[a];
             endmodule",
        );
        assert!(bad.iter().any(|m| m.contains("may only be read")), "{bad:?}");
    }

    #[test]
    fn blocking_in_clocked_and_multiple_drivers() {
        let d = diags(
            "module b(input clk, input x, output reg q);
               always @(posedge clk) q = x;
               always @(posedge clk) q <= x;
             endmodule",
        );
        assert!(d.iter().any(|m| m.contains("blocking")), "{d:?}");
        assert!(d.iter().any(|m| m.contains("multiple drivers")), "{d:?}");
    }

    #[test]
    fn cycle_through_instance() {
        let d = diags(
            "module inv(input a, output y); assign y = ~a; endmodule
             module top(input i, output o); wire w; inv u(.a(w), .y(w)); assign o = w; endmodule",
        );
        assert!(d.iter().any(|m| m.contains("combinational cycle")), "{d:?}");
    }
}
