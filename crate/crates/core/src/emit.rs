//! Rewrite a design under a segment assignment and print it as Verilog.
//!
//! Every edge that crosses `r > 0` segment boundaries reads from a chain of
//! pipeline registers `<sig>_sp<stage>` clocked by `clk_sp<stage>`. Chains are
//! shared per (driver, signal). Sub-expressions without a net name are hoisted
//! into `csr_n<k>` wires first so the chain has something to read.

use crate::csr_place::{legality_check, SegmentAssignment};
use crate::elaborate::{DesignGraph, NodeRef, SeqKind, Site};
use crate::frontend::ast::*;
use crate::frontend::printer::{print_module, print_unit};
use crate::frontend::scope::{bits_for, SymKind};
use crate::sim::Alignment;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet, HashMap};

pub const SCHEDULE_SCHEMA: &str = "cslow.schedule/1";

#[derive(Debug, thiserror::Error)]
pub enum EmitError {
    #[error("a rewrite needs cmf >= 2 (got {0})")]
    Cmf(u32),
    #[error("design has no clock; a purely combinational module cannot be slowed")]
    NoClock,
    #[error("illegal assignment: {0}")]
    Illegal(String),
    #[error("edge {0} needs pipeline registers but reads no net or expression")]
    Unsplittable(String),
    #[error("conflicting rewrites of one expression ({0} vs {1})")]
    Conflict(String, String),
    #[error("name '{0}' is reserved for emitted logic but already declared")]
    Reserved(String),
    #[error("memory '{0}' has a negative base index")]
    MemoryBase(String),
    #[error("no pipeline register named '{0}'")]
    UnknownRegister(String),
    #[error("bit {bit} is outside register '{name}' ({width} bits)")]
    BadBit { name: String, bit: u32, width: u32 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ChainStage {
    pub stage: u32,
    pub name: String,
}

/// Pipeline registers behind one value.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ChainPlan {
    pub tail: NodeRef,
    pub signal: String,
    /// Net the first stage samples: the signal itself or a hoisted wire.
    pub source: String,
    pub width: u32,
    pub stages: Vec<ChainStage>,
}

impl ChainPlan {
    fn at(&self, stage: u32) -> &str {
        &self.stages.iter().find(|s| s.stage == stage).expect("stage in chain").name
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Substitution {
    pub site: Site,
    pub replacement: String,
    /// Wire name and width when the expression is hoisted first.
    pub hoist: Option<(String, u32)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OutputPlan {
    pub port: String,
    /// Label of the driver; `None` for constant outputs.
    pub segment: Option<u32>,
    pub core: Option<String>,
    pub align: Option<String>,
    pub chain_end: Option<String>,
    /// Fast cycles from a thread's input slot to its output.
    pub latency: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MemoryPlan {
    pub name: String,
    pub base: i64,
    pub depth: u64,
    pub counter: String,
    pub counter_width: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RewritePlan {
    pub cmf: u32,
    pub align_outputs: bool,
    pub clock: String,
    pub chains: Vec<ChainPlan>,
    pub substitutions: Vec<Substitution>,
    /// Register → stage `cmf-1` of its own chain, assigned before the functional body.
    pub holds: BTreeMap<String, String>,
    pub outputs: Vec<OutputPlan>,
    pub memories: Vec<MemoryPlan>,
    pub clock_ports: Vec<String>,
    pub warm: String,
}

impl RewritePlan {
    pub fn sp_registers(&self) -> Vec<(&str, u32)> {
        self.chains
            .iter()
            .flat_map(|c| c.stages.iter().map(move |s| (s.name.as_str(), c.width)))
            .collect()
    }

    pub fn sp_register_bits(&self) -> u64 {
        self.sp_registers().iter().map(|(_, w)| *w as u64).sum()
    }

    pub fn align_register_bits(&self, g: &DesignGraph) -> u64 {
        self.outputs
            .iter()
            .filter(|o| o.align.is_some())
            .map(|o| g.scope.get(&o.port).map(|s| s.width as u64).unwrap_or(1))
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Fault {
    pub register: String,
    /// `None` bypasses the whole register, `Some(b)` only bit `b`.
    pub bit: Option<u32>,
}

impl std::str::FromStr for Fault {
    type Err = String;

    /// `name` or `name:bit`.
    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            None => Ok(Fault {
                register: s.to_string(),
                bit: None,
            }),
            Some((r, b)) => Ok(Fault {
                register: r.to_string(),
                bit: Some(b.parse().map_err(|_| format!("bad bit index '{b}'"))?),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EmitOptions {
    /// `#1` on pipeline register assignments.
    pub sp_delay: bool,
    /// Drive `clk_sp*` from the main clock instead of adding ports.
    pub tie_clocks: bool,
    /// Suppress state updates until every thread has seen its first cycle.
    pub warmup_gate: bool,
    pub fault: Option<Fault>,
}

impl Default for EmitOptions {
    fn default() -> Self {
        EmitOptions {
            sp_delay: true,
            tie_clocks: false,
            warmup_gate: true,
            fault: None,
        }
    }
}

struct Names {
    taken: BTreeSet<String>,
}

impl Names {
    fn new(g: &DesignGraph) -> Self {
        let mut taken: BTreeSet<String> = g.scope.symbols.keys().cloned().collect();
        taken.extend(g.module.ports.iter().map(|p| p.name.clone()));
        Names { taken }
    }

    fn fresh(&mut self, base: &str) -> String {
        let mut name = base.to_string();
        let mut n = 1;
        while self.taken.contains(&name) {
            name = format!("{base}__{n}");
            n += 1;
        }
        self.taken.insert(name.clone());
        name
    }
}

fn is_output(g: &DesignGraph, n: NodeRef) -> bool {
    matches!(n, NodeRef::Seq(i) if g.seq_nodes[i].kind == SeqKind::PrimaryOutput)
}

/// Decide every register, wire and substitution the rewrite needs.
pub fn plan_rewrite(g: &DesignGraph, a: &SegmentAssignment, align_outputs: bool) -> Result<RewritePlan, EmitError> {
    let c = a.cmf;
    if c < 2 {
        return Err(EmitError::Cmf(c));
    }
    let clock = g.clock.clone().ok_or(EmitError::NoClock)?;
    let v = legality_check(g, a, 0);
    if let Some(x) = v.violations.first() {
        return Err(EmitError::Illegal(x.to_string()));
    }
    let mut names = Names::new(g);
    let mut clock_ports = Vec::new();
    for s in 1..c {
        let n = format!("clk_sp{s}");
        if names.taken.contains(&n) {
            return Err(EmitError::Reserved(n));
        }
        names.taken.insert(n.clone());
        clock_ports.push(n);
    }
    let warm = names.fresh("csr_warm");

    // stages per (driver, signal)
    let mut spans: BTreeMap<(NodeRef, String), (u32, u32, u32, bool)> = BTreeMap::new();
    for (i, ed) in g.edges.iter().enumerate() {
        if a.registers_on(g, i) <= 0 || (!align_outputs && is_output(g, ed.head)) {
            continue;
        }
        let lo = a.tail_label(ed.tail);
        let hi = a.head_label(ed.head);
        let e = spans.entry((ed.tail, ed.signal.clone())).or_insert((lo, hi, ed.width, ed.named));
        e.1 = e.1.max(hi);
        e.2 = e.2.max(ed.width);
    }
    let mut chains = Vec::new();
    let mut chain_of: HashMap<(NodeRef, String), usize> = HashMap::new();
    for ((tail, signal), (lo, hi, width, named)) in spans {
        let (source, base) = if named {
            (signal.clone(), signal.clone())
        } else {
            let k = match tail {
                NodeRef::Comb(k) => k,
                NodeRef::Seq(_) => return Err(EmitError::Unsplittable(g.describe(tail))),
            };
            let w = names.fresh(&format!("csr_n{k}"));
            (w.clone(), w)
        };
        let stages = (lo..hi)
            .map(|s| ChainStage {
                stage: s,
                name: names.fresh(&format!("{base}_sp{s}")),
            })
            .collect();
        chain_of.insert((tail, signal.clone()), chains.len());
        chains.push(ChainPlan {
            tail,
            signal,
            source,
            width,
            stages,
        });
    }

    let mut subs: BTreeMap<Site, Substitution> = BTreeMap::new();
    let mut holds = BTreeMap::new();
    for (i, ed) in g.edges.iter().enumerate() {
        let r = a.registers_on(g, i);
        if r <= 0 || is_output(g, ed.head) {
            continue;
        }
        let ch = &chains[chain_of[&(ed.tail, ed.signal.clone())]];
        let name = ch.at(a.head_label(ed.head) - 1).to_string();
        match ed.site {
            Some(site) => {
                let hoist = (!ed.named).then(|| (ch.source.clone(), ch.width));
                let sub = Substitution {
                    site,
                    replacement: name,
                    hoist,
                };
                if let Some(old) = subs.get(&site) {
                    if old.replacement != sub.replacement {
                        return Err(EmitError::Conflict(old.replacement.clone(), sub.replacement));
                    }
                } else {
                    subs.insert(site, sub);
                }
            }
            None if ed.hold => {
                holds.insert(ed.signal.clone(), name);
            }
            None => {
                return Err(EmitError::Unsplittable(format!(
                    "{} -> {}",
                    g.describe(ed.tail),
                    g.describe(ed.head)
                )))
            }
        }
    }

    let mut outputs = Vec::new();
    for (i, sn) in g.seq_nodes.iter().enumerate() {
        if sn.kind != SeqKind::PrimaryOutput {
            continue;
        }
        let driver = g.in_edges(NodeRef::Seq(i)).first().map(|&e| &g.edges[e]);
        let Some(ed) = driver else {
            outputs.push(OutputPlan {
                port: sn.name.clone(),
                segment: None,
                core: None,
                align: None,
                chain_end: None,
                latency: if align_outputs { c } else { 0 },
            });
            continue;
        };
        let l = a.tail_label(ed.tail);
        if align_outputs {
            let chain_end = (l < c).then(|| chains[chain_of[&(ed.tail, ed.signal.clone())]].at(c - 1).to_string());
            outputs.push(OutputPlan {
                port: sn.name.clone(),
                segment: Some(l),
                core: Some(names.fresh(&format!("{}_core", sn.name))),
                align: Some(names.fresh(&format!("{}_align", sn.name))),
                chain_end,
                latency: c,
            });
        } else {
            outputs.push(OutputPlan {
                port: sn.name.clone(),
                segment: Some(l),
                core: None,
                align: None,
                chain_end: None,
                latency: l - 1,
            });
        }
    }

    let mut memories = Vec::new();
    for sym in g.scope.symbols.values() {
        if let SymKind::Memory { depth, base } = sym.kind {
            if base < 0 {
                return Err(EmitError::MemoryBase(sym.name.clone()));
            }
            let top = base as u128 + depth as u128 * c as u128 - 1;
            memories.push(MemoryPlan {
                name: sym.name.clone(),
                base,
                depth: depth as u64,
                counter: names.fresh(&format!("csr_base_{}", sym.name)),
                counter_width: bits_for(top),
            });
        }
    }

    Ok(RewritePlan {
        cmf: c,
        align_outputs,
        clock,
        chains,
        substitutions: subs.into_values().collect(),
        holds,
        outputs,
        memories,
        clock_ports,
        warm,
    })
}

const NEW: ExprId = ExprId(u32::MAX);

fn ident(name: &str) -> Expr {
    Expr::new(NEW, ExprKind::Ident(name.to_string()))
}

fn lit(value: u128, width: Option<u32>) -> Expr {
    let text = match width {
        Some(w) => format!("{w}'d{value}"),
        None => value.to_string(),
    };
    Expr::new(NEW, ExprKind::Literal(Literal { width, value, text }))
}

fn bin(op: BinaryOp, lhs: Expr, rhs: Expr) -> Expr {
    Expr::new(
        NEW,
        ExprKind::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        },
    )
}

fn vec_range(width: u32) -> Option<Range> {
    (width > 1).then(|| Range {
        msb: lit(width as u128 - 1, None),
        lsb: lit(0, None),
    })
}

fn decl(kind: NetKind, name: &str, width: u32) -> Item {
    Item::Net(NetDecl {
        kind,
        range: vec_range(width),
        names: vec![NetName {
            name: name.to_string(),
            array: None,
        }],
        span: Span::default(),
    })
}

fn nba(lhs: &str, rhs: Expr, delay: Option<u32>) -> Stmt {
    Stmt::new(StmtKind::Assign {
        kind: AssignKind::NonBlocking,
        lhs: LValue::Whole(lhs.to_string()),
        delay,
        rhs,
    })
}

fn clocked(edge: EdgeKind, clock: &str, body: Stmt) -> Item {
    Item::Process(ProcessBlock {
        sensitivity: Sensitivity::Clocked {
            edge,
            clock: clock.to_string(),
            reset: None,
        },
        body,
        span: Span::default(),
    })
}

fn cont(lhs: &str, rhs: Expr) -> Item {
    Item::Assign(ContinuousAssign {
        lhs: LValue::Whole(lhs.to_string()),
        rhs,
        span: Span::default(),
    })
}

struct Rewriter<'a> {
    base: HashMap<ExprId, &'a Substitution>,
    whole: HashMap<ExprId, &'a Substitution>,
    hoisted: Vec<(String, u32, Expr)>,
}

impl Rewriter<'_> {
    fn expr(&mut self, e: &mut Expr) {
        for ch in e.children_mut() {
            self.expr(ch);
        }
        if let Some(sub) = self.base.get(&e.id) {
            if let ExprKind::Index { base, .. } | ExprKind::Slice { base, .. } = &mut e.kind {
                *base = sub.replacement.clone();
            }
        }
        if let Some(sub) = self.whole.get(&e.id) {
            if let Some((wire, w)) = &sub.hoist {
                self.hoisted.push((wire.clone(), *w, e.clone()));
            }
            *e = ident(&sub.replacement);
        }
    }

    fn lvalue(&mut self, l: &mut LValue) {
        match l {
            LValue::Whole(_) => {}
            LValue::Bit { index, .. } => self.expr(index),
            LValue::Part { msb, lsb, .. } => {
                self.expr(msb);
                self.expr(lsb);
            }
        }
    }
}

fn unwrap_single_mut(s: &mut Stmt) -> &mut Stmt {
    if !matches!(&s.kind, StmtKind::Block(v) if v.len() == 1) {
        return s;
    }
    match &mut s.kind {
        StmtKind::Block(v) => unwrap_single_mut(&mut v[0]),
        _ => unreachable!(),
    }
}

/// The statements run on a clock edge outside reset; creates an empty `else` if asked.
fn functional_body_mut(p: &mut ProcessBlock, create: bool) -> Option<&mut Stmt> {
    if p.reset().is_none() {
        return Some(&mut p.body);
    }
    p.reset_branches()?;
    let s = unwrap_single_mut(&mut p.body);
    match &mut s.kind {
        StmtKind::If { else_stmt, .. } => {
            if else_stmt.is_none() {
                if !create {
                    return None;
                }
                *else_stmt = Some(Box::new(Stmt::new(StmtKind::Block(vec![]))));
            }
            else_stmt.as_deref_mut()
        }
        _ => None,
    }
}

fn assigned_names(s: &Stmt) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    s.walk(&mut |x| {
        if let StmtKind::Assign { lhs, .. } = &x.kind {
            out.insert(lhs.name().to_string());
        }
    });
    out
}

fn is_memory_read(s: &Stmt, mems: &BTreeMap<&str, &MemoryPlan>) -> bool {
    matches!(&s.kind, StmtKind::Assign { lhs: LValue::Whole(_), rhs, .. }
        if matches!(&rhs.kind, ExprKind::Index { base, .. } if mems.contains_key(base.as_str())))
}

fn bank_index(idx: Expr, width: u32, m: &MemoryPlan, cmf: u32) -> Expr {
    let sum = bin(BinaryOp::Add, idx.clone(), ident(&m.counter));
    let in_range = m.base == 0 && width < 64 && (1u64 << width) <= m.depth;
    if in_range {
        return sum;
    }
    let last = m.base as u128 + m.depth as u128 - 1;
    let mut cond = bin(BinaryOp::Le, idx.clone(), lit(last, None));
    if m.base > 0 {
        cond = bin(BinaryOp::LogAnd, bin(BinaryOp::Ge, idx, lit(m.base as u128, None)), cond);
    }
    let outside = m.base as u128 + m.depth as u128 * cmf as u128;
    Expr::new(
        NEW,
        ExprKind::Ternary {
            cond: Box::new(cond),
            then_expr: Box::new(sum),
            else_expr: Box::new(lit(outside, Some(bits_for(outside)))),
        },
    )
}

fn rename_all(m: &mut ModuleDecl, map: &HashMap<String, String>) {
    if map.is_empty() {
        return;
    }
    let ren = |n: &mut String| {
        if let Some(r) = map.get(n.as_str()) {
            *n = r.clone();
        }
    };
    for_each_expr_mut(m, &mut |e| match &mut e.kind {
        ExprKind::Ident(n) | ExprKind::Index { base: n, .. } | ExprKind::Slice { base: n, .. } => ren(n),
        _ => {}
    });
    let lv = |l: &mut LValue| match l {
        LValue::Whole(n) | LValue::Bit { name: n, .. } | LValue::Part { name: n, .. } => ren(n),
    };
    for item in &mut m.items {
        match item {
            Item::Net(d) => d.names.iter_mut().for_each(|nm| ren(&mut nm.name)),
            Item::Assign(a) => lv(&mut a.lhs),
            Item::Process(p) => p.body.walk_mut(&mut |s| {
                if let StmtKind::Assign { lhs, .. } = &mut s.kind {
                    lv(lhs);
                }
            }),
            _ => {}
        }
    }
}

/// Apply `plan` to the graph's (flattened) module.
pub fn emit_module(g: &DesignGraph, plan: &RewritePlan, opts: &EmitOptions) -> Result<ModuleDecl, EmitError> {
    let c = plan.cmf;
    let mut m = g.module.clone();
    let mems: BTreeMap<&str, &MemoryPlan> = plan.memories.iter().map(|mp| (mp.name.as_str(), mp)).collect();

    // memory index widths, taken before any rewrite
    let mut idx_width: HashMap<ExprId, u32> = HashMap::new();
    for p in m.processes() {
        p.body.walk(&mut |s| {
            if let StmtKind::Assign { lhs, rhs, .. } = &s.kind {
                if let LValue::Bit { name, index } = lhs {
                    if mems.contains_key(name.as_str()) {
                        idx_width.insert(index.id, g.scope.width(index).unwrap_or(1));
                    }
                }
                if let ExprKind::Index { base, index } = &rhs.kind {
                    if mems.contains_key(base.as_str()) {
                        idx_width.insert(index.id, g.scope.width(index).unwrap_or(1));
                    }
                }
            }
        });
    }
    let mut mem_index_ids: BTreeSet<ExprId> = idx_width.keys().copied().collect();

    let mut rw = Rewriter {
        base: plan.substitutions.iter().filter(|s| s.site.base).map(|s| (s.site.expr, s)).collect(),
        whole: plan.substitutions.iter().filter(|s| !s.site.base).map(|s| (s.site.expr, s)).collect(),
        hoisted: Vec::new(),
    };
    // memory indices keep their identity through the rewrite so they can be banked afterwards
    let mut idx_after: HashMap<ExprId, u32> = HashMap::new();
    for item in &mut m.items {
        match item {
            Item::Assign(a) => {
                rw.lvalue(&mut a.lhs);
                rw.expr(&mut a.rhs);
            }
            Item::Process(p) => p.body.walk_mut(&mut |s| {
                let mut tracked: Vec<(ExprId, u32)> = Vec::new();
                if let StmtKind::Assign { lhs, rhs, .. } = &mut s.kind {
                    let mut track = |e: &mut Expr, rw: &mut Rewriter| {
                        let id = e.id;
                        rw.expr(e);
                        if let Some(&w) = idx_width.get(&id) {
                            e.id = id;
                            tracked.push((id, w));
                        }
                    };
                    match lhs {
                        LValue::Bit { index, .. } => track(index, &mut rw),
                        other => rw.lvalue(other),
                    }
                    match &mut rhs.kind {
                        ExprKind::Index { index, .. } if idx_width.contains_key(&index.id) => {
                            track(index, &mut rw);
                            if let Some(sub) = rw.whole.get(&rhs.id) {
                                // a memory read is never hoisted; it has no operand node of its own
                                rhs.kind = ident(&sub.replacement).kind;
                            }
                        }
                        _ => rw.expr(rhs),
                    }
                } else {
                    for e in s.own_exprs_mut() {
                        rw.expr(e);
                    }
                }
                idx_after.extend(tracked);
            }),
            _ => {}
        }
    }
    mem_index_ids.retain(|id| idx_after.contains_key(id));
    let hoisted = std::mem::take(&mut rw.hoisted);

    let edge = g.clock_edge;
    let live = if c == 2 {
        ident(&plan.warm)
    } else {
        Expr::new(
            NEW,
            ExprKind::Index {
                base: plan.warm.clone(),
                index: Box::new(lit(c as u128 - 2, None)),
            },
        )
    };
    let gate = opts.warmup_gate && c >= 2;
    for item in &mut m.items {
        let Item::Process(p) = item else { continue };
        if !p.is_clocked() {
            continue;
        }
        let targets = assigned_names(&p.body);
        let holds: Vec<Stmt> = plan
            .holds
            .iter()
            .filter(|(r, _)| targets.contains(*r))
            .map(|(r, src)| nba(r, ident(src), None))
            .collect();
        let Some(body) = functional_body_mut(p, !holds.is_empty()) else { continue };
        // bank memory accesses
        body.walk_mut(&mut |s| {
            if let StmtKind::Assign { lhs, rhs, .. } = &mut s.kind {
                if let LValue::Bit { name, index } = lhs {
                    if let (Some(mp), true) = (mems.get(name.as_str()), mem_index_ids.contains(&index.id)) {
                        let w = idx_width[&index.id];
                        *index = bank_index(index.clone(), w, mp, c);
                    }
                }
                if let ExprKind::Index { base, index } = &mut rhs.kind {
                    if let (Some(mp), true) = (mems.get(base.as_str()), mem_index_ids.contains(&index.id)) {
                        let w = idx_width[&index.id];
                        **index = bank_index((**index).clone(), w, mp, c);
                    }
                }
            }
        });
        let stmts: Vec<Stmt> = body.top_level().into_iter().cloned().collect();
        let (reads, rest): (Vec<Stmt>, Vec<Stmt>) = stmts.into_iter().partition(|s| is_memory_read(s, &mems));
        let mut inner = holds;
        inner.extend(rest.into_iter().filter(|s| !matches!(s.kind, StmtKind::Null)));
        let mut new_body = reads;
        if gate && !inner.is_empty() {
            new_body.push(Stmt::new(StmtKind::If {
                cond: live.clone(),
                then_stmt: Box::new(Stmt::new(StmtKind::Block(inner))),
                else_stmt: None,
            }));
        } else {
            new_body.extend(inner);
        }
        *body = Stmt::new(StmtKind::Block(new_body));
    }

    // memories get one bank per thread
    for item in &mut m.items {
        let Item::Net(d) = item else { continue };
        for nm in &mut d.names {
            if let (Some(mp), Some(_)) = (mems.get(nm.name.as_str()), &nm.array) {
                nm.array = Some(Range {
                    msb: lit(mp.base as u128, None),
                    lsb: lit(mp.base as u128 + mp.depth as u128 * c as u128 - 1, None),
                });
            }
        }
    }

    let mut decls: Vec<Item> = Vec::new();
    let mut logic: Vec<Item> = Vec::new();
    for (wire, w, e) in hoisted {
        decls.push(decl(NetKind::Wire, &wire, w));
        logic.push(cont(&wire, e));
    }
    let delay = opts.sp_delay.then_some(1);
    let mut fault_found = false;
    for ch in &plan.chains {
        let mut prev = ch.source.clone();
        for st in &ch.stages {
            let ck = format!("clk_sp{}", st.stage);
            match &opts.fault {
                Some(f) if f.register == st.name => {
                    fault_found = true;
                    match f.bit {
                        None => {
                            decls.push(decl(NetKind::Wire, &st.name, ch.width));
                            logic.push(cont(&st.name, ident(&prev)));
                        }
                        Some(b) => {
                            if b >= ch.width {
                                return Err(EmitError::BadBit {
                                    name: st.name.clone(),
                                    bit: b,
                                    width: ch.width,
                                });
                            }
                            let q = format!("{}__f", st.name);
                            decls.push(decl(NetKind::Reg, &q, ch.width));
                            decls.push(decl(NetKind::Wire, &st.name, ch.width));
                            logic.push(clocked(edge, &ck, nba(&q, ident(&prev), delay)));
                            let bit = lit(1u128 << b, Some(ch.width));
                            let keep = lit(!(1u128 << b) & crate::frontend::scope::mask(ch.width), Some(ch.width));
                            logic.push(cont(
                                &st.name,
                                bin(
                                    BinaryOp::Or,
                                    bin(BinaryOp::And, ident(&q), keep),
                                    bin(BinaryOp::And, ident(&prev), bit),
                                ),
                            ));
                        }
                    }
                }
                _ => {
                    decls.push(decl(NetKind::Reg, &st.name, ch.width));
                    logic.push(clocked(edge, &ck, nba(&st.name, ident(&prev), delay)));
                }
            }
            prev = st.name.clone();
        }
    }
    if let Some(f) = &opts.fault {
        if !fault_found {
            return Err(EmitError::UnknownRegister(f.register.clone()));
        }
    }

    if gate {
        decls.push(decl(NetKind::Reg, &plan.warm, c - 1));
        let next = if c == 2 {
            lit(1, Some(1))
        } else {
            let low = Expr::new(
                NEW,
                ExprKind::Slice {
                    base: plan.warm.clone(),
                    msb: Box::new(lit(c as u128 - 3, None)),
                    lsb: Box::new(lit(0, None)),
                },
            );
            Expr::new(NEW, ExprKind::Concat(vec![low, lit(1, Some(1))]))
        };
        logic.push(clocked(edge, &plan.clock, nba(&plan.warm, next, None)));
    }
    for mp in &plan.memories {
        let w = mp.counter_width;
        let step = mp.depth as u128;
        let last = step * (c as u128 - 1);
        decls.push(decl(NetKind::Reg, &mp.counter, w));
        let next = Expr::new(
            NEW,
            ExprKind::Ternary {
                cond: Box::new(bin(BinaryOp::Eq, ident(&mp.counter), lit(last, Some(w)))),
                then_expr: Box::new(lit(0, Some(w))),
                else_expr: Box::new(bin(BinaryOp::Add, ident(&mp.counter), lit(step, Some(w)))),
            },
        );
        logic.push(clocked(edge, &plan.clock, nba(&mp.counter, next, None)));
    }

    // outputs: internal net renamed to <y>_core, port driven from the align register
    let mut renames: HashMap<String, String> = HashMap::new();
    let declared: BTreeSet<String> = m.nets().flat_map(|d| d.names.iter().map(|n| n.name.clone())).collect();
    let mut tail_items: Vec<Item> = Vec::new();
    for o in &plan.outputs {
        let (Some(core), Some(al)) = (&o.core, &o.align) else { continue };
        let w = g.scope.get(&o.port).map(|s| s.width).unwrap_or(1);
        renames.insert(o.port.clone(), core.clone());
        let port = m.ports.iter_mut().find(|p| p.name == o.port).expect("output port");
        if !declared.contains(&o.port) {
            decls.push(Item::Net(NetDecl {
                kind: port.kind,
                range: port.range.clone(),
                names: vec![NetName {
                    name: core.clone(),
                    array: None,
                }],
                span: Span::default(),
            }));
        }
        port.kind = NetKind::Wire;
        decls.push(decl(NetKind::Reg, al, w));
        let src = o.chain_end.clone().unwrap_or_else(|| core.clone());
        tail_items.push(clocked(edge, &plan.clock, nba(al, ident(&src), None)));
        tail_items.push(cont(&o.port, ident(al)));
    }

    m.items.splice(0..0, decls);
    m.items.extend(logic);
    rename_all(&mut m, &renames);
    m.items.extend(tail_items);

    if opts.tie_clocks {
        let mut extra = Vec::new();
        for ck in &plan.clock_ports {
            extra.push(decl(NetKind::Wire, ck, 1));
        }
        for ck in &plan.clock_ports {
            extra.push(cont(ck, ident(&plan.clock)));
        }
        m.items.splice(0..0, extra);
    } else {
        let at = m.ports.iter().position(|p| p.name == plan.clock).map(|i| i + 1).unwrap_or(m.ports.len());
        let new_ports: Vec<Port> = plan
            .clock_ports
            .iter()
            .map(|ck| Port {
                name: ck.clone(),
                dir: Direction::Input,
                kind: NetKind::Wire,
                range: None,
                span: Span::default(),
            })
            .collect();
        m.ports.splice(at..at, new_ports);
    }
    renumber_exprs(&mut m, 0);
    Ok(m)
}

pub fn emit_verilog(g: &DesignGraph, plan: &RewritePlan, opts: &EmitOptions) -> Result<String, EmitError> {
    Ok(print_module(&emit_module(g, plan, opts)?))
}

/// With cmf = 1 nothing changes; the output is the original, pretty-printed.
pub fn emit_identity(unit: &SourceUnit) -> String {
    print_unit(unit)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ScheduleOutput {
    pub name: String,
    pub segment: Option<u32>,
    /// Fast cycles between a thread's input slot and its output.
    pub latency: u32,
    /// `latency mod cmf`: slot offset relative to the thread's input slot.
    pub slot: u32,
    /// `latency div cmf`: whole original cycles of delay.
    pub delay_cycles: u32,
    pub aligned: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ScheduleReport {
    pub schema: &'static str,
    pub top: String,
    pub cmf: u32,
    pub clock: Option<String>,
    pub clock_ports: Vec<String>,
    pub tie_clocks: bool,
    /// Thread k owns fast cycles t·cmf + k; inputs are applied in that slot.
    pub inputs: Vec<String>,
    pub outputs: Vec<ScheduleOutput>,
    /// Original cycles per thread before outputs are meaningful.
    pub warmup_cycles: u32,
    pub warmup_gate: bool,
    pub sp_registers: usize,
    pub sp_register_bits: u64,
    pub align_register_bits: u64,
}

impl ScheduleReport {
    pub fn alignment(&self) -> Alignment {
        Alignment {
            cmf: self.cmf,
            latency: self.outputs.iter().map(|o| (o.name.clone(), o.latency)).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serializes")
    }
}

fn inputs_of(g: &DesignGraph) -> Vec<String> {
    g.module
        .ports
        .iter()
        .filter(|p| p.dir == Direction::Input && Some(&p.name) != g.clock.as_ref())
        .map(|p| p.name.clone())
        .collect()
}

pub fn emit_schedule(g: &DesignGraph, plan: &RewritePlan, opts: &EmitOptions) -> ScheduleReport {
    let c = plan.cmf;
    ScheduleReport {
        schema: SCHEDULE_SCHEMA,
        top: g.top.clone(),
        cmf: c,
        clock: g.clock.clone(),
        clock_ports: plan.clock_ports.clone(),
        tie_clocks: opts.tie_clocks,
        inputs: inputs_of(g),
        outputs: plan
            .outputs
            .iter()
            .map(|o| ScheduleOutput {
                name: o.port.clone(),
                segment: o.segment,
                latency: o.latency,
                slot: o.latency % c,
                delay_cycles: o.latency / c,
                aligned: plan.align_outputs,
            })
            .collect(),
        warmup_cycles: c,
        warmup_gate: opts.warmup_gate,
        sp_registers: plan.sp_registers().len(),
        sp_register_bits: plan.sp_register_bits(),
        align_register_bits: plan.align_register_bits(g),
    }
}

/// Schedule of an unchanged design: one thread, no latency.
pub fn identity_schedule(g: &DesignGraph) -> ScheduleReport {
    ScheduleReport {
        schema: SCHEDULE_SCHEMA,
        top: g.top.clone(),
        cmf: 1,
        clock: g.clock.clone(),
        clock_ports: vec![],
        tie_clocks: false,
        inputs: inputs_of(g),
        outputs: g
            .seq_nodes
            .iter()
            .filter(|s| s.kind == SeqKind::PrimaryOutput)
            .map(|s| ScheduleOutput {
                name: s.name.clone(),
                segment: None,
                latency: 0,
                slot: 0,
                delay_cycles: 0,
                aligned: false,
            })
            .collect(),
        warmup_cycles: 0,
        warmup_gate: false,
        sp_registers: 0,
        sp_register_bits: 0,
        align_register_bits: 0,
    }
}
