//! Design graph: sequential boundaries plus combinational RTL constructs.
//!
//! Every operator occurrence becomes one combinational node. Statements are
//! sliced per assigned target: an `if` yields an if-node for each target it
//! assigns, a `case` one case-node per target, an indexed write a demux-node.
//! Named nets are not nodes; an edge into a consumer carries the name the
//! consumer reads (`signal`) and the expression occurrence it reads it at
//! (`site`), which is where the emitter later splices in a pipeline register.
//!
//! Placement units: every operator node of a continuous assignment or of a
//! clocked-process expression is a unit of its own; all nodes of one
//! combinational process form a single unit; statement-level nodes of clocked
//! processes share unit 0, which is pinned to the last segment.

use crate::frontend::ast::*;
use crate::frontend::scope::{Scope, SymKind};
use crate::frontend::{flatten, subset_check, Diagnostic, FlattenError};
use serde::Serialize;
use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashSet};

pub const GRAPH_SCHEMA: &str = "cslow.graph/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRef {
    Seq(usize),
    Comb(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SeqKind {
    PrimaryInput,
    PrimaryOutput,
    RegisterBank,
    /// The read-data register of a synchronous memory read; its input is the address.
    MemReadPort { memory: String },
    /// Enable conditions, address and data of a memory write.
    MemWritePort { memory: String },
}

impl SeqKind {
    pub fn is_source(&self) -> bool {
        matches!(self, SeqKind::PrimaryInput | SeqKind::RegisterBank | SeqKind::MemReadPort { .. })
    }

    pub fn is_sink(&self) -> bool {
        !matches!(self, SeqKind::PrimaryInput)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SeqNode {
    #[serde(flatten)]
    pub kind: SeqKind,
    pub name: String,
    pub width: u32,
    /// Asynchronous reset value, registers only.
    pub reset_value: Option<u128>,
    pub span: Span,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MathOp {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RtlcsKind {
    /// `if` statement or `?:`.
    If,
    Case { alternatives: u32 },
    Math { op: MathOp },
    /// Bitwise and logical operators.
    Comb,
    /// Reduction operators and `!`.
    Reduction,
    /// Bit-select by a variable index.
    Mux { elements: u32 },
    /// Write to a bit or part of a vector.
    Demux { elements: u32 },
    ShiftVar { amount_width: u32 },
    ShiftConst,
    ConstSelect,
    Literal,
    Identifier,
    Concat,
    Comparison,
}

#[derive(Clone, Debug, Serialize)]
pub struct CombNode {
    #[serde(flatten)]
    pub kind: RtlcsKind,
    pub operand_widths: Vec<u32>,
    pub width: u32,
    /// 2-input logic depth; filled in by the timing model.
    pub weight: Option<u32>,
    pub span: Span,
    /// The operator occurrence, for expression nodes.
    pub expr: Option<ExprId>,
    pub unit: usize,
}

/// Where a consumer reads an edge's value: an expression occurrence, or the
/// base name of a select (`a` in `a[i]`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Site {
    pub expr: ExprId,
    pub base: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Edge {
    pub tail: NodeRef,
    pub head: NodeRef,
    /// Net name for named values; empty for anonymous subexpressions.
    pub signal: String,
    pub width: u32,
    pub named: bool,
    pub site: Option<Site>,
    /// Implicit "keep the old value" input of a register.
    pub hold: bool,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Unit {
    pub nodes: Vec<usize>,
    pub pinned: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DesignGraph {
    pub schema: &'static str,
    pub top: String,
    pub clock: Option<String>,
    pub clock_edge: EdgeKind,
    pub async_resets: Vec<AsyncReset>,
    pub seq_nodes: Vec<SeqNode>,
    pub comb_nodes: Vec<CombNode>,
    pub edges: Vec<Edge>,
    pub units: Vec<Unit>,
    /// The flattened top module the graph was built from.
    #[serde(skip)]
    pub module: ModuleDecl,
    #[serde(skip)]
    pub scope: Scope,
    #[serde(skip)]
    adj: Adjacency,
}

#[derive(Clone, Debug, Default)]
struct Adjacency {
    seq_in: Vec<Vec<usize>>,
    seq_out: Vec<Vec<usize>>,
    comb_in: Vec<Vec<usize>>,
    comb_out: Vec<Vec<usize>>,
}

#[derive(Debug, thiserror::Error)]
pub enum ElabError {
    #[error("unknown top module '{0}'")]
    UnknownTop(String),
    #[error(transparent)]
    Flatten(#[from] FlattenError),
    #[error("design is outside the supported subset: {}", .0.first().map(|d| d.message.as_str()).unwrap_or(""))]
    Subset(Vec<Diagnostic>),
    #[error("combinational loop through {}", .0.join(", "))]
    CombLoop(Vec<String>),
    #[error("{0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("more than {limit} source-to-sink paths")]
pub struct PathLimitExceeded {
    pub limit: usize,
}

/// One source-to-sink path as a node sequence.
pub type Path = Vec<NodeRef>;

impl DesignGraph {
    pub fn in_edges(&self, n: NodeRef) -> &[usize] {
        match n {
            NodeRef::Seq(i) => &self.adj.seq_in[i],
            NodeRef::Comb(i) => &self.adj.comb_in[i],
        }
    }

    pub fn out_edges(&self, n: NodeRef) -> &[usize] {
        match n {
            NodeRef::Seq(i) => &self.adj.seq_out[i],
            NodeRef::Comb(i) => &self.adj.comb_out[i],
        }
    }

    pub fn is_source(&self, n: NodeRef) -> bool {
        matches!(n, NodeRef::Seq(i) if self.seq_nodes[i].kind.is_source())
    }

    pub fn is_sink(&self, n: NodeRef) -> bool {
        matches!(n, NodeRef::Seq(i) if self.seq_nodes[i].kind.is_sink())
    }

    pub fn seq(&self, kind: &SeqKind, name: &str) -> Option<usize> {
        self.seq_nodes.iter().position(|s| s.kind == *kind && s.name == name)
    }

    /// Human-readable node name for reports.
    pub fn describe(&self, n: NodeRef) -> String {
        match n {
            NodeRef::Seq(i) => {
                let s = &self.seq_nodes[i];
                let k = match &s.kind {
                    SeqKind::PrimaryInput => "in",
                    SeqKind::PrimaryOutput => "out",
                    SeqKind::RegisterBank => "reg",
                    SeqKind::MemReadPort { .. } => "mem_rd",
                    SeqKind::MemWritePort { .. } => "mem_wr",
                };
                format!("{k}:{}", s.name)
            }
            NodeRef::Comb(i) => {
                let c = &self.comb_nodes[i];
                format!("n{i}@{}", c.span)
            }
        }
    }

    /// Rebuild adjacency lists after the node or edge vectors changed.
    pub fn reindex(&mut self) {
        let mut adj = Adjacency {
            seq_in: vec![vec![]; self.seq_nodes.len()],
            seq_out: vec![vec![]; self.seq_nodes.len()],
            comb_in: vec![vec![]; self.comb_nodes.len()],
            comb_out: vec![vec![]; self.comb_nodes.len()],
        };
        for (i, e) in self.edges.iter().enumerate() {
            match e.tail {
                NodeRef::Seq(s) => adj.seq_out[s].push(i),
                NodeRef::Comb(c) => adj.comb_out[c].push(i),
            }
            match e.head {
                NodeRef::Seq(s) => adj.seq_in[s].push(i),
                NodeRef::Comb(c) => adj.comb_in[c].push(i),
            }
        }
        self.adj = adj;
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("graph serializes")
    }

    /// Build a graph directly from parts; used for synthetic test graphs.
    pub fn from_parts(seq_nodes: Vec<SeqNode>, comb_nodes: Vec<CombNode>, edges: Vec<Edge>, units: Vec<Unit>) -> Self {
        let mut g = DesignGraph {
            schema: GRAPH_SCHEMA,
            top: String::new(),
            clock: None,
            clock_edge: EdgeKind::Posedge,
            async_resets: vec![],
            seq_nodes,
            comb_nodes,
            edges,
            units,
            module: ModuleDecl {
                name: String::new(),
                ports: vec![],
                items: vec![],
                span: Span::default(),
            },
            scope: Scope::default(),
            adj: Adjacency::default(),
        };
        g.reindex();
        g
    }
}

/// Deterministic topological order of the combinational nodes; ties go to the lower node id.
pub fn topo_order(g: &DesignGraph) -> Result<Vec<usize>, ElabError> {
    let n = g.comb_nodes.len();
    let mut indeg = vec![0usize; n];
    for e in &g.edges {
        if let (NodeRef::Comb(_), NodeRef::Comb(h)) = (e.tail, e.head) {
            indeg[h] += 1;
        }
    }
    let mut heap: BinaryHeap<Reverse<usize>> = (0..n).filter(|&i| indeg[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(u)) = heap.pop() {
        order.push(u);
        for &ei in g.out_edges(NodeRef::Comb(u)) {
            if let NodeRef::Comb(h) = g.edges[ei].head {
                indeg[h] -= 1;
                if indeg[h] == 0 {
                    heap.push(Reverse(h));
                }
            }
        }
    }
    if order.len() < n {
        let stuck = (0..n)
            .filter(|&i| indeg[i] > 0)
            .map(|i| g.describe(NodeRef::Comb(i)))
            .collect();
        return Err(ElabError::CombLoop(stuck));
    }
    Ok(order)
}

fn distinct_heads(g: &DesignGraph, n: NodeRef) -> BTreeSet<NodeRef> {
    g.out_edges(n).iter().map(|&e| g.edges[e].head).collect()
}

/// Number of distinct source-to-sink node sequences (saturating).
pub fn count_paths(g: &DesignGraph) -> Result<u128, ElabError> {
    let order = topo_order(g)?;
    // paths from each comb node to any sink
    let mut to_sink = vec![0u128; g.comb_nodes.len()];
    for &u in order.iter().rev() {
        let mut c = 0u128;
        for h in distinct_heads(g, NodeRef::Comb(u)) {
            c = c.saturating_add(match h {
                NodeRef::Seq(_) => 1,
                NodeRef::Comb(v) => to_sink[v],
            });
        }
        to_sink[u] = c;
    }
    let mut total = 0u128;
    for i in 0..g.seq_nodes.len() {
        if !g.seq_nodes[i].kind.is_source() {
            continue;
        }
        for h in distinct_heads(g, NodeRef::Seq(i)) {
            total = total.saturating_add(match h {
                NodeRef::Seq(_) => 1,
                NodeRef::Comb(v) => to_sink[v],
            });
        }
    }
    Ok(total)
}

/// Every source-to-sink path, or an error once more than `limit` have been found.
pub fn enumerate_paths(g: &DesignGraph, limit: usize) -> Result<Vec<Path>, PathLimitExceeded> {
    fn walk(g: &DesignGraph, n: NodeRef, cur: &mut Path, out: &mut Vec<Path>, limit: usize) -> Result<(), PathLimitExceeded> {
        for h in distinct_heads(g, n) {
            cur.push(h);
            match h {
                NodeRef::Seq(_) => {
                    if out.len() >= limit {
                        return Err(PathLimitExceeded { limit });
                    }
                    out.push(cur.clone());
                }
                NodeRef::Comb(_) => walk(g, h, cur, out, limit)?,
            }
            cur.pop();
        }
        Ok(())
    }
    let mut out = Vec::new();
    for i in 0..g.seq_nodes.len() {
        if g.seq_nodes[i].kind.is_source() {
            let start = NodeRef::Seq(i);
            walk(g, start, &mut vec![start], &mut out, limit)?;
        }
    }
    Ok(out)
}

/// Elaborate `top` after flattening; the unit must pass the subset check.
pub fn elaborate(unit: &SourceUnit, top: &str) -> Result<DesignGraph, ElabError> {
    if unit.module(top).is_none() {
        return Err(ElabError::UnknownTop(top.to_string()));
    }
    let diags = subset_check(unit);
    if !diags.is_empty() {
        return Err(ElabError::Subset(diags));
    }
    let m = flatten(unit, top)?;
    elaborate_module(m)
}

/// Elaborate an already flat module (no instances).
pub fn elaborate_module(m: ModuleDecl) -> Result<DesignGraph, ElabError> {
    let (scope, errs) = Scope::build(&m);
    if let Some(e) = errs.first() {
        return Err(ElabError::Unsupported(e.message.clone()));
    }
    let mut b = Builder::new(&m, &scope)?;
    for pi in 0..b.procs.len() {
        if b.procs[pi].is_clocked() {
            b.clocked(pi)?;
        }
    }
    for port in &m.ports {
        if port.dir == Direction::Output {
            let v = b.net(&port.name)?;
            let po = b.po[&port.name];
            b.connect_val(&port.name, &v, NodeRef::Seq(po), None);
        }
    }
    let (clock, clock_edge) = b.main_clock();
    let mut async_resets: Vec<AsyncReset> = Vec::new();
    for p in &b.procs {
        if let Some(r) = p.reset() {
            if !async_resets.contains(r) {
                async_resets.push(r.clone());
            }
        }
    }
    let Builder {
        seq, comb, edges, units, ..
    } = b;
    let mut g = DesignGraph {
        schema: GRAPH_SCHEMA,
        top: m.name.clone(),
        clock,
        clock_edge,
        async_resets,
        seq_nodes: seq,
        comb_nodes: comb,
        edges,
        units,
        module: m.clone(),
        scope: scope.clone(),
        adj: Adjacency::default(),
    };
    prune(&mut g);
    topo_order(&g)?;
    Ok(g)
}

/// Drop comb nodes that reach no sink; compact ids and units.
fn prune(g: &mut DesignGraph) {
    g.reindex();
    let n = g.comb_nodes.len();
    let mut live = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    for e in &g.edges {
        if let (NodeRef::Comb(t), NodeRef::Seq(_)) = (e.tail, e.head) {
            if !live[t] {
                live[t] = true;
                stack.push(t);
            }
        }
    }
    while let Some(u) = stack.pop() {
        for &ei in g.in_edges(NodeRef::Comb(u)) {
            if let NodeRef::Comb(t) = g.edges[ei].tail {
                if !live[t] {
                    live[t] = true;
                    stack.push(t);
                }
            }
        }
    }
    let mut remap = vec![usize::MAX; n];
    let mut nodes = Vec::new();
    for (i, c) in std::mem::take(&mut g.comb_nodes).into_iter().enumerate() {
        if live[i] {
            remap[i] = nodes.len();
            nodes.push(c);
        }
    }
    let fix = |r: NodeRef| match r {
        NodeRef::Comb(i) => NodeRef::Comb(remap[i]),
        s => s,
    };
    let edges: Vec<Edge> = std::mem::take(&mut g.edges)
        .into_iter()
        .filter(|e| {
            let ok = |r: NodeRef| !matches!(r, NodeRef::Comb(i) if !live[i]);
            ok(e.tail) && ok(e.head)
        })
        .map(|mut e| {
            e.tail = fix(e.tail);
            e.head = fix(e.head);
            e
        })
        .collect();
    // Unit 0 (pinned) keeps its id; others are compacted in order.
    let mut unit_map: BTreeMap<usize, usize> = BTreeMap::new();
    let mut units: Vec<Unit> = vec![Unit {
        nodes: vec![],
        pinned: true,
    }];
    unit_map.insert(0, 0);
    for (i, c) in nodes.iter_mut().enumerate() {
        let u = *unit_map.entry(c.unit).or_insert_with(|| {
            units.push(Unit {
                nodes: vec![],
                pinned: g.units[c.unit].pinned,
            });
            units.len() - 1
        });
        c.unit = u;
        units[u].nodes.push(i);
    }
    g.comb_nodes = nodes;
    g.edges = edges;
    g.units = units;
    g.reindex();
}

#[derive(Clone, Debug)]
struct Src {
    node: NodeRef,
    signal: String,
    named: bool,
    width: u32,
}

#[derive(Clone, Debug)]
enum Val {
    Const,
    /// The register's current value (clocked processes only).
    Hold,
    Src(Src),
}

type Env = BTreeMap<String, (Val, Option<Site>)>;

#[derive(Clone, Copy)]
struct Mode {
    blocking: bool,
    /// Unit for expression nodes; `None` gives each node its own unit.
    expr_unit: Option<usize>,
    stmt_unit: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Drv {
    Assign(usize),
    Comb(usize),
}

struct Builder<'a> {
    scope: &'a Scope,
    assigns: Vec<&'a ContinuousAssign>,
    procs: Vec<&'a ProcessBlock>,
    clocks: BTreeSet<String>,
    drivers: BTreeMap<String, Drv>,
    pi: BTreeMap<String, usize>,
    po: BTreeMap<String, usize>,
    regs: BTreeMap<String, usize>,
    mrp: BTreeMap<String, usize>,
    mwp: BTreeMap<String, usize>,
    seq: Vec<SeqNode>,
    comb: Vec<CombNode>,
    edges: Vec<Edge>,
    edge_set: HashSet<(NodeRef, NodeRef, String, Option<Site>, bool)>,
    units: Vec<Unit>,
    net_vals: BTreeMap<String, Val>,
    done: BTreeSet<Drv>,
    in_progress: Vec<Drv>,
}

fn site(e: &Expr) -> Site {
    Site {
        expr: e.id,
        base: false,
    }
}

fn targets_of(s: &Stmt) -> BTreeSet<String> {
    let mut t = BTreeSet::new();
    s.walk(&mut |x| {
        if let StmtKind::Assign { lhs, .. } = &x.kind {
            t.insert(lhs.name().to_string());
        }
    });
    t
}

impl<'a> Builder<'a> {
    fn new(m: &'a ModuleDecl, scope: &'a Scope) -> Result<Self, ElabError> {
        let assigns: Vec<_> = m.assigns().collect();
        let procs: Vec<_> = m.processes().collect();
        if m.instances().next().is_some() {
            return Err(ElabError::Unsupported("module must be flattened before elaboration".into()));
        }
        let mut b = Builder {
            scope,
            assigns,
            procs,
            clocks: BTreeSet::new(),
            drivers: BTreeMap::new(),
            pi: BTreeMap::new(),
            po: BTreeMap::new(),
            regs: BTreeMap::new(),
            mrp: BTreeMap::new(),
            mwp: BTreeMap::new(),
            seq: vec![],
            comb: vec![],
            edges: vec![],
            edge_set: HashSet::new(),
            units: vec![Unit {
                nodes: vec![],
                pinned: true,
            }],
            net_vals: BTreeMap::new(),
            done: BTreeSet::new(),
            in_progress: vec![],
        };
        for p in &b.procs {
            if let Sensitivity::Clocked { clock, .. } = &p.sensitivity {
                b.clocks.insert(clock.clone());
            }
        }
        for (i, a) in b.assigns.iter().enumerate() {
            b.drivers.insert(a.lhs.name().to_string(), Drv::Assign(i));
        }
        let width = |n: &str| scope.get(n).map(|s| s.width).unwrap_or(1);
        for port in &m.ports {
            if port.dir == Direction::Input && !b.clocks.contains(&port.name) {
                let i = b.add_seq(SeqKind::PrimaryInput, &port.name, width(&port.name), port.span);
                b.pi.insert(port.name.clone(), i);
            }
        }
        for pi in 0..b.procs.len() {
            let p = b.procs[pi];
            if !p.is_clocked() {
                for t in targets_of(&p.body) {
                    b.drivers.insert(t, Drv::Comb(pi));
                }
                continue;
            }
            // memory read registers first so they are not also register banks
            if let Some(body) = p.functional_body() {
                for s in body.top_level() {
                    if let StmtKind::Assign {
                        lhs: LValue::Whole(rd),
                        rhs:
                            Expr {
                                kind: ExprKind::Index { base, .. },
                                ..
                            },
                        ..
                    } = &s.kind
                    {
                        if scope.get(base).map(|x| x.is_memory()).unwrap_or(false) {
                            let i = b.add_seq(
                                SeqKind::MemReadPort { memory: base.clone() },
                                rd,
                                width(rd),
                                s.span,
                            );
                            b.mrp.insert(rd.clone(), i);
                        }
                    }
                }
            }
            for t in targets_of(&p.body) {
                let sym = scope.get(&t);
                if sym.map(|x| x.is_memory()).unwrap_or(false) {
                    if !b.mwp.contains_key(&t) {
                        let i = b.add_seq(SeqKind::MemWritePort { memory: t.clone() }, &t, width(&t), p.span);
                        b.mwp.insert(t, i);
                    }
                } else if !b.mrp.contains_key(&t) && !b.regs.contains_key(&t) {
                    let i = b.add_seq(SeqKind::RegisterBank, &t, width(&t), p.span);
                    b.regs.insert(t, i);
                }
            }
        }
        for port in &m.ports {
            if port.dir == Direction::Output {
                let i = b.add_seq(SeqKind::PrimaryOutput, &port.name, width(&port.name), port.span);
                b.po.insert(port.name.clone(), i);
            }
        }
        Ok(b)
    }

    fn main_clock(&self) -> (Option<String>, EdgeKind) {
        let mut clock = None;
        let mut edge = EdgeKind::Posedge;
        for p in &self.procs {
            if let Sensitivity::Clocked { clock: c, edge: e, .. } = &p.sensitivity {
                let alias = c.starts_with("clk_sp") && c[6..].bytes().all(|b| b.is_ascii_digit()) && c.len() > 6;
                if clock.is_none() || !alias {
                    edge = *e;
                    if !alias || clock.is_none() {
                        clock = Some(c.clone());
                    }
                    if !alias {
                        break;
                    }
                }
            }
        }
        (clock, edge)
    }

    fn add_seq(&mut self, kind: SeqKind, name: &str, width: u32, span: Span) -> usize {
        self.seq.push(SeqNode {
            kind,
            name: name.to_string(),
            width,
            reset_value: None,
            span,
        });
        self.seq.len() - 1
    }

    fn new_unit(&mut self) -> usize {
        self.units.push(Unit::default());
        self.units.len() - 1
    }

    fn add_node(&mut self, kind: RtlcsKind, operand_widths: Vec<u32>, width: u32, span: Span, expr: Option<ExprId>, unit: usize) -> usize {
        self.comb.push(CombNode {
            kind,
            operand_widths,
            width,
            weight: None,
            span,
            expr,
            unit,
        });
        self.comb.len() - 1
    }

    fn push_edge(&mut self, e: Edge) {
        let key = (e.tail, e.head, e.signal.clone(), e.site, e.hold);
        if self.edge_set.insert(key) {
            self.edges.push(e);
        }
    }

    fn connect(&mut self, v: &Val, head: NodeRef, site: Option<Site>) {
        if let Val::Src(s) = v {
            self.push_edge(Edge {
                tail: s.node,
                head,
                signal: s.signal.clone(),
                width: s.width,
                named: s.named,
                site,
                hold: false,
            });
        }
    }

    /// Like `connect`, but a `Hold` becomes an edge from register `target`.
    fn connect_val(&mut self, target: &str, v: &Val, head: NodeRef, site: Option<Site>) {
        match v {
            Val::Hold => {
                let r = self.regs[target];
                let w = self.seq[r].width;
                self.push_edge(Edge {
                    tail: NodeRef::Seq(r),
                    head,
                    signal: target.to_string(),
                    width: w,
                    named: true,
                    site: None,
                    hold: true,
                });
            }
            _ => self.connect(v, head, site),
        }
    }

    fn width_of(&self, e: &Expr) -> u32 {
        self.scope.width(e).unwrap_or(1)
    }

    fn named(v: Val, name: &str, width: u32) -> Val {
        match v {
            Val::Src(s) => Val::Src(Src {
                node: s.node,
                signal: name.to_string(),
                named: true,
                width,
            }),
            other => other,
        }
    }

    /// Value of net `n` as seen from outside its driver.
    fn net(&mut self, n: &str) -> Result<Val, ElabError> {
        let width = self.scope.get(n).map(|s| s.width).unwrap_or(1);
        let seq = |node: usize| {
            Val::Src(Src {
                node: NodeRef::Seq(node),
                signal: n.to_string(),
                named: true,
                width,
            })
        };
        if let Some(&i) = self.pi.get(n) {
            return Ok(seq(i));
        }
        if let Some(&i) = self.regs.get(n) {
            return Ok(seq(i));
        }
        if let Some(&i) = self.mrp.get(n) {
            return Ok(seq(i));
        }
        if self.clocks.contains(n) {
            return Err(ElabError::Unsupported(format!("clock '{n}' used as data")));
        }
        if let Some(v) = self.net_vals.get(n) {
            return Ok(v.clone());
        }
        match self.drivers.get(n).copied() {
            Some(d) => {
                self.resolve(d)?;
                Ok(self.net_vals.get(n).cloned().unwrap_or(Val::Const))
            }
            None => match self.scope.get(n).map(|s| &s.kind) {
                Some(SymKind::Param { .. }) => Ok(Val::Const),
                _ => Err(ElabError::Unsupported(format!("'{n}' is read but never driven"))),
            },
        }
    }

    fn resolve(&mut self, d: Drv) -> Result<(), ElabError> {
        if self.done.contains(&d) {
            return Ok(());
        }
        if self.in_progress.contains(&d) {
            let names = self
                .in_progress
                .iter()
                .map(|d| match d {
                    Drv::Assign(i) => self.assigns[*i].lhs.name().to_string(),
                    Drv::Comb(i) => format!("process@{}", self.procs[*i].span),
                })
                .collect();
            return Err(ElabError::CombLoop(names));
        }
        self.in_progress.push(d);
        match d {
            Drv::Assign(i) => {
                let a = self.assigns[i];
                let mode = Mode {
                    blocking: false,
                    expr_unit: None,
                    stmt_unit: 0,
                };
                let v = self.expr(&a.rhs, &Env::new(), mode)?;
                let name = a.lhs.name();
                let w = self.scope.get(name).map(|s| s.width).unwrap_or(1);
                self.net_vals.insert(name.to_string(), Self::named(v, name, w));
            }
            Drv::Comb(i) => {
                let p = self.procs[i];
                let unit = self.new_unit();
                let mode = Mode {
                    blocking: true,
                    expr_unit: Some(unit),
                    stmt_unit: unit,
                };
                let mut env = Env::new();
                self.exec(&p.body, &mut env, mode, &mut Vec::new())?;
                for t in targets_of(&p.body) {
                    let w = self.scope.get(&t).map(|s| s.width).unwrap_or(1);
                    let v = env.get(&t).map(|x| x.0.clone()).unwrap_or(Val::Const);
                    self.net_vals.insert(t.clone(), Self::named(v, &t, w));
                }
            }
        }
        self.in_progress.pop();
        self.done.insert(d);
        Ok(())
    }

    fn clocked(&mut self, pi: usize) -> Result<(), ElabError> {
        let p = self.procs[pi];
        let targets: Vec<String> = targets_of(&p.body)
            .into_iter()
            .filter(|t| self.regs.contains_key(t))
            .collect();
        if let Some((rst_branch, _)) = p.reset_branches() {
            let mut err = None;
            rst_branch.walk(&mut |s| {
                if let StmtKind::Assign { lhs, rhs, .. } = &s.kind {
                    match (lhs, self.scope.const_eval(rhs)) {
                        (LValue::Whole(t), Ok(v)) if self.regs.contains_key(t) => {
                            let r = self.regs[t];
                            let w = self.seq[r].width;
                            self.seq[r].reset_value = Some(v & crate::frontend::scope::mask(w));
                        }
                        _ => {
                            err = Some(format!(
                                "asynchronous reset of '{}' must assign a constant to the whole register",
                                lhs.name()
                            ))
                        }
                    }
                }
            });
            if let Some(e) = err {
                return Err(ElabError::Unsupported(e));
            }
        }
        let mut env: Env = targets.iter().map(|t| (t.clone(), (Val::Hold, None))).collect();
        if let Some(body) = p.functional_body() {
            let mode = Mode {
                blocking: false,
                expr_unit: None,
                stmt_unit: 0,
            };
            self.exec(body, &mut env, mode, &mut Vec::new())?;
        }
        for t in &targets {
            let (v, s) = env[t].clone();
            let r = self.regs[t];
            self.connect_val(t, &v, NodeRef::Seq(r), s);
        }
        Ok(())
    }

    fn exec(&mut self, s: &Stmt, env: &mut Env, mode: Mode, conds: &mut Vec<(Val, Site)>) -> Result<(), ElabError> {
        match &s.kind {
            StmtKind::Null => Ok(()),
            StmtKind::Block(v) => {
                for st in v {
                    self.exec(st, env, mode, conds)?;
                }
                Ok(())
            }
            StmtKind::Assign { lhs, rhs, .. } => self.exec_assign(s, lhs, rhs, env, mode, conds),
            StmtKind::If {
                cond,
                then_stmt,
                else_stmt,
            } => {
                if self.scope.is_const(cond) {
                    let taken = self.scope.const_eval(cond).map_err(|e| ElabError::Unsupported(e.message))? != 0;
                    return match (taken, else_stmt) {
                        (true, _) => self.exec(then_stmt, env, mode, conds),
                        (false, Some(e)) => self.exec(e, env, mode, conds),
                        (false, None) => Ok(()),
                    };
                }
                let cv = self.expr(cond, env, mode)?;
                let cs = site(cond);
                conds.push((cv.clone(), cs));
                let mut te = env.clone();
                self.exec(then_stmt, &mut te, mode, conds)?;
                let mut ee = env.clone();
                let mut assigned = targets_of(then_stmt);
                if let Some(e) = else_stmt {
                    self.exec(e, &mut ee, mode, conds)?;
                    assigned.extend(targets_of(e));
                }
                conds.pop();
                for t in assigned {
                    if !env.contains_key(&t) && !te.contains_key(&t) && !ee.contains_key(&t) {
                        continue;
                    }
                    let w = self.target_width(&t);
                    let node = self.add_node(RtlcsKind::If, vec![1, w, w], w, s.span, None, mode.stmt_unit);
                    self.connect(&cv, NodeRef::Comb(node), Some(cs));
                    for branch in [&te, &ee] {
                        let (v, bs) = branch.get(&t).cloned().unwrap_or((Val::Const, None));
                        self.connect_val(&t, &v, NodeRef::Comb(node), bs);
                    }
                    env.insert(t, (self.node_val(node, w), None));
                }
                Ok(())
            }
            StmtKind::Case { sel, items } => {
                if self.scope.is_const(sel) {
                    let v = self.scope.const_eval(sel).map_err(|e| ElabError::Unsupported(e.message))?;
                    let hit = items.iter().find(|it| {
                        it.labels
                            .iter()
                            .any(|l| self.scope.const_eval(l).map(|x| x == v).unwrap_or(false))
                    });
                    let chosen = hit.or_else(|| items.iter().find(|it| it.is_default()));
                    return match chosen {
                        Some(it) => self.exec(&it.body, env, mode, conds),
                        None => Ok(()),
                    };
                }
                let sv = self.expr(sel, env, mode)?;
                let ss = site(sel);
                let full = self.scope.case_is_full(sel, items);
                let mut branches = Vec::new();
                let mut assigned = BTreeSet::new();
                conds.push((sv.clone(), ss));
                for it in items {
                    let mut be = env.clone();
                    self.exec(&it.body, &mut be, mode, conds)?;
                    assigned.extend(targets_of(&it.body));
                    branches.push(be);
                }
                conds.pop();
                if !full {
                    branches.push(env.clone());
                }
                let sw = self.width_of(sel);
                for t in assigned {
                    if branches.iter().all(|b| !b.contains_key(&t)) {
                        continue;
                    }
                    let w = self.target_width(&t);
                    let mut ow = vec![sw];
                    ow.extend(std::iter::repeat_n(w, branches.len()));
                    let kind = RtlcsKind::Case {
                        alternatives: branches.len() as u32,
                    };
                    let node = self.add_node(kind, ow, w, s.span, None, mode.stmt_unit);
                    self.connect(&sv, NodeRef::Comb(node), Some(ss));
                    for b in &branches {
                        let (v, bs) = b.get(&t).cloned().unwrap_or((Val::Const, None));
                        self.connect_val(&t, &v, NodeRef::Comb(node), bs);
                    }
                    env.insert(t, (self.node_val(node, w), None));
                }
                Ok(())
            }
        }
    }

    fn target_width(&self, t: &str) -> u32 {
        self.scope.get(t).map(|s| s.width).unwrap_or(1)
    }

    fn node_val(&self, node: usize, width: u32) -> Val {
        Val::Src(Src {
            node: NodeRef::Comb(node),
            signal: String::new(),
            named: false,
            width,
        })
    }

    fn exec_assign(
        &mut self,
        s: &Stmt,
        lhs: &LValue,
        rhs: &Expr,
        env: &mut Env,
        mode: Mode,
        conds: &mut Vec<(Val, Site)>,
    ) -> Result<(), ElabError> {
        let name = lhs.name();
        if let Some(&w) = self.mwp.get(name) {
            let LValue::Bit { index, .. } = lhs else {
                return Err(ElabError::Unsupported(format!("memory '{name}' written without a word index")));
            };
            for (cv, cs) in conds.clone() {
                self.connect(&cv, NodeRef::Seq(w), Some(cs));
            }
            let iv = self.expr(index, env, mode)?;
            self.connect(&iv, NodeRef::Seq(w), Some(site(index)));
            let dv = self.expr(rhs, env, mode)?;
            self.connect(&dv, NodeRef::Seq(w), Some(site(rhs)));
            return Ok(());
        }
        if let Some(&r) = self.mrp.get(name) {
            if let ExprKind::Index { index, .. } = &rhs.kind {
                let iv = self.expr(index, env, mode)?;
                self.connect(&iv, NodeRef::Seq(r), Some(site(index)));
                return Ok(());
            }
        }
        let w = self.target_width(name);
        match lhs {
            LValue::Whole(_) => {
                let v = self.expr(rhs, env, mode)?;
                env.insert(name.to_string(), (v, Some(site(rhs))));
            }
            LValue::Bit { index, .. } | LValue::Part { msb: index, .. } => {
                let var_index = matches!(lhs, LValue::Bit { .. }) && !self.scope.is_const(index);
                let elements = if var_index { w } else { 1 };
                let dw = self.width_of(rhs);
                let iw = if var_index { self.width_of(index) } else { 0 };
                let node = self.add_node(RtlcsKind::Demux { elements }, vec![iw, dw, w], w, s.span, None, mode.stmt_unit);
                if var_index {
                    let iv = self.expr(index, env, mode)?;
                    self.connect(&iv, NodeRef::Comb(node), Some(site(index)));
                }
                let dv = self.expr(rhs, env, mode)?;
                self.connect(&dv, NodeRef::Comb(node), Some(site(rhs)));
                let (pv, ps) = env.get(name).cloned().unwrap_or((Val::Const, None));
                self.connect_val(name, &pv, NodeRef::Comb(node), ps);
                env.insert(name.to_string(), (self.node_val(node, w), None));
            }
        }
        Ok(())
    }

    fn read(&mut self, n: &str, env: &Env, mode: Mode) -> Result<Val, ElabError> {
        if mode.blocking {
            if let Some((v, _)) = env.get(n) {
                return Ok(v.clone());
            }
        }
        self.net(n)
    }

    fn expr(&mut self, e: &Expr, env: &Env, mode: Mode) -> Result<Val, ElabError> {
        if self.scope.is_const(e) {
            return Ok(Val::Const);
        }
        let width = self.width_of(e);
        let (kind, operands, base): (RtlcsKind, Vec<&Expr>, Option<&String>) = match &e.kind {
            ExprKind::Ident(n) => return self.read(n, env, mode),
            ExprKind::Literal(_) => return Ok(Val::Const),
            ExprKind::Index { base, index } => {
                let sym = self
                    .scope
                    .get(base)
                    .ok_or_else(|| ElabError::Unsupported(format!("undeclared '{base}'")))?;
                if sym.is_memory() {
                    return Err(ElabError::Unsupported(format!("memory '{base}' read outside 'rd <= {base}[addr];'")));
                }
                if self.scope.is_const(index) {
                    (RtlcsKind::ConstSelect, vec![], Some(base))
                } else {
                    (RtlcsKind::Mux { elements: sym.width }, vec![&**index], Some(base))
                }
            }
            ExprKind::Slice { base, .. } => (RtlcsKind::ConstSelect, vec![], Some(base)),
            ExprKind::Unary { op, arg } => {
                let k = match op {
                    UnaryOp::Not => RtlcsKind::Comb,
                    UnaryOp::Neg => RtlcsKind::Math { op: MathOp::Sub },
                    _ => RtlcsKind::Reduction,
                };
                (k, vec![&**arg], None)
            }
            ExprKind::Binary { op, lhs, rhs } => {
                let k = match op {
                    BinaryOp::Add => RtlcsKind::Math { op: MathOp::Add },
                    BinaryOp::Sub => RtlcsKind::Math { op: MathOp::Sub },
                    BinaryOp::Mul => RtlcsKind::Math { op: MathOp::Mul },
                    BinaryOp::Shl | BinaryOp::Shr => {
                        if self.scope.is_const(rhs) {
                            RtlcsKind::ShiftConst
                        } else {
                            RtlcsKind::ShiftVar {
                                amount_width: self.width_of(rhs),
                            }
                        }
                    }
                    o if o.is_comparison() => RtlcsKind::Comparison,
                    _ => RtlcsKind::Comb,
                };
                (k, vec![&**lhs, &**rhs], None)
            }
            ExprKind::Ternary {
                cond,
                then_expr,
                else_expr,
            } => {
                if self.scope.is_const(cond) {
                    let taken = self.scope.const_eval(cond).map_err(|x| ElabError::Unsupported(x.message))? != 0;
                    return self.expr(if taken { then_expr } else { else_expr }, env, mode);
                }
                (RtlcsKind::If, vec![&**cond, &**then_expr, &**else_expr], None)
            }
            ExprKind::Concat(parts) | ExprKind::Repeat { parts, .. } => (RtlcsKind::Concat, parts.iter().collect(), None),
        };
        let unit = match mode.expr_unit {
            Some(u) => u,
            None => self.new_unit(),
        };
        let mut ow: Vec<u32> = Vec::new();
        if let Some(b) = base {
            ow.push(self.target_width(b));
        }
        ow.extend(operands.iter().map(|o| self.width_of(o)));
        let node = self.add_node(kind, ow, width, e.span, Some(e.id), unit);
        if let Some(b) = base {
            let v = self.read(b, env, mode)?;
            self.connect(
                &v,
                NodeRef::Comb(node),
                Some(Site {
                    expr: e.id,
                    base: true,
                }),
            );
        }
        for o in operands {
            let v = self.expr(o, env, mode)?;
            self.connect(&v, NodeRef::Comb(node), Some(site(o)));
        }
        Ok(self.node_val(node, width))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;

    fn g(src: &str) -> DesignGraph {
        let u = parse_source(src).unwrap();
        let top = crate::frontend::infer_top(&u).unwrap().to_string();
        elaborate(&u, &top).unwrap()
    }

    #[test]
    fn counter_has_one_add() {
        let d = g("module c(input clk, output reg [7:0] q); always @(posedge clk) q <= q + 1; endmodule");
        assert_eq!(d.comb_nodes.len(), 1);
        assert_eq!(d.comb_nodes[0].kind, RtlcsKind::Math { op: MathOp::Add });
        let regs = d.seq_nodes.iter().filter(|s| s.kind == SeqKind::RegisterBank).count();
        assert_eq!(regs, 1);
        assert_eq!(d.in_edges(NodeRef::Comb(0)).len(), 1);
        assert_eq!(d.out_edges(NodeRef::Comb(0)).len(), 1);
    }

    #[test]
    fn multiplier_has_two_paths_in() {
        let d = g("module m(input clk, input [31:0] a, input [31:0] b, output reg [63:0] p);
                     always @(posedge clk) p <= a * b; endmodule");
        let mul = d
            .comb_nodes
            .iter()
            .position(|c| c.kind == RtlcsKind::Math { op: MathOp::Mul })
            .unwrap();
        assert_eq!(d.in_edges(NodeRef::Comb(mul)).len(), 2);
        assert_eq!(d.out_edges(NodeRef::Comb(mul)).len(), 1);
    }

    #[test]
    fn and_of_register_and_wire() {
        let d = g("module f(input clk, input x, input y, output lhs);
                     reg r1, rhs2; wire rhs1;
                     always @(posedge clk) begin r1 <= x; rhs2 <= y; end
                     assign rhs1 = r1 ^ x;
                     assign lhs = rhs1 & rhs2;
                   endmodule");
        let po = NodeRef::Seq(d.seq(&SeqKind::PrimaryOutput, "lhs").unwrap());
        let and = d.edges[d.in_edges(po)[0]].tail;
        let ins: Vec<_> = d.in_edges(and).iter().map(|&e| d.edges[e].signal.clone()).collect();
        assert_eq!(ins, vec!["rhs1".to_string(), "rhs2".to_string()]);
    }

    #[test]
    fn if_slices_per_target() {
        let d = g("module s(input clk, input c, input [3:0] a, output reg [3:0] x, output reg [3:0] y);
                     always @(posedge clk) if (c) begin x <= a; y <= a; end endmodule");
        let ifs = d.comb_nodes.iter().filter(|c| c.kind == RtlcsKind::If).count();
        assert_eq!(ifs, 2);
        assert!(d.comb_nodes.iter().all(|c| d.units[c.unit].pinned));
        assert_eq!(d.edges.iter().filter(|e| e.hold).count(), 2);
    }

    #[test]
    fn bus_width_does_not_change_edges() {
        let narrow = g("module b(input clk, input [1:0] a, input [1:0] b, output reg [1:0] q); always @(posedge clk) q <= a & b; endmodule");
        let wide = g("module b(input clk, input [31:0] a, input [31:0] b, output reg [31:0] q); always @(posedge clk) q <= a & b; endmodule");
        assert_eq!(narrow.edges.len(), wide.edges.len());
    }

    #[test]
    fn dead_logic_is_pruned() {
        let d = g("module p(input a, input b, output y); wire unused; assign unused = a + b; assign y = a & b; endmodule");
        assert_eq!(d.comb_nodes.len(), 1);
    }

    #[test]
    fn diamond_paths() {
        let d = g("module d(input clk, input [3:0] a, output reg [3:0] q);
                     wire [3:0] l, r; assign l = a + 1; assign r = a ^ 4'h5;
                     always @(posedge clk) q <= l & r; endmodule");
        let paths = enumerate_paths(&d, 100).unwrap();
        assert_eq!(paths.len() as u128, count_paths(&d).unwrap());
        assert_eq!(paths.iter().filter(|p| p[0] == NodeRef::Seq(d.seq(&SeqKind::PrimaryInput, "a").unwrap())).count(), 2);
    }
}
