//! Placement of the C−1 pipeline cuts as per-node segment labels.
//!
//! A node's label is the segment (1..=C) it computes in. Sequential sources
//! sit at 1 and sinks at C, so an edge u→v carries label(v) − label(u)
//! inserted registers and monotone labels give every register-to-register
//! path exactly C−1 of them.

use crate::elaborate::{enumerate_paths, topo_order, DesignGraph, ElabError, NodeRef, SeqKind};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SegmentAssignment {
    pub cmf: u32,
    /// Label of each comb node.
    pub seg: Vec<u32>,
}

impl SegmentAssignment {
    pub fn tail_label(&self, n: NodeRef) -> u32 {
        match n {
            NodeRef::Seq(_) => 1,
            NodeRef::Comb(i) => self.seg[i],
        }
    }

    pub fn head_label(&self, n: NodeRef) -> u32 {
        match n {
            NodeRef::Seq(_) => self.cmf,
            NodeRef::Comb(i) => self.seg[i],
        }
    }

    /// Registers carried by edge `e`; negative when the labels are not monotone.
    pub fn registers_on(&self, g: &DesignGraph, e: usize) -> i64 {
        let ed = &g.edges[e];
        self.head_label(ed.head) as i64 - self.tail_label(ed.tail) as i64
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PlaceError {
    #[error("cmf must be at least 1")]
    BadCmf,
    #[error("node {0} has no weight; run weigh_graph first")]
    Unweighted(usize),
    #[error("assignment is not legal: {0}")]
    Illegal(String),
    #[error("back-annotation: {0}")]
    Annotation(String),
    #[error(transparent)]
    Graph(#[from] ElabError),
}

/// Every comb node in the last segment: all cuts sit on register outputs.
pub fn initial_assignment(g: &DesignGraph, cmf: u32) -> Result<SegmentAssignment, PlaceError> {
    if cmf < 1 {
        return Err(PlaceError::BadCmf);
    }
    Ok(SegmentAssignment {
        cmf,
        seg: vec![cmf; g.comb_nodes.len()],
    })
}

/// Lexicographic placement objective; smaller is better.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Objective {
    pub bottleneck: u64,
    pub depth_sum: u64,
    pub register_bits: u64,
}

fn weights(g: &DesignGraph) -> Result<Vec<u64>, PlaceError> {
    g.comb_nodes
        .iter()
        .enumerate()
        .map(|(i, c)| c.weight.map(u64::from).ok_or(PlaceError::Unweighted(i)))
        .collect()
}

/// Per-segment longest path: arrivals only propagate over same-label edges.
fn depths(g: &DesignGraph, a: &SegmentAssignment, w: &[u64], order: &[usize]) -> (Vec<u64>, Vec<u64>) {
    let mut d = vec![0u64; w.len()];
    let mut seg_depth = vec![0u64; a.cmf as usize];
    for &u in order {
        let mut arr = 0;
        for &e in g.in_edges(NodeRef::Comb(u)) {
            if let NodeRef::Comb(t) = g.edges[e].tail {
                if a.seg[t] == a.seg[u] {
                    arr = arr.max(d[t]);
                }
            }
        }
        d[u] = arr + w[u];
        let s = (a.seg[u] - 1) as usize;
        seg_depth[s] = seg_depth[s].max(d[u]);
    }
    (d, seg_depth)
}

struct Chain {
    width: u32,
    stages: BTreeSet<u32>,
    non_output: BTreeSet<u32>,
}

/// Pipeline register chains keyed by (tail, signal); chains are shared by all
/// consumers of the same value.
fn chains(g: &DesignGraph, a: &SegmentAssignment) -> BTreeMap<(NodeRef, String), Chain> {
    let mut out: BTreeMap<(NodeRef, String), Chain> = BTreeMap::new();
    for ed in &g.edges {
        let lo = a.tail_label(ed.tail);
        let hi = a.head_label(ed.head);
        if hi <= lo {
            continue;
        }
        let to_output = matches!(ed.head, NodeRef::Seq(i) if g.seq_nodes[i].kind == SeqKind::PrimaryOutput);
        let c = out.entry((ed.tail, ed.signal.clone())).or_insert(Chain {
            width: ed.width,
            stages: BTreeSet::new(),
            non_output: BTreeSet::new(),
        });
        c.width = c.width.max(ed.width);
        for s in lo..hi {
            c.stages.insert(s);
            if !to_output {
                c.non_output.insert(s);
            }
        }
    }
    out
}

fn register_bits(g: &DesignGraph, a: &SegmentAssignment) -> u64 {
    chains(g, a)
        .values()
        .map(|c| c.width as u64 * c.stages.len() as u64)
        .sum()
}

fn objective(g: &DesignGraph, a: &SegmentAssignment, w: &[u64], order: &[usize]) -> Objective {
    let (_, seg) = depths(g, a, w, order);
    Objective {
        bottleneck: seg.iter().copied().max().unwrap_or(0),
        depth_sum: seg.iter().sum(),
        register_bits: register_bits(g, a),
    }
}

fn monotone_around(g: &DesignGraph, a: &SegmentAssignment, nodes: &[usize]) -> bool {
    nodes.iter().all(|&n| {
        let r = NodeRef::Comb(n);
        g.in_edges(r).iter().chain(g.out_edges(r)).all(|&e| a.registers_on(g, e) >= 0)
    })
}

/// Placement: a bottleneck sweep, kept when it beats the input, then hill
/// climbing over unit moves of ±1 segment, first improvement in topological order.
/// Returns the final assignment and the objective after every accepted move
/// (the first entry is the starting objective).
pub fn balance_traced(g: &DesignGraph, a: &SegmentAssignment) -> Result<(SegmentAssignment, Vec<Objective>), PlaceError> {
    let w = weights(g)?;
    balance_with(g, a, &w)
}

pub fn balance(g: &DesignGraph, a: &SegmentAssignment) -> Result<SegmentAssignment, PlaceError> {
    balance_traced(g, a).map(|(a, _)| a)
}

fn balance_with(g: &DesignGraph, a: &SegmentAssignment, w: &[u64]) -> Result<(SegmentAssignment, Vec<Objective>), PlaceError> {
    let v = legality_check(g, a, 0);
    if !v.ok() {
        return Err(PlaceError::Illegal(v.violations[0].to_string()));
    }
    let order = topo_order(g)?;
    let mut pos = vec![0usize; order.len()];
    for (i, &n) in order.iter().enumerate() {
        pos[n] = i;
    }
    let mut units: Vec<&[usize]> = g
        .units
        .iter()
        .filter(|u| !u.pinned && !u.nodes.is_empty())
        .map(|u| u.nodes.as_slice())
        .collect();
    units.sort_by_key(|u| u.iter().map(|&n| (pos[n], n)).min());

    let mut cur = a.clone();
    let mut obj = objective(g, &cur, w, &order);
    let mut trace = vec![obj];
    if let Some(s) = sweep(g, a.cmf, w, &order) {
        let o = objective(g, &s, w, &order);
        if o < obj {
            cur = s;
            obj = o;
            trace.push(o);
        }
    }
    loop {
        let mut improved = false;
        for nodes in &units {
            let label = cur.seg[nodes[0]];
            for next in [label.wrapping_sub(1), label + 1] {
                if next < 1 || next > cur.cmf {
                    continue;
                }
                let mut cand = cur.clone();
                for &n in *nodes {
                    cand.seg[n] = next;
                }
                if !monotone_around(g, &cand, nodes) {
                    continue;
                }
                let o = objective(g, &cand, w, &order);
                if o < obj {
                    cur = cand;
                    obj = o;
                    trace.push(o);
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            break;
        }
    }
    Ok((cur, trace))
}

/// Earliest labeling under a bottleneck bound `b`: every node takes the lowest
/// segment its predecessors allow, moving one segment later whenever its
/// arrival would exceed `b`. Units share a label; pinned nodes stay last.
fn greedy(g: &DesignGraph, cmf: u32, w: &[u64], order: &[usize], b: u64) -> Option<Vec<u32>> {
    let n = w.len();
    let mut unit_lb = vec![1u32; g.units.len()];
    'restart: loop {
        let mut label = vec![0u32; n];
        let mut arr = vec![0u64; n];
        for &u in order {
            let unit = g.comb_nodes[u].unit;
            let pinned = g.units[unit].pinned;
            let preds: Vec<usize> = g
                .in_edges(NodeRef::Comb(u))
                .iter()
                .filter_map(|&e| match g.edges[e].tail {
                    NodeRef::Comb(t) => Some(t),
                    NodeRef::Seq(_) => None,
                })
                .collect();
            let mut l = if pinned {
                cmf
            } else {
                preds.iter().map(|&p| label[p]).max().unwrap_or(1).max(unit_lb[unit])
            };
            let a = loop {
                let a = w[u] + preds.iter().filter(|&&p| label[p] == l).map(|&p| arr[p]).max().unwrap_or(0);
                if a <= b {
                    break a;
                }
                if pinned || l == cmf {
                    return None;
                }
                l += 1;
            };
            if !pinned && l > unit_lb[unit] {
                unit_lb[unit] = l;
                if g.units[unit].nodes.len() > 1 {
                    continue 'restart;
                }
            }
            label[u] = l;
            arr[u] = a;
        }
        return Some(label);
    }
}

/// Smallest bottleneck reachable by `greedy`, found by bisection.
fn sweep(g: &DesignGraph, cmf: u32, w: &[u64], order: &[usize]) -> Option<SegmentAssignment> {
    if cmf < 2 || w.is_empty() {
        return None;
    }
    let mut hi: u64 = w.iter().sum();
    let mut lo: u64 = w.iter().copied().max().unwrap_or(0);
    let mut best = greedy(g, cmf, w, order, hi)?;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        match greedy(g, cmf, w, order, mid) {
            Some(l) => {
                best = l;
                hi = mid;
            }
            None => lo = mid + 1,
        }
    }
    if let Some(l) = greedy(g, cmf, w, order, hi) {
        best = l;
    }
    Some(SegmentAssignment { cmf, seg: best })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    LabelRange { node: usize, label: u32 },
    NonMonotone { edge: usize, tail_label: u32, head_label: u32 },
    PathSum { path: Vec<NodeRef>, registers: i64 },
    UnitSplit { unit: usize },
    PinnedMoved { node: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::LabelRange { node, label } => write!(f, "node {node} has label {label} outside 1..=cmf"),
            Violation::NonMonotone {
                edge,
                tail_label,
                head_label,
            } => write!(f, "edge {edge} goes from segment {tail_label} back to {head_label}"),
            Violation::PathSum { path, registers } => {
                write!(f, "path of {} nodes carries {registers} registers", path.len())
            }
            Violation::UnitSplit { unit } => write!(f, "unit {unit} spans several segments"),
            Violation::PinnedMoved { node } => write!(f, "pinned node {node} is not in the last segment"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub violations: Vec<Violation>,
    /// Paths checked by enumeration; `None` when the path count exceeded the limit.
    pub paths_checked: Option<usize>,
}

impl Verdict {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Local checks always; the per-path register sum when at most `path_limit` paths exist.
pub fn legality_check(g: &DesignGraph, a: &SegmentAssignment, path_limit: usize) -> Verdict {
    let mut violations = Vec::new();
    if a.seg.len() != g.comb_nodes.len() {
        violations.push(Violation::LabelRange { node: a.seg.len(), label: 0 });
        return Verdict {
            violations,
            paths_checked: None,
        };
    }
    for (i, &l) in a.seg.iter().enumerate() {
        if l < 1 || l > a.cmf {
            violations.push(Violation::LabelRange { node: i, label: l });
        }
    }
    for (i, e) in g.edges.iter().enumerate() {
        let (t, h) = (a.tail_label(e.tail), a.head_label(e.head));
        if h < t {
            violations.push(Violation::NonMonotone {
                edge: i,
                tail_label: t,
                head_label: h,
            });
        }
    }
    for (ui, u) in g.units.iter().enumerate() {
        if let Some(&first) = u.nodes.first() {
            if u.nodes.iter().any(|&n| a.seg[n] != a.seg[first]) {
                violations.push(Violation::UnitSplit { unit: ui });
            }
            if u.pinned {
                violations.extend(u.nodes.iter().filter(|&&n| a.seg[n] != a.cmf).map(|&n| Violation::PinnedMoved { node: n }));
            }
        }
    }
    let mut paths_checked = None;
    if path_limit > 0 {
        if let Ok(paths) = enumerate_paths(g, path_limit) {
            for p in &paths {
                let regs: i64 = p
                    .windows(2)
                    .map(|w| a.head_label(w[1]) as i64 - a.tail_label(w[0]) as i64)
                    .sum();
                if regs != a.cmf as i64 - 1 {
                    violations.push(Violation::PathSum {
                        path: p.clone(),
                        registers: regs,
                    });
                }
            }
            paths_checked = Some(paths.len());
        }
    }
    Verdict {
        violations,
        paths_checked,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SegmentReport {
    pub id: u32,
    pub depth: u64,
    pub witness: Vec<usize>,
    /// Touches a memory port; such segments tend to bound the clock.
    pub memory_bounded: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EdgeCut {
    pub edge: usize,
    pub registers: u32,
    pub stages: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CutReport {
    pub cmf: u32,
    pub segments: Vec<SegmentReport>,
    pub edges: Vec<EdgeCut>,
    /// Bits of all pipeline registers, chains shared per (value, stage).
    pub total_register_bits: u64,
    /// The part of `total_register_bits` only needed to align primary outputs.
    pub output_register_bits: u64,
    pub bottleneck: u32,
    /// Nodes heavier than ceil(T/cmf); no cut can split them.
    pub oversized_nodes: Vec<usize>,
}

pub fn segment_depths(g: &DesignGraph, a: &SegmentAssignment) -> Result<CutReport, PlaceError> {
    let w = weights(g)?;
    segment_depths_with(g, a, &w)
}

fn segment_depths_with(g: &DesignGraph, a: &SegmentAssignment, w: &[u64]) -> Result<CutReport, PlaceError> {
    let v = legality_check(g, a, 0);
    if !v.ok() {
        return Err(PlaceError::Illegal(v.violations[0].to_string()));
    }
    let order = topo_order(g)?;
    let (d, seg_depth) = depths(g, a, w, &order);
    let touches_memory = |n: usize| {
        let r = NodeRef::Comb(n);
        g.in_edges(r)
            .iter()
            .map(|&e| g.edges[e].tail)
            .chain(g.out_edges(r).iter().map(|&e| g.edges[e].head))
            .any(|x| {
                matches!(x, NodeRef::Seq(i) if matches!(g.seq_nodes[i].kind, SeqKind::MemReadPort { .. } | SeqKind::MemWritePort { .. }))
            })
    };
    let mut segments = Vec::new();
    for s in 1..=a.cmf {
        let depth = seg_depth[(s - 1) as usize];
        let mut witness = Vec::new();
        if let Some(end) = (0..w.len()).find(|&n| a.seg[n] == s && d[n] == depth && depth > 0) {
            let mut cur = end;
            witness.push(cur);
            loop {
                let prev = g
                    .in_edges(NodeRef::Comb(cur))
                    .iter()
                    .filter_map(|&e| match g.edges[e].tail {
                        NodeRef::Comb(t) if a.seg[t] == s && d[t] + w[cur] == d[cur] => Some(t),
                        _ => None,
                    })
                    .min();
                match prev {
                    Some(p) => {
                        witness.push(p);
                        cur = p;
                    }
                    None => break,
                }
            }
            witness.reverse();
        }
        let memory_bounded = (0..w.len()).any(|n| a.seg[n] == s && touches_memory(n));
        segments.push(SegmentReport {
            id: s,
            depth,
            witness,
            memory_bounded,
        });
    }
    let mut edges = Vec::new();
    for i in 0..g.edges.len() {
        let r = a.registers_on(g, i);
        if r > 0 {
            let lo = a.tail_label(g.edges[i].tail);
            edges.push(EdgeCut {
                edge: i,
                registers: r as u32,
                stages: (lo..lo + r as u32).collect(),
            });
        }
    }
    let ch = chains(g, a);
    let total_register_bits = ch.values().map(|c| c.width as u64 * c.stages.len() as u64).sum();
    let output_register_bits = ch
        .values()
        .map(|c| c.width as u64 * c.stages.difference(&c.non_output).count() as u64)
        .sum();
    let bottleneck = segments
        .iter()
        .max_by(|x, y| x.depth.cmp(&y.depth).then(y.id.cmp(&x.id)))
        .map(|s| s.id)
        .unwrap_or(1);
    let total: u64 = crate::timing::longest_paths(g).map(|r| r.t_2ild as u64).unwrap_or_else(|_| seg_depth.iter().sum());
    let limit = total.div_ceil(a.cmf as u64);
    let oversized_nodes = (0..w.len()).filter(|&n| w[n] > limit).collect();
    Ok(CutReport {
        cmf: a.cmf,
        segments,
        edges,
        total_register_bits,
        output_register_bits,
        bottleneck,
        oversized_nodes,
    })
}

/// Measured segment delays from a placed-and-routed build.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BackAnnotation {
    /// Segment id → delay in ps.
    pub segments: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl BackAnnotation {
    pub fn from_json(text: &str) -> Result<Self, PlaceError> {
        serde_json::from_str(text).map_err(|e| PlaceError::Annotation(e.to_string()))
    }
}

/// Rescale node weights by measured/predicted delay of their segment, then place again.
pub fn reoptimize_with_sta(
    g: &DesignGraph,
    a: &SegmentAssignment,
    ann: &BackAnnotation,
    mu_lut_ps: f64,
) -> Result<SegmentAssignment, PlaceError> {
    if ann.segments.is_empty() {
        return Ok(a.clone());
    }
    let w = weights(g)?;
    let report = segment_depths_with(g, a, &w)?;
    let mut factor = vec![1.0f64; a.cmf as usize + 1];
    for (k, &ps) in &ann.segments {
        let s: u32 = k
            .parse()
            .map_err(|_| PlaceError::Annotation(format!("segment id '{k}' is not a number")))?;
        if s < 1 || s > a.cmf {
            return Err(PlaceError::Annotation(format!("segment {s} does not exist at cmf {}", a.cmf)));
        }
        if !(ps > 0.0) {
            return Err(PlaceError::Annotation(format!("segment {s} delay must be positive")));
        }
        let predicted = report.segments[(s - 1) as usize].depth as f64 * mu_lut_ps;
        if predicted > 0.0 {
            factor[s as usize] = ps / predicted;
        }
    }
    let scaled: Vec<u64> = w
        .iter()
        .enumerate()
        .map(|(n, &x)| (x as f64 * 1000.0 * factor[a.seg[n] as usize]).round() as u64)
        .collect();
    let start = initial_assignment(g, a.cmf)?;
    Ok(balance_with(g, &start, &scaled)?.0)
}
