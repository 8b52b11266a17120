#![allow(dead_code)]

use cslow::elaborate::{CombNode, DesignGraph, Edge, NodeRef, RtlcsKind, SeqKind, SeqNode, Unit};
use cslow::frontend::ast::Span;
use std::path::PathBuf;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_dir().join(format!("{name}.v"))).unwrap()
}

pub const FIXTURES: &[&str] = &["counter", "fsm", "alu", "mac", "ramloop", "andpair"];

fn seq(kind: SeqKind, name: &str) -> SeqNode {
    SeqNode {
        kind,
        name: name.into(),
        width: 1,
        reset_value: None,
        span: Span::default(),
    }
}

fn comb(weight: u32, unit: usize) -> CombNode {
    CombNode {
        kind: RtlcsKind::Comb,
        operand_widths: vec![1],
        width: 1,
        weight: Some(weight),
        span: Span::default(),
        expr: None,
        unit,
    }
}

fn edge(tail: NodeRef, head: NodeRef) -> Edge {
    Edge {
        tail,
        head,
        signal: String::new(),
        width: 1,
        named: false,
        site: None,
        hold: false,
    }
}

/// in -> n0 -> n1 -> ... -> reg, each node its own unit.
pub fn chain(weights: &[u32]) -> DesignGraph {
    let seqs = vec![seq(SeqKind::PrimaryInput, "a"), seq(SeqKind::RegisterBank, "q")];
    let mut nodes = Vec::new();
    let mut units = vec![Unit {
        nodes: vec![],
        pinned: true,
    }];
    let mut edges = Vec::new();
    let mut prev = NodeRef::Seq(0);
    for (i, &w) in weights.iter().enumerate() {
        nodes.push(comb(w, i + 1));
        units.push(Unit {
            nodes: vec![i],
            pinned: false,
        });
        edges.push(edge(prev, NodeRef::Comb(i)));
        prev = NodeRef::Comb(i);
    }
    edges.push(edge(prev, NodeRef::Seq(1)));
    DesignGraph::from_parts(seqs, nodes, edges, units)
}

/// Two parallel branches (top, bottom) from one input joining in a sink node.
pub fn diamond(top: u32, bottom: u32, join: u32) -> DesignGraph {
    let seqs = vec![seq(SeqKind::PrimaryInput, "a"), seq(SeqKind::RegisterBank, "q")];
    let nodes = vec![comb(top, 1), comb(bottom, 2), comb(join, 3)];
    let units = vec![
        Unit { nodes: vec![], pinned: true },
        Unit { nodes: vec![0], pinned: false },
        Unit { nodes: vec![1], pinned: false },
        Unit { nodes: vec![2], pinned: false },
    ];
    let (a, q) = (NodeRef::Seq(0), NodeRef::Seq(1));
    let edges = vec![
        edge(a, NodeRef::Comb(0)),
        edge(a, NodeRef::Comb(1)),
        edge(NodeRef::Comb(0), NodeRef::Comb(2)),
        edge(NodeRef::Comb(1), NodeRef::Comb(2)),
        edge(NodeRef::Comb(2), q),
    ];
    DesignGraph::from_parts(seqs, nodes, edges, units)
}

/// Best bottleneck over all monotone labelings of a chain (cut positions).
pub fn chain_optimum(weights: &[u32], cmf: u32) -> u64 {
    fn rec(w: &[u32], i: usize, label: u32, cmf: u32, cur: u64, worst: u64, best: &mut u64) {
        if i == w.len() {
            *best = (*best).min(worst.max(cur));
            return;
        }
        // stay in this segment
        let c = cur + w[i] as u64;
        rec(w, i + 1, label, cmf, c, worst, best);
        // open a later segment for node i
        for next in label + 1..=cmf {
            rec(w, i + 1, next, cmf, w[i] as u64, worst.max(cur), best);
        }
    }
    let mut best = u64::MAX;
    rec(weights, 0, 1, cmf, 0, 0, &mut best);
    best
}
