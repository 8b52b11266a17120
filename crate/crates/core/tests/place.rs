mod common;

use common::{chain, chain_optimum, diamond};
use cslow::csr_place::*;
use cslow::elaborate::NodeRef;
use proptest::prelude::*;

fn bottleneck(g: &cslow::elaborate::DesignGraph, a: &SegmentAssignment) -> u64 {
    segment_depths(g, a).unwrap().segments.iter().map(|s| s.depth).max().unwrap()
}

#[test]
fn even_chain_splits_in_half() {
    let g = chain(&[3, 3, 3, 3]);
    let a = balance(&g, &initial_assignment(&g, 2).unwrap()).unwrap();
    assert_eq!(a.seg, vec![1, 1, 2, 2]);
    let depths: Vec<u64> = segment_depths(&g, &a).unwrap().segments.iter().map(|s| s.depth).collect();
    assert_eq!(depths, vec![6, 6]);
}

#[test]
fn initial_assignment_stacks_everything_last() {
    let g = chain(&[3, 3, 3, 3]);
    let a = initial_assignment(&g, 2).unwrap();
    let depths: Vec<u64> = segment_depths(&g, &a).unwrap().segments.iter().map(|s| s.depth).collect();
    assert_eq!(depths, vec![0, 12]);
    assert!(initial_assignment(&g, 0).is_err());
}

#[test]
fn uneven_chain_bottleneck_six() {
    let g = chain(&[5, 1, 1, 5]);
    let a = balance(&g, &initial_assignment(&g, 2).unwrap()).unwrap();
    assert_eq!(bottleneck(&g, &a), 6);
}

#[test]
fn four_way_chain_one_node_each() {
    let g = chain(&[3, 3, 3, 3]);
    let a = balance(&g, &initial_assignment(&g, 4).unwrap()).unwrap();
    assert_eq!(a.seg, vec![1, 2, 3, 4]);
}

#[test]
fn cmf_one_is_unchanged() {
    let g = chain(&[2, 7, 1]);
    let a = initial_assignment(&g, 1).unwrap();
    assert_eq!(balance(&g, &a).unwrap(), a);
}

#[test]
fn diamond_initial_edges_carry_one_register() {
    let g = diamond(5, 1, 2);
    let a = initial_assignment(&g, 2).unwrap();
    for (i, e) in g.edges.iter().enumerate() {
        let expect = if matches!(e.tail, NodeRef::Seq(_)) { 1 } else { 0 };
        assert_eq!(a.registers_on(&g, i), expect);
    }
}

#[test]
fn reversed_edge_is_reported() {
    let g = chain(&[1, 1]);
    let a = SegmentAssignment { cmf: 2, seg: vec![2, 1] };
    let v = legality_check(&g, &a, 100);
    assert!(v.violations.iter().any(|x| matches!(x, Violation::NonMonotone { edge: 1, .. })));
    assert!(balance(&g, &a).is_err());
}

#[test]
fn empty_annotation_is_identity() {
    let g = chain(&[3, 3, 3, 3]);
    let a = balance(&g, &initial_assignment(&g, 2).unwrap()).unwrap();
    assert_eq!(reoptimize_with_sta(&g, &a, &BackAnnotation::default(), 825.0).unwrap(), a);
}

#[test]
fn slow_first_segment_gives_up_a_node() {
    let g = chain(&[3, 3, 3, 3]);
    let a = balance(&g, &initial_assignment(&g, 2).unwrap()).unwrap();
    let ann = BackAnnotation::from_json(r#"{"segments":{"1": 14850}}"#).unwrap();
    let b = reoptimize_with_sta(&g, &a, &ann, 825.0).unwrap();
    assert_eq!(b.seg, vec![1, 2, 2, 2]);
}

#[test]
fn uniform_annotation_keeps_bottleneck_segment() {
    let g = chain(&[4, 1, 1, 2]);
    let a = balance(&g, &initial_assignment(&g, 2).unwrap()).unwrap();
    let before = segment_depths(&g, &a).unwrap().bottleneck;
    let ann = BackAnnotation::from_json(r#"{"segments":{"1": 5000, "2": 5000}}"#).unwrap();
    let per = segment_depths(&g, &a).unwrap();
    // same measured/predicted ratio everywhere
    let k = 1000.0;
    let ann = BackAnnotation {
        segments: per.segments.iter().map(|s| (s.id.to_string(), s.depth as f64 * k)).collect(),
        ..ann
    };
    let b = reoptimize_with_sta(&g, &a, &ann, 825.0).unwrap();
    assert_eq!(segment_depths(&g, &b).unwrap().bottleneck, before);
}

#[test]
fn unknown_segment_rejected() {
    let g = chain(&[1, 1]);
    let a = initial_assignment(&g, 2).unwrap();
    let ann = BackAnnotation::from_json(r#"{"segments":{"3": 100}}"#).unwrap();
    assert!(reoptimize_with_sta(&g, &a, &ann, 825.0).is_err());
}

proptest! {
    #[test]
    fn balance_is_legal_monotone_and_bounded(ws in prop::collection::vec(1u32..20, 1..12), cmf in 1u32..5) {
        let g = chain(&ws);
        let a0 = initial_assignment(&g, cmf).unwrap();
        let (a, trace) = balance_traced(&g, &a0).unwrap();
        prop_assert!(legality_check(&g, &a, 10_000).ok());
        prop_assert!(trace.windows(2).all(|w| w[1] < w[0]));
        let total: u64 = ws.iter().map(|&w| w as u64).sum();
        let bound = total.div_ceil(cmf as u64) + *ws.iter().max().unwrap() as u64;
        prop_assert!(bottleneck(&g, &a) <= bound);
        prop_assert!(bottleneck(&g, &a) >= chain_optimum(&ws, cmf));
        prop_assert_eq!(balance(&g, &a0).unwrap(), a);
    }
}
