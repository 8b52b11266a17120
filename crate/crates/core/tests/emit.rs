mod common;

use cslow::csr_place::{balance, initial_assignment, segment_depths, SegmentAssignment};
use cslow::elaborate::{elaborate, DesignGraph, NodeRef};
use cslow::emit::{emit_identity, emit_schedule, emit_verilog, plan_rewrite, EmitOptions, Fault};
use cslow::frontend::{infer_top, parse_source, subset_check};
use cslow::sim::{check_equivalence, interleave, random_streams, simulate, SimDesign};
use cslow::timing::{weigh_graph, CostTable};
use proptest::prelude::*;

fn placed(name: &str, cmf: u32) -> (cslow::frontend::ast::SourceUnit, DesignGraph, SegmentAssignment) {
    let u = parse_source(&common::fixture(name)).unwrap();
    let top = infer_top(&u).unwrap().to_string();
    let mut g = elaborate(&u, &top).unwrap();
    weigh_graph(&mut g, &CostTable::default());
    let a = balance(&g, &initial_assignment(&g, cmf).unwrap()).unwrap();
    (u, g, a)
}

fn equivalent(name: &str, cmf: u32, align: bool, opts: &EmitOptions) -> Result<(), String> {
    let (u, g, a) = placed(name, cmf);
    let plan = plan_rewrite(&g, &a, align).map_err(|e| e.to_string())?;
    let text = emit_verilog(&g, &plan, opts).map_err(|e| e.to_string())?;
    let csr_unit = parse_source(&text).map_err(|e| format!("reparse: {e}\n{text}"))?;
    let diags = subset_check(&csr_unit);
    if !diags.is_empty() {
        return Err(format!("subset: {diags:?}\n{text}"));
    }
    let orig = SimDesign::from_unit(&u, &g.top).unwrap();
    let csr = SimDesign::from_unit(&csr_unit, &g.top).map_err(|e| e.to_string())?;
    let sched = emit_schedule(&g, &plan, opts);
    let streams = random_streams(&orig, cmf, 400, 7);
    let v = check_equivalence(&orig, &csr, &streams, &sched.alignment(), 400, cmf as usize).unwrap();
    if v.pass {
        Ok(())
    } else {
        Err(format!("{:?}\n{text}", v.witness))
    }
}

#[test]
fn fixtures_stay_equivalent() {
    for name in common::FIXTURES {
        for cmf in 2..=4 {
            if let Err(e) = equivalent(name, cmf, true, &EmitOptions::default()) {
                panic!("{name} cmf={cmf}: {e}");
            }
        }
    }
}

#[test]
fn unaligned_outputs_use_reported_latency() {
    for name in common::FIXTURES {
        if let Err(e) = equivalent(name, 3, false, &EmitOptions::default()) {
            panic!("{name}: {e}");
        }
    }
}

#[test]
fn tied_clocks_without_delays() {
    let opts = EmitOptions {
        sp_delay: false,
        tie_clocks: true,
        ..EmitOptions::default()
    };
    for name in common::FIXTURES {
        if let Err(e) = equivalent(name, 2, true, &opts) {
            panic!("{name}: {e}");
        }
    }
}

#[test]
fn register_bits_match_cut_report() {
    for name in common::FIXTURES {
        for cmf in 2..=4 {
            let (_, g, a) = placed(name, cmf);
            let cut = segment_depths(&g, &a).unwrap();
            let plan = plan_rewrite(&g, &a, true).unwrap();
            assert_eq!(plan.sp_register_bits(), cut.total_register_bits, "{name} {cmf}");
            let bare = plan_rewrite(&g, &a, false).unwrap();
            assert_eq!(bare.sp_register_bits(), cut.total_register_bits - cut.output_register_bits, "{name} {cmf}");
        }
    }
}

#[test]
fn and_of_two_registers_gets_a_delayed_clock() {
    let (_, g, a) = placed("andpair", 2);
    let plan = plan_rewrite(&g, &a, true).unwrap();
    let text = emit_verilog(&g, &plan, &EmitOptions::default()).unwrap();
    assert!(text.contains("input clk_sp1"), "{text}");
    assert!(text.contains("<= #1"), "{text}");
    assert!(plan.sp_registers().iter().all(|(n, _)| n.contains("_sp")));
}

#[test]
fn identity_is_pretty_print() {
    for name in common::FIXTURES {
        let u = parse_source(&common::fixture(name)).unwrap();
        assert_eq!(emit_identity(&u), cslow::frontend::pretty_print(&u));
    }
}

#[test]
fn cmf_one_is_not_a_rewrite() {
    let (_, g, _) = placed("counter", 2);
    let a = initial_assignment(&g, 1).unwrap();
    assert!(plan_rewrite(&g, &a, true).is_err());
}

#[test]
fn removed_register_is_caught() {
    let (u, g, a) = placed("alu", 3);
    let plan = plan_rewrite(&g, &a, true).unwrap();
    let orig = SimDesign::from_unit(&u, &g.top).unwrap();
    let streams = random_streams(&orig, 3, 300, 3);
    let sched = emit_schedule(&g, &plan, &EmitOptions::default());
    for (reg, _) in plan.sp_registers() {
        let opts = EmitOptions {
            fault: Some(Fault {
                register: reg.to_string(),
                bit: None,
            }),
            ..EmitOptions::default()
        };
        let text = emit_verilog(&g, &plan, &opts).unwrap();
        let csr = SimDesign::from_unit(&parse_source(&text).unwrap(), &g.top).unwrap();
        let v = check_equivalence(&orig, &csr, &streams, &sched.alignment(), 300, 3).unwrap();
        assert!(!v.pass, "fault in {reg} went unnoticed");
    }
}

#[test]
fn unknown_fault_register_is_an_error() {
    let (_, g, a) = placed("counter", 2);
    let plan = plan_rewrite(&g, &a, true).unwrap();
    let opts = EmitOptions {
        fault: Some("nope_sp1".parse().unwrap()),
        ..EmitOptions::default()
    };
    assert!(emit_verilog(&g, &plan, &opts).is_err());
}

/// Random labels per free unit, raised along edges until monotone.
fn random_legal(g: &DesignGraph, cmf: u32, picks: &[u32]) -> SegmentAssignment {
    let mut unit_label: Vec<u32> = g
        .units
        .iter()
        .enumerate()
        .map(|(u, unit)| if unit.pinned { cmf } else { 1 + picks[u % picks.len()] % cmf })
        .collect();
    loop {
        let mut changed = false;
        for ed in &g.edges {
            if let (NodeRef::Comb(t), NodeRef::Comb(h)) = (ed.tail, ed.head) {
                let (ut, uh) = (g.comb_nodes[t].unit, g.comb_nodes[h].unit);
                if unit_label[ut] > unit_label[uh] {
                    unit_label[uh] = unit_label[ut];
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    SegmentAssignment {
        cmf,
        seg: g.comb_nodes.iter().map(|c| unit_label[c.unit]).collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn any_legal_cut_stays_equivalent(
        fx in 0usize..common::FIXTURES.len(),
        cmf in 2u32..5,
        picks in proptest::collection::vec(0u32..8, 1..16),
        seed in 0u64..1000,
    ) {
        let name = common::FIXTURES[fx];
        let (u, g, _) = placed(name, cmf);
        let a = random_legal(&g, cmf, &picks);
        prop_assert!(cslow::csr_place::legality_check(&g, &a, 10_000).ok());
        let plan = plan_rewrite(&g, &a, true).unwrap();
        let opts = EmitOptions::default();
        let text = emit_verilog(&g, &plan, &opts).unwrap();
        let csr_unit = parse_source(&text).unwrap();
        prop_assert!(subset_check(&csr_unit).is_empty());
        let orig = SimDesign::from_unit(&u, &g.top).unwrap();
        let csr = SimDesign::from_unit(&csr_unit, &g.top).unwrap();
        let streams = random_streams(&orig, cmf, 120, seed);
        let v = check_equivalence(&orig, &csr, &streams, &emit_schedule(&g, &plan, &opts).alignment(), 120, cmf as usize).unwrap();
        prop_assert!(v.pass, "{} {:?} {:?}", name, a.seg, v.witness);
        let cut = segment_depths(&g, &a).unwrap();
        prop_assert_eq!(plan.sp_register_bits(), cut.total_register_bits);
    }

    #[test]
    fn perturbing_one_thread_leaves_the_others(
        fx in 0usize..common::FIXTURES.len(),
        cmf in 2u32..5,
        k in 0usize..4,
        seed in 0u64..1000,
    ) {
        let k = k % cmf as usize;
        let name = common::FIXTURES[fx];
        let (u, g, a) = placed(name, cmf);
        let plan = plan_rewrite(&g, &a, true).unwrap();
        let text = emit_verilog(&g, &plan, &EmitOptions::default()).unwrap();
        let orig = SimDesign::from_unit(&u, &g.top).unwrap();
        let csr = SimDesign::from_unit(&parse_source(&text).unwrap(), &g.top).unwrap();
        let base = random_streams(&orig, cmf, 40, seed);
        let mut other = base.clone();
        other[k] = cslow::sim::random_stimulus(&orig, 40, seed ^ 0xdead_beef, cmf as usize);
        let n = 40 * cmf as usize;
        let ta = simulate(&csr, &interleave(&base).unwrap(), n).unwrap();
        let tb = simulate(&csr, &interleave(&other).unwrap(), n).unwrap();
        // slot c carries thread c mod cmf, shifted by the output latency
        let lat = cmf as usize;
        for c in lat..n {
            if (c - lat) % cmf as usize != k {
                prop_assert_eq!(&ta.cycles[c], &tb.cycles[c], "fast cycle {}", c);
            }
        }
    }
}

#[test]
fn cmf_one_check_is_trace_equality() {
    for name in common::FIXTURES {
        let u = parse_source(&common::fixture(name)).unwrap();
        let top = infer_top(&u).unwrap();
        let pretty = parse_source(&emit_identity(&u)).unwrap();
        let orig = SimDesign::from_unit(&u, top).unwrap();
        let same = SimDesign::from_unit(&pretty, top).unwrap();
        let streams = random_streams(&orig, 1, 200, 3);
        let al = cslow::sim::Alignment {
            cmf: 1,
            latency: orig.output_ports().into_iter().map(|(n, _)| (n, 0)).collect(),
        };
        assert!(check_equivalence(&orig, &same, &streams, &al, 200, 1).unwrap().pass, "{name}");
        let s = &streams[0];
        assert_eq!(simulate(&orig, s, 200).unwrap(), simulate(&same, s, 200).unwrap());
    }
}
