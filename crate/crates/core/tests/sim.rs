mod common;

use cslow::csr_place::{balance, initial_assignment};
use cslow::elaborate::elaborate;
use cslow::emit::{emit_schedule, emit_verilog, plan_rewrite, EmitOptions};
use cslow::frontend::parse_source;
use cslow::sim::*;
use cslow::timing::{weigh_graph, CostTable};
use proptest::prelude::*;

fn design(name: &str) -> SimDesign {
    SimDesign::from_unit(&parse_source(&common::fixture(name)).unwrap(), name).unwrap()
}

fn constant(d: &SimDesign, n: usize, value: impl Fn(&str, usize) -> u128) -> Stimulus {
    let ports = d.input_ports();
    Stimulus {
        ports: ports.iter().map(|p| p.0.clone()).collect(),
        widths: ports.iter().map(|p| p.1).collect(),
        cycles: (0..n).map(|t| ports.iter().map(|p| value(&p.0, t)).collect()).collect(),
        seed: None,
    }
}

#[test]
fn counter_counts_from_zero() {
    let d = design("counter");
    let s = constant(&d, 3, |_, _| 1);
    let tr = simulate(&d, &s, 3).unwrap();
    let q = tr.column("q").unwrap();
    let got: Vec<u128> = tr.cycles.iter().map(|r| r[q]).collect();
    assert_eq!(got, vec![0, 1, 2]);
}

#[test]
fn counter_wraps_at_eight_bits() {
    let d = design("counter");
    let tr = simulate(&d, &constant(&d, 300, |_, _| 1), 300).unwrap();
    let q = tr.column("q").unwrap();
    for (t, row) in tr.cycles.iter().enumerate() {
        assert_eq!(row[q], (t % 256) as u128);
    }
}

#[test]
fn memory_loop_reads_what_it_wrote() {
    // we at cycle 0 registers the address; the write lands with din of cycle 1
    let d = design("ramloop");
    let s = constant(&d, 6, |p, t| match (p, t) {
        ("we", 0) => 1,
        ("raddr", _) => 3,
        ("din", 1) => 5,
        _ => 0,
    });
    let tr = simulate(&d, &s, 6).unwrap();
    let dout = tr.column("dout").unwrap();
    assert!(tr.cycles.iter().any(|r| r[dout] == 5), "{:?}", tr.cycles);
}

#[test]
fn short_stimulus_is_rejected() {
    let d = design("counter");
    assert!(simulate(&d, &constant(&d, 2, |_, _| 1), 3).is_err());
}

#[test]
fn stimulus_and_trace_serialize() {
    let d = design("alu");
    let s = random_stimulus(&d, 20, 4, 2);
    let back: Stimulus = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
    assert_eq!(back, s);
    let tr = simulate(&d, &s, 20).unwrap();
    let back: Trace = serde_json::from_str(&serde_json::to_string(&tr).unwrap()).unwrap();
    assert_eq!(back, tr);
    let vcd = tr.to_vcd("alu");
    assert!(vcd.contains("$var wire 16"));
    assert!(vcd.contains("#19"));
}

#[test]
fn random_stimulus_is_seeded() {
    let d = design("mac");
    assert_eq!(random_stimulus(&d, 50, 9, 3), random_stimulus(&d, 50, 9, 3));
    assert_ne!(random_stimulus(&d, 50, 9, 3).cycles, random_stimulus(&d, 50, 10, 3).cycles);
}

fn csr_of(name: &str, cmf: u32) -> (SimDesign, SimDesign, Alignment) {
    let u = parse_source(&common::fixture(name)).unwrap();
    let mut g = elaborate(&u, name).unwrap();
    weigh_graph(&mut g, &CostTable::default());
    let a = balance(&g, &initial_assignment(&g, cmf).unwrap()).unwrap();
    let plan = plan_rewrite(&g, &a, true).unwrap();
    let opts = EmitOptions::default();
    let text = emit_verilog(&g, &plan, &opts).unwrap();
    let csr = SimDesign::from_unit(&parse_source(&text).unwrap(), name).unwrap();
    (SimDesign::from_unit(&u, name).unwrap(), csr, emit_schedule(&g, &plan, &opts).alignment())
}

#[test]
fn three_enable_streams_count_independently() {
    let (orig, csr, al) = csr_of("counter", 3);
    // thread k enables only on cycles divisible by k+1
    let streams: Vec<Stimulus> = (0..3)
        .map(|k| constant(&orig, 60, move |_, t| (t % (k + 1) == 0) as u128))
        .collect();
    let v = check_equivalence(&orig, &csr, &streams, &al, 60, 3).unwrap();
    assert!(v.pass, "{:?}", v.witness);
    let tr = simulate(&csr, &interleave(&streams).unwrap(), 180).unwrap();
    let q = tr.column("q").unwrap();
    let lat = al.latency["q"] as usize;
    let at = |k: usize, t: usize| tr.cycles[t * 3 + k + lat][q];
    assert_eq!((at(0, 30), at(1, 30), at(2, 30)), (30, 15, 10));
}

#[test]
fn threads_do_not_leak() {
    let (orig, csr, al) = csr_of("mac", 2);
    let base = random_streams(&orig, 2, 80, 11);
    let mut changed = base.clone();
    changed[1] = random_stimulus(&orig, 80, 999, 2);
    let a = simulate(&csr, &interleave(&base).unwrap(), 160).unwrap();
    let b = simulate(&csr, &interleave(&changed).unwrap(), 160).unwrap();
    let lat = al.latency["acc"] as usize;
    let acc = a.column("acc").unwrap();
    for t in 2..70 {
        assert_eq!(a.cycles[t * 2 + lat][acc], b.cycles[t * 2 + lat][acc], "thread 0, cycle {t}");
    }
}

#[test]
fn wrong_latency_gives_a_witness() {
    let (orig, csr, mut al) = csr_of("alu", 2);
    for v in al.latency.values_mut() {
        *v += 1;
    }
    let s = random_streams(&orig, 2, 100, 1);
    let v = check_equivalence(&orig, &csr, &s, &al, 100, 2).unwrap();
    assert!(!v.pass);
    let w = v.witness.unwrap();
    assert_ne!(w.expected, w.actual);
    assert_eq!(v.discovered["y"], Some(2));
}

proptest! {
    #[test]
    fn deinterleave_inverts_interleave(cmf in 1usize..5, n in 1usize..20, seed in any::<u64>()) {
        let d = design("alu");
        let streams: Vec<Stimulus> = (0..cmf as u64).map(|k| {
            let mut s = random_stimulus(&d, n, seed ^ k, 0);
            s.seed = None;
            s
        }).collect();
        let merged = interleave(&streams).unwrap();
        prop_assert_eq!(merged.cycles.len(), n * cmf);
        prop_assert_eq!(deinterleave(&merged, cmf), streams);
    }
}
