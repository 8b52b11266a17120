//! Two-valued cycle simulator and the interleaving equivalence checker.
//!
//! One cycle: drive inputs, settle combinational logic in dependency order,
//! sample outputs, then run every clocked process against the settled values
//! and commit their non-blocking updates together. All clocks (including
//! `clk_sp*`) are one clock here; `#1` delays are ignored.

use crate::frontend::ast::*;
use crate::frontend::eval::{compile, CExpr};
use crate::frontend::scope::{mask, Scope, SymKind};
use crate::frontend::{flatten, SourceUnit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("cannot simulate: {0}")]
    Compile(String),
    #[error("stimulus has {have} cycles, {want} requested")]
    ShortStimulus { have: usize, want: usize },
    #[error("stimulus port mismatch: {0}")]
    Ports(String),
    #[error("value {value:#x} does not fit input '{port}' ({width} bits)")]
    Width { port: String, value: u128, width: u32 },
}

/// Input vectors, one row per cycle, columns in `ports` order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stimulus {
    pub ports: Vec<String>,
    pub widths: Vec<u32>,
    pub cycles: Vec<Vec<u128>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Output values sampled before each clock edge.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub ports: Vec<String>,
    pub widths: Vec<u32>,
    pub cycles: Vec<Vec<u128>>,
}

impl Trace {
    pub fn column(&self, port: &str) -> Option<usize> {
        self.ports.iter().position(|p| p == port)
    }

    /// Minimal value-change dump with one timestep per cycle.
    pub fn to_vcd(&self, scope_name: &str) -> String {
        let mut s = String::from("$timescale 1ns $end\n");
        let _ = writeln!(s, "$scope module {scope_name} $end");
        let ids: Vec<String> = (0..self.ports.len()).map(|i| format!("s{i}")).collect();
        for (i, p) in self.ports.iter().enumerate() {
            let _ = writeln!(s, "$var wire {} {} {} $end", self.widths[i], ids[i], p);
        }
        s.push_str("$upscope $end\n$enddefinitions $end\n");
        let mut last: Option<&Vec<u128>> = None;
        for (t, row) in self.cycles.iter().enumerate() {
            let _ = writeln!(s, "#{t}");
            for (i, v) in row.iter().enumerate() {
                if last.map(|l| l[i] != *v).unwrap_or(true) {
                    let _ = writeln!(s, "b{:0w$b} {}", v, ids[i], w = self.widths[i] as usize);
                }
            }
            last = Some(row);
        }
        s
    }
}

#[derive(Clone, Debug)]
enum Target {
    Whole { slot: usize, width: u32 },
    Bit { slot: usize, index: CExpr, lsb: i64, width: u32 },
    Part { slot: usize, shift: u32, len: u32 },
    Mem { mem: usize, index: CExpr, base: i64, depth: u32 },
}

#[derive(Clone, Debug)]
enum SStmt {
    Block(Vec<SStmt>),
    If(CExpr, Box<SStmt>, Option<Box<SStmt>>),
    Case(CExpr, Vec<(Vec<u128>, SStmt)>, Option<Box<SStmt>>),
    Assign(Target, CExpr),
    Null,
}

enum Update {
    Net { slot: usize, value: u128, mask: u128 },
    Mem { mem: usize, index: usize, value: u128 },
}

/// A flat module compiled for simulation.
#[derive(Clone, Debug)]
pub struct SimDesign {
    pub name: String,
    widths: Vec<u32>,
    mem_shapes: Vec<(u32, u32)>,
    inputs: Vec<(String, usize, u32)>,
    outputs: Vec<(String, usize, u32)>,
    comb: Vec<SStmt>,
    clocked: Vec<SStmt>,
    /// Asynchronous resets: (input name, active-high).
    pub async_resets: Vec<(String, bool)>,
    /// Inputs that look like synchronous resets: (name, active-high).
    pub sync_resets: Vec<(String, bool)>,
}

fn cerr(e: impl std::fmt::Display) -> SimError {
    SimError::Compile(e.to_string())
}

fn looks_like_reset(name: &str) -> Option<bool> {
    let n = name.to_ascii_lowercase();
    let base = n.rsplit("__").next().unwrap_or(&n);
    if !(base.contains("rst") || base.contains("reset")) {
        return None;
    }
    let active_low = base.ends_with("_n") || base.ends_with("rstn") || base.ends_with("resetn") || base.ends_with("_b");
    Some(!active_low)
}

fn is_clock_alias(name: &str) -> bool {
    name.len() > 6 && name.starts_with("clk_sp") && name[6..].bytes().all(|b| b.is_ascii_digit())
}

impl SimDesign {
    /// Flatten `top` of `unit` and compile it.
    pub fn from_unit(unit: &SourceUnit, top: &str) -> Result<Self, SimError> {
        let m = flatten(unit, top).map_err(cerr)?;
        Self::new(&m)
    }

    pub fn new(m: &ModuleDecl) -> Result<Self, SimError> {
        if m.instances().next().is_some() {
            return Err(cerr("module has instances; flatten it first"));
        }
        let (scope, errs) = Scope::build(m);
        if let Some(e) = errs.first() {
            return Err(cerr(&e.message));
        }
        let mut slots: BTreeMap<String, u32> = BTreeMap::new();
        let mut widths = Vec::new();
        let mut mem_shapes = Vec::new();
        for n in &scope.order {
            let s = &scope.symbols[n];
            match s.kind {
                SymKind::Param { .. } => {}
                SymKind::Memory { depth, .. } => {
                    slots.insert(n.clone(), mem_shapes.len() as u32);
                    mem_shapes.push((depth, s.width));
                }
                _ => {
                    slots.insert(n.clone(), widths.len() as u32);
                    widths.push(s.width);
                }
            }
        }
        let slot_of = |n: &str| slots.get(n).copied();
        let cx = |e: &Expr| compile(e, &scope, &slot_of).map_err(|x| cerr(format!("{}: {}", x.span, x.message)));

        let mut clocks: BTreeSet<String> = BTreeSet::new();
        let mut async_resets = Vec::new();
        for p in m.processes() {
            if let Sensitivity::Clocked { clock, reset, .. } = &p.sensitivity {
                clocks.insert(clock.clone());
                if let Some(r) = reset {
                    if !async_resets.iter().any(|(n, _): &(String, bool)| n == &r.name) {
                        async_resets.push((r.name.clone(), r.active_high));
                    }
                }
            }
        }
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        let mut sync_resets = Vec::new();
        for p in &m.ports {
            let w = scope.get(&p.name).map(|s| s.width).unwrap_or(1);
            let s = slots[&p.name] as usize;
            match p.dir {
                Direction::Input if clocks.contains(&p.name) || is_clock_alias(&p.name) => {}
                Direction::Input => {
                    if !async_resets.iter().any(|(n, _)| n == &p.name) {
                        if let Some(h) = looks_like_reset(&p.name) {
                            sync_resets.push((p.name.clone(), h));
                        }
                    }
                    inputs.push((p.name.clone(), s, w));
                }
                Direction::Output => outputs.push((p.name.clone(), s, w)),
            }
        }

        let target = |l: &LValue| -> Result<Target, SimError> {
            let name = l.name();
            let sym = scope.get(name).ok_or_else(|| cerr(format!("undeclared '{name}'")))?;
            let slot = slot_of(name).ok_or_else(|| cerr(format!("cannot assign '{name}'")))? as usize;
            Ok(match (l, &sym.kind) {
                (LValue::Bit { index, .. }, SymKind::Memory { depth, base }) => Target::Mem {
                    mem: slot,
                    index: cx(index)?,
                    base: *base,
                    depth: *depth,
                },
                (_, SymKind::Memory { .. }) => return Err(cerr(format!("memory '{name}' assigned without index"))),
                (LValue::Whole(_), _) => Target::Whole { slot, width: sym.width },
                (LValue::Bit { index, .. }, _) => Target::Bit {
                    slot,
                    index: cx(index)?,
                    lsb: sym.lsb,
                    width: sym.width,
                },
                (LValue::Part { msb, lsb, .. }, _) => {
                    let h = scope.const_eval(msb).map_err(|e| cerr(e.message))? as i64;
                    let lo = scope.const_eval(lsb).map_err(|e| cerr(e.message))? as i64;
                    Target::Part {
                        slot,
                        shift: (lo - sym.lsb) as u32,
                        len: (h - lo + 1) as u32,
                    }
                }
            })
        };
        fn stmt(
            s: &Stmt,
            cx: &dyn Fn(&Expr) -> Result<CExpr, SimError>,
            target: &dyn Fn(&LValue) -> Result<Target, SimError>,
            scope: &Scope,
        ) -> Result<SStmt, SimError> {
            Ok(match &s.kind {
                StmtKind::Null => SStmt::Null,
                StmtKind::Block(v) => SStmt::Block(v.iter().map(|x| stmt(x, cx, target, scope)).collect::<Result<_, _>>()?),
                StmtKind::If {
                    cond,
                    then_stmt,
                    else_stmt,
                } => SStmt::If(
                    cx(cond)?,
                    Box::new(stmt(then_stmt, cx, target, scope)?),
                    match else_stmt {
                        Some(e) => Some(Box::new(stmt(e, cx, target, scope)?)),
                        None => None,
                    },
                ),
                StmtKind::Case { sel, items } => {
                    let mut arms = Vec::new();
                    let mut default = None;
                    for it in items {
                        let body = stmt(&it.body, cx, target, scope)?;
                        if it.is_default() {
                            default = Some(Box::new(body));
                        } else {
                            let labels = it
                                .labels
                                .iter()
                                .map(|l| scope.const_eval(l).map_err(|e| cerr(e.message)))
                                .collect::<Result<_, _>>()?;
                            arms.push((labels, body));
                        }
                    }
                    SStmt::Case(cx(sel)?, arms, default)
                }
                StmtKind::Assign { lhs, rhs, .. } => SStmt::Assign(target(lhs)?, cx(rhs)?),
            })
        }

        // Combinational items in dependency order.
        struct Item {
            body: SStmt,
            writes: BTreeSet<String>,
            reads: BTreeSet<String>,
        }
        let mut items: Vec<Item> = Vec::new();
        for a in m.assigns() {
            items.push(Item {
                body: SStmt::Assign(target(&a.lhs)?, cx(&a.rhs)?),
                writes: [a.lhs.name().to_string()].into(),
                reads: a.rhs.referenced_names().into_iter().collect(),
            });
        }
        let mut clocked = Vec::new();
        for p in m.processes() {
            let body = stmt(&p.body, &cx, &target, &scope)?;
            if p.is_clocked() {
                clocked.push(body);
                continue;
            }
            let mut writes = BTreeSet::new();
            let mut reads = BTreeSet::new();
            p.body.walk(&mut |s| {
                if let StmtKind::Assign { lhs, .. } = &s.kind {
                    writes.insert(lhs.name().to_string());
                }
                for e in s.own_exprs() {
                    reads.extend(e.referenced_names());
                }
            });
            items.push(Item { body, writes, reads });
        }
        let n = items.len();
        let mut indeg = vec![0usize; n];
        let mut succ = vec![Vec::new(); n];
        for i in 0..n {
            for j in 0..n {
                if i != j && items[j].reads.iter().any(|r| items[i].writes.contains(r)) {
                    succ[i].push(j);
                    indeg[j] += 1;
                }
            }
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::new();
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for &j in &succ[i] {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    ready.insert(j);
                }
            }
        }
        if order.len() < n {
            return Err(cerr("combinational loop"));
        }
        let mut slots_items: Vec<Option<Item>> = items.into_iter().map(Some).collect();
        let comb = order.into_iter().map(|i| slots_items[i].take().unwrap().body).collect();
        Ok(SimDesign {
            name: m.name.clone(),
            widths,
            mem_shapes,
            inputs,
            outputs,
            comb,
            clocked,
            async_resets,
            sync_resets,
        })
    }

    pub fn input_ports(&self) -> Vec<(String, u32)> {
        self.inputs.iter().map(|(n, _, w)| (n.clone(), *w)).collect()
    }

    pub fn output_ports(&self) -> Vec<(String, u32)> {
        self.outputs.iter().map(|(n, _, w)| (n.clone(), *w)).collect()
    }
}

struct State {
    nets: Vec<u128>,
    mems: Vec<Vec<u128>>,
}

fn write_net(nets: &mut [u128], slot: usize, value: u128, m: u128) {
    nets[slot] = (nets[slot] & !m) | (value & m);
}

/// Resolve a target against the current state into an update.
fn resolve(t: &Target, v: u128, st: &State) -> Option<Update> {
    match t {
        Target::Whole { slot, width } => Some(Update::Net {
            slot: *slot,
            value: v,
            mask: mask(*width),
        }),
        Target::Bit { slot, index, lsb, width } => {
            let i = index.eval(&st.nets, &st.mems) as i128 - *lsb as i128;
            if i < 0 || i >= *width as i128 {
                return None;
            }
            Some(Update::Net {
                slot: *slot,
                value: (v & 1) << i,
                mask: 1u128 << i,
            })
        }
        Target::Part { slot, shift, len } => Some(Update::Net {
            slot: *slot,
            value: (v & mask(*len)) << shift,
            mask: mask(*len) << shift,
        }),
        Target::Mem { mem, index, base, depth } => {
            let i = index.eval(&st.nets, &st.mems) as i128 - *base as i128;
            if i < 0 || i >= *depth as i128 {
                return None;
            }
            Some(Update::Mem {
                mem: *mem,
                index: i as usize,
                value: v,
            })
        }
    }
}

fn apply(u: Update, st: &mut State, widths: &[u32], mem_shapes: &[(u32, u32)]) {
    match u {
        Update::Net { slot, value, mask: m } => write_net(&mut st.nets, slot, value, m & mask(widths[slot])),
        Update::Mem { mem, index, value } => st.mems[mem][index] = value & mask(mem_shapes[mem].1),
    }
}

/// Blocking execution (combinational processes and assigns).
fn run_blocking(s: &SStmt, st: &mut State, widths: &[u32], shapes: &[(u32, u32)]) {
    match s {
        SStmt::Null => {}
        SStmt::Block(v) => v.iter().for_each(|x| run_blocking(x, st, widths, shapes)),
        SStmt::If(c, t, e) => {
            if c.eval(&st.nets, &st.mems) != 0 {
                run_blocking(t, st, widths, shapes)
            } else if let Some(e) = e {
                run_blocking(e, st, widths, shapes)
            }
        }
        SStmt::Case(sel, arms, default) => {
            let v = sel.eval(&st.nets, &st.mems);
            match arms.iter().find(|(ls, _)| ls.contains(&v)) {
                Some((_, b)) => run_blocking(b, st, widths, shapes),
                None => {
                    if let Some(d) = default {
                        run_blocking(d, st, widths, shapes)
                    }
                }
            }
        }
        SStmt::Assign(t, e) => {
            let v = e.eval(&st.nets, &st.mems);
            if let Some(u) = resolve(t, v, st) {
                apply(u, st, widths, shapes);
            }
        }
    }
}

/// Non-blocking execution: updates are collected, not applied.
fn run_nb(s: &SStmt, st: &State, out: &mut Vec<Update>) {
    match s {
        SStmt::Null => {}
        SStmt::Block(v) => v.iter().for_each(|x| run_nb(x, st, out)),
        SStmt::If(c, t, e) => {
            if c.eval(&st.nets, &st.mems) != 0 {
                run_nb(t, st, out)
            } else if let Some(e) = e {
                run_nb(e, st, out)
            }
        }
        SStmt::Case(sel, arms, default) => {
            let v = sel.eval(&st.nets, &st.mems);
            match arms.iter().find(|(ls, _)| ls.contains(&v)) {
                Some((_, b)) => run_nb(b, st, out),
                None => {
                    if let Some(d) = default {
                        run_nb(d, st, out)
                    }
                }
            }
        }
        SStmt::Assign(t, e) => {
            let v = e.eval(&st.nets, &st.mems);
            if let Some(u) = resolve(t, v, st) {
                out.push(u);
            }
        }
    }
}

/// Run `n_cycles` cycles from the all-zero state.
pub fn simulate(d: &SimDesign, stim: &Stimulus, n_cycles: usize) -> Result<Trace, SimError> {
    if stim.cycles.len() < n_cycles {
        return Err(SimError::ShortStimulus {
            have: stim.cycles.len(),
            want: n_cycles,
        });
    }
    let mut cols = Vec::new();
    for (name, slot, w) in &d.inputs {
        let c = stim
            .ports
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| SimError::Ports(format!("no stimulus for input '{name}'")))?;
        cols.push((c, *slot, *w, name));
    }
    let mut st = State {
        nets: vec![0; d.widths.len()],
        mems: d.mem_shapes.iter().map(|&(depth, _)| vec![0; depth as usize]).collect(),
    };
    let mut cycles = Vec::with_capacity(n_cycles);
    let mut updates = Vec::new();
    for row in stim.cycles.iter().take(n_cycles) {
        for &(c, slot, w, name) in &cols {
            let v = row[c];
            if v & !mask(w) != 0 {
                return Err(SimError::Width {
                    port: name.clone(),
                    value: v,
                    width: w,
                });
            }
            st.nets[slot] = v;
        }
        for s in &d.comb {
            run_blocking(s, &mut st, &d.widths, &d.mem_shapes);
        }
        cycles.push(d.outputs.iter().map(|&(_, s, _)| st.nets[s]).collect());
        updates.clear();
        for s in &d.clocked {
            run_nb(s, &st, &mut updates);
        }
        for u in updates.drain(..) {
            apply(u, &mut st, &d.widths, &d.mem_shapes);
        }
    }
    Ok(Trace {
        ports: d.outputs.iter().map(|o| o.0.clone()).collect(),
        widths: d.outputs.iter().map(|o| o.2).collect(),
        cycles,
    })
}

/// Round-robin merge: fast cycle c carries stream c mod C at original cycle c div C.
pub fn interleave(streams: &[Stimulus]) -> Result<Stimulus, SimError> {
    let first = streams.first().ok_or_else(|| SimError::Ports("no streams".into()))?;
    for s in streams {
        if s.ports != first.ports || s.widths != first.widths {
            return Err(SimError::Ports("streams have different ports".into()));
        }
        if s.cycles.len() != first.cycles.len() {
            return Err(SimError::Ports("streams have different lengths".into()));
        }
    }
    let c = streams.len();
    let cycles = (0..first.cycles.len() * c).map(|i| streams[i % c].cycles[i / c].clone()).collect();
    Ok(Stimulus {
        ports: first.ports.clone(),
        widths: first.widths.clone(),
        cycles,
        seed: None,
    })
}

/// Inverse of `interleave`.
pub fn deinterleave(s: &Stimulus, cmf: usize) -> Vec<Stimulus> {
    (0..cmf)
        .map(|k| Stimulus {
            ports: s.ports.clone(),
            widths: s.widths.clone(),
            cycles: s.cycles.iter().skip(k).step_by(cmf).cloned().collect(),
            seed: None,
        })
        .collect()
}

/// Seeded random stimulus. Resets are held active for the first `warmup`
/// cycles; synchronous resets are then pulsed about once every 16 cycles and
/// asynchronous ones stay released.
pub fn random_stimulus(d: &SimDesign, n_cycles: usize, seed: u64, warmup: usize) -> Stimulus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ports = d.input_ports();
    let cycles = (0..n_cycles)
        .map(|t| {
            ports
                .iter()
                .map(|(name, w)| {
                    let r: u128 = rng.random::<u128>() & mask(*w);
                    if let Some(&(_, high)) = d.async_resets.iter().find(|(n, _)| n == name) {
                        return ((t < warmup) == high) as u128;
                    }
                    if let Some(&(_, high)) = d.sync_resets.iter().find(|(n, _)| n == name) {
                        let active = t < warmup || rng.random_ratio(1, 16);
                        return (active == high) as u128;
                    }
                    r
                })
                .collect()
        })
        .collect();
    Stimulus {
        ports: ports.iter().map(|p| p.0.clone()).collect(),
        widths: ports.iter().map(|p| p.1).collect(),
        cycles,
        seed: Some(seed),
    }
}

/// One independent seeded stream per thread.
pub fn random_streams(d: &SimDesign, cmf: u32, n_cycles: usize, seed: u64) -> Vec<Stimulus> {
    (0..cmf as u64)
        .map(|k| random_stimulus(d, n_cycles, seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(k), cmf as usize))
        .collect()
}

/// When thread k's output for original cycle t shows up in the CSR trace:
/// fast cycle t·cmf + k + latency.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub cmf: u32,
    pub latency: BTreeMap<String, u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub thread: u32,
    pub cycle: usize,
    pub output: String,
    pub expected: u128,
    pub actual: u128,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EquivalenceVerdict {
    pub pass: bool,
    /// Per output, a latency under which every compared slot matched: the
    /// expected one when it works, otherwise the smallest.
    pub discovered: BTreeMap<String, Option<u32>>,
    pub expected: BTreeMap<String, u32>,
    pub witness: Option<Witness>,
    pub warmup_cycles: usize,
    pub compared_cycles: usize,
}

/// Simulate the original once per stream and the CSR design on the interleaved
/// streams; compare every thread's outputs after `warmup` original cycles.
pub fn check_equivalence(
    orig: &SimDesign,
    csr: &SimDesign,
    streams: &[Stimulus],
    align: &Alignment,
    n_cycles: usize,
    warmup: usize,
) -> Result<EquivalenceVerdict, SimError> {
    let c = align.cmf as usize;
    if streams.len() != c {
        return Err(SimError::Ports(format!("{} streams for cmf {c}", streams.len())));
    }
    if n_cycles <= warmup {
        return Err(SimError::Ports("no cycles left after warm-up".into()));
    }
    let outs = orig.output_ports();
    if csr.output_ports() != outs {
        return Err(SimError::Ports("designs have different outputs".into()));
    }
    for (o, _) in &outs {
        if !align.latency.contains_key(o) {
            return Err(SimError::Ports(format!("schedule has no entry for output '{o}'")));
        }
    }
    let max_lat = align.latency.values().copied().max().unwrap_or(0).max(2 * c as u32) as usize;
    let pad = max_lat / c + 2;

    let mut refs = Vec::new();
    let mut padded = Vec::new();
    for s in streams {
        refs.push(simulate(orig, s, n_cycles)?);
        let mut p = s.clone();
        p.cycles.truncate(n_cycles);
        let last = p.cycles.last().cloned().unwrap_or_default();
        p.cycles.extend(std::iter::repeat_n(last, pad));
        padded.push(p);
    }
    let mut fast = interleave(&padded)?;
    // Hold asynchronous resets until every thread's pipeline has seen them.
    for (name, high) in &orig.async_resets {
        if let Some(col) = fast.ports.iter().position(|p| p == name) {
            let until = (warmup * c + c).saturating_sub(1);
            for row in fast.cycles.iter_mut().take(until) {
                row[col] = *high as u128;
            }
        }
    }
    let n_fast = fast.cycles.len();
    let got = simulate(csr, &fast, n_fast)?;

    let matches = |o: usize, lat: usize| -> Option<Witness> {
        for t in warmup..n_cycles {
            for (k, r) in refs.iter().enumerate() {
                let want = r.cycles[t][o];
                let have = got.cycles[t * c + k + lat][o];
                if want != have {
                    return Some(Witness {
                        thread: k as u32,
                        cycle: t,
                        output: outs[o].0.clone(),
                        expected: want,
                        actual: have,
                    });
                }
            }
        }
        None
    };
    let mut discovered = BTreeMap::new();
    let mut witness = None;
    for (o, (name, _)) in outs.iter().enumerate() {
        let want = align.latency[name];
        let miss = matches(o, want as usize);
        let found = if miss.is_none() {
            Some(want)
        } else {
            (0..=max_lat).find(|&l| matches(o, l).is_none()).map(|l| l as u32)
        };
        discovered.insert(name.clone(), found);
        if witness.is_none() {
            witness = miss;
        }
    }
    Ok(EquivalenceVerdict {
        pass: witness.is_none(),
        discovered,
        expected: align.latency.clone(),
        witness,
        warmup_cycles: warmup,
        compared_cycles: n_cycles - warmup,
    })
}
