//! RTL timing estimates in 2-input logic depth (2iLD), closed-form CSR
//! metrics, and a stochastic LUT-net-pair delay model.

use crate::elaborate::{topo_order, DesignGraph, ElabError, MathOp, NodeRef, RtlcsKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// How a `case` is costed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseDepth {
    /// ceil(log2(alternatives))
    Alternatives,
    /// the select width, i.e. log2 of the full decode
    SelectWidth,
}

/// How add/sub/mul are costed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MathDepth {
    /// Ripple model: depth equals the result width.
    ResultWidth,
    /// Carry-lookahead model: ceil(log2(result width)) + 1.
    LogWidth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostTable {
    pub mu_lut_ps: f64,
    pub mu_dsp_ps: f64,
    /// Multipliers with an operand at least this wide are mapped to DSP blocks.
    pub dsp_threshold: u32,
    pub dsp_mul: bool,
    /// Register setup plus clock-to-out, in ns.
    pub reg_overhead_ns: f64,
    pub case_depth: CaseDepth,
    pub math_depth: MathDepth,
}

impl Default for CostTable {
    fn default() -> Self {
        CostTable {
            mu_lut_ps: 825.0,
            mu_dsp_ps: 1520.0,
            dsp_threshold: 16,
            dsp_mul: true,
            reg_overhead_ns: 0.400,
            case_depth: CaseDepth::Alternatives,
            math_depth: MathDepth::ResultWidth,
        }
    }
}

/// ceil(log2(n)) with ceil(log2(1)) = 0.
pub fn clog2(n: u32) -> u32 {
    if n <= 1 {
        0
    } else {
        32 - (n - 1).leading_zeros()
    }
}

/// Logic depth of one construct. `operand_widths` follow the node layout of
/// the elaborator (select base first, then operands).
pub fn rtlcs_depth(kind: RtlcsKind, operand_widths: &[u32], width: u32, table: &CostTable) -> u32 {
    match kind {
        RtlcsKind::If | RtlcsKind::Comb => 1,
        RtlcsKind::Case { alternatives } => match table.case_depth {
            CaseDepth::Alternatives => clog2(alternatives.max(2)),
            CaseDepth::SelectWidth => operand_widths.first().copied().unwrap_or(1),
        },
        RtlcsKind::Reduction => clog2(operand_widths.first().copied().unwrap_or(1)),
        RtlcsKind::Mux { elements } | RtlcsKind::Demux { elements } => clog2(elements),
        RtlcsKind::ShiftVar { amount_width } => amount_width,
        RtlcsKind::ShiftConst | RtlcsKind::ConstSelect | RtlcsKind::Literal | RtlcsKind::Identifier | RtlcsKind::Concat => 0,
        RtlcsKind::Comparison => clog2(operand_widths.iter().copied().max().unwrap_or(1)) + 1,
        RtlcsKind::Math { op } => {
            let d = match table.math_depth {
                MathDepth::ResultWidth => width,
                MathDepth::LogWidth => clog2(width) + 1,
            };
            let widest = operand_widths.iter().copied().max().unwrap_or(0);
            if op == MathOp::Mul && table.dsp_mul && widest >= table.dsp_threshold {
                (d as f64 * table.mu_dsp_ps / table.mu_lut_ps).round() as u32
            } else {
                d
            }
        }
    }
}

/// Set every comb node's weight from the cost table.
pub fn weigh_graph(g: &mut DesignGraph, table: &CostTable) {
    for c in &mut g.comb_nodes {
        c.weight = Some(rtlcs_depth(c.kind, &c.operand_widths, c.width, table));
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NodeDepth {
    pub d_in: u32,
    pub weight: u32,
    pub d_out: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WitnessStep {
    pub node: String,
    pub line: u32,
    pub col: u32,
    pub weight: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DepthReport {
    pub t_2ild: u32,
    pub nodes: Vec<NodeDepth>,
    pub witness: Vec<NodeRef>,
    pub witness_steps: Vec<WitnessStep>,
    /// Worst arrival (2iLD) at each sequential sink.
    pub sink_arrivals: BTreeMap<String, u32>,
}

#[derive(Debug, thiserror::Error)]
pub enum TimingError {
    #[error("node {0} has no weight; run weigh_graph first")]
    Unweighted(usize),
    #[error(transparent)]
    Graph(#[from] ElabError),
}

/// Forward/backward longest-path DP over the combinational DAG.
pub fn longest_paths(g: &DesignGraph) -> Result<DepthReport, TimingError> {
    let order = topo_order(g)?;
    let n = g.comb_nodes.len();
    let mut w = vec![0u32; n];
    for (i, c) in g.comb_nodes.iter().enumerate() {
        w[i] = c.weight.ok_or(TimingError::Unweighted(i))?;
    }
    let mut d_in = vec![0u32; n];
    for &u in &order {
        d_in[u] = g
            .in_edges(NodeRef::Comb(u))
            .iter()
            .map(|&e| match g.edges[e].tail {
                NodeRef::Comb(t) => d_in[t] + w[t],
                NodeRef::Seq(_) => 0,
            })
            .max()
            .unwrap_or(0);
    }
    let mut d_out = vec![0u32; n];
    for &u in order.iter().rev() {
        d_out[u] = g
            .out_edges(NodeRef::Comb(u))
            .iter()
            .map(|&e| match g.edges[e].head {
                NodeRef::Comb(h) => w[h] + d_out[h],
                NodeRef::Seq(_) => 0,
            })
            .max()
            .unwrap_or(0);
    }
    let total = |i: usize| d_in[i] + w[i] + d_out[i];
    let t_2ild = (0..n).map(total).max().unwrap_or(0);

    let mut witness = Vec::new();
    if let Some(mid) = (0..n).find(|&i| total(i) == t_2ild) {
        // walk back
        let mut back = vec![NodeRef::Comb(mid)];
        let mut cur = mid;
        loop {
            let mut best: Option<NodeRef> = None;
            for &e in g.in_edges(NodeRef::Comb(cur)) {
                let t = g.edges[e].tail;
                let ok = match t {
                    NodeRef::Comb(p) => d_in[p] + w[p] == d_in[cur],
                    NodeRef::Seq(_) => d_in[cur] == 0,
                };
                if ok && best.is_none_or(|b| t < b) {
                    best = Some(t);
                }
            }
            match best {
                Some(NodeRef::Comb(p)) => {
                    back.push(NodeRef::Comb(p));
                    cur = p;
                }
                Some(s) => {
                    back.push(s);
                    break;
                }
                None => break,
            }
        }
        back.reverse();
        witness = back;
        let mut cur = mid;
        loop {
            let mut best: Option<NodeRef> = None;
            for &e in g.out_edges(NodeRef::Comb(cur)) {
                let h = g.edges[e].head;
                let ok = match h {
                    NodeRef::Comb(s) => w[s] + d_out[s] == d_out[cur],
                    NodeRef::Seq(_) => d_out[cur] == 0,
                };
                if ok && best.is_none_or(|b| h < b) {
                    best = Some(h);
                }
            }
            match best {
                Some(NodeRef::Comb(s)) => {
                    witness.push(NodeRef::Comb(s));
                    cur = s;
                }
                Some(s) => {
                    witness.push(s);
                    break;
                }
                None => break,
            }
        }
    }
    let witness_steps = witness
        .iter()
        .map(|&r| {
            let (span, weight) = match r {
                NodeRef::Comb(i) => (g.comb_nodes[i].span, w[i]),
                NodeRef::Seq(i) => (g.seq_nodes[i].span, 0),
            };
            WitnessStep {
                node: g.describe(r),
                line: span.line,
                col: span.col,
                weight,
            }
        })
        .collect();

    let mut sink_arrivals = BTreeMap::new();
    for (i, s) in g.seq_nodes.iter().enumerate() {
        if !s.kind.is_sink() {
            continue;
        }
        let a = g
            .in_edges(NodeRef::Seq(i))
            .iter()
            .map(|&e| match g.edges[e].tail {
                NodeRef::Comb(t) => d_in[t] + w[t],
                NodeRef::Seq(_) => 0,
            })
            .max();
        if let Some(a) = a {
            sink_arrivals.insert(g.describe(NodeRef::Seq(i)), a);
        }
    }
    Ok(DepthReport {
        t_2ild,
        nodes: (0..n)
            .map(|i| NodeDepth {
                d_in: d_in[i],
                weight: w[i],
                d_out: d_out[i],
            })
            .collect(),
        witness,
        witness_steps,
        sink_arrivals,
    })
}

/// Plain-text table of the worst path.
pub fn render_text(report: &DepthReport) -> String {
    let mut s = format!("worst depth: {} 2iLD\n", report.t_2ild);
    s.push_str("  step  line:col  weight  node\n");
    for (i, st) in report.witness_steps.iter().enumerate() {
        s.push_str(&format!("  {:>4}  {:>8}  {:>6}  {}\n", i, format!("{}:{}", st.line, st.col), st.weight, st.node));
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TheoreticalTiming {
    pub cmf: u32,
    pub t_ns: f64,
    /// t_orig / t_theory, in percent.
    pub speedup_pct: f64,
}

/// Clock period once the path is cut into `cmf` segments, each paying one register overhead.
pub fn theoretical_timing(t_orig_ns: f64, cmf: u32, table: &CostTable) -> TheoreticalTiming {
    let c = cmf.max(1) as f64;
    let t = (t_orig_ns + (c - 1.0) * table.reg_overhead_ns) / c;
    TheoreticalTiming {
        cmf,
        t_ns: t,
        speedup_pct: 100.0 * t_orig_ns / t,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub relative_performance: f64,
    pub timing_ratio: f64,
    pub pps_khz: f64,
    pub relative_luts: Option<f64>,
}

/// Relative performance, achieved/theoretical ratio and performance per slice.
pub fn derive_metrics(
    t_orig_ns: f64,
    t_theory_ns: f64,
    t_achieved_ns: f64,
    occupied_slices: f64,
    luts: Option<(f64, f64)>,
) -> MetricsRow {
    MetricsRow {
        relative_performance: t_orig_ns / t_achieved_ns,
        timing_ratio: t_theory_ns / t_achieved_ns,
        pps_khz: 1.0e6 / t_achieved_ns / occupied_slices,
        relative_luts: luts.map(|(orig, now)| now / orig),
    }
}

/// ASIC area relative to the original, given a gate/flip-flop area split.
pub fn relative_area_asic(ff_csr: f64, ff_orig: f64, gate_share: f64, ff_share: f64) -> f64 {
    gate_share + ff_share * (ff_csr / ff_orig)
}

/// Scaled chi-square delay per LUT-net-pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DelayModel {
    /// Degrees of freedom of one pair; the pair variance is 2·mu²/k.
    pub k_single: f64,
    pub mu_lut_ps: f64,
    pub seed: u64,
}

impl Default for DelayModel {
    fn default() -> Self {
        DelayModel {
            k_single: 8.0,
            mu_lut_ps: 825.0,
            seed: 1,
        }
    }
}

impl DelayModel {
    pub fn pair_variance(&self) -> f64 {
        2.0 * self.mu_lut_ps * self.mu_lut_ps / self.k_single
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DelaySummary {
    pub mean_ps: f64,
    pub variance: f64,
    pub skewness: f64,
}

/// Moments of the sum of `n_pairs` independent pair delays.
pub fn sample_segment_delay(n_pairs: u32, model: &DelayModel, n_samples: usize) -> DelaySummary {
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let chi = ChiSquared::new(model.k_single).expect("k_single > 0");
    let scale = model.mu_lut_ps / model.k_single;
    let xs: Vec<f64> = (0..n_samples.max(1))
        .map(|_| (0..n_pairs.max(1)).map(|_| chi.sample(&mut rng) * scale).sum())
        .collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    let skewness = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
    DelaySummary {
        mean_ps: mean,
        variance: m2,
        skewness,
    }
}
