//! Command-line driver: `parse`, `report-timing`, `csr`, `check`, `metrics`.
//!
//! Exit codes: 0 success, 1 user or design error (and a failed `check`),
//! 2 internal error.

use crate::csr_place::{
    balance, initial_assignment, legality_check, reoptimize_with_sta, segment_depths, BackAnnotation, CutReport,
    PlaceError,
};
use crate::elaborate::{elaborate, DesignGraph, ElabError};
use crate::emit::{emit_identity, emit_schedule, emit_verilog, identity_schedule, plan_rewrite, EmitError, EmitOptions, Fault, ScheduleReport};
use crate::frontend::{infer_top, parse_source, pretty_print, subset_check, SourceUnit};
use crate::sim::{check_equivalence, random_streams, EquivalenceVerdict, SimDesign};
use crate::timing::{derive_metrics, longest_paths, relative_area_asic, render_text, theoretical_timing, weigh_graph, CostTable};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input, bad design or bad flags.
    #[error("{0}")]
    User(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

fn user(e: impl ToString) -> CliError {
    CliError::User(e.to_string())
}

impl From<ElabError> for CliError {
    fn from(e: ElabError) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<PlaceError> for CliError {
    fn from(e: PlaceError) -> Self {
        match e {
            PlaceError::Annotation(_) | PlaceError::BadCmf => CliError::User(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<EmitError> for CliError {
    fn from(e: EmitError) -> Self {
        match e {
            EmitError::Unsplittable(_) | EmitError::Conflict(..) | EmitError::Illegal(_) => CliError::Internal(e.to_string()),
            other => CliError::User(other.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "cslow", version, about = "C-slow retiming for synthesizable Verilog")]
pub struct Cli {
    /// JSON file mirroring the flags; flags win on conflict.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse and subset-check; optionally pretty-print.
    Parse(ParseArgs),
    /// Logic-depth report of the elaborated design.
    ReportTiming(TimingArgs),
    /// Rewrite the design into its C-slowed form.
    Csr(CsrArgs),
    /// Rewrite, then compare against the original on interleaved random threads.
    Check(CheckArgs),
    /// Theoretical timing and derived metrics tables.
    Metrics(MetricsArgs),
}

#[derive(Args, Debug, Default, Clone)]
pub struct DesignArgs {
    /// Verilog sources.
    pub files: Vec<PathBuf>,
    #[arg(long)]
    pub top: Option<String>,
    /// JSON overrides for the RTLCS cost table.
    #[arg(long)]
    pub cost_table: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ParseArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Print the canonical form instead of a summary.
    #[arg(long)]
    pub pretty: bool,
}

#[derive(Args, Debug)]
pub struct TimingArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Print a text table instead of JSON.
    #[arg(long)]
    pub text: bool,
    /// Also write the weighted graph as JSON.
    #[arg(long)]
    pub dump_graph: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Clone)]
pub struct CsrArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long)]
    pub cmf: Option<u32>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Drive every clk_sp<n> from the main clock instead of adding ports.
    #[arg(long)]
    pub tie_clocks: bool,
    /// Report per-output latencies instead of adding alignment stages.
    #[arg(long)]
    pub no_align_outputs: bool,
    /// Leave `#1` off the pipeline register assignments.
    #[arg(long)]
    pub no_sp_delay: bool,
    /// Do not suppress state updates during the first cmf-1 fast cycles.
    #[arg(long)]
    pub no_warmup_gate: bool,
    /// Measured segment delays (JSON) for a re-optimization pass.
    #[arg(long)]
    pub sta: Option<PathBuf>,
    /// Path budget for the exhaustive legality check; 0 keeps it local.
    #[arg(long)]
    pub path_limit: Option<usize>,
    #[arg(long)]
    pub dump_graph: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[command(flatten)]
    pub csr: CsrArgs,
    /// Original cycles per thread.
    #[arg(long)]
    pub cycles: Option<usize>,
    /// Falls back to the config file, then CSLOW_SEED, then 1.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Bypass a pipeline register: NAME or NAME:BIT.
    #[arg(long)]
    pub inject_fault: Option<Fault>,
    /// Write the interleaved stimulus (JSON) and CSR trace (VCD) here.
    #[arg(long)]
    pub dump_traces: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    /// Original clock period in ns.
    #[arg(long)]
    pub t_orig: f64,
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    pub cmf: Vec<u32>,
    /// Achieved periods in ns, one per cmf.
    #[arg(long, value_delimiter = ',')]
    pub t_achieved: Vec<f64>,
    /// Occupied slices: original first, then one per cmf.
    #[arg(long, value_delimiter = ',')]
    pub slices: Vec<f64>,
    /// Flip-flop counts: original first, then one per cmf.
    #[arg(long, value_delimiter = ',')]
    pub ff: Vec<f64>,
    /// LUT counts: original first, then one per cmf.
    #[arg(long, value_delimiter = ',')]
    pub luts: Vec<f64>,
    #[arg(long, default_value_t = 0.58)]
    pub gate_share: f64,
    #[arg(long, default_value_t = 0.42)]
    pub ff_share: f64,
    #[arg(long)]
    pub cost_table: Option<PathBuf>,
    #[arg(long)]
    pub text: bool,
}

/// Optional config file; every field mirrors a flag.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub files: Option<Vec<PathBuf>>,
    pub top: Option<String>,
    pub cmf: Option<u32>,
    pub cost_table: Option<PathBuf>,
    pub tie_clocks: Option<bool>,
    pub align_outputs: Option<bool>,
    pub sp_delay: Option<bool>,
    pub warmup_gate: Option<bool>,
    pub seed: Option<u64>,
    pub path_limit: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub cycles: Option<usize>,
    pub sta: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| user(format!("{}: {e}", path.display())))?;
        let mut c: RunConfig = serde_json::from_str(&text).map_err(|e| user(format!("{}: {e}", path.display())))?;
        // paths in the file are relative to the file
        let dir = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        c.files.iter_mut().flatten().for_each(fix);
        c.cost_table.iter_mut().for_each(fix);
        c.out_dir.iter_mut().for_each(fix);
        c.sta.iter_mut().for_each(fix);
        Ok(c)
    }
}

/// Flags merged over the config file.
#[derive(Clone, Debug, Serialize)]
pub struct Settings {
    pub files: Vec<PathBuf>,
    pub top: Option<String>,
    pub cmf: u32,
    pub cost_table: Option<PathBuf>,
    pub tie_clocks: bool,
    pub align_outputs: bool,
    pub sp_delay: bool,
    pub warmup_gate: bool,
    pub seed: u64,
    pub path_limit: usize,
    pub out_dir: Option<PathBuf>,
    pub cycles: usize,
    pub sta: Option<PathBuf>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            files: vec![],
            top: None,
            cmf: 2,
            cost_table: None,
            tie_clocks: false,
            align_outputs: true,
            sp_delay: true,
            warmup_gate: true,
            seed: 1,
            path_limit: 10_000,
            out_dir: None,
            cycles: 1000,
            sta: None,
        }
    }
}

fn env_seed() -> Option<u64> {
    std::env::var("CSLOW_SEED").ok().and_then(|s| s.trim().parse().ok())
}

fn merge(a: &CsrArgs, seed: Option<u64>, cycles: Option<usize>, c: &RunConfig) -> Settings {
    Settings {
        files: if a.design.files.is_empty() {
            c.files.clone().unwrap_or_default()
        } else {
            a.design.files.clone()
        },
        top: a.design.top.clone().or(c.top.clone()),
        cmf: a.cmf.or(c.cmf).unwrap_or(2),
        cost_table: a.design.cost_table.clone().or(c.cost_table.clone()),
        tie_clocks: a.tie_clocks || c.tie_clocks.unwrap_or(false),
        align_outputs: !a.no_align_outputs && c.align_outputs.unwrap_or(true),
        sp_delay: !a.no_sp_delay && c.sp_delay.unwrap_or(true),
        warmup_gate: !a.no_warmup_gate && c.warmup_gate.unwrap_or(true),
        seed: seed.or(c.seed).or_else(env_seed).unwrap_or(1),
        path_limit: a.path_limit.or(c.path_limit).unwrap_or(10_000),
        out_dir: a.out_dir.clone().or(c.out_dir.clone()),
        cycles: cycles.or(c.cycles).unwrap_or(1000),
        sta: a.sta.clone().or(c.sta.clone()),
    }
}

pub fn load_cost_table(path: Option<&Path>) -> Result<CostTable, CliError> {
    match path {
        None => Ok(CostTable::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| user(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| user(format!("{}: {e}", p.display())))
        }
    }
}

/// A parsed, checked and elaborated design with weights attached.
pub struct Design {
    pub unit: SourceUnit,
    pub top: String,
    pub graph: DesignGraph,
    pub table: CostTable,
}

/// Parse every file into one unit; diagnostics are rendered against their file.
pub fn read_sources(files: &[PathBuf]) -> Result<(SourceUnit, String), CliError> {
    if files.is_empty() {
        return Err(user("no input files"));
    }
    let mut modules = Vec::new();
    let mut text = String::new();
    for f in files {
        let src = std::fs::read_to_string(f).map_err(|e| user(format!("{}: {e}", f.display())))?;
        let u = parse_source(&src).map_err(|e| user(e.render(&f.display().to_string())))?;
        let diags = subset_check(&u);
        if !diags.is_empty() {
            let name = f.display().to_string();
            return Err(user(diags.iter().map(|d| d.render(&name)).collect::<Vec<_>>().join("\n")));
        }
        modules.extend(u.modules);
        text.push_str(&src);
    }
    let label = files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>().join(",");
    Ok((
        SourceUnit {
            modules,
            source_text: text,
        },
        label,
    ))
}

pub fn load_design(files: &[PathBuf], top: Option<&str>, table: CostTable) -> Result<Design, CliError> {
    let (unit, label) = read_sources(files)?;
    if files.len() > 1 {
        let diags = subset_check(&unit);
        if !diags.is_empty() {
            return Err(user(diags.iter().map(|d| d.render(&label)).collect::<Vec<_>>().join("\n")));
        }
    }
    let top = match top {
        Some(t) => t.to_string(),
        None => infer_top(&unit)
            .ok_or_else(|| user("cannot infer the top module; pass --top"))?
            .to_string(),
    };
    let mut graph = elaborate(&unit, &top)?;
    weigh_graph(&mut graph, &table);
    Ok(Design {
        unit,
        top,
        graph,
        table,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Reoptimization {
    pub source: Option<String>,
    pub segments: std::collections::BTreeMap<String, f64>,
    pub changed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CsrReport {
    pub top: String,
    pub cmf: u32,
    pub verilog_file: Option<String>,
    pub schedule_file: Option<String>,
    pub cut: CutReport,
    pub reoptimized: Option<Reoptimization>,
    pub legality_paths_checked: Option<usize>,
    pub sp_registers: usize,
    pub sp_register_bits: u64,
    pub align_register_bits: u64,
}

pub struct CsrOutcome {
    pub verilog: String,
    pub schedule: ScheduleReport,
    pub report: CsrReport,
}

/// initial_assignment → balance → [reoptimize_with_sta] → plan_rewrite → emit.
pub fn run_csr(d: &Design, s: &Settings, fault: Option<Fault>) -> Result<CsrOutcome, CliError> {
    let g = &d.graph;
    if s.cmf == 0 {
        return Err(user("cmf must be at least 1"));
    }
    let init = initial_assignment(g, s.cmf)?;
    let mut a = balance(g, &init)?;
    let mut reoptimized = None;
    if let Some(p) = &s.sta {
        let text = std::fs::read_to_string(p).map_err(|e| user(format!("{}: {e}", p.display())))?;
        let ann = BackAnnotation::from_json(&text)?;
        let b = reoptimize_with_sta(g, &a, &ann, d.table.mu_lut_ps)?;
        reoptimized = Some(Reoptimization {
            source: ann.source.clone().or_else(|| Some(p.display().to_string())),
            segments: ann.segments.clone(),
            changed: b != a,
        });
        a = b;
    }
    let verdict = legality_check(g, &a, s.path_limit);
    if let Some(v) = verdict.violations.first() {
        return Err(CliError::Internal(format!("placement is illegal: {v}")));
    }
    let cut = segment_depths(g, &a)?;
    let opts = EmitOptions {
        sp_delay: s.sp_delay,
        tie_clocks: s.tie_clocks,
        warmup_gate: s.warmup_gate,
        fault,
    };
    let (verilog, schedule) = if s.cmf == 1 {
        if opts.fault.is_some() {
            return Err(user("cmf 1 has no pipeline registers to fault"));
        }
        (emit_identity(&d.unit), identity_schedule(g))
    } else {
        let plan = plan_rewrite(g, &a, s.align_outputs)?;
        (emit_verilog(g, &plan, &opts)?, emit_schedule(g, &plan, &opts))
    };
    let report = CsrReport {
        top: d.top.clone(),
        cmf: s.cmf,
        verilog_file: None,
        schedule_file: None,
        cut,
        reoptimized,
        legality_paths_checked: verdict.paths_checked,
        sp_registers: schedule.sp_registers,
        sp_register_bits: schedule.sp_register_bits,
        align_register_bits: schedule.align_register_bits,
    };
    Ok(CsrOutcome {
        verilog,
        schedule,
        report,
    })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| user(format!("{}: {e}", dir.display())))?;
        }
    }
    std::fs::write(path, text).map_err(|e| user(format!("{}: {e}", path.display())))
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes") + "\n"
}

fn write_artifacts(out: &mut CsrOutcome, dir: &Path) -> Result<(), CliError> {
    let stem = format!("{}_csr{}", out.report.top, out.report.cmf);
    let v = dir.join(format!("{stem}.v"));
    let sch = dir.join(format!("{stem}.schedule.json"));
    write(&v, &out.verilog)?;
    write(&sch, &out.schedule.to_json())?;
    out.report.verilog_file = Some(v.display().to_string());
    out.report.schedule_file = Some(sch.display().to_string());
    write(&dir.join(format!("{stem}.cut.json")), &json(&out.report))
}

#[derive(Serialize)]
struct ParseSummary {
    top: Option<String>,
    modules: Vec<String>,
    diagnostics: Vec<String>,
}

fn cmd_parse(a: &ParseArgs, c: &RunConfig, out: &mut String) -> Result<i32, CliError> {
    let files = if a.design.files.is_empty() {
        c.files.clone().unwrap_or_default()
    } else {
        a.design.files.clone()
    };
    let (unit, _) = read_sources(&files)?;
    if a.pretty {
        out.push_str(&pretty_print(&unit));
    } else {
        out.push_str(&json(&ParseSummary {
            top: infer_top(&unit).map(str::to_string),
            modules: unit.modules.iter().map(|m| m.name.clone()).collect(),
            diagnostics: vec![],
        }));
    }
    Ok(0)
}

fn cmd_report_timing(a: &TimingArgs, c: &RunConfig, out: &mut String) -> Result<i32, CliError> {
    let files = if a.design.files.is_empty() {
        c.files.clone().unwrap_or_default()
    } else {
        a.design.files.clone()
    };
    let table = load_cost_table(a.design.cost_table.as_deref().or(c.cost_table.as_deref()))?;
    let d = load_design(&files, a.design.top.as_deref().or(c.top.as_deref()), table)?;
    let r = longest_paths(&d.graph).map_err(|e| CliError::Internal(e.to_string()))?;
    if let Some(p) = &a.dump_graph {
        write(p, &(serde_json::to_string_pretty(&d.graph.to_json()).expect("graph serializes") + "\n"))?;
    }
    if a.text {
        out.push_str(&render_text(&r));
    } else {
        out.push_str(&json(&r));
    }
    Ok(0)
}

fn cmd_csr(a: &CsrArgs, c: &RunConfig, out: &mut String) -> Result<i32, CliError> {
    let s = merge(a, None, None, c);
    let d = load_design(&s.files, s.top.as_deref(), load_cost_table(s.cost_table.as_deref())?)?;
    if let Some(p) = &a.dump_graph {
        write(p, &(serde_json::to_string_pretty(&d.graph.to_json()).expect("graph serializes") + "\n"))?;
    }
    let mut o = run_csr(&d, &s, None)?;
    let dir = s.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    write_artifacts(&mut o, &dir)?;
    out.push_str(&json(&o.report));
    Ok(0)
}

/// Simulate the original against the rewrite `o` on seeded per-thread streams.
pub fn check_outcome(
    d: &Design,
    s: &Settings,
    o: &CsrOutcome,
) -> Result<(EquivalenceVerdict, SimDesign, Vec<crate::sim::Stimulus>), CliError> {
    let csr_unit = parse_source(&o.verilog).map_err(|e| CliError::Internal(format!("emitted design: {e}")))?;
    let diags = subset_check(&csr_unit);
    if let Some(dg) = diags.first() {
        return Err(CliError::Internal(format!("emitted design: {}", dg.render("<emitted>"))));
    }
    let orig = SimDesign::from_unit(&d.unit, &d.top).map_err(user)?;
    let csr = SimDesign::from_unit(&csr_unit, &d.top).map_err(|e| CliError::Internal(e.to_string()))?;
    let streams = random_streams(&orig, s.cmf, s.cycles, s.seed);
    let warmup = s.cmf as usize;
    let verdict = check_equivalence(&orig, &csr, &streams, &o.schedule.alignment(), s.cycles, warmup).map_err(user)?;
    Ok((verdict, csr, streams))
}

#[derive(Serialize)]
struct CheckReport<'a> {
    top: &'a str,
    cmf: u32,
    seed: u64,
    cycles: usize,
    fault: Option<Fault>,
    #[serde(flatten)]
    verdict: EquivalenceVerdict,
}

fn cmd_check(a: &CheckArgs, c: &RunConfig, out: &mut String) -> Result<i32, CliError> {
    let s = merge(&a.csr, a.seed, a.cycles, c);
    let d = load_design(&s.files, s.top.as_deref(), load_cost_table(s.cost_table.as_deref())?)?;
    let mut o = run_csr(&d, &s, a.inject_fault.clone())?;
    if let Some(dir) = &s.out_dir {
        write_artifacts(&mut o, dir)?;
    }
    let (verdict, csr, streams) = check_outcome(&d, &s, &o)?;
    if let Some(dir) = &a.dump_traces {
        let inter = crate::sim::interleave(&streams).map_err(|e| CliError::Internal(e.to_string()))?;
        let n = inter.cycles.len();
        let trace = crate::sim::simulate(&csr, &inter, n).map_err(|e| CliError::Internal(e.to_string()))?;
        write(&dir.join(format!("{}_stimulus.json", d.top)), &json(&inter))?;
        write(&dir.join(format!("{}_csr{}.vcd", d.top, s.cmf)), &trace.to_vcd(&d.top))?;
    }
    let pass = verdict.pass;
    out.push_str(&json(&CheckReport {
        top: &d.top,
        cmf: s.cmf,
        seed: s.seed,
        cycles: s.cycles,
        fault: a.inject_fault.clone(),
        verdict,
    }));
    Ok(if pass { 0 } else { 1 })
}

#[derive(Clone, Debug, Serialize)]
pub struct MetricsLine {
    pub cmf: u32,
    pub t_theory_ns: f64,
    pub speedup_pct: f64,
    pub t_achieved_ns: Option<f64>,
    pub relative_performance: Option<f64>,
    pub timing_ratio: Option<f64>,
    pub pps_khz: Option<f64>,
    pub relative_luts: Option<f64>,
    pub relative_ff: Option<f64>,
    pub relative_area: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MetricsTable {
    pub t_orig_ns: f64,
    pub reg_overhead_ns: f64,
    pub original_pps_khz: Option<f64>,
    pub rows: Vec<MetricsLine>,
}

fn per_cmf(name: &str, v: &[f64], n: usize, with_original: bool) -> Result<(), CliError> {
    let want = n + with_original as usize;
    if !v.is_empty() && v.len() != want {
        let hint = if with_original { " (original first)" } else { "" };
        return Err(user(format!("--{name} needs {want} values{hint}, got {}", v.len())));
    }
    Ok(())
}

pub fn metrics_table(a: &MetricsArgs, table: &CostTable) -> Result<MetricsTable, CliError> {
    let n = a.cmf.len();
    per_cmf("t-achieved", &a.t_achieved, n, false)?;
    per_cmf("slices", &a.slices, n, true)?;
    per_cmf("ff", &a.ff, n, true)?;
    per_cmf("luts", &a.luts, n, true)?;
    if !a.slices.is_empty() && a.t_achieved.is_empty() {
        return Err(user("--slices needs --t-achieved for the performance-per-slice column"));
    }
    if a.t_orig <= 0.0 || a.cmf.contains(&0) {
        return Err(user("--t-orig must be positive and every cmf at least 1"));
    }
    let rows = a
        .cmf
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let th = theoretical_timing(a.t_orig, c, table);
            let ach = a.t_achieved.get(i).copied();
            let m = ach.map(|t| {
                let slices = a.slices.get(i + 1).copied().unwrap_or(f64::NAN);
                let luts = (!a.luts.is_empty()).then(|| (a.luts[0], a.luts[i + 1]));
                derive_metrics(a.t_orig, th.t_ns, t, slices, luts)
            });
            let ff = (!a.ff.is_empty()).then(|| (a.ff[i + 1], a.ff[0]));
            MetricsLine {
                cmf: c,
                t_theory_ns: th.t_ns,
                speedup_pct: th.speedup_pct,
                t_achieved_ns: ach,
                relative_performance: m.as_ref().map(|m| m.relative_performance),
                timing_ratio: m.as_ref().map(|m| m.timing_ratio),
                pps_khz: m.as_ref().map(|m| m.pps_khz).filter(|v| v.is_finite()),
                relative_luts: m.as_ref().and_then(|m| m.relative_luts),
                relative_ff: ff.map(|(now, orig)| now / orig),
                relative_area: ff.map(|(now, orig)| relative_area_asic(now, orig, a.gate_share, a.ff_share)),
            }
        })
        .collect();
    Ok(MetricsTable {
        t_orig_ns: a.t_orig,
        reg_overhead_ns: table.reg_overhead_ns,
        original_pps_khz: a.slices.first().map(|s| 1.0e6 / a.t_orig / s),
        rows,
    })
}

pub fn render_metrics(t: &MetricsTable) -> String {
    let opt = |v: Option<f64>, p: usize| v.map(|x| format!("{x:.p$}")).unwrap_or_else(|| "-".into());
    let mut s = format!("t_orig {:.3} ns, register overhead {:.3} ns\n", t.t_orig_ns, t.reg_overhead_ns);
    if let Some(p) = t.original_pps_khz {
        s.push_str(&format!("original PpS {p:.1} kHz\n"));
    }
    s.push_str("cmf  t_theory  speedup  t_achieved  rel_perf  ratio  PpS[kHz]  rel_FF  rel_area\n");
    for r in &t.rows {
        s.push_str(&format!(
            "{:>3}  {:>8.3}  {:>6.0}%  {:>10}  {:>8}  {:>5}  {:>8}  {:>6}  {:>8}\n",
            r.cmf,
            r.t_theory_ns,
            r.speedup_pct,
            opt(r.t_achieved_ns, 3),
            opt(r.relative_performance, 2),
            opt(r.timing_ratio, 2),
            opt(r.pps_khz, 1),
            opt(r.relative_ff, 2),
            opt(r.relative_area, 2),
        ));
    }
    s
}

fn cmd_metrics(a: &MetricsArgs, c: &RunConfig, out: &mut String) -> Result<i32, CliError> {
    let table = load_cost_table(a.cost_table.as_deref().or(c.cost_table.as_deref()))?;
    let t = metrics_table(a, &table)?;
    if a.text {
        out.push_str(&render_metrics(&t));
    } else {
        out.push_str(&json(&t));
    }
    Ok(0)
}

/// Run one command; returns the exit code and what goes to stdout.
pub fn execute(cli: &Cli) -> Result<(i32, String), CliError> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut out = String::new();
    let code = match &cli.command {
        Command::Parse(a) => cmd_parse(a, &config, &mut out)?,
        Command::ReportTiming(a) => cmd_report_timing(a, &config, &mut out)?,
        Command::Csr(a) => cmd_csr(a, &config, &mut out)?,
        Command::Check(a) => cmd_check(a, &config, &mut out)?,
        Command::Metrics(a) => cmd_metrics(a, &config, &mut out)?,
    };
    Ok((code, out))
}

/// Parse `args`, run, print; returns the process exit code.
pub fn main_with_args<I: IntoIterator<Item = OsString>>(args: I) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let run = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| execute(&cli)));
    match run {
        Ok(Ok((code, out))) => {
            print!("{out}");
            code
        }
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
        Err(_) => {
            eprintln!("error: internal error (panic)");
            2
        }
    }
}
