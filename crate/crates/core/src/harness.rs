//! Experiment orchestration: builds windows and graphs from a configuration,
//! runs replicas in parallel, and writes a manifest plus CSV tables.
//!
//! Replica `r` uses the plan `RandomnessPlan::new(seed).replica(r)`; its master
//! seed appears in the manifest, and every CSV row carries the replica number.
//! Results are merged in replica order, so files do not depend on scheduling.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, ExperimentKind, FrameSpec};
use crate::dynamics::{run, uniform_agents, RunOutput};
use crate::error::{Error, Result};
use crate::format::{write_graph, write_state};
use crate::graph::{
    degree_stats, rho, sample_feelings, sample_graph, DegreeStats, FeelingMap, Graph,
};
use crate::lattice::{BoundaryMode, Window};
use crate::mixing::{
    centred_region, find_linked_nonneighbor, median_front_time, partition_subboxes, tv_estimate,
    GraphSource, MixingSetup,
};
use crate::observables::{
    classify_events, energy_decomposition, flips_per_window, markov_bound_check, nash_check,
    uniform_grid,
};
use crate::oracle::{compare_energy, compare_replay, Comparison};
use crate::rng::{Purpose, RandomnessPlan};

/// Exit status of the command-line tool.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const INVARIANT: i32 = 3;
    pub const IO: i32 = 4;
}

/// Exit code for an error that escaped a run.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidParameter { .. } | Error::InvalidWindow(_) => exit::CONFIG,
        Error::Invariant(_) | Error::Parse { .. } => exit::INVARIANT,
        Error::Io(_) => exit::IO,
    }
}

/// A named pass/fail check reported in the manifest.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Ok,
    ChecksFailed,
    InvariantViolation,
}

/// Summary of a finished run; the same information is in `manifest.json`.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub status: RunStatus,
    pub error: Option<String>,
    pub files: Vec<String>,
    pub findings: Vec<String>,
    pub checks: Vec<Check>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        match self.status {
            RunStatus::Ok => exit::OK,
            RunStatus::ChecksFailed | RunStatus::InvariantViolation => exit::INVARIANT,
        }
    }
}

#[derive(Default)]
struct Output {
    files: Vec<String>,
    findings: Vec<String>,
    checks: Vec<Check>,
    realized: serde_json::Map<String, Value>,
}

struct Ctx<'a> {
    config: &'a ExperimentConfig,
    dir: &'a Path,
    quiet: bool,
    plan: RandomnessPlan,
}

impl Ctx<'_> {
    fn progress(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("[{}] {}", self.config.kind.name(), msg.as_ref());
        }
    }

    fn replica_plan(&self, r: usize) -> RandomnessPlan {
        self.plan.replica(r as u64)
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

fn write_csv<T: Serialize>(out: &mut Output, dir: &Path, name: &str, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join(name)).map_err(csv_error)?;
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    out.files.push(name.to_string());
    Ok(())
}

/// A header-only CSV would lose its columns, so empty tables get them explicitly.
fn write_csv_or_header<T: Serialize>(
    out: &mut Output,
    dir: &Path,
    name: &str,
    rows: &[T],
    header: &[&str],
) -> Result<()> {
    if rows.is_empty() {
        let mut w = csv::Writer::from_path(dir.join(name)).map_err(csv_error)?;
        w.write_record(header).map_err(csv_error)?;
        w.flush()?;
        out.files.push(name.to_string());
        Ok(())
    } else {
        write_csv(out, dir, name, rows)
    }
}

fn write_text(out: &mut Output, dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::write(dir.join(name), text)?;
    out.files.push(name.to_string());
    Ok(())
}

fn na(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |t| t.to_string())
}

/// The window a configuration describes, at side `side`.
pub fn build_window(config: &ExperimentConfig, side: usize) -> Result<Window> {
    match config.boundary_mode() {
        BoundaryMode::Torus => Window::torus(side),
        BoundaryMode::Free => Window::free(side),
        BoundaryMode::Pinned => Window::pinned(side, config.frame.build(side, config.frame_width)?),
    }
}

fn sample(config: &ExperimentConfig, window: &Window, plan: RandomnessPlan) -> (Graph, FeelingMap) {
    let g = sample_graph(window, config.edge_params(), plan);
    let f = sample_feelings(&g, config.symmetric, plan);
    (g, f)
}

/// Runs the configured experiment and writes its outputs into `dir`.
///
/// Invariant violations are reported through the manifest and the returned
/// status; only I/O failures and invalid parameters escape as errors.
pub fn run_experiment(config: &ExperimentConfig, dir: &Path, quiet: bool) -> Result<RunReport> {
    fs::create_dir_all(dir)?;
    let ctx = Ctx {
        config,
        dir,
        quiet,
        plan: RandomnessPlan::new(config.seed),
    };
    ctx.progress(format!(
        "L = {}, {} replica(s), seed {}",
        config.side, config.replicas, config.seed
    ));
    let result = match config.kind {
        ExperimentKind::GraphStats => graph_stats(&ctx),
        ExperimentKind::Simulate => simulate(&ctx),
        ExperimentKind::Fixation => fixation(&ctx),
        ExperimentKind::Mixing => mixing(&ctx),
        ExperimentKind::NashCheck => nash(&ctx),
        ExperimentKind::OracleCheck => oracle_check(&ctx),
    };
    let (status, error, out) = match result {
        Ok(out) => {
            let status = if out.checks.iter().all(|c| c.pass) {
                RunStatus::Ok
            } else {
                RunStatus::ChecksFailed
            };
            (status, None, out)
        }
        Err(e @ (Error::Invariant(_) | Error::Parse { .. })) => (
            RunStatus::InvariantViolation,
            Some(e.to_string()),
            Output::default(),
        ),
        Err(e) => return Err(e),
    };
    let replica_seeds: Vec<u64> = (0..config.replicas)
        .map(|r| ctx.replica_plan(r).master_seed())
        .collect();
    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let manifest = json!({
        "tool": "lrgame",
        "version": env!("CARGO_PKG_VERSION"),
        "kind": config.kind.name(),
        "status": status,
        "error": error,
        "config": config,
        "realized": out.realized,
        "seeds": { "master": config.seed, "replicas": replica_seeds },
        "files": out.files,
        "findings": out.findings,
        "checks": out.checks,
        "created_unix": created,
    });
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("json") + "\n",
    )?;
    ctx.progress(format!("status {status:?}, outputs in {}", dir.display()));
    Ok(RunReport {
        status,
        error,
        files: out.files,
        findings: out.findings,
        checks: out.checks,
    })
}

#[derive(Serialize)]
struct GraphStatsRow {
    replica: usize,
    seed: u64,
    sites: usize,
    edges: usize,
    mean_degree: f64,
    rho_1: f64,
    rho_2: f64,
    rho_3: f64,
    rho_4: f64,
    rho_5: f64,
}

impl GraphStatsRow {
    fn new(replica: usize, seed: u64, edges: usize, s: DegreeStats) -> Self {
        let [rho_1, rho_2, rho_3, rho_4, rho_5] = s.rho_moments;
        Self {
            replica,
            seed,
            sites: s.sites,
            edges,
            mean_degree: s.mean_degree,
            rho_1,
            rho_2,
            rho_3,
            rho_4,
            rho_5,
        }
    }
}

fn base_realized(ctx: &Ctx, out: &mut Output) -> Result<Window> {
    let w = build_window(ctx.config, ctx.config.side)?;
    out.realized.insert("L".into(), json!(w.side()));
    out.realized
        .insert("boundary".into(), json!(w.mode().name()));
    out.realized
        .insert("frame_width".into(), json!(w.frame_width()));
    out.realized.insert("sites".into(), json!(w.num_interior()));
    Ok(w)
}

fn graph_stats(ctx: &Ctx) -> Result<Output> {
    let mut out = Output::default();
    let w = base_realized(ctx, &mut out)?;
    let rows: Vec<GraphStatsRow> = (0..ctx.config.replicas)
        .into_par_iter()
        .map(|r| {
            let plan = ctx.replica_plan(r);
            let g = sample_graph(&w, ctx.config.edge_params(), plan);
            GraphStatsRow::new(r, plan.master_seed(), g.num_edges(), degree_stats(&g))
        })
        .collect();
    let mean = |f: fn(&GraphStatsRow) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
    out.findings.push(format!(
        "mean degree {:.4}, E rho^2 {:.4}, E rho^3 {:.4}",
        mean(|r| r.mean_degree),
        mean(|r| r.rho_2),
        mean(|r| r.rho_3)
    ));
    write_csv(&mut out, ctx.dir, "graph_stats.csv", &rows)?;
    Ok(out)
}

#[derive(Serialize)]
struct TrajectoryRow {
    replica: usize,
    time: f64,
    site_x1: i32,
    site_x2: i32,
    decision: i32,
    reward: i8,
    flipped: u8,
    new_pattern: u8,
    radius: String,
}

fn memory_dump(w: &Window, output: &RunOutput) -> String {
    let mut s = String::new();
    for (ordinal, agent) in output.state.agents().iter().enumerate() {
        if let Some(m) = agent.agent_memory() {
            let site = w.site(w.interior_index(ordinal));
            s.push_str(&format!("# site {} {}\n", site.x1, site.x2));
            s.push_str(&m.dump());
        }
    }
    s
}

type ReplicaDump = (Vec<TrajectoryRow>, String, String, Option<String>, usize);

fn simulate(ctx: &Ctx) -> Result<Output> {
    let mut out = Output::default();
    let w = base_realized(ctx, &mut out)?;
    let config = ctx.config;
    let parts: Vec<ReplicaDump> = (0..config.replicas)
        .into_par_iter()
        .map(|r| -> Result<_> {
            let plan = ctx.replica_plan(r);
            let (g, f) = sample(config, &w, plan);
            let output = run(
                &g,
                &f,
                uniform_agents(&w, &config.strategy()),
                config.horizon,
                plan,
            )?;
            for a in output.state.agents() {
                if let Some(m) = a.agent_memory() {
                    m.check()?;
                }
            }
            let rows = output
                .log
                .records
                .iter()
                .map(|rec| {
                    let s = w.site(rec.site);
                    TrajectoryRow {
                        replica: r,
                        time: rec.time,
                        site_x1: s.x1,
                        site_x2: s.x2,
                        decision: rec.decision.value(),
                        reward: rec.reward,
                        flipped: rec.flipped as u8,
                        new_pattern: rec.new_pattern as u8,
                        radius: rec.radius.map_or_else(|| "NA".into(), |r| r.to_string()),
                    }
                })
                .collect();
            let state = format!("# replica {r}\n{}", write_state(&w, output.state.config()));
            let memory = format!("# replica {r}\n{}", memory_dump(&w, &output));
            let graph = (r == 0).then(|| write_graph(&g, &f, Some(output.state.config())));
            Ok((rows, state, memory, graph, output.log.len()))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut states = String::new();
    let mut memories = String::new();
    let mut events = Vec::new();
    let mut graph = None;
    for (r, s, m, g, n) in parts {
        rows.extend(r);
        states.push_str(&s);
        memories.push_str(&m);
        events.push(n);
        graph = graph.or(g);
    }
    out.realized.insert("events".into(), json!(events));
    write_csv(&mut out, ctx.dir, "trajectory.csv", &rows)?;
    write_text(&mut out, ctx.dir, "final_state.txt", &states)?;
    if config.strategy == crate::config::StrategySpec::Memory {
        write_text(&mut out, ctx.dir, "memory.txt", &memories)?;
    }
    if let Some(g) = graph {
        write_text(&mut out, ctx.dir, "graph.txt", &g)?;
    }
    Ok(out)
}

#[derive(Serialize)]
struct SiteRow {
    replica: usize,
    site_x1: i32,
    site_x2: i32,
    #[serde(rename = "N1")]
    n1: u64,
    #[serde(rename = "N2")]
    n2: u64,
    #[serde(rename = "N3")]
    n3: u64,
    #[serde(rename = "M")]
    m: u64,
    last_flip: String,
    empirical_t: f64,
    unstabilized: u8,
    rho: u32,
    degree: usize,
}

#[derive(Serialize)]
struct EnergyRow {
    replica: usize,
    time: f64,
    #[serde(rename = "H")]
    h: i64,
    e: f64,
    e1: f64,
    e2: f64,
    e3: f64,
}

#[derive(Serialize)]
struct FlipRow {
    replica: usize,
    window: usize,
    flips: u64,
}

struct FixationReplica {
    sites: Vec<SiteRow>,
    energy: Vec<EnergyRow>,
    flips: Vec<FlipRow>,
    stats: DegreeStats,
    edges: usize,
    n3: Vec<u64>,
    early: usize,
    unstabilized: usize,
    n3_without_decrease: usize,
}

fn fixation_replica(
    config: &ExperimentConfig,
    w: &Window,
    r: usize,
    plan: RandomnessPlan,
) -> Result<FixationReplica> {
    let (g, f) = sample(config, w, plan);
    let output = run(
        &g,
        &f,
        uniform_agents(w, &config.strategy()),
        config.horizon,
        plan,
    )?;
    let (report, classes) =
        classify_events(&output.log, &g, output.state.agents(), config.horizon)?;
    let grid = uniform_grid(config.horizon, config.energy_points);
    let energy = energy_decomposition(&output.log, &output.initial, &g, &f, &classes, &grid)?;
    let sites = report
        .sites
        .iter()
        .map(|s| {
            let site = w.site(s.site);
            SiteRow {
                replica: r,
                site_x1: site.x1,
                site_x2: site.x2,
                n1: s.n1,
                n2: s.n2,
                n3: s.n3,
                m: s.flips,
                last_flip: na(s.last_flip),
                empirical_t: s.empirical_t,
                unstabilized: s.unstabilized as u8,
                rho: rho(&g, s.site),
                degree: g.degree(s.site),
            }
        })
        .collect();
    let energy_rows = (0..grid.len())
        .map(|k| EnergyRow {
            replica: r,
            time: energy.times[k],
            h: energy.energy[k],
            e: energy.e[k],
            e1: energy.e1[k],
            e2: energy.e2[k],
            e3: energy.e3[k],
        })
        .collect();
    let flips = flips_per_window(&output.log, config.horizon, 4)
        .into_iter()
        .enumerate()
        .map(|(window, flips)| FlipRow {
            replica: r,
            window,
            flips,
        })
        .collect();
    Ok(FixationReplica {
        sites,
        energy: energy_rows,
        flips,
        stats: degree_stats(&g),
        edges: g.num_edges(),
        n3: report.sites.iter().map(|s| s.n3).collect(),
        early: report
            .sites
            .iter()
            .filter(|s| s.empirical_t <= config.horizon / 2.0)
            .count(),
        unstabilized: report.sites.iter().filter(|s| s.unstabilized).count(),
        n3_without_decrease: energy.n3_without_decrease.len(),
    })
}

fn fixation(ctx: &Ctx) -> Result<Output> {
    let config = ctx.config;
    if config.strategy != crate::config::StrategySpec::Memory {
        return Err(Error::param(
            "strategy",
            "fixation statistics need the memory strategy",
        ));
    }
    let mut out = Output::default();
    let w = base_realized(ctx, &mut out)?;
    let reps: Vec<FixationReplica> = (0..config.replicas)
        .into_par_iter()
        .map(|r| fixation_replica(config, &w, r, ctx.replica_plan(r)))
        .collect::<Result<_>>()?;
    let n_sites = (reps.len() * w.num_interior()) as f64;
    let early: usize = reps.iter().map(|r| r.early).sum();
    let unstab: usize = reps.iter().map(|r| r.unstabilized).sum();
    let bad_n3: usize = reps.iter().map(|r| r.n3_without_decrease).sum();
    out.findings.push(format!(
        "{:.4} of sites stabilised in the first half of the horizon",
        early as f64 / n_sites
    ));
    out.findings.push(format!(
        "{unstab} site(s) unstabilised (last novelty in the final 10% of the horizon)"
    ));
    if config.symmetric {
        out.findings.push(format!(
            "{bad_n3} post-stabilisation flip(s) without an energy decrease"
        ));
    }
    let n3: Vec<u64> = reps.iter().flat_map(|r| r.n3.iter().copied()).collect();
    let rho2 = reps.iter().map(|r| r.stats.rho_moments[1]).sum::<f64>() / reps.len() as f64;
    let rho3 = reps.iter().map(|r| r.stats.rho_moments[2]).sum::<f64>() / reps.len() as f64;
    let bounds = markov_bound_check(&n3, rho2, rho3, &config.thresholds)?;
    for b in &bounds {
        out.checks.push(Check {
            name: format!("tail bound C = {}", b.threshold),
            pass: b.pass,
            detail: format!(
                "fraction {:.5} vs bound {:.5}",
                b.empirical_fraction, b.markov_bound
            ),
        });
    }
    out.realized.insert("rho2".into(), json!(rho2));
    out.realized.insert("rho3".into(), json!(rho3));
    let sites: Vec<&SiteRow> = reps.iter().flat_map(|r| &r.sites).collect();
    let energy: Vec<&EnergyRow> = reps.iter().flat_map(|r| &r.energy).collect();
    let flips: Vec<&FlipRow> = reps.iter().flat_map(|r| &r.flips).collect();
    write_csv(&mut out, ctx.dir, "sites.csv", &sites)?;
    write_csv(&mut out, ctx.dir, "energy.csv", &energy)?;
    write_csv(&mut out, ctx.dir, "flips.csv", &flips)?;
    write_csv(&mut out, ctx.dir, "bounds.csv", &bounds)?;
    let stats: Vec<GraphStatsRow> = reps
        .iter()
        .enumerate()
        .map(|(r, rep)| {
            GraphStatsRow::new(r, ctx.replica_plan(r).master_seed(), rep.edges, rep.stats)
        })
        .collect();
    write_csv(&mut out, ctx.dir, "graph_stats.csv", &stats)?;
    Ok(out)
}

#[derive(Serialize)]
struct TvRow {
    #[serde(rename = "L")]
    side: usize,
    t: f64,
    #[serde(rename = "pair-id")]
    pair: String,
    estimate: f64,
    half_width: f64,
    replicas: usize,
}

#[derive(Serialize)]
struct FrontRow {
    #[serde(rename = "L")]
    side: usize,
    replica: usize,
    front_time_or_na: String,
    #[serde(rename = "pair-id")]
    pair: String,
}

#[derive(Serialize)]
struct ViolationRow {
    #[serde(rename = "L")]
    side: usize,
    seed: u64,
    subbox_pair: String,
    witness_edge: String,
}

fn pair_id(p: (FrameSpec, FrameSpec)) -> String {
    format!("{}/{}", p.0.name(), p.1.name())
}

fn mixing(ctx: &Ctx) -> Result<Output> {
    let config = ctx.config;
    let mut out = Output::default();
    let mut tv_rows = Vec::new();
    let mut front_rows = Vec::new();
    let mut violation_rows = Vec::new();
    let mut partitions = Vec::new();
    for &side in &config.ladder {
        let partition = partition_subboxes(side, config.rho)?;
        partitions.push(json!({
            "L": side,
            "subbox_side": partition.subbox_side(),
            "cells_per_side": partition.cells_per_side(),
            "rho_effective": partition.rho_effective(),
        }));
        let shape = Window::pinned(side, FrameSpec::Plus.build(side, config.frame_width)?)?;
        let region = centred_region(&shape, config.region)?;
        for &pair in &config.pairs {
            ctx.progress(format!("L = {side}, frames {}", pair_id(pair)));
            let setup = MixingSetup {
                window: shape.clone(),
                first: pair.0.build(side, config.frame_width)?,
                second: pair.1.build(side, config.frame_width)?,
                region: region.clone(),
                t: config.t,
                horizon: config.horizon,
                strategy: config.strategy(),
                graph: GraphSource::Sampled {
                    params: config.edge_params(),
                    symmetric: config.symmetric,
                },
                partition,
            };
            let outcomes = setup.run(config.replicas, ctx.plan)?;
            let tv = tv_estimate(&outcomes, region.len(), config.resamples, ctx.plan)?;
            tv_rows.push(TvRow {
                side,
                t: config.t,
                pair: pair_id(pair),
                estimate: tv.estimate,
                half_width: tv.half_width,
                replicas: tv.replicas,
            });
            out.findings.push(format!(
                "L = {side}, {}: TV {:.4} +- {:.4}, median front time {}",
                pair_id(pair),
                tv.estimate,
                tv.half_width,
                na(median_front_time(&outcomes))
            ));
            for (r, o) in outcomes.iter().enumerate() {
                front_rows.push(FrontRow {
                    side,
                    replica: r,
                    front_time_or_na: na(o.front_time),
                    pair: pair_id(pair),
                });
            }
        }
        let violations: Vec<Vec<ViolationRow>> = (0..config.replicas)
            .into_par_iter()
            .map(|r| {
                let plan = ctx.replica_plan(r);
                let g = sample_graph(&shape, config.edge_params(), plan);
                find_linked_nonneighbor(&g, &partition)
                    .into_iter()
                    .map(|p| ViolationRow {
                        side,
                        seed: plan.master_seed(),
                        subbox_pair: format!(
                            "({},{})-({},{})",
                            p.cells.0 .0, p.cells.0 .1, p.cells.1 .0, p.cells.1 .1
                        ),
                        witness_edge: format!(
                            "({},{})-({},{})",
                            p.witness.0.x1, p.witness.0.x2, p.witness.1.x1, p.witness.1.x2
                        ),
                    })
                    .collect()
            })
            .collect();
        let count = violations.iter().filter(|v| !v.is_empty()).count();
        out.findings.push(format!(
            "L = {side}: {count} of {} graphs have linked non-neighbour subboxes",
            config.replicas
        ));
        violation_rows.extend(violations.into_iter().flatten());
    }
    out.realized
        .insert("partitions".into(), Value::Array(partitions));
    write_csv(&mut out, ctx.dir, "tv.csv", &tv_rows)?;
    write_csv(&mut out, ctx.dir, "front.csv", &front_rows)?;
    write_csv_or_header(
        &mut out,
        ctx.dir,
        "violations.csv",
        &violation_rows,
        &["L", "seed", "subbox_pair", "witness_edge"],
    )?;
    Ok(out)
}

#[derive(Serialize)]
struct NashRow {
    replica: usize,
    site_x1: i32,
    site_x2: i32,
    after: f64,
    deviation: &'static str,
    events: usize,
    original_losses: u64,
    deviated_losses: u64,
    improved: u8,
}

/// `count` distinct interior ordinals drawn from the plan.
pub fn pick_agents(window: &Window, count: usize, plan: RandomnessPlan) -> Vec<usize> {
    let n = window.num_interior() as u64;
    let mut out: Vec<usize> = Vec::with_capacity(count);
    let mut k = 0;
    while out.len() < count.min(n as usize) {
        let o = plan.below(Purpose::Sample, k, 0, 0, n) as usize;
        k += 1;
        if !out.contains(&o) {
            out.push(o);
        }
    }
    out
}

fn nash(ctx: &Ctx) -> Result<Output> {
    let config = ctx.config;
    if config.strategy != crate::config::StrategySpec::Memory {
        return Err(Error::param(
            "strategy",
            "the Nash check examines the memory strategy",
        ));
    }
    let mut out = Output::default();
    let w = base_realized(ctx, &mut out)?;
    let reps: Vec<(Vec<NashRow>, bool)> = (0..config.replicas)
        .into_par_iter()
        .map(|r| -> Result<_> {
            let plan = ctx.replica_plan(r);
            let (g, f) = sample(config, &w, plan);
            let output = run(
                &g,
                &f,
                uniform_agents(&w, &config.strategy()),
                config.horizon,
                plan,
            )?;
            let after = output
                .state
                .agents()
                .iter()
                .filter_map(crate::strategy::empirical_t)
                .fold(0.0, f64::max);
            let mut rows = Vec::new();
            for o in pick_agents(&w, config.agents, plan) {
                let x = w.interior_index(o);
                let site = w.site(x);
                for n in nash_check(&output.log, &output.initial, &g, &f, x, after)? {
                    rows.push(NashRow {
                        replica: r,
                        site_x1: site.x1,
                        site_x2: site.x2,
                        after,
                        deviation: n.deviation,
                        events: n.events,
                        original_losses: n.original_losses,
                        deviated_losses: n.deviated_losses,
                        improved: n.improved as u8,
                    });
                }
            }
            Ok((rows, after > 0.9 * config.horizon))
        })
        .collect::<Result<_>>()?;
    let improved = reps
        .iter()
        .flat_map(|r| &r.0)
        .filter(|r| r.improved == 1)
        .count();
    let late = reps.iter().filter(|r| r.1).count();
    out.findings
        .push(format!("{improved} deviation(s) reduced an agent's losses"));
    if late > 0 {
        out.findings.push(format!(
            "{late} replica(s) had not stabilised before the final 10% of the horizon; their suffix is short"
        ));
    }
    let rows: Vec<&NashRow> = reps.iter().flat_map(|r| &r.0).collect();
    write_csv(&mut out, ctx.dir, "nash.csv", &rows)?;
    Ok(out)
}

#[derive(Serialize)]
struct OracleRow<'a> {
    check: &'a str,
    cases: usize,
    mismatches: usize,
    pass: u8,
    first_mismatch: &'a str,
}

fn oracle_check(ctx: &Ctx) -> Result<Output> {
    let config = ctx.config;
    let mut out = Output::default();
    let w = base_realized(ctx, &mut out)?;
    let graphs = config.replicas.max(1) as u64;
    let comparisons: Vec<Comparison> = vec![
        compare_energy(
            &w,
            config.edge_params(),
            config.symmetric,
            graphs,
            25,
            ctx.plan,
        ),
        compare_replay(
            &w,
            config.edge_params(),
            config.symmetric,
            config.coin_on_miss,
            graphs,
            ((config.horizon * w.num_interior() as f64) as usize).max(1),
            ctx.plan,
        )?,
    ];
    let rows: Vec<OracleRow> = comparisons
        .iter()
        .map(|c| OracleRow {
            check: c.name,
            cases: c.cases,
            mismatches: c.mismatches,
            pass: c.passed() as u8,
            first_mismatch: c.first_mismatch.as_deref().unwrap_or(""),
        })
        .collect();
    for c in &comparisons {
        out.checks.push(Check {
            name: c.name.to_string(),
            pass: c.passed(),
            detail: format!("{} case(s), {} mismatch(es)", c.cases, c.mismatches),
        });
    }
    write_csv(&mut out, ctx.dir, "oracle.csv", &rows)?;
    Ok(out)
}

/// Default output directory when neither the command line nor the config names one.
pub fn default_out_dir(config: &ExperimentConfig) -> PathBuf {
    config.out.clone().unwrap_or_else(|| {
        PathBuf::from(format!("runs/{}-seed{}", config.kind.name(), config.seed))
    })
}
