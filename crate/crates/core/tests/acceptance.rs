//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use lrgame::dynamics::{
    build_event_stream, init_configuration, SimState, TrajectoryLog, TrajectoryRecord,
};
use lrgame::graph::{degree_stats, rho, sample_feelings, sample_graph, EdgeParams};
use lrgame::harness::pick_agents;
use lrgame::lattice::{Frame, Spin, Window};
use lrgame::mixing::{
    centred_region, coupled_run, median_front_time, partition_subboxes, tv_estimate, GraphSource,
    MixingSetup,
};
use lrgame::observables::{
    classify_events, energy_decomposition, flips_per_window, markov_bound_check, nash_check,
    uniform_grid,
};
use lrgame::oracle::{compare_energy, compare_replay};
use lrgame::rng::RandomnessPlan;
use lrgame::strategy::{empirical_t, Strategy};
use rayon::prelude::*;

const SEEDS: u64 = 20;
const SIDE: usize = 32;
const HORIZON: f64 = 200.0;
const LADDER: [usize; 3] = [8, 16, 32];

struct Verdict {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn params() -> EdgeParams {
    EdgeParams::new(1.0, 9.0).unwrap()
}

/// Everything the fixation-type criteria need from one 32×32 run.
struct RunSummary {
    seed: u64,
    horizon: f64,
    empirical_t: Vec<f64>,
    losses_after_t: usize,
    key_violations: Vec<String>,
    radius_exceptions: Vec<(usize, u32, u32)>,
    window_flips: Vec<u64>,
    final_quartile_quiet: usize,
    n3: Vec<u64>,
    rho2: f64,
    rho3: f64,
    e: Vec<f64>,
    e2: Vec<f64>,
    sites: usize,
}

fn memory_run(symmetric: bool, seed: u64) -> RunSummary {
    let w = Window::torus(SIDE).unwrap();
    let plan = RandomnessPlan::new(if symmetric { 10_000 + seed } else { seed });
    let g = sample_graph(&w, params(), plan);
    let f = sample_feelings(&g, symmetric, plan);
    let initial = init_configuration(&w, plan);
    let stream = build_event_stream(&w, HORIZON, plan).unwrap();
    let agents = vec![Strategy::memory(false); w.num_interior()];
    let mut state = SimState::new(&g, &f, initial.clone(), agents, plan).unwrap();
    let mut log = TrajectoryLog::default();
    let mut key_violations = Vec::new();
    for ev in stream.events() {
        let rec: TrajectoryRecord = state.step(ev).unwrap();
        let memory = state
            .agent(ev.site)
            .and_then(Strategy::agent_memory)
            .unwrap();
        if let Err(e) = memory.check() {
            key_violations.push(format!(
                "seed {seed} t = {:.3} site {}: {e}",
                rec.time,
                w.site(ev.site)
            ));
        }
        log.records.push(rec);
    }
    let agents = state.agents().to_vec();
    let (report, classes) = classify_events(&log, &g, &agents, HORIZON).unwrap();
    let empirical: Vec<f64> = agents.iter().map(|a| empirical_t(a).unwrap()).collect();
    let losses_after_t = log
        .records
        .iter()
        .filter(|r| r.reward < 0 && r.time > empirical[w.ordinal(r.site).unwrap()])
        .count();
    let radius_exceptions = agents
        .iter()
        .enumerate()
        .filter_map(|(o, a)| {
            let x = w.interior_index(o);
            let r = a.agent_memory().unwrap().radius();
            let p = rho(&g, x);
            (r > p + 1).then_some((x, r, p))
        })
        .collect();
    let mut last = vec![0u64; w.num_interior()];
    for r in log
        .records
        .iter()
        .filter(|r| r.flipped && r.time > 0.75 * HORIZON)
    {
        last[w.ordinal(r.site).unwrap()] += 1;
    }
    let grid = uniform_grid(HORIZON, 401);
    let energy = energy_decomposition(&log, &initial, &g, &f, &classes, &grid).unwrap();
    let stats = degree_stats(&g);
    RunSummary {
        seed,
        horizon: HORIZON,
        empirical_t: empirical,
        losses_after_t,
        key_violations,
        radius_exceptions,
        window_flips: flips_per_window(&log, HORIZON, 4),
        final_quartile_quiet: last.iter().filter(|&&n| n == 0).count(),
        n3: report.sites.iter().map(|s| s.n3).collect(),
        rho2: stats.rho_moments[1],
        rho3: stats.rho_moments[2],
        e: energy.e,
        e2: energy.e2,
        sites: w.num_interior(),
    }
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn oracle_equivalence() -> Verdict {
    let plan = RandomnessPlan::new(7);
    let mut cases = 0;
    let mut failures = Vec::new();
    let loose = EdgeParams::new(4.0, 3.0).unwrap();
    for side in [3, 4] {
        let w = Window::torus(side).unwrap();
        for (p, symmetric) in [(params(), false), (loose, true)] {
            let energy = compare_energy(&w, p, symmetric, 50, 10, plan);
            let replay = compare_replay(&w, p, symmetric, false, 20, 50, plan).unwrap();
            for c in [energy, replay] {
                cases += c.cases;
                if !c.passed() {
                    failures.push(format!(
                        "{side}x{side} {}: {}",
                        c.name,
                        c.first_mismatch.unwrap_or_default()
                    ));
                }
            }
        }
    }
    Verdict {
        name: "oracle equivalence (3x3, 4x4 torus)",
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("{cases} cases, exact match")
        } else {
            failures.join("; ")
        },
    }
}

fn stabilisation(runs: &[RunSummary]) -> Verdict {
    let total: usize = runs.iter().map(|r| r.sites).sum();
    let finite = runs.iter().all(|r| {
        r.empirical_t
            .iter()
            .all(|t| t.is_finite() && *t <= r.horizon)
    });
    let losses: usize = runs.iter().map(|r| r.losses_after_t).sum();
    let early: usize = runs
        .iter()
        .map(|r| {
            r.empirical_t
                .iter()
                .filter(|&&t| t <= r.horizon / 2.0)
                .count()
        })
        .sum();
    let frac = early as f64 / total as f64;
    Verdict {
        name: "stabilisation, asymmetric feelings",
        pass: finite && losses == 0 && frac >= 0.95,
        detail: format!(
            "T finite: {finite}; losses after T: {losses}; T in first half: {frac:.4} (need >= 0.95)"
        ),
    }
}

fn fixation(runs: &[RunSummary]) -> Verdict {
    let total: usize = runs.iter().map(|r| r.sites).sum();
    let quiet: usize = runs.iter().map(|r| r.final_quartile_quiet).sum();
    let frac = quiet as f64 / total as f64;
    let mut windows = [0u64; 4];
    for r in runs {
        for (k, n) in r.window_flips.iter().enumerate() {
            windows[k] += n;
        }
    }
    let monotone = windows[1] >= windows[2] && windows[2] >= windows[3];
    Verdict {
        name: "fixation, symmetric feelings",
        pass: frac >= 0.90 && monotone,
        detail: format!(
            "no flips in final quartile: {frac:.4} (need >= 0.90); flips per quartile {windows:?}"
        ),
    }
}

fn markov(runs: &[RunSummary]) -> Verdict {
    let n3: Vec<u64> = runs.iter().flat_map(|r| r.n3.iter().copied()).collect();
    let rho2 = runs.iter().map(|r| r.rho2).sum::<f64>() / runs.len() as f64;
    let rho3 = runs.iter().map(|r| r.rho3).sum::<f64>() / runs.len() as f64;
    let rows = markov_bound_check(&n3, rho2, rho3, &[10.0, 20.0, 50.0]).unwrap();
    let detail = rows
        .iter()
        .map(|b| {
            format!(
                "C={}: {:.5} <= {:.5} + 3*{:.5}",
                b.threshold, b.empirical_fraction, b.markov_bound, b.standard_error
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    Verdict {
        name: "tail bound on post-stabilisation flips",
        pass: rows.iter().all(|b| b.pass),
        detail,
    }
}

fn energy_bounds(runs: &[RunSummary]) -> Verdict {
    let rho2 = runs.iter().map(|r| r.rho2).sum::<f64>() / runs.len() as f64;
    let points = runs[0].e.len();
    let pooled: Vec<f64> = (0..points)
        .map(|k| mean_se(&runs.iter().map(|r| r.e[k]).collect::<Vec<_>>()).0)
        .collect();
    let worst = pooled.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let bounded = worst <= rho2;

    let dt = runs[0].horizon / (points - 1) as f64;
    let step = (0.5 / dt).round() as usize;
    let mut lipschitz_fail = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    for p in 0..20 {
        let (k1, k2) = (p * step, (p + 1) * step);
        let diffs: Vec<f64> = runs.iter().map(|r| r.e[k2] - r.e[k1]).collect();
        let (m, se) = mean_se(&diffs);
        let excess = m.abs() - ((k2 - k1) as f64 * dt * rho2 + 3.0 * se);
        worst_excess = worst_excess.max(excess);
        if excess > 0.0 {
            lipschitz_fail += 1;
        }
    }

    let e2_max = (0..points)
        .map(|k| mean_se(&runs.iter().map(|r| r.e2[k]).collect::<Vec<_>>()).0)
        .fold(f64::NEG_INFINITY, f64::max);
    let e2_ok = e2_max <= 0.0;

    Verdict {
        name: "energy density bounds",
        pass: bounded && lipschitz_fail == 0 && e2_ok,
        detail: format!(
            "max |e| = {worst:.4} vs rho2 = {rho2:.4}; Lipschitz pairs failing {lipschitz_fail}/20 (worst excess {worst_excess:.4}); max e2 = {e2_max:.5}"
        ),
    }
}

fn strategy_invariants(runs: &[RunSummary]) -> Verdict {
    let violations: Vec<&String> = runs.iter().flat_map(|r| &r.key_violations).collect();
    let total: usize = runs.iter().map(|r| r.sites).sum();
    let exceptions: usize = runs.iter().map(|r| r.radius_exceptions.len()).sum();
    for r in runs {
        for (x, radius, p) in &r.radius_exceptions {
            println!(
                "    radius exception: seed {} site {x}: radius {radius}, rho {p}",
                r.seed
            );
        }
    }
    for v in violations.iter().take(5) {
        println!("    record set violation: {v}");
    }
    let frac = 1.0 - exceptions as f64 / total as f64;
    Verdict {
        name: "record-set invariants",
        pass: violations.is_empty() && frac >= 0.99,
        detail: format!(
            "{} key violation(s); radius <= rho + 1 for {frac:.4} of agents ({exceptions} exception(s))",
            violations.len()
        ),
    }
}

fn mixing_suite() -> Verdict {
    let plan = RandomnessPlan::new(2024);
    let mut zero_ok = true;
    let mut rows = Vec::new();
    for side in LADDER {
        let partition = partition_subboxes(side, 13.0 / 42.0).unwrap();
        let plus = Frame::uniform(side, 2, Spin::Plus).unwrap();
        let minus = Frame::uniform(side, 2, Spin::Minus).unwrap();
        let shape = Window::pinned(side, plus.clone()).unwrap();
        let region = centred_region(&shape, 2).unwrap();
        let setup = |second: &Frame| MixingSetup {
            window: shape.clone(),
            first: plus.clone(),
            second: second.clone(),
            region: region.clone(),
            t: 5.0,
            horizon: 5.0,
            strategy: Strategy::memory(false),
            graph: GraphSource::Sampled {
                params: params(),
                symmetric: false,
            },
            partition,
        };
        let same = setup(&plus).run(200, plan).unwrap();
        let tv_same = tv_estimate(&same, region.len(), 1000, plan).unwrap();
        zero_ok &= tv_same.estimate == 0.0;
        let diff = setup(&minus).run(200, plan).unwrap();
        let tv = tv_estimate(&diff, region.len(), 1000, plan).unwrap();
        rows.push((side, tv, median_front_time(&diff)));
    }
    let tv_ok = rows
        .windows(2)
        .all(|p| p[1].1.estimate <= p[0].1.estimate + p[0].1.half_width + p[1].1.half_width);
    let key = |m: Option<f64>| m.unwrap_or(f64::INFINITY);
    let front_ok = rows.windows(2).all(|p| key(p[1].2) > key(p[0].2));
    let detail = rows
        .iter()
        .map(|(l, tv, m)| {
            format!(
                "L={l}: TV {:.4} +- {:.4}, median front {}",
                tv.estimate,
                tv.half_width,
                m.map_or("never".into(), |m| format!("{m:.3}"))
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    Verdict {
        name: "spatial mixing along the ladder",
        pass: zero_ok && tv_ok && front_ok,
        detail: format!("identical frames give 0: {zero_ok}; TV non-increasing: {tv_ok}; front increasing: {front_ok}; {detail}"),
    }
}

fn coupling_invariants() -> Verdict {
    let plan = RandomnessPlan::new(99);
    let times: Vec<f64> = (0..=40).map(|k| k as f64 * 0.25).collect();
    let mut runs = 0;
    let mut failures = Vec::new();
    for side in LADDER {
        let partition = partition_subboxes(side, 13.0 / 42.0).unwrap();
        let plus = Frame::uniform(side, 2, Spin::Plus).unwrap();
        let minus = Frame::uniform(side, 2, Spin::Minus).unwrap();
        let w = Window::pinned(side, plus.clone()).unwrap();
        let results: Vec<Option<String>> = (0..50u64)
            .into_par_iter()
            .map(|r| {
                let p = plan.replica(r);
                let g = sample_graph(&w, params(), p);
                let f = sample_feelings(&g, r % 2 == 0, p);
                let agents = vec![Strategy::memory(false); w.num_interior()];
                let initial = init_configuration(&w, p);
                let run = coupled_run(
                    &g, &f, &plus, &minus, &agents, &initial, &partition, 10.0, &times, p,
                )
                .map_err(|e| e.to_string());
                let run = match run {
                    Ok(run) => run,
                    Err(e) => return Some(format!("L={side} replica {r}: {e}")),
                };
                if let Err(e) = run.check() {
                    return Some(format!("L={side} replica {r}: {e}"));
                }
                for x in w.interior_indices() {
                    let mut was = (false, false);
                    for &t in &times {
                        let now = (run.nu(x, t), run.nu_tilde(x, t));
                        if (now.0 && !now.1) || (was.0 && !now.0) || (was.1 && !now.1) {
                            return Some(format!("L={side} replica {r} site {x} t = {t}"));
                        }
                        was = now;
                    }
                }
                None
            })
            .collect();
        runs += results.len();
        failures.extend(results.into_iter().flatten());
    }
    Verdict {
        name: "coupling indicators",
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("{runs} coupled runs, domination and absorption hold at every recorded time")
        } else {
            failures.join("; ")
        },
    }
}

fn graph_law() -> Verdict {
    let w = Window::torus(SIDE).unwrap();
    let mut parts = Vec::new();
    let mut pass = true;
    for c in [1.0, 100.0] {
        let params = EdgeParams::new(c, 9.0).unwrap();
        let mut counts = [(0u64, 0u64); 3];
        let mut seed = 0;
        while counts.iter().any(|&(n, _)| n < 100_000) {
            let g = sample_graph(&w, params, RandomnessPlan::new(500 + seed));
            seed += 1;
            for a in 0..w.num_sites() {
                for b in a + 1..w.num_sites() {
                    let d = w.distance_idx(a, b);
                    if (2..=4).contains(&d) {
                        let slot = &mut counts[d as usize - 2];
                        if slot.0 < 100_000 {
                            slot.0 += 1;
                            slot.1 += g.linked(a, b) as u64;
                        }
                    }
                }
            }
        }
        for (i, &(n, k)) in counts.iter().enumerate() {
            let d = i as u32 + 2;
            let p = params.probability_at(d);
            let freq = k as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            let ok = (freq - p).abs() <= 3.0 * se;
            pass &= ok;
            parts.push(format!("C={c} d={d}: {freq:.6} vs {p:.6}"));
        }
    }
    Verdict {
        name: "edge law at d = 2, 3, 4",
        pass,
        detail: parts.join("; "),
    }
}

fn nash() -> Verdict {
    let w = Window::torus(16).unwrap();
    let results: Vec<(usize, usize, usize, usize)> = (0..10u64)
        .into_par_iter()
        .map(|s| {
            let plan = RandomnessPlan::new(3000 + s);
            let g = sample_graph(&w, params(), plan);
            let f = sample_feelings(&g, false, plan);
            let agents = vec![Strategy::memory(false); w.num_interior()];
            let out = lrgame::dynamics::run(&g, &f, agents, HORIZON, plan).unwrap();
            let mut tested = (0, 0, 0, 0);
            for o in pick_agents(&w, 5, plan) {
                let x = w.interior_index(o);
                let after = empirical_t(&out.state.agents()[o]).unwrap();
                for n in nash_check(&out.log, &out.initial, &g, &f, x, after).unwrap() {
                    tested.0 += 1;
                    tested.1 += n.improved as usize;
                    tested.2 += n.events;
                    tested.3 += (n.original_losses != 0) as usize;
                }
            }
            tested
        })
        .collect();
    let (cases, improved, events, lossy) = results.iter().fold((0, 0, 0, 0), |a, r| {
        (a.0 + r.0, a.1 + r.1, a.2 + r.2, a.3 + r.3)
    });
    Verdict {
        name: "no profitable deviation after stabilisation",
        pass: improved == 0 && lossy == 0,
        detail: format!("{cases} deviations over {events} replayed arrivals; {improved} improved, {lossy} baselines with losses"),
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let start = Instant::now();
    let mut verdicts = vec![oracle_equivalence()];

    let asym: Vec<RunSummary> = (0..SEEDS)
        .into_par_iter()
        .map(|s| memory_run(false, s))
        .collect();
    let sym: Vec<RunSummary> = (0..SEEDS)
        .into_par_iter()
        .map(|s| memory_run(true, s))
        .collect();
    verdicts.push(stabilisation(&asym));
    verdicts.push(fixation(&sym));
    verdicts.push(markov(&sym));
    verdicts.push(energy_bounds(&sym));
    let all: Vec<RunSummary> = asym.into_iter().chain(sym).collect();
    verdicts.push(strategy_invariants(&all));
    verdicts.push(mixing_suite());
    verdicts.push(coupling_invariants());
    verdicts.push(graph_law());
    verdicts.push(nash());

    let mut failed = 0;
    for v in &verdicts {
        println!(
            "{} {}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.name,
            v.detail
        );
        failed += !v.pass as usize;
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        verdicts.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
