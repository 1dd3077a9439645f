//! Energy, fixation statistics and replay checks computed from finished runs.
//!
//! The energy of a region is `H_Λ(σ) = −Σ_{u∈Λ} h̃_u(σ)` with the local field
//! `h̃_u(σ) = Σ_{v linked to u} j(u, v) σ_u σ_v`. Events are classified
//! retrospectively against each agent's empirical stabilisation time `T_x`:
//!
//! * `N1`: at or before `T_x`, the pattern was known and the agent lost;
//! * `N2`: any other arrival at or before `T_x`;
//! * `N3`: after `T_x`, the agent changed its spin.

use crate::dynamics::{reward, Configuration, TrajectoryLog, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::graph::{FeelingMap, Graph};
use crate::lattice::Spin;
use crate::strategy::{empirical_t, Strategy};

/// `h̃_u(σ)`.
pub fn local_field(u: usize, config: &Configuration, graph: &Graph, feelings: &FeelingMap) -> i32 {
    let su = config.get(u).value();
    graph
        .neighbours(u)
        .iter()
        .zip(feelings.row(u))
        .map(|(&v, &j)| j as i32 * su * config.get(v).value())
        .sum()
}

/// `H_Λ(σ)` over the given sites.
pub fn energy(
    region: &[usize],
    config: &Configuration,
    graph: &Graph,
    feelings: &FeelingMap,
) -> i64 {
    -region
        .iter()
        .map(|&u| local_field(u, config, graph, feelings) as i64)
        .sum::<i64>()
}

/// Energy of the window's interior.
pub fn window_energy(config: &Configuration, graph: &Graph, feelings: &FeelingMap) -> i64 {
    let region: Vec<usize> = graph.window().interior_indices().collect();
    energy(&region, config, graph, feelings)
}

/// Change of the interior energy if the interior site `x` flips.
pub fn flip_delta(x: usize, config: &Configuration, graph: &Graph, feelings: &FeelingMap) -> i64 {
    let w = graph.window();
    let sx = config.get(x).value() as i64;
    let mut sum = 0i64;
    for (&v, &j) in graph.neighbours(x).iter().zip(feelings.row(x)) {
        let sv = config.get(v).value() as i64;
        sum += j as i64 * sv;
        if w.is_interior_index(v) {
            sum += feelings.get(graph, v, x) as i64 * sv;
        }
    }
    2 * sx * sum
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventClass {
    N1,
    N2,
    N3,
    /// After `T_x` without a spin change.
    Quiet,
}

/// Per-site fixation statistics.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct SiteFixation {
    pub site: usize,
    pub n1: u64,
    pub n2: u64,
    pub n3: u64,
    /// Number of spin changes over the run.
    pub flips: u64,
    pub last_flip: Option<f64>,
    pub empirical_t: f64,
    /// `T_x` falls in the final 10% of the horizon.
    pub unstabilized: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixationReport {
    pub horizon: f64,
    /// Interior sites in ordinal order.
    pub sites: Vec<SiteFixation>,
}

impl FixationReport {
    pub fn check(&self) -> Result<()> {
        for s in &self.sites {
            if s.flips > s.n1 + s.n2 + s.n3 {
                return Err(Error::invariant(format!(
                    "site {}: {} flips exceed |N1|+|N2|+|N3| = {}",
                    s.site,
                    s.flips,
                    s.n1 + s.n2 + s.n3
                )));
            }
        }
        Ok(())
    }
}

/// Classifies every logged event. `agents` are the final strategies of the run.
pub fn classify_events(
    log: &TrajectoryLog,
    graph: &Graph,
    agents: &[Strategy],
    horizon: f64,
) -> Result<(FixationReport, Vec<EventClass>)> {
    let w = graph.window();
    let mut sites = Vec::with_capacity(agents.len());
    for (ordinal, agent) in agents.iter().enumerate() {
        let t = empirical_t(agent).ok_or_else(|| {
            Error::invariant("fixation statistics need memory strategies at every site")
        })?;
        sites.push(SiteFixation {
            site: w.interior_index(ordinal),
            n1: 0,
            n2: 0,
            n3: 0,
            flips: 0,
            last_flip: None,
            empirical_t: t,
            unstabilized: t > 0.9 * horizon,
        });
    }
    let mut classes = Vec::with_capacity(log.len());
    for r in &log.records {
        let ordinal = w
            .ordinal(r.site)
            .ok_or_else(|| Error::invariant("logged event at a frame site"))?;
        let s = &mut sites[ordinal];
        let class = if r.time <= s.empirical_t {
            if r.known_pattern && r.reward < 0 {
                s.n1 += 1;
                EventClass::N1
            } else {
                s.n2 += 1;
                EventClass::N2
            }
        } else if r.flipped {
            s.n3 += 1;
            EventClass::N3
        } else {
            EventClass::Quiet
        };
        if r.flipped {
            s.flips += 1;
            s.last_flip = Some(r.time);
        }
        classes.push(class);
    }
    let report = FixationReport { horizon, sites };
    report.check()?;
    Ok((report, classes))
}

/// Interior energy change at each logged event.
pub fn event_deltas(
    log: &TrajectoryLog,
    initial: &Configuration,
    graph: &Graph,
    feelings: &FeelingMap,
) -> Vec<i64> {
    let mut config = initial.clone();
    log.records
        .iter()
        .map(|r| {
            let d = if r.flipped {
                flip_delta(r.site, &config, graph, feelings)
            } else {
                0
            };
            config.set(r.site, r.decision);
            d
        })
        .collect()
}

/// Energy density and its decomposition by event class, sampled on a time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyReport {
    pub sites: usize,
    pub times: Vec<f64>,
    pub energy: Vec<i64>,
    /// Initial energy density.
    pub e0: f64,
    pub e: Vec<f64>,
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    pub e3: Vec<f64>,
    /// N3 events whose energy change was not a decrease of at least one unit.
    pub n3_without_decrease: Vec<(f64, usize, i64)>,
}

impl EnergyReport {
    pub fn check(&self) -> Result<()> {
        for k in 0..self.times.len() {
            let sum = self.e0 + self.e1[k] + self.e2[k] + self.e3[k];
            if (sum - self.e[k]).abs() > 1e-9 {
                return Err(Error::invariant(format!(
                    "energy decomposition does not add up at t = {}",
                    self.times[k]
                )));
            }
        }
        Ok(())
    }
}

/// `points` equally spaced times from 0 to `horizon` inclusive.
pub fn uniform_grid(horizon: f64, points: usize) -> Vec<f64> {
    assert!(points >= 2);
    (0..points)
        .map(|k| horizon * k as f64 / (points - 1) as f64)
        .collect()
}

pub fn energy_decomposition(
    log: &TrajectoryLog,
    initial: &Configuration,
    graph: &Graph,
    feelings: &FeelingMap,
    classes: &[EventClass],
    grid: &[f64],
) -> Result<EnergyReport> {
    if classes.len() != log.len() {
        return Err(Error::invariant("event classes do not match the log"));
    }
    let n = graph.window().num_interior();
    let nf = n as f64;
    let h0 = window_energy(initial, graph, feelings);
    let deltas = event_deltas(log, initial, graph, feelings);
    let mut acc = [0i64; 3];
    let mut h = h0;
    let mut report = EnergyReport {
        sites: n,
        times: grid.to_vec(),
        energy: Vec::with_capacity(grid.len()),
        e0: h0 as f64 / nf,
        e: Vec::with_capacity(grid.len()),
        e1: Vec::with_capacity(grid.len()),
        e2: Vec::with_capacity(grid.len()),
        e3: Vec::with_capacity(grid.len()),
        n3_without_decrease: Vec::new(),
    };
    let mut k = 0;
    let push = |report: &mut EnergyReport, h: i64, acc: &[i64; 3]| {
        report.energy.push(h);
        report.e.push(h as f64 / nf);
        report.e1.push(acc[0] as f64 / nf);
        report.e2.push(acc[1] as f64 / nf);
        report.e3.push(acc[2] as f64 / nf);
    };
    for ((r, &d), &class) in log.records.iter().zip(&deltas).zip(classes) {
        while k < grid.len() && grid[k] < r.time {
            push(&mut report, h, &acc);
            k += 1;
        }
        h += d;
        match class {
            EventClass::N1 => acc[0] += d,
            EventClass::N2 => acc[1] += d,
            EventClass::N3 => {
                acc[2] += d;
                if feelings.is_symmetric() && d > -1 {
                    report.n3_without_decrease.push((r.time, r.site, d));
                }
            }
            EventClass::Quiet => debug_assert_eq!(d, 0),
        }
    }
    while k < grid.len() {
        push(&mut report, h, &acc);
        k += 1;
    }
    report.check()?;
    Ok(report)
}

/// Spin changes per equal-length time window, summed over sites.
pub fn flips_per_window(log: &TrajectoryLog, horizon: f64, windows: usize) -> Vec<u64> {
    let mut counts = vec![0u64; windows];
    for r in log.records.iter().filter(|r| r.flipped) {
        let k = ((r.time / horizon) * windows as f64) as usize;
        counts[k.min(windows - 1)] += 1;
    }
    counts
}

/// One row of the tail-bound comparison.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct BoundRow {
    pub threshold: f64,
    pub empirical_fraction: f64,
    pub standard_error: f64,
    pub markov_bound: f64,
    pub pass: bool,
}

/// Compares the fraction of sites with `|N3| > C` against `(E ρ² + E ρ³) / C`.
/// `n3` holds one count per site; `rho2`, `rho3` are empirical moments.
pub fn markov_bound_check(
    n3: &[u64],
    rho2: f64,
    rho3: f64,
    thresholds: &[f64],
) -> Result<Vec<BoundRow>> {
    if n3.is_empty() {
        return Err(Error::param("sites", "no sites to check"));
    }
    let n = n3.len() as f64;
    thresholds
        .iter()
        .map(|&c| {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::param(
                    "threshold",
                    format!("must be positive, got {c}"),
                ));
            }
            let f = n3.iter().filter(|&&k| k as f64 > c).count() as f64 / n;
            let se = (f * (1.0 - f) / n).sqrt();
            let bound = (rho2 + rho3) / c;
            Ok(BoundRow {
                threshold: c,
                empirical_fraction: f,
                standard_error: se,
                markov_bound: bound,
                pass: f <= bound + 3.0 * se,
            })
        })
        .collect()
}

/// A unilateral change of one agent's decisions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Deviation {
    Constant(Spin),
    FlipOriginal,
}

impl Deviation {
    pub const ALL: [Deviation; 3] = [
        Deviation::Constant(Spin::Plus),
        Deviation::Constant(Spin::Minus),
        Deviation::FlipOriginal,
    ];

    fn apply(self, original: Spin) -> Spin {
        match self {
            Deviation::Constant(s) => s,
            Deviation::FlipOriginal => original.flipped(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Deviation::Constant(Spin::Plus) => "constant+1",
            Deviation::Constant(Spin::Minus) => "constant-1",
            Deviation::FlipOriginal => "flip",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct NashOutcome {
    pub agent: usize,
    pub deviation: &'static str,
    pub events: usize,
    pub original_losses: u64,
    pub deviated_losses: u64,
    pub improved: bool,
}

/// Configuration after all logged events with `time <= t`.
pub fn configuration_at(log: &TrajectoryLog, initial: &Configuration, t: f64) -> Configuration {
    let mut c = initial.clone();
    for r in log.records.iter().take_while(|r| r.time <= t) {
        c.set(r.site, r.decision);
    }
    c
}

fn suffix(log: &TrajectoryLog, after: f64) -> &[TrajectoryRecord] {
    let start = log.records.partition_point(|r| r.time <= after);
    &log.records[start..]
}

/// Replays the log after `after` with `agent`'s decisions replaced by each
/// deviation, holding every other agent's decisions and all event times fixed.
/// A first replay without deviation must reproduce the logged rewards exactly.
pub fn nash_check(
    log: &TrajectoryLog,
    initial: &Configuration,
    graph: &Graph,
    feelings: &FeelingMap,
    agent: usize,
    after: f64,
) -> Result<Vec<NashOutcome>> {
    let start = configuration_at(log, initial, after);
    let tail = suffix(log, after);

    let mut c = start.clone();
    for r in tail {
        if c.get(r.site) != r.previous {
            return Err(Error::invariant(format!(
                "replay mismatch: spin before event at t = {}",
                r.time
            )));
        }
        c.set(r.site, r.decision);
        if reward(r.site, &c, graph, feelings) != r.reward {
            return Err(Error::invariant(format!(
                "replay mismatch: reward at t = {}",
                r.time
            )));
        }
    }

    let own: Vec<&TrajectoryRecord> = tail.iter().filter(|r| r.site == agent).collect();
    let original_losses = own.iter().filter(|r| r.reward < 0).count() as u64;
    Ok(Deviation::ALL
        .iter()
        .map(|&dev| {
            let mut c = start.clone();
            let mut losses = 0;
            for r in tail {
                if r.site == agent {
                    c.set(r.site, dev.apply(r.decision));
                    losses += (reward(r.site, &c, graph, feelings) < 0) as u64;
                } else {
                    c.set(r.site, r.decision);
                }
            }
            NashOutcome {
                agent,
                deviation: dev.name(),
                events: own.len(),
                original_losses,
                deviated_losses: losses,
                improved: losses < original_losses,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{run, uniform_agents};
    use crate::graph::{sample_feelings, sample_graph, EdgeParams};
    use crate::lattice::{Site, Window};
    use crate::rng::RandomnessPlan;

    fn friends_torus(l: usize) -> (Graph, FeelingMap) {
        let w = Window::torus(l).unwrap();
        let g = sample_graph(
            &w,
            EdgeParams::new(0.0, 9.0).unwrap(),
            RandomnessPlan::new(0),
        );
        let f = FeelingMap::from_fn(&g, true, |_, _| 1).unwrap();
        (g, f)
    }

    #[test]
    fn local_field_examples() {
        let (g, f) = friends_torus(3);
        let w = g.window();
        let mut c = Configuration::uniform(w, Spin::Plus);
        for u in w.interior_indices() {
            assert_eq!(local_field(u, &c, &g, &f), 4);
        }
        let u = w.index(Site::new(1, 1)).unwrap();
        c.set(u, Spin::Minus);
        assert_eq!(local_field(u, &c, &g, &f), -4);
        for (d1, d2) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            let v = w.offset(u, d1, d2).unwrap();
            // three aligned neighbours, one anti-aligned
            assert_eq!(local_field(v, &c, &g, &f), 2);
        }
    }

    #[test]
    fn energy_examples() {
        let (g, f) = friends_torus(3);
        let w = g.window();
        let mut c = Configuration::uniform(w, Spin::Plus);
        assert_eq!(window_energy(&c, &g, &f), -36);
        c.set(4, Spin::Minus);
        // brute force: flipped site −4, its four neighbours 2 each, the other four 4 each
        assert_eq!(window_energy(&c, &g, &f), -(-4 + 4 * 2 + 4 * 4));
        assert_eq!(window_energy(&c, &g, &f), -20);
        assert_eq!(energy(&[], &c, &g, &f), 0);
    }

    #[test]
    fn flip_delta_matches_recomputation() {
        let w = Window::torus(5).unwrap();
        let g = sample_graph(
            &w,
            EdgeParams::new(100.0, 9.0).unwrap(),
            RandomnessPlan::new(4),
        );
        for symmetric in [true, false] {
            let f = sample_feelings(&g, symmetric, RandomnessPlan::new(6));
            let c = crate::dynamics::init_configuration(&w, RandomnessPlan::new(9));
            for x in w.interior_indices() {
                let mut c2 = c.clone();
                c2.set(x, c.get(x).flipped());
                let brute = window_energy(&c2, &g, &f) - window_energy(&c, &g, &f);
                assert_eq!(flip_delta(x, &c, &g, &f), brute);
                if symmetric {
                    assert_eq!(brute, 4 * local_field(x, &c, &g, &f) as i64);
                }
            }
        }
    }

    fn random_torus(symmetric: bool, seed: u64) -> (Graph, FeelingMap) {
        let w = Window::torus(10).unwrap();
        let g = sample_graph(&w, EdgeParams::default(), RandomnessPlan::new(seed));
        let f = sample_feelings(&g, symmetric, RandomnessPlan::new(seed));
        (g, f)
    }

    #[test]
    fn classification_and_decomposition_are_consistent() {
        let (g, f) = random_torus(true, 3);
        let agents = uniform_agents(g.window(), &Strategy::memory(false));
        let out = run(&g, &f, agents, 40.0, RandomnessPlan::new(3)).unwrap();
        let (report, classes) = classify_events(&out.log, &g, out.state.agents(), 40.0).unwrap();
        for r in out.log.records.iter().zip(&classes) {
            match r.1 {
                EventClass::N1 => assert!(r.0.known_pattern && r.0.reward < 0),
                EventClass::N3 => assert!(r.0.flipped),
                EventClass::Quiet => assert!(!r.0.flipped && r.0.reward >= 0),
                EventClass::N2 => {}
            }
        }
        // flips counted by class equal the logged spin differences
        let mut c = out.initial.clone();
        let mut flips = vec![0u64; g.window().num_sites()];
        for r in &out.log.records {
            if c.get(r.site) != r.decision {
                flips[r.site] += 1;
            }
            c.set(r.site, r.decision);
        }
        for s in &report.sites {
            assert_eq!(s.flips, flips[s.site]);
        }
        let grid = uniform_grid(40.0, 81);
        let e = energy_decomposition(&out.log, &out.initial, &g, &f, &classes, &grid).unwrap();
        let last = *e.energy.last().unwrap();
        assert_eq!(last, window_energy(out.state.config(), &g, &f));
    }

    #[test]
    fn zero_flip_run_has_flat_energy() {
        let (g, f) = friends_torus(4);
        let agents = uniform_agents(g.window(), &Strategy::memory(false));
        let out = run(&g, &f, agents, 1e-9, RandomnessPlan::new(0)).unwrap();
        let (_, classes) = classify_events(&out.log, &g, out.state.agents(), 1e-9).unwrap();
        let e = energy_decomposition(
            &out.log,
            &out.initial,
            &g,
            &f,
            &classes,
            &uniform_grid(1e-9, 5),
        )
        .unwrap();
        assert!(e.e.iter().all(|&v| v == e.e0));
        assert!(e.e1.iter().chain(&e.e2).chain(&e.e3).all(|&v| v == 0.0));
    }

    #[test]
    fn classify_rejects_baselines() {
        let (g, f) = friends_torus(3);
        let agents = uniform_agents(
            g.window(),
            &Strategy::baseline(crate::strategy::BaselineKind::Coin),
        );
        let out = run(&g, &f, agents, 2.0, RandomnessPlan::new(0)).unwrap();
        assert!(classify_events(&out.log, &g, out.state.agents(), 2.0).is_err());
    }

    #[test]
    fn markov_bound_edges() {
        assert!(markov_bound_check(&[1, 2], 1.0, 1.0, &[0.0]).is_err());
        let rows = markov_bound_check(&[0, 5, 100], 1.0, 1.0, &[1e12]).unwrap();
        assert_eq!(rows[0].empirical_fraction, 0.0);
        assert!(rows[0].markov_bound < 1e-11);
        let rows = markov_bound_check(&[0, 5, 100], 1.0, 1.0, &[10.0]).unwrap();
        assert!((rows[0].empirical_fraction - 1.0 / 3.0).abs() < 1e-12);
        assert!((rows[0].markov_bound - 0.2).abs() < 1e-12);
    }

    #[test]
    fn nash_trivial_cases() {
        // all-zero rewards: every site's linked sum vanishes whatever it plays
        let w = Window::torus(4).unwrap();
        let g = sample_graph(
            &w,
            EdgeParams::new(0.0, 9.0).unwrap(),
            RandomnessPlan::new(0),
        );
        let f = FeelingMap::from_fn(&g, false, |x, y| {
            let (a, b) = (w.site(x), w.site(y));
            // friends along x1, enemies along x2
            if a.x1 == b.x1 {
                -1
            } else {
                1
            }
        })
        .unwrap();
        let initial = Configuration::uniform(&w, Spin::Plus);
        let agents = uniform_agents(
            &w,
            &Strategy::baseline(crate::strategy::BaselineKind::Constant(Spin::Plus)),
        );
        let out = crate::dynamics::run_from(
            &g,
            &f,
            agents,
            initial.clone(),
            10.0,
            RandomnessPlan::new(1),
        )
        .unwrap();
        assert!(out.log.records.iter().all(|r| r.reward == 0));
        for o in nash_check(&out.log, &initial, &g, &f, 5, 2.0).unwrap() {
            assert_eq!(o.original_losses, 0);
            assert_eq!(o.deviated_losses, 0);
            assert!(!o.improved);
        }
    }

    #[test]
    fn nash_detects_tampered_log() {
        let (g, f) = random_torus(false, 2);
        let agents = uniform_agents(g.window(), &Strategy::memory(false));
        let out = run(&g, &f, agents, 10.0, RandomnessPlan::new(2)).unwrap();
        let mut log = out.log.clone();
        let k = log.len() / 2;
        log.records[k].reward = if log.records[k].reward == 1 { -1 } else { 1 };
        assert!(nash_check(&log, &out.initial, &g, &f, log.records[k].site, 0.0).is_err());
        assert!(nash_check(&out.log, &out.initial, &g, &f, log.records[k].site, 0.0).is_ok());
    }

    #[test]
    fn window_flip_counts() {
        let (g, f) = friends_torus(4);
        let agents = uniform_agents(
            g.window(),
            &Strategy::baseline(crate::strategy::BaselineKind::Coin),
        );
        let out = run(&g, &f, agents, 8.0, RandomnessPlan::new(0)).unwrap();
        let counts = flips_per_window(&out.log, 8.0, 4);
        assert_eq!(
            counts.iter().sum::<u64>(),
            out.log.records.iter().filter(|r| r.flipped).count() as u64
        );
    }
}
