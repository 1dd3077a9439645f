//! Slow, direct reference implementations used to cross-check the fast paths.
//!
//! Everything here works on coordinates and explicit edge lists, scans
//! linearly instead of using adjacency lists, and keeps agent memories as
//! plain vectors. The only shared input is the edge list and the feelings.
//! The `compare_*` functions at the end run both sides on the same inputs.

use std::collections::HashMap;

use crate::dynamics::{build_event_stream, init_configuration, reward, SimState};
use crate::error::{Error, Result};
use crate::graph::{sample_feelings, sample_graph, EdgeParams, FeelingMap, Graph};
use crate::lattice::{Boundary, Site, Spin, Window};
use crate::observables;
use crate::rng::RandomnessPlan;
use crate::strategy::Strategy;

/// A window with its edges and feelings spelled out.
#[derive(Clone, Debug)]
pub struct ReferenceSystem {
    side: i32,
    width: i32,
    wrap: bool,
    /// `(x, y, j(x, y), j(y, x))` for every edge.
    edges: Vec<(Site, Site, i8, i8)>,
    frame: Vec<(Site, Spin)>,
}

impl ReferenceSystem {
    pub fn from_graph(graph: &Graph, feelings: &FeelingMap) -> Self {
        let w = graph.window();
        let edges = graph
            .edges()
            .map(|(a, b)| {
                (
                    w.site(a),
                    w.site(b),
                    feelings.get(graph, a, b),
                    feelings.get(graph, b, a),
                )
            })
            .collect();
        let frame = match w.boundary() {
            Boundary::Pinned(f) => w
                .frame_indices()
                .map(|i| w.site(i))
                .zip(f.spins().iter().copied())
                .collect(),
            _ => Vec::new(),
        };
        Self {
            side: w.side() as i32,
            width: w.frame_width() as i32,
            wrap: matches!(w.boundary(), Boundary::Torus),
            edges,
            frame,
        }
    }

    pub fn interior(&self) -> Vec<Site> {
        let mut v = Vec::new();
        for x1 in 0..self.side {
            for x2 in 0..self.side {
                v.push(Site::new(x1, x2));
            }
        }
        v
    }

    /// Frame spins, to be merged into a configuration.
    pub fn frame(&self) -> &[(Site, Spin)] {
        &self.frame
    }

    fn locate(&self, s: Site) -> Option<Site> {
        if self.wrap {
            return Some(Site::new(
                s.x1.rem_euclid(self.side),
                s.x2.rem_euclid(self.side),
            ));
        }
        let lo = -self.width;
        let hi = self.side + self.width;
        (s.x1 >= lo && s.x1 < hi && s.x2 >= lo && s.x2 < hi).then_some(s)
    }

    /// Sum over every edge end in `region` of `−j σ σ`.
    pub fn energy(&self, region: &[Site], config: &HashMap<Site, Spin>) -> i64 {
        let mut h = 0i64;
        for &(a, b, jab, jba) in &self.edges {
            let prod = (config[&a].value() * config[&b].value()) as i64;
            if region.contains(&a) {
                h -= jab as i64 * prod;
            }
            if region.contains(&b) {
                h -= jba as i64 * prod;
            }
        }
        h
    }

    pub fn reward(&self, x: Site, config: &HashMap<Site, Spin>) -> i8 {
        let mut sum = 0i32;
        for &(a, b, jab, jba) in &self.edges {
            if a == x {
                sum += jab as i32 * config[&b].value();
            } else if b == x {
                sum += jba as i32 * config[&a].value();
            }
        }
        (config[&x].value() * sum).signum() as i8
    }

    /// Spins on the L1 ball of radius `r` around `x`, lexicographic in the
    /// offset, with 0 for cells outside the grid.
    pub fn pattern(&self, x: Site, r: u32, config: &HashMap<Site, Spin>) -> Vec<i8> {
        let r = r as i32;
        let mut out = Vec::new();
        for d1 in -r..=r {
            for d2 in -r..=r {
                if d1.abs() + d2.abs() > r {
                    continue;
                }
                out.push(match self.locate(Site::new(x.x1 + d1, x.x2 + d2)) {
                    Some(y) => config[&y].value() as i8,
                    None => 0,
                });
            }
        }
        out
    }
}

/// A memory-strategy agent with a linear record list.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct NaiveAgent {
    /// `(radius, pattern, decision, reward)` in insertion order.
    pub records: Vec<(u32, Vec<i8>, Spin, i8)>,
    pub last: Option<Spin>,
}

impl NaiveAgent {
    pub fn radius(&self) -> u32 {
        self.records.last().map_or(0, |r| r.0)
    }

    /// Plays one arrival: decides, applies the decision to `config`, reads the
    /// reward and updates the records. Returns `(decision, reward)`.
    pub fn play(
        &mut self,
        system: &ReferenceSystem,
        x: Site,
        config: &mut HashMap<Site, Spin>,
        coin: Spin,
        coin_on_miss: bool,
    ) -> Result<(Spin, i8)> {
        let Some(previous) = self.last else {
            let p = system.pattern(x, 1, config);
            config.insert(x, coin);
            let h = system.reward(x, config);
            self.push(1, p, coin, h)?;
            self.last = Some(coin);
            return Ok((coin, h));
        };
        let m = self.radius();
        let current = system.pattern(x, m, config);
        let hit = self
            .records
            .iter()
            .find(|r| r.0 == m && r.1 == current)
            .map(|r| (r.2, r.3));
        let result = match hit {
            Some((u, h)) => {
                let larger = system.pattern(x, m + 1, config);
                let d = if h < 0 { u.flipped() } else { u };
                config.insert(x, d);
                let h2 = system.reward(x, config);
                if h2 < 0 {
                    self.push(m + 1, larger, d, h2)?;
                }
                (d, h2)
            }
            None => {
                let d = if coin_on_miss { coin } else { previous };
                config.insert(x, d);
                let h2 = system.reward(x, config);
                self.push(m, current, d, h2)?;
                (d, h2)
            }
        };
        self.last = Some(result.0);
        Ok(result)
    }

    fn push(&mut self, r: u32, p: Vec<i8>, u: Spin, h: i8) -> Result<()> {
        if self.records.iter().any(|q| q.0 == r && q.1 == p) {
            return Err(Error::invariant("reference agent saw a duplicate pattern"));
        }
        self.records.push((r, p, u, h));
        Ok(())
    }
}

/// One step of the reference simulation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceStep {
    pub time: f64,
    pub site: Site,
    pub decision: Spin,
    pub reward: i8,
}

/// Per-step record, final agents and final configuration of a reference run.
pub type ReferenceRun = (
    Vec<ReferenceStep>,
    HashMap<Site, NaiveAgent>,
    HashMap<Site, Spin>,
);

/// Plays `events` `(time, site, coin)` in order, every interior agent using
/// the memory strategy.
pub fn simulate(
    system: &ReferenceSystem,
    initial: HashMap<Site, Spin>,
    events: &[(f64, Site, Spin)],
    coin_on_miss: bool,
) -> Result<ReferenceRun> {
    let mut config = initial;
    let mut agents: HashMap<Site, NaiveAgent> = HashMap::new();
    let mut steps = Vec::with_capacity(events.len());
    for &(time, site, coin) in events {
        let agent = agents.entry(site).or_default();
        let (decision, reward) = agent.play(system, site, &mut config, coin, coin_on_miss)?;
        steps.push(ReferenceStep {
            time,
            site,
            decision,
            reward,
        });
    }
    Ok((steps, agents, config))
}

fn poisson_pmf(lambda: f64, k: usize) -> f64 {
    let mut p = (-lambda).exp();
    for i in 1..=k {
        p *= lambda / i as f64;
    }
    p
}

/// Exact law of the interior configuration at time `t` for a small pinned
/// window where every interior site runs the memory strategy from a uniform
/// random start. Returns probabilities indexed by bit pattern over
/// [`ReferenceSystem::interior`] (bit `k` set when site `k` is `+1`) and the
/// probability mass dropped by truncating the number of arrivals.
pub fn exact_interior_law(
    system: &ReferenceSystem,
    t: f64,
    coin_on_miss: bool,
    tail: f64,
) -> Result<(Vec<f64>, f64)> {
    let sites = system.interior();
    let n = sites.len();
    if n > 9 {
        return Err(Error::param(
            "window",
            "exact enumeration needs at most 9 interior sites",
        ));
    }
    let lambda = n as f64 * t;
    type State = (u32, Vec<NaiveAgent>);
    let config_of = |bits: u32| -> HashMap<Site, Spin> {
        let mut c: HashMap<Site, Spin> = system.frame.iter().copied().collect();
        for (k, &s) in sites.iter().enumerate() {
            c.insert(
                s,
                if bits >> k & 1 == 1 {
                    Spin::Plus
                } else {
                    Spin::Minus
                },
            );
        }
        c
    };
    let bits_of = |c: &HashMap<Site, Spin>| -> u32 {
        sites
            .iter()
            .enumerate()
            .fold(0, |acc, (k, s)| acc | (((c[s] == Spin::Plus) as u32) << k))
    };

    let mut dist: HashMap<State, f64> = HashMap::new();
    for bits in 0..1u32 << n {
        dist.insert(
            (bits, vec![NaiveAgent::default(); n]),
            1.0 / (1u64 << n) as f64,
        );
    }
    let mut law = vec![0.0; 1 << n];
    let mut covered = 0.0;
    let mut k = 0;
    loop {
        let w = poisson_pmf(lambda, k);
        for ((bits, _), p) in &dist {
            law[*bits as usize] += w * p;
        }
        covered += w;
        if 1.0 - covered <= tail {
            break;
        }
        if k > 60 {
            return Err(Error::param("t", "too many arrivals to enumerate"));
        }
        let mut next: HashMap<State, f64> = HashMap::with_capacity(dist.len() * 4);
        for ((bits, agents), p) in &dist {
            for (i, &x) in sites.iter().enumerate() {
                let needs_coin = agents[i].last.is_none() || coin_on_miss;
                let coins: &[Spin] = if needs_coin {
                    &[Spin::Plus, Spin::Minus]
                } else {
                    &[Spin::Plus]
                };
                let q = p / n as f64 / coins.len() as f64;
                for &coin in coins {
                    let mut c = config_of(*bits);
                    let mut a = agents.clone();
                    a[i].play(system, x, &mut c, coin, coin_on_miss)?;
                    *next.entry((bits_of(&c), a)).or_insert(0.0) += q;
                }
            }
        }
        dist = next;
        k += 1;
    }
    Ok((law, (1.0 - covered).max(0.0)))
}

/// Marginal of a law over bit patterns on the sites selected by `positions`.
pub fn marginal(law: &[f64], positions: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; 1 << positions.len()];
    for (bits, &p) in law.iter().enumerate() {
        let m = positions
            .iter()
            .enumerate()
            .fold(0usize, |acc, (k, &pos)| acc | ((bits >> pos & 1) << k));
        out[m] += p;
    }
    out
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Converts a dense-index configuration into a coordinate map.
pub fn config_map(window: &Window, spins: &[Spin]) -> HashMap<Site, Spin> {
    spins
        .iter()
        .enumerate()
        .map(|(i, &s)| (window.site(i), s))
        .collect()
}

/// Outcome of comparing a fast path against its reference.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct Comparison {
    pub name: &'static str,
    pub cases: usize,
    pub mismatches: usize,
    pub first_mismatch: Option<String>,
}

impl Comparison {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            cases: 0,
            mismatches: 0,
            first_mismatch: None,
        }
    }

    fn record(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok {
            self.mismatches += 1;
            if self.first_mismatch.is_none() {
                self.first_mismatch = Some(detail());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.cases > 0 && self.mismatches == 0
    }
}

/// Energies, rewards and flip energy changes on random configurations, fast
/// path against reference. Each `(graph, configuration, site)` triple is one case.
pub fn compare_energy(
    window: &Window,
    params: EdgeParams,
    symmetric: bool,
    graphs: u64,
    configs: u64,
    plan: RandomnessPlan,
) -> Comparison {
    let mut cmp = Comparison::new("energy-and-reward");
    for gi in 0..graphs {
        let gp = plan.replica(gi);
        let g = sample_graph(window, params, gp);
        let f = sample_feelings(&g, symmetric, gp);
        let sys = ReferenceSystem::from_graph(&g, &f);
        let interior = sys.interior();
        for ci in 0..configs {
            let c = init_configuration(window, gp.replica(ci));
            let map = config_map(window, c.spins());
            let fast = observables::window_energy(&c, &g, &f);
            let slow = sys.energy(&interior, &map);
            for x in window.interior_indices() {
                let site = window.site(x);
                let r_fast = reward(x, &c, &g, &f);
                let r_slow = sys.reward(site, &map);
                let mut flipped = map.clone();
                flipped.insert(site, map[&site].flipped());
                let d_slow = sys.energy(&interior, &flipped) - slow;
                let d_fast = observables::flip_delta(x, &c, &g, &f);
                cmp.record(fast == slow && r_fast == r_slow && d_fast == d_slow, || {
                    format!(
                        "graph {gi} config {ci} site {site}: energy {fast}/{slow}, reward {r_fast}/{r_slow}, flip {d_fast}/{d_slow}"
                    )
                });
            }
        }
    }
    cmp
}

/// Replays the first `events` arrivals of `runs` seeded runs through the
/// reference agents and compares every decision, reward and final record set.
pub fn compare_replay(
    window: &Window,
    params: EdgeParams,
    symmetric: bool,
    coin_on_miss: bool,
    runs: u64,
    events: usize,
    plan: RandomnessPlan,
) -> Result<Comparison> {
    let mut cmp = Comparison::new("memory-strategy-replay");
    for ri in 0..runs {
        let rp = plan.replica(ri);
        let g = sample_graph(window, params, rp);
        let f = sample_feelings(&g, symmetric, rp);
        let sys = ReferenceSystem::from_graph(&g, &f);
        let initial = init_configuration(window, rp);
        let horizon = 2.0 * events as f64 / window.num_interior() as f64 + 1.0;
        let stream = build_event_stream(window, horizon, rp)?;
        let agents = vec![Strategy::memory(coin_on_miss); window.num_interior()];
        let mut state = SimState::new(&g, &f, initial.clone(), agents, rp)?;
        let mut ref_events = Vec::with_capacity(events);
        let mut fast = Vec::with_capacity(events);
        for ev in stream.events().iter().take(events) {
            ref_events.push((ev.time, window.site(ev.site), state.coin(ev)));
            fast.push(state.step(ev)?);
        }
        let (slow, ref_agents, _) = simulate(
            &sys,
            config_map(window, initial.spins()),
            &ref_events,
            coin_on_miss,
        )?;
        for (k, (a, b)) in fast.iter().zip(&slow).enumerate() {
            cmp.record(a.decision == b.decision && a.reward == b.reward, || {
                format!(
                    "run {ri} event {k} at {}: fast ({:?}, {}) reference ({:?}, {})",
                    b.site, a.decision, a.reward, b.decision, b.reward
                )
            });
        }
        for x in window.interior_indices() {
            let site = window.site(x);
            let fast_records: Vec<(u32, Vec<i8>, Spin, i8)> = state
                .agent(x)
                .and_then(Strategy::agent_memory)
                .map(|m| {
                    m.records()
                        .map(|(p, o)| (p.radius(), p.cells().to_vec(), o.decision, o.reward))
                        .collect()
                })
                .unwrap_or_default();
            let slow_records = ref_agents
                .get(&site)
                .map(|a| a.records.clone())
                .unwrap_or_default();
            cmp.record(fast_records == slow_records, || {
                format!("run {ri}: record sets differ at {site}")
            });
        }
    }
    Ok(cmp)
}
