//! Coupled runs under different frozen frames, subbox fronts and estimates of
//! the total-variation distance between the resulting local patterns.
//!
//! Two copies share the graph, the clocks, the coins and the initial interior
//! configuration; only the frame differs. `τ_x` is the first time the copies
//! disagree at `x`. The black-subbox process `ν̃` dominates the discrepancy:
//! a subbox turns black as soon as one of its sites disagrees, or at the first
//! arrival at any of its sites while a neighbouring subbox is black.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::dynamics::{build_event_stream, init_configuration, Configuration, SimState};
use crate::error::{Error, Result};
use crate::graph::{sample_feelings, sample_graph, EdgeParams, FeelingMap, Graph};
use crate::lattice::{Boundary, Frame, Site, Spin, Window};
use crate::rng::{Purpose, RandomnessPlan};
use crate::strategy::Strategy;

/// `Φ(α) = α − 1 − ln α`.
pub fn rate_function(alpha: f64) -> Result<f64> {
    if alpha.is_nan() || alpha <= 0.0 || alpha.is_infinite() {
        return Err(Error::param(
            "alpha",
            format!("must be positive and finite, got {alpha}"),
        ));
    }
    Ok(alpha - 1.0 - alpha.ln())
}

/// Tiling of an `L × L` box by `s × s` subboxes. Frame sites of a pinned
/// window are grouped into a ring of cells at grid coordinates `-1` and `n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubboxPartition {
    side: usize,
    rho: f64,
    sub: usize,
}

/// Cell coordinates in the subbox grid.
pub type Cell = (i32, i32);

impl SubboxPartition {
    pub fn new(side: usize, rho: f64) -> Result<Self> {
        if side < 2 {
            return Err(Error::param(
                "L",
                format!("subbox partitions need L >= 2, got {side}"),
            ));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::param(
                "rho",
                format!("must lie in (0, 1), got {rho}"),
            ));
        }
        let target = ((side as f64).powf(rho).round() as usize).clamp(2, side);
        let sub = (2..=target)
            .rev()
            .find(|&d| side.is_multiple_of(d))
            .ok_or_else(|| {
                Error::param("L", format!("{side} has no divisor between 2 and {target}"))
            })?;
        Ok(Self { side, rho, sub })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Realised subbox side `s`.
    pub fn subbox_side(&self) -> usize {
        self.sub
    }

    /// `ln s / ln L`.
    pub fn rho_effective(&self) -> f64 {
        (self.sub as f64).ln() / (self.side as f64).ln()
    }

    /// Subboxes per row.
    pub fn cells_per_side(&self) -> usize {
        self.side / self.sub
    }

    pub fn num_cells(&self) -> usize {
        let n = self.cells_per_side();
        n * n
    }

    /// Cell of a site; frame sites fall in the ring.
    pub fn cell_of(&self, site: Site) -> Cell {
        let n = self.cells_per_side() as i32;
        let s = self.sub as i32;
        (
            site.x1.div_euclid(s).clamp(-1, n),
            site.x2.div_euclid(s).clamp(-1, n),
        )
    }

    pub fn is_interior_cell(&self, c: Cell) -> bool {
        let n = self.cells_per_side() as i32;
        (0..n).contains(&c.0) && (0..n).contains(&c.1)
    }

    /// Distinct cells surrounding `c`; `wrap` identifies opposite sides.
    pub fn neighbours(&self, c: Cell, wrap: bool) -> Vec<Cell> {
        let n = self.cells_per_side() as i32;
        let mut out = Vec::with_capacity(8);
        for d1 in -1..=1 {
            for d2 in -1..=1 {
                if d1 == 0 && d2 == 0 {
                    continue;
                }
                let mut m = (c.0 + d1, c.1 + d2);
                if wrap {
                    m = (m.0.rem_euclid(n), m.1.rem_euclid(n));
                } else if !(-1..=n).contains(&m.0) || !(-1..=n).contains(&m.1) {
                    continue;
                }
                if m != c && !out.contains(&m) {
                    out.push(m);
                }
            }
        }
        out
    }

    pub fn are_neighbours(&self, a: Cell, b: Cell, wrap: bool) -> bool {
        let n = self.cells_per_side() as i32;
        let gap = |x: i32, y: i32| {
            let d = (x - y).abs();
            if wrap {
                d.min(n - d)
            } else {
                d
            }
        };
        a != b && gap(a.0, b.0) <= 1 && gap(a.1, b.1) <= 1
    }

    fn dense(&self, c: Cell) -> usize {
        let m = self.cells_per_side() as i32 + 2;
        ((c.0 + 1) * m + c.1 + 1) as usize
    }

    fn dense_len(&self) -> usize {
        let m = self.cells_per_side() + 2;
        m * m
    }
}

/// `partition_subboxes(L, ρ)`.
pub fn partition_subboxes(side: usize, rho: f64) -> Result<SubboxPartition> {
    SubboxPartition::new(side, rho)
}

/// An edge joining two interior subboxes that are not neighbours.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinkedPair {
    pub cells: (Cell, Cell),
    pub witness: (Site, Site),
}

/// All pairs of non-neighbouring interior subboxes joined by an edge, each with
/// the first witness edge found, ordered by cell pair.
pub fn find_linked_nonneighbor(graph: &Graph, partition: &SubboxPartition) -> Vec<LinkedPair> {
    let w = graph.window();
    let wrap = matches!(w.boundary(), Boundary::Torus);
    let mut found: BTreeMap<(Cell, Cell), (Site, Site)> = BTreeMap::new();
    for (a, b) in graph.edges() {
        if !w.is_interior_index(a) || !w.is_interior_index(b) {
            continue;
        }
        let (sa, sb) = (w.site(a), w.site(b));
        let (ca, cb) = (partition.cell_of(sa), partition.cell_of(sb));
        if ca == cb || partition.are_neighbours(ca, cb, wrap) {
            continue;
        }
        let key = if ca <= cb { (ca, cb) } else { (cb, ca) };
        found.entry(key).or_insert((sa, sb));
    }
    found
        .into_iter()
        .map(|(cells, witness)| LinkedPair { cells, witness })
        .collect()
}

/// Exact probability that a graph sampled on `window` has a linked
/// non-neighbour pair of subboxes: one minus the probability that every
/// spanning pair of interior sites stays unlinked.
pub fn linked_nonneighbor_probability(
    window: &Window,
    params: EdgeParams,
    partition: &SubboxPartition,
) -> f64 {
    let wrap = matches!(window.boundary(), Boundary::Torus);
    let sites: Vec<Site> = window.interior_indices().map(|i| window.site(i)).collect();
    let mut log_none = 0.0;
    for (i, &a) in sites.iter().enumerate() {
        for &b in &sites[i + 1..] {
            let (ca, cb) = (partition.cell_of(a), partition.cell_of(b));
            if ca == cb || partition.are_neighbours(ca, cb, wrap) {
                continue;
            }
            let p = params.probability_at(window.distance(a, b));
            if p >= 1.0 {
                return 1.0;
            }
            log_none += (-p).ln_1p();
        }
    }
    -log_none.exp_m1()
}

/// Which indicator changed in a [`Transition`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Indicator {
    Nu,
    NuTilde,
}

/// An indicator switching from 0 to 1 at an interior site.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub time: f64,
    pub site: usize,
    pub indicator: Indicator,
}

/// Both copies at a requested time.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub time: f64,
    pub first: Configuration,
    pub second: Configuration,
}

/// Outcome of a coupled run.
#[derive(Clone, Debug)]
pub struct CouplingRun {
    pub horizon: f64,
    pub partition: SubboxPartition,
    /// `τ_x` per dense site index; frame sites that differ carry time 0.
    pub tau: Vec<Option<f64>>,
    /// Black time per cell, dense over the grid including the frame ring.
    cell_black: Vec<Option<f64>>,
    pub transitions: Vec<Transition>,
    /// Times at which events occurred, in order.
    pub event_times: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    window: Window,
}

impl CouplingRun {
    pub fn cell_black_time(&self, c: Cell) -> Option<f64> {
        self.cell_black[self.partition.dense(c)]
    }

    /// `ν_x(t)`.
    pub fn nu(&self, x: usize, t: f64) -> bool {
        self.tau[x].is_some_and(|tau| t >= tau)
    }

    /// `ν̃_x(t)`.
    pub fn nu_tilde(&self, x: usize, t: f64) -> bool {
        let c = self.partition.cell_of(self.window.site(x));
        self.cell_black_time(c).is_some_and(|b| t >= b)
    }

    /// Replays the transition log, checking that each indicator switches at
    /// most once, only upward, and that `ν̃ ≥ ν` at every recorded time.
    pub fn check(&self) -> Result<()> {
        let n = self.window.num_sites();
        let mut nu = vec![false; n];
        let mut nu_tilde = vec![false; n];
        let mut k = 0;
        let mut times: Vec<f64> = self.event_times.clone();
        times.extend(self.transitions.iter().map(|t| t.time));
        times.sort_by(f64::total_cmp);
        times.dedup();
        times.insert(0, 0.0);
        for &t in &times {
            while k < self.transitions.len() && self.transitions[k].time <= t {
                let tr = self.transitions[k];
                let slot = match tr.indicator {
                    Indicator::Nu => &mut nu[tr.site],
                    Indicator::NuTilde => &mut nu_tilde[tr.site],
                };
                if *slot {
                    return Err(Error::invariant(format!(
                        "indicator at site {} switched twice",
                        tr.site
                    )));
                }
                *slot = true;
                k += 1;
            }
            for x in self.window.interior_indices() {
                if nu[x] && !nu_tilde[x] {
                    return Err(Error::invariant(format!("ν̃ below ν at site {x}, t = {t}")));
                }
                if nu[x] != self.nu(x, t) || nu_tilde[x] != self.nu_tilde(x, t) {
                    return Err(Error::invariant(format!(
                        "transition log disagrees with indicators at site {x}"
                    )));
                }
            }
        }
        if k != self.transitions.len() {
            return Err(Error::invariant("transitions out of time order"));
        }
        Ok(())
    }
}

/// Runs two copies over `[0, horizon]` on the same graph, event stream and
/// coins, with frames `first` and `second`. `initial` fixes the shared interior;
/// its frame spins are overwritten.
#[allow(clippy::too_many_arguments)]
pub fn coupled_run(
    graph: &Graph,
    feelings: &FeelingMap,
    first: &Frame,
    second: &Frame,
    agents: &[Strategy],
    initial: &Configuration,
    partition: &SubboxPartition,
    horizon: f64,
    snapshot_times: &[f64],
    plan: RandomnessPlan,
) -> Result<CouplingRun> {
    let w = graph.window();
    if !matches!(w.boundary(), Boundary::Pinned(_)) {
        return Err(Error::InvalidWindow(
            "coupled runs need a pinned window".into(),
        ));
    }
    if partition.side() != w.side() {
        return Err(Error::invariant("partition does not match the window"));
    }
    if horizon.is_nan() || horizon < 0.0 {
        return Err(Error::param(
            "horizon",
            format!("must be non-negative, got {horizon}"),
        ));
    }
    let with_frame = |frame: &Frame| -> Result<Configuration> {
        let fw = w.with_frame(frame.clone())?;
        let mut c = initial.clone();
        c.apply_frame(&fw);
        Ok(c)
    };
    let c1 = with_frame(first)?;
    let c2 = with_frame(second)?;

    let mut a = SimState::new(graph, feelings, c1, agents.to_vec(), plan)?;
    let mut b = SimState::new(graph, feelings, c2, agents.to_vec(), plan)?;

    let mut run = CouplingRun {
        horizon,
        partition: *partition,
        tau: vec![None; w.num_sites()],
        cell_black: vec![None; partition.dense_len()],
        transitions: Vec::new(),
        event_times: Vec::new(),
        snapshots: Vec::new(),
        window: w.clone(),
    };
    let cells: Vec<Cell> = (0..w.num_sites())
        .map(|i| partition.cell_of(w.site(i)))
        .collect();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); partition.dense_len()];
    for x in w.interior_indices() {
        members[partition.dense(cells[x])].push(x);
    }
    let blacken = |run: &mut CouplingRun, c: Cell, t: f64| {
        let slot = &mut run.cell_black[partition.dense(c)];
        if slot.is_none() {
            *slot = Some(t);
            for &x in &members[partition.dense(c)] {
                run.transitions.push(Transition {
                    time: t,
                    site: x,
                    indicator: Indicator::NuTilde,
                });
            }
        }
    };
    for x in w.frame_indices() {
        if a.config().get(x) != b.config().get(x) {
            run.tau[x] = Some(0.0);
            blacken(&mut run, cells[x], 0.0);
        }
    }

    let mut pending: Vec<f64> = snapshot_times.to_vec();
    pending.sort_by(f64::total_cmp);
    let mut pending = pending.into_iter().peekable();
    let mut snap = |run: &mut CouplingRun, before: f64, a: &SimState, b: &SimState| {
        while let Some(&t) = pending.peek() {
            if t >= before {
                break;
            }
            run.snapshots.push(Snapshot {
                time: t,
                first: a.config().clone(),
                second: b.config().clone(),
            });
            pending.next();
        }
    };

    if horizon > 0.0 {
        let stream = build_event_stream(w, horizon, plan)?;
        for ev in stream.events() {
            snap(&mut run, ev.time, &a, &b);
            let ra = a.step(ev)?;
            let rb = b.step(ev)?;
            if (ra.time, ra.site, ra.arrival) != (rb.time, rb.site, rb.arrival)
                || a.coin(ev) != b.coin(ev)
            {
                return Err(Error::invariant(
                    "coupled copies diverged in their shared randomness",
                ));
            }
            let t = ev.time;
            run.event_times.push(t);
            let x = ev.site;
            let cx = cells[x];
            if run.cell_black_time(cx).is_none()
                && partition
                    .neighbours(cx, false)
                    .into_iter()
                    .any(|m| run.cell_black_time(m).is_some())
            {
                blacken(&mut run, cx, t);
            }
            if run.tau[x].is_none() && ra.decision != rb.decision {
                run.tau[x] = Some(t);
                run.transitions.push(Transition {
                    time: t,
                    site: x,
                    indicator: Indicator::Nu,
                });
                blacken(&mut run, cx, t);
            }
        }
    }
    snap(&mut run, f64::INFINITY, &a, &b);
    run.transitions.sort_by(|p, q| p.time.total_cmp(&q.time));
    Ok(run)
}

/// First time a subbox meeting `region` is black, if within the horizon.
pub fn black_front_time(run: &CouplingRun, region: &[usize]) -> Option<f64> {
    region
        .iter()
        .filter_map(|&x| run.cell_black_time(run.partition.cell_of(run.window.site(x))))
        .filter(|&t| t <= run.horizon && run.horizon > 0.0)
        .min_by(f64::total_cmp)
}

/// Interior sites of the centred `k × k` square.
pub fn centred_region(window: &Window, k: usize) -> Result<Vec<usize>> {
    let l = window.side();
    if k == 0 || k > l {
        return Err(Error::param(
            "region",
            format!("a {k} x {k} square does not fit side {l}"),
        ));
    }
    let lo = ((l - k) / 2) as i32;
    let mut out = Vec::with_capacity(k * k);
    for x1 in lo..lo + k as i32 {
        for x2 in lo..lo + k as i32 {
            out.push(window.index(Site::new(x1, x2)).expect("interior site"));
        }
    }
    Ok(out)
}

/// Bit pattern of the spins on `region`: bit `k` set when site `k` is `+1`.
pub fn region_pattern(config: &Configuration, region: &[usize]) -> u32 {
    region.iter().enumerate().fold(0, |acc, (k, &x)| {
        acc | (((config.get(x) == Spin::Plus) as u32) << k)
    })
}

/// Where each replica's graph comes from.
#[derive(Clone, Copy, Debug)]
pub enum GraphSource<'a> {
    /// One quenched graph for all replicas.
    Fixed(&'a Graph, &'a FeelingMap),
    /// A fresh graph and feelings per replica, from the replica's plan.
    Sampled { params: EdgeParams, symmetric: bool },
}

/// Everything a batch of coupled replicas needs.
#[derive(Clone, Debug)]
pub struct MixingSetup<'a> {
    /// Pinned window; its own frame is irrelevant, only its shape is used.
    pub window: Window,
    pub first: Frame,
    pub second: Frame,
    /// Λ₀, at most 12 interior sites.
    pub region: Vec<usize>,
    /// Observation time of the region.
    pub t: f64,
    /// Run length, at least `t`.
    pub horizon: f64,
    pub strategy: Strategy,
    pub graph: GraphSource<'a>,
    pub partition: SubboxPartition,
}

/// Per-replica result.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReplicaOutcome {
    pub first: u32,
    pub second: u32,
    pub front_time: Option<f64>,
    /// Some site of the region had `ν = 1` at time `t`.
    pub region_discrepant: bool,
}

impl MixingSetup<'_> {
    fn validate(&self) -> Result<()> {
        if self.region.is_empty() || self.region.len() > 12 {
            return Err(Error::param(
                "region",
                format!("needs 1 to 12 sites, got {}", self.region.len()),
            ));
        }
        if self
            .region
            .iter()
            .any(|&x| !self.window.is_interior_index(x))
        {
            return Err(Error::param("region", "must lie inside the window"));
        }
        if !(self.t >= 0.0 && self.horizon >= self.t) {
            return Err(Error::param(
                "t",
                format!(
                    "need 0 <= t <= horizon, got t = {} with horizon {}",
                    self.t, self.horizon
                ),
            ));
        }
        Ok(())
    }

    /// Runs the coupled pair for one replica plan.
    pub fn replica(&self, plan: RandomnessPlan) -> Result<ReplicaOutcome> {
        self.validate()?;
        let owned;
        let (graph, feelings) = match self.graph {
            GraphSource::Fixed(g, f) => {
                if g.window().side() != self.window.side()
                    || g.window().frame_width() != self.window.frame_width()
                {
                    return Err(Error::invariant("fixed graph does not match the window"));
                }
                (g, f)
            }
            GraphSource::Sampled { params, symmetric } => {
                let g = sample_graph(&self.window, params, plan);
                let f = sample_feelings(&g, symmetric, plan);
                owned = (g, f);
                (&owned.0, &owned.1)
            }
        };
        let w = graph.window();
        let agents = vec![self.strategy.clone(); w.num_interior()];
        let initial = init_configuration(w, plan);
        let run = coupled_run(
            graph,
            feelings,
            &self.first,
            &self.second,
            &agents,
            &initial,
            &self.partition,
            self.horizon,
            &[self.t],
            plan,
        )?;
        let snap = &run.snapshots[0];
        Ok(ReplicaOutcome {
            first: region_pattern(&snap.first, &self.region),
            second: region_pattern(&snap.second, &self.region),
            front_time: black_front_time(&run, &self.region),
            region_discrepant: self.region.iter().any(|&x| run.nu(x, self.t)),
        })
    }

    /// Runs `replicas` independent coupled pairs in parallel, in replica order.
    pub fn run(&self, replicas: usize, plan: RandomnessPlan) -> Result<Vec<ReplicaOutcome>> {
        (0..replicas as u64)
            .into_par_iter()
            .map(|r| self.replica(plan.replica(r)))
            .collect()
    }
}

/// Plug-in estimate of the total-variation distance with a bootstrap
/// half-width (1.96 standard deviations).
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct TvEstimate {
    pub estimate: f64,
    pub half_width: f64,
    pub replicas: usize,
}

fn plug_in_tv(outcomes: &[ReplicaOutcome], pick: impl Iterator<Item = usize>, bits: usize) -> f64 {
    let mut diff = vec![0i64; 1 << bits];
    let mut n = 0;
    for i in pick {
        diff[outcomes[i].first as usize] += 1;
        diff[outcomes[i].second as usize] -= 1;
        n += 1;
    }
    0.5 * diff.iter().map(|d| d.unsigned_abs()).sum::<u64>() as f64 / n as f64
}

pub fn tv_estimate(
    outcomes: &[ReplicaOutcome],
    region_size: usize,
    resamples: usize,
    plan: RandomnessPlan,
) -> Result<TvEstimate> {
    if outcomes.is_empty() {
        return Err(Error::param("replicas", "no replicas"));
    }
    if region_size == 0 || region_size > 12 {
        return Err(Error::param(
            "region",
            format!("needs 1 to 12 sites, got {region_size}"),
        ));
    }
    let n = outcomes.len();
    let estimate = plug_in_tv(outcomes, 0..n, region_size);
    let half_width = if resamples < 2 {
        0.0
    } else {
        let boots: Vec<f64> = (0..resamples as u64)
            .into_par_iter()
            .map(|b| {
                let pick = (0..n as u64)
                    .map(|i| plan.below(Purpose::Bootstrap, b, 0, i, n as u64) as usize);
                plug_in_tv(outcomes, pick, region_size)
            })
            .collect();
        let m = boots.iter().sum::<f64>() / boots.len() as f64;
        let var = boots.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (boots.len() - 1) as f64;
        1.96 * var.sqrt()
    };
    Ok(TvEstimate {
        estimate,
        half_width,
        replicas: n,
    })
}

/// Median of the front times, treating "never" as larger than any time.
/// `None` when at least half the replicas never see the front.
pub fn median_front_time(outcomes: &[ReplicaOutcome]) -> Option<f64> {
    let mut v: Vec<f64> = outcomes
        .iter()
        .map(|o| o.front_time.unwrap_or(f64::INFINITY))
        .collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = if v.len() % 2 == 1 {
        v[v.len() / 2]
    } else {
        0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2])
    };
    m.is_finite().then_some(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Frame;

    #[test]
    fn rate_function_values() {
        assert_eq!(rate_function(1.0).unwrap(), 0.0);
        let e = std::f64::consts::E;
        assert!((rate_function(1.0 / e).unwrap() - 1.0 / e).abs() < 1e-12);
        assert!((rate_function(0.5).unwrap() - (2f64.ln() - 0.5)).abs() < 1e-12);
        assert!(rate_function(0.0).is_err());
        assert!(rate_function(-1.0).is_err());
    }

    #[test]
    fn rate_function_is_convex_with_minimum_at_one() {
        let grid: Vec<f64> = (1..400).map(|k| k as f64 * 0.01).collect();
        let v: Vec<f64> = grid.iter().map(|&a| rate_function(a).unwrap()).collect();
        for k in 1..v.len() - 1 {
            assert!(v[k - 1] + v[k + 1] - 2.0 * v[k] > 0.0);
            assert!(v[k] >= 0.0);
            assert_eq!(v[k] == 0.0, k == 99);
        }
    }

    #[test]
    fn partition_examples() {
        let p = partition_subboxes(16, 0.5).unwrap();
        assert_eq!((p.subbox_side(), p.cells_per_side()), (4, 4));
        let p = partition_subboxes(64, 13.0 / 42.0).unwrap();
        assert_eq!((p.subbox_side(), p.cells_per_side()), (4, 16));
        // 32^(13/42) rounds to 3, which does not divide 32
        let p = partition_subboxes(32, 13.0 / 42.0).unwrap();
        assert_eq!(p.subbox_side(), 2);
        assert!(partition_subboxes(3, 0.5).is_err());
        assert_eq!(partition_subboxes(2, 0.5).unwrap().num_cells(), 1);
        assert!(partition_subboxes(1, 0.5).is_err());
        // 7 is prime and rounds to 2, which does not divide it
        assert!(partition_subboxes(7, 13.0 / 42.0).is_err());
        assert!(partition_subboxes(16, 1.5).is_err());
    }

    #[test]
    fn every_subbox_has_eight_torus_neighbours() {
        let p = partition_subboxes(16, 0.5).unwrap();
        let n = p.cells_per_side() as i32;
        for c1 in 0..n {
            for c2 in 0..n {
                let nb = p.neighbours((c1, c2), true);
                assert_eq!(nb.len(), 8);
                for m in nb {
                    assert!(p.are_neighbours((c1, c2), m, true));
                }
            }
        }
        assert_eq!(p.neighbours((0, 0), false).len(), 8);
        assert_eq!(p.neighbours((-1, -1), false).len(), 3);
    }

    #[test]
    fn cells_cover_frame_ring() {
        let p = partition_subboxes(8, 0.5).unwrap();
        assert_eq!(p.cell_of(Site::new(-2, 3)), (-1, 1));
        assert_eq!(p.cell_of(Site::new(9, 9)), (4, 4));
        assert_eq!(p.cell_of(Site::new(7, 0)), (3, 0));
    }

    #[test]
    fn lattice_graph_has_no_linked_nonneighbours() {
        let w = Window::torus(16).unwrap();
        let mut g = sample_graph(
            &w,
            EdgeParams::new(0.0, 9.0).unwrap(),
            RandomnessPlan::new(0),
        );
        let p = partition_subboxes(16, 0.5).unwrap();
        assert!(find_linked_nonneighbor(&g, &p).is_empty());
        // spans 2s + 1 = 9 rows
        let a = w.index(Site::new(0, 0)).unwrap();
        let b = w.index(Site::new(9, 1)).unwrap();
        g.insert_edge(a, b).unwrap();
        let found = find_linked_nonneighbor(&g, &p);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].cells, ((0, 0), (2, 0)));
        assert_eq!(found[0].witness, (Site::new(0, 0), Site::new(9, 1)));
    }

    #[test]
    fn exact_linked_probability_brackets_monte_carlo() {
        let w = Window::torus(16).unwrap();
        let params = EdgeParams::new(20.0, 3.0).unwrap();
        let p = partition_subboxes(16, 0.5).unwrap();
        let exact = linked_nonneighbor_probability(&w, params, &p);
        let n = 100;
        let hits = (0..n)
            .filter(|&s| {
                !find_linked_nonneighbor(&sample_graph(&w, params, RandomnessPlan::new(s)), &p)
                    .is_empty()
            })
            .count() as f64;
        let se = (exact * (1.0 - exact) / n as f64).sqrt().max(0.01);
        assert!(
            (hits / n as f64 - exact).abs() < 4.0 * se,
            "{hits} vs {exact}"
        );
    }

    fn pinned(l: usize) -> Window {
        Window::pinned(l, Frame::uniform(l, 2, Spin::Plus).unwrap()).unwrap()
    }

    fn setup(l: usize, second: Spin, t: f64) -> MixingSetup<'static> {
        let w = pinned(l);
        MixingSetup {
            region: centred_region(&w, 2).unwrap(),
            first: Frame::uniform(l, 2, Spin::Plus).unwrap(),
            second: Frame::uniform(l, 2, second).unwrap(),
            t,
            horizon: t,
            strategy: Strategy::memory(false),
            graph: GraphSource::Sampled {
                params: EdgeParams::default(),
                symmetric: false,
            },
            partition: partition_subboxes(l, 13.0 / 42.0).unwrap(),
            window: w,
        }
    }

    #[test]
    fn identical_frames_never_disagree() {
        let s = setup(8, Spin::Plus, 3.0);
        let out = s.run(20, RandomnessPlan::new(1)).unwrap();
        for o in &out {
            assert_eq!(o.first, o.second);
            assert_eq!(o.front_time, None);
            assert!(!o.region_discrepant);
        }
        let tv = tv_estimate(&out, 4, 100, RandomnessPlan::new(0)).unwrap();
        assert_eq!((tv.estimate, tv.half_width), (0.0, 0.0));
    }

    #[test]
    fn time_zero_gives_zero_distance() {
        let s = setup(8, Spin::Minus, 0.0);
        let out = s.run(30, RandomnessPlan::new(2)).unwrap();
        assert_eq!(
            tv_estimate(&out, 4, 50, RandomnessPlan::new(0))
                .unwrap()
                .estimate,
            0.0
        );
        assert!(out.iter().all(|o| o.front_time.is_none()));
    }

    #[test]
    fn coupling_invariants_hold() {
        let l = 12;
        let w = pinned(l);
        let p = partition_subboxes(l, 0.5).unwrap();
        let plus = Frame::uniform(l, 2, Spin::Plus).unwrap();
        let minus = Frame::uniform(l, 2, Spin::Minus).unwrap();
        for seed in 0..5 {
            let plan = RandomnessPlan::new(seed);
            let g = sample_graph(&w, EdgeParams::default(), plan);
            let f = sample_feelings(&g, false, plan);
            let agents = vec![Strategy::memory(false); w.num_interior()];
            let init = init_configuration(&w, plan);
            let run =
                coupled_run(&g, &f, &plus, &minus, &agents, &init, &p, 6.0, &[], plan).unwrap();
            run.check().unwrap();
            for x in w.interior_indices() {
                assert!(!run.nu(x, 0.0));
                assert!(!run.nu_tilde(x, 0.0));
            }
            assert!(run.tau.iter().any(|t| t.is_some_and(|t| t > 0.0)));
            let same =
                coupled_run(&g, &f, &plus, &plus, &agents, &init, &p, 6.0, &[], plan).unwrap();
            assert!(same.tau.iter().all(Option::is_none));
            assert!(same.transitions.is_empty());
        }
    }

    #[test]
    fn zero_horizon_front_is_never() {
        let l = 8;
        let w = pinned(l);
        let p = partition_subboxes(l, 0.5).unwrap();
        let plan = RandomnessPlan::new(0);
        let g = sample_graph(&w, EdgeParams::default(), plan);
        let f = sample_feelings(&g, false, plan);
        let agents = vec![Strategy::memory(false); w.num_interior()];
        let init = init_configuration(&w, plan);
        let plus = Frame::uniform(l, 2, Spin::Plus).unwrap();
        let minus = Frame::uniform(l, 2, Spin::Minus).unwrap();
        let run =
            coupled_run(&g, &f, &plus, &minus, &agents, &init, &p, 0.0, &[0.0], plan).unwrap();
        let region = centred_region(&w, 2).unwrap();
        assert_eq!(black_front_time(&run, &region), None);
        assert_eq!(run.snapshots.len(), 1);
    }

    #[test]
    fn torus_window_is_rejected_for_coupling() {
        let w = Window::torus(8).unwrap();
        let plan = RandomnessPlan::new(0);
        let g = sample_graph(&w, EdgeParams::default(), plan);
        let f = sample_feelings(&g, false, plan);
        let plus = Frame::uniform(8, 2, Spin::Plus).unwrap();
        let p = partition_subboxes(8, 0.5).unwrap();
        let init = init_configuration(&w, plan);
        let agents = vec![Strategy::memory(false); 64];
        assert!(coupled_run(&g, &f, &plus, &plus, &agents, &init, &p, 1.0, &[], plan).is_err());
    }

    #[test]
    fn median_front_handles_never() {
        let o = |t: Option<f64>| ReplicaOutcome {
            first: 0,
            second: 0,
            front_time: t,
            region_discrepant: false,
        };
        assert_eq!(
            median_front_time(&[o(Some(1.0)), o(Some(3.0)), o(None)]),
            Some(3.0)
        );
        assert_eq!(median_front_time(&[o(Some(1.0)), o(None)]), None);
        assert_eq!(median_front_time(&[o(Some(1.0)), o(Some(2.0))]), Some(1.5));
    }

    #[test]
    fn tv_of_disjoint_patterns_is_one() {
        let o = ReplicaOutcome {
            first: 0,
            second: 15,
            front_time: None,
            region_discrepant: true,
        };
        let tv = tv_estimate(&[o; 10], 4, 20, RandomnessPlan::new(0)).unwrap();
        assert_eq!(tv.estimate, 1.0);
        assert_eq!(tv.half_width, 0.0);
        assert!(tv_estimate(&[], 4, 20, RandomnessPlan::new(0)).is_err());
    }
}
