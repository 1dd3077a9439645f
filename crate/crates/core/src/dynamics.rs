//! Event-driven graphical construction of the dynamics.
//!
//! Every interior site carries a rate-1 Poisson clock. At an arrival the
//! site's strategy picks a spin, the spin is written, and the reward is read
//! off the post-update configuration. Frame sites of a pinned window never
//! ring.

use crate::error::{Error, Result};
use crate::graph::{FeelingMap, Graph};
use crate::lattice::{sgn, Spin, Window};
use crate::rng::{Purpose, RandomnessPlan};
use crate::strategy::{LocalView, Strategy};

/// Spin assignment over all indexed sites of a window (frame included).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Configuration {
    spins: Vec<Spin>,
}

impl Configuration {
    pub fn uniform(window: &Window, spin: Spin) -> Self {
        let mut c = Self {
            spins: vec![spin; window.num_sites()],
        };
        c.apply_frame(window);
        c
    }

    pub fn from_spins(window: &Window, spins: Vec<Spin>) -> Result<Self> {
        if spins.len() != window.num_sites() {
            return Err(Error::invariant(format!(
                "configuration has {} spins, window has {} sites",
                spins.len(),
                window.num_sites()
            )));
        }
        if let Some(frame) = window.frame() {
            for (i, &s) in window.frame_indices().zip(frame.spins()) {
                if spins[i] != s {
                    return Err(Error::invariant(format!(
                        "frame spin at {} disagrees with the pinned values",
                        window.site(i)
                    )));
                }
            }
        }
        Ok(Self { spins })
    }

    /// Overwrites frame sites with the window's pinned values.
    pub fn apply_frame(&mut self, window: &Window) {
        if let Some(frame) = window.frame() {
            for (i, &s) in window.frame_indices().zip(frame.spins()) {
                self.spins[i] = s;
            }
        }
    }

    pub fn get(&self, x: usize) -> Spin {
        self.spins[x]
    }

    pub fn set(&mut self, x: usize, s: Spin) {
        self.spins[x] = s;
    }

    pub fn spins(&self) -> &[Spin] {
        &self.spins
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }
}

/// Symmetric Bernoulli product initial condition; frame sites take their pinned values.
pub fn init_configuration(window: &Window, plan: RandomnessPlan) -> Configuration {
    let spins = (0..window.num_sites())
        .map(|i| plan.spin(Purpose::InitialSpin, window.key(i), 0, 0))
        .collect();
    let mut c = Configuration { spins };
    c.apply_frame(window);
    c
}

/// One clock arrival.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    /// Dense site index.
    pub site: usize,
    /// Arrival number at this site, starting from 0.
    pub arrival: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventStream {
    events: Vec<Event>,
    horizon: f64,
}

impl EventStream {
    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Arrival times of one site's clock up to `horizon`.
pub fn site_arrivals(window: &Window, site: usize, horizon: f64, plan: RandomnessPlan) -> Vec<f64> {
    let key = window.key(site);
    let mut out = Vec::new();
    let mut t = 0.0;
    for n in 0u64.. {
        t += plan.exponential(Purpose::Clock, key, 0, n);
        if t > horizon {
            break;
        }
        out.push(t);
    }
    out
}

/// Merged arrivals of all interior clocks up to `horizon`, in time order.
/// Equal times (a floating-point accident) are ordered by site index.
pub fn build_event_stream(
    window: &Window,
    horizon: f64,
    plan: RandomnessPlan,
) -> Result<EventStream> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::param(
            "horizon",
            format!("must be positive and finite, got {horizon}"),
        ));
    }
    let mut events =
        Vec::with_capacity((window.num_interior() as f64 * horizon * 1.1) as usize + 16);
    for site in window.interior_indices() {
        for (n, time) in site_arrivals(window, site, horizon, plan)
            .into_iter()
            .enumerate()
        {
            events.push(Event {
                time,
                site,
                arrival: n as u32,
            });
        }
    }
    events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.site.cmp(&b.site)));
    Ok(EventStream { events, horizon })
}

/// `sgn(Σ_y j(x, y) σ(x) σ(y))`.
pub fn reward(x: usize, config: &Configuration, graph: &Graph, feelings: &FeelingMap) -> i8 {
    let view = LocalView {
        graph,
        feelings,
        config,
        site: x,
    };
    sgn(config.get(x).value() * view.linked_sum())
}

/// One processed event.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub time: f64,
    pub site: usize,
    pub arrival: u32,
    pub previous: Spin,
    pub decision: Spin,
    pub reward: i8,
    pub flipped: bool,
    pub memory_grew: bool,
    pub new_pattern: bool,
    /// The agent's current pattern was already in its record set.
    pub known_pattern: bool,
    pub radius: Option<u32>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryLog {
    pub records: Vec<TrajectoryRecord>,
}

impl TrajectoryLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Mutable state of one replica.
#[derive(Clone, Debug)]
pub struct SimState<'g> {
    graph: &'g Graph,
    feelings: &'g FeelingMap,
    config: Configuration,
    /// One strategy per interior site, in ordinal order.
    agents: Vec<Strategy>,
    plan: RandomnessPlan,
    clock: f64,
    events_processed: u64,
    flips: u64,
}

impl<'g> SimState<'g> {
    pub fn new(
        graph: &'g Graph,
        feelings: &'g FeelingMap,
        config: Configuration,
        agents: Vec<Strategy>,
        plan: RandomnessPlan,
    ) -> Result<Self> {
        let w = graph.window();
        if agents.len() != w.num_interior() {
            return Err(Error::invariant(format!(
                "{} strategies for {} interior sites",
                agents.len(),
                w.num_interior()
            )));
        }
        if config.len() != w.num_sites() {
            return Err(Error::invariant("configuration does not fit the window"));
        }
        Ok(Self {
            graph,
            feelings,
            config,
            agents,
            plan,
            clock: 0.0,
            events_processed: 0,
            flips: 0,
        })
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn feelings(&self) -> &'g FeelingMap {
        self.feelings
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn agents(&self) -> &[Strategy] {
        &self.agents
    }

    pub fn agent(&self, site: usize) -> Option<&Strategy> {
        self.graph.window().ordinal(site).map(|o| &self.agents[o])
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn events_processed(&self) -> u64 {
        self.events_processed
    }

    pub fn flips(&self) -> u64 {
        self.flips
    }

    /// Coin toss available to the agent at `event`.
    pub fn coin(&self, event: &Event) -> Spin {
        self.plan.spin(
            Purpose::Coin,
            self.graph.window().key(event.site),
            0,
            event.arrival as u64,
        )
    }

    /// Processes one arrival.
    pub fn step(&mut self, event: &Event) -> Result<TrajectoryRecord> {
        if event.time.is_nan() || event.time <= self.clock {
            return Err(Error::invariant(format!(
                "event at {} does not follow the clock at {}",
                event.time, self.clock
            )));
        }
        let ordinal = self
            .graph
            .window()
            .ordinal(event.site)
            .ok_or_else(|| Error::invariant("clock arrival at a frame site"))?;
        let coin = self.coin(event);
        let previous = self.config.get(event.site);
        let decision = {
            let view = LocalView {
                graph: self.graph,
                feelings: self.feelings,
                config: &self.config,
                site: event.site,
            };
            self.agents[ordinal].decide(&view, coin)
        };
        let spin = decision.spin;
        self.config.set(event.site, spin);
        let h = reward(event.site, &self.config, self.graph, self.feelings);
        let update = self.agents[ordinal].observe(decision, h, event.time)?;
        self.clock = event.time;
        self.events_processed += 1;
        let flipped = spin != previous;
        self.flips += flipped as u64;
        Ok(TrajectoryRecord {
            time: event.time,
            site: event.site,
            arrival: event.arrival,
            previous,
            decision: spin,
            reward: h,
            flipped,
            memory_grew: update.memory_grew,
            new_pattern: update.new_pattern,
            known_pattern: update.known_pattern,
            radius: update.radius,
        })
    }

    pub fn into_parts(self) -> (Configuration, Vec<Strategy>) {
        (self.config, self.agents)
    }
}

/// Result of a full run.
#[derive(Debug)]
pub struct RunOutput<'g> {
    pub initial: Configuration,
    pub log: TrajectoryLog,
    pub state: SimState<'g>,
}

/// Runs the dynamics from `initial` over `[0, horizon]`.
pub fn run_from<'g>(
    graph: &'g Graph,
    feelings: &'g FeelingMap,
    agents: Vec<Strategy>,
    initial: Configuration,
    horizon: f64,
    plan: RandomnessPlan,
) -> Result<RunOutput<'g>> {
    let stream = build_event_stream(graph.window(), horizon, plan)?;
    let mut state = SimState::new(graph, feelings, initial.clone(), agents, plan)?;
    let mut log = TrajectoryLog {
        records: Vec::with_capacity(stream.len()),
    };
    for event in stream.events() {
        log.records.push(state.step(event)?);
    }
    Ok(RunOutput {
        initial,
        log,
        state,
    })
}

/// Runs the dynamics from the seeded initial configuration.
pub fn run<'g>(
    graph: &'g Graph,
    feelings: &'g FeelingMap,
    agents: Vec<Strategy>,
    horizon: f64,
    plan: RandomnessPlan,
) -> Result<RunOutput<'g>> {
    let initial = init_configuration(graph.window(), plan);
    run_from(graph, feelings, agents, initial, horizon, plan)
}

/// The same strategy at every interior site.
pub fn uniform_agents(window: &Window, strategy: &Strategy) -> Vec<Strategy> {
    vec![strategy.clone(); window.num_interior()]
}
