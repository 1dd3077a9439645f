//! Decision rules for agents.
//!
//! The memory strategy keeps a record set of `(pattern, decision, reward)`
//! triples. A pattern is the configuration on the L1 ball of the current
//! observation radius around the agent, read just before the agent moves.
//!
//! * First arrival: toss a coin; remember the radius-1 pattern with the outcome.
//! * Known pattern `(σ', u', h')`: play `u' · h'/|h'|` (with `0/|0| = 1`). If
//!   that still loses, remember the pattern on the ball one step larger.
//! * Unknown pattern: repeat the previous decision and remember the outcome.
//!
//! Deciding and recording are split: [`Strategy::decide`] is pure and returns
//! a [`Decision`] carrying whatever the record step will need, so the update
//! can be applied after the reward is known without re-reading a configuration
//! that has since changed.

use std::fmt::Write as _;

use indexmap::IndexMap;

use crate::dynamics::Configuration;
use crate::error::{Error, Result};
use crate::graph::{FeelingMap, Graph};
use crate::lattice::{ball_offsets, Spin, MAX_RADIUS};

/// Spins on `Λ_M(x)` in x-centred coordinates, ordered as [`ball_offsets`].
/// Cells outside a clipped window are stored as `0`, so the clipped shape is
/// part of the key.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Pattern {
    radius: u32,
    cells: Box<[i8]>,
}

impl Pattern {
    pub fn new(radius: u32, cells: Vec<i8>) -> Result<Self> {
        if radius == 0 || radius > MAX_RADIUS {
            return Err(Error::param(
                "radius",
                format!("must lie in 1..={MAX_RADIUS}, got {radius}"),
            ));
        }
        if cells.len() != ball_offsets(radius).len() {
            return Err(Error::invariant(format!(
                "pattern of radius {radius} needs {} cells, got {}",
                ball_offsets(radius).len(),
                cells.len()
            )));
        }
        Ok(Self {
            radius,
            cells: cells.into_boxed_slice(),
        })
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn cells(&self) -> &[i8] {
        &self.cells
    }

    /// `+`, `-` per cell, `.` for clipped cells.
    pub fn to_pm_string(&self) -> String {
        self.cells
            .iter()
            .map(|&c| match c {
                1 => '+',
                -1 => '-',
                _ => '.',
            })
            .collect()
    }
}

/// What an agent sees of the system at one of its arrivals.
#[derive(Clone, Copy)]
pub struct LocalView<'a> {
    pub graph: &'a Graph,
    pub feelings: &'a FeelingMap,
    pub config: &'a Configuration,
    pub site: usize,
}

impl LocalView<'_> {
    pub fn pattern(&self, radius: u32) -> Pattern {
        let w = self.graph.window();
        let cells = ball_offsets(radius)
            .iter()
            .map(|&(d1, d2)| match w.offset(self.site, d1, d2) {
                Some(y) => self.config.get(y).value() as i8,
                None => 0,
            })
            .collect::<Vec<_>>();
        Pattern {
            radius,
            cells: cells.into_boxed_slice(),
        }
    }

    /// `Σ_y j(x, y) σ(y)` over the sites linked to `x`.
    pub fn linked_sum(&self) -> i32 {
        self.graph
            .neighbours(self.site)
            .iter()
            .zip(self.feelings.row(self.site))
            .map(|(&y, &j)| j as i32 * self.config.get(y).value())
            .sum()
    }

    pub fn spin(&self) -> Spin {
        self.config.get(self.site)
    }
}

/// The `(u, h)` half of a record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub decision: Spin,
    pub reward: i8,
}

/// The record set `R` and the bookkeeping that goes with it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AgentMemory {
    records: IndexMap<Pattern, Outcome>,
    radius: u32,
    last_decision: Option<Spin>,
    losses: u64,
    new_patterns: u64,
    last_novelty: f64,
}

impl AgentMemory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Support radius of the most recently added record; 0 before the first move.
    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn last_decision(&self) -> Option<Spin> {
        self.last_decision
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn lookup(&self, pattern: &Pattern) -> Option<Outcome> {
        self.records.get(pattern).copied()
    }

    /// Records in insertion order.
    pub fn records(&self) -> impl Iterator<Item = (&Pattern, &Outcome)> {
        self.records.iter()
    }

    pub fn losses(&self) -> u64 {
        self.losses
    }

    pub fn new_patterns(&self) -> u64 {
        self.new_patterns
    }

    /// Last time the agent saw a new configuration or lost; 0 if never.
    pub fn last_novelty(&self) -> f64 {
        self.last_novelty
    }

    fn insert(&mut self, pattern: Pattern, outcome: Outcome) -> Result<()> {
        if pattern.radius < self.radius {
            return Err(Error::invariant(format!(
                "record radius decreased from {} to {}",
                self.radius, pattern.radius
            )));
        }
        let radius = pattern.radius;
        if self.records.insert(pattern, outcome).is_some() {
            return Err(Error::invariant("duplicate pattern in record set"));
        }
        self.radius = radius;
        Ok(())
    }

    /// Checks key uniqueness and radius monotonicity over the whole record set.
    pub fn check(&self) -> Result<()> {
        let mut prev = 0;
        for p in self.records.keys() {
            if p.radius < prev {
                return Err(Error::invariant("record radii are not nondecreasing"));
            }
            prev = p.radius;
        }
        let distinct: std::collections::HashSet<&Pattern> = self.records.keys().collect();
        if distinct.len() != self.records.len() {
            return Err(Error::invariant("duplicate pattern in record set"));
        }
        if !self.records.is_empty() && prev != self.radius {
            return Err(Error::invariant(
                "current radius differs from the last record",
            ));
        }
        Ok(())
    }

    /// Diagnostic dump, one `radius | pattern | u | h` line per record.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (p, o) in &self.records {
            let _ = writeln!(
                s,
                "{} | {} | {} | {}",
                p.radius,
                p.to_pm_string(),
                o.decision.value(),
                o.reward
            );
        }
        s
    }
}

/// The loss-eliminating memory strategy.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MemoryStrategy {
    memory: AgentMemory,
    coin_on_miss: bool,
}

impl MemoryStrategy {
    pub fn new(coin_on_miss: bool) -> Self {
        Self {
            memory: AgentMemory::new(),
            coin_on_miss,
        }
    }

    pub fn memory(&self) -> &AgentMemory {
        &self.memory
    }

    pub fn coin_on_miss(&self) -> bool {
        self.coin_on_miss
    }

    /// Pure decision given the memory, the current view, and this arrival's coin.
    pub fn decide(&self, view: &LocalView<'_>, coin: Spin) -> Decision {
        let Some(previous) = self.memory.last_decision else {
            return Decision {
                spin: coin,
                step: Step::First(view.pattern(1)),
            };
        };
        let current = view.pattern(self.memory.radius);
        match self.memory.lookup(&current) {
            Some(known) => {
                let spin = if known.reward < 0 {
                    known.decision.flipped()
                } else {
                    known.decision
                };
                Decision {
                    spin,
                    step: Step::Known {
                        larger: view.pattern(self.memory.radius + 1),
                    },
                }
            }
            None => Decision {
                spin: if self.coin_on_miss { coin } else { previous },
                step: Step::New(current),
            },
        }
    }

    /// Records the outcome of `decision`, received at `time`.
    pub fn observe(&mut self, decision: Decision, reward: i8, time: f64) -> Result<Update> {
        let outcome = Outcome {
            decision: decision.spin,
            reward,
        };
        let mut update = Update::default();
        match decision.step {
            Step::First(p) | Step::New(p) => {
                self.memory.insert(p, outcome)?;
                self.memory.new_patterns += 1;
                update.new_pattern = true;
                update.memory_grew = true;
            }
            Step::Known { larger } => {
                update.known_pattern = true;
                if reward < 0 {
                    self.memory.insert(larger, outcome)?;
                    update.memory_grew = true;
                }
            }
            Step::Fixed => {
                return Err(Error::invariant(
                    "baseline decision fed to a memory strategy",
                ))
            }
        }
        if reward < 0 {
            self.memory.losses += 1;
        }
        if update.memory_grew || reward < 0 {
            self.memory.last_novelty = time;
        }
        self.memory.last_decision = Some(decision.spin);
        update.radius = Some(self.memory.radius);
        Ok(update)
    }
}

/// What the record step needs to know about a decision.
#[derive(Clone, Debug, PartialEq)]
pub enum Step {
    /// First arrival; the radius-1 pattern seen before moving.
    First(Pattern),
    /// Pattern found in memory; the pattern on the next larger ball, recorded on a loss.
    Known { larger: Pattern },
    /// Pattern not in memory.
    New(Pattern),
    /// Baseline strategies keep no memory.
    Fixed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub spin: Spin,
    pub step: Step,
}

/// Flags describing how an agent's state changed at one event.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Update {
    pub memory_grew: bool,
    pub new_pattern: bool,
    pub known_pattern: bool,
    /// Observation radius after the event; `None` for baselines.
    pub radius: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineKind {
    Constant(Spin),
    Coin,
    /// Plays the sign of `Σ_y j(x, y) σ(y)`, tossing the coin on a tie.
    MyopicBestResponse,
}

/// A per-site decision rule.
#[derive(Clone, Debug, PartialEq)]
pub enum Strategy {
    Memory(MemoryStrategy),
    Baseline(BaselineKind),
}

impl Strategy {
    pub fn memory(coin_on_miss: bool) -> Self {
        Strategy::Memory(MemoryStrategy::new(coin_on_miss))
    }

    pub fn baseline(kind: BaselineKind) -> Self {
        Strategy::Baseline(kind)
    }

    pub fn decide(&self, view: &LocalView<'_>, coin: Spin) -> Decision {
        match self {
            Strategy::Memory(m) => m.decide(view, coin),
            Strategy::Baseline(kind) => {
                let spin = match *kind {
                    BaselineKind::Constant(s) => s,
                    BaselineKind::Coin => coin,
                    BaselineKind::MyopicBestResponse => match view.linked_sum().signum() {
                        1 => Spin::Plus,
                        -1 => Spin::Minus,
                        _ => coin,
                    },
                };
                Decision {
                    spin,
                    step: Step::Fixed,
                }
            }
        }
    }

    pub fn observe(&mut self, decision: Decision, reward: i8, time: f64) -> Result<Update> {
        match self {
            Strategy::Memory(m) => m.observe(decision, reward, time),
            Strategy::Baseline(_) => Ok(Update::default()),
        }
    }

    pub fn agent_memory(&self) -> Option<&AgentMemory> {
        match self {
            Strategy::Memory(m) => Some(m.memory()),
            Strategy::Baseline(_) => None,
        }
    }
}

/// Within-horizon estimate of the time after which the agent never again sees
/// a new configuration or loses. `None` for strategies without memory.
pub fn empirical_t(strategy: &Strategy) -> Option<f64> {
    strategy.agent_memory().map(AgentMemory::last_novelty)
}
