//! Experiment configuration, read from a TOML document.
//!
//! ```toml
//! kind = "fixation"
//! L = 32
//! horizon = 200.0
//! seed = 7
//! ```
//!
//! Everything else has a default. See [`ExperimentConfig`] for the keys.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::EdgeParams;
use crate::lattice::{BoundaryMode, Frame, Spin};
use crate::mixing::partition_subboxes;
use crate::strategy::{BaselineKind, Strategy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("config: {message}")]
    Document { message: String },

    #[error("config field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    GraphStats,
    Simulate,
    Fixation,
    Mixing,
    NashCheck,
    OracleCheck,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::GraphStats => "graph-stats",
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Fixation => "fixation",
            ExperimentKind::Mixing => "mixing",
            ExperimentKind::NashCheck => "nash-check",
            ExperimentKind::OracleCheck => "oracle-check",
        }
    }
}

/// Spins placed on a frozen frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameSpec {
    Plus,
    Minus,
    /// `+1` where `x1 + x2` is even.
    Checker,
}

impl FrameSpec {
    pub fn name(self) -> &'static str {
        match self {
            FrameSpec::Plus => "plus",
            FrameSpec::Minus => "minus",
            FrameSpec::Checker => "checker",
        }
    }

    pub fn build(self, side: usize, width: usize) -> crate::Result<Frame> {
        match self {
            FrameSpec::Plus => Frame::uniform(side, width, Spin::Plus),
            FrameSpec::Minus => Frame::uniform(side, width, Spin::Minus),
            FrameSpec::Checker => {
                let w =
                    crate::lattice::Window::pinned(side, Frame::uniform(side, width, Spin::Plus)?)?;
                let spins = w
                    .frame_indices()
                    .map(|i| {
                        let s = w.site(i);
                        if (s.x1 + s.x2).rem_euclid(2) == 0 {
                            Spin::Plus
                        } else {
                            Spin::Minus
                        }
                    })
                    .collect();
                Frame::new(side, width, spins)
            }
        }
    }
}

/// Decision rule used at every site.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategySpec {
    Memory,
    Coin,
    ConstantPlus,
    ConstantMinus,
    BestResponse,
}

impl StrategySpec {
    pub fn build(self, coin_on_miss: bool) -> Strategy {
        match self {
            StrategySpec::Memory => Strategy::memory(coin_on_miss),
            StrategySpec::Coin => Strategy::baseline(BaselineKind::Coin),
            StrategySpec::ConstantPlus => Strategy::baseline(BaselineKind::Constant(Spin::Plus)),
            StrategySpec::ConstantMinus => Strategy::baseline(BaselineKind::Constant(Spin::Minus)),
            StrategySpec::BestResponse => Strategy::baseline(BaselineKind::MyopicBestResponse),
        }
    }
}

/// The document as written, before defaults and validation.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    kind: Option<ExperimentKind>,
    #[serde(rename = "L")]
    side: Option<i64>,
    boundary: Option<String>,
    frame_width: Option<i64>,
    frame: Option<FrameSpec>,
    #[serde(rename = "C")]
    c: Option<f64>,
    gamma: Option<f64>,
    symmetric: Option<bool>,
    coin_on_miss: Option<bool>,
    strategy: Option<StrategySpec>,
    horizon: Option<f64>,
    replicas: Option<i64>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    thresholds: Option<Vec<f64>>,
    ladder: Option<Vec<i64>>,
    rho: Option<f64>,
    t: Option<f64>,
    region: Option<i64>,
    pairs: Option<Vec<(FrameSpec, FrameSpec)>>,
    resamples: Option<i64>,
    agents: Option<i64>,
    energy_points: Option<i64>,
}

/// A validated experiment description.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(rename = "L")]
    pub side: usize,
    pub boundary: &'static str,
    /// Width of the frozen frame for pinned windows.
    pub frame_width: usize,
    /// Frame used by single-window runs under pinned boundaries.
    pub frame: FrameSpec,
    #[serde(rename = "C")]
    pub c: f64,
    pub gamma: f64,
    pub symmetric: bool,
    pub coin_on_miss: bool,
    pub strategy: StrategySpec,
    pub horizon: f64,
    pub replicas: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Tail thresholds for the fixation bound.
    pub thresholds: Vec<f64>,
    /// Window sides for the mixing ladder.
    pub ladder: Vec<usize>,
    /// Subbox exponent.
    pub rho: f64,
    /// Observation time of the mixing region.
    pub t: f64,
    /// Side of the centred observation square.
    pub region: usize,
    /// Frame pairs compared in mixing runs.
    pub pairs: Vec<(FrameSpec, FrameSpec)>,
    /// Bootstrap resamples for confidence widths.
    pub resamples: usize,
    /// Agents examined per replica by the Nash check.
    pub agents: usize,
    /// Points of the energy time grid.
    pub energy_points: usize,
}

impl ExperimentConfig {
    pub fn edge_params(&self) -> EdgeParams {
        EdgeParams::new(self.c, self.gamma).expect("validated")
    }

    pub fn boundary_mode(&self) -> BoundaryMode {
        BoundaryMode::parse(self.boundary).expect("validated")
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy.build(self.coin_on_miss)
    }
}

pub const MAX_FRAME_WIDTH: usize = 16;

/// Expected clock arrivals per replica above which a run is refused.
const MAX_EXPECTED_EVENTS: f64 = 2e9;

fn line_of(text: &str, offset: usize) -> usize {
    text.as_bytes()[..offset.min(text.len())]
        .iter()
        .filter(|&&b| b == b'\n')
        .count()
        + 1
}

fn positive(field: &'static str, v: Option<i64>, default: i64) -> Result<usize, ConfigError> {
    let v = v.unwrap_or(default);
    if v < 1 {
        return Err(invalid(
            field,
            format!("must be a positive integer, got {v}"),
        ));
    }
    usize::try_from(v).map_err(|_| invalid(field, "out of range"))
}

fn finite(field: &'static str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(field, format!("must be finite, got {v}")))
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| match e.span() {
        Some(span) => {
            let mut message = e.message().to_string();
            if message.starts_with("duplicate key") {
                let key = text.get(span.clone()).unwrap_or("").trim();
                message = format!("duplicate key `{key}`");
            }
            ConfigError::Syntax {
                line: line_of(text, span.start),
                message,
            }
        }
        None => ConfigError::Document {
            message: e.message().to_string(),
        },
    })?;

    let kind = raw
        .kind
        .ok_or_else(|| invalid("kind", "missing required key"))?;
    let side = positive(
        "L",
        Some(
            raw.side
                .ok_or_else(|| invalid("L", "missing required key"))?,
        ),
        1,
    )?;
    if side < 2 {
        return Err(invalid("L", "must be at least 2"));
    }
    if side > 4096 {
        return Err(invalid(
            "L",
            format!("{side} is beyond what a single process can simulate"),
        ));
    }
    let horizon = finite(
        "horizon",
        raw.horizon
            .ok_or_else(|| invalid("horizon", "missing required key"))?,
    )?;
    if horizon <= 0.0 {
        return Err(invalid(
            "horizon",
            format!("must be positive, got {horizon}"),
        ));
    }
    if (side * side) as f64 * horizon > MAX_EXPECTED_EVENTS {
        return Err(invalid(
            "horizon",
            "L² · horizon exceeds the supported number of clock arrivals",
        ));
    }
    let seed = raw
        .seed
        .ok_or_else(|| invalid("seed", "missing required key"))?;

    let b = raw.boundary.as_deref().unwrap_or("torus");
    let boundary = BoundaryMode::parse(b)
        .ok_or_else(|| {
            invalid(
                "boundary",
                format!("expected torus, free or pinned, got `{b}`"),
            )
        })?
        .name();
    let frame_width = positive("frame_width", raw.frame_width, 2)?;
    if frame_width > side.min(MAX_FRAME_WIDTH) {
        return Err(invalid(
            "frame_width",
            format!("must not exceed L or {MAX_FRAME_WIDTH}"),
        ));
    }
    let c = finite("C", raw.c.unwrap_or(1.0))?;
    let gamma = finite("gamma", raw.gamma.unwrap_or(9.0))?;
    EdgeParams::new(c, gamma).map_err(|e| match e {
        crate::Error::InvalidParameter { name: "C", reason } => invalid("C", reason),
        other => invalid("gamma", other.to_string()),
    })?;

    let replicas = positive("replicas", raw.replicas, 1)?;
    let thresholds = raw.thresholds.unwrap_or_else(|| vec![10.0, 20.0, 50.0]);
    if thresholds.is_empty() || thresholds.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
        return Err(invalid(
            "thresholds",
            "need a non-empty list of positive numbers",
        ));
    }
    let rho = finite("rho", raw.rho.unwrap_or(13.0 / 42.0))?;
    if !(rho > 0.0 && rho < 1.0) {
        return Err(invalid("rho", format!("must lie in (0, 1), got {rho}")));
    }
    let ladder = raw
        .ladder
        .unwrap_or_else(|| vec![8, 16, 32])
        .into_iter()
        .map(|l| positive("ladder", Some(l), 1))
        .collect::<Result<Vec<_>, _>>()?;
    if ladder.is_empty() {
        return Err(invalid("ladder", "must not be empty"));
    }
    for &l in &ladder {
        if l > 4096 {
            return Err(invalid(
                "ladder",
                format!("{l} is beyond what a single process can simulate"),
            ));
        }
        partition_subboxes(l, rho).map_err(|e| invalid("ladder", e.to_string()))?;
    }
    let t = finite("t", raw.t.unwrap_or(5.0))?;
    if t < 0.0 {
        return Err(invalid("t", "must be non-negative"));
    }
    if kind == ExperimentKind::Mixing && t > horizon {
        return Err(invalid(
            "t",
            format!("observation time {t} exceeds the horizon {horizon}"),
        ));
    }
    let region = positive("region", raw.region, 2)?;
    if region > 3 {
        return Err(invalid(
            "region",
            "the observation square has at most 3 x 3 sites",
        ));
    }
    if ladder.iter().any(|&l| l < region) {
        return Err(invalid("region", "does not fit the smallest ladder window"));
    }
    let pairs = raw.pairs.unwrap_or_else(|| {
        vec![
            (FrameSpec::Plus, FrameSpec::Minus),
            (FrameSpec::Plus, FrameSpec::Plus),
        ]
    });
    if pairs.is_empty() {
        return Err(invalid("pairs", "must not be empty"));
    }
    let resamples = positive("resamples", raw.resamples, 1000)?;
    let agents = positive("agents", raw.agents, 5)?;
    if agents > side * side {
        return Err(invalid("agents", "more agents than sites"));
    }
    let energy_points = positive("energy_points", raw.energy_points, 401)?;
    if energy_points < 2 {
        return Err(invalid("energy_points", "need at least 2"));
    }

    Ok(ExperimentConfig {
        kind,
        side,
        boundary,
        frame_width,
        frame: raw.frame.unwrap_or(FrameSpec::Plus),
        c,
        gamma,
        symmetric: raw.symmetric.unwrap_or(false),
        coin_on_miss: raw.coin_on_miss.unwrap_or(false),
        strategy: raw.strategy.unwrap_or(StrategySpec::Memory),
        horizon,
        replicas,
        seed,
        out: raw.out,
        thresholds,
        ladder,
        rho,
        t,
        region,
        pairs,
        resamples,
        agents,
        energy_points,
    })
}
