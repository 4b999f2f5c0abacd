//! Single-type dyadic branching Brownian motion.

use serde::{Deserialize, Serialize};

use crate::config::Configuration;
use crate::engine::{self, Dynamics, Kind, Reaction, Settings};
use crate::error::{Error, Result};
use crate::event::Trajectory;
use crate::rng::RandomStream;

/// Every particle splits at this rate.
pub const BRANCHING_RATE: f64 = 1.0;

pub const DEFAULT_POPULATION_CAP: usize = 2_000_000;
pub const DEFAULT_GRID_POINTS: usize = 64;

/// In JSON only `horizon` is required; the grid defaults to 64 evenly spaced times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawParams")]
pub struct BBMParams {
    pub horizon: f64,
    pub observation_times: Vec<f64>,
    pub population_cap: usize,
    /// Diagnostic mode: particles move but never branch.
    pub suppress_branching: bool,
    pub record_events: bool,
}

#[derive(Deserialize)]
struct RawParams {
    horizon: f64,
    observation_times: Option<Vec<f64>>,
    #[serde(default = "default_cap")]
    population_cap: usize,
    #[serde(default)]
    suppress_branching: bool,
    #[serde(default = "default_true")]
    record_events: bool,
}

impl From<RawParams> for BBMParams {
    fn from(r: RawParams) -> Self {
        Self {
            observation_times: r
                .observation_times
                .unwrap_or_else(|| uniform_grid(r.horizon, DEFAULT_GRID_POINTS)),
            horizon: r.horizon,
            population_cap: r.population_cap,
            suppress_branching: r.suppress_branching,
            record_events: r.record_events,
        }
    }
}

fn default_cap() -> usize {
    DEFAULT_POPULATION_CAP
}

fn default_true() -> bool {
    true
}

impl BBMParams {
    /// Default grid of 64 evenly spaced times from 0 to `horizon`.
    pub fn new(horizon: f64) -> Self {
        Self::with_times(horizon, uniform_grid(horizon, DEFAULT_GRID_POINTS))
    }

    pub fn with_times(horizon: f64, observation_times: Vec<f64>) -> Self {
        Self {
            horizon,
            observation_times,
            population_cap: DEFAULT_POPULATION_CAP,
            suppress_branching: false,
            record_events: true,
        }
    }

    pub fn branching_rate(&self) -> f64 {
        BRANCHING_RATE
    }

    pub fn suppressed(mut self) -> Self {
        self.suppress_branching = true;
        self
    }

    pub fn without_events(mut self) -> Self {
        self.record_events = false;
        self
    }

    pub fn validate(&self, start: f64) -> Result<()> {
        if !(self.horizon >= start) || !self.horizon.is_finite() {
            return Err(Error::param(format!(
                "horizon {} must be finite and at least the start time {start}",
                self.horizon
            )));
        }
        if self.population_cap < 1 {
            return Err(Error::param("population_cap must be at least 1"));
        }
        if self.observation_times.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::param("observation_times must be sorted"));
        }
        if self
            .observation_times
            .iter()
            .any(|&t| !(t >= start && t <= self.horizon))
        {
            return Err(Error::param(format!(
                "observation_times must lie in [{start}, {}]",
                self.horizon
            )));
        }
        Ok(())
    }

    pub(crate) fn settings(&self, dt: f64) -> Settings {
        let mut observation_times = self.observation_times.clone();
        observation_times.dedup();
        Settings {
            horizon: self.horizon,
            observation_times,
            population_cap: self.population_cap,
            branching: !self.suppress_branching,
            record_events: self.record_events,
            dt,
        }
    }
}

/// `n` evenly spaced times from 0 to `horizon` inclusive (just `[0]` when
/// the horizon is 0 or `n < 2`).
pub fn uniform_grid(horizon: f64, n: usize) -> Vec<f64> {
    if horizon <= 0.0 || n < 2 {
        return vec![0.0];
    }
    (0..n)
        .map(|k| {
            if k + 1 == n {
                horizon
            } else {
                horizon * k as f64 / (n - 1) as f64
            }
        })
        .collect()
}

struct Free;

impl Dynamics for Free {
    fn interacts(&self, _: Kind, _: Kind) -> bool {
        false
    }
    fn react(&mut self, _: Kind, _: Kind) -> Reaction {
        unreachable!("free particles never react")
    }
    fn inert(&self, _: Kind) -> bool {
        true
    }
}

/// Exact simulation of independent branching Brownian particles.
pub fn simulate_bbm(initial: &Configuration, params: &BBMParams, rng: &mut RandomStream) -> Result<Trajectory> {
    params.validate(initial.time)?;
    Ok(engine::run(initial, &params.settings(1.0), &mut Free, rng))
}

/// Rightmost position, `-inf` for the empty configuration.
pub fn max_displacement(c: &Configuration) -> f64 {
    c.particles.last().map_or(f64::NEG_INFINITY, |p| p.position)
}
