//! On-demand bounded value iteration for mean payoff.
//!
//! A [`Learner`] samples episodes through a [`SampleOracle`], records counts
//! in a [`PartialModel`], detects end components it is δ_TP-sure about,
//! estimates their gains and turns the problem into reachability of `s₊`
//! through stay actions. Bounds on the initial state are reported after every
//! round.

pub mod ctmdp;
mod engine;
pub mod mec;
pub mod partial;

use thiserror::Error;

use crate::graph::GraphError;
use crate::model::{OracleError, SampleOracle};

pub use engine::{Episode, Learner};
pub use partial::{stay_distribution, PartialModel, Terminal, UpdateStyle};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
}

/// How the termination test reads `ε_MP`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecisionMode {
    /// Stop once `U − L < 2ε` on the scaled bounds.
    Absolute,
    /// Stop once `U − L < 2ε / r_max` on the scaled bounds.
    Relative,
}

/// How CTMDP end-component gains are bounded under rate uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MecBoundsMethod {
    /// Three value iterations.
    Heuristic,
    /// Sweep over the reward-sorted split index.
    Exact,
}

/// Source of the timestamps in the trace and of the timeout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockKind {
    Wall,
    /// One microsecond per oracle step and per episode; reproducible.
    Virtual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub epsilon_mp: f64,
    pub delta_mp: f64,
    /// `k`: path occurrences of a state before looking for an end component.
    pub revisit_threshold: usize,
    pub episodes_per_round: usize,
    pub precision: PrecisionMode,
    pub timeout_s: Option<f64>,
    /// Seed of the learner's own generator (action choice, stay resolution).
    pub seed: u64,
    pub update_style: UpdateStyle,
    /// `y` of the aperiodicity transform `yP + (1−y)I`.
    pub aperiodicity: f64,
    pub initial_mec_samples: u64,
    pub mec_sample_multiplier: u64,
    /// Ignore the termination test and run until a limit is hit.
    pub anytime: bool,
    pub max_rounds: Option<usize>,
    /// Cap on oracle steps for the whole run.
    pub max_steps: Option<u64>,
    pub max_episode_steps: Option<u64>,
    pub mec_bounds: MecBoundsMethod,
    pub clock: ClockKind,
    /// Fixpoint tolerance of the global value iteration.
    pub vi_tolerance: f64,
    pub max_vi_sweeps: usize,
    pub mec_vi_max_iterations: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            epsilon_mp: 0.01,
            delta_mp: 0.1,
            revisit_threshold: 6,
            episodes_per_round: 10_000,
            precision: PrecisionMode::Relative,
            timeout_s: Some(1800.0),
            seed: 0,
            update_style: UpdateStyle::Blackbox,
            aperiodicity: 0.95,
            initial_mec_samples: 10_000,
            mec_sample_multiplier: 5,
            anytime: false,
            max_rounds: None,
            max_steps: None,
            max_episode_steps: None,
            mec_bounds: MecBoundsMethod::Heuristic,
            clock: ClockKind::Wall,
            vi_tolerance: 1e-6,
            max_vi_sweeps: 100_000,
            mec_vi_max_iterations: mec::MEC_VI_MAX_ITERATIONS,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::Config(m.to_string()));
        // written so that NaN fails every range check
        let positive = |x: f64| x > 0.0;
        if !positive(self.epsilon_mp) {
            return bad("epsilon must be positive");
        }
        if !(self.delta_mp > 0.0 && self.delta_mp < 1.0) {
            return bad("delta must lie in (0,1)");
        }
        if self.revisit_threshold < 2 {
            return bad("revisit threshold must be at least 2");
        }
        if self.episodes_per_round == 0 {
            return bad("episodes per round must be positive");
        }
        if !(self.aperiodicity > 0.0 && self.aperiodicity < 1.0) {
            return bad("aperiodicity must lie in (0,1)");
        }
        if self.initial_mec_samples == 0 || self.mec_sample_multiplier < 2 {
            return bad("MEC sample schedule must start positive and grow");
        }
        if self.timeout_s.is_some_and(|t| !positive(t)) {
            return bad("timeout must be positive");
        }
        Ok(())
    }
}

/// One anytime record, taken at the end of a round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub time_s: f64,
    pub episodes: u64,
    pub lower: f64,
    pub upper: f64,
    pub inconfidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    Timeout,
    RoundLimit,
    StepLimit,
}

/// Bounds on the maximal mean payoff of the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    pub trace: Vec<TraceRow>,
    /// Final bounds in reward units.
    pub lower: f64,
    pub upper: f64,
    /// Probability that `[lower, upper]` misses the true value.
    pub certified_inconfidence: f64,
    pub stop: StopReason,
    pub episodes: u64,
    pub rounds: usize,
    pub steps: u64,
    pub r_max: f64,
    pub states_discovered: usize,
    pub mec_count: usize,
}

impl BoundsReport {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// Runs the learner to completion on an MDP or CTMDP oracle.
pub fn on_demand_bvi(
    oracle: &mut SampleOracle<'_>,
    config: &LearnerConfig,
) -> Result<BoundsReport, LearnError> {
    Learner::new(oracle, config.clone())?.run()
}

/// [`on_demand_bvi`] restricted to CTMDP oracles.
pub fn on_demand_bvi_ctmdp(
    oracle: &mut SampleOracle<'_>,
    config: &LearnerConfig,
) -> Result<BoundsReport, LearnError> {
    if oracle.kind() != crate::model::ModelKind::Ctmdp {
        return Err(LearnError::Config("oracle is not a CTMDP".into()));
    }
    on_demand_bvi(oracle, config)
}
