use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{ExplicitModel, ModelKind, StateId};

/// How much of the model structure the learner may see.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfoLevel {
    Blackbox,
    /// Additionally exposes `|post(s,a)|`.
    Greybox,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("state {0} does not exist")]
    UnknownState(StateId),
    #[error("state {state} has no action {action}")]
    UnknownAction { state: StateId, action: String },
    #[error("successor counts are only available on a greybox oracle")]
    NotGreybox,
}

/// Outcome of one simulated step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSample {
    pub successor: StateId,
    /// Residence time in the source state; only for CTMDPs.
    pub dwell: Option<f64>,
}

struct SamplingRow {
    cumulative: Vec<f64>,
    targets: Vec<StateId>,
    rate: f64,
}

/// Learner-facing sampling access to a model.
///
/// Exposes the initial state, the available action labels, the reward
/// observed in a state, `p_min`, and sampled steps. Probabilities, rates and
/// successor sets stay hidden. A greybox oracle also answers
/// [`successor_count`](Self::successor_count).
pub struct SampleOracle<'m> {
    model: &'m ExplicitModel,
    info: InfoLevel,
    rng: ChaCha8Rng,
    rows: Vec<Vec<SamplingRow>>,
    steps: u64,
}

impl<'m> SampleOracle<'m> {
    pub fn new(model: &'m ExplicitModel, info: InfoLevel, seed: u64) -> Self {
        let rows = (0..model.state_count())
            .map(|s| {
                model
                    .actions(s)
                    .iter()
                    .map(|row| {
                        let rate = row.total();
                        let mut acc = 0.0;
                        let mut cumulative = Vec::with_capacity(row.entries.len());
                        let mut targets = Vec::with_capacity(row.entries.len());
                        for &(t, w) in &row.entries {
                            acc += w / rate;
                            cumulative.push(acc);
                            targets.push(t);
                        }
                        SamplingRow {
                            cumulative,
                            targets,
                            rate,
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            model,
            info,
            rng: ChaCha8Rng::seed_from_u64(seed),
            rows,
            steps: 0,
        }
    }

    pub fn info_level(&self) -> InfoLevel {
        self.info
    }

    pub fn kind(&self) -> ModelKind {
        self.model.kind()
    }

    pub fn init(&self) -> StateId {
        self.model.init()
    }

    pub fn p_min(&self) -> f64 {
        self.model.p_min()
    }

    /// Reward observed on visiting `s` (per step, or per unit time for a CTMDP).
    pub fn reward(&self, s: StateId) -> f64 {
        self.model.reward(s)
    }

    /// Labels of the actions available in `s`.
    pub fn actions(&self, s: StateId) -> Result<Vec<&'m str>, OracleError> {
        if s >= self.model.state_count() {
            return Err(OracleError::UnknownState(s));
        }
        Ok(self
            .model
            .actions(s)
            .iter()
            .map(|r| r.label.as_str())
            .collect())
    }

    pub fn action_count(&self, s: StateId) -> Result<usize, OracleError> {
        if s >= self.model.state_count() {
            return Err(OracleError::UnknownState(s));
        }
        Ok(self.model.actions(s).len())
    }

    /// Total number of steps sampled so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Samples a step of action number `a` (in [`actions`](Self::actions) order).
    pub fn sample_step(&mut self, s: StateId, a: usize) -> Result<StepSample, OracleError> {
        let row = self
            .rows
            .get(s)
            .ok_or(OracleError::UnknownState(s))?
            .get(a)
            .ok_or_else(|| OracleError::UnknownAction {
                state: s,
                action: format!("#{a}"),
            })?;
        self.steps += 1;
        let u: f64 = self.rng.random();
        let idx = row
            .cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(row.targets.len() - 1);
        let successor = row.targets[idx];
        let dwell = match self.model.kind() {
            ModelKind::Mdp => None,
            ModelKind::Ctmdp => {
                // u in (0,1]
                let u: f64 = 1.0 - self.rng.random::<f64>();
                Some(-u.ln() / row.rate)
            }
        };
        Ok(StepSample { successor, dwell })
    }

    pub fn sample_step_by_label(
        &mut self,
        s: StateId,
        label: &str,
    ) -> Result<StepSample, OracleError> {
        if s >= self.model.state_count() {
            return Err(OracleError::UnknownState(s));
        }
        let a = self
            .model
            .action_index(s, label)
            .ok_or_else(|| OracleError::UnknownAction {
                state: s,
                action: label.to_string(),
            })?;
        self.sample_step(s, a)
    }

    /// `|post(s,a)|`; greybox only.
    pub fn successor_count(&self, s: StateId, a: usize) -> Result<usize, OracleError> {
        if self.info != InfoLevel::Greybox {
            return Err(OracleError::NotGreybox);
        }
        let row = self
            .rows
            .get(s)
            .ok_or(OracleError::UnknownState(s))?
            .get(a)
            .ok_or_else(|| OracleError::UnknownAction {
                state: s,
                action: format!("#{a}"),
            })?;
        Ok(row.targets.len())
    }
}
