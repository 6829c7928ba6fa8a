//! Explicit-state MDP and CTMDP models.
//!
//! An [`ExplicitModel`] carries everything about a model: probabilities or
//! rates, rewards, and the declared `p_min`. Only the [`SampleOracle`] and the
//! whitebox solver read it directly; learners go through the oracle.

mod oracle;
mod parse;

use std::fmt;

use thiserror::Error;

pub use oracle::{InfoLevel, OracleError, SampleOracle, StepSample};
pub use parse::parse_model;

/// Dense 0-based state index.
pub type StateId = usize;

/// Row sums of MDP distributions must hit 1 within this tolerance.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Mdp,
    Ctmdp,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Mdp => f.write_str("mdp"),
            ModelKind::Ctmdp => f.write_str("ctmdp"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("row sum {sum} ≠ 1 at ({state},{action})")]
    RowSum { state: StateId, action: String, sum: f64 },
    #[error("zero total rate at ({state},{action})")]
    ZeroRate { state: StateId, action: String },
    #[error("entry {value} below p_min {p_min} at ({state},{action})")]
    BelowPmin {
        state: StateId,
        action: String,
        value: f64,
        p_min: f64,
    },
    #[error("dangling state index {target} at ({state},{action})")]
    DanglingState {
        state: StateId,
        action: String,
        target: StateId,
    },
    #[error("negative weight {value} at ({state},{action})")]
    NegativeWeight {
        state: StateId,
        action: String,
        value: f64,
    },
    #[error("state {0} has no actions")]
    NoActions(StateId),
    #[error("invalid model: {0}")]
    Invalid(String),
}

/// One action of one state: its label and its nonzero successor weights.
///
/// For an MDP the weights are probabilities; for a CTMDP they are rates
/// `R(s,a,t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionRow {
    pub label: String,
    pub entries: Vec<(StateId, f64)>,
}

impl ActionRow {
    pub fn new(label: impl Into<String>, entries: Vec<(StateId, f64)>) -> Self {
        Self {
            label: label.into(),
            entries,
        }
    }

    /// Sum of all weights: 1 for an MDP row, `λ(s,a)` for a CTMDP row.
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w).sum()
    }

    /// Normalised successor distribution (embedded probabilities for a CTMDP).
    pub fn distribution(&self) -> Vec<(StateId, f64)> {
        let total = self.total();
        self.entries.iter().map(|&(t, w)| (t, w / total)).collect()
    }

    pub fn successors(&self) -> impl Iterator<Item = StateId> + '_ {
        self.entries.iter().map(|&(t, _)| t)
    }
}

/// A fully known MDP or CTMDP.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitModel {
    kind: ModelKind,
    init: StateId,
    p_min: f64,
    rewards: Vec<f64>,
    actions: Vec<Vec<ActionRow>>,
}

impl ExplicitModel {
    /// Builds and validates a model. Zero-weight entries are dropped.
    pub fn new(
        kind: ModelKind,
        init: StateId,
        p_min: f64,
        rewards: Vec<f64>,
        actions: Vec<Vec<ActionRow>>,
    ) -> Result<Self, ModelError> {
        let mut actions = actions;
        for rows in &mut actions {
            for row in rows.iter_mut() {
                row.entries.retain(|&(_, w)| w != 0.0);
            }
        }
        let model = Self {
            kind,
            init,
            p_min,
            rewards,
            actions,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let n = self.actions.len();
        if n == 0 {
            return Err(ModelError::Invalid("model has no states".into()));
        }
        if self.rewards.len() != n {
            return Err(ModelError::Invalid(format!(
                "{} rewards for {} states",
                self.rewards.len(),
                n
            )));
        }
        if self.init >= n {
            return Err(ModelError::Invalid(format!(
                "init {} out of range for {} states",
                self.init, n
            )));
        }
        if !(self.p_min > 0.0 && self.p_min <= 1.0) {
            return Err(ModelError::Invalid(format!(
                "p_min {} not in (0,1]",
                self.p_min
            )));
        }
        for (s, &r) in self.rewards.iter().enumerate() {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(ModelError::Invalid(format!(
                    "reward {r} of state {s} is not a nonnegative real"
                )));
            }
        }
        for (s, rows) in self.actions.iter().enumerate() {
            if rows.is_empty() {
                return Err(ModelError::NoActions(s));
            }
            for (i, row) in rows.iter().enumerate() {
                if rows[..i].iter().any(|r| r.label == row.label) {
                    return Err(ModelError::Invalid(format!(
                        "duplicate action {} at state {s}",
                        row.label
                    )));
                }
                self.validate_row(s, row)?;
            }
        }
        Ok(())
    }

    fn validate_row(&self, s: StateId, row: &ActionRow) -> Result<(), ModelError> {
        let n = self.actions.len();
        for &(t, w) in &row.entries {
            if t >= n {
                return Err(ModelError::DanglingState {
                    state: s,
                    action: row.label.clone(),
                    target: t,
                });
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(ModelError::NegativeWeight {
                    state: s,
                    action: row.label.clone(),
                    value: w,
                });
            }
        }
        let total = row.total();
        match self.kind {
            ModelKind::Mdp => {
                if (total - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(ModelError::RowSum {
                        state: s,
                        action: row.label.clone(),
                        sum: total,
                    });
                }
            }
            ModelKind::Ctmdp => {
                if total <= 0.0 {
                    return Err(ModelError::ZeroRate {
                        state: s,
                        action: row.label.clone(),
                    });
                }
            }
        }
        for &(_, w) in &row.entries {
            let p = w / total;
            if p + ROW_SUM_TOLERANCE < self.p_min {
                return Err(ModelError::BelowPmin {
                    state: s,
                    action: row.label.clone(),
                    value: p,
                    p_min: self.p_min,
                });
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn init(&self) -> StateId {
        self.init
    }

    pub fn p_min(&self) -> f64 {
        self.p_min
    }

    pub fn state_count(&self) -> usize {
        self.actions.len()
    }

    pub fn reward(&self, s: StateId) -> f64 {
        self.rewards[s]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn max_reward(&self) -> f64 {
        self.rewards.iter().copied().fold(0.0, f64::max)
    }

    pub fn actions(&self, s: StateId) -> &[ActionRow] {
        &self.actions[s]
    }

    pub fn row(&self, s: StateId, a: usize) -> &ActionRow {
        &self.actions[s][a]
    }

    pub fn action_index(&self, s: StateId, label: &str) -> Option<usize> {
        self.actions[s].iter().position(|r| r.label == label)
    }

    /// Exit rate `λ(s,a)`; 1 for MDP rows.
    pub fn exit_rate(&self, s: StateId, a: usize) -> f64 {
        self.actions[s][a].total()
    }

    /// Number of states reachable from `init` in the underlying graph.
    pub fn reachable_count(&self) -> usize {
        let mut seen = vec![false; self.state_count()];
        let mut stack = vec![self.init];
        seen[self.init] = true;
        let mut count = 0;
        while let Some(s) = stack.pop() {
            count += 1;
            for row in &self.actions[s] {
                for t in row.successors() {
                    if !seen[t] {
                        seen[t] = true;
                        stack.push(t);
                    }
                }
            }
        }
        count
    }

    /// Smallest nonzero (embedded) transition probability in the model.
    pub fn smallest_probability(&self) -> f64 {
        self.actions
            .iter()
            .flatten()
            .flat_map(|row| row.distribution().into_iter().map(|(_, p)| p))
            .fold(1.0, f64::min)
    }

    /// The embedded discrete-time MDP, `𝕋(s,a,t) = R(s,a,t)/λ(s,a)`.
    /// Returns a clone for MDPs.
    pub fn embedded_mdp(&self) -> ExplicitModel {
        let actions = self
            .actions
            .iter()
            .map(|rows| {
                rows.iter()
                    .map(|row| ActionRow::new(row.label.clone(), row.distribution()))
                    .collect()
            })
            .collect();
        ExplicitModel {
            kind: ModelKind::Mdp,
            init: self.init,
            p_min: self.p_min,
            rewards: self.rewards.clone(),
            actions,
        }
    }

    /// The uniformized discrete-time MDP with constant `c ≥ max λ`. Its mean
    /// payoff per step equals the CTMDP's reward per unit time.
    pub fn uniformized(&self, c: Option<f64>) -> Result<ExplicitModel, ModelError> {
        if self.kind != ModelKind::Ctmdp {
            return Err(ModelError::Invalid("uniformization needs a CTMDP".into()));
        }
        let max_rate = self
            .actions
            .iter()
            .flatten()
            .map(ActionRow::total)
            .fold(0.0, f64::max);
        let c = c.unwrap_or(max_rate);
        if c < max_rate {
            return Err(ModelError::Invalid(format!(
                "uniformization constant {c} below max rate {max_rate}"
            )));
        }
        let actions: Vec<Vec<ActionRow>> = self
            .actions
            .iter()
            .enumerate()
            .map(|(s, rows)| {
                rows.iter()
                    .map(|row| {
                        let lambda = row.total();
                        let mut entries: Vec<(StateId, f64)> =
                            row.entries.iter().map(|&(t, r)| (t, r / c)).collect();
                        let remainder = 1.0 - lambda / c;
                        if remainder > 0.0 {
                            match entries.iter_mut().find(|(t, _)| *t == s) {
                                Some(e) => e.1 += remainder,
                                None => entries.push((s, remainder)),
                            }
                        }
                        ActionRow::new(row.label.clone(), entries)
                    })
                    .collect()
            })
            .collect();
        let p_min = actions
            .iter()
            .flatten()
            .flat_map(|row: &ActionRow| row.entries.iter().map(|&(_, p)| p))
            .fold(1.0, f64::min);
        Ok(ExplicitModel {
            kind: ModelKind::Mdp,
            init: self.init,
            p_min,
            rewards: self.rewards.clone(),
            actions,
        })
    }
}

impl fmt::Display for ExplicitModel {
    /// Writes the model in the text format accepted by [`parse_model`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.kind)?;
        writeln!(f, "states {}", self.state_count())?;
        writeln!(f, "init {}", self.init)?;
        writeln!(f, "pmin {}", self.p_min)?;
        for (s, &r) in self.rewards.iter().enumerate() {
            if r != 0.0 {
                writeln!(f, "reward {s} {r}")?;
            }
        }
        for (s, rows) in self.actions.iter().enumerate() {
            for row in rows {
                for &(t, w) in &row.entries {
                    writeln!(f, "t {s} {} {t} {w}", row.label)?;
                }
            }
        }
        Ok(())
    }
}
