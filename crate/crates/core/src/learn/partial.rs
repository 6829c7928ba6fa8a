//! The learner's knowledge: counts, dwell statistics, bounds, MEC records.

use crate::graph::{MecRecord, ObservedGraph};
use crate::model::StateId;
use crate::stats::{lower_tp_estimate, tp_width};

/// Which Bellman equations a learner applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateStyle {
    Blackbox,
    /// Greybox equations everywhere, paying `(1 − p_min)^#(s,a)` per pair.
    GreyboxEquations,
    /// Greybox equations only where all `|post(s,a)|` successors were seen.
    GreyboxWhenComplete,
}

/// The three pseudo-states reached through stay actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terminal {
    /// `s₊`, value 1.
    Plus,
    /// `s₋`, value 0.
    Minus,
    /// `s_?`, lower 0 and upper 1.
    Unknown,
}

/// Probability masses of a stay action over `(s₊, s₋, s_?)`.
pub fn stay_distribution(l: f64, u: f64) -> (f64, f64, f64) {
    assert!(
        (0.0..=1.0).contains(&l) && (0.0..=1.0).contains(&u) && l <= u,
        "stay bounds must satisfy 0 ≤ l ≤ u ≤ 1, got ({l}, {u})"
    );
    (l, 1.0 - u, u - l)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartialAction {
    pub label: String,
    /// `#(s,a)`.
    pub total: u64,
    /// `#(s,a,t)` in first-seen order.
    pub succ: Vec<(usize, u64)>,
    /// `|post(s,a)|` when the oracle is greybox.
    pub post_size: Option<usize>,
    pub dwell_count: u64,
    pub dwell_sum: f64,
    /// Last computed `L̂(s,a)`.
    pub lower: f64,
    /// Last computed `Û(s,a)`.
    pub upper: f64,
}

impl PartialAction {
    fn new(label: String, post_size: Option<usize>) -> Self {
        Self {
            label,
            total: 0,
            succ: Vec::new(),
            post_size,
            dwell_count: 0,
            dwell_sum: 0.0,
            lower: 0.0,
            upper: 1.0,
        }
    }

    pub fn complete(&self) -> bool {
        self.post_size.is_some_and(|p| self.succ.len() >= p)
    }

    /// `λ̂ = #dwell / Σ dwell`, if any dwell time was recorded.
    pub fn rate_estimate(&self) -> Option<f64> {
        (self.dwell_count > 0 && self.dwell_sum > 0.0)
            .then(|| self.dwell_count as f64 / self.dwell_sum)
    }
}

/// `(label, [(successor, #(s,a,t))])` for one action.
pub type CountRow = (String, Vec<(usize, u64)>);

/// Everything the learner has observed. States are numbered locally in
/// discovery order.
#[derive(Debug, Clone, Default)]
pub struct PartialModel {
    external: Vec<StateId>,
    /// Local index by external id; `usize::MAX` for undiscovered states.
    local: Vec<usize>,
    rewards: Vec<f64>,
    actions: Vec<Vec<PartialAction>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    stay_of: Vec<Option<usize>>,
    mecs: Vec<MecRecord>,
    r_max: f64,
    pair_count: usize,
}

impl PartialModel {
    pub fn new() -> Self {
        Self::default()
    }

    /// A frozen partial model from count tables, indexed by state then action.
    pub fn from_counts(rewards: Vec<f64>, table: Vec<Vec<CountRow>>) -> Self {
        let mut pm = Self::new();
        for (s, r) in rewards.iter().enumerate() {
            let labels = table[s].iter().map(|(l, _)| l.clone()).collect();
            pm.discover(s, *r, labels, None);
        }
        for (s, acts) in table.into_iter().enumerate() {
            for (a, (_, succ)) in acts.into_iter().enumerate() {
                for (t, c) in succ {
                    let act = &mut pm.actions[s][a];
                    act.total += c;
                    match act.succ.iter_mut().find(|(u, _)| *u == t) {
                        Some(e) => e.1 += c,
                        None => act.succ.push((t, c)),
                    }
                }
            }
        }
        pm
    }

    /// Registers an external state (idempotent) and returns its local index.
    pub fn discover(
        &mut self,
        external: StateId,
        reward: f64,
        labels: Vec<String>,
        post_sizes: Option<Vec<usize>>,
    ) -> usize {
        if let Some(s) = self.local_of(external) {
            return s;
        }
        let s = self.external.len();
        if self.local.len() <= external {
            self.local.resize(external + 1, usize::MAX);
        }
        self.local[external] = s;
        self.external.push(external);
        self.rewards.push(reward);
        self.r_max = self.r_max.max(reward);
        self.pair_count += labels.len();
        let acts = labels
            .into_iter()
            .enumerate()
            .map(|(a, l)| PartialAction::new(l, post_sizes.as_ref().map(|p| p[a])))
            .collect();
        self.actions.push(acts);
        self.lower.push(0.0);
        self.upper.push(1.0);
        self.stay_of.push(None);
        s
    }

    pub fn local_of(&self, external: StateId) -> Option<usize> {
        self.local.get(external).copied().filter(|&s| s != usize::MAX)
    }

    pub fn external_of(&self, s: usize) -> StateId {
        self.external[s]
    }

    /// Records one observed step `(s, a) → t`.
    pub fn record(&mut self, s: usize, a: usize, t: usize, dwell: Option<f64>) {
        let act = &mut self.actions[s][a];
        act.total += 1;
        match act.succ.iter_mut().find(|(u, _)| *u == t) {
            Some(e) => e.1 += 1,
            None => act.succ.push((t, 1)),
        }
        if let Some(d) = dwell {
            act.dwell_count += 1;
            act.dwell_sum += d;
        }
    }

    pub fn state_count(&self) -> usize {
        self.external.len()
    }

    /// Number of discovered state-action pairs.
    pub fn pair_count(&self) -> usize {
        self.pair_count
    }

    pub fn reward(&self, s: usize) -> f64 {
        self.rewards[s]
    }

    /// Largest reward seen so far (`r_max_seen`).
    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// Divisor turning rewards into `[0,1]`; 1 while nothing positive was seen.
    pub fn scale(&self) -> f64 {
        if self.r_max > 0.0 {
            self.r_max
        } else {
            1.0
        }
    }

    pub fn actions(&self, s: usize) -> &[PartialAction] {
        &self.actions[s]
    }

    pub fn action(&self, s: usize, a: usize) -> &PartialAction {
        &self.actions[s][a]
    }

    pub fn lower(&self, s: usize) -> f64 {
        self.lower[s]
    }

    pub fn upper(&self, s: usize) -> f64 {
        self.upper[s]
    }

    pub fn set_bounds(&mut self, s: usize, lower: f64, upper: f64) {
        self.lower[s] = lower;
        self.upper[s] = upper;
    }

    pub fn mecs(&self) -> &[MecRecord] {
        &self.mecs
    }

    pub fn mec_mut(&mut self, idx: usize) -> &mut MecRecord {
        &mut self.mecs[idx]
    }

    /// Replaces all records and reattaches stay actions.
    pub fn set_mecs(&mut self, mecs: Vec<MecRecord>) {
        self.mecs = mecs;
        self.refresh_stays();
    }

    /// Adds a record, dropping any record sharing a state with it. A dropped
    /// record with identical structure hands over its gain. Returns the index.
    pub fn add_mec(&mut self, mut record: MecRecord) -> usize {
        let mut kept = Vec::with_capacity(self.mecs.len() + 1);
        for old in self.mecs.drain(..) {
            if old.states.iter().any(|&s| record.contains(s)) {
                if old.same_structure(&record) && record.gain.is_none() {
                    record.gain = old.gain;
                    record.sample_budget = old.sample_budget;
                }
            } else {
                kept.push(old);
            }
        }
        kept.push(record);
        self.mecs = kept;
        self.refresh_stays();
        self.mecs.len() - 1
    }

    pub fn remove_mec(&mut self, idx: usize) {
        self.mecs.remove(idx);
        self.refresh_stays();
    }

    fn refresh_stays(&mut self) {
        self.stay_of.iter_mut().for_each(|x| *x = None);
        for (i, m) in self.mecs.iter().enumerate() {
            for &s in &m.states {
                self.stay_of[s] = Some(i);
            }
        }
    }

    /// Index of the MEC record whose stay action `s` carries.
    pub fn stay_of(&self, s: usize) -> Option<usize> {
        self.stay_of[s]
    }

    /// `(l, u)` of the stay action at `s`.
    pub fn stay_bounds(&self, s: usize) -> Option<(f64, f64)> {
        self.stay_of[s].map(|i| self.mecs[i].scaled_gain(self.r_max))
    }

    /// Lower transition estimates `𝕋̂(s,a,·)` and the residual mass.
    pub fn lower_estimates(&self, s: usize, a: usize, delta_tp: f64) -> (Vec<(usize, f64)>, f64) {
        let act = &self.actions[s][a];
        let w = tp_width(act.total, delta_tp);
        let est: Vec<(usize, f64)> = act
            .succ
            .iter()
            .map(|&(t, c)| (t, lower_tp_estimate(c, act.total, w)))
            .collect();
        let sum: f64 = est.iter().map(|&(_, p)| p).sum();
        (est, (1.0 - sum).max(0.0))
    }

    /// Blackbox one-step bounds: the residual mass counts as 0 for the lower
    /// and as 1 for the upper bound.
    pub fn bellman_blackbox(&self, s: usize, a: usize, delta_tp: f64) -> (f64, f64) {
        if self.actions[s][a].total == 0 {
            return (0.0, 1.0);
        }
        let (est, resid) = self.lower_estimates(s, a, delta_tp);
        let l: f64 = est.iter().map(|&(t, p)| p * self.lower[t]).sum();
        let u: f64 = est.iter().map(|&(t, p)| p * self.upper[t]).sum::<f64>() + resid;
        (l.clamp(0.0, 1.0), u.clamp(0.0, 1.0))
    }

    /// Greybox one-step bounds: the residual mass goes to the worst (lower)
    /// or best (upper) seen successor.
    pub fn bellman_greybox(&self, s: usize, a: usize, delta_tp: f64) -> (f64, f64) {
        if self.actions[s][a].total == 0 {
            return (0.0, 1.0);
        }
        let (est, resid) = self.lower_estimates(s, a, delta_tp);
        let min_l = est.iter().map(|&(t, _)| self.lower[t]).fold(f64::INFINITY, f64::min);
        let max_u = est.iter().map(|&(t, _)| self.upper[t]).fold(0.0, f64::max);
        let l: f64 = est.iter().map(|&(t, p)| p * self.lower[t]).sum::<f64>() + resid * min_l;
        let u: f64 = est.iter().map(|&(t, p)| p * self.upper[t]).sum::<f64>() + resid * max_u;
        (l.clamp(0.0, 1.0), u.clamp(0.0, 1.0))
    }

    pub fn uses_greybox_equations(&self, s: usize, a: usize, style: UpdateStyle) -> bool {
        match style {
            UpdateStyle::Blackbox => false,
            UpdateStyle::GreyboxEquations => true,
            UpdateStyle::GreyboxWhenComplete => self.actions[s][a].complete(),
        }
    }

    pub fn bellman(&self, s: usize, a: usize, delta_tp: f64, style: UpdateStyle) -> (f64, f64) {
        if self.uses_greybox_equations(s, a, style) {
            self.bellman_greybox(s, a, delta_tp)
        } else {
            self.bellman_blackbox(s, a, delta_tp)
        }
    }

    /// One synchronous sweep `f(s) = max_a f̂(s,a)` over all states, stay
    /// included. Stores the per-action values. Returns the largest change.
    pub fn global_update(&mut self, delta_tp: f64, style: UpdateStyle) -> f64 {
        let n = self.state_count();
        let mut new_lower = vec![0.0; n];
        let mut new_upper = vec![0.0; n];
        for s in 0..n {
            let (mut best_l, mut best_u) = self.stay_bounds(s).unwrap_or((0.0, 0.0));
            for a in 0..self.actions[s].len() {
                let (l, u) = self.bellman(s, a, delta_tp, style);
                self.actions[s][a].lower = l;
                self.actions[s][a].upper = u;
                best_l = best_l.max(l);
                best_u = best_u.max(u);
            }
            new_lower[s] = best_l;
            new_upper[s] = best_u;
        }
        let mut delta: f64 = 0.0;
        for s in 0..n {
            delta = delta
                .max((new_lower[s] - self.lower[s]).abs())
                .max((new_upper[s] - self.upper[s]).abs());
        }
        self.lower = new_lower;
        self.upper = new_upper;
        delta
    }

    /// Best upper value among the ways out of MEC `idx` (stay included).
    pub fn best_leaving_upper(&self, idx: usize) -> Option<f64> {
        let mec = &self.mecs[idx];
        let mut best: Option<f64> = self.stay_bounds(mec.states[0]).map(|(_, u)| u);
        for &s in &mec.states {
            for (a, act) in self.actions[s].iter().enumerate() {
                if !mec.is_staying(s, a) {
                    best = Some(best.map_or(act.upper, |b| b.max(act.upper)));
                }
            }
        }
        best
    }

    /// Caps `U(s)` for every `s` in MEC `idx` at its best leaving upper value.
    /// Returns the largest decrease.
    pub fn deflate(&mut self, idx: usize) -> f64 {
        let Some(cap) = self.best_leaving_upper(idx) else {
            return 0.0;
        };
        let mut delta: f64 = 0.0;
        for i in 0..self.mecs[idx].states.len() {
            let s = self.mecs[idx].states[i];
            if self.upper[s] > cap {
                delta = delta.max(self.upper[s] - cap);
                self.upper[s] = cap;
            }
        }
        delta
    }

    /// Resets all bounds to `[0, 1]` and iterates sweeps plus deflation until
    /// no value moves by more than `tolerance`. Returns the sweep count.
    pub fn value_iteration(
        &mut self,
        delta_tp: f64,
        style: UpdateStyle,
        tolerance: f64,
        max_sweeps: usize,
    ) -> usize {
        self.lower.iter_mut().for_each(|x| *x = 0.0);
        self.upper.iter_mut().for_each(|x| *x = 1.0);
        for act in self.actions.iter_mut().flatten() {
            act.lower = 0.0;
            act.upper = 1.0;
        }
        for sweep in 1..=max_sweeps {
            let before_upper = self.upper.clone();
            let mut delta = self.global_update(delta_tp, style);
            for idx in 0..self.mecs.len() {
                self.deflate(idx);
            }
            for (s, &u) in before_upper.iter().enumerate() {
                delta = delta.max((self.upper[s] - u).abs());
            }
            if delta < tolerance {
                return sweep;
            }
        }
        max_sweeps
    }

    /// `Σ (1 − p_min)^#(s,a)` over pairs sampled at least once.
    pub fn greybox_surcharge(&self, p_min: f64) -> f64 {
        self.actions
            .iter()
            .flatten()
            .filter(|a| a.total > 0)
            .map(|a| crate::stats::greybox_miss_probability(p_min, a.total))
            .sum()
    }
}

impl ObservedGraph for PartialModel {
    fn state_count(&self) -> usize {
        self.external.len()
    }

    fn action_count(&self, s: StateId) -> usize {
        self.actions[s].len()
    }

    fn observed_successors(&self, s: StateId, a: usize) -> Vec<StateId> {
        self.actions[s][a].succ.iter().map(|&(t, _)| t).collect()
    }

    fn sample_count(&self, s: StateId, a: usize) -> u64 {
        self.actions[s][a].total
    }

    fn successors_complete(&self, s: StateId, a: usize) -> bool {
        self.actions[s][a].complete()
    }
}
