use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{best_leaving_action, find_delta_sure_mecs, Candidate, Choice, MecRecord};
use crate::model::{InfoLevel, ModelKind, SampleOracle, StateId};
use crate::stats::InconfidenceBudget;

use super::ctmdp::{find_mec_mp_bounds_exact, find_mec_mp_bounds_heuristic, CtmdpMec, GainSettings, RateTable};
use super::mec::{compute_n_samples, mec_value_iteration, MecRows};
use super::partial::{PartialModel, Terminal, UpdateStyle};
use super::{BoundsReport, ClockKind, LearnError, LearnerConfig, MecBoundsMethod, PrecisionMode, StopReason, TraceRow};

const VIRTUAL_SECONDS_PER_TICK: f64 = 1e-6;
/// Values closer than this count as tied when choosing actions.
const TIE_TOLERANCE: f64 = 1e-12;
/// Oracle steps between timeout checks inside long simulations.
const CHECK_EVERY: u64 = 1 << 14;
/// Mixed into the seed so the learner's stream differs from an oracle seeded
/// with the same number.
const LEARNER_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

/// One simulated episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    /// Local state indices in visiting order, starting at the initial state.
    pub path: Vec<usize>,
    /// `None` if the episode was cut short by a limit.
    pub end: Option<Terminal>,
    /// MEC record and state whose stay action ended the episode.
    pub stay: Option<(usize, usize)>,
}

enum MecRun {
    Done,
    Stale,
    Interrupted,
}

/// The learner state across rounds.
pub struct Learner<'o, 'm> {
    oracle: &'o mut SampleOracle<'m>,
    config: LearnerConfig,
    pm: PartialModel,
    rng: ChaCha8Rng,
    budget: InconfidenceBudget,
    kind: ModelKind,
    p_min: f64,
    greybox: bool,
    init: usize,
    episodes: u64,
    rounds: usize,
    steps_at_start: u64,
    started: Instant,
    trace: Vec<TraceRow>,
    stop: Option<StopReason>,
    occurrences: Vec<u32>,
}

impl<'o, 'm> Learner<'o, 'm> {
    pub fn new(oracle: &'o mut SampleOracle<'m>, config: LearnerConfig) -> Result<Self, LearnError> {
        config.validate()?;
        let kind = oracle.kind();
        let p_min = oracle.p_min();
        let budget = match kind {
            ModelKind::Mdp => InconfidenceBudget::mdp(config.delta_mp),
            ModelKind::Ctmdp => InconfidenceBudget::ctmdp(config.delta_mp, p_min),
        };
        let greybox = oracle.info_level() == InfoLevel::Greybox;
        let steps_at_start = oracle.steps();
        let rng = ChaCha8Rng::seed_from_u64(config.seed ^ LEARNER_STREAM);
        let mut learner = Self {
            oracle,
            config,
            pm: PartialModel::new(),
            rng,
            budget,
            kind,
            p_min,
            greybox,
            init: 0,
            episodes: 0,
            rounds: 0,
            steps_at_start,
            started: Instant::now(),
            trace: Vec::new(),
            stop: None,
            occurrences: Vec::new(),
        };
        let init = learner.oracle.init();
        learner.init = learner.discover(init)?;
        Ok(learner)
    }

    pub fn partial(&self) -> &PartialModel {
        &self.pm
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        self.stop
    }

    /// Oracle steps taken by this learner.
    pub fn steps(&self) -> u64 {
        self.oracle.steps() - self.steps_at_start
    }

    /// Seconds on the configured clock.
    pub fn now(&self) -> f64 {
        match self.config.clock {
            ClockKind::Wall => self.started.elapsed().as_secs_f64(),
            ClockKind::Virtual => (self.steps() + self.episodes) as f64 * VIRTUAL_SECONDS_PER_TICK,
        }
    }

    /// `δ_TP` for the current number of discovered pairs.
    pub fn delta_tp(&self) -> f64 {
        self.budget.delta_tp(self.p_min, self.pm.pair_count())
    }

    /// `δ_R` for the current number of discovered pairs.
    pub fn delta_r(&self) -> f64 {
        self.budget.delta_r(self.pm.pair_count())
    }

    /// Termination threshold on the scaled bounds.
    pub fn threshold(&self) -> f64 {
        match self.config.precision {
            PrecisionMode::Absolute => 2.0 * self.config.epsilon_mp,
            PrecisionMode::Relative => 2.0 * self.config.epsilon_mp / self.pm.scale(),
        }
    }

    pub fn certified_inconfidence(&self) -> f64 {
        let mut d = self.config.delta_mp;
        if self.config.update_style == UpdateStyle::GreyboxEquations {
            d += self.pm.greybox_surcharge(self.p_min);
        }
        d.min(1.0)
    }

    fn limit_hit(&self) -> Option<StopReason> {
        if self.config.max_steps.is_some_and(|cap| self.steps() >= cap) {
            return Some(StopReason::StepLimit);
        }
        if self.config.timeout_s.is_some_and(|t| self.now() >= t) {
            return Some(StopReason::Timeout);
        }
        None
    }

    fn discover(&mut self, external: StateId) -> Result<usize, LearnError> {
        if let Some(s) = self.pm.local_of(external) {
            return Ok(s);
        }
        let labels: Vec<String> = self
            .oracle
            .actions(external)?
            .into_iter()
            .map(str::to_string)
            .collect();
        let post = if self.greybox {
            Some(
                (0..labels.len())
                    .map(|a| self.oracle.successor_count(external, a))
                    .collect::<Result<Vec<_>, _>>()?,
            )
        } else {
            None
        };
        let reward = self.oracle.reward(external);
        let s = self.pm.discover(external, reward, labels, post);
        if self.occurrences.len() < self.pm.state_count() {
            self.occurrences.resize(self.pm.state_count(), 0);
        }
        Ok(s)
    }

    /// Samples `(s, a)`, discovers the successor and records the step.
    fn step(&mut self, s: usize, a: usize) -> Result<usize, LearnError> {
        let sample = self.oracle.sample_step(self.pm.external_of(s), a)?;
        let t = self.discover(sample.successor)?;
        self.pm.record(s, a, t, sample.dwell);
        Ok(t)
    }

    /// Uniform choice among the actions (stay included) with maximal upper
    /// value and, among those, maximal lower value.
    fn choose(&mut self, s: usize) -> Choice {
        let mut options: Vec<(Choice, f64, f64)> = self
            .pm
            .actions(s)
            .iter()
            .enumerate()
            .map(|(a, act)| (Choice::Action(a), act.lower, act.upper))
            .collect();
        if let Some((l, u)) = self.pm.stay_bounds(s) {
            options.push((Choice::Stay, l, u));
        }
        let max_u = options.iter().map(|o| o.2).fold(f64::NEG_INFINITY, f64::max);
        options.retain(|o| o.2 >= max_u - TIE_TOLERANCE);
        let max_l = options.iter().map(|o| o.1).fold(f64::NEG_INFINITY, f64::max);
        options.retain(|o| o.1 >= max_l - TIE_TOLERANCE);
        let pick = if options.len() == 1 {
            0
        } else {
            self.rng.random_range(0..options.len())
        };
        options[pick].0
    }

    fn resolve_stay(&mut self, s: usize) -> Terminal {
        let (l, u) = self.pm.stay_bounds(s).unwrap_or((0.0, 1.0));
        let x: f64 = self.rng.random();
        if x < l {
            Terminal::Plus
        } else if x < l + (1.0 - u) {
            Terminal::Minus
        } else {
            Terminal::Unknown
        }
    }

    /// Looks for a δ_TP-sure end component containing `t` among the states of
    /// `path` and of the record `t` already carries, registering it unless
    /// that record is at least as large. Returns the record index.
    pub fn looping(&mut self, path: &[usize], t: usize) -> Option<usize> {
        let mut states = path.to_vec();
        states.sort_unstable();
        states.dedup();
        self.looping_among(&states, t)
    }

    /// [`Self::looping`] on the sorted, distinct states of the current path.
    fn looping_among(&mut self, states: &[usize], t: usize) -> Option<usize> {
        let existing = self.pm.stay_of(t);
        // Leaving actions start from any state of the record, so the path can
        // miss some of them; without those the record could never grow.
        let mut states = states.to_vec();
        if let Some(i) = existing {
            states.extend_from_slice(&self.pm.mecs()[i].states);
            states.sort_unstable();
            states.dedup();
        }
        let found = find_delta_sure_mecs(&self.pm, self.delta_tp(), self.p_min, Some(&states))
            .into_iter()
            .find(|m| m.contains(t));
        match (found, existing) {
            (None, e) => e,
            (Some(m), Some(i)) if !strictly_extends(&m, &self.pm.mecs()[i]) => Some(i),
            (Some(m), _) => Some(self.pm.add_mec(m)),
        }
    }

    fn best_leaving(&self, idx: usize) -> Result<(usize, Choice), LearnError> {
        let mec = &self.pm.mecs()[idx];
        let mut candidates = Vec::new();
        for &s in &mec.states {
            for (a, act) in self.pm.actions(s).iter().enumerate() {
                candidates.push(Candidate {
                    state: s,
                    choice: Choice::Action(a),
                    label: &act.label,
                    lower: act.lower,
                    upper: act.upper,
                });
            }
            if let Some((l, u)) = self.pm.stay_bounds(s) {
                candidates.push(Candidate {
                    state: s,
                    choice: Choice::Stay,
                    label: "",
                    lower: l,
                    upper: u,
                });
            }
        }
        let best = best_leaving_action(mec, &candidates)?;
        Ok((best.state, best.choice))
    }

    fn bump(&mut self, s: usize) -> u32 {
        self.occurrences[s] += 1;
        self.occurrences[s]
    }

    /// Simulates one episode from the initial state until a stay action
    /// resolves to a terminal or a limit is hit.
    pub fn simulate_episode(&mut self) -> Result<Episode, LearnError> {
        for x in &mut self.occurrences {
            *x = 0;
        }
        let k = self.config.revisit_threshold as u32;
        let mut path = vec![self.init];
        self.bump(self.init);
        let mut s = self.init;
        let mut taken: u64 = 0;
        loop {
            if self.config.max_episode_steps.is_some_and(|cap| taken >= cap)
                || (taken > 0 && taken.is_multiple_of(CHECK_EVERY) && self.limit_hit().is_some())
            {
                return Ok(Episode {
                    path,
                    end: None,
                    stay: None,
                });
            }
            let a = match self.choose(s) {
                Choice::Stay => {
                    let end = self.resolve_stay(s);
                    let stay = self.pm.stay_of(s).map(|i| (i, s));
                    return Ok(Episode {
                        path,
                        end: Some(end),
                        stay,
                    });
                }
                Choice::Action(a) => a,
            };
            let t = self.step(s, a)?;
            taken += 1;
            path.push(t);
            s = t;
            if self.bump(t) < k {
                continue;
            }
            // the visit counters already hold the path's state set
            let visited: Vec<usize> = (0..self.occurrences.len()).filter(|&x| self.occurrences[x] > 0).collect();
            let Some(idx) = self.looping_among(&visited, t) else {
                continue;
            };
            match self.best_leaving(idx)? {
                (origin, Choice::Stay) => {
                    let end = self.resolve_stay(origin);
                    return Ok(Episode {
                        path,
                        end: Some(end),
                        stay: Some((idx, origin)),
                    });
                }
                (origin, Choice::Action(b)) => {
                    let t2 = self.step(origin, b)?;
                    taken += 1;
                    path.push(t2);
                    self.bump(t2);
                    s = t2;
                }
            }
        }
    }

    /// Steps inside MEC `idx` from `start`, choosing staying actions
    /// uniformly.
    fn simulate_mec(&mut self, idx: usize, start: usize, steps: u64) -> Result<MecRun, LearnError> {
        let mec = self.pm.mecs()[idx].clone();
        let mut s = if mec.contains(start) { start } else { mec.states[0] };
        for i in 0..steps {
            if i > 0 && i.is_multiple_of(CHECK_EVERY) && self.limit_hit().is_some() {
                return Ok(MecRun::Interrupted);
            }
            let acts = mec.actions_of(s);
            let a = match acts {
                [only] => *only,
                _ => acts[self.rng.random_range(0..acts.len())],
            };
            let t = self.step(s, a)?;
            if !mec.contains(t) {
                return Ok(MecRun::Stale);
            }
            s = t;
        }
        Ok(MecRun::Done)
    }

    /// Gain bounds of MEC `idx` in reward units from the current counts.
    pub fn mec_gain(&self, idx: usize, beta: f64) -> (f64, f64) {
        let mec = &self.pm.mecs()[idx];
        let scale = self.pm.scale();
        let rows = MecRows::from_partial(&self.pm, mec, self.delta_tp());
        let settings = GainSettings {
            beta,
            aperiodicity: self.config.aperiodicity,
            max_iterations: self.config.mec_vi_max_iterations,
        };
        let (l, u) = match self.kind {
            ModelKind::Mdp => {
                let g = mec_value_iteration(&rows, beta, settings.aperiodicity, settings.max_iterations);
                (g.lower, g.upper)
            }
            ModelKind::Ctmdp => {
                let table = RateTable::for_mec(&self.pm, mec, self.delta_r());
                match (table.alpha_r(), table.lambda_hat()) {
                    (Some(alpha_r), Some(lambda_hat)) if alpha_r < 1.0 => {
                        let cm = CtmdpMec {
                            embedded: rows,
                            lambda_hat,
                            alpha_r,
                        };
                        match self.config.mec_bounds {
                            MecBoundsMethod::Heuristic => find_mec_mp_bounds_heuristic(&cm, settings),
                            MecBoundsMethod::Exact => find_mec_mp_bounds_exact(&cm, settings),
                        }
                    }
                    // any gain lies between the smallest and largest reward
                    _ => rows
                        .rewards
                        .iter()
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(r), hi.max(r))),
                }
            }
        };
        (l * scale, u * scale)
    }

    /// Samples inside MEC `idx` and tightens its gain bounds. Skipped once the
    /// scaled gain gap is below half the termination threshold.
    pub fn update_mec_value(&mut self, idx: usize, start: usize) -> Result<(), LearnError> {
        let (l, u) = self.pm.mecs()[idx].scaled_gain(self.pm.r_max());
        let gap = u - l;
        if gap <= 0.5 * self.threshold() {
            return Ok(());
        }
        let beta = (gap / 2.0).max(1e-6);
        let mec = &self.pm.mecs()[idx];
        let least = mec
            .pairs()
            .map(|(s, a)| self.pm.action(s, a).total)
            .min()
            .unwrap_or(0);
        let triples: u64 = mec
            .pairs()
            .map(|(s, a)| self.pm.action(s, a).succ.len() as u64)
            .sum();
        let n = compute_n_samples(least, self.config.initial_mec_samples, self.config.mec_sample_multiplier);
        match self.simulate_mec(idx, start, n.saturating_mul(triples.max(1)))? {
            MecRun::Stale => {
                self.pm.remove_mec(idx);
                return Ok(());
            }
            MecRun::Interrupted => return Ok(()),
            MecRun::Done => {}
        }
        let gain = self.mec_gain(idx, beta);
        let record = self.pm.mec_mut(idx);
        record.gain = Some(gain);
        record.sample_budget = n;
        Ok(())
    }

    /// Recomputes all δ_TP-sure MECs; records with unchanged structure keep
    /// their gains.
    fn sync_mecs(&mut self) {
        let mut fresh = find_delta_sure_mecs(&self.pm, self.delta_tp(), self.p_min, None);
        for m in &mut fresh {
            if let Some(old) = self.pm.mecs().iter().find(|o| o.same_structure(m)) {
                m.gain = old.gain;
                m.sample_budget = old.sample_budget;
            }
        }
        self.pm.set_mecs(fresh);
    }

    fn record_trace(&mut self) {
        let scale = self.pm.scale();
        let row = TraceRow {
            time_s: self.now(),
            episodes: self.episodes,
            lower: self.pm.lower(self.init) * scale,
            upper: self.pm.upper(self.init) * scale,
            inconfidence: self.certified_inconfidence(),
        };
        self.trace.push(row);
    }

    /// One round: episodes, MEC refinement, MEC rediscovery, global value
    /// iteration. Returns `true` once the run is over.
    pub fn run_round(&mut self) -> Result<bool, LearnError> {
        if self.stop.is_some() {
            return Ok(true);
        }
        for _ in 0..self.config.episodes_per_round {
            let ep = self.simulate_episode()?;
            self.episodes += 1;
            if let (Some(Terminal::Plus | Terminal::Unknown), Some((idx, origin))) = (ep.end, ep.stay) {
                self.update_mec_value(idx, origin)?;
            }
            if let Some(reason) = self.limit_hit() {
                self.stop = Some(reason);
                break;
            }
        }
        self.sync_mecs();
        let style = self.config.update_style;
        let delta_tp = self.delta_tp();
        self.pm
            .value_iteration(delta_tp, style, self.config.vi_tolerance, self.config.max_vi_sweeps);
        self.rounds += 1;
        self.record_trace();
        if self.stop.is_none() {
            let gap = self.pm.upper(self.init) - self.pm.lower(self.init);
            if !self.config.anytime && gap < self.threshold() {
                self.stop = Some(StopReason::Converged);
            } else if self.config.max_rounds.is_some_and(|r| self.rounds >= r) {
                self.stop = Some(StopReason::RoundLimit);
            } else if let Some(reason) = self.limit_hit() {
                self.stop = Some(reason);
            }
        }
        Ok(self.stop.is_some())
    }

    /// Runs rounds until convergence or a limit.
    pub fn run(mut self) -> Result<BoundsReport, LearnError> {
        while !self.run_round()? {}
        Ok(self.report())
    }

    /// The bounds as of the last completed round.
    pub fn report(&self) -> BoundsReport {
        let scale = self.pm.scale();
        let (lower, upper) = match self.trace.last() {
            Some(row) => (row.lower, row.upper),
            None => (0.0, scale),
        };
        BoundsReport {
            trace: self.trace.clone(),
            lower,
            upper,
            certified_inconfidence: self.certified_inconfidence(),
            stop: self.stop.unwrap_or(StopReason::RoundLimit),
            episodes: self.episodes,
            rounds: self.rounds,
            steps: self.steps(),
            r_max: self.pm.r_max(),
            states_discovered: self.pm.state_count(),
            mec_count: self.pm.mecs().len(),
        }
    }
}

/// `a` covers `b` (states and actions) and differs from it.
fn strictly_extends(a: &MecRecord, b: &MecRecord) -> bool {
    if a.same_structure(b) {
        return false;
    }
    b.states.iter().zip(&b.actions).all(|(&s, acts)| {
        a.contains(s) && acts.iter().all(|&x| a.is_staying(s, x))
    })
}
