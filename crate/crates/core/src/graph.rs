//! End components: maximal end-component decomposition, δ_TP-sure detection
//! on observed graphs, and best-leaving-action selection.

use std::cmp::Ordering;

use petgraph::algo::kosaraju_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use thiserror::Error;

use crate::model::{ExplicitModel, StateId};
use crate::stats::ec_required_samples;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("closed MEC: no leaving action and no stay action")]
    ClosedMec,
}

/// A (maximal) end component together with what has been learnt about it.
#[derive(Debug, Clone, PartialEq)]
pub struct MecRecord {
    /// Sorted state indices.
    pub states: Vec<StateId>,
    /// Retained action indices per state, parallel to `states`, each sorted.
    pub actions: Vec<Vec<usize>>,
    pub delta_sure: bool,
    /// Gain bounds in reward units; `None` until first refined.
    pub gain: Option<(f64, f64)>,
    /// Samples per staying pair requested by the last refinement.
    pub sample_budget: u64,
}

impl MecRecord {
    pub fn new(states: Vec<StateId>, actions: Vec<Vec<usize>>) -> Self {
        debug_assert_eq!(states.len(), actions.len());
        Self {
            states,
            actions,
            delta_sure: false,
            gain: None,
            sample_budget: 0,
        }
    }

    pub fn contains(&self, s: StateId) -> bool {
        self.states.binary_search(&s).is_ok()
    }

    /// Retained actions of `s`, empty if `s` is not in the component.
    pub fn actions_of(&self, s: StateId) -> &[usize] {
        match self.states.binary_search(&s) {
            Ok(i) => &self.actions[i],
            Err(_) => &[],
        }
    }

    pub fn is_staying(&self, s: StateId, a: usize) -> bool {
        self.actions_of(s).binary_search(&a).is_ok()
    }

    /// Iterates all staying `(state, action)` pairs.
    pub fn pairs(&self) -> impl Iterator<Item = (StateId, usize)> + '_ {
        self.states
            .iter()
            .zip(&self.actions)
            .flat_map(|(&s, acts)| acts.iter().map(move |&a| (s, a)))
    }

    /// Same states and same retained actions.
    pub fn same_structure(&self, other: &MecRecord) -> bool {
        self.states == other.states && self.actions == other.actions
    }

    /// Gain bounds divided by `r_max` (identity scale when `r_max` is 0),
    /// `(0, 1)` when unknown.
    pub fn scaled_gain(&self, r_max: f64) -> (f64, f64) {
        match self.gain {
            None => (0.0, 1.0),
            Some((l, u)) => {
                let scale = if r_max > 0.0 { r_max } else { 1.0 };
                ((l / scale).clamp(0.0, 1.0), (u / scale).clamp(0.0, 1.0))
            }
        }
    }
}

/// State → action → successor set. A `None` action is disabled: it exists
/// (its index is kept) but may not be part of any end component.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ActionGraph {
    actions: Vec<Vec<Option<Vec<StateId>>>>,
}

impl ActionGraph {
    pub fn new(actions: Vec<Vec<Option<Vec<StateId>>>>) -> Self {
        Self { actions }
    }

    pub fn from_model(model: &ExplicitModel) -> Self {
        let actions = (0..model.state_count())
            .map(|s| {
                model
                    .actions(s)
                    .iter()
                    .map(|row| Some(row.successors().collect()))
                    .collect()
            })
            .collect();
        Self { actions }
    }

    pub fn state_count(&self) -> usize {
        self.actions.len()
    }
}

/// Maximal end components of `graph`, sorted by smallest state.
///
/// Repeatedly splits into SCCs and drops actions that can leave their SCC
/// until nothing changes.
pub fn mec_decomposition(graph: &ActionGraph) -> Vec<MecRecord> {
    let n = graph.state_count();
    let mut active: Vec<Vec<bool>> = graph
        .actions
        .iter()
        .map(|acts| acts.iter().map(Option::is_some).collect())
        .collect();
    let mut comp = vec![usize::MAX; n];

    loop {
        let mut g: DiGraph<(), ()> = DiGraph::with_capacity(n, 0);
        for _ in 0..n {
            g.add_node(());
        }
        for (s, acts) in graph.actions.iter().enumerate() {
            for (a, succ) in acts.iter().enumerate() {
                if !active[s][a] {
                    continue;
                }
                for &t in succ.as_deref().unwrap_or(&[]) {
                    g.add_edge(NodeIndex::new(s), NodeIndex::new(t), ());
                }
            }
        }
        for (c, scc) in kosaraju_scc(&g).into_iter().enumerate() {
            for v in scc {
                comp[v.index()] = c;
            }
        }
        let mut changed = false;
        for (s, acts) in graph.actions.iter().enumerate() {
            for (a, succ) in acts.iter().enumerate() {
                if active[s][a]
                    && succ
                        .as_deref()
                        .unwrap_or(&[])
                        .iter()
                        .any(|&t| comp[t] != comp[s])
                {
                    active[s][a] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut by_comp: Vec<Vec<StateId>> = Vec::new();
    let mut slot = vec![usize::MAX; n.max(1)];
    for s in 0..n {
        if !active[s].iter().any(|&x| x) {
            continue;
        }
        let c = comp[s];
        if slot[c] == usize::MAX {
            slot[c] = by_comp.len();
            by_comp.push(Vec::new());
        }
        by_comp[slot[c]].push(s);
    }
    by_comp
        .into_iter()
        .map(|states| {
            let actions = states
                .iter()
                .map(|&s| (0..active[s].len()).filter(|&a| active[s][a]).collect())
                .collect();
            MecRecord::new(states, actions)
        })
        .collect()
}

/// Read access to what a learner has observed so far.
pub trait ObservedGraph {
    fn state_count(&self) -> usize;
    fn action_count(&self, s: StateId) -> usize;
    /// Successors seen at least once, in a deterministic order.
    fn observed_successors(&self, s: StateId, a: usize) -> Vec<StateId>;
    /// `#(s,a)`.
    fn sample_count(&self, s: StateId, a: usize) -> u64;
    /// True when every successor of `(s,a)` is known to have been seen.
    fn successors_complete(&self, _s: StateId, _a: usize) -> bool {
        false
    }
}

/// Every staying pair of `mec` has been sampled `ec_required_samples` times.
pub fn is_delta_sure_ec(
    mec: &MecRecord,
    count: impl Fn(StateId, usize) -> u64,
    delta_tp: f64,
    p_min: f64,
) -> bool {
    let required = ec_required_samples(delta_tp, p_min);
    let mut any = false;
    for (s, a) in mec.pairs() {
        any = true;
        if count(s, a) < required {
            return false;
        }
    }
    any
}

/// MECs of the observed graph after removing every action sampled fewer than
/// `ec_required_samples` times (unless its successor set is known to be
/// complete). With `restrict` (sorted, deduplicated), only those states take
/// part and actions reaching other states count as leaving.
pub fn find_delta_sure_mecs<G: ObservedGraph>(
    observed: &G,
    delta_tp: f64,
    p_min: f64,
    restrict: Option<&[StateId]>,
) -> Vec<MecRecord> {
    let required = ec_required_samples(delta_tp, p_min);
    let all: Vec<StateId>;
    let states: &[StateId] = match restrict {
        Some(r) => r,
        None => {
            all = (0..observed.state_count()).collect();
            &all
        }
    };
    let position = |t: StateId| -> Option<usize> {
        match restrict {
            Some(r) => r.binary_search(&t).ok(),
            None => Some(t),
        }
    };
    let actions = states
        .iter()
        .map(|&s| {
            (0..observed.action_count(s))
                .map(|a| {
                    let count = observed.sample_count(s, a);
                    let sure = count >= required
                        || (count > 0 && observed.successors_complete(s, a));
                    if !sure {
                        return None;
                    }
                    observed
                        .observed_successors(s, a)
                        .into_iter()
                        .map(position)
                        .collect::<Option<Vec<usize>>>()
                })
                .collect()
        })
        .collect();
    let mut mecs = mec_decomposition(&ActionGraph::new(actions));
    for m in &mut mecs {
        for s in &mut m.states {
            *s = states[*s];
        }
        m.delta_sure = true;
    }
    mecs
}

/// An action or the stay action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice {
    Action(usize),
    Stay,
}

/// A candidate for [`best_leaving_action`] with its current bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate<'a> {
    pub state: StateId,
    pub choice: Choice,
    pub label: &'a str,
    pub lower: f64,
    pub upper: f64,
}

fn rank(a: &Candidate<'_>, b: &Candidate<'_>) -> Ordering {
    // "less" means better
    b.upper
        .total_cmp(&a.upper)
        .then(b.lower.total_cmp(&a.lower))
        .then(a.state.cmp(&b.state))
        .then_with(|| match (a.choice, b.choice) {
            (Choice::Stay, Choice::Stay) => Ordering::Equal,
            (Choice::Stay, _) => Ordering::Greater,
            (_, Choice::Stay) => Ordering::Less,
            _ => a.label.cmp(b.label),
        })
}

/// Best action that exits `mec`: the stay action or any action of a member
/// state that is not retained by the component. Ranked by upper value, then
/// lower value, then state index, then label (stay last).
pub fn best_leaving_action<'a>(
    mec: &MecRecord,
    candidates: &[Candidate<'a>],
) -> Result<Candidate<'a>, GraphError> {
    candidates
        .iter()
        .filter(|c| {
            mec.contains(c.state)
                && match c.choice {
                    Choice::Stay => true,
                    Choice::Action(a) => !mec.is_staying(c.state, a),
                }
        })
        .min_by(|a, b| rank(a, b))
        .copied()
        .ok_or(GraphError::ClosedMec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;

    fn states(mecs: &[MecRecord]) -> Vec<Vec<StateId>> {
        mecs.iter().map(|m| m.states.clone()).collect()
    }

    #[test]
    fn single_self_loop() {
        let g = ActionGraph::new(vec![vec![Some(vec![0])]]);
        let mecs = mec_decomposition(&g);
        assert_eq!(states(&mecs), vec![vec![0]]);
        assert_eq!(mecs[0].actions, vec![vec![0]]);
    }

    #[test]
    fn three_mec_example() {
        // s1..s6 as 0..5
        let m = parse_model(
            "mdp\nstates 6\ninit 0\npmin 0.001\n\
             t 0 a 4 0.001\nt 0 a 2 0.999\nt 0 b 1 1\n\
             t 1 a 1 1\nt 1 b 3 1\n\
             t 2 a 2 0.5\nt 2 a 3 0.5\nt 3 a 3 0.5\nt 3 a 2 0.5\n\
             t 4 a 4 0.5\nt 4 a 5 0.5\nt 5 a 5 0.5\nt 5 a 4 0.5\n",
        )
        .unwrap();
        let mecs = mec_decomposition(&ActionGraph::from_model(&m));
        assert_eq!(states(&mecs), vec![vec![1], vec![2, 3], vec![4, 5]]);
        assert_eq!(mecs[0].actions, vec![vec![0]]);
    }

    #[test]
    fn disabled_actions_break_cycles() {
        let g = ActionGraph::new(vec![vec![Some(vec![1])], vec![None]]);
        assert!(mec_decomposition(&g).is_empty());
    }

    #[test]
    fn delta_sure_thresholds() {
        let mec = MecRecord::new(vec![0, 1], vec![vec![0], vec![0]]);
        assert!(!is_delta_sure_ec(&mec, |_, _| 0, 0.9, 0.1));
        assert!(is_delta_sure_ec(&mec, |_, _| 22, 0.1, 0.1));
        assert!(!is_delta_sure_ec(&mec, |s, _| if s == 1 { 21 } else { 22 }, 0.1, 0.1));
        assert!(is_delta_sure_ec(&mec, |_, _| 1, 0.9, 0.1));
    }

    fn cand(state: StateId, choice: Choice, label: &str, lower: f64, upper: f64) -> Candidate<'_> {
        Candidate {
            state,
            choice,
            label,
            lower,
            upper,
        }
    }

    #[test]
    fn leaving_action_examples() {
        let mec = MecRecord::new(vec![0, 1], vec![vec![0], vec![0]]);
        let only_stay = [
            cand(0, Choice::Action(0), "a", 0.0, 1.0),
            cand(0, Choice::Stay, "", 0.7, 0.7),
        ];
        assert_eq!(best_leaving_action(&mec, &only_stay).unwrap().choice, Choice::Stay);

        let two = [
            cand(0, Choice::Action(1), "b", 0.0, 0.4),
            cand(1, Choice::Action(1), "c", 0.0, 0.9),
        ];
        assert_eq!(best_leaving_action(&mec, &two).unwrap().label, "c");

        let tie = [
            cand(0, Choice::Action(1), "b", 0.2, 0.5),
            cand(1, Choice::Action(1), "c", 0.3, 0.5),
        ];
        assert_eq!(best_leaving_action(&mec, &tie).unwrap().label, "c");

        let closed = [cand(0, Choice::Action(0), "a", 0.0, 1.0)];
        assert_eq!(best_leaving_action(&mec, &closed), Err(GraphError::ClosedMec));
    }

    #[test]
    fn leaving_ties_prefer_low_state_then_real_action() {
        let mec = MecRecord::new(vec![0, 1], vec![vec![0], vec![0]]);
        let c = [
            cand(1, Choice::Stay, "", 0.5, 0.5),
            cand(0, Choice::Stay, "", 0.5, 0.5),
            cand(0, Choice::Action(1), "z", 0.5, 0.5),
        ];
        let best = best_leaving_action(&mec, &c).unwrap();
        assert_eq!((best.state, best.choice), (0, Choice::Action(1)));
    }

    #[test]
    fn scaled_gain_defaults() {
        let mut m = MecRecord::new(vec![0], vec![vec![0]]);
        assert_eq!(m.scaled_gain(3.0), (0.0, 1.0));
        m.gain = Some((1.5, 3.0));
        assert_eq!(m.scaled_gain(3.0), (0.5, 1.0));
        m.gain = Some((0.0, 0.0));
        assert_eq!(m.scaled_gain(0.0), (0.0, 0.0));
    }
}
