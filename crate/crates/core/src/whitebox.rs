//! Exact reference solvers for fully known models.
//!
//! [`exact_mean_payoff`] collapses every MEC into a node with a stay action
//! worth `gain/r_max` and solves maximal reachability of `s₊` by interval
//! iteration. [`enumerate_policies_gain`] brute-forces positional policies and
//! serves as an independent check on small models.

use nalgebra::{DMatrix, DVector};
use petgraph::algo::kosaraju_scc;
use petgraph::graph::DiGraph;
use thiserror::Error;

use crate::graph::{mec_decomposition, ActionGraph, MecRecord};
use crate::learn::mec::{mec_value_iteration, MecRows, MEC_VI_MAX_ITERATIONS};
use crate::model::{ExplicitModel, ModelError, ModelKind, StateId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WhiteboxError {
    #[error("{policies} positional policies exceed the limit of {limit}")]
    TooLarge { policies: f64, limit: u64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("singular linear system")]
    Singular,
}

/// Default precision of the oracle solvers.
pub const DEFAULT_BETA: f64 = 1e-6;
/// Most positional policies [`enumerate_policies_gain`] will try.
pub const MAX_POLICIES: u64 = 1 << 20;

const APERIODICITY: f64 = 0.95;

/// The weighted MEC quotient.
///
/// Node layout: one node per state outside all MECs, then one per MEC, then
/// `s₊` and `s₋`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedQuotient {
    /// Quotient node of every original state.
    pub node_of: Vec<usize>,
    pub mecs: Vec<MecRecord>,
    /// `f(ŝ_i) = gain(M_i) / r_max` per MEC.
    pub stay_mass: Vec<f64>,
    /// Per node, its actions as distributions over nodes. MEC nodes carry the
    /// leaving actions of their states followed by the stay action.
    pub rows: Vec<Vec<Vec<(usize, f64)>>>,
    pub init: usize,
    pub plus: usize,
    pub minus: usize,
    pub r_max: f64,
}

/// The discrete-time model the solvers work on: the model itself for an MDP,
/// its uniformization for a CTMDP.
fn discrete(model: &ExplicitModel) -> Result<std::borrow::Cow<'_, ExplicitModel>, ModelError> {
    Ok(match model.kind() {
        ModelKind::Mdp => std::borrow::Cow::Borrowed(model),
        ModelKind::Ctmdp => std::borrow::Cow::Owned(model.uniformized(None)?),
    })
}

/// Maximal gain of `mec` in `model` (raw reward units), within `beta`.
/// CTMDPs are uniformized first.
pub fn exact_mec_gain(model: &ExplicitModel, mec: &MecRecord, beta: f64) -> Result<f64, WhiteboxError> {
    let m = discrete(model)?;
    let rows = MecRows::from_model(&m, mec);
    let g = mec_value_iteration(&rows, beta, APERIODICITY, MEC_VI_MAX_ITERATIONS);
    Ok(0.5 * (g.lower + g.upper))
}

impl WeightedQuotient {
    pub fn build(model: &ExplicitModel, beta: f64) -> Result<Self, WhiteboxError> {
        let m = discrete(model)?;
        let n = m.state_count();
        let mecs = mec_decomposition(&ActionGraph::from_model(&m));
        let r_max = m.max_reward();
        let mut node_of = vec![usize::MAX; n];
        let mut mec_of = vec![None; n];
        for (i, mec) in mecs.iter().enumerate() {
            for &s in &mec.states {
                mec_of[s] = Some(i);
            }
        }
        let mut next = 0;
        for s in 0..n {
            if mec_of[s].is_none() {
                node_of[s] = next;
                next += 1;
            }
        }
        let first_mec = next;
        for s in 0..n {
            if let Some(i) = mec_of[s] {
                node_of[s] = first_mec + i;
            }
        }
        let plus = first_mec + mecs.len();
        let minus = plus + 1;
        let mut rows: Vec<Vec<Vec<(usize, f64)>>> = vec![Vec::new(); minus + 1];
        for s in 0..n {
            for (a, row) in m.actions(s).iter().enumerate() {
                if mec_of[s].is_some_and(|i| mecs[i].is_staying(s, a)) {
                    continue;
                }
                let mut dist: Vec<(usize, f64)> = Vec::new();
                for (t, p) in row.distribution() {
                    let q = node_of[t];
                    match dist.iter_mut().find(|(x, _)| *x == q) {
                        Some(e) => e.1 += p,
                        None => dist.push((q, p)),
                    }
                }
                rows[node_of[s]].push(dist);
            }
        }
        let mut stay_mass = Vec::with_capacity(mecs.len());
        for (i, mec) in mecs.iter().enumerate() {
            let gain = exact_mec_gain(&m, mec, beta * r_max.max(1.0))?;
            let f = if r_max > 0.0 {
                (gain / r_max).clamp(0.0, 1.0)
            } else {
                0.0
            };
            stay_mass.push(f);
            let mut stay = Vec::new();
            if f > 0.0 {
                stay.push((plus, f));
            }
            if f < 1.0 {
                stay.push((minus, 1.0 - f));
            }
            rows[first_mec + i].push(stay);
        }
        Ok(Self {
            init: node_of[m.init()],
            node_of,
            mecs,
            stay_mass,
            rows,
            plus,
            minus,
            r_max,
        })
    }

    pub fn node_count(&self) -> usize {
        self.rows.len()
    }

    /// Lower and upper bounds on the maximal probability of reaching `s₊`
    /// from every node, by interval iteration until the bounds at the initial
    /// node are within `beta`.
    pub fn reachability(&self, beta: f64) -> (Vec<f64>, Vec<f64>) {
        let k = self.node_count();
        let mut lo = vec![0.0; k];
        let mut hi = vec![1.0; k];
        lo[self.plus] = 1.0;
        hi[self.minus] = 0.0;
        let eval = |v: &[f64], rows: &[Vec<(usize, f64)>]| {
            rows.iter()
                .map(|d| d.iter().map(|&(t, p)| p * v[t]).sum::<f64>())
                .fold(0.0, f64::max)
        };
        for _ in 0..10_000_000 {
            let mut change: f64 = 0.0;
            for q in 0..k {
                if q == self.plus || q == self.minus {
                    continue;
                }
                let l = eval(&lo, &self.rows[q]);
                let h = eval(&hi, &self.rows[q]).max(l);
                change = change.max((l - lo[q]).abs()).max((hi[q] - h).abs());
                lo[q] = l;
                hi[q] = h;
            }
            if hi[self.init] - lo[self.init] < beta || change == 0.0 {
                break;
            }
        }
        (lo, hi)
    }
}

/// Maximal mean payoff of the initial state within `beta` (raw reward units).
pub fn exact_mean_payoff(model: &ExplicitModel, beta: f64) -> Result<f64, WhiteboxError> {
    let wq = WeightedQuotient::build(model, beta)?;
    if wq.r_max <= 0.0 {
        return Ok(0.0);
    }
    let (lo, hi) = wq.reachability(beta / wq.r_max);
    Ok(wq.r_max * 0.5 * (lo[wq.init] + hi[wq.init]))
}

/// Gain from the initial state of the chain induced by a positional policy.
/// `rows[s]` is the successor distribution and `hold[s]` the mean holding time
/// (1 for an MDP).
pub fn chain_gain(
    rows: &[Vec<(StateId, f64)>],
    rewards: &[f64],
    hold: &[f64],
    init: StateId,
) -> Result<f64, WhiteboxError> {
    let n = rows.len();
    let mut g: DiGraph<(), ()> = DiGraph::with_capacity(n, 0);
    for _ in 0..n {
        g.add_node(());
    }
    for (s, row) in rows.iter().enumerate() {
        for &(t, p) in row {
            if p > 0.0 {
                g.add_edge((s as u32).into(), (t as u32).into(), ());
            }
        }
    }
    let mut comp = vec![usize::MAX; n];
    let sccs = kosaraju_scc(&g);
    for (i, scc) in sccs.iter().enumerate() {
        for v in scc {
            comp[v.index()] = i;
        }
    }
    let mut value = vec![None; n];
    for (i, scc) in sccs.iter().enumerate() {
        let bottom = scc
            .iter()
            .all(|v| rows[v.index()].iter().all(|&(t, p)| p == 0.0 || comp[t] == i));
        if !bottom {
            continue;
        }
        let states: Vec<usize> = scc.iter().map(|v| v.index()).collect();
        let pi = stationary(rows, &states)?;
        let num: f64 = states.iter().zip(&pi).map(|(&s, p)| p * rewards[s] * hold[s]).sum();
        let den: f64 = states.iter().zip(&pi).map(|(&s, p)| p * hold[s]).sum();
        let gain = num / den;
        for &s in &states {
            value[s] = Some(gain);
        }
    }
    let transient: Vec<usize> = (0..n).filter(|&s| value[s].is_none()).collect();
    if transient.is_empty() {
        return Ok(value[init].unwrap_or(0.0));
    }
    if let Some(v) = value[init] {
        return Ok(v);
    }
    let mut pos = vec![usize::MAX; n];
    for (i, &s) in transient.iter().enumerate() {
        pos[s] = i;
    }
    let k = transient.len();
    let mut a = DMatrix::<f64>::identity(k, k);
    let mut b = DVector::<f64>::zeros(k);
    for (i, &s) in transient.iter().enumerate() {
        for &(t, p) in &rows[s] {
            match value[t] {
                Some(v) => b[i] += p * v,
                None => a[(i, pos[t])] -= p,
            }
        }
    }
    let x = a.lu().solve(&b).ok_or(WhiteboxError::Singular)?;
    Ok(x[pos[init]])
}

/// Stationary distribution of the closed class `states` (listed order).
fn stationary(rows: &[Vec<(StateId, f64)>], states: &[usize]) -> Result<Vec<f64>, WhiteboxError> {
    let k = states.len();
    if k == 1 {
        return Ok(vec![1.0]);
    }
    let mut pos = vec![usize::MAX; rows.len()];
    for (i, &s) in states.iter().enumerate() {
        pos[s] = i;
    }
    // rows of (Pᵀ − I), last one replaced by the normalisation Σπ = 1
    let mut a = DMatrix::<f64>::zeros(k, k);
    for (i, &s) in states.iter().enumerate() {
        a[(i, i)] -= 1.0;
        for &(t, p) in &rows[s] {
            a[(pos[t], i)] += p;
        }
    }
    for j in 0..k {
        a[(k - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(k);
    b[k - 1] = 1.0;
    let pi = a.lu().solve(&b).ok_or(WhiteboxError::Singular)?;
    Ok(pi.iter().copied().collect())
}

/// Maximal gain over all positional policies by brute force. CTMDP gains are
/// per unit time.
pub fn enumerate_policies_gain(model: &ExplicitModel) -> Result<f64, WhiteboxError> {
    let n = model.state_count();
    let policies: f64 = (0..n).map(|s| model.actions(s).len() as f64).product();
    if policies > MAX_POLICIES as f64 {
        return Err(WhiteboxError::TooLarge {
            policies,
            limit: MAX_POLICIES,
        });
    }
    let mut choice = vec![0usize; n];
    let mut best = f64::NEG_INFINITY;
    loop {
        let rows: Vec<Vec<(StateId, f64)>> = (0..n).map(|s| model.row(s, choice[s]).distribution()).collect();
        let hold: Vec<f64> = (0..n)
            .map(|s| match model.kind() {
                ModelKind::Mdp => 1.0,
                ModelKind::Ctmdp => 1.0 / model.exit_rate(s, choice[s]),
            })
            .collect();
        best = best.max(chain_gain(&rows, model.rewards(), &hold, model.init())?);
        // odometer increment
        let mut s = 0;
        loop {
            if s == n {
                return Ok(best);
            }
            choice[s] += 1;
            if choice[s] < model.actions(s).len() {
                break;
            }
            choice[s] = 0;
            s += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;

    const BETA: f64 = 1e-7;

    fn fig_a() -> ExplicitModel {
        parse_model(
            "mdp\nstates 6\ninit 0\npmin 0.001\n\
             reward 1 4\nreward 2 10\nreward 4 20\n\
             t 0 a 4 0.001\nt 0 a 2 0.999\nt 0 b 1 1\n\
             t 1 a 1 1\nt 1 b 3 1\n\
             t 2 a 2 0.5\nt 2 a 3 0.5\nt 3 a 3 0.5\nt 3 a 2 0.5\n\
             t 4 a 4 0.5\nt 4 a 5 0.5\nt 5 a 5 0.5\nt 5 a 4 0.5\n",
        )
        .unwrap()
    }

    #[test]
    fn three_mec_quotient_value() {
        let m = fig_a();
        let v = exact_mean_payoff(&m, BETA).unwrap();
        assert!((v - 5.005).abs() < 1e-5, "{v}");
        let wq = WeightedQuotient::build(&m, BETA).unwrap();
        let mut f = wq.stay_mass.clone();
        f.sort_by(f64::total_cmp);
        for (x, want) in f.iter().zip([0.2, 0.25, 0.5]) {
            assert!((x - want).abs() < 1e-6);
        }
        let (lo, hi) = wq.reachability(BETA);
        assert!(lo[wq.init] <= 0.25025 + 1e-6 && hi[wq.init] >= 0.25025 - 1e-6);
        assert!((enumerate_policies_gain(&m).unwrap() - 5.005).abs() < 1e-9);
    }

    #[test]
    fn trivial_models() {
        let m = parse_model("mdp\nstates 1\ninit 0\npmin 1\nreward 0 3\nt 0 a 0 1\n").unwrap();
        assert!((exact_mean_payoff(&m, BETA).unwrap() - 3.0).abs() < 1e-6);
        let m = parse_model("mdp\nstates 2\ninit 0\npmin 1\nt 0 a 1 1\nt 1 a 0 1\n").unwrap();
        assert_eq!(exact_mean_payoff(&m, BETA).unwrap(), 0.0);
    }

    #[test]
    fn chain_into_reward_loop() {
        let m = parse_model("mdp\nstates 3\ninit 0\npmin 1\nreward 2 1\nt 0 a 1 1\nt 1 a 2 1\nt 2 a 2 1\n").unwrap();
        assert!((enumerate_policies_gain(&m).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_loop_choice() {
        let m = parse_model(
            "mdp\nstates 5\ninit 0\npmin 0.3\n\
             reward 1 0.3\nreward 3 0.7\n\
             t 0 x 1 1\nt 0 y 3 1\n\
             t 1 a 2 1\nt 2 a 1 1\nreward 2 0.3\n\
             t 3 a 4 1\nt 4 a 3 1\nreward 4 0.7\n",
        )
        .unwrap();
        assert!((enumerate_policies_gain(&m).unwrap() - 0.7).abs() < 1e-12);
        assert!((exact_mean_payoff(&m, BETA).unwrap() - 0.7).abs() < 1e-6);
    }

    #[test]
    fn two_cycle_mec_gain() {
        let m = parse_model("mdp\nstates 2\ninit 0\npmin 1\nreward 1 1\nt 0 a 1 1\nt 1 a 0 1\n").unwrap();
        let mecs = mec_decomposition(&ActionGraph::from_model(&m));
        assert!((exact_mec_gain(&m, &mecs[0], BETA).unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn ctmdp_time_weighting() {
        let m = parse_model("ctmdp\nstates 2\ninit 0\npmin 1\nreward 0 1\nt 0 a 1 2\nt 1 a 0 1\n").unwrap();
        assert!((enumerate_policies_gain(&m).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((exact_mean_payoff(&m, BETA).unwrap() - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn too_many_policies() {
        let mut text = String::from("mdp\nstates 21\ninit 0\npmin 1\n");
        for s in 0..21 {
            text += &format!("t {s} a {s} 1\nt {s} b {s} 1\n");
        }
        let m = parse_model(&text).unwrap();
        assert!(matches!(enumerate_policies_gain(&m), Err(WhiteboxError::TooLarge { .. })));
    }
}
