//! Gain bounds for a single end component by relative value iteration.

use crate::graph::MecRecord;
use crate::model::ExplicitModel;

use super::partial::PartialModel;

/// One action of an end component in "lower estimate plus residual" form.
#[derive(Debug, Clone, PartialEq)]
pub struct MecAction {
    /// `(index within the component, lower probability)`.
    pub entries: Vec<(usize, f64)>,
    /// Mass not covered by `entries`; sent to the worst (lower bound) or best
    /// (upper bound) listed successor.
    pub resid: f64,
    /// Exact extra self-loop mass, e.g. from uniformization.
    pub self_extra: f64,
}

/// An end component as seen by the value iteration: per-state rewards and
/// per-state actions, all successors inside the component.
#[derive(Debug, Clone, PartialEq)]
pub struct MecRows {
    pub rewards: Vec<f64>,
    pub actions: Vec<Vec<MecAction>>,
}

impl MecRows {
    /// Rows from learnt counts with Hoeffding lower estimates. Rewards are
    /// divided by the partial model's scale.
    pub fn from_partial(pm: &PartialModel, mec: &MecRecord, delta_tp: f64) -> Self {
        let scale = pm.scale();
        let rewards = mec.states.iter().map(|&s| pm.reward(s) / scale).collect();
        let actions = mec
            .states
            .iter()
            .zip(&mec.actions)
            .map(|(&s, acts)| {
                acts.iter()
                    .map(|&a| {
                        let (est, mut resid) = pm.lower_estimates(s, a, delta_tp);
                        let mut entries = Vec::with_capacity(est.len());
                        for (t, p) in est {
                            match mec.states.binary_search(&t) {
                                Ok(i) => entries.push((i, p)),
                                Err(_) => resid += p,
                            }
                        }
                        MecAction {
                            entries,
                            resid,
                            self_extra: 0.0,
                        }
                    })
                    .collect()
            })
            .collect();
        Self { rewards, actions }
    }

    /// Exact rows of an explicit model (embedded probabilities for a CTMDP),
    /// unscaled rewards.
    pub fn from_model(model: &ExplicitModel, mec: &MecRecord) -> Self {
        let rewards = mec.states.iter().map(|&s| model.reward(s)).collect();
        let actions = mec
            .states
            .iter()
            .zip(&mec.actions)
            .map(|(&s, acts)| {
                acts.iter()
                    .map(|&a| MecAction {
                        entries: model
                            .row(s, a)
                            .distribution()
                            .into_iter()
                            .filter_map(|(t, p)| mec.states.binary_search(&t).ok().map(|i| (i, p)))
                            .collect(),
                        resid: 0.0,
                        self_extra: 0.0,
                    })
                    .collect()
            })
            .collect();
        Self { rewards, actions }
    }

    pub fn state_count(&self) -> usize {
        self.rewards.len()
    }

    /// Number of `(s, a, t)` triples.
    pub fn triple_count(&self) -> usize {
        self.actions.iter().flatten().map(|a| a.entries.len()).sum()
    }
}

/// Result of [`mec_value_iteration`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MecGain {
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
    /// Both spans fell below `beta` before the iteration cap.
    pub converged: bool,
}

/// Default iteration cap of [`mec_value_iteration`].
pub const MEC_VI_MAX_ITERATIONS: usize = 200_000;

fn sweep(rows: &MecRows, v: &[f64], y: f64, pessimistic: bool, out: &mut [f64]) {
    for (i, acts) in rows.actions.iter().enumerate() {
        let mut best = f64::NEG_INFINITY;
        for act in acts {
            let mut acc = act.self_extra * v[i];
            let mut extreme = if pessimistic {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            };
            for &(t, p) in &act.entries {
                acc += p * v[t];
                extreme = if pessimistic {
                    extreme.min(v[t])
                } else {
                    extreme.max(v[t])
                };
            }
            if act.resid > 0.0 {
                acc += act.resid * if extreme.is_finite() { extreme } else { v[i] };
            }
            best = best.max(y * acc + (1.0 - y) * v[i]);
        }
        out[i] = rows.rewards[i] + best;
    }
}

fn span_min_max(d: &[f64]) -> (f64, f64) {
    d.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Bounds on the maximal gain of an end component.
///
/// Runs relative value iteration on the aperiodic transform `yP + (1−y)I`
/// twice: with residual mass sent to the worst successor (lower) and to the
/// best one (upper). Any `min Δ` of the pessimistic iteration is a lower and
/// any `max Δ` of the optimistic one an upper bound, so the best seen are
/// kept. Stops once both spans are at most `beta`.
pub fn mec_value_iteration(rows: &MecRows, beta: f64, y: f64, max_iterations: usize) -> MecGain {
    let m = rows.state_count();
    let (r_lo, r_hi) = span_min_max(&rows.rewards);
    let mut l = vec![0.0; m];
    let mut u = vec![0.0; m];
    let mut nl = vec![0.0; m];
    let mut nu = vec![0.0; m];
    let mut dl = vec![0.0; m];
    let mut du = vec![0.0; m];
    let (mut best_l, mut best_u) = (r_lo, r_hi);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iterations {
        iterations += 1;
        sweep(rows, &l, y, true, &mut nl);
        sweep(rows, &u, y, false, &mut nu);
        for i in 0..m {
            dl[i] = nl[i] - l[i];
            du[i] = nu[i] - u[i];
        }
        let (dl_min, dl_max) = span_min_max(&dl);
        let (du_min, du_max) = span_min_max(&du);
        best_l = best_l.max(dl_min);
        best_u = best_u.min(du_max);
        let (bl, bu) = (nl[0], nu[0]);
        for i in 0..m {
            l[i] = nl[i] - bl;
            u[i] = nu[i] - bu;
        }
        if dl_max - dl_min <= beta && du_max - du_min <= beta {
            converged = true;
            break;
        }
    }
    let lower = best_l.clamp(r_lo, r_hi);
    let upper = best_u.clamp(lower, r_hi);
    MecGain {
        lower,
        upper,
        iterations,
        converged,
    }
}

/// Samples per staying pair for the next refinement: the smallest
/// `initial · multiplier^j` strictly above `least_count`.
pub fn compute_n_samples(least_count: u64, initial: u64, multiplier: u64) -> u64 {
    let mut n = initial.max(1);
    let multiplier = multiplier.max(2);
    while n <= least_count {
        n = n.saturating_mul(multiplier);
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(t: usize) -> MecAction {
        MecAction {
            entries: vec![(t, 1.0)],
            resid: 0.0,
            self_extra: 0.0,
        }
    }

    #[test]
    fn single_state_gain_is_its_reward() {
        let rows = MecRows {
            rewards: vec![1.0],
            actions: vec![vec![det(0)]],
        };
        let g = mec_value_iteration(&rows, 1e-6, 0.95, 1000);
        assert!((g.lower - 1.0).abs() < 1e-6 && (g.upper - 1.0).abs() < 1e-6);
        assert!(g.converged);
    }

    #[test]
    fn two_cycle_gain_is_half() {
        let rows = MecRows {
            rewards: vec![0.0, 1.0],
            actions: vec![vec![det(1)], vec![det(0)]],
        };
        let beta = 1e-4;
        let g = mec_value_iteration(&rows, beta, 0.95, MEC_VI_MAX_ITERATIONS);
        assert!(g.lower <= 0.5 + 1e-12 && g.upper >= 0.5 - 1e-12);
        assert!(g.upper - g.lower <= 2.0 * beta, "{g:?}");
    }

    #[test]
    fn periodic_cycle_needs_the_aperiodicity_transform() {
        let rows = MecRows {
            rewards: vec![0.0, 1.0],
            actions: vec![vec![det(1)], vec![det(0)]],
        };
        let g = mec_value_iteration(&rows, 1e-4, 1.0, 500);
        assert!(!g.converged);
        // still sound
        assert!(g.lower <= 0.5 && g.upper >= 0.5);
    }

    #[test]
    fn residual_mass_widens_the_interval() {
        let rows = MecRows {
            rewards: vec![0.0, 1.0],
            actions: vec![
                vec![MecAction {
                    entries: vec![(0, 0.4), (1, 0.4)],
                    resid: 0.2,
                    self_extra: 0.0,
                }],
                vec![MecAction {
                    entries: vec![(0, 0.4), (1, 0.4)],
                    resid: 0.2,
                    self_extra: 0.0,
                }],
            ],
        };
        let g = mec_value_iteration(&rows, 1e-6, 0.95, MEC_VI_MAX_ITERATIONS);
        // worst case 0.6/0.4 split toward state 0, best case 0.4/0.6
        assert!((g.lower - 0.4).abs() < 1e-4, "{g:?}");
        assert!((g.upper - 0.6).abs() < 1e-4, "{g:?}");
    }

    #[test]
    fn n_samples_examples() {
        assert_eq!(compute_n_samples(0, 10_000, 5), 10_000);
        assert_eq!(compute_n_samples(10_000, 10_000, 5), 50_000);
        assert_eq!(compute_n_samples(60_000, 10_000, 5), 250_000);
        assert_eq!(compute_n_samples(9_999, 10_000, 5), 10_000);
    }
}
