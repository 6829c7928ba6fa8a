#![allow(dead_code)]

use std::collections::BTreeSet;

use mppac::graph::{find_delta_sure_mecs, mec_decomposition, ActionGraph, MecRecord};
use mppac::learn::ctmdp::CtmdpMec;
use mppac::learn::mec::MecRows;
use mppac::learn::{PartialModel, UpdateStyle};
use mppac::model::{parse_model, ExplicitModel, InfoLevel, ModelKind, SampleOracle};
use mppac::whitebox::{enumerate_policies_gain, exact_mec_gain};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn models_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

pub fn load(name: &str) -> ExplicitModel {
    let text = std::fs::read_to_string(models_dir().join(name)).unwrap();
    parse_model(&text).unwrap()
}

/// Probabilities are multiples of 0.1, so `p_min = 0.1`.
fn random_distribution(rng: &mut ChaCha8Rng, n: usize) -> Vec<(usize, u32)> {
    let k = rng.random_range(1..=n.min(3));
    let mut targets: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        targets.swap(i, j);
    }
    let mut tenths = vec![1u32; k];
    for _ in k..10 {
        tenths[rng.random_range(0..k)] += 1;
    }
    targets[..k].iter().copied().zip(tenths).collect()
}

/// A random model with `n` states, one or two actions per state and up to
/// three successors per action. CTMDP rows get integer rates 1..=5 per unit.
pub fn random_model(seed: u64, n: usize, kind: ModelKind) -> ExplicitModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = format!("{kind}\nstates {n}\ninit 0\npmin 0.1\n");
    for s in 0..n {
        let r = rng.random_range(0..=10) as f64 / 10.0;
        text += &format!("reward {s} {r}\n");
    }
    for s in 0..n {
        let actions = rng.random_range(1..=2);
        for a in 0..actions {
            let scale = rng.random_range(1..=5) as f64;
            for (t, tenths) in random_distribution(&mut rng, n) {
                let w = match kind {
                    ModelKind::Mdp => tenths as f64 / 10.0,
                    ModelKind::Ctmdp => scale * tenths as f64,
                };
                text += &format!("t {s} a{a} {t} {w}\n");
            }
        }
    }
    parse_model(&text).unwrap_or_else(|e| panic!("{e}\n{text}"))
}

/// Maximal end components by enumerating state subsets; each paired with all
/// actions whose successors stay inside. Sorted by smallest state.
pub fn brute_force_mecs(model: &ExplicitModel) -> Vec<(Vec<usize>, Vec<Vec<usize>>)> {
    let n = model.state_count();
    assert!(n <= 12);
    let mut ecs: Vec<(BTreeSet<usize>, Vec<Vec<usize>>)> = Vec::new();
    for mask in 1u32..(1 << n) {
        let states: BTreeSet<usize> = (0..n).filter(|&s| mask & (1 << s) != 0).collect();
        let acts: Vec<Vec<usize>> = states
            .iter()
            .map(|&s| {
                (0..model.actions(s).len())
                    .filter(|&a| model.row(s, a).successors().all(|t| states.contains(&t)))
                    .collect()
            })
            .collect();
        if acts.iter().any(Vec::is_empty) {
            continue;
        }
        let list: Vec<usize> = states.iter().copied().collect();
        let reach = |from: usize| {
            let mut seen = BTreeSet::from([from]);
            let mut stack = vec![from];
            while let Some(s) = stack.pop() {
                let i = list.binary_search(&s).unwrap();
                for &a in &acts[i] {
                    for t in model.row(s, a).successors() {
                        if seen.insert(t) {
                            stack.push(t);
                        }
                    }
                }
            }
            seen
        };
        if list.iter().all(|&s| reach(s).len() == list.len()) {
            ecs.push((states, acts));
        }
    }
    let maximal: Vec<_> = ecs
        .iter()
        .filter(|(s, _)| !ecs.iter().any(|(o, _)| o.len() > s.len() && o.is_superset(s)))
        .map(|(s, a)| (s.iter().copied().collect::<Vec<_>>(), a.clone()))
        .collect();
    let mut maximal = maximal;
    maximal.sort();
    maximal
}

/// A random 3-state CTMDP that is a single end component, with distinct
/// rewards.
pub fn ctmdp_mec_fixture(seed: u64) -> Option<(ExplicitModel, MecRecord)> {
    let m = random_model(seed, 3, ModelKind::Ctmdp);
    let mut r = m.rewards().to_vec();
    r.sort_by(f64::total_cmp);
    r.dedup();
    if r.len() < 3 {
        return None;
    }
    mec_decomposition(&ActionGraph::from_model(&m))
        .into_iter()
        .find(|mec| mec.states.len() == 3)
        .map(|mec| (m, mec))
}

/// The first `count` seeds from `start` that yield a fixture.
pub fn ctmdp_mec_fixtures(start: u64, count: usize) -> Vec<(ExplicitModel, MecRecord)> {
    (start..).filter_map(ctmdp_mec_fixture).take(count).collect()
}

/// Exact rows and rates of `mec` with relative rate precision `alpha`.
pub fn ctmdp_mec(model: &ExplicitModel, mec: &MecRecord, alpha: f64) -> CtmdpMec {
    CtmdpMec {
        embedded: MecRows::from_model(model, mec),
        lambda_hat: mec
            .states
            .iter()
            .zip(&mec.actions)
            .map(|(&s, acts)| acts.iter().map(|&a| model.exit_rate(s, a)).collect())
            .collect(),
        alpha_r: alpha,
    }
}

/// `mec` as a stand-alone CTMDP with the rates of state `i` multiplied by
/// `factors[i]`.
pub fn scaled_mec_model(model: &ExplicitModel, mec: &MecRecord, factors: &[f64]) -> ExplicitModel {
    let mut text = format!("ctmdp\nstates {}\ninit 0\npmin 0.01\n", mec.states.len());
    for (i, &s) in mec.states.iter().enumerate() {
        text += &format!("reward {i} {}\n", model.reward(s));
        for &a in mec.actions_of(s) {
            for &(t, w) in &model.row(s, a).entries {
                let j = mec.states.binary_search(&t).unwrap();
                text += &format!("t {i} a{a} {j} {}\n", w * factors[i]);
            }
        }
    }
    parse_model(&text).unwrap()
}

/// Smallest and largest maximal gain over all per-state rate corners
/// `λ·(1 ± alpha)`, each by policy enumeration.
pub fn corner_extrema(model: &ExplicitModel, mec: &MecRecord, alpha: f64) -> (f64, f64) {
    let m = mec.states.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for mask in 0u32..(1 << m) {
        let factors: Vec<f64> = (0..m)
            .map(|i| if mask & (1 << i) != 0 { 1.0 + alpha } else { 1.0 - alpha })
            .collect();
        let g = enumerate_policies_gain(&scaled_mec_model(model, mec, &factors)).unwrap();
        lo = lo.min(g);
        hi = hi.max(g);
    }
    (lo, hi)
}

/// A frozen count table: every pair of a random 4-state model sampled between
/// 5 and 300 times, sure components registered with exact gains widened by
/// 0.05.
pub fn frozen_counts(seed: u64) -> PartialModel {
    let m = random_model(seed, 4, ModelKind::Mdp);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
    let mut o = SampleOracle::new(&m, InfoLevel::Blackbox, seed);
    let mut pm = PartialModel::new();
    for s in 0..m.state_count() {
        let labels = m.actions(s).iter().map(|r| r.label.clone()).collect();
        pm.discover(s, m.reward(s), labels, None);
    }
    for s in 0..m.state_count() {
        for a in 0..m.actions(s).len() {
            for _ in 0..rng.random_range(5..=300) {
                let t = o.sample_step(s, a).unwrap().successor;
                pm.record(s, a, t, None);
            }
        }
    }
    let mut mecs = find_delta_sure_mecs(&pm, 0.05, 0.1, None);
    for mec in &mut mecs {
        let g = exact_mec_gain(&m, mec, 1e-6).unwrap_or(0.5);
        mec.gain = Some(((g - 0.05).max(0.0), g + 0.05));
    }
    pm.set_mecs(mecs);
    pm
}

/// Lower and upper fixpoints of the global value iteration.
pub fn fixpoint(pm: &PartialModel, delta_tp: f64, style: UpdateStyle) -> (Vec<f64>, Vec<f64>) {
    let mut pm = pm.clone();
    pm.value_iteration(delta_tp, style, 1e-12, 1_000_000);
    let n = pm.state_count();
    ((0..n).map(|s| pm.lower(s)).collect(), (0..n).map(|s| pm.upper(s)).collect())
}
