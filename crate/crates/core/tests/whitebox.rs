mod common;

use mppac::model::ModelKind;
use mppac::whitebox::{enumerate_policies_gain, exact_mean_payoff, WeightedQuotient};
use proptest::prelude::*;

const BETA: f64 = 1e-6;

#[test]
fn solvers_agree_on_100_random_five_state_models() {
    for seed in 0..100 {
        let m = common::random_model(1000 + seed, 5, ModelKind::Mdp);
        let a = exact_mean_payoff(&m, BETA).unwrap();
        let b = enumerate_policies_gain(&m).unwrap();
        assert!((a - b).abs() <= 2.0 * BETA, "seed {seed}: {a} vs {b}\n{m}");
    }
}

#[test]
fn shipped_model_values() {
    let cases = [
        ("twomec.mdp", 1.0),
        ("cycle_entry.mdp", 0.5),
        ("absorbing.mdp", 1.0),
        ("rates21.ctmdp", 1.0 / 3.0),
        ("three_mecs.mdp", 5.005),
        ("nonuniform.ctmdp", 1.0),
    ];
    for (name, want) in cases {
        let m = common::load(name);
        let v = exact_mean_payoff(&m, 1e-8).unwrap();
        assert!((v - want).abs() < 1e-6, "{name}: {v}");
        assert!((enumerate_policies_gain(&m).unwrap() - want).abs() < 1e-9, "{name}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quotient_agrees_with_enumeration(seed in any::<u64>(), n in 1usize..=6) {
        let m = common::random_model(seed, n, ModelKind::Mdp);
        let a = exact_mean_payoff(&m, BETA).unwrap();
        let b = enumerate_policies_gain(&m).unwrap();
        prop_assert!((a - b).abs() <= 2.0 * BETA, "{} vs {}", a, b);
    }

    #[test]
    fn ctmdp_quotient_agrees_with_enumeration(seed in any::<u64>(), n in 1usize..=4) {
        let m = common::random_model(seed, n, ModelKind::Ctmdp);
        let a = exact_mean_payoff(&m, BETA).unwrap();
        let b = enumerate_policies_gain(&m).unwrap();
        prop_assert!((a - b).abs() <= 2.0 * BETA, "{} vs {}", a, b);
    }

    #[test]
    fn reachability_is_scaled_gain(seed in any::<u64>(), n in 1usize..=5) {
        let m = common::random_model(seed, n, ModelKind::Mdp);
        let wq = WeightedQuotient::build(&m, BETA).unwrap();
        prop_assert!(wq.stay_mass.iter().all(|f| (0.0..=1.0).contains(f)));
        for rows in &wq.rows {
            for d in rows {
                prop_assert!((d.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
        let (lo, hi) = wq.reachability(BETA);
        prop_assert!(0.0 <= lo[wq.init] && hi[wq.init] <= 1.0);
        if wq.r_max > 0.0 {
            let g = enumerate_policies_gain(&m).unwrap() / wq.r_max;
            prop_assert!(lo[wq.init] - 2.0 * BETA <= g && g <= hi[wq.init] + 2.0 * BETA);
        }
    }
}
