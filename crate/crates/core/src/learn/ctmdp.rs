//! CTMDP end components: rate estimates, uniformization and gain bounds
//! under uncertain rates.

use crate::graph::MecRecord;
use crate::stats::rate_precision;

use super::mec::{mec_value_iteration, MecAction, MecRows};
use super::partial::PartialModel;
use super::LearnError;

/// Dwell statistics of one state-action pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEntry {
    pub count: u64,
    pub sum: f64,
    pub lambda_hat: Option<f64>,
    /// Relative precision certified at the table's `δ_R`.
    pub alpha_r: Option<f64>,
}

impl RateEntry {
    pub fn new(count: u64, sum: f64, delta_r: f64) -> Self {
        let lambda_hat = (count > 0 && sum > 0.0).then(|| count as f64 / sum);
        let alpha_r = rate_precision(count, delta_r).map(|p| p.alpha_r);
        Self {
            count,
            sum,
            lambda_hat,
            alpha_r,
        }
    }
}

/// Rate estimates for the staying pairs of one end component, parallel to
/// the record's `actions`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub entries: Vec<Vec<RateEntry>>,
}

impl RateTable {
    pub fn for_mec(pm: &PartialModel, mec: &MecRecord, delta_r: f64) -> Self {
        let entries = mec
            .states
            .iter()
            .zip(&mec.actions)
            .map(|(&s, acts)| {
                acts.iter()
                    .map(|&a| {
                        let act = pm.action(s, a);
                        RateEntry::new(act.dwell_count, act.dwell_sum, delta_r)
                    })
                    .collect()
            })
            .collect();
        Self { entries }
    }

    /// Largest `α_R` over all pairs; `None` if some pair has no certified
    /// precision yet.
    pub fn alpha_r(&self) -> Option<f64> {
        let mut worst: f64 = 0.0;
        for e in self.entries.iter().flatten() {
            worst = worst.max(e.alpha_r?);
        }
        Some(worst)
    }

    /// `λ̂` per pair; `None` if some pair has no dwell sample.
    pub fn lambda_hat(&self) -> Option<Vec<Vec<f64>>> {
        self.entries
            .iter()
            .map(|row| row.iter().map(|e| e.lambda_hat).collect())
            .collect()
    }
}

/// A uniformized end component: every action proceeds at rate `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformizedMec {
    pub c: f64,
    pub rows: MecRows,
}

/// Uniformizes embedded rows with per-pair rates: each move keeps the
/// fraction `λ(s,a)/C` of its mass and the rest becomes a self-loop.
/// `c` defaults to the largest rate.
pub fn uniformize(
    embedded: &MecRows,
    rates: &[Vec<f64>],
    c: Option<f64>,
) -> Result<UniformizedMec, LearnError> {
    let max_rate = rates.iter().flatten().copied().fold(0.0, f64::max);
    let c = c.unwrap_or(max_rate);
    if rates.iter().flatten().any(|&r| r <= 0.0) {
        return Err(LearnError::Domain("rates must be positive".into()));
    }
    if c < max_rate * (1.0 - 1e-12) {
        return Err(LearnError::Domain(format!(
            "uniformization constant {c} below rate {max_rate}"
        )));
    }
    let actions = embedded
        .actions
        .iter()
        .zip(rates)
        .map(|(acts, rs)| {
            acts.iter()
                .zip(rs)
                .map(|(act, &lambda)| {
                    let f = (lambda / c).min(1.0);
                    MecAction {
                        entries: act.entries.iter().map(|&(t, p)| (t, p * f)).collect(),
                        resid: act.resid * f,
                        self_extra: act.self_extra * f + (1.0 - f),
                    }
                })
                .collect()
        })
        .collect();
    Ok(UniformizedMec {
        c,
        rows: MecRows {
            rewards: embedded.rewards.clone(),
            actions,
        },
    })
}

/// Time-average reward of a recurrent chain with embedded stationary
/// distribution `pi`, rewards per unit time `r` and exit rates `lambda`.
pub fn ctmdp_mec_gain(pi: &[f64], r: &[f64], lambda: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..pi.len() {
        num += r[i] * pi[i] / lambda[i];
        den += pi[i] / lambda[i];
    }
    num / den
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Max,
    Min,
}

/// Extreme rates for states sorted by descending reward. For `Max` the first
/// `j` states get `λ̂(1−α)` (they are left slowly) and the rest `λ̂(1+α)`;
/// `Min` mirrors this.
pub fn boundary_rate_assignment(
    lambda_hat: &[f64],
    alpha_r: f64,
    j: usize,
    direction: Direction,
) -> Vec<f64> {
    let (first, rest) = match direction {
        Direction::Max => (1.0 - alpha_r, 1.0 + alpha_r),
        Direction::Min => (1.0 + alpha_r, 1.0 - alpha_r),
    };
    lambda_hat
        .iter()
        .enumerate()
        .map(|(i, &l)| if i < j { l * first } else { l * rest })
        .collect()
}

/// What the CTMDP gain bounds need about one end component.
#[derive(Debug, Clone, PartialEq)]
pub struct CtmdpMec {
    /// Embedded rows (lower estimates), rewards per unit time scaled.
    pub embedded: MecRows,
    /// `λ̂` per staying pair, parallel to `embedded.actions`.
    pub lambda_hat: Vec<Vec<f64>>,
    pub alpha_r: f64,
}

/// Settings shared by the CTMDP bound procedures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainSettings {
    pub beta: f64,
    pub aperiodicity: f64,
    pub max_iterations: usize,
}

impl CtmdpMec {
    /// States by descending reward, ties by index.
    pub fn reward_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.embedded.state_count()).collect();
        order.sort_by(|&a, &b| {
            self.embedded.rewards[b]
                .total_cmp(&self.embedded.rewards[a])
                .then(a.cmp(&b))
        });
        order
    }

    /// The uniformization constant covering every rate within `α_R`.
    pub fn uniformization_constant(&self) -> f64 {
        self.lambda_hat.iter().flatten().copied().fold(0.0, f64::max) * (1.0 + self.alpha_r)
    }

    /// Gain bounds with every pair of state `i` running at `λ̂ · factors[i]`.
    pub fn gain_with_factors(&self, factors: &[f64], settings: GainSettings) -> (f64, f64) {
        let rates: Vec<Vec<f64>> = self
            .lambda_hat
            .iter()
            .enumerate()
            .map(|(i, row)| row.iter().map(|&l| l * factors[i]).collect())
            .collect();
        let u = uniformize(&self.embedded, &rates, Some(self.uniformization_constant()))
            .expect("rates are positive and below the constant");
        let g = mec_value_iteration(&u.rows, settings.beta, settings.aperiodicity, settings.max_iterations);
        (g.lower, g.upper)
    }

    /// Per-state factors from [`boundary_rate_assignment`] applied in reward order.
    pub fn sweep_factors(&self, j: usize, direction: Direction) -> Vec<f64> {
        let order = self.reward_order();
        let sorted = boundary_rate_assignment(&vec![1.0; order.len()], self.alpha_r, j, direction);
        let mut factors = vec![1.0; order.len()];
        for (rank, &i) in order.iter().enumerate() {
            factors[i] = sorted[rank];
        }
        factors
    }
}

/// Gain bounds by sweeping the split index `j` over the reward order, for the
/// upper and (mirrored) lower bound, stopping a sweep once it gets worse.
pub fn find_mec_mp_bounds_exact(mec: &CtmdpMec, settings: GainSettings) -> (f64, f64) {
    let m = mec.embedded.state_count();
    let mut upper = f64::NEG_INFINITY;
    for j in 0..=m {
        let (_, u) = mec.gain_with_factors(&mec.sweep_factors(j, Direction::Max), settings);
        if u < upper {
            break;
        }
        upper = u;
    }
    let mut lower = f64::INFINITY;
    for j in 0..=m {
        let (l, _) = mec.gain_with_factors(&mec.sweep_factors(j, Direction::Min), settings);
        if l > lower {
            break;
        }
        lower = l;
    }
    (lower.min(upper), upper)
}

/// Gain bounds from three value iterations: at `λ̂`, then with rates pushed
/// against (lower) and toward (upper) states rewarding at least the estimate.
pub fn find_mec_mp_bounds_heuristic(mec: &CtmdpMec, settings: GainSettings) -> (f64, f64) {
    let m = mec.embedded.state_count();
    let (pl, pu) = mec.gain_with_factors(&vec![1.0; m], settings);
    let v_hat = 0.5 * (pl + pu);
    let a = mec.alpha_r;
    let f_lower: Vec<f64> = mec
        .embedded
        .rewards
        .iter()
        .map(|&r| if r >= v_hat { 1.0 + a } else { 1.0 - a })
        .collect();
    let f_upper: Vec<f64> = mec
        .embedded
        .rewards
        .iter()
        .map(|&r| if r >= v_hat { 1.0 - a } else { 1.0 + a })
        .collect();
    let (lower, _) = mec.gain_with_factors(&f_lower, settings);
    let (_, upper) = mec.gain_with_factors(&f_upper, settings);
    (lower.min(pl), upper.max(pu))
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

    const SETTINGS: GainSettings = GainSettings {
        beta: 1e-7,
        aperiodicity: 0.95,
        max_iterations: 1_000_000,
    };

    #[test]
    fn uniformization_examples() {
        // rates {t1: 1, t2: 1}, λ = 2, C = 4
        let rows = MecRows {
            rewards: vec![0.0; 3],
            actions: vec![
                vec![MecAction {
                    entries: vec![(1, 0.5), (2, 0.5)],
                    resid: 0.0,
                    self_extra: 0.0,
                }],
                vec![det(1)],
                vec![det(2)],
            ],
        };
        let rates = vec![vec![2.0], vec![1.0], vec![1.0]];
        let u = uniformize(&rows, &rates, Some(4.0)).unwrap();
        let a = &u.rows.actions[0][0];
        assert_eq!(a.entries, vec![(1, 0.25), (2, 0.25)]);
        assert_eq!(a.self_extra, 0.5);

        let same = uniformize(&rows, &rates, None).unwrap();
        assert_eq!(same.c, 2.0);
        assert_eq!(same.rows.actions[0][0].entries, vec![(1, 0.5), (2, 0.5)]);
        assert_eq!(same.rows.actions[0][0].self_extra, 0.0);

        assert!(uniformize(&rows, &rates, Some(1.0)).is_err());
    }

    #[test]
    fn mec_gain_examples() {
        assert!((ctmdp_mec_gain(&[1.0], &[5.0], &[3.0]) - 5.0).abs() < 1e-12);
        assert!((ctmdp_mec_gain(&[0.5, 0.5], &[1.0, 0.0], &[1.0, 1.0]) - 0.5).abs() < 1e-12);
        let g = ctmdp_mec_gain(&[0.5, 0.5], &[1.0, 0.0], &[2.0, 1.0]);
        assert!((g - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_assignment_examples() {
        assert_eq!(boundary_rate_assignment(&[3.0, 4.0], 0.0, 1, Direction::Max), vec![3.0, 4.0]);
        assert_eq!(boundary_rate_assignment(&[10.0, 10.0], 0.5, 0, Direction::Max), vec![15.0, 15.0]);
        assert_eq!(boundary_rate_assignment(&[10.0, 10.0], 0.5, 2, Direction::Max), vec![5.0, 5.0]);
        let r = boundary_rate_assignment(&[10.0, 10.0], 0.05, 1, Direction::Max);
        assert!((r[0] - 9.5).abs() < 1e-12 && (r[1] - 10.5).abs() < 1e-12);
        let r = boundary_rate_assignment(&[10.0, 10.0], 0.05, 1, Direction::Min);
        assert!((r[0] - 10.5).abs() < 1e-12 && (r[1] - 9.5).abs() < 1e-12);
    }

    fn two_state(alpha: f64) -> CtmdpMec {
        CtmdpMec {
            embedded: MecRows {
                rewards: vec![1.0, 0.0],
                actions: vec![vec![det(1)], vec![det(0)]],
            },
            lambda_hat: vec![vec![2.0], vec![1.0]],
            alpha_r: alpha,
        }
    }

    #[test]
    fn gain_of_rate_two_one_cycle() {
        let mec = two_state(0.0);
        let (l, u) = mec.gain_with_factors(&[1.0, 1.0], SETTINGS);
        assert!(l <= 1.0 / 3.0 + 1e-9 && u >= 1.0 / 3.0 - 1e-9);
        assert!(u - l < 1e-5, "{l} {u}");
    }

    #[test]
    fn zero_alpha_bounds_agree() {
        let mec = two_state(0.0);
        let (el, eu) = find_mec_mp_bounds_exact(&mec, SETTINGS);
        let (hl, hu) = find_mec_mp_bounds_heuristic(&mec, SETTINGS);
        for v in [el, eu, hl, hu] {
            assert!((v - 1.0 / 3.0).abs() < 1e-5, "{v}");
        }
    }

    #[test]
    fn bounds_contain_corner_extremes() {
        let alpha = 0.05;
        let mec = two_state(alpha);
        let (el, eu) = find_mec_mp_bounds_exact(&mec, SETTINGS);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for f0 in [1.0 - alpha, 1.0 + alpha] {
            for f1 in [1.0 - alpha, 1.0 + alpha] {
                let g = ctmdp_mec_gain(&[0.5, 0.5], &[1.0, 0.0], &[2.0 * f0, f1]);
                lo = lo.min(g);
                hi = hi.max(g);
            }
        }
        assert!(el <= lo + 1e-5 && eu >= hi - 1e-5, "[{el}, {eu}] vs [{lo}, {hi}]");
        let (hl, hu) = find_mec_mp_bounds_heuristic(&mec, SETTINGS);
        assert!(hl >= el - 2e-5 && hu <= eu + 2e-5);
    }
}
