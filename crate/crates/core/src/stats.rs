//! Confidence widths, inconfidence budgets and sample-size bounds.
//!
//! Transition probabilities are bounded with Hoeffding's inequality; mean
//! residence times of exponential distributions with Chernoff bounds.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("no dwell samples")]
    EmptySamples,
    #[error("dwell samples have zero mean")]
    ZeroMean,
    #[error("domain error: {0}")]
    Domain(String),
}

/// How an overall MP-inconfidence is split across the quantities a learner
/// estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InconfidenceBudget {
    pub delta_mp: f64,
    /// Share for transition probabilities.
    pub delta_mp1: f64,
    /// Share for exit rates; zero for MDPs.
    pub delta_mp2: f64,
}

impl InconfidenceBudget {
    pub fn mdp(delta_mp: f64) -> Self {
        Self {
            delta_mp,
            delta_mp1: delta_mp,
            delta_mp2: 0.0,
        }
    }

    pub fn ctmdp(delta_mp: f64, p_min: f64) -> Self {
        let (delta_mp1, delta_mp2) = split_mp_inconfidence(delta_mp, p_min);
        Self {
            delta_mp,
            delta_mp1,
            delta_mp2,
        }
    }

    /// `δ_TP` for the current number of discovered state-action pairs.
    pub fn delta_tp(&self, p_min: f64, num_state_actions: usize) -> f64 {
        tp_inconfidence(self.delta_mp1, p_min, num_state_actions)
    }

    /// `δ_R` for the current number of discovered state-action pairs.
    pub fn delta_r(&self, num_state_actions: usize) -> f64 {
        self.delta_mp2 / num_state_actions.max(1) as f64
    }
}

/// Precision reached on a mean residence time after `n_samples` dwell samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePrecision {
    pub alpha_r: f64,
    pub n_samples: u64,
}

/// `δ_TP = δ_MP · p_min / |{(s,a)}|`.
pub fn tp_inconfidence(delta_mp: f64, p_min: f64, num_state_actions: usize) -> f64 {
    delta_mp * p_min / num_state_actions.max(1) as f64
}

/// Hoeffding half-width `sqrt(ln δ_TP / (−2·count))`, clamped to 1.
///
/// With no samples the interval is vacuous and the width is 1.
pub fn tp_width(count: u64, delta_tp: f64) -> f64 {
    if count == 0 {
        return 1.0;
    }
    (delta_tp.ln() / (-2.0 * count as f64)).sqrt().min(1.0)
}

/// `max(0, #(s,a,t)/#(s,a) − width)`.
pub fn lower_tp_estimate(count_sat: u64, count_total: u64, width: f64) -> f64 {
    if count_total == 0 {
        return 0.0;
    }
    (count_sat as f64 / count_total as f64 - width).max(0.0)
}

/// Samples an action needs before a missed successor has probability at most
/// `δ_TP`: `⌈ln δ_TP / ln(1 − p_min)⌉`, at least 1.
pub fn ec_required_samples(delta_tp: f64, p_min: f64) -> u64 {
    if p_min >= 1.0 {
        return 1;
    }
    let ratio = delta_tp.ln() / (1.0 - p_min).ln();
    // guard against 0.999999999 style rounding of exact integers
    let rounded = ratio.round();
    let n = if (ratio - rounded).abs() < 1e-9 {
        rounded
    } else {
        ratio.ceil()
    };
    (n as u64).max(1)
}

/// `(1 − p_min)^count`, the chance of never having seen a given successor.
pub fn greybox_miss_probability(p_min: f64, count: u64) -> f64 {
    (1.0 - p_min).powf(count as f64)
}

/// One Chernoff tail: the minimizing `u = t/λ` and the bound value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChernoffTail {
    pub minimizer: f64,
    pub bound: f64,
}

/// Minimizes `f` on `[lo, hi]` by golden-section search until the bracket is
/// narrower than `rel_tol` relative to the current point.
pub fn golden_section_min<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, rel_tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..500 {
        let mid = 0.5 * (a + b);
        if (b - a) <= rel_tol * mid.abs().max(1e-12) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// The two Chernoff tails for the mean of `n` i.i.d. exponentials with
/// relative error `alpha`: overestimating the mean (`u ∈ (−1, 0)`) and
/// underestimating it (`u > 0`). The rate cancels out, so `u` is `t/λ`.
pub fn chernoff_tails(n: u64, alpha: f64) -> (ChernoffTail, ChernoffTail) {
    let n = n as f64;
    let log_upper = |u: f64| n * (-(u.ln_1p()) + u * (1.0 + alpha));
    let log_lower = |u: f64| n * (-(u.ln_1p()) + u * (1.0 - alpha));
    let (u1, g1) = golden_section_min(log_upper, -1.0 + 1e-9, -1e-9, 1e-6);
    let (u2, g2) = golden_section_min(log_lower, 1e-9, 50.0, 1e-6);
    (
        ChernoffTail {
            minimizer: u1,
            bound: g1.exp(),
        },
        ChernoffTail {
            minimizer: u2,
            bound: g2.exp(),
        },
    )
}

/// Probability bound that the empirical mean of `n` exponential samples is
/// more than an `alpha` fraction away from the true mean.
pub fn rate_inconfidence(n: u64, alpha: f64) -> f64 {
    let (upper, lower) = chernoff_tails(n, alpha);
    upper.bound + lower.bound
}

fn smallest_n(mut ok: impl FnMut(u64) -> bool) -> u64 {
    let mut hi = 1u64;
    while !ok(hi) {
        hi *= 2;
    }
    let mut lo = hi / 2; // ok(lo) is false unless lo == 0
    if lo == 0 {
        return hi;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Smallest `n` with `rate_inconfidence(n, alpha) ≤ delta`.
pub fn rate_samples(alpha: f64, delta: f64) -> u64 {
    smallest_n(|n| rate_inconfidence(n, alpha) <= delta)
}

/// Smallest `n` for which the overestimation tail alone is at most `delta`.
pub fn upper_tail_samples(alpha: f64, delta: f64) -> u64 {
    smallest_n(|n| chernoff_tails(n, alpha).0.bound <= delta)
}

/// Best relative precision `α_R` certified by `n` samples at inconfidence
/// `delta`; `None` if no `α_R < 1` is certified.
pub fn rate_precision(n: u64, delta: f64) -> Option<RatePrecision> {
    if n == 0 {
        return None;
    }
    let top = 1.0 - 1e-9;
    if rate_inconfidence(n, top) > delta {
        return None;
    }
    let (mut lo, mut hi) = (0.0, top);
    while hi - lo > 1e-7 {
        let mid = 0.5 * (lo + hi);
        if rate_inconfidence(n, mid) <= delta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(RatePrecision {
        alpha_r: hi,
        n_samples: n,
    })
}

/// `λ̂ = 1 / mean(dwell)`.
pub fn estimate_rate(dwell_times: &[f64]) -> Result<f64, StatsError> {
    if dwell_times.is_empty() {
        return Err(StatsError::EmptySamples);
    }
    let sum: f64 = dwell_times.iter().sum();
    if sum <= 0.0 {
        return Err(StatsError::ZeroMean);
    }
    Ok(dwell_times.len() as f64 / sum)
}

/// `[λ̂(1 − α), λ̂(1 + α)]`.
pub fn rate_interval(lambda_hat: f64, alpha_r: f64) -> (f64, f64) {
    (lambda_hat * (1.0 - alpha_r), lambda_hat * (1.0 + alpha_r))
}

/// Splits `δ_MP` into a transition share `δ_MP/(p_min+1)` and a rate share
/// `δ_MP·p_min/(p_min+1)`, which makes `δ_TP = δ_R` for any pair count.
pub fn split_mp_inconfidence(delta_mp: f64, p_min: f64) -> (f64, f64) {
    let d1 = delta_mp / (p_min + 1.0);
    (d1, delta_mp - d1)
}

/// Combined multiplicative rate error from a rate error `alpha_tp` and an
/// additive probability error `eps_tp`: `(p_min·α + ε)/(p_min − ε)`.
pub fn combined_alpha_hat(alpha_tp: f64, eps_tp: f64, p_min: f64) -> Result<f64, StatsError> {
    if eps_tp >= p_min {
        return Err(StatsError::Domain(format!(
            "eps_tp {eps_tp} must be below p_min {p_min}"
        )));
    }
    Ok((p_min * alpha_tp + eps_tp) / (p_min - eps_tp))
}

/// Envelope of a mean payoff `v` computed from rates known `alpha_r`-precisely:
/// `(v(1−α)/(1+α), v(1+α)/(1−α), r_max·2α/(1−α))`.
pub fn ctmdp_value_bounds(v: f64, alpha_r: f64, r_max: f64) -> (f64, f64, f64) {
    (
        v * (1.0 - alpha_r) / (1.0 + alpha_r),
        v * (1.0 + alpha_r) / (1.0 - alpha_r),
        r_max * 2.0 * alpha_r / (1.0 - alpha_r),
    )
}
