//! Base-bid setting under a second-price auction model.
//!
//! Winning probability for a bid `b` against a landscape with median winning bid `β`
//! is `b / (b + β)`. The expected price, spend and their derivatives follow from that
//! density. Bids descend a clicks loss with Nadam and are clamped to client bounds.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::state::{CampaignConfig, EpochObservation, MediaObjectAccumulators};

/// Below this `b/β` the closed forms lose precision and the power series is used.
const SERIES_CUTOFF: f64 = 1e-2;
const SERIES_TERMS: i32 = 8;

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

/// `CPM / β` as a function of `x = b/β`.
fn cpm_ratio(x: f64) -> f64 {
    if x < SERIES_CUTOFF {
        // Σ (-1)^(n+1) x^n / (n (n+1))
        (1..=SERIES_TERMS)
            .map(|n| {
                let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
                sign * x.powi(n) / (n * (n + 1)) as f64
            })
            .sum()
    } else {
        (1.0 + 1.0 / x) * x.ln_1p() - 1.0
    }
}

/// `dCPM/db` as a function of `x = b/β`.
fn cpm_slope(x: f64) -> f64 {
    if x < SERIES_CUTOFF {
        // Σ (-1)^(n+1) x^(n-1) / (n+1)
        (1..=SERIES_TERMS)
            .map(|n| {
                let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
                sign * x.powi(n - 1) / (n + 1) as f64
            })
            .sum()
    } else {
        (1.0 - x.ln_1p() / x) / x
    }
}

/// `ln(1 + x) - x / (1 + x)`.
fn spend_ratio(x: f64) -> f64 {
    if x < SERIES_CUTOFF {
        // Σ_{n>=2} (-1)^n x^n (n-1)/n
        (2..=SERIES_TERMS + 1)
            .map(|n| {
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                sign * x.powi(n) * (n - 1) as f64 / n as f64
            })
            .sum()
    } else {
        x.ln_1p() - x / (1.0 + x)
    }
}

/// Probability of winning an auction with bid `b`.
pub fn win_probability(b: f64, beta: f64) -> Result<f64> {
    check_positive("beta", beta)?;
    if !(b >= 0.0) {
        return Err(Error::InvalidInput(format!("bid must be >= 0, got {b}")));
    }
    Ok(b / (b + beta))
}

/// Mean second-price CPM paid when bidding `b`.
pub fn expected_cpm(b: f64, beta: f64) -> Result<f64> {
    check_positive("bid", b)?;
    check_positive("beta", beta)?;
    Ok(beta * cpm_ratio(b / beta))
}

pub fn cpm_derivative(b: f64, beta: f64) -> Result<f64> {
    check_positive("bid", b)?;
    check_positive("beta", beta)?;
    Ok(cpm_slope(b / beta))
}

/// Spend of a media object that buys all inventory it can win at bid `b`.
pub fn spend_model(b: f64, beta: f64, total_inventory: f64) -> Result<f64> {
    check_positive("beta", beta)?;
    if !(b >= 0.0) || !(total_inventory >= 0.0) {
        return Err(Error::InvalidInput("bid and inventory must be >= 0".into()));
    }
    Ok(total_inventory / 1000.0 * beta * spend_ratio(b / beta))
}

/// `dS/db` written in terms of the impressions actually bought.
pub fn spend_derivative(b: f64, beta: f64, impressions: f64) -> Result<f64> {
    check_positive("beta", beta)?;
    if !(b >= 0.0) || !(impressions >= 0.0) {
        return Err(Error::InvalidInput(
            "bid and impressions must be >= 0".into(),
        ));
    }
    Ok(impressions / 1000.0 * beta / (b + beta))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaEstimate {
    pub beta: f64,
    /// The observed CPM was outside the model's range and was clamped.
    pub clamped: bool,
}

const BETA_LOW: f64 = 1e-9;
const BETA_HIGH: f64 = 1e6;
const BETA_REL_TOL: f64 = 1e-12;

/// Inverts [`expected_cpm`] in `β` for a fixed bid.
///
/// The CPM grows monotonically from 0 to `b/2` as `β` grows, so a geometric bisection
/// over `[1e-9 b, 1e6 b]` finds the root. Targets at or above `b/2` are clamped just
/// below it.
pub fn estimate_beta(observed_cpm: f64, b: f64) -> Result<BetaEstimate> {
    check_positive("bid", b)?;
    check_positive("observed CPM", observed_cpm)?;
    let ceiling = b / 2.0 * (1.0 - 1e-6);
    let (target, mut clamped) = if observed_cpm >= ceiling {
        (ceiling, true)
    } else {
        (observed_cpm, false)
    };
    let cpm = |beta: f64| beta * cpm_ratio(b / beta);
    let mut lo = BETA_LOW * b;
    let mut hi = BETA_HIGH * b;
    if cpm(lo) >= target {
        clamped = true;
        hi = lo;
    } else if cpm(hi) <= target {
        clamped = true;
        lo = hi;
    }
    while hi / lo - 1.0 > BETA_REL_TOL {
        let mid = (lo * hi).sqrt();
        if cpm(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if clamped {
        warn!("observed CPM {observed_cpm} outside the model range for bid {b}; clamped");
    }
    Ok(BetaEstimate {
        beta: (lo * hi).sqrt(),
        clamped,
    })
}

/// Inputs of the per-media-object bid gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BidGradientInput {
    pub impressions: f64,
    pub budget: f64,
    pub spend: f64,
    pub clicks: f64,
    pub bid: f64,
    pub beta: f64,
    /// Under-delivery threshold on `spend / budget`.
    pub tau: f64,
    pub alpha: f64,
    pub budget_min: f64,
}

/// Gradient of `-clicks` with respect to the bid.
///
/// Media objects without budget are ignored; those with budget that spent nothing get
/// `-1/α` so the bid rises. Otherwise the spend term only counts while
/// `spend / budget < τ` (strictly).
pub fn bid_loss_gradient(input: &BidGradientInput) -> Result<f64> {
    if input.budget < input.budget_min {
        return Ok(0.0);
    }
    if input.spend == 0.0 {
        return Ok(-1.0 / input.alpha);
    }
    check_positive("bid", input.bid)?;
    check_positive("beta", input.beta)?;
    if input.impressions <= 0.0 {
        return Err(Error::InvalidInput(
            "positive spend with zero impressions".into(),
        ));
    }
    let under_delivering = input.tau - input.spend / input.budget > 0.0;
    let spend_term = if under_delivering {
        input.beta / (input.bid + input.beta)
    } else {
        0.0
    };
    let cpc_term = cpm_slope(input.bid / input.beta);
    Ok(-input.clicks * input.impressions / (1000.0 * input.spend) * (spend_term - cpc_term))
}

/// Momentum schedule of Nadam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MuSchedule {
    Constant(f64),
    /// Per-step values; the last one repeats past the end.
    Table(Vec<f64>),
}

impl MuSchedule {
    pub fn at(&self, step: u64) -> f64 {
        match self {
            MuSchedule::Constant(mu) => *mu,
            MuSchedule::Table(values) => {
                let idx = (step as usize).min(values.len().saturating_sub(1));
                values[idx]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NadamHyper {
    pub step_size: f64,
    pub mu: MuSchedule,
    pub nu: f64,
    pub epsilon: f64,
}

impl NadamHyper {
    pub fn with_step(step_size: f64) -> Self {
        Self {
            step_size,
            mu: MuSchedule::Constant(0.9),
            nu: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| v > 0.0 && v < 1.0;
        let mu_ok = match &self.mu {
            MuSchedule::Constant(mu) => in_unit(*mu),
            MuSchedule::Table(values) => !values.is_empty() && values.iter().all(|v| in_unit(*v)),
        };
        if !mu_ok || !in_unit(self.nu) || !(self.epsilon > 0.0) || !(self.step_size > 0.0) {
            return Err(Error::Config("invalid Nadam hyperparameters".into()));
        }
        Ok(())
    }
}

/// One Nadam iteration on every media object; returns the new state and the unclamped bids.
///
/// The look-ahead estimate combines the previous first moment with the bias-corrected
/// current gradient; the second moment is bias-corrected with `ν^steps`.
pub fn nadam_step(
    state: &MediaObjectAccumulators,
    grad: &[f64],
    hyper: &NadamHyper,
) -> Result<(MediaObjectAccumulators, Vec<f64>)> {
    ensure_len(state.len(), grad.len())?;
    let t = state.nadam_step;
    let mu_t = hyper.mu.at(t);
    let mu_next = hyper.mu.at(t + 1);
    let prod_t = state.nadam_mu_product * mu_t;
    let prod_next = prod_t * mu_next;
    let nu_correction = 1.0 - hyper.nu.powf((t + 1) as f64);

    let mut next = state.clone();
    for (i, g) in grad.iter().enumerate() {
        let m_prev = state.nadam_m[i];
        let m_hat = mu_next * m_prev / (1.0 - prod_next) + (1.0 - mu_t) * g / (1.0 - prod_t);
        let n = hyper.nu * state.nadam_n[i] + (1.0 - hyper.nu) * g * g;
        let n_hat = n / nu_correction;
        next.nadam_m[i] = mu_t * m_prev + (1.0 - mu_t) * g;
        next.nadam_n[i] = n;
        next.bids[i] = state.bids[i] - hyper.step_size * m_hat / (n_hat + hyper.epsilon).sqrt();
    }
    next.nadam_step = t + 1;
    next.nadam_mu_product = prod_t;
    let bids = next.bids.clone();
    Ok((next, bids))
}

pub fn clamp_bids(bids: &[f64], lower: f64, upper: f64) -> Vec<f64> {
    bids.iter().map(|b| b.min(upper).max(lower)).collect()
}

/// Full bid-setting epoch: estimate `β`, compute gradients, Nadam, clamp.
pub fn bid_step(
    acc: &MediaObjectAccumulators,
    obs: &EpochObservation,
    budgets: &[f64],
    cfg: &CampaignConfig,
    hyper: &NadamHyper,
) -> Result<MediaObjectAccumulators> {
    let k = acc.len();
    ensure_len(k, obs.len())?;
    ensure_len(k, budgets.len())?;
    let mut betas = acc.beta.clone();
    let mut grads = Vec::with_capacity(k);
    for i in 0..k {
        let n = obs.impressions[i];
        let s = obs.spend[i];
        if n == 0 && s > 0.0 {
            return Err(Error::InvalidInput(format!(
                "media object {i} spent {s} without impressions"
            )));
        }
        if n > 0 && s > 0.0 && acc.bids[i] > 0.0 {
            betas[i] = estimate_beta(1000.0 * s / n as f64, acc.bids[i])?.beta;
        }
        grads.push(bid_loss_gradient(&BidGradientInput {
            impressions: n as f64,
            budget: budgets[i],
            spend: s,
            clicks: obs.clicks[i] as f64,
            bid: acc.bids[i],
            beta: betas[i],
            tau: cfg.delivery_threshold,
            alpha: hyper.step_size,
            budget_min: cfg.budget_min,
        })?);
    }
    let (mut next, bids) = nadam_step(acc, &grads, hyper)?;
    next.bids = clamp_bids(&bids, cfg.bid_lower, cfg.bid_upper);
    next.beta = betas;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn win_probability_examples() {
        assert_eq!(win_probability(2.0, 2.0).unwrap(), 0.5);
        assert_eq!(win_probability(0.0, 1.3).unwrap(), 0.0);
        assert_eq!(win_probability(3.0, 1.0).unwrap(), 0.75);
        assert!(win_probability(1.0, 0.0).is_err());
    }

    #[test]
    fn cpm_examples() {
        let two_ln2_m1 = 2.0 * 2f64.ln() - 1.0;
        assert!(close(expected_cpm(1.0, 1.0).unwrap(), two_ln2_m1, 1e-14));
        assert!((expected_cpm(1.0, 1.0).unwrap() - 0.38629).abs() < 1e-5);
        assert!(close(
            expected_cpm(10.0, 1.0).unwrap(),
            1.1 * 11f64.ln() - 1.0,
            1e-14
        ));
        assert!((expected_cpm(10.0, 1.0).unwrap() - 1.63769).abs() < 1e-5);
        assert!(expected_cpm(1e-9, 1.0).unwrap() < 1e-9);
        assert!(expected_cpm(0.0, 1.0).is_err());
    }

    #[test]
    fn series_and_closed_form_agree_at_cutoff() {
        let below = SERIES_CUTOFF * (1.0 - 1e-9);
        let above = SERIES_CUTOFF * (1.0 + 1e-9);
        assert!(close(cpm_ratio(below), cpm_ratio(above), 1e-7));
        assert!(close(cpm_slope(below), cpm_slope(above), 1e-7));
        assert!(close(spend_ratio(below), spend_ratio(above), 1e-7));
    }

    #[test]
    fn cpm_derivative_examples() {
        assert!(close(
            cpm_derivative(1.0, 1.0).unwrap(),
            1.0 - 2f64.ln(),
            1e-14
        ));
        let h = 1e-5;
        let fd =
            (expected_cpm(2.0 + h, 1.0).unwrap() - expected_cpm(2.0 - h, 1.0).unwrap()) / (2.0 * h);
        assert!(close(cpm_derivative(2.0, 1.0).unwrap(), fd, 1e-6));
        assert!(cpm_derivative(1e9, 1.0).unwrap() < 1e-8);
    }

    #[test]
    fn beta_round_trips() {
        let cpm = expected_cpm(1.0, 1.0).unwrap();
        assert!(close(estimate_beta(cpm, 1.0).unwrap().beta, 1.0, 1e-6));
        let cpm = expected_cpm(2.0, 5.0).unwrap();
        let est = estimate_beta(cpm, 2.0).unwrap();
        assert!(close(est.beta, 5.0, 1e-6));
        assert!(!est.clamped);
        let floor = estimate_beta(1e-12, 1.0).unwrap();
        assert!(floor.clamped);
        assert!(close(floor.beta, 1e-9, 1e-9));
    }

    #[test]
    fn beta_clamps_impossible_cpm() {
        let est = estimate_beta(0.6, 1.0).unwrap();
        assert!(est.clamped);
        assert!(expected_cpm(1.0, est.beta).unwrap() < 0.5);
        assert!(estimate_beta(0.0, 1.0).is_err());
        assert!(estimate_beta(-1.0, 1.0).is_err());
    }

    #[test]
    fn spend_examples() {
        assert!(close(
            spend_model(1.0, 1.0, 1000.0).unwrap(),
            2f64.ln() - 0.5,
            1e-14
        ));
        assert!(spend_model(1e-9, 1.0, 1000.0).unwrap() < 1e-15);
        for &(b, beta, itot) in &[(0.5, 1.2, 3e4), (4.0, 0.7, 1e5), (1e-3, 2.0, 1e6)] {
            let via_cpm =
                expected_cpm(b, beta).unwrap() / 1000.0 * itot * win_probability(b, beta).unwrap();
            assert!(close(spend_model(b, beta, itot).unwrap(), via_cpm, 1e-12));
        }
    }

    #[test]
    fn spend_derivative_examples() {
        assert_eq!(spend_derivative(1.0, 1.0, 1000.0).unwrap(), 0.5);
        assert_eq!(spend_derivative(1.0, 1.0, 0.0).unwrap(), 0.0);
        let (b, beta, itot) = (2.0, 1.0, 5e4);
        let h = 1e-5;
        let fd = (spend_model(b + h, beta, itot).unwrap()
            - spend_model(b - h, beta, itot).unwrap())
            / (2.0 * h);
        let n = itot * win_probability(b, beta).unwrap();
        assert!(close(spend_derivative(b, beta, n).unwrap(), fd, 1e-6));
    }

    fn input() -> BidGradientInput {
        BidGradientInput {
            impressions: 10_000.0,
            budget: 5.0,
            spend: 5.0,
            clicks: 10.0,
            bid: 1.0,
            beta: 1.0,
            tau: 0.95,
            alpha: 0.5,
            budget_min: 0.01,
        }
    }

    #[test]
    fn gradient_branches() {
        let no_budget = BidGradientInput {
            budget: 0.001,
            ..input()
        };
        assert_eq!(bid_loss_gradient(&no_budget).unwrap(), 0.0);

        let no_spend = BidGradientInput {
            spend: 0.0,
            impressions: 0.0,
            ..input()
        };
        assert_eq!(bid_loss_gradient(&no_spend).unwrap(), -2.0);

        let g = bid_loss_gradient(&input()).unwrap();
        assert!(close(g, 20.0 * (1.0 - 2f64.ln()), 1e-12));
        assert!((g - 6.137).abs() < 1e-3);
    }

    #[test]
    fn heaviside_is_zero_at_threshold() {
        let at = BidGradientInput {
            spend: 4.75,
            ..input()
        };
        let g = bid_loss_gradient(&at).unwrap();
        let expected = -10.0 * 10_000.0 / (1000.0 * 4.75) * -(1.0 - 2f64.ln());
        assert!(close(g, expected, 1e-12));
    }

    #[test]
    fn heaviside_adds_spend_term_when_under_delivering() {
        let delivered = input();
        let under = BidGradientInput {
            budget: 50.0,
            ..input()
        };
        let diff = bid_loss_gradient(&under).unwrap() - bid_loss_gradient(&delivered).unwrap();
        let spend_term = spend_derivative(1.0, 1.0, 10_000.0).unwrap();
        let expected = -10.0 / 5.0 * spend_term;
        assert!(close(diff, expected, 1e-12));
        assert!(bid_loss_gradient(&under).unwrap() < 0.0);
        assert!(bid_loss_gradient(&delivered).unwrap() > 0.0);
    }

    #[test]
    fn nadam_zero_gradient_keeps_bids() {
        let acc = MediaObjectAccumulators::new(3, 2.0);
        let (next, bids) = nadam_step(&acc, &[0.0; 3], &NadamHyper::with_step(0.1)).unwrap();
        assert_eq!(bids, vec![2.0; 3]);
        assert_eq!(next.nadam_step, 1);
    }

    #[test]
    fn nadam_first_step_hand_trace() {
        let acc = MediaObjectAccumulators::new(1, 3.0);
        let hyper = NadamHyper::with_step(0.1);
        let (next, bids) = nadam_step(&acc, &[1.0], &hyper).unwrap();
        let m_hat = 0.9 * 0.0 / (1.0 - 0.81) + 0.1 * 1.0 / (1.0 - 0.9);
        let n_hat = 0.001 / (1.0 - 0.999);
        let delta = 0.1 * m_hat / (n_hat + 1e-8f64).sqrt();
        assert!((bids[0] - (3.0 - delta)).abs() < 1e-12);
        assert!((delta - 0.1).abs() < 1e-6);
        assert!((next.nadam_m[0] - 0.1).abs() < 1e-15);
        assert!((next.nadam_mu_product - 0.9).abs() < 1e-15);
    }

    #[test]
    fn nadam_constant_gradient_descends_monotonically() {
        let mut acc = MediaObjectAccumulators::new(1, 10.0);
        let hyper = NadamHyper::with_step(0.05);
        let mut prev = acc.bids[0];
        for _ in 0..50 {
            let (next, bids) = nadam_step(&acc, &[0.7], &hyper).unwrap();
            assert!(bids[0] < prev);
            prev = bids[0];
            acc = next;
        }
    }

    #[test]
    fn mu_table_repeats_last_value() {
        let s = MuSchedule::Table(vec![0.5, 0.8]);
        assert_eq!(s.at(0), 0.5);
        assert_eq!(s.at(7), 0.8);
        assert!(NadamHyper {
            mu: MuSchedule::Table(vec![1.2]),
            ..NadamHyper::with_step(1.0)
        }
        .validate()
        .is_err());
    }

    #[test]
    fn clamp_examples() {
        assert_eq!(
            clamp_bids(&[0.5, -1.0, 15.0], 0.0, 10.0),
            vec![0.5, 0.0, 10.0]
        );
    }

    fn cfg() -> CampaignConfig {
        CampaignConfig {
            bid_lower: 0.1,
            bid_upper: 10.0,
            budget_min: 0.01,
            initial_bid: 2.0,
            ..CampaignConfig::default()
        }
    }

    #[test]
    fn bid_step_ignores_media_objects_without_budget() {
        let cfg = cfg();
        let acc = MediaObjectAccumulators::new(3, 2.0);
        let obs = EpochObservation::empty(3);
        let next = bid_step(&acc, &obs, &[0.0; 3], &cfg, &NadamHyper::with_step(0.5)).unwrap();
        assert_eq!(next.bids, vec![2.0; 3]);
    }

    #[test]
    fn chronic_underbidder_rises_to_upper_bound() {
        let cfg = cfg();
        let mut acc = MediaObjectAccumulators::new(1, 0.2);
        let mut prev = acc.bids[0];
        for _ in 0..200 {
            acc = bid_step(
                &acc,
                &EpochObservation::empty(1),
                &[10.0],
                &cfg,
                &NadamHyper::with_step(0.5),
            )
            .unwrap();
            assert!(acc.bids[0] >= prev);
            prev = acc.bids[0];
        }
        assert_eq!(acc.bids[0], cfg.bid_upper);
    }

    #[test]
    fn bid_step_rejects_spend_without_impressions() {
        let cfg = cfg();
        let acc = MediaObjectAccumulators::new(1, 2.0);
        let obs = EpochObservation {
            impressions: vec![0],
            clicks: vec![0],
            spend: vec![1.0],
        };
        assert!(bid_step(&acc, &obs, &[5.0], &cfg, &NadamHyper::with_step(0.5)).is_err());
    }

    #[test]
    fn bid_step_recovers_true_beta() {
        let cfg = cfg();
        let acc = MediaObjectAccumulators::new(1, 2.0);
        let cpm = expected_cpm(2.0, 1.3).unwrap();
        let n = 40_000u64;
        let obs = EpochObservation::new(vec![n], vec![40], vec![n as f64 * cpm / 1000.0]).unwrap();
        let next = bid_step(&acc, &obs, &[1000.0], &cfg, &NadamHyper::with_step(0.5)).unwrap();
        assert!(close(next.beta[0], 1.3, 1e-8));
    }

    proptest::proptest! {
        #[test]
        fn cpm_below_half_bid(b in 1e-3f64..1e3, beta in 1e-3f64..1e3) {
            let cpm = expected_cpm(b, beta).unwrap();
            proptest::prop_assert!(cpm > 0.0);
            proptest::prop_assert!(cpm < b / 2.0);
        }

        #[test]
        fn spend_monotone_in_bid(b in 1e-3f64..50.0, db in 1e-3f64..5.0, beta in 0.1f64..5.0) {
            let s1 = spend_model(b, beta, 1e5).unwrap();
            let s2 = spend_model(b + db, beta, 1e5).unwrap();
            proptest::prop_assert!(s2 > s1);
        }

        #[test]
        fn clamped_bids_within_bounds(bids in proptest::collection::vec(-100.0f64..100.0, 1..20)) {
            for b in clamp_bids(&bids, 0.1, 10.0) {
                proptest::prop_assert!((0.1..=10.0).contains(&b));
            }
        }
    }
}
