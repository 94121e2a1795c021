use std::cmp::Ordering;

use log::warn;

use crate::error::{ensure_len, Error, Result};
use crate::state::EpochObservation;

/// State of the linear-programming partitioner.
#[derive(Debug, Clone, PartialEq)]
pub struct LopState {
    pub disc_spend: Vec<f64>,
    pub disc_clicks: Vec<f64>,
    /// Lower bound factor on last spend, below one.
    pub alpha_l: f64,
    /// Upper bound factor on last spend, above one.
    pub alpha_u: f64,
    pub gamma: f64,
}

impl LopState {
    pub fn new(k: usize, alpha_l: f64, alpha_u: f64, gamma: f64) -> Result<Self> {
        if !((0.0..1.0).contains(&alpha_l) && alpha_u > 1.0) {
            return Err(Error::Config(
                "lop bounds need 0 <= alpha_l < 1 < alpha_u".into(),
            ));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Config("lop discount outside [0, 1]".into()));
        }
        Ok(Self {
            disc_spend: vec![0.0; k],
            disc_clicks: vec![0.0; k],
            alpha_l,
            alpha_u,
            gamma,
        })
    }

    /// Discounted CPC estimate; media objects without clicks rank last.
    pub fn cpc_estimates(&self) -> Vec<f64> {
        self.disc_spend
            .iter()
            .zip(&self.disc_clicks)
            .map(|(s, c)| if *c > 0.0 { s / c } else { f64::INFINITY })
            .collect()
    }
}

/// Maximizes expected clicks `Σ B_i / CPC_i` under `Σ B ≤ budget`, `l ≤ B ≤ u`.
///
/// The LP is solved by its greedy closed form: everyone gets the lower bound, then the
/// surplus goes to the cheapest clicks first until it runs out or every upper bound is
/// reached.
pub fn lop_step(
    state: &LopState,
    obs: &EpochObservation,
    budget: f64,
) -> Result<(LopState, Vec<f64>)> {
    let k = state.disc_spend.len();
    ensure_len(k, obs.len())?;
    if !(budget >= 0.0) {
        return Err(Error::InvalidInput("lop budget must be >= 0".into()));
    }
    let mut next = state.clone();
    for i in 0..k {
        next.disc_spend[i] = obs.spend[i] + state.gamma * state.disc_spend[i];
        next.disc_clicks[i] = obs.clicks[i] as f64 + state.gamma * state.disc_clicks[i];
    }
    let mut lower: Vec<f64> = obs.spend.iter().map(|s| state.alpha_l * s).collect();
    let upper: Vec<f64> = obs.spend.iter().map(|s| state.alpha_u * s).collect();

    let lower_sum: f64 = lower.iter().sum();
    if lower_sum > budget {
        warn!("lop lower bounds {lower_sum} exceed budget {budget}; scaling down");
        let factor = budget / lower_sum;
        lower.iter_mut().for_each(|l| *l *= factor);
    }
    let mut budgets = lower.clone();
    let mut remaining = (budget - budgets.iter().sum::<f64>()).max(0.0);

    let cpc = next.cpc_estimates();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        cpc[a]
            .partial_cmp(&cpc[b])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    for i in order {
        if remaining <= 0.0 {
            break;
        }
        let extra = remaining.min(upper[i] - budgets[i]).max(0.0);
        budgets[i] += extra;
        remaining -= extra;
    }
    Ok((next, budgets))
}
