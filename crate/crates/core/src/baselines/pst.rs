use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::state::EpochObservation;

/// Fixed rules of the `pst` bid setter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PstParams {
    pub cpc_goal: f64,
    pub down_multiplier: f64,
    pub up_multiplier: f64,
    pub underdelivery_ratio: f64,
}

impl PstParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.cpc_goal > 0.0
            && self.down_multiplier > 0.0
            && self.down_multiplier < 1.0
            && self.up_multiplier > 1.0
            && self.underdelivery_ratio > 0.0
            && self.underdelivery_ratio < 1.0)
        {
            return Err(Error::Config("invalid pst parameters".into()));
        }
        Ok(())
    }
}

/// Raises bids of under-delivering media objects, lowers those above the CPC goal.
///
/// Media objects with less than `budget_min` of budget keep their bid.
pub fn pst_step(
    params: &PstParams,
    obs: &EpochObservation,
    budgets: &[f64],
    bids: &[f64],
    bounds: (f64, f64),
    budget_min: f64,
) -> Result<Vec<f64>> {
    let k = bids.len();
    ensure_len(k, obs.len())?;
    ensure_len(k, budgets.len())?;
    let (lower, upper) = bounds;
    Ok((0..k)
        .map(|i| {
            if budgets[i] < budget_min || budgets[i] <= 0.0 {
                return bids[i];
            }
            let delivery = obs.spend[i] / budgets[i];
            let cpc = if obs.clicks[i] > 0 {
                obs.spend[i] / obs.clicks[i] as f64
            } else {
                f64::INFINITY
            };
            let bid = if delivery < params.underdelivery_ratio {
                bids[i] * params.up_multiplier
            } else if cpc > params.cpc_goal {
                bids[i] * params.down_multiplier
            } else {
                bids[i]
            };
            bid.clamp(lower, upper)
        })
        .collect())
}
