use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{ensure_len, Error, Result};
use crate::state::EpochObservation;

/// State of the exp3 bandit used as a budget partitioner.
#[derive(Debug, Clone, PartialEq)]
pub struct Exp3State {
    pub weights: Vec<f64>,
    /// Exploration mix, in (0, 1].
    pub gamma: f64,
    /// Running exponential average of clicks per media object.
    pub clicks_avg: Vec<f64>,
    pub smoothing: f64,
    pub cpc_goal: f64,
}

impl Exp3State {
    pub fn new(k: usize, gamma: f64, smoothing: f64, cpc_goal: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Config(format!("exp3 gamma {gamma} outside (0, 1]")));
        }
        if !(0.0..=1.0).contains(&smoothing) || !(cpc_goal > 0.0) {
            return Err(Error::Config("invalid exp3 smoothing or CPC goal".into()));
        }
        Ok(Self {
            weights: vec![1.0; k],
            gamma,
            clicks_avg: vec![0.0; k],
            smoothing,
            cpc_goal,
        })
    }
}

/// `p_i = (1 - γ) w_i / Σ w + γ / K`.
pub fn exp3_probabilities(state: &Exp3State) -> Vec<f64> {
    let k = state.weights.len() as f64;
    let total: f64 = state.weights.iter().sum();
    state
        .weights
        .iter()
        .map(|w| (1.0 - state.gamma) * w / total + state.gamma / k)
        .collect()
}

/// `x / (1 + x)` with `x = (C / C_goal) · (CPC_goal / CPC)`; zero clicks give zero.
pub fn exp3_reward(clicks: f64, cpc: f64, clicks_goal: f64, cpc_goal: f64) -> Result<f64> {
    if clicks <= 0.0 {
        return Ok(0.0);
    }
    if !(cpc > 0.0 && clicks_goal > 0.0 && cpc_goal > 0.0) {
        return Err(Error::InvalidInput(
            "exp3 reward needs positive CPC and goals".into(),
        ));
    }
    let x = (clicks / clicks_goal) * (cpc_goal / cpc);
    Ok(x / (1.0 + x))
}

/// Importance-weighted update of the drawn arm.
///
/// Weights are rescaled by their maximum afterwards; probabilities only depend on ratios.
pub fn exp3_step(
    state: &Exp3State,
    chosen: usize,
    reward: f64,
    probs: &[f64],
) -> Result<Exp3State> {
    ensure_len(state.weights.len(), probs.len())?;
    if chosen >= probs.len() {
        return Err(Error::InvalidInput(format!("arm {chosen} out of range")));
    }
    if !(0.0..=1.0).contains(&reward) {
        return Err(Error::InvalidInput(format!(
            "reward {reward} outside [0, 1]"
        )));
    }
    let k = state.weights.len() as f64;
    let mut next = state.clone();
    let estimate = reward / probs[chosen];
    next.weights[chosen] *= (state.gamma * estimate / k).exp();
    let max = next.weights.iter().cloned().fold(0.0, f64::max);
    if max > 1e100 {
        next.weights.iter_mut().for_each(|w| *w /= max);
    }
    Ok(next)
}

/// One exp3 epoch: draw an arm, reward it from its observation, return the next
/// state and the budgets `epoch_budget · p`.
///
/// `allotted` are the budgets the arms held during `obs`; the click goal of an arm is
/// the larger of its running click average and `allotted / CPC_goal`.
pub fn exp3_budget_step<R: Rng + ?Sized>(
    state: &Exp3State,
    obs: &EpochObservation,
    allotted: &[f64],
    epoch_budget: f64,
    rng: &mut R,
) -> Result<(Exp3State, Vec<f64>)> {
    let k = state.weights.len();
    ensure_len(k, obs.len())?;
    ensure_len(k, allotted.len())?;
    let probs = exp3_probabilities(state);
    let arm = WeightedIndex::new(&probs)
        .map_err(|e| Error::InvalidInput(e.to_string()))?
        .sample(rng);

    let clicks = obs.clicks[arm] as f64;
    let goal = state.clicks_avg[arm].max(allotted[arm] / state.cpc_goal);
    let reward = if clicks > 0.0 && goal > 0.0 {
        exp3_reward(clicks, obs.spend[arm] / clicks, goal, state.cpc_goal)?
    } else {
        0.0
    };
    let mut next = exp3_step(state, arm, reward, &probs)?;
    for i in 0..k {
        next.clicks_avg[i] =
            state.smoothing * state.clicks_avg[i] + (1.0 - state.smoothing) * obs.clicks[i] as f64;
    }
    let budgets = exp3_probabilities(&next)
        .into_iter()
        .map(|p| p * epoch_budget)
        .collect();
    Ok((next, budgets))
}
