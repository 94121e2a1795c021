//! Campaign data model shared by every sub-routine.
//!
//! All per-media-object quantities are parallel vectors indexed in configuration order.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};

const SIMPLEX_TOL: f64 = 1e-9;

/// Smallest weight handed out when a starting repartition contains zeros.
pub const INITIAL_WEIGHT_FLOOR: f64 = 1e-12;

/// Static description of a campaign and the knobs of the optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub total_budget: f64,
    /// Number of hourly epochs in the campaign.
    pub epochs: usize,
    pub media_objects: usize,
    pub day_parting: bool,
    pub cpc_goal: f64,
    pub repetitions: usize,
    /// Learning rate of the exponentiated-gradient partitioner.
    pub learning_rate: f64,
    /// Discount applied to past clicks and budgets.
    pub discount: f64,
    /// Exploration strength of the regularizer toward uniform.
    pub exploration: f64,
    /// Per-day decay of the regularizer.
    pub regularization_discount: f64,
    /// Under-delivery threshold on spend / budget.
    pub delivery_threshold: f64,
    /// Pacing aggressiveness.
    pub aggressiveness: f64,
    pub bid_lower: f64,
    pub bid_upper: f64,
    pub budget_min: f64,
    pub initial_bid: f64,
    /// Nadam step size; defaults to 5% of the bid range.
    pub nadam_step: Option<f64>,
    pub seed: u64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            total_budget: 300_000.0,
            epochs: 720,
            media_objects: 10,
            day_parting: true,
            cpc_goal: 0.5,
            repetitions: 20,
            learning_rate: 1.0,
            discount: discount_for_horizon(7.0),
            exploration: 1.0,
            regularization_discount: 1.0 - 1.0 / 20.0,
            delivery_threshold: 0.95,
            aggressiveness: 5.0,
            bid_lower: 0.05,
            bid_upper: 10.0,
            budget_min: 1e-6,
            initial_bid: 5.0,
            nadam_step: None,
            seed: 0,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.total_budget >= 0.0 && self.total_budget.is_finite()) {
            return fail("total_budget must be finite and >= 0");
        }
        if self.epochs == 0 {
            return fail("epochs must be >= 1");
        }
        if self.media_objects == 0 {
            return fail("media_objects must be >= 1");
        }
        if self.day_parting && !self.epochs.is_multiple_of(24) {
            return fail("day-parted campaigns need a multiple of 24 epochs");
        }
        if !(self.cpc_goal > 0.0) {
            return fail("cpc_goal must be > 0");
        }
        if self.repetitions == 0 {
            return fail("repetitions must be >= 1");
        }
        if !(self.learning_rate > 0.0) {
            return fail("learning_rate must be > 0");
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return fail("discount must lie in [0, 1]");
        }
        if !(self.exploration > 0.0) {
            return fail("exploration must be > 0");
        }
        if !(self.regularization_discount > 0.0 && self.regularization_discount <= 1.0) {
            return fail("regularization_discount must lie in (0, 1]");
        }
        if !(self.delivery_threshold > 0.0 && self.delivery_threshold <= 1.0) {
            return fail("delivery_threshold must lie in (0, 1]");
        }
        if !(self.aggressiveness >= 1.0 && self.aggressiveness <= self.epochs as f64) {
            return fail("aggressiveness must lie in [1, epochs]");
        }
        if !(self.bid_lower >= 0.0 && self.bid_lower < self.bid_upper) {
            return fail("bid bounds must satisfy 0 <= bid_lower < bid_upper");
        }
        if !(self.budget_min >= 0.0) {
            return fail("budget_min must be >= 0");
        }
        if !(self.initial_bid >= self.bid_lower && self.initial_bid <= self.bid_upper) {
            return fail("initial_bid must lie within the bid bounds");
        }
        if let Some(step) = self.nadam_step {
            if !(step > 0.0) {
                return fail("nadam_step must be > 0");
            }
        }
        Ok(())
    }

    pub fn nadam_step_size(&self) -> f64 {
        self.nadam_step
            .unwrap_or(0.05 * (self.bid_upper - self.bid_lower))
    }

    /// Epochs seen by one optimizer instance (one hour slot when day parting).
    pub fn epochs_per_instance(&self) -> usize {
        if self.day_parting {
            self.epochs / 24
        } else {
            self.epochs
        }
    }

    /// Days elapsed at instance epoch `t`.
    pub fn days_elapsed(&self, t: usize) -> u32 {
        if self.day_parting {
            t as u32
        } else {
            (t / 24) as u32
        }
    }
}

/// Discount factor that forgets data older than `horizon` epochs by a factor `1/e`.
pub fn discount_for_horizon(horizon: f64) -> f64 {
    (-1.0 / horizon).exp()
}

/// A budget repartition: non-negative weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("empty weight vector".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput(
                "weights must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidInput(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self(weights))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    /// Normalizes arbitrary non-negative values onto the simplex.
    pub fn normalized(values: &[f64]) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(
                "values must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = values.iter().sum();
        if sum <= 0.0 {
            return Err(Error::DegenerateWeights);
        }
        Ok(Self(values.iter().map(|v| v / sum).collect()))
    }

    /// Starting repartition: zeros are lifted to [`INITIAL_WEIGHT_FLOOR`] before normalizing.
    pub fn initial(values: &[f64]) -> Result<Self> {
        let floored: Vec<f64> = values
            .iter()
            .map(|v| if *v <= 0.0 { INITIAL_WEIGHT_FLOOR } else { *v })
            .collect();
        Self::normalized(&floored)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Splits `total` according to the weights.
    pub fn allocate(&self, total: f64) -> Vec<f64> {
        self.0.iter().map(|w| w * total).collect()
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;

    fn try_from(value: Vec<f64>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(value: WeightVector) -> Self {
        value.0
    }
}

/// What the DSPs report for one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochObservation {
    pub impressions: Vec<u64>,
    pub clicks: Vec<u64>,
    pub spend: Vec<f64>,
}

impl EpochObservation {
    pub fn new(impressions: Vec<u64>, clicks: Vec<u64>, spend: Vec<f64>) -> Result<Self> {
        ensure_len(impressions.len(), clicks.len())?;
        ensure_len(impressions.len(), spend.len())?;
        if clicks.iter().zip(&impressions).any(|(c, n)| c > n) {
            return Err(Error::InvalidInput("clicks exceed impressions".into()));
        }
        if spend.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::InvalidInput("spend must be finite and >= 0".into()));
        }
        Ok(Self {
            impressions,
            clicks,
            spend,
        })
    }

    pub fn empty(k: usize) -> Self {
        Self {
            impressions: vec![0; k],
            clicks: vec![0; k],
            spend: vec![0.0; k],
        }
    }

    pub fn len(&self) -> usize {
        self.impressions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.impressions.is_empty()
    }

    pub fn total_spend(&self) -> f64 {
        self.spend.iter().sum()
    }

    pub fn total_clicks(&self) -> u64 {
        self.clicks.iter().sum()
    }
}

/// Per-media-object optimizer memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaObjectAccumulators {
    pub disc_clicks: Vec<f64>,
    pub disc_budgets: Vec<f64>,
    pub bids: Vec<f64>,
    pub nadam_m: Vec<f64>,
    pub nadam_n: Vec<f64>,
    pub nadam_step: u64,
    /// Running product of the momentum schedule up to the last step.
    pub nadam_mu_product: f64,
    /// Last estimate of the median winning bid, reused on epochs without impressions.
    pub beta: Vec<f64>,
}

impl MediaObjectAccumulators {
    pub fn new(k: usize, initial_bid: f64) -> Self {
        Self {
            disc_clicks: vec![0.0; k],
            disc_budgets: vec![0.0; k],
            bids: vec![initial_bid; k],
            nadam_m: vec![0.0; k],
            nadam_n: vec![0.0; k],
            nadam_step: 0,
            nadam_mu_product: 1.0,
            beta: vec![initial_bid; k],
        }
    }

    pub fn len(&self) -> usize {
        self.bids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bids.is_empty()
    }
}

/// Folds one epoch into the discounted clicks and budgets.
///
/// Accumulators start at zero, so the first call reduces to `Ĉ_0 = C_0`, `B̂_0 = B_0`.
pub fn update_discounted(
    acc: &MediaObjectAccumulators,
    obs: &EpochObservation,
    allocated: &[f64],
    gamma: f64,
) -> Result<MediaObjectAccumulators> {
    let k = acc.len();
    ensure_len(k, obs.len())?;
    ensure_len(k, allocated.len())?;
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidInput(format!(
            "discount {gamma} outside [0, 1]"
        )));
    }
    if allocated.iter().any(|b| !b.is_finite() || *b < 0.0) {
        return Err(Error::InvalidInput("allocated budgets must be >= 0".into()));
    }
    let mut next = acc.clone();
    for (i, b) in allocated.iter().enumerate() {
        next.disc_clicks[i] = obs.clicks[i] as f64 + gamma * acc.disc_clicks[i];
        next.disc_budgets[i] = b + gamma * acc.disc_budgets[i];
    }
    Ok(next)
}
