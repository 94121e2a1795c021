//! Synthetic RTB market.
//!
//! Each media object has a CTR, a total inventory per epoch and a median winning bid,
//! drawn uniformly from configured intervals. Given a budget and a bid the market buys
//! as many impressions as budget and winnable inventory allow and samples clicks
//! binomially.

use std::f64::consts::PI;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bid::{expected_cpm, win_probability};
use crate::error::{ensure_len, Error, Result};
use crate::state::EpochObservation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthField {
    Ctr,
    Itot,
    Beta,
}

/// Multiplies one field of one media object over an inclusive range of epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthModifier {
    pub epoch: usize,
    /// Last epoch the modifier applies to; defaults to `epoch`.
    #[serde(default)]
    pub through_epoch: Option<usize>,
    pub media_object: usize,
    pub field: TruthField,
    pub multiplier: f64,
}

impl TruthModifier {
    fn applies_at(&self, epoch: usize) -> bool {
        epoch >= self.epoch && epoch <= self.through_epoch.unwrap_or(self.epoch)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulatorConfig {
    pub ctr_interval: [f64; 2],
    pub itot_interval: [f64; 2],
    pub beta_interval: [f64; 2],
    pub seed: u64,
    pub schedule: Vec<TruthModifier>,
    /// Relative depth of the night-time inventory drop; 0 disables it.
    pub daily_volume_amplitude: f64,
    /// Probability that a reported cell goes missing.
    pub gap_probability: f64,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        Self {
            ctr_interval: [0.0005, 0.002],
            beta_interval: [0.5, 2.0],
            itot_interval: [1e4, 1e6],
            seed: 0,
            schedule: Vec::new(),
            daily_volume_amplitude: 0.0,
            gap_probability: 0.0,
        }
    }
}

impl SimulatorConfig {
    pub fn validate(&self) -> Result<()> {
        let interval = |name: &str, [lo, hi]: [f64; 2], lo_min: f64, hi_max: f64| {
            if lo.is_finite() && hi.is_finite() && lo >= lo_min && lo <= hi && hi <= hi_max {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "invalid {name} interval [{lo}, {hi}]"
                )))
            }
        };
        interval("ctr", self.ctr_interval, 0.0, 1.0)?;
        interval("itot", self.itot_interval, 0.0, f64::MAX)?;
        interval("beta", self.beta_interval, f64::MIN_POSITIVE, f64::MAX)?;
        if self
            .schedule
            .iter()
            .any(|m| !(m.multiplier >= 0.0) || !m.multiplier.is_finite())
        {
            return Err(Error::Config(
                "schedule multipliers must be finite and >= 0".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.daily_volume_amplitude) {
            return Err(Error::Config(
                "daily_volume_amplitude must lie in [0, 1]".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.gap_probability) {
            return Err(Error::Config("gap_probability must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Ground truth of the simulated market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketTruth {
    pub ctr: Vec<f64>,
    pub itot: Vec<f64>,
    pub beta: Vec<f64>,
    #[serde(default)]
    pub schedule: Vec<TruthModifier>,
    #[serde(default)]
    pub daily_volume_amplitude: f64,
}

impl MarketTruth {
    /// Draws `k` media objects uniformly from the configured intervals.
    pub fn generate(cfg: &SimulatorConfig, k: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |[lo, hi]: [f64; 2]| -> Vec<f64> {
            (0..k).map(|_| rng.random_range(lo..=hi)).collect()
        };
        let ctr = draw(cfg.ctr_interval);
        let itot = draw(cfg.itot_interval)
            .into_iter()
            .map(f64::floor)
            .collect();
        let beta = draw(cfg.beta_interval);
        let truth = Self {
            ctr,
            itot,
            beta,
            schedule: cfg.schedule.clone(),
            daily_volume_amplitude: cfg.daily_volume_amplitude,
        };
        truth.validate()?;
        Ok(truth)
    }

    pub fn len(&self) -> usize {
        self.ctr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ctr.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.len();
        ensure_len(k, self.itot.len())?;
        ensure_len(k, self.beta.len())?;
        if self.ctr.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidInput("ctr outside [0, 1]".into()));
        }
        if self.itot.iter().any(|i| !(*i >= 0.0)) {
            return Err(Error::InvalidInput("negative inventory".into()));
        }
        if self.beta.iter().any(|b| !(*b > 0.0)) {
            return Err(Error::InvalidInput("beta must be positive".into()));
        }
        if self.schedule.iter().any(|m| m.media_object >= k) {
            return Err(Error::InvalidInput(
                "schedule references unknown media object".into(),
            ));
        }
        Ok(())
    }

    /// Stable hex digest of the truth, used to check that stacks share a market.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("truth serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Inventory multiplier for the hour of day of `epoch`; lowest at midnight.
    pub fn daily_volume_factor(&self, epoch: usize) -> f64 {
        let hour = (epoch % 24) as f64;
        1.0 - self.daily_volume_amplitude * (2.0 * PI * hour / 24.0).cos()
    }

    /// Truth in effect at `epoch`, with the daily cycle and scheduled modifiers applied.
    pub fn evolve(&self, epoch: usize) -> MarketTruth {
        let mut out = MarketTruth {
            ctr: self.ctr.clone(),
            itot: self.itot.clone(),
            beta: self.beta.clone(),
            schedule: Vec::new(),
            daily_volume_amplitude: 0.0,
        };
        if self.daily_volume_amplitude > 0.0 {
            let f = self.daily_volume_factor(epoch);
            out.itot.iter_mut().for_each(|i| *i = (*i * f).floor());
        }
        for m in self.schedule.iter().filter(|m| m.applies_at(epoch)) {
            let i = m.media_object;
            match m.field {
                TruthField::Ctr => {
                    let v = out.ctr[i] * m.multiplier;
                    if v > 1.0 {
                        warn!(
                            "ctr of media object {i} pushed to {v} at epoch {epoch}; clamped to 1"
                        );
                    }
                    out.ctr[i] = v.min(1.0);
                }
                TruthField::Itot => out.itot[i] = (out.itot[i] * m.multiplier).floor(),
                TruthField::Beta => {
                    // beta must stay positive
                    out.beta[i] = (out.beta[i] * m.multiplier).max(f64::MIN_POSITIVE)
                }
            }
        }
        out
    }
}

/// Result of one epoch for a single media object, before click sampling.
fn purchase(budget: f64, bid: f64, beta: f64, itot: f64) -> Result<(u64, f64)> {
    if budget <= 0.0 || bid <= 0.0 || itot <= 0.0 {
        return Ok((0, 0.0));
    }
    let cpm = expected_cpm(bid, beta)?;
    let by_budget = 1000.0 * budget / cpm;
    let available = itot * win_probability(bid, beta)?;
    let n = by_budget.min(available).floor().max(0.0);
    let spend = (n * cpm / 1000.0).min(budget);
    Ok((n as u64, spend))
}

/// Simulates one epoch against the truth in effect.
pub fn simulate_epoch<R: Rng + ?Sized>(
    truth: &MarketTruth,
    budgets: &[f64],
    bids: &[f64],
    rng: &mut R,
) -> Result<EpochObservation> {
    let k = truth.len();
    ensure_len(k, budgets.len())?;
    ensure_len(k, bids.len())?;
    if budgets
        .iter()
        .chain(bids)
        .any(|v| !(*v >= 0.0) || !v.is_finite())
    {
        return Err(Error::InvalidInput(
            "budgets and bids must be finite and >= 0".into(),
        ));
    }
    let mut obs = EpochObservation::empty(k);
    for i in 0..k {
        let (n, spend) = purchase(budgets[i], bids[i], truth.beta[i], truth.itot[i])?;
        let clicks = if n > 0 && truth.ctr[i] > 0.0 {
            Binomial::new(n, truth.ctr[i])
                .map_err(|e| Error::InvalidInput(e.to_string()))?
                .sample(rng)
        } else {
            0
        };
        obs.impressions[i] = n;
        obs.spend[i] = spend;
        obs.clicks[i] = clicks;
    }
    Ok(obs)
}

/// A market instance owning its truth and click-sampling stream.
#[derive(Debug, Clone)]
pub struct Market {
    truth: MarketTruth,
    rng: ChaCha8Rng,
}

impl Market {
    pub fn new(truth: MarketTruth, seed: u64) -> Result<Self> {
        truth.validate()?;
        Ok(Self {
            truth,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn truth(&self) -> &MarketTruth {
        &self.truth
    }

    pub fn step(
        &mut self,
        epoch: usize,
        budgets: &[f64],
        bids: &[f64],
    ) -> Result<EpochObservation> {
        let current = self.truth.evolve(epoch);
        simulate_epoch(&current, budgets, bids, &mut self.rng)
    }
}

/// Which reported cells go missing; the mask stream depends only on its seed.
#[derive(Debug, Clone)]
pub struct GapInjector {
    probability: f64,
    rng: ChaCha8Rng,
}

/// Per media object: impressions, clicks, spend missing flags.
pub type GapMask = Vec<[bool; 3]>;

impl GapInjector {
    pub fn new(probability: f64, seed: u64) -> Self {
        Self {
            probability,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn is_active(&self) -> bool {
        self.probability > 0.0
    }

    pub fn next_mask(&mut self, k: usize) -> GapMask {
        (0..k)
            .map(|_| {
                let mut cell = [false; 3];
                for c in cell.iter_mut() {
                    *c = self.rng.random::<f64>() < self.probability;
                }
                cell
            })
            .collect()
    }
}
