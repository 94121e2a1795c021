//! Pacing control: nudges the next epoch's total budget back toward the ideal spend curve.

use std::io::Read;

use log::debug;
use serde::Deserialize;

use crate::error::{Error, Result};

/// Ideal cumulative spend after each epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct SpendProfile {
    cumulative: Vec<f64>,
}

impl SpendProfile {
    /// Spend proportional to elapsed time.
    pub fn uniform(total_budget: f64, epochs: usize) -> Self {
        let cumulative = (1..=epochs)
            .map(|t| total_budget * t as f64 / epochs as f64)
            .collect();
        Self { cumulative }
    }

    pub fn from_cumulative(cumulative: Vec<f64>) -> Result<Self> {
        if cumulative.is_empty() {
            return Err(Error::Config("empty spend profile".into()));
        }
        let mut prev = 0.0;
        for v in &cumulative {
            if !v.is_finite() || *v < prev {
                return Err(Error::Config(
                    "spend profile must be non-negative and non-decreasing".into(),
                ));
            }
            prev = *v;
        }
        Ok(Self { cumulative })
    }

    /// Reads `epoch,ideal_cumulative` rows.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            epoch: usize,
            ideal_cumulative: f64,
        }
        let mut rows: Vec<Row> = csv::Reader::from_reader(reader)
            .deserialize()
            .collect::<std::result::Result<_, _>>()?;
        rows.sort_by_key(|r| r.epoch);
        if rows.iter().enumerate().any(|(i, r)| r.epoch != i) {
            return Err(Error::Config(
                "profile epochs must be 0..T without gaps".into(),
            ));
        }
        Self::from_cumulative(rows.into_iter().map(|r| r.ideal_cumulative).collect())
    }

    /// Rescales the curve so that it ends at `total_budget`.
    pub fn scaled_to(&self, total_budget: f64) -> Self {
        let end = self.total();
        let factor = if end > 0.0 { total_budget / end } else { 0.0 };
        Self {
            cumulative: self.cumulative.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn epochs(&self) -> usize {
        self.cumulative.len()
    }

    pub fn total(&self) -> f64 {
        *self.cumulative.last().expect("profile is never empty")
    }

    /// Ideal cumulative spend at the end of epoch `t`.
    pub fn ideal_cumulative(&self, t: usize) -> f64 {
        self.cumulative[t]
    }

    /// Ideal budget of epoch `t`.
    pub fn ideal_epoch_budget(&self, t: usize) -> f64 {
        let before = if t == 0 { 0.0 } else { self.cumulative[t - 1] };
        self.cumulative[t] - before
    }
}

/// `B̄_{t+1} + η (S̄_t - S_t) / (T - t)`, floored at zero.
///
/// `eta` is clamped to `epochs_left` so that the final epoch applies exactly the whole
/// remaining correction.
pub fn pacing_step(
    ideal_spent: f64,
    actual_spent: f64,
    ideal_next_budget: f64,
    eta: f64,
    epochs_left: usize,
) -> Result<f64> {
    if epochs_left == 0 {
        return Err(Error::CampaignOver);
    }
    if !(eta >= 1.0) {
        return Err(Error::InvalidInput(format!("aggressiveness {eta} below 1")));
    }
    let left = epochs_left as f64;
    let eta = if eta > left {
        debug!("aggressiveness {eta} clamped to {left} epochs left");
        left
    } else {
        eta
    };
    let correction = eta * (ideal_spent - actual_spent) / left;
    Ok((ideal_next_budget + correction).max(0.0))
}

/// Stateful pacer following a [`SpendProfile`].
#[derive(Debug, Clone)]
pub struct Pacer {
    profile: SpendProfile,
    aggressiveness: f64,
}

impl Pacer {
    pub fn new(profile: SpendProfile, aggressiveness: f64) -> Self {
        Self {
            profile,
            aggressiveness,
        }
    }

    pub fn profile(&self) -> &SpendProfile {
        &self.profile
    }

    /// Budget for epoch `completed + 1` given the actual cumulative spend through `completed`.
    pub fn next_budget(&self, completed: usize, actual_cumulative: f64) -> Result<f64> {
        let epochs = self.profile.epochs();
        if completed + 1 >= epochs {
            return Err(Error::CampaignOver);
        }
        pacing_step(
            self.profile.ideal_cumulative(completed),
            actual_cumulative,
            self.profile.ideal_epoch_budget(completed + 1),
            self.aggressiveness,
            epochs - completed - 1,
        )
    }
}
