//! Evaluation metrics and report emission.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};

/// `Σ w_i ln(w_i K) / ln K` with `0 ln 0 = 0`; zero for a single media object.
pub fn kl_divergence_rescaled(w: &[f64]) -> f64 {
    let k = w.len();
    if k <= 1 {
        return 0.0;
    }
    let kf = k as f64;
    let raw: f64 = w
        .iter()
        .filter(|x| **x > 0.0)
        .map(|x| x * (x * kf).ln())
        .sum();
    (raw / kf.ln()).clamp(0.0, 1.0)
}

/// `Σ spend / Σ clicks`, infinite while no click has been bought.
pub fn cumulative_cpc(spend: &[f64], clicks: &[u64]) -> Result<f64> {
    ensure_len(spend.len(), clicks.len())?;
    let c: u64 = clicks.iter().sum();
    if c == 0 {
        return Ok(f64::INFINITY);
    }
    Ok(spend.iter().sum::<f64>() / c as f64)
}

/// Centered moving average; windows are truncated at the ends of the series.
pub fn smooth_centered(series: &[f64], window: usize) -> Vec<f64> {
    let half = window.max(1) / 2;
    (0..series.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(series.len());
            series[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Per-epoch trace of one repetition of one algorithm stack.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunMetrics {
    pub algorithm: String,
    pub repetition: usize,
    /// Budget the run was given, the denominator of `spt`.
    pub budget: f64,
    pub truth_fingerprint: String,
    pub spend: Vec<f64>,
    pub clicks: Vec<u64>,
    pub cumulative_cpc: Vec<f64>,
    pub rescaled_kld: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
    pub bids: Vec<Vec<f64>>,
}

impl RunMetrics {
    pub fn new(algorithm: &str, repetition: usize, budget: f64, truth_fingerprint: &str) -> Self {
        Self {
            algorithm: algorithm.to_string(),
            repetition,
            budget,
            truth_fingerprint: truth_fingerprint.to_string(),
            ..Self::default()
        }
    }

    /// Appends one epoch. `weights` is the partition in force during the epoch.
    pub fn record(&mut self, spend: f64, clicks: u64, weights: &[f64], bids: &[f64]) {
        self.spend.push(spend);
        self.clicks.push(clicks);
        let total_clicks: u64 = self.clicks.iter().sum();
        let total_spend: f64 = self.spend.iter().sum();
        self.cumulative_cpc.push(if total_clicks == 0 {
            f64::INFINITY
        } else {
            total_spend / total_clicks as f64
        });
        self.rescaled_kld.push(kl_divergence_rescaled(weights));
        self.weights.push(weights.to_vec());
        self.bids.push(bids.to_vec());
    }

    pub fn epochs(&self) -> usize {
        self.spend.len()
    }

    pub fn total_spend(&self) -> f64 {
        self.spend.iter().sum()
    }

    pub fn total_clicks(&self) -> u64 {
        self.clicks.iter().sum()
    }

    pub fn final_kld(&self) -> f64 {
        self.rescaled_kld.last().copied().unwrap_or(0.0)
    }
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algo: String,
    /// Percent of the configured budget spent.
    pub spt: f64,
    /// Clicks in percent of the baseline's clicks.
    pub clk: f64,
    pub cpc: f64,
    /// Final-epoch rescaled KL divergence, averaged over repetitions.
    pub kld: f64,
    pub repetitions: usize,
    pub mean_clicks: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub baseline: String,
    pub rows: Vec<SummaryRow>,
    /// Repetitions that aborted, as `(algorithm, repetition, message)`.
    #[serde(default)]
    pub failures: Vec<(String, usize, String)>,
}

fn mean_clicks(runs: &[RunMetrics]) -> f64 {
    runs.iter().map(|r| r.total_clicks() as f64).sum::<f64>() / runs.len() as f64
}

/// Averages the repetitions of one algorithm into a table row.
pub fn summarize(runs: &[RunMetrics], baseline: &[RunMetrics]) -> Result<SummaryRow> {
    let first = runs
        .first()
        .ok_or_else(|| Error::InvalidInput("no completed repetitions to summarize".into()))?;
    if baseline.is_empty() {
        return Err(Error::InvalidInput("no baseline repetitions".into()));
    }
    let base = mean_clicks(baseline);
    if base <= 0.0 {
        return Err(Error::ZeroBaselineClicks);
    }
    let n = runs.len() as f64;
    let spt = runs
        .iter()
        .map(|r| {
            if r.budget > 0.0 {
                r.total_spend() / r.budget
            } else {
                0.0
            }
        })
        .sum::<f64>()
        / n
        * 100.0;
    let spend: f64 = runs.iter().map(RunMetrics::total_spend).sum();
    let clicks: u64 = runs.iter().map(RunMetrics::total_clicks).sum();
    let mine = mean_clicks(runs);
    Ok(SummaryRow {
        algo: first.algorithm.clone(),
        spt: spt.clamp(0.0, 100.0),
        clk: 100.0 * mine / base,
        cpc: if clicks == 0 {
            f64::INFINITY
        } else {
            spend / clicks as f64
        },
        kld: runs.iter().map(RunMetrics::final_kld).sum::<f64>() / n,
        repetitions: runs.len(),
        mean_clicks: mine,
    })
}

/// Groups runs by algorithm (keeping first-seen order) and summarizes each against `baseline`.
pub fn summarize_all(runs: &[RunMetrics], baseline: &str) -> Result<Summary> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<RunMetrics>> = BTreeMap::new();
    for r in runs {
        if !groups.contains_key(r.algorithm.as_str()) {
            order.push(&r.algorithm);
        }
        groups.entry(&r.algorithm).or_default().push(r.clone());
    }
    let base = groups
        .get(baseline)
        .ok_or_else(|| Error::Config(format!("baseline {baseline} has no completed runs")))?;
    let rows = order
        .iter()
        .map(|a| summarize(&groups[a], base))
        .collect::<Result<Vec<_>>>()?;
    Ok(Summary {
        baseline: baseline.to_string(),
        rows,
        failures: Vec::new(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct EpochRecord {
    repetition: usize,
    epoch: usize,
    algorithm: String,
    spend: f64,
    clicks: u64,
    cumulative_cpc: f64,
    rescaled_kld: f64,
}

/// Writes `(repetition, epoch, algorithm, spend, clicks, cumulative_cpc, rescaled_kld)` rows.
pub fn write_epoch_csv<W: Write>(runs: &[RunMetrics], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in runs {
        for t in 0..r.epochs() {
            w.serialize(EpochRecord {
                repetition: r.repetition,
                epoch: t,
                algorithm: r.algorithm.clone(),
                spend: r.spend[t],
                clicks: r.clicks[t],
                cumulative_cpc: r.cumulative_cpc[t],
                rescaled_kld: r.rescaled_kld[t],
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a per-epoch CSV back into runs. Weights, bids and fingerprints are not stored
/// there, so they come back empty; every run gets `budget`.
pub fn read_epoch_csv<R: Read>(input: R, budget: f64) -> Result<Vec<RunMetrics>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut runs: Vec<RunMetrics> = Vec::new();
    for rec in rdr.deserialize() {
        let rec: EpochRecord = rec?;
        let idx = match runs
            .iter()
            .position(|r| r.algorithm == rec.algorithm && r.repetition == rec.repetition)
        {
            Some(i) => i,
            None => {
                runs.push(RunMetrics::new(&rec.algorithm, rec.repetition, budget, ""));
                runs.len() - 1
            }
        };
        let run = &mut runs[idx];
        if rec.epoch != run.epochs() {
            return Err(Error::InvalidInput(format!(
                "{} repetition {}: epoch {} out of order",
                rec.algorithm, rec.repetition, rec.epoch
            )));
        }
        run.spend.push(rec.spend);
        run.clicks.push(rec.clicks);
        run.cumulative_cpc.push(rec.cumulative_cpc);
        run.rescaled_kld.push(rec.rescaled_kld);
    }
    Ok(runs)
}

/// Plot-ready series of one algorithm averaged over repetitions, raw and smoothed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotSeries {
    pub algorithm: String,
    pub spend: Vec<f64>,
    pub spend_smoothed: Vec<f64>,
    pub clicks: Vec<f64>,
    pub clicks_smoothed: Vec<f64>,
    pub rescaled_kld: Vec<f64>,
    pub rescaled_kld_smoothed: Vec<f64>,
}

pub const SMOOTHING_WINDOW: usize = 5;

pub fn plot_series(runs: &[RunMetrics]) -> Result<PlotSeries> {
    let first = runs
        .first()
        .ok_or_else(|| Error::InvalidInput("no runs to plot".into()))?;
    let t = first.epochs();
    let n = runs.len() as f64;
    let mut spend = vec![0.0; t];
    let mut clicks = vec![0.0; t];
    let mut kld = vec![0.0; t];
    for r in runs {
        ensure_len(t, r.epochs())?;
        for i in 0..t {
            spend[i] += r.spend[i] / n;
            clicks[i] += r.clicks[i] as f64 / n;
            kld[i] += r.rescaled_kld[i] / n;
        }
    }
    Ok(PlotSeries {
        algorithm: first.algorithm.clone(),
        spend_smoothed: smooth_centered(&spend, SMOOTHING_WINDOW),
        clicks_smoothed: smooth_centered(&clicks, SMOOTHING_WINDOW),
        rescaled_kld_smoothed: smooth_centered(&kld, SMOOTHING_WINDOW),
        spend,
        clicks,
        rescaled_kld: kld,
    })
}
