//! Closed-loop experiment runner: simulator, optimizer stacks, repetitions and reports.
//!
//! Every epoch runs partitioning, then bid setting, then pacing, then hands the new
//! budgets and bids to the market.

use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{debug, info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::baselines::{exp3_budget_step, lop_step, pst_step, Exp3State, LopState, PstParams};
use crate::bid::{bid_step, NadamHyper};
use crate::error::{Error, Result};
use crate::market::{GapInjector, GapMask, Market, MarketTruth, SimulatorConfig};
use crate::metrics::{
    plot_series, summarize_all, write_epoch_csv, PlotSeries, RunMetrics, Summary,
};
use crate::pacing::{Pacer, SpendProfile};
use crate::partition::{partition_step, PartitionerParams};
use crate::preprocess::{preprocess, TimeSeries};
use crate::state::{CampaignConfig, EpochObservation, MediaObjectAccumulators, WeightVector};

/// Prefix of environment variables that override plan keys, e.g. `SKOTT_TOTAL_BUDGET=5000`
/// or `SKOTT_SIMULATOR__GAP_PROBABILITY=0.1`.
pub const ENV_PREFIX: &str = "SKOTT_";

pub const HOURS_PER_DAY: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partitioner {
    Vnl,
    Mab,
    Lop,
    Skt1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BidSetter {
    Fixed,
    Pst,
    Skt2,
}

/// A combination of sub-routines, written like `skt1+skt2+skt3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stack {
    pub partitioner: Partitioner,
    pub bidder: BidSetter,
    pub pacing: bool,
}

impl FromStr for Stack {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut partitioner = None;
        let mut bidder = None;
        let mut pacing = false;
        let dup = |part: &str| Error::Config(format!("stack {s:?} sets {part} twice"));
        for part in s.split('+').map(str::trim) {
            match part.to_ascii_lowercase().as_str() {
                name @ ("vnl" | "mab" | "lop" | "skt1") => {
                    if partitioner.is_some() {
                        return Err(dup("the partitioner"));
                    }
                    partitioner = Some(match name {
                        "vnl" => Partitioner::Vnl,
                        "mab" => Partitioner::Mab,
                        "lop" => Partitioner::Lop,
                        _ => Partitioner::Skt1,
                    });
                }
                name @ ("pst" | "skt2") => {
                    if bidder.is_some() {
                        return Err(dup("the bid setter"));
                    }
                    bidder = Some(if name == "pst" {
                        BidSetter::Pst
                    } else {
                        BidSetter::Skt2
                    });
                }
                "skt3" => {
                    if pacing {
                        return Err(dup("pacing"));
                    }
                    pacing = true;
                }
                other => {
                    return Err(Error::Config(format!(
                        "unknown algorithm {other:?} in stack {s:?}"
                    )))
                }
            }
        }
        Ok(Self {
            partitioner: partitioner.unwrap_or(Partitioner::Vnl),
            bidder: bidder.unwrap_or(BidSetter::Fixed),
            pacing,
        })
    }
}

impl fmt::Display for Stack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = match self.partitioner {
            Partitioner::Vnl => "vnl",
            Partitioner::Mab => "mab",
            Partitioner::Lop => "lop",
            Partitioner::Skt1 => "skt1",
        };
        f.write_str(p)?;
        match self.bidder {
            BidSetter::Fixed => {}
            BidSetter::Pst => f.write_str("+pst")?,
            BidSetter::Skt2 => f.write_str("+skt2")?,
        }
        if self.pacing {
            f.write_str("+skt3")?;
        }
        Ok(())
    }
}

/// Fixed parameters of the comparison algorithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineParams {
    pub exp3_gamma: f64,
    pub exp3_smoothing: f64,
    pub lop_lower: f64,
    pub lop_upper: f64,
    pub pst_down: f64,
    pub pst_up: f64,
    pub pst_underdelivery: f64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            exp3_gamma: 0.1,
            exp3_smoothing: 0.87,
            lop_lower: 0.5,
            lop_upper: 2.0,
            pst_down: 0.9,
            pst_up: 1.05,
            pst_underdelivery: 0.95,
        }
    }
}

impl BaselineParams {
    fn pst(&self, cfg: &CampaignConfig) -> PstParams {
        PstParams {
            cpc_goal: cfg.cpc_goal,
            down_multiplier: self.pst_down,
            up_multiplier: self.pst_up,
            underdelivery_ratio: self.pst_underdelivery,
        }
    }
}

/// Everything needed to reproduce an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub config: CampaignConfig,
    pub simulator: SimulatorConfig,
    pub baselines: BaselineParams,
    /// Stacks to run, each against the same markets.
    pub algorithms: Vec<String>,
    /// Stack the `clk` column is relative to; the first stack when unset.
    pub baseline: Option<String>,
    /// Single hour slot to run under day parting; all 24 when unset.
    pub slot: Option<usize>,
    /// Fixed market truth shared by every repetition instead of fresh draws.
    pub truth_file: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            config: CampaignConfig::default(),
            simulator: SimulatorConfig::default(),
            baselines: BaselineParams::default(),
            algorithms: ["vnl", "mab", "lop", "skt1"].map(String::from).to_vec(),
            baseline: None,
            slot: None,
            truth_file: None,
            output_dir: None,
        }
    }
}

impl ExperimentPlan {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read plan {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("invalid plan {}: {e}", path.display())))
    }

    /// Applies `SKOTT_*` overrides. Nested keys are joined with `__`; a bare key is looked
    /// up at the top level, then in `config`, `simulator` and `baselines`. Values are parsed
    /// as JSON and fall back to plain strings.
    pub fn apply_env_overrides<I>(&mut self, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut tree = serde_json::to_value(&*self)?;
        let mut touched = false;
        for (key, raw) in vars {
            let Some(rest) = key.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let path: Vec<String> = rest
                .to_ascii_lowercase()
                .split("__")
                .map(String::from)
                .collect();
            let value = serde_json::from_str(&raw).unwrap_or(Value::String(raw.clone()));
            let slot = resolve_key(&mut tree, &path)
                .ok_or_else(|| Error::Config(format!("{key} does not name a plan key")))?;
            debug!("override {key}={raw}");
            *slot = value;
            touched = true;
        }
        if touched {
            *self = serde_json::from_value(tree)
                .map_err(|e| Error::Config(format!("invalid environment override: {e}")))?;
        }
        Ok(())
    }

    pub fn stacks(&self) -> Result<Vec<Stack>> {
        if self.algorithms.is_empty() {
            return Err(Error::Config("no algorithm stacks to run".into()));
        }
        self.algorithms.iter().map(|s| s.parse()).collect()
    }

    /// Canonical name of the stack `clk` is measured against.
    pub fn baseline_name(&self) -> Result<String> {
        let stacks = self.stacks()?;
        let base = match &self.baseline {
            Some(b) => b.parse::<Stack>()?,
            None => stacks[0],
        };
        if !stacks.contains(&base) {
            return Err(Error::Config(format!(
                "baseline {base} is not among the stacks"
            )));
        }
        Ok(base.to_string())
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.simulator.validate()?;
        let stacks = self.stacks()?;
        for (i, s) in stacks.iter().enumerate() {
            if stacks[..i].contains(s) {
                return Err(Error::Config(format!("stack {s} listed twice")));
            }
        }
        self.baseline_name()?;
        if let Some(h) = self.slot {
            if !self.config.day_parting {
                return Err(Error::Config(
                    "a slot only makes sense with day parting".into(),
                ));
            }
            if h >= HOURS_PER_DAY {
                return Err(Error::Config(format!("slot {h} is not an hour of the day")));
            }
        }
        let b = &self.baselines;
        Exp3State::new(1, b.exp3_gamma, b.exp3_smoothing, self.config.cpc_goal)
            .map_err(|e| Error::Config(e.to_string()))?;
        LopState::new(1, b.lop_lower, b.lop_upper, self.config.discount)
            .map_err(|e| Error::Config(e.to_string()))?;
        b.pst(&self.config).validate()?;
        Ok(())
    }

    /// Budget one run of this plan is given: a 24th of the total for a single slot.
    pub fn run_budget(&self) -> f64 {
        if self.config.day_parting && self.slot.is_some() {
            self.config.total_budget / HOURS_PER_DAY as f64
        } else {
            self.config.total_budget
        }
    }

    /// Market truth of repetition `rep`.
    pub fn truth(&self, rep: usize) -> Result<MarketTruth> {
        let truth = match &self.truth_file {
            Some(path) => load_truth(path)?,
            None => MarketTruth::generate(
                &self.simulator,
                self.config.media_objects,
                derive_seed(self.config.seed, rep, "truth", None),
            )?,
        };
        if truth.len() != self.config.media_objects {
            return Err(Error::Config(format!(
                "truth has {} media objects, config has {}",
                truth.len(),
                self.config.media_objects
            )));
        }
        Ok(truth)
    }
}

fn resolve_key<'a>(tree: &'a mut Value, path: &[String]) -> Option<&'a mut Value> {
    if path.len() == 1 {
        let key = &path[0];
        let section = if tree.get(key).is_some() {
            None
        } else {
            ["config", "simulator", "baselines"]
                .into_iter()
                .find(|s| tree.get(*s).and_then(|v| v.get(key)).is_some())
        };
        return match section {
            Some(s) => tree.get_mut(s)?.get_mut(key),
            None => tree.get_mut(key),
        };
    }
    let mut node = tree;
    for part in path {
        node = node.get_mut(part)?;
    }
    Some(node)
}

pub fn load_truth(path: &Path) -> Result<MarketTruth> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read truth {}: {e}", path.display())))?;
    let truth: MarketTruth = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("invalid truth {}: {e}", path.display())))?;
    truth.validate()?;
    Ok(truth)
}

/// Seed of one random stream, hashed from the master seed, the repetition, a stream tag
/// and, for algorithm-internal streams, the stack.
pub fn derive_seed(master: u64, repetition: usize, tag: &str, stack: Option<&str>) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((repetition as u64).to_le_bytes());
    h.update(tag.as_bytes());
    if let Some(s) = stack {
        h.update([0u8]);
        h.update(s.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Raw per-epoch results of one optimizer instance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InstanceTrace {
    pub observations: Vec<EpochObservation>,
    /// Budget share of each media object during the epoch.
    pub weights: Vec<Vec<f64>>,
    pub bids: Vec<Vec<f64>>,
    pub budgets: Vec<Vec<f64>>,
}

/// What the optimizer has been told so far, with injected gaps.
struct ReportedHistory {
    cells: Vec<[TimeSeries; 3]>,
}

impl ReportedHistory {
    fn new(k: usize) -> Self {
        Self {
            cells: (0..k).map(|_| Default::default()).collect(),
        }
    }

    fn push(&mut self, obs: &EpochObservation, mask: &GapMask) {
        for (i, cell) in self.cells.iter_mut().enumerate() {
            let values = [
                obs.impressions[i] as f64,
                obs.clicks[i] as f64,
                obs.spend[i],
            ];
            for f in 0..3 {
                cell[f].0.push((!mask[i][f]).then_some(values[f]));
            }
        }
    }

    /// Latest epoch after filling the gaps. Series with no report yet read as zero.
    fn latest(&self) -> Result<EpochObservation> {
        let k = self.cells.len();
        let mut impressions = Vec::with_capacity(k);
        let mut clicks = Vec::with_capacity(k);
        let mut spend = Vec::with_capacity(k);
        for (i, cell) in self.cells.iter().enumerate() {
            let mut last = [0.0; 3];
            for f in 0..3 {
                last[f] = match preprocess(&cell[f]) {
                    Ok(filled) => filled.0.last().copied().flatten().unwrap_or(0.0).max(0.0),
                    Err(Error::NoValidObservation) => 0.0,
                    Err(e) => return Err(e),
                };
            }
            let mut n = last[0].round() as u64;
            if n == 0 && last[2] > 0.0 {
                debug!("media object {i}: filled spend without impressions; assuming one");
                n = 1;
            }
            impressions.push(n);
            clicks.push((last[1].round() as u64).min(n));
            spend.push(last[2]);
        }
        EpochObservation::new(impressions, clicks, spend)
    }
}

fn shares(budgets: &[f64]) -> Vec<f64> {
    let total: f64 = budgets.iter().sum();
    if total > 0.0 {
        budgets.iter().map(|b| b / total).collect()
    } else {
        vec![1.0 / budgets.len() as f64; budgets.len()]
    }
}

/// Seeds of the random streams one optimizer instance uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstanceSeeds {
    pub clicks: u64,
    pub gaps: u64,
    pub algo: u64,
}

impl InstanceSeeds {
    pub fn derive(master: u64, repetition: usize, slot: usize, stack: &Stack) -> Self {
        Self {
            clicks: derive_seed(master, repetition, &format!("clicks/{slot}"), None),
            gaps: derive_seed(master, repetition, &format!("gaps/{slot}"), None),
            algo: derive_seed(
                master,
                repetition,
                &format!("algo/{slot}"),
                Some(&stack.to_string()),
            ),
        }
    }
}

/// Runs one optimizer instance over the market epochs `global_epochs`, spending `budget`.
///
/// Epoch indices inside the instance drive the regularizer decay and pacing; the global
/// indices only select the market state.
pub fn run_instance(
    stack: &Stack,
    plan: &ExperimentPlan,
    truth: &MarketTruth,
    budget: f64,
    global_epochs: &[usize],
    seeds: InstanceSeeds,
) -> Result<InstanceTrace> {
    let cfg = &plan.config;
    let k = cfg.media_objects;
    let n = global_epochs.len();
    let profile = SpendProfile::uniform(budget, n);
    let pacer = Pacer::new(profile.clone(), cfg.aggressiveness);
    let mut market = Market::new(truth.clone(), seeds.clicks)?;
    let mut gaps = GapInjector::new(plan.simulator.gap_probability, seeds.gaps);
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.algo);
    let params = PartitionerParams::from_config(cfg);
    let hyper = NadamHyper::with_step(cfg.nadam_step_size());
    let pst = plan.baselines.pst(cfg);
    let b = &plan.baselines;

    let mut acc = MediaObjectAccumulators::new(k, cfg.initial_bid);
    let mut weights = WeightVector::uniform(k);
    let mut exp3 = Exp3State::new(k, b.exp3_gamma, b.exp3_smoothing, cfg.cpc_goal)?;
    let mut lop = LopState::new(k, b.lop_lower, b.lop_upper, cfg.discount)?;
    let mut bids = vec![cfg.initial_bid; k];
    let mut budgets = weights.allocate(profile.ideal_epoch_budget(0));
    let mut history = ReportedHistory::new(k);
    let mut reported_spend = 0.0;
    let mut trace = InstanceTrace::default();

    for (t, &epoch) in global_epochs.iter().enumerate() {
        let obs = market.step(epoch, &budgets, &bids)?;
        let seen = if gaps.is_active() {
            history.push(&obs, &gaps.next_mask(k));
            history.latest()?
        } else {
            obs.clone()
        };
        trace.weights.push(shares(&budgets));
        trace.bids.push(bids.clone());
        trace.budgets.push(budgets.clone());
        trace.observations.push(obs);
        reported_spend += seen.total_spend();
        if t + 1 == n {
            break;
        }

        let total = if stack.pacing {
            pacer.next_budget(t, reported_spend)?
        } else {
            profile.ideal_epoch_budget(t + 1)
        };
        let next_budgets = match stack.partitioner {
            Partitioner::Vnl => weights.allocate(total),
            Partitioner::Skt1 => {
                let day = cfg.days_elapsed(t + 1);
                let (a, w) = partition_step(&acc, &seen, &budgets, &weights, &params, day)?;
                acc = a;
                weights = w;
                weights.allocate(total)
            }
            Partitioner::Mab => {
                let (s, next) = exp3_budget_step(&exp3, &seen, &budgets, total, &mut rng)?;
                exp3 = s;
                next
            }
            Partitioner::Lop => {
                let (s, next) = lop_step(&lop, &seen, total)?;
                lop = s;
                next
            }
        };
        bids = match stack.bidder {
            BidSetter::Fixed => bids,
            BidSetter::Pst => pst_step(
                &pst,
                &seen,
                &budgets,
                &bids,
                (cfg.bid_lower, cfg.bid_upper),
                cfg.budget_min,
            )?,
            BidSetter::Skt2 => {
                acc = bid_step(&acc, &seen, &budgets, cfg, &hyper)?;
                acc.bids.clone()
            }
        };
        budgets = next_budgets;
    }
    Ok(trace)
}

fn record_epoch(m: &mut RunMetrics, trace: &InstanceTrace, t: usize) {
    let obs = &trace.observations[t];
    m.record(
        obs.total_spend(),
        obs.total_clicks(),
        &trace.weights[t],
        &trace.bids[t],
    );
}

/// One repetition of one stack, day-parted or not depending on the plan.
pub fn run_campaign(
    stack: &Stack,
    plan: &ExperimentPlan,
    truth: &MarketTruth,
    repetition: usize,
) -> Result<RunMetrics> {
    if plan.config.day_parting {
        return run_day_parted(stack, plan, truth, repetition);
    }
    let cfg = &plan.config;
    let epochs: Vec<usize> = (0..cfg.epochs).collect();
    let seeds = InstanceSeeds::derive(cfg.seed, repetition, 0, stack);
    let trace = run_instance(stack, plan, truth, cfg.total_budget, &epochs, seeds)?;
    let mut m = RunMetrics::new(
        &stack.to_string(),
        repetition,
        cfg.total_budget,
        &truth.fingerprint(),
    );
    for t in 0..epochs.len() {
        record_epoch(&mut m, &trace, t);
    }
    Ok(m)
}

/// Global epochs seen by the instance of hour `slot`.
pub fn slot_epochs(slot: usize, epochs: usize) -> Vec<usize> {
    (slot..epochs).step_by(HOURS_PER_DAY).collect()
}

/// One optimizer per hour of the day, each seeing only its own hour and a 24th of the
/// budget. With a slot selected only that instance runs.
pub fn run_day_parted(
    stack: &Stack,
    plan: &ExperimentPlan,
    truth: &MarketTruth,
    repetition: usize,
) -> Result<RunMetrics> {
    let cfg = &plan.config;
    if !cfg.day_parting {
        return Err(Error::Config("day parting is disabled".into()));
    }
    let slot_budget = cfg.total_budget / HOURS_PER_DAY as f64;
    let slots: Vec<usize> = match plan.slot {
        Some(h) => vec![h],
        None => (0..HOURS_PER_DAY).collect(),
    };
    let traces = slots
        .iter()
        .map(|&h| {
            let seeds = InstanceSeeds::derive(cfg.seed, repetition, h, stack);
            run_instance(
                stack,
                plan,
                truth,
                slot_budget,
                &slot_epochs(h, cfg.epochs),
                seeds,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut m = RunMetrics::new(
        &stack.to_string(),
        repetition,
        plan.run_budget(),
        &truth.fingerprint(),
    );
    let days = cfg.epochs / HOURS_PER_DAY;
    for d in 0..days {
        for trace in &traces {
            record_epoch(&mut m, trace, d);
        }
    }
    Ok(m)
}

/// Completed runs, their summary, and plot-ready averages.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub runs: Vec<RunMetrics>,
    pub summary: Summary,
    pub series: Vec<PlotSeries>,
}

impl ExperimentOutcome {
    pub fn has_failures(&self) -> bool {
        !self.summary.failures.is_empty()
    }
}

/// Runs every stack for every repetition. Failed repetitions are logged and listed in the
/// summary; the table is computed over those that completed.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentOutcome> {
    plan.validate()?;
    let stacks = plan.stacks()?;
    let baseline = plan.baseline_name()?;
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for rep in 0..plan.config.repetitions {
        let truth = plan.truth(rep)?;
        let fingerprint = truth.fingerprint();
        for stack in &stacks {
            info!("repetition {rep} stack {stack} truth {fingerprint}");
            match run_campaign(stack, plan, &truth, rep) {
                Ok(m) => runs.push(m),
                Err(e) => {
                    warn!("repetition {rep} of {stack} failed: {e}");
                    failures.push((stack.to_string(), rep, e.to_string()));
                }
            }
        }
    }
    let mut summary = summarize_all(&runs, &baseline)?;
    summary.failures = failures;
    let series = stacks
        .iter()
        .filter_map(|s| {
            let name = s.to_string();
            let mine: Vec<RunMetrics> = runs
                .iter()
                .filter(|r| r.algorithm == name)
                .cloned()
                .collect();
            (!mine.is_empty()).then(|| plot_series(&mine))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentOutcome {
        runs,
        summary,
        series,
    })
}

/// Writes `epochs.csv`, `summary.json` and `series.json` into `dir`.
pub fn write_outputs(outcome: &ExperimentOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_epoch_csv(
        &outcome.runs,
        BufWriter::new(File::create(dir.join("epochs.csv"))?),
    )?;
    serde_json::to_writer_pretty(
        BufWriter::new(File::create(dir.join("summary.json"))?),
        &outcome.summary,
    )?;
    serde_json::to_writer(
        BufWriter::new(File::create(dir.join("series.json"))?),
        &outcome.series,
    )?;
    Ok(())
}
