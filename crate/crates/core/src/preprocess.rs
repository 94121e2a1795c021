//! Missing-data filling for observation streams.
//!
//! Gaps are filled in three passes: leading gaps by backward fill, interior gaps by
//! linear interpolation, trailing gaps by a growing weighted moving average.

use std::collections::BTreeMap;
use std::io::Read;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::state::EpochObservation;

/// A series of real values where `None` marks a missing observation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeSeries(pub Vec<Option<f64>>);

impl TimeSeries {
    /// Builds a series treating NaN as missing.
    pub fn from_f64(values: &[f64]) -> Self {
        Self(
            values
                .iter()
                .map(|v| if v.is_nan() { None } else { Some(*v) })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.0.iter().all(Option::is_some)
    }

    /// Values with missing entries as NaN.
    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|v| v.unwrap_or(f64::NAN)).collect()
    }

    fn first_valid(&self) -> Option<usize> {
        self.0.iter().position(Option::is_some)
    }
}

/// Parses one cell: empty or `nan` (any case) is missing.
pub fn parse_cell(cell: &str) -> Result<Option<f64>> {
    let cell = cell.trim();
    if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    cell.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::InvalidInput(format!("cannot parse {cell:?} as a number")))
}

pub fn backward_fill(series: &TimeSeries) -> Result<TimeSeries> {
    let first = series.first_valid().ok_or(Error::NoValidObservation)?;
    let mut out = series.clone();
    let value = series.0[first];
    out.0[..first].iter_mut().for_each(|v| *v = value);
    Ok(out)
}

/// Fills gaps that sit between two observed values; leading and trailing gaps are kept.
pub fn linear_interpolate(series: &TimeSeries) -> TimeSeries {
    let mut out = series.clone();
    let mut last_valid: Option<usize> = None;
    for i in 0..series.len() {
        let Some(right) = series.0[i] else { continue };
        if let Some(l) = last_valid {
            if i > l + 1 {
                let left = series.0[l].expect("last_valid points at a value");
                let span = (i - l) as f64;
                for (j, slot) in out.0[l + 1..i].iter_mut().enumerate() {
                    let frac = (j + 1) as f64 / span;
                    *slot = Some(left + (right - left) * frac);
                }
            }
        }
        last_valid = Some(i);
    }
    out
}

/// Extends a complete prefix over a trailing gap with a linearly weighted moving average.
///
/// The newest point carries weight `t`, the oldest weight one; each filled value joins
/// the window for the next fill.
pub fn wma_extend(series: &TimeSeries) -> Result<TimeSeries> {
    let prefix = series.0.iter().take_while(|v| v.is_some()).count();
    if prefix == 0 {
        return Err(Error::NoValidObservation);
    }
    if series.0[prefix..].iter().any(Option::is_some) {
        return Err(Error::InvalidInput(
            "weighted moving average needs a complete prefix followed only by gaps".into(),
        ));
    }
    let mut values: Vec<f64> = series.0[..prefix].iter().map(|v| v.unwrap()).collect();
    let mut weighted: f64 = values
        .iter()
        .enumerate()
        .map(|(i, x)| (i + 1) as f64 * x)
        .sum();
    while values.len() < series.len() {
        let t = values.len() as f64;
        let next = weighted / (t * (t + 1.0) / 2.0);
        weighted += (t + 1.0) * next;
        values.push(next);
    }
    Ok(TimeSeries(values.into_iter().map(Some).collect()))
}

/// Backward fill, then linear interpolation, then weighted moving average.
pub fn preprocess(series: &TimeSeries) -> Result<TimeSeries> {
    let filled = backward_fill(series)?;
    wma_extend(&linear_interpolate(&filled))
}

#[derive(Debug, Deserialize)]
struct ObservationRow {
    epoch: usize,
    media_object_id: String,
    impressions: String,
    clicks: String,
    spend: String,
}

/// Observation history read from CSV, one series per media object and field.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservationTable {
    /// Media object ids in order of first appearance.
    pub media_objects: Vec<String>,
    pub impressions: Vec<TimeSeries>,
    pub clicks: Vec<TimeSeries>,
    pub spend: Vec<TimeSeries>,
}

impl ObservationTable {
    /// Reads `epoch,media_object_id,impressions,clicks,spend` rows; missing cells and
    /// missing rows become gaps.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut ids: Vec<String> = Vec::new();
        let mut cells: BTreeMap<(usize, usize), [Option<f64>; 3]> = BTreeMap::new();
        let mut max_epoch = 0;
        for row in rdr.deserialize() {
            let row: ObservationRow = row?;
            let idx = match ids.iter().position(|id| *id == row.media_object_id) {
                Some(i) => i,
                None => {
                    ids.push(row.media_object_id.clone());
                    ids.len() - 1
                }
            };
            max_epoch = max_epoch.max(row.epoch);
            cells.insert(
                (idx, row.epoch),
                [
                    parse_cell(&row.impressions)?,
                    parse_cell(&row.clicks)?,
                    parse_cell(&row.spend)?,
                ],
            );
        }
        let epochs = if cells.is_empty() { 0 } else { max_epoch + 1 };
        let series = |idx: usize, field: usize| {
            TimeSeries(
                (0..epochs)
                    .map(|e| cells.get(&(idx, e)).and_then(|c| c[field]))
                    .collect(),
            )
        };
        Ok(Self {
            impressions: (0..ids.len()).map(|i| series(i, 0)).collect(),
            clicks: (0..ids.len()).map(|i| series(i, 1)).collect(),
            spend: (0..ids.len()).map(|i| series(i, 2)).collect(),
            media_objects: ids,
        })
    }

    pub fn epochs(&self) -> usize {
        self.impressions.first().map_or(0, TimeSeries::len)
    }

    pub fn preprocessed(&self) -> Result<Self> {
        let run = |s: &[TimeSeries]| s.iter().map(preprocess).collect::<Result<Vec<_>>>();
        Ok(Self {
            media_objects: self.media_objects.clone(),
            impressions: run(&self.impressions)?,
            clicks: run(&self.clicks)?,
            spend: run(&self.spend)?,
        })
    }

    /// Converts complete series into per-epoch observations; counts are rounded and
    /// clicks capped at impressions.
    pub fn to_observations(&self) -> Result<Vec<EpochObservation>> {
        let k = self.media_objects.len();
        let value = |s: &TimeSeries, e: usize| {
            s.0[e].ok_or_else(|| Error::InvalidInput("series still has gaps".into()))
        };
        (0..self.epochs())
            .map(|e| {
                let mut n = Vec::with_capacity(k);
                let mut c = Vec::with_capacity(k);
                let mut s = Vec::with_capacity(k);
                for i in 0..k {
                    let imps = value(&self.impressions[i], e)?.max(0.0).round() as u64;
                    let clicks = (value(&self.clicks[i], e)?.max(0.0).round() as u64).min(imps);
                    n.push(imps);
                    c.push(clicks);
                    s.push(value(&self.spend[i], e)?.max(0.0));
                }
                EpochObservation::new(n, c, s)
            })
            .collect()
    }
}
