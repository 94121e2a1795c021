//! Filling gaps in reported DSP data: leading gaps, interior gaps, trailing gaps.

use skott::preprocess::{
    backward_fill, linear_interpolate, preprocess, wma_extend, ObservationTable, TimeSeries,
};

fn show(label: &str, s: &TimeSeries) {
    let cells: Vec<String> =
        s.0.iter()
            .map(|v| v.map_or("NaN".to_string(), |x| format!("{x:.4}")))
            .collect();
    println!("{label:<22} [{}]", cells.join(", "));
}

fn main() -> skott::Result<()> {
    let raw = TimeSeries(vec![None, Some(1.0), None, Some(3.0), None, None]);
    show("raw", &raw);
    let a = backward_fill(&raw)?;
    show("backward fill", &a);
    let b = linear_interpolate(&a);
    show("+ interpolation", &b);
    show("+ weighted average", &wma_extend(&b)?);
    show("preprocess", &preprocess(&raw)?);

    // the same pipeline applied column by column to a DSP export
    let csv = "\
epoch,media_object_id,impressions,clicks,spend
0,0,1000,2,1.5
0,1,,1,0.9
1,0,1200,,1.7
1,1,800,0,nan
2,0,,3,
2,1,900,1,1.0
";
    let table = ObservationTable::from_csv(csv.as_bytes())?.preprocessed()?;
    for (t, obs) in table.to_observations()?.iter().enumerate() {
        println!(
            "epoch {t}: impressions {:?} clicks {:?} spend {:?}",
            obs.impressions, obs.clicks, obs.spend
        );
    }
    Ok(())
}
