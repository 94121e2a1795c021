//! Synthetic market: truth draws, a night-time inventory dip, a scheduled CTR change,
//! and the truth JSON used to pin a market across runs.

use skott::market::{Market, MarketTruth, SimulatorConfig, TruthField, TruthModifier};

fn main() -> skott::Result<()> {
    let cfg = SimulatorConfig {
        daily_volume_amplitude: 0.6,
        schedule: vec![TruthModifier {
            epoch: 12,
            through_epoch: Some(17),
            media_object: 0,
            field: TruthField::Ctr,
            multiplier: 3.0,
        }],
        ..SimulatorConfig::default()
    };
    let truth = MarketTruth::generate(&cfg, 3, 42)?;
    println!("fingerprint {}", truth.fingerprint());
    println!("{}", serde_json::to_string_pretty(&truth)?);

    let mut market = Market::new(truth, 7)?;
    for t in 0..24 {
        let obs = market.step(t, &[50.0; 3], &[2.0; 3])?;
        println!(
            "hour {t:>2}: impressions {:?} clicks {:?}",
            obs.impressions, obs.clicks
        );
    }
    Ok(())
}
