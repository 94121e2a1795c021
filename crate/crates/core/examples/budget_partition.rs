//! Exponentiated-gradient budget repartition against a small market with one clearly
//! better media object.

use skott::market::{Market, MarketTruth};
use skott::metrics::kl_divergence_rescaled;
use skott::partition::{partition_step, PartitionerParams};
use skott::{CampaignConfig, MediaObjectAccumulators, WeightVector};

fn main() -> skott::Result<()> {
    let cfg = CampaignConfig {
        media_objects: 4,
        ..CampaignConfig::default()
    };
    let truth = MarketTruth {
        ctr: vec![0.001, 0.001, 0.003, 0.001],
        itot: vec![5e5; 4],
        beta: vec![1.0; 4],
        schedule: Vec::new(),
        daily_volume_amplitude: 0.0,
    };
    let mut market = Market::new(truth, 1)?;
    let params = PartitionerParams::from_config(&cfg);
    let bids = vec![cfg.initial_bid; 4];
    let epoch_budget = 200.0;

    let mut acc = MediaObjectAccumulators::new(4, cfg.initial_bid);
    let mut w = WeightVector::uniform(4);
    for t in 0..30 {
        let budgets = w.allocate(epoch_budget);
        let obs = market.step(t, &budgets, &bids)?;
        if t % 5 == 0 {
            let shown: Vec<String> = w.as_slice().iter().map(|x| format!("{x:.3}")).collect();
            println!(
                "epoch {t:>2}: weights [{}] clicks {:>3} kld {:.3}",
                shown.join(", "),
                obs.total_clicks(),
                kl_divergence_rescaled(w.as_slice())
            );
        }
        (acc, w) = partition_step(&acc, &obs, &budgets, &w, &params, t as u32)?;
    }
    Ok(())
}
