//! The second-price bid landscape and the Nadam base-bid setter on one media object.

use skott::bid::{bid_step, estimate_beta, expected_cpm, spend_model, win_probability, NadamHyper};
use skott::market::{Market, MarketTruth};
use skott::{CampaignConfig, MediaObjectAccumulators};

fn main() -> skott::Result<()> {
    let beta = 1.0;
    println!(
        "{:>6} {:>8} {:>8} {:>10}",
        "bid", "P(win)", "CPM", "spend/1e6"
    );
    for b in [0.1, 0.5, 1.0, 2.0, 5.0, 10.0] {
        println!(
            "{b:>6.1} {:>8.3} {:>8.4} {:>10.2}",
            win_probability(b, beta)?,
            expected_cpm(b, beta)?,
            spend_model(b, beta, 1e6)?
        );
    }
    let cpm = expected_cpm(3.0, 1.7)?;
    println!(
        "beta recovered from CPM {cpm:.4} at bid 3: {:.6}",
        estimate_beta(cpm, 3.0)?.beta
    );

    // plenty of inventory, small budget: the setter walks the bid down while still spending
    let cfg = CampaignConfig {
        media_objects: 1,
        ..CampaignConfig::default()
    };
    let truth = MarketTruth {
        ctr: vec![0.001],
        itot: vec![2e5],
        beta: vec![beta],
        schedule: Vec::new(),
        daily_volume_amplitude: 0.0,
    };
    let mut market = Market::new(truth, 3)?;
    let hyper = NadamHyper::with_step(cfg.nadam_step_size());
    let mut acc = MediaObjectAccumulators::new(1, cfg.initial_bid);
    let budget = [40.0];
    for t in 0..30 {
        let obs = market.step(t, &budget, &acc.bids)?;
        let cpc = if obs.clicks[0] > 0 {
            obs.spend[0] / obs.clicks[0] as f64
        } else {
            f64::INFINITY
        };
        println!(
            "epoch {t:>2}: bid {:.3} spend {:>6.2} clicks {:>3} cpc {cpc:.3}",
            acc.bids[0], obs.spend[0], obs.clicks[0]
        );
        acc = bid_step(&acc, &obs, &budget, &cfg, &hyper)?;
    }
    Ok(())
}
