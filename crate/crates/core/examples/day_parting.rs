//! All 24 hour slots of a 30-day campaign with a night-time inventory dip, merged back
//! into one hourly trace.

use skott::harness::{run_campaign, ExperimentPlan, HOURS_PER_DAY};

fn main() -> skott::Result<()> {
    let mut plan = ExperimentPlan::default();
    plan.simulator.daily_volume_amplitude = 0.8;
    let truth = plan.truth(0)?;
    for name in ["vnl", "skt1+skt2+skt3"] {
        let m = run_campaign(&name.parse()?, &plan, &truth, 0)?;
        let mut by_hour = [0.0; HOURS_PER_DAY];
        for (t, s) in m.spend.iter().enumerate() {
            by_hour[t % HOURS_PER_DAY] += s;
        }
        println!(
            "{name}: {} epochs, spent {:.0} of {:.0}, {} clicks",
            m.epochs(),
            m.total_spend(),
            m.budget,
            m.total_clicks()
        );
        let shown: Vec<String> = by_hour.iter().map(|s| format!("{s:.0}")).collect();
        println!("  spend by hour [{}]", shown.join(" "));
    }
    Ok(())
}
