//! Bid setting and pacing on top of skt1, with skt1 as the clicks baseline.

use skott::harness::{run_experiment, ExperimentPlan};

fn main() -> skott::Result<()> {
    let plan = ExperimentPlan {
        slot: Some(0),
        algorithms: ["skt1", "skt1+pst", "skt1+skt2", "skt1+skt2+skt3"]
            .map(String::from)
            .to_vec(),
        ..ExperimentPlan::default()
    };
    let out = run_experiment(&plan)?;
    println!("algo                spt      clk     cpc    kld");
    for r in &out.summary.rows {
        println!(
            "{:<16} {:>5.1}% {:>7.1}% {:>7.3} {:>6.3}",
            r.algo, r.spt, r.clk, r.cpc, r.kld
        );
    }
    Ok(())
}
