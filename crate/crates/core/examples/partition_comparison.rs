//! Budget partitioning comparison on one day-parted hour slot: vnl, mab, lop, skt1.
//! Reports go to a temporary directory unless a path is given.

use skott::harness::{run_experiment, write_outputs, ExperimentPlan};

fn main() -> skott::Result<()> {
    let plan = ExperimentPlan {
        slot: Some(0),
        algorithms: ["vnl", "mab", "lop", "skt1"].map(String::from).to_vec(),
        ..ExperimentPlan::default()
    };
    let out = run_experiment(&plan)?;
    println!("algo        spt      clk     cpc    kld");
    for r in &out.summary.rows {
        println!(
            "{:<8} {:>5.1}% {:>7.1}% {:>7.3} {:>6.3}",
            r.algo, r.spt, r.clk, r.cpc, r.kld
        );
    }
    let dir = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("skott-partition-comparison"));
    write_outputs(&out, &dir)?;
    println!("reports in {}", dir.display());
    Ok(())
}
