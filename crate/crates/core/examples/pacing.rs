//! Pacing back to a uniform spend profile after a market outage.

use skott::pacing::{Pacer, SpendProfile};

fn main() -> skott::Result<()> {
    let epochs = 48;
    let pacer = Pacer::new(SpendProfile::uniform(4800.0, epochs), 5.0);
    let mut spent = 0.0;
    let mut budget = pacer.profile().ideal_epoch_budget(0);
    for t in 0..epochs {
        // the market only takes 30% of the budget during epochs 10..14
        let s = if (10..14).contains(&t) {
            0.3 * budget
        } else {
            budget
        };
        spent += s;
        println!(
            "epoch {t:>2}: budget {budget:>7.2} spent {s:>7.2} cumulative {spent:>8.2} ideal {:>8.2}",
            pacer.profile().ideal_cumulative(t)
        );
        if t + 1 < epochs {
            budget = pacer.next_budget(t, spent)?;
        }
    }
    Ok(())
}
