//! One decision of each comparison algorithm on the same observation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use skott::baselines::{
    exp3_budget_step, exp3_probabilities, lop_step, pst_step, vnl_step, Exp3State, LopState,
    PstParams,
};
use skott::{EpochObservation, WeightVector};

fn main() -> skott::Result<()> {
    let budgets = vec![10.0; 4];
    let bids = vec![2.0; 4];
    let obs = EpochObservation::new(
        vec![8000, 6000, 9000, 3000],
        vec![25, 4, 12, 0],
        vec![10.0, 10.0, 10.0, 6.0],
    )?;

    let w = WeightVector::uniform(4);
    println!("vnl  weights {:?}", vnl_step(&w).as_slice());

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut exp3 = Exp3State::new(4, 0.1, 0.87, 0.5)?;
    for _ in 0..5 {
        let (next, b) = exp3_budget_step(&exp3, &obs, &budgets, 40.0, &mut rng)?;
        exp3 = next;
        println!("mab  budgets {b:.2?}");
    }
    println!("mab  probabilities {:.3?}", exp3_probabilities(&exp3));

    let (_, lop) = lop_step(&LopState::new(4, 0.5, 2.0, 0.87)?, &obs, 40.0)?;
    println!("lop  budgets {lop:?}");

    let pst = PstParams {
        cpc_goal: 0.5,
        down_multiplier: 0.9,
        up_multiplier: 1.05,
        underdelivery_ratio: 0.95,
    };
    println!(
        "pst  bids {:.3?}",
        pst_step(&pst, &obs, &budgets, &bids, (0.05, 10.0), 1e-6)?
    );
    Ok(())
}
