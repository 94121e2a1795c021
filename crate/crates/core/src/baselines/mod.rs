//! Comparison algorithms run under the same harness interface as the optimizer.

mod exp3;
mod lop;
mod pst;

pub use exp3::{exp3_budget_step, exp3_probabilities, exp3_reward, exp3_step, Exp3State};
pub use lop::{lop_step, LopState};
pub use pst::{pst_step, PstParams};

/// The vanilla algorithm leaves every parameter as it was.
pub fn vnl_step<T: Clone>(state: &T) -> T {
    state.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::WeightVector;

    #[test]
    fn vanilla_is_identity() {
        let w = WeightVector::normalized(&[1.0, 2.0, 3.0]).unwrap();
        let mut cur = w.clone();
        for _ in 0..720 {
            cur = vnl_step(&cur);
        }
        assert_eq!(cur, w);
    }
}
