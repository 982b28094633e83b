//! Monthly inventory control with capacity 3.
//!
//! State: stock on hand (0..=3). Action: units ordered for production
//! (0..=3); production arrives before demand and stock is capped at 3, so
//! only `min(order, 3 - stock)` units are made and paid for. Demand is 1 or 2
//! with equal probability; unmet demand is lost. Profit per month is
//! `2000·sold - 1000·produced - 500·left_over`.

use crate::mdp::{BaselineMdp, Convention};

pub const CAPACITY: usize = 3;
pub const PRICE: f64 = 2000.0;
pub const UNIT_COST: f64 = 1000.0;
pub const HOLDING_COST: f64 = 500.0;
pub const DISCOUNT: f64 = 0.8;

pub fn gen_inventory() -> BaselineMdp {
    let n = CAPACITY + 1;
    let mut transitions = vec![vec![vec![0.0; n]; n]; n];
    let mut profit = vec![vec![0.0; n]; n];
    for stock in 0..n {
        for order in 0..n {
            let produced = order.min(CAPACITY - stock);
            let on_hand = stock + produced;
            for demand in [1usize, 2] {
                let sold = demand.min(on_hand);
                let left = on_hand - sold;
                transitions[order][stock][left] += 0.5;
                profit[stock][order] += 0.5
                    * (PRICE * sold as f64 - UNIT_COST * produced as f64 - HOLDING_COST * left as f64);
            }
        }
    }
    let costs = profit.iter().map(|row| row.iter().map(|p| -p).collect()).collect();
    BaselineMdp::new("inventory", transitions, costs, DISCOUNT)
        .expect("consistent shapes")
        .with_convention(Convention::Reward)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_empty_shelf() {
        let mdp = gen_inventory();
        assert_eq!(mdp.num_states(), 4);
        assert_eq!(mdp.num_actions(), 4);
        assert_eq!(mdp.validate(), Ok(()));
        assert_eq!(mdp.prob(0, 0, 0), 1.0);
        assert_eq!(mdp.cost(0, 0), 0.0);
    }

    #[test]
    fn full_shelf_profit() {
        let mdp = gen_inventory();
        // Stock 3, no order: sell 1 (keep 2) or 2 (keep 1).
        let expected = 0.5 * (2000.0 - 1000.0) + 0.5 * (4000.0 - 500.0);
        assert!((-mdp.cost(3, 0) - expected).abs() < 1e-9);
    }
}
