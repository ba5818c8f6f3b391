//! Group-comparison metrics of the A/B protocol. Inputs and outputs are
//! fractions (0.112 for 11.2%).

/// `(treated - baseline) / baseline`; `None` for a non-positive baseline.
pub fn relative_lift(treated: f64, baseline: f64) -> Option<f64> {
    (baseline > 0.0).then(|| (treated - baseline) / baseline)
}

/// How much larger the lift bidder's action lift over passive is than the
/// value bidder's.
pub fn lift_over_lift(value_lift: f64, lift_lift: f64) -> Option<f64> {
    relative_lift(lift_lift, value_lift)
}

/// `cost_lift / cost_value - 1`.
pub fn inventory_cost_diff(cost_value: f64, cost_lift: f64) -> Option<f64> {
    (cost_value > 0.0).then(|| cost_lift / cost_value - 1.0)
}

/// Relative difference of inventory cost per impression.
pub fn cost_per_imp_diff(cost_value: f64, imps_value: u64, cost_lift: f64, imps_lift: u64) -> Option<f64> {
    if imps_value == 0 || imps_lift == 0 || cost_value <= 0.0 {
        return None;
    }
    Some((cost_lift / imps_lift as f64) / (cost_value / imps_value as f64) - 1.0)
}
