//! The pure formula layer: ROI reward, discounted return, TD target.

use crate::error::{Error, Result};

/// Reward floor: an item with under one recommended page view has its
/// denominator clamped to a single impression, bounding the ROI without
/// discarding the transition.
pub const REWARD_EPSILON: f64 = 1.0;

/// Next-day item page views per recommended page view spent today.
pub fn reward(ipv_next: f64, pv_rec_today: f64, epsilon: f64) -> Result<f64> {
    if ipv_next < 0.0 || pv_rec_today < 0.0 {
        return Err(Error::domain(format!(
            "reward inputs must be non-negative: ipv_next={ipv_next}, pv_rec={pv_rec_today}"
        )));
    }
    if !(epsilon > 0.0) {
        return Err(Error::config(format!("reward epsilon {epsilon} must be positive")));
    }
    Ok(ipv_next / pv_rec_today.max(epsilon))
}

/// Σ γ^i r_i over the window. The boolean flags an empty window, whose
/// value is 0 by convention.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> Result<(f64, bool)> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::config(format!("gamma {gamma} outside [0,1)")));
    }
    if rewards.is_empty() {
        return Ok((0.0, true));
    }
    let mut acc = 0.0;
    let mut w = 1.0;
    for r in rewards {
        acc += w * r;
        w *= gamma;
    }
    Ok((acc, false))
}

/// Bootstrap target: r + γ·Q' for non-terminal steps, plain r at episode end.
pub fn td_target(reward: f64, gamma: f64, next_q: f64, terminal: bool) -> f64 {
    if terminal {
        reward
    } else {
        reward + gamma * next_q
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reward_basic_values() {
        assert_eq!(reward(5.0, 100.0, REWARD_EPSILON).unwrap(), 0.05);
        assert_eq!(reward(0.0, 0.0, REWARD_EPSILON).unwrap(), 0.0);
        assert_eq!(reward(3.0, 0.2, REWARD_EPSILON).unwrap(), 3.0);
        assert!(reward(-1.0, 5.0, REWARD_EPSILON).is_err());
        assert!(reward(1.0, -5.0, REWARD_EPSILON).is_err());
    }

    #[test]
    fn return_examples() {
        let (v, empty) = discounted_return(&[0.1, 0.2, 0.4], 0.5).unwrap();
        assert!((v - 0.3).abs() < 1e-15);
        assert!(!empty);

        let (v, _) = discounted_return(&[0.7, 9.0, 9.0], 0.0).unwrap();
        assert_eq!(v, 0.7);

        let (v, empty) = discounted_return(&[], 0.5).unwrap();
        assert_eq!(v, 0.0);
        assert!(empty);

        assert!(discounted_return(&[1.0], 1.0).is_err());
        assert!(discounted_return(&[1.0], -0.1).is_err());
    }

    #[test]
    fn return_matches_horner_oracle() {
        let rewards = [0.3, -0.1, 0.25, 0.9, 0.0, 0.4, 0.7, 0.2, 0.05, 0.6];
        let gamma = 0.5;
        // Horner: r0 + g(r1 + g(r2 + ...))
        let mut horner = 0.0;
        for r in rewards.iter().rev() {
            horner = r + gamma * horner;
        }
        let (v, _) = discounted_return(&rewards, gamma).unwrap();
        assert!((v - horner).abs() < 1e-12);
    }

    #[test]
    fn five_day_window_captures_over_96_8_percent() {
        // Constant reward r: window sum r(1-g^5)/(1-g), infinite r/(1-g).
        let gamma: f64 = 0.5;
        let (window, _) = discounted_return(&[1.0; 5], gamma).unwrap();
        let infinite = 1.0 / (1.0 - gamma);
        assert!(window / infinite >= 0.968);
        assert!((window / infinite - (1.0 - gamma.powi(5))).abs() < 1e-12);
    }

    #[test]
    fn td_target_terminal_drops_bootstrap() {
        assert_eq!(td_target(0.3, 0.5, 10.0, true), 0.3);
        assert_eq!(td_target(0.3, 0.5, 10.0, false), 0.3 + 5.0);
    }

    proptest! {
        #[test]
        fn reward_scale_invariant_above_epsilon(
            ipv in 0.0..1e6f64,
            pv in 1.0..1e6f64,
            c in 1.0..1e3f64,
        ) {
            let base = reward(ipv, pv, REWARD_EPSILON).unwrap();
            let scaled = reward(c * ipv, c * pv, REWARD_EPSILON).unwrap();
            let denom = base.abs().max(1e-9);
            prop_assert!((base - scaled).abs() / denom < 1e-12);
        }

        #[test]
        fn return_is_linear_in_rewards(
            r in proptest::collection::vec(-10.0..10.0f64, 1..12),
            gamma in 0.0..0.95f64,
            k in -5.0..5.0f64,
        ) {
            let (v, _) = discounted_return(&r, gamma).unwrap();
            let scaled: Vec<f64> = r.iter().map(|x| k * x).collect();
            let (vs, _) = discounted_return(&scaled, gamma).unwrap();
            prop_assert!((vs - k * v).abs() < 1e-9);
        }
    }
}
