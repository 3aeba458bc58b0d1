//! Power-law fading of cluster and instance weights.
//!
//! A trace with raw weight `w` and activation history `t_1..t_n` has effective
//! weight `w^eta * T^-alpha`, where the model time `T` is a recency-weighted
//! mean of the ages of the events. Times are measured in days.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayConfig {
    /// Learning-rate exponent on the raw weight.
    pub eta: f64,
    /// Decay rate; 0 disables fading.
    pub alpha: f64,
    /// Steepness of the recency weighting inside the model time.
    pub u: f64,
    /// Events kept per trace; the oldest are dropped first.
    pub max_events: usize,
    /// Lower clamp on event ages, in days.
    pub t_floor: f64,
}

impl DecayConfig {
    pub const LTM_ALPHA: f64 = 0.2;
    pub const STM_ALPHA: f64 = 15.0;

    pub fn with_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::default()
        }
    }

    pub fn ltm() -> Self {
        Self::with_alpha(Self::LTM_ALPHA)
    }

    pub fn stm() -> Self {
        Self::with_alpha(Self::STM_ALPHA)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(invalid("eta", "must be positive"));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(invalid("alpha", "must be >= 0"));
        }
        if !(self.u.is_finite() && self.u >= 0.0) {
            return Err(invalid("u", "must be >= 0"));
        }
        if self.max_events == 0 {
            return Err(invalid("max_events", "must be >= 1"));
        }
        if !(self.t_floor.is_finite() && self.t_floor > 0.0) {
            return Err(invalid("t_floor", "must be positive"));
        }
        Ok(())
    }
}

impl Default for DecayConfig {
    fn default() -> Self {
        Self {
            eta: 1.0,
            alpha: 0.0,
            u: 0.6,
            max_events: 50,
            t_floor: 1.0 / 24.0,
        }
    }
}

/// Recency weights `h_j` over the clamped ages, normalized to sum to one.
pub fn event_weights(events: &[f64], now: f64, cfg: &DecayConfig) -> Result<Vec<f64>> {
    let ages = ages(events, now, cfg)?;
    Ok(normalized_weights(&ages, cfg.u))
}

/// Model time `T = sum h_j t_j`.
pub fn model_time(events: &[f64], now: f64, cfg: &DecayConfig) -> Result<f64> {
    let ages = ages(events, now, cfg)?;
    let h = normalized_weights(&ages, cfg.u);
    Ok(h.iter().zip(&ages).map(|(h, t)| h * t).sum())
}

/// `raw^eta * T^-alpha`, with the decay factor capped at 1.
///
/// For `T` under one day the power law would exceed 1 (and diverge as `T`
/// approaches zero); the cap keeps fresh traces at their raw weight.
pub fn effective_weight(raw: f64, events: &[f64], now: f64, cfg: &DecayConfig) -> Result<f64> {
    if !(raw >= 0.0 && raw.is_finite()) {
        return Err(invalid("raw", format!("must be finite and >= 0, got {raw}")));
    }
    let base = if cfg.eta == 1.0 { raw } else { raw.powf(cfg.eta) };
    if cfg.alpha == 0.0 {
        // Still validates the history.
        ages(events, now, cfg)?;
        return Ok(base);
    }
    let t = model_time(events, now, cfg)?;
    Ok(base * decay_factor(t, cfg.alpha))
}

pub(crate) fn decay_factor(model_time: f64, alpha: f64) -> f64 {
    model_time.powf(-alpha).min(1.0)
}

/// Appends `now` and drops the oldest events beyond the cap.
pub(crate) fn push_event(events: &mut Vec<f64>, now: f64, max_events: usize) {
    events.push(now);
    if events.len() > max_events {
        let excess = events.len() - max_events;
        events.drain(..excess);
    }
}

fn ages(events: &[f64], now: f64, cfg: &DecayConfig) -> Result<Vec<f64>> {
    if events.is_empty() {
        return Err(Error::EmptyHistory);
    }
    events
        .iter()
        .map(|&e| {
            if e > now {
                Err(Error::FutureEvent { event: e, now })
            } else {
                Ok((now - e).max(cfg.t_floor))
            }
        })
        .collect()
}

fn normalized_weights(ages: &[f64], u: f64) -> Vec<f64> {
    // Scale by the youngest age first so t^-u cannot overflow for large u.
    let t_min = ages.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = ages.iter().map(|t| (t / t_min).powf(-u)).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|h| h / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn single_event_model_time_is_its_age() {
        let cfg = DecayConfig::default();
        assert_abs_diff_eq!(model_time(&[5.0], 10.0, &cfg).unwrap(), 5.0, epsilon = 1e-15);
    }

    #[test]
    fn two_event_model_time() {
        // ages 1 and 2: h1 = 1 / (1 + 2^-0.6), h2 = 1 - h1, T = h1 + 2 h2
        let cfg = DecayConfig::default();
        let h1 = 1.0 / (1.0 + 2f64.powf(-0.6));
        let h = event_weights(&[9.0, 8.0], 10.0, &cfg).unwrap();
        assert_abs_diff_eq!(h[0], h1, epsilon = 1e-12);
        assert_abs_diff_eq!(h[1], 1.0 - h1, epsilon = 1e-12);
        assert_abs_diff_eq!(h1, 0.60250, epsilon = 1e-4);
        let t = model_time(&[9.0, 8.0], 10.0, &cfg).unwrap();
        assert_abs_diff_eq!(t, 1.397501, epsilon = 1e-5);
    }

    #[test]
    fn equal_ages_give_that_age() {
        for u in [0.0, 0.6, 3.0] {
            let cfg = DecayConfig { u, ..Default::default() };
            let t = model_time(&[4.0, 4.0, 4.0], 7.0, &cfg).unwrap();
            assert_abs_diff_eq!(t, 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn empty_history_and_future_events_error() {
        let cfg = DecayConfig::default();
        assert_eq!(model_time(&[], 1.0, &cfg), Err(Error::EmptyHistory));
        assert!(matches!(
            model_time(&[2.0], 1.0, &cfg),
            Err(Error::FutureEvent { .. })
        ));
    }

    #[test]
    fn ltm_month_halving() {
        let w = effective_weight(1.0, &[0.0], 30.0, &DecayConfig::ltm()).unwrap();
        assert_abs_diff_eq!(w, 30f64.powf(-0.2), epsilon = 1e-15);
        // roughly half after a month
        assert_abs_diff_eq!(w, 0.50650, epsilon = 1e-5);
    }

    #[test]
    fn stm_two_day_fade() {
        let w = effective_weight(1.0, &[0.0], 2.0, &DecayConfig::stm()).unwrap();
        assert_eq!(w, 3.0517578125e-05);
    }

    #[test]
    fn zero_alpha_keeps_raw() {
        let cfg = DecayConfig::with_alpha(0.0);
        assert_eq!(effective_weight(3.5, &[0.0, 1.0], 500.0, &cfg).unwrap(), 3.5);
    }

    #[test]
    fn fresh_trace_is_not_amplified() {
        let w = effective_weight(2.0, &[10.0], 10.0, &DecayConfig::stm()).unwrap();
        assert_eq!(w, 2.0);
    }

    #[test]
    fn higher_u_favours_recent_events() {
        let lo = DecayConfig { u: 0.1, ..Default::default() };
        let hi = DecayConfig { u: 2.0, ..Default::default() };
        let events = [0.0, 9.0];
        assert!(model_time(&events, 10.0, &hi).unwrap() < model_time(&events, 10.0, &lo).unwrap());
    }

    #[test]
    fn push_event_caps_history() {
        let mut ev = vec![0.0, 1.0, 2.0];
        push_event(&mut ev, 3.0, 3);
        assert_eq!(ev, vec![1.0, 2.0, 3.0]);
    }

    fn history() -> impl Strategy<Value = (Vec<f64>, f64)> {
        (prop::collection::vec(0.0f64..100.0, 1..30), 0.0f64..50.0).prop_map(|(mut ev, extra)| {
            ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let now = ev.last().unwrap() + extra;
            (ev, now)
        })
    }

    proptest! {
        #[test]
        fn weights_sum_to_one((ev, now) in history(), u in 0.0f64..5.0) {
            let cfg = DecayConfig { u, ..Default::default() };
            let s: f64 = event_weights(&ev, now, &cfg).unwrap().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn model_time_is_bounded_by_ages((ev, now) in history(), u in 0.0f64..5.0) {
            let cfg = DecayConfig { u, ..Default::default() };
            let t = model_time(&ev, now, &cfg).unwrap();
            let ages: Vec<f64> = ev.iter().map(|e| (now - e).max(cfg.t_floor)).collect();
            let lo = ages.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ages.iter().copied().fold(0.0, f64::max);
            prop_assert!(t >= lo * (1.0 - 1e-12) && t <= hi * (1.0 + 1e-12));
        }

        #[test]
        fn effective_weight_never_grows_with_time(
            (ev, now) in history(),
            later in 0.0f64..100.0,
            alpha in 0.0f64..20.0,
        ) {
            let cfg = DecayConfig::with_alpha(alpha);
            let a = effective_weight(2.0, &ev, now, &cfg).unwrap();
            let b = effective_weight(2.0, &ev, now + later, &cfg).unwrap();
            prop_assert!(b <= a * (1.0 + 1e-12));
        }
    }
}
