//! Four-segment periodic stroke waveform and its log-ratio parameterization.
//!
//! A stroke cycle is rise → hold → fall → hold, repeated with a fixed period.
//! The rising segment is the upstroke, the falling segment the downstroke.
//! For optimization the three segment-time ratios are expressed in log space,
//! which keeps the search symmetric around the balanced controller.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("segment times must be nonnegative with t_up + t_down > 0 (got up={t_up}, down={t_down}, hold_up={t_hold_up}, hold_down={t_hold_down})")]
    InvalidTimes {
        t_up: f64,
        t_down: f64,
        t_hold_up: f64,
        t_hold_down: f64,
    },
    #[error("log undefined for zero segment `{segment}`")]
    ZeroSegment { segment: &'static str },
    #[error("log-ratio parameters must be finite with period > 0")]
    NonFinite,
}

/// Trapezoidal root-pitch waveform. `amplitude_rad` is the peak-to-peak
/// excursion; the angle swings between -A/2 (stroke bottom) and +A/2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrokeController {
    pub t_up_s: f64,
    pub t_down_s: f64,
    pub t_hold_up_s: f64,
    pub t_hold_down_s: f64,
    pub amplitude_rad: f64,
}

/// Default peak-to-peak stroke amplitude (60 degrees).
pub const DEFAULT_AMPLITUDE_RAD: f64 = 60.0 * std::f64::consts::PI / 180.0;

impl StrokeController {
    pub fn new(
        t_up_s: f64,
        t_down_s: f64,
        t_hold_up_s: f64,
        t_hold_down_s: f64,
        amplitude_rad: f64,
    ) -> Result<Self, ControllerError> {
        let ok = t_up_s >= 0.0
            && t_down_s >= 0.0
            && t_hold_up_s >= 0.0
            && t_hold_down_s >= 0.0
            && t_up_s + t_down_s > 0.0
            && [t_up_s, t_down_s, t_hold_up_s, t_hold_down_s, amplitude_rad]
                .iter()
                .all(|v| v.is_finite());
        if !ok {
            return Err(ControllerError::InvalidTimes {
                t_up: t_up_s,
                t_down: t_down_s,
                t_hold_up: t_hold_up_s,
                t_hold_down: t_hold_down_s,
            });
        }
        Ok(Self {
            t_up_s,
            t_down_s,
            t_hold_up_s,
            t_hold_down_s,
            amplitude_rad,
        })
    }

    /// The symmetric reference controller: 0.25 s strokes, 0.5 s holds.
    pub fn baseline(amplitude_rad: f64) -> Self {
        Self {
            t_up_s: 0.25,
            t_down_s: 0.25,
            t_hold_up_s: 0.5,
            t_hold_down_s: 0.5,
            amplitude_rad,
        }
    }

    pub fn period_s(&self) -> f64 {
        self.t_up_s + self.t_hold_up_s + self.t_down_s + self.t_hold_down_s
    }

    /// Root pitch angle at time `t` (seconds, `t >= 0`).
    ///
    /// Piecewise linear: rise from -A/2 to +A/2 over `t_up`, hold, fall back
    /// over `t_down`, hold. Periodic with `period_s`.
    pub fn angle_at(&self, t: f64) -> f64 {
        let period = self.period_s();
        let mut tau = t % period;
        if tau < 0.0 {
            tau += period;
        }
        let half = 0.5 * self.amplitude_rad;
        if tau < self.t_up_s {
            -half + self.amplitude_rad * tau / self.t_up_s
        } else if tau < self.t_up_s + self.t_hold_up_s {
            half
        } else if tau < self.t_up_s + self.t_hold_up_s + self.t_down_s {
            let into_fall = tau - self.t_up_s - self.t_hold_up_s;
            half - self.amplitude_rad * into_fall / self.t_down_s
        } else {
            -half
        }
    }

    /// Log-ratio form of this controller. Requires all four segments
    /// strictly positive, since each enters a log.
    pub fn to_ratios(&self) -> Result<LogRatioParams, ControllerError> {
        let named = [
            ("t_up_s", self.t_up_s),
            ("t_down_s", self.t_down_s),
            ("t_hold_up_s", self.t_hold_up_s),
            ("t_hold_down_s", self.t_hold_down_s),
        ];
        for (segment, v) in named {
            if v <= 0.0 {
                return Err(ControllerError::ZeroSegment { segment });
            }
        }
        let t_move = self.t_up_s + self.t_down_s;
        let t_hold = self.t_hold_up_s + self.t_hold_down_s;
        Ok(LogRatioParams {
            log_up_down: (self.t_up_s / self.t_down_s).ln(),
            log_holds: (self.t_hold_up_s / self.t_hold_down_s).ln(),
            log_hold_move: (t_hold / t_move).ln(),
            period_s: self.period_s(),
        })
    }
}

/// The three optimizable segment-time ratios, in logs, plus the fixed period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRatioParams {
    /// ln(t_up / t_down)
    pub log_up_down: f64,
    /// ln(t_hold_up / t_hold_down)
    pub log_holds: f64,
    /// ln(t_hold / t_move), with t_hold = t_hold_up + t_hold_down and
    /// t_move = t_up + t_down
    pub log_hold_move: f64,
    pub period_s: f64,
}

impl LogRatioParams {
    pub fn new(
        log_up_down: f64,
        log_holds: f64,
        log_hold_move: f64,
        period_s: f64,
    ) -> Result<Self, ControllerError> {
        if ![log_up_down, log_holds, log_hold_move].iter().all(|v| v.is_finite())
            || !(period_s > 0.0 && period_s.is_finite())
        {
            return Err(ControllerError::NonFinite);
        }
        Ok(Self {
            log_up_down,
            log_holds,
            log_hold_move,
            period_s,
        })
    }

    /// The unique controller with these ratios and period. Segment times
    /// follow from splitting the period by exp(log_hold_move), then each
    /// half by its own ratio.
    pub fn to_controller(&self, amplitude_rad: f64) -> StrokeController {
        let r_hold_move = self.log_hold_move.exp();
        let t_move = self.period_s / (1.0 + r_hold_move);
        let t_hold = self.period_s - t_move;
        let r_up_down = self.log_up_down.exp();
        let t_up = t_move * r_up_down / (1.0 + r_up_down);
        let t_down = t_move - t_up;
        let r_holds = self.log_holds.exp();
        let t_hold_up = t_hold * r_holds / (1.0 + r_holds);
        let t_hold_down = t_hold - t_hold_up;
        StrokeController {
            t_up_s: t_up,
            t_down_s: t_down,
            t_hold_up_s: t_hold_up,
            t_hold_down_s: t_hold_down,
            amplitude_rad,
        }
    }

    pub fn as_vec(&self) -> [f64; 3] {
        [self.log_up_down, self.log_holds, self.log_hold_move]
    }

    pub fn from_vec(x: &[f64], period_s: f64) -> Result<Self, ControllerError> {
        if x.len() != 3 {
            return Err(ControllerError::NonFinite);
        }
        Self::new(x[0], x[1], x[2], period_s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    const A: f64 = DEFAULT_AMPLITUDE_RAD;

    #[test]
    fn baseline_ratios_round_trip() {
        // 0.25/0.25 strokes with 0.5/0.5 holds <-> (0, 0, ln 2) at period 1.5
        let p = LogRatioParams::new(0.0, 0.0, 2.0f64.ln(), 1.5).unwrap();
        let c = p.to_controller(A);
        assert_abs_diff_eq!(c.t_up_s, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(c.t_down_s, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(c.t_hold_up_s, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(c.t_hold_down_s, 0.5, epsilon = 1e-12);

        let back = c.to_ratios().unwrap();
        assert_abs_diff_eq!(back.log_up_down, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(back.log_holds, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(back.log_hold_move, 2.0f64.ln(), epsilon = 1e-9);
        assert_abs_diff_eq!(back.period_s, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn fully_symmetric_controller() {
        let p = LogRatioParams::new(0.0, 0.0, 0.0, 2.0).unwrap();
        let c = p.to_controller(A);
        for v in [c.t_up_s, c.t_down_s, c.t_hold_up_s, c.t_hold_down_s] {
            assert_abs_diff_eq!(v, 0.5, epsilon = 1e-12);
        }
        let back = c.to_ratios().unwrap();
        assert_abs_diff_eq!(back.log_up_down, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(back.log_holds, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(back.log_hold_move, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn asymmetric_ratios_hand_algebra() {
        // r_ud = 2, r_holds = 3, r_hm = 1 at period 2:
        // t_move = t_hold = 1, t_up = 2/3, t_down = 1/3,
        // t_hold_up = 3/4, t_hold_down = 1/4.
        let p = LogRatioParams::new(2.0f64.ln(), 3.0f64.ln(), 0.0, 2.0).unwrap();
        let c = p.to_controller(A);
        assert_relative_eq!(c.t_up_s, 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(c.t_down_s, 1.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(c.t_hold_up_s, 0.75, epsilon = 1e-12);
        assert_relative_eq!(c.t_hold_down_s, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn zero_segment_rejected_by_name() {
        let c = StrokeController::new(0.25, 0.25, 0.5, 0.0, A).unwrap();
        let err = c.to_ratios().unwrap_err();
        assert!(matches!(
            err,
            ControllerError::ZeroSegment {
                segment: "t_hold_down_s"
            }
        ));
        assert!(err.to_string().contains("log undefined for zero segment"));
    }

    #[test]
    fn waveform_segment_endpoints() {
        let c = StrokeController::baseline(A);
        assert_abs_diff_eq!(c.angle_at(0.0), -A / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.angle_at(0.25), A / 2.0, epsilon = 1e-15);
        // Midpoint of the linear rise crosses zero.
        assert_abs_diff_eq!(c.angle_at(0.125), 0.0, epsilon = 1e-15);
        // Mid-hold stays at the top.
        assert_abs_diff_eq!(c.angle_at(0.5), A / 2.0, epsilon = 1e-15);
        // End of the fall is back at the bottom.
        assert_abs_diff_eq!(c.angle_at(1.0), -A / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn waveform_periodicity_on_grid() {
        let c = StrokeController::baseline(A);
        let period = c.period_s();
        for k in 1..=4u32 {
            assert_abs_diff_eq!(c.angle_at(period * k as f64), -A / 2.0, epsilon = 1e-12);
        }
        for i in 0..200 {
            let t = i as f64 * period / 200.0;
            assert_abs_diff_eq!(c.angle_at(t + period), c.angle_at(t), epsilon = 1e-12);
            assert_abs_diff_eq!(c.angle_at(t + 3.0 * period), c.angle_at(t), epsilon = 1e-12);
        }
    }

    #[test]
    fn waveform_bounded_and_lipschitz() {
        let c = StrokeController::new(0.1, 0.4, 0.2, 0.3, A).unwrap();
        let lipschitz = (A / c.t_up_s).max(A / c.t_down_s);
        let dt = 1e-4;
        let mut prev = c.angle_at(0.0);
        for i in 1..20_000 {
            let t = i as f64 * dt;
            let v = c.angle_at(t);
            assert!(v >= -A / 2.0 - 1e-12 && v <= A / 2.0 + 1e-12);
            assert!((v - prev).abs() <= lipschitz * dt * (1.0 + 1e-9));
            prev = v;
        }
    }

    #[test]
    fn non_finite_params_rejected() {
        assert!(LogRatioParams::new(f64::NAN, 0.0, 0.0, 1.0).is_err());
        assert!(LogRatioParams::new(0.0, f64::INFINITY, 0.0, 1.0).is_err());
        assert!(LogRatioParams::new(0.0, 0.0, 0.0, 0.0).is_err());
        assert!(StrokeController::new(-0.1, 0.25, 0.5, 0.5, A).is_err());
        assert!(StrokeController::new(0.0, 0.0, 0.5, 0.5, A).is_err());
    }

    proptest! {
        #[test]
        fn ratio_round_trip(
            a in -1.6f64..1.6,
            b in -1.6f64..1.6,
            c in -1.6f64..1.6,
            period in 0.5f64..4.0,
        ) {
            let p = LogRatioParams::new(a, b, c, period).unwrap();
            let ctrl = p.to_controller(A);
            // Segment times are nonnegative and sum to the period.
            prop_assert!(ctrl.t_up_s >= 0.0 && ctrl.t_down_s >= 0.0);
            prop_assert!(ctrl.t_hold_up_s >= 0.0 && ctrl.t_hold_down_s >= 0.0);
            let sum = ctrl.t_up_s + ctrl.t_down_s + ctrl.t_hold_up_s + ctrl.t_hold_down_s;
            prop_assert!((sum - period).abs() < 1e-12 * period.max(1.0));
            let back = ctrl.to_ratios().unwrap();
            prop_assert!((back.log_up_down - a).abs() < 1e-9);
            prop_assert!((back.log_holds - b).abs() < 1e-9);
            prop_assert!((back.log_hold_move - c).abs() < 1e-9);
            prop_assert!((back.period_s - period).abs() < 1e-9);
        }

        #[test]
        fn waveform_periodic_everywhere(t in 0.0f64..10.0) {
            let c = StrokeController::baseline(A);
            prop_assert!((c.angle_at(t + c.period_s()) - c.angle_at(t)).abs() < 1e-9);
        }
    }
}
