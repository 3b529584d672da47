//! Four-stroke Otto cycle control functions.
//!
//! The cycle starts at point A (t = 0) with the hot coupling ramping up at
//! ω = ω_h = ω₀ + Δω/2. Stroke order: hot isochore A→B (ramp up, hold, ramp
//! down), expansion B→C (ω_h → ω_c, optional unitary hold at ω_c), cold
//! isochore C→D, compression D→A. Couplings λ_c, λ_h never overlap and the
//! frequency only changes while both are zero.

use crate::error::{Result, SimError};
use serde::{Deserialize, Serialize};

pub const OMEGA_0: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RampShape {
    #[default]
    Linear,
    Smoothstep,
}

impl RampShape {
    /// Ramp value and derivative on the unit interval.
    #[inline]
    fn eval(self, u: f64) -> (f64, f64) {
        match self {
            RampShape::Linear => (u, 1.0),
            RampShape::Smoothstep => (u * u * (3.0 - 2.0 * u), 6.0 * u * (1.0 - u)),
        }
    }
}

/// Piecewise control schedule for one cycle.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CycleSchedule {
    /// Coupling ramp duration τ_I.
    pub tau_i: f64,
    /// Isentrope duration τ_d.
    pub tau_d: f64,
    /// Full-coupling relaxation duration τ_R.
    pub tau_r: f64,
    /// Compression span Δω > 0.
    pub delta_omega: f64,
    /// Anharmonicity κ ≥ 0 of the ¼κq⁴ potential term.
    #[serde(default)]
    pub kappa: f64,
    /// Extra unitary segment at ω_c after the expansion stroke (0 = standard).
    #[serde(default)]
    pub hold_after_expansion: f64,
    #[serde(default)]
    pub ramp_shape: RampShape,
}

/// Stroke timestamps. t_A = 0 by choice of cycle origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrokeBoundaries {
    pub t_a: f64,
    pub t_b: f64,
    pub t_c: f64,
    pub t_d: f64,
    pub period: f64,
}

/// Phase of the cycle at a given instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrokePhase {
    HotRampUp,
    HotHold,
    HotRampDown,
    Expansion,
    HoldAfterExpansion,
    ColdRampUp,
    ColdHold,
    ColdRampDown,
    Compression,
}

/// Instantaneous control values: (ω, ω̇, λ_c, λ̇_c, λ_h, λ̇_h).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Controls {
    pub omega: f64,
    pub omega_dot: f64,
    pub lambda_c: f64,
    pub lambda_c_dot: f64,
    pub lambda_h: f64,
    pub lambda_h_dot: f64,
}

impl CycleSchedule {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tau_i", self.tau_i), ("tau_d", self.tau_d), ("tau_r", self.tau_r)] {
            if !(v > 0.0) {
                return Err(SimError::invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.delta_omega > 0.0) {
            return Err(SimError::invalid(format!(
                "delta_omega must be > 0, got {}",
                self.delta_omega
            )));
        }
        if self.delta_omega >= 2.0 * OMEGA_0 {
            return Err(SimError::invalid(
                "delta_omega must stay below 2ω₀ (ω_c > 0)",
            ));
        }
        if self.kappa < 0.0 {
            return Err(SimError::invalid(format!("kappa must be >= 0, got {}", self.kappa)));
        }
        if self.hold_after_expansion < 0.0 {
            return Err(SimError::invalid("hold_after_expansion must be >= 0"));
        }
        Ok(())
    }

    pub fn omega_hot(&self) -> f64 {
        OMEGA_0 + 0.5 * self.delta_omega
    }

    pub fn omega_cold(&self) -> f64 {
        OMEGA_0 - 0.5 * self.delta_omega
    }

    /// Default hold for the phase-control protocol variant: half a period of
    /// the qp-correlation oscillation at the post-expansion frequency. The
    /// covariance rotates at 2ω_c, so this quarter oscillator period reverses
    /// the sign of ⟨qp+pq⟩ at point C; a π/ω_c hold would be a full 2π
    /// covariance rotation and change nothing.
    pub fn half_period_hold(&self) -> f64 {
        0.5 * std::f64::consts::PI / self.omega_cold()
    }

    /// T = 4τ_I + 2τ_d + 2τ_R plus the optional hold segment.
    pub fn period(&self) -> f64 {
        4.0 * self.tau_i + 2.0 * self.tau_d + 2.0 * self.tau_r + self.hold_after_expansion
    }

    /// Stroke corner timestamps {t_A, t_B, t_C, t_D, T}.
    pub fn stroke_boundaries(&self) -> StrokeBoundaries {
        let t_b = 2.0 * self.tau_i + self.tau_r;
        let t_c = t_b + self.tau_d + self.hold_after_expansion;
        let t_d = t_c + 2.0 * self.tau_i + self.tau_r;
        StrokeBoundaries {
            t_a: 0.0,
            t_b,
            t_c,
            t_d,
            period: t_d + self.tau_d,
        }
    }

    /// Phase and local segment coordinate (elapsed, duration) at cycle time t.
    pub fn phase_at(&self, t: f64) -> (StrokePhase, f64, f64) {
        let t = t.rem_euclid(self.period());
        let segs = [
            (StrokePhase::HotRampUp, self.tau_i),
            (StrokePhase::HotHold, self.tau_r),
            (StrokePhase::HotRampDown, self.tau_i),
            (StrokePhase::Expansion, self.tau_d),
            (StrokePhase::HoldAfterExpansion, self.hold_after_expansion),
            (StrokePhase::ColdRampUp, self.tau_i),
            (StrokePhase::ColdHold, self.tau_r),
            (StrokePhase::ColdRampDown, self.tau_i),
            (StrokePhase::Compression, self.tau_d),
        ];
        let mut start = 0.0;
        for (phase, dur) in segs {
            if dur > 0.0 && t < start + dur {
                return (phase, t - start, dur);
            }
            start += dur;
        }
        // Rounding at t = T lands here; equivalent to t = 0.
        (StrokePhase::HotRampUp, 0.0, self.tau_i)
    }

    /// All six control values at time t (reduced modulo the period).
    pub fn controls_at(&self, t: f64) -> Controls {
        let (phase, el, dur) = self.phase_at(t);
        let u = el / dur;
        let (s, ds) = self.ramp_shape.eval(u);
        let w_h = self.omega_hot();
        let w_c = self.omega_cold();
        let mut c = Controls {
            omega: w_h,
            omega_dot: 0.0,
            lambda_c: 0.0,
            lambda_c_dot: 0.0,
            lambda_h: 0.0,
            lambda_h_dot: 0.0,
        };
        match phase {
            StrokePhase::HotRampUp => {
                c.lambda_h = s;
                c.lambda_h_dot = ds / dur;
            }
            StrokePhase::HotHold => {
                c.lambda_h = 1.0;
            }
            StrokePhase::HotRampDown => {
                c.lambda_h = 1.0 - s;
                c.lambda_h_dot = -ds / dur;
            }
            StrokePhase::Expansion => {
                c.omega = w_h + (w_c - w_h) * s;
                c.omega_dot = (w_c - w_h) * ds / dur;
            }
            StrokePhase::HoldAfterExpansion => {
                c.omega = w_c;
            }
            StrokePhase::ColdRampUp => {
                c.omega = w_c;
                c.lambda_c = s;
                c.lambda_c_dot = ds / dur;
            }
            StrokePhase::ColdHold => {
                c.omega = w_c;
                c.lambda_c = 1.0;
            }
            StrokePhase::ColdRampDown => {
                c.omega = w_c;
                c.lambda_c = 1.0 - s;
                c.lambda_c_dot = -ds / dur;
            }
            StrokePhase::Compression => {
                c.omega = w_c + (w_h - w_c) * s;
                c.omega_dot = (w_h - w_c) * ds / dur;
            }
        }
        c
    }

    /// V(q,t) = ½ω²(t)q² + ¼κq⁴ in natural units.
    pub fn potential_at(&self, q: f64, t: f64) -> f64 {
        let w = self.controls_at(t).omega;
        0.5 * w * w * q * q + 0.25 * self.kappa * q.powi(4)
    }

    /// Snap all segment durations to exact multiples of dt so that ramp
    /// corners coincide with propagation grid points.
    pub fn snapped_to(&self, dt: f64) -> Result<CycleSchedule> {
        if !(dt > 0.0) {
            return Err(SimError::invalid(format!("dt must be > 0, got {dt}")));
        }
        let snap = |x: f64| (x / dt).round() * dt;
        let mut s = *self;
        s.tau_i = snap(self.tau_i);
        s.tau_d = snap(self.tau_d);
        s.tau_r = snap(self.tau_r);
        s.hold_after_expansion = snap(self.hold_after_expansion);
        s.validate()?;
        for (name, orig, new) in [
            ("tau_i", self.tau_i, s.tau_i),
            ("tau_d", self.tau_d, s.tau_d),
            ("tau_r", self.tau_r, s.tau_r),
        ] {
            if (orig - new).abs() > 0.5 * dt + 1e-12 {
                return Err(SimError::invalid(format!(
                    "{name} = {orig} cannot be represented on the dt = {dt} grid"
                )));
            }
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fig2_schedule() -> CycleSchedule {
        CycleSchedule {
            tau_i: 10.0,
            tau_d: 5.0,
            tau_r: 5.0,
            delta_omega: 1.0,
            kappa: 0.0,
            hold_after_expansion: 0.0,
            ramp_shape: RampShape::Linear,
        }
    }

    fn fig3_schedule() -> CycleSchedule {
        CycleSchedule {
            tau_i: 5.0,
            ..fig2_schedule()
        }
    }

    #[test]
    fn boundaries_match_quoted_timings() {
        // ω₀τ_I = 10, ω₀τ_d = 5, ω₀T = 60
        let b = fig2_schedule().stroke_boundaries();
        assert_eq!(b.t_a, 0.0);
        assert_eq!(b.t_b, 25.0);
        assert_eq!(b.t_c, 30.0);
        assert_eq!(b.t_d, 55.0);
        assert_eq!(b.period, 60.0);

        // ω₀τ_I = ω₀τ_d = 5, ω₀T = 40
        let b = fig3_schedule().stroke_boundaries();
        assert_eq!(b.t_b, 15.0);
        assert_eq!(b.t_c, 20.0);
        assert_eq!(b.t_d, 35.0);
        assert_eq!(b.period, 40.0);
    }

    #[test]
    fn hold_shifts_t_c() {
        let mut s = fig3_schedule();
        let base = s.stroke_boundaries();
        s.hold_after_expansion = s.half_period_hold();
        let b = s.stroke_boundaries();
        // ω_c = 0.5 here, so the hold is π/(2·0.5) = π
        assert_relative_eq!(s.half_period_hold(), std::f64::consts::PI);
        assert_relative_eq!(b.t_c, base.t_c + std::f64::consts::PI);
        assert_relative_eq!(b.period, base.period + std::f64::consts::PI);
    }

    #[test]
    fn controls_at_cycle_start() {
        let c = fig2_schedule().controls_at(0.0);
        assert_eq!(c.lambda_h, 0.0);
        assert_eq!(c.lambda_c, 0.0);
        assert_eq!(c.omega, 1.5);
    }

    #[test]
    fn controls_mid_expansion() {
        let s = fig2_schedule();
        let b = s.stroke_boundaries();
        let c = s.controls_at(b.t_b + s.tau_d / 2.0);
        assert_relative_eq!(c.omega, 1.0, max_relative = 1e-12);
        assert_relative_eq!(c.omega_dot, -0.2, max_relative = 1e-12);
        assert_eq!(c.lambda_c, 0.0);
        assert_eq!(c.lambda_h, 0.0);
    }

    #[test]
    fn controls_mid_hot_hold() {
        let s = fig2_schedule();
        let c = s.controls_at(s.tau_i + s.tau_r / 2.0);
        assert_eq!(c.lambda_h, 1.0);
        assert_eq!(c.lambda_h_dot, 0.0);
        assert_eq!(c.omega, 1.5);
    }

    #[test]
    fn potential_values() {
        let mut s = fig2_schedule();
        s.kappa = 0.15;
        // mid-expansion has ω = 1
        let t_mid = s.stroke_boundaries().t_b + s.tau_d / 2.0;
        assert_relative_eq!(s.potential_at(1.0, t_mid), 0.5375, max_relative = 1e-12);
        assert_eq!(s.potential_at(0.0, 17.3), 0.0);
        s.kappa = 0.0;
        assert_relative_eq!(s.potential_at(1.0, t_mid), 0.5, max_relative = 1e-12);
    }

    #[test]
    fn smoothstep_lambda_dot_is_continuous() {
        let s = CycleSchedule {
            ramp_shape: RampShape::Smoothstep,
            ..fig3_schedule()
        };
        let eps = 1e-9;
        for corner in [0.0, s.tau_i, s.tau_i + s.tau_r, 2.0 * s.tau_i + s.tau_r] {
            let before = s.controls_at((corner - eps).rem_euclid(s.period()));
            let after = s.controls_at(corner + eps);
            assert!((before.lambda_h_dot - after.lambda_h_dot).abs() < 1e-6);
        }
    }

    #[test]
    fn ramp_measure_is_two_tau_i_per_isochore() {
        let s = fig3_schedule();
        let n = 40_000;
        let dt = s.period() / n as f64;
        let mut hot = 0.0;
        let mut cold = 0.0;
        for k in 0..n {
            let c = s.controls_at((k as f64 + 0.5) * dt);
            if c.lambda_h > 0.0 && c.lambda_h < 1.0 {
                hot += dt;
            }
            if c.lambda_c > 0.0 && c.lambda_c < 1.0 {
                cold += dt;
            }
        }
        assert_relative_eq!(hot, 2.0 * s.tau_i, max_relative = 1e-3);
        assert_relative_eq!(cold, 2.0 * s.tau_i, max_relative = 1e-3);
    }

    #[test]
    fn snapping_rejects_incommensurate_segments() {
        let s = fig3_schedule();
        assert!(s.snapped_to(0.005).is_ok());
        let bad = CycleSchedule {
            tau_i: 0.00137,
            ..s
        };
        assert!(bad.snapped_to(0.005).is_err());
    }

    proptest! {
        // Periodicity and the coupling exclusion invariant at arbitrary times.
        #[test]
        fn controls_periodic_and_exclusive(
            t in 0.0f64..500.0,
            hold in prop::sample::select(vec![0.0, 6.285]),
            shape in prop::sample::select(vec![RampShape::Linear, RampShape::Smoothstep]),
        ) {
            let s = CycleSchedule {
                hold_after_expansion: hold,
                ramp_shape: shape,
                ..CycleSchedule {
                    tau_i: 5.0, tau_d: 5.0, tau_r: 5.0,
                    delta_omega: 1.0, kappa: 0.0,
                    hold_after_expansion: 0.0, ramp_shape: RampShape::Linear,
                }
            };
            let a = s.controls_at(t);
            let b = s.controls_at(t + s.period());
            prop_assert!((a.omega - b.omega).abs() < 1e-9);
            prop_assert!((a.lambda_c - b.lambda_c).abs() < 1e-9);
            prop_assert!((a.lambda_h - b.lambda_h).abs() < 1e-9);
            // never coupled to both baths
            prop_assert!(a.lambda_c * a.lambda_h == 0.0);
            // isochores at fixed frequency
            if a.lambda_c > 0.0 || a.lambda_h > 0.0 {
                prop_assert!(a.omega_dot == 0.0);
            }
            prop_assert!(a.omega >= s.omega_cold() - 1e-12 && a.omega <= s.omega_hot() + 1e-12);
        }

        // ∫ ω̇ dt = 0 over a period (frequency returns to its start).
        #[test]
        fn omega_dot_integrates_to_zero(shape in prop::sample::select(vec![RampShape::Linear, RampShape::Smoothstep])) {
            let s = CycleSchedule {
                tau_i: 5.0, tau_d: 5.0, tau_r: 5.0,
                delta_omega: 1.0, kappa: 0.0,
                hold_after_expansion: 0.0, ramp_shape: shape,
            };
            let n = 4000;
            let dt = s.period() / n as f64;
            let mut acc = 0.0;
            for k in 0..n {
                acc += s.controls_at((k as f64 + 0.5) * dt).omega_dot * dt;
            }
            prop_assert!(acc.abs() < 1e-6);
        }
    }
}
