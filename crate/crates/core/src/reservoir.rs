//! Thermal reservoir spectral properties.
//!
//! Reservoirs are ohmic with a Drude-type high-frequency cutoff,
//! J(ω) = γω/(1+ω²/ω_cut²)² in natural units (ħ = m = 1, frequencies in ω₀).
//! The stochastic (quantum-correction) spectrum driving the noise sources is
//! S_ξ(ω) = J(ω)·[coth(ωβ/2) − 2/(ωβ)], which is nonnegative for every ω;
//! the classical white/friction part is carried deterministically by the
//! propagators.

use crate::error::{Result, SimError};
use serde::{Deserialize, Serialize};

/// Which bath a reservoir plays in the cycle protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BathLabel {
    Cold,
    Hot,
}

impl BathLabel {
    pub fn tag(self) -> u8 {
        match self {
            BathLabel::Cold => 0,
            BathLabel::Hot => 1,
        }
    }
}

/// One thermal bath: inverse temperature, coupling rate and cutoff.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ReservoirSpec {
    /// Dimensionless inverse temperature ħω₀β.
    pub beta: f64,
    /// Coupling rate γ in units of ω₀.
    pub gamma: f64,
    /// Drude cutoff frequency in units of ω₀.
    pub omega_cut: f64,
    pub label: BathLabel,
}

impl ReservoirSpec {
    pub fn new(beta: f64, gamma: f64, omega_cut: f64, label: BathLabel) -> Result<Self> {
        let spec = ReservoirSpec {
            beta,
            gamma,
            omega_cut,
            label,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(SimError::invalid(format!("beta must be > 0, got {}", self.beta)));
        }
        if !(self.gamma >= 0.0) {
            return Err(SimError::invalid(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.omega_cut > 0.0) {
            return Err(SimError::invalid(format!(
                "omega_cut must be > 0, got {}",
                self.omega_cut
            )));
        }
        Ok(())
    }

    /// Ohmic spectral density with Drude cutoff, J(ω) = γω/(1+ω²/ω_cut²)².
    pub fn spectral_density(&self, omega: f64) -> Result<f64> {
        if omega < 0.0 {
            return Err(SimError::domain(format!(
                "spectral density requires omega >= 0, got {omega}"
            )));
        }
        let x = omega / self.omega_cut;
        let denom = 1.0 + x * x;
        Ok(self.gamma * omega / (denom * denom))
    }

    /// Power spectral density of the stochastic part,
    /// S_ξ(ω) = J(ω)·[coth(ωβ/2) − 2/(ωβ)] ≥ 0, with the analytic limit 0 at ω = 0.
    pub fn noise_psd(&self, omega: f64) -> Result<f64> {
        if omega < 0.0 {
            return Err(SimError::domain(format!(
                "noise PSD requires omega >= 0, got {omega}"
            )));
        }
        if omega == 0.0 || self.gamma == 0.0 {
            return Ok(0.0);
        }
        let j = self.spectral_density(omega)?;
        Ok(j * coth_minus_inv(0.5 * omega * self.beta))
    }

    /// Counterterm coefficient μ = (2/π)∫dω J(ω)/ω = γ·ω_cut/2 for the Drude² form.
    /// It is eliminated analytically by the integration by parts and never
    /// enters the dynamics; kept for reference and configuration checks.
    pub fn counterterm_mu(&self) -> f64 {
        // ∫0..∞ dω 1/(1+x²)² = π ω_cut / 4
        self.gamma * self.omega_cut / 2.0
    }

    /// Target autocorrelation C(τ) = (1/π)∫₀^∞ S_ξ(ω) cos(ωτ) dω by composite
    /// Simpson quadrature. Independent of the FFT sampler; used by the noise
    /// self-test and as the oracle in validation.
    pub fn psd_autocorrelation(&self, tau: f64) -> f64 {
        if self.gamma == 0.0 {
            return 0.0;
        }
        // Integrand ~ γ ω_cut⁴/ω³ at large ω: integrate far past the cutoff and
        // add the analytic 1/ω³ tail so truncation error stays below 1e-5 relative.
        let omega_max = 120.0 * self.omega_cut;
        let period = if tau.abs() > 1e-12 {
            2.0 * std::f64::consts::PI / tau.abs()
        } else {
            f64::INFINITY
        };
        let h_osc = period / 40.0;
        let h = h_osc.min(self.omega_cut / 400.0).min(0.25);
        let n = ((omega_max / h).ceil() as usize).next_multiple_of(2);
        let h = omega_max / n as f64;
        let f = |w: f64| self.noise_psd(w).unwrap() * (w * tau).cos();
        let mut sum = f(0.0) + f(omega_max);
        for k in 1..n {
            let w = k as f64 * h;
            sum += f(w) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        let mut integral = sum * h / 3.0;
        if tau.abs() < 1e-12 {
            // ∫_Λ^∞ γ ω_cut⁴/ω³ dω = γ ω_cut⁴/(2Λ²)
            integral += self.gamma * self.omega_cut.powi(4) / (2.0 * omega_max * omega_max);
        }
        integral / std::f64::consts::PI
    }
}

/// The cold/hot pair every propagator works against.
#[derive(Debug, Clone, Copy)]
pub struct ReservoirPair {
    pub cold: ReservoirSpec,
    pub hot: ReservoirSpec,
}

impl ReservoirPair {
    pub fn new(cold: ReservoirSpec, hot: ReservoirSpec) -> Result<Self> {
        cold.validate()?;
        hot.validate()?;
        if cold.label != BathLabel::Cold || hot.label != BathLabel::Hot {
            return Err(SimError::invalid("reservoir labels must be (cold, hot)"));
        }
        Ok(ReservoirPair { cold, hot })
    }
}

/// coth(x) − 1/x for x > 0, series-expanded near zero to avoid cancellation.
pub(crate) fn coth_minus_inv(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x < 0.05 {
        // coth x = 1/x + x/3 − x³/45 + 2x⁵/945 − …
        let x2 = x * x;
        x / 3.0 - x * x2 / 45.0 + 2.0 * x * x2 * x2 / 945.0
    } else {
        1.0 / x.tanh() - 1.0 / x
    }
}
