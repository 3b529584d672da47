//! Exact per-trajectory propagation of the harmonic medium.
//!
//! For κ = 0 the dissipative dynamics closes on first and second moments.
//! Writing σ for central covariances, the trajectory obeys
//!
//!   d⟨q⟩/dt = ⟨p⟩
//!   d⟨p⟩/dt = −ω²⟨q⟩ − Σ_α γ_α λ_α² ⟨p⟩ − Σ_α γ_α λ_α λ̇_α ⟨q⟩ + Σ_α λ_α ξ_α
//!   dσ_qq/dt = 2σ_qp
//!   dσ_qp/dt = σ_pp − ω²σ_qq − Σ_α γ_α λ_α² σ_qp − Σ_α γ_α λ_α λ̇_α σ_qq
//!   dσ_pp/dt = −2ω²σ_qp − 2Σ_α γ_α λ_α² σ_pp − 2Σ_α γ_α λ_α λ̇_α σ_qp + 2Σ_α γ_α λ_α²/β_α
//!
//! Noise drives the first moments only; the physical second moments are the
//! ensemble averages of σ + mean². The λλ̇ terms act as a frequency shift,
//! not as damping. Integration is classical RK4 with the noise held constant
//! across each step.

use crate::error::{Result, SimError};
use crate::protocol::Controls;
use crate::reservoir::ReservoirPair;

/// Per-trajectory Gaussian state: means, central covariances and time.
#[derive(Debug, Clone, Copy)]
pub struct GaussianState {
    pub mean_q: f64,
    pub mean_p: f64,
    pub var_q: f64,
    pub var_p: f64,
    pub cov_qp: f64,
    pub t: f64,
}

impl GaussianState {
    /// Zero-mean state with the given covariance.
    pub fn from_covariance(var_q: f64, var_p: f64, cov_qp: f64) -> Result<Self> {
        if !(var_q > 0.0 && var_p > 0.0) {
            return Err(SimError::domain("variances must be positive"));
        }
        Ok(GaussianState {
            mean_q: 0.0,
            mean_p: 0.0,
            var_q,
            var_p,
            cov_qp,
            t: 0.0,
        })
    }

    /// Thermal state of a harmonic oscillator at frequency ω and inverse
    /// temperature β: ⟨q²⟩ = coth(ωβ/2)/(2ω), ⟨p²⟩ = (ω/2)coth(ωβ/2).
    pub fn thermal(omega: f64, beta: f64) -> Self {
        let c = 0.5 / (0.5 * omega * beta).tanh();
        GaussianState {
            mean_q: 0.0,
            mean_p: 0.0,
            var_q: c / omega,
            var_p: c * omega,
            cov_qp: 0.0,
            t: 0.0,
        }
    }

    /// Ground state at frequency ω.
    pub fn ground(omega: f64) -> Self {
        GaussianState {
            mean_q: 0.0,
            mean_p: 0.0,
            var_q: 0.5 / omega,
            var_p: 0.5 * omega,
            cov_qp: 0.0,
            t: 0.0,
        }
    }

    /// Raw moments (⟨q⟩, ⟨p⟩, ⟨q²⟩, ⟨p²⟩, ⟨qp+pq⟩/2).
    pub fn moments(&self) -> [f64; 5] {
        [
            self.mean_q,
            self.mean_p,
            self.var_q + self.mean_q * self.mean_q,
            self.var_p + self.mean_p * self.mean_p,
            self.cov_qp + self.mean_q * self.mean_p,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.mean_q.is_finite()
            && self.mean_p.is_finite()
            && self.var_q.is_finite()
            && self.var_p.is_finite()
            && self.cov_qp.is_finite()
    }
}

/// Moment-ODE propagator for the harmonic medium.
#[derive(Debug, Clone, Copy)]
pub struct GaussianPropagator {
    pub reservoirs: ReservoirPair,
}

impl GaussianPropagator {
    pub fn new(reservoirs: ReservoirPair, kappa: f64) -> Result<Self> {
        if kappa != 0.0 {
            return Err(SimError::Unsupported(
                "gaussian propagator requires kappa = 0 (use the grid propagator)".into(),
            ));
        }
        Ok(GaussianPropagator { reservoirs })
    }

    #[inline]
    fn rhs(&self, c: &Controls, xi_c: f64, xi_h: f64, y: &[f64; 5]) -> [f64; 5] {
        let (gc, gh) = (self.reservoirs.cold.gamma, self.reservoirs.hot.gamma);
        let fric = gc * c.lambda_c * c.lambda_c + gh * c.lambda_h * c.lambda_h;
        let shift = gc * c.lambda_c * c.lambda_c_dot + gh * c.lambda_h * c.lambda_h_dot;
        let diff = 2.0
            * (gc * c.lambda_c * c.lambda_c / self.reservoirs.cold.beta
                + gh * c.lambda_h * c.lambda_h / self.reservoirs.hot.beta);
        let drive = c.lambda_c * xi_c + c.lambda_h * xi_h;
        let w2 = c.omega * c.omega;
        let [q, p, sqq, spp, sqp] = *y;
        [
            p,
            -w2 * q - fric * p - shift * q + drive,
            2.0 * sqp,
            -2.0 * w2 * sqp - 2.0 * fric * spp - 2.0 * shift * sqp + diff,
            spp - w2 * sqq - fric * sqp - shift * sqq,
        ]
    }

    /// Advance one RK4 step. Controls are evaluated at the stage times;
    /// the noise values are piecewise-constant over the step.
    pub fn step<F>(&self, state: &mut GaussianState, controls: &F, xi_c: f64, xi_h: f64, dt: f64)
    where
        F: Fn(f64) -> Controls,
    {
        let t = state.t;
        let y = [state.mean_q, state.mean_p, state.var_q, state.var_p, state.cov_qp];
        let c0 = controls(t);
        let cm = controls(t + 0.5 * dt);
        let c1 = controls(t + dt);

        let k1 = self.rhs(&c0, xi_c, xi_h, &y);
        let k2 = self.rhs(&cm, xi_c, xi_h, &add(&y, &k1, 0.5 * dt));
        let k3 = self.rhs(&cm, xi_c, xi_h, &add(&y, &k2, 0.5 * dt));
        let k4 = self.rhs(&c1, xi_c, xi_h, &add(&y, &k3, dt));

        let mut out = y;
        for i in 0..5 {
            out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        state.mean_q = out[0];
        state.mean_p = out[1];
        state.var_q = out[2];
        state.var_p = out[3];
        state.cov_qp = out[4];
        state.t = t + dt;
    }

    /// Derivatives of the central covariances only (noise-free part); used to
    /// pre-relax the deterministic covariance toward its periodic steady state.
    pub fn covariance_rhs(&self, c: &Controls, cov: &[f64; 3]) -> [f64; 3] {
        let y = [0.0, 0.0, cov[0], cov[1], cov[2]];
        let d = self.rhs(c, 0.0, 0.0, &y);
        [d[2], d[3], d[4]]
    }
}

#[inline]
fn add(y: &[f64; 5], k: &[f64; 5], h: f64) -> [f64; 5] {
    [
        y[0] + h * k[0],
        y[1] + h * k[1],
        y[2] + h * k[2],
        y[3] + h * k[3],
        y[4] + h * k[4],
    ]
}

/// Integrate the noise-free covariance ODE over whole cycles until the
/// per-cycle change drops below `tol`; returns the covariance at cycle start.
/// This is a pure initial-condition aid: it shortens the transient without
/// touching the stochastic dynamics.
pub fn pss_covariance_estimate<F>(
    prop: &GaussianPropagator,
    controls: &F,
    period: f64,
    dt: f64,
    start: &GaussianState,
    max_cycles: u32,
    tol: f64,
) -> [f64; 3]
where
    F: Fn(f64) -> Controls,
{
    let steps = (period / dt).round() as usize;
    let mut s = *start;
    s.t = 0.0;
    let mut prev = [s.var_q, s.var_p, s.cov_qp];
    for _ in 0..max_cycles {
        for _ in 0..steps {
            prop.step(&mut s, controls, 0.0, 0.0, dt);
        }
        let cur = [s.var_q, s.var_p, s.cov_qp];
        let change = (0..3)
            .map(|i| (cur[i] - prev[i]).abs())
            .fold(0.0f64, f64::max);
        let scale = cur.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-12);
        if change / scale < tol {
            break;
        }
        prev = cur;
    }
    [s.var_q, s.var_p, s.cov_qp]
}
