//! Per-cycle work and heat accounting.
//!
//! All energy flows are accumulated per trajectory from the same moments the
//! propagators expose and ensemble-averaged at the ledger level. In natural
//! units the instantaneous rates are
//!
//!   Ẇ_d      = ω ω̇ ⟨q²⟩
//!   Ẇ_I,cl   = Σ_α γ_α λ̇_α² ⟨q²⟩
//!   Ẇ_I,qm   = Σ_α [ −λ̇_α ξ_α ⟨q⟩ + γ_α λ_α λ̇_α ⟨qp+pq⟩/2 ]
//!   Q̇_α      = λ_α ξ_α ⟨p⟩ − γ_α λ_α² ⟨p²⟩ + γ_α λ_α²/β_α
//!              − γ_α λ_α λ̇_α ⟨qp+pq⟩ + λ̇_α ξ_α ⟨q⟩ − γ_α λ̇_α² ⟨q²⟩
//!
//! with Q the heat released by the reservoir, so that over any periodic
//! steady-state cycle W_d + W_I + Q_c + Q_h = 0. The ξ⟨q⟩ cross terms are
//! genuinely stochastic and must be averaged per trajectory, never replaced
//! by a product of means.

use crate::error::{Result, SimError};
use crate::noise::mean_and_stderr;
use crate::protocol::Controls;
use crate::reservoir::ReservoirPair;
use serde::Serialize;

/// Integrals of one trajectory over one cycle (or averaged over a window).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CycleComponents {
    pub w_d: f64,
    pub w_i_cl: f64,
    pub w_i_qm: f64,
    pub q_c: f64,
    pub q_h: f64,
}

impl CycleComponents {
    pub fn w_i(&self) -> f64 {
        self.w_i_cl + self.w_i_qm
    }

    pub fn net_work(&self) -> f64 {
        self.w_d + self.w_i()
    }

    /// First-law residual W_d + W_I + Q_c + Q_h.
    pub fn residual(&self) -> f64 {
        self.net_work() + self.q_c + self.q_h
    }

    pub fn add_scaled(&mut self, other: &CycleComponents, h: f64) {
        self.w_d += h * other.w_d;
        self.w_i_cl += h * other.w_i_cl;
        self.w_i_qm += h * other.w_i_qm;
        self.q_c += h * other.q_c;
        self.q_h += h * other.q_h;
    }

    pub fn scale(&mut self, f: f64) {
        self.w_d *= f;
        self.w_i_cl *= f;
        self.w_i_qm *= f;
        self.q_c *= f;
        self.q_h *= f;
    }
}

/// Instantaneous energy-flow rates for one trajectory.
pub fn rates(
    c: &Controls,
    res: &ReservoirPair,
    moments: &[f64; 5],
    xi_c: f64,
    xi_h: f64,
) -> CycleComponents {
    let [q1, p1, q2, p2, qp] = *moments;
    let mut out = CycleComponents {
        w_d: c.omega * c.omega_dot * q2,
        ..Default::default()
    };
    let baths = [
        (res.cold.gamma, res.cold.beta, c.lambda_c, c.lambda_c_dot, xi_c, false),
        (res.hot.gamma, res.hot.beta, c.lambda_h, c.lambda_h_dot, xi_h, true),
    ];
    for (gamma, beta, l, ld, xi, hot) in baths {
        out.w_i_cl += gamma * ld * ld * q2;
        out.w_i_qm += -ld * xi * q1 + gamma * l * ld * qp;
        let q_rate = l * xi * p1 - gamma * l * l * p2 + gamma * l * l / beta
            - gamma * l * ld * (2.0 * qp)
            + ld * xi * q1
            - gamma * ld * ld * q2;
        if hot {
            out.q_h += q_rate;
        } else {
            out.q_c += q_rate;
        }
    }
    out
}

/// Step-wise trapezoidal accumulator over one trajectory's time grid.
#[derive(Debug, Clone, Default)]
pub struct LedgerAccumulator {
    pub total: CycleComponents,
}

impl LedgerAccumulator {
    /// Integrate one propagation step from its endpoint integrands. Both
    /// endpoints must be evaluated with the step's own (piecewise-constant)
    /// noise value — the same pairing the dynamics realizes. Evaluating
    /// ξ(t)·⟨p⟩(t) pointwise on the grid instead leaves an O(dt) bias in the
    /// stochastic cross terms.
    pub fn push_step(&mut self, lo: &CycleComponents, hi: &CycleComponents, dt: f64) {
        let mut mid = *lo;
        mid.add_scaled(hi, 1.0);
        self.total.add_scaled(&mid, 0.5 * dt);
    }

    /// Close the current cycle and start the next one at the same grid point.
    pub fn take_cycle(&mut self) -> CycleComponents {
        let out = self.total;
        self.total = CycleComponents::default();
        out
    }
}

/// Mean ± standard error of one ledger component.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Estimate {
        let (mean, se) = mean_and_stderr(xs);
        Estimate { mean, se }
    }

    /// |mean| consistent with zero at z standard errors.
    pub fn consistent_with_zero(&self, z: f64) -> bool {
        self.mean.abs() <= z * self.se
    }
}

/// Ensemble statistics of one cycle.
#[derive(Debug, Clone, Serialize)]
pub struct CycleLedger {
    pub cycle_index: u32,
    pub w_d: Estimate,
    pub w_i_cl: Estimate,
    pub w_i_qm: Estimate,
    pub q_c: Estimate,
    pub q_h: Estimate,
    pub net_work: Estimate,
    pub residual: Estimate,
    pub phase: OperatingPhase,
}

impl CycleLedger {
    /// Reduce per-trajectory cycle integrals (one entry per trajectory).
    pub fn from_rows(cycle_index: u32, rows: &[CycleComponents]) -> CycleLedger {
        let col = |f: fn(&CycleComponents) -> f64| {
            Estimate::from_samples(&rows.iter().map(f).collect::<Vec<_>>())
        };
        let w_d = col(|r| r.w_d);
        let q_c = col(|r| r.q_c);
        let q_h = col(|r| r.q_h);
        let net_work = col(|r| r.net_work());
        CycleLedger {
            cycle_index,
            w_d,
            w_i_cl: col(|r| r.w_i_cl),
            w_i_qm: col(|r| r.w_i_qm),
            q_c,
            q_h,
            net_work,
            residual: col(|r| r.residual()),
            phase: classify_phase(net_work.mean, q_h.mean, q_c.mean),
        }
    }

    /// First-law residual with its propagated (per-trajectory) standard error.
    pub fn first_law_residual(&self) -> Estimate {
        self.residual
    }
}

/// Operating phase of the periodic steady state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatingPhase {
    HeatEngine,
    Dissipator,
    Refrigerator,
}

impl std::fmt::Display for OperatingPhase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OperatingPhase::HeatEngine => write!(f, "heat-engine"),
            OperatingPhase::Dissipator => write!(f, "dissipator"),
            OperatingPhase::Refrigerator => write!(f, "refrigerator"),
        }
    }
}

/// Pure function of the signs of (W_d+W_I, Q_h, Q_c).
pub fn classify_phase(net_work: f64, q_h: f64, q_c: f64) -> OperatingPhase {
    if net_work < 0.0 && q_h > 0.0 {
        OperatingPhase::HeatEngine
    } else if net_work > 0.0 && q_c > 0.0 {
        OperatingPhase::Refrigerator
    } else {
        OperatingPhase::Dissipator
    }
}

/// Engine summary over the PSS window.
#[derive(Debug, Clone, Serialize)]
pub struct EngineReport {
    /// η = −(W_d+W_I)/Q_h when operating as a heat engine, else 0.
    pub eta: Estimate,
    /// Net output power P = −(W_d+W_I)/T.
    pub power: Estimate,
    /// η_ref = Q_c/(W_d+W_I) when operating as a refrigerator, else 0.
    pub eta_ref: Estimate,
    pub phase: OperatingPhase,
    pub w_d: Estimate,
    pub w_i_cl: Estimate,
    pub w_i_qm: Estimate,
    pub q_c: Estimate,
    pub q_h: Estimate,
    pub net_work: Estimate,
    pub residual: Estimate,
    pub converged: bool,
}

/// Compute PSS figures from per-trajectory components averaged over the PSS
/// window (one entry per trajectory).
pub fn engine_figures(rows: &[CycleComponents], period: f64, converged: bool) -> Result<EngineReport> {
    if rows.len() < 2 {
        return Err(SimError::Run("engine figures need >= 2 trajectories".into()));
    }
    let ledger = CycleLedger::from_rows(0, rows);
    let net: Vec<f64> = rows.iter().map(|r| r.net_work()).collect();
    let qh: Vec<f64> = rows.iter().map(|r| r.q_h).collect();
    let qc: Vec<f64> = rows.iter().map(|r| r.q_c).collect();
    let phase = ledger.phase;

    let power = Estimate {
        mean: -ledger.net_work.mean / period,
        se: ledger.net_work.se / period,
    };
    let eta = if phase == OperatingPhase::HeatEngine {
        ratio_estimate(&net, &qh, -1.0)
    } else {
        Estimate::default()
    };
    let eta_ref = if phase == OperatingPhase::Refrigerator {
        ratio_estimate(&qc, &net, 1.0)
    } else {
        Estimate::default()
    };
    Ok(EngineReport {
        eta,
        power,
        eta_ref,
        phase,
        w_d: ledger.w_d,
        w_i_cl: ledger.w_i_cl,
        w_i_qm: ledger.w_i_qm,
        q_c: ledger.q_c,
        q_h: ledger.q_h,
        net_work: ledger.net_work,
        residual: ledger.residual,
        converged,
    })
}

/// sign·Ā/B̄ with a delta-method standard error including the covariance.
fn ratio_estimate(a: &[f64], b: &[f64], sign: f64) -> Estimate {
    let n = a.len() as f64;
    let (ma, _) = mean_and_stderr(a);
    let (mb, _) = mean_and_stderr(b);
    let mut va = 0.0;
    let mut vb = 0.0;
    let mut cab = 0.0;
    for (x, y) in a.iter().zip(b) {
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
        cab += (x - ma) * (y - mb);
    }
    let norm = n * (n - 1.0);
    let (va, vb, cab) = (va / norm, vb / norm, cab / norm);
    let r = ma / mb;
    let var = va / (mb * mb) + r * r * vb / (mb * mb) - 2.0 * r * cab / (mb * mb);
    Estimate {
        mean: sign * r,
        se: var.max(0.0).sqrt(),
    }
}

/// Ensemble moment trace of one cycle, sampled at fixed within-cycle offsets.
#[derive(Debug, Clone)]
pub struct CycleMoments {
    pub means: Vec<[f64; 5]>,
    pub ses: Vec<[f64; 5]>,
}

/// First 1-based cycle k whose sampled ensemble moments agree with cycle k+1:
/// the change must fall below tol (relative to the cycle's moment scale) or
/// below the 3σ statistical resolution of the ensemble, whichever is larger.
pub fn detect_pss(history: &[CycleMoments], tol: f64) -> Option<usize> {
    if history.len() < 2 {
        return None;
    }
    for k in 0..history.len() - 1 {
        if pss_change_ok(&history[k], &history[k + 1], tol) {
            return Some(k + 1);
        }
    }
    None
}

/// Relative cycle-to-cycle change used by `detect_pss` (diagnostic).
pub fn pss_relative_change(a: &CycleMoments, b: &CycleMoments) -> f64 {
    let scale = moment_scale(b);
    a.means
        .iter()
        .zip(&b.means)
        .map(|(ma, mb)| norm2_diff(ma, mb))
        .fold(0.0f64, f64::max)
        / scale
}

fn pss_change_ok(a: &CycleMoments, b: &CycleMoments, tol: f64) -> bool {
    let scale = moment_scale(b);
    for ((ma, mb), (sa, sb)) in a.means.iter().zip(&b.means).zip(a.ses.iter().zip(&b.ses)) {
        let d = norm2_diff(ma, mb);
        let floor = 3.0
            * (0..5)
                .map(|i| sa[i] * sa[i] + sb[i] * sb[i])
                .sum::<f64>()
                .sqrt();
        if d > (tol * scale).max(floor) {
            return false;
        }
    }
    true
}

fn moment_scale(c: &CycleMoments) -> f64 {
    c.means
        .iter()
        .map(|m| m.iter().fold(0.0f64, |a, &x| a.max(x.abs())))
        .fold(0.0f64, f64::max)
        .max(1e-12)
}

fn norm2_diff(a: &[f64; 5], b: &[f64; 5]) -> f64 {
    (0..5).map(|i| (a[i] - b[i]) * (a[i] - b[i])).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::{BathLabel, ReservoirSpec};
    use proptest::prelude::*;

    fn pair(gamma: f64) -> ReservoirPair {
        ReservoirPair::new(
            ReservoirSpec::new(3.0, gamma, 30.0, BathLabel::Cold).unwrap(),
            ReservoirSpec::new(0.25, gamma, 30.0, BathLabel::Hot).unwrap(),
        )
        .unwrap()
    }

    fn ctrl(omega: f64, omega_dot: f64, lc: f64, lcd: f64, lh: f64, lhd: f64) -> Controls {
        Controls {
            omega,
            omega_dot,
            lambda_c: lc,
            lambda_c_dot: lcd,
            lambda_h: lh,
            lambda_h_dot: lhd,
        }
    }

    #[test]
    fn decoupled_rates_vanish() {
        let m = [0.3, -0.2, 1.1, 0.9, 0.05];
        let r = rates(&ctrl(1.0, 0.0, 0.0, 0.0, 0.0, 0.0), &pair(0.5), &m, 0.7, -0.4);
        assert_eq!(r.w_i_cl, 0.0);
        assert_eq!(r.w_i_qm, 0.0);
        assert_eq!(r.q_c, 0.0);
        assert_eq!(r.q_h, 0.0);
        assert_eq!(r.w_d, 0.0);
    }

    #[test]
    fn static_frequency_means_no_driving_work() {
        let m = [0.0, 0.0, 1.0, 1.0, 0.0];
        let r = rates(&ctrl(1.5, 0.0, 1.0, 0.2, 0.0, 0.0), &pair(0.5), &m, 0.1, 0.0);
        assert_eq!(r.w_d, 0.0);
        assert!(r.w_i_cl > 0.0);
    }

    #[test]
    fn coupling_work_classical_part_is_nonnegative() {
        // γ λ̇² ⟨q²⟩ with ⟨q²⟩ > 0 is nonnegative whatever the ramp direction
        for ld in [-0.3, 0.0, 0.4] {
            let m = [0.5, -0.5, 0.8, 1.2, -0.1];
            let r = rates(&ctrl(1.0, 0.0, 0.5, ld, 0.0, 0.0), &pair(0.3), &m, -0.9, 0.0);
            assert!(r.w_i_cl >= 0.0);
        }
    }

    #[test]
    fn trapezoid_matches_analytic_integral() {
        // integrate Ẇ_d = ω ω̇ ⟨q²⟩ with ⟨q²⟩ = 1 over a linear ramp
        let res = pair(0.0);
        let mut acc = LedgerAccumulator::default();
        let n = 1000;
        let dt = 1.0 / n as f64;
        let m = [0.0, 0.0, 1.0, 0.0, 0.0];
        for k in 0..n {
            let lo = rates(&ctrl(1.0 + k as f64 * dt, 1.0, 0.0, 0.0, 0.0, 0.0), &res, &m, 0.0, 0.0);
            let hi = rates(
                &ctrl(1.0 + (k + 1) as f64 * dt, 1.0, 0.0, 0.0, 0.0, 0.0),
                &res,
                &m,
                0.0,
                0.0,
            );
            acc.push_step(&lo, &hi, dt);
        }
        // ∫ ω dω = (2² − 1²)/2
        approx::assert_relative_eq!(acc.take_cycle().w_d, 1.5, max_relative = 1e-6);
    }

    #[test]
    fn residual_is_exactly_zero_for_decoupled_unitary_cycle() {
        let r = CycleComponents::default();
        assert_eq!(r.residual(), 0.0);
        let rows = vec![CycleComponents::default(); 8];
        let ledger = CycleLedger::from_rows(1, &rows);
        assert_eq!(ledger.residual.mean, 0.0);
    }

    #[test]
    fn classification_covers_the_three_phases() {
        assert_eq!(classify_phase(-1.0, 0.5, -0.2), OperatingPhase::HeatEngine);
        assert_eq!(classify_phase(1.0, -0.5, 0.2), OperatingPhase::Refrigerator);
        assert_eq!(classify_phase(1.0, 0.5, -0.2), OperatingPhase::Dissipator);
        assert_eq!(classify_phase(-1.0, -0.5, 0.2), OperatingPhase::Dissipator);
    }

    #[test]
    fn engine_figures_zero_net_work_gives_zero_eta() {
        let rows: Vec<CycleComponents> = (0..16)
            .map(|i| CycleComponents {
                w_d: if i % 2 == 0 { 1.0 } else { -1.0 },
                q_h: 1.0,
                ..Default::default()
            })
            .collect();
        let rep = engine_figures(&rows, 10.0, true).unwrap();
        assert_eq!(rep.eta.mean, 0.0);
        assert_eq!(rep.phase, OperatingPhase::Dissipator);
    }

    #[test]
    fn detect_pss_trivial_periodic_history() {
        let cm = CycleMoments {
            means: vec![[1.0, 0.0, 0.5, 0.5, 0.0]; 4],
            ses: vec![[0.0; 5]; 4],
        };
        assert_eq!(detect_pss(&[cm.clone(), cm.clone(), cm.clone()], 1e-2), Some(1));
    }

    #[test]
    fn detect_pss_flags_transient() {
        let mk = |v: f64, se: f64| CycleMoments {
            means: vec![[v, 0.0, 0.5, 0.5, 0.0]; 4],
            ses: vec![[se; 5]; 4],
        };
        let history = vec![mk(1.0, 1e-6), mk(2.0, 1e-6), mk(2.0, 1e-6), mk(2.0, 1e-6)];
        assert_eq!(detect_pss(&history, 1e-2), Some(2));
        assert_eq!(detect_pss(&history[..2], 1e-2), None);
    }

    proptest! {
        // Tightening the tolerance never detects PSS earlier.
        #[test]
        fn detect_pss_monotone_in_tol(seed in 0u64..1000) {
            let mut v = 1.0 + (seed as f64) * 0.001;
            let mut history = Vec::new();
            for _ in 0..8 {
                history.push(CycleMoments {
                    means: vec![[v, 0.0, 0.5, 0.5, 0.0]; 3],
                    ses: vec![[0.0; 5]; 3],
                });
                v = 1.0 + (v - 1.0) * 0.3;
            }
            let loose = detect_pss(&history, 1e-1).map_or(usize::MAX, |k| k);
            let tight = detect_pss(&history, 1e-3).map_or(usize::MAX, |k| k);
            prop_assert!(tight >= loose);
        }

        // Scaling all energies by a positive constant keeps the phase label.
        #[test]
        fn classification_scale_invariant(
            net in -5.0f64..5.0,
            qh in -5.0f64..5.0,
            qc in -5.0f64..5.0,
            c in 0.01f64..100.0,
        ) {
            prop_assert_eq!(
                classify_phase(net, qh, qc),
                classify_phase(c * net, c * qh, c * qc)
            );
        }
    }
}
