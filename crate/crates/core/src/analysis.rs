//! Post-processing and analytic estimates: corner-variance ratio R, the
//! minimal coupling-ramp time, closed-form work estimates, the oscillatory
//! phase integrals Ω_α of the qp-part of the coupling work, entropy and
//! squeezing of Gaussian states, and phase-diagram assembly.

use crate::error::{Result, SimError};
use crate::protocol::CycleSchedule;
use crate::thermo::OperatingPhase;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

/// Ensemble ⟨q²⟩ at the four stroke corners of a PSS cycle.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct VarianceQuadruple {
    pub q2_a: f64,
    pub q2_b: f64,
    pub q2_c: f64,
    pub q2_d: f64,
}

impl VarianceQuadruple {
    pub fn validate(&self) -> Result<()> {
        if [self.q2_a, self.q2_b, self.q2_c, self.q2_d]
            .iter()
            .any(|&v| !(v > 0.0))
        {
            return Err(SimError::domain("corner variances must be positive"));
        }
        Ok(())
    }
}

/// R = (⟨q²⟩_A + ⟨q²⟩_D)/(⟨q²⟩_C + ⟨q²⟩_B).
pub fn ratio_r(v: &VarianceQuadruple) -> Result<f64> {
    v.validate()?;
    let denom = v.q2_c + v.q2_b;
    if denom <= 0.0 {
        return Err(SimError::domain("nonpositive denominator in R"));
    }
    Ok((v.q2_a + v.q2_d) / denom)
}

/// Minimal coupling-ramp time for heat-engine operation,
/// ω₀τ_I > (2γ/Δω)(1+R)/(1−R); R ≥ 1 means no engine regime (infinity).
pub fn minimal_tau_i(gamma: f64, delta_omega: f64, r: f64) -> Result<f64> {
    if r < 0.0 {
        return Err(SimError::domain(format!("R must be >= 0, got {r}")));
    }
    if !(delta_omega > 0.0) {
        return Err(SimError::domain("delta_omega must be > 0"));
    }
    if r >= 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok(2.0 * gamma / delta_omega * (1.0 + r) / (1.0 - r))
}

/// Small-compression closed-form estimates for (W_d, W_I), assuming linear
/// ramps: W_d ≈ (ω₀Δω/2)(⟨q²⟩_A+⟨q²⟩_D−⟨q²⟩_C−⟨q²⟩_B) and
/// W_I ≈ (γ/τ_I)(⟨q²⟩_A+⟨q²⟩_B+⟨q²⟩_C+⟨q²⟩_D) with τ_I λ̇² = 1/τ_I.
pub fn estimate_works(
    v: &VarianceQuadruple,
    schedule: &CycleSchedule,
    gamma: f64,
) -> Result<(f64, f64)> {
    v.validate()?;
    let w_d = 0.5 * crate::protocol::OMEGA_0 * schedule.delta_omega
        * (v.q2_a + v.q2_d - v.q2_c - v.q2_b);
    let w_i = gamma / schedule.tau_i * (v.q2_a + v.q2_b + v.q2_c + v.q2_d);
    Ok((w_d, w_i))
}

/// Reservoir side of the qp phase integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BathSide {
    Cold,
    Hot,
}

/// Dimensionless switch-on/switch-off phase integral
///
/// Ω_α = ∫₀^{ω₀τ_I} dx { (x/ω₀τ_I)·cos(2(ω_α/ω₀)x)·e^{−(γ/ω₀)x}
///        − (1 − x/ω₀τ_I)·cos[2(ω_α/ω₀)(ω₀τ_I+ω₀τ_R+x)]·e^{−(γ/ω₀)(ω₀τ_I+ω₀τ_R+x)} }.
pub fn omega_integral(side: BathSide, schedule: &CycleSchedule, gamma: f64) -> Result<f64> {
    schedule.validate()?;
    let w_alpha = match side {
        BathSide::Cold => schedule.omega_cold(),
        BathSide::Hot => schedule.omega_hot(),
    };
    let x_i = schedule.tau_i; // ω₀ = 1
    let x_r = schedule.tau_r;
    let f = |x: f64| {
        let on = x / x_i * (2.0 * w_alpha * x).cos() * (-gamma * x).exp();
        let off = (1.0 - x / x_i)
            * (2.0 * w_alpha * (x_i + x_r + x)).cos()
            * (-gamma * (x_i + x_r + x)).exp();
        on - off
    };
    Ok(simpson(f, 0.0, x_i, panels_for(x_i, w_alpha, gamma)))
}

fn panels_for(span: f64, w: f64, gamma: f64) -> usize {
    let density = 200.0 * (1.0 + w + gamma);
    (((span * density).ceil() as usize).max(64)).next_multiple_of(2)
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// qp-part of the coupling work, W_I^{(qp)} ≈ (γ/2τ_I)(⟨qp+pq⟩_A Ω_h + ⟨qp+pq⟩_C Ω_c).
/// Takes the full anticommutator averages ⟨qp+pq⟩ at corners A and C.
pub fn estimate_wi_qp(
    qp_plus_pq_a: f64,
    qp_plus_pq_c: f64,
    schedule: &CycleSchedule,
    gamma: f64,
) -> Result<f64> {
    let omega_h = omega_integral(BathSide::Hot, schedule, gamma)?;
    let omega_c = omega_integral(BathSide::Cold, schedule, gamma)?;
    Ok(gamma / (2.0 * schedule.tau_i) * (qp_plus_pq_a * omega_h + qp_plus_pq_c * omega_c))
}

/// Squeezing decomposition of a single-mode covariance matrix.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Squeezing {
    pub amplitude: f64,
    /// Squeezing angle, reported modulo π; 0 with `degenerate` when r = 0.
    pub angle: f64,
    pub degenerate: bool,
}

/// (r, φ) from σ = ν[cosh2r + sinh2r·cos2φ, sinh2r·sin2φ; …, cosh2r − sinh2r·cos2φ].
pub fn squeezing_parameters(var_q: f64, var_p: f64, cov_qp: f64) -> Result<Squeezing> {
    let nu = symplectic_eigenvalue(var_q, var_p, cov_qp)?;
    let c2r = (var_q + var_p) / (2.0 * nu);
    if c2r <= 1.0 + 1e-12 {
        return Ok(Squeezing {
            amplitude: 0.0,
            angle: 0.0,
            degenerate: true,
        });
    }
    let r = 0.5 * c2r.acosh();
    let angle = 0.5 * (2.0 * cov_qp).atan2(var_q - var_p);
    Ok(Squeezing {
        amplitude: r,
        angle,
        degenerate: false,
    })
}

/// Continuous unwrap of a mod-π angle series by nearest-branch continuation.
pub fn unwrap_angles(raw: &[f64]) -> Vec<f64> {
    let pi = std::f64::consts::PI;
    let mut out = Vec::with_capacity(raw.len());
    let mut prev: Option<f64> = None;
    for &a in raw {
        let v = match prev {
            None => a,
            Some(p) => {
                let mut v = a + ((p - a) / pi).round() * pi;
                // guard rounding at half-branch distance
                while v - p > 0.5 * pi {
                    v -= pi;
                }
                while p - v > 0.5 * pi {
                    v += pi;
                }
                v
            }
        };
        out.push(v);
        prev = Some(v);
    }
    out
}

fn symplectic_eigenvalue(var_q: f64, var_p: f64, cov_qp: f64) -> Result<f64> {
    let det = var_q * var_p - cov_qp * cov_qp;
    if !(var_q > 0.0 && var_p > 0.0 && det > 0.0) {
        return Err(SimError::domain("covariance must be positive definite"));
    }
    Ok(det.sqrt())
}

/// Von Neumann entropy of a Gaussian state from its covariance matrix:
/// S = (ν+½)ln(ν+½) − (ν−½)ln(ν−½). Covariances more than `tol` below the
/// Heisenberg floor ν = ½ are flagged as unphysical (insufficient sampling).
pub fn entropy_gaussian(var_q: f64, var_p: f64, cov_qp: f64, tol: f64) -> Result<f64> {
    let nu = symplectic_eigenvalue(var_q, var_p, cov_qp)?;
    if nu < 0.5 - tol {
        return Err(SimError::domain(format!(
            "symplectic eigenvalue {nu:.6} below the physical floor 1/2"
        )));
    }
    let nu = nu.max(0.5);
    let a = nu + 0.5;
    let b = nu - 0.5;
    let term_b = if b > 0.0 { b * b.ln() } else { 0.0 };
    Ok(a * a.ln() - term_b)
}

/// Von Neumann entropy of an ensemble-averaged grid state: the density is
/// re-assembled as ρ(x,x′) on the position grid (band-limited upsampling of
/// the r axis), diagonalized, and −Σ λ ln λ taken over eigenvalues above
/// a 1e−10 floor. Requires Δy = Δr so the y slices land on grid points.
pub fn entropy_grid(grid: &crate::grid::DensityGrid) -> Result<f64> {
    let p = grid.params;
    if (p.dy() - p.dr()).abs() > 1e-12 * p.dr() {
        return Err(SimError::Unsupported(
            "grid entropy requires equal r and y spacings".into(),
        ));
    }
    let (nr, ny) = (p.n_r, p.n_y);
    // Band-limited 2x upsampling of each y-column along r.
    let mut planner = rustfft::FftPlanner::new();
    let fft = planner.plan_fft_forward(nr);
    let ifft = planner.plan_fft_inverse(2 * nr);
    let mut up = vec![Complex64::default(); 2 * nr * ny];
    let mut col = vec![Complex64::default(); nr];
    let mut pad = vec![Complex64::default(); 2 * nr];
    for j in 0..ny {
        for i in 0..nr {
            col[i] = grid.at(i, j);
        }
        fft.process(&mut col);
        pad.fill(Complex64::default());
        for m in 0..nr / 2 {
            pad[m] = col[m];
        }
        pad[nr / 2] = 0.5 * col[nr / 2];
        pad[2 * nr - nr / 2] = 0.5 * col[nr / 2];
        for m in nr / 2 + 1..nr {
            pad[2 * nr - (nr - m)] = col[m];
        }
        ifft.process(&mut pad);
        for k in 0..2 * nr {
            up[k * ny + j] = pad[k] / nr as f64;
        }
    }
    // ρ(x_a, x_b) = ρ(r = (x_a+x_b)/2, y = x_b − x_a)
    let mut mat = DMatrix::<Complex64>::zeros(nr, nr);
    for a in 0..nr {
        for b in 0..nr {
            let diff = b as isize - a as isize;
            let j = ny as isize / 2 + diff;
            if j < 0 || j >= ny as isize {
                continue;
            }
            mat[(a, b)] = up[(a + b) * ny + j as usize];
        }
    }
    let dr = p.dr();
    mat.scale_mut(dr);
    // enforce hermiticity against rounding before diagonalizing
    let herm = (&mat + mat.adjoint()).scale(0.5);
    let eig = herm.symmetric_eigenvalues();
    let mut s = 0.0;
    for &l in eig.iter() {
        if l > 1e-10 {
            s -= l * l.ln();
        }
    }
    Ok(s)
}

/// Curzon–Ahlborn efficiency 1 − √(T_c/T_h) for plot comparisons.
pub fn eta_curzon_ahlborn(beta_c: f64, beta_h: f64) -> f64 {
    1.0 - (beta_h / beta_c).sqrt()
}

/// Carnot bound 1 − T_c/T_h.
pub fn eta_carnot(beta_c: f64, beta_h: f64) -> f64 {
    1.0 - beta_h / beta_c
}

/// One simulated grid point of the (γ, τ_I) phase diagram.
#[derive(Debug, Clone, Serialize)]
pub struct PhasePoint {
    pub gamma: f64,
    pub tau_i: f64,
    pub converged: bool,
    pub phase: OperatingPhase,
    /// η, 0 outside the heat-engine phase (plot convention).
    pub eta: f64,
    pub net_work: f64,
    pub net_work_se: f64,
    pub q_h: f64,
    pub q_c: f64,
    pub corner_q2: Option<VarianceQuadruple>,
}

/// QH/dissipator boundary at one coupling value.
#[derive(Debug, Clone, Serialize)]
pub struct BoundaryPoint {
    pub gamma: f64,
    /// τ_I where W_d+W_I changes sign (linear interpolation between samples).
    pub tau_i_star: f64,
    /// R from the simulated corner variances nearest the boundary.
    pub ratio_r: Option<f64>,
    /// Eq.-(5)-style estimate (2γ/Δω)(1+R)/(1−R) using that R.
    pub tau_i_estimate: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseDiagram {
    pub points: Vec<PhasePoint>,
    pub boundary: Vec<BoundaryPoint>,
}

/// Group points by γ, scan τ_I ascending, and extract the dissipator→QH
/// boundary by the sign change of the net work. Unconverged points are kept
/// in the table but never interpolated across.
pub fn assemble_phase_diagram(mut points: Vec<PhasePoint>, delta_omega: f64) -> PhaseDiagram {
    points.sort_by(|a, b| {
        a.gamma
            .partial_cmp(&b.gamma)
            .unwrap()
            .then(a.tau_i.partial_cmp(&b.tau_i).unwrap())
    });
    let mut boundary = Vec::new();
    let mut i = 0;
    while i < points.len() {
        let gamma = points[i].gamma;
        let mut j = i;
        while j < points.len() && points[j].gamma == gamma {
            j += 1;
        }
        let row = &points[i..j];
        if let Some(bp) = boundary_for_row(row, gamma, delta_omega) {
            boundary.push(bp);
        }
        i = j;
    }
    PhaseDiagram { points, boundary }
}

fn boundary_for_row(row: &[PhasePoint], gamma: f64, delta_omega: f64) -> Option<BoundaryPoint> {
    for w in row.windows(2) {
        let (lo, hi) = (&w[0], &w[1]);
        if !lo.converged || !hi.converged {
            continue;
        }
        if lo.net_work > 0.0 && hi.net_work <= 0.0 {
            let f = lo.net_work / (lo.net_work - hi.net_work);
            let tau_star = lo.tau_i + f * (hi.tau_i - lo.tau_i);
            // R from the run on the engine side of the crossing
            let r = hi
                .corner_q2
                .as_ref()
                .and_then(|v| ratio_r(v).ok());
            let est = r.and_then(|r| minimal_tau_i(gamma, delta_omega, r).ok());
            return Some(BoundaryPoint {
                gamma,
                tau_i_star: tau_star,
                ratio_r: r,
                tau_i_estimate: est,
            });
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::RampShape;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn quad(a: f64, b: f64, c: f64, d: f64) -> VarianceQuadruple {
        VarianceQuadruple {
            q2_a: a,
            q2_b: b,
            q2_c: c,
            q2_d: d,
        }
    }

    fn fig3() -> CycleSchedule {
        CycleSchedule {
            tau_i: 5.0,
            tau_d: 5.0,
            tau_r: 5.0,
            delta_omega: 1.0,
            kappa: 0.0,
            hold_after_expansion: 0.0,
            ramp_shape: RampShape::Linear,
        }
    }

    #[test]
    fn ratio_r_symmetric_case() {
        assert_relative_eq!(ratio_r(&quad(1.0, 1.0, 1.0, 1.0)).unwrap(), 1.0);
    }

    #[test]
    fn ratio_r_classical_quasi_equilibrium() {
        // variances 1/(βω²) at the corners give R = T_c/T_h = β_h/β_c
        let (beta_c, beta_h) = (3.0, 0.25);
        let (wc, wh) = (0.5, 1.5);
        let v = quad(
            1.0 / (beta_c * wh * wh),
            1.0 / (beta_h * wh * wh),
            1.0 / (beta_h * wc * wc),
            1.0 / (beta_c * wc * wc),
        );
        assert_relative_eq!(ratio_r(&v).unwrap(), beta_h / beta_c, max_relative = 1e-12);
    }

    #[test]
    fn minimal_tau_i_limits() {
        assert_eq!(minimal_tau_i(0.0, 0.5, 0.3).unwrap(), 0.0);
        // R = 0.5, Δω = 0.5 → 12γ
        assert_relative_eq!(minimal_tau_i(0.2, 0.5, 0.5).unwrap(), 12.0 * 0.2);
        // R = 0 → 2γ/Δω
        assert_relative_eq!(minimal_tau_i(0.3, 1.5, 0.0).unwrap(), 2.0 * 0.3 / 1.5);
        assert!(minimal_tau_i(0.3, 1.0, 1.0).unwrap().is_infinite());
        assert!(minimal_tau_i(0.3, 1.0, -0.1).is_err());
    }

    #[test]
    fn estimate_works_signs() {
        let s = fig3();
        let (wd, wi) = estimate_works(&quad(1.0, 1.0, 1.0, 1.0), &s, 0.1).unwrap();
        assert_eq!(wd, 0.0);
        assert!(wi > 0.0);
        // QH-consistent variances: A, D smaller than B, C
        let (wd, wi) = estimate_works(&quad(0.6, 1.4, 1.8, 0.9), &s, 0.1).unwrap();
        assert!(wd < 0.0);
        assert!(wi > 0.0);
    }

    #[test]
    fn omega_integral_limits() {
        let s = fig3();
        // strong damping kills the integrand: Ω ~ 1/(τ_I γ²)
        let strong = omega_integral(BathSide::Cold, &s, 100.0).unwrap();
        assert!(strong.abs() < 1e-4, "got {strong}");
        let stronger = omega_integral(BathSide::Cold, &s, 1000.0).unwrap();
        assert!(stronger.abs() < 1e-6, "got {stronger}");
        // vanishing ramp time
        let tiny = omega_integral(
            BathSide::Cold,
            &CycleSchedule {
                tau_i: 1e-4,
                ..s
            },
            0.05,
        )
        .unwrap();
        assert!(tiny.abs() < 1e-3);
    }

    #[test]
    fn omega_integral_cold_dominates_for_fig3_parameters() {
        let s = fig3();
        let oc = omega_integral(BathSide::Cold, &s, 0.05).unwrap();
        let oh = omega_integral(BathSide::Hot, &s, 0.05).unwrap();
        assert!(oc.abs() > oh.abs(), "|Ω_c| = {oc:.4}, |Ω_h| = {oh:.4}");
    }

    #[test]
    fn omega_integral_quadrature_converged() {
        let s = fig3();
        let coarse = simpson(
            |x| {
                let w = s.omega_cold();
                x / s.tau_i * (2.0 * w * x).cos() * (-0.05 * x).exp()
                    - (1.0 - x / s.tau_i)
                        * (2.0 * w * (s.tau_i + s.tau_r + x)).cos()
                        * (-0.05 * (s.tau_i + s.tau_r + x)).exp()
            },
            0.0,
            s.tau_i,
            panels_for(s.tau_i, s.omega_cold(), 0.05),
        );
        let fine = simpson(
            |x| {
                let w = s.omega_cold();
                x / s.tau_i * (2.0 * w * x).cos() * (-0.05 * x).exp()
                    - (1.0 - x / s.tau_i)
                        * (2.0 * w * (s.tau_i + s.tau_r + x)).cos()
                        * (-0.05 * (s.tau_i + s.tau_r + x)).exp()
            },
            0.0,
            s.tau_i,
            2 * panels_for(s.tau_i, s.omega_cold(), 0.05),
        );
        assert!((coarse - fine).abs() < 1e-6);
    }

    #[test]
    fn wi_qp_estimate_zero_and_sign() {
        let s = fig3();
        assert_eq!(estimate_wi_qp(0.0, 0.0, &s, 0.1).unwrap(), 0.0);
        // for these protocol parameters Ω_c < 0 and dominates, so a positive
        // qp correlation at C drives the estimate negative
        let est = estimate_wi_qp(0.0, 1.0, &s, 0.1).unwrap();
        let oc = omega_integral(BathSide::Cold, &s, 0.1).unwrap();
        assert!(oc < 0.0, "Ω_c = {oc}");
        assert!(est < 0.0);
    }

    #[test]
    fn entropy_pure_state_is_zero() {
        assert_relative_eq!(entropy_gaussian(0.5, 0.5, 0.0, 1e-9).unwrap(), 0.0);
    }

    #[test]
    fn entropy_thermal_value() {
        // ν = ½coth(1.5) for ωβ = 3
        let nu = 0.5 / 1.5f64.tanh();
        let s = entropy_gaussian(nu, nu, 0.0, 1e-9).unwrap();
        assert_relative_eq!(s, 0.208_256, max_relative = 1e-4);
    }

    #[test]
    fn entropy_flags_unphysical_covariance() {
        assert!(entropy_gaussian(0.3, 0.3, 0.0, 1e-6).is_err());
    }

    #[test]
    fn entropy_invariant_under_rotation() {
        // rotate a squeezed thermal covariance; S depends on ν only
        let (vq, vp) = (1.3, 0.4);
        let s0 = entropy_gaussian(vq, vp, 0.0, 1e-9).unwrap();
        for phi in [0.3f64, 1.0, 2.2] {
            let (c, s) = (phi.cos(), phi.sin());
            let a = c * c * vq + s * s * vp;
            let b = s * s * vq + c * c * vp;
            let x = c * s * (vp - vq);
            let s1 = entropy_gaussian(a, b, x, 1e-9).unwrap();
            assert_relative_eq!(s0, s1, max_relative = 1e-10);
        }
    }

    #[test]
    fn grid_entropy_matches_gaussian_route_on_thermal_state() {
        // two independent routes to S_vN must agree on a Gaussian state
        let params = crate::grid::GridParams {
            n_r: 64,
            n_y: 64,
            l_r: 8.0,
            l_y: 8.0,
        };
        let g = crate::grid::DensityGrid::thermal(params, 1.0, 3.0).unwrap();
        let s_grid = entropy_grid(&g).unwrap();
        let nu = 0.5 / 1.5f64.tanh();
        let s_gauss = entropy_gaussian(nu, nu, 0.0, 1e-9).unwrap();
        assert_relative_eq!(s_grid, s_gauss, max_relative = 1e-3);
    }

    #[test]
    fn squeezing_of_isotropic_state_is_degenerate() {
        let s = squeezing_parameters(0.7, 0.7, 0.0).unwrap();
        assert_eq!(s.amplitude, 0.0);
        assert!(s.degenerate);
    }

    #[test]
    fn squeezing_of_scaled_ground_state() {
        // ground state of frequency 2ω₀ expressed in ω₀ units: r = ½ ln 2
        let s = squeezing_parameters(0.25, 1.0, 0.0).unwrap();
        assert_relative_eq!(s.amplitude, 0.5 * 2.0f64.ln(), max_relative = 1e-10);
        assert!(!s.degenerate);
    }

    #[test]
    fn unwrap_angles_continuity() {
        let pi = std::f64::consts::PI;
        let raw: Vec<f64> = (0..40).map(|k| (0.11 * k as f64).rem_euclid(pi)).collect();
        let un = unwrap_angles(&raw);
        for w in un.windows(2) {
            assert!((w[1] - w[0]).abs() < 0.5 * pi);
        }
        assert_relative_eq!(un[39] - un[0], 0.11 * 39.0, max_relative = 1e-9);
    }

    #[test]
    fn phase_diagram_boundary_interpolation() {
        let mk = |gamma: f64, tau: f64, net: f64| PhasePoint {
            gamma,
            tau_i: tau,
            converged: true,
            phase: if net < 0.0 {
                OperatingPhase::HeatEngine
            } else {
                OperatingPhase::Dissipator
            },
            eta: if net < 0.0 { 0.1 } else { 0.0 },
            net_work: net,
            net_work_se: 0.01,
            q_h: 1.0,
            q_c: -1.0,
            corner_q2: Some(quad(0.5, 1.0, 1.2, 0.6)),
        };
        let pts = vec![
            mk(0.2, 1.0, 0.4),
            mk(0.2, 3.0, -0.4),
            mk(0.2, 5.0, -0.8),
            mk(0.5, 1.0, 0.9),
            mk(0.5, 3.0, 0.3),
            mk(0.5, 5.0, -0.3),
        ];
        let pd = assemble_phase_diagram(pts, 0.5);
        assert_eq!(pd.boundary.len(), 2);
        assert_relative_eq!(pd.boundary[0].tau_i_star, 2.0, max_relative = 1e-12);
        assert_relative_eq!(pd.boundary[1].tau_i_star, 4.0, max_relative = 1e-12);
        assert!(pd.boundary[0].tau_i_estimate.unwrap() > 0.0);
    }

    #[test]
    fn phase_diagram_skips_unconverged_pairs() {
        let mut p1 = PhasePoint {
            gamma: 0.2,
            tau_i: 1.0,
            converged: true,
            phase: OperatingPhase::Dissipator,
            eta: 0.0,
            net_work: 0.5,
            net_work_se: 0.01,
            q_h: 1.0,
            q_c: -1.0,
            corner_q2: None,
        };
        let mut p2 = p1.clone();
        p2.tau_i = 3.0;
        p2.net_work = -0.5;
        p2.converged = false;
        p1.converged = true;
        let pd = assemble_phase_diagram(vec![p1, p2], 0.5);
        assert!(pd.boundary.is_empty());
    }

    proptest! {
        // R is invariant under uniform scaling of all four variances.
        #[test]
        fn ratio_r_scale_invariant(
            a in 0.1f64..5.0, b in 0.1f64..5.0,
            c in 0.1f64..5.0, d in 0.1f64..5.0,
            scale in 0.01f64..100.0,
        ) {
            let r1 = ratio_r(&quad(a, b, c, d)).unwrap();
            let r2 = ratio_r(&quad(scale * a, scale * b, scale * c, scale * d)).unwrap();
            prop_assert!((r1 - r2).abs() < 1e-10 * r1.abs().max(1.0));
        }

        // threshold is monotone in R and γ, antitone in Δω
        #[test]
        fn minimal_tau_i_monotonicity(
            gamma in 0.01f64..2.0,
            dw in 0.1f64..1.5,
            r in 0.0f64..0.95,
        ) {
            let base = minimal_tau_i(gamma, dw, r).unwrap();
            prop_assert!(minimal_tau_i(gamma * 1.1, dw, r).unwrap() >= base);
            prop_assert!(minimal_tau_i(gamma, dw * 1.1, r).unwrap() <= base);
            prop_assert!(minimal_tau_i(gamma, dw, (r + 0.01).min(0.99)).unwrap() >= base);
        }
    }
}
