//! Split-operator propagation of the per-trajectory density on a 2-D grid.
//!
//! The density is stored in symmetric/antisymmetric position coordinates,
//! ρ(r,y) = ⟨r−y/2|ρ|r+y/2⟩, row-major over (r_i, y_j). In these coordinates
//! the trajectory superoperator splits into
//!
//!   kinetic      −i ∂_r∂_y            (diagonal after a 2-D FFT)
//!   potential    +i[V(r+y/2,t) − V(r−y/2,t)] = +i[ω²ry + κ(r³y + ry³/4)]
//!   noise        −i (λ_cξ_c + λ_hξ_h) y
//!   coupling     +i (Σ_α γ_α λ_α λ̇_α) r y
//!   decoherence  −(Σ_α γ_α λ_α²/β_α) y²
//!   friction     −(Σ_α γ_α λ_α²) y ∂_y   (generator of a y-rescaling)
//!
//! One step is the symmetric composition K/2 · D/2 · F · D/2 · K/2 with all
//! time-dependent coefficients evaluated at the step midpoint. The friction
//! substep is the exact contraction ρ(r,y) ← ρ(r, y·e^{−cΔt}) realized by
//! band-limited (trigonometric) interpolation along y. Hermiticity
//! ρ(r,y) = ρ*(r,−y) is re-imposed exactly after every step; the y = 0 row
//! (the position diagonal) is a fixed point of every substep, so the trace is
//! preserved to rounding.

use crate::error::{Result, SimError};
use crate::protocol::Controls;
use crate::reservoir::ReservoirPair;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Grid geometry: sizes must be powers of two.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridParams {
    pub n_r: usize,
    pub n_y: usize,
    pub l_r: f64,
    pub l_y: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams {
            n_r: 128,
            n_y: 128,
            l_r: 12.0,
            l_y: 12.0,
        }
    }
}

impl GridParams {
    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("n_r", self.n_r), ("n_y", self.n_y)] {
            if !n.is_power_of_two() || n < 8 {
                return Err(SimError::invalid(format!(
                    "{name} must be a power of two >= 8, got {n}"
                )));
            }
        }
        if !(self.l_r > 0.0 && self.l_y > 0.0) {
            return Err(SimError::invalid("grid half-extents must be positive"));
        }
        Ok(())
    }

    pub fn dr(&self) -> f64 {
        2.0 * self.l_r / self.n_r as f64
    }

    pub fn dy(&self) -> f64 {
        2.0 * self.l_y / self.n_y as f64
    }

    /// r_i = −L_r + i·Δr.
    pub fn r(&self, i: usize) -> f64 {
        (i as f64 - self.n_r as f64 / 2.0) * self.dr()
    }

    /// y_j = −L_y + j·Δy; y = 0 sits at j = n_y/2.
    pub fn y(&self, j: usize) -> f64 {
        (j as f64 - self.n_y as f64 / 2.0) * self.dy()
    }
}

/// Per-trajectory density matrix ρ(r_i, y_j), row-major in y.
#[derive(Debug, Clone)]
pub struct DensityGrid {
    pub params: GridParams,
    pub values: Vec<Complex64>,
    pub t: f64,
}

impl DensityGrid {
    /// Gaussian state with means (q̄, p̄) and central covariance
    /// (σ_qq, σ_pp, σ_qp): the Fourier transform of the Gaussian Wigner
    /// function over momentum, renormalized to unit trace on the grid.
    pub fn gaussian(
        params: GridParams,
        mean_q: f64,
        mean_p: f64,
        var_q: f64,
        var_p: f64,
        cov_qp: f64,
    ) -> Result<DensityGrid> {
        params.validate()?;
        if !(var_q > 0.0 && var_p > 0.0 && var_q * var_p - cov_qp * cov_qp > 0.0) {
            return Err(SimError::domain("covariance must be positive definite"));
        }
        let v_cond = var_p - cov_qp * cov_qp / var_q;
        let mut values = Vec::with_capacity(params.n_r * params.n_y);
        for i in 0..params.n_r {
            let r = params.r(i) - mean_q;
            let gq = (-r * r / (2.0 * var_q)).exp();
            let m_cond = mean_p + cov_qp / var_q * r;
            for j in 0..params.n_y {
                let y = params.y(j);
                let mag = gq * (-0.5 * v_cond * y * y).exp();
                let phase = -m_cond * y;
                values.push(Complex64::from_polar(mag, phase));
            }
        }
        let mut g = DensityGrid {
            params,
            values,
            t: 0.0,
        };
        let tr = g.trace();
        if !(tr > 0.0) {
            return Err(SimError::domain("state does not fit on the grid"));
        }
        let inv = 1.0 / tr;
        for v in &mut g.values {
            *v *= inv;
        }
        Ok(g)
    }

    pub fn ground(params: GridParams, omega: f64) -> Result<DensityGrid> {
        DensityGrid::gaussian(params, 0.0, 0.0, 0.5 / omega, 0.5 * omega, 0.0)
    }

    pub fn thermal(params: GridParams, omega: f64, beta: f64) -> Result<DensityGrid> {
        let c = 0.5 / (0.5 * omega * beta).tanh();
        DensityGrid::gaussian(params, 0.0, 0.0, c / omega, c * omega, 0.0)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.values[i * self.params.n_y + j]
    }

    /// Δr·Σ_i ρ(r_i, 0); the y = 0 column is the position-space diagonal.
    pub fn trace(&self) -> f64 {
        let j0 = self.params.n_y / 2;
        let mut s = 0.0;
        for i in 0..self.params.n_r {
            s += self.at(i, j0).re;
        }
        s * self.params.dr()
    }

    /// |ρ| integrated over the outer 10% frame of the grid.
    pub fn boundary_mass(&self) -> f64 {
        let (nr, ny) = (self.params.n_r, self.params.n_y);
        let (br, by) = (nr.div_ceil(10), ny.div_ceil(10));
        let mut s = 0.0;
        for i in 0..nr {
            for j in 0..ny {
                if i < br || i >= nr - br || j < by || j >= ny - by {
                    s += self.at(i, j).norm();
                }
            }
        }
        s * self.params.dr() * self.params.dy()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Max |ρ(r,y) − ρ*(r,−y)| over the grid.
    pub fn hermiticity_defect(&self) -> f64 {
        let ny = self.params.n_y;
        let mut worst = 0.0f64;
        for i in 0..self.params.n_r {
            for j in 0..ny {
                let jm = (ny - j) % ny;
                let d = (self.at(i, j) - self.at(i, jm).conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }
}

/// Split-operator stepper; owns FFT plans and scratch, one per trajectory.
pub struct GridPropagator {
    pub params: GridParams,
    pub reservoirs: ReservoirPair,
    pub kappa: f64,
    pub dt: f64,
    fft_y: Arc<dyn Fft<f64>>,
    ifft_y: Arc<dyn Fft<f64>>,
    fft_r: Arc<dyn Fft<f64>>,
    ifft_r: Arc<dyn Fft<f64>>,
    /// exp(+i k_r k_y dt/2) in the [i][j] spectral layout.
    kin_half: Vec<Complex64>,
    k_y: Vec<f64>,
    y: Vec<f64>,
    y3: Vec<f64>,
    r: Vec<f64>,
    r3: Vec<f64>,
    /// cached friction interpolation matrix for the last contraction factor
    friction_scale: f64,
    friction_matrix: Vec<Complex64>,
    transpose_buf: Vec<Complex64>,
    fft_scratch: Vec<Complex64>,
    row_buf: Vec<Complex64>,
    /// steps between NaN/boundary-mass checks
    pub check_stride: usize,
    steps_done: usize,
}

fn fft_freqs(n: usize, delta: f64) -> Vec<f64> {
    let mut k = vec![0.0; n];
    for (m, slot) in k.iter_mut().enumerate() {
        let s = if m < n / 2 { m as f64 } else { m as f64 - n as f64 };
        *slot = 2.0 * std::f64::consts::PI * s / (n as f64 * delta);
    }
    k
}

impl GridPropagator {
    pub fn new(params: GridParams, reservoirs: ReservoirPair, kappa: f64, dt: f64) -> Result<Self> {
        params.validate()?;
        if !(dt > 0.0) {
            return Err(SimError::invalid(format!("dt must be > 0, got {dt}")));
        }
        if kappa < 0.0 {
            return Err(SimError::invalid("kappa must be >= 0"));
        }
        let mut planner = FftPlanner::new();
        let fft_y = planner.plan_fft_forward(params.n_y);
        let ifft_y = planner.plan_fft_inverse(params.n_y);
        let fft_r = planner.plan_fft_forward(params.n_r);
        let ifft_r = planner.plan_fft_inverse(params.n_r);

        let k_r = fft_freqs(params.n_r, params.dr());
        let k_y = fft_freqs(params.n_y, params.dy());
        let mut kin_half = Vec::with_capacity(params.n_r * params.n_y);
        for kr in &k_r {
            for ky in &k_y {
                kin_half.push(Complex64::from_polar(1.0, 0.5 * dt * kr * ky));
            }
        }
        let y: Vec<f64> = (0..params.n_y).map(|j| params.y(j)).collect();
        let y3: Vec<f64> = y.iter().map(|v| v * v * v).collect();
        let r: Vec<f64> = (0..params.n_r).map(|i| params.r(i)).collect();
        let r3: Vec<f64> = r.iter().map(|v| v * v * v).collect();
        let scratch_len = fft_y
            .get_inplace_scratch_len()
            .max(fft_r.get_inplace_scratch_len())
            .max(ifft_y.get_inplace_scratch_len())
            .max(ifft_r.get_inplace_scratch_len());
        Ok(GridPropagator {
            params,
            reservoirs,
            kappa,
            dt,
            fft_y,
            ifft_y,
            fft_r,
            ifft_r,
            kin_half,
            k_y,
            y,
            y3,
            r,
            r3,
            friction_scale: 1.0,
            friction_matrix: Vec::new(),
            transpose_buf: vec![Complex64::default(); params.n_r * params.n_y],
            fft_scratch: vec![Complex64::default(); scratch_len],
            row_buf: vec![Complex64::default(); params.n_y],
            check_stride: 25,
            steps_done: 0,
        })
    }

    /// One Strang step; aborts the trajectory on NaN or boundary overflow.
    pub fn step<F>(&mut self, g: &mut DensityGrid, controls: &F, xi_c: f64, xi_h: f64) -> Result<()>
    where
        F: Fn(f64) -> Controls,
    {
        debug_assert_eq!(g.params, self.params);
        let dt = self.dt;
        let c = controls(g.t + 0.5 * dt);

        self.half_kinetic(g);
        self.diagonal(g, &c, xi_c, xi_h, 0.5 * dt);
        self.friction(g, &c, dt);
        self.diagonal(g, &c, xi_c, xi_h, 0.5 * dt);
        self.half_kinetic(g);
        symmetrize(g);

        g.t += dt;
        self.steps_done += 1;
        if self.steps_done % self.check_stride == 0 {
            self.validate_state(g)?;
        }
        Ok(())
    }

    pub fn validate_state(&self, g: &DensityGrid) -> Result<()> {
        if !g.is_finite() {
            return Err(SimError::TrajectoryAborted {
                t: g.t,
                reason: "NaN in density grid".into(),
            });
        }
        let bm = g.boundary_mass();
        if bm >= 1e-4 {
            return Err(SimError::GridOverflow(format!(
                "boundary mass {bm:.3e} at t = {:.3}",
                g.t
            )));
        }
        Ok(())
    }

    fn half_kinetic(&mut self, g: &mut DensityGrid) {
        self.fft2(&mut g.values, true);
        for (v, ph) in g.values.iter_mut().zip(&self.kin_half) {
            *v *= ph;
        }
        self.fft2(&mut g.values, false);
    }

    /// In-place 2-D FFT in the [i][j] layout (rows = r, columns = y).
    fn fft2(&mut self, data: &mut [Complex64], forward: bool) {
        let (nr, ny) = (self.params.n_r, self.params.n_y);
        let plan_y = if forward { &self.fft_y } else { &self.ifft_y };
        let plan_r = if forward { &self.fft_r } else { &self.ifft_r };
        for row in data.chunks_exact_mut(ny) {
            plan_y.process_with_scratch(row, &mut self.fft_scratch);
        }
        transpose(data, &mut self.transpose_buf, nr, ny);
        for row in self.transpose_buf.chunks_exact_mut(nr) {
            plan_r.process_with_scratch(row, &mut self.fft_scratch);
        }
        transpose(&self.transpose_buf, data, ny, nr);
        if !forward {
            let norm = 1.0 / (nr * ny) as f64;
            for v in data.iter_mut() {
                *v *= norm;
            }
        }
    }

    /// All (r,y)-diagonal factors over a substep of length `tau`.
    fn diagonal(&mut self, g: &mut DensityGrid, c: &Controls, xi_c: f64, xi_h: f64, tau: f64) {
        let res = &self.reservoirs;
        let shift = res.cold.gamma * c.lambda_c * c.lambda_c_dot
            + res.hot.gamma * c.lambda_h * c.lambda_h_dot;
        let diff = res.cold.gamma * c.lambda_c * c.lambda_c / res.cold.beta
            + res.hot.gamma * c.lambda_h * c.lambda_h / res.hot.beta;
        let cw = (c.omega * c.omega + shift) * tau;
        let ck = self.kappa * tau;
        let cx = (c.lambda_c * xi_c + c.lambda_h * xi_h) * tau;
        let cd = diff * tau;

        // per-column decoherence decay
        let ny = self.params.n_y;
        for j in 0..ny {
            let yj = self.y[j];
            self.row_buf[j] = Complex64::new((-cd * yj * yj).exp(), 0.0);
        }
        for i in 0..self.params.n_r {
            let a = cw * self.r[i] + ck * self.r3[i] - cx;
            let b = 0.25 * ck * self.r[i];
            let row = &mut g.values[i * ny..(i + 1) * ny];
            for j in 0..ny {
                let phase = a * self.y[j] + b * self.y3[j];
                let (s, cph) = phase.sin_cos();
                row[j] *= self.row_buf[j].re * Complex64::new(cph, s);
            }
        }
    }

    /// Exact y-contraction ρ(r,y) ← ρ(r, s·y), s = exp(−Σγλ²·dt), by
    /// trigonometric interpolation along y.
    fn friction(&mut self, g: &mut DensityGrid, c: &Controls, dt: f64) {
        let res = &self.reservoirs;
        let damp = res.cold.gamma * c.lambda_c * c.lambda_c
            + res.hot.gamma * c.lambda_h * c.lambda_h;
        if damp == 0.0 {
            return;
        }
        let s = (-damp * dt).exp();
        if (s - self.friction_scale).abs() > 1e-15 || self.friction_matrix.is_empty() {
            self.build_friction_matrix(s);
            self.friction_scale = s;
        }
        let ny = self.params.n_y;
        for i in 0..self.params.n_r {
            let row = &mut g.values[i * ny..(i + 1) * ny];
            self.row_buf.copy_from_slice(row);
            self.fft_y
                .process_with_scratch(&mut self.row_buf, &mut self.fft_scratch);
            for (j, out) in row.iter_mut().enumerate() {
                let e = &self.friction_matrix[j * ny..(j + 1) * ny];
                let mut acc = Complex64::default();
                for (m, coeff) in e.iter().enumerate() {
                    acc += coeff * self.row_buf[m];
                }
                *out = acc;
            }
        }
    }

    /// E[j][m] = (−1)^m e^{i k̃_m · s·y_j}/n_y; the (−1)^m accounts for the
    /// y-grid origin sitting at index n_y/2, the Nyquist mode is a cosine.
    fn build_friction_matrix(&mut self, s: f64) {
        let ny = self.params.n_y;
        self.friction_matrix.clear();
        self.friction_matrix.reserve(ny * ny);
        let inv = 1.0 / ny as f64;
        for j in 0..ny {
            let target = s * self.y[j];
            for (m, km) in self.k_y.iter().enumerate() {
                let v = if m == ny / 2 {
                    Complex64::new((km.abs() * target).cos(), 0.0)
                } else {
                    Complex64::from_polar(1.0, km * target)
                };
                let sign = if m % 2 == 0 { inv } else { -inv };
                self.friction_matrix.push(v * sign);
            }
        }
    }

    /// Raw moments (⟨q⟩, ⟨p⟩, ⟨q²⟩, ⟨p²⟩, ⟨qp+pq⟩/2). Position moments read
    /// the y = 0 column; momentum moments use spectral differentiation in y
    /// at y = 0 (the ∂_r cross terms integrate to zero).
    pub fn observables(&mut self, g: &DensityGrid) -> Result<[f64; 5]> {
        let (nr, ny) = (self.params.n_r, self.params.n_y);
        let j0 = ny / 2;
        let dr = self.params.dr();

        let mut q1 = 0.0;
        let mut q2 = 0.0;
        let mut imag_resid = 0.0f64;
        for i in 0..nr {
            let v = g.at(i, j0);
            imag_resid = imag_resid.max(v.im.abs());
            q1 += self.r[i] * v.re;
            q2 += self.r[i] * self.r[i] * v.re;
        }
        q1 *= dr;
        q2 *= dr;

        // sign flags (−1)^m evaluate the interpolant at y = 0 (index n_y/2)
        let mut p1 = Complex64::default();
        let mut p2 = Complex64::default();
        let mut qp = Complex64::default();
        for i in 0..nr {
            self.row_buf
                .copy_from_slice(&g.values[i * ny..(i + 1) * ny]);
            self.fft_y
                .process_with_scratch(&mut self.row_buf, &mut self.fft_scratch);
            let mut d1 = Complex64::default();
            let mut d2 = Complex64::default();
            for (m, km) in self.k_y.iter().enumerate() {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                let z = self.row_buf[m] * sign;
                if m != ny / 2 {
                    d1 += z * Complex64::new(0.0, *km);
                }
                d2 += z * (-km * km);
            }
            let inv = 1.0 / ny as f64;
            d1 *= inv;
            d2 *= inv;
            // ⟨p⟩ integrand i∂_yρ; ⟨p²⟩ integrand −∂²_yρ
            p1 += Complex64::new(0.0, 1.0) * d1;
            p2 -= d2;
            qp += Complex64::new(0.0, 1.0) * d1 * self.r[i];
        }
        p1 *= dr;
        p2 *= dr;
        qp *= dr;
        let scale = [q2.abs(), p2.re.abs(), 1.0]
            .into_iter()
            .fold(1.0f64, f64::max);
        let resid = imag_resid.max(p1.im.abs()).max(p2.im.abs()).max(qp.im.abs());
        if resid > 1e-8 * scale {
            return Err(SimError::Run(format!(
                "imaginary residue {resid:.3e} in grid observables at t = {:.3}",
                g.t
            )));
        }
        Ok([q1, p1.re, q2, p2.re, qp.re])
    }

    /// Matrix element ρ_nm = ∬ φ_n(r−y/2) ρ(r,y) φ_m(r+y/2) dr dy in the
    /// harmonic eigenbasis at `omega_ref`.
    pub fn project_fock(
        &self,
        g: &DensityGrid,
        n: usize,
        m: usize,
        omega_ref: f64,
    ) -> Result<Complex64> {
        let mat = self.fock_matrix(g, n.max(m), omega_ref)?;
        Ok(mat[n * (n.max(m) + 1) + m])
    }

    /// All matrix elements ρ_nm for n,m ≤ n_max (row-major, size (n_max+1)²).
    pub fn fock_matrix(&self, g: &DensityGrid, n_max: usize, omega_ref: f64) -> Result<Vec<Complex64>> {
        if !(omega_ref > 0.0) {
            return Err(SimError::domain("omega_ref must be positive"));
        }
        // classical turning point of the highest basis state must fit the grid
        let turn = ((2 * n_max + 1) as f64 / omega_ref).sqrt();
        if turn > 0.9 * self.params.l_r {
            return Err(SimError::domain(format!(
                "Fock basis n_max = {n_max} extends past the grid (turning point {turn:.2})"
            )));
        }
        let nb = n_max + 1;
        let (nr, ny) = (self.params.n_r, self.params.n_y);
        let mut out = vec![Complex64::default(); nb * nb];
        let mut phi_a = vec![0.0f64; nb];
        let mut phi_b = vec![0.0f64; nb];
        for i in 0..nr {
            for j in 0..ny {
                let rho = g.at(i, j);
                if rho.norm_sqr() < 1e-36 {
                    continue;
                }
                let a = self.r[i] - 0.5 * self.y[j];
                let b = self.r[i] + 0.5 * self.y[j];
                hermite_functions(a, omega_ref, &mut phi_a);
                hermite_functions(b, omega_ref, &mut phi_b);
                for n in 0..nb {
                    let w = phi_a[n] * rho;
                    for m in 0..nb {
                        out[n * nb + m] += w * phi_b[m];
                    }
                }
            }
        }
        let cell = self.params.dr() * self.params.dy();
        for v in &mut out {
            *v *= cell;
        }
        Ok(out)
    }
}

/// Harmonic-oscillator eigenfunctions φ_0..φ_{n_max} at position x, frequency ω
/// (ħ = m = 1), by the stable three-term recurrence.
fn hermite_functions(x: f64, omega: f64, out: &mut [f64]) {
    let u = omega.sqrt() * x;
    let g = (omega / std::f64::consts::PI).powf(0.25) * (-0.5 * u * u).exp();
    out[0] = g;
    if out.len() > 1 {
        out[1] = std::f64::consts::SQRT_2 * u * g;
    }
    for n in 1..out.len().saturating_sub(1) {
        out[n + 1] = ((2.0 / (n as f64 + 1.0)).sqrt() * u * out[n])
            - ((n as f64 / (n as f64 + 1.0)).sqrt() * out[n - 1]);
    }
}

/// Re-impose ρ(r,y) = ρ*(r,−y) exactly (pure rounding cleanup; every substep
/// commutes with the symmetry in exact arithmetic).
fn symmetrize(g: &mut DensityGrid) {
    let ny = g.params.n_y;
    for i in 0..g.params.n_r {
        let row = &mut g.values[i * ny..(i + 1) * ny];
        row[0] = Complex64::new(row[0].re, 0.0);
        row[ny / 2] = Complex64::new(row[ny / 2].re, 0.0);
        for j in 1..ny / 2 {
            let a = row[j];
            let b = row[ny - j];
            let avg = 0.5 * (a + b.conj());
            row[j] = avg;
            row[ny - j] = avg.conj();
        }
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for i in 0..rows {
        for j in 0..cols {
            dst[j * rows + i] = src[i * cols + j];
        }
    }
}
