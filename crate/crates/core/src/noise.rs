//! Colored Gaussian noise synthesis.
//!
//! Stationary real series with autocorrelation C(τ) = (1/π)∫ S_ξ(ω) cos(ωτ) dω
//! are generated by circulant/FFT spectral sampling: independent Gaussian
//! amplitudes per frequency bin, spectrum evaluated at the bin center, on a
//! circulant period of at least twice the requested horizon. Identical
//! (spec, horizon, dt, seed) inputs reproduce the identical series.

use crate::error::{Result, SimError};
use crate::reservoir::{BathLabel, ReservoirSpec};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use std::sync::Arc;

/// One sampled realization of the two colored processes ξ_c(t), ξ_h(t)
/// on the simulation time grid. Immutable after creation.
#[derive(Debug, Clone)]
pub struct NoisePath {
    pub dt: f64,
    pub values_c: Vec<f64>,
    pub values_h: Vec<f64>,
    pub seed: u64,
}

impl NoisePath {
    /// Sample both reservoir processes over `horizon` with independent RNG
    /// streams per reservoir.
    pub fn sample(
        cold: &ReservoirSpec,
        hot: &ReservoirSpec,
        horizon: f64,
        dt: f64,
        seed: u64,
        trajectory: u64,
    ) -> Result<NoisePath> {
        let values_c = sample_noise(cold, horizon, dt, seed, trajectory)?;
        let values_h = sample_noise(hot, horizon, dt, seed, trajectory)?;
        Ok(NoisePath {
            dt,
            values_c,
            values_h,
            seed,
        })
    }

    /// Piecewise-constant lookup: value of the sample covering time `t`.
    /// `t` may lie on a finer propagation grid than the noise grid.
    #[inline]
    pub fn value_c(&self, t: f64) -> f64 {
        self.values_c[self.index(t)]
    }

    #[inline]
    pub fn value_h(&self, t: f64) -> f64 {
        self.values_h[self.index(t)]
    }

    #[inline]
    fn index(&self, t: f64) -> usize {
        debug_assert!(t >= 0.0);
        let i = (t / self.dt) as usize;
        i.min(self.values_c.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values_c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values_c.is_empty()
    }
}

/// Derive a 32-byte RNG key from (run seed, trajectory index, reservoir label).
/// Hash-based so parallel trajectories get uncorrelated, reproducible streams.
fn derive_key(seed: u64, trajectory: u64, label: BathLabel) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(b"otto-sln/noise/v1");
    hasher.update(seed.to_le_bytes());
    hasher.update(trajectory.to_le_bytes());
    hasher.update([label.tag()]);
    hasher.finalize().into()
}

/// Synthesize one stationary Gaussian series for a single reservoir.
///
/// The circulant period is the next power of two with N·dt ≥ 2·horizon;
/// per-bin spectral weight w_j = S_ξ(ω_j)·Δω/π (midpoint evaluation).
pub fn sample_noise(
    spec: &ReservoirSpec,
    horizon: f64,
    dt: f64,
    seed: u64,
    trajectory: u64,
) -> Result<Vec<f64>> {
    let n_out = out_len(horizon, dt)?;
    let full = sample_noise_period(spec, horizon, dt, seed, trajectory)?;
    if full.is_empty() {
        return Ok(vec![0.0; n_out]);
    }
    Ok(full[..n_out].to_vec())
}

fn out_len(horizon: f64, dt: f64) -> Result<usize> {
    if !(horizon > 0.0) {
        return Err(SimError::domain(format!("horizon must be > 0, got {horizon}")));
    }
    if !(dt > 0.0) {
        return Err(SimError::domain(format!("dt must be > 0, got {dt}")));
    }
    // +1 so t = horizon itself is covered.
    Ok((horizon / dt).ceil() as usize + 1)
}

/// Synthesize the full circulant period backing `sample_noise` (diagnostic;
/// the period length is the next power of two with N·dt ≥ 2·horizon).
/// Returns an empty vector for γ = 0.
pub fn sample_noise_period(
    spec: &ReservoirSpec,
    horizon: f64,
    dt: f64,
    seed: u64,
    trajectory: u64,
) -> Result<Vec<f64>> {
    let n_out = out_len(horizon, dt)?;
    if dt > PI / spec.omega_cut {
        return Err(SimError::invalid(format!(
            "noise dt = {dt} does not resolve the cutoff (need dt <= pi/omega_cut = {:.4})",
            PI / spec.omega_cut
        )));
    }
    spec.validate()?;
    if spec.gamma == 0.0 {
        return Ok(Vec::new());
    }
    let n = (2 * n_out).next_power_of_two().max(16);
    let weights = bin_weights(spec, n, dt)?;

    let mut rng = ChaCha12Rng::from_seed(derive_key(seed, trajectory, spec.label));
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    for j in 1..n / 2 {
        let amp = 0.5 * n as f64 * weights[j].sqrt();
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        spectrum[j] = Complex64::new(amp * a, -amp * b);
        spectrum[n - j] = spectrum[j].conj();
    }
    // Nyquist bin carries half a bin width: real amplitude only.
    let a: f64 = rng.sample(StandardNormal);
    spectrum[n / 2] = Complex64::new(n as f64 * (0.5 * weights[n / 2]).sqrt() * a, 0.0);

    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(n);
    ifft.process(&mut spectrum);
    // rustfft leaves the inverse unnormalized; the 1/N joins the bin amplitudes.
    Ok(spectrum.iter().map(|z| z.re / n as f64).collect())
}

/// Per-bin spectral weights w_j = S̃(ω_j)·Δω/π for j ≤ N/2, where S̃ is the
/// alias-folded spectrum Σ_k S_ξ(|ω_j + 2kΩ_N|). Folding makes the sampled
/// series reproduce the continuum autocorrelation at grid lags; without it
/// the spectral mass above the sampling Nyquist Ω_N would be lost. Cached per
/// (spec, N, dt).
fn bin_weights(spec: &ReservoirSpec, n: usize, dt: f64) -> Result<Arc<Vec<f64>>> {
    use std::collections::HashMap;
    use std::sync::{Mutex, OnceLock};
    type Key = (u64, u64, u64, usize, u64);
    static CACHE: OnceLock<Mutex<HashMap<Key, Arc<Vec<f64>>>>> = OnceLock::new();

    let key: Key = (
        spec.beta.to_bits(),
        spec.gamma.to_bits(),
        spec.omega_cut.to_bits(),
        n,
        dt.to_bits(),
    );
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(w) = cache.lock().unwrap().get(&key) {
        return Ok(Arc::clone(w));
    }

    let period = n as f64 * dt;
    let d_omega = 2.0 * PI / period;
    let omega_nyq = PI / dt;
    // fold until the ω^{-3} tail past ~100 ω_cut is negligible
    let k_max = ((50.0 * spec.omega_cut / omega_nyq).ceil() as usize).clamp(2, 512);
    let mut w = vec![0.0f64; n / 2 + 1];
    for (j, slot) in w.iter_mut().enumerate().skip(1) {
        let omega_j = j as f64 * d_omega;
        let mut s = spec.noise_psd(omega_j)?;
        for k in 1..=k_max {
            let base = 2.0 * k as f64 * omega_nyq;
            s += spec.noise_psd(base - omega_j)? + spec.noise_psd(base + omega_j)?;
        }
        // Cannot be negative for S_ξ = J·(coth − 1/x); sampler precondition.
        assert!(s >= 0.0, "negative spectral weight at bin {j}");
        *slot = s * d_omega / PI;
    }
    let arc = Arc::new(w);
    cache.lock().unwrap().insert(key, Arc::clone(&arc));
    Ok(arc)
}

/// Unbiased ensemble estimate of C(lag) with standard error across paths.
/// Each path contributes its time-averaged lagged product; the lag is rounded
/// to the nearest grid multiple.
pub fn autocorrelation_estimate(paths: &[NoisePath], lag: f64, cold_series: bool) -> Result<(f64, f64)> {
    if paths.len() < 2 {
        return Err(SimError::domain("need at least 2 paths"));
    }
    let dt = paths[0].dt;
    // Stationarity makes C even in the lag; estimate at |lag| rounded to the grid.
    let m = (lag.abs() / dt).round() as usize;
    let mut per_path = Vec::with_capacity(paths.len());
    for p in paths {
        let v = if cold_series { &p.values_c } else { &p.values_h };
        if m >= v.len() {
            return Err(SimError::domain(format!(
                "lag {lag} exceeds path horizon {}",
                (v.len() - 1) as f64 * dt
            )));
        }
        let n = v.len() - m;
        let s: f64 = (0..n).map(|k| v[k] * v[k + m]).sum();
        per_path.push(s / n as f64);
    }
    Ok(mean_and_stderr(&per_path))
}

/// One row of the noise self-test table.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SelftestRow {
    pub label: String,
    pub lag: f64,
    pub estimate: f64,
    pub se: f64,
    pub oracle: f64,
    pub z: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SelftestReport {
    pub rows: Vec<SelftestRow>,
    pub passed: bool,
}

/// Compare sampled autocorrelations against the quadrature oracle at lags
/// {0, π, 2π}, check the sample mean and the ξ_c/ξ_h cross-correlation.
/// Everything must sit within 3 standard errors.
pub fn selftest(
    cold: &ReservoirSpec,
    hot: &ReservoirSpec,
    n_paths: usize,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<SelftestReport> {
    let paths: Vec<NoisePath> = (0..n_paths)
        .map(|i| NoisePath::sample(cold, hot, horizon, dt, seed, i as u64))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut passed = true;
    for (label, is_cold, spec) in [("xi_c", true, cold), ("xi_h", false, hot)] {
        for lag in [0.0, PI, 2.0 * PI] {
            let (est, se) = autocorrelation_estimate(&paths, lag, is_cold)?;
            let tau = (lag / dt).round() * dt;
            let oracle = spec.psd_autocorrelation(tau);
            let z = if se > 0.0 { (est - oracle) / se } else { 0.0 };
            passed &= z.abs() <= 3.0;
            rows.push(SelftestRow {
                label: label.into(),
                lag,
                estimate: est,
                se,
                oracle,
                z,
            });
        }
    }
    // sample mean of each series
    for (label, is_cold) in [("mean_xi_c", true), ("mean_xi_h", false)] {
        let means: Vec<f64> = paths
            .iter()
            .map(|p| {
                let v = if is_cold { &p.values_c } else { &p.values_h };
                v.iter().sum::<f64>() / v.len() as f64
            })
            .collect();
        let (m, se) = mean_and_stderr(&means);
        let z = if se > 0.0 { m / se } else { 0.0 };
        passed &= z.abs() <= 3.0;
        rows.push(SelftestRow {
            label: label.into(),
            lag: 0.0,
            estimate: m,
            se,
            oracle: 0.0,
            z,
        });
    }
    // independence of the two streams
    let cross: Vec<f64> = paths
        .iter()
        .map(|p| {
            p.values_c
                .iter()
                .zip(&p.values_h)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / p.values_c.len() as f64
        })
        .collect();
    let (m, se) = mean_and_stderr(&cross);
    let z = if se > 0.0 { m / se } else { 0.0 };
    passed &= z.abs() <= 3.0;
    rows.push(SelftestRow {
        label: "cross_ch".into(),
        lag: 0.0,
        estimate: m,
        se,
        oracle: 0.0,
        z,
    });
    Ok(SelftestReport { rows, passed })
}

/// Sample mean and its standard error.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::BathLabel;

    fn spec(gamma: f64) -> ReservoirSpec {
        ReservoirSpec::new(3.0, gamma, 30.0, BathLabel::Cold).unwrap()
    }

    fn hot_spec(gamma: f64) -> ReservoirSpec {
        ReservoirSpec::new(0.25, gamma, 30.0, BathLabel::Hot).unwrap()
    }

    #[test]
    fn zero_coupling_is_silent() {
        let v = sample_noise(&spec(0.0), 10.0, 0.01, 7, 0).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn same_seed_reproduces_bit_for_bit() {
        let a = sample_noise(&spec(0.05), 20.0, 0.01, 42, 3).unwrap();
        let b = sample_noise(&spec(0.05), 20.0, 0.01, 42, 3).unwrap();
        assert_eq!(a, b);
        let c = sample_noise(&spec(0.05), 20.0, 0.01, 43, 3).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_coarse_dt() {
        assert!(sample_noise(&spec(0.05), 10.0, 0.2, 1, 0).is_err());
    }

    #[test]
    fn sample_mean_is_zero_within_three_se() {
        let paths: Vec<NoisePath> = (0..400)
            .map(|i| NoisePath::sample(&spec(0.05), &hot_spec(0.05), 20.0, 0.01, 11, i).unwrap())
            .collect();
        let means: Vec<f64> = paths
            .iter()
            .map(|p| p.values_c.iter().sum::<f64>() / p.values_c.len() as f64)
            .collect();
        let (m, se) = mean_and_stderr(&means);
        assert!(m.abs() <= 3.0 * se, "mean {m} vs se {se}");
    }

    #[test]
    fn autocorrelation_matches_quadrature_oracle() {
        let s = spec(0.05);
        let paths: Vec<NoisePath> = (0..600)
            .map(|i| NoisePath::sample(&s, &hot_spec(0.05), 40.0, 0.01, 5, i).unwrap())
            .collect();
        for lag in [0.0, 2.0 * PI] {
            let (est, se) = autocorrelation_estimate(&paths, lag, true).unwrap();
            let tau = (lag / 0.01).round() * 0.01;
            let oracle = s.psd_autocorrelation(tau);
            assert!(
                (est - oracle).abs() <= 3.0 * se,
                "lag {lag}: est {est} oracle {oracle} se {se}"
            );
        }
    }

    #[test]
    fn autocorrelation_estimator_is_symmetric_in_lag() {
        let s = spec(0.05);
        let paths: Vec<NoisePath> = (0..4)
            .map(|i| NoisePath::sample(&s, &hot_spec(0.05), 20.0, 0.01, 5, i).unwrap())
            .collect();
        let (a, _) = autocorrelation_estimate(&paths, 1.0, true).unwrap();
        let (b, _) = autocorrelation_estimate(&paths, -1.0, true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lag_beyond_horizon_is_domain_error() {
        let s = spec(0.05);
        let paths: Vec<NoisePath> = (0..2)
            .map(|i| NoisePath::sample(&s, &hot_spec(0.05), 5.0, 0.01, 5, i).unwrap())
            .collect();
        assert!(autocorrelation_estimate(&paths, 50.0, true).is_err());
    }

    #[test]
    fn cold_and_hot_streams_are_independent() {
        let s_c = spec(0.05);
        let s_h = hot_spec(0.05);
        let paths: Vec<NoisePath> = (0..400)
            .map(|i| NoisePath::sample(&s_c, &s_h, 20.0, 0.01, 17, i).unwrap())
            .collect();
        let cross: Vec<f64> = paths
            .iter()
            .map(|p| {
                let n = p.values_c.len();
                p.values_c
                    .iter()
                    .zip(&p.values_h)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    / n as f64
            })
            .collect();
        let (m, se) = mean_and_stderr(&cross);
        assert!(m.abs() <= 3.0 * se, "cross-corr {m} vs se {se}");
    }

    // Periodogram over the full circulant period is an unbiased per-bin
    // estimator of the synthesized spectrum; check it against S_ξ below the cutoff.
    #[test]
    fn sample_psd_matches_target_below_cutoff() {
        let s = spec(0.05);
        let horizon = 20.0f64;
        let dt = 0.01f64;
        let n_paths = 150usize;
        let n_out = (horizon / dt).ceil() as usize + 1;
        let n = (2 * n_out).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let period = n as f64 * dt;
        let d_omega = 2.0 * PI / period;
        let mut acc = vec![0.0f64; n / 2];
        let mut acc2 = vec![0.0f64; n / 2];
        for i in 0..n_paths {
            let v = sample_noise_period(&s, horizon, dt, 23, i as u64).unwrap();
            assert_eq!(v.len(), n);
            let mut buf: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
            fft.process(&mut buf);
            for j in 1..n / 2 {
                // |X_j|²·2/N maps the bin back to S(ω_j)·Δω/π units.
                let p = buf[j].norm_sqr() * 2.0 / (n as f64 * n as f64);
                acc[j] += p;
                acc2[j] += p * p;
            }
        }
        let weights = bin_weights(&s, n, dt).unwrap();
        let mut checked = 0;
        for j in 1..n / 2 {
            let w = j as f64 * d_omega;
            if w > s.omega_cut {
                break;
            }
            let mean = acc[j] / n_paths as f64;
            let var = (acc2[j] / n_paths as f64 - mean * mean).max(0.0);
            let se = (var / n_paths as f64).sqrt();
            let bare = s.noise_psd(w).unwrap() * d_omega / PI;
            // generator reproduces its per-bin target ...
            assert!(
                (mean - weights[j]).abs() <= 3.0 * se + 1e-15,
                "bin {j} (omega {w:.3}): mean {mean:.3e} target {target:.3e} se {se:.3e}",
                target = weights[j]
            );
            // ... and below the cutoff the aliasing fold is a small correction
            // on top of S_xi itself
            assert!(
                weights[j] - bare <= 0.002 * bare + 6e-4 * d_omega / PI,
                "bin {j}: fold correction too large ({} vs bare {bare})",
                weights[j] - bare
            );
            checked += 1;
        }
        assert!(checked > 50);
    }
}
