//! Trajectory-ensemble orchestration: deterministic seeding, propagator
//! dispatch, per-cycle ledger reduction, PSS detection, sweeps and the
//! propagator cross-check.
//!
//! Trajectories are simulated over the full `max_cycles` horizon and reduced
//! in trajectory-index order, so results are bit-identical for a fixed
//! (config, seed) regardless of thread count. The periodic steady state is
//! detected post hoc from the sampled ensemble moments.

use crate::analysis::VarianceQuadruple;
use crate::config::{InitialState, PropagatorKind, RunConfig, SweepSpec};
use crate::error::{Result, SimError};
use crate::gaussian::{pss_covariance_estimate, GaussianPropagator, GaussianState};
use crate::grid::{DensityGrid, GridPropagator};
use crate::noise::NoisePath;
use crate::protocol::{Controls, CycleSchedule, StrokeBoundaries};
use crate::thermo::{
    detect_pss, engine_figures, rates, CycleComponents, CycleLedger, CycleMoments, EngineReport,
    Estimate, LedgerAccumulator,
};
use rayon::prelude::*;
use serde::Serialize;
use std::time::Instant;

/// Schedule bound to the propagation grid.
#[derive(Debug, Clone, Copy)]
pub struct BoundProtocol {
    pub schedule: CycleSchedule,
    pub boundaries: StrokeBoundaries,
    pub dt: f64,
    pub steps_per_cycle: usize,
    pub stride: usize,
    pub slots: usize,
    /// within-cycle step indices of the stroke corners A, B, C, D
    pub corner_steps: [usize; 4],
}

pub fn bind_protocol(schedule: &CycleSchedule, dt: f64, samples_per_cycle: usize) -> Result<BoundProtocol> {
    let snapped = schedule.snapped_to(dt)?;
    let b = snapped.stroke_boundaries();
    let steps_per_cycle = (b.period / dt).round() as usize;
    if steps_per_cycle == 0 {
        return Err(SimError::invalid("period shorter than dt"));
    }
    let stride = (steps_per_cycle / samples_per_cycle).max(1);
    let slots = steps_per_cycle.div_ceil(stride);
    let corner_steps = [
        0,
        (b.t_b / dt).round() as usize,
        (b.t_c / dt).round() as usize,
        (b.t_d / dt).round() as usize,
    ];
    Ok(BoundProtocol {
        schedule: snapped,
        boundaries: b,
        dt,
        steps_per_cycle,
        stride,
        slots,
        corner_steps,
    })
}

/// Sampled ensemble moment trace over the whole run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct MomentTable {
    pub times: Vec<f64>,
    pub means: Vec<[f64; 5]>,
    pub ses: Vec<[f64; 5]>,
}

/// Everything one run produces.
#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub config_hash: String,
    pub seed: u64,
    pub n_samples: usize,
    pub period: f64,
    pub report: EngineReport,
    pub ledgers: Vec<CycleLedger>,
    pub moments: MomentTable,
    pub pss_cycle: Option<u32>,
    /// Largest cycle-to-cycle relative moment change seen (diagnostic).
    pub last_pss_change: f64,
    pub aborted_trajectories: u32,
    pub wall_seconds: f64,
    /// Ensemble ⟨q²⟩ at the corners of the final cycle.
    pub corner_q2: VarianceQuadruple,
    /// Ensemble ⟨qp+pq⟩ (full anticommutator) at corners A and C of the final cycle.
    pub qp_corner_a: f64,
    pub qp_corner_c: f64,
    /// Power computed ignoring the coupling work, −W_d/T.
    pub power_ignoring_wi: Estimate,
}

impl RunResult {
    pub fn converged(&self) -> bool {
        self.pss_cycle.is_some()
    }
}

#[derive(Clone, Copy, Default)]
struct CornerSample {
    q2: [f64; 4],
    qp_a: f64,
    qp_c: f64,
}

struct TrajOutcome {
    rows: Vec<CycleComponents>,
    samples: Vec<[f64; 5]>,
    corners: Vec<CornerSample>,
    aborted: bool,
}

enum TrajSim {
    Gaussian {
        prop: GaussianPropagator,
        state: GaussianState,
    },
    Grid {
        prop: Box<GridPropagator>,
        state: Box<DensityGrid>,
    },
}

impl TrajSim {
    fn moments(&mut self) -> Result<[f64; 5]> {
        match self {
            TrajSim::Gaussian { state, .. } => {
                if !state.is_finite() {
                    return Err(SimError::TrajectoryAborted {
                        t: state.t,
                        reason: "non-finite moments".into(),
                    });
                }
                Ok(state.moments())
            }
            TrajSim::Grid { prop, state } => prop.observables(state),
        }
    }

    fn step<F: Fn(f64) -> Controls>(&mut self, ctrl: &F, xi_c: f64, xi_h: f64, dt: f64) -> Result<()> {
        match self {
            TrajSim::Gaussian { prop, state } => {
                prop.step(state, ctrl, xi_c, xi_h, dt);
                Ok(())
            }
            TrajSim::Grid { prop, state } => prop.step(state, ctrl, xi_c, xi_h),
        }
    }
}

/// Initial covariance (σ_qq, σ_pp, σ_qp) for every trajectory.
fn initial_covariance(config: &RunConfig, bound: &BoundProtocol) -> Result<[f64; 3]> {
    let pair = config.reservoirs.pair()?;
    let w0 = bound.schedule.controls_at(0.0).omega;
    let start = match config.run.initial_state {
        InitialState::Ground => GaussianState::ground(w0),
        InitialState::ThermalCold => GaussianState::thermal(w0, pair.cold.beta),
        InitialState::ThermalHot => GaussianState::thermal(w0, pair.hot.beta),
        InitialState::PssEstimate => {
            let prop = GaussianPropagator::new(pair, 0.0)?;
            let sched = bound.schedule;
            let ctrl = move |t: f64| sched.controls_at(t);
            let seed_state = GaussianState::thermal(w0, pair.cold.beta);
            let cov = pss_covariance_estimate(
                &prop,
                &ctrl,
                bound.boundaries.period,
                bound.dt,
                &seed_state,
                200,
                1e-9,
            );
            return Ok(cov);
        }
    };
    Ok([start.var_q, start.var_p, start.cov_qp])
}

fn build_sim(config: &RunConfig, init: [f64; 3]) -> Result<TrajSim> {
    let pair = config.reservoirs.pair()?;
    match config.run.propagator {
        PropagatorKind::Gaussian => Ok(TrajSim::Gaussian {
            prop: GaussianPropagator::new(pair, config.schedule.kappa)?,
            state: GaussianState::from_covariance(init[0], init[1], init[2])?,
        }),
        PropagatorKind::Grid => {
            let params = config.grid_params();
            let prop = GridPropagator::new(params, pair, config.schedule.kappa, config.run.dt)?;
            let state = DensityGrid::gaussian(params, 0.0, 0.0, init[0], init[1], init[2])?;
            Ok(TrajSim::Grid {
                prop: Box::new(prop),
                state: Box::new(state),
            })
        }
    }
}

fn simulate_trajectory(
    config: &RunConfig,
    bound: &BoundProtocol,
    init: [f64; 3],
    traj: u64,
) -> TrajOutcome {
    let cycles = config.run.max_cycles as usize;
    let aborted = TrajOutcome {
        rows: Vec::new(),
        samples: Vec::new(),
        corners: Vec::new(),
        aborted: true,
    };
    let pair = match config.reservoirs.pair() {
        Ok(p) => p,
        Err(_) => return aborted,
    };
    let horizon = bound.boundaries.period * cycles as f64 + bound.dt;
    let noise = match NoisePath::sample(
        &pair.cold,
        &pair.hot,
        horizon,
        config.noise_dt(),
        config.run.seed,
        traj,
    ) {
        Ok(n) => n,
        Err(_) => return aborted,
    };
    let mut sim = match build_sim(config, init) {
        Ok(s) => s,
        Err(_) => return aborted,
    };
    let sched = bound.schedule;
    let ctrl = move |t: f64| sched.controls_at(t);
    let dt = bound.dt;
    let total_steps = cycles * bound.steps_per_cycle;

    let mut acc = LedgerAccumulator::default();
    let mut rows = Vec::with_capacity(cycles);
    let mut samples = Vec::with_capacity(cycles * bound.slots);
    let mut corners = Vec::with_capacity(cycles);
    let mut corner = CornerSample::default();

    let mut record = |k: usize, m: &[f64; 5], corner: &mut CornerSample, samples: &mut Vec<[f64; 5]>| {
        let k_in = k % bound.steps_per_cycle;
        if k_in % bound.stride == 0 && k_in / bound.stride < bound.slots {
            samples.push(*m);
        }
        for (ci, &cs) in bound.corner_steps.iter().enumerate() {
            if k_in == cs {
                corner.q2[ci] = m[2];
                if ci == 0 {
                    corner.qp_a = 2.0 * m[4];
                }
                if ci == 2 {
                    corner.qp_c = 2.0 * m[4];
                }
            }
        }
    };

    let mut m_prev = match sim.moments() {
        Ok(m) => m,
        Err(_) => return aborted,
    };
    record(0, &m_prev, &mut corner, &mut samples);

    for k in 0..total_steps {
        let t = k as f64 * dt;
        // the step's noise value covers [t, t+dt); both trapezoid endpoints
        // of the work/heat integrands use it
        let t_mid = t + 0.5 * dt;
        let (xi_c, xi_h) = (noise.value_c(t_mid), noise.value_h(t_mid));
        let r_lo = rates(&ctrl(t), &pair, &m_prev, xi_c, xi_h);
        if sim.step(&ctrl, xi_c, xi_h, dt).is_err() {
            return aborted;
        }
        let m_next = match sim.moments() {
            Ok(m) => m,
            Err(_) => return aborted,
        };
        let r_hi = rates(&ctrl(t + dt), &pair, &m_next, xi_c, xi_h);
        acc.push_step(&r_lo, &r_hi, dt);

        let k1 = k + 1;
        if k1 % bound.steps_per_cycle == 0 {
            rows.push(acc.take_cycle());
            corners.push(corner);
            corner = CornerSample::default();
        }
        if k1 < total_steps {
            record(k1, &m_next, &mut corner, &mut samples);
        }
        m_prev = m_next;
    }
    TrajOutcome {
        rows,
        samples,
        corners,
        aborted: false,
    }
}

/// Execute a configured run.
pub fn run(config: &RunConfig) -> Result<RunResult> {
    let started = Instant::now();
    config.validate()?;
    let bound = bind_protocol(&config.schedule, config.run.dt, config.run.samples_per_cycle)?;
    let init = initial_covariance(config, &bound)?;
    let n = config.run.n_samples;
    let cycles = config.run.max_cycles as usize;
    let slots_total = cycles * bound.slots;

    let mut sum = vec![[0.0f64; 5]; slots_total];
    let mut sumsq = vec![[0.0f64; 5]; slots_total];
    let mut rows: Vec<Vec<CycleComponents>> = vec![Vec::with_capacity(n); cycles];
    let mut corner_sum = vec![CornerSample::default(); cycles];
    let mut n_ok = 0usize;
    let mut aborted = 0u32;

    const CHUNK: usize = 16;
    let mut idx = 0usize;
    while idx < n {
        let hi = (idx + CHUNK).min(n);
        let outs: Vec<TrajOutcome> = (idx..hi)
            .into_par_iter()
            .map(|i| simulate_trajectory(config, &bound, init, i as u64))
            .collect();
        for o in outs {
            if o.aborted {
                aborted += 1;
                continue;
            }
            n_ok += 1;
            for (slot, m) in o.samples.iter().enumerate() {
                for c in 0..5 {
                    sum[slot][c] += m[c];
                    sumsq[slot][c] += m[c] * m[c];
                }
            }
            for (cy, r) in o.rows.iter().enumerate() {
                rows[cy].push(*r);
            }
            for (cy, c) in o.corners.iter().enumerate() {
                for i in 0..4 {
                    corner_sum[cy].q2[i] += c.q2[i];
                }
                corner_sum[cy].qp_a += c.qp_a;
                corner_sum[cy].qp_c += c.qp_c;
            }
        }
        idx = hi;
    }

    if n_ok < 2 {
        return Err(SimError::Run(format!(
            "only {n_ok} trajectories finished ({aborted} aborted)"
        )));
    }
    if f64::from(aborted) > 0.01 * n as f64 {
        return Err(SimError::Run(format!(
            "{aborted} of {n} trajectories aborted (limit 1%)"
        )));
    }

    // ensemble moment statistics
    let inv = 1.0 / n_ok as f64;
    let mut means = vec![[0.0f64; 5]; slots_total];
    let mut ses = vec![[0.0f64; 5]; slots_total];
    for s in 0..slots_total {
        for c in 0..5 {
            let m = sum[s][c] * inv;
            means[s][c] = m;
            let var = ((sumsq[s][c] - sum[s][c] * sum[s][c] * inv) / (n_ok as f64 - 1.0)).max(0.0);
            ses[s][c] = (var * inv).sqrt();
        }
    }
    let mut history = Vec::with_capacity(cycles);
    for cy in 0..cycles {
        history.push(CycleMoments {
            means: means[cy * bound.slots..(cy + 1) * bound.slots].to_vec(),
            ses: ses[cy * bound.slots..(cy + 1) * bound.slots].to_vec(),
        });
    }
    let pss_cycle = detect_pss(&history, config.run.pss_tol);
    let last_pss_change = if cycles >= 2 {
        crate::thermo::pss_relative_change(&history[cycles - 2], &history[cycles - 1])
    } else {
        f64::NAN
    };

    let ledgers: Vec<CycleLedger> = rows
        .iter()
        .enumerate()
        .map(|(cy, r)| CycleLedger::from_rows(cy as u32 + 1, r))
        .collect();

    // PSS window: cycles from the detected index (1-based) to the end; slow
    // mean-energy transients can hide below the moment detector's statistical
    // floor, so additionally require the per-cycle first-law residual to be
    // consistent with zero at 3σ before a cycle enters the engine figures.
    // Fall back to the final cycle when not converged.
    let mut window_start = pss_cycle.map_or(cycles - 1, |k| k - 1);
    while window_start < cycles - 1 {
        let ledger = CycleLedger::from_rows(window_start as u32 + 1, &rows[window_start]);
        if ledger.residual.consistent_with_zero(3.0) {
            break;
        }
        window_start += 1;
    }
    let mut window_rows = Vec::with_capacity(n_ok);
    for traj in 0..n_ok {
        let mut acc = CycleComponents::default();
        let mut cnt = 0.0;
        for cy in window_start..cycles {
            acc.add_scaled(&rows[cy][traj], 1.0);
            cnt += 1.0;
        }
        acc.scale(1.0 / cnt);
        window_rows.push(acc);
    }
    let report = engine_figures(&window_rows, bound.boundaries.period, pss_cycle.is_some())?;
    let power_ignoring_wi = {
        let vals: Vec<f64> = window_rows
            .iter()
            .map(|r| -r.w_d / bound.boundaries.period)
            .collect();
        Estimate::from_samples(&vals)
    };

    let last = cycles - 1;
    let corner_q2 = VarianceQuadruple {
        q2_a: corner_sum[last].q2[0] * inv,
        q2_b: corner_sum[last].q2[1] * inv,
        q2_c: corner_sum[last].q2[2] * inv,
        q2_d: corner_sum[last].q2[3] * inv,
    };

    let times: Vec<f64> = (0..slots_total)
        .map(|s| {
            let cy = s / bound.slots;
            let slot = s % bound.slots;
            cy as f64 * bound.boundaries.period + (slot * bound.stride) as f64 * bound.dt
        })
        .collect();

    Ok(RunResult {
        config_hash: config.config_hash(),
        seed: config.run.seed,
        n_samples: n_ok,
        period: bound.boundaries.period,
        report,
        ledgers,
        moments: MomentTable { times, means, ses },
        pss_cycle: pss_cycle.map(|k| k as u32),
        last_pss_change,
        aborted_trajectories: aborted,
        wall_seconds: started.elapsed().as_secs_f64(),
        corner_q2,
        qp_corner_a: corner_sum[last].qp_a * inv,
        qp_corner_c: corner_sum[last].qp_c * inv,
        power_ignoring_wi,
    })
}

/// Result of the κ=0 dual-propagator consistency check.
#[derive(Debug, Clone, Serialize)]
pub struct CrosscheckResult {
    pub config_hash: String,
    pub seed: u64,
    pub n_trajectories: usize,
    /// max_t |grid − gaussian| / max_t |gaussian| per moment component
    pub per_moment_rel: [f64; 5],
    pub max_rel: f64,
}

/// Run both propagators on shared noise paths over one cycle and report the
/// maximum relative moment deviation.
pub fn crosscheck(config: &RunConfig) -> Result<CrosscheckResult> {
    config.validate()?;
    if config.schedule.kappa != 0.0 {
        return Err(SimError::invalid("crosscheck requires kappa = 0"));
    }
    let bound = bind_protocol(&config.schedule, config.run.dt, config.run.samples_per_cycle)?;
    let init = initial_covariance(config, &bound)?;
    let pair = config.reservoirs.pair()?;
    let sched = bound.schedule;
    let ctrl = move |t: f64| sched.controls_at(t);
    let dt = bound.dt;
    let params = config.grid_params();
    params.validate()?;

    let mut max_abs = [0.0f64; 5];
    let mut max_scale = [0.0f64; 5];
    for traj in 0..config.run.n_samples as u64 {
        let noise = NoisePath::sample(
            &pair.cold,
            &pair.hot,
            bound.boundaries.period + dt,
            config.noise_dt(),
            config.run.seed,
            traj,
        )?;
        let gp = GaussianPropagator::new(pair, 0.0)?;
        let mut gs = GaussianState::from_covariance(init[0], init[1], init[2])?;
        let mut grid_prop = GridPropagator::new(params, pair, 0.0, dt)?;
        let mut grid = DensityGrid::gaussian(params, 0.0, 0.0, init[0], init[1], init[2])?;
        for k in 0..=bound.steps_per_cycle {
            if k % bound.stride == 0 {
                let mg = gs.moments();
                let mr = grid_prop.observables(&grid)?;
                for c in 0..5 {
                    max_abs[c] = max_abs[c].max((mg[c] - mr[c]).abs());
                    max_scale[c] = max_scale[c].max(mg[c].abs());
                }
            }
            if k < bound.steps_per_cycle {
                let t = k as f64 * dt;
                let t_mid = t + 0.5 * dt;
                let (xc, xh) = (noise.value_c(t_mid), noise.value_h(t_mid));
                gp.step(&mut gs, &ctrl, xc, xh, dt);
                grid_prop.step(&mut grid, &ctrl, xc, xh)?;
            }
        }
    }
    let mut per = [0.0f64; 5];
    let mut worst = 0.0f64;
    for c in 0..5 {
        per[c] = max_abs[c] / max_scale[c].max(1e-12);
        worst = worst.max(per[c]);
    }
    Ok(CrosscheckResult {
        config_hash: config.config_hash(),
        seed: config.run.seed,
        n_trajectories: config.run.n_samples,
        per_moment_rel: per,
        max_rel: worst,
    })
}

/// One sweep grid point.
#[derive(Debug, Serialize)]
pub struct SweepPoint {
    pub labels: Vec<(String, f64)>,
    pub outcome: std::result::Result<RunResult, String>,
}

#[derive(Debug, Serialize)]
pub struct SweepResult {
    pub kind: String,
    pub points: Vec<SweepPoint>,
}

fn derive_point_seed(base: u64, index: u64) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(b"otto-sln/sweep/v1");
    h.update(base.to_le_bytes());
    h.update(index.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

/// Run every grid point of the configured sweep; individual failures are
/// recorded and the sweep continues.
pub fn sweep(config: &RunConfig) -> Result<SweepResult> {
    config.validate()?;
    let spec = config
        .sweep
        .clone()
        .ok_or_else(|| SimError::invalid("config has no [sweep] block"))?;
    let mut variants: Vec<(Vec<(String, f64)>, RunConfig)> = Vec::new();
    match &spec {
        SweepSpec::Gamma { values } => {
            for &g in values {
                let mut c = config.clone();
                c.reservoirs.cold.gamma = g;
                c.reservoirs.hot.gamma = g;
                variants.push((vec![("gamma".into(), g)], c));
            }
        }
        SweepSpec::TauI { values } => {
            for &v in values {
                let mut c = config.clone();
                c.schedule.tau_i = v;
                variants.push((vec![("tau_i".into(), v)], c));
            }
        }
        SweepSpec::Kappa { values } => {
            for &v in values {
                let mut c = config.clone();
                c.schedule.kappa = v;
                variants.push((vec![("kappa".into(), v)], c));
            }
        }
        SweepSpec::Period {
            values,
            tau_i_frac,
            tau_d_frac,
        } => {
            for &t in values {
                let mut c = config.clone();
                c.schedule.tau_i = tau_i_frac * t;
                c.schedule.tau_d = tau_d_frac * t;
                let rest = t - 4.0 * c.schedule.tau_i - 2.0 * c.schedule.tau_d
                    - c.schedule.hold_after_expansion;
                c.schedule.tau_r = 0.5 * rest;
                variants.push((vec![("period".into(), t)], c));
            }
        }
        SweepSpec::PhaseDiagram {
            gamma_values,
            tau_i_values,
        } => {
            for &g in gamma_values {
                for &ti in tau_i_values {
                    let mut c = config.clone();
                    c.reservoirs.cold.gamma = g;
                    c.reservoirs.hot.gamma = g;
                    c.schedule.tau_i = ti;
                    variants.push((vec![("gamma".into(), g), ("tau_i".into(), ti)], c));
                }
            }
        }
    }

    let kind = match &spec {
        SweepSpec::Gamma { .. } => "gamma",
        SweepSpec::TauI { .. } => "tau-i",
        SweepSpec::Kappa { .. } => "kappa",
        SweepSpec::Period { .. } => "period",
        SweepSpec::PhaseDiagram { .. } => "phase-diagram",
    };

    let mut points = Vec::with_capacity(variants.len());
    for (i, (labels, mut c)) in variants.into_iter().enumerate() {
        c.run.seed = derive_point_seed(config.run.seed, i as u64);
        c.sweep = None;
        let outcome = match c.validate().and_then(|()| run(&c)) {
            Ok(r) => Ok(r),
            Err(e) => Err(e.to_string()),
        };
        points.push(SweepPoint { labels, outcome });
    }
    Ok(SweepResult {
        kind: kind.into(),
        points,
    })
}
