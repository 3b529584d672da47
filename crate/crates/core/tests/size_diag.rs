// temporary diagnostic (removed before finalizing)
use otto_sln::config::*;
use otto_sln::protocol::{CycleSchedule, RampShape};

#[test]
fn measure_spreads() {
    for (ti, td, tr, bh, g, dw) in [
        (10.0, 5.0, 5.0, 0.25, 0.05, 1.0),  // Fig. 2
        (5.0, 5.0, 5.0, 0.25, 0.25, 1.0),   // Fig. 5b kappa-sweep base
        (2.0, 2.0, 1.0, 0.5, 0.2, 1.0),     // reduced unit-test protocol
    ] {
        let cfg = RunConfig {
            schedule: CycleSchedule { tau_i: ti, tau_d: td, tau_r: tr, delta_omega: dw, kappa: 0.0, hold_after_expansion: 0.0, ramp_shape: RampShape::Linear },
            reservoirs: ReservoirsConfig {
                cold: ReservoirSettings { beta: 3.0, gamma: g, omega_cut: 30.0 },
                hot: ReservoirSettings { beta: bh, gamma: g, omega_cut: 30.0 },
            },
            run: RunSection { propagator: PropagatorKind::Gaussian, n_samples: 60, max_cycles: 8, dt: 0.005, noise_dt: None, pss_tol: 1e-2, seed: 2, out_dir: None, samples_per_cycle: 256, initial_state: InitialState::PssEstimate },
            grid: None, sweep: None,
        };
        let r = otto_sln::ensemble::run(&cfg).unwrap();
        let mut q2max = 0.0f64;
        let mut p2max = 0.0f64;
        for m in &r.moments.means {
            q2max = q2max.max(m[2]);
            p2max = p2max.max(m[3]);
        }
        println!("ti={ti} td={td} bh={bh} g={g}: max q2 {q2max:.2} (sigma {:.2}), max p2 {p2max:.2} (sigma {:.2})", q2max.sqrt(), p2max.sqrt());
    }
}
