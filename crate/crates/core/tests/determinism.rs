//! Reproducibility: identical config and seed must reproduce every output
//! byte, independent of worker thread count; standard errors scale as 1/√n.

use otto_sln::config::{
    InitialState, PropagatorKind, ReservoirSettings, ReservoirsConfig, RunConfig, RunSection,
};
use otto_sln::protocol::{CycleSchedule, RampShape};
use otto_sln::{ensemble, output};

fn small_config(seed: u64, n: usize) -> RunConfig {
    RunConfig {
        schedule: CycleSchedule {
            tau_i: 2.0,
            tau_d: 2.0,
            tau_r: 2.0,
            delta_omega: 1.0,
            kappa: 0.0,
            hold_after_expansion: 0.0,
            ramp_shape: RampShape::Linear,
        },
        reservoirs: ReservoirsConfig {
            cold: ReservoirSettings {
                beta: 3.0,
                gamma: 0.2,
                omega_cut: 30.0,
            },
            hot: ReservoirSettings {
                beta: 0.25,
                gamma: 0.2,
                omega_cut: 30.0,
            },
        },
        run: RunSection {
            propagator: PropagatorKind::Gaussian,
            n_samples: n,
            max_cycles: 4,
            dt: 0.01,
            noise_dt: None,
            pss_tol: 5e-2,
            seed,
            out_dir: None,
            samples_per_cycle: 32,
            initial_state: InitialState::PssEstimate,
        },
        grid: None,
        sweep: None,
    }
}

fn run_outputs(cfg: &RunConfig, threads: usize) -> Vec<(String, Vec<u8>)> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap();
    let result = pool.install(|| ensemble::run(cfg)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    output::write_run_outputs(dir.path(), cfg, &result, false).unwrap();
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .ends_with(".csv")
        })
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn identical_seed_reproduces_csv_bytes_across_thread_counts() {
    let cfg = small_config(42, 24);
    let a = run_outputs(&cfg, 1);
    let b = run_outputs(&cfg, 1);
    let c = run_outputs(&cfg, 4);
    assert_eq!(a.len(), 4);
    for ((na, da), ((nb, db), (nc, dc))) in a.iter().zip(b.iter().zip(c.iter())) {
        assert_eq!(na, nb);
        assert!(da == db, "{na} differs between identical runs");
        assert_eq!(na, nc);
        assert!(da == dc, "{na} differs across thread counts");
    }
    // a different seed must actually change the numbers
    let d = run_outputs(&small_config(43, 24), 1);
    assert!(a.iter().zip(&d).any(|((_, da), (_, dd))| da != dd));
}

#[test]
fn standard_errors_shrink_like_sqrt_n() {
    // disjoint seeds, 4x the samples -> roughly half the standard error
    let se_of = |seed: u64, n: usize| {
        let r = ensemble::run(&small_config(seed, n)).unwrap();
        r.report.q_h.se
    };
    let se_small: f64 = (0..4).map(|k| se_of(100 + k, 40)).sum::<f64>() / 4.0;
    let se_big: f64 = (0..4).map(|k| se_of(200 + k, 160)).sum::<f64>() / 4.0;
    let ratio = se_small / se_big;
    assert!(
        (1.4..=2.9).contains(&ratio),
        "SE ratio {ratio} not consistent with 1/sqrt(n)"
    );
}

#[test]
fn sweep_reruns_are_byte_identical() {
    let mut cfg = small_config(7, 12);
    cfg.sweep = Some(otto_sln::config::SweepSpec::Gamma {
        values: vec![0.1, 0.3],
    });
    let render = |cfg: &RunConfig| {
        let sw = ensemble::sweep(cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        output::write_sweep_outputs(dir.path(), cfg, &sw, false).unwrap();
        std::fs::read(dir.path().join("sweep.csv")).unwrap()
    };
    assert_eq!(render(&cfg), render(&cfg));
}
