//! Command-line driver: run, sweep, crosscheck and noise-selftest.
//!
//! Exit codes: 0 ok, 2 periodic steady state not reached, 3 run error.

use clap::{Args, Parser, Subcommand};
use otto_sln::config::{PropagatorKind, RunConfig};
use otto_sln::error::SimError;
use otto_sln::{ensemble, noise, output};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "otto-sln", version, about = "Stochastic trajectory simulation of a finite-time quantum Otto engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Run configuration (TOML)
    config: PathBuf,
    /// Override the run seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the trajectory count
    #[arg(long)]
    samples: Option<usize>,
    /// Output directory (default: config out_dir or ./out)
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override the propagator (gaussian | grid)
    #[arg(long)]
    propagator: Option<String>,
    /// Worker thread count (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Also write SVG quick-look plots
    #[arg(long)]
    plot: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configuration to its periodic steady state
    Run(CommonOpts),
    /// Run the parameter sweep configured in the [sweep] block
    Sweep(CommonOpts),
    /// Propagate shared noise through both propagators and compare moments
    Crosscheck(CommonOpts),
    /// Validate the colored-noise generator against the quadrature oracle
    NoiseSelftest {
        #[command(flatten)]
        common: CommonOpts,
        /// Number of sample paths
        #[arg(long, default_value_t = 2000)]
        paths: usize,
        /// Path horizon in units of 1/omega_0
        #[arg(long, default_value_t = 40.0)]
        horizon: f64,
        /// Dump the first sampled path as CSV (t, xi_c, xi_h)
        #[arg(long)]
        dump_noise: bool,
    },
}

fn load_config(opts: &CommonOpts) -> Result<RunConfig, SimError> {
    let text = std::fs::read_to_string(&opts.config)?;
    let mut cfg = RunConfig::from_toml(&text)?;
    if let Some(seed) = opts.seed {
        cfg.run.seed = seed;
    }
    if let Some(n) = opts.samples {
        cfg.run.n_samples = n;
    }
    if let Some(d) = &opts.out_dir {
        cfg.run.out_dir = Some(d.clone());
    }
    if let Some(p) = &opts.propagator {
        cfg.run.propagator = match p.as_str() {
            "gaussian" => PropagatorKind::Gaussian,
            "grid" => PropagatorKind::Grid,
            other => {
                return Err(SimError::invalid(format!(
                    "unknown propagator {other:?} (expected gaussian or grid)"
                )))
            }
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.run
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn install_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                SimError::NotConverged { .. } => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, SimError> {
    match cli.command {
        Command::Run(opts) => {
            install_threads(opts.threads);
            let cfg = load_config(&opts)?;
            let result = ensemble::run(&cfg)?;
            let dir = out_dir(&cfg);
            output::write_run_outputs(&dir, &cfg, &result, opts.plot)?;
            print_run_summary(&result);
            if result.converged() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!(
                    "PSS not reached within {} cycles (last change {:.3e})",
                    cfg.run.max_cycles, result.last_pss_change
                );
                Ok(ExitCode::from(2))
            }
        }
        Command::Sweep(opts) => {
            install_threads(opts.threads);
            let cfg = load_config(&opts)?;
            let sw = ensemble::sweep(&cfg)?;
            let dir = out_dir(&cfg);
            output::write_sweep_outputs(&dir, &cfg, &sw, opts.plot)?;
            let failures = sw.points.iter().filter(|p| p.outcome.is_err()).count();
            let unconverged = sw
                .points
                .iter()
                .filter(|p| matches!(&p.outcome, Ok(r) if !r.converged()))
                .count();
            println!(
                "sweep {}: {} points, {} failed, {} not converged -> {}",
                sw.kind,
                sw.points.len(),
                failures,
                unconverged,
                dir.display()
            );
            if failures > 0 {
                Ok(ExitCode::from(3))
            } else if unconverged > 0 {
                Ok(ExitCode::from(2))
            } else {
                Ok(ExitCode::SUCCESS)
            }
        }
        Command::Crosscheck(opts) => {
            install_threads(opts.threads);
            let cfg = load_config(&opts)?;
            let r = ensemble::crosscheck(&cfg)?;
            let dir = out_dir(&cfg);
            output::write_crosscheck(&dir, &r)?;
            println!(
                "crosscheck over {} trajectories: max relative moment deviation {:.3e}",
                r.n_trajectories, r.max_rel
            );
            if r.max_rel <= 1e-3 {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("deviation exceeds 1e-3");
                Ok(ExitCode::from(3))
            }
        }
        Command::NoiseSelftest {
            common,
            paths,
            horizon,
            dump_noise,
        } => {
            install_threads(common.threads);
            let cfg = load_config(&common)?;
            let pair = cfg.reservoirs.pair()?;
            let report = noise::selftest(
                &pair.cold,
                &pair.hot,
                paths,
                horizon,
                cfg.noise_dt(),
                cfg.run.seed,
            )?;
            let dir = out_dir(&cfg);
            let mut csv = format!("# config_hash={} seed={}\n", cfg.config_hash(), cfg.run.seed);
            csv.push_str("check,lag,estimate,se,oracle,z\n");
            for row in &report.rows {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{}",
                    row.label, row.lag, row.estimate, row.se, row.oracle, row.z
                );
                println!(
                    "{:<10} lag {:>6.3}  est {:>12.5e}  oracle {:>12.5e}  z {:+.2}",
                    row.label, row.lag, row.estimate, row.oracle, row.z
                );
            }
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("noise_selftest.csv"), csv)?;
            if dump_noise {
                let path = otto_sln::NoisePath::sample(
                    &pair.cold,
                    &pair.hot,
                    horizon,
                    cfg.noise_dt(),
                    cfg.run.seed,
                    0,
                )?;
                std::fs::write(
                    dir.join("noise_path.csv"),
                    output::noise_dump_csv(&cfg.config_hash(), cfg.run.seed, &path),
                )?;
            }
            if report.passed {
                println!("noise selftest passed");
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("noise selftest FAILED");
                Ok(ExitCode::from(3))
            }
        }
    }
}

fn print_run_summary(r: &ensemble::RunResult) {
    println!(
        "phase {} | eta {:.4} ± {:.4} | P {:.5} ± {:.5} | W_d {:.5} | W_I {:.5} (cl {:.5}, qm {:.5}) | Q_c {:.5} | Q_h {:.5}",
        r.report.phase,
        r.report.eta.mean,
        r.report.eta.se,
        r.report.power.mean,
        r.report.power.se,
        r.report.w_d.mean,
        r.report.w_i_cl.mean + r.report.w_i_qm.mean,
        r.report.w_i_cl.mean,
        r.report.w_i_qm.mean,
        r.report.q_c.mean,
        r.report.q_h.mean
    );
    println!(
        "first law residual {:.3e} ± {:.3e} | PSS cycle {:?} | {} samples ({} aborted) | {:.1}s",
        r.report.residual.mean,
        r.report.residual.se,
        r.pss_cycle,
        r.n_samples,
        r.aborted_trajectories,
        r.wall_seconds
    );
}
