//! CSV table and SVG quick-look emission.
//!
//! Every table starts with a `# config_hash=… seed=…` provenance line.
//! Floats are written with Rust's shortest round-trip formatting, so a rerun
//! with the same config and seed reproduces every file byte for byte.

use crate::analysis::{self, PhaseDiagram};
use crate::config::RunConfig;
use crate::ensemble::{CrosscheckResult, RunResult, SweepResult};
use crate::error::Result;
use std::fmt::Write as _;
use std::path::Path;

fn provenance(hash: &str, seed: u64) -> String {
    format!("# config_hash={hash} seed={seed}\n")
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, content)?;
    Ok(())
}

pub fn write_run_outputs(dir: &Path, config: &RunConfig, r: &RunResult, plot: bool) -> Result<()> {
    write_file(&dir.join("ledger.csv"), &ledger_csv(r))?;
    write_file(&dir.join("moments.csv"), &moments_csv(r))?;
    write_file(&dir.join("summary.csv"), &summary_csv(config, r))?;
    write_file(&dir.join("entropy.csv"), &entropy_csv(r))?;
    // timing is inherently non-reproducible; keep it out of the CSVs
    write_file(
        &dir.join("timing.log"),
        &format!("wall_seconds={}
n_samples={}
", r.wall_seconds, r.n_samples),
    )?;
    if plot {
        write_file(&dir.join("moments.svg"), &moments_svg(r))?;
    }
    Ok(())
}

fn ledger_csv(r: &RunResult) -> String {
    let mut s = provenance(&r.config_hash, r.seed);
    s.push_str("cycle,w_d,w_d_se,w_i_cl,w_i_cl_se,w_i_qm,w_i_qm_se,q_c,q_c_se,q_h,q_h_se,net_work,net_work_se,residual,residual_se,phase\n");
    for l in &r.ledgers {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            l.cycle_index,
            l.w_d.mean,
            l.w_d.se,
            l.w_i_cl.mean,
            l.w_i_cl.se,
            l.w_i_qm.mean,
            l.w_i_qm.se,
            l.q_c.mean,
            l.q_c.se,
            l.q_h.mean,
            l.q_h.se,
            l.net_work.mean,
            l.net_work.se,
            l.residual.mean,
            l.residual.se,
            l.phase
        );
    }
    s
}

fn moments_csv(r: &RunResult) -> String {
    let mut s = provenance(&r.config_hash, r.seed);
    s.push_str("t,mean_q,mean_q_se,mean_p,mean_p_se,q2,q2_se,p2,p2_se,qp_sym,qp_sym_se\n");
    for (i, t) in r.moments.times.iter().enumerate() {
        let m = r.moments.means[i];
        let e = r.moments.ses[i];
        let _ = writeln!(
            s,
            "{t},{},{},{},{},{},{},{},{},{},{}",
            m[0], e[0], m[1], e[1], m[2], e[2], m[3], e[3], m[4], e[4]
        );
    }
    s
}

fn summary_csv(config: &RunConfig, r: &RunResult) -> String {
    let mut s = provenance(&r.config_hash, r.seed);
    s.push_str("eta,eta_se,power,power_se,power_ignoring_wi,power_ignoring_wi_se,eta_ref,eta_ref_se,phase,w_d,w_i_cl,w_i_qm,q_c,q_h,net_work,residual,residual_se,pss_cycle,converged,n_samples,aborted,period,dt\n");
    let rep = &r.report;
    let _ = writeln!(
        s,
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        rep.eta.mean,
        rep.eta.se,
        rep.power.mean,
        rep.power.se,
        r.power_ignoring_wi.mean,
        r.power_ignoring_wi.se,
        rep.eta_ref.mean,
        rep.eta_ref.se,
        rep.phase,
        rep.w_d.mean,
        rep.w_i_cl.mean,
        rep.w_i_qm.mean,
        rep.q_c.mean,
        rep.q_h.mean,
        rep.net_work.mean,
        rep.residual.mean,
        rep.residual.se,
        r.pss_cycle.map_or(-1i64, |c| c as i64),
        r.converged(),
        r.n_samples,
        r.aborted_trajectories,
        r.period,
        config.run.dt
    );
    s
}

/// Entropy and squeezing of the ensemble (physical) covariance along the run.
fn entropy_csv(r: &RunResult) -> String {
    let mut s = provenance(&r.config_hash, r.seed);
    s.push_str("t,var_q,var_p,cov_qp,nu,entropy,squeeze_r,squeeze_phi,flagged\n");
    let mut raw_angles = Vec::with_capacity(r.moments.means.len());
    let mut records = Vec::with_capacity(r.moments.means.len());
    for m in &r.moments.means {
        let var_q = m[2] - m[0] * m[0];
        let var_p = m[3] - m[1] * m[1];
        let cov = m[4] - m[0] * m[1];
        let det = var_q * var_p - cov * cov;
        let nu = if det > 0.0 { det.sqrt() } else { f64::NAN };
        let flagged = !(nu >= 0.5 - 1e-6);
        let entropy = if nu.is_finite() {
            analysis::entropy_gaussian(var_q, var_p, cov, f64::INFINITY).unwrap_or(f64::NAN)
        } else {
            f64::NAN
        };
        let sq = analysis::squeezing_parameters(var_q.max(1e-12), var_p.max(1e-12), cov)
            .unwrap_or(analysis::Squeezing {
                amplitude: f64::NAN,
                angle: f64::NAN,
                degenerate: true,
            });
        raw_angles.push(if sq.angle.is_finite() { sq.angle } else { 0.0 });
        records.push((var_q, var_p, cov, nu, entropy, sq.amplitude, flagged));
    }
    let unwrapped = analysis::unwrap_angles(&raw_angles);
    for (i, t) in r.moments.times.iter().enumerate() {
        let (vq, vp, c, nu, ent, amp, flagged) = records[i];
        let _ = writeln!(
            s,
            "{t},{vq},{vp},{c},{nu},{ent},{amp},{},{}",
            unwrapped[i],
            u8::from(flagged)
        );
    }
    s
}

pub fn write_crosscheck(dir: &Path, r: &CrosscheckResult) -> Result<()> {
    let mut s = provenance(&r.config_hash, r.seed);
    s.push_str("moment,max_rel_deviation\n");
    for (name, v) in ["mean_q", "mean_p", "q2", "p2", "qp_sym"]
        .iter()
        .zip(r.per_moment_rel)
    {
        let _ = writeln!(s, "{name},{v}");
    }
    let _ = writeln!(s, "overall,{}", r.max_rel);
    write_file(&dir.join("crosscheck.csv"), &s)
}

pub fn write_sweep_outputs(
    dir: &Path,
    config: &RunConfig,
    sw: &SweepResult,
    plot: bool,
) -> Result<()> {
    let hash = config.config_hash();
    let mut s = provenance(&hash, config.run.seed);
    let label_names: Vec<String> = sw
        .points
        .first()
        .map(|p| p.labels.iter().map(|(n, _)| n.clone()).collect())
        .unwrap_or_default();
    let _ = writeln!(
        s,
        "{},eta,eta_se,power,power_se,power_ignoring_wi,power_ignoring_wi_se,eta_ref,eta_ref_se,w_d,w_i_cl,w_i_qm,w_i_qm_se,q_c,q_h,q_h_se,net_work,net_work_se,residual,residual_se,phase,pss_cycle,converged,error",
        label_names.join(",")
    );
    for p in &sw.points {
        let labels: Vec<String> = p.labels.iter().map(|(_, v)| v.to_string()).collect();
        match &p.outcome {
            Ok(r) => {
                let rep = &r.report;
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},",
                    labels.join(","),
                    rep.eta.mean,
                    rep.eta.se,
                    rep.power.mean,
                    rep.power.se,
                    r.power_ignoring_wi.mean,
                    r.power_ignoring_wi.se,
                    rep.eta_ref.mean,
                    rep.eta_ref.se,
                    rep.w_d.mean,
                    rep.w_i_cl.mean,
                    rep.w_i_qm.mean,
                    rep.w_i_qm.se,
                    rep.q_c.mean,
                    rep.q_h.mean,
                    rep.q_h.se,
                    rep.net_work.mean,
                    rep.net_work.se,
                    rep.residual.mean,
                    rep.residual.se,
                    rep.phase,
                    r.pss_cycle.map_or(-1i64, |c| c as i64),
                    r.converged()
                );
            }
            Err(e) => {
                let _ = writeln!(
                    s,
                    "{},,,,,,,,,,,,,,,,,,,,,,,\"{}\"",
                    labels.join(","),
                    e.replace('"', "'")
                );
            }
        }
    }
    write_file(&dir.join("sweep.csv"), &s)?;

    if sw.kind == "phase-diagram" {
        let pd = phase_diagram_from_sweep(config, sw);
        write_phase_diagram(dir, &hash, config.run.seed, &pd)?;
        if plot {
            write_file(&dir.join("phase_diagram.svg"), &phase_diagram_svg(&pd))?;
        }
    } else if plot {
        write_file(&dir.join("sweep.svg"), &sweep_svg(sw))?;
    }
    Ok(())
}

/// Convert sweep points into analysis phase points and extract the boundary.
pub fn phase_diagram_from_sweep(config: &RunConfig, sw: &SweepResult) -> PhaseDiagram {
    let mut pts = Vec::new();
    for p in &sw.points {
        let gamma = p
            .labels
            .iter()
            .find(|(n, _)| n == "gamma")
            .map(|(_, v)| *v)
            .unwrap_or(f64::NAN);
        let tau_i = p
            .labels
            .iter()
            .find(|(n, _)| n == "tau_i")
            .map(|(_, v)| *v)
            .unwrap_or(f64::NAN);
        if let Ok(r) = &p.outcome {
            pts.push(analysis::PhasePoint {
                gamma,
                tau_i,
                converged: r.converged(),
                phase: r.report.phase,
                eta: r.report.eta.mean,
                net_work: r.report.net_work.mean,
                net_work_se: r.report.net_work.se,
                q_h: r.report.q_h.mean,
                q_c: r.report.q_c.mean,
                corner_q2: Some(r.corner_q2),
            });
        }
    }
    analysis::assemble_phase_diagram(pts, config.schedule.delta_omega)
}

fn write_phase_diagram(dir: &Path, hash: &str, seed: u64, pd: &PhaseDiagram) -> Result<()> {
    let mut s = provenance(hash, seed);
    s.push_str("gamma,tau_i,phase,eta,net_work,net_work_se,q_h,q_c,converged\n");
    for p in &pd.points {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            p.gamma, p.tau_i, p.phase, p.eta, p.net_work, p.net_work_se, p.q_h, p.q_c, p.converged
        );
    }
    write_file(&dir.join("phase_diagram.csv"), &s)?;

    let mut b = provenance(hash, seed);
    b.push_str("gamma,tau_i_star,ratio_r,tau_i_estimate\n");
    for p in &pd.boundary {
        let _ = writeln!(
            b,
            "{},{},{},{}",
            p.gamma,
            p.tau_i_star,
            p.ratio_r.map_or(f64::NAN, |v| v),
            p.tau_i_estimate.map_or(f64::NAN, |v| v)
        );
    }
    write_file(&dir.join("boundary.csv"), &b)
}

// ---------------------------------------------------------------------------
// minimal native SVG rendering (no plotting dependency)

fn svg_header(w: f64, h: f64, title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"18\" font-size=\"14\" text-anchor=\"middle\" font-family=\"sans-serif\">{title}</text>\n",
        w / 2.0
    )
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Plain multi-series line chart.
pub fn svg_line_chart(title: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h) = (760.0, 480.0);
    let (ml, mr, mt, mb) = (60.0, 20.0, 30.0, 40.0);
    let mut s = svg_header(w, h, title);
    let all: Vec<(f64, f64)> = series.iter().flat_map(|(_, v)| v.iter().copied()).collect();
    if all.is_empty() {
        s.push_str("</svg>\n");
        return s;
    }
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in &all {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if (x1 - x0).abs() < 1e-300 {
        x1 = x0 + 1.0;
    }
    if (y1 - y0).abs() < 1e-300 {
        y1 = y0 + 1.0;
    }
    let pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
    let px = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let py = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);
    let _ = writeln!(
        s,
        "<rect x=\"{ml}\" y=\"{mt}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#999\"/>",
        w - ml - mr,
        h - mt - mb
    );
    if y0 < 0.0 && y1 > 0.0 {
        let _ = writeln!(
            s,
            "<line x1=\"{ml}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"#ccc\"/>",
            py(0.0),
            w - mr
        );
    }
    for (tick, label_y) in [(x0, false), (x1, false), (y0, true), (y1, true)] {
        if label_y {
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\" font-family=\"sans-serif\">{tick:.3}</text>",
                ml - 4.0,
                py(tick) + 4.0
            );
        } else {
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\" font-family=\"sans-serif\">{tick:.3}</text>",
                px(tick),
                h - mb + 16.0
            );
        }
    }
    for (si, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let mut path = String::new();
        for (i, (x, y)) in pts.iter().enumerate() {
            let _ = write!(path, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, px(*x), py(*y));
        }
        let _ = writeln!(s, "<path d=\"{path}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>");
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\" font-family=\"sans-serif\">{name}</text>",
            w - mr - 150.0,
            mt + 16.0 + 14.0 * si as f64
        );
    }
    s.push_str("</svg>\n");
    s
}

fn moments_svg(r: &RunResult) -> String {
    let series = vec![
        (
            "q2".to_string(),
            r.moments
                .times
                .iter()
                .zip(&r.moments.means)
                .map(|(t, m)| (*t, m[2]))
                .collect(),
        ),
        (
            "p2".to_string(),
            r.moments
                .times
                .iter()
                .zip(&r.moments.means)
                .map(|(t, m)| (*t, m[3]))
                .collect(),
        ),
        (
            "qp_sym".to_string(),
            r.moments
                .times
                .iter()
                .zip(&r.moments.means)
                .map(|(t, m)| (*t, m[4]))
                .collect(),
        ),
    ];
    svg_line_chart("ensemble moments", &series)
}

fn sweep_svg(sw: &SweepResult) -> String {
    let mut eta = Vec::new();
    let mut power = Vec::new();
    for p in &sw.points {
        if let (Some((_, x)), Ok(r)) = (p.labels.first(), &p.outcome) {
            eta.push((*x, r.report.eta.mean));
            power.push((*x, r.report.power.mean));
        }
    }
    svg_line_chart(
        &format!("{} sweep", sw.kind),
        &[("eta".to_string(), eta), ("power".to_string(), power)],
    )
}

fn phase_diagram_svg(pd: &PhaseDiagram) -> String {
    let (w, h) = (640.0, 520.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 30.0, 50.0);
    let mut s = svg_header(w, h, "operating phases (eta heat map)");
    let mut gammas: Vec<f64> = pd.points.iter().map(|p| p.gamma).collect();
    let mut taus: Vec<f64> = pd.points.iter().map(|p| p.tau_i).collect();
    gammas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    gammas.dedup();
    taus.sort_by(|a, b| a.partial_cmp(b).unwrap());
    taus.dedup();
    if gammas.is_empty() || taus.is_empty() {
        s.push_str("</svg>\n");
        return s;
    }
    let eta_max = pd.points.iter().map(|p| p.eta).fold(1e-9f64, f64::max);
    let cw = (w - ml - mr) / gammas.len() as f64;
    let ch = (h - mt - mb) / taus.len() as f64;
    for p in &pd.points {
        let gi = gammas.iter().position(|&g| g == p.gamma).unwrap();
        let ti = taus.iter().position(|&t| t == p.tau_i).unwrap();
        let x = ml + gi as f64 * cw;
        let y = h - mb - (ti as f64 + 1.0) * ch;
        let color = if !p.converged {
            "#bbbbbb".to_string()
        } else if p.eta > 0.0 {
            let f = (p.eta / eta_max).clamp(0.0, 1.0);
            let r = (255.0 * (1.0 - f)) as u8;
            format!("#{r:02x}{:02x}40", 64 + (160.0 * f) as u8)
        } else {
            "#f2e8e8".to_string()
        };
        let _ = writeln!(
            s,
            "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cw:.1}\" height=\"{ch:.1}\" fill=\"{color}\" stroke=\"#fff\"/>"
        );
    }
    // boundary curve
    let mut path = String::new();
    let px = |g: f64| {
        let gi = gammas.iter().position(|&x| x == g).unwrap_or(0);
        ml + (gi as f64 + 0.5) * cw
    };
    let span = taus.last().unwrap() - taus.first().unwrap();
    for (i, b) in pd.boundary.iter().enumerate() {
        let frac = (b.tau_i_star - taus.first().unwrap()) / span.max(1e-9);
        let y = h - mb - frac * (h - mt - mb);
        let _ = write!(path, "{}{:.1},{:.1} ", if i == 0 { "M" } else { "L" }, px(b.gamma), y);
    }
    if !path.is_empty() {
        let _ = writeln!(s, "<path d=\"{path}\" fill=\"none\" stroke=\"black\" stroke-width=\"2\"/>");
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" font-family=\"sans-serif\">gamma</text>",
        ml + (w - ml - mr) / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{}\" font-size=\"12\" font-family=\"sans-serif\" transform=\"rotate(-90 16 {})\">tau_i</text>",
        mt + (h - mt - mb) / 2.0,
        mt + (h - mt - mb) / 2.0
    );
    s.push_str("</svg>\n");
    s
}

/// Diagnostic dump of one noise path: t, xi_c, xi_h.
pub fn noise_dump_csv(hash: &str, seed: u64, path: &crate::noise::NoisePath) -> String {
    let mut s = provenance(hash, seed);
    s.push_str("t,xi_c,xi_h\n");
    for i in 0..path.len() {
        let _ = writeln!(
            s,
            "{},{},{}",
            i as f64 * path.dt,
            path.values_c[i],
            path.values_h[i]
        );
    }
    s
}
