//! Command implementations behind the CLI: each reads a [`RunConfig`], writes
//! its artifacts into the output directory and returns an exit status.
//!
//! Exit codes: 0 converged/certified, 2 completed with violations, 3 solver
//! failure, 4 configuration error.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::beta::Nonlinearity;
use crate::certificates::{self, Candidate, Certificate};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::io::{self, fmt_f64, Csv};
use crate::objective::{self, Evaluator, OptStatus, ProblemParams};
use crate::solvers;
use crate::wspace::WGram;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATIONS: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

/// Exit code for an error that aborted a command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NotConverged(_) | Error::Factorization(_) => EXIT_SOLVER,
        _ => EXIT_CONFIG,
    }
}

/// Command-line overrides shared by all commands.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: usize,
    pub best_effort: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { out: None, seed: None, jobs: 1, best_effort: false }
    }
}

/// Result of a finished command.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub code: i32,
    /// One-line human summary.
    pub summary: String,
}

fn out_dir(cfg: &RunConfig, opts: &RunOptions) -> Result<PathBuf> {
    let dir = opts.out.clone().or_else(|| cfg.output_dir()).unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn solve_report_csv(rep: &solvers::SolveReport) -> Csv {
    let mut csv = Csv::new(&["iterations", "final_residual", "converged", "damping_events"]);
    csv.row(&[
        rep.iterations.to_string(),
        fmt_f64(rep.final_residual),
        rep.converged.to_string(),
        rep.damping_events.to_string(),
    ]);
    csv
}

/// State solve for the configured control `[solver] g`.
pub fn cmd_solve(cfg: &RunConfig, opts: &RunOptions) -> Result<Outcome> {
    let params = cfg.params()?;
    let grid = &params.grid;
    let g = cfg.field("solver", "g", &cfg.raw.solver.g, grid, params.eps)?;
    let (y, rep) = solvers::solve_state(grid, &params.beta, params.eps, &g, &params.f, cfg.newton(), None)?;
    let dir = out_dir(cfg, opts)?;
    io::write_dump(&dir.join("y.txt"), grid, &y)?;
    solve_report_csv(&rep).write(&dir.join("solve_report.csv"))?;
    let summary = format!(
        "solve: {} after {} iterations, residual {:.3e}",
        if rep.converged { "converged" } else { "not converged" },
        rep.iterations,
        rep.final_residual
    );
    let code = if rep.converged || opts.best_effort { EXIT_OK } else { EXIT_SOLVER };
    Ok(Outcome { code, summary })
}

fn trace_csv(res: &objective::OptimizeResult) -> Csv {
    let mut csv = Csv::new(&["iter", "j", "step", "vi_min", "pg_norm", "state_residual", "accepted"]);
    for r in &res.trace {
        csv.row(&[
            r.iter.to_string(),
            fmt_f64(r.j),
            fmt_f64(r.step),
            fmt_f64(r.vi_min),
            fmt_f64(r.pg_norm),
            fmt_f64(r.state_residual),
            r.accepted.as_str().to_string(),
        ]);
    }
    csv
}

fn write_certificate(dir: &Path, params: &ProblemParams, cert: &Certificate) -> Result<()> {
    let report = &cert.report;
    std::fs::write(dir.join("report.txt"), report.to_kv())?;
    std::fs::write(dir.join("report.csv"), format!("{}\n{}\n", report.csv_header(), report.csv_row()))?;
    io::write_dump(&dir.join("worst_direction.txt"), &params.grid, &cert.worst_direction)
}

/// Optimizes and certifies one instance, writing all artifacts into `dir`.
fn optimize_one(cfg: &RunConfig, params: &ProblemParams, dir: &Path, seed: Option<u64>) -> Result<(OptStatus, Certificate)> {
    let grid = &params.grid;
    let gram = WGram::new(grid, params.s)?;
    let g0 = cfg.field("optimize", "g0", &cfg.raw.optimize.g0, grid, params.eps)?;
    let copts = cfg.certify_options(seed)?;
    let ev = Evaluator { newton: cfg.newton(), zeta_policy: copts.zeta_policy, ..Evaluator::new(params, &gram) };
    let res = objective::optimize_with(&ev, &g0, cfg.optimize_options())?;
    std::fs::create_dir_all(dir)?;
    let fv = &res.variation;
    for (name, v) in [("g.txt", &res.g), ("y.txt", &fv.y), ("p.txt", &fv.p), ("zeta.txt", &fv.zeta)] {
        io::write_dump(&dir.join(name), grid, v)?;
    }
    trace_csv(&res).write(&dir.join("trace.csv"))?;
    let candidate = Candidate { y: fv.y.clone(), p: fv.p.clone(), zeta: fv.zeta.clone() };
    let cert = certificates::certify(params, &gram, &res.g, Some(candidate), &copts)?;
    write_certificate(dir, params, &cert)?;
    Ok((res.status, cert))
}

/// Projected descent plus certification; with a `[sweep]` section, one run per
/// `(ε, α)` pair in `eps_<i>_alpha_<j>/` and a `sweep.csv` summary.
pub fn cmd_optimize(cfg: &RunConfig, opts: &RunOptions) -> Result<Outcome> {
    let dir = out_dir(cfg, opts)?;
    let sweep = &cfg.raw.sweep;
    if sweep.epsilon.is_empty() && sweep.alpha.is_empty() {
        let params = cfg.params()?;
        let (status, cert) = optimize_one(cfg, &params, &dir, opts.seed)?;
        let ok = status == OptStatus::Converged && cert.report.certified;
        let summary = format!(
            "optimize: {}, certified = {}, vi_min = {:.3e}, sys_residual = {:.3e}",
            status.as_str(),
            cert.report.certified,
            cert.report.vi_min,
            cert.report.sys_residual
        );
        return Ok(Outcome { code: if ok { EXIT_OK } else { EXIT_VIOLATIONS }, summary });
    }
    let eps_list = if sweep.epsilon.is_empty() { vec![cfg.raw.problem.epsilon] } else { sweep.epsilon.clone() };
    let alpha_list = if sweep.alpha.is_empty() { vec![cfg.raw.problem.alpha] } else { sweep.alpha.clone() };
    let jobs: Vec<(usize, usize)> =
        (0..eps_list.len()).flat_map(|i| (0..alpha_list.len()).map(move |j| (i, j))).collect();
    let results: Vec<Mutex<Option<Result<(OptStatus, Certificate)>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..opts.jobs.max(1).min(jobs.len()) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= jobs.len() {
                    break;
                }
                let (i, j) = jobs[k];
                let sub = dir.join(format!("eps_{i}_alpha_{j}"));
                let r = cfg.params_with(eps_list[i], alpha_list[j]).and_then(|p| optimize_one(cfg, &p, &sub, opts.seed));
                *results[k].lock().expect("result slot") = Some(r);
            });
        }
    });
    let mut csv = Csv::new(&["epsilon", "alpha", "status", "certified", "vi_min", "sys_residual", "error"]);
    let mut code = EXIT_OK;
    let mut certified = 0;
    for (k, slot) in results.into_iter().enumerate() {
        let (i, j) = jobs[k];
        let (e, a) = (fmt_f64(eps_list[i]), fmt_f64(alpha_list[j]));
        match slot.into_inner().expect("result slot").expect("every job ran") {
            Ok((status, cert)) => {
                let r = &cert.report;
                if status != OptStatus::Converged || !r.certified {
                    code = code.max(EXIT_VIOLATIONS);
                } else {
                    certified += 1;
                }
                csv.row(&[e, a, status.as_str().into(), r.certified.to_string(), fmt_f64(r.vi_min), fmt_f64(r.sys_residual), String::new()]);
            }
            Err(err) => {
                code = code.max(if opts.best_effort { EXIT_VIOLATIONS } else { exit_code(&err) });
                csv.row(&[e, a, "error".into(), "false".into(), String::new(), String::new(), err.to_string().replace(',', ";")]);
            }
        }
    }
    csv.write(&dir.join("sweep.csv"))?;
    Ok(Outcome { code, summary: format!("optimize sweep: {certified}/{} instances certified", jobs.len()) })
}

/// Paths of externally supplied candidate fields.
#[derive(Clone, Debug, Default)]
pub struct CandidateFiles {
    pub control: PathBuf,
    pub state: Option<PathBuf>,
    pub adjoint: Option<PathBuf>,
    pub multiplier: Option<PathBuf>,
}

/// Certifies a control read from a grid dump, optionally with its state,
/// adjoint and multiplier (all three or none).
pub fn cmd_certify(cfg: &RunConfig, files: &CandidateFiles, opts: &RunOptions) -> Result<Outcome> {
    let params = cfg.params()?;
    let grid = &params.grid;
    let g = io::read_dump(&files.control, grid)?;
    let candidate = match (&files.state, &files.adjoint, &files.multiplier) {
        (Some(y), Some(p), Some(z)) => Some(Candidate {
            y: io::read_dump(y, grid)?,
            p: io::read_dump(p, grid)?,
            zeta: io::read_dump(z, grid)?,
        }),
        (None, None, None) => None,
        _ => {
            return Err(Error::InvalidParameter("--state, --adjoint and --multiplier must be given together".into()))
        }
    };
    let gram = WGram::new(grid, params.s)?;
    let cert = certificates::certify(&params, &gram, &g, candidate, &cfg.certify_options(opts.seed)?)?;
    let dir = out_dir(cfg, opts)?;
    write_certificate(&dir, &params, &cert)?;
    let r = &cert.report;
    let summary = format!("certify: certified = {}, vi_min = {:.3e}, sys_residual = {:.3e}", r.certified, r.vi_min, r.sys_residual);
    Ok(Outcome { code: if r.certified { EXIT_OK } else { EXIT_VIOLATIONS }, summary })
}

/// Largest distance of `ζ` to the one-sided slope interval at `y`, over nodes
/// farther than `γ` from every kink, and the number of nodes inside that band.
pub fn zeta_interval_slack(params: &ProblemParams, y: &[f64], zeta: &[f64], gamma: f64) -> (f64, usize) {
    let mut slack = 0.0f64;
    let mut in_band = 0;
    for k in 0..y.len() {
        if params.beta.distance_to_kink(y[k]) < gamma {
            in_band += 1;
            continue;
        }
        let (l, r) = params.beta.one_sided(y[k], 0.0);
        slack = slack.max((l.min(r) - zeta[k]).max(zeta[k] - l.max(r)).max(0.0));
    }
    (slack, in_band)
}

/// Least-squares slope of `log e` against `log γ`.
pub fn loglog_slope(gammas: &[f64], errors: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> =
        gammas.iter().zip(errors).filter(|(_, e)| **e > 0.0).map(|(g, e)| (g.ln(), e.ln())).collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Mollified regularization path with a final certificate of its last control.
pub fn cmd_path(cfg: &RunConfig, opts: &RunOptions) -> Result<Outcome> {
    let params = cfg.params()?;
    let grid = &params.grid;
    let gram = WGram::new(grid, params.s)?;
    let g0 = cfg.field("optimize", "g0", &cfg.raw.optimize.g0, grid, params.eps)?;
    let schedule = cfg.schedule();
    let path = objective::solve_regularized_path(&params, &gram, &schedule, &g0, cfg.optimize_options())?;
    let dir = out_dir(cfg, opts)?;
    let mut csv = Csv::new(&["gamma", "j", "y_error_l2", "zeta_slack", "kink_band_nodes", "status", "iterations"]);
    let mut gammas = Vec::new();
    let mut errors = Vec::new();
    if let Some(y_ref) = &path.y_ref {
        for pt in &path.points {
            let err = grid.l2_norm(&pt.y.sub(y_ref));
            let (slack, band) = zeta_interval_slack(&params, &pt.y, &pt.zeta, pt.gamma);
            gammas.push(pt.gamma);
            errors.push(err);
            csv.row(&[
                fmt_f64(pt.gamma),
                fmt_f64(pt.j),
                fmt_f64(err),
                fmt_f64(slack),
                band.to_string(),
                pt.status.as_str().into(),
                pt.iterations.to_string(),
            ]);
        }
    }
    csv.write(&dir.join("path.csv"))?;
    let Some(last) = path.points.last() else {
        let msg = "path: the first leg did not converge".to_string();
        return if opts.best_effort {
            Ok(Outcome { code: EXIT_VIOLATIONS, summary: msg })
        } else {
            Err(Error::NotConverged(msg))
        };
    };
    io::write_dump(&dir.join("g.txt"), grid, &last.g)?;
    let cert = certificates::certify(&params, &gram, &last.g, None, &cfg.certify_options(opts.seed)?)?;
    write_certificate(&dir, &params, &cert)?;
    let slope = if gammas.len() >= 3 { loglog_slope(&gammas, &errors) } else { f64::NAN };
    let summary = format!(
        "path: {} legs{}, log-log slope {:.3}, final certified = {}",
        path.points.len(),
        if path.truncated { " (truncated)" } else { "" },
        slope,
        cert.report.certified
    );
    let code = if path.truncated && !opts.best_effort {
        EXIT_SOLVER
    } else if path.truncated || !cert.report.certified {
        EXIT_VIOLATIONS
    } else {
        EXIT_OK
    };
    Ok(Outcome { code, summary })
}

/// One refinement level of the manufactured-solution study.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MmsRow {
    pub h: f64,
    pub sup_error: f64,
    /// `log₂`-ratio order against the previous level (`None` on the first).
    pub order: Option<f64>,
}

/// Manufactured-solution convergence table for the configured `[mms]` section.
pub fn mms_table(cfg: &RunConfig) -> Result<Vec<MmsRow>> {
    let mms = cfg.raw.mms.as_ref().ok_or_else(|| Error::Config { line: 0, msg: "missing [mms] section".into() })?;
    let exact = crate::expr::Expr::parse(&mms.exact)?;
    let lap = crate::expr::Expr::parse(&mms.laplacian)?;
    let eps = cfg.raw.problem.epsilon;
    let beta = cfg.beta()?;
    let heav = crate::heaviside::Heaviside::new(eps)?;
    let mut rows: Vec<MmsRow> = Vec::new();
    for &n in &mms.levels {
        let grid = cfg.grid_level(n)?;
        let g = cfg.field("mms", "g", &mms.g, &grid, eps)?;
        let y_ex = Field::from_fn(&grid, |x, y| exact.eval(x, y, eps));
        let lap_ex = Field::from_fn(&grid, |x, y| lap.eval(x, y, eps));
        let f = Field::from_vec(
            (0..grid.len())
                .map(|k| -lap_ex[k] + beta.value(y_ex[k]) + heav.value(g[k]) * y_ex[k] / eps - eps * g[k])
                .collect(),
        )?;
        let (y, rep) = solvers::solve_state(&grid, &beta, eps, &g, &f, cfg.newton(), None)?;
        if !rep.converged {
            return Err(Error::NotConverged(format!("mms level {n}: residual {:.3e}", rep.final_residual)));
        }
        let sup_error = y.sub(&y_ex).sup_norm();
        let order = rows.last().map(|prev| (prev.sup_error / sup_error).ln() / (prev.h / grid.h).ln());
        rows.push(MmsRow { h: grid.h, sup_error, order });
    }
    Ok(rows)
}

/// Writes `mms.csv`; succeeds with violations when any observed order is below 1.8.
pub fn cmd_mms(cfg: &RunConfig, opts: &RunOptions) -> Result<Outcome> {
    let rows = mms_table(cfg)?;
    let mut csv = Csv::new(&["h", "sup_error", "observed_order"]);
    for r in &rows {
        csv.row(&[fmt_f64(r.h), fmt_f64(r.sup_error), r.order.map_or_else(String::new, fmt_f64)]);
    }
    let dir = out_dir(cfg, opts)?;
    csv.write(&dir.join("mms.csv"))?;
    let min_order = rows.iter().filter_map(|r| r.order).fold(f64::INFINITY, f64::min);
    Ok(Outcome {
        code: if min_order >= 1.8 { EXIT_OK } else { EXIT_VIOLATIONS },
        summary: format!("mms: {} levels, minimum observed order {:.3}", rows.len(), min_order),
    })
}
