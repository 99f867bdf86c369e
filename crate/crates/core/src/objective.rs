//! Reduced objective, first-variation data, projected descent over `F`, and
//! the mollified regularization path.
//!
//! `j(g) = ∫_E (S(g) − y_d)² + α ∫_D (1 − H_ε(g)) + ½‖g − ḡ_sh‖²_W`.

use crate::beta::{MollifiedBeta, Nonlinearity, PiecewiseLinearBeta};
use crate::certificates;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid2D, Region};
use crate::heaviside::Heaviside;
use crate::solvers::{self, NewtonOptions, SolveReport, ZetaPolicy};
use crate::wspace::{is_feasible, project_f, WGram};

/// One instance of the control problem.
#[derive(Clone, Debug)]
pub struct ProblemParams {
    pub grid: Grid2D,
    pub eps: f64,
    pub alpha: f64,
    /// Smoothness order of `W` on `D ∖ Ē`.
    pub s: f64,
    pub f: Field,
    pub y_d: Field,
    pub g_sh: Field,
    pub beta: PiecewiseLinearBeta,
}

impl ProblemParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: Grid2D,
        eps: f64,
        alpha: f64,
        s: f64,
        f: Field,
        y_d: Field,
        g_sh: Field,
        beta: PiecewiseLinearBeta,
    ) -> Result<Self> {
        Heaviside::new(eps)?;
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha must be >= 0, got {alpha}")));
        }
        if !(s > 0.0 && s < 2.0 && s != 1.0) {
            return Err(Error::InvalidParameter(format!("smoothness s must lie in (0,1) or (1,2), got {s}")));
        }
        for fld in [&f, &y_d, &g_sh] {
            grid.check(fld)?;
        }
        if !is_feasible(&g_sh, &grid) {
            return Err(Error::InvalidParameter("anchor control must be <= 0 on E".into()));
        }
        Ok(Self { grid, eps, alpha, s, f, y_d, g_sh, beta })
    }

    pub fn heaviside(&self) -> Heaviside {
        Heaviside::new(self.eps).expect("validated on construction")
    }

    /// Right-hand side `2 χ_E (y − y_d)` of the adjoint equation.
    pub fn adjoint_rhs(&self, y: &[f64]) -> Field {
        let v = (0..y.len()).map(|k| 2.0 * self.grid.frac_e[k] * (y[k] - self.y_d[k])).collect();
        Field::from_vec(v).expect("finite")
    }

    /// Density `p (ε − (1/ε) H'_ε(g) y) − α H'_ε(g)`.
    pub fn gradient_density(&self, g: &[f64], y: &[f64], p: &[f64]) -> Field {
        let heav = self.heaviside();
        let eps = self.eps;
        let v = (0..g.len())
            .map(|k| {
                let hp = heav.deriv(g[k]);
                p[k] * (eps - hp / eps * y[k]) - self.alpha * hp
            })
            .collect();
        Field::from_vec(v).expect("finite")
    }
}

/// Everything needed to move from `g` to a descent step.
#[derive(Clone, Debug)]
pub struct FirstVariation {
    pub j: f64,
    pub y: Field,
    pub p: Field,
    pub zeta: Field,
    /// `L²` density of the state-dependent part of `j'(g)`.
    pub q: Field,
    /// `W`-gradient: `riesz(q) + (g − ḡ_sh)` (plus the proximal term on a path leg).
    pub grad_w: Field,
    pub state_report: SolveReport,
}

/// Evaluates `j` and its derivative data for a fixed nonlinearity.
///
/// With `smoothing = Some(β_γ)` the mollified nonlinearity replaces `β`;
/// `anchor` adds `½‖g − anchor‖²_W`.
pub struct Evaluator<'a> {
    pub params: &'a ProblemParams,
    pub gram: &'a WGram,
    pub smoothing: Option<&'a MollifiedBeta>,
    pub anchor: Option<&'a Field>,
    pub newton: NewtonOptions,
    pub zeta_policy: ZetaPolicy,
}

impl<'a> Evaluator<'a> {
    pub fn new(params: &'a ProblemParams, gram: &'a WGram) -> Self {
        Self {
            params,
            gram,
            smoothing: None,
            anchor: None,
            newton: NewtonOptions::default(),
            zeta_policy: ZetaPolicy::default(),
        }
    }

    pub fn nonlinearity(&self) -> &dyn Nonlinearity {
        match self.smoothing {
            Some(m) => m,
            None => &self.params.beta,
        }
    }

    /// Solves the state equation, failing if Newton does not converge.
    pub fn state(&self, g: &[f64], init: Option<&[f64]>) -> Result<(Field, SolveReport)> {
        let p = self.params;
        let (y, rep) = solvers::solve_state(&p.grid, self.nonlinearity(), p.eps, g, &p.f, self.newton, init)?;
        if !rep.converged {
            return Err(Error::NotConverged(format!(
                "state solve stopped after {} iterations with residual {:.3e}",
                rep.iterations, rep.final_residual
            )));
        }
        Ok((y, rep))
    }

    /// `j(g)` for a known state.
    pub fn value_with_state(&self, g: &[f64], y: &[f64]) -> f64 {
        let p = self.params;
        let grid = &p.grid;
        let heav = p.heaviside();
        let misfit: Vec<f64> = y.iter().zip(p.y_d.iter()).map(|(a, b)| (a - b) * (a - b)).collect();
        let tracking = grid.integrate(&misfit, Region::E);
        let topo: Vec<f64> = g.iter().map(|&v| 1.0 - heav.value(v)).collect();
        let penalty = p.alpha * grid.integrate(&topo, Region::D);
        let dg: Vec<f64> = g.iter().zip(p.g_sh.iter()).map(|(a, b)| a - b).collect();
        let mut reg = 0.5 * self.gram.inner(&dg, &dg);
        if let Some(anchor) = self.anchor {
            let da: Vec<f64> = g.iter().zip(anchor.iter()).map(|(a, b)| a - b).collect();
            reg += 0.5 * self.gram.inner(&da, &da);
        }
        tracking + penalty + reg
    }

    pub fn value(&self, g: &[f64]) -> Result<f64> {
        let (y, _) = self.state(g, None)?;
        Ok(self.value_with_state(g, &y))
    }

    /// Multiplier field for the active nonlinearity.
    pub fn zeta(&self, y: &[f64]) -> Field {
        match self.smoothing {
            Some(m) => y.map_field(|v| m.deriv(v)),
            None => solvers::select_zeta(&self.params.beta, y, self.zeta_policy),
        }
    }

    pub fn first_variation(&self, g: &[f64], init: Option<&[f64]>) -> Result<FirstVariation> {
        let p = self.params;
        let (y, state_report) = self.state(g, init)?;
        let j = self.value_with_state(g, &y);
        let zeta = self.zeta(&y);
        let adj = solvers::solve_adjoint(&p.grid, p.eps, g, &zeta, &p.adjoint_rhs(&y), 1e-13)?;
        let q = p.gradient_density(g, &y, &adj);
        let mut grad_w = self.gram.riesz(&q);
        for k in 0..g.len() {
            grad_w[k] += g[k] - p.g_sh[k];
            if let Some(anchor) = self.anchor {
                grad_w[k] += g[k] - anchor[k];
            }
        }
        Ok(FirstVariation { j, y, p: adj, zeta, q, grad_w, state_report })
    }
}

trait MapField {
    fn map_field(&self, f: impl Fn(f64) -> f64) -> Field;
}

impl MapField for [f64] {
    fn map_field(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_vec(self.iter().map(|&v| f(v)).collect()).expect("finite")
    }
}

pub fn eval_objective(params: &ProblemParams, gram: &WGram, g: &[f64]) -> Result<f64> {
    Evaluator::new(params, gram).value(g)
}

pub fn first_variation_density(params: &ProblemParams, gram: &WGram, g: &[f64]) -> Result<FirstVariation> {
    Evaluator::new(params, gram).first_variation(g, None)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizeOptions {
    pub step0: f64,
    pub max_iter: usize,
    /// Stop once the first-order stationarity probe is `≥ −cert_tol`.
    pub cert_tol: f64,
    pub newton: NewtonOptions,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self { step0: 1.0, max_iter: 500, cert_tol: 1e-10, newton: NewtonOptions::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptStatus {
    Converged,
    MaxIter,
    /// The line search could not make progress; the best iterate is returned.
    Stalled,
}

impl OptStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            OptStatus::Converged => "converged",
            OptStatus::MaxIter => "max_iter",
            OptStatus::Stalled => "stalled",
        }
    }
}

/// How a step was accepted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Acceptance {
    /// Starting point or final row; no step taken.
    None,
    Armijo,
    /// Objective change at rounding level; accepted because the projected
    /// gradient decreased.
    GradientDecrease,
}

impl Acceptance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Acceptance::None => "none",
            Acceptance::Armijo => "armijo",
            Acceptance::GradientDecrease => "gradient",
        }
    }
}

/// One row of the optimizer trace, describing the iterate `iter`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub j: f64,
    /// Step length that produced this iterate (0 for the start point).
    pub step: f64,
    pub vi_min: f64,
    /// `W`-norm of the projected-gradient step `P_F(g − ∇_W j) − g`.
    pub pg_norm: f64,
    pub state_residual: f64,
    pub accepted: Acceptance,
}

#[derive(Clone, Debug)]
pub struct OptimizeResult {
    pub g: Field,
    pub status: OptStatus,
    pub trace: Vec<TraceRow>,
    pub certificate_calls: usize,
    pub variation: FirstVariation,
}

/// Projected `W`-gradient descent with Armijo backtracking.
pub fn optimize(params: &ProblemParams, gram: &WGram, g0: &[f64], opts: OptimizeOptions) -> Result<OptimizeResult> {
    let mut ev = Evaluator::new(params, gram);
    ev.newton = opts.newton;
    optimize_with(&ev, g0, opts)
}

pub fn optimize_with(ev: &Evaluator<'_>, g0: &[f64], opts: OptimizeOptions) -> Result<OptimizeResult> {
    let grid = &ev.params.grid;
    grid.check(g0)?;
    if !is_feasible(g0, grid) {
        return Err(Error::InvalidParameter("starting control must be <= 0 on E".into()));
    }
    if !(opts.step0 > 0.0) {
        return Err(Error::InvalidParameter(format!("step0 must be > 0, got {}", opts.step0)));
    }
    let mut g = Field::from_vec(g0.to_vec())?;
    let mut fv = ev.first_variation(&g, None)?;
    let mut trace = Vec::new();
    let mut calls = 0;
    let mut step_taken = 0.0;
    let mut accepted = Acceptance::None;
    let mut sigma = opts.step0;
    for iter in 0.. {
        let probe = certificates::first_order_probe(grid, ev.gram, &g, &fv.grad_w);
        calls += 1;
        trace.push(TraceRow {
            iter,
            j: fv.j,
            step: step_taken,
            vi_min: probe.vi_min,
            pg_norm: probe.pg_norm,
            state_residual: fv.state_report.final_residual,
            accepted,
        });
        if probe.vi_min >= -opts.cert_tol {
            return Ok(OptimizeResult { g, status: OptStatus::Converged, trace, certificate_calls: calls, variation: fv });
        }
        if iter >= opts.max_iter {
            return Ok(OptimizeResult { g, status: OptStatus::MaxIter, trace, certificate_calls: calls, variation: fv });
        }
        // Backtracking along the projection arc.
        let mut next = None;
        while sigma >= 1e-14 {
            let trial = project_f(&g.axpy(-sigma, &fv.grad_w), grid);
            let dg = trial.sub(&g);
            let slope = ev.gram.inner(&fv.grad_w, &dg);
            let (y_t, _) = ev.state(&trial, Some(&fv.y))?;
            let j_t = ev.value_with_state(&trial, &y_t);
            if j_t <= fv.j + solvers::ARMIJO * slope && j_t < fv.j {
                next = Some((trial, Acceptance::Armijo));
                break;
            }
            if (j_t - fv.j).abs() <= 100.0 * f64::EPSILON * fv.j.abs().max(f64::MIN_POSITIVE) {
                let fv_t = ev.first_variation(&trial, Some(&fv.y))?;
                let pg_t = certificates::projected_gradient_norm(grid, ev.gram, &trial, &fv_t.grad_w);
                if pg_t < probe.pg_norm {
                    next = Some((trial, Acceptance::GradientDecrease));
                    break;
                }
            }
            sigma *= 0.5;
        }
        let Some((trial, how)) = next else {
            return Ok(OptimizeResult { g, status: OptStatus::Stalled, trace, certificate_calls: calls, variation: fv });
        };
        fv = ev.first_variation(&trial, Some(&fv.y))?;
        g = trial;
        step_taken = sigma;
        accepted = how;
        // Let the step recover after backtracking.
        sigma = (2.0 * sigma).min(opts.step0);
    }
    unreachable!("the loop returns")
}

/// One solved leg of the regularization path.
#[derive(Clone, Debug)]
pub struct PathPoint {
    pub gamma: f64,
    pub g: Field,
    pub y: Field,
    pub p: Field,
    /// `β'_γ(y_γ)`.
    pub zeta: Field,
    pub j: f64,
    pub status: OptStatus,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct PathResult {
    pub points: Vec<PathPoint>,
    /// A leg failed to certify and the path was cut there.
    pub truncated: bool,
    /// State of the last control under the non-smooth `β`.
    pub y_ref: Option<Field>,
}

/// Geometric schedule `0.1 · 2^{−k}`, `k = 0..=10` (from `1e−1` down to about `1e−4`).
pub fn default_schedule() -> Vec<f64> {
    (0..=10).map(|k| 0.1 * 0.5f64.powi(k)).collect()
}

/// Minimizes `j_γ(g) = J(S_γ(g), g) + ½‖g − g_prev‖²_W` for each `γ`, anchoring
/// every leg at the previous leg's control.
pub fn solve_regularized_path(
    params: &ProblemParams,
    gram: &WGram,
    schedule: &[f64],
    g0: &[f64],
    opts: OptimizeOptions,
) -> Result<PathResult> {
    if schedule.is_empty() || schedule.iter().any(|&g| !(g > 0.0)) || schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("gamma schedule must be positive and strictly decreasing".into()));
    }
    let mut anchor = Field::from_vec(g0.to_vec())?;
    let mut g = anchor.clone();
    let mut points = Vec::new();
    let mut truncated = false;
    for &gamma in schedule {
        let mb = MollifiedBeta::new(params.beta.clone(), gamma)?;
        let mut ev = Evaluator::new(params, gram);
        ev.smoothing = Some(&mb);
        ev.anchor = Some(&anchor);
        ev.newton = opts.newton;
        let res = match optimize_with(&ev, &g, opts) {
            Ok(r) => r,
            Err(Error::NotConverged(_)) => {
                truncated = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let fv = res.variation;
        points.push(PathPoint {
            gamma,
            g: res.g.clone(),
            y: fv.y,
            p: fv.p,
            zeta: fv.zeta,
            j: fv.j,
            status: res.status,
            iterations: res.trace.len() - 1,
        });
        if res.status != OptStatus::Converged {
            truncated = true;
            break;
        }
        g = res.g;
        anchor = g.clone();
    }
    let y_ref = match points.last() {
        Some(last) => Some(Evaluator::new(params, gram).state(&last.g, Some(&last.y))?.0),
        None => None,
    };
    Ok(PathResult { points, truncated, y_ref })
}
