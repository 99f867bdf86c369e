//! Discrete state, linearized and adjoint equations, and multiplier selection.
//!
//! State:      `−Δ_h y + β(y) + (1/ε) H_ε(g) y = f + ε g`
//! Linearized: `−Δ_h u + β'(y; u) + (1/ε) H_ε(g) u + (1/ε) H'_ε(g) y h = ε h`
//! Adjoint:    `−Δ_h p + ζ p + (1/ε) H_ε(g) p = rhs`
//!
//! The adjoint matrix is the exact transpose of the linearization whenever
//! `β'(y; ·)` is linear with slope `ζ`, so duality identities hold to rounding.

use crate::beta::{mollify_deriv, MollifierPsi, Nonlinearity, PiecewiseLinearBeta};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid2D};
use crate::heaviside::Heaviside;
use crate::linalg::BandedCholesky;

/// Armijo sufficient-decrease constant on `½‖R‖²`.
pub const ARMIJO: f64 = 1e-4;
/// Maximum number of step halvings per Newton iteration.
const MAX_HALVINGS: usize = 40;

/// Outcome of a nonlinear solve. `converged` implies `final_residual ≤ tol`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Sup-norm of the nonlinear residual.
    pub final_residual: f64,
    pub converged: bool,
    pub damping_events: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions {
    /// Sup-norm residual tolerance.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 50 }
    }
}

/// Default kink band `1e−8 (1 + ‖y‖_∞)`.
pub fn default_kink_band(y: &[f64]) -> f64 {
    1e-8 * (1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn half_sq(v: &[f64]) -> f64 {
    0.5 * v.iter().map(|x| x * x).sum::<f64>()
}

/// Damped semismooth Newton for `R(x) = 0` with Jacobian `−Δ_h + diag(J(x))`.
fn semismooth_newton(
    grid: &Grid2D,
    mut x: Vec<f64>,
    opts: NewtonOptions,
    residual: impl Fn(&[f64]) -> Vec<f64>,
    jac_diag: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<(Vec<f64>, SolveReport)> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be > 0, got {}", opts.tol)));
    }
    let mut r = residual(&x);
    let mut report = SolveReport { iterations: 0, final_residual: sup(&r), converged: false, damping_events: 0 };
    while report.final_residual > opts.tol && report.iterations < opts.max_iter {
        let chol = BandedCholesky::five_point(grid, &jac_diag(&x))?;
        let dx = chol.solve(&r);
        let phi = half_sq(&r);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a - t * d).collect();
            let rt = residual(&trial);
            if half_sq(&rt) <= (1.0 - 2.0 * ARMIJO * t) * phi {
                accepted = Some((trial, rt));
                break;
            }
            t *= 0.5;
            report.damping_events += 1;
        }
        report.iterations += 1;
        match accepted {
            Some((trial, rt)) => {
                x = trial;
                r = rt;
                report.final_residual = sup(&r);
            }
            // No decrease possible at working precision.
            None => break,
        }
    }
    report.converged = report.final_residual <= opts.tol;
    Ok((x, report))
}

/// Coefficient `(1/ε) H_ε(g)` of the zeroth-order term.
fn reaction(g: &[f64], heav: Heaviside) -> Vec<f64> {
    g.iter().map(|&v| heav.value(v) / heav.eps()).collect()
}

fn check_fields(grid: &Grid2D, fields: &[&[f64]]) -> Result<()> {
    fields.iter().try_for_each(|f| grid.check(f))
}

/// Residual of the discrete state equation.
pub fn state_residual(
    grid: &Grid2D,
    beta: &dyn Nonlinearity,
    eps: f64,
    g: &[f64],
    f: &[f64],
    y: &[f64],
) -> Result<Field> {
    let heav = Heaviside::new(eps)?;
    check_fields(grid, &[g, f, y])?;
    let c = reaction(g, heav);
    let mut r = grid.apply_laplacian(y);
    for k in 0..y.len() {
        r[k] += beta.value(y[k]) + c[k] * y[k] - f[k] - eps * g[k];
    }
    Ok(r)
}

/// Solves the state equation; `init` is an optional starting guess.
pub fn solve_state(
    grid: &Grid2D,
    beta: &dyn Nonlinearity,
    eps: f64,
    g: &[f64],
    f: &[f64],
    opts: NewtonOptions,
    init: Option<&[f64]>,
) -> Result<(Field, SolveReport)> {
    let heav = Heaviside::new(eps)?;
    check_fields(grid, &[g, f])?;
    let c = reaction(g, heav);
    let rhs: Vec<f64> = f.iter().zip(g).map(|(fk, gk)| fk + eps * gk).collect();
    let x0 = match init {
        Some(y0) => {
            grid.check(y0)?;
            y0.to_vec()
        }
        None => vec![0.0; grid.len()],
    };
    let (y, report) = semismooth_newton(
        grid,
        x0,
        opts,
        |y| {
            let mut r = grid.apply_laplacian(y);
            for k in 0..y.len() {
                r[k] += beta.value(y[k]) + c[k] * y[k] - rhs[k];
            }
            r.into_vec()
        },
        |y| (0..y.len()).map(|k| beta.one_sided(y[k], 0.0).1 + c[k]).collect(),
    )?;
    Ok((Field::from_vec(y)?, report))
}

/// The linearized operator at a fixed `(g, y)`, reusable across directions.
///
/// When no node lies in the kink band the equation is linear in `u` and is
/// solved with one cached factorization; otherwise `β'(y; u)` uses the
/// one-sided slopes and the piecewise-linear equation goes through Newton.
pub struct Linearization<'a> {
    grid: &'a Grid2D,
    eps: f64,
    slopes: Vec<(f64, f64)>,
    reaction: Vec<f64>,
    /// `(1/ε) H'_ε(g) y`.
    coupling: Vec<f64>,
    opts: NewtonOptions,
    linear: Option<BandedCholesky>,
}

impl<'a> Linearization<'a> {
    pub fn new(
        grid: &'a Grid2D,
        beta: &dyn Nonlinearity,
        eps: f64,
        g: &[f64],
        y: &[f64],
        opts: NewtonOptions,
        kink_band: Option<f64>,
    ) -> Result<Self> {
        let heav = Heaviside::new(eps)?;
        check_fields(grid, &[g, y])?;
        let band = kink_band.unwrap_or_else(|| default_kink_band(y));
        let slopes: Vec<(f64, f64)> = y.iter().map(|&v| beta.one_sided(v, band)).collect();
        let reaction = reaction(g, heav);
        let coupling = (0..y.len()).map(|k| heav.deriv(g[k]) / eps * y[k]).collect();
        let linear = if slopes.iter().all(|(l, r)| l == r) {
            let diag: Vec<f64> = slopes.iter().zip(&reaction).map(|((_, r), c)| r + c).collect();
            Some(BandedCholesky::five_point(grid, &diag)?)
        } else {
            None
        };
        Ok(Self { grid, eps, slopes, reaction, coupling, opts, linear })
    }

    /// Slopes `(β'₋(y), β'₊(y))` per node as seen by the linearization.
    pub fn slopes(&self) -> &[(f64, f64)] {
        &self.slopes
    }

    pub fn residual(&self, u: &[f64], h: &[f64]) -> Field {
        let mut r = self.grid.apply_laplacian(u);
        for k in 0..u.len() {
            let (l, rt) = self.slopes[k];
            r[k] += rt * u[k].max(0.0) + l * u[k].min(0.0) + self.reaction[k] * u[k]
                - (self.eps * h[k] - self.coupling[k] * h[k]);
        }
        r
    }

    /// Solves for `u = S'(g; h)`.
    pub fn solve(&self, h: &[f64]) -> Result<(Field, SolveReport)> {
        self.grid.check(h)?;
        let rhs: Vec<f64> = (0..h.len()).map(|k| self.eps * h[k] - self.coupling[k] * h[k]).collect();
        if let Some(chol) = &self.linear {
            let mut u = chol.solve(&rhs);
            let mut res = sup(&self.residual(&u, h));
            let mut iterations = 1;
            while res > self.opts.tol && iterations < 4 {
                let r = self.residual(&u, h);
                let du = chol.solve(&r);
                u.iter_mut().zip(&du).for_each(|(a, d)| *a -= d);
                res = sup(&self.residual(&u, h));
                iterations += 1;
            }
            let report = SolveReport { iterations, final_residual: res, converged: res <= self.opts.tol, damping_events: 0 };
            return Ok((Field::from_vec(u)?, report));
        }
        let (u, report) = semismooth_newton(
            self.grid,
            vec![0.0; self.grid.len()],
            self.opts,
            |u| {
                let mut r = self.grid.apply_laplacian(u);
                for k in 0..u.len() {
                    let (l, rt) = self.slopes[k];
                    r[k] += rt * u[k].max(0.0) + l * u[k].min(0.0) + self.reaction[k] * u[k] - rhs[k];
                }
                r.into_vec()
            },
            |u| {
                (0..u.len())
                    .map(|k| if u[k] < 0.0 { self.slopes[k].0 } else { self.slopes[k].1 } + self.reaction[k])
                    .collect()
            },
        )?;
        Ok((Field::from_vec(u)?, report))
    }
}

/// Solves the linearized equation for `u = S'(g; h)` at the state `y`.
///
/// `β'(y; u)` uses the one-sided slopes at nodes within `kink_band` of a kink,
/// so the equation is itself piecewise linear in `u`.
#[allow(clippy::too_many_arguments)]
pub fn solve_linearized(
    grid: &Grid2D,
    beta: &dyn Nonlinearity,
    eps: f64,
    g: &[f64],
    y: &[f64],
    h: &[f64],
    opts: NewtonOptions,
    kink_band: Option<f64>,
) -> Result<(Field, SolveReport)> {
    Linearization::new(grid, beta, eps, g, y, opts, kink_band)?.solve(h)
}

/// How `ζ` is chosen at nodes where the state sits on a kink.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ZetaRule {
    /// `β'_γ(y)` for a reference width `γ` ten times the kink tolerance.
    AtLimitOfMollified,
    Midpoint,
    LeftDerivative,
    RightDerivative,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZetaPolicy {
    pub rule: ZetaRule,
    /// Fixed kink tolerance; `None` uses [`default_kink_band`] of the state.
    kink_tolerance: Option<f64>,
}

impl ZetaPolicy {
    pub fn new(rule: ZetaRule) -> Self {
        Self { rule, kink_tolerance: None }
    }

    /// Uses a fixed kink tolerance, which must lie in `(0, δ/4)`.
    pub fn with_tolerance(rule: ZetaRule, tol: f64, beta: &PiecewiseLinearBeta) -> Result<Self> {
        if !(tol > 0.0 && tol < beta.delta() / 4.0) {
            return Err(Error::InvalidParameter(format!(
                "kink tolerance must lie in (0, delta/4) = (0, {}), got {tol}",
                beta.delta() / 4.0
            )));
        }
        Ok(Self { rule, kink_tolerance: Some(tol) })
    }

    pub fn kink_tolerance(&self, y: &[f64]) -> f64 {
        self.kink_tolerance.unwrap_or_else(|| default_kink_band(y))
    }
}

impl Default for ZetaPolicy {
    fn default() -> Self {
        Self::new(ZetaRule::Midpoint)
    }
}

/// Multiplier field: `β'(y)` at smooth nodes, the policy's choice at kink nodes.
pub fn select_zeta(beta: &PiecewiseLinearBeta, y: &[f64], policy: ZetaPolicy) -> Field {
    let tol = policy.kink_tolerance(y);
    let psi = (policy.rule == ZetaRule::AtLimitOfMollified).then(MollifierPsi::new);
    let values = y
        .iter()
        .map(|&v| match beta.kink_near(v, tol) {
            None => beta.slope_right(v),
            Some((k, _)) => {
                let (l, r) = (beta.slopes()[k], beta.slopes()[k + 1]);
                match policy.rule {
                    ZetaRule::Midpoint => 0.5 * (l + r),
                    ZetaRule::LeftDerivative => l,
                    ZetaRule::RightDerivative => r,
                    ZetaRule::AtLimitOfMollified => {
                        let psi = psi.as_ref().expect("built for this rule");
                        mollify_deriv(beta, psi, 10.0 * tol, v).expect("positive width")
                    }
                }
            }
        })
        .collect();
    Field::from_vec(values).expect("slopes are finite")
}

/// Midpoint of the one-sided slopes for any nonlinearity (`β'` where smooth).
pub fn midpoint_zeta(beta: &dyn Nonlinearity, y: &[f64]) -> Field {
    let band = default_kink_band(y);
    let values = y
        .iter()
        .map(|&v| {
            let (l, r) = beta.one_sided(v, band);
            0.5 * (l + r)
        })
        .collect();
    Field::from_vec(values).expect("slopes are finite")
}

/// Residual `−Δ_h p + ζ p + (1/ε) H_ε(g) p − rhs`.
pub fn adjoint_residual(grid: &Grid2D, eps: f64, g: &[f64], zeta: &[f64], p: &[f64], rhs: &[f64]) -> Result<Field> {
    let heav = Heaviside::new(eps)?;
    check_fields(grid, &[g, zeta, p, rhs])?;
    let c = reaction(g, heav);
    let mut r = grid.apply_laplacian(p);
    for k in 0..p.len() {
        r[k] += (zeta[k] + c[k]) * p[k] - rhs[k];
    }
    Ok(r)
}

/// Solves the adjoint equation by banded Cholesky with iterative refinement
/// until the sup-norm residual is at most `tol · (1 + ‖rhs‖_∞)`.
pub fn solve_adjoint(grid: &Grid2D, eps: f64, g: &[f64], zeta: &[f64], rhs: &[f64], tol: f64) -> Result<Field> {
    let heav = Heaviside::new(eps)?;
    check_fields(grid, &[g, zeta, rhs])?;
    if let Some(k) = zeta.iter().position(|&z| z < 0.0) {
        return Err(Error::InvalidParameter(format!("negative multiplier at node {k}")));
    }
    let c = reaction(g, heav);
    let diag: Vec<f64> = zeta.iter().zip(&c).map(|(z, c)| z + c).collect();
    let chol = BandedCholesky::five_point(grid, &diag)?;
    let mut p = chol.solve(rhs);
    let target = tol * (1.0 + sup(rhs));
    for _ in 0..3 {
        let r = adjoint_residual(grid, eps, g, zeta, &p, rhs)?;
        if sup(&r) <= target {
            break;
        }
        let dp = chol.solve(&r);
        p.iter_mut().zip(&dp).for_each(|(a, d)| *a -= d);
    }
    Field::from_vec(p)
}
