//! A-posteriori certificates for a candidate control `ḡ`: sampled
//! B-stationarity, the adjoint/multiplier optimality system, sign conditions,
//! both constraint qualifications and the data condition that forces `ȳ ≤ 0`.
//!
//! Measure-zero statements are reported as grid measures with an explicit
//! resolution band, never as exact zeros.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::beta::{KinkKind, Nonlinearity};
use crate::error::Result;
use crate::grid::{Field, Grid2D, Mask, Measure, Region};
use crate::objective::{Evaluator, ProblemParams};
use crate::solvers::{self, Linearization, NewtonOptions, ZetaPolicy};
use crate::wspace::{project_f, WGram};

/// Tolerances used to detect sets and judge violations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Active-set tolerance; `None` means `1e−8 (1 + ‖ḡ‖_∞)`.
    pub tol_a: Option<f64>,
    /// Kink tolerance; `None` means `1e−8 (1 + ‖ȳ‖_∞)`.
    pub tol_n: Option<f64>,
    pub tol_p: f64,
    pub tol_w: f64,
    /// Accept `vi_min ≥ −vi_accept`.
    pub vi_accept: f64,
    /// Accept `sys_residual ≤ sys_accept`.
    pub sys_accept: f64,
    /// Accept KKT density residuals up to this value.
    pub kkt_accept: f64,
    /// Dilation radius of `A`, in units of `h`.
    pub closure_radius: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tol_a: None,
            tol_n: None,
            tol_p: 1e-7,
            tol_w: 1e-6,
            vi_accept: 1e-6,
            sys_accept: 1e-8,
            kkt_accept: 1e-6,
            closure_radius: 1.5,
        }
    }
}

impl Tolerances {
    pub fn tol_a(&self, g: &[f64]) -> f64 {
        self.tol_a.unwrap_or_else(|| 1e-8 * (1.0 + sup(g)))
    }

    pub fn tol_n(&self, y: &[f64]) -> f64 {
        self.tol_n.unwrap_or_else(|| 1e-8 * (1.0 + sup(y)))
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Active set, its discrete closure, and the kink sets of the state.
#[derive(Clone, Debug, PartialEq)]
pub struct ActiveSets {
    pub a: Mask,
    pub a_closure: Mask,
    pub dn_convex: Mask,
    pub dn_concave: Mask,
}

pub fn detect_sets(
    params: &ProblemParams,
    g: &[f64],
    y: &[f64],
    tol_a: f64,
    tol_n: f64,
    closure_radius: f64,
) -> ActiveSets {
    let grid = &params.grid;
    let n = grid.len();
    let a = Mask::from_fn(n, |k| grid.mask_e.get(k) && g[k].abs() <= tol_a);
    let a_closure = grid.dilate_mask(&a, closure_radius * grid.h);
    let kind = |k: usize| params.beta.kink_near(y[k], tol_n).map(|(_, kind)| kind);
    let dn_convex = Mask::from_fn(n, |k| kind(k) == Some(KinkKind::Convex));
    let dn_concave = Mask::from_fn(n, |k| kind(k) == Some(KinkKind::Concave));
    ActiveSets { a, a_closure, dn_convex, dn_concave }
}

/// Cheap first-order stationarity probe used as the optimizer's stopping rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Probe {
    pub vi_min: f64,
    pub pg_norm: f64,
}

/// `‖P_F(g − ∇) − g‖_W`.
pub fn projected_gradient_norm(grid: &Grid2D, gram: &WGram, g: &[f64], grad: &[f64]) -> f64 {
    let g = Field::from_vec(g.to_vec()).expect("finite");
    let d = project_f(&g.axpy(-1.0, &Field::from_vec(grad.to_vec()).expect("finite")), grid).sub(&g);
    gram.norm(&d)
}

/// `1/x`, or 0 for a vanishing norm (a zero gradient gives zero steps).
fn inverse_or_zero(x: f64) -> f64 {
    if x > 0.0 {
        1.0 / x
    } else {
        0.0
    }
}

/// Linearized VI `(∇, h − g)_W / (1 + ‖h − g‖_W)` over the projected-gradient
/// points with unit and unit-norm steps.
pub fn first_order_probe(grid: &Grid2D, gram: &WGram, g: &[f64], grad: &[f64]) -> Probe {
    let gf = Field::from_vec(g.to_vec()).expect("finite");
    let grad = Field::from_vec(grad.to_vec()).expect("finite");
    let mut vi_min = 0.0f64;
    let mut pg_norm = 0.0;
    for (i, sigma) in [1.0, inverse_or_zero(gram.norm(&grad))].into_iter().enumerate() {
        let d = project_f(&gf.axpy(-sigma, &grad), grid).sub(&gf);
        let dn = gram.norm(&d);
        if i == 0 {
            pg_norm = dn;
        }
        if dn > 0.0 {
            vi_min = vi_min.min(gram.inner(&grad, &d) / (1.0 + dn));
        }
    }
    Probe { vi_min, pg_norm }
}

/// Result of the sampled variational inequality.
#[derive(Clone, Debug)]
pub struct ViResult {
    pub vi_min: f64,
    /// The feasible point `h` whose direction `h − ḡ` attains `vi_min`.
    pub worst_direction: Field,
    pub worst_index: usize,
    pub n_evaluated: usize,
    /// Normalized VI value per sampled direction (the zero direction gives 0).
    pub values: Vec<f64>,
}

/// Feasible sample points `h ∈ F` around `g`: structured candidates first,
/// then random bumps, smooth fields and perturbed gradient steps.
pub fn sample_points(grid: &Grid2D, gram: &WGram, g: &Field, grad: &Field, n: usize, seed: u64) -> Vec<Field> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inv = inverse_or_zero(gram.norm(grad));
    let mut pts = vec![
        g.clone(),
        project_f(&g.scale(-1.0), grid),
        Field::zeros(g.len()),
        g.scale(2.0),
        g.scale(0.5),
        project_f(&g.axpy(-1.0, grad), grid),
        project_f(&g.axpy(-inv, grad), grid),
        project_f(&g.axpy(inv, grad), grid),
    ];
    pts.truncate(n);
    let (lx, ly) = (grid.domain.x1 - grid.domain.x0, grid.domain.y1 - grid.domain.y0);
    let mut i = 0;
    while pts.len() < n {
        let pert = match i % 3 {
            0 => {
                let center = rng.gen_range(0..grid.len());
                let (cx, cy) = grid.node_of(center);
                let radius = rng.gen_range(1.0..4.0) * grid.h;
                let amp = rng.gen_range(0.05..1.0) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
                Field::from_fn(grid, |x, y| {
                    let r = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
                    amp * (1.0 - r / radius).max(0.0)
                })
            }
            1 => {
                let amp = 10f64.powf(rng.gen_range(-2.0..0.0));
                let coef: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
                Field::from_fn(grid, |x, y| {
                    let (sx, sy) = ((x - grid.domain.x0) / lx, (y - grid.domain.y0) / ly);
                    let mut v = 0.0;
                    for m in 0..4 {
                        for l in 0..4 {
                            let (fm, fl) = ((m + 1) as f64, (l + 1) as f64);
                            v += coef[4 * m + l] / (fm * fl) * (fm * PI * sx).sin() * (fl * PI * sy).sin();
                        }
                    }
                    amp * v
                })
            }
            _ => {
                let t = 10f64.powf(rng.gen_range(-1.0..1.0)) * inv;
                let noise = rng.gen_range(0.0..0.1);
                let (fx, fy) = (rng.gen_range(1.0..5.0), rng.gen_range(1.0..5.0));
                grad.scale(-t).add(&Field::from_fn(grid, |x, y| noise * (fx * PI * x).sin() * (fy * PI * y).cos()))
            }
        };
        pts.push(project_f(&g.add(&pert), grid));
        i += 1;
    }
    pts
}

/// Shared data for evaluating VI values along sampled directions.
struct ViContext<'a> {
    params: &'a ProblemParams,
    gram: &'a WGram,
    g: &'a Field,
    lin: Linearization<'a>,
    /// `2 χ_E (ȳ − y_d)`.
    tracking: Field,
    hprime: Field,
    shift: Field,
}

impl<'a> ViContext<'a> {
    fn new(params: &'a ProblemParams, gram: &'a WGram, g: &'a Field, y: &Field, newton: NewtonOptions) -> Result<Self> {
        let grid = &params.grid;
        let lin = Linearization::new(grid, &params.beta, params.eps, g, y, newton, None)?;
        Ok(Self {
            params,
            gram,
            g,
            lin,
            tracking: params.adjoint_rhs(y),
            hprime: params.heaviside().deriv_field(g),
            shift: g.sub(&params.g_sh),
        })
    }

    /// Primal VI value for `d = h − ḡ`, normalized by `1 + ‖d‖_W`.
    fn primal(&self, h: &Field) -> Result<(f64, Field, Field)> {
        let grid = &self.params.grid;
        let d = h.sub(self.g);
        let (u, _) = self.lin.solve(&d)?;
        let raw = grid.dot(&self.tracking, &u) - self.params.alpha * grid.dot(&self.hprime, &d)
            + self.gram.inner(&self.shift, &d);
        Ok((raw / (1.0 + self.gram.norm(&d)), d, u))
    }
}

fn worker_count(n: usize) -> usize {
    std::thread::available_parallelism().map_or(1, |p| p.get()).min(8).min(n.max(1))
}

/// Evaluates `f` on every point in parallel; results keep the input order.
fn par_map<T: Send>(points: &[Field], f: impl Fn(&Field) -> Result<T> + Sync) -> Result<Vec<T>> {
    let workers = worker_count(points.len());
    let chunk = points.len().div_ceil(workers).max(1);
    let results: Vec<Result<Vec<T>>> = std::thread::scope(|s| {
        let handles: Vec<_> = points
            .chunks(chunk)
            .map(|c| {
                let f = &f;
                s.spawn(move || c.iter().map(f).collect::<Result<Vec<T>>>())
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(points.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

fn argmin(values: &[f64], skip_first: bool) -> (usize, f64) {
    let start = usize::from(skip_first && values.len() > 1);
    let mut best = (start, values[start]);
    for (i, &v) in values.iter().enumerate().skip(start) {
        if v < best.1 {
            best = (i, v);
        }
    }
    best
}

/// Sampled B-stationarity: `min_h VI(h − ḡ) / (1 + ‖h − ḡ‖_W)` over `h ∈ F`.
pub fn check_vi(params: &ProblemParams, gram: &WGram, g: &Field, n_samples: usize, seed: u64) -> Result<ViResult> {
    check_vi_with(params, gram, g, n_samples, seed, NewtonOptions::default())
}

pub fn check_vi_with(
    params: &ProblemParams,
    gram: &WGram,
    g: &Field,
    n_samples: usize,
    seed: u64,
    newton: NewtonOptions,
) -> Result<ViResult> {
    let ev = Evaluator { newton, ..Evaluator::new(params, gram) };
    let fv = ev.first_variation(g, None)?;
    let points = sample_points(&params.grid, gram, g, &fv.grad_w, n_samples.max(1), seed);
    let ctx = ViContext::new(params, gram, g, &fv.y, newton)?;
    let values = par_map(&points, |h| ctx.primal(h).map(|r| r.0))?;
    let (worst_index, vi_min) = argmin(&values, true);
    Ok(ViResult {
        vi_min,
        worst_direction: points[worst_index].clone(),
        worst_index,
        n_evaluated: values.len(),
        values,
    })
}

/// The VI implied by a candidate `(p, ζ)` through the adjoint identity:
/// `(q_p, d) + (ḡ − ḡ_sh, d)_W + (ζ p, u) − (β'(ȳ; u), p)` with `u = S'(ḡ; d)`.
/// It coincides with the primal VI when `p` solves the adjoint equation.
#[allow(clippy::too_many_arguments)]
pub fn check_vi_system(
    params: &ProblemParams,
    gram: &WGram,
    g: &Field,
    y: &Field,
    p: &Field,
    zeta: &Field,
    n_samples: usize,
    seed: u64,
) -> Result<ViResult> {
    let grid = &params.grid;
    let ev = Evaluator::new(params, gram);
    let fv = ev.first_variation(g, None)?;
    let points = sample_points(grid, gram, g, &fv.grad_w, n_samples.max(1), seed);
    let ctx = ViContext::new(params, gram, g, y, NewtonOptions::default())?;
    let q = params.gradient_density(g, y, p);
    let values = par_map(&points, |h| {
        let d = h.sub(g);
        let (u, _) = ctx.lin.solve(&d)?;
        let slopes = ctx.lin.slopes();
        let bracket: Vec<f64> = (0..u.len())
            .map(|k| {
                let (l, r) = slopes[k];
                zeta[k] * p[k] * u[k] - (r * u[k].max(0.0) + l * u[k].min(0.0)) * p[k]
            })
            .collect();
        let raw = grid.dot(&q, &d) + gram.inner(&ctx.shift, &d) + grid.integrate(&bracket, Region::D);
        Ok(raw / (1.0 + gram.norm(&d)))
    })?;
    let (worst_index, vi_min) = argmin(&values, true);
    Ok(ViResult {
        vi_min,
        worst_direction: points[worst_index].clone(),
        worst_index,
        n_evaluated: values.len(),
        values,
    })
}

/// Residuals of the adjoint/multiplier optimality system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SystemReport {
    /// Sup-norm residual of the adjoint equation.
    pub sys_residual: f64,
    /// Measure of nodes where `ζ` leaves `[min(β'₋, β'₊), max(β'₋, β'₊)]`.
    pub zeta_violation: Measure,
    /// Sup of `|q + W-density(ḡ − ḡ_sh)|` on `E ∖ A`.
    pub kkt_interior_residual: f64,
    /// Measure of `{x ∈ A : density > tol_p}` (the inequality on the active set).
    pub kkt_active_violation: Measure,
    /// Dual `W`-norm of the KKT functional restricted to `D ∖ Ē`.
    pub de_residual: f64,
    /// Measure of `{x ∈ A : ε p > ḡ_sh + tol_p}`.
    pub active_chain_violation: Measure,
}

/// KKT density `q + W(ḡ − ḡ_sh)/h²`.
pub fn kkt_density(params: &ProblemParams, gram: &WGram, g: &[f64], y: &[f64], p: &[f64]) -> Field {
    let q = params.gradient_density(g, y, p);
    let shift: Vec<f64> = g.iter().zip(params.g_sh.iter()).map(|(a, b)| a - b).collect();
    q.add(&gram.density(&shift))
}

#[allow(clippy::too_many_arguments)]
pub fn check_system(
    params: &ProblemParams,
    gram: &WGram,
    g: &Field,
    y: &Field,
    p: &Field,
    zeta: &Field,
    sets: &ActiveSets,
    tol: &Tolerances,
) -> Result<SystemReport> {
    let grid = &params.grid;
    let rhs = params.adjoint_rhs(y);
    let sys_residual = solvers::adjoint_residual(grid, params.eps, g, zeta, p, &rhs)?.sup_norm();
    let tol_n = tol.tol_n(y);
    let bad_zeta = Mask::from_fn(grid.len(), |k| {
        let (l, r) = params.beta.one_sided(y[k], tol_n);
        let slack = 1e-12 * (1.0 + l.abs().max(r.abs()));
        zeta[k] < l.min(r) - slack || zeta[k] > l.max(r) + slack
    });
    let r = kkt_density(params, gram, g, y, p);
    let interior = grid.mask_e.minus(&sets.a);
    let kkt_interior_residual = interior.indices().fold(0.0f64, |m, k| m.max(r[k].abs()));
    let active_bad = Mask::from_fn(grid.len(), |k| sets.a.get(k) && r[k] > tol.tol_p);
    let r_de = Field::from_vec((0..grid.len()).map(|k| if grid.mask_de.get(k) { r[k] } else { 0.0 }).collect())?;
    let de_residual = grid.dot(&r_de, &gram.riesz(&r_de)).abs().sqrt();
    let chain_bad =
        Mask::from_fn(grid.len(), |k| sets.a.get(k) && params.eps * p[k] > params.g_sh[k] + tol.tol_p);
    Ok(SystemReport {
        sys_residual,
        zeta_violation: grid.measure(&bad_zeta),
        kkt_interior_residual,
        kkt_active_violation: grid.measure(&active_bad),
        de_residual,
        active_chain_violation: grid.measure(&chain_bad),
    })
}

/// Sign-condition violation measures for the adjoint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignReport {
    /// `μ{p > tol_p on Dn_convex ∖ Ā}`.
    pub convex: Measure,
    /// `μ{p < −tol_p on Dn_concave ∖ Ā}`.
    pub concave: Measure,
    /// `μ{p > tol_p on A}`.
    pub active: Measure,
    /// Variant on the full kink sets, evaluated when `μ(A) ≤ h²`.
    pub strengthened: Option<(Measure, Measure)>,
}

pub fn check_signs(grid: &Grid2D, p: &[f64], sets: &ActiveSets, tol_p: f64) -> SignReport {
    let n = grid.len();
    let conv = sets.dn_convex.minus(&sets.a_closure);
    let conc = sets.dn_concave.minus(&sets.a_closure);
    let convex = grid.measure(&Mask::from_fn(n, |k| conv.get(k) && p[k] > tol_p));
    let concave = grid.measure(&Mask::from_fn(n, |k| conc.get(k) && p[k] < -tol_p));
    let active = grid.measure(&Mask::from_fn(n, |k| sets.a.get(k) && p[k] > tol_p));
    let strengthened = (sets.a.count() <= 1).then(|| {
        (
            grid.measure(&Mask::from_fn(n, |k| sets.dn_convex.get(k) && p[k] > tol_p)),
            grid.measure(&Mask::from_fn(n, |k| sets.dn_concave.get(k) && p[k] < -tol_p)),
        )
    });
    SignReport { convex, concave, active, strengthened }
}

/// Diagnostics of the constraint qualification on `w = (1/ε) H'_ε(ḡ) ȳ − ε`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CqHa {
    /// `μ{x ∈ D ∖ Ē : |w| ≤ tol_w}`.
    pub near_zero: Measure,
    /// `∫_{D∖Ē} 1/w²` over nodes with `|w| > tol_w`.
    pub integral: f64,
    /// `μ(D ∖ Ē)/ε²`, the value when `H'_ε(ḡ)` vanishes off `Ē`.
    pub reference: f64,
    /// Resolution band of `integral` against `reference`.
    pub band: f64,
    /// Number of nodes excluded from the integral.
    pub excluded: usize,
}

pub fn check_cq_ha(params: &ProblemParams, g: &[f64], y: &[f64], tol_w: f64) -> CqHa {
    let grid = &params.grid;
    let heav = params.heaviside();
    let eps = params.eps;
    let w: Vec<f64> = (0..g.len()).map(|k| heav.deriv(g[k]) / eps * y[k] - eps).collect();
    let near = Mask::from_fn(grid.len(), |k| grid.mask_de.get(k) && w[k].abs() <= tol_w);
    let excluded = (0..g.len()).filter(|&k| grid.weight(Region::DMinusE, k) > 0.0 && w[k].abs() <= tol_w).count();
    let inv: Vec<f64> = w.iter().map(|&v| if v.abs() > tol_w { 1.0 / (v * v) } else { 0.0 }).collect();
    let mu = grid.measure_de();
    CqHa {
        near_zero: grid.measure(&near),
        integral: grid.integrate(&inv, Region::DMinusE),
        reference: mu.value / (eps * eps),
        band: mu.band / (eps * eps),
        excluded,
    }
}

/// `μ[(Dn_convex ∩ (Ā ∖ A)) ∪ (Dn_concave ∩ Ā)]`.
pub fn check_cq_cc(grid: &Grid2D, sets: &ActiveSets) -> Measure {
    let ring = sets.a_closure.minus(&sets.a);
    let bad = sets.dn_convex.and(&ring).or(&sets.dn_concave.and(&sets.a_closure));
    grid.measure(&bad)
}

/// Data condition `sup_E f ≤ β(0)`, `sup_{D∖Ē} f < β(0)`, and the resulting state sign.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DataCondition {
    pub ok_e: bool,
    pub ok_de: bool,
    /// `β(0) − sup_E f`.
    pub margin_e: f64,
    /// `β(0) − sup_{D∖Ē} f`.
    pub margin_de: f64,
    /// Nodes attaining the suprema.
    pub witness_e: usize,
    pub witness_de: usize,
    /// `max ȳ` when the condition holds and a feasible control was supplied.
    pub state_max: Option<f64>,
}

impl DataCondition {
    pub fn flag(&self) -> bool {
        self.ok_e && self.ok_de
    }
}

pub fn check_data_condition(params: &ProblemParams, g: Option<&[f64]>, newton: NewtonOptions) -> Result<DataCondition> {
    let grid = &params.grid;
    let b0 = params.beta.eval(0.0);
    let argmax = |mask: &Mask| {
        mask.indices().fold((usize::MAX, f64::NEG_INFINITY), |best, k| if params.f[k] > best.1 { (k, params.f[k]) } else { best })
    };
    let (witness_e, sup_e) = argmax(&grid.mask_e);
    let (witness_de, sup_de) = argmax(&grid.mask_de);
    let (margin_e, margin_de) = (b0 - sup_e, b0 - sup_de);
    let mut dc = DataCondition {
        ok_e: margin_e >= 0.0,
        ok_de: margin_de > 0.0,
        margin_e,
        margin_de,
        witness_e,
        witness_de,
        state_max: None,
    };
    if let Some(g) = g {
        if dc.flag() && crate::wspace::is_feasible(g, grid) {
            let (y, rep) = solvers::solve_state(grid, &params.beta, params.eps, g, &params.f, newton, None)?;
            if rep.converged {
                dc.state_max = Some(y.max());
            }
        }
    }
    Ok(dc)
}

/// Outcome of the equivalence check between the optimality system and the VI.
#[derive(Clone, Debug)]
pub struct EquivalenceReport {
    /// Measure of nodes where `ζ p ∉ [min(β'₊p, β'₋p), max(β'₊p, β'₋p)]`.
    pub bracket_violation: Measure,
    pub preconditions_ok: bool,
    pub vi_min: f64,
    pub holds: bool,
}

/// Verifies the pointwise bracket, the system/sign/CQ preconditions and the
/// sampled VI for the candidate `(ḡ, ȳ, p, ζ)`.
#[allow(clippy::too_many_arguments)]
pub fn check_equivalence(
    params: &ProblemParams,
    gram: &WGram,
    g: &Field,
    y: &Field,
    p: &Field,
    zeta: &Field,
    n_samples: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<EquivalenceReport> {
    let grid = &params.grid;
    let tol_n = tol.tol_n(y);
    let bad = Mask::from_fn(grid.len(), |k| {
        let (l, r) = params.beta.one_sided(y[k], tol_n);
        let (a, b) = (r * p[k], l * p[k]);
        let v = zeta[k] * p[k];
        let slack = 1e-12 * (1.0 + a.abs().max(b.abs()));
        v < a.min(b) - slack || v > a.max(b) + slack
    });
    let bracket_violation = grid.measure(&bad);
    let sets = detect_sets(params, g, y, tol.tol_a(g), tol_n, tol.closure_radius);
    let sys = check_system(params, gram, g, y, p, zeta, &sets, tol)?;
    let signs = check_signs(grid, p, &sets, tol.tol_p);
    let cc = check_cq_cc(grid, &sets);
    let preconditions_ok = sys.sys_residual <= tol.sys_accept
        && sys.zeta_violation.within_band()
        && sys.kkt_interior_residual <= tol.kkt_accept
        && signs.convex.within_band()
        && signs.concave.within_band()
        && signs.active.within_band()
        && cc.within_band();
    let vi = check_vi(params, gram, g, n_samples, seed)?;
    let holds = bracket_violation.value == 0.0 && preconditions_ok && vi.vi_min >= -tol.vi_accept;
    Ok(EquivalenceReport { bracket_violation, preconditions_ok, vi_min: vi.vi_min, holds })
}

/// All certificate outputs for one candidate, in a fixed serialization order.
#[derive(Clone, Debug, PartialEq)]
pub struct StationarityReport {
    pub seed: u64,
    pub n_samples: usize,
    pub vi_min: f64,
    pub vi_worst_index: usize,
    pub sys_residual: f64,
    pub zeta_violation: Measure,
    pub sign_violation_convex: Measure,
    pub sign_violation_concave: Measure,
    pub sign_violation_active: Measure,
    pub strengthened: Option<(Measure, Measure)>,
    pub kkt_interior_residual: f64,
    pub kkt_active_violation: Measure,
    pub de_residual: f64,
    pub active_chain_violation: Measure,
    pub cq_ha: CqHa,
    pub cq_cc_measure: Measure,
    pub data_condition: DataCondition,
    pub measure_a: Measure,
    pub measure_ring: Measure,
    pub measure_dn_convex: Measure,
    pub measure_dn_concave: Measure,
    pub certified: bool,
}

/// A serialized report value.
pub enum Value {
    F(f64),
    U(u64),
    B(bool),
    Missing,
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Value::F(v) => write!(f, "{v:.16e}"),
            Value::U(v) => write!(f, "{v}"),
            Value::B(v) => write!(f, "{v}"),
            Value::Missing => write!(f, "none"),
        }
    }
}

impl StationarityReport {
    /// Flat `(key, value)` list in serialization order.
    pub fn entries(&self) -> Vec<(String, Value)> {
        use Value::*;
        let mut out: Vec<(String, Value)> = Vec::new();
        let mut m = |name: &str, v: Measure| {
            out.push((name.to_string(), F(v.value)));
            out.push((format!("{name}_band"), F(v.band)));
        };
        m("zeta_violation", self.zeta_violation);
        m("sign_violation_convex", self.sign_violation_convex);
        m("sign_violation_concave", self.sign_violation_concave);
        m("sign_violation_active", self.sign_violation_active);
        match self.strengthened {
            Some((a, b)) => {
                m("sign_violation_convex_full", a);
                m("sign_violation_concave_full", b);
            }
            None => {
                out.push(("sign_violation_convex_full".into(), Missing));
                out.push(("sign_violation_convex_full_band".into(), Missing));
                out.push(("sign_violation_concave_full".into(), Missing));
                out.push(("sign_violation_concave_full_band".into(), Missing));
            }
        }
        let mut m2 = |name: &str, v: Measure| {
            out.push((name.to_string(), F(v.value)));
            out.push((format!("{name}_band"), F(v.band)));
        };
        m2("kkt_active_violation", self.kkt_active_violation);
        m2("active_chain_violation", self.active_chain_violation);
        m2("cq_ha_near_zero", self.cq_ha.near_zero);
        m2("cq_cc_measure", self.cq_cc_measure);
        m2("measure_active", self.measure_a);
        m2("measure_closure_ring", self.measure_ring);
        m2("measure_dn_convex", self.measure_dn_convex);
        m2("measure_dn_concave", self.measure_dn_concave);
        let dc = &self.data_condition;
        let mut head: Vec<(String, Value)> = vec![
            ("seed".into(), U(self.seed)),
            ("n_samples".into(), U(self.n_samples as u64)),
            ("vi_min".into(), F(self.vi_min)),
            ("vi_worst_index".into(), U(self.vi_worst_index as u64)),
            ("sys_residual".into(), F(self.sys_residual)),
            ("kkt_interior_residual".into(), F(self.kkt_interior_residual)),
            ("de_residual".into(), F(self.de_residual)),
            ("cq_ha_integral".into(), F(self.cq_ha.integral)),
            ("cq_ha_reference".into(), F(self.cq_ha.reference)),
            ("cq_ha_band".into(), F(self.cq_ha.band)),
            ("cq_ha_excluded".into(), U(self.cq_ha.excluded as u64)),
            ("data_condition_ok".into(), B(dc.flag())),
            ("data_margin_e".into(), F(dc.margin_e)),
            ("data_margin_de".into(), F(dc.margin_de)),
            ("data_state_max".into(), dc.state_max.map_or(Missing, F)),
        ];
        head.append(&mut out);
        head.push(("certified".into(), B(self.certified)));
        head
    }

    /// Flat `key = value` block, one entry per line.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    pub fn csv_header(&self) -> String {
        self.entries().iter().map(|(k, _)| k.as_str()).collect::<Vec<_>>().join(",")
    }

    pub fn csv_row(&self) -> String {
        self.entries().iter().map(|(_, v)| v.to_string()).collect::<Vec<_>>().join(",")
    }
}

/// Options for [`certify`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CertifyOptions {
    pub tolerances: Tolerances,
    pub n_samples: usize,
    pub seed: u64,
    pub newton: NewtonOptions,
    pub zeta_policy: ZetaPolicy,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::default(),
            n_samples: 1000,
            seed: 0,
            newton: NewtonOptions::default(),
            zeta_policy: ZetaPolicy::default(),
        }
    }
}

/// Externally supplied companions of a candidate control.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub y: Field,
    pub p: Field,
    pub zeta: Field,
}

#[derive(Clone, Debug)]
pub struct Certificate {
    pub report: StationarityReport,
    pub candidate: Candidate,
    pub sets: ActiveSets,
    pub worst_direction: Field,
}

/// Runs every certificate on `ḡ`. Missing companions are computed from `ḡ`.
pub fn certify(
    params: &ProblemParams,
    gram: &WGram,
    g: &Field,
    candidate: Option<Candidate>,
    opts: &CertifyOptions,
) -> Result<Certificate> {
    let grid = &params.grid;
    let tol = &opts.tolerances;
    let candidate = match candidate {
        Some(c) => c,
        None => {
            let ev = Evaluator { newton: opts.newton, zeta_policy: opts.zeta_policy, ..Evaluator::new(params, gram) };
            let fv = ev.first_variation(g, None)?;
            Candidate { y: fv.y, p: fv.p, zeta: fv.zeta }
        }
    };
    let Candidate { y, p, zeta } = &candidate;
    let sets = detect_sets(params, g, y, tol.tol_a(g), tol.tol_n(y), tol.closure_radius);
    let sys = check_system(params, gram, g, y, p, zeta, &sets, tol)?;
    let signs = check_signs(grid, p, &sets, tol.tol_p);
    let cq_ha = check_cq_ha(params, g, y, tol.tol_w);
    let cq_cc = check_cq_cc(grid, &sets);
    let data = check_data_condition(params, Some(g), opts.newton)?;
    let vi = check_vi_with(params, gram, g, opts.n_samples, opts.seed, opts.newton)?;
    let certified = vi.vi_min >= -tol.vi_accept
        && sys.sys_residual <= tol.sys_accept
        && sys.zeta_violation.within_band()
        && sys.kkt_interior_residual <= tol.kkt_accept
        && sys.kkt_active_violation.within_band()
        && sys.de_residual <= tol.kkt_accept
        && sys.active_chain_violation.within_band()
        && signs.convex.within_band()
        && signs.concave.within_band()
        && signs.active.within_band()
        && cq_ha.near_zero.within_band()
        && cq_cc.within_band();
    let report = StationarityReport {
        seed: opts.seed,
        n_samples: opts.n_samples,
        vi_min: vi.vi_min,
        vi_worst_index: vi.worst_index,
        sys_residual: sys.sys_residual,
        zeta_violation: sys.zeta_violation,
        sign_violation_convex: signs.convex,
        sign_violation_concave: signs.concave,
        sign_violation_active: signs.active,
        strengthened: signs.strengthened,
        kkt_interior_residual: sys.kkt_interior_residual,
        kkt_active_violation: sys.kkt_active_violation,
        de_residual: sys.de_residual,
        active_chain_violation: sys.active_chain_violation,
        cq_ha,
        cq_cc_measure: cq_cc,
        data_condition: data,
        measure_a: grid.measure(&sets.a),
        measure_ring: grid.measure(&sets.a_closure.minus(&sets.a)),
        measure_dn_convex: grid.measure(&sets.dn_convex),
        measure_dn_concave: grid.measure(&sets.dn_concave),
        certified,
    };
    Ok(Certificate { report, candidate, sets, worst_direction: vi.worst_direction })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beta::PiecewiseLinearBeta;
    use crate::grid::Rect;

    fn params(n: usize, beta: PiecewiseLinearBeta, f: f64) -> ProblemParams {
        let grid = Grid2D::new(n, n, Rect::unit(), Rect::new(0.25, 0.75, 0.25, 0.75)).unwrap();
        let len = grid.len();
        ProblemParams::new(
            grid,
            0.1,
            1.0,
            0.5,
            Field::constant(len, f),
            Field::constant(len, -0.1),
            Field::zeros(len),
            beta,
        )
        .unwrap()
    }

    #[test]
    fn detect_sets_examples() {
        let p = params(15, PiecewiseLinearBeta::relu(), -1.0);
        let n = p.grid.len();
        let zero = Field::zeros(n);
        let s = detect_sets(&p, &zero, &zero, 1e-8, 1e-8, 1.5);
        assert_eq!(s.a, p.grid.mask_e);
        assert_eq!(s.dn_convex, Mask::full(n));
        assert_eq!(s.dn_concave.count(), 0);
        let minus = Field::constant(n, -1.0);
        let s = detect_sets(&p, &minus, &minus, 1e-8, 1e-8, 1.5);
        assert_eq!(s.a.count(), 0);
        assert_eq!(s.a_closure.count(), 0);
        assert!(s.a.is_subset_of(&s.a_closure));
    }

    #[test]
    fn sign_examples() {
        let p = params(15, PiecewiseLinearBeta::relu(), -1.0);
        let grid = &p.grid;
        let n = grid.len();
        let sets = ActiveSets {
            a: Mask::empty(n),
            a_closure: Mask::empty(n),
            dn_convex: Mask::full(n),
            dn_concave: Mask::empty(n),
        };
        let r = check_signs(grid, &Field::zeros(n), &sets, 1e-7);
        assert_eq!(r.convex.value + r.concave.value + r.active.value, 0.0);
        let r = check_signs(grid, &Field::constant(n, 1.0), &sets, 1e-7);
        assert!((r.convex.value - grid.measure(&Mask::full(n)).value).abs() < 1e-15);
        assert!(r.strengthened.is_some());
    }

    #[test]
    fn cq_cc_examples() {
        let p = params(15, PiecewiseLinearBeta::relu(), -1.0);
        let grid = &p.grid;
        let n = grid.len();
        let empty = ActiveSets {
            a: Mask::empty(n),
            a_closure: Mask::empty(n),
            dn_convex: Mask::full(n),
            dn_concave: Mask::full(n),
        };
        assert_eq!(check_cq_cc(grid, &empty).value, 0.0);
        let no_ring = ActiveSets {
            a: grid.mask_e.clone(),
            a_closure: grid.mask_e.clone(),
            dn_convex: Mask::full(n),
            dn_concave: Mask::empty(n),
        };
        assert_eq!(check_cq_cc(grid, &no_ring).value, 0.0);
        let fail = ActiveSets {
            a: grid.mask_e.clone(),
            a_closure: grid.mask_e.clone(),
            dn_convex: Mask::empty(n),
            dn_concave: grid.mask_e.clone(),
        };
        let m = check_cq_cc(grid, &fail);
        assert!((m.value - 0.25).abs() <= m.band);
    }

    #[test]
    fn cq_ha_examples() {
        let p = params(31, PiecewiseLinearBeta::relu(), -1.0);
        let n = p.grid.len();
        let neg = Field::constant(n, -0.5);
        let y = Field::constant(n, -0.3);
        let r = check_cq_ha(&p, &neg, &y, 1e-6);
        assert_eq!(r.near_zero.value, 0.0);
        assert!((r.reference - 75.0).abs() < 1e-9);
        assert!((r.integral - r.reference).abs() <= r.band);
        let at_eps = Field::from_fn(&p.grid, |_, _| 0.1);
        let r2 = check_cq_ha(&p, &at_eps, &y, 1e-6);
        assert_eq!(r2.integral, r.integral);
        // w vanishes where ḡ = ε/2 and ȳ = 2ε³/3.
        let eps: f64 = 0.1;
        let patch = |x: f64, yy: f64| x < 0.2 && yy < 0.2;
        let g = Field::from_fn(&p.grid, |x, yy| if patch(x, yy) { eps / 2.0 } else { -1.0 });
        let yv = Field::from_fn(&p.grid, |x, yy| if patch(x, yy) { 2.0 * eps.powi(3) / 3.0 } else { -0.3 });
        let r3 = check_cq_ha(&p, &g, &yv, 1e-6);
        let nodes = (0..n).filter(|&k| {
            let (x, yy) = p.grid.node_of(k);
            patch(x, yy)
        });
        let area = nodes.count() as f64 * p.grid.h * p.grid.h;
        assert!((r3.near_zero.value - area).abs() < 1e-12);
        assert!(r3.excluded > 0);
    }

    #[test]
    fn data_condition_examples() {
        let p = params(31, PiecewiseLinearBeta::relu(), -1.0);
        let zero = Field::zeros(p.grid.len());
        let dc = check_data_condition(&p, Some(&zero), NewtonOptions::default()).unwrap();
        assert!(dc.flag());
        assert_eq!(dc.margin_e, 1.0);
        assert!(dc.state_max.unwrap() <= 1e-10);
        let p1 = params(15, PiecewiseLinearBeta::relu(), 1.0);
        assert!(!check_data_condition(&p1, None, NewtonOptions::default()).unwrap().flag());
        let p0 = params(15, PiecewiseLinearBeta::relu(), 0.0);
        let dc0 = check_data_condition(&p0, None, NewtonOptions::default()).unwrap();
        assert!(dc0.ok_e && !dc0.ok_de);
    }

    #[test]
    fn system_perturbations_are_detected() {
        let p = params(15, PiecewiseLinearBeta::relu(), -1.0);
        let gram = WGram::new(&p.grid, 0.5).unwrap();
        let g = Field::constant(p.grid.len(), -0.05);
        let fv = Evaluator::new(&p, &gram).first_variation(&g, None).unwrap();
        let tol = Tolerances::default();
        let sets = detect_sets(&p, &g, &fv.y, tol.tol_a(&g), tol.tol_n(&fv.y), 1.5);
        let base = check_system(&p, &gram, &g, &fv.y, &fv.p, &fv.zeta, &sets, &tol).unwrap();
        assert!(base.sys_residual <= 1e-8);
        // +1 on one interior E node moves the KKT density there by |ε − H'ȳ/ε| = ε.
        let k = p.grid.index(7, 7);
        let mut pp = fv.p.clone();
        pp[k] += 1.0;
        let r = check_system(&p, &gram, &g, &fv.y, &pp, &fv.zeta, &sets, &tol).unwrap();
        let dens = kkt_density(&p, &gram, &g, &fv.y, &fv.p);
        assert!((r.kkt_interior_residual - (dens[k] + 0.1).abs().max(base.kkt_interior_residual)).abs() < 1e-12);
        // ζ outside the slope interval on one node.
        let mut z = fv.zeta.clone();
        z[k] = 2.0;
        let r = check_system(&p, &gram, &g, &fv.y, &fv.p, &z, &sets, &tol).unwrap();
        assert!(r.zeta_violation.value >= p.grid.h * p.grid.h);
    }

    #[test]
    fn zero_inputs_have_no_violations() {
        let p = params(11, PiecewiseLinearBeta::relu(), -1.0);
        let n = p.grid.len();
        let sets = ActiveSets {
            a: Mask::empty(n),
            a_closure: Mask::empty(n),
            dn_convex: Mask::full(n),
            dn_concave: Mask::full(n),
        };
        let s = check_signs(&p.grid, &Field::zeros(n), &sets, 1e-7);
        assert_eq!(s.convex.value + s.concave.value + s.active.value, 0.0);
    }

    #[test]
    fn bracket_examples() {
        // Convex kink, p = −1, ζ = 0.3: ζp = −0.3 ∈ [−1, 0].
        let beta = PiecewiseLinearBeta::relu();
        let (l, r) = beta.one_sided(0.0, 1e-8);
        let (pv, z) = (-1.0, 0.3);
        let (a, b) = (r * pv, l * pv);
        assert!(z * pv >= a.min(b) && z * pv <= a.max(b));
    }

    #[test]
    fn vi_zero_direction_and_duality_with_the_system_form() {
        let p = params(15, PiecewiseLinearBeta::relu(), -1.0);
        let gram = WGram::new(&p.grid, 0.5).unwrap();
        let g = Field::from_fn(&p.grid, |x, y| -0.02 * (x + y));
        let vi = check_vi(&p, &gram, &g, 40, 3).unwrap();
        assert_eq!(vi.values[0], 0.0);
        assert_eq!(vi.n_evaluated, 40);
        let fv = Evaluator::new(&p, &gram).first_variation(&g, None).unwrap();
        let sys = check_vi_system(&p, &gram, &g, &fv.y, &fv.p, &fv.zeta, 40, 3).unwrap();
        for (a, b) in vi.values.iter().zip(&sys.values) {
            assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
        }
        // Determinism.
        let again = check_vi(&p, &gram, &g, 40, 3).unwrap();
        assert_eq!(again.values, vi.values);
    }

    #[test]
    fn report_serialization_is_flat_and_aligned() {
        let p = params(11, PiecewiseLinearBeta::relu(), -1.0);
        let gram = WGram::new(&p.grid, 0.5).unwrap();
        let g = Field::constant(p.grid.len(), -0.01);
        let opts = CertifyOptions { n_samples: 20, ..Default::default() };
        let c = certify(&p, &gram, &g, None, &opts).unwrap();
        let header = c.report.csv_header();
        let row = c.report.csv_row();
        assert_eq!(header.split(',').count(), row.split(',').count());
        assert!(c.report.to_kv().lines().all(|l| l.contains(" = ")));
    }

    #[test]
    fn zero_gradient_gives_finite_samples() {
        let p = params(7, PiecewiseLinearBeta::relu(), 0.0);
        let gram = WGram::new(&p.grid, p.s).unwrap();
        let zero = Field::zeros(p.grid.len());
        let pts = sample_points(&p.grid, &gram, &zero, &zero, 50, 1);
        assert_eq!(pts.len(), 50);
        assert!(pts.iter().all(|h| h.iter().all(|v| v.is_finite())));
    }
}
