//! Discrete duality between the linearized state operator and the adjoint:
//! `(2χ_E(y − y_d), u) = (p, εh − (1/ε)H'_ε(g) y h)` for a kink-free state.

use strongstat::beta::PiecewiseLinearBeta;
use strongstat::grid::{Field, Grid2D, Rect};
use strongstat::objective::ProblemParams;
use strongstat::solvers::{midpoint_zeta, solve_adjoint, solve_linearized, solve_state, NewtonOptions};

fn main() -> strongstat::Result<()> {
    let grid = Grid2D::new(31, 31, Rect::unit(), Rect::new(0.25, 0.75, 0.25, 0.75))?;
    let n = grid.len();
    let params = ProblemParams::new(
        grid.clone(),
        0.1,
        1.0,
        0.5,
        Field::constant(n, 5.0),
        Field::constant(n, 0.05),
        Field::zeros(n),
        PiecewiseLinearBeta::relu(),
    )?;
    let opts = NewtonOptions::default();
    let g = Field::from_fn(&grid, |x, y| 0.05 * (x + y) - 0.02);
    let (y, _) = solve_state(&grid, &params.beta, params.eps, &g, &params.f, opts, None)?;
    println!("state range [{:.4e}, {:.4e}] (positive: no kink)", y.min(), y.max());
    let zeta = midpoint_zeta(&params.beta, &y);
    let p = solve_adjoint(&grid, params.eps, &g, &zeta, &params.adjoint_rhs(&y), 1e-13)?;
    let hp = params.heaviside();
    for (i, h) in [Field::from_fn(&grid, |x, y| (3.0 * x * y).sin()), Field::constant(n, 1.0)].iter().enumerate() {
        let (u, _) = solve_linearized(&grid, &params.beta, params.eps, &g, &y, h, opts, None)?;
        let lhs = grid.dot(&params.adjoint_rhs(&y), &u);
        let src: Vec<f64> = (0..n).map(|k| params.eps * h[k] - hp.deriv(g[k]) / params.eps * y[k] * h[k]).collect();
        let rhs = grid.dot(&p, &src);
        println!("direction {i}: lhs = {lhs:.15e}, rhs = {rhs:.15e}, rel = {:.2e}", (lhs - rhs).abs() / lhs.abs());
    }
    Ok(())
}
