//! The data condition `f ≤ β(0)`: for `f ≡ −1` every feasible control gives a
//! non-positive state, and the constraint qualification integral equals
//! `μ(D∖Ē)/ε²` exactly when `H'_ε(ḡ)` vanishes off `Ē`.

use strongstat::beta::PiecewiseLinearBeta;
use strongstat::certificates::{check_cq_ha, check_data_condition};
use strongstat::grid::{Field, Grid2D, Rect};
use strongstat::objective::{optimize, OptimizeOptions, ProblemParams};
use strongstat::solvers::NewtonOptions;
use strongstat::wspace::WGram;

fn main() -> strongstat::Result<()> {
    let grid = Grid2D::new(31, 31, Rect::unit(), Rect::new(0.25, 0.75, 0.25, 0.75))?;
    let n = grid.len();
    println!("{:>6} {:>6} {:>14} {:>12} {:>12} {:>10}", "eps", "flag", "max y", "cq integral", "mu/eps^2", "near zero");
    for eps in [0.2, 0.1, 0.05] {
        let params = ProblemParams::new(
            grid.clone(),
            eps,
            1.0,
            0.5,
            Field::constant(n, -1.0),
            Field::constant(n, -0.1),
            Field::zeros(n),
            PiecewiseLinearBeta::relu(),
        )?;
        let gram = WGram::new(&params.grid, params.s)?;
        let res = optimize(&params, &gram, &vec![0.0; n], OptimizeOptions::default())?;
        let dc = check_data_condition(&params, Some(&res.g), NewtonOptions::default())?;
        let cq = check_cq_ha(&params, &res.g, &res.variation.y, 1e-6);
        println!(
            "{eps:>6} {:>6} {:>14.6e} {:>12.6} {:>12.6} {:>10}",
            dc.flag(),
            dc.state_max.unwrap_or(f64::NAN),
            cq.integral,
            cq.reference,
            cq.near_zero.value
        );
    }
    Ok(())
}
