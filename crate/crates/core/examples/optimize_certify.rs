//! Optimize the reference unit-square instance, then certify the result:
//! sampled B-stationarity, the adjoint system, signs and constraint
//! qualifications, printed as the flat key-value report.

use strongstat::beta::PiecewiseLinearBeta;
use strongstat::certificates::{certify, CertifyOptions};
use strongstat::grid::{Field, Grid2D, Rect};
use strongstat::objective::{optimize, OptimizeOptions, ProblemParams};
use strongstat::wspace::WGram;

fn main() -> strongstat::Result<()> {
    let grid = Grid2D::new(31, 31, Rect::unit(), Rect::new(0.25, 0.75, 0.25, 0.75))?;
    let n = grid.len();
    let params = ProblemParams::new(
        grid,
        0.1,
        1.0,
        0.5,
        Field::constant(n, -1.0),
        Field::constant(n, -0.1),
        Field::zeros(n),
        PiecewiseLinearBeta::relu(),
    )?;
    let gram = WGram::new(&params.grid, params.s)?;
    let res = optimize(&params, &gram, &vec![0.0; n], OptimizeOptions::default())?;
    println!("optimizer: {} after {} iterations", res.status.as_str(), res.trace.len() - 1);
    for row in &res.trace {
        println!("  iter {:>3}  j = {:.12e}  vi = {:+.3e}  |pg|_W = {:.3e}", row.iter, row.j, row.vi_min, row.pg_norm);
    }
    let cert = certify(&params, &gram, &res.g, None, &CertifyOptions::default())?;
    print!("\n{}", cert.report.to_kv());
    Ok(())
}
