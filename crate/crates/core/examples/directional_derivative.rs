//! The directional derivative `u = S'(g; h)` of the control-to-state map,
//! compared with difference quotients `(S(g + τh) − S(g))/τ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strongstat::beta::PiecewiseLinearBeta;
use strongstat::grid::{Field, Grid2D, Rect};
use strongstat::solvers::{solve_linearized, solve_state, NewtonOptions};

fn main() -> strongstat::Result<()> {
    let grid = Grid2D::new(32, 32, Rect::new(0.0, 33.0 / 32.0, 0.0, 33.0 / 32.0), Rect::new(0.25, 0.75, 0.25, 0.75))?;
    let beta = PiecewiseLinearBeta::relu();
    let eps = 0.1;
    let opts = NewtonOptions { tol: 1e-12, max_iter: 50 };
    // Forcing with both signs, so the state crosses the kink of β.
    let f = Field::from_fn(&grid, |x, y| 20.0 * (std::f64::consts::PI * (x + 2.0 * y)).sin());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = Field::from_fn(&grid, |_, _| rng.gen_range(-0.1..0.15));
    let h = Field::from_fn(&grid, |_, _| rng.gen_range(-1.0..1.0));
    let (y, _) = solve_state(&grid, &beta, eps, &g, &f, opts, None)?;
    let (u, _) = solve_linearized(&grid, &beta, eps, &g, &y, &h, opts, None)?;
    println!("|h|_L2 = {:.4e}", grid.l2_norm(&h));
    println!("{:>8} {:>16}", "tau", "|dq - u|_L2");
    for tau in [1e-2, 1e-3, 1e-4] {
        let (yt, _) = solve_state(&grid, &beta, eps, &g.axpy(tau, &h), &f, opts, Some(&y))?;
        let dq = yt.sub(&y).scale(1.0 / tau);
        println!("{tau:>8.0e} {:>16.6e}", grid.l2_norm(&dq.sub(&u)));
    }
    Ok(())
}
