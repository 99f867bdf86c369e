//! The control space `W`: Gram matrix, Riesz map, and the projection onto
//! the feasible set `{g ≤ 0 on Ē}`.

use strongstat::grid::{Field, Grid2D, Rect};
use strongstat::wspace::{is_feasible, project_f, WGram};

fn main() -> strongstat::Result<()> {
    let grid = Grid2D::new(15, 15, Rect::unit(), Rect::new(0.25, 0.75, 0.25, 0.75))?;
    for s in [0.5, 1.5] {
        let gram = WGram::new(&grid, s)?;
        let u = Field::from_fn(&grid, |x, y| (std::f64::consts::PI * x).sin() * y);
        // Riesz: find v with (v, w)_W = (q, w)_{L²} for all w.
        let q = Field::from_fn(&grid, |x, y| x - y);
        let v = gram.riesz(&q);
        let probe = Field::from_fn(&grid, |x, _| x * x);
        println!(
            "s = {s}: |u|_W = {:.6e}, (riesz q, w)_W - (q, w) = {:.2e}, {} nodes off E",
            gram.norm(&u),
            gram.inner(&v, &probe) - grid.dot(&q, &probe),
            gram.de_nodes().len()
        );
    }
    let g = Field::from_fn(&grid, |x, y| (6.0 * x).sin() + y - 0.5);
    let pg = project_f(&g, &grid);
    println!("feasible before: {}, after: {}", is_feasible(&g, &grid), is_feasible(&pg, &grid));
    println!("projection is idempotent: {}", project_f(&pg, &grid)[..] == pg[..]);
    Ok(())
}
