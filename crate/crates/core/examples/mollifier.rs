//! Mollification `β_γ = β ∗ ψ_γ` of a piecewise-linear nonlinearity: the
//! uniform error bound `|β_γ − β| ≤ γ · max slope` and `β'_γ` at a kink.

use strongstat::beta::{MollifiedBeta, Nonlinearity, PiecewiseLinearBeta};

fn main() -> strongstat::Result<()> {
    // A convex kink at −1 and a concave kink at 1.
    let beta = PiecewiseLinearBeta::new(vec![-1.0, 1.0], vec![0.5, 2.0, 1.0], 0.0, 0.25)?;
    let max_slope = beta.slopes().iter().cloned().fold(0.0, f64::max);
    println!("{:>8} {:>14} {:>14} {:>14}", "gamma", "sup |b_g - b|", "bound", "b_g'(1)");
    for gamma in [1e-1, 1e-2, 1e-3] {
        let mb = MollifiedBeta::new(beta.clone(), gamma)?;
        let sup = (0..=1000)
            .map(|i| -5.0 + 10.0 * i as f64 / 1000.0)
            .map(|v| (mb.value(v) - beta.eval(v)).abs())
            .fold(0.0, f64::max);
        println!("{gamma:>8.0e} {sup:>14.6e} {:>14.6e} {:>14.10}", gamma * max_slope, mb.deriv(1.0));
    }
    println!("\nmean of the one-sided slopes at 1: {}", 0.5 * (beta.slope_left(1.0) + beta.slope_right(1.0)));
    Ok(())
}
