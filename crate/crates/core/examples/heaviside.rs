//! The regularized Heaviside `H_ε` and its derivative, with the `C¹` gluing
//! at `0` and `ε` checked by one-sided difference quotients.

use strongstat::heaviside::Heaviside;

fn main() -> strongstat::Result<()> {
    let eps = 0.1;
    let h = Heaviside::new(eps)?;
    println!("{:>10} {:>12} {:>12}", "v", "H(v)", "H'(v)");
    for v in [-1.0, 0.0, eps / 4.0, eps / 2.0, eps, 2.0 * eps] {
        println!("{v:>10.4} {:>12.8} {:>12.8}", h.value(v), h.deriv(v));
    }
    println!("\nLipschitz constant 3/(2ε) = {}", h.lipschitz());
    println!("\n{:>8} {:>14} {:>14}", "tau", "right q at 0", "left q at eps");
    for tau in [1e-2, 1e-3, 1e-4, 1e-5] {
        let q0 = (h.value(tau) - h.value(0.0)) / tau;
        let q1 = (h.value(eps) - h.value(eps - tau)) / tau;
        println!("{tau:>8.0e} {q0:>14.6e} {q1:>14.6e}");
    }
    Ok(())
}
