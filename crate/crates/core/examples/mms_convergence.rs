//! Manufactured-solution study for the state solver, driven by the shipped
//! `configs/mms_sinsin.toml`.

use std::path::Path;

use strongstat::config::RunConfig;
use strongstat::runner::mms_table;

fn main() -> strongstat::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/mms_sinsin.toml");
    let cfg = RunConfig::load(&path)?;
    println!("{:>10} {:>14} {:>8}", "h", "sup error", "order");
    for row in mms_table(&cfg)? {
        let order = row.order.map_or_else(|| "-".to_string(), |o| format!("{o:.3}"));
        println!("{:>10.6} {:>14.6e} {order:>8}", row.h, row.sup_error);
    }
    Ok(())
}
