//! Solve individual agents of the taste-shifted economy and print their
//! bundles, budget shares and first-order residuals.
//!
//! ```text
//! cargo run --example agent_choices
//! ```

use pigou::calibration::{taste_shifted_economy, DEFAULT_DAMAGE};

fn main() -> pigou::error::Result<()> {
    let econ = taste_shifted_economy(0.45, DEFAULT_DAMAGE)?;
    println!("{:>7} {:>9} {:>9} {:>9} {:>8} {:>10}", "w", "z", "c", "x", "share", "foc");
    for w in [0.6, 0.9, 1.2, 1.8, 2.6] {
        let ch = econ.solve_agent(w, 0.0)?;
        let after = ch.z - econ.tax.income.eval(ch.z)?.value;
        let spent_x = ch.x + econ.tax.commodity.eval(ch.x)?.value;
        println!(
            "{w:>7.2} {:>9.4} {:>9.4} {:>9.5} {:>8.4} {:>10.2e}",
            ch.z,
            ch.c,
            ch.x,
            spent_x / after,
            ch.outer_foc_residual.max(ch.inner_foc_residual)
        );
    }
    Ok(())
}
