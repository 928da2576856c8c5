//! Extract sufficient statistics from a synthetic economy by finite
//! differences and show the split of the cross-sectional slope into income
//! and taste parts.
//!
//! ```text
//! cargo run --example extract_statistics
//! ```

use pigou::calibration::{multidim_economy, taste_shifted_economy, DEFAULT_DAMAGE};
use pigou::statistics::{economy_stats, FiniteDiff};

fn main() -> pigou::error::Result<()> {
    let econ = taste_shifted_economy(0.45, DEFAULT_DAMAGE)?;
    let stats = economy_stats(&econ, &FiniteDiff::default())?;
    let p = &stats.profile;
    println!("{:>8} {:>7} {:>7} {:>9} {:>9} {:>8}", "z", "eps_z", "eps_x", "x_inc", "x_het", "eta");
    for i in (0..p.len()).step_by(p.len() / 8) {
        println!(
            "{:>8.4} {:>7.4} {:>7.4} {:>9.5} {:>9.5} {:>8.4}",
            p.z()[i],
            p.eps_z[i],
            p.eps_x[i],
            p.x_inc[i],
            p.x_het[i],
            p.eta_taste[i]
        );
    }

    let multi = economy_stats(&multidim_economy(0.45, DEFAULT_DAMAGE)?, &FiniteDiff::default())?;
    let var = multi.profile.var_x_inc.as_deref().unwrap_or(&[]);
    let mean = var.iter().sum::<f64>() / var.len().max(1) as f64;
    println!("multidimensional economy: mean within-cell var(x_inc) = {mean:.3e}");
    Ok(())
}
