//! All four solvers on the bundled profile: the pointwise nonlinear
//! schedule, the best linear rate with and without within-income
//! heterogeneity, and the optimal-levels schedule.
//!
//! ```text
//! cargo run --example solve_schedules
//! ```

use pigou::calibration::{benchmark_profile, DEFAULT_DAMAGE};
use pigou::solver::{solve_linear, solve_multidim, solve_nonlinear, solve_optimal_levels};
use pigou::statistics::{gbar_plus_from_weights, power_welfare_weights};

fn main() -> pigou::error::Result<()> {
    let d = DEFAULT_DAMAGE;
    let mut p = benchmark_profile()?;
    let nl = solve_nonlinear(&p, d)?;
    println!("nonlinear schedule (damage {d}):");
    for s in nl.result.iter().step_by(nl.result.len() / 10) {
        println!("  z = {:>9.0}  rate = {:.4}", s.z, s.rate);
    }
    println!("linear rate      {:.4}", solve_linear(&p, d)?.result);
    println!("multidim rate    {:.4}", solve_multidim(&p, d)?.result);

    let g = power_welfare_weights(&p.grid, 1.0);
    p.gbar_plus = Some(gbar_plus_from_weights(&p.grid, &g));
    let levels = solve_optimal_levels(&p, d)?;
    let mid = &levels.result[levels.result.len() / 2];
    println!("levels at median grid point: commodity {:.4}, income {:.4}", mid.commodity_rate, mid.income_rate);
    Ok(())
}
