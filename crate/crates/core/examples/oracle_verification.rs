//! Check a solved schedule against the micro-simulation oracle: equilibrate
//! the nonlinear schedule, then confirm that distribution-neutral bumps have
//! no first-order welfare effect and that the Pareto probe finds nothing.
//!
//! ```text
//! cargo run --release --example oracle_verification
//! ```

use pigou::calibration::{taste_shifted_economy, DEFAULT_DAMAGE};
use pigou::oracle::{bump_reform, equilibrate_nonlinear, interior_centers, pareto_probe, Oracle, PROBE_KAPPAS};

fn main() -> pigou::error::Result<()> {
    let d = DEFAULT_DAMAGE;
    let eq = equilibrate_nonlinear(&taste_shifted_economy(0.45, d)?, d, 1e-10, 200)?;
    println!("equilibrated in {} iterations (max rate change {:.1e})", eq.iterations, eq.max_change);

    let oracle = Oracle::new(&eq.economy, d)?;
    let n = oracle.types.len();
    for c in interior_centers(n, 5) {
        let g = oracle.gradient(&bump_reform(&oracle, &eq.stats.cell_slopes, c)?)?;
        println!("bump at z = {:.4}: dL/dkappa = {g:+.2e}", oracle.base.choices[c].z);
    }
    let probe = pareto_probe(&oracle, &eq.stats.cell_slopes, &interior_centers(n, 10), &PROBE_KAPPAS)?;
    println!("Pareto probe: {} improving rows out of {}", probe.improving, probe.rows.len());
    Ok(())
}
