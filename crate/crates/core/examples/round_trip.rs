//! Export a synthetic economy as the two CSV tables the pipeline reads,
//! run the pipeline on them, and compare the recovered taste elasticity to
//! the one extracted from the economy directly.
//!
//! ```text
//! cargo run --release --example round_trip
//! ```

use pigou::calibration::{export_economy, round_trip_economy};
use pigou::numeric::Hermite;
use pigou::pipeline::{run_pipeline, SmoothingConfig};

fn main() -> pigou::error::Result<()> {
    let usd = 20_000.0;
    let ex = export_economy(&round_trip_economy()?, usd)?;
    let cfg = SmoothingConfig { poly_degree_mpc: 3, ..Default::default() };
    let out = run_pipeline(&ex.cross_section, &ex.survey, &cfg, 0.5, 0.5)?;
    let tz: Vec<f64> = ex.truth.z().iter().map(|z| z * usd).collect();
    let truth = Hermite::pchip(tz, ex.truth.eta_taste.clone())?;
    let p = &out.profile;
    let n = p.len();
    println!("{:>9} {:>9} {:>9}", "z", "eta", "truth");
    for i in (n / 20..n - n / 20).step_by(n / 10) {
        println!("{:>9.0} {:>9.4} {:>9.4}", p.z()[i], p.eta_taste[i], truth.eval_extended(p.z()[i]).value);
    }
    Ok(())
}
