//! Pigouvian rate from a social cost of carbon and an emissions intensity.
//!
//! ```text
//! cargo run --example pigouvian_rate
//! ```

use pigou::schedules::{pigouvian_rate, DamageCalibration};

fn main() -> pigou::error::Result<()> {
    println!("{:>12} {:>12} {:>8}", "usd/ton", "kg/usd", "rate");
    for (scc, kg) in [(200.0, 2.0), (200.0, 2.415), (100.0, 2.0), (51.0, 1.2)] {
        let rate = pigouvian_rate(&DamageCalibration::new(scc, kg, 1.0)?);
        println!("{scc:>12.1} {kg:>12.3} {rate:>8.4}");
    }
    Ok(())
}
