//! Run the estimation pipeline on the shipped CSV tables: marginal tax
//! rates from after-tax income, the MPC curve, smoothed dirty-good profiles
//! and within-decile variances.
//!
//! ```text
//! cargo run --example estimation_pipeline
//! ```

use std::fs::File;
use std::path::Path;

use pigou::calibration::scenario;
use pigou::pipeline::{run_pipeline, BinnedCrossSection, SmoothingConfig, SurveyMpcTable};

fn main() -> pigou::error::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let cs = BinnedCrossSection::read_csv(File::open(data.join("cross_section.csv"))?)?;
    let survey = SurveyMpcTable::read_csv(File::open(data.join("survey_mpc.csv"))?)?;
    let (ez, ex) = scenario("benchmark")?;
    let out = run_pipeline(&cs, &survey, &SmoothingConfig::default(), ez, ex)?;

    println!("spline penalty chosen by GCV: {:.3e}", out.mtr.lambda);
    println!("MPC polynomial coefficients: {:?}", out.mpc.coefficients);
    for s in &out.deciles.steps {
        println!("decile [{:>8.0}, {:>8.0}]  n = {:>3}  var = {:.5}", s.lo, s.hi, s.count, s.variance);
    }
    let p = &out.profile;
    for z in [20_000.0, 60_000.0, 120_000.0, 250_000.0] {
        let i = p.z().partition_point(|v| *v < z).min(p.len() - 1);
        println!("z = {:>7.0}: mtr {:.3}, xhat {:>7.0}, eta {:+.3}", p.z()[i], p.mtr[i], p.xhat[i], p.eta_taste[i]);
    }
    Ok(())
}
