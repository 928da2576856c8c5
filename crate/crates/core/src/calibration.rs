//! Bundled synthetic calibration: reference economies in model units and the
//! elasticity scenario table.
//!
//! Everything here is synthetic. The economies are small enough to solve in
//! well under a second and are shaped so that the oracle checks have signal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta as BetaDist, ContinuousCDF, Normal};

use crate::agent::{solve_inner_at_income, SyntheticEconomy, TypeGrid, UtilityParams};
use crate::error::{Error, Result};
use crate::numeric::brent;
use crate::pipeline::{
    run_pipeline, BinnedCrossSection, CrossSectionRow, PipelineOutput, SmoothingConfig, SurveyMpcTable, SurveyRow,
};
use crate::schedules::{CommodityTax, IncomeTaxSchedule, TaxPolicy, TaxSystem};
use crate::statistics::{economy_stats, FiniteDiff, StatsProfile};

/// Default marginal damage per dollar of expenditure.
pub const DEFAULT_DAMAGE: f64 = 0.40;

/// Elasticity scenario `(ε_z, ε_{x|z})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: &'static str,
    pub eps_z: f64,
    pub eps_x: f64,
}

/// Named calibration pairs.
pub const SCENARIOS: [Scenario; 5] = [
    Scenario { name: "benchmark", eps_z: 0.33, eps_x: 0.5 },
    Scenario { name: "high-eti", eps_z: 0.7, eps_x: 0.5 },
    Scenario { name: "high-eti-low-demand", eps_z: 0.7, eps_x: 0.25 },
    Scenario { name: "low-demand", eps_z: 0.33, eps_x: 0.25 },
    Scenario { name: "high-demand", eps_z: 0.33, eps_x: 0.75 },
];

/// Look up a scenario by name, or parse `custom:EPS_Z,EPS_X`.
pub fn scenario(name: &str) -> Result<(f64, f64)> {
    if let Some(rest) = name.strip_prefix("custom:") {
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() == 2 {
            if let (Ok(a), Ok(b)) = (parts[0].trim().parse::<f64>(), parts[1].trim().parse::<f64>()) {
                if a > 0.0 && b > 0.0 {
                    return Ok((a, b));
                }
            }
        }
        return Err(Error::InvalidInput(format!("custom scenario needs two positive numbers: {name}")));
    }
    SCENARIOS
        .iter()
        .find(|s| s.name == name)
        .map(|s| (s.eps_z, s.eps_x))
        .ok_or_else(|| Error::InvalidInput(format!("unknown scenario {name}")))
}

/// Log-spaced productivity grid with log-normal weights.
pub fn productivity_grid(n: usize, lo: f64, hi: f64, mu: f64, sigma: f64) -> TypeGrid {
    let points = crate::numeric::log_grid(lo, hi, n);
    let raw: Vec<f64> = points
        .iter()
        .map(|w| {
            let u = (w.ln() - mu) / sigma;
            (-0.5 * u * u).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|r| r / total).collect();
    let drift: f64 = 1.0 - weights.iter().sum::<f64>();
    weights[n / 2] += drift;
    TypeGrid { points, weights }
}

/// Equal-weight taste grid on `[-spread, spread]`.
pub fn taste_grid(n: usize, spread: f64) -> TypeGrid {
    let points = if n == 1 {
        vec![0.0]
    } else {
        (0..n).map(|j| -spread + 2.0 * spread * j as f64 / (n - 1) as f64).collect()
    };
    let mut weights = vec![1.0 / n as f64; n];
    let drift: f64 = 1.0 - weights.iter().sum::<f64>();
    weights[0] += drift;
    TypeGrid { points, weights }
}

/// Smooth progressive schedule in model units: marginal rate
/// `base + rise·z²/(z² + mid²)`, a lump-sum `grant`, knots every `step`.
pub fn progressive_income_tax(base: f64, rise: f64, mid: f64, grant: f64, z_max: f64) -> Result<IncomeTaxSchedule> {
    let n = 241;
    let mut knots = Vec::with_capacity(n);
    let mut rates = Vec::with_capacity(n);
    for i in 0..n {
        let z = z_max * i as f64 / (n - 1) as f64;
        let level = base * z + rise * (z - mid * (z / mid).atan()) - grant;
        knots.push((z, level));
        rates.push(base + rise * z * z / (z * z + mid * mid));
    }
    IncomeTaxSchedule::from_knots_and_rates(&knots, rates)
}

fn reference_tax(commodity_rate: f64) -> Result<TaxSystem> {
    Ok(TaxSystem {
        income: progressive_income_tax(0.15, 0.25, 1.5, 0.1, 60.0)?,
        commodity: CommodityTax::linear(commodity_rate)?,
    })
}

/// 51-type separable-homogeneous economy at the given commodity rate.
pub fn separable_economy(commodity_rate: f64) -> Result<SyntheticEconomy> {
    SyntheticEconomy::new(
        productivity_grid(51, 0.5, 3.0, 0.1, 0.5),
        None,
        UtilityParams::separable(0.5, 0.09, 1.0)?,
        reference_tax(commodity_rate)?,
    )
}

/// 51-type taste-shifted economy (`α` rising in `w`) at the given rate.
pub fn taste_shifted_economy(gamma: f64, commodity_rate: f64) -> Result<SyntheticEconomy> {
    SyntheticEconomy::new(
        productivity_grid(51, 0.5, 3.0, 0.1, 0.5),
        None,
        UtilityParams::taste_shifted(0.5, 0.09, gamma, 1.0)?,
        reference_tax(commodity_rate)?,
    )
}

/// 51×5 economy with taste types and a linear income tax, so the
/// elasticity of taxable income is common across taste types.
pub fn multidim_economy(gamma: f64, commodity_rate: f64) -> Result<SyntheticEconomy> {
    SyntheticEconomy::new(
        productivity_grid(51, 0.5, 3.0, 0.1, 0.5),
        Some(taste_grid(5, 0.5)),
        UtilityParams::taste_shifted(0.5, 0.09, gamma, 1.0)?,
        TaxSystem {
            income: IncomeTaxSchedule::linear(0.3, 0.1, 60.0)?,
            commodity: CommodityTax::linear(commodity_rate)?,
        },
    )
}

/// Economy for finite-difference checks: CES curvature `σ_x = 0.7` and a
/// commodity schedule whose marginal rate rises linearly in `x`, so no
/// extracted derivative is exact at any step.
pub fn probe_economy() -> Result<SyntheticEconomy> {
    let xs: Vec<f64> = (1..=30).map(|i| 0.02 * i as f64).collect();
    let rates: Vec<f64> = xs.iter().map(|x| 0.3 + 0.5 * x).collect();
    SyntheticEconomy::new(
        productivity_grid(51, 0.5, 3.0, 0.1, 0.5),
        None,
        UtilityParams::taste_shifted(0.5, 0.09, 0.45, 0.7)?,
        TaxSystem {
            income: progressive_income_tax(0.15, 0.25, 1.5, 0.1, 60.0)?,
            commodity: CommodityTax::from_rates(&xs, &rates, 10.0)?,
        },
    )
}

/// Seed of the bundled survey draws.
pub const BUNDLED_SEED: u64 = 7;
/// Respondents sharing one survey income.
pub const SURVEY_GROUP: usize = 10;
/// Survey income groups.
pub const SURVEY_GROUPS: usize = 100;

const MEDIAN_INCOME: f64 = 60_000.0;
const INCOME_DISPERSION: f64 = 0.85;
const TAX_SCALE: f64 = 80_000.0;
const ETA_ROOTS: (f64, f64) = (52_000.0, 160_000.0);
/// Curvature of the taste elasticity below, between and above the roots.
const ETA_SCALES: [f64; 3] = [0.06, 0.35, 0.12];
const BOTTOM_SHARE: f64 = 0.11;

/// Marginal income tax rate of the bundled calibration, USD.
pub fn bundled_mtr(z: f64) -> f64 {
    0.12 + 0.28 * (1.0 - (-z / TAX_SCALE).exp())
}

/// Income tax level, zero at zero income.
pub fn bundled_income_tax(z: f64) -> f64 {
    0.4 * z - 0.28 * TAX_SCALE * (1.0 - (-z / TAX_SCALE).exp())
}

/// Mean dirty-good share of a marginal dollar at income `z`.
pub fn bundled_mpc(z: f64) -> f64 {
    let u = z / 100_000.0;
    0.075 - 0.018 * u + 0.0012 * u * u
}

/// Taste elasticity built into the bundled cross-section.
pub fn bundled_eta(z: f64) -> f64 {
    let scale = if z < ETA_ROOTS.0 {
        ETA_SCALES[0]
    } else if z < ETA_ROOTS.1 {
        ETA_SCALES[1]
    } else {
        ETA_SCALES[2]
    };
    scale * (z.ln() - ETA_ROOTS.0.ln()) * (z.ln() - ETA_ROOTS.1.ln())
}

/// Percentile mean incomes: log-normal quantiles at the bin midpoints.
pub fn bundled_incomes(n: usize) -> Vec<f64> {
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    (0..n)
        .map(|i| {
            let q = std.inverse_cdf((i as f64 + 0.5) / n as f64);
            MEDIAN_INCOME * (INCOME_DISPERSION * q).exp()
        })
        .collect()
}

/// `x̂` on `z` from `x̂′ = (1 − T′)·mpc + η x̂/z`, integrated with RK4 in
/// `log z` from a bottom share of after-tax income.
fn bundled_xhat(z: &[f64]) -> Vec<f64> {
    let rhs = |lz: f64, x: f64| {
        let zz = lz.exp();
        zz * (1.0 - bundled_mtr(zz)) * bundled_mpc(zz) + bundled_eta(zz) * x
    };
    let mut out = Vec::with_capacity(z.len());
    let mut x = BOTTOM_SHARE * (z[0] - bundled_income_tax(z[0]));
    out.push(x);
    for w in z.windows(2) {
        let (a, b) = (w[0].ln(), w[1].ln());
        let steps = 64;
        let h = (b - a) / steps as f64;
        for k in 0..steps {
            let t = a + k as f64 * h;
            let k1 = rhs(t, x);
            let k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1);
            let k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2);
            let k4 = rhs(t + h, x + h * k3);
            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        out.push(x);
    }
    out
}

/// Bundled percentile cross-section, USD.
pub fn bundled_cross_section() -> Result<BinnedCrossSection> {
    let z = bundled_incomes(100);
    let xhat = bundled_xhat(&z);
    let rows = z
        .iter()
        .zip(&xhat)
        .enumerate()
        .map(|(i, (&zi, &xi))| {
            let after = zi - bundled_income_tax(zi);
            CrossSectionRow {
                percentile: i as u32 + 1,
                mean_income: zi,
                mean_after_tax_income: Some(after),
                dirty_share: Some(xi / after),
                mean_x_level: Some(xi),
            }
        })
        .collect();
    BinnedCrossSection::new(rows)
}

/// Target within-income variance of `x′_inc`, falling from 0.013 at the
/// bottom of the distribution to 0.004 at the top.
pub fn bundled_x_inc_variance(z: f64) -> f64 {
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let rank = std.cdf((z / MEDIAN_INCOME).ln() / INCOME_DISPERSION);
    0.013 - 0.009 * rank
}

/// Beta quantile by root finding on the CDF.
fn beta_quantile(beta: &BetaDist, u: f64) -> Result<f64> {
    brent(|x| Ok(beta.cdf(x) - u), 0.0, 1.0, 1e-15)
}

/// Bundled MPC survey. Respondents come in groups sharing one income. Each
/// group is a stratified sample from a Beta law with the target mean and
/// variance, rescaled so the group mean is exactly [`bundled_mpc`]; groups
/// leaving `[0, 1]` are redrawn.
pub fn bundled_survey(seed: u64) -> Result<SurveyMpcTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let incomes = bundled_incomes(SURVEY_GROUPS);
    let mut rows = Vec::with_capacity(SURVEY_GROUPS * SURVEY_GROUP);
    for (g, &z) in incomes.iter().enumerate() {
        let mean = bundled_mpc(z);
        let var = bundled_x_inc_variance(z) / (1.0 - bundled_mtr(z)).powi(2);
        let k = mean * (1.0 - mean) / var - 1.0;
        let beta = BetaDist::new(mean * k, (1.0 - mean) * k).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let values = loop {
            let draws = (0..SURVEY_GROUP)
                .map(|j| beta_quantile(&beta, (j as f64 + rng.gen::<f64>()) / SURVEY_GROUP as f64))
                .collect::<Result<Vec<f64>>>()?;
            let m = draws.iter().sum::<f64>() / SURVEY_GROUP as f64;
            let v: Vec<f64> = draws.iter().map(|d| d * mean / m).collect();
            if m > 0.0 && v.iter().all(|x| (0.0..=1.0).contains(x)) {
                break v;
            }
        };
        for (j, v) in values.into_iter().enumerate() {
            let total = rng.gen_range(0.5..0.9_f64).max(v);
            rows.push(SurveyRow {
                id: format!("r{:04}", g * SURVEY_GROUP + j + 1),
                taxable_income: z,
                mpc_dirty_share: v,
                total_mpc: total,
            });
        }
    }
    SurveyMpcTable::new(rows)
}

/// Pipeline output on the bundled inputs at the given elasticities.
pub fn bundled_pipeline(eps_z: f64, eps_x: f64) -> Result<PipelineOutput> {
    run_pipeline(
        &bundled_cross_section()?,
        &bundled_survey(BUNDLED_SEED)?,
        &SmoothingConfig::default(),
        eps_z,
        eps_x,
    )
}

/// Benchmark profile: bundled inputs at the benchmark elasticities.
pub fn benchmark_profile() -> Result<StatsProfile> {
    let (ez, ex) = scenario("benchmark")?;
    Ok(bundled_pipeline(ez, ex)?.profile)
}

/// 100 equal-weight taste-shifted types for the export round trip.
pub fn round_trip_economy() -> Result<SyntheticEconomy> {
    let points = crate::numeric::log_grid(1.0, 2.5, 100);
    SyntheticEconomy::new(
        TypeGrid::new(points, vec![0.01; 100])?,
        None,
        UtilityParams::taste_shifted(0.5, 0.09, 0.45, 1.0)?,
        reference_tax(DEFAULT_DAMAGE)?,
    )
}

/// Tables a survey of a synthetic economy would produce, in dollars.
#[derive(Debug, Clone)]
pub struct EconomyExport {
    pub cross_section: BinnedCrossSection,
    pub survey: SurveyMpcTable,
    /// Profile extracted from the economy in model units.
    pub truth: StatsProfile,
    pub usd_per_unit: f64,
}

/// Export an economy of exactly 100 equal-weight productivity types without
/// taste types: one percentile per type, one respondent per type whose MPC
/// is the exact `∂x/∂I` at fixed income.
pub fn export_economy(econ: &SyntheticEconomy, usd_per_unit: f64) -> Result<EconomyExport> {
    if econ.theta_grid.is_some() || econ.w_grid.points.len() != 100 {
        return Err(Error::InvalidInput("export needs 100 productivity types and no taste types".into()));
    }
    if econ.w_grid.weights.iter().any(|f| (f - 0.01).abs() > 1e-12) {
        return Err(Error::InvalidInput("export needs equal type weights".into()));
    }
    let truth = economy_stats(econ, &FiniteDiff::default())?.profile;
    let choices = econ.solve()?;
    let mut rows = Vec::with_capacity(100);
    let mut survey = Vec::with_capacity(100);
    for (i, ch) in choices.iter().enumerate() {
        let after = ch.z - econ.tax.income_tax(ch.z)?.value;
        rows.push(CrossSectionRow {
            percentile: i as u32 + 1,
            mean_income: usd_per_unit * ch.z,
            mean_after_tax_income: Some(usd_per_unit * after),
            dirty_share: Some(ch.x / after),
            mean_x_level: Some(usd_per_unit * ch.x),
        });
        let prefs = econ.prefs(ch.w, ch.theta);
        let h = 1e-5 * ch.income;
        let up = solve_inner_at_income(&prefs, &econ.tax, ch.income + h)?;
        let dn = solve_inner_at_income(&prefs, &econ.tax, ch.income - h)?;
        survey.push(SurveyRow {
            id: format!("w{:03}", i + 1),
            taxable_income: usd_per_unit * ch.z,
            mpc_dirty_share: (up.x - dn.x) / (2.0 * h),
            total_mpc: 1.0,
        });
    }
    Ok(EconomyExport {
        cross_section: BinnedCrossSection::new(rows)?,
        survey: SurveyMpcTable::new(survey)?,
        truth,
        usd_per_unit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_lookup() {
        assert_eq!(scenario("benchmark").unwrap(), (0.33, 0.5));
        assert_eq!(scenario("high-eti-low-demand").unwrap(), (0.7, 0.25));
        assert_eq!(scenario("custom:0.4,0.6").unwrap(), (0.4, 0.6));
        assert!(scenario("custom:-1,0.6").is_err());
        assert!(scenario("nope").is_err());
    }

    #[test]
    fn grids_are_normalized() {
        let g = productivity_grid(51, 0.5, 3.0, 0.1, 0.5);
        assert!(g.validate().is_ok());
        assert!(taste_grid(5, 0.5).validate().is_ok());
        assert!(taste_grid(3, 0.5).validate().is_ok());
    }
}
