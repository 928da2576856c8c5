//! Micro-simulation oracle: reform gradients, their statistic-based
//! decomposition, covariance identities and the Pareto probe.

use pigou::agent::{SyntheticEconomy, TypeGrid, UtilityParams};
use pigou::calibration::*;
use pigou::oracle::*;
use pigou::schedules::{CommodityTax, TaxSystem};
use pigou::solver::solve_nonlinear;
use pigou::statistics::*;

/// Taste slope that changes sign at `w = 1`: `ln α` is quadratic in `ln w`.
fn u_shaped_economy(rate: f64) -> SyntheticEconomy {
    let mut u = UtilityParams::taste_shifted(0.5, 0.1, 0.0, 1.0).unwrap();
    u.taste_curvature = 0.4;
    SyntheticEconomy::new(
        productivity_grid(51, 0.5, 3.0, 0.1, 0.5),
        None,
        u,
        TaxSystem {
            income: progressive_income_tax(0.15, 0.25, 1.5, 0.1, 60.0).unwrap(),
            commodity: CommodityTax::linear(rate).unwrap(),
        },
    )
    .unwrap()
}

fn sign_change(v: &[f64]) -> Vec<usize> {
    (1..v.len()).filter(|&i| v[i].signum() != v[i - 1].signum()).collect()
}

#[test]
fn distribution_neutral_bump_moves_utility_at_second_order() {
    let econ = taste_shifted_economy(0.45, DEFAULT_DAMAGE).unwrap();
    let stats = economy_stats(&econ, &FiniteDiff::default()).unwrap();
    let oracle = Oracle::new(&econ, DEFAULT_DAMAGE).unwrap();
    let reform = bump_reform(&oracle, &stats.cell_slopes, 25).unwrap();
    let (z, x) = oracle.bundles();
    assert!(reform.neutrality_gap(&z, &x) <= 1e-12);
    let kappas = [1e-3, 3e-3, 1e-2];
    let changes: Vec<f64> = kappas
        .iter()
        .map(|k| {
            let e = oracle.evaluate_reform(&reform, *k).unwrap();
            e.money_utility.iter().zip(&oracle.base.money_utility).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        })
        .collect();
    let slope = (changes[2] / changes[0]).ln() / (kappas[2] / kappas[0]).ln();
    assert!((1.8..=2.2).contains(&slope), "log-log slope {slope}, changes {changes:?}");

    let zero = oracle.evaluate_reform(&reform, 0.0).unwrap();
    assert_eq!(zero.money_utility, oracle.base.money_utility);
    assert_eq!(zero.revenue, oracle.base.revenue);
}

#[test]
fn decomposition_matches_direct_gradient_on_multidim_economy() {
    let econ = multidim_economy(0.45, 0.25).unwrap();
    let stats = economy_stats(&econ, &FiniteDiff::default()).unwrap();
    let reform = vertical_reform(&stats).unwrap();
    let g = welfare_gradient_decomposed(&econ, &reform, DEFAULT_DAMAGE).unwrap();
    assert!(g.direct.abs() > 1e-6);
    assert!(g.relative_gap() < 0.02, "{g:?}");
}

#[test]
fn decomposition_matches_direct_gradient_for_bumps() {
    let econ = taste_shifted_economy(0.45, 0.25).unwrap();
    let stats = economy_stats(&econ, &FiniteDiff::default()).unwrap();
    let oracle = Oracle::new(&econ, DEFAULT_DAMAGE).unwrap();
    let mut checked = 0;
    for c in interior_centers(oracle.types.len(), 5) {
        let reform = bump_reform(&oracle, &stats.cell_slopes, c).unwrap();
        let direct = oracle.gradient(&reform).unwrap();
        if direct.abs() > 1e-6 {
            let total = decompose_reform(&stats, &reform, DEFAULT_DAMAGE).unwrap().total();
            assert!((total - direct).abs() < 0.02 * direct.abs(), "centre {c}: {total} vs {direct}");
            checked += 1;
        }
    }
    assert!(checked >= 3);
}

#[test]
fn separable_vertical_reform_has_only_substitution_terms() {
    let econ = separable_economy(0.6).unwrap();
    let stats = economy_stats(&econ, &FiniteDiff::default()).unwrap();
    let reform = vertical_reform(&stats).unwrap();
    let g = welfare_gradient_decomposed(&econ, &reform, DEFAULT_DAMAGE).unwrap();
    let c = g.components;
    let scale = c.w_x_given_z.abs();
    assert!(scale > 1e-6);
    assert!(c.w_z.abs() < 1e-4 * scale && c.w_z_to_x.abs() < 1e-4 * scale, "{c:?}");
    assert!(c.mechanical.abs() < 1e-12, "{c:?}");
    assert!(g.relative_gap() < 0.02, "{g:?}");
}

#[test]
fn unidimensional_vertical_reform_is_mechanically_neutral() {
    let econ = taste_shifted_economy(0.45, DEFAULT_DAMAGE).unwrap();
    let stats = economy_stats(&econ, &FiniteDiff::default()).unwrap();
    let reform = vertical_reform(&stats).unwrap();
    let c = decompose_reform(&stats, &reform, DEFAULT_DAMAGE).unwrap();
    assert!(c.mechanical.abs() < 1e-12, "{c:?}");
    let z: Vec<f64> = stats.agents.iter().map(|a| a.choice.z).collect();
    let x: Vec<f64> = stats.agents.iter().map(|a| a.choice.x).collect();
    assert!(reform.neutrality_gap(&z, &x) < 1e-12);
}

#[test]
fn probe_finds_improvements_off_the_optimum() {
    let econ = taste_shifted_economy(1.5, DEFAULT_DAMAGE).unwrap();
    let stats = economy_stats(&econ, &FiniteDiff::default()).unwrap();
    let oracle = Oracle::new(&econ, DEFAULT_DAMAGE).unwrap();
    let centers = interior_centers(oracle.types.len(), 10);
    let report = pareto_probe(&oracle, &stats.cell_slopes, &centers, &PROBE_KAPPAS).unwrap();
    assert!(report.improving > 0);
    assert!(report.rows.iter().all(|r| r.min_utility_change > -1e-12));
}

#[test]
fn probe_finds_nothing_at_the_solved_schedule() {
    let d = DEFAULT_DAMAGE;
    let eq = equilibrate_nonlinear(&taste_shifted_economy(0.45, d).unwrap(), d, 1e-10, 200).unwrap();
    let oracle = Oracle::new(&eq.economy, d).unwrap();
    let centers = interior_centers(oracle.types.len(), 10);
    let report = pareto_probe(&oracle, &eq.stats.cell_slopes, &centers, &PROBE_KAPPAS).unwrap();
    assert_eq!(report.improving, 0);
    assert_eq!(report.rows.len(), centers.len() * PROBE_KAPPAS.len());
}

#[test]
fn formula_and_oracle_agree_on_where_the_correction_flips() {
    let d = DEFAULT_DAMAGE;
    let econ = u_shaped_economy(d);
    let stats = economy_stats(&econ, &FiniteDiff::default()).unwrap();
    let rates = solve_nonlinear(&stats.profile, d).unwrap();
    let oracle = Oracle::new(&econ, d).unwrap();
    let n = oracle.types.len();
    let cells: Vec<usize> = (2..n - 2).collect();
    let formula: Vec<f64> = cells.iter().map(|&c| rates.result[c].rate - d).collect();
    let gradient: Vec<f64> = cells
        .iter()
        .map(|&c| oracle.gradient(&bump_reform(&oracle, &stats.cell_slopes, c).unwrap()).unwrap())
        .collect();
    let (a, b) = (sign_change(&formula), sign_change(&gradient));
    assert_eq!(a.len(), 1, "{formula:?}");
    assert_eq!(b.len(), 1, "{gradient:?}");
    assert!(a[0].abs_diff(b[0]) <= 1);
}

#[test]
fn two_taste_types_give_half_squared_gap_covariance() {
    let base = taste_shifted_economy(0.45, DEFAULT_DAMAGE).unwrap();
    let econ = SyntheticEconomy::new(
        base.w_grid.clone(),
        Some(TypeGrid { points: vec![-0.3, 0.3], weights: vec![0.5, 0.5] }),
        base.utility.clone(),
        base.tax.clone(),
    )
    .unwrap();
    let stats = economy_stats(&econ, &FiniteDiff::default()).unwrap();
    let report = covariance_report(&econ, &stats).unwrap();
    for (i, cell) in report.cells.iter().enumerate() {
        let (a, b) = (stats.agents[2 * i].x_inc, stats.agents[2 * i + 1].x_inc);
        let expected = -(a - b).powi(2) / 4.0;
        assert!((cell.cov_inc_het - expected).abs() <= 1e-12 * expected.abs().max(1e-300), "cell {i}");
        assert!((cell.var_inc + expected).abs() <= 1e-12 * expected.abs().max(1e-300));
    }
    assert!(report.max_identity_gap <= 1e-12);
}

#[test]
fn single_taste_type_has_zero_covariances() {
    let econ = taste_shifted_economy(0.45, DEFAULT_DAMAGE).unwrap();
    let report = check_covariance_identities(&econ).unwrap();
    assert!(report.cells.iter().all(|c| c.cov_inc_het == 0.0 && c.var_inc == 0.0 && c.identity_gap == 0.0));
}

#[test]
fn income_revenue_splits_into_means_and_covariance() {
    let econ = multidim_economy(0.45, DEFAULT_DAMAGE).unwrap();
    let report = check_covariance_identities(&econ).unwrap();
    assert!(report.cells.iter().any(|c| c.var_inc > 0.0));
    for c in &report.cells {
        assert!(c.income_revenue_direct.is_finite() && c.income_revenue_means.is_finite());
        assert!(c.income_revenue_covariance.is_finite() && c.cov_g_x.is_finite());
    }
}

#[test]
fn multidim_rate_brackets_the_vertical_reform_optimum() {
    let d = DEFAULT_DAMAGE;
    let base = multidim_economy(0.45, d).unwrap();
    let eq = equilibrate_linear(&base, d, LinearMethod::Multidim, 1e-10, 200).unwrap();
    let grad_at = |t: f64| {
        let econ = base.with_commodity_tax(CommodityTax::linear(t).unwrap());
        let stats = economy_stats(&econ, &FiniteDiff::default()).unwrap();
        welfare_gradient(&econ, &vertical_reform(&stats).unwrap(), d).unwrap()
    };
    let (below, at, above) = (grad_at(eq.rate - 0.02), grad_at(eq.rate), grad_at(eq.rate + 0.02));
    assert!(at.abs() < below.abs() && at.abs() < above.abs(), "{below} {at} {above}");
    assert!(below > 0.0 && above < 0.0, "{below} {above}");
}

#[test]
fn neutral_reform_constructors() {
    let econ = separable_economy(DEFAULT_DAMAGE).unwrap();
    let stats = economy_stats(&econ, &FiniteDiff::default()).unwrap();
    let oracle = Oracle::new(&econ, DEFAULT_DAMAGE).unwrap();
    let (z, x) = oracle.bundles();
    for c in interior_centers(z.len(), 7) {
        let r = bump_reform(&oracle, &stats.cell_slopes, c).unwrap();
        assert!(r.neutrality_gap(&z, &x) <= 1e-12);
    }
    assert!(ReformDirection::distribution_neutral(&z, &x, &stats.cell_slopes[1..], 10, 2).is_err());
    assert!(ReformDirection::distribution_neutral(&z, &x, &stats.cell_slopes, 0, 2).is_err());

    let multi = multidim_economy(0.45, DEFAULT_DAMAGE).unwrap();
    let o = Oracle::new(&multi, DEFAULT_DAMAGE).unwrap();
    assert!(bump_reform(&o, &[0.0; 4], 2).is_err());
}

#[test]
fn separable_economy_verifies_at_the_pigouvian_rate() {
    let report = verify_economy(&separable_economy(DEFAULT_DAMAGE).unwrap(), DEFAULT_DAMAGE).unwrap();
    assert!(report.passed(), "{report:?}");
    assert!(report.checks.iter().any(|c| c.name == "improving_directions"));
    let multi = verify_economy(&multidim_economy(0.45, DEFAULT_DAMAGE).unwrap(), DEFAULT_DAMAGE).unwrap();
    assert!(multi.checks.iter().any(|c| c.name == "covariance_identity" && c.pass));
}

#[test]
fn off_optimum_economy_fails_verification() {
    let report = verify_economy(&taste_shifted_economy(1.5, DEFAULT_DAMAGE).unwrap(), DEFAULT_DAMAGE).unwrap();
    assert!(!report.passed());
}
