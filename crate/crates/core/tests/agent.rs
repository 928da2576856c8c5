//! Agent choices against independent oracles: closed-form CES demands,
//! brute-force searches and exact re-summation.

use pigou::agent::*;
use pigou::calibration::{separable_economy, taste_shifted_economy};
use pigou::error::Error;
use pigou::schedules::{CommodityTax, IncomeTaxSchedule, TaxSystem};
use proptest::prelude::*;

fn linear_taxes(m: f64, t: f64) -> TaxSystem {
    TaxSystem { income: IncomeTaxSchedule::linear(m, 0.0, 100.0).unwrap(), commodity: CommodityTax::linear(t).unwrap() }
}

/// Demand `x` for CES preferences at tax-inclusive price `1 + t`, from the
/// tangency `α (c/x)^σ = 1 + t` and the budget.
fn ces_demand(alpha: f64, sigma: f64, t: f64, income: f64) -> f64 {
    let ratio = (alpha / (1.0 + t)).powf(1.0 / sigma);
    income * ratio / (1.0 + (1.0 + t) * ratio)
}

/// Brute-force maximizer of `f` on `[a, b]` by repeated grid refinement.
fn grid_argmax(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    for _ in 0..12 {
        let n = 200;
        let step = (b - a) / n as f64;
        let best = (0..=n).map(|k| a + step * k as f64).max_by(|p, q| f(*p).total_cmp(&f(*q))).unwrap();
        a = (best - 2.0 * step).max(a);
        b = (best + 2.0 * step).min(b);
    }
    0.5 * (a + b)
}

#[test]
fn cobb_douglas_share_matches_grid_search() {
    let alpha = 0.15;
    let p = TypePrefs::new(1.0, alpha, 1.0, 0.5);
    let inner = solve_inner_at_income(&p, &linear_taxes(0.0, 0.0), 100.0).unwrap();
    assert!((inner.x - alpha / (1.0 + alpha) * 100.0).abs() < 1e-10);
    let brute = grid_argmax(|x| p.g(100.0 - x, x), 1e-6, 100.0 - 1e-6);
    assert!((inner.x - brute).abs() < 1e-6);
}

#[test]
fn linear_commodity_tax_share() {
    let (alpha, t, income) = (0.1, 0.4, 80.0);
    let p = TypePrefs::new(1.0, alpha, 1.0, 0.5);
    let inner = solve_inner_at_income(&p, &linear_taxes(0.0, t), income).unwrap();
    assert!((inner.x * (1.0 + t) / income - alpha / (1.0 + alpha)).abs() < 1e-12);
    let brute = grid_argmax(|x| p.g(income - (1.0 + t) * x, x), 1e-6, income / (1.0 + t) - 1e-6);
    assert!((inner.x - brute).abs() < 1e-6);
}

#[test]
fn zero_disposable_income_has_no_interior_solution() {
    let p = TypePrefs::new(1.0, 0.1, 1.0, 0.5);
    let r = solve_inner_at_income(&p, &linear_taxes(0.0, 0.0), 0.0);
    assert!(matches!(r, Err(Error::NoInteriorSolution(_))));
}

#[test]
fn outer_choice_matches_nested_search() {
    let p = TypePrefs::new(1.4, 0.12, 0.8, 0.5);
    let tax = linear_taxes(0.25, 0.3);
    let ch = solve_agent(&p, 0.0, &tax).unwrap();
    // Nested search over z, each z solved by brute force over x.
    let value = |z: f64| {
        let income = 0.75 * z;
        let x = grid_argmax(|x| p.g(income - 1.3 * x, x), 1e-9, income / 1.3 - 1e-9);
        p.utility(income - 1.3 * x, x, z)
    };
    let z = grid_argmax(value, 0.1, 5.0);
    assert!((ch.z - z).abs() < 1e-6 * ch.z, "{} vs {}", ch.z, z);
}

#[test]
fn envelope_condition() {
    let econ = taste_shifted_economy(0.45, 0.4).unwrap();
    for w in [0.6, 1.2, 2.5] {
        let p = econ.prefs(w, 0.0);
        let base = solve_agent(&p, 0.0, &econ.tax).unwrap();
        let di = 1e-3 * base.income;
        let up = solve_agent_with_grant(&p, 0.0, &econ.tax, di).unwrap();
        let dv = (up.utility - base.utility) / di;
        assert!((dv - base.u_c).abs() < 0.01 * base.u_c, "w {w}: {dv} vs {}", base.u_c);
    }
}

#[test]
fn budget_identity_and_residuals_on_nonlinear_taxes() {
    let econ = taste_shifted_economy(0.45, 0.4).unwrap();
    for ch in econ.solve().unwrap() {
        let after = ch.z - econ.tax.income.eval(ch.z).unwrap().value;
        let spent = ch.c + ch.x + econ.tax.commodity.eval(ch.x).unwrap().value;
        assert!((spent - after).abs() < 1e-9 * after);
        assert!(ch.inner_foc_residual < 1e-10);
        assert!(ch.outer_foc_residual < 1e-8);
    }
}

#[test]
fn separable_shares_are_equal_across_types() {
    let t = 0.4;
    let econ = separable_economy(t).unwrap();
    let shares: Vec<f64> = econ
        .solve()
        .unwrap()
        .iter()
        .map(|c| c.x * (1.0 + t) / (c.z - econ.tax.income.eval(c.z).unwrap().value))
        .collect();
    let (lo, hi) = shares.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), s| (l.min(*s), h.max(*s)));
    assert!(hi - lo < 1e-8, "share spread {}", hi - lo);
}

#[test]
fn income_is_increasing_in_productivity() {
    let econ = taste_shifted_economy(0.45, 0.4).unwrap();
    let z: Vec<f64> = econ.solve().unwrap().iter().map(|c| c.z).collect();
    assert!(z.windows(2).all(|p| p[1] > p[0]));
}

#[test]
fn aggregate_matches_resummation() {
    let econ = taste_shifted_economy(0.45, 0.4).unwrap();
    let types = econ.types();
    let choices = econ.solve().unwrap();
    let agg = aggregate(&econ.tax, &types, &choices).unwrap();
    let mut revenue = Vec::new();
    let mut xbar = Vec::new();
    for (t, c) in types.iter().zip(&choices) {
        revenue.push(t.weight * econ.tax.income.eval(c.z).unwrap().value);
        revenue.push(t.weight * econ.tax.commodity.eval(c.x).unwrap().value);
        xbar.push(t.weight * c.x);
    }
    // Pairwise summation as an independent order of accumulation.
    fn pairwise(v: &[f64]) -> f64 {
        if v.len() <= 2 {
            return v.iter().sum();
        }
        let (a, b) = v.split_at(v.len() / 2);
        pairwise(a) + pairwise(b)
    }
    assert!((agg.revenue - pairwise(&revenue)).abs() < 1e-12);
    assert!((agg.xbar - pairwise(&xbar)).abs() < 1e-12);
    assert_eq!(agg.welfare.len(), types.len());
}

#[test]
fn single_type_without_taxes_raises_nothing() {
    let tax = linear_taxes(0.0, 0.0);
    let p = TypePrefs::new(1.0, 0.1, 1.0, 0.5);
    let ch = solve_agent(&p, 0.0, &tax).unwrap();
    let t = AgentType { w_index: 0, theta_index: 0, w: 1.0, theta: 0.0, weight: 1.0 };
    assert_eq!(aggregate(&tax, &[t], &[ch]).unwrap().revenue, 0.0);
}

#[test]
fn economy_json_round_trip() {
    let econ = taste_shifted_economy(0.45, 0.4).unwrap();
    let s = serde_json::to_string(&econ).unwrap();
    let back: SyntheticEconomy = serde_json::from_str(&s).unwrap();
    assert_eq!(back.w_grid, econ.w_grid);
    assert_eq!(back.utility, econ.utility);
    let (a, b) = (econ.solve_agent(1.3, 0.0).unwrap(), back.solve_agent(1.3, 0.0).unwrap());
    assert!((a.z - b.z).abs() < 1e-12 * a.z);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inner_demand_matches_ces_closed_form(
        alpha in 0.02f64..0.5,
        sigma in 0.4f64..2.5,
        t in -0.3f64..1.5,
        income in 0.5f64..50.0,
    ) {
        let p = TypePrefs::new(1.0, alpha, sigma, 0.5);
        let inner = solve_inner_at_income(&p, &linear_taxes(0.0, t), income).unwrap();
        let x = ces_demand(alpha, sigma, t, income);
        prop_assert!((inner.x - x).abs() < 1e-9 * x);
        prop_assert!((inner.c + (1.0 + t) * inner.x - income).abs() < 1e-9 * income);
    }

    #[test]
    fn outer_choice_matches_homothetic_closed_form(
        w in 0.3f64..4.0,
        e in 0.2f64..1.0,
        alpha in 0.02f64..0.4,
        sigma in 0.5f64..2.0,
        m in 0.0f64..0.5,
        t in 0.0f64..1.0,
    ) {
        // G is homogeneous of degree one, so utility per unit of net income
        // is a constant k and z = w^{1+e} ((1 − m) k)^e.
        let p = TypePrefs::new(w, alpha, sigma, e);
        let x = ces_demand(alpha, sigma, t, 1.0);
        let k = p.g(1.0 - (1.0 + t) * x, x);
        let z = w.powf(1.0 + e) * ((1.0 - m) * k).powf(e);
        let ch = solve_agent(&p, 0.0, &linear_taxes(m, t)).unwrap();
        prop_assert!((ch.z - z).abs() < 1e-8 * z, "{} vs {}", ch.z, z);
    }

    #[test]
    fn doubling_productivity_scales_income(
        w in 0.3f64..2.0,
        e in 0.2f64..1.0,
        m in 0.0f64..0.5,
        t in 0.0f64..1.0,
    ) {
        let tax = linear_taxes(m, t);
        let a = solve_agent(&TypePrefs::new(w, 0.1, 1.0, e), 0.0, &tax).unwrap();
        let b = solve_agent(&TypePrefs::new(2.0 * w, 0.1, 1.0, e), 0.0, &tax).unwrap();
        let factor = 2f64.powf(1.0 + e);
        prop_assert!((b.z / a.z - factor).abs() < 1e-9 * factor);
        prop_assert!((b.x / a.x - factor).abs() < 1e-9 * factor);
    }
}
