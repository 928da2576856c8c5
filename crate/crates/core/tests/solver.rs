//! Solver laws on hand-built profiles: collapse to the damage rate, sign and
//! ablation properties, averaging, attenuation and the levels formulas.

use pigou::error::Error;
use pigou::schedules::IncomeGrid;
use pigou::solver::*;
use pigou::statistics::StatsProfile;
use proptest::prelude::*;

const D: f64 = 0.4;

/// Column description of a synthetic profile with a uniform density.
#[derive(Clone, Debug)]
struct Cols {
    z: Vec<f64>,
    xhat: Vec<f64>,
    eta: Vec<f64>,
    x_inc: Vec<f64>,
    eps_z: Vec<f64>,
    eps_x: Vec<f64>,
    mtr: Vec<f64>,
    var: Option<Vec<f64>>,
    gbar: Option<Vec<f64>>,
}

impl Cols {
    fn constant(n: usize, eta: f64, x_inc: f64, eps_z: f64, eps_x: f64, mtr: f64) -> Self {
        let z: Vec<f64> = (0..n).map(|i| 10_000.0 + 5_000.0 * i as f64).collect();
        let xhat = z.iter().map(|z| 0.05 * z).collect();
        Cols {
            z,
            xhat,
            eta: vec![eta; n],
            x_inc: vec![x_inc; n],
            eps_z: vec![eps_z; n],
            eps_x: vec![eps_x; n],
            mtr: vec![mtr; n],
            var: None,
            gbar: None,
        }
    }

    fn build(&self) -> StatsProfile {
        let n = self.z.len();
        let span = self.z[n - 1] - self.z[0];
        let grid = IncomeGrid::new(self.z.clone(), vec![1.0 / span; n]).unwrap();
        let slope = (0..n).map(|i| self.x_inc[i] + self.eta[i] * self.xhat[i] / self.z[i]).collect();
        StatsProfile::new(
            grid,
            self.xhat.clone(),
            slope,
            self.x_inc.clone(),
            self.eps_z.clone(),
            self.eps_x.clone(),
            self.mtr.clone(),
            self.var.clone(),
            self.gbar.clone(),
        )
        .unwrap()
    }
}

#[test]
fn fixed_point_examples() {
    let r = fixed_point(|x| x, 0.7, 0.5, 1e-12, 10).unwrap();
    assert_eq!((r.iterations, r.result), (1, 0.7));
    let r = fixed_point(|x| 0.5 * x + 1.0, 0.0, 0.5, 1e-12, 1000).unwrap();
    assert!((r.result - 2.0).abs() < 1e-11 && r.converged && r.residual < 1e-12);
    assert!(matches!(fixed_point(|x| x + 1.0, 0.0, 0.5, 1e-12, 50), Err(Error::NoConvergence { .. })));
    assert!(fixed_point(|x| x, f64::NAN, 0.5, 1e-12, 10).is_err());
}

#[test]
fn zero_taste_elasticity_collapses_every_solver() {
    let mut c = Cols::constant(30, 0.0, 0.05, 0.33, 0.5, 0.3);
    c.var = Some(vec![0.002; 30]);
    c.gbar = Some((0..30).map(|i| 0.95 - 0.02 * i as f64).collect());
    let p = c.build();
    assert!(solve_nonlinear(&p, D).unwrap().result.iter().all(|s| s.rate == D));
    assert_eq!(solve_linear(&p, D).unwrap().result, D);
    assert_eq!(solve_multidim(&p, D).unwrap().result, D);
    assert!(solve_optimal_levels(&p, D).unwrap().result.iter().all(|l| (l.commodity_rate - D).abs() < 1e-15));
}

#[test]
fn nonlinear_points_satisfy_the_condition() {
    let mut c = Cols::constant(40, 0.0, 0.04, 0.5, 0.6, 0.25);
    c.eta = (0..40).map(|i| -0.3 + 0.015 * i as f64).collect();
    let p = c.build();
    let rep = solve_nonlinear(&p, D).unwrap();
    assert!(rep.converged && rep.residual < 1e-10);
    for s in &rep.result {
        assert!(s.residual.abs() < 1e-10);
        assert!((s.rate - s.closed_form).abs() < 1e-10);
    }
}

#[test]
fn constant_statistics_make_linear_equal_pointwise() {
    let p = Cols::constant(25, 0.2, 0.05, 0.5, 0.5, 0.35).build();
    let lin = solve_linear(&p, D).unwrap().result;
    let nl = solve_nonlinear(&p, D).unwrap().result;
    for s in &nl {
        assert!((s.rate - lin).abs() < 1e-12, "{} vs {lin}", s.rate);
    }
}

#[test]
fn levels_without_redistribution_are_pigouvian() {
    let mut c = Cols::constant(20, 0.15, 0.05, 0.4, 0.5, 0.3);
    c.gbar = Some(vec![1.0; 20]);
    let lv = solve_optimal_levels(&c.build(), D).unwrap();
    for l in &lv.result {
        assert!((l.commodity_rate - D).abs() < 1e-15);
        assert!((l.income_rate + (l.commodity_rate - D) * 0.05).abs() < 1e-15);
    }
}

#[test]
fn levels_without_taste_heterogeneity_follow_the_abc_rate() {
    let mut c = Cols::constant(20, 0.0, 0.05, 0.4, 0.5, 0.3);
    c.gbar = Some((0..20).map(|i| 0.9 - 0.02 * i as f64).collect());
    let p = c.build();
    let lv = solve_optimal_levels(&p, D).unwrap();
    let (z, h, cdf) = (p.z(), p.grid.density(), p.grid.cdf());
    for (i, l) in lv.result.iter().enumerate() {
        assert_eq!(l.commodity_rate, D);
        let k = (1.0 - cdf[i]) / (z[i] * h[i]) * (1.0 - c.gbar.as_ref().unwrap()[i]) / 0.4;
        assert!((l.income_rate - k / (1.0 + k)).abs() < 1e-14);
        if i + 1 < lv.result.len() {
            assert!(l.income_rate > 0.0);
        }
    }
}

#[test]
fn solver_errors() {
    let p = Cols::constant(10, 0.1, 0.05, 0.4, 0.5, 0.3).build();
    assert!(matches!(solve_optimal_levels(&p, D), Err(Error::InvalidInput(_))));
    assert!(matches!(solve_multidim(&p, D), Err(Error::InvalidInput(_))));

    // Rejected at construction and again by the solver if set afterwards.
    let mut p = Cols::constant(10, 0.1, 0.05, 0.4, 0.5, 0.3).build();
    p.var_x_inc = Some(vec![-1e-3; 10]);
    assert!(matches!(p.validate(), Err(Error::NegativeVariance { .. })));
    assert!(matches!(solve_multidim(&p, D), Err(Error::NegativeVariance { .. })));

    // A huge taste elasticity against a tiny hazard-weighted ḡ₊ gap pushes c past one.
    let mut c = Cols::constant(10, 50.0, 0.05, 0.4, 0.05, 0.3);
    c.gbar = Some(vec![-5.0; 10]);
    assert!(matches!(solve_optimal_levels(&c.build(), D), Err(Error::RateOutOfRange { .. })));

    // A responsiveness large enough that 1 − RR x_inc is not positive at the damage rate.
    let c = Cols::constant(10, 30.0, 0.5, 1.0, 0.1, 0.3);
    assert!(matches!(solve_nonlinear(&c.build(), D), Err(Error::SingularDenominator { .. })));
}

#[test]
fn degenerate_hazard_is_reported() {
    let mut c = Cols::constant(10, 0.1, 0.05, 0.4, 0.5, 0.3);
    c.gbar = Some(vec![0.5; 10]);
    let mut p = c.build();
    // Uniform spacing with a zero density at the top point, still of unit mass.
    let n = p.len();
    let dz = p.z()[1] - p.z()[0];
    let level = 1.0 / (dz * (n as f64 - 1.5));
    let mut density = vec![level; n];
    density[n - 1] = 0.0;
    p.grid = IncomeGrid::new(p.z().to_vec(), density).unwrap();
    assert!(matches!(solve_optimal_levels(&p, D), Err(Error::DegenerateHazard { .. })));
}

#[test]
fn variance_scaling_moves_the_rate_toward_damage() {
    let mut c = Cols::constant(30, 0.0, 0.05, 0.4, 0.5, 0.3);
    c.eta = (0..30).map(|i| 0.05 + 0.01 * i as f64).collect();
    c.var = Some(vec![0.001; 30]);
    let p = c.build();
    let devs: Vec<f64> =
        [0.0, 1.0, 2.0, 5.0, 10.0].iter().map(|k| (solve_multidim(&p.with_scaled_variance(*k), D).unwrap().result - D).abs()).collect();
    assert!(devs.windows(2).all(|w| w[1] < w[0]), "{devs:?}");
    assert!((solve_multidim(&p.with_scaled_variance(0.0), D).unwrap().result - solve_linear(&p, D).unwrap().result).abs() < 1e-12);
}

fn arb_point() -> impl Strategy<Value = (f64, f64, f64, f64, f64)> {
    (-0.2f64..0.2, 0.005f64..0.1, 0.1f64..1.0, 0.4f64..1.0, 0.0f64..0.4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sign_law(points in prop::collection::vec(arb_point(), 2..20)) {
        let mut c = Cols::constant(points.len(), 0.0, 0.0, 0.0, 0.0, 0.0);
        for (i, (eta, xi, ez, ex, m)) in points.iter().enumerate() {
            c.eta[i] = *eta; c.x_inc[i] = *xi; c.eps_z[i] = *ez; c.eps_x[i] = *ex; c.mtr[i] = *m;
        }
        let p = c.build();
        let sol = solve_nonlinear(&p, D).unwrap();
        for (i, s) in sol.result.iter().enumerate() {
            let ps = PointStats::from_profile(&p, i);
            let rr = ps.responsiveness().unwrap() * (1.0 + s.rate);
            prop_assume!(1.0 - rr * ps.x_inc > 0.0);
            let lhs = s.rate - D;
            let rhs = ps.eta * ps.mtr;
            if rhs == 0.0 {
                prop_assert!(lhs.abs() < 1e-12);
            } else {
                prop_assert_eq!(lhs.signum(), rhs.signum());
            }
        }
    }

    #[test]
    fn denominator_amplifies_and_dampens(point in arb_point()) {
        let (eta, xi, ez, ex, m) = point;
        let s = PointStats { z: 1.0, eta, eps_z: ez, eps_x: ex, mtr: m, x_inc: xi };
        let with = s.condition(D).unwrap().solve(1.0).unwrap().result - D;
        // Same condition with the denominator forced to one.
        let ablated = ScalarCondition { damage: D, p: s.responsiveness().unwrap() * m, q: 0.0 }
            .solve(1.0).unwrap().result - D;
        if ablated > 1e-12 {
            prop_assert!(with > ablated);
        } else if ablated < -1e-12 {
            prop_assert!(with.abs() < ablated.abs() && with < 0.0);
        }
    }

    #[test]
    fn linear_rate_averages_pointwise_rates(
        etas in prop::collection::vec(-0.2f64..0.2, 3..20),
        xi in 0.005f64..0.1,
        ez in 0.1f64..1.0,
        ex in 0.4f64..1.0,
        m in 0.0f64..0.4,
    ) {
        let mut c = Cols::constant(etas.len(), 0.0, xi, ez, ex, m);
        c.eta = etas.clone();
        let p = c.build();
        let t = solve_linear(&p, D).unwrap().result;
        let rates: Vec<f64> = solve_nonlinear(&p, D).unwrap().result.iter().map(|s| s.rate).collect();
        let lo = rates.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(t >= lo - 1e-12 && t <= hi + 1e-12, "{} not in [{}, {}]", t, lo, hi);
    }

    #[test]
    fn attenuation_is_monotone(
        etas in prop::collection::vec(0.01f64..0.2, 3..20),
        v in 1e-4f64..5e-3,
        k1 in 0.0f64..5.0,
        dk in 0.1f64..5.0,
    ) {
        let mut c = Cols::constant(etas.len(), 0.0, 0.05, 0.5, 0.6, 0.3);
        c.eta = etas;
        c.var = Some(vec![v; c.z.len()]);
        let p = c.build();
        let a = (solve_multidim(&p.with_scaled_variance(k1), D).unwrap().result - D).abs();
        let b = (solve_multidim(&p.with_scaled_variance(k1 + dk), D).unwrap().result - D).abs();
        prop_assert!(b < a);
    }

    #[test]
    fn closed_form_tracks_iteration(point in arb_point(), d in 0.0f64..1.0) {
        let (eta, xi, ez, ex, m) = point;
        let s = PointStats { z: 1.0, eta, eps_z: ez, eps_x: ex, mtr: m, x_inc: xi };
        let cond = s.condition(d).unwrap();
        let it = cond.solve(1.0).unwrap().result;
        prop_assert!((it - cond.closed_form().unwrap()).abs() < 1e-10);
    }
}
