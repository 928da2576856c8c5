//! Tax schedules against an independent monotone-cubic implementation.

use pigou::calibration::bundled_income_tax;
use pigou::numeric::log_grid;
use pigou::schedules::*;
use proptest::prelude::*;

/// Shape-preserving cubic written out in power form: weighted harmonic-mean
/// interior slopes and the three-point end rule with the usual limiter.
struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
}

impl MonotoneCubic {
    fn new(xs: &[f64], ys: &[f64]) -> Self {
        let n = xs.len();
        let h: Vec<f64> = (0..n - 1).map(|i| xs[i + 1] - xs[i]).collect();
        let m: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
        let mut ds = vec![0.0; n];
        for k in 1..n - 1 {
            if m[k - 1] > 0.0 && m[k] > 0.0 || m[k - 1] < 0.0 && m[k] < 0.0 {
                let (a, b) = (2.0 * h[k] + h[k - 1], h[k] + 2.0 * h[k - 1]);
                ds[k] = (a + b) / (a / m[k - 1] + b / m[k]);
            }
        }
        let end = |h0: f64, h1: f64, m0: f64, m1: f64| {
            let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
            if d.signum() != m0.signum() || d == 0.0 {
                0.0
            } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
                3.0 * m0
            } else {
                d
            }
        };
        ds[0] = end(h[0], h[1], m[0], m[1]);
        ds[n - 1] = end(h[n - 2], h[n - 3], m[n - 2], m[n - 3]);
        MonotoneCubic { xs: xs.to_vec(), ys: ys.to_vec(), ds }
    }

    /// Value and slope from `y0 + d0 s + c2 s² + c3 s³` with `s = x − x0`.
    fn eval(&self, x: f64) -> (f64, f64) {
        let i = self.xs.iter().rposition(|k| *k <= x).unwrap().min(self.xs.len() - 2);
        let h = self.xs[i + 1] - self.xs[i];
        let m = (self.ys[i + 1] - self.ys[i]) / h;
        let (d0, d1) = (self.ds[i], self.ds[i + 1]);
        let c2 = (3.0 * m - 2.0 * d0 - d1) / h;
        let c3 = (d0 + d1 - 2.0 * m) / (h * h);
        let s = x - self.xs[i];
        (self.ys[i] + s * (d0 + s * (c2 + s * c3)), d0 + s * (2.0 * c2 + 3.0 * s * c3))
    }
}

fn bundled_knots() -> Vec<(f64, f64)> {
    log_grid(600.0, 325_000.0, 30).into_iter().map(|z| (z, bundled_income_tax(z))).collect()
}

#[test]
fn bundled_schedule_matches_independent_cubic() {
    let knots = bundled_knots();
    let s = IncomeTaxSchedule::from_knots(&knots).unwrap();
    let zs: Vec<f64> = knots.iter().map(|k| k.0).collect();
    let after: Vec<f64> = knots.iter().map(|k| k.0 - k.1).collect();
    let oracle = MonotoneCubic::new(&zs, &after);
    for z in [100_000.0, 600.0, 4321.0, 59_999.0, 250_000.0, 325_000.0] {
        let (t, m) = eval_income_tax(&s, z).unwrap();
        let (a, slope) = oracle.eval(z);
        assert!((t - (z - a)).abs() <= 1e-10 * t.abs().max(1.0), "z {z}: {t} vs {}", z - a);
        assert!((m - (1.0 - slope)).abs() <= 1e-10, "z {z}: {m} vs {}", 1.0 - slope);
    }
    let (t, m) = eval_income_tax(&s, 100_000.0).unwrap();
    assert!((t - bundled_income_tax(100_000.0)).abs() < 50.0);
    assert!(m > 0.3 && m < 0.35);
}

#[test]
fn out_of_span_is_an_error() {
    let s = IncomeTaxSchedule::from_knots(&bundled_knots()).unwrap();
    assert!(eval_income_tax(&s, 599.0).is_err());
    assert!(eval_income_tax(&s, 325_001.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn refitting_sampled_values_reproduces_the_schedule(
        steps in prop::collection::vec((1.0f64..50.0, 0.05f64..0.95), 4..20),
        probes in prop::collection::vec(0.0f64..1.0, 10),
    ) {
        let mut knots = vec![(0.0, 0.0)];
        for (dz, rate) in &steps {
            let (z, t) = *knots.last().unwrap();
            knots.push((z + dz, t + rate * dz));
        }
        let s = IncomeTaxSchedule::from_knots(&knots).unwrap();
        let resampled: Vec<(f64, f64)> = knots.iter().map(|k| (k.0, s.eval(k.0).unwrap().value)).collect();
        let again = IncomeTaxSchedule::from_knots(&resampled).unwrap();
        let top = knots.last().unwrap().0;
        for p in probes {
            let (a, b) = (s.eval(p * top).unwrap(), again.eval(p * top).unwrap());
            prop_assert!((a.value - b.value).abs() <= 1e-12 * a.value.abs().max(1.0));
            prop_assert!((a.slope - b.slope).abs() <= 1e-12);
        }
    }

    #[test]
    fn monotone_after_tax_keeps_net_rate_positive(
        steps in prop::collection::vec((1.0f64..50.0, 0.0f64..0.999), 3..20),
    ) {
        let mut knots = vec![(0.0, -5.0)];
        for (dz, rate) in &steps {
            let (z, t) = *knots.last().unwrap();
            knots.push((z + dz, t + rate * dz));
        }
        let s = IncomeTaxSchedule::from_knots(&knots).unwrap();
        let top = knots.last().unwrap().0;
        for i in 0..=1000 {
            prop_assert!(s.eval((top * i as f64 / 1000.0).min(top)).unwrap().slope < 1.0);
        }
    }

    #[test]
    fn pigouvian_rate_is_linear(scc in 0.0f64..1000.0, kg in 0.0f64..5.0, k in 1u32..8) {
        let base = pigouvian_rate(&DamageCalibration::new(scc, kg, 1.0).unwrap());
        let scaled = pigouvian_rate(&DamageCalibration::new(scc * 2f64.powi(k as i32), kg, 1.0).unwrap());
        prop_assert_eq!(scaled, base * 2f64.powi(k as i32));
    }
}
