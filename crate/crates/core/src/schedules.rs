//! Income grids, tax schedules and the damage calibration.
//!
//! Income tax schedules are monotone cubics on the after-tax mapping
//! `z ↦ z − T_z(z)`, so a schedule built from an increasing after-tax
//! mapping can never produce a marginal rate at or above one between knots.
//! Evaluation outside the knot span is an error rather than an extrapolation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{cumulative_trapezoid, fritsch_carlson_slopes, trapezoid_weights, Eval, Hermite};

/// Income support with density and cumulative distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct IncomeGrid {
    points: Vec<f64>,
    density: Vec<f64>,
    cdf: Vec<f64>,
}

impl IncomeGrid {
    /// Build from points and density; the cdf is the cumulative trapezoid
    /// integral of the density.
    pub fn new(points: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        let cdf = cumulative_trapezoid(&points, &density);
        Self::with_cdf(points, density, cdf)
    }

    pub fn with_cdf(points: Vec<f64>, density: Vec<f64>, cdf: Vec<f64>) -> Result<Self> {
        let n = points.len();
        if n < 2 || density.len() != n || cdf.len() != n {
            return Err(Error::InvalidInput("grid columns must have equal length >= 2".into()));
        }
        if points[0] <= 0.0 || points.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::InvalidInput("grid points must be positive and strictly increasing".into()));
        }
        if density.iter().any(|&h| !(h >= 0.0 && h.is_finite())) {
            return Err(Error::InvalidInput("density must be finite and nonnegative".into()));
        }
        let mass: f64 = trapezoid_weights(&points).iter().zip(&density).map(|(w, h)| w * h).sum();
        if (mass - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!("density integrates to {mass}, not 1")));
        }
        if cdf[0] < 0.0 || cdf[n - 1] > 1.0 + 1e-12 || cdf.windows(2).any(|p| p[1] < p[0]) {
            return Err(Error::InvalidInput("cdf must be nondecreasing within [0, 1]".into()));
        }
        let implied = cumulative_trapezoid(&points, &density);
        if implied.iter().zip(&cdf).any(|(a, b)| (a + cdf[0] - b).abs() > 1e-6) {
            return Err(Error::InvalidInput("cdf inconsistent with density".into()));
        }
        Ok(IncomeGrid { points, density, cdf })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Quadrature weights `w_i h_i`, normalized to sum to one.
    pub fn expectation_weights(&self) -> Vec<f64> {
        let raw: Vec<f64> = trapezoid_weights(&self.points)
            .iter()
            .zip(&self.density)
            .map(|(w, h)| w * h)
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect()
    }

    /// Density-weighted trapezoid expectation of a column on the grid.
    pub fn expect(&self, values: &[f64]) -> f64 {
        self.expectation_weights().iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// Nonlinear income tax `T_z(z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncomeTaxSchedule {
    interp: Hermite,
}

impl IncomeTaxSchedule {
    /// Monotone cubic through `(z, T_z(z))` knots.
    pub fn from_knots(knots: &[(f64, f64)]) -> Result<Self> {
        let zs: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let after_tax: Vec<f64> = knots.iter().map(|k| k.0 - k.1).collect();
        if zs.len() < 2 || zs.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::InvalidInput("knot abscissae must be strictly increasing".into()));
        }
        let mut d = fritsch_carlson_slopes(&zs, &after_tax);
        // The limiter can flatten an end slope; keep the net-of-tax rate
        // strictly positive where the after-tax mapping strictly increases.
        let n = zs.len();
        let secant = |i: usize| (after_tax[i + 1] - after_tax[i]) / (zs[i + 1] - zs[i]);
        for (i, di) in d.iter_mut().enumerate() {
            let left = if i > 0 { secant(i - 1) } else { f64::INFINITY };
            let right = if i + 1 < n { secant(i) } else { f64::INFINITY };
            if *di <= 0.0 && left > 0.0 && right > 0.0 {
                *di = 0.5 * left.min(right);
            }
        }
        let slopes = d.into_iter().map(|d| 1.0 - d).collect();
        Self::from_knots_and_rates(knots, slopes)
    }

    /// Cubic Hermite through the knots with prescribed marginal rates.
    pub fn from_knots_and_rates(knots: &[(f64, f64)], rates: Vec<f64>) -> Result<Self> {
        let zs = knots.iter().map(|k| k.0).collect();
        let ts = knots.iter().map(|k| k.1).collect();
        let interp = Hermite::new(zs, ts, rates)?;
        let s = IncomeTaxSchedule { interp };
        s.check_rates()?;
        Ok(s)
    }

    /// `T_z(z) = rate·z − grant` on `[0, z_max]`.
    pub fn linear(rate: f64, grant: f64, z_max: f64) -> Result<Self> {
        Self::from_knots_and_rates(&[(0.0, -grant), (z_max, rate * z_max - grant)], vec![rate, rate])
    }

    fn check_rates(&self) -> Result<()> {
        let xs = self.interp.knots();
        for i in 0..xs.len() - 1 {
            for j in 0..=8 {
                let z = xs[i] + (xs[i + 1] - xs[i]) * j as f64 / 8.0;
                let r = self.interp.eval(z)?.slope;
                if r >= 1.0 {
                    return Err(Error::InvalidInput(format!("marginal rate {r} >= 1 at z = {z}")));
                }
            }
        }
        Ok(())
    }

    pub fn knots(&self) -> Vec<(f64, f64)> {
        self.interp.knots().iter().copied().zip(self.interp.values().iter().copied()).collect()
    }

    pub fn rates_at_knots(&self) -> &[f64] {
        self.interp.slopes()
    }

    pub fn span(&self) -> (f64, f64) {
        self.interp.span()
    }

    /// Liability, marginal rate and curvature at `z`.
    pub fn eval(&self, z: f64) -> Result<Eval> {
        self.interp.eval(z)
    }
}

/// `(T_z(z), T′_z(z))`.
pub fn eval_income_tax(schedule: &IncomeTaxSchedule, z: f64) -> Result<(f64, f64)> {
    let e = schedule.eval(z)?;
    Ok((e.value, e.slope))
}

/// Tax on the externality-generating good.
#[derive(Debug, Clone, PartialEq)]
pub enum CommodityTax {
    Linear(f64),
    Nonlinear(Hermite),
    Rates(RateSchedule),
}

/// Commodity schedule given by its marginal rate: a monotone cubic through
/// `(x_i, T′_x(x_i))`, constant beyond the last knot and integrated exactly
/// from zero. Unlike a Hermite interpolant of levels, the curvature `T″_x` is
/// continuous at the knots, so agents sitting on a knot have smooth demand.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSchedule {
    rates: Hermite,
    cumulative: Vec<f64>,
}

impl RateSchedule {
    /// Knots must start at zero.
    pub fn new(xs: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if xs.first() != Some(&0.0) {
            return Err(Error::InvalidInput("rate schedule knots must start at zero".into()));
        }
        if let Some(r) = rates.iter().find(|r| !(**r > -1.0)) {
            return Err(Error::InvalidInput(format!("commodity rate {r} must exceed -1")));
        }
        let rates = Hermite::pchip(xs, rates)?;
        let cumulative = rates.knot_integrals();
        Ok(RateSchedule { rates, cumulative })
    }

    pub fn knots(&self) -> &[f64] {
        self.rates.knots()
    }

    pub fn rates(&self) -> &[f64] {
        self.rates.values()
    }

    pub fn eval(&self, x: f64) -> Result<Eval> {
        let (_, top) = self.rates.span();
        if x < 0.0 {
            return Err(Error::OutOfRange { value: x, lo: 0.0, hi: f64::INFINITY });
        }
        if x > top {
            let r = *self.rates.values().last().unwrap();
            let level = *self.cumulative.last().unwrap() + r * (x - top);
            return Ok(Eval::new(level, r, 0.0));
        }
        let e = self.rates.eval(x)?;
        Ok(Eval::new(self.rates.integral_with(&self.cumulative, x)?, e.value, e.slope))
    }
}

impl CommodityTax {
    pub fn linear(rate: f64) -> Result<Self> {
        if !(rate > -1.0 && rate.is_finite()) {
            return Err(Error::InvalidInput(format!("commodity rate {rate} must exceed -1")));
        }
        Ok(CommodityTax::Linear(rate))
    }

    /// Cubic Hermite through `(x, T_x(x))` knots with prescribed marginal
    /// rates, or Fritsch–Carlson slopes when `rates` is `None`.
    pub fn nonlinear(knots: &[(f64, f64)], rates: Option<Vec<f64>>) -> Result<Self> {
        let xs: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let ts: Vec<f64> = knots.iter().map(|k| k.1).collect();
        let interp = match rates {
            Some(r) => Hermite::new(xs, ts, r)?,
            None => Hermite::pchip(xs, ts)?,
        };
        let ks = interp.knots();
        for i in 0..ks.len() - 1 {
            for j in 0..=8 {
                let x = ks[i] + (ks[i + 1] - ks[i]) * j as f64 / 8.0;
                if interp.eval(x)?.slope <= -1.0 {
                    return Err(Error::InvalidInput(format!("1 + T'_x <= 0 at x = {x}")));
                }
            }
        }
        Ok(CommodityTax::Nonlinear(interp))
    }

    /// Rate-specified schedule with `T′_x(xs[i]) = rates[i]`, padded with the
    /// end rates at zero and at `upper`, and `T_x(0) = 0`.
    pub fn from_rates(xs: &[f64], rates: &[f64], upper: f64) -> Result<Self> {
        let n = xs.len();
        if n == 0 || rates.len() != n {
            return Err(Error::InvalidInput("rate schedule needs matching nonempty columns".into()));
        }
        let mut knots = Vec::with_capacity(n + 2);
        let mut rs = Vec::with_capacity(n + 2);
        if xs[0] > 0.0 {
            knots.push(0.0);
            rs.push(rates[0]);
        }
        knots.extend_from_slice(xs);
        rs.extend_from_slice(rates);
        if upper > xs[n - 1] {
            knots.push(upper);
            rs.push(rates[n - 1]);
        }
        Ok(CommodityTax::Rates(RateSchedule::new(knots, rs)?))
    }

    pub fn eval(&self, x: f64) -> Result<Eval> {
        match self {
            CommodityTax::Linear(t) => Ok(Eval::new(t * x, *t, 0.0)),
            CommodityTax::Nonlinear(h) => h.eval(x),
            CommodityTax::Rates(r) => r.eval(x),
        }
    }

    pub fn span(&self) -> (f64, f64) {
        match self {
            CommodityTax::Linear(_) => (0.0, f64::INFINITY),
            CommodityTax::Nonlinear(h) => h.span(),
            CommodityTax::Rates(_) => (0.0, f64::INFINITY),
        }
    }
}

/// `(T_x(x), T′_x(x))`.
pub fn eval_commodity_tax(tax: &CommodityTax, x: f64) -> Result<(f64, f64)> {
    if x < 0.0 {
        return Err(Error::OutOfRange { value: x, lo: 0.0, hi: f64::INFINITY });
    }
    let e = tax.eval(x)?;
    Ok((e.value, e.slope))
}

/// Social cost of carbon and emissions intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DamageCalibration {
    pub scc_usd_per_ton: f64,
    pub kg_per_dollar: f64,
    #[serde(default = "one")]
    pub lambda_norm: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for DamageCalibration {
    fn default() -> Self {
        DamageCalibration { scc_usd_per_ton: 200.0, kg_per_dollar: 2.0, lambda_norm: 1.0 }
    }
}

impl DamageCalibration {
    pub fn new(scc_usd_per_ton: f64, kg_per_dollar: f64, lambda_norm: f64) -> Result<Self> {
        let c = DamageCalibration { scc_usd_per_ton, kg_per_dollar, lambda_norm };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scc_usd_per_ton >= 0.0 && self.kg_per_dollar >= 0.0 && self.lambda_norm > 0.0) {
            return Err(Error::InvalidInput(format!("invalid damage calibration {self:?}")));
        }
        Ok(())
    }
}

/// Marginal damage per dollar of expenditure, `D′(x̄)/λ`.
pub fn pigouvian_rate(cal: &DamageCalibration) -> f64 {
    cal.scc_usd_per_ton / 1000.0 * cal.kg_per_dollar / cal.lambda_norm
}

/// Income tax paired with a commodity tax.
#[derive(Debug, Clone, PartialEq)]
pub struct TaxSystem {
    pub income: IncomeTaxSchedule,
    pub commodity: CommodityTax,
}

/// Anything that can quote income and commodity liabilities. Implemented by
/// [`TaxSystem`] and by perturbed views used for comparative statics.
pub trait TaxPolicy: Sync {
    fn income_tax(&self, z: f64) -> Result<Eval>;
    fn commodity_tax(&self, x: f64) -> Result<Eval>;
    fn income_span(&self) -> (f64, f64);
    fn commodity_span(&self) -> (f64, f64);
}

impl TaxPolicy for TaxSystem {
    fn income_tax(&self, z: f64) -> Result<Eval> {
        self.income.eval(z)
    }
    fn commodity_tax(&self, x: f64) -> Result<Eval> {
        self.commodity.eval(x)
    }
    fn income_span(&self) -> (f64, f64) {
        self.income.span()
    }
    fn commodity_span(&self) -> (f64, f64) {
        self.commodity.span()
    }
}

/// A scalar perturbation of one tax base, returning level, slope, curvature.
pub type Shift<'a> = &'a (dyn Fn(f64) -> Eval + Sync);

/// `T(·) + scale·τ(·)` on either base.
pub struct Perturbed<'a> {
    pub base: &'a dyn TaxPolicy,
    pub income: Option<Shift<'a>>,
    pub commodity: Option<Shift<'a>>,
    pub scale: f64,
}

impl TaxPolicy for Perturbed<'_> {
    fn income_tax(&self, z: f64) -> Result<Eval> {
        let e = self.base.income_tax(z)?;
        Ok(match self.income {
            Some(f) => e.add_scaled(self.scale, f(z)),
            None => e,
        })
    }
    fn commodity_tax(&self, x: f64) -> Result<Eval> {
        let e = self.base.commodity_tax(x)?;
        Ok(match self.commodity {
            Some(f) => e.add_scaled(self.scale, f(x)),
            None => e,
        })
    }
    fn income_span(&self) -> (f64, f64) {
        self.base.income_span()
    }
    fn commodity_span(&self) -> (f64, f64) {
        self.base.commodity_span()
    }
}

// Serialized forms.

#[derive(Serialize, Deserialize)]
pub(crate) struct ScheduleRepr {
    pub knots: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slopes: Option<Vec<f64>>,
}

impl Serialize for IncomeTaxSchedule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ScheduleRepr {
            knots: self.knots().into_iter().map(|(a, b)| [a, b]).collect(),
            slopes: Some(self.rates_at_knots().to_vec()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for IncomeTaxSchedule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = ScheduleRepr::deserialize(d)?;
        let knots: Vec<(f64, f64)> = r.knots.iter().map(|k| (k[0], k[1])).collect();
        match r.slopes {
            Some(s) => IncomeTaxSchedule::from_knots_and_rates(&knots, s),
            None => IncomeTaxSchedule::from_knots(&knots),
        }
        .map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CommodityRepr {
    Linear { rate: f64 },
    Rates { rate_knots: Vec<[f64; 2]> },
    Nonlinear(ScheduleRepr),
}

impl Serialize for CommodityTax {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            CommodityTax::Linear(rate) => CommodityRepr::Linear { rate: *rate },
            CommodityTax::Nonlinear(h) => CommodityRepr::Nonlinear(ScheduleRepr {
                knots: h.knots().iter().zip(h.values()).map(|(a, b)| [*a, *b]).collect(),
                slopes: Some(h.slopes().to_vec()),
            }),
            CommodityTax::Rates(r) => CommodityRepr::Rates {
                rate_knots: r.knots().iter().zip(r.rates()).map(|(a, b)| [*a, *b]).collect(),
            },
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CommodityTax {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match CommodityRepr::deserialize(d)? {
            CommodityRepr::Linear { rate } => CommodityTax::linear(rate),
            CommodityRepr::Rates { rate_knots } => RateSchedule::new(
                rate_knots.iter().map(|k| k[0]).collect(),
                rate_knots.iter().map(|k| k[1]).collect(),
            )
            .map(CommodityTax::Rates),
            CommodityRepr::Nonlinear(r) => {
                let knots: Vec<(f64, f64)> = r.knots.iter().map(|k| (k[0], k[1])).collect();
                CommodityTax::nonlinear(&knots, r.slopes)
            }
        }
        .map_err(serde::de::Error::custom)
    }
}
