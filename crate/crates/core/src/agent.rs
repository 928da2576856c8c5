//! Synthetic economies and the two-stage agent problem.
//!
//! Preferences are `u(c, x, z | w) = G(c, x; α) − (z/w)^{1+1/e}/(1+1/e)`,
//! where `G` is a CES aggregate, homogeneous of degree one, with weight `α`
//! on the dirty good and curvature `σ_x` (Cobb–Douglas at `σ_x = 1`):
//!
//! ```text
//! G_raw(c, x) = ((c^{1−σ} + α x^{1−σ}) / (1 + α))^{1/(1−σ)}
//! ```
//!
//! `G` is normalized so a unit of income buys one unit of `G` at producer
//! prices. Under linear commodity taxes the indirect utility of consumption
//! is linear in disposable income, so taxable income carries no income
//! effect and its compensated elasticity equals `e`, while demand for `x` is
//! homothetic with a causal income slope `x′_inc > 0`.
//!
//! The agent first picks `x` given `z` (inner stage) and then `z` (outer
//! stage, golden-section bracket followed by a Brent polish of the reduced
//! first-order condition).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::brent;
use crate::schedules::{CommodityTax, IncomeTaxSchedule, TaxPolicy, TaxSystem};

/// Preference family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    /// Common `α` for every type: weakly separable and homogeneous.
    SeparableHomogeneous,
    /// `α(w, θ) = α₀·exp(γ ln w + γ₂ (ln w)² + θ)`.
    TasteShifted,
}

/// Parametric utility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityParams {
    pub family: Family,
    pub labor_elasticity: f64,
    pub alpha0: f64,
    #[serde(default)]
    pub taste_slope: f64,
    #[serde(default)]
    pub taste_curvature: f64,
    #[serde(default = "unit")]
    pub sigma_x: f64,
}

fn unit() -> f64 {
    1.0
}

impl UtilityParams {
    pub fn separable(labor_elasticity: f64, alpha0: f64, sigma_x: f64) -> Result<Self> {
        let u = UtilityParams {
            family: Family::SeparableHomogeneous,
            labor_elasticity,
            alpha0,
            taste_slope: 0.0,
            taste_curvature: 0.0,
            sigma_x,
        };
        u.validate()?;
        Ok(u)
    }

    pub fn taste_shifted(labor_elasticity: f64, alpha0: f64, gamma: f64, sigma_x: f64) -> Result<Self> {
        let u = UtilityParams {
            family: Family::TasteShifted,
            labor_elasticity,
            alpha0,
            taste_slope: gamma,
            taste_curvature: 0.0,
            sigma_x,
        };
        u.validate()?;
        Ok(u)
    }

    /// Taste weight on the dirty good.
    pub fn taste(&self, w: f64, theta: f64) -> f64 {
        match self.family {
            Family::SeparableHomogeneous => self.alpha0,
            Family::TasteShifted => {
                let lw = w.ln();
                self.alpha0 * (self.taste_slope * lw + self.taste_curvature * lw * lw + theta).exp()
            }
        }
    }

    pub fn prefs(&self, w: f64, theta: f64) -> TypePrefs {
        TypePrefs::new(w, self.taste(w, theta), self.sigma_x, self.labor_elasticity)
    }

    /// Parameter checks plus a numerical monotonicity and concavity probe.
    pub fn validate(&self) -> Result<()> {
        let ok = self.labor_elasticity > 0.0
            && self.labor_elasticity.is_finite()
            && self.alpha0 >= 0.0
            && self.alpha0.is_finite()
            && self.sigma_x > 0.0
            && self.sigma_x.is_finite();
        if !ok {
            return Err(Error::InvalidInput(format!("invalid utility parameters {self:?}")));
        }
        if self.family == Family::SeparableHomogeneous
            && (self.taste_slope != 0.0 || self.taste_curvature != 0.0)
        {
            return Err(Error::InvalidInput("separable-homogeneous taste must be constant".into()));
        }
        if self.alpha0 == 0.0 {
            return Ok(());
        }
        for &w in &[0.5, 1.0, 2.0] {
            let p = self.prefs(w, 0.0);
            for &(c, x) in &[(0.5, 0.05), (1.0, 0.1), (2.0, 0.5), (1.0, 1.0)] {
                let h = 1e-4;
                let (gc, gx) = (p.g_c(c, x), p.g_x(c, x));
                let gcc = (p.g(c + h, x) - 2.0 * p.g(c, x) + p.g(c - h, x)) / (h * h);
                let gxx = (p.g(c, x + h * x) - 2.0 * p.g(c, x) + p.g(c, x - h * x)) / (h * h * x * x);
                if !(gc > 0.0 && gx > 0.0 && gcc < 0.0 && gxx < 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "utility fails monotonicity or concavity at (c, x) = ({c}, {x})"
                    )));
                }
                let z = w;
                let lz = (p.disutility(z * (1.0 + h)) - 2.0 * p.disutility(z) + p.disutility(z * (1.0 - h)))
                    / (h * h * z * z);
                if !(p.disutility_slope(z) > 0.0 && lz > 0.0) {
                    return Err(Error::InvalidInput("labor disutility must be increasing and convex".into()));
                }
            }
        }
        Ok(())
    }
}

/// Preferences of a single type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypePrefs {
    pub w: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub e: f64,
    norm: f64,
}

impl TypePrefs {
    pub fn new(w: f64, alpha: f64, sigma: f64, e: f64) -> Self {
        let mut p = TypePrefs { w, alpha, sigma, e, norm: 1.0 };
        if alpha > 0.0 {
            let ratio = alpha.powf(1.0 / sigma);
            let c = 1.0 / (1.0 + ratio);
            p.norm = p.g_raw(c, ratio * c);
        }
        p
    }

    fn cobb_douglas(&self) -> bool {
        (self.sigma - 1.0).abs() < 1e-12
    }

    fn g_raw(&self, c: f64, x: f64) -> f64 {
        let a = self.alpha;
        if a == 0.0 {
            return c;
        }
        if self.cobb_douglas() {
            ((c.ln() + a * x.ln()) / (1.0 + a)).exp()
        } else {
            let r = 1.0 - self.sigma;
            ((c.powf(r) + a * x.powf(r)) / (1.0 + a)).powf(1.0 / r)
        }
    }

    /// Consumption aggregate, one unit per unit of income at producer prices.
    pub fn g(&self, c: f64, x: f64) -> f64 {
        self.g_raw(c, x) / self.norm
    }

    /// `∂G/∂c`.
    pub fn g_c(&self, c: f64, x: f64) -> f64 {
        if self.alpha == 0.0 {
            return 1.0;
        }
        (self.g_raw(c, x) / c).powf(self.sigma) / ((1.0 + self.alpha) * self.norm)
    }

    /// `∂G/∂x`.
    pub fn g_x(&self, c: f64, x: f64) -> f64 {
        self.alpha * (self.g_raw(c, x) / x).powf(self.sigma) / ((1.0 + self.alpha) * self.norm)
    }

    /// `ln(G_x / G_c)`.
    pub fn ln_mrs(&self, c: f64, x: f64) -> f64 {
        self.alpha.ln() + self.sigma * (c.ln() - x.ln())
    }

    /// `(z/w)^{1+1/e} / (1+1/e)`.
    pub fn disutility(&self, z: f64) -> f64 {
        let k = 1.0 + 1.0 / self.e;
        (z / self.w).powf(k) / k
    }

    /// Derivative of the disutility with respect to `z`.
    pub fn disutility_slope(&self, z: f64) -> f64 {
        (z / self.w).powf(1.0 / self.e) / self.w
    }

    pub fn utility(&self, c: f64, x: f64, z: f64) -> f64 {
        self.g(c, x) - self.disutility(z)
    }
}

/// Inner-stage solution at a given income.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerChoice {
    pub x: f64,
    pub c: f64,
    pub income: f64,
    pub foc_residual: f64,
}

/// Solved choice of one type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgentChoice {
    pub w: f64,
    pub theta: f64,
    pub z: f64,
    pub x: f64,
    pub c: f64,
    pub income: f64,
    pub utility: f64,
    pub u_c: f64,
    pub inner_foc_residual: f64,
    pub outer_foc_residual: f64,
}

/// Largest affordable `x` at disposable income `income`, capped at the
/// commodity schedule's span.
fn budget_end(policy: &dyn TaxPolicy, income: f64) -> Result<f64> {
    let (_, span_hi) = policy.commodity_span();
    let leftover = |x: f64| -> Result<f64> { Ok(income - x - policy.commodity_tax(x)?.value) };
    let mut hi = income.min(span_hi);
    while leftover(hi)? > 0.0 {
        if hi >= span_hi {
            return Ok(span_hi);
        }
        hi = (2.0 * hi).min(span_hi);
    }
    brent(leftover, 0.0, hi, 1e-15 * hi)
}

/// Optimal `x` and `c` for disposable income `income`.
pub fn solve_inner_at_income(prefs: &TypePrefs, policy: &dyn TaxPolicy, income: f64) -> Result<InnerChoice> {
    if !(income > 0.0) {
        return Err(Error::NoInteriorSolution(format!("disposable income {income} is not positive")));
    }
    if !(prefs.alpha > 0.0) {
        return Err(Error::NoInteriorSolution("zero taste for the dirty good".into()));
    }
    let x_end = budget_end(policy, income)?;
    let foc = |x: f64| -> Result<(f64, f64, f64)> {
        let t = policy.commodity_tax(x)?;
        let c = income - x - t.value;
        if !(c > 0.0) || !(1.0 + t.slope > 0.0) {
            return Ok((f64::NEG_INFINITY, f64::NAN, c));
        }
        let f = prefs.ln_mrs(c, x) - (1.0 + t.slope).ln();
        let df = prefs.sigma * (-(1.0 + t.slope) / c - 1.0 / x) - t.curvature / (1.0 + t.slope);
        Ok((f, df, c))
    };
    let mut lo = 1e-12 * x_end;
    let mut hi = x_end * (1.0 - 1e-13);
    let (f_lo, ..) = foc(lo)?;
    let (f_hi, ..) = foc(hi)?;
    if !(f_lo > 0.0) || f_hi >= 0.0 {
        return Err(Error::NoInteriorSolution(format!(
            "inner first-order condition has no root on (0, {x_end})"
        )));
    }
    let share = prefs.alpha / (1.0 + prefs.alpha);
    let mut x = (share * x_end).clamp(lo, hi);
    for _ in 0..300 {
        let (f, df, c) = foc(x)?;
        if f == 0.0 {
            return finish_inner(prefs, x, c, income, 0.0, df);
        }
        if f > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - f / df;
        let next = if df < 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x || hi - lo <= 4.0 * f64::EPSILON * hi {
            let (f, df, c) = foc(next)?;
            return finish_inner(prefs, next, c, income, f, df);
        }
        x = next;
    }
    Err(Error::NoConvergence { points: vec![income] })
}

fn finish_inner(prefs: &TypePrefs, x: f64, c: f64, income: f64, f: f64, df: f64) -> Result<InnerChoice> {
    let _ = prefs;
    if !(df < 0.0) {
        return Err(Error::NonConcave { at: x });
    }
    Ok(InnerChoice { x, c, income, foc_residual: f.abs() })
}

/// Inner stage at taxable income `z`.
pub fn solve_inner(prefs: &TypePrefs, policy: &dyn TaxPolicy, z: f64) -> Result<InnerChoice> {
    let t = policy.income_tax(z)?;
    solve_inner_at_income(prefs, policy, z - t.value)
}

struct OuterPoint {
    value: f64,
    foc: f64,
    inner: InnerChoice,
}

fn outer_point(prefs: &TypePrefs, policy: &dyn TaxPolicy, z: f64, grant: f64) -> Result<OuterPoint> {
    let t = policy.income_tax(z)?;
    let inner = solve_inner_at_income(prefs, policy, z - t.value + grant)?;
    let gc = prefs.g_c(inner.c, inner.x);
    Ok(OuterPoint {
        value: prefs.utility(inner.c, inner.x, z),
        foc: gc * (1.0 - t.slope) - prefs.disutility_slope(z),
        inner,
    })
}

/// Full two-stage solve for one type under `policy`.
pub fn solve_agent(prefs: &TypePrefs, theta: f64, policy: &dyn TaxPolicy) -> Result<AgentChoice> {
    solve_agent_with_grant(prefs, theta, policy, 0.0)
}

/// Two-stage solve with an extra lump-sum grant added to disposable income.
pub fn solve_agent_with_grant(
    prefs: &TypePrefs,
    theta: f64,
    policy: &dyn TaxPolicy,
    grant: f64,
) -> Result<AgentChoice> {
    let (span_lo, span_hi) = policy.income_span();
    let lo = (1e-3 * prefs.w).max(span_lo);
    let hi = (10.0 * prefs.w).min(span_hi);
    if !(hi > lo) {
        return Err(Error::NoInteriorSolution(format!("empty income search range for w = {}", prefs.w)));
    }
    const N: usize = 96;
    let ratio = (hi / lo).ln() / (N - 1) as f64;
    let zs: Vec<f64> = (0..N)
        .map(|i| if i == N - 1 { hi } else { lo * (ratio * i as f64).exp() })
        .collect();
    let vals: Vec<f64> = zs
        .iter()
        .map(|&z| outer_point(prefs, policy, z, grant).map(|p| p.value).unwrap_or(f64::NEG_INFINITY))
        .collect();
    let mut peaks: Vec<usize> = (0..N)
        .filter(|&k| {
            vals[k].is_finite()
                && (k == 0 || vals[k] >= vals[k - 1])
                && (k == N - 1 || vals[k] > vals[k + 1])
        })
        .collect();
    if peaks.is_empty() {
        return Err(Error::NoInteriorSolution(format!("no finite utility for w = {}", prefs.w)));
    }
    peaks.sort_by(|a, b| vals[*b].total_cmp(&vals[*a]));
    if peaks.len() > 1 && peaks[0].abs_diff(peaks[1]) > 1 {
        let gap = vals[peaks[0]] - vals[peaks[1]];
        if gap < 1e-6 {
            return Err(Error::MultipleOptima { first: zs[peaks[0]], second: zs[peaks[1]], gap });
        }
    }
    let k = peaks[0];
    if k == 0 || k == N - 1 {
        return Err(Error::NoInteriorSolution(format!(
            "income optimum at the search boundary z = {} for w = {}",
            zs[k], prefs.w
        )));
    }
    let (a, b) = (zs[k - 1], zs[k + 1]);
    let g = |z: f64| outer_point(prefs, policy, z, grant).map(|p| p.foc);
    let z = match (g(a), g(b)) {
        (Ok(ga), Ok(gb)) if ga > 0.0 && gb < 0.0 => brent(g, a, b, 1e-15 * b)?,
        _ => golden_max(|z| outer_point(prefs, policy, z, grant).map(|p| p.value), a, b)?,
    };
    let p = outer_point(prefs, policy, z, grant)?;
    let h = 1e-5 * z;
    let (gm, gp) = (g(z - h)?, g(z + h)?);
    if !(gp < gm) {
        return Err(Error::NonConcave { at: z });
    }
    let inner = p.inner;
    Ok(AgentChoice {
        w: prefs.w,
        theta,
        z,
        x: inner.x,
        c: inner.c,
        income: inner.income,
        utility: p.value,
        u_c: prefs.g_c(inner.c, inner.x),
        inner_foc_residual: inner.foc_residual,
        outer_foc_residual: (p.foc / prefs.disutility_slope(z)).abs(),
    })
}

fn golden_max<F: Fn(f64) -> Result<f64>>(f: F, mut a: f64, mut b: f64) -> Result<f64> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while (b - a).abs() > 1e-13 * b.abs() {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// Discrete type distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeGrid {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl TypeGrid {
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let g = TypeGrid { points, weights };
        g.validate()?;
        Ok(g)
    }

    pub fn single(point: f64) -> Self {
        TypeGrid { points: vec![point], weights: vec![1.0] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() || self.points.len() != self.weights.len() {
            return Err(Error::InvalidInput("type grid needs matching nonempty columns".into()));
        }
        if self.weights.iter().any(|&f| !(f >= 0.0)) {
            return Err(Error::InvalidInput("type weights must be nonnegative".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("type weights sum to {total}, not 1")));
        }
        if self.points.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::InvalidInput("type points must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// One (w, θ) cell of an economy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentType {
    pub w_index: usize,
    pub theta_index: usize,
    pub w: f64,
    pub theta: f64,
    pub weight: f64,
}

/// Type distribution, preferences and status-quo taxes.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticEconomy {
    pub w_grid: TypeGrid,
    pub theta_grid: Option<TypeGrid>,
    pub utility: UtilityParams,
    pub tax: TaxSystem,
}

impl SyntheticEconomy {
    pub fn new(
        w_grid: TypeGrid,
        theta_grid: Option<TypeGrid>,
        utility: UtilityParams,
        tax: TaxSystem,
    ) -> Result<Self> {
        w_grid.validate()?;
        if let Some(t) = &theta_grid {
            t.validate()?;
        }
        utility.validate()?;
        Ok(SyntheticEconomy { w_grid, theta_grid, utility, tax })
    }

    pub fn n_theta(&self) -> usize {
        self.theta_grid.as_ref().map_or(1, |t| t.points.len())
    }

    /// Types in w-major order.
    pub fn types(&self) -> Vec<AgentType> {
        let thetas = self.theta_grid.clone().unwrap_or_else(|| TypeGrid::single(0.0));
        let mut out = Vec::with_capacity(self.w_grid.points.len() * thetas.points.len());
        for (i, (&w, &fw)) in self.w_grid.points.iter().zip(&self.w_grid.weights).enumerate() {
            for (j, (&th, &ft)) in thetas.points.iter().zip(&thetas.weights).enumerate() {
                out.push(AgentType { w_index: i, theta_index: j, w, theta: th, weight: fw * ft });
            }
        }
        out
    }

    pub fn prefs(&self, w: f64, theta: f64) -> TypePrefs {
        self.utility.prefs(w, theta)
    }

    /// Same economy with a different commodity tax.
    pub fn with_commodity_tax(&self, commodity: CommodityTax) -> Self {
        let mut e = self.clone();
        e.tax.commodity = commodity;
        e
    }

    pub fn with_income_tax(&self, income: IncomeTaxSchedule) -> Self {
        let mut e = self.clone();
        e.tax.income = income;
        e
    }

    pub fn solve_inner(&self, w: f64, theta: f64, z: f64) -> Result<InnerChoice> {
        solve_inner(&self.prefs(w, theta), &self.tax, z).map_err(|e| e.at_agent(w, theta))
    }

    pub fn solve_agent(&self, w: f64, theta: f64) -> Result<AgentChoice> {
        self.solve_agent_under(&self.tax, w, theta)
    }

    pub fn solve_agent_under(&self, policy: &dyn TaxPolicy, w: f64, theta: f64) -> Result<AgentChoice> {
        solve_agent(&self.prefs(w, theta), theta, policy).map_err(|e| e.at_agent(w, theta))
    }

    /// Solve every type under the status-quo taxes.
    pub fn solve(&self) -> Result<Vec<AgentChoice>> {
        self.solve_under(&self.tax)
    }

    /// Solve every type under `policy`, checking that income rises with `w`
    /// for each taste type.
    pub fn solve_under(&self, policy: &dyn TaxPolicy) -> Result<Vec<AgentChoice>> {
        let types = self.types();
        let choices: Vec<AgentChoice> = types
            .par_iter()
            .map(|t| self.solve_agent_under(policy, t.w, t.theta))
            .collect::<Result<_>>()?;
        let nt = self.n_theta();
        for j in 0..nt {
            for i in 1..self.w_grid.points.len() {
                if choices[i * nt + j].z <= choices[(i - 1) * nt + j].z {
                    return Err(Error::NonMonotone { w: self.w_grid.points[i] });
                }
            }
        }
        Ok(choices)
    }
}

/// Per-agent welfare inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WelfareTerm {
    pub utility: f64,
    pub weight: f64,
    pub u_c: f64,
}

/// Aggregates over a solved economy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregates {
    pub revenue: f64,
    pub xbar: f64,
    pub welfare: Vec<WelfareTerm>,
}

/// Revenue `Σ f (T_z + T_x)`, mean dirty consumption `Σ f x` and welfare terms.
pub fn aggregate(policy: &dyn TaxPolicy, types: &[AgentType], choices: &[AgentChoice]) -> Result<Aggregates> {
    if types.len() != choices.len() {
        return Err(Error::InvalidInput("one choice per type required".into()));
    }
    let mut revenue = 0.0;
    let mut xbar = 0.0;
    let mut welfare = Vec::with_capacity(types.len());
    for (t, ch) in types.iter().zip(choices) {
        revenue += t.weight * (policy.income_tax(ch.z)?.value + policy.commodity_tax(ch.x)?.value);
        xbar += t.weight * ch.x;
        welfare.push(WelfareTerm { utility: ch.utility, weight: t.weight, u_c: ch.u_c });
    }
    Ok(Aggregates { revenue, xbar, welfare })
}

#[derive(Serialize, Deserialize)]
struct EconomyRepr {
    w_grid: TypeGrid,
    theta_grid: Option<TypeGrid>,
    utility: UtilityParams,
    income_tax: IncomeTaxSchedule,
    commodity_tax: CommodityTax,
}

impl Serialize for SyntheticEconomy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        EconomyRepr {
            w_grid: self.w_grid.clone(),
            theta_grid: self.theta_grid.clone(),
            utility: self.utility.clone(),
            income_tax: self.tax.income.clone(),
            commodity_tax: self.tax.commodity.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SyntheticEconomy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = EconomyRepr::deserialize(d)?;
        SyntheticEconomy::new(
            r.w_grid,
            r.theta_grid,
            r.utility,
            TaxSystem { income: r.income_tax, commodity: r.commodity_tax },
        )
        .map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_system(m: f64, t: f64) -> TaxSystem {
        TaxSystem {
            income: IncomeTaxSchedule::linear(m, 0.0, 100.0).unwrap(),
            commodity: CommodityTax::linear(t).unwrap(),
        }
    }

    #[test]
    fn cobb_douglas_share_rule() {
        let p = TypePrefs::new(1.0, 0.1, 1.0, 0.5);
        let tax = linear_system(0.0, 0.0);
        let inner = solve_inner_at_income(&p, &tax, 100.0).unwrap();
        assert!((inner.x - 0.1 / 1.1 * 100.0).abs() < 1e-10);
        assert!((inner.c + inner.x - 100.0).abs() < 1e-10);
    }

    #[test]
    fn zero_taste_is_rejected() {
        let p = TypePrefs::new(1.0, 0.0, 1.0, 0.5);
        let tax = linear_system(0.0, 0.0);
        assert!(matches!(solve_inner(&p, &tax, 1.0), Err(Error::NoInteriorSolution(_))));
        let q = TypePrefs::new(1.0, 0.2, 1.0, 0.5);
        let ch = solve_agent(&q, 0.0, &tax).unwrap();
        assert!(ch.x > 0.0 && ch.z > 0.0);
    }

    #[test]
    fn zero_tax_income_equals_productivity_power() {
        // At producer prices G is one unit per unit of income, so z = w^{1+e}.
        let p = TypePrefs::new(1.7, 0.3, 0.8, 0.5);
        let ch = solve_agent(&p, 0.0, &linear_system(0.0, 0.0)).unwrap();
        assert!((ch.z - 1.7f64.powf(1.5)).abs() < 1e-11 * ch.z);
        assert!((ch.u_c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn budget_and_foc_residuals() {
        let p = TypePrefs::new(1.3, 0.12, 1.4, 0.4);
        let tax = linear_system(0.3, 0.4);
        let ch = solve_agent(&p, 0.0, &tax).unwrap();
        let (tz, _) = crate::schedules::eval_income_tax(&tax.income, ch.z).unwrap();
        let budget = ch.c + ch.x * 1.4 - (ch.z - tz);
        assert!(budget.abs() < 1e-9 * (ch.z - tz));
        assert!(ch.inner_foc_residual < 1e-10);
        assert!(ch.outer_foc_residual < 1e-8);
    }

    #[test]
    fn aggregate_arithmetic() {
        let tax = TaxSystem {
            income: IncomeTaxSchedule::linear(0.1, 0.0, 1000.0).unwrap(),
            commodity: CommodityTax::linear(0.0).unwrap(),
        };
        let types = [
            AgentType { w_index: 0, theta_index: 0, w: 1.0, theta: 0.0, weight: 0.5 },
            AgentType { w_index: 1, theta_index: 0, w: 2.0, theta: 0.0, weight: 0.5 },
        ];
        let mk = |z: f64| AgentChoice {
            w: 1.0,
            theta: 0.0,
            z,
            x: 1.0,
            c: 1.0,
            income: z,
            utility: 0.0,
            u_c: 1.0,
            inner_foc_residual: 0.0,
            outer_foc_residual: 0.0,
        };
        let agg = aggregate(&tax, &types, &[mk(100.0), mk(300.0)]).unwrap();
        assert!((agg.revenue - 20.0).abs() < 1e-12);
        assert_eq!(agg.xbar, 1.0);
    }

    #[test]
    fn separable_family_rejects_taste_gradient() {
        let mut u = UtilityParams::separable(0.5, 0.1, 1.0).unwrap();
        u.taste_slope = 0.3;
        assert!(u.validate().is_err());
    }
}
