//! Reform oracle: numerical welfare gradients of joint income/commodity tax
//! perturbations on synthetic economies.
//!
//! The planner's Lagrangian is
//!
//! ```text
//! L = Σ f·γ·v  +  Σ f·(T_z(z) + T_x(x))  −  d·Σ f·x,
//! ```
//!
//! with linear damage and money-metric welfare weights `γ = 1/u_c` fixed at
//! the status quo, so each agent's marginal social welfare weight `γ·u_c`
//! equals one there. A reform `T + κ·τ` is evaluated by re-solving every
//! agent at `κ = ±1e-4` and differencing `L`.
//!
//! Two reform families are provided. A distribution-neutral bump raises the
//! commodity marginal rate by a unit tent around one agent's consumption and
//! lowers the income tax by exactly the extra commodity tax that agent's
//! neighbours would pay on their original bundle. A vertically-neutral reform
//! raises a linear commodity rate and returns the mean extra tax at each
//! income through the income schedule.

use rayon::prelude::*;
use serde::Serialize;

use crate::agent::{AgentChoice, AgentType, SyntheticEconomy};
use crate::error::{Error, Result};
use crate::numeric::{Eval, Hermite};
use crate::schedules::{CommodityTax, Perturbed, TaxPolicy};
use crate::solver::{solve_linear, solve_multidim, solve_nonlinear, SchedulePoint};
use crate::statistics::{economy_stats, EconomyStats, FiniteDiff};

/// Central-difference step on the reform scale.
pub const KAPPA: f64 = 1e-4;
/// Probe grid for Pareto improvements.
pub const PROBE_KAPPAS: [f64; 4] = [-1e-2, -1e-3, 1e-3, 1e-2];

/// Which family a reform belongs to.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ReformKind {
    /// Tent bump in `τ′_x` centred at the agent with index `center`,
    /// spanning `half_width` agents on each side.
    DistributionNeutral { z0: f64, center: usize, half_width: usize },
    VerticallyNeutralLinear,
    Custom,
}

/// Perturbation of the commodity schedule.
#[derive(Debug, Clone, PartialEq)]
pub enum CommodityShift {
    /// `τ′_x` a unit tent on `[lo, hi]` peaking at `mid`.
    Tent { lo: f64, mid: f64, hi: f64 },
    /// `τ_x(x) = x`.
    Identity,
    Spline(Hermite),
}

impl CommodityShift {
    pub fn eval(&self, x: f64) -> Eval {
        match self {
            CommodityShift::Tent { lo, mid, hi } => tent_integral(*lo, *mid, *hi, x),
            CommodityShift::Identity => Eval::new(x, 1.0, 0.0),
            CommodityShift::Spline(h) => h.eval_extended(x),
        }
    }
}

fn tent_integral(lo: f64, mid: f64, hi: f64, x: f64) -> Eval {
    let (a, b) = (mid - lo, hi - mid);
    if x <= lo {
        Eval::ZERO
    } else if x <= mid {
        Eval::new((x - lo).powi(2) / (2.0 * a), (x - lo) / a, 1.0 / a)
    } else if x < hi {
        Eval::new(0.5 * a + 0.5 * b - (hi - x).powi(2) / (2.0 * b), (hi - x) / b, -1.0 / b)
    } else {
        Eval::new(0.5 * (a + b), 0.0, 0.0)
    }
}

/// Perturbation of the income schedule.
#[derive(Debug, Clone, PartialEq)]
pub enum IncomeShift {
    /// `τ_z(z) = −τ_x(X(z))` for the consumption map `X`.
    Offset(Hermite),
    /// `τ_z(z) = −X(z)`.
    NegMean(Hermite),
    Spline(Hermite),
}

/// A reform direction `(τ_z, τ_x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReformDirection {
    pub kind: ReformKind,
    pub tau_x: CommodityShift,
    pub tau_z: IncomeShift,
}

impl ReformDirection {
    /// Distribution-neutral tent bump at agent `center` of a unidimensional
    /// solved economy. `slopes` are the cross-sectional slopes `dx/dz`.
    pub fn distribution_neutral(
        z: &[f64],
        x: &[f64],
        slopes: &[f64],
        center: usize,
        half_width: usize,
    ) -> Result<Self> {
        let n = z.len();
        if x.len() != n || slopes.len() != n {
            return Err(Error::GridMismatch("reform needs matching z, x and slope columns".into()));
        }
        if center < half_width || center + half_width >= n || half_width == 0 {
            return Err(Error::InvalidInput(format!(
                "bump at {center} with half width {half_width} does not fit in {n} agents"
            )));
        }
        if x.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::InvalidInput("dirty consumption must increase across agents".into()));
        }
        let map = Hermite::new(z.to_vec(), x.to_vec(), slopes.to_vec())?;
        let r = ReformDirection {
            kind: ReformKind::DistributionNeutral { z0: z[center], center, half_width },
            tau_x: CommodityShift::Tent { lo: x[center - half_width], mid: x[center], hi: x[center + half_width] },
            tau_z: IncomeShift::Offset(map),
        };
        let worst = r.neutrality_gap(z, x);
        if worst > 1e-12 {
            return Err(Error::InvalidInput(format!("reform is not distribution neutral: gap {worst:e}")));
        }
        Ok(r)
    }

    /// Vertically-neutral reform of a linear commodity rate, `x̄(z)` through
    /// cell means with the given slopes.
    pub fn vertically_neutral(zbar: &[f64], xbar: &[f64], slopes: &[f64]) -> Result<Self> {
        Ok(ReformDirection {
            kind: ReformKind::VerticallyNeutralLinear,
            tau_x: CommodityShift::Identity,
            tau_z: IncomeShift::NegMean(Hermite::new(zbar.to_vec(), xbar.to_vec(), slopes.to_vec())?),
        })
    }

    pub fn custom(tau_x: Hermite, tau_z: Hermite) -> Self {
        ReformDirection {
            kind: ReformKind::Custom,
            tau_x: CommodityShift::Spline(tau_x),
            tau_z: IncomeShift::Spline(tau_z),
        }
    }

    pub fn tau_x(&self, x: f64) -> Eval {
        self.tau_x.eval(x)
    }

    pub fn tau_z(&self, z: f64) -> Eval {
        match &self.tau_z {
            IncomeShift::Offset(map) => {
                let m = map.eval_extended(z);
                let t = self.tau_x.eval(m.value);
                Eval::new(
                    -t.value,
                    -t.slope * m.slope,
                    -(t.curvature * m.slope * m.slope + t.slope * m.curvature),
                )
            }
            IncomeShift::NegMean(map) => {
                let m = map.eval_extended(z);
                Eval::new(-m.value, -m.slope, -m.curvature)
            }
            IncomeShift::Spline(h) => h.eval_extended(z),
        }
    }

    /// Largest `|τ_z(z_i) + τ_x(x_i)|` over the given bundles.
    pub fn neutrality_gap(&self, z: &[f64], x: &[f64]) -> f64 {
        z.iter()
            .zip(x)
            .map(|(&zi, &xi)| (self.tau_z(zi).value + self.tau_x(xi).value).abs())
            .fold(0.0, f64::max)
    }
}

/// Lagrangian pieces at one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub lagrangian: f64,
    pub revenue: f64,
    pub xbar: f64,
    /// `γ·v` per agent.
    pub money_utility: Vec<f64>,
    pub choices: Vec<AgentChoice>,
}

/// Status-quo solution of an economy with its welfare weights, ready to
/// evaluate reforms.
pub struct Oracle<'a> {
    pub economy: &'a SyntheticEconomy,
    pub damage: f64,
    pub types: Vec<AgentType>,
    pub base: Evaluation,
    /// `γ = 1/u_c` at the status quo.
    pub gamma: Vec<f64>,
}

impl<'a> Oracle<'a> {
    pub fn new(economy: &'a SyntheticEconomy, damage: f64) -> Result<Self> {
        let types = economy.types();
        let choices = economy.solve()?;
        let gamma: Vec<f64> = choices.iter().map(|c| 1.0 / c.u_c).collect();
        let base = evaluate_choices(&economy.tax, &types, &gamma, damage, choices)?;
        Ok(Oracle { economy, damage, types, base, gamma })
    }

    /// Evaluate `L` under an arbitrary policy.
    pub fn evaluate(&self, policy: &dyn TaxPolicy) -> Result<Evaluation> {
        let choices: Vec<AgentChoice> = self
            .types
            .par_iter()
            .map(|t| self.economy.solve_agent_under(policy, t.w, t.theta))
            .collect::<Result<_>>()?;
        evaluate_choices(policy, &self.types, &self.gamma, self.damage, choices)
    }

    /// Evaluate `L` at `T + κ·τ`.
    pub fn evaluate_reform(&self, reform: &ReformDirection, kappa: f64) -> Result<Evaluation> {
        let fx = |x: f64| reform.tau_x(x);
        let fz = |z: f64| reform.tau_z(z);
        let p = Perturbed { base: &self.economy.tax, income: Some(&fz), commodity: Some(&fx), scale: kappa };
        self.evaluate(&p)
    }

    /// `∂L/∂κ` by central difference.
    pub fn gradient(&self, reform: &ReformDirection) -> Result<f64> {
        let up = self.evaluate_reform(reform, KAPPA)?;
        let down = self.evaluate_reform(reform, -KAPPA)?;
        Ok((up.lagrangian - down.lagrangian) / (2.0 * KAPPA))
    }

    /// Solved bundles as columns `(z, x)`.
    pub fn bundles(&self) -> (Vec<f64>, Vec<f64>) {
        (self.base.choices.iter().map(|c| c.z).collect(), self.base.choices.iter().map(|c| c.x).collect())
    }
}

fn evaluate_choices(
    policy: &dyn TaxPolicy,
    types: &[AgentType],
    gamma: &[f64],
    damage: f64,
    choices: Vec<AgentChoice>,
) -> Result<Evaluation> {
    let mut revenue = 0.0;
    let mut xbar = 0.0;
    let mut welfare = 0.0;
    let mut money_utility = Vec::with_capacity(choices.len());
    for ((t, c), g) in types.iter().zip(&choices).zip(gamma) {
        revenue += t.weight * (policy.income_tax(c.z)?.value + policy.commodity_tax(c.x)?.value);
        xbar += t.weight * c.x;
        welfare += t.weight * g * c.utility;
        money_utility.push(g * c.utility);
    }
    Ok(Evaluation { lagrangian: welfare + revenue - damage * xbar, revenue, xbar, money_utility, choices })
}

/// `∂L/∂κ` for `reform` at the economy's status quo.
pub fn welfare_gradient(economy: &SyntheticEconomy, reform: &ReformDirection, damage: f64) -> Result<f64> {
    Oracle::new(economy, damage)?.gradient(reform)
}

/// Statistic-based components of a reform's first-order welfare effect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Decomposition {
    /// Income-tax revenue from compensated income responses.
    pub w_z: f64,
    /// Externality-corrected commodity-tax revenue from substitution at fixed income.
    pub w_x_given_z: f64,
    /// Commodity-tax revenue from income responses spilling into `x`.
    pub w_z_to_x: f64,
    /// Net transfer valued at `1 − g`, including income-effect fiscal terms.
    pub mechanical: f64,
}

impl Decomposition {
    pub fn total(&self) -> f64 {
        self.w_z + self.w_x_given_z + self.w_z_to_x + self.mechanical
    }
}

/// Components computed from per-agent status-quo statistics.
pub fn decompose_reform(
    stats: &EconomyStats,
    reform: &ReformDirection,
    damage: f64,
) -> Result<Decomposition> {
    let mut d = Decomposition { w_z: 0.0, w_x_given_z: 0.0, w_z_to_x: 0.0, mechanical: 0.0 };
    for a in &stats.agents {
        let (z, x) = (a.choice.z, a.choice.x);
        let (tz, tx) = (reform.tau_z(z), reform.tau_x(x));
        let wedge = a.ctr - damage;
        let zdot = -z * a.eps_z / (1.0 - a.mtr) * (tz.slope + a.x_inc * tx.slope);
        d.w_z += a.weight * a.mtr * zdot;
        d.w_x_given_z += a.weight * wedge * (-a.eps_x * x * tx.slope / (1.0 + a.ctr));
        d.w_z_to_x += a.weight * wedge * a.x_inc * zdot;
        let g = 1.0 + wedge * a.dx_dgrant + (a.mtr + wedge * a.x_inc) * a.dz_dgrant;
        d.mechanical += a.weight * (1.0 - g) * (tz.value + tx.value);
    }
    Ok(d)
}

/// Direct gradient together with its statistic-based decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecomposedGradient {
    pub direct: f64,
    pub components: Decomposition,
}

impl DecomposedGradient {
    /// `|Σ components − direct| / |direct|`.
    pub fn relative_gap(&self) -> f64 {
        (self.components.total() - self.direct).abs() / self.direct.abs()
    }
}

pub fn welfare_gradient_decomposed(
    economy: &SyntheticEconomy,
    reform: &ReformDirection,
    damage: f64,
) -> Result<DecomposedGradient> {
    let stats = economy_stats(economy, &FiniteDiff::default())?;
    Ok(DecomposedGradient {
        direct: welfare_gradient(economy, reform, damage)?,
        components: decompose_reform(&stats, reform, damage)?,
    })
}

/// Distribution-neutral bump at agent `center` of a solved unidimensional
/// economy, given the cross-sectional slopes `dx/dz` per agent.
pub fn bump_reform(oracle: &Oracle<'_>, slopes: &[f64], center: usize) -> Result<ReformDirection> {
    if oracle.economy.n_theta() != 1 {
        return Err(Error::InvalidInput("bump reforms need a unidimensional economy".into()));
    }
    let (z, x) = oracle.bundles();
    ReformDirection::distribution_neutral(&z, &x, slopes, center, 2)
}

/// Per-cell check of the covariance identities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellCovariance {
    pub w: f64,
    pub zbar: f64,
    /// `C[x′_inc, x′_het | cell]`.
    pub cov_inc_het: f64,
    /// `V[x′_inc | cell]`.
    pub var_inc: f64,
    /// `|C + V| / max(V, tiny)`.
    pub identity_gap: f64,
    /// `E[T′ ε_z z x′_het/(1−T′)]` over the cell.
    pub income_revenue_direct: f64,
    /// Mean-based part of the same quantity.
    pub income_revenue_means: f64,
    /// Covariance correction `T′ z̄/(1−T′)·C[ε_z, x′_het]`.
    pub income_revenue_covariance: f64,
    /// `C[ε_z, x′_inc·x′_het | cell]`.
    pub cov_eps_product: f64,
    /// `C[g, x | cell]` with `g` the marginal social welfare weight
    /// including income-effect fiscal terms at damage 0.
    pub cov_g_x: f64,
}

/// Covariance identities at every productivity cell, which plays the role
/// of an income level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceReport {
    pub cells: Vec<CellCovariance>,
    pub max_identity_gap: f64,
}

pub fn check_covariance_identities(economy: &SyntheticEconomy) -> Result<CovarianceReport> {
    covariance_report(economy, &economy_stats(economy, &FiniteDiff::default())?)
}

pub fn covariance_report(economy: &SyntheticEconomy, stats: &EconomyStats) -> Result<CovarianceReport> {
    let nt = economy.n_theta();
    let pis: Vec<f64> = economy.theta_grid.as_ref().map_or(vec![1.0], |g| g.weights.clone());
    let mut cells = Vec::with_capacity(economy.w_grid.points.len());
    let mut worst: f64 = 0.0;
    for (i, &w) in economy.w_grid.points.iter().enumerate() {
        let agents = &stats.agents[i * nt..(i + 1) * nt];
        let slope = stats.cell_slopes[i];
        let mean = |f: &dyn Fn(usize) -> f64| (0..nt).map(|j| pis[j] * f(j)).sum::<f64>();
        let cov = |f: &dyn Fn(usize) -> f64, g: &dyn Fn(usize) -> f64| {
            let (mf, mg) = (mean(f), mean(g));
            mean(&|j| (f(j) - mf) * (g(j) - mg))
        };
        let inc = |j: usize| agents[j].x_inc;
        let het = |j: usize| slope - agents[j].x_inc;
        let eps = |j: usize| agents[j].eps_z;
        let zj = |j: usize| agents[j].choice.z;
        let mtr = |j: usize| agents[j].mtr;
        let cov_inc_het = cov(&inc, &het);
        let var_inc = cov(&inc, &inc);
        let gap = (cov_inc_het + var_inc).abs() / var_inc.max(1e-300);
        let gap = if var_inc == 0.0 && cov_inc_het == 0.0 { 0.0 } else { gap };
        worst = worst.max(gap);
        let zbar = mean(&zj);
        let tbar = mean(&mtr);
        let direct = mean(&|j| mtr(j) * eps(j) * zj(j) * het(j) / (1.0 - mtr(j)));
        let means = tbar * mean(&eps) * zbar * mean(&het) / (1.0 - tbar);
        let covterm = tbar * zbar / (1.0 - tbar) * cov(&eps, &het);
        let g = |j: usize| {
            let a = &agents[j];
            1.0 + a.ctr * a.dx_dgrant + (a.mtr + a.ctr * a.x_inc) * a.dz_dgrant
        };
        cells.push(CellCovariance {
            w,
            zbar,
            cov_inc_het,
            var_inc,
            identity_gap: gap,
            income_revenue_direct: direct,
            income_revenue_means: means,
            income_revenue_covariance: covterm,
            cov_eps_product: cov(&eps, &|j| inc(j) * het(j)),
            cov_g_x: cov(&g, &|j| agents[j].choice.x),
        });
    }
    Ok(CovarianceReport { cells, max_identity_gap: worst })
}

/// One probe evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeRow {
    pub center: usize,
    pub z0: f64,
    pub kappa: f64,
    /// `ΔR − d·Δx̄`.
    pub net_gain: f64,
    /// Smallest money-metric utility change across agents.
    pub min_utility_change: f64,
    /// Largest absolute money-metric utility change.
    pub max_utility_change: f64,
    pub improving: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    pub rows: Vec<ProbeRow>,
    pub improving: usize,
}

/// Net-gain threshold for an improving direction.
pub const PROBE_GAIN_TOL: f64 = 1e-6;
/// Utility loss tolerated in an improving direction.
pub const PROBE_UTILITY_TOL: f64 = 1e-8;

/// Evaluate distribution-neutral bumps at `centers` over `kappas`. A row is
/// improving when it raises revenue net of damage by more than 1e-6 while
/// no agent loses more than 1e-8 in money-metric utility.
pub fn pareto_probe(
    oracle: &Oracle<'_>,
    slopes: &[f64],
    centers: &[usize],
    kappas: &[f64],
) -> Result<ProbeReport> {
    let mut rows = Vec::with_capacity(centers.len() * kappas.len());
    for &c in centers {
        let reform = bump_reform(oracle, slopes, c)?;
        for &k in kappas {
            let e = oracle.evaluate_reform(&reform, k)?;
            let net_gain = (e.revenue - oracle.base.revenue) - oracle.damage * (e.xbar - oracle.base.xbar);
            let dv: Vec<f64> =
                e.money_utility.iter().zip(&oracle.base.money_utility).map(|(a, b)| a - b).collect();
            let min = dv.iter().copied().fold(f64::INFINITY, f64::min);
            let max = dv.iter().map(|v| v.abs()).fold(0.0, f64::max);
            rows.push(ProbeRow {
                center: c,
                z0: oracle.base.choices[c].z,
                kappa: k,
                net_gain,
                min_utility_change: min,
                max_utility_change: max,
                improving: net_gain > PROBE_GAIN_TOL && min >= -PROBE_UTILITY_TOL,
            });
        }
    }
    let improving = rows.iter().filter(|r| r.improving).count();
    Ok(ProbeReport { rows, improving })
}

/// `n` bump centres spread evenly over the interior agents.
pub fn interior_centers(n_agents: usize, n: usize) -> Vec<usize> {
    let (lo, hi) = (4, n_agents.saturating_sub(5));
    if n == 0 || hi <= lo {
        return Vec::new();
    }
    if n == 1 {
        return vec![(lo + hi) / 2];
    }
    (0..n).map(|k| lo + (hi - lo) * k / (n - 1)).collect()
}

/// Economy whose commodity schedule reproduces its own Pareto-efficient
/// rates, with the statistics measured there.
#[derive(Debug, Clone)]
pub struct NonlinearEquilibrium {
    pub economy: SyntheticEconomy,
    pub stats: EconomyStats,
    pub schedule: Vec<SchedulePoint>,
    pub iterations: usize,
    pub max_change: f64,
}

/// Commodity schedule with marginal rate `rates[i]` at each agent's `x`.
pub fn schedule_through(xs: &[f64], rates: &[f64]) -> Result<CommodityTax> {
    let top = xs.last().copied().unwrap_or(1.0);
    CommodityTax::from_rates(xs, rates, 50.0 * top)
}

/// Iterate statistics → pointwise rates → rebuilt schedule until the rates
/// at every agent change by less than `tol`.
pub fn equilibrate_nonlinear(
    economy: &SyntheticEconomy,
    damage: f64,
    tol: f64,
    max_iter: usize,
) -> Result<NonlinearEquilibrium> {
    if economy.n_theta() != 1 {
        return Err(Error::InvalidInput("nonlinear equilibration needs a unidimensional economy".into()));
    }
    let fd = FiniteDiff::default();
    let mut cur = economy.clone();
    let mut last = f64::INFINITY;
    for it in 1..=max_iter {
        let stats = economy_stats(&cur, &fd)?;
        let sol = solve_nonlinear(&stats.profile, damage)?;
        let xs: Vec<f64> = stats.agents.iter().map(|a| a.choice.x).collect();
        let rates: Vec<f64> = sol.result.iter().map(|p| p.rate).collect();
        let change = stats.agents.iter().zip(&rates).map(|(a, r)| (a.ctr - r).abs()).fold(0.0, f64::max);
        if change < tol {
            return Ok(NonlinearEquilibrium { economy: cur, stats, schedule: sol.result, iterations: it, max_change: change });
        }
        last = change;
        cur = cur.with_commodity_tax(schedule_through(&xs, &rates)?);
    }
    Err(Error::NoConvergence { points: vec![last] })
}

/// Linear method used by [`equilibrate_linear`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LinearMethod {
    Linear,
    Multidim,
}

/// Economy whose linear commodity rate reproduces its own solved rate.
#[derive(Debug, Clone)]
pub struct LinearEquilibrium {
    pub economy: SyntheticEconomy,
    pub stats: EconomyStats,
    pub rate: f64,
    pub iterations: usize,
}

pub fn equilibrate_linear(
    economy: &SyntheticEconomy,
    damage: f64,
    method: LinearMethod,
    tol: f64,
    max_iter: usize,
) -> Result<LinearEquilibrium> {
    let fd = FiniteDiff::default();
    let mut cur = economy.with_commodity_tax(CommodityTax::linear(damage)?);
    let mut rate = damage;
    for it in 1..=max_iter {
        let stats = economy_stats(&cur, &fd)?;
        let next = match method {
            LinearMethod::Linear => solve_linear(&stats.profile, damage)?.result,
            LinearMethod::Multidim => solve_multidim(&stats.profile, damage)?.result,
        };
        if (next - rate).abs() < tol {
            return Ok(LinearEquilibrium { economy: cur, stats, rate, iterations: it });
        }
        rate = next;
        cur = cur.with_commodity_tax(CommodityTax::linear(rate)?);
    }
    Err(Error::NoConvergence { points: vec![rate] })
}

/// Vertically-neutral reform for a solved economy, `x̄(z)` through the
/// productivity-cell means.
pub fn vertical_reform(stats: &EconomyStats) -> Result<ReformDirection> {
    let p = &stats.profile;
    ReformDirection::vertically_neutral(p.z(), &p.xhat, &p.xhat_slope)
}

/// One named verification check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub damage: f64,
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn check_below(name: &str, value: f64, tolerance: f64) -> Check {
    Check { name: name.into(), value, tolerance, pass: value.is_finite() && value < tolerance }
}

/// Oracle suite at the economy's own taxes: budget identities, Slutsky
/// symmetry, covariance identities (with taste types) and, for
/// unidimensional economies, bump-reform stationarity and the Pareto probe.
pub fn verify_economy(economy: &SyntheticEconomy, damage: f64) -> Result<VerificationReport> {
    let stats = economy_stats(economy, &FiniteDiff::default())?;
    let oracle = Oracle::new(economy, damage)?;
    let mut checks = Vec::new();

    let mut budget: f64 = 0.0;
    for c in &oracle.base.choices {
        let spent = c.c + c.x + economy.tax.commodity.eval(c.x)?.value;
        let income = c.z - economy.tax.income.eval(c.z)?.value;
        budget = budget.max((spent - income).abs() / income.abs().max(1.0));
    }
    checks.push(check_below("budget_identity", budget, 1e-9));

    let within = stats
        .agents
        .iter()
        .filter(|a| {
            let chi = FiniteDiff::default()
                .cross_base(economy, a.choice.w, a.choice.theta, &a.choice)
                .unwrap_or(f64::NAN);
            let s = a.slutsky_cross_base();
            (chi - s).abs() <= 0.01 * s.abs().max(1e-12)
        })
        .count();
    let share_off = 1.0 - within as f64 / stats.agents.len() as f64;
    checks.push(check_below("slutsky_share_outside_1pct", share_off, 0.05 + 1e-12));

    if economy.theta_grid.is_some() {
        let cov = covariance_report(economy, &stats)?;
        checks.push(check_below("covariance_identity", cov.max_identity_gap, 1e-12));
    } else {
        let n = oracle.types.len();
        let mut worst: f64 = 0.0;
        for c in interior_centers(n, 5) {
            worst = worst.max(oracle.gradient(&bump_reform(&oracle, &stats.cell_slopes, c)?)?.abs());
        }
        checks.push(check_below("bump_gradient", worst, 1e-5));
        let probe = pareto_probe(&oracle, &stats.cell_slopes, &interior_centers(n, 10), &PROBE_KAPPAS)?;
        checks.push(Check {
            name: "improving_directions".into(),
            value: probe.improving as f64,
            tolerance: 0.0,
            pass: probe.improving == 0,
        });
    }
    Ok(VerificationReport { damage, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tent_integral_is_consistent() {
        let (lo, mid, hi) = (1.0, 2.0, 4.0);
        let top = tent_integral(lo, mid, hi, 10.0);
        assert!((top.value - 1.5).abs() < 1e-15);
        let h = 1e-6;
        for x in [1.3, 1.9, 2.5, 3.7] {
            let e = tent_integral(lo, mid, hi, x);
            let d = (tent_integral(lo, mid, hi, x + h).value - tent_integral(lo, mid, hi, x - h).value) / (2.0 * h);
            assert!((d - e.slope).abs() < 1e-8);
        }
        assert_eq!(tent_integral(lo, mid, hi, mid).slope, 1.0);
    }

    #[test]
    fn distribution_neutral_offsets_at_bundles() {
        let z: Vec<f64> = (1..=9).map(|i| i as f64).collect();
        let x: Vec<f64> = z.iter().map(|v| 0.1 * v + 0.01 * v * v).collect();
        let s: Vec<f64> = z.iter().map(|v| 0.1 + 0.02 * v).collect();
        let r = ReformDirection::distribution_neutral(&z, &x, &s, 4, 2).unwrap();
        assert!(r.neutrality_gap(&z, &x) <= 1e-15);
        assert!(ReformDirection::distribution_neutral(&z, &x, &s, 1, 2).is_err());
    }

    #[test]
    fn interior_centers_stay_inside() {
        let c = interior_centers(51, 5);
        assert_eq!(c.len(), 5);
        assert!(c.iter().all(|&i| (4..=46).contains(&i)));
    }
}
