//! Sufficient statistics: finite-difference extraction from synthetic
//! economies, the causal/cross-sectional decomposition and the column
//! profile consumed by the solvers.
//!
//! Compensated perturbations are local tilts of one schedule around the
//! agent's own choice, `T(·) + δ·(· − ·₀)`, so the liability at the original
//! bundle is unchanged. Every derivative is a central difference whose
//! one-sided halves must agree within 5%.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{solve_agent, solve_agent_with_grant, solve_inner_at_income, AgentChoice, AgentType, SyntheticEconomy};
use crate::error::{Error, Result};
use crate::numeric::{trapezoid_weights, Eval};
use crate::schedules::{IncomeGrid, Perturbed, TaxPolicy};

/// Step sizes for the extractors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteDiff {
    /// Absolute step on marginal rates.
    pub rate_step: f64,
    /// Relative step on taxable income (and on lump-sum grants).
    pub income_step: f64,
    /// Relative step on productivity for cross-sectional slopes.
    pub type_step: f64,
}

impl Default for FiniteDiff {
    fn default() -> Self {
        FiniteDiff { rate_step: 1e-4, income_step: 1e-4, type_step: 1e-4 }
    }
}

fn central<F: Fn(f64) -> Result<f64>>(f: F, f0: f64, h: f64, scale: f64) -> Result<f64> {
    central_above(f, f0, h, 1e-7 * scale)
}

/// Central difference whose one-sided halves are only compared when one of
/// them exceeds `floor` in magnitude.
fn central_above<F: Fn(f64) -> Result<f64>>(f: F, f0: f64, h: f64, floor: f64) -> Result<f64> {
    let fp = f(h)?;
    let fm = f(-h)?;
    let forward = (fp - f0) / h;
    let backward = (f0 - fm) / h;
    let big = forward.abs().max(backward.abs());
    if big > floor && (forward - backward).abs() > 0.05 * big {
        return Err(Error::StepTooLarge { forward, backward });
    }
    Ok((fp - fm) / (2.0 * h))
}

impl FiniteDiff {
    /// Compensated elasticity of taxable income with respect to `1 − T′_z`.
    pub fn eps_z(&self, econ: &SyntheticEconomy, w: f64, theta: f64, base: &AgentChoice) -> Result<f64> {
        let prefs = econ.prefs(w, theta);
        let z0 = base.z;
        let m = econ.tax.income_tax(z0)?.slope;
        let tilt = move |z: f64| Eval::new(z - z0, 1.0, 0.0);
        let dz = central(
            |d| {
                let p = Perturbed { base: &econ.tax, income: Some(&tilt), commodity: None, scale: d };
                Ok(solve_agent(&prefs, theta, &p)?.z)
            },
            z0,
            self.rate_step,
            z0,
        )?;
        Ok(-(1.0 - m) / z0 * dz)
    }

    /// Compensated elasticity of `x` with respect to `1 + T′_x`, income fixed.
    pub fn eps_x(&self, econ: &SyntheticEconomy, w: f64, theta: f64, base: &AgentChoice) -> Result<f64> {
        let prefs = econ.prefs(w, theta);
        let x0 = base.x;
        let r = econ.tax.commodity_tax(x0)?.slope;
        let tilt = move |x: f64| Eval::new(x - x0, 1.0, 0.0);
        let dx = central(
            |d| {
                let p = Perturbed { base: &econ.tax, income: None, commodity: Some(&tilt), scale: d };
                Ok(solve_inner_at_income(&prefs, &p, base.income)?.x)
            },
            x0,
            self.rate_step,
            x0,
        )?;
        Ok(-(1.0 + r) / x0 * dx)
    }

    /// Causal slope `∂x(w; z)/∂z` along the inner stage.
    pub fn x_inc(&self, econ: &SyntheticEconomy, w: f64, theta: f64, base: &AgentChoice) -> Result<f64> {
        let prefs = econ.prefs(w, theta);
        let z0 = base.z;
        central(
            |s| Ok(crate::agent::solve_inner(&prefs, &econ.tax, z0 + s)?.x),
            base.x,
            self.income_step * z0,
            base.x / z0,
        )
    }

    /// Compensated response of `z` to a commodity-rate tilt (`χ`).
    pub fn cross_base(&self, econ: &SyntheticEconomy, w: f64, theta: f64, base: &AgentChoice) -> Result<f64> {
        let prefs = econ.prefs(w, theta);
        let x0 = base.x;
        let tilt = move |x: f64| Eval::new(x - x0, 1.0, 0.0);
        central(
            |d| {
                let p = Perturbed { base: &econ.tax, income: None, commodity: Some(&tilt), scale: d };
                Ok(solve_agent(&prefs, theta, &p)?.z)
            },
            base.z,
            self.rate_step,
            base.z,
        )
    }

    /// Income effects `(∂z/∂I, ∂x/∂I|_z)` of a lump-sum grant.
    pub fn income_effects(
        &self,
        econ: &SyntheticEconomy,
        w: f64,
        theta: f64,
        base: &AgentChoice,
    ) -> Result<(f64, f64)> {
        let prefs = econ.prefs(w, theta);
        let h = self.income_step * base.income;
        // Income effects on z vanish under a linear commodity tax and are
        // tiny otherwise, where third-derivative kinks of a rate schedule
        // make the one-sided quotients disagree at the 1e-7 level.
        let dz = central_above(
            |g| Ok(solve_agent_with_grant(&prefs, theta, &econ.tax, g)?.z),
            base.z,
            h,
            1e-5 * base.z / base.income,
        )?;
        let dx = central(
            |g| Ok(solve_inner_at_income(&prefs, &econ.tax, base.income + g)?.x),
            base.x,
            h,
            base.x / base.income,
        )?;
        Ok((dz, dx))
    }

    /// Cross-sectional slope of `x` against `z` along the productivity grid,
    /// from solves at `w(1 ± type_step)`.
    pub fn type_slope(&self, econ: &SyntheticEconomy, w: f64, theta: f64) -> Result<(f64, f64)> {
        let lo = econ.solve_agent(w * (1.0 - self.type_step), theta)?;
        let hi = econ.solve_agent(w * (1.0 + self.type_step), theta)?;
        Ok((hi.z - lo.z, hi.x - lo.x))
    }
}

/// ε_z at default steps.
pub fn extract_eps_z(econ: &SyntheticEconomy, w: f64, theta: f64) -> Result<f64> {
    let base = econ.solve_agent(w, theta)?;
    FiniteDiff::default().eps_z(econ, w, theta, &base).map_err(|e| e.at_agent(w, theta))
}

/// ε_{x|z} at default steps.
pub fn extract_eps_x(econ: &SyntheticEconomy, w: f64, theta: f64) -> Result<f64> {
    let base = econ.solve_agent(w, theta)?;
    FiniteDiff::default().eps_x(econ, w, theta, &base).map_err(|e| e.at_agent(w, theta))
}

/// x′_inc at default steps.
pub fn extract_x_inc(econ: &SyntheticEconomy, w: f64, theta: f64) -> Result<f64> {
    let base = econ.solve_agent(w, theta)?;
    FiniteDiff::default().x_inc(econ, w, theta, &base).map_err(|e| e.at_agent(w, theta))
}

/// χ at default steps.
pub fn extract_cross_base(econ: &SyntheticEconomy, w: f64, theta: f64) -> Result<f64> {
    let base = econ.solve_agent(w, theta)?;
    FiniteDiff::default().cross_base(econ, w, theta, &base).map_err(|e| e.at_agent(w, theta))
}

/// Everything the oracle and the profile need about one agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgentStats {
    pub choice: AgentChoice,
    pub weight: f64,
    /// `T′_z(z)`.
    pub mtr: f64,
    /// `T′_x(x)`.
    pub ctr: f64,
    pub eps_z: f64,
    pub eps_x: f64,
    pub x_inc: f64,
    /// `∂z/∂I` for a lump-sum grant.
    pub dz_dgrant: f64,
    /// `∂x/∂I` at fixed `z`.
    pub dx_dgrant: f64,
}

impl AgentStats {
    /// Income response to a unit commodity-rate tilt implied by the Slutsky
    /// identity, `−z ε_z x′_inc / (1 − T′_z)`.
    pub fn slutsky_cross_base(&self) -> f64 {
        -self.choice.z * self.eps_z / (1.0 - self.mtr) * self.x_inc
    }
}

/// Statistics for a single agent at its status-quo choice.
pub fn agent_stats(
    econ: &SyntheticEconomy,
    t: &AgentType,
    base: &AgentChoice,
    fd: &FiniteDiff,
) -> Result<AgentStats> {
    let run = || -> Result<AgentStats> {
        let (dz_dgrant, dx_dgrant) = fd.income_effects(econ, t.w, t.theta, base)?;
        Ok(AgentStats {
            choice: *base,
            weight: t.weight,
            mtr: econ.tax.income_tax(base.z)?.slope,
            ctr: econ.tax.commodity_tax(base.x)?.slope,
            eps_z: fd.eps_z(econ, t.w, t.theta, base)?,
            eps_x: fd.eps_x(econ, t.w, t.theta, base)?,
            x_inc: fd.x_inc(econ, t.w, t.theta, base)?,
            dz_dgrant,
            dx_dgrant,
        })
    };
    run().map_err(|e| e.at_agent(t.w, t.theta))
}

/// Per-grid-point sufficient statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsProfile {
    pub grid: IncomeGrid,
    pub xhat: Vec<f64>,
    pub xhat_slope: Vec<f64>,
    pub x_inc: Vec<f64>,
    pub x_het: Vec<f64>,
    pub eta_taste: Vec<f64>,
    pub eps_z: Vec<f64>,
    pub eps_x: Vec<f64>,
    pub mtr: Vec<f64>,
    pub var_x_inc: Option<Vec<f64>>,
    pub gbar_plus: Option<Vec<f64>>,
}

/// `x′_het = x̂′ − x′_inc` and `η = z·x′_het/x̂`, pointwise.
pub fn decompose(z: &[f64], xhat: &[f64], xhat_slope: &[f64], x_inc: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = z.len();
    if xhat.len() != n || xhat_slope.len() != n || x_inc.len() != n {
        return Err(Error::GridMismatch(format!(
            "lengths z {}, xhat {}, xhat_slope {}, x_inc {}",
            n,
            xhat.len(),
            xhat_slope.len(),
            x_inc.len()
        )));
    }
    let x_het: Vec<f64> = xhat_slope.iter().zip(x_inc).map(|(s, i)| s - i).collect();
    let eta = (0..n).map(|i| z[i] * x_het[i] / xhat[i]).collect();
    Ok((x_het, eta))
}

impl StatsProfile {
    /// Assemble a profile; the decomposition columns are derived here.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: IncomeGrid,
        xhat: Vec<f64>,
        xhat_slope: Vec<f64>,
        x_inc: Vec<f64>,
        eps_z: Vec<f64>,
        eps_x: Vec<f64>,
        mtr: Vec<f64>,
        var_x_inc: Option<Vec<f64>>,
        gbar_plus: Option<Vec<f64>>,
    ) -> Result<Self> {
        let (x_het, eta_taste) = decompose(grid.points(), &xhat, &xhat_slope, &x_inc)?;
        let p = StatsProfile {
            grid,
            xhat,
            xhat_slope,
            x_inc,
            x_het,
            eta_taste,
            eps_z,
            eps_x,
            mtr,
            var_x_inc,
            gbar_plus,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn z(&self) -> &[f64] {
        self.grid.points()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.len();
        let cols: [(&str, &Vec<f64>); 8] = [
            ("xhat", &self.xhat),
            ("xhat_slope", &self.xhat_slope),
            ("x_inc", &self.x_inc),
            ("x_het", &self.x_het),
            ("eta_taste", &self.eta_taste),
            ("eps_z", &self.eps_z),
            ("eps_x", &self.eps_x),
            ("mtr", &self.mtr),
        ];
        for (name, c) in cols {
            if c.len() != n {
                return Err(Error::GridMismatch(format!("{name} has {} rows, grid has {n}", c.len())));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} contains non-finite values")));
            }
        }
        for (name, c) in [("var_x_inc", &self.var_x_inc), ("gbar_plus", &self.gbar_plus)] {
            if let Some(c) = c {
                if c.len() != n {
                    return Err(Error::GridMismatch(format!("{name} has {} rows, grid has {n}", c.len())));
                }
            }
        }
        let z = self.grid.points();
        for i in 0..n {
            if !(self.xhat[i] > 0.0) {
                return Err(Error::InvalidInput(format!("xhat must be positive (z = {})", z[i])));
            }
            if !(self.eps_x[i] > 0.0) || !(self.eps_z[i] >= 0.0) {
                return Err(Error::InvalidInput(format!("elasticities out of range at z = {}", z[i])));
            }
            if !(self.mtr[i] < 1.0) {
                return Err(Error::InvalidInput(format!("marginal rate {} >= 1 at z = {}", self.mtr[i], z[i])));
            }
            let het = self.xhat_slope[i] - self.x_inc[i];
            if (self.x_het[i] - het).abs() > 1e-12 * het.abs().max(self.xhat_slope[i].abs()).max(1e-300) {
                return Err(Error::InvalidInput(format!("x_het identity fails at z = {}", z[i])));
            }
            let eta = z[i] * self.x_het[i] / self.xhat[i];
            if (self.eta_taste[i] - eta).abs() > 1e-12 * eta.abs().max(1e-300) {
                return Err(Error::InvalidInput(format!("eta_taste identity fails at z = {}", z[i])));
            }
        }
        if let Some(v) = &self.var_x_inc {
            if let Some(i) = v.iter().position(|&s| s < 0.0) {
                return Err(Error::NegativeVariance { z: z[i], value: v[i] });
            }
        }
        Ok(())
    }

    /// Copy with constant elasticity columns.
    pub fn with_elasticities(&self, eps_z: f64, eps_x: f64) -> Result<Self> {
        let mut p = self.clone();
        p.eps_z = vec![eps_z; self.len()];
        p.eps_x = vec![eps_x; self.len()];
        p.validate()?;
        Ok(p)
    }

    /// Copy with the conditional variance column multiplied by `k`.
    pub fn with_scaled_variance(&self, k: f64) -> Self {
        let mut p = self.clone();
        p.var_x_inc = p.var_x_inc.map(|v| v.iter().map(|s| s * k).collect());
        p
    }

    /// Copy with `η^Taste ≡ 0`: the cross-sectional slope replaced by `x′_inc`.
    pub fn without_taste_heterogeneity(&self) -> Self {
        let mut p = self.clone();
        p.xhat_slope = p.x_inc.clone();
        p.x_het = vec![0.0; self.len()];
        p.eta_taste = vec![0.0; self.len()];
        p
    }
}

/// `ḡ₊(z) = E[g | z′ ≥ z]` from a welfare-weight column; the top point
/// takes its own weight.
pub fn gbar_plus_from_weights(grid: &IncomeGrid, g: &[f64]) -> Vec<f64> {
    let z = grid.points();
    let h = grid.density();
    let n = z.len();
    let mut out = vec![0.0; n];
    out[n - 1] = g[n - 1];
    let (mut num, mut den) = (0.0, 0.0);
    for i in (0..n - 1).rev() {
        let dz = 0.5 * (z[i + 1] - z[i]);
        num += dz * (g[i] * h[i] + g[i + 1] * h[i + 1]);
        den += dz * (h[i] + h[i + 1]);
        out[i] = if den > 0.0 { num / den } else { g[i] };
    }
    out
}

/// Welfare weights `g(z) ∝ z^{−ν}` normalized to unit mean on the grid.
pub fn power_welfare_weights(grid: &IncomeGrid, nu: f64) -> Vec<f64> {
    let raw: Vec<f64> = grid.points().iter().map(|z| z.powf(-nu)).collect();
    let mean = grid.expect(&raw);
    raw.into_iter().map(|g| g / mean).collect()
}

/// Per-agent statistics together with the profile built from them.
#[derive(Debug, Clone)]
pub struct EconomyStats {
    pub types: Vec<AgentType>,
    pub agents: Vec<AgentStats>,
    /// Cross-sectional slope of the (conditional mean) dirty consumption per
    /// productivity cell.
    pub cell_slopes: Vec<f64>,
    pub profile: StatsProfile,
}

/// Extract per-agent statistics and assemble the profile over productivity
/// cells. Cell means use the taste weights; the density is chosen so that
/// trapezoid expectations on the profile grid reproduce the type weights.
pub fn economy_stats(econ: &SyntheticEconomy, fd: &FiniteDiff) -> Result<EconomyStats> {
    let types = econ.types();
    let choices = econ.solve()?;
    let agents: Vec<AgentStats> = types
        .par_iter()
        .zip(choices.par_iter())
        .map(|(t, c)| agent_stats(econ, t, c, fd))
        .collect::<Result<_>>()?;
    let slopes: Vec<(f64, f64)> = types
        .par_iter()
        .map(|t| fd.type_slope(econ, t.w, t.theta))
        .collect::<Result<_>>()?;
    let nt = econ.n_theta();
    let nw = econ.w_grid.points.len();
    let pis: Vec<f64> = econ.theta_grid.as_ref().map_or(vec![1.0], |g| g.weights.clone());
    let mut zbar = vec![0.0; nw];
    let mut xbar = vec![0.0; nw];
    let mut dz = vec![0.0; nw];
    let mut dx = vec![0.0; nw];
    let mut x_inc = vec![0.0; nw];
    let mut eps_z = vec![0.0; nw];
    let mut eps_x_x = vec![0.0; nw];
    let mut mtr = vec![0.0; nw];
    for i in 0..nw {
        for j in 0..nt {
            let (a, pi) = (&agents[i * nt + j], pis[j]);
            zbar[i] += pi * a.choice.z;
            xbar[i] += pi * a.choice.x;
            dz[i] += pi * slopes[i * nt + j].0;
            dx[i] += pi * slopes[i * nt + j].1;
            x_inc[i] += pi * a.x_inc;
            eps_z[i] += pi * a.eps_z;
            eps_x_x[i] += pi * a.eps_x * a.choice.x;
            mtr[i] += pi * a.mtr;
        }
    }
    for i in 1..nw {
        if zbar[i] <= zbar[i - 1] {
            return Err(Error::NonMonotone { w: econ.w_grid.points[i] });
        }
    }
    let var = econ.theta_grid.as_ref().map(|_| {
        (0..nw)
            .map(|i| (0..nt).map(|j| pis[j] * (agents[i * nt + j].x_inc - x_inc[i]).powi(2)).sum::<f64>())
            .collect::<Vec<f64>>()
    });
    let cell_slopes: Vec<f64> = (0..nw).map(|i| dx[i] / dz[i]).collect();
    let eps_x: Vec<f64> = (0..nw).map(|i| eps_x_x[i] / xbar[i]).collect();
    let tw = trapezoid_weights(&zbar);
    let density: Vec<f64> = (0..nw).map(|i| econ.w_grid.weights[i] / tw[i]).collect();
    let grid = IncomeGrid::new(zbar, density)?;
    let profile = StatsProfile::new(grid, xbar, cell_slopes.clone(), x_inc, eps_z, eps_x, mtr, var, None)?;
    Ok(EconomyStats { types, agents, cell_slopes, profile })
}

/// Cross-sectional slopes `dx/dz` per type from productivity perturbations,
/// without the remaining statistics.
pub fn cross_section_slopes(econ: &SyntheticEconomy, fd: &FiniteDiff) -> Result<Vec<f64>> {
    econ.types()
        .par_iter()
        .map(|t| fd.type_slope(econ, t.w, t.theta).map(|(dz, dx)| dx / dz))
        .collect()
}

/// Profile of a synthetic economy at default steps.
pub fn build_profile_from_economy(econ: &SyntheticEconomy) -> Result<StatsProfile> {
    Ok(economy_stats(econ, &FiniteDiff::default())?.profile)
}

#[derive(Serialize, Deserialize)]
struct ProfileRepr {
    z: Vec<f64>,
    h_z: Vec<f64>,
    xhat: Vec<f64>,
    xhat_slope: Vec<f64>,
    x_inc: Vec<f64>,
    x_het: Vec<f64>,
    eta_taste: Vec<f64>,
    eps_z: Vec<f64>,
    eps_x: Vec<f64>,
    mtr: Vec<f64>,
    var_x_inc: Option<Vec<f64>>,
    gbar_plus: Option<Vec<f64>>,
}

impl Serialize for StatsProfile {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ProfileRepr {
            z: self.grid.points().to_vec(),
            h_z: self.grid.density().to_vec(),
            xhat: self.xhat.clone(),
            xhat_slope: self.xhat_slope.clone(),
            x_inc: self.x_inc.clone(),
            x_het: self.x_het.clone(),
            eta_taste: self.eta_taste.clone(),
            eps_z: self.eps_z.clone(),
            eps_x: self.eps_x.clone(),
            mtr: self.mtr.clone(),
            var_x_inc: self.var_x_inc.clone(),
            gbar_plus: self.gbar_plus.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for StatsProfile {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = ProfileRepr::deserialize(d)?;
        let grid = IncomeGrid::new(r.z, r.h_z).map_err(serde::de::Error::custom)?;
        let p = StatsProfile {
            grid,
            xhat: r.xhat,
            xhat_slope: r.xhat_slope,
            x_inc: r.x_inc,
            x_het: r.x_het,
            eta_taste: r.eta_taste,
            eps_z: r.eps_z,
            eps_x: r.eps_x,
            mtr: r.mtr,
            var_x_inc: r.var_x_inc,
            gbar_plus: r.gbar_plus,
        };
        p.validate().map_err(serde::de::Error::custom)?;
        Ok(p)
    }
}
