//! Corrective-tax engines.
//!
//! * [`solve_nonlinear`]: Pareto-efficient nonlinear commodity schedule,
//!   pointwise in income.
//! * [`solve_optimal_levels`]: optimal commodity and income marginal rates
//!   given average welfare weights above each income.
//! * [`solve_linear`]: Pareto-efficient linear commodity rate.
//! * [`solve_multidim`]: linear rate with heterogeneous causal income
//!   effects at each income, attenuated by `Var(x′_inc | z)`.
//!
//! All statistics are taken as given (evaluated at the status quo). The
//! pointwise and linear conditions share one scalar form in `u = 1 + τ`,
//!
//! ```text
//! u − (1 + d) = u·P / (1 − u·Q),
//! ```
//!
//! solved by damped fixed-point iteration and cross-checked against the
//! root of `Q u² − (1 + Q(1+d) − P) u + (1+d) = 0` that tends to `1 + d` as
//! `P, Q → 0`.
//!
//! For [`solve_optimal_levels`] the welfare weights are supplied directly as
//! `ḡ₊`; whether they are consistent with the revenue requirement is the
//! caller's concern.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::statistics::StatsProfile;

/// Damping used by all fixed points.
pub const DAMPING: f64 = 0.5;
/// Fixed-point tolerance on `|map(x) − x|`.
pub const TOLERANCE: f64 = 1e-12;
/// Iteration cap.
pub const MAX_ITER: usize = 10_000;

/// Outcome of an iterative solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport<T> {
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub result: T,
    pub branch_note: String,
}

/// Damped iteration `x ← (1−damping)·x + damping·map(x)` until
/// `|map(x) − x| < tol`.
pub fn fixed_point<F: FnMut(f64) -> f64>(
    mut map: F,
    seed: f64,
    damping: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport<f64>> {
    if !seed.is_finite() {
        return Err(Error::InvalidInput("fixed-point seed must be finite".into()));
    }
    let mut x = seed;
    for it in 1..=max_iter {
        let fx = map(x);
        if !fx.is_finite() {
            break;
        }
        let r = (fx - x).abs();
        if r < tol {
            return Ok(SolveReport {
                converged: true,
                iterations: it,
                residual: r,
                result: x,
                branch_note: String::new(),
            });
        }
        x = (1.0 - damping) * x + damping * fx;
    }
    Err(Error::NoConvergence { points: vec![x] })
}

/// Apply [`fixed_point`] independently at each point, collecting failures.
pub fn fixed_point_pointwise<F: FnMut(usize, f64) -> f64>(
    mut map: F,
    seeds: &[f64],
    labels: &[f64],
    damping: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport<Vec<f64>>> {
    let mut out = Vec::with_capacity(seeds.len());
    let mut failed = Vec::new();
    let mut iterations = 0;
    let mut residual: f64 = 0.0;
    for (i, &s) in seeds.iter().enumerate() {
        match fixed_point(|x| map(i, x), s, damping, tol, max_iter) {
            Ok(r) => {
                iterations = iterations.max(r.iterations);
                residual = residual.max(r.residual);
                out.push(r.result);
            }
            Err(_) => failed.push(labels[i]),
        }
    }
    if !failed.is_empty() {
        return Err(Error::NoConvergence { points: failed });
    }
    Ok(SolveReport { converged: true, iterations, residual, result: out, branch_note: String::new() })
}

/// The scalar condition `u − D = u·P/(1 − u·Q)` with `u = 1 + τ`, `D = 1 + d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarCondition {
    pub damage: f64,
    pub p: f64,
    pub q: f64,
}

impl ScalarCondition {
    /// Right-hand side map `τ ↦ d + (1+τ)P/(1 − (1+τ)Q)`.
    pub fn map(&self, tau: f64) -> f64 {
        let u = 1.0 + tau;
        self.damage + u * self.p / (1.0 - u * self.q)
    }

    /// `1 − (1+τ)Q`.
    pub fn denominator(&self, tau: f64) -> f64 {
        1.0 - (1.0 + tau) * self.q
    }

    /// Root continuous in `(P, Q)` at zero.
    pub fn closed_form(&self) -> Option<f64> {
        let d = 1.0 + self.damage;
        if self.q.abs() < 1e-300 {
            let den = 1.0 - self.p;
            return (den > 0.0).then(|| d / den - 1.0);
        }
        let b = 1.0 + self.q * d - self.p;
        let disc = b * b - 4.0 * self.q * d;
        if disc < 0.0 || b <= 0.0 {
            return None;
        }
        Some(2.0 * d / (b + disc.sqrt()) - 1.0)
    }

    /// Damped fixed point from the damage rate, with singularity checks.
    pub fn solve(&self, z: f64) -> Result<SolveReport<f64>> {
        let d0 = self.denominator(self.damage);
        if !(d0 > 0.0) {
            return Err(Error::SingularDenominator { z, lo: self.damage, hi: self.damage });
        }
        let mut singular = None;
        let cond = *self;
        let rep = fixed_point(
            |t| {
                if cond.denominator(t) <= 0.0 && singular.is_none() {
                    singular = Some(t);
                }
                cond.map(t)
            },
            self.damage,
            DAMPING,
            TOLERANCE,
            MAX_ITER,
        );
        if let Some(t) = singular {
            return Err(Error::SingularDenominator { z, lo: self.damage.min(t), hi: self.damage.max(t) });
        }
        let mut rep = rep.map_err(|_| Error::NoConvergence { points: vec![z] })?;
        if !(self.denominator(rep.result) > 0.0) {
            return Err(Error::SingularDenominator {
                z,
                lo: self.damage.min(rep.result),
                hi: self.damage.max(rep.result),
            });
        }
        rep.branch_note = match self.closed_form() {
            Some(c) => format!("quadratic root continuous at zero heterogeneity: {c:.17e}"),
            None => "quadratic has no admissible real root".into(),
        };
        Ok(rep)
    }
}

/// Statistics entering the pointwise condition at one income.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointStats {
    pub z: f64,
    pub eta: f64,
    pub eps_z: f64,
    pub eps_x: f64,
    pub mtr: f64,
    pub x_inc: f64,
}

impl PointStats {
    pub fn from_profile(p: &StatsProfile, i: usize) -> Self {
        PointStats {
            z: p.z()[i],
            eta: p.eta_taste[i],
            eps_z: p.eps_z[i],
            eps_x: p.eps_x[i],
            mtr: p.mtr[i],
            x_inc: p.x_inc[i],
        }
    }

    /// `A = η ε_z / (ε_x (1 − T′_z))`, so that `RR = A (1 + τ)`.
    pub fn responsiveness(&self) -> Result<f64> {
        if !(self.eps_x > 0.0) {
            return Err(Error::DegenerateElasticity { z: self.z, value: self.eps_x });
        }
        Ok(self.eta * self.eps_z / (self.eps_x * (1.0 - self.mtr)))
    }

    pub fn condition(&self, damage: f64) -> Result<ScalarCondition> {
        let a = self.responsiveness()?;
        Ok(ScalarCondition { damage, p: a * self.mtr, q: a * self.x_inc })
    }

    /// Residual of the unrearranged efficiency condition at rate `tau`.
    pub fn residual(&self, damage: f64, tau: f64) -> f64 {
        (tau - damage) / (1.0 + tau)
            - self.eta * self.eps_z / self.eps_x * (self.mtr + (tau - damage) * self.x_inc) / (1.0 - self.mtr)
    }
}

/// Solved commodity marginal rate at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SchedulePoint {
    pub z: f64,
    pub xhat: f64,
    pub rate: f64,
    pub closed_form: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Pareto-efficient nonlinear commodity schedule `T′_x(x̂(z))`.
pub fn solve_nonlinear(profile: &StatsProfile, damage: f64) -> Result<SolveReport<Vec<SchedulePoint>>> {
    let mut points = Vec::with_capacity(profile.len());
    let mut failed = Vec::new();
    let mut worst: f64 = 0.0;
    let mut iterations = 0;
    for i in 0..profile.len() {
        let s = PointStats::from_profile(profile, i);
        let rep = match s.condition(damage)?.solve(s.z) {
            Ok(r) => r,
            Err(Error::NoConvergence { .. }) => {
                failed.push(s.z);
                continue;
            }
            Err(e) => return Err(e),
        };
        let residual = s.residual(damage, rep.result);
        worst = worst.max(residual.abs());
        iterations = iterations.max(rep.iterations);
        points.push(SchedulePoint {
            z: s.z,
            xhat: profile.xhat[i],
            rate: rep.result,
            closed_form: s.condition(damage)?.closed_form().unwrap_or(f64::NAN),
            residual,
            iterations: rep.iterations,
        });
    }
    if !failed.is_empty() {
        return Err(Error::NoConvergence { points: failed });
    }
    Ok(SolveReport {
        converged: true,
        iterations,
        residual: worst,
        result: points,
        branch_note: "pointwise fixed point seeded at damage; quadratic root continuous at zero taste heterogeneity".into(),
    })
}

/// Optimal commodity and income marginal rates at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelsPoint {
    pub z: f64,
    pub commodity_rate: f64,
    pub income_rate: f64,
}

/// Optimal levels given `ḡ₊`, in closed form.
pub fn solve_optimal_levels(profile: &StatsProfile, damage: f64) -> Result<SolveReport<Vec<LevelsPoint>>> {
    let gbar = profile
        .gbar_plus
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("gbar_plus column required for optimal levels".into()))?;
    let z = profile.z();
    let h = profile.grid.density();
    let big_h = profile.grid.cdf();
    let mut out = Vec::with_capacity(profile.len());
    for i in 0..profile.len() {
        let zh = z[i] * h[i];
        if zh < 1e-12 {
            return Err(Error::DegenerateHazard { z: z[i], value: zh });
        }
        if !(profile.eps_x[i] > 0.0) {
            return Err(Error::DegenerateElasticity { z: z[i], value: profile.eps_x[i] });
        }
        if !(profile.eps_z[i] > 0.0) {
            return Err(Error::InvalidInput(format!("eps_z must be positive at z = {}", z[i])));
        }
        let hazard = (1.0 - big_h[i]).max(0.0) / zh * (1.0 - gbar[i]);
        let c = profile.eta_taste[i] / profile.eps_x[i] * hazard;
        if c >= 1.0 {
            return Err(Error::RateOutOfRange { z: z[i], c });
        }
        let tx = (damage + c) / (1.0 - c);
        let k = hazard / profile.eps_z[i];
        if !(1.0 + k > 0.0) {
            return Err(Error::RateOutOfRange { z: z[i], c: -k });
        }
        let tz = (k - (tx - damage) * profile.x_inc[i]) / (1.0 + k);
        out.push(LevelsPoint { z: z[i], commodity_rate: tx, income_rate: tz });
    }
    Ok(SolveReport {
        converged: true,
        iterations: 0,
        residual: 0.0,
        result: out,
        branch_note: "closed form".into(),
    })
}

/// `P`, `Q` and the attenuation term `S` of the linear conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearMoments {
    pub p: f64,
    pub q: f64,
    pub s: f64,
}

/// Moments of the linear condition; `S` uses the variance column if present.
pub fn linear_moments(profile: &StatsProfile) -> Result<LinearMoments> {
    let n = profile.len();
    if let Some(i) = profile.eps_x.iter().position(|e| !(*e > 0.0)) {
        return Err(Error::DegenerateElasticity { z: profile.z()[i], value: profile.eps_x[i] });
    }
    let ex: Vec<f64> = (0..n).map(|i| profile.eps_x[i] * profile.xhat[i]).collect();
    let mean_ex = profile.grid.expect(&ex);
    let z = profile.z();
    let a: Vec<f64> = (0..n)
        .map(|i| profile.eta_taste[i] * profile.eps_z[i] * profile.xhat[i] / (mean_ex * (1.0 - profile.mtr[i])))
        .collect();
    let at: Vec<f64> = (0..n).map(|i| a[i] * profile.mtr[i]).collect();
    let ax: Vec<f64> = (0..n).map(|i| a[i] * profile.x_inc[i]).collect();
    let s = match &profile.var_x_inc {
        Some(v) => {
            if let Some(i) = v.iter().position(|s| *s < 0.0) {
                return Err(Error::NegativeVariance { z: z[i], value: v[i] });
            }
            let sv: Vec<f64> = (0..n)
                .map(|i| profile.eps_z[i] * z[i] * v[i] / (mean_ex * (1.0 - profile.mtr[i])))
                .collect();
            profile.grid.expect(&sv)
        }
        None => 0.0,
    };
    Ok(LinearMoments { p: profile.grid.expect(&at), q: profile.grid.expect(&ax), s })
}

fn solve_scalar(cond: ScalarCondition, label: f64) -> Result<SolveReport<f64>> {
    let mut rep = cond.solve(label)?;
    let t = rep.result;
    rep.residual = (t - cond.damage - (cond.map(t) - cond.damage)).abs();
    Ok(rep)
}

/// Pareto-efficient linear commodity rate.
pub fn solve_linear(profile: &StatsProfile, damage: f64) -> Result<SolveReport<f64>> {
    let m = linear_moments(profile)?;
    solve_scalar(ScalarCondition { damage, p: m.p, q: m.q }, f64::NAN)
}

/// Linear rate with the conditional-variance attenuation term.
pub fn solve_multidim(profile: &StatsProfile, damage: f64) -> Result<SolveReport<f64>> {
    if profile.var_x_inc.is_none() {
        return Err(Error::InvalidInput("var_x_inc column required for the multidimensional solve".into()));
    }
    let m = linear_moments(profile)?;
    solve_scalar(ScalarCondition { damage, p: m.p, q: m.q - m.s }, f64::NAN)
}
