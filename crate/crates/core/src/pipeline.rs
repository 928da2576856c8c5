//! Estimation pipeline: binned cross-section and survey MPCs in, a
//! [`StatsProfile`] out.
//!
//! Steps, in order:
//!
//! 1. [`savings_adjust`]: dirty-good level per percentile as share × after-tax income.
//! 2. [`recover_mtr`]: smoothing spline of log after-tax on log pre-tax income, differentiated.
//! 3. [`fit_mpc_curve`]: global polynomial of the dirty MPC share on income.
//! 4. [`rescale_mpc`]: `x′_inc = (1 − T′_z)·dx/dI`.
//! 5. [`smooth_profiles`]: log-log smoothing splines on a shared log grid.
//! 6. [`variance_by_decile`]: within-decile variance of respondent `x′_inc`.
//! 7. [`assemble_profile`]: constant elasticities, density from percentile ranks.
//!
//! Smoothing splines are natural cubic splines minimizing
//! `Σ (y_i − g(t_i))² + λ ∫ g″²`, with `λ` chosen by generalized
//! cross-validation unless fixed. Abscissae are rescaled to `[0, 1]` before
//! `λ` is applied, so a fixed `λ` is comparable across data sets.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::numeric::{log_grid, trapezoid_weights, Hermite};
use crate::schedules::IncomeGrid;
use crate::statistics::StatsProfile;

/// Lower end of the default income grid, USD.
pub const GRID_FLOOR: f64 = 600.0;
/// Upper end of the default income grid, USD.
pub const GRID_CEILING: f64 = 325_000.0;
/// Largest support passed to a smoothing spline; denser data is averaged
/// in consecutive blocks first.
pub const MAX_SPLINE_SUPPORT: usize = 200;
/// Marginal rates outside this band are clamped and reported.
pub const MTR_BAND: (f64, f64) = (-0.2, 0.99);

/// One percentile row of the binned cross-section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSectionRow {
    pub percentile: u32,
    pub mean_income: f64,
    #[serde(default)]
    pub mean_after_tax_income: Option<f64>,
    #[serde(default)]
    pub dirty_share: Option<f64>,
    #[serde(default)]
    pub mean_x_level: Option<f64>,
}

/// Percentile means of income, after-tax income and the dirty-good share of
/// expenditure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedCrossSection {
    pub rows: Vec<CrossSectionRow>,
}

impl BinnedCrossSection {
    pub fn new(mut rows: Vec<CrossSectionRow>) -> Result<Self> {
        rows.sort_by_key(|r| r.percentile);
        let cs = BinnedCrossSection { rows };
        cs.validate()?;
        Ok(cs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::InvalidInput("cross-section has no rows".into()));
        }
        for w in self.rows.windows(2) {
            if w[1].percentile == w[0].percentile {
                return Err(Error::InvalidInput(format!("duplicate percentile {}", w[0].percentile)));
            }
            if !(w[1].mean_income > w[0].mean_income) {
                return Err(Error::InvalidInput(format!(
                    "mean income must rise with percentile (at {})",
                    w[1].percentile
                )));
            }
        }
        for r in &self.rows {
            if !(1..=100).contains(&r.percentile) {
                return Err(Error::InvalidInput(format!("percentile {} outside 1..=100", r.percentile)));
            }
            if !(r.mean_income.is_finite() && r.mean_income > 0.0) {
                return Err(Error::InvalidInput(format!("mean income at percentile {} must be positive", r.percentile)));
            }
            if let Some(s) = r.dirty_share {
                if !(0.0..1.0).contains(&s) {
                    return Err(Error::InvalidInput(format!("dirty share {s} outside [0, 1)")));
                }
            }
            for v in [r.mean_after_tax_income, r.mean_x_level].into_iter().flatten() {
                if !v.is_finite() {
                    return Err(Error::InvalidInput("non-finite cross-section entry".into()));
                }
            }
        }
        Ok(())
    }

    pub fn incomes(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.mean_income).collect()
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        require_columns(rdr.headers()?, &["percentile", "mean_income"])?;
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<CrossSectionRow>, _>>()?;
        Self::new(rows)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["percentile", "mean_income", "mean_after_tax_income", "dirty_share", "mean_x_level"])?;
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.percentile.to_string(),
                fmt_f64(r.mean_income),
                opt(r.mean_after_tax_income),
                opt(r.dirty_share),
                opt(r.mean_x_level),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One survey respondent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyRow {
    pub id: String,
    pub taxable_income: f64,
    pub mpc_dirty_share: f64,
    pub total_mpc: f64,
}

/// Stated allocation of a marginal income increase, per respondent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyMpcTable {
    pub rows: Vec<SurveyRow>,
}

impl SurveyMpcTable {
    pub fn new(rows: Vec<SurveyRow>) -> Result<Self> {
        let t = SurveyMpcTable { rows };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for r in &self.rows {
            if !(r.taxable_income.is_finite() && r.taxable_income > 0.0) {
                return Err(Error::InvalidInput(format!("respondent {} has nonpositive income", r.id)));
            }
            if !(0.0..=1.0).contains(&r.mpc_dirty_share) {
                return Err(Error::InvalidInput(format!("respondent {} has MPC share outside [0, 1]", r.id)));
            }
            if !r.total_mpc.is_finite() {
                return Err(Error::InvalidInput(format!("respondent {} has non-finite total MPC", r.id)));
            }
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        require_columns(rdr.headers()?, &["id", "taxable_income", "mpc_dirty_share", "total_mpc"])?;
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<SurveyRow>, _>>()?;
        Self::new(rows)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["id", "taxable_income", "mpc_dirty_share", "total_mpc"])?;
        for r in &self.rows {
            w.write_record([
                r.id.clone(),
                fmt_f64(r.taxable_income),
                fmt_f64(r.mpc_dirty_share),
                fmt_f64(r.total_mpc),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn require_columns(headers: &csv::StringRecord, names: &[&str]) -> Result<()> {
    for n in names {
        if !headers.iter().any(|h| h == *n) {
            return Err(Error::MissingColumn((*n).into()));
        }
    }
    Ok(())
}

/// How the smoothing penalty is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SplinePenalty {
    Gcv,
    Fixed(f64),
}

/// Grid and smoothing settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub grid_size: usize,
    pub log_spaced: bool,
    pub spline_penalty: SplinePenalty,
    pub poly_degree_mpc: usize,
    pub grid_floor: f64,
    pub grid_ceiling: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            grid_size: 1000,
            log_spaced: true,
            spline_penalty: SplinePenalty::Gcv,
            poly_degree_mpc: 2,
            grid_floor: GRID_FLOOR,
            grid_ceiling: GRID_CEILING,
        }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 100 {
            return Err(Error::InvalidInput(format!("grid size {} below 100", self.grid_size)));
        }
        if !self.log_spaced {
            return Err(Error::InvalidInput("the income grid is always log spaced".into()));
        }
        if !(1..=3).contains(&self.poly_degree_mpc) {
            return Err(Error::InvalidInput(format!("MPC polynomial degree {} not in 1..=3", self.poly_degree_mpc)));
        }
        if let SplinePenalty::Fixed(l) = self.spline_penalty {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::InvalidInput(format!("spline penalty {l} must be nonnegative")));
            }
        }
        Ok(())
    }

    /// Log grid over `[max(floor, lo), min(ceiling, hi)]`.
    pub fn grid_for(&self, lo: f64, hi: f64) -> Result<Vec<f64>> {
        self.validate()?;
        let (a, b) = (self.grid_floor.max(lo), self.grid_ceiling.min(hi));
        if !(b > a && a > 0.0) {
            return Err(Error::InvalidInput(format!("empty income grid [{a}, {b}]")));
        }
        Ok(log_grid(a, b, self.grid_size))
    }
}

/// `x̂` at each percentile's mean income.
pub fn savings_adjust(cs: &BinnedCrossSection) -> Result<Vec<(f64, f64)>> {
    cs.rows
        .iter()
        .map(|r| {
            let share = r.dirty_share.ok_or_else(|| Error::MissingColumn("dirty_share".into()))?;
            let after = r.mean_after_tax_income.ok_or_else(|| Error::MissingColumn("mean_after_tax_income".into()))?;
            Ok((r.mean_income, share * after))
        })
        .collect()
}

/// Natural cubic smoothing spline.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingSpline {
    t: Vec<f64>,
    g: Vec<f64>,
    gamma: Vec<f64>,
    /// Penalty in units of the abscissa rescaled to `[0, 1]`.
    pub lambda: f64,
    /// Trace of the smoother matrix.
    pub effective_df: f64,
}

/// Pieces of the Reinsch formulation reused across penalties.
struct SplineSystem {
    t: Vec<f64>,
    y: DVector<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    eig: SymmetricEigen<f64, nalgebra::Dyn>,
    uty: DVector<f64>,
    span: f64,
}

impl SplineSystem {
    fn new(t: &[f64], y: &[f64]) -> Result<Self> {
        let n = t.len();
        if n < 3 {
            return Err(Error::InsufficientSupport { n, needed: 3 });
        }
        if t.windows(2).any(|p| !(p[1] > p[0])) {
            return Err(Error::InvalidInput("spline abscissae must be strictly increasing".into()));
        }
        let span = t[n - 1] - t[0];
        let s: Vec<f64> = t.iter().map(|v| (v - t[0]) / span).collect();
        let h: Vec<f64> = s.windows(2).map(|p| p[1] - p[0]).collect();
        let m = n - 2;
        let mut q = DMatrix::zeros(n, m);
        let mut r = DMatrix::zeros(m, m);
        for k in 0..m {
            let i = k + 1;
            q[(i - 1, k)] = 1.0 / h[i - 1];
            q[(i, k)] = -1.0 / h[i - 1] - 1.0 / h[i];
            q[(i + 1, k)] = 1.0 / h[i];
            r[(k, k)] = (h[i - 1] + h[i]) / 3.0;
            if k + 1 < m {
                r[(k, k + 1)] = h[i] / 6.0;
                r[(k + 1, k)] = h[i] / 6.0;
            }
        }
        let chol = r
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidInput("spline band matrix not positive definite".into()))?;
        let rinv_qt = chol.solve(&q.transpose());
        let k = &q * rinv_qt;
        let k = (&k + k.transpose()) * 0.5;
        let eig = SymmetricEigen::new(k);
        let yv = DVector::from_column_slice(y);
        let uty = eig.eigenvectors.transpose() * &yv;
        Ok(SplineSystem { t: t.to_vec(), y: yv, q, r, eig, uty, span })
    }

    fn shrink(&self, lambda: f64) -> Vec<f64> {
        self.eig.eigenvalues.iter().map(|k| 1.0 / (1.0 + lambda * k.max(0.0))).collect()
    }

    fn gcv(&self, lambda: f64) -> f64 {
        let n = self.t.len() as f64;
        let s = self.shrink(lambda);
        let rss: f64 = s.iter().zip(self.uty.iter()).map(|(sj, c)| ((1.0 - sj) * c).powi(2)).sum();
        let tr: f64 = s.iter().sum();
        n * rss / (n - tr).powi(2)
    }

    fn fit(&self, lambda: f64) -> Result<SmoothingSpline> {
        let s = self.shrink(lambda);
        let scaled = DVector::from_iterator(s.len(), s.iter().zip(self.uty.iter()).map(|(a, b)| a * b));
        let g = &self.eig.eigenvectors * scaled;
        let chol = self.r.clone().cholesky().expect("checked at construction");
        // Second derivatives in rescaled units, converted to the original abscissa.
        let gamma_s = chol.solve(&(self.q.transpose() * &g));
        let mut gamma = vec![0.0; self.t.len()];
        for (k, v) in gamma_s.iter().enumerate() {
            gamma[k + 1] = v / (self.span * self.span);
        }
        let _ = &self.y;
        Ok(SmoothingSpline {
            t: self.t.clone(),
            g: g.iter().copied().collect(),
            gamma,
            lambda,
            effective_df: s.iter().sum(),
        })
    }
}

impl SmoothingSpline {
    /// Fit with the given penalty rule.
    pub fn fit(t: &[f64], y: &[f64], penalty: SplinePenalty) -> Result<Self> {
        if t.len() != y.len() {
            return Err(Error::GridMismatch(format!("{} abscissae vs {} values", t.len(), y.len())));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite spline data".into()));
        }
        let (t, y) = thin(t, y, MAX_SPLINE_SUPPORT);
        let sys = SplineSystem::new(&t, &y)?;
        let lambda = match penalty {
            SplinePenalty::Fixed(l) => l,
            SplinePenalty::Gcv => gcv_lambda(&sys),
        };
        sys.fit(lambda)
    }

    /// Fitted values at the (possibly thinned) knots.
    pub fn fitted(&self) -> &[f64] {
        &self.g
    }

    pub fn knots(&self) -> &[f64] {
        &self.t
    }

    /// Value and first derivative; linear beyond the end knots.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let n = self.t.len();
        if x <= self.t[0] {
            let (_, d) = self.segment(0, self.t[0]);
            return (self.g[0] + d * (x - self.t[0]), d);
        }
        if x >= self.t[n - 1] {
            let (_, d) = self.segment(n - 2, self.t[n - 1]);
            return (self.g[n - 1] + d * (x - self.t[n - 1]), d);
        }
        let i = (self.t.partition_point(|&k| k <= x) - 1).min(n - 2);
        self.segment(i, x)
    }

    fn segment(&self, i: usize, x: f64) -> (f64, f64) {
        let h = self.t[i + 1] - self.t[i];
        let a = (self.t[i + 1] - x) / h;
        let b = (x - self.t[i]) / h;
        let (g0, g1, c0, c1) = (self.g[i], self.g[i + 1], self.gamma[i], self.gamma[i + 1]);
        let value = a * g0 + b * g1 + ((a * a * a - a) * c0 + (b * b * b - b) * c1) * h * h / 6.0;
        let slope = (g1 - g0) / h - (3.0 * a * a - 1.0) / 6.0 * h * c0 + (3.0 * b * b - 1.0) / 6.0 * h * c1;
        (value, slope)
    }
}

/// GCV minimizer over a log grid of penalties, refined by golden section.
fn gcv_lambda(sys: &SplineSystem) -> f64 {
    let grid: Vec<f64> = (0..=72).map(|k| -12.0 + 0.25 * k as f64).collect();
    let scores: Vec<f64> = grid.iter().map(|e| sys.gcv(10f64.powf(*e))).collect();
    let mut best = 0;
    for (k, s) in scores.iter().enumerate() {
        if *s < scores[best] * (1.0 - 1e-12) {
            best = k;
        }
    }
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(grid.len() - 1)]);
    let f = |e: f64| sys.gcv(10f64.powf(e));
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let e = 0.5 * (a + b);
    if f(e) <= scores[best] {
        10f64.powf(e)
    } else {
        10f64.powf(grid[best])
    }
}

/// Average consecutive blocks so that at most `max` points remain.
fn thin(t: &[f64], y: &[f64], max: usize) -> (Vec<f64>, Vec<f64>) {
    let n = t.len();
    if n <= max {
        return (t.to_vec(), y.to_vec());
    }
    let mut ot = Vec::with_capacity(max);
    let mut oy = Vec::with_capacity(max);
    for k in 0..max {
        let (lo, hi) = (k * n / max, (k + 1) * n / max);
        let m = (hi - lo) as f64;
        ot.push(t[lo..hi].iter().sum::<f64>() / m);
        oy.push(y[lo..hi].iter().sum::<f64>() / m);
    }
    (ot, oy)
}

/// Marginal tax rates on the grid with the clamping report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MtrRecovery {
    pub grid: Vec<f64>,
    pub mtr: Vec<f64>,
    /// `(z, unclamped rate)` wherever the rate left the admissible band.
    pub warnings: Vec<(f64, f64)>,
    pub lambda: f64,
}

impl MtrRecovery {
    /// Rate at `z` by linear interpolation in `log z`, flat beyond the grid.
    pub fn at(&self, z: f64) -> f64 {
        interp_log(&self.grid, &self.mtr, z)
    }
}

/// Recover `T′_z = 1 − dA/dz` from a log-log smoothing spline of after-tax
/// income `A` on pre-tax income.
pub fn recover_mtr(cs: &BinnedCrossSection, cfg: &SmoothingConfig) -> Result<MtrRecovery> {
    let z = cs.incomes();
    let a: Vec<f64> = cs
        .rows
        .iter()
        .map(|r| r.mean_after_tax_income.ok_or_else(|| Error::MissingColumn("mean_after_tax_income".into())))
        .collect::<Result<_>>()?;
    for i in 1..a.len() {
        if !(a[i] > a[i - 1]) {
            return Err(Error::NonMonotoneAfterTax { from: z[i - 1], to: z[i] });
        }
    }
    if a[0] <= 0.0 {
        return Err(Error::InvalidInput("after-tax income must be positive".into()));
    }
    let grid = cfg.grid_for(z[0], z[z.len() - 1])?;
    let lz: Vec<f64> = z.iter().map(|v| v.ln()).collect();
    let la: Vec<f64> = a.iter().map(|v| v.ln()).collect();
    let spline = SmoothingSpline::fit(&lz, &la, cfg.spline_penalty)?;
    let mut warnings = Vec::new();
    let mtr = grid
        .iter()
        .map(|&zz| {
            let (v, d) = spline.eval(zz.ln());
            let raw = 1.0 - v.exp() / zz * d;
            if raw < MTR_BAND.0 || raw > MTR_BAND.1 {
                warnings.push((zz, raw));
            }
            raw.clamp(MTR_BAND.0, MTR_BAND.1)
        })
        .collect();
    Ok(MtrRecovery { grid, mtr, warnings, lambda: spline.lambda })
}

/// Least-squares polynomial in income.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialFit {
    /// Coefficients on `z^j`, raw income units.
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Fitted values at the input incomes.
    pub fitted: Vec<f64>,
    pub residual_variance: f64,
}

impl PolynomialFit {
    pub fn eval(&self, z: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * z + c)
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }
}

/// Ordinary least squares of `y` on `1, z, …, z^degree`, with the design
/// column-scaled by `max |z|` for conditioning.
pub fn fit_polynomial(z: &[f64], y: &[f64], degree: usize) -> Result<PolynomialFit> {
    let n = z.len();
    let cols = degree + 1;
    if y.len() != n {
        return Err(Error::GridMismatch(format!("{n} incomes vs {} responses", y.len())));
    }
    if n < 3 * cols {
        return Err(Error::InsufficientSupport { n, needed: 3 * cols });
    }
    let s = z.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let x = DMatrix::from_fn(n, cols, |i, j| (z[i] / s).powi(j as i32));
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * n.max(cols) as f64 * f64::EPSILON * 1e3;
    let rank = svd.singular_values.iter().filter(|v| **v > tol).count();
    if rank < cols {
        return Err(Error::RankDeficient { rank, cols });
    }
    let yv = DVector::from_column_slice(y);
    let beta = svd.solve(&yv, tol).map_err(|e| Error::InvalidInput(e.into()))?;
    let resid = &yv - &x * &beta;
    let dof = (n - cols) as f64;
    let sigma2 = resid.norm_squared() / dof;
    let vt = svd.v_t.as_ref().expect("requested");
    let mut se = vec![0.0; cols];
    for (j, e) in se.iter_mut().enumerate() {
        let mut acc = 0.0;
        for k in 0..cols {
            acc += (vt[(k, j)] / svd.singular_values[k]).powi(2);
        }
        *e = (sigma2 * acc).sqrt() / s.powi(j as i32);
    }
    let coefficients = (0..cols).map(|j| beta[j] / s.powi(j as i32)).collect();
    let fitted = (&x * &beta).iter().copied().collect();
    Ok(PolynomialFit { coefficients, std_errors: se, fitted, residual_variance: sigma2 })
}

/// Polynomial of the dirty MPC share on taxable income, of the configured degree.
pub fn fit_mpc_curve(table: &SurveyMpcTable, cfg: &SmoothingConfig) -> Result<PolynomialFit> {
    cfg.validate()?;
    let z: Vec<f64> = table.rows.iter().map(|r| r.taxable_income).collect();
    let y: Vec<f64> = table.rows.iter().map(|r| r.mpc_dirty_share).collect();
    fit_polynomial(&z, &y, cfg.poly_degree_mpc)
}

/// `x′_inc = (1 − T′_z)·dx/dI` pointwise.
pub fn rescale_mpc(dx_di: &[f64], mtr: &[f64]) -> Result<Vec<f64>> {
    if dx_di.len() != mtr.len() {
        return Err(Error::GridMismatch(format!("{} MPC points vs {} rates", dx_di.len(), mtr.len())));
    }
    Ok(dx_di.iter().zip(mtr).map(|(d, m)| (1.0 - m) * d).collect())
}

/// Smoothed dirty-good profiles on the shared grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothedProfiles {
    pub grid: Vec<f64>,
    pub xhat: Vec<f64>,
    pub xhat_slope: Vec<f64>,
    pub x_inc: Vec<f64>,
}

fn smooth_log_log(points: &[(f64, f64)], grid: &[f64], penalty: SplinePenalty) -> Result<(Vec<f64>, Vec<f64>)> {
    let t: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let s = SmoothingSpline::fit(&t, &y, penalty)?;
    let mut level = Vec::with_capacity(grid.len());
    let mut slope = Vec::with_capacity(grid.len());
    for &z in grid {
        let (v, d) = s.eval(z.ln());
        let x = v.exp();
        level.push(x);
        slope.push(x / z * d);
    }
    Ok((level, slope))
}

fn smooth_linear(points: &[(f64, f64)], grid: &[f64], penalty: SplinePenalty) -> Result<Vec<f64>> {
    let t: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let s = SmoothingSpline::fit(&t, &y, penalty)?;
    Ok(grid.iter().map(|z| s.eval(z.ln()).0).collect())
}

/// Log-log smoothing of `x̂` (with its analytic derivative) and of `x′_inc`
/// onto `grid`. Nonpositive `x′_inc` data are smoothed in levels instead.
pub fn smooth_profiles(
    xhat_points: &[(f64, f64)],
    x_inc_points: &[(f64, f64)],
    grid: &[f64],
    cfg: &SmoothingConfig,
) -> Result<SmoothedProfiles> {
    for pts in [xhat_points, x_inc_points] {
        if pts.len() < 10 {
            return Err(Error::InsufficientSupport { n: pts.len(), needed: 10 });
        }
        if pts.iter().any(|p| !(p.0 > 0.0)) {
            return Err(Error::InvalidInput("support incomes must be positive".into()));
        }
    }
    if xhat_points.iter().any(|p| !(p.1 > 0.0)) {
        return Err(Error::InvalidInput("x̂ must be positive to smooth in logs".into()));
    }
    let (xhat, xhat_slope) = smooth_log_log(xhat_points, grid, cfg.spline_penalty)?;
    let x_inc = if x_inc_points.iter().all(|p| p.1 > 0.0) {
        smooth_log_log(x_inc_points, grid, cfg.spline_penalty)?.0
    } else {
        smooth_linear(x_inc_points, grid, cfg.spline_penalty)?
    };
    Ok(SmoothedProfiles { grid: grid.to_vec(), xhat, xhat_slope, x_inc })
}

/// One income decile of the survey.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecileStep {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub variance: f64,
}

/// Within-decile variances and their smoothed profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecileVariance {
    pub steps: Vec<DecileStep>,
    pub grid: Vec<f64>,
    /// Smoothed and floored at zero.
    pub profile: Vec<f64>,
}

/// Minimum respondents per decile.
pub const MIN_DECILE_COUNT: usize = 10;

/// Equal-count income deciles (left-closed, last right-closed) and the
/// population variance of `(1 − T′_z)·mpc_dirty_share` within each.
pub fn variance_by_decile(table: &SurveyMpcTable, mtr: &MtrRecovery, cfg: &SmoothingConfig) -> Result<DecileVariance> {
    let mut obs: Vec<(f64, f64)> = table
        .rows
        .iter()
        .map(|r| (r.taxable_income, (1.0 - mtr.at(r.taxable_income)) * r.mpc_dirty_share))
        .collect();
    obs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = obs.len();
    if n < 10 * MIN_DECILE_COUNT {
        return Err(Error::SparseDecile { decile: 0, count: n / 10 });
    }
    let bounds: Vec<f64> = (0..=10).map(|k| if k == 10 { obs[n - 1].0 } else { obs[k * n / 10].0 }).collect();
    let mut steps = Vec::with_capacity(10);
    for k in 0..10 {
        let (lo, hi) = (bounds[k], bounds[k + 1]);
        let members: Vec<f64> = obs
            .iter()
            .filter(|(z, _)| *z >= lo && (*z < hi || (k == 9 && *z <= hi)))
            .map(|o| o.1)
            .collect();
        if members.len() < MIN_DECILE_COUNT {
            return Err(Error::SparseDecile { decile: k + 1, count: members.len() });
        }
        let m = members.iter().sum::<f64>() / members.len() as f64;
        let v = members.iter().map(|x| (x - m).powi(2)).sum::<f64>() / members.len() as f64;
        steps.push(DecileStep { lo, hi, count: members.len(), variance: v });
    }
    let grid = mtr.grid.clone();
    let step_at = |z: f64| {
        let k = steps.iter().position(|s| z < s.hi).unwrap_or(9);
        steps[k].variance
    };
    let points: Vec<(f64, f64)> = grid.iter().map(|&z| (z, step_at(z))).collect();
    let profile = if steps.iter().all(|s| s.variance == steps[0].variance) {
        vec![steps[0].variance; grid.len()]
    } else {
        smooth_linear(&points, &grid, cfg.spline_penalty)?.into_iter().map(|v| v.max(0.0)).collect()
    };
    Ok(DecileVariance { steps, grid, profile })
}

/// Density on `grid` from percentile ranks: `H(z_p) = (p − ½)/100`
/// interpolated monotonically in `log z`, differentiated and normalized to
/// unit trapezoid mass on the grid.
pub fn density_from_percentiles(cs: &BinnedCrossSection, grid: &[f64]) -> Result<Vec<f64>> {
    let lz: Vec<f64> = cs.rows.iter().map(|r| r.mean_income.ln()).collect();
    let h: Vec<f64> = cs.rows.iter().map(|r| (r.percentile as f64 - 0.5) / 100.0).collect();
    if lz.len() < 2 {
        return Err(Error::InsufficientSupport { n: lz.len(), needed: 2 });
    }
    let cdf = Hermite::pchip(lz, h)?;
    let raw: Vec<f64> = grid.iter().map(|z| cdf.eval_extended(z.ln()).slope.max(0.0) / z).collect();
    let w = trapezoid_weights(grid);
    let mass: f64 = raw.iter().zip(&w).map(|(a, b)| a * b).sum();
    if !(mass > 0.0) {
        return Err(Error::InvalidInput("percentile density has no mass on the grid".into()));
    }
    Ok(raw.into_iter().map(|v| v / mass).collect())
}

/// Everything [`assemble_profile`] needs, on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineInputs {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub smoothed: SmoothedProfiles,
    pub mtr: Vec<f64>,
    pub var_x_inc: Option<Vec<f64>>,
}

/// Profile with constant elasticities; decomposition columns are derived.
pub fn assemble_profile(inputs: PipelineInputs, eps_z: f64, eps_x: f64) -> Result<StatsProfile> {
    let n = inputs.grid.len();
    let lens = [
        inputs.density.len(),
        inputs.smoothed.grid.len(),
        inputs.smoothed.xhat.len(),
        inputs.smoothed.xhat_slope.len(),
        inputs.smoothed.x_inc.len(),
        inputs.mtr.len(),
        inputs.var_x_inc.as_ref().map_or(n, |v| v.len()),
    ];
    if lens.iter().any(|l| *l != n) || inputs.smoothed.grid != inputs.grid {
        return Err(Error::GridMismatch("pipeline components are not on one grid".into()));
    }
    if !(eps_z >= 0.0 && eps_x > 0.0) {
        return Err(Error::InvalidInput(format!("elasticities ({eps_z}, {eps_x}) out of range")));
    }
    let grid = IncomeGrid::new(inputs.grid, inputs.density)?;
    StatsProfile::new(
        grid,
        inputs.smoothed.xhat,
        inputs.smoothed.xhat_slope,
        inputs.smoothed.x_inc,
        vec![eps_z; n],
        vec![eps_x; n],
        inputs.mtr,
        inputs.var_x_inc,
        None,
    )
}

/// Intermediate and final products of a pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub profile: StatsProfile,
    pub mtr: MtrRecovery,
    pub mpc: PolynomialFit,
    pub deciles: DecileVariance,
}

/// Full pipeline from the two input tables.
pub fn run_pipeline(
    cs: &BinnedCrossSection,
    survey: &SurveyMpcTable,
    cfg: &SmoothingConfig,
    eps_z: f64,
    eps_x: f64,
) -> Result<PipelineOutput> {
    let xhat_points = savings_adjust(cs)?;
    let mtr = recover_mtr(cs, cfg)?;
    let mpc = fit_mpc_curve(survey, cfg)?;
    let z = cs.incomes();
    let rates: Vec<f64> = z.iter().map(|&v| mtr.at(v)).collect();
    let dx_di: Vec<f64> = z.iter().map(|&v| mpc.eval(v)).collect();
    let x_inc = rescale_mpc(&dx_di, &rates)?;
    let x_inc_points: Vec<(f64, f64)> = z.iter().copied().zip(x_inc).collect();
    let smoothed = smooth_profiles(&xhat_points, &x_inc_points, &mtr.grid, cfg)?;
    let deciles = variance_by_decile(survey, &mtr, cfg)?;
    let density = density_from_percentiles(cs, &mtr.grid)?;
    let profile = assemble_profile(
        PipelineInputs {
            grid: mtr.grid.clone(),
            density,
            smoothed,
            mtr: mtr.mtr.clone(),
            var_x_inc: Some(deciles.profile.clone()),
        },
        eps_z,
        eps_x,
    )?;
    Ok(PipelineOutput { profile, mtr, mpc, deciles })
}

/// Linear interpolation in `log z`, flat beyond the ends.
fn interp_log(grid: &[f64], values: &[f64], z: f64) -> f64 {
    let n = grid.len();
    if z <= grid[0] {
        return values[0];
    }
    if z >= grid[n - 1] {
        return values[n - 1];
    }
    let i = grid.partition_point(|&g| g <= z) - 1;
    let t = (z.ln() - grid[i].ln()) / (grid[i + 1].ln() - grid[i].ln());
    values[i] + t * (values[i + 1] - values[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(p: u32, z: f64, a: f64, s: f64) -> CrossSectionRow {
        CrossSectionRow {
            percentile: p,
            mean_income: z,
            mean_after_tax_income: Some(a),
            dirty_share: Some(s),
            mean_x_level: None,
        }
    }

    #[test]
    fn savings_rule() {
        let cs = BinnedCrossSection::new(vec![row(1, 90_000.0, 80_000.0, 0.05), row(2, 95_000.0, 84_000.0, 0.05)])
            .unwrap();
        assert_eq!(savings_adjust(&cs).unwrap()[0], (90_000.0, 4000.0));
        let mut missing = cs.clone();
        missing.rows[1].dirty_share = None;
        assert!(matches!(savings_adjust(&missing), Err(Error::MissingColumn(_))));
    }

    #[test]
    fn rescale_arithmetic() {
        let r = rescale_mpc(&[0.05, 0.05], &[0.3, 0.0]).unwrap();
        assert!((r[0] - 0.035).abs() < 1e-15);
        assert_eq!(r[1], 0.05);
        assert!(matches!(rescale_mpc(&[0.05], &[0.3, 0.2]), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn spline_reproduces_lines() {
        let t: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin() + i as f64).collect();
        let y: Vec<f64> = t.iter().map(|v| 2.0 - 0.7 * v).collect();
        let s = SmoothingSpline::fit(&t, &y, SplinePenalty::Gcv).unwrap();
        for x in [0.5, 7.3, 20.0] {
            let (v, d) = s.eval(x);
            assert!((v - (2.0 - 0.7 * x)).abs() < 1e-9);
            assert!((d + 0.7).abs() < 1e-9);
        }
    }

    #[test]
    fn polynomial_rank_and_support() {
        let z = vec![5.0; 12];
        let y = vec![0.1; 12];
        assert!(matches!(fit_polynomial(&z, &y, 1), Err(Error::RankDeficient { .. })));
        assert!(matches!(fit_polynomial(&z[..5], &y[..5], 1), Err(Error::InsufficientSupport { .. })));
        let c = fit_polynomial(&z, &y, 0).unwrap();
        assert!((c.coefficients[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn config_bounds() {
        assert!(SmoothingConfig::default().validate().is_ok());
        assert!(SmoothingConfig { grid_size: 50, ..Default::default() }.validate().is_err());
        assert!(SmoothingConfig { poly_degree_mpc: 4, ..Default::default() }.validate().is_err());
    }
}
