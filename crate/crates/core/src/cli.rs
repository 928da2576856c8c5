//! Command-line front end behind the `pigou` binary.
//!
//! Every subcommand writes its artifacts to `--out` and prints a single
//! summary line on standard output. Exit codes: 0 on success, 1 when
//! `verify` finds a failing check, 2 on any input, I/O or solver error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::agent::SyntheticEconomy;
use crate::calibration::{
    bundled_cross_section, bundled_survey, multidim_economy, scenario, separable_economy, taste_shifted_economy,
    BUNDLED_SEED, DEFAULT_DAMAGE, SCENARIOS,
};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, read_json, write_columns, write_json, write_records};
use crate::oracle::verify_economy;
use crate::pipeline::{run_pipeline, BinnedCrossSection, SmoothingConfig, SurveyMpcTable};
use crate::solver::{solve_linear, solve_multidim, solve_nonlinear, solve_optimal_levels, SolveReport};
use crate::statistics::{economy_stats, gbar_plus_from_weights, power_welfare_weights, FiniteDiff, StatsProfile};

/// Solver selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Nonlinear,
    Linear,
    Multidim,
    Levels,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Nonlinear => "nonlinear",
            Method::Linear => "linear",
            Method::Multidim => "multidim",
            Method::Levels => "levels",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pigou", version, about = "Corrective commodity taxes under costly redistribution")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write the bundled synthetic inputs, reference economies and benchmark profile.
    Calibrate,
    /// Build a sufficient-statistics profile from CSV inputs or an economy.
    Stats,
    /// Solve for the efficient commodity tax on a profile.
    Solve,
    /// Run the micro-simulation oracle on an economy at its own taxes.
    Verify,
    /// Write tidy CSVs behind the decomposition, elasticity and schedule plots.
    EmitPlot,
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct Flags {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Profile JSON.
    #[arg(long, global = true)]
    pub profile: Option<PathBuf>,
    /// Economy JSON.
    #[arg(long, global = true)]
    pub economy: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub method: Option<Method>,
    /// Scenario name, or custom:EPS_Z,EPS_X.
    #[arg(long, global = true)]
    pub scenario: Option<String>,
    /// Marginal damage per dollar; overrides the calibration.
    #[arg(long, global = true)]
    pub damage: Option<f64>,
    /// Seed for synthetic survey draws.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Binned cross-section CSV (stats).
    #[arg(long, global = true)]
    pub cross_section: Option<PathBuf>,
    /// Survey MPC CSV (stats).
    #[arg(long, global = true)]
    pub survey: Option<PathBuf>,
}

/// Settings from `--config`, all optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Option<PathBuf>,
    pub economy: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub method: Option<Method>,
    pub scenario: Option<String>,
    pub damage: Option<f64>,
    pub seed: Option<u64>,
    pub cross_section: Option<PathBuf>,
    pub survey: Option<PathBuf>,
    pub smoothing: Option<SmoothingConfig>,
    /// Exponent `ν` of the welfare weights `g ∝ z^{−ν}` used when a profile
    /// carries no `ḡ₊` column and the levels solver needs one.
    pub welfare_power: Option<f64>,
}

/// Flags merged over the configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub profile: Option<PathBuf>,
    pub economy: Option<PathBuf>,
    pub out: PathBuf,
    pub method: Method,
    pub scenario: Option<(String, f64, f64)>,
    pub damage: f64,
    pub seed: u64,
    pub cross_section: Option<PathBuf>,
    pub survey: Option<PathBuf>,
    pub smoothing: SmoothingConfig,
    pub welfare_power: f64,
}

impl Resolved {
    pub fn new(flags: &Flags) -> Result<Self> {
        let cfg: RunConfig = match &flags.config {
            Some(p) => read_json(p)?,
            None => RunConfig::default(),
        };
        let scenario = match flags.scenario.clone().or(cfg.scenario) {
            Some(name) => {
                let (ez, ex) = scenario(&name)?;
                Some((name, ez, ex))
            }
            None => None,
        };
        let damage = flags.damage.or(cfg.damage).unwrap_or(DEFAULT_DAMAGE);
        if !(damage.is_finite() && damage >= 0.0) {
            return Err(Error::InvalidInput(format!("damage {damage} must be nonnegative")));
        }
        let smoothing = cfg.smoothing.unwrap_or_default();
        smoothing.validate()?;
        let r = Resolved {
            profile: flags.profile.clone().or(cfg.profile),
            economy: flags.economy.clone().or(cfg.economy),
            out: flags.out.clone().or(cfg.out).unwrap_or_else(|| PathBuf::from(".")),
            method: flags.method.or(cfg.method).unwrap_or(Method::Nonlinear),
            scenario,
            damage,
            seed: flags.seed.or(cfg.seed).unwrap_or(BUNDLED_SEED),
            cross_section: flags.cross_section.clone().or(cfg.cross_section),
            survey: flags.survey.clone().or(cfg.survey),
            smoothing,
            welfare_power: cfg.welfare_power.unwrap_or(1.0),
        };
        for p in [&r.profile, &r.economy, &r.cross_section, &r.survey].into_iter().flatten() {
            if !p.is_file() {
                return Err(Error::InvalidInput(format!("input file {} does not exist", p.display())));
            }
        }
        Ok(r)
    }

    fn elasticities(&self) -> (f64, f64) {
        self.scenario.as_ref().map_or_else(|| scenario("benchmark").expect("bundled scenario"), |s| (s.1, s.2))
    }

    fn out_file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn ensure_out(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out)?;
        Ok(())
    }
}

/// Outcome of a subcommand: the summary line and the exit code.
struct Outcome {
    summary: String,
    code: i32,
}

impl Outcome {
    fn ok(summary: String) -> Self {
        Outcome { summary, code: 0 }
    }
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return code;
        }
    };
    let result = Resolved::new(&cli.flags).and_then(|cfg| match cli.command {
        Command::Calibrate => cmd_calibrate(&cfg),
        Command::Stats => cmd_stats(&cfg),
        Command::Solve => cmd_solve(&cfg),
        Command::Verify => cmd_verify(&cfg),
        Command::EmitPlot => cmd_emit_plot(&cfg),
    });
    match result {
        Ok(o) => {
            let _ = writeln!(stdout, "{}", o.summary);
            o.code
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                let _ = writeln!(stderr, "  caused by: {s}");
                src = s.source();
            }
            2
        }
    }
}

fn cmd_calibrate(cfg: &Resolved) -> Result<Outcome> {
    let cs = bundled_cross_section()?;
    let survey = bundled_survey(cfg.seed)?;
    let (ez, ex) = cfg.elasticities();
    let out = run_pipeline(&cs, &survey, &cfg.smoothing, ez, ex)?;
    let economies = [
        ("economy_separable.json", separable_economy(cfg.damage)?),
        ("economy_taste_shifted.json", taste_shifted_economy(0.45, cfg.damage)?),
        ("economy_multidim.json", multidim_economy(0.45, cfg.damage)?),
    ];
    cfg.ensure_out()?;
    cs.write_csv(std::fs::File::create(cfg.out_file("cross_section.csv"))?)?;
    survey.write_csv(std::fs::File::create(cfg.out_file("survey_mpc.csv"))?)?;
    write_json(&cfg.out_file("profile.json"), &out.profile)?;
    for (name, e) in &economies {
        write_json(&cfg.out_file(name), e)?;
    }
    Ok(Outcome::ok(format!(
        "calibrate: seed {} damage {} wrote {} files to {}",
        cfg.seed,
        cfg.damage,
        3 + economies.len(),
        cfg.out.display()
    )))
}

/// Profile from `--economy`, or from the pipeline on `--cross-section` and
/// `--survey` (the bundled tables when neither is given).
fn build_profile(cfg: &Resolved) -> Result<(StatsProfile, String)> {
    if let Some(p) = &cfg.economy {
        let econ: SyntheticEconomy = read_json(p)?;
        let profile = economy_stats(&econ, &FiniteDiff::default())?.profile;
        return Ok((profile, format!("economy {}", p.display())));
    }
    let (cs, survey, source) = match (&cfg.cross_section, &cfg.survey) {
        (Some(c), Some(s)) => (
            BinnedCrossSection::read_csv(std::fs::File::open(c)?)?,
            SurveyMpcTable::read_csv(std::fs::File::open(s)?)?,
            "csv inputs".to_string(),
        ),
        (None, None) => (bundled_cross_section()?, bundled_survey(cfg.seed)?, "bundled inputs".to_string()),
        _ => return Err(Error::InvalidInput("--cross-section and --survey must be given together".into())),
    };
    let (ez, ex) = cfg.elasticities();
    Ok((run_pipeline(&cs, &survey, &cfg.smoothing, ez, ex)?.profile, source))
}

fn cmd_stats(cfg: &Resolved) -> Result<Outcome> {
    let (profile, source) = build_profile(cfg)?;
    cfg.ensure_out()?;
    write_json(&cfg.out_file("profile.json"), &profile)?;
    let mut names = vec!["z", "h_z", "xhat", "xhat_slope", "x_inc", "x_het", "eta_taste", "eps_z", "eps_x", "mtr"];
    let mut cols: Vec<&[f64]> = vec![
        profile.z(),
        profile.grid.density(),
        &profile.xhat,
        &profile.xhat_slope,
        &profile.x_inc,
        &profile.x_het,
        &profile.eta_taste,
        &profile.eps_z,
        &profile.eps_x,
        &profile.mtr,
    ];
    if let Some(v) = &profile.var_x_inc {
        names.push("var_x_inc");
        cols.push(v);
    }
    write_columns(&cfg.out_file("profile.csv"), &names, &cols)?;
    let (lo, hi) = profile
        .eta_taste
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    Ok(Outcome::ok(format!(
        "stats: {} grid points from {source}, eta_taste in [{lo:.4}, {hi:.4}], wrote {}",
        profile.len(),
        cfg.out_file("profile.json").display()
    )))
}

fn load_profile(cfg: &Resolved) -> Result<StatsProfile> {
    let profile = match &cfg.profile {
        Some(p) => {
            let prof: StatsProfile = read_json(p)?;
            match &cfg.scenario {
                Some((_, ez, ex)) => prof.with_elasticities(*ez, *ex)?,
                None => prof,
            }
        }
        None => build_profile(&Resolved { economy: None, ..cfg.clone() })?.0,
    };
    if profile.is_empty() {
        return Err(Error::InvalidInput("profile is empty".into()));
    }
    Ok(profile)
}

#[derive(Serialize)]
struct ReportMeta {
    converged: bool,
    iterations: usize,
    residual: f64,
    branch_note: String,
}

fn meta<T>(r: &SolveReport<T>) -> ReportMeta {
    ReportMeta { converged: r.converged, iterations: r.iterations, residual: r.residual, branch_note: r.branch_note.clone() }
}

#[derive(Serialize)]
struct SolveOutput<T: Serialize> {
    method: &'static str,
    damage: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    schedule: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rate: Option<f64>,
    report: ReportMeta,
}

fn cmd_solve(cfg: &Resolved) -> Result<Outcome> {
    let mut profile = load_profile(cfg)?;
    let d = cfg.damage;
    let method = cfg.method.name();
    let json = cfg.out_file("solve.json");
    let csv = cfg.out_file("schedule.csv");
    let summary = |result: String, residual: f64, iterations: usize| {
        format!("solve: method={method} damage={d} result={result} residual={residual:.3e} iterations={iterations}")
    };
    match cfg.method {
        Method::Nonlinear => {
            let r = solve_nonlinear(&profile, d)?;
            let z: Vec<f64> = r.result.iter().map(|p| p.z).collect();
            let rate: Vec<f64> = r.result.iter().map(|p| p.rate).collect();
            cfg.ensure_out()?;
            write_json(&json, &SolveOutput { method, damage: d, schedule: Some(&r.result), rate: None, report: meta(&r) })?;
            write_columns(&csv, &["z", "rate"], &[&z, &rate])?;
            let (lo, hi) = rate.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
            Ok(Outcome::ok(summary(format!("[{lo:.6}, {hi:.6}]"), r.residual, r.iterations)))
        }
        Method::Linear | Method::Multidim => {
            let r = if cfg.method == Method::Linear { solve_linear(&profile, d)? } else { solve_multidim(&profile, d)? };
            let z = profile.z().to_vec();
            let rate = vec![r.result; z.len()];
            cfg.ensure_out()?;
            write_json(
                &json,
                &SolveOutput::<()> { method, damage: d, schedule: None, rate: Some(r.result), report: meta(&r) },
            )?;
            write_columns(&csv, &["z", "rate"], &[&z, &rate])?;
            Ok(Outcome::ok(summary(format!("{:.6}", r.result), r.residual, r.iterations)))
        }
        Method::Levels => {
            if profile.gbar_plus.is_none() {
                let g = power_welfare_weights(&profile.grid, cfg.welfare_power);
                profile.gbar_plus = Some(gbar_plus_from_weights(&profile.grid, &g));
            }
            let r = solve_optimal_levels(&profile, d)?;
            let z: Vec<f64> = r.result.iter().map(|p| p.z).collect();
            let tx: Vec<f64> = r.result.iter().map(|p| p.commodity_rate).collect();
            let tz: Vec<f64> = r.result.iter().map(|p| p.income_rate).collect();
            cfg.ensure_out()?;
            write_json(&json, &SolveOutput { method, damage: d, schedule: Some(&r.result), rate: None, report: meta(&r) })?;
            write_columns(&csv, &["z", "rate", "income_rate"], &[&z, &tx, &tz])?;
            let (lo, hi) = tx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
            Ok(Outcome::ok(summary(format!("[{lo:.6}, {hi:.6}]"), r.residual, r.iterations)))
        }
    }
}

fn cmd_verify(cfg: &Resolved) -> Result<Outcome> {
    let path = cfg.economy.as_ref().ok_or_else(|| Error::InvalidInput("verify needs --economy".into()))?;
    let econ: SyntheticEconomy = read_json(path)?;
    let report = verify_economy(&econ, cfg.damage)?;
    cfg.ensure_out()?;
    write_json(&cfg.out_file("verification.json"), &report)?;
    let passed = report.checks.iter().filter(|c| c.pass).count();
    let failing: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    let mut summary = format!("verify: {passed}/{} checks passed", report.checks.len());
    if !failing.is_empty() {
        summary.push_str(&format!(", failing: {}", failing.join(", ")));
    }
    Ok(Outcome { summary, code: if report.passed() { 0 } else { 1 } })
}

fn tidy_rows(z: &[f64], series: &str, values: &[f64], rows: &mut Vec<Vec<String>>) {
    for (zi, v) in z.iter().zip(values) {
        rows.push(vec![fmt_f64(*zi), series.to_string(), fmt_f64(*v)]);
    }
}

fn write_tidy(path: &Path, rows: &[Vec<String>]) -> Result<()> {
    write_records(path, &["z", "series", "value"], rows)
}

fn cmd_emit_plot(cfg: &Resolved) -> Result<Outcome> {
    let base = load_profile(cfg)?;
    let z = base.z().to_vec();
    let d = cfg.damage;

    let mut decomposition = Vec::new();
    tidy_rows(&z, "xhat_slope", &base.xhat_slope, &mut decomposition);
    tidy_rows(&z, "x_inc", &base.x_inc, &mut decomposition);
    tidy_rows(&z, "x_het", &base.x_het, &mut decomposition);

    let mut taste = Vec::new();
    tidy_rows(&z, "eta_taste", &base.eta_taste, &mut taste);

    let mut schedules = Vec::new();
    for s in SCENARIOS.iter() {
        let p = base.with_elasticities(s.eps_z, s.eps_x)?;
        let nl = solve_nonlinear(&p, d)?;
        let rates: Vec<f64> = nl.result.iter().map(|r| r.rate).collect();
        tidy_rows(&z, &format!("nonlinear:{}", s.name), &rates, &mut schedules);
        let lin = solve_linear(&p, d)?.result;
        tidy_rows(&z, &format!("linear:{}", s.name), &vec![lin; z.len()], &mut schedules);
    }
    tidy_rows(&z, "damage", &vec![d; z.len()], &mut schedules);

    let mut multidim = Vec::new();
    if base.var_x_inc.is_some() {
        for name in ["benchmark", "high-eti-low-demand"] {
            let (ez, ex) = scenario(name)?;
            let p = base.with_elasticities(ez, ex)?;
            let uni = solve_linear(&p, d)?.result;
            let multi = solve_multidim(&p, d)?.result;
            tidy_rows(&z, &format!("unidim:{name}"), &vec![uni; z.len()], &mut multidim);
            tidy_rows(&z, &format!("multidim:{name}"), &vec![multi; z.len()], &mut multidim);
        }
        tidy_rows(&z, "damage", &vec![d; z.len()], &mut multidim);
    }

    cfg.ensure_out()?;
    write_tidy(&cfg.out_file("decomposition.csv"), &decomposition)?;
    write_tidy(&cfg.out_file("taste_elasticity.csv"), &taste)?;
    write_tidy(&cfg.out_file("schedules_by_scenario.csv"), &schedules)?;
    let mut files = 3;
    if !multidim.is_empty() {
        write_tidy(&cfg.out_file("multidim_comparison.csv"), &multidim)?;
        files += 1;
    }
    Ok(Outcome::ok(format!("emit-plot: {} grid points, wrote {files} files to {}", z.len(), cfg.out.display())))
}
