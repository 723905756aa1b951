//! Command implementations. Each returns the files written and a JSON summary.

use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use xolscreen_core::attitude::AttitudeProblem;
use xolscreen_core::screening::TypeProblem;
use xolscreen_core::sim::{validate_analytic, SimConfig};
use xolscreen_core::Contract;

use crate::config::{ExperimentConfig, Mode};
use crate::error::CliError;
use crate::figures;
use crate::svg::{LinePlot, Series};
use crate::table::{curve_table, menu_table, num, report_table, validation_entries};

/// Default output directory when neither the command line nor the config names one.
pub const OUT_ENV: &str = "XOLSCREEN_OUT";
pub const DEFAULT_OUT: &str = "xolscreen-out";
/// True types in the truth-telling audits written to reports.
pub const AUDIT_TYPES: usize = 50;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: Value,
}

impl Outcome {
    pub fn to_json(&self) -> String {
        let mut v = self.summary.clone();
        v["status"] = json!("ok");
        v["out"] = json!(self.dir.display().to_string());
        v["files"] = json!(self.files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>());
        v.to_string()
    }
}

/// Command line beats the config file, which beats the environment.
pub fn resolve_out(cli: Option<&Path>, cfg: Option<&Path>) -> PathBuf {
    cli.or(cfg)
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn prepare(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl Writer<'_> {
    fn table(&mut self, name: &str, t: &crate::table::Table) -> Result<(), CliError> {
        let path = self.dir.join(name);
        t.write(&path)?;
        self.files.push(path);
        Ok(())
    }

    fn svg(&mut self, name: &str, plot: &LinePlot) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, plot.render()).map_err(|e| CliError::io(&path, e))?;
        self.files.push(path);
        Ok(())
    }
}

fn entries(pairs: &[(&str, String)]) -> Vec<(String, String)> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

pub fn solve(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    match cfg.mode {
        Mode::Attitude => solve_attitude(cfg, out),
        Mode::Type => solve_type(cfg, out),
        Mode::Simulate => simulate(cfg, out),
        Mode::Figure(id) => reproduce(id, out, cfg.output.svg),
    }
}

fn attitude_problem(cfg: &ExperimentConfig) -> Result<AttitudeProblem, CliError> {
    let claim = cfg.claim.expect("checked at parse time").distribution()?;
    Ok(AttitudeProblem::new(claim, cfg.prior.expect("checked at parse time"), cfg.market)?)
}

fn type_problem(cfg: &ExperimentConfig) -> Result<TypeProblem, CliError> {
    Ok(TypeProblem::new(
        cfg.claim.expect("checked at parse time").family,
        cfg.prior.expect("checked at parse time"),
        cfg.gamma_spec.expect("checked at parse time"),
        cfg.market,
        cfg.solver.clone(),
    )?)
}

fn solve_attitude(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let p = attitude_problem(cfg)?;
    let sol = p.solve_loading(&cfg.solver)?;
    let menu = p.build_menu(sol.xi_hat, cfg.output.grid_points)?;
    let (lo, hi) = p.prior_gamma.support();
    let audit = if lo < hi { Some(p.verify_truth_telling(sol.xi_hat, AUDIT_TYPES)?) } else { None };
    let insurer_value = p.insurer_value(sol.xi_hat)?;

    prepare(out)?;
    let mut w = Writer { dir: out, files: Vec::new() };
    w.table("menu.csv", &menu_table(&menu, &cfg.market))?;
    let mut report = entries(&[
        ("mode", "attitude".into()),
        ("xi_hat", num(sol.xi_hat)),
        ("objective", num(sol.objective)),
        ("insurer_value", num(insurer_value)),
        ("degenerate", sol.degenerate.to_string()),
    ]);
    if let Some(a) = &audit {
        report.push(("truth_telling_passed".into(), a.passed.to_string()));
        report.push(("truth_telling_max_deviation".into(), num(a.max_deviation)));
    }
    w.table("report.csv", &report_table(&report, &cfg.market))?;
    if cfg.output.svg {
        let xs = &menu.grid;
        w.svg("loading.svg", &LinePlot::new("Risk loading", "gamma", "loading").with_series(Series::new("menu", xs, &menu.loadings())))?;
        w.svg(
            "deductible.svg",
            &LinePlot::new("Deductible", "gamma", "deductible").with_series(Series::new("menu", xs, &menu.deductibles())),
        )?;
    }
    Ok(Outcome {
        dir: out.to_path_buf(),
        files: w.files,
        summary: json!({
            "mode": "attitude",
            "xi_hat": sol.xi_hat,
            "insurer_value": insurer_value,
            "degenerate": sol.degenerate,
            "truth_telling_passed": audit.map(|a| a.passed),
        }),
    })
}

fn solve_type(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let p = type_problem(cfg)?;
    let sol = p.solve_c_star(cfg.method)?;
    let menu = p.build_menu_type(&sol.curve)?;
    let residual = p.ode_residual(&sol.curve)?;
    let (lo, hi) = p.support();
    let audit = if lo < hi { Some(p.verify_truth_telling_type(&sol.curve, AUDIT_TYPES)?) } else { None };

    prepare(out)?;
    let mut w = Writer { dir: out, files: Vec::new() };
    w.table("curve.csv", &curve_table(&sol.curve, &cfg.market))?;
    w.table("menu.csv", &menu_table(&menu, &cfg.market))?;
    let mut report = entries(&[
        ("mode", "type".into()),
        ("method", sol.curve.method.name().into()),
        ("C_star", num(sol.c_star)),
        ("H", num(sol.h)),
        ("insurer_value", num(sol.insurer_value)),
        ("feasible_c_lo", num(sol.feasible.c_lo)),
        ("feasible_c_hi", num(sol.feasible.c_hi)),
        ("ode_residual", num(residual)),
        ("nonincreasing", sol.curve.is_nonincreasing(1e-9).to_string()),
    ]);
    if let Some(k) = sol.k_star {
        report.push(("K_star".into(), num(k)));
    }
    if let Some(a) = &audit {
        report.push(("truth_telling_passed".into(), a.passed.to_string()));
        report.push(("truth_telling_max_deviation".into(), num(a.max_deviation)));
    }
    w.table("report.csv", &report_table(&report, &cfg.market))?;
    if cfg.output.svg {
        let xs = &menu.grid;
        let clip = |v: &[f64]| {
            // Keep a boundary spike from flattening the rest of the curve.
            let mut sorted: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
            sorted.sort_by(f64::total_cmp);
            4.0 * sorted.get(sorted.len() * 9 / 10).copied().unwrap_or(1.0).max(1e-12)
        };
        let (xi, d) = (menu.loadings(), menu.deductibles());
        w.svg(
            "curve.svg",
            &LinePlot::new("Risk loading", "theta", "loading").with_series(Series::new("menu", xs, &xi)).with_clip(clip(&xi)),
        )?;
        w.svg(
            "deductible.svg",
            &LinePlot::new("Deductible", "theta", "deductible").with_series(Series::new("menu", xs, &d)).with_clip(clip(&d)),
        )?;
    }
    Ok(Outcome {
        dir: out.to_path_buf(),
        files: w.files,
        summary: json!({
            "mode": "type",
            "c_star": sol.c_star,
            "h": sol.h,
            "insurer_value": sol.insurer_value,
            "ode_residual": residual,
            "truth_telling_passed": audit.map(|a| a.passed),
        }),
    })
}

pub fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let sim = cfg.sim.ok_or_else(|| CliError::config("mode", "simulate needs mode = simulate and a sim block"))?;
    let claim = cfg.claim.ok_or_else(|| CliError::config("claim.family", "required key is missing"))?.distribution()?;
    let contract = if sim.deductible.is_infinite() {
        Contract::no_insurance()
    } else {
        Contract::priced(&claim, cfg.market.lambda, sim.deductible, sim.loading)?
    };
    let sc = SimConfig::from_market(&cfg.market, sim.paths, sim.seed);
    let report = validate_analytic(&contract, &claim, sim.gamma, &sc, &cfg.market)?;

    prepare(out)?;
    let mut w = Writer { dir: out, files: Vec::new() };
    let mut e = entries(&[
        ("mode", "simulate".into()),
        ("paths", sim.paths.to_string()),
        ("seed", sim.seed.to_string()),
        ("deductible", num(contract.deductible)),
        ("loading", num(contract.loading)),
        ("premium_rate", num(contract.premium_rate)),
    ]);
    e.extend(validation_entries(&report));
    w.table("report.csv", &report_table(&e, &cfg.market))?;
    let passed = report.passed();
    let summary = json!({
        "mode": "simulate",
        "passed": passed,
        "customer_z": report.customer.z,
        "insurer_z": report.insurer.z,
    });
    if !passed {
        report.into_result()?;
    }
    Ok(Outcome { dir: out.to_path_buf(), files: w.files, summary })
}

pub fn reproduce(id: u8, out: &Path, svg: bool) -> Result<Outcome, CliError> {
    let files = figures::reproduce(id, out, svg)?;
    Ok(Outcome { dir: out.to_path_buf(), files, summary: json!({ "mode": "figure", "figure": id }) })
}

/// Feasibility and assumption diagnostics without solving.
pub fn check(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let (report, summary) = match cfg.mode {
        Mode::Attitude => {
            let p = attitude_problem(cfg)?;
            let (lo, hi) = p.prior_gamma.support();
            let r = entries(&[
                ("mode", "attitude".into()),
                ("claim_mean", num(p.claim.mean()?)),
                ("claim_second_moment", num(p.claim.second_moment()?)),
                ("gamma_low", num(lo)),
                ("gamma_high", num(hi)),
                ("objective_at_zero", num(p.insurer_objective(0.0)?)),
            ]);
            (r, json!({ "mode": "attitude", "ok": true }))
        }
        Mode::Type => {
            let p = type_problem(cfg)?;
            let fs = p.feasible_set()?;
            let xi0 = fs.c_lo - 1.0;
            let bounds = p.check_assumptions(xi0)?;
            let mut r = entries(&[
                ("mode", "type".into()),
                ("feasible_c_lo", num(fs.c_lo)),
                ("feasible_c_hi", num(fs.c_hi)),
                ("phi_sup", num(bounds.k)),
                ("dphi_sup", num(bounds.m)),
                ("contraction_ok", bounds.contraction_ok.to_string()),
                ("positivity_ok", bounds.positivity_ok.to_string()),
            ]);
            if let Some((k_lo, k_hi)) = fs.closed_form {
                r.push(("K_lo".into(), num(k_lo)));
                r.push(("K_hi".into(), num(k_hi)));
            }
            let s = json!({
                "mode": "type",
                "c_lo": fs.c_lo,
                "c_hi": fs.c_hi,
                "contraction_ok": bounds.contraction_ok,
                "positivity_ok": bounds.positivity_ok,
            });
            (r, s)
        }
        Mode::Simulate => {
            let claim = cfg.claim.ok_or_else(|| CliError::config("claim.family", "required key is missing"))?.distribution()?;
            let r = entries(&[
                ("mode", "simulate".into()),
                ("claim_mean", num(claim.mean()?)),
                ("claim_variance", num(claim.variance()?)),
            ]);
            (r, json!({ "mode": "simulate", "ok": true }))
        }
        Mode::Figure(id) => {
            let spec = figures::figure_spec(id)?;
            let r = entries(&[("mode", "figure".into()), ("figure", id.to_string()), ("series", spec.series.len().to_string())]);
            (r, json!({ "mode": "figure", "figure": id }))
        }
    };
    prepare(out)?;
    let mut w = Writer { dir: out, files: Vec::new() };
    w.table("report.csv", &report_table(&report, &cfg.market))?;
    Ok(Outcome { dir: out.to_path_buf(), files: w.files, summary })
}
