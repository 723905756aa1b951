//! Flat `key = value` experiment files.
//!
//! One assignment per line, `#` starts a comment, keys are dotted lowercase
//! names (`claim.family`, `solver.ode_tol`). Every key must be recognised.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use xolscreen_core::dist::{ClaimDistribution, Family, RiskAversionSpec, TypeDistribution};
use xolscreen_core::screening::CurveMethod;
use xolscreen_core::{MarketParams, SolverConfig};

use crate::error::CliError;

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// Parsed assignments with tracking of which keys were read.
#[derive(Debug, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, Entry>,
    used: RefCell<BTreeSet<String>>,
}

fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && key.split('.').all(|seg| {
            !seg.is_empty() && seg.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
        })
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(CliError::config(content, format!("line {line}: expected `key = value`")));
            };
            let (key, value) = (key.trim(), value.trim());
            if !valid_key(key) {
                return Err(CliError::config(key, format!("line {line}: malformed key")));
            }
            if value.is_empty() {
                return Err(CliError::config(key, format!("line {line}: missing value")));
            }
            if let Some(prev) = entries.insert(key.to_string(), Entry { value: value.to_string(), line }) {
                return Err(CliError::config(key, format!("line {line}: duplicate of line {}", prev.line)));
            }
        }
        Ok(Self { entries, used: RefCell::default() })
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.used.borrow_mut().insert(key.to_string());
        self.entries.get(key).map(|e| e.value.as_str())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn require(&self, key: &str) -> Result<&str, CliError> {
        self.get(key).ok_or_else(|| CliError::config(key, "required key is missing"))
    }

    fn parse_value<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::config(key, format!("expected {what}, got `{v}`"))),
        }
    }

    /// Reals accept `inf`.
    pub fn f64(&self, key: &str) -> Result<Option<f64>, CliError> {
        let v: Option<f64> = self.parse_value(key, "a number")?;
        match v {
            Some(x) if x.is_nan() => Err(CliError::config(key, "NaN is not allowed")),
            other => Ok(other),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, CliError> {
        Ok(self.f64(key)?.unwrap_or(default))
    }

    pub fn require_f64(&self, key: &str) -> Result<f64, CliError> {
        self.f64(key)?.ok_or_else(|| CliError::config(key, "required key is missing"))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, CliError> {
        Ok(self.parse_value(key, "a nonnegative integer")?.unwrap_or(default))
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64, CliError> {
        Ok(self.parse_value(key, "a nonnegative integer")?.unwrap_or(default))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => Err(CliError::config(key, format!("expected true or false, got `{v}`"))),
        }
    }

    /// Fails on the first key nobody asked for.
    pub fn reject_unused(&self) -> Result<(), CliError> {
        let used = self.used.borrow();
        match self.entries.iter().find(|(k, _)| !used.contains(*k)) {
            Some((k, e)) => Err(CliError::config(k, format!("line {}: unknown key", e.line))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Attitude,
    Type,
    Simulate,
    Figure(u8),
}

/// The claim law, possibly still waiting for θ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClaimSpec {
    pub family: Family,
    /// Fixes the member of a θ-indexed family (simulation only).
    pub theta: Option<f64>,
}

impl ClaimSpec {
    pub fn distribution(&self) -> Result<ClaimDistribution, CliError> {
        if self.family.is_theta_indexed() {
            let theta = self.theta.ok_or_else(|| CliError::config("claim.theta", "needed to fix a theta-indexed family"))?;
            Ok(ClaimDistribution::new(self.family, Some(theta))?)
        } else {
            Ok(ClaimDistribution::new(self.family, None)?)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
    pub svg: bool,
    /// Rows in an attitude menu.
    pub grid_points: usize,
}

/// A contract to simulate, given directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSpec {
    pub paths: usize,
    pub seed: u64,
    pub deductible: f64,
    pub loading: f64,
    /// Customer risk aversion used for the mean-variance comparison.
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub claim: Option<ClaimSpec>,
    pub prior: Option<TypeDistribution>,
    pub gamma_spec: Option<RiskAversionSpec>,
    pub market: MarketParams,
    pub solver: SolverConfig,
    pub method: CurveMethod,
    pub output: OutputSpec,
    pub sim: Option<SimSpec>,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        Self::from_key_values(&KeyValues::read(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        Self::from_key_values(&KeyValues::parse(text)?)
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self, CliError> {
        let mode = match kv.require("mode")? {
            "attitude" => Mode::Attitude,
            "type" => Mode::Type,
            "simulate" => Mode::Simulate,
            "figure" => {
                let id = kv.usize_or("figure", 0)?;
                if !(1..=5).contains(&id) {
                    return Err(CliError::config("figure", format!("figure id must be 1 to 5, got {id}")));
                }
                Mode::Figure(id as u8)
            }
            other => {
                return Err(CliError::config(
                    "mode",
                    format!("expected attitude, type, simulate or figure, got `{other}`"),
                ))
            }
        };
        let claim = if kv.contains("claim.family") { Some(parse_claim(kv)?) } else { None };
        let prior = if kv.contains("prior.kind") { Some(parse_prior(kv)?) } else { None };
        let gamma_spec = if kv.contains("gamma.form") { Some(parse_gamma(kv)?) } else { None };
        let market = parse_market(kv)?;
        let (solver, method) = parse_solver(kv)?;
        let output = OutputSpec {
            dir: kv.get("output.dir").map(PathBuf::from),
            svg: kv.bool_or("output.svg", true)?,
            grid_points: kv.usize_or("output.grid_points", 50)?,
        };
        if output.grid_points < 2 {
            return Err(CliError::config("output.grid_points", "must be at least 2"));
        }
        let sim = if mode == Mode::Simulate { Some(parse_sim(kv)?) } else { None };
        kv.reject_unused()?;

        let cfg = Self { mode, claim, prior, gamma_spec, market, solver, method, output, sim };
        cfg.check_required()?;
        Ok(cfg)
    }

    fn check_required(&self) -> Result<(), CliError> {
        let need_claim = || self.claim.ok_or_else(|| CliError::config("claim.family", "required key is missing"));
        match self.mode {
            Mode::Attitude => {
                if need_claim()?.family.is_theta_indexed() {
                    return Err(CliError::config("claim.family", "attitude screening needs a fixed claim law"));
                }
                self.prior.ok_or_else(|| CliError::config("prior.kind", "required key is missing"))?;
            }
            Mode::Type => {
                if !need_claim()?.family.is_theta_indexed() {
                    return Err(CliError::config("claim.family", "type screening needs a theta-indexed family"));
                }
                self.prior.ok_or_else(|| CliError::config("prior.kind", "required key is missing"))?;
                self.gamma_spec.ok_or_else(|| CliError::config("gamma.form", "required key is missing"))?;
            }
            Mode::Simulate => {
                need_claim()?.distribution()?;
            }
            Mode::Figure(_) => {}
        }
        Ok(())
    }
}

fn parse_claim(kv: &KeyValues) -> Result<ClaimSpec, CliError> {
    let family = match kv.require("claim.family")? {
        "exponential" => Family::ExponentialFixed { mean: kv.f64_or("claim.mean", 1.0)? },
        "pareto" => Family::ParetoFixed { shape: kv.require_f64("claim.shape")?, scale: kv.require_f64("claim.scale")? },
        "exponential_mean" => Family::ExponentialMean,
        "pareto_inv_theta" => Family::ParetoShapeInvTheta { scale: kv.require_f64("claim.scale")? },
        "uniform" => Family::UniformOnZeroTheta,
        other => {
            return Err(CliError::config(
                "claim.family",
                format!("unknown family `{other}` (exponential, pareto, exponential_mean, pareto_inv_theta, uniform)"),
            ))
        }
    };
    let theta = kv.f64("claim.theta")?;
    let spec = ClaimSpec { family, theta };
    if !family.is_theta_indexed() {
        if theta.is_some() {
            return Err(CliError::config("claim.theta", "only theta-indexed families take theta"));
        }
        ClaimDistribution::new(family, None).map_err(|e| CliError::config("claim.family", e.to_string()))?;
    }
    Ok(spec)
}

fn parse_prior(kv: &KeyValues) -> Result<TypeDistribution, CliError> {
    let kind = kv.require("prior.kind")?;
    let prior = match kind {
        "uniform" => TypeDistribution::uniform(kv.require_f64("prior.low")?, kv.require_f64("prior.high")?),
        "truncnormal" => TypeDistribution::truncated_normal(
            kv.require_f64("prior.loc")?,
            kv.require_f64("prior.scale")?,
            kv.require_f64("prior.low")?,
            kv.require_f64("prior.high")?,
        ),
        "point" => TypeDistribution::point_mass(kv.require_f64("prior.atom")?),
        other => {
            return Err(CliError::config("prior.kind", format!("expected uniform, truncnormal or point, got `{other}`")))
        }
    };
    prior.map_err(|e| CliError::config("prior.kind", e.to_string()))
}

fn parse_gamma(kv: &KeyValues) -> Result<RiskAversionSpec, CliError> {
    let a = kv.require_f64("gamma.coefficient")?;
    let spec = match kv.require("gamma.form")? {
        "constant" => RiskAversionSpec::constant(a),
        "linear" => RiskAversionSpec::linear(a),
        "inverse" => RiskAversionSpec::inverse(a),
        other => {
            return Err(CliError::config("gamma.form", format!("expected constant, linear or inverse, got `{other}`")))
        }
    };
    spec.map_err(|e| CliError::config("gamma.coefficient", e.to_string()))
}

fn parse_market(kv: &KeyValues) -> Result<MarketParams, CliError> {
    let d = MarketParams::default();
    let m = MarketParams {
        lambda: kv.f64_or("market.lambda", d.lambda)?,
        horizon_t: kv.f64_or("market.horizon", d.horizon_t)?,
        gamma_i: kv.f64_or("market.gamma_i", d.gamma_i)?,
        x_c: kv.f64_or("market.x_c", d.x_c)?,
        x_i: kv.f64_or("market.x_i", d.x_i)?,
    };
    m.validate().map_err(|e| CliError::config("market", e.to_string()))?;
    Ok(m)
}

fn parse_solver(kv: &KeyValues) -> Result<(SolverConfig, CurveMethod), CliError> {
    let d = SolverConfig::default();
    let s = SolverConfig {
        quad_tol: kv.f64_or("solver.quad_tol", d.quad_tol)?,
        ode_step_init: kv.f64_or("solver.ode_step_init", d.ode_step_init)?,
        ode_tol: kv.f64_or("solver.ode_tol", d.ode_tol)?,
        opt_tol: kv.f64_or("solver.opt_tol", d.opt_tol)?,
        fp_damping: kv.f64_or("solver.fp_damping", d.fp_damping)?,
        fp_max_iter: kv.usize_or("solver.fp_max_iter", d.fp_max_iter)?,
        grid_points: kv.usize_or("solver.grid_points", d.grid_points)?,
    };
    s.validate().map_err(|e| CliError::config("solver", e.to_string()))?;
    let method = match kv.get("solver.method") {
        None => CurveMethod::Ode,
        Some(m) => CurveMethod::parse(m).map_err(|e| CliError::config("solver.method", e.to_string()))?,
    };
    Ok((s, method))
}

fn parse_sim(kv: &KeyValues) -> Result<SimSpec, CliError> {
    let spec = SimSpec {
        paths: kv.usize_or("sim.paths", 100_000)?,
        seed: kv.u64_or("sim.seed", 1)?,
        deductible: kv.require_f64("sim.deductible")?,
        loading: kv.require_f64("sim.loading")?,
        gamma: kv.require_f64("sim.gamma")?,
    };
    if spec.paths == 0 {
        return Err(CliError::config("sim.paths", "must be at least 1"));
    }
    if !(spec.deductible >= 0.0) {
        return Err(CliError::config("sim.deductible", "must be nonnegative"));
    }
    if !(spec.loading >= 0.0 && spec.loading.is_finite()) {
        return Err(CliError::config("sim.loading", "must be finite and nonnegative"));
    }
    if !(spec.gamma >= 0.0 && spec.gamma.is_finite()) {
        return Err(CliError::config("sim.gamma", "must be finite and nonnegative"));
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TYPE_CFG: &str = "
        # figure 3 style run
        mode = type
        claim.family = exponential_mean
        prior.kind = uniform
        prior.low = 1
        prior.high = 9   # wide support
        gamma.form = constant
        gamma.coefficient = 5
        solver.method = closed_form
    ";

    #[test]
    fn parses_a_type_run() {
        let cfg = ExperimentConfig::parse(TYPE_CFG).unwrap();
        assert_eq!(cfg.mode, Mode::Type);
        assert_eq!(cfg.prior, Some(TypeDistribution::Uniform { low: 1.0, high: 9.0 }));
        assert_eq!(cfg.method, CurveMethod::ClosedForm);
        assert_eq!(cfg.market, MarketParams::default());
        assert!(cfg.output.svg);
    }

    fn key_of(text: &str) -> String {
        match ExperimentConfig::parse(text).unwrap_err() {
            CliError::Config { key, .. } => key,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(key_of(&format!("{TYPE_CFG}\nsolver.ode_tol = fast")), "solver.ode_tol");
        assert_eq!(key_of(&format!("{TYPE_CFG}\nsolver.odetol = 1e-8")), "solver.odetol");
        assert_eq!(key_of(&format!("{TYPE_CFG}\nprior.low = 2")), "prior.low");
        assert_eq!(key_of(&TYPE_CFG.replace("gamma.coefficient = 5", "")), "gamma.coefficient");
        assert_eq!(key_of("mode = sideways"), "mode");
        assert_eq!(key_of("mode = type\nClaim.Family = x"), "Claim.Family");
        assert_eq!(key_of("mode = attitude\nclaim.family = uniform\nprior.kind = point\nprior.atom = 5"), "claim.family");
    }

    #[test]
    fn line_without_equals_is_rejected() {
        assert_eq!(key_of("mode type"), "mode type");
    }

    #[test]
    fn simulate_needs_a_contract() {
        let base = "mode = simulate\nclaim.family = exponential\nsim.loading = 6\nsim.gamma = 5";
        assert_eq!(key_of(base), "sim.deductible");
        let cfg = ExperimentConfig::parse(&format!("{base}\nsim.deductible = inf")).unwrap();
        assert_eq!(cfg.sim.unwrap().deductible, f64::INFINITY);
        assert_eq!(cfg.sim.unwrap().paths, 100_000);
    }

    #[test]
    fn figure_mode_checks_the_id() {
        assert_eq!(ExperimentConfig::parse("mode = figure\nfigure = 4").unwrap().mode, Mode::Figure(4));
        assert_eq!(key_of("mode = figure\nfigure = 6"), "figure");
    }
}
