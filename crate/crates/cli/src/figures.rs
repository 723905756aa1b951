//! The five hard-coded figure experiments. Each run writes one CSV per
//! series and then draws the SVGs from those CSVs, so re-plotting an
//! existing directory reproduces the same bytes.

use std::path::{Path, PathBuf};

use xolscreen_core::attitude::AttitudeProblem;
use xolscreen_core::dist::{ClaimDistribution, Family, RiskAversionSpec, TypeDistribution};
use xolscreen_core::screening::{CurveMethod, TypeProblem};
use xolscreen_core::{MarketParams, SolverConfig};

use crate::error::CliError;
use crate::svg::{LinePlot, Series};
use crate::table::{curve_table, menu_table, num, Table};

/// Rows in each attitude menu.
pub const ATTITUDE_MENU_POINTS: usize = 81;

#[derive(Debug, Clone)]
pub enum SeriesSpec {
    Attitude { claim: ClaimDistribution, prior: TypeDistribution },
    Type { family: Family, prior: TypeDistribution, gamma: RiskAversionSpec },
}

#[derive(Debug, Clone)]
pub struct FigureSeries {
    pub label: &'static str,
    /// File stem, e.g. `fig3_uniform_1_9`.
    pub slug: &'static str,
    pub spec: SeriesSpec,
}

#[derive(Debug, Clone)]
pub struct FigureSpec {
    pub id: u8,
    pub title: &'static str,
    pub series: Vec<FigureSeries>,
    pub loading_clip: Option<f64>,
    pub deductible_clip: Option<f64>,
}

impl FigureSpec {
    pub fn is_attitude(&self) -> bool {
        matches!(self.series[0].spec, SeriesSpec::Attitude { .. })
    }

    pub fn index_name(&self) -> &'static str {
        if self.is_attitude() {
            "gamma"
        } else {
            "theta"
        }
    }

    pub fn menu_path(&self, dir: &Path, s: &FigureSeries) -> PathBuf {
        dir.join(format!("{}_menu.csv", s.slug))
    }

    pub fn curve_path(&self, dir: &Path, s: &FigureSeries) -> PathBuf {
        dir.join(format!("{}_curve.csv", s.slug))
    }
}

fn attitude(label: &'static str, slug: &'static str, claim: ClaimDistribution, prior: TypeDistribution) -> FigureSeries {
    FigureSeries { label, slug, spec: SeriesSpec::Attitude { claim, prior } }
}

fn typed(
    label: &'static str,
    slug: &'static str,
    family: Family,
    prior: TypeDistribution,
    gamma: RiskAversionSpec,
) -> FigureSeries {
    FigureSeries { label, slug, spec: SeriesSpec::Type { family, prior, gamma } }
}

pub fn figure_spec(id: u8) -> Result<FigureSpec, CliError> {
    let exp1 = ClaimDistribution::exponential(1.0)?;
    let pareto33 = ClaimDistribution::pareto(3.0, 3.0)?;
    let pareto_family = Family::ParetoShapeInvTheta { scale: 3.0 };
    let g5 = RiskAversionSpec::constant(5.0)?;
    let tn = |loc: f64, scale: f64, lo: f64, hi: f64| TypeDistribution::truncated_normal(loc, scale, lo, hi);
    let spec = match id {
        1 => FigureSpec {
            id,
            title: "Exponential(1) claims, uniform risk aversion",
            series: vec![
                attitude("gamma ~ U[1,9]", "fig1_uniform_1_9", exp1, TypeDistribution::uniform(1.0, 9.0)?),
                attitude("gamma ~ U[2,8]", "fig1_uniform_2_8", exp1, TypeDistribution::uniform(2.0, 8.0)?),
                attitude("gamma = 5", "fig1_point_5", exp1, TypeDistribution::point_mass(5.0)?),
            ],
            loading_clip: None,
            deductible_clip: None,
        },
        2 => FigureSpec {
            id,
            title: "Pareto(3,3) claims, truncated normal risk aversion",
            series: vec![
                attitude("gamma ~ TruncN(2,1)", "fig2_truncn_2_1", pareto33, tn(2.0, 1.0, 1.0, 9.0)?),
                attitude("gamma ~ TruncN(2,2)", "fig2_truncn_2_2", pareto33, tn(2.0, 2.0, 1.0, 9.0)?),
                attitude("gamma = 2", "fig2_point_2", pareto33, TypeDistribution::point_mass(2.0)?),
            ],
            loading_clip: None,
            deductible_clip: None,
        },
        3 => FigureSpec {
            id,
            title: "Exponential claims with mean theta, gamma = 5",
            series: vec![
                typed("theta ~ U[1,9]", "fig3_uniform_1_9", Family::ExponentialMean, TypeDistribution::uniform(1.0, 9.0)?, g5),
                typed("theta ~ U[2,8]", "fig3_uniform_2_8", Family::ExponentialMean, TypeDistribution::uniform(2.0, 8.0)?, g5),
            ],
            loading_clip: Some(40.0),
            deductible_clip: Some(8.0),
        },
        4 => FigureSpec {
            id,
            title: "Pareto(1/theta, 3) claims, gamma = 5",
            series: vec![
                typed("theta ~ TruncN(0.15,0.1)", "fig4_truncn_0_1", pareto_family, tn(0.15, 0.1, 0.1, 0.5)?, g5),
                typed("theta ~ TruncN(0.15,0.2)", "fig4_truncn_0_2", pareto_family, tn(0.15, 0.2, 0.1, 0.5)?, g5),
            ],
            loading_clip: None,
            deductible_clip: None,
        },
        5 => {
            let prior = tn(0.15, 0.1, 0.1, 0.5)?;
            FigureSpec {
                id,
                title: "Pareto(1/theta, 3) claims, theta ~ TruncN(0.15,0.1)",
                series: vec![
                    typed("gamma = 50 theta", "fig5_linear", pareto_family, prior, RiskAversionSpec::linear(50.0)?),
                    typed("gamma = 5", "fig5_constant", pareto_family, prior, g5),
                    typed("gamma = 0.5/theta", "fig5_inverse", pareto_family, prior, RiskAversionSpec::inverse(0.5)?),
                ],
                loading_clip: Some(40.0),
                deductible_clip: Some(20.0),
            }
        }
        other => return Err(CliError::Usage(format!("figure id must be 1 to 5, got {other}"))),
    };
    Ok(spec)
}

/// Runs every series of a figure and writes its CSVs and (optionally) SVGs.
pub fn reproduce(id: u8, dir: &Path, svg: bool) -> Result<Vec<PathBuf>, CliError> {
    let spec = figure_spec(id)?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let market = MarketParams::default();
    let solver = SolverConfig::default();
    let mut files = Vec::new();
    for s in &spec.series {
        match &s.spec {
            SeriesSpec::Attitude { claim, prior } => {
                let p = AttitudeProblem::new(*claim, *prior, market)?;
                let sol = p.solve_loading(&solver)?;
                let menu = p.build_menu(sol.xi_hat, ATTITUDE_MENU_POINTS)?;
                let t = menu_table(&menu, &market)
                    .with_meta("series", s.label)
                    .with_meta("xi_hat", num(sol.xi_hat));
                let path = spec.menu_path(dir, s);
                t.write(&path)?;
                files.push(path);
            }
            SeriesSpec::Type { family, prior, gamma } => {
                let p = TypeProblem::new(*family, *prior, *gamma, market, solver.clone())?;
                let sol = p.solve_c_star(CurveMethod::Ode)?;
                let menu = p.build_menu_type(&sol.curve)?;
                let curve = curve_table(&sol.curve, &market).with_meta("series", s.label).with_meta("H", num(sol.h));
                let menu = menu_table(&menu, &market).with_meta("series", s.label);
                let (cp, mp) = (spec.curve_path(dir, s), spec.menu_path(dir, s));
                curve.write(&cp)?;
                menu.write(&mp)?;
                files.push(cp);
                files.push(mp);
            }
        }
    }
    if svg {
        for (name, body) in plot_figure(id, dir)? {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
            files.push(path);
        }
    }
    Ok(files)
}

/// Renders a figure's SVGs from the CSVs already in `dir`.
pub fn plot_figure(id: u8, dir: &Path) -> Result<Vec<(String, String)>, CliError> {
    let spec = figure_spec(id)?;
    let x = spec.index_name();
    let mut loading = LinePlot::new(&format!("Risk loading: {}", spec.title), x, "loading");
    let mut deductible = LinePlot::new(&format!("Deductible: {}", spec.title), x, "deductible");
    let mut premium = LinePlot::new(&format!("Premium rate: {}", spec.title), x, "premium rate");
    for s in &spec.series {
        let menu = Table::read(&spec.menu_path(dir, s))?;
        let xs = menu.column_f64(x)?;
        loading.series.push(Series::new(s.label, &xs, &menu.column_f64("loading")?));
        deductible.series.push(Series::new(s.label, &xs, &menu.column_f64("deductible")?));
        premium.series.push(Series::new(s.label, &xs, &menu.column_f64("premium_rate")?));
    }
    loading.y_clip = spec.loading_clip;
    deductible.y_clip = spec.deductible_clip;
    premium.y_clip = None;
    Ok(vec![
        (format!("fig{id}_loading.svg"), loading.render()),
        (format!("fig{id}_deductible.svg"), deductible.render()),
        (format!("fig{id}_premium.svg"), premium.render()),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_figure_is_defined() {
        for id in 1..=5 {
            let spec = figure_spec(id).unwrap();
            assert!(spec.series.len() >= 2);
            assert_eq!(spec.is_attitude(), id <= 2);
        }
        assert!(figure_spec(0).is_err());
        assert!(figure_spec(6).is_err());
    }
}
