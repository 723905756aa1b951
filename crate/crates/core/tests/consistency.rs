use approx::assert_abs_diff_eq;
use xolscreen_core::attitude::AttitudeProblem;
use xolscreen_core::dist::{ClaimDistribution, Family, RiskAversionSpec, TypeDistribution};
use xolscreen_core::screening::{CurveMethod, TypeProblem};
use xolscreen_core::sim::{validate_analytic, SimConfig};
use xolscreen_core::{MarketParams, SolverConfig};

fn point_type(theta: f64, gamma: f64) -> TypeProblem {
    TypeProblem::new(
        Family::ExponentialMean,
        TypeDistribution::point_mass(theta).unwrap(),
        RiskAversionSpec::constant(gamma).unwrap(),
        MarketParams::default(),
        SolverConfig::default(),
    )
    .unwrap()
}

#[test]
fn known_type_and_known_attitude_agree() {
    // With both θ and γ known the two problems describe the same single contract.
    let ty = point_type(5.0, 5.0).solve_c_star(CurveMethod::Ode).unwrap();
    let att = AttitudeProblem::new(
        ClaimDistribution::exponential(5.0).unwrap(),
        TypeDistribution::point_mass(5.0).unwrap(),
        MarketParams::default(),
    )
    .unwrap();
    let sol = att.solve_loading(&SolverConfig::default()).unwrap();
    assert_abs_diff_eq!(sol.xi_hat, 30.0, epsilon = 1e-5);
    assert_abs_diff_eq!(ty.c_star - 1.0, sol.xi_hat, epsilon = 1e-4);
    assert_abs_diff_eq!(ty.insurer_value, att.insurer_value(sol.xi_hat).unwrap(), epsilon = 1e-6);

    let menu = point_type(5.0, 5.0).build_menu_type(&ty.curve).unwrap();
    let single = att.contract_for(5.0, sol.xi_hat).unwrap();
    assert_abs_diff_eq!(menu.contracts[0].deductible, single.deductible, epsilon = 1e-4);
    assert_abs_diff_eq!(menu.contracts[0].premium_rate, single.premium_rate, epsilon = 1e-6);
}

#[test]
fn type_menu_contract_survives_simulation() {
    let p = TypeProblem::new(
        Family::ExponentialMean,
        TypeDistribution::uniform(2.0, 8.0).unwrap(),
        RiskAversionSpec::constant(5.0).unwrap(),
        MarketParams::default(),
        SolverConfig::default(),
    )
    .unwrap();
    let sol = p.solve_c_star(CurveMethod::ClosedForm).unwrap();
    let menu = p.build_menu_type(&sol.curve).unwrap();
    let mid = menu.len() / 2;
    let theta = menu.grid[mid];
    let report = validate_analytic(
        &menu.contracts[mid],
        &p.dist(theta).unwrap(),
        5.0,
        &SimConfig::from_market(&p.market, 100_000, 2024),
        &p.market,
    )
    .unwrap();
    assert!(report.passed(), "{report:?}");
}

#[test]
fn attitude_menu_is_truthful_and_ordered() {
    let p = AttitudeProblem::new(
        ClaimDistribution::exponential(1.0).unwrap(),
        TypeDistribution::uniform(1.0, 9.0).unwrap(),
        MarketParams::default(),
    )
    .unwrap();
    let xi = p.solve_loading(&SolverConfig::default()).unwrap().xi_hat;
    let menu = p.build_menu(xi, 50).unwrap();
    assert!(menu.contracts.windows(2).all(|w| w[1].deductible < w[0].deductible));
    assert!(menu.contracts.windows(2).all(|w| w[1].premium_rate > w[0].premium_rate));
    assert!(p.verify_truth_telling(xi, 50).unwrap().passed);
}
