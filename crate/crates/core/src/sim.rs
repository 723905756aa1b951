//! Compound-Poisson Monte Carlo of terminal customer and insurer surplus.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::dist::ClaimDistribution;
use crate::error::{ensure, Error, Result};
use crate::market::{Contract, MarketParams};
use crate::numerics::compensated_sum;

/// Absolute slack, scaled by the path's gross flows, for the conservation check.
const CONSERVATION_TOL: f64 = 1e-10;
/// Validation passes when every z-score is at most this in magnitude.
pub const VALIDATION_Z: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub horizon_t: f64,
    pub lambda: f64,
}

impl SimConfig {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        Self { n_paths, seed, horizon_t: 1.0, lambda: 1.0 }
    }

    pub fn from_market(market: &MarketParams, n_paths: usize, seed: u64) -> Self {
        Self { n_paths, seed, horizon_t: market.horizon_t, lambda: market.lambda }
    }

    /// `T = 0` and `λ = 0` are accepted so the degenerate no-claim case can be run.
    pub fn validate(&self) -> Result<()> {
        ensure(self.n_paths >= 1, || "n_paths must be at least 1".into())?;
        ensure(self.horizon_t >= 0.0 && self.horizon_t.is_finite(), || {
            format!("horizon T must be nonnegative, got {}", self.horizon_t)
        })?;
        ensure(self.lambda >= 0.0 && self.lambda.is_finite(), || {
            format!("lambda must be nonnegative, got {}", self.lambda)
        })
    }

    pub fn exposure(&self) -> f64 {
        self.lambda * self.horizon_t
    }
}

/// Sample mean and central moments of one simulated quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleMoments {
    pub n: usize,
    pub mean: f64,
    /// Central moments of order 2, 3 and 4 (divisor n).
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
}

impl SampleMoments {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        let nf = n as f64;
        let mean = compensated_sum(values.iter().copied()) / nf;
        let dev = |p: i32| compensated_sum(values.iter().map(|v| (v - mean).powi(p))) / nf;
        Self { n, mean, m2: dev(2), m3: dev(3), m4: dev(4) }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 * self.n as f64 / (self.n - 1) as f64
        }
    }

    pub fn se_mean(&self) -> f64 {
        (self.m2 / self.n as f64).sqrt()
    }

    /// Delta-method standard error of the variance estimate.
    pub fn se_variance(&self) -> f64 {
        ((self.m4 - self.m2 * self.m2).max(0.0) / self.n as f64).sqrt()
    }

    /// E − (γ/2)·Var.
    pub fn mean_variance(&self, gamma: f64) -> f64 {
        self.mean - 0.5 * gamma * self.variance()
    }

    /// Standard error of [`mean_variance`](Self::mean_variance), accounting for the
    /// covariance between the sample mean and sample variance.
    pub fn se_mean_variance(&self, gamma: f64) -> f64 {
        let g = 0.5 * gamma;
        let v = self.m2 - 2.0 * g * self.m3 + g * g * (self.m4 - self.m2 * self.m2);
        (v.max(0.0) / self.n as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub customer: SampleMoments,
    pub insurer: SampleMoments,
    /// Mean number of claims per path.
    pub mean_claims: f64,
    /// Largest per-path violation of X_C + X_I = x_C + x_I − ΣY.
    pub conservation_error: f64,
}

impl SimResult {
    pub fn mean_xc(&self) -> f64 {
        self.customer.mean
    }

    pub fn var_xc(&self) -> f64 {
        self.customer.variance()
    }

    pub fn mean_xi(&self) -> f64 {
        self.insurer.mean
    }

    pub fn var_xi(&self) -> f64 {
        self.insurer.variance()
    }
}

/// Terminal values of one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOutcome {
    pub x_c: f64,
    pub x_i: f64,
    pub claims: usize,
    pub total_loss: f64,
}

/// RNG for path `index`: the seed picks the key, the path picks the stream.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn simulate_path<R: Rng + ?Sized>(
    contract: &Contract,
    claim: &ClaimDistribution,
    exposure: f64,
    horizon_t: f64,
    x_c: f64,
    x_i: f64,
    rng: &mut R,
) -> Result<PathOutcome> {
    let count = if exposure > 0.0 {
        let poisson = Poisson::new(exposure).map_err(|e| Error::Parameter(format!("Poisson rate {exposure}: {e}")))?;
        poisson.sample(rng) as usize
    } else {
        0
    };
    let mut retained = Vec::with_capacity(count);
    let mut paid = Vec::with_capacity(count);
    let mut losses = Vec::with_capacity(count);
    for _ in 0..count {
        let y = claim.sample(rng);
        retained.push(contract.retention(y));
        paid.push(contract.indemnity(y));
        losses.push(y);
    }
    let premium = contract.premium_rate * horizon_t;
    let total_loss = compensated_sum(losses);
    Ok(PathOutcome {
        x_c: compensated_sum([x_c, -premium].into_iter().chain(retained.into_iter().map(|r| -r))),
        x_i: compensated_sum([x_i, premium].into_iter().chain(paid.into_iter().map(|p| -p))),
        claims: count,
        total_loss,
    })
}

pub fn simulate(contract: &Contract, claim: &ClaimDistribution, cfg: &SimConfig, x_c: f64, x_i: f64) -> Result<SimResult> {
    cfg.validate()?;
    ensure(contract.premium_rate >= 0.0 && contract.premium_rate.is_finite(), || {
        format!("premium rate must be finite and nonnegative, got {}", contract.premium_rate)
    })?;
    let exposure = cfg.exposure();
    let outcomes: Vec<PathOutcome> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = path_rng(cfg.seed, k);
            simulate_path(contract, claim, exposure, cfg.horizon_t, x_c, x_i, &mut rng)
        })
        .collect::<Result<_>>()?;

    let premium = contract.premium_rate * cfg.horizon_t;
    let mut worst = 0.0_f64;
    for o in &outcomes {
        let gap = (o.x_c + o.x_i - (x_c + x_i - o.total_loss)).abs();
        let scale = 1.0 + x_c.abs() + x_i.abs() + premium + o.total_loss;
        if gap > CONSERVATION_TOL * scale {
            return Err(Error::Numeric(format!("surplus conservation violated by {gap:e} on a path")));
        }
        worst = worst.max(gap);
    }

    let xc: Vec<f64> = outcomes.iter().map(|o| o.x_c).collect();
    let xi: Vec<f64> = outcomes.iter().map(|o| o.x_i).collect();
    let mean_claims = compensated_sum(outcomes.iter().map(|o| o.claims as f64)) / cfg.n_paths as f64;
    Ok(SimResult {
        customer: SampleMoments::from_values(&xc),
        insurer: SampleMoments::from_values(&xi),
        mean_claims,
        conservation_error: worst,
    })
}

/// Simulated against closed-form mean-variance value for one side of the contract.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueCheck {
    pub analytic: f64,
    pub simulated: f64,
    pub std_error: f64,
    pub z: f64,
}

impl ValueCheck {
    fn new(analytic: f64, simulated: f64, std_error: f64) -> Self {
        let diff = simulated - analytic;
        let z = if std_error > 0.0 {
            diff / std_error
        } else if diff.abs() <= 1e-12 * (1.0 + analytic.abs()) {
            0.0
        } else {
            f64::INFINITY.copysign(diff)
        };
        Self { analytic, simulated, std_error, z }
    }

    pub fn passed(&self) -> bool {
        self.z.abs() <= VALIDATION_Z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub customer: ValueCheck,
    pub insurer: ValueCheck,
    pub sim: SimResult,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.customer.passed() && self.insurer.passed()
    }

    /// `Ok(self)` when both sides pass, otherwise a numeric error carrying the z-scores.
    pub fn into_result(self) -> Result<Self> {
        if self.passed() {
            Ok(self)
        } else {
            Err(Error::Numeric(format!(
                "Monte Carlo validation failed: customer z = {:.3}, insurer z = {:.3}",
                self.customer.z, self.insurer.z
            )))
        }
    }
}

/// Customer MV value x_C − pT − λT(E[Y∧d] + γ/2·E[(Y∧d)²]).
pub fn analytic_customer_value(contract: &Contract, claim: &ClaimDistribution, gamma: f64, cfg: &SimConfig, x_c: f64) -> f64 {
    let d = contract.deductible;
    let lt = cfg.exposure();
    x_c - contract.premium_rate * cfg.horizon_t - lt * (claim.capped_mean(d) + 0.5 * gamma * claim.capped_sq_moment(d))
}

/// Insurer MV value x_I + pT − λT(SL(d) + γ_I/2·SL₂(d)).
pub fn analytic_insurer_value(
    contract: &Contract,
    claim: &ClaimDistribution,
    gamma_i: f64,
    cfg: &SimConfig,
    x_i: f64,
) -> Result<f64> {
    let d = contract.deductible;
    let (sl, sl2) = if d.is_infinite() { (0.0, 0.0) } else { (claim.stop_loss(d)?, claim.stop_loss_sq(d)?) };
    Ok(x_i + contract.premium_rate * cfg.horizon_t - cfg.exposure() * (sl + 0.5 * gamma_i * sl2))
}

/// Simulates the contract and compares both mean-variance values to their
/// closed forms. The report is returned whether or not it passes.
pub fn validate_analytic(
    contract: &Contract,
    claim: &ClaimDistribution,
    gamma: f64,
    cfg: &SimConfig,
    market: &MarketParams,
) -> Result<ValidationReport> {
    ensure(gamma >= 0.0 && gamma.is_finite(), || format!("gamma must be nonnegative, got {gamma}"))?;
    let sim = simulate(contract, claim, cfg, market.x_c, market.x_i)?;
    let customer = ValueCheck::new(
        analytic_customer_value(contract, claim, gamma, cfg, market.x_c),
        sim.customer.mean_variance(gamma),
        sim.customer.se_mean_variance(gamma),
    );
    let insurer = ValueCheck::new(
        analytic_insurer_value(contract, claim, market.gamma_i, cfg, market.x_i)?,
        sim.insurer.mean_variance(market.gamma_i),
        sim.insurer.se_mean_variance(market.gamma_i),
    );
    Ok(ValidationReport { customer, insurer, sim })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn exp1() -> ClaimDistribution {
        ClaimDistribution::exponential(1.0).unwrap()
    }

    #[test]
    fn no_insurance_moments() {
        let cfg = SimConfig::new(100_000, 11);
        let r = simulate(&Contract::no_insurance(), &exp1(), &cfg, 10.0, 0.0).unwrap();
        assert!((r.mean_xc() - 9.0).abs() <= 3.0 * r.customer.se_mean(), "mean {}", r.mean_xc());
        assert!((r.var_xc() - 2.0).abs() <= 3.0 * r.customer.se_variance(), "var {}", r.var_xc());
        assert_eq!(r.mean_xi(), 0.0);
        assert_eq!(r.var_xi(), 0.0);
    }

    #[test]
    fn full_coverage_moments() {
        let claim = exp1();
        let xi = 0.5;
        let contract = Contract::priced(&claim, 1.0, 0.0, xi).unwrap();
        let r = simulate(&contract, &claim, &SimConfig::new(100_000, 12), 0.0, 3.0).unwrap();
        assert!((r.mean_xi() - (3.0 + xi)).abs() <= 3.0 * r.insurer.se_mean());
        assert!((r.var_xi() - 2.0).abs() <= 3.0 * r.insurer.se_variance());
        assert!(r.var_xc() < 1e-20);
    }

    #[test]
    fn zero_horizon_is_degenerate() {
        let claim = exp1();
        let contract = Contract::priced(&claim, 1.0, 1.0, 0.3).unwrap();
        let cfg = SimConfig { horizon_t: 0.0, ..SimConfig::new(1000, 3) };
        let r = simulate(&contract, &claim, &cfg, 7.0, 2.0).unwrap();
        assert_eq!(r.mean_xc(), 7.0);
        assert_eq!(r.var_xc(), 0.0);
        assert_eq!(r.mean_xi(), 2.0);
        assert_eq!(r.mean_claims, 0.0);
    }

    #[test]
    fn identical_seeds_are_bitwise_identical() {
        let claim = ClaimDistribution::pareto(3.0, 3.0).unwrap();
        let contract = Contract::priced(&claim, 1.0, 4.0, 0.8).unwrap();
        let cfg = SimConfig::new(20_000, 99);
        let a = simulate(&contract, &claim, &cfg, 1.0, 1.0).unwrap();
        let b = simulate(&contract, &claim, &cfg, 1.0, 1.0).unwrap();
        assert_eq!(a, b);
        let c = simulate(&contract, &claim, &SimConfig { seed: 100, ..cfg }, 1.0, 1.0).unwrap();
        assert_ne!(a.customer.mean, c.customer.mean);
    }

    #[test]
    fn parallel_matches_serial() {
        let claim = exp1();
        let contract = Contract::priced(&claim, 1.0, 0.7, 0.4).unwrap();
        let cfg = SimConfig::new(2_000, 5);
        let par = simulate(&contract, &claim, &cfg, 0.0, 0.0).unwrap();
        let serial: Vec<f64> = (0..cfg.n_paths as u64)
            .map(|k| simulate_path(&contract, &claim, 1.0, 1.0, 0.0, 0.0, &mut path_rng(cfg.seed, k)).unwrap().x_c)
            .collect();
        assert_eq!(par.customer, SampleMoments::from_values(&serial));
    }

    #[test]
    fn standard_error_halves_with_four_times_paths() {
        let claim = exp1();
        let contract = Contract::priced(&claim, 1.0, 1.0, 0.5).unwrap();
        for trial in 0..10 {
            let small = simulate(&contract, &claim, &SimConfig::new(20_000, trial), 0.0, 0.0).unwrap();
            let large = simulate(&contract, &claim, &SimConfig::new(40_000, 1000 + trial), 0.0, 0.0).unwrap();
            let ratio = large.customer.se_mean() / small.customer.se_mean();
            assert!((0.65..=0.75).contains(&ratio), "trial {trial} ratio {ratio}");
        }
    }

    #[test]
    fn validation_at_the_benchmark_contract() {
        let claim = exp1();
        let contract = Contract::priced(&claim, 1.0, 1.2, 6.0).unwrap();
        let market = MarketParams::default();
        let cfg = SimConfig::from_market(&market, 100_000, 21);
        let report = validate_analytic(&contract, &claim, 5.0, &cfg, &market).unwrap();
        assert!(report.passed(), "{report:?}");
        assert!(report.clone().into_result().is_ok());
    }

    #[test]
    fn zero_coverage_reduces_to_no_insurance() {
        let claim = exp1();
        let market = MarketParams::default();
        let cfg = SimConfig::from_market(&market, 50_000, 8);
        let report = validate_analytic(&Contract::no_insurance(), &claim, 5.0, &cfg, &market).unwrap();
        assert_relative_eq!(report.customer.analytic, -1.0 - 2.5 * 2.0, epsilon = 1e-12);
        assert_eq!(report.insurer.analytic, 0.0);
        assert_eq!(report.insurer.z, 0.0);
        assert!(report.passed());
    }

    #[test]
    fn wrong_analytic_value_is_detected() {
        let claim = exp1();
        let mut contract = Contract::priced(&claim, 1.0, 0.5, 1.0).unwrap();
        let market = MarketParams::default();
        let cfg = SimConfig::from_market(&market, 50_000, 4);
        // Charge twice the price on the simulated side only.
        let honest = validate_analytic(&contract, &claim, 2.0, &cfg, &market).unwrap();
        contract.premium_rate *= 2.0;
        let sim = simulate(&contract, &claim, &cfg, 0.0, 0.0).unwrap();
        let z = (sim.customer.mean_variance(2.0) - honest.customer.analytic) / sim.customer.se_mean_variance(2.0);
        assert!(z.abs() > VALIDATION_Z);
    }

    #[test]
    fn config_rejects_bad_fields() {
        assert!(SimConfig::new(0, 1).validate().is_err());
        assert!(SimConfig { lambda: -1.0, ..SimConfig::new(1, 1) }.validate().is_err());
        assert!(SimConfig { horizon_t: f64::NAN, ..SimConfig::new(1, 1) }.validate().is_err());
    }

    #[test]
    fn moments_of_a_small_sample() {
        let m = SampleMoments::from_values(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert_relative_eq!(m.m2, 1.25);
        assert_relative_eq!(m.m3, 0.0);
        assert_relative_eq!(m.variance(), 5.0 / 3.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn surplus_is_conserved_on_every_path(
            d in 0.0f64..5.0,
            loading in 0.0f64..3.0,
            seed in any::<u64>(),
            x_c in -10.0f64..10.0,
            x_i in -10.0f64..10.0,
        ) {
            let claim = ClaimDistribution::pareto(3.0, 3.0).unwrap();
            let contract = Contract::priced(&claim, 2.0, d, loading).unwrap();
            for k in 0..50 {
                let o = simulate_path(&contract, &claim, 2.0, 1.0, x_c, x_i, &mut path_rng(seed, k)).unwrap();
                let gap = (o.x_c + o.x_i - (x_c + x_i - o.total_loss)).abs();
                prop_assert!(gap <= 1e-10 * (1.0 + o.total_loss + x_c.abs() + x_i.abs()));
            }
        }

        #[test]
        fn variances_are_nonnegative(values in prop::collection::vec(-1e3f64..1e3, 1..50)) {
            let m = SampleMoments::from_values(&values);
            prop_assert!(m.variance() >= 0.0);
            prop_assert!(m.se_variance() >= 0.0);
        }
    }
}
