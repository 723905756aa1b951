use crate::error::{Error, Result};

const MIN_DAMPING: f64 = 1.0 / 64.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    pub damping: f64,
    pub max_iter: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// `sup |T(x_k) - x_k|` for every iteration.
    pub history: Vec<f64>,
    /// Damping in force when the iteration stopped.
    pub damping: f64,
}

impl FixedPointOutcome {
    /// Largest ratio of successive residuals, an empirical contraction rate.
    pub fn observed_rate(&self) -> f64 {
        self.history
            .windows(2)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .fold(0.0, f64::max)
    }
}

/// Damped Picard iteration `x <- (1 - a) x + a T(x)` in the sup norm.
///
/// Stops once `sup |T(x) - x| < tol` and returns `T(x)`. The damping `a`
/// halves (down to 1/64) whenever the residual grows.
pub fn fixed_point<T>(mut op: T, init: Vec<f64>, opts: FixedPointOptions) -> Result<FixedPointOutcome>
where
    T: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::Numeric(format!("damping must lie in (0, 1], got {}", opts.damping)));
    }
    let mut damping = opts.damping;
    let mut x = init;
    let mut history = Vec::new();
    for k in 1..=opts.max_iter {
        let tx = op(&x)?;
        if tx.len() != x.len() {
            return Err(Error::Numeric(format!(
                "operator changed the curve length from {} to {}",
                x.len(),
                tx.len()
            )));
        }
        let residual = x
            .iter()
            .zip(&tx)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if !residual.is_finite() {
            return Err(Error::NoConvergence { iterations: k, residual, history });
        }
        if let Some(&prev) = history.last() {
            if residual > prev && damping > MIN_DAMPING {
                damping = (damping * 0.5).max(MIN_DAMPING);
            }
        }
        history.push(residual);
        if residual < opts.tol {
            return Ok(FixedPointOutcome { solution: tx, iterations: k, residual, history, damping });
        }
        for (xi, ti) in x.iter_mut().zip(&tx) {
            *xi = (1.0 - damping) * *xi + damping * ti;
        }
    }
    let residual = history.last().copied().unwrap_or(f64::INFINITY);
    Err(Error::NoConvergence { iterations: opts.max_iter, residual, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn opts() -> FixedPointOptions {
        FixedPointOptions { damping: 1.0, max_iter: 200, tol: 1e-10 }
    }

    #[test]
    fn identity_converges_immediately() {
        let out = fixed_point(|x| Ok(x.to_vec()), vec![1.0, 2.0, 3.0], opts()).unwrap();
        assert_eq!(out.iterations, 1);
        assert_eq!(out.residual, 0.0);
    }

    #[test]
    fn linear_contraction_reaches_two() {
        let out = fixed_point(|x| Ok(x.iter().map(|v| v / 2.0 + 1.0).collect()), vec![0.0; 4], opts())
            .unwrap();
        for v in &out.solution {
            assert_abs_diff_eq!(*v, 2.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn residual_ratio_bounded_by_lipschitz_constant() {
        // T(x) = 0.7 sin(x) + 1 has Lipschitz constant 0.7.
        let out = fixed_point(
            |x| Ok(x.iter().map(|v| 0.7 * v.sin() + 1.0).collect()),
            vec![0.0, 3.0],
            opts(),
        )
        .unwrap();
        assert!(out.observed_rate() <= 0.7 + 0.05);
        assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn non_convergence_carries_history() {
        let err = fixed_point(
            |x| Ok(x.iter().map(|v| 2.0 * v + 1.0).collect()),
            vec![0.0],
            FixedPointOptions { damping: 1.0, max_iter: 5, tol: 1e-10 },
        )
        .unwrap_err();
        match err {
            Error::NoConvergence { iterations, history, .. } => {
                assert_eq!(iterations, 5);
                assert_eq!(history.len(), 5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
