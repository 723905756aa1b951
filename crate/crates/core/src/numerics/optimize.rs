use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;
const MAX_GOLDEN_ITERS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarMax {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
    /// Every evaluated point returned the same value.
    pub degenerate: bool,
}

/// Golden-section maximization of `h` on `[lo, hi]` to bracket width `tol`,
/// followed by one parabolic step through the final bracket. Returns the best
/// point actually evaluated, endpoints included.
pub fn maximize_scalar<F>(mut h: F, lo: f64, hi: f64, tol: f64) -> Result<ScalarMax>
where
    F: FnMut(f64) -> f64,
{
    try_maximize_scalar(|x| Ok(h(x)), lo, hi, tol)
}

pub fn try_maximize_scalar<F>(mut h: F, lo: f64, hi: f64, tol: f64) -> Result<ScalarMax>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Numeric(format!("invalid search interval [{lo}, {hi}]")));
    }
    let mut evaluations = 0usize;
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    let (mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut eval = |x: f64| -> Result<f64> {
        let v = h(x)?;
        if !v.is_finite() {
            return Err(Error::Numeric(format!("objective is not finite at x = {x}: {v}")));
        }
        evaluations += 1;
        vmin = vmin.min(v);
        vmax = vmax.max(v);
        if v > best.1 {
            best = (x, v);
        }
        Ok(v)
    };

    eval(lo)?;
    eval(hi)?;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    let mut iters = 0;
    while (b - a) > tol && iters < MAX_GOLDEN_ITERS {
        iters += 1;
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d)?;
        }
    }

    // Parabolic step through (c, fc), (d, fd) and the bracket midpoint.
    let m = 0.5 * (a + b);
    if m != c && m != d {
        let fm = eval(m)?;
        let mut pts = [(c, fc), (m, fm), (d, fd)];
        pts.sort_by(|p, q| p.0.total_cmp(&q.0));
        let [(x0, f0), (x1, f1), (x2, f2)] = pts;
        let num = (x1 - x0).powi(2) * (f1 - f2) - (x1 - x2).powi(2) * (f1 - f0);
        let den = (x1 - x0) * (f1 - f2) - (x1 - x2) * (f1 - f0);
        if den != 0.0 {
            let xp = x1 - 0.5 * num / den;
            if xp > a && xp < b && xp.is_finite() {
                eval(xp)?;
            }
        }
    }

    let degenerate = vmax - vmin <= 1e-15 * vmax.abs().max(1.0);
    Ok(ScalarMax { x: best.0, value: best.1, evaluations, degenerate })
}

/// Root of `f` on `[lo, hi]` by bisection, to bracket width `tol`.
pub fn bisect<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    try_bisect(|x| Ok(f(x)), lo, hi, tol)
}

pub fn try_bisect<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo <= hi) {
        return Err(Error::Numeric(format!("invalid bracket [{lo}, {hi}]")));
    }
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a)?;
    if fa == 0.0 {
        return Ok(a);
    }
    let fb = f(b)?;
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.is_nan() || fb.is_nan() || fa.signum() == fb.signum() {
        return Err(Error::Bracket { lo, hi, f_lo: fa, f_hi: fb });
    }
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m)?;
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quadratic_vertex() {
        let r = maximize_scalar(|x| -(x - 2.0) * (x - 2.0), 0.0, 5.0, 1e-9).unwrap();
        assert_abs_diff_eq!(r.x, 2.0, epsilon = 1e-7);
        assert!(!r.degenerate);
    }

    #[test]
    fn loading_objective_peak_at_six() {
        let r = maximize_scalar(|x: f64| (x - 1.0) * (-x / 5.0).exp(), 0.0, 50.0, 1e-9).unwrap();
        assert_abs_diff_eq!(r.x, 6.0, epsilon = 1e-6);
    }

    #[test]
    fn constant_objective_is_degenerate() {
        let r = maximize_scalar(|_| 3.0, 0.0, 1.0, 1e-9).unwrap();
        assert_eq!(r.value, 3.0);
        assert!(r.degenerate);
        assert!((0.0..=1.0).contains(&r.x));
    }

    #[test]
    fn boundary_maximum() {
        let r = maximize_scalar(|x| x, 0.0, 1.0, 1e-9).unwrap();
        assert_eq!(r.x, 1.0);
    }

    #[test]
    fn non_finite_objective_errors() {
        assert!(maximize_scalar(|x| if x > 0.5 { f64::NAN } else { x }, 0.0, 1.0, 1e-6).is_err());
    }

    #[test]
    fn audit_grid_never_beats_the_maximizer() {
        let h = |x: f64| (3.0 * x).sin() + 0.3 * x - 0.05 * x * x;
        let r = maximize_scalar(h, 0.0, 1.5, 1e-9).unwrap();
        for i in 0..=1000 {
            let x = 1.5 * i as f64 / 1000.0;
            assert!(r.value >= h(x) - 1e-7);
        }
    }

    #[test]
    fn bisect_examples() {
        assert_abs_diff_eq!(bisect(|x| x - 1.0, 0.0, 2.0, 1e-12).unwrap(), 1.0, epsilon = 1e-11);
        assert_abs_diff_eq!(
            bisect(|x: f64| (-x).exp() - 0.5, 0.0, 5.0, 1e-12).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-11
        );
        assert_eq!(bisect(|x| x, 0.0, 1.0, 1e-12).unwrap(), 0.0);
    }

    #[test]
    fn bisect_without_sign_change() {
        assert!(matches!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-9), Err(Error::Bracket { .. })));
    }
}
