use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 50;
const INITIAL_PANELS: usize = 4;
const TAIL_POWER: i32 = 6;

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
///
/// `b` may be `f64::INFINITY`; the tail beyond `c = max(a, 0) + 1` is mapped
/// onto `(0, 1]` through `y = c u^(-k)`. With `k = TAIL_POWER` a power tail
/// `y^(-a)` becomes `u^(k(a - 1) - 1)`, smooth at 0 once `a ≥ 1.5`.
pub fn integrate<F>(f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if a.is_nan() || b.is_nan() || !(tol > 0.0) {
        return Err(Error::Numeric(format!(
            "bad integration request on [{a}, {b}] with tol {tol}"
        )));
    }
    if a > b {
        return Err(Error::Numeric(format!("reversed interval [{a}, {b}]")));
    }
    if a == b {
        return Ok(0.0);
    }
    if b.is_infinite() {
        if a.is_infinite() {
            return Err(Error::Numeric("doubly infinite interval".into()));
        }
        let c = a.max(0.0) + 1.0;
        let head = if c > a {
            integrate_finite(&f, a, c, tol / 2.0)?
        } else {
            0.0
        };
        let tail = integrate_finite(
            &|u: f64| {
                if u <= 0.0 {
                    0.0
                } else {
                    let y = c * u.powi(-TAIL_POWER);
                    let v = f(y) * TAIL_POWER as f64 * y / u;
                    if v.is_finite() {
                        v
                    } else {
                        0.0
                    }
                }
            },
            0.0,
            1.0,
            tol / 2.0,
        )?;
        return Ok(head + tail);
    }
    integrate_finite(&f, a, b, tol)
}

fn integrate_finite<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let width = (b - a) / INITIAL_PANELS as f64;
    let mut total = 0.0;
    for k in 0..INITIAL_PANELS {
        let lo = a + width * k as f64;
        let hi = if k + 1 == INITIAL_PANELS { b } else { lo + width };
        let mid = 0.5 * (lo + hi);
        let (flo, fmid, fhi) = (f(lo), f(mid), f(hi));
        let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
        total += simpson_step(f, lo, hi, flo, fmid, fhi, whole, tol / INITIAL_PANELS as f64, MAX_DEPTH)?;
    }
    if total.is_finite() {
        Ok(total)
    } else {
        Err(Error::Numeric(format!("integral over [{a}, {b}] is not finite")))
    }
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return Err(Error::Numeric(format!("integrand is not finite near [{a}, {b}]")));
    }
    // Once the panel can no longer be split in floating point the estimate is final.
    if delta.abs() <= 15.0 * tol || lm <= a || rm >= b || m <= a || m >= b {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::Numeric(format!(
            "adaptive Simpson exceeded maximum recursion depth near [{a}, {b}]"
        )));
    }
    Ok(simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?)
}

/// The shared 64-node Gauss-Legendre rule.
pub fn gauss_legendre_64() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(NonZeroUsize::new(64).unwrap()))
}

/// Composite Simpson weights for `n` equally spaced nodes with spacing `h`.
/// An even node count closes with Simpson's 3/8 rule on the last three panels.
pub fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.0],
        2 => vec![h / 2.0; 2],
        3 => vec![h / 3.0, 4.0 * h / 3.0, h / 3.0],
        4 => vec![3.0 * h / 8.0, 9.0 * h / 8.0, 9.0 * h / 8.0, 3.0 * h / 8.0],
        _ => {
            let mut w = vec![0.0; n];
            let simpson_end = if (n - 1) % 2 == 0 { n - 1 } else { n - 4 };
            for i in (0..simpson_end).step_by(2) {
                w[i] += h / 3.0;
                w[i + 1] += 4.0 * h / 3.0;
                w[i + 2] += h / 3.0;
            }
            if simpson_end != n - 1 {
                let s = simpson_end;
                w[s] += 3.0 * h / 8.0;
                w[s + 1] += 9.0 * h / 8.0;
                w[s + 2] += 9.0 * h / 8.0;
                w[s + 3] += 3.0 * h / 8.0;
            }
            w
        }
    }
}

/// Running integral `I_j = ∫_{x_0}^{x_j} f` of samples on a uniform grid.
///
/// Even nodes use composite Simpson; odd nodes add a third-order correction
/// over the last panel, so every node carries an O(h^4) error.
pub fn cumulative_integral(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    if n == 2 {
        out[1] = 0.5 * h * (values[0] + values[1]);
        return out;
    }
    out[1] = h * (5.0 * values[0] + 8.0 * values[1] - values[2]) / 12.0;
    for j in 2..n {
        out[j] = out[j - 2] + h / 3.0 * (values[j - 2] + 4.0 * values[j - 1] + values[j]);
    }
    out
}
