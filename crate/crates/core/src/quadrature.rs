//! Adaptive Gauss-Kronrod (7/15) integration.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
// Gauss weights for nodes XGK[1], XGK[3], XGK[5], XGK[7]
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

const MAX_DEPTH: usize = 60;

fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let mut total = 0.0;
    let mut worst = 0.0f64;
    let mut stack = vec![(a, b, tol, 0usize)];
    while let Some((lo, hi, eps, depth)) = stack.pop() {
        let (val, err) = gk15(&mut f, lo, hi);
        if err <= eps || depth >= MAX_DEPTH || (hi - lo).abs() < 1e-14 * (1.0 + lo.abs()) {
            if err > eps {
                worst = worst.max(err);
            }
            total += val;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, 0.5 * eps, depth + 1));
            stack.push((mid, hi, 0.5 * eps, depth + 1));
        }
    }
    if worst > tol {
        return Err(Error::Quadrature { requested: tol, achieved: worst });
    }
    Ok(total)
}

/// Integrates `f` over `[a, infinity)` via `t = a + x / (1 - x)`.
pub fn integrate_to_infinity(mut f: impl FnMut(f64) -> f64, a: f64, tol: f64) -> Result<f64> {
    integrate(
        |x| {
            if x >= 1.0 {
                return 0.0;
            }
            let one_minus = 1.0 - x;
            let v = f(a + x / one_minus) / (one_minus * one_minus);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        tol,
    )
}

/// Integrates `f` over the whole real line, split at `center`.
pub fn integrate_real_line(mut f: impl FnMut(f64) -> f64, center: f64, tol: f64) -> Result<f64> {
    let right = integrate_to_infinity(&mut f, center, 0.5 * tol)?;
    let left = integrate_to_infinity(|t| f(2.0 * center - t), center, 0.5 * tol)?;
    Ok(left + right)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn polynomials_and_exponentials() {
        assert_abs_diff_eq!(integrate(|x| x * x, 0.0, 3.0, 1e-12).unwrap(), 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(integrate(|x| x.sin(), 0.0, std::f64::consts::PI, 1e-12).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(integrate_to_infinity(|t| (-2.0 * t).exp(), 0.0, 1e-12).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_over_real_line() {
        let norm = (2.0 * std::f64::consts::PI).sqrt();
        let v = integrate_real_line(|x| (-0.5 * (x - 1.0) * (x - 1.0)).exp() / norm, 0.3, 1e-12).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-11);
    }

    #[test]
    fn kink_is_resolved() {
        let v = integrate(|x: f64| x.abs(), -1.0, 2.0, 1e-12).unwrap();
        assert_abs_diff_eq!(v, 2.5, epsilon = 1e-12);
    }
}
