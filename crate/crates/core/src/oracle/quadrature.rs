//! Globally adaptive Gauss–Kronrod (7, 15) quadrature.

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
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Kronrod estimate and `|K15 - G7|` on `[a, b]`.
pub fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for k in 0..7 {
        let x = h * XGK[k];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[k] * s;
        if k % 2 == 1 {
            gauss += WG[k / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// `∫_a^b f` to `max(abs_tol, rel_tol |I|)` by repeatedly bisecting the
/// interval with the largest error estimate.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    const MAX_INTERVALS: usize = 4000;
    let (v, e) = gauss_kronrod(&f, a, b);
    let mut parts = vec![(a, b, v, e)];
    let (mut total, mut error) = (v, e);
    while error > abs_tol.max(rel_tol * total.abs()) {
        if parts.len() >= MAX_INTERVALS || !total.is_finite() {
            return Err(Error::Quadrature(error));
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(k, _)| k)
            .unwrap();
        let (lo, hi, v, e) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gauss_kronrod(&f, lo, mid);
        let (v2, e2) = gauss_kronrod(&f, mid, hi);
        total += v1 + v2 - v;
        error += e1 + e2 - e;
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
        if mid <= lo || mid >= hi {
            return Err(Error::Quadrature(error));
        }
    }
    // re-sum to drop the drift of the running updates
    Ok(parts.iter().map(|p| p.2).sum())
}

/// `∫_0^∞ f(u) du` through `u = t / (1 - t)`.
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: F, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    integrate(
        |t| {
            let one_minus = 1.0 - t;
            f(t / one_minus) / (one_minus * one_minus)
        },
        0.0,
        1.0,
        abs_tol,
        rel_tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let (v, e) = gauss_kronrod(&|x: f64| x.powi(12) - 3.0 * x.powi(5), -1.0, 2.0);
        let exact = (2f64.powi(13) + 1.0) / 13.0 - 0.5 * (64.0 - 1.0);
        assert!((v - exact).abs() < 1e-11 * exact.abs());
        assert!(e < 1e-6);
    }

    #[test]
    fn adaptive_integrals() {
        let v = integrate(|x: f64| x.sqrt(), 0.0, 1.0, 1e-13, 0.0).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
        let v = integrate_half_line(|u| (-u).exp(), 1e-13, 0.0).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        let v = integrate_half_line(|u| 1.0 / (1.0 + u * u), 1e-12, 0.0).unwrap();
        assert!((v - std::f64::consts::FRAC_PI_2).abs() < 1e-11);
        let v = integrate(|x: f64| (50.0 * x).cos(), 0.0, 3.0, 1e-12, 0.0).unwrap();
        assert!((v - (150f64).sin() / 50.0).abs() < 1e-11);
    }

    #[test]
    fn divergent_integral_reports_failure() {
        assert!(matches!(integrate(|x: f64| 1.0 / x, 0.0, 1.0, 1e-12, 0.0), Err(Error::Quadrature(_))));
    }
}
