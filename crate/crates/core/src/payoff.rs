//! Terminal pay-off profiles.

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PayoffKind {
    Call,
    Butterfly,
    Straddle,
}

impl PayoffKind {
    pub fn name(&self) -> &'static str {
        match self {
            PayoffKind::Call => "call",
            PayoffKind::Butterfly => "butterfly",
            PayoffKind::Straddle => "straddle",
        }
    }
}

impl std::str::FromStr for PayoffKind {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "call" => Ok(PayoffKind::Call),
            "butterfly" => Ok(PayoffKind::Butterfly),
            "straddle" => Ok(PayoffKind::Straddle),
            other => invalid(format!("unknown payoff kind '{other}'")),
        }
    }
}

/// Piecewise-linear European pay-off `Λ(S)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Payoff {
    kind: PayoffKind,
    strike: f64,
    half_width: f64,
}

#[inline]
fn call(s: f64, k: f64) -> f64 {
    (s - k).max(0.0)
}

/// Right derivative of `max(0, S - K)`.
#[inline]
fn call_slope(s: f64, k: f64) -> f64 {
    if s >= k {
        1.0
    } else {
        0.0
    }
}

impl Payoff {
    pub fn call(strike: f64) -> Result<Self> {
        Self::new(PayoffKind::Call, strike, 0.0)
    }

    /// Long butterfly of width `2a` centred at `strike`.
    pub fn butterfly(strike: f64, a: f64) -> Result<Self> {
        Self::new(PayoffKind::Butterfly, strike, a)
    }

    pub fn straddle(strike: f64) -> Result<Self> {
        Self::new(PayoffKind::Straddle, strike, 0.0)
    }

    /// `half_width` is ignored unless `kind` is a butterfly.
    pub fn new(kind: PayoffKind, strike: f64, half_width: f64) -> Result<Self> {
        if !(strike > 0.0) || !strike.is_finite() {
            return invalid("strike must be positive");
        }
        let half_width = match kind {
            PayoffKind::Butterfly => {
                if !(half_width > 0.0 && half_width < strike) {
                    return invalid("butterfly half-width must lie in (0, K)");
                }
                half_width
            }
            _ => 0.0,
        };
        Ok(Payoff {
            kind,
            strike,
            half_width,
        })
    }

    pub fn kind(&self) -> PayoffKind {
        self.kind
    }

    pub fn strike(&self) -> f64 {
        self.strike
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn evaluate(&self, s: f64) -> f64 {
        let k = self.strike;
        match self.kind {
            PayoffKind::Call => call(s, k),
            PayoffKind::Butterfly => (self.half_width - (s - k).abs()).max(0.0),
            PayoffKind::Straddle => call(s, k) + (k - s).max(0.0),
        }
    }

    /// Right derivative `Λ'(S)`.
    pub fn slope(&self, s: f64) -> f64 {
        let k = self.strike;
        match self.kind {
            PayoffKind::Call => call_slope(s, k),
            PayoffKind::Butterfly => {
                let a = self.half_width;
                call_slope(s, k - a) - 2.0 * call_slope(s, k) + call_slope(s, k + a)
            }
            PayoffKind::Straddle => {
                if s >= k {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    /// `∂Λ(e^x)/∂x = e^x Λ'(e^x)`.
    pub fn slope_in_log_coordinate(&self, x: f64) -> f64 {
        let s = x.exp();
        s * self.slope(s)
    }

    pub fn value_at_zero(&self) -> f64 {
        self.evaluate(0.0)
    }

    pub fn asymptotic_slope(&self) -> f64 {
        match self.kind {
            PayoffKind::Call | PayoffKind::Straddle => 1.0,
            PayoffKind::Butterfly => 0.0,
        }
    }

    /// `(min Λ, max Λ)` over `[0, ∞)` restricted to `[s_lo, s_hi]`.
    pub fn range_on(&self, s_lo: f64, s_hi: f64) -> (f64, f64) {
        let mut pts = vec![s_lo, s_hi];
        let k = self.strike;
        let kinks = [k - self.half_width, k, k + self.half_width];
        pts.extend(kinks.iter().copied().filter(|&x| x > s_lo && x < s_hi));
        let vals: Vec<f64> = pts.iter().map(|&s| self.evaluate(s)).collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn butterfly_values() {
        let b = Payoff::butterfly(50.0, 20.0).unwrap();
        assert_eq!(b.evaluate(50.0), 20.0);
        assert_eq!(b.evaluate(30.0), 0.0);
        assert_eq!(b.evaluate(70.0), 0.0);
        assert_eq!(b.value_at_zero(), 0.0);
        assert_eq!(b.asymptotic_slope(), 0.0);
    }

    #[test]
    fn call_values() {
        let c = Payoff::call(50.0).unwrap();
        assert_eq!(c.evaluate(60.0), 10.0);
        assert_eq!(c.evaluate(40.0), 0.0);
        assert_eq!(c.asymptotic_slope(), 1.0);
    }

    #[test]
    fn straddle_is_absolute_distance() {
        let s = Payoff::straddle(50.0).unwrap();
        assert_eq!(s.evaluate(45.0), 5.0);
        assert_eq!(s.evaluate(58.0), 8.0);
        assert_eq!(s.value_at_zero(), 50.0);
        assert_eq!(s.asymptotic_slope(), 1.0);
    }

    #[test]
    fn log_slopes() {
        let b = Payoff::butterfly(50.0, 20.0).unwrap();
        assert_eq!(b.slope_in_log_coordinate(100f64.ln()), 0.0);
        let c = Payoff::call(50.0).unwrap();
        approx::assert_relative_eq!(c.slope_in_log_coordinate(100f64.ln()), 100.0, max_relative = 1e-14);
        assert_eq!(c.slope_in_log_coordinate(40f64.ln()), 0.0);
    }

    #[test]
    fn kink_uses_right_derivative() {
        let c = Payoff::call(50.0).unwrap();
        assert_eq!(c.slope(50.0), 1.0);
        let b = Payoff::butterfly(50.0, 20.0).unwrap();
        assert_eq!(b.slope(50.0), -1.0);
        assert_eq!(b.slope(30.0), 1.0);
        assert_eq!(b.slope(70.0), 0.0);
    }

    #[test]
    fn invalid_parameters() {
        assert!(Payoff::call(0.0).is_err());
        assert!(Payoff::butterfly(50.0, 50.0).is_err());
        assert!(Payoff::butterfly(50.0, 0.0).is_err());
        assert!("put".parse::<PayoffKind>().is_err());
    }

    #[test]
    fn range_on_domain() {
        let b = Payoff::butterfly(50.0, 20.0).unwrap();
        assert_eq!(b.range_on(1.0, 100.0), (0.0, 20.0));
    }

    proptest! {
        #[test]
        fn butterfly_is_call_combination(s in 0.0f64..200.0, k in 10.0f64..100.0, frac in 0.05f64..0.95) {
            let a = k * frac;
            let b = Payoff::butterfly(k, a).unwrap();
            let c = |strike: f64| Payoff::call(strike).unwrap().evaluate(s);
            let combo = c(k - a) - 2.0 * c(k) + c(k + a);
            prop_assert!((b.evaluate(s) - combo).abs() < 1e-12);
        }

        #[test]
        fn butterfly_support_and_bounds(s in 0.0f64..200.0) {
            let b = Payoff::butterfly(50.0, 20.0).unwrap();
            let v = b.evaluate(s);
            prop_assert!((0.0..=20.0).contains(&v));
            if !(30.0..=70.0).contains(&s) {
                prop_assert_eq!(v, 0.0);
            }
        }

        #[test]
        fn payoffs_nonnegative_and_lipschitz(s in 0.0f64..200.0, ds in 0.0f64..5.0) {
            for p in [Payoff::call(50.0).unwrap(), Payoff::butterfly(50.0, 20.0).unwrap(), Payoff::straddle(50.0).unwrap()] {
                prop_assert!(p.evaluate(s) >= 0.0);
                prop_assert!((p.evaluate(s + ds) - p.evaluate(s)).abs() <= ds + 1e-12);
            }
        }
    }
}
