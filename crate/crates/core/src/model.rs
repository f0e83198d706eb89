//! Model constants, the uncertainty set for the market price of volatility
//! risk and the truncated pricing domain.

use crate::error::{invalid, Result};

/// Risk-neutral Heston constants and the option maturity.
///
/// The real-world drift of the stock never enters a pricing equation and is
/// therefore not represented.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HestonParams {
    /// Risk-free rate.
    pub r: f64,
    /// Mean-reversion speed of the variance.
    pub kappa: f64,
    /// Long-term variance level.
    pub gamma: f64,
    /// Volatility of variance.
    pub xi: f64,
    /// Correlation between the stock and variance drivers.
    pub rho: f64,
    /// Maturity.
    pub maturity: f64,
}

impl HestonParams {
    /// The benchmark configuration of the butterfly case study.
    pub fn case_study() -> Self {
        HestonParams {
            r: 0.03,
            kappa: 7.0,
            gamma: 0.3,
            xi: 0.7,
            rho: 0.5,
            maturity: 0.5,
        }
    }

    /// `2κγ ≥ ξ²`: the variance process stays strictly positive.
    pub fn feller_satisfied(&self) -> bool {
        2.0 * self.kappa * self.gamma >= self.xi * self.xi
    }

    fn check(&self) -> Result<()> {
        let finite = [self.r, self.kappa, self.gamma, self.xi, self.rho, self.maturity]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return invalid("non-finite model parameter");
        }
        if self.xi <= 0.0 {
            return invalid("xi must be positive");
        }
        if self.kappa <= 0.0 {
            return invalid("kappa must be positive");
        }
        if self.gamma < 0.0 {
            return invalid("gamma must be nonnegative");
        }
        if self.maturity <= 0.0 {
            return invalid("T must be positive");
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return invalid("rho out of (-1,1)");
        }
        Ok(())
    }
}

/// The interval `[lambda_min, lambda_max]` of admissible market prices of
/// volatility risk together with the size of its finite discretization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInterval {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub n_points: usize,
}

impl ControlInterval {
    /// Interval discretized by its two endpoints.
    pub fn new(lambda_min: f64, lambda_max: f64) -> Self {
        ControlInterval {
            lambda_min,
            lambda_max,
            n_points: 2,
        }
    }

    pub fn singleton(lambda: f64) -> Self {
        ControlInterval::new(lambda, lambda)
    }

    /// Symmetric interval of the given diameter around `center`.
    pub fn centered(center: f64, diameter: f64) -> Self {
        ControlInterval::new(center - 0.5 * diameter, center + 0.5 * diameter)
    }

    pub fn with_points(self, n_points: usize) -> Self {
        ControlInterval { n_points, ..self }
    }

    pub fn diameter(&self) -> f64 {
        self.lambda_max - self.lambda_min
    }

    pub fn contains(&self, lambda: f64) -> bool {
        lambda >= self.lambda_min && lambda <= self.lambda_max
    }

    /// `true` if `other` lies inside this interval.
    pub fn covers(&self, other: &ControlInterval) -> bool {
        self.contains(other.lambda_min) && self.contains(other.lambda_max)
    }

    /// Ascending control values. Both endpoints are always present and a
    /// degenerate interval yields a single value.
    pub fn points(&self) -> Vec<f64> {
        if self.lambda_min == self.lambda_max || self.n_points < 2 {
            return vec![self.lambda_min];
        }
        let n = self.n_points;
        let step = self.diameter() / (n - 1) as f64;
        let mut pts: Vec<f64> = (0..n).map(|k| self.lambda_min + step * k as f64).collect();
        pts[n - 1] = self.lambda_max;
        pts
    }

    fn check(&self) -> Result<()> {
        if !self.lambda_min.is_finite() || !self.lambda_max.is_finite() {
            return invalid("non-finite control bound");
        }
        if self.lambda_min > self.lambda_max {
            return invalid("empty control interval");
        }
        if self.n_points == 0 {
            return invalid("control discretization needs at least one point");
        }
        Ok(())
    }
}

/// Truncated rectangle `[s_min, s_max] × [0, v_max]` in (price, variance).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedDomain {
    pub s_min: f64,
    pub s_max: f64,
    pub v_max: f64,
}

impl TruncatedDomain {
    pub fn case_study() -> Self {
        TruncatedDomain {
            s_min: 1.0,
            s_max: 100.0,
            v_max: 3.0,
        }
    }

    pub fn contains(&self, s: f64, v: f64) -> bool {
        s >= self.s_min && s <= self.s_max && v >= 0.0 && v <= self.v_max
    }

    fn check(&self) -> Result<()> {
        if !(self.s_min > 0.0) {
            return invalid("s_min must be positive");
        }
        if !(self.s_min < self.s_max) || !self.s_max.is_finite() {
            return invalid("s_min must be below s_max");
        }
        if !(self.v_max > 0.0) || !self.v_max.is_finite() {
            return invalid("v_max must be positive");
        }
        Ok(())
    }
}

/// A validated (params, domain, control) triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Problem {
    pub params: HestonParams,
    pub domain: TruncatedDomain,
    pub control: ControlInterval,
}

/// Checks every invariant and returns the description unchanged.
pub fn validate(
    params: HestonParams,
    domain: TruncatedDomain,
    control: ControlInterval,
) -> Result<Problem> {
    params.check()?;
    domain.check()?;
    control.check()?;
    if !params.feller_satisfied() {
        log::warn!(
            "Feller condition violated: 2*kappa*gamma = {} < xi^2 = {}",
            2.0 * params.kappa * params.gamma,
            params.xi * params.xi
        );
    }
    Ok(Problem {
        params,
        domain,
        control,
    })
}

impl Problem {
    pub fn case_study() -> Self {
        validate(
            HestonParams::case_study(),
            TruncatedDomain::case_study(),
            ControlInterval::new(-2.4, -1.6),
        )
        .expect("case study parameters are valid")
    }

    pub fn revalidate(self) -> Result<Problem> {
        validate(self.params, self.domain, self.control)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn case_study_is_valid() {
        let p = validate(
            HestonParams::case_study(),
            TruncatedDomain::case_study(),
            ControlInterval::new(-2.4, -1.6),
        )
        .unwrap();
        assert_eq!(p.params.maturity, 0.5);
        assert!(p.params.feller_satisfied());
    }

    #[test]
    fn rho_on_boundary_rejected() {
        let params = HestonParams {
            rho: 1.0,
            ..HestonParams::case_study()
        };
        let err = validate(params, TruncatedDomain::case_study(), ControlInterval::new(-2.4, -1.6))
            .unwrap_err();
        assert_eq!(err, Error::InvalidInput("rho out of (-1,1)".into()));
    }

    #[test]
    fn reversed_interval_rejected() {
        let err = validate(
            HestonParams::case_study(),
            TruncatedDomain::case_study(),
            ControlInterval::new(-1.6, -2.4),
        )
        .unwrap_err();
        assert_eq!(err.to_string(), "empty control interval");
    }

    #[test]
    fn first_violation_is_reported() {
        let params = HestonParams {
            xi: -1.0,
            rho: 2.0,
            ..HestonParams::case_study()
        };
        let err = validate(params, TruncatedDomain::case_study(), ControlInterval::new(0.0, 0.0))
            .unwrap_err();
        assert_eq!(err.to_string(), "xi must be positive");
    }

    #[test]
    fn bad_domain_rejected() {
        let dom = TruncatedDomain {
            s_min: 0.0,
            ..TruncatedDomain::case_study()
        };
        assert!(validate(HestonParams::case_study(), dom, ControlInterval::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn validate_is_idempotent() {
        let p = Problem::case_study();
        assert_eq!(p.revalidate().unwrap(), p);
    }

    #[test]
    fn two_point_discretization_is_endpoints() {
        let c = ControlInterval::new(-2.4, -1.6);
        assert_eq!(c.points(), vec![-2.4, -1.6]);
        let five = c.with_points(5).points();
        assert_eq!(five.len(), 5);
        assert_eq!(five[0], -2.4);
        assert_eq!(five[4], -1.6);
        assert_eq!(ControlInterval::singleton(-2.4).with_points(5).points(), vec![-2.4]);
    }

    #[test]
    fn feller_violation_is_not_an_error() {
        let params = HestonParams {
            gamma: 0.01,
            ..HestonParams::case_study()
        };
        assert!(!params.feller_satisfied());
        assert!(validate(params, TruncatedDomain::case_study(), ControlInterval::new(0.0, 0.0)).is_ok());
    }
}
