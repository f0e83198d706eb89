//! Monte Carlo prices under the `λ`-adjusted Heston dynamics
//!
//! ```text
//! dS = r S dt + √v S dW₁
//! dv = (κ(γ - v) - ξ λ √v) dt + ξ √v dW₂,   d⟨W₁, W₂⟩ = ρ dt
//! ```
//!
//! with full-truncation Euler steps on `(ln S, v)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::model::HestonParams;
use crate::payoff::Payoff;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    /// Number of payoff evaluations, counting both members of an antithetic pair.
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub antithetic: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            n_paths: 200_000,
            n_steps: 200,
            seed: 7,
            antithetic: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub price: f64,
    pub std_error: f64,
    /// Independent samples behind the standard error.
    pub n_samples: usize,
}

const BATCH: usize = 2048;

struct Path<'a> {
    params: &'a HestonParams,
    lambda: f64,
    dt: f64,
    steps: usize,
}

impl Path<'_> {
    /// Terminal `ln S` for the shock sequence `sign * Z`.
    fn terminal(&self, x0: f64, v0: f64, shocks: &[[f64; 2]], sign: f64) -> f64 {
        let HestonParams { r, kappa, gamma, xi, rho, .. } = *self.params;
        let rho_c = (1.0 - rho * rho).sqrt();
        let sq_dt = self.dt.sqrt();
        let (mut x, mut v) = (x0, v0);
        for z in &shocks[..self.steps] {
            let (z1, z2) = (sign * z[0], sign * z[1]);
            let vp = v.max(0.0);
            let sv = vp.sqrt();
            x += (r - 0.5 * vp) * self.dt + sv * sq_dt * z1;
            v += (kappa * (gamma - vp) - xi * self.lambda * sv) * self.dt + xi * sv * sq_dt * (rho * z1 + rho_c * z2);
        }
        x
    }
}

/// Discounted expected payoff at `(s, v)` with `params.maturity` to expiry.
/// Batches are seeded from `seed` and their index, so results do not depend
/// on the thread count.
pub fn mc_price(params: &HestonParams, payoff: &Payoff, lambda: f64, s: f64, v: f64, cfg: &McConfig) -> Result<McEstimate> {
    if !(s > 0.0) || !(v >= 0.0) {
        return invalid("Monte Carlo needs s > 0 and v >= 0");
    }
    if cfg.n_steps == 0 || cfg.n_paths < 2 {
        return invalid("Monte Carlo needs at least one step and two paths");
    }
    let per_sample = if cfg.antithetic { 2 } else { 1 };
    let n_samples = cfg.n_paths / per_sample;
    let path = Path {
        params,
        lambda,
        dt: params.maturity / cfg.n_steps as f64,
        steps: cfg.n_steps,
    };
    let discount = (-params.r * params.maturity).exp();
    let x0 = s.ln();
    let n_batches = n_samples.div_ceil(BATCH);
    let sums: Vec<(f64, f64)> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(b as u64);
            let count = BATCH.min(n_samples - b * BATCH);
            let mut shocks = vec![[0.0; 2]; cfg.n_steps];
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for _ in 0..count {
                for z in shocks.iter_mut() {
                    *z = [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)];
                }
                let mut y = payoff.evaluate(path.terminal(x0, v, &shocks, 1.0).exp());
                if cfg.antithetic {
                    y = 0.5 * (y + payoff.evaluate(path.terminal(x0, v, &shocks, -1.0).exp()));
                }
                sum += y;
                sum_sq += y * y;
            }
            (sum, sum_sq)
        })
        .collect();
    let (sum, sum_sq) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = n_samples as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(McEstimate {
        price: discount * mean,
        std_error: discount * (var / n).sqrt(),
        n_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn bs_call(s: f64, k: f64, r: f64, sigma: f64, tau: f64) -> f64 {
        let n = Normal::new(0.0, 1.0).unwrap();
        let sd = sigma * tau.sqrt();
        let d1 = ((s / k).ln() + (r + 0.5 * sigma * sigma) * tau) / sd;
        s * n.cdf(d1) - k * (-r * tau).exp() * n.cdf(d1 - sd)
    }

    fn cfg(n_paths: usize, antithetic: bool) -> McConfig {
        McConfig {
            n_paths,
            n_steps: 50,
            seed: 11,
            antithetic,
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let p = HestonParams::case_study();
        let call = Payoff::call(50.0).unwrap();
        let a = mc_price(&p, &call, -1.0, 50.0, 0.09, &cfg(5000, false)).unwrap();
        let b = mc_price(&p, &call, -1.0, 50.0, 0.09, &cfg(5000, false)).unwrap();
        assert_eq!(a, b);
        let c = mc_price(&p, &call, -1.0, 50.0, 0.09, &McConfig { seed: 12, ..cfg(5000, false) }).unwrap();
        assert_ne!(a.price, c.price);
    }

    #[test]
    fn degenerate_variance_reproduces_black_scholes() {
        let p = HestonParams {
            xi: 1e-6,
            ..HestonParams::case_study()
        };
        let call = Payoff::call(50.0).unwrap();
        let est = mc_price(&p, &call, 0.0, 50.0, p.gamma, &cfg(40_000, true)).unwrap();
        let bs = bs_call(50.0, 50.0, p.r, p.gamma.sqrt(), p.maturity);
        assert!((est.price - bs).abs() < 4.0 * est.std_error, "{} ± {} vs {bs}", est.price, est.std_error);
    }

    #[test]
    fn standard_error_shrinks_like_root_n() {
        let p = HestonParams::case_study();
        let call = Payoff::call(50.0).unwrap();
        let small = mc_price(&p, &call, 0.0, 50.0, 0.09, &cfg(4000, false)).unwrap();
        let large = mc_price(&p, &call, 0.0, 50.0, 0.09, &cfg(64_000, false)).unwrap();
        let ratio = small.std_error / large.std_error;
        assert!((ratio - 4.0).abs() < 0.6, "{ratio}");
        assert!((small.price - large.price).abs() < 4.0 * small.std_error);
    }

    #[test]
    fn antithetic_reduces_variance_for_monotone_payoff() {
        let p = HestonParams::case_study();
        let call = Payoff::call(45.0).unwrap();
        let plain = mc_price(&p, &call, 0.0, 50.0, 0.09, &cfg(20_000, false)).unwrap();
        let anti = mc_price(&p, &call, 0.0, 50.0, 0.09, &cfg(20_000, true)).unwrap();
        assert_eq!(anti.n_samples, 10_000);
        assert!(anti.std_error < plain.std_error, "{} {}", anti.std_error, plain.std_error);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = HestonParams::case_study();
        let call = Payoff::call(50.0).unwrap();
        assert!(mc_price(&p, &call, 0.0, 0.0, 0.09, &cfg(100, false)).is_err());
        assert!(mc_price(&p, &call, 0.0, 50.0, 0.09, &McConfig { n_steps: 0, ..cfg(100, false) }).is_err());
    }
}
