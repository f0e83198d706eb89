use heston_hjb::{heston_cf_call, mc_price, HestonParams, McConfig, Payoff};

fn mc(n_paths: usize, antithetic: bool) -> McConfig {
    McConfig {
        n_paths,
        n_steps: 100,
        seed: 3,
        antithetic,
    }
}

#[test]
fn zero_variance_is_deterministic_discounting() {
    let p = HestonParams {
        gamma: 0.0,
        ..HestonParams::case_study()
    };
    let fly = Payoff::butterfly(50.0, 20.0).unwrap();
    for s0 in [35.0, 48.0, 60.0] {
        let est = mc_price(&p, &fly, -2.4, s0, 0.0, &mc(1000, false)).unwrap();
        let forward = s0 * (p.r * p.maturity).exp();
        let exact = (-p.r * p.maturity).exp() * fly.evaluate(forward);
        assert!((est.price - exact).abs() < 1e-9, "{} vs {exact}", est.price);
        assert!(est.std_error < 1e-9);
    }
}

#[test]
fn monte_carlo_matches_characteristic_function() {
    let p = HestonParams::case_study();
    let call = Payoff::call(50.0).unwrap();
    let cf = heston_cf_call(&p, 50.0, 0.09, p.maturity, 50.0).unwrap();
    let est = mc_price(&p, &call, 0.0, 50.0, 0.09, &mc(200_000, false)).unwrap();
    assert!((est.price - cf).abs() < 3.0 * est.std_error, "{} ± {} vs {cf}", est.price, est.std_error);
}

#[test]
fn antithetic_halves_variance_in_the_money() {
    let p = HestonParams::case_study();
    let call = Payoff::call(40.0).unwrap();
    let plain = mc_price(&p, &call, 0.0, 50.0, 0.09, &mc(40_000, false)).unwrap();
    let anti = mc_price(&p, &call, 0.0, 50.0, 0.09, &mc(40_000, true)).unwrap();
    let ratio = (anti.std_error / plain.std_error).powi(2);
    assert!(ratio <= 0.5, "variance ratio {ratio}");
}

#[test]
fn put_call_parity_through_the_straddle() {
    // straddle = call + put, so call - put = 2 call - straddle
    let p = HestonParams::case_study();
    let (s0, v0, k) = (50.0, 0.09, 50.0);
    let df = (-p.r * p.maturity).exp();
    let forward_gap = s0 - k * df;
    let call_cf = heston_cf_call(&p, s0, v0, p.maturity, k).unwrap();
    let put_cf = call_cf - forward_gap;
    assert!(put_cf >= (k * df - s0).max(0.0) && put_cf <= k * df);

    let cfg = mc(100_000, false);
    let call = mc_price(&p, &Payoff::call(k).unwrap(), 0.0, s0, v0, &cfg).unwrap();
    let straddle = mc_price(&p, &Payoff::straddle(k).unwrap(), 0.0, s0, v0, &cfg).unwrap();
    let parity = 2.0 * call.price - straddle.price;
    assert!((parity - forward_gap).abs() < 3.0 * (2.0 * call.std_error + straddle.std_error));
    let straddle_cf = call_cf + put_cf;
    assert!((straddle.price - straddle_cf).abs() < 3.0 * straddle.std_error);
}

#[test]
fn characteristic_function_price_is_increasing_in_variance() {
    let p = HestonParams::case_study();
    let prices: Vec<f64> = [0.04, 0.09, 0.25, 0.5]
        .iter()
        .map(|&v| heston_cf_call(&p, 50.0, v, p.maturity, 50.0).unwrap())
        .collect();
    assert!(prices.windows(2).all(|w| w[1] > w[0]), "{prices:?}");
}
