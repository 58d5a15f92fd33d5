use num_complex::Complex64;
use svnet::pricing::*;
use svnet::rng::RngKey;
use svnet::sv_sim::{CchTheta, GridSpec, Policy};

const BASE: HestonParams = HestonParams {
    a: 2.0,
    b: 0.04,
    nu: 0.3,
    rho: -0.7,
    v0: 0.04,
};

/// Two-probability form `C = x P₁ − K P₂`, integrated with composite Simpson.
fn p1_p2_call(p: &HestonParams, x: f64, k: f64, t: f64) -> (f64, f64) {
    let i = Complex64::i();
    let prob = |j: usize| {
        let (uj, bj) = if j == 1 { (0.5, p.a - p.rho * p.nu) } else { (-0.5, p.a) };
        let f = |phi: f64| {
            let nu2 = p.nu * p.nu;
            let beta = bj - p.rho * p.nu * phi * i;
            let d = (beta * beta - nu2 * (2.0 * uj * phi * i - phi * phi)).sqrt();
            let g = (beta - d) / (beta + d);
            let e = (-d * t).exp();
            let c = p.a * p.b / nu2 * ((beta - d) * t - 2.0 * ((1.0 - g * e) / (1.0 - g)).ln());
            let dd = (beta - d) / nu2 * (1.0 - e) / (1.0 - g * e);
            let cf = (c + dd * p.v0 + i * phi * (x / k).ln()).exp();
            (cf / (i * phi)).re
        };
        // the integrand has a finite limit at 0, sampled just off the origin
        let (lo, hi, n) = (0.0, 400.0, 200_000);
        let h = (hi - lo) / n as f64;
        let mut s = f(1e-10) + f(hi);
        for m in 1..n {
            s += f(lo + m as f64 * h) * if m % 2 == 1 { 4.0 } else { 2.0 };
        }
        0.5 + s * h / 3.0 / std::f64::consts::PI
    };
    let (p1, p2) = (prob(1), prob(2));
    (x * p1 - k * p2, k * (1.0 - p2) - x * (1.0 - p1))
}

#[test]
fn heston_oracle_matches_independent_integrator() {
    for &(k, frozen) in &[(100.0, 7.615746917865295), (90.0, 13.802895753391311)] {
        let price = heston_cf_price(&BASE, 100.0, k, 1.0).unwrap();
        let (call, _) = p1_p2_call(&BASE, 100.0, k, 1.0);
        assert!((price - call).abs() < 1e-8, "{price} vs {call}");
        assert!((price - frozen).abs() < 1e-8, "{price} vs {frozen}");
    }
}

#[test]
fn heston_oracle_parity_and_limits() {
    for &k in &[80.0, 100.0, 125.0] {
        let call = heston_cf_price(&BASE, 100.0, k, 1.0).unwrap();
        let (_, put) = p1_p2_call(&BASE, 100.0, k, 1.0);
        assert!((call - put - (100.0 - k)).abs() < 1e-8);
    }
    let calm = HestonParams { nu: 1e-3, ..BASE };
    let price = heston_cf_price(&calm, 100.0, 100.0, 1.0).unwrap();
    assert!((price - 7.965170410950961).abs() < 1e-8, "{price}");
    assert!((price - bs_call(100.0, 100.0, 0.2, 1.0)).abs() < 1e-3);
    let mut last = f64::INFINITY;
    for k in (60..=140).step_by(10) {
        let c = heston_cf_price(&BASE, 100.0, k as f64, 1.0).unwrap();
        assert!(c < last && c >= (100.0 - k as f64).max(0.0));
        last = c;
    }
}

fn cch_model(nu: f64) -> ModelSpec {
    ModelSpec::Cch {
        theta: CchTheta::uniform(1, 2.0, 0.04, nu, 0.0, -0.7),
        x0: vec![100.0],
        v0: vec![0.04],
        policy: Policy::FullTruncation,
    }
}

#[test]
fn mc_near_black_scholes_and_parity() {
    let grid = GridSpec::new(1.0, 32).unwrap();
    let key = RngKey::new(11);
    let call = mc_price(&cch_model(1e-3), &PayoffSpec::Call, 100.0, grid, 40_000, key).unwrap();
    assert!((call.estimate - 7.9656).abs() < 3.0 * call.se, "{call:?}");
    let model = cch_model(0.3);
    let c = mc_price(&model, &PayoffSpec::Call, 95.0, grid, 20_000, key).unwrap();
    let p = mc_price(&model, &PayoffSpec::Put, 95.0, grid, 20_000, key).unwrap();
    // C − P = X_T − K pathwise, so the forward error is the mean of X_T − x₀
    let fwd = mc_price(&model, &PayoffSpec::Call, 0.0, grid, 20_000, key).unwrap();
    assert!((c.estimate - p.estimate - (fwd.estimate - 95.0)).abs() < 1e-9);
    assert!((fwd.estimate - 100.0).abs() < 3.0 * fwd.se);
}

#[test]
fn call_is_nonincreasing_in_strike_on_shared_paths() {
    let grid = GridSpec::new(1.0, 16).unwrap();
    let key = RngKey::new(5);
    let prices: Vec<f64> = (80..=120)
        .step_by(5)
        .map(|k| mc_price(&cch_model(0.3), &PayoffSpec::Call, k as f64, grid, 5000, key).unwrap().estimate)
        .collect();
    assert!(prices.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn mc_is_deterministic_per_seed() {
    let grid = GridSpec::new(1.0, 8).unwrap();
    let a = mc_price(&cch_model(0.3), &PayoffSpec::Call, 100.0, grid, 9000, RngKey::new(3)).unwrap();
    let b = mc_price(&cch_model(0.3), &PayoffSpec::Call, 100.0, grid, 9000, RngKey::new(3)).unwrap();
    assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
}

#[test]
fn capped_prices_respect_cap() {
    use svnet::rough_vol::{RBergomiTheta, VarianceSource};
    let theta = RBergomiTheta {
        nu: 0.04,
        eta: 1.5,
        rho: -0.7,
        hurst: 0.1,
    };
    let grid = GridSpec::new(1.0, 16).unwrap();
    let payoff = PayoffSpec::CappedCall { cap: 20.0 };
    let rows = truncation_sweep(&theta, &[2.0, 5.0, 20.0], 100.0, &payoff, 100.0, grid, VarianceSource::Hybrid, 2000, RngKey::new(1))
        .unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.price <= 20.0));
    assert_eq!(rows[2].diff, 0.0);
    assert!(truncation_sweep(&theta, &[2.0], 100.0, &PayoffSpec::Call, 100.0, grid, VarianceSource::Hybrid, 10, RngKey::new(1)).is_err());
}

#[test]
fn l2_error_of_shifted_reference() {
    let mu = MeasureMu::new(1);
    let net = svnet::relu_net::linear_net(&[vec![0.0; 8]], &[0.25]).unwrap();
    let e = l2_mu_error(&|p| net.eval1(p), &|_, _| 0.0, &mu, 200, RngKey::new(2)).unwrap();
    assert!((e.rmse - 0.25).abs() < 1e-12);
    assert!(mu.moment_constant() > 1.0);
}
