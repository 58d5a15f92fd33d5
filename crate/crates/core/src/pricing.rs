//! Payoffs, Monte Carlo pricing, closed-form oracles and convergence sweeps.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::approx_blocks::CchBoxes;
use crate::error::SimError;
use crate::quad::GaussLegendre;
use crate::relu_net::{AffineLayer, ReluNetwork};
use crate::rng::{uniform, RngKey};
use crate::rough_vol::{simulate_rbergomi, RBergomiSampler, RBergomiTheta, VarianceSource};
use crate::stats::{chunked_moments, chunked_vec_moments, Moments};
use crate::sv_sim::{cch_bundle, euler_terminal, CchField, CchTheta, DomainBox, GridSpec, Policy};

/// European payoff `φ(x, K)` with a scalar strike.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PayoffSpec {
    Call,
    Put,
    BasketCall { weights: Vec<f64> },
    CappedCall { cap: f64 },
}

impl PayoffSpec {
    /// Number of asset inputs.
    pub fn assets(&self) -> usize {
        match self {
            Self::BasketCall { weights } => weights.len(),
            _ => 1,
        }
    }

    pub fn is_bounded(&self) -> bool {
        matches!(self, Self::CappedCall { .. })
    }

    pub fn value(&self, x: &[f64], k: f64) -> f64 {
        match self {
            Self::Call => (x[0] - k).max(0.0),
            Self::Put => (k - x[0]).max(0.0),
            Self::BasketCall { weights } => (weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() - k).max(0.0),
            Self::CappedCall { cap } => (x[0] - k).max(0.0).min(*cap),
        }
    }
}

/// The payoff as an exact network on `(x₁, …, x_n, K)`.
pub fn payoff_net(spec: &PayoffSpec) -> ReluNetwork {
    let n = spec.assets();
    type Rows = Vec<Vec<(usize, f64)>>;
    let (hidden, out): (Rows, Rows) = match spec {
        PayoffSpec::Call => (vec![vec![(0, 1.0), (1, -1.0)]], vec![vec![(0, 1.0)]]),
        PayoffSpec::Put => (vec![vec![(0, -1.0), (1, 1.0)]], vec![vec![(0, 1.0)]]),
        PayoffSpec::BasketCall { weights } => {
            let mut row: Vec<(usize, f64)> = weights.iter().copied().enumerate().filter(|(_, w)| *w != 0.0).collect();
            row.push((n, -1.0));
            (vec![row], vec![vec![(0, 1.0)]])
        }
        PayoffSpec::CappedCall { .. } => (
            vec![vec![(0, 1.0), (1, -1.0)], vec![(0, 1.0), (1, -1.0)]],
            vec![vec![(0, 1.0), (1, -1.0)]],
        ),
    };
    let bias = match spec {
        PayoffSpec::CappedCall { cap } => vec![0.0, -cap],
        _ => vec![0.0],
    };
    let l1 = AffineLayer::from_rows(n + 1, hidden, bias).expect("payoff layer");
    let l2 = AffineLayer::from_rows(l1.out_dim(), out, vec![0.0]).expect("payoff layer");
    ReluNetwork::from_layers(vec![l1, l2]).expect("payoff net")
}

/// Independent uniform sampling measure over `(x, v, θ, K)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureMu {
    pub d: usize,
    pub boxes: CchBoxes,
    pub k: (f64, f64),
}

fn second_moment((a, b): (f64, f64)) -> f64 {
    (a * a + a * b + b * b) / 3.0
}

impl MeasureMu {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            boxes: CchBoxes::default(),
            k: (50.0, 150.0),
        }
    }

    /// Point layout `(x (d), v (d), θ (5d), K)`.
    pub fn dim(&self) -> usize {
        7 * self.d + 1
    }

    pub fn sample(&self, key: RngKey) -> Vec<f64> {
        let mut rng = key.rng();
        let b = &self.boxes;
        let d = self.d;
        let mut p = Vec::with_capacity(self.dim());
        for _ in 0..d {
            p.push(uniform(&mut rng, b.x.0, b.x.1));
        }
        for _ in 0..d {
            p.push(uniform(&mut rng, b.v.0, b.v.1));
        }
        for _ in 0..d {
            for bx in [b.a, b.b, b.nu, b.rho_x, b.rho_v] {
                p.push(uniform(&mut rng, bx.0, bx.1));
            }
        }
        p.push(uniform(&mut rng, self.k.0, self.k.1));
        p
    }

    /// `∫ (1 + ‖x‖² + ‖v‖² + ‖θ‖² + ‖K‖²) dμ`, in closed form.
    pub fn moment_constant(&self) -> f64 {
        let b = &self.boxes;
        let per_asset = [b.x, b.v, b.a, b.b, b.nu, b.rho_x, b.rho_v].into_iter().map(second_moment).sum::<f64>();
        1.0 + self.d as f64 * per_asset + second_moment(self.k)
    }
}

/// Monte Carlo price with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PriceResult {
    pub estimate: f64,
    pub se: f64,
    pub paths: usize,
    pub seed: u64,
}

impl PriceResult {
    fn from_moments(m: &Moments, seed: u64) -> Self {
        Self {
            estimate: m.mean(),
            se: m.se(),
            paths: m.n,
            seed,
        }
    }
}

/// Model and initial state for [`mc_price`].
#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    Cch {
        theta: CchTheta,
        x0: Vec<f64>,
        v0: Vec<f64>,
        policy: Policy,
    },
    RBergomi {
        theta: RBergomiTheta,
        trunc: f64,
        x0: f64,
        source: VarianceSource,
        r_clamp: Option<f64>,
    },
}

/// Scheme-level Monte Carlo price `E[φ(X̂_T, K)]`. Path `i` uses the
/// substreams of `key.path(i)`.
pub fn mc_price(model: &ModelSpec, payoff: &PayoffSpec, strike: f64, grid: GridSpec, paths: usize, key: RngKey) -> Result<PriceResult, SimError> {
    if paths < 2 {
        return Err(SimError::Invalid("at least two paths required".into()));
    }
    let m = match model {
        ModelSpec::Cch { theta, x0, v0, policy } => {
            theta.validate()?;
            let d = theta.d();
            if payoff.assets() != d || x0.len() != d || v0.len() != d {
                return Err(SimError::Invalid("payoff, state and θ dimensions differ".into()));
            }
            let field = CchField {
                theta: theta.clone(),
                truncate: *policy == Policy::FullTruncation,
            };
            let run = |i: usize| -> Result<f64, SimError> {
                let bundle = cch_bundle(key.path(i as u64), grid, d);
                let (x, _) = euler_terminal(&field, x0, v0, &bundle, *policy)?;
                Ok(payoff.value(&x, strike))
            };
            run(0)?;
            chunked_moments(paths, |i| run(i).unwrap_or(f64::NAN))
        }
        ModelSpec::RBergomi {
            theta,
            trunc,
            x0,
            source,
            r_clamp,
        } => {
            theta.validate()?;
            if payoff.assets() != 1 {
                return Err(SimError::Invalid("rough Bergomi is a one-asset model".into()));
            }
            let sampler = RBergomiSampler::new(grid, theta.hurst, *source)?;
            chunked_moments(paths, |i| {
                let draw = sampler.draw(key.path(i as u64));
                let p = simulate_rbergomi(theta, *trunc, *x0, grid, &draw, *r_clamp);
                payoff.value(&p.x[grid.steps..], strike)
            })
        }
    };
    if !m.mean().is_finite() {
        return Err(SimError::NonFinite { path: 0, step: grid.steps });
    }
    Ok(PriceResult::from_moments(&m, key.master))
}

/// Standard normal distribution function.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Black–Scholes call with zero rates.
pub fn bs_call(x: f64, k: f64, sigma: f64, t: f64) -> f64 {
    let s = sigma * t.sqrt();
    if s == 0.0 {
        return (x - k).max(0.0);
    }
    let d1 = ((x / k).ln() + 0.5 * s * s) / s;
    x * norm_cdf(d1) - k * norm_cdf(d1 - s)
}

/// Heston parameters for [`heston_cf_price`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HestonParams {
    pub a: f64,
    pub b: f64,
    pub nu: f64,
    pub rho: f64,
    pub v0: f64,
}

impl HestonParams {
    /// `E[exp(iu log(X_T/X_0))]` in the rotation-count-free form.
    pub fn cf(&self, u: Complex64, t: f64) -> Complex64 {
        let i = Complex64::i();
        let nu2 = self.nu * self.nu;
        let xi = self.a - self.rho * self.nu * i * u;
        let d = (xi * xi + nu2 * (i * u + u * u)).sqrt();
        let g = (xi - d) / (xi + d);
        let e = (-d * t).exp();
        let c = self.a * self.b / nu2 * ((xi - d) * t - 2.0 * ((1.0 - g * e) / (1.0 - g)).ln());
        let dd = (xi - d) / nu2 * (1.0 - e) / (1.0 - g * e);
        (c + dd * self.v0).exp()
    }
}

/// Call price from the single-integral representation
/// `C = x − √(xK)/π ∫₀^∞ Re[e^{iuκ} φ(u − i/2)] / (u² + ¼) du`, `κ = log(x/K)`,
/// on `[0, U]` with 512 Gauss–Legendre nodes. `U` is doubled until the
/// integrand stays below `1e−10` on `[U, 2U]`.
pub fn heston_cf_price(p: &HestonParams, x0: f64, k: f64, t: f64) -> Result<f64, SimError> {
    if !(p.nu > 0.0 && p.a > 0.0 && p.v0 >= 0.0 && t > 0.0 && x0 > 0.0 && k > 0.0) {
        return Err(SimError::Invalid(format!("Heston oracle inputs {p:?}")));
    }
    let kappa = (x0 / k).ln();
    let f = |u: f64| {
        let z = Complex64::new(u, -0.5);
        ((Complex64::i() * u * kappa).exp() * p.cf(z, t)).re / (u * u + 0.25)
    };
    let mut upper = 25.0;
    loop {
        let tail = (0..=16).map(|j| f(upper * (1.0 + j as f64 / 16.0)).abs()).fold(0.0, f64::max);
        if tail < 1e-10 {
            break;
        }
        upper *= 2.0;
        if upper > 1e5 {
            return Err(SimError::Invalid("characteristic-function integral did not converge".into()));
        }
    }
    let integral = GaussLegendre::new(512).integrate(0.0, upper, f);
    let price = x0 - (x0 * k).sqrt() / std::f64::consts::PI * integral;
    if price.is_finite() {
        Ok(price)
    } else {
        Err(SimError::Invalid("non-finite oracle price".into()))
    }
}

/// Root-mean-square deviation under μ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct L2Error {
    pub rmse: f64,
    /// Delta-method standard error of `rmse`.
    pub se: f64,
    pub samples: usize,
}

/// `(∫ |U − U_ref|² dμ)^{1/2}` estimated from `samples` points of μ.
/// `reference` receives the point and its own stream key.
pub fn l2_mu_error(
    net: &(dyn Fn(&[f64]) -> f64 + Sync),
    reference: &(dyn Fn(&[f64], RngKey) -> f64 + Sync),
    mu: &MeasureMu,
    samples: usize,
    key: RngKey,
) -> Result<L2Error, SimError> {
    if samples < 100 {
        return Err(SimError::Invalid("l2_mu_error needs at least 100 samples".into()));
    }
    let m = chunked_moments(samples, |i| {
        let k = key.path(i as u64);
        let p = mu.sample(k.stream(0));
        let diff = net(&p) - reference(&p, k.stream(1));
        diff * diff
    });
    let rmse = m.mean().sqrt();
    let se = if rmse > 0.0 { m.se() / (2.0 * rmse) } else { 0.0 };
    Ok(L2Error { rmse, se, samples })
}

/// One row of a shared-randomness sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: f64,
    pub price: f64,
    pub se: f64,
    /// `P(param) − P(reference)` on the same paths.
    pub diff: f64,
    pub diff_se: f64,
}

fn sweep_rows(params: &[f64], m: &[Moments]) -> Vec<SweepRow> {
    let n = params.len();
    params
        .iter()
        .enumerate()
        .map(|(j, &param)| SweepRow {
            param,
            price: m[j].mean(),
            se: m[j].se(),
            diff: m[n + 1 + j].mean(),
            diff_se: m[n + 1 + j].se(),
        })
        .collect()
}

/// Truncated rough Bergomi prices for each `D`, with differences to the
/// last entry of `truncs`, all on the same draws.
#[allow(clippy::too_many_arguments)]
pub fn truncation_sweep(
    theta: &RBergomiTheta,
    truncs: &[f64],
    x0: f64,
    payoff: &PayoffSpec,
    strike: f64,
    grid: GridSpec,
    source: VarianceSource,
    paths: usize,
    key: RngKey,
) -> Result<Vec<SweepRow>, SimError> {
    if !payoff.is_bounded() {
        return Err(SimError::Invalid("truncation sweep needs a bounded payoff".into()));
    }
    if truncs.is_empty() || truncs.iter().any(|d| d.is_nan() || *d < 1.0) {
        return Err(SimError::Invalid("truncation levels must be ≥ 1".into()));
    }
    theta.validate()?;
    let sampler = RBergomiSampler::new(grid, theta.hurst, source)?;
    let n = truncs.len();
    let m = chunked_vec_moments(paths, 2 * n + 1, |i| {
        let draw = sampler.draw(key.path(i as u64));
        let prices: Vec<f64> = truncs
            .iter()
            .map(|&d| payoff.value(&simulate_rbergomi(theta, d, x0, grid, &draw, None).x[grid.steps..], strike))
            .collect();
        paired(prices)
    });
    Ok(sweep_rows(truncs, &m))
}

/// Prices, the reference (last), then differences to the reference.
fn paired(prices: Vec<f64>) -> Vec<f64> {
    let r = *prices.last().unwrap();
    let mut out = prices.clone();
    out.push(r);
    out.extend(prices.iter().map(|p| p - r));
    out
}

/// Stopped CCH prices for boxes `base.scaled(x₀, v₀, s)`, with differences to
/// the unstopped full-truncation price on the same paths (the last row,
/// reported with `param = ∞`).
#[allow(clippy::too_many_arguments)]
pub fn stopped_domain_sweep(
    theta: &CchTheta,
    x0: &[f64],
    v0: &[f64],
    payoff: &PayoffSpec,
    strike: f64,
    grid: GridSpec,
    base: DomainBox,
    scales: &[f64],
    paths: usize,
    key: RngKey,
) -> Result<Vec<SweepRow>, SimError> {
    theta.validate()?;
    let d = theta.d();
    if payoff.assets() != d || x0.len() != d || v0.len() != d {
        return Err(SimError::Invalid("payoff, state and θ dimensions differ".into()));
    }
    let stopped = CchField {
        theta: theta.clone(),
        truncate: false,
    };
    let truncated = CchField {
        theta: theta.clone(),
        truncate: true,
    };
    let mut params = scales.to_vec();
    params.push(f64::INFINITY);
    let n = params.len();
    let run = |i: usize| -> Result<Vec<f64>, SimError> {
        let bundle = cch_bundle(key.path(i as u64), grid, d);
        let mut prices = Vec::with_capacity(n);
        for &s in scales {
            let b = base.scaled(x0[0], v0[0], s);
            let (x, _) = euler_terminal(&stopped, x0, v0, &bundle, Policy::Stopped(b))?;
            prices.push(payoff.value(&x, strike));
        }
        let (x, _) = euler_terminal(&truncated, x0, v0, &bundle, Policy::FullTruncation)?;
        prices.push(payoff.value(&x, strike));
        Ok(paired(prices))
    };
    run(0)?;
    let m = chunked_vec_moments(paths, 2 * n + 1, |i| run(i).unwrap_or_else(|_| vec![f64::NAN; 2 * n + 1]));
    Ok(sweep_rows(&params, &m))
}
