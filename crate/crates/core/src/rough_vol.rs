//! Riemann–Liouville Volterra process, the κ = 1 hybrid scheme and the
//! truncated rough Bergomi model.
//!
//! `𝔛_t = ∫₀ᵗ (t−s)^{H−½} dB_s`. The exact oracle samples any finite family
//! of Gaussian functionals of `B` (increments and kernel integrals) through a
//! Cholesky factor of their covariance; the factor is stored sparsely so the
//! independent increments cost one multiply each.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx_blocks::{pl_approx_1d, Certified, RBergomiBoxes};
use crate::error::{ApproxError, SimError};
use crate::quad::GaussLegendre;
use crate::relu_net::{weighted_sum, ReluNetwork};
use crate::rng::{normal, RngKey};
use crate::stats::chunked_moments;
use crate::sv_sim::GridSpec;
use crate::C25;

/// A linear functional of `B`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Functional {
    /// `B_hi − B_lo`.
    Increment { lo: f64, hi: f64 },
    /// `∫_lo^hi (t−s)^{H−½} dB_s`, `hi ≤ t`.
    Kernel { t: f64, lo: f64, hi: f64 },
}

fn kernel_antiderivative(t: f64, a: f64, b: f64, p: f64) -> f64 {
    // ∫_a^b (t−r)^{p−1} dr
    ((t - a).powf(p) - (t - b).powf(p)) / p
}

/// `∫_a^b (t−r)^α (s−r)^α dr` for `b ≤ min(t, s)`, `t ≠ s`.
///
/// With `r = b − w²` the integrand becomes `2w (t−b+w²)^α (s−b+w²)^α`, which
/// is integrated on geometrically shrinking panels towards `w = 0`.
fn kernel_product_integral(t: f64, s: f64, a: f64, b: f64, alpha: f64) -> f64 {
    thread_local! {
        static GL: GaussLegendre = GaussLegendre::new(24);
    }
    let w_max = (b - a).sqrt();
    let (ct, cs) = (t - b, s - b);
    let f = |w: f64| {
        let w2 = w * w;
        2.0 * w * (ct + w2).powf(alpha) * (cs + w2).powf(alpha)
    };
    GL.with(|gl| {
        let mut total = 0.0;
        let mut hi = w_max;
        for _ in 0..80 {
            let lo = 0.5 * hi;
            total += gl.integrate(lo, hi, f);
            hi = lo;
            if hi < 1e-13 * w_max {
                break;
            }
        }
        total + gl.integrate(0.0, hi, f)
    })
}

/// Covariance of two functionals.
pub fn functional_cov(f: Functional, g: Functional, hurst: f64) -> f64 {
    use Functional::*;
    let alpha = hurst - 0.5;
    let overlap = |l1: f64, h1: f64, l2: f64, h2: f64| (l1.max(l2), h1.min(h2));
    match (f, g) {
        (Increment { lo, hi }, Increment { lo: l2, hi: h2 }) => {
            let (a, b) = overlap(lo, hi, l2, h2);
            (b - a).max(0.0)
        }
        (Kernel { t, lo, hi }, Increment { lo: l2, hi: h2 }) | (Increment { lo: l2, hi: h2 }, Kernel { t, lo, hi }) => {
            let (a, b) = overlap(lo, hi, l2, h2);
            if b <= a {
                0.0
            } else {
                kernel_antiderivative(t, a, b, hurst + 0.5)
            }
        }
        (Kernel { t, lo, hi }, Kernel { t: s, lo: l2, hi: h2 }) => {
            let (a, b) = overlap(lo, hi, l2, h2);
            if b <= a {
                0.0
            } else if alpha == 0.0 {
                b - a
            } else if t == s {
                kernel_antiderivative(t, a, b, 2.0 * hurst)
            } else {
                kernel_product_integral(t, s, a, b, alpha)
            }
        }
    }
}

/// `Cov(𝔛_t, 𝔛_s)` for `0 ≤ s ≤ t`.
pub fn volterra_cov(t: f64, s: f64, hurst: f64) -> Result<f64, SimError> {
    if !(0.0 <= s && s <= t) {
        return Err(SimError::Invalid(format!("volterra_cov needs 0 ≤ s ≤ t, got s={s}, t={t}")));
    }
    if s == 0.0 {
        return Ok(0.0);
    }
    Ok(functional_cov(
        Functional::Kernel { t, lo: 0.0, hi: t },
        Functional::Kernel { t: s, lo: 0.0, hi: s },
        hurst,
    ))
}

/// `Cov(𝔛_t, B_u − B_v)` for `0 ≤ v < u ≤ t`.
pub fn volterra_increment_cov(t: f64, u: f64, v: f64, hurst: f64) -> Result<f64, SimError> {
    if !(0.0 <= v && v < u && u <= t) {
        return Err(SimError::Invalid(format!("need 0 ≤ v < u ≤ t, got v={v}, u={u}, t={t}")));
    }
    Ok(kernel_antiderivative(t, v, u, hurst + 0.5))
}

/// Exact joint sampler of Gaussian functionals of `B`.
#[derive(Clone, Debug)]
pub struct GaussianOracle {
    /// Nonzero entries of each row of the lower Cholesky factor.
    rows: Vec<Vec<(usize, f64)>>,
}

impl GaussianOracle {
    /// Factorizes the covariance of `fs`. Pivots below `1e-12·max diag` are
    /// treated as exact linear dependence.
    pub fn new(fs: &[Functional], hurst: f64) -> Result<Self, SimError> {
        let n = fs.len();
        let cov: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (0..=i).map(|j| functional_cov(fs[i], fs[j], hurst)).collect())
            .collect();
        Self::from_cov(cov)
    }

    /// From the lower triangle of a covariance matrix.
    pub fn from_cov(cov: Vec<Vec<f64>>) -> Result<Self, SimError> {
        let n = cov.len();
        let scale = (0..n).map(|i| cov[i][i]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let tol = 1e-12 * scale;
        let mut l = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
                let v = cov[i][j] - s;
                if i == j {
                    if v < -tol {
                        return Err(SimError::NotPsd(i));
                    }
                    l[i][i] = if v <= tol { 0.0 } else { v.sqrt() };
                } else {
                    l[i][j] = if l[j][j] == 0.0 { 0.0 } else { v / l[j][j] };
                }
            }
        }
        let rows = l
            .into_iter()
            .map(|r| r.into_iter().enumerate().filter(|(_, v)| *v != 0.0).collect())
            .collect();
        Ok(Self { rows })
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// `out = L z` for standard normals `z`.
    pub fn transform(&self, z: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row.iter().map(|(j, v)| v * z[*j]).sum();
        }
    }

    pub fn sample(&self, key: RngKey) -> Vec<f64> {
        let z = key.normals(self.dim());
        let mut out = vec![0.0; self.dim()];
        self.transform(&z, &mut out);
        out
    }
}

/// Joint exact sampler of `(ΔB on a grid, 𝔛_{t₁}, …, 𝔛_{t_m})`.
#[derive(Clone, Debug)]
pub struct VolterraOracle {
    pub grid: GridSpec,
    pub times: Vec<f64>,
    pub hurst: f64,
    oracle: GaussianOracle,
}

/// One joint draw.
#[derive(Clone, Debug, PartialEq)]
pub struct VolterraSample {
    /// Grid increments `B_{t_{k+1}} − B_{t_k}`.
    pub increments: Vec<f64>,
    /// `𝔛` at the requested times.
    pub values: Vec<f64>,
}

impl VolterraOracle {
    pub fn new(times: &[f64], grid: GridSpec, hurst: f64) -> Result<Self, SimError> {
        if times.iter().any(|t| !(*t > 0.0 && *t <= grid.horizon)) {
            return Err(SimError::Invalid("times must lie in (0, T]".into()));
        }
        let mut fs: Vec<Functional> = (0..grid.steps)
            .map(|k| Functional::Increment {
                lo: grid.time(k),
                hi: grid.time(k + 1),
            })
            .collect();
        fs.extend(times.iter().map(|&t| Functional::Kernel { t, lo: 0.0, hi: t }));
        Ok(Self {
            grid,
            times: times.to_vec(),
            hurst,
            oracle: GaussianOracle::new(&fs, hurst)?,
        })
    }

    pub fn sample(&self, key: RngKey) -> VolterraSample {
        let mut all = self.oracle.sample(key);
        let values = all.split_off(self.grid.steps);
        VolterraSample { increments: all, values }
    }
}

/// Exact draws of `(𝔛_{t₁}, …)` with the grid increments.
pub fn simulate_volterra_exact(
    times: &[f64],
    grid: GridSpec,
    hurst: f64,
    key: RngKey,
    count: usize,
) -> Result<Vec<VolterraSample>, SimError> {
    let oracle = VolterraOracle::new(times, grid, hurst)?;
    Ok((0..count)
        .into_par_iter()
        .map(|i| oracle.sample(key.path(i as u64)))
        .collect())
}

/// Weights of the hybrid scheme at time `t` on `N` subgrid cells.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridWeights {
    /// `h(t)^H / √(2H)`, the scale of the last-cell integral.
    pub last: f64,
    /// `(t − t^t_k)^{H−½}` for `k = 1, …, N−1`.
    pub kernel: Vec<f64>,
}

pub fn hybrid_weights(t: f64, n: usize, hurst: f64) -> HybridWeights {
    let h = t / n as f64;
    HybridWeights {
        last: h.powf(hurst) / (2.0 * hurst).sqrt(),
        kernel: (1..n).map(|k| ((n - k) as f64 * h).powf(hurst - 0.5)).collect(),
    }
}

/// `𝔛̄_t` from the subgrid increments of cells `1..N−1` and the normal `z`.
pub fn hybrid_point(t: f64, n: usize, hurst: f64, db: &[f64], z: f64) -> f64 {
    let w = hybrid_weights(t, n, hurst);
    debug_assert_eq!(db.len(), n - 1);
    w.last * z + w.kernel.iter().zip(db).map(|(a, b)| a * b).sum::<f64>()
}

/// `(j+1)^p − j^p` without cancellation.
fn power_step(j: f64, p: f64) -> f64 {
    j.powf(p) * (p * (1.0 / j).ln_1p()).exp_m1()
}

/// `Σ_k ∫ [(t−s)^{H−½} − (t−t^t_k)^{H−½}]² ds`, the variance of `𝔛_t − 𝔛̄_t`.
pub fn hybrid_error_variance(t: f64, n: usize, hurst: f64) -> f64 {
    if n < 2 || t == 0.0 {
        return 0.0;
    }
    let h = t / n as f64;
    let a = hurst - 0.5;
    let mut s = 0.0;
    // cell k sits at distance j = N−k grid steps from t
    for j in (1..n).rev() {
        let jf = j as f64;
        s += power_step(jf, 2.0 * hurst) / (2.0 * hurst) - 2.0 * jf.powf(a) * power_step(jf, hurst + 0.5) / (hurst + 0.5)
            + jf.powf(2.0 * a);
    }
    h.powf(2.0 * hurst) * s.max(0.0)
}

/// `E|𝔛_t − 𝔛̄_t|⁴ = 3σ⁴`.
pub fn hybrid_fourth_moment_exact(t: f64, n: usize, hurst: f64) -> f64 {
    let v = hybrid_error_variance(t, n, hurst);
    3.0 * v * v
}

/// `c₂₅ h(t)^{4H}`.
pub fn hybrid_fourth_moment_bound(t: f64, n: usize, hurst: f64) -> f64 {
    C25 * (t / n as f64).powf(4.0 * hurst)
}

/// Monte Carlo estimate of `E|𝔛_t − 𝔛̄_t|⁴` with the error sampled exactly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub se: f64,
}

/// Shares each draw of `(ΔB_1, …, ΔB_{N−1}, ∫_{t_{N−1}}^t k dB, 𝔛_t)` between
/// the exact value and the hybrid scheme.
pub fn hybrid_fourth_moment_mc(t: f64, n: usize, hurst: f64, samples: usize, key: RngKey) -> Result<MomentEstimate, SimError> {
    let h = t / n as f64;
    let mut fs: Vec<Functional> = (1..n)
        .map(|k| Functional::Increment {
            lo: (k - 1) as f64 * h,
            hi: k as f64 * h,
        })
        .collect();
    fs.push(Functional::Kernel {
        t,
        lo: (n - 1) as f64 * h,
        hi: t,
    });
    fs.push(Functional::Kernel { t, lo: 0.0, hi: t });
    let oracle = GaussianOracle::new(&fs, hurst)?;
    let w = hybrid_weights(t, n, hurst);
    let dim = oracle.dim();
    let m = chunked_moments(samples, |i| {
        let mut rng = key.path(i as u64).rng();
        let z: Vec<f64> = (0..dim).map(|_| normal(&mut rng)).collect();
        let mut g = vec![0.0; dim];
        oracle.transform(&z, &mut g);
        let z_last = g[n - 1] / w.last;
        let approx = hybrid_point(t, n, hurst, &g[..n - 1], z_last);
        (g[n] - approx).powi(4)
    });
    Ok(MomentEstimate {
        mean: m.mean(),
        se: m.se(),
    })
}

/// Certified networks for the hybrid weights as functions of `H`.
#[derive(Clone, Debug)]
pub struct VolterraWeightNets {
    pub t: f64,
    pub n: usize,
    pub eps: f64,
    pub hurst_box: (f64, f64),
    pub last: Certified,
    pub kernel: Vec<Certified>,
}

impl VolterraWeightNets {
    pub fn build(t: f64, n: usize, hurst_box: (f64, f64), eps: f64) -> Result<Self, ApproxError> {
        let h = t / n as f64;
        let (lo, hi) = hurst_box;
        let last = pl_approx_1d(&move |x: f64| h.powf(x) / (2.0 * x).sqrt(), lo, hi, eps)?;
        let kernel = (1..n)
            .into_par_iter()
            .map(|k| {
                let dist = (n - k) as f64 * h;
                pl_approx_1d(&move |x: f64| dist.powf(x - 0.5), lo, hi, eps)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            t,
            n,
            eps,
            hurst_box,
            last,
            kernel,
        })
    }

    /// `𝔛̃^ε_t(H)` evaluated directly from the weight networks.
    pub fn point(&self, hurst: f64, db: &[f64], z: f64) -> f64 {
        self.last.net.eval1(&[hurst]) * z
            + self
                .kernel
                .iter()
                .zip(db)
                .map(|(c, b)| c.net.eval1(&[hurst]) * b)
                .sum::<f64>()
    }

    /// `𝔛̃^ε_t` for frozen `(ΔB, z)` as a network of `H`.
    pub fn network(&self, db: &[f64], z: f64) -> Result<ReluNetwork, SimError> {
        let mut nets = vec![self.last.net.clone()];
        nets.extend(self.kernel.iter().map(|c| c.net.clone()));
        let mut w = vec![z];
        w.extend_from_slice(db);
        Ok(weighted_sum(&nets, &w)?)
    }

    /// Bound on `|𝔛̃^ε_t(H)|` over the `H` box. The weights are log-convex in
    /// `H`, so their maxima sit at the box ends.
    pub fn bound(&self, db: &[f64], z: f64) -> f64 {
        let (lo, hi) = self.hurst_box;
        let h = self.t / self.n as f64;
        let wmax = |f: &dyn Fn(f64) -> f64| f(lo).abs().max(f(hi).abs()) + self.eps;
        let mut b = wmax(&|x| h.powf(x) / (2.0 * x).sqrt()) * z.abs();
        for (k, d) in (1..self.n).zip(db) {
            let dist = (self.n - k) as f64 * h;
            b += wmax(&|x| dist.powf(x - 0.5)) * d.abs();
        }
        b
    }
}

/// `volterra_dnn_point`: the ε-hybrid value from certified weight networks.
pub fn volterra_dnn_point(nets: &VolterraWeightNets, hurst: f64, db: &[f64], z: f64) -> f64 {
    nets.point(hurst, db, z)
}

/// Rough Bergomi parameters `(ν, η, ρ, H)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RBergomiTheta {
    pub nu: f64,
    pub eta: f64,
    pub rho: f64,
    pub hurst: f64,
}

impl RBergomiTheta {
    pub fn validate(&self) -> Result<(), SimError> {
        let ok = self.nu > 0.0 && self.eta >= 0.0 && (-1.0..=0.0).contains(&self.rho) && self.hurst > 0.0 && self.hurst <= 0.5;
        if ok {
            Ok(())
        } else {
            Err(SimError::Invalid(format!("rBergomi θ out of range: {self:?}")))
        }
    }

    pub fn within(&self, b: &RBergomiBoxes) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| (lo..=hi).contains(&v);
        inside(self.nu, b.nu) && inside(self.eta, b.eta) && inside(self.rho, b.rho) && inside(self.hurst, b.hurst)
    }

    pub fn to_vec(&self) -> [f64; 4] {
        [self.nu, self.eta, self.rho, self.hurst]
    }
}

/// `η√(H/2)𝔛 − ¼η²t^{2H}`.
pub fn variance_exponent(t: f64, theta: &RBergomiTheta, x: f64) -> f64 {
    theta.eta * (theta.hurst / 2.0).sqrt() * x - 0.25 * theta.eta * theta.eta * t.powf(2.0 * theta.hurst)
}

/// `√V^D_t = √ν · min(max(1/D, exp(exponent)), D)`.
pub fn truncated_sqrt_variance(t: f64, theta: &RBergomiTheta, trunc: f64, x: f64) -> f64 {
    theta.nu.sqrt() * variance_exponent(t, theta, x).exp().max(1.0 / trunc).min(trunc)
}

/// `D̃ = D(½ + √ν̄) + ½`.
pub fn d_tilde(trunc: f64, nu_max: f64) -> f64 {
    trunc * (0.5 + nu_max.sqrt()) + 0.5
}

/// Driver clamp level `R = √(4T log(16 C̄² ε̄⁻⁴))` for a user-supplied `C̄`.
pub fn driver_clamp_level(horizon: f64, c_bar: f64, eps_bar: f64) -> f64 {
    (4.0 * horizon * (16.0 * c_bar * c_bar * eps_bar.powi(-4)).ln()).sqrt()
}

/// Levels `(L̲, L̄)` outside which the variance clamp is active for every
/// parameter in the box and every grid time up to `horizon`.
///
/// `L̲ = −log D / (√(H̲/2) η̲)`, `L̄ = (log D + ¼η̄² max(T^{2H̲}, T^{2H̄})) / (√(H̲/2) η̲)`.
pub fn clamp_levels(boxes: &RBergomiBoxes, trunc: f64, horizon: f64) -> Result<(f64, f64), SimError> {
    let (hl, hh) = boxes.hurst;
    let (el, eh) = boxes.eta;
    if !(trunc > 1.0 && hl > 0.0 && el > 0.0) {
        return Err(SimError::Invalid("clamp levels need D > 1, H̲ > 0, η̲ > 0".into()));
    }
    let scale = (hl / 2.0).sqrt() * el;
    let lg = trunc.ln();
    let tmax = horizon.powf(2.0 * hl).max(horizon.powf(2.0 * hh));
    Ok((-lg / scale, (lg + 0.25 * eh * eh * tmax) / scale))
}

/// How `𝔛` is produced at the grid points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceSource {
    /// Joint Cholesky draw with the grid increments of `B`.
    Exact,
    /// Independent hybrid-scheme draws per grid time.
    Hybrid,
}

/// Subgrid draws of the hybrid scheme at one grid time.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridInputs {
    pub db: Vec<f64>,
    pub z: f64,
}

/// Randomness of one rough Bergomi path.
#[derive(Clone, Debug, PartialEq)]
pub struct RBergomiDraw {
    /// `𝔛` at `t₀, …, t_{N−1}` (zero at `t₀`).
    pub volterra: Vec<f64>,
    pub db: Vec<f64>,
    pub db_perp: Vec<f64>,
    /// Hybrid inputs at `t₁, …, t_{N−1}` (hybrid source only).
    pub hybrid: Vec<HybridInputs>,
}

/// Draws paths for a fixed grid and `H`.
#[derive(Clone, Debug)]
pub struct RBergomiSampler {
    pub grid: GridSpec,
    pub hurst: f64,
    exact: Option<VolterraOracle>,
}

impl RBergomiSampler {
    pub fn new(grid: GridSpec, hurst: f64, source: VarianceSource) -> Result<Self, SimError> {
        let exact = match source {
            VarianceSource::Exact => {
                let times: Vec<f64> = (1..grid.steps).map(|k| grid.time(k)).collect();
                Some(VolterraOracle::new(&times, grid, hurst)?)
            }
            VarianceSource::Hybrid => None,
        };
        Ok(Self { grid, hurst, exact })
    }

    /// Streams: 0 for `B` (or the joint exact vector), 1 for `B⊥`, `1+k` for
    /// the hybrid subgrid at `t_k`.
    pub fn draw(&self, key: RngKey) -> RBergomiDraw {
        let n = self.grid.steps;
        let sh = self.grid.h().sqrt();
        let db_perp: Vec<f64> = key.stream(1).normals(n).into_iter().map(|z| sh * z).collect();
        match &self.exact {
            Some(o) => {
                let s = o.sample(key.stream(0));
                let mut volterra = vec![0.0];
                volterra.extend(s.values);
                RBergomiDraw {
                    volterra,
                    db: s.increments,
                    db_perp,
                    hybrid: Vec::new(),
                }
            }
            None => {
                let db: Vec<f64> = key.stream(0).normals(n).into_iter().map(|z| sh * z).collect();
                let mut volterra = vec![0.0];
                let mut hybrid = Vec::with_capacity(n.saturating_sub(1));
                for k in 1..n {
                    let t = self.grid.time(k);
                    let hs = (t / n as f64).sqrt();
                    let mut z = key.stream(1 + k as u64).normals(n);
                    let last = z.pop().unwrap();
                    let sub: Vec<f64> = z.into_iter().map(|v| hs * v).collect();
                    volterra.push(hybrid_point(t, n, self.hurst, &sub, last));
                    hybrid.push(HybridInputs { db: sub, z: last });
                }
                RBergomiDraw {
                    volterra,
                    db,
                    db_perp,
                    hybrid,
                }
            }
        }
    }
}

/// Increments of `(B, B⊥)` stopped at the first grid time either leaves
/// `[−R, R]`; the crossing step is kept. Returns the first frozen cell.
pub fn stopped_increments(db: &[f64], db_perp: &[f64], r: Option<f64>) -> (Vec<f64>, Vec<f64>, Option<usize>) {
    let mut a = db.to_vec();
    let mut b = db_perp.to_vec();
    let Some(r) = r else {
        return (a, b, None);
    };
    let (mut sa, mut sb) = (0.0, 0.0);
    for k in 0..db.len() {
        sa += db[k];
        sb += db_perp[k];
        if sa.abs() > r || sb.abs() > r {
            a[k + 1..].iter_mut().for_each(|v| *v = 0.0);
            b[k + 1..].iter_mut().for_each(|v| *v = 0.0);
            return (a, b, (k + 1 < db.len()).then_some(k + 1));
        }
    }
    (a, b, None)
}

/// Path of the truncated Euler scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct RBergomiPath {
    pub x: Vec<f64>,
    pub sqrt_v: Vec<f64>,
    pub frozen_from: Option<usize>,
}

/// `X̂_{k+1} = X̂_k + X̂_k√V_k(ρΔB_k + √(1−ρ²)ΔB⊥_k)`.
pub fn simulate_rbergomi(
    theta: &RBergomiTheta,
    trunc: f64,
    x0: f64,
    grid: GridSpec,
    draw: &RBergomiDraw,
    r_clamp: Option<f64>,
) -> RBergomiPath {
    let n = grid.steps;
    let sqrt_v: Vec<f64> = (0..n)
        .map(|k| truncated_sqrt_variance(grid.time(k), theta, trunc, draw.volterra[k]))
        .collect();
    let (db, dbp, frozen_from) = stopped_increments(&draw.db, &draw.db_perp, r_clamp);
    let rbar = (1.0 - theta.rho * theta.rho).max(0.0).sqrt();
    let mut x = Vec::with_capacity(n + 1);
    x.push(x0);
    for k in 0..n {
        let xk = x[k];
        x.push(xk + xk * sqrt_v[k] * theta.rho * db[k] + xk * sqrt_v[k] * rbar * dbp[k]);
    }
    RBergomiPath { x, sqrt_v, frozen_from }
}
