//! Euler–Maruyama for the Markovian stochastic-volatility system and the
//! cross-correlated Heston model.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx_blocks::{rho_bar, CchBoxes, CchCoefficientNets};
use crate::error::SimError;
use crate::rng::{normal, RngKey};
use crate::stats::Moments;

/// Uniform time grid on `[0, T]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub horizon: f64,
    pub steps: usize,
}

impl GridSpec {
    pub fn new(horizon: f64, steps: usize) -> Result<Self, SimError> {
        if !(horizon > 0.0 && horizon.is_finite()) || steps == 0 {
            return Err(SimError::Invalid(format!("grid T={horizon}, N={steps}")));
        }
        Ok(Self { horizon, steps })
    }

    pub fn h(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// `t_k = k·T/N`, with `t_N = T` exactly.
    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.horizon / self.steps as f64
        }
    }
}

/// Coefficients of `dX = σ(X,V)dW`, `dV = μ̄(V)dt + σ̄(V)dB`.
///
/// Matrices are written row-major into `out` (`d × r`).
pub trait CoefficientField: Sync {
    /// `(d, r)`.
    fn dims(&self) -> (usize, usize);
    fn sigma(&self, x: &[f64], v: &[f64], out: &mut [f64]) -> Result<(), SimError>;
    fn mu_bar(&self, v: &[f64], out: &mut [f64]) -> Result<(), SimError>;
    fn sigma_bar(&self, v: &[f64], out: &mut [f64]) -> Result<(), SimError>;
}

/// Closure-backed field, for test models.
pub struct FnField<S, M, B> {
    pub d: usize,
    pub r: usize,
    pub sigma: S,
    pub mu_bar: M,
    pub sigma_bar: B,
}

impl<S, M, B> CoefficientField for FnField<S, M, B>
where
    S: Fn(&[f64], &[f64], &mut [f64]) + Sync,
    M: Fn(&[f64], &mut [f64]) + Sync,
    B: Fn(&[f64], &mut [f64]) + Sync,
{
    fn dims(&self) -> (usize, usize) {
        (self.d, self.r)
    }
    fn sigma(&self, x: &[f64], v: &[f64], out: &mut [f64]) -> Result<(), SimError> {
        (self.sigma)(x, v, out);
        Ok(())
    }
    fn mu_bar(&self, v: &[f64], out: &mut [f64]) -> Result<(), SimError> {
        (self.mu_bar)(v, out);
        Ok(())
    }
    fn sigma_bar(&self, v: &[f64], out: &mut [f64]) -> Result<(), SimError> {
        (self.sigma_bar)(v, out);
        Ok(())
    }
}

/// The globally Lipschitz model used for strong-error measurements:
/// `d = r = 1`, bounded smooth coefficients and correlated drivers.
pub fn lipschitz_test_model() -> impl CoefficientField {
    FnField {
        d: 1,
        r: 1,
        sigma: |x: &[f64], v: &[f64], out: &mut [f64]| out[0] = (1.0 + 0.5 * x[0].sin()) * (0.5 + 0.25 * v[0].cos()),
        mu_bar: |v: &[f64], out: &mut [f64]| out[0] = -v[0].sin(),
        sigma_bar: |v: &[f64], out: &mut [f64]| out[0] = 0.6 * (1.0 + 0.5 * v[0].cos()),
    }
}

/// Correlation between `W` and `B` used with [`lipschitz_test_model`].
pub const TEST_MODEL_CORR: f64 = -0.5;

/// Per-asset Heston parameters, laid out per asset as `(a, b, ν, ρ_X, ρ_V)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CchTheta {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub nu: Vec<f64>,
    pub rho_x: Vec<f64>,
    pub rho_v: Vec<f64>,
}

impl CchTheta {
    /// The same parameters for each of `d` assets.
    pub fn uniform(d: usize, a: f64, b: f64, nu: f64, rho_x: f64, rho_v: f64) -> Self {
        Self {
            a: vec![a; d],
            b: vec![b; d],
            nu: vec![nu; d],
            rho_x: vec![rho_x; d],
            rho_v: vec![rho_v; d],
        }
    }

    pub fn d(&self) -> usize {
        self.a.len()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let d = self.d();
        if d == 0 || [&self.b, &self.nu, &self.rho_x, &self.rho_v].iter().any(|v| v.len() != d) {
            return Err(SimError::Invalid("θ vectors must share a nonzero length".into()));
        }
        for i in 0..d {
            let ok = self.a[i] > 0.0
                && self.b[i] > 0.0
                && self.nu[i] >= 0.0
                && (-1.0..=1.0).contains(&self.rho_x[i])
                && (-1.0..=1.0).contains(&self.rho_v[i]);
            if !ok {
                return Err(SimError::Invalid(format!("θ out of range for asset {i}")));
            }
        }
        Ok(())
    }

    /// Checks membership in the parameter boxes.
    pub fn within(&self, boxes: &CchBoxes) -> bool {
        let inside = |v: &[f64], (lo, hi): (f64, f64)| v.iter().all(|x| (lo..=hi).contains(x));
        inside(&self.a, boxes.a)
            && inside(&self.b, boxes.b)
            && inside(&self.nu, boxes.nu)
            && inside(&self.rho_x, boxes.rho_x)
            && inside(&self.rho_v, boxes.rho_v)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        (0..self.d())
            .flat_map(|i| [self.a[i], self.b[i], self.nu[i], self.rho_x[i], self.rho_v[i]])
            .collect()
    }

    pub fn from_vec(theta: &[f64]) -> Result<Self, SimError> {
        if theta.is_empty() || theta.len() % 5 != 0 {
            return Err(SimError::Invalid(format!("θ length {}", theta.len())));
        }
        let col = |k: usize| theta.chunks(5).map(|c| c[k]).collect::<Vec<_>>();
        Ok(Self {
            a: col(0),
            b: col(1),
            nu: col(2),
            rho_x: col(3),
            rho_v: col(4),
        })
    }
}

/// Feller ratio of one asset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FellerReport {
    pub ratio: f64,
    /// `2ab/ν² > 0`.
    pub paper_pass: bool,
    /// `2ab/ν² ≥ 1`.
    pub classical_pass: bool,
}

pub fn feller_check(theta: &CchTheta) -> Vec<FellerReport> {
    (0..theta.d())
        .map(|i| {
            let ratio = 2.0 * theta.a[i] * theta.b[i] / (theta.nu[i] * theta.nu[i]);
            FellerReport {
                ratio,
                paper_pass: ratio > 0.0,
                classical_pass: ratio >= 1.0,
            }
        })
        .collect()
}

/// Coefficient matrices of the enlarged CCH system, driven by
/// `W = (W̃⁰, W̃¹…W̃ᵈ, B̃¹…B̃ᵈ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CchCoefficients {
    /// `d × (2d+1)`, row-major.
    pub sigma: Vec<f64>,
    pub mu_bar: Vec<f64>,
    /// `d × (2d+1)`, row-major.
    pub sigma_bar: Vec<f64>,
}

fn checked_sqrt(v: f64, truncate: bool) -> Result<f64, SimError> {
    if truncate {
        Ok(v.max(0.0).sqrt())
    } else if v >= 0.0 {
        Ok(v.sqrt())
    } else {
        Err(SimError::Invalid(format!("negative variance {v}")))
    }
}

fn cch_sigma(theta: &CchTheta, x: &[f64], v: &[f64], truncate: bool, out: &mut [f64]) -> Result<(), SimError> {
    let d = theta.d();
    let r = 2 * d + 1;
    out.fill(0.0);
    for i in 0..d {
        let s = checked_sqrt(v[i], truncate)? * x[i];
        out[i * r] = s * theta.rho_x[i];
        out[i * r + 1 + i] = s * rho_bar(theta.rho_x[i]);
    }
    Ok(())
}

fn cch_mu_bar(theta: &CchTheta, v: &[f64], out: &mut [f64]) {
    for i in 0..theta.d() {
        out[i] = theta.a[i] * (theta.b[i] - v[i]);
    }
}

fn cch_sigma_bar(theta: &CchTheta, v: &[f64], truncate: bool, out: &mut [f64]) -> Result<(), SimError> {
    let d = theta.d();
    let r = 2 * d + 1;
    out.fill(0.0);
    for i in 0..d {
        let s = checked_sqrt(v[i], truncate)? * theta.nu[i];
        out[i * r] = s * theta.rho_x[i] * theta.rho_v[i];
        out[i * r + 1 + i] = s * rho_bar(theta.rho_x[i]) * theta.rho_v[i];
        out[i * r + 1 + d + i] = s * rho_bar(theta.rho_v[i]);
    }
    Ok(())
}

/// Exact CCH coefficients. Negative variances are rejected.
pub fn cch_coefficients(theta: &CchTheta, x: &[f64], v: &[f64]) -> Result<CchCoefficients, SimError> {
    let d = theta.d();
    if x.len() != d || v.len() != d {
        return Err(SimError::Invalid("state dimension".into()));
    }
    let r = 2 * d + 1;
    let mut c = CchCoefficients {
        sigma: vec![0.0; d * r],
        mu_bar: vec![0.0; d],
        sigma_bar: vec![0.0; d * r],
    };
    cch_sigma(theta, x, v, false, &mut c.sigma)?;
    cch_mu_bar(theta, v, &mut c.mu_bar);
    cch_sigma_bar(theta, v, false, &mut c.sigma_bar)?;
    Ok(c)
}

/// CCH coefficients as a field; `truncate` replaces `√v` by `√max(v,0)`.
#[derive(Clone, Debug)]
pub struct CchField {
    pub theta: CchTheta,
    pub truncate: bool,
}

impl CoefficientField for CchField {
    fn dims(&self) -> (usize, usize) {
        let d = self.theta.d();
        (d, 2 * d + 1)
    }
    fn sigma(&self, x: &[f64], v: &[f64], out: &mut [f64]) -> Result<(), SimError> {
        cch_sigma(&self.theta, x, v, self.truncate, out)
    }
    fn mu_bar(&self, v: &[f64], out: &mut [f64]) -> Result<(), SimError> {
        cch_mu_bar(&self.theta, v, out);
        Ok(())
    }
    fn sigma_bar(&self, v: &[f64], out: &mut [f64]) -> Result<(), SimError> {
        cch_sigma_bar(&self.theta, v, self.truncate, out)
    }
}

/// Coefficients given by ε-approximating networks, evaluated at a fixed θ.
pub struct NetField<'a> {
    pub nets: &'a CchCoefficientNets,
    pub theta: Vec<f64>,
}

impl NetField<'_> {
    fn xvt(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        [x, v, &self.theta].concat()
    }
    fn vt(&self, v: &[f64]) -> Vec<f64> {
        [v, &self.theta].concat()
    }
}

/// Writes the columns produced by `nets` into a row-major `d × r` matrix.
fn columns(nets: &[crate::ReluNetwork], input: &[f64], d: usize, out: &mut [f64]) {
    let r = nets.len();
    for (j, net) in nets.iter().enumerate() {
        let col = net.eval(input);
        for i in 0..d {
            out[i * r + j] = col[i];
        }
    }
}

impl CoefficientField for NetField<'_> {
    fn dims(&self) -> (usize, usize) {
        (self.nets.d, self.nets.sigma.len())
    }
    fn sigma(&self, x: &[f64], v: &[f64], out: &mut [f64]) -> Result<(), SimError> {
        columns(&self.nets.sigma, &self.xvt(x, v), self.nets.d, out);
        Ok(())
    }
    fn mu_bar(&self, v: &[f64], out: &mut [f64]) -> Result<(), SimError> {
        out.copy_from_slice(&self.nets.mu_bar.eval(&self.vt(v)));
        Ok(())
    }
    fn sigma_bar(&self, v: &[f64], out: &mut [f64]) -> Result<(), SimError> {
        columns(&self.nets.sigma_bar, &self.vt(v), self.nets.d, out);
        Ok(())
    }
}

/// Gaussian grid increments of one path.
///
/// `dw` holds `N × r` increments of `W`; `db` those of `B`, or `None` when
/// `B = W` (the CCH layout).
#[derive(Clone, Debug, PartialEq)]
pub struct BrownianBundle {
    pub grid: GridSpec,
    pub dim: usize,
    pub dw: Vec<f64>,
    pub db: Option<Vec<f64>>,
}

/// How the `B` increments relate to `W`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Drivers {
    /// `B = W`.
    Shared,
    /// `B^i = ρ W^i + √(1−ρ²) Z^i` with an independent `Z`.
    Correlated(f64),
}

impl BrownianBundle {
    /// Draws from stream 0 (`W`) and stream 1 (`Z`) of `key`.
    pub fn sample(key: RngKey, grid: GridSpec, dim: usize, drivers: Drivers) -> Self {
        let sh = grid.h().sqrt();
        let n = grid.steps * dim;
        let mut rng = key.stream(0).rng();
        let dw: Vec<f64> = (0..n).map(|_| sh * normal(&mut rng)).collect();
        let db = match drivers {
            Drivers::Shared => None,
            Drivers::Correlated(rho) => {
                let mut rng = key.stream(1).rng();
                let c = (1.0 - rho * rho).max(0.0).sqrt();
                Some(dw.iter().map(|w| rho * w + c * sh * normal(&mut rng)).collect())
            }
        };
        Self { grid, dim, dw, db }
    }

    pub fn zero(grid: GridSpec, dim: usize) -> Self {
        Self {
            grid,
            dim,
            dw: vec![0.0; grid.steps * dim],
            db: None,
        }
    }

    pub fn dw(&self, k: usize) -> &[f64] {
        &self.dw[k * self.dim..(k + 1) * self.dim]
    }

    pub fn db(&self, k: usize) -> &[f64] {
        match &self.db {
            Some(b) => &b[k * self.dim..(k + 1) * self.dim],
            None => self.dw(k),
        }
    }

    /// Aggregates `factor` consecutive cells into one.
    pub fn coarsen(&self, factor: usize) -> Result<Self, SimError> {
        if factor == 0 || self.grid.steps % factor != 0 {
            return Err(SimError::Invalid(format!(
                "{} steps not divisible by {factor}",
                self.grid.steps
            )));
        }
        let n = self.grid.steps / factor;
        let sum = |src: &[f64]| {
            let mut out = vec![0.0; n * self.dim];
            for k in 0..self.grid.steps {
                for j in 0..self.dim {
                    out[(k / factor) * self.dim + j] += src[k * self.dim + j];
                }
            }
            out
        };
        Ok(Self {
            grid: GridSpec::new(self.grid.horizon, n)?,
            dim: self.dim,
            dw: sum(&self.dw),
            db: self.db.as_deref().map(sum),
        })
    }
}

/// Product box `𝒳ᵈ × 𝒱ᵈ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBox {
    pub x: (f64, f64),
    pub v: (f64, f64),
}

impl DomainBox {
    pub fn contains(&self, x: &[f64], v: &[f64]) -> bool {
        x.iter().all(|a| (self.x.0..=self.x.1).contains(a)) && v.iter().all(|a| (self.v.0..=self.v.1).contains(a))
    }

    /// The box scaled about `(x₀, v₀)` by `s` in both coordinates, with the
    /// variance floor kept at 0 so frozen states never have `v < 0`.
    pub fn scaled(&self, x0: f64, v0: f64, s: f64) -> Self {
        Self {
            x: (x0 - s * (x0 - self.x.0), x0 + s * (self.x.1 - x0)),
            v: ((v0 - s * (v0 - self.v.0)).max(0.0), v0 + s * (self.v.1 - v0)),
        }
    }
}

/// Treatment of the state leaving the Lipschitz region.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// The recursion exactly as written.
    Raw,
    /// Freeze at the last grid state inside the box; the exiting step is
    /// discarded.
    Stopped(DomainBox),
    /// `√max(v, 0)` in the CCH coefficients. Diagnostics only.
    FullTruncation,
}

/// Grid path of `(X̂, V̂)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    pub d: usize,
    /// `(N+1) × d`.
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// Grid index from which the path is frozen.
    pub stopped_at: Option<usize>,
}

impl Path {
    pub fn x_at(&self, k: usize) -> &[f64] {
        &self.x[k * self.d..(k + 1) * self.d]
    }
    pub fn v_at(&self, k: usize) -> &[f64] {
        &self.v[k * self.d..(k + 1) * self.d]
    }
    pub fn x_final(&self) -> &[f64] {
        self.x_at(self.x.len() / self.d - 1)
    }
}

/// Scratch space for one Euler step.
struct Stepper {
    d: usize,
    r: usize,
    sig: Vec<f64>,
    mu: Vec<f64>,
    sigb: Vec<f64>,
}

impl Stepper {
    fn new(field: &dyn CoefficientField) -> Self {
        let (d, r) = field.dims();
        Self {
            d,
            r,
            sig: vec![0.0; d * r],
            mu: vec![0.0; d],
            sigb: vec![0.0; d * r],
        }
    }

    /// `x ← x + σ(x,v)ΔW`, `v ← v + μ̄(v)h + σ̄(v)ΔB`.
    fn step(
        &mut self,
        field: &dyn CoefficientField,
        x: &mut [f64],
        v: &mut [f64],
        h: f64,
        dw: &[f64],
        db: &[f64],
    ) -> Result<(), SimError> {
        field.sigma(x, v, &mut self.sig)?;
        field.mu_bar(v, &mut self.mu)?;
        field.sigma_bar(v, &mut self.sigb)?;
        let r = self.r;
        for i in 0..self.d {
            let row = &self.sig[i * r..(i + 1) * r];
            x[i] += row.iter().zip(dw).map(|(s, w)| s * w).sum::<f64>();
            let row = &self.sigb[i * r..(i + 1) * r];
            v[i] += self.mu[i] * h + row.iter().zip(db).map(|(s, w)| s * w).sum::<f64>();
        }
        Ok(())
    }
}

/// Runs the Euler recursion, calling `visit(k, x, v)` at every grid point.
fn run_euler(
    field: &dyn CoefficientField,
    x0: &[f64],
    v0: &[f64],
    bundle: &BrownianBundle,
    policy: Policy,
    mut visit: impl FnMut(usize, &[f64], &[f64]),
) -> Result<Option<usize>, SimError> {
    let (d, r) = field.dims();
    if x0.len() != d || v0.len() != d || bundle.dim != r {
        return Err(SimError::Invalid(format!(
            "dims: x {} v {} bundle {} field ({d},{r})",
            x0.len(),
            v0.len(),
            bundle.dim
        )));
    }
    let grid = bundle.grid;
    let h = grid.h();
    let mut st = Stepper::new(field);
    let (mut x, mut v) = (x0.to_vec(), v0.to_vec());
    let (mut xn, mut vn) = (x.clone(), v.clone());
    let mut stopped = None;
    visit(0, &x, &v);
    for k in 0..grid.steps {
        if stopped.is_none() {
            xn.copy_from_slice(&x);
            vn.copy_from_slice(&v);
            st.step(field, &mut xn, &mut vn, h, bundle.dw(k), bundle.db(k))?;
            if xn.iter().chain(&vn).any(|a| !a.is_finite()) {
                return Err(SimError::NonFinite { path: 0, step: k + 1 });
            }
            match policy {
                Policy::Stopped(b) if !b.contains(&xn, &vn) => stopped = Some(k),
                _ => {
                    std::mem::swap(&mut x, &mut xn);
                    std::mem::swap(&mut v, &mut vn);
                }
            }
        }
        visit(k + 1, &x, &v);
    }
    Ok(stopped)
}

/// Euler–Maruyama path on the bundle's grid.
pub fn euler_path(
    field: &dyn CoefficientField,
    x0: &[f64],
    v0: &[f64],
    bundle: &BrownianBundle,
    policy: Policy,
) -> Result<Path, SimError> {
    let n = bundle.grid.steps + 1;
    let d = x0.len();
    let mut xs = Vec::with_capacity(n * d);
    let mut vs = Vec::with_capacity(n * d);
    let stopped_at = run_euler(field, x0, v0, bundle, policy, |_, x, v| {
        xs.extend_from_slice(x);
        vs.extend_from_slice(v);
    })?;
    Ok(Path {
        d,
        x: xs,
        v: vs,
        stopped_at,
    })
}

/// Terminal state `(X̂_T, V̂_T)` without storing the path.
pub fn euler_terminal(
    field: &dyn CoefficientField,
    x0: &[f64],
    v0: &[f64],
    bundle: &BrownianBundle,
    policy: Policy,
) -> Result<(Vec<f64>, Vec<f64>), SimError> {
    let last = bundle.grid.steps;
    let mut out = (Vec::new(), Vec::new());
    run_euler(field, x0, v0, bundle, policy, |k, x, v| {
        if k == last {
            out = (x.to_vec(), v.to_vec());
        }
    })?;
    Ok(out)
}

/// CCH Euler path under a negative-variance policy.
pub fn simulate_cch(
    theta: &CchTheta,
    x0: &[f64],
    v0: &[f64],
    bundle: &BrownianBundle,
    policy: Policy,
) -> Result<Path, SimError> {
    theta.validate()?;
    let field = CchField {
        theta: theta.clone(),
        truncate: policy == Policy::FullTruncation,
    };
    euler_path(&field, x0, v0, bundle, policy)
}

/// The CCH bundle for one path: `2d+1` shared drivers.
pub fn cch_bundle(key: RngKey, grid: GridSpec, d: usize) -> BrownianBundle {
    BrownianBundle::sample(key, grid, 2 * d + 1, Drivers::Shared)
}

/// Strong error estimate at one coarse step count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StrongError {
    pub steps: usize,
    pub h: f64,
    pub mean: f64,
    pub se: f64,
}

/// `E[max_k ‖(X̂,V̂)^N_{t_k} − (X̂,V̂)^{N_ref}_{t_k}‖²]` for each `N` in `steps`,
/// sharing one fine bundle per path.
#[allow(clippy::too_many_arguments)]
pub fn strong_error_sweep(
    field: &dyn CoefficientField,
    x0: &[f64],
    v0: &[f64],
    horizon: f64,
    steps: &[usize],
    n_ref: usize,
    paths: usize,
    drivers: Drivers,
    key: RngKey,
) -> Result<Vec<StrongError>, SimError> {
    for &n in steps {
        if n == 0 || n_ref % n != 0 {
            return Err(SimError::Invalid(format!("N_ref={n_ref} is not a multiple of N={n}")));
        }
    }
    let fine_grid = GridSpec::new(horizon, n_ref)?;
    let (_, r) = field.dims();
    let per_path = |p: usize| -> Result<Vec<f64>, SimError> {
        let fine = BrownianBundle::sample(key.path(p as u64), fine_grid, r, drivers);
        let fp = euler_path(field, x0, v0, &fine, Policy::Raw).map_err(|e| at_path(e, p))?;
        steps
            .iter()
            .map(|&n| {
                let f = n_ref / n;
                let coarse = fine.coarsen(f)?;
                let cp = euler_path(field, x0, v0, &coarse, Policy::Raw).map_err(|e| at_path(e, p))?;
                let worst = (0..=n)
                    .map(|k| {
                        let dx = cp.x_at(k).iter().zip(fp.x_at(k * f)).map(|(a, b)| (a - b) * (a - b));
                        let dv = cp.v_at(k).iter().zip(fp.v_at(k * f)).map(|(a, b)| (a - b) * (a - b));
                        dx.chain(dv).sum::<f64>()
                    })
                    .fold(0.0, f64::max);
                Ok(worst)
            })
            .collect()
    };
    let rows = (0..paths).into_par_iter().map(per_path).collect::<Result<Vec<_>, _>>()?;
    Ok(steps
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let mut m = Moments::default();
            rows.iter().for_each(|r| m.push(r[j]));
            StrongError {
                steps: n,
                h: horizon / n as f64,
                mean: m.mean(),
                se: m.se(),
            }
        })
        .collect())
}

fn at_path(e: SimError, p: usize) -> SimError {
    match e {
        SimError::NonFinite { step, .. } => SimError::NonFinite { path: p, step },
        e => e,
    }
}

/// Single-`N` form of [`strong_error_sweep`].
#[allow(clippy::too_many_arguments)]
pub fn strong_error(
    field: &dyn CoefficientField,
    x0: &[f64],
    v0: &[f64],
    horizon: f64,
    steps: usize,
    n_ref: usize,
    paths: usize,
    drivers: Drivers,
    key: RngKey,
) -> Result<StrongError, SimError> {
    Ok(strong_error_sweep(field, x0, v0, horizon, &[steps], n_ref, paths, drivers, key)?[0])
}
