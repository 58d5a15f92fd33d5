//! Pricing networks assembled from frozen randomness.
//!
//! For one draw of the drivers the ε-Euler scheme is a composition of
//! networks: each step is an increment-weighted sum of coefficient networks,
//! steps are chained with [`compose`], and `M` copies are averaged with
//! [`weighted_sum`]. Every builder here has a twin that runs the same
//! recursion by evaluating the sub-networks one at a time, and the two must
//! agree to re-association error.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx_blocks::{
    exp_var_net, mult3_net_bounds, mult_net_bounds, rho_bar_net, sqrt_nu_net, CchCoefficientNets, Certified, ExpVarBlock,
    RBergomiBoxes,
};
use crate::error::SimError;
use crate::pricing::{payoff_net, PayoffSpec};
use crate::relu_net::{
    clamp_net, compose, fuse_affine, identity_net, pad_to_depth, parallel_shared, parallelize, rail, selector_net,
    stack_padded, weighted_sum, ReluNetwork,
};
use crate::rng::RngKey;
use crate::rough_vol::{
    clamp_levels, d_tilde, stopped_increments, HybridInputs, RBergomiSampler, VarianceSource, VolterraWeightNets,
};
use crate::sv_sim::{cch_bundle, euler_terminal, BrownianBundle, GridSpec, NetField, Policy};

/// Which model a plan realizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Cch,
    RBergomi,
}

/// Inputs of a pricing-network construction.
///
/// `copies`, `grid` and `eps` are applied as given. The asymptotic copy count
/// is only reported by [`RealizationPlan::theory_copies`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RealizationPlan {
    pub model: Model,
    pub copies: usize,
    pub grid: GridSpec,
    pub eps: f64,
    pub eps_bar: f64,
    pub seed: u64,
}

impl RealizationPlan {
    pub fn validate(&self) -> Result<(), SimError> {
        let unit = |e: f64| e > 0.0 && e < 0.5;
        if self.copies == 0 || !unit(self.eps) || !unit(self.eps_bar) {
            return Err(SimError::Invalid(format!("plan needs M ≥ 1 and ε, ε̄ ∈ (0, ½): {self:?}")));
        }
        Ok(())
    }

    /// `⌈3 ε^{−2l} C̄ d̄^s ε̄^{−2}⌉` for user-supplied `C̄`, `s`, `l`.
    pub fn theory_copies(&self, c_bar: f64, d_bar: f64, s: f64, l: f64) -> f64 {
        (3.0 * self.eps.powf(-2.0 * l) * c_bar * d_bar.powf(s) * self.eps_bar.powi(-2)).ceil()
    }

    /// Frozen randomness of copy `i`.
    pub fn copy_key(&self, i: usize) -> RngKey {
        RngKey::new(self.seed).named("realize").path(i as u64)
    }
}

/// One audited block.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditRow {
    pub block: String,
    pub measured_size: usize,
    pub bound_value: f64,
    pub pass: bool,
}

/// Measured sizes against the displayed bounds.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SizeAudit {
    pub rows: Vec<AuditRow>,
}

impl SizeAudit {
    pub fn check(&mut self, block: impl Into<String>, measured: usize, bound: f64) {
        self.rows.push(AuditRow {
            block: block.into(),
            measured_size: measured,
            bound_value: bound,
            pass: measured as f64 <= bound,
        });
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn extend(&mut self, other: SizeAudit) {
        self.rows.extend(other.rows);
    }
}

/// `I_{n,l}` size bound `2nl`.
fn identity_bound(n: usize, l: usize) -> f64 {
    2.0 * (n * l) as f64
}

/// Parameters per asset.
const M_PARAMS: usize = 5;

/// One step of the CCH ε-scheme as networks on `z = (x, v, θ) ∈ ℝ^{7d}`.
#[derive(Clone, Debug)]
pub struct CchStepNets {
    /// `z ↦ v + h μ̄(v,θ) + Σ_j σ̄_j(v,θ) ΔW_j`.
    pub phi: ReluNetwork,
    /// `z ↦ x + Σ_j σ_j(x,v,θ) ΔW_j`.
    pub psi: ReluNetwork,
    /// `z ↦ (Ψ(z), Φ(z), θ)`.
    pub step: ReluNetwork,
}

/// Builds the step nets from coefficient networks and one increment vector.
pub fn cch_step_nets(nets: &CchCoefficientNets, h: f64, dw: &[f64]) -> Result<CchStepNets, SimError> {
    let d = nets.d;
    let n = 7 * d;
    if dw.len() != nets.sigma.len() {
        return Err(SimError::Invalid(format!("{} increments for {} columns", dw.len(), nets.sigma.len())));
    }
    let on_vt = selector_net(n, &(d..n).collect::<Vec<_>>());
    let nonzero = |net: &ReluNetwork| net.size() > 0;

    let mut x_terms: Vec<(ReluNetwork, f64)> = Vec::new();
    for (net, w) in nets.sigma.iter().zip(dw) {
        if nonzero(net) {
            x_terms.push((net.clone(), *w));
        }
    }
    let mut v_terms = vec![(fuse_affine(&nets.mu_bar, &on_vt)?, h)];
    for (net, w) in nets.sigma_bar.iter().zip(dw) {
        if nonzero(net) {
            v_terms.push((fuse_affine(net, &on_vt)?, *w));
        }
    }
    let sum_with_rail = |terms: Vec<(ReluNetwork, f64)>, idx: Vec<usize>| -> Result<ReluNetwork, SimError> {
        let depth = terms.iter().map(|(t, _)| t.depth()).max().unwrap_or(2).max(3);
        let mut parts = vec![rail(n, &idx, depth)];
        let mut weights = vec![1.0];
        for (t, w) in terms {
            parts.push(pad_to_depth(&t, depth)?);
            weights.push(w);
        }
        Ok(weighted_sum(&parts, &weights)?)
    };
    let psi = sum_with_rail(x_terms, (0..d).collect())?;
    let phi = sum_with_rail(v_terms, (d..2 * d).collect())?;
    let depth = psi.depth().max(phi.depth());
    let step = parallel_shared(&[
        pad_to_depth(&psi, depth)?,
        pad_to_depth(&phi, depth)?,
        rail(n, &(2 * d..n).collect::<Vec<_>>(), depth),
    ])?;
    Ok(CchStepNets { phi, psi, step })
}

/// `Ψ_N ⊙ S_{N−1} ⊙ … ⊙ S_1`, mapping `(x, v, θ)` to `X̃_T`.
#[derive(Clone, Debug)]
pub struct PathNet {
    pub net: ReluNetwork,
    pub step_depths: Vec<usize>,
}

/// Chains full step nets with a final `x`-only net.
pub fn chain_path_net(steps: &[ReluNetwork], last: &ReluNetwork) -> Result<PathNet, SimError> {
    let mut step_depths: Vec<usize> = steps.iter().map(ReluNetwork::depth).collect();
    step_depths.push(last.depth());
    let mut acc: Option<ReluNetwork> = None;
    for s in steps {
        acc = Some(match acc {
            None => s.clone(),
            Some(a) => compose(s, &a)?,
        });
    }
    let net = match acc {
        None => last.clone(),
        Some(a) => compose(last, &a)?,
    };
    Ok(PathNet { net, step_depths })
}

/// `Ξ = φ ⊙ FP(Ψ̄, I_{1,l})` on `(z, K)`.
fn payoff_on_path(payoff: &ReluNetwork, path: &ReluNetwork) -> Result<ReluNetwork, SimError> {
    let k_rail = identity_net(1, path.depth())?;
    Ok(compose(payoff, &parallelize(&[path.clone(), k_rail])?)?)
}

/// `U = (1/M) Σ Ξⁱ`.
fn average(copies: &[ReluNetwork]) -> Result<ReluNetwork, SimError> {
    let depth = copies.iter().map(ReluNetwork::depth).max().ok_or(SimError::Invalid("no copies".into()))?;
    let padded = copies.iter().map(|c| pad_to_depth(c, depth)).collect::<Result<Vec<_>, _>>()?;
    let w = vec![1.0 / copies.len() as f64; copies.len()];
    Ok(weighted_sum(&padded, &w)?)
}

/// A pricing network with its ingredients and audit.
#[derive(Clone, Debug)]
pub struct PricingNet {
    pub net: ReluNetwork,
    pub paths: Vec<PathNet>,
    pub audit: SizeAudit,
}

/// CCH pricing network `U(x, v, θ, K)` for `M` frozen bundles.
pub fn cch_pricing_net(
    plan: &RealizationPlan,
    nets: &CchCoefficientNets,
    payoff: &PayoffSpec,
    bundles: &[BrownianBundle],
) -> Result<PricingNet, SimError> {
    plan.validate()?;
    let d = nets.d;
    if payoff.assets() != d || bundles.len() != plan.copies {
        return Err(SimError::Invalid("payoff dimension or bundle count does not match the plan".into()));
    }
    let h = plan.grid.h();
    let d_bar = (2 * d + 1) as f64;
    let m = M_PARAMS as f64;
    let k = (plan.grid.steps - 1) as f64;
    // measured per-network size, standing in for C d̄^p ε^{−q}
    let c_meas = nets
        .sigma
        .iter()
        .chain(&nets.sigma_bar)
        .chain(std::iter::once(&nets.mu_bar))
        .map(ReluNetwork::size)
        .max()
        .unwrap_or(0) as f64;
    let phi_bound = (1.0 + 6.0 * d_bar + 4.0 * d_bar * d_bar) * 2.0 * m * c_meas;
    let psi_bound = (1.0 + 6.0 * d_bar + 6.0 * d_bar * d_bar) * 2.0 * m * c_meas;
    let psi_bar_bound = psi_bound * (2.0 + 6.0 * m * k + 16.0 * m * k * d_bar);
    let phi_payoff = payoff_net(payoff);

    let built = bundles
        .par_iter()
        .enumerate()
        .map(|(i, b)| -> Result<(PathNet, ReluNetwork, SizeAudit), SimError> {
            let mut audit = SizeAudit::default();
            let mut steps = Vec::new();
            let mut last = None;
            for j in 0..plan.grid.steps {
                let s = cch_step_nets(nets, h, b.dw(j))?;
                audit.check(format!("cch/copy{i}/phi{j}"), s.phi.size(), phi_bound);
                audit.check(format!("cch/copy{i}/psi{j}"), s.psi.size(), psi_bound);
                if j + 1 == plan.grid.steps {
                    last = Some(s.psi);
                } else {
                    steps.push(s.step);
                }
            }
            let path = chain_path_net(&steps, &last.expect("at least one step"))?;
            audit.check(format!("cch/copy{i}/psi_bar"), path.net.size(), psi_bar_bound);
            let xi = payoff_on_path(&phi_payoff, &path.net)?;
            Ok((path, xi, audit))
        })
        .collect::<Result<Vec<_>, _>>()?;
    finish(built, &phi_payoff, "cch")
}

fn finish(built: Vec<(PathNet, ReluNetwork, SizeAudit)>, phi: &ReluNetwork, tag: &str) -> Result<PricingNet, SimError> {
    let mut audit = SizeAudit::default();
    let mut paths = Vec::new();
    let mut xis = Vec::new();
    for (p, xi, a) in built {
        audit.extend(a);
        paths.push(p);
        xis.push(xi);
    }
    let net = average(&xis)?;
    let m = paths.len() as f64;
    let u_bound = 2.0 * m * phi.size() as f64
        + paths
            .iter()
            .map(|p| 2.0 * identity_bound(1, p.net.depth()) + 2.0 * p.net.size() as f64)
            .sum::<f64>();
    audit.check(format!("{tag}/U"), net.size(), u_bound);
    Ok(PricingNet { net, paths, audit })
}

/// `(1/M) Σ φ(X̃ⁱ_T, K)` by the ε-Euler recursion on the same coefficient nets.
pub fn cch_recursion_price(
    nets: &CchCoefficientNets,
    payoff: &PayoffSpec,
    bundles: &[BrownianBundle],
    x0: &[f64],
    v0: &[f64],
    theta: &[f64],
    strike: f64,
) -> Result<f64, SimError> {
    let field = NetField {
        nets,
        theta: theta.to_vec(),
    };
    let mut total = 0.0;
    for b in bundles {
        let (x, _) = euler_terminal(&field, x0, v0, b, Policy::Raw)?;
        total += payoff.value(&x, strike);
    }
    Ok(total / bundles.len() as f64)
}

/// The `M` frozen CCH bundles of a plan.
pub fn cch_plan_bundles(plan: &RealizationPlan, d: usize) -> Vec<BrownianBundle> {
    (0..plan.copies).map(|i| cch_bundle(plan.copy_key(i), plan.grid, d)).collect()
}

/// Blocks shared by every copy of a rough Bergomi construction.
#[derive(Clone, Debug)]
pub struct RBergomiBlocks {
    pub grid: GridSpec,
    pub boxes: RBergomiBoxes,
    pub trunc: f64,
    pub eps: f64,
    /// Hybrid weight nets at `t_1, …, t_{N−1}`.
    pub weights: Vec<VolterraWeightNets>,
    /// `Φ^{4,k}` at `t_1, …, t_{N−1}`, exponent windowed to `±log D`.
    pub phi4: Vec<ExpVarBlock>,
    pub phi3: Certified,
    pub phi5: Certified,
    pub mult2: Certified,
    pub clamp_x: (f64, f64),
}

impl RBergomiBlocks {
    pub fn build(grid: GridSpec, boxes: &RBergomiBoxes, trunc: f64, eps: f64) -> Result<Self, SimError> {
        let clamp_x = clamp_levels(boxes, trunc, grid.horizon)?;
        let n = grid.steps;
        let weights = (1..n)
            .map(|k| VolterraWeightNets::build(grid.time(k), n, boxes.hurst, eps))
            .collect::<Result<Vec<_>, _>>()?;
        let phi4 = (1..n)
            .into_par_iter()
            .map(|k| exp_var_net(grid.time(k), boxes, clamp_x, Some(trunc.ln()), eps))
            .collect::<Result<Vec<_>, _>>()?;
        let phi3 = sqrt_nu_net(boxes, eps)?;
        let phi5 = rho_bar_net(boxes, eps)?;
        let mult2 = mult_net_bounds(boxes.nu.1.sqrt() + eps, trunc, eps)?;
        Ok(Self {
            grid,
            boxes: boxes.clone(),
            trunc,
            eps,
            weights,
            phi4,
            phi3,
            phi5,
            mult2,
            clamp_x,
        })
    }

    /// `D̃`, the bound on `Ṽ`.
    pub fn v_bound(&self) -> f64 {
        d_tilde(self.trunc, self.boxes.nu.1)
    }

    /// `Ṽ^{ε,D}_{t_k}` as a network of `(ν, η, ρ, H)`.
    pub fn variance_net(&self, k: usize, inputs: Option<&HybridInputs>) -> Result<ReluNetwork, SimError> {
        let s3 = fuse_affine(&self.phi3.net, &selector_net(4, &[0]))?;
        if k == 0 {
            return Ok(s3);
        }
        let inp = inputs.ok_or_else(|| SimError::Invalid(format!("hybrid inputs missing at step {k}")))?;
        let xi = fuse_affine(&self.weights[k - 1].network(&inp.db, inp.z)?, &selector_net(4, &[3]))?;
        let args = stack_padded(&[rail(4, &[3], 3), rail(4, &[1], 3), xi])?;
        let g = compose(&self.phi4[k - 1].cert.net, &args)?;
        let c = compose(&clamp_net(1.0 / self.trunc, self.trunc), &g)?;
        Ok(compose(&self.mult2.net, &stack_padded(&[s3, c])?)?)
    }

    /// The same value by evaluating the blocks one at a time.
    pub fn variance_direct(&self, k: usize, inputs: Option<&HybridInputs>, theta: [f64; 4]) -> f64 {
        let [nu, eta, _, hurst] = theta;
        let s3 = self.phi3.net.eval1(&[nu]);
        if k == 0 {
            return s3;
        }
        let inp = inputs.expect("hybrid inputs");
        let xi = self.weights[k - 1].point(hurst, &inp.db, inp.z);
        let g = self.phi4[k - 1].cert.net.eval1(&[hurst, eta, xi]);
        let c = clamp_net(1.0 / self.trunc, self.trunc).eval1(&[g]);
        self.mult2.net.eval1(&[s3, c])
    }
}

/// Frozen randomness of one rough Bergomi copy.
#[derive(Clone, Debug)]
pub struct RBergomiCopy {
    /// Stopped increments of `B` and `B⊥`.
    pub db: Vec<f64>,
    pub db_perp: Vec<f64>,
    pub hybrid: Vec<HybridInputs>,
}

impl RBergomiCopy {
    pub fn draw(sampler: &RBergomiSampler, key: RngKey, r_clamp: Option<f64>) -> Self {
        let d = sampler.draw(key);
        let (db, db_perp, _) = stopped_increments(&d.db, &d.db_perp, r_clamp);
        Self {
            db,
            db_perp,
            hybrid: d.hybrid,
        }
    }

    /// `B_{k+1} = B_k + (|ΔB| + |ΔB⊥|)(B_k D̃ (1+ε) + ε)` from `B_0 = x̄`.
    pub fn x_bound(&self, x_max: f64, v_bound: f64, eps: f64) -> f64 {
        self.db.iter().zip(&self.db_perp).fold(x_max, |b, (p, q)| b + (p.abs() + q.abs()) * (b * v_bound * (1.0 + eps) + eps))
    }
}

/// Frozen copies for a plan with clamp level `R`.
pub fn rbergomi_plan_copies(plan: &RealizationPlan, hurst: f64, r_clamp: Option<f64>) -> Result<Vec<RBergomiCopy>, SimError> {
    let sampler = RBergomiSampler::new(plan.grid, hurst, VarianceSource::Hybrid)?;
    Ok((0..plan.copies).map(|i| RBergomiCopy::draw(&sampler, plan.copy_key(i), r_clamp)).collect())
}

/// The two `Φ^{mult,3}` blocks of the `X̃` step, sized for `|x| ≤ x_bound`.
#[derive(Clone, Debug)]
pub struct XStepBlocks {
    pub rho: Certified,
    pub rho_bar: Certified,
}

impl XStepBlocks {
    pub fn build(x_bound: f64, v_bound: f64, eps: f64) -> Result<Self, SimError> {
        Ok(Self {
            rho: mult3_net_bounds(x_bound, v_bound, 1.0, eps)?,
            rho_bar: mult3_net_bounds(x_bound, v_bound, 1.0 + eps, eps)?,
        })
    }
}

/// `X̃_{k+1}` as a network of `z = (x, ν, η, ρ, H)`.
fn rbergomi_step_net(
    blocks: &RBergomiBlocks,
    mult: &XStepBlocks,
    k: usize,
    copy: &RBergomiCopy,
) -> Result<ReluNetwork, SimError> {
    let v = fuse_affine(&blocks.variance_net(k, copy.hybrid.get(k.wrapping_sub(1)))?, &selector_net(5, &[1, 2, 3, 4]))?;
    let x = rail(5, &[0], 3);
    let phi5 = fuse_affine(&blocks.phi5.net, &selector_net(5, &[3]))?;
    let a = compose(&mult.rho.net, &stack_padded(&[x.clone(), v.clone(), rail(5, &[3], 3)])?)?;
    let b = compose(&mult.rho_bar.net, &stack_padded(&[x, v, phi5])?)?;
    let depth = a.depth().max(b.depth());
    Ok(weighted_sum(
        &[rail(5, &[0], depth), pad_to_depth(&a, depth)?, pad_to_depth(&b, depth)?],
        &[1.0, copy.db[k], copy.db_perp[k]],
    )?)
}

/// Rough Bergomi pricing network `U(x, ν, η, ρ, H, K)`.
///
/// The `Φ^{mult,3}` blocks are sized once for the largest pathwise bound
/// over all copies, so every copy has the same depth.
pub fn rbergomi_pricing_net(
    plan: &RealizationPlan,
    blocks: &RBergomiBlocks,
    payoff: &PayoffSpec,
    copies: &[RBergomiCopy],
) -> Result<(PricingNet, XStepBlocks), SimError> {
    plan.validate()?;
    if payoff.assets() != 1 || copies.len() != plan.copies {
        return Err(SimError::Invalid("rough Bergomi needs a one-asset payoff and M copies".into()));
    }
    let x_max = blocks.boxes.x.0.abs().max(blocks.boxes.x.1.abs());
    let xb = copies
        .iter()
        .map(|c| c.x_bound(x_max, blocks.v_bound(), blocks.eps))
        .fold(x_max, f64::max);
    let mult = XStepBlocks::build(xb, blocks.v_bound(), blocks.eps)?;
    let n = plan.grid.steps;
    let phi_payoff = payoff_net(payoff);
    let built = copies
        .par_iter()
        .enumerate()
        .map(|(i, c)| -> Result<(PathNet, ReluNetwork, SizeAudit), SimError> {
            let mut audit = SizeAudit::default();
            let mut tilde = Vec::new();
            let mut sizes = Vec::new();
            for k in 0..n - 1 {
                let phi = rbergomi_step_net(blocks, &mult, k, c)?;
                let l = phi.depth();
                let t = parallel_shared(&[phi.clone(), rail(5, &[1, 2, 3, 4], l)])?;
                audit.check(
                    format!("rb/copy{i}/tilde{k}"),
                    t.size(),
                    phi.size() as f64 + 4.0 * identity_bound(1, l),
                );
                sizes.push((phi.size(), t.size()));
                tilde.push(t);
            }
            let last = rbergomi_step_net(blocks, &mult, n - 1, c)?;
            let path = chain_path_net(&tilde, &last)?;
            let chain_bound = 2.0 * last.size() as f64 + 3.0 * sizes.iter().map(|s| s.1 as f64).sum::<f64>();
            audit.check(format!("rb/copy{i}/phi_bar"), path.net.size(), chain_bound);
            let c39 = sizes.iter().map(|s| s.0).chain(std::iter::once(last.size())).max().unwrap_or(0) as f64;
            audit.check(format!("rb/copy{i}/phi_bar_display"), path.net.size(), (1.0 + 27.0 * n as f64) * c39);
            let xi = payoff_on_path(&phi_payoff, &path.net)?;
            Ok((path, xi, audit))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((finish(built, &phi_payoff, "rb")?, mult))
}

/// `(1/M) Σ φ(X̃ⁱ_T, K)` by the rough Bergomi ε-recursion on the same blocks.
pub fn rbergomi_recursion_price(
    blocks: &RBergomiBlocks,
    mult: &XStepBlocks,
    payoff: &PayoffSpec,
    copies: &[RBergomiCopy],
    x0: f64,
    theta: [f64; 4],
    strike: f64,
) -> f64 {
    let rho = theta[2];
    let rbar = blocks.phi5.net.eval1(&[rho]);
    let total: f64 = copies
        .iter()
        .map(|c| {
            let mut x = x0;
            for k in 0..blocks.grid.steps {
                let v = blocks.variance_direct(k, c.hybrid.get(k.wrapping_sub(1)), theta);
                x = x + mult.rho.net.eval1(&[x, v, rho]) * c.db[k] + mult.rho_bar.net.eval1(&[x, v, rbar]) * c.db_perp[k];
            }
            payoff.value(&[x], strike)
        })
        .sum();
    total / copies.len() as f64
}

/// `|a − b| / max(|a|, |b|, 1)`.
pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx_blocks::CchBoxes;

    #[test]
    fn zero_increments_cch_step() {
        let nets = CchCoefficientNets::build(1, &CchBoxes::default(), 0.1).unwrap();
        let s = cch_step_nets(&nets, 0.25, &[0.0; 3]).unwrap();
        let z = [100.0, 0.04, 2.0, 0.05, 0.3, -0.2, -0.5];
        let out = s.step.eval(&z);
        assert_eq!(out[0], 100.0);
        let drift = nets.mu_bar.eval1(&z[1..]);
        assert!((out[1] - (0.04 + 0.25 * drift)).abs() < 1e-15);
        assert_eq!(&out[2..], &z[2..]);
    }
}
