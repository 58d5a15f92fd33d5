//! Certified ε-approximators built from ReLU networks.
//!
//! Univariate functions are interpolated on uniform grids; products are
//! formed from a sawtooth squaring network through
//! `ab = ((a+b)² − a² − b²)/2`. Multivariate factor functions are products
//! of univariate factors, never tensor grids. Every constructor returns the
//! network together with an [`ApproxSpec`] holding the audit result, and
//! composite blocks also carry an error ledger.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::ApproxError;
use crate::relu_net::{
    clamp_net, compose, fuse_affine, parallelize, pad_to_depth, parallel_shared, rail, selector_net,
    AffineLayer, ReluNetwork,
};
use crate::rng::{uniform, RngKey};

/// Largest grid tried by [`pl_approx_1d`].
pub const MAX_CELLS: usize = 1 << 15;

/// Certification record of an approximator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxSpec {
    pub target_eps: f64,
    pub domain: Vec<(f64, f64)>,
    pub measured_sup_error: f64,
    /// End-to-end bound from the stage ledger (equals the measured error for
    /// single-stage blocks).
    pub ledger_bound: f64,
    pub lip_estimate: f64,
    pub grid_cells: usize,
    pub audit_points: usize,
}

impl ApproxSpec {
    pub fn passes(&self) -> bool {
        self.measured_sup_error <= self.target_eps && self.ledger_bound <= self.target_eps
    }
}

/// A network with its certification record.
#[derive(Clone, Debug)]
pub struct Certified {
    pub net: ReluNetwork,
    pub spec: ApproxSpec,
}

fn check_eps(eps: f64) -> Result<(), ApproxError> {
    if eps > 0.0 && eps < 0.5 {
        Ok(())
    } else {
        Err(ApproxError::Epsilon(eps))
    }
}

/// Piecewise-linear interpolant data on a uniform grid.
struct PlGrid {
    lo: f64,
    h: f64,
    vals: Vec<f64>,
}

impl PlGrid {
    fn sample(f: &(dyn Fn(f64) -> f64 + Sync), lo: f64, hi: f64, n: usize) -> Result<Self, ApproxError> {
        let h = (hi - lo) / n as f64;
        let vals = (0..=n)
            .map(|j| {
                let x = node(lo, hi, n, j);
                let v = f(x);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(ApproxError::NonFinite(x))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { lo, h, vals })
    }

    fn cells(&self) -> usize {
        self.vals.len() - 1
    }

    fn interp(&self, x: f64) -> f64 {
        let n = self.cells();
        let j = (((x - self.lo) / self.h).floor().max(0.0) as usize).min(n - 1);
        let x0 = self.lo + j as f64 * self.h;
        let s = (self.vals[j + 1] - self.vals[j]) / self.h;
        self.vals[j] + s * (x - x0)
    }

    /// One hidden layer: `(x − x₀)⁺, (x₀ − x)⁺, (x − x_j)⁺` for interior nodes;
    /// the output weights are the slope increments (second differences).
    fn network(&self, hi: f64) -> ReluNetwork {
        let n = self.cells();
        let slopes: Vec<f64> = (0..n).map(|j| (self.vals[j + 1] - self.vals[j]) / self.h).collect();
        let mut rows = vec![vec![(0, 1.0)], vec![(0, -1.0)]];
        let mut bias = vec![-self.lo, self.lo];
        let mut out = vec![(0, slopes[0]), (1, -slopes[0])];
        for j in 1..n {
            rows.push(vec![(0, 1.0)]);
            bias.push(-node(self.lo, hi, n, j));
            out.push((j + 1, slopes[j] - slopes[j - 1]));
        }
        let l1 = AffineLayer::from_rows(1, rows, bias).expect("valid pl layer");
        let l2 = AffineLayer::from_rows(n + 1, vec![out], vec![self.vals[0]]).expect("valid pl layer");
        ReluNetwork::from_layers(vec![l1, l2]).expect("valid pl net")
    }
}

fn node(lo: f64, hi: f64, n: usize, j: usize) -> f64 {
    if j == n {
        hi
    } else {
        lo + (hi - lo) * (j as f64 / n as f64)
    }
}

/// The audit grid: 10 points per cell plus the right endpoint.
fn audit_grid(lo: f64, hi: f64, cells: usize) -> Vec<f64> {
    let m = 10 * cells;
    (0..=m).map(|i| node(lo, hi, m, i)).collect()
}

/// Sup error and Lipschitz estimate of a scalar network on a 1-d audit grid.
fn audit_1d(net: &ReluNetwork, f: &(dyn Fn(f64) -> f64 + Sync), grid: &[f64]) -> (f64, f64) {
    let err = grid
        .par_iter()
        .map(|&x| (net.eval1(&[x]) - f(x)).abs())
        .reduce(|| 0.0, f64::max);
    let lip = grid
        .windows(2)
        .map(|w| ((f(w[1]) - f(w[0])) / (w[1] - w[0])).abs())
        .fold(0.0, f64::max);
    (err, lip)
}

/// ε-approximation of a continuous scalar function on `[lo, hi]`.
///
/// The grid is doubled until the interpolant, and then the network itself,
/// stays within `eps` on the audit grid.
pub fn pl_approx_1d(
    f: &(dyn Fn(f64) -> f64 + Sync),
    lo: f64,
    hi: f64,
    eps: f64,
) -> Result<Certified, ApproxError> {
    check_eps(eps)?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(ApproxError::Domain(lo, hi));
    }
    let mut n = 2;
    let mut last_err = f64::INFINITY;
    while n <= MAX_CELLS {
        let grid = PlGrid::sample(f, lo, hi, n)?;
        let audit = audit_grid(lo, hi, n);
        let quick = audit
            .iter()
            .map(|&x| (grid.interp(x) - f(x)).abs())
            .fold(0.0, f64::max);
        if !quick.is_finite() {
            return Err(ApproxError::NonFinite(lo));
        }
        if quick <= eps {
            let net = grid.network(hi);
            let (err, lip) = audit_1d(&net, f, &audit);
            if err <= eps {
                return Ok(Certified {
                    net,
                    spec: ApproxSpec {
                        target_eps: eps,
                        domain: vec![(lo, hi)],
                        measured_sup_error: err,
                        ledger_bound: err,
                        lip_estimate: lip,
                        grid_cells: n,
                        audit_points: audit.len(),
                    },
                });
            }
            last_err = err;
        } else {
            last_err = quick;
        }
        n *= 2;
    }
    Err(ApproxError::Certification {
        measured: last_err,
        target: eps,
        cells: n / 2,
    })
}

/// Sawtooth levels needed for `|ab − Φ(a,b)| ≤ eps` on `[−da,da]×[−db,db]`.
fn mult_levels(da: f64, db: f64, eps: f64) -> usize {
    // error ≤ 1.5 · da · db · 4^{−m}
    let mut m = 1;
    while 1.5 * da * db * 0.25f64.powi(m as i32) > eps {
        m += 1;
    }
    m
}

/// Squaring block on `t ∈ [0,1]` for three parallel copies fed by layer 1.
///
/// Layer 1 forms `(±y_i/2)⁺` for `y = (a/da + b/db, a/da, b/db)`, so
/// `t_i = |y_i|/2`. Then `m` sawtooth levels approximate `t_i²` with error
/// `≤ 2^{−2m−2}`, a last hidden layer holds the three squares, and the output
/// is `2 da db (t₁² − t₂² − t₃²)`.
fn mult_network(da: f64, db: f64, m: usize) -> ReluNetwork {
    let (ia, ib) = (0.5 / da, 0.5 / db);
    let l1 = AffineLayer::from_rows(
        2,
        vec![
            vec![(0, ia), (1, ib)],
            vec![(0, -ia), (1, -ib)],
            vec![(0, ia)],
            vec![(0, -ia)],
            vec![(1, ib)],
            vec![(1, -ib)],
        ],
        vec![0.0; 6],
    )
    .unwrap();
    let mut layers = vec![l1];
    // per square: units (h1, h2) from t
    let mut rows = Vec::new();
    let mut bias = Vec::new();
    for i in 0..3 {
        rows.push(vec![(2 * i, 1.0), (2 * i + 1, 1.0)]);
        bias.push(0.0);
        rows.push(vec![(2 * i, 1.0), (2 * i + 1, 1.0)]);
        bias.push(-0.5);
    }
    layers.push(AffineLayer::from_rows(6, rows, bias).unwrap());
    // unit layout of the current layer per square: (h1, h2[, acc])
    let mut stride = 2;
    let acc_expr = |stride: usize, base: usize| -> Vec<(usize, f64)> {
        if stride == 2 {
            vec![(base, 1.0)]
        } else {
            vec![(base + 2, 1.0)]
        }
    };
    for s in 1..=m {
        let q = 0.25f64.powi(s as i32);
        let mut rows = Vec::new();
        let mut bias = Vec::new();
        for i in 0..3 {
            let base = stride * i;
            let u = [(base, 2.0), (base + 1, -4.0)];
            let mut acc = acc_expr(stride, base);
            // acc_s = acc_{s−1} − u_s/4^s
            for (c, v) in u {
                if let Some(e) = acc.iter_mut().find(|e| e.0 == c) {
                    e.1 -= q * v;
                } else {
                    acc.push((c, -q * v));
                }
            }
            acc.sort_by_key(|e| e.0);
            if s < m {
                rows.push(u.to_vec());
                bias.push(0.0);
                rows.push(u.to_vec());
                bias.push(-0.5);
            }
            rows.push(acc);
            bias.push(0.0);
        }
        layers.push(AffineLayer::from_rows(3 * stride, rows, bias).unwrap());
        stride = 3;
    }
    let c = 2.0 * da * db;
    layers.push(AffineLayer::from_rows(3, vec![vec![(0, c), (1, -c), (2, -c)]], vec![0.0]).unwrap());
    ReluNetwork::from_layers(layers).unwrap()
}

/// Product network for `|a| ≤ da`, `|b| ≤ db`.
pub fn mult_net_bounds(da: f64, db: f64, eps: f64) -> Result<Certified, ApproxError> {
    check_eps(eps)?;
    if !(da > 0.0 && db > 0.0 && da.is_finite() && db.is_finite()) {
        return Err(ApproxError::Domain(da, db));
    }
    let m = mult_levels(da, db, eps);
    let net = mult_network(da, db, m);
    let ledger = 1.5 * da * db * 0.25f64.powi(m as i32);
    let k = 41;
    let pts: Vec<[f64; 2]> = (0..k)
        .flat_map(|i| {
            (0..k).map(move |j| {
                [
                    -da + 2.0 * da * i as f64 / (k - 1) as f64,
                    -db + 2.0 * db * j as f64 / (k - 1) as f64,
                ]
            })
        })
        .collect();
    let err = pts
        .par_iter()
        .map(|p| (net.eval1(p) - p[0] * p[1]).abs())
        .reduce(|| 0.0, f64::max);
    let spec = ApproxSpec {
        target_eps: eps,
        domain: vec![(-da, da), (-db, db)],
        measured_sup_error: err,
        ledger_bound: ledger,
        lip_estimate: da.max(db),
        grid_cells: 1 << m,
        audit_points: pts.len(),
    };
    if !spec.passes() {
        return Err(ApproxError::Certification {
            measured: err.max(ledger),
            target: eps,
            cells: 1 << m,
        });
    }
    Ok(Certified { net, spec })
}

/// `Φ^mult`: products of two factors bounded by `bound`.
pub fn mult_net(bound: f64, eps: f64) -> Result<Certified, ApproxError> {
    if bound < 1.0 {
        return Err(ApproxError::Domain(-bound, bound));
    }
    mult_net_bounds(bound, bound, eps)
}

/// Product of three factors: `M₂(M₁(a,b), c)` with budget `eps/2` per stage,
/// the first stage scaled down by `dc`.
pub fn mult3_net_bounds(da: f64, db: f64, dc: f64, eps: f64) -> Result<Certified, ApproxError> {
    check_eps(eps)?;
    let e1 = 0.5 * eps / dc.max(1.0);
    let m1 = mult_net_bounds(da, db, e1)?;
    let p_bound = da * db + m1.spec.ledger_bound;
    let m2 = mult_net_bounds(p_bound, dc, 0.5 * eps)?;
    let c_rail = rail(1, &[0], m1.net.depth());
    let inner = parallelize(&[m1.net.clone(), c_rail])?;
    let net = fuse_affine(&m2.net, &inner)?;
    let ledger = m2.spec.ledger_bound + dc * m1.spec.ledger_bound;
    let mut rng = RngKey::new(0x6d33).rng();
    let mut pts: Vec<[f64; 3]> = Vec::new();
    for &a in &[-da, 0.0, da] {
        for &b in &[-db, 0.0, db] {
            for &c in &[-dc, 0.0, dc] {
                pts.push([a, b, c]);
            }
        }
    }
    for _ in 0..2000 {
        pts.push([
            uniform(&mut rng, -da, da),
            uniform(&mut rng, -db, db),
            uniform(&mut rng, -dc, dc),
        ]);
    }
    let err = pts
        .par_iter()
        .map(|p| (net.eval1(p) - p[0] * p[1] * p[2]).abs())
        .reduce(|| 0.0, f64::max);
    let spec = ApproxSpec {
        target_eps: eps,
        domain: vec![(-da, da), (-db, db), (-dc, dc)],
        measured_sup_error: err,
        ledger_bound: ledger,
        lip_estimate: (da * db).max(db * dc).max(da * dc),
        grid_cells: m1.spec.grid_cells.max(m2.spec.grid_cells),
        audit_points: pts.len(),
    };
    if !spec.passes() {
        return Err(ApproxError::Ledger {
            ledger: err.max(ledger),
            target: eps,
        });
    }
    Ok(Certified { net, spec })
}

/// `Φ^{mult,3}` with a common bound.
pub fn mult3_net(bound: f64, eps: f64) -> Result<Certified, ApproxError> {
    if bound < 1.0 {
        return Err(ApproxError::Domain(-bound, bound));
    }
    mult3_net_bounds(bound, bound, bound, eps)
}

/// A scalar factor of a separable product, read from an input vector.
#[derive(Clone, Debug)]
pub enum Leaf {
    /// The coordinate itself.
    Coord(usize),
    /// `Σ c_j x_j + c₀`.
    Linear(Vec<(usize, f64)>, f64),
    /// A univariate function of one coordinate, approximated on the box.
    Func(usize, fn(f64) -> f64),
}

impl Leaf {
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Leaf::Coord(i) => x[*i],
            Leaf::Linear(c, c0) => c.iter().map(|(j, v)| v * x[*j]).sum::<f64>() + c0,
            Leaf::Func(i, f) => f(x[*i]),
        }
    }

    /// Interval enclosure of the leaf over the box.
    fn range(&self, bx: &[(f64, f64)]) -> (f64, f64) {
        match self {
            Leaf::Coord(i) => bx[*i],
            Leaf::Linear(c, c0) => c.iter().fold((*c0, *c0), |(lo, hi), (j, v)| {
                let (a, b) = bx[*j];
                (lo + (v * a).min(v * b), hi + (v * a).max(v * b))
            }),
            Leaf::Func(i, f) => {
                let (a, b) = bx[*i];
                (0..=4096).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), k| {
                    let v = f(node(a, b, 4096, k));
                    (lo.min(v), hi.max(v))
                })
            }
        }
    }
}

/// A network for `Π leaves` with its error ledger.
#[derive(Clone, Debug)]
pub struct ProductBlock {
    pub cert: Certified,
    /// Bound on `|Π leaves|` over the box.
    pub bound: f64,
}

struct Node {
    net: ReluNetwork,
    bound: f64,
    err: f64,
}

fn leaf_net(leaf: &Leaf, in_dim: usize, bx: &[(f64, f64)], eps: f64) -> Result<Node, ApproxError> {
    let (lo, hi) = leaf.range(bx);
    let bound = lo.abs().max(hi.abs());
    match leaf {
        Leaf::Coord(i) => Ok(Node {
            net: rail(in_dim, &[*i], 3),
            bound,
            err: 0.0,
        }),
        Leaf::Linear(c, c0) => {
            let row = c.clone();
            let layer = AffineLayer::from_rows(in_dim, vec![row], vec![*c0])?;
            let lin = ReluNetwork::from_layers(vec![layer])?;
            Ok(Node {
                net: pad_to_depth(&lin, 3)?,
                bound,
                err: 0.0,
            })
        }
        Leaf::Func(i, f) => {
            let (a, b) = bx[*i];
            let c = pl_approx_1d(f, a, b, eps)?;
            let net = fuse_affine(&c.net, &selector_net(in_dim, &[*i]))?;
            Ok(Node {
                net,
                bound,
                err: c.spec.measured_sup_error,
            })
        }
    }
}

/// Builds `Π leaves` over `bx` with certified sup error `≤ eps`.
///
/// Budgets are split equally over the approximation stages and divided by
/// the product of the other factors' bounds (the downstream Lipschitz
/// constant). The ledger recomputes the end-to-end bound from the measured
/// stage errors; if it overshoots, the budgets are halved and the block
/// is rebuilt.
pub fn product_net(leaves: &[Leaf], bx: &[(f64, f64)], eps: f64) -> Result<ProductBlock, ApproxError> {
    check_eps(eps)?;
    let in_dim = bx.len();
    let bounds: Vec<f64> = leaves
        .iter()
        .map(|l| {
            let (lo, hi) = l.range(bx);
            lo.abs().max(hi.abs())
        })
        .collect();
    let total: f64 = bounds.iter().product();
    let stages = leaves.iter().filter(|l| matches!(l, Leaf::Func(..))).count() + leaves.len() - 1;
    let mut scale = 1.0;
    for _ in 0..6 {
        let budget = scale * eps / stages.max(1) as f64;
        let nodes = leaves
            .iter()
            .zip(&bounds)
            .map(|(l, b)| {
                let amp = (total / b.max(1e-300)).max(1.0);
                leaf_net(l, in_dim, bx, (budget / amp).min(0.49))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let (net, ledger, bound) = reduce_products(nodes, total, budget)?;
        if ledger <= eps {
            let cert = audit_product(net, leaves, bx, eps, ledger)?;
            return Ok(ProductBlock { cert, bound });
        }
        scale *= 0.5;
    }
    Err(ApproxError::Ledger {
        ledger: f64::INFINITY,
        target: eps,
    })
}

/// Pairs adjacent values level by level with product networks.
fn reduce_products(mut nodes: Vec<Node>, total: f64, budget: f64) -> Result<(ReluNetwork, f64, f64), ApproxError> {
    let depth = nodes.iter().map(|n| n.net.depth()).max().unwrap();
    let padded = nodes
        .iter()
        .map(|n| pad_to_depth(&n.net, depth))
        .collect::<Result<Vec<_>, _>>()?;
    let mut net = parallel_shared(&padded)?;
    while nodes.len() > 1 {
        let mut next = Vec::new();
        let mut stage_nets = Vec::new();
        let mut it = nodes.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => {
                    let (ba, bb) = (a.bound + a.err, b.bound + b.err);
                    let amp = (total / (a.bound * b.bound).max(1e-300)).max(1.0);
                    let m = mult_net_bounds(ba.max(1e-12), bb.max(1e-12), (budget / amp).min(0.49))?;
                    let e = m.spec.ledger_bound + a.bound * b.err + b.bound * a.err + a.err * b.err;
                    stage_nets.push(m.net.clone());
                    next.push(Node {
                        net: m.net,
                        bound: a.bound * b.bound,
                        err: e,
                    });
                }
                None => {
                    stage_nets.push(rail(1, &[0], 2));
                    next.push(a);
                }
            }
        }
        let d = stage_nets.iter().map(ReluNetwork::depth).max().unwrap();
        let padded = stage_nets
            .iter()
            .map(|n| pad_to_depth(n, d))
            .collect::<Result<Vec<_>, _>>()?;
        net = fuse_affine(&parallelize(&padded)?, &net)?;
        nodes = next;
    }
    let n = nodes.pop().unwrap();
    Ok((net, n.err, n.bound))
}

/// Sup-error audit of a multivariate block: a 5-point tensor grid over the
/// coordinates the leaves read, plus 1000 uniform points.
fn audit_product(
    net: ReluNetwork,
    leaves: &[Leaf],
    bx: &[(f64, f64)],
    eps: f64,
    ledger: f64,
) -> Result<Certified, ApproxError> {
    let f = |x: &[f64]| leaves.iter().map(|l| l.value(x)).product::<f64>();
    let pts = audit_points(leaves_coords(leaves), bx, 0x5eed);
    let err = pts
        .par_iter()
        .map(|p| (net.eval1(p) - f(p)).abs())
        .reduce(|| 0.0, f64::max);
    let spec = ApproxSpec {
        target_eps: eps,
        domain: bx.to_vec(),
        measured_sup_error: err,
        ledger_bound: ledger,
        lip_estimate: f64::NAN,
        grid_cells: 0,
        audit_points: pts.len(),
    };
    if !spec.passes() {
        return Err(ApproxError::Certification {
            measured: err.max(ledger),
            target: eps,
            cells: 0,
        });
    }
    Ok(Certified { net, spec })
}

fn leaves_coords(leaves: &[Leaf]) -> Vec<usize> {
    let mut c: Vec<usize> = leaves
        .iter()
        .flat_map(|l| match l {
            Leaf::Coord(i) | Leaf::Func(i, _) => vec![*i],
            Leaf::Linear(c, _) => c.iter().map(|e| e.0).collect(),
        })
        .collect();
    c.sort_unstable();
    c.dedup();
    c
}

/// Tensor grid (5 points per active axis) plus 1000 uniform points; inactive
/// coordinates sit at the box midpoint.
pub fn audit_points(active: Vec<usize>, bx: &[(f64, f64)], seed: u64) -> Vec<Vec<f64>> {
    let mid: Vec<f64> = bx.iter().map(|(a, b)| 0.5 * (a + b)).collect();
    let mut pts = vec![mid.clone()];
    for &i in &active {
        let mut next = Vec::with_capacity(pts.len() * 5);
        for p in &pts {
            for k in 0..5 {
                let mut q = p.clone();
                q[i] = node(bx[i].0, bx[i].1, 4, k);
                next.push(q);
            }
        }
        pts = next;
    }
    let mut rng = RngKey::new(seed).rng();
    for _ in 0..1000 {
        let mut q = mid.clone();
        for &i in &active {
            q[i] = uniform(&mut rng, bx[i].0, bx[i].1);
        }
        pts.push(q);
    }
    pts
}

/// Compact boxes for the cross-correlated Heston state and parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CchBoxes {
    pub x: (f64, f64),
    pub v: (f64, f64),
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub nu: (f64, f64),
    pub rho_x: (f64, f64),
    pub rho_v: (f64, f64),
}

impl Default for CchBoxes {
    fn default() -> Self {
        Self {
            x: (50.0, 150.0),
            v: (0.01, 0.25),
            a: (0.5, 3.0),
            b: (0.01, 0.25),
            nu: (0.05, 0.8),
            rho_x: (-0.9, 0.9),
            rho_v: (-0.9, 0.9),
        }
    }
}

impl CchBoxes {
    /// Per-asset block box `(x, v, a, b, ν, ρ_X, ρ_V)`.
    pub fn block7(&self) -> Vec<(f64, f64)> {
        vec![self.x, self.v, self.a, self.b, self.nu, self.rho_x, self.rho_v]
    }

    /// Per-asset block box without `x`.
    pub fn block6(&self) -> Vec<(f64, f64)> {
        self.block7()[1..].to_vec()
    }
}

/// Tags of the closed-form functions approximated in this module.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum FactorFunctionId {
    F1,
    F2,
    F3,
    F4,
    F5,
    F6,
    SqrtNu,
    RhoBar,
    ExpVar { t: f64 },
    Mult2,
    Mult3,
}

pub fn rho_bar(r: f64) -> f64 {
    (1.0 - r * r).max(0.0).sqrt()
}

impl FactorFunctionId {
    /// Reference value. `f1`, `f2` read `(x, v, a, b, ν, ρ_X, ρ_V)`; `f3`…`f6`
    /// read `(v, a, b, ν, ρ_X, ρ_V)`; `ExpVar` reads `(H, η, x)`.
    pub fn reference(&self, p: &[f64]) -> f64 {
        match *self {
            Self::F1 => p[0] * p[1].sqrt() * p[5],
            Self::F2 => p[0] * p[1].sqrt() * rho_bar(p[5]),
            Self::F3 => p[1] * (p[2] - p[0]),
            Self::F4 => p[0].sqrt() * p[3] * p[4] * p[5],
            Self::F5 => p[0].sqrt() * p[3] * rho_bar(p[4]) * p[5],
            Self::F6 => p[0].sqrt() * p[3] * rho_bar(p[5]),
            Self::SqrtNu => p[0].sqrt(),
            Self::RhoBar => rho_bar(p[0]),
            Self::ExpVar { t } => exp_var(p[0], p[1], p[2], t),
            Self::Mult2 => p[0] * p[1],
            Self::Mult3 => p[0] * p[1] * p[2],
        }
    }

    /// Leaves of the separable decomposition of `f1`…`f6`.
    fn leaves(&self) -> Vec<Leaf> {
        // block7 indices: x0 v1 a2 b3 nu4 rx5 rv6; block6: v0 a1 b2 nu3 rx4 rv5
        match self {
            Self::F1 => vec![Leaf::Coord(0), Leaf::Func(1, f64::sqrt), Leaf::Coord(5)],
            Self::F2 => vec![Leaf::Coord(0), Leaf::Func(1, f64::sqrt), Leaf::Func(5, rho_bar)],
            Self::F3 => vec![Leaf::Coord(1), Leaf::Linear(vec![(2, 1.0), (0, -1.0)], 0.0)],
            Self::F4 => vec![Leaf::Func(0, f64::sqrt), Leaf::Coord(3), Leaf::Coord(4), Leaf::Coord(5)],
            Self::F5 => vec![Leaf::Func(0, f64::sqrt), Leaf::Coord(3), Leaf::Func(4, rho_bar), Leaf::Coord(5)],
            Self::F6 => vec![Leaf::Func(0, f64::sqrt), Leaf::Coord(3), Leaf::Func(5, rho_bar)],
            _ => Vec::new(),
        }
    }

    fn uses_x(&self) -> bool {
        matches!(self, Self::F1 | Self::F2)
    }
}

/// `exp(√(H/2) η x − ¼ η² t^{2H})`.
pub fn exp_var(hurst: f64, eta: f64, x: f64, t: f64) -> f64 {
    ((hurst / 2.0).sqrt() * eta * x - 0.25 * eta * eta * t.powf(2.0 * hurst)).exp()
}

/// Network for one of `f1`…`f6` on the per-asset block layout.
pub fn cch_factor_net(id: FactorFunctionId, boxes: &CchBoxes, eps: f64) -> Result<ProductBlock, ApproxError> {
    let leaves = id.leaves();
    if leaves.is_empty() {
        return Err(ApproxError::Domain(f64::NAN, f64::NAN));
    }
    let bx = if id.uses_x() { boxes.block7() } else { boxes.block6() };
    product_net(&leaves, &bx, eps)
}

/// Coefficient networks of the `d`-asset cross-correlated Heston model.
///
/// `sigma[j]` maps `(x, v, θ) ∈ ℝ^{7d}` to column `j` of `σ`; `mu_bar` and
/// `sigma_bar[j]` map `(v, θ) ∈ ℝ^{6d}`. `θ` is laid out per asset as
/// `(a, b, ν, ρ_X, ρ_V)`.
#[derive(Clone, Debug)]
pub struct CchCoefficientNets {
    pub d: usize,
    pub eps: f64,
    pub sigma: Vec<ReluNetwork>,
    pub mu_bar: ReluNetwork,
    pub sigma_bar: Vec<ReluNetwork>,
    /// Certification of `f1`…`f6` in order.
    pub factors: Vec<ProductBlock>,
}

/// Indices of asset `i`'s block in the `(x, v, θ)` layout.
pub fn block7_indices(d: usize, i: usize) -> Vec<usize> {
    let t = 2 * d + 5 * i;
    vec![i, d + i, t, t + 1, t + 2, t + 3, t + 4]
}

/// Indices of asset `i`'s block in the `(v, θ)` layout.
pub fn block6_indices(d: usize, i: usize) -> Vec<usize> {
    let t = d + 5 * i;
    vec![i, t, t + 1, t + 2, t + 3, t + 4]
}

/// Places a scalar net's output in row `j` of a `d`-vector.
fn embed(net: &ReluNetwork, d: usize, j: usize) -> Result<ReluNetwork, ApproxError> {
    let e = AffineLayer::from_rows(1, (0..d).map(|r| if r == j { vec![(0, 1.0)] } else { vec![] }).collect(), vec![0.0; d])?;
    Ok(fuse_affine(&ReluNetwork::from_layers(vec![e])?, net)?)
}

fn on_block(factor: &ReluNetwork, in_dim: usize, idx: &[usize]) -> Result<ReluNetwork, ApproxError> {
    Ok(fuse_affine(factor, &selector_net(in_dim, idx))?)
}

impl CchCoefficientNets {
    pub fn build(d: usize, boxes: &CchBoxes, eps: f64) -> Result<Self, ApproxError> {
        use FactorFunctionId::*;
        if d == 0 {
            return Err(ApproxError::Domain(0.0, 0.0));
        }
        let factors = [F1, F2, F3, F4, F5, F6]
            .par_iter()
            .map(|id| cch_factor_net(*id, boxes, eps))
            .collect::<Result<Vec<_>, _>>()?;
        let f = |k: usize| &factors[k].cert.net;
        let (n7, n6) = (7 * d, 6 * d);
        let stacked = |k: usize, n: usize, idx: &dyn Fn(usize) -> Vec<usize>| -> Result<ReluNetwork, ApproxError> {
            let parts = (0..d)
                .map(|i| on_block(f(k), n, &idx(i)))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(parallel_shared(&parts)?)
        };
        let b7 = |i| block7_indices(d, i);
        let b6 = |i| block6_indices(d, i);
        let mut sigma = vec![stacked(0, n7, &b7)?];
        for j in 0..d {
            sigma.push(embed(&on_block(f(1), n7, &b7(j))?, d, j)?);
        }
        for _ in 0..d {
            sigma.push(crate::relu_net::zero_net(n7, d));
        }
        let mu_bar = stacked(2, n6, &b6)?;
        let mut sigma_bar = vec![stacked(3, n6, &b6)?];
        for j in 0..d {
            sigma_bar.push(embed(&on_block(f(4), n6, &b6(j))?, d, j)?);
        }
        for j in 0..d {
            sigma_bar.push(embed(&on_block(f(5), n6, &b6(j))?, d, j)?);
        }
        Ok(Self {
            d,
            eps,
            sigma,
            mu_bar,
            sigma_bar,
            factors,
        })
    }

    /// Total size of all coefficient networks.
    pub fn total_size(&self) -> usize {
        self.sigma.iter().chain(&self.sigma_bar).map(ReluNetwork::size).sum::<usize>() + self.mu_bar.size()
    }
}

/// Boxes for the rough Bergomi parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RBergomiBoxes {
    pub nu: (f64, f64),
    pub eta: (f64, f64),
    pub rho: (f64, f64),
    pub hurst: (f64, f64),
    pub x: (f64, f64),
}

impl Default for RBergomiBoxes {
    fn default() -> Self {
        Self {
            nu: (0.01, 0.25),
            eta: (0.5, 2.5),
            rho: (-1.0, 0.0),
            hurst: (0.05, 0.45),
            x: (50.0, 150.0),
        }
    }
}

/// `Φ³`: `√ν` on the ν-box.
pub fn sqrt_nu_net(boxes: &RBergomiBoxes, eps: f64) -> Result<Certified, ApproxError> {
    pl_approx_1d(&f64::sqrt, boxes.nu.0, boxes.nu.1, eps)
}

/// `Φ⁵`: `√(1−ρ²)` on the ρ-box.
pub fn rho_bar_net(boxes: &RBergomiBoxes, eps: f64) -> Result<Certified, ApproxError> {
    pl_approx_1d(&rho_bar, boxes.rho.0, boxes.rho.1, eps)
}

/// `Φ^{4,k}` for grid time `t`, on `H × η × x ∈ boxes.hurst × boxes.eta × x_range`.
///
/// `x` is first clamped to `x_range` exactly; the exponent
/// `A(H)·η·x − B(H)·η²` with `A = √(H/2)`, `B = ¼t^{2H}` is assembled from
/// product networks and fed to an interpolant of `exp`.
#[derive(Clone, Debug)]
pub struct ExpVarBlock {
    pub cert: Certified,
    pub t: f64,
    pub x_range: (f64, f64),
    /// Bound on the block's output over the box (plus ε).
    pub bound: f64,
}

///
/// With `window = Some(w)` the exponent is clamped to `[−w, w]` before the
/// exponential, so the block approximates `min(max(g, e^{−w}), e^{w})`. Under
/// the outer `[1/D, D]` clamp with `w = log D` this is the same function, and
/// the interpolant of `exp` stays on a range of width `2 log D`.
pub fn exp_var_net(
    t: f64,
    boxes: &RBergomiBoxes,
    x_range: (f64, f64),
    window: Option<f64>,
    eps: f64,
) -> Result<ExpVarBlock, ApproxError> {
    check_eps(eps)?;
    let (hl, hh) = boxes.hurst;
    let (el, eh) = boxes.eta;
    let (xl, xh) = x_range;
    if !(xl < xh && hl > 0.0 && hl < hh && el >= 0.0 && el < eh) {
        return Err(ApproxError::Domain(xl, xh));
    }
    let xb = xl.abs().max(xh.abs());
    let a_max = (hh / 2.0).sqrt();
    let b_fn = move |h: f64| 0.25 * t.powf(2.0 * h);
    let b_max = b_fn(hl).max(b_fn(hh));
    let e_hi = a_max * eh * xb;
    let e_lo = -a_max * eh * xb - b_max * eh * eh;
    if window.is_some_and(|w| w.is_nan() || w <= 0.0) {
        return Err(ApproxError::Domain(-window.unwrap(), window.unwrap()));
    }
    let top = window.map_or(e_hi, |w| w.min(e_hi));
    // stages: exp interpolant gets eps/2, the exponent eps/2 / Lip(exp)
    let lip_exp = (top + 0.5).exp();
    let mut budget = 0.5 * eps / lip_exp;
    for _ in 0..6 {
        let s = budget / 6.0;
        // inputs: (H, η, x)
        let a_pl = pl_approx_1d(&|h: f64| (h / 2.0).sqrt(), hl, hh, (s / (eh * xb).max(1.0)).min(0.49))?;
        let b_pl = pl_approx_1d(&b_fn, hl, hh, (s / (eh * eh).max(1.0)).min(0.49))?;
        let a_net = fuse_affine(&a_pl.net, &selector_net(3, &[0]))?;
        let b_net = fuse_affine(&b_pl.net, &selector_net(3, &[0]))?;
        let eta_rail = rail(3, &[1], 3);
        let x_clamped = fuse_affine(&clamp_net(xl, xh), &selector_net(3, &[2]))?;
        let (ea, eb) = (a_pl.spec.measured_sup_error, b_pl.spec.measured_sup_error);
        // p = A·η, then p·x; q = η², then B·q
        let m_ae = mult_net_bounds(a_max + ea, eh, (s / xb.max(1.0)).min(0.49))?;
        let m_ee = mult_net_bounds(eh, eh, (s / b_max.max(1e-3)).min(0.49))?;
        let p_b = a_max * eh;
        let e_p = m_ae.spec.ledger_bound + eh * ea;
        let m_px = mult_net_bounds(p_b + e_p, xb, s.min(0.49))?;
        let e_q = m_ee.spec.ledger_bound;
        let m_bq = mult_net_bounds(b_max + eb, eh * eh + e_q, s.min(0.49))?;
        let e_exp = e_p * xb + m_px.spec.ledger_bound + eb * eh * eh + b_max * e_q + eb * e_q + m_bq.spec.ledger_bound;
        // stage 1: (A, η, η, x_c, B, η) ; stage 2: (A·η, x_c, B, η²) ; stage 3: (p·x, B·q)
        let s1 = crate::relu_net::stack_padded(&[a_net, eta_rail.clone(), eta_rail.clone(), x_clamped, b_net, eta_rail])?;
        let d2 = m_ae.net.depth().max(m_ee.net.depth());
        let s2 = parallelize(&[
            pad_to_depth(&m_ae.net, d2)?,
            rail(1, &[0], d2),
            rail(1, &[0], d2),
            pad_to_depth(&fuse_affine(&m_ee.net, &selector_net(1, &[0, 0]))?, d2)?,
        ])?;
        // s1 outputs (A, η, η, x, B, η); s2 expects (A,η | x | B | η) with η² from one η
        let s1_to_s2 = selector_net(6, &[0, 1, 3, 4, 2]);
        let inner = fuse_affine(&s2, &fuse_affine(&s1_to_s2, &s1)?)?;
        let d3 = m_px.net.depth().max(m_bq.net.depth());
        let s3 = parallelize(&[pad_to_depth(&m_px.net, d3)?, pad_to_depth(&m_bq.net, d3)?])?;
        let exponent = fuse_affine(&s3, &inner)?;
        let diff = crate::relu_net::linear_net(&[vec![1.0, -1.0]], &[0.0])?;
        let mut arg = fuse_affine(&diff, &exponent)?;
        let (plo, phi) = match window {
            Some(w) => {
                arg = compose(&clamp_net(-w, w), &arg)?;
                (-w, w)
            }
            None => (e_lo - e_exp - 1e-9, e_hi + e_exp + 1e-9),
        };
        let exp_pl = pl_approx_1d(&f64::exp, plo, phi, (0.5 * eps).min(0.49))?;
        let net = fuse_affine(&exp_pl.net, &arg)?;
        let ledger = exp_pl.spec.measured_sup_error + (top + e_exp).exp() * e_exp;
        if ledger > eps {
            budget *= 0.5;
            continue;
        }
        let bx = vec![(hl, hh), (el, eh), (xl, xh)];
        let pts = audit_points(vec![0, 1, 2], &bx, 0xe4);
        let f = |p: &[f64]| match window {
            Some(w) => exp_var(p[0], p[1], p[2], t).clamp((-w).exp(), w.exp()),
            None => exp_var(p[0], p[1], p[2], t),
        };
        let err = pts
            .par_iter()
            .map(|p| (net.eval1(p) - f(p)).abs())
            .reduce(|| 0.0, f64::max);
        let lip = lip_in_x(&net, &bx);
        let spec = ApproxSpec {
            target_eps: eps,
            domain: bx,
            measured_sup_error: err,
            ledger_bound: ledger,
            lip_estimate: lip,
            grid_cells: exp_pl.spec.grid_cells,
            audit_points: pts.len(),
        };
        if !spec.passes() {
            return Err(ApproxError::Certification {
                measured: err.max(ledger),
                target: eps,
                cells: spec.grid_cells,
            });
        }
        return Ok(ExpVarBlock {
            cert: Certified { net, spec },
            t,
            x_range,
            bound: top.exp() + eps,
        });
    }
    Err(ApproxError::Ledger {
        ledger: f64::INFINITY,
        target: eps,
    })
}

/// Largest difference quotient in the last coordinate over a scan.
fn lip_in_x(net: &ReluNetwork, bx: &[(f64, f64)]) -> f64 {
    let mut lip: f64 = 0.0;
    for i in 0..=4 {
        for j in 0..=4 {
            let h = node(bx[0].0, bx[0].1, 4, i);
            let e = node(bx[1].0, bx[1].1, 4, j);
            let xs: Vec<f64> = (0..=200).map(|k| node(bx[2].0, bx[2].1, 200, k)).collect();
            let ys: Vec<f64> = xs.iter().map(|&x| net.eval1(&[h, e, x])).collect();
            for k in 0..200 {
                lip = lip.max(((ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k])).abs());
            }
        }
    }
    lip
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pl_identity_is_exact() {
        let c = pl_approx_1d(&|x| x, 0.0, 1.0, 0.1).unwrap();
        assert_eq!(c.spec.measured_sup_error, 0.0);
    }

    #[test]
    fn pl_sqrt_and_exp_certify() {
        let c = pl_approx_1d(&f64::sqrt, 0.01, 1.0, 1e-3).unwrap();
        assert!(c.spec.measured_sup_error <= 1e-3);
        assert_eq!(c.net.depth(), 3);
        let c = pl_approx_1d(&f64::exp, -1.0, 1.0, 1e-2).unwrap();
        assert!(c.spec.measured_sup_error <= 1e-2);
        assert!(c.net.size() <= 4 * c.spec.grid_cells + 4);
    }

    #[test]
    fn pl_rejects_bad_input() {
        assert!(matches!(pl_approx_1d(&f64::ln, -1.0, 1.0, 0.1), Err(ApproxError::NonFinite(_))));
        assert!(pl_approx_1d(&f64::sin, 1.0, 0.0, 0.1).is_err());
        assert!(pl_approx_1d(&f64::sin, 0.0, 1.0, 0.7).is_err());
    }

    #[test]
    fn mult_examples() {
        let m = mult_net(2.0, 1e-3).unwrap();
        assert_eq!(m.net.eval1(&[1.7, 0.0]), 0.0);
        assert_eq!(m.net.eval1(&[0.0, -1.3]), 0.0);
        assert!((m.net.eval1(&[1.5, 2.0]) - 3.0).abs() <= 1e-3);
        assert!((m.net.eval1(&[-2.0, 2.0]) + 4.0).abs() <= 1e-3);
    }

    #[test]
    fn mult3_examples() {
        let m = mult3_net(4.0, 1e-2).unwrap();
        assert_eq!(m.net.eval1(&[1.2, -3.1, 0.0]), 0.0);
        assert_eq!(m.net.eval1(&[0.0, -3.1, 2.0]), 0.0);
        assert!((m.net.eval1(&[1.0, 1.0, 1.0]) - 1.0).abs() <= 1e-2);
        assert!((m.net.eval1(&[2.0, 3.0, 4.0]) - 24.0).abs() <= 1e-2);
    }

    #[test]
    fn factor_examples() {
        let bx = CchBoxes::default();
        let f3 = cch_factor_net(FactorFunctionId::F3, &bx, 1e-2).unwrap();
        // layout (v, a, b, ν, ρ_X, ρ_V)
        assert!((f3.cert.net.eval1(&[0.09, 2.0, 0.04, 0.3, 0.0, 0.0]) + 0.1).abs() <= 1e-2);
        let f1 = cch_factor_net(FactorFunctionId::F1, &bx, 1e-2).unwrap();
        assert_eq!(f1.cert.net.eval1(&[100.0, 0.04, 1.0, 0.1, 0.3, 0.0, 0.2]), 0.0);
        let wide = CchBoxes { rho_v: (-1.0, 1.0), ..bx };
        let f6 = cch_factor_net(FactorFunctionId::F6, &wide, 2e-2).unwrap();
        for r in [-1.0, 1.0] {
            assert!(f6.cert.net.eval1(&[0.2, 1.0, 0.1, 0.5, 0.3, r]).abs() <= 2e-2);
        }
    }

    #[test]
    fn exp_var_examples() {
        let boxes = RBergomiBoxes { eta: (0.0, 1.5), hurst: (0.1, 0.4), ..Default::default() };
        let b = exp_var_net(1.0, &boxes, (-2.0, 2.0), None, 1e-2).unwrap();
        assert!((b.cert.net.eval1(&[0.25, 1.0, 0.0]) - (-0.25f64).exp()).abs() <= 1e-2);
        assert!((b.cert.net.eval1(&[0.3, 0.0, 1.7]) - 1.0).abs() <= 1e-2);
        assert!(b.cert.spec.lip_estimate.is_finite());
        let full = RBergomiBoxes::default();
        let w = exp_var_net(0.5, &full, (-40.0, 40.0), Some(5f64.ln()), 1e-2).unwrap();
        assert!((w.cert.net.eval1(&[0.45, 2.5, 40.0]) - 5.0).abs() <= 1e-2);
        assert!((w.cert.net.eval1(&[0.05, 2.5, -40.0]) - 0.2).abs() <= 1e-2);
    }
}
