//! Feedforward ReLU networks with exact size/depth accounting.
//!
//! A network `ψ = W_L ∘ (ρ∘W_{L−1}) ∘ … ∘ (ρ∘W_1)` is stored as its list of
//! affine maps. Conventions:
//!
//! * `depth = L + 1` where `L` is the number of affine maps,
//! * `size` counts nonzero weight entries plus nonzero bias entries,
//! * `size_out` counts the nonzeros of the last affine map only,
//! * `width` is the largest of `d_0, …, d_L`.
//!
//! Weights are stored row-compressed. Storage is an implementation detail:
//! every metric counts values that are nonzero, so a stored zero (for example
//! a weight multiplied by a zero Brownian increment) never contributes.

use serde::Deserialize;
use std::fmt::Write as _;

use crate::error::NetError;

/// One affine map `x ↦ A x + b` in compressed-row form.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineLayer {
    in_dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    bias: Vec<f64>,
}

impl AffineLayer {
    /// Builds a layer from explicit rows of `(column, value)` entries.
    pub fn from_rows(
        in_dim: usize,
        rows: Vec<Vec<(usize, f64)>>,
        bias: Vec<f64>,
    ) -> Result<Self, NetError> {
        if rows.len() != bias.len() {
            return Err(NetError::Shape(format!(
                "{} weight rows but {} bias entries",
                rows.len(),
                bias.len()
            )));
        }
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                if c >= in_dim {
                    return Err(NetError::Shape(format!(
                        "column {c} out of range for input dimension {in_dim}"
                    )));
                }
                if !v.is_finite() {
                    return Err(NetError::NonFinite);
                }
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(NetError::NonFinite);
        }
        Ok(Self {
            in_dim,
            row_ptr,
            cols,
            vals,
            bias,
        })
    }

    /// Builds a layer from a dense row-major matrix. Zero entries are not stored.
    pub fn from_dense(weights: &[Vec<f64>], bias: Vec<f64>) -> Result<Self, NetError> {
        let in_dim = weights.first().map_or(0, Vec::len);
        let mut rows = Vec::with_capacity(weights.len());
        for w in weights {
            if w.len() != in_dim {
                return Err(NetError::Shape("ragged weight matrix".into()));
            }
            rows.push(
                w.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v))
                    .collect(),
            );
        }
        Self::from_rows(in_dim, rows, bias)
    }

    fn from_parts_unchecked(
        in_dim: usize,
        row_ptr: Vec<usize>,
        cols: Vec<usize>,
        vals: Vec<f64>,
        bias: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(row_ptr.len(), bias.len() + 1);
        Self {
            in_dim,
            row_ptr,
            cols,
            vals,
            bias,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.bias.len()
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Stored entries of row `i` as `(column, value)` pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    /// Number of stored weight entries (including explicit zeros).
    pub fn stored(&self) -> usize {
        self.vals.len()
    }

    /// Nonzero weight entries.
    pub fn nnz_weights(&self) -> usize {
        self.vals.iter().filter(|v| **v != 0.0).count()
    }

    /// Nonzero bias entries.
    pub fn nnz_bias(&self) -> usize {
        self.bias.iter().filter(|v| **v != 0.0).count()
    }

    pub fn size(&self) -> usize {
        self.nnz_weights() + self.nnz_bias()
    }

    /// `y = A x + b`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *yi = acc + self.bias[i];
        }
    }

    /// Dense copy of the weight matrix.
    pub fn dense_weights(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.in_dim]; self.out_dim()];
        for (i, row) in out.iter_mut().enumerate() {
            for (c, v) in self.row(i) {
                row[c] += v;
            }
        }
        out
    }

    /// Copy with the `k`-th stored weight multiplied by `factor`.
    pub fn with_scaled_entry(&self, k: usize, factor: f64) -> Self {
        let mut out = self.clone();
        out.vals[k] *= factor;
        out
    }

    /// Copy with the weights and bias multiplied by `s`.
    fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= s);
        out.bias.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Rows of `self` followed by rows of `other`, same input.
    fn vstack(parts: &[&AffineLayer]) -> Self {
        let in_dim = parts[0].in_dim;
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut bias = Vec::new();
        for p in parts {
            debug_assert_eq!(p.in_dim, in_dim);
            for i in 0..p.out_dim() {
                for (c, v) in p.row(i) {
                    cols.push(c);
                    vals.push(v);
                }
                row_ptr.push(cols.len());
            }
            bias.extend_from_slice(&p.bias);
        }
        Self::from_parts_unchecked(in_dim, row_ptr, cols, vals, bias)
    }

    /// Block-diagonal stacking: inputs and outputs are concatenated.
    fn block_diag(parts: &[&AffineLayer]) -> Self {
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut bias = Vec::new();
        let mut offset = 0;
        for p in parts {
            for i in 0..p.out_dim() {
                for (c, v) in p.row(i) {
                    cols.push(c + offset);
                    vals.push(v);
                }
                row_ptr.push(cols.len());
            }
            bias.extend_from_slice(&p.bias);
            offset += p.in_dim;
        }
        Self::from_parts_unchecked(offset, row_ptr, cols, vals, bias)
    }

    /// `Σ w_i A_i` acting on concatenated inputs, bias `Σ w_i b_i`.
    fn weighted_hstack(parts: &[&AffineLayer], w: &[f64]) -> Self {
        let out = parts[0].out_dim();
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for i in 0..out {
            let mut offset = 0;
            for (p, wi) in parts.iter().zip(w) {
                for (c, v) in p.row(i) {
                    cols.push(c + offset);
                    vals.push(wi * v);
                }
                offset += p.in_dim;
            }
            row_ptr.push(cols.len());
        }
        let in_dim = parts.iter().map(|p| p.in_dim).sum();
        let mut bias = vec![0.0; out];
        for (p, wi) in parts.iter().zip(w) {
            for (b, pb) in bias.iter_mut().zip(&p.bias) {
                *b += wi * pb;
            }
        }
        Self::from_parts_unchecked(in_dim, row_ptr, cols, vals, bias)
    }

    /// `Σ w_i (A_i x + b_i)` with a shared input; entries merged per column.
    fn weighted_merge(parts: &[&AffineLayer], w: &[f64]) -> Self {
        let in_dim = parts[0].in_dim;
        let out = parts[0].out_dim();
        let mut acc = vec![0.0; in_dim];
        let mut touched = vec![false; in_dim];
        let mut order = Vec::new();
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for i in 0..out {
            for (p, wi) in parts.iter().zip(w) {
                for (c, v) in p.row(i) {
                    if !touched[c] {
                        touched[c] = true;
                        order.push(c);
                    }
                    acc[c] += wi * v;
                }
            }
            order.sort_unstable();
            for &c in &order {
                cols.push(c);
                vals.push(acc[c]);
                acc[c] = 0.0;
                touched[c] = false;
            }
            order.clear();
            row_ptr.push(cols.len());
        }
        let mut bias = vec![0.0; out];
        for (p, wi) in parts.iter().zip(w) {
            for (b, pb) in bias.iter_mut().zip(&p.bias) {
                *b += wi * pb;
            }
        }
        Self::from_parts_unchecked(in_dim, row_ptr, cols, vals, bias)
    }

    /// `[A; −A]`, `[b; −b]`: the inner half of the identity splice.
    fn split_pm(&self) -> Self {
        let neg = self.scaled(-1.0);
        Self::vstack(&[self, &neg])
    }

    /// `A [I, −I]`: the outer half of the identity splice.
    fn merge_pm(&self) -> Self {
        let n = self.in_dim;
        let mut row_ptr = vec![0];
        let mut cols = Vec::with_capacity(2 * self.vals.len());
        let mut vals = Vec::with_capacity(2 * self.vals.len());
        for i in 0..self.out_dim() {
            for (c, v) in self.row(i) {
                cols.push(c);
                vals.push(v);
            }
            for (c, v) in self.row(i) {
                cols.push(c + n);
                vals.push(-v);
            }
            row_ptr.push(cols.len());
        }
        Self::from_parts_unchecked(2 * n, row_ptr, cols, vals, self.bias.clone())
    }

    /// The product map `x ↦ A(Wx + b) + c` for `self = (A, c)`, `inner = (W, b)`.
    fn after(&self, inner: &AffineLayer) -> Self {
        let in_dim = inner.in_dim;
        let mut acc = vec![0.0; in_dim];
        let mut touched = vec![false; in_dim];
        let mut order = Vec::new();
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut bias = Vec::with_capacity(self.out_dim());
        for i in 0..self.out_dim() {
            let mut b = 0.0;
            for (j, a) in self.row(i) {
                for (c, w) in inner.row(j) {
                    if !touched[c] {
                        touched[c] = true;
                        order.push(c);
                    }
                    acc[c] += a * w;
                }
                b += a * inner.bias[j];
            }
            bias.push(b + self.bias[i]);
            order.sort_unstable();
            for &c in &order {
                cols.push(c);
                vals.push(acc[c]);
                acc[c] = 0.0;
                touched[c] = false;
            }
            order.clear();
            row_ptr.push(cols.len());
        }
        Self::from_parts_unchecked(in_dim, row_ptr, cols, vals, bias)
    }
}

/// Size, depth, width and output-layer size of a network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub struct NetMetrics {
    pub size: usize,
    pub depth: usize,
    pub width: usize,
    pub size_out: usize,
}

/// A feedforward ReLU network; immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct ReluNetwork {
    layers: Vec<AffineLayer>,
}

impl ReluNetwork {
    pub fn from_layers(layers: Vec<AffineLayer>) -> Result<Self, NetError> {
        if layers.is_empty() {
            return Err(NetError::Empty);
        }
        for w in layers.windows(2) {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(NetError::Shape(format!(
                    "layer maps to {} but next layer expects {}",
                    w[0].out_dim(),
                    w[1].in_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    fn new_unchecked(layers: Vec<AffineLayer>) -> Self {
        debug_assert!(Self::from_layers(layers.clone()).is_ok());
        Self { layers }
    }

    pub fn layers(&self) -> &[AffineLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Number of affine maps plus one.
    pub fn depth(&self) -> usize {
        self.layers.len() + 1
    }

    pub fn size(&self) -> usize {
        self.layers.iter().map(AffineLayer::size).sum()
    }

    pub fn size_out(&self) -> usize {
        self.layers[self.layers.len() - 1].size()
    }

    pub fn width(&self) -> usize {
        self.layers
            .iter()
            .map(AffineLayer::out_dim)
            .chain(std::iter::once(self.input_dim()))
            .max()
            .unwrap_or(0)
    }

    pub fn metrics(&self) -> NetMetrics {
        NetMetrics {
            size: self.size(),
            depth: self.depth(),
            width: self.width(),
            size_out: self.size_out(),
        }
    }

    /// True when there is at least one hidden layer.
    pub fn has_hidden(&self) -> bool {
        self.layers.len() >= 2
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>, NetError> {
        if x.len() != self.input_dim() {
            return Err(NetError::Dim {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(self.eval(x))
    }

    /// Evaluation without the dimension check.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut next = vec![0.0; layer.out_dim()];
            layer.apply(&cur, &mut next);
            if l < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            cur = next;
        }
        cur
    }

    /// Scalar output convenience.
    pub fn eval1(&self, x: &[f64]) -> f64 {
        self.eval(x)[0]
    }

    /// Dense JSON: `{"layers":[{"weights":[[…]],"bias":[…]}…]}` with 17
    /// significant digits per value.
    pub fn to_json(&self) -> String {
        fn num(s: &mut String, v: f64) {
            if v == 0.0 {
                s.push('0');
            } else {
                let _ = write!(s, "{v:.16e}");
            }
        }
        let mut s = String::from("{\"layers\":[");
        for (l, layer) in self.layers.iter().enumerate() {
            if l > 0 {
                s.push(',');
            }
            s.push_str("{\"weights\":[");
            for (i, row) in layer.dense_weights().iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                s.push('[');
                for (j, v) in row.iter().enumerate() {
                    if j > 0 {
                        s.push(',');
                    }
                    num(&mut s, *v);
                }
                s.push(']');
            }
            s.push_str("],\"bias\":[");
            for (i, v) in layer.bias().iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                num(&mut s, *v);
            }
            s.push_str("]}");
        }
        s.push_str("]}");
        s
    }

    pub fn from_json(text: &str) -> Result<Self, NetError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Doc {
            layers: Vec<Layer>,
        }
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Layer {
            weights: Vec<Vec<f64>>,
            bias: Vec<f64>,
        }
        let doc: Doc = serde_json::from_str(text).map_err(|e| NetError::Json(e.to_string()))?;
        let layers = doc
            .layers
            .into_iter()
            .map(|l| {
                if l.weights.is_empty() {
                    return Err(NetError::Shape("layer without rows".into()));
                }
                AffineLayer::from_dense(&l.weights, l.bias)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_layers(layers)
    }
}

/// Identity network `I_{d,l}` of depth `l`.
///
/// For `l = 2` this is the single affine map `x ↦ x`; for larger `l` the
/// input is split into `(x⁺, (−x)⁺)`, carried through `l − 3` diagonal layers
/// and recombined, so `size = 2d(l − 1)`.
pub fn identity_net(d: usize, l: usize) -> Result<ReluNetwork, NetError> {
    if l < 2 {
        return Err(NetError::Depth(format!("identity depth must be >= 2, got {l}")));
    }
    if d == 0 {
        return Err(NetError::Shape("identity on zero dimensions".into()));
    }
    Ok(rail(d, &(0..d).collect::<Vec<_>>(), l))
}

/// Identity on the selected coordinates of a `in_dim`-vector, depth `l ≥ 2`.
pub fn rail(in_dim: usize, idx: &[usize], l: usize) -> ReluNetwork {
    assert!(l >= 2, "rail depth must be >= 2");
    let k = idx.len();
    if l == 2 {
        return ReluNetwork::new_unchecked(vec![selector_layer(in_dim, idx)]);
    }
    let mut first_rows: Vec<Vec<(usize, f64)>> = idx.iter().map(|&c| vec![(c, 1.0)]).collect();
    first_rows.extend(idx.iter().map(|&c| vec![(c, -1.0)]));
    let mut layers = vec![AffineLayer::from_rows(in_dim, first_rows, vec![0.0; 2 * k]).unwrap()];
    for _ in 0..l - 3 {
        let rows = (0..2 * k).map(|i| vec![(i, 1.0)]).collect();
        layers.push(AffineLayer::from_rows(2 * k, rows, vec![0.0; 2 * k]).unwrap());
    }
    let rows = (0..k).map(|i| vec![(i, 1.0), (i + k, -1.0)]).collect();
    layers.push(AffineLayer::from_rows(2 * k, rows, vec![0.0; k]).unwrap());
    ReluNetwork::new_unchecked(layers)
}

fn selector_layer(in_dim: usize, idx: &[usize]) -> AffineLayer {
    let rows = idx.iter().map(|&c| vec![(c, 1.0)]).collect();
    AffineLayer::from_rows(in_dim, rows, vec![0.0; idx.len()]).unwrap()
}

/// Single affine layer `x ↦ Ax + b`.
pub fn linear_net(a: &[Vec<f64>], b: &[f64]) -> Result<ReluNetwork, NetError> {
    if a.len() != b.len() {
        return Err(NetError::Shape("A and b row counts differ".into()));
    }
    if a.is_empty() {
        return Err(NetError::Empty);
    }
    ReluNetwork::from_layers(vec![AffineLayer::from_dense(a, b.to_vec())?])
}

/// Linear map that extracts coordinates `idx` from an `in_dim`-vector.
pub fn selector_net(in_dim: usize, idx: &[usize]) -> ReluNetwork {
    ReluNetwork::new_unchecked(vec![selector_layer(in_dim, idx)])
}

/// The zero map `ℝ^{in_dim} → ℝ^{out_dim}`, size 0.
pub fn zero_net(in_dim: usize, out_dim: usize) -> ReluNetwork {
    let rows = vec![Vec::new(); out_dim];
    ReluNetwork::new_unchecked(vec![AffineLayer::from_rows(in_dim, rows, vec![0.0; out_dim]).unwrap()])
}

fn check_equal_depth(nets: &[ReluNetwork]) -> Result<usize, NetError> {
    let first = nets.first().ok_or(NetError::Empty)?;
    let depth = first.depth();
    if let Some(bad) = nets.iter().find(|n| n.depth() != depth) {
        return Err(NetError::Depth(format!(
            "depths differ: {} vs {}",
            depth,
            bad.depth()
        )));
    }
    Ok(depth)
}

/// `FP(Φ¹, …, Φⁿ)(x¹, …, xⁿ) = (Φ¹(x¹), …, Φⁿ(xⁿ))`.
pub fn parallelize(nets: &[ReluNetwork]) -> Result<ReluNetwork, NetError> {
    let depth = check_equal_depth(nets)?;
    let layers = (0..depth - 1)
        .map(|l| {
            let parts: Vec<&AffineLayer> = nets.iter().map(|n| &n.layers[l]).collect();
            AffineLayer::block_diag(&parts)
        })
        .collect();
    Ok(ReluNetwork::new_unchecked(layers))
}

/// `x ↦ (Φ¹(x), …, Φⁿ(x))` for nets sharing one input; size is the sum of sizes.
pub fn parallel_shared(nets: &[ReluNetwork]) -> Result<ReluNetwork, NetError> {
    let depth = check_equal_depth(nets)?;
    let in_dim = nets[0].input_dim();
    if nets.iter().any(|n| n.input_dim() != in_dim) {
        return Err(NetError::Shape("shared-input nets with different input dims".into()));
    }
    let mut layers = Vec::with_capacity(depth - 1);
    let firsts: Vec<&AffineLayer> = nets.iter().map(|n| &n.layers[0]).collect();
    layers.push(AffineLayer::vstack(&firsts));
    for l in 1..depth - 1 {
        let parts: Vec<&AffineLayer> = nets.iter().map(|n| &n.layers[l]).collect();
        layers.push(AffineLayer::block_diag(&parts));
    }
    Ok(ReluNetwork::new_unchecked(layers))
}

/// `Φ¹ ⊙ Φ²` by the identity splice: the last map of `inner` is doubled as
/// `[W; −W]`, the first map of `outer` becomes `A[I, −I]`.
pub fn compose(outer: &ReluNetwork, inner: &ReluNetwork) -> Result<ReluNetwork, NetError> {
    if inner.output_dim() != outer.input_dim() {
        return Err(NetError::Dim {
            expected: outer.input_dim(),
            got: inner.output_dim(),
        });
    }
    let n_in = inner.layers.len();
    let mut layers = Vec::with_capacity(n_in + outer.layers.len());
    layers.extend(inner.layers[..n_in - 1].iter().cloned());
    layers.push(inner.layers[n_in - 1].split_pm());
    layers.push(outer.layers[0].merge_pm());
    layers.extend(outer.layers[1..].iter().cloned());
    Ok(ReluNetwork::new_unchecked(layers))
}

/// Composition by multiplying the adjacent affine maps; depth is one less
/// than [`compose`] and size laws are not guaranteed.
pub fn fuse_affine(outer: &ReluNetwork, inner: &ReluNetwork) -> Result<ReluNetwork, NetError> {
    if inner.output_dim() != outer.input_dim() {
        return Err(NetError::Dim {
            expected: outer.input_dim(),
            got: inner.output_dim(),
        });
    }
    let n_in = inner.layers.len();
    let mut layers = Vec::with_capacity(n_in + outer.layers.len() - 1);
    layers.extend(inner.layers[..n_in - 1].iter().cloned());
    layers.push(outer.layers[0].after(&inner.layers[n_in - 1]));
    layers.extend(outer.layers[1..].iter().cloned());
    Ok(ReluNetwork::new_unchecked(layers))
}

/// `x ↦ Σ wᵢ Φⁱ(x)` for equal-depth nets sharing input and output dims.
pub fn weighted_sum(nets: &[ReluNetwork], weights: &[f64]) -> Result<ReluNetwork, NetError> {
    let depth = check_equal_depth(nets)?;
    if nets.len() != weights.len() {
        return Err(NetError::Shape("one weight per network required".into()));
    }
    let (in_dim, out_dim) = (nets[0].input_dim(), nets[0].output_dim());
    if nets.iter().any(|n| n.input_dim() != in_dim || n.output_dim() != out_dim) {
        return Err(NetError::Shape("weighted sum needs matching input/output dims".into()));
    }
    if depth == 2 {
        let parts: Vec<&AffineLayer> = nets.iter().map(|n| &n.layers[0]).collect();
        return Ok(ReluNetwork::new_unchecked(vec![AffineLayer::weighted_merge(
            &parts, weights,
        )]));
    }
    let mut layers = Vec::with_capacity(depth - 1);
    let firsts: Vec<&AffineLayer> = nets.iter().map(|n| &n.layers[0]).collect();
    layers.push(AffineLayer::vstack(&firsts));
    for l in 1..depth - 2 {
        let parts: Vec<&AffineLayer> = nets.iter().map(|n| &n.layers[l]).collect();
        layers.push(AffineLayer::block_diag(&parts));
    }
    let lasts: Vec<&AffineLayer> = nets.iter().map(|n| &n.layers[depth - 2]).collect();
    layers.push(AffineLayer::weighted_hstack(&lasts, weights));
    Ok(ReluNetwork::new_unchecked(layers))
}

/// Pads `net` to `depth` by composing an identity network after it.
pub fn pad_to_depth(net: &ReluNetwork, depth: usize) -> Result<ReluNetwork, NetError> {
    match net.depth().cmp(&depth) {
        std::cmp::Ordering::Equal => Ok(net.clone()),
        std::cmp::Ordering::Greater => Err(NetError::Depth(format!(
            "cannot pad depth {} down to {depth}",
            net.depth()
        ))),
        std::cmp::Ordering::Less => {
            let id = identity_net(net.output_dim(), depth - net.depth() + 1)?;
            compose(&id, net)
        }
    }
}

/// Pads every net to the largest depth and stacks them on a shared input.
pub fn stack_padded(nets: &[ReluNetwork]) -> Result<ReluNetwork, NetError> {
    let depth = nets.iter().map(ReluNetwork::depth).max().ok_or(NetError::Empty)?;
    let padded = nets
        .iter()
        .map(|n| pad_to_depth(n, depth))
        .collect::<Result<Vec<_>, _>>()?;
    parallel_shared(&padded)
}

/// `Φ^min_N(x) = min(x, N)` with the displayed one-hidden-layer weights.
pub fn min_net(n: f64) -> ReluNetwork {
    let l1 = AffineLayer::from_dense(
        &[vec![1.0], vec![-1.0], vec![1.0], vec![-1.0]],
        vec![n, -n, -n, n],
    )
    .unwrap();
    let l2 = AffineLayer::from_dense(&[vec![0.5, -0.5, -0.5, -0.5]], vec![0.0]).unwrap();
    ReluNetwork::new_unchecked(vec![l1, l2])
}

/// `Φ^max_N(x) = max(x, N)`.
pub fn max_net(n: f64) -> ReluNetwork {
    let l1 = AffineLayer::from_dense(
        &[vec![-1.0], vec![1.0], vec![-1.0], vec![1.0]],
        vec![-n, n, n, -n],
    )
    .unwrap();
    let l2 = AffineLayer::from_dense(&[vec![-0.5, 0.5, 0.5, 0.5]], vec![0.0]).unwrap();
    ReluNetwork::new_unchecked(vec![l1, l2])
}

/// `x ↦ min(max(x, lo), hi)` as `Φ^min_hi ⊙ Φ^max_lo`.
pub fn clamp_net(lo: f64, hi: f64) -> ReluNetwork {
    compose(&min_net(hi), &max_net(lo)).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_two_two_one() {
        let l1 = AffineLayer::from_dense(&[vec![1.0, -1.0], vec![2.0, 0.5]], vec![0.5, -1.0]).unwrap();
        let l2 = AffineLayer::from_dense(&[vec![1.0, 3.0]], vec![-2.0]).unwrap();
        let net = ReluNetwork::from_layers(vec![l1, l2]).unwrap();
        // hidden: relu(1 - 2 + 0.5) = 0, relu(2 + 1 - 1) = 2; out = 0 + 6 - 2
        assert_eq!(net.evaluate(&[1.0, 2.0]).unwrap(), vec![4.0]);
        assert_eq!(net.metrics(), NetMetrics { size: 9, depth: 3, width: 2, size_out: 3 });
    }

    #[test]
    fn min_max_displayed_weights() {
        let m = min_net(5.0);
        assert_eq!(m.layers()[0].dense_weights(), vec![vec![1.0], vec![-1.0], vec![1.0], vec![-1.0]]);
        assert_eq!(m.layers()[0].bias(), &[5.0, -5.0, -5.0, 5.0]);
        assert_eq!(m.layers()[1].dense_weights(), vec![vec![0.5, -0.5, -0.5, -0.5]]);
        assert_eq!(m.eval1(&[7.0]), 5.0);
        assert_eq!(m.eval1(&[3.0]), 3.0);
        assert_eq!(m.size(), 12);
        assert_eq!(max_net(5.0).size(), 12);
        for x in [-1.0, 0.0, 2.0] {
            assert_eq!(min_net(0.0).eval1(&[x]), f64::min(x, 0.0));
        }
        assert_eq!(min_net(0.0).size(), 8);
    }

    #[test]
    fn clamp_examples() {
        let c = compose(&max_net(0.25), &min_net(4.0)).unwrap();
        assert_eq!(c.eval1(&[10.0]), 4.0);
        assert_eq!(c.eval1(&[0.1]), 0.25);
    }

    #[test]
    fn identity_examples() {
        let id = identity_net(3, 4).unwrap();
        assert_eq!(id.eval(&[1.0, -2.0, 0.0]), vec![1.0, -2.0, 0.0]);
        assert_eq!(id.depth(), 4);
        assert!(id.size() <= 2 * 3 * 4);
        assert!(identity_net(2, 1).is_err());
        assert_eq!(identity_net(2, 2).unwrap().depth(), 2);
    }

    #[test]
    fn linear_examples() {
        let id = linear_net(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[0.0, 0.0]).unwrap();
        assert_eq!(id.eval(&[3.0, 4.0]), vec![3.0, 4.0]);
        assert_eq!(linear_net(&vec![vec![0.0; 3]; 2], &[0.0; 2]).unwrap().size(), 0);
        let dense = linear_net(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(dense.size(), 9);
    }

    #[test]
    fn parallel_examples() {
        let id = identity_net(1, 3).unwrap();
        let fp = parallelize(&[id.clone(), id]).unwrap();
        assert_eq!(fp.eval(&[1.0, 2.0]), vec![1.0, 2.0]);
        let fp = parallelize(&[min_net(5.0), max_net(0.2)]).unwrap();
        assert_eq!(fp.eval(&[7.0, 0.0]), vec![5.0, 0.2]);
        assert!(parallelize(&[min_net(1.0), identity_net(1, 2).unwrap()]).is_err());
    }

    #[test]
    fn compose_example() {
        let lin = linear_net(&[vec![2.0]], &[0.0]).unwrap();
        let c = compose(&min_net(5.0), &lin).unwrap();
        assert_eq!(c.eval1(&[3.0]), 5.0);
        assert_eq!(c.depth(), min_net(5.0).depth() + lin.depth() - 1);
        assert!(compose(&min_net(1.0), &identity_net(2, 2).unwrap()).is_err());
    }

    #[test]
    fn weighted_sum_examples() {
        let n = compose(&min_net(1.0), &linear_net(&[vec![1.0, -1.0]], &[0.5]).unwrap()).unwrap();
        let z = weighted_sum(&[n.clone(), n.clone()], &[1.0, -1.0]).unwrap();
        for x in [[0.3, 0.1], [4.0, -2.0], [-1.0, 5.0]] {
            assert_eq!(z.eval1(&x), 0.0);
            assert_eq!(weighted_sum(std::slice::from_ref(&n), &[2.0]).unwrap().eval1(&x), 2.0 * n.eval1(&x));
        }
    }

    #[test]
    fn json_round_trip() {
        let n = compose(&min_net(1.0 / 3.0), &linear_net(&[vec![0.1, -7.25]], &[1e-300]).unwrap()).unwrap();
        let back = ReluNetwork::from_json(&n.to_json()).unwrap();
        assert_eq!(back.metrics(), n.metrics());
        for x in [[0.3, 0.1], [4.0, -2.0]] {
            assert_eq!(back.eval(&x), n.eval(&x));
        }
        assert!(ReluNetwork::from_json("{\"layers\":[],\"extra\":1}").is_err());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        assert!(matches!(min_net(1.0).evaluate(&[1.0, 2.0]), Err(NetError::Dim { .. })));
    }
}
