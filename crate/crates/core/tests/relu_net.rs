use proptest::prelude::*;
use svnet::approx_blocks::block7_indices;
use svnet::relu_net::{
    compose, identity_net, max_net, min_net, parallel_shared, parallelize, selector_net, weighted_sum, AffineLayer, ReluNetwork,
};

/// Dyadic weights keep every forward pass exact in floating point.
fn dyadic() -> impl Strategy<Value = f64> {
    prop_oneof![1 => Just(0.0), 3 => (-64i32..=64).prop_map(|k| f64::from(k) / 32.0)]
}

fn layer(n_in: usize, n_out: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (
        prop::collection::vec(prop::collection::vec(dyadic(), n_in), n_out),
        prop::collection::vec(dyadic(), n_out),
    )
}

fn net_with(input: usize, output: usize, hidden: usize) -> impl Strategy<Value = ReluNetwork> {
    prop::collection::vec(1usize..=5, hidden).prop_flat_map(move |widths| {
        let mut dims = vec![input];
        dims.extend(widths);
        dims.push(output);
        let layers: Vec<_> = dims.windows(2).map(|p| layer(p[0], p[1])).collect();
        layers.prop_map(|ls| {
            ReluNetwork::from_layers(ls.into_iter().map(|(w, b)| AffineLayer::from_dense(&w, b).unwrap()).collect()).unwrap()
        })
    })
}

fn net(input: usize, output: usize) -> impl Strategy<Value = ReluNetwork> {
    (0usize..=3).prop_flat_map(move |h| net_with(input, output, h))
}

fn point(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-256i32..=256).prop_map(|k| f64::from(k) / 16.0), n)
}

/// Forward pass written out from the dense weights.
fn reference_eval(net: &ReluNetwork, x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    let last = net.layers().len() - 1;
    for (j, l) in net.layers().iter().enumerate() {
        let w = l.dense_weights();
        let mut z: Vec<f64> = w.iter().zip(l.bias()).map(|(row, b)| b + row.iter().zip(&a).map(|(p, q)| p * q).sum::<f64>()).collect();
        if j < last {
            z.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        a = z;
    }
    a
}

fn dense_nonzeros(net: &ReluNetwork) -> usize {
    net.layers()
        .iter()
        .map(|l| l.dense_weights().iter().flatten().filter(|w| **w != 0.0).count() + l.bias().iter().filter(|b| **b != 0.0).count())
        .sum()
}

proptest! {
    #[test]
    fn metrics_are_recomputable(n in net(3, 2), x in point(3)) {
        prop_assert_eq!(n.size(), dense_nonzeros(&n));
        prop_assert_eq!(n.depth(), n.layers().len() + 1);
        prop_assert!(n.size_out() <= n.size());
        let widest = n.layers().iter().map(|l| l.out_dim()).max().unwrap().max(3);
        prop_assert_eq!(n.width(), widest);
        prop_assert_eq!(n.eval(&x), reference_eval(&n, &x));
    }

    #[test]
    fn parallelization_law((p, q) in (0usize..=3).prop_flat_map(|h| (net_with(2, 3, h), net_with(3, 1, h))), x in point(5)) {
        let fp = parallelize(&[p.clone(), q.clone()]).unwrap();
        prop_assert_eq!(fp.size(), p.size() + q.size());
        prop_assert_eq!(fp.depth(), p.depth());
        prop_assert_eq!(fp.output_dim(), 4);
        prop_assert_eq!(fp.eval(&x), [p.eval(&x[..2]), q.eval(&x[2..])].concat());
    }

    #[test]
    fn composition_laws(inner in net(2, 3), outer in net(3, 2), x in point(2)) {
        let c = compose(&outer, &inner).unwrap();
        prop_assert_eq!(c.depth(), outer.depth() + inner.depth() - 1);
        prop_assert!(c.size() <= 2 * (outer.size() + inner.size()));
        if outer.has_hidden() {
            prop_assert_eq!(c.size_out(), outer.size_out());
        }
        prop_assert_eq!(c.eval(&x), outer.eval(&inner.eval(&x)));
    }

    #[test]
    fn identity_is_exact(d in 1usize..6, l in 2usize..7, x in prop::collection::vec(-1e6f64..1e6, 6)) {
        let id = identity_net(d, l).unwrap();
        prop_assert!(id.size() <= 2 * d * l);
        prop_assert_eq!(id.depth(), l);
        prop_assert_eq!(id.eval(&x[..d]), x[..d].to_vec());
    }

    #[test]
    fn min_max_exact_on_dyadics(n in (-(1i64 << 40)..(1i64 << 40)), x in (-(1i64 << 40)..(1i64 << 40))) {
        let (n, x) = (n as f64 / 1024.0, x as f64 / 1024.0);
        prop_assume!(n != 0.0);
        prop_assert_eq!(min_net(n).size(), 12);
        prop_assert_eq!(max_net(n).size(), 12);
        prop_assert_eq!(min_net(n).eval1(&[x]), x.min(n));
        prop_assert_eq!(max_net(n).eval1(&[x]), x.max(n));
    }

    #[test]
    fn min_max_close_on_reals(n in -1e3f64..1e3, x in -1e3f64..1e3) {
        prop_assert!((min_net(n).eval1(&[x]) - x.min(n)).abs() <= 1e-12 * (1.0 + x.abs() + n.abs()));
        prop_assert!((max_net(n).eval1(&[x]) - x.max(n)).abs() <= 1e-12 * (1.0 + x.abs() + n.abs()));
    }

    #[test]
    fn weighted_sum_is_linear(a in net_with(2, 1, 2), b in net_with(2, 1, 2), w in dyadic(), x in point(2)) {
        let s = weighted_sum(&[a.clone(), b.clone()], &[w, 1.0]).unwrap();
        prop_assert_eq!(s.eval1(&x), w * a.eval1(&x) + b.eval1(&x));
        prop_assert!(s.size() <= a.size() + b.size());
    }

    #[test]
    fn shared_input_stack(a in net_with(3, 1, 1), b in net_with(3, 2, 1), x in point(3)) {
        let s = parallel_shared(&[a.clone(), b.clone()]).unwrap();
        prop_assert_eq!(s.size(), a.size() + b.size());
        prop_assert_eq!(s.eval(&x), [a.eval(&x), b.eval(&x)].concat());
    }

    #[test]
    fn json_round_trip(n in net(2, 2), x in point(2)) {
        let back = ReluNetwork::from_json(&n.to_json()).unwrap();
        prop_assert_eq!(back.metrics(), n.metrics());
        prop_assert_eq!(back.eval(&x), n.eval(&x));
    }
}

#[test]
fn selector_extracts_asset_block() {
    let d = 3;
    let x: Vec<f64> = (0..7 * d).map(|i| i as f64).collect();
    for i in 0..d {
        let idx = block7_indices(d, i);
        let s = selector_net(7 * d, &idx);
        let want: Vec<f64> = [i, d + i].iter().map(|&j| j as f64).chain((0..5).map(|k| (2 * d + 5 * i + k) as f64)).collect();
        assert_eq!(s.eval(&x), want);
    }
}

#[test]
fn shape_errors() {
    let a = identity_net(2, 3).unwrap();
    assert!(compose(&a, &identity_net(3, 2).unwrap()).is_err());
    assert!(parallelize(&[]).is_err());
    assert!(AffineLayer::from_dense(&[vec![1.0, 2.0], vec![1.0]], vec![0.0, 0.0]).is_err());
    assert!(AffineLayer::from_dense(&[vec![f64::NAN]], vec![0.0]).is_err());
}
