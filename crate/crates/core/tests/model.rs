mod common;

use common::{max_abs_diff, random_matrix, small_model, small_widths};
use ndarray::{array, s, Array2};
use proptest::prelude::*;
use scagc::augment::{sample_view, AugmentationSpec, GraphView};
use scagc::diff::ParamTensor;
use scagc::graph::AttributedGraph;
use scagc::model::{
    assign, discretize, encode, forward_raw, forward_view, predict_oos, project, Checkpoint, ModelDims, ModelParams,
    Widths,
};
use scagc::Error;

fn random_graph(n: usize, d: usize, seed: u64) -> AttributedGraph {
    let edges: Vec<_> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).filter(|&(u, v)| (u * 7 + v * 3 + seed as usize) % 4 == 0).collect();
    AttributedGraph::new(random_matrix(n, d, seed), edges, None).unwrap()
}

#[test]
fn init_respects_the_glorot_bound_and_seed() {
    let dims = ModelDims {
        attr_dim: 6,
        k: 3,
        widths: small_widths(),
        relu_second_layer: true,
    };
    let a = ModelParams::init(dims, 1).unwrap();
    assert_eq!(a, ModelParams::init(dims, 1).unwrap());
    assert_ne!(a, ModelParams::init(dims, 2).unwrap());
    for w in [&a.encoder.omega1, &a.encoder.omega2, &a.phi.w1, &a.phi.w2, &a.psi.w1, &a.psi.w2] {
        let (fan_in, fan_out) = w.shape();
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        assert!(w.value.iter().all(|v| v.abs() <= bound));
    }
    for b in [&a.phi.b1, &a.phi.b2, &a.psi.b1, &a.psi.b2] {
        assert!(b.value.iter().all(|&v| v == 0.0));
    }
    let defaults = Widths::default();
    assert_eq!((defaults.embed, defaults.proj_out), (256, 128));
}

#[test]
fn encoder_examples() {
    // Edgeless graph: the propagation operator is the identity.
    let x = array![[1.0, -2.0], [-0.5, 3.0]];
    let g = AttributedGraph::new(x.clone(), [], None).unwrap();
    let mut p = small_model(2, 2, 0);
    p.encoder.omega1 = ParamTensor::new(Array2::eye(2));
    p.encoder.omega2 = ParamTensor::new(Array2::eye(2));
    let (_, z) = encode(&GraphView::raw(&g), &p.encoder, true);
    assert_eq!(z, x.mapv(|v| v.max(0.0)));

    let zero = AttributedGraph::new(Array2::zeros((3, 2)), [(0, 1)], None).unwrap();
    let (_, z) = encode(&GraphView::raw(&zero), &small_model(2, 2, 3).encoder, true);
    assert!(z.iter().all(|&v| v == 0.0));

    let tri = AttributedGraph::new(Array2::from_elem((3, 2), 0.7), [(0, 1), (1, 2), (0, 2)], None).unwrap();
    let (_, z) = encode(&GraphView::raw(&tri), &small_model(2, 2, 4).encoder, true);
    for r in 1..3 {
        assert!(max_abs_diff(&z.slice(s![r..r + 1, ..]).to_owned(), &z.slice(s![0..1, ..]).to_owned()) <= 1e-15);
    }
}

#[test]
fn heads_match_direct_evaluation() {
    let p = small_model(3, 4, 8);
    let z = random_matrix(4, small_widths().embed, 5);
    let direct = |w1: &Array2<f64>, b1: &Array2<f64>, w2: &Array2<f64>, b2: &Array2<f64>| {
        (z.dot(w1) + b1).mapv(|v| v.max(0.0)).dot(w2) + b2
    };
    let m = direct(&p.phi.w1.value, &p.phi.b1.value, &p.phi.w2.value, &p.phi.b2.value);
    assert!(max_abs_diff(&project(&z, &p.phi), &m) <= 1e-12);

    let logits = direct(&p.psi.w1.value, &p.psi.b1.value, &p.psi.w2.value, &p.psi.b2.value);
    let soft = assign(&z, &p.psi);
    for (row, lrow) in soft.rows().into_iter().zip(logits.rows()) {
        let e: Vec<f64> = lrow.iter().map(|v| v.exp()).collect();
        let total: f64 = e.iter().sum();
        for (a, b) in row.iter().zip(&e) {
            assert!((a - b / total).abs() <= 1e-12);
        }
    }
}

#[test]
fn softmax_examples() {
    let mut p = small_model(2, 2, 1);
    let h = small_widths().embed;
    p.psi.w1 = ParamTensor::new(Array2::zeros((h, small_widths().cluster_hidden)));
    p.psi.w2 = ParamTensor::new(Array2::zeros((small_widths().cluster_hidden, 2)));
    let z = Array2::ones((1, h));
    assert_eq!(assign(&z, &p.psi), array![[0.5, 0.5]]);
    p.psi.b2 = ParamTensor::new(array![[1.0, 0.0]]);
    let e = std::f64::consts::E;
    let soft = assign(&z, &p.psi);
    assert!((soft[[0, 0]] - e / (e + 1.0)).abs() <= 1e-15);
    p.psi.b2 = ParamTensor::new(array![[50.0, 0.0]]);
    assert!((assign(&z, &p.psi)[[0, 0]] - 1.0).abs() <= 1e-10);
}

#[test]
fn discretize_breaks_ties_low() {
    assert_eq!(discretize(&array![[0.1, 0.9], [0.5, 0.5], [0.7, 0.3]]), vec![1, 0, 0]);
    assert_eq!(discretize(&Array2::eye(4)), vec![0, 1, 2, 3]);
}

#[test]
fn single_zero_node_follows_the_bias_path() {
    // Zero attributes give Z = 0, so the logits are relu(b1)·W2 + b2.
    let mut p = small_model(2, 3, 2);
    let hc = small_widths().cluster_hidden;
    let b1 = Array2::from_shape_fn((1, hc), |(_, j)| j as f64 - 2.0);
    let w2 = Array2::from_shape_fn((hc, 3), |(i, k)| if k == 2 { 0.1 * i as f64 } else { -0.1 });
    p.psi.b1 = ParamTensor::new(b1);
    p.psi.w2 = ParamTensor::new(w2);
    p.psi.b2 = ParamTensor::new(array![[0.3, 0.2, -0.1]]);
    // relu(b1) = [0,0,0,1,2,3] so the logits are 0.3-0.6, 0.2-0.6, -0.1+0.1·(3+8+15).
    let g = AttributedGraph::new(Array2::zeros((1, 2)), [], None).unwrap();
    let before = p.clone();
    assert_eq!(predict_oos(&g, &p).unwrap(), vec![2]);
    assert_eq!(p, before);
}

#[test]
fn raw_forward_equals_a_zero_rate_view() {
    let g = random_graph(9, 4, 2);
    let p = small_model(4, 3, 6);
    let spec = AugmentationSpec {
        edge_drop_rate: 0.0,
        attr_mask_rate: 0.0,
        ..AugmentationSpec::default()
    };
    let a = forward_raw(&g, &p).unwrap();
    assert_eq!(a, forward_view(&sample_view(&g, &spec, 77), &p).unwrap());
    assert_eq!(a, forward_raw(&g, &p).unwrap());
    for row in a.soft_assign.rows() {
        assert!((row.sum() - 1.0).abs() <= 1e-10);
        assert!(row.iter().all(|&v| v > 0.0 && v < 1.0));
    }
}

#[test]
fn both_views_share_every_weight() {
    let g = random_graph(8, 4, 1);
    let mut p = small_model(4, 3, 6);
    let v1 = sample_view(&g, &AugmentationSpec::default(), 1);
    let v2 = sample_view(&g, &AugmentationSpec::default(), 2);
    let (a1, a2) = (forward_view(&v1, &p).unwrap(), forward_view(&v2, &p).unwrap());
    p.encoder.omega2.value[[0, 0]] += 0.5;
    p.psi.b2.value[[0, 1]] += 0.5;
    let (b1, b2) = (forward_view(&v1, &p).unwrap(), forward_view(&v2, &p).unwrap());
    assert_ne!(a1.soft_assign, b1.soft_assign);
    assert_ne!(a2.soft_assign, b2.soft_assign);
}

#[test]
fn attribute_dimension_mismatch_is_rejected() {
    let g = random_graph(5, 3, 0);
    let p = small_model(4, 2, 0);
    assert!(matches!(predict_oos(&g, &p), Err(Error::DimensionMismatch(_))));
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let p = small_model(5, 3, 12);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    Checkpoint::save(&p, &path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, p);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(json["format_version"], 1);
    for key in ["dims", "omega1", "omega2", "phi", "psi"] {
        assert!(json.get(key).is_some(), "{key}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn forward_is_permutation_equivariant(seed in 0u64..1000, shift in 1usize..8) {
        let g = random_graph(8, 4, seed);
        let p = small_model(4, 3, seed);
        let perm: Vec<usize> = (0..8).map(|i| (i * 3 + shift) % 8).collect();
        let a = forward_raw(&g, &p).unwrap();
        let b = forward_raw(&g.permuted(&perm).unwrap(), &p).unwrap();
        for (old, &new) in perm.iter().enumerate() {
            for (x, y) in [(&a.z, &b.z), (&a.m, &b.m), (&a.soft_assign, &b.soft_assign)] {
                let diff = (&x.row(old) - &y.row(new)).mapv(f64::abs).fold(0.0, |m: f64, v| m.max(*v));
                prop_assert!(diff <= 1e-12);
            }
        }
    }

    #[test]
    fn argmax_ignores_logit_shifts(vals in prop::collection::vec(-5.0f64..5.0, 12), c in -100.0f64..100.0) {
        let mut p = small_model(2, 3, 0);
        let hc = small_widths().cluster_hidden;
        let h = small_widths().embed;
        let z = Array2::from_shape_vec((4, 3), vals).unwrap();
        // Route z straight into the logits: the first layer copies the three leading inputs.
        let z_in = { let mut m = Array2::zeros((4, h)); m.slice_mut(s![.., 0..3]).assign(&z); m };
        p.psi.w1 = ParamTensor::new(Array2::from_shape_fn((h, hc), |(i, j)| if i == j && i < 3 { 1.0 } else { 0.0 }));
        p.psi.b1 = ParamTensor::new(Array2::from_elem((1, hc), 10.0));
        p.psi.w2 = ParamTensor::new(Array2::from_shape_fn((hc, 3), |(i, k)| if i == k { 1.0 } else { 0.0 }));
        let base = discretize(&assign(&z_in, &p.psi));
        p.psi.b2 = ParamTensor::new(Array2::from_elem((1, 3), c));
        prop_assert_eq!(base, discretize(&assign(&z_in, &p.psi)));
    }
}
