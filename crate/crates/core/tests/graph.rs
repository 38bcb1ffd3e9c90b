mod common;

use common::{max_abs_diff, oracles, random_matrix};
use ndarray::{array, Array2};
use proptest::prelude::*;
use scagc::graph::{generate_sbm, load_graph, load_labels, write_labels, AttributedGraph, SbmParams};
use scagc::metrics::{acc, kmeans};
use scagc::Error;

fn arb_graph(max_n: usize) -> impl Strategy<Value = AttributedGraph> {
    (2..=max_n).prop_flat_map(|n| {
        (
            prop::collection::vec((0..n, 0..n), 0..3 * n),
            prop::collection::vec(-3.0f64..3.0, n * 2),
        )
            .prop_map(move |(pairs, attrs)| {
                let edges: Vec<_> = pairs.into_iter().filter(|(u, v)| u != v).collect();
                let x = Array2::from_shape_vec((n, 2), attrs).unwrap();
                AttributedGraph::new(x, edges, None).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalization_is_symmetric(g in arb_graph(15)) {
        let a = g.sym_normalize().to_dense();
        prop_assert!(max_abs_diff(&a, &a.t().to_owned()) <= 1e-12);
    }

    #[test]
    fn normalized_spectrum_lies_in_unit_interval(g in arb_graph(10)) {
        let a = g.sym_normalize().to_dense();
        for ev in oracles::symmetric_eigenvalues(&a) {
            prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&ev), "{ev}");
        }
    }

    #[test]
    fn sparse_product_matches_dense(g in arb_graph(15), seed in any::<u64>()) {
        let norm = g.sym_normalize();
        let x = random_matrix(g.n_nodes(), 3, seed);
        let sparse = norm.matrix().matmul_dense(x.view());
        prop_assert!(max_abs_diff(&sparse, &norm.to_dense().dot(&x)) <= 1e-12);
    }

    #[test]
    fn degrees_sum_to_twice_the_edges(g in arb_graph(15)) {
        prop_assert_eq!(g.degree_vector().iter().sum::<usize>(), 2 * g.n_edges());
    }

    #[test]
    fn json_round_trip(g in arb_graph(12)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.json");
        g.save_json(&path).unwrap();
        let back = AttributedGraph::load_json(&path).unwrap();
        prop_assert_eq!(&back, &g);
        back.save_json(&path).unwrap();
        prop_assert_eq!(AttributedGraph::load_json(&path).unwrap(), g);
    }
}

#[test]
fn text_files_round_trip() {
    let g = generate_sbm(&common::sbm_params(30, 3.0, 4)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (e, a, l) = (dir.path().join("e.txt"), dir.path().join("a.csv"), dir.path().join("l.txt"));
    g.write_edges(&e).unwrap();
    g.write_attributes(&a).unwrap();
    write_labels(&l, g.labels().unwrap()).unwrap();
    let back = load_graph(&e, &a, Some(&l)).unwrap();
    assert_eq!(back, g);
    assert_eq!(load_labels(&l).unwrap(), g.labels().unwrap());
}

#[test]
fn small_degree_examples() {
    let x = Array2::zeros((3, 1));
    let triangle = AttributedGraph::new(x.clone(), [(0, 1), (1, 2), (0, 2)], None).unwrap();
    assert_eq!(triangle.degree_vector(), vec![2, 2, 2]);
    let path = AttributedGraph::new(x.clone(), [(0, 1), (1, 2)], None).unwrap();
    assert_eq!(path.degree_vector(), vec![1, 2, 1]);
    let empty = AttributedGraph::new(x, [], None).unwrap();
    assert_eq!(empty.degree_vector(), vec![0, 0, 0]);
    // Isolated nodes keep only their self-loop.
    assert_eq!(empty.sym_normalize().to_dense(), Array2::<f64>::eye(3));
}

#[test]
fn malformed_inputs_are_rejected() {
    let x = array![[0.0], [1.0]];
    assert!(matches!(AttributedGraph::new(x.clone(), [(0, 2)], None), Err(Error::MalformedGraph(_))));
    let nan = array![[f64::NAN], [1.0]];
    assert!(AttributedGraph::new(nan, [], None).is_err());
    let dir = tempfile::tempdir().unwrap();
    let edges = dir.path().join("e.txt");
    let attrs = dir.path().join("a.csv");
    std::fs::write(&edges, "0 1\n1 x\n").unwrap();
    std::fs::write(&attrs, "0.5\n1.5\n").unwrap();
    assert!(matches!(load_graph(&edges, &attrs, None), Err(Error::Parse { .. })));
    std::fs::write(&edges, "0 1\n").unwrap();
    std::fs::write(&attrs, "0.5,1\n1.5\n").unwrap();
    assert!(load_graph(&edges, &attrs, None).is_err());
}

#[test]
fn sbm_edge_count_within_five_sigma() {
    let (n, k, p_in, p_out) = (60usize, 3usize, 0.3, 0.05);
    let block = n / k;
    let pairs_in = (k * block * (block - 1) / 2) as f64;
    let pairs_out = (n * (n - 1) / 2) as f64 - pairs_in;
    let mean = pairs_in * p_in + pairs_out * p_out;
    let sd = (pairs_in * p_in * (1.0 - p_in) + pairs_out * p_out * (1.0 - p_out)).sqrt();
    for seed in 0..50 {
        let g = generate_sbm(&SbmParams {
            n,
            k,
            p_in,
            p_out,
            attr_dim: 4,
            separation: 1.0,
            noise_sd: 1.0,
            seed,
        })
        .unwrap();
        let m = g.n_edges() as f64;
        assert!((m - mean).abs() <= 5.0 * sd, "seed {seed}: {m} vs {mean} ± {sd}");
    }
}

#[test]
fn easy_sbm_is_separable_by_kmeans() {
    let g = common::benchmark_sbm(5.0, 7);
    let km = kmeans(g.attributes().view(), 3, 0, 300).unwrap();
    let score = acc(&km.labels, g.labels().unwrap()).unwrap();
    assert!(score >= 0.9, "{score}");
}

#[test]
fn permuting_nodes_relabels_everything() {
    let g = generate_sbm(&common::sbm_params(12, 2.0, 1)).unwrap();
    let perm: Vec<usize> = (0..12).rev().collect();
    let p = g.permuted(&perm).unwrap();
    assert_eq!(p.n_edges(), g.n_edges());
    let mut d = g.degree_vector();
    let mut dp = p.degree_vector();
    d.sort();
    dp.sort();
    assert_eq!(d, dp);
}
