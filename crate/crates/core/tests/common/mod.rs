#![allow(dead_code)]

pub mod oracles;

use ndarray::Array2;
use rand::Rng;

use scagc::diff::{ParamTensor, Var};
use scagc::graph::{generate_sbm, AttributedGraph, SbmParams};
use scagc::model::{MlpVars, ModelDims, ModelParams, ParamVars, Widths};
use scagc::seed;

pub const SBM_ATTR_DIM: usize = 16;

pub fn random_matrix(rows: usize, cols: usize, seed_value: u64) -> Array2<f64> {
    let mut rng = seed::rng(seed_value);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

pub fn sbm_params(n: usize, separation: f64, seed_value: u64) -> SbmParams {
    SbmParams {
        n,
        k: 3,
        p_in: 0.3,
        p_out: 0.02,
        attr_dim: SBM_ATTR_DIM,
        separation,
        noise_sd: 1.0,
        seed: seed_value,
    }
}

/// The 150-node, 3-block benchmark graph.
pub fn benchmark_sbm(separation: f64, seed_value: u64) -> AttributedGraph {
    generate_sbm(&sbm_params(150, separation, seed_value)).expect("valid SBM parameters")
}

/// A 12-node, 3-block graph with dense blocks.
pub fn tiny_graph(seed_value: u64) -> AttributedGraph {
    generate_sbm(&SbmParams {
        n: 12,
        k: 3,
        p_in: 0.7,
        p_out: 0.1,
        attr_dim: 5,
        separation: 2.0,
        noise_sd: 1.0,
        seed: seed_value,
    })
    .unwrap()
}

pub fn small_widths() -> Widths {
    Widths {
        hidden: 8,
        embed: 7,
        proj_hidden: 6,
        proj_out: 5,
        cluster_hidden: 6,
    }
}

pub fn small_model(attr_dim: usize, k: usize, seed_value: u64) -> ModelParams {
    ModelParams::init(
        ModelDims {
            attr_dim,
            k,
            widths: small_widths(),
            relu_second_layer: true,
        },
        seed_value,
    )
    .unwrap()
}

/// Parameter tensors in registration order: Ω¹, Ω², φ, ψ.
pub fn param_list(p: &ModelParams) -> Vec<ParamTensor> {
    vec![
        p.encoder.omega1.clone(),
        p.encoder.omega2.clone(),
        p.phi.w1.clone(),
        p.phi.b1.clone(),
        p.phi.w2.clone(),
        p.phi.b2.clone(),
        p.psi.w1.clone(),
        p.psi.b1.clone(),
        p.psi.w2.clone(),
        p.psi.b2.clone(),
    ]
}

pub fn param_vars(v: &[Var]) -> ParamVars {
    ParamVars {
        omega1: v[0],
        omega2: v[1],
        phi: MlpVars {
            w1: v[2],
            b1: v[3],
            w2: v[4],
            b2: v[5],
        },
        psi: MlpVars {
            w1: v[6],
            b1: v[7],
            w2: v[8],
            b2: v[9],
        },
    }
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
