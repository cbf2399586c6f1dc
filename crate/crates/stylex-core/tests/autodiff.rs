//! Gradient and kernel correctness against independent f64 oracles.

mod common;

use common::{finite_diff_check, refk, rng, sample_smooth_graph, uniform_vec, FD_REL_TOL};
use rand::Rng;
use stylex_core::{BatchNormState, BnMode, Tape, Tensor};

#[test]
fn conv_matches_six_loop_reference() {
    let mut r = rng(7);
    let x = Tensor::new(vec![2, 3, 8, 8], uniform_vec(&mut r, 2 * 3 * 64, -1.0, 1.0)).unwrap();
    let w = Tensor::new(vec![4, 3, 3, 3], uniform_vec(&mut r, 4 * 3 * 9, -1.0, 1.0)).unwrap();
    let mut tape = Tape::new();
    let xi = tape.leaf(x.clone());
    let wi = tape.leaf(w.clone());
    let y = tape.conv2d(xi, wi, 1, 0).unwrap();

    let x64: Vec<f64> = x.data().iter().map(|&v| v as f64).collect();
    let w64: Vec<f64> = w.data().iter().map(|&v| v as f64).collect();
    let (want, ho, wo) = refk::conv2d(&x64, &w64, 2, 3, 8, 8, 4, 3, 1, 0);
    assert_eq!(tape.value(y).shape(), &[2, 4, ho, wo]);
    for (got, want) in tape.value(y).data().iter().zip(&want) {
        assert!((*got as f64 - want).abs() < 1e-5, "{got} vs {want}");
    }
}

#[test]
fn linear_matches_matmul_reference() {
    let mut r = rng(11);
    let x = Tensor::new(vec![4, 10], uniform_vec(&mut r, 40, -1.0, 1.0)).unwrap();
    let w = Tensor::new(vec![3, 10], uniform_vec(&mut r, 30, -1.0, 1.0)).unwrap();
    let b = Tensor::new(vec![3], uniform_vec(&mut r, 3, -1.0, 1.0)).unwrap();
    let mut tape = Tape::new();
    let (xi, wi, bi) = (tape.leaf(x.clone()), tape.leaf(w.clone()), tape.leaf(b.clone()));
    let y = tape.linear(xi, wi, bi).unwrap();

    let x64: Vec<f64> = x.data().iter().map(|&v| v as f64).collect();
    let w64: Vec<f64> = w.data().iter().map(|&v| v as f64).collect();
    let b64: Vec<f64> = b.data().iter().map(|&v| v as f64).collect();
    let want = refk::linear(&x64, &w64, &b64, 4, 10, 3);
    for (got, want) in tape.value(y).data().iter().zip(&want) {
        assert!((*got as f64 - want).abs() < 1e-6);
    }
}

#[test]
fn batch_norm_train_centers_each_channel() {
    let mut r = rng(13);
    let (b, c, h, w) = (4, 3, 5, 5);
    let x = Tensor::new(
        vec![b, c, h, w],
        uniform_vec(&mut r, b * c * h * w, -2.0, 2.0),
    )
    .unwrap();
    let gamma = Tensor::new(vec![c], vec![1.0; c]).unwrap();
    let beta = Tensor::new(vec![c], vec![0.0; c]).unwrap();
    let mut tape = Tape::new();
    let (xi, gi, bi) = (tape.leaf(x), tape.leaf(gamma), tape.leaf(beta));
    let mut state = BatchNormState::new(c, 0.1);
    let y = tape.batch_norm(xi, gi, bi, &mut state, BnMode::Train).unwrap();
    let out = tape.value(y).data();
    let spatial = h * w;
    for ci in 0..c {
        let mut mean = 0.0f64;
        for bi in 0..b {
            for s in 0..spatial {
                mean += out[(bi * c + ci) * spatial + s] as f64;
            }
        }
        mean /= (b * spatial) as f64;
        assert!(mean.abs() < 1e-5, "channel {ci} mean {mean}");
    }
}

#[test]
fn per_op_gradients_match_central_differences() {
    // One pass over each family; the randomized sweep below covers breadth.
    for seed in [3u64, 10, 21, 33, 47, 52, 68] {
        let case = sample_smooth_graph(seed);
        let outcome = finite_diff_check(&case.inputs, &case.build, &case.reference);
        assert!(
            outcome.forward_rel_err < 1e-4,
            "{}: forward disagrees with reference ({})",
            case.name,
            outcome.forward_rel_err
        );
        assert!(
            outcome.max_rel_err < FD_REL_TOL,
            "{}: max rel grad err {} over {} elements",
            case.name,
            outcome.max_rel_err,
            outcome.checked
        );
    }
}

#[test]
fn composite_conv_bn_relu_linear_gradient() {
    // Fixed instance of the composite graph named in the backward contract.
    let mut s = 1234u64;
    let case = loop {
        let case = common::make_graph_case(s);
        if case.name.starts_with("conv-bn-relu-linear") && case.kink_margin > 0.02 {
            break case;
        }
        s += 1;
    };
    let outcome = finite_diff_check(&case.inputs, &case.build, &case.reference);
    assert!(
        outcome.max_rel_err < FD_REL_TOL,
        "max rel err {}",
        outcome.max_rel_err
    );
}

#[test]
fn randomized_graph_sweep_small() {
    for seed in 100..112u64 {
        let case = sample_smooth_graph(seed);
        let outcome = finite_diff_check(&case.inputs, &case.build, &case.reference);
        assert!(
            outcome.max_rel_err < FD_REL_TOL,
            "seed {seed} ({}): rel err {}",
            case.name,
            outcome.max_rel_err
        );
    }
}

#[test]
fn forward_is_deterministic_within_build() {
    let mut r = rng(99);
    let x = Tensor::new(vec![2, 2, 8, 8], uniform_vec(&mut r, 256, -1.0, 1.0)).unwrap();
    let w = Tensor::new(vec![3, 2, 3, 3], uniform_vec(&mut r, 54, -1.0, 1.0)).unwrap();
    let run = |x: &Tensor, w: &Tensor| -> Vec<f32> {
        let mut tape = Tape::new();
        let xi = tape.leaf(x.clone());
        let wi = tape.leaf(w.clone());
        let y = tape.conv2d(xi, wi, 1, 1).unwrap();
        let a = tape.relu(y).unwrap();
        tape.value(a).data().to_vec()
    };
    assert_eq!(run(&x, &w), run(&x, &w));
}

#[test]
fn cosine_bounds_hold_on_random_batches() {
    let mut r = rng(5);
    for _ in 0..50 {
        let d = r.gen_range(2..16usize);
        let a = Tensor::new(vec![4, d], uniform_vec(&mut r, 4 * d, -1.0, 1.0)).unwrap();
        let b = Tensor::new(vec![4, d], uniform_vec(&mut r, 4 * d, -1.0, 1.0)).unwrap();
        let mut tape = Tape::new();
        let (ai, bi) = (tape.leaf(a), tape.leaf(b));
        if let Ok(s) = tape.cosine_similarity(ai, bi) {
            for &v in tape.value(s).data() {
                assert!((-1.0 - 1e-6..=1.0 + 1e-6).contains(&(v as f64)));
            }
        }
    }
}
