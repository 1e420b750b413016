//! Backward passes against central finite differences at f64 precision.

mod common;

use common::*;
use limbnet::model::{build_model, ConvSpec, Mode, ModelConfig, ModelWeights};
use limbnet::nn::*;
use limbnet::{Rng, Tensor};

#[test]
fn conv1d_matches_finite_differences() {
    let mut rng = Rng::new(101);
    for padding in [Padding::Valid, Padding::Same] {
        for (c_in, len, c_out, k) in [(1, 3, 1, 1), (3, 9, 2, 3), (2, 12, 4, 5)] {
            let x = random_tensor(&[c_in, len], &mut rng);
            let w = random_tensor(&[c_out, c_in, k], &mut rng);
            let b = random_tensor(&[c_out], &mut rng);
            let out_len = padding.output_len(len, k);
            let r = random_tensor(&[c_out, out_len], &mut rng);
            let loss = |x: &Tensor, w: &Tensor, b: &Tensor| {
                dot(conv1d_forward(x, w, b, padding).unwrap().data(), r.data())
            };
            let g = conv1d_backward(&x, &w, padding, &r).unwrap();
            assert_eq!(g.params[0].shape(), w.shape());
            assert_eq!(g.params[1].shape(), b.shape());
            assert_eq!(g.input.shape(), x.shape());
            let nk = numeric_grad(w.data(), |d| loss(&x, &with_data(&w, d), &b));
            let nb = numeric_grad(b.data(), |d| loss(&x, &w, &with_data(&b, d)));
            let nx = numeric_grad(x.data(), |d| loss(&with_data(&x, d), &w, &b));
            assert_grad_close("conv kernels", g.params[0].data(), &nk);
            assert_grad_close("conv bias", g.params[1].data(), &nb);
            assert_grad_close("conv input", g.input.data(), &nx);
        }
    }
}

#[test]
fn maxpool_matches_finite_differences() {
    let mut rng = Rng::new(102);
    for len in [2, 7, 16] {
        // continuous random values: no ties, and the perturbation never flips a winner
        let x = random_tensor(&[3, len], &mut rng);
        let (out, idx) = maxpool1d_forward(&x, 2, 2).unwrap();
        let r = random_tensor(out.shape(), &mut rng);
        let g = maxpool1d_backward(&idx, &r).unwrap();
        let n = numeric_grad(x.data(), |d| {
            dot(maxpool1d_forward(&with_data(&x, d), 2, 2).unwrap().0.data(), r.data())
        });
        assert_grad_close("maxpool", g.data(), &n);
    }
}

#[test]
fn dense_matches_finite_differences() {
    let mut rng = Rng::new(103);
    let x = random_tensor(&[3], &mut rng);
    let w = random_tensor(&[4, 3], &mut rng);
    let b = random_tensor(&[4], &mut rng);
    let r = random_tensor(&[4], &mut rng);
    let loss = |x: &Tensor, w: &Tensor, b: &Tensor| dot(dense_forward(x, w, b).unwrap().data(), r.data());
    let g = dense_backward(&x, &w, &r).unwrap();
    assert_grad_close("dense W", g.params[0].data(), &numeric_grad(w.data(), |d| loss(&x, &with_data(&w, d), &b)));
    assert_grad_close("dense b", g.params[1].data(), &numeric_grad(b.data(), |d| loss(&x, &w, &with_data(&b, d))));
    assert_grad_close("dense x", g.input.data(), &numeric_grad(x.data(), |d| loss(&with_data(&x, d), &w, &b)));
}

#[test]
fn relu_matches_finite_differences_away_from_kink() {
    let mut rng = Rng::new(104);
    let mut x = random_tensor(&[20], &mut rng);
    for v in x.data_mut() {
        if v.abs() < 1e-3 {
            *v += 0.1;
        }
    }
    let r = random_tensor(&[20], &mut rng);
    let g = relu_backward(&x, &r).unwrap();
    let n = numeric_grad(x.data(), |d| dot(relu(&with_data(&x, d)).data(), r.data()));
    assert_grad_close("relu", g.data(), &n);
}

#[test]
fn dropout_backward_with_fixed_mask() {
    let mut rng = Rng::new(105);
    let x = random_tensor(&[30], &mut rng);
    let r = random_tensor(&[30], &mut rng);
    let mask = dropout(&x, 0.5, true, &mut Rng::new(7)).unwrap().mask;
    let g = dropout_backward(mask.as_deref(), &r).unwrap();
    let n = numeric_grad(x.data(), |d| {
        dot(dropout(&with_data(&x, d), 0.5, true, &mut Rng::new(7)).unwrap().output.data(), r.data())
    });
    assert_grad_close("dropout", g.data(), &n);
}

fn check_attention(m: usize, d: usize, u: usize, states: Tensor, rng: &mut Rng) {
    let w = random_tensor(&[u, d], rng);
    let b = random_tensor(&[u], rng);
    let v = random_tensor(&[u], rng);
    let r = random_tensor(&[d], rng);
    let loss = |s: &Tensor, w: &Tensor, b: &Tensor, v: &Tensor| {
        dot(additive_attention(s, w, b, v).unwrap().context.data(), r.data())
    };
    let g = additive_attention_backward(&states, &w, &b, &v, &r).unwrap();
    assert_eq!(g.input.shape(), &[m, d]);
    let s = &states;
    assert_grad_close("attention W", g.params[0].data(), &numeric_grad(w.data(), |x| loss(s, &with_data(&w, x), &b, &v)));
    assert_grad_close("attention b", g.params[1].data(), &numeric_grad(b.data(), |x| loss(s, &w, &with_data(&b, x), &v)));
    assert_grad_close("attention v", g.params[2].data(), &numeric_grad(v.data(), |x| loss(s, &w, &b, &with_data(&v, x))));
    assert_grad_close("attention states", g.input.data(), &numeric_grad(s.data(), |x| loss(&with_data(s, x), &w, &b, &v)));
}

#[test]
fn attention_matches_finite_differences() {
    let mut rng = Rng::new(106);
    for (m, d, u) in [(2, 2, 2), (4, 5, 3), (1, 3, 2)] {
        let states = random_tensor(&[m, d], &mut rng);
        check_attention(m, d, u, states, &mut rng);
    }
}

#[test]
fn attention_identical_states() {
    let mut rng = Rng::new(107);
    let h = random_tensor(&[3], &mut rng);
    let states = Tensor::from_rows(&vec![h.data().to_vec(); 4]).unwrap();
    check_attention(4, 3, 2, states.clone(), &mut rng);

    // With identical states every score shift cancels, so ∂/∂v vanishes.
    let w = random_tensor(&[2, 3], &mut rng);
    let g = additive_attention_backward(
        &states,
        &w,
        &random_tensor(&[2], &mut rng),
        &random_tensor(&[2], &mut rng),
        &random_tensor(&[3], &mut rng),
    )
    .unwrap();
    assert!(g.params[2].data().iter().all(|x| x.abs() < 1e-12));
}

#[test]
fn cross_entropy_matches_finite_differences() {
    let mut rng = Rng::new(108);
    for class in 0..3 {
        let logits: Vec<f64> = (0..3).map(|_| 2.0 * rng.normal()).collect();
        let (_, g) = softmax_cross_entropy(&logits, class).unwrap();
        let n = numeric_grad(&logits, |z| softmax_cross_entropy(z, class).unwrap().0);
        assert_grad_close("softmax cross-entropy", &g, &n);
    }
}

fn reduced_config(dropout_rate: f64) -> ModelConfig {
    ModelConfig {
        window_len: 16,
        conv: vec![ConvSpec::new(3, 2), ConvSpec::new(3, 2), ConvSpec::new(3, 2)],
        attention_dim: 4,
        dropout_rate,
        ..ModelConfig::default()
    }
}

fn network_grad_check(cfg: ModelConfig, seed: u64) {
    let weights = build_model(&cfg, &mut Rng::new(seed)).unwrap();
    let mut rng = Rng::new(seed + 1);
    let window = random_tensor(&cfg.input_shape(), &mut rng);
    let label = (seed % 3) as usize;
    let dropout_seed = seed + 2;

    let loss_of = |w: &ModelWeights| {
        let f = w.forward(&window, Mode::Train, &mut Rng::new(dropout_seed)).unwrap();
        softmax_cross_entropy(&f.logits, label).unwrap().0
    };
    let f = weights.forward(&window, Mode::Train, &mut Rng::new(dropout_seed)).unwrap();
    let (_, dlogits) = softmax_cross_entropy(&f.logits, label).unwrap();
    let grads = weights.backward(f.cache.as_ref(), &dlogits).unwrap();

    let mut probe = weights.clone();
    let analytic: Vec<f64> = grads.iter().flat_map(|g| g.data().to_vec()).collect();
    let mut numeric = Vec::with_capacity(analytic.len());
    for block in 0..probe.params.len() {
        for i in 0..probe.params[block].len() {
            let orig = probe.params[block].data()[i];
            probe.params[block].data_mut()[i] = orig + FD_STEP;
            let up = loss_of(&probe);
            probe.params[block].data_mut()[i] = orig - FD_STEP;
            let down = loss_of(&probe);
            probe.params[block].data_mut()[i] = orig;
            numeric.push((up - down) / (2.0 * FD_STEP));
        }
    }
    assert_grad_close("whole network", &analytic, &numeric);
}

#[test]
fn whole_network_without_dropout() {
    network_grad_check(reduced_config(0.0), 11);
}

#[test]
fn whole_network_with_seeded_dropout() {
    network_grad_check(reduced_config(0.5), 23);
}

#[test]
fn backward_is_reproducible() {
    let cfg = reduced_config(0.5);
    let w = build_model(&cfg, &mut Rng::new(5)).unwrap();
    let window = random_tensor(&cfg.input_shape(), &mut Rng::new(6));
    let run = || {
        let f = w.forward(&window, Mode::Train, &mut Rng::new(7)).unwrap();
        let (_, dl) = softmax_cross_entropy(&f.logits, 1).unwrap();
        w.backward(f.cache.as_ref(), &dl)
            .unwrap()
            .iter()
            .flat_map(|g| g.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>())
            .collect::<Vec<u64>>()
    };
    assert_eq!(run(), run());
}
