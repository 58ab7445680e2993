mod common;

use common::nn::*;
use deeptraj::canvas::TextureStack;
use deeptraj::cnn::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn conv_matches_naive_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for stride in [1, 2] {
        let x = random_tensor(&mut rng, vec![2, 6, 6], -1.0, 1.0);
        let mut l = ConvLayer::zeros(3, 2, 3, stride);
        l.weights.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
        l.bias.iter_mut().for_each(|b| *b = rng.random_range(-1.0..1.0));
        let y = conv_forward(&x, &l).unwrap();
        let want = naive_conv(x.data(), 2, 6, 6, &l.weights, &l.bias, 3, stride);
        assert_eq!(y.len(), want.len());
        for (a, b) in y.data().iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn pool_lrn_fc_match_naive_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = random_tensor(&mut rng, vec![1, 8, 8], -1.0, 1.0);
    let (y, _) = max_pool(&x, 2, 2).unwrap();
    assert_eq!(y.data(), &naive_pool(x.data(), 1, 8, 8, 2, 2)[..]);

    let x = random_tensor(&mut rng, vec![8, 3, 4], -2.0, 2.0);
    let spec = LrnSpec { depth: 5, k: 2.0, alpha: 0.1, beta: 0.75 };
    let (y, _) = lrn(&x, &spec).unwrap();
    for (a, b) in y.data().iter().zip(naive_lrn(x.data(), 8, 12, &spec)) {
        assert!((a - b).abs() <= 1e-12);
    }

    let x = random_tensor(&mut rng, vec![4], -1.0, 1.0);
    let mut l = FcLayer::zeros(4, 3);
    l.weights.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
    l.bias.iter_mut().for_each(|b| *b = rng.random_range(-1.0..1.0));
    for (a, b) in fc_forward(&x, &l).unwrap().data().iter().zip(naive_fc(x.data(), &l.weights, &l.bias)) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn conv_is_linear_without_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut l = ConvLayer::zeros(3, 2, 3, 1);
    l.weights.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
    let x = random_tensor(&mut rng, vec![2, 7, 7], -1.0, 1.0);
    let y = random_tensor(&mut rng, vec![2, 7, 7], -1.0, 1.0);
    let (a, b) = (0.7, -1.3);
    let mix = Tensor::new(
        vec![2, 7, 7],
        x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect(),
    )
    .unwrap();
    let lhs = conv_forward(&mix, &l).unwrap();
    let cx = conv_forward(&x, &l).unwrap();
    let cy = conv_forward(&y, &l).unwrap();
    for ((m, p), q) in lhs.data().iter().zip(cx.data()).zip(cy.data()) {
        assert!((m - (a * p + b * q)).abs() <= 1e-12);
    }
}

#[test]
fn gradients_match_finite_differences() {
    let mut checked = 0;
    let mut seed = 0;
    while checked < 3 {
        let (model, x, label) = tiny_case(seed);
        if let FdOutcome::Checked { max_rel, params } = finite_difference_check(&model, &x, label, 1e-4) {
            assert!(max_rel < 1e-4, "seed {seed}: max relative error {max_rel}");
            assert_eq!(params, model.param_count());
            checked += 1;
        }
        seed += 1;
    }
}

#[test]
fn zero_input_gives_zero_conv_weight_gradients() {
    let (mut model, _, _) = tiny_case(3);
    for l in &mut model.conv {
        l.bias.iter_mut().for_each(|b| *b = 0.0);
    }
    let x = Tensor::zeros(vec![2, 12, 12]);
    let (_, g) = model.backward(&x, 1).unwrap();
    for block in g.blocks.iter().take(8).step_by(2) {
        assert!(block.iter().all(|&v| v == 0.0));
    }
    let stack = TextureStack::from_channels(2, 12, 12, x.data()).unwrap();
    assert!(model.extract_features(&stack).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn duplicated_example_doubles_summed_gradient() {
    let (model, x, label) = tiny_case(4);
    let (_, g) = model.backward(&x, label).unwrap();
    let mut sum = Gradients::zeros_like(&model);
    sum.add_assign(&g);
    sum.add_assign(&g);
    for (s, one) in sum.iter().zip(g.iter()) {
        assert_eq!(s, 2.0 * one);
    }
}

#[test]
fn small_step_decreases_loss() {
    for seed in 0..10 {
        let (mut model, x, label) = tiny_case(100 + seed);
        let (before, g) = model.backward(&x, label).unwrap();
        model.apply_update(&g, 1e-4);
        let after = model.loss(&x, label).unwrap();
        assert!(after < before, "seed {seed}: {before} -> {after}");
    }
}

#[test]
fn feature_length_follows_layer_arithmetic() {
    let cfg = tiny_config(5);
    let model = CnnModel::new(cfg.clone()).unwrap();
    let x = vec![0.5; 2 * 12 * 12];
    let stack = TextureStack::from_channels(2, 12, 12, &x).unwrap();
    let f = model.extract_features(&stack).unwrap();
    // conv4: 3x3 kernel on a 3x3 map -> 1x1 per filter
    assert_eq!(f.len(), cfg.conv[3].filters);
    assert_eq!(f, model.extract_features(&stack).unwrap());
}

#[test]
fn prediction_contract() {
    let (model, x, _) = tiny_case(6);
    let (class, probs) = model.predict_tensor(&x).unwrap();
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(class, argmax(&probs));
    let mut shifted = model.clone();
    shifted.fc[2].bias.iter_mut().for_each(|b| *b += 17.0);
    assert_eq!(shifted.predict_tensor(&x).unwrap().0, class);
    assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    let wrong = Tensor::zeros(vec![3, 12, 12]);
    assert!(model.predict_tensor(&wrong).is_err());
}

#[test]
fn training_contracts() {
    let (_, x, label) = tiny_case(7);
    let data = vec![(x.clone(), label)];
    let mut cfg = tiny_config(7);
    cfg.learning_rate = 0.0;
    cfg.epochs = 3;
    let (m0, _) = train_tensors(&data, &cfg).unwrap();
    assert_eq!(m0, CnnModel::new(cfg.clone()).unwrap());

    cfg.learning_rate = 0.05;
    cfg.epochs = 60;
    let (m1, report) = train_tensors(&data, &cfg).unwrap();
    let (m2, _) = train_tensors(&data, &cfg).unwrap();
    assert_eq!(m1, m2);
    assert_eq!(report.epoch_loss.len(), 60);
    assert_eq!(m1.predict_tensor(&x).unwrap().0, label);
    assert!(train_tensors(&[], &cfg).is_err());
}

#[test]
fn model_file_round_trip() {
    let (model, _, _) = tiny_case(8);
    let mut a = Vec::new();
    write_model(&model, &mut a).unwrap();
    assert_eq!(&a[..4], b"DTRJ");
    assert_eq!(a[4], FORMAT_VERSION);
    let back = read_model(&a[..]).unwrap();
    assert_eq!(back, model);
    let mut b = Vec::new();
    write_model(&back, &mut b).unwrap();
    assert_eq!(a, b);
    assert!(read_model(&a[..a.len() - 1]).is_err());
}
