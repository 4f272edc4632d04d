//! Reverse-mode gradients against independent references: a scalar forward
//! evaluator and central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tlmarket::nn::{Activation, DenseNet, Tensor};

/// Forward pass written scalar by scalar, independent of the batched path.
fn reference_forward(net: &DenseNet, input: &[f64]) -> Vec<f64> {
    let mut x = input.to_vec();
    for (l, spec) in net.layer_specs().enumerate() {
        let w = net.weights(l);
        let b = net.bias(l);
        let mut y = vec![0.0; spec.output];
        for o in 0..spec.output {
            let mut acc = b[o];
            for i in 0..spec.input {
                acc += x[i] * w[i * spec.output + o];
            }
            y[o] = match spec.activation {
                Activation::Tanh => acc.tanh(),
                Activation::Relu => acc.max(0.0),
                Activation::Identity => acc,
            };
        }
        x = y;
    }
    x
}

fn weighted_output(net: &DenseNet, input: &[f64], upstream: &[f64]) -> f64 {
    reference_forward(net, input)
        .iter()
        .zip(upstream)
        .map(|(y, u)| y * u)
        .sum()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs().max(b.abs())).max(1e-6)
}

fn random_net(rng: &mut ChaCha8Rng, max_width: usize) -> DenseNet {
    let input = rng.gen_range(1..=max_width);
    let depth = rng.gen_range(1..=3);
    let mut layers = Vec::new();
    for _ in 0..depth {
        layers.push((rng.gen_range(1..=max_width), Activation::Tanh));
    }
    layers.push((rng.gen_range(1..=max_width), Activation::Identity));
    let mut net = DenseNet::glorot(input, &layers, rng).unwrap();
    for p in net.params_mut() {
        *p += rng.gen_range(-0.1..0.1);
    }
    net
}

/// Max relative error between analytic and central-difference gradients,
/// over both parameters and inputs.
fn max_gradient_error(net: &DenseNet, input: &[f64], upstream: &[f64]) -> f64 {
    const H: f64 = 1e-5;
    let grads = net
        .backprop(
            &Tensor::row(input.to_vec()),
            &Tensor::row(upstream.to_vec()),
        )
        .unwrap();
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for k in 0..net.param_count() {
        let orig = probe.params()[k];
        probe.params_mut()[k] = orig + H;
        let plus = weighted_output(&probe, input, upstream);
        probe.params_mut()[k] = orig - H;
        let minus = weighted_output(&probe, input, upstream);
        probe.params_mut()[k] = orig;
        worst = worst.max(rel_err(grads.params[k], (plus - minus) / (2.0 * H)));
    }
    let mut x = input.to_vec();
    for k in 0..x.len() {
        let orig = x[k];
        x[k] = orig + H;
        let plus = weighted_output(net, &x, upstream);
        x[k] = orig - H;
        let minus = weighted_output(net, &x, upstream);
        x[k] = orig;
        worst = worst.max(rel_err(grads.input.values()[k], (plus - minus) / (2.0 * H)));
    }
    worst
}

#[test]
fn forward_matches_scalar_reference_2_4_2() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let net = DenseNet::glorot(2, &[(4, Activation::Tanh), (2, Activation::Tanh)], &mut rng).unwrap();
    let input = [0.35, -0.8];
    let out = net.forward(&Tensor::row(input.to_vec())).unwrap();
    assert_eq!(out.shape(), &[1, 2]);
    for (a, b) in out.values().iter().zip(reference_forward(&net, &input)) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn gradients_3_8_3_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let net = DenseNet::glorot(3, &[(8, Activation::Tanh), (3, Activation::Identity)], &mut rng).unwrap();
    let err = max_gradient_error(&net, &[0.2, -0.5, 0.9], &[1.0, -0.3, 0.6]);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn fifty_random_nets_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..50 {
        let net = random_net(&mut rng, 16);
        let input: Vec<f64> = (0..net.input_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let upstream: Vec<f64> = (0..net.output_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let err = max_gradient_error(&net, &input, &upstream);
        assert!(err < 1e-4, "max relative error {err}");
    }
}

#[test]
fn forward_and_backward_are_deterministic() {
    let build = || {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        DenseNet::glorot(5, &[(16, Activation::Tanh), (4, Activation::Identity)], &mut rng).unwrap()
    };
    let (a, b) = (build(), build());
    let x = Tensor::matrix(2, 5, (0..10).map(|i| i as f64 * 0.1).collect()).unwrap();
    let u = Tensor::matrix(2, 4, vec![0.5; 8]).unwrap();
    let (ga, gb) = (a.backprop(&x, &u).unwrap(), b.backprop(&x, &u).unwrap());
    assert_eq!(a.forward(&x).unwrap(), b.forward(&x).unwrap());
    assert_eq!(ga.params.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), gb.params.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}
