use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rps_core::nn::*;
use rps_core::Error;

fn dense(in_dim: usize, out_dim: usize, w: &[f64], b: &[f64]) -> Layer {
    Layer::Dense(DenseLayer::new(in_dim, out_dim, w.to_vec(), b.to_vec()).unwrap())
}

#[test]
fn identity_dense_passes_input_through() {
    let net = Network::new(2, vec![dense(2, 2, &[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0])]).unwrap();
    assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
}

#[test]
fn relu_clamps_negatives() {
    let net = Network::new(2, vec![Layer::Relu]).unwrap();
    assert_eq!(net.forward(&[-1.0, 2.0]).unwrap(), vec![0.0, 2.0]);
}

#[test]
fn two_layer_hand_computed() {
    // [1] -> dense: [1*1+0.5, 1*(-2)+1] = [1.5, -1] -> relu [1.5, 0] -> 2*1.5 + 3*0 - 1 = 2
    let net = Network::new(
        1,
        vec![
            dense(1, 2, &[1.0, -2.0], &[0.5, 1.0]),
            Layer::Relu,
            dense(2, 1, &[2.0, 3.0], &[-1.0]),
        ],
    )
    .unwrap();
    assert_eq!(net.forward(&[1.0]).unwrap(), vec![2.0]);
}

#[test]
fn input_dimension_mismatch_is_config_error() {
    let net = Network::new(2, vec![Layer::Relu]).unwrap();
    assert!(matches!(net.forward(&[1.0]), Err(Error::Config(_))));
}

#[test]
fn skip_source_must_precede() {
    let err = Network::new(2, vec![Layer::SkipAdd { from: 0 }]).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    let err = Network::new(
        2,
        vec![
            dense(2, 3, &[0.0; 6], &[0.0; 3]),
            dense(3, 2, &[0.0; 6], &[0.0; 2]),
            Layer::SkipAdd { from: 0 },
        ],
    )
    .unwrap_err();
    assert!(matches!(err, Error::Config(_)), "dimension mismatch on skip");
}

#[test]
fn backward_without_forward_is_usage_error() {
    let mut net = Network::new(2, vec![Layer::Relu]).unwrap();
    assert!(matches!(net.backward(&[1.0, 1.0]), Err(Error::Usage(_))));
    net.forward_train(&[1.0, 1.0]).unwrap();
    net.backward(&[1.0, 1.0]).unwrap();
    assert!(
        matches!(net.backward(&[1.0, 1.0]), Err(Error::Usage(_))),
        "cache is consumed"
    );
}

#[test]
fn zero_seed_gives_zero_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut net = NetworkBuilder::new(3).dense(5).relu().dense(2).build(&mut rng).unwrap();
    net.forward_train(&[0.3, -0.2, 0.9]).unwrap();
    let g = net.backward(&[0.0, 0.0]).unwrap();
    assert!(g.params.iter().all(|v| *v == 0.0));
    assert!(g.input.iter().all(|v| *v == 0.0));
}

#[test]
fn linear_scalar_gradient() {
    let mut net = Network::new(1, vec![dense(1, 1, &[0.7], &[0.0])]).unwrap();
    net.forward_train(&[3.0]).unwrap();
    let g = net.backward(&[1.0]).unwrap();
    assert_eq!(g.params, vec![3.0, 1.0]);
    assert_eq!(g.input, vec![0.7]);
}

fn random_architecture(rng: &mut ChaCha8Rng) -> Network {
    let input = rng.random_range(1..5);
    let h1 = rng.random_range(2..7);
    let h2 = rng.random_range(2..7);
    let out = rng.random_range(1..4);
    match rng.random_range(0..3) {
        0 => NetworkBuilder::new(input).dense(h1).relu().dense(h2).tanh().dense(out),
        1 => NetworkBuilder::new(input)
            .dense(h1)
            .tanh()
            .dense(h2)
            .layer_norm()
            .relu()
            .dense(out),
        // residual block: dense, dense, relu, skip from layer 0, layer-norm
        _ => NetworkBuilder::new(input)
            .dense(h1)
            .dense(h1)
            .relu()
            .skip_add(0)
            .layer_norm()
            .dense(h2)
            .relu()
            .dense(out),
    }
    .build(rng)
    .unwrap()
}

/// Central finite differences of `seed · f(params, x)`.
fn numeric_gradient(net: &Network, x: &[f64], seed: &[f64], h: f64) -> Vec<f64> {
    let base = net.params();
    let loss = |p: &[f64]| {
        let mut n = net.clone();
        n.set_params(p).unwrap();
        n.forward(x).unwrap().iter().zip(seed).map(|(a, b)| a * b).sum::<f64>()
    };
    (0..base.len())
        .map(|i| {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[i] += h;
            minus[i] -= h;
            (loss(&plus) - loss(&minus)) / (2.0 * h)
        })
        .collect()
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / (na + nb).max(1e-12)
}

/// Returns the worst relative error over `seeds` random architectures.
pub(crate) fn worst_gradient_error(seeds: std::ops::Range<u64>) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = random_architecture(&mut rng);
        let x: Vec<f64> = (0..net.input_dim()).map(|_| rng.random_range(-1.5..1.5)).collect();
        let g_out: Vec<f64> = (0..net.output_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        net.forward_train(&x).unwrap();
        let analytic = net.backward(&g_out).unwrap();
        let numeric = numeric_gradient(&net, &x, &g_out, 1e-5);
        worst = worst.max(relative_error(&analytic.params, &numeric));
    }
    worst
}

#[test]
fn gradients_match_finite_differences_on_100_random_nets() {
    let worst = worst_gradient_error(0..100);
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn input_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut net = NetworkBuilder::new(3)
        .dense(6)
        .tanh()
        .dense(6)
        .layer_norm()
        .dense(1)
        .build(&mut rng)
        .unwrap();
    let x = [0.4, -0.7, 1.1];
    net.forward_train(&x).unwrap();
    let g = net.backward(&[1.0]).unwrap();
    for i in 0..3 {
        let mut p = x;
        let mut m = x;
        p[i] += 1e-5;
        m[i] -= 1e-5;
        let fd = (net.forward(&p).unwrap()[0] - net.forward(&m).unwrap()[0]) / 2e-5;
        assert!((fd - g.input[i]).abs() < 1e-7, "input {i}: {fd} vs {}", g.input[i]);
    }
}

#[test]
fn forward_is_bit_identical_across_calls() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = random_architecture(&mut rng);
    let x: Vec<f64> = (0..net.input_dim()).map(|i| i as f64 * 0.31 - 0.4).collect();
    let a = net.forward(&x).unwrap();
    let b = net.forward(&x).unwrap();
    assert_eq!(
        a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn layer_norm_examples() {
    assert_eq!(layer_norm(&[1.0, 1.0, 1.0], &[1.0; 3], &[0.0; 3]), vec![0.0, 0.0, 0.0]);
    let y = layer_norm(&[-1.0, 1.0], &[1.0; 2], &[0.0; 2]);
    assert!((y[0] + 1.0).abs() < 1e-12 && (y[1] - 1.0).abs() < 1e-12);
    // mean 2, population variance 8/3: (x - 2) / sqrt(8/3)
    let y = layer_norm(&[0.0, 2.0, 4.0], &[1.0; 3], &[0.0; 3]);
    let s = 1.224_744_871_391_589; // sqrt(3/2)
    assert!((y[0] + s).abs() < 1e-12 && y[1].abs() < 1e-12 && (y[2] - s).abs() < 1e-12);
}

proptest! {
    #[test]
    fn layer_norm_standardizes(xs in prop::collection::vec(-50.0f64..50.0, 2..40)) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        prop_assume!(var > 1e-3);
        let y = layer_norm(&xs, &vec![1.0; xs.len()], &vec![0.0; xs.len()]);
        let ym = y.iter().sum::<f64>() / n;
        let yv = y.iter().map(|v| (v - ym).powi(2)).sum::<f64>() / n;
        prop_assert!(ym.abs() < 1e-9);
        prop_assert!((yv - 1.0).abs() < 1e-6);
    }
}

#[test]
fn adam_zero_gradient_leaves_params() {
    let mut st = AdamState::new(2, AdamConfig::with_lr(0.1));
    let mut p = [1.0, -2.0];
    st.step(&mut p, &[0.0, 0.0]).unwrap();
    assert_eq!(p, [1.0, -2.0]);
}

#[test]
fn adam_first_step_is_bias_corrected() {
    // m = 0.1, v = 0.001; m̂ = 1, v̂ = 1; Δ = 0.1 / (1 + 1e-8)
    let mut st = AdamState::new(1, AdamConfig::with_lr(0.1));
    let mut p = [0.0];
    st.step(&mut p, &[1.0]).unwrap();
    assert!((p[0] + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
    assert_eq!(st.step_count(), 1);
}

#[test]
fn adam_moments_accumulate() {
    // m2 = 0.9*0.1 + 0.1 = 0.19; v2 = 0.999*0.001 + 0.001 = 0.001999
    let mut st = AdamState::new(1, AdamConfig::with_lr(0.1));
    let mut p = [0.0];
    st.step(&mut p, &[1.0]).unwrap();
    st.step(&mut p, &[1.0]).unwrap();
    assert!((st.first_moment()[0] - 0.19).abs() < 1e-15);
    assert!((st.second_moment()[0] - 0.001999).abs() < 1e-15);
    // both bias-corrected moments equal 1, so each step moves by lr/(1+eps)
    assert!((p[0] + 0.2 / (1.0 + 1e-8)).abs() < 1e-12);
}

#[test]
fn adam_rejects_nan() {
    let mut st = AdamState::new(1, AdamConfig::with_lr(0.1));
    assert!(matches!(st.step(&mut [0.0], &[f64::NAN]), Err(Error::Diverged(_))));
}

fn scalar_net(w: f64) -> Network {
    Network::new(1, vec![dense(1, 1, &[w], &[0.0])]).unwrap()
}

#[test]
fn soft_update_examples() {
    let online = scalar_net(2.0);
    let mut t = scalar_net(0.0);
    soft_update(&mut t, &online, 0.0).unwrap();
    assert_eq!(t.params(), vec![0.0, 0.0]);
    soft_update(&mut t, &online, 0.5).unwrap();
    assert_eq!(t.params(), vec![1.0, 0.0]);
    soft_update(&mut t, &online, 1.0).unwrap();
    assert_eq!(t, online);
    assert!(soft_update(&mut t, &online, 1.5).is_err());
    let other = Network::new(1, vec![dense(1, 2, &[0.0, 0.0], &[0.0, 0.0])]).unwrap();
    assert!(matches!(soft_update(&mut t, &other, 0.5), Err(Error::Config(_))));
}

#[test]
fn repeated_soft_update_converges() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    // fan-in ≥ 4 keeps initial parameters within ±0.5, so the starting gap is below 1
    let online = NetworkBuilder::new(4).dense(8).relu().dense(2).build(&mut rng).unwrap();
    let mut target = NetworkBuilder::new(4).dense(8).relu().dense(2).build(&mut rng).unwrap();
    let tau: f64 = 0.005;
    let steps = ((1e-6f64).ln() / (1.0 - tau).ln()).ceil() as usize;
    for _ in 0..steps {
        soft_update(&mut target, &online, tau).unwrap();
    }
    let diff = target
        .params()
        .iter()
        .zip(online.params())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-6, "{diff} after {steps} steps");
}

#[test]
fn checkpoint_round_trip_and_rejections() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let net = NetworkBuilder::new(4)
        .dense(6)
        .dense(6)
        .relu()
        .skip_add(0)
        .layer_norm()
        .dense(3)
        .build(&mut rng)
        .unwrap();
    let bytes = net.to_checkpoint().to_bytes();
    assert_eq!(&bytes[..4], b"ELRL");
    let ck = Checkpoint::read_from(bytes.as_slice()).unwrap();
    let back = Network::from_checkpoint(&ck, Some(&net.descriptor())).unwrap();
    assert_eq!(back, net);

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(
        Checkpoint::read_from(bad.as_slice()),
        Err(Error::Checkpoint(_))
    ));
    let mut bad = bytes.clone();
    bad[4] = 9;
    assert!(matches!(
        Checkpoint::read_from(bad.as_slice()),
        Err(Error::Checkpoint(_))
    ));
    assert!(matches!(
        Network::from_checkpoint(&ck, Some("in=4;dense(4,3)")),
        Err(Error::Checkpoint(_))
    ));
    assert!(Checkpoint::read_from(&bytes[..bytes.len() - 3]).is_err());
}

#[test]
fn descriptor_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = NetworkBuilder::new(10)
        .dense(128)
        .dense(128)
        .relu()
        .skip_add(0)
        .layer_norm()
        .dense(128)
        .relu()
        .dense(5)
        .build(&mut rng)
        .unwrap();
    let d = net.descriptor();
    assert_eq!(
        d,
        "in=10;dense(10,128);dense(128,128);relu;skip(0);layernorm(128);dense(128,128);relu;dense(128,5)"
    );
    assert_eq!(Network::from_descriptor(&d, &mut rng).unwrap().descriptor(), d);
}
