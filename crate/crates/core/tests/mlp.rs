mod common;

use kpplan::mlp::{evaluate, train, Activation, Mlp, MlpSpec, TrainConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_batch(rng: &mut ChaCha8Rng, input: usize, output: usize, n: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..n)
        .map(|_| {
            (
                (0..input).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                (0..output).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
        })
        .collect()
}

fn spec(sizes: Vec<usize>, seed: u64) -> MlpSpec {
    MlpSpec {
        layer_sizes: sizes,
        activation: Activation::Tanh,
        seed,
    }
}

#[test]
fn gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..10 {
        let depth = rng.gen_range(1..4);
        let mut sizes = vec![rng.gen_range(1..6)];
        for _ in 0..depth {
            sizes.push(rng.gen_range(1..7));
        }
        sizes.push(rng.gen_range(1..4));
        let net = Mlp::<f64>::new(spec(sizes.clone(), trial)).unwrap();
        let batch = random_batch(&mut rng, sizes[0], *sizes.last().unwrap(), 5);
        let err = common::max_gradient_error(&net, &batch, 1e-6);
        assert!(err <= 1e-4, "sizes {sizes:?}: relative error {err}");
    }
}

#[test]
fn learns_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let data: Vec<(Vec<f64>, Vec<f64>)> = (0..400)
        .map(|_| {
            let x: f64 = rng.gen_range(-1.0..1.0);
            (vec![x], vec![x])
        })
        .collect();
    let mut net = Mlp::new(spec(vec![1, 16, 1], 3)).unwrap();
    let cfg = TrainConfig { epochs: 200, ..TrainConfig::default() };
    let report = train(&mut net, &data, &cfg).unwrap();
    assert!(report.final_loss < report.initial_loss);
    let eval = evaluate(&net, &data).unwrap();
    assert!(eval.rmse < 0.02, "rmse {}", eval.rmse);
    assert!(eval.r2.unwrap() > 0.99);
}

#[test]
fn training_is_deterministic_and_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let data = random_batch(&mut rng, 4, 2, 64);
    let cfg = TrainConfig { epochs: 5, seed: 9, ..TrainConfig::default() };
    let run = || {
        let mut net = Mlp::new(spec(vec![4, 8, 2], 1)).unwrap();
        let report = train(&mut net, &data, &cfg).unwrap();
        (net, report)
    };
    let (a, ra) = run();
    let (b, rb) = run();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    let text = kpplan::io::to_json_string(&a);
    let back: Mlp<f64> = kpplan::io::from_json_str(&text).unwrap();
    assert_eq!(back, a);
    for (x, _) in &data {
        assert_eq!(back.forward(x).unwrap(), a.forward(x).unwrap());
    }
}

#[test]
fn f32_network_tracks_f64() {
    let net64 = Mlp::<f64>::new(spec(vec![3, 5, 2], 8)).unwrap();
    let net32: Mlp<f32> = kpplan::io::from_json_str(&kpplan::io::to_json_string(&net64)).unwrap();
    let x = [0.3, -0.2, 0.9];
    let y64 = net64.forward(&x).unwrap();
    let y32 = net32.forward(&x.map(|v| v as f32)).unwrap();
    for (a, b) in y64.iter().zip(&y32) {
        assert!((a - f64::from(*b)).abs() < 1e-5);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn backward_loss_equals_forward_mse(seed in any::<u64>(), n in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Mlp::<f64>::new(spec(vec![3, 4, 2], seed)).unwrap();
        let batch = random_batch(&mut rng, 3, 2, n);
        let g = net.backward(&batch).unwrap();
        prop_assert!((g.loss - common::loss(&net, &batch)).abs() < 1e-12);
    }
}
