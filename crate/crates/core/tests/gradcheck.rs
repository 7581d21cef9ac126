//! Central finite-difference checks of every layer's backward rule in f64.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use signet_core::gradcheck::{check_gradients, BuildFn, GradCheckOptions};
use signet_core::model::ArchitectureConfig;
use signet_core::nn::{Conv2dParams, DropoutSpec, LrnParams, Mode, PoolSpec};
use signet_core::train::{contrastive_loss, ContrastiveLossParams};
use signet_core::{Model, Tape, Tensor, Var};

const TOLERANCE: f64 = 1e-4;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let n = shape.iter().product();
    Tensor::from_vec(shape.to_vec(), (0..n).map(|_| normal.sample(rng)).collect()).unwrap()
}

/// Values bounded away from zero, so a ReLU kink is never within the step.
fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let mut t = random(shape, rng);
    for v in t.data_mut() {
        *v += 0.05 * v.signum();
    }
    t
}

/// Distinct values spaced 0.01 apart in random order, so every pooling
/// window has a unique maximum by a wide margin.
fn distinct(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let order = index::sample(rng, n, n).into_vec();
    Tensor::from_vec(shape.to_vec(), order.iter().map(|&i| i as f64 * 0.01 - 1.0).collect()).unwrap()
}

fn check(layer: &str, inputs: Vec<(&str, Tensor<f64>)>, build: &BuildFn) -> (f64, usize) {
    let options = GradCheckOptions { seed: layer.len() as u64, ..GradCheckOptions::default() };
    let report = check_gradients(&inputs, build, &options).unwrap();
    assert!(report.max_relative_error < TOLERANCE, "{layer}: {report:?}");
    println!("{layer}: {} coordinates, max relative error {:.2e}", report.coordinates, report.max_relative_error);
    (report.max_relative_error, report.coordinates)
}

#[test]
fn conv2d() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (stride, pad) in [(1, 0), (2, 1)] {
        let inputs = vec![
            ("x", random(&[2, 3, 7, 8], &mut rng)),
            ("w", random(&[4, 3, 3, 3], &mut rng)),
            ("b", random(&[4], &mut rng)),
        ];
        let (_, n) = check(&format!("conv2d s{stride} p{pad}"), inputs, &move |t, v| {
            t.conv2d(v[0], &Conv2dParams { weights: v[1], bias: v[2], stride, pad })
        });
        assert!(n >= 100);
    }
}

#[test]
fn maxpool() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let inputs = vec![("x", distinct(&[2, 3, 9, 11], &mut rng))];
    let spec = PoolSpec { window: (3, 3), stride: 2 };
    let (_, n) = check("maxpool", inputs, &move |t, v| t.maxpool2d(v[0], &spec));
    assert!(n >= 100);
}

#[test]
fn lrn() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // The default alpha barely couples channels; a large one exercises the
    // cross-channel terms of the backward rule.
    for (name, params) in [
        ("lrn default", LrnParams::default()),
        ("lrn alpha 0.5", LrnParams { alpha: 0.5, beta: 0.75, k: 2.0, n: 5 }),
        ("lrn n 3 k 1", LrnParams { alpha: 0.3, beta: 0.6, k: 1.0, n: 3 }),
    ] {
        let inputs = vec![("x", random(&[2, 7, 4, 5], &mut rng))];
        let (_, n) = check(name, inputs, &move |t, v| t.lrn(v[0], &params));
        assert!(n >= 100);
    }
}

#[test]
fn dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let inputs =
        vec![("x", random(&[3, 10], &mut rng)), ("w", random(&[10, 7], &mut rng)), ("b", random(&[7], &mut rng))];
    let (_, n) = check("dense", inputs, &|t, v| t.dense(v[0], v[1], v[2]));
    assert!(n >= 100);
}

#[test]
fn relu() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inputs = vec![("x", away_from_zero(&[4, 50], &mut rng))];
    let (_, n) = check("relu", inputs, &|t, v| Ok(t.relu(v[0])));
    assert!(n >= 100);
}

#[test]
fn dropout() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let inputs = vec![("x", random(&[4, 50], &mut rng))];
    let infer = DropoutSpec { rate: 0.5, mode: Mode::Infer };
    let (_, n) =
        check("dropout infer", inputs.clone(), &move |t, v| t.dropout(v[0], &infer, &mut ChaCha8Rng::seed_from_u64(0)));
    assert!(n >= 100);
    let train = DropoutSpec { rate: 0.3, mode: Mode::Train };
    check("dropout train, fixed mask", inputs, &move |t, v| t.dropout(v[0], &train, &mut ChaCha8Rng::seed_from_u64(7)));
}

#[test]
fn contrastive() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rows = 40;
    let mut e1 = Vec::new();
    let mut e2 = Vec::new();
    while e1.len() < rows * 4 {
        let a: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d = a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        // stay clear of the margin kink and of D = 0
        if (d - 1.0).abs() > 1e-2 && d > 1e-2 {
            e1.extend(a);
            e2.extend(b);
        }
    }
    let labels: Vec<u8> = (0..rows).map(|i| (i % 2) as u8).collect();
    let inputs = vec![
        ("e1", Tensor::from_vec(vec![rows, 4], e1).unwrap()),
        ("e2", Tensor::from_vec(vec![rows, 4], e2).unwrap()),
    ];
    for (name, params) in [
        ("contrastive", ContrastiveLossParams::default()),
        ("contrastive alpha 0.3 beta 2 m 1.5", ContrastiveLossParams { alpha: 0.3, beta: 2.0, margin: 1.5 }),
    ] {
        let labels = labels.clone();
        let (_, n) = check(name, inputs.clone(), &move |t, v| contrastive_loss(t, v[0], v[1], &labels, &params));
        assert!(n >= 100);
    }
}

/// Loss of the tiny twin on one pair of each label, in inference mode.
fn twin_loss(model: &Model<f64>, tape: &mut Tape<f64>, trainable: bool, x1: &Tensor<f64>, x2: &Tensor<f64>) -> Var {
    let bound = model.bind(tape, trainable).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a = tape.constant(x1.clone());
    let b = tape.constant(x2.clone());
    let e1 = model.forward(tape, &bound, a, Mode::Infer, &mut rng).unwrap();
    let e2 = model.forward(tape, &bound, b, Mode::Infer, &mut rng).unwrap();
    contrastive_loss(tape, e1, e2, &[0, 1], &ContrastiveLossParams::default()).unwrap()
}

#[test]
fn tiny_network_end_to_end() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let model: Model<f64> = Model::build(ArchitectureConfig::tiny(), 3).unwrap();
    let (x1, x2) = (random(&[2, 1, 32, 48], &mut rng), random(&[2, 1, 32, 48], &mut rng));
    let mut tape = Tape::new();
    let loss = twin_loss(&model, &mut tape, true, &x1, &x2);
    let grads = tape.backward(loss).unwrap();
    let loss_at = |m: &Model<f64>| {
        let mut tape = Tape::new();
        let l = twin_loss(m, &mut tape, false, &x1, &x2);
        tape.value(l).item().unwrap()
    };

    const STEP: f64 = 1e-6;
    const FLOOR: f64 = 1e-4;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (name, t) in model.params() {
        let picks = index::sample(&mut rng, t.numel(), t.numel().min(25)).into_vec();
        for i in picks {
            let mut shifted = model.clone();
            shifted.param_mut(name).unwrap().data_mut()[i] += STEP;
            let plus = loss_at(&shifted);
            shifted.param_mut(name).unwrap().data_mut()[i] -= 2.0 * STEP;
            let minus = loss_at(&shifted);
            let numeric = (plus - minus) / (2.0 * STEP);
            let analytic = grads[name.as_str()].data()[i];
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
            assert!(err < TOLERANCE, "{name}[{i}] analytic {analytic} numeric {numeric}");
            worst = worst.max(err);
            checked += 1;
        }
    }
    println!("tiny network: {checked} coordinates, max relative error {worst:.2e}");
    assert!(checked >= 100);
}
