//! Finite-difference checks of the layered classifier's backward pass.
#![allow(dead_code)]

use ambicomp::model::{Architecture, LayeredClassifier};
use ambicomp::netcore::gradcheck::{central_difference, max_relative_error};
use ambicomp::netcore::{batch_cross_entropy, softmax_ce_grad, Activation, Matrix, Mode};
use ambicomp::pipeline::kd_targets;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Gradients smaller than this are compared in absolute terms.
const FLOOR: f64 = 1e-6;

pub fn three_blocks(activation: Activation) -> Architecture {
    Architecture {
        input_dim: 5,
        width: 6,
        depth: 3,
        num_classes: 3,
        activation,
        dropout: 0.0,
        ..Architecture::default()
    }
}

pub fn batch(rows: usize, arch: &Architecture, seed: u64) -> (Matrix, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..rows * arch.input_dim)
        .map(|_| rng.random_range(-1.5..1.5))
        .collect();
    let mut y = Matrix::zeros(rows, arch.num_classes);
    for r in 0..rows {
        y.set(r, rng.random_range(0..arch.num_classes), 1.0);
    }
    (Matrix::from_vec(rows, arch.input_dim, x).unwrap(), y)
}

fn read(m: &mut LayeredClassifier, grads: bool) -> Vec<f64> {
    m.trainable_params()
        .iter()
        .flat_map(|p| {
            if grads {
                p.grads.to_vec()
            } else {
                p.values.to_vec()
            }
        })
        .collect()
}

fn write(m: &mut LayeredClassifier, flat: &[f64]) {
    let mut off = 0;
    for p in m.trainable_params() {
        let n = p.values.len();
        p.values.copy_from_slice(&flat[off..off + n]);
        off += n;
    }
}

/// Max relative error of the head loss `mean CE(head, targets)` plus the
/// probe losses `mean CE(probe_l, targets)` over every trainable parameter.
pub fn supervised(model: &LayeredClassifier, x: &Matrix, targets: &Matrix) -> f64 {
    let mut m = model.clone();
    m.zero_grad();
    let out = m.forward_all(x, Mode::Train).unwrap();
    let head = softmax_ce_grad(&out.head_probs, targets).unwrap();
    let probes: Vec<(usize, Matrix)> = out
        .probe_probs
        .iter()
        .map(|(l, p)| (*l, softmax_ce_grad(p, targets).unwrap()))
        .collect();
    m.backward(Some(&head), &probes).unwrap();
    let analytic = read(&mut m, true);

    let mut theta = read(&mut m, false);
    let numeric = central_difference(&mut theta, STEP, |t| {
        let mut probe = m.clone();
        write(&mut probe, t);
        let out = probe.forward_all(x, Mode::Eval).unwrap();
        let mut loss = batch_cross_entropy(&out.head_probs, targets).unwrap();
        for (_, p) in &out.probe_probs {
            loss += batch_cross_entropy(p, targets).unwrap();
        }
        loss
    });
    assert_eq!(analytic.len(), numeric.len());
    max_relative_error(&analytic, &numeric, FLOOR)
}

/// Distillation setup: blocks `1..=source` and the source probe frozen,
/// teacher = source probe. The analytic gradient comes from the mixed
/// targets; the numeric one from `λ·CE(y) + (1 − λ)·CE(teacher)`.
pub fn distillation(
    model: &LayeredClassifier,
    source: usize,
    x: &Matrix,
    y: &Matrix,
    lambda: f64,
) -> f64 {
    let mut m = model.clone();
    m.freeze_through(source).unwrap();
    m.probe_mut(source).unwrap().frozen = true;
    let teacher = m.probe_predict(x, source).unwrap();
    let targets = kd_targets(y, &teacher, lambda).unwrap();
    let h = m.hidden_states(x, source).unwrap().pop().unwrap();

    m.zero_grad();
    let out = m.forward_from(&h, source, Mode::Train).unwrap();
    let g = softmax_ce_grad(&out.head_probs, &targets).unwrap();
    m.backward(Some(&g), &[]).unwrap();
    let analytic = read(&mut m, true);

    let mut theta = read(&mut m, false);
    let numeric = central_difference(&mut theta, STEP, |t| {
        let mut probe = m.clone();
        write(&mut probe, t);
        let p = probe.predict(x).unwrap();
        lambda * batch_cross_entropy(&p, y).unwrap()
            + (1.0 - lambda) * batch_cross_entropy(&p, &teacher).unwrap()
    });
    assert_eq!(analytic.len(), numeric.len());
    max_relative_error(&analytic, &numeric, FLOOR)
}
