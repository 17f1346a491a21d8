use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn small_arch(depth: usize) -> Architecture {
    Architecture {
        input_dim: 3,
        width: 5,
        depth,
        num_classes: 4,
        ..Architecture::default()
    }
}

fn random_input(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.random_range(-2.0..2.0))
            .collect(),
    )
    .unwrap()
}

#[test]
fn single_block_model_has_one_hidden_state_and_no_probe_slots() {
    let mut m = LayeredClassifier::new(small_arch(1), 0).unwrap();
    let out = m.forward_all(&random_input(2, 3, 1), Mode::Eval).unwrap();
    assert_eq!(out.hidden.len(), 1);
    assert!(out.probe_probs.is_empty());
    assert!(m.attach_probes(&[1], 0).is_err());
}

#[test]
fn zero_weights_give_uniform_distributions() {
    let mut m = LayeredClassifier::zeroed(small_arch(3)).unwrap();
    m.attach_probes(&[1, 2], 0).unwrap();
    for p in &mut m.probes {
        p.head = DenseLayer::zeros(5, 4);
    }
    let out = m.forward_all(&random_input(4, 3, 2), Mode::Eval).unwrap();
    for v in out.head_probs.as_slice() {
        assert_eq!(*v, 0.25);
    }
    for (_, probs) in &out.probe_probs {
        assert!(probs.as_slice().iter().all(|&v| v == 0.25));
    }
}

#[test]
fn hidden_states_match_layer_by_layer_replay() {
    let arch = small_arch(4);
    let mut m = LayeredClassifier::new(arch.clone(), 9).unwrap();
    let x = random_input(6, 3, 3);
    let out = m.forward_all(&x, Mode::Eval).unwrap();

    let mut h: Vec<Vec<f64>> = x.iter_rows().map(|r| r.to_vec()).collect();
    for (layer, block) in m.blocks().iter().enumerate() {
        let w = &block.dense.weights;
        h = h
            .iter()
            .map(|row| {
                (0..w.cols())
                    .map(|j| {
                        let mut z = block.dense.bias[j];
                        for (k, v) in row.iter().enumerate() {
                            z += v * w.get(k, j);
                        }
                        let a = if layer == 0 { z } else { z.max(0.0) };
                        if layer > 0 {
                            row[j] + a
                        } else {
                            a
                        }
                    })
                    .collect()
            })
            .collect();
        for (r, row) in h.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                assert!((out.hidden[layer].get(r, c) - v).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn forward_rejects_wrong_feature_dim() {
    let mut m = LayeredClassifier::new(small_arch(2), 0).unwrap();
    assert!(m.forward_all(&Matrix::zeros(2, 4), Mode::Eval).is_err());
    assert!(m.predict(&Matrix::zeros(2, 7)).is_err());
}

#[test]
fn identity_prune_keeps_head() {
    let mut m = LayeredClassifier::new(small_arch(4), 1).unwrap();
    m.attach_probes(&[1, 2, 3], 2).unwrap();
    let p = m.prune_above(4).unwrap();
    assert_eq!(p.depth(), 4);
    assert!(p.probes().is_empty());
    assert_eq!(p.head().weights, m.head().weights);
    assert_eq!(p.architecture(), m.architecture());
}

#[test]
fn prune_twelve_to_nine() {
    let arch = Architecture {
        depth: 12,
        ..Architecture::default()
    };
    let mut m = LayeredClassifier::new(arch.clone(), 5).unwrap();
    m.attach_probes(&(1..12).collect::<Vec<_>>(), 6).unwrap();
    let before = m.flat_params();
    let pruned = m.prune_above(9).unwrap();
    assert_eq!(pruned.depth(), 9);
    assert!(pruned.probes().is_empty());
    assert_eq!(pruned.head().weights, m.probe(9).unwrap().head.weights);
    // source untouched
    assert_eq!(m.flat_params(), before);
    assert_eq!(m.depth(), 12);

    let removed_blocks: usize = (10..=12).map(|i| arch.block_params(i)).sum();
    let removed_probes: usize = m
        .probes()
        .iter()
        .filter(|p| p.attach_after != 9)
        .map(Probe::param_count)
        .sum();
    assert_eq!(
        pruned.param_count(),
        m.param_count() - removed_blocks - removed_probes - m.head().param_count()
    );
}

#[test]
fn prune_keeps_retained_weights_bit_identical() {
    let mut m = LayeredClassifier::new(small_arch(5), 11).unwrap();
    m.attach_probes(&[1, 2, 3, 4], 12).unwrap();
    let pruned = m.prune_with_probes(3, &[1]).unwrap();
    for (a, b) in pruned.blocks().iter().zip(m.blocks()) {
        let bits = |l: &DenseLayer| {
            l.weights
                .as_slice()
                .iter()
                .chain(&l.bias)
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&a.dense), bits(&b.dense));
    }
    assert_eq!(pruned.probes().len(), 1);
    assert_eq!(pruned.probes()[0].attach_after, 1);

    let x = random_input(7, 3, 4);
    let from_probe = m.probe_predict(&x, 3).unwrap();
    let from_head = pruned.predict(&x).unwrap();
    assert_eq!(from_probe, from_head);
}

#[test]
fn prune_without_probe_is_rejected() {
    let m = LayeredClassifier::new(small_arch(4), 0).unwrap();
    assert!(matches!(m.prune_above(2), Err(Error::InvalidLayer { .. })));
    assert!(m.prune_above(0).is_err());
    assert!(m.prune_above(5).is_err());
}

#[test]
fn pruning_k_blocks_removes_k_block_params() {
    let arch = Architecture::default();
    let m = LayeredClassifier::new(arch.clone(), 0).unwrap();
    let full = m.param_count();
    assert_eq!(full, arch.backbone_params(arch.depth));
    let per_block = arch.block_params(2);
    for k in 1..=3 {
        assert_eq!(arch.backbone_params(arch.depth - k), full - k * per_block);
    }
}

#[test]
fn dense_head_param_count() {
    assert_eq!(DenseLayer::zeros(4, 3).param_count(), 15);
}

#[test]
fn freeze_through_bounds_and_round_trip() {
    let mut m = LayeredClassifier::new(small_arch(5), 0).unwrap();
    let original = m.freeze_mask().clone();
    m.freeze_through(4).unwrap();
    assert_eq!(m.freeze_mask().blocks, vec![true, true, true, true, false]);
    assert!(!m.freeze_mask().head);
    assert!(m.freeze_through(5).is_err());
    assert!(m.freeze_through(0).is_err());
    m.unfreeze_all();
    assert_eq!(m.freeze_mask(), &original);
}

#[test]
fn frozen_blocks_get_no_gradient() {
    let mut m = LayeredClassifier::new(small_arch(4), 3).unwrap();
    m.freeze_through(2).unwrap();
    let x = random_input(5, 3, 8);
    let out = m.forward_all(&x, Mode::Train).unwrap();
    let g = out.head_probs.scale(0.3);
    m.backward(Some(&g), &[]).unwrap();
    for b in &m.blocks()[..2] {
        assert!(b.dense.grad_weights.as_slice().iter().all(|&v| v == 0.0));
        assert!(b.dense.grad_bias.iter().all(|&v| v == 0.0));
    }
    assert!(m.blocks()[3]
        .dense
        .grad_weights
        .as_slice()
        .iter()
        .any(|&v| v != 0.0));
}

#[test]
fn backward_without_forward_is_rejected() {
    let mut m = LayeredClassifier::new(small_arch(2), 0).unwrap();
    let g = Matrix::zeros(1, 4);
    assert!(matches!(
        m.backward(Some(&g), &[]),
        Err(Error::NoForward(_))
    ));
}

mod checkpoints {
    use super::*;

    fn trained_like(seed: u64) -> LayeredClassifier {
        let mut m = LayeredClassifier::new(small_arch(3), seed).unwrap();
        m.attach_probes(&[1, 2], seed + 1).unwrap();
        m.freeze_through(1).unwrap();
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = trained_like(4);
        save_checkpoint(&path, &m, "abc123").unwrap();
        let ck = load_checkpoint(&path).unwrap();
        assert_eq!(ck.config_hash, "abc123");
        let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
        assert_eq!(bits(ck.model.flat_params()), bits(m.flat_params()));
        assert_eq!(ck.model.param_count(), m.param_count());
        assert_eq!(ck.model.freeze_mask(), m.freeze_mask());
        assert_eq!(ck.model.rng(), m.rng());
        let x = random_input(4, 3, 1);
        assert_eq!(ck.model.predict(&x).unwrap(), m.predict(&x).unwrap());
        // train-mode passes consume the restored dropout stream identically
        let mut a = m.clone();
        let mut b = ck.model;
        let fa = a.forward_all(&x, Mode::Train).unwrap();
        let fb = b.forward_all(&x, Mode::Train).unwrap();
        assert_eq!(fa.head_probs, fb.head_probs);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &trained_like(1), "").unwrap();
        let bytes = std::fs::read(&path).unwrap();
        for cut in [0, 10, bytes.len() / 2, bytes.len() - 1] {
            std::fs::write(&path, &bytes[..cut]).unwrap();
            assert!(
                matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))),
                "cut {cut}"
            );
        }
    }

    #[test]
    fn flipped_byte_fails_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &trained_like(2), "").unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let n = bytes.len();
        bytes[n - 100] ^= 0x40;
        std::fs::write(&path, &bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("hash mismatch"), "{err}");
    }

    #[test]
    fn mismatched_class_count_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &trained_like(3), "").unwrap();
        let mut other = small_arch(3);
        other.num_classes = 5;
        assert!(load_checkpoint_expecting(&path, &other).is_err());
        assert!(load_checkpoint_expecting(&path, &small_arch(3)).is_ok());
    }
}
