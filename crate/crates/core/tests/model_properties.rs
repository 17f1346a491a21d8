use ambicomp::data::{generate, Dataset, SynthSpec};
use ambicomp::model::{load_checkpoint, save_checkpoint, Architecture, LayeredClassifier};
use ambicomp::netcore::{Activation, Matrix};
use ambicomp::pipeline::{distill, train_probes, train_standard, tune_lambda, TrainConfig};
use proptest::prelude::*;

fn arch(depth: usize, width: usize, activation: Activation) -> Architecture {
    Architecture {
        input_dim: 5,
        width,
        depth,
        num_classes: 3,
        activation,
        dropout: 0.1,
        ..Architecture::default()
    }
}

fn inputs(rows: usize, scale: f64, seed: u64) -> Matrix {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * 5)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    Matrix::from_vec(rows, 5, data).unwrap()
}

fn bits(values: &[f64]) -> Vec<u64> {
    values.iter().map(|v| v.to_bits()).collect()
}

fn tiny_data(seed: u64) -> (Dataset, Dataset) {
    let mut spec = SynthSpec::corners(3, 5, 1.25, 1.5, 1.0);
    spec.n_train = 48;
    spec.n_val = 24;
    spec.n_test = 1;
    spec.seed = seed;
    let b = generate(&spec).unwrap();
    (b.train, b.val)
}

fn quick(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 2,
        batch_size: 8,
        seed,
        ..TrainConfig::default()
    }
}

fn depth_and_target() -> impl Strategy<Value = (usize, usize)> {
    (2usize..7).prop_flat_map(|d| (Just(d), 1..=d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pruning_keeps_bits_and_reproduces_the_probe(
        (depth, target) in depth_and_target(),
        width in 2usize..9,
        seed in any::<u64>(),
    ) {
        let mut m = LayeredClassifier::new(arch(depth, width, Activation::Relu), seed).unwrap();
        let layers: Vec<usize> = (1..depth).collect();
        m.attach_probes(&layers, seed ^ 1).unwrap();
        let pruned = m.prune_above(target).unwrap();

        let kept: usize = (1..=target).map(|i| m.architecture().block_params(i)).sum();
        prop_assert_eq!(&bits(&pruned.flat_params())[..kept], &bits(&m.flat_params())[..kept]);
        prop_assert_eq!(pruned.param_count(), m.architecture().backbone_params(target));

        let x = inputs(6, 2.0, seed);
        let expected = if target == depth { m.predict(&x).unwrap() } else { m.probe_predict(&x, target).unwrap() };
        prop_assert_eq!(pruned.predict(&x).unwrap(), expected);
    }

    #[test]
    fn predictions_are_finite_distributions(
        depth in 1usize..6,
        width in 1usize..9,
        scale in 0.1f64..80.0,
        seed in any::<u64>(),
        tanh in any::<bool>(),
    ) {
        let act = if tanh { Activation::Tanh } else { Activation::Relu };
        let m = LayeredClassifier::new(arch(depth, width, act), seed).unwrap();
        let p = m.predict(&inputs(5, scale, seed)).unwrap();
        for row in p.iter_rows() {
            prop_assert!(row.iter().all(|v| v.is_finite() && *v >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoints_round_trip_bit_exact(
        depth in 1usize..6,
        width in 1usize..9,
        probes in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let mut m = LayeredClassifier::new(arch(depth, width, Activation::Relu), seed).unwrap();
        if probes && depth > 1 {
            m.attach_probes(&[1], seed).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &m, "abc").unwrap();
        let back = load_checkpoint(&path).unwrap();
        prop_assert_eq!(back.config_hash, "abc");
        prop_assert_eq!(back.model.architecture(), m.architecture());
        prop_assert_eq!(bits(&back.model.flat_params()), bits(&m.flat_params()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn distillation_never_touches_the_frozen_prefix(
        source in 1usize..3,
        lambda in 0.51f64..=1.0,
        seed in any::<u64>(),
    ) {
        let (train, _) = tiny_data(seed);
        let mut m = LayeredClassifier::new(arch(4, 6, Activation::Relu), seed).unwrap();
        train_standard(&mut m, &train, &quick(seed)).unwrap();
        train_probes(&mut m, &train, &quick(seed), false).unwrap();
        let snapshot = m.prune_with_probes(3, &[source]).unwrap();
        let out = distill(&snapshot, source, lambda, &train, &quick(seed)).unwrap();

        let prefix: usize = (1..=source).map(|i| snapshot.architecture().block_params(i)).sum();
        prop_assert_eq!(&bits(&out.flat_params())[..prefix], &bits(&snapshot.flat_params())[..prefix]);
        prop_assert!(out.probes().is_empty());
        prop_assert_ne!(bits(&out.flat_params())[prefix..].to_vec(), bits(&snapshot.flat_params())[prefix..].to_vec());
    }

    #[test]
    fn tuned_lambda_is_admissible(seed in any::<u64>(), tau in 0.0f64..0.2) {
        let (train, val) = tiny_data(seed);
        let mut m = LayeredClassifier::new(arch(3, 6, Activation::Relu), seed).unwrap();
        train_standard(&mut m, &train, &quick(seed)).unwrap();
        train_probes(&mut m, &train, &quick(seed), false).unwrap();
        let snapshot = m.prune_with_probes(2, &[1]).unwrap();
        let original = 0.6;
        let cands = [0.6, 0.7, 0.8, 0.9];
        let tuned = tune_lambda(
            &snapshot, 1, &cands, &train.features(), &train.one_hot(), &val, original, tau, &quick(seed),
        ).unwrap();
        let chosen = tuned.config.selected;
        prop_assert!(chosen > 0.5 && cands.contains(&chosen));
        let row = tuned.table.iter().find(|c| c.lambda == chosen).unwrap();
        let any_pass = tuned.table.iter().any(|c| c.val_acc > original - tau);
        prop_assert_eq!(tuned.config.fallback, !any_pass);
        if any_pass {
            prop_assert!(row.val_acc > original - tau);
        }
        prop_assert!(tuned.config.candidates.iter().all(|&l| l > 0.5));
    }
}
