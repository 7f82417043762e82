//! Property tests for the tensor core, layers, metrics, batching and
//! Grad-CAM algebra.

use proptest::prelude::*;

use fakespot::data::{generate_square_corpus, make_split, DatasetPart};
use fakespot::gradcam::{gradcam_map, normalize_map, FeatureMapGradients};
use fakespot::metrics::{accuracy, confusion, f1, precision, recall};
use fakespot::nn::{output_shape, predict_label, sigmoid};
use fakespot::rng::SeededRng;
use fakespot::tensor::Tensor4;

fn small_shape() -> impl Strategy<Value = (usize, usize, usize, usize)> {
    (1usize..4, 1usize..4, 1usize..6, 1usize..6)
}

proptest! {
    #[test]
    fn flatten_then_reshape_is_identity(shape in small_shape(), seed in 0u64..1000) {
        let mut rng = SeededRng::new(seed);
        let t: Tensor4<f32> = rng.sample_normal(shape, 0.0, 1.0).unwrap();
        let back = Tensor4::reshape_from(shape, t.flatten()).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn map_composition(shape in small_shape(), seed in 0u64..1000) {
        let mut rng = SeededRng::new(seed);
        let t: Tensor4<f32> = rng.sample_normal(shape, 0.0, 1.0).unwrap();
        let f = |x: f32| x * 2.0;
        let g = |x: f32| x + 1.0;
        let composed = t.map_elementwise(|x| f(g(x)));
        let chained = t.map_elementwise(g).map_elementwise(f);
        prop_assert_eq!(composed, chained);
    }

    #[test]
    fn equal_seeds_bitwise_reproducible(seed in 0u64..10_000) {
        let a: Tensor4<f32> = SeededRng::new(seed).sample_normal((1, 2, 4, 4), 0.0, 1.0).unwrap();
        let b: Tensor4<f32> = SeededRng::new(seed).sample_normal((1, 2, 4, 4), 0.0, 1.0).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_differ(seed in 0u64..10_000) {
        let a: Tensor4<f32> = SeededRng::new(seed).sample_normal((1, 1, 4, 4), 0.0, 1.0).unwrap();
        let b: Tensor4<f32> = SeededRng::new(seed + 1).sample_normal((1, 1, 4, 4), 0.0, 1.0).unwrap();
        prop_assert_ne!(a, b);
    }

    #[test]
    fn conv_shape_law(h in 1usize..40, w in 1usize..40, kh in 1usize..8, kw in 1usize..8) {
        prop_assume!(kh <= h && kw <= w);
        let (oh, ow) = output_shape(h, w, (kh, kw)).unwrap();
        prop_assert_eq!(oh, h - kh + 1);
        prop_assert_eq!(ow, w - kw + 1);
    }

    #[test]
    fn threshold_logit_equivalence(z in -50.0f64..50.0) {
        prop_assert_eq!(predict_label(sigmoid(z)) == 1, z >= 0.0);
    }

    #[test]
    fn metrics_match_brute_force(labels in proptest::collection::vec(0u8..2, 1..200), seed in 0u64..1000) {
        let mut rng = SeededRng::new(seed);
        let preds: Vec<u8> = labels.iter().map(|_| (rng.next_u64() & 1) as u8).collect();
        let c = confusion(&preds, &labels).unwrap();

        // Independent per-item recount.
        let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
        for (&p, &y) in preds.iter().zip(&labels) {
            if p == 1 && y == 1 { tp += 1 }
            else if p == 1 { fp += 1 }
            else if y == 0 { tn += 1 }
            else { fn_ += 1 }
        }
        prop_assert_eq!((c.tp, c.fp, c.tn, c.fn_), (tp, fp, tn, fn_));
        let total = labels.len() as f64;
        prop_assert!((accuracy(&c) - (tp + tn) as f64 / total).abs() < 1e-12);
    }

    #[test]
    fn metrics_are_order_invariant(n in 2usize..100, seed in 0u64..1000) {
        let mut rng = SeededRng::new(seed);
        let labels: Vec<u8> = (0..n).map(|_| (rng.next_u64() & 1) as u8).collect();
        let preds: Vec<u8> = (0..n).map(|_| (rng.next_u64() & 1) as u8).collect();
        let c1 = confusion(&preds, &labels).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let p2: Vec<u8> = order.iter().map(|&i| preds[i]).collect();
        let l2: Vec<u8> = order.iter().map(|&i| labels[i]).collect();
        let c2 = confusion(&p2, &l2).unwrap();
        prop_assert_eq!(c1, c2);
        prop_assert_eq!(f1(precision(&c1), recall(&c1)), f1(precision(&c2), recall(&c2)));
    }

    #[test]
    fn split_is_disjoint_and_complete(n_fake in 4usize..40, n_real in 4usize..40, seed in 0u64..500) {
        let mut rng = SeededRng::new(seed);
        let corpus = generate_square_corpus(n_fake.max(n_real), &mut rng);
        let images: Vec<_> = corpus.images.into_iter().take(n_fake + n_real).collect();
        let total = images.len();
        let split = make_split(images, 0.25, &mut rng).unwrap();
        let train_ids: std::collections::HashSet<_> =
            split.train.images.iter().map(|i| i.source_id.clone()).collect();
        for img in &split.test.images {
            prop_assert!(!train_ids.contains(&img.source_id));
        }
        prop_assert_eq!(split.train.len() + split.test.len(), total);
    }

    #[test]
    fn batches_partition_the_part(n in 1usize..50, batch_size in 1usize..10, seed in 0u64..500) {
        let mut rng = SeededRng::new(seed);
        let corpus = generate_square_corpus(n, &mut rng);
        let part = DatasetPart { images: corpus.images };
        let expected: usize = part.len();
        let batches = part.shuffled_batches(batch_size, &mut rng);
        let total: usize = batches.iter().map(|(_, l)| l.len()).sum();
        prop_assert_eq!(total, expected);
        let real: f32 = batches.iter().flat_map(|(_, l)| l.iter()).sum();
        prop_assert_eq!(real as usize, expected / 2);
    }

    #[test]
    fn heatmap_is_nonnegative(seed in 0u64..1000) {
        let mut rng = SeededRng::new(seed);
        let fg = FeatureMapGradients {
            activations: rng.sample_normal((1, 3, 4, 4), 0.0, 1.0).unwrap(),
            gradients: rng.sample_normal((1, 3, 4, 4), 0.0, 1.0).unwrap(),
            layer_index: 0,
        };
        let map = gradcam_map(&fg);
        prop_assert!(map.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn gradient_scaling_leaves_normalized_map_unchanged(seed in 0u64..1000, lambda in 0.1f32..10.0) {
        let mut rng = SeededRng::new(seed);
        let acts: Tensor4<f32> = rng.sample_normal((1, 3, 4, 4), 0.0, 1.0).unwrap();
        let grads: Tensor4<f32> = rng.sample_normal((1, 3, 4, 4), 0.0, 1.0).unwrap();
        let base = gradcam_map(&FeatureMapGradients {
            activations: acts.clone(),
            gradients: grads.clone(),
            layer_index: 0,
        });
        let scaled = gradcam_map(&FeatureMapGradients {
            activations: acts,
            gradients: grads.map_elementwise(|g| g * lambda),
            layer_index: 0,
        });
        // Scaling all gradients by lambda scales the raw map by lambda.
        for (&b, &s) in base.data().iter().zip(scaled.data()) {
            prop_assert!((s - b * lambda).abs() <= 1e-3 * (1.0 + s.abs()));
        }
        let nb = normalize_map(&base);
        let ns = normalize_map(&scaled);
        for (&b, &s) in nb.data().iter().zip(ns.data()) {
            prop_assert!((s - b).abs() < 1e-4);
        }
    }
}

/// Loss on a fixed toy batch is non-increasing over 50 optimizer steps for
/// at least 19 of 20 seeded trials.
#[test]
fn training_loss_decreases_across_seeds() {
    use fakespot::nn::{Adam, AdamConfig, Model, ModelTopology};
    use fakespot::tensor::Scalar;

    let topology = ModelTopology::new(&[4], &[8]).unwrap();
    let mut successes = 0;
    for seed in 1..=20u64 {
        let mut model: Model<f32> = Model::new(topology.clone(), seed).unwrap();
        let mut data_rng = SeededRng::new(seed).split(100);
        let batch: Tensor4<f32> = data_rng.sample_normal((8, 3, 32, 32), 0.5, 0.2).unwrap();
        let labels: Vec<f32> = (0..8).map(|i| (i % 2) as f32).collect();
        let mut opt = Adam::new(&model.params, AdamConfig::default());
        let (probs, _) = model.forward(&batch).unwrap();
        let initial = model.batch_loss(&probs, &labels).as_f64();
        let mut last = initial;
        for _ in 0..50 {
            let (probs, cache) = model.forward(&batch).unwrap();
            last = model.batch_loss(&probs, &labels).as_f64();
            let grads = model.backward(&cache, &labels).unwrap();
            opt.step(&mut model.params, &grads).unwrap();
        }
        if last <= initial {
            successes += 1;
        }
    }
    assert!(successes >= 19, "loss decreased in only {successes}/20 trials");
}
