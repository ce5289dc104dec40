use std::collections::BTreeMap;

use mocogan::backend::{
    conv_out_dim, conv_transpose_out_dim, Conv, ConvGeometry, ConvKind, Layer, LayerKind, Mode, Tensor,
};
use mocogan::data::{denormalize, normalize, read_dataset, write_dataset, PackedDataset, VideoClip};
use mocogan::eval::{acd_from_embeddings, inception_score_from_probs};
use mocogan::latent::{sample_video_length, LengthHistogram, SeededRng};
use mocogan::networks::{read_container, write_container};
use mocogan::training::{bce, minibatch_indices, sample_st_start, window_count, Target};
use proptest::prelude::*;

fn clip(len: usize, h: usize, w: usize, seed: u64) -> VideoClip {
    let mut rng = SeededRng::new(seed, 0);
    let bytes = (0..len * h * w * 3).map(|_| rng.below(256) as u8).collect();
    VideoClip::new(len, h, w, bytes, Some(rng.below(3))).unwrap()
}

#[test]
fn normalization_round_trips_every_byte() {
    for b in 0..=255u8 {
        let x = normalize(b);
        assert!((-1.0..=1.0).contains(&x));
        assert_eq!(denormalize(x), b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_output_size_follows_closed_form(input in 1usize..40, kernel in 1usize..6, stride in 1usize..4, padding in 0usize..3) {
        match conv_out_dim(input, kernel, stride, padding) {
            Ok(out) => {
                prop_assert!(input + 2 * padding >= kernel);
                prop_assert_eq!(out, (input + 2 * padding - kernel) / stride + 1);
            }
            Err(_) => prop_assert!(input + 2 * padding < kernel),
        }
    }

    #[test]
    fn transposed_conv_inverts_exact_strided_conv(out in 1usize..20, kernel in 1usize..6, stride in 1usize..4, padding in 0usize..2) {
        if let Ok(up) = conv_transpose_out_dim(out, kernel, stride, padding) {
            prop_assert_eq!(up, (out - 1) * stride + kernel - 2 * padding);
            prop_assert_eq!(conv_out_dim(up, kernel, stride, padding).unwrap(), out);
        }
    }

    #[test]
    fn conv_layer_output_shape_matches_forward(n in 1usize..3, c in 1usize..3, h in 4usize..10, w in 4usize..10, k in 1usize..4, s in 1usize..3, p in 0usize..2) {
        let mut conv = Conv::<f64>::new(ConvKind::Conv2d, c, 2, ConvGeometry::planar(k, s, p), "c").unwrap();
        let x = Tensor::from_fn(&[n, c, h, w], |i| (i as f64 * 0.37).sin());
        let predicted = conv.output_shape(x.shape()).unwrap();
        let y = conv.forward(&x, Mode::Eval).unwrap();
        prop_assert_eq!(y.shape(), predicted.as_slice());
    }

    #[test]
    fn window_count_and_starts_agree(k in 1usize..40, t in 1usize..20, seed in any::<u64>()) {
        let c = clip(k, 1, 1, seed);
        let mut rng = SeededRng::new(seed, 1);
        if k >= t {
            prop_assert_eq!(window_count(k, t), k - t + 1);
            for _ in 0..20 {
                prop_assert!(sample_st_start(&c, t, &mut rng).unwrap() <= k - t);
            }
        } else {
            prop_assert_eq!(window_count(k, t), 0);
            prop_assert!(sample_st_start(&c, t, &mut rng).is_err());
        }
    }

    #[test]
    fn every_epoch_visits_each_clip_once(len in 1usize..50, batch in 1usize..16, seed in any::<u64>()) {
        let total = len * batch;
        let flat: Vec<usize> = (0..len as u64)
            .flat_map(|it| minibatch_indices(len, batch, seed, it))
            .collect();
        prop_assert_eq!(flat.len(), total);
        for epoch in flat.chunks(len) {
            let mut sorted = epoch.to_vec();
            sorted.sort_unstable();
            prop_assert_eq!(sorted, (0..len).collect::<Vec<_>>());
        }
    }

    #[test]
    fn softmax_rows_are_distributions(rows in 1usize..5, cols in 1usize..8, seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed, 2);
        let x = Tensor::from_fn(&[rows, cols], |_| 10.0 * rng.normal());
        let mut layer = Layer::<f64>::new(LayerKind::Softmax, "s").unwrap();
        let y = layer.forward(&x, Mode::Eval).unwrap();
        for row in y.data().chunks(cols) {
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bce_is_nonnegative_and_ordered(p in 0.0f64..=1.0) {
        let t = Tensor::from_vec(&[1, 1], vec![p]).unwrap();
        let real = bce(&t, Target::Real);
        let fake = bce(&t, Target::Fake);
        prop_assert!(real >= 0.0 && fake >= 0.0 && real.is_finite() && fake.is_finite());
        if p > 0.5 {
            prop_assert!(real < fake);
        }
    }

    #[test]
    fn acd_is_permutation_and_translation_invariant(k in 2usize..10, dim in 1usize..5, seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed, 3);
        let e: Vec<Vec<f64>> = (0..k).map(|_| (0..dim).map(|_| rng.normal()).collect()).collect();
        let base = acd_from_embeddings(&e).unwrap();
        let mut rev = e.clone();
        rev.reverse();
        let shift: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let moved: Vec<Vec<f64>> = e.iter().map(|v| v.iter().zip(&shift).map(|(a, b)| a + b).collect()).collect();
        prop_assert!((acd_from_embeddings(&rev).unwrap() - base).abs() < 1e-12);
        prop_assert!((acd_from_embeddings(&moved).unwrap() - base).abs() < 1e-9);
        let constant = vec![e[0].clone(); k];
        prop_assert_eq!(acd_from_embeddings(&constant).unwrap(), 0.0);
    }

    #[test]
    fn inception_score_lies_between_one_and_class_count(n in 2usize..20, c in 2usize..6, seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed, 4);
        let probs: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let e: Vec<f64> = (0..c).map(|_| rng.normal().exp()).collect();
                let z: f64 = e.iter().sum();
                e.into_iter().map(|v| v / z).collect()
            })
            .collect();
        let is = inception_score_from_probs(&probs).unwrap();
        prop_assert!(is >= 1.0 - 1e-12 && is <= c as f64 + 1e-9);
    }

    #[test]
    fn length_histogram_is_a_distribution(lengths in proptest::collection::vec(1usize..30, 1..40), seed in any::<u64>()) {
        let hist = LengthHistogram::from_lengths(lengths.iter().copied()).unwrap();
        let total: f64 = hist.entries().map(|(_, p)| p).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert_eq!(hist.min_length(), *lengths.iter().min().unwrap());
        let mut rng = SeededRng::new(seed, 5);
        for _ in 0..20 {
            let k = sample_video_length(&hist, &mut rng);
            prop_assert!(lengths.contains(&k));
        }
    }

    #[test]
    fn dataset_files_round_trip(count in 1usize..5, len in 1usize..5, h in 1usize..6, w in 1usize..6, seed in any::<u64>()) {
        let clips: Vec<VideoClip> = (0..count).map(|i| clip(len + i % 2, h, w, seed ^ i as u64)).collect();
        let dataset = PackedDataset::new(clips).unwrap();
        let mut bytes = Vec::new();
        write_dataset(&mut bytes, &dataset).unwrap();
        let back = read_dataset(&mut bytes.as_slice()).unwrap();
        prop_assert_eq!(back, dataset);
        prop_assert!(read_dataset(&mut &bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn checkpoint_containers_round_trip(shapes in proptest::collection::vec(proptest::collection::vec(1usize..4, 1..4), 0..5), seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed, 6);
        let tensors: Vec<(String, Tensor<f32>)> = shapes
            .iter()
            .enumerate()
            .map(|(i, s)| (format!("t{i}"), Tensor::from_fn(s, |_| rng.normal() as f32)))
            .collect();
        let refs: Vec<(String, &Tensor<f32>)> = tensors.iter().map(|(n, t)| (n.clone(), t)).collect();
        let mut meta = serde_json::Map::new();
        meta.insert("kind".into(), "test".into());
        let mut bytes = Vec::new();
        write_container(&mut bytes, &serde_json::Value::Object(meta), &refs).unwrap();
        let (back_meta, back) = read_container(&mut bytes.as_slice()).unwrap();
        prop_assert_eq!(back_meta["kind"].as_str(), Some("test"));
        prop_assert_eq!(back.len(), tensors.len());
        for ((n1, t1), (n2, t2)) in tensors.iter().zip(&back) {
            prop_assert_eq!(n1, n2);
            prop_assert_eq!(t1.shape(), t2.shape());
            let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(t1), bits(t2));
        }
    }
}

#[test]
fn histogram_rejects_bad_distributions() {
    assert!(LengthHistogram::new(BTreeMap::new()).is_err());
    assert!(LengthHistogram::new(BTreeMap::from([(4, 0.5)])).is_err());
    assert!(LengthHistogram::new(BTreeMap::from([(0, 1.0)])).is_err());
}
