use std::collections::BTreeMap;

use mocogan::latent::{
    sample_action, sample_content, sample_motion_noise, sample_video_length, stream_id, LatentBatch,
    LatentConfig, LengthHistogram, MotionRnn, SeededRng,
};

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

#[test]
fn content_and_noise_are_standard_normal() {
    let cfg = LatentConfig { d_c: 50, d_m: 10, d_e: 10, d_a: 0 };
    let mut rng = SeededRng::for_purpose(1, "lln", 0);
    let mut content = Vec::new();
    let mut noise = Vec::new();
    for _ in 0..2000 {
        content.extend(sample_content(&cfg, &mut rng).values.iter().map(|&v| v as f64));
        for e in sample_motion_noise(&cfg, 4, &mut rng) {
            noise.extend(e.values.iter().map(|&v| v as f64));
        }
    }
    for xs in [&content, &noise] {
        let (mean, var) = mean_var(xs);
        // 100k+ draws: standard error of the mean is about 0.003.
        assert!(mean.abs() < 0.015, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "variance {var}");
    }
}

#[test]
fn actions_are_uniform_over_categories() {
    let cfg = LatentConfig { d_a: 6, ..LatentConfig::default() };
    let mut rng = SeededRng::for_purpose(2, "actions", 0);
    let draws = 60_000;
    let mut counts = [0usize; 6];
    for _ in 0..draws {
        let a = sample_action(&cfg, &mut rng).unwrap();
        let hot = a.one_hot();
        assert_eq!(hot.iter().filter(|&&v| v == 1.0).count(), 1);
        assert_eq!(hot[a.class()], 1.0);
        counts[a.class()] += 1;
    }
    let expected = draws as f64 / 6.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 5 degrees of freedom; the 99.9% quantile is 20.5.
    assert!(chi2 < 20.5, "chi-square {chi2} for {counts:?}");
}

#[test]
fn video_lengths_follow_the_histogram() {
    let hist = LengthHistogram::new(BTreeMap::from([(8, 0.2), (16, 0.5), (24, 0.3)])).unwrap();
    let mut rng = SeededRng::for_purpose(3, "lengths", 0);
    let draws = 50_000;
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for _ in 0..draws {
        *counts.entry(sample_video_length(&hist, &mut rng)).or_default() += 1;
    }
    for (k, p) in hist.entries() {
        let freq = counts[&k] as f64 / draws as f64;
        assert!((freq - p).abs() < 0.01, "length {k}: {freq} vs {p}");
    }
    assert_eq!(counts.len(), 3);
}

#[test]
fn streams_are_distinct_and_reproducible() {
    let ids: std::collections::BTreeSet<u64> = (0..1000).map(|i| stream_id("generate", i)).collect();
    assert_eq!(ids.len(), 1000);
    assert_ne!(stream_id("a", 0), stream_id("b", 0));
    let mut a = SeededRng::for_purpose(5, "x", 1);
    let mut b = SeededRng::for_purpose(5, "x", 1);
    let mut c = SeededRng::for_purpose(5, "x", 2);
    let va: Vec<f64> = (0..16).map(|_| a.normal()).collect();
    let vb: Vec<f64> = (0..16).map(|_| b.normal()).collect();
    let vc: Vec<f64> = (0..16).map(|_| c.normal()).collect();
    assert_eq!(va, vb);
    assert_ne!(va, vc);
}

#[test]
fn motion_codes_depend_on_past_noise_only() {
    let cfg = LatentConfig { d_c: 4, d_m: 6, d_e: 3, d_a: 0 };
    let mut rng = SeededRng::for_purpose(6, "causal", 0);
    let mut rnn = MotionRnn::new(&cfg, &mut rng);
    let batch = LatentBatch::sample(&cfg, 2, 8, &mut rng).unwrap();
    let base = rnn.unroll(&batch.noise, None, false).unwrap();
    let mut changed = batch.noise.clone();
    changed[5].data_mut()[0] += 1.0;
    let moved = rnn.unroll(&changed, None, false).unwrap();
    for k in 0..5 {
        assert_eq!(base[k], moved[k], "step {k} saw future noise");
    }
    assert_ne!(base[5], moved[5]);
    assert_ne!(base[7], moved[7]);
}

#[test]
fn action_code_conditions_the_trajectory() {
    let cfg = LatentConfig { d_c: 4, d_m: 6, d_e: 3, d_a: 3 };
    let mut rng = SeededRng::for_purpose(7, "action", 0);
    let mut rnn = MotionRnn::new(&cfg, &mut rng);
    let batch = LatentBatch::sample(&cfg, 1, 6, &mut rng).unwrap();
    let with = |class: usize, rnn: &mut MotionRnn| {
        let a = mocogan::latent::one_hot::<f32>(&[class], 3);
        rnn.unroll(&batch.noise, Some(&a), false).unwrap()
    };
    assert_ne!(with(0, &mut rnn), with(2, &mut rnn));
    assert!(rnn.unroll(&batch.noise, None, false).is_err());
}
