use snnmeta_core::layers::{
    balance_traces, pearson_correlation, poisson_encode, predict_from_counts, ConvLayer, ConvLayerConfig,
    DecisionLayer, DecisionLayerConfig, MemoryLayer, MemoryLayerConfig, MemoryRepresentation,
};
use snnmeta_core::neuron::SpikeRaster;
use snnmeta_core::pixels::PixelGrid;
use snnmeta_core::plasticity::{RewardState, SynapseMatrix};
use snnmeta_core::synth::bar_image;
use snnmeta_core::{SimRng, SnnError};

#[test]
fn poisson_counts_match_rate() {
    let img = PixelGrid::new(2, 1, vec![1.0, 0.4]);
    let mut rng = SimRng::seed_from_u64(8);
    let (rate, steps) = (0.25f32, 20_000usize);
    let r = poisson_encode(&img, rate, steps as f32, 1.0, &mut rng).unwrap();
    for (i, v) in [1.0f64, 0.4].into_iter().enumerate() {
        let p = 1.0 - (-(v * rate as f64)).exp();
        let expected = p * steps as f64;
        let sd = (steps as f64 * p * (1.0 - p)).sqrt();
        let got = r.counts()[i] as f64;
        assert!((got - expected).abs() < 4.0 * sd, "pixel {i}: {got} vs {expected}");
    }
}

#[test]
fn conv_output_shape() {
    for (side, k, s) in [(28, 8, 2), (16, 4, 2), (20, 5, 3), (12, 3, 1)] {
        let cfg = ConvLayerConfig {
            input_side: side,
            kernel: k,
            stride: s,
            n_filters: 4,
            ..ConvLayerConfig::default()
        };
        if cfg.validate().is_err() {
            continue;
        }
        let mut rng = SimRng::seed_from_u64(1);
        let mut conv = ConvLayer::random(cfg, 0.2, 0.8, &mut rng).unwrap();
        let m = (side - k) / s + 1;
        assert_eq!(cfg.n_features(), m * m * 4);
        let input = SpikeRaster::new(side * side, 10, 1.0);
        let out = conv.forward(&input, false).unwrap();
        assert_eq!(out.n_neurons(), m * m * 4);
        assert_eq!(out.n_steps(), 10);
    }
    assert_eq!(ConvLayerConfig::default().n_features(), 3630);
}

#[test]
fn conv_rejects_wrong_input_size() {
    let mut rng = SimRng::seed_from_u64(1);
    let mut conv = ConvLayer::random(ConvLayerConfig::default(), 0.2, 0.8, &mut rng).unwrap();
    let err = conv.forward(&SpikeRaster::new(100, 5, 1.0), false).unwrap_err();
    assert!(matches!(err, SnnError::FanMismatch { .. }));
}

#[test]
fn winner_take_all_touches_one_position_per_filter() {
    let cfg = ConvLayerConfig {
        n_filters: 6,
        max_winners: 6,
        ..ConvLayerConfig::default()
    };
    let mut rng = SimRng::seed_from_u64(4);
    let mut conv = ConvLayer::random(cfg, 0.2, 0.8, &mut rng).unwrap();
    let img = bar_image(28, true, 10, 4, 14, 2);
    for _ in 0..5 {
        let input = poisson_encode(&img, 0.25, 50.0, 1.0, &mut rng).unwrap();
        let before = conv.weights.w.clone();
        let (_, winners) = conv.forward_with_winners(&input, true).unwrap();
        let mut filters: Vec<usize> = winners.iter().map(|w| w.filter).collect();
        filters.sort_unstable();
        filters.dedup();
        assert_eq!(filters.len(), winners.len(), "a filter won twice");
        for f in 0..cfg.n_filters {
            let changed = (0..cfg.kernel * cfg.kernel).any(|p| conv.weights.w[p * cfg.n_filters + f] != before[p * cfg.n_filters + f]);
            assert_eq!(changed, filters.contains(&f), "filter {f}");
        }
    }
}

#[test]
fn inference_leaves_conv_weights_alone() {
    let mut rng = SimRng::seed_from_u64(6);
    let mut conv = ConvLayer::random(ConvLayerConfig::default(), 0.2, 0.8, &mut rng).unwrap();
    let before = conv.weights.w.clone();
    let input = poisson_encode(&bar_image(28, false, 4, 12, 14, 4), 0.25, 50.0, 1.0, &mut rng).unwrap();
    let out = conv.forward(&input, false).unwrap();
    assert!(out.total() > 0);
    assert_eq!(conv.weights.w, before);
}

fn feature_raster(rng: &mut SimRng, n: usize, steps: usize, p: f32) -> SpikeRaster {
    let mut r = SpikeRaster::new(n, steps, 1.0);
    for t in 0..steps {
        for i in 0..n {
            r.set(i, t, rng.bernoulli(p));
        }
    }
    r
}

#[test]
fn recall_never_changes_memory_weights() {
    let mut rng = SimRng::seed_from_u64(12);
    let mut mem = MemoryLayer::random(MemoryLayerConfig::default(), 200, 0.2, 0.8, &mut rng).unwrap();
    let before = mem.weights.w.clone();
    for _ in 0..5 {
        let f = feature_raster(&mut rng, 200, 50, 0.05);
        mem.recall(&f, &mut rng).unwrap();
    }
    assert_eq!(mem.weights.w, before);
}

#[test]
fn teaching_current_drives_its_block() {
    let mut rng = SimRng::seed_from_u64(13);
    let cfg = MemoryLayerConfig::default();
    let mut mem = MemoryLayer::random(cfg, 200, 0.2, 0.8, &mut rng).unwrap();
    let f = feature_raster(&mut rng, 200, 50, 0.05);
    let r = mem.present(&f, Some(3), &mut rng).unwrap();
    let counts = r.counts();
    let block = mem.label_block(3);
    let inside: u32 = block.iter().map(|&i| counts[i]).sum();
    let outside: u32 = counts.iter().sum::<u32>() - inside;
    assert!(inside > 10 * outside.max(1), "inside {inside}, outside {outside}");
}

#[test]
fn memory_fan_mismatch_is_reported() {
    let mut rng = SimRng::seed_from_u64(1);
    let mut mem = MemoryLayer::random(MemoryLayerConfig::default(), 50, 0.2, 0.8, &mut rng).unwrap();
    let err = mem.recall(&SpikeRaster::new(49, 10, 1.0), &mut rng).unwrap_err();
    assert!(matches!(err, SnnError::FanMismatch { fan_out: 49, fan_in: 50, .. }));
}

#[test]
fn adaptation_reports_reward_level_of_activity() {
    let mut rng = SimRng::seed_from_u64(21);
    let cfg = MemoryLayerConfig::default();
    let mut mem = MemoryLayer::random(cfg, 100, 0.2, 0.8, &mut rng).unwrap();
    let f = feature_raster(&mut rng, 100, 50, 0.05);
    let mut rs = RewardState::default();
    let out = mem.adapt(&f, Some(0), &mut rs, &mut rng).unwrap();
    let expected = snnmeta_core::plasticity::sparsity_reward(out.representation.n_s, &cfg.policy);
    assert_eq!(out.reward_level, expected);
    assert_eq!(out.impulse, expected as f32 * cfg.da_gain);
}

#[test]
fn balanced_traces_are_zero_mean_with_fixed_norm() {
    let mut rng = SimRng::seed_from_u64(3);
    let (n_pre, n_post) = (30, 4);
    let mut t: Vec<f32> = (0..n_pre * n_post).map(|_| rng.range_f32(-1.0, 2.0)).collect();
    for j in 0..n_pre {
        t[j * n_post + 3] = 0.0;
    }
    balance_traces(&mut t, n_pre, n_post, 2.5);
    for i in 0..3 {
        let col: Vec<f32> = (0..n_pre).map(|j| t[j * n_post + i]).collect();
        assert!(col.iter().sum::<f32>().abs() < 1e-4);
        assert!((col.iter().map(|c| c.abs()).sum::<f32>() - 2.5).abs() < 1e-4);
    }
    assert!((0..n_pre).all(|j| t[j * n_post + 3] == 0.0));
}

#[test]
fn correlation_is_undefined_for_silent_representations() {
    let a = MemoryRepresentation::from_bits(vec![false; 10]);
    let b = MemoryRepresentation::from_bits((0..10).map(|i| i % 2 == 0).collect());
    assert!(matches!(pearson_correlation(&a, &b), Err(SnnError::UndefinedCorrelation(_))));
    assert!((pearson_correlation(&b, &b).unwrap() - 1.0).abs() < 1e-12);
}

fn decision_input(rng: &mut SimRng) -> SpikeRaster {
    // neurons 0..10 fire densely, the rest sparsely
    let mut r = SpikeRaster::new(30, 50, 1.0);
    for t in 0..50 {
        for i in 0..30 {
            let p = if i < 10 { 0.5 } else { 0.1 };
            r.set(i, t, rng.bernoulli(p));
        }
    }
    r
}

#[test]
fn inhibition_widens_the_winning_margin() {
    let mut rng = SimRng::seed_from_u64(31);
    let mut w = vec![0.3f32; 30 * 20];
    // group 1 (neurons 5..10) prefers inputs 0..10
    for j in 0..10 {
        for i in 5..10 {
            w[j * 20 + i] = 0.9;
        }
    }
    let base = DecisionLayerConfig {
        n_groups: 4,
        group_size: 5,
        input_gain: 20.0,
        ..DecisionLayerConfig::default()
    };
    for _ in 0..10 {
        let input = decision_input(&mut rng);
        let margin = |strength: f32| {
            let cfg = DecisionLayerConfig {
                inhibition_strength: strength,
                ..base
            };
            let mut layer = DecisionLayer::new(cfg, SynapseMatrix::new(30, 20, w.clone())).unwrap();
            let out = layer.forward(&input).unwrap();
            let mut c = out.group_counts.clone();
            c.sort_unstable_by(|a, b| b.cmp(a));
            (out.prediction, c[0] as i64 - c[1] as i64)
        };
        let (p0, m0) = margin(0.0);
        let (p1, m1) = margin(1.5);
        assert_eq!(p0, 1);
        assert_eq!(p1, 1);
        assert!(m1 >= m0, "margin with inhibition {m1} < without {m0}");
    }
}

#[test]
fn argmax_ties_go_low() {
    assert_eq!(predict_from_counts(&[2, 5, 5, 1]), 1);
    assert_eq!(predict_from_counts(&[0, 0]), 0);
}

#[test]
fn decision_rewards_and_punishes_with_opposite_signs() {
    let cfg = DecisionLayerConfig {
        n_groups: 2,
        group_size: 3,
        input_gain: 30.0,
        ..DecisionLayerConfig::default()
    };
    let mut rng = SimRng::seed_from_u64(2);
    let input = decision_input(&mut rng);
    let w = vec![0.5f32; 30 * 6];
    let run = |label: usize| {
        let mut layer = DecisionLayer::new(cfg, SynapseMatrix::new(30, 6, w.clone())).unwrap();
        let out = layer.forward(&input).unwrap();
        let mut rs = RewardState::default();
        let impulse = layer.adapt(&input, &out, label, &mut rs).unwrap();
        (impulse, layer.weights.w.iter().sum::<f32>())
    };
    let (up_imp, up_sum) = run(0);
    let (down_imp, down_sum) = run(1);
    assert!(up_imp > 0.0 && down_imp < 0.0);
    let base: f32 = w.iter().sum();
    assert!((up_sum - base) * (down_sum - base) < 0.0);
}
