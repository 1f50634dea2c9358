use snnmeta_core::neuron::{
    run_presentation, stochastic_fire, DenseLifLayer, Layer, LifParams, NeuronPopulation, SpikeRaster, StochasticParams,
    ThresholdMode,
};
use snnmeta_core::{SimRng, SnnError};

fn single(lif: &LifParams) -> NeuronPopulation {
    NeuronPopulation::new(1, lif, ThresholdMode::Deterministic)
}

#[test]
fn euler_tracks_analytic_charging_curve() {
    // subthreshold: u(t) = u_rest + R I (1 - e^{-t/tau})
    let lif = LifParams::default();
    let current = 15.0;
    let dt = lif.tau_m / 100.0;
    let mut pop = single(&lif);
    let mut fired = [false];
    let mut worst = 0.0f64;
    let steps = (5.0 * lif.tau_m / dt).round() as usize;
    for n in 1..=steps {
        pop.lif_step(&lif, &[current], dt, &mut fired).unwrap();
        assert!(!fired[0]);
        let t = n as f64 * dt as f64;
        let exact = lif.u_rest as f64 + (lif.r_m * current) as f64 * (1.0 - (-t / lif.tau_m as f64).exp());
        let dev_exact = exact - lif.u_rest as f64;
        let dev_euler = pop.u[0] as f64 - lif.u_rest as f64;
        worst = worst.max(((dev_euler - dev_exact) / dev_exact).abs());
    }
    assert!(worst < 0.01, "max relative error {worst}");
}

#[test]
fn euler_decay_matches_exponential() {
    let lif = LifParams::default();
    let dt = lif.tau_m / 100.0;
    let mut pop = single(&lif);
    pop.u[0] = -55.0;
    let mut fired = [false];
    let steps = (5.0 * lif.tau_m / dt).round() as usize;
    for n in 1..=steps {
        pop.lif_step(&lif, &[0.0], dt, &mut fired).unwrap();
        let t = n as f64 * dt as f64;
        let exact = 15.0 * (-t / lif.tau_m as f64).exp();
        let got = (pop.u[0] - lif.u_rest) as f64;
        // error measured against the initial displacement
        assert!((got - exact).abs() / 15.0 < 0.01, "step {n}: {got} vs {exact}");
    }
}

#[test]
fn hand_integrated_firing_period() {
    // tau = 10, dt = 1, R I = 25: u_{n+1} = u_n + 0.1 (-(u_n + 70) + 25)
    let lif = LifParams::default();
    let mut u = lif.u_rest as f64;
    let mut first = None;
    for n in 1..100 {
        u += 0.1 * (-(u + 70.0) + 25.0);
        if u >= -50.0 {
            first = Some(n);
            break;
        }
    }
    let first = first.unwrap();
    let mut pop = single(&lif);
    let mut fired = [false];
    let mut spikes = Vec::new();
    for n in 1..=60 {
        pop.lif_step(&lif, &[25.0], 1.0, &mut fired).unwrap();
        if fired[0] {
            spikes.push(n);
        }
    }
    assert_eq!(spikes[0], first);
    // after a spike: t_ref steps clamped at reset, then the same climb
    let period = first + lif.t_ref as usize;
    for pair in spikes.windows(2) {
        assert_eq!(pair[1] - pair[0], period);
    }
}

#[test]
fn refractory_neuron_holds_reset() {
    let lif = LifParams::default();
    let mut pop = single(&lif);
    let mut fired = [false];
    pop.lif_step(&lif, &[1000.0], 1.0, &mut fired).unwrap();
    assert!(fired[0]);
    for _ in 0..2 {
        pop.lif_step(&lif, &[1000.0], 1.0, &mut fired).unwrap();
        assert!(!fired[0]);
        assert_eq!(pop.u[0], lif.u_reset);
    }
    pop.lif_step(&lif, &[1000.0], 1.0, &mut fired).unwrap();
    assert!(fired[0]);
}

#[test]
fn non_finite_current_is_reported_with_index() {
    let lif = LifParams::default();
    let mut pop = NeuronPopulation::new(3, &lif, ThresholdMode::Deterministic);
    let mut fired = [false; 3];
    let err = pop.lif_step(&lif, &[0.0, 0.0, f32::NAN], 1.0, &mut fired).unwrap_err();
    assert!(matches!(err, SnnError::NonFiniteInput { index: 2, .. }));
}

#[test]
fn stochastic_rate_matches_escape_intensity() {
    let lif = LifParams::default();
    let sp = StochasticParams::default();
    let n = 100_000;
    for (k, u) in [lif.u_theta - 2.0 * sp.delta_u, lif.u_theta, lif.u_theta + sp.delta_u].into_iter().enumerate() {
        let mut rng = SimRng::seed_from_u64(100 + k as u64);
        let p = sp.fire_probability(u, lif.u_theta, 1.0) as f64;
        let hits = (0..n).filter(|_| stochastic_fire(u, &sp, &lif, 1.0, &mut rng)).count() as f64;
        let rate = hits / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((rate - p).abs() < 3.0 * se, "u={u}: rate {rate} vs {p} (se {se})");
        // intensity recovered from the per-step probability
        let rho = sp.intensity(u, lif.u_theta) as f64;
        assert!(((-(1.0 - p).ln()) - rho).abs() < 1e-5);
    }
}

#[test]
fn intensity_reference_values() {
    let sp = StochasticParams::default();
    assert_eq!(sp.intensity(-50.0, -50.0), 1.0);
    assert!((sp.intensity(-45.0, -50.0) - std::f32::consts::E).abs() < 1e-5);
    assert!((sp.fire_probability(-45.0, -50.0, 1.0) - 0.934_011_9).abs() < 1e-5);
    assert!((sp.intensity(-70.0, -50.0) - 0.018_315_6).abs() < 1e-6);
    // exponent is capped rather than overflowing
    assert!(sp.intensity(1e6, -50.0).is_finite());
}

#[test]
fn raster_bookkeeping() {
    let mut r = SpikeRaster::new(3, 4, 1.0);
    r.set(0, 0, true);
    r.set(0, 3, true);
    r.set(2, 1, true);
    assert_eq!(r.counts(), vec![2, 0, 1]);
    assert_eq!(r.total(), 3);
    assert_eq!(r.activated(), vec![true, false, true]);
    assert_eq!(r.active_at(1).collect::<Vec<_>>(), vec![2]);
}

fn two_layers() -> (DenseLifLayer, DenseLifLayer) {
    let lif = LifParams::default();
    let mut rng = SimRng::seed_from_u64(5);
    let w1 = (0..8 * 6).map(|_| rng.range_f32(0.0, 1.0)).collect();
    let w2 = (0..6 * 4).map(|_| rng.range_f32(0.0, 1.0)).collect();
    (
        DenseLifLayer::new("a", 8, 6, w1, 30.0, lif, ThresholdMode::Deterministic),
        DenseLifLayer::new("b", 6, 4, w2, 40.0, lif, ThresholdMode::Stochastic(StochasticParams::default())),
    )
}

#[test]
fn presentation_equals_staged_stepping_with_one_step_delay() {
    let mut rng = SimRng::seed_from_u64(9);
    let mut input = SpikeRaster::new(8, 40, 1.0);
    for t in 0..40 {
        for i in 0..8 {
            input.set(i, t, rng.bernoulli(0.3));
        }
    }
    let (mut a, mut b) = two_layers();
    let mut run_rng = SimRng::seed_from_u64(77);
    let rasters = run_presentation(&mut [&mut a, &mut b], &input, 40.0, 1.0, &mut run_rng).unwrap();

    let (mut a2, mut b2) = two_layers();
    let mut step_rng = SimRng::seed_from_u64(77);
    a2.reset_state();
    b2.reset_state();
    let mut out_a = vec![false; 6];
    let mut out_b = vec![false; 4];
    let mut prev_a = vec![false; 6];
    for t in 0..40 {
        a2.step(input.step(t), 1.0, &mut step_rng, &mut out_a).unwrap();
        b2.step(&prev_a, 1.0, &mut step_rng, &mut out_b).unwrap();
        assert_eq!(rasters[0].step(t), &out_a[..], "layer a step {t}");
        assert_eq!(rasters[1].step(t), &out_b[..], "layer b step {t}");
        prev_a.copy_from_slice(&out_a);
    }
}

#[test]
fn fan_mismatch_names_both_layers() {
    let lif = LifParams::default();
    let mut a = DenseLifLayer::new("upper", 4, 5, vec![0.5; 20], 1.0, lif, ThresholdMode::Deterministic);
    let mut b = DenseLifLayer::new("lower", 3, 2, vec![0.5; 6], 1.0, lif, ThresholdMode::Deterministic);
    let input = SpikeRaster::new(4, 10, 1.0);
    let err = run_presentation(&mut [&mut a, &mut b], &input, 10.0, 1.0, &mut SimRng::seed_from_u64(0)).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("upper") && msg.contains("lower"), "{msg}");
}
