//! Leaky integrate-and-fire dynamics and the simulation clock.
//!
//! Membrane update (explicit Euler on `tau du/dt = -(u - u_rest) + R I`):
//! `u <- u + dt/tau * (-(u - u_rest) + R I)`.
//!
//! Two firing modes share the integrator: a hard threshold at `u_theta`, and
//! escape noise where a neuron fires with intensity
//! `rho(u) = rho_theta * exp((u - u_theta) / delta_u)`.

use crate::error::{Result, SnnError};
use crate::rng::SimRng;

/// Upper bound on `(u - u_theta) / delta_u` before exponentiation.
pub const ESCAPE_EXPONENT_CAP: f32 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LifParams {
    /// Membrane time constant (ms).
    pub tau_m: f32,
    /// Scale applied to the input current.
    pub r_m: f32,
    pub u_rest: f32,
    pub u_theta: f32,
    pub u_reset: f32,
    /// Refractory period (ms).
    pub t_ref: f32,
}

impl Default for LifParams {
    fn default() -> Self {
        Self {
            tau_m: 10.0,
            r_m: 1.0,
            u_rest: -70.0,
            u_theta: -50.0,
            u_reset: -70.0,
            t_ref: 2.0,
        }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.tau_m, self.r_m, self.u_rest, self.u_theta, self.u_reset, self.t_ref]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(SnnError::InvalidParam("LIF parameters must be finite".into()));
        }
        if self.tau_m <= 0.0 {
            return Err(SnnError::InvalidParam(format!("tau_m must be > 0, got {}", self.tau_m)));
        }
        if self.t_ref < 0.0 {
            return Err(SnnError::InvalidParam(format!("t_ref must be >= 0, got {}", self.t_ref)));
        }
        if self.u_reset > self.u_theta || self.u_rest > self.u_theta {
            return Err(SnnError::InvalidParam(
                "u_reset and u_rest must not exceed u_theta".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StochasticParams {
    /// Intensity at threshold (events/ms).
    pub rho_theta: f32,
    /// Width of the threshold region (mV).
    pub delta_u: f32,
}

impl Default for StochasticParams {
    fn default() -> Self {
        Self {
            rho_theta: 1.0,
            delta_u: 5.0,
        }
    }
}

impl StochasticParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho_theta > 0.0 && self.rho_theta.is_finite()) {
            return Err(SnnError::InvalidParam(format!("rho_theta must be > 0, got {}", self.rho_theta)));
        }
        if !(self.delta_u > 0.0 && self.delta_u.is_finite()) {
            return Err(SnnError::InvalidParam(format!("delta_u must be > 0, got {}", self.delta_u)));
        }
        Ok(())
    }

    /// Escape intensity `rho(u)` in events/ms.
    pub fn intensity(&self, u: f32, u_theta: f32) -> f32 {
        let arg = ((u - u_theta) / self.delta_u).min(ESCAPE_EXPONENT_CAP);
        self.rho_theta * arg.exp()
    }

    /// Probability of at least one event in a step of length `dt`.
    pub fn fire_probability(&self, u: f32, u_theta: f32, dt: f32) -> f32 {
        -(-self.intensity(u, u_theta) * dt).exp_m1()
    }
}

/// Draws whether a neuron at potential `u` fires during one step.
pub fn stochastic_fire(u: f32, sp: &StochasticParams, lif: &LifParams, dt: f32, rng: &mut SimRng) -> bool {
    rng.bernoulli(sp.fire_probability(u, lif.u_theta, dt))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThresholdMode {
    Deterministic,
    Stochastic(StochasticParams),
}

#[derive(Clone, Debug)]
pub struct NeuronPopulation {
    pub u: Vec<f32>,
    pub ref_remaining: Vec<f32>,
    pub mode: ThresholdMode,
}

impl NeuronPopulation {
    pub fn new(size: usize, lif: &LifParams, mode: ThresholdMode) -> Self {
        Self {
            u: vec![lif.u_rest; size],
            ref_remaining: vec![0.0; size],
            mode,
        }
    }

    pub fn size(&self) -> usize {
        self.u.len()
    }

    pub fn reset(&mut self, lif: &LifParams) {
        self.u.fill(lif.u_rest);
        self.ref_remaining.fill(0.0);
    }

    /// One deterministic-threshold Euler step. `fired` is overwritten.
    pub fn lif_step(&mut self, lif: &LifParams, input: &[f32], dt: f32, fired: &mut [bool]) -> Result<()> {
        if matches!(self.mode, ThresholdMode::Stochastic(_)) {
            return Err(SnnError::InvalidParam(
                "lif_step called on a stochastic-threshold population".into(),
            ));
        }
        self.integrate(lif, input, dt, fired, |u, _| u >= lif.u_theta)
    }

    /// One step in whichever mode the population is configured for.
    pub fn step(
        &mut self,
        lif: &LifParams,
        input: &[f32],
        dt: f32,
        rng: &mut SimRng,
        fired: &mut [bool],
    ) -> Result<()> {
        match self.mode {
            ThresholdMode::Deterministic => self.integrate(lif, input, dt, fired, |u, _| u >= lif.u_theta),
            ThresholdMode::Stochastic(sp) => {
                self.integrate(lif, input, dt, fired, |u, _| stochastic_fire(u, &sp, lif, dt, rng))
            }
        }
    }

    fn integrate(
        &mut self,
        lif: &LifParams,
        input: &[f32],
        dt: f32,
        fired: &mut [bool],
        mut crosses: impl FnMut(f32, usize) -> bool,
    ) -> Result<()> {
        if !(dt > 0.0) {
            return Err(SnnError::InvalidParam(format!("dt must be > 0, got {dt}")));
        }
        let n = self.u.len();
        if input.len() != n || fired.len() != n {
            return Err(SnnError::InvalidParam(format!(
                "population of {n} neurons given {} currents and {} spike slots",
                input.len(),
                fired.len()
            )));
        }
        if let Some((index, &value)) = input.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(SnnError::NonFiniteInput { index, value });
        }
        let k = dt / lif.tau_m;
        let done = 0.5 * dt;
        for i in 0..n {
            if self.ref_remaining[i] >= done {
                self.u[i] = lif.u_reset;
                self.ref_remaining[i] = (self.ref_remaining[i] - dt).max(0.0);
                fired[i] = false;
                continue;
            }
            self.ref_remaining[i] = 0.0;
            let u = self.u[i] + k * (-(self.u[i] - lif.u_rest) + lif.r_m * input[i]);
            if crosses(u, i) {
                self.u[i] = lif.u_reset;
                self.ref_remaining[i] = lif.t_ref;
                fired[i] = true;
            } else {
                self.u[i] = u;
                fired[i] = false;
            }
        }
        Ok(())
    }
}

/// Binary spike occurrences, stored step-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpikeRaster {
    n_neurons: usize,
    n_steps: usize,
    dt_bits: u32,
    spikes: Vec<bool>,
}

impl SpikeRaster {
    pub fn new(n_neurons: usize, n_steps: usize, dt: f32) -> Self {
        Self {
            n_neurons,
            n_steps,
            dt_bits: dt.to_bits(),
            spikes: vec![false; n_neurons * n_steps],
        }
    }

    pub fn n_neurons(&self) -> usize {
        self.n_neurons
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f32 {
        f32::from_bits(self.dt_bits)
    }

    pub fn get(&self, neuron: usize, step: usize) -> bool {
        self.spikes[step * self.n_neurons + neuron]
    }

    pub fn set(&mut self, neuron: usize, step: usize, value: bool) {
        self.spikes[step * self.n_neurons + neuron] = value;
    }

    pub fn step(&self, step: usize) -> &[bool] {
        &self.spikes[step * self.n_neurons..(step + 1) * self.n_neurons]
    }

    pub fn step_mut(&mut self, step: usize) -> &mut [bool] {
        &mut self.spikes[step * self.n_neurons..(step + 1) * self.n_neurons]
    }

    /// Indices of neurons spiking at `step`.
    pub fn active_at(&self, step: usize) -> impl Iterator<Item = usize> + '_ {
        self.step(step).iter().enumerate().filter(|(_, &s)| s).map(|(i, _)| i)
    }

    pub fn counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.n_neurons];
        for step in self.spikes.chunks_exact(self.n_neurons.max(1)) {
            for (c, &s) in counts.iter_mut().zip(step) {
                *c += s as u32;
            }
        }
        counts
    }

    pub fn total(&self) -> usize {
        self.spikes.iter().filter(|&&s| s).count()
    }

    /// Per-neuron flag: spiked at least once.
    pub fn activated(&self) -> Vec<bool> {
        self.counts().into_iter().map(|c| c > 0).collect()
    }
}

/// Number of whole steps in `duration`; errors if `duration` is not a multiple of `dt`.
pub fn steps_for(duration: f32, dt: f32) -> Result<usize> {
    if !(dt > 0.0) || !(duration >= 0.0) {
        return Err(SnnError::InvalidParam(format!("bad duration {duration} / dt {dt}")));
    }
    let n = (duration / dt).round();
    if ((n * dt) - duration).abs() > 1e-4 * dt.max(1.0) {
        return Err(SnnError::InvalidParam(format!(
            "duration {duration} ms is not a multiple of dt {dt} ms"
        )));
    }
    Ok(n as usize)
}

/// A stage that consumes one spike vector per step and emits one.
pub trait Layer {
    fn name(&self) -> &str;
    fn fan_in(&self) -> usize;
    fn fan_out(&self) -> usize;
    /// Clears transient state (potentials, refractory timers, inhibition) before a presentation.
    fn reset_state(&mut self);
    fn step(&mut self, input: &[bool], dt: f32, rng: &mut SimRng, out: &mut [bool]) -> Result<()>;
}

/// Steps a feed-forward stack synchronously.
///
/// The input raster drives the first layer at the same step; every later layer
/// sees its predecessor's output from the previous step.
pub fn run_presentation(
    layers: &mut [&mut dyn Layer],
    input: &SpikeRaster,
    duration: f32,
    dt: f32,
    rng: &mut SimRng,
) -> Result<Vec<SpikeRaster>> {
    let n_steps = steps_for(duration, dt)?;
    let Some(first) = layers.first() else {
        return Ok(Vec::new());
    };
    if input.n_neurons() != first.fan_in() {
        return Err(SnnError::FanMismatch {
            upstream: "input".into(),
            downstream: first.name().into(),
            fan_out: input.n_neurons(),
            fan_in: first.fan_in(),
        });
    }
    if input.n_steps() < n_steps {
        return Err(SnnError::InvalidParam(format!(
            "input raster has {} steps, presentation needs {n_steps}",
            input.n_steps()
        )));
    }
    for pair in layers.windows(2) {
        if pair[0].fan_out() != pair[1].fan_in() {
            return Err(SnnError::FanMismatch {
                upstream: pair[0].name().into(),
                downstream: pair[1].name().into(),
                fan_out: pair[0].fan_out(),
                fan_in: pair[1].fan_in(),
            });
        }
    }

    let mut rasters: Vec<SpikeRaster> = layers
        .iter()
        .map(|l| SpikeRaster::new(l.fan_out(), n_steps, dt))
        .collect();
    let mut prev: Vec<Vec<bool>> = layers.iter().map(|l| vec![false; l.fan_out()]).collect();
    let mut cur = prev.clone();
    for layer in layers.iter_mut() {
        layer.reset_state();
    }
    for t in 0..n_steps {
        for (k, layer) in layers.iter_mut().enumerate() {
            let drive: &[bool] = if k == 0 { input.step(t) } else { &prev[k - 1] };
            layer.step(drive, dt, rng, &mut cur[k])?;
            rasters[k].step_mut(t).copy_from_slice(&cur[k]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(rasters)
}

/// Fully connected LIF layer with fixed weights; `weights[pre * n_post + post]`.
#[derive(Clone, Debug)]
pub struct DenseLifLayer {
    pub name: String,
    pub n_pre: usize,
    pub n_post: usize,
    pub weights: Vec<f32>,
    /// Current injected per unit weight of a presynaptic spike.
    pub gain: f32,
    pub lif: LifParams,
    pub pop: NeuronPopulation,
    current: Vec<f32>,
}

impl DenseLifLayer {
    pub fn new(name: &str, n_pre: usize, n_post: usize, weights: Vec<f32>, gain: f32, lif: LifParams, mode: ThresholdMode) -> Self {
        assert_eq!(weights.len(), n_pre * n_post);
        Self {
            name: name.to_owned(),
            n_pre,
            n_post,
            weights,
            gain,
            lif,
            pop: NeuronPopulation::new(n_post, &lif, mode),
            current: vec![0.0; n_post],
        }
    }
}

impl Layer for DenseLifLayer {
    fn name(&self) -> &str {
        &self.name
    }

    fn fan_in(&self) -> usize {
        self.n_pre
    }

    fn fan_out(&self) -> usize {
        self.n_post
    }

    fn reset_state(&mut self) {
        self.pop.reset(&self.lif);
    }

    fn step(&mut self, input: &[bool], dt: f32, rng: &mut SimRng, out: &mut [bool]) -> Result<()> {
        self.current.fill(0.0);
        for (j, _) in input.iter().enumerate().filter(|(_, &s)| s) {
            let row = &self.weights[j * self.n_post..(j + 1) * self.n_post];
            for (c, w) in self.current.iter_mut().zip(row) {
                *c += self.gain * w;
            }
        }
        self.pop.step(&self.lif, &self.current, dt, rng, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_constant(pop: &mut NeuronPopulation, lif: &LifParams, drive: f32, steps: usize, dt: f32) -> Vec<usize> {
        let mut fired = vec![false; pop.size()];
        let input = vec![drive; pop.size()];
        let mut spikes = Vec::new();
        for t in 0..steps {
            pop.lif_step(lif, &input, dt, &mut fired).unwrap();
            if fired[0] {
                spikes.push(t);
            }
        }
        spikes
    }

    #[test]
    fn rest_is_a_fixed_point() {
        let lif = LifParams::default();
        let mut pop = NeuronPopulation::new(3, &lif, ThresholdMode::Deterministic);
        let spikes = run_constant(&mut pop, &lif, 0.0, 500, 0.7);
        assert!(spikes.is_empty());
        assert!(pop.u.iter().all(|&u| u == lif.u_rest));
    }

    #[test]
    fn decay_matches_exponential() {
        let lif = LifParams::default();
        let mut pop = NeuronPopulation::new(1, &lif, ThresholdMode::Deterministic);
        pop.u[0] = -60.0;
        run_constant(&mut pop, &lif, 0.0, 1000, 0.01);
        let exact = -70.0 + 10.0 * (-1.0f32).exp();
        assert!(((pop.u[0] - exact) / exact).abs() < 0.005, "{} vs {exact}", pop.u[0]);
        assert!((pop.u[0] - (-66.321)).abs() < 0.01);
    }

    #[test]
    fn suprathreshold_drive_fires_subthreshold_does_not() {
        let lif = LifParams::default();
        let mut pop = NeuronPopulation::new(1, &lif, ThresholdMode::Deterministic);
        assert!(!run_constant(&mut pop, &lif, 25.0, 2000, 0.1).is_empty());
        let mut pop = NeuronPopulation::new(1, &lif, ThresholdMode::Deterministic);
        assert!(run_constant(&mut pop, &lif, 15.0, 2000, 0.1).is_empty());
        assert!((pop.u[0] - (-55.0)).abs() < 0.01);
    }

    #[test]
    fn non_finite_current_names_neuron() {
        let lif = LifParams::default();
        let mut pop = NeuronPopulation::new(4, &lif, ThresholdMode::Deterministic);
        let mut fired = vec![false; 4];
        let err = pop
            .lif_step(&lif, &[0.0, 1.0, f32::NAN, 0.0], 1.0, &mut fired)
            .unwrap_err();
        assert!(matches!(err, SnnError::NonFiniteInput { index: 2, .. }), "{err}");
    }

    #[test]
    fn lif_step_rejects_stochastic_population() {
        let lif = LifParams::default();
        let mut pop = NeuronPopulation::new(1, &lif, ThresholdMode::Stochastic(StochasticParams::default()));
        assert!(pop.lif_step(&lif, &[0.0], 1.0, &mut [false]).is_err());
    }

    #[test]
    fn refractory_window_is_silent() {
        let lif = LifParams { t_ref: 5.0, ..LifParams::default() };
        let mut pop = NeuronPopulation::new(1, &lif, ThresholdMode::Deterministic);
        let spikes = run_constant(&mut pop, &lif, 1000.0, 60, 1.0);
        assert!(spikes.len() > 2);
        for w in spikes.windows(2) {
            assert!(w[1] - w[0] > 5, "{spikes:?}");
        }
    }

    #[test]
    fn escape_intensity_values() {
        let sp = StochasticParams::default();
        assert_eq!(sp.intensity(-50.0, -50.0), 1.0);
        let rho = sp.intensity(-45.0, -50.0);
        assert!((rho - std::f32::consts::E).abs() < 1e-5);
        let p = sp.fire_probability(-45.0, -50.0, 1.0);
        assert!((p - 0.9340).abs() < 1e-4, "{p}");
        let rest = sp.intensity(-70.0, -50.0);
        assert!((rest - 0.018_316).abs() < 1e-6, "{rest}");
        // capped exponent keeps the intensity finite
        assert!(sp.intensity(1e6, -50.0).is_finite());
    }

    #[test]
    fn steps_for_requires_multiple() {
        assert_eq!(steps_for(50.0, 1.0).unwrap(), 50);
        assert_eq!(steps_for(50.0, 0.5).unwrap(), 100);
        assert!(steps_for(50.0, 0.3).is_err());
    }

    #[test]
    fn presentation_shapes_and_silence() {
        let lif = LifParams::default();
        let mut a = DenseLifLayer::new("a", 4, 3, vec![0.5; 12], 10.0, lif, ThresholdMode::Deterministic);
        let mut b = DenseLifLayer::new("b", 3, 2, vec![0.5; 6], 10.0, lif, ThresholdMode::Deterministic);
        let input = SpikeRaster::new(4, 50, 1.0);
        let mut rng = SimRng::seed_from_u64(0);
        let out = run_presentation(&mut [&mut a, &mut b], &input, 50.0, 1.0, &mut rng).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|r| r.n_steps() == 50 && r.total() == 0));
    }

    #[test]
    fn presentation_reports_fan_mismatch() {
        let lif = LifParams::default();
        let mut a = DenseLifLayer::new("conv", 4, 3, vec![0.5; 12], 1.0, lif, ThresholdMode::Deterministic);
        let mut b = DenseLifLayer::new("memory", 5, 2, vec![0.5; 10], 1.0, lif, ThresholdMode::Deterministic);
        let input = SpikeRaster::new(4, 10, 1.0);
        let mut rng = SimRng::seed_from_u64(0);
        let err = run_presentation(&mut [&mut a, &mut b], &input, 10.0, 1.0, &mut rng).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("conv") && msg.contains("memory"), "{msg}");
    }
}
